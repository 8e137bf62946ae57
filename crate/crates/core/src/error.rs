use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Every failure the toolkit can report. The variants map onto the
/// categories used for process exit codes in the command-line front end.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("waveform too short for the requested resolution: {0}")]
    Resolution(String),
    #[error("notch geometry: {0}")]
    Geometry(String),
    #[error("normalization undefined: {0}")]
    Normalization(String),
    #[error("impairment model: {0}")]
    Model(String),
    #[error("invalid stitch plan: {0}")]
    Plan(String),
    #[error("stitch coverage gap over {} bin(s), first at {first_missing_hz} Hz", missing.len())]
    Coverage { first_missing_hz: f64, missing: Vec<f64> },
    #[error("no partner trace un-notched at {freq_hz} Hz")]
    Pairing { freq_hz: f64 },
    #[error("frequency grids do not match: {0}")]
    Grid(String),
    #[error("region contains no grid bins: {0}")]
    Region(String),
    #[error("degenerate fit: {0}")]
    Fit(String),
    #[error("cost curve is not unimodal ({} strict local minima)", minima.len())]
    NotUnimodal { minima: Vec<usize>, curve: Vec<(f64, f64)> },
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
