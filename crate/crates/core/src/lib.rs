//! Notch-perturbation characterization of coherent transceiver noise.
//!
//! A known spectral hole (a *notch*) is carved into the transmit instruction;
//! whatever power later shows up inside the hole is noise and distortion added
//! by the chain. Sweeping the notch across the band and stitching the exposed
//! segments yields a frequency-resolved noise floor and SNDR. Comparing single
//! and dual notches exposes IQ crosstalk, and minimizing the single-notch null
//! over trial phase compensations estimates IQ skew.
//!
//! This crate is `no_std` (it needs `alloc`). It contains the waveform
//! generator, the impairment simulator and every estimator. File formats and
//! the command line live in the `notchprobe` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod chain;
pub mod error;
pub mod estimation;
pub mod fft;
pub mod grid;
pub mod perturbation;
pub mod psd;
pub mod rng;
pub mod stitching;
pub mod waveform;

pub use chain::{
    apply_iq_crosstalk, apply_iq_imbalance, apply_skew, quantize_dac, simulate_capture,
    CaptureSetup, CrosstalkPoint, CrosstalkProfile, ImpairmentConfig, InterfaceStage,
    MeasurementTrace, NoiseShape, SampledCrosstalk, SpectralLine,
};
pub use error::{Error, Result};
pub use estimation::{
    apsd, build_phase_filter, estimate_skew, eye_closure_fit, skew_cost, sn_dn_discrepancy,
    Discrepancy, EyeClosureFit, MonitorBand, PhaseFilter, SkewEstimate, SkewScenario, SkewSweep,
};
pub use grid::{Band, FrequencyGrid};
pub use perturbation::{
    apply_perturbation, build_filter, normalization_factor, BandOfInterest, NotchKind,
    NotchSpec, Perturbed, PerturbationFilter, SnappedNotch,
};
pub use psd::{estimate_psd, PowerSpectrum, WelchPlan, Window};
pub use stitching::{
    compute_sndr, recover_signal_psd, run_plan, small_notch_check, stitch_nfl, RecoveredSignal,
    SmallNotchReport, SndrProfile, StitchOptions, StitchPlan, StitchedNfl,
};
pub use waveform::{generate_rrc_qpsk, peak_to_rms, ComplexWaveform, Polarization, QpskParams};

/// Complex sample type used throughout.
pub type Complex = num_complex::Complex<f64>;

/// `10·log10(x)`.
#[inline]
pub fn db(x: f64) -> f64 {
    10.0 * libm::log10(x)
}

/// Inverse of [`db`].
#[inline]
pub fn from_db(x: f64) -> f64 {
    libm::pow(10.0, x / 10.0)
}
