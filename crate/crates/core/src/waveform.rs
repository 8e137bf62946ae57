//! Complex baseband waveforms and the RRC-shaped QPSK generator.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::Rng;

use crate::error::{Error, Result};
use crate::fft::Fft;
use crate::grid::FrequencyGrid;
use crate::rng;
use crate::Complex;

/// Which polarization(s) an operation reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Polarization {
    #[default]
    X,
    Y,
    /// Per-polarization average of X and Y.
    Both,
}

/// Dual-polarization complex baseband samples. The real part of each sample
/// is the I component and the imaginary part the Q component.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexWaveform {
    sample_rate: f64,
    pol_x: Vec<Complex>,
    pol_y: Option<Vec<Complex>>,
    symbol_rate: Option<f64>,
    pub label: String,
}

impl ComplexWaveform {
    pub fn new(sample_rate: f64, pol_x: Vec<Complex>, pol_y: Option<Vec<Complex>>) -> Result<Self> {
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(Error::param("sample rate must be positive"));
        }
        if pol_x.is_empty() {
            return Err(Error::param("waveform is empty"));
        }
        if let Some(y) = &pol_y {
            if y.len() != pol_x.len() {
                return Err(Error::param("polarizations differ in length"));
            }
        }
        let finite = |s: &[Complex]| s.iter().all(|v| v.re.is_finite() && v.im.is_finite());
        if !finite(&pol_x) || !pol_y.as_deref().map_or(true, finite) {
            return Err(Error::param("waveform contains non-finite samples"));
        }
        Ok(ComplexWaveform {
            sample_rate,
            pol_x,
            pol_y,
            symbol_rate: None,
            label: String::new(),
        })
    }

    pub fn with_symbol_rate(mut self, baud: f64) -> Self {
        self.symbol_rate = Some(baud);
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn symbol_rate(&self) -> Option<f64> {
        self.symbol_rate
    }

    pub fn len(&self) -> usize {
        self.pol_x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pol_x.is_empty()
    }

    pub fn pol_x(&self) -> &[Complex] {
        &self.pol_x
    }

    pub fn pol_y(&self) -> Option<&[Complex]> {
        self.pol_y.as_deref()
    }

    pub fn is_dual_pol(&self) -> bool {
        self.pol_y.is_some()
    }

    /// Iterator over the present polarizations.
    pub fn pols(&self) -> impl Iterator<Item = &[Complex]> {
        core::iter::once(self.pol_x.as_slice()).chain(self.pol_y.as_deref())
    }

    /// Applies `f` to every present polarization, keeping metadata.
    pub fn map_pols<F>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(&[Complex]) -> Vec<Complex>,
    {
        let pol_x = f(&self.pol_x);
        let pol_y = self.pol_y.as_deref().map(&mut f);
        let mut out = ComplexWaveform::new(self.sample_rate, pol_x, pol_y)?;
        out.symbol_rate = self.symbol_rate;
        out.label = self.label.clone();
        Ok(out)
    }

    /// Mean power `mean |x|²` of one polarization selection.
    pub fn mean_power(&self, pol: Polarization) -> f64 {
        let p = |s: &[Complex]| s.iter().map(|v| v.norm_sqr()).sum::<f64>() / s.len() as f64;
        match (pol, &self.pol_y) {
            (Polarization::X, _) | (Polarization::Both, None) => p(&self.pol_x),
            (Polarization::Y, Some(y)) => p(y),
            (Polarization::Y, None) => 0.0,
            (Polarization::Both, Some(y)) => 0.5 * (p(&self.pol_x) + p(y)),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for s in out.pol_x.iter_mut().chain(out.pol_y.iter_mut().flatten()) {
            *s *= factor;
        }
        out
    }

    /// Two-sided grid of the full-length transform of this waveform.
    pub fn transform_grid(&self) -> FrequencyGrid {
        FrequencyGrid::centered(self.len(), self.sample_rate)
    }

    pub(crate) fn selected(&self, pol: Polarization) -> Result<Vec<&[Complex]>> {
        Ok(match (pol, &self.pol_y) {
            (Polarization::X, _) => vec![&self.pol_x[..]],
            (Polarization::Y, Some(y)) => vec![&y[..]],
            (Polarization::Y, None) => {
                return Err(Error::param("Y polarization requested on a single-pol waveform"))
            }
            (Polarization::Both, Some(y)) => vec![&self.pol_x[..], &y[..]],
            (Polarization::Both, None) => vec![&self.pol_x[..]],
        })
    }
}

/// Frequency of FFT index `k` for an `n`-point transform with bin width `df`.
#[inline]
pub(crate) fn fft_freq(k: usize, n: usize, df: f64) -> f64 {
    if k < (n + 1) / 2 {
        k as f64 * df
    } else {
        (k as f64 - n as f64) * df
    }
}

/// Index of the FFT bin holding `-f` when `k` holds `f`.
#[inline]
pub(crate) fn mirror_index(k: usize, n: usize) -> usize {
    (n - k) % n
}

/// Position of FFT index `k` on the centered grid.
#[inline]
pub(crate) fn centered_index(k: usize, n: usize) -> usize {
    (k + n / 2) % n
}

/// Multiplies the spectrum of `x` bin-wise by `gain(k, f)` (`k` is the FFT
/// index, `f` its frequency) with circular semantics.
pub(crate) fn filter_spectrum<G>(plan: &Fft, x: &[Complex], df: f64, mut gain: G) -> Vec<Complex>
where
    G: FnMut(usize, f64) -> Complex,
{
    let n = x.len();
    let mut buf = x.to_vec();
    plan.forward(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        *v *= gain(k, fft_freq(k, n, df));
    }
    plan.inverse(&mut buf);
    buf
}

/// Parameters of [`generate_rrc_qpsk`].
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QpskParams {
    /// Symbol rate in Bd.
    pub baud: f64,
    pub rolloff: f64,
    pub n_symbols: usize,
    /// Integer samples per symbol; must reach `2·(1 + rolloff)`.
    pub samples_per_symbol: usize,
    pub dual_pol: bool,
    pub seed: u64,
}

impl Default for QpskParams {
    fn default() -> Self {
        QpskParams {
            baud: 95e9,
            rolloff: 0.05,
            n_symbols: 1 << 15,
            samples_per_symbol: 4,
            dual_pol: false,
            seed: 1,
        }
    }
}

/// RRC taps are truncated at this many symbols on each side.
pub const RRC_SPAN_SYMBOLS: usize = 32;

/// Root-raised-cosine impulse response at `t` symbol periods (unit symbol
/// period), unnormalized.
pub fn rrc_impulse(t: f64, beta: f64) -> f64 {
    if libm::fabs(t) < 1e-12 {
        return 1.0 - beta + 4.0 * beta / PI;
    }
    if beta > 0.0 && libm::fabs(libm::fabs(t) - 1.0 / (4.0 * beta)) < 1e-9 {
        let a = PI / (4.0 * beta);
        return beta / core::f64::consts::SQRT_2
            * ((1.0 + 2.0 / PI) * libm::sin(a) + (1.0 - 2.0 / PI) * libm::cos(a));
    }
    let num = libm::sin(PI * t * (1.0 - beta)) + 4.0 * beta * t * libm::cos(PI * t * (1.0 + beta));
    let den = PI * t * (1.0 - (4.0 * beta * t) * (4.0 * beta * t));
    num / den
}

/// Circularly shaped QPSK: symbols from a seeded ChaCha stream, upsampled and
/// filtered with a truncated RRC, then scaled to unit mean power per
/// polarization. The waveform is periodic in its length, matching the
/// circular filtering used everywhere else.
pub fn generate_rrc_qpsk(p: &QpskParams) -> Result<ComplexWaveform> {
    if !(0.0..=1.0).contains(&p.rolloff) {
        return Err(Error::param(alloc::format!("rolloff {} outside [0, 1]", p.rolloff)));
    }
    if !(p.baud > 0.0) || !p.baud.is_finite() {
        return Err(Error::param("symbol rate must be positive"));
    }
    if (p.samples_per_symbol as f64) < 2.0 * (1.0 + p.rolloff) {
        return Err(Error::param(alloc::format!(
            "{} samples per symbol is below Nyquist for rolloff {}",
            p.samples_per_symbol,
            p.rolloff
        )));
    }
    if p.n_symbols < 1024 {
        return Err(Error::param("at least 1024 symbols are required"));
    }
    let sps = p.samples_per_symbol;
    let n = p.n_symbols * sps;
    let plan = Fft::new(n);

    // Transfer function of the truncated, energy-normalized RRC, circularly
    // centered at sample 0.
    let half = RRC_SPAN_SYMBOLS * sps;
    let taps: Vec<f64> = (0..=2 * half)
        .map(|i| rrc_impulse((i as f64 - half as f64) / sps as f64, p.rolloff))
        .collect();
    let mut h = vec![Complex::new(0.0, 0.0); n];
    for (i, &t) in taps.iter().enumerate() {
        let idx = (i + n - half % n) % n;
        h[idx] += Complex::new(t, 0.0);
    }
    plan.forward(&mut h);

    let n_pol = if p.dual_pol { 2 } else { 1 };
    let mut pols = Vec::with_capacity(n_pol);
    for pol in 0..n_pol {
        let mut rng = rng::stream(p.seed, &[rng::tag::SYMBOLS, pol as u64]);
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        for s in 0..p.n_symbols {
            let bits: u8 = rng.random_range(0..4);
            let re = if bits & 1 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
            let im = if bits & 2 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
            buf[s * sps] = Complex::new(re, im);
        }
        plan.forward(&mut buf);
        for (v, hk) in buf.iter_mut().zip(&h) {
            *v *= hk;
        }
        plan.inverse(&mut buf);
        let power = buf.iter().map(|v| v.norm_sqr()).sum::<f64>() / n as f64;
        let scale = 1.0 / libm::sqrt(power);
        for v in buf.iter_mut() {
            *v *= scale;
        }
        pols.push(buf);
    }
    let pol_y = if p.dual_pol { pols.pop() } else { None };
    let pol_x = pols.pop().expect("one polarization");
    Ok(ComplexWaveform::new(p.baud * sps as f64, pol_x, pol_y)?
        .with_symbol_rate(p.baud)
        .with_label("rrc-qpsk"))
}

/// `max |x| / rms |x|` over all polarizations.
pub fn peak_to_rms(wfm: &ComplexWaveform) -> Result<f64> {
    let mut peak = 0.0f64;
    let mut sum = 0.0;
    let mut count = 0usize;
    for s in wfm.pols() {
        for v in s {
            let p = v.norm_sqr();
            peak = peak.max(p);
            sum += p;
            count += 1;
        }
    }
    if count == 0 || sum == 0.0 {
        return Err(Error::param("peak-to-rms of an empty or all-zero waveform"));
    }
    Ok(libm::sqrt(peak) / libm::sqrt(sum / count as f64))
}
