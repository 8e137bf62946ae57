//! Transmit/receive chain simulator.
//!
//! The perturbed instruction passes, in this fixed order, through IQ
//! crosstalk, IQ skew, IQ gain imbalance and DAC quantization; then the
//! transmitter noise floor is added, and for card-to-card captures the
//! receiver floor as well. Noise floors are expressed in dB relative to the
//! mean signal PSD over the band of interest.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fft::Fft;
use crate::grid::FrequencyGrid;
use crate::perturbation::{BandOfInterest, NotchSpec, Perturbed, SnappedNotch};
use crate::psd::{fold_one_sided, PowerSpectrum, WelchPlan, Window};
use crate::rng::{self, tag};
use crate::waveform::{centered_index, fft_freq, mirror_index, ComplexWaveform, Polarization};
use crate::{from_db, Complex};

const J: Complex = Complex { re: 0.0, im: 1.0 };

/// Where the spectrum is captured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum InterfaceStage {
    /// DAC output into an oscilloscope; real electrical signal, reported on
    /// positive frequencies only.
    E2E,
    /// Transmitter output into an optical spectrum analyzer.
    #[default]
    Card2Osa,
    /// Captured by the receiving card's ADC; adds the receiver floor.
    Card2Card,
}

impl InterfaceStage {
    pub fn includes_rx_floor(self) -> bool {
        self == InterfaceStage::Card2Card
    }
}

/// IQ crosstalk matrix at one non-negative frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct CrosstalkPoint {
    pub freq_hz: f64,
    #[cfg_attr(feature = "serde", serde(default = "unity"))]
    pub c_ii: Complex,
    #[cfg_attr(feature = "serde", serde(default = "unity"))]
    pub c_qq: Complex,
    /// Q leaking into I.
    #[cfg_attr(feature = "serde", serde(default))]
    pub c_qi: Complex,
    /// I leaking into Q.
    #[cfg_attr(feature = "serde", serde(default))]
    pub c_iq: Complex,
}

#[cfg(feature = "serde")]
fn unity() -> Complex {
    Complex::new(1.0, 0.0)
}

impl CrosstalkPoint {
    pub fn new(freq_hz: f64, c_qi: Complex, c_iq: Complex) -> Self {
        CrosstalkPoint {
            freq_hz,
            c_ii: Complex::new(1.0, 0.0),
            c_qq: Complex::new(1.0, 0.0),
            c_qi,
            c_iq,
        }
    }
}

/// Crosstalk given at control frequencies `>= 0`, linearly interpolated and
/// held flat beyond the end points. Negative frequencies take the conjugate,
/// which makes the sampled profile Hermitian by construction.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct CrosstalkProfile {
    pub points: Vec<CrosstalkPoint>,
}

impl CrosstalkProfile {
    pub fn flat(c_qi: Complex, c_iq: Complex) -> Self {
        CrosstalkProfile {
            points: vec![CrosstalkPoint::new(0.0, c_qi, c_iq)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::Model("crosstalk profile has no points".into()));
        }
        for w in self.points.windows(2) {
            if !(w[1].freq_hz > w[0].freq_hz) {
                return Err(Error::Model("crosstalk frequencies must increase".into()));
            }
        }
        if self.points.iter().any(|p| !(p.freq_hz >= 0.0)) {
            return Err(Error::Model("crosstalk points are given at f >= 0".into()));
        }
        Ok(())
    }

    fn eval_positive(&self, f: f64) -> [Complex; 4] {
        let pts = &self.points;
        let get = |p: &CrosstalkPoint| [p.c_ii, p.c_qq, p.c_qi, p.c_iq];
        if f <= pts[0].freq_hz {
            return get(&pts[0]);
        }
        let last = pts.len() - 1;
        if f >= pts[last].freq_hz {
            return get(&pts[last]);
        }
        let i = pts.partition_point(|p| p.freq_hz <= f) - 1;
        let (a, b) = (&pts[i], &pts[i + 1]);
        let t = (f - a.freq_hz) / (b.freq_hz - a.freq_hz);
        let (va, vb) = (get(a), get(b));
        core::array::from_fn(|m| va[m] + (vb[m] - va[m]) * t)
    }

    /// `[C_II, C_QQ, C_QI, C_IQ]` at frequency `f`.
    pub fn eval(&self, f: f64) -> [Complex; 4] {
        let v = self.eval_positive(libm::fabs(f));
        if f < 0.0 {
            v.map(|c| c.conj())
        } else if f == 0.0 {
            v.map(|c| Complex::new(c.re, 0.0))
        } else {
            v
        }
    }

    /// Samples onto `grid`. The most negative bin of an even-length grid has
    /// no mirror and is forced real.
    pub fn sample(&self, grid: &FrequencyGrid) -> Result<SampledCrosstalk> {
        self.validate()?;
        let mut c = [vec![], vec![], vec![], vec![]];
        let dc = libm::round(-grid.f_start / grid.f_step);
        for k in 0..grid.n_bins {
            let f = grid.freq(k);
            let mirror = 2.0 * dc - k as f64;
            let mut v = self.eval(f);
            if mirror < 0.0 || mirror >= grid.n_bins as f64 {
                v = v.map(|z| Complex::new(z.re, 0.0));
            }
            for m in 0..4 {
                c[m].push(v[m]);
            }
        }
        let [c_ii, c_qq, c_qi, c_iq] = c;
        SampledCrosstalk::new(*grid, c_ii, c_qq, c_qi, c_iq)
    }
}

/// Crosstalk per bin of a centered transform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledCrosstalk {
    pub grid: FrequencyGrid,
    pub c_ii: Vec<Complex>,
    pub c_qq: Vec<Complex>,
    pub c_qi: Vec<Complex>,
    pub c_iq: Vec<Complex>,
}

impl SampledCrosstalk {
    /// Validates `C(f) = C*(-f)` for all four entries; bins without a mirror
    /// on the grid must be real.
    pub fn new(
        grid: FrequencyGrid,
        c_ii: Vec<Complex>,
        c_qq: Vec<Complex>,
        c_qi: Vec<Complex>,
        c_iq: Vec<Complex>,
    ) -> Result<Self> {
        let n = grid.n_bins;
        if [&c_ii, &c_qq, &c_qi, &c_iq].iter().any(|c| c.len() != n) {
            return Err(Error::Model("crosstalk arrays do not match the grid".into()));
        }
        let dc = libm::round(-grid.f_start / grid.f_step) as i64;
        for (name, c) in [("C_II", &c_ii), ("C_QQ", &c_qq), ("C_QI", &c_qi), ("C_IQ", &c_iq)] {
            let scale = c.iter().map(|z| z.norm()).fold(1.0, f64::max);
            for k in 0..n {
                let m = 2 * dc - k as i64;
                let bad = if m < 0 || m >= n as i64 {
                    libm::fabs(c[k].im) > 1e-12 * scale
                } else {
                    (c[k] - c[m as usize].conj()).norm() > 1e-12 * scale
                };
                if bad {
                    return Err(Error::Model(alloc::format!(
                        "{name} is not Hermitian at {} Hz",
                        grid.freq(k)
                    )));
                }
            }
        }
        Ok(SampledCrosstalk {
            grid,
            c_ii,
            c_qq,
            c_qi,
            c_iq,
        })
    }

    pub fn identity(grid: FrequencyGrid) -> Self {
        let one = vec![Complex::new(1.0, 0.0); grid.n_bins];
        let zero = vec![Complex::new(0.0, 0.0); grid.n_bins];
        SampledCrosstalk {
            grid,
            c_ii: one.clone(),
            c_qq: one,
            c_qi: zero.clone(),
            c_iq: zero,
        }
    }
}

/// A colored transmitter floor: piecewise-linear (in dB) weighting over
/// frequency plus optional spectral lines.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct NoiseShape {
    /// `(freq_hz, weight_db)` control points, increasing in frequency; held
    /// flat outside. Empty means 0 dB everywhere.
    #[cfg_attr(feature = "serde", serde(default))]
    pub points: Vec<(f64, f64)>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub lines: Vec<SpectralLine>,
}

/// A discrete tone, e.g. a clock artifact.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct SpectralLine {
    pub freq_hz: f64,
    /// Tone power relative to the signal power in the band of interest.
    pub level_dbc: f64,
}

impl NoiseShape {
    pub fn validate(&self) -> Result<()> {
        for w in self.points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::Model("noise shape frequencies must increase".into()));
            }
        }
        if self
            .points
            .iter()
            .any(|(f, d)| !f.is_finite() || !d.is_finite())
            || self.lines.iter().any(|l| !l.freq_hz.is_finite() || !l.level_dbc.is_finite())
        {
            return Err(Error::Model("noise shape values must be finite".into()));
        }
        Ok(())
    }

    /// Linear weight at `f`.
    pub fn weight(&self, f: f64) -> f64 {
        let p = &self.points;
        if p.is_empty() {
            return 1.0;
        }
        let d = if f <= p[0].0 {
            p[0].1
        } else if f >= p[p.len() - 1].0 {
            p[p.len() - 1].1
        } else {
            let i = p.partition_point(|q| q.0 <= f) - 1;
            let t = (f - p[i].0) / (p[i + 1].0 - p[i].0);
            p[i].1 + t * (p[i + 1].1 - p[i].1)
        };
        from_db(d)
    }
}

/// Ground-truth impairments. Every field is independently optional; an
/// absent or zero entry switches that impairment off.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ImpairmentConfig {
    /// Transmitter floor, dB relative to the mean signal PSD in the BOI.
    pub nfl_tx_db: Option<f64>,
    /// Receiver floor, same convention; only card-to-card captures see it.
    pub nfl_rx_db: Option<f64>,
    /// Coloring of the transmitter floor.
    pub nfl_shape: Option<NoiseShape>,
    pub dac_bits: Option<u32>,
    pub crosstalk: Option<CrosstalkProfile>,
    /// Delay of Q relative to I, picoseconds.
    pub skew_ps: f64,
    pub iq_gain_imbalance_db: f64,
    pub seed: u64,
}

impl ImpairmentConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(b) = self.dac_bits {
            if !(3..=16).contains(&b) {
                return Err(Error::Model(alloc::format!("dac_bits {b} outside [3, 16]")));
            }
        }
        for v in [self.nfl_tx_db, self.nfl_rx_db].into_iter().flatten() {
            if !v.is_finite() {
                return Err(Error::Model("noise floor levels must be finite".into()));
            }
        }
        if !self.skew_ps.is_finite() || !self.iq_gain_imbalance_db.is_finite() {
            return Err(Error::Model("skew and imbalance must be finite".into()));
        }
        if let Some(s) = &self.nfl_shape {
            s.validate()?;
        }
        if let Some(x) = &self.crosstalk {
            x.validate()?;
        }
        Ok(())
    }

    /// Injected floor at `f` (two-sided), as a multiple of the reference PSD.
    /// Spectral lines are not included.
    pub fn floor_relative(&self, f: f64, stage: InterfaceStage) -> f64 {
        let shape = |f: f64| self.nfl_shape.as_ref().map_or(1.0, |s| s.weight(f));
        let tx = self.nfl_tx_db.map_or(0.0, |d| from_db(d) * shape(f));
        let rx = match (stage.includes_rx_floor(), self.nfl_rx_db) {
            (true, Some(d)) => from_db(d),
            _ => 0.0,
        };
        tx + rx
    }

    /// Floor as reported on the capture's grid: E2E spectra are one-sided
    /// spectra of the real part, which average the two sides. The DC bin
    /// of a one-sided spectrum is not folded and carries half of that.
    pub fn floor_reported(&self, f: f64, stage: InterfaceStage) -> f64 {
        match stage {
            InterfaceStage::E2E if f == 0.0 => 0.5 * self.floor_relative(0.0, stage),
            InterfaceStage::E2E => 0.5 * (self.floor_relative(f, stage) + self.floor_relative(-f, stage)),
            _ => self.floor_relative(f, stage),
        }
    }

    fn has_linear_iq(&self) -> bool {
        self.crosstalk.is_some() || self.skew_ps != 0.0 || self.iq_gain_imbalance_db != 0.0
    }
}

/// Splits the spectrum of a complex signal into the spectra of its real I
/// and Q parts, lets `f` rewrite them, and recombines as `I + jQ`.
pub(crate) fn map_iq_spectrum<F>(plan: &Fft, x: &[Complex], df: f64, mut f: F) -> Vec<Complex>
where
    F: FnMut(usize, f64, Complex, Complex) -> (Complex, Complex),
{
    let n = x.len();
    let mut spec = x.to_vec();
    plan.forward(&mut spec);
    let mut out = vec![Complex::new(0.0, 0.0); n];
    for k in 0..n {
        let m = mirror_index(k, n);
        let i = (spec[k] + spec[m].conj()) * 0.5;
        let q = (spec[k] - spec[m].conj()) / (J * 2.0);
        let (i2, q2) = f(k, fft_freq(k, n, df), i, q);
        out[k] = i2 + J * q2;
    }
    plan.inverse(&mut out);
    out
}

fn check_transform_grid(wfm: &ComplexWaveform, grid: &FrequencyGrid) -> Result<()> {
    if !grid.same_as(&wfm.transform_grid()) {
        return Err(Error::Grid("profile grid differs from the waveform transform grid".into()));
    }
    Ok(())
}

/// `[Î; Q̂] = [[C_II, C_QI], [C_IQ, C_QQ]]·[I; Q]` per bin.
pub fn apply_iq_crosstalk(wfm: &ComplexWaveform, xt: &SampledCrosstalk) -> Result<ComplexWaveform> {
    check_transform_grid(wfm, &xt.grid)?;
    let n = wfm.len();
    let df = wfm.sample_rate() / n as f64;
    let plan = Fft::new(n);
    wfm.map_pols(|s| {
        map_iq_spectrum(&plan, s, df, |k, _, i, q| {
            let c = centered_index(k, n);
            (
                xt.c_ii[c] * i + xt.c_qi[c] * q,
                xt.c_iq[c] * i + xt.c_qq[c] * q,
            )
        })
    })
}

/// Largest skew accepted by [`apply_skew`], seconds.
pub fn max_skew_s(wfm: &ComplexWaveform) -> f64 {
    match wfm.symbol_rate() {
        Some(baud) => 0.1 / baud,
        None => 1.0 / wfm.sample_rate(),
    }
}

/// Linear phase applied to Q: `Q(f)·exp(-j2πf·τ)`; positive `τ` delays Q.
#[inline]
pub(crate) fn skew_phase(f: f64, tau_s: f64, nyquist: bool) -> Complex {
    let ph = -2.0 * PI * f * tau_s;
    if nyquist {
        // keeps Q real at the unpaired bin
        Complex::new(libm::cos(ph), 0.0)
    } else {
        Complex::new(libm::cos(ph), libm::sin(ph))
    }
}

/// Delays the Q component by `tau_ps` picoseconds relative to I.
pub fn apply_skew(wfm: &ComplexWaveform, tau_ps: f64) -> Result<ComplexWaveform> {
    let tau = tau_ps * 1e-12;
    let limit = max_skew_s(wfm);
    if !tau.is_finite() || libm::fabs(tau) >= limit {
        return Err(Error::param(alloc::format!(
            "skew {tau_ps} ps outside the ±{} ps model range",
            limit * 1e12
        )));
    }
    if tau == 0.0 {
        return Ok(wfm.clone());
    }
    let n = wfm.len();
    let df = wfm.sample_rate() / n as f64;
    let plan = Fft::new(n);
    wfm.map_pols(|s| {
        map_iq_spectrum(&plan, s, df, |k, f, i, q| {
            (i, q * skew_phase(f, tau, n % 2 == 0 && k == n / 2))
        })
    })
}

/// Scales I by `10^(g/40)` and Q by `10^(-g/40)`.
pub fn apply_iq_imbalance(wfm: &ComplexWaveform, imbalance_db: f64) -> Result<ComplexWaveform> {
    let gi = libm::pow(10.0, imbalance_db / 40.0);
    let gq = 1.0 / gi;
    wfm.map_pols(|s| s.iter().map(|v| Complex::new(v.re * gi, v.im * gq)).collect())
}

/// Mid-rise quantization of I and Q to `bits` over `±full_scale`, where the
/// full scale is the largest |I| or |Q| of the input.
pub fn quantize_dac(wfm: &ComplexWaveform, bits: u32) -> Result<ComplexWaveform> {
    if !(3..=32).contains(&bits) {
        return Err(Error::param(alloc::format!("{bits}-bit DAC not supported (3..=32)")));
    }
    let fs = wfm
        .pols()
        .flat_map(|s| s.iter())
        .fold(0.0f64, |m, v| m.max(libm::fabs(v.re)).max(libm::fabs(v.im)));
    if fs == 0.0 {
        return Ok(wfm.clone());
    }
    let step = 2.0 * fs / libm::pow(2.0, bits as f64);
    let top = fs - step / 2.0;
    let q = |x: f64| ((libm::floor(x / step) + 0.5) * step).clamp(-top, top);
    wfm.map_pols(|s| s.iter().map(|v| Complex::new(q(v.re), q(v.im))).collect())
}

/// Capture parameters shared by every trace of an experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CaptureSetup {
    pub stage: InterfaceStage,
    /// Requested resolution bandwidth, Hz.
    pub rbw: f64,
    pub pol: Polarization,
    /// Independent noise captures averaged into the trace.
    pub captures: usize,
    pub window: Window,
}

impl Default for CaptureSetup {
    fn default() -> Self {
        CaptureSetup {
            stage: InterfaceStage::Card2Osa,
            rbw: 200e6,
            pol: Polarization::X,
            captures: 1,
            window: Window::Hann,
        }
    }
}

/// One perturbed-spectrum capture with its metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementTrace {
    pub spectrum: PowerSpectrum,
    pub notch: Option<NotchSpec>,
    /// Notch bands as realized on the instruction's transform grid.
    pub snapped: Option<SnappedNotch>,
    /// Norm: notched over original instruction power in the band of interest.
    pub norm: f64,
    pub normalized: bool,
    pub stage: InterfaceStage,
    /// Mean signal PSD over the BOI of the unperturbed instruction; the 0 dB
    /// level of relative spectra.
    pub reference_psd: f64,
    pub truth: Option<ImpairmentConfig>,
}

impl MeasurementTrace {
    pub fn applied_norm(&self) -> f64 {
        if self.normalized {
            self.norm
        } else {
            1.0
        }
    }
}

/// Mean BOI power of the selected polarizations, from the exact transform.
pub(crate) fn boi_power(wfm: &ComplexWaveform, boi: &BandOfInterest, pol: Polarization) -> Result<f64> {
    let n = wfm.len();
    let df = wfm.sample_rate() / n as f64;
    let plan = Fft::new(n);
    let sel = wfm.selected(pol)?;
    let mut total = 0.0;
    for s in &sel {
        let mut buf = s.to_vec();
        plan.forward(&mut buf);
        total += buf
            .iter()
            .enumerate()
            .filter(|(k, _)| boi.contains(fft_freq(*k, n, df)))
            .map(|(_, v)| v.norm_sqr())
            .sum::<f64>();
    }
    Ok(total / (n as f64 * n as f64) / sel.len() as f64)
}

/// Mean signal PSD over the BOI of the unperturbed instruction.
pub fn reference_psd(instr: &Perturbed, pol: Polarization) -> Result<f64> {
    let p = boi_power(&instr.wfm, &instr.boi, pol)?;
    // with the loop open the output sits `norm` below the original
    let loss = if instr.normalized { 1.0 } else { instr.norm };
    let r = p / instr.boi.width() / loss;
    if !(r > 0.0) {
        return Err(Error::Normalization("instruction has no power in the band of interest".into()));
    }
    Ok(r)
}

/// Deterministic part of the chain: crosstalk, skew, imbalance, DAC.
pub fn transmit(wfm: &ComplexWaveform, cfg: &ImpairmentConfig) -> Result<ComplexWaveform> {
    cfg.validate()?;
    let mut out = if cfg.has_linear_iq() {
        let n = wfm.len();
        let df = wfm.sample_rate() / n as f64;
        let tau = cfg.skew_ps * 1e-12;
        if tau != 0.0 && libm::fabs(tau) >= max_skew_s(wfm) {
            return Err(Error::param(alloc::format!("skew {} ps outside the model range", cfg.skew_ps)));
        }
        let xt = match &cfg.crosstalk {
            Some(p) => p.sample(&wfm.transform_grid())?,
            None => SampledCrosstalk::identity(wfm.transform_grid()),
        };
        let gi = libm::pow(10.0, cfg.iq_gain_imbalance_db / 40.0);
        let gq = 1.0 / gi;
        let plan = Fft::new(n);
        wfm.map_pols(|s| {
            map_iq_spectrum(&plan, s, df, |k, f, i, q| {
                let c = centered_index(k, n);
                let i1 = xt.c_ii[c] * i + xt.c_qi[c] * q;
                let q1 = xt.c_iq[c] * i + xt.c_qq[c] * q;
                let q2 = if tau != 0.0 {
                    q1 * skew_phase(f, tau, n % 2 == 0 && k == n / 2)
                } else {
                    q1
                };
                (i1 * gi, q2 * gq)
            })
        })?
    } else {
        wfm.clone()
    };
    if let Some(bits) = cfg.dac_bits {
        out = quantize_dac(&out, bits)?;
    }
    Ok(out)
}

/// Adds the configured noise for one capture to `signal` (a single
/// polarization) and returns the noisy samples.
#[allow(clippy::too_many_arguments)]
fn add_noise(
    signal: &[Complex],
    sample_rate: f64,
    cfg: &ImpairmentConfig,
    stage: InterfaceStage,
    reference: f64,
    boi_width: f64,
    tags: [u64; 3],
    plan: &Fft,
) -> Vec<Complex> {
    let n = signal.len();
    let df = sample_rate / n as f64;
    let mut out = signal.to_vec();
    if let Some(db) = cfg.nfl_tx_db {
        let var = from_db(db) * reference * sample_rate;
        let mut r = rng::stream(cfg.seed, &[tag::NOISE_TX, tags[0], tags[1], tags[2]]);
        let mut noise = rng::complex_gaussian(&mut r, n, var);
        if let Some(shape) = cfg.nfl_shape.as_ref().filter(|s| !s.points.is_empty()) {
            plan.forward(&mut noise);
            for (k, v) in noise.iter_mut().enumerate() {
                *v *= libm::sqrt(shape.weight(fft_freq(k, n, df)));
            }
            plan.inverse(&mut noise);
        }
        for (o, v) in out.iter_mut().zip(&noise) {
            *o += v;
        }
    }
    if let Some(shape) = &cfg.nfl_shape {
        if !shape.lines.is_empty() {
            let mut r = rng::stream(cfg.seed, &[tag::LINE_PHASE, tags[0], tags[1], tags[2]]);
            use rand::Rng;
            for line in &shape.lines {
                // periodic tone on the nearest transform bin
                let bin = libm::round(line.freq_hz / df);
                let amp = libm::sqrt(from_db(line.level_dbc) * reference * boi_width);
                let phase0: f64 = r.random::<f64>() * 2.0 * PI;
                for (i, o) in out.iter_mut().enumerate() {
                    let ph = phase0 + 2.0 * PI * bin * (i as f64) / n as f64;
                    *o += Complex::new(libm::cos(ph), libm::sin(ph)) * amp;
                }
            }
        }
    }
    if let (true, Some(db)) = (stage.includes_rx_floor(), cfg.nfl_rx_db) {
        let var = from_db(db) * reference * sample_rate;
        let mut r = rng::stream(cfg.seed, &[tag::NOISE_RX, tags[0], tags[1], tags[2]]);
        for (o, v) in out.iter_mut().zip(rng::complex_gaussian(&mut r, n, var)) {
            *o += v;
        }
    }
    out
}

fn is_random(cfg: &ImpairmentConfig, stage: InterfaceStage) -> bool {
    cfg.nfl_tx_db.is_some()
        || cfg.nfl_shape.as_ref().is_some_and(|s| !s.lines.is_empty())
        || (stage.includes_rx_floor() && cfg.nfl_rx_db.is_some())
}

/// Transmits a perturbed instruction through the impaired chain and captures
/// its averaged PSD. `trace_tag` keys the noise streams so different traces
/// of one experiment draw independent noise.
pub fn simulate_capture(
    instr: &Perturbed,
    cfg: &ImpairmentConfig,
    setup: &CaptureSetup,
    trace_tag: u64,
) -> Result<MeasurementTrace> {
    let reference = reference_psd(instr, setup.pol)?;
    let tx = transmit(&instr.wfm, cfg)?;
    capture_transmitted(&tx, instr, cfg, setup, trace_tag, reference)
}

/// Noise addition and spectrum capture for an already transmitted waveform.
pub(crate) fn capture_transmitted(
    tx: &ComplexWaveform,
    instr: &Perturbed,
    cfg: &ImpairmentConfig,
    setup: &CaptureSetup,
    trace_tag: u64,
    reference: f64,
) -> Result<MeasurementTrace> {
    if setup.captures == 0 {
        return Err(Error::param("at least one capture is required"));
    }
    let welch = WelchPlan::for_resolution_with(tx.len(), tx.sample_rate(), setup.rbw, setup.window)?;
    let plan = Fft::new(tx.len());
    let pols: Vec<(usize, &[Complex])> = tx
        .selected(setup.pol)?
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            // keep the Y stream distinct when only Y is selected
            let id = if setup.pol == Polarization::Y { 1 } else { i };
            (id, s)
        })
        .collect();
    let random = is_random(cfg, setup.stage);
    let rounds = if random { setup.captures } else { 1 };
    let mut acc = vec![0.0; welch.segment_len()];
    let mut count = 0;
    for c in 0..rounds {
        for &(id, s) in &pols {
            let noisy = if random {
                add_noise(
                    s,
                    tx.sample_rate(),
                    cfg,
                    setup.stage,
                    reference,
                    instr.boi.width(),
                    [trace_tag, c as u64, id as u64],
                    &plan,
                )
            } else {
                s.to_vec()
            };
            let observed: Vec<Complex> = if setup.stage == InterfaceStage::E2E {
                noisy.iter().map(|v| Complex::new(v.re, 0.0)).collect()
            } else {
                noisy
            };
            count += welch.accumulate(&observed, &mut acc);
        }
    }
    let mut spectrum = welch.finish(&acc, count);
    if setup.stage == InterfaceStage::E2E {
        spectrum = fold_one_sided(&spectrum);
    }
    // deterministic captures repeat exactly; count them for the variance model
    spectrum.averages = count * (setup.captures / rounds);
    Ok(MeasurementTrace {
        spectrum,
        notch: instr.notch.map(|(n, _)| n),
        snapped: instr.notch.map(|(_, s)| s),
        norm: instr.norm,
        normalized: instr.normalized,
        stage: setup.stage,
        reference_psd: reference,
        truth: Some(cfg.clone()),
    })
}
