//! Diagnostics built on notch captures: SN/DN crosstalk comparison, skew
//! estimation by a compensation sweep, and the eye-closure baseline.

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::chain::{
    capture_transmitted, map_iq_spectrum, reference_psd, transmit, CaptureSetup, ImpairmentConfig,
};
use crate::error::{Error, Result};
use crate::fft::Fft;
use crate::grid::{Band, FrequencyGrid};
use crate::perturbation::{apply_perturbation, build_filter, BandOfInterest, NotchKind, NotchSpec, Perturbed, SnappedNotch};
use crate::psd::{PowerSpectrum, WelchPlan};
use crate::rng::{self, f64_tag};
use crate::stitching::{compute_sndr, recover_signal_psd, run_plan, stitch_nfl, SndrProfile, StitchOptions, StitchPlan};
use crate::waveform::ComplexWaveform;
use crate::{db, from_db, Complex};

/// Mean PSD over the bins whose centers fall in `region`.
pub fn apsd(spectrum: &PowerSpectrum, region: &Band) -> Result<f64> {
    let (sum, n) = spectrum
        .grid
        .freqs()
        .zip(&spectrum.psd)
        .filter(|(f, _)| region.contains(*f))
        .fold((0.0, 0usize), |(s, n), (_, p)| (s + p, n + 1));
    if n == 0 {
        return Err(Error::Region(alloc::format!(
            "({}, {}] Hz holds no bin of the spectrum",
            region.lo,
            region.hi
        )));
    }
    Ok(sum / n as f64)
}

/// Pure-phase compensation on the Q component over a notch and its mirror.
///
/// The gain on `Q(f)` is `exp(jθ(f))` with `θ(f) = 2πf·τ` inside the notch
/// bands and 1 elsewhere. Since the chain delays Q by multiplying with
/// `exp(-j2πf·τ_skew)`, a filter built with `τ = τ_skew` undoes the skew on
/// those bands.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseFilter {
    pub notch: NotchSpec,
    pub snapped: SnappedNotch,
    pub tau_ps: f64,
}

impl PhaseFilter {
    fn in_bands(&self, f: f64) -> bool {
        self.snapped.primary.contains(f) || self.snapped.mirror.contains(f)
    }

    /// θ(f) in radians.
    pub fn theta(&self, f: f64) -> f64 {
        if self.in_bands(f) {
            2.0 * PI * f * self.tau_ps * 1e-12
        } else {
            0.0
        }
    }

    pub fn is_identity(&self) -> bool {
        self.tau_ps == 0.0
    }

    pub fn apply(&self, wfm: &ComplexWaveform) -> Result<ComplexWaveform> {
        if self.is_identity() {
            return Ok(wfm.clone());
        }
        let n = wfm.len();
        let df = wfm.sample_rate() / n as f64;
        let plan = Fft::new(n);
        wfm.map_pols(|s| {
            map_iq_spectrum(&plan, s, df, |k, f, i, q| {
                // the Nyquist bin has no partner and is never inside a notch
                // built on this grid, see `build_phase_filter`
                let th = if n % 2 == 0 && k == n / 2 { 0.0 } else { self.theta(f) };
                (i, q * Complex::new(libm::cos(th), libm::sin(th)))
            })
        })
    }
}

/// Phase filter for `notch` on `grid` with trial skew `tau_ps`.
pub fn build_phase_filter(notch: &NotchSpec, grid: &FrequencyGrid, tau_ps: f64) -> Result<PhaseFilter> {
    if !tau_ps.is_finite() {
        return Err(Error::param("trial skew must be finite"));
    }
    let snapped = notch.snap(grid)?;
    let nyq = -grid.f_start;
    if snapped.primary.contains(nyq) || snapped.mirror.contains(nyq) || snapped.mirror.contains(-nyq) {
        return Err(Error::Geometry("phase filter bands reach the Nyquist bin".into()));
    }
    Ok(PhaseFilter {
        notch: *notch,
        snapped,
        tau_ps,
    })
}

/// Band whose APSD drives the skew sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum MonitorBand {
    /// `F_N`, where the single notch forces destructive interference.
    #[default]
    Null,
    /// `F_{-N}`, the constructive side.
    Mirror,
}

/// Everything fixed across one skew sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewScenario {
    pub wfm_org: ComplexWaveform,
    /// Must be a single notch.
    pub notch: NotchSpec,
    pub boi: BandOfInterest,
    /// Ground truth, including the skew to be found. Crosstalk must be off.
    pub cfg: ImpairmentConfig,
    pub setup: CaptureSetup,
    pub monitor: MonitorBand,
    pub normalize: bool,
    /// Bins excluded next to each edge of the monitored band.
    pub guard_bins: usize,
}

impl SkewScenario {
    pub fn new(wfm_org: ComplexWaveform, notch: NotchSpec, boi: BandOfInterest, cfg: ImpairmentConfig, setup: CaptureSetup) -> Self {
        SkewScenario {
            wfm_org,
            notch,
            boi,
            cfg,
            setup,
            monitor: MonitorBand::Null,
            normalize: true,
            guard_bins: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.notch.kind != NotchKind::Single {
            return Err(Error::Geometry("skew estimation needs a single notch".into()));
        }
        if self.cfg.crosstalk.is_some() {
            return Err(Error::Model(
                "IQ crosstalk must be compensated before estimating skew".into(),
            ));
        }
        if self.setup.stage == crate::chain::InterfaceStage::E2E {
            return Err(Error::Model(
                "a one-sided real capture cannot separate the null from its mirror".into(),
            ));
        }
        if !self.boi.contains_notch(&self.notch) {
            return Err(Error::Geometry("notch lies outside the band of interest".into()));
        }
        self.cfg.validate()
    }

    /// Precomputes the perturbed instruction and the monitored region.
    pub fn prepare(&self) -> Result<PreparedSkew<'_>> {
        self.validate()?;
        let grid = self.wfm_org.transform_grid();
        let filter = build_filter(&self.notch, &grid, f64::NEG_INFINITY)?;
        let perturbed = apply_perturbation(&self.wfm_org, &filter, self.normalize, &self.boi)?;
        let reference = reference_psd(&perturbed, self.setup.pol)?;
        let welch = WelchPlan::for_resolution_with(self.wfm_org.len(), self.wfm_org.sample_rate(), self.setup.rbw, self.setup.window)?;
        let (_, snapped) = filter.notch.expect("notch filter");
        let band = match self.monitor {
            MonitorBand::Null => snapped.primary,
            MonitorBand::Mirror => snapped.mirror,
        };
        let region = band
            .shrink((self.guard_bins as f64 + 0.5) * welch.bin_width() * (1.0 - 1e-9))
            .ok_or_else(|| {
                Error::Region("monitored band is narrower than its guard at this resolution".into())
            })?;
        Ok(PreparedSkew {
            scenario: self,
            perturbed,
            reference,
            region,
        })
    }
}

/// A scenario with its deterministic preprocessing done.
#[derive(Debug, Clone)]
pub struct PreparedSkew<'a> {
    scenario: &'a SkewScenario,
    perturbed: Perturbed,
    reference: f64,
    /// Monitored region after dropping the guard bins.
    pub region: Band,
}

impl PreparedSkew<'_> {
    /// Compensated instruction pushed through the deterministic part of the
    /// chain.
    pub fn transmit(&self, tau_trial_ps: f64) -> Result<ComplexWaveform> {
        let pf = build_phase_filter(&self.scenario.notch, &self.perturbed.wfm.transform_grid(), tau_trial_ps)?;
        let compensated = pf.apply(&self.perturbed.wfm)?;
        transmit(&compensated, &self.scenario.cfg)
    }

    /// APSD of the monitored band in dB relative to the mean signal PSD, for
    /// an already transmitted waveform. `noise_key` selects the noise draw.
    pub fn cost_of(&self, tx: &ComplexWaveform, captures: usize, noise_key: u64) -> Result<f64> {
        let setup = CaptureSetup {
            captures,
            ..self.scenario.setup
        };
        let instr = Perturbed {
            wfm: tx.clone(),
            ..self.perturbed.clone()
        };
        let trace = capture_transmitted(tx, &instr, &self.scenario.cfg, &setup, noise_key, self.reference)?;
        Ok(db(apsd(&trace.spectrum, &self.region)? / self.reference))
    }

    pub fn cost(&self, tau_trial_ps: f64, captures: usize, noise_key: u64) -> Result<f64> {
        self.cost_of(&self.transmit(tau_trial_ps)?, captures, noise_key)
    }
}

/// Skew cost at one trial compensation: monitored-band APSD in dB relative
/// to the mean signal PSD, averaged over the scenario's captures.
pub fn skew_cost(tau_trial_ps: f64, scenario: &SkewScenario) -> Result<f64> {
    scenario
        .prepare()?
        .cost(tau_trial_ps, scenario.setup.captures, trial_key(0, tau_trial_ps))
}

fn trial_key(repeat: u64, tau_trial_ps: f64) -> u64 {
    rng::derive(repeat, &[f64_tag(tau_trial_ps)])
}

/// Sweep grid and repetition settings.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SkewSweep {
    pub lo_ps: f64,
    pub hi_ps: f64,
    pub step_ps: f64,
    pub repeats: usize,
    /// Captures averaged per sweep point.
    pub captures: usize,
    /// Reuse the first repeat's noise in every repeat.
    pub identical_seeds: bool,
}

impl Default for SkewSweep {
    fn default() -> Self {
        SkewSweep {
            lo_ps: -1.4,
            hi_ps: 1.4,
            step_ps: 0.25,
            repeats: 8,
            captures: 40,
            identical_seeds: false,
        }
    }
}

impl SkewSweep {
    pub fn validate(&self) -> Result<()> {
        if !(self.lo_ps < self.hi_ps) || !(self.step_ps > 0.0) || !self.lo_ps.is_finite() || !self.hi_ps.is_finite() {
            return Err(Error::param("sweep needs lo < hi and a positive step"));
        }
        if self.repeats == 0 || self.captures == 0 {
            return Err(Error::param("repeats and captures must be positive"));
        }
        if self.points().len() < 3 {
            return Err(Error::param("sweep needs at least three points"));
        }
        Ok(())
    }

    /// `lo, lo + step, …` up to `hi`.
    pub fn points(&self) -> Vec<f64> {
        let n = libm::floor((self.hi_ps - self.lo_ps) / self.step_ps + 1e-9) as usize + 1;
        (0..n).map(|i| self.lo_ps + i as f64 * self.step_ps).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SkewEstimate {
    /// Mean of the per-repeat estimates, ps.
    pub tau_hat: f64,
    /// `(τ_trial, cost dB)` averaged (in linear power) over repeats.
    pub cost_curve: Vec<(f64, f64)>,
    pub repeats: Vec<f64>,
    /// Sample standard deviation of `repeats`, ps.
    pub std: f64,
    /// Quadratic coefficient of a least-squares fit to the mean curve in
    /// linear power relative to its minimum, per ps².
    pub curvature: f64,
}

/// Indices of strict local minima; end points count when lower than their
/// single neighbour.
pub fn strict_local_minima(y: &[f64]) -> Vec<usize> {
    let n = y.len();
    (0..n)
        .filter(|&i| (i == 0 || y[i] < y[i - 1]) && (i + 1 == n || y[i] < y[i + 1]))
        .collect()
}

/// Vertex of the parabola through the curve's minimum and its two
/// neighbours, fitted on linear power.
pub fn refine_minimum(curve: &[(f64, f64)]) -> Result<f64> {
    let y: Vec<f64> = curve.iter().map(|p| from_db(p.1)).collect();
    let minima = strict_local_minima(&y);
    if minima.len() != 1 {
        return Err(Error::NotUnimodal {
            minima,
            curve: curve.to_vec(),
        });
    }
    let i = minima[0];
    if i == 0 || i + 1 == y.len() {
        return Err(Error::Fit(alloc::format!(
            "minimum at the sweep edge ({} ps); widen the sweep",
            curve[i].0
        )));
    }
    let (x0, x1, x2) = (curve[i - 1].0, curve[i].0, curve[i + 1].0);
    let (y0, y1, y2) = (y[i - 1], y[i], y[i + 1]);
    let num = (x1 - x0) * (x1 - x0) * (y1 - y2) - (x1 - x2) * (x1 - x2) * (y1 - y0);
    let den = (x1 - x0) * (y1 - y2) - (x1 - x2) * (y1 - y0);
    if den == 0.0 {
        return Ok(x1);
    }
    Ok(x1 - 0.5 * num / den)
}

/// Least-squares `a·x² + b·x + c`; returns `[a, b, c]`.
pub fn quadratic_fit(x: &[f64], y: &[f64]) -> Result<[f64; 3]> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::Fit("quadratic fit needs three or more points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    // centred for conditioning
    let mut s = [0.0f64; 5];
    let mut t = [0.0f64; 3];
    for (&xi, &yi) in x.iter().zip(y) {
        let u = xi - mx;
        let mut p = 1.0;
        for (k, sk) in s.iter_mut().enumerate() {
            *sk += p;
            if k < 3 {
                t[k] += p * yi;
            }
            p *= u;
        }
    }
    // normal equations for [c, b, a] in u
    let m = [[s[0], s[1], s[2]], [s[1], s[2], s[3]], [s[2], s[3], s[4]]];
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&m);
    if !(libm::fabs(d) > 1e-300) {
        return Err(Error::Fit("abscissae are degenerate".into()));
    }
    let solve = |col: usize| {
        let mut mm = m;
        for r in 0..3 {
            mm[r][col] = t[r];
        }
        det(&mm) / d
    };
    let (c, b, a) = (solve(0), solve(1), solve(2));
    // back to x: a(x-m)² + b(x-m) + c
    Ok([a, b - 2.0 * a * mx, a * mx * mx - b * mx + c])
}

/// Per-repeat cost curves (dB) over the sweep grid. The deterministic part
/// of the chain runs once per trial; each repeat draws fresh noise unless
/// `identical_seeds` is set.
pub fn sweep_costs(scenario: &SkewScenario, sweep: &SkewSweep) -> Result<Vec<Vec<f64>>> {
    sweep.validate()?;
    let prepared = scenario.prepare()?;
    let points = sweep.points();
    let tx: Vec<ComplexWaveform> = points
        .iter()
        .map(|&t| prepared.transmit(t))
        .collect::<Result<_>>()?;
    (0..sweep.repeats)
        .map(|r| {
            let key = if sweep.identical_seeds { 0 } else { r as u64 };
            points
                .iter()
                .zip(&tx)
                .map(|(&t, w)| prepared.cost_of(w, sweep.captures, trial_key(key, t)))
                .collect()
        })
        .collect()
}

/// Sweeps trial compensations, refines the minimum per repeat and reports
/// the mean estimate and its spread.
pub fn estimate_skew(scenario: &SkewScenario, sweep: &SkewSweep) -> Result<SkewEstimate> {
    summarize(&sweep.points(), &sweep_costs(scenario, sweep)?)
}

/// Repeat-averaged curve in linear power.
pub fn mean_curve(curves: &[Vec<f64>]) -> Vec<f64> {
    let n = curves.len() as f64;
    (0..curves.first().map_or(0, |c| c.len()))
        .map(|i| curves.iter().map(|c| from_db(c[i])).sum::<f64>() / n)
        .collect()
}

/// Quadratic coefficient of a least-squares fit to the repeat-averaged curve,
/// in linear power relative to the curve's minimum, per ps².
pub fn curve_curvature(points: &[f64], curves: &[Vec<f64>]) -> Result<f64> {
    let mean = mean_curve(curves);
    let floor = mean.iter().cloned().fold(f64::INFINITY, f64::min);
    let rel: Vec<f64> = mean.iter().map(|v| v / floor).collect();
    Ok(quadratic_fit(points, &rel)?[0])
}

/// Combines per-repeat cost curves (dB) into an estimate.
pub fn summarize(points: &[f64], curves: &[Vec<f64>]) -> Result<SkewEstimate> {
    if curves.is_empty() || curves.iter().any(|c| c.len() != points.len()) {
        return Err(Error::param("cost curves do not match the sweep grid"));
    }
    let mut repeats = Vec::with_capacity(curves.len());
    for c in curves {
        let curve: Vec<(f64, f64)> = points.iter().copied().zip(c.iter().copied()).collect();
        repeats.push(refine_minimum(&curve)?);
    }
    let n = repeats.len() as f64;
    let tau_hat = repeats.iter().sum::<f64>() / n;
    let std = if repeats.len() > 1 {
        libm::sqrt(repeats.iter().map(|t| (t - tau_hat) * (t - tau_hat)).sum::<f64>() / (n - 1.0))
    } else {
        0.0
    };
    Ok(SkewEstimate {
        tau_hat,
        cost_curve: points.iter().copied().zip(mean_curve(curves).iter().map(|v| db(*v))).collect(),
        repeats,
        std,
        curvature: curve_curvature(points, curves)?,
    })
}

/// SNDR difference between a dual-notch and a single-notch stitch of the same
/// band.
#[derive(Debug, Clone, PartialEq)]
pub struct Discrepancy {
    pub grid: FrequencyGrid,
    /// `SNDR_DN - SNDR_SN` per bin, dB.
    pub diff_db: Vec<f64>,
    pub sn: SndrProfile,
    pub dn: SndrProfile,
}

impl Discrepancy {
    pub fn max_abs_db(&self) -> f64 {
        self.diff_db
            .iter()
            .filter(|d| d.is_finite())
            .fold(0.0, |m, d| libm::fmax(m, libm::fabs(*d)))
    }
}

pub fn sn_dn_discrepancy(
    wfm_org: &ComplexWaveform,
    plan_sn: &StitchPlan,
    plan_dn: &StitchPlan,
    cfg: &ImpairmentConfig,
    setup: &CaptureSetup,
    opts: &StitchOptions,
) -> Result<Discrepancy> {
    if plan_sn.kind != NotchKind::Single || plan_dn.kind != NotchKind::Dual {
        return Err(Error::Plan("expected a single-notch and a dual-notch plan".into()));
    }
    if plan_sn.boi != plan_dn.boi {
        return Err(Error::Plan("plans cover different bands".into()));
    }
    let profile = |plan: &StitchPlan| -> Result<SndrProfile> {
        let traces = run_plan(plan, wfm_org, cfg, setup, opts)?;
        let nfl = stitch_nfl(&traces, &plan.boi, opts)?;
        let sig = recover_signal_psd(&traces, &nfl, opts)?;
        compute_sndr(&sig.spectrum, &nfl.spectrum)
    };
    let sn = profile(plan_sn)?;
    let dn = profile(plan_dn)?;
    if !sn.grid.same_as(&dn.grid) {
        return Err(Error::Grid("plans produced different grids".into()));
    }
    let diff_db = dn.sndr_db.iter().zip(&sn.sndr_db).map(|(d, s)| d - s).collect();
    Ok(Discrepancy {
        grid: sn.grid,
        diff_db,
        sn,
        dn,
    })
}

/// `NSR_RX = (NSR_TRX + NSR_ASE) / EC` fitted over measured points.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EyeClosureFit {
    pub ec: f64,
    pub nsr_trx: f64,
    /// RMS residual of the line fit.
    pub residual: f64,
}

/// Least-squares line through `(nsr_ase, nsr_rx)` points.
pub fn eye_closure_fit(points: &[(f64, f64)]) -> Result<EyeClosureFit> {
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::Fit("non-finite point".into()));
    }
    let n = points.len() as f64;
    if points.len() < 2 {
        return Err(Error::Fit("need at least two points".into()));
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if !(sxx > 1e-30 * (mx * mx).max(1e-300) * n) {
        return Err(Error::Fit("all NSR_ASE values are equal".into()));
    }
    let slope = sxy / sxx;
    if !(slope > 0.0) {
        return Err(Error::Fit(alloc::format!("slope {slope} gives no positive eye closure")));
    }
    let intercept = my - slope * mx;
    let residual = libm::sqrt(
        points
            .iter()
            .map(|p| {
                let e = p.1 - (slope * p.0 + intercept);
                e * e
            })
            .sum::<f64>()
            / n,
    );
    let ec = 1.0 / slope;
    Ok(EyeClosureFit {
        ec,
        nsr_trx: intercept * ec,
        residual,
    })
}

/// Expected SN notch-band PSD under first-order crosstalk:
/// `|X_I(f)|²·|C_QI(f) + C_IQ(f)|²` with `|X_I|² = |X(-f)|²/4` inside the
/// null.
pub fn sn_crosstalk_leakage(mirror_psd: f64, c_qi: Complex, c_iq: Complex) -> f64 {
    0.25 * mirror_psd * (c_qi + c_iq).norm_sqr()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn apsd_definition() {
        let g = FrequencyGrid::new(0.0, 1.0, 10).unwrap();
        let s = PowerSpectrum::new(g, vec![2.0; 10], 1.0).unwrap();
        assert_eq!(apsd(&s, &Band { lo: 1.5, hi: 6.5 }).unwrap(), 2.0);
        assert!(matches!(apsd(&s, &Band { lo: 20.0, hi: 30.0 }), Err(Error::Region(_))));
    }

    #[test]
    fn phase_filter_values() {
        let g = FrequencyGrid::centered(4000, 400e9); // 100 MHz bins
        let n = NotchSpec::single(20e9, 2e9);
        let pf = build_phase_filter(&n, &g, 0.5).unwrap();
        assert!((pf.theta(20e9) - 2.0 * PI * 0.01).abs() < 1e-15);
        assert!((pf.theta(-20e9) + 2.0 * PI * 0.01).abs() < 1e-15);
        assert_eq!(pf.theta(5e9), 0.0);
        assert!(build_phase_filter(&n, &g, 0.0).unwrap().is_identity());
    }

    #[test]
    fn parabola_vertex_exact_on_quadratic() {
        let xs: Vec<f64> = (0..12).map(|i| -1.4 + 0.25 * i as f64).collect();
        let curve: Vec<(f64, f64)> = xs
            .iter()
            .map(|&x| (x, db(1.0 + 0.5 * (x - 0.37) * (x - 0.37))))
            .collect();
        assert!((refine_minimum(&curve).unwrap() - 0.37).abs() < 1e-12);
        let edge: Vec<(f64, f64)> = xs.iter().map(|&x| (x, db(1.0 + x * x * 0.0 + (x + 2.0)))).collect();
        assert!(matches!(refine_minimum(&edge), Err(Error::Fit(_))));
        let mut bumpy = curve.clone();
        bumpy[1].1 -= 10.0;
        assert!(matches!(refine_minimum(&bumpy), Err(Error::NotUnimodal { .. })));
    }

    #[test]
    fn quadratic_fit_recovers_coefficients() {
        let x: Vec<f64> = (0..9).map(|i| i as f64 * 0.3 - 1.0).collect();
        let y: Vec<f64> = x.iter().map(|x| 2.0 * x * x - 0.5 * x + 3.0).collect();
        let [a, b, c] = quadratic_fit(&x, &y).unwrap();
        assert!((a - 2.0).abs() < 1e-10 && (b + 0.5).abs() < 1e-10 && (c - 3.0).abs() < 1e-10);
    }

    #[test]
    fn eye_closure_exact_line() {
        let pts: Vec<(f64, f64)> = (1..=6)
            .map(|i| {
                let x = 0.01 * i as f64;
                (x, (0.01 + x) / 0.9)
            })
            .collect();
        let f = eye_closure_fit(&pts).unwrap();
        assert!((f.ec - 0.9).abs() < 1e-12 && (f.nsr_trx - 0.01).abs() < 1e-12);
        assert!(f.residual < 1e-12);
        assert!(eye_closure_fit(&[(0.1, 0.2), (0.1, 0.3)]).is_err());
        assert!(eye_closure_fit(&[(0.1, 0.2)]).is_err());
    }
}
