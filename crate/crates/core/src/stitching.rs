//! Notch-sweep execution and spectral stitching.
//!
//! Each trace exposes the chain's floor inside its notch. Every bin of the
//! band of interest is owned by exactly one trace (the one in whose notch the
//! bin sits deepest); owners contribute the floor, bins too close to a notch
//! edge are filled by interpolation, and the signal is recovered from a
//! partner trace that is not notched at the bin:
//!
//! `S(f) = (RX_partner(f) - NFL(f)) · Norm_partner`.

use alloc::vec;
use alloc::vec::Vec;

use crate::chain::{reference_psd, simulate_capture, CaptureSetup, ImpairmentConfig, InterfaceStage, MeasurementTrace};
use crate::error::{Error, Result};
use crate::grid::{Band, FrequencyGrid};
use crate::perturbation::{apply_perturbation, build_filter, BandOfInterest, NotchKind, NotchSpec};
use crate::psd::{PowerSpectrum, WelchPlan};
use crate::rng::{self, f64_tag};
use crate::waveform::ComplexWaveform;
use crate::db;

/// Error in dB above which the small-notch shortcut is reported unsafe.
pub const SMALL_NOTCH_LIMIT_DB: f64 = 0.5;

/// An ordered list of notches swept across the band of interest.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StitchPlan {
    pub boi: BandOfInterest,
    pub kind: NotchKind,
    pub notches: Vec<NotchSpec>,
}

impl StitchPlan {
    pub fn new(boi: BandOfInterest, notches: Vec<NotchSpec>) -> Result<Self> {
        let kind = notches
            .first()
            .ok_or_else(|| Error::Plan("plan has no notches".into()))?
            .kind;
        if notches.iter().any(|n| n.kind != kind) {
            return Err(Error::Plan("single and dual notches cannot be mixed".into()));
        }
        Ok(StitchPlan { boi, kind, notches })
    }

    /// Dual notches of width `nw` tiling `(0, max(|lo|, |hi|)]`; the mirrors
    /// cover the negative side.
    pub fn dual_sweep(boi: BandOfInterest, nw: f64) -> Result<Self> {
        if !(nw > 0.0) {
            return Err(Error::Plan("notch width must be positive".into()));
        }
        let half = libm::fmax(libm::fabs(boi.f_lo), libm::fabs(boi.f_hi));
        let count = libm::ceil(half / nw - 1e-9) as usize;
        let notches = (0..count)
            .map(|i| NotchSpec::dual(nw / 2.0 + i as f64 * nw, nw))
            .collect();
        Self::new(boi, notches)
    }

    /// Single notches of width `nw` tiling the whole band from its low edge.
    pub fn single_sweep(boi: BandOfInterest, nw: f64) -> Result<Self> {
        if !(nw > 0.0) {
            return Err(Error::Plan("notch width must be positive".into()));
        }
        let count = libm::ceil(boi.width() / nw - 1e-9) as usize;
        let notches = (0..count)
            .map(|i| NotchSpec::single(boi.f_lo + nw / 2.0 + i as f64 * nw, nw))
            .collect();
        Self::new(boi, notches)
    }

    /// Parts of the band of interest that no notch (or mirror) covers.
    pub fn uncovered(&self) -> Vec<Band> {
        let mut regions: Vec<Band> = self.notches.iter().flat_map(|n| n.notched_regions()).collect();
        regions.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        let tol = 1e-9 * self.boi.width();
        let mut gaps = Vec::new();
        let mut reach = self.boi.f_lo;
        for r in &regions {
            if r.lo > reach + tol && reach < self.boi.f_hi {
                gaps.push(Band {
                    lo: reach,
                    hi: libm::fmin(r.lo, self.boi.f_hi),
                });
            }
            reach = libm::fmax(reach, r.hi);
        }
        if reach < self.boi.f_hi - tol {
            gaps.push(Band {
                lo: reach,
                hi: self.boi.f_hi,
            });
        }
        gaps
    }

    /// Checks notch validity, that every notch reaches into the band of
    /// interest (the last notch of a sweep may overhang its edge), coverage,
    /// and that no two notches overlap by more than `bin_width`.
    pub fn validate(&self, bin_width: f64) -> Result<()> {
        if self.notches.is_empty() {
            return Err(Error::Plan("plan has no notches".into()));
        }
        for (i, n) in self.notches.iter().enumerate() {
            n.validate().map_err(|e| Error::Plan(alloc::format!("notch {i}: {e}")))?;
            if n.kind != self.kind {
                return Err(Error::Plan(alloc::format!("notch {i} has the wrong kind")));
            }
            let r = n.region();
            if !(r.lo < self.boi.f_hi && r.hi > self.boi.f_lo) {
                return Err(Error::Plan(alloc::format!(
                    "notch {i} at {} Hz (width {} Hz) lies outside the band of interest",
                    n.center_nc,
                    n.width_nw
                )));
            }
        }
        if let Some(g) = self.uncovered().first() {
            return Err(Error::Plan(alloc::format!(
                "band of interest not covered over ({}, {}] Hz",
                g.lo,
                g.hi
            )));
        }
        for (i, a) in self.notches.iter().enumerate() {
            for (j, b) in self.notches.iter().enumerate().skip(i + 1) {
                for ra in a.notched_regions() {
                    for rb in b.notched_regions() {
                        let overlap = libm::fmin(ra.hi, rb.hi) - libm::fmax(ra.lo, rb.lo);
                        if overlap > bin_width * (1.0 + 1e-9) {
                            return Err(Error::Plan(alloc::format!(
                                "notches {i} and {j} overlap by {overlap} Hz (more than one {bin_width} Hz bin)"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct StitchOptions {
    /// Bins dropped next to each notch edge.
    pub guard_bins: usize,
    /// Transmitter normalization loop.
    pub normalize: bool,
}

impl Default for StitchOptions {
    fn default() -> Self {
        StitchOptions {
            guard_bins: 2,
            normalize: true,
        }
    }
}

impl StitchOptions {
    pub fn clearance(&self, bin_width: f64) -> f64 {
        (self.guard_bins as f64 + 0.5) * bin_width * (1.0 - 1e-9)
    }
}

/// Noise-stream tag of a notch. Keyed on geometry so that reordering a plan
/// does not change any trace.
pub fn notch_tag(n: &NotchSpec) -> u64 {
    let kind = match n.kind {
        NotchKind::Single => 1,
        NotchKind::Dual => 2,
    };
    rng::derive(kind, &[f64_tag(n.center_nc), f64_tag(n.width_nw)])
}

/// Perturbs, transmits and captures one trace per notch.
pub fn run_plan(
    plan: &StitchPlan,
    wfm_org: &ComplexWaveform,
    cfg: &ImpairmentConfig,
    setup: &CaptureSetup,
    opts: &StitchOptions,
) -> Result<Vec<MeasurementTrace>> {
    let welch = WelchPlan::for_resolution_with(wfm_org.len(), wfm_org.sample_rate(), setup.rbw, setup.window)?;
    plan.validate(welch.bin_width())?;
    if setup.stage == InterfaceStage::E2E && plan.kind == NotchKind::Single {
        return Err(Error::Plan(
            "single notches are not observable on a one-sided real capture".into(),
        ));
    }
    cfg.validate()?;
    let grid = wfm_org.transform_grid();
    plan.notches
        .iter()
        .map(|n| {
            let filter = build_filter(n, &grid, f64::NEG_INFINITY)?;
            let p = apply_perturbation(wfm_org, &filter, opts.normalize, &plan.boi)?;
            simulate_capture(&p, cfg, setup, notch_tag(n))
        })
        .collect()
}

/// The notched bands of a trace, with touching or overlapping bands merged.
fn merged_notch_bands(t: &MeasurementTrace) -> Vec<Band> {
    let Some(s) = &t.snapped else {
        return Vec::new();
    };
    let mut bands = s.notched_bands();
    bands.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    let tol = 1e-6 * t.spectrum.grid.f_step;
    let mut out: Vec<Band> = Vec::new();
    for b in bands {
        match out.last_mut() {
            Some(last) if b.lo <= last.hi + tol => last.hi = libm::fmax(last.hi, b.hi),
            _ => out.push(b),
        }
    }
    out
}

/// Depth of `f` inside the trace's notch (0 when not notched).
fn depth(bands: &[Band], f: f64) -> f64 {
    bands
        .iter()
        .filter(|b| b.contains(f))
        .map(|b| libm::fmin(f - b.lo, b.hi - f))
        .fold(0.0, f64::max)
}

fn distance(bands: &[Band], f: f64) -> f64 {
    bands.iter().map(|b| b.distance(f)).fold(f64::INFINITY, f64::min)
}

fn check_traces(traces: &[MeasurementTrace]) -> Result<FrequencyGrid> {
    let first = traces
        .first()
        .ok_or_else(|| Error::Plan("no traces to stitch".into()))?;
    for t in traces {
        if !t.spectrum.grid.same_as(&first.spectrum.grid) {
            return Err(Error::Grid("traces were captured on different grids".into()));
        }
        if t.stage != first.stage {
            return Err(Error::Plan("traces come from different interface stages".into()));
        }
        if !(t.norm > 0.0 && t.norm <= 1.0 + 1e-12) {
            return Err(Error::Normalization(alloc::format!("trace norm {} outside (0, 1]", t.norm)));
        }
    }
    Ok(first.spectrum.grid)
}

/// Indices of the grid bins that fall in the band of interest.
fn boi_bins(grid: &FrequencyGrid, boi: &BandOfInterest) -> Result<(usize, usize)> {
    let bins: Vec<usize> = (0..grid.n_bins).filter(|&k| boi.contains(grid.freq(k))).collect();
    match (bins.first(), bins.last()) {
        (Some(&a), Some(&b)) if b > a => Ok((a, b + 1)),
        _ => Err(Error::Region("band of interest holds fewer than two bins".into())),
    }
}

/// Stitched noise floor over the band of interest.
#[derive(Debug, Clone, PartialEq)]
pub struct StitchedNfl {
    /// Absolute PSD on the band-of-interest sub-grid.
    pub spectrum: PowerSpectrum,
    /// Owning trace per bin (index into the trace list).
    pub owner: Vec<usize>,
    /// Bins within the guard of every covering notch, filled by
    /// interpolation between neighbouring measured bins.
    pub interpolated: Vec<bool>,
    /// 0 dB level of relative spectra.
    pub reference_psd: f64,
}

impl StitchedNfl {
    /// Floor in dB relative to the mean signal PSD.
    pub fn relative_db(&self) -> Vec<f64> {
        self.spectrum.psd.iter().map(|p| db(p / self.reference_psd)).collect()
    }
}

/// Assembles the noise floor from the notch bands of `traces`.
pub fn stitch_nfl(
    traces: &[MeasurementTrace],
    boi: &BandOfInterest,
    opts: &StitchOptions,
) -> Result<StitchedNfl> {
    let grid = check_traces(traces)?;
    let (k0, k1) = boi_bins(&grid, boi)?;
    let clearance = opts.clearance(grid.f_step);
    let bands: Vec<Vec<Band>> = traces.iter().map(merged_notch_bands).collect();
    // stable tie-break independent of list order
    let mut order: Vec<usize> = (0..traces.len()).collect();
    order.sort_by(|&a, &b| notch_key(&traces[a]).total_cmp(&notch_key(&traces[b])));

    let n = k1 - k0;
    let mut value = vec![f64::NAN; n];
    let mut owner = vec![usize::MAX; n];
    let mut missing = Vec::new();
    for i in 0..n {
        let k = k0 + i;
        let f = grid.freq(k);
        let mut best: Option<(usize, f64)> = None;
        for &t in &order {
            let d = depth(&bands[t], f);
            if d > 0.0 && best.is_none_or(|(_, bd)| d > bd * (1.0 + 1e-9)) {
                best = Some((t, d));
            }
        }
        match best {
            None => missing.push(f),
            Some((t, d)) => {
                owner[i] = t;
                if d >= clearance {
                    value[i] = traces[t].spectrum.psd[k];
                }
            }
        }
    }
    if let Some(&first) = missing.first() {
        return Err(Error::Coverage {
            first_missing_hz: first,
            missing,
        });
    }
    let interpolated: Vec<bool> = value.iter().map(|v| v.is_nan()).collect();
    fill_linear(&mut value).ok_or_else(|| {
        Error::Plan("every covered bin lies within the guard; widen the notches or refine the resolution".into())
    })?;
    let averages = traces.iter().map(|t| t.spectrum.averages).min().unwrap_or(0);
    let sub = FrequencyGrid {
        f_start: grid.freq(k0),
        f_step: grid.f_step,
        n_bins: n,
    };
    Ok(StitchedNfl {
        spectrum: PowerSpectrum {
            grid: sub,
            psd: value,
            resolution_bw: traces[0].spectrum.resolution_bw,
            averages,
        },
        owner,
        interpolated,
        reference_psd: traces[order[0]].reference_psd,
    })
}

fn notch_key(t: &MeasurementTrace) -> f64 {
    t.snapped.map_or(f64::INFINITY, |s| s.primary.center())
}

/// Fills NaN runs by linear interpolation between the nearest finite values,
/// holding the end values flat. `None` if nothing is finite.
fn fill_linear(v: &mut [f64]) -> Option<()> {
    let known: Vec<usize> = (0..v.len()).filter(|&i| !v[i].is_nan()).collect();
    let (&first, &last) = (known.first()?, known.last()?);
    for i in 0..first {
        v[i] = v[first];
    }
    for i in last + 1..v.len() {
        v[i] = v[last];
    }
    for w in known.windows(2) {
        let (a, b) = (w[0], w[1]);
        for i in a + 1..b {
            let t = (i - a) as f64 / (b - a) as f64;
            v[i] = v[a] + t * (v[b] - v[a]);
        }
    }
    Some(())
}

/// Clean signal PSD recovered from partner traces.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredSignal {
    pub spectrum: PowerSpectrum,
    /// Partner trace per bin.
    pub partner: Vec<usize>,
    /// Bins where the partner fell below the floor and the result was
    /// clamped to zero.
    pub clamped: Vec<bool>,
}

/// Per bin, picks the trace whose notches are farthest away and removes the
/// stitched floor from it, undoing the partner's normalization.
pub fn recover_signal_psd(
    traces: &[MeasurementTrace],
    nfl: &StitchedNfl,
    opts: &StitchOptions,
) -> Result<RecoveredSignal> {
    let grid = check_traces(traces)?;
    let sub = nfl.spectrum.grid;
    let k0 = grid
        .offset_of(&sub)
        .ok_or_else(|| Error::Grid("noise floor grid is not a sub-grid of the traces".into()))?;
    let clearance = opts.clearance(grid.f_step);
    let bands: Vec<Vec<Band>> = traces.iter().map(merged_notch_bands).collect();
    let mut order: Vec<usize> = (0..traces.len()).collect();
    order.sort_by(|&a, &b| notch_key(&traces[a]).total_cmp(&notch_key(&traces[b])));

    let mut psd = Vec::with_capacity(sub.n_bins);
    let mut partner = Vec::with_capacity(sub.n_bins);
    let mut clamped = Vec::with_capacity(sub.n_bins);
    for i in 0..sub.n_bins {
        let k = k0 + i;
        let f = grid.freq(k);
        let mut best: Option<(usize, f64)> = None;
        for &t in &order {
            let d = distance(&bands[t], f);
            if best.is_none_or(|(_, bd)| d > bd * (1.0 + 1e-9)) {
                best = Some((t, d));
            }
        }
        let (t, d) = best.ok_or(Error::Pairing { freq_hz: f })?;
        if d < clearance {
            return Err(Error::Pairing { freq_hz: f });
        }
        let diff = (traces[t].spectrum.psd[k] - nfl.spectrum.psd[i]) * traces[t].applied_norm();
        partner.push(t);
        clamped.push(diff < 0.0);
        psd.push(libm::fmax(diff, 0.0));
    }
    let averages = order.iter().map(|&t| traces[t].spectrum.averages).min().unwrap_or(0);
    Ok(RecoveredSignal {
        spectrum: PowerSpectrum {
            grid: sub,
            psd,
            resolution_bw: nfl.spectrum.resolution_bw,
            averages,
        },
        partner,
        clamped,
    })
}

/// Frequency-resolved signal-to-noise-and-distortion ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct SndrProfile {
    pub grid: FrequencyGrid,
    /// `+inf` where the floor is exactly zero under a signal, NaN where both
    /// vanish.
    pub sndr_db: Vec<f64>,
    pub nfl: PowerSpectrum,
    pub signal: PowerSpectrum,
}

impl SndrProfile {
    /// Mean SNDR over the finite bins, computed on the power ratio.
    pub fn mean_db(&self) -> f64 {
        let (s, n) = self
            .signal
            .psd
            .iter()
            .zip(&self.nfl.psd)
            .filter(|(_, n)| **n > 0.0)
            .fold((0.0, 0.0), |(a, b), (s, n)| (a + s, b + n));
        db(s / n)
    }
}

pub fn compute_sndr(signal: &PowerSpectrum, nfl: &PowerSpectrum) -> Result<SndrProfile> {
    if !signal.grid.same_as(&nfl.grid) {
        return Err(Error::Grid("signal and noise floor grids differ".into()));
    }
    let sndr_db = signal
        .psd
        .iter()
        .zip(&nfl.psd)
        .map(|(&s, &n)| match (s > 0.0, n > 0.0) {
            (_, true) => db(s / n),
            (true, false) => f64::INFINITY,
            (false, false) => f64::NAN,
        })
        .collect();
    Ok(SndrProfile {
        grid: signal.grid,
        sndr_db,
        nfl: nfl.clone(),
        signal: signal.clone(),
    })
}

/// How much the `Norm ≈ 1` shortcut would have cost.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SmallNotchReport {
    /// `max |1 - Norm_i|`.
    pub max_norm_deviation: f64,
    /// Worst signal-level error of skipping the `Norm` factor, dB.
    pub worst_error_db: f64,
    pub unsafe_approximation: bool,
}

pub fn small_notch_check(traces: &[MeasurementTrace]) -> SmallNotchReport {
    let min_norm = traces.iter().map(|t| t.norm).fold(1.0, f64::min);
    let max_dev = traces.iter().map(|t| libm::fabs(1.0 - t.norm)).fold(0.0, f64::max);
    let worst = -db(min_norm);
    SmallNotchReport {
        max_norm_deviation: max_dev,
        worst_error_db: worst,
        unsafe_approximation: worst > SMALL_NOTCH_LIMIT_DB,
    }
}

/// The injected floor on `grid`, in absolute PSD units.
pub fn injected_floor(grid: &FrequencyGrid, cfg: &ImpairmentConfig, stage: InterfaceStage, reference: f64) -> PowerSpectrum {
    PowerSpectrum {
        grid: *grid,
        psd: grid.freqs().map(|f| cfg.floor_reported(f, stage) * reference).collect(),
        resolution_bw: grid.f_step,
        averages: 0,
    }
}

/// PSD of the unimpaired, unperturbed instruction as the given capture would
/// see it, restricted to `sub` (a sub-grid of the capture grid).
pub fn instruction_psd(wfm_org: &ComplexWaveform, boi: &BandOfInterest, setup: &CaptureSetup, sub: &FrequencyGrid) -> Result<PowerSpectrum> {
    let p = crate::perturbation::Perturbed::unperturbed(wfm_org.clone(), *boi);
    let clean = CaptureSetup { captures: 1, ..*setup };
    let t = simulate_capture(&p, &ImpairmentConfig::default(), &clean, 0)?;
    let k0 = t
        .spectrum
        .grid
        .offset_of(sub)
        .ok_or_else(|| Error::Grid("requested grid is not a sub-grid of the capture".into()))?;
    Ok(PowerSpectrum {
        grid: *sub,
        psd: t.spectrum.psd[k0..k0 + sub.n_bins].to_vec(),
        resolution_bw: t.spectrum.resolution_bw,
        averages: t.spectrum.averages,
    })
}

/// Mean BOI signal PSD of an instruction, the 0 dB level of relative output.
pub fn reference_level(wfm_org: &ComplexWaveform, boi: &BandOfInterest, setup: &CaptureSetup) -> Result<f64> {
    reference_psd(&crate::perturbation::Perturbed::unperturbed(wfm_org.clone(), *boi), setup.pol)
}

/// RMS of the dB difference between two spectra on the same grid, over bins
/// where both are positive.
pub fn rms_db_error(estimate: &PowerSpectrum, truth: &PowerSpectrum) -> Result<f64> {
    if !estimate.grid.same_as(&truth.grid) {
        return Err(Error::Grid("spectra compared on different grids".into()));
    }
    let d: Vec<f64> = estimate
        .psd
        .iter()
        .zip(&truth.psd)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| db(a / b))
        .collect();
    if d.is_empty() {
        return Err(Error::Region("no comparable bins".into()));
    }
    Ok(libm::sqrt(d.iter().map(|x| x * x).sum::<f64>() / d.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::{generate_rrc_qpsk, QpskParams};

    fn boi() -> BandOfInterest {
        BandOfInterest::symmetric(44e9).unwrap()
    }

    #[test]
    fn dual_sweep_count_and_coverage() {
        let p = StitchPlan::dual_sweep(boi(), 2e9).unwrap();
        assert_eq!(p.notches.len(), 22);
        assert!(p.uncovered().is_empty());
        p.validate(200e6).unwrap();
        let s = StitchPlan::single_sweep(boi(), 4e9).unwrap();
        assert_eq!(s.notches.len(), 22);
        s.validate(200e6).unwrap();
    }

    #[test]
    fn gap_is_reported() {
        let mut p = StitchPlan::dual_sweep(boi(), 2e9).unwrap();
        p.notches.remove(5); // (10, 12] GHz and its mirror
        let gaps = p.uncovered();
        assert_eq!(gaps.len(), 2);
        assert!((gaps[1].lo - 10e9).abs() < 1.0 && (gaps[1].hi - 12e9).abs() < 1.0);
        match p.validate(200e6) {
            Err(Error::Plan(msg)) => assert!(msg.contains("not covered")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn overlap_and_containment_rules() {
        let b = BandOfInterest::symmetric(4e9).unwrap();
        let ok = StitchPlan::new(b, vec![NotchSpec::dual(1e9, 2e9), NotchSpec::dual(2.9e9, 2.2e9)]).unwrap();
        ok.validate(200e6).unwrap();
        let bad = StitchPlan::new(b, vec![NotchSpec::dual(1e9, 2e9), NotchSpec::dual(2.5e9, 3e9)]).unwrap();
        assert!(bad.validate(200e6).is_err());
        let outside = StitchPlan::new(b, vec![NotchSpec::dual(1e9, 2e9), NotchSpec::dual(3e9, 2e9), NotchSpec::dual(5e9, 1e9)]).unwrap();
        match outside.validate(200e6) {
            Err(Error::Plan(m)) => assert!(m.contains("notch 2")),
            other => panic!("{other:?}"),
        }
        assert!(StitchPlan::new(b, vec![NotchSpec::dual(1e9, 2e9), NotchSpec::single(3e9, 2e9)]).is_err());
    }

    #[test]
    fn fill_linear_interpolates_and_holds() {
        let mut v = [f64::NAN, 1.0, f64::NAN, f64::NAN, 4.0, f64::NAN];
        fill_linear(&mut v).unwrap();
        assert_eq!(v, [1.0, 1.0, 2.0, 3.0, 4.0, 4.0]);
        assert!(fill_linear(&mut [f64::NAN]).is_none());
    }

    #[test]
    fn sndr_sentinels() {
        let g = FrequencyGrid::new(0.0, 1.0, 3).unwrap();
        let s = PowerSpectrum::new(g, vec![1.0, 1.0, 0.0], 1.0).unwrap();
        let n = PowerSpectrum::new(g, vec![1.0, 0.0, 0.0], 1.0).unwrap();
        let p = compute_sndr(&s, &n).unwrap();
        assert_eq!(p.sndr_db[0], 0.0);
        assert_eq!(p.sndr_db[1], f64::INFINITY);
        assert!(p.sndr_db[2].is_nan());
    }

    #[test]
    fn noiseless_plan_round_trip() {
        let w = generate_rrc_qpsk(&QpskParams {
            n_symbols: 4096,
            ..Default::default()
        })
        .unwrap();
        let b = BandOfInterest::symmetric(44e9).unwrap();
        let plan = StitchPlan::dual_sweep(b, 4e9).unwrap();
        let hann = CaptureSetup {
            rbw: 200e6,
            ..Default::default()
        };
        let opts = StitchOptions::default();
        let traces = run_plan(&plan, &w, &ImpairmentConfig::default(), &hann, &opts).unwrap();
        assert_eq!(traces.len(), 11);
        let nfl = stitch_nfl(&traces, &b, &opts).unwrap();
        let worst = nfl.relative_db().into_iter().fold(f64::NEG_INFINITY, f64::max);
        std::println!("noiseless stitched floor, Hann, 2 guard bins: {worst:.1} dB");
        assert!(worst < -30.0);
        let sig = recover_signal_psd(&traces, &nfl, &opts).unwrap();
        let truth = instruction_psd(&w, &b, &hann, &sig.spectrum.grid).unwrap();
        for (a, t) in sig.spectrum.psd.iter().zip(&truth.psd) {
            assert!((a / t - 1.0).abs() < 1e-3);
        }

        // low-sidelobe window and a wider guard reach the numerical floor
        let bh = CaptureSetup {
            window: crate::psd::Window::BlackmanHarris,
            ..hann
        };
        let wide = StitchOptions {
            guard_bins: 4,
            ..opts
        };
        let traces = run_plan(&plan, &w, &ImpairmentConfig::default(), &bh, &wide).unwrap();
        let nfl = stitch_nfl(&traces, &b, &wide).unwrap();
        let worst = nfl.relative_db().into_iter().fold(f64::NEG_INFINITY, f64::max);
        std::println!("noiseless stitched floor, Blackman-Harris, 4 guard bins: {worst:.1} dB");
        assert!(worst <= -80.0);
    }
}
