//! Notch perturbation filters and the transmitter normalization loop.
//!
//! A perturbation is a real, non-negative gain mask over the complex
//! spectrum of the instruction. A notch sets the gain to zero on its band.
//! Zeroing only `F_N` of the complex spectrum is what makes a *single*
//! notch: with `X_I(f) = (X(f) + X*(-f))/2` and `jX_Q(f) = (X(f) - X*(-f))/2`,
//! `X(f) = 0` forces `X_I = -jX_Q` on `F_N` and `X_I = +jX_Q` on `F_{-N}`.
//! A *dual* notch zeroes both bands, so `X_I = X_Q = 0` on each.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fft::Fft;
use crate::grid::{Band, FrequencyGrid};
use crate::waveform::{centered_index, fft_freq, filter_spectrum, ComplexWaveform};
use crate::Complex;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum NotchKind {
    Single,
    Dual,
}

/// Declarative notch geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NotchSpec {
    pub kind: NotchKind,
    /// Center of `F_N`, Hz. Dual notches use `|center_nc|`.
    pub center_nc: f64,
    /// Width of each notched band, Hz.
    pub width_nw: f64,
}

impl NotchSpec {
    pub fn single(center_nc: f64, width_nw: f64) -> Self {
        NotchSpec {
            kind: NotchKind::Single,
            center_nc,
            width_nw,
        }
    }

    pub fn dual(center_nc: f64, width_nw: f64) -> Self {
        NotchSpec {
            kind: NotchKind::Dual,
            center_nc: libm::fabs(center_nc),
            width_nw,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width_nw > 0.0) || !self.width_nw.is_finite() || !self.center_nc.is_finite() {
            return Err(Error::Geometry(alloc::format!(
                "notch width must be positive, got {}",
                self.width_nw
            )));
        }
        Ok(())
    }

    /// The continuous region `F_N = (NC - NW/2, NC + NW/2]` before snapping.
    pub fn region(&self) -> Band {
        let c = match self.kind {
            NotchKind::Single => self.center_nc,
            NotchKind::Dual => libm::fabs(self.center_nc),
        };
        Band {
            lo: c - self.width_nw / 2.0,
            hi: c + self.width_nw / 2.0,
        }
    }

    /// Every continuous band this notch zeroes (the mirror too for duals).
    pub fn notched_regions(&self) -> Vec<Band> {
        let r = self.region();
        match self.kind {
            NotchKind::Single => vec![r],
            NotchKind::Dual => vec![r, r.mirrored()],
        }
    }

    /// Snaps the region to bin boundaries of `grid`: bins whose centers lie
    /// in `(lo, hi]` are inside. The mirror band is the exact negative of the
    /// snapped band. A dual notch whose region starts at (or below) DC also
    /// takes the DC bin, which keeps the pair contiguous and symmetric.
    pub fn snap(&self, grid: &FrequencyGrid) -> Result<SnappedNotch> {
        self.validate()?;
        let region = self.region();
        let df = grid.f_step;
        let pos = |f: f64| {
            let x = (f - grid.f_start) / df;
            let r = libm::round(x);
            if libm::fabs(x - r) < 1e-9 {
                r
            } else {
                x
            }
        };
        let mut j_lo = libm::floor(pos(region.lo)) + 1.0;
        let j_hi = libm::floor(pos(region.hi));
        if self.kind == NotchKind::Dual && region.lo <= 1e-9 * df {
            j_lo = j_lo.min(libm::round(pos(0.0)));
        }
        if j_hi < j_lo {
            return Err(Error::Geometry(alloc::format!(
                "notch {:?} is narrower than one bin of {} Hz",
                self,
                df
            )));
        }
        let primary = Band {
            lo: grid.f_start + (j_lo - 0.5) * df,
            hi: grid.f_start + (j_hi + 0.5) * df,
        };
        let mirror = primary.mirrored();
        let (span_lo, span_hi) = grid.span();
        let inside = |b: &Band| b.lo >= span_lo - 0.5 * df - 1e-6 * df && b.hi <= span_hi + 0.5 * df + 1e-6 * df;
        if !inside(&primary) || !inside(&mirror) {
            return Err(Error::Geometry(alloc::format!(
                "notch at {} Hz (width {} Hz) exceeds the grid [{}, {}] Hz",
                self.center_nc,
                self.width_nw,
                span_lo,
                span_hi
            )));
        }
        Ok(SnappedNotch {
            kind: self.kind,
            primary,
            mirror,
        })
    }
}

/// Notch bands after snapping to a transform grid. Band edges are bin
/// boundaries, so membership of any bin center is unambiguous.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SnappedNotch {
    pub kind: NotchKind,
    /// `F_N`.
    pub primary: Band,
    /// `F_{-N}`; notched only for dual notches.
    pub mirror: Band,
}

impl SnappedNotch {
    pub fn notched_bands(&self) -> Vec<Band> {
        match self.kind {
            NotchKind::Single => vec![self.primary],
            NotchKind::Dual => vec![self.primary, self.mirror],
        }
    }

    pub fn is_notched(&self, f: f64) -> bool {
        self.primary.contains(f) || (self.kind == NotchKind::Dual && self.mirror.contains(f))
    }

    /// Distance from `f` to the nearest notched band.
    pub fn distance(&self, f: f64) -> f64 {
        self.notched_bands()
            .iter()
            .map(|b| b.distance(f))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Frequency span occupied by the transmitted signal, `(lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BandOfInterest {
    pub f_lo: f64,
    pub f_hi: f64,
}

impl BandOfInterest {
    pub fn new(f_lo: f64, f_hi: f64) -> Result<Self> {
        Band::new(f_lo, f_hi)?;
        Ok(BandOfInterest { f_lo, f_hi })
    }

    /// Symmetric band `(-half_width, half_width]`.
    pub fn symmetric(half_width: f64) -> Result<Self> {
        Self::new(-half_width, half_width)
    }

    pub fn band(&self) -> Band {
        Band {
            lo: self.f_lo,
            hi: self.f_hi,
        }
    }

    pub fn width(&self) -> f64 {
        self.f_hi - self.f_lo
    }

    #[inline]
    pub fn contains(&self, f: f64) -> bool {
        f > self.f_lo && f <= self.f_hi
    }

    /// Whether every continuous notched region lies inside the band.
    pub fn contains_notch(&self, n: &NotchSpec) -> bool {
        let tol = 1e-9 * self.width();
        n.notched_regions()
            .iter()
            .all(|r| r.lo >= self.f_lo - tol && r.hi <= self.f_hi + tol)
    }
}

/// Real, non-negative gain (amplitude `sqrt(G)`) per bin of a transform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationFilter {
    pub grid: FrequencyGrid,
    pub gain: Vec<f64>,
    /// Perturbed regions and their power gain `G`; everything else is 1.
    pub regions: Vec<(Band, f64)>,
    pub notch: Option<(NotchSpec, SnappedNotch)>,
}

impl PerturbationFilter {
    pub fn identity(grid: FrequencyGrid) -> Self {
        PerturbationFilter {
            grid,
            gain: vec![1.0; grid.n_bins],
            regions: Vec::new(),
            notch: None,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.gain.iter().all(|g| *g == 1.0)
    }
}

/// Builds the gain mask for `spec` on `grid`. `gain_db = -inf` gives exact
/// zeros.
pub fn build_filter(spec: &NotchSpec, grid: &FrequencyGrid, gain_db: f64) -> Result<PerturbationFilter> {
    if gain_db.is_nan() || gain_db == f64::INFINITY {
        return Err(Error::param("notch gain must be finite or -inf dB"));
    }
    let snapped = spec.snap(grid)?;
    let amp = if gain_db == f64::NEG_INFINITY {
        0.0
    } else {
        libm::pow(10.0, gain_db / 20.0)
    };
    let bands = snapped.notched_bands();
    let gain: Vec<f64> = grid
        .freqs()
        .map(|f| if bands.iter().any(|b| b.contains(f)) { amp } else { 1.0 })
        .collect();
    if gain.iter().all(|g| *g == 0.0) {
        return Err(Error::Geometry("notch removes the entire grid".into()));
    }
    Ok(PerturbationFilter {
        grid: *grid,
        gain,
        regions: bands.into_iter().map(|b| (b, amp * amp)).collect(),
        notch: Some((*spec, snapped)),
    })
}

fn check_grid(wfm: &ComplexWaveform, filter: &PerturbationFilter) -> Result<()> {
    if !filter.grid.same_as(&wfm.transform_grid()) {
        return Err(Error::Grid(
            "filter grid differs from the waveform transform grid".into(),
        ));
    }
    Ok(())
}

/// `Norm = ∫_BOI |H·X|² df / ∫_BOI |X|² df`, summed over polarizations.
pub fn normalization_factor(
    wfm_org: &ComplexWaveform,
    filter: &PerturbationFilter,
    boi: &BandOfInterest,
) -> Result<f64> {
    check_grid(wfm_org, filter)?;
    let n = wfm_org.len();
    let df = wfm_org.sample_rate() / n as f64;
    let plan = Fft::new(n);
    let (mut kept, mut total) = (0.0, 0.0);
    for s in wfm_org.pols() {
        let mut buf = s.to_vec();
        plan.forward(&mut buf);
        for (k, v) in buf.iter().enumerate() {
            if boi.contains(fft_freq(k, n, df)) {
                let p = v.norm_sqr();
                let g = filter.gain[centered_index(k, n)];
                total += p;
                kept += g * g * p;
            }
        }
    }
    if !(total > 0.0) {
        return Err(Error::Normalization("original waveform has no power in the band of interest".into()));
    }
    if !(kept > 0.0) {
        return Err(Error::Normalization("perturbation removes all power in the band of interest".into()));
    }
    Ok(kept / total)
}

/// A perturbed instruction together with what was done to it.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbed {
    pub wfm: ComplexWaveform,
    pub notch: Option<(NotchSpec, SnappedNotch)>,
    /// Notched over original power in the band of interest.
    pub norm: f64,
    /// Whether samples were rescaled by `1/sqrt(norm)`.
    pub normalized: bool,
    pub boi: BandOfInterest,
}

impl Perturbed {
    /// Factor the signal PSD was divided by on its way out of the
    /// transmitter (`norm` with the loop on, 1 without).
    pub fn applied_norm(&self) -> f64 {
        if self.normalized {
            self.norm
        } else {
            1.0
        }
    }

    /// An unperturbed instruction.
    pub fn unperturbed(wfm: ComplexWaveform, boi: BandOfInterest) -> Self {
        Perturbed {
            wfm,
            notch: None,
            norm: 1.0,
            normalized: false,
            boi,
        }
    }
}

/// Multiplies the full spectrum by the filter (circular semantics) and,
/// when `normalize` is set, rescales so the BOI power is unchanged.
pub fn apply_perturbation(
    wfm_org: &ComplexWaveform,
    filter: &PerturbationFilter,
    normalize: bool,
    boi: &BandOfInterest,
) -> Result<Perturbed> {
    check_grid(wfm_org, filter)?;
    let norm = normalization_factor(wfm_org, filter, boi)?;
    let n = wfm_org.len();
    let df = wfm_org.sample_rate() / n as f64;
    let plan = Fft::new(n);
    let scale = if normalize { 1.0 / libm::sqrt(norm) } else { 1.0 };
    let wfm = wfm_org.map_pols(|s| {
        filter_spectrum(&plan, s, df, |k, _| {
            Complex::new(filter.gain[centered_index(k, n)] * scale, 0.0)
        })
    })?;
    Ok(Perturbed {
        wfm,
        notch: filter.notch,
        norm,
        normalized: normalize,
        boi: *boi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fft::fft;
    use crate::rng;

    // 1024 bins of 100 MHz, DC at bin 512
    fn grid() -> FrequencyGrid {
        FrequencyGrid::centered(1024, 102.4e9)
    }

    /// Flat magnitude spectrum with random phases over the whole grid.
    fn flat_waveform(seed: u64) -> ComplexWaveform {
        let n = 1024;
        let mut r = rng::stream(seed, &[]);
        let z = rng::complex_gaussian(&mut r, n, 1.0);
        let spec: Vec<Complex> = z.iter().map(|v| v / v.norm()).collect();
        ComplexWaveform::new(102.4e9, crate::fft::ifft(&spec), None).unwrap()
    }

    #[test]
    fn dual_notch_zeros_exactly_its_bands() {
        let g = grid();
        let f = build_filter(&NotchSpec::dual(15e9, 2e9), &g, f64::NEG_INFINITY).unwrap();
        for (k, fr) in g.freqs().enumerate() {
            let pos = fr > 14e9 + 1.0 && fr <= 16e9 + 1.0;
            let neg = fr >= -16e9 - 1.0 && fr < -14e9 - 1.0;
            assert_eq!(f.gain[k], if pos || neg { 0.0 } else { 1.0 }, "f={fr}");
        }
        assert_eq!(f.gain.iter().filter(|g| **g == 0.0).count(), 40);
        // symmetric about the carrier
        let dc = 512;
        for d in 1..511 {
            assert_eq!(f.gain[dc + d], f.gain[dc - d]);
        }
    }

    #[test]
    fn zero_db_is_identity_and_full_span_is_degenerate() {
        let g = grid();
        let f = build_filter(&NotchSpec::dual(15e9, 2e9), &g, 0.0).unwrap();
        assert!(f.is_identity());
        assert!(build_filter(&NotchSpec::single(0.0, 102.4e9), &g, f64::NEG_INFINITY).is_err());
        assert!(build_filter(&NotchSpec::single(0.0, 0.0), &g, f64::NEG_INFINITY).is_err());
        assert!(matches!(
            build_filter(&NotchSpec::single(60e9, 2e9), &g, f64::NEG_INFINITY),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn dual_notch_touching_dc_takes_the_dc_bin() {
        let g = grid();
        let f = build_filter(&NotchSpec::dual(1e9, 2e9), &g, f64::NEG_INFINITY).unwrap();
        assert_eq!(f.gain[512], 0.0);
        assert_eq!(f.gain.iter().filter(|g| **g == 0.0).count(), 41);
    }

    #[test]
    fn norm_for_flat_spectrum_is_retained_fraction() {
        let w = flat_waveform(1);
        let boi = BandOfInterest::symmetric(50e9).unwrap();
        let f = build_filter(&NotchSpec::dual(20e9, 2e9), &w.transform_grid(), f64::NEG_INFINITY).unwrap();
        let norm = normalization_factor(&w, &f, &boi).unwrap();
        assert!((norm - 0.96).abs() < 1e-12, "{norm}");
        let id = PerturbationFilter::identity(w.transform_grid());
        assert_eq!(normalization_factor(&w, &id, &boi).unwrap(), 1.0);
    }

    #[test]
    fn norm_undefined_without_power() {
        let w = ComplexWaveform::new(102.4e9, vec![Complex::new(0.0, 0.0); 1024], None).unwrap();
        let id = PerturbationFilter::identity(w.transform_grid());
        let boi = BandOfInterest::symmetric(10e9).unwrap();
        assert!(matches!(normalization_factor(&w, &id, &boi), Err(Error::Normalization(_))));
    }

    #[test]
    fn normalization_raises_passband_by_inverse_norm() {
        let w = flat_waveform(2);
        let boi = BandOfInterest::symmetric(50e9).unwrap();
        let f = build_filter(&NotchSpec::dual(20e9, 2e9), &w.transform_grid(), f64::NEG_INFINITY).unwrap();
        let p = apply_perturbation(&w, &f, true, &boi).unwrap();
        let a = fft(w.pol_x());
        let b = fft(p.wfm.pol_x());
        let k = 3; // 300 MHz, untouched
        let gain_db = 10.0 * libm::log10(b[k].norm_sqr() / a[k].norm_sqr());
        assert!((gain_db - 10.0 * libm::log10(1.0 / 0.96)).abs() < 1e-9);
        assert!((gain_db - 0.177).abs() < 1e-3);
    }

    #[test]
    fn single_notch_realizes_destructive_and_constructive_conditions() {
        let w = flat_waveform(3);
        let g = w.transform_grid();
        let boi = BandOfInterest::symmetric(50e9).unwrap();
        let f = build_filter(&NotchSpec::single(15e9, 2e9), &g, f64::NEG_INFINITY).unwrap();
        let (_, snapped) = f.notch.unwrap();
        let p = apply_perturbation(&w, &f, true, &boi).unwrap();
        let n = w.len();
        let df = g.f_step;
        // oracle: spectra of the real I and Q signals taken directly
        let i_sig: Vec<Complex> = p.wfm.pol_x().iter().map(|v| Complex::new(v.re, 0.0)).collect();
        let q_sig: Vec<Complex> = p.wfm.pol_x().iter().map(|v| Complex::new(v.im, 0.0)).collect();
        let xi = fft(&i_sig);
        let xq = fft(&q_sig);
        let scale = xi.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let j = Complex::new(0.0, 1.0);
        let mut checked = (0, 0);
        for k in 0..n {
            let fr = fft_freq(k, n, df);
            if snapped.primary.contains(fr) {
                assert!((xi[k] + j * xq[k]).norm() / scale < 1e-10);
                checked.0 += 1;
            }
            if snapped.mirror.contains(fr) {
                assert!((xi[k] - j * xq[k]).norm() / scale < 1e-10);
                assert!(xi[k].norm() / scale > 1e-3);
                checked.1 += 1;
            }
        }
        assert_eq!(checked, (20, 20));
    }

    #[test]
    fn dual_notch_zeroes_both_components() {
        let w = flat_waveform(4);
        let boi = BandOfInterest::symmetric(50e9).unwrap();
        let f = build_filter(&NotchSpec::dual(15e9, 2e9), &w.transform_grid(), f64::NEG_INFINITY).unwrap();
        let p = apply_perturbation(&w, &f, false, &boi).unwrap();
        let (_, snapped) = f.notch.unwrap();
        let i_sig: Vec<Complex> = p.wfm.pol_x().iter().map(|v| Complex::new(v.re, 0.0)).collect();
        let q_sig: Vec<Complex> = p.wfm.pol_x().iter().map(|v| Complex::new(v.im, 0.0)).collect();
        let (xi, xq) = (fft(&i_sig), fft(&q_sig));
        for k in 0..1024 {
            if snapped.is_notched(fft_freq(k, 1024, 1e8)) {
                assert!(xi[k].norm() < 1e-12 && xq[k].norm() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_filter_is_identity_map() {
        let w = flat_waveform(5);
        let boi = BandOfInterest::symmetric(50e9).unwrap();
        let p = apply_perturbation(&w, &PerturbationFilter::identity(w.transform_grid()), true, &boi).unwrap();
        assert_eq!(p.norm, 1.0);
        for (a, b) in w.pol_x().iter().zip(p.wfm.pol_x()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn norm_matches_output_power_ratio() {
        let w = flat_waveform(6);
        let boi = BandOfInterest::symmetric(30e9).unwrap();
        let f = build_filter(&NotchSpec::dual(10e9, 4e9), &w.transform_grid(), -6.0).unwrap();
        let p = apply_perturbation(&w, &f, false, &boi).unwrap();
        let band_power = |x: &ComplexWaveform| {
            let s = fft(x.pol_x());
            (0..1024)
                .filter(|&k| boi.contains(fft_freq(k, 1024, 1e8)))
                .map(|k| s[k].norm_sqr())
                .sum::<f64>()
        };
        let ratio = band_power(&p.wfm) / band_power(&w);
        assert!((ratio - p.norm).abs() < 1e-9);
        // and with the loop closed the band power is restored
        let q = apply_perturbation(&w, &f, true, &boi).unwrap();
        assert!((band_power(&q.wfm) / band_power(&w) - 1.0).abs() < 1e-9);
    }
}
