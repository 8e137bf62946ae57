//! Scenario files.
//!
//! A scenario is a TOML document. Unknown keys are rejected, every omitted
//! key takes the default documented on its field, and `load_scenario`
//! reports all violated constraints at once.

use std::path::{Path, PathBuf};

use notchprobe_core::{
    BandOfInterest, CaptureSetup, ImpairmentConfig, InterfaceStage, MonitorBand, NotchKind, NotchSpec,
    Polarization, QpskParams, SkewSweep, StitchOptions, StitchPlan, WelchPlan, Window,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Stitch,
    Skew,
    Xtalk,
    Psd,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Stitch => "stitch",
            ScenarioKind::Skew => "skew",
            ScenarioKind::Xtalk => "xtalk",
            ScenarioKind::Psd => "psd",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Inferred from the sections present when omitted: `plan` → stitch,
    /// `skew` → skew, `xtalk` → xtalk, otherwise psd.
    #[serde(default)]
    pub kind: Option<ScenarioKind>,
    #[serde(default)]
    pub name: Option<String>,
    pub waveform: WaveformSection,
    /// Defaults to `(-B, B]` with `B = baud·(1 - rolloff)/2`.
    #[serde(default)]
    pub boi: Option<BoiSection>,
    #[serde(default)]
    pub impairments: ImpairmentConfig,
    #[serde(default)]
    pub capture: CaptureSection,
    #[serde(default)]
    pub plan: Option<PlanSection>,
    #[serde(default)]
    pub skew: Option<SkewSection>,
    #[serde(default)]
    pub xtalk: Option<XtalkSection>,
    #[serde(default)]
    pub psd: Option<PsdSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveformSection {
    pub baud: f64,
    #[serde(default = "d_rolloff")]
    pub rolloff: f64,
    #[serde(default = "d_symbols")]
    pub n_symbols: usize,
    #[serde(default = "d_sps")]
    pub samples_per_symbol: usize,
    #[serde(default)]
    pub dual_pol: bool,
    #[serde(default = "d_seed")]
    pub seed: u64,
}

fn d_rolloff() -> f64 {
    0.05
}
fn d_symbols() -> usize {
    1 << 15
}
fn d_sps() -> usize {
    4
}
fn d_seed() -> u64 {
    1
}
fn d_true() -> bool {
    true
}
fn d_guard() -> usize {
    2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoiSection {
    pub f_lo_hz: f64,
    pub f_hi_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptureSection {
    #[serde(default)]
    pub stage: InterfaceStage,
    #[serde(default = "d_rbw")]
    pub rbw_hz: f64,
    /// Noise captures averaged per trace.
    #[serde(default = "d_captures")]
    pub captures: usize,
    #[serde(default)]
    pub pol: Polarization,
    #[serde(default)]
    pub window: Window,
}

fn d_rbw() -> f64 {
    200e6
}
fn d_captures() -> usize {
    1
}

impl Default for CaptureSection {
    fn default() -> Self {
        CaptureSection {
            stage: InterfaceStage::default(),
            rbw_hz: d_rbw(),
            captures: d_captures(),
            pol: Polarization::default(),
            window: Window::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSection {
    #[serde(default = "d_dual")]
    pub kind: NotchKind,
    pub width_hz: f64,
    /// Explicit notch centres. Omitted: notches of `width_hz` tile the band
    /// (dual plans from DC outwards, single plans from the low edge up).
    #[serde(default)]
    pub centers_hz: Option<Vec<f64>>,
    #[serde(default = "d_guard")]
    pub guard_bins: usize,
    #[serde(default = "d_true")]
    pub normalize: bool,
}

fn d_dual() -> NotchKind {
    NotchKind::Dual
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkewSection {
    #[serde(default = "d_skew_nc")]
    pub notch_center_hz: f64,
    #[serde(default = "d_skew_nw")]
    pub notch_width_hz: f64,
    #[serde(default)]
    pub monitor: MonitorBand,
    #[serde(default = "d_lo")]
    pub lo_ps: f64,
    #[serde(default = "d_hi")]
    pub hi_ps: f64,
    #[serde(default = "d_step")]
    pub step_ps: f64,
    #[serde(default = "d_repeats")]
    pub repeats: usize,
    /// Captures averaged per sweep point.
    #[serde(default = "d_skew_captures")]
    pub captures: usize,
    #[serde(default)]
    pub identical_seeds: bool,
    #[serde(default = "d_true")]
    pub normalize: bool,
    #[serde(default = "d_guard")]
    pub guard_bins: usize,
}

fn d_skew_nc() -> f64 {
    20e9
}
fn d_skew_nw() -> f64 {
    2e9
}
fn d_lo() -> f64 {
    -1.4
}
fn d_hi() -> f64 {
    1.4
}
fn d_step() -> f64 {
    0.25
}
fn d_repeats() -> usize {
    8
}
fn d_skew_captures() -> usize {
    40
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct XtalkSection {
    #[serde(default = "d_sn_width")]
    pub sn_width_hz: f64,
    #[serde(default = "d_dn_width")]
    pub dn_width_hz: f64,
    #[serde(default = "d_guard")]
    pub guard_bins: usize,
    #[serde(default = "d_true")]
    pub normalize: bool,
}

fn d_sn_width() -> f64 {
    4e9
}
fn d_dn_width() -> f64 {
    2e9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsdSection {
    /// Optional perturbation applied before the capture.
    #[serde(default)]
    pub notch: Option<NotchSection>,
    #[serde(default = "d_true")]
    pub normalize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NotchSection {
    #[serde(default = "d_dual")]
    pub kind: NotchKind,
    pub center_hz: f64,
    pub width_hz: f64,
}

impl NotchSection {
    pub fn spec(&self) -> NotchSpec {
        match self.kind {
            NotchKind::Single => NotchSpec::single(self.center_hz, self.width_hz),
            NotchKind::Dual => NotchSpec::dual(self.center_hz, self.width_hz),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Output directory, relative to the scenario file.
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

impl Scenario {
    pub fn kind(&self) -> ScenarioKind {
        self.kind.unwrap_or(if self.plan.is_some() {
            ScenarioKind::Stitch
        } else if self.skew.is_some() {
            ScenarioKind::Skew
        } else if self.xtalk.is_some() {
            ScenarioKind::Xtalk
        } else {
            ScenarioKind::Psd
        })
    }

    pub fn qpsk(&self) -> QpskParams {
        let w = &self.waveform;
        QpskParams {
            baud: w.baud,
            rolloff: w.rolloff,
            n_symbols: w.n_symbols,
            samples_per_symbol: w.samples_per_symbol,
            dual_pol: w.dual_pol,
            seed: w.seed,
        }
    }

    pub fn sample_rate(&self) -> f64 {
        self.waveform.baud * self.waveform.samples_per_symbol as f64
    }

    pub fn n_samples(&self) -> usize {
        self.waveform.n_symbols * self.waveform.samples_per_symbol
    }

    pub fn boi(&self) -> BoiSection {
        self.boi.unwrap_or_else(|| {
            let b = self.waveform.baud * (1.0 - self.waveform.rolloff) / 2.0;
            BoiSection {
                f_lo_hz: -b,
                f_hi_hz: b,
            }
        })
    }

    pub fn band_of_interest(&self) -> notchprobe_core::Result<BandOfInterest> {
        let b = self.boi();
        BandOfInterest::new(b.f_lo_hz, b.f_hi_hz)
    }

    pub fn capture_setup(&self) -> CaptureSetup {
        CaptureSetup {
            stage: self.capture.stage,
            rbw: self.capture.rbw_hz,
            pol: self.capture.pol,
            captures: self.capture.captures,
            window: self.capture.window,
        }
    }

    pub fn stitch_plan(&self) -> notchprobe_core::Result<Option<StitchPlan>> {
        let Some(p) = &self.plan else { return Ok(None) };
        let boi = self.band_of_interest()?;
        let plan = match &p.centers_hz {
            Some(c) => StitchPlan::new(
                boi,
                c.iter()
                    .map(|&nc| match p.kind {
                        NotchKind::Single => NotchSpec::single(nc, p.width_hz),
                        NotchKind::Dual => NotchSpec::dual(nc, p.width_hz),
                    })
                    .collect(),
            )?,
            None => match p.kind {
                NotchKind::Single => StitchPlan::single_sweep(boi, p.width_hz)?,
                NotchKind::Dual => StitchPlan::dual_sweep(boi, p.width_hz)?,
            },
        };
        Ok(Some(plan))
    }

    pub fn stitch_options(&self) -> StitchOptions {
        match (&self.plan, &self.xtalk) {
            (Some(p), _) => StitchOptions {
                guard_bins: p.guard_bins,
                normalize: p.normalize,
            },
            (None, Some(x)) => StitchOptions {
                guard_bins: x.guard_bins,
                normalize: x.normalize,
            },
            _ => StitchOptions::default(),
        }
    }

    pub fn skew_sweep(&self) -> Option<SkewSweep> {
        self.skew.as_ref().map(|s| SkewSweep {
            lo_ps: s.lo_ps,
            hi_ps: s.hi_ps,
            step_ps: s.step_ps,
            repeats: s.repeats,
            captures: s.captures,
            identical_seeds: s.identical_seeds,
        })
    }

    /// Replaces both the symbol and the noise seed.
    pub fn set_seed(&mut self, seed: u64) {
        self.waveform.seed = seed;
        self.impairments.seed = seed;
    }

    /// Every violated constraint, each as one line.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let check = |out: &mut Vec<String>, ok: bool, msg: String| {
            if !ok {
                out.push(msg)
            }
        };
        let w = &self.waveform;
        check(&mut out, w.baud > 0.0 && w.baud.is_finite(), format!("waveform.baud must be positive, got {}", w.baud));
        check(&mut out, (0.0..=1.0).contains(&w.rolloff), format!("waveform.rolloff must lie in [0, 1], got {}", w.rolloff));
        check(&mut out, w.n_symbols >= 1024, format!("waveform.n_symbols must be at least 1024, got {}", w.n_symbols));
        check(
            &mut out,
            w.samples_per_symbol as f64 >= 2.0 * (1.0 + w.rolloff),
            format!("waveform.samples_per_symbol {} is below 2·(1 + rolloff)", w.samples_per_symbol),
        );
        let fs = self.sample_rate();
        let b = self.boi();
        check(
            &mut out,
            b.f_lo_hz < b.f_hi_hz,
            format!("boi: f_lo_hz {} must be below f_hi_hz {}", b.f_lo_hz, b.f_hi_hz),
        );
        check(
            &mut out,
            b.f_lo_hz >= -fs / 2.0 && b.f_hi_hz < fs / 2.0,
            format!("boi ({}, {}] Hz exceeds the simulated span ±{} Hz", b.f_lo_hz, b.f_hi_hz, fs / 2.0),
        );
        if let Err(e) = self.impairments.validate() {
            out.push(format!("impairments: {e}"));
        }
        let c = &self.capture;
        check(&mut out, c.captures >= 1, "capture.captures must be at least 1".into());
        if c.pol != Polarization::X && !w.dual_pol {
            out.push("capture.pol selects Y but the waveform is single polarization".into());
        }
        let welch = WelchPlan::for_resolution_with(self.n_samples().max(1), fs, c.rbw_hz, c.window);
        let bin = match &welch {
            Ok(p) => Some(p.bin_width()),
            Err(e) => {
                out.push(format!("capture.rbw_hz: {e}"));
                None
            }
        };
        if let Ok(boi) = self.band_of_interest() {
            self.plan_problems(&boi, bin, &mut out);
            self.skew_problems(&boi, &mut out);
            self.xtalk_problems(&boi, bin, &mut out);
            if let Some(n) = self.psd.as_ref().and_then(|p| p.notch) {
                if let Err(e) = n.spec().snap(&notchprobe_core::FrequencyGrid::centered(self.n_samples().max(2), fs)) {
                    out.push(format!("psd.notch: {e}"));
                }
            }
        }
        let sections = [
            ("plan", self.plan.is_some(), ScenarioKind::Stitch),
            ("skew", self.skew.is_some(), ScenarioKind::Skew),
            ("xtalk", self.xtalk.is_some(), ScenarioKind::Xtalk),
        ];
        let kind = self.kind();
        for (name, present, k) in sections {
            if kind == k && !present {
                out.push(format!("a {} scenario needs a [{name}] section", k.name()));
            }
        }
        out
    }

    fn plan_problems(&self, boi: &BandOfInterest, bin: Option<f64>, out: &mut Vec<String>) {
        let Some(p) = &self.plan else { return };
        if !(p.width_hz > 0.0) {
            out.push(format!("plan.width_hz must be positive, got {}", p.width_hz));
            return;
        }
        if let Some(c) = &p.centers_hz {
            for (i, nc) in c.iter().enumerate() {
                let spec = match p.kind {
                    NotchKind::Single => NotchSpec::single(*nc, p.width_hz),
                    NotchKind::Dual => NotchSpec::dual(*nc, p.width_hz),
                };
                let r = spec.region();
                if !(r.lo < boi.f_hi && r.hi > boi.f_lo) {
                    out.push(format!("plan notch {i} at {nc} Hz lies outside the band of interest"));
                }
            }
        }
        if self.capture.stage == InterfaceStage::E2E && p.kind == NotchKind::Single {
            out.push("plan: single notches cannot be stitched from an e2e capture".into());
        }
        match (self.stitch_plan(), bin) {
            (Ok(Some(plan)), Some(bin)) => {
                if let Err(e) = plan.validate(bin) {
                    if !out.iter().any(|m| m.starts_with("plan notch")) {
                        out.push(format!("plan: {e}"));
                    }
                }
            }
            (Err(e), _) => out.push(format!("plan: {e}")),
            _ => {}
        }
    }

    fn skew_problems(&self, boi: &BandOfInterest, out: &mut Vec<String>) {
        let Some(s) = &self.skew else { return };
        let n = NotchSpec::single(s.notch_center_hz, s.notch_width_hz);
        if let Err(e) = n.validate() {
            out.push(format!("skew: {e}"));
        } else if !boi.contains_notch(&n) {
            out.push("skew: the notch lies outside the band of interest".into());
        }
        if let Err(e) = self.skew_sweep().expect("skew section").validate() {
            out.push(format!("skew: {e}"));
        }
        if self.impairments.crosstalk.is_some() {
            out.push("skew: crosstalk must be off (compensate it before estimating skew)".into());
        }
        if self.capture.stage == InterfaceStage::E2E {
            out.push("skew: an e2e capture cannot separate the null band from its mirror".into());
        }
    }

    fn xtalk_problems(&self, boi: &BandOfInterest, bin: Option<f64>, out: &mut Vec<String>) {
        let Some(x) = &self.xtalk else { return };
        if self.capture.stage == InterfaceStage::E2E {
            out.push("xtalk: single notches cannot be stitched from an e2e capture".into());
        }
        for (name, w, dual) in [("sn_width_hz", x.sn_width_hz, false), ("dn_width_hz", x.dn_width_hz, true)] {
            let plan = if dual {
                StitchPlan::dual_sweep(*boi, w)
            } else {
                StitchPlan::single_sweep(*boi, w)
            };
            match (plan, bin) {
                (Ok(p), Some(bin)) => {
                    if let Err(e) = p.validate(bin) {
                        out.push(format!("xtalk.{name}: {e}"));
                    }
                }
                (Err(e), _) => out.push(format!("xtalk.{name}: {e}")),
                _ => {}
            }
        }
    }
}

/// Parses and validates a scenario file. Relative output directories are
/// resolved against the file's directory.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut s = parse_scenario(&text).map_err(|m| CliError::parse(path, m))?;
    if let Some(dir) = &s.output.dir {
        if dir.is_relative() {
            s.output.dir = Some(path.parent().unwrap_or(Path::new(".")).join(dir));
        }
    }
    let problems = s.problems();
    if !problems.is_empty() {
        return Err(CliError::Validation(problems));
    }
    Ok(s)
}

/// TOML parse only; messages carry line and column.
pub fn parse_scenario(text: &str) -> Result<Scenario, String> {
    toml::from_str(text).map_err(|e| {
        let msg = e.message().to_string();
        match e.span() {
            Some(span) => {
                let (line, col) = line_col(text, span.start);
                format!("line {line}, column {col}: {msg}")
            }
            None => msg,
        }
    })
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, col)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_fills_defaults() {
        let s = parse_scenario("[waveform]\nbaud = 95e9\n[plan]\nwidth_hz = 2e9\n").unwrap();
        assert_eq!(s.kind(), ScenarioKind::Stitch);
        assert_eq!(s.waveform.n_symbols, 32768);
        assert_eq!(s.capture.rbw_hz, 200e6);
        assert_eq!(s.plan.as_ref().unwrap().kind, NotchKind::Dual);
        assert!(s.problems().is_empty(), "{:?}", s.problems());
        let plan = s.stitch_plan().unwrap().unwrap();
        assert_eq!(plan.notches.len(), 23);
    }

    #[test]
    fn unknown_key_is_a_parse_error_with_position() {
        let e = parse_scenario("[waveform]\nbaud = 95e9\nbuad = 1\n").unwrap_err();
        assert!(e.starts_with("line 3"), "{e}");
    }

    #[test]
    fn notch_outside_boi_is_named() {
        let s = parse_scenario(
            "[waveform]\nbaud = 95e9\n[boi]\nf_lo_hz = -10e9\nf_hi_hz = 10e9\n[plan]\nwidth_hz = 2e9\ncenters_hz = [1e9, 3e9, 5e9, 7e9, 9e9, 25e9]\n",
        )
        .unwrap();
        let p = s.problems();
        assert!(p.iter().any(|m| m.contains("notch 5")), "{p:?}");
    }

    #[test]
    fn all_problems_are_listed() {
        let s = parse_scenario("[waveform]\nbaud = 95e9\nrolloff = 2.0\nn_symbols = 10\n[capture]\ncaptures = 0\n").unwrap();
        assert!(s.problems().len() >= 3);
    }
}
