//! Trace files: a CSV spectrum plus a TOML sidecar.
//!
//! ```text
//! freq_hz,psd_db
//! -1.9e11,-41.52
//! ...
//! ```
//!
//! One header line, then one `frequency,level` row per point. Levels are dB
//! relative to the mean signal PSD over the band of interest; `-inf` is
//! allowed. Rows may be in ascending or descending frequency order but must
//! be strictly monotone. The sidecar `<stem>.toml` next to `<stem>.csv`
//! carries the capture metadata, see [`TraceMeta`].

use std::path::{Path, PathBuf};

use notchprobe_core::{
    db, from_db, Band, FrequencyGrid, InterfaceStage, MeasurementTrace, NotchSpec, PowerSpectrum,
    SnappedNotch,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::report::{columns_csv, fmt_col, write_atomic};
use crate::scenario::{BoiSection, NotchSection};

pub const HEADER: &str = "freq_hz,psd_db";

/// Sidecar metadata of a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceMeta {
    #[serde(default)]
    pub stage: InterfaceStage,
    /// Power ratio of the perturbation over the band of interest.
    #[serde(default = "one")]
    pub norm: f64,
    /// Whether the transmitter rescaled by `1/sqrt(norm)`.
    #[serde(default)]
    pub normalized: bool,
    /// Absolute PSD that the file's 0 dB stands for.
    #[serde(default = "one")]
    pub reference_psd: f64,
    #[serde(default)]
    pub averages: usize,
    #[serde(default)]
    pub resolution_bw_hz: Option<f64>,
    #[serde(default)]
    pub notch: Option<NotchSection>,
    /// Notch bands as realized by the transmitter, `[lo, hi]` in Hz. When
    /// absent the notch is snapped onto the trace's own grid.
    #[serde(default)]
    pub snapped: Option<SnappedSection>,
    #[serde(default)]
    pub boi: Option<BoiSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnappedSection {
    pub primary: [f64; 2],
    pub mirror: [f64; 2],
}

fn one() -> f64 {
    1.0
}

impl Default for TraceMeta {
    fn default() -> Self {
        TraceMeta {
            stage: InterfaceStage::default(),
            norm: 1.0,
            normalized: false,
            reference_psd: 1.0,
            averages: 0,
            resolution_bw_hz: None,
            notch: None,
            snapped: None,
            boi: None,
        }
    }
}

impl TraceMeta {
    pub fn of(trace: &MeasurementTrace) -> Self {
        TraceMeta {
            stage: trace.stage,
            norm: trace.norm,
            normalized: trace.normalized,
            reference_psd: trace.reference_psd,
            averages: trace.spectrum.averages,
            resolution_bw_hz: Some(trace.spectrum.resolution_bw),
            notch: trace.notch.map(|n| NotchSection {
                kind: n.kind,
                center_hz: n.center_nc,
                width_hz: n.width_nw,
            }),
            snapped: trace.snapped.map(|s| SnappedSection {
                primary: [s.primary.lo, s.primary.hi],
                mirror: [s.mirror.lo, s.mirror.hi],
            }),
            boi: None,
        }
    }
}

/// Sidecar path for a trace CSV.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("toml")
}

/// Writes `<dir>/<stem>.csv` and its sidecar.
pub fn write_trace(dir: &Path, stem: &str, trace: &MeasurementTrace, boi: Option<BoiSection>) -> Result<PathBuf> {
    let csv = dir.join(format!("{stem}.csv"));
    write_atomic(&csv, trace_csv(&trace.spectrum, trace.reference_psd).as_bytes())?;
    let meta = TraceMeta {
        boi,
        ..TraceMeta::of(trace)
    };
    let text = toml::to_string(&meta).expect("trace metadata serializes");
    write_atomic(&sidecar_path(&csv), text.as_bytes())?;
    Ok(csv)
}

pub fn trace_csv(spectrum: &PowerSpectrum, reference: f64) -> String {
    let freqs: Vec<f64> = spectrum.grid.freqs().collect();
    let levels: Vec<f64> = spectrum.psd.iter().map(|p| db(p / reference)).collect();
    columns_csv(&["freq_hz", "psd_db"], &[fmt_col(&freqs), fmt_col(&levels)])
}

/// Rows of a trace file, as `(freq_hz, psd_db)` in file order. Row numbers
/// in errors count the header as row 1.
pub fn parse_trace_csv(text: &str) -> Result<Vec<(f64, f64)>, String> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| format!("row 1: {e}"))?;
    if header.is_empty() {
        return Err("empty file".into());
    }
    if header.iter().ne(HEADER.split(',')) {
        return Err(format!("row 1: expected header `{HEADER}`, found `{}`", header.iter().collect::<Vec<_>>().join(",")));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| match e.position() {
            Some(p) => format!("row {}: {e}", p.line()),
            None => e.to_string(),
        })?;
        let row = rec.position().map_or(0, |p| p.line());
        if rec.len() != 2 {
            return Err(format!("row {row}: expected two comma-separated values"));
        }
        let f: f64 = rec[0]
            .parse()
            .map_err(|_| format!("row {row}: bad frequency `{}`", &rec[0]))?;
        let p: f64 = rec[1]
            .parse()
            .map_err(|_| format!("row {row}: bad level `{}`", &rec[1]))?;
        if !f.is_finite() || p.is_nan() || p == f64::INFINITY {
            return Err(format!("row {row}: values must be finite (level may be -inf)"));
        }
        rows.push((f, p));
    }
    if rows.len() < 2 {
        return Err("a trace needs at least two rows".into());
    }
    Ok(rows)
}

/// Sorts rows ascending (reversing a descending file) and rejects
/// non-monotone frequency columns.
pub fn ascending(mut rows: Vec<(f64, f64)>) -> Result<Vec<(f64, f64)>, String> {
    if rows[1].0 < rows[0].0 {
        rows.reverse();
    }
    for (i, w) in rows.windows(2).enumerate() {
        if !(w[1].0 > w[0].0) {
            return Err(format!("frequency column is not strictly monotone near data row {}", i + 2));
        }
    }
    Ok(rows)
}

/// Places the rows on a uniform grid with spacing `step` (default: the mean
/// spacing of the file) by linear interpolation in linear power. Files that
/// are already uniform at that spacing are taken over unchanged.
pub fn resample(rows: &[(f64, f64)], step: Option<f64>) -> Result<(FrequencyGrid, Vec<f64>), String> {
    let first = rows[0].0;
    let last = rows[rows.len() - 1].0;
    let mean = (last - first) / (rows.len() - 1) as f64;
    let uniform = rows
        .windows(2)
        .all(|w| ((w[1].0 - w[0].0) - mean).abs() <= 1e-6 * mean);
    let step = step.unwrap_or(mean);
    if !(step > 0.0) || !step.is_finite() {
        return Err(format!("resampling step {step} Hz must be positive"));
    }
    let lin: Vec<f64> = rows.iter().map(|r| from_db(r.1)).collect();
    if uniform && (step - mean).abs() <= 1e-9 * mean {
        let grid = FrequencyGrid::new(first, mean, rows.len()).map_err(|e| e.to_string())?;
        return Ok((grid, lin));
    }
    let n = ((last - first) / step + 1e-9).floor() as usize + 1;
    let grid = FrequencyGrid::new(first, step, n).map_err(|e| e.to_string())?;
    let mut j = 0;
    let psd = grid
        .freqs()
        .map(|f| {
            while j + 2 < rows.len() && rows[j + 1].0 < f {
                j += 1;
            }
            let (f0, f1) = (rows[j].0, rows[j + 1].0);
            let t = ((f - f0) / (f1 - f0)).clamp(0.0, 1.0);
            lin[j] + t * (lin[j + 1] - lin[j])
        })
        .collect();
    Ok((grid, psd))
}

/// Reads a trace and its sidecar (missing sidecar: defaults, no notch).
pub fn import_trace(csv: &Path, step: Option<f64>) -> Result<(MeasurementTrace, TraceMeta)> {
    let text = std::fs::read_to_string(csv).map_err(|e| CliError::io(csv, e))?;
    let rows = parse_trace_csv(&text).map_err(|m| CliError::parse(csv, m))?;
    let rows = ascending(rows).map_err(|m| CliError::parse(csv, m))?;
    let side = sidecar_path(csv);
    let meta: TraceMeta = if side.exists() {
        let t = std::fs::read_to_string(&side).map_err(|e| CliError::io(&side, e))?;
        toml::from_str(&t).map_err(|e| CliError::parse(&side, e.to_string()))?
    } else {
        TraceMeta::default()
    };
    let (grid, rel) = resample(&rows, step).map_err(|m| CliError::parse(csv, m))?;
    let mut problems = Vec::new();
    if !(meta.norm > 0.0 && meta.norm <= 1.0) {
        problems.push(format!("norm {} outside (0, 1]", meta.norm));
    }
    if !(meta.reference_psd > 0.0) || !meta.reference_psd.is_finite() {
        problems.push(format!("reference_psd {} must be positive", meta.reference_psd));
    }
    let notch = meta.notch.map(|n| n.spec());
    let snapped = match (&meta.snapped, notch) {
        (Some(s), Some(n)) => Some(SnappedNotch {
            kind: n.kind,
            primary: Band {
                lo: s.primary[0],
                hi: s.primary[1],
            },
            mirror: Band {
                lo: s.mirror[0],
                hi: s.mirror[1],
            },
        }),
        (None, Some(n)) => Some(snap_on_trace(&n, &grid).map_err(|e| CliError::Validation(vec![format!("{}: {e}", side.display())]))?),
        (Some(_), None) => {
            problems.push("snapped bands given without a notch".into());
            None
        }
        (None, None) => None,
    };
    if !problems.is_empty() {
        return Err(CliError::Validation(
            problems.into_iter().map(|p| format!("{}: {p}", side.display())).collect(),
        ));
    }
    let spectrum = PowerSpectrum {
        grid,
        psd: rel.iter().map(|v| v * meta.reference_psd).collect(),
        resolution_bw: meta.resolution_bw_hz.unwrap_or(grid.f_step),
        averages: meta.averages,
    };
    let trace = MeasurementTrace {
        spectrum,
        notch,
        snapped,
        norm: meta.norm,
        normalized: meta.normalized,
        stage: meta.stage,
        reference_psd: meta.reference_psd,
        truth: None,
    };
    Ok((trace, meta))
}

/// Snaps onto the trace grid. A one-sided grid is extended with aligned
/// negative bins first so the mirror band is representable.
fn snap_on_trace(n: &NotchSpec, grid: &FrequencyGrid) -> notchprobe_core::Result<SnappedNotch> {
    let (lo, hi) = grid.span();
    if lo <= -hi {
        return n.snap(grid);
    }
    let extra = ((lo + hi) / grid.f_step).ceil() as usize;
    let full = FrequencyGrid::new(lo - extra as f64 * grid.f_step, grid.f_step, grid.n_bins + extra)?;
    n.snap(&full)
}
