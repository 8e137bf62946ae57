//! The five subcommands. Each one writes `report.json` plus CSV files into an
//! output directory and returns the report.

use std::path::{Path, PathBuf};
use std::time::Instant;

use notchprobe_core::estimation::{summarize, sweep_costs};
use notchprobe_core::stitching::{injected_floor, instruction_psd};
use notchprobe_core::{
    apply_perturbation, apsd, build_filter, compute_sndr, db, generate_rrc_qpsk, peak_to_rms,
    recover_signal_psd, run_plan, simulate_capture, sn_dn_discrepancy, stitch_nfl, BandOfInterest,
    ComplexWaveform, FrequencyGrid, ImpairmentConfig, InterfaceStage, MeasurementTrace, NotchKind,
    NotchSpec, Perturbed, PowerSpectrum, SkewScenario, StitchOptions, StitchPlan, WelchPlan,
};
use serde_json::{json, Value};

use crate::error::{CliError, Result};
use crate::report::{columns_csv, fmt_col, num, nums, write_atomic, Report};
use crate::scenario::{load_scenario, BoiSection, Scenario, ScenarioKind};
use crate::trace_io::{import_trace, write_trace};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "NOTCHPROBE_OUT";
pub const DEFAULT_OUT: &str = "notchprobe-out";

/// Command-line overrides shared by the scenario commands.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub repeats: Option<usize>,
}

/// Output directory: `--out`, else `[output] dir`, else
/// `$NOTCHPROBE_OUT/<label>`, else `notchprobe-out/<label>`.
pub fn resolve_out(cli: Option<&Path>, scenario: Option<&Path>, env: Option<&Path>, label: &str) -> PathBuf {
    if let Some(p) = cli.or(scenario) {
        return p.to_path_buf();
    }
    env.map_or_else(|| PathBuf::from(DEFAULT_OUT), Path::to_path_buf).join(label)
}

fn env_out() -> Option<PathBuf> {
    std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

/// Loads a scenario for `command` and applies the overrides.
pub fn prepare(path: &Path, command: ScenarioKind, ov: &Overrides) -> Result<(Scenario, String, PathBuf)> {
    if ov.repeats.is_some() && command != ScenarioKind::Skew {
        return Err(CliError::Usage("--repeats only applies to the skew command".into()));
    }
    let mut sc = load_scenario(path)?;
    if sc.kind() != command {
        return Err(CliError::Validation(vec![format!(
            "scenario is a {} scenario, not {}",
            sc.kind().name(),
            command.name()
        )]));
    }
    if let Some(s) = ov.seed {
        sc.set_seed(s);
    }
    if let Some(r) = ov.repeats {
        if r == 0 {
            return Err(CliError::Usage("--repeats must be at least 1".into()));
        }
        if let Some(s) = sc.skew.as_mut() {
            s.repeats = r;
        }
    }
    let label = sc.name.clone().unwrap_or_else(|| {
        path.file_stem()
            .map_or_else(|| "scenario".into(), |s| s.to_string_lossy().into_owned())
    });
    let out = resolve_out(ov.out.as_deref(), sc.output.dir.as_deref(), env_out().as_deref(), &label);
    Ok((sc, label, out))
}

/// Loads, runs and writes one scenario command.
pub fn run_scenario(path: &Path, command: ScenarioKind, ov: &Overrides) -> Result<(Report, PathBuf)> {
    let (sc, label, out) = prepare(path, command, ov)?;
    let report = match command {
        ScenarioKind::Stitch => cmd_stitch(&sc, &label, &out)?,
        ScenarioKind::Skew => cmd_skew(&sc, &label, &out)?,
        ScenarioKind::Xtalk => cmd_xtalk(&sc, &label, &out)?,
        ScenarioKind::Psd => cmd_psd(&sc, &label, &out)?,
    };
    Ok((report, out))
}

fn grid_json(g: &FrequencyGrid) -> Value {
    json!({ "f_start_hz": num(g.f_start), "f_step_hz": num(g.f_step), "n_bins": g.n_bins })
}

fn rel_db(s: &PowerSpectrum, reference: f64) -> Vec<f64> {
    s.psd.iter().map(|p| db(p / reference)).collect()
}

fn rms(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x * x, n + 1));
    (s / n.max(1) as f64).sqrt()
}

fn max_abs(xs: impl Iterator<Item = f64>) -> f64 {
    xs.map(f64::abs).fold(0.0, f64::max)
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn finite(xs: &[f64]) -> impl Iterator<Item = f64> + '_ {
    xs.iter().copied().filter(|x| x.is_finite())
}

fn new_report(command: &str, label: &str, sc: &Scenario) -> Report {
    let mut r = Report::new(command, label);
    r.set("version", json!(env!("CARGO_PKG_VERSION")));
    r.set("scenario_echo", serde_json::to_value(sc).expect("scenario serializes"));
    r
}

fn waveform(sc: &Scenario) -> Result<ComplexWaveform> {
    Ok(generate_rrc_qpsk(&sc.qpsk())?)
}

fn bools(xs: &[bool]) -> Vec<String> {
    xs.iter().map(|&b| u8::from(b).to_string()).collect()
}

fn indices(xs: &[usize]) -> Vec<String> {
    xs.iter().map(usize::to_string).collect()
}

/// Stitched noise floor, signal PSD and SNDR over a notch sweep.
pub fn cmd_stitch(sc: &Scenario, label: &str, out: &Path) -> Result<Report> {
    let t0 = Instant::now();
    let mut r = new_report("stitch", label, sc);
    let wfm = waveform(sc)?;
    let plan = sc.stitch_plan()?.ok_or_else(|| CliError::Validation(vec!["missing [plan]".into()]))?;
    let setup = sc.capture_setup();
    let opts = sc.stitch_options();
    let traces = run_plan(&plan, &wfm, &sc.impairments, &setup, &opts)?;
    let nfl = stitch_nfl(&traces, &plan.boi, &opts)?;
    let sig = recover_signal_psd(&traces, &nfl, &opts)?;
    let sndr = compute_sndr(&sig.spectrum, &nfl.spectrum)?;
    let t_run = t0.elapsed().as_secs_f64();

    let reference = nfl.reference_psd;
    let grid = nfl.spectrum.grid;
    let nfl_db = rel_db(&nfl.spectrum, reference);
    let sig_db = rel_db(&sig.spectrum, reference);
    let small = notchprobe_core::small_notch_check(&traces);
    r.set(
        "outputs",
        json!({
            "grid": grid_json(&grid),
            "reference_psd": num(reference),
            "n_traces": traces.len(),
            "nfl_db": nums(&nfl_db),
            "signal_db": nums(&sig_db),
            "sndr_db": nums(&sndr.sndr_db),
            "mean_sndr_db": num(sndr.mean_db()),
            "owner": nfl.owner,
            "partner": sig.partner,
            "interpolated_bins": nfl.interpolated.iter().filter(|b| **b).count(),
            "clamped_bins": sig.clamped.iter().filter(|b| **b).count(),
            "small_notch": {
                "max_norm_deviation": num(small.max_norm_deviation),
                "worst_error_db": num(small.worst_error_db),
                "unsafe_approximation": small.unsafe_approximation,
            },
        }),
    );

    let floor = injected_floor(&grid, &sc.impairments, setup.stage, reference);
    let floor_db = rel_db(&floor, reference);
    let truth_sig = instruction_psd(&wfm, &plan.boi, &setup, &grid)?;
    let truth_sig_db = rel_db(&truth_sig, reference);
    let truth_sndr: Vec<f64> = diff(&truth_sig_db, &floor_db);
    let nfl_err = diff(&nfl_db, &floor_db);
    let sig_err = diff(&sig_db, &truth_sig_db);
    let sndr_err = diff(&sndr.sndr_db, &truth_sndr);
    let has_floor = floor.psd.iter().any(|p| *p > 0.0);
    let mut truth = json!({
        "impairments": serde_json::to_value(&sc.impairments).expect("config serializes"),
        "nfl_db": nums(&floor_db),
        "signal_db": nums(&truth_sig_db),
        "sndr_db": nums(&truth_sndr),
        "signal_rms_error_db": num(rms(finite(&sig_err))),
        "signal_max_error_db": num(max_abs(finite(&sig_err))),
    });
    if has_floor {
        let m = truth.as_object_mut().expect("object");
        m.insert("nfl_rms_error_db".into(), num(rms(nfl_err.iter().copied())));
        m.insert("nfl_max_error_db".into(), num(max_abs(nfl_err.iter().copied())));
        m.insert("sndr_rms_error_db".into(), num(rms(sndr_err.iter().copied())));
        m.insert("sndr_max_error_db".into(), num(max_abs(sndr_err.iter().copied())));
        let truth_mean = db(truth_sig.psd.iter().sum::<f64>() / floor.psd.iter().sum::<f64>());
        m.insert("mean_sndr_error_db".into(), num(sndr.mean_db() - truth_mean));
    }
    r.set("truth", truth);

    let freqs: Vec<f64> = grid.freqs().collect();
    let csv = columns_csv(
        &[
            "freq_hz",
            "nfl_db",
            "signal_db",
            "sndr_db",
            "truth_nfl_db",
            "truth_signal_db",
            "truth_sndr_db",
            "owner",
            "partner",
            "interpolated",
            "clamped",
        ],
        &[
            fmt_col(&freqs),
            fmt_col(&nfl_db),
            fmt_col(&sig_db),
            fmt_col(&sndr.sndr_db),
            fmt_col(&floor_db),
            fmt_col(&truth_sig_db),
            fmt_col(&truth_sndr),
            indices(&nfl.owner),
            indices(&sig.partner),
            bools(&nfl.interpolated),
            bools(&sig.clamped),
        ],
    );
    write_atomic(&out.join("profile.csv"), csv.as_bytes())?;
    write_traces(out, &traces, sc.boi())?;
    r.time("run_s", t_run);
    r.time("total_s", t0.elapsed().as_secs_f64());
    r.write(out)?;
    Ok(r)
}

fn write_traces(out: &Path, traces: &[MeasurementTrace], boi: BoiSection) -> Result<()> {
    let dir = out.join("traces");
    for (i, t) in traces.iter().enumerate() {
        write_trace(&dir, &format!("notch_{i:03}"), t, Some(boi))?;
    }
    Ok(())
}

/// IQ skew estimate from a sweep of trial phase compensations.
pub fn cmd_skew(sc: &Scenario, label: &str, out: &Path) -> Result<Report> {
    let t0 = Instant::now();
    let mut r = new_report("skew", label, sc);
    let s = sc.skew.as_ref().ok_or_else(|| CliError::Validation(vec!["missing [skew]".into()]))?;
    let sweep = sc.skew_sweep().expect("skew section");
    let mut scenario = SkewScenario::new(
        waveform(sc)?,
        NotchSpec::single(s.notch_center_hz, s.notch_width_hz),
        sc.band_of_interest()?,
        sc.impairments.clone(),
        sc.capture_setup(),
    );
    scenario.monitor = s.monitor;
    scenario.normalize = s.normalize;
    scenario.guard_bins = s.guard_bins;
    let points = sweep.points();
    let curves = sweep_costs(&scenario, &sweep)?;
    let est = summarize(&points, &curves)?;
    let t_run = t0.elapsed().as_secs_f64();

    let mean_db: Vec<f64> = est.cost_curve.iter().map(|c| c.1).collect();
    r.set(
        "outputs",
        json!({
            "tau_hat_ps": num(est.tau_hat),
            "std_ps": num(est.std),
            "repeats_ps": nums(&est.repeats),
            "curvature_per_ps2": num(est.curvature),
            "sweep_ps": nums(&points),
            "mean_cost_db": nums(&mean_db),
            "cost_db": curves.iter().map(|c| nums(c)).collect::<Vec<_>>(),
        }),
    );
    r.set(
        "truth",
        json!({
            "skew_ps": num(sc.impairments.skew_ps),
            "error_ps": num(est.tau_hat - sc.impairments.skew_ps),
        }),
    );
    let mut names = vec!["tau_ps".to_string(), "mean_cost_db".to_string()];
    names.extend((0..curves.len()).map(|i| format!("repeat_{i}_db")));
    let mut cols = vec![fmt_col(&points), fmt_col(&mean_db)];
    cols.extend(curves.iter().map(|c| fmt_col(c)));
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    write_atomic(&out.join("cost_curve.csv"), columns_csv(&names, &cols).as_bytes())?;
    r.time("run_s", t_run);
    r.time("total_s", t0.elapsed().as_secs_f64());
    r.write(out)?;
    Ok(r)
}

/// Difference between dual- and single-notch SNDR profiles.
pub fn cmd_xtalk(sc: &Scenario, label: &str, out: &Path) -> Result<Report> {
    let t0 = Instant::now();
    let mut r = new_report("xtalk", label, sc);
    let x = sc.xtalk.as_ref().ok_or_else(|| CliError::Validation(vec!["missing [xtalk]".into()]))?;
    let wfm = waveform(sc)?;
    let boi = sc.band_of_interest()?;
    let setup = sc.capture_setup();
    let opts = sc.stitch_options();
    let plan_sn = StitchPlan::single_sweep(boi, x.sn_width_hz)?;
    let plan_dn = StitchPlan::dual_sweep(boi, x.dn_width_hz)?;
    let d = sn_dn_discrepancy(&wfm, &plan_sn, &plan_dn, &sc.impairments, &setup, &opts)?;
    let t_run = t0.elapsed().as_secs_f64();

    let reference = notchprobe_core::stitching::reference_level(&wfm, &boi, &setup)?;
    let sn_nfl = rel_db(&d.sn.nfl, reference);
    let dn_nfl = rel_db(&d.dn.nfl, reference);
    let finite_diff: Vec<f64> = finite(&d.diff_db).collect();
    r.set(
        "outputs",
        json!({
            "grid": grid_json(&d.grid),
            "reference_psd": num(reference),
            "sndr_sn_db": nums(&d.sn.sndr_db),
            "sndr_dn_db": nums(&d.dn.sndr_db),
            "nfl_sn_db": nums(&sn_nfl),
            "nfl_dn_db": nums(&dn_nfl),
            "discrepancy_db": nums(&d.diff_db),
            "max_abs_discrepancy_db": num(d.max_abs_db()),
            "mean_discrepancy_db": num(finite_diff.iter().sum::<f64>() / finite_diff.len().max(1) as f64),
            "rms_discrepancy_db": num(rms(finite_diff.iter().copied())),
        }),
    );

    let floor = injected_floor(&d.grid, &sc.impairments, setup.stage, reference);
    let floor_db = rel_db(&floor, reference);
    let predicted = predicted_sn_floor(&wfm, &setup, &sc.impairments, &floor)?;
    let predicted_db = rel_db(&predicted, reference);
    let sn_err = diff(&sn_nfl, &predicted_db);
    let dn_err = diff(&dn_nfl, &floor_db);
    r.set(
        "truth",
        json!({
            "impairments": serde_json::to_value(&sc.impairments).expect("config serializes"),
            "nfl_dn_db": nums(&floor_db),
            "nfl_sn_db": nums(&predicted_db),
            "nfl_sn_rms_error_db": num(rms(finite(&sn_err))),
            "nfl_sn_max_error_db": num(max_abs(finite(&sn_err))),
            "nfl_dn_rms_error_db": num(rms(finite(&dn_err))),
            "nfl_dn_max_error_db": num(max_abs(finite(&dn_err))),
        }),
    );
    let freqs: Vec<f64> = d.grid.freqs().collect();
    let csv = columns_csv(
        &[
            "freq_hz",
            "sndr_sn_db",
            "sndr_dn_db",
            "discrepancy_db",
            "nfl_sn_db",
            "nfl_dn_db",
            "truth_nfl_sn_db",
            "truth_nfl_dn_db",
        ],
        &[
            fmt_col(&freqs),
            fmt_col(&d.sn.sndr_db),
            fmt_col(&d.dn.sndr_db),
            fmt_col(&d.diff_db),
            fmt_col(&sn_nfl),
            fmt_col(&dn_nfl),
            fmt_col(&predicted_db),
            fmt_col(&floor_db),
        ],
    );
    write_atomic(&out.join("discrepancy.csv"), csv.as_bytes())?;
    r.time("run_s", t_run);
    r.time("total_s", t0.elapsed().as_secs_f64());
    r.write(out)?;
    Ok(r)
}

/// First-order single-notch floor: injected floor plus the mirror image
/// leaked through `C_QI + C_IQ`.
pub fn predicted_sn_floor(
    wfm: &ComplexWaveform,
    setup: &notchprobe_core::CaptureSetup,
    cfg: &ImpairmentConfig,
    floor: &PowerSpectrum,
) -> Result<PowerSpectrum> {
    let Some(xt) = &cfg.crosstalk else { return Ok(floor.clone()) };
    let full = WelchPlan::for_resolution_with(wfm.len(), wfm.sample_rate(), setup.rbw, setup.window)?.estimate(wfm, setup.pol)?;
    let psd = floor
        .grid
        .freqs()
        .zip(&floor.psd)
        .map(|(f, fl)| {
            let mirror = full.at(-f).unwrap_or(0.0);
            let c = xt.eval(f);
            fl + notchprobe_core::estimation::sn_crosstalk_leakage(mirror, c[2], c[3])
        })
        .collect();
    Ok(PowerSpectrum { psd, ..floor.clone() })
}

/// Single capture with an optional notch, plus estimator sanity figures.
pub fn cmd_psd(sc: &Scenario, label: &str, out: &Path) -> Result<Report> {
    let t0 = Instant::now();
    let mut r = new_report("psd", label, sc);
    let wfm = waveform(sc)?;
    let boi = sc.band_of_interest()?;
    let setup = sc.capture_setup();
    let section = sc.psd.clone().unwrap_or(crate::scenario::PsdSection {
        notch: None,
        normalize: true,
    });
    let notch = section.notch.map(|n| n.spec());
    let instr = match &notch {
        Some(n) => {
            let filter = build_filter(n, &wfm.transform_grid(), f64::NEG_INFINITY)?;
            apply_perturbation(&wfm, &filter, section.normalize, &boi)?
        }
        None => Perturbed::unperturbed(wfm.clone(), boi),
    };
    let trace = simulate_capture(&instr, &sc.impairments, &setup, 0)?;
    let t_run = t0.elapsed().as_secs_f64();

    let welch = WelchPlan::for_resolution_with(instr.wfm.len(), instr.wfm.sample_rate(), setup.rbw, setup.window)?;
    let clean = welch.estimate(&instr.wfm, setup.pol)?;
    let time_power = instr.wfm.mean_power(setup.pol);
    let par_before = peak_to_rms(&wfm)?;
    let par_after = peak_to_rms(&instr.wfm)?;
    let reference = trace.reference_psd;
    let psd_db = rel_db(&trace.spectrum, reference);
    r.set(
        "outputs",
        json!({
            "grid": grid_json(&trace.spectrum.grid),
            "reference_psd": num(reference),
            "psd_db": nums(&psd_db),
            "norm": num(instr.norm),
            "normalized": instr.normalized,
            "parseval": {
                "time_power": num(time_power),
                "spectrum_power": num(clean.total_power()),
                "relative_error": num(clean.total_power() / time_power - 1.0),
            },
            "peak_to_rms": {
                "before": num(par_before),
                "after": num(par_after),
                "relative_change": num(par_after / par_before - 1.0),
            },
        }),
    );
    let mut truth = json!({
        "impairments": serde_json::to_value(&sc.impairments).expect("config serializes"),
    });
    if let (Some(n), Some(s)) = (notch, trace.snapped) {
        let guard = StitchOptions::default().clearance(trace.spectrum.grid.f_step);
        let band = if n.kind == NotchKind::Dual || setup.stage != InterfaceStage::E2E {
            s.primary.shrink(guard)
        } else {
            None
        };
        if let Some(b) = band {
            if let Ok(level) = apsd(&trace.spectrum, &b) {
                let floor = injected_floor(&trace.spectrum.grid, &sc.impairments, setup.stage, reference);
                let expected = apsd(&floor, &b)?;
                let m = truth.as_object_mut().expect("object");
                m.insert("notch_floor_db".into(), num(db(expected / reference)));
                m.insert("notch_apsd_db".into(), num(db(level / reference)));
                m.insert("notch_error_db".into(), num(db(level / expected)));
            }
        }
    }
    r.set("truth", truth);
    write_trace(out, "spectrum", &trace, Some(sc.boi()))?;
    r.time("run_s", t_run);
    r.time("total_s", t0.elapsed().as_secs_f64());
    r.write(out)?;
    Ok(r)
}

/// Options of the import command.
#[derive(Debug, Clone, Default)]
pub struct ImportOptions {
    pub step_hz: Option<f64>,
    pub guard_bins: Option<usize>,
}

/// Reads external traces. With two or more notched traces that declare a
/// band of interest, also stitches them.
pub fn cmd_import(paths: &[PathBuf], opts: &ImportOptions, out: &Path) -> Result<Report> {
    let t0 = Instant::now();
    if paths.is_empty() {
        return Err(CliError::Usage("import needs at least one trace file".into()));
    }
    let mut r = Report::new("import", "import");
    r.set("version", json!(env!("CARGO_PKG_VERSION")));
    let mut traces = Vec::with_capacity(paths.len());
    let mut bois = Vec::new();
    let mut summary = Vec::new();
    for p in paths {
        let (t, meta) = import_trace(p, opts.step_hz)?;
        let clearance = StitchOptions {
            guard_bins: opts.guard_bins.unwrap_or(StitchOptions::default().guard_bins),
            ..StitchOptions::default()
        }
        .clearance(t.spectrum.grid.f_step);
        let notch_apsd = t
            .snapped
            .and_then(|s| s.primary.shrink(clearance))
            .and_then(|b| apsd(&t.spectrum, &b).ok())
            .map_or(Value::Null, |v| num(db(v / t.reference_psd)));
        summary.push(json!({
            "path": p.display().to_string(),
            "grid": grid_json(&t.spectrum.grid),
            "stage": t.stage,
            "norm": num(t.norm),
            "notch_apsd_db": notch_apsd,
        }));
        bois.extend(meta.boi);
        traces.push(t);
    }
    r.set("echo", json!({ "files": paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(), "step_hz": opts.step_hz.map(num) }));
    r.set("traces", Value::Array(summary));
    for (i, t) in traces.iter().enumerate() {
        write_trace(&out.join("traces"), &format!("trace_{i:03}"), t, bois.first().copied())?;
    }

    let notched = traces.iter().all(|t| t.notch.is_some());
    if traces.len() >= 2 && notched {
        let Some(b) = bois.first() else {
            return Err(CliError::Validation(vec!["stitching imported traces needs a boi in the sidecars".into()]));
        };
        if bois.iter().any(|o| o != b) {
            return Err(CliError::Validation(vec!["imported traces declare different bands of interest".into()]));
        }
        let boi = BandOfInterest::new(b.f_lo_hz, b.f_hi_hz)?;
        let sopts = StitchOptions {
            guard_bins: opts.guard_bins.unwrap_or(StitchOptions::default().guard_bins),
            ..StitchOptions::default()
        };
        let nfl = stitch_nfl(&traces, &boi, &sopts)?;
        let sig = recover_signal_psd(&traces, &nfl, &sopts)?;
        let sndr = compute_sndr(&sig.spectrum, &nfl.spectrum)?;
        let nfl_db = nfl.relative_db();
        let sig_db = rel_db(&sig.spectrum, nfl.reference_psd);
        r.set(
            "outputs",
            json!({
                "grid": grid_json(&nfl.spectrum.grid),
                "nfl_db": nums(&nfl_db),
                "signal_db": nums(&sig_db),
                "sndr_db": nums(&sndr.sndr_db),
                "mean_sndr_db": num(sndr.mean_db()),
            }),
        );
        let freqs: Vec<f64> = nfl.spectrum.grid.freqs().collect();
        let csv = columns_csv(
            &["freq_hz", "nfl_db", "signal_db", "sndr_db"],
            &[fmt_col(&freqs), fmt_col(&nfl_db), fmt_col(&sig_db), fmt_col(&sndr.sndr_db)],
        );
        write_atomic(&out.join("profile.csv"), csv.as_bytes())?;
    }
    r.time("total_s", t0.elapsed().as_secs_f64());
    r.write(out)?;
    Ok(r)
}
