use std::path::{Path, PathBuf};
use std::process::Command;

use notchprobe::commands::{resolve_out, run_scenario, Overrides};
use notchprobe::report::without_timing;
use notchprobe::scenario::ScenarioKind;
use notchprobe::trace_io::{import_trace, resample, trace_csv, write_trace};
use notchprobe_core::{
    apply_perturbation, build_filter, from_db, generate_rrc_qpsk, simulate_capture, BandOfInterest, Band,
    CaptureSetup, ImpairmentConfig, MeasurementTrace, NotchSpec, QpskParams,
};
use serde_json::Value;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_notchprobe"))
}

fn small_trace() -> MeasurementTrace {
    let w = generate_rrc_qpsk(&QpskParams {
        n_symbols: 4096,
        ..Default::default()
    })
    .unwrap();
    let boi = BandOfInterest::symmetric(44e9).unwrap();
    let f = build_filter(&NotchSpec::dual(20e9, 2e9), &w.transform_grid(), f64::NEG_INFINITY).unwrap();
    let p = apply_perturbation(&w, &f, true, &boi).unwrap();
    let cfg = ImpairmentConfig {
        nfl_tx_db: Some(-21.0),
        seed: 5,
        ..Default::default()
    };
    simulate_capture(&p, &cfg, &CaptureSetup { captures: 2, ..Default::default() }, 0).unwrap()
}

#[test]
fn exported_trace_reimports_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let t = small_trace();
    let csv = write_trace(dir.path(), "t", &t, None).unwrap();
    let (back, meta) = import_trace(&csv, None).unwrap();
    assert!(back.spectrum.grid.same_as(&t.spectrum.grid));
    for (a, b) in back.spectrum.psd.iter().zip(&t.spectrum.psd) {
        assert!((a - b).abs() <= 1e-9 * b.abs(), "{a} vs {b}");
    }
    assert_eq!(back.snapped, t.snapped);
    assert_eq!(back.notch, t.notch);
    assert_eq!(back.norm, t.norm);
    assert_eq!(back.stage, t.stage);
    assert_eq!(meta.averages, t.spectrum.averages);
    assert!(back.truth.is_none());
}

#[test]
fn descending_file_is_reversed() {
    let dir = tempfile::tempdir().unwrap();
    let t = small_trace();
    let text = trace_csv(&t.spectrum, t.reference_psd);
    let mut lines: Vec<&str> = text.lines().collect();
    lines[1..].reverse();
    let up = dir.path().join("up.csv");
    let down = dir.path().join("down.csv");
    std::fs::write(&up, &text).unwrap();
    std::fs::write(&down, lines.join("\n")).unwrap();
    let (a, _) = import_trace(&up, None).unwrap();
    let (b, _) = import_trace(&down, None).unwrap();
    assert_eq!(a.spectrum, b.spectrum);
}

#[test]
fn malformed_rows_name_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.csv");
    std::fs::write(&p, "freq_hz,psd_db\n0,1\n1,2\n2,oops\n").unwrap();
    let e = import_trace(&p, None).unwrap_err();
    assert_eq!(e.exit_code(), 2);
    assert!(e.to_string().contains("row 4"), "{e}");
    std::fs::write(&p, "freq_hz,psd_db\n0,1\n2,2\n1,2\n").unwrap();
    let e = import_trace(&p, None).unwrap_err();
    assert_eq!(e.exit_code(), 2);
    assert!(e.to_string().contains("monotone"), "{e}");
}

#[test]
fn osa_trace_resampled_to_finer_grid_keeps_band_power() {
    // smooth spectrum on 150 MHz centres, resampled to 50 MHz
    let shape = |f: f64| -3.0 + 2.0 * (2.0 * std::f64::consts::PI * f / 17e9).cos() - 0.5 * (f / 30e9).powi(2);
    let rows: Vec<(f64, f64)> = (-300..=300).map(|k| (150e6 * k as f64, shape(150e6 * k as f64))).collect();
    let (grid, psd) = resample(&rows, Some(50e6)).unwrap();
    assert_eq!(grid.f_step, 50e6);
    for (lo_k, hi_k) in [(-200i32, 200i32), (-50, 120), (10, 11)] {
        let band = Band {
            lo: 150e6 * lo_k as f64 + 75e6,
            hi: 150e6 * hi_k as f64 + 75e6,
        };
        let coarse: f64 = rows
            .iter()
            .filter(|r| band.contains(r.0))
            .map(|r| from_db(r.1) * 150e6)
            .sum();
        let fine: f64 = grid
            .freqs()
            .zip(&psd)
            .filter(|(f, _)| band.contains(*f))
            .map(|(_, p)| p * 50e6)
            .sum();
        assert!((fine / coarse - 1.0).abs() < 1e-3, "{lo_k}..{hi_k}: {}", fine / coarse - 1.0);
    }
}

fn run(args: &[&str]) -> i32 {
    bin().args(args).output().unwrap().status.code().unwrap()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = d.join("out");
    let out = out.to_str().unwrap();
    let write = |name: &str, text: &str| {
        let p = d.join(name);
        std::fs::write(&p, text).unwrap();
        p.to_str().unwrap().to_string()
    };
    assert_eq!(run(&["--version"]), 0);
    assert_eq!(run(&[]), 1);
    assert_eq!(run(&["stitch"]), 1);
    assert_eq!(run(&["frobnicate"]), 1);
    let flat = scenario("flat-21db.toml");
    let flat = flat.to_str().unwrap();
    assert_eq!(run(&["stitch", "--scenario", flat, "--repeats", "3", "--out", out]), 1);

    let bad = write("bad.toml", "[waveform\nbaud = 1\n");
    assert_eq!(run(&["psd", "--scenario", &bad, "--out", out]), 2);
    let unknown = write("unknown.toml", "[waveform]\nbaud = 95e9\ncolour = 1\n");
    assert_eq!(run(&["psd", "--scenario", &unknown, "--out", out]), 2);

    let outside = write(
        "outside.toml",
        "[waveform]\nbaud = 95e9\n[plan]\nwidth_hz = 2e9\ncenters_hz = [1e9, 60e9]\n",
    );
    let o = bin().args(["stitch", "--scenario", &outside, "--out", out]).output().unwrap();
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("plan notch 1"));
    assert_eq!(run(&["skew", "--scenario", flat, "--out", out]), 3);

    let edge = write(
        "edge.toml",
        "[waveform]\nbaud = 95e9\nn_symbols = 4096\n[impairments]\nnfl_tx_db = -30.0\nskew_ps = 1.0\n\
         [capture]\nrbw_hz = 200e6\n[skew]\nlo_ps = -1.0\nhi_ps = 0.0\nrepeats = 1\ncaptures = 2\n",
    );
    assert_eq!(run(&["skew", "--scenario", &edge, "--out", out]), 4);

    let missing = d.join("nope.toml");
    assert_eq!(run(&["psd", "--scenario", missing.to_str().unwrap(), "--out", out]), 5);
    let psd = scenario("psd-notch.toml");
    let blocked = write("file", "");
    let blocked_out = format!("{blocked}/sub");
    assert_eq!(run(&["psd", "--scenario", psd.to_str().unwrap(), "--out", &blocked_out]), 5);
    assert_eq!(run(&["psd", "--scenario", psd.to_str().unwrap(), "--out", out]), 0);
    assert!(d.join("out/report.json").exists());
}

#[test]
fn output_directory_priority() {
    let p = |s: &str| PathBuf::from(s);
    assert_eq!(resolve_out(Some(&p("a")), Some(&p("b")), Some(&p("c")), "x"), p("a"));
    assert_eq!(resolve_out(None, Some(&p("b")), Some(&p("c")), "x"), p("b"));
    assert_eq!(resolve_out(None, None, Some(&p("c")), "x"), p("c/x"));
    assert_eq!(resolve_out(None, None, None, "x"), p("notchprobe-out/x"));
}

#[test]
fn env_var_sets_default_output() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["psd", "--scenario", scenario("psd-notch.toml").to_str().unwrap()])
        .env("NOTCHPROBE_OUT", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("psd-notch/report.json").exists());
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv" || e == "toml"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn same_seed_same_payload() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let path = scenario("psd-notch.toml");
    for (d, seed) in [(&a, 9), (&b, 9), (&c, 10)] {
        let ov = Overrides {
            out: Some(d.path().to_path_buf()),
            seed: Some(seed),
            repeats: None,
        };
        run_scenario(&path, ScenarioKind::Psd, &ov).unwrap();
    }
    assert_eq!(without_timing(report(a.path())), without_timing(report(b.path())));
    assert_eq!(files(a.path()), files(b.path()));
    assert_ne!(files(a.path()), files(c.path()));
    assert_eq!(report(a.path())["scenario_echo"]["impairments"]["seed"], 9);
}

#[test]
fn stitch_report_on_flat_floor() {
    let d = tempfile::tempdir().unwrap();
    let ov = Overrides {
        out: Some(d.path().to_path_buf()),
        ..Default::default()
    };
    let (r, _) = run_scenario(&scenario("flat-21db.toml"), ScenarioKind::Stitch, &ov).unwrap();
    let v = r.to_value();
    let err = v["truth"]["nfl_rms_error_db"].as_f64().unwrap();
    assert!(err <= 0.3, "{err}");
    assert_eq!(v["outputs"]["grid"]["n_bins"], v["outputs"]["nfl_db"].as_array().unwrap().len());
    assert_eq!(std::fs::read_dir(d.path().join("traces")).unwrap().count(), 44);
    let (imported, _) = import_trace(&d.path().join("traces/notch_000.csv"), None).unwrap();
    assert_eq!(imported.notch, Some(NotchSpec::dual(1e9, 2e9)));
}

#[test]
fn skew_report_spread() {
    let d = tempfile::tempdir().unwrap();
    let ov = Overrides {
        out: Some(d.path().to_path_buf()),
        repeats: Some(8),
        ..Default::default()
    };
    let (r, _) = run_scenario(&scenario("skew-0p75ps.toml"), ScenarioKind::Skew, &ov).unwrap();
    let v = r.to_value();
    assert!(v["outputs"]["std_ps"].as_f64().unwrap() <= 0.1);
    assert!(v["truth"]["error_ps"].as_f64().unwrap().abs() <= 0.1);
    assert_eq!(v["outputs"]["repeats_ps"].as_array().unwrap().len(), 8);
    let csv = std::fs::read_to_string(d.path().join("cost_curve.csv")).unwrap();
    assert!(csv.starts_with("tau_ps,mean_cost_db,repeat_0_db,"));
    assert_eq!(csv.lines().count(), 13);
}

#[test]
fn xtalk_without_impairments_shows_no_discrepancy() {
    let d = tempfile::tempdir().unwrap();
    let ov = Overrides {
        out: Some(d.path().to_path_buf()),
        ..Default::default()
    };
    let (r, _) = run_scenario(&scenario("xtalk-off.toml"), ScenarioKind::Xtalk, &ov).unwrap();
    let o = &r.to_value()["outputs"];
    let mean = o["mean_discrepancy_db"].as_f64().unwrap();
    let rms = o["rms_discrepancy_db"].as_f64().unwrap();
    // two independent estimates of the same floor: only estimator scatter
    assert!(mean.abs() < 0.1, "{mean}");
    assert!(rms < 0.4, "{rms}");
}

#[test]
fn shipped_scenarios_load() {
    for e in std::fs::read_dir(Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")).unwrap() {
        let p = e.unwrap().path();
        notchprobe::scenario::load_scenario(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
    let s = notchprobe::scenario::load_scenario(&scenario("wlai-dn-2ghz.toml")).unwrap();
    let plan = s.stitch_plan().unwrap().unwrap();
    assert!(plan.notches.iter().all(|n| n.width_nw == 2e9 && n.kind == notchprobe_core::NotchKind::Dual));
}
