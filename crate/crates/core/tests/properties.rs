use std::f64::consts::PI;
use std::sync::OnceLock;

use notchprobe_core::fft::{fft, ifft};
use notchprobe_core::stitching::notch_tag;
use notchprobe_core::*;
use proptest::prelude::*;

fn small_wfm() -> &'static ComplexWaveform {
    static W: OnceLock<ComplexWaveform> = OnceLock::new();
    W.get_or_init(|| {
        generate_rrc_qpsk(&QpskParams {
            n_symbols: 2048,
            ..Default::default()
        })
        .unwrap()
    })
}

fn boi() -> BandOfInterest {
    BandOfInterest::symmetric(44e9).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn grid_bins_map_exactly(start in -1e11f64..1e11, step in 1e3f64..1e9, n in 2usize..5000, k in 0usize..5000) {
        let g = FrequencyGrid::new(start, step, n).unwrap();
        let k = k % n;
        prop_assert_eq!(g.freq(k), start + k as f64 * step);
        prop_assert_eq!(g.index_of(g.freq(k)), Some(k));
    }

    #[test]
    fn psd_is_non_negative_and_keeps_power(seed in any::<u64>(), rolloff in 0.0f64..1.0) {
        let w = generate_rrc_qpsk(&QpskParams { n_symbols: 1024, rolloff, seed, ..Default::default() }).unwrap();
        let p = estimate_psd(&w, 400e6, Polarization::X).unwrap();
        prop_assert!(p.psd.iter().all(|v| *v >= 0.0));
        let rel = p.total_power() / w.mean_power(Polarization::X) - 1.0;
        prop_assert!(rel.abs() < 1e-3, "{}", rel);
    }

    #[test]
    fn on_grid_frequency_shift_moves_psd_bin_exactly(m in -40i64..40) {
        let w = small_wfm();
        let plan = WelchPlan::for_resolution(w.len(), w.sample_rate(), 400e6).unwrap();
        let df = plan.bin_width();
        let fs = w.sample_rate();
        let shifted: Vec<Complex> = w
            .pol_x()
            .iter()
            .enumerate()
            .map(|(n, v)| v * Complex::from_polar(1.0, 2.0 * PI * m as f64 * df * n as f64 / fs))
            .collect();
        let s = ComplexWaveform::new(fs, shifted, None).unwrap();
        let a = plan.estimate(w, Polarization::X).unwrap();
        let b = plan.estimate(&s, Polarization::X).unwrap();
        let len = a.psd.len() as i64;
        for k in 0..len {
            let j = (k + m).rem_euclid(len) as usize;
            let (x, y) = (a.psd[k as usize], b.psd[j]);
            prop_assert!((x - y).abs() <= 1e-9 * x.max(1e-300), "bin {}: {} vs {}", k, x, y);
        }
    }

    #[test]
    fn notch_filter_gain_structure(nc in -40e9f64..40e9, nw in 0.5e9f64..8e9, dual in any::<bool>()) {
        let spec = if dual { NotchSpec::dual(nc, nw) } else { NotchSpec::single(nc, nw) };
        let g = small_wfm().transform_grid();
        let Ok(f) = build_filter(&spec, &g, f64::NEG_INFINITY) else { return Ok(()) };
        let (_, snapped) = f.notch.unwrap();
        for (k, fr) in g.freqs().enumerate() {
            let gain = f.gain[k];
            prop_assert!(gain >= 0.0);
            if snapped.is_notched(fr) {
                prop_assert_eq!(gain, 0.0);
            } else {
                prop_assert_eq!(gain, 1.0);
            }
        }
        prop_assert_eq!(snapped.mirror, snapped.primary.mirrored());
        if dual {
            for (k, fr) in g.freqs().enumerate() {
                if let Some(j) = g.index_of(-fr) {
                    prop_assert_eq!(f.gain[k], f.gain[j]);
                }
            }
        }
    }

    #[test]
    fn norm_matches_measured_power_ratio(nc in 1e9f64..40e9, nw in 0.5e9f64..6e9) {
        let w = small_wfm();
        let spec = NotchSpec::dual(nc, nw);
        let Ok(f) = build_filter(&spec, &w.transform_grid(), f64::NEG_INFINITY) else { return Ok(()) };
        let norm = normalization_factor(w, &f, &boi()).unwrap();
        prop_assert!(norm > 0.0 && norm <= 1.0);
        let p = apply_perturbation(w, &f, false, &boi()).unwrap();
        let band = |x: &ComplexWaveform| -> f64 {
            let s = fft(x.pol_x());
            let g = x.transform_grid();
            let b = boi().band();
            // transform grid is centered, fft output is in natural order
            g.freqs().enumerate().filter(|(_, fr)| b.contains(*fr)).map(|(k, _)| {
                let idx = (k + x.len() / 2) % x.len();
                s[idx].norm_sqr()
            }).sum()
        };
        let ratio = band(&p.wfm) / band(w);
        prop_assert!((ratio / norm - 1.0).abs() < 1e-9, "{} vs {}", ratio, norm);
        let q = apply_perturbation(w, &f, true, &boi()).unwrap();
        prop_assert!((band(&q.wfm) / band(w) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn flat_crosstalk_matches_time_domain_mixing(cii in 0.5f64..1.5, cqq in 0.5f64..1.5, cqi in -0.3f64..0.3, ciq in -0.3f64..0.3) {
        let w = small_wfm();
        let profile = CrosstalkProfile {
            points: vec![CrosstalkPoint {
                freq_hz: 0.0,
                c_ii: Complex::new(cii, 0.0),
                c_qq: Complex::new(cqq, 0.0),
                c_qi: Complex::new(cqi, 0.0),
                c_iq: Complex::new(ciq, 0.0),
            }],
        };
        let out = apply_iq_crosstalk(w, &profile.sample(&w.transform_grid()).unwrap()).unwrap();
        for (x, y) in w.pol_x().iter().zip(out.pol_x()) {
            let i = cii * x.re + cqi * x.im;
            let q = ciq * x.re + cqq * x.im;
            prop_assert!((y.re - i).abs() < 1e-12 && (y.im - q).abs() < 1e-12);
        }
    }

    #[test]
    fn crosstalk_sampling_is_hermitian(fs in prop::collection::vec((1e9f64..45e9, -0.2f64..0.2, -0.2f64..0.2, -0.2f64..0.2), 1..6)) {
        let mut pts: Vec<CrosstalkPoint> = fs
            .iter()
            .map(|&(f, a, b, c)| CrosstalkPoint::new(f, Complex::new(a, b), Complex::new(c, -a)))
            .collect();
        pts.sort_by(|a, b| a.freq_hz.total_cmp(&b.freq_hz));
        pts.dedup_by(|a, b| a.freq_hz == b.freq_hz);
        let g = small_wfm().transform_grid();
        let s = CrosstalkProfile { points: pts }.sample(&g).unwrap();
        for (k, f) in g.freqs().enumerate() {
            if let Some(j) = g.index_of(-f) {
                for c in [&s.c_ii, &s.c_qq, &s.c_qi, &s.c_iq] {
                    prop_assert!((c[k] - c[j].conj()).norm() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn skew_touches_only_q_and_inverts(tau in -1.0f64..1.0) {
        // the unpaired Nyquist bin only keeps its cosine part, so leave it empty
        let mut spec = fft(small_wfm().pol_x());
        let n = spec.len();
        spec[n / 2] = Complex::new(0.0, 0.0);
        let w = &ComplexWaveform::new(small_wfm().sample_rate(), ifft(&spec), None)
            .unwrap()
            .with_symbol_rate(95e9);
        let s = apply_skew(w, tau).unwrap();
        let back = apply_skew(&s, -tau).unwrap();
        for ((a, b), c) in w.pol_x().iter().zip(s.pol_x()).zip(back.pol_x()) {
            prop_assert!((a.re - b.re).abs() < 1e-12);
            prop_assert!((a - c).norm() < 1e-9);
        }
    }

    #[test]
    fn dac_error_within_half_step(bits in 3u32..16, scale in 0.01f64..100.0) {
        let w = small_wfm().scaled(scale);
        let q = quantize_dac(&w, bits).unwrap();
        let fs = w.pol_x().iter().map(|v| v.re.abs().max(v.im.abs())).fold(0.0, f64::max);
        let step = 2.0 * fs / (1u64 << bits) as f64;
        for (a, b) in w.pol_x().iter().zip(q.pol_x()) {
            prop_assert!((a.re - b.re).abs() <= step / 2.0 * (1.0 + 1e-9));
            prop_assert!((a.im - b.im).abs() <= step / 2.0 * (1.0 + 1e-9));
            // mid-rise levels are odd multiples of half a step
            let lv = b.re / (step / 2.0);
            prop_assert!((lv - lv.round()).abs() < 1e-6 && (lv.round() as i64).rem_euclid(2) == 1);
        }
    }

    #[test]
    fn sweeps_cover_without_overlap(half in 5e9f64..60e9, nw in 0.7e9f64..8e9) {
        let boi = BandOfInterest::symmetric(half).unwrap();
        for plan in [StitchPlan::dual_sweep(boi, nw).unwrap(), StitchPlan::single_sweep(boi, nw).unwrap()] {
            prop_assert!(plan.uncovered().is_empty());
            prop_assert!(plan.validate(nw / 4.0).is_ok());
        }
    }

    #[test]
    fn sndr_is_bin_ratio(vals in prop::collection::vec((1e-6f64..1e3, 1e-6f64..1e3), 2..50)) {
        let g = FrequencyGrid::new(0.0, 1.0, vals.len()).unwrap();
        let s = PowerSpectrum::new(g, vals.iter().map(|v| v.0).collect(), 1.0).unwrap();
        let n = PowerSpectrum::new(g, vals.iter().map(|v| v.1).collect(), 1.0).unwrap();
        let p = compute_sndr(&s, &n).unwrap();
        for (d, (a, b)) in p.sndr_db.iter().zip(&vals) {
            prop_assert!((d - 10.0 * (a / b).log10()).abs() < 1e-12);
        }
    }

    #[test]
    fn eye_closure_exact_on_lines(ec in 0.3f64..1.5, nsr in 0.0f64..0.1, xs in prop::collection::vec(1e-4f64..0.2, 2..20)) {
        let mut xs = xs;
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        prop_assume!(xs.len() >= 2 && xs[xs.len() - 1] - xs[0] > 1e-3);
        let pts: Vec<(f64, f64)> = xs.iter().map(|&x| (x, (nsr + x) / ec)).collect();
        let fit = eye_closure_fit(&pts).unwrap();
        prop_assert!((fit.ec / ec - 1.0).abs() < 1e-9);
        prop_assert!((fit.nsr_trx - nsr).abs() < 1e-9);
        prop_assert!(fit.residual < 1e-12);
    }
}

struct Stitched {
    traces: Vec<MeasurementTrace>,
    opts: StitchOptions,
}

fn stitched() -> &'static Stitched {
    static S: OnceLock<Stitched> = OnceLock::new();
    S.get_or_init(|| {
        let plan = StitchPlan::dual_sweep(boi(), 4e9).unwrap();
        let cfg = ImpairmentConfig {
            nfl_tx_db: Some(-21.0),
            seed: 2,
            ..Default::default()
        };
        let setup = CaptureSetup {
            rbw: 400e6,
            ..Default::default()
        };
        let opts = StitchOptions::default();
        Stitched {
            traces: run_plan(&plan, small_wfm(), &cfg, &setup, &opts).unwrap(),
            opts,
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn plan_order_changes_no_output_bin(perm in Just((0..11usize).collect::<Vec<_>>()).prop_shuffle()) {
        let s = stitched();
        prop_assert_eq!(s.traces.len(), 11);
        let shuffled: Vec<MeasurementTrace> = perm.iter().map(|&i| s.traces[i].clone()).collect();
        let a = stitch_nfl(&s.traces, &boi(), &s.opts).unwrap();
        let b = stitch_nfl(&shuffled, &boi(), &s.opts).unwrap();
        prop_assert_eq!(&a.spectrum, &b.spectrum);
        prop_assert_eq!(a.reference_psd, b.reference_psd);
        let tag = |t: &MeasurementTrace| notch_tag(&t.notch.unwrap());
        for (x, y) in a.owner.iter().zip(&b.owner) {
            prop_assert_eq!(tag(&s.traces[*x]), tag(&shuffled[*y]));
        }
        let sa = recover_signal_psd(&s.traces, &a, &s.opts).unwrap();
        let sb = recover_signal_psd(&shuffled, &b, &s.opts).unwrap();
        prop_assert_eq!(&sa.spectrum, &sb.spectrum);
        prop_assert_eq!(sa.clamped, sb.clamped);
    }
}
