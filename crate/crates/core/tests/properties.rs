use ndarray::Array2;
use proptest::prelude::*;

use pcen_detect::evaluation::{
    calibrate_threshold, clip_score, count_false_alarms, CountingMode, DistanceBin, PositiveClip,
};
use pcen_detect::frontend::{spectrogram, SpectrogramConfig};
use pcen_detect::novelty::{detect, pcen_max, sf_avg, sf_max};
use pcen_detect::pcen::{pcen, smooth, softplus_flux, PcenParams};
use pcen_detect::synthesis::{attenuate, PropagationModel};
use pcen_detect::{Detector, NoveltyCurve, Spectrogram, Waveform};

fn positive_spectrogram(max_frames: usize, max_bands: usize) -> impl Strategy<Value = Spectrogram> {
    (2..=max_frames, 1..=max_bands).prop_flat_map(|(t, f)| {
        prop::collection::vec(0.01f64..100.0, t * f).prop_map(move |v| {
            Spectrogram::from_values(Array2::from_shape_vec((t, f), v).unwrap(), 100.0).unwrap()
        })
    })
}

fn waveform() -> impl Strategy<Value = Waveform> {
    prop::collection::vec(-1.0f64..1.0, 600..1_200).prop_map(|v| Waveform::new(v, 22_050).unwrap())
}

fn curve(values: Vec<f64>) -> NoveltyCurve {
    NoveltyCurve::new(values, 100.0, Detector::PcenMax)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pcen_log_limit_is_gain_invariant(e in positive_spectrogram(40, 8), s in 0.01f64..=1.0, k in 1e-3f64..1e3) {
        let p = PcenParams::log_limit(s);
        let a = pcen(&e, &p).unwrap();
        let b = pcen(&e.scaled(k), &p).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
    }

    #[test]
    fn detectors_are_gain_invariant(e in positive_spectrogram(40, 8), k in 1e-3f64..1e3) {
        for d in Detector::ALL {
            let a = detect(&e, d, 0.2).unwrap();
            let b = detect(&e.scaled(k), d, 0.2).unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x - y).abs() <= 1e-6, "{d}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn smoother_stays_within_input_range(e in positive_spectrogram(40, 6), s in 0.01f64..=1.0) {
        let m = smooth(&e, s).unwrap();
        for f in 0..e.n_bands() {
            let col = e.values().column(f);
            let hi = col.iter().copied().fold(f64::MIN, f64::max);
            let lo = col.iter().copied().fold(f64::MAX, f64::min);
            for &v in m.values().column(f) {
                prop_assert!(v >= lo * (1.0 - 1e-12) && v <= hi * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn pcen_approaches_softplus_flux_as_r_shrinks(e in positive_spectrogram(30, 6)) {
        let flux = softplus_flux(&e).unwrap();
        let dev = |r: f64| {
            let p = PcenParams { s: 1.0, epsilon: 0.0, alpha: 1.0, delta: 1.0, r };
            let out = pcen(&e, &p).unwrap();
            out.rows().into_iter().zip(flux.rows()).skip(1)
                .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).collect::<Vec<_>>())
                .fold(0.0, f64::max)
        };
        let devs: Vec<f64> = [1e-1, 1e-2, 1e-3, 1e-4].into_iter().map(dev).collect();
        for w in devs.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
        let p0 = PcenParams::log_limit(1.0);
        let p6 = PcenParams { r: 1e-6, ..p0 };
        let (a, b) = (pcen(&e, &p0).unwrap(), pcen(&e, &p6).unwrap());
        for (x, y) in a.iter().zip(b.iter()) {
            prop_assert!((x - y).abs() < 1e-4);
        }
    }

    #[test]
    fn softplus_dominates_relu(e in positive_spectrogram(30, 6)) {
        let flux = softplus_flux(&e).unwrap();
        let v = e.values();
        for t in 1..v.nrows() {
            for f in 0..v.ncols() {
                let relu = (v[[t, f]].ln() - v[[t - 1, f]].ln()).max(0.0);
                prop_assert!(flux[[t, f]] >= relu - 1e-12);
            }
        }
    }

    #[test]
    fn sf_max_bounds_sf_avg(e in positive_spectrogram(30, 8)) {
        let (a, m) = (sf_avg(&e).unwrap(), sf_max(&e).unwrap());
        for (x, y) in a.values().iter().zip(m.values()) {
            prop_assert!(*x <= y.max(0.0) + 1e-12);
            prop_assert!(*x >= 0.0);
        }
    }

    #[test]
    fn pcen_max_at_s_one_dominates_sf_max_on_shared_argmax(e in positive_spectrogram(30, 8)) {
        let p = pcen_max(&e, 1.0).unwrap();
        let m = sf_max(&e).unwrap();
        let v = e.values();
        for t in 1..v.nrows() {
            let argmax = |g: &dyn Fn(usize) -> f64| (0..v.ncols()).max_by(|&a, &b| g(a).total_cmp(&g(b))).unwrap();
            let ratio = argmax(&|f| v[[t, f]] / v[[t - 1, f]]);
            let diff = argmax(&|f| v[[t, f]].ln() - v[[t - 1, f]].ln());
            if ratio == diff {
                prop_assert!(p.values()[t] >= m.values()[t] - 1e-12);
            }
        }
    }

    #[test]
    fn threshold_shifts_with_scores(scores in prop::collection::vec(0.0f64..10.0, 2..40), c in -5.0f64..5.0) {
        let clips = |shift: f64| -> Vec<PositiveClip> {
            scores.iter().enumerate().map(|(i, &s)| PositiveClip {
                clip_id: format!("c{i:02}"),
                distance: 1.0,
                curve: curve(vec![0.0, s + shift]),
            }).collect()
        };
        let bin = DistanceBin { lo: 0.0, hi: f64::INFINITY };
        let (a, b) = (clips(0.0), clips(c));
        let ta = calibrate_threshold(bin, &a.iter().collect::<Vec<_>>()).unwrap();
        let tb = calibrate_threshold(bin, &b.iter().collect::<Vec<_>>()).unwrap();
        prop_assert!((tb.threshold - ta.threshold - c).abs() < 1e-9);
        prop_assert_eq!(ta.recall, tb.recall);
    }

    #[test]
    fn false_alarms_antitone_in_threshold(values in prop::collection::vec(0.0f64..5.0, 1..200), t1 in 0.0f64..5.0, t2 in 0.0f64..5.0) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        for mode in [CountingMode::Frames, CountingMode::Peaks] {
            prop_assert!(count_false_alarms(&values, lo, mode) >= count_false_alarms(&values, hi, mode));
        }
    }

    #[test]
    fn spectrogram_is_homogeneous(w in waveform(), k in 0.01f64..100.0) {
        let cfg = SpectrogramConfig::avian();
        let a = spectrogram(&w, &cfg).unwrap();
        let b = spectrogram(&w.scaled(k), &cfg).unwrap();
        for (x, y) in a.values().iter().zip(b.values().iter()) {
            prop_assert!((k * x - y).abs() <= 1e-6 * (k * x).abs().max(1e-12));
        }
    }

    #[test]
    fn attenuation_is_linear(w in waveform(), k in -10.0f64..10.0, d in 1.0f64..800.0) {
        let model = PropagationModel::atmospheric();
        let a = attenuate(&w, &model, d).unwrap();
        let b = attenuate(&w.scaled(k), &model, d).unwrap();
        let scale = a.peak().max(1e-12) * k.abs().max(1.0);
        for (x, y) in a.samples().iter().zip(b.samples()) {
            prop_assert!((k * x - y).abs() <= 1e-6 * scale);
        }
    }

    #[test]
    fn received_energy_decreases_with_distance(w in waveform(), d in 1.0f64..400.0, step in 1.0f64..200.0) {
        prop_assume!(w.rms() > 0.0);
        let model = PropagationModel::atmospheric();
        let energy = |d: f64| attenuate(&w, &model, d).unwrap().samples().iter().map(|x| x * x).sum::<f64>();
        prop_assert!(energy(d + step) < energy(d));
    }
}

#[test]
fn clip_score_skips_warm_up_frame() {
    assert_eq!(clip_score(&curve(vec![9.0, 1.0, 2.0])), 2.0);
}
