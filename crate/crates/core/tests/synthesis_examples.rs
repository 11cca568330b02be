use pcen_detect::config::PipelineConfig;
use pcen_detect::evaluation::clip_score;
use pcen_detect::frontend::{
    mel_spectrogram, spectrogram, FreqScale, SpectrogramConfig, WindowKind,
};
use pcen_detect::novelty::pcen_max;
use pcen_detect::synthesis::{
    build_corpus, render_call, render_noise, CallKind, CallTemplate, CorpusConfig, NoiseScene,
};
use pcen_detect::Spectrogram;

fn argmax_per_frame(e: &Spectrogram) -> Vec<usize> {
    e.values()
        .rows()
        .into_iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0
        })
        .collect()
}

fn call(kind: CallKind, f_start: f64, f_end: f64, duration: f64) -> pcen_detect::Waveform {
    render_call(
        &CallTemplate {
            kind,
            f_start,
            f_end,
            duration,
            amplitude: 1.0,
        },
        22_050,
    )
    .unwrap()
}

#[test]
fn tone_burst_argmax_is_stable_near_5khz() {
    let cfg = SpectrogramConfig::avian();
    let e = mel_spectrogram(&call(CallKind::ToneBurst, 5_000.0, 5_000.0, 0.1), &cfg).unwrap();
    let bands = argmax_per_frame(&e);
    // frames clear of the 5 ms ramps
    let inner = &bands[8..bands.len() - 8];
    assert!(inner.iter().all(|&b| b == inner[0]));
    let centers = pcen_detect::frontend::MelFilterbank::new(&cfg, cfg.n_fft_bins())
        .unwrap()
        .centers_hz()
        .to_vec();
    let step = centers[inner[0] + 1] - centers[inner[0]];
    assert!((centers[inner[0]] - 5_000.0).abs() <= step);
}

#[test]
fn chirp_argmax_never_moves_down() {
    let cfg = SpectrogramConfig::avian();
    let e = mel_spectrogram(&call(CallKind::LinearChirp, 2_000.0, 10_000.0, 0.2), &cfg).unwrap();
    let bands = argmax_per_frame(&e);
    let inner = &bands[8..bands.len() - 8];
    assert!(inner.windows(2).all(|w| w[1] >= w[0]), "{inner:?}");
    assert!(inner.last() > inner.first());
}

#[test]
fn zero_amplitude_call_is_silent() {
    let w = render_call(
        &CallTemplate {
            kind: CallKind::LinearChirp,
            f_start: 2_000.0,
            f_end: 4_000.0,
            duration: 0.05,
            amplitude: 0.0,
        },
        22_050,
    )
    .unwrap();
    assert!(w.samples().iter().all(|&x| x == 0.0));
}

#[test]
fn stationary_noise_gives_flat_pcen() {
    let cfg = PipelineConfig::avian();
    let w = render_noise(&NoiseScene::am_engine(2.0, 0.1, 0.0, 0.05, 5), 22_050).unwrap();
    let e = spectrogram(&w, &cfg.spectrogram).unwrap();
    let curve = pcen_max(&e, cfg.pcen.s).unwrap();
    let tail = &curve.values()[100..];
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    let std = (tail.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / tail.len() as f64).sqrt();
    assert!(
        std < 0.05,
        "std {std:.4} (mean {mean:.3}); the maximum over 128 Rayleigh-like band ratios \
         has a spread near 0.1 after ln(1 + x)"
    );
}

#[test]
fn full_depth_modulation_alternates_band_energy() {
    let cfg = SpectrogramConfig {
        sample_rate: 2_000,
        window_length: 128,
        hop_length: 128,
        n_fft: 128,
        window: WindowKind::Hann,
        n_bands: 64,
        freq_scale: FreqScale::Linear,
        fmin: 8.0,
        fmax: 1_000.0,
    };
    let period = 2.0 * 128.0 / 2_000.0;
    let w = render_noise(&NoiseScene::am_engine(5.0, period, 1.0, 1.0, 9), 2_000).unwrap();
    let e = spectrogram(&w, &cfg).unwrap();
    let energy: Vec<f64> = e.values().rows().into_iter().map(|r| r.sum()).collect();
    for (t, pair) in energy.windows(2).enumerate() {
        let (on, off) = if t % 2 == 0 {
            (pair[1], pair[0])
        } else {
            (pair[0], pair[1])
        };
        assert_eq!(off, 0.0, "frame energies {pair:?}");
        assert!(on > 0.0);
    }
}

#[test]
fn mean_pcen_score_falls_with_distance() {
    let cfg = PipelineConfig::avian();
    let corpus_cfg = CorpusConfig {
        n_calls: 12,
        distances: vec![30.0, 100.0, 300.0],
        negative_duration: 10.0,
        ..cfg.corpus.clone()
    };
    let corpus = build_corpus(&corpus_cfg).unwrap();
    let means: Vec<f64> = corpus_cfg
        .distances
        .iter()
        .map(|&d| {
            let scores: Vec<f64> = corpus
                .positives
                .iter()
                .filter(|p| p.distance == d)
                .map(|p| {
                    let e = spectrogram(&p.waveform, &cfg.spectrogram).unwrap();
                    clip_score(&pcen_max(&e, cfg.pcen.s).unwrap())
                })
                .collect();
            scores.iter().sum::<f64>() / scores.len() as f64
        })
        .collect();
    assert!(means.windows(2).all(|w| w[1] < w[0]), "{means:?}");
}

#[test]
fn corpus_is_reproducible() {
    let cfg = CorpusConfig {
        n_calls: 2,
        distances: vec![30.0, 200.0],
        negative_duration: 3.0,
        scene_duration: 1.0,
        ..CorpusConfig::avian()
    };
    let (a, b) = (build_corpus(&cfg).unwrap(), build_corpus(&cfg).unwrap());
    assert_eq!(a.manifest(), b.manifest());
    for (x, y) in a.positives.iter().zip(&b.positives) {
        assert_eq!(x.waveform, y.waveform);
    }
    for (x, y) in a.negatives.iter().zip(&b.negatives) {
        assert_eq!(x.waveform, y.waveform);
    }
}
