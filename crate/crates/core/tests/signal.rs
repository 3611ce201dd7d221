use neuroguide::signal::wavelet::{wavedec, Wavelet};
use neuroguide::signal::{
    calibrate_baseline, optical_density, process_recording, wavelet_motion_correct, ExtinctionModel, Pipeline, PipelineConfig,
    RawFrame, WaveletName,
};
use neuroguide::sim::{generate_fnirs, GeneratorConfig, LoadScript};
use proptest::prelude::*;

fn recorded_stream(seed: u64) -> (PipelineConfig, Vec<RawFrame>) {
    let cfg = PipelineConfig::default();
    let mut script = LoadScript::preset("mixed").unwrap();
    // frequent motion spikes so the wavelet stage has work to do
    script.artifacts.rate_per_min = 6.0;
    let frames = generate_fnirs(&script, &cfg, &GeneratorConfig::default(), seed, 30.0, 90.0).unwrap();
    (cfg, frames)
}

#[test]
fn streaming_equals_batch_after_one_window() {
    let (cfg, frames) = recorded_stream(3);
    let baseline = calibrate_baseline(&frames[..300], &cfg).unwrap();
    let mut p = Pipeline::new(cfg.clone(), baseline.clone()).unwrap();
    let streamed: Vec<_> = frames.iter().cloned().filter_map(|f| p.push(f).unwrap()).collect();
    let batch = process_recording(&cfg, &baseline, &frames).unwrap();
    assert_eq!(streamed.len(), batch.len());
    let mut worst: f64 = 0.0;
    for (s, b) in streamed.iter().zip(&batch).skip(cfg.window_len()) {
        assert_eq!(s.timestamp_ns, b.timestamp_ns);
        assert_eq!(s.quality, b.quality);
        for (x, y) in s.hbo.iter().chain(&s.hbr).zip(b.hbo.iter().chain(&b.hbr)) {
            worst = worst.max((x - y).abs());
        }
    }
    assert!(worst <= 1e-9, "{worst}");
}

#[test]
fn identical_streams_give_bit_identical_output() {
    let (cfg, frames) = recorded_stream(8);
    let baseline = calibrate_baseline(&frames[..300], &cfg).unwrap();
    let run = || {
        let mut p = Pipeline::new(cfg.clone(), baseline.clone()).unwrap();
        frames.iter().cloned().filter_map(|f| p.push(f).unwrap()).collect::<Vec<_>>()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert!(x.hbo.iter().zip(&y.hbo).all(|(p, q)| p.to_bits() == q.to_bits()));
        assert!(x.hbr.iter().zip(&y.hbr).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
}

fn invertible() -> impl Strategy<Value = [[f64; 2]; 2]> {
    [[0.05f64..5.0, 0.05f64..5.0], [0.05f64..5.0, 0.05f64..5.0]]
        .prop_filter("well conditioned", |e| (e[0][0] * e[1][1] - e[0][1] * e[1][0]).abs() > 1e-3 * (e[0][0] * e[1][1]).abs())
}

proptest! {
    #[test]
    fn beer_lambert_round_trip(
        e in invertible(),
        l in 0.5f64..5.0,
        dpf in [3.0f64..8.0, 3.0f64..8.0],
        c in [-50.0f64..50.0, -50.0f64..50.0],
    ) {
        let m = ExtinctionModel::new(e, l, dpf).unwrap();
        let back = m.invert(m.forward(c));
        let scale = c[0].abs().max(c[1].abs()).max(1e-6);
        // The relative bound scales with the matrix conditioning.
        let det = (e[0][0] * e[1][1] - e[0][1] * e[1][0]).abs();
        let cond = (e.iter().flatten().map(|x| x * x).sum::<f64>()) / det;
        for k in 0..2 {
            prop_assert!((back[k] - c[k]).abs() / scale <= 1e-9f64.max(1e-13 * cond), "{back:?} vs {c:?}");
        }
    }

    #[test]
    fn od_is_zero_at_the_baseline_mean(i0 in 1e-3f64..1e7) {
        prop_assert!(optical_density(i0, i0).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn thresholding_never_adds_detail_energy(xs in prop::collection::vec(-5.0f64..5.0, 100), spike in 0usize..100, height in 0.0f64..50.0) {
        let cfg = PipelineConfig::default();
        let mut x = xs;
        x[spike] += height;
        let w = Wavelet::new(WaveletName::Db5);
        let levels = cfg.decomposition_levels();
        let energy = |v: &[f64]| wavedec(&w, v, levels).details.iter().flatten().map(|c| c * c).sum::<f64>();
        let corrected = wavelet_motion_correct(&x, &cfg).unwrap();
        prop_assert!(energy(&corrected.series) <= energy(&x) * (1.0 + 1e-9) + 1e-9);
    }
}
