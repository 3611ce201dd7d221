//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Expected values come from oracles written here,
//! independent of the library code they check.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use neuroguide::classifier::{
    fit_multinomial, loss_and_gradient, softmax, FacetModels, FeatureSpec, FeatureVector, FitOptions, WorkloadClassifier, WorkloadState,
};
use neuroguide::classifier::{classify_features, Facet, FeatureBaseline};
use neuroguide::policy::{
    all_combinations, decide_adaptive, select_strategy, CognitiveContext, Condition, InfoLoad, Modality, ModalitySet, PromptBundle,
    PromptCorpus, Reasoner, ReasonerError, RuleTable, TaskContext, WorkloadReadings,
};
use neuroguide::signal::wavelet::Wavelet;
use neuroguide::signal::{
    lowpass_filter, optical_density, process_recording, BaselineStats, ExtinctionModel, HemoSample, PipelineConfig, Quality, RawFrame,
    ThresholdMode, WaveletName,
};
use neuroguide::sim::{
    cyclic_latin_square, fixture_models, is_latin_square, log_odds_ratio, metrics_from_bag, rate_ratio, replay_session, run_session,
    LagConfig, LoadScript, SessionConfig, SessionMetrics,
};
use neuroguide::task::{Action, ChecklistSpec, ControlValue, EngineConfig, EventKind, Panel, TaskEngine};

type Check = std::result::Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn report(name: &str, r: Check) -> bool {
    match r {
        Ok(detail) => {
            println!("PASS  {name}: {detail}");
            true
        }
        Err(detail) => {
            println!("FAIL  {name}: {detail}");
            false
        }
    }
}

// ---------------------------------------------------------------- DSP

/// Magnitude of a digital Butterworth low-pass obtained by the bilinear
/// transform with prewarped cutoff.
fn digital_butterworth_db(order: usize, fc: f64, fs: f64, f: f64) -> f64 {
    let r = (PI * f / fs).tan() / (PI * fc / fs).tan();
    -10.0 * (1.0 + r.powi(2 * order as i32)).log10()
}

/// Steady-state gain of the library filter on a unit sinusoid, by least
/// squares on a sine/cosine pair after the transient has died out.
fn measured_gain_db(cfg: &PipelineConfig, f: f64) -> f64 {
    let fs = cfg.sample_rate_hz;
    let settle = (300.0 * fs) as usize;
    let n = settle + (30.0 / f * fs) as usize;
    let x: Vec<f64> = (0..n).map(|k| (2.0 * PI * f * k as f64 / fs).sin()).collect();
    let y = lowpass_filter(&x, cfg).expect("filter runs");
    let (mut ss, mut sc, mut cc, mut ys, mut yc) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (k, &v) in y.iter().enumerate().skip(settle) {
        let (s, c) = (2.0 * PI * f * k as f64 / fs).sin_cos();
        ss += s * s;
        sc += s * c;
        cc += c * c;
        ys += v * s;
        yc += v * c;
    }
    let det = ss * cc - sc * sc;
    let a = (ys * cc - yc * sc) / det;
    let b = (yc * ss - ys * sc) / det;
    20.0 * (a * a + b * b).sqrt().log10()
}

fn synthetic_stream(cfg: &PipelineConfig, seconds: f64, seed: u64) -> (BaselineStats, Vec<RawFrame>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (seconds * cfg.sample_rate_hz) as usize;
    let period = (1e9 / cfg.sample_rate_hz) as i64;
    let base: Vec<[f64; 2]> = (0..cfg.channel_count).map(|c| [900.0 + 10.0 * c as f64, 1200.0 + 5.0 * c as f64]).collect();
    let frames = (0..n)
        .map(|k| {
            let t = k as f64 / cfg.sample_rate_hz;
            let intens = base
                .iter()
                .map(|b| {
                    let slow = 1.0 + 0.01 * (2.0 * PI * 0.05 * t).sin();
                    [b[0] * slow * (1.0 + 1e-3 * rng.random::<f64>()), b[1] * slow * (1.0 + 1e-3 * rng.random::<f64>())]
                })
                .collect();
            RawFrame::new(k as i64 * period, intens)
        })
        .collect();
    let stats = BaselineStats { mean: base.clone(), variance: vec![[1.0, 1.0]; cfg.channel_count], frame_count: n };
    (stats, frames)
}

fn dsp() -> Check {
    let cfg = PipelineConfig::default();
    let shipped = PipelineConfig::from_toml_str(include_str!("../fixtures/pipeline.toml")).map_err(|e| e.to_string())?;
    ensure(shipped == cfg, "shipped pipeline config differs from defaults")?;
    ensure(cfg.sample_rate_hz == 10.0, "sample rate")?;
    ensure(cfg.channel_count == 18, "channel count")?;
    ensure(cfg.window_len() == 100, "window length")?;
    ensure(cfg.wavelet_name == WaveletName::Db5 && Wavelet::new(cfg.wavelet_name).dec_lo().len() == 10, "db5 wavelet")?;
    ensure(cfg.wavelet_threshold == 0.1 && cfg.threshold_mode == ThresholdMode::Scaled, "threshold 0.1")?;
    ensure(cfg.lowpass_cutoff_hz == 0.12, "cutoff")?;

    let probes = [0.01, 0.05, 0.12, 0.5, 1.0];
    let mut worst: f64 = 0.0;
    for f in probes {
        let want = digital_butterworth_db(cfg.lowpass_order, cfg.lowpass_cutoff_hz, cfg.sample_rate_hz, f);
        let got = measured_gain_db(&cfg, f);
        worst = worst.max((want - got).abs());
        ensure((want - got).abs() <= 1.0, format!("{f} Hz: analytic {want:.2} dB, measured {got:.2} dB"))?;
    }
    let cut = measured_gain_db(&cfg, 0.12);
    ensure((cut + 3.0103).abs() < 0.1, format!("gain at cutoff {cut:.3} dB"))?;

    let (stats, frames) = synthetic_stream(&cfg, 60.0, 1);
    let t = Instant::now();
    let hemo: Vec<HemoSample> = process_recording(&cfg, &stats, &frames).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    ensure(hemo.len() == 600 - 99, format!("{} hemo samples from 600 frames", hemo.len()))?;
    ensure(hemo[0].timestamp_ns == frames[99].timestamp_ns, "first output at the 100th frame")?;
    ensure(hemo.iter().all(|h| h.hbo.len() == 18 && h.hbr.len() == 18 && !h.is_gap()), "18 channels per sample, no gaps")?;
    ensure(elapsed < Duration::from_secs(5), format!("60 s stream took {elapsed:?}"))?;
    Ok(format!("constants honoured; worst filter deviation {worst:.3} dB over {probes:?} Hz; 60 s stream in {elapsed:.2?}"))
}

// -------------------------------------------------------- Beer-Lambert

fn solve2(m: [[f64; 2]; 2], b: [f64; 2]) -> [f64; 2] {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    [(b[0] * m[1][1] - m[0][1] * b[1]) / det, (m[0][0] * b[1] - b[0] * m[1][0]) / det]
}

fn beer_lambert() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let mut matrices = 0;
    while matrices < 10 {
        let e = [[rng.random_range(0.1..3.0), rng.random_range(0.1..3.0)], [rng.random_range(0.1..3.0), rng.random_range(0.1..3.0)]];
        let det: f64 = e[0][0] * e[1][1] - e[0][1] * e[1][0];
        if det.abs() < 0.05 {
            continue;
        }
        matrices += 1;
        let l = rng.random_range(1.0..4.0);
        let dpf = [rng.random_range(4.0..7.0), rng.random_range(4.0..7.0)];
        let model = ExtinctionModel::new(e, l, dpf).map_err(|e| e.to_string())?;
        // Independent forward model: OD_w = sum_k e[w][k] * L * DPF_w * c_k, c in µM.
        let m = [0, 1].map(|w| [0, 1].map(|k| e[w][k] * l * dpf[w] * 1e-3));
        for _ in 0..1000 {
            let c = [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)];
            let od = [m[0][0] * c[0] + m[0][1] * c[1], m[1][0] * c[0] + m[1][1] * c[1]];
            let fwd = model.forward(c);
            let back = model.invert(od);
            let oracle = solve2(m, od);
            let scale = c[0].abs().max(c[1].abs()).max(1e-12);
            for k in 0..2 {
                let rel = (back[k] - c[k]).abs() / scale;
                worst = worst.max(rel);
                ensure(rel <= 1e-9, format!("round trip error {rel:e}"))?;
                ensure((oracle[k] - c[k]).abs() / scale <= 1e-9, "oracle self-check")?;
                ensure((fwd[k] - od[k]).abs() <= 1e-12 * od[k].abs().max(1.0), "forward model disagrees with oracle")?;
            }
        }
    }
    let mut od_worst: f64 = 0.0;
    for _ in 0..1000 {
        let i0 = rng.random_range(1.0..1e5);
        let od = optical_density(i0, i0).map_err(|e| e.to_string())?;
        od_worst = od_worst.max(od.abs());
    }
    ensure(od_worst <= 1e-12, format!("OD at baseline {od_worst:e}"))?;
    Ok(format!("worst relative round-trip error {worst:.2e} over 10 x 1000; max |OD(baseline)| {od_worst:e}"))
}

// ---------------------------------------------------------- classifier

fn blobs(n_per: usize, dim: usize, sigma: f64, seed: u64) -> (Vec<FeatureVector>, Vec<WorkloadState>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = rand_distr::Normal::new(0.0, sigma).unwrap();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (k, s) in WorkloadState::ALL.into_iter().enumerate() {
        for _ in 0..n_per {
            // class centres 6 sigma apart along the first axis
            let values = (0..dim).map(|j| if j == 0 { 6.0 * sigma * k as f64 } else { 0.0 } + rng.sample(normal)).collect();
            xs.push(FeatureVector { values });
            ys.push(s);
        }
    }
    (xs, ys)
}

fn classifier() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_norm: f64 = 0.0;
    for _ in 0..10_000 {
        let scale = [1.0, 50.0, 700.0][rng.random_range(0..3)];
        let s = [0; 3].map(|_| rng.random_range(-scale..scale));
        let p = softmax(s);
        worst_norm = worst_norm.max((p.iter().sum::<f64>() - 1.0).abs());
        ensure(p.iter().all(|x| x.is_finite() && *x >= 0.0), "softmax produced a non-finite value")?;
    }
    ensure(worst_norm <= 1e-9, format!("softmax sums off by {worst_norm:e}"))?;

    let (xs, ys) = blobs(20, 5, 1.0, 4);
    let w: Vec<f64> = (0..3 * 6).map(|_| rng.random_range(-0.5..0.5)).collect();
    let l2 = 0.05;
    let (_, g) = loss_and_gradient(&w, &xs, &ys, l2);
    // Independent loss: mean cross-entropy plus ridge on non-bias weights.
    let loss = |w: &[f64]| {
        let mut total = 0.0;
        for (x, y) in xs.iter().zip(&ys) {
            let s: Vec<f64> = (0..3).map(|k| (0..5).map(|j| w[k * 6 + j] * x.values[j]).sum::<f64>() + w[k * 6 + 5]).collect();
            let lse = s.iter().map(|v| v.exp()).sum::<f64>().ln();
            total += lse - s[y.index()];
        }
        let ridge: f64 = (0..3).flat_map(|k| (0..5).map(move |j| k * 6 + j)).map(|i| w[i] * w[i]).sum();
        total / xs.len() as f64 + 0.5 * l2 * ridge
    };
    let h = 1e-6;
    let mut worst_grad: f64 = 0.0;
    for i in 0..w.len() {
        let (mut a, mut b) = (w.clone(), w.clone());
        a[i] += h;
        b[i] -= h;
        let fd = (loss(&a) - loss(&b)) / (2.0 * h);
        let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-8);
        worst_grad = worst_grad.max(rel);
    }
    ensure(worst_grad <= 1e-4, format!("gradient relative error {worst_grad:e}"))?;

    let (train_x, train_y) = blobs(200, 8, 1.0, 10);
    let (test_x, test_y) = blobs(200, 8, 1.0, 11);
    let spec = FeatureSpec::new(2, 100, 10.0);
    let (model, _) = fit_multinomial(Facet::Memory, spec.clone(), &train_x, &train_y, &FitOptions::default()).map_err(|e| e.to_string())?;
    let models = FacetModels { memory: model.clone(), attention: model.clone(), perception: model.clone() };
    let correct = test_x
        .iter()
        .zip(&test_y)
        .filter(|(x, y)| classify_features(x, 0, &models).map(|v| v.memory.state == **y).unwrap_or(false))
        .count();
    let acc = correct as f64 / test_x.len() as f64;
    ensure(acc >= 0.95, format!("held-out accuracy {acc}"))?;

    // Throughput on the bundled models at the pipeline's window size.
    let models = fixture_models();
    let spec = models.memory.feature_spec.clone();
    let mut clf = WorkloadClassifier::new(models, FeatureBaseline::identity(spec.dim())).map_err(|e| e.to_string())?;
    let n = 3000;
    let samples: Vec<HemoSample> = (0..n + spec.window_len)
        .map(|k| HemoSample {
            timestamp_ns: k as i64 * 100_000_000,
            hbo: (0..spec.channel_count).map(|c| (k as f64 * 0.01 + c as f64).sin()).collect(),
            hbr: (0..spec.channel_count).map(|c| (k as f64 * 0.02 + c as f64).cos()).collect(),
            quality: vec![Quality::Ok; spec.channel_count],
        })
        .collect();
    let t = Instant::now();
    let mut outputs = 0;
    for s in samples {
        outputs += clf.push(s).map_err(|e| e.to_string())?.is_some() as usize;
    }
    let elapsed = t.elapsed().as_secs_f64();
    let headroom = (outputs as f64 / 10.0) / elapsed;
    ensure(headroom >= 60.0, format!("headroom {headroom:.0}x"))?;
    Ok(format!(
        "softmax error {worst_norm:.1e}; gradient error {worst_grad:.1e}; 6-sigma accuracy {:.1}%; {headroom:.0}x real time",
        acc * 100.0
    ))
}

// ------------------------------------------------------------- timing

fn timing() -> Check {
    let spec = ChecklistSpec::fixture();
    let targets: Vec<(String, ControlValue)> = spec.steps().map(|(_, s)| (s.control.clone(), s.expect.target_value())).collect();
    let distractors: Vec<String> = spec.distractors().iter().map(|c| c.id.clone()).collect();
    let (g, to) = (10_000_000_000i64, 20_000_000_000i64);
    let mut checked = 0usize;
    for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start: i64 = rng.random_range(0..1_000_000_000_000);
        // Schedule: per step an optional distractor press, then the target.
        let mut actions: Vec<(i64, Action, bool)> = Vec::new();
        let mut t = start;
        let n_steps = rng.random_range(1..=targets.len());
        for (control, value) in targets.iter().take(n_steps) {
            if rng.random_bool(0.2) {
                t += rng.random_range(1..15_000_000_000);
                let d = &distractors[rng.random_range(0..distractors.len())];
                actions.push((t, Action { control_id: d.clone(), value: ControlValue::Number(rng.random_range(0.0..1e6)), timestamp_ns: t }, false));
            }
            t += rng.random_range(1..45_000_000_000);
            actions.push((t, Action { control_id: control.clone(), value: value.clone(), timestamp_ns: t }, true));
        }
        let end = t + rng.random_range(0..45_000_000_000);
        let complete = n_steps == targets.len();

        // Oracle: guidance 10 s after start or each completion, unless the
        // next completion comes first; timeouts every 20 s after start or
        // each action until the next action.
        let mut want_g = Vec::new();
        let mut want_t = Vec::new();
        let completions: Vec<i64> = actions.iter().filter(|a| a.2).map(|a| a.0).collect();
        let all: Vec<i64> = actions.iter().map(|a| a.0).collect();
        for (i, &anchor) in std::iter::once(&start).chain(completions.iter()).enumerate() {
            let next = completions.get(i).copied().unwrap_or(end);
            let finished = complete && i == completions.len();
            if !finished && anchor + g <= next {
                want_g.push(anchor + g);
            }
        }
        for (i, &anchor) in std::iter::once(&start).chain(all.iter()).enumerate() {
            let next = all.get(i).copied().unwrap_or(end);
            if complete && i == all.len() {
                continue;
            }
            let mut d = anchor + to;
            while d <= next {
                want_t.push(d);
                d += to;
            }
        }

        // Drive the engine on a random tick grid; at an action's time the
        // clock is processed before the world state.
        let mut engine = TaskEngine::new(spec.clone(), EngineConfig::default()).map_err(|e| e.to_string())?;
        let mut panel = Panel::new(&spec);
        let mut events = engine.start(start).map_err(|e| e.to_string())?;
        let mut now = start;
        let mut ai = 0;
        loop {
            let step = rng.random_range(1..3_000_000_000);
            let next_tick = (now + step).min(end);
            while ai < actions.len() && actions[ai].0 <= next_tick {
                let (at, action, _) = actions[ai].clone();
                events.extend(engine.tick(at).map_err(|e| e.to_string())?);
                panel.apply(action).map_err(|e| e.to_string())?;
                events.extend(engine.apply_world_state(&panel.world_state(at)).map_err(|e| e.to_string())?);
                ai += 1;
            }
            events.extend(engine.tick(next_tick).map_err(|e| e.to_string())?);
            now = next_tick;
            if now >= end {
                break;
            }
        }
        let got_g: Vec<i64> = events.iter().filter(|e| matches!(e.kind, EventKind::GuidanceDue { .. })).map(|e| e.timestamp_ns).collect();
        let got_t: Vec<i64> = events.iter().filter(|e| matches!(e.kind, EventKind::Timeout { .. })).map(|e| e.timestamp_ns).collect();
        ensure(got_g == want_g, format!("schedule {seed}: guidance {got_g:?} expected {want_g:?}"))?;
        ensure(got_t == want_t, format!("schedule {seed}: timeouts {got_t:?} expected {want_t:?}"))?;
        checked += got_g.len() + got_t.len();
    }
    Ok(format!("1000 schedules, {checked} timer events, zero deviation"))
}

// ------------------------------------------------------------- policy

struct Fixed(String);

impl Reasoner for Fixed {
    fn name(&self) -> &str {
        "fixed"
    }
    fn query(&self, _: &PromptBundle) -> Result<String, ReasonerError> {
        Ok(self.0.clone())
    }
    fn is_inline(&self) -> bool {
        true
    }
}

struct Stalled;

impl Reasoner for Stalled {
    fn name(&self) -> &str {
        "stalled"
    }
    fn query(&self, _: &PromptBundle) -> Result<String, ReasonerError> {
        std::thread::sleep(Duration::from_secs(5));
        Ok(String::new())
    }
}

fn fuzz_reply(rng: &mut ChaCha8Rng) -> String {
    const LABELS: [&str; 6] = ["REASONING", "MODALITY", "LOAD", "MESSAGE", "modality", "Load"];
    const TOKENS: [&str; 12] = ["visual", "audio", "text", "+", ",", "essential", "standard", "comprehensive", "telepathy", "", ":", "\u{1F600}"];
    let lines = rng.random_range(0..8);
    (0..lines)
        .map(|_| match rng.random_range(0..4) {
            0 => {
                let n = rng.random_range(0..40);
                (0..n).map(|_| char::from_u32(rng.random_range(0..0x3000)).unwrap_or('?')).collect::<String>()
            }
            _ => {
                let toks: Vec<&str> = (0..rng.random_range(0..4)).map(|_| TOKENS[rng.random_range(0..TOKENS.len())]).collect();
                format!("{}: {}", LABELS[rng.random_range(0..LABELS.len())], toks.join(if rng.random_bool(0.5) { "+" } else { " " }))
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn policy() -> Check {
    let table = RuleTable::fixture();
    let spec = ChecklistSpec::fixture();
    let corpus = PromptCorpus::fixture();
    let ctx_for = |states: [WorkloadState; 3], error: bool, step: &neuroguide::task::Step| CognitiveContext {
        timestamp_ns: 0,
        workload: WorkloadReadings::from_states(states),
        task: TaskContext { procedure_id: "p".into(), step_id: step.id.clone(), instruction: step.instruction.clone(), control: step.control.clone() },
        gaze_focus: None,
        error_active: error,
        recent_events: vec![],
    };
    let mut resolved = 0;
    for (_, step) in spec.steps() {
        for states in all_combinations() {
            for error in [false, true] {
                let d = select_strategy(&ctx_for(states, error, step), step, &table).map_err(|e| format!("{states:?}: {e}"))?;
                resolved += 1;
                if states.contains(&WorkloadState::Overload) {
                    ensure(!d.modalities.contains(Modality::Text), format!("text under overload for {states:?}"))?;
                }
            }
        }
    }
    ensure(all_combinations().count() == 27, "27 combinations")?;
    let step = spec.steps().next().unwrap().1;
    let expect = [
        (WorkloadState::Overload, ModalitySet::VISUAL, InfoLoad::Essential),
        (WorkloadState::Underload, ModalitySet::VISUAL_AUDIO_TEXT, InfoLoad::Comprehensive),
        (WorkloadState::Optimal, ModalitySet::VISUAL_AUDIO, InfoLoad::Standard),
    ];
    for (s, m, l) in expect {
        let d = select_strategy(&ctx_for([s; 3], false, step), step, &table).map_err(|e| e.to_string())?;
        ensure(d.modalities == m && d.load == l, format!("all-{s}: got {}/{}", d.modalities, d.load))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = Duration::ZERO;
    let mut fallbacks = 0;
    let n = 3000;
    for i in 0..n {
        let states = [0; 3].map(|_| WorkloadState::from_index(rng.random_range(0..3)));
        let reply = fuzz_reply(&mut rng);
        let reasoner: Arc<dyn Reasoner> = Arc::new(Fixed(reply));
        let (_, step) = spec.steps().nth(i % spec.step_count()).unwrap();
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
            decide_adaptive(&ctx_for(states, false, step), step, &table, &corpus, &reasoner, Duration::from_millis(1500))
        }));
        worst = worst.max(t.elapsed());
        let d = outcome.map_err(|_| "decision panicked".to_string())?.map_err(|e| e.to_string())?;
        ensure(d.check().is_ok(), "malformed decision")?;
        if states.contains(&WorkloadState::Overload) {
            ensure(!d.modalities.contains(Modality::Text), "text under overload after reasoner")?;
        }
        fallbacks += d.reasoning.starts_with("fallback") as usize;
    }
    let stalled: Arc<dyn Reasoner> = Arc::new(Stalled);
    let t = Instant::now();
    let d = decide_adaptive(&ctx_for([WorkloadState::Optimal; 3], false, step), step, &table, &corpus, &stalled, Duration::from_millis(1500))
        .map_err(|e| e.to_string())?;
    let stall = t.elapsed();
    worst = worst.max(stall);
    ensure(d.reasoning.starts_with("fallback"), "stalled backend did not fall back")?;
    ensure(worst < Duration::from_secs(2), format!("slowest decision {worst:?}"))?;
    Ok(format!(
        "{resolved} step x state x error contexts resolved; {n} fuzzed replies ({fallbacks} fallbacks), stalled backend fell back in {stall:.2?}"
    ))
}

// ------------------------------------------------------ record/replay

fn replay() -> Check {
    let models = fixture_models();
    let cases: Vec<(Condition, u64)> = Condition::ALL.into_iter().flat_map(|c| (0..20).map(move |s| (c, 1000 + s))).collect();
    let results: Vec<std::result::Result<(), String>> = cases
        .par_iter()
        .map(|&(c, seed)| {
            let mut cfg = SessionConfig::new(c, seed);
            cfg.lag = LagConfig::late(0.05);
            let live = run_session(&cfg, &models).map_err(|e| e.to_string())?;
            let bag = neuroguide::bus::Bag::from_bytes(&live.bag.to_bytes()).map_err(|e| e.to_string())?;
            let r = replay_session(&bag).map_err(|e| e.to_string())?;
            ensure(r.event_log() == live.event_log(), format!("{c}/{seed}: event log differs"))?;
            ensure(r.guidance_log() == live.guidance_log(), format!("{c}/{seed}: guidance log differs"))?;
            ensure(metrics_from_bag(&bag).map_err(|e| e.to_string())? == live.metrics, format!("{c}/{seed}: bag metrics differ"))?;
            Ok(())
        })
        .collect();
    for r in results {
        r?;
    }
    Ok(format!("{} sessions: event logs, guidance logs and metrics identical", cases.len()))
}

// -------------------------------------------------------- false errors

fn false_errors() -> Check {
    let models = fixture_models();
    let ms: Vec<SessionMetrics> = (0..70u64)
        .into_par_iter()
        .map(|seed| {
            let mut cfg = SessionConfig::new(Condition::Baseline, 5000 + seed);
            cfg.lag = LagConfig::late(0.05);
            run_session(&cfg, &models).map(|o| o.metrics)
        })
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let actions: usize = ms.iter().map(|m| m.actions).sum();
    let flagged: usize = ms.iter().map(|m| m.false_errors).sum();
    let rate = flagged as f64 / actions as f64;
    ensure(actions >= 400, format!("only {actions} actions"))?;
    ensure((0.03..=0.08).contains(&rate), format!("rate {rate:.4} over {actions} actions"))?;
    Ok(format!("{flagged} false errors over {actions} actions: rate {rate:.4}"))
}

// ---------------------------------------------------------- statistics

fn statistics() -> Check {
    let lo = log_odds_ratio((30, 70), (20, 80)).estimate;
    let oracle = ((30.0 / 70.0) / (20.0 / 80.0f64)).ln();
    ensure((lo - 0.5390).abs() <= 1e-4 && (lo - oracle).abs() < 1e-12, format!("log-odds {lo}"))?;
    let rr = rate_ratio(8, 400.0, 12, 380.0).map_err(|e| e.to_string())?.estimate;
    ensure((rr - 0.6333).abs() <= 1e-4, format!("rate ratio {rr}"))?;
    for k in 1..=6 {
        let sq = cyclic_latin_square(k);
        // Exhaustive: every (row, column) pair and every symbol.
        for i in 0..k {
            for sym in 0..k {
                ensure(sq[i].iter().filter(|&&x| x == sym).count() == 1, format!("k={k} row {i}"))?;
                ensure(sq.iter().filter(|r| r[i] == sym).count() == 1, format!("k={k} column {i}"))?;
            }
        }
        ensure(is_latin_square(&sq), format!("checker rejects k={k}"))?;
    }
    Ok(format!("log-odds {lo:.4}; rate ratio {rr:.4}; Latin squares k=1..6 valid"))
}

// --------------------------------------------------- model consistency

fn consistency() -> Check {
    let models = fixture_models();
    let runs = |cond: Condition, script: Option<&str>| -> std::result::Result<Vec<neuroguide::sim::SessionOutcome>, String> {
        (0..30u64)
            .into_par_iter()
            .map(|s| {
                let mut cfg = SessionConfig::new(cond, 9000 + s);
                if let Some(name) = script {
                    cfg.script = LoadScript::preset(name).map_err(|e| e.to_string())?;
                }
                run_session(&cfg, &models).map_err(|e| e.to_string())
            })
            .collect()
    };
    let match_rate = |outs: &[neuroguide::sim::SessionOutcome]| {
        let (m, n) = outs.iter().fold((0.0, 0usize), |(m, n), o| {
            (m + o.metrics.guided_match_rate.unwrap_or(0.0) * o.metrics.guidance_count as f64, n + o.metrics.guidance_count)
        });
        m / n.max(1) as f64
    };
    let visual_share = |outs: &[neuroguide::sim::SessionOutcome]| {
        let all: Vec<_> = outs.iter().flat_map(|o| o.guidance.iter()).collect();
        all.iter().filter(|d| d.modalities == ModalitySet::VISUAL).count() as f64 / all.len().max(1) as f64
    };
    let adaptive = runs(Condition::Adaptive, None)?;
    let random = runs(Condition::Random, None)?;
    let (ma, mr) = (match_rate(&adaptive), match_rate(&random));
    ensure(ma > mr, format!("match rate adaptive {ma:.3} vs random {mr:.3}"))?;
    let over = visual_share(&runs(Condition::Adaptive, Some("all_overload"))?);
    let under = visual_share(&runs(Condition::Adaptive, Some("all_underload"))?);
    ensure(over > under, format!("visual-only share overload {over:.3} vs underload {under:.3}"))?;
    Ok(format!(
        "30 paired seeds: match rate adaptive {ma:.3} > random {mr:.3}; visual-only share overload {over:.3} > underload {under:.3}"
    ))
}

fn main() {
    let checks: [(&str, fn() -> Check); 9] = [
        ("dsp constants, filter response and runtime", dsp),
        ("beer-lambert round trip", beer_lambert),
        ("classifier suite", classifier),
        ("timer exactness", timing),
        ("policy totality and direction", policy),
        ("record/replay closure", replay),
        ("false-error band", false_errors),
        ("statistics oracles", statistics),
        ("closed-loop model consistency", consistency),
    ];
    let mut failed = 0;
    for (name, f) in checks {
        let r = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        failed += !report(name, r) as usize;
    }
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
