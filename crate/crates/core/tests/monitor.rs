mod common;

use common::{constant, line};
use linereconf_core::monitor::{
    false_positive_rate, parse_samples, replay, samples_csv, update_time_model_from_stream, Baseline, Monitor,
    MonitorState, Sample, Thresholds,
};
use linereconf_core::{Error, TimeModel};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn baseline(model: TimeModel) -> Baseline {
    Baseline {
        mean: model.expected(),
        sd: model.std_dev(),
        model,
    }
}

/// Feeds `pre` baseline samples then shifted samples until an event; returns
/// the delay in samples after the shift and the stream.
fn detect(model: &TimeModel, m: f64, pre: usize, seed: u64, max_post: usize) -> (Option<u64>, MonitorState) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = MonitorState::new(&baseline(model.clone()), Thresholds::default()).unwrap();
    for _ in 0..pre {
        if s.push(model.sample(&mut rng)).unwrap().is_some() {
            return (None, s);
        }
    }
    let shifted = model.scaled(m);
    for i in 0..max_post {
        if s.push(shifted.sample(&mut rng)).unwrap().is_some() {
            return (Some(i as u64 + 1), s);
        }
    }
    (None, s)
}

#[test]
fn step_of_one_and_a_half_is_detected_quickly_and_estimated_closely() {
    let model = TimeModel::LogNormal { mean: 20.0, sd: 1.6 };
    let mut detected = 0;
    let mut close = 0;
    for seed in 0..100u64 {
        let pre = 20 + (seed as usize * 7) % 31;
        let (delay, mut s) = detect(&model, 1.5, pre, seed, 20);
        if delay.is_some() {
            detected += 1;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xdead);
        let shifted = model.scaled(1.5);
        for _ in 0..10 {
            s.push(shifted.sample(&mut rng)).unwrap();
        }
        if let Ok(fit) = update_time_model_from_stream(&s, &baseline(model.clone())) {
            if (fit.expected() / 20.0 - 1.5).abs() <= 0.05 * 1.5 {
                close += 1;
            }
        }
    }
    assert!(detected >= 99, "{detected}/100 detected within 20 samples");
    assert!(close >= 90, "{close}/100 estimates within 5%");
}

#[test]
fn detection_guarantee_at_the_boundary_shift() {
    let t = Thresholds::default();
    let (mu, sd) = (20.0, 1.0);
    let model = TimeModel::TruncNormal { mean: mu, sd };
    let m = 1.0 + 2.0 * t.k * sd / (t.window as f64).sqrt() / mu * 1.001;
    let limit = (t.persistence + 1) * t.window;
    let hits = (0..1000u64)
        .filter(|&seed| detect(&model, m, 30, seed, limit).0.is_some())
        .count();
    assert!(hits >= 990, "{hits}/1000");
}

#[test]
fn false_positive_rates() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let normal = TimeModel::TruncNormal { mean: 20.0, sd: 1.0 };
    let r3 = false_positive_rate(&normal, Thresholds::default(), 200_000, &mut rng).unwrap();
    assert!(r3 <= 0.005, "{r3}");
    let k0 = Thresholds { k: 0.0, ..Thresholds::default() };
    let r0 = false_positive_rate(&normal, k0, 200_000, &mut rng).unwrap();
    assert!((r0 - 0.5).abs() < 0.02, "{r0}");
    let fixed = TimeModel::Constant { mean: 20.0 };
    assert_eq!(false_positive_rate(&fixed, Thresholds::default(), 10_000, &mut rng).unwrap(), 0.0);
    assert!(false_positive_rate(&fixed, Thresholds::default(), 99, &mut rng).is_err());
}

#[test]
fn model_update_scales_and_keeps_cv() {
    for (model, m) in [
        (TimeModel::Constant { mean: 10.0 }, 1.5),
        (TimeModel::LogNormal { mean: 20.0, sd: 4.0 }, 2.0),
    ] {
        let b = baseline(model.clone());
        let mut s = MonitorState::new(&b, Thresholds::default()).unwrap();
        let shifted = model.expected() * m;
        for _ in 0..20 {
            s.push(shifted).unwrap();
        }
        assert!(s.is_latched());
        let fit = update_time_model_from_stream(&s, &b).unwrap();
        assert!((fit.expected() - shifted).abs() < 1e-9);
        assert!((fit.std_dev() - model.std_dev() * m).abs() < 1e-9);
    }
}

#[test]
fn model_update_needs_a_window_after_onset() {
    let b = baseline(TimeModel::Constant { mean: 10.0 });
    let mut s = MonitorState::new(&b, Thresholds::default()).unwrap();
    for _ in 0..10 {
        s.push(10.0).unwrap();
    }
    assert!(matches!(update_time_model_from_stream(&s, &b), Err(Error::InsufficientSamples(_))));
    for _ in 0..5 {
        s.push(10.0).unwrap();
    }
    for _ in 0..5 {
        s.push(30.0).unwrap();
    }
    // Event on the mixed window; five samples after onset so far.
    assert!(s.is_latched());
    assert!(matches!(update_time_model_from_stream(&s, &b), Err(Error::InsufficientSamples(_))));
    for _ in 0..5 {
        s.push(30.0).unwrap();
    }
    let fit = update_time_model_from_stream(&s, &b).unwrap();
    assert!((fit.expected() - 30.0).abs() < 1e-9);
}

fn two_station_line() -> (linereconf_core::CapabilityGraph, linereconf_core::LineConfiguration) {
    line(&[
        vec![TimeModel::LogNormal { mean: 10.0, sd: 0.8 }, TimeModel::LogNormal { mean: 10.0, sd: 0.8 }],
        vec![constant(30.0)],
    ])
}

fn log(agent: &str, ops: &[&str], n: usize, from: usize, m: f64, seed: u64) -> Vec<Sample> {
    let model = TimeModel::LogNormal { mean: 10.0, sd: 0.8 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut t = 0.0;
    for part in 0..n {
        for op in ops {
            let f = if part >= from { m } else { 1.0 };
            let d = model.sample(&mut rng) * f;
            t += d;
            out.push(Sample {
                timestamp_s: t,
                agent: agent.into(),
                op: op.to_string(),
                duration_s: d,
            });
        }
    }
    out
}

#[test]
fn replay_triggers_only_when_the_line_is_hit() {
    let (g, c) = two_station_line();
    let ops = ["Op0_0", "Op0_1"];
    let quiet = replay(&g, &c, &log("Agent0", &ops, 400, usize::MAX, 1.0, 3), Thresholds::default()).unwrap();
    assert!(quiet.triggers.is_empty());

    // 20 s becomes 26 s: disturbed but still under the 30 s bottleneck.
    let mild = replay(&g, &c, &log("Agent0", &ops, 200, 50, 1.3, 4), Thresholds::default()).unwrap();
    assert!(!mild.events.is_empty());
    assert!(mild.events.iter().all(|e| !e.line_impacting));
    assert!(mild.triggers.is_empty());

    let samples = log("Agent0", &ops, 200, 50, 3.0, 5);
    let hard = replay(&g, &c, &samples, Thresholds::default()).unwrap();
    assert_eq!(hard.triggers.len(), 1);
    let t = &hard.triggers[0];
    assert_eq!(t.agent, "Agent0");
    assert_eq!(t.ops, ops);
    assert!(t.line_impacting);
    assert!((t.multiplier - 3.0).abs() < 0.15, "{}", t.multiplier);
    let onset = samples.iter().filter(|s| s.op == "Op0_0").nth(50).unwrap().timestamp_s;
    assert!(t.onset <= onset + 1e-9 && t.onset >= samples[2 * 45].timestamp_s, "{} vs {onset}", t.onset);

    let updated = hard.monitor.updated_graph(&g).unwrap();
    let fitted = updated.time_model("Agent0", "Op0_0").unwrap().expected();
    assert!((fitted / 10.0 - 3.0).abs() < 0.15);
    assert_eq!(updated.time_model("Agent1", "Op1_0"), g.time_model("Agent1", "Op1_0"));
}

#[test]
fn unknown_pairs_and_bad_samples_are_errors() {
    let (g, c) = two_station_line();
    let mut m = Monitor::new(&g, &c, Thresholds::default()).unwrap();
    assert!(matches!(m.ingest_sample("Agent1", "Op0_0", 1.0), Err(Error::UnknownPair { .. })));
    assert!(matches!(m.ingest_sample("Agent0", "Op0_0", -1.0), Err(Error::NonPositiveDuration(_))));
}

#[test]
fn sample_log_round_trip_and_errors() {
    let samples = log("Agent0", &["Op0_0"], 3, 0, 1.0, 1);
    let text = samples_csv(&samples);
    assert!(text.starts_with("timestamp_s,agent,op,duration_s\n"));
    assert_eq!(parse_samples(&text).unwrap(), samples);
    assert!(matches!(parse_samples("a,b,c,d\n1,x,y,2\n"), Err(Error::Parse { line: 1, .. })));
    let bad = "timestamp_s,agent,op,duration_s\n1,Agent0,Op0_0,2\n2,Agent0,Op0_0,oops\n";
    assert!(matches!(parse_samples(bad), Err(Error::Parse { line: 3, .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn raising_k_never_adds_events(
        xs in prop::collection::vec(5.0f64..15.0, 20..300),
        k in 0.0f64..4.0,
        dk in 0.0f64..2.0,
        persistence in 1usize..3,
    ) {
        let count = |k: f64| {
            let t = Thresholds { k, window: 5, persistence };
            let b = Baseline { mean: 10.0, sd: 2.0, model: TimeModel::TruncNormal { mean: 10.0, sd: 2.0 } };
            let mut s = MonitorState::new(&b, t).unwrap();
            let mut n = 0;
            for &x in &xs {
                if s.push(x).unwrap().is_some() {
                    n += 1;
                    s.reset();
                }
            }
            n
        };
        prop_assert!(count(k + dk) <= count(k));
    }

    #[test]
    fn deterministic_streams_are_silent(mean in 1.0f64..100.0, k in 0.01f64..5.0, n in 10usize..500) {
        let b = Baseline { mean, sd: 0.0, model: TimeModel::Constant { mean } };
        let t = Thresholds { k, ..Thresholds::default() };
        let mut s = MonitorState::new(&b, t).unwrap();
        for _ in 0..n {
            prop_assert!(s.push(mean).unwrap().is_none());
        }
    }
}
