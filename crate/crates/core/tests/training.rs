use clipforge::config::RunConfig;
use clipforge::engine::{step_cost, Engine, EngineConfig, EpisodeMode, FlopsLedger};
use clipforge::numerics::{Module, Tensor};
use clipforge::policy::ActionSpace;
use clipforge::training::{
    balance_loss, classification_loss, evaluate, flops_loss, resume, total_loss, train, write_history_csv,
    BalanceForm, Confusion, PhaseConfig, Sgd, TrainConfig,
};
use clipforge::video::{generate_corpus, Frame, SyntheticCorpusSpec, VideoSample};
use clipforge::Error;

fn tiny_engine_config() -> EngineConfig {
    EngineConfig {
        widths: vec![4, 8],
        hidden: 8,
        actions: ActionSpace::new(vec![1, 3, 5, 7], vec![16, 12, 8, 4]).unwrap(),
        ..EngineConfig::default()
    }
}

fn tiny_corpus(seed: u64, videos: usize) -> Vec<VideoSample> {
    generate_corpus(&SyntheticCorpusSpec {
        num_videos: videos,
        frames_per_video: 16,
        frame_size: 16,
        seed,
        ..SyntheticCorpusSpec::default()
    })
    .unwrap()
    .videos
}

fn short_schedule(epochs: usize) -> TrainConfig {
    let d = TrainConfig::default();
    let phase = |p: &PhaseConfig| PhaseConfig {
        epochs,
        milestones: vec![],
        ..p.clone()
    };
    TrainConfig {
        phase1: phase(&d.phase1),
        phase2: phase(&d.phase2),
        phase3: phase(&d.phase3),
        seed: 5,
        ..d
    }
}

fn params_of(engine: &Engine) -> Vec<(String, Tensor)> {
    engine.named_params().into_iter().map(|(n, t)| (n, t.clone())).collect()
}

#[test]
fn classification_loss_examples() {
    let classifier = clipforge::numerics::Dense::new(3, 2);
    let h = Tensor::from_vec(vec![0.3, -0.2, 0.9]);
    // Zero-initialized weights give uniform probabilities.
    let l = classification_loss(&h, true, &classifier).unwrap();
    assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
}

#[test]
fn balance_loss_examples() {
    assert_eq!(balance_loss(&[0.25; 4], BalanceForm::Abs), 0.0);
    assert!((balance_loss(&[1.0, 0.0, 0.0, 0.0], BalanceForm::Abs) - 1.5).abs() < 1e-15);
    assert!((balance_loss(&[0.5, 0.5, 0.0, 0.0], BalanceForm::Abs) - 1.0).abs() < 1e-15);
    assert!(balance_loss(&[0.3, 0.2, 0.25, 0.25], BalanceForm::Abs) > 0.0);
    assert!(balance_loss(&[0.3, 0.2, 0.25, 0.25], BalanceForm::Square) > 0.0);
}

#[test]
fn total_loss_is_weighted_sum() {
    assert_eq!(total_loss(1.0, 0.0, 0.0, 0.3, 0.1).unwrap().total, 1.0);
    assert!((total_loss(0.5, 1.0, 1.0, 0.3, 0.1).unwrap().total - 0.9).abs() < 1e-12);
    let r = total_loss(0.731, 0.42, 0.17, 0.0, 0.0).unwrap();
    assert_eq!(r.total, r.l_c);
    let r = total_loss(0.731, 0.42, 0.17, 0.3, 0.1).unwrap();
    assert!((r.total - (r.l_c + r.beta * r.l_b + r.gamma * r.l_g)).abs() < 1e-12);
    assert!(matches!(total_loss(f64::NAN, 0.0, 0.0, 0.3, 0.1), Err(Error::NonFinite(_))));
}

#[test]
fn flops_loss_normalization() {
    let engine = Engine::new(tiny_engine_config()).unwrap();
    let space = engine.actions().clone();
    let full = engine.full_step_cost().unwrap();
    let cost = |i: usize| step_cost(&engine.cnn, &engine.gru, space.resolution(i)).unwrap();

    let mut ledger = FlopsLedger::new(16);
    for s in 0..5 {
        ledger.record(s, full);
    }
    assert_eq!(flops_loss(&ledger, full).unwrap(), 1.0);

    let small = space.len() - 1;
    let mut ledger = FlopsLedger::new(16);
    for s in 0..4 {
        ledger.record(s, cost(small));
    }
    assert_eq!(flops_loss(&ledger, full).unwrap(), cost(small) as f64 / full as f64);

    let mut ledger = FlopsLedger::new(1);
    ledger.record(0, full);
    assert_eq!(flops_loss(&ledger, full).unwrap(), 1.0);
    assert!(flops_loss(&ledger, 0).is_err());

    // Larger actions map to lower resolutions, so per-step cost falls.
    for i in 1..space.len() {
        assert!(cost(i) < cost(i - 1));
    }
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let mut opt = Sgd::new(0.937, 5e-4);
    let mut a = Tensor::from_vec(vec![0.5, -1.25, 3.0]);
    let before = a.clone();
    let g = Tensor::from_vec(vec![1.0, 2.0, -3.0]);
    for _ in 0..3 {
        opt.step(vec![&mut a], std::slice::from_ref(&g), 0.0).unwrap();
    }
    assert_eq!(a.data(), before.data());
}

#[test]
fn confusion_accuracy() {
    let mut c = Confusion::default();
    for (p, a) in [(true, true), (true, true), (false, false), (false, false), (true, false), (false, true)] {
        c.record(p, a);
    }
    assert_eq!((c.tp, c.tn, c.fp, c.fn_), (2, 2, 1, 1));
    assert!((c.accuracy() - 4.0 / 6.0).abs() < 1e-15);
}

#[test]
fn evaluate_reports_closed_form_baseline() {
    let engine = Engine::new(tiny_engine_config()).unwrap().init(&mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(4));
    let videos = tiny_corpus(8, 4);
    let m = evaluate(&engine, &videos, &EpisodeMode::Fixed(0), 0).unwrap();
    let full = engine.full_step_cost().unwrap() as f64;
    assert_eq!(m.flops_per_video, 16.0 * full);
    assert_eq!(m.flops_per_frame, full);
    assert!((0.0..=1.0).contains(&m.accuracy));
    assert!((m.usage.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert_eq!(m.confusion.total(), 4);
}

#[test]
fn training_is_reproducible_and_history_complete() {
    let videos = tiny_corpus(11, 6);
    let cfg = short_schedule(2);
    let a = train(&videos, tiny_engine_config(), &cfg, None).unwrap();
    let b = train(&videos, tiny_engine_config(), &cfg, None).unwrap();
    assert_eq!(params_of(&a.engine), params_of(&b.engine));
    assert_eq!(a.history, b.history);
    assert_eq!(a.history.len(), 6);
    for r in &a.history {
        assert!((r.loss.total - (r.loss.l_c + r.loss.beta * r.loss.l_b + r.loss.gamma * r.loss.l_g)).abs() < 1e-12);
    }

    let mut csv = Vec::new();
    write_history_csv(&mut csv, &a.history).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "epoch,phase,L_c,L_b,L_g,L,accuracy,flops_per_video");
    assert_eq!(lines.count(), 6);
}

#[test]
fn training_is_independent_of_thread_count() {
    let videos = tiny_corpus(12, 6);
    let cfg = short_schedule(1);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| train(&videos, tiny_engine_config(), &cfg, None).unwrap())
    };
    assert_eq!(params_of(&run(1).engine), params_of(&run(3).engine));
}

#[test]
fn resume_from_phase_two_checkpoint_matches_full_run() {
    let videos = tiny_corpus(13, 6);
    let cfg = short_schedule(2);
    let dir = tempfile::tempdir().unwrap();
    let full = train(&videos, tiny_engine_config(), &cfg, Some(dir.path())).unwrap();
    for p in 1..=3 {
        assert!(dir.path().join(format!("phase{p}.clpf")).exists());
    }
    let mut engine = Engine::new(tiny_engine_config()).unwrap();
    engine.load(&dir.path().join("phase2.clpf")).unwrap();
    let resumed = resume(engine, &videos, &cfg, 3, None).unwrap();
    assert_eq!(params_of(&resumed.engine), params_of(&full.engine));
    assert_eq!(resumed.history[..], full.history[4..]);
}

#[test]
fn divergence_reports_phase_and_epoch() {
    let videos = tiny_corpus(14, 4);
    let mut cfg = short_schedule(3);
    cfg.phase1.lr = 1e12;
    cfg.weight_decay = 0.0;
    match train(&videos, tiny_engine_config(), &cfg, None) {
        Err(Error::Diverged { phase, .. }) => assert_eq!(phase, 1),
        other => panic!("expected divergence, got {:?}", other.map(|o| o.history)),
    }
}

/// Uniform bright frames are positive and uniform dark frames negative.
fn bright_dark_videos(n: usize, seed: u64) -> Vec<VideoSample> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let label = i % 2 == 0;
            let frames = (0..8)
                .map(|_| {
                    let base = if label { 0.75 } else { 0.25 };
                    let data = (0..256).map(|_| base + rng.random_range(-0.1..0.1)).collect();
                    Frame::new(Tensor::new(vec![1, 16, 16], data).unwrap(), Some(label)).unwrap()
                })
                .collect();
            VideoSample::new(frames, label, format!("toy{i}")).unwrap()
        })
        .collect()
}

#[test]
fn phase_one_separates_bright_and_dark_frames() {
    let videos = bright_dark_videos(12, 21);
    let mut cfg = short_schedule(0);
    cfg.phase1.epochs = 20;
    let out = train(&videos, tiny_engine_config(), &cfg, None).unwrap();
    let engine = &out.engine;
    let full = engine.actions().full_resolution();
    let held_out = bright_dark_videos(10, 22);
    let (mut correct, mut total) = (0, 0);
    for v in &held_out {
        for f in &v.frames {
            let logits = engine.frame_head.forward(&engine.cnn.features(f.pixels(), full).unwrap()).unwrap();
            correct += ((logits.data()[1] > logits.data()[0]) == v.label) as usize;
            total += 1;
        }
    }
    let acc = correct as f64 / total as f64;
    assert!(acc >= 0.99, "frame accuracy {acc}");
}

#[test]
fn config_round_trip_and_errors() {
    let c = RunConfig::reference();
    let back = RunConfig::parse(&c.to_text()).unwrap();
    assert_eq!(back, c);

    let err = RunConfig::parse("seed = 1\nengine.bogus = 2\n").unwrap_err().to_string();
    assert!(err.contains("engine.bogus") && err.contains("line 2"), "{err}");
    assert!(RunConfig::parse("phase1.lr = 0\n").is_err());
    assert!(RunConfig::parse("engine.actions = 1,3\n").is_err());

    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/reference.conf")).unwrap();
    let file = RunConfig::parse(&text).unwrap();
    assert_eq!(RunConfig { out: c.out.clone(), ..file }, c);
}
