use std::path::Path;

use log::info;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::engine::{clip_mixup, sample_lambda, Engine, EngineConfig, Episode};
use crate::error::{Error, Result};
use crate::numerics::{Module, Tensor};
use crate::policy::gumbel_softmax_backward;
use crate::video::VideoSample;

use super::loss::{balance_grad, balance_loss, cross_entropy, flops_loss, total_loss, LossReport};
use super::optim::{sum_grads, Sgd};
use super::{derive_rng, HistoryRow, TrainConfig};

/// A trained engine and its per-epoch history.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub engine: Engine,
    pub history: Vec<HistoryRow>,
}

/// Initializes an engine from the seed and runs all three phases.
/// Checkpoints `phase1.clpf` .. `phase3.clpf` are written to
/// `checkpoint_dir` when given.
pub fn train(
    videos: &[VideoSample],
    engine_config: EngineConfig,
    cfg: &TrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    let engine = Engine::new(engine_config)?.init(&mut derive_rng(cfg.seed, 0, 0, 0));
    resume(engine, videos, cfg, 1, checkpoint_dir)
}

/// Runs phases `from_phase..=3` on an existing engine.
pub fn resume(
    mut engine: Engine,
    videos: &[VideoSample],
    cfg: &TrainConfig,
    from_phase: u8,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if !(1..=3).contains(&from_phase) {
        return Err(Error::InvalidArgument(format!("no training phase {from_phase}")));
    }
    if videos.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let mut history = Vec::new();
    for phase in from_phase..=3 {
        match phase {
            1 => phase1(&mut engine, videos, cfg, &mut history)?,
            2 => phase2(&mut engine, videos, cfg, &mut history)?,
            _ => phase3(&mut engine, videos, cfg, &mut history)?,
        }
        if let Some(dir) = checkpoint_dir {
            engine.save(&dir.join(format!("phase{phase}.clpf")))?;
        }
    }
    Ok(TrainOutcome { engine, history })
}

fn batches(n: usize, cfg: &TrainConfig, phase: u8, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut derive_rng(cfg.seed, phase as u64, epoch as u64, u64::MAX));
    order
        .chunks(cfg.phase(phase).batch_size)
        .map(|c| c.to_vec())
        .collect()
}

fn check_finite(phase: u8, epoch: usize, what: &str, values: &[Tensor]) -> Result<()> {
    if values.iter().all(Tensor::is_finite) {
        Ok(())
    } else {
        Err(Error::Diverged {
            phase,
            epoch,
            detail: format!("non-finite {what}"),
        })
    }
}

fn check_params(engine: &Engine, phase: u8, epoch: usize) -> Result<()> {
    match engine.named_params().into_iter().find(|(_, t)| !t.is_finite()) {
        None => Ok(()),
        Some((name, _)) => Err(Error::Diverged {
            phase,
            epoch,
            detail: format!("non-finite parameter {name}"),
        }),
    }
}

fn check_loss(phase: u8, epoch: usize, loss: f64) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged {
            phase,
            epoch,
            detail: format!("loss is {loss}"),
        })
    }
}

/// Maps a numeric error inside a phase to a divergence report.
fn diverged(phase: u8, epoch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite(detail) => Error::Diverged { phase, epoch, detail },
        other => other,
    }
}

fn baseline_flops(engine: &Engine, videos: &[VideoSample]) -> Result<f64> {
    let step = engine.full_step_cost()? as f64;
    Ok(videos.iter().map(|v| v.len() as f64 * step).sum::<f64>() / videos.len() as f64)
}

/// Phase 1: CNN and frame head on frame labels. Each sampled frame is
/// fused with a clip of random length and resized to the matching
/// resolution, as the episode runner would present it.
fn phase1(engine: &mut Engine, videos: &[VideoSample], cfg: &TrainConfig, history: &mut Vec<HistoryRow>) -> Result<()> {
    let pc = &cfg.phase1;
    let mut opt = Sgd::new(cfg.momentum, cfg.weight_decay);
    let flops = baseline_flops(engine, videos)?;
    for epoch in 0..pc.epochs {
        let lr = pc.lr_at(epoch);
        let (mut loss_sum, mut correct, mut seen) = (0.0, 0usize, 0usize);
        for batch in batches(videos.len(), cfg, 1, epoch) {
            let frozen = &*engine;
            let results = batch
                .par_iter()
                .map(|&vi| {
                    let mut rng = derive_rng(cfg.seed, 1, epoch as u64, vi as u64);
                    frame_batch_grads(frozen, &videos[vi], cfg, &mut rng)
                })
                .collect::<Result<Vec<_>>>()
                .map_err(diverged(1, epoch))?;
            let n: usize = results.iter().map(|r| r.count).sum();
            loss_sum += results.iter().map(|r| r.loss).sum::<f64>();
            correct += results.iter().map(|r| r.correct).sum::<usize>();
            seen += n;
            let mut grads = sum_grads(results.into_iter().map(|r| r.grads).collect()).expect("nonempty batch");
            grads.iter_mut().for_each(|g| *g = g.scale(1.0 / n as f64));
            check_finite(1, epoch, "phase 1 gradient", &grads)?;
            let mut params = engine.cnn.body.params_mut();
            params.extend(engine.frame_head.params_mut());
            opt.step(params, &grads, lr)?;
        }
        let l_c = loss_sum / seen as f64;
        check_loss(1, epoch, l_c)?;
        check_params(engine, 1, epoch)?;
        let row = HistoryRow {
            epoch: epoch + 1,
            phase: 1,
            loss: total_loss(l_c, 0.0, 0.0, cfg.beta, cfg.gamma)?,
            accuracy: correct as f64 / seen as f64,
            flops_per_video: flops,
        };
        info!("phase 1 epoch {}: L_c {:.4} frame acc {:.3}", row.epoch, l_c, row.accuracy);
        history.push(row);
    }
    Ok(())
}

struct SampleGrads {
    loss: f64,
    correct: usize,
    count: usize,
    grads: Vec<Tensor>,
}

fn frame_batch_grads(engine: &Engine, video: &VideoSample, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<SampleGrads> {
    let space = engine.actions();
    let len = video.len();
    let count = cfg.frames_per_video.min(len);
    let mut out = SampleGrads {
        loss: 0.0,
        correct: 0,
        count,
        grads: Vec::new(),
    };
    for start in rand::seq::index::sample(rng, len, count).into_vec() {
        let a = rng.random_range(0..space.len());
        let end = (start + space.action(a)).min(len);
        let lambda = sample_lambda(engine.config.mixup_alpha, rng)?;
        let fused = clip_mixup(&video.frames[start..end], lambda)?;
        let label = fused.label.unwrap_or(video.label);
        let input = engine.cnn.prepare(fused.pixels(), space.resolution(a))?;

        let acts = engine.cnn.body.forward_trace(&input)?;
        let feature = acts.last().expect("nonempty");
        let logits = engine.frame_head.forward(feature)?;
        let (loss, dlogits) = cross_entropy(logits.data(), label as usize)?;
        out.loss += loss;
        out.correct += ((logits.data()[1] > logits.data()[0]) == label) as usize;
        let head = engine.frame_head.backward(feature, &Tensor::from_vec(dlogits))?;
        let body = engine.cnn.body.backward_from_trace(&acts, &head.input)?;
        let grads: Vec<Tensor> = body.params.into_iter().chain(head.params).collect();
        if out.grads.is_empty() {
            out.grads = grads;
        } else {
            for (acc, g) in out.grads.iter_mut().zip(&grads) {
                acc.add_assign(g)?;
            }
        }
    }
    Ok(out)
}

/// Frames processed by a full-resolution `k = 1` episode: frame 0 seeds
/// the episode, then each step processes the frame consumed before it.
pub(crate) fn baseline_sequence(len: usize) -> Vec<usize> {
    std::iter::once(0).chain(0..len.saturating_sub(1)).collect()
}

/// Phase 2: GRU and video classifier by backpropagation through time over
/// cached full-resolution CNN features.
fn phase2(engine: &mut Engine, videos: &[VideoSample], cfg: &TrainConfig, history: &mut Vec<HistoryRow>) -> Result<()> {
    let pc = &cfg.phase2;
    let full = engine.actions().full_resolution();
    let cache: Vec<Vec<Tensor>> = {
        let cnn = &engine.cnn;
        videos
            .par_iter()
            .map(|v| v.frames.iter().map(|f| cnn.features(f.pixels(), full)).collect())
            .collect::<Result<_>>()
            .map_err(diverged(2, 0))?
    };
    let flops = baseline_flops(engine, videos)?;
    let mut opt = Sgd::new(cfg.momentum, cfg.weight_decay);
    for epoch in 0..pc.epochs {
        let lr = pc.lr_at(epoch);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in batches(videos.len(), cfg, 2, epoch) {
            let frozen = &*engine;
            let results = batch
                .par_iter()
                .map(|&vi| sequence_grads(frozen, &cache[vi], videos[vi].label))
                .collect::<Result<Vec<_>>>()
                .map_err(diverged(2, epoch))?;
            loss_sum += results.iter().map(|r| r.loss).sum::<f64>();
            correct += results.iter().map(|r| r.correct).sum::<usize>();
            let n = results.len() as f64;
            let mut grads = sum_grads(results.into_iter().map(|r| r.grads).collect()).expect("nonempty batch");
            grads.iter_mut().for_each(|g| *g = g.scale(1.0 / n));
            check_finite(2, epoch, "phase 2 gradient", &grads)?;
            let mut params = engine.gru.params_mut();
            params.extend(engine.classifier.params_mut());
            opt.step(params, &grads, lr)?;
        }
        let l_c = loss_sum / videos.len() as f64;
        check_loss(2, epoch, l_c)?;
        check_params(engine, 2, epoch)?;
        let row = HistoryRow {
            epoch: epoch + 1,
            phase: 2,
            loss: total_loss(l_c, 0.0, 0.0, cfg.beta, cfg.gamma)?,
            accuracy: correct as f64 / videos.len() as f64,
            flops_per_video: flops,
        };
        info!("phase 2 epoch {}: L_c {:.4} acc {:.3}", row.epoch, l_c, row.accuracy);
        history.push(row);
    }
    Ok(())
}

fn sequence_grads(engine: &Engine, features: &[Tensor], label: bool) -> Result<SampleGrads> {
    let seq = baseline_sequence(features.len());
    let mut hs = vec![Tensor::zeros(&[engine.hidden_dim()])];
    for &i in &seq {
        let next = engine.gru.step(&features[i], hs.last().expect("nonempty"))?;
        hs.push(next);
    }
    let h_final = hs.last().expect("nonempty");
    let logits = engine.classifier.forward(h_final)?;
    let (loss, dlogits) = cross_entropy(logits.data(), label as usize)?;
    let correct = ((logits.data()[1] > logits.data()[0]) == label) as usize;
    let head = engine.classifier.backward(h_final, &Tensor::from_vec(dlogits))?;

    let mut gru_grads: Vec<Tensor> = engine.gru.named_params().iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
    let mut dh = head.input;
    for (t, &i) in seq.iter().enumerate().rev() {
        let (g, _, dh_prev) = engine.gru.step_backward(&features[i], &hs[t], &dh)?;
        for (acc, g) in gru_grads.iter_mut().zip(&g) {
            acc.add_assign(g)?;
        }
        dh = dh_prev;
    }
    Ok(SampleGrads {
        loss,
        correct,
        count: 1,
        grads: gru_grads.into_iter().chain(head.params).collect(),
    })
}

/// Phase 3: policy only, by the straight-through estimator on sampled
/// episodes.
fn phase3(engine: &mut Engine, videos: &[VideoSample], cfg: &TrainConfig, history: &mut Vec<HistoryRow>) -> Result<()> {
    let pc = &cfg.phase3;
    let per_epoch = videos.len().div_ceil(pc.batch_size);
    let schedule = crate::policy::TemperatureSchedule {
        total_steps: if cfg.tau.total_steps == 0 {
            per_epoch * pc.epochs
        } else {
            cfg.tau.total_steps
        },
        ..cfg.tau
    };
    let norm = engine.full_step_cost()?;
    let mut opt = Sgd::new(cfg.momentum, cfg.weight_decay);
    let mut step = 0;
    for epoch in 0..pc.epochs {
        let lr = pc.lr_at(epoch);
        let mut reports = Vec::with_capacity(videos.len());
        let (mut correct, mut flops) = (0usize, 0.0);
        for batch in batches(videos.len(), cfg, 3, epoch) {
            let tau = schedule.anneal(step);
            let frozen = &*engine;
            let results = batch
                .par_iter()
                .map(|&vi| {
                    let mut rng = derive_rng(cfg.seed, 3, epoch as u64, vi as u64);
                    policy_grads(frozen, &videos[vi], cfg, tau, norm, &mut rng)
                })
                .collect::<Result<Vec<_>>>()
                .map_err(diverged(3, epoch))?;
            let n = results.len() as f64;
            for r in &results {
                reports.push(r.report);
                correct += r.correct as usize;
                flops += r.flops as f64;
            }
            let mut grads = sum_grads(results.into_iter().map(|r| r.grads).collect()).expect("nonempty batch");
            grads.iter_mut().for_each(|g| *g = g.scale(1.0 / n));
            check_finite(3, epoch, "phase 3 gradient", &grads)?;
            opt.step(engine.policy.head.params_mut(), &grads, lr)?;
            step += 1;
        }
        let loss = LossReport::mean(&reports);
        check_loss(3, epoch, loss.total)?;
        check_params(engine, 3, epoch)?;
        let row = HistoryRow {
            epoch: epoch + 1,
            phase: 3,
            loss,
            accuracy: correct as f64 / videos.len() as f64,
            flops_per_video: flops / videos.len() as f64,
        };
        info!(
            "phase 3 epoch {}: L {:.4} (L_c {:.4} L_b {:.4} L_g {:.4}) acc {:.3} flops/video {:.0}",
            row.epoch, loss.total, loss.l_c, loss.l_b, loss.l_g, row.accuracy, row.flops_per_video
        );
        history.push(row);
    }
    Ok(())
}

struct PolicySample {
    report: LossReport,
    correct: bool,
    flops: u64,
    grads: Vec<Tensor>,
}

/// Total loss of one sampled episode and its gradient with respect to the
/// policy parameters.
///
/// The feature fed to the GRU after step `t` is `sum_j y_tj * c_tj` where
/// `y_t` is the one-hot choice in the forward pass and the relaxed sample
/// in the backward pass, and `c_tj` is the candidate feature for action
/// `j`. Usage fractions and step costs are linear in `y_t` the same way.
/// The policy input is treated as a constant.
fn policy_grads(
    engine: &Engine,
    video: &VideoSample,
    cfg: &TrainConfig,
    tau: f64,
    norm: u64,
    rng: &mut ChaCha8Rng,
) -> Result<PolicySample> {
    let ep: Episode = engine.run_training_episode(video, tau, rng)?;
    let t_len = ep.steps();
    let na = engine.actions().len();

    let logits = engine.classifier.forward(&ep.h_final)?;
    let (l_c, dlogits) = cross_entropy(logits.data(), video.label as usize)?;
    let correct = (logits.data()[1] > logits.data()[0]) == video.label;
    let usage = ep.usage(na);
    let l_b = balance_loss(&usage, cfg.balance);
    let l_g = flops_loss(&ep.ledger, norm)?;
    let report = total_loss(l_c, l_b, l_g, cfg.beta, cfg.gamma)?;

    let mut dy = vec![vec![0.0; na]; t_len];
    let mut dh = engine.classifier.backward(&ep.h_final, &Tensor::from_vec(dlogits))?.input;
    for t in (1..t_len).rev() {
        let rec = &ep.records[t];
        let (_, dx, dh_prev) = engine.gru.step_backward(&rec.feature, &rec.h_prev, &dh)?;
        for (j, cand) in ep.records[t - 1].candidates.iter().enumerate() {
            dy[t - 1][j] += dx.dot(cand)?;
        }
        dh = dh_prev;
    }
    let db = balance_grad(&usage, cfg.balance);
    let inv_t = 1.0 / t_len as f64;
    for (t, row) in dy.iter_mut().enumerate() {
        for (j, d) in row.iter_mut().enumerate() {
            *d += cfg.beta * db[j] * inv_t;
            // The last choice is never processed, so it costs nothing.
            if t + 1 < t_len {
                *d += cfg.gamma * ep.records[t].candidate_costs[j] as f64 / norm as f64 * inv_t;
            }
        }
    }

    let mut grads: Option<Vec<Tensor>> = None;
    for ((rec, dist), d) in ep.records.iter().zip(&ep.distributions).zip(&dy) {
        let relaxed = dist.relaxed.as_ref().expect("sampled episode");
        let dl = gumbel_softmax_backward(relaxed, d, tau);
        let g = engine.policy.backward(&rec.policy_input, &dl)?.params;
        match grads.as_mut() {
            None => grads = Some(g),
            Some(acc) => {
                for (a, b) in acc.iter_mut().zip(&g) {
                    a.add_assign(b)?;
                }
            }
        }
    }
    Ok(PolicySample {
        report,
        correct,
        flops: ep.total_flops(),
        grads: grads.expect("at least one step"),
    })
}
