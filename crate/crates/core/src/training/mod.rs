//! Losses, optimizer, the three-phase training schedule and evaluation.

mod loss;
mod optim;
mod phases;

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use loss::{
    balance_grad, balance_loss, classification_loss, cross_entropy, cross_entropy_probs, flops_loss, total_loss,
    BalanceForm, LossReport, DEFAULT_BETA, DEFAULT_GAMMA,
};
pub use optim::Sgd;
pub use phases::{resume, train, TrainOutcome};

use crate::engine::{Engine, EpisodeMode};
use crate::error::{Error, Result};
use crate::policy::TemperatureSchedule;
use crate::video::VideoSample;

/// Schedule of one training phase.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Epochs (0-based) at which the learning rate is divided by 10.
    pub milestones: Vec<usize>,
    /// Videos per optimizer step.
    pub batch_size: usize,
}

impl PhaseConfig {
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let drops = self.milestones.iter().filter(|&&m| m <= epoch).count();
        self.lr * 0.1f64.powi(drops as i32)
    }

    fn validate(&self, phase: u8) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("phase {phase} learning rate must be positive")));
        }
        if self.batch_size == 0 {
            return Err(Error::Config(format!("phase {phase} batch size must be positive")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// CNN on frame labels.
    pub phase1: PhaseConfig,
    /// GRU and video classifier on video labels, CNN frozen.
    pub phase2: PhaseConfig,
    /// Policy only, total loss.
    pub phase3: PhaseConfig,
    pub momentum: f64,
    pub weight_decay: f64,
    pub beta: f64,
    pub gamma: f64,
    pub balance: BalanceForm,
    /// Gumbel-Softmax temperature per phase-3 optimizer step. A
    /// `total_steps` of 0 anneals over the whole phase.
    pub tau: TemperatureSchedule,
    /// Frames drawn per video per phase-1 epoch.
    pub frames_per_video: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    /// Desk-scale schedule.
    fn default() -> Self {
        TrainConfig {
            phase1: PhaseConfig {
                epochs: 20,
                lr: 0.05,
                milestones: vec![10, 14, 18],
                batch_size: 2,
            },
            phase2: PhaseConfig {
                epochs: 10,
                lr: 0.05,
                milestones: vec![],
                batch_size: 8,
            },
            phase3: PhaseConfig {
                epochs: 10,
                lr: 0.01,
                milestones: vec![],
                batch_size: 8,
            },
            momentum: 0.937,
            weight_decay: 5e-4,
            beta: DEFAULT_BETA,
            gamma: DEFAULT_GAMMA,
            balance: BalanceForm::Abs,
            tau: TemperatureSchedule {
                total_steps: 0,
                ..TemperatureSchedule::default()
            },
            frames_per_video: 8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Full-scale schedule: 100 epochs with drops at 50/70/90, then 20
    /// epochs at 1.45e-5, batch 16.
    pub fn full_scale() -> Self {
        let d = TrainConfig::default();
        TrainConfig {
            phase1: PhaseConfig {
                epochs: 100,
                lr: 0.01,
                milestones: vec![50, 70, 90],
                batch_size: 16,
            },
            phase2: PhaseConfig {
                epochs: 20,
                lr: 1.45e-5,
                milestones: vec![],
                batch_size: 16,
            },
            phase3: PhaseConfig {
                batch_size: 16,
                ..d.phase3.clone()
            },
            ..d
        }
    }

    pub fn phase(&self, phase: u8) -> &PhaseConfig {
        match phase {
            1 => &self.phase1,
            2 => &self.phase2,
            _ => &self.phase3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for p in 1..=3 {
            self.phase(p).validate(p)?;
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if self.weight_decay < 0.0 || self.beta < 0.0 || self.gamma < 0.0 {
            return Err(Error::Config("weight decay, beta and gamma must be non-negative".into()));
        }
        if !(self.tau.floor > 0.0) || self.tau.initial < self.tau.floor {
            return Err(Error::Config(format!(
                "temperature must anneal from {} down to a positive floor {}",
                self.tau.initial, self.tau.floor
            )));
        }
        if self.frames_per_video == 0 {
            return Err(Error::Config("frames per video must be positive".into()));
        }
        Ok(())
    }
}

/// Independent stream for a `(phase, epoch, item)` triple, so results do
/// not depend on thread count or on earlier phases.
pub fn derive_rng(seed: u64, phase: u64, epoch: u64, item: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((phase << 56) ^ (epoch << 32)) ^ item);
    rng
}

/// One row of the training history.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub epoch: usize,
    pub phase: u8,
    pub loss: LossReport,
    pub accuracy: f64,
    pub flops_per_video: f64,
}

/// Writes `epoch,phase,L_c,L_b,L_g,L,accuracy,flops_per_video`.
pub fn write_history_csv<W: Write>(out: W, rows: &[HistoryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "phase", "L_c", "L_b", "L_g", "L", "accuracy", "flops_per_video"])?;
    for r in rows {
        w.write_record([
            r.epoch.to_string(),
            r.phase.to_string(),
            format!("{:.9}", r.loss.l_c),
            format!("{:.9}", r.loss.l_b),
            format!("{:.9}", r.loss.l_g),
            format!("{:.9}", r.loss.total),
            format!("{:.6}", r.accuracy),
            format!("{:.3}", r.flops_per_video),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Binary confusion counts with the positive class as "fire".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// `(TP + TN) / (TP + TN + FP + FN)`; 0 for no samples.
    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            return 0.0;
        }
        (self.tp + self.tn) as f64 / self.total() as f64
    }
}

/// Evaluation of an engine over a set of videos.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub confusion: Confusion,
    pub accuracy: f64,
    /// Mean of feature extraction plus overhead per video.
    pub flops_per_video: f64,
    /// Total FLOPs over total frames.
    pub flops_per_frame: f64,
    /// Fraction of all steps taking each action.
    pub usage: Vec<f64>,
    pub mean_steps: f64,
}

/// Runs one episode per video in `mode` and aggregates predictions and
/// costs.
pub fn evaluate(engine: &Engine, videos: &[VideoSample], mode: &EpisodeMode, seed: u64) -> Result<Metrics> {
    if videos.is_empty() {
        return Err(Error::InvalidArgument("no videos to evaluate".into()));
    }
    let outcomes = videos
        .par_iter()
        .enumerate()
        .map(|(i, v)| {
            let mut rng = derive_rng(seed, 9, 0, i as u64);
            let ep = engine.run_episode(v, mode, &mut rng)?;
            let predicted = engine.predict(&ep.h_final)?;
            Ok((predicted, v.label, ep.total_flops(), ep.trace.iter().map(|e| e.action).collect::<Vec<_>>()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut confusion = Confusion::default();
    let mut counts = vec![0usize; engine.actions().len()];
    let mut flops = 0u128;
    for (predicted, actual, f, actions) in &outcomes {
        confusion.record(*predicted, *actual);
        flops += *f as u128;
        for &a in actions {
            counts[a] += 1;
        }
    }
    let steps: usize = counts.iter().sum();
    let frames: usize = videos.iter().map(|v| v.len()).sum();
    Ok(Metrics {
        confusion,
        accuracy: confusion.accuracy(),
        flops_per_video: flops as f64 / videos.len() as f64,
        flops_per_frame: flops as f64 / frames as f64,
        usage: counts.iter().map(|&c| c as f64 / steps as f64).collect(),
        mean_steps: steps as f64 / videos.len() as f64,
    })
}
