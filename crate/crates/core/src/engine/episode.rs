use std::io::Write;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::policy::{straight_through, ActionDistribution};
use crate::video::VideoSample;

use super::extractor::step_cost;
use super::{clip_mixup, sample_lambda, Engine, FlopsLedger, StationPointSet};

/// How an episode chooses its actions.
#[derive(Debug, Clone, PartialEq)]
pub enum EpisodeMode {
    /// Most probable action, mixup coefficient 0.5.
    Argmax,
    /// Gumbel-Max choice with a Gumbel-Softmax relaxation at temperature
    /// `tau`; mixup coefficient drawn per step.
    Sample { tau: f64 },
    /// Always the given action index. The policy is not consulted and no
    /// station points are extracted.
    Fixed(usize),
    /// Action indices in order, cycling when exhausted. The policy is still
    /// evaluated so distributions are recorded.
    Scripted(Vec<usize>),
}

/// One step of an episode: the frame processed at `resolution` costing
/// `flops`, and the action taken afterwards from `cursor`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub step: usize,
    pub cursor: usize,
    pub action: usize,
    /// Fuse count of the chosen action.
    pub k: usize,
    /// Frames actually consumed, `min(k, remaining)`.
    pub consumed: usize,
    pub resolution: usize,
    pub flops: u64,
}

/// Intermediates of one step kept for the policy gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// CNN feature fed to the GRU at this step.
    pub feature: Tensor,
    pub h_prev: Tensor,
    pub policy_input: Tensor,
    /// Next-step CNN feature for every action, sharing this step's mixup
    /// coefficient.
    pub candidates: Vec<Tensor>,
    /// Feature-extraction cost of each candidate.
    pub candidate_costs: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub h_final: Tensor,
    pub trace: Vec<TraceEntry>,
    pub ledger: FlopsLedger,
    /// Policy output per step; empty for [`EpisodeMode::Fixed`].
    pub distributions: Vec<ActionDistribution>,
    /// Station extraction and policy FLOPs, not part of the ledger.
    pub overhead: u64,
    /// Filled only by [`Engine::run_training_episode`].
    pub records: Vec<StepRecord>,
}

impl Episode {
    pub fn steps(&self) -> usize {
        self.trace.len()
    }

    pub fn frames_consumed(&self) -> usize {
        self.trace.iter().map(|e| e.consumed).sum()
    }

    /// Feature extraction plus overhead.
    pub fn total_flops(&self) -> u64 {
        self.ledger.total() + self.overhead
    }

    /// Fraction of steps choosing each action.
    pub fn usage(&self, num_actions: usize) -> Vec<f64> {
        let mut u = vec![0.0; num_actions];
        for e in &self.trace {
            u[e.action] += 1.0;
        }
        let n = self.trace.len().max(1) as f64;
        u.iter().map(|c| c / n).collect()
    }
}

/// Writes `step,cursor,action,resolution,flops`; `action` is the fuse count.
pub fn write_trace_csv<W: Write>(out: W, trace: &[TraceEntry]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "cursor", "action", "resolution", "flops"])?;
    for e in trace {
        w.write_record([
            e.step.to_string(),
            e.cursor.to_string(),
            e.k.to_string(),
            e.resolution.to_string(),
            e.flops.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

impl Engine {
    /// Walks `video` under `mode`.
    ///
    /// Frame 0 is processed first at full resolution. Each step encodes the
    /// current frame, advances the GRU, picks an action `k` and fuses the
    /// next `min(k, remaining)` frames into the frame processed at the
    /// following step. The episode ends once the cursor reaches the video
    /// length; the last fused clip is not processed.
    pub fn run_episode<R: Rng + ?Sized>(&self, video: &VideoSample, mode: &EpisodeMode, rng: &mut R) -> Result<Episode> {
        self.walk(video, mode, rng, false)
    }

    /// [`Engine::run_episode`] in sampling mode, also recording candidate
    /// features for every action at every step.
    pub fn run_training_episode<R: Rng + ?Sized>(&self, video: &VideoSample, tau: f64, rng: &mut R) -> Result<Episode> {
        self.walk(video, &EpisodeMode::Sample { tau }, rng, true)
    }

    fn walk<R: Rng + ?Sized>(&self, video: &VideoSample, mode: &EpisodeMode, rng: &mut R, record: bool) -> Result<Episode> {
        let len = video.len();
        if len == 0 {
            return Err(Error::InvalidArgument("video has no frames".into()));
        }
        let space = &self.config.actions;
        let check = |a: usize| {
            if a >= space.len() {
                Err(Error::InvalidArgument(format!(
                    "action index {a} outside {}-action space",
                    space.len()
                )))
            } else {
                Ok(())
            }
        };
        let uses_policy = match mode {
            EpisodeMode::Fixed(a) => {
                check(*a)?;
                false
            }
            EpisodeMode::Scripted(s) => {
                if s.is_empty() {
                    return Err(Error::InvalidArgument("empty action script".into()));
                }
                s.iter().try_for_each(|&a| check(a))?;
                true
            }
            EpisodeMode::Sample { tau } if !(*tau > 0.0) => {
                return Err(Error::InvalidArgument(format!(
                    "temperature must be positive, got {tau}"
                )))
            }
            _ => true,
        };

        let full = space.full_resolution();
        let stations = if uses_policy {
            self.extract_station_points(video, self.config.station_count.min(len))?
        } else {
            StationPointSet::new(Vec::new(), Vec::new(), self.feature_dim())?
        };
        let mut overhead = stations.len() as u64 * self.cnn.flops_at(full)?;
        let policy_flops = self.policy.flops();

        let mut ledger = FlopsLedger::new(len);
        let mut trace = Vec::new();
        let mut distributions = Vec::new();
        let mut records = Vec::new();
        let mut h = Tensor::zeros(&[self.hidden_dim()]);
        let mut pixels = video.frames[0].pixels().clone();
        let mut resolution = full;
        // Recording episodes already hold the next feature among the candidates.
        let mut next_feature: Option<Tensor> = None;
        let mut cursor = 0;
        let mut step = 0;
        while cursor < len {
            let feature = match next_feature.take() {
                Some(f) => f,
                None => self.cnn.features(&pixels, resolution)?,
            };
            let h_prev = h;
            h = self.gru.step(&feature, &h_prev)?;
            let flops = step_cost(&self.cnn, &self.gru, resolution)?;
            ledger.record(step, flops);

            let mut policy_input = None;
            let action = if uses_policy {
                let s = stations.nearest_future(cursor);
                let input = self.policy.input(&h, &s)?;
                let mut dist = self.policy.forward(&h, &s)?;
                overhead += policy_flops;
                let a = match mode {
                    EpisodeMode::Argmax => dist.argmax(),
                    EpisodeMode::Sample { tau } => {
                        let (a, relaxed) = straight_through(&dist, *tau, rng)?;
                        dist.relaxed = Some(relaxed);
                        a
                    }
                    EpisodeMode::Scripted(s) => s[step % s.len()],
                    EpisodeMode::Fixed(_) => unreachable!("fixed mode skips the policy"),
                };
                dist.chosen = Some(a);
                distributions.push(dist);
                policy_input = Some(input);
                a
            } else {
                match mode {
                    EpisodeMode::Fixed(a) => *a,
                    _ => unreachable!("only fixed mode skips the policy"),
                }
            };

            let k = space.action(action);
            let consumed = k.min(len - cursor);
            let lambda = match mode {
                EpisodeMode::Sample { .. } => sample_lambda(self.config.mixup_alpha, rng)?,
                _ => 0.5,
            };
            trace.push(TraceEntry {
                step,
                cursor,
                action,
                k,
                consumed,
                resolution,
                flops,
            });

            if record {
                let mut candidates = Vec::with_capacity(space.len());
                let mut candidate_costs = Vec::with_capacity(space.len());
                for j in 0..space.len() {
                    let n = space.action(j).min(len - cursor);
                    let fused = clip_mixup(&video.frames[cursor..cursor + n], lambda)?;
                    candidates.push(self.cnn.features(fused.pixels(), space.resolution(j))?);
                    candidate_costs.push(step_cost(&self.cnn, &self.gru, space.resolution(j))?);
                }
                next_feature = Some(candidates[action].clone());
                records.push(StepRecord {
                    feature,
                    h_prev,
                    policy_input: policy_input.expect("training episodes use the policy"),
                    candidates,
                    candidate_costs,
                });
            } else {
                pixels = clip_mixup(&video.frames[cursor..cursor + consumed], lambda)?
                    .pixels()
                    .clone();
            }
            resolution = space.resolution(action);
            cursor += consumed;
            step += 1;
        }

        Ok(Episode {
            h_final: h,
            trace,
            ledger,
            distributions,
            overhead,
            records,
        })
    }
}
