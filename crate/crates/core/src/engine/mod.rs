//! The compression engine: clip mixup, station points, the CNN+GRU feature
//! extractor and the policy-driven episode runner.

mod episode;
mod extractor;
mod ledger;
mod mixup;
mod stations;

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::Rng;

pub use episode::{write_trace_csv, Episode, EpisodeMode, StepRecord, TraceEntry};
pub use extractor::{resize_for, PIXEL_MEAN, PIXEL_STD, step_cost, step_features, FeatureCnn, StepFunction};
pub use ledger::FlopsLedger;
pub use mixup::{clip_mixup, sample_lambda};
pub use stations::{station_indices, StationPointSet};

use crate::detection::AttentionConfig;
use crate::error::{Error, Result};
use crate::numerics::{read_checkpoint, softmax, write_checkpoint, Dense, GruCell, Module, Tensor};
use crate::policy::{ActionSpace, PolicyNet};
use crate::video::VideoSample;

/// Default GRU hidden size.
pub const DEFAULT_HIDDEN: usize = 512;

/// Architecture of an [`Engine`].
#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub channels: usize,
    pub widths: Vec<usize>,
    pub hidden: usize,
    pub policy_groups: usize,
    pub station_count: usize,
    pub actions: ActionSpace,
    pub attention: Option<AttentionConfig>,
    /// Beta parameter for the mixup coefficient in sampling episodes.
    pub mixup_alpha: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            channels: 1,
            widths: vec![8, 16, 32],
            hidden: DEFAULT_HIDDEN,
            policy_groups: 8,
            station_count: 2,
            actions: ActionSpace::desk_default(),
            attention: None,
            mixup_alpha: 0.3,
        }
    }
}

/// Number of classes of the video and frame classifiers.
pub const NUM_CLASSES: usize = 2;

/// Feature extractor, policy and classifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct Engine {
    pub config: EngineConfig,
    pub cnn: FeatureCnn,
    pub gru: GruCell,
    pub policy: PolicyNet,
    /// Video classifier on the final hidden state.
    pub classifier: Dense,
    /// Frame classifier on CNN features, used to pretrain the CNN.
    pub frame_head: Dense,
}

impl Engine {
    /// Engine with all weights zero.
    pub fn new(config: EngineConfig) -> Result<Self> {
        if config.hidden == 0 {
            return Err(Error::InvalidArgument("hidden size must be positive".into()));
        }
        let cnn = FeatureCnn::new(config.channels, &config.widths, config.attention.as_ref())?;
        let f = cnn.feature_dim();
        let gru = GruCell::new(f, config.hidden);
        let policy = PolicyNet::new(config.hidden, f, config.actions.len(), config.policy_groups)?;
        Ok(Engine {
            classifier: Dense::new(config.hidden, NUM_CLASSES),
            frame_head: Dense::new(f, NUM_CLASSES),
            cnn,
            gru,
            policy,
            config,
        })
    }

    pub fn init<R: Rng + ?Sized>(self, rng: &mut R) -> Self {
        Engine {
            cnn: self.cnn.init(rng),
            gru: self.gru.init(rng),
            policy: self.policy.init(rng),
            classifier: self.classifier.init(rng),
            frame_head: self.frame_head.init(rng),
            config: self.config,
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.gru.hidden()
    }

    pub fn feature_dim(&self) -> usize {
        self.cnn.feature_dim()
    }

    pub fn actions(&self) -> &ActionSpace {
        &self.config.actions
    }

    /// Cost of one feature-extraction step at the full resolution.
    pub fn full_step_cost(&self) -> Result<u64> {
        step_cost(&self.cnn, &self.gru, self.config.actions.full_resolution())
    }

    pub fn extract_station_points(&self, video: &VideoSample, count: usize) -> Result<StationPointSet> {
        let indices = station_indices(video.len(), count)?;
        let full = self.config.actions.full_resolution();
        let features = indices
            .iter()
            .map(|&i| self.cnn.features(video.frames[i].pixels(), full))
            .collect::<Result<Vec<_>>>()?;
        StationPointSet::new(indices, features, self.feature_dim())
    }

    /// Class probabilities for a final hidden state.
    pub fn classify(&self, h_final: &Tensor) -> Result<Vec<f64>> {
        let logits = self.classifier.forward(h_final)?;
        if !logits.is_finite() {
            return Err(Error::NonFinite("classifier logits".into()));
        }
        Ok(softmax(logits.data()))
    }

    /// Positive-class decision for a final hidden state.
    pub fn predict(&self, h_final: &Tensor) -> Result<bool> {
        let p = self.classify(h_final)?;
        Ok(p[1] > p[0])
    }

    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        fn prefixed<'a>(prefix: &'a str, m: &'a dyn Module) -> impl Iterator<Item = (String, &'a Tensor)> + 'a {
            m.named_params().into_iter().map(move |(n, t)| (format!("{prefix}.{n}"), t))
        }
        prefixed("cnn", &self.cnn.body)
            .chain(prefixed("gru", &self.gru))
            .chain(prefixed("policy", &self.policy.head))
            .chain(prefixed("classifier", &self.classifier))
            .chain(prefixed("frame_head", &self.frame_head))
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.cnn.body.params_mut();
        v.extend(self.gru.params_mut());
        v.extend(self.policy.head.params_mut());
        v.extend(self.classifier.params_mut());
        v.extend(self.frame_head.params_mut());
        v
    }

    /// Replaces every parameter with the tensor of the same name. Names and
    /// shapes must match this engine's architecture exactly.
    pub fn load_params(&mut self, tensors: Vec<(String, Tensor)>) -> Result<()> {
        let names: Vec<(String, Vec<usize>)> = self
            .named_params()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect();
        if names.len() != tensors.len() {
            return Err(Error::Format(format!(
                "checkpoint has {} tensors, engine expects {}",
                tensors.len(),
                names.len()
            )));
        }
        for ((name, shape), (got, t)) in names.iter().zip(&tensors) {
            if name != got || shape.as_slice() != t.shape() {
                return Err(Error::Format(format!(
                    "checkpoint tensor {got} {:?} does not match {name} {shape:?}",
                    t.shape()
                )));
            }
        }
        for (slot, (_, t)) in self.params_mut().into_iter().zip(tensors) {
            *slot = t;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_checkpoint(BufWriter::new(File::create(path)?), &self.named_params())
    }

    pub fn load(&mut self, path: &Path) -> Result<()> {
        let tensors = read_checkpoint(BufReader::new(File::open(path)?))?;
        self.load_params(tensors)
    }
}
