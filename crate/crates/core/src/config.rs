//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Lists are comma
//! separated. Unknown keys are errors.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::detection::{AttentionConfig, AttentionKind};
use crate::engine::EngineConfig;
use crate::error::{Error, Result};
use crate::policy::ActionSpace;
use crate::training::{BalanceForm, TrainConfig};
use crate::video::SyntheticCorpusSpec;

/// Everything a command needs besides its own flags.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    /// Training corpus; its seed is the run seed.
    pub corpus: SyntheticCorpusSpec,
    /// Size of the test corpus, generated with seed + 1.
    pub test_videos: usize,
    pub engine: EngineConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: PathBuf::from("out"),
            corpus: SyntheticCorpusSpec::default(),
            test_videos: 30,
            engine: EngineConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

/// Every accepted key, in the order [`RunConfig::to_text`] writes them.
pub const KEYS: &[&str] = &[
    "seed",
    "out",
    "corpus.train_videos",
    "corpus.test_videos",
    "corpus.frames",
    "corpus.size",
    "corpus.channels",
    "corpus.positive_ratio",
    "corpus.background",
    "corpus.texture_amplitude",
    "corpus.drift",
    "corpus.jitter",
    "corpus.noise",
    "corpus.blob_intensity",
    "corpus.blob_sigma",
    "corpus.flicker",
    "corpus.onset",
    "engine.widths",
    "engine.hidden",
    "engine.policy_groups",
    "engine.stations",
    "engine.actions",
    "engine.resolutions",
    "engine.mixup_alpha",
    "engine.attention",
    "attention.reduction",
    "attention.spatial_kernel",
    "attention.eca_kernel",
    "attention.shuffle_groups",
    "train.momentum",
    "train.weight_decay",
    "train.beta",
    "train.gamma",
    "train.balance",
    "train.tau_initial",
    "train.tau_floor",
    "train.tau_steps",
    "train.frames_per_video",
    "phase1.epochs",
    "phase1.lr",
    "phase1.milestones",
    "phase1.batch_size",
    "phase2.epochs",
    "phase2.lr",
    "phase2.milestones",
    "phase2.batch_size",
    "phase3.epochs",
    "phase3.lr",
    "phase3.milestones",
    "phase3.batch_size",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn attention_or_default(engine: &mut EngineConfig) -> &mut AttentionConfig {
    engine
        .attention
        .get_or_insert_with(|| AttentionConfig::new(AttentionKind::Cbam, 1))
}

impl RunConfig {
    /// The configuration the acceptance experiments run: desk defaults with
    /// a 32-unit GRU and 60 + 60 videos.
    pub fn reference() -> Self {
        let mut c = RunConfig {
            seed: 1,
            test_videos: 60,
            ..RunConfig::default()
        };
        c.corpus.num_videos = 60;
        c.engine.hidden = 32;
        c.sync_seeds();
        c
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        // Actions and resolutions must agree in length, so they are applied
        // together after every other key.
        let mut actions = None;
        let mut resolutions = None;
        // Attention parameters only apply when a kind is enabled, wherever
        // the kind appears in the file.
        let mut attention: Vec<(usize, &str, &str)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {line:?}", i + 1)))?;
            let at_line = |e: Error| Error::Config(format!("line {}: {}", i + 1, e.to_string().trim_start_matches("config error: ")));
            match key.trim() {
                "engine.actions" => actions = Some(parse_list(key.trim(), value.trim()).map_err(at_line)?),
                "engine.resolutions" => resolutions = Some(parse_list(key.trim(), value.trim()).map_err(at_line)?),
                k if k == "engine.attention" || k.starts_with("attention.") => attention.push((i + 1, k, value.trim())),
                k => c.set(k, value.trim()).map_err(at_line)?,
            }
        }
        attention.sort_by_key(|&(_, k, _)| k != "engine.attention");
        let mut scratch = c.clone();
        for (line, k, v) in attention {
            let target = if k == "engine.attention" || c.engine.attention.is_some() {
                &mut c
            } else {
                &mut scratch
            };
            target
                .set(k, v)
                .map_err(|e| Error::Config(format!("line {line}: {}", e.to_string().trim_start_matches("config error: "))))?;
        }
        if actions.is_some() || resolutions.is_some() {
            c.engine.actions = space(
                actions.unwrap_or_else(|| c.engine.actions.actions().to_vec()),
                resolutions.unwrap_or_else(|| c.engine.actions.resolutions().to_vec()),
            )?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Applies one key. The run seed also seeds training and the corpus.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let d = &mut self.corpus.dynamics;
        match key {
            "seed" => {
                self.seed = parse(key, value)?;
                self.sync_seeds();
            }
            "out" => self.out = PathBuf::from(value),
            "corpus.train_videos" => self.corpus.num_videos = parse(key, value)?,
            "corpus.test_videos" => self.test_videos = parse(key, value)?,
            "corpus.frames" => self.corpus.frames_per_video = parse(key, value)?,
            "corpus.size" => self.corpus.frame_size = parse(key, value)?,
            "corpus.channels" => {
                self.corpus.channels = parse(key, value)?;
                self.engine.channels = self.corpus.channels;
            }
            "corpus.positive_ratio" => {
                let (p, n) = value
                    .split_once(':')
                    .ok_or_else(|| Error::Config(format!("{key}: expected p:n, got {value:?}")))?;
                self.corpus.positive_ratio = (parse(key, p.trim())?, parse(key, n.trim())?);
            }
            "corpus.background" => d.background = parse(key, value)?,
            "corpus.texture_amplitude" => d.texture_amplitude = parse(key, value)?,
            "corpus.drift" => d.drift = parse(key, value)?,
            "corpus.jitter" => d.jitter = parse(key, value)?,
            "corpus.noise" => d.noise = parse(key, value)?,
            "corpus.blob_intensity" => d.blob_intensity = parse(key, value)?,
            "corpus.blob_sigma" => d.blob_sigma = parse(key, value)?,
            "corpus.flicker" => d.flicker = parse(key, value)?,
            "corpus.onset" => match parse_list::<f64>(key, value)?[..] {
                [lo, hi] => d.onset = (lo, hi),
                _ => return Err(Error::Config(format!("{key}: expected two fractions"))),
            },
            "engine.widths" => self.engine.widths = parse_list(key, value)?,
            "engine.hidden" => self.engine.hidden = parse(key, value)?,
            "engine.policy_groups" => self.engine.policy_groups = parse(key, value)?,
            "engine.stations" => self.engine.station_count = parse(key, value)?,
            "engine.actions" => {
                let res = self.engine.actions.resolutions().to_vec();
                self.engine.actions = space(parse_list(key, value)?, res)?;
            }
            "engine.resolutions" => {
                let actions = self.engine.actions.actions().to_vec();
                self.engine.actions = space(actions, parse_list(key, value)?)?;
            }
            "engine.mixup_alpha" => self.engine.mixup_alpha = parse(key, value)?,
            "engine.attention" => {
                self.engine.attention = match value {
                    "none" => None,
                    other => {
                        let kind: AttentionKind = other.parse().map_err(|_| {
                            Error::Config(format!("{key}: expected none, cbam, eca or shuffle, got {other:?}"))
                        })?;
                        let mut a = self.engine.attention.clone().unwrap_or(AttentionConfig::new(kind, 1));
                        a.kind = kind;
                        Some(a)
                    }
                }
            }
            "attention.reduction" => attention_or_default(&mut self.engine).reduction = parse(key, value)?,
            "attention.spatial_kernel" => attention_or_default(&mut self.engine).spatial_kernel = parse(key, value)?,
            "attention.eca_kernel" => {
                attention_or_default(&mut self.engine).eca_kernel = match value {
                    "adaptive" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "attention.shuffle_groups" => attention_or_default(&mut self.engine).shuffle_groups = parse(key, value)?,
            "train.momentum" => self.train.momentum = parse(key, value)?,
            "train.weight_decay" => self.train.weight_decay = parse(key, value)?,
            "train.beta" => self.train.beta = parse(key, value)?,
            "train.gamma" => self.train.gamma = parse(key, value)?,
            "train.balance" => {
                self.train.balance = value
                    .parse::<BalanceForm>()
                    .map_err(|_| Error::Config(format!("{key}: expected abs or square, got {value:?}")))?
            }
            "train.tau_initial" => self.train.tau.initial = parse(key, value)?,
            "train.tau_floor" => self.train.tau.floor = parse(key, value)?,
            "train.tau_steps" => self.train.tau.total_steps = parse(key, value)?,
            "train.frames_per_video" => self.train.frames_per_video = parse(key, value)?,
            _ => return self.set_phase(key, value),
        }
        Ok(())
    }

    fn set_phase(&mut self, key: &str, value: &str) -> Result<()> {
        let unknown = || Error::Config(format!("unknown key {key:?}"));
        let (phase, field) = key.split_once('.').ok_or_else(unknown)?;
        let p = match phase {
            "phase1" => &mut self.train.phase1,
            "phase2" => &mut self.train.phase2,
            "phase3" => &mut self.train.phase3,
            _ => return Err(unknown()),
        };
        match field {
            "epochs" => p.epochs = parse(key, value)?,
            "lr" => p.lr = parse(key, value)?,
            "milestones" => p.milestones = parse_list(key, value)?,
            "batch_size" => p.batch_size = parse(key, value)?,
            _ => return Err(unknown()),
        }
        Ok(())
    }

    fn sync_seeds(&mut self) {
        self.corpus.seed = self.seed;
        self.train.seed = self.seed;
    }

    /// Corpus parameters of the held-out split.
    pub fn test_corpus(&self) -> SyntheticCorpusSpec {
        SyntheticCorpusSpec {
            num_videos: self.test_videos,
            seed: self.seed.wrapping_add(1),
            ..self.corpus.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| Error::Config(e.to_string());
        self.corpus.validate().map_err(cfg)?;
        self.train.validate()?;
        if self.engine.actions.full_resolution() > self.corpus.frame_size {
            return Err(Error::Config(format!(
                "full resolution {} exceeds corpus.size {}",
                self.engine.actions.full_resolution(),
                self.corpus.frame_size
            )));
        }
        if let Some(a) = &self.engine.attention {
            AttentionConfig {
                channels: self.engine.widths.iter().copied().min().unwrap_or(1),
                ..a.clone()
            }
            .validate()
            .map_err(cfg)?;
        }
        crate::engine::Engine::new(self.engine.clone()).map_err(cfg)?;
        Ok(())
    }

    /// Writes every key with its current value; `parse` of the result
    /// gives back the same configuration.
    pub fn to_text(&self) -> String {
        let d = &self.corpus.dynamics;
        let t = &self.train;
        let att = self.engine.attention.clone();
        let a = att.clone().unwrap_or(AttentionConfig::new(AttentionKind::Cbam, 1));
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("seed", self.seed.to_string());
        kv("out", self.out.display().to_string());
        kv("corpus.train_videos", self.corpus.num_videos.to_string());
        kv("corpus.test_videos", self.test_videos.to_string());
        kv("corpus.frames", self.corpus.frames_per_video.to_string());
        kv("corpus.size", self.corpus.frame_size.to_string());
        kv("corpus.channels", self.corpus.channels.to_string());
        kv("corpus.positive_ratio", format!("{}:{}", self.corpus.positive_ratio.0, self.corpus.positive_ratio.1));
        kv("corpus.background", d.background.to_string());
        kv("corpus.texture_amplitude", d.texture_amplitude.to_string());
        kv("corpus.drift", d.drift.to_string());
        kv("corpus.jitter", d.jitter.to_string());
        kv("corpus.noise", d.noise.to_string());
        kv("corpus.blob_intensity", d.blob_intensity.to_string());
        kv("corpus.blob_sigma", d.blob_sigma.to_string());
        kv("corpus.flicker", d.flicker.to_string());
        kv("corpus.onset", format!("{},{}", d.onset.0, d.onset.1));
        kv("engine.widths", join(&self.engine.widths));
        kv("engine.hidden", self.engine.hidden.to_string());
        kv("engine.policy_groups", self.engine.policy_groups.to_string());
        kv("engine.stations", self.engine.station_count.to_string());
        kv("engine.actions", join(self.engine.actions.actions()));
        kv("engine.resolutions", join(self.engine.actions.resolutions()));
        kv("engine.mixup_alpha", self.engine.mixup_alpha.to_string());
        kv("engine.attention", att.map_or("none".to_string(), |a| a.kind.to_string()));
        kv("attention.reduction", a.reduction.to_string());
        kv("attention.spatial_kernel", a.spatial_kernel.to_string());
        kv("attention.eca_kernel", a.eca_kernel.map_or("adaptive".to_string(), |k| k.to_string()));
        kv("attention.shuffle_groups", a.shuffle_groups.to_string());
        kv("train.momentum", t.momentum.to_string());
        kv("train.weight_decay", t.weight_decay.to_string());
        kv("train.beta", t.beta.to_string());
        kv("train.gamma", t.gamma.to_string());
        kv("train.balance", t.balance.to_string());
        kv("train.tau_initial", t.tau.initial.to_string());
        kv("train.tau_floor", t.tau.floor.to_string());
        kv("train.tau_steps", t.tau.total_steps.to_string());
        kv("train.frames_per_video", t.frames_per_video.to_string());
        for (i, p) in [&t.phase1, &t.phase2, &t.phase3].into_iter().enumerate() {
            kv(&format!("phase{}.epochs", i + 1), p.epochs.to_string());
            kv(&format!("phase{}.lr", i + 1), p.lr.to_string());
            kv(&format!("phase{}.milestones", i + 1), join(&p.milestones));
            kv(&format!("phase{}.batch_size", i + 1), p.batch_size.to_string());
        }
        s
    }
}

fn space(actions: Vec<usize>, resolutions: Vec<usize>) -> Result<ActionSpace> {
    ActionSpace::new(actions, resolutions).map_err(|e| Error::Config(format!("action space: {e}")))
}
