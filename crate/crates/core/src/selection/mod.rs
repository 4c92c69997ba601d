//! Preference scores over clips and frames, and top-n frame selection.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::engine::{Engine, EpisodeMode};
use crate::error::{Error, Result};
use crate::policy::{straight_through, ActionDistribution, ActionSpace};
use crate::video::VideoSample;

/// Per-frame multiplicative decay away from the clip center.
pub const FRAME_DECAY: f64 = 0.9;

/// Which policy output a clip score is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScoreVariant {
    /// One-hot of the chosen action.
    S1,
    /// Action probabilities.
    S2,
    /// Gumbel-Softmax relaxed sample.
    S3,
}

impl ScoreVariant {
    pub const ALL: [ScoreVariant; 3] = [ScoreVariant::S1, ScoreVariant::S2, ScoreVariant::S3];
}

impl fmt::Display for ScoreVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreVariant::S1 => "S1",
            ScoreVariant::S2 => "S2",
            ScoreVariant::S3 => "S3",
        })
    }
}

impl FromStr for ScoreVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "S1" => Ok(ScoreVariant::S1),
            "S2" => Ok(ScoreVariant::S2),
            "S3" => Ok(ScoreVariant::S3),
            _ => Err(Error::InvalidArgument(format!("unknown score variant {s:?} (S1, S2, S3)"))),
        }
    }
}

/// `S = sum_j c_j / A_j` with `c` taken from `dist` according to `variant`.
pub fn clip_score(dist: &ActionDistribution, variant: ScoreVariant, space: &ActionSpace) -> Result<f64> {
    if dist.probs.len() != space.len() {
        return Err(Error::shape(
            "clip score",
            format!("{} probabilities for {} actions", dist.probs.len(), space.len()),
        ));
    }
    let weighted = |c: &[f64]| c.iter().zip(space.actions()).map(|(c, &a)| c / a as f64).sum();
    match variant {
        ScoreVariant::S1 => {
            let a = dist
                .chosen
                .ok_or_else(|| Error::InvalidArgument("S1 needs a chosen action".into()))?;
            if a >= space.len() {
                return Err(Error::InvalidArgument(format!("chosen action {a} out of range")));
            }
            Ok(1.0 / space.action(a) as f64)
        }
        ScoreVariant::S2 => Ok(weighted(&dist.probs)),
        ScoreVariant::S3 => {
            let relaxed = dist
                .relaxed
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("S3 needs a relaxed sample".into()))?;
            Ok(weighted(relaxed))
        }
    }
}

/// Spreads a clip score over `len` frames: the center frame (`len / 2`)
/// gets `score`, each step away multiplies by [`FRAME_DECAY`].
pub fn frame_scores(len: usize, score: f64) -> Result<Vec<f64>> {
    if len == 0 {
        return Err(Error::InvalidArgument("empty clip".into()));
    }
    let center = len / 2;
    Ok((0..len)
        .map(|i| score * FRAME_DECAY.powi(i.abs_diff(center) as i32))
        .collect())
}

/// A scored clip `[start, end)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceRecord {
    pub start: usize,
    pub end: usize,
    pub score: f64,
    pub variant: ScoreVariant,
    pub frame_scores: Vec<f64>,
}

/// Indices of the `n` highest scores in temporal order; ties go to the
/// earlier frame.
pub fn select_indices(scores: &[f64], n: usize) -> Result<Vec<usize>> {
    if n == 0 || n > scores.len() {
        return Err(Error::InvalidArgument(format!(
            "budget {n} outside 1..={}",
            scores.len()
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut picked = order[..n].to_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// The distilled video: the `n` best-scoring frames in temporal order,
/// labels carried over.
pub fn select_frames(video: &VideoSample, scores: &[f64], n: usize) -> Result<VideoSample> {
    if scores.len() != video.len() {
        return Err(Error::shape(
            "select frames",
            format!("{} scores for {} frames", scores.len(), video.len()),
        ));
    }
    let frames = select_indices(scores, n)?
        .into_iter()
        .map(|i| video.frames[i].clone())
        .collect();
    VideoSample::new(frames, video.label, video.source_id.clone())
}

/// Frame nearest the center of each of `n` equal segments.
pub fn uniform_indices(len: usize, n: usize) -> Result<Vec<usize>> {
    if n == 0 || n > len {
        return Err(Error::InvalidArgument(format!("budget {n} outside 1..={len}")));
    }
    Ok((0..n).map(|i| (i * len + len / 2) / n).collect())
}

/// Scoring parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scorer {
    pub variant: ScoreVariant,
    /// Temperature of the relaxed sample drawn for S3.
    pub tau: f64,
    /// Seed of the Gumbel noise behind S1 and S3.
    pub seed: u64,
}

impl Scorer {
    pub fn new(variant: ScoreVariant) -> Self {
        Scorer {
            variant,
            tau: 1.0,
            seed: 0,
        }
    }
}

/// Frame scores of one video plus the clips they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredVideo {
    pub scores: Vec<f64>,
    pub clips: Vec<PreferenceRecord>,
}

/// Runs an argmax episode and turns each step's distribution into scores
/// for the clip that step consumed. S1 takes the one-hot of a Gumbel-Max
/// draw from that distribution, so the draw can differ from the action the
/// episode took. Frame 0, which seeds the episode, takes the first clip's
/// peak score.
pub fn score_video(engine: &Engine, video: &VideoSample, scorer: &Scorer) -> Result<ScoredVideo> {
    let mut rng = ChaCha8Rng::seed_from_u64(scorer.seed);
    let episode = engine.run_episode(video, &EpisodeMode::Argmax, &mut rng)?;
    let space = engine.actions();
    let mut scores = vec![0.0; video.len()];
    let mut clips = Vec::with_capacity(episode.steps());
    for (entry, dist) in episode.trace.iter().zip(&episode.distributions) {
        let mut dist = dist.clone();
        // S1 and S3 read one Gumbel draw per step; the trajectory stays argmax.
        if scorer.variant != ScoreVariant::S2 {
            let (hard, relaxed) = straight_through(&dist, scorer.tau, &mut rng)?;
            dist.chosen = Some(hard);
            dist.relaxed = Some(relaxed);
        }
        let score = clip_score(&dist, scorer.variant, space)?;
        let fs = frame_scores(entry.consumed, score)?;
        scores[entry.cursor..entry.cursor + entry.consumed].copy_from_slice(&fs);
        clips.push(PreferenceRecord {
            start: entry.cursor,
            end: entry.cursor + entry.consumed,
            score,
            variant: scorer.variant,
            frame_scores: fs,
        });
    }
    if let Some(first) = clips.first() {
        scores[0] = first.score;
    }
    Ok(ScoredVideo { scores, clips })
}

/// Writes `frame_index,score,variant`.
pub fn write_scores_csv<W: Write>(out: W, scores: &[f64], variant: ScoreVariant) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["frame_index", "score", "variant"])?;
    for (i, s) in scores.iter().enumerate() {
        w.write_record([i.to_string(), format!("{s:.9}"), variant.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
