use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

use super::{build_samples, Frame, VideoSample};

/// Appearance and motion parameters for synthetic videos.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobDynamics {
    /// Mean background level.
    pub background: f64,
    /// Amplitude of the drifting sinusoidal texture.
    pub texture_amplitude: f64,
    /// Texture drift in pixels per frame.
    pub drift: f64,
    /// Maximum camera jitter in pixels.
    pub jitter: f64,
    /// Per-pixel uniform noise amplitude.
    pub noise: f64,
    /// Peak blob brightness added to the background.
    pub blob_intensity: f64,
    /// Gaussian blob radius (sigma) in pixels at 32x32; scales with frame size.
    pub blob_sigma: f64,
    /// Fraction of brightness lost in a flicker dip.
    pub flicker: f64,
    /// Blob onset frame range `[min, max)` as fractions of video length.
    pub onset: (f64, f64),
}

impl Default for BlobDynamics {
    fn default() -> Self {
        BlobDynamics {
            background: 0.3,
            texture_amplitude: 0.1,
            drift: 0.4,
            jitter: 1.0,
            noise: 0.02,
            blob_intensity: 0.55,
            blob_sigma: 3.0,
            flicker: 0.3,
            onset: (0.3, 0.85),
        }
    }
}

/// Parameters of a deterministic synthetic corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpusSpec {
    pub num_videos: usize,
    pub frames_per_video: usize,
    pub frame_size: usize,
    pub channels: usize,
    /// Positive to negative ratio, e.g. `(2, 1)`.
    pub positive_ratio: (u32, u32),
    pub dynamics: BlobDynamics,
    pub seed: u64,
}

impl Default for SyntheticCorpusSpec {
    fn default() -> Self {
        SyntheticCorpusSpec {
            num_videos: 30,
            frames_per_video: 64,
            frame_size: 32,
            channels: 1,
            positive_ratio: (2, 1),
            dynamics: BlobDynamics::default(),
            seed: 0,
        }
    }
}

impl SyntheticCorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.frames_per_video == 0 {
            return bad("frames_per_video must be positive".into());
        }
        if self.frame_size < super::MIN_FRAME_SIDE {
            return bad(format!("frame_size {} too small", self.frame_size));
        }
        if self.channels != 1 && self.channels != 3 {
            return bad(format!("channels must be 1 or 3, got {}", self.channels));
        }
        let (p, n) = self.positive_ratio;
        if p + n == 0 {
            return bad("positive_ratio must not be 0:0".into());
        }
        let (lo, hi) = self.dynamics.onset;
        if !(0.0..=1.0).contains(&lo) || !(lo..=1.0).contains(&hi) {
            return bad(format!("onset range ({lo}, {hi}) invalid"));
        }
        Ok(())
    }

    pub fn num_positive(&self) -> usize {
        let (p, n) = self.positive_ratio;
        ((self.num_videos as f64) * p as f64 / (p + n) as f64).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub videos: Vec<VideoSample>,
}

impl Corpus {
    pub fn positives(&self) -> usize {
        self.videos.iter().filter(|v| v.label).count()
    }
}

/// Generates the corpus. Positive videos get a flickering bright blob that
/// appears at a random onset and stays to the end; every video has a
/// drifting texture, camera jitter and pixel noise. Pixel values are
/// rounded to `f32` precision so the raw format round-trips exactly.
pub fn generate_corpus(spec: &SyntheticCorpusSpec) -> Result<Corpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut labels: Vec<bool> = (0..spec.num_videos)
        .map(|i| i < spec.num_positive())
        .collect();
    labels.shuffle(&mut rng);
    let seeds: Vec<u64> = labels.iter().map(|_| rng.random()).collect();

    let videos = labels
        .par_iter()
        .zip(seeds.par_iter())
        .enumerate()
        .map(|(i, (&positive, &seed))| generate_video(spec, i, positive, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus { videos })
}

fn generate_video(spec: &SyntheticCorpusSpec, index: usize, positive: bool, seed: u64) -> Result<VideoSample> {
    let d = &spec.dynamics;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, c) = (spec.frame_size, spec.channels);
    let len = spec.frames_per_video;
    let scale = n as f64 / 32.0;

    let freq = (rng.random_range(0.15..0.35), rng.random_range(0.15..0.35));
    let phase = (rng.random_range(0.0..6.3), rng.random_range(0.0..6.3));
    let drift_dir = rng.random_range(0.0..std::f64::consts::TAU);
    let onset = if positive {
        let lo = (d.onset.0 * len as f64).floor() as usize;
        let hi = ((d.onset.1 * len as f64).ceil() as usize).clamp(lo + 1, len);
        rng.random_range(lo..hi)
    } else {
        usize::MAX
    };
    let margin = 0.25 * n as f64;
    let mut blob = (
        rng.random_range(margin..n as f64 - margin),
        rng.random_range(margin..n as f64 - margin),
    );
    let sigma = d.blob_sigma * scale;
    // Fire tint for RGB; grayscale uses the first weight.
    let tint = [1.0, 0.65, 0.25];

    let mut frames = Vec::with_capacity(len);
    for t in 0..len {
        let jx = rng.random_range(-d.jitter..=d.jitter) * scale;
        let jy = rng.random_range(-d.jitter..=d.jitter) * scale;
        let ox = t as f64 * d.drift * drift_dir.cos() * scale + jx;
        let oy = t as f64 * d.drift * drift_dir.sin() * scale + jy;
        let burning = t >= onset;
        let intensity = if burning {
            blob.0 += rng.random_range(-0.3..0.3) * scale;
            blob.1 += rng.random_range(-0.3..0.3) * scale;
            d.blob_intensity * (1.0 - d.flicker * rng.random::<f64>())
        } else {
            0.0
        };
        let mut data = Vec::with_capacity(c * n * n);
        for ch in 0..c {
            for y in 0..n {
                for x in 0..n {
                    let (fx, fy) = ((x as f64 + ox) / scale, (y as f64 + oy) / scale);
                    let mut v = d.background
                        + d.texture_amplitude * (freq.0 * fx + phase.0).sin() * (freq.1 * fy + phase.1).sin();
                    if burning {
                        let (dx, dy) = (x as f64 - blob.0 - jx, y as f64 - blob.1 - jy);
                        let w = if c == 3 { tint[ch] } else { 1.0 };
                        v += w * intensity * (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
                    }
                    v += d.noise * rng.random_range(-1.0..1.0);
                    data.push(v.clamp(0.0, 1.0) as f32 as f64);
                }
            }
        }
        frames.push(Frame::new(Tensor::new(vec![c, n, n], data)?, Some(burning))?);
    }
    let mut samples = build_samples(&frames, len, &format!("synth{index:05}"))?;
    let mut video = samples.remove(0);
    video.source_id = format!("synth{index:05}");
    debug_assert_eq!(video.label, positive);
    Ok(video)
}
