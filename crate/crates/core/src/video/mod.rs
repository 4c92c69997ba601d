//! Frames, labelled frame windows, bilinear resizing, the synthetic corpus
//! generator and on-disk formats.

mod corpus;
pub mod io;
mod resize;

pub use corpus::{generate_corpus, BlobDynamics, Corpus, SyntheticCorpusSpec};
pub use resize::{resize_backward, resize_tensor};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Smallest side accepted for frames built from external data.
pub const MIN_FRAME_SIDE: usize = 4;

/// One raster frame with pixel values in `[0, 1]`, stored `[C, H, W]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pixels: Tensor,
    pub label: Option<bool>,
}

impl Frame {
    pub fn new(pixels: Tensor, label: Option<bool>) -> Result<Self> {
        let (c, h, w) = pixels.chw()?;
        if c != 1 && c != 3 {
            return Err(Error::InvalidArgument(format!(
                "frames have 1 or 3 channels, got {c}"
            )));
        }
        if h < MIN_FRAME_SIDE || w < MIN_FRAME_SIDE {
            return Err(Error::InvalidArgument(format!(
                "frame {h}x{w} below minimum side {MIN_FRAME_SIDE}"
            )));
        }
        Self::check_range(&pixels)?;
        Ok(Frame { pixels, label })
    }

    /// Skips the minimum-size check; used for resized and fused frames.
    pub(crate) fn from_parts(pixels: Tensor, label: Option<bool>) -> Self {
        debug_assert!(pixels.rank() == 3);
        Frame { pixels, label }
    }

    fn check_range(pixels: &Tensor) -> Result<()> {
        if let Some(v) = pixels.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "pixel value {v} outside [0, 1]"
            )));
        }
        Ok(())
    }

    pub fn pixels(&self) -> &Tensor {
        &self.pixels
    }

    pub fn channels(&self) -> usize {
        self.pixels.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.pixels.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.pixels.shape()[2]
    }

    pub fn mean_intensity(&self) -> f64 {
        self.pixels.sum() / self.pixels.len() as f64
    }

    /// Bilinear resize to `target x target` with half-pixel centers: output
    /// pixel `i` samples source coordinate `(i + 0.5) * in / out - 0.5`,
    /// clamped to the valid range.
    pub fn resize(&self, target: usize) -> Result<Frame> {
        if target < 2 {
            return Err(Error::InvalidArgument(format!(
                "resize target must be at least 2, got {target}"
            )));
        }
        if self.height() == target && self.width() == target {
            return Ok(self.clone());
        }
        let pixels = resize_tensor(&self.pixels, target, target)?
            .map(|v| v.clamp(0.0, 1.0));
        Ok(Frame::from_parts(pixels, self.label))
    }
}

/// A labelled run of consecutive frames.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoSample {
    pub frames: Vec<Frame>,
    pub label: bool,
    pub source_id: String,
}

impl VideoSample {
    pub fn new(frames: Vec<Frame>, label: bool, source_id: impl Into<String>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::InvalidArgument("video has no frames".into()))?;
        let shape = first.pixels().shape().to_vec();
        if let Some((i, f)) = frames
            .iter()
            .enumerate()
            .find(|(_, f)| f.pixels().shape() != shape)
        {
            return Err(Error::shape(
                "video",
                format!("frame {i} is {:?}, expected {shape:?}", f.pixels().shape()),
            ));
        }
        Ok(VideoSample {
            frames,
            label,
            source_id: source_id.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame_shape(&self) -> &[usize] {
        self.frames[0].pixels().shape()
    }
}

/// Cuts a labelled frame stream into non-overlapping windows of `window`
/// frames. A window is positive iff any member frame is; a trailing
/// remainder shorter than `window` is dropped.
pub fn build_samples(frames: &[Frame], window: usize, source_id: &str) -> Result<Vec<VideoSample>> {
    if window == 0 {
        return Err(Error::InvalidArgument("window must be at least 1".into()));
    }
    if frames.is_empty() {
        return Err(Error::InvalidArgument("empty frame stream".into()));
    }
    if let Some(i) = frames.iter().position(|f| f.label.is_none()) {
        return Err(Error::InvalidArgument(format!("frame {i} has no label")));
    }
    frames
        .chunks_exact(window)
        .enumerate()
        .map(|(k, chunk)| {
            let label = chunk.iter().any(|f| f.label == Some(true));
            VideoSample::new(chunk.to_vec(), label, format!("{source_id}-{k:04}"))
        })
        .collect()
}
