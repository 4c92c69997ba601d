use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Full-resolution features of uniformly spaced lookahead frames.
#[derive(Debug, Clone, PartialEq)]
pub struct StationPointSet {
    pub indices: Vec<usize>,
    pub features: Vec<Tensor>,
    /// Feature length, kept so an empty set can still produce a zero vector.
    pub dim: usize,
}

/// Interior uniform placement: `round((j + 1) * len / (count + 1))`.
/// When `count` is close to `len` rounding can repeat an index; repeats
/// are dropped.
pub fn station_indices(len: usize, count: usize) -> Result<Vec<usize>> {
    if count > len {
        return Err(Error::InvalidArgument(format!(
            "{count} station points requested for a {len}-frame video"
        )));
    }
    let mut idx: Vec<usize> = (0..count)
        .map(|j| (((j + 1) * len) as f64 / (count + 1) as f64).round() as usize)
        .map(|i| i.min(len - 1))
        .collect();
    idx.dedup();
    Ok(idx)
}

impl StationPointSet {
    pub fn new(indices: Vec<usize>, features: Vec<Tensor>, dim: usize) -> Result<Self> {
        if indices.len() != features.len() {
            return Err(Error::InvalidArgument(format!(
                "{} station indices but {} features",
                indices.len(),
                features.len()
            )));
        }
        if indices.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("station indices must increase".into()));
        }
        if let Some(f) = features.iter().find(|f| f.shape() != [dim]) {
            return Err(Error::shape(
                "station points",
                format!("feature {:?}, expected [{dim}]", f.shape()),
            ));
        }
        Ok(StationPointSet {
            indices,
            features,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Position in the set of the station used at `cursor`: the smallest
    /// index strictly after it, else the last one.
    pub fn nearest_future_index(&self, cursor: usize) -> Option<usize> {
        if self.indices.is_empty() {
            return None;
        }
        let pos = self.indices.partition_point(|&m| m <= cursor);
        Some(pos.min(self.indices.len() - 1))
    }

    /// Feature of the nearest future station; zero vector for an empty set.
    pub fn nearest_future(&self, cursor: usize) -> Tensor {
        match self.nearest_future_index(cursor) {
            Some(i) => self.features[i].clone(),
            None => Tensor::zeros(&[self.dim]),
        }
    }
}
