#![allow(dead_code)]

pub mod detect;

use clipforge::numerics::attention::{ChannelAttention, Eca, ShuffleAttention, SpatialAttention};
use clipforge::numerics::init::uniform_tensor;
use clipforge::numerics::{
    Conv2d, Dense, GlobalAvgPool, GroupNorm, GruCell, Layer, LayerKind, MaxPool, Relu, Sigmoid,
    Softmax, Tensor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn randomize_all(layer: &mut Layer, rng: &mut ChaCha8Rng) {
    use clipforge::numerics::Module;
    for p in layer.params_mut() {
        *p = uniform_tensor(p.shape(), 0.8, rng);
    }
}

/// A randomly parameterized layer of `kind` and a matching random input.
pub fn random_layer(kind: LayerKind, seed: u64) -> (Layer, Tensor) {
    let mut r = rng(seed);
    let c = r.random_range(2..5usize) * 2;
    let h = r.random_range(3..7usize);
    let w = r.random_range(3..7usize);
    let map = uniform_tensor(&[c, h, w], 1.0, &mut r);
    let (mut layer, input) = match kind {
        LayerKind::Conv2d => {
            let k = r.random_range(1..4usize);
            let stride = r.random_range(1..3usize);
            let pad = r.random_range(0..2usize);
            (Layer::Conv2d(Conv2d::new(c, 3, k, stride, pad)), map)
        }
        LayerKind::Dense => (Layer::Dense(Dense::new(c, 5)), uniform_tensor(&[c], 1.0, &mut r)),
        LayerKind::GroupNorm => (
            Layer::GroupNorm(GroupNorm::new(2, c).unwrap()),
            if r.random() { map } else { uniform_tensor(&[c], 1.0, &mut r) },
        ),
        LayerKind::GruCell => (
            Layer::GruCell(GruCell::new(c, 4)),
            uniform_tensor(&[c + 4], 1.0, &mut r),
        ),
        LayerKind::GlobalAvgPool => (Layer::GlobalAvgPool(GlobalAvgPool), map),
        LayerKind::MaxPool => (Layer::MaxPool(MaxPool::new(2, r.random_range(1..3))), map),
        LayerKind::Softmax => (Layer::Softmax(Softmax), uniform_tensor(&[c], 2.0, &mut r)),
        LayerKind::Sigmoid => (Layer::Sigmoid(Sigmoid), map),
        LayerKind::Relu => (Layer::Relu(Relu), map),
        LayerKind::ChannelAttention => (Layer::ChannelAttention(ChannelAttention::new(c, 2)), map),
        LayerKind::SpatialAttention => (
            Layer::SpatialAttention(SpatialAttention::new(3).unwrap()),
            map,
        ),
        LayerKind::Eca => (Layer::Eca(Eca::new(c, 3).unwrap()), map),
        LayerKind::ShuffleAttention => (
            Layer::ShuffleAttention(ShuffleAttention::new(c, c / 2).unwrap()),
            map,
        ),
    };
    randomize_all(&mut layer, &mut r);
    (layer, input)
}

/// Small randomly initialized engine on 16x16 grayscale frames.
pub fn tiny_engine(seed: u64) -> clipforge::engine::Engine {
    use clipforge::engine::{Engine, EngineConfig};
    use clipforge::policy::ActionSpace;
    let config = EngineConfig {
        widths: vec![4, 8],
        hidden: 8,
        actions: ActionSpace::new(vec![1, 3, 5, 7], vec![16, 12, 8, 6]).unwrap(),
        ..EngineConfig::default()
    };
    Engine::new(config).unwrap().init(&mut rng(seed))
}

/// Random frames in [0, 1] with alternating labels.
pub fn random_video(len: usize, side: usize, seed: u64) -> clipforge::video::VideoSample {
    use clipforge::video::{Frame, VideoSample};
    let mut r = rng(seed);
    let frames = (0..len)
        .map(|i| {
            let px = (0..side * side).map(|_| r.random_range(0.0..1.0)).collect();
            Frame::new(Tensor::new(vec![1, side, side], px).unwrap(), Some(i % 5 == 4)).unwrap()
        })
        .collect();
    VideoSample::new(frames, len >= 5, format!("rand{seed}")).unwrap()
}
