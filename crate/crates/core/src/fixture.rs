//! Bundled topologies and seeded synthetic data.
//!
//! No trained weights or datasets ship with the crate. Fixtures use a
//! seeded "teacher" parameter set and random images whose labels are the
//! teacher's own software-stage predictions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engines::{trace, EngineError, StageConfig};
use crate::netspec::{parse_topology, LayerParams, NetworkSpec, ParameterSet};
use crate::numerics::{Shape, Tensor};
use crate::textfmt::canonical;

pub const LENET_TOPOLOGY: &str = include_str!("../fixtures/lenet.topo");
pub const CIFAR_TOPOLOGY: &str = include_str!("../fixtures/cifar.topo");

/// Seed used by the bundled fixtures unless told otherwise.
pub const DEFAULT_SEED: u64 = 2019;

/// Index of the synthetic test image used by default. Image 0 of the
/// default seed has one of its ten fc2 outputs outside the 100-image
/// envelope, so it stops at the software gate.
pub const DEFAULT_TEST_IMAGE: u64 = 1;

const PARAM_STREAM: u64 = 0;
const CALIBRATION_STREAM: u64 = 1 << 32;
const TEST_STREAM: u64 = 2 << 32;

pub fn lenet() -> NetworkSpec {
    parse_topology(LENET_TOPOLOGY).expect("bundled LeNet topology is valid")
}

pub fn cifar() -> NetworkSpec {
    parse_topology(CIFAR_TOPOLOGY).expect("bundled Cifar topology is valid")
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Uniform He-style initialisation: weights in `±sqrt(6 / fan_in)`, biases
/// in `±0.1`.
pub fn synthetic_parameters(net: &NetworkSpec, seed: u64) -> ParameterSet {
    let mut r = rng(seed, PARAM_STREAM);
    let mut layers = Vec::new();
    for (i, spec) in net.layers().iter().enumerate() {
        let Some((wn, bn)) = net.parameter_counts(i) else { continue };
        let fan_in = wn / bn;
        let bound = (6.0 / fan_in as f64).sqrt();
        layers.push(LayerParams {
            layer: spec.name.clone(),
            weights: (0..wn).map(|_| r.gen_range(-bound..bound)).collect(),
            biases: (0..bn).map(|_| r.gen_range(-0.1..0.1)).collect(),
        });
    }
    ParameterSet::new(net, layers).expect("generated counts match the network")
}

/// Pixels uniform in `[0, 1)`, rounded to the 9 significant digits of the
/// text formats so written images read back unchanged.
pub fn synthetic_image(shape: Shape, seed: u64, index: u64) -> Tensor {
    random_image(shape, &mut rng(seed, TEST_STREAM + index))
}

fn random_image(shape: Shape, r: &mut ChaCha8Rng) -> Tensor {
    Tensor::new(shape, (0..shape.len()).map(|_| canonical(r.gen::<f64>())).collect()).expect("finite pixels")
}

/// `count` images labelled by the software stage of `teacher`.
pub fn calibration_set(
    net: &NetworkSpec,
    teacher: &ParameterSet,
    count: usize,
    seed: u64,
) -> Result<Vec<(Tensor, usize)>, EngineError> {
    let shape = net.input_shape();
    (0..count as u64)
        .map(|i| {
            let image = random_image(shape, &mut rng(seed, CALIBRATION_STREAM + i));
            let label = trace(net, teacher, &image, &StageConfig::sw())?.prediction;
            Ok((image, label))
        })
        .collect()
}
