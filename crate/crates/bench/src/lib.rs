//! Shared inputs for the criterion benchmarks.

use coverify_core::fixture::{self, DEFAULT_SEED, DEFAULT_TEST_IMAGE};
use coverify_core::{NetworkSpec, ParameterSet, Tensor};

pub struct Case {
    pub net: NetworkSpec,
    pub params: ParameterSet,
    pub image: Tensor,
}

impl Case {
    fn from(net: NetworkSpec) -> Self {
        let params = fixture::synthetic_parameters(&net, DEFAULT_SEED);
        let image = fixture::synthetic_image(net.input_shape(), DEFAULT_SEED, DEFAULT_TEST_IMAGE);
        Case { net, params, image }
    }

    pub fn lenet() -> Self {
        Case::from(fixture::lenet())
    }

    pub fn cifar() -> Self {
        Case::from(fixture::cifar())
    }
}
