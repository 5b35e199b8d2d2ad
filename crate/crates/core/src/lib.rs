//! Layer-by-layer co-verification of a small CNN across three execution
//! stages: a double-precision software reference, a fixed-point or
//! single-precision design emulation, and a stream-driven hardware
//! emulation.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: tensors and saturating fixed-point arithmetic.
//! - [`netspec`]: topology and parameter files, shape inference.
//! - [`engines`]: the three stage executors and fault injection.
//! - [`blobio`]: the per-stage dump files.
//! - [`spvf`]: per-element statistical envelopes built from calibration
//!   images and the envelope check.
//! - [`verifier`]: similarity scores, three-way comparison and advice.
//! - [`fixture`]: bundled topologies and seeded synthetic data.

pub mod blobio;
pub mod engines;
pub mod fixture;
pub mod netspec;
pub mod numerics;
pub mod spvf;
pub mod textfmt;
pub mod verifier;

pub use engines::{
    predict, run_hw_stream, run_stage, trace, BlobDump, BlobRecord, EngineError, FaultKind,
    FaultSpec, NumericMode, Stage, StageConfig, Trace,
};
pub use netspec::{
    infer_shapes, load_parameters, parse_topology, quantize_parameters, BlobSpec, LayerKind,
    LayerSpec, NetSpecError, NetworkSpec, ParameterSet, PoolKind,
};
pub use numerics::{
    dequantize, fixed_mac, quantize, FixedPointFormat, NumericsError, QuantizedValue, Shape,
    Tensor,
};
pub use spvf::{check_blobs, generate_spvf, EnvelopeReport, SpvfError, SpvfFile};
pub use verifier::{
    recommend_action, similarity_score, three_way_compare, Advice, SimilarityReport,
    VerifierConfig, VerifyError,
};
