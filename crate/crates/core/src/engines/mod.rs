//! Stage executors.
//!
//! - `sw`: double-precision reference.
//! - `design`: single-precision float or saturating fixed point.
//! - `hw`: the design arithmetic driven through element streams, one output
//!   channel per recorded blob, with optional fault injection.
//!
//! All three run the same generic kernels, so `hw` without faults matches
//! `design` bit for bit.

mod arith;
mod dump;
mod kernels;
mod stream;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::netspec::{LayerKind, LayerSpec, NetworkSpec, ParameterSet};
use crate::numerics::{FixedPointFormat, NumericsError, Shape, Tensor};
use arith::{Arith, Double, Fixed, Single};
use kernels::ConvGeometry;

pub use dump::{BlobDump, BlobRecord, Stage};
pub use stream::{run_hw_stream, DmaChannel, StreamExecutor};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("shape contract violated: {0}")]
    Shape(String),
    #[error("stream {kind} on `{layer}`: expected {expected} elements, got {got}")]
    Stream { layer: String, kind: &'static str, expected: usize, got: usize },
    #[error("layer {layer} produced a non-finite value")]
    NonFinite { layer: String },
}

/// Arithmetic used by a stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NumericMode {
    Double,
    Float32,
    Fixed { weights: FixedPointFormat, activations: FixedPointFormat },
}

impl NumericMode {
    /// Weights {8,6}, activations {24,12}.
    pub fn default_fixed() -> Self {
        NumericMode::Fixed {
            weights: FixedPointFormat::new(8, 6).expect("valid format"),
            activations: FixedPointFormat::new(24, 12).expect("valid format"),
        }
    }
}

impl fmt::Display for NumericMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NumericMode::Double => f.write_str("double"),
            NumericMode::Float32 => f.write_str("float32"),
            NumericMode::Fixed { weights, activations } => write!(f, "fixed:w{weights}:a{activations}"),
        }
    }
}

impl FromStr for NumericMode {
    type Err = String;

    /// `double`, `float32` or `fixed:w<total>.<frac>:a<total>.<frac>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        fn format(spec: &str, prefix: char) -> Result<FixedPointFormat, String> {
            let body = spec.strip_prefix(prefix).ok_or_else(|| format!("expected `{prefix}W.F`, got `{spec}`"))?;
            let (t, fr) = body.split_once('.').ok_or_else(|| format!("expected `{prefix}W.F`, got `{spec}`"))?;
            let t = t.parse().map_err(|_| format!("bad total bits in `{spec}`"))?;
            let fr = fr.parse().map_err(|_| format!("bad fraction bits in `{spec}`"))?;
            FixedPointFormat::new(t, fr).map_err(|e| e.to_string())
        }
        match s {
            "double" => Ok(NumericMode::Double),
            "float32" => Ok(NumericMode::Float32),
            _ => {
                let parts: Vec<&str> = s.split(':').collect();
                match parts.as_slice() {
                    ["fixed", w, a] => Ok(NumericMode::Fixed { weights: format(w, 'w')?, activations: format(a, 'a')? }),
                    _ => Err(format!("unknown numeric mode `{s}`")),
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FaultKind {
    /// Multiplies the layer's weights (or, for parameterless layers, its
    /// output) by a factor.
    ScaleWeights(f64),
    ZeroElement(usize),
    BitFlip { index: usize, bit: u32 },
}

/// A deliberate corruption of one blob in the hardware stage.
#[derive(Debug, Clone, PartialEq)]
pub struct FaultSpec {
    /// Blob name or the name of any layer feeding the blob.
    pub layer: String,
    pub kind: FaultKind,
}

impl FromStr for FaultSpec {
    type Err = String;

    /// `<layer>:scale:<factor>`, `<layer>:zero:<index>` or
    /// `<layer>:bitflip:<index>[,<bit>]`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let [layer, kind, arg] = parts.as_slice() else {
            return Err(format!("expected <layer>:<scale|zero|bitflip>:<arg>, got `{s}`"));
        };
        let bad = |what: &str| format!("invalid {what} in fault `{s}`");
        let kind = match *kind {
            "scale" => FaultKind::ScaleWeights(
                arg.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| bad("factor"))?,
            ),
            "zero" => FaultKind::ZeroElement(arg.parse().map_err(|_| bad("index"))?),
            "bitflip" => {
                let (index, bit) = arg.split_once(',').unwrap_or((arg, "0"));
                FaultKind::BitFlip {
                    index: index.parse().map_err(|_| bad("index"))?,
                    bit: bit.parse().map_err(|_| bad("bit"))?,
                }
            }
            other => return Err(format!("unknown fault kind `{other}`")),
        };
        Ok(FaultSpec { layer: layer.to_string(), kind })
    }
}

impl fmt::Display for FaultSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            FaultKind::ScaleWeights(k) => write!(f, "{}:scale:{k}", self.layer),
            FaultKind::ZeroElement(i) => write!(f, "{}:zero:{i}", self.layer),
            FaultKind::BitFlip { index, bit } => write!(f, "{}:bitflip:{index},{bit}", self.layer),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageConfig {
    pub stage: Stage,
    pub mode: NumericMode,
    pub fault: Option<FaultSpec>,
}

impl StageConfig {
    pub fn sw() -> Self {
        StageConfig { stage: Stage::Sw, mode: NumericMode::Double, fault: None }
    }

    pub fn design(mode: NumericMode) -> Self {
        StageConfig { stage: Stage::Design, mode, fault: None }
    }

    pub fn hw(mode: NumericMode) -> Self {
        StageConfig { stage: Stage::Hw, mode, fault: None }
    }

    pub fn with_fault(mut self, fault: FaultSpec) -> Self {
        self.fault = Some(fault);
        self
    }

    pub fn validate(&self, net: &NetworkSpec) -> Result<(), EngineError> {
        match (self.stage, self.mode) {
            (Stage::Sw, NumericMode::Double) => {}
            (Stage::Sw, mode) => return Err(EngineError::Config(format!("sw stage runs in double, not {mode}"))),
            (_, NumericMode::Double) => {
                return Err(EngineError::Config(format!("{} stage needs float32 or fixed mode", self.stage)))
            }
            _ => {}
        }
        if let Some(fault) = &self.fault {
            if self.stage != Stage::Hw {
                return Err(EngineError::Config("faults can only be injected in the hw stage".into()));
            }
            resolve_fault(net, fault, self.mode)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct ResolvedFault {
    blob: usize,
    kind: FaultKind,
}

fn resolve_fault(net: &NetworkSpec, fault: &FaultSpec, mode: NumericMode) -> Result<ResolvedFault, EngineError> {
    let blob = net
        .find_blob(&fault.layer)
        .ok_or_else(|| EngineError::Config(format!("fault target `{}` is not a layer of {}", fault.layer, net.name())))?;
    let count = net.blobs()[blob].count();
    let width = match mode {
        NumericMode::Double => 64,
        NumericMode::Float32 => 32,
        NumericMode::Fixed { activations, .. } => activations.total_bits(),
    };
    match fault.kind {
        FaultKind::ScaleWeights(k) if !k.is_finite() => {
            return Err(EngineError::Config(format!("fault factor {k} is not finite")))
        }
        FaultKind::ZeroElement(index) | FaultKind::BitFlip { index, .. } if index >= count => {
            return Err(EngineError::Config(format!(
                "fault index {index} out of range for `{}` ({count} elements)",
                fault.layer
            )))
        }
        FaultKind::BitFlip { bit, .. } if bit >= width => {
            return Err(EngineError::Config(format!("bit {bit} outside the {width}-bit word")))
        }
        _ => {}
    }
    Ok(ResolvedFault { blob, kind: fault.kind })
}

/// Full-precision per-blob outputs of one run, before dump rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub blobs: Vec<Tensor>,
    pub prediction: usize,
}

/// Index of the largest value; ties go to the lowest index.
pub fn predict(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

enum Prepared<W> {
    Conv { geo: ConvGeometry, weights: Vec<W>, biases: Vec<W> },
    Fc { units: usize, weights: Vec<W>, biases: Vec<W> },
    Pool { kind: crate::netspec::PoolKind, kernel: usize, stride: usize },
    Relu,
}

/// Executes `net` on already-loaded input activations, calling `emit` once
/// per blob in order. Returns the final blob.
fn forward<A: Arith>(
    a: &A,
    net: &NetworkSpec,
    params: &ParameterSet,
    input: Vec<A::Act>,
    fault: Option<ResolvedFault>,
    mut emit: impl FnMut(usize, &[A::Act]) -> Result<(), EngineError>,
) -> Result<Vec<A::Act>, EngineError> {
    let scale_weights_of = |layer: usize| -> Option<f64> {
        let f = fault?;
        match f.kind {
            FaultKind::ScaleWeights(k) if net.blobs()[f.blob].head() == layer => Some(k),
            _ => None,
        }
    };
    let prepared: Vec<Prepared<A::Wt>> = net
        .layers()
        .iter()
        .enumerate()
        .map(|(i, spec)| prepare(a, params, spec, scale_weights_of(i)))
        .collect::<Result<_, _>>()?;

    if input.len() != net.input_shape().len() {
        return Err(EngineError::Shape(format!(
            "input has {} elements, network expects {}",
            input.len(),
            net.input_shape()
        )));
    }
    let mut current = input;
    for (b, blob) in net.blobs().iter().enumerate() {
        for li in blob.layers.clone() {
            let in_shape = net.layer_input_shape(li);
            let out_shape = net.layer_shapes()[li];
            current = match &prepared[li] {
                Prepared::Conv { geo, weights, biases } => {
                    kernels::conv(a, &current, in_shape, out_shape, *geo, weights, biases)?
                }
                Prepared::Fc { units, weights, biases } => kernels::fc(a, &current, *units, weights, biases)?,
                Prepared::Pool { kind, kernel, stride } => {
                    kernels::pool(a, &current, in_shape, out_shape, *kind, *kernel, *stride)?
                }
                Prepared::Relu => {
                    kernels::relu(a, &mut current);
                    current
                }
            };
            if current.iter().any(|&v| !a.real(v).is_finite()) {
                return Err(EngineError::NonFinite { layer: net.layers()[li].name.clone() });
            }
        }
        if let Some(f) = fault.filter(|f| f.blob == b) {
            apply_output_fault(a, net, f, &mut current)?;
        }
        emit(b, &current)?;
    }
    Ok(current)
}

fn prepare<A: Arith>(
    a: &A,
    params: &ParameterSet,
    spec: &LayerSpec,
    scale: Option<f64>,
) -> Result<Prepared<A::Wt>, EngineError> {
    type Loaded<W> = (Vec<W>, Vec<W>);
    let load = || -> Result<Loaded<A::Wt>, EngineError> {
        let p = params
            .get(&spec.name)
            .ok_or_else(|| EngineError::Config(format!("no parameters for layer {}", spec.name)))?;
        let k = scale.unwrap_or(1.0);
        Ok((
            p.weights.iter().map(|&w| a.weight(w * k)).collect(),
            p.biases.iter().map(|&b| a.weight(b)).collect(),
        ))
    };
    Ok(match spec.kind {
        LayerKind::Conv { kernel, stride, pad, .. } => {
            let (weights, biases) = load()?;
            Prepared::Conv { geo: ConvGeometry { kernel, stride, pad }, weights, biases }
        }
        LayerKind::Fc { units } => {
            let (weights, biases) = load()?;
            Prepared::Fc { units, weights, biases }
        }
        LayerKind::Pool { kind, kernel, stride } => Prepared::Pool { kind, kernel, stride },
        LayerKind::Relu => Prepared::Relu,
    })
}

fn apply_output_fault<A: Arith>(
    a: &A,
    net: &NetworkSpec,
    fault: ResolvedFault,
    values: &mut [A::Act],
) -> Result<(), EngineError> {
    let blob = &net.blobs()[fault.blob];
    match fault.kind {
        FaultKind::ScaleWeights(k) => {
            if !net.layers()[blob.head()].kind.has_parameters() {
                for v in values.iter_mut() {
                    *v = a.act(a.real(*v) * k);
                }
            }
        }
        FaultKind::ZeroElement(i) => values[i] = a.zero(),
        FaultKind::BitFlip { index, bit } => values[index] = a.flip_bit(values[index], bit),
    }
    if values.iter().any(|&v| !a.real(v).is_finite()) {
        return Err(EngineError::NonFinite { layer: blob.name.clone() });
    }
    Ok(())
}

fn check_image(net: &NetworkSpec, image: &Tensor) -> Result<(), EngineError> {
    if image.shape() != net.input_shape() {
        return Err(EngineError::Shape(format!(
            "image shape {} does not match network input {}",
            image.shape(),
            net.input_shape()
        )));
    }
    Ok(())
}

/// Runs `net` and returns every blob at full precision.
pub fn trace(
    net: &NetworkSpec,
    params: &ParameterSet,
    image: &Tensor,
    cfg: &StageConfig,
) -> Result<Trace, EngineError> {
    cfg.validate(net)?;
    check_image(net, image)?;
    let fault = cfg.fault.as_ref().map(|f| resolve_fault(net, f, cfg.mode)).transpose()?;
    fn go<A: Arith>(
        a: &A,
        net: &NetworkSpec,
        params: &ParameterSet,
        image: &Tensor,
        fault: Option<ResolvedFault>,
    ) -> Result<Trace, EngineError> {
        let input = image.data().iter().map(|&x| a.act(x)).collect();
        let mut blobs = Vec::with_capacity(net.blobs().len());
        let last = forward(a, net, params, input, fault, |b, values| {
            let data = values.iter().map(|&v| a.real(v)).collect();
            blobs.push(Tensor::new(net.blobs()[b].shape, data)?);
            Ok(())
        })?;
        let reals: Vec<f64> = last.iter().map(|&v| a.real(v)).collect();
        Ok(Trace { blobs, prediction: predict(&reals) })
    }
    match cfg.mode {
        NumericMode::Double => go(&Double, net, params, image, fault),
        NumericMode::Float32 => go(&Single, net, params, image, fault),
        NumericMode::Fixed { weights, activations } => go(&Fixed { weights, activations }, net, params, image, fault),
    }
}

/// Runs one stage and records its dump. `hw` configurations are routed
/// through the stream executor.
pub fn run_stage(
    net: &NetworkSpec,
    params: &ParameterSet,
    image: &Tensor,
    cfg: &StageConfig,
) -> Result<BlobDump, EngineError> {
    if cfg.stage == Stage::Hw {
        return run_hw_stream(net, params, image, cfg);
    }
    let t = trace(net, params, image, cfg)?;
    Ok(BlobDump {
        stage: cfg.stage,
        image: "0".to_string(),
        records: net
            .blobs()
            .iter()
            .zip(t.blobs)
            .map(|(spec, tensor)| BlobRecord::new(spec.name.clone(), tensor.into_data()))
            .collect(),
        prediction: t.prediction,
    })
}

fn single_layer(
    input: &Tensor,
    layer: &LayerSpec,
    weights: &[f64],
    biases: &[f64],
    mode: NumericMode,
) -> Result<Tensor, EngineError> {
    let out_shape = layer
        .kind
        .output_shape(input.shape())
        .ok_or_else(|| EngineError::Shape(format!("{} does not fit input {}", layer.name, input.shape())))?;
    let in_shape = input.shape();
    fn go<A: Arith>(
        a: &A,
        input: &Tensor,
        in_shape: Shape,
        out_shape: Shape,
        layer: &LayerSpec,
        weights: &[f64],
        biases: &[f64],
    ) -> Result<Tensor, EngineError> {
        let mut x: Vec<A::Act> = input.data().iter().map(|&v| a.act(v)).collect();
        let w: Vec<A::Wt> = weights.iter().map(|&v| a.weight(v)).collect();
        let b: Vec<A::Wt> = biases.iter().map(|&v| a.weight(v)).collect();
        let out = match layer.kind {
            LayerKind::Conv { kernel, stride, pad, .. } => {
                kernels::conv(a, &x, in_shape, out_shape, ConvGeometry { kernel, stride, pad }, &w, &b)?
            }
            LayerKind::Fc { units } => kernels::fc(a, &x, units, &w, &b)?,
            LayerKind::Pool { kind, kernel, stride } => kernels::pool(a, &x, in_shape, out_shape, kind, kernel, stride)?,
            LayerKind::Relu => {
                kernels::relu(a, &mut x);
                x
            }
        };
        let data: Vec<f64> = out.iter().map(|&v| a.real(v)).collect();
        Tensor::new(out_shape, data).map_err(|_| EngineError::NonFinite { layer: layer.name.clone() })
    }
    match mode {
        NumericMode::Double => go(&Double, input, in_shape, out_shape, layer, weights, biases),
        NumericMode::Float32 => go(&Single, input, in_shape, out_shape, layer, weights, biases),
        NumericMode::Fixed { weights: wf, activations } => {
            go(&Fixed { weights: wf, activations }, input, in_shape, out_shape, layer, weights, biases)
        }
    }
}

/// Convolution with zero padding. In fixed mode inputs and weights are
/// quantized first and each output is rescaled once from the wide
/// accumulator.
pub fn conv2d_forward(
    input: &Tensor,
    layer: &LayerSpec,
    weights: &[f64],
    biases: &[f64],
    mode: NumericMode,
) -> Result<Tensor, EngineError> {
    if !matches!(layer.kind, LayerKind::Conv { .. }) {
        return Err(EngineError::Shape(format!("{} is not a conv layer", layer.name)));
    }
    single_layer(input, layer, weights, biases, mode)
}

pub fn pool_forward(input: &Tensor, layer: &LayerSpec, mode: NumericMode) -> Result<Tensor, EngineError> {
    if !matches!(layer.kind, LayerKind::Pool { .. }) {
        return Err(EngineError::Shape(format!("{} is not a pool layer", layer.name)));
    }
    single_layer(input, layer, &[], &[], mode)
}

pub fn relu_forward(input: &Tensor, mode: NumericMode) -> Tensor {
    let layer = LayerSpec { name: "relu".into(), kind: LayerKind::Relu };
    single_layer(input, &layer, &[], &[], mode).expect("relu keeps a finite tensor finite")
}

/// Fully connected layer over the channel-major flattening of `input`.
pub fn fc_forward(
    input: &Tensor,
    layer: &LayerSpec,
    weights: &[f64],
    biases: &[f64],
    mode: NumericMode,
) -> Result<Tensor, EngineError> {
    if !matches!(layer.kind, LayerKind::Fc { .. }) {
        return Err(EngineError::Shape(format!("{} is not an fc layer", layer.name)));
    }
    single_layer(input, layer, weights, biases, mode)
}
