//! Network topology, shape inference and parameter sets.
//!
//! A topology file is line oriented:
//!
//! ```text
//! network lenet
//! input 1 28 28
//! layer conv conv1 filters=6 kernel=5 stride=1 pad=0
//! layer pool pool1 kind=max kernel=2 stride=2
//! layer relu relu1
//! layer fc fc1 units=84
//! ```
//!
//! A `relu` that follows another layer runs in place: its output replaces
//! the preceding layer's blob, which is then recorded as `<prev>_<relu>`.

mod params;
mod topology;

use std::fmt;
use std::ops::Range;

use thiserror::Error;

use crate::numerics::Shape;

pub use params::{load_parameters, quantize_parameters, write_parameters, LayerParams, ParameterSet};
pub use topology::parse_topology;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetSpecError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("layer {layer}: {message}")]
    Semantic { layer: String, message: String },
    #[error("layer {layer}: {what} count mismatch: expected {expected}, got {actual}")]
    CountMismatch { layer: String, what: &'static str, expected: usize, actual: usize },
    #[error("missing {what}: {layer}")]
    Missing { layer: String, what: &'static str },
}

impl NetSpecError {
    pub(crate) fn syntax(line: usize, message: impl Into<String>) -> Self {
        NetSpecError::Syntax { line, message: message.into() }
    }

    pub(crate) fn semantic(layer: &str, message: impl Into<String>) -> Self {
        NetSpecError::Semantic { layer: layer.to_string(), message: message.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PoolKind {
    Max,
    Avg,
}

impl fmt::Display for PoolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PoolKind::Max => "max",
            PoolKind::Avg => "avg",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Conv { filters: usize, kernel: usize, stride: usize, pad: usize },
    Pool { kind: PoolKind, kernel: usize, stride: usize },
    Relu,
    Fc { units: usize },
}

impl LayerKind {
    pub fn keyword(&self) -> &'static str {
        match self {
            LayerKind::Conv { .. } => "conv",
            LayerKind::Pool { .. } => "pool",
            LayerKind::Relu => "relu",
            LayerKind::Fc { .. } => "fc",
        }
    }

    pub fn has_parameters(&self) -> bool {
        matches!(self, LayerKind::Conv { .. } | LayerKind::Fc { .. })
    }

    /// Output shape for `input`, or `None` when a spatial dimension would
    /// not be positive.
    pub fn output_shape(&self, input: Shape) -> Option<Shape> {
        fn window(len: usize, pad: usize, kernel: usize, stride: usize) -> Option<usize> {
            let padded = len + 2 * pad;
            (padded >= kernel).then(|| (padded - kernel) / stride + 1)
        }
        match *self {
            LayerKind::Conv { filters, kernel, stride, pad } => Some(Shape::new(
                filters,
                window(input.height, pad, kernel, stride)?,
                window(input.width, pad, kernel, stride)?,
            )),
            LayerKind::Pool { kernel, stride, .. } => Some(Shape::new(
                input.channels,
                window(input.height, 0, kernel, stride)?,
                window(input.width, 0, kernel, stride)?,
            )),
            LayerKind::Relu => Some(input),
            LayerKind::Fc { units } => Some(Shape::new(units, 1, 1)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "layer {} {}", self.kind.keyword(), self.name)?;
        match self.kind {
            LayerKind::Conv { filters, kernel, stride, pad } => {
                write!(f, " filters={filters} kernel={kernel} stride={stride} pad={pad}")
            }
            LayerKind::Pool { kind, kernel, stride } => {
                write!(f, " kind={kind} kernel={kernel} stride={stride}")
            }
            LayerKind::Relu => Ok(()),
            LayerKind::Fc { units } => write!(f, " units={units}"),
        }
    }
}

/// One recorded blob: a layer plus any in-place relu layers after it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlobSpec {
    pub name: String,
    pub shape: Shape,
    /// Indices into [`NetworkSpec::layers`] producing this blob.
    pub layers: Range<usize>,
}

impl BlobSpec {
    pub fn count(&self) -> usize {
        self.shape.len()
    }

    /// The layer that opens the blob (the one a fused relu attaches to).
    pub fn head(&self) -> usize {
        self.layers.start
    }
}

/// A validated sequential network. Construct via [`parse_topology`] or
/// [`NetworkSpec::new`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    name: String,
    input_shape: Shape,
    layers: Vec<LayerSpec>,
    shapes: Vec<Shape>,
    blobs: Vec<BlobSpec>,
}

impl NetworkSpec {
    pub fn new(
        name: impl Into<String>,
        input_shape: Shape,
        layers: Vec<LayerSpec>,
    ) -> Result<Self, NetSpecError> {
        let name = name.into();
        if input_shape.is_empty() {
            return Err(NetSpecError::semantic(&name, "input dimensions must be positive"));
        }
        if layers.is_empty() {
            return Err(NetSpecError::semantic(&name, "network has no layers"));
        }
        let mut seen = std::collections::HashSet::new();
        for layer in &layers {
            validate_hyperparameters(layer)?;
            if !seen.insert(layer.name.as_str()) {
                return Err(NetSpecError::semantic(&layer.name, "duplicate layer name"));
            }
        }
        for pair in layers.windows(2) {
            if matches!(pair[0].kind, LayerKind::Fc { .. })
                && !matches!(pair[1].kind, LayerKind::Fc { .. } | LayerKind::Relu)
            {
                return Err(NetSpecError::semantic(
                    &pair[1].name,
                    format!("{} layer cannot follow fc layer {}", pair[1].kind.keyword(), pair[0].name),
                ));
            }
        }

        let mut shapes = Vec::with_capacity(layers.len());
        let mut current = input_shape;
        for layer in &layers {
            current = layer
                .kind
                .output_shape(current)
                .ok_or_else(|| NetSpecError::semantic(&layer.name, "non-positive output dimension"))?;
            shapes.push(current);
        }

        let mut blobs: Vec<BlobSpec> = Vec::new();
        for (i, layer) in layers.iter().enumerate() {
            match (layer.kind, blobs.last_mut()) {
                (LayerKind::Relu, Some(prev)) => {
                    prev.name = format!("{}_{}", prev.name, layer.name);
                    prev.layers.end = i + 1;
                }
                _ => blobs.push(BlobSpec { name: layer.name.clone(), shape: shapes[i], layers: i..i + 1 }),
            }
        }
        let mut blob_names = std::collections::HashSet::new();
        for blob in &blobs {
            if !blob_names.insert(blob.name.as_str()) {
                return Err(NetSpecError::semantic(&blob.name, "fused blob name collides with another blob"));
            }
        }

        Ok(NetworkSpec { name, input_shape, layers, shapes, blobs })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_shape(&self) -> Shape {
        self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    /// Output shape of every layer, parallel to [`Self::layers`].
    pub fn layer_shapes(&self) -> &[Shape] {
        &self.shapes
    }

    /// Input shape of layer `index`.
    pub fn layer_input_shape(&self, index: usize) -> Shape {
        if index == 0 {
            self.input_shape
        } else {
            self.shapes[index - 1]
        }
    }

    pub fn blobs(&self) -> &[BlobSpec] {
        &self.blobs
    }

    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    /// Blob by blob name or by the name of any layer feeding it.
    pub fn find_blob(&self, name: &str) -> Option<usize> {
        self.blobs.iter().position(|b| b.name == name).or_else(|| {
            let layer = self.layer_index(name)?;
            self.blobs.iter().position(|b| b.layers.contains(&layer))
        })
    }

    /// `(weights, biases)` element counts for a parameterized layer.
    pub fn parameter_counts(&self, index: usize) -> Option<(usize, usize)> {
        let input = self.layer_input_shape(index);
        match self.layers[index].kind {
            LayerKind::Conv { filters, kernel, .. } => {
                Some((filters * input.channels * kernel * kernel, filters))
            }
            LayerKind::Fc { units } => Some((units * input.len(), units)),
            _ => None,
        }
    }
}

impl fmt::Display for NetworkSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "network {}", self.name)?;
        let s = self.input_shape;
        writeln!(f, "input {} {} {}", s.channels, s.height, s.width)?;
        for layer in &self.layers {
            writeln!(f, "{layer}")?;
        }
        Ok(())
    }
}

fn validate_hyperparameters(layer: &LayerSpec) -> Result<(), NetSpecError> {
    let positive = |v: usize, what: &str| {
        if v == 0 {
            Err(NetSpecError::semantic(&layer.name, format!("{what} must be at least 1")))
        } else {
            Ok(())
        }
    };
    match layer.kind {
        LayerKind::Conv { filters, kernel, stride, .. } => {
            positive(filters, "filters")?;
            positive(kernel, "kernel")?;
            positive(stride, "stride")
        }
        LayerKind::Pool { kernel, stride, .. } => {
            positive(kernel, "kernel")?;
            positive(stride, "stride")
        }
        LayerKind::Relu => Ok(()),
        LayerKind::Fc { units } => positive(units, "units"),
    }
}

/// One row per recorded blob, in execution order.
pub fn infer_shapes(net: &NetworkSpec) -> Vec<(String, usize, Shape)> {
    net.blobs().iter().map(|b| (b.name.clone(), b.count(), b.shape)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture;

    fn counts(net: &NetworkSpec) -> Vec<usize> {
        infer_shapes(net).into_iter().map(|(_, n, _)| n).collect()
    }

    #[test]
    fn lenet_counts() {
        let net = fixture::lenet();
        assert_eq!(net.layers().len(), 8);
        assert_eq!(counts(&net), [3456, 864, 1024, 256, 120, 84, 10]);
    }

    #[test]
    fn cifar_counts_and_fused_names() {
        let net = fixture::cifar();
        assert_eq!(counts(&net), [5120, 1280, 2560, 640, 960, 240, 50, 10]);
        let names: Vec<_> = net.blobs().iter().map(|b| b.name.as_str()).collect();
        assert_eq!(
            names,
            ["conv1", "pool1_relu1", "conv2_relu2", "pool2", "conv3_relu3", "pool3", "fc1", "fc2"]
        );
    }

    #[test]
    fn small_conv_shape() {
        let net = parse_topology("network t\ninput 1 5 5\nlayer conv c filters=1 kernel=3 stride=1 pad=0\n")
            .unwrap();
        assert_eq!(infer_shapes(&net), vec![("c".to_string(), 9, Shape::new(1, 3, 3))]);
    }

    #[test]
    fn find_blob_by_layer_or_blob_name() {
        let net = fixture::cifar();
        assert_eq!(net.find_blob("conv2_relu2"), Some(2));
        assert_eq!(net.find_blob("relu2"), Some(2));
        assert_eq!(net.find_blob("conv2"), Some(2));
        assert_eq!(net.find_blob("nope"), None);
    }

    #[test]
    fn parameter_counts_follow_fan_in() {
        let net = fixture::lenet();
        assert_eq!(net.parameter_counts(0), Some((150, 6)));
        let fc1 = net.layer_index("fc1").unwrap();
        assert_eq!(net.parameter_counts(fc1), Some((84 * 120, 84)));
        assert_eq!(net.parameter_counts(1), None);
    }
}
