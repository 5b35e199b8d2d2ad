//! Stream-driven hardware stage. The image enters as one flat element
//! stream; every recorded blob leaves through its own output channel, the
//! way each layer's result gets its own DMA on the board.

use super::arith::{Arith, Double, Fixed, Single};
use super::{forward, resolve_fault, BlobDump, BlobRecord, EngineError, NumericMode, Stage, StageConfig};
use crate::netspec::{NetworkSpec, ParameterSet};
use crate::numerics::Tensor;

/// A bounded output channel that must receive exactly `expected` elements.
#[derive(Debug, Clone)]
pub struct DmaChannel {
    name: String,
    expected: usize,
    buffer: Vec<f64>,
}

impl DmaChannel {
    pub fn new(name: impl Into<String>, expected: usize) -> Self {
        DmaChannel { name: name.into(), expected, buffer: Vec::with_capacity(expected) }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn push(&mut self, value: f64) -> Result<(), EngineError> {
        if self.buffer.len() == self.expected {
            return Err(EngineError::Stream {
                layer: self.name.clone(),
                kind: "overflow",
                expected: self.expected,
                got: self.expected + 1,
            });
        }
        self.buffer.push(value);
        Ok(())
    }

    /// Closes the channel, failing if it is short.
    pub fn close(self) -> Result<Vec<f64>, EngineError> {
        if self.buffer.len() != self.expected {
            return Err(EngineError::Stream {
                layer: self.name,
                kind: "underflow",
                expected: self.expected,
                got: self.buffer.len(),
            });
        }
        Ok(self.buffer)
    }
}

pub struct StreamExecutor<'a> {
    net: &'a NetworkSpec,
    params: &'a ParameterSet,
    cfg: StageConfig,
}

impl<'a> StreamExecutor<'a> {
    pub fn new(net: &'a NetworkSpec, params: &'a ParameterSet, cfg: &StageConfig) -> Result<Self, EngineError> {
        if cfg.stage != Stage::Hw {
            return Err(EngineError::Config(format!("stream executor needs the hw stage, got {}", cfg.stage)));
        }
        cfg.validate(net)?;
        Ok(StreamExecutor { net, params, cfg: cfg.clone() })
    }

    /// Consumes exactly C*H*W elements from `input` and emits one record per
    /// blob in declared order.
    pub fn execute(&self, input: impl IntoIterator<Item = f64>, image_id: &str) -> Result<BlobDump, EngineError> {
        match self.cfg.mode {
            NumericMode::Double => self.run(&Double, input, image_id),
            NumericMode::Float32 => self.run(&Single, input, image_id),
            NumericMode::Fixed { weights, activations } => self.run(&Fixed { weights, activations }, input, image_id),
        }
    }

    fn run<A: Arith>(
        &self,
        a: &A,
        input: impl IntoIterator<Item = f64>,
        image_id: &str,
    ) -> Result<BlobDump, EngineError> {
        let net = self.net;
        let expected = net.input_shape().len();
        let mut source = input.into_iter();
        let mut loaded = Vec::with_capacity(expected);
        for x in source.by_ref().take(expected) {
            if !x.is_finite() {
                return Err(EngineError::NonFinite { layer: "input".into() });
            }
            loaded.push(a.act(x));
        }
        if loaded.len() < expected {
            return Err(EngineError::Stream { layer: "input".into(), kind: "underflow", expected, got: loaded.len() });
        }
        let extra = source.count();
        if extra > 0 {
            return Err(EngineError::Stream { layer: "input".into(), kind: "overflow", expected, got: expected + extra });
        }

        let mut channels: Vec<DmaChannel> =
            net.blobs().iter().map(|b| DmaChannel::new(b.name.clone(), b.count())).collect();
        let fault = self.cfg.fault.as_ref().map(|f| resolve_fault(net, f, self.cfg.mode)).transpose()?;
        let last = forward(a, net, self.params, loaded, fault, |b, values| {
            values.iter().try_for_each(|&v| channels[b].push(a.real(v)))
        })?;
        let reals: Vec<f64> = last.iter().map(|&v| a.real(v)).collect();

        let records = channels
            .into_iter()
            .map(|ch| {
                let name = ch.name().to_string();
                Ok(BlobRecord::new(name, ch.close()?))
            })
            .collect::<Result<_, EngineError>>()?;
        Ok(BlobDump {
            stage: Stage::Hw,
            image: image_id.to_string(),
            records,
            prediction: super::predict(&reals),
        })
    }
}

/// Serializes `image` channel-major and runs it through the stream executor.
pub fn run_hw_stream(
    net: &NetworkSpec,
    params: &ParameterSet,
    image: &Tensor,
    cfg: &StageConfig,
) -> Result<BlobDump, EngineError> {
    super::check_image(net, image)?;
    StreamExecutor::new(net, params, cfg)?.execute(image.data().iter().copied(), "0")
}
