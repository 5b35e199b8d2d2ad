use std::fmt::Write as _;

use super::{NetSpecError, NetworkSpec};
use crate::numerics::FixedPointFormat;
use crate::textfmt::{parse_real, Tokens};

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub layer: String,
    /// conv: `[filters][in_channels][k][k]`; fc: `[units][fan_in]`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Weights and biases for every parameterized layer, in network order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    network: String,
    layers: Vec<LayerParams>,
}

impl ParameterSet {
    /// Builds a set after checking it against `net`.
    pub fn new(net: &NetworkSpec, mut layers: Vec<LayerParams>) -> Result<Self, NetSpecError> {
        let mut ordered = Vec::with_capacity(layers.len());
        for (i, spec) in net.layers().iter().enumerate() {
            let Some((wn, bn)) = net.parameter_counts(i) else { continue };
            let pos = layers
                .iter()
                .position(|p| p.layer == spec.name)
                .ok_or_else(|| NetSpecError::Missing { layer: spec.name.clone(), what: "layer block" })?;
            let p = layers.swap_remove(pos);
            check_count(&spec.name, "weights", wn, p.weights.len())?;
            check_count(&spec.name, "biases", bn, p.biases.len())?;
            if p.weights.iter().chain(&p.biases).any(|v| !v.is_finite()) {
                return Err(NetSpecError::semantic(&spec.name, "non-finite parameter"));
            }
            ordered.push(p);
        }
        if let Some(extra) = layers.first() {
            return Err(NetSpecError::semantic(&extra.layer, "parameters for unknown or parameterless layer"));
        }
        Ok(ParameterSet { network: net.name().to_string(), layers: ordered })
    }

    pub fn network(&self) -> &str {
        &self.network
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn get(&self, layer: &str) -> Option<&LayerParams> {
        self.layers.iter().find(|p| p.layer == layer)
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> ParameterSet {
        ParameterSet {
            network: self.network.clone(),
            layers: self
                .layers
                .iter()
                .map(|p| LayerParams {
                    layer: p.layer.clone(),
                    weights: p.weights.iter().map(|&v| f(v)).collect(),
                    biases: p.biases.iter().map(|&v| f(v)).collect(),
                })
                .collect(),
        }
    }
}

fn check_count(layer: &str, what: &'static str, expected: usize, actual: usize) -> Result<(), NetSpecError> {
    if expected == actual {
        Ok(())
    } else {
        Err(NetSpecError::CountMismatch { layer: layer.to_string(), what, expected, actual })
    }
}

/// Reads a parameter file for `net`.
///
/// ```text
/// params lenet
/// layer conv1
/// weights 150
/// 0.1 -0.2 ...
/// biases 6
/// ...
/// ```
pub fn load_parameters(source: &str, net: &NetworkSpec) -> Result<ParameterSet, NetSpecError> {
    let mut tokens = Tokens::new(source);
    let syntax = |line: usize, msg: String| NetSpecError::syntax(line, msg);

    match (tokens.next(), tokens.next()) {
        (Some((_, "params")), Some((line, name))) => {
            if name != net.name() {
                return Err(syntax(line, format!("parameters are for network `{name}`, expected `{}`", net.name())));
            }
        }
        (Some((line, _)), _) => return Err(syntax(line, "expected `params <network-name>`".into())),
        (None, _) => return Err(syntax(0, "empty parameter file".into())),
    }

    let mut blocks: Vec<LayerParams> = Vec::new();
    while let Some((line, tok)) = tokens.next() {
        if tok != "layer" {
            return Err(syntax(line, format!("expected `layer`, got `{tok}`")));
        }
        let (_, name) = tokens.next().ok_or_else(|| syntax(line, "expected layer name".into()))?;
        let Some(index) = net.layer_index(name) else {
            return Err(NetSpecError::semantic(name, "not a layer of this network"));
        };
        let Some((wn, bn)) = net.parameter_counts(index) else {
            return Err(NetSpecError::semantic(name, "layer takes no parameters"));
        };
        if blocks.iter().any(|b| b.layer == name) {
            return Err(NetSpecError::semantic(name, "duplicate parameter block"));
        }
        let weights = read_array(&mut tokens, name, "weights", wn)?
            .ok_or_else(|| NetSpecError::Missing { layer: name.to_string(), what: "weights" })?;
        let biases = read_array(&mut tokens, name, "biases", bn)?
            .ok_or_else(|| NetSpecError::Missing { layer: name.to_string(), what: "biases" })?;
        blocks.push(LayerParams { layer: name.to_string(), weights, biases });
    }
    ParameterSet::new(net, blocks)
}

/// Reads `<keyword> <count>` plus values. `Ok(None)` when the next token is
/// not `keyword`.
fn read_array(
    tokens: &mut Tokens<'_>,
    layer: &str,
    keyword: &'static str,
    expected: usize,
) -> Result<Option<Vec<f64>>, NetSpecError> {
    match tokens.peek() {
        Some((_, t)) if t == keyword => {
            tokens.next();
        }
        _ => return Ok(None),
    }
    let (line, n) = tokens
        .next()
        .ok_or_else(|| NetSpecError::syntax(tokens.line(), format!("expected {keyword} count")))?;
    let declared: usize =
        n.parse().map_err(|_| NetSpecError::syntax(line, format!("invalid {keyword} count `{n}`")))?;
    check_count(layer, keyword, expected, declared)?;
    let mut values = Vec::with_capacity(declared);
    for _ in 0..declared {
        let (line, tok) = tokens.next().ok_or_else(|| {
            NetSpecError::syntax(tokens.line(), format!("{layer}: {keyword} ended after {} values", values.len()))
        })?;
        values.push(parse_real(tok).ok_or_else(|| NetSpecError::syntax(line, format!("invalid number `{tok}`")))?);
    }
    Ok(Some(values))
}

/// Renders a parameter file; values use the shortest exact representation.
pub fn write_parameters(params: &ParameterSet) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "params {}", params.network);
    let array = |out: &mut String, keyword: &str, values: &[f64]| {
        let _ = writeln!(out, "{keyword} {}", values.len());
        for chunk in values.chunks(8) {
            let line: Vec<String> = chunk.iter().map(|v| format!("{v:e}")).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
    };
    for p in &params.layers {
        let _ = writeln!(out, "layer {}", p.layer);
        array(&mut out, "weights", &p.weights);
        array(&mut out, "biases", &p.biases);
    }
    out
}

/// Replaces every value by its truncated fixed-point counterpart.
pub fn quantize_parameters(params: &ParameterSet, fmt: FixedPointFormat) -> ParameterSet {
    params.map_values(|v| fmt.raw_to_real(fmt.quantize_raw(v)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netspec::parse_topology;

    fn tiny() -> NetworkSpec {
        parse_topology(
            "network tiny\ninput 1 5 5\nlayer conv conv1 filters=6 kernel=5\nlayer fc fc2 units=2\n",
        )
        .unwrap()
    }

    fn file(conv_weights: usize, with_fc_biases: bool) -> String {
        let mut s = String::from("params tiny\nlayer conv1\n");
        s += &format!("weights {conv_weights}\n");
        s += &vec!["0.01"; conv_weights].join(" ");
        s += "\nbiases 6\n0 0 0 0 0 1e-1\nlayer fc2\nweights 12\n";
        s += &["-2.5E-1"; 12].join("\n");
        if with_fc_biases {
            s += "\nbiases 2\n1 2\n";
        }
        s
    }

    #[test]
    fn accepts_exact_counts() {
        let net = tiny();
        let p = load_parameters(&file(150, true), &net).unwrap();
        assert_eq!(p.get("conv1").unwrap().weights.len(), 150);
        assert_eq!(p.get("conv1").unwrap().biases[5], 0.1);
        assert_eq!(p.get("fc2").unwrap().weights[3], -0.25);
    }

    #[test]
    fn missing_biases() {
        let e = load_parameters(&file(150, false), &tiny()).unwrap_err();
        assert_eq!(e.to_string(), "missing biases: fc2");
    }

    #[test]
    fn off_by_one_weights() {
        let e = load_parameters(&file(151, true), &tiny()).unwrap_err();
        assert_eq!(
            e,
            NetSpecError::CountMismatch { layer: "conv1".into(), what: "weights", expected: 150, actual: 151 }
        );
    }

    #[test]
    fn missing_layer_block() {
        let src = "params tiny\nlayer fc2\nweights 12\n0 0 0 0 0 0 0 0 0 0 0 0\nbiases 2\n0 0\n";
        let e = load_parameters(src, &tiny()).unwrap_err();
        assert_eq!(e.to_string(), "missing layer block: conv1");
    }

    #[test]
    fn truncated_values_report_a_line() {
        let src = "params tiny\nlayer fc2\nweights 12\n0 0 0\n";
        assert!(matches!(load_parameters(src, &tiny()), Err(NetSpecError::Syntax { .. })));
        let src = "params tiny\nlayer fc2\nweights 12\n0 0 x 0 0 0 0 0 0 0 0 0\n";
        assert!(matches!(load_parameters(src, &tiny()), Err(NetSpecError::Syntax { line: 4, .. })));
        let src = "params other\n";
        assert!(matches!(load_parameters(src, &tiny()), Err(NetSpecError::Syntax { line: 1, .. })));
    }

    #[test]
    fn write_load_round_trip() {
        let net = tiny();
        let p = load_parameters(&file(150, true), &net).unwrap();
        let p = p.map_values(|v| v * std::f64::consts::PI);
        assert_eq!(load_parameters(&write_parameters(&p), &net).unwrap(), p);
    }

    #[test]
    fn quantize_examples() {
        let net = tiny();
        let p = load_parameters(&file(150, true), &net).unwrap();
        let p = p.map_values(|v| if v == 0.01 { 0.3 } else if v == -0.25 { -3.0 } else { v });
        let fmt = FixedPointFormat::new(8, 6).unwrap();
        let q = quantize_parameters(&p, fmt);
        assert_eq!(q.get("conv1").unwrap().weights[0], 0.296875);
        assert_eq!(q.get("conv1").unwrap().biases[0], 0.0);
        assert_eq!(q.get("fc2").unwrap().weights[0], -2.0);
        assert_eq!(quantize_parameters(&q, fmt), q);
    }
}
