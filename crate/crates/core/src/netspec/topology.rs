use std::collections::HashMap;

use super::{LayerKind, LayerSpec, NetSpecError, NetworkSpec, PoolKind};
use crate::numerics::Shape;

/// Parses and validates a topology file.
pub fn parse_topology(text: &str) -> Result<NetworkSpec, NetSpecError> {
    let mut name: Option<String> = None;
    let mut input: Option<Shape> = None;
    let mut layers = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split_once('#').map_or(raw, |(head, _)| head);
        let words: Vec<&str> = content.split_whitespace().collect();
        let Some((&directive, args)) = words.split_first() else {
            continue;
        };
        match directive {
            "network" => {
                if name.is_some() {
                    return Err(NetSpecError::syntax(line, "duplicate `network` line"));
                }
                let [n] = args else {
                    return Err(NetSpecError::syntax(line, "expected `network <name>`"));
                };
                check_identifier(line, n)?;
                name = Some(n.to_string());
            }
            "input" => {
                if name.is_none() {
                    return Err(NetSpecError::syntax(line, "`input` before `network`"));
                }
                if input.is_some() {
                    return Err(NetSpecError::syntax(line, "duplicate `input` line"));
                }
                let [c, h, w] = args else {
                    return Err(NetSpecError::syntax(line, "expected `input <C> <H> <W>`"));
                };
                input = Some(Shape::new(count(line, c)?, count(line, h)?, count(line, w)?));
            }
            "layer" => {
                if input.is_none() {
                    return Err(NetSpecError::syntax(line, "`layer` before `network`/`input`"));
                }
                layers.push(parse_layer(line, args)?);
            }
            other => return Err(NetSpecError::syntax(line, format!("unknown directive `{other}`"))),
        }
    }

    let name = name.ok_or_else(|| NetSpecError::syntax(0, "missing `network` line"))?;
    let input = input.ok_or_else(|| NetSpecError::syntax(0, "missing `input` line"))?;
    NetworkSpec::new(name, input, layers)
}

fn check_identifier(line: usize, s: &str) -> Result<(), NetSpecError> {
    if s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.') {
        Ok(())
    } else {
        Err(NetSpecError::syntax(line, format!("invalid identifier `{s}`")))
    }
}

fn count(line: usize, s: &str) -> Result<usize, NetSpecError> {
    s.parse().map_err(|_| NetSpecError::syntax(line, format!("expected a non-negative integer, got `{s}`")))
}

fn parse_layer(line: usize, args: &[&str]) -> Result<LayerSpec, NetSpecError> {
    let [kind, name, rest @ ..] = args else {
        return Err(NetSpecError::syntax(line, "expected `layer <kind> <name> [key=value...]`"));
    };
    check_identifier(line, name)?;

    let mut keys: HashMap<&str, &str> = HashMap::new();
    for kv in rest {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| NetSpecError::syntax(line, format!("expected key=value, got `{kv}`")))?;
        if keys.insert(k, v).is_some() {
            return Err(NetSpecError::syntax(line, format!("duplicate key `{k}`")));
        }
    }
    let mut take = |key: &str, default: Option<usize>| -> Result<usize, NetSpecError> {
        match keys.remove(key) {
            Some(v) => count(line, v),
            None => default.ok_or_else(|| NetSpecError::syntax(line, format!("missing key `{key}`"))),
        }
    };

    let kind = match *kind {
        "conv" => LayerKind::Conv {
            filters: take("filters", None)?,
            kernel: take("kernel", None)?,
            stride: take("stride", Some(1))?,
            pad: take("pad", Some(0))?,
        },
        "pool" => {
            let kernel = take("kernel", None)?;
            let stride = take("stride", Some(kernel))?;
            let kind = match keys.remove("kind") {
                None | Some("max") => PoolKind::Max,
                Some("avg") => PoolKind::Avg,
                Some(other) => {
                    return Err(NetSpecError::syntax(line, format!("unknown pool kind `{other}`")))
                }
            };
            LayerKind::Pool { kind, kernel, stride }
        }
        "relu" => LayerKind::Relu,
        "fc" => LayerKind::Fc { units: take("units", None)? },
        other => return Err(NetSpecError::syntax(line, format!("unknown layer kind `{other}`"))),
    };
    if let Some(k) = keys.keys().min() {
        return Err(NetSpecError::syntax(line, format!("unknown key `{k}` for {} layer", kind.keyword())));
    }
    Ok(LayerSpec { name: name.to_string(), kind })
}
