//! Plain-text tensors (`tensor C H W` followed by C*H*W values) and
//! calibration manifests (`<path> <label>` per line).

use std::path::{Path, PathBuf};

use coverify_core::textfmt::{parse_real, write_sci, Tokens};
use coverify_core::{Shape, Tensor};

use crate::CliError;

pub fn render_tensor(t: &Tensor) -> String {
    let s = t.shape();
    let mut out = format!("tensor {} {} {}\n", s.channels, s.height, s.width);
    for row in t.data().chunks(s.width.max(1)) {
        for (i, &v) in row.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            write_sci(&mut out, v);
        }
        out.push('\n');
    }
    out
}

pub fn parse_tensor(text: &str) -> Result<Tensor, String> {
    let mut tokens = Tokens::new(text);
    match tokens.next() {
        Some((_, "tensor")) => {}
        Some((line, t)) => return Err(format!("line {line}: expected `tensor`, got `{t}`")),
        None => return Err("empty tensor file".into()),
    }
    let mut dim = || -> Result<usize, String> {
        let (line, t) = tokens.next().ok_or("truncated tensor header")?;
        t.parse::<usize>()
            .ok()
            .filter(|&d| d > 0)
            .ok_or_else(|| format!("line {line}: invalid dimension `{t}`"))
    };
    let shape = Shape::new(dim()?, dim()?, dim()?);
    let mut data = Vec::with_capacity(shape.len());
    for (line, t) in tokens {
        data.push(parse_real(t).ok_or_else(|| format!("line {line}: invalid value `{t}`"))?);
    }
    if data.len() != shape.len() {
        return Err(format!("tensor {shape} needs {} values, found {}", shape.len(), data.len()));
    }
    Tensor::new(shape, data).map_err(|e| e.to_string())
}

pub fn read_tensor(path: &Path) -> Result<Tensor, CliError> {
    let text = crate::read_text(path)?;
    parse_tensor(&text).map_err(|m| CliError::Config(format!("{}: {m}", path.display())))
}

/// Entries are resolved relative to the manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<(PathBuf, usize)>, CliError> {
    let text = crate::read_text(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = || CliError::Config(format!("{}:{}: expected `<path> <label>`", path.display(), n + 1));
        let mut parts = line.split_whitespace();
        let (Some(file), Some(label), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(bad());
        };
        entries.push((base.join(file), label.parse().map_err(|_| bad())?));
    }
    Ok(entries)
}

/// 8-bit grayscale (or planar multi-channel) raw bytes, scaled by 1/255.
pub fn import_raw(bytes: &[u8], shape: Shape) -> Result<Tensor, String> {
    if bytes.len() != shape.len() {
        return Err(format!("raw file holds {} bytes, shape {shape} needs {}", bytes.len(), shape.len()));
    }
    Tensor::new(shape, bytes.iter().map(|&b| f64::from(b) / 255.0).collect()).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_round_trip() {
        let t = Tensor::new(Shape::new(2, 1, 3), vec![0.25, 0.0, -3.0, 1e-9, 7.0, 0.5]).unwrap();
        let text = render_tensor(&t);
        assert!(text.starts_with("tensor 2 1 3\n2.50000000e-01 0.00000000e+00 -3.00000000e+00\n"));
        assert_eq!(parse_tensor(&text).unwrap(), t);
    }

    #[test]
    fn tensor_errors() {
        for bad in ["", "matrix 1 1 1\n0", "tensor 1 1\n", "tensor 1 0 1\n", "tensor 1 1 2\n0\n", "tensor 1 1 1\nx\n"] {
            assert!(parse_tensor(bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn raw_import_scales_bytes() {
        let t = import_raw(&[0, 255, 51, 102], Shape::new(1, 2, 2)).unwrap();
        assert_eq!(t.data(), &[0.0, 1.0, 0.2, 0.4]);
        assert!(import_raw(&[0; 3], Shape::new(1, 2, 2)).is_err());
    }
}
