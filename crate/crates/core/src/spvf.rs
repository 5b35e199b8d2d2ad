//! Software Properties Verification File: per-element `[min, max]`
//! envelopes over correctly predicted calibration images, plus per-layer
//! statistics averaged over those images.
//!
//! ```text
//! spvf version 1
//! network lenet
//! images 100
//! layer conv1 3456
//! stats mean=... min=... max=... range=... std=...
//! bounds
//! <min_0> <max_0>
//! ...
//! ```
//!
//! `std` is the population standard deviation of a layer's elements within
//! one image; every stat is computed per image and then averaged.

use std::fmt::Write as _;

use thiserror::Error;

use crate::engines::{run_stage, BlobDump, EngineError, StageConfig};
use crate::netspec::{NetworkSpec, ParameterSet};
use crate::numerics::Tensor;
use crate::textfmt::{canonical, parse_real, sci, Tokens};

/// Cap on the indices listed per layer in an [`EnvelopeReport`].
pub const MAX_LISTED_OUTLIERS: usize = 16;

#[derive(Debug, Error)]
pub enum SpvfError {
    #[error("insufficient correctly predicted images: kept {kept} of {needed} needed")]
    InsufficientImages { kept: usize, needed: usize },
    #[error("calibration set is empty")]
    EmptyCalibration,
    #[error("dump does not match SPVF at layer {layer}: {detail}")]
    Structure { layer: String, detail: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LayerStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub range: f64,
    pub std: f64,
}

impl LayerStats {
    pub fn of(values: &[f64]) -> LayerStats {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        LayerStats { mean, min, max, range: max - min, std: var.sqrt() }
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> LayerStats {
        self.map2(self, |a, _| f(a))
    }

    fn map2(&self, other: &LayerStats, f: impl Fn(f64, f64) -> f64) -> LayerStats {
        LayerStats {
            mean: f(self.mean, other.mean),
            min: f(self.min, other.min),
            max: f(self.max, other.max),
            range: f(self.range, other.range),
            std: f(self.std, other.std),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpvfLayer {
    pub name: String,
    pub stats: LayerStats,
    pub bounds: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpvfFile {
    pub network: String,
    pub images: usize,
    pub layers: Vec<SpvfLayer>,
}

type Bounds = Vec<(f64, f64)>;

/// Accumulates envelopes dump by dump.
#[derive(Debug, Clone)]
pub struct SpvfBuilder {
    network: String,
    images: usize,
    /// Name, running bounds and summed per-image stats.
    layers: Vec<(String, Bounds, LayerStats)>,
}

impl SpvfBuilder {
    pub fn new(network: impl Into<String>) -> Self {
        SpvfBuilder { network: network.into(), images: 0, layers: Vec::new() }
    }

    pub fn images(&self) -> usize {
        self.images
    }

    pub fn add(&mut self, dump: &BlobDump) -> Result<(), SpvfError> {
        if self.images == 0 {
            self.layers = dump
                .records
                .iter()
                .map(|r| (r.name.clone(), r.values().iter().map(|&v| (v, v)).collect(), LayerStats::default()))
                .collect();
        } else {
            check_structure(dump, self.layers.iter().map(|(n, b, _)| (n.as_str(), b.len())))?;
        }
        for ((_, bounds, sums), record) in self.layers.iter_mut().zip(&dump.records) {
            for ((lo, hi), &v) in bounds.iter_mut().zip(record.values()) {
                *lo = lo.min(v);
                *hi = hi.max(v);
            }
            *sums = sums.map2(&LayerStats::of(record.values()), |a, b| a + b);
        }
        self.images += 1;
        Ok(())
    }

    pub fn finish(&self) -> SpvfFile {
        let n = self.images as f64;
        SpvfFile {
            network: self.network.clone(),
            images: self.images,
            layers: self
                .layers
                .iter()
                .map(|(name, bounds, sums)| SpvfLayer {
                    name: name.clone(),
                    stats: sums.map(|s| canonical(s / n)),
                    bounds: bounds.clone(),
                })
                .collect(),
        }
    }
}

fn check_structure<'a>(
    dump: &BlobDump,
    expected: impl ExactSizeIterator<Item = (&'a str, usize)>,
) -> Result<(), SpvfError> {
    let n = expected.len();
    for (i, (name, count)) in expected.enumerate() {
        let Some(r) = dump.records.get(i) else {
            return Err(SpvfError::Structure { layer: name.to_string(), detail: "missing from dump".into() });
        };
        if r.name != name || r.count() != count {
            return Err(SpvfError::Structure {
                layer: name.to_string(),
                detail: format!("dump has `{}` with {} elements, expected {count}", r.name, r.count()),
            });
        }
    }
    if let Some(extra) = dump.records.get(n) {
        return Err(SpvfError::Structure { layer: extra.name.clone(), detail: "not present in SPVF".into() });
    }
    Ok(())
}

/// Runs the sw stage over `calibration` in order, keeping images whose
/// prediction matches the label, until `n` are kept.
pub fn generate_spvf(
    net: &NetworkSpec,
    params: &ParameterSet,
    calibration: &[(Tensor, usize)],
    n: usize,
) -> Result<SpvfFile, SpvfError> {
    if calibration.is_empty() || n == 0 {
        return Err(SpvfError::EmptyCalibration);
    }
    let mut builder = SpvfBuilder::new(net.name());
    for (image, label) in calibration {
        let dump = run_stage(net, params, image, &StageConfig::sw())?;
        if dump.prediction == *label {
            builder.add(&dump)?;
            if builder.images() == n {
                return Ok(builder.finish());
            }
        }
    }
    Err(SpvfError::InsufficientImages { kept: builder.images(), needed: n })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeLayer {
    pub name: String,
    pub checked: usize,
    pub outside: usize,
    /// First [`MAX_LISTED_OUTLIERS`] offending indices.
    pub outside_indices: Vec<usize>,
    /// Dump stats minus SPVF stats.
    pub deltas: LayerStats,
    pub pass: bool,
}

impl EnvelopeLayer {
    pub fn fraction_inside(&self) -> f64 {
        (self.checked - self.outside) as f64 / self.checked as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeReport {
    pub layers: Vec<EnvelopeLayer>,
}

impl EnvelopeReport {
    pub fn pass(&self) -> bool {
        self.layers.iter().all(|l| l.pass)
    }

    pub fn first_failure(&self) -> Option<&EnvelopeLayer> {
        self.layers.iter().find(|l| !l.pass)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for l in &self.layers {
            let _ = writeln!(
                out,
                "envelope {} checked={} outside={} inside={} pass={} dmean={} dstd={}",
                l.name,
                l.checked,
                l.outside,
                sci(l.fraction_inside()),
                u8::from(l.pass),
                sci(l.deltas.mean),
                sci(l.deltas.std)
            );
            if !l.outside_indices.is_empty() {
                let idx: Vec<String> = l.outside_indices.iter().map(usize::to_string).collect();
                let _ = writeln!(out, "  outside indices: {}", idx.join(" "));
            }
        }
        let _ = writeln!(out, "envelope-result pass={}", u8::from(self.pass()));
        out
    }
}

/// Element `i` passes iff `min_i - slack*std <= v_i <= max_i + slack*std`,
/// `std` being the layer's averaged SPVF std.
pub fn check_blobs(
    dump: &BlobDump,
    spvf: &SpvfFile,
    slack: f64,
    pass_fraction: f64,
) -> Result<EnvelopeReport, SpvfError> {
    check_structure(dump, spvf.layers.iter().map(|l| (l.name.as_str(), l.bounds.len())))?;
    let layers = spvf
        .layers
        .iter()
        .zip(&dump.records)
        .map(|(layer, record)| {
            let margin = slack * layer.stats.std;
            let mut outside = 0;
            let mut outside_indices = Vec::new();
            for (i, (&(lo, hi), &v)) in layer.bounds.iter().zip(record.values()).enumerate() {
                if !(lo - margin <= v && v <= hi + margin) {
                    outside += 1;
                    if outside_indices.len() < MAX_LISTED_OUTLIERS {
                        outside_indices.push(i);
                    }
                }
            }
            let checked = record.count();
            let inside = (checked - outside) as f64 / checked as f64;
            EnvelopeLayer {
                name: layer.name.clone(),
                checked,
                outside,
                outside_indices,
                deltas: LayerStats::of(record.values()).map2(&layer.stats, |a, b| a - b),
                pass: inside >= pass_fraction,
            }
        })
        .collect();
    Ok(EnvelopeReport { layers })
}

pub fn render_spvf(spvf: &SpvfFile) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "spvf version 1\nnetwork {}\nimages {}", spvf.network, spvf.images);
    for layer in &spvf.layers {
        let s = &layer.stats;
        let _ = writeln!(out, "layer {} {}", layer.name, layer.bounds.len());
        let _ = writeln!(
            out,
            "stats mean={} min={} max={} range={} std={}",
            sci(s.mean),
            sci(s.min),
            sci(s.max),
            sci(s.range),
            sci(s.std)
        );
        out.push_str("bounds\n");
        for &(lo, hi) in &layer.bounds {
            let _ = writeln!(out, "{} {}", sci(lo), sci(hi));
        }
    }
    out
}

pub fn read_spvf(text: &str) -> Result<SpvfFile, SpvfError> {
    let mut t = Tokens::new(text);
    let err = |line: usize, message: String| SpvfError::Parse { line, message };
    fn next<'a>(t: &mut Tokens<'a>, what: &str) -> Result<(usize, &'a str), SpvfError> {
        t.next().ok_or_else(|| SpvfError::Parse { line: t.line(), message: format!("expected {what}, got end of file") })
    }
    let keyword = |t: &mut Tokens<'_>, kw: &str| -> Result<(), SpvfError> {
        let (line, tok) = t.next().ok_or_else(|| err(t.line(), format!("expected `{kw}`")))?;
        if tok == kw {
            Ok(())
        } else {
            Err(err(line, format!("expected `{kw}`, got `{tok}`")))
        }
    };
    let number = |(line, tok): (usize, &str)| parse_real(tok).ok_or_else(|| err(line, format!("invalid number `{tok}`")));

    keyword(&mut t, "spvf")?;
    keyword(&mut t, "version")?;
    let (line, v) = next(&mut t, "version")?;
    if v != "1" {
        return Err(err(line, format!("unsupported version `{v}`")));
    }
    keyword(&mut t, "network")?;
    let network = next(&mut t, "network name")?.1.to_string();
    keyword(&mut t, "images")?;
    let (line, n) = next(&mut t, "image count")?;
    let images: usize = n.parse().map_err(|_| err(line, format!("invalid image count `{n}`")))?;

    let mut layers = Vec::new();
    while t.peek().is_some() {
        keyword(&mut t, "layer")?;
        let name = next(&mut t, "layer name")?.1.to_string();
        let (line, c) = next(&mut t, "element count")?;
        let count: usize = c.parse().map_err(|_| err(line, format!("invalid element count `{c}`")))?;
        keyword(&mut t, "stats")?;
        let mut fields = [0.0; 5];
        for (slot, key) in fields.iter_mut().zip(["mean", "min", "max", "range", "std"]) {
            let (line, kv) = next(&mut t, key)?;
            let v = kv
                .strip_prefix(key)
                .and_then(|rest| rest.strip_prefix('='))
                .ok_or_else(|| err(line, format!("expected `{key}=<value>`, got `{kv}`")))?;
            *slot = number((line, v))?;
        }
        let [mean, min, max, range, std] = fields;
        keyword(&mut t, "bounds")?;
        let mut bounds = Vec::with_capacity(count);
        for _ in 0..count {
            let lo = number(next(&mut t, "lower bound")?)?;
            let (line, tok) = next(&mut t, "upper bound")?;
            let hi = number((line, tok))?;
            if lo > hi {
                return Err(err(line, format!("lower bound {lo} exceeds upper bound {hi}")));
            }
            bounds.push((lo, hi));
        }
        layers.push(SpvfLayer { name, stats: LayerStats { mean, min, max, range, std }, bounds });
    }
    Ok(SpvfFile { network, images, layers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engines::{BlobRecord, Stage};
    use proptest::prelude::*;

    fn dump(values: &[f64]) -> BlobDump {
        BlobDump { stage: Stage::Sw, image: "0".into(), records: vec![BlobRecord::new("l", values.iter().copied())], prediction: 0 }
    }

    #[test]
    fn two_image_envelope() {
        let mut b = SpvfBuilder::new("t");
        b.add(&dump(&[1.0, 3.0])).unwrap();
        b.add(&dump(&[2.0, 2.0])).unwrap();
        let s = b.finish();
        assert_eq!(s.images, 2);
        assert_eq!(s.layers[0].bounds, vec![(1.0, 2.0), (2.0, 3.0)]);
        assert_eq!(s.layers[0].stats.mean, 2.0);
        // per image: range 2 and 0, std 1 and 0
        assert_eq!(s.layers[0].stats.range, 1.0);
        assert_eq!(s.layers[0].stats.std, 0.5);
        assert_eq!(s.layers[0].stats.min, 1.5);
        assert_eq!(s.layers[0].stats.max, 2.5);
    }

    #[test]
    fn single_image_collapses_bounds() {
        let mut b = SpvfBuilder::new("t");
        b.add(&dump(&[-1.0, 4.0])).unwrap();
        assert_eq!(b.finish().layers[0].bounds, vec![(-1.0, -1.0), (4.0, 4.0)]);
    }

    #[test]
    fn structure_mismatch_names_layer() {
        let mut b = SpvfBuilder::new("t");
        b.add(&dump(&[1.0, 3.0])).unwrap();
        let e = b.add(&dump(&[1.0])).unwrap_err();
        assert!(matches!(e, SpvfError::Structure { ref layer, .. } if layer == "l"));
        let s = b.finish();
        assert!(check_blobs(&dump(&[1.0, 2.0, 3.0]), &s, 0.0, 1.0).is_err());
    }

    #[test]
    fn check_counts_outliers_and_respects_slack() {
        let mut b = SpvfBuilder::new("t");
        b.add(&dump(&[1.0, 3.0])).unwrap();
        b.add(&dump(&[2.0, 2.0])).unwrap();
        let s = b.finish();
        let inside = check_blobs(&dump(&[1.5, 2.5]), &s, 0.0, 1.0).unwrap();
        assert!(inside.pass());
        let std = s.layers[0].stats.std;
        let out = check_blobs(&dump(&[1.5, 3.0 + 10.0 * std]), &s, 0.0, 1.0).unwrap();
        assert_eq!(out.layers[0].outside, 1);
        assert_eq!(out.layers[0].outside_indices, vec![1]);
        assert!(!out.pass());
        // half the elements inside still meets a 0.5 threshold
        assert!(check_blobs(&dump(&[1.5, 3.0 + 10.0 * std]), &s, 0.0, 0.5).unwrap().pass());
        let covered = check_blobs(&dump(&[1.5, 3.0 + 10.0 * std]), &s, 10.0, 1.0).unwrap();
        assert_eq!(covered.layers[0].outside, 0);
    }

    #[test]
    fn read_rejects_inverted_bounds_and_bad_keys() {
        let text = "spvf version 1\nnetwork t\nimages 1\nlayer l 1\nstats mean=0 min=0 max=0 range=0 std=0\nbounds\n2 1\n";
        assert!(matches!(read_spvf(text), Err(SpvfError::Parse { line: 7, .. })));
        let text = "spvf version 1\nnetwork t\nimages 1\nlayer l 1\nstats avg=0 min=0 max=0 range=0 std=0\nbounds\n1 2\n";
        assert!(matches!(read_spvf(text), Err(SpvfError::Parse { line: 5, .. })));
    }

    proptest! {
        #[test]
        fn flagged_count_nonincreasing_in_slack(
            base in proptest::collection::vec(-5.0f64..5.0, 4),
            probe in proptest::collection::vec(-20.0f64..20.0, 4),
            s1 in 0.0f64..5.0, s2 in 0.0f64..5.0,
        ) {
            let mut b = SpvfBuilder::new("t");
            b.add(&dump(&base)).unwrap();
            b.add(&dump(&base.iter().map(|v| v * 0.5 + 1.0).collect::<Vec<_>>())).unwrap();
            let s = b.finish();
            let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
            let a = check_blobs(&dump(&probe), &s, lo, 1.0).unwrap().layers[0].outside;
            let c = check_blobs(&dump(&probe), &s, hi, 1.0).unwrap().layers[0].outside;
            prop_assert!(c <= a);
        }

        #[test]
        fn envelopes_never_shrink(images in proptest::collection::vec(proptest::collection::vec(-9.0f64..9.0, 3), 1..6)) {
            let mut b = SpvfBuilder::new("t");
            let mut widths = [0.0; 3];
            for img in &images {
                b.add(&dump(img)).unwrap();
                let s = b.finish();
                for (w, &(lo, hi)) in widths.iter_mut().zip(&s.layers[0].bounds) {
                    prop_assert!(hi - lo >= *w);
                    *w = hi - lo;
                }
            }
        }
    }
}
