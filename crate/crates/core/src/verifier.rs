//! Three-way comparison of sw, design and hw dumps.
//!
//! Per layer of `n` elements, with `X_i = max(|a_i|, |b_i|)` and
//! `Y_i = min(|a_i|, |b_i|)`:
//!
//! ```text
//! score = (1/n) * sum_i (1 - (X_i - Y_i) / X_i)
//! ```
//!
//! An element where both magnitudes are below `zero_epsilon` scores 1.
//! `sc_des` compares sw against design and `sc_hw` compares sw against hw.
//! Because hw runs the design arithmetic, any element where hw differs from
//! design also marks the layer as divergent.

use std::fmt::Write as _;

use thiserror::Error;

use crate::engines::{BlobDump, BlobRecord};
use crate::textfmt::sci;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error("length mismatch: {left} vs {right} elements")]
    LengthMismatch { left: usize, right: usize },
    #[error("cannot score an empty layer")]
    Empty,
    #[error("{pair} dumps differ in structure at layer {layer}: {detail}")]
    Structure { pair: &'static str, layer: String, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifierConfig {
    pub threshold: f64,
    pub zero_epsilon: f64,
}

impl Default for VerifierConfig {
    fn default() -> Self {
        VerifierConfig { threshold: 0.90, zero_epsilon: 1e-12 }
    }
}

/// Mean elementwise magnitude ratio `min(|a|,|b|) / max(|a|,|b|)`.
pub fn similarity_score(reference: &[f64], candidate: &[f64], zero_epsilon: f64) -> Result<f64, VerifyError> {
    if reference.len() != candidate.len() {
        return Err(VerifyError::LengthMismatch { left: reference.len(), right: candidate.len() });
    }
    if reference.is_empty() {
        return Err(VerifyError::Empty);
    }
    let total: f64 = reference
        .iter()
        .zip(candidate)
        .map(|(a, b)| {
            let (a, b) = (a.abs(), b.abs());
            let (x, y) = if a >= b { (a, b) } else { (b, a) };
            if x < zero_epsilon {
                1.0
            } else {
                y / x
            }
        })
        .sum();
    Ok(total / reference.len() as f64)
}

fn sign_mismatches(a: &[f64], b: &[f64]) -> usize {
    a.iter().zip(b).filter(|(x, y)| **x * **y < 0.0).count()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerScore {
    pub name: String,
    pub n: usize,
    pub sc_des: f64,
    pub sc_hw: f64,
    /// hw compared with design; 1.0 exactly when they agree.
    pub sc_hw_design: f64,
    /// Elements where hw and design differ at all.
    pub hw_design_mismatches: usize,
    pub sign_mismatch_des: usize,
    pub sign_mismatch_hw: usize,
    pub des_pass: bool,
    pub hw_pass: bool,
}

impl LayerScore {
    pub fn pass(&self) -> bool {
        self.des_pass && self.hw_pass
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityReport {
    pub layers: Vec<LayerScore>,
    pub prediction_sw: usize,
    pub prediction_design: usize,
    pub prediction_hw: usize,
    pub threshold: f64,
}

impl SimilarityReport {
    pub fn predictions_consistent(&self) -> bool {
        self.prediction_sw == self.prediction_design && self.prediction_design == self.prediction_hw
    }

    /// Earliest layer failing either comparison.
    pub fn first_divergent(&self) -> Option<&str> {
        self.layers.iter().find(|l| !l.pass()).map(|l| l.name.as_str())
    }

    pub fn all_pass(&self) -> bool {
        self.layers.iter().all(LayerScore::pass)
    }
}

fn check_pair(pair: &'static str, a: &BlobDump, b: &BlobDump) -> Result<(), VerifyError> {
    let longest = a.records.len().max(b.records.len());
    for i in 0..longest {
        match (a.records.get(i), b.records.get(i)) {
            (Some(x), Some(y)) if x.name == y.name && x.count() == y.count() => {}
            (Some(x), Some(y)) => {
                return Err(VerifyError::Structure {
                    pair,
                    layer: x.name.clone(),
                    detail: format!("`{}` ({}) vs `{}` ({})", x.name, x.count(), y.name, y.count()),
                })
            }
            (Some(x), None) | (None, Some(x)) => {
                return Err(VerifyError::Structure { pair, layer: x.name.clone(), detail: "present in only one dump".into() })
            }
            (None, None) => unreachable!(),
        }
    }
    Ok(())
}

pub fn three_way_compare(
    sw: &BlobDump,
    design: &BlobDump,
    hw: &BlobDump,
    cfg: &VerifierConfig,
) -> Result<SimilarityReport, VerifyError> {
    check_pair("sw/design", sw, design)?;
    check_pair("sw/hw", sw, hw)?;
    let score = |a: &BlobRecord, b: &BlobRecord| similarity_score(a.values(), b.values(), cfg.zero_epsilon);
    let layers = sw
        .records
        .iter()
        .zip(&design.records)
        .zip(&hw.records)
        .map(|((s, d), h)| {
            let sc_des = score(s, d)?;
            let sc_hw = score(s, h)?;
            let hw_design_mismatches = d.values().iter().zip(h.values()).filter(|(x, y)| x != y).count();
            Ok(LayerScore {
                name: s.name.clone(),
                n: s.count(),
                sc_des,
                sc_hw,
                sc_hw_design: score(d, h)?,
                hw_design_mismatches,
                sign_mismatch_des: sign_mismatches(s.values(), d.values()),
                sign_mismatch_hw: sign_mismatches(s.values(), h.values()),
                des_pass: sc_des >= cfg.threshold,
                hw_pass: sc_hw >= cfg.threshold && hw_design_mismatches == 0,
            })
        })
        .collect::<Result<_, VerifyError>>()?;
    Ok(SimilarityReport {
        layers,
        prediction_sw: sw.prediction,
        prediction_design: design.prediction,
        prediction_hw: hw.prediction,
        threshold: cfg.threshold,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Advice {
    DeploymentVerified,
    /// The design stage disagrees with the software reference: redesign
    /// the layer implementation and inspect its layer-by-layer output.
    RedesignDesign { layer: Option<String> },
    /// The hardware stage disagrees: fix the layer and regenerate the
    /// hardware path.
    RegenerateHardware { layer: Option<String> },
}

impl Advice {
    pub fn layer(&self) -> Option<&str> {
        match self {
            Advice::DeploymentVerified => None,
            Advice::RedesignDesign { layer } | Advice::RegenerateHardware { layer } => layer.as_deref(),
        }
    }

    pub fn is_verified(&self) -> bool {
        *self == Advice::DeploymentVerified
    }

    pub fn text(&self) -> String {
        match self {
            Advice::DeploymentVerified => "deployment verified".to_string(),
            Advice::RedesignDesign { layer: Some(l) } => format!(
                "design stage diverges at {l}: redesign the layer algorithm and check for error using layer-by-layer output values"
            ),
            Advice::RedesignDesign { layer: None } => {
                "design prediction differs from software: redesign the algorithm and check layer-by-layer output values".to_string()
            }
            Advice::RegenerateHardware { layer: Some(l) } => {
                format!("hardware stage diverges at {l}: redesign the layer algorithm and regenerate the hardware path")
            }
            Advice::RegenerateHardware { layer: None } => {
                "hardware prediction differs: redesign the algorithm and regenerate the hardware path".to_string()
            }
        }
    }
}

pub fn recommend_action(report: &SimilarityReport) -> Advice {
    if let Some(l) = report.layers.iter().find(|l| !l.des_pass) {
        return Advice::RedesignDesign { layer: Some(l.name.clone()) };
    }
    if let Some(l) = report.layers.iter().find(|l| !l.hw_pass) {
        return Advice::RegenerateHardware { layer: Some(l.name.clone()) };
    }
    if report.prediction_design != report.prediction_sw {
        return Advice::RedesignDesign { layer: None };
    }
    if report.prediction_hw != report.prediction_design {
        return Advice::RegenerateHardware { layer: None };
    }
    Advice::DeploymentVerified
}

/// Machine-readable rendering, one `score` line per layer.
pub fn render_report(report: &SimilarityReport, advice: &Advice) -> String {
    let mut out = String::new();
    for l in &report.layers {
        let _ = writeln!(
            out,
            "score {} n={} sc_des={} sc_hw={} pass={}",
            l.name,
            l.n,
            sci(l.sc_des),
            sci(l.sc_hw),
            u8::from(l.pass())
        );
    }
    let _ = writeln!(
        out,
        "prediction sw={} design={} hw={} consistent={}",
        report.prediction_sw,
        report.prediction_design,
        report.prediction_hw,
        u8::from(report.predictions_consistent())
    );
    let _ = writeln!(out, "divergent {}", report.first_divergent().unwrap_or("none"));
    let _ = writeln!(out, "advice {}", advice.text());
    out
}

/// Human-oriented table.
pub fn render_table(report: &SimilarityReport) -> String {
    let width = report.layers.iter().map(|l| l.name.len()).max().unwrap_or(5).max(5);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>7}  {:>10}  {:>10}  {:>9}  {:>6}  {:>4}",
        "layer", "n", "SC_Des", "SC_HW", "hw!=des", "signs", "pass"
    );
    for l in &report.layers {
        let _ = writeln!(
            out,
            "{:<width$}  {:>7}  {:>10.5}  {:>10.5}  {:>9}  {:>6}  {:>4}",
            l.name,
            l.n,
            l.sc_des,
            l.sc_hw,
            l.hw_design_mismatches,
            l.sign_mismatch_des + l.sign_mismatch_hw,
            if l.pass() { "yes" } else { "NO" }
        );
    }
    out
}
