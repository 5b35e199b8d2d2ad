//! The full two-level flow. Level 1 builds the SPVF from calibration images
//! and checks the software dump against it. Level 2 runs the design stage,
//! gates on its similarity to software, then runs the hardware stage and
//! performs the three-way comparison.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use coverify_core::blobio::render_blob_dump;
use coverify_core::spvf::render_spvf;
use coverify_core::textfmt::sci;
use coverify_core::verifier::{render_report, render_table};
use coverify_core::{
    check_blobs, generate_spvf, recommend_action, run_stage, similarity_score, three_way_compare, Advice, BlobDump,
    EnvelopeReport, FaultSpec, NetworkSpec, NumericMode, ParameterSet, SimilarityReport, StageConfig, Tensor,
    VerifierConfig,
};

use crate::CliError;

pub struct PipelineConfig {
    pub net: NetworkSpec,
    pub params: ParameterSet,
    pub calibration: Vec<(Tensor, usize)>,
    pub image: Tensor,
    pub mode: NumericMode,
    pub fault: Option<FaultSpec>,
    pub n: usize,
    pub slack: f64,
    pub pass_fraction: f64,
    pub verifier: VerifierConfig,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Verified,
    /// The software dump falls outside the SPVF envelope.
    SoftwareEnvelope { layer: String },
    /// Stopped at the design gate.
    Design(Advice),
    /// Stopped at the final three-way comparison.
    Hardware(Advice),
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub verdict: Verdict,
    pub spvf_images: usize,
    pub first_divergent: Option<String>,
    pub report: Option<SimilarityReport>,
    /// Human-readable progress, also printed by the CLI.
    pub log: String,
}

impl PipelineOutcome {
    pub fn exit_code(&self) -> u8 {
        if self.verdict == Verdict::Verified {
            0
        } else {
            1
        }
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|source| CliError::Io { path: path.clone(), source })?;
    Ok(path)
}

fn envelope_line(log: &mut String, label: &str, r: &EnvelopeReport) {
    let _ = match r.first_failure() {
        None => writeln!(log, "{label}: inside SPVF"),
        Some(l) => writeln!(
            log,
            "{label}: outside SPVF at {} ({} of {} elements outside)",
            l.name, l.outside, l.checked
        ),
    };
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutcome, CliError> {
    std::fs::create_dir_all(&cfg.out).map_err(|source| CliError::Io { path: cfg.out.clone(), source })?;
    let mut log = String::new();
    let (net, params) = (&cfg.net, &cfg.params);
    let hw_cfg = match &cfg.fault {
        Some(f) => StageConfig::hw(cfg.mode).with_fault(f.clone()),
        None => StageConfig::hw(cfg.mode),
    };
    hw_cfg.validate(net)?;
    StageConfig::design(cfg.mode).validate(net)?;

    // Level 1
    let spvf = generate_spvf(net, params, &cfg.calibration, cfg.n).map_err(CliError::Spvf)?;
    let path = write_file(&cfg.out, "spvf.txt", &render_spvf(&spvf))?;
    let _ = writeln!(log, "spvf: {} correctly predicted images -> {}", spvf.images, path.display());

    let sw = run_stage(net, params, &cfg.image, &StageConfig::sw())?;
    write_file(&cfg.out, "file_sw.txt", &render_blob_dump(&sw))?;
    let envelope = check_blobs(&sw, &spvf, cfg.slack, cfg.pass_fraction).map_err(CliError::Spvf)?;
    envelope_line(&mut log, "sw", &envelope);
    if let Some(l) = envelope.first_failure() {
        let layer = l.name.clone();
        let _ = writeln!(log, "advice software stage fails SPVF at {layer}: retrain the model or rebuild the SPVF");
        return Ok(PipelineOutcome {
            verdict: Verdict::SoftwareEnvelope { layer: layer.clone() },
            spvf_images: spvf.images,
            first_divergent: Some(layer),
            report: None,
            log,
        });
    }

    // Level 2, design
    let design = run_stage(net, params, &cfg.image, &StageConfig::design(cfg.mode))?;
    write_file(&cfg.out, "file_design.txt", &render_blob_dump(&design))?;
    envelope_line(&mut log, "design", &check_blobs(&design, &spvf, cfg.slack, cfg.pass_fraction).map_err(CliError::Spvf)?);
    if let Some(stop) = design_gate(&sw, &design, &cfg.verifier)? {
        let (text, advice) = stop;
        write_file(&cfg.out, "report.txt", &text)?;
        log.push_str(&text);
        return Ok(PipelineOutcome {
            first_divergent: advice.layer().map(str::to_string),
            verdict: Verdict::Design(advice),
            spvf_images: spvf.images,
            report: None,
            log,
        });
    }
    let _ = writeln!(log, "design: all layers at or above threshold {}", sci(cfg.verifier.threshold));

    // Level 2, hardware
    let hw = run_stage(net, params, &cfg.image, &hw_cfg)?;
    write_file(&cfg.out, "file_hw.txt", &render_blob_dump(&hw))?;
    envelope_line(&mut log, "hw", &check_blobs(&hw, &spvf, cfg.slack, cfg.pass_fraction).map_err(CliError::Spvf)?);
    let report = three_way_compare(&sw, &design, &hw, &cfg.verifier)?;
    let advice = recommend_action(&report);
    let text = render_report(&report, &advice);
    write_file(&cfg.out, "report.txt", &text)?;
    log.push_str(&render_table(&report));
    log.push_str(&text);
    Ok(PipelineOutcome {
        first_divergent: report.first_divergent().map(str::to_string),
        verdict: if advice.is_verified() { Verdict::Verified } else { Verdict::Hardware(advice) },
        spvf_images: spvf.images,
        report: Some(report),
        log,
    })
}

/// Scores sw against design alone. Returns the gate report and advice when
/// the gate fails.
fn design_gate(sw: &BlobDump, design: &BlobDump, cfg: &VerifierConfig) -> Result<Option<(String, Advice)>, CliError> {
    let mut text = String::new();
    let mut first_fail = None;
    for (s, d) in sw.records.iter().zip(&design.records) {
        let sc = similarity_score(s.values(), d.values(), cfg.zero_epsilon)?;
        let pass = sc >= cfg.threshold;
        if !pass && first_fail.is_none() {
            first_fail = Some(s.name.clone());
        }
        let _ = writeln!(text, "score-des {} n={} sc_des={} pass={}", s.name, s.count(), sci(sc), u8::from(pass));
    }
    let consistent = sw.prediction == design.prediction;
    if first_fail.is_none() && consistent {
        return Ok(None);
    }
    let _ = writeln!(
        text,
        "prediction sw={} design={} consistent={}",
        sw.prediction,
        design.prediction,
        u8::from(consistent)
    );
    let _ = writeln!(text, "divergent {}", first_fail.as_deref().unwrap_or("none"));
    let advice = Advice::RedesignDesign { layer: first_fail };
    let _ = writeln!(text, "advice {}", advice.text());
    Ok(Some((text, advice)))
}
