//! `coverify` command-line driver.
//!
//! Exit codes: 0 ok, 1 verification failure, 2 configuration or parse
//! error, 3 engine error, 4 calibration error.

pub mod pipeline;
pub mod tensorfile;

use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use coverify_core::blobio::{read_blob_dump, write_blob_dump, BlobIoError};
use coverify_core::fixture::{self, DEFAULT_SEED, DEFAULT_TEST_IMAGE};
use coverify_core::netspec::write_parameters;
use coverify_core::spvf::{read_spvf, render_spvf};
use coverify_core::verifier::{render_report, render_table};
use coverify_core::{
    check_blobs, generate_spvf, infer_shapes, load_parameters, parse_topology, recommend_action, run_stage,
    three_way_compare, EngineError, FaultSpec, NetSpecError, NetworkSpec, NumericMode, ParameterSet, Shape,
    SpvfError, Stage, StageConfig, Tensor, VerifierConfig, VerifyError,
};

use pipeline::{run_pipeline, PipelineConfig};
use tensorfile::{import_raw, read_manifest, read_tensor, render_tensor};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    NetSpec(#[from] NetSpecError),
    #[error(transparent)]
    BlobIo(#[from] BlobIoError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Spvf(SpvfError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io { .. } | CliError::NetSpec(_) | CliError::BlobIo(_) => 2,
            CliError::Verify(_) => 2,
            CliError::Engine(EngineError::Config(_)) => 2,
            CliError::Engine(_) => 3,
            CliError::Spvf(SpvfError::InsufficientImages { .. } | SpvfError::EmptyCalibration) => 4,
            CliError::Spvf(SpvfError::Engine(EngineError::Config(_))) => 2,
            CliError::Spvf(SpvfError::Engine(_)) => 3,
            CliError::Spvf(SpvfError::Structure { .. } | SpvfError::Parse { .. }) => 2,
        }
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn write_out(path: Option<&Path>, contents: &str, stdout: &mut dyn Write) -> Result<(), CliError> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
            }
            std::fs::write(p, contents).map_err(|source| CliError::Io { path: p.to_path_buf(), source })
        }
        None => stdout
            .write_all(contents.as_bytes())
            .map_err(|source| CliError::Io { path: "<stdout>".into(), source }),
    }
}

#[derive(Debug, Parser)]
#[command(name = "coverify", version, about = "Layer-by-layer software/design/hardware co-verification of small CNNs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Bundled {
    Lenet,
    Cifar,
}

/// Network and parameter source. Without files the bundled topology and
/// seeded synthetic parameters are used.
#[derive(Debug, Clone, Args)]
pub struct NetArgs {
    /// Bundled network used when --topology is absent.
    #[arg(long, value_enum, default_value = "lenet")]
    pub network: Bundled,
    #[arg(long)]
    pub topology: Option<PathBuf>,
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Seed for synthetic parameters, images and calibration data.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

impl NetArgs {
    pub fn network(&self) -> Result<NetworkSpec, CliError> {
        match &self.topology {
            Some(p) => Ok(parse_topology(&read_text(p)?)?),
            None => Ok(match self.network {
                Bundled::Lenet => fixture::lenet(),
                Bundled::Cifar => fixture::cifar(),
            }),
        }
    }

    pub fn parameters(&self, net: &NetworkSpec) -> Result<ParameterSet, CliError> {
        match &self.params {
            Some(p) => Ok(load_parameters(&read_text(p)?, net)?),
            None => Ok(fixture::synthetic_parameters(net, self.seed)),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ImageArgs {
    /// Tensor file; without it a seeded synthetic image is used.
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Index of the synthetic test image.
    #[arg(long, default_value_t = DEFAULT_TEST_IMAGE)]
    pub image_index: u64,
}

impl ImageArgs {
    fn load(&self, net: &NetworkSpec, seed: u64) -> Result<Tensor, CliError> {
        match &self.image {
            Some(p) => read_tensor(p),
            None => Ok(fixture::synthetic_image(net.input_shape(), seed, self.image_index)),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CalibrationArgs {
    /// Manifest of `<tensor path> <label>` lines; without it a synthetic
    /// set labelled by the software stage is generated.
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    /// Number of correctly predicted images to keep.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
}

impl CalibrationArgs {
    fn load(&self, net: &NetworkSpec, params: &ParameterSet, seed: u64) -> Result<Vec<(Tensor, usize)>, CliError> {
        if self.n == 0 {
            return Err(CliError::Config("--n must be at least 1".into()));
        }
        match &self.calibration {
            Some(p) => read_manifest(p)?.into_iter().map(|(path, label)| Ok((read_tensor(&path)?, label))).collect(),
            None => Ok(fixture::calibration_set(net, params, self.n, seed)?),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EnvelopeArgs {
    /// Envelope widening, in units of the layer's standard deviation.
    #[arg(long, default_value_t = 0.0)]
    pub slack: f64,
    /// Minimum fraction of elements inside the envelope for a layer to pass.
    #[arg(long, default_value_t = 0.95)]
    pub pass_fraction: f64,
}

impl EnvelopeArgs {
    fn validate(&self) -> Result<(), CliError> {
        if !(self.slack.is_finite() && self.slack >= 0.0) {
            return Err(CliError::Config(format!("--slack must be finite and non-negative, got {}", self.slack)));
        }
        if !(0.0..=1.0).contains(&self.pass_fraction) {
            return Err(CliError::Config(format!("--pass-fraction must lie in [0, 1], got {}", self.pass_fraction)));
        }
        Ok(())
    }
}

fn verifier_config(threshold: f64) -> Result<VerifierConfig, CliError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(CliError::Config(format!("--threshold must lie in [0, 1], got {threshold}")));
    }
    Ok(VerifierConfig { threshold, ..VerifierConfig::default() })
}

fn parse_fault(s: &str) -> Result<FaultSpec, String> {
    s.parse()
}

fn parse_mode(s: &str) -> Result<NumericMode, String> {
    s.parse()
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the recorded blobs with element counts and shapes.
    Shapes {
        #[command(flatten)]
        net: NetArgs,
    },
    /// Run one stage on one image and write its dump.
    Run {
        #[command(flatten)]
        net: NetArgs,
        #[command(flatten)]
        image: ImageArgs,
        #[arg(long)]
        stage: Stage,
        /// Defaults to double for sw and float32 otherwise.
        #[arg(long, value_parser = parse_mode)]
        numeric: Option<NumericMode>,
        /// hw stage only.
        #[arg(long, value_parser = parse_fault)]
        fault: Option<FaultSpec>,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build an SPVF from calibration images.
    GenSpvf {
        #[command(flatten)]
        net: NetArgs,
        #[command(flatten)]
        calibration: CalibrationArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a dump against an SPVF envelope.
    CheckSpvf {
        dump: PathBuf,
        #[arg(long)]
        spvf: PathBuf,
        #[command(flatten)]
        envelope: EnvelopeArgs,
    },
    /// Three-way comparison of sw, design and hw dumps.
    Verify {
        sw: PathBuf,
        design: PathBuf,
        hw: PathBuf,
        #[arg(long, default_value_t = 0.90)]
        threshold: f64,
        /// Also print a human-readable table.
        #[arg(long)]
        table: bool,
    },
    /// SPVF generation, software check, design gate, hardware run and
    /// three-way verification.
    Pipeline {
        #[command(flatten)]
        net: NetArgs,
        #[command(flatten)]
        image: ImageArgs,
        #[command(flatten)]
        calibration: CalibrationArgs,
        #[command(flatten)]
        envelope: EnvelopeArgs,
        #[arg(long, value_parser = parse_mode, default_value = "float32")]
        numeric: NumericMode,
        #[arg(long, value_parser = parse_fault)]
        fault: Option<FaultSpec>,
        #[arg(long, default_value_t = 0.90)]
        threshold: f64,
        /// Directory receiving spvf.txt, file_sw.txt, file_design.txt,
        /// file_hw.txt and report.txt.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a bundled topology, seeded parameters, a test image and a
    /// labelled calibration set to a directory.
    Fixture {
        #[arg(long, value_enum, default_value = "lenet")]
        network: Bundled,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Calibration images to write.
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert raw 8-bit pixels (planar, channel-major) to a tensor file.
    ImportRaw {
        raw: PathBuf,
        #[arg(long, default_value_t = 1)]
        channels: usize,
        #[arg(long)]
        height: usize,
        #[arg(long)]
        width: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Runs a parsed command and returns its exit status.
pub fn execute(cmd: Command, stdout: &mut dyn Write) -> Result<u8, CliError> {
    match cmd {
        Command::Shapes { net } => {
            let net = net.network()?;
            let mut text = String::new();
            for (name, count, shape) in infer_shapes(&net) {
                text.push_str(&format!("{name} {count} {shape}\n"));
            }
            write_out(None, &text, stdout)?;
            Ok(0)
        }
        Command::Run { net: net_args, image, stage, numeric, fault, out } => {
            let net = net_args.network()?;
            let params = net_args.parameters(&net)?;
            let image = image.load(&net, net_args.seed)?;
            let mode = numeric.unwrap_or(match stage {
                Stage::Sw => NumericMode::Double,
                _ => NumericMode::Float32,
            });
            let cfg = StageConfig { stage, mode, fault };
            let dump = run_stage(&net, &params, &image, &cfg)?;
            let mut bytes = Vec::new();
            write_blob_dump(&dump, &mut bytes).map_err(|e| CliError::BlobIo(e.into()))?;
            write_out(out.as_deref(), &String::from_utf8_lossy(&bytes), stdout)?;
            Ok(0)
        }
        Command::GenSpvf { net: net_args, calibration, out } => {
            let net = net_args.network()?;
            let params = net_args.parameters(&net)?;
            let images = calibration.load(&net, &params, net_args.seed)?;
            let spvf = generate_spvf(&net, &params, &images, calibration.n).map_err(CliError::Spvf)?;
            write_out(out.as_deref(), &render_spvf(&spvf), stdout)?;
            if out.is_some() {
                write_out(None, &format!("kept {} correctly predicted images\n", spvf.images), stdout)?;
            } else {
                eprintln!("kept {} correctly predicted images", spvf.images);
            }
            Ok(0)
        }
        Command::CheckSpvf { dump, spvf, envelope } => {
            envelope.validate()?;
            let d = read_blob_dump(&read_text(&dump)?)?;
            let s = read_spvf(&read_text(&spvf)?).map_err(CliError::Spvf)?;
            let report = check_blobs(&d, &s, envelope.slack, envelope.pass_fraction).map_err(CliError::Spvf)?;
            write_out(None, &report.render(), stdout)?;
            Ok(if report.pass() { 0 } else { 1 })
        }
        Command::Verify { sw, design, hw, threshold, table } => {
            let cfg = verifier_config(threshold)?;
            let load = |p: &Path| -> Result<_, CliError> { Ok(read_blob_dump(&read_text(p)?)?) };
            let (sw, design, hw) = (load(&sw)?, load(&design)?, load(&hw)?);
            for (d, want) in [(&sw, Stage::Sw), (&design, Stage::Design), (&hw, Stage::Hw)] {
                if d.stage != want {
                    return Err(CliError::Config(format!("expected a {want} dump, got stage {}", d.stage)));
                }
            }
            let report = three_way_compare(&sw, &design, &hw, &cfg)?;
            let advice = recommend_action(&report);
            if table {
                write_out(None, &render_table(&report), stdout)?;
            }
            write_out(None, &render_report(&report, &advice), stdout)?;
            Ok(if advice.is_verified() { 0 } else { 1 })
        }
        Command::Pipeline { net: net_args, image, calibration, envelope, numeric, fault, threshold, out } => {
            envelope.validate()?;
            let verifier = verifier_config(threshold)?;
            let net = net_args.network()?;
            let params = net_args.parameters(&net)?;
            let cfg = PipelineConfig {
                image: image.load(&net, net_args.seed)?,
                calibration: calibration.load(&net, &params, net_args.seed)?,
                net,
                params,
                mode: numeric,
                fault,
                n: calibration.n,
                slack: envelope.slack,
                pass_fraction: envelope.pass_fraction,
                verifier,
                out,
            };
            let outcome = run_pipeline(&cfg)?;
            write_out(None, &outcome.log, stdout)?;
            Ok(outcome.exit_code())
        }
        Command::Fixture { network, seed, n, out } => {
            write_fixture(network, seed, n, &out)?;
            write_out(None, &format!("fixture written to {}\n", out.display()), stdout)?;
            Ok(0)
        }
        Command::ImportRaw { raw, channels, height, width, out } => {
            let bytes = std::fs::read(&raw).map_err(|source| CliError::Io { path: raw.clone(), source })?;
            let t = import_raw(&bytes, Shape::new(channels, height, width))
                .map_err(|m| CliError::Config(format!("{}: {m}", raw.display())))?;
            write_out(out.as_deref(), &render_tensor(&t), stdout)?;
            Ok(0)
        }
    }
}

/// Layout: `topology.txt`, `params.txt`, `image.tensor`,
/// `calibration/manifest.txt` and `calibration/NNNN.tensor`.
pub fn write_fixture(network: Bundled, seed: u64, n: usize, dir: &Path) -> Result<(), CliError> {
    let (topology, net) = match network {
        Bundled::Lenet => (fixture::LENET_TOPOLOGY, fixture::lenet()),
        Bundled::Cifar => (fixture::CIFAR_TOPOLOGY, fixture::cifar()),
    };
    let params = fixture::synthetic_parameters(&net, seed);
    let cal_dir = dir.join("calibration");
    std::fs::create_dir_all(&cal_dir).map_err(|source| CliError::Io { path: cal_dir.clone(), source })?;
    let put = |p: PathBuf, s: &str| std::fs::write(&p, s).map_err(|source| CliError::Io { path: p, source });
    put(dir.join("topology.txt"), topology)?;
    put(dir.join("params.txt"), &write_parameters(&params))?;
    put(dir.join("image.tensor"), &render_tensor(&fixture::synthetic_image(net.input_shape(), seed, DEFAULT_TEST_IMAGE)))?;
    let mut manifest = String::new();
    for (i, (image, label)) in fixture::calibration_set(&net, &params, n, seed)?.into_iter().enumerate() {
        let name = format!("{i:04}.tensor");
        put(cal_dir.join(&name), &render_tensor(&image))?;
        manifest.push_str(&format!("{name} {label}\n"));
    }
    put(cal_dir.join("manifest.txt"), &manifest)
}

/// Parses `args` (program name first), runs the command and maps errors to
/// exit codes, printing them to stderr.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command, stdout) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
