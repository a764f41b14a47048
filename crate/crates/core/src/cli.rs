//! Command-line front end: PGM I/O, pipeline orchestration and JSON/CSV
//! output.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use image::codecs::pnm::{PnmDecoder, PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{simulate_with_limit, Circuit, Fusion, GateCounts, StateVector};
use crate::encoders::{self, decode, BlockParams, Encoding, EncodingLayout, Method};
use crate::error::{Error, Result};
use crate::linalg::{ceil_log2, next_pow2};
use crate::metrics::{self, QualityReport};
use crate::optim::{self, OptConfig, Trace};
use crate::synthesis::SynthesisReport;
use crate::tensor::{contract, quantize_image, tt_svd, Image};

pub const DEFAULT_QUBIT_LIMIT: usize = 26;
pub const THREADS_ENV: &str = "TNQE_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FitMode {
    /// Truncated TT-SVD.
    Svd,
    /// TT-SVD followed by Adam on MSE.
    Gradient,
}

/// Everything `encode` needs besides the input image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobConfig {
    pub method: Method,
    pub rank: usize,
    /// Layers per block; unitary only.
    pub layers: Option<usize>,
    pub fit: FitMode,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub seed: u64,
}

impl JobConfig {
    pub fn new(method: Method) -> Self {
        JobConfig {
            method,
            rank: 4,
            layers: (method == Method::Unitary).then_some(4),
            fit: FitMode::Svd,
            epochs: None,
            lr: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::invalid("--rank must be at least 1"));
        }
        match (self.method, self.layers) {
            (Method::Unitary, None) => return Err(Error::invalid("--layers is required for the unitary method")),
            (Method::Unitary, Some(0)) => return Err(Error::invalid("--layers must be at least 1")),
            _ => {}
        }
        self.optimizer_config().validate()
    }

    /// Training configuration after applying the epoch/rate/seed overrides.
    pub fn optimizer_config(&self) -> OptConfig {
        let mut cfg = match self.method {
            Method::Unitary => OptConfig::unitary_default(),
            _ => OptConfig::qtt_default(),
        };
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        if let Some(lr) = self.lr {
            cfg.learning_rate = lr;
            if let optim::Schedule::OneCycle { max_rate } = &mut cfg.schedule {
                *max_rate = lr;
            }
        }
        cfg.seed = self.seed;
        cfg
    }

    fn trains(&self) -> bool {
        match self.method {
            Method::Unitary => true,
            Method::Full | Method::Core => self.fit == FitMode::Gradient,
            Method::Amplitude => false,
        }
    }
}

/// Summary written to `report.json`.
#[derive(Debug, Clone, Serialize)]
pub struct EncodeReport {
    pub method: Method,
    pub size: usize,
    pub rank: Option<usize>,
    pub layers: Option<usize>,
    pub fit: Option<FitMode>,
    pub qubits: usize,
    /// Logical depth counting every gate.
    pub depth: usize,
    /// Logical depth with adjacent single-qubit gates fused.
    pub fused_depth: usize,
    pub cnot: usize,
    /// Fused single-qubit units.
    pub single_qubit: usize,
    /// Fused single-qubit units plus CNOTs.
    pub ops: usize,
    pub unfused: GateCounts,
    pub fused: GateCounts,
    pub training: Option<TrainingSummary>,
    pub synthesis: Vec<SynthesisReport>,
    pub version: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainingSummary {
    pub epochs: usize,
    pub initial_loss: f64,
    pub best_loss: f64,
    pub best_epoch: usize,
}

impl From<&Trace> for TrainingSummary {
    fn from(t: &Trace) -> Self {
        TrainingSummary {
            epochs: t.losses.len() - 1,
            initial_loss: t.initial_loss,
            best_loss: t.best_loss,
            best_epoch: t.best_epoch,
        }
    }
}

/// Result of running one job on an in-memory image.
#[derive(Debug, Clone)]
pub struct EncodeOutput {
    pub encoding: Encoding,
    pub report: EncodeReport,
    pub trace: Option<Trace>,
    pub blocks: Option<Vec<BlockParams>>,
}

pub fn report_for(enc: &Encoding, job: Option<&JobConfig>, trace: Option<&Trace>) -> EncodeReport {
    let c = &enc.circuit;
    let fused = c.counts(Fusion::Fused);
    let method = enc.layout.method;
    EncodeReport {
        method,
        size: enc.layout.size,
        rank: job.filter(|_| method != Method::Amplitude).map(|j| j.rank),
        layers: job.and_then(|j| j.layers).filter(|_| method == Method::Unitary),
        fit: job.filter(|_| matches!(method, Method::Full | Method::Core)).map(|j| j.fit),
        qubits: c.n_qubits(),
        depth: c.depth(),
        fused_depth: c.fused_depth(),
        cnot: fused.cnot,
        single_qubit: fused.single_qubit,
        ops: fused.total,
        unfused: c.counts(Fusion::Unfused),
        fused,
        training: trace.map(TrainingSummary::from),
        synthesis: enc.synthesis.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
    }
}

/// Builds the circuit for `img` according to `job`.
pub fn encode_image(img: &Image, job: &JobConfig) -> Result<EncodeOutput> {
    job.validate()?;
    let cfg = job.optimizer_config();
    let (encoding, trace, blocks) = match job.method {
        Method::Amplitude => (encoders::encode_amplitude(img)?, None, None),
        Method::Full | Method::Core => {
            let (cores, trace) = match job.fit {
                FitMode::Svd => (tt_svd(&quantize_image(img), job.rank, 0.0)?, None),
                FitMode::Gradient => {
                    let fit = optim::fit_qtt(img, job.rank, &cfg)?;
                    (fit.cores, Some(fit.trace))
                }
            };
            let enc = if job.method == Method::Full { encoders::encode_full(&cores)? } else { encoders::encode_core(&cores)? };
            (enc, trace, None)
        }
        Method::Unitary => {
            let layers = job.layers.expect("validated");
            let fit = optim::fit_unitary(img, job.rank, layers, &cfg)?;
            let enc = encoders::encode_unitary(&fit.blocks, fit.mass)?;
            (enc, Some(fit.trace), Some(fit.blocks))
        }
    };
    let report = report_for(&encoding, Some(job), trace.as_ref());
    Ok(EncodeOutput { encoding, report, trace, blocks })
}

fn image_error(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::invalid(format!("{}: {other}", path.display())),
    }
}

/// Reads an 8-bit P2/P5 graymap as values in `[0, 1]`. Non-square or
/// non-power-of-two inputs are zero-padded (centred) when `pad` is set.
pub fn read_pgm(path: &Path, pad: bool) -> Result<Image> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let dec = PnmDecoder::new(BufReader::new(file)).map_err(|e| image_error(path, e))?;
    let header = dec.header();
    if header.as_graymap().is_none() {
        return Err(Error::invalid(format!("{}: expected a P2 or P5 graymap", path.display())));
    }
    let maxval = header.maximal_sample();
    if maxval != 255 {
        return Err(Error::invalid(format!("{}: expected 8-bit samples (maxval 255), found maxval {maxval}", path.display())));
    }
    let (w, h) = (header.width() as usize, header.height() as usize);
    let img = DynamicImage::from_decoder(dec).map_err(|e| image_error(path, e))?.into_luma8();
    let values: Vec<f64> = img.as_raw().iter().map(|&v| f64::from(v) / 255.0).collect();
    let side = w.max(h);
    if w == h && side.is_power_of_two() {
        return Image::new(side, values);
    }
    if !pad {
        return Err(Error::invalid(format!(
            "{}: image is {w}x{h}; a square power-of-two size is required (use --pad to zero-pad)",
            path.display()
        )));
    }
    let s = next_pow2(side);
    let (top, left) = ((s - h) / 2, (s - w) / 2);
    let mut pixels = vec![0.0; s * s];
    for r in 0..h {
        for c in 0..w {
            pixels[(r + top) * s + c + left] = values[r * w + c];
        }
    }
    Image::new(s, pixels)
}

/// Writes a binary (P5) 8-bit graymap, clamping to `[0, 1]`.
pub fn write_pgm(path: &Path, img: &Image) -> Result<()> {
    let s = img.size();
    let bytes: Vec<u8> = img.pixels().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    PnmEncoder::new(&mut w)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(&bytes, s as u32, s as u32, ExtendedColorType::L8)
        .map_err(|e| image_error(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Json { path: path.into(), source: e })?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Json { path: path.into(), source: e })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Contents of `state.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFile {
    pub qubits: usize,
    pub amplitudes: Vec<[f64; 2]>,
}

impl StateFile {
    pub fn from_state(s: &StateVector) -> Self {
        StateFile { qubits: s.n_qubits(), amplitudes: s.amplitudes().iter().map(|z| [z.re, z.im]).collect() }
    }

    pub fn to_state(&self) -> Result<StateVector> {
        if self.amplitudes.len() != 1usize.checked_shl(self.qubits as u32).unwrap_or(0) {
            return Err(Error::structural(format!(
                "state declares {} qubits but has {} amplitudes",
                self.qubits,
                self.amplitudes.len()
            )));
        }
        StateVector::from_amplitudes(self.amplitudes.iter().map(|a| Complex64::new(a[0], a[1])).collect())
    }
}

/// Full-precision companion of `recon.pgm`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconFile {
    pub size: usize,
    pub pixels: Vec<f64>,
}

/// Writes `circuit.json`, `layout.json` and `report.json`, plus
/// `trajectory.json` and (unitary) `params.json` when training ran.
pub fn cmd_encode(input: &Path, job: &JobConfig, pad: bool, out_dir: &Path) -> Result<EncodeReport> {
    job.validate()?;
    let img = read_pgm(input, pad)?;
    let out = encode_image(&img, job)?;
    ensure_dir(out_dir)?;
    write_json(&out_dir.join("circuit.json"), &out.encoding.circuit)?;
    write_json(&out_dir.join("layout.json"), &out.encoding.layout)?;
    write_json(&out_dir.join("report.json"), &out.report)?;
    if let Some(t) = &out.trace {
        write_json(&out_dir.join("trajectory.json"), &t.losses)?;
    }
    if let Some(b) = &out.blocks {
        write_json(&out_dir.join("params.json"), b)?;
    }
    if job.trains() {
        log::info!("training finished with loss {:.6e}", out.report.training.as_ref().map_or(f64::NAN, |t| t.best_loss));
    }
    Ok(out.report)
}

/// Simulates `circuit.json` and writes `state.json`.
pub fn cmd_simulate(circuit: &Path, out_dir: &Path, qubit_limit: usize) -> Result<StateFile> {
    let c: Circuit = read_json(circuit)?;
    c.validate()?;
    let state = simulate_with_limit(&c, qubit_limit)?;
    let file = StateFile::from_state(&state);
    ensure_dir(out_dir)?;
    write_json(&out_dir.join("state.json"), &file)?;
    Ok(file)
}

/// Decodes a simulated state and writes `recon.pgm` and `recon.json`.
pub fn cmd_reconstruct(state: &Path, layout: &Path, out_dir: &Path) -> Result<Image> {
    let s: StateFile = read_json(state)?;
    let l: EncodingLayout = read_json(layout)?;
    let img = decode(&s.to_state()?, &l)?;
    ensure_dir(out_dir)?;
    write_pgm(&out_dir.join("recon.pgm"), &img)?;
    write_json(&out_dir.join("recon.json"), &ReconFile { size: img.size(), pixels: img.pixels().to_vec() })?;
    Ok(img)
}

/// Compares two PGM files and writes `metrics.json`.
pub fn cmd_metrics(reference: &Path, test: &Path, pad: bool, out_dir: &Path) -> Result<QualityReport> {
    let r = read_pgm(reference, pad)?;
    let t = read_pgm(test, pad)?;
    let q = metrics::evaluate(&r, &t)?;
    ensure_dir(out_dir)?;
    write_json(&out_dir.join("metrics.json"), &q)?;
    Ok(q)
}

/// One row of `scaling.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub method: Method,
    pub size: usize,
    pub qubits: usize,
    pub depth: usize,
    pub ops: usize,
    pub cnot: usize,
    pub simulated: bool,
    /// Decode error against the classical reference, when simulated.
    pub max_abs_error: Option<f64>,
}

/// Seeded image with pixels in `[0.05, 1)`, used for the scaling study.
pub fn synthetic_image(size: usize, seed: u64) -> Result<Image> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::from_fn(size, |_, _| rng.gen_range(0.05..1.0))
}

fn scaling_job(method: Method, size: usize, rank: usize, layers: usize) -> Result<(Encoding, Image)> {
    let img = synthetic_image(size, size as u64)?;
    Ok(match method {
        Method::Amplitude => (encoders::encode_amplitude(&img)?, img),
        Method::Full | Method::Core => {
            let cores = tt_svd(&quantize_image(&img), rank, 0.0)?;
            let want = contract(&cores)?;
            let enc = if method == Method::Full { encoders::encode_full(&cores)? } else { encoders::encode_core(&cores)? };
            (enc, want)
        }
        Method::Unitary => {
            let nb = ceil_log2(rank);
            let len = BlockParams::len_for(nb, layers);
            let blocks = (0..img.levels())
                .map(|k| BlockParams::new(nb, layers, optim::initial_angles(len, k as u64)))
                .collect::<Result<Vec<_>>>()?;
            let want = encoders::unitary_reconstruction(&blocks, img.sum())?;
            (encoders::encode_unitary(&blocks, img.sum())?, want)
        }
    })
}

/// Builds every (method, size) circuit, simulating those within
/// `qubit_limit`, and returns rows in input order.
pub fn scaling_rows(sizes: &[usize], methods: &[Method], rank: usize, layers: usize, qubit_limit: usize) -> Result<Vec<ScalingRow>> {
    if let Some(s) = sizes.iter().find(|s| !s.is_power_of_two() || **s < 2) {
        return Err(Error::invalid(format!("size {s} is not a power of two ≥ 2")));
    }
    if rank == 0 || layers == 0 {
        return Err(Error::invalid("rank and layers must be at least 1"));
    }
    let jobs: Vec<(Method, usize)> = methods.iter().flat_map(|&m| sizes.iter().map(move |&s| (m, s))).collect();
    let built: Vec<(Encoding, Image)> =
        jobs.par_iter().map(|&(m, s)| scaling_job(m, s, rank, layers)).collect::<Result<_>>()?;
    built
        .iter()
        .zip(&jobs)
        .map(|((enc, want), &(method, size))| {
            let c = &enc.circuit;
            let fused = c.counts(Fusion::Fused);
            let simulated = c.n_qubits() <= qubit_limit;
            let max_abs_error = if simulated {
                let got = decode(&simulate_with_limit(c, qubit_limit)?, &enc.layout)?;
                Some(got.pixels().iter().zip(want.pixels()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            } else {
                None
            };
            Ok(ScalingRow {
                method,
                size,
                qubits: c.n_qubits(),
                depth: c.fused_depth(),
                ops: fused.total,
                cnot: fused.cnot,
                simulated,
                max_abs_error,
            })
        })
        .collect()
}

pub fn cmd_scaling(
    sizes: &[usize],
    methods: &[Method],
    rank: usize,
    layers: usize,
    qubit_limit: usize,
    out_dir: &Path,
) -> Result<Vec<ScalingRow>> {
    let rows = scaling_rows(sizes, methods, rank, layers, qubit_limit)?;
    ensure_dir(out_dir)?;
    let path = out_dir.join("scaling.csv");
    let csv_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(&path, io),
        other => Error::invalid(format!("{}: {other:?}", path.display())),
    };
    let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
    for r in &rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(rows)
}

#[derive(Debug, Parser)]
#[command(name = "tnqe", version, about = "Compile images into quantum encoding circuits via quantized tensor trains")]
pub struct Cli {
    /// Refuse to simulate circuits wider than this.
    #[arg(long, global = true, default_value_t = DEFAULT_QUBIT_LIMIT)]
    pub qubit_limit: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Encode a PGM image into circuit.json, layout.json and report.json.
    Encode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_parser = parse_method)]
        method: Method,
        #[arg(long, default_value_t = 4)]
        rank: usize,
        /// Layers per block (unitary only; default 4).
        #[arg(long)]
        layers: Option<usize>,
        #[arg(long, value_enum, default_value_t = FitMode::Svd)]
        fit: FitMode,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Zero-pad non-square or non-power-of-two inputs.
        #[arg(long)]
        pad: bool,
    },
    /// Simulate circuit.json exactly and write state.json.
    Simulate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Decode state.json with layout.json into recon.pgm and recon.json.
    Reconstruct {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        layout: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Compare a test image against a reference and write metrics.json.
    Metrics {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long)]
        pad: bool,
    },
    /// Count resources across image sizes and write scaling.csv.
    Scaling {
        #[arg(long, value_delimiter = ',', default_values_t = [4usize, 8, 16, 32, 64, 128, 256, 512])]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', value_parser = parse_method, default_value = "amplitude,full,core,unitary")]
        methods: Vec<Method>,
        #[arg(long, default_value_t = 4)]
        rank: usize,
        #[arg(long, default_value_t = 4)]
        layers: usize,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse::<Method>().map_err(|e| e.to_string())
}

/// Exit status for each error kind.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidInput(_) => 2,
        Error::Structural(_) => 3,
        Error::Resource(_) => 4,
        Error::Numerical(_) => 5,
        Error::Io { .. } => 6,
        Error::Json { .. } => 7,
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::invalid(format!("{THREADS_ENV} must be a positive integer, got '{v}'")))?;
    // A pool that is already initialised (e.g. repeated calls in tests) is fine.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn execute(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Encode { input, method, rank, layers, fit, epochs, lr, seed, out_dir, pad } => {
            let mut job = JobConfig::new(method);
            job.rank = rank;
            if method == Method::Unitary {
                job.layers = Some(layers.unwrap_or(4));
            } else if layers.is_some() {
                return Err(Error::invalid("--layers only applies to the unitary method"));
            }
            job.fit = fit;
            job.epochs = epochs;
            job.lr = lr;
            job.seed = seed;
            cmd_encode(&input, &job, pad, &out_dir).map(|_| ())
        }
        Command::Simulate { input, out_dir } => cmd_simulate(&input, &out_dir, cli.qubit_limit).map(|_| ()),
        Command::Reconstruct { input, layout, out_dir } => cmd_reconstruct(&input, &layout, &out_dir).map(|_| ()),
        Command::Metrics { reference, input, out_dir, pad } => cmd_metrics(&reference, &input, pad, &out_dir).map(|_| ()),
        Command::Scaling { sizes, methods, rank, layers, out_dir } => {
            cmd_scaling(&sizes, &methods, rank, layers, cli.qubit_limit, &out_dir).map(|_| ())
        }
    }
}

/// Parses `args`, runs the command and returns the process exit status.
/// Errors are reported on stderr as a single `error[kind]: message` line.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let text = e.to_string();
            let line = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error[usage]: {line}");
            return 2;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {}", e.kind(), e.to_string().replace('\n', " "));
            exit_code(&e)
        }
    }
}
