//! `beamlearn` command-line driver.
//!
//! Exit codes: 0 success, 1 verification failed, 2 stopped at the iteration
//! cap without converging, 64 usage, 66 input/output file, 70 numeric failure.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use beamlearn::channel::{
    load_samples, pad_missing_antennas, sample, save_samples, ChannelModel, SampleSet,
};
use beamlearn::io::{load_matrix, save_matrix, MatrixFormat};
use beamlearn::learn::{learn, Algorithm, Init, LearnConfig};
use beamlearn::linalg::{dft2_matrix, dft_matrix, UnitaryTransform};
use beamlearn::objective::ObjectiveEvaluator;
use beamlearn::optimality::{suite_csv, verify_dft_suite};
use beamlearn::sim::{simulate_ber, sparsity_report, Constellation, Detector, Estimator, SimConfig};
use beamlearn::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};

const EXIT_FAILED: u8 = 1;
const EXIT_NOT_CONVERGED: u8 = 2;
const EXIT_USAGE: u8 = 64;
const EXIT_NOINPUT: u8 = 66;
const EXIT_SOFTWARE: u8 = 70;

#[derive(Parser, Debug)]
#[command(name = "beamlearn", version, about = "Learn and evaluate unitary beamspace transforms")]
#[command(args_override_self = true)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Base seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Cap on worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Flat key=value file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output path.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Learn a unitary transform by MSP or coordinate ascent.
    Learn(LearnArgs),
    /// Check stationarity and local optimality of the DFT.
    VerifyDft(VerifyArgs),
    /// Mean l4 sparsity of test channels under several transforms.
    EvalSparsity(SparsityArgs),
    /// Uncoded BER versus SNR for an uplink MU-MIMO system.
    SimulateBer(SimArgs),
    /// Draw channel vectors from a model and store them.
    GenChannels(GenArgs),
}

#[derive(Debug, Clone, PartialEq)]
enum ModelSpec {
    Uniform,
    Multipath,
    File(PathBuf),
}

impl FromStr for ModelSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "uniform" => Ok(ModelSpec::Uniform),
            "multipath" => Ok(ModelSpec::Multipath),
            _ => match s.strip_prefix("file:") {
                Some(p) if !p.is_empty() => Ok(ModelSpec::File(PathBuf::from(p))),
                _ => Err(format!("expected uniform, multipath or file:PATH, got {s:?}")),
            },
        }
    }
}

impl std::fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelSpec::Uniform => f.write_str("uniform"),
            ModelSpec::Multipath => f.write_str("multipath"),
            ModelSpec::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    /// uniform | multipath | file:PATH
    #[arg(long)]
    model: ModelSpec,
    /// Paths per multipath channel.
    #[arg(long = "L", default_value_t = 3)]
    paths: usize,
    /// Comma-separated antenna indices missing from a file model; their
    /// rows are zero-padded.
    #[arg(long, value_delimiter = ',')]
    pad_missing: Vec<usize>,
}

impl ModelArgs {
    fn load_file(&self, path: &Path, dim: Option<usize>) -> beamlearn::Result<SampleSet> {
        let set = load_samples(path, MatrixFormat::from_path(path))?;
        if self.pad_missing.is_empty() {
            return Ok(set);
        }
        let full = dim.unwrap_or(set.dim() + self.pad_missing.len());
        pad_missing_antennas(&set, &self.pad_missing, full)
    }

    fn channel_model(&self, dim: usize) -> beamlearn::Result<ChannelModel> {
        let m = match &self.model {
            ModelSpec::Uniform => ChannelModel::uniform(dim)?,
            ModelSpec::Multipath => ChannelModel::multipath(dim, self.paths)?,
            ModelSpec::File(p) => ChannelModel::Empirical(self.load_file(p, Some(dim))?),
        };
        if m.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: format!("{dim} antennas"),
                got: format!("{} in {}", m.dim(), self.model),
            });
        }
        Ok(m)
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum AlgoArg {
    Msp,
    Ca,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq)]
enum ModeArg {
    /// Closed-form expectation (uniform model only).
    Exact,
    /// Average over drawn samples.
    Empirical,
}

#[derive(Args, Debug)]
struct LearnArgs {
    #[arg(long)]
    algo: AlgoArg,
    #[command(flatten)]
    model: ModelArgs,
    /// Number of antennas B.
    #[arg(long)]
    dim: usize,
    /// dft | identity | random | PATH
    #[arg(long, default_value = "dft")]
    init: String,
    /// Objective evaluation; defaults to exact for the uniform model.
    #[arg(long)]
    mode: Option<ModeArg>,
    /// Samples drawn for empirical evaluation of a synthetic model.
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 64)]
    grid_points: usize,
    #[arg(long, default_value_t = 4)]
    newton_steps: usize,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Comma-separated antenna counts.
    #[arg(long, value_delimiter = ',', required = true)]
    dims: Vec<usize>,
}

#[derive(Args, Debug)]
struct SparsityArgs {
    /// Test channel matrix (one column per sample).
    #[arg(long)]
    test: PathBuf,
    /// Comma-separated transforms: dft, identity, dft2:RxC or a matrix file.
    #[arg(long, value_delimiter = ',', default_value = "dft")]
    transforms: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pad_missing: Vec<usize>,
}

#[derive(Args, Debug)]
struct SimArgs {
    /// Base-station antennas.
    #[arg(long = "B")]
    antennas: usize,
    /// Users.
    #[arg(long = "U")]
    users: usize,
    /// start:step:stop in dB, or a comma-separated list.
    #[arg(long, allow_hyphen_values = true)]
    snr: String,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// antenna | beamspace | le:DENSITY
    #[arg(long, default_value = "antenna")]
    detector: String,
    /// perfect | ls | ls-denoise
    #[arg(long, default_value = "perfect")]
    estimator: String,
    /// dft | identity | dft2:RxC | PATH
    #[arg(long, default_value = "dft")]
    transform: String,
    #[arg(long, default_value = "qpsk")]
    constellation: String,
    #[arg(long, default_value = "multipath")]
    model: ModelSpec,
    #[arg(long = "L", default_value_t = 3)]
    paths: usize,
    #[arg(long, value_delimiter = ',')]
    pad_missing: Vec<usize>,
    /// Cap the user power spread at 6 dB.
    #[arg(long)]
    power_control: bool,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    dim: usize,
    #[arg(long)]
    count: usize,
}

/// Failure carrying its exit code.
#[derive(Debug)]
struct Fail {
    code: u8,
    message: String,
}

impl Fail {
    fn usage(message: impl Into<String>) -> Self {
        Fail { code: EXIT_USAGE, message: message.into() }
    }

    fn file(message: impl Into<String>) -> Self {
        Fail { code: EXIT_NOINPUT, message: message.into() }
    }
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io(_) | Error::Parse(_) | Error::NonFinite { .. } | Error::NotUnitary { .. } => {
                EXIT_NOINPUT
            }
            Error::Numeric(_) | Error::SingularInput { .. } | Error::DegenerateGradient { .. } => {
                EXIT_SOFTWARE
            }
            _ => EXIT_USAGE,
        };
        Fail { code, message: e.to_string() }
    }
}

type CmdResult = Result<u8, Fail>;

const SUBCOMMANDS: [&str; 5] = ["learn", "verify-dft", "eval-sparsity", "simulate-ber", "gen-channels"];

fn config_path(args: &[String]) -> Option<String> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(p.to_string());
        }
    }
    None
}

/// Turn `key=value` lines into `--key value` tokens. `true` becomes a bare
/// switch and `false` drops the key.
fn config_tokens(text: &str) -> Result<Vec<String>, Fail> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Fail::usage(format!("config line {}: expected key=value", n + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        match v {
            "false" => {}
            "true" => out.push(format!("--{k}")),
            _ => {
                out.push(format!("--{k}"));
                out.push(v.to_string());
            }
        }
    }
    Ok(out)
}

/// Splice config-file tokens in right after the subcommand so that flags
/// given on the command line (which come later) win.
fn expand_config(mut args: Vec<String>) -> Result<Vec<String>, Fail> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path).map_err(|e| Fail::file(format!("config {path}: {e}")))?;
    let tokens = config_tokens(&text)?;
    let at = args
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.as_str()))
        .map_or(args.len(), |i| i + 1);
    args.splice(at..at, tokens);
    Ok(args)
}

fn parse_snr_grid(s: &str) -> Result<Vec<f64>, Fail> {
    let num = |t: &str| {
        t.trim()
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| Fail::usage(format!("bad SNR value {t:?}")))
    };
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [start, step, stop] => {
            let (start, step, stop) = (num(start)?, num(step)?, num(stop)?);
            if !(step > 0.0) || stop < start {
                return Err(Fail::usage(format!("bad SNR range {s:?}")));
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            Ok((0..=n).map(|i| start + step * i as f64).collect())
        }
        [_] => s.split(',').map(num).collect(),
        _ => Err(Fail::usage(format!("expected start:step:stop, got {s:?}"))),
    }
}

fn resolve_transform(spec: &str, dim: usize) -> Result<UnitaryTransform, Fail> {
    let a = match spec {
        "dft" => dft_matrix(dim)?,
        "identity" => UnitaryTransform::identity(dim)?,
        _ => {
            if let Some(shape) = spec.strip_prefix("dft2:") {
                let (r, c) = shape
                    .split_once('x')
                    .and_then(|(r, c)| Some((r.parse().ok()?, c.parse().ok()?)))
                    .ok_or_else(|| Fail::usage(format!("expected dft2:RxC, got {spec:?}")))?;
                dft2_matrix(r, c)?
            } else {
                let p = Path::new(spec);
                UnitaryTransform::new_reprojected(load_matrix(p, MatrixFormat::from_path(p))?)?
            }
        }
    };
    if a.dim() != dim {
        return Err(Fail::usage(format!(
            "transform {spec} is {0}x{0}, expected {dim}x{dim}",
            a.dim()
        )));
    }
    Ok(a)
}

fn require_input(p: &Path) -> Result<(), Fail> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Fail::file(format!("cannot read {}", p.display())))
    }
}

fn require_output_dir(p: &Path) -> Result<(), Fail> {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() && !d.is_dir() => {
            Err(Fail::file(format!("directory {} does not exist", d.display())))
        }
        _ => Ok(()),
    }
}

fn with_suffix(p: &Path, suffix: &str) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn header(command: &str, pairs: &[(String, String)]) -> String {
    let mut s = format!("# command={command}\n");
    for (k, v) in pairs {
        let _ = writeln!(s, "# {k}={v}");
    }
    s
}

fn write_text(p: &Path, text: &str) -> Result<(), Fail> {
    fs::write(p, text).map_err(|e| Fail::file(format!("{}: {e}", p.display())))
}

fn cmd_learn(args: &LearnArgs, common: &Common) -> CmdResult {
    if let ModelSpec::File(p) = &args.model.model {
        require_input(p)?;
    }
    let init = match args.init.as_str() {
        "dft" => Init::Dft,
        "identity" => Init::Identity,
        "random" => Init::RandomUnitary,
        path => {
            require_input(Path::new(path))?;
            Init::FromFile(PathBuf::from(path))
        }
    };
    if let Some(out) = &common.out {
        require_output_dir(out)?;
    }
    let mode = args.mode.unwrap_or(match args.model.model {
        ModelSpec::Uniform => ModeArg::Exact,
        _ => ModeArg::Empirical,
    });
    let ev = match (&args.model.model, mode) {
        (ModelSpec::Uniform, ModeArg::Exact) => ObjectiveEvaluator::exact_uniform(args.dim)?,
        (_, ModeArg::Exact) => {
            return Err(Fail::usage("exact evaluation needs --model uniform"));
        }
        (ModelSpec::File(p), _) => {
            let set = args.model.load_file(p, Some(args.dim))?;
            if set.dim() != args.dim {
                return Err(Fail::usage(format!(
                    "{} holds {}-antenna channels, --dim is {}",
                    p.display(),
                    set.dim(),
                    args.dim
                )));
            }
            ObjectiveEvaluator::empirical(set)?
        }
        _ => {
            let model = args.model.channel_model(args.dim)?;
            ObjectiveEvaluator::monte_carlo(model, args.samples, common.seed)?
        }
    };
    let cfg = LearnConfig {
        algorithm: match args.algo {
            AlgoArg::Msp => Algorithm::Msp,
            AlgoArg::Ca => Algorithm::Ca,
        },
        max_iterations: args.max_iter,
        convergence_tol: args.tol,
        seed: common.seed,
        init,
        grid_points: args.grid_points,
        newton_steps: args.newton_steps,
    };
    let report = learn(&ev, &cfg)?;
    let mut kv = header(
        "learn",
        &[
            ("model".into(), args.model.model.to_string()),
            ("L".into(), args.model.paths.to_string()),
            ("mode".into(), format!("{mode:?}").to_lowercase()),
            ("samples".into(), args.samples.to_string()),
            ("init".into(), args.init.clone()),
            ("tol".into(), args.tol.to_string()),
            ("max_iter".into(), args.max_iter.to_string()),
            ("seed".into(), common.seed.to_string()),
        ],
    );
    kv.push_str(&report.to_key_value());
    print!("{kv}");
    if let Some(out) = &common.out {
        save_matrix(out, report.final_transform.matrix(), MatrixFormat::from_path(out))?;
        write_text(&with_suffix(out, ".report.txt"), &kv)?;
        let trace = format!("{}{}", header("learn", &[]), report.trace_csv());
        write_text(&with_suffix(out, ".trace.csv"), &trace)?;
    }
    Ok(if report.converged { 0 } else { EXIT_NOT_CONVERGED })
}

fn cmd_verify(args: &VerifyArgs, common: &Common) -> CmdResult {
    if let Some(b) = args.dims.iter().find(|b| **b < 2) {
        return Err(Fail::usage(format!("antenna counts must be at least 2, got {b}")));
    }
    if let Some(out) = &common.out {
        require_output_dir(out)?;
    }
    let checks = verify_dft_suite(&args.dims)?;
    let dims: Vec<String> = args.dims.iter().map(|b| b.to_string()).collect();
    let csv = format!(
        "{}{}",
        header("verify-dft", &[("dims".into(), dims.join(","))]),
        suite_csv(&checks)
    );
    print!("{csv}");
    if let Some(out) = &common.out {
        write_text(out, &csv)?;
    }
    Ok(if checks.iter().all(|c| c.passed()) { 0 } else { EXIT_FAILED })
}

fn cmd_sparsity(args: &SparsityArgs, common: &Common) -> CmdResult {
    require_input(&args.test)?;
    for t in &args.transforms {
        if !matches!(t.as_str(), "dft" | "identity") && !t.starts_with("dft2:") {
            require_input(Path::new(t))?;
        }
    }
    if let Some(out) = &common.out {
        require_output_dir(out)?;
    }
    let mut set = load_samples(&args.test, MatrixFormat::from_path(&args.test))?;
    if !args.pad_missing.is_empty() {
        let full = set.dim() + args.pad_missing.len();
        set = pad_missing_antennas(&set, &args.pad_missing, full)?;
    }
    let transforms = args
        .transforms
        .iter()
        .map(|t| Ok((t.clone(), resolve_transform(t, set.dim())?)))
        .collect::<Result<Vec<_>, Fail>>()?;
    let report = sparsity_report(&set, &transforms)?;
    let csv = format!(
        "{}{}",
        header(
            "eval-sparsity",
            &[
                ("test".into(), args.test.display().to_string()),
                ("samples".into(), set.len().to_string()),
            ]
        ),
        report.to_csv()
    );
    print!("{csv}");
    if let Some(out) = &common.out {
        write_text(out, &csv)?;
    }
    Ok(0)
}

fn parse_detector(s: &str) -> Result<Detector, Fail> {
    match s {
        "antenna" => Ok(Detector::AntennaLmmse),
        "beamspace" => Ok(Detector::BeamspaceLmmse),
        _ => s
            .strip_prefix("le:")
            .and_then(|d| d.parse::<f64>().ok())
            .map(|density| Detector::BeamspaceLe { density })
            .ok_or_else(|| Fail::usage(format!("expected antenna, beamspace or le:DENSITY, got {s:?}"))),
    }
}

fn cmd_simulate(args: &SimArgs, common: &Common) -> CmdResult {
    if let ModelSpec::File(p) = &args.model {
        require_input(p)?;
    }
    if let Some(out) = &common.out {
        require_output_dir(out)?;
    }
    let snr = parse_snr_grid(&args.snr)?;
    let mut cfg = SimConfig::new(args.antennas, args.users, snr, args.trials)?;
    cfg.detector = parse_detector(&args.detector)?;
    cfg.estimator = match args.estimator.as_str() {
        "perfect" => Estimator::PerfectCsi,
        "ls" => Estimator::PilotLs,
        "ls-denoise" => Estimator::PilotLsDenoise,
        e => return Err(Fail::usage(format!("unknown estimator {e:?}"))),
    };
    cfg.constellation = match args.constellation.as_str() {
        "qpsk" => Constellation::Qpsk,
        "16qam" => Constellation::Qam16,
        c => return Err(Fail::usage(format!("unknown constellation {c:?}"))),
    };
    cfg.transform = resolve_transform(&args.transform, args.antennas)?;
    cfg.seed = common.seed;
    cfg.power_control = args.power_control;
    let model = ModelArgs {
        model: args.model.clone(),
        paths: args.paths,
        pad_missing: args.pad_missing.clone(),
    }
    .channel_model(args.antennas)?;
    let report = simulate_ber(&cfg, &model)?;
    let mut meta = vec![
        ("model".to_string(), args.model.to_string()),
        ("L".into(), args.paths.to_string()),
        ("transform".into(), args.transform.clone()),
        ("snr".into(), args.snr.clone()),
    ];
    meta.extend(
        report
            .points
            .iter()
            .map(|p| (format!("measured_snr_db[{}]", p.snr_db), format!("{:.4}", p.measured_snr_db()))),
    );
    let csv = format!("{}{}", header("simulate-ber", &meta), report.to_csv());
    print!("{csv}");
    if let Some(out) = &common.out {
        write_text(out, &csv)?;
    }
    Ok(0)
}

fn cmd_gen(args: &GenArgs, common: &Common) -> CmdResult {
    if let ModelSpec::File(p) = &args.model.model {
        require_input(p)?;
    }
    let out = common
        .out
        .as_ref()
        .ok_or_else(|| Fail::usage("gen-channels needs --out"))?;
    require_output_dir(out)?;
    if args.count == 0 {
        return Err(Fail::usage("--count must be positive"));
    }
    let model = args.model.channel_model(args.dim)?;
    let set = sample(&model, args.count, common.seed)?;
    save_samples(&set, out, MatrixFormat::from_path(out))?;
    println!(
        "wrote {} channels of dimension {} to {}",
        set.len(),
        set.dim(),
        out.display()
    );
    Ok(0)
}

fn run(cli: &Cli) -> CmdResult {
    if cli.common.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.common.threads)
            .build_global()
            .map_err(|e| Fail { code: EXIT_SOFTWARE, message: e.to_string() })?;
    }
    match &cli.command {
        Command::Learn(a) => cmd_learn(a, &cli.common),
        Command::VerifyDft(a) => cmd_verify(a, &cli.common),
        Command::EvalSparsity(a) => cmd_sparsity(a, &cli.common),
        Command::SimulateBer(a) => cmd_simulate(a, &cli.common),
        Command::GenChannels(a) => cmd_gen(a, &cli.common),
    }
}

fn main() -> ExitCode {
    let args = match expand_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(f) => {
            eprintln!("error: {}", f.message);
            return ExitCode::from(f.code);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
