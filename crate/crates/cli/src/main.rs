//! `atd`: generate synthetic data, decompose tensors, extract features,
//! evaluate them and measure batch memory.

mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use atd_core::augment::{Augmenter, GaussianNoise};
use atd_core::eval::{accuracy, train_linear, LabeledFeatures, LogisticConfig};
use atd_core::io::{read_tensor, write_tensor};
use atd_core::solver::{sao_run, write_csv, Mode, SaoConfig};
use atd_core::synth::{extract_features, generate, SyntheticSpec};
use atd_core::{AtdError, DenseTensor, KruskalBases, Matrix};

use manifest::RunManifest;

const EXIT_VALIDATION: u8 = 2;
const EXIT_DIVERGENCE: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

type CliResult<T> = Result<T, Failure>;

fn validation(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_VALIDATION,
        message: message.into(),
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    }
}

impl From<AtdError> for Failure {
    fn from(e: AtdError) -> Self {
        let code = match e {
            AtdError::Io(_) => EXIT_IO,
            AtdError::Divergence(_) => EXIT_DIVERGENCE,
            _ => EXIT_VALIDATION,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

/// Errors raised while a solver runs: anything numerical counts as divergence.
fn solve_failure(e: AtdError) -> Failure {
    match e {
        AtdError::NonFinite(_) | AtdError::Singular { .. } | AtdError::ZeroRow { .. } => Failure {
            code: EXIT_DIVERGENCE,
            message: e.to_string(),
        },
        other => other.into(),
    }
}

#[derive(Parser)]
#[command(name = "atd", version, about = "Augmented tensor decomposition toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic tensor, its labels and the ground-truth bases.
    Gen(GenArgs),
    /// Learn bases from a tensor.
    Decompose(DecomposeArgs),
    /// Project a tensor onto learned bases.
    Features(FeaturesArgs),
    /// Train a linear classifier on one features file and score another.
    Eval(EvalArgs),
    /// Peak auxiliary memory and sweep time across batch sizes.
    BenchMem(BenchArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Generator spec (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct SolverFlags {
    /// Solver configuration (TOML); flags below override it.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// atd, ssminus, als or sals.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    max_sweeps: Option<usize>,
    #[arg(long)]
    moving_average: bool,
    /// Standard deviation of the tensor-space noise augmentation.
    #[arg(long, default_value_t = 0.01)]
    aug_sigma: f64,
}

impl SolverFlags {
    fn load(&self) -> CliResult<SaoConfig> {
        let text = fs::read_to_string(&self.config).map_err(|e| io_failure(&self.config, e))?;
        let mut cfg = SaoConfig::from_config_str(&text)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(m) = &self.mode {
            cfg.mode = m.parse::<Mode>()?;
        }
        if let Some(b) = self.batch_size {
            cfg.batch_size = b;
        }
        if let Some(r) = self.rank {
            cfg.rank = r;
        }
        if let Some(s) = self.max_sweeps {
            cfg.max_sweeps = s;
        }
        cfg.moving_average |= self.moving_average;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct DecomposeArgs {
    #[arg(long)]
    tensor: PathBuf,
    #[command(flatten)]
    solver: SolverFlags,
    /// Output directory for `A.dtz`, `B.dtz`, `C.dtz` and `sweeps.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FeaturesArgs {
    #[arg(long)]
    tensor: PathBuf,
    /// Directory holding `A.dtz`, `B.dtz`, `C.dtz`.
    #[arg(long)]
    bases: PathBuf,
    /// Labels CSV as written by `gen`.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value_t = 1e-3)]
    alpha: f64,
    /// Features CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Accuracy report CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    tensor: PathBuf,
    #[command(flatten)]
    solver: SolverFlags,
    /// Report CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenSpec {
    n: usize,
    dims: [usize; 3],
    rank: usize,
    classes: usize,
    scale: f64,
    tau: f64,
    sigma: f64,
    #[serde(default)]
    seed: u64,
}

fn parse_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    toml::from_str(&text).map_err(|e| validation(format!("{}: {}", path.display(), e.message())))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| io_failure(path, e))
}

fn record(m: RunManifest, path: &Path) -> CliResult<()> {
    log::info!("{} -> {}", m.command, path.display());
    m.write(path).map_err(|e| io_failure(path, e))
}

fn manifest(
    command: &str,
    config: Option<&Path>,
    inputs: &[&Path],
    outputs: Vec<PathBuf>,
    seed: u64,
) -> CliResult<RunManifest> {
    RunManifest::new(command, config, inputs, &outputs, seed).map_err(|e| Failure {
        code: EXIT_IO,
        message: format!("reading inputs: {e}"),
    })
}

fn matrix_tensor(m: &Matrix) -> CliResult<DenseTensor> {
    Ok(DenseTensor::new(
        vec![m.nrows(), m.ncols()],
        m.iter().copied().collect(),
    )?)
}

fn tensor_matrix(t: DenseTensor, path: &Path) -> CliResult<Matrix> {
    if t.order() != 2 {
        return Err(validation(format!(
            "{}: expected a matrix, got shape {:?}",
            path.display(),
            t.shape()
        )));
    }
    let (r, c) = (t.shape()[0], t.shape()[1]);
    Ok(Matrix::from_shape_vec((r, c), t.into_data()).expect("shape checked"))
}

const FACTOR_FILES: [&str; 3] = ["A.dtz", "B.dtz", "C.dtz"];

fn write_bases(b: &KruskalBases, dir: &Path) -> CliResult<()> {
    for (f, name) in b.factors().iter().zip(FACTOR_FILES) {
        write_tensor(&matrix_tensor(f)?, dir.join(name))?;
    }
    Ok(())
}

fn read_bases(dir: &Path) -> CliResult<KruskalBases> {
    let mut m = Vec::new();
    for name in FACTOR_FILES {
        let p = dir.join(name);
        m.push(tensor_matrix(read_tensor(&p)?, &p)?);
    }
    let c = m.pop().unwrap();
    let b = m.pop().unwrap();
    let a = m.pop().unwrap();
    Ok(KruskalBases::new(a, b, c)?)
}

fn write_labels(labels: &[usize], path: &Path) -> CliResult<()> {
    let mut text = String::from("label\n");
    for l in labels {
        text.push_str(&format!("{l}\n"));
    }
    write_file(path, text.as_bytes())
}

fn read_labels(path: &Path) -> CliResult<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("label") {
        return Err(validation(format!("{}: expected a `label` header", path.display())));
    }
    lines
        .enumerate()
        .map(|(i, l)| {
            l.trim()
                .parse()
                .map_err(|e| validation(format!("{}: row {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn cmd_gen(a: GenArgs) -> CliResult<()> {
    let spec: GenSpec = parse_toml(&a.config)?;
    let seed = a.seed.unwrap_or(spec.seed);
    create_dir(&a.out)?;
    let outputs = ["tensor.dtz", "labels.csv", "coeffs.dtz"]
        .iter()
        .chain(FACTOR_FILES.iter())
        .map(|f| a.out.join(f))
        .collect();
    record(
        manifest("gen", Some(&a.config), &[], outputs, seed)?,
        &a.out.join("manifest.toml"),
    )?;

    let s = SyntheticSpec::new(
        spec.n,
        spec.dims,
        spec.rank,
        spec.classes,
        spec.scale,
        spec.tau,
        spec.sigma,
        seed,
    )?;
    let data = generate(&s)?;
    write_tensor(&data.tensor, a.out.join("tensor.dtz"))?;
    write_tensor(&matrix_tensor(&data.coeffs)?, a.out.join("coeffs.dtz"))?;
    write_labels(&data.labels, &a.out.join("labels.csv"))?;
    write_bases(&data.bases, &a.out)
}

fn augmenter(flags: &SolverFlags, cfg: &SaoConfig) -> CliResult<Option<GaussianNoise>> {
    if cfg.mode.uses_augmentation() {
        Ok(Some(GaussianNoise::new(flags.aug_sigma)?))
    } else {
        Ok(None)
    }
}

fn cmd_decompose(a: DecomposeArgs) -> CliResult<()> {
    let cfg = a.solver.load()?;
    create_dir(&a.out)?;
    let outputs = FACTOR_FILES
        .iter()
        .chain(&["sweeps.csv"])
        .map(|f| a.out.join(f))
        .collect();
    record(
        manifest("decompose", Some(&a.solver.config), &[&a.tensor], outputs, cfg.seed)?,
        &a.out.join("manifest.toml"),
    )?;

    let t = read_tensor(&a.tensor)?;
    let aug = augmenter(&a.solver, &cfg)?;
    let out = sao_run(&t, aug.as_ref().map(|g| g as &dyn Augmenter), &cfg).map_err(solve_failure)?;
    write_bases(&out.bases, &a.out)?;
    let mut csv = Vec::new();
    write_csv(&out.reports, &mut csv)?;
    write_file(&a.out.join("sweeps.csv"), &csv)?;
    let last = out.reports.last().map_or(f64::NAN, |r| r.loss.total());
    println!(
        "{} sweeps, final loss {last:.6e}, {}",
        out.reports.len(),
        if out.converged {
            "converged"
        } else {
            "stopped at max sweeps"
        }
    );
    Ok(())
}

fn sidecar(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.toml");
    PathBuf::from(s)
}

fn cmd_features(a: FeaturesArgs) -> CliResult<()> {
    let inputs: Vec<PathBuf> = vec![a.tensor.clone(), a.labels.clone()]
        .into_iter()
        .chain(FACTOR_FILES.iter().map(|f| a.bases.join(f)))
        .collect();
    let refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    record(
        manifest("features", None, &refs, vec![a.out.clone()], 0)?,
        &sidecar(&a.out),
    )?;

    let t = read_tensor(&a.tensor)?;
    let bases = read_bases(&a.bases)?;
    let feats = extract_features(&t, &bases, a.alpha)?;
    let labelled = LabeledFeatures::new(feats, read_labels(&a.labels)?)?;
    let mut buf = Vec::new();
    labelled.write_csv(&mut buf)?;
    write_file(&a.out, &buf)
}

fn read_features(path: &Path) -> CliResult<LabeledFeatures> {
    let f = fs::File::open(path).map_err(|e| io_failure(path, e))?;
    Ok(LabeledFeatures::read_csv(f)?)
}

fn cmd_eval(a: EvalArgs) -> CliResult<()> {
    record(
        manifest("eval", None, &[&a.train, &a.test], vec![a.out.clone()], 0)?,
        &sidecar(&a.out),
    )?;
    let train = read_features(&a.train)?;
    let test = read_features(&a.test)?;
    if train.features.ncols() != test.features.ncols() {
        return Err(validation(format!(
            "train has {} features, test has {}",
            train.features.ncols(),
            test.features.ncols()
        )));
    }
    let model = train_linear(&train, LogisticConfig::default())?;
    let (tr, te) = (accuracy(&model, &train)?, accuracy(&model, &test)?);
    let report = format!(
        "train_rows,test_rows,train_accuracy,test_accuracy\n{},{},{tr:.6},{te:.6}\n",
        train.len(),
        test.len()
    );
    print!("{report}");
    write_file(&a.out, report.as_bytes())
}

const BENCH_SIZES: [usize; 5] = [32, 64, 128, 256, 512];

fn cmd_bench_mem(a: BenchArgs) -> CliResult<()> {
    let cfg = a.solver.load()?;
    record(
        manifest(
            "bench-mem",
            Some(&a.solver.config),
            &[&a.tensor],
            vec![a.out.clone()],
            cfg.seed,
        )?,
        &sidecar(&a.out),
    )?;
    let t = read_tensor(&a.tensor)?;
    let n = t.shape().first().copied().unwrap_or(0);
    let aug = augmenter(&a.solver, &cfg)?;
    let mut sizes: Vec<(String, usize)> = BENCH_SIZES
        .iter()
        .filter(|&&b| b < n)
        .map(|&b| (b.to_string(), b))
        .collect();
    sizes.push(("full".into(), n));

    let mut report = String::from("batch_size,rows,peak_aux_bytes,seconds_per_sweep\n");
    for (label, b) in sizes {
        let run_cfg = SaoConfig {
            batch_size: b,
            ..cfg.clone()
        };
        let out = sao_run(&t, aug.as_ref().map(|g| g as &dyn Augmenter), &run_cfg).map_err(solve_failure)?;
        let peak = out.reports.iter().map(|r| r.peak_aux_bytes).max().unwrap_or(0);
        let secs = out.reports.iter().map(|r| r.seconds).sum::<f64>() / out.reports.len().max(1) as f64;
        report.push_str(&format!("{label},{b},{peak},{secs:.6}\n"));
    }
    print!("{report}");
    write_file(&a.out, report.as_bytes())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Decompose(a) => cmd_decompose(a),
        Command::Features(a) => cmd_features(a),
        Command::Eval(a) => cmd_eval(a),
        Command::BenchMem(a) => cmd_bench_mem(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
