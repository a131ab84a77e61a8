//! The `dpme` command line: `fit`, `sample`, `check-truncation` and `validate`.
//!
//! Exit codes: 0 success (including a non-converged fit), 2 argument errors,
//! 3 data errors, 1 internal failures and failed validation suites.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use rand_distr::WeightedIndex;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::embedding::Dataset;
use crate::error::DpmeError;
use crate::format::{format_f64, to_csv, to_json};
use crate::inference::{
    fit, AtomStrategy, Bandwidth, FitConfig, Regularization, Truncation, DEFAULT_COMP_COV_SCALE,
    DEFAULT_WEIGHT_FLOOR,
};
use crate::qp::{DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::rng::{derive_seed, rng_from_seed};
use crate::stick_breaking::{
    choose_truncation, expected_tail_mass, sample_draw, truncation_bound, BaseMeasure,
};
use crate::validation::{run_suite, Suite};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "dpme", version, about = "Fit truncated Dirichlet Process mixtures by kernel mean embedding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit mixture weights to a CSV dataset.
    Fit(FitArgs),
    /// Draw points from a truncated stick-breaking prior.
    Sample(SampleArgs),
    /// Choose a truncation level for a target error.
    CheckTruncation(CheckArgs),
    /// Run the statistical validation suites.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AtomsArg {
    Sample,
    Kmeans,
    Subsample,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("level").args(["trunc", "delta"]))]
#[command(group = clap::ArgGroup::new("kernel").args(["bandwidth2", "median"]))]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    /// Skip the first row of the CSV.
    #[arg(long)]
    header: bool,
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    trunc: Option<usize>,
    /// Target truncation error; picks T automatically (default 1e-2).
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, value_enum)]
    atoms: AtomsArg,
    #[arg(long)]
    bandwidth2: Option<f64>,
    /// Median-heuristic bandwidth (default).
    #[arg(long)]
    median: bool,
    /// Ridge constant; defaults to 1e-6 * trace(S) / T.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_COMP_COV_SCALE)]
    comp_cov_scale: f64,
    #[arg(long, default_value_t = DEFAULT_WEIGHT_FLOOR)]
    weight_floor: f64,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    max_iter: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also emit latent assignments.
    #[arg(long)]
    assign: bool,
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    trunc: usize,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Prior mean of component means (every coordinate).
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    mean0: f64,
    /// Prior variance of component means.
    #[arg(long, default_value_t = 1.0)]
    tau2: f64,
    /// Per-dimension variance shared by all components.
    #[arg(long, default_value_t = 1.0)]
    comp_var: f64,
}

#[derive(Debug, Args)]
struct CheckArgs {
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    delta: f64,
    #[arg(long = "c", default_value_t = 1.0)]
    c: f64,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SuiteArg {
    Bound,
    Gram,
    Dirichlet,
    Qp,
    All,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long, value_enum)]
    suite: SuiteArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Provenance block embedded in every output file.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: &'static str,
    pub config: Value,
    pub seed: u64,
    pub artifact_version: &'static str,
    pub input_digest: String,
}

impl RunManifest {
    fn new(command: &'static str, config: Value, seed: u64, input: &[u8]) -> Self {
        Self {
            command,
            config,
            seed,
            artifact_version: env!("CARGO_PKG_VERSION"),
            input_digest: hex_digest(input),
        }
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Parses comma-separated numeric rows. Blank lines are skipped; error
/// locations are 1-based line and column numbers.
pub fn parse_csv(text: &str, has_header: bool) -> Result<Dataset, DpmeError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    let mut skip_header = has_header;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if skip_header {
            skip_header = false;
            continue;
        }
        let row = line
            .split(',')
            .enumerate()
            .map(|(j, cell)| {
                let cell = cell.trim();
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(DpmeError::Data {
                        row: line_no,
                        column: Some(j + 1),
                        message: format!("'{cell}' is not a finite number"),
                    }),
                }
            })
            .collect::<Result<Vec<f64>, _>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(DpmeError::Data {
                    row: line_no,
                    column: None,
                    message: format!("ragged row: expected {w} columns, found {}", row.len()),
                })
            }
            _ => {}
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(DpmeError::Data {
            row: 1,
            column: None,
            message: "no data rows".into(),
        });
    }
    Dataset::from_rows(&rows)
}

pub fn load_csv(path: &Path, has_header: bool) -> Result<Dataset, DpmeError> {
    let text = read_input(path)?;
    parse_csv(&text, has_header)
}

fn read_input(path: &Path) -> Result<String, DpmeError> {
    fs::read_to_string(path).map_err(|e| DpmeError::Data {
        row: 0,
        column: None,
        message: format!("cannot read {}: {e}", path.display()),
    })
}

fn exit_code(err: &DpmeError) -> i32 {
    match err {
        DpmeError::Domain(_) | DpmeError::Partition(_) => EXIT_USAGE,
        DpmeError::Data { .. } | DpmeError::DegenerateData(_) | DpmeError::DimensionMismatch { .. } => {
            EXIT_DATA
        }
        DpmeError::Infeasible(_) | DpmeError::Invariant(_) | DpmeError::Io(_) => EXIT_INTERNAL,
    }
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(&a, out),
        Command::Sample(a) => cmd_sample(&a, out),
        Command::CheckTruncation(a) => cmd_check_truncation(&a, out),
        Command::Validate(a) => cmd_validate(&a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), DpmeError> {
    fs::write(path, contents).map_err(|e| DpmeError::Io(format!("{}: {e}", path.display())))
}

fn cmd_fit(a: &FitArgs, out: &mut dyn Write) -> Result<i32, DpmeError> {
    let mut cfg = FitConfig::new(
        a.alpha,
        match (a.trunc, a.delta) {
            (Some(t), _) => Truncation::Fixed(t),
            (None, Some(delta)) => Truncation::Auto { delta },
            (None, None) => Truncation::Auto { delta: 1e-2 },
        },
    );
    cfg.atom_strategy = match a.atoms {
        AtomsArg::Sample => AtomStrategy::SampleG0,
        AtomsArg::Kmeans => AtomStrategy::Kmeans,
        AtomsArg::Subsample => AtomStrategy::Subsample,
    };
    cfg.epsilon = a.epsilon.map_or(Regularization::Auto, Regularization::Fixed);
    cfg.bandwidth = a.bandwidth2.map_or(Bandwidth::Median, Bandwidth::Fixed);
    cfg.comp_cov_scale = a.comp_cov_scale;
    cfg.weight_floor = a.weight_floor;
    cfg.tol = a.tol;
    cfg.max_iter = a.max_iter;
    cfg.seed = a.seed;
    cfg.validate()?;
    let trunc = cfg.truncation()?;

    let text = read_input(&a.data)?;
    let data = parse_csv(&text, a.header)?;
    let res = fit(&data, &cfg)?;

    let config = json!({
        "data": a.data.display().to_string(),
        "header": a.header,
        "alpha": cfg.alpha,
        "trunc": trunc,
        "delta": match cfg.trunc { Truncation::Auto { delta } => Some(delta), _ => None },
        "atoms": cfg.atom_strategy.name(),
        "bandwidth2": res.bandwidth2,
        "bandwidth_rule": match cfg.bandwidth { Bandwidth::Median => "median", Bandwidth::Fixed(_) => "fixed" },
        "epsilon": res.epsilon,
        "comp_cov_scale": cfg.comp_cov_scale,
        "weight_floor": cfg.weight_floor,
        "tol": cfg.tol,
        "max_iter": cfg.max_iter,
        "assign": a.assign,
    });
    let manifest = RunManifest::new("fit", config, cfg.seed, text.as_bytes());
    let comps = &res.model.components;
    let mut doc = json!({
        "manifest": manifest,
        "weights": res.model.weights,
        "atoms": {
            "means": comps.iter().map(|c| c.mean()).collect::<Vec<_>>(),
            "cov_diag": comps.iter().map(|c| c.cov_diag()).collect::<Vec<_>>(),
        },
        "mmd2": res.mmd2,
        "objective": res.qp.objective,
        "kkt_residual": res.qp.kkt_residual,
        "converged": res.qp.converged,
        "effective_T": res.effective_t,
        "truncation_bound": res.truncation_bound,
    });
    if a.assign {
        doc["assignments"] = json!(res.latents.assignments);
        doc["flagged_rows"] = json!(res.latents.flagged_rows);
    }
    write_file(&a.out, &to_json(&doc)?)?;
    let _ = writeln!(
        out,
        "fit: T = {}, effective_T = {}, mmd2 = {}, converged = {}",
        trunc,
        res.effective_t,
        format_f64(res.mmd2),
        res.qp.converged
    );
    Ok(EXIT_OK)
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn cmd_sample(a: &SampleArgs, out: &mut dyn Write) -> Result<i32, DpmeError> {
    if a.dim == 0 {
        return Err(DpmeError::Domain("dim must be >= 1".into()));
    }
    let base = BaseMeasure::isotropic(a.dim, a.mean0, a.tau2, a.comp_var)?;
    let (draw, comps) = sample_draw(a.alpha, a.trunc, &base, derive_seed(a.seed, 0))?;
    let picker = WeightedIndex::new(&draw.weights)
        .map_err(|e| DpmeError::Invariant(format!("stick weights unusable: {e}")))?;
    let mut rng = rng_from_seed(derive_seed(a.seed, 1));
    let mut points = vec![0.0; a.n * a.dim];
    for row in points.chunks_exact_mut(a.dim) {
        let comp = &comps[rng.sample(&picker)];
        for ((x, m), v) in row.iter_mut().zip(comp.mean()).zip(comp.cov_diag()) {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            *x = m + v.sqrt() * z;
        }
    }
    write_file(&a.out, &to_csv(points.chunks_exact(a.dim)))?;

    let config = json!({
        "alpha": a.alpha,
        "trunc": a.trunc,
        "n": a.n,
        "dim": a.dim,
        "mean0": a.mean0,
        "tau2": a.tau2,
        "comp_var": a.comp_var,
    });
    let sidecar = json!({
        "manifest": RunManifest::new("sample", config, a.seed, &[]),
        "betas": draw.betas,
        "weights": draw.weights,
        "tail_mass": draw.tail_mass,
        "atoms": {
            "means": comps.iter().map(|c| c.mean()).collect::<Vec<_>>(),
            "cov_diag": comps.iter().map(|c| c.cov_diag()).collect::<Vec<_>>(),
        },
    });
    let side = sidecar_path(&a.out);
    write_file(&side, &to_json(&sidecar)?)?;
    let _ = writeln!(
        out,
        "sample: {} points written to {}, draw to {}",
        a.n,
        a.out.display(),
        side.display()
    );
    Ok(EXIT_OK)
}

fn cmd_check_truncation(a: &CheckArgs, out: &mut dyn Write) -> Result<i32, DpmeError> {
    let trunc = choose_truncation(a.alpha, a.delta, a.c)?;
    let bound = truncation_bound(a.alpha, trunc, a.c);
    let exact_tail = expected_tail_mass(a.alpha, trunc)?;
    let text = if a.json {
        to_json(&json!({ "trunc": trunc, "bound": bound, "exact_tail": exact_tail }))?
    } else {
        format!(
            "trunc       {trunc}\nbound       {}\nexact_tail  {}\n",
            format_f64(bound),
            format_f64(exact_tail)
        )
    };
    out.write_all(text.as_bytes())
        .map_err(|e| DpmeError::Io(e.to_string()))?;
    Ok(EXIT_OK)
}

fn cmd_validate(a: &ValidateArgs, out: &mut dyn Write) -> Result<i32, DpmeError> {
    let name = match a.suite {
        SuiteArg::Bound => "bound",
        SuiteArg::Gram => "gram",
        SuiteArg::Dirichlet => "dirichlet",
        SuiteArg::Qp => "qp",
        SuiteArg::All => "all",
    };
    let suites = Suite::parse(name).ok_or_else(|| crate::validation::unknown_suite(name))?;
    let reports = suites
        .into_iter()
        .map(|s| run_suite(s, a.seed))
        .collect::<Result<Vec<_>, _>>()?;
    let passed = reports.iter().all(|r| r.passed);
    let doc = json!({
        "manifest": RunManifest::new("validate", json!({ "suite": name }), a.seed, &[]),
        "passed": passed,
        "suites": reports,
    });
    let encoded = to_json(&doc)?;
    match &a.out {
        Some(path) => {
            write_file(path, &encoded)?;
            for r in &reports {
                let _ = writeln!(out, "{:<10} {}", r.suite, if r.passed { "PASS" } else { "FAIL" });
            }
        }
        None => {
            out.write_all(encoded.as_bytes())
                .map_err(|e| DpmeError::Io(e.to_string()))?;
        }
    }
    Ok(if passed { EXIT_OK } else { EXIT_INTERNAL })
}
