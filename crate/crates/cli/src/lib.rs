//! Command-line front end: CSV ingestion, pmfs, sampling, fits, symbolic
//! tables, dispersion bounds and figure series.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use bdist::inference::{
    dispersion_bounds, dispersion_curve, fit, Dataset, DispersionBounds, DispersionFamily, Family, FitOptions,
    FitResult,
};
use bdist::pmf::pmf_default;
use bdist::sampler::sample_batch;
use bdist::symbolic::{render, symbolic_pmf};
use bdist::{BDist, ChainParams, ParentDist};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    /// Process exit status: 1 usage, 2 data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) | CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<bdist::Error> for CliError {
    fn from(e: bdist::Error) -> Self {
        use bdist::Error as E;
        match e {
            E::Data(_) => CliError::Data(e.to_string()),
            E::InvalidParameter { .. } | E::DegenerateChain | E::SizeLimit { .. } | E::UnsupportedParent(_) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Tsv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ParentKind {
    Fixed,
    Binomial,
    Poisson,
    Negbin,
    Custom,
}

#[derive(Debug, Parser)]
#[command(name = "bdist", version, about = "Markov-chain generalized count distributions")]
pub struct CliConfig {
    #[command(subcommand)]
    pub command: Command,
    /// Output format; fit defaults to json, everything else to tsv.
    #[arg(long, global = true)]
    pub format: Option<Format>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print `i, p_i` for a spec.
    Pmf(PmfArgs),
    /// Draw variates.
    Sample(SampleArgs),
    /// Maximum likelihood fit to a CSV file.
    Fit(FitArgs),
    /// Symbolic probabilities for a fixed number of goals.
    Table(TableArgs),
    /// Extremes of the coefficient of dispersion at a mean.
    Dispersion(DispersionArgs),
    /// Series behind the standard figures.
    Figure(FigureArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SpecArgs {
    #[arg(long)]
    pub r1: f64,
    #[arg(long)]
    pub r2: f64,
    #[arg(long, value_enum, default_value = "poisson")]
    pub parent: ParentKind,
    /// Steps for the fixed and binomial parents.
    #[arg(long)]
    pub n: Option<u64>,
    /// Binomial success probability.
    #[arg(long)]
    pub p: Option<f64>,
    /// Poisson parent mean.
    #[arg(long)]
    pub mu0: Option<f64>,
    /// Negative binomial size and success probability.
    #[arg(long)]
    pub size: Option<f64>,
    #[arg(long)]
    pub prob: Option<f64>,
    /// `i, p_i` file (as written by `pmf`) for the custom parent.
    #[arg(long)]
    pub parent_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PmfArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    /// Last index printed.
    #[arg(long)]
    pub max: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub draws: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    BPoisson,
    Poisson,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub response: String,
    /// Comma-separated covariate columns; intercept only when absent.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
    #[arg(long, value_enum, default_value = "b-poisson")]
    pub family: FamilyArg,
    /// Hold r1 fixed (at 1 when given without a value).
    #[arg(long, num_args = 0..=1, default_missing_value = "1")]
    pub fix_r1: Option<f64>,
    #[arg(long, num_args = 0..=1, default_missing_value = "1")]
    pub fix_r2: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Optimizer starts, the first unjittered.
    #[arg(long, default_value_t = 5)]
    pub starts: usize,
}

#[derive(Debug, Args)]
pub struct TableArgs {
    #[arg(long = "N")]
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DispersionFamilyArg {
    BPoisson,
    ComPoisson,
    Both,
}

#[derive(Debug, Args)]
pub struct DispersionArgs {
    #[arg(long)]
    pub mean: f64,
    #[arg(long, value_enum, default_value = "both")]
    pub family: DispersionFamilyArg,
}

#[derive(Debug, Args)]
pub struct FigureArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub which: u8,
    /// Means on the figure 2 grid over `[0.5, 20]`.
    #[arg(long, default_value_t = 40)]
    pub points: usize,
}

/// Reads `i, p_i` rows (tab or comma separated, optional header) into a
/// custom parent.
pub fn read_parent_file(path: &Path) -> CliResult<ParentDist> {
    let file = File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut probs = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let fields: Vec<&str> = line.split(['\t', ',']).map(str::trim).collect();
        if line.trim().is_empty() || (k == 0 && fields[0].parse::<usize>().is_err()) {
            continue;
        }
        let bad = || CliError::Data(format!("{}:{}: expected `i<TAB>p`", path.display(), k + 1));
        if fields.len() != 2 {
            return Err(bad());
        }
        let i: usize = fields[0].parse().map_err(|_| bad())?;
        let p: f64 = fields[1].parse().map_err(|_| bad())?;
        if i != probs.len() {
            return Err(CliError::Data(format!(
                "{}:{}: index {i} out of sequence",
                path.display(),
                k + 1
            )));
        }
        probs.push(p);
    }
    let total: f64 = probs.iter().sum();
    if !(total > 0.0) {
        return Err(CliError::Data(format!("{}: no probability mass", path.display())));
    }
    Ok(ParentDist::custom(probs.iter().map(|p| p / total).collect())?)
}

fn required<T>(value: Option<T>, flag: &str, parent: &str) -> CliResult<T> {
    value.ok_or_else(|| CliError::Usage(format!("--{flag} is required for the {parent} parent")))
}

pub fn build_spec(args: &SpecArgs) -> CliResult<BDist> {
    let chain = ChainParams::new(args.r1, args.r2)?;
    let parent = match args.parent {
        ParentKind::Fixed => ParentDist::fixed(required(args.n, "n", "fixed")?),
        ParentKind::Binomial => {
            ParentDist::binomial(required(args.n, "n", "binomial")?, required(args.p, "p", "binomial")?)?
        }
        ParentKind::Poisson => ParentDist::poisson(required(args.mu0, "mu0", "poisson")?)?,
        ParentKind::Negbin => ParentDist::neg_binomial(
            required(args.size, "size", "negbin")?,
            required(args.prob, "prob", "negbin")?,
        )?,
        ParentKind::Custom => read_parent_file(&required(args.parent_file.clone(), "parent-file", "custom")?)?,
    };
    Ok(BDist::new(chain, parent)?)
}

/// Loads `response` and `covariates` (in that order) from a CSV file with a
/// header row. Line numbers in errors count the header as line 1.
pub fn ingest_csv(path: &Path, response: &str, covariates: &[String]) -> CliResult<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Data(format!("{}: missing column `{name}`", path.display())))
    };
    let y_col = column(response)?;
    let x_cols: Vec<usize> = covariates.iter().map(|c| column(c)).collect::<CliResult<_>>()?;

    let mut y = Vec::new();
    let mut x = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |col: usize, name: &str| -> CliResult<f64> {
            let raw = record.get(col).unwrap_or("");
            raw.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                CliError::Data(format!(
                    "{}:{line}: column `{name}`: cannot parse `{raw}` as a number",
                    path.display()
                ))
            })
        };
        let v = field(y_col, response)?;
        if v < 0.0 {
            return Err(CliError::Data(format!(
                "{}:{line}: negative response {v} in `{response}`",
                path.display()
            )));
        }
        if v.fract() != 0.0 || v > u64::MAX as f64 {
            return Err(CliError::Data(format!(
                "{}:{line}: response {v} in `{response}` is not a count",
                path.display()
            )));
        }
        y.push(v as u64);
        x.push(
            x_cols
                .iter()
                .zip(covariates)
                .map(|(&c, name)| field(c, name))
                .collect::<CliResult<Vec<f64>>>()?,
        );
    }
    if y.is_empty() {
        return Err(CliError::Data(format!("{}: no data rows", path.display())));
    }
    Ok(Dataset::new(y, x, covariates.to_vec())?)
}

#[derive(Debug, Serialize)]
struct PmfRow {
    i: usize,
    p: f64,
}

#[derive(Debug, Serialize)]
struct ParamRow {
    name: String,
    estimate: f64,
    se: Option<f64>,
    fixed: bool,
}

/// JSON form of a fit.
#[derive(Debug, Serialize)]
struct FitReport {
    family: Family,
    n_obs: usize,
    neg_loglik: f64,
    aic: f64,
    free_params: usize,
    converged: bool,
    iterations: usize,
    grad_norm: f64,
    floored: usize,
    params: Vec<ParamRow>,
    covariance: Option<Vec<Vec<f64>>>,
    warnings: Vec<String>,
}

impl FitReport {
    fn new(r: &FitResult) -> Self {
        let params = r
            .param_names
            .iter()
            .zip(r.model.params())
            .zip(&r.model.fixed)
            .enumerate()
            .map(|(j, ((name, estimate), &fixed))| ParamRow {
                name: name.clone(),
                estimate,
                se: r.se.as_ref().map(|se| se[j]),
                fixed,
            })
            .collect();
        Self {
            family: r.model.family,
            n_obs: r.n_obs,
            neg_loglik: r.neg_loglik,
            aic: r.aic,
            free_params: r.free_params,
            converged: r.converged,
            iterations: r.iterations,
            grad_norm: r.grad_norm,
            floored: r.floored,
            params,
            covariance: r.covariance.clone(),
            warnings: r.warnings.clone(),
        }
    }
}

fn write_json(out: &mut impl Write, value: &impl Serialize) -> CliResult<()> {
    serde_json::to_writer_pretty(&mut *out, value).map_err(io::Error::from)?;
    writeln!(out)?;
    Ok(())
}

fn write_pmf(out: &mut impl Write, format: Format, probs: &[f64]) -> CliResult<()> {
    match format {
        Format::Tsv => {
            writeln!(out, "i\tp")?;
            for (i, p) in probs.iter().enumerate() {
                writeln!(out, "{i}\t{p}")?;
            }
            Ok(())
        }
        Format::Json => {
            let rows: Vec<PmfRow> = probs.iter().enumerate().map(|(i, &p)| PmfRow { i, p }).collect();
            write_json(out, &rows)
        }
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn family_name(f: DispersionFamily) -> &'static str {
    match f {
        DispersionFamily::BPoisson => "b-poisson",
        DispersionFamily::ComPoisson => "com-poisson",
    }
}

fn write_bounds(out: &mut impl Write, format: Format, bounds: &[DispersionBounds]) -> CliResult<()> {
    match format {
        Format::Tsv => {
            writeln!(out, "family\tmean\tmin_cd\tmax_cd\tmin_at\tmax_at")?;
            for b in bounds {
                writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}",
                    family_name(b.family),
                    b.mean,
                    b.min_cd,
                    b.max_cd,
                    join(&b.min_at),
                    join(&b.max_at)
                )?;
            }
            Ok(())
        }
        Format::Json => write_json(out, &bounds),
    }
}

/// Chains shown in figures 1 and 3: thinning, self-exciting, self-dampening.
pub const FIGURE_CHAINS: [(&str, f64, f64); 3] = [
    ("thinning", 0.5, 0.5),
    ("overdispersed", 0.2, 0.2),
    ("underdispersed", 0.8, 0.8),
];

#[derive(Debug, Serialize)]
struct SeriesRow {
    series: &'static str,
    r1: f64,
    r2: f64,
    i: usize,
    p: f64,
}

fn figure_pmfs(out: &mut impl Write, format: Format, parent: ParentDist) -> CliResult<()> {
    let mut rows = Vec::new();
    for (series, r1, r2) in FIGURE_CHAINS {
        let spec = BDist::new(ChainParams::new(r1, r2)?, parent.clone())?;
        let p = pmf_default(&spec)?;
        rows.extend(p.probs.iter().enumerate().map(|(i, &p)| SeriesRow { series, r1, r2, i, p }));
    }
    match format {
        Format::Tsv => {
            writeln!(out, "series\tr1\tr2\ti\tp")?;
            for r in &rows {
                writeln!(out, "{}\t{}\t{}\t{}\t{}", r.series, r.r1, r.r2, r.i, r.p)?;
            }
            Ok(())
        }
        Format::Json => write_json(out, &rows),
    }
}

/// Means `lo ..= hi` on an even grid.
fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![lo];
    }
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

pub fn run_command(config: &CliConfig, out: &mut impl Write) -> CliResult<()> {
    let format = config.format.unwrap_or(match config.command {
        Command::Fit(_) => Format::Json,
        _ => Format::Tsv,
    });
    match &config.command {
        Command::Pmf(args) => {
            let spec = build_spec(&args.spec)?;
            let p = pmf_default(&spec)?;
            let end = args.max.map_or(p.len(), |m| (m + 1).min(p.len()));
            write_pmf(out, format, &p.probs[..end])
        }
        Command::Sample(args) => {
            let spec = build_spec(&args.spec)?;
            let batch = sample_batch(&spec, args.draws, args.seed);
            match format {
                Format::Tsv => {
                    writeln!(out, "count")?;
                    for c in &batch.counts {
                        writeln!(out, "{c}")?;
                    }
                    Ok(())
                }
                Format::Json => write_json(out, &batch.counts),
            }
        }
        Command::Fit(args) => {
            let data = ingest_csv(&args.data, &args.response, &args.covariates)?;
            eprintln!("read {} rows from {}", data.len(), args.data.display());
            let opts = FitOptions {
                family: match args.family {
                    FamilyArg::BPoisson => Family::BPoisson,
                    FamilyArg::Poisson => Family::Poisson,
                },
                fix_r1: args.fix_r1,
                fix_r2: args.fix_r2,
                seed: args.seed,
                starts: args.starts,
                ..FitOptions::default()
            };
            let result = fit(&data, &opts)?;
            let report = FitReport::new(&result);
            match format {
                Format::Json => write_json(out, &report)?,
                Format::Tsv => {
                    writeln!(out, "name\testimate\tse\tfixed")?;
                    for p in &report.params {
                        let se = p.se.map_or_else(|| "NA".to_owned(), |v| v.to_string());
                        writeln!(out, "{}\t{}\t{se}\t{}", p.name, p.estimate, p.fixed)?;
                    }
                    writeln!(out, "neg_loglik\t{}\t\t", report.neg_loglik)?;
                    writeln!(out, "aic\t{}\t\t", report.aic)?;
                }
            }
            if result.converged {
                Ok(())
            } else {
                Err(CliError::Numerical(format!(
                    "optimizer did not converge (gradient norm {:e})",
                    result.grad_norm
                )))
            }
        }
        Command::Table(args) => {
            let table = symbolic_pmf(args.n)?;
            match format {
                Format::Tsv => {
                    for (i, poly) in table.iter().enumerate() {
                        writeln!(out, "p{i} = (r1 + r2)^-1 {{{}}}", render(poly))?;
                    }
                    Ok(())
                }
                Format::Json => {
                    let rows: Vec<_> = table
                        .iter()
                        .enumerate()
                        .map(|(i, poly)| serde_json::json!({ "i": i, "numerator": render(poly) }))
                        .collect();
                    write_json(out, &rows)
                }
            }
        }
        Command::Dispersion(args) => {
            let families: &[DispersionFamily] = match args.family {
                DispersionFamilyArg::BPoisson => &[DispersionFamily::BPoisson],
                DispersionFamilyArg::ComPoisson => &[DispersionFamily::ComPoisson],
                DispersionFamilyArg::Both => &[DispersionFamily::BPoisson, DispersionFamily::ComPoisson],
            };
            let bounds = families
                .iter()
                .map(|&f| dispersion_bounds(args.mean, f))
                .collect::<bdist::Result<Vec<_>>>()?;
            write_bounds(out, format, &bounds)
        }
        Command::Figure(args) => match args.which {
            1 => figure_pmfs(out, format, ParentDist::fixed(20)),
            3 => figure_pmfs(out, format, ParentDist::poisson(20.0)?),
            _ => {
                let means = grid(0.5, 20.0, args.points);
                let opts = Default::default();
                let mut bounds = dispersion_curve(&means, DispersionFamily::BPoisson, &opts)?;
                bounds.extend(dispersion_curve(&means, DispersionFamily::ComPoisson, &opts)?);
                write_bounds(out, format, &bounds)
            }
        },
    }
}
