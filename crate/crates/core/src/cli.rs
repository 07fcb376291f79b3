//! Command-line front end: preset, simulate, fit, diagnose, query, sweep.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::driver::{bertha_preset, reference_theta, synth_dataset};
use crate::io::{self, PosteriorPaths};
use crate::model::ModelSpec;
use crate::predictive::{query, sweep, Averaging, Evidence, GridAxis, QueryOptions, QueryResult};
use crate::sampler::{fit, summarize, ParameterSummary, PosteriorSample, SamplerConfig};

/// R-hat above this marks a parameter as unconverged.
pub const RHAT_THRESHOLD: f64 = 1.01;

#[derive(Debug, Parser)]
#[command(
    name = "affectbn",
    version,
    about = "Hybrid Bayesian-network fitting and posterior predictive queries"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the driver-state network spec (and optionally its reference parameters).
    Preset {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        theta_out: Option<PathBuf>,
    },
    /// Simulate a dataset from fixed parameters.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        /// JSON object `parameter name -> value`.
        #[arg(long)]
        theta: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, env = "AFFECTBN_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a model to data by MCMC.
    Fit {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 4)]
        chains: usize,
        #[arg(long, default_value_t = 4000)]
        iters: usize,
        /// Defaults to half of --iters.
        #[arg(long)]
        warmup: Option<usize>,
        #[arg(long, default_value_t = 1)]
        thin: usize,
        #[arg(long, env = "AFFECTBN_SEED", default_value_t = 0)]
        seed: u64,
        /// Draws CSV; the sidecar goes next to it as `<stem>.meta.json`.
        #[arg(long)]
        out: PathBuf,
        /// Sample raw coefficients directly instead of standardized ones.
        #[arg(long)]
        no_standardize: bool,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Print R-hat and ESS per parameter; fails if any R-hat exceeds 1.01.
    Diagnose {
        #[arg(long)]
        posterior: PathBuf,
        /// Check the posterior against this model.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Posterior probabilities of the joint target states given evidence.
    Query {
        #[command(flatten)]
        common: QueryArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        targets: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a query at every point of a grid over evidence variables.
    Sweep {
        #[command(flatten)]
        common: QueryArgs,
        /// `name=lo:hi:count[,name=lo:hi:count...]`, endpoints inclusive.
        #[arg(long, value_parser = parse_grid)]
        grid: Grid,
        #[arg(long, value_delimiter = ',', default_value = "AF,ML")]
        targets: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Draws CSV written by `fit`.
    #[arg(long)]
    pub posterior: PathBuf,
    /// `name=value[,name=value...]`; every covariate must be present.
    #[arg(long, value_parser = parse_evidence, default_value = "")]
    pub evidence: EvidencePairs,
    #[arg(long, default_value_t = 8)]
    pub latent_draws: usize,
    #[arg(long, env = "AFFECTBN_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Use at most this many posterior draws, evenly spaced.
    #[arg(long)]
    pub max_draws: Option<usize>,
    #[arg(long, value_enum, default_value_t = AveragingArg::DrawAverage)]
    pub averaging: AveragingArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AveragingArg {
    DrawAverage,
    Pooled,
}

impl From<AveragingArg> for Averaging {
    fn from(a: AveragingArg) -> Self {
        match a {
            AveragingArg::DrawAverage => Averaging::DrawAverage,
            AveragingArg::Pooled => Averaging::Pooled,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvidencePairs(pub Vec<(String, f64)>);

#[derive(Debug, Clone, PartialEq)]
pub struct Grid(pub Vec<GridAxis>);

fn split_assignment(token: &str) -> Result<(&str, &str), String> {
    match token.split_once('=') {
        Some((name, value)) if !name.trim().is_empty() => Ok((name.trim(), value.trim())),
        _ => Err(format!("expected `name=value`, got `{token}`")),
    }
}

fn parse_real(text: &str, token: &str) -> Result<f64, String> {
    match text.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(format!("`{text}` is not a finite number (in `{token}`)")),
    }
}

/// Parses `Sex=0,Age=20,BMI=22,MNB=20`. An empty string is no evidence.
pub fn parse_evidence(text: &str) -> Result<EvidencePairs, String> {
    let mut pairs = Vec::new();
    for token in text.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let (name, value) = split_assignment(token)?;
        pairs.push((name.to_string(), parse_real(value, token)?));
    }
    Ok(EvidencePairs(pairs))
}

/// `count` evenly spaced values from `lo` to `hi`, both included.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (count - 1) as f64;
            (0..count)
                .map(|i| if i == count - 1 { hi } else { lo + step * i as f64 })
                .collect()
        }
    }
}

/// Parses `SRT=19.45:191.76:25,MNB=9.42:23.38:25`.
pub fn parse_grid(text: &str) -> Result<Grid, String> {
    let mut axes = Vec::new();
    for token in text.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let (name, range) = split_assignment(token)?;
        let parts: Vec<&str> = range.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("expected `name=lo:hi:count`, got `{token}`"));
        }
        let lo = parse_real(parts[0], token)?;
        let hi = parse_real(parts[1], token)?;
        let count: usize = match parts[2].parse() {
            Ok(c) if c >= 1 => c,
            _ => return Err(format!("`{}` is not a positive count (in `{token}`)", parts[2])),
        };
        if count == 1 && lo != hi {
            return Err(format!("a single-point axis needs lo = hi (in `{token}`)"));
        }
        axes.push(GridAxis {
            name: name.to_string(),
            values: linspace(lo, hi, count),
        });
    }
    if axes.is_empty() {
        return Err("grid has no axes".into());
    }
    Ok(Grid(axes))
}

/// Parses arguments and runs the command. Usage errors exit with 2, runtime
/// failures with 1.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code().clamp(0, 255) as u8);
        }
    };
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> anyhow::Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => bail!("--threads must be at least 1"),
        Some(n) => Ok(rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(f)),
    }
}

fn load_model(path: &Path) -> anyhow::Result<ModelSpec> {
    io::read_spec_file(path).with_context(|| format!("reading model {}", path.display()))
}

fn load_posterior(path: &Path, model: &ModelSpec) -> anyhow::Result<PosteriorSample> {
    io::read_posterior(&PosteriorPaths::from_draws(path), model)
        .with_context(|| format!("reading posterior {}", path.display()))
}

fn write(path: &Path, contents: &str) -> anyhow::Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn fmt_opt(x: Option<f64>, precision: usize) -> String {
    x.map_or_else(|| "NA".to_string(), |v| format!("{v:.precision$}"))
}

/// Fixed-width table of posterior summaries.
pub fn summary_table(rows: &[ParameterSummary]) -> String {
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(9).max(9);
    let mut out = format!(
        "{:<width$} {:>12} {:>10} {:>12} {:>12} {:>7} {:>8}\n",
        "parameter", "mean", "sd", "q05", "q95", "rhat", "ess"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<width$} {:>12.4} {:>10.4} {:>12.4} {:>12.4} {:>7} {:>8}\n",
            r.name,
            r.mean,
            r.sd,
            r.q05,
            r.q95,
            fmt_opt(r.rhat, 3),
            fmt_opt(r.ess, 0)
        ));
    }
    out
}

pub fn query_table(result: &QueryResult) -> String {
    let labels: Vec<String> = (0..result.states.len()).map(|s| result.state_label(s)).collect();
    let width = labels.iter().map(String::len).max().unwrap_or(5).max(5);
    let mut out = format!("{:<width$} {:>12} {:>12}\n", "state", "probability", "mc_se");
    for (s, label) in labels.iter().enumerate() {
        out.push_str(&format!(
            "{:<width$} {:>12.6} {:>12.6}\n",
            label, result.probabilities[s], result.std_errors[s]
        ));
    }
    out.push_str(&format!(
        "draws used: {}, latent draws per state: {}, averaging: {}\n",
        result.draws_used,
        result.latent_draws_per_state,
        result.averaging.label()
    ));
    out
}

fn query_options(args: &QueryArgs) -> QueryOptions {
    QueryOptions {
        latent_draws: args.latent_draws,
        averaging: args.averaging.into(),
        max_draws: args.max_draws,
        seed: args.seed,
    }
}

fn execute(command: Command) -> anyhow::Result<bool> {
    match command {
        Command::Preset { out, theta_out } => {
            let model = bertha_preset();
            write(&out, &io::serialize_spec(&model))?;
            if let Some(path) = theta_out {
                write(&path, &io::serialize_theta(&model, &reference_theta(&model)?))?;
            }
        }
        Command::Simulate {
            model,
            theta,
            n,
            seed,
            out,
        } => {
            let spec = load_model(&model)?;
            let text = fs::read_to_string(&theta).with_context(|| format!("reading {}", theta.display()))?;
            let params = io::parse_theta(&text, &spec).with_context(|| format!("parsing {}", theta.display()))?;
            let data = synth_dataset(&spec, &params, n, seed)?;
            write(&out, &io::write_dataset(&data, &spec)?)?;
        }
        Command::Fit {
            model,
            data,
            chains,
            iters,
            warmup,
            thin,
            seed,
            out,
            no_standardize,
            threads,
        } => {
            let spec = load_model(&model)?;
            let text = fs::read_to_string(&data).with_context(|| format!("reading {}", data.display()))?;
            let dataset = io::read_dataset(&text, &spec).with_context(|| format!("parsing {}", data.display()))?;
            let config = SamplerConfig {
                chains,
                iterations: iters,
                warmup: warmup.unwrap_or(iters / 2),
                thin,
                seed,
                standardize: !no_standardize,
                ..SamplerConfig::default()
            };
            let sample = with_threads(threads, || fit(&spec, &dataset, &config))??;
            let paths = PosteriorPaths::from_draws(&out);
            io::write_posterior(&sample, &paths).with_context(|| format!("writing {}", out.display()))?;
            print!("{}", summary_table(&summarize(&sample)));
        }
        Command::Diagnose { posterior, model } => {
            let paths = PosteriorPaths::from_draws(&posterior);
            let sample = match model {
                Some(m) => load_posterior(&posterior, &load_model(&m)?)?,
                None => io::read_posterior_unchecked(&paths)
                    .with_context(|| format!("reading posterior {}", posterior.display()))?,
            };
            let rows = summarize(&sample);
            print!("{}", summary_table(&rows));
            let bad: Vec<&str> = rows
                .iter()
                .filter(|r| r.rhat.is_none_or(|x| x > RHAT_THRESHOLD))
                .map(|r| r.name.as_str())
                .collect();
            if !bad.is_empty() {
                eprintln!("R-hat above {RHAT_THRESHOLD} or undefined for: {}", bad.join(", "));
                return Ok(false);
            }
        }
        Command::Query { common, targets, out } => {
            let spec = load_model(&common.model)?;
            let sample = load_posterior(&common.posterior, &spec)?;
            let evidence = Evidence::new(&spec, &common.evidence.0)?;
            let result = query(&spec, &sample, &evidence, &targets, &query_options(&common))?;
            print!("{}", query_table(&result));
            if let Some(path) = out {
                write(&path, &io::query_csv(&result))?;
            }
        }
        Command::Sweep {
            common,
            grid,
            targets,
            out,
            threads,
        } => {
            let spec = load_model(&common.model)?;
            let sample = load_posterior(&common.posterior, &spec)?;
            let options = query_options(&common);
            let points = with_threads(threads, || {
                sweep(&spec, &sample, &common.evidence.0, &grid.0, &targets, &options)
            })??;
            write(&out, &io::sweep_csv(&points))?;
            println!("{} grid points written to {}", points.len(), out.display());
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linspace_includes_endpoints() {
        assert_eq!(linspace(0.0, 1.0, 2), vec![0.0, 1.0]);
        assert_eq!(linspace(0.0, 1.0, 3), vec![0.0, 0.5, 1.0]);
        let v = linspace(19.45, 191.76, 25);
        assert_eq!(v.len(), 25);
        assert_eq!(v[0], 19.45);
        assert_eq!(v[24], 191.76);
    }

    #[test]
    fn grid_parsing() {
        let g = parse_grid("A=0:1:2").unwrap();
        assert_eq!(
            g.0,
            vec![GridAxis {
                name: "A".into(),
                values: vec![0.0, 1.0]
            }]
        );
        let g = parse_grid("SRT=19.45:191.76:25, MNB=9.42:23.38:25").unwrap();
        assert_eq!(g.0.len(), 2);
        assert_eq!(g.0[1].name, "MNB");
        for bad in ["A=0:1", "A=0:x:3", "A=0:1:0", "=0:1:2", "A", ""] {
            assert!(parse_grid(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn evidence_parsing() {
        let e = parse_evidence("Sex=0,Age=20,BMI=22,MNB=20").unwrap();
        assert_eq!(e.0[3], ("MNB".to_string(), 20.0));
        assert!(parse_evidence("").unwrap().0.is_empty());
        let err = parse_evidence("Sex=0,Age=abc").unwrap_err();
        assert!(err.contains("Age=abc"), "{err}");
        assert!(parse_evidence("Age").is_err());
    }

    #[test]
    fn malformed_evidence_is_a_usage_error() {
        let err = Cli::try_parse_from([
            "affectbn",
            "query",
            "--model",
            "m.json",
            "--posterior",
            "p.csv",
            "--evidence",
            "Age=abc",
            "--targets",
            "ML",
        ])
        .unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("Age=abc"));
    }
}
