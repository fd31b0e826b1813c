//! `fracvar`: constants, covariance grids, simulation, quadratic variations, estimation and
//! Monte Carlo experiments from the command line.
//!
//! Exit status: 0 on success, 1 on usage errors (bad flags, malformed or conflicting config),
//! 2 on numerical or model errors.

mod model_args;
mod output;

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fracvar::estimators::{estimate, estimate_ratio_only, PlugIn, VarianceForm};
use fracvar::mc::{run_experiment, ExperimentConfig, THREADS_ENV};
use fracvar::models::cov_grid;
use fracvar::quadvar::{exact_moments, increment_cov, second_increments, vn, vn_v2n};
use fracvar::sampling::{NormalStream, PathSample, PathSampler};
use serde::Serialize;

use model_args::{merge, ModelArgs};
use output::{sink, write_report, Format};

/// Marks errors that should exit with status 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "fracvar", version, about = "Second-order quadratic variations of fractional Gaussian processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Out {
    /// Write to this file instead of stdout
    #[arg(long, short, value_name = "FILE")]
    output: Option<PathBuf>,
    /// Output format (json reports; csv tables or flat `field,value` rows)
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Asymptotic constants of a model as one flat JSON object
    Constants {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        out: Out,
    },
    /// Covariance grid R(j/n, k/n), or the second-increment covariance d_jk with --increments
    Cov {
        #[command(flatten)]
        model: ModelArgs,
        /// Grid resolution
        #[arg(long)]
        n: Option<usize>,
        /// Dump d_jk, j,k = 1..n-1, instead of the grid
        #[arg(long)]
        increments: bool,
        #[command(flatten)]
        out: Out,
    },
    /// Sample one exact path on the grid k/n as a `t,value` CSV
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        /// Grid resolution
        #[arg(long)]
        n: Option<usize>,
        /// Seed of the normal stream
        #[arg(long)]
        seed: Option<u64>,
        /// Stream index within the seed (replication number)
        #[arg(long, default_value_t = 0)]
        stream: u64,
        #[command(flatten)]
        out: Out,
    },
    /// V_n of a path file, or exact moments of (V_n, V_2n) for a model
    Quadvar {
        #[command(flatten)]
        model: ModelArgs,
        /// Path CSV with header `t,value`
        #[arg(long, value_name = "FILE")]
        input: Option<PathBuf>,
        /// Resolution for exact moments
        #[arg(long)]
        n: Option<usize>,
        /// With --input, write the second increments as a `k,delta` CSV
        #[arg(long)]
        increments: bool,
        #[command(flatten)]
        out: Out,
    },
    /// Estimates from a path on the 2n grid, or from given V_n and V_2n
    Estimate {
        #[command(flatten)]
        model: ModelArgs,
        /// Path CSV on an even grid 2n; V_n uses every other point
        #[arg(long, value_name = "FILE")]
        input: Option<PathBuf>,
        /// V_n (with --v2n and --n, instead of --input)
        #[arg(long)]
        vn: Option<f64>,
        /// V_2n
        #[arg(long)]
        v2n: Option<f64>,
        /// Coarse resolution n of V_n
        #[arg(long)]
        n: Option<usize>,
        /// Parameters behind the standard errors
        #[arg(long, value_enum, default_value_t = PlugInArg::Estimated)]
        plug_in: PlugInArg,
        #[command(flatten)]
        out: Out,
    },
    /// Monte Carlo experiment
    Mc {
        #[command(flatten)]
        model: ModelArgs,
        /// Coarse resolutions, comma separated (each path is sampled at 2n)
        #[arg(long, value_delimiter = ',')]
        n: Option<Vec<usize>>,
        /// Replications per resolution
        #[arg(long)]
        replications: Option<usize>,
        /// Master seed
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads [default: $FRACVAR_THREADS, else all cores]
        #[arg(long)]
        threads: Option<usize>,
        /// Variance used to standardize the estimators
        #[arg(long, value_enum)]
        variance_form: Option<FormArg>,
        /// Skip the exact Isserlis moments
        #[arg(long)]
        no_exact: bool,
        /// Skip the estimators
        #[arg(long)]
        no_estimators: bool,
        /// Per-replication CSV `rep,n,vn,v2n,estimate,k_hat,h_hat`
        #[arg(long, value_name = "FILE")]
        raw_csv: Option<PathBuf>,
        #[command(flatten)]
        out: Out,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PlugInArg {
    Estimated,
    True,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormArg {
    Printed,
    Delta,
}

impl From<FormArg> for VarianceForm {
    fn from(f: FormArg) -> Self {
        match f {
            FormArg::Printed => VarianceForm::Printed,
            FormArg::Delta => VarianceForm::DeltaMethod,
        }
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn read_path(p: &PathBuf) -> Result<PathSample> {
    let f = File::open(p).with_context(|| format!("cannot open {}", p.display()))?;
    PathSample::read_csv(BufReader::new(f)).with_context(|| format!("reading {}", p.display()))
}

/// `n` from a flag or a single-entry config list.
fn single_n(flag: Option<usize>, cfg: Option<&ExperimentConfig>) -> Result<usize> {
    let from_cfg = match cfg.map(|c| c.n_values.as_slice()) {
        Some([n]) => Some(*n),
        Some(_) if flag.is_none() => {
            return Err(usage("config lists several n values; pick one with --n"));
        }
        _ => None,
    };
    let n = match (flag, cfg) {
        (Some(f), Some(c)) if c.n_values.len() > 1 => {
            if !c.n_values.contains(&f) {
                return Err(usage(format!("--n {f} is not among the config n values {:?}", c.n_values)));
            }
            Some(f)
        }
        _ => merge("n", flag, from_cfg)?,
    };
    n.ok_or_else(|| usage("--n is required"))
}

#[derive(Serialize)]
struct MatrixReport<'a> {
    model: &'a fracvar::ProcessModel,
    n: usize,
    kind: &'static str,
    matrix: Vec<Vec<f64>>,
}

fn write_matrix(rep: &MatrixReport, first: usize, out: &Out) -> Result<()> {
    let mut w = sink(out.output.as_deref())?;
    match out.format.unwrap_or(Format::Json) {
        Format::Json => write_report(rep, Format::Json, w)?,
        Format::Csv => {
            writeln!(w, "j,k,value")?;
            for (j, row) in rep.matrix.iter().enumerate() {
                for (k, v) in row.iter().enumerate() {
                    writeln!(w, "{},{},{:.16e}", j + first, k + first, v)?;
                }
            }
            w.flush()?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct PathVariation {
    n: usize,
    vn: f64,
    /// `V_{n/2}` from every other point, when `n` is even.
    #[serde(skip_serializing_if = "Option::is_none")]
    v_half: Option<f64>,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Constants { model, out } => {
            let (m, _) = model.resolve()?;
            let c = fracvar::constants_for(&m)?;
            write_report(&c, out.format.unwrap_or(Format::Json), sink(out.output.as_deref())?)
        }
        Command::Cov {
            model,
            n,
            increments,
            out,
        } => {
            let (m, cfg) = model.resolve()?;
            let n = single_n(n, cfg.as_ref().and_then(|c| c.experiment()))?;
            let grid = cov_grid(&m, n)?;
            if increments {
                let d = increment_cov(&grid)?;
                let matrix = (1..n).map(|j| d.row(j)).collect();
                let rep = MatrixReport {
                    model: &m,
                    n,
                    kind: "increment_covariance",
                    matrix,
                };
                write_matrix(&rep, 1, &out)
            } else {
                let matrix = (0..=n).map(|j| (0..=n).map(|k| grid.get(j, k)).collect()).collect();
                let rep = MatrixReport {
                    model: &m,
                    n,
                    kind: "covariance",
                    matrix,
                };
                write_matrix(&rep, 0, &out)
            }
        }
        Command::Simulate {
            model,
            n,
            seed,
            stream,
            out,
        } => {
            let (m, cfg) = model.resolve()?;
            let exp = cfg.as_ref().and_then(|c| c.experiment());
            let n = single_n(n, exp)?;
            let seed = merge("seed", seed, exp.map(|c| c.seed))?.unwrap_or(0);
            let path = PathSampler::for_model(&m, n)?.sample(&mut NormalStream::new(seed, stream))?;
            let w = sink(out.output.as_deref())?;
            match out.format.unwrap_or(Format::Csv) {
                Format::Csv => {
                    let mut w = w;
                    path.write_csv(&mut w)?;
                    w.flush()?;
                    Ok(())
                }
                Format::Json => write_report(&path, Format::Json, w),
            }
        }
        Command::Quadvar {
            model,
            input,
            n,
            increments,
            out,
        } => {
            if let Some(p) = input {
                if model.config.is_some() || model.model.is_some() || n.is_some() {
                    return Err(usage("--input takes no model or --n; the path fixes both"));
                }
                let path = read_path(&p)?;
                if increments {
                    let inc = second_increments(&path)?;
                    let mut w = sink(out.output.as_deref())?;
                    writeln!(w, "k,delta")?;
                    for (k, d) in inc.values.iter().enumerate() {
                        writeln!(w, "{},{:.16e}", k + 1, d)?;
                    }
                    w.flush()?;
                    return Ok(());
                }
                let v_half = if path.n % 2 == 0 && path.n >= 6 {
                    Some(vn_v2n(&path.values)?.0)
                } else {
                    None
                };
                let rep = PathVariation {
                    n: path.n,
                    vn: vn(&path)?,
                    v_half,
                };
                write_report(&rep, out.format.unwrap_or(Format::Json), sink(out.output.as_deref())?)
            } else {
                if increments {
                    return Err(usage("--increments needs --input"));
                }
                let (m, cfg) = model.resolve()?;
                let n = single_n(n, cfg.as_ref().and_then(|c| c.experiment()))?;
                let e = exact_moments(&m, n)?;
                write_report(&e, out.format.unwrap_or(Format::Json), sink(out.output.as_deref())?)
            }
        }
        Command::Estimate {
            model,
            input,
            vn: vn_flag,
            v2n,
            n,
            plug_in,
            out,
        } => {
            let (n, vn_value, v2n_value) = match (input, vn_flag, v2n) {
                (Some(p), None, None) => {
                    if n.is_some() {
                        return Err(usage("--n is implied by the path; drop it with --input"));
                    }
                    let path = read_path(&p)?;
                    if path.n % 2 != 0 || path.n < 6 {
                        return Err(fracvar::Error::Domain(format!(
                            "estimation needs a path on an even grid 2n with n >= 3, got {} intervals",
                            path.n
                        ))
                        .into());
                    }
                    let (a, b) = vn_v2n(&path.values)?;
                    (path.n / 2, a, b)
                }
                (None, Some(a), Some(b)) => (n.ok_or_else(|| usage("--n is required with --vn"))?, a, b),
                (None, _, _) => return Err(usage("give --input, or --vn with --v2n and --n")),
                (Some(_), _, _) => return Err(usage("--input excludes --vn and --v2n")),
            };
            let have_model = model.config.is_some() || model.model.is_some();
            let report = if have_model {
                let (m, _) = model.resolve()?;
                let plug = match plug_in {
                    PlugInArg::Estimated => PlugIn::Estimated,
                    PlugInArg::True => PlugIn::True,
                };
                estimate(&m, n, vn_value, v2n_value, plug)?
            } else {
                if plug_in == PlugInArg::True {
                    return Err(usage("--plug-in true needs a model"));
                }
                estimate_ratio_only(n, vn_value, v2n_value)?
            };
            write_report(&report, out.format.unwrap_or(Format::Json), sink(out.output.as_deref())?)
        }
        Command::Mc {
            model,
            n,
            replications,
            seed,
            threads,
            variance_form,
            no_exact,
            no_estimators,
            raw_csv,
            out,
        } => {
            let (m, cfg) = model.resolve()?;
            let exp = cfg.as_ref().and_then(|c| c.experiment()).cloned();
            let mut c = match exp {
                Some(e) => {
                    merge("n", n, Some(e.n_values.clone()))?;
                    merge("replications", replications, Some(e.replications))?;
                    merge("seed", seed, Some(e.seed))?;
                    e
                }
                None => ExperimentConfig::new(
                    m,
                    n.ok_or_else(|| usage("--n is required without an experiment config"))?,
                    replications.ok_or_else(|| usage("--replications is required without an experiment config"))?,
                    seed.unwrap_or(0),
                ),
            };
            c.threads = merge("threads", threads, c.threads)?;
            if let Some(f) = variance_form {
                if cfg.as_ref().and_then(|c| c.experiment()).is_some() && c.variance_form != f.into() {
                    return Err(usage("--variance-form conflicts with the config value"));
                }
                c.variance_form = f.into();
            }
            if no_exact {
                c.exact_moments = false;
            }
            if no_estimators {
                c.estimators = false;
            }
            c.raw_csv = merge("raw-csv", raw_csv, c.raw_csv)?;
            c.output = merge("output", out.output.clone(), c.output)?;
            if c.threads.is_none() {
                if let Ok(v) = std::env::var(THREADS_ENV) {
                    if v.trim().parse::<usize>().map_or(true, |t| t == 0) {
                        return Err(usage(format!("{THREADS_ENV}={v} is not a positive integer")));
                    }
                }
            }
            c.validate()?;
            let report = run_experiment(&c)?;
            write_report(&report, out.format.unwrap_or(Format::Json), sink(c.output.as_deref())?)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<UsageError>()) {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
