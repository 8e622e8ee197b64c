//! `wfisher` command line: CSV records in, one JSON object out.
//!
//! Exit codes: 0 success, 1 invalid input or arguments, 2 conditioning
//! failure, 3 analytic and Monte Carlo values disagree (`check` only).

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, Read, Write};
use std::path::PathBuf;

use clap::{error::ErrorKind, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::closed_form::DEFAULT_REL_TOL;
use crate::combine::{combine, CombineOptions, CombinedResult, McFallback, Method, MethodChoice};
use crate::error::{CombineError, EvidenceError};
use crate::evidence::{validate_entry, WeightedEvidence};
use crate::oracle::mc_tail;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_CONDITIONING: i32 = 2;
pub const EXIT_DISAGREE: i32 = 3;

/// `|z|` above which `check` reports disagreement.
pub const CHECK_Z_LIMIT: f64 = 4.0;

#[derive(Debug, Parser)]
#[command(
    name = "wfisher",
    version,
    about = "Combine independent p-values with confidence weights (weighted Fisher's method)"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the combined p-value.
    Combine(CommonArgs),
    /// Compare the analytic p-value with a Monte Carlo estimate.
    Check(CheckArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// CSV file with one `p,w` or `p` record per line; `-` for stdin.
    #[arg(long, default_value = "-")]
    pub input: String,
    #[arg(long, value_enum, default_value_t = MethodArg::Auto)]
    pub method: MethodArg,
    /// Relative tolerance under which two weights are treated as equal.
    #[arg(long, default_value_t = DEFAULT_REL_TOL)]
    pub tol: f64,
    /// Monte Carlo sample count (fallback and `check`).
    #[arg(long, default_value_t = 1_000_000)]
    pub mc_samples: u64,
    /// Monte Carlo seed (fallback and `check`).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Replace ill-conditioned analytic results by a Monte Carlo estimate.
    #[arg(long)]
    pub fallback_mc: bool,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Test hook: add this offset to the analytic value before comparing.
    #[arg(long, hide = true, allow_negative_numbers = true)]
    pub corrupt_analytic: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Auto,
    Identical,
    Distinct,
    General,
}

impl From<MethodArg> for MethodChoice {
    fn from(arg: MethodArg) -> Self {
        match arg {
            MethodArg::Auto => MethodChoice::Auto,
            MethodArg::Identical => MethodChoice::Force(Method::Identical),
            MethodArg::Distinct => MethodChoice::Force(Method::Distinct),
            MethodArg::General => MethodChoice::Force(Method::General),
        }
    }
}

/// One parsed `p[,w]` line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputRecord {
    pub p: f64,
    pub w: f64,
}

#[derive(Debug, Error)]
pub enum InputError {
    #[error("cannot read input: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Line { line: u64, message: String },
    #[error("input contains no records")]
    Empty,
}

/// Parses CSV records `p,w` or `p` (weight 1). Blank lines and `#` comments
/// are skipped.
pub fn parse_records<R: Read>(reader: R) -> Result<Vec<InputRecord>, InputError> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut records = Vec::new();
    for result in csv.records() {
        let record = result.map_err(|err| {
            let line = err.position().map_or(0, |p| p.line());
            match err.into_kind() {
                csv::ErrorKind::Io(io) => InputError::Io(io),
                other => InputError::Line {
                    line,
                    message: format!("{other:?}"),
                },
            }
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let fail = |message: String| InputError::Line { line, message };
        let (p_field, w_field) = match record.len() {
            1 => (&record[0], None),
            2 => (&record[0], Some(&record[1])),
            n => return Err(fail(format!("expected `p` or `p,w`, found {n} fields"))),
        };
        let p: f64 = p_field
            .parse()
            .map_err(|_| fail(format!("p-value `{p_field}` is not a number")))?;
        let w: f64 = match w_field {
            None => 1.0,
            Some(field) => field
                .parse()
                .map_err(|_| fail(format!("weight `{field}` is not a number")))?,
        };
        validate_entry(0, p, w).map_err(|err| {
            fail(match err {
                EvidenceError::ZeroPValue { .. } => {
                    "p-value is exactly 0; p-values must lie in (0, 1]".to_string()
                }
                EvidenceError::PValueOutOfRange { value, .. } => {
                    format!("p-value {value} is outside (0, 1]")
                }
                EvidenceError::InvalidWeight { value, .. } => {
                    format!("weight {value} must be positive and finite")
                }
                EvidenceError::Empty => unreachable!(),
            })
        })?;
        records.push(InputRecord { p, w });
    }
    if records.is_empty() {
        return Err(InputError::Empty);
    }
    Ok(records)
}

#[derive(Debug, Serialize)]
struct CombineOutput<'a> {
    p_combined: f64,
    statistic: f64,
    k: usize,
    method: &'static str,
    condition: f64,
    warning: Option<&'a str>,
}

impl<'a> From<&'a CombinedResult> for CombineOutput<'a> {
    fn from(r: &'a CombinedResult) -> Self {
        Self {
            p_combined: r.p_combined,
            statistic: r.statistic.value,
            k: r.statistic.k,
            method: r.method.as_str(),
            condition: r.condition,
            warning: r.warning.as_deref(),
        }
    }
}

#[derive(Debug, Serialize)]
struct CheckOutput {
    p_combined: f64,
    method: &'static str,
    mc_p_hat: f64,
    mc_std_err: f64,
    mc_samples: u64,
    seed: u64,
    z: f64,
    agree: bool,
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I, stdin: &mut dyn Read, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let rendered = err.render().to_string();
            return match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{rendered}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(stderr, "{rendered}");
                    EXIT_INVALID
                }
            };
        }
    };
    let outcome = match &cli.command {
        Command::Combine(args) => run_combine(args, stdin, stdout),
        Command::Check(args) => run_check(args, stdin, stdout),
    };
    match outcome {
        Ok(code) => code,
        Err(failure) => {
            let _ = writeln!(stderr, "error: {}", failure.message);
            failure.code
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<InputError> for Failure {
    fn from(err: InputError) -> Self {
        Failure {
            code: EXIT_INVALID,
            message: err.to_string(),
        }
    }
}

impl From<CombineError> for Failure {
    fn from(err: CombineError) -> Self {
        let code = match err {
            CombineError::Conditioning(_) => EXIT_CONDITIONING,
            _ => EXIT_INVALID,
        };
        Failure {
            code,
            message: err.to_string(),
        }
    }
}

fn load(args: &CommonArgs, stdin: &mut dyn Read) -> Result<WeightedEvidence, Failure> {
    let records = if args.input == "-" {
        parse_records(stdin)?
    } else {
        let path = PathBuf::from(&args.input);
        let file = File::open(&path).map_err(|err| Failure {
            code: EXIT_INVALID,
            message: format!("cannot open {}: {err}", path.display()),
        })?;
        parse_records(file)?
    };
    WeightedEvidence::new(records.iter().map(|r| (r.p, r.w)))
        .map_err(|err| CombineError::from(err).into())
}

fn options(args: &CommonArgs) -> Result<CombineOptions, Failure> {
    if !(args.tol > 0.0 && args.tol.is_finite()) {
        return Err(Failure {
            code: EXIT_INVALID,
            message: format!("--tol must be positive and finite, got {}", args.tol),
        });
    }
    Ok(CombineOptions {
        rel_tol: args.tol,
        method: args.method.into(),
        fallback: args.fallback_mc.then_some(McFallback {
            samples: args.mc_samples,
            seed: args.seed,
        }),
        ..CombineOptions::default()
    })
}

fn emit<T: Serialize>(value: &T, stdout: &mut dyn Write) -> Result<(), Failure> {
    let json = serde_json::to_string(value).expect("plain struct serializes");
    writeln!(stdout, "{json}").map_err(|err| Failure {
        code: EXIT_INVALID,
        message: format!("cannot write output: {err}"),
    })
}

pub fn run_combine(
    args: &CommonArgs,
    stdin: &mut dyn Read,
    stdout: &mut dyn Write,
) -> Result<i32, Failure> {
    let evidence = load(args, stdin)?;
    let result = combine(&evidence, &options(args)?)?;
    emit(&CombineOutput::from(&result), stdout)?;
    Ok(EXIT_OK)
}

pub fn run_check(
    args: &CheckArgs,
    stdin: &mut dyn Read,
    stdout: &mut dyn Write,
) -> Result<i32, Failure> {
    let common = &args.common;
    let evidence = load(common, stdin)?;
    let result = combine(&evidence, &options(common)?)?;
    let analytic = result.p_combined + args.corrupt_analytic.unwrap_or(0.0);
    let estimate = mc_tail(
        &evidence.weights(),
        result.statistic.value,
        common.mc_samples,
        common.seed,
    )
    .map_err(|err| Failure {
        code: EXIT_INVALID,
        message: err.to_string(),
    })?;
    let z = estimate.z_score(analytic);
    let agree = z.abs() <= CHECK_Z_LIMIT;
    emit(
        &CheckOutput {
            p_combined: analytic,
            method: result.method.as_str(),
            mc_p_hat: estimate.p_hat,
            mc_std_err: estimate.std_err,
            mc_samples: estimate.n_samples,
            seed: estimate.seed,
            z,
            agree,
        },
        stdout,
    )?;
    Ok(if agree { EXIT_OK } else { EXIT_DISAGREE })
}
