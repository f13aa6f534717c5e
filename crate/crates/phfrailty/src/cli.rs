//! Command-line surface for the `phfrailty` binary.
//!
//! Subcommands: `fit`, `fit-shared`, `simulate`, `eval`, `nelson-aalen`,
//! `tail-index`. Exit codes: 0 on success, 2 on argument/data errors, 3 on
//! numerical failure.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimation::{fit, BaselineFamily, FitOptions};
use crate::frailty::FrailtyModel;
use crate::multivariate::fit_shared;
use crate::phase_type::PhStructure;
use crate::simulation::{
    nelson_aalen, simulate_dataset, simulate_shared, two_group_dataset, CensoringScheme,
    FrailtyLaw,
};

#[derive(Parser, Debug)]
#[command(name = "phfrailty", version, about = "Phase-type frailty survival models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit a univariate PH frailty model to right-censored data
    Fit(FitArgs),
    /// Fit a shared PH frailty model to clustered data
    FitShared(FitArgs),
    /// Generate survival data from a frailty model
    Simulate(SimulateArgs),
    /// Evaluate model curves on a grid, or produce QQ pairs
    Eval(EvalArgs),
    /// Nelson-Aalen cumulative-hazard estimate
    NelsonAalen(NelsonAalenArgs),
    /// Heavy-tail diagnostics of a fitted model
    TailIndex(TailIndexArgs),
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Input CSV with columns time,status[,x1..xd][,cluster]
    #[arg(long)]
    pub data: PathBuf,
    /// Number of phases of the frailty distribution
    #[arg(long)]
    pub dim: usize,
    /// Structural constraint: general, coxian, erlang, hyperexp
    #[arg(long, default_value = "general")]
    pub structure: String,
    /// Baseline hazard family: constant, gompertz, power
    #[arg(long)]
    pub baseline: String,
    /// RNG seed for the random initialization
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Maximum number of outer EM iterations
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    /// Multiply all observation times by this factor before fitting
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Write output here instead of standard output
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print 17 significant digits instead of 6
    #[arg(long)]
    pub full_precision: bool,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Built-in design; currently only "two-group"
    #[arg(long, conflicts_with = "model")]
    pub preset: Option<String>,
    /// Subjects per group for the two-group preset
    #[arg(long, default_value_t = 500)]
    pub per_group: usize,
    /// Frailty model JSON to sample from
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Number of subjects (covariate-free) when sampling from --model
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Draw one frailty per cluster of this size instead of per subject
    #[arg(long)]
    pub cluster_size: Option<usize>,
    /// Fixed censoring time
    #[arg(long, conflicts_with_all = ["censor_exp", "censor_uniform"])]
    pub censor_fixed: Option<f64>,
    /// Exponential censoring rate
    #[arg(long, conflicts_with = "censor_uniform")]
    pub censor_exp: Option<f64>,
    /// Uniform censoring bounds "lo,hi"
    #[arg(long)]
    pub censor_uniform: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Frailty model JSON
    #[arg(long)]
    pub model: PathBuf,
    /// Evaluation grid "start:stop:step"
    #[arg(long, required_unless_present = "qq")]
    pub grid: Option<String>,
    /// Emit (empirical, model) quantile pairs against this data CSV
    #[arg(long)]
    pub qq: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub full_precision: bool,
}

#[derive(Args, Debug)]
pub struct NelsonAalenArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub full_precision: bool,
}

#[derive(Args, Debug)]
pub struct TailIndexArgs {
    /// Frailty model JSON
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub full_precision: bool,
}

/// Map an error to the process exit code: 3 for numerical failures, 2 for
/// everything else (arguments, data, validation).
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Numeric(_)
        | Error::EigenAmbiguity { .. }
        | Error::StateStarvation { .. }
        | Error::Truncation(_) => 3,
        _ => 2,
    }
}

fn emit(out: &Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, content)?;
            Ok(())
        }
        None => {
            std::io::stdout().write_all(content.as_bytes())?;
            Ok(())
        }
    }
}

fn fmt_num(v: f64, full: bool) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    if full {
        format!("{v:.16e}")
    } else {
        format!("{v:.5e}")
    }
}

/// Round every number in a JSON tree to 6 significant digits.
fn round_json(value: &mut serde_json::Value) {
    match value {
        serde_json::Value::Number(n) => {
            if let Some(f) = n.as_f64() {
                if f.is_finite() && f.fract() != 0.0 {
                    let rounded: f64 = format!("{f:.5e}").parse().unwrap();
                    if let Some(num) = serde_json::Number::from_f64(rounded) {
                        *n = num;
                    }
                }
            }
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(round_json),
        serde_json::Value::Object(map) => map.values_mut().for_each(round_json),
        _ => {}
    }
}

fn to_json_string<T: serde::Serialize>(value: &T, full: bool) -> Result<String> {
    let mut v = serde_json::to_value(value)?;
    if !full {
        round_json(&mut v);
    }
    Ok(serde_json::to_string_pretty(&v)? + "\n")
}

fn load_model(path: &Path) -> Result<FrailtyModel> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::Validation(format!(
            "grid must be start:stop:step, got {spec:?}"
        )));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| {
            p.parse::<f64>()
                .map_err(|_| Error::Validation(format!("bad grid number {p:?}")))
        })
        .collect::<Result<_>>()?;
    let (start, stop, step) = (nums[0], nums[1], nums[2]);
    if !(step > 0.0) || stop < start || start < 0.0 {
        return Err(Error::Validation(
            "grid requires 0 <= start <= stop and step > 0".into(),
        ));
    }
    let mut grid = Vec::new();
    let mut i = 0u64;
    loop {
        let y = start + i as f64 * step;
        if y > stop + 1e-9 * step {
            break;
        }
        grid.push(y);
        i += 1;
    }
    Ok(grid)
}

fn run_fit(args: &FitArgs, shared: bool) -> Result<()> {
    let mut data = Dataset::read_csv(&args.data)?;
    if !(args.scale > 0.0 && args.scale.is_finite()) {
        return Err(Error::Validation("--scale must be positive".into()));
    }
    data.scale_times(args.scale);
    let structure: PhStructure = args.structure.parse()?;
    let baseline: BaselineFamily = args.baseline.parse()?;
    let mut opts = FitOptions::new(args.dim, structure, baseline);
    opts.seed = args.seed;
    opts.max_outer_iter = args.max_iter;
    let result = if shared {
        fit_shared(&data, &opts)?
    } else {
        fit(&data, &opts)?
    };
    emit(&args.out, &to_json_string(&result, args.full_precision)?)
}

fn censoring_from(args: &SimulateArgs) -> Result<CensoringScheme> {
    if let Some(t) = args.censor_fixed {
        return Ok(CensoringScheme::Fixed { time: t });
    }
    if let Some(r) = args.censor_exp {
        return Ok(CensoringScheme::Exponential { rate: r });
    }
    if let Some(spec) = &args.censor_uniform {
        let parts: Vec<&str> = spec.split(',').collect();
        if parts.len() != 2 {
            return Err(Error::Validation("--censor-uniform takes \"lo,hi\"".into()));
        }
        let lo = parts[0]
            .parse()
            .map_err(|_| Error::Validation("bad uniform bound".into()))?;
        let hi = parts[1]
            .parse()
            .map_err(|_| Error::Validation("bad uniform bound".into()))?;
        return Ok(CensoringScheme::Uniform {
            lower: lo,
            upper: hi,
        });
    }
    Ok(CensoringScheme::None)
}

fn run_simulate(args: &SimulateArgs) -> Result<()> {
    let censoring = censoring_from(args)?;
    let data = match (&args.preset, &args.model) {
        (Some(name), None) => {
            if name != "two-group" {
                return Err(Error::Validation(format!("unknown preset {name:?}")));
            }
            if !matches!(censoring, CensoringScheme::None) {
                return Err(Error::Validation(
                    "the two-group preset is uncensored".into(),
                ));
            }
            two_group_dataset(args.per_group, args.seed)?
        }
        (None, Some(path)) => {
            let model = load_model(path)?;
            match args.cluster_size {
                Some(k) => {
                    if k == 0 {
                        return Err(Error::Validation("--cluster-size must be >= 1".into()));
                    }
                    let clusters = args.n / k;
                    if clusters == 0 {
                        return Err(Error::Validation("--n smaller than --cluster-size".into()));
                    }
                    simulate_shared(&model, &vec![k; clusters], &censoring, args.seed)?
                }
                None => {
                    let covs = vec![vec![0.0; model.beta.len()]; args.n];
                    simulate_dataset(&FrailtyLaw::Ph { model }, &covs, &censoring, args.seed)?
                }
            }
        }
        _ => {
            return Err(Error::Validation(
                "pass exactly one of --preset or --model".into(),
            ))
        }
    };
    let mut buf = Vec::new();
    data.write_csv(&mut buf)?;
    emit(&args.out, std::str::from_utf8(&buf).unwrap())
}

fn model_quantile(model: &FrailtyModel, p: f64) -> Result<f64> {
    // invert S(y) = 1 - p by bisection on a doubling bracket
    let target = 1.0 - p;
    let mut hi = 1.0;
    for _ in 0..200 {
        if model.survival(hi, &[])? < target {
            break;
        }
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if model.survival(mid, &[])? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn run_eval(args: &EvalArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let full = args.full_precision;
    let mut out = String::new();

    if let Some(qq_path) = &args.qq {
        if !model.beta.is_empty() {
            return Err(Error::Validation(
                "QQ mode requires a covariate-free model".into(),
            ));
        }
        let data = Dataset::read_csv(qq_path)?;
        let mut times: Vec<f64> = data.observations.iter().map(|o| o.time).collect();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out.push_str("empirical,model\n");
        let n = times.len();
        for (i, &t) in times.iter().enumerate() {
            let p = (i as f64 + 0.5) / n as f64;
            let q = model_quantile(&model, p)?;
            out.push_str(&format!("{},{}\n", fmt_num(t, full), fmt_num(q, full)));
        }
        return emit(&args.out, &out);
    }

    let grid = parse_grid(args.grid.as_deref().unwrap())?;
    out.push_str("y,survival,density,hazard,cumhaz,ez_surviving\n");
    for y in grid {
        let s = model.survival(y, &[])?;
        let f = if y > 0.0 {
            model.density(y, &[])?
        } else {
            f64::NAN
        };
        let h = if y > 0.0 {
            model.hazard(y, &[])?
        } else {
            f64::NAN
        };
        let cumhaz = -s.ln();
        let ez = model.cond_frailty_mean_surviving(y, &[])?;
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt_num(y, full),
            fmt_num(s, full),
            fmt_num(f, full),
            fmt_num(h, full),
            fmt_num(cumhaz, full),
            fmt_num(ez, full)
        ));
    }
    emit(&args.out, &out)
}

fn run_nelson_aalen(args: &NelsonAalenArgs) -> Result<()> {
    let data = Dataset::read_csv(&args.data)?;
    let na = nelson_aalen(&data)?;
    let mut out = String::from("time,cumhaz\n");
    for (k, v) in na.knots.iter().zip(&na.values) {
        out.push_str(&format!(
            "{},{}\n",
            fmt_num(*k, args.full_precision),
            fmt_num(*v, args.full_precision)
        ));
    }
    emit(&args.out, &out)
}

fn run_tail_index(args: &TailIndexArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let ti = model.tail_index()?;
    emit(&args.out, &to_json_string(&ti, args.full_precision)?)
}

/// Execute a parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Fit(args) => run_fit(args, false),
        Command::FitShared(args) => run_fit(args, true),
        Command::Simulate(args) => run_simulate(args),
        Command::Eval(args) => run_eval(args),
        Command::NelsonAalen(args) => run_nelson_aalen(args),
        Command::TailIndex(args) => run_tail_index(args),
    }
}
