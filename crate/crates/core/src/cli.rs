//! Batch front-end: `theory`, `simulate` and `bounds` subcommands.

use crate::asymptotics::{
    classify_regime, generalization_bound, lower_bound_d, summarize, upper_bound_d, AsymptoticSummary, BoundReport,
    RademacherInputs, Regime,
};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::montecarlo::{curves_csv, diff_csv, run_experiment_unchecked, scaling_check, ExperimentResult, ScalingReport};
use crate::stats::median;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Parser)]
#[command(name = "regret-dissect", version, about = "ETO vs IEO regret theory and Monte Carlo checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Population quantities: κ₀ terms, δ, B₀, second-order spectra.
    Theory(CommonArgs),
    /// Replicated regret experiments and tail curves.
    Simulate(CommonArgs),
    /// Tail-difference bounds and regime classification at (n, t).
    Bounds(BoundsArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Keep raw regrets in the JSON output.
    #[arg(long)]
    pub raw: bool,
}

#[derive(Debug, Clone, Args)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub budget_lower: Option<f64>,
    #[arg(long)]
    pub budget_upper: Option<f64>,
    /// Reuse a summary written by `theory` instead of recomputing it.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub phase: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub n: usize,
    pub failures: usize,
    pub failure_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_path: String,
    /// Git blob hash (SHA-256 object format) of the config bytes.
    pub config_hash: String,
    pub config: serde_json::Value,
    pub base_seed: Option<u64>,
    pub threads: Option<usize>,
    pub timings: Vec<PhaseTiming>,
    pub outputs: Vec<String>,
    pub exclusions: Vec<Exclusion>,
    pub status: String,
}

impl RunManifest {
    fn save(&self, out: &Path) -> Result<()> {
        fs::write(out.join("manifest.json"), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// `sha256("blob <len>\0" ++ bytes)` in lowercase hex.
pub fn git_blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

struct Run {
    out: PathBuf,
    manifest: RunManifest,
    clock: Instant,
}

impl Run {
    fn start(command: &str, args: &CommonArgs) -> Result<(Self, RunConfig)> {
        let bytes = fs::read(&args.config).map_err(|e| Error::Config(format!("{}: {e}", args.config.display())))?;
        let text = String::from_utf8(bytes.clone()).map_err(|_| Error::Config("config is not UTF-8".into()))?;
        let cfg = RunConfig::from_json(&text)?;
        fs::create_dir_all(&args.out)?;
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_path: args.config.display().to_string(),
            config_hash: git_blob_hash(&bytes),
            config: serde_json::to_value(&cfg)?,
            base_seed: cfg.experiment.as_ref().map(|e| e.base_seed),
            threads: args.threads.or(cfg.experiment.as_ref().and_then(|e| e.threads)),
            timings: Vec::new(),
            outputs: Vec::new(),
            exclusions: Vec::new(),
            status: "running".into(),
        };
        let run = Self {
            out: args.out.clone(),
            manifest,
            clock: Instant::now(),
        };
        Ok((run, cfg))
    }

    fn phase<T>(&mut self, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        self.manifest.status = format!("running {name}");
        self.manifest.save(&self.out)?;
        let t0 = Instant::now();
        let out = f();
        self.manifest.timings.push(PhaseTiming {
            phase: name.into(),
            seconds: t0.elapsed().as_secs_f64(),
        });
        out
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.out.join(name);
        fs::write(&path, contents)?;
        self.manifest.outputs.push(path.display().to_string());
        Ok(())
    }

    fn finish(mut self, status: &str) -> Result<()> {
        self.manifest.timings.push(PhaseTiming {
            phase: "total".into(),
            seconds: self.clock.elapsed().as_secs_f64(),
        });
        self.manifest.status = status.into();
        self.manifest.save(&self.out)
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
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
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Theory(a) => cmd_theory(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Bounds(a) => cmd_bounds(a),
    }
}

fn fmt_list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Human-readable table of the summary.
pub fn summary_table(s: &AsymptoticSummary) -> String {
    let rows: Vec<(&str, String)> = vec![
        ("well-specified", s.well_specified.to_string()),
        ("theta_kl", fmt_list(&s.theta_kl)),
        ("theta_star", fmt_list(&s.theta_star)),
        ("omega_star", fmt_list(&s.omega_star)),
        ("kappa0_eto", format!("{:.6}", s.kappa0_eto)),
        ("kappa0_ieo", format!("{:.6}", s.kappa0_ieo)),
        ("delta", format!("{:.6}", s.delta)),
        ("B0", format!("{:.6}", s.b0)),
        ("lambda_eto", fmt_list(&s.lambda_eto)),
        ("lambda_ieo", fmt_list(&s.lambda_ieo)),
        ("tau1", format!("{:.6}", s.tau1)),
        ("tau2", format!("{:.6}", s.tau2)),
        ("tau3", format!("{:.6}", s.tau3)),
        ("tau3 (KL Hessian)", format!("{:.6}", s.tau3_kl_hessian)),
        ("tau6", format!("{:.6}", s.tau6)),
        ("s_eto", format!("{:.6}", s.s_eto)),
    ];
    rows.iter().map(|(k, v)| format!("{k:<20}{v}\n")).collect()
}

fn cmd_theory(args: &CommonArgs) -> Result<()> {
    let (mut run, cfg) = Run::start("theory", args)?;
    let summary = run.phase("theory", || summarize(&cfg.instance()?, &cfg.theory))?;
    run.write("summary.json", &summary.to_json()?)?;
    print!("{}", summary_table(&summary));
    run.finish("ok")
}

#[derive(Debug, Clone, Serialize)]
struct SimulationOutput<'a> {
    t_grid_rule: &'a str,
    base_seed: u64,
    replications: usize,
    sizes: Vec<serde_json::Value>,
    scaling: Option<&'a ScalingReport>,
    scaling_skipped: Option<String>,
}

fn strip_raw(result: &ExperimentResult, raw: bool) -> Result<Vec<serde_json::Value>> {
    result
        .sizes
        .iter()
        .map(|s| {
            let mut v = serde_json::to_value(s)?;
            if !raw {
                for key in ["eto", "ieo"] {
                    if let Some(obj) = v[key].as_object_mut() {
                        obj.remove("raw_regrets");
                    }
                }
            }
            Ok(v)
        })
        .collect()
}

fn cmd_simulate(args: &CommonArgs) -> Result<()> {
    let (mut run, cfg) = Run::start("simulate", args)?;
    let spec = cfg
        .experiment
        .clone()
        .ok_or_else(|| Error::Config("missing field `experiment`".into()))?;
    let mut exp = cfg.experiment_config(&spec)?;
    if args.threads.is_some() {
        exp.threads = args.threads;
    }
    let inst = cfg.instance()?;
    let summary = run.phase("theory", || summarize(&inst, &cfg.theory));
    let summary = match (summary, &exp.t_grid) {
        (Ok(s), _) => Some(s),
        (Err(e), crate::montecarlo::TGrid::Auto) => return Err(e),
        (Err(e), _) => {
            log::warn!("asymptotic summary unavailable, scaling checks skipped: {e}");
            None
        }
    };
    if let Some(s) = &summary {
        run.write("summary.json", &s.to_json()?)?;
    }
    let result = run.phase("simulate", || run_experiment_unchecked(&inst, &exp, summary.as_ref()))?;
    for s in &result.sizes {
        run.write(&format!("curves_{}.csv", s.n), &curves_csv(s))?;
        run.write(&format!("diff_{}.csv", s.n), &diff_csv(&s.diff))?;
        run.manifest.exclusions.push(Exclusion {
            n: s.n,
            failures: s.failures,
            failure_fraction: s.failure_fraction,
        });
    }
    let (scaling, scaling_skipped) = match &summary {
        Some(sm) if result.sizes.len() >= 3 => (Some(scaling_check(&result, sm)?), None),
        Some(_) => (None, Some("fewer than three sample sizes".to_string())),
        None => (None, Some("asymptotic summary unavailable".to_string())),
    };
    let output = SimulationOutput {
        t_grid_rule: &result.t_grid_rule,
        base_seed: result.base_seed,
        replications: result.replications,
        sizes: strip_raw(&result, args.raw)?,
        scaling: scaling.as_ref(),
        scaling_skipped,
    };
    run.write("experiment.json", &serde_json::to_string_pretty(&output)?)?;

    println!("{:<8}{:>10}{:>16}{:>16}{:>12}", "n", "failures", "median R_eto", "median R_ieo", "max |D|");
    for s in &result.sizes {
        let max_d = s.diff.d.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        println!(
            "{:<8}{:>10}{:>16.6e}{:>16.6e}{:>12.4}",
            s.n,
            s.failures,
            median(&s.eto.raw_regrets),
            median(&s.ieo.raw_regrets),
            max_d
        );
    }
    if let Some(sc) = &scaling {
        println!("slope median|R_ieo - kappa0_ieo| vs n: {:.3} (expected {})", sc.ieo.slope, sc.ieo.expected);
        println!("slope median|R_eto - kappa0_eto| vs n: {:.3} (expected {})", sc.eto.slope, sc.eto.expected);
    }
    match result.check_quality() {
        Ok(()) => run.finish("ok"),
        Err(e) => {
            run.finish("experiment-quality-failed")?;
            Err(e)
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct BoundsOutput {
    n: usize,
    t: f64,
    epsilon: Option<f64>,
    budget_lower: f64,
    budget_upper: f64,
    lower: BoundReport,
    upper: Option<BoundReport>,
    upper_notice: Option<String>,
    generalization: Option<f64>,
    regime: Regime,
    regime_label: String,
    prediction: String,
    thresholds: crate::asymptotics::RegimeThresholds,
}

fn cmd_bounds(args: &BoundsArgs) -> Result<()> {
    let (mut run, cfg) = Run::start("bounds", &args.common)?;
    let spec = cfg.bounds.clone().unwrap_or_default();
    let n = args.n.or(spec.n).ok_or_else(|| Error::Config("missing field `bounds.n` (or --n)".into()))?;
    let t = args.t.or(spec.t).ok_or_else(|| Error::Config("missing field `bounds.t` (or --t)".into()))?;
    if n == 0 || !t.is_finite() {
        return Err(Error::Config("bounds: n must be positive and t finite".into()));
    }
    let budget_lower = args.budget_lower.unwrap_or(spec.budget_lower);
    let budget_upper = args.budget_upper.unwrap_or(spec.budget_upper);
    let summary = match &args.summary {
        Some(p) => AsymptoticSummary::from_json(&fs::read_to_string(p)?)?,
        None => run.phase("theory", || summarize(&cfg.instance()?, &cfg.theory))?,
    };
    let lower = lower_bound_d(&summary, n, t, budget_lower)?;
    let mut epsilon = args.epsilon.or(spec.epsilon);
    if epsilon.is_none() && summary.delta > 0.0 && summary.tau1 > 0.0 {
        let eps_max = summary.tau1 / (summary.tau1 + summary.tau6) * (t - summary.kappa0_ieo) - summary.delta;
        if eps_max > 0.0 {
            epsilon = Some(0.5 * eps_max);
        }
    }
    let (upper, upper_notice) = match upper_bound_d(&summary, n, t, epsilon.unwrap_or(0.0), budget_upper) {
        Ok(r) => (Some(r), None),
        Err(e @ (Error::Region(_) | Error::Precondition(_))) => (None, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    let generalization = match &spec.generalization {
        Some(g) => Some(generalization_bound(&RademacherInputs {
            l_c: g.l_c,
            rho_c: g.rho_c,
            b_c: g.b_c,
            d_theta: g.d_theta,
            e_theta: g.e_theta,
            c_abs: g.c_abs,
            q: summary.dim_q(),
            n,
            confidence: g.confidence,
        })?),
        None => None,
    };
    let regime = classify_regime(&summary, n, &cfg.regime_thresholds)?;
    let out = BoundsOutput {
        n,
        t,
        epsilon,
        budget_lower,
        budget_upper,
        lower,
        upper,
        upper_notice: upper_notice.clone(),
        generalization,
        regime,
        regime_label: regime.label().into(),
        prediction: regime.prediction(&summary, t).into(),
        thresholds: cfg.regime_thresholds,
    };
    run.write("bounds.json", &serde_json::to_string_pretty(&out)?)?;

    println!("n = {n}, t = {t}");
    println!("lower bound    {:<16}{:.6}", format!("{:?}", lower.case), lower.value);
    match (&upper, &upper_notice) {
        (Some(u), _) => println!("upper bound    {:<16}{:.6} (mc se {:.1e})", format!("{:?}", u.case), u.value, u.std_error),
        (None, Some(msg)) => println!("upper bound    notice: {msg}"),
        _ => {}
    }
    if let Some(g) = generalization {
        println!("generalization {g:.6}");
    }
    println!("regime         {} -> {}", regime.label(), regime.prediction(&summary, t));
    let th = &cfg.regime_thresholds;
    println!(
        "thresholds     large_gap_factor = {}, approx_zero = {:e}, exact_zero = {:e} (configurable)",
        th.large_gap_factor, th.approx_zero, th.exact_zero
    );
    run.finish("ok")
}
