//! Replicated finite-sample experiments comparing the two pipelines.

use crate::asymptotics::{mixture_quantile, AsymptoticSummary, ChiSqMixture};
use crate::decision::Instance;
use crate::error::{Error, Result};
use crate::estimators::{fit_eto_with, fit_ieo_with, FitOptions, Method};
use crate::rng::RngStream;
use crate::special::norm_cdf;
use crate::stats::{ks_one_sample, median, ols_slope};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Points in an automatically chosen threshold grid.
pub const AUTO_GRID_POINTS: usize = 101;
/// Failure fraction above which an experiment is rejected.
pub const MAX_FAILURE_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TGrid {
    /// The same thresholds for every sample size.
    Explicit(Vec<f64>),
    /// `AUTO_GRID_POINTS` points on `[0, κ₀^ETO + 5·q₀.₉₉(G_IEO)/n]`.
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n_list: Vec<usize>,
    pub replications: usize,
    pub t_grid: TGrid,
    pub base_seed: u64,
    pub fit: FitOptions,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(n_list: Vec<usize>, replications: usize, t_grid: TGrid, base_seed: u64) -> Result<Self> {
        let cfg = Self {
            n_list,
            replications,
            t_grid,
            base_seed,
            fit: FitOptions::default(),
            threads: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications < 100 {
            return Err(Error::Config(format!("replications = {} (at least 100 required)", self.replications)));
        }
        if self.n_list.is_empty() || self.n_list[0] == 0 || !strictly_increasing(self.n_list.iter().map(|&n| n as f64)) {
            return Err(Error::Config("n_list must be a nonempty strictly increasing list of positive sizes".into()));
        }
        if let TGrid::Explicit(t) = &self.t_grid {
            if t.is_empty() || !strictly_increasing(t.iter().copied()) || t.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config("t_grid must be a nonempty strictly increasing list".into()));
            }
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        Ok(())
    }
}

fn strictly_increasing(mut it: impl Iterator<Item = f64>) -> bool {
    let Some(mut prev) = it.next() else { return true };
    for v in it {
        if !(v > prev) {
            return false;
        }
        prev = v;
    }
    true
}

/// Empirical tail curve `P̂(R >= t)` of one method at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailCurve {
    pub method: Method,
    pub n: usize,
    pub t_grid: Vec<f64>,
    pub probs: Vec<f64>,
    pub ci_halfwidth: Vec<f64>,
    pub raw_regrets: Vec<f64>,
}

impl TailCurve {
    pub fn from_regrets(method: Method, n: usize, t_grid: &[f64], regrets: Vec<f64>) -> Self {
        let m = regrets.len() as f64;
        let mut sorted = regrets.clone();
        sorted.sort_by(f64::total_cmp);
        let (probs, ci_halfwidth) = t_grid
            .iter()
            .map(|&t| {
                let above = sorted.len() - sorted.partition_point(|r| *r < t);
                let p = above as f64 / m;
                (p, 1.96 * (p * (1.0 - p) / m).sqrt())
            })
            .unzip();
        Self {
            method,
            n,
            t_grid: t_grid.to_vec(),
            probs,
            ci_halfwidth,
            raw_regrets: regrets,
        }
    }
}

/// `D(t) = P̂(R_ETO >= t) - P̂(R_IEO >= t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffCurve {
    pub n: usize,
    pub t_grid: Vec<f64>,
    pub d: Vec<f64>,
    pub ci_halfwidth: Vec<f64>,
    /// Both curves come from the same datasets.
    pub common_random_numbers: bool,
}

pub fn diff_curve(eto: &TailCurve, ieo: &TailCurve) -> Result<DiffCurve> {
    if eto.t_grid != ieo.t_grid || eto.n != ieo.n {
        return Err(Error::Invalid("tail curves differ in threshold grid or sample size".into()));
    }
    Ok(DiffCurve {
        n: eto.n,
        t_grid: eto.t_grid.clone(),
        d: eto.probs.iter().zip(&ieo.probs).map(|(a, b)| a - b).collect(),
        ci_halfwidth: eto.ci_halfwidth.iter().zip(&ieo.ci_halfwidth).map(|(a, b)| a.hypot(*b)).collect(),
        common_random_numbers: eto.raw_regrets.len() == ieo.raw_regrets.len(),
    })
}

/// One replication; regrets are unclamped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub index: u64,
    pub eto_regret: Option<f64>,
    pub ieo_regret: Option<f64>,
    pub dataset_hash: u64,
    pub failure: Option<String>,
}

/// Results at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeResult {
    pub n: usize,
    pub eto: TailCurve,
    pub ieo: TailCurve,
    pub diff: DiffCurve,
    pub failures: usize,
    pub failure_fraction: f64,
    /// Most negative regret seen before clamping.
    pub min_raw_regret: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub base_seed: u64,
    pub replications: usize,
    pub t_grid_rule: String,
    pub sizes: Vec<SizeResult>,
}

impl ExperimentResult {
    /// Fails when some sample size lost more than 1% of its replications.
    pub fn check_quality(&self) -> Result<()> {
        for s in &self.sizes {
            if s.failure_fraction > MAX_FAILURE_FRACTION {
                return Err(Error::Experiment(format!(
                    "{} of {} replications failed at n = {}",
                    s.failures, self.replications, s.n
                )));
            }
        }
        Ok(())
    }
}

/// The threshold grid used at sample size `n`.
pub fn resolve_t_grid(grid: &TGrid, n: usize, summary: Option<&AsymptoticSummary>) -> Result<Vec<f64>> {
    match grid {
        TGrid::Explicit(t) => Ok(t.clone()),
        TGrid::Auto => {
            let s = summary.ok_or_else(|| Error::Config("an automatic t_grid needs the asymptotic summary".into()))?;
            let q99 = mixture_quantile(&ChiSqMixture::new(s.lambda_ieo.clone())?, 0.99)?;
            let hi = s.kappa0_eto + 5.0 * q99 / n as f64;
            let hi = if hi > 0.0 { hi } else { 1.0 / n as f64 };
            Ok((0..AUTO_GRID_POINTS).map(|i| hi * i as f64 / (AUTO_GRID_POINTS - 1) as f64).collect())
        }
    }
}

fn t_grid_rule(grid: &TGrid) -> String {
    match grid {
        TGrid::Explicit(_) => "explicit".into(),
        TGrid::Auto => format!("{AUTO_GRID_POINTS} equispaced points on [0, kappa0_eto + 5*q99(G_ieo)/n]"),
    }
}

fn replicate(inst: &Instance, n: usize, index: u64, base_seed: u64, fit: &FitOptions) -> Replication {
    let data = match inst.truth.sample(n, RngStream::new(base_seed, index)) {
        Ok(d) => d,
        Err(e) => {
            return Replication {
                index,
                eto_regret: None,
                ieo_regret: None,
                dataset_hash: 0,
                failure: Some(e.to_string()),
            }
        }
    };
    let hash = data.content_hash();
    let run = || -> Result<(f64, f64)> {
        let eto = fit_eto_with(&data, &inst.family, &inst.model, fit)?;
        let ieo = fit_ieo_with(&data, &inst.family, &inst.model, fit)?;
        if eto.dataset_hash != hash || ieo.dataset_hash != hash {
            return Err(Error::Experiment("fits were not computed on the replication's dataset".into()));
        }
        Ok((inst.regret_raw(&eto.omega_hat), inst.regret_raw(&ieo.omega_hat)))
    };
    match run() {
        Ok((e, i)) => Replication {
            index,
            eto_regret: Some(e),
            ieo_regret: Some(i),
            dataset_hash: hash,
            failure: None,
        },
        Err(err) => Replication {
            index,
            eto_regret: None,
            ieo_regret: None,
            dataset_hash: hash,
            failure: Some(err.to_string()),
        },
    }
}

/// Runs every replication at every sample size without the quality check.
pub fn run_experiment_unchecked(
    inst: &Instance,
    cfg: &ExperimentConfig,
    summary: Option<&AsymptoticSummary>,
) -> Result<ExperimentResult> {
    cfg.validate()?;
    let work = || -> Result<Vec<SizeResult>> {
        cfg.n_list
            .iter()
            .map(|&n| {
                let grid = resolve_t_grid(&cfg.t_grid, n, summary)?;
                let reps: Vec<Replication> = (0..cfg.replications as u64)
                    .into_par_iter()
                    .map(|m| replicate(inst, n, m, cfg.base_seed, &cfg.fit))
                    .collect();
                Ok(aggregate(n, &grid, &reps, cfg.replications))
            })
            .collect()
    };
    let sizes = match cfg.threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::Experiment(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    Ok(ExperimentResult {
        base_seed: cfg.base_seed,
        replications: cfg.replications,
        t_grid_rule: t_grid_rule(&cfg.t_grid),
        sizes,
    })
}

/// Runs the experiment and rejects it when more than 1% of replications fail.
pub fn run_experiment(inst: &Instance, cfg: &ExperimentConfig, summary: Option<&AsymptoticSummary>) -> Result<ExperimentResult> {
    let out = run_experiment_unchecked(inst, cfg, summary)?;
    out.check_quality()?;
    Ok(out)
}

fn aggregate(n: usize, grid: &[f64], reps: &[Replication], total: usize) -> SizeResult {
    let ok: Vec<&Replication> = reps.iter().filter(|r| r.failure.is_none()).collect();
    for r in reps.iter().filter(|r| r.failure.is_some()) {
        log::warn!("replication {} at n = {n} excluded: {}", r.index, r.failure.as_deref().unwrap_or(""));
    }
    let raw_e: Vec<f64> = ok.iter().map(|r| r.eto_regret.expect("fit")).collect();
    let raw_i: Vec<f64> = ok.iter().map(|r| r.ieo_regret.expect("fit")).collect();
    let min_raw_regret = raw_e.iter().chain(&raw_i).copied().fold(f64::INFINITY, f64::min);
    let clamp = |v: &Vec<f64>| v.iter().map(|r| r.max(0.0)).collect::<Vec<f64>>();
    let eto = TailCurve::from_regrets(Method::Eto, n, grid, clamp(&raw_e));
    let ieo = TailCurve::from_regrets(Method::Ieo, n, grid, clamp(&raw_i));
    let diff = diff_curve(&eto, &ieo).expect("same grid");
    let failures = total - ok.len();
    SizeResult {
        n,
        eto,
        ieo,
        diff,
        failures,
        failure_fraction: failures as f64 / total as f64,
        min_raw_regret,
    }
}

/// Comma-separated rows `t,p_eto,ci_eto,p_ieo,ci_ieo,d,ci_d`.
pub fn curves_csv(s: &SizeResult) -> String {
    let mut out = String::from("t,p_eto,ci_eto,p_ieo,ci_ieo,d,ci_d\n");
    for k in 0..s.diff.t_grid.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.diff.t_grid[k], s.eto.probs[k], s.eto.ci_halfwidth[k], s.ieo.probs[k], s.ieo.ci_halfwidth[k], s.diff.d[k],
            s.diff.ci_halfwidth[k]
        );
    }
    out
}

/// Comma-separated rows `t,d,ci_d`.
pub fn diff_csv(d: &DiffCurve) -> String {
    let mut out = String::from("t,d,ci_d\n");
    for k in 0..d.t_grid.len() {
        let _ = writeln!(out, "{},{},{}", d.t_grid[k], d.d[k], d.ci_halfwidth[k]);
    }
    out
}

/// Slope of `log median|R - κ₀|` against `log n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeCheck {
    pub medians: Vec<f64>,
    pub slope: f64,
    pub expected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub n_list: Vec<usize>,
    /// KS distance of `n(R_IEO - κ₀^IEO)` from the IEO chi-square mixture.
    pub ks_ieo: Vec<f64>,
    /// KS distance of `n(R_ETO - κ₀^ETO)` from the ETO mixture when that limit applies.
    pub ks_eto_second_order: Option<Vec<f64>>,
    /// KS distance of `√n(R_ETO - κ₀^ETO)` from `N(0, s²)`.
    pub ks_eto_first_order: Option<Vec<f64>>,
    pub first_order_skipped: Option<String>,
    pub ieo: SlopeCheck,
    pub eto: SlopeCheck,
}

/// Below this `s` the first-order ETO term is treated as vanishing.
pub const FIRST_ORDER_FLOOR: f64 = 1e-8;

pub fn scaling_check(result: &ExperimentResult, summary: &AsymptoticSummary) -> Result<ScalingReport> {
    if result.sizes.len() < 3 {
        return Err(Error::Invalid("scaling checks need at least three sample sizes".into()));
    }
    let n_list: Vec<usize> = result.sizes.iter().map(|s| s.n).collect();
    let ieo_law = ChiSqMixture::new(summary.lambda_ieo.clone())?.law();
    let eto_mix = ChiSqMixture::new(summary.lambda_eto.clone())?;
    let first_order = summary.s_eto > FIRST_ORDER_FLOOR;

    let scaled = |v: &[f64], kappa: f64, factor: f64| v.iter().map(|r| factor * (r - kappa)).collect::<Vec<f64>>();
    let mut ks_ieo = Vec::new();
    let mut ks_eto2 = Vec::new();
    let mut ks_eto1 = Vec::new();
    for s in &result.sizes {
        let n = s.n as f64;
        ks_ieo.push(ks_one_sample(&scaled(&s.ieo.raw_regrets, summary.kappa0_ieo, n), |x| ieo_law.cdf(x)));
        if first_order {
            let sd = summary.s_eto;
            ks_eto1.push(ks_one_sample(&scaled(&s.eto.raw_regrets, summary.kappa0_eto, n.sqrt()), |x| norm_cdf(x / sd)));
        } else {
            let law = eto_mix.law();
            ks_eto2.push(ks_one_sample(&scaled(&s.eto.raw_regrets, summary.kappa0_eto, n), |x| law.cdf(x)));
        }
    }
    let slope = |pick: &dyn Fn(&SizeResult) -> &Vec<f64>, kappa: f64, expected: f64| {
        let medians: Vec<f64> = result
            .sizes
            .iter()
            .map(|s| median(&pick(s).iter().map(|r| (r - kappa).abs()).collect::<Vec<f64>>()))
            .collect();
        let x: Vec<f64> = n_list.iter().map(|&n| (n as f64).ln()).collect();
        let y: Vec<f64> = medians.iter().map(|m| m.max(f64::MIN_POSITIVE).ln()).collect();
        SlopeCheck {
            slope: ols_slope(&x, &y),
            medians,
            expected,
        }
    };
    Ok(ScalingReport {
        n_list: n_list.clone(),
        ks_ieo,
        ks_eto_second_order: (!first_order).then_some(ks_eto2),
        ks_eto_first_order: first_order.then_some(ks_eto1),
        first_order_skipped: (!first_order).then(|| "gradient of v0(omega_theta) vanishes at theta_kl".to_string()),
        ieo: slope(&|s| &s.ieo.raw_regrets, summary.kappa0_ieo, -1.0),
        eto: slope(&|s| &s.eto.raw_regrets, summary.kappa0_eto, if first_order { -0.5 } else { -1.0 }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asymptotics::{summarize, TheoryOptions};
    use crate::decision::CostModel;
    use crate::model::{Dataset, ParamFamily, TrueDistribution};

    fn wellspec() -> Instance {
        Instance::new(
            ParamFamily::normal_1d(1.0).unwrap(),
            TrueDistribution::mixture_1d(&[1.0], &[0.0], 1.0).unwrap(),
            CostModel::newsvendor_1d(1.0, 1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(ExperimentConfig::new(vec![100], 99, TGrid::Auto, 1).is_err());
        assert!(ExperimentConfig::new(vec![100, 100], 100, TGrid::Auto, 1).is_err());
        assert!(ExperimentConfig::new(vec![100], 100, TGrid::Explicit(vec![0.1, 0.1]), 1).is_err());
        assert!(ExperimentConfig::new(vec![10, 100], 100, TGrid::Explicit(vec![0.0, 0.1]), 1).is_ok());
    }

    #[test]
    fn point_mass_data_gives_zero_regret() {
        let emp = TrueDistribution::empirical(Dataset::from_scalars(&[0.7]).unwrap()).unwrap();
        let inst = Instance::new(ParamFamily::normal_1d(1.0).unwrap(), emp, CostModel::newsvendor_1d(1.0, 1.0).unwrap()).unwrap();
        let cfg = ExperimentConfig::new(vec![20], 100, TGrid::Explicit(vec![1e-6, 0.5]), 3).unwrap();
        let out = run_experiment(&inst, &cfg, None).unwrap();
        let s = &out.sizes[0];
        assert!(s.eto.raw_regrets.iter().chain(&s.ieo.raw_regrets).all(|r| r.abs() <= 1e-8));
        assert!(s.eto.probs.iter().chain(&s.ieo.probs).all(|p| *p == 0.0));
    }

    #[test]
    fn curves_are_monotone_and_deterministic() {
        let inst = wellspec();
        let summary = summarize(&inst, &TheoryOptions::default()).unwrap();
        let mut cfg = ExperimentConfig::new(vec![50, 100], 200, TGrid::Auto, 17).unwrap();
        cfg.threads = Some(1);
        let a = run_experiment(&inst, &cfg, Some(&summary)).unwrap();
        cfg.threads = Some(4);
        let b = run_experiment(&inst, &cfg, Some(&summary)).unwrap();
        for (x, y) in a.sizes.iter().zip(&b.sizes) {
            assert_eq!(curves_csv(x), curves_csv(y));
            assert_eq!(x.eto.t_grid.len(), AUTO_GRID_POINTS);
            for c in [&x.eto, &x.ieo] {
                assert!(c.probs.windows(2).all(|w| w[0] >= w[1]));
                assert!(c.ci_halfwidth.iter().all(|h| *h <= 1.96 * (0.25 / 200.0f64).sqrt() + 1e-15));
            }
            assert!(x.diff.d.iter().all(|d| (-1.0..=1.0).contains(d)));
            assert!(x.min_raw_regret >= -1e-8);
        }
        assert!(curves_csv(&a.sizes[0]).starts_with("t,p_eto,ci_eto,p_ieo,ci_ieo,d,ci_d\n"));
    }

    #[test]
    fn diff_of_identical_curves_is_zero() {
        let c = TailCurve::from_regrets(Method::Eto, 10, &[0.0, 0.5, 1.0], vec![0.2, 0.7, 1.4]);
        let d = diff_curve(&c, &c).unwrap();
        assert!(d.d.iter().all(|v| *v == 0.0));
        assert_eq!(c.probs, vec![1.0, 2.0 / 3.0, 1.0 / 3.0]);
        let other = TailCurve::from_regrets(Method::Ieo, 10, &[0.0, 0.6, 1.0], vec![0.2, 0.7, 1.4]);
        assert!(diff_curve(&c, &other).is_err());
    }

    #[test]
    fn quality_gate_rejects_failures() {
        let mut r = ExperimentResult {
            base_seed: 0,
            replications: 100,
            t_grid_rule: String::new(),
            sizes: vec![],
        };
        let eto = TailCurve::from_regrets(Method::Eto, 5, &[0.0], vec![0.0; 98]);
        let ieo = TailCurve::from_regrets(Method::Ieo, 5, &[0.0], vec![0.0; 98]);
        let diff = diff_curve(&eto, &ieo).unwrap();
        r.sizes.push(SizeResult {
            n: 5,
            eto,
            ieo,
            diff,
            failures: 2,
            failure_fraction: 0.02,
            min_raw_regret: 0.0,
        });
        assert!(matches!(r.check_quality(), Err(Error::Experiment(_))));
    }

    #[test]
    fn scaling_needs_three_sizes() {
        let inst = wellspec();
        let summary = summarize(&inst, &TheoryOptions::default()).unwrap();
        let cfg = ExperimentConfig::new(vec![50, 100], 100, TGrid::Explicit(vec![0.0]), 1).unwrap();
        let out = run_experiment(&inst, &cfg, Some(&summary)).unwrap();
        assert!(scaling_check(&out, &summary).is_err());
        let cfg = ExperimentConfig::new(vec![100, 200, 400], 100, TGrid::Explicit(vec![0.0]), 1).unwrap();
        let out = run_experiment(&inst, &cfg, Some(&summary)).unwrap();
        let rep = scaling_check(&out, &summary).unwrap();
        assert!(rep.first_order_skipped.is_some());
        assert_eq!(rep.ks_ieo.len(), 3);
    }
}
