//! Desk-scale acceptance suite. Run with `cargo test --test acceptance -- --nocapture`
//! to see one PASS/FAIL line per criterion.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use regret_dissect::asymptotics::{
    dominance_tests, gaussian_tail_bounds, generalization_bound, lower_bound_from, mixture_interval, summarize,
    AsymptoticSummary, ChiSqMixture, RademacherInputs, TheoryOptions,
};
use regret_dissect::config::RunConfig;
use regret_dissect::decision::{CostModel, Instance};
use regret_dissect::model::{ParamFamily, TrueDistribution};
use regret_dissect::montecarlo::{run_experiment, scaling_check, ExperimentConfig, ExperimentResult, TGrid};
use regret_dissect::rng::RngStream;
use regret_dissect::special::norm_cdf;
use regret_dissect::stats::{ks_one_sample, ks_two_sample};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

const WELLSPEC: &str = include_str!("../examples/wellspec.json");
const MISSPEC: &str = include_str!("../examples/misspec.json");

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn instance(text: &str) -> Instance {
    RunConfig::from_json(text).unwrap().instance().unwrap()
}

fn summary(inst: &Instance) -> AsymptoticSummary {
    summarize(inst, &TheoryOptions::default()).unwrap()
}

fn random_mixture(seed: u64) -> Instance {
    let mut rng = RngStream::new(seed, 7).rng();
    let mut u = || rng.random::<f64>();
    let k = 2 + (u() * 3.0) as usize;
    let mut w: Vec<f64> = (0..k).map(|_| 0.1 + u()).collect();
    let tot: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= tot);
    let means: Vec<f64> = (0..k).map(|_| 5.0 * u() - 2.5).collect();
    let truth = TrueDistribution::mixture_1d(&w, &means, 0.4 + u()).unwrap();
    let fam = ParamFamily::normal_1d(0.5 + u()).unwrap();
    Instance::new(fam, truth, CostModel::newsvendor_1d(0.5 + u(), 0.5 + 4.0 * u()).unwrap()).unwrap()
}

fn wellspec_2d_newsvendor() -> Instance {
    let fam = ParamFamily::gaussian_location(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.25])), None).unwrap();
    let truth = TrueDistribution::in_family(fam.clone(), DVector::from_vec(vec![0.5, -1.0])).unwrap();
    Instance::new(fam, truth, CostModel::newsvendor(vec![1.0, 2.0], vec![3.0, 1.0], 0.0).unwrap()).unwrap()
}

fn wellspec_2d_portfolio() -> Instance {
    let cov = DMatrix::from_row_slice(2, 2, &[0.5, 0.2, 0.2, 0.4]);
    let fam = ParamFamily::gaussian_full_mean(cov, None).unwrap();
    let truth = TrueDistribution::in_family(fam.clone(), DVector::from_vec(vec![0.3, 0.1])).unwrap();
    Instance::new(fam, truth, CostModel::portfolio(0.8, 2).unwrap()).unwrap()
}

fn wellspec_discrete() -> Instance {
    let fam = ParamFamily::finite_discrete(vec![vec![1.0, 0.0], vec![0.0, 1.5], vec![-0.5, -0.5]]).unwrap();
    let truth = TrueDistribution::in_family(fam.clone(), DVector::from_vec(vec![0.3, 0.5, 0.2])).unwrap();
    Instance::new(fam, truth, CostModel::portfolio(1.0, 2).unwrap()).unwrap()
}

/// CDF of `λ·χ²(1)`.
fn scaled_chi2_cdf(lambda: f64) -> impl Fn(f64) -> f64 {
    move |x| if x <= 0.0 { 0.0 } else { 2.0 * norm_cdf((x / lambda).sqrt()) - 1.0 }
}

struct Shared {
    well_summary: AsymptoticSummary,
    well_run: ExperimentResult,
    well_t_tilde: Vec<f64>,
    miss_summary: AsymptoticSummary,
    miss_run: ExperimentResult,
}

fn shared() -> Shared {
    let well = instance(WELLSPEC);
    let well_summary = summary(&well);
    let n = 2000;
    let well_t_tilde = vec![1.0, 2.0, 4.0];
    let grid = well_t_tilde.iter().map(|tt| well_summary.kappa0_ieo + tt / n as f64).collect();
    let cfg = ExperimentConfig::new(vec![n], 5000, TGrid::Explicit(grid), 11).unwrap();
    let well_run = run_experiment(&well, &cfg, Some(&well_summary)).unwrap();

    let miss = instance(MISSPEC);
    let miss_summary = summary(&miss);
    let mid = 0.5 * (miss_summary.kappa0_ieo + miss_summary.kappa0_eto);
    let cfg = ExperimentConfig::new(vec![250, 1000, 4000], 2000, TGrid::Explicit(vec![mid]), 12).unwrap();
    let miss_run = run_experiment(&miss, &cfg, Some(&miss_summary)).unwrap();
    Shared {
        well_summary,
        well_run,
        well_t_tilde,
        miss_summary,
        miss_run,
    }
}

fn zeroth_order(sh: &Shared) -> Outcome {
    let mut worst = f64::INFINITY;
    let mut fixtures = vec![sh.well_summary.clone(), sh.miss_summary.clone()];
    fixtures.extend((0..5).map(|s| summary(&random_mixture(100 + s))));
    for s in &fixtures {
        worst = worst.min(s.kappa0_eto - s.kappa0_ieo).min(s.kappa0_ieo);
    }
    let w = &sh.well_summary;
    let zero = [w.kappa0_eto, w.kappa0_ieo, w.delta, w.b0].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    outcome(
        worst >= -1e-8 && zero <= 1e-6,
        format!("min over fixtures of (gap, kappa0_ieo) = {worst:.3e}; well-specified max |.| = {zero:.3e}"),
    )
}

fn second_order_limits(sh: &Shared) -> Outcome {
    let s = &sh.well_run.sizes[0];
    let n = s.n as f64;
    let ieo: Vec<f64> = s.ieo.raw_regrets.iter().map(|r| n * r).collect();
    let eto: Vec<f64> = s.eto.raw_regrets.iter().map(|r| n * r).collect();
    let ks_i = ks_one_sample(&ieo, scaled_chi2_cdf(0.626657));
    let ks_e = ks_one_sample(&eto, scaled_chi2_cdf(0.398942));
    outcome(ks_i < 0.05 && ks_e < 0.05, format!("KS ieo = {ks_i:.4}, KS eto = {ks_e:.4} (n = 2000, M = 5000)"))
}

fn rate_separation(sh: &Shared) -> Outcome {
    let rep = scaling_check(&sh.miss_run, &sh.miss_summary).unwrap();
    let (si, se) = (rep.ieo.slope, rep.eto.slope);
    outcome(
        (si + 1.0).abs() <= 0.15 && (se + 0.5).abs() <= 0.15,
        format!("slope ieo = {si:.3} (target -1), slope eto = {se:.3} (target -0.5)"),
    )
}

fn large_gap_regime(sh: &Shared) -> Outcome {
    let s = sh.miss_run.sizes.iter().find(|s| s.n == 4000).unwrap();
    let d = s.diff.d[0];
    let m = &sh.miss_summary;
    let mid = 0.5 * (m.kappa0_ieo + m.kappa0_eto);
    let c = lower_bound_from(m.kappa0_ieo, m.kappa0_eto, m.s_eto, 4000, mid, 0.0).unwrap().leading;
    outcome(d >= 0.95 && c >= 0.9, format!("D(t_mid) = {d:.4}, C = {c:.6}"))
}

fn no_gap_regime(sh: &Shared) -> Outcome {
    let s = &sh.well_run.sizes[0];
    let w = &sh.well_summary;
    let mix = ChiSqMixture::new(w.lambda_ieo.clone()).unwrap();
    let stretch = 1.0 + w.tau1 / w.tau6;
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, tt) in sh.well_t_tilde.iter().enumerate() {
        let d = s.diff.d[k];
        let ci = s.diff.ci_halfwidth[k];
        let p = mixture_interval(&mix, *tt, stretch * tt).prob;
        pass &= d <= 2.0 * ci && (-d - p).abs() <= 3.0 * ci;
        parts.push(format!("t~={tt}: D = {d:.4}, P = {p:.4}, CI = {ci:.4}"));
    }
    outcome(pass, parts.join("; "))
}

fn psd_claims(sh: &Shared) -> Outcome {
    let well_fixtures = vec![sh.well_summary.clone(), summary(&wellspec_2d_newsvendor()), summary(&wellspec_2d_portfolio()), summary(&wellspec_discrete())];
    let mut all = well_fixtures.clone();
    all.push(sh.miss_summary.clone());
    all.extend((0..5).map(|s| summary(&random_mixture(100 + s))));
    let min_tau3 = all.iter().map(|s| s.tau3).fold(f64::INFINITY, f64::min);
    let mut dominated = true;
    for (i, s) in well_fixtures.iter().enumerate() {
        assert!(s.well_specified);
        let q = s.lambda_eto.len();
        let mut rng = RngStream::new(55, i as u64).rng();
        let (mut ge, mut gi) = (Vec::with_capacity(100_000), Vec::with_capacity(100_000));
        for _ in 0..100_000 {
            let z: Vec<f64> = (0..q).map(|_| StandardNormal.sample(&mut rng)).collect();
            ge.push(z.iter().zip(&s.lambda_eto).map(|(z, l)| l * z * z).sum::<f64>());
            gi.push(z.iter().zip(&s.lambda_ieo).map(|(z, l)| l * z * z).sum::<f64>());
        }
        dominated &= dominance_tests(&ge, &gi).unwrap().first_order;
    }
    outcome(
        min_tau3 >= -1e-6 && dominated,
        format!("min tau3 over {} fixtures = {min_tau3:.3e}; first-order dominance on {} well-specified fixtures: {dominated}", all.len(), well_fixtures.len()),
    )
}

fn numerical_infrastructure() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;

    // score against central differences of the log-density
    let fams = [
        ParamFamily::normal_1d(1.3).unwrap(),
        ParamFamily::gaussian_location(DMatrix::from_diagonal(&DVector::from_vec(vec![0.7, 2.0])), None).unwrap(),
        ParamFamily::gaussian_full_mean(DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.6, 0.9]), None).unwrap(),
    ];
    let mut score_err = 0.0f64;
    for fam in &fams {
        let q = fam.dim_q();
        for k in 0..4 {
            let theta = DVector::from_fn(q, |i, _| 0.3 * k as f64 - 0.4 * i as f64);
            let z: Vec<f64> = (0..q).map(|i| 1.1 - 0.7 * k as f64 + 0.5 * i as f64).collect();
            let (score, _) = fam.score_and_hessian(&theta, &z).unwrap();
            let h = 1e-5;
            let fd = DVector::from_fn(q, |i, _| {
                let mut up = theta.clone();
                let mut dn = theta.clone();
                up[i] += h;
                dn[i] -= h;
                (fam.log_density(&up, &z).unwrap() - fam.log_density(&dn, &z).unwrap()) / (2.0 * h)
            });
            score_err = score_err.max((&score - &fd).norm() / score.norm().max(1.0));
        }
    }
    pass &= score_err < 1e-6;
    notes.push(format!("score {score_err:.1e}"));

    // decision Jacobian against central differences of the oracle
    let misspec = instance(MISSPEC);
    let cases: Vec<(Instance, DVector<f64>)> = vec![
        (misspec, DVector::from_vec(vec![0.7])),
        (wellspec_2d_portfolio(), DVector::from_vec(vec![0.2, -0.4])),
        (wellspec_2d_newsvendor(), DVector::from_vec(vec![-0.3, 0.8])),
    ];
    let mut jac_err = 0.0f64;
    for (inst, theta) in &cases {
        let j = inst.jacobian(theta).unwrap();
        let h = 1e-5;
        let mut fd = DMatrix::zeros(j.nrows(), j.ncols());
        for c in 0..theta.len() {
            let mut up = theta.clone();
            let mut dn = theta.clone();
            up[c] += h;
            dn[c] -= h;
            let col = (inst.oracle(&up).unwrap().omega - inst.oracle(&dn).unwrap().omega) / (2.0 * h);
            fd.set_column(c, &col);
        }
        jac_err = jac_err.max((&j - &fd).norm() / j.norm().max(1e-12));
    }
    // finite-discrete: directional differences inside the simplex
    let inst = wellspec_discrete();
    let theta = DVector::from_vec(vec![0.25, 0.45, 0.3]);
    let j = inst.jacobian(&theta).unwrap();
    for d in [[1.0, -1.0, 0.0], [1.0, 1.0, -2.0], [0.0, 1.0, -1.0]] {
        let d = DVector::from_vec(d.to_vec()).normalize();
        let h = 1e-5;
        let fd = (inst.oracle(&(&theta + &d * h)).unwrap().omega - inst.oracle(&(&theta - &d * h)).unwrap().omega) / (2.0 * h);
        let jd = &j * &d;
        jac_err = jac_err.max((&jd - &fd).norm() / jd.norm().max(1e-12));
    }
    pass &= jac_err < 1e-4;
    notes.push(format!("jacobian {jac_err:.1e}"));

    // Gaussian total variation against a Simpson rule
    let mut tv_err = 0.0f64;
    for (sigma, a, b) in [(1.0, 0.0, 0.5), (0.6, -1.0, 1.2), (2.0, 0.3, 0.31), (1.0, -3.0, 3.0)] {
        let fam = ParamFamily::normal_1d(sigma).unwrap();
        let exact = fam.tv_distance(&DVector::from_vec(vec![a]), &DVector::from_vec(vec![b])).unwrap();
        let pdf = |x: f64, m: f64| (-(x - m) * (x - m) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
        let (lo, hi, k) = (-30.0, 30.0, 60_000usize);
        let step = (hi - lo) / k as f64;
        let integral: f64 = (0..=k)
            .map(|i| {
                let x = lo + step * i as f64;
                let w = if i == 0 || i == k { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                w * (pdf(x, a) - pdf(x, b)).abs()
            })
            .sum::<f64>()
            * step
            / 3.0;
        tv_err = tv_err.max((exact - 0.5 * integral).abs());
    }
    pass &= tv_err < 1e-4;
    notes.push(format!("tv {tv_err:.1e}"));

    // Gaussian tail bounds against simulation on 20 thresholds
    let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, -0.4, 0.0, 0.8, 0.3, 0.5, -0.1, 0.6]);
    let v = DVector::from_vec(vec![0.3, -0.5, 0.8]);
    let mut rng = RngStream::new(77, 0).rng();
    let draws: Vec<DVector<f64>> = (0..100_000).map(|_| m.transpose() * DVector::from_fn(3, |_, _| StandardNormal.sample(&mut rng))).collect();
    let n = draws.len() as f64;
    let mut violations = 0;
    for k in 0..20 {
        let t = 0.25 * k as f64;
        let b = gaussian_tail_bounds(&m, &v, t, t - 0.2, t + 0.2).unwrap();
        let norm = draws.iter().filter(|x| x.norm() >= t).count() as f64 / n;
        let lin = draws.iter().filter(|x| x.dot(&v) >= t).count() as f64 / n;
        let mass = draws.iter().filter(|x| (t - 0.2..=t + 0.2).contains(&x.dot(&v))).count() as f64 / n;
        let over = |p: f64, bound: f64| p - bound > 3.0 * (p * (1.0 - p) / n).sqrt();
        violations += [over(norm, b.norm_tail), over(lin, b.linear_tail), over(mass, b.interval_mass)].iter().filter(|x| **x).count();
    }
    pass &= violations == 0;
    notes.push(format!("gaussian-tail violations {violations}"));

    // quadratic form law against the chi-square mixture
    let b = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.0, -0.3, 0.7, 0.2, 0.4, 0.1, 0.9]);
    let a = &b * b.transpose() - DMatrix::from_diagonal(&DVector::from_vec(vec![0.4, 0.0, 0.0]));
    let eig: Vec<f64> = a.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    let mut rng = RngStream::new(78, 0).rng();
    let qf: Vec<f64> = (0..100_000)
        .map(|_| {
            let y = DVector::from_fn(3, |_, _| StandardNormal.sample(&mut rng));
            (y.transpose() * &a * &y)[(0, 0)]
        })
        .collect();
    let law = ChiSqMixture::new(eig).unwrap().law();
    let ks = ks_two_sample(&qf, law.draws());
    pass &= ks < 0.01;
    notes.push(format!("quadratic-form KS {ks:.4}"));
    outcome(pass, notes.join(", "))
}

fn generalization() -> Outcome {
    let mut x = RademacherInputs {
        l_c: 1.0,
        rho_c: 1.0,
        b_c: 1.0,
        d_theta: 1.0,
        e_theta: 1.0,
        c_abs: 1.0,
        q: 1,
        n: 100,
        confidence: 2.0 / std::f64::consts::E,
    };
    let hand = 4.0 * 2f64.sqrt() * 0.1 + 2.0 * (1.0f64 / 200.0).sqrt();
    let v = generalization_bound(&x).unwrap();
    let mut sweep = Vec::new();
    for n in [100, 1000, 10_000] {
        x.n = n;
        sweep.push(generalization_bound(&x).unwrap());
    }
    let monotone = sweep.windows(2).all(|w| w[1] < w[0]);
    outcome((v - hand).abs() <= 1e-9 && monotone, format!("value {v:.9} vs {hand:.9}; sweep {sweep:?}"))
}

fn simulate_csvs(config: &Path, out: &Path, threads: usize) -> Vec<(String, Vec<u8>)> {
    let status = Command::new(env!("CARGO_BIN_EXE_regret-dissect"))
        .args(["simulate", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(["--threads", &threads.to_string()])
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn reproducibility() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut v: serde_json::Value = serde_json::from_str(MISSPEC).unwrap();
    v["experiment"] = serde_json::json!({ "n_list": [100, 400], "replications": 300, "t_grid": "auto", "base_seed": 99 });
    let cfg = dir.path().join("config.json");
    std::fs::write(&cfg, v.to_string()).unwrap();
    let one = simulate_csvs(&cfg, &dir.path().join("one"), 1);
    let eight = simulate_csvs(&cfg, &dir.path().join("eight"), 8);
    outcome(one == eight && one.len() == 4, format!("{} CSV files compared byte for byte", one.len()))
}

#[test]
fn acceptance_suite() {
    let clock = Instant::now();
    let sh = shared();
    let setup = clock.elapsed().as_secs_f64();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("zeroth-order ordering", Box::new(|| zeroth_order(&sh))),
        ("second-order limit laws", Box::new(|| second_order_limits(&sh))),
        ("rate separation", Box::new(|| rate_separation(&sh))),
        ("large-gap regime", Box::new(|| large_gap_regime(&sh))),
        ("no-gap regime", Box::new(|| no_gap_regime(&sh))),
        ("PSD comparison and dominance", Box::new(|| psd_claims(&sh))),
        ("numerical infrastructure", Box::new(numerical_infrastructure)),
        ("generalization bound", Box::new(generalization)),
        ("reproducibility across workers", Box::new(reproducibility)),
    ];
    println!("shared experiments: {setup:.1}s");
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let tag = if res.pass { "PASS" } else { "FAIL" };
        println!("criterion {}: {tag}  {name} ({:.1}s)  {}", i + 1, t0.elapsed().as_secs_f64(), res.detail);
        if !res.pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
