//! ETO (maximum likelihood) and IEO (empirical decision loss) fits.

use crate::decision::{jacobian_at, solve_on_law, CostKind, CostModel};
use crate::error::{Error, Result};
use crate::model::{Dataset, FamilyKind, ParamFamily, ThetaBounds};
use crate::quadrature::QuadratureSpec;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Eto,
    Ieo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub method: Method,
    pub theta_hat: DVector<f64>,
    pub omega_hat: DVector<f64>,
    /// Average log-likelihood (ETO) or unsmoothed empirical decision loss (IEO).
    pub objective_value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Finite-discrete estimate with a zero coordinate.
    pub on_boundary: bool,
    pub dataset_hash: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub quadrature: QuadratureSpec,
    /// Projected-gradient tolerance of the IEO outer solver.
    pub tol: f64,
    pub max_iter: usize,
    pub starts: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            quadrature: QuadratureSpec::default(),
            tol: 1e-8,
            max_iter: 200,
            starts: 5,
        }
    }
}

fn check_data(data: &Dataset, family: &ParamFamily) -> Result<()> {
    if data.dim() != family.dim_d() {
        return Err(Error::Invalid(format!(
            "data dimension {} does not match family dimension {}",
            data.dim(),
            family.dim_d()
        )));
    }
    Ok(())
}

fn support_index(family: &ParamFamily, z: &[f64]) -> Result<usize> {
    family
        .support()
        .iter()
        .position(|s| s.iter().zip(z).all(|(a, b)| (a - b).abs() <= 1e-9))
        .ok_or_else(|| Error::Domain(format!("observation {z:?} is not a support point")))
}

/// Maximum-likelihood estimate `θ̂^ETO` with its plug-in decision.
pub fn fit_eto(data: &Dataset, family: &ParamFamily, model: &CostModel) -> Result<FitResult> {
    fit_eto_with(data, family, model, &FitOptions::default())
}

pub fn fit_eto_with(data: &Dataset, family: &ParamFamily, model: &CostModel, opts: &FitOptions) -> Result<FitResult> {
    check_data(data, family)?;
    let theta = mle(data, family)?;
    let on_boundary = family.kind() == FamilyKind::FiniteDiscrete && theta.iter().any(|v| *v == 0.0);
    if on_boundary {
        log::debug!("finite-discrete MLE on the simplex boundary");
    }
    let law = family.law(&theta)?;
    let omega = solve_on_law(model, &law, &opts.quadrature)?.omega;
    let n = data.n() as f64;
    let mut loglik = 0.0;
    let mut score = DVector::zeros(family.dim_q());
    for z in data.rows() {
        loglik += family.log_density(&theta, z)?;
        score += family.score_and_hessian(&theta, z)?.0;
    }
    score /= n;
    if family.kind() == FamilyKind::FiniteDiscrete {
        // Lagrange multiplier of the simplex constraint is 1 on the active support
        for (s, t) in score.iter_mut().zip(theta.iter()) {
            *s = if *t > 0.0 { *s - 1.0 } else { 0.0 };
        }
    }
    Ok(FitResult {
        method: Method::Eto,
        theta_hat: theta,
        omega_hat: omega,
        objective_value: loglik / n,
        gradient_norm: score.norm(),
        iterations: 0,
        converged: true,
        on_boundary,
        dataset_hash: data.content_hash(),
    })
}

fn mle(data: &Dataset, family: &ParamFamily) -> Result<DVector<f64>> {
    let n = data.n() as f64;
    match family.kind() {
        FamilyKind::GaussianLocation | FamilyKind::GaussianFullMean => {
            let mut m = DVector::zeros(family.dim_d());
            for z in data.rows() {
                m += DVector::from_column_slice(z);
            }
            m /= n;
            family.check_theta(&m)?;
            Ok(m)
        }
        FamilyKind::FiniteDiscrete => {
            let mut counts = DVector::zeros(family.dim_q());
            for z in data.rows() {
                counts[support_index(family, z)?] += 1.0;
            }
            Ok(counts / n)
        }
    }
}

/// `(1/n) Σ c(ω_θ, z_i)` with the kinked cost.
pub fn empirical_ieo_loss(data: &Dataset, family: &ParamFamily, model: &CostModel, theta: &DVector<f64>) -> Result<f64> {
    check_data(data, family)?;
    let law = family.law(theta)?;
    let omega = solve_on_law(model, &law, &QuadratureSpec::default())?.omega;
    Ok(empirical_loss_at(data, model, &omega, 0.0))
}

fn empirical_loss_at(data: &Dataset, model: &CostModel, omega: &DVector<f64>, width: f64) -> f64 {
    let w = omega.as_slice();
    data.rows().map(|z| model.cost_width(w, z, width)).sum::<f64>() / data.n() as f64
}

/// Minimiser `θ̂^IEO` of the empirical decision loss over Θ.
pub fn fit_ieo(data: &Dataset, family: &ParamFamily, model: &CostModel) -> Result<FitResult> {
    fit_ieo_with(data, family, model, &FitOptions::default())
}

pub fn fit_ieo_with(data: &Dataset, family: &ParamFamily, model: &CostModel, opts: &FitOptions) -> Result<FitResult> {
    check_data(data, family)?;
    let theta_mle = mle(data, family)?;
    let (theta, iterations, gradient_norm, converged) = match (model.kind(), family.kind()) {
        (CostKind::Newsvendor { .. }, FamilyKind::GaussianLocation | FamilyKind::GaussianFullMean) => {
            (quantile_shortcut(data, family, model, &theta_mle, opts)?, 0, 0.0, true)
        }
        (CostKind::Newsvendor { smoothing, .. }, FamilyKind::FiniteDiscrete) if *smoothing == 0.0 => {
            // ω_θ is the lower b/(b+h)-quantile of P_θ, so the empirical law
            // attains the empirical quantile decision
            (theta_mle.clone(), 0, 0.0, true)
        }
        _ => multistart(data, family, model, &theta_mle, opts)?,
    };
    let law = family.law(&theta)?;
    let omega = solve_on_law(model, &law, &opts.quadrature)?.omega;
    let on_boundary = family.kind() == FamilyKind::FiniteDiscrete && theta.iter().any(|v| *v <= 0.0);
    Ok(FitResult {
        method: Method::Ieo,
        objective_value: empirical_loss_at(data, model, &omega, 0.0),
        theta_hat: theta,
        omega_hat: omega,
        gradient_norm,
        iterations,
        converged,
        on_boundary,
        dataset_hash: data.content_hash(),
    })
}

// Location families shift the oracle: ω_θ = θ + offset. The empirical
// newsvendor loss is minimised by any empirical α-quantile; when the
// minimiser is an interval the point nearest the MLE decision is taken.
fn quantile_shortcut(
    data: &Dataset,
    family: &ParamFamily,
    model: &CostModel,
    theta_mle: &DVector<f64>,
    opts: &FitOptions,
) -> Result<DVector<f64>> {
    let law = family.law(theta_mle)?;
    let omega_mle = solve_on_law(model, &law, &opts.quadrature)?.omega;
    let offset = &omega_mle - theta_mle;
    let ratios = model.critical_ratios().expect("newsvendor");
    let n = data.n();
    let mut theta = DVector::zeros(family.dim_q());
    for i in 0..family.dim_d() {
        let mut col = data.column(i);
        col.sort_by(f64::total_cmp);
        let na = n as f64 * ratios[i];
        let j = na.round();
        let omega_i = if (na - j).abs() <= 1e-9 * n as f64 && j >= 1.0 && (j as usize) < n {
            let j = j as usize;
            omega_mle[i].clamp(col[j - 1], col[j])
        } else {
            let k = (na.ceil() as usize).clamp(1, n);
            col[k - 1]
        };
        theta[i] = omega_i - offset[i];
    }
    Ok(family.project(&theta))
}

fn multistart(
    data: &Dataset,
    family: &ParamFamily,
    model: &CostModel,
    theta_mle: &DVector<f64>,
    opts: &FitOptions,
) -> Result<(DVector<f64>, usize, f64, bool)> {
    let width = match model.kind() {
        CostKind::Portfolio { .. } => 0.0,
        CostKind::Newsvendor { smoothing, .. } if *smoothing > 0.0 => *smoothing,
        CostKind::Newsvendor { .. } => {
            let sd = (0..family.dim_d())
                .filter_map(|i| family.marginal_sd(i))
                .fold(f64::INFINITY, f64::min);
            if sd.is_finite() {
                1e-2 * sd
            } else {
                1e-2
            }
        }
    };
    let surrogate = model.with_smoothing(width);
    let mut best: Option<(f64, usize, Outer)> = None;
    let mut failures = Vec::new();
    for (k, start) in start_points(family, theta_mle, opts.starts).into_iter().enumerate() {
        match bfgs(data, family, &surrogate, start, opts) {
            Ok(run) => {
                let law = family.law(&run.theta)?;
                let omega = solve_on_law(model, &law, &opts.quadrature)?.omega;
                let loss = empirical_loss_at(data, model, &omega, 0.0);
                let better = match &best {
                    None => true,
                    Some((b, _, br)) => {
                        let tie = (loss - b).abs() <= 1e-12 * (1.0 + b.abs());
                        if tie {
                            !br.converged && run.converged
                        } else {
                            loss < *b
                        }
                    }
                };
                if better {
                    best = Some((loss, k, run));
                }
            }
            Err(e) => failures.push(e),
        }
    }
    match best {
        Some((_, _, run)) if run.converged => Ok((run.theta, run.iterations, run.grad_norm, true)),
        Some((_, _, run)) => {
            log::warn!("no IEO start converged; best projected gradient {:.3e}", run.grad_norm);
            Err(Error::solver("no IEO start converged", run.grad_norm))
        }
        None => Err(failures
            .into_iter()
            .next()
            .unwrap_or_else(|| Error::solver("IEO had no start points", f64::NAN))),
    }
}

/// The MLE followed by four deterministic perturbations of scale `0.5‖θ_MLE‖ + 0.5`.
pub fn start_points(family: &ParamFamily, theta_mle: &DVector<f64>, starts: usize) -> Vec<DVector<f64>> {
    let q = theta_mle.len();
    let r = 0.5 * theta_mle.norm() + 0.5;
    let diag = DVector::from_fn(q, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 }) / (q as f64).sqrt();
    let mut e0 = DVector::zeros(q);
    e0[0] = 1.0;
    let dirs = [e0.clone(), -e0, diag.clone(), -diag];
    let mut out = vec![theta_mle.clone()];
    for d in dirs.iter().cycle().take(starts.saturating_sub(1)) {
        let mut t = theta_mle + d * r;
        if let ThetaBounds::Simplex = family.bounds() {
            // keep perturbed weights on the simplex and away from its faces
            t = family.project(&t).map(|v| 0.9 * v + 0.1 / q as f64);
        }
        out.push(family.project(&t));
    }
    out
}

struct Outer {
    theta: DVector<f64>,
    iterations: usize,
    grad_norm: f64,
    converged: bool,
}

// Loss and gradient Jᵀ (1/n) Σ ∇_ω c_s(ω_θ, z_i) of the smoothed surrogate.
fn surrogate_eval(
    data: &Dataset,
    family: &ParamFamily,
    surrogate: &CostModel,
    theta: &DVector<f64>,
    opts: &FitOptions,
) -> Result<(f64, DVector<f64>)> {
    let width = surrogate.smoothing();
    let law = family.law(theta)?;
    let omega = solve_on_law(surrogate, &law, &opts.quadrature)?.omega;
    let jac: DMatrix<f64> = jacobian_at(surrogate, family, theta, &law, &opts.quadrature, &omega)?;
    let mut g = DVector::zeros(omega.len());
    for z in data.rows() {
        g += surrogate.grad_omega(omega.as_slice(), z, width);
    }
    g /= data.n() as f64;
    Ok((empirical_loss_at(data, surrogate, &omega, width), jac.transpose() * g))
}

fn projected_gradient_norm(family: &ParamFamily, theta: &DVector<f64>, g: &DVector<f64>) -> f64 {
    (theta - family.project(&(theta - g))).norm()
}

// Projected BFGS with Armijo backtracking along the projection arc.
fn bfgs(data: &Dataset, family: &ParamFamily, surrogate: &CostModel, start: DVector<f64>, opts: &FitOptions) -> Result<Outer> {
    let q = start.len();
    let mut theta = start;
    let (mut f, mut g) = surrogate_eval(data, family, surrogate, &theta, opts)?;
    let mut hinv = DMatrix::<f64>::identity(q, q);
    let mut pg = projected_gradient_norm(family, &theta, &g);
    for it in 0..opts.max_iter {
        if pg <= opts.tol {
            return Ok(Outer { theta, iterations: it, grad_norm: pg, converged: true });
        }
        let mut dir = -(&hinv * &g);
        if dir.dot(&g) >= 0.0 {
            hinv = DMatrix::identity(q, q);
            dir = -g.clone();
        }
        let mut step = 1.0;
        let mut next = None;
        for _ in 0..50 {
            let trial = family.project(&(&theta + &dir * step));
            match surrogate_eval(data, family, surrogate, &trial, opts) {
                Ok((ft, gt)) if ft <= f + 1e-4 * g.dot(&(&trial - &theta)) => {
                    next = Some((trial, ft, gt));
                    break;
                }
                Ok(_) | Err(Error::NonInterior(_)) | Err(Error::Solver { .. }) => step *= 0.5,
                Err(e) => return Err(e),
            }
        }
        let Some((trial, ft, gt)) = next else {
            return Ok(Outer { theta, iterations: it, grad_norm: pg, converged: false });
        };
        let s = &trial - &theta;
        let y = &gt - &g;
        let sy = s.dot(&y);
        if sy > 1e-14 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let i = DMatrix::<f64>::identity(q, q);
            let a = &i - &s * y.transpose() * rho;
            hinv = &a * &hinv * a.transpose() + &s * s.transpose() * rho;
        }
        let moved = s.norm();
        theta = trial;
        f = ft;
        g = gt;
        pg = projected_gradient_norm(family, &theta, &g);
        if moved <= 1e-15 * (1.0 + theta.norm()) && pg > opts.tol {
            return Ok(Outer { theta, iterations: it + 1, grad_norm: pg, converged: false });
        }
    }
    Ok(Outer { theta, iterations: opts.max_iter, grad_norm: pg, converged: pg <= opts.tol })
}
