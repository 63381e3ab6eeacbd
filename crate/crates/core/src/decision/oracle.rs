//! The oracle map `θ ↦ ω_θ`, true expected cost and regret.

use super::cost::{CostKind, CostModel};
use crate::error::{Error, Result};
use crate::linalg::inverse;
use crate::model::{FamilyKind, Law, ParamFamily, TrueDistribution};
use crate::quadrature::QuadratureSpec;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// Gradient-norm target of the Newton solver.
pub const ORACLE_TOL: f64 = 1e-10;
const MAX_NEWTON_ITERS: usize = 500;
const ARMIJO_C: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMethod {
    ClosedForm,
    Newton,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub omega: DVector<f64>,
    pub stationarity_residual: f64,
    pub iterations: usize,
    pub method: OracleMethod,
}

/// `argmin_ω v(ω, Q)` for the model's own smoothing width.
pub fn solve_on_law(model: &CostModel, law: &Law, quad: &QuadratureSpec) -> Result<OracleSolution> {
    solve_on_law_width(model, law, quad, model.smoothing())
}

pub(crate) fn solve_on_law_width(model: &CostModel, law: &Law, quad: &QuadratureSpec, width: f64) -> Result<OracleSolution> {
    let sol = match model.kind() {
        CostKind::Newsvendor { .. } => {
            let ratios = model.critical_ratios().expect("newsvendor");
            let q = DVector::from_fn(ratios.len(), |i, _| law.marginal_quantile(i, ratios[i]));
            if width > 0.0 {
                newton(model, law, quad, width, q)?
            } else {
                OracleSolution {
                    omega: q,
                    stationarity_residual: 0.0,
                    iterations: 0,
                    method: OracleMethod::ClosedForm,
                }
            }
        }
        CostKind::Portfolio { dim, .. } => newton(model, law, quad, 0.0, DVector::zeros(*dim))?,
    };
    model.check_interior(&sol.omega)?;
    Ok(sol)
}

// Damped Newton with Armijo backtracking; falls back to scaled steepest
// descent when the Hessian is not positive definite.
fn newton(model: &CostModel, law: &Law, quad: &QuadratureSpec, width: f64, start: DVector<f64>) -> Result<OracleSolution> {
    let bound = model.omega_half_width();
    let f = |w: &DVector<f64>| model.expected_cost(law, quad, w, width);
    let mut w = start;
    let mut fw = f(&w);
    let mut g = model.expected_grad(law, quad, &w, width);
    for it in 0..MAX_NEWTON_ITERS {
        let mut gn = g.norm();
        if gn <= ORACLE_TOL {
            // one polishing step takes the residual to rounding level
            if let Some(ch) = model.expected_hess(law, quad, &w, width).cholesky() {
                let polished = &w - ch.solve(&g);
                let gp = model.expected_grad(law, quad, &polished, width).norm();
                if gp <= gn {
                    w = polished;
                    gn = gp;
                }
            }
            return Ok(OracleSolution {
                omega: w,
                stationarity_residual: gn,
                iterations: it,
                method: OracleMethod::Newton,
            });
        }
        let h = model.expected_hess(law, quad, &w, width);
        let mut dir = match h.clone().cholesky() {
            Some(ch) => -ch.solve(&g),
            None => {
                let scale = h.diagonal().iter().fold(1e-12f64, |a, v| a.max(*v));
                -&g / scale
            }
        };
        if dir.dot(&g) >= 0.0 {
            dir = -&g;
        }
        // keep iterates well inside a generous neighbourhood of Ω
        let cap = 2.0 * bound;
        let dmax = dir.amax();
        if dmax > cap {
            dir *= cap / dmax;
        }
        if gn < 1e-6 {
            w += &dir;
            fw = f(&w);
            g = model.expected_grad(law, quad, &w, width);
            continue;
        }
        let slope = dir.dot(&g);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial = &w + &dir * step;
            let ft = f(&trial);
            if ft <= fw + ARMIJO_C * step * slope {
                w = trial;
                fw = ft;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(Error::solver("line search failed in the oracle Newton solve", gn));
        }
        g = model.expected_grad(law, quad, &w, width);
    }
    Err(Error::solver("oracle Newton solve hit the iteration limit", g.norm()))
}

/// `ω_θ = argmin_ω E_{P_θ} c(ω, z)` with the default quadrature rule.
pub fn oracle_decision(model: &CostModel, family: &ParamFamily, theta: &DVector<f64>) -> Result<OracleSolution> {
    oracle_decision_with(model, family, theta, &QuadratureSpec::default())
}

pub fn oracle_decision_with(
    model: &CostModel,
    family: &ParamFamily,
    theta: &DVector<f64>,
    quad: &QuadratureSpec,
) -> Result<OracleSolution> {
    check_dims(model, family)?;
    let law = family.law(theta)?;
    solve_on_law(model, &law, quad)
}

/// `dω_θ/dθ` (p × q) by the implicit function theorem.
pub fn oracle_jacobian(model: &CostModel, family: &ParamFamily, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
    oracle_jacobian_with(model, family, theta, &QuadratureSpec::default())
}

pub fn oracle_jacobian_with(
    model: &CostModel,
    family: &ParamFamily,
    theta: &DVector<f64>,
    quad: &QuadratureSpec,
) -> Result<DMatrix<f64>> {
    check_dims(model, family)?;
    let law = family.law(theta)?;
    let omega = solve_on_law(model, &law, quad)?.omega;
    jacobian_at(model, family, theta, &law, quad, &omega)
}

pub(crate) fn jacobian_at(
    model: &CostModel,
    family: &ParamFamily,
    theta: &DVector<f64>,
    law: &Law,
    quad: &QuadratureSpec,
    omega: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let width = model.smoothing();
    let p = model.dim_p();
    let q = family.dim_q();
    let cross = match (family.kind(), model.kind()) {
        // location equivariance: ω_θ = ω_0 + θ
        (FamilyKind::GaussianLocation | FamilyKind::GaussianFullMean, CostKind::Newsvendor { .. }) => {
            return Ok(DMatrix::identity(p, q));
        }
        (FamilyKind::GaussianLocation | FamilyKind::GaussianFullMean, CostKind::Portfolio { .. }) => {
            let cov = family.cov().expect("gaussian");
            let sw = cov * omega;
            let m = (-theta.dot(omega) + 0.5 * omega.dot(&sw)).exp();
            let tilt = theta - sw;
            (&tilt * omega.transpose() - DMatrix::identity(p, q)) * m
        }
        (FamilyKind::FiniteDiscrete, _) => {
            let mut b = DMatrix::zeros(p, q);
            for (k, atom) in family.support().iter().enumerate() {
                b.set_column(k, &model.grad_omega(omega.as_slice(), atom.as_slice(), width));
            }
            b
        }
    };
    let h = model.expected_hess(law, quad, omega, width);
    let hinv = inverse(&h, "oracle Hessian in ω")?;
    Ok(-hinv * cross)
}

fn check_dims(model: &CostModel, family: &ParamFamily) -> Result<()> {
    if model.dim_p() != family.dim_d() {
        return Err(Error::Invalid(format!(
            "decision dimension {} does not match sample dimension {}",
            model.dim_p(),
            family.dim_d()
        )));
    }
    Ok(())
}

/// `v₀(ω) = E_P c(ω, z)` with the kinked cost.
pub fn true_expected_cost(model: &CostModel, truth: &TrueDistribution, omega: &DVector<f64>) -> f64 {
    model.expected_cost(truth.law(), truth.quadrature(), omega, 0.0)
}

/// `(ω*, v₀(ω*))`.
pub fn true_optimum(model: &CostModel, truth: &TrueDistribution) -> Result<(DVector<f64>, f64)> {
    if model.dim_p() != truth.dim() {
        return Err(Error::Invalid("decision and sample dimensions differ".into()));
    }
    let sol = solve_on_law_width(model, truth.law(), truth.quadrature(), 0.0)?;
    let v = true_expected_cost(model, truth, &sol.omega);
    Ok((sol.omega, v))
}

/// `R(ω) = v₀(ω) - v₀(ω*)`, clamped at zero.
pub fn regret(model: &CostModel, truth: &TrueDistribution, omega: &DVector<f64>) -> Result<f64> {
    let (_, vstar) = true_optimum(model, truth)?;
    Ok(clamp_regret(true_expected_cost(model, truth, omega) - vstar))
}

pub(crate) fn clamp_regret(raw: f64) -> f64 {
    if raw < 0.0 {
        log::debug!("negative regret {raw:.3e} clamped to zero");
        0.0
    } else {
        raw
    }
}
