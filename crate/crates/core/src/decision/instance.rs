use super::cost::CostModel;
use super::oracle::{clamp_regret, jacobian_at, solve_on_law, true_expected_cost, true_optimum, OracleSolution};
use crate::error::{Error, Result};
use crate::model::{ParamFamily, TrueDistribution};
use nalgebra::{DMatrix, DVector};

/// A problem instance `(family, P, c)` with `ω*` and `v₀(ω*)` cached.
#[derive(Debug, Clone)]
pub struct Instance {
    pub family: ParamFamily,
    pub truth: TrueDistribution,
    pub model: CostModel,
    omega_star: DVector<f64>,
    v0_star: f64,
}

impl Instance {
    pub fn new(family: ParamFamily, truth: TrueDistribution, model: CostModel) -> Result<Self> {
        if family.dim_d() != truth.dim() || model.dim_p() != truth.dim() {
            return Err(Error::Invalid(format!(
                "dimension mismatch: family d = {}, true distribution d = {}, decision p = {}",
                family.dim_d(),
                truth.dim(),
                model.dim_p()
            )));
        }
        let (omega_star, v0_star) = true_optimum(&model, &truth)?;
        Ok(Self {
            family,
            truth,
            model,
            omega_star,
            v0_star,
        })
    }

    pub fn omega_star(&self) -> &DVector<f64> {
        &self.omega_star
    }
    pub fn v0_star(&self) -> f64 {
        self.v0_star
    }

    pub fn v0(&self, omega: &DVector<f64>) -> f64 {
        true_expected_cost(&self.model, &self.truth, omega)
    }

    /// Unclamped `v₀(ω) - v₀(ω*)`.
    pub fn regret_raw(&self, omega: &DVector<f64>) -> f64 {
        self.v0(omega) - self.v0_star
    }

    pub fn regret(&self, omega: &DVector<f64>) -> f64 {
        clamp_regret(self.regret_raw(omega))
    }

    pub fn oracle(&self, theta: &DVector<f64>) -> Result<OracleSolution> {
        let law = self.family.law(theta)?;
        solve_on_law(&self.model, &law, self.truth.quadrature())
    }

    pub fn jacobian(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        let law = self.family.law(theta)?;
        let omega = solve_on_law(&self.model, &law, self.truth.quadrature())?.omega;
        jacobian_at(&self.model, &self.family, theta, &law, self.truth.quadrature(), &omega)
    }

    /// `θ ↦ v₀(ω_θ)`.
    pub fn v0_of_theta(&self, theta: &DVector<f64>) -> Result<f64> {
        Ok(self.v0(&self.oracle(theta)?.omega))
    }
}
