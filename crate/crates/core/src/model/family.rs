//! Parametric families `{P_θ : θ ∈ Θ}`.

use super::dataset::Dataset;
use super::law::{GaussianComponent, Law};
use crate::error::{Error, Result};
use crate::linalg::min_eigenvalue;
use crate::rng::RngStream;
use crate::special::norm_central_mass;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    /// `N(θ, Σ)` with diagonal fixed `Σ`; coordinates independent.
    GaussianLocation,
    /// `N(θ, Σ)` with an arbitrary fixed SPD `Σ`.
    GaussianFullMean,
    /// Probability vector `θ` over fixed support points.
    FiniteDiscrete,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ThetaBounds {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Simplex,
}

/// Default half-width of Θ for Gaussian families when none is configured.
pub const DEFAULT_THETA_HALF_WIDTH: f64 = 100.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamFamily {
    kind: FamilyKind,
    dim_q: usize,
    dim_d: usize,
    bounds: ThetaBounds,
    cov: Option<DMatrix<f64>>,
    cov_inv: Option<DMatrix<f64>>,
    log_det: f64,
    support: Vec<DVector<f64>>,
}

impl ParamFamily {
    pub fn gaussian_location(cov: DMatrix<f64>, bounds: Option<(Vec<f64>, Vec<f64>)>) -> Result<Self> {
        let d = cov.nrows();
        for i in 0..d {
            for j in 0..d {
                if i != j && cov[(i, j)] != 0.0 {
                    return Err(Error::Invalid(
                        "gaussian-location needs a diagonal covariance; use gaussian-full-mean".into(),
                    ));
                }
            }
        }
        Self::gaussian(FamilyKind::GaussianLocation, cov, bounds)
    }

    pub fn gaussian_full_mean(cov: DMatrix<f64>, bounds: Option<(Vec<f64>, Vec<f64>)>) -> Result<Self> {
        Self::gaussian(FamilyKind::GaussianFullMean, cov, bounds)
    }

    /// One-dimensional `N(θ, σ²)` on the default parameter box.
    pub fn normal_1d(sigma: f64) -> Result<Self> {
        Self::gaussian_location(DMatrix::from_element(1, 1, sigma * sigma), None)
    }

    fn gaussian(kind: FamilyKind, cov: DMatrix<f64>, bounds: Option<(Vec<f64>, Vec<f64>)>) -> Result<Self> {
        let d = cov.nrows();
        if d == 0 || cov.ncols() != d {
            return Err(Error::Invalid("covariance must be square and nonempty".into()));
        }
        let asym = (&cov - cov.transpose()).amax();
        if asym > 1e-12 * cov.amax().max(1.0) {
            return Err(Error::Invalid("covariance is not symmetric".into()));
        }
        if !(min_eigenvalue(&cov) > 0.0) {
            return Err(Error::Invalid("covariance is not positive definite".into()));
        }
        let (lower, upper) = bounds.unwrap_or_else(|| {
            (vec![-DEFAULT_THETA_HALF_WIDTH; d], vec![DEFAULT_THETA_HALF_WIDTH; d])
        });
        if lower.len() != d || upper.len() != d {
            return Err(Error::Invalid("theta bounds length must equal the dimension".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::Invalid("theta bounds must have positive volume".into()));
        }
        let chol = cov.clone().cholesky().expect("checked positive definite");
        let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let cov_inv = chol.inverse();
        Ok(Self {
            kind,
            dim_q: d,
            dim_d: d,
            bounds: ThetaBounds::Box { lower, upper },
            cov: Some(cov),
            cov_inv: Some(cov_inv),
            log_det,
            support: Vec::new(),
        })
    }

    pub fn finite_discrete(support: Vec<Vec<f64>>) -> Result<Self> {
        if support.len() < 2 {
            return Err(Error::Invalid("finite-discrete needs at least two support points".into()));
        }
        let d = support[0].len();
        if d == 0 || support.iter().any(|s| s.len() != d) {
            return Err(Error::Invalid("support points must share a positive dimension".into()));
        }
        for (i, a) in support.iter().enumerate() {
            for b in &support[i + 1..] {
                if a == b {
                    return Err(Error::Invalid("support points must be distinct".into()));
                }
            }
        }
        Ok(Self {
            kind: FamilyKind::FiniteDiscrete,
            dim_q: support.len(),
            dim_d: d,
            bounds: ThetaBounds::Simplex,
            cov: None,
            cov_inv: None,
            log_det: 0.0,
            support: support.into_iter().map(DVector::from_vec).collect(),
        })
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }
    pub fn dim_q(&self) -> usize {
        self.dim_q
    }
    pub fn dim_d(&self) -> usize {
        self.dim_d
    }
    pub fn bounds(&self) -> &ThetaBounds {
        &self.bounds
    }
    pub fn cov(&self) -> Option<&DMatrix<f64>> {
        self.cov.as_ref()
    }
    pub fn support(&self) -> &[DVector<f64>] {
        &self.support
    }
    pub fn is_gaussian(&self) -> bool {
        self.kind != FamilyKind::FiniteDiscrete
    }

    /// Marginal standard deviation of coordinate `i` (Gaussian kinds).
    pub fn marginal_sd(&self, i: usize) -> Option<f64> {
        self.cov.as_ref().map(|c| c[(i, i)].sqrt())
    }

    pub fn check_theta(&self, theta: &DVector<f64>) -> Result<()> {
        if theta.len() != self.dim_q {
            return Err(Error::Domain(format!(
                "theta has length {}, family expects {}",
                theta.len(),
                self.dim_q
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("theta has non-finite entries".into()));
        }
        match &self.bounds {
            ThetaBounds::Box { lower, upper } => {
                for (i, v) in theta.iter().enumerate() {
                    if *v < lower[i] || *v > upper[i] {
                        return Err(Error::Domain(format!(
                            "theta[{i}] = {v} outside [{}, {}]",
                            lower[i], upper[i]
                        )));
                    }
                }
            }
            ThetaBounds::Simplex => {
                if theta.iter().any(|v| *v < -1e-12) || (theta.sum() - 1.0).abs() > 1e-9 {
                    return Err(Error::Domain("theta is not on the probability simplex".into()));
                }
            }
        }
        Ok(())
    }

    /// Clamps a Gaussian parameter into its box (simplex: clip and renormalise).
    pub fn project(&self, theta: &DVector<f64>) -> DVector<f64> {
        match &self.bounds {
            ThetaBounds::Box { lower, upper } => {
                DVector::from_fn(theta.len(), |i, _| theta[i].clamp(lower[i], upper[i]))
            }
            ThetaBounds::Simplex => project_simplex(theta),
        }
    }

    /// `P_θ` as a concrete law.
    pub fn law(&self, theta: &DVector<f64>) -> Result<Law> {
        self.check_theta(theta)?;
        Ok(self.law_unchecked(theta))
    }

    pub(crate) fn law_unchecked(&self, theta: &DVector<f64>) -> Law {
        match self.kind {
            FamilyKind::FiniteDiscrete => Law::Discrete {
                atoms: self.support.clone(),
                weights: theta.iter().map(|v| v.max(0.0)).collect(),
            },
            _ => Law::Gaussian(vec![GaussianComponent::new(
                1.0,
                theta.clone(),
                self.cov.clone().expect("gaussian family has a covariance"),
            )
            .expect("covariance validated at construction")]),
        }
    }

    pub fn sample(&self, theta: &DVector<f64>, n: usize, stream: RngStream) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::Invalid("sample size must be at least 1".into()));
        }
        let law = self.law(theta)?;
        let mut rng = stream.rng();
        let d = self.dim_d;
        let mut data = vec![0.0; n * d];
        for row in data.chunks_exact_mut(d) {
            law.sample_into(&mut rng, row);
        }
        Dataset::from_flat(n, d, data, stream.stream_index)
    }

    fn support_index(&self, z: &[f64]) -> Result<usize> {
        self.support
            .iter()
            .position(|s| s.iter().zip(z).all(|(a, b)| (a - b).abs() <= 1e-9))
            .ok_or_else(|| Error::Domain(format!("point {z:?} is not on the support grid")))
    }

    /// `log p_θ(z)`; `-∞` at zero-mass atoms of a finite-discrete family.
    pub fn log_density(&self, theta: &DVector<f64>, z: &[f64]) -> Result<f64> {
        self.check_theta(theta)?;
        self.check_point(z)?;
        match self.kind {
            FamilyKind::FiniteDiscrete => {
                let k = self.support_index(z)?;
                Ok(if theta[k] > 0.0 { theta[k].ln() } else { f64::NEG_INFINITY })
            }
            _ => {
                let r = DVector::from_fn(self.dim_d, |i, _| z[i] - theta[i]);
                let inv = self.cov_inv.as_ref().expect("gaussian");
                let quad = (r.transpose() * inv * &r)[(0, 0)];
                Ok(-0.5 * (self.dim_d as f64 * (2.0 * PI).ln() + self.log_det + quad))
            }
        }
    }

    fn check_point(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dim_d {
            return Err(Error::Domain(format!(
                "sample point has dimension {}, family expects {}",
                z.len(),
                self.dim_d
            )));
        }
        Ok(())
    }

    /// Gradient and Hessian of `θ ↦ log p_θ(z)`.
    pub fn score_and_hessian(&self, theta: &DVector<f64>, z: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        self.check_theta(theta)?;
        self.check_point(z)?;
        Ok(self.score_and_hessian_unchecked(theta, z))
    }

    pub(crate) fn score_and_hessian_unchecked(&self, theta: &DVector<f64>, z: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let q = self.dim_q;
        match self.kind {
            FamilyKind::FiniteDiscrete => {
                let mut g = DVector::zeros(q);
                let mut h = DMatrix::zeros(q, q);
                if let Ok(k) = self.support_index(z) {
                    g[k] = 1.0 / theta[k];
                    h[(k, k)] = -1.0 / (theta[k] * theta[k]);
                }
                (g, h)
            }
            _ => {
                let inv = self.cov_inv.as_ref().expect("gaussian");
                let r = DVector::from_fn(q, |i, _| z[i] - theta[i]);
                (inv * r, -inv.clone())
            }
        }
    }

    /// Exact total-variation distance between `P_θ₁` and `P_θ₂`.
    pub fn tv_distance(&self, theta1: &DVector<f64>, theta2: &DVector<f64>) -> Result<f64> {
        self.check_theta(theta1)?;
        self.check_theta(theta2)?;
        let diff = theta1 - theta2;
        match self.kind {
            FamilyKind::FiniteDiscrete => Ok(0.5 * diff.iter().map(|v| v.abs()).sum::<f64>()),
            _ => {
                let inv = self.cov_inv.as_ref().expect("gaussian");
                let m = (diff.transpose() * inv * &diff)[(0, 0)].max(0.0).sqrt();
                Ok(norm_central_mass(0.5 * m))
            }
        }
    }

    /// `D_Θ` with `d_TV(P_θ₁, P_θ₂) <= D_Θ ‖θ₁ - θ₂‖₂` on all of Θ.
    ///
    /// Gaussian: `1 / sqrt(2π λ_min(Σ))`. Finite-discrete: `½√q` (the ℓ₁
    /// constant ½ converted to the Euclidean norm).
    pub fn tv_lipschitz_constant(&self) -> f64 {
        match self.kind {
            FamilyKind::FiniteDiscrete => 0.5 * (self.dim_q as f64).sqrt(),
            _ => {
                let lmin = min_eigenvalue(self.cov.as_ref().expect("gaussian"));
                1.0 / (2.0 * PI * lmin).sqrt()
            }
        }
    }
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &DVector<f64>) -> DVector<f64> {
    let mut u: Vec<f64> = v.iter().copied().collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (j, uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - 1.0) / (j as f64 + 1.0);
        if uj - t > 0.0 {
            tau = t;
        }
    }
    v.map(|x| (x - tau).max(0.0))
}
