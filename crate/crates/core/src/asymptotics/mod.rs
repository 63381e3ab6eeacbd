//! Population quantities of the asymptotic comparison and the finite-sample
//! bounds built from them.
//!
//! Everything is computed in a chart `θ = θ₀ + Uη` of the parameter set: `U`
//! is the identity for box-constrained families and an orthonormal basis of
//! `{x : Σx = 0}` for the probability simplex. Matrices in the summary are
//! reported back in θ coordinates as `U M Uᵀ`.

mod bounds;
mod dominance;
mod mixture;

pub use bounds::{
    classify_regime, gaussian_tail_bounds, generalization_bound, lower_bound_d, lower_bound_from, upper_bound_d, BoundCase,
    BoundReport, GaussianTailBounds, RademacherInputs, Regime, RegimeThresholds,
};
pub use dominance::{dominance_tests, dominance_tests_with, DominanceReport};
pub use mixture::{mixture_interval, mixture_quantile, mixture_tail, ChiSqMixture, MixtureLaw, TailEstimate, MIXTURE_DRAWS};

use crate::decision::{CostKind, Instance};
use crate::error::{Error, Result};
use crate::estimators::start_points;
use crate::linalg::{inverse, inverse_with_tol, max_eigenvalue, min_eigenvalue, sqrt_psd, sym_eigenvalues_desc, sym_op_norm, symmetrize};
use crate::model::{FamilyKind, Law, ThetaBounds};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

/// Which Hessian enters the tilde comparison behind `τ₃`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tau3Variant {
    /// `∇θθ v₀(ω_θ*)` on both sides.
    #[default]
    AsPrinted,
    /// `∇θθ v(ω_θ, P^KL)` at `θ^KL` on both sides.
    KlHessian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TheoryOptions {
    pub tau3_variant: Tau3Variant,
    /// Radius of the Hessian sweep behind the local Lipschitz estimate.
    pub lipschitz_radius: f64,
    /// Gradient tolerance when `θ*` is found numerically.
    pub theta_tol: f64,
    pub max_iter: usize,
}

impl Default for TheoryOptions {
    fn default() -> Self {
        Self {
            tau3_variant: Tau3Variant::AsPrinted,
            lipschitz_radius: 0.1,
            theta_tol: 1e-9,
            max_iter: 200,
        }
    }
}

/// Population-level summary of an instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticSummary {
    pub schema_version: u32,
    pub well_specified: bool,
    pub theta_kl: Vec<f64>,
    pub theta_star: Vec<f64>,
    pub omega_star: Vec<f64>,
    pub omega_kl: Vec<f64>,
    pub omega_theta_star: Vec<f64>,
    pub v0_star: f64,
    pub kappa0_eto: f64,
    pub kappa0_ieo: f64,
    pub delta: f64,
    pub b0: f64,
    /// The five operator-norm gaps whose maximum is `b0`.
    pub b0_gaps: Vec<f64>,
    /// Columns span the tangent space of Θ.
    #[serde(with = "rows")]
    pub chart: DMatrix<f64>,
    #[serde(with = "rows")]
    pub hess_v0_at_kl: DMatrix<f64>,
    #[serde(with = "rows")]
    pub hess_v0_at_star: DMatrix<f64>,
    /// `∇θθ v(ω_θ, P^KL)` at `θ^KL`.
    #[serde(with = "rows")]
    pub hess_kl_model: DMatrix<f64>,
    #[serde(with = "rows")]
    pub m1_eto: DMatrix<f64>,
    #[serde(with = "rows")]
    pub m1_ieo: DMatrix<f64>,
    #[serde(with = "rows")]
    pub m1_eto_tilde: DMatrix<f64>,
    #[serde(with = "rows")]
    pub m1_ieo_tilde: DMatrix<f64>,
    pub lambda_eto: Vec<f64>,
    pub lambda_ieo: Vec<f64>,
    pub eto_signed: bool,
    pub tau1: f64,
    pub tau2: f64,
    pub tau3: f64,
    pub tau3_kl_hessian: f64,
    pub tau3_variant: Tau3Variant,
    pub tau6: f64,
    /// `∇θ v₀(ω_θ)` at `θ^KL`.
    pub grad_v0_kl: Vec<f64>,
    /// `‖∇θ v₀(ω_θ^KL)ᵀ M₁^ETO‖`.
    pub s_eto: f64,
    /// Local Lipschitz estimate of `θ ↦ ∇θθ v₀(ω_θ)` around `θ*`.
    pub l1_hat: f64,
}

impl AsymptoticSummary {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text)?;
        if s.schema_version != SUMMARY_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "summary schema version {} (expected {SUMMARY_SCHEMA_VERSION})",
                s.schema_version
            )));
        }
        Ok(s)
    }

    pub fn dim_q(&self) -> usize {
        self.theta_kl.len()
    }

    fn reduce(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        self.chart.transpose() * m * &self.chart
    }
}

mod rows {
    use crate::linalg::{from_rows, to_rows};
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        if rows.is_empty() {
            return Ok(DMatrix::zeros(0, 0));
        }
        from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Orthonormal basis of the tangent space of Θ as columns.
pub fn tangent_chart(bounds: &ThetaBounds, q: usize) -> DMatrix<f64> {
    match bounds {
        ThetaBounds::Box { .. } => DMatrix::identity(q, q),
        ThetaBounds::Simplex => {
            // Helmert contrasts
            let mut u = DMatrix::zeros(q, q.saturating_sub(1));
            for k in 1..q {
                let norm = ((k * (k + 1)) as f64).sqrt();
                for i in 0..k {
                    u[(i, k - 1)] = 1.0 / norm;
                }
                u[(k, k - 1)] = -(k as f64) / norm;
            }
            u
        }
    }
}

// Quantities evaluated along the chart of one instance.
struct Local<'a> {
    inst: &'a Instance,
    u: DMatrix<f64>,
}

impl<'a> Local<'a> {
    fn new(inst: &'a Instance) -> Self {
        let u = tangent_chart(inst.family.bounds(), inst.family.dim_q());
        Self { inst, u }
    }

    fn r(&self) -> usize {
        self.u.ncols()
    }

    fn omega(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.inst.oracle(theta)?.omega)
    }

    /// `v(ω_θ, Q)` with the kinked cost.
    fn value(&self, law: &Law, theta: &DVector<f64>) -> Result<f64> {
        let omega = self.omega(theta)?;
        Ok(self.inst.model.expected_cost(law, self.inst.truth.quadrature(), &omega, 0.0))
    }

    /// Chart gradient `Uᵀ Jᵀ ∇ω v(ω_θ, Q)`.
    fn gradient(&self, law: &Law, theta: &DVector<f64>) -> Result<DVector<f64>> {
        let omega = self.omega(theta)?;
        let j = self.inst.jacobian(theta)?;
        let g = self.inst.model.expected_grad(law, self.inst.truth.quadrature(), &omega, 0.0);
        Ok(self.u.transpose() * j.transpose() * g)
    }

    fn step(theta: &DVector<f64>) -> f64 {
        (1e-4 * theta.norm()).max(1e-4)
    }

    /// Chart Hessian of `θ ↦ v(ω_θ, Q)` by central differences of the
    /// chart gradient, or of the value when the oracle Jacobian is singular.
    fn hessian(&self, law: &Law, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        let r = self.r();
        let h = Self::step(theta);
        let by_gradient = |h: f64| -> Result<DMatrix<f64>> {
            let mut out = DMatrix::zeros(r, r);
            for i in 0..r {
                let e = self.u.column(i) * h;
                let gp = self.gradient(law, &(theta + &e))?;
                let gm = self.gradient(law, &(theta - &e))?;
                out.set_column(i, &((gp - gm) / (2.0 * h)));
            }
            Ok(out)
        };
        // one Richardson step removes the O(h²) truncation term
        match by_gradient(h).and_then(|coarse| Ok((by_gradient(0.5 * h)? * 4.0 - coarse) / 3.0)) {
            Ok(m) => Ok(symmetrize(&m)),
            Err(Error::Conditioning(_)) => self.value_hessian(law, theta),
            Err(e) => Err(e),
        }
    }

    /// Second differences of the scalar map `θ ↦ v(ω_θ, Q)`.
    fn value_hessian(&self, law: &Law, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        let r = self.r();
        let h = Self::step(theta);
        let f = |a: &[(usize, f64)]| -> Result<f64> {
            let mut t = theta.clone();
            for &(i, s) in a {
                t += self.u.column(i) * (s * h);
            }
            self.value(law, &t)
        };
        let f0 = f(&[])?;
        let mut out = DMatrix::zeros(r, r);
        for i in 0..r {
            out[(i, i)] = (f(&[(i, 1.0)])? - 2.0 * f0 + f(&[(i, -1.0)])?) / (h * h);
            for j in 0..i {
                let v = (f(&[(i, 1.0), (j, 1.0)])? - f(&[(i, 1.0), (j, -1.0)])? - f(&[(i, -1.0), (j, 1.0)])?
                    + f(&[(i, -1.0), (j, -1.0)])?)
                    / (4.0 * h * h);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        Ok(out)
    }

    /// Chart covariance of `∇θ c(ω_θ, z)` under `Q`.
    fn grad_theta_covariance(&self, law: &Law, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        let omega = self.omega(theta)?;
        let j = self.inst.jacobian(theta)? * &self.u;
        let cov = self.inst.model.grad_covariance(law, self.inst.truth.quadrature(), &omega, 0.0)?;
        Ok(symmetrize(&(j.transpose() * cov * j)))
    }

    /// Chart `(E_Q ∇θθ log p_θ, Var_Q ∇θ log p_θ)`.
    fn fisher_pair(&self, law: &Law, theta: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let fam = &self.inst.family;
        let (a, v) = if let Some(sigma) = fam.cov() {
            let prec = inverse(sigma, "family covariance")?;
            let cz = law_covariance(law);
            (-&prec, &prec * cz * &prec)
        } else {
            let q = fam.dim_q();
            let mut a = DMatrix::zeros(q, q);
            let mut mean = DVector::zeros(q);
            let mut second = DMatrix::zeros(q, q);
            let mut bad = false;
            law.integrate(self.inst.truth.quadrature(), &[], |z, w| {
                if w <= 0.0 {
                    return;
                }
                if fam.log_density(theta, z).map(|l| !l.is_finite()).unwrap_or(true) {
                    bad = true;
                    return;
                }
                let (s, h) = fam.score_and_hessian_unchecked(theta, z);
                a += h * w;
                mean += &s * w;
                second += &s * s.transpose() * w;
            });
            if bad {
                return Err(Error::Domain("log-likelihood is not finite on the support of the law".into()));
            }
            (a, second - &mean * mean.transpose())
        };
        let ut = self.u.transpose();
        Ok((symmetrize(&(&ut * a * &self.u)), symmetrize(&(&ut * v * &self.u))))
    }

    fn theta_from_chart(&self, base: &DVector<f64>, eta: &DVector<f64>) -> DVector<f64> {
        base + &self.u * eta
    }

    fn lift(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        &self.u * m * self.u.transpose()
    }

    fn lift_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.u * v
    }
}

fn law_covariance(law: &Law) -> DMatrix<f64> {
    let mean = law.mean();
    let d = mean.len();
    let mut second = DMatrix::zeros(d, d);
    match law {
        Law::Gaussian(cs) => {
            for c in cs {
                second += (&c.cov + &c.mean * c.mean.transpose()) * c.weight;
            }
        }
        Law::Discrete { atoms, weights } => {
            for (a, w) in atoms.iter().zip(weights) {
                second += a * a.transpose() * *w;
            }
        }
    }
    symmetrize(&(second - &mean * mean.transpose()))
}

fn is_interior(bounds: &ThetaBounds, theta: &DVector<f64>, tol: f64) -> bool {
    match bounds {
        ThetaBounds::Box { lower, upper } => {
            theta.iter().zip(lower.iter().zip(upper)).all(|(t, (l, u))| *t > l + tol && *t < u - tol)
        }
        ThetaBounds::Simplex => theta.iter().all(|t| *t > tol),
    }
}

/// `θ^KL = argmax_θ E_P log p_θ(z)`.
pub fn theta_kl(inst: &Instance) -> Result<DVector<f64>> {
    let fam = &inst.family;
    let law = inst.truth.law();
    let theta = match fam.kind() {
        FamilyKind::GaussianLocation | FamilyKind::GaussianFullMean => law.mean(),
        FamilyKind::FiniteDiscrete => {
            let Law::Discrete { atoms, weights } = law else {
                return Err(Error::Domain("a continuous law has no KL projection onto a finite family".into()));
            };
            let support = fam.support();
            let mut probs = DVector::zeros(support.len());
            for (a, w) in atoms.iter().zip(weights) {
                if *w <= 0.0 {
                    continue;
                }
                let k = support.iter().position(|s| (s - a).amax() <= 1e-12).ok_or_else(|| {
                    Error::Domain(format!("atom {:?} lies off the family support", a.as_slice()))
                })?;
                probs[k] += w;
            }
            probs
        }
    };
    fam.check_theta(&theta)?;
    if !is_interior(fam.bounds(), &theta, 0.0) {
        return Err(Error::Domain(format!("KL projection {:?} lies on the boundary of Θ", theta.as_slice())));
    }
    Ok(theta)
}

/// `θ* = argmin_θ v₀(ω_θ)`.
pub fn theta_star(inst: &Instance) -> Result<DVector<f64>> {
    theta_star_with(inst, &TheoryOptions::default())
}

pub fn theta_star_with(inst: &Instance, opts: &TheoryOptions) -> Result<DVector<f64>> {
    let fam = &inst.family;
    if inst.model.smoothing() == 0.0 {
        if let Some(theta0) = inst.truth.in_family_parameter(fam) {
            return Ok(theta0);
        }
    }
    let kl = theta_kl(inst)?;
    let theta = match (fam.kind(), inst.model.kind()) {
        (FamilyKind::GaussianLocation | FamilyKind::GaussianFullMean, CostKind::Newsvendor { .. }) => {
            let offset = inst.oracle(&kl)?.omega - &kl;
            inst.omega_star() - offset
        }
        _ => {
            let local = Local::new(inst);
            let law = inst.truth.law();
            let mut best: Option<(DVector<f64>, f64)> = None;
            let mut last_err = None;
            for start in start_points(fam, &kl, 5) {
                if fam.check_theta(&start).is_err() || !is_interior(fam.bounds(), &start, 0.0) {
                    continue;
                }
                match newton_min(&local, law, start, opts) {
                    Ok((t, v)) => {
                        if best.as_ref().is_none_or(|(_, b)| v < b - 1e-12 * b.abs().max(1.0)) {
                            best = Some((t, v));
                        }
                    }
                    Err(e) => last_err = Some(e),
                }
            }
            match best {
                Some((t, _)) => t,
                None => return Err(last_err.unwrap_or_else(|| Error::solver("no admissible start for θ*", f64::NAN))),
            }
        }
    };
    fam.check_theta(&theta).map_err(|_| Error::solver("θ* lies outside Θ", f64::NAN))?;
    if !is_interior(fam.bounds(), &theta, 1e-9) {
        return Err(Error::solver(format!("θ* = {:?} lies on the boundary of Θ", theta.as_slice()), f64::NAN));
    }
    Ok(theta)
}

// Damped Newton on the chart with a finite-difference Hessian.
fn newton_min(local: &Local, law: &Law, start: DVector<f64>, opts: &TheoryOptions) -> Result<(DVector<f64>, f64)> {
    let fam = &local.inst.family;
    let mut theta = start;
    let mut val = local.value(law, &theta)?;
    let mut gnorm = f64::INFINITY;
    for _ in 0..opts.max_iter {
        let g = local.gradient(law, &theta)?;
        gnorm = g.norm();
        if gnorm <= opts.theta_tol * val.abs().max(1.0) {
            return Ok((theta, val));
        }
        let h = local.hessian(law, &theta)?;
        let dir = match symmetrize(&h).cholesky() {
            Some(ch) => -ch.solve(&g),
            None => -&g,
        };
        let slope = g.dot(&dir);
        let mut step = 1.0;
        let mut moved = false;
        while step > 1e-14 {
            let trial = local.theta_from_chart(&theta, &(&dir * step));
            if fam.check_theta(&trial).is_ok() && is_interior(fam.bounds(), &trial, 0.0) {
                if let Ok(v) = local.value(law, &trial) {
                    if v <= val + 1e-4 * step * slope || (gnorm < 1e-6 && v <= val + 1e-14 * val.abs().max(1.0)) {
                        theta = trial;
                        val = v;
                        moved = true;
                        break;
                    }
                }
            }
            step *= 0.5;
        }
        if !moved {
            if gnorm < 1e-6 {
                return Ok((theta, val));
            }
            return Err(Error::solver("line search stalled while minimizing v₀(ω_θ)", gnorm));
        }
    }
    Err(Error::solver("θ* Newton iteration limit", gnorm))
}

/// `(κ₀^ETO, κ₀^IEO, δ)` from the two population parameters.
pub fn kappas_and_delta(inst: &Instance, theta_kl: &DVector<f64>, theta_star: &DVector<f64>) -> Result<(f64, f64, f64)> {
    let clamp = |x: f64| if x < 0.0 && x >= -1e-9 { 0.0 } else { x };
    let ke = clamp(inst.regret_raw(&inst.oracle(theta_kl)?.omega));
    let mut ki = clamp(inst.regret_raw(&inst.oracle(theta_star)?.omega));
    if ke < 0.0 || ki < 0.0 {
        return Err(Error::solver("negative regret floor beyond rounding", ke.min(ki)));
    }
    if ki > ke {
        log::debug!("κ₀^IEO exceeds κ₀^ETO by {:.3e}; using θ^KL", ki - ke);
        ki = ke;
    }
    Ok((ke, ki, ke - ki))
}

/// `∇θθ v₀(ω_θ)` in θ coordinates and a local Lipschitz estimate of it.
pub fn hess_v0_of_omega_theta(inst: &Instance, theta: &DVector<f64>, radius: f64) -> Result<(DMatrix<f64>, f64)> {
    let local = Local::new(inst);
    let law = inst.truth.law();
    let h = local.hessian(law, theta)?;
    let l1 = lipschitz_sweep(&local, law, theta, &h, radius)?;
    Ok((local.lift(&h), l1))
}

fn lipschitz_sweep(local: &Local, law: &Law, theta: &DVector<f64>, h: &DMatrix<f64>, radius: f64) -> Result<f64> {
    let fam = &local.inst.family;
    let mut l1 = 0.0f64;
    for i in 0..local.r() {
        for s in [1.0, -1.0] {
            let t = theta + local.u.column(i) * (s * radius);
            if fam.check_theta(&t).is_err() || !is_interior(fam.bounds(), &t, 0.0) {
                continue;
            }
            match local.hessian(law, &t) {
                Ok(ht) => l1 = l1.max(sym_op_norm(&(ht - h)) / radius),
                Err(Error::NonInterior(_)) => continue,
                Err(e) => return Err(e),
            }
        }
    }
    Ok(l1)
}

/// `(M₁^ETO, M₁^IEO, M̃₁^ETO, M̃₁^IEO)` in θ coordinates.
pub fn m1_matrices(inst: &Instance) -> Result<[DMatrix<f64>; 4]> {
    let s = summarize(inst, &TheoryOptions::default())?;
    Ok([s.m1_eto, s.m1_ieo, s.m1_eto_tilde, s.m1_ieo_tilde])
}

/// Maximum of the five misspecification gaps.
pub fn b0_measure(inst: &Instance) -> Result<f64> {
    Ok(summarize(inst, &TheoryOptions::default())?.b0)
}

fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let scale = sym_op_norm(m).max(1.0);
    sqrt_psd(m, 1e-10 * scale)
}

fn sandwich(bread: &DMatrix<f64>, meat: &DMatrix<f64>, what: &str, rel_tol: f64) -> Result<DMatrix<f64>> {
    let inv = inverse_with_tol(bread, what, rel_tol)?;
    psd_sqrt(&symmetrize(&(&inv * meat * &inv)))
}

fn padded_eigs(m: &DMatrix<f64>, q: usize) -> Vec<f64> {
    let mut e = if m.nrows() == 0 { Vec::new() } else { sym_eigenvalues_desc(m) };
    e.resize(q, 0.0);
    e.sort_by(|a, b| b.total_cmp(a));
    e
}

/// Eigenvalues of `½ M H M`, nonincreasing.
pub fn second_order_weights(m: &DMatrix<f64>, h: &DMatrix<f64>) -> Vec<f64> {
    padded_eigs(&quad_form(m, h), m.nrows()).iter().map(|e| 0.5 * e).collect()
}

fn quad_form(m: &DMatrix<f64>, h: &DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&(m * h * m))
}

fn min_eig(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        0.0
    } else {
        min_eigenvalue(m)
    }
}

fn max_eig(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        0.0
    } else {
        max_eigenvalue(m)
    }
}

/// Computes the full [`AsymptoticSummary`].
pub fn summarize(inst: &Instance, opts: &TheoryOptions) -> Result<AsymptoticSummary> {
    let local = Local::new(inst);
    let fam = &inst.family;
    let q = fam.dim_q();
    let p_law = inst.truth.law();
    let well_specified = inst.truth.in_family_parameter(fam).is_some();

    let kl = theta_kl(inst)?;
    let star = theta_star_with(inst, opts)?;
    let (kappa_eto, kappa_ieo, delta) = kappas_and_delta(inst, &kl, &star)?;
    let kl_law = fam.law(&kl)?;
    let omega_kl = inst.oracle(&kl)?.omega;
    let omega_ts = inst.oracle(&star)?.omega;

    let h_kl = local.hessian(p_law, &kl)?;
    let h_star = local.hessian(p_law, &star)?;
    let h_tilde = local.hessian(&kl_law, &kl)?;
    let l1_hat = lipschitz_sweep(&local, p_law, &star, &h_star, opts.lipschitz_radius)?;

    let (a_p, v_p) = local.fisher_pair(p_law, &kl)?;
    let (a_kl, v_kl) = local.fisher_pair(&kl_law, &kl)?;
    let c_star = local.grad_theta_covariance(p_law, &star)?;
    let c_kl = local.grad_theta_covariance(&kl_law, &kl)?;

    // difference Hessians carry noise near 1e-7 relative
    let m_eto = sandwich(&a_p, &v_p, "expected log-likelihood Hessian", 1e-12)?;
    let m_eto_t = sandwich(&a_kl, &v_kl, "model log-likelihood Hessian", 1e-12)?;
    let m_ieo = sandwich(&h_star, &c_star, "Hessian of v₀(ω_θ) at θ*", 1e-6)?;
    let m_ieo_t = sandwich(&h_tilde, &c_kl, "Hessian of v(ω_θ, P^KL) at θ^KL", 1e-6)?;

    let gaps = vec![
        sym_op_norm(&(&a_p - &a_kl)),
        sym_op_norm(&(&v_p - &v_kl)),
        sym_op_norm(&(&h_star - &h_tilde)),
        sym_op_norm(&(&c_star - &c_kl)),
        sym_op_norm(&(&h_star - &h_kl)),
    ];
    let b0 = gaps.iter().copied().fold(0.0, f64::max);

    let form_eto = quad_form(&m_eto, &h_kl);
    let form_ieo = quad_form(&m_ieo, &h_star);
    let lambda_eto: Vec<f64> = padded_eigs(&form_eto, q).iter().map(|e| 0.5 * e).collect();
    let lambda_ieo: Vec<f64> = padded_eigs(&form_ieo, q).iter().map(|e| 0.5 * e).collect();
    let scale = lambda_ieo.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if lambda_ieo.iter().any(|l| *l < -1e-8 * scale) {
        return Err(Error::solver("second-order IEO weights are negative: θ* is not a local minimum", lambda_ieo[q - 1]));
    }
    let lambda_ieo: Vec<f64> = lambda_ieo.into_iter().map(|l| l.max(0.0)).collect();
    let eto_signed = lambda_eto.iter().any(|l| *l < 0.0);

    let diff = &form_ieo - &form_eto;
    let tau1 = min_eig(&diff);
    let tau2 = max_eig(&diff);
    let tau3_printed = min_eig(&(quad_form(&m_ieo_t, &h_star) - quad_form(&m_eto_t, &h_star)));
    let tau3_kl = min_eig(&(quad_form(&m_ieo_t, &h_tilde) - quad_form(&m_eto_t, &h_tilde)));
    let tau3 = match opts.tau3_variant {
        Tau3Variant::AsPrinted => tau3_printed,
        Tau3Variant::KlHessian => tau3_kl,
    };
    let tau6 = max_eig(&form_eto);

    let grad = local.gradient(p_law, &kl)?;
    let s_eto = (&m_eto * &grad).norm();

    Ok(AsymptoticSummary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        well_specified,
        theta_kl: kl.as_slice().to_vec(),
        theta_star: star.as_slice().to_vec(),
        omega_star: inst.omega_star().as_slice().to_vec(),
        omega_kl: omega_kl.as_slice().to_vec(),
        omega_theta_star: omega_ts.as_slice().to_vec(),
        v0_star: inst.v0_star(),
        kappa0_eto: kappa_eto,
        kappa0_ieo: kappa_ieo,
        delta,
        b0,
        b0_gaps: gaps,
        chart: local.u.clone(),
        hess_v0_at_kl: local.lift(&h_kl),
        hess_v0_at_star: local.lift(&h_star),
        hess_kl_model: local.lift(&h_tilde),
        m1_eto: local.lift(&m_eto),
        m1_ieo: local.lift(&m_ieo),
        m1_eto_tilde: local.lift(&m_eto_t),
        m1_ieo_tilde: local.lift(&m_ieo_t),
        lambda_eto,
        lambda_ieo,
        eto_signed,
        tau1,
        tau2,
        tau3,
        tau3_kl_hessian: tau3_kl,
        tau3_variant: opts.tau3_variant,
        tau6,
        grad_v0_kl: local.lift_vec(&grad).as_slice().to_vec(),
        s_eto,
        l1_hat,
    })
}

/// The limit laws of `n·(R - κ₀)` for ETO and IEO.
pub fn second_order_limits(summary: &AsymptoticSummary) -> Result<(ChiSqMixture, ChiSqMixture)> {
    Ok((
        ChiSqMixture::new(summary.lambda_eto.clone())?,
        ChiSqMixture::new(summary.lambda_ieo.clone())?,
    ))
}

/// `(τ₁, τ₂, τ₃, τ₆)` recomputed from the summary matrices.
pub fn tau_spectrum(summary: &AsymptoticSummary) -> (f64, f64, f64, f64) {
    let r = |m: &DMatrix<f64>| summary.reduce(m);
    let form_eto = quad_form(&r(&summary.m1_eto), &r(&summary.hess_v0_at_kl));
    let form_ieo = quad_form(&r(&summary.m1_ieo), &r(&summary.hess_v0_at_star));
    let diff = &form_ieo - &form_eto;
    let h3 = match summary.tau3_variant {
        Tau3Variant::AsPrinted => r(&summary.hess_v0_at_star),
        Tau3Variant::KlHessian => r(&summary.hess_kl_model),
    };
    let tilde = quad_form(&r(&summary.m1_ieo_tilde), &h3) - quad_form(&r(&summary.m1_eto_tilde), &h3);
    (min_eig(&diff), max_eig(&diff), min_eig(&tilde), max_eig(&form_eto))
}
