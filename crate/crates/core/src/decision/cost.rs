//! Cost functions `c(ω, z)` and their expectations under a [`Law`].

use crate::error::{Error, Result};
use crate::model::{GaussianComponent, Law};
use crate::quadrature::QuadratureSpec;
use crate::special::{bivariate_norm_cdf, norm_cdf, sigmoid, softplus};
use nalgebra::{DMatrix, DVector};

/// Default half-width of the decision box Ω.
pub const DEFAULT_OMEGA_HALF_WIDTH: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub enum CostKind {
    /// `hᵀ(ω - z)⁺ + bᵀ(z - ω)⁺`, optionally softplus-smoothed with width `smoothing`.
    Newsvendor { h: Vec<f64>, b: Vec<f64>, smoothing: f64 },
    /// `exp(-zᵀω) + γ‖ω‖²`.
    Portfolio { gamma: f64, dim: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    kind: CostKind,
    omega_half_width: f64,
}

impl CostModel {
    pub fn newsvendor(h: Vec<f64>, b: Vec<f64>, smoothing: f64) -> Result<Self> {
        if h.is_empty() || h.len() != b.len() {
            return Err(Error::Invalid("newsvendor needs matching nonempty h and b".into()));
        }
        if h.iter().chain(&b).any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Invalid("newsvendor h and b must be positive".into()));
        }
        if !(smoothing >= 0.0) || !smoothing.is_finite() {
            return Err(Error::Invalid("smoothing width must be nonnegative".into()));
        }
        Ok(Self {
            kind: CostKind::Newsvendor { h, b, smoothing },
            omega_half_width: DEFAULT_OMEGA_HALF_WIDTH,
        })
    }

    /// Scalar newsvendor with holding cost `h` and backlog cost `b`.
    pub fn newsvendor_1d(h: f64, b: f64) -> Result<Self> {
        Self::newsvendor(vec![h], vec![b], 0.0)
    }

    pub fn portfolio(gamma: f64, dim: usize) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::Invalid("portfolio ridge weight must be positive".into()));
        }
        if dim == 0 {
            return Err(Error::Invalid("portfolio dimension must be positive".into()));
        }
        Ok(Self {
            kind: CostKind::Portfolio { gamma, dim },
            omega_half_width: DEFAULT_OMEGA_HALF_WIDTH,
        })
    }

    pub fn with_omega_half_width(mut self, half_width: f64) -> Result<Self> {
        if !(half_width > 0.0) {
            return Err(Error::Invalid("decision box half-width must be positive".into()));
        }
        self.omega_half_width = half_width;
        Ok(self)
    }

    /// Same model with a different smoothing width (newsvendor only).
    pub fn with_smoothing(&self, width: f64) -> Self {
        let mut out = self.clone();
        if let CostKind::Newsvendor { smoothing, .. } = &mut out.kind {
            *smoothing = width;
        }
        out
    }

    pub fn kind(&self) -> &CostKind {
        &self.kind
    }
    pub fn omega_half_width(&self) -> f64 {
        self.omega_half_width
    }
    pub fn dim_p(&self) -> usize {
        match &self.kind {
            CostKind::Newsvendor { h, .. } => h.len(),
            CostKind::Portfolio { dim, .. } => *dim,
        }
    }
    pub fn smoothing(&self) -> f64 {
        match &self.kind {
            CostKind::Newsvendor { smoothing, .. } => *smoothing,
            CostKind::Portfolio { .. } => 0.0,
        }
    }
    pub fn is_newsvendor(&self) -> bool {
        matches!(self.kind, CostKind::Newsvendor { .. })
    }

    /// `b / (b + h)` per coordinate (newsvendor only).
    pub fn critical_ratios(&self) -> Option<Vec<f64>> {
        match &self.kind {
            CostKind::Newsvendor { h, b, .. } => Some(h.iter().zip(b).map(|(h, b)| b / (b + h)).collect()),
            CostKind::Portfolio { .. } => None,
        }
    }

    /// Whether `ω` lies strictly inside Ω.
    pub fn is_interior(&self, omega: &DVector<f64>) -> bool {
        omega.iter().all(|v| v.abs() < self.omega_half_width)
    }

    pub(crate) fn check_interior(&self, omega: &DVector<f64>) -> Result<()> {
        if self.is_interior(omega) {
            Ok(())
        } else {
            Err(Error::NonInterior(format!(
                "decision {:?} outside (-{w}, {w})^p",
                omega.as_slice(),
                w = self.omega_half_width
            )))
        }
    }

    /// `c(ω, z)`, smoothed when the model carries a positive width.
    pub fn cost(&self, omega: &[f64], z: &[f64]) -> f64 {
        self.cost_width(omega, z, self.smoothing())
    }

    /// `c(ω, z)` with the kinked newsvendor regardless of smoothing.
    pub fn exact_cost(&self, omega: &[f64], z: &[f64]) -> f64 {
        self.cost_width(omega, z, 0.0)
    }

    pub fn cost_width(&self, omega: &[f64], z: &[f64], width: f64) -> f64 {
        match &self.kind {
            CostKind::Newsvendor { h, b, .. } => (0..h.len())
                .map(|i| {
                    let x = omega[i] - z[i];
                    h[i] * plus(x, width) + b[i] * plus(-x, width)
                })
                .sum(),
            CostKind::Portfolio { gamma, .. } => {
                let dot: f64 = omega.iter().zip(z).map(|(w, z)| w * z).sum();
                (-dot).exp() + gamma * omega.iter().map(|w| w * w).sum::<f64>()
            }
        }
    }

    /// `∇_ω c(ω, z)`; the kinked newsvendor uses the right derivative at ties.
    pub fn grad_omega(&self, omega: &[f64], z: &[f64], width: f64) -> DVector<f64> {
        match &self.kind {
            CostKind::Newsvendor { h, b, .. } => DVector::from_fn(h.len(), |i, _| {
                let x = omega[i] - z[i];
                if width > 0.0 {
                    h[i] * sigmoid(x / width) - b[i] * sigmoid(-x / width)
                } else if x >= 0.0 {
                    h[i]
                } else {
                    -b[i]
                }
            }),
            CostKind::Portfolio { gamma, .. } => {
                let e = (-omega.iter().zip(z).map(|(w, z)| w * z).sum::<f64>()).exp();
                DVector::from_fn(omega.len(), |i, _| -z[i] * e + 2.0 * gamma * omega[i])
            }
        }
    }

    /// `∇_ωω c(ω, z)`; zero almost everywhere for the kinked newsvendor.
    pub fn hess_omega(&self, omega: &[f64], z: &[f64], width: f64) -> DMatrix<f64> {
        match &self.kind {
            CostKind::Newsvendor { h, b, .. } => DMatrix::from_fn(h.len(), h.len(), |i, j| {
                if i != j || width <= 0.0 {
                    return 0.0;
                }
                let s = sigmoid((omega[i] - z[i]) / width);
                (h[i] + b[i]) * s * (1.0 - s) / width
            }),
            CostKind::Portfolio { gamma, .. } => {
                let p = omega.len();
                let e = (-omega.iter().zip(z).map(|(w, z)| w * z).sum::<f64>()).exp();
                DMatrix::from_fn(p, p, |i, j| z[i] * z[j] * e + if i == j { 2.0 * gamma } else { 0.0 })
            }
        }
    }

    /// `v(ω, Q) = E_Q c(ω, z)` with newsvendor width `width`.
    pub fn expected_cost(&self, law: &Law, quad: &QuadratureSpec, omega: &DVector<f64>, width: f64) -> f64 {
        match &self.kind {
            CostKind::Newsvendor { h, b, .. } => (0..h.len())
                .map(|i| {
                    if width > 0.0 {
                        smoothed_marginal(law, quad, i, omega[i], width, |x| {
                            h[i] * plus(x, width) + b[i] * plus(-x, width)
                        })
                    } else {
                        let (below, above) = law.marginal_partial_moments(i, omega[i]);
                        h[i] * below + b[i] * above
                    }
                })
                .sum(),
            CostKind::Portfolio { gamma, .. } => {
                let (m, _, _) = exp_moments(law, omega);
                m + gamma * omega.norm_squared()
            }
        }
    }

    /// `∇_ω v(ω, Q)`.
    pub fn expected_grad(&self, law: &Law, quad: &QuadratureSpec, omega: &DVector<f64>, width: f64) -> DVector<f64> {
        match &self.kind {
            CostKind::Newsvendor { h, b, .. } => DVector::from_fn(h.len(), |i, _| {
                if width > 0.0 {
                    smoothed_marginal(law, quad, i, omega[i], width, |x| {
                        h[i] * sigmoid(x / width) - b[i] * sigmoid(-x / width)
                    })
                } else {
                    let f = law.marginal_cdf(i, omega[i]);
                    h[i] * f - b[i] * (1.0 - f)
                }
            }),
            CostKind::Portfolio { gamma, .. } => {
                let (_, first, _) = exp_moments(law, omega);
                -first + omega * (2.0 * gamma)
            }
        }
    }

    /// `∇_ωω v(ω, Q)`; for the kinked newsvendor this is `diag((h+b) f_i(ω_i))`.
    pub fn expected_hess(&self, law: &Law, quad: &QuadratureSpec, omega: &DVector<f64>, width: f64) -> DMatrix<f64> {
        match &self.kind {
            CostKind::Newsvendor { h, b, .. } => {
                let p = h.len();
                let mut out = DMatrix::zeros(p, p);
                for i in 0..p {
                    out[(i, i)] = if width > 0.0 {
                        smoothed_marginal(law, quad, i, omega[i], width, |x| {
                            let s = sigmoid(x / width);
                            (h[i] + b[i]) * s * (1.0 - s) / width
                        })
                    } else {
                        (h[i] + b[i]) * law.marginal_pdf(i, omega[i])
                    };
                }
                out
            }
            CostKind::Portfolio { gamma, .. } => {
                let p = omega.len();
                let (_, _, second) = exp_moments(law, omega);
                second + DMatrix::identity(p, p) * (2.0 * gamma)
            }
        }
    }

    /// `Cov_Q(∇_ω c(ω, z))`.
    ///
    /// Smoothed newsvendor costs under Gaussian components with correlated
    /// coordinates are not supported.
    pub fn grad_covariance(&self, law: &Law, quad: &QuadratureSpec, omega: &DVector<f64>, width: f64) -> Result<DMatrix<f64>> {
        let p = omega.len();
        if let Law::Discrete { atoms, weights } = law {
            let mut mean = DVector::zeros(p);
            let mut second = DMatrix::zeros(p, p);
            for (a, w) in atoms.iter().zip(weights) {
                if *w <= 0.0 {
                    continue;
                }
                let g = self.grad_omega(omega.as_slice(), a.as_slice(), width);
                mean += &g * *w;
                second += &g * g.transpose() * *w;
            }
            return Ok(second - &mean * mean.transpose());
        }
        let Law::Gaussian(cs) = law else { unreachable!() };
        match &self.kind {
            CostKind::Portfolio { gamma, .. } => {
                let (_, first, _) = exp_moments(law, omega);
                let (_, _, second2) = exp_moments(law, &(omega * 2.0));
                let mean = -&first + omega * (2.0 * gamma);
                let cross = &first * omega.transpose();
                let raw = second2 - (&cross + cross.transpose()) * (2.0 * gamma) + omega * omega.transpose() * (4.0 * gamma * gamma);
                Ok(raw - &mean * mean.transpose())
            }
            CostKind::Newsvendor { h, b, .. } if width <= 0.0 => {
                // g_i = (h_i + b_i) 1{z_i <= ω_i} - b_i
                let mut joint = DMatrix::<f64>::zeros(p, p);
                let mut marg = DVector::<f64>::zeros(p);
                for c in cs {
                    let u: Vec<f64> = (0..p).map(|i| (omega[i] - c.mean[i]) / c.cov[(i, i)].sqrt()).collect();
                    for i in 0..p {
                        marg[i] += c.weight * norm_cdf(u[i]);
                        joint[(i, i)] += c.weight * norm_cdf(u[i]);
                        for j in 0..i {
                            let rho = c.cov[(i, j)] / (c.cov[(i, i)] * c.cov[(j, j)]).sqrt();
                            let pij = c.weight * bivariate_norm_cdf(u[i], u[j], rho);
                            joint[(i, j)] += pij;
                            joint[(j, i)] += pij;
                        }
                    }
                }
                Ok(DMatrix::from_fn(p, p, |i, j| {
                    (h[i] + b[i]) * (h[j] + b[j]) * (joint[(i, j)] - marg[i] * marg[j])
                }))
            }
            CostKind::Newsvendor { h, b, .. } => {
                let g = |i: usize, x: f64| h[i] * sigmoid(x / width) - b[i] * sigmoid(-x / width);
                let mut mean = DVector::<f64>::zeros(p);
                let mut second = DMatrix::<f64>::zeros(p, p);
                for c in cs {
                    let single = Law::Gaussian(vec![GaussianComponent::new(1.0, c.mean.clone(), c.cov.clone())?]);
                    let m: Vec<f64> = (0..p).map(|i| smoothed_marginal(&single, quad, i, omega[i], width, |x| g(i, x))).collect();
                    for i in 0..p {
                        mean[i] += c.weight * m[i];
                        second[(i, i)] += c.weight * smoothed_marginal(&single, quad, i, omega[i], width, |x| g(i, x).powi(2));
                        for j in 0..i {
                            if c.cov[(i, j)] != 0.0 {
                                return Err(Error::NotImplemented(
                                    "gradient covariance of the smoothed newsvendor under correlated coordinates".into(),
                                ));
                            }
                            second[(i, j)] += c.weight * m[i] * m[j];
                            second[(j, i)] += c.weight * m[i] * m[j];
                        }
                    }
                }
                Ok(second - &mean * mean.transpose())
            }
        }
    }
}

fn plus(x: f64, width: f64) -> f64 {
    if width > 0.0 {
        width * softplus(x / width)
    } else {
        x.max(0.0)
    }
}

// E g(ω_i - z_i) over the i-th marginal, with panel breaks clustered at the
// smoothing scale around ω_i.
fn smoothed_marginal(law: &Law, quad: &QuadratureSpec, i: usize, w: f64, width: f64, g: impl Fn(f64) -> f64) -> f64 {
    let marginal = law.marginal(i);
    let mut breaks = vec![w];
    let mut k = width;
    while k <= 64.0 * width {
        breaks.push(w - k);
        breaks.push(w + k);
        k *= 2.0;
    }
    marginal.expect(quad, &breaks, |z| g(w - z[0]))
}

// (E e^{-zᵀω}, E z e^{-zᵀω}, E zzᵀ e^{-zᵀω}) in closed form.
fn exp_moments(law: &Law, omega: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
    let p = omega.len();
    let mut m = 0.0;
    let mut first = DVector::zeros(p);
    let mut second = DMatrix::zeros(p, p);
    match law {
        Law::Gaussian(cs) => {
            for c in cs {
                let sw = &c.cov * omega;
                let e = c.weight * (-c.mean.dot(omega) + 0.5 * omega.dot(&sw)).exp();
                // tilted mean μ - Σω, tilted covariance Σ
                let tilt = &c.mean - sw;
                m += e;
                first += &tilt * e;
                second += (&tilt * tilt.transpose() + &c.cov) * e;
            }
        }
        Law::Discrete { atoms, weights } => {
            for (a, w) in atoms.iter().zip(weights) {
                if *w <= 0.0 {
                    continue;
                }
                let e = w * (-a.dot(omega)).exp();
                m += e;
                first += a * e;
                second += a * a.transpose() * e;
            }
        }
    }
    (m, first, second)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TrueDistribution;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cost_examples() {
        let nv = CostModel::newsvendor_1d(1.0, 1.0).unwrap();
        assert_eq!(nv.cost(&[0.7], &[0.7]), 0.0);
        let nv = CostModel::newsvendor_1d(1.0, 3.0).unwrap();
        assert_eq!(nv.cost(&[0.0], &[2.0]), 6.0);
        let pf = CostModel::portfolio(0.5, 1).unwrap();
        assert_eq!(pf.cost(&[0.0], &[123.0]), 1.0);
    }

    #[test]
    fn invalid_parameters() {
        assert!(CostModel::newsvendor_1d(0.0, 1.0).is_err());
        assert!(CostModel::newsvendor(vec![1.0], vec![1.0], -1.0).is_err());
        assert!(CostModel::portfolio(0.0, 1).is_err());
    }

    #[test]
    fn smoothed_cost_approaches_kinked() {
        let nv = CostModel::newsvendor(vec![1.0], vec![3.0], 1e-3).unwrap();
        for &(w, z) in &[(0.0, 2.0), (1.0, -0.5), (0.2, 0.2)] {
            let gap = nv.cost(&[w], &[z]) - nv.exact_cost(&[w], &[z]);
            assert!(gap >= 0.0 && gap <= 4.0 * 1e-3 * 2f64.ln());
        }
    }

    #[test]
    fn expectations_match_quadrature() {
        let p = TrueDistribution::mixture_1d(&[0.3, 0.7], &[-1.0, 1.5], 0.8).unwrap();
        let quad = QuadratureSpec::default();
        let w = DVector::from_element(1, 0.4);
        let nv = CostModel::newsvendor_1d(1.0, 3.0).unwrap();
        let exact = nv.expected_cost(p.law(), &quad, &w, 0.0);
        let q = p.law().expect(&quad, &[0.4], |z| nv.exact_cost(&[0.4], z));
        assert_abs_diff_eq!(exact, q, epsilon = 1e-13);

        let pf = CostModel::portfolio(0.5, 1).unwrap();
        let v = pf.expected_cost(p.law(), &quad, &w, 0.0);
        let q = p.law().expect(&quad, &[], |z| pf.cost(&[0.4], z));
        assert_abs_diff_eq!(v, q, epsilon = 1e-12);
        let g = pf.expected_grad(p.law(), &quad, &w, 0.0)[0];
        let qg = p.law().expect(&quad, &[], |z| pf.grad_omega(&[0.4], z, 0.0)[0]);
        assert_abs_diff_eq!(g, qg, epsilon = 1e-12);
        let hh = pf.expected_hess(p.law(), &quad, &w, 0.0)[(0, 0)];
        let qh = p.law().expect(&quad, &[], |z| pf.hess_omega(&[0.4], z, 0.0)[(0, 0)]);
        assert_abs_diff_eq!(hh, qh, epsilon = 1e-12);
    }

    #[test]
    fn smoothed_derivatives_match_differences() {
        let p = TrueDistribution::mixture_1d(&[1.0], &[0.0], 1.0).unwrap();
        let quad = QuadratureSpec::default();
        let nv = CostModel::newsvendor(vec![1.0], vec![3.0], 1e-2).unwrap();
        let s = nv.smoothing();
        let at = |x: f64| DVector::from_element(1, x);
        let e = 1e-5;
        let g = nv.expected_grad(p.law(), &quad, &at(0.3), s)[0];
        let fd = (nv.expected_cost(p.law(), &quad, &at(0.3 + e), s) - nv.expected_cost(p.law(), &quad, &at(0.3 - e), s)) / (2.0 * e);
        assert_abs_diff_eq!(g, fd, epsilon = 1e-8);
        let h = nv.expected_hess(p.law(), &quad, &at(0.3), s)[(0, 0)];
        let fd = (nv.expected_grad(p.law(), &quad, &at(0.3 + e), s)[0] - nv.expected_grad(p.law(), &quad, &at(0.3 - e), s)[0]) / (2.0 * e);
        assert_abs_diff_eq!(h, fd, epsilon = 1e-7);
    }

    #[test]
    fn bivariate_portfolio_mgf() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]);
        let p = TrueDistribution::gaussian_mixture(vec![1.0], vec![DVector::from_vec(vec![0.2, -0.1])], cov).unwrap();
        let pf = CostModel::portfolio(0.5, 2).unwrap();
        let w = DVector::from_vec(vec![0.3, -0.4]);
        let quad = QuadratureSpec::default();
        let closed = pf.expected_cost(p.law(), &quad, &w, 0.0);
        let q = p.law().expect(&quad, &[], |z| pf.cost(w.as_slice(), z));
        assert_abs_diff_eq!(closed, q, epsilon = 1e-12);
    }

    fn quadrature_covariance(model: &CostModel, law: &Law, quad: &QuadratureSpec, w: &DVector<f64>, width: f64, breaks: &[f64]) -> DMatrix<f64> {
        let p = w.len();
        let mean = DVector::from_fn(p, |i, _| law.expect(quad, breaks, |z| model.grad_omega(w.as_slice(), z, width)[i]));
        DMatrix::from_fn(p, p, |i, j| {
            law.expect(quad, breaks, |z| {
                let g = model.grad_omega(w.as_slice(), z, width);
                g[i] * g[j]
            }) - mean[i] * mean[j]
        })
    }

    #[test]
    fn gradient_covariance_matches_quadrature() {
        let quad = QuadratureSpec::default();
        let p = TrueDistribution::mixture_1d(&[0.5, 0.5], &[-2.0, 2.0], 1.0).unwrap();
        let w = DVector::from_element(1, 0.6);
        let nv = CostModel::newsvendor_1d(1.0, 3.0).unwrap();
        let f = p.law().marginal_cdf(0, 0.6);
        let c = nv.grad_covariance(p.law(), &quad, &w, 0.0).unwrap();
        assert_abs_diff_eq!(c[(0, 0)], 16.0 * f * (1.0 - f), epsilon = 1e-14);
        let c = nv.grad_covariance(p.law(), &quad, &w, 0.05).unwrap();
        let q = quadrature_covariance(&nv, p.law(), &quad, &w, 0.05, &[0.6]);
        assert_abs_diff_eq!(c[(0, 0)], q[(0, 0)], epsilon = 1e-6);

        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]);
        let p2 = TrueDistribution::gaussian_mixture(vec![1.0], vec![DVector::from_vec(vec![0.2, -0.1])], cov).unwrap();
        let w2 = DVector::from_vec(vec![0.3, -0.4]);
        let pf = CostModel::portfolio(0.5, 2).unwrap();
        let c = pf.grad_covariance(p2.law(), &quad, &w2, 0.0).unwrap();
        let q = quadrature_covariance(&pf, p2.law(), &quad, &w2, 0.0, &[]);
        assert!((c - q).abs().max() < 1e-11);

        let nv2 = CostModel::newsvendor(vec![1.0, 2.0], vec![3.0, 1.0], 0.0).unwrap();
        let c = nv2.grad_covariance(p2.law(), &quad, &w2, 0.0).unwrap();
        let mut rng = crate::rng::RngStream::new(5, 0).rng();
        let n = 400_000;
        let mut z = [0.0; 2];
        let (mut s1, mut s2, mut s12) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            p2.law().sample_into(&mut rng, &mut z);
            let g = nv2.grad_omega(w2.as_slice(), &z, 0.0);
            s1 += g[0];
            s2 += g[1];
            s12 += g[0] * g[1];
        }
        let nf = n as f64;
        let mc = s12 / nf - s1 / nf * s2 / nf;
        assert!((c[(0, 1)] - mc).abs() < 0.02, "{} vs {}", c[(0, 1)], mc);
        assert!(nv2.with_smoothing(0.1).grad_covariance(p2.law(), &quad, &w2, 0.1).is_err());
    }
}
