//! Concrete probability laws used by every expectation in the crate.
//!
//! Each parametric family member and each ground-truth distribution lowers to
//! a [`Law`]: either a finite Gaussian mixture or a weighted set of atoms.
//! Integration against a `Law` is exact for atoms, Gauss-Hermite for smooth
//! integrands and piecewise Gauss-Legendre (split at caller-supplied kinks)
//! for one-dimensional integrands that are only piecewise smooth.

use crate::error::{Error, Result};
use crate::quadrature::{hermite_normal, legendre, QuadratureSpec};
use crate::special::{norm_cdf, norm_pdf, norm_quantile};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    chol: DMatrix<f64>,
}

impl GaussianComponent {
    pub fn new(weight: f64, mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::Invalid(format!(
                "covariance is {}x{} but mean has length {d}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Invalid("covariance is not positive definite".into()))?
            .l();
        Ok(Self {
            weight,
            mean,
            cov,
            chol,
        })
    }

    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    fn sd(&self, i: usize) -> f64 {
        self.cov[(i, i)].sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Law {
    Gaussian(Vec<GaussianComponent>),
    Discrete {
        atoms: Vec<DVector<f64>>,
        weights: Vec<f64>,
    },
}

impl Law {
    pub fn dim(&self) -> usize {
        match self {
            Law::Gaussian(c) => c[0].mean.len(),
            Law::Discrete { atoms, .. } => atoms[0].len(),
        }
    }

    pub fn mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.dim());
        match self {
            Law::Gaussian(cs) => cs.iter().for_each(|c| m += &c.mean * c.weight),
            Law::Discrete { atoms, weights } => atoms
                .iter()
                .zip(weights)
                .for_each(|(a, w)| m += a * *w),
        }
        m
    }

    /// Visits weighted nodes `(z, w)` whose weighted sum approximates `E f(z)`.
    ///
    /// `breaks` lists kink locations of the integrand; they are honoured for
    /// one-dimensional Gaussian laws and ignored otherwise.
    pub fn integrate(&self, quad: &QuadratureSpec, breaks: &[f64], mut visit: impl FnMut(&[f64], f64)) {
        match self {
            Law::Discrete { atoms, weights } => {
                for (a, w) in atoms.iter().zip(weights) {
                    if *w > 0.0 {
                        visit(a.as_slice(), *w);
                    }
                }
            }
            Law::Gaussian(cs) => {
                let d = self.dim();
                for c in cs {
                    if c.weight <= 0.0 {
                        continue;
                    }
                    if d == 1 && !breaks.is_empty() {
                        piecewise_1d(c.mean[0], c.sd(0), c.weight, quad, breaks, &mut visit);
                    } else {
                        tensor_hermite(c, quad, &mut visit);
                    }
                }
            }
        }
    }

    /// `E f(z)` under this law.
    pub fn expect(&self, quad: &QuadratureSpec, breaks: &[f64], f: impl Fn(&[f64]) -> f64) -> f64 {
        let mut acc = 0.0;
        self.integrate(quad, breaks, |z, w| acc += w * f(z));
        acc
    }

    /// Law of coordinate `i`.
    pub fn marginal(&self, i: usize) -> Law {
        match self {
            Law::Gaussian(cs) => Law::Gaussian(
                cs.iter()
                    .map(|c| GaussianComponent {
                        weight: c.weight,
                        mean: DVector::from_element(1, c.mean[i]),
                        cov: DMatrix::from_element(1, 1, c.cov[(i, i)]),
                        chol: DMatrix::from_element(1, 1, c.sd(i)),
                    })
                    .collect(),
            ),
            Law::Discrete { atoms, weights } => Law::Discrete {
                atoms: atoms.iter().map(|a| DVector::from_element(1, a[i])).collect(),
                weights: weights.clone(),
            },
        }
    }

    pub fn marginal_cdf(&self, i: usize, x: f64) -> f64 {
        match self {
            Law::Gaussian(cs) => cs
                .iter()
                .map(|c| c.weight * norm_cdf((x - c.mean[i]) / c.sd(i)))
                .sum(),
            Law::Discrete { atoms, weights } => atoms
                .iter()
                .zip(weights)
                .filter(|(a, _)| a[i] <= x)
                .map(|(_, w)| w)
                .sum(),
        }
    }

    /// Marginal density of coordinate `i`; zero for atomic laws.
    pub fn marginal_pdf(&self, i: usize, x: f64) -> f64 {
        match self {
            Law::Gaussian(cs) => cs
                .iter()
                .map(|c| c.weight * norm_pdf((x - c.mean[i]) / c.sd(i)) / c.sd(i))
                .sum(),
            Law::Discrete { .. } => 0.0,
        }
    }

    /// Smallest `x` with `F_i(x) >= p`.
    pub fn marginal_quantile(&self, i: usize, p: f64) -> f64 {
        match self {
            Law::Gaussian(cs) if cs.len() == 1 => cs[0].mean[i] + cs[0].sd(i) * norm_quantile(p),
            Law::Gaussian(cs) => {
                let mut lo = cs
                    .iter()
                    .map(|c| c.mean[i] - 40.0 * c.sd(i))
                    .fold(f64::INFINITY, f64::min);
                let mut hi = cs
                    .iter()
                    .map(|c| c.mean[i] + 40.0 * c.sd(i))
                    .fold(f64::NEG_INFINITY, f64::max);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if self.marginal_cdf(i, mid) >= p {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                0.5 * (lo + hi)
            }
            Law::Discrete { atoms, weights } => {
                let mut pts: Vec<(f64, f64)> = atoms.iter().zip(weights).map(|(a, w)| (a[i], *w)).collect();
                pts.sort_by(|a, b| a.0.total_cmp(&b.0));
                let mut cum = 0.0;
                for (x, w) in &pts {
                    cum += w;
                    if cum >= p - 1e-12 {
                        return *x;
                    }
                }
                pts.last().map_or(f64::NAN, |v| v.0)
            }
        }
    }

    /// Closed-form `(E(x - z_i)^+, E(z_i - x)^+)`.
    pub fn marginal_partial_moments(&self, i: usize, x: f64) -> (f64, f64) {
        match self {
            Law::Gaussian(cs) => cs.iter().fold((0.0, 0.0), |(lo, hi), c| {
                let s = c.sd(i);
                let u = (x - c.mean[i]) / s;
                let below = (x - c.mean[i]) * norm_cdf(u) + s * norm_pdf(u);
                let above = below - (x - c.mean[i]);
                (lo + c.weight * below, hi + c.weight * above)
            }),
            Law::Discrete { atoms, weights } => atoms.iter().zip(weights).fold((0.0, 0.0), |(lo, hi), (a, w)| {
                (lo + w * (x - a[i]).max(0.0), hi + w * (a[i] - x).max(0.0))
            }),
        }
    }

    /// Draws one point into `out`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            Law::Gaussian(cs) => {
                let c = if cs.len() == 1 {
                    &cs[0]
                } else {
                    &cs[pick(rng, cs.iter().map(|c| c.weight))]
                };
                let d = out.len();
                let y: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                for r in 0..d {
                    let mut v = c.mean[r];
                    for k in 0..=r {
                        v += c.chol[(r, k)] * y[k];
                    }
                    out[r] = v;
                }
            }
            Law::Discrete { atoms, weights } => {
                let k = pick(rng, weights.iter().copied());
                out.copy_from_slice(atoms[k].as_slice());
            }
        }
    }
}

// Inverse-CDF selection over nonnegative weights summing to one.
fn pick<R: Rng + ?Sized>(rng: &mut R, weights: impl Iterator<Item = f64>) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (k, w) in weights.enumerate() {
        if w > 0.0 {
            last_positive = k;
        }
        cum += w;
        if u < cum {
            return k;
        }
    }
    last_positive
}

fn tensor_hermite(c: &GaussianComponent, quad: &QuadratureSpec, visit: &mut impl FnMut(&[f64], f64)) {
    let d = c.mean.len();
    let rule = hermite_normal(quad.nodes_per_dim(d));
    let m = rule.nodes.len();
    let mut idx = vec![0usize; d];
    let mut y = vec![0.0; d];
    let mut z = vec![0.0; d];
    loop {
        let mut w = c.weight;
        for k in 0..d {
            y[k] = rule.nodes[idx[k]];
            w *= rule.weights[idx[k]];
        }
        for r in 0..d {
            let mut v = c.mean[r];
            for k in 0..=r {
                v += c.chol[(r, k)] * y[k];
            }
            z[r] = v;
        }
        visit(&z, w);
        // odometer increment
        let mut k = 0;
        loop {
            if k == d {
                return;
            }
            idx[k] += 1;
            if idx[k] < m {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

fn piecewise_1d(
    mu: f64,
    sd: f64,
    weight: f64,
    quad: &QuadratureSpec,
    breaks: &[f64],
    visit: &mut impl FnMut(&[f64], f64),
) {
    let a = mu - quad.span_sd * sd;
    let b = mu + quad.span_sd * sd;
    let mut cuts: Vec<f64> = Vec::with_capacity(breaks.len() + 2);
    cuts.push(a);
    cuts.extend(breaks.iter().copied().filter(|x| *x > a && *x < b));
    cuts.push(b);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let rule = legendre(quad.legendre_order);
    let max_panel = quad.panel_sd * sd;
    let norm = 1.0 / sd;
    for seg in cuts.windows(2) {
        let (lo, hi) = (seg[0], seg[1]);
        let panels = ((hi - lo) / max_panel).ceil().max(1.0) as usize;
        let h = (hi - lo) / panels as f64;
        for p in 0..panels {
            let pl = lo + p as f64 * h;
            let half = 0.5 * h;
            let mid = pl + half;
            for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                let z = mid + half * x;
                let dens = norm_pdf((z - mu) / sd) * norm;
                visit(&[z], weight * w * half * dens);
            }
        }
    }
}
