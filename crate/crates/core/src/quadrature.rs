//! Gauss-Hermite and Gauss-Legendre rules.
//!
//! Hermite rules are stored already normalised against the standard normal
//! density, so `Σ wᵢ f(xᵢ) ≈ E f(Z)` with `Z ~ N(0, 1)` and `Σ wᵢ = 1`.
//! Legendre rules live on `[-1, 1]` and are used for piecewise integration of
//! Gaussian marginals against integrands with known kinks.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

/// Nodes and weights of a one-dimensional rule.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

type Cache = Mutex<HashMap<usize, Arc<Rule>>>;

fn cached(cache: &'static OnceLock<Cache>, n: usize, build: fn(usize) -> Rule) -> Arc<Rule> {
    let map = cache.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = map.lock().expect("quadrature cache poisoned");
    guard.entry(n).or_insert_with(|| Arc::new(build(n))).clone()
}

/// Probabilists' Gauss-Hermite rule with `n` nodes (cached).
pub fn hermite_normal(n: usize) -> Arc<Rule> {
    static CACHE: OnceLock<Cache> = OnceLock::new();
    cached(&CACHE, n.max(1), build_hermite_normal)
}

/// Gauss-Legendre rule on `[-1, 1]` with `n` nodes (cached).
pub fn legendre(n: usize) -> Arc<Rule> {
    static CACHE: OnceLock<Cache> = OnceLock::new();
    cached(&CACHE, n.max(1), build_legendre)
}

// Golub-Welsch eigenvalues of the probabilists' Jacobi matrix as starting
// points, then Newton on orthonormal physicists' polynomials for full
// precision in nodes and weights.
fn build_hermite_normal(n: usize) -> Rule {
    const PIM4: f64 = 0.751_125_544_464_942_5; // π^(-1/4)
    let jacobi = nalgebra::DMatrix::from_fn(n, n, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let mut guesses: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
    guesses.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for g in guesses {
        let mut z = g / std::f64::consts::SQRT_2;
        let mut pp = 1.0;
        for _ in 0..50 {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let step = p1 / pp;
            z -= step;
            if step.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        nodes.push(z * std::f64::consts::SQRT_2);
        weights.push(2.0 / (pp * pp) / PI.sqrt());
    }
    Rule { nodes, weights }
}

fn build_legendre(n: usize) -> Rule {
    let nf = n as f64;
    let m = n.div_ceil(2);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    Rule {
        nodes: x,
        weights: w,
    }
}

/// Node budget for expectations under Gaussian and mixture laws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSpec {
    /// Gauss-Hermite nodes per dimension (per mixture component).
    pub hermite_nodes: usize,
    /// Legendre order on each panel of the piecewise rule.
    pub legendre_order: usize,
    /// Half-width of the piecewise integration window, in standard deviations.
    pub span_sd: f64,
    /// Maximum panel width, in standard deviations.
    pub panel_sd: f64,
    /// Cap on tensor-product node count for multivariate laws.
    pub max_tensor_nodes: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            hermite_nodes: 200,
            legendre_order: 16,
            span_sd: 14.0,
            panel_sd: 1.0,
            max_tensor_nodes: 250_000,
        }
    }
}

impl QuadratureSpec {
    /// Same rule at roughly half resolution; used for accuracy self-checks.
    pub fn coarse(&self) -> Self {
        Self {
            hermite_nodes: (self.hermite_nodes / 2).max(2),
            legendre_order: (self.legendre_order / 2).max(2),
            panel_sd: self.panel_sd * 2.0,
            ..self.clone()
        }
    }

    /// Hermite nodes per dimension for a `dim`-variate tensor product.
    pub fn nodes_per_dim(&self, dim: usize) -> usize {
        if dim <= 1 {
            return self.hermite_nodes;
        }
        let cap = (self.max_tensor_nodes as f64).powf(1.0 / dim as f64).floor() as usize;
        self.hermite_nodes.min(cap).max(2)
    }
}
