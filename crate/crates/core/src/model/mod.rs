//! Distribution families, true distributions, datasets and expectations.

mod dataset;
mod family;
mod law;
mod truth;

pub use dataset::Dataset;
pub use family::{project_simplex, FamilyKind, ParamFamily, ThetaBounds, DEFAULT_THETA_HALF_WIDTH};
pub use law::{GaussianComponent, Law};
pub use truth::{TrueDistribution, TruthKind};

use crate::quadrature::QuadratureSpec;

/// Options for [`expectation_under`].
#[derive(Debug, Clone, Default)]
pub struct ExpectationOptions {
    /// Kink locations of a one-dimensional integrand.
    pub breakpoints: Vec<f64>,
    /// Relative agreement required between the configured and a coarser rule.
    /// `None` uses `1e-9`.
    pub rel_tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expectation {
    pub value: f64,
    pub nodes: usize,
    /// Set when the configured rule and a coarser one disagree beyond `rel_tol`.
    pub warning: Option<String>,
}

/// `E_P f(z)`, with node count and an accuracy warning when the rule looks unresolved.
pub fn expectation_under(dist: &TrueDistribution, f: impl Fn(&[f64]) -> f64, opts: &ExpectationOptions) -> Expectation {
    let law = dist.law();
    let quad = dist.quadrature();
    let mut nodes = 0usize;
    let mut value = 0.0;
    law.integrate(quad, &opts.breakpoints, |z, w| {
        nodes += 1;
        value += w * f(z);
    });
    let mut warning = None;
    if let Law::Gaussian(_) = law {
        let coarse = QuadratureSpec {
            hermite_nodes: (quad.hermite_nodes * 3 / 4).max(8),
            legendre_order: (quad.legendre_order * 3 / 4).max(4),
            max_tensor_nodes: (quad.max_tensor_nodes / 2).max(64),
            ..*quad
        };
        let other = law.expect(&coarse, &opts.breakpoints, &f);
        let tol = opts.rel_tol.unwrap_or(1e-9);
        let gap = (value - other).abs();
        if gap > tol * value.abs().max(1.0) {
            warning = Some(format!(
                "quadrature unresolved: {nodes}-node value {value:.12e} differs from coarser rule by {gap:.3e}"
            ));
        }
    }
    Expectation { value, nodes, warning }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn standard_normal_second_moment() {
        let p = TrueDistribution::mixture_1d(&[1.0], &[0.0], 1.0).unwrap();
        let e = expectation_under(&p, |z| z[0] * z[0], &ExpectationOptions::default());
        assert_abs_diff_eq!(e.value, 1.0, epsilon = 1e-10);
        assert!(e.warning.is_none());
        assert!(e.nodes > 0);
    }

    #[test]
    fn symmetric_mixture_mean() {
        let p = TrueDistribution::mixture_1d(&[0.5, 0.5], &[-2.0, 2.0], 1.0).unwrap();
        let e = expectation_under(&p, |z| z[0], &ExpectationOptions::default());
        assert_abs_diff_eq!(e.value, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn absolute_value_with_breakpoint() {
        let p = TrueDistribution::mixture_1d(&[1.0], &[0.0], 1.0).unwrap();
        let opts = ExpectationOptions { breakpoints: vec![0.0], rel_tol: None };
        let e = expectation_under(&p, |z| z[0].abs(), &opts);
        assert_abs_diff_eq!(e.value, (2.0 / std::f64::consts::PI).sqrt(), epsilon = 1e-6);
    }

    #[test]
    fn unresolved_integrand_is_flagged() {
        let p = TrueDistribution::mixture_1d(&[1.0], &[0.0], 1.0).unwrap();
        let e = expectation_under(&p, |z| z[0].abs(), &ExpectationOptions::default());
        assert!(e.warning.is_some());
    }

    #[test]
    fn empirical_average_is_exact() {
        let p = TrueDistribution::empirical(Dataset::from_scalars(&[1.0, 2.0, 6.0]).unwrap()).unwrap();
        let e = expectation_under(&p, |z| z[0], &ExpectationOptions::default());
        assert_eq!(e.value, 3.0);
        assert_eq!(e.nodes, 3);
    }
}
