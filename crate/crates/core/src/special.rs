//! Standard normal density, distribution and quantile functions.

use libm::{erf, erfc};
use statrs::function::erf::erfc_inv;
use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail `1 - Φ(x)` without cancellation.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

/// `P(-a <= Z <= a)` for `a >= 0`, accurate for small `a`.
pub fn norm_central_mass(a: f64) -> f64 {
    erf(a * FRAC_1_SQRT_2)
}

/// Φ⁻¹(p), polished with two Newton steps on the CDF.
pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let mut x = -SQRT_2 * erfc_inv(2.0 * p);
    for _ in 0..2 {
        let dens = norm_pdf(x);
        if dens <= 0.0 || !x.is_finite() {
            break;
        }
        let err = if p < 0.5 {
            norm_cdf(x) - p
        } else {
            (1.0 - p) - norm_sf(x)
        };
        x -= err / dens;
    }
    x
}

/// `P(X <= a, Y <= b)` for standard bivariate normals with correlation `rho`.
///
/// Integrates `φ(x) Φ((b - ρx)/√(1-ρ²))` over `x <= a` with Gauss-Legendre
/// panels of unit width.
pub fn bivariate_norm_cdf(a: f64, b: f64, rho: f64) -> f64 {
    if rho >= 1.0 - 1e-14 {
        return norm_cdf(a.min(b));
    }
    if rho <= -1.0 + 1e-14 {
        return (norm_cdf(a) - norm_sf(b)).max(0.0);
    }
    if rho == 0.0 {
        return norm_cdf(a) * norm_cdf(b);
    }
    let lo = -40.0f64;
    let hi = a.min(40.0);
    if hi <= lo {
        return 0.0;
    }
    let r = (1.0 - rho * rho).sqrt();
    let rule = crate::quadrature::legendre(20);
    let panels = (hi - lo).ceil().max(1.0) as usize;
    let width = (hi - lo) / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let mid = lo + (p as f64 + 0.5) * width;
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            let u = mid + 0.5 * width * x;
            acc += w * 0.5 * width * norm_pdf(u) * norm_cdf((b - rho * u) / r);
        }
    }
    acc
}

/// Logistic sigmoid, stable in both tails.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)`, stable in both tails.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
