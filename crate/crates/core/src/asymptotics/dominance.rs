use crate::error::{Error, Result};
use crate::stats::{sorted, variance};
use serde::{Deserialize, Serialize};

/// Outcome of testing `a ⪯ b` in first and second (increasing convex) order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    pub first_order: bool,
    /// `max_x (F_b(x) - F_a(x))⁺` over the pooled sample points.
    pub first_order_violation: f64,
    pub first_order_tolerance: f64,
    pub second_order: bool,
    /// `max_x (E(a - x)⁺ - E(b - x)⁺)⁺` over the pooled sample points.
    pub second_order_violation: f64,
    pub second_order_tolerance: f64,
}

/// Tests whether the sample `a` is dominated by the sample `b`, with
/// tolerances scaled by the two-sample Kolmogorov-Smirnov critical value at 5%.
pub fn dominance_tests(a: &[f64], b: &[f64]) -> Result<DominanceReport> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Invalid("dominance tests need nonempty samples".into()));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let ks = 1.36 * ((na + nb) / (na * nb)).sqrt();
    let spread = if a.len() > 1 && b.len() > 1 {
        variance(a).sqrt().max(variance(b).sqrt())
    } else {
        0.0
    };
    dominance_tests_with(a, b, ks, ks * spread)
}

pub fn dominance_tests_with(a: &[f64], b: &[f64], tol_first: f64, tol_second: f64) -> Result<DominanceReport> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Invalid("dominance tests need nonempty samples".into()));
    }
    let sa = sorted(a);
    let sb = sorted(b);
    let mut grid: Vec<f64> = sa.iter().chain(&sb).copied().collect();
    grid.sort_by(|x, y| x.total_cmp(y));
    grid.dedup();

    let ca = StopLoss::new(&sa);
    let cb = StopLoss::new(&sb);
    let mut first = 0.0f64;
    let mut second = 0.0f64;
    for &x in &grid {
        first = first.max(cb.cdf(x) - ca.cdf(x));
        second = second.max(ca.value(x) - cb.value(x));
    }
    let floor = 1e-12;
    Ok(DominanceReport {
        first_order: first <= tol_first + floor,
        first_order_violation: first,
        first_order_tolerance: tol_first,
        second_order: second <= tol_second + floor * (1.0 + grid[grid.len() - 1].abs()),
        second_order_violation: second,
        second_order_tolerance: tol_second,
    })
}

// Empirical CDF and stop-loss transform E(X - x)⁺ of a sorted sample.
struct StopLoss<'a> {
    sorted: &'a [f64],
    suffix: Vec<f64>,
}

impl<'a> StopLoss<'a> {
    fn new(sorted: &'a [f64]) -> Self {
        let mut suffix = vec![0.0; sorted.len() + 1];
        for i in (0..sorted.len()).rev() {
            suffix[i] = suffix[i + 1] + sorted[i];
        }
        Self { sorted, suffix }
    }

    fn cdf(&self, x: f64) -> f64 {
        self.sorted.partition_point(|v| *v <= x) as f64 / self.sorted.len() as f64
    }

    fn value(&self, x: f64) -> f64 {
        let k = self.sorted.partition_point(|v| *v <= x);
        let above = (self.sorted.len() - k) as f64;
        (self.suffix[k] - x * above) / self.sorted.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn reflexive() {
        let a = [0.3, 1.2, 0.7, 2.2];
        let r = dominance_tests(&a, &a).unwrap();
        assert!(r.first_order && r.second_order);
        assert_eq!(r.first_order_violation, 0.0);
        assert_eq!(r.second_order_violation, 0.0);
    }

    #[test]
    fn point_masses() {
        let a = vec![0.0; 50];
        let b = vec![1.0; 50];
        let r = dominance_tests(&a, &b).unwrap();
        assert!(r.first_order && r.second_order);
        let r = dominance_tests(&b, &a).unwrap();
        assert!(!r.first_order && !r.second_order);
        assert_eq!(r.first_order_violation, 1.0);
        assert_eq!(r.second_order_violation, 1.0);
    }

    #[test]
    fn scaled_chi_square_draws() {
        let mut rng = RngStream::new(11, 0).rng();
        let y: Vec<f64> = (0..100_000)
            .map(|_| {
                let v: f64 = StandardNormal.sample(&mut rng);
                v * v
            })
            .collect();
        let a: Vec<f64> = y.iter().map(|v| 0.398942 * v).collect();
        let b: Vec<f64> = y.iter().map(|v| 0.626657 * v).collect();
        let r = dominance_tests(&a, &b).unwrap();
        assert!(r.first_order && r.second_order);
        assert!(!dominance_tests(&b, &a).unwrap().first_order);
    }

    #[test]
    fn mean_preserving_spread_is_second_order_only() {
        let a = vec![1.0; 10];
        let b: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { 0.0 } else { 2.0 }).collect();
        let r = dominance_tests_with(&a, &b, 0.0, 0.0).unwrap();
        assert!(!r.first_order);
        assert!(r.second_order);
    }
}
