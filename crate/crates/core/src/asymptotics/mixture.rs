use crate::error::{Error, Result};
use crate::rng::RngStream;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Number of draws behind every [`MixtureLaw`].
pub const MIXTURE_DRAWS: usize = 1_000_000;
const MIXTURE_SEED: u64 = 0x5eed_c41_5a;
const CHUNKS: usize = 16;
const CACHE_CAPACITY: usize = 32;

/// The law of `Σ λᵢ Yᵢ²` with `Yᵢ` iid standard normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSqMixture {
    pub weights: Vec<f64>,
}

/// A Monte Carlo probability with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub prob: f64,
    pub std_error: f64,
}

impl ChiSqMixture {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Invalid("mixture weights must be finite".into()));
        }
        Ok(Self { weights })
    }

    /// Whether some weight is negative, i.e. the quadratic form is indefinite.
    pub fn is_signed(&self) -> bool {
        self.weights.iter().any(|w| *w < 0.0)
    }

    pub fn mean(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// The cached sample law for these weights.
    pub fn law(&self) -> Arc<MixtureLaw> {
        MixtureLaw::cached(&self.weights)
    }
}

/// Sorted draws of a chi-square mixture under a fixed internal seed.
#[derive(Debug)]
pub struct MixtureLaw {
    draws: Vec<f64>,
}

type Cache = Mutex<HashMap<Vec<u64>, Arc<MixtureLaw>>>;

impl MixtureLaw {
    fn cached(weights: &[f64]) -> Arc<MixtureLaw> {
        static CACHE: OnceLock<Cache> = OnceLock::new();
        let mut key: Vec<f64> = weights.iter().copied().filter(|w| *w != 0.0).collect();
        key.sort_by(|a, b| a.total_cmp(b));
        let bits: Vec<u64> = key.iter().map(|w| w.to_bits()).collect();
        let cache = CACHE.get_or_init(Default::default);
        if let Some(law) = cache.lock().expect("mixture cache").get(&bits) {
            return law.clone();
        }
        let law = Arc::new(Self::simulate(&key, MIXTURE_DRAWS));
        let mut guard = cache.lock().expect("mixture cache");
        if guard.len() >= CACHE_CAPACITY {
            guard.clear();
        }
        guard.entry(bits).or_insert(law).clone()
    }

    fn simulate(weights: &[f64], n: usize) -> Self {
        let per = n.div_ceil(CHUNKS);
        let mut draws: Vec<f64> = (0..CHUNKS)
            .into_par_iter()
            .flat_map_iter(|c| {
                let mut rng = RngStream::new(MIXTURE_SEED, c as u64).rng();
                let len = per.min(n - (c * per).min(n));
                (0..len)
                    .map(|_| {
                        weights
                            .iter()
                            .map(|w| {
                                let y: f64 = StandardNormal.sample(&mut rng);
                                w * y * y
                            })
                            .sum::<f64>()
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        draws.sort_by(|a, b| a.total_cmp(b));
        Self { draws }
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }
    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }
    pub fn draws(&self) -> &[f64] {
        &self.draws
    }

    fn estimate(&self, count: usize) -> TailEstimate {
        let n = self.draws.len() as f64;
        let p = count as f64 / n;
        TailEstimate {
            prob: p,
            std_error: (p * (1.0 - p) / n).sqrt(),
        }
    }

    /// `P(G >= t)`.
    pub fn tail(&self, t: f64) -> TailEstimate {
        self.estimate(self.draws.len() - self.draws.partition_point(|x| *x < t))
    }

    /// `P(G <= t)`.
    pub fn cdf(&self, t: f64) -> f64 {
        self.draws.partition_point(|x| *x <= t) as f64 / self.draws.len() as f64
    }

    /// `P(a <= G <= b)`; zero when `b < a`.
    pub fn interval(&self, a: f64, b: f64) -> TailEstimate {
        if b < a {
            return self.estimate(0);
        }
        let lo = self.draws.partition_point(|x| *x < a);
        let hi = self.draws.partition_point(|x| *x <= b);
        self.estimate(hi - lo)
    }

    /// Smallest `t` with `P(G >= t) <= 1 - prob`, located by bisection.
    pub fn quantile(&self, prob: f64) -> f64 {
        let target = 1.0 - prob;
        let (mut lo, mut hi) = (self.draws[0], self.draws[self.draws.len() - 1]);
        if self.tail(lo).prob <= target {
            return lo;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.tail(mid).prob <= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }
}

/// `P(Σ λᵢ Yᵢ² >= t)` with its Monte Carlo standard error.
pub fn mixture_tail(mix: &ChiSqMixture, t: f64) -> TailEstimate {
    mix.law().tail(t)
}

pub fn mixture_quantile(mix: &ChiSqMixture, prob: f64) -> Result<f64> {
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::Invalid(format!("quantile level {prob} outside (0, 1)")));
    }
    Ok(mix.law().quantile(prob))
}

pub fn mixture_interval(mix: &ChiSqMixture, a: f64, b: f64) -> TailEstimate {
    mix.law().interval(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::ks_one_sample;
    use crate::special::norm_cdf;

    fn within(est: TailEstimate, exact: f64) {
        assert!((est.prob - exact).abs() <= 3.0 * est.std_error, "{est:?} vs {exact}");
    }

    #[test]
    fn chi_square_tails() {
        within(mixture_tail(&ChiSqMixture::new(vec![1.0]).unwrap(), 3.84146), 0.05);
        within(mixture_tail(&ChiSqMixture::new(vec![0.5, 0.5]).unwrap(), 1.0), (-1.0f64).exp());
        let mix = ChiSqMixture::new(vec![0.7, 0.2, 0.1]).unwrap();
        assert_eq!(mixture_tail(&mix, 0.0).prob, 1.0);
    }

    #[test]
    fn quantile_inverts_tail() {
        let mix = ChiSqMixture::new(vec![0.9, 0.3]).unwrap();
        for &p in &[0.5, 0.9, 0.99] {
            let q = mixture_quantile(&mix, p).unwrap();
            within(mixture_tail(&mix, q), 1.0 - p);
        }
        assert!(mixture_quantile(&mix, 1.0).is_err());
    }

    #[test]
    fn single_weight_matches_chi_square() {
        let law = ChiSqMixture::new(vec![2.0]).unwrap().law();
        let step = law.len() / 2000;
        let thin: Vec<f64> = law.draws().iter().step_by(step).copied().collect();
        let ks = ks_one_sample(&thin, |x| if x <= 0.0 { 0.0 } else { 2.0 * norm_cdf((x / 2.0).sqrt()) - 1.0 });
        assert!(ks < 0.04, "{ks}");
    }

    #[test]
    fn cache_is_order_free() {
        let a = ChiSqMixture::new(vec![0.25, 0.75]).unwrap().law();
        let b = ChiSqMixture::new(vec![0.75, 0.0, 0.25]).unwrap().law();
        assert!(Arc::ptr_eq(&a, &b));
    }

    #[test]
    fn interval_and_signed() {
        let mix = ChiSqMixture::new(vec![1.0, -1.0]).unwrap();
        assert!(mix.is_signed());
        let law = mix.law();
        assert!(law.draws()[0] < 0.0);
        assert_eq!(law.interval(1.0, 0.5).prob, 0.0);
        let whole = law.interval(f64::NEG_INFINITY, f64::INFINITY);
        assert_eq!(whole.prob, 1.0);
    }
}
