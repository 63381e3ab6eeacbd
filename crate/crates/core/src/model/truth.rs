//! The data-generating law `P`, which need not belong to the model family.

use super::dataset::Dataset;
use super::family::{FamilyKind, ParamFamily};
use super::law::{GaussianComponent, Law};
use crate::error::{Error, Result};
use crate::quadrature::QuadratureSpec;
use crate::rng::RngStream;
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub enum TruthKind {
    InFamily { family: ParamFamily, theta0: DVector<f64> },
    GaussianMixture { weights: Vec<f64>, means: Vec<DVector<f64>>, cov: DMatrix<f64> },
    Empirical { sample: Dataset },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrueDistribution {
    kind: TruthKind,
    quadrature: QuadratureSpec,
    law: Law,
}

impl TrueDistribution {
    pub fn in_family(family: ParamFamily, theta0: DVector<f64>) -> Result<Self> {
        let law = family.law(&theta0)?;
        Ok(Self {
            kind: TruthKind::InFamily { family, theta0 },
            quadrature: QuadratureSpec::default(),
            law,
        })
    }

    pub fn gaussian_mixture(weights: Vec<f64>, means: Vec<DVector<f64>>, cov: DMatrix<f64>) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() {
            return Err(Error::Invalid("mixture needs one weight per mean".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Invalid("mixture weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Invalid(format!("mixture weights sum to {total}, expected 1")));
        }
        let d = means[0].len();
        if means.iter().any(|m| m.len() != d) {
            return Err(Error::Invalid("mixture means must share one dimension".into()));
        }
        let comps = weights
            .iter()
            .zip(&means)
            .map(|(w, m)| GaussianComponent::new(*w, m.clone(), cov.clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kind: TruthKind::GaussianMixture { weights, means, cov },
            quadrature: QuadratureSpec::default(),
            law: Law::Gaussian(comps),
        })
    }

    /// Scalar mixture `Σ wₖ N(mₖ, σ²)`.
    pub fn mixture_1d(weights: &[f64], means: &[f64], sigma: f64) -> Result<Self> {
        Self::gaussian_mixture(
            weights.to_vec(),
            means.iter().map(|m| DVector::from_element(1, *m)).collect(),
            DMatrix::from_element(1, 1, sigma * sigma),
        )
    }

    pub fn empirical(sample: Dataset) -> Result<Self> {
        let n = sample.n();
        if n == 0 {
            return Err(Error::Invalid("empirical distribution needs at least one sample".into()));
        }
        let law = Law::Discrete {
            atoms: sample.rows().map(DVector::from_column_slice).collect(),
            weights: vec![1.0 / n as f64; n],
        };
        Ok(Self {
            kind: TruthKind::Empirical { sample },
            quadrature: QuadratureSpec::default(),
            law,
        })
    }

    pub fn with_quadrature(mut self, quadrature: QuadratureSpec) -> Self {
        self.quadrature = quadrature;
        self
    }

    pub fn kind(&self) -> &TruthKind {
        &self.kind
    }
    pub fn quadrature(&self) -> &QuadratureSpec {
        &self.quadrature
    }
    pub fn law(&self) -> &Law {
        &self.law
    }
    pub fn dim(&self) -> usize {
        self.law.dim()
    }

    pub fn sample(&self, n: usize, stream: RngStream) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::Invalid("sample size must be at least 1".into()));
        }
        let d = self.dim();
        let mut rng = stream.rng();
        let mut data = vec![0.0; n * d];
        for row in data.chunks_exact_mut(d) {
            self.law.sample_into(&mut rng, row);
        }
        Dataset::from_flat(n, d, data, stream.stream_index)
    }

    /// The parameter `θ₀` with `P = P_θ₀`, if `P` lies in `family`.
    pub fn in_family_parameter(&self, family: &ParamFamily) -> Option<DVector<f64>> {
        if let TruthKind::InFamily { family: f, theta0 } = &self.kind {
            if f == family {
                return Some(theta0.clone());
            }
        }
        let theta = match (&self.law, family.kind()) {
            (Law::Gaussian(cs), FamilyKind::GaussianLocation | FamilyKind::GaussianFullMean) => {
                let c = match cs.iter().filter(|c| c.weight > 0.0).collect::<Vec<_>>().as_slice() {
                    [only] => *only,
                    _ => return None,
                };
                let fc = family.cov()?;
                if fc.shape() != c.cov.shape() || (fc - &c.cov).amax() > 1e-12 * fc.amax() {
                    return None;
                }
                c.mean.clone()
            }
            (Law::Discrete { atoms, weights }, FamilyKind::FiniteDiscrete) => {
                let mut theta = DVector::zeros(family.dim_q());
                for (a, w) in atoms.iter().zip(weights) {
                    let k = family
                        .support()
                        .iter()
                        .position(|s| s.len() == a.len() && (s - a).amax() <= 1e-9)?;
                    theta[k] += w;
                }
                theta
            }
            _ => return None,
        };
        family.check_theta(&theta).ok().map(|_| theta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixture_weights_validated() {
        assert!(TrueDistribution::mixture_1d(&[0.5, 0.6], &[0.0, 1.0], 1.0).is_err());
        assert!(TrueDistribution::mixture_1d(&[-0.5, 1.5], &[0.0, 1.0], 1.0).is_err());
        assert!(TrueDistribution::mixture_1d(&[0.25, 0.75], &[0.0, 1.0], 1.0).is_ok());
    }

    #[test]
    fn well_specified_detection() {
        let fam = ParamFamily::normal_1d(1.0).unwrap();
        let p = TrueDistribution::mixture_1d(&[1.0], &[0.3], 1.0).unwrap();
        assert_eq!(p.in_family_parameter(&fam).unwrap()[0], 0.3);
        let p = TrueDistribution::mixture_1d(&[0.5, 0.5], &[-2.0, 2.0], 1.0).unwrap();
        assert!(p.in_family_parameter(&fam).is_none());
        let p = TrueDistribution::mixture_1d(&[1.0], &[0.0], 2.0).unwrap();
        assert!(p.in_family_parameter(&fam).is_none());
    }

    #[test]
    fn empirical_law_is_uniform_over_rows() {
        let p = TrueDistribution::empirical(Dataset::from_scalars(&[1.0, 3.0]).unwrap()).unwrap();
        assert_eq!(p.law().mean()[0], 2.0);
    }
}
