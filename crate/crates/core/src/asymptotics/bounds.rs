use super::mixture::{mixture_interval, mixture_quantile, ChiSqMixture};
use super::AsymptoticSummary;
use crate::error::{Error, Result};
use crate::linalg::op_norm;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundCase {
    /// `t <= κ₀^IEO`: the tail difference vanishes.
    BelowKappaIeo,
    /// `κ₀^IEO < t < κ₀^ETO`.
    BetweenKappas,
    AtKappaEto,
    AboveKappaEto,
    /// Upper bound with `δ = 0`.
    NoGap,
    /// Upper bound with `δ > 0` beyond the covered threshold.
    PositiveGap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub case: BoundCase,
    /// Bound on the tail difference including the error budget.
    pub value: f64,
    /// The leading term before the budget is applied.
    pub leading: f64,
    /// Monte Carlo standard error of the leading term, zero when exact.
    pub std_error: f64,
}

impl BoundReport {
    fn zero() -> Self {
        Self {
            case: BoundCase::BelowKappaIeo,
            value: 0.0,
            leading: 0.0,
            std_error: 0.0,
        }
    }
}

/// Lower bound on `P(R_ETO >= t) - P(R_IEO >= t)` from the summary's `κ₀` terms and `s`.
pub fn lower_bound_d(summary: &AsymptoticSummary, n: usize, t: f64, budget: f64) -> Result<BoundReport> {
    lower_bound_from(summary.kappa0_ieo, summary.kappa0_eto, summary.s_eto, n, t, budget)
}

/// Lower bound from raw inputs: `C - budget` with
/// `C = 1 - exp(-n(κ₀^ETO - t)²/(2s²))` between the two floors.
pub fn lower_bound_from(kappa_ieo: f64, kappa_eto: f64, s: f64, n: usize, t: f64, budget: f64) -> Result<BoundReport> {
    if n == 0 {
        return Err(Error::Invalid("sample size must be positive".into()));
    }
    if t <= kappa_ieo {
        return Ok(BoundReport::zero());
    }
    let (case, c) = if t < kappa_eto {
        let gap = kappa_eto - t;
        let c = if s == 0.0 {
            1.0
        } else {
            1.0 - (-(n as f64) * gap * gap / (2.0 * s * s)).exp()
        };
        (BoundCase::BetweenKappas, c)
    } else if t == kappa_eto {
        (BoundCase::AtKappaEto, 0.5)
    } else {
        (BoundCase::AboveKappaEto, 0.0)
    };
    Ok(BoundReport {
        case,
        value: c - budget,
        leading: c,
        std_error: 0.0,
    })
}

/// Upper bound on the tail difference.
///
/// Needs `τ₁ >= 0`. With `δ > 0` the threshold must satisfy
/// `t > κ₀^IEO + ((τ₆ + τ₁)/τ₁)δ` and the slack `ε` must lie in
/// `(0, τ₁/(τ₁ + τ₆)·(t - κ₀^IEO) - δ)`.
pub fn upper_bound_d(summary: &AsymptoticSummary, n: usize, t: f64, epsilon: f64, budget: f64) -> Result<BoundReport> {
    if n == 0 {
        return Err(Error::Invalid("sample size must be positive".into()));
    }
    let tau1 = if summary.tau1 < 0.0 && summary.tau1 >= -1e-9 { 0.0 } else { summary.tau1 };
    let tau6 = summary.tau6;
    if tau1 < 0.0 {
        return Err(Error::Precondition(format!("τ₁ = {tau1:.6e} is negative")));
    }
    if !(tau6 > 0.0) {
        return Err(Error::Precondition(format!("τ₆ = {tau6:.6e} is not positive")));
    }
    let kappa = summary.kappa0_ieo;
    let delta = summary.delta;
    if t <= kappa {
        return Ok(BoundReport::zero());
    }
    let nf = n as f64;
    let mix = ChiSqMixture::new(summary.lambda_ieo.clone())?;
    let stretch = 1.0 + tau1 / tau6;
    if delta == 0.0 {
        let a = nf * (t - kappa);
        let p = mixture_interval(&mix, a, stretch * a);
        return Ok(BoundReport {
            case: BoundCase::NoGap,
            value: -p.prob + budget,
            leading: -p.prob,
            std_error: p.std_error,
        });
    }
    if tau1 == 0.0 || t <= kappa + (tau6 + tau1) / tau1 * delta {
        return Err(Error::Region(format!(
            "t = {t} lies between κ₀^IEO and κ₀^IEO + ((τ₆+τ₁)/τ₁)δ, where neither method is ordered"
        )));
    }
    let eps_max = tau1 / (tau1 + tau6) * (t - kappa) - delta;
    if !(epsilon > 0.0 && epsilon < eps_max) {
        return Err(Error::Precondition(format!("ε = {epsilon} must lie in (0, {eps_max:.6e})")));
    }
    let a = nf * (t - kappa);
    let b = stretch * nf * (t - kappa - delta - epsilon);
    let p = mixture_interval(&mix, a, b);
    let s = summary.s_eto;
    let e = if s == 0.0 { 0.0 } else { (-nf * epsilon * epsilon / (2.0 * s * s)).exp() };
    Ok(BoundReport {
        case: BoundCase::PositiveGap,
        value: -p.prob + e + budget,
        leading: -p.prob + e,
        std_error: p.std_error,
    })
}

/// Constants of the uniform generalization bound for IEO.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RademacherInputs {
    pub l_c: f64,
    pub rho_c: f64,
    pub b_c: f64,
    pub d_theta: f64,
    pub e_theta: f64,
    pub c_abs: f64,
    pub q: usize,
    pub n: usize,
    /// Failure probability `δ̃`.
    pub confidence: f64,
}

/// `(4√2 L² C D E/ρ)·√(q/n) + 2B·√(ln(2/δ̃)/(2n))`.
pub fn generalization_bound(x: &RademacherInputs) -> Result<f64> {
    let positive = [x.l_c, x.rho_c, x.b_c, x.d_theta, x.e_theta, x.c_abs];
    if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) || x.q == 0 || x.n == 0 {
        return Err(Error::Invalid("generalization bound constants must be positive".into()));
    }
    if !(x.confidence > 0.0 && x.confidence < 1.0) {
        return Err(Error::Invalid("confidence level must lie in (0, 1)".into()));
    }
    let n = x.n as f64;
    let complexity = 4.0 * 2f64.sqrt() * x.l_c * x.l_c * x.c_abs * x.d_theta * x.e_theta / x.rho_c * (x.q as f64 / n).sqrt();
    let deviation = 2.0 * x.b_c * ((2.0 / x.confidence).ln() / (2.0 * n)).sqrt();
    Ok(complexity + deviation)
}

/// Tail bounds for `X = MᵀY` with `Y` standard normal in `q` dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianTailBounds {
    /// Bound on `P(‖X‖ >= t)`.
    pub norm_tail: f64,
    /// Bound on `P(Xᵀv >= t)`.
    pub linear_tail: f64,
    /// Bound on `P(s₁ <= Xᵀv <= s₂)`.
    pub interval_mass: f64,
}

pub fn gaussian_tail_bounds(m: &DMatrix<f64>, v: &DVector<f64>, t: f64, s1: f64, s2: f64) -> Result<GaussianTailBounds> {
    if !(t >= 0.0) || s2 < s1 {
        return Err(Error::Invalid("need t >= 0 and s1 <= s2".into()));
    }
    if m.nrows() != m.ncols() || m.nrows() != v.len() {
        return Err(Error::Invalid("matrix and vector dimensions differ".into()));
    }
    let q = m.nrows() as f64;
    let mn = op_norm(m);
    let sd = (m * v).norm();
    let gauss = |scale2: f64| if scale2 > 0.0 { (-t * t / (2.0 * scale2)).exp() } else if t > 0.0 { 0.0 } else { 1.0 };
    Ok(GaussianTailBounds {
        norm_tail: 2.0 * q * gauss(q * mn * mn),
        linear_tail: gauss(sd * sd),
        interval_mass: if sd > 0.0 {
            (s2 - s1) / ((2.0 * std::f64::consts::PI).sqrt() * sd)
        } else {
            f64::INFINITY
        },
    })
}

/// Rows of the comparison table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// `δ ≫ 0`.
    LargeGap,
    /// `δ ≈ 0` and `B₀ ≈ 0`.
    SmallGapSmallB0,
    /// `δ = 0` and `B₀ ≈ 0`.
    NoGapSmallB0,
    /// `δ = 0` and `B₀ = 0`.
    WellSpecified,
    Unclassified,
}

impl Regime {
    pub fn label(&self) -> &'static str {
        match self {
            Regime::LargeGap => "delta >> 0",
            Regime::SmallGapSmallB0 => "delta ~ 0 and B0 ~ 0",
            Regime::NoGapSmallB0 => "delta = 0 and B0 ~ 0",
            Regime::WellSpecified => "delta = 0 and B0 = 0",
            Regime::Unclassified => "unclassified",
        }
    }

    /// The predicted sign pattern of the tail difference at `t`.
    pub fn prediction(&self, summary: &AsymptoticSummary, t: f64) -> &'static str {
        if t <= summary.kappa0_ieo {
            return "D = 0";
        }
        let between = t < summary.kappa0_eto;
        match (self, between) {
            (Regime::LargeGap | Regime::SmallGapSmallB0, true) => "D >= 1 - eps",
            (Regime::LargeGap, false) => "D >= -eps",
            (Regime::SmallGapSmallB0, false) => "D <= eps (large t only)",
            (Regime::NoGapSmallB0, _) => "D <= eps",
            (Regime::WellSpecified, _) => "D <= -C + eps",
            (Regime::Unclassified, _) => "no prediction",
        }
    }
}

/// Thresholds that turn the table's qualitative rows into tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegimeThresholds {
    /// `δ ≫ 0` when `δ > factor · q₀.₉₉(G_IEO)/n`.
    pub large_gap_factor: f64,
    /// `≈ 0` below this value.
    pub approx_zero: f64,
    /// `= 0` below this value.
    pub exact_zero: f64,
}

impl Default for RegimeThresholds {
    fn default() -> Self {
        Self {
            large_gap_factor: 10.0,
            approx_zero: 1e-6,
            exact_zero: 1e-9,
        }
    }
}

pub fn classify_regime(summary: &AsymptoticSummary, n: usize, th: &RegimeThresholds) -> Result<Regime> {
    let mix = ChiSqMixture::new(summary.lambda_ieo.clone())?;
    let q99 = mixture_quantile(&mix, 0.99)?;
    let (d, b0) = (summary.delta, summary.b0);
    Ok(if d > th.large_gap_factor * q99 / n as f64 {
        Regime::LargeGap
    } else if d <= th.exact_zero && b0 <= th.exact_zero {
        Regime::WellSpecified
    } else if d <= th.exact_zero && b0 <= th.approx_zero {
        Regime::NoGapSmallB0
    } else if d <= th.approx_zero && b0 <= th.approx_zero {
        Regime::SmallGapSmallB0
    } else {
        Regime::Unclassified
    })
}
