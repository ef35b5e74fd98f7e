//! Diagonal systems `A e_n = -λ_n e_n`, `BB* e_n = b_n e_n`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::energy::NullControllability;
use crate::error::{Error, Result};
use crate::gramian::{Gramian, GramianMethod, Horizon, LinearSystem};
use crate::linalg::{RankPolicy, SymmetricPsd};

pub const DEFAULT_ORDER: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralSystem {
    lambdas: Vec<f64>,
    bs: Vec<f64>,
}

/// Named spectral families, rebuildable at any truncation order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum SpectralPreset {
    /// `λ_n = n²`, `b_n = 1`.
    LandauGinzburg,
    /// `λ_n = n²`, `b_n = λ_n^α`.
    PowerLaw { alpha: f64 },
    /// `λ_n = n`, `b_n = exp(-exp(λ_n))`.
    DoubleExponential,
    /// `λ_n = n²`, `b_n = 1` for `n <= support`, else `0`.
    FiniteSupport { support: usize },
}

impl SpectralPreset {
    pub fn default_order(self) -> usize {
        match self {
            SpectralPreset::DoubleExponential => 8,
            _ => DEFAULT_ORDER,
        }
    }

    pub fn build(self, order: usize) -> Result<SpectralSystem> {
        let n2 = |n: usize| (n * n) as f64;
        let (lambdas, bs): (Vec<f64>, Vec<f64>) = match self {
            SpectralPreset::LandauGinzburg => (1..=order).map(|n| (n2(n), 1.0)).unzip(),
            SpectralPreset::PowerLaw { alpha } => {
                (1..=order).map(|n| (n2(n), n2(n).powf(alpha))).unzip()
            }
            SpectralPreset::DoubleExponential => (1..=order)
                .map(|n| (n as f64, (-(n as f64).exp()).exp()))
                .unzip(),
            SpectralPreset::FiniteSupport { support } => (1..=order)
                .map(|n| (n2(n), if n <= support { 1.0 } else { 0.0 }))
                .unzip(),
        };
        SpectralSystem::new(lambdas, bs)
    }

    /// `ln b_n`, exact even where `b_n` underflows.
    fn log_b(self, lambda: f64, b: f64) -> f64 {
        match self {
            SpectralPreset::DoubleExponential => -lambda.exp(),
            _ => b.ln(),
        }
    }
}

impl SpectralSystem {
    pub fn new(lambdas: Vec<f64>, bs: Vec<f64>) -> Result<Self> {
        if lambdas.is_empty() || lambdas.len() != bs.len() {
            return Err(Error::Model(format!(
                "need matching non-empty sequences, got {} eigenvalues and {} input weights",
                lambdas.len(),
                bs.len()
            )));
        }
        if lambdas.iter().chain(&bs).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("spectral data"));
        }
        if lambdas[0] <= 0.0 || lambdas.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Model("eigenvalues must be positive and strictly increasing".into()));
        }
        if bs.iter().any(|&b| b < 0.0) {
            return Err(Error::Model("input weights must be non-negative".into()));
        }
        Ok(Self { lambdas, bs })
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn bs(&self) -> &[f64] {
        &self.bs
    }

    pub fn order(&self) -> usize {
        self.lambdas.len()
    }

    pub fn sup_b_over_lambda(&self) -> f64 {
        self.lambdas
            .iter()
            .zip(&self.bs)
            .map(|(l, b)| b / l)
            .fold(0.0, f64::max)
    }

    /// `A = diag(-λ_n)`, `B = diag(√b_n)`.
    pub fn to_linear_system(&self) -> Result<LinearSystem> {
        let a = DMatrix::from_diagonal(&DVector::from_iterator(
            self.order(),
            self.lambdas.iter().map(|l| -l),
        ));
        let b = DMatrix::from_diagonal(&DVector::from_iterator(
            self.order(),
            self.bs.iter().map(|b| b.sqrt()),
        ));
        LinearSystem::new(a, b)
    }

    /// Diagonal of `Q_t`: `b_n (1 - e^{-2λ_n t}) / (2λ_n)`.
    pub fn gramian_diagonal(&self, t: Horizon) -> Result<Vec<f64>> {
        if let Horizon::Finite(t) = t {
            if !(t > 0.0) {
                return Err(Error::Domain(format!("horizon must be positive, got {t}")));
            }
        }
        Ok(self
            .lambdas
            .iter()
            .zip(&self.bs)
            .map(|(&l, &b)| match t {
                Horizon::Finite(t) => -b * (-2.0 * l * t).exp_m1() / (2.0 * l),
                Horizon::Infinite => b / (2.0 * l),
            })
            .collect())
    }

    pub fn gramian(&self, t: Horizon, policy: RankPolicy) -> Result<Gramian> {
        let d = self.gramian_diagonal(t)?;
        let m = DMatrix::from_diagonal(&DVector::from_vec(d));
        Gramian::new(
            SymmetricPsd::new(m, policy)?,
            t,
            self.to_linear_system()?.fingerprint(),
            GramianMethod::ClosedForm,
        )
    }
}

fn log_weights(preset: Option<SpectralPreset>, sys: &SpectralSystem) -> Vec<f64> {
    sys.lambdas
        .iter()
        .zip(&sys.bs)
        .map(|(&l, &b)| preset.map_or(b.ln(), |p| p.log_b(l, b)))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralNullControllability {
    pub t0: f64,
    /// `ln(2λ_n / (b_n (e^{2λ_n T0} - 1)))` per mode; `+∞` where `b_n = 0`.
    pub log_ratios: Vec<f64>,
    /// Supremum of the ratios over the truncation.
    pub constant: f64,
    /// Whether the ratio is non-increasing over the last quarter of the modes.
    pub tail_decreasing: bool,
    pub satisfied: bool,
}

/// Null-controllability criterion evaluated mode by mode in log space.
pub fn spectral_null_controllability(
    preset: Option<SpectralPreset>,
    sys: &SpectralSystem,
    t0: f64,
) -> Result<SpectralNullControllability> {
    if !(t0 > 0.0) {
        return Err(Error::Domain(format!("T0 must be positive, got {t0}")));
    }
    let log_ratios: Vec<f64> = sys
        .lambdas
        .iter()
        .zip(log_weights(preset, sys))
        .map(|(&l, log_b)| {
            if log_b == f64::NEG_INFINITY {
                return f64::INFINITY;
            }
            // ln(e^{2λT0} - 1) = 2λT0 + ln(1 - e^{-2λT0})
            let x = 2.0 * l * t0;
            (2.0 * l).ln() - log_b - (x + (-(-x).exp()).ln_1p())
        })
        .collect();
    let max_log = log_ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let n = log_ratios.len();
    let tail = &log_ratios[n - (n / 4).max(2).min(n)..];
    let tail_decreasing = tail.windows(2).all(|w| w[1] <= w[0]);
    let constant = max_log.exp();
    Ok(SpectralNullControllability {
        t0,
        log_ratios,
        constant,
        tail_decreasing,
        satisfied: constant.is_finite() && tail_decreasing,
    })
}

/// The finite-dimensional test on the truncation, for comparison with the
/// spectral criterion.
pub fn spectral_null_controllability_matrix(
    sys: &SpectralSystem,
    t0: f64,
    policy: RankPolicy,
) -> Result<NullControllability> {
    let q = sys.gramian(Horizon::Finite(t0), policy)?;
    let e = DMatrix::from_diagonal(&DVector::from_iterator(
        sys.order(),
        sys.lambdas.iter().map(|l| (-l * t0).exp()),
    ));
    crate::energy::null_controllability_from(&e, q.q(), policy)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "pattern", rename_all = "snake_case")]
pub enum InputPattern {
    /// `b_n = 0` past `support`: only finitely many modes are controlled.
    FiniteSupport { support: usize },
    /// `b_n/λ_n` decays like `λ_n^{-s}`.
    PowerLaw { alpha: f64 },
    /// No power law fits the decay of `b_n/λ_n`.
    Irregular,
}

#[derive(Debug, Clone, Serialize)]
pub struct HClassification {
    pub pattern: InputPattern,
    /// `s` with `R(Q_∞) = D(A^s)`.
    pub range_exponent: Option<f64>,
    /// `s/2` with `R(Q_∞^{1/2}) = D(A^{s/2})`.
    pub half_range_exponent: Option<f64>,
    pub fit_residual: f64,
    pub finite_dimensional: bool,
    pub summary: String,
}

/// Least-squares fit of `ln q_n` against `ln λ_n`, `q_n = b_n/(2λ_n)` being the
/// eigenvalues of `Q_∞`. A slope `-s` means `R(Q_∞) = D(A^s)`.
///
/// When the preset is known its exact `ln b_n` is used, so weights that underflow
/// in floating point are not mistaken for a finite support.
pub fn classify_h(preset: Option<SpectralPreset>, sys: &SpectralSystem) -> HClassification {
    let log_bs = log_weights(preset, sys);
    if log_bs.contains(&f64::NEG_INFINITY) {
        let count = sys.bs.iter().filter(|&&b| b > 0.0).count();
        return HClassification {
            pattern: InputPattern::FiniteSupport { support: count },
            range_exponent: None,
            half_range_exponent: None,
            fit_residual: 0.0,
            finite_dimensional: true,
            summary: format!(
                "only {count} modes are controlled; the Riccati equation lives on a {count}-dimensional subspace"
            ),
        };
    }
    let xs: Vec<f64> = sys.lambdas.iter().map(|l| l.ln()).collect();
    let ys: Vec<f64> = sys
        .lambdas
        .iter()
        .zip(&log_bs)
        .map(|(l, lb)| lb - (2.0 * l).ln())
        .collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let fit_residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - my - slope * (x - mx)).abs())
        .fold(0.0, f64::max);
    let scale = ys.iter().map(|y| y.abs()).fold(1.0, f64::max);
    if !ys.iter().all(|y| y.is_finite()) || fit_residual > 1e-6 * scale {
        return HClassification {
            pattern: InputPattern::Irregular,
            range_exponent: None,
            half_range_exponent: None,
            fit_residual,
            finite_dimensional: false,
            summary: "b_n/λ_n follows no power law; no fractional domain matches".into(),
        };
    }
    let s = clean(-slope);
    let alpha = clean(1.0 - s);
    HClassification {
        pattern: InputPattern::PowerLaw { alpha },
        range_exponent: Some(s),
        half_range_exponent: Some(clean(s / 2.0)),
        fit_residual,
        finite_dimensional: false,
        summary: format!("R(Q_inf) = D(A^{s}), R(Q_inf^1/2) = D(A^{})", clean(s / 2.0)),
    }
}

/// Rounds away fitting noise below `1e-9`.
fn clean(v: f64) -> f64 {
    let r = (v * 1e9).round() / 1e9;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Largest change of `f` when the truncation order doubles.
pub fn tail_sensitivity<F>(preset: SpectralPreset, order: usize, f: F) -> Result<f64>
where
    F: Fn(&SpectralSystem) -> Result<Vec<f64>>,
{
    let coarse = f(&preset.build(order)?)?;
    let fine = f(&preset.build(2 * order)?)?;
    Ok(coarse
        .iter()
        .zip(&fine)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}
