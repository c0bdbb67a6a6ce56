//! Parametric graph-based filters and their inverses.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::CglMatrix;
use crate::spectral::{self, SpectralDecomposition, EPS_ZERO};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    FrequencyScaling,
    FrequencyShifting,
    VarianceShifting,
    ExponentialDecay,
    HopLocalized,
}

impl FilterKind {
    pub const ALL: [FilterKind; 5] = [
        FilterKind::FrequencyScaling,
        FilterKind::FrequencyShifting,
        FilterKind::VarianceShifting,
        FilterKind::ExponentialDecay,
        FilterKind::HopLocalized,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FilterKind::FrequencyScaling => "frequency_scaling",
            FilterKind::FrequencyShifting => "frequency_shifting",
            FilterKind::VarianceShifting => "variance_shifting",
            FilterKind::ExponentialDecay => "exponential_decay",
            FilterKind::HopLocalized => "hop_localized",
        }
    }

    /// Kinds whose Laplacian is only recoverable up to a factor `β/β̂`.
    pub fn is_scale_ambiguous(self) -> bool {
        matches!(self, FilterKind::FrequencyScaling | FilterKind::ExponentialDecay)
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FilterKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        FilterKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown filter kind '{s}'")))
    }
}

/// A filter kind together with its parameter. The hop count is an integer;
/// every other parameter is real.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFilterSpec", into = "RawFilterSpec")]
pub enum FilterSpec {
    FrequencyScaling { beta: f64 },
    FrequencyShifting { beta: f64 },
    VarianceShifting { beta: f64 },
    ExponentialDecay { beta: f64 },
    HopLocalized { hops: u32 },
}

#[derive(Serialize, Deserialize)]
struct RawFilterSpec {
    kind: FilterKind,
    beta: BetaValue,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum BetaValue {
    Int(u64),
    Real(f64),
}

impl TryFrom<RawFilterSpec> for FilterSpec {
    type Error = Error;
    fn try_from(raw: RawFilterSpec) -> Result<Self> {
        let beta = match raw.beta {
            BetaValue::Int(v) => v as f64,
            BetaValue::Real(v) => v,
        };
        FilterSpec::new(raw.kind, beta)
    }
}

impl From<FilterSpec> for RawFilterSpec {
    fn from(spec: FilterSpec) -> Self {
        let beta = match spec {
            FilterSpec::HopLocalized { hops } => BetaValue::Int(hops as u64),
            other => BetaValue::Real(other.beta()),
        };
        RawFilterSpec { kind: spec.kind(), beta }
    }
}

impl FilterSpec {
    pub fn new(kind: FilterKind, beta: f64) -> Result<Self> {
        let invalid = |rule: &str| {
            Err(Error::InvalidSpec(format!("{kind} requires {rule}, got beta = {beta}")))
        };
        if !beta.is_finite() {
            return invalid("a finite beta");
        }
        match kind {
            FilterKind::FrequencyScaling | FilterKind::ExponentialDecay if beta <= 0.0 => {
                invalid("beta > 0")
            }
            FilterKind::FrequencyShifting | FilterKind::VarianceShifting if beta < 0.0 => {
                invalid("beta >= 0")
            }
            FilterKind::HopLocalized if beta < 1.0 || beta.fract() != 0.0 || beta > u32::MAX as f64 => {
                invalid("an integer beta >= 1")
            }
            FilterKind::FrequencyScaling => Ok(FilterSpec::FrequencyScaling { beta }),
            FilterKind::FrequencyShifting => Ok(FilterSpec::FrequencyShifting { beta }),
            FilterKind::VarianceShifting => Ok(FilterSpec::VarianceShifting { beta }),
            FilterKind::ExponentialDecay => Ok(FilterSpec::ExponentialDecay { beta }),
            FilterKind::HopLocalized => Ok(FilterSpec::HopLocalized { hops: beta as u32 }),
        }
    }

    pub fn hop(hops: u32) -> Result<Self> {
        Self::new(FilterKind::HopLocalized, hops as f64)
    }

    pub fn kind(&self) -> FilterKind {
        match self {
            FilterSpec::FrequencyScaling { .. } => FilterKind::FrequencyScaling,
            FilterSpec::FrequencyShifting { .. } => FilterKind::FrequencyShifting,
            FilterSpec::VarianceShifting { .. } => FilterKind::VarianceShifting,
            FilterSpec::ExponentialDecay { .. } => FilterKind::ExponentialDecay,
            FilterSpec::HopLocalized { .. } => FilterKind::HopLocalized,
        }
    }

    pub fn beta(&self) -> f64 {
        match *self {
            FilterSpec::FrequencyScaling { beta }
            | FilterSpec::FrequencyShifting { beta }
            | FilterSpec::VarianceShifting { beta }
            | FilterSpec::ExponentialDecay { beta } => beta,
            FilterSpec::HopLocalized { hops } => hops as f64,
        }
    }

    /// `h_β(λ)` with exact zero branches.
    pub fn response(&self, lambda: f64) -> f64 {
        self.response_with_tolerance(lambda, 0.0)
    }

    /// `h_β(λ)` where `λ ≤ zero_tol` (or `λ + β ≤ zero_tol` for frequency
    /// shifting) takes the pseudoinverse zero branch.
    pub fn response_with_tolerance(&self, lambda: f64, zero_tol: f64) -> f64 {
        let pinv = |x: f64| if x <= zero_tol { 0.0 } else { 1.0 / x };
        match *self {
            FilterSpec::FrequencyScaling { beta } => {
                if lambda <= zero_tol {
                    0.0
                } else {
                    1.0 / (beta * lambda)
                }
            }
            FilterSpec::FrequencyShifting { beta } => pinv(lambda + beta),
            FilterSpec::VarianceShifting { beta } => pinv(lambda) + beta,
            FilterSpec::ExponentialDecay { beta } => (-beta * lambda).exp(),
            FilterSpec::HopLocalized { hops } => {
                if lambda <= zero_tol {
                    0.0
                } else {
                    lambda.powi(-(hops as i32))
                }
            }
        }
    }

    /// `h_β⁻¹(s)` with exact zero branches.
    pub fn inverse_response(&self, s: f64) -> Result<f64> {
        self.inverse_with_tolerance(s, 0.0)
    }

    /// `h_β⁻¹(s)`; arguments within `zero_tol` of a pseudoinverse pole take
    /// the zero branch.
    pub fn inverse_with_tolerance(&self, s: f64, zero_tol: f64) -> Result<f64> {
        let domain = |value| Error::Domain { filter: self.kind().name(), value };
        if !(s.is_finite() && s >= -zero_tol) {
            return Err(domain(s));
        }
        Ok(match *self {
            FilterSpec::FrequencyScaling { beta } => {
                if s <= zero_tol {
                    0.0
                } else {
                    1.0 / (beta * s)
                }
            }
            FilterSpec::FrequencyShifting { beta } => {
                if s <= 0.0 {
                    return Err(domain(s));
                }
                1.0 / s - beta
            }
            FilterSpec::VarianceShifting { beta } => {
                let d = s - beta;
                if d.abs() <= zero_tol || d == 0.0 {
                    0.0
                } else {
                    1.0 / d
                }
            }
            FilterSpec::ExponentialDecay { beta } => {
                if s <= 0.0 {
                    return Err(domain(s));
                }
                -s.ln() / beta
            }
            FilterSpec::HopLocalized { hops } => {
                if s <= zero_tol {
                    0.0
                } else {
                    (1.0 / s).powf(1.0 / hops as f64)
                }
            }
        })
    }

    /// `U·h_β(Λ)·Uᵀ` for an already decomposed Laplacian.
    pub fn apply_to_spectrum(&self, decomposition: &SpectralDecomposition, eps_zero: f64) -> DMatrix<f64> {
        let zero_tol = eps_zero * decomposition.spectral_radius();
        let mapped: Vec<f64> = decomposition
            .values()
            .iter()
            .map(|&l| self.response_with_tolerance(l.max(0.0), zero_tol))
            .collect();
        decomposition.reassemble(&mapped)
    }
}

impl fmt::Display for FilterSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(beta={})", self.kind(), self.beta())
    }
}

/// `Σ = h_β(L)`, computed spectrally.
pub fn apply_filter(spec: &FilterSpec, l: &CglMatrix) -> Result<DMatrix<f64>> {
    let decomposition = spectral::eig_sym(l.matrix())?;
    Ok(spec.apply_to_spectrum(&decomposition, EPS_ZERO))
}

/// `(I − (β/t)·L)^t`, the finite-step approximation of `exp(−βL)`.
pub fn diffusion_kernel_limit(l: &CglMatrix, beta: f64, t: u32) -> DMatrix<f64> {
    let n = l.n();
    let step = DMatrix::identity(n, n) - l.matrix() * (beta / t.max(1) as f64);
    matrix_power(&step, t as u64)
}

pub(crate) fn matrix_power(base: &DMatrix<f64>, mut exponent: u64) -> DMatrix<f64> {
    let n = base.nrows();
    let mut result = DMatrix::identity(n, n);
    let mut square = base.clone();
    while exponent > 0 {
        if exponent & 1 == 1 {
            result = &result * &square;
        }
        exponent >>= 1;
        if exponent > 0 {
            square = &square * &square;
        }
    }
    result
}
