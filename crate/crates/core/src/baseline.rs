//! Cumulative baseline hazards on rescaled time `t in [0, 1]`.
//!
//! The main model is the Bernstein-polynomial form
//! `Lambda_0(t) = sum_m gamma_m B_M(t, m)`, where `B_M(t, m)` is the
//! Beta(m, M - m + 1) distribution function. Nonnegative `gamma` makes the
//! cumulative hazard nondecreasing, and the hazard is the matching mixture of
//! beta densities. Exponential, Weibull and piecewise-constant forms are kept
//! alongside for model comparison.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{beta_density, reg_inc_beta};

fn check_time(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::TimeOutOfRange(t))
    }
}

/// Values of the Bernstein basis at one time point: distribution functions
/// `B_M(t, m)` and densities `b_M(t, m)` for `m = 1..=M`.
#[derive(Debug, Clone, PartialEq)]
pub struct BernsteinBasis {
    pub cdf: Vec<f64>,
    pub pdf: Vec<f64>,
}

impl BernsteinBasis {
    pub fn at(degree: usize, t: f64) -> Self {
        let big_m = degree as f64;
        let (cdf, pdf) = (1..=degree)
            .map(|m| {
                let a = m as f64;
                let b = big_m - a + 1.0;
                (reg_inc_beta(a, b, t), beta_density(a, b, t))
            })
            .unzip();
        Self { cdf, pdf }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernsteinBaseline {
    coeffs: Vec<f64>,
}

impl BernsteinBaseline {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidParameter("Bernstein degree must be at least 1".into()));
        }
        if coeffs.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "Bernstein coefficients must be nonnegative, got {coeffs:?}"
            )));
        }
        Ok(Self { coeffs })
    }

    /// Coefficients representing the constant hazard `rate`: the densities
    /// `b_M(t, m)` sum to `M` for every `t`.
    pub fn constant(degree: usize, rate: f64) -> Result<Self> {
        Self::new(vec![rate / degree as f64; degree])
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Cumulative coefficients `omega_l = sum_{m <= l} gamma_m`.
    pub fn omega(&self) -> Vec<f64> {
        self.coeffs
            .iter()
            .scan(0.0, |acc, g| {
                *acc += g;
                Some(*acc)
            })
            .collect()
    }

    pub fn cumulative_baseline(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.cumulative_with(&BernsteinBasis::at(self.degree(), t)))
    }

    pub fn baseline_hazard(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.hazard_with(&BernsteinBasis::at(self.degree(), t)))
    }

    pub fn cumulative_with(&self, basis: &BernsteinBasis) -> f64 {
        dot(&self.coeffs, &basis.cdf)
    }

    pub fn hazard_with(&self, basis: &BernsteinBasis) -> f64 {
        dot(&self.coeffs, &basis.pdf)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Family of baseline hazard used by a fitted model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Bernstein,
    Exponential,
    Weibull,
    Piecewise,
}

impl std::str::FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bernstein" => Ok(Self::Bernstein),
            "exponential" => Ok(Self::Exponential),
            "weibull" => Ok(Self::Weibull),
            "piecewise" => Ok(Self::Piecewise),
            other => Err(Error::Config(format!("unknown baseline {other:?}"))),
        }
    }
}

/// Number of pieces of the piecewise-constant comparison baseline
/// (four equally spaced interior knots).
pub const PIECEWISE_PIECES: usize = 5;

/// A cumulative baseline hazard with positive free parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Baseline {
    Bernstein(BernsteinBaseline),
    /// `Lambda_0(t) = rate * t`.
    Exponential { rate: f64 },
    /// `Lambda_0(t) = scale * t^shape`.
    Weibull { scale: f64, shape: f64 },
    /// Constant rates on `PIECEWISE_PIECES` equal-width intervals.
    Piecewise { rates: Vec<f64> },
}

impl Baseline {
    /// A baseline of the given kind whose hazard is (close to) `rate`.
    pub fn flat(kind: BaselineKind, degree: usize, rate: f64) -> Result<Self> {
        Ok(match kind {
            BaselineKind::Bernstein => Baseline::Bernstein(BernsteinBaseline::constant(degree, rate)?),
            BaselineKind::Exponential => Baseline::Exponential { rate },
            BaselineKind::Weibull => Baseline::Weibull {
                scale: rate,
                shape: 1.0,
            },
            BaselineKind::Piecewise => Baseline::Piecewise {
                rates: vec![rate; PIECEWISE_PIECES],
            },
        })
    }

    pub fn kind(&self) -> BaselineKind {
        match self {
            Baseline::Bernstein(_) => BaselineKind::Bernstein,
            Baseline::Exponential { .. } => BaselineKind::Exponential,
            Baseline::Weibull { .. } => BaselineKind::Weibull,
            Baseline::Piecewise { .. } => BaselineKind::Piecewise,
        }
    }

    /// Free parameters, all constrained to be nonnegative.
    pub fn params(&self) -> Vec<f64> {
        match self {
            Baseline::Bernstein(b) => b.coeffs.clone(),
            Baseline::Exponential { rate } => vec![*rate],
            Baseline::Weibull { scale, shape } => vec![*scale, *shape],
            Baseline::Piecewise { rates } => rates.clone(),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Baseline::Bernstein(b) => b.degree(),
            Baseline::Exponential { .. } => 1,
            Baseline::Weibull { .. } => 2,
            Baseline::Piecewise { rates } => rates.len(),
        }
    }

    pub fn param(&self, i: usize) -> f64 {
        match self {
            Baseline::Bernstein(b) => b.coeffs[i],
            Baseline::Exponential { rate } => *rate,
            Baseline::Weibull { scale, shape } => [*scale, *shape][i],
            Baseline::Piecewise { rates } => rates[i],
        }
    }

    pub fn set_param(&mut self, i: usize, value: f64) {
        match self {
            Baseline::Bernstein(b) => b.coeffs[i] = value,
            Baseline::Exponential { rate } => *rate = value,
            Baseline::Weibull { scale, shape } => {
                if i == 0 {
                    *scale = value
                } else {
                    *shape = value
                }
            }
            Baseline::Piecewise { rates } => rates[i] = value,
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        match self {
            Baseline::Bernstein(b) => (1..=b.degree()).map(|m| format!("gamma{m}")).collect(),
            Baseline::Exponential { .. } => vec!["rate".into()],
            Baseline::Weibull { .. } => vec!["scale".into(), "shape".into()],
            Baseline::Piecewise { rates } => {
                (1..=rates.len()).map(|m| format!("rate{m}")).collect()
            }
        }
    }

    /// `(Lambda_0(t), lambda_0(t))`, using a precomputed Bernstein basis when
    /// one is supplied.
    pub fn evaluate(&self, t: f64, basis: Option<&BernsteinBasis>) -> (f64, f64) {
        match self {
            Baseline::Bernstein(b) => match basis {
                Some(basis) => (b.cumulative_with(basis), b.hazard_with(basis)),
                None => {
                    let basis = BernsteinBasis::at(b.degree(), t);
                    (b.cumulative_with(&basis), b.hazard_with(&basis))
                }
            },
            Baseline::Exponential { rate } => (rate * t, *rate),
            Baseline::Weibull { scale, shape } => {
                let cum = scale * t.powf(*shape);
                let haz = if t > 0.0 {
                    scale * shape * t.powf(shape - 1.0)
                } else if *shape == 1.0 {
                    *scale
                } else if *shape > 1.0 {
                    0.0
                } else {
                    f64::INFINITY
                };
                (cum, haz)
            }
            Baseline::Piecewise { rates } => {
                let n = rates.len();
                let width = 1.0 / n as f64;
                let mut cum = 0.0;
                let mut haz = rates[n - 1];
                for (j, r) in rates.iter().enumerate() {
                    let lo = j as f64 * width;
                    let hi = lo + width;
                    if t >= hi && j + 1 < n {
                        cum += r * width;
                    } else {
                        cum += r * (t - lo).max(0.0);
                        haz = *r;
                        break;
                    }
                }
                (cum, haz)
            }
        }
    }

    pub fn cumulative(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.evaluate(t, None).0)
    }

    pub fn hazard(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.evaluate(t, None).1)
    }

    pub fn degree(&self) -> Option<usize> {
        match self {
            Baseline::Bernstein(b) => Some(b.degree()),
            _ => None,
        }
    }
}
