//! Competing-risk gamma-frailty model.
//!
//! Cause `k` has conditional hazard
//! `lambda_k(t | Z, xi_k) = lambda_{0,k}(t) * xi_k * exp(beta_k' Z)` with a
//! family frailty `xi_k ~ Gamma(nu_k, nu_k)`. Integrating the frailty out
//! gives the closed-form marginal survival `(nu / (nu + Lambda*))^nu` and the
//! cause-specific penetrance integral evaluated here by Gauss–Legendre
//! quadrature. Causes are numbered from 1 in the public API.

use serde::{Deserialize, Serialize};

use crate::baseline::{Baseline, BernsteinBasis};
use crate::error::{Error, Result};
use crate::pedigree::{Phenotype, Sex};
use crate::quadrature::{self, DEFAULT_NODES};

/// Tolerance on the node-doubling error estimate of penetrance integrals.
pub const PENETRANCE_TOL: f64 = 1e-7;

/// Covariates entering the hazard: carrier status `G` and sex `X`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Covariates {
    pub carrier: bool,
    pub sex: Sex,
}

impl Covariates {
    pub fn new(carrier: bool, sex: Sex) -> Self {
        Self { carrier, sex }
    }
}

/// Which terms of `Z = (G, X, G*X)` a cause uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Design {
    /// `Z = (G)`.
    Genotype,
    /// `Z = (G, X, G*X)`.
    Full,
}

impl Design {
    pub fn len(self) -> usize {
        match self {
            Design::Genotype => 1,
            Design::Full => 3,
        }
    }

    pub fn is_empty(self) -> bool {
        false
    }

    pub fn vector(self, z: Covariates) -> Vec<f64> {
        let g = f64::from(u8::from(z.carrier));
        match self {
            Design::Genotype => vec![g],
            Design::Full => {
                let x = z.sex.covariate();
                vec![g, x, g * x]
            }
        }
    }

    pub fn linear_predictor(self, beta: &[f64], z: Covariates) -> f64 {
        let g = f64::from(u8::from(z.carrier));
        match self {
            Design::Genotype => beta[0] * g,
            Design::Full => {
                let x = z.sex.covariate();
                beta[0] * g + beta[1] * x + beta[2] * g * x
            }
        }
    }

    pub fn names(self) -> &'static [&'static str] {
        match self {
            Design::Genotype => &["G"],
            Design::Full => &["G", "X", "GX"],
        }
    }
}

impl std::str::FromStr for Design {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "genotype" => Ok(Design::Genotype),
            "full" => Ok(Design::Full),
            other => Err(Error::Config(format!("unknown design {other:?}"))),
        }
    }
}

/// Causes whose hazard is identically zero for males.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuralConstraint {
    pub zero_for_males: Vec<usize>,
}

impl StructuralConstraint {
    pub fn none() -> Self {
        Self::default()
    }

    /// Cause 1 (breast) cannot occur in males.
    pub fn male_breast() -> Self {
        Self {
            zero_for_males: vec![1],
        }
    }

    pub fn fires(&self, cause: usize, z: Covariates) -> bool {
        z.sex == Sex::Male && self.zero_for_males.contains(&cause)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauseParams {
    pub design: Design,
    pub beta: Vec<f64>,
    pub baseline: Baseline,
    /// Frailty precision; `None` fixes the frailty at 1.
    pub nu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub causes: Vec<CauseParams>,
    pub constraint: StructuralConstraint,
    /// Age in years that maps to rescaled time 1.
    pub time_scale: f64,
}

/// Per-family frailties `(xi_1, ..., xi_K)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrailtyVector(pub Vec<f64>);

impl FrailtyVector {
    pub fn ones(k: usize) -> Self {
        Self(vec![1.0; k])
    }
}

impl ModelParams {
    pub fn cause_count(&self) -> usize {
        self.causes.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.causes.is_empty() {
            return Err(Error::InvalidParameter("model needs at least one cause".into()));
        }
        if !(self.time_scale > 0.0 && self.time_scale.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "time scale must be positive, got {}",
                self.time_scale
            )));
        }
        for (k, c) in self.causes.iter().enumerate() {
            if c.beta.len() != c.design.len() {
                return Err(Error::InvalidParameter(format!(
                    "cause {}: beta has {} entries, design needs {}",
                    k + 1,
                    c.beta.len(),
                    c.design.len()
                )));
            }
            if let Some(nu) = c.nu {
                if !(nu > 0.0 && nu.is_finite()) {
                    return Err(Error::InvalidParameter(format!("cause {}: nu = {nu}", k + 1)));
                }
            }
            if c.baseline.params().iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::InvalidParameter(format!(
                    "cause {}: baseline parameters must be nonnegative",
                    k + 1
                )));
            }
        }
        Ok(())
    }

    fn cause(&self, k: usize) -> Result<&CauseParams> {
        if k == 0 || k > self.causes.len() {
            return Err(Error::InvalidCause {
                cause: k,
                causes: self.causes.len(),
            });
        }
        Ok(&self.causes[k - 1])
    }

    /// Relative hazard `exp(beta_k' Z)`, or 0 when the constraint fires.
    pub fn relative_hazard(&self, k: usize, z: Covariates) -> Result<f64> {
        let c = self.cause(k)?;
        if self.constraint.fires(k, z) {
            return Ok(0.0);
        }
        Ok(c.design.linear_predictor(&c.beta, z).exp())
    }

    pub fn rescale(&self, age: f64) -> f64 {
        age / self.time_scale
    }

    pub fn cause_hazard(&self, k: usize, z: Covariates, xi_k: f64, t: f64) -> Result<f64> {
        check_time(t)?;
        let rel = self.relative_hazard(k, z)?;
        if rel == 0.0 {
            return Ok(0.0);
        }
        Ok(self.causes[k - 1].baseline.hazard(t)? * xi_k * rel)
    }

    pub fn conditional_cumulative_hazard(
        &self,
        k: usize,
        z: Covariates,
        xi_k: f64,
        t: f64,
    ) -> Result<f64> {
        check_time(t)?;
        let rel = self.relative_hazard(k, z)?;
        if rel == 0.0 {
            return Ok(0.0);
        }
        Ok(self.causes[k - 1].baseline.cumulative(t)? * xi_k * rel)
    }

    /// Frailty-marginal survival for cause `k` alone.
    pub fn marginal_cause_survival(&self, k: usize, z: Covariates, t: f64) -> Result<f64> {
        check_time(t)?;
        let rel = self.relative_hazard(k, z)?;
        let c = &self.causes[k - 1];
        let lambda_star = rel * c.baseline.cumulative(t)?;
        Ok(marginal_survival(c.nu, lambda_star))
    }

    /// Overall frailty-marginal survival `prod_k S_k(t | Z)`.
    pub fn marginal_survival(&self, z: Covariates, t: f64) -> Result<f64> {
        (1..=self.cause_count())
            .map(|k| self.marginal_cause_survival(k, z, t))
            .product()
    }

    // Integrand of the cause-specific penetrance at time u.
    fn penetrance_integrand(&self, k: usize, rel: &[f64], u: f64) -> f64 {
        let mut surv = 1.0;
        let mut own = 0.0;
        for (j, c) in self.causes.iter().enumerate() {
            if rel[j] == 0.0 {
                continue;
            }
            let (cum, haz) = c.baseline.evaluate(u, None);
            let lambda_star = rel[j] * cum;
            surv *= marginal_survival(c.nu, lambda_star);
            if j + 1 == k {
                own = match c.nu {
                    Some(nu) => nu / (nu + lambda_star) * haz * rel[j],
                    None => haz * rel[j],
                };
            }
        }
        own * surv
    }

    fn relative_hazards(&self, z: Covariates) -> Vec<f64> {
        (1..=self.cause_count())
            .map(|k| self.relative_hazard(k, z).expect("valid cause"))
            .collect()
    }

    /// `q_k(t | Z) = Pr(T <= t, D = k | Z)` with the frailty integrated out.
    pub fn cause_penetrance(&self, k: usize, z: Covariates, t: f64) -> Result<f64> {
        check_time(t)?;
        self.cause(k)?;
        let rel = self.relative_hazards(z);
        if rel[k - 1] == 0.0 || t == 0.0 {
            return Ok(0.0);
        }
        quadrature::integrate_checked(0.0, t, DEFAULT_NODES, PENETRANCE_TOL, |u| {
            self.penetrance_integrand(k, &rel, u)
        })
    }

    /// `q(t | Z) = sum_k q_k(t | Z)`.
    pub fn overall_penetrance(&self, z: Covariates, t: f64) -> Result<f64> {
        (1..=self.cause_count())
            .map(|k| self.cause_penetrance(k, z, t))
            .sum()
    }

    /// Cause-specific penetrance curves on an increasing grid of rescaled
    /// times, integrated interval by interval. Returns `[cause][grid point]`.
    pub fn penetrance_curves(&self, z: Covariates, rule: &CurveRule) -> Vec<Vec<f64>> {
        let kk = self.cause_count();
        let rel = self.relative_hazards(z);
        let mut out = vec![vec![0.0; rule.grid.len()]; kk];
        let mut acc = vec![0.0; kk];
        let mut node = 0;
        for (g, _) in rule.grid.iter().enumerate() {
            while node < rule.nodes.len() && rule.nodes[node].interval == g {
                let n = &rule.nodes[node];
                let mut surv = 1.0;
                let mut own = vec![0.0; kk];
                for (j, c) in self.causes.iter().enumerate() {
                    if rel[j] == 0.0 {
                        continue;
                    }
                    let (cum, haz) = c.baseline.evaluate(n.t, rule.basis(node));
                    let lambda_star = rel[j] * cum;
                    surv *= marginal_survival(c.nu, lambda_star);
                    own[j] = match c.nu {
                        Some(nu) => nu / (nu + lambda_star) * haz * rel[j],
                        None => haz * rel[j],
                    };
                }
                for j in 0..kk {
                    acc[j] += n.weight * own[j] * surv;
                }
                node += 1;
            }
            for j in 0..kk {
                out[j][g] = acc[j];
            }
        }
        out
    }

    /// `sum_k [Delta_k log lambda_k(Y) - Lambda_k(Y)]` for one subject, given
    /// the rescaled phenotype time. `-inf` when an observed event has
    /// structurally zero hazard.
    pub fn individual_log_likelihood(
        &self,
        z: Covariates,
        phenotype: Phenotype,
        xi: &FrailtyVector,
    ) -> Result<f64> {
        check_time(phenotype.age)?;
        if phenotype.cause > self.cause_count() {
            return Err(Error::InvalidCause {
                cause: phenotype.cause,
                causes: self.cause_count(),
            });
        }
        Ok(self.log_likelihood_at(z, phenotype.age, phenotype.cause, &xi.0, None))
    }

    /// Core of [`Self::individual_log_likelihood`] with an optional
    /// precomputed Bernstein basis at `t`.
    pub fn log_likelihood_at(
        &self,
        z: Covariates,
        t: f64,
        cause: usize,
        xi: &[f64],
        basis: Option<&BernsteinBasis>,
    ) -> f64 {
        let mut ll = 0.0;
        for (j, x) in xi.iter().enumerate().take(self.causes.len()) {
            ll += self.cause_log_term(j, z, t, cause, x.ln(), basis);
        }
        ll
    }

    /// Contribution of cause `j` (0-based) to the individual
    /// log-likelihood: `Delta_j log lambda_j(t) - Lambda_j(t)`, given
    /// `log xi_j`.
    pub fn cause_log_term(
        &self,
        j: usize,
        z: Covariates,
        t: f64,
        cause: usize,
        log_xi: f64,
        basis: Option<&BernsteinBasis>,
    ) -> f64 {
        let k = j + 1;
        if self.constraint.fires(k, z) {
            return if cause == k { f64::NEG_INFINITY } else { 0.0 };
        }
        if t == 0.0 && cause != k {
            return 0.0;
        }
        let c = &self.causes[j];
        let rel = c.design.linear_predictor(&c.beta, z);
        let (cum, haz) = c.baseline.evaluate(t, basis);
        let mut ll = -cum * (log_xi + rel).exp();
        if cause == k {
            ll += haz.ln() + log_xi + rel;
        }
        ll
    }

    /// Log of the sub-density `lambda_k(Y) exp(-sum_j Lambda_j(Y))` at
    /// rescaled time `t`.
    pub fn log_subdensity(&self, k: usize, z: Covariates, xi: &[f64], t: f64) -> Result<f64> {
        check_time(t)?;
        self.cause(k)?;
        Ok(self.log_likelihood_at(z, t, k, xi, None))
    }
}

fn check_time(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::TimeOutOfRange(t))
    }
}

/// `(nu / (nu + lambda_star))^nu`, or `exp(-lambda_star)` without frailty.
pub fn marginal_survival(nu: Option<f64>, lambda_star: f64) -> f64 {
    match nu {
        Some(nu) => (-nu * (lambda_star / nu).ln_1p()).exp(),
        None => (-lambda_star).exp(),
    }
}

#[derive(Debug, Clone)]
pub struct CurveNode {
    pub t: f64,
    pub weight: f64,
    /// Index of the grid point closing the interval this node lies in.
    pub interval: usize,
}

/// Quadrature nodes for penetrance curves on a fixed time grid, with cached
/// Bernstein bases.
#[derive(Debug, Clone)]
pub struct CurveRule {
    pub grid: Vec<f64>,
    pub nodes: Vec<CurveNode>,
    bases: Option<Vec<BernsteinBasis>>,
}

impl CurveRule {
    /// `grid` must be increasing within [0, 1].
    pub fn new(grid: &[f64], nodes_per_interval: usize, degree: Option<usize>) -> Result<Self> {
        for w in grid.windows(2) {
            if w[1] < w[0] {
                return Err(Error::InvalidParameter("time grid must be increasing".into()));
            }
        }
        for &t in grid {
            check_time(t)?;
        }
        let rule = quadrature::rule(nodes_per_interval);
        let mut nodes = Vec::new();
        let mut prev = 0.0;
        for (g, &t) in grid.iter().enumerate() {
            if t > prev {
                let half = 0.5 * (t - prev);
                let mid = 0.5 * (t + prev);
                for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                    nodes.push(CurveNode {
                        t: mid + half * x,
                        weight: w * half,
                        interval: g,
                    });
                }
            }
            prev = t;
        }
        let bases = degree.map(|m| nodes.iter().map(|n| BernsteinBasis::at(m, n.t)).collect());
        Ok(Self {
            grid: grid.to_vec(),
            nodes,
            bases,
        })
    }

    fn basis(&self, node: usize) -> Option<&BernsteinBasis> {
        self.bases.as_ref().map(|b| &b[node])
    }
}
