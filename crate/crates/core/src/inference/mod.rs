//! Posterior sampling of the model parameters and family frailties.
//!
//! Scalar parameters live in one flat vector with a fixed layout per
//! [`ModelSpec`]: for each cause its regression coefficients, its baseline
//! parameters, then its frailty precision when frailty is enabled.

mod draws;
mod family;
mod sampler;
mod summary;

pub use draws::{read_draws, write_draws};
pub use family::{CauseTerms, FamilyData};
pub use sampler::{resume_chain, run_chain, run_chains, ChainRunner, ChainState, Checkpoint, Draw, PosteriorSamples};
pub use summary::{describe, penetrance_posterior, quantile, split_rhat, summarize, PenetranceCurve, SummaryRow};

use serde::{Deserialize, Serialize};

use crate::ascertainment::AscertainmentRule;
use crate::baseline::{Baseline, BaselineKind};
use crate::cohort::Cohort;
use crate::error::{Error, Result};
use crate::genetics::{founder_prior, AlleleFrequency};
use crate::riskmodel::{CauseParams, Design, ModelParams, StructuralConstraint};
use crate::special::gamma_ln_pdf;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    /// Standard deviation of the independent normal priors on `beta`.
    pub beta_sd: f64,
    /// `Gamma(shape, rate)` on each baseline parameter; `None` is flat.
    pub gamma: Option<[f64; 2]>,
    /// `Gamma(shape, rate)` on each frailty precision.
    pub nu: [f64; 2],
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            beta_sd: 10.0,
            gamma: None,
            nu: [0.01, 0.01],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub iterations: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub seed: u64,
    pub chains: usize,
    /// Initial random-walk standard deviation for every scalar.
    pub proposal_sd: f64,
    pub target_acceptance: f64,
    /// When false the likelihood is replaced by 1 and the chain samples the
    /// prior.
    pub use_likelihood: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            iterations: 100_000,
            burn_in: 10_000,
            thin: 5,
            seed: 1,
            chains: 1,
            proposal_sd: 0.1,
            target_acceptance: 0.234,
            use_likelihood: true,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 || self.burn_in >= self.iterations || self.chains == 0 {
            return Err(Error::Config(
                "need thin >= 1, burn_in < iterations and chains >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn retained(&self) -> u64 {
        (self.iterations - self.burn_in) / self.thin
    }
}

/// Everything that fixes the model structure, independent of data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub causes: usize,
    pub designs: Vec<Design>,
    pub baseline: BaselineKind,
    pub degree: usize,
    pub frailty: bool,
    pub constraint: StructuralConstraint,
    pub allele_frequency: f64,
    pub ascertainment: AscertainmentRule,
    pub priors: PriorSpec,
}

/// What a slot of the flat parameter vector holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Beta { cause: usize, index: usize },
    Baseline { cause: usize, index: usize },
    Nu { cause: usize },
}

impl Slot {
    /// Cause (0-based) the slot belongs to.
    pub fn cause(self) -> usize {
        match self {
            Slot::Beta { cause, .. } | Slot::Baseline { cause, .. } | Slot::Nu { cause } => cause,
        }
    }

    /// Positive parameters are sampled on the log scale.
    pub fn positive(self) -> bool {
        !matches!(self, Slot::Beta { .. })
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.causes == 0 || self.designs.len() != self.causes {
            return Err(Error::Config("one design per cause is required".into()));
        }
        if self.degree == 0 {
            return Err(Error::Config("Bernstein degree must be positive".into()));
        }
        AlleleFrequency::new(self.allele_frequency)?;
        if let AscertainmentRule::ProbandCause(k) = self.ascertainment {
            if k == 0 || k > self.causes {
                return Err(Error::InvalidCause {
                    cause: k,
                    causes: self.causes,
                });
            }
        }
        Ok(())
    }

    pub fn founder_prior(&self) -> [f64; 3] {
        founder_prior(AlleleFrequency::new(self.allele_frequency).expect("validated"))
    }

    fn baseline_len(&self) -> usize {
        Baseline::flat(self.baseline, self.degree, 1.0)
            .expect("valid degree")
            .param_count()
    }

    pub fn layout(&self) -> Vec<Slot> {
        let nb = self.baseline_len();
        let mut out = Vec::new();
        for k in 0..self.causes {
            for j in 0..self.designs[k].len() {
                out.push(Slot::Beta { cause: k, index: j });
            }
            for j in 0..nb {
                out.push(Slot::Baseline { cause: k, index: j });
            }
            if self.frailty {
                out.push(Slot::Nu { cause: k });
            }
        }
        out
    }

    /// Column names matching [`Self::layout`].
    pub fn names(&self) -> Vec<String> {
        let base = Baseline::flat(self.baseline, self.degree, 1.0).expect("valid degree");
        let bnames = base.param_names();
        self.layout()
            .into_iter()
            .map(|s| match s {
                Slot::Beta { cause, index } => {
                    format!("beta{}_{}", cause + 1, self.designs[cause].names()[index])
                }
                Slot::Baseline { cause, index } => format!("{}_{}", bnames[index], cause + 1),
                Slot::Nu { cause } => format!("nu{}", cause + 1),
            })
            .collect()
    }

    /// Parameters from a flat vector on the natural scale.
    pub fn params(&self, theta: &[f64], time_scale: f64) -> ModelParams {
        let mut causes: Vec<CauseParams> = (0..self.causes)
            .map(|k| CauseParams {
                design: self.designs[k],
                beta: vec![0.0; self.designs[k].len()],
                baseline: Baseline::flat(self.baseline, self.degree, 0.0).expect("valid degree"),
                nu: None,
            })
            .collect();
        for (slot, &v) in self.layout().iter().zip(theta) {
            match *slot {
                Slot::Beta { cause, index } => causes[cause].beta[index] = v,
                Slot::Baseline { cause, index } => causes[cause].baseline.set_param(index, v),
                Slot::Nu { cause } => causes[cause].nu = Some(v),
            }
        }
        ModelParams {
            causes,
            constraint: self.constraint.clone(),
            time_scale,
        }
    }

    /// Flat vector of `m` on the natural scale.
    pub fn flatten(&self, m: &ModelParams) -> Vec<f64> {
        self.layout()
            .iter()
            .map(|s| match *s {
                Slot::Beta { cause, index } => m.causes[cause].beta[index],
                Slot::Baseline { cause, index } => m.causes[cause].baseline.param(index),
                Slot::Nu { cause } => m.causes[cause].nu.unwrap_or(1.0),
            })
            .collect()
    }

    /// Starting point: `beta = 0`, a flat baseline at the pooled
    /// Nelson–Aalen rate of each cause, `nu = 1`.
    pub fn initial_theta(&self, cohort: &Cohort) -> Vec<f64> {
        let rates = nelson_aalen_rates(cohort, self.causes);
        let mut m = self.params(&vec![0.0; self.layout().len()], cohort.time_scale);
        for (k, c) in m.causes.iter_mut().enumerate() {
            c.baseline = Baseline::flat(self.baseline, self.degree, rates[k]).expect("valid degree");
            if self.frailty {
                c.nu = Some(1.0);
            }
        }
        self.flatten(&m)
    }

    /// Log prior of `theta` (natural scale), `-inf` off the support.
    pub fn log_prior(&self, theta: &[f64]) -> f64 {
        let mut lp = 0.0;
        let sd = self.priors.beta_sd;
        for (slot, &v) in self.layout().iter().zip(theta) {
            lp += match slot {
                Slot::Beta { .. } => -0.5 * (v / sd).powi(2) - (sd * (2.0 * std::f64::consts::PI).sqrt()).ln(),
                Slot::Baseline { .. } => {
                    if !(v >= 0.0 && v.is_finite()) {
                        return f64::NEG_INFINITY;
                    }
                    match self.priors.gamma {
                        None => 0.0,
                        Some([a, b]) => gamma_ln_pdf(v, a, b),
                    }
                }
                Slot::Nu { .. } => gamma_ln_pdf(v, self.priors.nu[0], self.priors.nu[1]),
            };
        }
        lp
    }
}

/// Pooled Nelson–Aalen cumulative hazard at rescaled time 1, per cause.
pub fn nelson_aalen_rates(cohort: &Cohort, causes: usize) -> Vec<f64> {
    let mut records: Vec<(f64, usize)> = cohort
        .families
        .iter()
        .flat_map(|p| p.members().iter().map(|m| (m.phenotype.age / cohort.time_scale, m.phenotype.cause)))
        .collect();
    records.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = records.len();
    let mut out = vec![0.0; causes];
    for (i, &(_, cause)) in records.iter().enumerate() {
        if cause > 0 && cause <= causes {
            out[cause - 1] += 1.0 / (n - i) as f64;
        }
    }
    // A cause with no events still needs a positive starting rate.
    out.iter().map(|&r| r.max(1e-3)).collect()
}

/// Log prior density of a log-frailty `w = log xi` under Gamma(nu, nu),
/// including the Jacobian of the log transform.
pub fn log_frailty_prior(w: f64, log_nu: f64) -> f64 {
    let nu = log_nu.exp();
    nu * log_nu - ln_gamma_of_exp(log_nu) + nu * w - nu * w.exp()
}

/// `ln Gamma(exp(u))`, accurate when `exp(u)` underflows.
pub fn ln_gamma_of_exp(u: f64) -> f64 {
    if u < -30.0 {
        // ln Gamma(x) = -ln x - euler * x + O(x^2)
        -u - 0.577_215_664_901_532_9 * u.exp()
    } else {
        statrs::function::gamma::ln_gamma(u.exp())
    }
}

/// Sampler state in the scale it is proposed on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    /// Flat parameters; positive slots hold logs.
    pub theta: Vec<f64>,
    /// `log xi`, per family and cause.
    pub log_xi: Vec<Vec<f64>>,
}

impl State {
    pub fn natural_theta(&self, layout: &[Slot]) -> Vec<f64> {
        layout
            .iter()
            .zip(&self.theta)
            .map(|(s, &v)| if s.positive() { v.exp() } else { v })
            .collect()
    }

    pub fn from_natural(layout: &[Slot], theta: &[f64], xi: &[Vec<f64>]) -> Self {
        Self {
            theta: layout
                .iter()
                .zip(theta)
                .map(|(s, &v)| if s.positive() { v.ln() } else { v })
                .collect(),
            log_xi: xi.iter().map(|x| x.iter().map(|v| v.ln()).collect()).collect(),
        }
    }
}

/// Log prior of the sampling-scale state, including Jacobians of the log
/// transforms: `log Pr(theta) + log Pr(xi | nu) + log Pr(nu)`.
pub fn log_prior_sampling_scale(spec: &ModelSpec, state: &State) -> f64 {
    let layout = spec.layout();
    let mut lp = 0.0;
    let sd = spec.priors.beta_sd;
    for (slot, &v) in layout.iter().zip(&state.theta) {
        lp += match *slot {
            Slot::Beta { .. } => -0.5 * (v / sd).powi(2) - (sd * (2.0 * std::f64::consts::PI).sqrt()).ln(),
            Slot::Baseline { .. } => match spec.priors.gamma {
                None => v,
                Some([a, b]) => a * b.ln() - statrs::function::gamma::ln_gamma(a) + a * v - b * v.exp(),
            },
            Slot::Nu { cause } => {
                let [a, b] = spec.priors.nu;
                let prior = a * b.ln() - statrs::function::gamma::ln_gamma(a) + a * v - b * v.exp();
                let frailties: f64 = state.log_xi.iter().map(|x| log_frailty_prior(x[cause], v)).sum();
                prior + frailties
            }
        };
    }
    lp
}

/// Log posterior on the sampling scale: the sum of the (corrected) family
/// log-likelihoods plus [`log_prior_sampling_scale`].
pub fn log_posterior(spec: &ModelSpec, data: &[FamilyData], time_scale: f64, state: &State) -> f64 {
    let layout = spec.layout();
    if state.theta.iter().any(|v| !v.is_finite()) {
        return f64::NEG_INFINITY;
    }
    let m = spec.params(&state.natural_theta(&layout), time_scale);
    let prior = spec.founder_prior();
    let ll: f64 = data
        .iter()
        .zip(&state.log_xi)
        .map(|(f, w)| f.log_likelihood(&m, w, spec.ascertainment, &prior))
        .sum();
    ll + log_prior_sampling_scale(spec, state)
}
