//! Run configuration read from TOML.
//!
//! All keys are optional and flat, except the `[simulate]` table. Unknown
//! keys are rejected. The `PENETRANCE_SEED` environment variable overrides
//! `seed`.

use serde::{Deserialize, Serialize};

use crate::ascertainment::AscertainmentRule;
use crate::baseline::BaselineKind;
use crate::cohort::ADMIN_CENSOR_AGE;
use crate::error::{Error, Result};
use crate::genetics::AlleleFrequency;
use crate::inference::{ModelSpec, PriorSpec, SamplerConfig};
use crate::riskmodel::{Design, StructuralConstraint};
use crate::simulate::SimulationConfig;

pub const SEED_ENV: &str = "PENETRANCE_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrailtyMode {
    /// Draw `xi ~ Gamma(nu, nu)` per posterior draw.
    Draw,
    /// Fix `xi = 1`.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub allele_frequency: f64,
    /// Number of causes; inferred from the data when absent.
    pub causes: Option<usize>,
    pub bernstein_degree: usize,
    pub baseline: BaselineKind,
    /// Per-cause design; defaults to `genotype` for male-zero causes and
    /// `full` otherwise.
    pub design: Vec<Design>,
    pub male_zero_hazard_causes: Vec<usize>,
    pub frailty: bool,
    pub ascertainment_cause: usize,
    pub correct_ascertainment: bool,
    /// Events past this age are censored; `inf` disables.
    pub admin_censor_age: f64,
    pub iterations: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub chains: usize,
    pub beta_prior_sd: f64,
    pub nu_prior: [f64; 2],
    /// `[shape, rate]`; absent means the flat prior on `[0, inf)`.
    pub gamma_prior: Option<[f64; 2]>,
    pub proposal_sd: f64,
    pub target_acceptance: f64,
    pub credible_level: f64,
    pub curve_max_age: f64,
    pub curve_step: f64,
    pub predict_frailty: FrailtyMode,
    pub roc_cause: usize,
    pub roc_age: f64,
    pub roc_repetitions: usize,
    /// Write a resumable checkpoint every this many iterations; 0 disables.
    pub checkpoint_every: u64,
    pub simulate: SimulationConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 1,
            allele_frequency: AlleleFrequency::DEFAULT,
            causes: None,
            bernstein_degree: 5,
            baseline: BaselineKind::Bernstein,
            design: Vec::new(),
            male_zero_hazard_causes: vec![1],
            frailty: true,
            ascertainment_cause: 2,
            correct_ascertainment: true,
            admin_censor_age: ADMIN_CENSOR_AGE,
            iterations: 100_000,
            burn_in: 10_000,
            thin: 5,
            chains: 1,
            beta_prior_sd: 10.0,
            nu_prior: [0.01, 0.01],
            gamma_prior: None,
            proposal_sd: 0.1,
            target_acceptance: 0.234,
            credible_level: 0.95,
            curve_max_age: 75.0,
            curve_step: 1.0,
            predict_frailty: FrailtyMode::Draw,
            roc_cause: 2,
            roc_age: 50.0,
            roc_repetitions: 20,
            checkpoint_every: 0,
            simulate: SimulationConfig::default(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies the `PENETRANCE_SEED` override when set.
    pub fn with_env_seed(mut self) -> Result<Self> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
        }
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        AlleleFrequency::new(self.allele_frequency)?;
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.bernstein_degree == 0 {
            return bad("bernstein_degree must be at least 1");
        }
        if self.thin == 0 {
            return bad("thin must be at least 1");
        }
        if self.burn_in >= self.iterations {
            return bad("burn_in must be smaller than iterations");
        }
        if self.chains == 0 {
            return bad("chains must be at least 1");
        }
        if !(self.beta_prior_sd > 0.0) || self.nu_prior.iter().any(|x| !(*x > 0.0)) {
            return bad("prior hyperparameters must be positive");
        }
        if let Some(g) = self.gamma_prior {
            if g.iter().any(|x| !(*x > 0.0)) {
                return bad("gamma_prior hyperparameters must be positive");
            }
        }
        if !(self.proposal_sd > 0.0) {
            return bad("proposal_sd must be positive");
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0)
            || !(self.credible_level > 0.0 && self.credible_level < 1.0)
        {
            return bad("target_acceptance and credible_level must lie in (0, 1)");
        }
        if !(self.curve_step > 0.0 && self.curve_max_age >= 0.0) {
            return bad("curve grid must have positive step");
        }
        if !(self.admin_censor_age > 0.0) {
            return bad("admin_censor_age must be positive");
        }
        if self.ascertainment_cause == 0 {
            return bad("ascertainment_cause must be at least 1");
        }
        if let Some(k) = self.causes {
            if k == 0 || !self.design.is_empty() && self.design.len() != k {
                return bad("design must list one entry per cause");
            }
        }
        self.simulate.validate()
    }

    pub fn admin_age(&self) -> Option<f64> {
        self.admin_censor_age.is_finite().then_some(self.admin_censor_age)
    }

    pub fn priors(&self) -> PriorSpec {
        PriorSpec {
            beta_sd: self.beta_prior_sd,
            gamma: self.gamma_prior,
            nu: self.nu_prior,
        }
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            iterations: self.iterations,
            burn_in: self.burn_in,
            thin: self.thin,
            seed: self.seed,
            chains: self.chains,
            proposal_sd: self.proposal_sd,
            target_acceptance: self.target_acceptance,
            use_likelihood: true,
        }
    }

    /// Model specification for data whose largest cause code is `max_cause`.
    pub fn model_spec(&self, max_cause: usize) -> Result<ModelSpec> {
        let k = self
            .causes
            .unwrap_or_else(|| max_cause.max(self.ascertainment_cause).max(1));
        if max_cause > k {
            return Err(Error::InvalidCause {
                cause: max_cause,
                causes: k,
            });
        }
        if self.correct_ascertainment && self.ascertainment_cause > k {
            return Err(Error::InvalidCause {
                cause: self.ascertainment_cause,
                causes: k,
            });
        }
        let constraint = StructuralConstraint {
            zero_for_males: self.male_zero_hazard_causes.iter().copied().filter(|&c| c <= k).collect(),
        };
        let designs = if self.design.is_empty() {
            (1..=k)
                .map(|c| {
                    if constraint.zero_for_males.contains(&c) {
                        Design::Genotype
                    } else {
                        Design::Full
                    }
                })
                .collect()
        } else if self.design.len() == k {
            self.design.clone()
        } else {
            return Err(Error::Config(format!(
                "design lists {} causes, model has {k}",
                self.design.len()
            )));
        };
        Ok(ModelSpec {
            causes: k,
            designs,
            baseline: self.baseline,
            degree: self.bernstein_degree,
            frailty: self.frailty,
            constraint,
            allele_frequency: self.allele_frequency,
            ascertainment: if self.correct_ascertainment {
                AscertainmentRule::ProbandCause(self.ascertainment_cause)
            } else {
                AscertainmentRule::Unconditional
            },
            priors: self.priors(),
        })
    }

    /// Age grid for penetrance curves, clipped to `max_age`.
    pub fn curve_ages(&self, max_age: f64) -> Vec<f64> {
        let top = self.curve_max_age.min(max_age);
        let n = (top / self.curve_step + 1e-9).floor() as usize;
        (0..=n).map(|i| i as f64 * self.curve_step).collect()
    }
}
