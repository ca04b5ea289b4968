use crate::ascertainment::AscertainmentRule;
use crate::baseline::{BaselineKind, BernsteinBasis};
use crate::error::{Error, Result};
use crate::pedigree::{Pedigree, Sex};
use crate::peeling::{Evidence, PeelPlan};
use crate::riskmodel::{Covariates, ModelParams};
use crate::special::log_sum_exp;

use super::ModelSpec;

#[derive(Debug, Clone)]
struct Record {
    sex: Sex,
    t: f64,
    cause: usize,
    basis: Option<BernsteinBasis>,
}

/// One family prepared for repeated likelihood evaluation: the peeling
/// plan, `log Pr(G_obs)` and each member's rescaled record with its
/// Bernstein basis are computed once.
#[derive(Debug, Clone)]
pub struct FamilyData {
    pub pedigree: Pedigree,
    plan: PeelPlan,
    log_prob_observed: f64,
    records: Vec<Record>,
    proband: usize,
}

/// Per-cause phenotype terms of every member: `[G = 0, G = 1]`.
pub type CauseTerms = Vec<Evidence>;

impl FamilyData {
    pub fn new(p: &Pedigree, spec: &ModelSpec, time_scale: f64) -> Result<Self> {
        spec.ascertainment.check(p)?;
        let plan = PeelPlan::new(p);
        let log_prob_observed = plan.log_prob_observed(&spec.founder_prior());
        if log_prob_observed == f64::NEG_INFINITY {
            return Err(Error::ImpossiblePedigree(p.family_id().to_string()));
        }
        let mut records = Vec::with_capacity(p.len());
        for m in p.members() {
            let t = m.phenotype.age / time_scale;
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::TimeOutOfRange(t));
            }
            if m.phenotype.cause > spec.causes {
                return Err(Error::InvalidCause {
                    cause: m.phenotype.cause,
                    causes: spec.causes,
                });
            }
            records.push(Record {
                sex: m.sex,
                t,
                cause: m.phenotype.cause,
                basis: (spec.baseline == BaselineKind::Bernstein).then(|| BernsteinBasis::at(spec.degree, t)),
            });
        }
        Ok(Self {
            pedigree: p.clone(),
            plan,
            log_prob_observed,
            records,
            proband: p.proband(),
        })
    }

    pub fn family_id(&self) -> &str {
        self.pedigree.family_id()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Terms of cause `k` (0-based) given `log xi_k`.
    pub fn cause_terms(&self, m: &ModelParams, k: usize, log_xi: f64) -> CauseTerms {
        self.records
            .iter()
            .map(|r| {
                let f = |g| m.cause_log_term(k, Covariates::new(g, r.sex), r.t, r.cause, log_xi, r.basis.as_ref());
                [f(false), f(true)]
            })
            .collect()
    }

    pub fn all_terms(&self, m: &ModelParams, log_xi: &[f64]) -> Vec<CauseTerms> {
        (0..m.cause_count()).map(|k| self.cause_terms(m, k, log_xi[k])).collect()
    }

    /// Corrected log-likelihood from per-cause terms, with cause `swap.0`
    /// replaced by `swap.1` when given. `-inf` when the family is
    /// impossible or its ascertainment probability vanishes.
    pub fn log_likelihood_from_terms(
        &self,
        terms: &[CauseTerms],
        swap: Option<(usize, &CauseTerms)>,
        rule: AscertainmentRule,
        prior: &[f64; 3],
    ) -> f64 {
        let mut evidence = vec![[0.0; 2]; self.records.len()];
        for (k, t) in terms.iter().enumerate() {
            let t = match swap {
                Some((j, s)) if j == k => s,
                _ => t,
            };
            for (e, x) in evidence.iter_mut().zip(t) {
                e[0] += x[0];
                e[1] += x[1];
            }
        }
        let ll = self.plan.log_likelihood(&evidence, prior, self.log_prob_observed);
        if !ll.is_finite() {
            return f64::NEG_INFINITY;
        }
        match rule {
            AscertainmentRule::Unconditional => ll,
            AscertainmentRule::ProbandCause(_) => {
                // The proband's own evidence is its ascertainment sub-density.
                let e = evidence[self.proband];
                let la = log_sum_exp(&[prior[0].ln() + e[0], (prior[1] + prior[2]).ln() + e[1]]);
                if la.is_finite() {
                    ll - la
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub fn log_likelihood(&self, m: &ModelParams, log_xi: &[f64], rule: AscertainmentRule, prior: &[f64; 3]) -> f64 {
        self.log_likelihood_from_terms(&self.all_terms(m, log_xi), None, rule, prior)
    }
}
