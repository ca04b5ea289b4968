//! Ascertainment correction.
//!
//! A family enters the data because its proband was diagnosed with the
//! qualifying cause. Each family likelihood is divided by the probability of
//! that event evaluated at the proband's observed diagnosis time, with the
//! proband's carrier status marginalized over the population prior. The
//! "probability" is a sub-density in time and can exceed one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pedigree::{Pedigree, Sex};
use crate::peeling::{self, PeelPlan};
use crate::riskmodel::{Covariates, FrailtyVector, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AscertainmentRule {
    /// The proband was diagnosed with this cause first.
    ProbandCause(usize),
    /// Every family is ascertained; the correction is a no-op.
    Unconditional,
}

impl AscertainmentRule {
    pub fn check(&self, p: &Pedigree) -> Result<()> {
        if let AscertainmentRule::ProbandCause(k) = *self {
            let found = p.member(p.proband()).phenotype.cause;
            if found != k {
                return Err(Error::ProbandNotAscertained {
                    family: p.family_id().to_string(),
                    found,
                    expected: k,
                });
            }
        }
        Ok(())
    }
}

/// Log of `sum_G lambda_k*(Y | G, X, xi) exp(-sum_k Lambda_k(Y | G, X, xi)) Pr(G)`
/// at rescaled time `y`, where `prior` is the founder genotype prior.
pub fn log_ascertainment_probability(
    m: &ModelParams,
    xi: &FrailtyVector,
    sex: Sex,
    y: f64,
    rule: AscertainmentRule,
    prior: &[f64; 3],
) -> Result<f64> {
    let k = match rule {
        AscertainmentRule::Unconditional => return Ok(0.0),
        AscertainmentRule::ProbandCause(k) => k,
    };
    if !(y > 0.0 && y <= 1.0) {
        return Err(Error::TimeOutOfRange(y));
    }
    let carrier = prior[1] + prior[2];
    let mut terms = Vec::with_capacity(2);
    for (g, w) in [(false, prior[0]), (true, carrier)] {
        if w > 0.0 {
            let z = Covariates::new(g, sex);
            terms.push(w.ln() + m.log_subdensity(k, z, &xi.0, y)?);
        }
    }
    let v = crate::special::log_sum_exp(&terms);
    if !v.is_finite() {
        return Err(Error::DegenerateAscertainment {
            family: String::new(),
            detail: format!("cause {k}, sex {sex:?}, time {y}"),
        });
    }
    Ok(v)
}

pub fn ascertainment_probability(
    m: &ModelParams,
    xi: &FrailtyVector,
    sex: Sex,
    y: f64,
    rule: AscertainmentRule,
    prior: &[f64; 3],
) -> Result<f64> {
    log_ascertainment_probability(m, xi, sex, y, rule, prior).map(f64::exp)
}

/// Uncorrected family log-likelihood minus the log ascertainment
/// probability of its proband.
pub fn corrected_family_log_likelihood(
    p: &Pedigree,
    m: &ModelParams,
    xi: &FrailtyVector,
    rule: AscertainmentRule,
    prior: &[f64; 3],
) -> Result<f64> {
    rule.check(p)?;
    let ll = peeling::family_log_likelihood(p, m, xi, prior)?;
    let proband = p.member(p.proband());
    let y = m.rescale(proband.phenotype.age);
    let la = log_ascertainment_probability(m, xi, proband.sex, y, rule, prior).map_err(|e| {
        match e {
            Error::DegenerateAscertainment { detail, .. } => Error::DegenerateAscertainment {
                family: p.family_id().to_string(),
                detail,
            },
            other => other,
        }
    })?;
    Ok(ll - la)
}

/// Same as [`corrected_family_log_likelihood`] with a prebuilt plan and
/// cached `log Pr(G_obs)`.
pub fn corrected_with_plan(
    p: &Pedigree,
    plan: &PeelPlan,
    log_prob_observed: f64,
    m: &ModelParams,
    xi: &FrailtyVector,
    rule: AscertainmentRule,
    prior: &[f64; 3],
) -> Result<f64> {
    let evidence = peeling::member_evidence(p, m, xi)?;
    let ll = plan.log_likelihood(&evidence, prior, log_prob_observed);
    let proband = p.member(p.proband());
    let y = m.rescale(proband.phenotype.age);
    Ok(ll - log_ascertainment_probability(m, xi, proband.sex, y, rule, prior)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseline::{Baseline, BernsteinBaseline};
    use crate::genetics::{founder_prior, AlleleFrequency};
    use crate::pedigree::{Individual, Phenotype};
    use crate::riskmodel::tests::cause;
    use crate::riskmodel::{CauseParams, Design, StructuralConstraint};

    fn prior(phi: f64) -> [f64; 3] {
        founder_prior(AlleleFrequency::new(phi).unwrap())
    }

    #[test]
    fn constant_hazard_closed_form() {
        let c = 0.8;
        let m = ModelParams {
            causes: vec![CauseParams {
                design: Design::Genotype,
                beta: vec![0.0],
                baseline: Baseline::Bernstein(BernsteinBaseline::constant(5, c).unwrap()),
                nu: Some(1.0),
            }],
            constraint: StructuralConstraint::none(),
            time_scale: 1.0,
        };
        for &y in &[0.1, 0.5, 1.0] {
            let a = ascertainment_probability(
                &m,
                &FrailtyVector::ones(1),
                Sex::Female,
                y,
                AscertainmentRule::ProbandCause(1),
                &prior(0.3),
            )
            .unwrap();
            assert!((a - c * (-c * y).exp()).abs() < 1e-12);
        }
    }

    fn two_cause() -> ModelParams {
        ModelParams {
            causes: vec![
                cause(Design::Full, vec![1.2, 0.0, 0.0], vec![0.3, 0.6, 0.2], Some(1.0)),
                cause(Design::Full, vec![2.0, 0.4, -0.1], vec![0.2, 0.2, 0.9], Some(0.5)),
            ],
            constraint: StructuralConstraint::male_breast(),
            time_scale: 80.0,
        }
    }

    #[test]
    fn structural_zero_is_degenerate() {
        let r = ascertainment_probability(
            &two_cause(),
            &FrailtyVector::ones(2),
            Sex::Male,
            0.4,
            AscertainmentRule::ProbandCause(1),
            &prior(0.01),
        );
        assert!(matches!(r, Err(Error::DegenerateAscertainment { .. })));
    }

    #[test]
    fn vanishing_frequency_leaves_non_carrier_term() {
        let m = two_cause();
        let xi = FrailtyVector(vec![1.1, 0.6]);
        let a = ascertainment_probability(&m, &xi, Sex::Female, 0.5, AscertainmentRule::ProbandCause(2), &prior(1e-300)).unwrap();
        let z = Covariates::new(false, Sex::Female);
        let want = m.cause_hazard(2, z, 0.6, 0.5).unwrap()
            * (-(m.conditional_cumulative_hazard(1, z, 1.1, 0.5).unwrap()
                + m.conditional_cumulative_hazard(2, z, 0.6, 0.5).unwrap()))
            .exp();
        assert!((a - want).abs() < 1e-14 * want.max(1.0));
    }

    #[test]
    fn mixture_of_subdensities() {
        let m = two_cause();
        let xi = FrailtyVector(vec![0.9, 1.4]);
        let pr = prior(0.02);
        let a = ascertainment_probability(&m, &xi, Sex::Male, 0.7, AscertainmentRule::ProbandCause(2), &pr).unwrap();
        let f = |g: bool| {
            let z = Covariates::new(g, Sex::Male);
            let s: f64 = (1..=2)
                .map(|k| m.conditional_cumulative_hazard(k, z, xi.0[k - 1], 0.7).unwrap())
                .sum();
            m.cause_hazard(2, z, xi.0[1], 0.7).unwrap() * (-s).exp()
        };
        let want = pr[0] * f(false) + (pr[1] + pr[2]) * f(true);
        assert!((a - want).abs() < 1e-12);
    }

    fn singleton(cause: usize) -> Pedigree {
        let ind = Individual::founder("p", Sex::Female, Phenotype { age: 40.0, cause }).proband();
        Pedigree::new("S", vec![ind]).unwrap()
    }

    #[test]
    fn unconditional_rule_is_identity() {
        let m = two_cause();
        let xi = FrailtyVector::ones(2);
        let p = singleton(1);
        let pr = prior(0.01);
        let c = corrected_family_log_likelihood(&p, &m, &xi, AscertainmentRule::Unconditional, &pr).unwrap();
        let u = peeling::family_log_likelihood(&p, &m, &xi, &pr).unwrap();
        assert_eq!(c, u);
    }

    #[test]
    fn singleton_proband_closed_form() {
        let m = two_cause();
        let xi = FrailtyVector(vec![1.3, 0.8]);
        let pr = prior(0.01);
        let p = singleton(2);
        let c = corrected_family_log_likelihood(&p, &m, &xi, AscertainmentRule::ProbandCause(2), &pr).unwrap();
        // With an unobserved genotype, the family likelihood and the
        // ascertainment probability are the same mixture.
        assert!(c.abs() < 1e-12);

        let observed = Pedigree::new(
            "S",
            vec![Individual::founder("p", Sex::Female, Phenotype { age: 40.0, cause: 2 })
                .with_carrier(Some(true))
                .proband()],
        )
        .unwrap();
        let c = corrected_family_log_likelihood(&observed, &m, &xi, AscertainmentRule::ProbandCause(2), &pr).unwrap();
        let y = 0.5;
        let z1 = Covariates::new(true, Sex::Female);
        let z0 = Covariates::new(false, Sex::Female);
        let f = |z| m.log_subdensity(2, z, &xi.0, y).unwrap();
        let carrier = pr[1] + pr[2];
        let want = f(z1) - (carrier * f(z1).exp() + pr[0] * f(z0).exp()).ln();
        assert!((c - want).abs() < 1e-12);
    }

    #[test]
    fn proband_must_satisfy_rule() {
        let r = corrected_family_log_likelihood(
            &singleton(1),
            &two_cause(),
            &FrailtyVector::ones(2),
            AscertainmentRule::ProbandCause(2),
            &prior(0.01),
        );
        assert!(matches!(r, Err(Error::ProbandNotAscertained { found: 1, expected: 2, .. })));
    }

    #[test]
    fn stronger_effect_raises_probability() {
        let base = two_cause();
        let xi = FrailtyVector::ones(2);
        let pr = prior(0.05);
        let y = 0.3;
        let rule = AscertainmentRule::ProbandCause(2);
        let mut prev = f64::NEG_INFINITY;
        for b in [0.0, 0.5, 1.0, 1.5] {
            let mut m = base.clone();
            m.causes[1].beta[0] = b;
            let a = log_ascertainment_probability(&m, &xi, Sex::Female, y, rule, &pr).unwrap();
            assert!(a > prev);
            prev = a;
        }
    }
}
