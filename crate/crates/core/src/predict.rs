//! Carrier probabilities and personalized cause-specific risk.
//!
//! The risk of cause `k` by age `t` for member `j` is the carrier-weighted
//! average of the frailty-marginal penetrances,
//! `R = Pr(G=0 | H) q_k(t | 0, X) + Pr(G=1 | H) q_k(t | 1, X)`, evaluated per
//! posterior draw.

use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::BaselineKind;
use crate::config::FrailtyMode;
use crate::error::{Error, Result};
use crate::inference::{describe, Draw, PosteriorSamples};
use crate::pedigree::{Pedigree, Sex};
use crate::peeling;
use crate::riskmodel::{Covariates, CurveRule, FrailtyVector, ModelParams};
use crate::seeds;

/// Quadrature nodes per age-grid interval.
const CURVE_NODES: usize = 8;

/// `[Pr(G_j = 0 | H, G_obs), Pr(G_j = 1 | H, G_obs)]`, collapsing the
/// heterozygous and homozygous states.
pub fn carrier_probability(
    p: &Pedigree,
    j: usize,
    m: &ModelParams,
    xi: &FrailtyVector,
    prior: &[f64; 3],
) -> Result<[f64; 2]> {
    if j >= p.len() {
        return Err(Error::UnknownMember(j.to_string()));
    }
    let msgs = peeling::compute_messages(p, m, xi, prior)?;
    let s = msgs.state_probabilities(j);
    if s.iter().any(|x| !x.is_finite()) {
        return Err(Error::ImpossiblePedigree(p.family_id().to_string()));
    }
    Ok([s[0], s[1] + s[2]])
}

/// Convex combination of the two penetrance values.
pub fn weighted_risk(weights: [f64; 2], q0: f64, q1: f64) -> f64 {
    (weights[0] * q0 + weights[1] * q1).clamp(0.0, 1.0)
}

/// Frailties for a new family under one draw: sampled from
/// `Gamma(nu, nu)` or fixed at 1.
pub fn draw_frailty(m: &ModelParams, mode: FrailtyMode, seed: u64, index: u64) -> FrailtyVector {
    let mut rng = seeds::stream(seed, "predict-frailty", index);
    FrailtyVector(
        m.causes
            .iter()
            .map(|c| match (mode, c.nu) {
                (FrailtyMode::Draw, Some(nu)) => {
                    let g = Gamma::new(nu, 1.0 / nu).expect("positive precision");
                    g.sample(&mut rng).max(f64::MIN_POSITIVE)
                }
                _ => 1.0,
            })
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskCurve {
    pub cause: usize,
    pub ages: Vec<f64>,
    pub bands: Vec<Band>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskPrediction {
    pub member: String,
    pub carrier: Band,
    pub curves: Vec<RiskCurve>,
}

fn band(x: &[f64], level: f64) -> Result<Band> {
    let (mean, _, lower, upper) = describe(x, level)?;
    Ok(Band { mean, lower, upper })
}

fn curve_rule(samples: &PosteriorSamples, ages: &[f64]) -> Result<CurveRule> {
    let grid: Vec<f64> = ages.iter().map(|a| a / samples.time_scale).collect();
    let degree = (samples.spec.baseline == BaselineKind::Bernstein).then_some(samples.spec.degree);
    CurveRule::new(&grid, CURVE_NODES, degree)
}

/// Per-draw carrier weights of member `j`.
pub fn carrier_weights(
    samples: &PosteriorSamples,
    p: &Pedigree,
    j: usize,
    mode: FrailtyMode,
    seed: u64,
) -> Result<Vec<[f64; 2]>> {
    let prior = samples.spec.founder_prior();
    samples
        .draws
        .par_iter()
        .enumerate()
        .map(|(l, d)| {
            let m = samples.params(d);
            let xi = draw_frailty(&m, mode, seed, l as u64);
            carrier_probability(p, j, &m, &xi, &prior)
        })
        .collect()
}

/// Penetrance curves of one draw for `(G = 0, G = 1)`: `[g][cause][age]`.
fn draw_curves(samples: &PosteriorSamples, d: &Draw, sex: Sex, rule: &CurveRule) -> [Vec<Vec<f64>>; 2] {
    let m = samples.params(d);
    [false, true].map(|g| m.penetrance_curves(Covariates::new(g, sex), rule))
}

/// Risk curves for member `j` of `p` on `ages`, with pointwise bands at
/// `level`. `p` must already be on the model's time scale.
pub fn predict_risk(
    samples: &PosteriorSamples,
    p: &Pedigree,
    j: usize,
    ages: &[f64],
    mode: FrailtyMode,
    level: f64,
    seed: u64,
) -> Result<RiskPrediction> {
    if samples.draws.is_empty() {
        return Err(Error::Undefined("no posterior draws".into()));
    }
    let rule = curve_rule(samples, ages)?;
    let sex = p.member(j).sex;
    let weights = carrier_weights(samples, p, j, mode, seed)?;
    let curves: Vec<[Vec<Vec<f64>>; 2]> = samples
        .draws
        .par_iter()
        .map(|d| draw_curves(samples, d, sex, &rule))
        .collect();
    let carrier: Vec<f64> = weights.iter().map(|w| w[1]).collect();
    let mut out = Vec::with_capacity(samples.spec.causes);
    for k in 0..samples.spec.causes {
        let mut bands = Vec::with_capacity(ages.len());
        for g in 0..ages.len() {
            let r: Vec<f64> = weights
                .iter()
                .zip(&curves)
                .map(|(w, c)| weighted_risk(*w, c[0][k][g], c[1][k][g]))
                .collect();
            bands.push(band(&r, level)?);
        }
        out.push(RiskCurve {
            cause: k + 1,
            ages: ages.to_vec(),
            bands,
        });
    }
    Ok(RiskPrediction {
        member: p.member(j).id.clone(),
        carrier: band(&carrier, level)?,
        curves: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genetics::{carrier_prevalence, founder_prior, transmission, AlleleFrequency, STATES};
    use crate::pedigree::{Individual, Phenotype};
    use crate::riskmodel::tests::cause;
    use crate::riskmodel::{Design, StructuralConstraint};

    fn model() -> ModelParams {
        ModelParams {
            causes: vec![
                cause(Design::Genotype, vec![1.5], vec![0.2, 0.5, 0.4], Some(2.0)),
                cause(Design::Full, vec![2.5, 0.3, -0.2], vec![0.1, 0.3, 0.6], Some(0.7)),
            ],
            constraint: StructuralConstraint::male_breast(),
            time_scale: 80.0,
        }
    }

    #[test]
    fn observed_genotype_is_certain() {
        let p = Pedigree::new(
            "A",
            vec![Individual::founder("p", Sex::Female, Phenotype::event(40.0, 2))
                .with_carrier(Some(true))
                .proband()],
        )
        .unwrap();
        let pr = founder_prior(AlleleFrequency::new(0.01).unwrap());
        let w = carrier_probability(&p, 0, &model(), &FrailtyVector::ones(2), &pr).unwrap();
        assert!((w[1] - 1.0).abs() < 1e-15 && w[0].abs() < 1e-15);
    }

    #[test]
    fn uninformative_singleton_gives_prior() {
        let phi = AlleleFrequency::new(0.03).unwrap();
        let p = Pedigree::new(
            "A",
            vec![Individual::founder("p", Sex::Male, Phenotype::censored(0.0)).proband()],
        )
        .unwrap();
        let w = carrier_probability(&p, 0, &model(), &FrailtyVector::ones(2), &founder_prior(phi)).unwrap();
        assert!((w[1] - carrier_prevalence(phi)).abs() < 1e-14);
    }

    fn brute_force(p: &Pedigree, m: &ModelParams, xi: &FrailtyVector, prior: &[f64; 3], j: usize) -> f64 {
        let n = p.len();
        let ev = peeling::member_evidence(p, m, xi).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for code in 0..3usize.pow(n as u32) {
            let g: Vec<usize> = (0..n).map(|i| code / 3usize.pow(i as u32) % 3).collect();
            let mut w = 1.0;
            for i in 0..n {
                let s = STATES[g[i]];
                if !s.consistent_with(p.member(i).carrier) {
                    w = 0.0;
                    break;
                }
                w *= match p.parents(i) {
                    None => prior[g[i]],
                    Some((f, mo)) => transmission(s, STATES[g[mo]], STATES[g[f]]),
                };
                w *= ev[i][usize::from(s.carrier())].exp();
            }
            den += w;
            if g[j] > 0 {
                num += w;
            }
        }
        num / den
    }

    fn eight() -> Pedigree {
        let c = |a, k| Phenotype::event(a, k);
        let s = Phenotype::censored;
        let members = vec![
            Individual::founder("gf", Sex::Male, s(70.0)),
            Individual::founder("gm", Sex::Female, c(50.0, 1)),
            Individual::child("f", "gf", "gm", Sex::Male, c(45.0, 2)),
            Individual::founder("m", Sex::Female, s(60.0)).with_carrier(Some(false)),
            Individual::child("a", "f", "m", Sex::Female, c(30.0, 2)).proband(),
            Individual::child("b", "f", "m", Sex::Male, s(33.0)),
            Individual::child("u", "gf", "gm", Sex::Female, c(38.0, 1)).with_carrier(Some(true)),
            Individual::child("v", "gf", "gm", Sex::Male, s(55.0)),
        ];
        Pedigree::new("E", members).unwrap()
    }

    #[test]
    fn matches_brute_force_posterior() {
        let p = eight();
        let m = model();
        let xi = FrailtyVector(vec![1.2, 0.8]);
        let pr = founder_prior(AlleleFrequency::new(0.02).unwrap());
        for j in 0..p.len() {
            let w = carrier_probability(&p, j, &m, &xi, &pr).unwrap();
            let want = brute_force(&p, &m, &xi, &pr, j);
            assert!((w[1] - want).abs() < 1e-10, "member {j}: {} vs {want}", w[1]);
            assert!((w[0] + w[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn affected_relative_raises_carrier_probability() {
        let pr = founder_prior(AlleleFrequency::new(0.001).unwrap());
        let build = |sib: Phenotype| {
            Pedigree::new(
                "D",
                vec![
                    Individual::founder("f", Sex::Male, Phenotype::censored(60.0)),
                    Individual::founder("m", Sex::Female, Phenotype::censored(60.0)),
                    Individual::child("c", "f", "m", Sex::Female, Phenotype::censored(30.0)).proband(),
                    Individual::child("s", "f", "m", Sex::Female, sib),
                ],
            )
            .unwrap()
        };
        let m = model();
        let xi = FrailtyVector::ones(2);
        let before = carrier_probability(&build(Phenotype::censored(35.0)), 2, &m, &xi, &pr).unwrap();
        let after = carrier_probability(&build(Phenotype::event(25.0, 2)), 2, &m, &xi, &pr).unwrap();
        assert!(after[1] > before[1]);
    }

    #[test]
    fn weighted_risk_is_affine() {
        let (q0, q1) = (0.1, 0.7);
        assert_eq!(weighted_risk([0.0, 1.0], q0, q1), q1);
        for w in [0.0, 0.25, 0.5, 0.9] {
            let r = weighted_risk([1.0 - w, w], q0, q1);
            assert!((r - (q0 + w * (q1 - q0))).abs() < 1e-15);
            assert!(r >= q0 && r <= q1);
        }
    }
}
