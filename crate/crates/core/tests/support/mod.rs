//! Random pedigrees, random models and a brute-force likelihood oracle
//! shared by the integration and acceptance tests.
#![allow(dead_code)]

use penetrance::baseline::{Baseline, BernsteinBaseline};
use penetrance::genetics::{transmission, GenotypeState, STATES};
use penetrance::pedigree::{Individual, Pedigree, Phenotype, Sex};
use penetrance::riskmodel::{CauseParams, Covariates, Design, FrailtyVector, ModelParams, StructuralConstraint};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn other(s: Sex) -> Sex {
    match s {
        Sex::Male => Sex::Female,
        Sex::Female => Sex::Male,
    }
}

fn sex_of(rng: &mut ChaCha8Rng) -> Sex {
    if rng.random_bool(0.5) {
        Sex::Male
    } else {
        Sex::Female
    }
}

/// Loop-free pedigree with `n` members (at least 3) of which at most
/// `max_missing` have unobserved genotypes. Observed genotypes come from a
/// Mendelian draw, so they are always consistent. Ages are in `(0, 80]`
/// and causes in `0..=causes`; cause 1 is never given to males.
pub fn random_pedigree(rng: &mut ChaCha8Rng, n: usize, max_missing: usize, causes: usize, id: &str) -> Pedigree {
    assert!(n >= 3);
    // (father, mother) per member; matings as (father, mother).
    let mut sex = vec![Sex::Male, Sex::Female];
    let mut parents: Vec<Option<(usize, usize)>> = vec![None, None];
    let mut matings = vec![(0usize, 1usize)];
    let add_child = |sex: &mut Vec<Sex>, parents: &mut Vec<Option<(usize, usize)>>, u: (usize, usize), rng: &mut ChaCha8Rng| {
        sex.push(sex_of(rng));
        parents.push(Some(u));
    };
    add_child(&mut sex, &mut parents, matings[0], rng);
    while sex.len() < n {
        if sex.len() + 2 <= n && rng.random_bool(0.4) {
            // New founder spouse for an existing member, with one child.
            let i = rng.random_range(0..sex.len());
            let j = sex.len();
            sex.push(other(sex[i]));
            parents.push(None);
            let u = if sex[i] == Sex::Male { (i, j) } else { (j, i) };
            matings.push(u);
            add_child(&mut sex, &mut parents, u, rng);
        } else {
            let u = matings[rng.random_range(0..matings.len())];
            add_child(&mut sex, &mut parents, u, rng);
        }
    }
    // Mendelian genotypes; founders carry each mutant allele w.p. 0.2.
    let mut g = vec![GenotypeState::Wildtype; n];
    for i in 0..n {
        let alleles = match parents[i] {
            None => u8::from(rng.random_bool(0.2)) + u8::from(rng.random_bool(0.2)),
            Some((f, m)) => {
                let from = |s: GenotypeState, rng: &mut ChaCha8Rng| u8::from(rng.random_bool(f64::from(s.mutant_alleles()) / 2.0));
                from(g[f], rng) + from(g[m], rng)
            }
        };
        g[i] = STATES[usize::from(alleles)];
    }
    let missing = rng.random_range(0..=max_missing.min(n));
    let mut hidden = vec![false; n];
    let mut count = 0;
    while count < missing {
        let i = rng.random_range(0..n);
        if !hidden[i] {
            hidden[i] = true;
            count += 1;
        }
    }
    let proband = rng.random_range(0..n);
    let members = (0..n)
        .map(|i| {
            let age = rng.random_range(1.0..=80.0);
            let mut cause = rng.random_range(0..=causes);
            if cause == 1 && sex[i] == Sex::Male {
                cause = 0;
            }
            let ph = Phenotype { age, cause };
            let id = format!("m{i}");
            let mut ind = match parents[i] {
                None => Individual::founder(&id, sex[i], ph),
                Some((f, m)) => Individual::child(&id, &format!("m{f}"), &format!("m{m}"), sex[i], ph),
            };
            if !hidden[i] {
                ind = ind.with_carrier(Some(g[i].carrier()));
            }
            if i == proband {
                ind = ind.proband();
            }
            ind
        })
        .collect();
    Pedigree::new(id, members).expect("generated pedigree is valid")
}

/// Random `K`-cause model on a 80-year scale with the male breast
/// constraint on cause 1.
pub fn random_model(rng: &mut ChaCha8Rng, causes: usize) -> ModelParams {
    let cause_params = (0..causes)
        .map(|k| {
            let design = if k == 0 { Design::Genotype } else { Design::Full };
            let beta = (0..design.len()).map(|_| rng.random_range(-2.0..3.0)).collect();
            let degree = rng.random_range(1..=6);
            let gamma = (0..degree).map(|_| rng.random_range(0.0..0.8)).collect();
            CauseParams {
                design,
                beta,
                baseline: Baseline::Bernstein(BernsteinBaseline::new(gamma).unwrap()),
                nu: if rng.random_bool(0.8) { Some(rng.random_range(0.2..5.0)) } else { None },
            }
        })
        .collect();
    ModelParams {
        causes: cause_params,
        constraint: StructuralConstraint::male_breast(),
        time_scale: 80.0,
    }
}

pub fn random_frailty(rng: &mut ChaCha8Rng, causes: usize) -> FrailtyVector {
    FrailtyVector((0..causes).map(|_| rng.random_range(0.3..2.5)).collect())
}

/// `log Pr(H | G_obs)` by enumerating every genotype configuration
/// consistent with the observed carrier statuses.
pub fn brute_force_log_likelihood(p: &Pedigree, m: &ModelParams, xi: &FrailtyVector, prior: &[f64; 3]) -> f64 {
    let n = p.len();
    let phen: Vec<[f64; 2]> = p
        .members()
        .iter()
        .map(|ind| {
            let mut ph = ind.phenotype;
            ph.age = m.rescale(ph.age);
            [false, true].map(|g| {
                m.individual_log_likelihood(Covariates::new(g, ind.sex), ph, xi)
                    .unwrap()
            })
        })
        .collect();
    let allowed: Vec<Vec<usize>> = p
        .members()
        .iter()
        .map(|ind| (0..3).filter(|&s| STATES[s].consistent_with(ind.carrier)).collect())
        .collect();
    let mut idx = vec![0usize; n];
    // Log-space sums; phenotype terms underflow in large families.
    let (mut joint, mut norm) = (Vec::new(), Vec::new());
    loop {
        let mut w = 0.0;
        let mut h = 0.0;
        for i in 0..n {
            let s = allowed[i][idx[i]];
            w += match p.parents(i) {
                None => prior[s],
                Some((f, mo)) => transmission(STATES[s], STATES[allowed[mo][idx[mo]]], STATES[allowed[f][idx[f]]]),
            }
            .ln();
            h += phen[i][usize::from(STATES[s].carrier())];
        }
        if w > f64::NEG_INFINITY {
            norm.push(w);
            joint.push(w + h);
        }
        // Odometer increment.
        let mut i = 0;
        loop {
            if i == n {
                return log_sum_exp(&joint) - log_sum_exp(&norm);
            }
            idx[i] += 1;
            if idx[i] < allowed[i].len() {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
    }
}

pub fn log_sum_exp(x: &[f64]) -> f64 {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}
