//! Synthetic ascertained cohorts on the 30-member three-generation template.
//!
//! Each family is generated from its own derived random stream, so the
//! output does not depend on the number of worker threads.

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pedigree::{Individual, Pedigree, Phenotype, Sex};
use crate::seeds;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub family_count: usize,
    /// Log hazard ratio of carriers, per cause.
    pub beta: Vec<f64>,
    /// Constant baseline hazards, per cause.
    pub baseline_rates: Vec<f64>,
    /// Frailties are Gamma(shape = rate = this value).
    pub frailty_precision: f64,
    pub frailty: bool,
    pub censoring_rate: f64,
    /// Carrier probability of a candidate proband.
    pub carrier_frequency: f64,
    /// Share of non-proband genotypes removed per family (rounded down).
    pub missing_fraction: f64,
    pub ascertainment_cause: usize,
    /// Candidate probands tried per family before giving up.
    pub max_attempts: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            family_count: 200,
            beta: vec![4.0, 10.0],
            baseline_rates: vec![0.1, 0.0005],
            frailty_precision: 0.25,
            frailty: true,
            censoring_rate: 2.0,
            carrier_frequency: 0.0001,
            missing_fraction: 0.5,
            ascertainment_cause: 2,
            max_attempts: 100_000_000,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("simulate: {m}")));
        if self.beta.len() != self.baseline_rates.len() || self.beta.is_empty() {
            return bad("beta and baseline_rates need one entry per cause");
        }
        if self.baseline_rates.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return bad("baseline rates must be nonnegative");
        }
        if !(self.frailty_precision > 0.0) || !(self.censoring_rate > 0.0) {
            return bad("frailty_precision and censoring_rate must be positive");
        }
        if !(0.0..=1.0).contains(&self.carrier_frequency) || !(0.0..=1.0).contains(&self.missing_fraction) {
            return bad("carrier_frequency and missing_fraction must lie in [0, 1]");
        }
        if self.ascertainment_cause == 0 || self.ascertainment_cause > self.beta.len() {
            return bad("ascertainment_cause must name a simulated cause");
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be positive");
        }
        Ok(())
    }

    pub fn causes(&self) -> usize {
        self.beta.len()
    }
}

/// How a template member's genotype is generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Proband,
    /// One of the proband's parents; exactly one is a carrier when the
    /// proband is.
    Parent,
    /// Sibling or child of the proband; carrier with probability 1/2 when
    /// the proband is.
    FirstDegree,
    /// Child of the given template member; carrier with probability 1/2
    /// when that member is.
    ChildOf(&'static str),
    /// Not genetically related to the proband; always a non-carrier.
    Unrelated,
}

pub struct TemplateMember {
    pub id: &'static str,
    pub parents: Option<(&'static str, &'static str)>,
    pub spouse: Option<&'static str>,
    pub sex: Sex,
    pub role: Role,
}

const fn tm(
    id: &'static str,
    parents: Option<(&'static str, &'static str)>,
    spouse: Option<&'static str>,
    sex: Sex,
    role: Role,
) -> TemplateMember {
    TemplateMember {
        id,
        parents,
        spouse,
        sex,
        role,
    }
}

use Role::*;
use Sex::{Female as F, Male as M};

/// The three-generation, 30-member template: founders 3x4 are the
/// proband's parents, 5x6 the parents of the proband's wife 2. Members
/// 15, 16, 25 and 26 are childless spouses of 9, 10, 7 and 8. There are
/// 12 founders and 18 non-founders.
pub const TEMPLATE: [TemplateMember; 30] = [
    tm("1", Some(("3", "4")), None, M, Proband),
    tm("2", Some(("5", "6")), None, F, Unrelated),
    tm("3", None, None, M, Parent),
    tm("4", None, None, F, Parent),
    tm("5", None, None, M, Unrelated),
    tm("6", None, None, F, Unrelated),
    tm("7", Some(("1", "2")), None, M, FirstDegree),
    tm("8", Some(("1", "2")), None, F, FirstDegree),
    tm("9", Some(("3", "4")), None, M, FirstDegree),
    tm("10", Some(("3", "4")), None, F, FirstDegree),
    tm("11", Some(("3", "4")), None, M, FirstDegree),
    tm("12", Some(("3", "4")), None, F, FirstDegree),
    tm("13", Some(("5", "6")), None, M, Unrelated),
    tm("14", Some(("5", "6")), None, F, Unrelated),
    tm("15", None, Some("9"), F, Unrelated),
    tm("16", None, Some("10"), M, Unrelated),
    tm("17", None, None, F, Unrelated),
    tm("18", None, None, M, Unrelated),
    tm("19", Some(("11", "17")), None, M, ChildOf("11")),
    tm("20", Some(("11", "17")), None, F, ChildOf("11")),
    tm("21", Some(("11", "17")), None, M, ChildOf("11")),
    tm("22", Some(("18", "12")), None, F, ChildOf("12")),
    tm("23", Some(("18", "12")), None, M, ChildOf("12")),
    tm("24", Some(("18", "12")), None, F, ChildOf("12")),
    tm("25", None, Some("7"), F, Unrelated),
    tm("26", None, Some("8"), M, Unrelated),
    tm("27", None, None, F, Unrelated),
    tm("28", None, None, M, Unrelated),
    tm("29", Some(("13", "27")), None, M, Unrelated),
    tm("30", Some(("28", "14")), None, F, Unrelated),
];

/// The template as an (unphenotyped) pedigree.
pub fn template_pedigree(family_id: &str) -> Pedigree {
    let members = TEMPLATE
        .iter()
        .map(|t| to_individual(t, Phenotype::censored(0.0), None))
        .collect();
    Pedigree::new(family_id, members).expect("template is a valid pedigree")
}

fn to_individual(t: &TemplateMember, phenotype: Phenotype, carrier: Option<bool>) -> Individual {
    let mut ind = match t.parents {
        Some((f, m)) => Individual::child(t.id, f, m, t.sex, phenotype),
        None => Individual::founder(t.id, t.sex, phenotype),
    };
    ind.carrier = carrier;
    ind.spouse = t.spouse.map(str::to_string);
    ind.is_proband = t.role == Proband;
    ind
}

fn exp_draw(rate: f64, rng: &mut ChaCha8Rng) -> f64 {
    if rate == 0.0 {
        return f64::INFINITY;
    }
    if rate.is_infinite() {
        return 0.0;
    }
    Exp::new(rate).expect("positive rate").sample(rng)
}

/// One `(Y, D)` draw: competing exponential causes with rates
/// `rate_k * xi_k * exp(beta_k G)` and exponential censoring.
pub fn event_time_sample(
    carrier: bool,
    beta: &[f64],
    rates: &[f64],
    xi: &[f64],
    censoring_rate: f64,
    rng: &mut ChaCha8Rng,
) -> Phenotype {
    let g = f64::from(u8::from(carrier));
    let mut best = Phenotype::censored(exp_draw(censoring_rate, rng));
    for k in 0..beta.len() {
        let t = exp_draw(rates[k] * xi[k] * (beta[k] * g).exp(), rng);
        if t < best.age {
            best = Phenotype::event(t, k + 1);
        }
    }
    best
}

fn draw_frailty(cfg: &SimulationConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if !cfg.frailty {
        return vec![1.0; cfg.causes()];
    }
    let dist = Gamma::new(cfg.frailty_precision, 1.0 / cfg.frailty_precision).expect("valid gamma");
    (0..cfg.causes()).map(|_| dist.sample(rng)).collect()
}

/// An unascertained candidate proband: carrier status, family frailty and
/// phenotype.
pub fn candidate_proband(cfg: &SimulationConfig, rng: &mut ChaCha8Rng) -> (bool, Vec<f64>, Phenotype) {
    let carrier = rng.random_bool(cfg.carrier_frequency);
    let xi = draw_frailty(cfg, rng);
    let ph = event_time_sample(carrier, &cfg.beta, &cfg.baseline_rates, &xi, cfg.censoring_rate, rng);
    (carrier, xi, ph)
}

/// Genotypes of the template members given the proband's.
pub fn propagate_genotypes(proband_carrier: bool, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let mut g = vec![false; TEMPLATE.len()];
    if !proband_carrier {
        return g;
    }
    let carrier_parent = if rng.random_bool(0.5) { "3" } else { "4" };
    for (i, t) in TEMPLATE.iter().enumerate() {
        g[i] = match t.role {
            Proband => true,
            Parent => t.id == carrier_parent,
            FirstDegree => rng.random_bool(0.5),
            ChildOf(parent) => {
                let p = TEMPLATE.iter().position(|x| x.id == parent).expect("template parent");
                g[p] && rng.random_bool(0.5)
            }
            Unrelated => false,
        };
    }
    g
}

/// One ascertained family.
pub fn simulate_family(cfg: &SimulationConfig, family_id: &str, rng: &mut ChaCha8Rng) -> Result<Pedigree> {
    let (carrier, xi, proband_ph) = {
        let mut attempts = 0;
        loop {
            attempts += 1;
            let c = candidate_proband(cfg, rng);
            if c.2.cause == cfg.ascertainment_cause {
                break c;
            }
            if attempts >= cfg.max_attempts {
                return Err(Error::SimulationStalled { attempts });
            }
        }
    };
    let genotypes = propagate_genotypes(carrier, rng);
    let mut members = Vec::with_capacity(TEMPLATE.len());
    for (i, t) in TEMPLATE.iter().enumerate() {
        let ph = if t.role == Proband {
            proband_ph
        } else {
            event_time_sample(genotypes[i], &cfg.beta, &cfg.baseline_rates, &xi, cfg.censoring_rate, rng)
        };
        members.push(to_individual(t, ph, Some(genotypes[i])));
    }
    let others: Vec<usize> = (0..members.len()).filter(|&i| !members[i].is_proband).collect();
    let masked = (cfg.missing_fraction * others.len() as f64).floor() as usize;
    for j in sample(rng, others.len(), masked) {
        members[others[j]].carrier = None;
    }
    Pedigree::new(family_id, members)
}

/// `family_count` ascertained families, identical for a given seed.
pub fn simulate_cohort(cfg: &SimulationConfig, seed: u64) -> Result<Vec<Pedigree>> {
    cfg.validate()?;
    (0..cfg.family_count)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeds::stream(seed, "simulate", i as u64);
            simulate_family(cfg, &format!("{}", i + 1), &mut rng)
        })
        .collect()
}

/// Counts of first-event causes (index 0 = censored) among `n`
/// unascertained candidate probands.
pub fn candidate_cause_counts(cfg: &SimulationConfig, n: u64, seed: u64) -> Vec<u64> {
    let mut rng = seeds::stream(seed, "calibration", 0);
    let mut counts = vec![0u64; cfg.causes() + 1];
    for _ in 0..n {
        counts[candidate_proband(cfg, &mut rng).2.cause] += 1;
    }
    counts
}
