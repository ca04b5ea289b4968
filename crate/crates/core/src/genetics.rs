//! Single-locus biallelic genotypes, Hardy–Weinberg founder priors and
//! Mendelian transmission.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Latent genotype; `A` is the mutated allele.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GenotypeState {
    Wildtype,      // aa
    Heterozygous,  // Aa
    Homozygous,    // AA
}

pub const STATES: [GenotypeState; 3] = [GenotypeState::Wildtype, GenotypeState::Heterozygous, GenotypeState::Homozygous];

impl GenotypeState {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn mutant_alleles(self) -> u8 {
        self as u8
    }

    /// Binary carrier status used by the hazard model.
    pub fn carrier(self) -> bool {
        self != GenotypeState::Wildtype
    }

    /// Whether an observed carrier status is compatible with this state.
    pub fn consistent_with(self, observed: Option<bool>) -> bool {
        observed.is_none_or(|c| c == self.carrier())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlleleFrequency(f64);

impl AlleleFrequency {
    pub const DEFAULT: f64 = 0.0006;

    pub fn new(phi: f64) -> Result<Self> {
        if phi > 0.0 && phi < 1.0 {
            Ok(Self(phi))
        } else {
            Err(Error::InvalidAlleleFrequency(phi))
        }
    }

    /// Allele frequency giving the requested carrier prevalence
    /// `1 - (1 - phi)^2`.
    pub fn from_carrier_prevalence(p: f64) -> Result<Self> {
        Self::new(1.0 - (1.0 - p).sqrt())
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for AlleleFrequency {
    fn default() -> Self {
        Self(Self::DEFAULT)
    }
}

/// Hardy–Weinberg genotype frequencies `((1-phi)^2, 2 phi (1-phi), phi^2)`.
pub fn founder_prior(phi: AlleleFrequency) -> [f64; 3] {
    let p = phi.0;
    let q = 1.0 - p;
    [q * q, 2.0 * p * q, p * p]
}

/// Prior carrier probability `1 - (1-phi)^2`, computed without cancellation.
pub fn carrier_prevalence(phi: AlleleFrequency) -> f64 {
    let p = phi.0;
    p * (2.0 - p)
}

fn gamete_mutant_prob(parent: GenotypeState) -> f64 {
    parent.mutant_alleles() as f64 / 2.0
}

/// `Pr(child | mother, father)` under Mendelian segregation without mutation.
pub fn transmission(child: GenotypeState, mother: GenotypeState, father: GenotypeState) -> f64 {
    let pm = gamete_mutant_prob(mother);
    let pf = gamete_mutant_prob(father);
    match child {
        GenotypeState::Wildtype => (1.0 - pm) * (1.0 - pf),
        GenotypeState::Heterozygous => pm * (1.0 - pf) + (1.0 - pm) * pf,
        GenotypeState::Homozygous => pm * pf,
    }
}

/// Transmission table indexed `[mother][father][child]`.
pub fn transmission_table() -> [[[f64; 3]; 3]; 3] {
    let mut t = [[[0.0; 3]; 3]; 3];
    for m in STATES {
        for f in STATES {
            for c in STATES {
                t[m.index()][f.index()][c.index()] = transmission(c, m, f);
            }
        }
    }
    t
}
