use thiserror::Error;

use crate::pedigree::Violation;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("family {family}, row {row}: {message}")]
    MalformedRow {
        family: String,
        row: usize,
        message: String,
    },

    #[error("family {family}: {}", format_violations(.violations))]
    InvalidPedigree {
        family: String,
        violations: Vec<Violation>,
    },

    #[error("member {0:?} is not part of the pedigree")]
    UnknownMember(String),

    #[error("family {0}: observed genotypes have zero probability under Mendelian transmission")]
    ImpossiblePedigree(String),

    #[error("invalid cause index {cause} (model has {causes} causes)")]
    InvalidCause { cause: usize, causes: usize },

    #[error("time {0} outside the rescaled range [0, 1]")]
    TimeOutOfRange(f64),

    #[error("allele frequency {0} outside (0, 1)")]
    InvalidAlleleFrequency(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature did not converge: estimated error {estimate:.3e} > tolerance {tolerance:.1e}")]
    Quadrature { estimate: f64, tolerance: f64 },

    #[error("ascertainment probability is zero for family {family} ({detail})")]
    DegenerateAscertainment { family: String, detail: String },

    #[error("family {family}: proband does not satisfy the ascertainment rule (cause {found}, expected {expected})")]
    ProbandNotAscertained {
        family: String,
        found: usize,
        expected: usize,
    },

    #[error("non-finite log-posterior at initialization: {0}")]
    Initialization(String),

    #[error("simulation gave up after {attempts} ascertainment attempts")]
    SimulationStalled { attempts: u64 },

    #[error("estimator undefined: {0}")]
    Undefined(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
