//! Families as loop-free pedigree graphs.
//!
//! A [`Pedigree`] is immutable once built: construction validates the
//! structure (parent references, parent sexes, single proband, no loops in
//! the marriage graph, connectedness) and precomputes the index tables the
//! peeling engine walks.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sex {
    Male,
    Female,
}

impl Sex {
    /// Covariate coding: 1 for male, 0 for female.
    pub fn covariate(self) -> f64 {
        match self {
            Sex::Male => 1.0,
            Sex::Female => 0.0,
        }
    }

    fn code(self) -> &'static str {
        match self {
            Sex::Male => "M",
            Sex::Female => "F",
        }
    }
}

/// Observed time-to-event record `(Y, D)`; `cause == 0` means censored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phenotype {
    pub age: f64,
    pub cause: usize,
}

impl Phenotype {
    pub fn censored(age: f64) -> Self {
        Self { age, cause: 0 }
    }

    pub fn event(age: f64, cause: usize) -> Self {
        Self { age, cause }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub id: String,
    pub father: Option<String>,
    pub mother: Option<String>,
    pub sex: Sex,
    /// Observed carrier status; `None` when not genotyped.
    pub carrier: Option<bool>,
    pub phenotype: Phenotype,
    pub is_proband: bool,
    #[serde(default)]
    pub is_counselee: bool,
    /// Declared partner; needed only for couples without children.
    #[serde(default)]
    pub spouse: Option<String>,
}

impl Individual {
    pub fn founder(id: &str, sex: Sex, phenotype: Phenotype) -> Self {
        Self {
            id: id.to_string(),
            father: None,
            mother: None,
            sex,
            carrier: None,
            phenotype,
            is_proband: false,
            is_counselee: false,
            spouse: None,
        }
    }

    pub fn child(id: &str, father: &str, mother: &str, sex: Sex, phenotype: Phenotype) -> Self {
        Self {
            father: Some(father.to_string()),
            mother: Some(mother.to_string()),
            ..Self::founder(id, sex, phenotype)
        }
    }

    pub fn with_carrier(mut self, carrier: Option<bool>) -> Self {
        self.carrier = carrier;
        self
    }

    pub fn with_spouse(mut self, spouse: &str) -> Self {
        self.spouse = Some(spouse.to_string());
        self
    }

    pub fn proband(mut self) -> Self {
        self.is_proband = true;
        self
    }

    pub fn is_founder(&self) -> bool {
        self.father.is_none() && self.mother.is_none()
    }
}

/// One structural problem found by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    DuplicateId(String),
    SingleParent(String),
    SelfParent(String),
    MissingParent { id: String, parent: String },
    FatherNotMale { id: String, father: String },
    MotherNotFemale { id: String, mother: String },
    OwnAncestor(String),
    MarriageLoop { cycles: usize },
    Disconnected { components: usize },
    ProbandCount(usize),
    InvalidAge(String),
    MissingSpouse { id: String, spouse: String },
    SpouseSameSex { id: String, spouse: String },
}

impl Violation {
    /// Member the violation is attached to, when there is one.
    pub fn member(&self) -> Option<&str> {
        match self {
            Violation::DuplicateId(id)
            | Violation::SingleParent(id)
            | Violation::SelfParent(id)
            | Violation::OwnAncestor(id)
            | Violation::InvalidAge(id) => Some(id),
            Violation::MissingParent { id, .. }
            | Violation::FatherNotMale { id, .. }
            | Violation::MotherNotFemale { id, .. }
            | Violation::MissingSpouse { id, .. }
            | Violation::SpouseSameSex { id, .. } => Some(id),
            _ => None,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateId(id) => write!(f, "duplicate id {id}"),
            Violation::SingleParent(id) => write!(f, "{id} has exactly one parent"),
            Violation::SelfParent(id) => write!(f, "{id} is listed as its own parent"),
            Violation::MissingParent { id, parent } => {
                write!(f, "missing parent {parent} referenced by {id}")
            }
            Violation::FatherNotMale { id, father } => {
                write!(f, "father {father} of {id} is not male")
            }
            Violation::MotherNotFemale { id, mother } => {
                write!(f, "mother {mother} of {id} is not female")
            }
            Violation::OwnAncestor(id) => write!(f, "{id} is their own ancestor"),
            Violation::MarriageLoop { cycles } => {
                write!(f, "pedigree contains {cycles} loop(s)")
            }
            Violation::Disconnected { components } => {
                write!(f, "pedigree has {components} disconnected components")
            }
            Violation::ProbandCount(n) => write!(f, "expected exactly one proband, found {n}"),
            Violation::InvalidAge(id) => write!(f, "{id} has a negative or non-finite age"),
            Violation::MissingSpouse { id, spouse } => {
                write!(f, "missing spouse {spouse} referenced by {id}")
            }
            Violation::SpouseSameSex { id, spouse } => {
                write!(f, "{id} and spouse {spouse} have the same sex")
            }
        }
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    /// Returns false when `a` and `b` were already joined.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.0[ra] = rb;
        true
    }
}

/// Checks every structural invariant; an empty report means the members form
/// a valid pedigree.
pub fn validate(members: &[Individual]) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for (i, m) in members.iter().enumerate() {
        if index.insert(m.id.as_str(), i).is_some() {
            out.push(Violation::DuplicateId(m.id.clone()));
        }
        if !(m.phenotype.age.is_finite() && m.phenotype.age >= 0.0) {
            out.push(Violation::InvalidAge(m.id.clone()));
        }
    }

    let probands = members.iter().filter(|m| m.is_proband).count();
    if probands != 1 {
        out.push(Violation::ProbandCount(probands));
    }

    // Resolved (father, mother) per member.
    let mut parents: Vec<Option<(usize, usize)>> = vec![None; members.len()];
    for (i, m) in members.iter().enumerate() {
        match (&m.father, &m.mother) {
            (None, None) => {}
            (Some(_), None) | (None, Some(_)) => out.push(Violation::SingleParent(m.id.clone())),
            (Some(fa), Some(mo)) => {
                if fa == &m.id || mo == &m.id {
                    out.push(Violation::SelfParent(m.id.clone()));
                    continue;
                }
                let fi = index.get(fa.as_str()).copied();
                let mi = index.get(mo.as_str()).copied();
                if fi.is_none() {
                    out.push(Violation::MissingParent {
                        id: m.id.clone(),
                        parent: fa.clone(),
                    });
                }
                if mi.is_none() {
                    out.push(Violation::MissingParent {
                        id: m.id.clone(),
                        parent: mo.clone(),
                    });
                }
                if let (Some(fi), Some(mi)) = (fi, mi) {
                    if members[fi].sex != Sex::Male {
                        out.push(Violation::FatherNotMale {
                            id: m.id.clone(),
                            father: fa.clone(),
                        });
                    }
                    if members[mi].sex != Sex::Female {
                        out.push(Violation::MotherNotFemale {
                            id: m.id.clone(),
                            mother: mo.clone(),
                        });
                    }
                    parents[i] = Some((fi, mi));
                }
            }
        }
    }

    let couples = declared_couples(members, &index, &mut out);

    // Ancestry cycles: Kahn's algorithm on parent -> child edges.
    let mut indegree = vec![0usize; members.len()];
    let mut kids: Vec<Vec<usize>> = vec![Vec::new(); members.len()];
    for (i, p) in parents.iter().enumerate() {
        if let Some((f, m)) = *p {
            kids[f].push(i);
            kids[m].push(i);
            indegree[i] += 2;
        }
    }
    let mut queue: VecDeque<usize> = (0..members.len()).filter(|&i| indegree[i] == 0).collect();
    let mut seen = 0;
    while let Some(i) = queue.pop_front() {
        seen += 1;
        for &c in &kids[i] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                queue.push_back(c);
            }
        }
    }
    if seen < members.len() {
        for (i, d) in indegree.iter().enumerate() {
            if *d > 0 {
                out.push(Violation::OwnAncestor(members[i].id.clone()));
            }
        }
    }

    // Marriage graph: individuals plus one node per parental pair.
    let mut mating_ids: HashMap<(usize, usize), usize> = HashMap::new();
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for (i, p) in parents.iter().enumerate() {
        if let Some(pair) = *p {
            let next = members.len() + mating_ids.len();
            let node = *mating_ids.entry(pair).or_insert_with(|| {
                edges.push((pair.0, next));
                edges.push((pair.1, next));
                next
            });
            edges.push((node, i));
        }
    }
    for pair in couples {
        let next = members.len() + mating_ids.len();
        mating_ids.entry(pair).or_insert_with(|| {
            edges.push((pair.0, next));
            edges.push((pair.1, next));
            next
        });
    }
    let mut uf = UnionFind::new(members.len() + mating_ids.len());
    let cycles = edges.iter().filter(|&&(a, b)| !uf.union(a, b)).count();
    if cycles > 0 {
        out.push(Violation::MarriageLoop { cycles });
    }
    let roots: BTreeSet<usize> = (0..members.len() + mating_ids.len())
        .map(|i| uf.find(i))
        .collect();
    if roots.len() > 1 && !members.is_empty() {
        out.push(Violation::Disconnected {
            components: roots.len(),
        });
    }
    out
}

/// `(father, mother)` pairs declared through the spouse column, each once.
fn declared_couples(
    members: &[Individual],
    index: &HashMap<&str, usize>,
    out: &mut Vec<Violation>,
) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for (i, m) in members.iter().enumerate() {
        let Some(sp) = &m.spouse else { continue };
        let Some(&j) = index.get(sp.as_str()) else {
            out.push(Violation::MissingSpouse {
                id: m.id.clone(),
                spouse: sp.clone(),
            });
            continue;
        };
        if members[j].sex == m.sex {
            out.push(Violation::SpouseSameSex {
                id: m.id.clone(),
                spouse: sp.clone(),
            });
            continue;
        }
        let pair = if m.sex == Sex::Male { (i, j) } else { (j, i) };
        if !pairs.contains(&pair) {
            pairs.push(pair);
        }
    }
    pairs
}

/// A nuclear family: one parental pair and its children.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mating {
    pub father: usize,
    pub mother: usize,
    pub children: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Pedigree {
    family_id: String,
    members: Vec<Individual>,
    index: HashMap<String, usize>,
    parents: Vec<Option<(usize, usize)>>,
    matings: Vec<Mating>,
    parent_mating: Vec<Option<usize>>,
    own_matings: Vec<Vec<usize>>,
    proband: usize,
    order: Vec<usize>,
}

impl PartialEq for Pedigree {
    fn eq(&self, other: &Self) -> bool {
        self.family_id == other.family_id && self.members == other.members
    }
}

impl Pedigree {
    pub fn new(family_id: impl Into<String>, members: Vec<Individual>) -> Result<Self> {
        let family_id = family_id.into();
        let violations = validate(&members);
        if !violations.is_empty() {
            return Err(Error::InvalidPedigree {
                family: family_id,
                violations,
            });
        }
        let index: HashMap<String, usize> = members
            .iter()
            .enumerate()
            .map(|(i, m)| (m.id.clone(), i))
            .collect();
        let parents: Vec<Option<(usize, usize)>> = members
            .iter()
            .map(|m| match (&m.father, &m.mother) {
                (Some(f), Some(mo)) => Some((index[f], index[mo])),
                _ => None,
            })
            .collect();
        let mut matings: Vec<Mating> = Vec::new();
        let mut mating_of: HashMap<(usize, usize), usize> = HashMap::new();
        let mut parent_mating = vec![None; members.len()];
        let mut own_matings = vec![Vec::new(); members.len()];
        for (i, p) in parents.iter().enumerate() {
            if let Some((f, m)) = *p {
                let u = *mating_of.entry((f, m)).or_insert_with(|| {
                    matings.push(Mating {
                        father: f,
                        mother: m,
                        children: Vec::new(),
                    });
                    own_matings[f].push(matings.len() - 1);
                    own_matings[m].push(matings.len() - 1);
                    matings.len() - 1
                });
                matings[u].children.push(i);
                parent_mating[i] = Some(u);
            }
        }
        let index_ref: HashMap<&str, usize> =
            members.iter().enumerate().map(|(i, m)| (m.id.as_str(), i)).collect();
        for (f, m) in declared_couples(&members, &index_ref, &mut Vec::new()) {
            if !mating_of.contains_key(&(f, m)) {
                mating_of.insert((f, m), matings.len());
                matings.push(Mating {
                    father: f,
                    mother: m,
                    children: Vec::new(),
                });
                own_matings[f].push(matings.len() - 1);
                own_matings[m].push(matings.len() - 1);
            }
        }
        let proband = members.iter().position(|m| m.is_proband).expect("validated");
        let order = topological_order(&parents);
        Ok(Self {
            family_id,
            members,
            index,
            parents,
            matings,
            parent_mating,
            own_matings,
            proband,
            order,
        })
    }

    pub fn family_id(&self) -> &str {
        &self.family_id
    }

    pub fn members(&self) -> &[Individual] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn member(&self, i: usize) -> &Individual {
        &self.members[i]
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownMember(id.to_string()))
    }

    pub fn proband(&self) -> usize {
        self.proband
    }

    pub fn parents(&self, i: usize) -> Option<(usize, usize)> {
        self.parents[i]
    }

    pub fn matings(&self) -> &[Mating] {
        &self.matings
    }

    pub fn parent_mating(&self, i: usize) -> Option<usize> {
        self.parent_mating[i]
    }

    pub fn own_matings(&self, i: usize) -> &[usize] {
        &self.own_matings[i]
    }

    pub fn founders(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| self.parents[i].is_none())
    }

    /// Member indices with parents before children.
    pub fn topological_order(&self) -> &[usize] {
        &self.order
    }

    /// Re-runs the structural checks; always empty for a constructed value.
    pub fn validate(&self) -> Vec<Violation> {
        validate(&self.members)
    }

    /// Copy of this pedigree with member `i` replaced by `f(member)`.
    /// The structure must stay valid.
    pub fn map_member(&self, i: usize, f: impl FnOnce(&mut Individual)) -> Result<Self> {
        let mut members = self.members.clone();
        f(&mut members[i]);
        Pedigree::new(self.family_id.clone(), members)
    }

    /// Splits the other members into those connected to `pivot` through its
    /// parents (anterior) and those connected through its spouses and
    /// offspring (posterior).
    pub fn anterior_posterior_partition(
        &self,
        pivot: usize,
    ) -> Result<(BTreeSet<usize>, BTreeSet<usize>)> {
        if pivot >= self.len() {
            return Err(Error::UnknownMember(format!("#{pivot}")));
        }
        let anterior = match self.parent_mating[pivot] {
            Some(u) => self.reach_from_mating(u, pivot),
            None => BTreeSet::new(),
        };
        let mut posterior = BTreeSet::new();
        for &u in &self.own_matings[pivot] {
            posterior.extend(self.reach_from_mating(u, pivot));
        }
        Ok((anterior, posterior))
    }

    // Individuals reachable from mating node `start` without passing `blocked`.
    fn reach_from_mating(&self, start: usize, blocked: usize) -> BTreeSet<usize> {
        let mut seen_ind = BTreeSet::new();
        let mut seen_mat = BTreeSet::from([start]);
        let mut stack = vec![start];
        while let Some(u) = stack.pop() {
            let m = &self.matings[u];
            for &i in [m.father, m.mother].iter().chain(&m.children) {
                if i == blocked || !seen_ind.insert(i) {
                    continue;
                }
                let nbrs = self.parent_mating[i].iter().chain(&self.own_matings[i]);
                for &v in nbrs {
                    if seen_mat.insert(v) {
                        stack.push(v);
                    }
                }
            }
        }
        seen_ind
    }
}

fn topological_order(parents: &[Option<(usize, usize)>]) -> Vec<usize> {
    let n = parents.len();
    let mut placed = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let before = order.len();
        for i in 0..n {
            if placed[i] {
                continue;
            }
            let ready = match parents[i] {
                None => true,
                Some((f, m)) => placed[f] && placed[m],
            };
            if ready {
                placed[i] = true;
                order.push(i);
            }
        }
        assert!(order.len() > before, "validated pedigree has no ancestry cycle");
    }
    order
}

const COLUMNS: [&str; 9] = [
    "family_id",
    "individual_id",
    "father_id",
    "mother_id",
    "sex",
    "genotype",
    "age",
    "cause",
    "proband",
];

/// Reads pedigrees from delimited text (tab or comma, detected from the
/// header). Families appear in order of first occurrence.
pub fn load_pedigrees<R: Read>(mut source: R) -> Result<Vec<Pedigree>> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let header_line = text.lines().next().unwrap_or("");
    let delimiter = if header_line.contains('\t') { b'\t' } else { b',' };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let mut cols = [0usize; 9];
    for (slot, name) in cols.iter_mut().zip(COLUMNS) {
        *slot = col(name).ok_or_else(|| Error::MalformedRow {
            family: String::new(),
            row: 1,
            message: format!("missing column {name}"),
        })?;
    }
    let counselee_col = col("counselee");
    let spouse_col = col("spouse_id");

    let mut families: Vec<(String, Vec<Individual>, Vec<usize>)> = Vec::new();
    let mut family_pos: HashMap<String, usize> = HashMap::new();
    for (n, record) in reader.records().enumerate() {
        let record = record?;
        let row = record.position().map(|p| p.line() as usize).unwrap_or(n + 2);
        let field = |c: usize| record.get(c).unwrap_or("");
        let family = field(cols[0]).to_string();
        let bad = |message: String| Error::MalformedRow {
            family: family.clone(),
            row,
            message,
        };
        if family.is_empty() {
            return Err(bad("empty family_id".into()));
        }
        let id = field(cols[1]);
        if id.is_empty() {
            return Err(bad("empty individual_id".into()));
        }
        let optional = |s: &str| match s {
            "" | "0" | "NA" | "." => None,
            s => Some(s.to_string()),
        };
        let sex = match field(cols[4]) {
            "M" | "m" | "1" => Sex::Male,
            "F" | "f" | "2" => Sex::Female,
            other => return Err(bad(format!("sex must be M or F, got {other:?}"))),
        };
        let carrier = match field(cols[5]) {
            "0" => Some(false),
            "1" => Some(true),
            "NA" | "" | "." => None,
            other => return Err(bad(format!("genotype must be 0, 1 or NA, got {other:?}"))),
        };
        let age: f64 = field(cols[6])
            .parse()
            .map_err(|_| bad(format!("age is not a number: {:?}", field(cols[6]))))?;
        if !(age.is_finite() && age >= 0.0) {
            return Err(bad(format!("age must be nonnegative, got {age}")));
        }
        let cause: usize = field(cols[7])
            .parse()
            .map_err(|_| bad(format!("cause is not a nonnegative integer: {:?}", field(cols[7]))))?;
        let flag = |s: &str, what: &str| match s {
            "0" | "" => Ok(false),
            "1" => Ok(true),
            other => Err(bad(format!("{what} must be 0 or 1, got {other:?}"))),
        };
        let is_proband = flag(field(cols[8]), "proband")?;
        let is_counselee = match counselee_col {
            Some(c) => flag(field(c), "counselee")?,
            None => false,
        };
        let ind = Individual {
            id: id.to_string(),
            father: optional(field(cols[2])),
            mother: optional(field(cols[3])),
            sex,
            carrier,
            phenotype: Phenotype { age, cause },
            is_proband,
            is_counselee,
            spouse: spouse_col.and_then(|c| optional(field(c))),
        };
        let pos = *family_pos.entry(family.clone()).or_insert_with(|| {
            families.push((family.clone(), Vec::new(), Vec::new()));
            families.len() - 1
        });
        families[pos].1.push(ind);
        families[pos].2.push(row);
    }

    families
        .into_iter()
        .map(|(family, members, rows)| {
            let violations = validate(&members);
            if violations.is_empty() {
                return Pedigree::new(family, members);
            }
            let row = violations
                .iter()
                .find_map(|v| v.member())
                .and_then(|id| members.iter().position(|m| m.id == id))
                .map(|i| rows[i])
                .unwrap_or(rows[0]);
            Err(Error::MalformedRow {
                family: family.clone(),
                row,
                message: Error::InvalidPedigree { family, violations }.to_string(),
            })
        })
        .collect()
}

/// Writes pedigrees in the tab-delimited file format read by
/// [`load_pedigrees`].
pub fn write_pedigrees<W: Write>(mut out: W, pedigrees: &[Pedigree]) -> Result<()> {
    let with_counselee = pedigrees
        .iter()
        .any(|p| p.members.iter().any(|m| m.is_counselee));
    let with_spouse = pedigrees
        .iter()
        .any(|p| p.members.iter().any(|m| m.spouse.is_some()));
    let mut header = COLUMNS.join("\t");
    if with_counselee {
        header.push_str("\tcounselee");
    }
    if with_spouse {
        header.push_str("\tspouse_id");
    }
    writeln!(out, "{header}")?;
    for p in pedigrees {
        for m in &p.members {
            let genotype = match m.carrier {
                Some(true) => "1",
                Some(false) => "0",
                None => "NA",
            };
            write!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                p.family_id,
                m.id,
                m.father.as_deref().unwrap_or(""),
                m.mother.as_deref().unwrap_or(""),
                m.sex.code(),
                genotype,
                m.phenotype.age,
                m.phenotype.cause,
                u8::from(m.is_proband),
            )?;
            if with_counselee {
                write!(out, "\t{}", u8::from(m.is_counselee))?;
            }
            if with_spouse {
                write!(out, "\t{}", m.spouse.as_deref().unwrap_or(""))?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}
