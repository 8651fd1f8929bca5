//! Indicator functions `f(i, j)` over residue pairs.
//!
//! Pairwise properties (contacts) depend on both residues; token properties
//! (binding sites, PTMs, secondary structure classes, residue identity) only
//! on the attended-to residue `j`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AminoAcid, ProteinRecord, SecondaryStructure};
use crate::structure::{derive_contacts, ContactMap, ContactParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum IndicatorKind {
    Pairwise,
    Token,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum IndicatorData {
    Pairwise {
        len: usize,
        dense: Vec<bool>,
        /// Per-residue "status known" mask; `None` means everything is known.
        known: Option<Vec<bool>>,
    },
    Token {
        present: Vec<bool>,
    },
}

/// A property evaluated over one protein's residue pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropertyIndicator {
    name: String,
    data: IndicatorData,
}

impl PropertyIndicator {
    /// Pairwise indicator from an arbitrary predicate.
    pub fn pairwise_from_fn(name: impl Into<String>, len: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut dense = Vec::with_capacity(len * len);
        for i in 0..len {
            for j in 0..len {
                dense.push(f(i, j));
            }
        }
        Self { name: name.into(), data: IndicatorData::Pairwise { len, dense, known: None } }
    }

    /// Token indicator: `f(i, j) = 1` iff `j` is in `sites`. Out-of-range
    /// sites are ignored.
    pub fn token(name: impl Into<String>, len: usize, sites: impl IntoIterator<Item = usize>) -> Self {
        let mut present = vec![false; len];
        for s in sites {
            if s < len {
                present[s] = true;
            }
        }
        Self { name: name.into(), data: IndicatorData::Token { present } }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> IndicatorKind {
        match self.data {
            IndicatorData::Pairwise { .. } => IndicatorKind::Pairwise,
            IndicatorData::Token { .. } => IndicatorKind::Token,
        }
    }

    /// Number of residues the indicator is defined over.
    pub fn len(&self) -> usize {
        match &self.data {
            IndicatorData::Pairwise { len, .. } => *len,
            IndicatorData::Token { present } => present.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn eval(&self, i: usize, j: usize) -> bool {
        match &self.data {
            IndicatorData::Pairwise { len, dense, .. } => dense[i * len + j],
            IndicatorData::Token { present } => present[j],
        }
    }

    /// Whether `f(i, j)` reflects a known state. Pairs involving residues
    /// without coordinates are unknown for contact indicators; everything
    /// else is known.
    #[inline]
    pub fn is_known(&self, i: usize, j: usize) -> bool {
        match &self.data {
            IndicatorData::Pairwise { known: Some(k), .. } => k[i] && k[j],
            _ => true,
        }
    }

    /// Counts `(positives, total)` over the known population: ordered pairs
    /// for pairwise indicators, positions for token indicators.
    pub fn population_counts(&self) -> (u64, u64) {
        match &self.data {
            IndicatorData::Token { present } => {
                (present.iter().filter(|&&p| p).count() as u64, present.len() as u64)
            }
            IndicatorData::Pairwise { len, dense, known } => {
                let mut hits = 0u64;
                let mut total = 0u64;
                for i in 0..*len {
                    for j in 0..*len {
                        if known.as_ref().map_or(true, |k| k[i] && k[j]) {
                            total += 1;
                            hits += dense[i * len + j] as u64;
                        }
                    }
                }
                (hits, total)
            }
        }
    }
}

/// `f(i, j) = 1` iff residues `i` and `j` are in contact.
pub fn make_contact_indicator(map: &ContactMap) -> PropertyIndicator {
    let len = map.len();
    let mut dense = vec![false; len * len];
    for &(i, j) in map.pairs() {
        dense[i * len + j] = true;
        dense[j * len + i] = true;
    }
    let known = map.resolved_mask().to_vec();
    PropertyIndicator {
        name: Property::Contact.name(),
        data: IndicatorData::Pairwise { len, dense, known: Some(known) },
    }
}

/// `f(i, j) = 1` iff `j` is one of `sites`.
pub fn make_token_indicator(
    name: impl Into<String>,
    len: usize,
    sites: impl IntoIterator<Item = usize>,
) -> PropertyIndicator {
    PropertyIndicator::token(name, len, sites)
}

/// Produces a per-protein indicator for a named property. `None` means the
/// property can't be evaluated on that protein (e.g. contacts without
/// coordinates) and the protein is skipped.
pub trait IndicatorSource: Sync {
    fn name(&self) -> String;
    fn kind(&self) -> IndicatorKind;
    fn indicator(&self, record: &ProteinRecord) -> Option<PropertyIndicator>;
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown property {name:?}; valid names: {}", Property::valid_names().join(", "))]
pub struct UnknownProperty {
    pub name: String,
}

/// The properties exposed to the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Property {
    Contact,
    BindingSite,
    Ptm,
    SecondaryStructure(SsClass),
    AminoAcid(AminoAcid),
}

/// Secondary structure classes analysed as properties; `Other` is not one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SsClass {
    Helix,
    Strand,
    TurnBend,
}

impl SsClass {
    pub const ALL: [SsClass; 3] = [SsClass::Helix, SsClass::Strand, SsClass::TurnBend];

    pub fn label(self) -> SecondaryStructure {
        match self {
            SsClass::Helix => SecondaryStructure::Helix,
            SsClass::Strand => SecondaryStructure::Strand,
            SsClass::TurnBend => SecondaryStructure::TurnBend,
        }
    }
}

impl Property {
    pub fn name(&self) -> String {
        match self {
            Property::Contact => "contact".into(),
            Property::BindingSite => "binding_site".into(),
            Property::Ptm => "ptm".into(),
            Property::SecondaryStructure(SsClass::Helix) => "ss_helix".into(),
            Property::SecondaryStructure(SsClass::Strand) => "ss_strand".into(),
            Property::SecondaryStructure(SsClass::TurnBend) => "ss_turnbend".into(),
            Property::AminoAcid(aa) => format!("aa_{}", aa.code()),
        }
    }

    pub fn kind(&self) -> IndicatorKind {
        match self {
            Property::Contact => IndicatorKind::Pairwise,
            _ => IndicatorKind::Token,
        }
    }

    /// Every property, in CLI listing order.
    pub fn all() -> Vec<Property> {
        let mut v = vec![Property::Contact, Property::BindingSite, Property::Ptm];
        v.extend(SsClass::ALL.map(Property::SecondaryStructure));
        v.extend(AminoAcid::STANDARD.map(Property::AminoAcid));
        v
    }

    pub fn valid_names() -> Vec<String> {
        Property::all().iter().map(Property::name).collect()
    }

    /// Indicator for one record, using `params` for contacts.
    pub fn indicator_with(&self, record: &ProteinRecord, params: ContactParams) -> Option<PropertyIndicator> {
        let len = record.len();
        let name = self.name();
        match self {
            Property::Contact => derive_contacts(record, params).ok().map(|m| make_contact_indicator(&m)),
            Property::BindingSite => Some(make_token_indicator(name, len, record.binding_sites.iter().copied())),
            Property::Ptm => Some(make_token_indicator(name, len, record.ptm_sites.iter().copied())),
            Property::SecondaryStructure(class) => {
                let labels = record.ss_labels.as_ref()?;
                let target = class.label();
                Some(make_token_indicator(
                    name,
                    len,
                    labels.iter().enumerate().filter(|(_, &l)| l == target).map(|(i, _)| i),
                ))
            }
            Property::AminoAcid(aa) => Some(make_token_indicator(
                name,
                len,
                record.sequence.iter().enumerate().filter(|(_, &r)| r == *aa).map(|(i, _)| i),
            )),
        }
    }
}

impl IndicatorSource for Property {
    fn name(&self) -> String {
        Property::name(self)
    }

    fn kind(&self) -> IndicatorKind {
        Property::kind(self)
    }

    fn indicator(&self, record: &ProteinRecord) -> Option<PropertyIndicator> {
        self.indicator_with(record, ContactParams::default())
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Property {
    type Err = UnknownProperty;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || UnknownProperty { name: s.to_string() };
        match s {
            "contact" => Ok(Property::Contact),
            "binding_site" => Ok(Property::BindingSite),
            "ptm" => Ok(Property::Ptm),
            "ss_helix" => Ok(Property::SecondaryStructure(SsClass::Helix)),
            "ss_strand" => Ok(Property::SecondaryStructure(SsClass::Strand)),
            "ss_turnbend" => Ok(Property::SecondaryStructure(SsClass::TurnBend)),
            _ => {
                let letter = s.strip_prefix("aa_").ok_or_else(unknown)?;
                let mut chars = letter.chars();
                match (chars.next(), chars.next()) {
                    (Some(c), None) if c.is_ascii_uppercase() => {
                        AminoAcid::parse_standard(c).map(Property::AminoAcid).ok_or_else(unknown)
                    }
                    _ => Err(unknown()),
                }
            }
        }
    }
}

/// Adapts a closure into an [`IndicatorSource`].
pub struct FnSource<F> {
    name: String,
    kind: IndicatorKind,
    f: F,
}

impl<F> FnSource<F>
where
    F: Fn(&ProteinRecord) -> Option<PropertyIndicator> + Sync,
{
    pub fn new(name: impl Into<String>, kind: IndicatorKind, f: F) -> Self {
        Self { name: name.into(), kind, f }
    }
}

impl<F> IndicatorSource for FnSource<F>
where
    F: Fn(&ProteinRecord) -> Option<PropertyIndicator> + Sync,
{
    fn name(&self) -> String {
        self.name.clone()
    }

    fn kind(&self) -> IndicatorKind {
        self.kind
    }

    fn indicator(&self, record: &ProteinRecord) -> Option<PropertyIndicator> {
        (self.f)(record)
    }
}
