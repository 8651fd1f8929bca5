//! Contact maps from residue coordinates.

use std::collections::HashMap;

use thiserror::Error;

use crate::corpus::{Coord, ProteinRecord};

pub const DEFAULT_CONTACT_CUTOFF: f64 = 8.0;
pub const DEFAULT_MIN_SEPARATION: usize = 6;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StructureError {
    #[error("protein {0} has no coordinates")]
    NoCoordinates(String),
    #[error("invalid contact parameters: {0}")]
    InvalidParams(String),
}

/// Contact definition: strictly closer than `dist_cutoff` angstroms and at
/// least `seq_sep` positions apart in sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactParams {
    pub dist_cutoff: f64,
    pub seq_sep: usize,
}

impl Default for ContactParams {
    fn default() -> Self {
        Self { dist_cutoff: DEFAULT_CONTACT_CUTOFF, seq_sep: DEFAULT_MIN_SEPARATION }
    }
}

/// Symmetric residue-pair contact relation for one protein.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContactMap {
    protein_id: String,
    len: usize,
    /// Residues with a known position.
    resolved: Vec<bool>,
    /// Row-major `len x len` adjacency.
    dense: Vec<bool>,
    /// Contact pairs with `i < j`, sorted.
    pairs: Vec<(usize, usize)>,
}

impl ContactMap {
    /// Builds a map from an explicit pair list. Pairs are symmetrised; self
    /// pairs and out-of-range indices are rejected by panicking, since callers
    /// construct these from validated data.
    pub fn from_pairs(
        protein_id: impl Into<String>,
        len: usize,
        resolved: Vec<bool>,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Self {
        assert_eq!(resolved.len(), len, "resolved mask length");
        let mut dense = vec![false; len * len];
        let mut sorted = Vec::new();
        for (a, b) in pairs {
            assert!(a < len && b < len && a != b, "invalid contact pair ({a}, {b})");
            let (i, j) = if a < b { (a, b) } else { (b, a) };
            if !dense[i * len + j] {
                dense[i * len + j] = true;
                dense[j * len + i] = true;
                sorted.push((i, j));
            }
        }
        sorted.sort_unstable();
        Self { protein_id: protein_id.into(), len, resolved, dense, pairs: sorted }
    }

    pub fn protein_id(&self) -> &str {
        &self.protein_id
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn contact(&self, i: usize, j: usize) -> bool {
        i < self.len && j < self.len && self.dense[i * self.len + j]
    }

    /// True when both residues have coordinates, i.e. the pair's contact
    /// status is actually known.
    pub fn is_resolved_pair(&self, i: usize, j: usize) -> bool {
        self.resolved[i] && self.resolved[j]
    }

    pub fn is_resolved(&self, i: usize) -> bool {
        self.resolved[i]
    }

    pub fn resolved_mask(&self) -> &[bool] {
        &self.resolved
    }

    /// Contact pairs with `i < j`.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn n_contacts(&self) -> usize {
        self.pairs.len()
    }
}

fn dist2(a: &Coord, b: &Coord) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Derives the contact map of a record using a uniform grid with cell size
/// equal to the cutoff, so only neighbouring cells are compared.
pub fn derive_contacts(record: &ProteinRecord, params: ContactParams) -> Result<ContactMap, StructureError> {
    if !(params.dist_cutoff > 0.0 && params.dist_cutoff.is_finite()) || params.seq_sep == 0 {
        return Err(StructureError::InvalidParams(format!("{params:?}")));
    }
    let coords = record
        .coords
        .as_ref()
        .ok_or_else(|| StructureError::NoCoordinates(record.id.clone()))?;
    let len = record.len();
    let resolved: Vec<bool> = coords.iter().map(Option::is_some).collect();
    let cutoff2 = params.dist_cutoff * params.dist_cutoff;
    let cell_of = |c: &Coord| -> [i64; 3] {
        [
            (c[0] / params.dist_cutoff).floor() as i64,
            (c[1] / params.dist_cutoff).floor() as i64,
            (c[2] / params.dist_cutoff).floor() as i64,
        ]
    };

    let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (i, c) in coords.iter().enumerate() {
        if let Some(c) = c {
            grid.entry(cell_of(c)).or_default().push(i);
        }
    }

    let mut pairs = Vec::new();
    for (i, ci) in coords.iter().enumerate() {
        let Some(ci) = ci else { continue };
        let [x, y, z] = cell_of(ci);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(members) = grid.get(&[x + dx, y + dy, z + dz]) else { continue };
                    for &j in members {
                        if j <= i || j - i < params.seq_sep {
                            continue;
                        }
                        let cj = coords[j].as_ref().expect("grid holds resolved residues only");
                        if dist2(ci, cj) < cutoff2 {
                            pairs.push((i, j));
                        }
                    }
                }
            }
        }
    }
    Ok(ContactMap::from_pairs(record.id.clone(), len, resolved, pairs))
}

/// Contact density over resolved ordered pairs: `(contacts, resolved pairs)`
/// counted over all `(i, j)` including the diagonal.
pub fn contact_density<'a>(maps: impl IntoIterator<Item = &'a ContactMap>) -> (u64, u64) {
    maps.into_iter().fold((0, 0), |(hits, total), m| {
        let n = m.resolved.iter().filter(|&&r| r).count() as u64;
        (hits + 2 * m.n_contacts() as u64, total + n * n)
    })
}
