//! Brute-force oracles and random generators shared by integration tests.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use rand::Rng;

use protattn_core::corpus::ProteinRecord;
use protattn_core::properties::{FnSource, IndicatorKind, PropertyIndicator};
use protattn_core::synth::random_stochastic_attention;
use protattn_core::{AttentionSet, AttentionTensor, Corpus, TokenFlag};

/// Random layout: optional CLS, at least one residue, optional SEP, then
/// optional padding.
pub fn random_flags<R: Rng>(rng: &mut R, max_tokens: usize) -> Vec<TokenFlag> {
    loop {
        let mut flags = Vec::new();
        if rng.gen_bool(0.5) {
            flags.push(TokenFlag::Cls);
        }
        let n_res = rng.gen_range(1..=max_tokens);
        flags.extend(std::iter::repeat(TokenFlag::Residue).take(n_res));
        if rng.gen_bool(0.5) {
            flags.push(TokenFlag::Sep);
        }
        let pads = rng.gen_range(0..=2);
        flags.extend(std::iter::repeat(TokenFlag::Pad).take(pads));
        if flags.len() <= max_tokens {
            return flags;
        }
    }
}

/// A random pairwise indicator per protein, keyed by id.
pub type IndicatorTable = HashMap<String, (usize, Vec<bool>)>;

pub struct RandomCase {
    pub corpus: Corpus,
    pub tensors: AttentionSet,
    pub indicators: IndicatorTable,
}

pub fn random_case<R: Rng>(rng: &mut R, max_proteins: usize, max_tokens: usize, n_layers: usize, n_heads: usize) -> RandomCase {
    let n = rng.gen_range(1..=max_proteins);
    let mut records = Vec::new();
    let mut tensors = AttentionSet::new();
    let mut indicators = IndicatorTable::new();
    let density = rng.gen_range(0.0..1.0);
    for p in 0..n {
        let id = format!("r{p}");
        let flags = random_flags(rng, max_tokens);
        let len = flags.iter().filter(|f| **f == TokenFlag::Residue).count();
        let seq: String = (0..len).map(|_| "ACDEFGHIKLMNPQRSTVWY".as_bytes()[rng.gen_range(0..20)] as char).collect();
        records.push(ProteinRecord::from_sequence(id.clone(), &seq));
        tensors.insert(id.clone(), random_stochastic_attention(&id, flags, n_layers, n_heads, rng));
        indicators.insert(id, (len, (0..len * len).map(|_| rng.gen_bool(density)).collect()));
    }
    RandomCase { corpus: Corpus::from_records(records).unwrap(), tensors, indicators }
}

pub fn table_source(table: IndicatorTable) -> impl protattn_core::IndicatorSource {
    FnSource::new("random", IndicatorKind::Pairwise, move |r: &ProteinRecord| {
        let (len, dense) = table.get(&r.id)?;
        let len = *len;
        let dense = dense.clone();
        Some(PropertyIndicator::pairwise_from_fn("random", len, move |i, j| dense[i * len + j]))
    })
}

/// Per-head `(hits, arcs, weighted_hits, mass)` by a direct loop over
/// proteins, heads, source tokens and target tokens.
pub fn brute_force(
    case: &RandomCase,
    theta: f64,
    exclude: &BTreeSet<TokenFlag>,
) -> Vec<(u64, u64, f64, f64)> {
    let first = case.tensors.values().next().unwrap();
    let (nl, nh) = (first.n_layers(), first.n_heads());
    let mut out = vec![(0u64, 0u64, 0.0f64, 0.0f64); nl * nh];
    for record in case.corpus.iter() {
        let t: &AttentionTensor = &case.tensors[&record.id];
        let (len, dense) = &case.indicators[&record.id];
        let flags = t.flags();
        let residue = |tok: usize| flags[..tok].iter().filter(|f| **f == TokenFlag::Residue).count();
        for l in 0..nl {
            for h in 0..nh {
                let acc = &mut out[l * nh + h];
                for i in 0..flags.len() {
                    if flags[i] != TokenFlag::Residue {
                        continue;
                    }
                    for j in 0..flags.len() {
                        if flags[j] == TokenFlag::Pad || exclude.contains(&flags[j]) {
                            continue;
                        }
                        let w = t.weight(l, h, i, j);
                        let f = flags[j] == TokenFlag::Residue && dense[residue(i) * len + residue(j)];
                        acc.3 += w as f64;
                        if f {
                            acc.2 += w as f64;
                        }
                        if w > theta as f32 {
                            acc.1 += 1;
                            if f {
                                acc.0 += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// All pairs `i < j` with `j - i >= seq_sep`, both resolved and closer than
/// `cutoff`, by direct enumeration.
pub fn brute_force_contacts(coords: &[Option<[f64; 3]>], cutoff: f64, seq_sep: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..coords.len() {
        for j in i + 1..coords.len() {
            if j - i < seq_sep {
                continue;
            }
            if let (Some(a), Some(b)) = (coords[i], coords[j]) {
                let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
                if d < cutoff {
                    out.push((i, j));
                }
            }
        }
    }
    out
}

pub fn random_coords<R: Rng>(rng: &mut R, len: usize, box_size: f64, missing: f64) -> Vec<Option<[f64; 3]>> {
    (0..len)
        .map(|_| {
            (!rng.gen_bool(missing)).then(|| {
                [rng.gen_range(-box_size..box_size), rng.gen_range(-box_size..box_size), rng.gen_range(-box_size..box_size)]
            })
        })
        .collect()
}

/// The collinear fixture: residues 1.2 A apart on a line.
pub fn collinear_record(len: usize) -> ProteinRecord {
    let mut r = ProteinRecord::from_sequence("line", &"A".repeat(len));
    r.coords = Some((0..len).map(|i| Some([1.2 * i as f64, 0.0, 0.0])).collect());
    r
}
