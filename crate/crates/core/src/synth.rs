//! Synthetic corpora and tensors for tests, benchmarks and fixtures.
//!
//! Everything here is deterministic given its seed. Per-protein streams are
//! keyed by protein id, so generating a subset of a corpus yields the same
//! tensors as generating all of it.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{AminoAcid, Coord, Corpus, ProteinRecord, SecondaryStructure};
use crate::stats::row_stream_seed;
use crate::structure::{derive_contacts, ContactParams};
use crate::tensors::{AttentionSet, AttentionTensor, EmbeddingTensor, TokenFlag};

/// Distance between consecutive residues in the generated chains.
const BOND_LENGTH: f64 = 3.8;

fn protein_rng(seed: u64, id: &str, stream: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(row_stream_seed(seed, id, stream, 0, 0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub n_proteins: usize,
    /// Inclusive length range.
    pub min_len: usize,
    pub max_len: usize,
    pub binding_rate: f64,
    /// Every protein gets at least this many binding sites.
    pub min_binding_sites: usize,
    pub ptm_rate: f64,
    /// Fraction of residues whose coordinates are dropped.
    pub missing_coord_rate: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            n_proteins: 20,
            min_len: 20,
            max_len: 40,
            binding_rate: 0.08,
            min_binding_sites: 1,
            ptm_rate: 0.03,
            missing_coord_rate: 0.0,
            seed: 0,
        }
    }
}

/// A compact chain: a random walk with fixed bond length confined to a
/// sphere, so that sequence-distant residues come into contact.
pub fn globule_coords<R: Rng>(len: usize, rng: &mut R) -> Vec<Coord> {
    let radius = 3.0 * (len.max(1) as f64).cbrt() + BOND_LENGTH;
    let mut coords: Vec<Coord> = Vec::with_capacity(len);
    let mut pos = [0.0f64; 3];
    for _ in 0..len {
        coords.push(pos);
        let mut next = pos;
        for _ in 0..64 {
            let dir = random_unit(rng);
            next = [pos[0] + BOND_LENGTH * dir[0], pos[1] + BOND_LENGTH * dir[1], pos[2] + BOND_LENGTH * dir[2]];
            let r2: f64 = next.iter().map(|v| v * v).sum();
            if r2 <= radius * radius {
                break;
            }
        }
        pos = next;
    }
    coords
}

fn random_unit<R: Rng>(rng: &mut R) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let n2: f64 = v.iter().map(|x| x * x).sum();
        if n2 > 1e-6 && n2 <= 1.0 {
            let n = n2.sqrt();
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

/// Secondary structure as runs of random length.
fn ss_runs<R: Rng>(len: usize, rng: &mut R) -> Vec<SecondaryStructure> {
    const CLASSES: [SecondaryStructure; 4] = [
        SecondaryStructure::Helix,
        SecondaryStructure::Strand,
        SecondaryStructure::TurnBend,
        SecondaryStructure::Other,
    ];
    let mut out = Vec::with_capacity(len);
    while out.len() < len {
        let class = CLASSES[rng.gen_range(0..4)];
        let run = rng.gen_range(2..8).min(len - out.len());
        out.extend(std::iter::repeat(class).take(run));
    }
    out
}

fn random_sites<R: Rng>(len: usize, rate: f64, min: usize, rng: &mut R) -> std::collections::BTreeSet<usize> {
    let mut sites: std::collections::BTreeSet<usize> = (0..len).filter(|_| rng.gen_bool(rate)).collect();
    let mut all: Vec<usize> = (0..len).collect();
    all.shuffle(rng);
    for i in all {
        if sites.len() >= min.min(len) {
            break;
        }
        sites.insert(i);
    }
    sites
}

/// One random annotated protein.
pub fn random_record(id: &str, len: usize, spec: &CorpusSpec) -> ProteinRecord {
    let mut rng = protein_rng(spec.seed, id, 0);
    let sequence: String = (0..len).map(|_| AminoAcid::STANDARD[rng.gen_range(0..20)].code()).collect();
    let mut record = ProteinRecord::from_sequence(id, &sequence);
    let coords = globule_coords(len, &mut rng)
        .into_iter()
        .map(|c| (!rng.gen_bool(spec.missing_coord_rate)).then_some(c))
        .collect();
    record.coords = Some(coords);
    record.ss_labels = Some(ss_runs(len, &mut rng));
    record.binding_sites = random_sites(len, spec.binding_rate, spec.min_binding_sites, &mut rng);
    record.ptm_sites = random_sites(len, spec.ptm_rate, 0, &mut rng);
    record
}

/// Protein ids are `syn0000`, `syn0001`, ...
pub fn random_corpus(spec: &CorpusSpec) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let records = (0..spec.n_proteins)
        .map(|i| {
            let len = rng.gen_range(spec.min_len..=spec.max_len);
            random_record(&format!("syn{i:04}"), len, spec)
        })
        .collect();
    Corpus::from_records(records).expect("generated ids are unique")
}

/// What a planted head attends to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlantTarget {
    Contact,
    BindingSite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionSpec {
    pub n_layers: usize,
    pub n_heads: usize,
    /// Wrap residues in CLS ... SEP.
    pub special_tokens: bool,
    /// Trailing PAD tokens.
    pub pad_tokens: usize,
    /// Weight given to one random target in unplanted heads.
    pub peak: f32,
    /// `(layer, head, target)`, 0-based.
    pub planted: Vec<(usize, usize, PlantTarget)>,
    pub seed: u64,
}

impl Default for AttentionSpec {
    fn default() -> Self {
        Self { n_layers: 2, n_heads: 3, special_tokens: true, pad_tokens: 0, peak: 0.6, planted: Vec::new(), seed: 0 }
    }
}

/// Token flags for a protein of `len` residues.
pub fn token_flags(len: usize, special_tokens: bool, pad_tokens: usize) -> Vec<TokenFlag> {
    let mut flags = Vec::with_capacity(len + 2 + pad_tokens);
    if special_tokens {
        flags.push(TokenFlag::Cls);
    }
    flags.extend(std::iter::repeat(TokenFlag::Residue).take(len));
    if special_tokens {
        flags.push(TokenFlag::Sep);
    }
    flags.extend(std::iter::repeat(TokenFlag::Pad).take(pad_tokens));
    flags
}

/// Fills `row` with a random distribution over `live` positions: `peak` on
/// one random position and the rest spread by exponential draws.
fn peaked_row<R: Rng>(row: &mut [f32], live: &[usize], peak: f32, rng: &mut R) {
    let draws: Vec<f64> = live.iter().map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total: f64 = draws.iter().sum();
    let spread = 1.0 - f64::from(peak);
    for (&t, d) in live.iter().zip(&draws) {
        row[t] = (spread * d / total) as f32;
    }
    let chosen = live[rng.gen_range(0..live.len())];
    row[chosen] += peak;
}

/// Puts most mass on `targets` (tokens), the remainder uniformly elsewhere.
fn planted_row(row: &mut [f32], live: &[usize], targets: &[usize]) {
    let focus = 0.9f64;
    let rest = live.len() - targets.len();
    for &t in live {
        row[t] = if rest == 0 { 0.0 } else { ((1.0 - focus) / rest as f64) as f32 };
    }
    let share = if rest == 0 { 1.0 } else { focus } / targets.len() as f64;
    for &t in targets {
        row[t] = share as f32;
    }
}

/// Attention for one protein following `spec`. Planted heads send 90% of
/// each residue row to one random target residue; rows with no target go to
/// SEP when present.
pub fn synth_attention(record: &ProteinRecord, spec: &AttentionSpec) -> AttentionTensor {
    let len = record.len();
    let flags = token_flags(len, spec.special_tokens, spec.pad_tokens);
    let n = flags.len();
    let live: Vec<usize> = (0..n).filter(|&t| flags[t] != TokenFlag::Pad).collect();
    let residue_token = |i: usize| i + spec.special_tokens as usize;
    let sep = spec.special_tokens.then(|| len + 1);
    let contacts = spec
        .planted
        .iter()
        .any(|p| p.2 == PlantTarget::Contact)
        .then(|| derive_contacts(record, ContactParams::default()).ok())
        .flatten();

    let mut rng = protein_rng(spec.seed, &record.id, 1);
    let mut weights = vec![0.0f32; spec.n_layers * spec.n_heads * n * n];
    for layer in 0..spec.n_layers {
        for head in 0..spec.n_heads {
            let plant = spec.planted.iter().find(|p| p.0 == layer && p.1 == head).map(|p| p.2);
            for &from in &live {
                let start = ((layer * spec.n_heads + head) * n + from) * n;
                let row = &mut weights[start..start + n];
                let from_res = from.checked_sub(spec.special_tokens as usize).filter(|&i| i < len);
                let targets: Vec<usize> = match (plant, from_res) {
                    (Some(PlantTarget::Contact), Some(i)) => match &contacts {
                        Some(map) => (0..len).filter(|&j| map.contact(i, j)).collect(),
                        None => Vec::new(),
                    },
                    (Some(PlantTarget::BindingSite), Some(_)) => record.binding_sites.iter().copied().collect(),
                    _ => Vec::new(),
                };
                if plant.is_none() || from_res.is_none() {
                    peaked_row(row, &live, spec.peak, &mut rng);
                } else if targets.is_empty() {
                    match sep {
                        Some(s) => planted_row(row, &live, &[s]),
                        None => peaked_row(row, &live, 0.0, &mut rng),
                    }
                } else {
                    let mut chosen = targets;
                    chosen.shuffle(&mut rng);
                    chosen.truncate(1);
                    let tokens: Vec<usize> = chosen.into_iter().map(residue_token).collect();
                    planted_row(row, &live, &tokens);
                }
            }
        }
    }
    AttentionTensor::new(record.id.clone(), spec.n_layers, spec.n_heads, flags, weights)
        .expect("generated rows are stochastic")
}

pub fn synth_attention_set(corpus: &Corpus, spec: &AttentionSpec) -> AttentionSet {
    corpus.iter().map(|r| (r.id.clone(), synth_attention(r, spec))).collect()
}

/// Uniformly random row-stochastic attention (no special tokens) over
/// `n_tokens` tokens. Used by randomized oracle tests.
pub fn random_stochastic_attention<R: Rng>(
    id: &str,
    flags: Vec<TokenFlag>,
    n_layers: usize,
    n_heads: usize,
    rng: &mut R,
) -> AttentionTensor {
    let n = flags.len();
    let live: Vec<usize> = (0..n).filter(|&t| flags[t] != TokenFlag::Pad).collect();
    let mut weights = vec![0.0f32; n_layers * n_heads * n * n];
    for lh in 0..n_layers * n_heads {
        for &from in &live {
            let row = &mut weights[(lh * n + from) * n..(lh * n + from + 1) * n];
            let peak = if rng.gen_bool(0.5) { rng.gen_range(0.0..0.9f32) } else { 0.0 };
            peaked_row(row, &live, peak, rng);
        }
    }
    AttentionTensor::new(id, n_layers, n_heads, flags, weights).expect("generated rows are stochastic")
}

/// Embeddings in which only `signal_layer` encodes `labels`: class `c` adds
/// `strength` to dimension `c` (binary labels use dimension 0 for class 1).
/// All other dimensions and layers are unit Gaussian noise.
pub fn planted_embeddings(
    record: &ProteinRecord,
    n_layers: usize,
    dim: usize,
    signal_layer: usize,
    labels: &[usize],
    strength: f32,
    seed: u64,
) -> EmbeddingTensor {
    let len = record.len();
    let flags = token_flags(len, true, 0);
    let n = flags.len();
    let mut rng = protein_rng(seed, &record.id, 2);
    let mut vectors = Vec::with_capacity(n_layers * n * dim);
    for layer in 0..n_layers {
        for t in 0..n {
            for d in 0..dim {
                let mut v = gaussian(&mut rng) as f32;
                if layer == signal_layer && flags[t] == TokenFlag::Residue {
                    let label = labels[t - 1];
                    let hot = if labels.iter().all(|&l| l <= 1) { label == 1 && d == 0 } else { d == label };
                    if hot {
                        v += strength;
                    }
                }
                vectors.push(v);
            }
        }
    }
    EmbeddingTensor::new(record.id.clone(), n_layers, dim, flags, vectors).expect("shape is consistent")
}

/// Box-Muller standard normal.
fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Planted head for contacts in the golden fixture, 0-based `(layer, head)`.
pub const GOLDEN_CONTACT_HEAD: (usize, usize) = (1, 0);
/// Planted head for binding sites in the golden fixture.
pub const GOLDEN_BINDING_HEAD: (usize, usize) = (0, 2);
pub const GOLDEN_SEED: u64 = 20_240_611;

/// The 20-protein end-to-end fixture: length 30, two layers of three heads.
pub fn golden_fixture() -> (Corpus, AttentionSet) {
    let corpus = random_corpus(&CorpusSpec {
        n_proteins: 20,
        min_len: 30,
        max_len: 30,
        binding_rate: 0.1,
        min_binding_sites: 2,
        ptm_rate: 0.05,
        missing_coord_rate: 0.0,
        seed: GOLDEN_SEED,
    });
    let spec = AttentionSpec {
        n_layers: 2,
        n_heads: 3,
        special_tokens: true,
        pad_tokens: 0,
        peak: 0.6,
        planted: vec![
            (GOLDEN_CONTACT_HEAD.0, GOLDEN_CONTACT_HEAD.1, PlantTarget::Contact),
            (GOLDEN_BINDING_HEAD.0, GOLDEN_BINDING_HEAD.1, PlantTarget::BindingSite),
        ],
        seed: GOLDEN_SEED,
    };
    let tensors = synth_attention_set(&corpus, &spec);
    (corpus, tensors)
}
