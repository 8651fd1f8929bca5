//! Attention (`ATNS`) and embedding (`EMBS`) dump formats.
//!
//! Both formats are little-endian:
//!
//! ```text
//! ATNS: magic "ATNS" | u32 version=1 | u32 id_len | id (UTF-8)
//!       | u32 n_layers | u32 n_heads | u32 n_tokens | n_tokens x u8 flag
//!       | f32 weights [layer][head][from][to]
//! EMBS: magic "EMBS" | u32 version=1 | u32 id_len | id (UTF-8)
//!       | u32 n_layers | u32 n_tokens | u32 dim | n_tokens x u8 flag
//!       | f32 vectors [layer][token][dim]
//! ```
//!
//! Flags: 0 = residue, 1 = CLS, 2 = SEP, 3 = PAD.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ATTENTION_MAGIC: &[u8; 4] = b"ATNS";
pub const EMBEDDING_MAGIC: &[u8; 4] = b"EMBS";
pub const FORMAT_VERSION: u32 = 1;
/// Allowed deviation of a residue row's sum from 1.
pub const ROW_SUM_TOLERANCE: f64 = 1e-3;

pub const ATTENTION_EXTENSION: &str = "atns";
pub const EMBEDDING_EXTENSION: &str = "embs";

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { expected: String, found: Vec<u8> },
    #[error("unsupported format version {0}")]
    VersionUnsupported(u32),
    #[error("file ends before the {0} section is complete")]
    TruncatedFile(&'static str),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("invalid token flag {flag} at token {token}")]
    InvalidFlag { token: usize, flag: u8 },
    #[error("{extra} trailing bytes after tensor data")]
    TrailingData { extra: usize },
    #[error("row sum {sum} at layer {layer}, head {head}, row {row} is not 1 within tolerance")]
    RowSumViolation { layer: usize, head: usize, row: usize, sum: f64 },
    #[error("negative weight {value} at layer {layer}, head {head}, row {row}")]
    NegativeWeight { layer: usize, head: usize, row: usize, value: f32 },
    #[error("non-finite value at flat offset {offset}")]
    NonFiniteValue { offset: usize },
    #[error("{protein_id}: {found} residue tokens, expected {expected}")]
    FlagCountMismatch { protein_id: String, expected: usize, found: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("duplicate tensor for protein {0}")]
    DuplicateProtein(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TokenFlag {
    Residue,
    Cls,
    Sep,
    Pad,
}

impl TokenFlag {
    pub fn from_byte(b: u8) -> Option<TokenFlag> {
        match b {
            0 => Some(TokenFlag::Residue),
            1 => Some(TokenFlag::Cls),
            2 => Some(TokenFlag::Sep),
            3 => Some(TokenFlag::Pad),
            _ => None,
        }
    }

    pub fn to_byte(self) -> u8 {
        match self {
            TokenFlag::Residue => 0,
            TokenFlag::Cls => 1,
            TokenFlag::Sep => 2,
            TokenFlag::Pad => 3,
        }
    }
}

/// Maps token positions to residue indices (the i-th RESIDUE token is
/// residue i).
fn residue_index_map(flags: &[TokenFlag]) -> Vec<Option<usize>> {
    let mut next = 0;
    flags
        .iter()
        .map(|f| {
            (*f == TokenFlag::Residue).then(|| {
                next += 1;
                next - 1
            })
        })
        .collect()
}

/// Dense per-protein attention weights, indexed `[layer][head][from][to]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTensor {
    protein_id: String,
    n_layers: usize,
    n_heads: usize,
    n_tokens: usize,
    weights: Vec<f32>,
    flags: Vec<TokenFlag>,
    residue_index: Vec<Option<usize>>,
    residue_tokens: Vec<usize>,
}

impl AttentionTensor {
    /// Validates and wraps raw weights. Errors name the first offending
    /// `(layer, head, row)`.
    pub fn new(
        protein_id: impl Into<String>,
        n_layers: usize,
        n_heads: usize,
        flags: Vec<TokenFlag>,
        weights: Vec<f32>,
    ) -> Result<Self, TensorError> {
        let n_tokens = flags.len();
        if n_layers == 0 || n_heads == 0 || n_tokens == 0 {
            return Err(TensorError::MalformedHeader(format!(
                "dimensions must be positive (layers={n_layers}, heads={n_heads}, tokens={n_tokens})"
            )));
        }
        let expected = n_layers * n_heads * n_tokens * n_tokens;
        if weights.len() != expected {
            return Err(TensorError::ShapeMismatch(format!(
                "{} weights for shape {n_layers}x{n_heads}x{n_tokens}x{n_tokens}",
                weights.len()
            )));
        }
        let residue_index = residue_index_map(&flags);
        let residue_tokens = (0..n_tokens).filter(|&t| flags[t] == TokenFlag::Residue).collect();
        let tensor = Self {
            protein_id: protein_id.into(),
            n_layers,
            n_heads,
            n_tokens,
            weights,
            flags,
            residue_index,
            residue_tokens,
        };
        tensor.validate()?;
        Ok(tensor)
    }

    fn validate(&self) -> Result<(), TensorError> {
        for layer in 0..self.n_layers {
            for head in 0..self.n_heads {
                for row in 0..self.n_tokens {
                    let weights = self.row(layer, head, row);
                    let mut sum = 0.0f64;
                    for (col, &w) in weights.iter().enumerate() {
                        if !w.is_finite() {
                            return Err(TensorError::NonFiniteValue {
                                offset: self.offset(layer, head, row) + col,
                            });
                        }
                        if w < 0.0 {
                            return Err(TensorError::NegativeWeight { layer, head, row, value: w });
                        }
                        sum += w as f64;
                    }
                    if self.flags[row] == TokenFlag::Residue && (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                        return Err(TensorError::RowSumViolation { layer, head, row, sum });
                    }
                }
            }
        }
        Ok(())
    }

    fn offset(&self, layer: usize, head: usize, row: usize) -> usize {
        ((layer * self.n_heads + head) * self.n_tokens + row) * self.n_tokens
    }

    pub fn protein_id(&self) -> &str {
        &self.protein_id
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn n_heads(&self) -> usize {
        self.n_heads
    }

    pub fn n_tokens(&self) -> usize {
        self.n_tokens
    }

    pub fn flags(&self) -> &[TokenFlag] {
        &self.flags
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    /// Attention from token `from` to every token, for one head.
    pub fn row(&self, layer: usize, head: usize, from: usize) -> &[f32] {
        let start = self.offset(layer, head, from);
        &self.weights[start..start + self.n_tokens]
    }

    pub fn weight(&self, layer: usize, head: usize, from: usize, to: usize) -> f32 {
        self.weights[self.offset(layer, head, from) + to]
    }

    /// Residue index of a token, if the token is a residue.
    pub fn residue_of(&self, token: usize) -> Option<usize> {
        self.residue_index[token]
    }

    /// Token positions of residues, in order.
    pub fn residue_tokens(&self) -> &[usize] {
        &self.residue_tokens
    }

    pub fn n_residues(&self) -> usize {
        self.residue_tokens.len()
    }

    /// Checks the residue count against the matching corpus record length.
    pub fn check_residue_count(&self, expected: usize) -> Result<(), TensorError> {
        if self.n_residues() != expected {
            return Err(TensorError::FlagCountMismatch {
                protein_id: self.protein_id.clone(),
                expected,
                found: self.n_residues(),
            });
        }
        Ok(())
    }

    /// Returns a tensor with the same header and new weights, revalidated.
    pub fn with_weights(&self, weights: Vec<f32>) -> Result<Self, TensorError> {
        Self::new(self.protein_id.clone(), self.n_layers, self.n_heads, self.flags.clone(), weights)
    }
}

/// Per-protein embeddings, indexed `[layer][token][dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTensor {
    protein_id: String,
    n_layers: usize,
    n_tokens: usize,
    dim: usize,
    vectors: Vec<f32>,
    flags: Vec<TokenFlag>,
    residue_tokens: Vec<usize>,
}

impl EmbeddingTensor {
    pub fn new(
        protein_id: impl Into<String>,
        n_layers: usize,
        dim: usize,
        flags: Vec<TokenFlag>,
        vectors: Vec<f32>,
    ) -> Result<Self, TensorError> {
        let n_tokens = flags.len();
        if n_layers == 0 || n_tokens == 0 || dim == 0 {
            return Err(TensorError::MalformedHeader(format!(
                "dimensions must be positive (layers={n_layers}, tokens={n_tokens}, dim={dim})"
            )));
        }
        if vectors.len() != n_layers * n_tokens * dim {
            return Err(TensorError::ShapeMismatch(format!(
                "{} values for shape {n_layers}x{n_tokens}x{dim}",
                vectors.len()
            )));
        }
        if let Some(offset) = vectors.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFiniteValue { offset });
        }
        let residue_tokens = (0..n_tokens).filter(|&t| flags[t] == TokenFlag::Residue).collect();
        Ok(Self {
            protein_id: protein_id.into(),
            n_layers,
            n_tokens,
            dim,
            vectors,
            flags,
            residue_tokens,
        })
    }

    pub fn protein_id(&self) -> &str {
        &self.protein_id
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn n_tokens(&self) -> usize {
        self.n_tokens
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn flags(&self) -> &[TokenFlag] {
        &self.flags
    }

    pub fn vectors(&self) -> &[f32] {
        &self.vectors
    }

    pub fn vector(&self, layer: usize, token: usize) -> &[f32] {
        let start = (layer * self.n_tokens + token) * self.dim;
        &self.vectors[start..start + self.dim]
    }

    pub fn residue_tokens(&self) -> &[usize] {
        &self.residue_tokens
    }

    pub fn n_residues(&self) -> usize {
        self.residue_tokens.len()
    }

    /// Layer vector of the `residue`-th residue token.
    pub fn residue_vector(&self, layer: usize, residue: usize) -> &[f32] {
        self.vector(layer, self.residue_tokens[residue])
    }

    pub fn check_residue_count(&self, expected: usize) -> Result<(), TensorError> {
        if self.n_residues() != expected {
            return Err(TensorError::FlagCountMismatch {
                protein_id: self.protein_id.clone(),
                expected,
                found: self.n_residues(),
            });
        }
        Ok(())
    }
}

struct Header {
    protein_id: String,
    dims: [usize; 3],
    flags: Vec<TokenFlag>,
}

fn read_header(cur: &mut Cursor<&[u8]>, magic: &[u8; 4]) -> Result<Header, TensorError> {
    let mut found = [0u8; 4];
    cur.read_exact(&mut found).map_err(|_| TensorError::TruncatedFile("magic"))?;
    if &found != magic {
        return Err(TensorError::BadMagic {
            expected: String::from_utf8_lossy(magic).into_owned(),
            found: found.to_vec(),
        });
    }
    let u32_field = |cur: &mut Cursor<&[u8]>| {
        cur.read_u32::<LittleEndian>().map_err(|_| TensorError::TruncatedFile("header"))
    };
    let version = u32_field(cur)?;
    if version != FORMAT_VERSION {
        return Err(TensorError::VersionUnsupported(version));
    }
    let id_len = u32_field(cur)? as usize;
    let remaining = cur.get_ref().len() - cur.position() as usize;
    if id_len > remaining {
        return Err(TensorError::TruncatedFile("id"));
    }
    let mut id = vec![0u8; id_len];
    cur.read_exact(&mut id).map_err(|_| TensorError::TruncatedFile("id"))?;
    let protein_id = String::from_utf8(id)
        .map_err(|_| TensorError::MalformedHeader("protein id is not UTF-8".into()))?;
    let dims = [u32_field(cur)? as usize, u32_field(cur)? as usize, u32_field(cur)? as usize];
    if dims.contains(&0) {
        return Err(TensorError::MalformedHeader(format!("zero dimension in {dims:?}")));
    }
    Ok(Header { protein_id, dims, flags: Vec::new() })
}

fn read_flags(cur: &mut Cursor<&[u8]>, n_tokens: usize) -> Result<Vec<TokenFlag>, TensorError> {
    let remaining = cur.get_ref().len() - cur.position() as usize;
    if n_tokens > remaining {
        return Err(TensorError::TruncatedFile("flags"));
    }
    let mut raw = vec![0u8; n_tokens];
    cur.read_exact(&mut raw).map_err(|_| TensorError::TruncatedFile("flags"))?;
    raw.into_iter()
        .enumerate()
        .map(|(token, flag)| TokenFlag::from_byte(flag).ok_or(TensorError::InvalidFlag { token, flag }))
        .collect()
}

fn read_f32_payload(cur: &mut Cursor<&[u8]>, count: usize, section: &'static str) -> Result<Vec<f32>, TensorError> {
    let remaining = cur.get_ref().len() - cur.position() as usize;
    let needed = count
        .checked_mul(4)
        .ok_or_else(|| TensorError::MalformedHeader("tensor size overflows".into()))?;
    if needed > remaining {
        return Err(TensorError::TruncatedFile(section));
    }
    if remaining > needed {
        return Err(TensorError::TrailingData { extra: remaining - needed });
    }
    let mut data = vec![0f32; count];
    cur.read_f32_into::<LittleEndian>(&mut data)
        .map_err(|_| TensorError::TruncatedFile(section))?;
    Ok(data)
}

/// Decodes an ATNS byte buffer.
pub fn decode_attention(bytes: &[u8]) -> Result<AttentionTensor, TensorError> {
    let mut cur = Cursor::new(bytes);
    let mut header = read_header(&mut cur, ATTENTION_MAGIC)?;
    let [n_layers, n_heads, n_tokens] = header.dims;
    header.flags = read_flags(&mut cur, n_tokens)?;
    let count = n_layers
        .checked_mul(n_heads)
        .and_then(|v| v.checked_mul(n_tokens))
        .and_then(|v| v.checked_mul(n_tokens))
        .ok_or_else(|| TensorError::MalformedHeader("tensor size overflows".into()))?;
    let weights = read_f32_payload(&mut cur, count, "weights")?;
    AttentionTensor::new(header.protein_id, n_layers, n_heads, header.flags, weights)
}

/// Decodes an EMBS byte buffer.
pub fn decode_embeddings(bytes: &[u8]) -> Result<EmbeddingTensor, TensorError> {
    let mut cur = Cursor::new(bytes);
    let mut header = read_header(&mut cur, EMBEDDING_MAGIC)?;
    let [n_layers, n_tokens, dim] = header.dims;
    header.flags = read_flags(&mut cur, n_tokens)?;
    let count = n_layers
        .checked_mul(n_tokens)
        .and_then(|v| v.checked_mul(dim))
        .ok_or_else(|| TensorError::MalformedHeader("tensor size overflows".into()))?;
    let vectors = read_f32_payload(&mut cur, count, "vectors")?;
    EmbeddingTensor::new(header.protein_id, n_layers, dim, header.flags, vectors)
}

fn read_file(path: &Path) -> Result<Vec<u8>, TensorError> {
    fs::read(path).map_err(|source| TensorError::Io { path: path.display().to_string(), source })
}

pub fn read_attention(path: impl AsRef<Path>) -> Result<AttentionTensor, TensorError> {
    decode_attention(&read_file(path.as_ref())?)
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTensor, TensorError> {
    decode_embeddings(&read_file(path.as_ref())?)
}

fn write_header<W: Write>(
    w: &mut W,
    magic: &[u8; 4],
    id: &str,
    dims: [usize; 3],
    flags: &[TokenFlag],
) -> std::io::Result<()> {
    w.write_all(magic)?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
    w.write_u32::<LittleEndian>(id.len() as u32)?;
    w.write_all(id.as_bytes())?;
    for d in dims {
        w.write_u32::<LittleEndian>(d as u32)?;
    }
    let raw: Vec<u8> = flags.iter().map(|f| f.to_byte()).collect();
    w.write_all(&raw)
}

pub fn write_attention<W: Write>(tensor: &AttentionTensor, mut w: W) -> std::io::Result<()> {
    write_header(
        &mut w,
        ATTENTION_MAGIC,
        &tensor.protein_id,
        [tensor.n_layers, tensor.n_heads, tensor.n_tokens],
        &tensor.flags,
    )?;
    for &v in &tensor.weights {
        w.write_f32::<LittleEndian>(v)?;
    }
    w.flush()
}

pub fn write_embeddings<W: Write>(tensor: &EmbeddingTensor, mut w: W) -> std::io::Result<()> {
    write_header(
        &mut w,
        EMBEDDING_MAGIC,
        &tensor.protein_id,
        [tensor.n_layers, tensor.n_tokens, tensor.dim],
        &tensor.flags,
    )?;
    for &v in &tensor.vectors {
        w.write_f32::<LittleEndian>(v)?;
    }
    w.flush()
}

pub fn encode_attention(tensor: &AttentionTensor) -> Vec<u8> {
    let mut buf = Vec::with_capacity(32 + tensor.protein_id.len() + tensor.n_tokens + 4 * tensor.weights.len());
    write_attention(tensor, &mut buf).expect("writing to a Vec cannot fail");
    buf
}

pub fn encode_embeddings(tensor: &EmbeddingTensor) -> Vec<u8> {
    let mut buf = Vec::with_capacity(32 + tensor.protein_id.len() + tensor.n_tokens + 4 * tensor.vectors.len());
    write_embeddings(tensor, &mut buf).expect("writing to a Vec cannot fail");
    buf
}

/// Attention tensors keyed by protein id.
pub type AttentionSet = BTreeMap<String, AttentionTensor>;
/// Embedding tensors keyed by protein id.
pub type EmbeddingSet = BTreeMap<String, EmbeddingTensor>;

fn list_with_extension(dir: &Path, ext: &str) -> Result<Vec<PathBuf>, TensorError> {
    let io_err = |source| TensorError::Io { path: dir.display().to_string(), source };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err)?
        .collect::<Result<Vec<_>, _>>()
        .map_err(io_err)?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == ext))
        .collect();
    paths.sort();
    Ok(paths)
}

fn collect_unique<T>(items: Vec<(String, T)>) -> Result<BTreeMap<String, T>, TensorError> {
    let mut out = BTreeMap::new();
    for (id, t) in items {
        if out.contains_key(&id) {
            return Err(TensorError::DuplicateProtein(id));
        }
        out.insert(id, t);
    }
    Ok(out)
}

/// Reads every `*.atns` file in `dir` in parallel, keyed by the protein id
/// stored in each file.
pub fn load_attention_dir(dir: impl AsRef<Path>) -> Result<AttentionSet, TensorError> {
    let paths = list_with_extension(dir.as_ref(), ATTENTION_EXTENSION)?;
    let tensors = paths
        .par_iter()
        .map(|p| read_attention(p).map(|t| (t.protein_id.clone(), t)))
        .collect::<Result<Vec<_>, _>>()?;
    collect_unique(tensors)
}

/// Reads every `*.embs` file in `dir` in parallel.
pub fn load_embedding_dir(dir: impl AsRef<Path>) -> Result<EmbeddingSet, TensorError> {
    let paths = list_with_extension(dir.as_ref(), EMBEDDING_EXTENSION)?;
    let tensors = paths
        .par_iter()
        .map(|p| read_embeddings(p).map(|t| (t.protein_id.clone(), t)))
        .collect::<Result<Vec<_>, _>>()?;
    collect_unique(tensors)
}

/// File name used when writing a protein's dump into a directory. Ids are
/// sanitised so they can't escape the directory.
pub fn dump_file_name(protein_id: &str, ext: &str) -> String {
    let safe: String = protein_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{safe}.{ext}")
}
