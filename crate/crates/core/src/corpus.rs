//! Annotated protein corpus ingestion and the embedded reference tables.
//!
//! The corpus is a JSON-Lines file with one protein per line:
//!
//! ```text
//! {"id": "1ABC", "sequence": "MKV...", "coords": [[x,y,z], null, ...] | null,
//!  "ss": "HHS-T..." | null, "binding_sites": [3, 17], "ptm_sites": []}
//! ```
//!
//! Records whose annotations do not line up with the sequence are rejected
//! individually; the rest of the file still loads.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum sequence length kept after ingestion.
pub const DEFAULT_MAX_LEN: usize = 512;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus file {path}: {source}")]
    FileUnreadable {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("corpus contains no valid records")]
    EmptyCorpus,
    #[error("max_len must be positive")]
    InvalidMaxLen,
}

/// One of the 20 standard amino acids, or `X` for anything else.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AminoAcid {
    Ala,
    Arg,
    Asn,
    Asp,
    Cys,
    Gln,
    Glu,
    Gly,
    His,
    Ile,
    Leu,
    Lys,
    Met,
    Phe,
    Pro,
    Ser,
    Thr,
    Trp,
    Tyr,
    Val,
    Unknown,
}

impl AminoAcid {
    /// The 20 standard residues, in the conventional substitution-matrix order
    /// (alphabetical by three-letter abbreviation).
    pub const STANDARD: [AminoAcid; 20] = [
        AminoAcid::Ala,
        AminoAcid::Arg,
        AminoAcid::Asn,
        AminoAcid::Asp,
        AminoAcid::Cys,
        AminoAcid::Gln,
        AminoAcid::Glu,
        AminoAcid::Gly,
        AminoAcid::His,
        AminoAcid::Ile,
        AminoAcid::Leu,
        AminoAcid::Lys,
        AminoAcid::Met,
        AminoAcid::Phe,
        AminoAcid::Pro,
        AminoAcid::Ser,
        AminoAcid::Thr,
        AminoAcid::Trp,
        AminoAcid::Tyr,
        AminoAcid::Val,
    ];

    /// Maps a one-letter code to a residue. Unrecognised letters map to
    /// [`AminoAcid::Unknown`]; case is ignored.
    pub fn from_code(code: char) -> AminoAcid {
        match code.to_ascii_uppercase() {
            'A' => AminoAcid::Ala,
            'R' => AminoAcid::Arg,
            'N' => AminoAcid::Asn,
            'D' => AminoAcid::Asp,
            'C' => AminoAcid::Cys,
            'Q' => AminoAcid::Gln,
            'E' => AminoAcid::Glu,
            'G' => AminoAcid::Gly,
            'H' => AminoAcid::His,
            'I' => AminoAcid::Ile,
            'L' => AminoAcid::Leu,
            'K' => AminoAcid::Lys,
            'M' => AminoAcid::Met,
            'F' => AminoAcid::Phe,
            'P' => AminoAcid::Pro,
            'S' => AminoAcid::Ser,
            'T' => AminoAcid::Thr,
            'W' => AminoAcid::Trp,
            'Y' => AminoAcid::Tyr,
            'V' => AminoAcid::Val,
            _ => AminoAcid::Unknown,
        }
    }

    /// Parses a standard one-letter code; `None` for anything outside the 20.
    pub fn parse_standard(code: char) -> Option<AminoAcid> {
        match AminoAcid::from_code(code) {
            AminoAcid::Unknown => None,
            aa => Some(aa),
        }
    }

    pub fn code(self) -> char {
        match self {
            AminoAcid::Ala => 'A',
            AminoAcid::Arg => 'R',
            AminoAcid::Asn => 'N',
            AminoAcid::Asp => 'D',
            AminoAcid::Cys => 'C',
            AminoAcid::Gln => 'Q',
            AminoAcid::Glu => 'E',
            AminoAcid::Gly => 'G',
            AminoAcid::His => 'H',
            AminoAcid::Ile => 'I',
            AminoAcid::Leu => 'L',
            AminoAcid::Lys => 'K',
            AminoAcid::Met => 'M',
            AminoAcid::Phe => 'F',
            AminoAcid::Pro => 'P',
            AminoAcid::Ser => 'S',
            AminoAcid::Thr => 'T',
            AminoAcid::Trp => 'W',
            AminoAcid::Tyr => 'Y',
            AminoAcid::Val => 'V',
            AminoAcid::Unknown => 'X',
        }
    }

    pub fn three_letter(self) -> &'static str {
        match self {
            AminoAcid::Ala => "Ala",
            AminoAcid::Arg => "Arg",
            AminoAcid::Asn => "Asn",
            AminoAcid::Asp => "Asp",
            AminoAcid::Cys => "Cys",
            AminoAcid::Gln => "Gln",
            AminoAcid::Glu => "Glu",
            AminoAcid::Gly => "Gly",
            AminoAcid::His => "His",
            AminoAcid::Ile => "Ile",
            AminoAcid::Leu => "Leu",
            AminoAcid::Lys => "Lys",
            AminoAcid::Met => "Met",
            AminoAcid::Phe => "Phe",
            AminoAcid::Pro => "Pro",
            AminoAcid::Ser => "Ser",
            AminoAcid::Thr => "Thr",
            AminoAcid::Trp => "Trp",
            AminoAcid::Tyr => "Tyr",
            AminoAcid::Val => "Val",
            AminoAcid::Unknown => "Xaa",
        }
    }

    pub fn from_three_letter(abbrev: &str) -> Option<AminoAcid> {
        AminoAcid::STANDARD
            .into_iter()
            .chain(std::iter::once(AminoAcid::Unknown))
            .find(|aa| aa.three_letter().eq_ignore_ascii_case(abbrev))
    }

    pub fn full_name(self) -> &'static str {
        match self {
            AminoAcid::Ala => "Alanine",
            AminoAcid::Arg => "Arginine",
            AminoAcid::Asn => "Asparagine",
            AminoAcid::Asp => "Aspartic acid",
            AminoAcid::Cys => "Cysteine",
            AminoAcid::Gln => "Glutamine",
            AminoAcid::Glu => "Glutamic acid",
            AminoAcid::Gly => "Glycine",
            AminoAcid::His => "Histidine",
            AminoAcid::Ile => "Isoleucine",
            AminoAcid::Leu => "Leucine",
            AminoAcid::Lys => "Lysine",
            AminoAcid::Met => "Methionine",
            AminoAcid::Phe => "Phenylalanine",
            AminoAcid::Pro => "Proline",
            AminoAcid::Ser => "Serine",
            AminoAcid::Thr => "Threonine",
            AminoAcid::Trp => "Tryptophan",
            AminoAcid::Tyr => "Tyrosine",
            AminoAcid::Val => "Valine",
            AminoAcid::Unknown => "Unknown",
        }
    }

    pub fn from_full_name(name: &str) -> Option<AminoAcid> {
        AminoAcid::STANDARD
            .into_iter()
            .chain(std::iter::once(AminoAcid::Unknown))
            .find(|aa| aa.full_name().eq_ignore_ascii_case(name))
    }

    /// Position in [`AminoAcid::STANDARD`]; `None` for `X`.
    pub fn index(self) -> Option<usize> {
        match self {
            AminoAcid::Unknown => None,
            aa => Some(aa as usize),
        }
    }

    pub fn is_standard(self) -> bool {
        self != AminoAcid::Unknown
    }
}

impl fmt::Display for AminoAcid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

/// Per-residue secondary structure label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SecondaryStructure {
    Helix,
    Strand,
    TurnBend,
    Other,
}

impl SecondaryStructure {
    pub fn from_char(c: char) -> Option<SecondaryStructure> {
        match c {
            'H' => Some(SecondaryStructure::Helix),
            'S' => Some(SecondaryStructure::Strand),
            'T' => Some(SecondaryStructure::TurnBend),
            '-' => Some(SecondaryStructure::Other),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            SecondaryStructure::Helix => 'H',
            SecondaryStructure::Strand => 'S',
            SecondaryStructure::TurnBend => 'T',
            SecondaryStructure::Other => '-',
        }
    }

    /// Class index used by the 4-way secondary-structure probe.
    pub fn class_index(self) -> usize {
        match self {
            SecondaryStructure::Helix => 0,
            SecondaryStructure::Strand => 1,
            SecondaryStructure::TurnBend => 2,
            SecondaryStructure::Other => 3,
        }
    }
}

/// Cartesian position of a residue's representative atom, in angstroms.
pub type Coord = [f64; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct ProteinRecord {
    pub id: String,
    pub sequence: Vec<AminoAcid>,
    /// One optional position per residue; `None` entries are unresolved.
    pub coords: Option<Vec<Option<Coord>>>,
    pub ss_labels: Option<Vec<SecondaryStructure>>,
    pub binding_sites: BTreeSet<usize>,
    pub ptm_sites: BTreeSet<usize>,
}

impl ProteinRecord {
    /// A record with only a sequence and no annotations.
    pub fn from_sequence(id: impl Into<String>, sequence: &str) -> Self {
        Self {
            id: id.into(),
            sequence: sequence.chars().map(AminoAcid::from_code).collect(),
            coords: None,
            ss_labels: None,
            binding_sites: BTreeSet::new(),
            ptm_sites: BTreeSet::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.sequence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequence.is_empty()
    }

    pub fn has_coords(&self) -> bool {
        self.coords.is_some()
    }

    pub fn sequence_string(&self) -> String {
        self.sequence.iter().map(|aa| aa.code()).collect()
    }

    /// Checks the length and index invariants.
    pub fn validate(&self) -> Result<(), String> {
        let len = self.len();
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if len == 0 {
            return Err("empty sequence".into());
        }
        if let Some(coords) = &self.coords {
            if coords.len() != len {
                return Err(format!("coords has {} entries, sequence has {len}", coords.len()));
            }
            if coords.iter().flatten().flatten().any(|v| !v.is_finite()) {
                return Err("non-finite coordinate".into());
            }
        }
        if let Some(ss) = &self.ss_labels {
            if ss.len() != len {
                return Err(format!("ss has {} labels, sequence has {len}", ss.len()));
            }
        }
        if let Some(&i) = self.binding_sites.iter().next_back().filter(|&&i| i >= len) {
            return Err(format!("binding site index {i} out of range for length {len}"));
        }
        if let Some(&i) = self.ptm_sites.iter().next_back().filter(|&&i| i >= len) {
            return Err(format!("ptm site index {i} out of range for length {len}"));
        }
        Ok(())
    }

    /// Keeps the first `max_len` residues and every annotation aligned to them.
    pub fn truncate(&mut self, max_len: usize) {
        if self.len() <= max_len {
            return;
        }
        self.sequence.truncate(max_len);
        if let Some(coords) = &mut self.coords {
            coords.truncate(max_len);
        }
        if let Some(ss) = &mut self.ss_labels {
            ss.truncate(max_len);
        }
        self.binding_sites.retain(|&i| i < max_len);
        self.ptm_sites.retain(|&i| i < max_len);
    }
}

/// Line format of the corpus file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: String,
    sequence: String,
    #[serde(default)]
    coords: Option<Vec<Option<[f64; 3]>>>,
    #[serde(default)]
    ss: Option<String>,
    #[serde(default)]
    binding_sites: Vec<i64>,
    #[serde(default)]
    ptm_sites: Vec<i64>,
}

impl RawRecord {
    fn into_record(self) -> Result<ProteinRecord, String> {
        if let Some(bad) = self.sequence.chars().find(|c| !c.is_ascii_alphabetic()) {
            return Err(format!("invalid residue character {bad:?}"));
        }
        let ss_labels = match self.ss {
            None => None,
            Some(s) => Some(
                s.chars()
                    .map(|c| {
                        SecondaryStructure::from_char(c)
                            .ok_or_else(|| format!("invalid secondary structure label {c:?}"))
                    })
                    .collect::<Result<Vec<_>, _>>()?,
            ),
        };
        let sites = |raw: Vec<i64>, what: &str| -> Result<BTreeSet<usize>, String> {
            raw.into_iter()
                .map(|i| usize::try_from(i).map_err(|_| format!("negative {what} index {i}")))
                .collect()
        };
        let record = ProteinRecord {
            id: self.id,
            sequence: self.sequence.chars().map(AminoAcid::from_code).collect(),
            coords: self.coords,
            ss_labels,
            binding_sites: sites(self.binding_sites, "binding site")?,
            ptm_sites: sites(self.ptm_sites, "ptm site")?,
        };
        record.validate()?;
        Ok(record)
    }

    fn from_record(record: &ProteinRecord) -> Self {
        Self {
            id: record.id.clone(),
            sequence: record.sequence_string(),
            coords: record.coords.clone(),
            ss: record
                .ss_labels
                .as_ref()
                .map(|ss| ss.iter().map(|s| s.as_char()).collect()),
            binding_sites: record.binding_sites.iter().map(|&i| i as i64).collect(),
            ptm_sites: record.ptm_sites.iter().map(|&i| i as i64).collect(),
        }
    }
}

/// An immutable, validated set of protein records.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    records: Vec<ProteinRecord>,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    /// Builds a corpus from already-validated records. Later duplicates of an
    /// id are rejected.
    pub fn from_records(records: Vec<ProteinRecord>) -> Result<Self, CorpusError> {
        let mut by_id = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            r.validate()
                .map_err(|reason| CorpusError::MalformedRecord { line: i + 1, reason })?;
            if by_id.insert(r.id.clone(), i).is_some() {
                return Err(CorpusError::MalformedRecord {
                    line: i + 1,
                    reason: format!("duplicate id {:?}", r.id),
                });
            }
        }
        Ok(Self { records, by_id })
    }

    pub fn records(&self) -> &[ProteinRecord] {
        &self.records
    }

    pub fn get(&self, id: &str) -> Option<&ProteinRecord> {
        self.by_id.get(id).map(|&i| &self.records[i])
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ProteinRecord> {
        self.records.iter()
    }

    /// Records sorted by id; the canonical order for deterministic merges.
    pub fn sorted_by_id(&self) -> Vec<&ProteinRecord> {
        let mut v: Vec<_> = self.records.iter().collect();
        v.sort_by(|a, b| a.id.cmp(&b.id));
        v
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a ProteinRecord;
    type IntoIter = std::slice::Iter<'a, ProteinRecord>;

    fn into_iter(self) -> Self::IntoIter {
        self.records.iter()
    }
}

/// Result of loading a corpus file: the accepted records plus one
/// [`CorpusError::MalformedRecord`] per rejected line.
#[derive(Debug)]
pub struct LoadedCorpus {
    pub corpus: Corpus,
    pub rejected: Vec<CorpusError>,
}

/// Loads a JSON-Lines corpus, truncating every record to `max_len` residues.
pub fn load_corpus(path: impl AsRef<Path>, max_len: usize) -> Result<LoadedCorpus, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CorpusError::FileUnreadable {
        path: path.display().to_string(),
        source,
    })?;
    parse_corpus(BufReader::new(file), max_len).map_err(|e| match e {
        CorpusError::FileUnreadable { source, .. } => CorpusError::FileUnreadable {
            path: path.display().to_string(),
            source,
        },
        other => other,
    })
}

/// Same as [`load_corpus`] over any buffered reader.
pub fn parse_corpus<R: BufRead>(reader: R, max_len: usize) -> Result<LoadedCorpus, CorpusError> {
    if max_len == 0 {
        return Err(CorpusError::InvalidMaxLen);
    }
    let mut records = Vec::new();
    let mut rejected = Vec::new();
    let mut seen = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| CorpusError::FileUnreadable {
            path: String::new(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<RawRecord>(&line)
            .map_err(|e| e.to_string())
            .and_then(RawRecord::into_record);
        match parsed {
            Ok(mut record) => {
                if seen.insert(record.id.clone(), line_no).is_some() {
                    rejected.push(CorpusError::MalformedRecord {
                        line: line_no,
                        reason: format!("duplicate id {:?}", record.id),
                    });
                    continue;
                }
                record.truncate(max_len);
                records.push(record);
            }
            Err(reason) => rejected.push(CorpusError::MalformedRecord { line: line_no, reason }),
        }
    }
    if records.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let corpus = Corpus::from_records(records)?;
    Ok(LoadedCorpus { corpus, rejected })
}

/// Writes records in the corpus line format.
pub fn write_corpus<'a, W: Write>(
    records: impl IntoIterator<Item = &'a ProteinRecord>,
    mut writer: W,
) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, &RawRecord::from_record(r))?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

/// A symmetric 20x20 integer substitution score table over the standard
/// amino acids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubstitutionMatrix {
    scores: [[i32; 20]; 20],
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MatrixError {
    #[error("missing header row")]
    MissingHeader,
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("missing scores for amino acid {0}")]
    Incomplete(char),
    #[error("asymmetric entry ({0}, {1})")]
    Asymmetric(char, char),
}

const BLOSUM62_NCBI: &str = include_str!("../assets/blosum62.txt");

impl SubstitutionMatrix {
    /// Parses an NCBI flat-format matrix (`#` comments, a header row of column
    /// letters, then one row per letter). Columns and rows for non-standard
    /// symbols (`B`, `Z`, `X`, `*`) are ignored.
    pub fn parse_ncbi(text: &str) -> Result<Self, MatrixError> {
        let mut columns: Option<Vec<Option<usize>>> = None;
        let mut scores = [[0i32; 20]; 20];
        let mut seen_rows = [false; 20];
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some(cols) = &columns else {
                columns = Some(
                    line.split_whitespace()
                        .map(|t| single_char(t).and_then(AminoAcid::parse_standard).and_then(|a| a.index()))
                        .collect(),
                );
                continue;
            };
            let mut tokens = line.split_whitespace();
            let row_label = tokens.next().ok_or(MatrixError::MissingHeader)?;
            let Some(row) = single_char(row_label)
                .and_then(AminoAcid::parse_standard)
                .and_then(|a| a.index())
            else {
                continue;
            };
            let values: Vec<&str> = tokens.collect();
            if values.len() != cols.len() {
                return Err(MatrixError::Malformed {
                    line: idx + 1,
                    reason: format!("expected {} scores, found {}", cols.len(), values.len()),
                });
            }
            for (col, value) in cols.iter().zip(values) {
                if let Some(col) = col {
                    scores[row][*col] = value.parse().map_err(|_| MatrixError::Malformed {
                        line: idx + 1,
                        reason: format!("bad score {value:?}"),
                    })?;
                }
            }
            seen_rows[row] = true;
        }
        let cols = columns.ok_or(MatrixError::MissingHeader)?;
        for aa in AminoAcid::STANDARD {
            let i = aa as usize;
            if !seen_rows[i] || !cols.contains(&Some(i)) {
                return Err(MatrixError::Incomplete(aa.code()));
            }
        }
        for i in 0..20 {
            for j in 0..i {
                if scores[i][j] != scores[j][i] {
                    return Err(MatrixError::Asymmetric(
                        AminoAcid::STANDARD[j].code(),
                        AminoAcid::STANDARD[i].code(),
                    ));
                }
            }
        }
        Ok(Self { scores })
    }

    /// Builds from a dense table indexed in [`AminoAcid::STANDARD`] order.
    pub fn from_table(scores: [[i32; 20]; 20]) -> Result<Self, MatrixError> {
        for i in 0..20 {
            for j in 0..i {
                if scores[i][j] != scores[j][i] {
                    return Err(MatrixError::Asymmetric(
                        AminoAcid::STANDARD[j].code(),
                        AminoAcid::STANDARD[i].code(),
                    ));
                }
            }
        }
        Ok(Self { scores })
    }

    /// Score for a pair of standard residues; `None` if either is `X`.
    pub fn score(&self, a: AminoAcid, b: AminoAcid) -> Option<i32> {
        Some(self.scores[a.index()?][b.index()?])
    }

    pub fn table(&self) -> &[[i32; 20]; 20] {
        &self.scores
    }
}

fn single_char(token: &str) -> Option<char> {
    let mut chars = token.chars();
    let c = chars.next()?;
    chars.next().is_none().then_some(c)
}

/// The NCBI BLOSUM62 table compiled into the crate.
pub fn load_blosum62() -> SubstitutionMatrix {
    SubstitutionMatrix::parse_ncbi(BLOSUM62_NCBI).expect("embedded BLOSUM62 asset is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<LoadedCorpus, CorpusError> {
        parse_corpus(text.as_bytes(), DEFAULT_MAX_LEN)
    }

    #[test]
    fn minimal_record() {
        let loaded = parse(r#"{"id":"p1","sequence":"MKV","coords":null,"ss":null,"binding_sites":[],"ptm_sites":[]}"#).unwrap();
        assert!(loaded.rejected.is_empty());
        let r = &loaded.corpus.records()[0];
        assert_eq!(r.len(), 3);
        assert!(r.coords.is_none());
        assert_eq!(r.sequence_string(), "MKV");
    }

    #[test]
    fn long_record_is_truncated_with_annotations() {
        let seq: String = "ACDEFGHIKLMNPQRSTVWY".chars().cycle().take(600).collect();
        let ss: String = "HST-".chars().cycle().take(600).collect();
        let line = serde_json::json!({
            "id": "long", "sequence": seq, "ss": ss,
            "binding_sites": [3, 511, 512, 599], "ptm_sites": [550]
        });
        let loaded = parse(&line.to_string()).unwrap();
        let r = &loaded.corpus.records()[0];
        assert_eq!(r.len(), 512);
        assert_eq!(r.ss_labels.as_ref().unwrap().len(), 512);
        assert_eq!(r.binding_sites, BTreeSet::from([3, 511]));
        assert!(r.ptm_sites.is_empty());
        assert_eq!(r.sequence_string(), seq[..512]);
    }

    #[test]
    fn mismatched_ss_length_is_rejected_per_record() {
        let text = concat!(
            r#"{"id":"bad","sequence":"MKVLA","ss":"HHHH"}"#,
            "\n",
            r#"{"id":"good","sequence":"MKV"}"#,
            "\n"
        );
        let loaded = parse(text).unwrap();
        assert_eq!(loaded.corpus.len(), 1);
        assert_eq!(loaded.rejected.len(), 1);
        assert!(matches!(loaded.rejected[0], CorpusError::MalformedRecord { line: 1, .. }));
    }

    #[test]
    fn out_of_range_sites_and_bad_coords_rejected() {
        let text = [
            r#"{"id":"a","sequence":"MKV","binding_sites":[3]}"#,
            r#"{"id":"b","sequence":"MKV","ptm_sites":[-1]}"#,
            r#"{"id":"c","sequence":"MKV","coords":[[0,0,0],null]}"#,
            r#"{"id":"d","sequence":""}"#,
            r#"{"id":"e","sequence":"MK1"}"#,
            r#"not json"#,
            r#"{"id":"f","sequence":"MKV","coords":[[0,0,0],null,[1,2,3]]}"#,
        ]
        .join("\n");
        let loaded = parse(&text).unwrap();
        assert_eq!(loaded.corpus.len(), 1);
        let lines: Vec<usize> = loaded
            .rejected
            .iter()
            .map(|e| match e {
                CorpusError::MalformedRecord { line, .. } => *line,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(lines, vec![1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = "{\"id\":\"a\",\"sequence\":\"MKV\"}\n{\"id\":\"a\",\"sequence\":\"MK\"}\n";
        let loaded = parse(text).unwrap();
        assert_eq!(loaded.corpus.len(), 1);
        assert_eq!(loaded.rejected.len(), 1);
    }

    #[test]
    fn empty_corpus_and_missing_file() {
        assert!(matches!(parse("\n\n"), Err(CorpusError::EmptyCorpus)));
        assert!(matches!(
            load_corpus("/nonexistent/corpus.jsonl", 512),
            Err(CorpusError::FileUnreadable { .. })
        ));
    }

    #[test]
    fn unknown_letters_map_to_sentinel() {
        let r = ProteinRecord::from_sequence("x", "AZBx");
        assert_eq!(r.sequence[0], AminoAcid::Ala);
        assert!(r.sequence[1..].iter().all(|&a| a == AminoAcid::Unknown));
        assert_eq!(AminoAcid::Unknown.index(), None);
    }

    #[test]
    fn amino_acid_names_round_trip() {
        for aa in AminoAcid::STANDARD {
            assert_eq!(AminoAcid::from_code(aa.code()), aa);
            assert_eq!(AminoAcid::from_three_letter(aa.three_letter()), Some(aa));
            assert_eq!(AminoAcid::from_full_name(aa.full_name()), Some(aa));
        }
        assert_eq!(AminoAcid::Pro.three_letter(), "Pro");
        assert_eq!(AminoAcid::Asp.full_name(), "Aspartic acid");
        let codes: String = AminoAcid::STANDARD.iter().map(|a| a.code()).collect();
        assert_eq!(codes, "ARNDCQEGHILKMFPSTWYV");
    }

    #[test]
    fn write_then_parse_round_trips() {
        let mut r = ProteinRecord::from_sequence("p", "MKVLA");
        r.coords = Some(vec![Some([0.0, 1.5, -2.25]), None, Some([1.0, 2.0, 3.0]), None, None]);
        r.ss_labels = Some("HS-TT".chars().map(|c| SecondaryStructure::from_char(c).unwrap()).collect());
        r.binding_sites = BTreeSet::from([1, 4]);
        r.ptm_sites = BTreeSet::from([0]);
        let mut buf = Vec::new();
        write_corpus([&r], &mut buf).unwrap();
        let loaded = parse_corpus(buf.as_slice(), 512).unwrap();
        assert_eq!(loaded.corpus.records()[0], r);
    }

    #[test]
    fn blosum62_spot_values_and_symmetry() {
        let m = load_blosum62();
        use AminoAcid::*;
        assert_eq!(m.score(Ala, Ala), Some(4));
        assert_eq!(m.score(Trp, Trp), Some(11));
        assert_eq!(m.score(Cys, Cys), Some(9));
        assert_eq!(m.score(Pro, Phe), Some(-4));
        assert_eq!(m.score(Pro, Phe), m.score(Phe, Pro));
        assert_eq!(m.score(Ala, Unknown), None);
        for a in AminoAcid::STANDARD {
            for b in AminoAcid::STANDARD {
                assert_eq!(m.score(a, b), m.score(b, a));
            }
        }
    }

    #[test]
    fn matrix_parser_rejects_asymmetry_and_gaps() {
        let mut text = BLOSUM62_NCBI.replacen("A  4 -1", "A  4  3", 1);
        assert!(matches!(SubstitutionMatrix::parse_ncbi(&text), Err(MatrixError::Asymmetric('A', 'R'))));
        text = BLOSUM62_NCBI.lines().filter(|l| !l.starts_with('W')).collect::<Vec<_>>().join("\n");
        assert_eq!(SubstitutionMatrix::parse_ncbi(&text), Err(MatrixError::Incomplete('W')));
    }
}
