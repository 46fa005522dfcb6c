//! Style-embedding corpora, attribute tables and their on-disk formats.
//!
//! Two corpus encodings are supported:
//!
//! * CSV with header `id,v0,...,v{D-1}` (values emitted with 17 significant
//!   digits so a CSV round trip is lossless);
//! * `SEMB` binary: magic `SEMB`, `u32` LE count, `u32` LE dimension, an id
//!   table of (`u16` LE byte length, UTF-8 bytes) entries, then
//!   `count * dimension` `f32` LE values in row-major order.
//!
//! Attribute tables are CSV files with header `id,attribute,value`.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::scalar::Scalar;

const SEMB_MAGIC: &[u8; 4] = b"SEMB";

/// Ordinal clarity labels: fast speech, normal speech, clear speech.
pub const CLARITY_FAST: f64 = -1.0;
pub const CLARITY_NORMAL: f64 = 0.0;
pub const CLARITY_CLEAR: f64 = 1.0;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("line {line}: expected {expected} values, found {found}")]
    RaggedRow {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: non-numeric cell {cell:?} in column {column:?}")]
    NonNumeric {
        line: u64,
        column: String,
        cell: String,
    },
    #[error("line {line}: non-finite value in column {column:?}")]
    NonFinite { line: u64, column: String },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: u64, id: String },
    #[error("duplicate id {0:?}")]
    DuplicateIdInCorpus(String),
    #[error("line {line}: duplicate ({id:?}, {attribute:?}) pair")]
    DuplicatePair {
        line: u64,
        id: String,
        attribute: String,
    },
    #[error("embedding {id:?} has dimension {found}, corpus dimension is {expected}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("embedding {0:?} contains a non-finite value")]
    NonFiniteValue(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("bad magic")]
    BadMagic,
    #[error("truncated payload")]
    TruncatedPayload,
    #[error("count/dimension mismatch: {0}")]
    CountMismatch(String),
    #[error("id {0:?} longer than 65535 bytes")]
    IdTooLong(String),
    #[error("id table entry is not valid UTF-8")]
    InvalidId,
    #[error("attribute {0:?} absent from table")]
    AttributeAbsent(String),
    #[error("attribute table references unknown utterance id {0:?}")]
    UnknownId(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One utterance's style vector.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleEmbedding {
    pub id: String,
    pub values: Vec<f32>,
}

impl StyleEmbedding {
    pub fn new(id: impl Into<String>, values: Vec<f32>) -> Self {
        Self {
            id: id.into(),
            values,
        }
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    /// Values widened (or kept) in the requested scalar type.
    pub fn values_as<T: Scalar>(&self) -> Vec<T> {
        self.values.iter().map(|&v| T::lit(f64::from(v))).collect()
    }

    /// Builds an embedding from any scalar vector, narrowing to `f32`.
    pub fn from_scalars<T: Scalar>(id: impl Into<String>, values: &[T]) -> Self {
        let values = values
            .iter()
            .map(|v| v.to_f32().unwrap_or(f32::NAN))
            .collect();
        Self::new(id, values)
    }
}

/// Non-empty collection of embeddings with a shared dimension and unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingCorpus {
    embeddings: Vec<StyleEmbedding>,
    dimension: usize,
}

impl EmbeddingCorpus {
    pub fn new(embeddings: Vec<StyleEmbedding>) -> Result<Self, StoreError> {
        let first = embeddings.first().ok_or(StoreError::EmptyCorpus)?;
        let dimension = first.dimension();
        if dimension == 0 {
            return Err(StoreError::CountMismatch("dimension is zero".into()));
        }
        let mut seen = HashSet::with_capacity(embeddings.len());
        for e in &embeddings {
            if e.dimension() != dimension {
                return Err(StoreError::DimensionMismatch {
                    id: e.id.clone(),
                    expected: dimension,
                    found: e.dimension(),
                });
            }
            if e.values.iter().any(|v| !v.is_finite()) {
                return Err(StoreError::NonFiniteValue(e.id.clone()));
            }
            if !seen.insert(e.id.as_str()) {
                return Err(StoreError::DuplicateIdInCorpus(e.id.clone()));
            }
        }
        Ok(Self {
            embeddings,
            dimension,
        })
    }

    pub fn embeddings(&self) -> &[StyleEmbedding] {
        &self.embeddings
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&StyleEmbedding> {
        self.embeddings.iter().find(|e| e.id == id)
    }

    pub fn into_embeddings(self) -> Vec<StyleEmbedding> {
        self.embeddings
    }

    /// Rows converted to `T`, in corpus order.
    pub fn rows_as<T: Scalar>(&self) -> Vec<Vec<T>> {
        self.embeddings.iter().map(|e| e.values_as()).collect()
    }

    pub fn load_csv(path: &Path) -> Result<Self, StoreError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse_csv(&text)
    }

    pub fn parse_csv(text: &str) -> Result<Self, StoreError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(text.as_bytes());
        let headers = reader.headers()?.clone();
        if headers.len() < 2 || &headers[0] != "id" {
            return Err(StoreError::MalformedHeader(
                "expected `id,v0,...,v{D-1}`".into(),
            ));
        }
        for (j, name) in headers.iter().skip(1).enumerate() {
            if name != format!("v{j}") {
                return Err(StoreError::MalformedHeader(format!(
                    "column {} is {name:?}, expected \"v{j}\"",
                    j + 1
                )));
            }
        }
        let dimension = headers.len() - 1;

        let mut embeddings = Vec::new();
        let mut seen = HashSet::new();
        for record in reader.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            if record.len() != dimension + 1 {
                return Err(StoreError::RaggedRow {
                    line,
                    expected: dimension,
                    found: record.len().saturating_sub(1),
                });
            }
            let id = record[0].to_string();
            let mut values = Vec::with_capacity(dimension);
            for (j, cell) in record.iter().skip(1).enumerate() {
                let v: f32 = cell.trim().parse().map_err(|_| StoreError::NonNumeric {
                    line,
                    column: headers[j + 1].to_string(),
                    cell: cell.to_string(),
                })?;
                if !v.is_finite() {
                    return Err(StoreError::NonFinite {
                        line,
                        column: headers[j + 1].to_string(),
                    });
                }
                values.push(v);
            }
            if !seen.insert(id.clone()) {
                return Err(StoreError::DuplicateId { line, id });
            }
            embeddings.push(StyleEmbedding { id, values });
        }
        Self::new(embeddings)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("id");
        for j in 0..self.dimension {
            out.push_str(&format!(",v{j}"));
        }
        out.push('\n');
        for e in &self.embeddings {
            out.push_str(&csv_escape(&e.id));
            for &v in &e.values {
                out.push_str(&format!(",{:.16e}", f64::from(v)));
            }
            out.push('\n');
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), StoreError> {
        fs::write(path, self.to_csv_string()).map_err(io_err(path))
    }

    pub fn to_semb_bytes(&self) -> Result<Vec<u8>, StoreError> {
        let mut out = Vec::new();
        out.extend_from_slice(SEMB_MAGIC);
        out.extend_from_slice(&(self.embeddings.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dimension as u32).to_le_bytes());
        for e in &self.embeddings {
            let len = u16::try_from(e.id.len()).map_err(|_| StoreError::IdTooLong(e.id.clone()))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(e.id.as_bytes());
        }
        for e in &self.embeddings {
            for v in &e.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_semb_bytes(bytes: &[u8]) -> Result<Self, StoreError> {
        let mut cur = ByteCursor::new(bytes);
        if cur.take(4).map_err(|_| StoreError::BadMagic)? != SEMB_MAGIC {
            return Err(StoreError::BadMagic);
        }
        let count = cur.u32()? as usize;
        let dimension = cur.u32()? as usize;
        if count == 0 {
            return Err(StoreError::EmptyCorpus);
        }
        if dimension == 0 {
            return Err(StoreError::CountMismatch("dimension is zero".into()));
        }
        let mut ids = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let len = cur.u16()? as usize;
            let raw = cur.take(len)?;
            ids.push(String::from_utf8(raw.to_vec()).map_err(|_| StoreError::InvalidId)?);
        }
        let payload = count
            .checked_mul(dimension)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| StoreError::CountMismatch("count * dimension overflows".into()))?;
        let data = cur.take(payload)?;
        if cur.remaining() != 0 {
            return Err(StoreError::CountMismatch(format!(
                "{} trailing bytes after {count}x{dimension} payload",
                cur.remaining()
            )));
        }
        let embeddings = ids
            .into_iter()
            .zip(data.chunks_exact(dimension * 4))
            .map(|(id, row)| StyleEmbedding {
                id,
                values: row
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                    .collect(),
            })
            .collect();
        Self::new(embeddings)
    }

    pub fn save_binary(&self, path: &Path) -> Result<(), StoreError> {
        let bytes = self.to_semb_bytes()?;
        let mut file = fs::File::create(path).map_err(io_err(path))?;
        file.write_all(&bytes).map_err(io_err(path))
    }

    pub fn load_binary(path: &Path) -> Result<Self, StoreError> {
        let bytes = fs::read(path).map_err(io_err(path))?;
        Self::from_semb_bytes(&bytes)
    }

    /// Loads by extension: `.csv` as CSV, anything else as `SEMB`.
    pub fn load(path: &Path) -> Result<Self, StoreError> {
        if has_csv_extension(path) {
            Self::load_csv(path)
        } else {
            Self::load_binary(path)
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        if has_csv_extension(path) {
            self.save_csv(path)
        } else {
            self.save_binary(path)
        }
    }
}

fn has_csv_extension(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

struct ByteCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteCursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], StoreError> {
        let end = self.pos.checked_add(n).ok_or(StoreError::TruncatedPayload)?;
        let out = self
            .bytes
            .get(self.pos..end)
            .ok_or(StoreError::TruncatedPayload)?;
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16, StoreError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, StoreError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

/// Per-utterance attribute annotations (`id,attribute,value`).
///
/// Loudness is stored as SPL in dB; clarity uses the ordinal labels
/// [`CLARITY_FAST`], [`CLARITY_NORMAL`], [`CLARITY_CLEAR`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AttributeTable {
    // attribute -> (id -> value)
    values: BTreeMap<String, BTreeMap<String, f64>>,
}

impl AttributeTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a value; returns `false` when the pair already exists.
    pub fn insert(&mut self, id: &str, attribute: &str, value: f64) -> bool {
        let column = self.values.entry(attribute.to_string()).or_default();
        if column.contains_key(id) {
            return false;
        }
        column.insert(id.to_string(), value);
        true
    }

    pub fn get(&self, id: &str, attribute: &str) -> Option<f64> {
        self.values.get(attribute)?.get(id).copied()
    }

    pub fn attributes(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    pub fn parse_csv(text: &str) -> Result<Self, StoreError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let headers = reader.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["id", "attribute", "value"] {
            return Err(StoreError::MalformedHeader(
                "expected `id,attribute,value`".into(),
            ));
        }
        let mut table = Self::new();
        for record in reader.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            let value: f64 = record[2].trim().parse().map_err(|_| StoreError::NonNumeric {
                line,
                column: "value".into(),
                cell: record[2].to_string(),
            })?;
            if !value.is_finite() {
                return Err(StoreError::NonFinite {
                    line,
                    column: "value".into(),
                });
            }
            if !table.insert(&record[0], &record[1], value) {
                return Err(StoreError::DuplicatePair {
                    line,
                    id: record[0].to_string(),
                    attribute: record[1].to_string(),
                });
            }
        }
        Ok(table)
    }

    pub fn load_csv(path: &Path) -> Result<Self, StoreError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse_csv(&text)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("id,attribute,value\n");
        for (attribute, column) in &self.values {
            for (id, value) in column {
                out.push_str(&format!(
                    "{},{},{:.16e}\n",
                    csv_escape(id),
                    csv_escape(attribute),
                    value
                ));
            }
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), StoreError> {
        fs::write(path, self.to_csv_string()).map_err(io_err(path))
    }
}

/// Pairs each corpus embedding carrying `attribute` with its value, in corpus order.
pub fn join_attributes<'c>(
    corpus: &'c EmbeddingCorpus,
    table: &AttributeTable,
    attribute: &str,
) -> Result<Vec<(&'c StyleEmbedding, f64)>, StoreError> {
    let column = table
        .values
        .get(attribute)
        .ok_or_else(|| StoreError::AttributeAbsent(attribute.to_string()))?;
    if let Some(id) = column.keys().find(|id| corpus.get(id).is_none()) {
        return Err(StoreError::UnknownId(id.clone()));
    }
    Ok(corpus
        .embeddings()
        .iter()
        .filter_map(|e| column.get(&e.id).map(|&v| (e, v)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(rows: &[(&str, &[f32])]) -> EmbeddingCorpus {
        EmbeddingCorpus::new(
            rows.iter()
                .map(|(id, v)| StyleEmbedding::new(*id, v.to_vec()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn parses_three_rows() {
        let c = EmbeddingCorpus::parse_csv("id,v0,v1\na,1,2\nb,3,4\nc,5,6\n").unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.dimension(), 2);
        assert_eq!(c.embeddings()[2].values, vec![5.0, 6.0]);
        assert_eq!(c.embeddings()[1].id, "b");
    }

    #[test]
    fn empty_data_section_is_error() {
        let err = EmbeddingCorpus::parse_csv("id,v0,v1\n").unwrap_err();
        assert_eq!(err.to_string(), "empty corpus");
    }

    #[test]
    fn short_row_names_line() {
        let err = EmbeddingCorpus::parse_csv("id,v0,v1\na,1,2\nb,3\n").unwrap_err();
        match err {
            StoreError::RaggedRow {
                line,
                expected,
                found,
            } => {
                assert_eq!((line, expected, found), (3, 2, 1));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err_string("id,v0,v1\na,1,2\nb,3\n").contains("line 3"));
    }

    fn err_string(text: &str) -> String {
        EmbeddingCorpus::parse_csv(text).unwrap_err().to_string()
    }

    #[test]
    fn header_and_cell_errors() {
        assert!(err_string("name,v0\na,1\n").contains("malformed header"));
        assert!(err_string("id,v0,v2\na,1,2\n").contains("malformed header"));
        assert!(err_string("id,v0\na,x\n").contains("non-numeric"));
        assert!(err_string("id,v0\na,1\na,2\n").contains("duplicate id"));
        assert!(err_string("id,v0\na,NaN\n").contains("non-finite"));
    }

    #[test]
    fn semb_byte_count_follows_format() {
        // 4 magic + 4 count + 4 dim, then 2 + 1 for id "a", then 2 f32 values.
        let c = corpus(&[("a", &[1.0, 2.0])]);
        let bytes = c.to_semb_bytes().unwrap();
        assert_eq!(bytes.len(), 12 + 3 + 8);
        assert_eq!(&bytes[..4], b"SEMB");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &2u32.to_le_bytes());
        assert_eq!(&bytes[12..15], &[1, 0, b'a']);
    }

    #[test]
    fn semb_errors() {
        let c = corpus(&[("a", &[1.0, 2.0]), ("b", &[3.0, 4.0])]);
        let mut bytes = c.to_semb_bytes().unwrap();
        assert_eq!(EmbeddingCorpus::from_semb_bytes(&bytes).unwrap(), c);

        let truncated = &bytes[..bytes.len() - 3];
        assert_eq!(
            EmbeddingCorpus::from_semb_bytes(truncated)
                .unwrap_err()
                .to_string(),
            "truncated payload"
        );
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(
            EmbeddingCorpus::from_semb_bytes(&extra),
            Err(StoreError::CountMismatch(_))
        ));
        bytes[0] = b'X';
        assert_eq!(
            EmbeddingCorpus::from_semb_bytes(&bytes)
                .unwrap_err()
                .to_string(),
            "bad magic"
        );
    }

    #[test]
    fn unwritable_directory_is_io_error() {
        let c = corpus(&[("a", &[1.0])]);
        let err = c
            .save_binary(Path::new("/nonexistent-dir/for/sure/out.semb"))
            .unwrap_err();
        assert!(matches!(err, StoreError::Io { .. }));
    }

    #[test]
    fn csv_roundtrip_is_lossless() {
        let c = corpus(&[("x,1", &[0.1, -3.3e-7, 12345.678]), ("y", &[1.0, 2.0, f32::MAX])]);
        let back = EmbeddingCorpus::parse_csv(&c.to_csv_string()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn join_keeps_corpus_order() {
        let c = corpus(&[("a", &[1.0]), ("b", &[2.0]), ("c", &[3.0])]);
        let mut t = AttributeTable::new();
        t.insert("c", "spl_db", 70.0);
        t.insert("a", "spl_db", 60.0);
        let pairs = join_attributes(&c, &t, "spl_db").unwrap();
        let ids: Vec<_> = pairs.iter().map(|(e, v)| (e.id.as_str(), *v)).collect();
        assert_eq!(ids, vec![("a", 60.0), ("c", 70.0)]);

        t.insert("b", "spl_db", 65.0);
        assert_eq!(join_attributes(&c, &t, "spl_db").unwrap().len(), 3);
        assert!(matches!(
            join_attributes(&c, &t, "clarity"),
            Err(StoreError::AttributeAbsent(_))
        ));
        t.insert("zzz", "spl_db", 1.0);
        assert!(matches!(
            join_attributes(&c, &t, "spl_db"),
            Err(StoreError::UnknownId(_))
        ));
    }

    #[test]
    fn attribute_table_rejects_duplicate_pairs() {
        let text = "id,attribute,value\na,spl_db,60\na,spl_db,61\n";
        assert!(matches!(
            AttributeTable::parse_csv(text),
            Err(StoreError::DuplicatePair { line: 3, .. })
        ));
        let ok = AttributeTable::parse_csv("id,attribute,value\na,spl_db,60\na,clarity,1\n").unwrap();
        assert_eq!(ok.get("a", "clarity"), Some(CLARITY_CLEAR));
        assert_eq!(
            AttributeTable::parse_csv(&ok.to_csv_string()).unwrap(),
            ok
        );
    }
}
