//! Embedding matrices exchanged with the feature extractor as CSV
//! (`image_id,f0,f1,...,f{d-1}`).

use std::collections::HashSet;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EmbeddingError {
    #[error("bad embedding header: {0}")]
    BadHeader(String),
    #[error("line {line}: expected {expected} columns, found {found}")]
    RaggedRows {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: non-finite value `{raw}` in column {column}")]
    NonFiniteValue { line: u64, column: usize, raw: String },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("csv error at line {line}: {reason}")]
    Csv { line: u64, reason: String },
    #[error("shape mismatch: {ids} ids, dim {dim}, {values} values")]
    Shape { ids: usize, dim: usize, values: usize },
}

/// `n x d` row-major feature matrix keyed by image id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    ids: Vec<String>,
    dim: usize,
    values: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(ids: Vec<String>, dim: usize, values: Vec<f64>) -> Result<Self, EmbeddingError> {
        if values.len() != ids.len() * dim {
            return Err(EmbeddingError::Shape {
                ids: ids.len(),
                dim,
                values: values.len(),
            });
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(EmbeddingError::DuplicateId(id.clone()));
            }
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFiniteValue {
                line: (pos / dim.max(1)) as u64 + 2,
                column: pos % dim.max(1) + 1,
                raw: values[pos].to_string(),
            });
        }
        Ok(EmbeddingMatrix { ids, dim, values })
    }

    pub fn from_rows(ids: Vec<String>, rows: &[Vec<f64>]) -> Result<Self, EmbeddingError> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != dim) {
            return Err(EmbeddingError::RaggedRows {
                line: i as u64 + 2,
                expected: dim + 1,
                found: r.len() + 1,
            });
        }
        Self::new(ids, dim, rows.concat())
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    /// Sub-matrix of the given ids in the given order; unknown ids are skipped.
    pub fn select<'a>(&self, ids: impl IntoIterator<Item = &'a String>) -> EmbeddingMatrix {
        let index: std::collections::HashMap<&str, usize> =
            self.ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let mut out_ids = Vec::new();
        let mut values = Vec::new();
        for id in ids {
            if let Some(&i) = index.get(id.as_str()) {
                out_ids.push(id.clone());
                values.extend_from_slice(self.row(i));
            }
        }
        EmbeddingMatrix {
            ids: out_ids,
            dim: self.dim,
            values,
        }
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.row(i).to_vec()).collect()
    }
}

/// Nine significant digits in scientific notation.
pub fn format_value(v: f64) -> String {
    format!("{v:.8e}")
}

pub fn read_embeddings(bytes: &[u8]) -> Result<EmbeddingMatrix, EmbeddingError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| EmbeddingError::Csv {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    if headers.get(0).map(str::trim) != Some("image_id") {
        return Err(EmbeddingError::BadHeader("first column must be image_id".into()));
    }
    for (k, h) in headers.iter().skip(1).enumerate() {
        if h.trim() != format!("f{k}") {
            return Err(EmbeddingError::BadHeader(format!("column {} is `{h}`, expected f{k}", k + 1)));
        }
    }
    let dim = headers.len() - 1;
    let mut ids = Vec::new();
    let mut values = Vec::new();
    let mut seen = HashSet::new();
    for row in reader.records() {
        let row = row.map_err(|e| EmbeddingError::Csv {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != dim + 1 {
            return Err(EmbeddingError::RaggedRows {
                line,
                expected: dim + 1,
                found: row.len(),
            });
        }
        let id = row[0].trim().to_string();
        if !seen.insert(id.clone()) {
            return Err(EmbeddingError::DuplicateId(id));
        }
        for (column, raw) in row.iter().enumerate().skip(1) {
            let v: f64 = raw.trim().parse().map_err(|_| EmbeddingError::Csv {
                line,
                reason: format!("cannot parse `{raw}` in column {column}"),
            })?;
            if !v.is_finite() {
                return Err(EmbeddingError::NonFiniteValue {
                    line,
                    column,
                    raw: raw.to_string(),
                });
            }
            values.push(v);
        }
        ids.push(id);
    }
    Ok(EmbeddingMatrix { ids, dim, values })
}

pub fn write_embeddings(m: &EmbeddingMatrix) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["image_id".to_string()];
    header.extend((0..m.dim()).map(|k| format!("f{k}")));
    w.write_record(&header).expect("in-memory write");
    for (i, id) in m.ids().iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(m.row(i).iter().map(|&v| format_value(v)));
        w.write_record(&rec).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}
