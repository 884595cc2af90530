//! The `.act` activation tensor format and span pooling.
//!
//! Layout: `b"ACT1"` | u32 LE header length | UTF-8 JSON header | row-major
//! little-endian `f32` payload.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"ACT1";

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic bytes {found:?}, expected \"ACT1\"")]
    BadMagic { found: Vec<u8> },
    #[error("truncated file: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("malformed header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("unsupported dtype {0:?}")]
    Dtype(String),
    #[error("shape mismatch: header declares {declared:?} ({expected} values) but payload holds {found_bytes} bytes")]
    ShapeMismatch {
        declared: [usize; 2],
        expected: usize,
        found_bytes: usize,
    },
    #[error("header lists {ids} element ids for {rows} rows")]
    IdCount { ids: usize, rows: usize },
    #[error("duplicate element id {0:?}")]
    DuplicateId(String),
    #[error("non-finite value {value} at row {row}, column {col}")]
    NonFinite { row: usize, col: usize, value: f32 },
    #[error("span table line {line}: {message}")]
    SpanParse { line: usize, message: String },
    #[error("span {element_id:?} [{start}, {end}) covers no rows of a {rows}-row matrix")]
    EmptySpan {
        element_id: String,
        start: f64,
        end: f64,
        rows: usize,
    },
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Unit activations for `n` identified elements at one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMatrix {
    data: Array2<f32>,
    element_ids: Vec<String>,
    pub layer: u32,
    pub checkpoint_words: Option<u64>,
    pub model: String,
}

#[derive(Serialize, Deserialize)]
struct Header {
    dtype: String,
    shape: [usize; 2],
    element_ids: Vec<String>,
    layer: u32,
    checkpoint_words: Option<u64>,
    model: String,
}

impl ActivationMatrix {
    pub fn new(data: Array2<f32>, element_ids: Vec<String>) -> Result<Self> {
        if element_ids.len() != data.nrows() {
            return Err(TensorError::IdCount {
                ids: element_ids.len(),
                rows: data.nrows(),
            });
        }
        let mut seen = HashSet::with_capacity(element_ids.len());
        for id in &element_ids {
            if !seen.insert(id.as_str()) {
                return Err(TensorError::DuplicateId(id.clone()));
            }
        }
        for ((row, col), &value) in data.indexed_iter() {
            if !value.is_finite() {
                return Err(TensorError::NonFinite { row, col, value });
            }
        }
        Ok(Self {
            data,
            element_ids,
            layer: 0,
            checkpoint_words: None,
            model: String::new(),
        })
    }

    pub fn with_layer(mut self, layer: u32) -> Self {
        self.layer = layer;
        self
    }

    pub fn with_checkpoint_words(mut self, words: Option<u64>) -> Self {
        self.checkpoint_words = words;
        self
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = model.into();
        self
    }

    pub fn data(&self) -> &Array2<f32> {
        &self.data
    }

    pub fn element_ids(&self) -> &[String] {
        &self.element_ids
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f32> {
        self.data.row(i)
    }

    /// Position of every element id, for joining against gold structures.
    pub fn index(&self) -> std::collections::HashMap<&str, usize> {
        self.element_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect()
    }

    /// Activations widened to `f64` for numerical work.
    pub fn to_f64(&self) -> Array2<f64> {
        self.data.mapv(f64::from)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            dtype: "f32".to_string(),
            shape: [self.nrows(), self.ncols()],
            element_ids: self.element_ids.clone(),
            layer: self.layer,
            checkpoint_words: self.checkpoint_words,
            model: self.model.clone(),
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(8 + header.len() + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for value in self.data.iter() {
            out.extend_from_slice(&value.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(TensorError::Truncated {
                needed: 4,
                available: bytes.len(),
            });
        }
        if &bytes[..4] != MAGIC {
            return Err(TensorError::BadMagic {
                found: bytes[..4].to_vec(),
            });
        }
        if bytes.len() < 8 {
            return Err(TensorError::Truncated {
                needed: 8,
                available: bytes.len(),
            });
        }
        let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let payload_start = 8 + header_len;
        if bytes.len() < payload_start {
            return Err(TensorError::Truncated {
                needed: payload_start,
                available: bytes.len(),
            });
        }
        let header: Header = serde_json::from_slice(&bytes[8..payload_start])?;
        if header.dtype != "f32" {
            return Err(TensorError::Dtype(header.dtype));
        }
        let [n, k] = header.shape;
        let payload = &bytes[payload_start..];
        let expected = n * k;
        if payload.len() != expected * 4 {
            return Err(TensorError::ShapeMismatch {
                declared: header.shape,
                expected,
                found_bytes: payload.len(),
            });
        }
        let values: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let data = Array2::from_shape_vec((n, k), values).expect("length checked above");
        Ok(Self::new(data, header.element_ids)?
            .with_layer(header.layer)
            .with_checkpoint_words(header.checkpoint_words)
            .with_model(header.model))
    }
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<ActivationMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| TensorError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ActivationMatrix::from_bytes(&bytes)
}

pub fn write_tensor(matrix: &ActivationMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, matrix.to_bytes()).map_err(|source| TensorError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// One annotated span. `start`/`end` are seconds for speech, token indices
/// for text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub utterance: String,
    pub element_id: String,
    pub start: f64,
    pub end: f64,
    #[serde(default)]
    pub label: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpanTable {
    pub spans: Vec<Span>,
    /// Frames per second; `None` means spans are token indices.
    pub frame_rate: Option<f64>,
}

impl SpanTable {
    pub fn new(spans: Vec<Span>, frame_rate: Option<f64>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (i, span) in spans.iter().enumerate() {
            if span.start.partial_cmp(&span.end) != Some(std::cmp::Ordering::Less) {
                return Err(TensorError::SpanParse {
                    line: i + 1,
                    message: format!(
                        "span {:?} has start {} >= end {}",
                        span.element_id, span.start, span.end
                    ),
                });
            }
            if !seen.insert(span.element_id.as_str()) {
                return Err(TensorError::DuplicateId(span.element_id.clone()));
            }
        }
        Ok(Self { spans, frame_rate })
    }

    /// Parses JSON lines, one [`Span`] per non-blank line.
    pub fn from_jsonl(text: &str, frame_rate: Option<f64>) -> Result<Self> {
        let mut spans = Vec::new();
        for (i, line) in BufReader::new(text.as_bytes()).lines().enumerate() {
            let line = line.expect("reading from memory");
            if line.trim().is_empty() {
                continue;
            }
            let span: Span = serde_json::from_str(&line).map_err(|e| TensorError::SpanParse {
                line: i + 1,
                message: e.to_string(),
            })?;
            spans.push(span);
        }
        Self::new(spans, frame_rate)
    }

    pub fn read(path: impl AsRef<Path>, frame_rate: Option<f64>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| TensorError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_jsonl(&text, frame_rate)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for span in &self.spans {
            out.push_str(&serde_json::to_string(span).expect("span serializes"));
            out.push('\n');
        }
        out
    }

    /// Half-open row range covered by `span`, clipped to `rows`.
    pub fn row_range(&self, span: &Span, rows: usize) -> std::ops::Range<usize> {
        let (lo, hi) = match self.frame_rate {
            Some(rate) => (
                snapped(span.start * rate).floor(),
                snapped(span.end * rate).ceil(),
            ),
            None => (span.start.floor(), span.end.ceil()),
        };
        let lo = lo.max(0.0).min(rows as f64) as usize;
        let hi = hi.max(0.0).min(rows as f64) as usize;
        lo..hi.max(lo)
    }
}

// Products like 0.7 * 50.0 land a few ulps off the integer they denote.
fn snapped(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r
    } else {
        x
    }
}

/// Span pooling modes. Only the arithmetic mean is implemented.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolMode {
    #[default]
    Mean,
}

/// Averages the rows each span covers into one element-level row.
pub fn pool_spans(
    frames: &ActivationMatrix,
    spans: &SpanTable,
    mode: PoolMode,
) -> Result<ActivationMatrix> {
    let PoolMode::Mean = mode;
    let k = frames.ncols();
    let mut out = Array2::<f32>::zeros((spans.spans.len(), k));
    for (i, span) in spans.spans.iter().enumerate() {
        let range = spans.row_range(span, frames.nrows());
        if range.is_empty() {
            return Err(TensorError::EmptySpan {
                element_id: span.element_id.clone(),
                start: span.start,
                end: span.end,
                rows: frames.nrows(),
            });
        }
        let count = range.len() as f64;
        let mut acc = vec![0f64; k];
        for r in range {
            for (a, &v) in acc.iter_mut().zip(frames.row(r)) {
                *a += f64::from(v);
            }
        }
        for (o, a) in out.row_mut(i).iter_mut().zip(acc) {
            *o = (a / count) as f32;
        }
    }
    let ids = spans.spans.iter().map(|s| s.element_id.clone()).collect();
    Ok(ActivationMatrix::new(out, ids)?
        .with_layer(frames.layer)
        .with_checkpoint_words(frames.checkpoint_words)
        .with_model(frames.model.clone()))
}
