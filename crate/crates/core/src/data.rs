//! Datasets, CSV input/output, normalization and subsampling.

use std::io::Write;
use std::path::Path;

use rand::seq::index;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng;

/// `n` points in `d` dimensions stored row-major, with optional class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Vec<f64>,
    n: usize,
    d: usize,
    labels: Option<Vec<usize>>,
    name: String,
}

impl Dataset {
    /// Builds a dataset from row-major coordinates.
    pub fn from_flat(points: Vec<f64>, d: usize, labels: Option<Vec<usize>>) -> Result<Self> {
        if d == 0 || points.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if !points.len().is_multiple_of(d) {
            return Err(Error::InvalidParameter(format!(
                "{} coordinates do not divide into rows of dimension {d}",
                points.len()
            )));
        }
        let n = points.len() / d;
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::LengthMismatch {
                    left: n,
                    right: l.len(),
                });
            }
        }
        Ok(Self {
            points,
            n,
            d,
            labels,
            name: String::new(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Option<Vec<usize>>) -> Result<Self> {
        let d = rows.first().map(Vec::len).ok_or(Error::EmptyDataset)?;
        let mut points = Vec::with_capacity(rows.len() * d);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::RaggedRow {
                    row: i,
                    expected: d,
                    found: r.len(),
                });
            }
            points.extend_from_slice(r);
        }
        Self::from_flat(points, d, labels)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.d..(i + 1) * self.d]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Number of distinct classes, when labels are present.
    pub fn class_count(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().copied().max().map_or(0, |m| m + 1))
    }

    /// Dataset restricted to `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut points = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            points.extend_from_slice(self.point(i));
        }
        Dataset {
            points,
            n: indices.len(),
            d: self.d,
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            name: self.name.clone(),
        }
    }

    /// SHA-256 over dimensions, coordinates (little-endian bits) and labels.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n as u64).to_le_bytes());
        h.update((self.d as u64).to_le_bytes());
        for v in &self.points {
            h.update(v.to_bits().to_le_bytes());
        }
        if let Some(l) = &self.labels {
            for v in l {
                h.update((*v as u64).to_le_bytes());
            }
        }
        h.finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect::<String>()
    }

    /// Writes `x1..xd[,label]` rows with a header line. Labels are written as integers.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut header: Vec<String> = (1..=self.d).map(|j| format!("x{j}")).collect();
        if self.labels.is_some() {
            header.push("label".to_string());
        }
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.n {
            let mut line = self
                .point(i)
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",");
            if let Some(l) = &self.labels {
                line.push(',');
                line.push_str(&l[i].to_string());
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// Indices of a subsample drawn without replacement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSet {
    pub indices: Vec<usize>,
    pub seed: u64,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Reads a comma-separated file. A first row containing any non-numeric
/// feature cell is taken as a header. Integer labels keep their numeric
/// order when mapped to dense codes; other labels are coded by first appearance.
pub fn load_csv(path: impl AsRef<Path>, label_column: Option<&str>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(read_csv(file, label_column)?.with_name(name))
}

pub fn read_csv<R: std::io::Read>(reader: R, label_column: Option<&str>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut records = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Csv {
            row,
            message: e.to_string(),
        })?;
        if rec.len() == 1 && rec.get(0).is_some_and(str::is_empty) {
            continue;
        }
        records.push(rec);
    }
    let first = records.first().ok_or(Error::EmptyDataset)?;
    let width = first.len();

    let header: Option<Vec<String>> = if first.iter().any(|c| c.parse::<f64>().is_err()) {
        Some(first.iter().map(str::to_string).collect())
    } else {
        None
    };
    let label_idx = match label_column {
        None => None,
        Some(name) => {
            let idx = header
                .as_ref()
                .and_then(|h| h.iter().position(|c| c == name))
                .ok_or_else(|| Error::MissingLabelColumn(name.to_string()))?;
            Some(idx)
        }
    };
    let skip = usize::from(header.is_some());
    let d = width - usize::from(label_idx.is_some());
    if d == 0 {
        return Err(Error::EmptyDataset);
    }

    let mut points = Vec::with_capacity((records.len() - skip) * d);
    let mut raw_labels: Vec<&str> = Vec::new();
    for (row, rec) in records.iter().enumerate().skip(skip) {
        if rec.len() != width {
            return Err(Error::RaggedRow {
                row,
                expected: width,
                found: rec.len(),
            });
        }
        for (column, cell) in rec.iter().enumerate() {
            if Some(column) == label_idx {
                raw_labels.push(cell);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::NonNumeric {
                row,
                column,
                value: cell.to_string(),
            })?;
            points.push(v);
        }
    }
    let labels = label_idx.map(|_| encode_labels(&raw_labels));
    Dataset::from_flat(points, d, labels)
}

/// Integer labels keep their numeric order; anything else is coded by first appearance.
fn encode_labels(raw: &[&str]) -> Vec<usize> {
    let numeric: Option<Vec<i64>> = raw.iter().map(|c| c.parse::<i64>().ok()).collect();
    if let Some(values) = numeric {
        let mut uniq = values.clone();
        uniq.sort_unstable();
        uniq.dedup();
        return values
            .iter()
            .map(|v| uniq.binary_search(v).expect("value is in its own set"))
            .collect();
    }
    let mut codes: Vec<&str> = Vec::new();
    raw.iter()
        .map(|c| {
            codes.iter().position(|x| x == c).unwrap_or_else(|| {
                codes.push(c);
                codes.len() - 1
            })
        })
        .collect()
}

/// Rescales every feature column to `[0, 1]`; constant columns become 0.
pub fn normalize_minmax(data: &Dataset) -> Dataset {
    let (n, d) = (data.n, data.d);
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for i in 0..n {
        for (j, &v) in data.point(i).iter().enumerate() {
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
    }
    let mut points = data.points.clone();
    for row in points.chunks_exact_mut(d) {
        for (j, v) in row.iter_mut().enumerate() {
            let range = hi[j] - lo[j];
            *v = if range > 0.0 { (*v - lo[j]) / range } else { 0.0 };
        }
    }
    Dataset {
        points,
        ..data.clone()
    }
}

/// Draws `s` distinct indices uniformly without replacement.
pub fn subsample(data: &Dataset, s: usize, seed: u64) -> Result<SampleSet> {
    sample_indices(data.len(), s, seed)
}

pub(crate) fn sample_indices(n: usize, s: usize, seed: u64) -> Result<SampleSet> {
    if s > n {
        return Err(Error::SampleTooLarge {
            requested: s,
            available: n,
        });
    }
    if s == 0 {
        return Err(Error::InvalidParameter("sample size must be at least 1".into()));
    }
    let mut rng = rng::stream(seed, rng::STREAM_SAMPLE);
    Ok(SampleSet {
        indices: index::sample(&mut rng, n, s).into_vec(),
        seed,
    })
}
