use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::index;
use rayon::prelude::*;

use super::model_io::{parse_header, HeaderReader, MAGIC};
use super::{Embedding, KernelModel, Similarity};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng;

/// Gram eigenvalues below this are clamped before inversion.
pub const EIGEN_FLOOR: f64 = 1e-10;

/// `exp(-‖x - y‖² / (2σ²))`.
#[inline]
pub fn gaussian(x: &[f64], y: &[f64], sigma: f64) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-d2 / (2.0 * sigma * sigma)).exp()
}

/// Nyström feature map of the Gaussian kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct NystromModel {
    sigma: f64,
    dim: usize,
    seed: u64,
    /// Landmarks, row-major `m × dim`.
    landmarks: Vec<f64>,
    /// Symmetric `m × m` inverse square root of the landmark Gram matrix.
    whitening: DMatrix<f64>,
}

impl NystromModel {
    /// Picks `landmarks` points of `data` uniformly without replacement.
    pub fn fit(data: &Dataset, landmarks: usize, sigma: f64, seed: u64) -> Result<Self> {
        if landmarks == 0 {
            return Err(Error::InvalidParameter("landmark count must be at least 1".into()));
        }
        if landmarks > data.len() {
            return Err(Error::SampleTooLarge {
                requested: landmarks,
                available: data.len(),
            });
        }
        let mut r = rng::stream(seed, rng::STREAM_NYSTROM);
        let mut picked = index::sample(&mut r, data.len(), landmarks).into_vec();
        picked.sort_unstable();
        let mut flat = Vec::with_capacity(landmarks * data.dim());
        for i in picked {
            flat.extend_from_slice(data.point(i));
        }
        Self::from_landmarks(flat, data.dim(), sigma, seed)
    }

    /// Builds the map from explicit landmarks (row-major, `dim` columns).
    pub fn from_landmarks(landmarks: Vec<f64>, dim: usize, sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
        }
        if dim == 0 || landmarks.is_empty() || !landmarks.len().is_multiple_of(dim) {
            return Err(Error::InvalidParameter("landmarks must be a non-empty m × dim array".into()));
        }
        let m = landmarks.len() / dim;
        let row = |i: usize| &landmarks[i * dim..(i + 1) * dim];
        let gram = DMatrix::from_fn(m, m, |i, j| gaussian(row(i), row(j), sigma));
        let eig = SymmetricEigen::new(gram);
        let inv_sqrt = DVector::from_iterator(
            m,
            eig.eigenvalues.iter().map(|&l| 1.0 / l.max(EIGEN_FLOOR).sqrt()),
        );
        let v = &eig.eigenvectors;
        let mut whitening = v * DMatrix::from_diagonal(&inv_sqrt) * v.transpose();
        // Remove round-off asymmetry.
        for i in 0..m {
            for j in i + 1..m {
                let avg = 0.5 * (whitening[(i, j)] + whitening[(j, i)]);
                whitening[(i, j)] = avg;
                whitening[(j, i)] = avg;
            }
        }
        Ok(Self {
            sigma,
            dim,
            seed,
            landmarks,
            whitening,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn landmark_count(&self) -> usize {
        self.landmarks.len() / self.dim
    }

    pub fn landmark(&self, j: usize) -> &[f64] {
        &self.landmarks[j * self.dim..(j + 1) * self.dim]
    }

    pub fn whitening(&self) -> &DMatrix<f64> {
        &self.whitening
    }

    fn embed_into(&self, x: &[f64], kx: &mut [f64], out: &mut [f64]) {
        for (j, k) in kx.iter_mut().enumerate() {
            *k = gaussian(x, self.landmark(j), self.sigma);
        }
        // Row i of a symmetric matrix is column i, which is contiguous.
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.whitening.column(i).iter().zip(kx.iter()).map(|(w, k)| w * k).sum();
        }
    }

    /// `W^{-1/2} k(x, L)`; its dot products approximate the Gaussian kernel.
    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        let m = self.landmark_count();
        let mut kx = vec![0.0; m];
        let mut out = vec![0.0; m];
        self.embed_into(x, &mut kx, &mut out);
        Ok(out)
    }

    /// Approximate Gaussian kernel value via the feature map.
    pub fn similarity(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let fx = self.embed(x)?;
        let fy = self.embed(y)?;
        Ok(fx.iter().zip(&fy).map(|(a, b)| a * b).sum())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let m = self.landmark_count();
        writeln!(w, "{MAGIC} nystrom")?;
        writeln!(w, "sigma = {}", self.sigma)?;
        writeln!(w, "dim = {}", self.dim)?;
        writeln!(w, "landmarks = {m}")?;
        writeln!(w, "seed = {}", self.seed)?;
        writeln!(w, "# landmark coordinates, one per line")?;
        for j in 0..m {
            let coords: Vec<String> = self.landmark(j).iter().map(f64::to_string).collect();
            writeln!(w, "{}", coords.join(" "))?;
        }
        writeln!(w, "# whitening matrix, one row per line")?;
        for i in 0..m {
            let row: Vec<String> = self.whitening.row(i).iter().map(f64::to_string).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = HeaderReader::new(r, "nystrom")?;
        let sigma: f64 = parse_header(&mut lines, "sigma")?;
        let dim: usize = parse_header(&mut lines, "dim")?;
        let m: usize = parse_header(&mut lines, "landmarks")?;
        let seed: u64 = parse_header(&mut lines, "seed")?;
        let mut read_row = |width: usize| -> Result<Vec<f64>> {
            let line = lines.next_data()?;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::ModelFormat(format!("bad number in {line:?}")))?;
            if row.len() != width {
                return Err(Error::ModelFormat(format!("expected {width} values in {line:?}")));
            }
            Ok(row)
        };
        let mut landmarks = Vec::with_capacity(m * dim);
        for _ in 0..m {
            landmarks.extend(read_row(dim)?);
        }
        let mut wflat = Vec::with_capacity(m * m);
        for _ in 0..m {
            wflat.extend(read_row(m)?);
        }
        if sigma.is_nan() || sigma <= 0.0 || dim == 0 || m == 0 {
            return Err(Error::ModelFormat("invalid nystrom header".into()));
        }
        Ok(Self {
            sigma,
            dim,
            seed,
            landmarks,
            whitening: DMatrix::from_row_slice(m, m, &wflat),
        })
    }
}

impl KernelModel for NystromModel {
    type Embedding = DenseEmbedding;

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_dataset(&self, data: &Dataset) -> Result<DenseEmbedding> {
        if data.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: data.dim(),
            });
        }
        let m = self.landmark_count();
        let mut features = vec![0.0; data.len() * m];
        features.par_chunks_mut(m * 64).enumerate().for_each(|(chunk, block)| {
            let mut kx = vec![0.0; m];
            for (k, row) in block.chunks_mut(m).enumerate() {
                self.embed_into(data.point(chunk * 64 + k), &mut kx, row);
            }
        });
        Ok(DenseEmbedding::new(features, m))
    }
}

/// Dense real feature vectors, one row per point.
#[derive(Debug, Clone)]
pub struct DenseEmbedding {
    features: Vec<f64>,
    width: usize,
}

impl DenseEmbedding {
    /// Wraps row-major features of the given width.
    pub fn new(features: Vec<f64>, width: usize) -> Self {
        assert!(width > 0 && features.len().is_multiple_of(width), "ragged feature matrix");
        Self { features, width }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.width..(i + 1) * self.width]
    }
}

impl Similarity for DenseEmbedding {
    fn len(&self) -> usize {
        self.features.len() / self.width
    }

    fn similarity(&self, i: usize, j: usize) -> f64 {
        self.row(i).iter().zip(self.row(j)).map(|(a, b)| a * b).sum()
    }
}

impl Embedding for DenseEmbedding {
    fn feature_dim(&self) -> usize {
        self.width
    }

    fn accumulate(&self, i: usize, sums: &mut [f64], weight: f64) {
        for (s, f) in sums.iter_mut().zip(self.row(i)) {
            *s += weight * f;
        }
    }

    fn dot(&self, i: usize, sums: &[f64]) -> f64 {
        self.row(i).iter().zip(sums).map(|(a, b)| a * b).sum()
    }

    fn scale(&self) -> f64 {
        1.0
    }
}

/// The exact Gaussian kernel over a dataset's points (no approximation).
#[derive(Debug, Clone, Copy)]
pub struct ExactGaussian<'a> {
    data: &'a Dataset,
    sigma: f64,
}

impl<'a> ExactGaussian<'a> {
    pub fn new(data: &'a Dataset, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
        }
        Ok(Self { data, sigma })
    }
}

impl Similarity for ExactGaussian<'_> {
    fn len(&self) -> usize {
        self.data.len()
    }

    fn similarity(&self, i: usize, j: usize) -> f64 {
        gaussian(self.data.point(i), self.data.point(j), self.sigma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Dataset {
        let pts: Vec<f64> = (0..20).map(|i| ((i * 7 % 11) as f64) / 10.0).collect();
        Dataset::from_flat(pts, 2, None).unwrap()
    }

    #[test]
    fn single_landmark_is_plain_gaussian() {
        let m = NystromModel::from_landmarks(vec![0.2, 0.4], 2, 0.5, 0).unwrap();
        assert!((m.whitening()[(0, 0)] - 1.0).abs() < 1e-12);
        let x = [0.5, 0.1];
        let f = m.embed(&x).unwrap();
        assert!((f[0] - gaussian(&x, &[0.2, 0.4], 0.5)).abs() < 1e-12);
        assert!((m.embed(&[0.2, 0.4]).unwrap()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_rank_matches_exact_kernel() {
        let ds = small();
        let m = NystromModel::fit(&ds, ds.len(), 0.3, 1).unwrap();
        let emb = m.embed_dataset(&ds).unwrap();
        for i in 0..ds.len() {
            for j in 0..ds.len() {
                let exact = gaussian(ds.point(i), ds.point(j), 0.3);
                assert!((emb.similarity(i, j) - exact).abs() <= 1e-6, "{i} {j}");
            }
        }
    }

    #[test]
    fn duplicate_landmarks_stay_finite() {
        let m = NystromModel::from_landmarks(vec![0.1, 0.1, 0.1, 0.1, 0.9, 0.9], 2, 0.2, 0).unwrap();
        assert!(m.embed(&[0.3, 0.5]).unwrap().iter().all(|v| v.is_finite()));
        let w = m.whitening();
        assert_eq!(w, &w.transpose());
    }

    #[test]
    fn distant_points_small_sigma() {
        let ds = Dataset::from_flat(vec![0.0, 0.0, 1.0, 1.0, 0.5, 0.5], 2, None).unwrap();
        let m = NystromModel::fit(&ds, 3, 0.05, 0).unwrap();
        assert!(m.similarity(&[0.0, 0.0], &[1.0, 1.0]).unwrap().abs() < 1e-9);
    }

    #[test]
    fn validation() {
        let ds = small();
        assert!(matches!(NystromModel::fit(&ds, 11, 0.1, 0), Err(Error::SampleTooLarge { .. })));
        assert!(NystromModel::fit(&ds, 3, 0.0, 0).is_err());
        assert!(NystromModel::fit(&ds, 3, -1.0, 0).is_err());
        let m = NystromModel::fit(&ds, 3, 0.1, 0).unwrap();
        assert!(matches!(m.embed(&[0.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn model_text_round_trip() {
        let ds = small();
        let m = NystromModel::fit(&ds, 5, 0.25, 3).unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        assert_eq!(NystromModel::read_from(buf.as_slice()).unwrap(), m);
    }
}
