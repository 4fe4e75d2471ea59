use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::index;
use rayon::prelude::*;

use super::{Embedding, KernelModel, Similarity};
use crate::data::Dataset;
use crate::error::{Error, Result};
use super::model_io::{parse_header, HeaderReader};
use crate::rng;

/// Marker for "x fell into no partition of this partitioning" (hypersphere misses).
pub const NO_CELL: u16 = u16::MAX;

/// How a sample of ψ points partitions space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mechanism {
    /// Nearest-center cells; every point lands in exactly one cell.
    Voronoi,
    /// A ball around each center with radius equal to the distance to its
    /// nearest fellow center; points outside all balls land nowhere.
    Hypersphere,
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mechanism::Voronoi => "voronoi",
            Mechanism::Hypersphere => "hypersphere",
        })
    }
}

impl FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "voronoi" => Ok(Mechanism::Voronoi),
            "hypersphere" | "sphere" => Ok(Mechanism::Hypersphere),
            other => Err(Error::InvalidParameter(format!("unknown mechanism {other:?}"))),
        }
    }
}

/// Isolation kernel built from `t` random partitionings of ψ points each.
#[derive(Debug, Clone, PartialEq)]
pub struct IkModel {
    mechanism: Mechanism,
    psi: usize,
    t: usize,
    dim: usize,
    seed: u64,
    /// `t * psi` centers of dimension `dim`, partitioning-major.
    centers: Vec<f64>,
    /// Squared radii per center; empty for Voronoi.
    radii_sq: Vec<f64>,
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl IkModel {
    /// Draws `t` independent ψ-subsets of `data` without replacement.
    /// Partitioning `i` uses its own random stream, so the model does not
    /// depend on how the work is scheduled.
    pub fn fit(data: &Dataset, psi: usize, t: usize, mechanism: Mechanism, seed: u64) -> Result<Self> {
        let n = data.len();
        let min_psi = if mechanism == Mechanism::Hypersphere { 2 } else { 1 };
        if psi < min_psi || psi >= NO_CELL as usize {
            return Err(Error::InvalidParameter(format!(
                "psi = {psi} is out of range for the {mechanism} mechanism"
            )));
        }
        if psi > n {
            return Err(Error::SampleTooLarge {
                requested: psi,
                available: n,
            });
        }
        if t == 0 {
            return Err(Error::InvalidParameter("t must be at least 1".into()));
        }
        let dim = data.dim();
        let parts: Vec<(Vec<f64>, Vec<f64>)> = (0..t)
            .into_par_iter()
            .map(|p| {
                let mut r = rng::stream(seed, rng::STREAM_PARTITION_BASE + p as u64);
                let picked = index::sample(&mut r, n, psi).into_vec();
                let mut centers = Vec::with_capacity(psi * dim);
                for &i in &picked {
                    centers.extend_from_slice(data.point(i));
                }
                let radii = match mechanism {
                    Mechanism::Voronoi => Vec::new(),
                    Mechanism::Hypersphere => (0..psi)
                        .map(|a| {
                            let za = &centers[a * dim..(a + 1) * dim];
                            (0..psi)
                                .filter(|&b| b != a)
                                .map(|b| sq_dist(za, &centers[b * dim..(b + 1) * dim]))
                                .fold(f64::INFINITY, f64::min)
                        })
                        .collect(),
                };
                (centers, radii)
            })
            .collect();
        let mut centers = Vec::with_capacity(t * psi * dim);
        let mut radii_sq = Vec::new();
        for (c, r) in parts {
            centers.extend(c);
            radii_sq.extend(r);
        }
        Ok(Self {
            mechanism,
            psi,
            t,
            dim,
            seed,
            centers,
            radii_sq,
        })
    }

    pub fn mechanism(&self) -> Mechanism {
        self.mechanism
    }

    pub fn psi(&self) -> usize {
        self.psi
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Center `c` of partitioning `p`.
    pub fn center(&self, p: usize, c: usize) -> &[f64] {
        let at = (p * self.psi + c) * self.dim;
        &self.centers[at..at + self.dim]
    }

    /// Radius of center `c` in partitioning `p` (hypersphere models only).
    pub fn radius(&self, p: usize, c: usize) -> Option<f64> {
        self.radii_sq.get(p * self.psi + c).map(|r| r.sqrt())
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Cell of `x` in partitioning `p`: nearest center (lowest index on ties),
    /// restricted for hyperspheres to the balls that contain `x`.
    #[inline]
    fn cell_of(&self, x: &[f64], p: usize) -> u16 {
        let base = p * self.psi;
        let mut best = NO_CELL;
        let mut best_d = f64::INFINITY;
        let centers = &self.centers[base * self.dim..(base + self.psi) * self.dim];
        for (c, z) in centers.chunks_exact(self.dim).enumerate() {
            let dist = sq_dist(x, z);
            if dist < best_d
                && (self.mechanism == Mechanism::Voronoi || dist <= self.radii_sq[base + c])
            {
                best_d = dist;
                best = c as u16;
            }
        }
        best
    }

    fn fill_cells(&self, x: &[f64], out: &mut [u16]) {
        for (p, slot) in out.iter_mut().enumerate() {
            *slot = self.cell_of(x, p);
        }
    }

    pub fn embed(&self, x: &[f64]) -> Result<FeatureVector> {
        self.check_dim(x)?;
        let mut cells = vec![NO_CELL; self.t];
        self.fill_cells(x, &mut cells);
        Ok(FeatureVector {
            cells,
            psi: self.psi,
        })
    }

    /// `(1/t) ⟨φ(x), φ(y)⟩`: the fraction of partitionings in which `x` and
    /// `y` share a cell.
    pub fn similarity(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let fx = self.embed(x)?;
        let fy = self.embed(y)?;
        Ok(fx.dot(&fy) as f64 / self.t as f64)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} isolation", super::model_io::MAGIC)?;
        writeln!(w, "mechanism = {}", self.mechanism)?;
        writeln!(w, "psi = {}", self.psi)?;
        writeln!(w, "t = {}", self.t)?;
        writeln!(w, "dim = {}", self.dim)?;
        writeln!(w, "seed = {}", self.seed)?;
        writeln!(w, "# partition cell radius coordinates...")?;
        for p in 0..self.t {
            for c in 0..self.psi {
                let radius = match self.radius(p, c) {
                    Some(r) => r.to_string(),
                    None => "-".to_string(),
                };
                let coords: Vec<String> = self.center(p, c).iter().map(f64::to_string).collect();
                writeln!(w, "{p} {c} {radius} {}", coords.join(" "))?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = HeaderReader::new(r, "isolation")?;
        let mechanism: Mechanism = parse_header(&mut lines, "mechanism")?;
        let psi: usize = parse_header(&mut lines, "psi")?;
        let t: usize = parse_header(&mut lines, "t")?;
        let dim: usize = parse_header(&mut lines, "dim")?;
        let seed: u64 = parse_header(&mut lines, "seed")?;
        let mut centers = Vec::with_capacity(t * psi * dim);
        let mut radii_sq = Vec::new();
        for p in 0..t {
            for c in 0..psi {
                let line = lines.next_data()?;
                let fields: Vec<&str> = line.split_whitespace().collect();
                if fields.len() != 3 + dim
                    || fields[0].parse::<usize>().ok() != Some(p)
                    || fields[1].parse::<usize>().ok() != Some(c)
                {
                    return Err(Error::ModelFormat(format!("bad center line {line:?}")));
                }
                if mechanism == Mechanism::Hypersphere {
                    let r: f64 = fields[2]
                        .parse()
                        .map_err(|_| Error::ModelFormat(format!("bad radius in {line:?}")))?;
                    radii_sq.push(r * r);
                }
                for f in &fields[3..] {
                    centers.push(
                        f.parse()
                            .map_err(|_| Error::ModelFormat(format!("bad coordinate in {line:?}")))?,
                    );
                }
            }
        }
        Ok(Self {
            mechanism,
            psi,
            t,
            dim,
            seed,
            centers,
            radii_sq,
        })
    }
}

impl KernelModel for IkModel {
    type Embedding = IkEmbedding;

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_dataset(&self, data: &Dataset) -> Result<IkEmbedding> {
        if data.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: data.dim(),
            });
        }
        let t = self.t;
        let mut cells = vec![NO_CELL; data.len() * t];
        cells
            .par_chunks_mut(t * 256)
            .enumerate()
            .for_each(|(chunk, block)| {
                for (k, row) in block.chunks_mut(t).enumerate() {
                    self.fill_cells(data.point(chunk * 256 + k), row);
                }
            });
        Ok(IkEmbedding {
            t,
            psi: self.psi,
            cells,
        })
    }
}

/// Feature vector of one point: `t` blocks of width ψ, each one-hot or empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureVector {
    cells: Vec<u16>,
    psi: usize,
}

impl FeatureVector {
    pub fn t(&self) -> usize {
        self.cells.len()
    }

    /// Index of the set bit in block `b`, if any.
    pub fn cell(&self, b: usize) -> Option<usize> {
        match self.cells[b] {
            NO_CELL => None,
            c => Some(c as usize),
        }
    }

    pub fn set_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c != NO_CELL).count()
    }

    /// `‖φ(x)‖²`, equal to the number of set bits.
    pub fn squared_norm(&self) -> f64 {
        self.set_count() as f64
    }

    /// Number of blocks in which both vectors set the same bit.
    pub fn dot(&self, other: &FeatureVector) -> usize {
        self.cells
            .iter()
            .zip(&other.cells)
            .filter(|(a, b)| a == b && **a != NO_CELL)
            .count()
    }

    /// Explicit `{0,1}^{t·ψ}` vector.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.cells.len() * self.psi];
        for (b, c) in self.cells.iter().enumerate() {
            if *c != NO_CELL {
                v[b * self.psi + *c as usize] = 1.0;
            }
        }
        v
    }
}

/// A whole dataset in isolation-kernel feature space, one row of `t` cell
/// indices per point.
#[derive(Debug, Clone)]
pub struct IkEmbedding {
    t: usize,
    psi: usize,
    cells: Vec<u16>,
}

impl IkEmbedding {
    #[inline]
    pub fn row(&self, i: usize) -> &[u16] {
        &self.cells[i * self.t..(i + 1) * self.t]
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn psi(&self) -> usize {
        self.psi
    }

    pub fn feature(&self, i: usize) -> FeatureVector {
        FeatureVector {
            cells: self.row(i).to_vec(),
            psi: self.psi,
        }
    }

    /// Count of partitionings in which `i` and `j` share a cell.
    #[inline]
    pub fn shared_cells(&self, i: usize, j: usize) -> usize {
        self.row(i)
            .iter()
            .zip(self.row(j))
            .filter(|(a, b)| a == b && **a != NO_CELL)
            .count()
    }
}

impl Similarity for IkEmbedding {
    fn len(&self) -> usize {
        self.cells.len() / self.t
    }

    fn similarity(&self, i: usize, j: usize) -> f64 {
        self.shared_cells(i, j) as f64 / self.t as f64
    }
}

impl Embedding for IkEmbedding {
    fn feature_dim(&self) -> usize {
        self.t * self.psi
    }

    #[inline]
    fn accumulate(&self, i: usize, sums: &mut [f64], weight: f64) {
        for (b, &c) in self.row(i).iter().enumerate() {
            if c != NO_CELL {
                sums[b * self.psi + c as usize] += weight;
            }
        }
    }

    #[inline]
    fn dot(&self, i: usize, sums: &[f64]) -> f64 {
        self.row(i)
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != NO_CELL)
            .map(|(b, &c)| sums[b * self.psi + c as usize])
            .sum()
    }

    fn scale(&self) -> f64 {
        1.0 / self.t as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(values: &[f64]) -> Dataset {
        Dataset::from_flat(values.to_vec(), 1, None).unwrap()
    }

    #[test]
    fn psi_equal_to_n_uses_every_point() {
        let ds = line(&[0.0, 0.3, 0.7, 1.0]);
        let m = IkModel::fit(&ds, 4, 3, Mechanism::Voronoi, 1).unwrap();
        for p in 0..3 {
            let mut got: Vec<f64> = (0..4).map(|c| m.center(p, c)[0]).collect();
            got.sort_by(f64::total_cmp);
            assert_eq!(got, vec![0.0, 0.3, 0.7, 1.0]);
        }
    }

    #[test]
    fn two_point_voronoi_uses_bisector() {
        let ds = line(&[0.0, 1.0]);
        let m = IkModel::fit(&ds, 2, 1, Mechanism::Voronoi, 5).unwrap();
        let f = m.embed(&[0.4]).unwrap();
        let c = f.cell(0).unwrap();
        assert_eq!(m.center(0, c), &[0.0]);
        let g = m.embed(&[0.6]).unwrap();
        assert_eq!(m.center(0, g.cell(0).unwrap()), &[1.0]);
    }

    #[test]
    fn center_maps_to_its_own_cell() {
        let ds = Dataset::from_flat((0..40).map(|i| (i as f64 * 0.37).sin()).collect(), 2, None).unwrap();
        let m = IkModel::fit(&ds, 6, 10, Mechanism::Voronoi, 2).unwrap();
        for p in 0..10 {
            for c in 0..6 {
                let f = m.embed(m.center(p, c)).unwrap();
                assert_eq!(f.cell(p), Some(c));
            }
        }
    }

    #[test]
    fn hypersphere_far_point_misses_everything() {
        let ds = line(&[0.0, 0.1, 0.2, 0.3, 0.4]);
        let m = IkModel::fit(&ds, 3, 8, Mechanism::Hypersphere, 3).unwrap();
        let f = m.embed(&[50.0]).unwrap();
        assert_eq!(f.set_count(), 0);
        assert_eq!(f.squared_norm(), 0.0);
        assert!(m.radius(0, 0).unwrap() > 0.0);
    }

    #[test]
    fn fit_is_deterministic_and_validates() {
        let ds = line(&[0.0, 0.2, 0.5, 0.9]);
        let a = IkModel::fit(&ds, 2, 5, Mechanism::Hypersphere, 9).unwrap();
        let b = IkModel::fit(&ds, 2, 5, Mechanism::Hypersphere, 9).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            IkModel::fit(&ds, 5, 5, Mechanism::Voronoi, 9),
            Err(Error::SampleTooLarge { .. })
        ));
        assert!(IkModel::fit(&ds, 1, 5, Mechanism::Hypersphere, 9).is_err());
        assert!(matches!(a.embed(&[0.0, 1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn self_similarity_is_one_for_voronoi() {
        let ds = line(&[0.0, 0.2, 0.5, 0.9, 1.3]);
        let m = IkModel::fit(&ds, 3, 16, Mechanism::Voronoi, 4).unwrap();
        for x in [-3.0, 0.1, 0.77, 8.0] {
            assert_eq!(m.similarity(&[x], &[x]).unwrap(), 1.0);
        }
    }

    #[test]
    fn model_text_round_trip() {
        let ds = Dataset::from_flat((0..30).map(|i| (i as f64 * 1.3).cos()).collect(), 3, None).unwrap();
        for mech in [Mechanism::Voronoi, Mechanism::Hypersphere] {
            let m = IkModel::fit(&ds, 4, 6, mech, 11).unwrap();
            let mut buf = Vec::new();
            m.write_to(&mut buf).unwrap();
            let back = IkModel::read_from(buf.as_slice()).unwrap();
            assert_eq!(back.centers, m.centers);
            assert_eq!(back.mechanism, m.mechanism);
            for p in 0..6 {
                for c in 0..4 {
                    let (a, b) = (m.radius(p, c), back.radius(p, c));
                    assert_eq!(a.is_some(), b.is_some());
                    if let (Some(a), Some(b)) = (a, b) {
                        assert!((a - b).abs() <= 1e-15 * a.max(1.0));
                    }
                }
            }
        }
    }
}
