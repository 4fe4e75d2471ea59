//! Brute-force reference implementations shared by the integration tests.

#![allow(dead_code)]

use std::collections::BTreeMap;

use mmc_core::data::Dataset;
use mmc_core::kernels::{Embedding, IkModel, Mechanism, Similarity};

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        let d = a[i] - b[i];
        s += d * d;
    }
    s
}

/// Region of `x` in partitioning `p`, recomputed from the centers alone.
pub fn brute_region(model: &IkModel, x: &[f64], p: usize) -> Option<usize> {
    let psi = model.psi();
    let centers: Vec<&[f64]> = (0..psi).map(|c| model.center(p, c)).collect();
    let mut candidates: Vec<(f64, usize)> = Vec::new();
    for (c, z) in centers.iter().enumerate() {
        let d = dist2(x, z);
        let inside = match model.mechanism() {
            Mechanism::Voronoi => true,
            Mechanism::Hypersphere => {
                let mut r2 = f64::INFINITY;
                for (o, w) in centers.iter().enumerate() {
                    if o != c {
                        r2 = r2.min(dist2(z, w));
                    }
                }
                d <= r2
            }
        };
        if inside {
            candidates.push((d, c));
        }
    }
    candidates
        .into_iter()
        .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)))
        .map(|(_, c)| c)
}

/// Number of partitionings in which `x` and `y` share a region.
pub fn brute_shared(model: &IkModel, x: &[f64], y: &[f64]) -> usize {
    (0..model.t())
        .filter(|&p| match (brute_region(model, x, p), brute_region(model, y, p)) {
            (Some(a), Some(b)) => a == b,
            _ => false,
        })
        .count()
}

/// Connected components by depth-first flood fill over the full matrix,
/// as sorted member lists, sorted.
pub fn flood_fill(sim: &dyn Fn(usize, usize) -> f64, s: usize, tau: f64) -> Vec<Vec<usize>> {
    let mut seen = vec![false; s];
    let mut out = Vec::new();
    for start in 0..s {
        if seen[start] {
            continue;
        }
        let mut comp = vec![];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(a) = stack.pop() {
            comp.push(a);
            for (b, done) in seen.iter_mut().enumerate() {
                if !*done && sim(a, b) > tau {
                    *done = true;
                    stack.push(b);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out.sort();
    out
}

fn ln_fact(n: u64) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

/// Adjusted mutual information (max normalization), evaluated term by term
/// from the two label vectors.
pub fn ami_oracle(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let nf = n as f64;
    let mut joint: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut ra: BTreeMap<usize, u64> = BTreeMap::new();
    let mut rb: BTreeMap<usize, u64> = BTreeMap::new();
    for i in 0..n {
        *joint.entry((a[i], b[i])).or_default() += 1;
        *ra.entry(a[i]).or_default() += 1;
        *rb.entry(b[i]).or_default() += 1;
    }
    if ra.len() == 1 && rb.len() == 1 {
        return 1.0;
    }
    let h = |m: &BTreeMap<usize, u64>| -> f64 {
        m.values()
            .map(|&c| {
                let p = c as f64 / nf;
                -p * p.ln()
            })
            .sum()
    };
    let mut mi = 0.0;
    for (&(x, y), &c) in &joint {
        let c = c as f64;
        mi += c / nf * (nf * c / (ra[&x] as f64 * rb[&y] as f64)).ln();
    }
    let mut emi = 0.0;
    let n64 = n as u64;
    for &ai in ra.values() {
        for &bj in rb.values() {
            let lo = 1.max((ai + bj) as i64 - n as i64) as u64;
            for nij in lo..=ai.min(bj) {
                let x = nij as f64;
                let log_p = ln_fact(ai) + ln_fact(bj) + ln_fact(n64 - ai) + ln_fact(n64 - bj)
                    - ln_fact(n64)
                    - ln_fact(nij)
                    - ln_fact(ai - nij)
                    - ln_fact(bj - nij)
                    - ln_fact(n64 + nij - ai - bj);
                emi += x / nf * (nf * x / (ai as f64 * bj as f64)).ln() * log_p.exp();
            }
        }
    }
    (mi - emi) / (h(&ra).max(h(&rb)) - emi)
}

/// One-hot features held densely: the isolation kernel seen through a
/// generic dense embedding.
pub struct DenseOneHot {
    pub rows: Vec<Vec<f64>>,
    pub t: usize,
}

impl DenseOneHot {
    pub fn from_ik(model: &IkModel, data: &Dataset) -> Self {
        let rows = (0..data.len())
            .map(|i| model.embed(data.point(i)).unwrap().to_dense())
            .collect();
        Self { rows, t: model.t() }
    }
}

impl Similarity for DenseOneHot {
    fn len(&self) -> usize {
        self.rows.len()
    }

    fn similarity(&self, i: usize, j: usize) -> f64 {
        let d: f64 = self.rows[i].iter().zip(&self.rows[j]).map(|(a, b)| a * b).sum();
        d / self.t as f64
    }
}

impl Embedding for DenseOneHot {
    fn feature_dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    fn accumulate(&self, i: usize, sums: &mut [f64], weight: f64) {
        for (s, v) in sums.iter_mut().zip(&self.rows[i]) {
            *s += weight * v;
        }
    }

    fn dot(&self, i: usize, sums: &[f64]) -> f64 {
        self.rows[i].iter().zip(sums).map(|(a, b)| a * b).sum()
    }

    fn scale(&self) -> f64 {
        1.0 / self.t as f64
    }
}

/// A random dataset of `n` points in `d` dimensions from a simple LCG.
pub fn lcg_points(n: usize, d: usize, seed: u64) -> Vec<f64> {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    (0..n * d)
        .map(|_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        })
        .collect()
}

/// A symmetric similarity matrix with entries in [0, 1).
pub struct RandomGraph {
    s: usize,
    values: Vec<f64>,
}

impl RandomGraph {
    pub fn new(s: usize, seed: u64) -> Self {
        Self {
            s,
            values: lcg_points(s * s, 1, seed),
        }
    }
}

impl Similarity for RandomGraph {
    fn len(&self) -> usize {
        self.s
    }

    fn similarity(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.values[a * self.s + b]
    }
}
