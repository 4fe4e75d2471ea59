//! Experimental harnesses: cohesiveness curves, the two failure-condition
//! diagnostics, objective-versus-correction curves and the scale-up timer.
//!
//! Everything here is analysis-only and quadratic in `n` where pairwise
//! similarities are involved, so inputs are capped at [`MAX_PAIRWISE_N`].

use std::time::{Duration, Instant};

use petgraph::unionfind::UnionFind;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::clustering::{run_mmc, ClusterParams, StageTimes};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::{Embedding, Similarity};
use crate::massdist::{cluster_maps, objective_from_maps};
use crate::metrics::ami_score;
use crate::rng;
use crate::synthetic::{generate_synthetic, Family};

/// Largest dataset accepted by the pairwise analyses.
pub const MAX_PAIRWISE_N: usize = 5000;

/// Threshold on the density ratio used by [`check_condition_two`].
pub const CONDITION_TWO_RATIO: f64 = 4.0;

fn check_pairwise_size(n: usize) -> Result<()> {
    if n > MAX_PAIRWISE_N {
        return Err(Error::InvalidParameter(format!(
            "pairwise analysis is limited to {MAX_PAIRWISE_N} points, got {n}"
        )));
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(())
}

/// Dense symmetric similarity matrix, row-major, computed in parallel.
fn pairwise<S: Similarity + ?Sized>(sim: &S) -> Vec<f64> {
    let n = sim.len();
    let mut m = vec![0.0; n * n];
    m.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for (j, v) in row.iter_mut().enumerate() {
            *v = sim.similarity(i, j);
        }
    });
    m
}

/// One connected component of the thresholded similarity graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentStats {
    pub size: usize,
    /// Smallest member index, which identifies the component.
    pub first_member: usize,
    /// Mean pairwise similarity; `None` for singletons.
    pub mean_similarity: Option<f64>,
    /// Most frequent ground-truth label and its count, when labels are known.
    pub majority: Option<(usize, usize)>,
}

impl ComponentStats {
    pub fn purity(&self) -> Option<f64> {
        self.majority.map(|(_, c)| c as f64 / self.size as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TauRecord {
    pub tau: f64,
    /// Components, largest first.
    pub components: Vec<ComponentStats>,
}

impl TauRecord {
    pub fn component_count(&self) -> usize {
        self.components.len()
    }

    /// The component standing for class `class`: the largest one whose
    /// majority label is `class` and which holds at least
    /// `min_coverage · class_size` points of that class.
    pub fn class_component(&self, class: usize, class_size: usize, min_coverage: f64) -> Option<&ComponentStats> {
        self.components.iter().find(|c| {
            c.majority
                .is_some_and(|(l, cnt)| l == class && cnt as f64 >= min_coverage * class_size as f64)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohesivenessCurve {
    pub records: Vec<TauRecord>,
}

impl CohesivenessCurve {
    pub fn taus(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.tau).collect()
    }

    /// Per-τ mean similarities of the components representing `class_a` and
    /// `class_b`, for every τ where both exist.
    pub fn paired_cohesiveness(
        &self,
        labels: &[usize],
        class_a: usize,
        class_b: usize,
        min_coverage: f64,
    ) -> Vec<(f64, f64, f64)> {
        let size = |c: usize| labels.iter().filter(|&&l| l == c).count();
        let (na, nb) = (size(class_a), size(class_b));
        self.records
            .iter()
            .filter_map(|r| {
                let a = r.class_component(class_a, na, min_coverage)?;
                let b = r.class_component(class_b, nb, min_coverage)?;
                if a.first_member == b.first_member {
                    return None;
                }
                Some((r.tau, a.mean_similarity?, b.mean_similarity?))
            })
            .collect()
    }

    /// CSV with one row per (τ, component).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("tau,component,size,first_member,mean_similarity,majority_label,purity\n");
        for r in &self.records {
            for (i, c) in r.components.iter().enumerate() {
                let ms = c.mean_similarity.map(|v| v.to_string()).unwrap_or_default();
                let (ml, pu) = match c.majority {
                    Some((l, _)) => (l.to_string(), c.purity().unwrap().to_string()),
                    None => (String::new(), String::new()),
                };
                s.push_str(&format!("{},{i},{},{},{ms},{ml},{pu}\n", r.tau, c.size, c.first_member));
            }
        }
        s
    }
}

/// Components of the graph with an edge wherever similarity exceeds τ, and
/// each component's mean pairwise similarity, for every τ in an ascending
/// grid.
pub fn cohesiveness_curve<S: Similarity + ?Sized>(
    sim: &S,
    labels: Option<&[usize]>,
    tau_grid: &[f64],
) -> Result<CohesivenessCurve> {
    let n = sim.len();
    check_pairwise_size(n)?;
    if tau_grid.is_empty() {
        return Err(Error::InvalidParameter("tau grid is empty".into()));
    }
    if tau_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("tau grid must be strictly ascending".into()));
    }
    if let Some(l) = labels {
        if l.len() != n {
            return Err(Error::LengthMismatch { left: l.len(), right: n });
        }
    }
    let m = pairwise(sim);
    let records = tau_grid
        .par_iter()
        .map(|&tau| {
            let mut uf = UnionFind::<usize>::new(n);
            for i in 0..n {
                for j in i + 1..n {
                    if m[i * n + j] > tau {
                        uf.union(i, j);
                    }
                }
            }
            let roots = uf.into_labeling();
            let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n];
            for (i, &r) in roots.iter().enumerate() {
                groups[r].push(i);
            }
            let mut components: Vec<ComponentStats> = groups
                .into_iter()
                .filter(|g| !g.is_empty())
                .map(|g| component_stats(&g, &m, n, labels))
                .collect();
            components.sort_by(|a, b| b.size.cmp(&a.size).then(a.first_member.cmp(&b.first_member)));
            TauRecord { tau, components }
        })
        .collect();
    Ok(CohesivenessCurve { records })
}

fn component_stats(members: &[usize], m: &[f64], n: usize, labels: Option<&[usize]>) -> ComponentStats {
    let size = members.len();
    let mean_similarity = (size > 1).then(|| {
        let mut sum = 0.0;
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                sum += m[i * n + j];
            }
        }
        sum / (size * (size - 1) / 2) as f64
    });
    let majority = labels.map(|l| {
        let mut counts = std::collections::BTreeMap::new();
        for &i in members {
            *counts.entry(l[i]).or_insert(0usize) += 1;
        }
        counts
            .into_iter()
            .fold((0, 0), |best, (lab, c)| if c > best.1 { (lab, c) } else { best })
    });
    ComponentStats {
        size,
        first_member: members[0],
        mean_similarity,
        majority,
    }
}

/// Members of each class, for 0-based dense labels.
fn class_members(labels: &[usize]) -> Vec<Vec<usize>> {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut out = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        out[l].push(i);
    }
    out
}

/// Mean Euclidean distance from each member to its nearest fellow member.
pub fn mean_nn_distance(data: &Dataset, members: &[usize]) -> f64 {
    if members.len() < 2 {
        return f64::NAN;
    }
    let total: f64 = members
        .par_iter()
        .map(|&i| {
            members
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| {
                    data.point(i)
                        .iter()
                        .zip(data.point(j))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .sum();
    total / members.len() as f64
}

fn labels_of(data: &Dataset, what: &'static str) -> Result<Vec<usize>> {
    data.labels()
        .map(<[usize]>::to_vec)
        .ok_or(Error::LabelsRequired(what))
}

/// Result of the first failure-condition check.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionOne {
    /// Class taken as the sparse cluster.
    pub sparse: usize,
    /// The two dense classes.
    pub dense: [usize; 2],
    /// Highest-similarity peak of each class, indexed by class.
    pub peaks: Vec<usize>,
    /// Largest similarity between the sparse peak and another sparse member.
    pub s_hat: f64,
    /// Best bottleneck similarity over chains joining the two dense peaks.
    pub bottleneck: f64,
    /// Whether `s_hat < bottleneck`, i.e. the failure condition is present.
    pub holds: bool,
}

/// Peak of a member set: the member with the largest summed similarity to
/// the others (lowest index on ties).
fn peak<S: Similarity + ?Sized>(sim: &S, members: &[usize]) -> usize {
    let sums: Vec<f64> = members
        .par_iter()
        .map(|&x| members.iter().map(|&y| sim.similarity(x, y)).sum())
        .collect();
    let mut best = 0;
    for (a, &s) in sums.iter().enumerate() {
        if s > sums[best] {
            best = a;
        }
    }
    members[best]
}

/// Maximum spanning tree over the complete similarity graph (dense Prim),
/// returned as a parent array rooted at `root`.
fn maximum_spanning_tree<S: Similarity + ?Sized>(sim: &S, root: usize) -> Vec<(usize, f64)> {
    let n = sim.len();
    let mut in_tree = vec![false; n];
    let mut best = vec![(root, f64::NEG_INFINITY); n];
    let mut parent = vec![(root, f64::INFINITY); n];
    let mut current = root;
    in_tree[root] = true;
    for _ in 1..n {
        let mut next = usize::MAX;
        let mut next_w = f64::NEG_INFINITY;
        for v in 0..n {
            if in_tree[v] {
                continue;
            }
            let w = sim.similarity(current, v);
            if w > best[v].1 {
                best[v] = (current, w);
            }
            if next == usize::MAX || best[v].1 > next_w {
                next = v;
                next_w = best[v].1;
            }
        }
        in_tree[next] = true;
        parent[next] = best[next];
        current = next;
    }
    parent
}

/// Largest over all chains from `a` to `b` of the smallest similarity along
/// the chain, read off the maximum spanning tree.
pub fn bottleneck_similarity<S: Similarity + ?Sized>(sim: &S, a: usize, b: usize) -> f64 {
    if a == b {
        return 1.0;
    }
    let parent = maximum_spanning_tree(sim, a);
    let mut v = b;
    let mut bottleneck = f64::INFINITY;
    while v != a {
        let (p, w) = parent[v];
        bottleneck = bottleneck.min(w);
        v = p;
    }
    bottleneck
}

/// Checks whether a dataset of two dense clusters and one distant sparse
/// cluster meets the first failure condition under `sim`. The sparse class
/// is the one with the largest mean nearest-neighbor distance.
pub fn check_condition_one<S: Similarity + ?Sized>(data: &Dataset, sim: &S) -> Result<ConditionOne> {
    check_pairwise_size(data.len())?;
    if sim.len() != data.len() {
        return Err(Error::LengthMismatch {
            left: sim.len(),
            right: data.len(),
        });
    }
    let labels = labels_of(data, "condition-one check")?;
    let classes = class_members(&labels);
    if classes.len() != 3 || classes.iter().any(|c| c.len() < 2) {
        return Err(Error::InvalidParameter(
            "condition-one check needs exactly three labelled clusters of at least two points".into(),
        ));
    }
    let spread: Vec<f64> = classes.iter().map(|c| mean_nn_distance(data, c)).collect();
    let sparse = (0..3).fold(0, |b, c| if spread[c] > spread[b] { c } else { b });
    let dense = match sparse {
        0 => [1, 2],
        1 => [0, 2],
        _ => [0, 1],
    };
    let peaks: Vec<usize> = classes.iter().map(|c| peak(sim, c)).collect();
    let pa = peaks[sparse];
    let s_hat = classes[sparse]
        .iter()
        .filter(|&&x| x != pa)
        .map(|&x| sim.similarity(x, pa))
        .fold(f64::NEG_INFINITY, f64::max);
    let bottleneck = bottleneck_similarity(sim, peaks[dense[0]], peaks[dense[1]]);
    Ok(ConditionOne {
        sparse,
        dense,
        peaks,
        s_hat,
        bottleneck,
        holds: s_hat < bottleneck,
    })
}

/// Result of the second failure-condition check.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionTwo {
    pub dense: usize,
    pub sparse: usize,
    /// `min_x κ(x, η_x)` per class, where `η_x` is x's most similar fellow member.
    pub min_nn_similarity: Vec<f64>,
    /// Dense minimum over sparse minimum (infinite when the latter is 0).
    pub ratio: f64,
    /// `ratio >= threshold`.
    pub holds: bool,
    pub threshold: f64,
}

/// Checks whether an overlapping dense/sparse pair meets the second failure
/// condition under `sim`, with "much greater" read as a ratio of at least
/// [`CONDITION_TWO_RATIO`].
pub fn check_condition_two<S: Similarity + ?Sized>(data: &Dataset, sim: &S) -> Result<ConditionTwo> {
    check_pairwise_size(data.len())?;
    if sim.len() != data.len() {
        return Err(Error::LengthMismatch {
            left: sim.len(),
            right: data.len(),
        });
    }
    let labels = labels_of(data, "condition-two check")?;
    let classes = class_members(&labels);
    if classes.len() != 2 || classes.iter().any(|c| c.len() < 2) {
        return Err(Error::InvalidParameter(
            "condition-two check needs two labelled clusters of at least two points".into(),
        ));
    }
    let min_nn_similarity: Vec<f64> = classes
        .iter()
        .map(|members| {
            members
                .par_iter()
                .map(|&x| {
                    members
                        .iter()
                        .filter(|&&y| y != x)
                        .map(|&y| sim.similarity(x, y))
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .reduce(|| f64::INFINITY, f64::min)
        })
        .collect();
    let spread: Vec<f64> = classes.iter().map(|c| mean_nn_distance(data, c)).collect();
    let (dense, sparse) = if spread[0] <= spread[1] { (0, 1) } else { (1, 0) };
    let ratio = if min_nn_similarity[sparse] > 0.0 {
        min_nn_similarity[dense] / min_nn_similarity[sparse]
    } else if min_nn_similarity[dense] > 0.0 {
        f64::INFINITY
    } else {
        1.0
    };
    Ok(ConditionTwo {
        dense,
        sparse,
        min_nn_similarity,
        ratio,
        holds: ratio >= CONDITION_TWO_RATIO,
        threshold: CONDITION_TWO_RATIO,
    })
}

/// Spearman rank correlation, with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let ra = ranks(a);
    let rb = ranks(b);
    pearson(&ra, &rb)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            r[o] = avg;
        }
        i = j + 1;
    }
    r
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return f64::NAN;
    }
    cov / (va.sqrt() * vb.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectionPoint {
    pub corrected: usize,
    pub objective: f64,
    pub ami: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionCurve {
    pub points: Vec<CorrectionPoint>,
}

impl CorrectionCurve {
    /// Rank correlation between `M(D)` and AMI over the series.
    pub fn spearman(&self) -> f64 {
        let m: Vec<f64> = self.points.iter().map(|p| p.objective).collect();
        let a: Vec<f64> = self.points.iter().map(|p| p.ami).collect();
        spearman(&m, &a)
    }

    /// Fraction of steps where `M(D)` did not decrease.
    pub fn nondecreasing_fraction(&self) -> f64 {
        let steps = self.points.len().saturating_sub(1);
        if steps == 0 {
            return 1.0;
        }
        let up = self.points.windows(2).filter(|w| w[1].objective >= w[0].objective).count();
        up as f64 / steps as f64
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("corrected,objective,ami\n");
        for p in &self.points {
            s.push_str(&format!("{},{},{}\n", p.corrected, p.objective, p.ami));
        }
        s
    }
}

/// Starts from uniformly random labels and restores the true label of
/// `batch` randomly chosen points at a time, recording `M(D)` and AMI after
/// each batch (and once before the first).
pub fn correction_curve<E: Embedding + ?Sized>(
    emb: &E,
    truth: &[usize],
    batch: usize,
    seed: u64,
) -> Result<CorrectionCurve> {
    let n = truth.len();
    if emb.len() != n {
        return Err(Error::LengthMismatch { left: emb.len(), right: n });
    }
    if batch == 0 || n == 0 {
        return Err(Error::InvalidParameter("batch and n must be positive".into()));
    }
    let k = truth.iter().max().map_or(0, |m| m + 1);
    if k > n {
        return Err(Error::InvalidParameter("more classes than points".into()));
    }
    let mut r = rng::stream(seed, rng::STREAM_CORRECTION);
    let mut labels: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut r);
    // Guarantee every cluster starts non-empty.
    for (j, &i) in order.iter().take(k).enumerate() {
        labels[i] = j;
    }
    order.shuffle(&mut r);
    let mut maps = cluster_maps(emb, &labels, k)?;
    let record = |labels: &[usize], maps: &[_], corrected: usize| -> Result<CorrectionPoint> {
        let obj = objective_from_maps(emb, labels, maps)?;
        Ok(CorrectionPoint {
            corrected,
            objective: obj.total,
            ami: ami_score(labels, truth)?,
        })
    };
    let mut points = vec![record(&labels, &maps, 0)?];
    let mut done = 0;
    for chunk in order.chunks(batch) {
        for &i in chunk {
            if labels[i] != truth[i] {
                maps[labels[i]].remove(emb, i);
                maps[truth[i]].add(emb, i);
                labels[i] = truth[i];
            }
        }
        done += chunk.len();
        points.push(record(&labels, &maps, done)?);
    }
    Ok(CorrectionCurve { points })
}

/// Timing of one ladder rung.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalePoint {
    pub n: usize,
    pub total: Duration,
    pub stages: StageTimes,
    /// Too fast to time reliably; excluded from the slope.
    pub below_resolution: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleReport {
    pub points: Vec<ScalePoint>,
    /// Least-squares slope of log(time) on log(n) over the upper half of the
    /// ladder; `None` if fewer than two usable points remain.
    pub slope: Option<f64>,
}

impl ScaleReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,total_s,fit_s,embed_s,seed_s,assign_s,refine_s,below_resolution\n");
        for p in &self.points {
            let t = &p.stages;
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                p.n,
                p.total.as_secs_f64(),
                t.fit.as_secs_f64(),
                t.embed.as_secs_f64(),
                t.seed.as_secs_f64(),
                t.assign.as_secs_f64(),
                t.refine.as_secs_f64(),
                p.below_resolution
            ));
        }
        s
    }
}

/// Smallest duration treated as measurable: 100 ticks of the observed clock.
pub fn timing_floor() -> Duration {
    let start = Instant::now();
    let mut now = Instant::now();
    while now == start {
        now = Instant::now();
    }
    (now - start) * 100
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Times end-to-end clustering (kernel fit included, data generation
/// excluded) on datasets of each size drawn from `family`. The smallest size
/// is run once untimed first as a warm-up.
pub fn scaleup(family: Family, sizes: &[usize], params: &ClusterParams, seed: u64) -> Result<ScaleReport> {
    if sizes.len() < 3 {
        return Err(Error::InvalidParameter("the size ladder needs at least three sizes".into()));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("sizes must be strictly increasing".into()));
    }
    let floor = timing_floor();
    let warm = generate_synthetic(family, sizes[0], seed)?;
    run_mmc(&warm, params)?;
    drop(warm);
    let mut points = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let data = generate_synthetic(family, n, seed)?;
        let start = Instant::now();
        let out = run_mmc(&data, params)?;
        let total = start.elapsed();
        points.push(ScalePoint {
            n,
            total,
            stages: out.times,
            below_resolution: total < floor,
        });
    }
    let upper: Vec<&ScalePoint> = points[points.len() / 2..]
        .iter()
        .filter(|p| !p.below_resolution)
        .collect();
    let xs: Vec<f64> = upper.iter().map(|p| p.n as f64).collect();
    let ys: Vec<f64> = upper.iter().map(|p| p.total.as_secs_f64()).collect();
    Ok(ScaleReport {
        slope: loglog_slope(&xs, &ys),
        points,
    })
}
