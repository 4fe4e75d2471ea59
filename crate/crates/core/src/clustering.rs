//! The three-step clustering algorithm and its parameter search.
//!
//! 1. On a random sample, connect every pair whose kernel similarity is
//!    strictly above τ and keep the `k` largest connected components as seeds.
//! 2. Give every point the seed with the highest mass (isolation kernel) or
//!    density (Gaussian kernel).
//! 3. Recompute cluster mean maps and reassign until labels stop changing,
//!    the objective would drop, or the iteration cap is hit.
//!
//! MMC and DMC differ only in the kernel; both go through
//! [`run_with_embedding`]. Labels are 0-based throughout the library.

use std::fmt;
use std::time::{Duration, Instant};

use petgraph::unionfind::UnionFind;
use rayon::prelude::*;

use crate::data::{subsample, Dataset, SampleSet};
use crate::error::{Error, Result};
use crate::kernels::{Embedding, IkModel, KernelModel, Mechanism, NystromModel, Similarity};
use crate::massdist::{argmax_mass, cluster_maps, mean_map, objective_from_maps, ClusterMeanMap, Objective};
use crate::metrics::{ami_score, f1_score};
use crate::rng::trial_seed;

pub const DEFAULT_T: usize = 200;
pub const DEFAULT_S: usize = 300;
pub const DEFAULT_LANDMARKS: usize = 256;
pub const DEFAULT_MAX_REFINE_ITERS: usize = 100;

/// Which kernel drives the pipeline, with its data-scale parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelKind {
    IkVoronoi { psi: usize },
    IkHypersphere { psi: usize },
    GaussianNystrom { sigma: f64 },
}

impl KernelKind {
    pub fn is_isolation(&self) -> bool {
        !matches!(self, KernelKind::GaussianNystrom { .. })
    }

    /// ψ or σ, as a number.
    pub fn parameter(&self) -> f64 {
        match *self {
            KernelKind::IkVoronoi { psi } | KernelKind::IkHypersphere { psi } => psi as f64,
            KernelKind::GaussianNystrom { sigma } => sigma,
        }
    }

    pub fn parameter_name(&self) -> &'static str {
        if self.is_isolation() {
            "psi"
        } else {
            "sigma"
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelKind::IkVoronoi { .. } => "ik_voronoi",
            KernelKind::IkHypersphere { .. } => "ik_hypersphere",
            KernelKind::GaussianNystrom { .. } => "gaussian_nystrom",
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({}={})", self.name(), self.parameter_name(), self.parameter())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterParams {
    pub k: usize,
    pub s: usize,
    pub tau: f64,
    pub kernel: KernelKind,
    /// Partitionings of the isolation kernel.
    pub t: usize,
    /// Nyström landmark count, capped at `n`.
    pub landmarks: usize,
    pub seed: u64,
    pub max_refine_iters: usize,
}

impl ClusterParams {
    pub fn new(k: usize, kernel: KernelKind) -> Self {
        Self {
            k,
            s: DEFAULT_S,
            tau: 0.5,
            kernel,
            t: DEFAULT_T,
            landmarks: DEFAULT_LANDMARKS,
            seed: 0,
            max_refine_iters: DEFAULT_MAX_REFINE_ITERS,
        }
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_s(mut self, s: usize) -> Self {
        self.s = s;
        self
    }

    pub fn with_t(mut self, t: usize) -> Self {
        self.t = t;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_landmarks(mut self, landmarks: usize) -> Self {
        self.landmarks = landmarks;
        self
    }

    pub fn with_max_refine_iters(mut self, iters: usize) -> Self {
        self.max_refine_iters = iters;
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.tau) {
            return bad(format!("tau must lie in [0, 1), got {}", self.tau));
        }
        if self.s < self.k {
            return bad(format!("s = {} is smaller than k = {}", self.s, self.k));
        }
        if self.s > n {
            return Err(Error::SampleTooLarge {
                requested: self.s,
                available: n,
            });
        }
        match self.kernel {
            KernelKind::IkVoronoi { psi } | KernelKind::IkHypersphere { psi } => {
                if psi == 0 || self.t == 0 {
                    return bad("psi and t must be at least 1".into());
                }
            }
            KernelKind::GaussianNystrom { sigma } => {
                if !(sigma > 0.0 && sigma.is_finite()) {
                    return bad(format!("sigma must be positive, got {sigma}"));
                }
                if self.landmarks == 0 {
                    return bad("landmarks must be at least 1".into());
                }
            }
        }
        Ok(())
    }
}

/// Pairwise similarities among the sampled points, computed once and
/// thresholded at any τ.
#[derive(Debug, Clone)]
pub struct SampleGraph {
    indices: Vec<usize>,
    /// Row-major upper triangle, pair `(a, b)` with `a < b`.
    upper: Vec<f64>,
}

impl SampleGraph {
    pub fn build<S: Similarity + ?Sized>(sim: &S, sample: &SampleSet) -> Self {
        let idx = &sample.indices;
        let s = idx.len();
        let rows: Vec<Vec<f64>> = (0..s)
            .into_par_iter()
            .map(|a| (a + 1..s).map(|b| sim.similarity(idx[a], idx[b])).collect())
            .collect();
        Self {
            indices: idx.clone(),
            upper: rows.into_iter().flatten().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Similarity between sample positions `a` and `b`.
    pub fn similarity(&self, a: usize, b: usize) -> f64 {
        if a == b {
            return f64::NAN;
        }
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        let s = self.len();
        self.upper[a * (2 * s - a - 1) / 2 + (b - a - 1)]
    }

    /// Connected components at threshold τ, as lists of sample positions,
    /// largest first; equal sizes are ordered by smallest position.
    pub fn components(&self, tau: f64) -> Vec<Vec<usize>> {
        let s = self.len();
        let mut uf = UnionFind::<usize>::new(s);
        let mut at = 0;
        for a in 0..s {
            for b in a + 1..s {
                if self.upper[at] > tau {
                    uf.union(a, b);
                }
                at += 1;
            }
        }
        let mut by_root: Vec<Vec<usize>> = vec![Vec::new(); s];
        for a in 0..s {
            by_root[uf.find(a)].push(a);
        }
        let mut comps: Vec<Vec<usize>> = by_root.into_iter().filter(|c| !c.is_empty()).collect();
        comps.sort_by(|x, y| y.len().cmp(&x.len()).then(x[0].cmp(&y[0])));
        comps
    }

    /// The `k` largest components, mapped to dataset indices.
    pub fn seeds(&self, tau: f64, k: usize) -> Result<SeedClusters> {
        let comps = self.components(tau);
        if comps.len() < k {
            return Err(Error::TooFewComponents {
                found: comps.len(),
                k,
                tau,
            });
        }
        let component_sizes = comps.iter().map(Vec::len).collect();
        let members = comps
            .into_iter()
            .take(k)
            .map(|c| c.into_iter().map(|a| self.indices[a]).collect())
            .collect();
        Ok(SeedClusters {
            members,
            component_sizes,
        })
    }
}

/// The `k` seed components of step 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedClusters {
    /// Dataset indices of each seed, in sample order.
    pub members: Vec<Vec<usize>>,
    /// Sizes of every component found, largest first.
    pub component_sizes: Vec<usize>,
}

impl SeedClusters {
    pub fn k(&self) -> usize {
        self.members.len()
    }
}

/// Step 1 on an embedded dataset.
pub fn seed_components<S: Similarity + ?Sized>(
    sim: &S,
    sample: &SampleSet,
    tau: f64,
    k: usize,
) -> Result<SeedClusters> {
    if sample.len() < k {
        return Err(Error::InvalidParameter(format!(
            "sample of {} points cannot hold k = {k} seeds",
            sample.len()
        )));
    }
    SeedClusters::check_tau(tau)?;
    SampleGraph::build(sim, sample).seeds(tau, k)
}

impl SeedClusters {
    fn check_tau(tau: f64) -> Result<()> {
        if !(0.0..1.0).contains(&tau) {
            return Err(Error::InvalidParameter(format!("tau must lie in [0, 1), got {tau}")));
        }
        Ok(())
    }
}

/// Counters from step 2.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AssignStats {
    /// Points with zero mass to every seed, labelled by their nearest seed member.
    pub fallback_points: usize,
    /// Seeds that attracted no point and had a member pinned back.
    pub pinned_clusters: usize,
}

/// Step 2: label every point by its highest-mass seed.
pub fn assign_by_mass<E: Embedding + ?Sized>(
    emb: &E,
    data: &Dataset,
    seeds: &SeedClusters,
) -> Result<(Vec<usize>, AssignStats)> {
    if emb.len() != data.len() {
        return Err(Error::LengthMismatch {
            left: emb.len(),
            right: data.len(),
        });
    }
    let maps: Vec<ClusterMeanMap> = seeds
        .members
        .iter()
        .map(|m| mean_map(emb, m))
        .collect::<Result<_>>()?;
    let seed_points: Vec<(usize, usize)> = seeds
        .members
        .iter()
        .enumerate()
        .flat_map(|(j, m)| m.iter().map(move |&i| (i, j)))
        .collect();
    let picks: Vec<(usize, bool)> = (0..data.len())
        .into_par_iter()
        .with_min_len(512)
        .map(|i| {
            let (j, v) = argmax_mass(emb, i, &maps);
            if v > 0.0 {
                (j, false)
            } else {
                (nearest_seed(data, i, &seed_points), true)
            }
        })
        .collect();
    let mut stats = AssignStats {
        fallback_points: picks.iter().filter(|p| p.1).count(),
        pinned_clusters: 0,
    };
    let mut labels: Vec<usize> = picks.into_iter().map(|p| p.0).collect();
    let k = seeds.k();
    let mut sizes = vec![0usize; k];
    for &l in &labels {
        sizes[l] += 1;
    }
    for j in 0..k {
        if sizes[j] == 0 {
            let keep = best_member(emb, &seeds.members[j], &maps[j]);
            sizes[labels[keep]] -= 1;
            labels[keep] = j;
            sizes[j] = 1;
            stats.pinned_clusters += 1;
        }
    }
    Ok((labels, stats))
}

fn nearest_seed(data: &Dataset, i: usize, seed_points: &[(usize, usize)]) -> usize {
    let x = data.point(i);
    let mut best = (f64::INFINITY, 0);
    for &(p, j) in seed_points {
        let d: f64 = x.iter().zip(data.point(p)).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best.0 {
            best = (d, j);
        }
    }
    best.1
}

/// Member with the highest mass with respect to `map`, lowest index on ties.
fn best_member<E: Embedding + ?Sized>(emb: &E, members: &[usize], map: &ClusterMeanMap) -> usize {
    let mut best = (f64::NEG_INFINITY, usize::MAX);
    for &i in members {
        let v = map.value(emb, i);
        if v > best.0 || (v == best.0 && i < best.1) {
            best = (v, i);
        }
    }
    best.1
}

/// Outcome of step 3.
#[derive(Debug, Clone, PartialEq)]
pub struct Refined {
    pub labels: Vec<usize>,
    pub objective: Objective,
    pub objective_before: Objective,
    pub iterations: usize,
    /// True when the loop stopped because the next step would lower `M(D)`.
    pub reverted: bool,
}

/// Step 3: synchronous reassignment against frozen mean maps.
pub fn refine<E: Embedding + ?Sized>(emb: &E, labels: &[usize], k: usize, max_iters: usize) -> Result<Refined> {
    let mut cur = labels.to_vec();
    let mut maps = cluster_maps(emb, &cur, k)?;
    let before = objective_from_maps(emb, &cur, &maps)?;
    let mut obj = before;
    let mut iterations = 0;
    let mut reverted = false;
    while iterations < max_iters {
        let mut next: Vec<usize> = (0..cur.len())
            .into_par_iter()
            .with_min_len(512)
            .map(|i| {
                let (j, v) = argmax_mass(emb, i, &maps);
                if v > 0.0 {
                    j
                } else {
                    cur[i]
                }
            })
            .collect();
        pin_empty(emb, &cur, &maps, &mut next);
        if next == cur {
            break;
        }
        let next_maps = cluster_maps(emb, &next, k)?;
        let next_obj = objective_from_maps(emb, &next, &next_maps)?;
        if next_obj.total < obj.total {
            reverted = true;
            break;
        }
        cur = next;
        maps = next_maps;
        obj = next_obj;
        iterations += 1;
    }
    debug_assert!(obj.total >= before.total);
    Ok(Refined {
        labels: cur,
        objective: obj,
        objective_before: before,
        iterations,
        reverted,
    })
}

/// Any cluster left empty by `next` gets back its highest-mass member from `cur`.
fn pin_empty<E: Embedding + ?Sized>(emb: &E, cur: &[usize], maps: &[ClusterMeanMap], next: &mut [usize]) {
    let k = maps.len();
    let mut sizes = vec![0usize; k];
    for &l in next.iter() {
        sizes[l] += 1;
    }
    let mut pinned = vec![false; k];
    while let Some(j) = (0..k).find(|&j| sizes[j] == 0 && !pinned[j]) {
        let old: Vec<usize> = (0..cur.len()).filter(|&i| cur[i] == j).collect();
        let keep = best_member(emb, &old, &maps[j]);
        sizes[next[keep]] -= 1;
        next[keep] = j;
        sizes[j] += 1;
        pinned[j] = true;
    }
}

/// Wall-clock time per pipeline stage.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimes {
    pub fit: Duration,
    pub embed: Duration,
    pub seed: Duration,
    pub assign: Duration,
    pub refine: Duration,
}

impl StageTimes {
    pub fn total(&self) -> Duration {
        self.fit + self.embed + self.seed + self.assign + self.refine
    }
}

/// Final clustering with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    /// 0-based cluster per point.
    pub labels: Vec<usize>,
    pub k: usize,
    pub objective: Objective,
    /// `M(D)` of the step-2 labels, before refinement.
    pub objective_before_refine: Objective,
    pub refine_iters: usize,
    pub refine_reverted: bool,
    pub cluster_sizes: Vec<usize>,
    pub seed_component_sizes: Vec<usize>,
    pub assign_stats: AssignStats,
    pub times: StageTimes,
}

/// Steps 1 to 3 on a dataset that has already been embedded.
pub fn run_with_embedding<E: Embedding + ?Sized>(
    emb: &E,
    data: &Dataset,
    params: &ClusterParams,
) -> Result<ClusterAssignment> {
    params.validate(data.len())?;
    let t0 = Instant::now();
    let sample = subsample(data, params.s, params.seed)?;
    let graph = SampleGraph::build(emb, &sample);
    let seeds = graph.seeds(params.tau, params.k)?;
    let seed_time = t0.elapsed();
    let mut out = finish_from_seeds(emb, data, &seeds, params)?;
    out.times.seed = seed_time;
    Ok(out)
}

fn finish_from_seeds<E: Embedding + ?Sized>(
    emb: &E,
    data: &Dataset,
    seeds: &SeedClusters,
    params: &ClusterParams,
) -> Result<ClusterAssignment> {
    let t1 = Instant::now();
    let (labels, assign_stats) = assign_by_mass(emb, data, seeds)?;
    let t2 = Instant::now();
    let refined = refine(emb, &labels, params.k, params.max_refine_iters)?;
    let t3 = Instant::now();
    let mut cluster_sizes = vec![0; params.k];
    for &l in &refined.labels {
        cluster_sizes[l] += 1;
    }
    Ok(ClusterAssignment {
        labels: refined.labels,
        k: params.k,
        objective: refined.objective,
        objective_before_refine: refined.objective_before,
        refine_iters: refined.iterations,
        refine_reverted: refined.reverted,
        cluster_sizes,
        seed_component_sizes: seeds.component_sizes.clone(),
        assign_stats,
        times: StageTimes {
            assign: t2 - t1,
            refine: t3 - t2,
            ..StageTimes::default()
        },
    })
}

/// A fitted kernel of either family.
#[derive(Debug, Clone)]
pub enum FittedKernel {
    Isolation(IkModel),
    Nystrom(NystromModel),
}

/// Fits the kernel named by `params` on the full dataset.
pub fn fit_kernel(data: &Dataset, params: &ClusterParams) -> Result<FittedKernel> {
    Ok(match params.kernel {
        KernelKind::IkVoronoi { psi } => {
            FittedKernel::Isolation(IkModel::fit(data, psi, params.t, Mechanism::Voronoi, params.seed)?)
        }
        KernelKind::IkHypersphere { psi } => {
            FittedKernel::Isolation(IkModel::fit(data, psi, params.t, Mechanism::Hypersphere, params.seed)?)
        }
        KernelKind::GaussianNystrom { sigma } => FittedKernel::Nystrom(NystromModel::fit(
            data,
            params.landmarks.min(data.len()),
            sigma,
            params.seed,
        )?),
    })
}

/// Runs the pipeline with a kernel that is already fitted.
pub fn run_with_model(data: &Dataset, model: &FittedKernel, params: &ClusterParams) -> Result<ClusterAssignment> {
    let t0 = Instant::now();
    let (mut out, embed) = match model {
        FittedKernel::Isolation(m) => {
            let emb = m.embed_dataset(data)?;
            let embed = t0.elapsed();
            (run_with_embedding(&emb, data, params)?, embed)
        }
        FittedKernel::Nystrom(m) => {
            let emb = m.embed_dataset(data)?;
            let embed = t0.elapsed();
            (run_with_embedding(&emb, data, params)?, embed)
        }
    };
    out.times.embed = embed;
    Ok(out)
}

/// Fits the kernel on `data` and clusters it (MMC for isolation kernels, DMC
/// for the Gaussian kernel).
pub fn run_mmc(data: &Dataset, params: &ClusterParams) -> Result<ClusterAssignment> {
    params.validate(data.len())?;
    let t0 = Instant::now();
    let model = fit_kernel(data, params)?;
    let fit = t0.elapsed();
    let mut out = run_with_model(data, &model, params)?;
    out.times.fit = fit;
    Ok(out)
}

/// Kernel values and thresholds to search.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub kernels: Vec<KernelKind>,
    pub taus: Vec<f64>,
}

/// ψ values searched for the isolation kernel.
pub const PSI_GRID: [usize; 10] = [2, 4, 6, 8, 16, 24, 32, 64, 128, 256];

impl Grid {
    /// ψ over [`PSI_GRID`] and τ over 0.05, 0.10, ..., 0.95.
    pub fn mmc(mechanism: Mechanism) -> Self {
        let kernels = PSI_GRID
            .iter()
            .map(|&psi| match mechanism {
                Mechanism::Voronoi => KernelKind::IkVoronoi { psi },
                Mechanism::Hypersphere => KernelKind::IkHypersphere { psi },
            })
            .collect();
        Self {
            kernels,
            taus: tau_grid(),
        }
    }

    /// σ over 2^-5 .. 2^5 and the same τ values.
    pub fn dmc() -> Self {
        Self {
            kernels: (-5..=5)
                .map(|i| KernelKind::GaussianNystrom { sigma: 2f64.powi(i) })
                .collect(),
            taus: tau_grid(),
        }
    }

    pub fn single(kernel: KernelKind, tau: f64) -> Self {
        Self {
            kernels: vec![kernel],
            taus: vec![tau],
        }
    }

    pub fn cells(&self) -> usize {
        self.kernels.len() * self.taus.len()
    }
}

/// 0.05, 0.10, ..., 0.95.
pub fn tau_grid() -> Vec<f64> {
    (1..=19).map(|i| i as f64 / 20.0).collect()
}

/// Scores of one trial of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialScore {
    pub seed: u64,
    pub f1: Option<f64>,
    pub ami: Option<f64>,
    pub objective: Objective,
    pub objective_before_refine: Objective,
    pub refine_iters: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub kernel: KernelKind,
    pub tau: f64,
    /// One entry per trial: the scores, or the error message.
    pub trials: Vec<std::result::Result<TrialScore, String>>,
}

impl CellResult {
    pub fn failures(&self) -> usize {
        self.trials.iter().filter(|t| t.is_err()).count()
    }

    pub fn all_failed(&self) -> bool {
        self.failures() == self.trials.len()
    }

    /// Mean F1 with failed trials counted as 0.
    pub fn mean_f1(&self) -> Option<f64> {
        self.mean_over(|s| s.f1, true)
    }

    /// Mean AMI with failed trials counted as 0.
    pub fn mean_ami(&self) -> Option<f64> {
        self.mean_over(|s| s.ami, true)
    }

    /// Mean normalized `M(D)` over successful trials.
    pub fn mean_objective(&self) -> Option<f64> {
        self.mean_over(|s| Some(s.objective.normalized), false)
    }

    fn mean_over(&self, f: impl Fn(&TrialScore) -> Option<f64>, failures_as_zero: bool) -> Option<f64> {
        let mut sum = 0.0;
        let mut count = 0usize;
        for t in &self.trials {
            match t {
                Ok(s) => {
                    sum += f(s)?;
                    count += 1;
                }
                Err(_) if failures_as_zero => count += 1,
                Err(_) => {}
            }
        }
        (count > 0 && !self.all_failed()).then(|| sum / count as f64)
    }

    /// Score used for selection: mean F1 when labels exist, else mean `M(D)/n`.
    pub fn selection_score(&self) -> Option<f64> {
        self.mean_f1().or_else(|| self.mean_objective())
    }

    fn best_trial(&self) -> Option<&TrialScore> {
        let mut best: Option<&TrialScore> = None;
        for s in self.trials.iter().flatten() {
            let key = |x: &TrialScore| x.f1.unwrap_or(x.objective.normalized);
            if best.is_none_or(|b| key(s) > key(b)) {
                best = Some(s);
            }
        }
        best
    }
}

/// Every cell of a search, plus the winner re-run to get its labels.
#[derive(Debug, Clone)]
pub struct GridResult {
    pub cells: Vec<CellResult>,
    pub best_cell: usize,
    pub best_params: ClusterParams,
    pub best: ClusterAssignment,
}

impl GridResult {
    pub fn best_score(&self) -> f64 {
        self.cells[self.best_cell].selection_score().unwrap_or(f64::NAN)
    }
}

/// Evaluates every (kernel, τ) cell over `trials` seeds derived from
/// `base.seed`, selecting the best mean F1 (or mean normalized `M(D)` for
/// unlabeled data). Trial `r` of a cell reproduces
/// `run_mmc` with `seed = trial_seed(base.seed, r)`.
pub fn grid_search(data: &Dataset, grid: &Grid, base: &ClusterParams, trials: usize) -> Result<GridResult> {
    let cells = evaluate_grid(data, grid, base, trials)?;
    select_best(data, cells, base)
}

/// Scores every cell without selecting a winner.
pub fn evaluate_grid(data: &Dataset, grid: &Grid, base: &ClusterParams, trials: usize) -> Result<Vec<CellResult>> {
    if grid.cells() == 0 || trials == 0 {
        return Err(Error::InvalidParameter("grid and trial count must be non-empty".into()));
    }
    for &tau in &grid.taus {
        SeedClusters::check_tau(tau)?;
    }
    let jobs: Vec<(usize, usize)> = (0..grid.kernels.len())
        .flat_map(|kk| (0..trials).map(move |r| (kk, r)))
        .collect();
    // Each job fits and embeds once, then sweeps every τ on the same sample graph.
    let per_job: Vec<Vec<std::result::Result<TrialScore, String>>> = jobs
        .par_iter()
        .map(|&(kk, r)| {
            let params = ClusterParams {
                kernel: grid.kernels[kk],
                seed: trial_seed(base.seed, r as u64),
                ..base.clone()
            };
            sweep_taus(data, &params, &grid.taus)
        })
        .collect();
    let mut cells = Vec::with_capacity(grid.cells());
    for (kk, &kernel) in grid.kernels.iter().enumerate() {
        for (ti, &tau) in grid.taus.iter().enumerate() {
            let trials_out = (0..trials).map(|r| per_job[kk * trials + r][ti].clone()).collect();
            cells.push(CellResult {
                kernel,
                tau,
                trials: trials_out,
            });
        }
    }
    Ok(cells)
}

/// Picks the best-scoring cell and re-runs its best trial. Fails when every
/// trial of every cell failed.
pub fn select_best(data: &Dataset, cells: Vec<CellResult>, base: &ClusterParams) -> Result<GridResult> {
    let mut best_cell: Option<usize> = None;
    for (i, c) in cells.iter().enumerate() {
        if let Some(score) = c.selection_score() {
            if best_cell.is_none_or(|b| score > cells[b].selection_score().unwrap_or(f64::NEG_INFINITY)) {
                best_cell = Some(i);
            }
        }
    }
    let Some(best_cell) = best_cell else {
        let first = cells
            .iter()
            .flat_map(|c| c.trials.iter())
            .find_map(|t| t.as_ref().err().cloned())
            .unwrap_or_default();
        return Err(Error::AllCellsFailed {
            cells: cells.len(),
            first,
        });
    };
    let cell = &cells[best_cell];
    let trial = cell.best_trial().expect("best cell has a successful trial");
    let best_params = ClusterParams {
        kernel: cell.kernel,
        tau: cell.tau,
        seed: trial.seed,
        ..base.clone()
    };
    let best = run_mmc(data, &best_params)?;
    Ok(GridResult {
        cells,
        best_cell,
        best_params,
        best,
    })
}

fn sweep_taus(data: &Dataset, params: &ClusterParams, taus: &[f64]) -> Vec<std::result::Result<TrialScore, String>> {
    let fail_all = |e: Error| taus.iter().map(|_| Err(e.to_string())).collect();
    let probe = ClusterParams {
        tau: 0.0,
        ..params.clone()
    };
    if let Err(e) = probe.validate(data.len()) {
        return fail_all(e);
    }
    let model = match fit_kernel(data, params) {
        Ok(m) => m,
        Err(e) => return fail_all(e),
    };
    match &model {
        FittedKernel::Isolation(m) => match m.embed_dataset(data) {
            Ok(emb) => sweep_embedded(&emb, data, params, taus),
            Err(e) => fail_all(e),
        },
        FittedKernel::Nystrom(m) => match m.embed_dataset(data) {
            Ok(emb) => sweep_embedded(&emb, data, params, taus),
            Err(e) => fail_all(e),
        },
    }
}

fn sweep_embedded<E: Embedding>(
    emb: &E,
    data: &Dataset,
    params: &ClusterParams,
    taus: &[f64],
) -> Vec<std::result::Result<TrialScore, String>> {
    let sample = match subsample(data, params.s, params.seed) {
        Ok(s) => s,
        Err(e) => return taus.iter().map(|_| Err(e.to_string())).collect(),
    };
    let graph = SampleGraph::build(emb, &sample);
    taus.iter()
        .map(|&tau| {
            let p = ClusterParams { tau, ..params.clone() };
            let seeds = graph.seeds(tau, p.k).map_err(|e| e.to_string())?;
            let out = finish_from_seeds(emb, data, &seeds, &p).map_err(|e| e.to_string())?;
            let (f1, ami) = match data.labels() {
                Some(truth) => (
                    Some(f1_score(&out.labels, truth).map_err(|e| e.to_string())?),
                    Some(ami_score(&out.labels, truth).map_err(|e| e.to_string())?),
                ),
                None => (None, None),
            };
            Ok(TrialScore {
                seed: p.seed,
                f1,
                ami,
                objective: out.objective,
                objective_before_refine: out.objective_before_refine,
                refine_iters: out.refine_iters,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::DenseEmbedding;

    /// Two tight blobs on a line, far apart.
    fn blobs() -> Dataset {
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        for i in 0..20 {
            pts.push(0.1 + 0.005 * i as f64);
            pts.push(0.9 - 0.005 * i as f64);
            labels.push(0);
            labels.push(1);
        }
        Dataset::from_flat(pts, 1, Some(labels)).unwrap()
    }

    /// Embedding where points are similar exactly when on the same side of 0.5.
    fn side_embedding(ds: &Dataset) -> DenseEmbedding {
        let mut f = Vec::new();
        for i in 0..ds.len() {
            if ds.point(i)[0] < 0.5 {
                f.extend([1.0, 0.0]);
            } else {
                f.extend([0.0, 1.0]);
            }
        }
        DenseEmbedding::new(f, 2)
    }

    #[test]
    fn graph_indexing_matches_direct_similarity() {
        let ds = blobs();
        let emb = side_embedding(&ds);
        let sample = subsample(&ds, 15, 3).unwrap();
        let g = SampleGraph::build(&emb, &sample);
        for a in 0..15 {
            for b in 0..15 {
                if a != b {
                    assert_eq!(g.similarity(a, b), emb.similarity(sample.indices[a], sample.indices[b]));
                }
            }
        }
    }

    #[test]
    fn components_split_by_side() {
        let ds = blobs();
        let emb = side_embedding(&ds);
        let sample = subsample(&ds, 40, 0).unwrap();
        let seeds = seed_components(&emb, &sample, 0.5, 2).unwrap();
        assert_eq!(seeds.component_sizes, vec![20, 20]);
        for m in &seeds.members {
            let side = ds.labels().unwrap()[m[0]];
            assert!(m.iter().all(|&i| ds.labels().unwrap()[i] == side));
        }
        assert!(matches!(
            seed_components(&emb, &sample, 0.5, 3),
            Err(Error::TooFewComponents { found: 2, k: 3, .. })
        ));
    }

    #[test]
    fn high_tau_gives_singletons() {
        let ds = blobs();
        let sim = crate::kernels::ExactGaussian::new(&ds, 1e-4).unwrap();
        let sample = subsample(&ds, 10, 0).unwrap();
        let seeds = seed_components(&sim, &sample, 0.99, 4).unwrap();
        assert_eq!(seeds.component_sizes, vec![1; 10]);
        // Equal sizes fall back to sample order.
        let expected: Vec<Vec<usize>> = sample.indices[..4].iter().map(|&i| vec![i]).collect();
        assert_eq!(seeds.members, expected);
    }

    #[test]
    fn fixed_point_needs_no_iterations() {
        let ds = blobs();
        let emb = side_embedding(&ds);
        let truth = ds.labels().unwrap();
        let r = refine(&emb, truth, 2, 100).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.labels, truth);
        let r0 = refine(&emb, truth, 2, 0).unwrap();
        assert_eq!(r0.objective, r.objective);
    }

    #[test]
    fn refinement_repairs_planted_errors() {
        let ds = blobs();
        let emb = side_embedding(&ds);
        let truth = ds.labels().unwrap().to_vec();
        let mut noisy = truth.clone();
        noisy[0] = 1;
        noisy[3] = 0;
        let r = refine(&emb, &noisy, 2, 100).unwrap();
        assert_eq!(r.labels, truth);
        assert!(r.objective.total > r.objective_before.total);
    }

    #[test]
    fn zero_mass_points_use_nearest_seed() {
        let ds = Dataset::from_flat(vec![0.0, 0.1, 0.9, 1.0, 0.2], 1, None).unwrap();
        // Point 4 has a zero feature vector.
        let emb = DenseEmbedding::new(vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0], 2);
        let seeds = SeedClusters {
            members: vec![vec![2, 3], vec![0, 1]],
            component_sizes: vec![2, 2],
        };
        let (labels, stats) = assign_by_mass(&emb, &ds, &seeds).unwrap();
        assert_eq!(labels, vec![1, 1, 0, 0, 1]);
        assert_eq!(stats.fallback_points, 1);
    }

    #[test]
    fn single_cluster_labels_everything_zero() {
        let ds = blobs();
        let emb = side_embedding(&ds);
        let seeds = SeedClusters {
            members: vec![vec![0, 2]],
            component_sizes: vec![2],
        };
        let (labels, _) = assign_by_mass(&emb, &ds, &seeds).unwrap();
        assert!(labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn params_validation() {
        let p = ClusterParams::new(2, KernelKind::IkVoronoi { psi: 4 }).with_s(10);
        assert!(p.validate(100).is_ok());
        assert!(p.clone().with_tau(1.0).validate(100).is_err());
        assert!(p.clone().with_s(1).validate(100).is_err());
        assert!(matches!(p.validate(5), Err(Error::SampleTooLarge { .. })));
        let g = ClusterParams::new(2, KernelKind::GaussianNystrom { sigma: 0.0 }).with_s(10);
        assert!(g.validate(100).is_err());
    }

    #[test]
    fn grids_have_expected_shape() {
        let g = Grid::mmc(Mechanism::Hypersphere);
        assert_eq!(g.kernels.len(), 10);
        assert_eq!(g.taus.len(), 19);
        assert!((g.taus[0] - 0.05).abs() < 1e-15 && (g.taus[18] - 0.95).abs() < 1e-15);
        let d = Grid::dmc();
        assert_eq!(d.kernels.first(), Some(&KernelKind::GaussianNystrom { sigma: 1.0 / 32.0 }));
        assert_eq!(d.kernels.last(), Some(&KernelKind::GaussianNystrom { sigma: 32.0 }));
    }
}
