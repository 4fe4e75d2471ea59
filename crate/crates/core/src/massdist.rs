//! Kernel mean maps of point sets, the mass and density estimates built on
//! them, and the total-mass clustering objective.
//!
//! A [`ClusterMeanMap`] keeps the unnormalized sum of member features plus the
//! member count. For the isolation kernel every sum entry is an integer count,
//! so mass values are exact ratios `count / (t·|C|)`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{Embedding, IkModel, NystromModel};

/// `Φ(C)` of a member set, stored as `|C| · Φ(C)` together with `|C|`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterMeanMap {
    sums: Vec<f64>,
    size: usize,
    scale: f64,
}

impl ClusterMeanMap {
    /// A map with no members yet, shaped for `emb`.
    pub fn empty<E: Embedding + ?Sized>(emb: &E) -> Self {
        Self {
            sums: vec![0.0; emb.feature_dim()],
            size: 0,
            scale: emb.scale(),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn feature_dim(&self) -> usize {
        self.sums.len()
    }

    /// Unnormalized feature sum `Σ_{y∈C} φ(y)`.
    pub fn sums(&self) -> &[f64] {
        &self.sums
    }

    /// The mean feature vector `Φ(C)`.
    pub fn mean_features(&self) -> Vec<f64> {
        let n = self.size.max(1) as f64;
        self.sums.iter().map(|s| s / n).collect()
    }

    pub fn add<E: Embedding + ?Sized>(&mut self, emb: &E, i: usize) {
        emb.accumulate(i, &mut self.sums, 1.0);
        self.size += 1;
    }

    /// Removes a member previously added. The caller guarantees membership.
    pub fn remove<E: Embedding + ?Sized>(&mut self, emb: &E, i: usize) {
        assert!(self.size > 0, "remove from an empty mean map");
        emb.accumulate(i, &mut self.sums, -1.0);
        self.size -= 1;
    }

    /// Unscaled `⟨φ(i), Σ φ(y)⟩`.
    #[inline]
    pub fn raw_dot<E: Embedding + ?Sized>(&self, emb: &E, i: usize) -> f64 {
        emb.dot(i, &self.sums)
    }

    /// Mass (or density) of embedded point `i` with respect to this set; 0 for
    /// an empty set.
    #[inline]
    pub fn value<E: Embedding + ?Sized>(&self, emb: &E, i: usize) -> f64 {
        if self.size == 0 {
            return 0.0;
        }
        self.scale * emb.dot(i, &self.sums) / self.size as f64
    }

    fn check_width(&self, width: usize) -> Result<()> {
        if width != self.sums.len() {
            return Err(Error::DimensionMismatch {
                expected: self.sums.len(),
                found: width,
            });
        }
        if self.size == 0 {
            return Err(Error::EmptyMembers);
        }
        Ok(())
    }
}

/// `Φ(C)` over the given members of an embedded dataset.
pub fn mean_map<E: Embedding + ?Sized>(emb: &E, members: &[usize]) -> Result<ClusterMeanMap> {
    if members.is_empty() {
        return Err(Error::EmptyMembers);
    }
    let mut m = ClusterMeanMap::empty(emb);
    for &i in members {
        m.add(emb, i);
    }
    Ok(m)
}

/// Mass `(1/t)⟨φ(x), Φ(C)⟩` of an arbitrary point under an isolation kernel.
pub fn mass(model: &IkModel, x: &[f64], cmm: &ClusterMeanMap) -> Result<f64> {
    let psi = model.psi();
    cmm.check_width(model.t() * psi)?;
    let fx = model.embed(x)?;
    let count: f64 = (0..fx.t())
        .filter_map(|b| fx.cell(b).map(|c| cmm.sums[b * psi + c]))
        .sum();
    Ok(count / (model.t() as f64 * cmm.size as f64))
}

/// Density `⟨z(x), Φ(C)⟩` of an arbitrary point under the Nyström map.
pub fn density(model: &NystromModel, x: &[f64], cmm: &ClusterMeanMap) -> Result<f64> {
    cmm.check_width(model.landmark_count())?;
    let z = model.embed(x)?;
    let dot: f64 = z.iter().zip(&cmm.sums).map(|(a, b)| a * b).sum();
    Ok(dot / cmm.size as f64)
}

/// Kernels that can score a raw point against a mean map.
pub trait PointMass {
    fn point_mass(&self, x: &[f64], cmm: &ClusterMeanMap) -> Result<f64>;
}

impl PointMass for IkModel {
    fn point_mass(&self, x: &[f64], cmm: &ClusterMeanMap) -> Result<f64> {
        mass(self, x, cmm)
    }
}

impl PointMass for NystromModel {
    fn point_mass(&self, x: &[f64], cmm: &ClusterMeanMap) -> Result<f64> {
        density(self, x, cmm)
    }
}

/// Lowest-index argmax of the mass of `x` over `cmms`, with the maximum.
pub fn mass_distribution<K: PointMass + ?Sized>(
    model: &K,
    x: &[f64],
    cmms: &[ClusterMeanMap],
) -> Result<(usize, f64)> {
    if cmms.is_empty() {
        return Err(Error::InvalidParameter("mass distribution needs k >= 1".into()));
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (j, c) in cmms.iter().enumerate() {
        let v = model.point_mass(x, c)?;
        if v > best.1 {
            best = (j, v);
        }
    }
    Ok(best)
}

/// [`mass_distribution`] for a point that is already embedded.
#[inline]
pub fn argmax_mass<E: Embedding + ?Sized>(emb: &E, i: usize, cmms: &[ClusterMeanMap]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (j, c) in cmms.iter().enumerate() {
        let v = c.value(emb, i);
        if v > best.1 {
            best = (j, v);
        }
    }
    best
}

/// Builds one mean map per cluster from a 0-based label vector.
pub fn cluster_maps<E: Embedding + ?Sized>(emb: &E, labels: &[usize], k: usize) -> Result<Vec<ClusterMeanMap>> {
    if labels.len() != emb.len() {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: emb.len(),
        });
    }
    let mut maps = vec![ClusterMeanMap::empty(emb); k];
    for (i, &l) in labels.iter().enumerate() {
        if l >= k {
            return Err(Error::InvalidParameter(format!("label {l} at point {i} is not below k = {k}")));
        }
        maps[l].add(emb, i);
    }
    Ok(maps)
}

/// `M(D)` and `M(D)/n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub total: f64,
    pub normalized: f64,
}

/// Sum over clusters of each member's mass with respect to its own cluster.
/// `labels` are 0-based cluster indices below `k`; empty clusters are an
/// error.
pub fn total_objective<E: Embedding + ?Sized>(emb: &E, labels: &[usize], k: usize) -> Result<Objective> {
    let maps = cluster_maps(emb, labels, k)?;
    objective_from_maps(emb, labels, &maps)
}

pub(crate) fn objective_from_maps<E: Embedding + ?Sized>(
    emb: &E,
    labels: &[usize],
    maps: &[ClusterMeanMap],
) -> Result<Objective> {
    if let Some(j) = maps.iter().position(|m| m.size == 0) {
        return Err(Error::EmptyCluster(j));
    }
    let dots: Vec<f64> = (0..labels.len())
        .into_par_iter()
        .with_min_len(1024)
        .map(|i| maps[labels[i]].raw_dot(emb, i))
        .collect();
    // Per-cluster dot sums are exact integers for the isolation kernel; divide once per cluster.
    let mut per_cluster = vec![0.0; maps.len()];
    for (d, &l) in dots.iter().zip(labels) {
        per_cluster[l] += d;
    }
    let total: f64 = per_cluster
        .iter()
        .zip(maps)
        .map(|(s, m)| m.scale * s / m.size as f64)
        .sum();
    Ok(Objective {
        total,
        normalized: total / labels.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use crate::kernels::{KernelModel, Mechanism, Similarity};

    fn grid_data(n: usize) -> Dataset {
        let pts: Vec<f64> = (0..n * 2).map(|i| ((i * 37 % 101) as f64) / 100.0).collect();
        Dataset::from_flat(pts, 2, None).unwrap()
    }

    #[test]
    fn singleton_mean_is_the_feature() {
        let ds = grid_data(12);
        let m = IkModel::fit(&ds, 4, 16, Mechanism::Voronoi, 1).unwrap();
        let emb = m.embed_dataset(&ds).unwrap();
        let c = mean_map(&emb, &[3]).unwrap();
        assert_eq!(c.mean_features(), emb.feature(3).to_dense());
        assert_eq!(c.value(&emb, 3), 1.0);
        assert_eq!(mass(&m, ds.point(3), &c).unwrap(), 1.0);
    }

    #[test]
    fn voronoi_blocks_sum_to_one() {
        let ds = grid_data(30);
        let m = IkModel::fit(&ds, 6, 10, Mechanism::Voronoi, 2).unwrap();
        let emb = m.embed_dataset(&ds).unwrap();
        let c = mean_map(&emb, &[0, 4, 5, 9, 22]).unwrap();
        for block in c.mean_features().chunks(6) {
            assert!((block.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn mass_equals_mean_similarity() {
        let ds = grid_data(15);
        let m = IkModel::fit(&ds, 4, 16, Mechanism::Hypersphere, 3).unwrap();
        let emb = m.embed_dataset(&ds).unwrap();
        let members = [1, 2, 7, 8, 14];
        let c = mean_map(&emb, &members).unwrap();
        for x in 0..15 {
            let oracle: f64 = members.iter().map(|&y| emb.similarity(x, y)).sum::<f64>() / 5.0;
            assert!((c.value(&emb, x) - oracle).abs() <= 1e-12);
            assert!((mass(&m, ds.point(x), &c).unwrap() - oracle).abs() <= 1e-12);
        }
    }

    #[test]
    fn outside_all_spheres_has_zero_mass() {
        let ds = grid_data(15);
        let m = IkModel::fit(&ds, 4, 16, Mechanism::Hypersphere, 3).unwrap();
        let emb = m.embed_dataset(&ds).unwrap();
        let c = mean_map(&emb, &[0, 1, 2]).unwrap();
        assert_eq!(mass(&m, &[40.0, 40.0], &c).unwrap(), 0.0);
    }

    #[test]
    fn incremental_matches_rebuild() {
        let ds = grid_data(20);
        let m = NystromModel::fit(&ds, 8, 0.3, 4).unwrap();
        let emb = m.embed_dataset(&ds).unwrap();
        let mut c = mean_map(&emb, &[0, 1, 2, 3, 4]).unwrap();
        c.remove(&emb, 2);
        c.add(&emb, 11);
        let fresh = mean_map(&emb, &[0, 1, 3, 4, 11]).unwrap();
        for (a, b) in c.sums().iter().zip(fresh.sums()) {
            assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn objective_rules() {
        let ds = grid_data(6);
        let m = IkModel::fit(&ds, 3, 8, Mechanism::Voronoi, 5).unwrap();
        let emb = m.embed_dataset(&ds).unwrap();
        let singletons: Vec<usize> = (0..6).collect();
        assert_eq!(total_objective(&emb, &singletons, 6).unwrap().total, 6.0);
        assert!(matches!(
            total_objective(&emb, &[0, 0, 0, 0, 0, 0], 2),
            Err(Error::EmptyCluster(1))
        ));
        assert!(mean_map(&emb, &[]).is_err());
        let all = total_objective(&emb, &[0; 6], 1).unwrap();
        let c = mean_map(&emb, &singletons).unwrap();
        let direct: f64 = (0..6).map(|i| c.value(&emb, i)).sum();
        assert!((all.total - direct).abs() <= 1e-12);
        assert!((all.normalized - direct / 6.0).abs() <= 1e-12);
    }

    #[test]
    fn ties_pick_lowest_index() {
        let ds = grid_data(10);
        let m = IkModel::fit(&ds, 3, 8, Mechanism::Voronoi, 5).unwrap();
        let emb = m.embed_dataset(&ds).unwrap();
        let c = mean_map(&emb, &[1, 2, 3]).unwrap();
        let maps = vec![c.clone(), c.clone()];
        assert_eq!(argmax_mass(&emb, 5, &maps).0, 0);
        assert_eq!(mass_distribution(&m, ds.point(5), &maps).unwrap().0, 0);
        assert_eq!(mass_distribution(&m, ds.point(5), &maps[..1]).unwrap().0, 0);
    }
}
