//! Synthetic benchmark families.
//!
//! Each generator reproduces the qualitative geometry of a benchmark: the
//! number of clusters, which clusters are dense or sparse, and how close
//! they sit to each other. Output is labeled and min-max normalized.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal, Uniform};

use crate::data::{normalize_minmax, Dataset};
use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// One dense and one sparse Gaussian that overlap at their border.
    TwoGaussiansVariedDensity,
    /// Two adjacent dense Gaussians and one distant sparse Gaussian.
    ThreeGaussians,
    /// Two overlapping dense Gaussians inside two sparse concentric rings.
    RingGaussians,
    /// Two Gaussians in `2 * d_noise` dimensions. Each has unit variance in its
    /// own `d_noise`-dimensional block and a narrow spread in the other block.
    SubspaceGaussian { d_noise: usize },
    /// Two Gaussians and one arc; the scale-up workload.
    ScaleupArcMix,
}

impl Family {
    pub fn cluster_count(&self) -> usize {
        match self {
            Family::TwoGaussiansVariedDensity | Family::SubspaceGaussian { .. } => 2,
            Family::ThreeGaussians | Family::ScaleupArcMix => 3,
            Family::RingGaussians => 4,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Family::SubspaceGaussian { d_noise } => 2 * d_noise,
            _ => 2,
        }
    }

    /// Size used by the published benchmark this family imitates.
    pub fn reference_size(&self) -> usize {
        match self {
            Family::TwoGaussiansVariedDensity => 1000,
            Family::ThreeGaussians | Family::ScaleupArcMix => 1500,
            Family::RingGaussians => 1536,
            Family::SubspaceGaussian { .. } => 2000,
        }
    }

    fn weights(&self) -> &'static [f64] {
        match self {
            Family::TwoGaussiansVariedDensity | Family::SubspaceGaussian { .. } => &[0.5, 0.5],
            Family::ThreeGaussians | Family::ScaleupArcMix => &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            Family::RingGaussians => &[0.25, 0.25, 0.25, 0.25],
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::TwoGaussiansVariedDensity => f.write_str("two_gaussians_varied_density"),
            Family::ThreeGaussians => f.write_str("three_gaussians_3G"),
            Family::RingGaussians => f.write_str("ring_gaussians_RingG"),
            Family::SubspaceGaussian { d_noise } => write!(f, "subspace_gaussian:{d_noise}"),
            Family::ScaleupArcMix => f.write_str("scaleup_arc_mix"),
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    /// Accepts the canonical names plus short aliases (`2gaussians`, `3g`,
    /// `ringg`, `w10gaussian`, `subspace_gaussian:10`, `scaleup`).
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        let family = match lower.as_str() {
            "two_gaussians_varied_density" | "2gaussians" | "two_gaussians" => {
                Family::TwoGaussiansVariedDensity
            }
            "three_gaussians_3g" | "3g" | "three_gaussians" => Family::ThreeGaussians,
            "ring_gaussians_ringg" | "ringg" | "ring_gaussians" => Family::RingGaussians,
            "scaleup_arc_mix" | "scaleup" => Family::ScaleupArcMix,
            other => {
                let d_noise = other
                    .strip_prefix("subspace_gaussian:")
                    .or_else(|| other.strip_prefix("subspace_gaussian_"))
                    .or_else(|| other.strip_prefix('w').and_then(|r| r.strip_suffix("gaussian")))
                    .and_then(|v| v.parse::<usize>().ok())
                    .filter(|&v| v > 0)
                    .ok_or_else(|| Error::InvalidParameter(format!("unknown family {s:?}")))?;
                Family::SubspaceGaussian { d_noise }
            }
        };
        Ok(family)
    }
}

/// Splits `n` by `weights` with largest-remainder rounding.
fn split_counts(n: usize, weights: &[f64]) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / total * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut missing = n - counts.iter().sum::<usize>();
    for &i in order.iter().cycle() {
        if missing == 0 {
            break;
        }
        counts[i] += 1;
        missing -= 1;
    }
    counts
}

fn gaussian_2d(rng: &mut StreamRng, center: (f64, f64), sd: f64) -> [f64; 2] {
    let nrm = Normal::new(0.0, sd).expect("positive sd");
    [center.0 + nrm.sample(rng), center.1 + nrm.sample(rng)]
}

/// Point on an arc of `radius` between `from` and `to` radians, with radial noise.
fn arc_point(rng: &mut StreamRng, center: (f64, f64), radius: f64, from: f64, to: f64, sd: f64) -> [f64; 2] {
    let angle = Uniform::new(from, to).expect("valid range").sample(rng);
    let r = radius + Normal::new(0.0, sd).expect("positive sd").sample(rng);
    [center.0 + r * angle.cos(), center.1 + r * angle.sin()]
}

/// Generates `n` labeled points of `family`, min-max normalized.
pub fn generate_synthetic(family: Family, n: usize, seed: u64) -> Result<Dataset> {
    let k = family.cluster_count();
    if n < k {
        return Err(Error::TooFewPoints {
            family: family.to_string(),
            n,
            required: k,
        });
    }
    let counts = split_counts(n, family.weights());
    let d = family.dim();
    let mut rng = rng::stream(seed, rng::STREAM_SYNTHETIC);
    let mut points = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);

    for (label, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            match family {
                Family::TwoGaussiansVariedDensity => {
                    // peak density ratio 4:1 (equal counts, sd ratio 2)
                    let p = if label == 0 {
                        gaussian_2d(&mut rng, (0.0, 0.0), 1.0)
                    } else {
                        gaussian_2d(&mut rng, (7.0, 0.0), 2.0)
                    };
                    points.extend_from_slice(&p);
                }
                Family::ThreeGaussians => {
                    let p = match label {
                        0 => gaussian_2d(&mut rng, (0.0, 0.0), 1.0),
                        1 => gaussian_2d(&mut rng, (4.5, 0.0), 1.0),
                        _ => gaussian_2d(&mut rng, (2.25, 45.0), 16.0),
                    };
                    points.extend_from_slice(&p);
                }
                Family::RingGaussians => {
                    let p = match label {
                        0 => gaussian_2d(&mut rng, (-1.2, 0.0), 0.3),
                        1 => gaussian_2d(&mut rng, (1.2, 0.0), 0.3),
                        2 => arc_point(&mut rng, (0.0, 0.0), 3.5, 0.0, 2.0 * PI, 0.2),
                        _ => arc_point(&mut rng, (0.0, 0.0), 6.0, 0.0, 2.0 * PI, 0.2),
                    };
                    points.extend_from_slice(&p);
                }
                Family::SubspaceGaussian { d_noise } => {
                    let wide = Normal::new(0.0, 1.0).expect("unit sd");
                    let narrow = Normal::new(0.0, SUBSPACE_OFF_SD).expect("positive sd");
                    for block in 0..2 {
                        let nrm = if block == label { wide } else { narrow };
                        for _ in 0..d_noise {
                            points.push(nrm.sample(&mut rng));
                        }
                    }
                }
                Family::ScaleupArcMix => {
                    let p = match label {
                        0 => gaussian_2d(&mut rng, (0.0, 0.0), 0.6),
                        1 => gaussian_2d(&mut rng, (4.0, 0.0), 0.6),
                        _ => arc_point(&mut rng, (2.0, 1.0), 4.0, 0.15 * PI, 0.85 * PI, 0.25),
                    };
                    points.extend_from_slice(&p);
                }
            }
            labels.push(label);
        }
    }
    // interleave so that file order carries no label information
    let order = shuffled_order(&mut rng, n);
    let mut shuffled = Vec::with_capacity(n * d);
    let mut shuffled_labels = Vec::with_capacity(n);
    for &i in &order {
        shuffled.extend_from_slice(&points[i * d..(i + 1) * d]);
        shuffled_labels.push(labels[i]);
    }
    let raw = Dataset::from_flat(shuffled, d, Some(shuffled_labels))?;
    Ok(normalize_minmax(&raw).with_name(family.to_string()))
}

/// Spread of a subspace cluster outside its own block.
const SUBSPACE_OFF_SD: f64 = 0.3;

fn shuffled_order(rng: &mut StreamRng, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    fn label_counts(ds: &Dataset) -> Vec<usize> {
        let mut c = vec![0; ds.class_count().unwrap()];
        for &l in ds.labels().unwrap() {
            c[l] += 1;
        }
        c
    }

    #[test]
    fn cluster_counts_match_families() {
        let ds = generate_synthetic(Family::ThreeGaussians, 1500, 1).unwrap();
        assert_eq!(label_counts(&ds), vec![500, 500, 500]);
        let ds = generate_synthetic(Family::RingGaussians, 1536, 1).unwrap();
        assert_eq!(label_counts(&ds).len(), 4);
        let ds = generate_synthetic(Family::SubspaceGaussian { d_noise: 10 }, 2000, 1).unwrap();
        assert_eq!((ds.len(), ds.dim()), (2000, 20));
        assert_eq!(label_counts(&ds), vec![1000, 1000]);
    }

    #[test]
    fn counts_sum_to_n_and_clusters_nonempty() {
        for n in [3usize, 4, 7, 101] {
            for fam in [Family::ThreeGaussians, Family::ScaleupArcMix] {
                let c = label_counts(&generate_synthetic(fam, n, 2).unwrap());
                assert_eq!(c.iter().sum::<usize>(), n);
                assert!(c.iter().all(|&x| x > 0));
            }
        }
    }

    #[test]
    fn too_small() {
        assert!(matches!(
            generate_synthetic(Family::RingGaussians, 3, 0),
            Err(Error::TooFewPoints { .. })
        ));
    }

    #[test]
    fn deterministic_and_normalized() {
        let a = generate_synthetic(Family::TwoGaussiansVariedDensity, 300, 9).unwrap();
        let b = generate_synthetic(Family::TwoGaussiansVariedDensity, 300, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.points().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn family_names_parse() {
        for f in [
            Family::TwoGaussiansVariedDensity,
            Family::ThreeGaussians,
            Family::RingGaussians,
            Family::SubspaceGaussian { d_noise: 50 },
            Family::ScaleupArcMix,
        ] {
            assert_eq!(f.to_string().parse::<Family>().unwrap(), f);
        }
        assert_eq!("w10Gaussian".parse::<Family>().unwrap(), Family::SubspaceGaussian { d_noise: 10 });
        assert!("jain".parse::<Family>().is_err());
    }
}
