//! Training-parameter generation: random, Latin hypercube, uniform tensor
//! grid, and Smolyak sparse grid on nested Clenshaw-Curtis nodes.
//!
//! Deterministic grids are ordered lexicographically by coordinates;
//! stochastic schemes keep generation order and record their seed.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterBox {
    pub intervals: Vec<(f64, f64)>,
}

impl ParameterBox {
    pub fn new(intervals: Vec<(f64, f64)>) -> Result<Self> {
        for &(lo, hi) in &intervals {
            if !(lo < hi) {
                return Err(Error::InvalidArgument(format!(
                    "degenerate interval [{lo}, {hi}]"
                )));
            }
        }
        Ok(ParameterBox { intervals })
    }

    pub fn dim(&self) -> usize {
        self.intervals.len()
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .zip(&self.intervals)
                .all(|(&x, &(lo, hi))| lo <= x && x <= hi)
    }

    fn map_from_unit(&self, d: usize, t: f64) -> f64 {
        let (lo, hi) = self.intervals[d];
        // convex form so t = 1/2 lands exactly on the midpoint of
        // representable interval centers
        lo * (1.0 - t) + hi * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Random,
    Lhs,
    Uniform,
    Smolyak,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Scheme::Random => "random",
            Scheme::Lhs => "lhs",
            Scheme::Uniform => "uniform",
            Scheme::Smolyak => "smolyak",
        };
        f.write_str(s)
    }
}

/// How the set was generated, for reproducibility records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub scheme: Scheme,
    pub seed: Option<u64>,
    pub counts: Option<Vec<usize>>,
    pub level: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub points: Vec<Vec<f64>>,
    pub meta: SampleMeta,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn random_sample(bx: &ParameterBox, n: usize, seed: u64) -> Result<SampleSet> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n)
        .map(|_| {
            (0..bx.dim())
                .map(|d| bx.map_from_unit(d, rng.gen::<f64>()))
                .collect()
        })
        .collect();
    Ok(SampleSet {
        points,
        meta: SampleMeta {
            scheme: Scheme::Random,
            seed: Some(seed),
            counts: Some(vec![n]),
            level: None,
        },
    })
}

/// Latin hypercube: per dimension, one point per equal-width stratum, with
/// a seeded stratum permutation and within-stratum jitter.
pub fn lhs_sample(bx: &ParameterBox, n: usize, seed: u64) -> Result<SampleSet> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = vec![vec![0.0; bx.dim()]; n];
    for d in 0..bx.dim() {
        let mut strata: Vec<usize> = (0..n).collect();
        // Fisher-Yates with the shared stream
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            strata.swap(i, j);
        }
        for (i, point) in points.iter_mut().enumerate() {
            let t = (strata[i] as f64 + rng.gen::<f64>()) / n as f64;
            point[d] = bx.map_from_unit(d, t);
        }
    }
    Ok(SampleSet {
        points,
        meta: SampleMeta {
            scheme: Scheme::Lhs,
            seed: Some(seed),
            counts: Some(vec![n]),
            level: None,
        },
    })
}

/// Full tensor grid of equispaced points including both interval endpoints.
pub fn uniform_tensor_sample(bx: &ParameterBox, counts: &[usize]) -> Result<SampleSet> {
    if counts.len() != bx.dim() {
        return Err(Error::InvalidArgument(format!(
            "{} counts for a {}-dimensional box",
            counts.len(),
            bx.dim()
        )));
    }
    if let Some(&c) = counts.iter().find(|&&c| c < 2) {
        return Err(Error::InvalidArgument(format!(
            "tensor grid needs at least 2 points per dimension, got {c}"
        )));
    }
    let factors: Vec<Vec<f64>> = counts
        .iter()
        .enumerate()
        .map(|(d, &c)| {
            (0..c)
                .map(|i| bx.map_from_unit(d, i as f64 / (c - 1) as f64))
                .collect()
        })
        .collect();
    let mut points = vec![Vec::with_capacity(bx.dim())];
    for factor in &factors {
        let mut next = Vec::with_capacity(points.len() * factor.len());
        for p in &points {
            for &x in factor {
                let mut q = p.clone();
                q.push(x);
                next.push(q);
            }
        }
        points = next;
    }
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(SampleSet {
        points,
        meta: SampleMeta {
            scheme: Scheme::Uniform,
            seed: None,
            counts: Some(counts.to_vec()),
            level: None,
        },
    })
}

/// Nested Clenshaw-Curtis node family on [-1, 1]: one node at level 0,
/// 2^l + 1 nodes at level l >= 1. Nodes are symmetrized so reflected pairs
/// are exact, making dedup by bit comparison safe.
pub fn clenshaw_curtis_nodes(level: usize) -> Vec<f64> {
    if level == 0 {
        return vec![0.0];
    }
    let m = 1usize << level;
    (0..=m)
        .map(|j| {
            let forward = (std::f64::consts::PI * j as f64 / m as f64).cos();
            let backward = (std::f64::consts::PI * (m - j) as f64 / m as f64).cos();
            let x = 0.5 * (forward - backward);
            if x.abs() < 1e-15 {
                0.0
            } else {
                x
            }
        })
        .rev()
        .collect()
}

/// Smolyak sparse grid of the given total level: union of tensor grids over
/// multi-indices l with |l|_1 <= level, mapped affinely onto the box.
pub fn smolyak_cc_sample(bx: &ParameterBox, level: usize) -> Result<SampleSet> {
    let p = bx.dim();
    let node_families: Vec<Vec<f64>> = (0..=level).map(clenshaw_curtis_nodes).collect();

    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut index = vec![0usize; p];
    loop {
        if index.iter().sum::<usize>() <= level {
            let factors: Vec<&Vec<f64>> = index.iter().map(|&l| &node_families[l]).collect();
            let mut grid = vec![Vec::with_capacity(p)];
            for f in factors {
                let mut next = Vec::with_capacity(grid.len() * f.len());
                for g in &grid {
                    for &x in f.iter() {
                        let mut q = g.clone();
                        q.push(x);
                        next.push(q);
                    }
                }
                grid = next;
            }
            points.extend(grid);
        }
        // odometer over levels 0..=level per dimension
        let mut d = 0;
        loop {
            if d == p {
                break;
            }
            index[d] += 1;
            if index[d] > level {
                index[d] = 0;
                d += 1;
            } else {
                break;
            }
        }
        if d == p {
            break;
        }
    }
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    points.dedup();
    let mapped = points
        .into_iter()
        .map(|q| {
            q.iter()
                .enumerate()
                .map(|(d, &x)| bx.map_from_unit(d, 0.5 * (x + 1.0)))
                .collect()
        })
        .collect();
    Ok(SampleSet {
        points: mapped,
        meta: SampleMeta {
            scheme: Scheme::Smolyak,
            seed: None,
            counts: None,
            level: Some(level),
        },
    })
}

/// CSV with a `dim0,dim1,...` header, one point per row, full precision.
pub fn write_sample_csv(set: &SampleSet, path: &Path) -> Result<()> {
    let dim = set.points.first().map_or(0, |p| p.len());
    let mut out = String::new();
    let header: Vec<String> = (0..dim).map(|d| format!("dim{d}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for p in &set.points {
        let row: Vec<String> = p.iter().map(|x| format!("{x:.17e}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_sample_meta(meta: &SampleMeta, path: &Path) -> Result<()> {
    let text = toml::to_string_pretty(meta).map_err(|e| Error::Format {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_points_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let _header = lines.next();
    let mut points = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let point: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|s| s.trim().parse::<f64>()).collect();
        points.push(point.map_err(|e| Error::Format {
            path: path.display().to_string(),
            reason: format!("line {}: {e}", ln + 2),
        })?);
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box(p: usize) -> ParameterBox {
        ParameterBox::new(vec![(0.0, 1.0); p]).unwrap()
    }

    #[test]
    fn random_contained_and_deterministic() {
        let bx = ParameterBox::new(vec![(0.5, 0.5 + 1e-9); 3]).unwrap();
        let s1 = random_sample(&bx, 20, 42).unwrap();
        let s2 = random_sample(&bx, 20, 42).unwrap();
        assert_eq!(s1, s2);
        for p in &s1.points {
            assert!(bx.contains(p));
        }
    }

    #[test]
    fn random_mean_is_near_center() {
        let bx = unit_box(2);
        let s = random_sample(&bx, 10_000, 7).unwrap();
        for d in 0..2 {
            let mean: f64 = s.points.iter().map(|p| p[d]).sum::<f64>() / s.len() as f64;
            assert!((mean - 0.5).abs() < 0.02, "mean {mean} out of tolerance");
        }
    }

    #[test]
    fn lhs_stratification_thirteen_points() {
        let bx = ParameterBox::new(vec![(0.1, 1.4); 2]).unwrap();
        let s = lhs_sample(&bx, 13, 3).unwrap();
        for d in 0..2 {
            let mut coords: Vec<f64> = s.points.iter().map(|p| p[d]).collect();
            coords.sort_by(f64::total_cmp);
            for (i, &x) in coords.iter().enumerate() {
                let lo = 0.1 + 0.1 * i as f64;
                assert!(x >= lo - 1e-12 && x <= lo + 0.1 + 1e-12);
            }
        }
    }

    #[test]
    fn lhs_single_point() {
        let bx = unit_box(4);
        let s = lhs_sample(&bx, 1, 9).unwrap();
        assert_eq!(s.len(), 1);
        assert!(bx.contains(&s.points[0]));
    }

    #[test]
    fn uniform_tensor_factors_and_count() {
        let bx = ParameterBox::new(vec![(0.1, 1.4), (0.1, 1.4), (1.0, 8.0)]).unwrap();
        let s = uniform_tensor_sample(&bx, &[3, 3, 3]).unwrap();
        assert_eq!(s.len(), 27);
        let mut third: Vec<f64> = s.points.iter().map(|p| p[2]).collect();
        third.sort_by(f64::total_cmp);
        third.dedup();
        assert_eq!(third, vec![1.0, 4.5, 8.0]);
        let mut first: Vec<f64> = s.points.iter().map(|p| p[0]).collect();
        first.sort_by(f64::total_cmp);
        first.dedup();
        assert_eq!(first, vec![0.1, 0.75, 1.4]);
    }

    #[test]
    fn uniform_two_by_two_is_corners() {
        let s = uniform_tensor_sample(&unit_box(2), &[2, 2]).unwrap();
        assert_eq!(
            s.points,
            vec![
                vec![0.0, 0.0],
                vec![0.0, 1.0],
                vec![1.0, 0.0],
                vec![1.0, 1.0]
            ]
        );
    }

    #[test]
    fn uniform_rejects_count_below_two() {
        assert!(matches!(
            uniform_tensor_sample(&unit_box(2), &[1, 3]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn smolyak_level_one_1d() {
        let bx = ParameterBox::new(vec![(0.1, 1.4)]).unwrap();
        let s = smolyak_cc_sample(&bx, 1).unwrap();
        let xs: Vec<f64> = s.points.iter().map(|p| p[0]).collect();
        assert_eq!(xs, vec![0.1, 0.75, 1.4]);
    }

    #[test]
    fn smolyak_counts_match_enumeration() {
        assert_eq!(smolyak_cc_sample(&unit_box(2), 2).unwrap().len(), 13);
        assert_eq!(smolyak_cc_sample(&unit_box(3), 2).unwrap().len(), 25);
        assert_eq!(smolyak_cc_sample(&unit_box(1), 1).unwrap().len(), 3);
    }

    #[test]
    fn smolyak_nested_across_levels() {
        let bx = unit_box(2);
        let coarse = smolyak_cc_sample(&bx, 1).unwrap();
        let fine = smolyak_cc_sample(&bx, 2).unwrap();
        for p in &coarse.points {
            assert!(fine.points.contains(p), "{p:?} lost on refinement");
        }
    }

    #[test]
    fn smolyak_reflection_symmetry() {
        let bx = ParameterBox::new(vec![(0.1, 1.4), (1.0, 8.0)]).unwrap();
        let s = smolyak_cc_sample(&bx, 2).unwrap();
        let centers = [0.75, 4.5];
        for p in &s.points {
            for d in 0..2 {
                let mut reflected = p.clone();
                reflected[d] = 2.0 * centers[d] - p[d];
                let found = s
                    .points
                    .iter()
                    .any(|q| q.iter().zip(&reflected).all(|(a, b)| (a - b).abs() < 1e-12));
                assert!(found, "missing reflection of {p:?} in dim {d}");
            }
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pts.csv");
        let s = lhs_sample(&unit_box(3), 5, 1).unwrap();
        write_sample_csv(&s, &p).unwrap();
        let back = read_points_csv(&p).unwrap();
        assert_eq!(back, s.points);
    }
}
