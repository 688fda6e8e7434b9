use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::PoiTable;
use crate::error::{Error, Result};

pub const DEFAULT_CLUSTERS: usize = 5;
pub const MAX_KMEANS_ITERATIONS: usize = 200;

/// Neighbourhood of every POI, indexed by table position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub k: usize,
    pub assignment: Vec<usize>,
    pub centroids: Vec<(f64, f64)>,
    /// Objective after each assignment step.
    pub objective_trace: Vec<f64>,
}

impl ClusterAssignment {
    pub fn cluster(&self, poi_index: usize) -> usize {
        self.assignment[poi_index]
    }

    pub fn objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(0.0)
    }
}

fn sq_dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
}

fn nearest(p: (f64, f64), centroids: &[(f64, f64)]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, &m) in centroids.iter().enumerate() {
        let d = sq_dist(p, m);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_seeds(points: &[(f64, f64)], k: usize, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let mut centroids = vec![points[rng.gen_range(0..points.len())]];
    while centroids.len() < k {
        let d2: Vec<f64> = points.iter().map(|&p| nearest(p, &centroids).1).collect();
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && u < d {
                    chosen = i;
                    break;
                }
                u -= d;
            }
            chosen
        } else {
            rng.gen_range(0..points.len())
        };
        centroids.push(points[pick]);
    }
    centroids
}

/// Lloyd's algorithm on raw `(lat, lon)` with k-means++ seeding.
///
/// Stops when assignments no longer change or after
/// [`MAX_KMEANS_ITERATIONS`] rounds. Distance ties go to the lower cluster
/// index; an empty cluster keeps its previous centroid.
pub fn kmeans(pois: &PoiTable, k: usize, seed: u64) -> Result<ClusterAssignment> {
    if k == 0 || k > pois.len() {
        return Err(Error::validation(format!(
            "k-means needs 1 <= k <= {} POIs, got k = {k}",
            pois.len()
        )));
    }
    let points: Vec<(f64, f64)> = pois.pois().iter().map(|p| (p.lat, p.lon)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_seeds(&points, k, &mut rng);
    let mut assignment: Vec<usize> = Vec::new();
    let mut trace = Vec::new();

    for _ in 0..MAX_KMEANS_ITERATIONS {
        let mut next = Vec::with_capacity(points.len());
        let mut objective = 0.0;
        for &p in &points {
            let (c, d) = nearest(p, &centroids);
            next.push(c);
            objective += d;
        }
        trace.push(objective);
        if next == assignment {
            break;
        }
        assignment = next;

        let mut sums = vec![(0.0, 0.0, 0usize); k];
        for (&p, &c) in points.iter().zip(&assignment) {
            sums[c].0 += p.0;
            sums[c].1 += p.1;
            sums[c].2 += 1;
        }
        for (c, &(lat, lon, n)) in sums.iter().enumerate() {
            if n > 0 {
                centroids[c] = (lat / n as f64, lon / n as f64);
            }
        }
    }

    Ok(ClusterAssignment {
        k,
        assignment,
        centroids,
        objective_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Poi;
    use rand::Rng;

    fn table(points: &[(f64, f64)]) -> PoiTable {
        PoiTable::new(
            points
                .iter()
                .enumerate()
                .map(|(i, &(lat, lon))| Poi::new(i as u32, lat, lon, "c"))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn coincident_points_share_a_cluster() {
        let t = table(&[(55.9, -3.2); 6]);
        let c = kmeans(&t, 3, 1).unwrap();
        assert!(c.assignment.iter().all(|&a| a == c.assignment[0]));
    }

    #[test]
    fn separates_distant_clouds() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut pts = Vec::new();
        for _ in 0..10 {
            pts.push((rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)));
        }
        for _ in 0..10 {
            pts.push((rng.gen_range(10.0..11.0), rng.gen_range(10.0..11.0)));
        }
        let t = table(&pts);
        for seed in 0..10 {
            let c = kmeans(&t, 2, seed).unwrap();
            let a = c.assignment[0];
            let b = c.assignment[10];
            assert_ne!(a, b);
            assert!(c.assignment[..10].iter().all(|&x| x == a));
            assert!(c.assignment[10..].iter().all(|&x| x == b));
        }
    }

    #[test]
    fn k_equals_n_gives_singletons() {
        let t = table(&[(0.0, 0.0), (1.0, 1.0), (2.0, 0.5), (3.0, 3.0)]);
        let c = kmeans(&t, 4, 2).unwrap();
        let mut seen = c.assignment.clone();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 4);
        assert_eq!(c.objective(), 0.0);
    }

    #[test]
    fn rejects_too_many_clusters() {
        let t = table(&[(0.0, 0.0), (1.0, 1.0)]);
        assert!(kmeans(&t, 3, 0).is_err());
        assert!(kmeans(&t, 0, 0).is_err());
    }

    #[test]
    fn objective_non_increasing_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<_> = (0..60)
            .map(|_| (rng.gen_range(55.9..56.0), rng.gen_range(-3.3..-3.1)))
            .collect();
        let t = table(&pts);
        for seed in 0..20 {
            let c = kmeans(&t, 5, seed).unwrap();
            for w in c.objective_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-15, "{:?}", c.objective_trace);
            }
            assert_eq!(c, kmeans(&t, 5, seed).unwrap());
            assert!(c.assignment.iter().all(|&a| a < 5));
        }
    }
}
