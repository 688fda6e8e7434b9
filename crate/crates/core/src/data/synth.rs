//! Seeded synthetic datasets with a planted transition structure.
//!
//! POIs are scattered around a few neighbourhood hubs inside a city-sized
//! box. Every POI carries a latent attractiveness; trajectories are sampled
//! from a planted first-order chain whose weights combine attractiveness,
//! a category-to-category affinity and geographic proximity, so both the
//! POI ranker and the factorised transition model have signal to recover.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Poi, PoiTable, Trajectory, Visit};
use crate::error::{Error, Result};
use crate::features::haversine_km;

pub const SYNTH_CATEGORIES: [&str; 4] = ["Cultural", "Structures", "Park", "Entertainment"];

const LAT_RANGE: (f64, f64) = (55.930, 55.970);
const LON_RANGE: (f64, f64) = (-3.220, -3.160);
const HUBS: usize = 4;
const JITTER_DEG: f64 = 0.004;
const PROXIMITY_KM: f64 = 1.5;
const FAVOURED_SUCCESSOR: f64 = 3.0;
const BASE_TIME: i64 = 1_400_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_pois: usize,
    pub n_traj: usize,
    pub max_len: usize,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_pois < 3 {
            return Err(Error::validation("synthetic dataset needs at least 3 POIs"));
        }
        if self.n_traj < 1 {
            return Err(Error::validation("synthetic dataset needs at least 1 trajectory"));
        }
        if self.max_len < 2 || self.max_len > self.n_pois {
            return Err(Error::validation(format!(
                "max_len must lie in [2, {}], got {}",
                self.n_pois, self.max_len
            )));
        }
        Ok(())
    }
}

/// Ground-truth generator: unnormalised transition weights over POI indices
/// plus per-POI start weights and mean visit durations.
#[derive(Debug, Clone)]
pub struct PlantedModel {
    n: usize,
    weights: Vec<f64>,
    start_weights: Vec<f64>,
    mean_duration: Vec<i64>,
}

impl PlantedModel {
    /// Builds a model from an explicit row-major `n × n` weight matrix.
    /// The diagonal is ignored.
    pub fn from_weights(n: usize, weights: Vec<f64>) -> Result<Self> {
        if n < 2 || weights.len() != n * n {
            return Err(Error::validation("weight matrix must be n × n with n ≥ 2"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::validation("weights must be finite and non-negative"));
        }
        Ok(PlantedModel {
            n,
            weights,
            start_weights: vec![1.0; n],
            mean_duration: vec![1800; n],
        })
    }

    fn generate(rng: &mut ChaCha8Rng, pois: &PoiTable, attractiveness: &[f64]) -> Self {
        let n = pois.len();
        let n_cat = pois.categories().len();
        let mut successor: Vec<usize> = (0..n_cat).collect();
        successor.shuffle(rng);

        let mut weights = vec![0.0; n * n];
        for i in 0..n {
            let ci = pois.category_index(i);
            let pi = pois.poi(i);
            for j in 0..n {
                if i == j {
                    continue;
                }
                let pj = pois.poi(j);
                let affinity = if pois.category_index(j) == successor[ci] {
                    FAVOURED_SUCCESSOR
                } else {
                    1.0
                };
                let km = haversine_km((pi.lat, pi.lon), (pj.lat, pj.lon));
                weights[i * n + j] = attractiveness[j] * affinity * (-km / PROXIMITY_KM).exp();
            }
        }
        let mean_duration = (0..n).map(|_| rng.gen_range(900..=5400)).collect();
        PlantedModel {
            n,
            weights,
            start_weights: attractiveness.iter().map(|a| a.sqrt()).collect(),
            mean_duration,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn weight(&self, from: usize, to: usize) -> f64 {
        self.weights[from * self.n + to]
    }

    fn pick(rng: &mut ChaCha8Rng, weights: impl Iterator<Item = (usize, f64)>) -> Option<usize> {
        let cands: Vec<(usize, f64)> = weights.filter(|(_, w)| *w > 0.0).collect();
        let total: f64 = cands.iter().map(|(_, w)| w).sum();
        if cands.is_empty() || !(total > 0.0) {
            return None;
        }
        let mut u = rng.gen::<f64>() * total;
        for &(i, w) in &cands {
            if u < w {
                return Some(i);
            }
            u -= w;
        }
        cands.last().map(|c| c.0)
    }

    /// Samples a sequence of at most `length` distinct POI indices. The walk
    /// stops early if every remaining weight is zero.
    pub fn sample_indices(&self, rng: &mut ChaCha8Rng, length: usize) -> Vec<usize> {
        let mut seq = Vec::with_capacity(length);
        let Some(start) = Self::pick(rng, self.start_weights.iter().copied().enumerate()) else {
            return seq;
        };
        let mut visited = vec![false; self.n];
        visited[start] = true;
        seq.push(start);
        while seq.len() < length {
            let cur = *seq.last().unwrap();
            let next = Self::pick(
                rng,
                (0..self.n)
                    .filter(|&j| !visited[j])
                    .map(|j| (j, self.weight(cur, j))),
            );
            match next {
                Some(j) => {
                    visited[j] = true;
                    seq.push(j);
                }
                None => break,
            }
        }
        seq
    }

    fn visits(&self, rng: &mut ChaCha8Rng, pois: &PoiTable, seq: &[usize], t0: i64) -> Vec<Visit> {
        let mut t = t0;
        seq.iter()
            .map(|&i| {
                let mean = self.mean_duration[i] as f64;
                let stay = (mean * rng.gen_range(0.5..1.5)) as i64;
                let v = Visit::new(pois.poi(i).id, t, t + stay);
                t += stay + rng.gen_range(300..=1800);
                v
            })
            .collect()
    }
}

/// Generates a deterministic dataset of `n_pois` POIs and `n_traj`
/// trajectories with lengths in `[2, max_len]`.
pub fn synth_dataset(cfg: &SynthConfig) -> Result<(PoiTable, Vec<Trajectory>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let hubs: Vec<(f64, f64)> = (0..HUBS)
        .map(|_| {
            (
                rng.gen_range(LAT_RANGE.0..LAT_RANGE.1),
                rng.gen_range(LON_RANGE.0..LON_RANGE.1),
            )
        })
        .collect();
    let pois: Vec<Poi> = (0..cfg.n_pois)
        .map(|i| {
            let (hlat, hlon) = hubs[rng.gen_range(0..HUBS)];
            let lat = hlat + rng.gen_range(-JITTER_DEG..JITTER_DEG);
            let lon = hlon + rng.gen_range(-JITTER_DEG..JITTER_DEG);
            let cat = SYNTH_CATEGORIES[rng.gen_range(0..SYNTH_CATEGORIES.len())];
            let mut p = Poi::new(i as u32, lat, lon, cat);
            p.name = Some(format!("poi-{i}"));
            p
        })
        .collect();
    let table = PoiTable::with_categories(
        pois,
        SYNTH_CATEGORIES.iter().map(|c| c.to_string()).collect(),
    )?;

    let mut rank: Vec<usize> = (0..cfg.n_pois).collect();
    rank.shuffle(&mut rng);
    let attractiveness: Vec<f64> = rank.iter().map(|&r| 1.0 / (r as f64 + 1.0)).collect();
    let model = PlantedModel::generate(&mut rng, &table, &attractiveness);

    let n_users = (cfg.n_traj / 4).max(1);
    let mut trajectories = Vec::with_capacity(cfg.n_traj);
    for k in 0..cfg.n_traj {
        let length = rng.gen_range(2..=cfg.max_len);
        let seq = model.sample_indices(&mut rng, length);
        let user = format!("u{:03}", rng.gen_range(0..n_users));
        let visits = model.visits(&mut rng, &table, &seq, BASE_TIME + 86_400 * k as i64);
        trajectories.push(Trajectory::new(user, k as u64, visits)?);
    }
    Ok((table, trajectories))
}

/// Samples `count` trajectories of length `length` from an explicit planted
/// model over `pois`.
pub fn sample_from(
    model: &PlantedModel,
    pois: &PoiTable,
    seed: u64,
    count: usize,
    length: usize,
) -> Result<Vec<Trajectory>> {
    if model.len() != pois.len() {
        return Err(Error::validation("planted model and POI table disagree in size"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| {
            let seq = model.sample_indices(&mut rng, length);
            let visits = model.visits(&mut rng, pois, &seq, BASE_TIME + 86_400 * k as i64);
            Trajectory::new(format!("u{k}"), k as u64, visits)
        })
        .collect()
}
