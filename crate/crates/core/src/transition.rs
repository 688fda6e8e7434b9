//! Factorised POI-to-POI transition model.
//!
//! Each POI is described by five discrete features (category, neighbourhood
//! and the binned popularity, visit count and average duration). A
//! row-stochastic transition matrix is estimated per feature from
//! consecutive visits with additive smoothing; the joint matrix over feature
//! combinations is their Kronecker product. Combinations that contain no POI
//! are dropped, mass is spread uniformly over POIs sharing a combination,
//! self-loops are removed and every row is renormalised.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{PoiId, PoiTable, Trajectory};
use crate::error::{Error, Result};
use crate::features::{ClusterAssignment, Discretizer, PoiStatistics, NEIGHBOURHOODS};

pub const DEFAULT_EPSILON: f64 = 1.0;

/// Stand-in for `log 0` in stored matrices. Decoders treat any entry at or
/// below [`FORBIDDEN_THRESHOLD`] as a disallowed transition.
pub const FORBIDDEN: f64 = -1.0e300;
pub const FORBIDDEN_THRESHOLD: f64 = -1.0e299;

pub fn is_forbidden(log_p: f64) -> bool {
    !(log_p > FORBIDDEN_THRESHOLD)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::validation("matrix rows must form a square"));
        }
        Ok(SquareMatrix {
            n,
            data: rows.concat(),
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        SquareMatrix { n, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    fn validate(&self) -> Result<()> {
        if self.data.len() != self.n * self.n {
            return Err(Error::validation("matrix data does not match its size"));
        }
        Ok(())
    }
}

/// Left-associated Kronecker product `((M₁ ⊗ M₂) ⊗ M₃) ⊗ …`.
pub fn kronecker(matrices: &[SquareMatrix]) -> Result<SquareMatrix> {
    let (first, rest) = matrices
        .split_first()
        .ok_or_else(|| Error::validation("kronecker product of no matrices"))?;
    let mut acc = first.clone();
    for m in rest {
        let n = acc.n * m.n;
        let mut data = vec![0.0; n * n];
        for i in 0..acc.n {
            for j in 0..acc.n {
                let a = acc.get(i, j);
                for k in 0..m.n {
                    for l in 0..m.n {
                        data[(i * m.n + k) * n + j * m.n + l] = a * m.get(k, l);
                    }
                }
            }
        }
        acc = SquareMatrix { n, data };
    }
    Ok(acc)
}

/// Entry of the Kronecker product addressed by per-factor states, computed
/// without materialising the product. Bit-identical to the corresponding
/// entry of [`kronecker`].
pub fn kronecker_entry(matrices: &[SquareMatrix], from: &[usize], to: &[usize]) -> f64 {
    let mut v = matrices[0].get(from[0], to[0]);
    for (f, m) in matrices.iter().enumerate().skip(1) {
        v *= m.get(from[f], to[f]);
    }
    v
}

/// Flat index in the Kronecker product of a per-factor state tuple.
pub fn kronecker_index(matrices: &[SquareMatrix], states: &[usize]) -> usize {
    matrices
        .iter()
        .zip(states)
        .fold(0, |acc, (m, &s)| acc * m.n + s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTransition {
    pub name: String,
    pub states: Vec<String>,
    pub matrix: SquareMatrix,
}

/// Smoothed maximum-likelihood transitions between the states of one
/// feature, counted over consecutive visits of every trajectory.
pub fn fit_feature_transition(
    trajectories: &[Trajectory],
    state_of: impl Fn(PoiId) -> Option<usize>,
    states: Vec<String>,
    name: &str,
    epsilon: f64,
) -> Result<FeatureTransition> {
    let n = states.len();
    if n == 0 {
        return Err(Error::validation(format!("feature {name} has no states")));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::validation(format!("epsilon must be positive, got {epsilon}")));
    }
    let mut counts = vec![0.0; n * n];
    for t in trajectories {
        for w in t.visits().windows(2) {
            let a = state_of(w[0].poi).ok_or(Error::UnknownPoi(w[0].poi))?;
            let b = state_of(w[1].poi).ok_or(Error::UnknownPoi(w[1].poi))?;
            if a >= n || b >= n {
                return Err(Error::validation(format!("feature {name}: state out of range")));
            }
            counts[a * n + b] += 1.0;
        }
    }
    for row in counts.chunks_exact_mut(n) {
        let total: f64 = row.iter().map(|c| c + epsilon).sum();
        for c in row.iter_mut() {
            *c = (*c + epsilon) / total;
        }
    }
    Ok(FeatureTransition {
        name: name.to_string(),
        states,
        matrix: SquareMatrix { n, data: counts },
    })
}

/// Log-scale binning of the three numeric POI statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionDiscretizers {
    pub popularity: Discretizer,
    pub n_visit: Discretizer,
    pub avg_duration: Discretizer,
}

impl TransitionDiscretizers {
    /// Fits on the statistics of every POI in the table.
    pub fn fit(pois: &PoiTable, stats: &PoiStatistics) -> Result<Self> {
        let all: Vec<_> = pois.ids().map(|id| stats.get(id)).collect();
        let pick = |f: fn(&crate::features::PoiStats) -> f64| -> Vec<f64> {
            all.iter().map(f).collect()
        };
        Ok(TransitionDiscretizers {
            popularity: Discretizer::fit(&pick(|s| s.popularity as f64))?,
            n_visit: Discretizer::fit(&pick(|s| s.n_visit as f64))?,
            avg_duration: Discretizer::fit(&pick(|s| s.avg_duration))?,
        })
    }
}

pub const FEATURE_NAMES: [&str; 5] = ["category", "neighbourhood", "popularity", "nVisit", "avgDuration"];

/// Five-feature state of every POI, in table order.
pub fn poi_states(
    pois: &PoiTable,
    stats: &PoiStatistics,
    clusters: &ClusterAssignment,
    disc: &TransitionDiscretizers,
) -> Result<Vec<[usize; 5]>> {
    if clusters.assignment.len() != pois.len() {
        return Err(Error::validation("cluster assignment does not cover the POI table"));
    }
    Ok((0..pois.len())
        .map(|i| {
            let s = stats.get(pois.poi(i).id);
            [
                pois.category_index(i),
                clusters.cluster(i),
                disc.popularity.bin(s.popularity as f64),
                disc.n_visit.bin(s.n_visit as f64),
                disc.avg_duration.bin(s.avg_duration),
            ]
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionModel {
    pub epsilon: f64,
    pub features: Vec<FeatureTransition>,
    pub poi_ids: Vec<PoiId>,
    pub poi_state: Vec<[usize; 5]>,
    /// Row-major `N × N` matrix of `log P(to | from)`; disallowed entries
    /// hold [`FORBIDDEN`].
    log_p: Vec<f64>,
}

pub fn build(
    trajectories: &[Trajectory],
    pois: &PoiTable,
    stats: &PoiStatistics,
    clusters: &ClusterAssignment,
    disc: &TransitionDiscretizers,
    epsilon: f64,
) -> Result<TransitionModel> {
    let n = pois.len();
    if n < 2 {
        return Err(Error::NoTransitions);
    }
    let states = poi_states(pois, stats, clusters, disc)?;
    let lookup = |f: usize| {
        let states = &states;
        move |id: PoiId| pois.index_of(id).map(|i| states[i][f])
    };
    let bins = |prefix: &str| -> Vec<String> {
        (0..Discretizer::BINS).map(|b| format!("{prefix}{b}")).collect()
    };
    let vocab: [Vec<String>; 5] = [
        pois.categories().to_vec(),
        (0..clusters.k.max(1)).map(|k| format!("cluster{k}")).collect(),
        bins("bin"),
        bins("bin"),
        bins("bin"),
    ];
    let features: Vec<FeatureTransition> = vocab
        .into_iter()
        .enumerate()
        .map(|(f, v)| fit_feature_transition(trajectories, lookup(f), v, FEATURE_NAMES[f], epsilon))
        .collect::<Result<_>>()?;
    let matrices: Vec<SquareMatrix> = features.iter().map(|f| f.matrix.clone()).collect();

    // Only combinations that contain at least one POI survive.
    let mut group_size: BTreeMap<[usize; 5], usize> = BTreeMap::new();
    for s in &states {
        *group_size.entry(*s).or_insert(0) += 1;
    }

    let mut log_p = vec![FORBIDDEN; n * n];
    for i in 0..n {
        let si = states[i];
        let mut row = vec![0.0; n];
        for (j, cell) in row.iter_mut().enumerate() {
            if i == j {
                continue;
            }
            let sj = states[j];
            let joint = kronecker_entry(&matrices, &si, &sj);
            let m = group_size[&sj];
            *cell = if si == sj {
                joint / (m - 1) as f64
            } else {
                joint / m as f64
            };
        }
        let total: f64 = row.iter().sum();
        for j in 0..n {
            if i != j {
                log_p[i * n + j] = (row[j] / total).ln();
            }
        }
    }

    Ok(TransitionModel {
        epsilon,
        features,
        poi_ids: pois.ids().collect(),
        poi_state: states,
        log_p,
    })
}

impl TransitionModel {
    pub fn n(&self) -> usize {
        self.poi_ids.len()
    }

    fn index(&self, id: PoiId) -> Result<usize> {
        self.poi_ids
            .binary_search(&id)
            .map_err(|_| Error::UnknownPoi(id))
    }

    /// `log P(to | from)`; [`FORBIDDEN`] when `from == to`.
    pub fn log_transition(&self, from: PoiId, to: PoiId) -> Result<f64> {
        let i = self.index(from)?;
        let j = self.index(to)?;
        Ok(self.log_p_at(i, j))
    }

    /// Entry by dense table index.
    pub fn log_p_at(&self, i: usize, j: usize) -> f64 {
        self.log_p[i * self.n() + j]
    }

    /// The whole row-major matrix.
    pub fn log_matrix(&self) -> &[f64] {
        &self.log_p
    }

    pub fn log_row(&self, i: usize) -> &[f64] {
        let n = self.n();
        &self.log_p[i * n..(i + 1) * n]
    }

    /// Structural checks for a model decoded from outside.
    pub fn validate(&self, pois: &PoiTable) -> Result<()> {
        let n = self.n();
        if n != pois.len() || !self.poi_ids.iter().copied().eq(pois.ids()) {
            return Err(Error::validation("transition model POIs differ from the POI table"));
        }
        if self.log_p.len() != n * n || self.poi_state.len() != n {
            return Err(Error::validation("transition matrix has the wrong size"));
        }
        if self.features.len() != FEATURE_NAMES.len() {
            return Err(Error::validation("transition model needs five feature matrices"));
        }
        for f in &self.features {
            f.matrix.validate()?;
            if f.matrix.n() != f.states.len() {
                return Err(Error::validation(format!("feature {} has mismatched states", f.name)));
            }
        }
        for s in &self.poi_state {
            if s.iter().zip(&self.features).any(|(&x, f)| x >= f.matrix.n()) {
                return Err(Error::validation("POI state outside its feature vocabulary"));
            }
        }
        if self.features[1].matrix.n() > NEIGHBOURHOODS {
            return Err(Error::validation("too many neighbourhood states"));
        }
        for i in 0..n {
            if !is_forbidden(self.log_p_at(i, i)) {
                return Err(Error::validation("self-transitions must be forbidden"));
            }
            let total: f64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| self.log_p_at(i, j))
                .map(|l| if l.is_finite() && l <= 0.0 { l.exp() } else { f64::NAN })
                .sum();
            if !((total - 1.0).abs() <= 1e-6) {
                return Err(Error::validation(format!("transition row {i} is not stochastic")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Poi;
    use crate::features::{compute_stats, kmeans};

    fn m(rows: &[&[f64]]) -> SquareMatrix {
        SquareMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn pure_smoothing_is_uniform() {
        let f = fit_feature_transition(&[], |_| Some(0), vec!["a".into(), "b".into()], "x", 1.0)
            .unwrap();
        assert_eq!(f.matrix.row(0), &[0.5, 0.5]);
        assert_eq!(f.matrix.row(1), &[0.5, 0.5]);
    }

    #[test]
    fn hand_counted_category_sequence() {
        // categories X, Y, X: transitions X->Y and Y->X once each
        let t = Trajectory::from_pois("u", 0, &[PoiId(0), PoiId(1), PoiId(2)]).unwrap();
        let cat = |p: PoiId| Some(if p.0 == 1 { 1 } else { 0 });
        let f = fit_feature_transition(&[t], cat, vec!["X".into(), "Y".into()], "category", 1.0)
            .unwrap();
        assert_eq!(f.matrix.row(0), &[1.0 / 3.0, 2.0 / 3.0]);
        assert_eq!(f.matrix.row(1), &[2.0 / 3.0, 1.0 / 3.0]);
    }

    #[test]
    fn kronecker_cases() {
        assert_eq!(kronecker(&[SquareMatrix::identity(2), SquareMatrix::identity(2)]).unwrap(),
            SquareMatrix::identity(4));

        let b = m(&[&[0.2, 0.8], &[0.6, 0.4]]);
        let scaled = kronecker(&[m(&[&[3.0]]), b.clone()]).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(scaled.get(i, j), 3.0 * b.get(i, j));
            }
        }

        let block = kronecker(&[SquareMatrix::identity(2), b]).unwrap();
        let want = m(&[
            &[0.2, 0.8, 0.0, 0.0],
            &[0.6, 0.4, 0.0, 0.0],
            &[0.0, 0.0, 0.2, 0.8],
            &[0.0, 0.0, 0.6, 0.4],
        ]);
        assert_eq!(block, want);
        assert!(kronecker(&[]).is_err());
    }

    #[test]
    fn kronecker_entry_matches_product() {
        let ms = vec![
            m(&[&[0.1, 0.9], &[0.3, 0.7]]),
            m(&[&[0.2, 0.5, 0.3], &[0.6, 0.1, 0.3], &[0.25, 0.25, 0.5]]),
            m(&[&[0.4, 0.6], &[0.9, 0.1]]),
        ];
        let full = kronecker(&ms).unwrap();
        for a in 0..2 {
            for b in 0..3 {
                for c in 0..2 {
                    for x in 0..2 {
                        for y in 0..3 {
                            for z in 0..2 {
                                let (from, to) = ([a, b, c], [x, y, z]);
                                let i = kronecker_index(&ms, &from);
                                let j = kronecker_index(&ms, &to);
                                assert_eq!(full.get(i, j), kronecker_entry(&ms, &from, &to));
                            }
                        }
                    }
                }
            }
        }
    }

    fn model_for(pois: &PoiTable, ts: &[Trajectory], eps: f64) -> TransitionModel {
        let stats = compute_stats(ts);
        let clusters = kmeans(pois, pois.len().min(5), 0).unwrap();
        let disc = TransitionDiscretizers::fit(pois, &stats).unwrap();
        build(ts, pois, &stats, &clusters, &disc, eps).unwrap()
    }

    fn row_sum(model: &TransitionModel, i: usize) -> f64 {
        (0..model.n())
            .filter(|&j| j != i)
            .map(|j| model.log_p_at(i, j).exp())
            .sum()
    }

    #[test]
    fn two_poi_dataset_is_forced() {
        let pois = PoiTable::new(vec![Poi::new(1, 55.9, -3.2, "a"), Poi::new(2, 55.95, -3.1, "b")])
            .unwrap();
        let ts = vec![Trajectory::from_pois("u", 0, &[PoiId(1), PoiId(2)]).unwrap()];
        let model = model_for(&pois, &ts, 1.0);
        assert_eq!(model.log_transition(PoiId(1), PoiId(2)).unwrap(), 0.0);
        assert!(is_forbidden(model.log_transition(PoiId(1), PoiId(1)).unwrap()));
        assert!(model.log_transition(PoiId(1), PoiId(7)).is_err());
        model.validate(&pois).unwrap();
    }

    #[test]
    fn single_poi_has_no_transitions() {
        let pois = PoiTable::new(vec![Poi::new(1, 55.9, -3.2, "a")]).unwrap();
        let stats = compute_stats(&[]);
        let clusters = kmeans(&pois, 1, 0).unwrap();
        let disc = TransitionDiscretizers::fit(&pois, &stats).unwrap();
        assert!(matches!(
            build(&[], &pois, &stats, &clusters, &disc, 1.0),
            Err(Error::NoTransitions)
        ));
    }

    #[test]
    fn shared_state_splits_mass() {
        // POIs 1 and 2 are identical in every feature; POI 3 differs.
        let pois = PoiTable::new(vec![
            Poi::new(1, 55.9, -3.2, "a"),
            Poi::new(2, 55.9, -3.2, "a"),
            Poi::new(3, 10.0, 10.0, "b"),
        ])
        .unwrap();
        let stats = compute_stats(&[]);
        let clusters = kmeans(&pois, 2, 0).unwrap();
        let disc = TransitionDiscretizers::fit(&pois, &stats).unwrap();
        let model = build(&[], &pois, &stats, &clusters, &disc, 1.0).unwrap();
        assert_eq!(model.poi_state[0], model.poi_state[1]);
        assert_ne!(model.poi_state[0], model.poi_state[2]);

        // Hand computation: smoothing only, so each feature row is uniform.
        // Category and neighbourhood have 2 states (1/2 each); the three
        // binned features are degenerate (all POIs in bin 0) with 5 states,
        // so the same-bin entry is 1/5.
        let joint = 0.5 * 0.5 * 0.2 * 0.2 * 0.2;
        // From POI 1: to POI 2 (same state, M - 1 = 1) gets `joint`; to POI 3
        // (M = 1) gets `joint` as well.
        let p12 = model.log_transition(PoiId(1), PoiId(2)).unwrap().exp();
        let p13 = model.log_transition(PoiId(1), PoiId(3)).unwrap().exp();
        assert!((p12 - joint / (2.0 * joint)).abs() < 1e-12);
        assert!((p13 - 0.5).abs() < 1e-12);
        // From POI 3 the group {1, 2} receives `joint` split in two.
        let p31 = model.log_transition(PoiId(3), PoiId(1)).unwrap().exp();
        assert!((p31 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rows_stochastic_on_synthetic_data() {
        use crate::data::{synth_dataset, SynthConfig};
        for seed in 0..5 {
            let (pois, ts) = synth_dataset(&SynthConfig {
                seed,
                n_pois: 12,
                n_traj: 40,
                max_len: 5,
            })
            .unwrap();
            let model = model_for(&pois, &ts, 1.0);
            for i in 0..model.n() {
                assert!((row_sum(&model, i) - 1.0).abs() < 1e-9);
                assert!(is_forbidden(model.log_p_at(i, i)));
                let logs: Vec<f64> = (0..model.n()).filter(|&j| j != i).map(|j| model.log_p_at(i, j)).collect();
                let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
                assert!(lse.abs() < 1e-9);
            }
            assert_eq!(model, model_for(&pois, &ts, 1.0));
            model.validate(&pois).unwrap();
        }
    }

    #[test]
    fn heavy_smoothing_tends_to_uniform() {
        let pois = PoiTable::new(vec![
            Poi::new(1, 55.90, -3.20, "a"),
            Poi::new(2, 55.91, -3.10, "b"),
            Poi::new(3, 55.99, -3.25, "c"),
            Poi::new(4, 56.10, -3.00, "d"),
        ])
        .unwrap();
        let ts = vec![
            Trajectory::from_pois("u", 0, &[PoiId(1), PoiId(2), PoiId(3)]).unwrap(),
            Trajectory::from_pois("v", 1, &[PoiId(4), PoiId(2)]).unwrap(),
        ];
        let model = model_for(&pois, &ts, 1e9);
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!((model.log_p_at(i, j).exp() - 1.0 / 3.0).abs() < 1e-6);
                }
            }
        }
    }
}
