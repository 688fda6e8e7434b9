//! Query-conditioned POI ranking with a pairwise squared-hinge model.
//!
//! Training minimises
//!
//! ```text
//! ½‖w‖² + C Σ max(0, 1 − wᵀ(φ_hi − φ_lo))²
//! ```
//!
//! over every pair of POIs whose labels differ under the same training
//! query. The loss is continuously differentiable, so training uses a
//! damped Newton method on the generalised Hessian
//! `I + 2C Σ_active d dᵀ`, starting from `w = 0`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{PoiId, Query, Trajectory};
use crate::error::{Error, Result};
use crate::features::{check_dims, FeatureContext, FeatureVector, Scaler};

pub const DEFAULT_C: f64 = 10.0;
pub const GRADIENT_TOLERANCE: f64 = 1e-6;
pub const MAX_ITERATIONS: usize = 10_000;

/// Occurrence labels per training query. POIs missing from a query's map
/// have label 0.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RankLabelSet {
    groups: BTreeMap<Query, BTreeMap<PoiId, u32>>,
}

impl RankLabelSet {
    pub fn queries(&self) -> impl Iterator<Item = &Query> {
        self.groups.keys()
    }

    pub fn label(&self, q: &Query, p: PoiId) -> u32 {
        self.groups
            .get(q)
            .and_then(|m| m.get(&p))
            .copied()
            .unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

/// Groups trajectories by their query and counts, for every POI, how many
/// trajectories in the group pass through it as an intermediate stop.
pub fn build_labels(trajectories: &[Trajectory]) -> RankLabelSet {
    let mut groups: BTreeMap<Query, BTreeMap<PoiId, u32>> = BTreeMap::new();
    for t in trajectories {
        let Some(q) = t.query() else { continue };
        let labels = groups.entry(q).or_default();
        let pois = t.pois();
        let mut inner: Vec<PoiId> = pois[1..pois.len() - 1].to_vec();
        inner.sort_unstable();
        inner.dedup();
        for p in inner {
            *labels.entry(p).or_insert(0) += 1;
        }
    }
    RankLabelSet { groups }
}

/// The training objective over a fixed set of preference pairs, each stored
/// as the difference `φ_hi − φ_lo`.
#[derive(Debug, Clone)]
pub struct PairwiseProblem {
    dim: usize,
    c: f64,
    diffs: Vec<f64>,
}

impl PairwiseProblem {
    pub fn new(dim: usize, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::validation(format!("C must be positive, got {c}")));
        }
        Ok(PairwiseProblem {
            dim,
            c,
            diffs: Vec::new(),
        })
    }

    pub fn from_pairs(pairs: &[(FeatureVector, FeatureVector)], c: f64) -> Result<Self> {
        let dim = pairs.first().map_or(0, |p| p.0.len());
        let mut problem = Self::new(dim, c)?;
        for (hi, lo) in pairs {
            problem.push_pair(hi, lo)?;
        }
        Ok(problem)
    }

    pub fn push_pair(&mut self, hi: &FeatureVector, lo: &FeatureVector) -> Result<()> {
        check_dims(self.dim, hi.len(), "preference pair")?;
        check_dims(self.dim, lo.len(), "preference pair")?;
        self.diffs
            .extend(hi.0.iter().zip(&lo.0).map(|(a, b)| a - b));
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn n_pairs(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.diffs.len() / self.dim
        }
    }

    fn diffs(&self) -> impl Iterator<Item = &[f64]> {
        self.diffs.chunks_exact(self.dim.max(1))
    }

    fn check_w(&self, w: &[f64]) -> Result<()> {
        check_dims(self.dim, w.len(), "weight vector")
    }

    pub fn objective(&self, w: &[f64]) -> Result<f64> {
        self.check_w(w)?;
        Ok(self.objective_unchecked(w))
    }

    fn objective_unchecked(&self, w: &[f64]) -> f64 {
        let reg = 0.5 * dot(w, w);
        let loss: f64 = self
            .diffs()
            .map(|d| (1.0 - dot(w, d)).max(0.0).powi(2))
            .sum();
        reg + self.c * loss
    }

    pub fn gradient(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.check_w(w)?;
        Ok(self.gradient_unchecked(w))
    }

    fn gradient_unchecked(&self, w: &[f64]) -> Vec<f64> {
        let mut g = w.to_vec();
        for d in self.diffs() {
            let margin = 1.0 - dot(w, d);
            if margin > 0.0 {
                let s = 2.0 * self.c * margin;
                for (gi, di) in g.iter_mut().zip(d) {
                    *gi -= s * di;
                }
            }
        }
        g
    }

    fn newton_direction(&self, w: &[f64], g: &[f64]) -> Option<Vec<f64>> {
        let n = self.dim;
        let mut h = DMatrix::<f64>::identity(n, n);
        for d in self.diffs() {
            if 1.0 - dot(w, d) > 0.0 {
                let dv = DVector::from_column_slice(d);
                h.ger(2.0 * self.c, &dv, &dv, 1.0);
            }
        }
        let rhs = DVector::from_iterator(n, g.iter().map(|x| -x));
        h.cholesky().map(|ch| ch.solve(&rhs).iter().copied().collect())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub iterations: usize,
    pub objective: f64,
    pub initial_objective: f64,
    pub gradient_norm: f64,
    pub converged: bool,
    pub n_pairs: usize,
}

/// Minimises the problem from `w = 0`. Deterministic.
pub fn minimize(problem: &PairwiseProblem) -> (Vec<f64>, TrainReport) {
    let mut w = vec![0.0; problem.dim];
    let initial = problem.objective_unchecked(&w);
    let mut f = initial;
    let mut iterations = 0;
    let mut converged = false;
    let mut gnorm;
    loop {
        let g = problem.gradient_unchecked(&w);
        gnorm = dot(&g, &g).sqrt();
        if gnorm <= GRADIENT_TOLERANCE {
            converged = true;
            break;
        }
        if iterations >= MAX_ITERATIONS {
            break;
        }
        let Some(step) = problem.newton_direction(&w, &g) else {
            break;
        };
        let slope = dot(&g, &step);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = w.iter().zip(&step).map(|(a, s)| a + t * s).collect();
            let ft = problem.objective_unchecked(&trial);
            if ft <= f + 1e-4 * t * slope {
                accepted = Some((trial, ft));
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        match accepted {
            Some((trial, ft)) => {
                let stalled = ft >= f;
                w = trial;
                f = ft;
                if stalled {
                    break;
                }
            }
            None => break,
        }
    }
    let report = TrainReport {
        iterations,
        objective: f,
        initial_objective: initial,
        gradient_norm: gnorm,
        converged,
        n_pairs: problem.n_pairs(),
    };
    (w, report)
}

/// A fitted linear ranker: `R = wᵀ scale(φ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankModel {
    pub weights: Vec<f64>,
    pub c: f64,
    pub scaler: Scaler,
    pub schema: Vec<String>,
}

impl RankModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) {
            return Err(Error::validation("rank model C must be positive"));
        }
        check_dims(self.schema.len(), self.weights.len(), "rank model weights")?;
        check_dims(self.schema.len(), self.scaler.len(), "rank model scaler")?;
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::validation("rank model weights must be finite"));
        }
        Ok(())
    }

    pub fn score(&self, phi: &FeatureVector) -> Result<f64> {
        let x = self.scaler.apply(phi)?;
        check_dims(self.weights.len(), x.len(), "rank model input")?;
        Ok(dot(&self.weights, x.as_slice()))
    }
}

/// Raw (unscaled) features of every candidate POI, per training query.
pub type QueryFeatures = BTreeMap<Query, Vec<(PoiId, FeatureVector)>>;

/// Featurises every POI of the table against every labelled query.
pub fn featurize_queries(labels: &RankLabelSet, ctx: &FeatureContext<'_>) -> Result<QueryFeatures> {
    let ids: Vec<PoiId> = ctx.pois.ids().collect();
    labels
        .queries()
        .map(|q| {
            let rows = ctx.query_features_all(q)?;
            Ok((*q, ids.iter().copied().zip(rows).collect()))
        })
        .collect()
}

/// Fits the scaler on all training rows, forms every preference pair and
/// minimises the objective.
pub fn train(
    labels: &RankLabelSet,
    features: &QueryFeatures,
    schema: Vec<String>,
    c: f64,
) -> Result<(RankModel, TrainReport)> {
    let rows: Vec<FeatureVector> = features
        .values()
        .flat_map(|rows| rows.iter().map(|(_, x)| x.clone()))
        .collect();
    if rows.is_empty() {
        return Err(Error::NoPreferencePairs);
    }
    let scaler = Scaler::fit(&rows)?;
    check_dims(schema.len(), scaler.len(), "feature schema")?;

    let mut problem = PairwiseProblem::new(schema.len(), c)?;
    for (q, rows) in features {
        let scaled: Vec<(u32, FeatureVector)> = rows
            .iter()
            .map(|(p, x)| Ok((labels.label(q, *p), scaler.apply(x)?)))
            .collect::<Result<_>>()?;
        for (li, xi) in &scaled {
            for (lj, xj) in &scaled {
                if li > lj {
                    problem.push_pair(xi, xj)?;
                }
            }
        }
    }
    if problem.n_pairs() == 0 {
        return Err(Error::NoPreferencePairs);
    }
    let (weights, report) = minimize(&problem);
    log::debug!(
        "rank training: {} pairs, {} iterations, objective {:.6}, |g| {:.3e}",
        report.n_pairs,
        report.iterations,
        report.objective,
        report.gradient_norm
    );
    let model = RankModel {
        weights,
        c,
        scaler,
        schema,
    };
    Ok((model, report))
}

fn check_finite(scores: &[(PoiId, f64)]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::validation("no scores to normalise"));
    }
    if let Some((p, s)) = scores.iter().find(|(_, s)| !s.is_finite()) {
        return Err(Error::validation(format!("non-finite score {s} for POI {p}")));
    }
    Ok(())
}

/// `log softmax` of the scores, computed with max-subtraction.
pub fn log_rank_probabilities(scores: &[(PoiId, f64)]) -> Result<Vec<(PoiId, f64)>> {
    check_finite(scores)?;
    let max = scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let log_z = scores.iter().map(|s| (s.1 - max).exp()).sum::<f64>().ln();
    Ok(scores.iter().map(|&(p, s)| (p, s - max - log_z)).collect())
}

/// Softmax of the scores.
pub fn rank_probabilities(scores: &[(PoiId, f64)]) -> Result<Vec<(PoiId, f64)>> {
    check_finite(scores)?;
    let max = scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s.1 - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    Ok(scores
        .iter()
        .zip(exps)
        .map(|(&(p, _), e)| (p, e / z))
        .collect())
}
