//! Training pipeline tying features, ranking and transitions together.

use serde::{Deserialize, Serialize};

use crate::data::{PoiTable, Query, Trajectory};
use crate::error::{Error, Result};
use crate::features::{compute_stats, kmeans, ClusterAssignment, FeatureContext, PoiStatistics, NEIGHBOURHOODS};
use crate::ranking::{self, build_labels, featurize_queries, RankModel, TrainReport, DEFAULT_C};
use crate::rng::substream;
use crate::route::{Algorithm, EdgeScoreTable};
use crate::transition::{self, TransitionDiscretizers, TransitionModel, DEFAULT_EPSILON};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub c: f64,
    pub epsilon: f64,
    pub clusters: usize,
    pub seed: u64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            c: DEFAULT_C,
            epsilon: DEFAULT_EPSILON,
            clusters: NEIGHBOURHOODS,
            seed: 0,
        }
    }
}

/// Which learned components to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Needs {
    pub rank: bool,
    pub transition: bool,
}

impl Needs {
    pub const ALL: Needs = Needs {
        rank: true,
        transition: true,
    };

    pub fn of(algorithms: &[Algorithm]) -> Self {
        Needs {
            rank: algorithms.iter().any(|a| a.needs_rank()),
            transition: algorithms.iter().any(|a| a.needs_transition()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModels {
    pub params: ModelParams,
    pub pois: PoiTable,
    pub stats: PoiStatistics,
    pub clusters: ClusterAssignment,
    pub discretizers: TransitionDiscretizers,
    pub rank: Option<RankModel>,
    pub rank_report: Option<TrainReport>,
    pub transition: Option<TransitionModel>,
}

/// Neighbourhood clustering for a POI table. Depends only on the POIs.
pub fn cluster_pois(pois: &PoiTable, params: &ModelParams) -> Result<ClusterAssignment> {
    kmeans(
        pois,
        params.clusters.min(pois.len()),
        substream(params.seed, "kmeans", &[]),
    )
}

pub fn fit(
    pois: &PoiTable,
    trajectories: &[Trajectory],
    params: &ModelParams,
    needs: Needs,
) -> Result<TrainedModels> {
    let clusters = cluster_pois(pois, params)?;
    fit_with_clusters(pois, trajectories, params, needs, clusters)
}

/// [`fit`] with a precomputed clustering, so repeated training on subsets of
/// one dataset can skip k-means.
pub fn fit_with_clusters(
    pois: &PoiTable,
    trajectories: &[Trajectory],
    params: &ModelParams,
    needs: Needs,
    clusters: ClusterAssignment,
) -> Result<TrainedModels> {
    if !(params.c > 0.0 && params.c.is_finite()) {
        return Err(Error::validation(format!("C must be positive, got {}", params.c)));
    }
    if !(params.epsilon > 0.0 && params.epsilon.is_finite()) {
        return Err(Error::validation(format!(
            "epsilon must be positive, got {}",
            params.epsilon
        )));
    }
    if clusters.assignment.len() != pois.len() {
        return Err(Error::validation("cluster assignment does not cover the POI table"));
    }
    let stats = compute_stats(trajectories);
    let discretizers = TransitionDiscretizers::fit(pois, &stats)?;

    let (rank, rank_report) = if needs.rank {
        let ctx = FeatureContext {
            pois,
            stats: &stats,
            clusters: &clusters,
        };
        let labels = build_labels(trajectories);
        let features = featurize_queries(&labels, &ctx)?;
        let (model, report) = ranking::train(&labels, &features, ctx.schema(), params.c)?;
        (Some(model), Some(report))
    } else {
        (None, None)
    };

    let transition = if needs.transition {
        Some(transition::build(
            trajectories,
            pois,
            &stats,
            &clusters,
            &discretizers,
            params.epsilon,
        )?)
    } else {
        None
    };

    Ok(TrainedModels {
        params: *params,
        pois: pois.clone(),
        stats,
        clusters,
        discretizers,
        rank,
        rank_report,
        transition,
    })
}

impl TrainedModels {
    pub fn feature_context(&self) -> FeatureContext<'_> {
        FeatureContext {
            pois: &self.pois,
            stats: &self.stats,
            clusters: &self.clusters,
        }
    }

    /// Raw ranking scores of every POI for `q`, in table order.
    pub fn rank_scores(&self, q: &Query) -> Result<Vec<f64>> {
        let rank = self
            .rank
            .as_ref()
            .ok_or_else(|| Error::validation("no rank model was trained"))?;
        self.feature_context()
            .query_features_all(q)?
            .iter()
            .map(|phi| rank.score(phi))
            .collect()
    }

    /// `log P_R(p | q)` of every POI, in table order.
    pub fn node_log_probs(&self, q: &Query) -> Result<Vec<f64>> {
        let scores: Vec<_> = self.pois.ids().zip(self.rank_scores(q)?).collect();
        Ok(ranking::log_rank_probabilities(&scores)?
            .into_iter()
            .map(|(_, lp)| lp)
            .collect())
    }

    /// Combined step scores for `q`. Without a rank model only `α = 0` is
    /// meaningful and the node term is zero.
    pub fn score_table(&self, q: &Query, alpha: f64) -> Result<EdgeScoreTable> {
        let transition = self
            .transition
            .as_ref()
            .ok_or_else(|| Error::validation("no transition model was trained"))?;
        let node = match (&self.rank, alpha > 0.0) {
            (Some(_), _) => self.node_log_probs(q)?,
            (None, false) => vec![0.0; self.pois.len()],
            (None, true) => {
                return Err(Error::validation("alpha > 0 needs a rank model"));
            }
        };
        EdgeScoreTable::new(self.pois.ids().collect(), node, transition.log_matrix(), alpha)
    }

    /// Structural checks for models loaded from outside.
    pub fn validate(&self) -> Result<()> {
        let n = self.pois.len();
        if self.clusters.assignment.len() != n || self.clusters.assignment.iter().any(|&c| c >= self.clusters.k) {
            return Err(Error::validation("cluster assignment does not match the POI table"));
        }
        if let Some(rank) = &self.rank {
            rank.validate()?;
            if rank.schema != self.feature_context().schema() {
                return Err(Error::validation("rank model schema differs from the POI table"));
            }
        }
        if let Some(t) = &self.transition {
            t.validate(&self.pois)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_dataset, SynthConfig};
    use crate::route::{recommend, RouteConfig};

    #[test]
    fn fits_and_recommends_with_every_algorithm() {
        let (pois, trajs) = synth_dataset(&SynthConfig {
            seed: 3,
            n_pois: 12,
            n_traj: 60,
            max_len: 5,
        })
        .unwrap();
        let models = fit(&pois, &trajs, &ModelParams::default(), Needs::ALL).unwrap();
        models.validate().unwrap();
        let ids: Vec<_> = pois.ids().collect();
        let q = Query::new(ids[0], ids[5], 4, &pois).unwrap();
        for a in Algorithm::ALL {
            let r = recommend(&models, &q, &RouteConfig::new(a)).unwrap();
            assert_eq!(r.sequence.len(), 4, "{a}");
            assert_eq!(r.sequence[0], q.start);
            assert_eq!(r.sequence[3], q.end);
        }
    }

    #[test]
    fn missing_components_are_reported() {
        let (pois, trajs) = synth_dataset(&SynthConfig {
            seed: 1,
            n_pois: 8,
            n_traj: 30,
            max_len: 4,
        })
        .unwrap();
        let needs = Needs::of(&[Algorithm::Markov]);
        let models = fit(&pois, &trajs, &ModelParams::default(), needs).unwrap();
        assert!(models.rank.is_none());
        let ids: Vec<_> = pois.ids().collect();
        let q = Query::new(ids[0], ids[1], 3, &pois).unwrap();
        assert!(recommend(&models, &q, &RouteConfig::new(Algorithm::Markov)).is_ok());
        assert!(recommend(&models, &q, &RouteConfig::new(Algorithm::PoiRank)).is_err());
    }

    #[test]
    fn fitting_is_deterministic() {
        let (pois, trajs) = synth_dataset(&SynthConfig {
            seed: 9,
            n_pois: 10,
            n_traj: 40,
            max_len: 5,
        })
        .unwrap();
        let a = fit(&pois, &trajs, &ModelParams::default(), Needs::ALL).unwrap();
        let b = fit(&pois, &trajs, &ModelParams::default(), Needs::ALL).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}
