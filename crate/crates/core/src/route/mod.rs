//! Route decoding.
//!
//! Every decoder works on an [`EdgeScoreTable`]: the combined score
//! `S(p; p', q) = α·log P_R(p | q) + (1 − α)·log P(p | p')` of stepping from
//! `p'` to `p`, indexed by the dense POI index of the table. Ties between
//! equally scored routes go to the route whose POIs, compared from the end
//! backwards, have the smaller ids.

mod path;
mod viterbi;

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{PoiId, Query};
use crate::error::{Error, Result};
use crate::model::TrainedModels;
use crate::rng::substream;
use crate::transition::{is_forbidden, FORBIDDEN};

pub use path::{brute_force_path, solve_path, solve_path_with_budget, DEFAULT_TIME_BUDGET};
pub use viterbi::{brute_force_walk, viterbi};

/// Upper limit on candidates the brute-force oracles agree to enumerate.
pub const ENUMERATION_LIMIT: u128 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    Random,
    PoiPopularity,
    PoiRank,
    Markov,
    MarkovPath,
    #[serde(rename = "Rank+Markov")]
    RankMarkov,
    #[serde(rename = "Rank+MarkovPath")]
    RankMarkovPath,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::Random,
        Algorithm::PoiPopularity,
        Algorithm::PoiRank,
        Algorithm::Markov,
        Algorithm::MarkovPath,
        Algorithm::RankMarkov,
        Algorithm::RankMarkovPath,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Random => "Random",
            Algorithm::PoiPopularity => "PoiPopularity",
            Algorithm::PoiRank => "PoiRank",
            Algorithm::Markov => "Markov",
            Algorithm::MarkovPath => "MarkovPath",
            Algorithm::RankMarkov => "Rank+Markov",
            Algorithm::RankMarkovPath => "Rank+MarkovPath",
        }
    }

    pub fn needs_rank(self) -> bool {
        matches!(
            self,
            Algorithm::PoiRank | Algorithm::RankMarkov | Algorithm::RankMarkovPath
        )
    }

    pub fn needs_transition(self) -> bool {
        matches!(
            self,
            Algorithm::Markov
                | Algorithm::MarkovPath
                | Algorithm::RankMarkov
                | Algorithm::RankMarkovPath
        )
    }

    pub fn names() -> String {
        Self::ALL.map(Algorithm::name).join(", ")
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::validation(format!(
                    "unknown algorithm {s:?}; expected one of: {}",
                    Self::names()
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouteConfig {
    pub algorithm: Algorithm,
    pub alpha: f64,
    pub rng_seed: u64,
    pub time_budget: Duration,
}

impl RouteConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        RouteConfig {
            algorithm,
            alpha: 0.5,
            rng_seed: 0,
            time_budget: DEFAULT_TIME_BUDGET,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::validation(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub nodes_expanded: u64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteResult {
    pub sequence: Vec<PoiId>,
    pub objective: f64,
    pub stats: SolverStats,
}

/// Combined per-step scores for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeScoreTable {
    ids: Vec<PoiId>,
    alpha: f64,
    node: Vec<f64>,
    combined: Vec<f64>,
}

impl EdgeScoreTable {
    /// `node[j]` is `log P_R(p_j | q)`; `edge[i * n + j]` is
    /// `log P(p_j | p_i)`, with forbidden entries at or below the sentinel.
    pub fn new(ids: Vec<PoiId>, node: Vec<f64>, edge: &[f64], alpha: f64) -> Result<Self> {
        let n = ids.len();
        if node.len() != n || edge.len() != n * n {
            return Err(Error::validation("score table dimensions disagree"));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::validation(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        check_sorted(&ids)?;
        let combined = (0..n * n)
            .map(|k| {
                let (i, j) = (k / n, k % n);
                if i == j || is_forbidden(edge[k]) || !node[j].is_finite() {
                    FORBIDDEN
                } else {
                    alpha * node[j] + (1.0 - alpha) * edge[k]
                }
            })
            .collect();
        Ok(EdgeScoreTable {
            ids,
            alpha,
            node,
            combined,
        })
    }

    /// Table from already-combined scores (row = from, column = to). The
    /// diagonal is forced to the sentinel.
    pub fn from_combined(ids: Vec<PoiId>, mut combined: Vec<f64>) -> Result<Self> {
        let n = ids.len();
        if combined.len() != n * n {
            return Err(Error::validation("score table dimensions disagree"));
        }
        check_sorted(&ids)?;
        for i in 0..n {
            combined[i * n + i] = FORBIDDEN;
        }
        for c in combined.iter_mut() {
            if c.is_nan() || is_forbidden(*c) {
                *c = FORBIDDEN;
            }
        }
        Ok(EdgeScoreTable {
            alpha: 0.0,
            node: vec![0.0; n],
            ids,
            combined,
        })
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> &[PoiId] {
        &self.ids
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn node_score(&self, j: usize) -> f64 {
        self.node[j]
    }

    /// Score of stepping from index `from` to index `to`, or `None` when the
    /// step is forbidden.
    pub fn score(&self, from: usize, to: usize) -> Option<f64> {
        let s = self.combined[from * self.n() + to];
        (!is_forbidden(s)).then_some(s)
    }

    pub fn index_of(&self, id: PoiId) -> Result<usize> {
        self.ids.binary_search(&id).map_err(|_| Error::UnknownPoi(id))
    }

    /// Sum of step scores along an index sequence, accumulated left to right,
    /// or `None` if any step is forbidden.
    pub fn objective(&self, seq: &[usize]) -> Option<f64> {
        let mut steps = seq.windows(2).map(|w| self.score(w[0], w[1]));
        let mut acc = steps.next()??;
        for s in steps {
            acc += s?;
        }
        Some(acc)
    }

    /// `Σ_{k ≥ 2} log P_R(p_k | q)` over an index sequence.
    pub fn node_term(&self, seq: &[usize]) -> f64 {
        seq.iter().skip(1).map(|&j| self.node[j]).sum()
    }

    fn endpoints(&self, q: &Query) -> Result<(usize, usize)> {
        if q.length < 2 {
            return Err(Error::validation(format!("query length {} is below 2", q.length)));
        }
        let s = self.index_of(q.start)?;
        let e = self.index_of(q.end)?;
        if s == e {
            return Err(Error::validation("query start and end must differ"));
        }
        Ok((s, e))
    }

    fn to_ids(&self, seq: &[usize]) -> Vec<PoiId> {
        seq.iter().map(|&i| self.ids[i]).collect()
    }
}

fn check_sorted(ids: &[PoiId]) -> Result<()> {
    if ids.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::validation("score table ids must be strictly increasing"));
    }
    Ok(())
}

/// `a` precedes `b` when compared element-wise from the last position.
pub(crate) fn rev_lex_less(a: &[usize], b: &[usize]) -> bool {
    a.iter().rev().lt(b.iter().rev())
}

/// Decides whether `(obj, seq)` should replace the current best.
pub(crate) fn improves(obj: f64, seq: &[usize], best: &Option<(f64, Vec<usize>)>) -> bool {
    match best {
        None => true,
        Some((b, bseq)) => obj > *b || (obj == *b && rev_lex_less(seq, bseq)),
    }
}

fn ranked_intermediates(
    q: &Query,
    ids: &[PoiId],
    scores: &[f64],
) -> (Vec<PoiId>, f64) {
    let mut cands: Vec<(PoiId, f64)> = ids
        .iter()
        .zip(scores)
        .filter(|(p, _)| **p != q.start && **p != q.end)
        .map(|(p, s)| (*p, *s))
        .collect();
    cands.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    cands.truncate(q.length - 2);
    let total = cands.iter().map(|c| c.1).sum();
    let mut seq = vec![q.start];
    seq.extend(cands.iter().map(|c| c.0));
    seq.push(q.end);
    (seq, total)
}

/// Recommends a route for `q` with the configured algorithm.
pub fn recommend(models: &TrainedModels, q: &Query, config: &RouteConfig) -> Result<RouteResult> {
    config.validate()?;
    let pois = &models.pois;
    let algorithm = config.algorithm;
    q.check(pois)?;
    if !algorithm.needs_transition() {
        q.check_path(pois)?;
    }
    if algorithm.needs_rank() && models.rank.is_none() {
        return Err(Error::validation(format!("{algorithm} needs a rank model")));
    }
    if algorithm.needs_transition() && models.transition.is_none() {
        return Err(Error::validation(format!("{algorithm} needs a transition model")));
    }
    let started = std::time::Instant::now();
    let ids: Vec<PoiId> = pois.ids().collect();

    let mut result = match algorithm {
        Algorithm::Random => {
            let seed = substream(
                config.rng_seed,
                "random",
                &[q.start.0 as u64, q.end.0 as u64, q.length as u64],
            );
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cands: Vec<PoiId> = ids
                .iter()
                .copied()
                .filter(|p| *p != q.start && *p != q.end)
                .collect();
            let picked = rand::seq::index::sample(&mut rng, cands.len(), q.length - 2);
            let mut seq = vec![q.start];
            seq.extend(picked.iter().map(|i| cands[i]));
            seq.push(q.end);
            RouteResult {
                sequence: seq,
                objective: 0.0,
                stats: SolverStats::default(),
            }
        }
        Algorithm::PoiPopularity => {
            let pop: Vec<f64> = ids
                .iter()
                .map(|&p| models.stats.get(p).popularity as f64)
                .collect();
            let (sequence, objective) = ranked_intermediates(q, &ids, &pop);
            RouteResult {
                sequence,
                objective,
                stats: SolverStats::default(),
            }
        }
        Algorithm::PoiRank => {
            let scores = models.rank_scores(q)?;
            let (sequence, objective) = ranked_intermediates(q, &ids, &scores);
            RouteResult {
                sequence,
                objective,
                stats: SolverStats::default(),
            }
        }
        Algorithm::Markov => viterbi(&models.score_table(q, 0.0)?, q)?,
        Algorithm::RankMarkov => viterbi(&models.score_table(q, config.alpha)?, q)?,
        Algorithm::MarkovPath => {
            solve_path_with_budget(&models.score_table(q, 0.0)?, q, config.time_budget)?
        }
        Algorithm::RankMarkovPath => solve_path_with_budget(
            &models.score_table(q, config.alpha)?,
            q,
            config.time_budget,
        )?,
    };
    result.stats.seconds = started.elapsed().as_secs_f64();
    Ok(result)
}
