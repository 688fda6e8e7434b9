//! Recommendation metrics and leave-one-out evaluation.

use std::collections::{BTreeSet, HashMap};
use std::io::Write;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{PoiId, PoiTable, Query, Trajectory};
use crate::error::{Error, Result};
use crate::model::{cluster_pois, fit_with_clusters, ModelParams, Needs, TrainedModels};
use crate::rng::substream;
use crate::route::{recommend, Algorithm, RouteConfig, RouteResult, DEFAULT_TIME_BUDGET};

/// Point F1: the overlap counts distinct POIs, the denominators count
/// positions (so revisits in a recommendation cost precision).
pub fn f1_points(truth: &[PoiId], rec: &[PoiId]) -> Result<f64> {
    if truth.is_empty() || rec.is_empty() {
        return Err(Error::validation("F1 needs non-empty sequences"));
    }
    let t: BTreeSet<_> = truth.iter().collect();
    let r: BTreeSet<_> = rec.iter().collect();
    let common = t.intersection(&r).count() as f64;
    let p = common / rec.len() as f64;
    let rc = common / truth.len() as f64;
    Ok(if p + rc == 0.0 { 0.0 } else { 2.0 * p * rc / (p + rc) })
}

fn first_positions(seq: &[PoiId]) -> HashMap<PoiId, usize> {
    let mut pos = HashMap::new();
    for (i, &p) in seq.iter().enumerate() {
        pos.entry(p).or_insert(i);
    }
    pos
}

/// Number of unordered pairs of shared POIs visited in the same relative
/// order by both sequences (first visits decide the order).
pub fn agreeing_pairs(truth: &[PoiId], rec: &[PoiId]) -> usize {
    let pt = first_positions(truth);
    let pr = first_positions(rec);
    let common: Vec<PoiId> = pt
        .keys()
        .filter(|p| pr.contains_key(p))
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut n = 0;
    for (i, a) in common.iter().enumerate() {
        for b in &common[i + 1..] {
            if (pt[a] < pt[b]) == (pr[a] < pr[b]) {
                n += 1;
            }
        }
    }
    n
}

pub fn pairs_f1(truth: &[PoiId], rec: &[PoiId]) -> Result<f64> {
    if truth.len() < 2 || rec.len() < 2 {
        return Err(Error::validation("pairs-F1 needs sequences of length 2 or more"));
    }
    let nc = agreeing_pairs(truth, rec) as f64;
    if nc == 0.0 {
        return Ok(0.0);
    }
    let pairs = |n: usize| (n * (n - 1)) as f64 / 2.0;
    let p = nc / pairs(rec.len());
    let r = nc / pairs(truth.len());
    Ok(2.0 * p * r / (p + r))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalStatus {
    Ok,
    Infeasible,
    Timeout,
    /// Training or decoding failed for another reason.
    Error,
}

impl EvalStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalStatus::Ok => "ok",
            EvalStatus::Infeasible => "infeasible",
            EvalStatus::Timeout => "timeout",
            EvalStatus::Error => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub algorithm: Algorithm,
    pub query: Query,
    pub truth: Trajectory,
    pub recommendation: Option<RouteResult>,
    pub f1: Option<f64>,
    pub pairs_f1: Option<f64>,
    pub status: EvalStatus,
    pub alpha: f64,
    pub seconds: f64,
    pub message: Option<String>,
}

impl EvalRecord {
    fn failed(
        algorithm: Algorithm,
        query: Query,
        truth: &Trajectory,
        alpha: f64,
        err: Error,
        seconds: f64,
    ) -> Self {
        let message = err.to_string();
        let (status, recommendation) = match err {
            Error::Infeasible => (EvalStatus::Infeasible, None),
            Error::Timeout { incumbent } => (EvalStatus::Timeout, incumbent.map(|b| *b)),
            _ => (EvalStatus::Error, None),
        };
        EvalRecord {
            algorithm,
            query,
            truth: truth.clone(),
            recommendation,
            f1: None,
            pairs_f1: None,
            status,
            alpha,
            seconds,
            message: Some(message),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
}

impl MetricSummary {
    /// Mean and population standard deviation; zero for no values.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return MetricSummary::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        MetricSummary {
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub algorithm: Algorithm,
    /// Successfully evaluated instances.
    pub count: usize,
    pub failures: usize,
    pub f1: MetricSummary,
    #[serde(rename = "pairsF1")]
    pub pairs_f1: MetricSummary,
}

impl Summary {
    pub fn of(algorithm: Algorithm, records: &[EvalRecord]) -> Self {
        let ok: Vec<&EvalRecord> = records
            .iter()
            .filter(|r| r.algorithm == algorithm && r.status == EvalStatus::Ok)
            .collect();
        let total = records.iter().filter(|r| r.algorithm == algorithm).count();
        let f1: Vec<f64> = ok.iter().filter_map(|r| r.f1).collect();
        let pf: Vec<f64> = ok.iter().filter_map(|r| r.pairs_f1).collect();
        Summary {
            algorithm,
            count: ok.len(),
            failures: total - ok.len(),
            f1: MetricSummary::of(&f1),
            pairs_f1: MetricSummary::of(&pf),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub params: ModelParams,
    /// Trade-off for the Rank+ algorithms unless tuning supplies one.
    pub alpha: f64,
    pub seed: u64,
    pub time_budget: Duration,
    /// Worker threads; 1 runs everything on the calling thread.
    pub jobs: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            params: ModelParams::default(),
            alpha: 0.5,
            seed: 0,
            time_budget: DEFAULT_TIME_BUDGET,
            jobs: 1,
        }
    }
}

/// Trajectories that form an evaluation query: at least three visits,
/// distinct endpoints and no longer than the number of POIs.
pub fn eligible(trajectories: &[Trajectory], pois: &PoiTable) -> Vec<usize> {
    trajectories
        .iter()
        .enumerate()
        .filter(|(_, t)| t.len() >= 3 && t.start() != t.end() && t.len() <= pois.len())
        .map(|(i, _)| i)
        .collect()
}

/// Called with each held-out trajectory and the training set built for it.
pub type TrainingObserver<'a> = dyn Fn(&Trajectory, &[Trajectory]) + Sync + 'a;

fn evaluate_one(
    models: &Result<TrainedModels>,
    algorithm: Algorithm,
    truth: &Trajectory,
    alpha: f64,
    cfg: &EvalConfig,
) -> EvalRecord {
    let query = truth.query().expect("eligible trajectories have a query");
    let started = Instant::now();
    let models = match models {
        Ok(m) => m,
        Err(e) => {
            let err = Error::validation(format!("training failed: {e}"));
            return EvalRecord::failed(algorithm, query, truth, alpha, err, 0.0);
        }
    };
    let config = RouteConfig {
        algorithm,
        alpha,
        rng_seed: substream(cfg.seed, "loocv", &[truth.traj_id]),
        time_budget: cfg.time_budget,
    };
    let truth_seq = truth.pois();
    match recommend(models, &query, &config) {
        Ok(rec) => {
            let f1 = f1_points(&truth_seq, &rec.sequence);
            let pf = pairs_f1(&truth_seq, &rec.sequence);
            let (f1, pf) = match (f1, pf) {
                (Ok(a), Ok(b)) => (a, b),
                (Err(e), _) | (_, Err(e)) => {
                    let mut r = EvalRecord::failed(algorithm, query, truth, alpha, e, 0.0);
                    r.recommendation = Some(rec);
                    return r;
                }
            };
            EvalRecord {
                algorithm,
                query,
                truth: truth.clone(),
                recommendation: Some(rec),
                f1: Some(f1),
                pairs_f1: Some(pf),
                status: EvalStatus::Ok,
                alpha,
                seconds: started.elapsed().as_secs_f64(),
                message: None,
            }
        }
        Err(e) => EvalRecord::failed(
            algorithm,
            query,
            truth,
            alpha,
            e,
            started.elapsed().as_secs_f64(),
        ),
    }
}

fn run_pool<T: Send>(jobs: usize, work: impl FnOnce() -> T + Send) -> Result<T> {
    if jobs <= 1 {
        return Ok(work());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::validation(format!("cannot start {jobs} workers: {e}")))?;
    Ok(pool.install(work))
}

/// Leave-one-out over `held_out` (indices into `trajectories`). Each
/// held-out trajectory gets one model fit on every other trajectory, shared
/// by all `algorithms`. `alpha_of` picks the trade-off per held-out index.
/// Records come back ordered by trajectory, then algorithm.
pub fn loocv_core(
    pois: &PoiTable,
    trajectories: &[Trajectory],
    held_out: &[usize],
    algorithms: &[Algorithm],
    cfg: &EvalConfig,
    alpha_of: &(dyn Fn(usize) -> f64 + Sync),
    observer: Option<&TrainingObserver<'_>>,
) -> Result<Vec<EvalRecord>> {
    if algorithms.is_empty() {
        return Err(Error::validation("no algorithms to evaluate"));
    }
    let clusters = cluster_pois(pois, &cfg.params)?;
    let needs = Needs::of(algorithms);
    let one = |&i: &usize| -> Vec<EvalRecord> {
        let truth = &trajectories[i];
        let training: Vec<Trajectory> = trajectories
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, t)| t.clone())
            .collect();
        if let Some(obs) = observer {
            obs(truth, &training);
        }
        let models = fit_with_clusters(pois, &training, &cfg.params, needs, clusters.clone());
        algorithms
            .iter()
            .map(|&a| evaluate_one(&models, a, truth, alpha_of(i), cfg))
            .collect()
    };
    let nested: Vec<Vec<EvalRecord>> = if cfg.jobs <= 1 {
        held_out.iter().map(one).collect()
    } else {
        run_pool(cfg.jobs, || held_out.par_iter().map(one).collect())?
    };
    Ok(nested.into_iter().flatten().collect())
}

fn check_eligible(trajectories: &[Trajectory], pois: &PoiTable, min: usize) -> Result<Vec<usize>> {
    let idx = eligible(trajectories, pois);
    if idx.len() < min {
        return Err(Error::validation(format!(
            "need at least {min} trajectories with three or more visits, found {}",
            idx.len()
        )));
    }
    Ok(idx)
}

/// LOOCV of several algorithms at the fixed `cfg.alpha`.
pub fn loocv_many(
    pois: &PoiTable,
    trajectories: &[Trajectory],
    algorithms: &[Algorithm],
    cfg: &EvalConfig,
) -> Result<(Vec<EvalRecord>, Vec<Summary>)> {
    let idx = check_eligible(trajectories, pois, 2)?;
    let alpha = cfg.alpha;
    let records = loocv_core(pois, trajectories, &idx, algorithms, cfg, &|_| alpha, None)?;
    let summaries = algorithms.iter().map(|&a| Summary::of(a, &records)).collect();
    Ok((records, summaries))
}

pub fn loocv(
    pois: &PoiTable,
    trajectories: &[Trajectory],
    algorithm: Algorithm,
    cfg: &EvalConfig,
) -> Result<(Vec<EvalRecord>, Summary)> {
    let (records, mut summaries) = loocv_many(pois, trajectories, &[algorithm], cfg)?;
    Ok((records, summaries.remove(0)))
}

/// [`loocv`] that reports every training set to `observer` before fitting.
pub fn loocv_observed(
    pois: &PoiTable,
    trajectories: &[Trajectory],
    algorithm: Algorithm,
    cfg: &EvalConfig,
    observer: &TrainingObserver<'_>,
) -> Result<(Vec<EvalRecord>, Summary)> {
    let idx = check_eligible(trajectories, pois, 2)?;
    let alpha = cfg.alpha;
    let records = loocv_core(
        pois,
        trajectories,
        &idx,
        &[algorithm],
        cfg,
        &|_| alpha,
        Some(observer),
    )?;
    let summary = Summary::of(algorithm, &records);
    Ok((records, summary))
}

pub fn default_alpha_grid() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub alpha_fold1: f64,
    pub alpha_fold2: f64,
    /// `(α, mean pairs-F1)` over the grid, per fold.
    pub curve_fold1: Vec<(f64, f64)>,
    pub curve_fold2: Vec<(f64, f64)>,
    /// Indices into the trajectory list making up each fold.
    pub fold1: Vec<usize>,
    pub fold2: Vec<usize>,
}

/// Splits the eligible trajectories into two folds by alternating position
/// after sorting on (user, trajectory id).
pub fn split_folds(trajectories: &[Trajectory], pois: &PoiTable) -> (Vec<usize>, Vec<usize>) {
    let mut idx = eligible(trajectories, pois);
    idx.sort_by(|&a, &b| {
        let (ta, tb) = (&trajectories[a], &trajectories[b]);
        (&ta.user, ta.traj_id).cmp(&(&tb.user, tb.traj_id))
    });
    let (mut f1, mut f2) = (Vec::new(), Vec::new());
    for (k, i) in idx.into_iter().enumerate() {
        if k % 2 == 0 {
            f1.push(i);
        } else {
            f2.push(i);
        }
    }
    (f1, f2)
}

/// Mean Rank+Markov pairs-F1 for every grid value, by LOOCV inside one fold.
fn tune_fold(
    pois: &PoiTable,
    trajectories: &[Trajectory],
    fold: &[usize],
    grid: &[f64],
    cfg: &EvalConfig,
) -> Result<Vec<(f64, f64)>> {
    let members: Vec<Trajectory> = fold.iter().map(|&i| trajectories[i].clone()).collect();
    let held: Vec<usize> = (0..members.len()).collect();
    // one fit per held-out trajectory, reused across the grid
    let clusters = cluster_pois(pois, &cfg.params)?;
    let one = |&i: &usize| -> Vec<Option<f64>> {
        let training: Vec<Trajectory> = members
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, t)| t.clone())
            .collect();
        let models = fit_with_clusters(pois, &training, &cfg.params, Needs::ALL, clusters.clone());
        grid.iter()
            .map(|&alpha| {
                let r = evaluate_one(&models, Algorithm::RankMarkov, &members[i], alpha, cfg);
                r.pairs_f1
            })
            .collect()
    };
    let rows: Vec<Vec<Option<f64>>> = if cfg.jobs <= 1 {
        held.iter().map(one).collect()
    } else {
        run_pool(cfg.jobs, || held.par_iter().map(one).collect())?
    };
    Ok(grid
        .iter()
        .enumerate()
        .map(|(g, &alpha)| {
            let vals: Vec<f64> = rows.iter().filter_map(|r| r[g]).collect();
            (alpha, MetricSummary::of(&vals).mean)
        })
        .collect())
}

fn argmax(curve: &[(f64, f64)]) -> f64 {
    let mut best = curve[0];
    for &c in &curve[1..] {
        if c.1 > best.1 {
            best = c;
        }
    }
    best.0
}

pub fn tune_alpha(
    pois: &PoiTable,
    trajectories: &[Trajectory],
    grid: &[f64],
    cfg: &EvalConfig,
) -> Result<TuneResult> {
    if grid.is_empty() {
        return Err(Error::validation("alpha grid is empty"));
    }
    if let Some(a) = grid.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(Error::validation(format!("alpha grid value {a} is outside [0, 1]")));
    }
    check_eligible(trajectories, pois, 4)?;
    let (fold1, fold2) = split_folds(trajectories, pois);
    let curve_fold1 = tune_fold(pois, trajectories, &fold1, grid, cfg)?;
    let curve_fold2 = tune_fold(pois, trajectories, &fold2, grid, cfg)?;
    Ok(TuneResult {
        alpha_fold1: argmax(&curve_fold1),
        alpha_fold2: argmax(&curve_fold2),
        curve_fold1,
        curve_fold2,
        fold1,
        fold2,
    })
}

/// LOOCV where each held-out trajectory uses the α tuned on the fold it
/// does not belong to. Trajectories in neither fold are not evaluated.
pub fn loocv_tuned(
    pois: &PoiTable,
    trajectories: &[Trajectory],
    algorithms: &[Algorithm],
    tuned: &TuneResult,
    cfg: &EvalConfig,
) -> Result<(Vec<EvalRecord>, Vec<Summary>)> {
    let mut alpha = vec![cfg.alpha; trajectories.len()];
    for &i in &tuned.fold1 {
        alpha[i] = tuned.alpha_fold2;
    }
    for &i in &tuned.fold2 {
        alpha[i] = tuned.alpha_fold1;
    }
    let mut idx: Vec<usize> = tuned.fold1.iter().chain(&tuned.fold2).copied().collect();
    idx.sort_unstable();
    let records = loocv_core(pois, trajectories, &idx, algorithms, cfg, &|i| alpha[i], None)?;
    let summaries = algorithms.iter().map(|&a| Summary::of(a, &records)).collect();
    Ok((records, summaries))
}

pub const RESULTS_HEADER: [&str; 9] = [
    "algorithm", "user", "trajID", "L", "f1", "pairsF1", "status", "objective", "seconds",
];

pub fn write_results_csv<W: Write>(out: W, records: &[EvalRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::validation(format!("writing results: {e}"));
    w.write_record(RESULTS_HEADER).map_err(csv_err)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in records {
        w.write_record([
            r.algorithm.name().to_string(),
            r.truth.user.clone(),
            r.truth.traj_id.to_string(),
            r.query.length.to_string(),
            opt(r.f1),
            opt(r.pairs_f1),
            r.status.as_str().to_string(),
            opt(r.recommendation.as_ref().map(|x| x.objective)),
            r.seconds.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::validation(format!("writing results: {e}")))?;
    Ok(())
}
