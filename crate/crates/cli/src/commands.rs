use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Duration;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::json;

use tourkit::bundle::{dataset_fingerprint, ModelBundle};
use tourkit::data::{
    build_trajectories, load_photos, load_pois, load_trajectories, synth_dataset, write_pois,
    write_trajectories, PoiId, PoiTable, Query, SynthConfig, Trajectory,
};
use tourkit::eval::{
    default_alpha_grid, loocv_many, loocv_tuned, tune_alpha, write_results_csv, EvalConfig,
    EvalRecord, Summary,
};
use tourkit::model::{fit, ModelParams, Needs};
use tourkit::route::{recommend, Algorithm, RouteConfig};
use tourkit::transition::is_forbidden;

use crate::args::*;

struct Dataset {
    pois: PoiTable,
    trajectories: Vec<Trajectory>,
    photos: Option<usize>,
}

fn load_dataset(args: &DatasetArgs) -> Result<Dataset> {
    let pois = load_pois(&args.pois)?;
    if let Some(path) = &args.trajectories {
        let trajectories = load_trajectories(path, &pois)?;
        return Ok(Dataset {
            pois,
            trajectories,
            photos: None,
        });
    }
    let path = args.photos.as_ref().expect("clap requires one source");
    let photos = load_photos(path)?;
    let trajectories = build_trajectories(&photos, &pois, args.map_radius_m, args.time_gap_s)?;
    log::info!("{} photos became {} trajectories", photos.len(), trajectories.len());
    Ok(Dataset {
        pois,
        trajectories,
        photos: Some(photos.len()),
    })
}

fn params(m: &ModelArgs) -> ModelParams {
    ModelParams {
        c: m.c,
        epsilon: m.epsilon,
        seed: m.seed,
        ..ModelParams::default()
    }
}

fn emit(out: Option<&Path>, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

pub fn ingest(args: &IngestArgs) -> Result<()> {
    let d = load_dataset(&args.data)?;
    let users: BTreeSet<&str> = d.trajectories.iter().map(|t| t.user.as_str()).collect();
    let visits: usize = d.trajectories.iter().map(Trajectory::len).sum();
    let stats = json!({
        "pois": d.pois.len(),
        "categories": d.pois.categories().len(),
        "photos": d.photos,
        "visits": visits,
        "trajectories": d.trajectories.len(),
        "users": users.len(),
        "fingerprint": dataset_fingerprint(&d.pois, &d.trajectories)?,
    });
    if let Some(path) = &args.write_trajectories {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_trajectories(BufWriter::new(file), &d.trajectories)?;
    }
    emit(args.out.as_deref(), &stats)
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let d = load_dataset(&args.data)?;
    let p = params(&args.model);
    let models = fit(&d.pois, &d.trajectories, &p, Needs::ALL)?;
    if let Some(r) = &models.rank_report {
        eprintln!(
            "rank model: {} pairs, {} iterations, objective {:.6} (from {:.6}), gradient norm {:.2e}{}",
            r.n_pairs,
            r.iterations,
            r.objective,
            r.initial_objective,
            r.gradient_norm,
            if r.converged { "" } else { ", not converged" }
        );
    }
    eprintln!(
        "transition model: {} POIs, epsilon {}; C {}",
        d.pois.len(),
        p.epsilon,
        p.c
    );
    let bundle = ModelBundle {
        fingerprint: dataset_fingerprint(&d.pois, &d.trajectories)?,
        models,
    };
    bundle.save(&args.out)?;
    Ok(())
}

#[derive(Serialize)]
struct Step {
    from: PoiId,
    to: PoiId,
    #[serde(rename = "logTransition")]
    log_transition: Option<f64>,
    #[serde(rename = "logRank")]
    log_rank: Option<f64>,
}

pub fn recommend_route(args: &RecommendArgs) -> Result<()> {
    let expected = match (&args.pois, &args.trajectories) {
        (Some(p), Some(t)) => {
            let pois = load_pois(p)?;
            let trajs = load_trajectories(t, &pois)?;
            Some(dataset_fingerprint(&pois, &trajs)?)
        }
        _ => None,
    };
    let bundle = ModelBundle::load(&args.bundle, expected.as_deref(), args.force)?;
    let models = &bundle.models;
    let q = Query::new(PoiId(args.start), PoiId(args.end), args.length, &models.pois)?;
    let config = RouteConfig {
        algorithm: args.algorithm,
        alpha: args.alpha,
        rng_seed: args.seed,
        time_budget: Duration::from_secs(args.timeout_secs),
    };
    let route = recommend(models, &q, &config)?;

    let node = models.rank.as_ref().map(|_| models.node_log_probs(&q)).transpose()?;
    let steps: Vec<Step> = route
        .sequence
        .windows(2)
        .map(|w| {
            let log_transition = models
                .transition
                .as_ref()
                .and_then(|t| t.log_transition(w[0], w[1]).ok())
                .filter(|v| !is_forbidden(*v));
            let log_rank = node
                .as_ref()
                .and_then(|n| models.pois.index_of(w[1]).map(|j| n[j]));
            Step {
                from: w[0],
                to: w[1],
                log_transition,
                log_rank,
            }
        })
        .collect();
    let alpha = match args.algorithm {
        Algorithm::RankMarkov | Algorithm::RankMarkovPath => Some(args.alpha),
        Algorithm::Markov | Algorithm::MarkovPath => Some(0.0),
        _ => None,
    };
    emit(
        None,
        &json!({
            "algorithm": args.algorithm,
            "alpha": alpha,
            "query": q,
            "sequence": route.sequence,
            "steps": steps,
            "objective": route.objective,
            "stats": route.stats,
        }),
    )
}

pub fn parse_algorithms(list: &str) -> Result<Vec<Algorithm>> {
    if list.trim().eq_ignore_ascii_case("all") {
        return Ok(Algorithm::ALL.to_vec());
    }
    let mut out = Vec::new();
    for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let a: Algorithm = name.parse()?;
        if !out.contains(&a) {
            out.push(a);
        }
    }
    if out.is_empty() {
        return Err(tourkit::Error::Validation("no algorithms given".into()).into());
    }
    Ok(out)
}

fn summary_json(summaries: &[Summary], extra: serde_json::Value) -> serde_json::Value {
    json!({ "algorithms": summaries, "settings": extra })
}

fn write_reports(out: Option<&Path>, records: &[EvalRecord], summary: &serde_json::Value) -> Result<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let file = File::create(dir.join("results.csv"))?;
            write_results_csv(BufWriter::new(file), records)?;
            emit(Some(&dir.join("summary.json")), summary)
        }
        None => emit(None, summary),
    }
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let d = load_dataset(&args.data)?;
    let algorithms = parse_algorithms(&args.algorithms)?;
    let cfg = EvalConfig {
        params: params(&args.model),
        alpha: args.alpha,
        seed: args.model.seed,
        time_budget: Duration::from_secs(args.timeout_secs),
        jobs: args.jobs.max(1),
    };
    let (records, summaries, settings) = if args.tune {
        let tuned = tune_alpha(&d.pois, &d.trajectories, &default_alpha_grid(), &cfg)?;
        eprintln!("alpha: fold 1 {}, fold 2 {}", tuned.alpha_fold1, tuned.alpha_fold2);
        let (r, s) = loocv_tuned(&d.pois, &d.trajectories, &algorithms, &tuned, &cfg)?;
        let settings = json!({
            "alphaFold1": tuned.alpha_fold1,
            "alphaFold2": tuned.alpha_fold2,
            "seed": cfg.seed,
            "C": cfg.params.c,
            "epsilon": cfg.params.epsilon,
        });
        (r, s, settings)
    } else {
        let (r, s) = loocv_many(&d.pois, &d.trajectories, &algorithms, &cfg)?;
        let settings = json!({
            "alpha": cfg.alpha,
            "seed": cfg.seed,
            "C": cfg.params.c,
            "epsilon": cfg.params.epsilon,
        });
        (r, s, settings)
    };
    for s in &summaries {
        eprintln!(
            "{:<16} F1 {:.3} ± {:.3}  pairs-F1 {:.3} ± {:.3}  ({} ok, {} failed)",
            s.algorithm.name(),
            s.f1.mean,
            s.f1.std,
            s.pairs_f1.mean,
            s.pairs_f1.std,
            s.count,
            s.failures
        );
    }
    write_reports(args.out.as_deref(), &records, &summary_json(&summaries, settings))
}

fn parse_grid(list: &str) -> Result<Vec<f64>> {
    list.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| tourkit::Error::Validation(format!("bad grid value {s:?}: {e}")).into())
        })
        .collect()
}

pub fn tune(args: &TuneArgs) -> Result<()> {
    let d = load_dataset(&args.data)?;
    let grid = match &args.grid {
        Some(g) => parse_grid(g)?,
        None => default_alpha_grid(),
    };
    let cfg = EvalConfig {
        params: params(&args.model),
        seed: args.model.seed,
        time_budget: Duration::from_secs(args.timeout_secs),
        jobs: args.jobs.max(1),
        ..EvalConfig::default()
    };
    let t = tune_alpha(&d.pois, &d.trajectories, &grid, &cfg)?;
    let curve = |c: &[(f64, f64)]| -> Vec<serde_json::Value> {
        c.iter().map(|(a, v)| json!({"alpha": a, "pairsF1": v})).collect()
    };
    emit(
        args.out.as_deref(),
        &json!({
            "alphaFold1": t.alpha_fold1,
            "alphaFold2": t.alpha_fold2,
            "fold1Size": t.fold1.len(),
            "fold2Size": t.fold2.len(),
            "curveFold1": curve(&t.curve_fold1),
            "curveFold2": curve(&t.curve_fold2),
        }),
    )
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let (pois, trajectories) = synth_dataset(&SynthConfig {
        seed: args.seed,
        n_pois: args.n_pois,
        n_traj: args.n_trajectories,
        max_len: args.max_len,
    })?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let p = args.out.join("pois.csv");
    write_pois(BufWriter::new(File::create(&p)?), &pois)?;
    let t = args.out.join("trajectories.csv");
    write_trajectories(BufWriter::new(File::create(&t)?), &trajectories)?;
    eprintln!("wrote {} and {}", p.display(), t.display());
    Ok(())
}
