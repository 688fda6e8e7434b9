use std::time::Instant;

use super::{improves, EdgeScoreTable, RouteResult, SolverStats, ENUMERATION_LIMIT};
use crate::data::Query;
use crate::error::{Error, Result};

/// Best walk of exactly `q.length` POIs from start to end. Any POI, the
/// endpoints included, may appear at an intermediate position; only
/// self-steps are ruled out, by the forbidden diagonal.
pub fn viterbi(table: &EdgeScoreTable, q: &Query) -> Result<RouteResult> {
    let started = Instant::now();
    let (s, e) = table.endpoints(q)?;
    let n = table.n();
    let len = q.length;

    if len == 2 {
        let objective = table.score(s, e).ok_or(Error::Infeasible)?;
        return Ok(RouteResult {
            sequence: table.to_ids(&[s, e]),
            objective,
            stats: SolverStats {
                nodes_expanded: 1,
                seconds: started.elapsed().as_secs_f64(),
            },
        });
    }

    // score[t][p] is the best total ending at p after position t + 2;
    // back[t][p] is the predecessor. Strict comparison keeps the smallest
    // predecessor index on ties.
    let mut score: Vec<Vec<Option<f64>>> = Vec::with_capacity(len - 1);
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(len - 1);
    score.push((0..n).map(|p| table.score(s, p)).collect());
    back.push(vec![s; n]);
    let mut expanded = n as u64;

    for t in 1..len - 1 {
        let prev = &score[t - 1];
        let mut cur = vec![None; n];
        let mut arg = vec![usize::MAX; n];
        for p in 0..n {
            let mut best: Option<f64> = None;
            for (pp, prev_score) in prev.iter().enumerate() {
                let (Some(a), Some(step)) = (*prev_score, table.score(pp, p)) else {
                    continue;
                };
                let v = a + step;
                if best.map_or(true, |b| v > b) {
                    best = Some(v);
                    arg[p] = pp;
                }
            }
            cur[p] = best;
            expanded += 1;
        }
        score.push(cur);
        back.push(arg);
    }

    let objective = score[len - 2][e].ok_or(Error::Infeasible)?;
    let mut seq = vec![e; len];
    seq[0] = s;
    for t in (1..len - 1).rev() {
        seq[t] = back[t][seq[t + 1]];
    }
    Ok(RouteResult {
        sequence: table.to_ids(&seq),
        objective,
        stats: SolverStats {
            nodes_expanded: expanded,
            seconds: started.elapsed().as_secs_f64(),
        },
    })
}

/// Exhaustive oracle for [`viterbi`]: enumerates every walk and keeps the best
/// under the same tie rule. Refuses when there are more than 10⁷ candidates.
pub fn brute_force_walk(table: &EdgeScoreTable, q: &Query) -> Result<RouteResult> {
    let started = Instant::now();
    let (s, e) = table.endpoints(q)?;
    let n = table.n();
    let free = q.length - 2;
    let count = (n as u128).checked_pow(free as u32).unwrap_or(u128::MAX);
    if count > ENUMERATION_LIMIT {
        return Err(Error::GuardExceeded {
            count,
            limit: ENUMERATION_LIMIT,
        });
    }

    let mut seq = vec![0usize; q.length];
    seq[0] = s;
    seq[q.length - 1] = e;
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut expanded = 0u64;
    loop {
        expanded += 1;
        if let Some(obj) = table.objective(&seq) {
            if improves(obj, &seq, &best) {
                best = Some((obj, seq.clone()));
            }
        }
        // odometer over the free positions
        let mut k = 1;
        while k < q.length - 1 {
            seq[k] += 1;
            if seq[k] < n {
                break;
            }
            seq[k] = 0;
            k += 1;
        }
        if k >= q.length - 1 {
            break;
        }
    }

    let (objective, seq) = best.ok_or(Error::Infeasible)?;
    Ok(RouteResult {
        sequence: table.to_ids(&seq),
        objective,
        stats: SolverStats {
            nodes_expanded: expanded,
            seconds: started.elapsed().as_secs_f64(),
        },
    })
}
