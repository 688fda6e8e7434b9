use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use super::{improves, EdgeScoreTable, RouteResult, SolverStats, ENUMERATION_LIMIT};
use crate::data::Query;
use crate::error::{Error, Result};

pub const DEFAULT_TIME_BUDGET: Duration = Duration::from_secs(120);

/// Best simple path (no POI twice) with exactly `q.length` POIs.
pub fn solve_path(table: &EdgeScoreTable, q: &Query) -> Result<RouteResult> {
    solve_path_with_budget(table, q, DEFAULT_TIME_BUDGET)
}

struct Partial {
    bound: f64,
    order: u64,
    score: f64,
    seq: Vec<usize>,
}

impl PartialEq for Partial {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Partial {}
impl PartialOrd for Partial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Partial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then_with(|| other.order.cmp(&self.order))
    }
}

struct Bounds {
    /// Best score of any allowed step into each POI.
    best_in: Vec<Option<f64>>,
    /// Intermediate candidates sorted by descending `best_in`.
    ranked: Vec<usize>,
}

impl Bounds {
    fn new(table: &EdgeScoreTable, s: usize, e: usize) -> Self {
        let n = table.n();
        let best_in: Vec<Option<f64>> = (0..n)
            .map(|j| {
                (0..n)
                    .filter_map(|i| table.score(i, j))
                    .max_by(f64::total_cmp)
            })
            .collect();
        let mut ranked: Vec<usize> = (0..n)
            .filter(|&j| j != s && j != e && best_in[j].is_some())
            .collect();
        ranked.sort_by(|&a, &b| {
            best_in[b]
                .unwrap()
                .total_cmp(&best_in[a].unwrap())
                .then(a.cmp(&b))
        });
        Bounds { best_in, ranked }
    }

    /// Optimistic value of the `remaining` steps still to take: the step
    /// into the end plus the best steps into `remaining − 1` unvisited POIs.
    fn tail(&self, e: usize, remaining: usize, visited: &[bool]) -> Option<f64> {
        let mut total = self.best_in[e]?;
        let mut need = remaining - 1;
        for &j in &self.ranked {
            if need == 0 {
                break;
            }
            if !visited[j] {
                total += self.best_in[j].unwrap();
                need -= 1;
            }
        }
        (need == 0).then_some(total)
    }
}

fn prune_below(incumbent: &Option<(f64, Vec<usize>)>) -> f64 {
    match incumbent {
        Some((v, _)) => v - 1e-9 * (1.0 + v.abs()),
        None => f64::NEG_INFINITY,
    }
}

/// Best-first branch and bound over partial simple paths. On running out of
/// time the best complete path found so far travels inside the error.
pub fn solve_path_with_budget(
    table: &EdgeScoreTable,
    q: &Query,
    budget: Duration,
) -> Result<RouteResult> {
    let started = Instant::now();
    let (s, e) = table.endpoints(q)?;
    let n = table.n();
    let len = q.length;
    if len > n {
        return Err(Error::validation(format!(
            "a simple path of length {len} needs at least {len} POIs, have {n}"
        )));
    }
    let bounds = Bounds::new(table, s, e);
    let steps = len - 1;

    let mut incumbent: Option<(f64, Vec<usize>)> = None;
    let mut heap = BinaryHeap::new();
    let mut order = 0u64;
    let mut expanded = 0u64;
    let mut visited = vec![false; n];
    visited[s] = true;
    if let Some(tail) = bounds.tail(e, steps, &visited) {
        heap.push(Partial {
            bound: tail,
            order,
            score: 0.0,
            seq: vec![s],
        });
    }

    let report = |incumbent: Option<(f64, Vec<usize>)>, expanded: u64| {
        incumbent.map(|(objective, seq)| RouteResult {
            sequence: table.to_ids(&seq),
            objective,
            stats: SolverStats {
                nodes_expanded: expanded,
                seconds: started.elapsed().as_secs_f64(),
            },
        })
    };

    while let Some(node) = heap.pop() {
        if node.bound < prune_below(&incumbent) {
            // best-first: nothing left can beat the incumbent
            break;
        }
        expanded += 1;
        if expanded % 256 == 0 && started.elapsed() > budget {
            return Err(Error::Timeout {
                incumbent: report(incumbent, expanded).map(Box::new),
            });
        }
        let last = *node.seq.last().unwrap();
        let taken = node.seq.len() - 1;

        if taken + 1 == steps {
            let Some(step) = table.score(last, e) else {
                continue;
            };
            let obj = if taken == 0 { step } else { node.score + step };
            let mut seq = node.seq;
            seq.push(e);
            if improves(obj, &seq, &incumbent) {
                incumbent = Some((obj, seq));
            }
            continue;
        }

        visited.iter_mut().for_each(|v| *v = false);
        for &p in &node.seq {
            visited[p] = true;
        }
        let remaining = steps - taken - 1;
        for j in 0..n {
            if visited[j] || j == e {
                continue;
            }
            let Some(step) = table.score(last, j) else {
                continue;
            };
            let score = if taken == 0 { step } else { node.score + step };
            visited[j] = true;
            let tail = bounds.tail(e, remaining, &visited);
            visited[j] = false;
            let Some(tail) = tail else {
                continue;
            };
            let bound = score + tail;
            if bound < prune_below(&incumbent) {
                continue;
            }
            let mut seq = Vec::with_capacity(len);
            seq.extend_from_slice(&node.seq);
            seq.push(j);
            order += 1;
            heap.push(Partial {
                bound,
                order,
                score,
                seq,
            });
        }
    }

    report(incumbent, expanded).ok_or(Error::Infeasible)
}

/// Number of simple paths with `len` POIs between two fixed endpoints among
/// `n` POIs: (n−2)! / (n−len)!.
fn simple_path_count(n: usize, len: usize) -> u128 {
    let mut count: u128 = 1;
    for k in 0..len.saturating_sub(2) {
        count = count.saturating_mul((n - 2 - k) as u128);
    }
    count
}

/// Exhaustive oracle for [`solve_path`]. Refuses when there are more than
/// 10⁷ simple paths to enumerate.
pub fn brute_force_path(table: &EdgeScoreTable, q: &Query) -> Result<RouteResult> {
    let started = Instant::now();
    let (s, e) = table.endpoints(q)?;
    let n = table.n();
    let len = q.length;
    if len > n {
        return Err(Error::validation(format!(
            "a simple path of length {len} needs at least {len} POIs, have {n}"
        )));
    }
    let count = simple_path_count(n, len);
    if count > ENUMERATION_LIMIT {
        return Err(Error::GuardExceeded {
            count,
            limit: ENUMERATION_LIMIT,
        });
    }

    struct Search<'a> {
        table: &'a EdgeScoreTable,
        e: usize,
        len: usize,
        seq: Vec<usize>,
        used: Vec<bool>,
        best: Option<(f64, Vec<usize>)>,
        visited: u64,
    }

    impl Search<'_> {
        fn go(&mut self, acc: Option<f64>) {
            self.visited += 1;
            let last = *self.seq.last().unwrap();
            let add = |acc: Option<f64>, step: f64| acc.map_or(step, |a| a + step);
            if self.seq.len() + 1 == self.len {
                if let Some(step) = self.table.score(last, self.e) {
                    let obj = add(acc, step);
                    self.seq.push(self.e);
                    if improves(obj, &self.seq, &self.best) {
                        self.best = Some((obj, self.seq.clone()));
                    }
                    self.seq.pop();
                }
                return;
            }
            for j in 0..self.table.n() {
                if self.used[j] || j == self.e {
                    continue;
                }
                if let Some(step) = self.table.score(last, j) {
                    self.used[j] = true;
                    self.seq.push(j);
                    self.go(Some(add(acc, step)));
                    self.seq.pop();
                    self.used[j] = false;
                }
            }
        }
    }

    let mut used = vec![false; n];
    used[s] = true;
    let mut search = Search {
        table,
        e,
        len,
        seq: vec![s],
        used,
        best: None,
        visited: 0,
    };
    search.go(None);
    let (objective, seq) = search.best.ok_or(Error::Infeasible)?;
    Ok(RouteResult {
        sequence: table.to_ids(&seq),
        objective,
        stats: SolverStats {
            nodes_expanded: search.visited,
            seconds: started.elapsed().as_secs_f64(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::PoiId;
    use crate::route::viterbi;
    use crate::transition::FORBIDDEN;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn ids(n: usize) -> Vec<PoiId> {
        (1..=n as u32).map(PoiId).collect()
    }

    fn q(s: u32, e: u32, l: usize) -> Query {
        Query {
            start: PoiId(s),
            end: PoiId(e),
            length: l,
        }
    }

    fn random_table(n: usize, seed: u64) -> EdgeScoreTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = (0..n * n)
            .map(|_| match seed % 3 {
                0 => -(rng.gen_range(0..3) as f64),
                1 if rng.gen_bool(0.3) => FORBIDDEN,
                _ => -rng.gen::<f64>() * 5.0,
            })
            .collect();
        EdgeScoreTable::from_combined(ids(n), m).unwrap()
    }

    #[test]
    fn matches_brute_force() {
        let mut compared = 0;
        for seed in 0..60 {
            let n = 4 + (seed as usize % 5);
            let t = random_table(n, seed);
            for l in 2..=n.min(6) {
                let query = q(2, n as u32, l);
                match (solve_path(&t, &query), brute_force_path(&t, &query)) {
                    (Ok(a), Ok(b)) => {
                        assert_eq!(a.objective, b.objective, "seed {seed} L {l}");
                        assert_eq!(a.sequence, b.sequence, "seed {seed} L {l}");
                        let distinct: BTreeSet<_> = a.sequence.iter().collect();
                        assert_eq!(distinct.len(), l);
                        compared += 1;
                    }
                    (Err(Error::Infeasible), Err(Error::Infeasible)) => {}
                    (a, b) => panic!("seed {seed} L {l}: {a:?} vs {b:?}"),
                }
            }
        }
        assert!(compared > 150, "{compared}");
    }

    #[test]
    fn avoids_the_revisiting_walk() {
        let n = 4;
        let mut m = vec![-10.0; n * n];
        m[1] = 0.0; // 1 -> 2
        m[4 + 2] = 0.0; // 2 -> 3
        m[2 * 4 + 1] = 0.0; // 3 -> 2
        m[4 + 3] = 0.0; // 2 -> 4
        let t = EdgeScoreTable::from_combined(ids(n), m).unwrap();
        let query = q(1, 4, 4);
        let walk = viterbi(&t, &q(1, 4, 5)).unwrap();
        assert_eq!(walk.sequence, [1, 2, 3, 2, 4].map(PoiId).to_vec());
        let path = solve_path(&t, &query).unwrap();
        assert_eq!(path.sequence, [1, 3, 2, 4].map(PoiId).to_vec());
        assert!(path.objective <= viterbi(&t, &query).unwrap().objective);
    }

    #[test]
    fn hamiltonian_fixture() {
        let n = 4;
        let mut m = vec![-5.0; n * n];
        m[2] = -0.1; // 1 -> 3
        m[2 * 4 + 1] = -0.1; // 3 -> 2
        m[4 + 3] = -0.1; // 2 -> 4
        let t = EdgeScoreTable::from_combined(ids(n), m).unwrap();
        let r = solve_path(&t, &q(1, 4, 4)).unwrap();
        assert_eq!(r.sequence, [1, 3, 2, 4].map(PoiId).to_vec());
        assert_eq!(r.objective, -0.1 + -0.1 + -0.1);
    }

    #[test]
    fn single_feasible_path() {
        let n = 5;
        let mut m = vec![FORBIDDEN; n * n];
        m[3] = -50.0; // 1 -> 4
        m[3 * 5 + 1] = -70.0; // 4 -> 2
        m[5 + 4] = -90.0; // 2 -> 5
        let t = EdgeScoreTable::from_combined(ids(n), m).unwrap();
        let r = solve_path(&t, &q(1, 5, 4)).unwrap();
        assert_eq!(r.sequence, [1, 4, 2, 5].map(PoiId).to_vec());
        assert_eq!(brute_force_path(&t, &q(1, 5, 4)).unwrap().sequence, r.sequence);
        assert!(matches!(solve_path(&t, &q(1, 5, 3)), Err(Error::Infeasible)));
    }

    #[test]
    fn isolated_end_is_infeasible() {
        let n = 5;
        let mut m = vec![-1.0; n * n];
        for i in 0..n {
            m[i * n + 4] = FORBIDDEN;
        }
        let t = EdgeScoreTable::from_combined(ids(n), m).unwrap();
        assert!(matches!(solve_path(&t, &q(1, 5, 3)), Err(Error::Infeasible)));
        assert!(matches!(brute_force_path(&t, &q(1, 5, 3)), Err(Error::Infeasible)));
    }

    #[test]
    fn length_two_and_too_long() {
        let t = random_table(5, 2);
        let r = solve_path(&t, &q(1, 5, 2)).unwrap();
        assert_eq!(r.sequence, vec![PoiId(1), PoiId(5)]);
        assert_eq!(r.objective, t.score(0, 4).unwrap());
        assert!(matches!(solve_path(&t, &q(1, 5, 6)), Err(Error::Validation(_))));
    }

    #[test]
    fn never_beats_viterbi() {
        for seed in 0..30 {
            let t = random_table(7, seed * 3 + 2);
            for l in 3..=6 {
                let query = q(1, 7, l);
                let p = solve_path(&t, &query).unwrap();
                let w = viterbi(&t, &query).unwrap();
                assert!(p.objective <= w.objective);
            }
        }
    }

    #[test]
    fn ties_match_oracle() {
        let n = 6;
        let t = EdgeScoreTable::from_combined(ids(n), vec![-1.0; n * n]).unwrap();
        let a = solve_path(&t, &q(3, 6, 5)).unwrap();
        let b = brute_force_path(&t, &q(3, 6, 5)).unwrap();
        assert_eq!(a.sequence, b.sequence);
        assert_eq!(a.sequence, [3, 4, 2, 1, 6].map(PoiId).to_vec());
    }

    #[test]
    fn zero_budget_times_out_with_incumbent() {
        let t = random_table(40, 5);
        match solve_path_with_budget(&t, &q(1, 40, 12), Duration::ZERO) {
            Err(Error::Timeout { incumbent }) => {
                if let Some(r) = incumbent {
                    assert_eq!(r.sequence.len(), 12);
                }
            }
            Ok(r) => assert_eq!(r.sequence.len(), 12),
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn guard_refuses_large_enumerations() {
        assert_eq!(simple_path_count(8, 6), 6 * 5 * 4 * 3);
        let t = random_table(20, 2);
        assert!(matches!(
            brute_force_path(&t, &q(1, 2, 10)),
            Err(Error::GuardExceeded { .. })
        ));
    }
}
