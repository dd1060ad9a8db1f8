//! Networks, their decomposable score, and the greedy beam search that
//! supplies the branch-and-bound upper bound.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashSet;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::scorer::{mdl_score_direct, ScoreTable};
use crate::varset::VarSet;

/// A DAG given by each variable's parent set, with its total score.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub parents: Vec<VarSet>,
    pub score: f64,
}

impl Network {
    pub fn empty(n: usize) -> Self {
        Network {
            parents: vec![VarSet::EMPTY; n],
            score: 0.0,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.parents.len()
    }

    pub fn num_edges(&self) -> usize {
        self.parents.iter().map(|p| p.len()).sum()
    }

    pub fn is_acyclic(&self) -> bool {
        topological_order(&self.parents).is_some()
    }
}

/// Kahn's algorithm over parent masks; `None` when a cycle exists.
pub fn topological_order(parents: &[VarSet]) -> Option<Vec<usize>> {
    let n = parents.len();
    let mut placed = VarSet::EMPTY;
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let before = order.len();
        for (x, p) in parents.iter().enumerate() {
            if !placed.contains(x) && p.is_subset_of(placed) {
                order.push(x);
            }
        }
        if order.len() == before {
            return None;
        }
        for &x in &order[before..] {
            placed = placed.with(x);
        }
    }
    Some(order)
}

/// `sum_X MDL(X | parents[X])` by direct counting.
pub fn network_score(parents: &[VarSet], d: &Dataset) -> Result<f64> {
    if parents.len() != d.num_vars() {
        return Err(Error::InvalidArgument(format!(
            "network has {} variables, dataset has {}",
            parents.len(),
            d.num_vars()
        )));
    }
    if parents.iter().enumerate().any(|(x, p)| p.contains(x) || !p.fits(d.num_vars())) {
        return Err(Error::InvalidArgument("parent set out of range".into()));
    }
    if topological_order(parents).is_none() {
        return Err(Error::Cyclic);
    }
    Ok(parents
        .iter()
        .enumerate()
        .map(|(x, &p)| mdl_score_direct(x, p, d))
        .sum())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GreedyConfig {
    pub beam: usize,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        GreedyConfig {
            beam: 5,
            max_iters: 1000,
            seed: 0,
        }
    }
}

/// Every variable `x` can reach through parent links.
fn ancestors(parents: &[VarSet], x: usize) -> VarSet {
    let mut seen = VarSet::EMPTY;
    let mut frontier = parents[x];
    while !frontier.is_empty() {
        seen = seen.union(frontier);
        let mut next = VarSet::EMPTY;
        for y in frontier.iter() {
            next = next.union(parents[y]);
        }
        frontier = next.difference(seen);
    }
    seen
}

#[derive(Clone)]
struct State {
    parents: Vec<VarSet>,
    local: Vec<f64>,
    score: f64,
}

impl State {
    fn with_moves(&self, changes: &[(usize, VarSet, f64)]) -> State {
        let mut s = self.clone();
        for &(x, p, v) in changes {
            s.score += v - s.local[x];
            s.parents[x] = p;
            s.local[x] = v;
        }
        s
    }

    /// Neighbours reachable by one edge addition, deletion or reversal that
    /// strictly lower the score.
    fn improving_moves(&self, scores: &ScoreTable) -> Vec<State> {
        let n = self.parents.len();
        let mut out = Vec::new();
        let mut push = |s: State| {
            if s.score < self.score {
                out.push(s);
            }
        };
        for child in 0..n {
            for par in (0..n).filter(|&p| p != child) {
                if self.parents[child].contains(par) {
                    let reduced = self.parents[child].without(par);
                    let Some(v) = scores.get(child, reduced) else {
                        continue;
                    };
                    push(self.with_moves(&[(child, reduced, v)]));

                    // reverse par -> child into child -> par
                    let grown = self.parents[par].with(child);
                    let Some(w) = scores.get(par, grown) else {
                        continue;
                    };
                    let mut tmp = self.parents.clone();
                    tmp[child] = reduced;
                    if !ancestors(&tmp, child).contains(par) {
                        push(self.with_moves(&[(child, reduced, v), (par, grown, w)]));
                    }
                } else if !self.parents[par].contains(child) {
                    let grown = self.parents[child].with(par);
                    let Some(v) = scores.get(child, grown) else {
                        continue;
                    };
                    if !ancestors(&self.parents, par).contains(child) {
                        push(self.with_moves(&[(child, grown, v)]));
                    }
                }
            }
        }
        out
    }
}

/// Beam local search from the empty graph. Moves are restricted to parent
/// sets present in `scores`; the result's score is the sum of its cached
/// local scores and therefore a valid upper bound on the optimum.
pub fn greedy_upper_bound(scores: &ScoreTable, cfg: &GreedyConfig) -> Network {
    let n = scores.num_vars();
    let local: Vec<f64> = (0..n)
        .map(|x| {
            scores
                .get(x, VarSet::EMPTY)
                .expect("empty parent set is always cached")
        })
        .collect();
    let start = State {
        parents: vec![VarSet::EMPTY; n],
        score: local.iter().sum(),
        local,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best = start.clone();
    let mut beam = vec![start];
    for _ in 0..cfg.max_iters {
        let mut candidates: Vec<(f64, u64, State)> = beam
            .iter()
            .flat_map(|s| s.improving_moves(scores))
            .map(|s| (s.score, rng.gen::<u64>(), s))
            .collect();
        if candidates.is_empty() {
            break;
        }
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut seen = FxHashSet::default();
        beam = candidates
            .into_iter()
            .filter(|(_, _, s)| seen.insert(s.parents.clone()))
            .take(cfg.beam.max(1))
            .map(|(_, _, s)| s)
            .collect();
        if beam[0].score < best.score {
            best = beam[0].clone();
        }
    }
    // re-add in a fixed order so the bound does not depend on move history
    let score = best.local.iter().sum();
    Network {
        parents: best.parents,
        score,
    }
}
