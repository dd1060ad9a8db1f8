#![allow(dead_code)]

use std::path::Path;

use bnsl::cli::format_network;
use bnsl::synth::{self, SynthSpec};
use bnsl::{learn, Dataset, LearnConfig, LearnOutcome};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Randomized instance: mostly sampled from a random network, sometimes
/// uniform noise, with n in 2..=12 and N in 20..=500.
pub fn instance(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let n = rng.gen_range(2..=12);
    let records = rng.gen_range(20..=500);
    instance_sized(seed, n, records)
}

pub fn instance_sized(seed: u64, n: usize, records: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if rng.gen_bool(0.2) {
        let rows: Vec<Vec<u32>> = (0..records)
            .map(|_| (0..n).map(|_| rng.gen_range(0..3)).collect())
            .collect();
        return Dataset::from_rows(&rows).unwrap();
    }
    let spec = SynthSpec {
        max_arity: rng.gen_range(2..=4),
        max_in_degree: rng.gen_range(1..=4),
        edge_prob: rng.gen_range(0.2..0.8),
        ..SynthSpec::new(n, records, seed)
    };
    synth::sample(&spec).unwrap().data
}

pub fn config(dir: &Path, parent_pruning: bool) -> LearnConfig {
    LearnConfig {
        parent_pruning,
        ..LearnConfig::new(dir)
    }
}

pub fn run(d: &Dataset, cfg: &LearnConfig) -> LearnOutcome {
    learn(d, cfg).unwrap_or_else(|e| panic!("learn failed: {e}"))
}

pub fn network_text(out: &LearnOutcome, d: &Dataset) -> String {
    format_network(&out.network, d.names())
}

/// In-memory model of presence-filtered search: parent-graph nodes exist
/// only for sets that survived in the order graph, and BestMDL propagates
/// only through those nodes. Returns the goal f, or `None` when every path
/// is pruned.
pub fn presence_filtered_model(d: &Dataset, upper: f64) -> Option<f64> {
    use bnsl::scorer::{compute_scores, DEFAULT_SCORE_BUDGET};
    use bnsl::storage::WorkDir;
    use bnsl::VarSet;
    use std::collections::HashMap;

    let tmp = tempfile::tempdir().unwrap();
    let dir = WorkDir::new(tmp.path());
    dir.prepare().unwrap();
    let (cache, lb) = compute_scores(d, &dir, DEFAULT_SCORE_BUDGET).unwrap();
    let table = cache.load().unwrap();
    let n = d.num_vars();
    let limit = upper + bnsl::order_graph::PRUNE_SLACK * upper.abs().max(1.0);

    let mut f: HashMap<VarSet, f64> = HashMap::from([(VarSet::EMPTY, lb.total())]);
    let mut best: Vec<HashMap<VarSet, f64>> = (0..n)
        .map(|x| HashMap::from([(VarSet::EMPTY, table.get(x, VarSet::EMPTY).unwrap())]))
        .collect();
    for _ in 0..n {
        let mut next: HashMap<VarSet, f64> = HashMap::new();
        for (&u, &fu) in &f {
            for x in (0..n).filter(|&x| !u.contains(x)) {
                let s = fu + best[x][&u] - lb.get(x);
                if s <= limit {
                    let e = next.entry(u.with(x)).or_insert(f64::INFINITY);
                    *e = e.min(s);
                }
            }
        }
        if next.is_empty() {
            return None;
        }
        for (x, bx) in best.iter_mut().enumerate() {
            let mut grown = HashMap::new();
            for &s in next.keys().filter(|s| !s.contains(x)) {
                let mut b = table.get(x, s).unwrap_or(f64::INFINITY);
                for y in s.iter() {
                    if let Some(&v) = bx.get(&s.without(y)) {
                        b = b.min(v);
                    }
                }
                grown.insert(s, b);
            }
            *bx = grown;
        }
        f = next;
    }
    f.get(&VarSet::full(n)).copied()
}
