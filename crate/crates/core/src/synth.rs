//! Seeded synthetic datasets sampled from random discrete networks, used by
//! tests, benchmarks and the `generate` subcommand.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::error::Result;
use crate::varset::VarSet;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthSpec {
    pub vars: usize,
    pub records: usize,
    /// Arities are drawn uniformly from `2..=max_arity`.
    pub max_arity: u32,
    /// In-degree cap of the generating network.
    pub max_in_degree: usize,
    /// Probability that an allowed edge is present.
    pub edge_prob: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(vars: usize, records: usize, seed: u64) -> Self {
        SynthSpec {
            vars,
            records,
            max_arity: 2,
            max_in_degree: 3,
            edge_prob: 0.4,
            seed,
        }
    }
}

/// Generating structure plus the sampled data.
pub struct Synthetic {
    pub parents: Vec<VarSet>,
    pub data: Dataset,
}

pub fn sample(spec: &SynthSpec) -> Result<Synthetic> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.vars;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let arities: Vec<usize> = (0..n)
        .map(|_| rng.gen_range(2..=spec.max_arity.max(2)) as usize)
        .collect();

    let mut parents = vec![VarSet::EMPTY; n];
    for (pos, &x) in order.iter().enumerate() {
        let mut earlier = order[..pos].to_vec();
        earlier.shuffle(&mut rng);
        for &p in &earlier {
            if parents[x].len() >= spec.max_in_degree {
                break;
            }
            if rng.gen_bool(spec.edge_prob) {
                parents[x] = parents[x].with(p);
            }
        }
    }

    // one skewed categorical distribution per parent configuration
    let cpts: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|x| {
            let configs: usize = parents[x].iter().map(|p| arities[p]).product();
            (0..configs)
                .map(|_| {
                    let w: Vec<f64> = (0..arities[x])
                        .map(|_| rng.gen::<f64>().powi(3) + 0.02)
                        .collect();
                    let total: f64 = w.iter().sum();
                    w.into_iter().map(|v| v / total).collect()
                })
                .collect()
        })
        .collect();

    let mut columns = vec![Vec::with_capacity(spec.records); n];
    let mut row = vec![0usize; n];
    for _ in 0..spec.records {
        for &x in &order {
            let config = parents[x]
                .iter()
                .fold(0usize, |acc, p| acc * arities[p] + row[p]);
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let probs = &cpts[x][config];
            row[x] = probs.len() - 1;
            for (v, &p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    row[x] = v;
                    break;
                }
            }
        }
        for x in 0..n {
            columns[x].push(row[x] as u32);
        }
    }
    // states that were never drawn do not count towards the arity
    let mut observed = Vec::with_capacity(n);
    for col in &mut columns {
        let mut states: Vec<u32> = col.clone();
        states.sort_unstable();
        states.dedup();
        for v in col.iter_mut() {
            *v = states.binary_search(v).unwrap() as u32;
        }
        observed.push(states.len());
    }
    let names = (1..=n).map(|i| format!("X{i}")).collect();
    let data = Dataset::from_columns(names, observed, columns)?;
    Ok(Synthetic { parents, data })
}

/// Renders a dataset as comma-separated text with a header row.
pub fn to_csv(d: &Dataset) -> String {
    let mut out = d.names().join(",");
    out.push('\n');
    for r in 0..d.num_records() {
        let row: Vec<String> = (0..d.num_vars())
            .map(|c| d.column(c)[r].to_string())
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
