mod common;

use bnsl::bounds::{greedy_upper_bound, network_score, GreedyConfig};
use bnsl::dataset::{preprocess, RawTable};
use bnsl::oracle::{dp_optimal, DEFAULT_DP_CAP};
use bnsl::scorer::{compute_scores, max_parents, mdl_score_direct, DEFAULT_SCORE_BUDGET};
use bnsl::storage::WorkDir;
use bnsl::varset::binomial;
use bnsl::{Dataset, LearnConfig, VarSet};
use common::{close, network_text, run};
use proptest::prelude::*;
use tempfile::tempdir;

/// Rows of `n` columns with values below the given arities.
fn rows(max_vars: usize, max_records: usize) -> impl Strategy<Value = Vec<Vec<u32>>> {
    (2..=max_vars, 2..=max_records).prop_flat_map(|(n, records)| {
        prop::collection::vec(prop::collection::vec(0u32..3, n), records)
    })
}

fn dataset(rows: &[Vec<u32>]) -> Dataset {
    Dataset::from_rows(rows).unwrap()
}

fn raw(rows: &[Vec<u32>]) -> RawTable {
    RawTable {
        headers: (1..=rows[0].len()).map(|i| format!("c{i}")).collect(),
        rows: rows
            .iter()
            .map(|r| r.iter().map(|v| v.to_string()).collect())
            .collect(),
        missing_token: "?".into(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn preprocess_is_idempotent_on_discrete_data(rows in rows(5, 30)) {
        let (once, _) = preprocess(&raw(&rows), 4).unwrap();
        let recoded: Vec<Vec<u32>> = (0..once.num_records())
            .map(|r| (0..once.num_vars()).map(|c| once.column(c)[r]).collect())
            .collect();
        let (twice, _) = preprocess(&raw(&recoded), 4).unwrap();
        prop_assert_eq!(once.arities(), twice.arities());
        for c in 0..once.num_vars() {
            prop_assert_eq!(once.column(c), twice.column(c));
        }
        let (again, _) = preprocess(&raw(&rows), 4).unwrap();
        prop_assert_eq!(once.arities(), again.arities());
    }

    #[test]
    fn row_order_does_not_change_scores(rows in rows(4, 40), shift in 1usize..39) {
        let d = dataset(&rows);
        let mut rotated = rows.clone();
        rotated.rotate_left(shift % rows.len());
        let p = dataset(&rotated);
        let n = d.num_vars();
        for x in 0..n {
            for bits in 0u64..1 << n {
                let u = VarSet::from_bits(bits);
                if !u.contains(x) {
                    prop_assert!(close(mdl_score_direct(x, u, &d), mdl_score_direct(x, u, &p)));
                }
            }
        }
    }

    #[test]
    fn cache_matches_direct_and_bounds_hold(rows in rows(6, 60), spill in any::<bool>()) {
        let d = dataset(&rows);
        let tmp = tempdir().unwrap();
        let dir = WorkDir::new(tmp.path());
        dir.prepare().unwrap();
        let budget = if spill { 8 } else { DEFAULT_SCORE_BUDGET };
        let (cache, lb) = compute_scores(&d, &dir, budget).unwrap();
        let mp = max_parents(d.num_records()).unwrap();
        for r in cache.records().unwrap() {
            prop_assert!(r.parents.len() <= mp);
            let direct = mdl_score_direct(r.var, r.parents, &d);
            prop_assert!((r.score - direct).abs() <= 1e-9 * direct.abs().max(1.0));
            prop_assert!(lb.get(r.var) <= r.score);
        }
    }

    #[test]
    fn greedy_is_a_sound_upper_bound(rows in rows(6, 60), seed in 0u64..4) {
        let d = dataset(&rows);
        let tmp = tempdir().unwrap();
        let dir = WorkDir::new(tmp.path());
        dir.prepare().unwrap();
        let (cache, _) = compute_scores(&d, &dir, DEFAULT_SCORE_BUDGET).unwrap();
        let net = greedy_upper_bound(&cache.load().unwrap(), &GreedyConfig { seed, ..Default::default() });
        prop_assert!(net.is_acyclic());
        prop_assert!(close(net.score, network_score(&net.parents, &d).unwrap()));
        let opt = dp_optimal(&d, DEFAULT_DP_CAP).unwrap().score;
        prop_assert!(net.score >= opt - 1e-9 * opt.abs().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn search_invariants(rows in rows(7, 80)) {
        let d = dataset(&rows);
        let n = d.num_vars();
        let tmp = tempdir().unwrap();
        let cfg = LearnConfig { parent_pruning: false, ..LearnConfig::new(tmp.path()) };
        let out = run(&d, &cfg);

        // goal identity and closure
        prop_assert!(out.network.is_acyclic());
        prop_assert!(close(out.score, network_score(&out.network.parents, &d).unwrap()));
        prop_assert!(close(out.score, dp_optimal(&d, DEFAULT_DP_CAP).unwrap().score));
        prop_assert!(out.stats.lb_total <= out.score + 1e-9 * out.score.abs());

        for l in &out.stats.layers {
            // generated = pruned + surviving + duplicates
            if l.layer > 0 {
                prop_assert_eq!(l.generated, l.pruned + l.surviving + l.duplicates);
            }
            prop_assert!(l.surviving <= binomial(n, l.layer));
            // parent nodes written into layer l for each variable
            if l.layer > 0 && l.layer < n {
                prop_assert!(l.parent_nodes <= n as u64 * binomial(n - 1, l.layer));
            }
            prop_assert_eq!(l.stale_files, 0);
        }

        // reproducibility
        let again = run(&d, &cfg);
        prop_assert_eq!(network_text(&out, &d), network_text(&again, &d));
    }

    #[test]
    fn column_permutation_is_invariant(rows in rows(6, 60), rot in 1usize..6) {
        let d = dataset(&rows);
        let n = d.num_vars();
        let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
        let p = d.permute_columns(&perm).unwrap();
        let a = run(&d, &LearnConfig { parent_pruning: false, ..LearnConfig::new(tempdir().unwrap().path()) });
        let b = run(&p, &LearnConfig { parent_pruning: false, ..LearnConfig::new(tempdir().unwrap().path()) });
        prop_assert!(close(a.score, b.score));
    }
}
