//! Frontier breadth-first branch and bound over the order graph, the
//! layer-by-layer orchestration with the parent graphs, and solution
//! reconstruction from the per-layer recon files.

use std::fs::{self, File};
use std::io::{Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{debug, info};
use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{greedy_upper_bound, GreedyConfig, Network};
use crate::dataset::Dataset;
use crate::error::{Error, IoContext, Result};
use crate::parent_graph::{expand_parent_layer, init_parent_layer0, ParentEntry, PresenceMap};
use crate::scorer::{compute_scores, LowerBoundTable, DEFAULT_SCORE_BUDGET};
use crate::storage::{
    get_f64, get_u64, put_f64, put_u64, remove_if_exists, write_records, DedupTable, Record,
    RecordReader, RecordWriter, WorkDir,
};
use crate::varset::VarSet;

/// Relative slack on the pruning test, so a path whose cost equals the
/// upper bound up to summation rounding is never cut.
pub const PRUNE_SLACK: f64 = 1e-9;

/// Order-graph node: subset and its f-cost. On disk: 8-byte mask, 8-byte f.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrderEntry {
    pub set: VarSet,
    pub f: f64,
}

impl Record for OrderEntry {
    const WIDTH: usize = 16;
    type Key = u64;

    fn key(&self) -> u64 {
        self.set.bits()
    }

    fn encode(&self, buf: &mut [u8]) {
        put_u64(buf, 0, self.set.bits());
        put_f64(buf, 8, self.f);
    }

    fn decode(buf: &[u8]) -> Self {
        OrderEntry {
            set: VarSet::from_bits(get_u64(buf, 0)),
            f: get_f64(buf, 8),
        }
    }
}

/// Reconstruction breadcrumb. On disk: 8-byte mask, 1-byte leaf, 8-byte
/// leaf-parents mask.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReconRecord {
    pub set: VarSet,
    pub leaf: usize,
    pub leaf_parents: VarSet,
}

impl Record for ReconRecord {
    const WIDTH: usize = 17;
    type Key = u64;

    fn key(&self) -> u64 {
        self.set.bits()
    }

    fn encode(&self, buf: &mut [u8]) {
        put_u64(buf, 0, self.set.bits());
        buf[8] = self.leaf as u8;
        put_u64(buf, 9, self.leaf_parents.bits());
    }

    fn decode(buf: &[u8]) -> Self {
        ReconRecord {
            set: VarSet::from_bits(get_u64(buf, 0)),
            leaf: buf[8] as usize,
            leaf_parents: VarSet::from_bits(get_u64(buf, 9)),
        }
    }
}

/// A generated successor before duplicate elimination: order entry plus
/// recon payload.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Candidate {
    set: VarSet,
    f: f64,
    leaf: u8,
    leaf_parents: VarSet,
}

impl Record for Candidate {
    const WIDTH: usize = 25;
    type Key = u64;

    fn key(&self) -> u64 {
        self.set.bits()
    }

    fn encode(&self, buf: &mut [u8]) {
        put_u64(buf, 0, self.set.bits());
        put_f64(buf, 8, self.f);
        buf[16] = self.leaf;
        put_u64(buf, 17, self.leaf_parents.bits());
    }

    fn decode(buf: &[u8]) -> Self {
        Candidate {
            set: VarSet::from_bits(get_u64(buf, 0)),
            f: get_f64(buf, 8),
            leaf: buf[16],
            leaf_parents: VarSet::from_bits(get_u64(buf, 17)),
        }
    }
}

/// Lowest f wins; ties go to the smaller leaf, then the smaller parent mask.
fn better_candidate(a: Candidate, b: Candidate) -> Candidate {
    let ord = b
        .f
        .total_cmp(&a.f)
        .then(b.leaf.cmp(&a.leaf))
        .then(b.leaf_parents.bits().cmp(&a.leaf_parents.bits()));
    if ord.is_lt() {
        b
    } else {
        a
    }
}

/// `h(U) = sum over X outside U of lb[X]`.
pub fn heuristic(u: VarSet, lb: &LowerBoundTable) -> f64 {
    VarSet::full(lb.0.len())
        .difference(u)
        .iter()
        .map(|x| lb.get(x))
        .sum()
}

/// Counters for one generated order-graph layer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct LayerStats {
    pub layer: usize,
    pub generated: u64,
    pub pruned: u64,
    pub surviving: u64,
    pub duplicates: u64,
    /// Peak bytes under the work directory while this layer was current.
    pub disk_bytes: u64,
    /// Parent- or order-graph layer files with a smaller index that were
    /// still on disk once this layer was complete.
    pub stale_files: u64,
    /// Parent-graph nodes written for this layer, over all variables.
    pub parent_nodes: u64,
    pub spilled_runs: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SearchStats {
    pub layers: Vec<LayerStats>,
    pub upper: f64,
    pub lb_total: f64,
    pub consistency_checks: u64,
    pub score_seconds: f64,
    pub search_seconds: f64,
    pub wall_seconds: f64,
}

impl SearchStats {
    /// `layer,generated,pruned,surviving,disk_bytes`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,generated,pruned,surviving,disk_bytes\n");
        for l in &self.layers {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                l.layer, l.generated, l.pruned, l.surviving, l.disk_bytes
            ));
        }
        out
    }
}

/// Output of one order-layer expansion.
pub struct OrderLayer {
    pub present: PresenceMap,
    pub stats: LayerStats,
    pub consistency_checks: u64,
}

/// Expands order layer `l` into `l + 1`, joining each entry `U` with the
/// head of every parent-graph queue for `X ∉ U`.
///
/// Writes `order/layer{l+1}.bin` and `recon/layer{l+1}.bin` and deletes the
/// layer-`l` order file. When `parent_pruning` is off the parent layers are
/// complete and the join skips sets the order graph pruned; otherwise the
/// queues must match the order layer exactly.
#[allow(clippy::too_many_arguments)]
pub fn expand_order_layer(
    l: usize,
    n: usize,
    dir: &WorkDir,
    lb: &LowerBoundTable,
    upper: f64,
    max_size: usize,
    parent_pruning: bool,
) -> Result<OrderLayer> {
    let limit = upper + PRUNE_SLACK * upper.abs().max(1.0);
    let mut present = PresenceMap::new(n, l + 1);
    let mut stats = LayerStats {
        layer: l + 1,
        ..Default::default()
    };
    let mut checks = 0u64;

    let mut queues = (0..n)
        .map(|x| RecordReader::<ParentEntry>::open(dir.parents_file(x, l)).map(|r| r.sorted(true)))
        .collect::<Result<Vec<_>>>()?;
    let mut table = DedupTable::new(max_size, dir.tmp_dir(), better_candidate);

    let current = dir.order_file(l);
    for entry in RecordReader::<OrderEntry>::open(&current)?.sorted(true) {
        let OrderEntry { set: u, f } = entry?;
        if u.len() != l || !u.fits(n) {
            return Err(Error::corrupt(&current, format!("unexpected set {u:?}")));
        }
        for x in VarSet::full(n).difference(u).iter() {
            let queue = &mut queues[x];
            let head = loop {
                match queue.peek()?.copied() {
                    Some(h) if !parent_pruning && h.set.bits() < u.bits() => {
                        queue.next_record()?;
                    }
                    Some(h) if h.set == u => break h,
                    other => {
                        return Err(Error::corrupt(
                            queue.path().to_path_buf(),
                            format!(
                                "parent queue for X{x} desynchronized: head {:?}, expected {u:?}",
                                other.map(|h| h.set)
                            ),
                        ))
                    }
                }
            };
            queue.next_record()?;

            checks += 1;
            if head.best_score < lb.get(x) {
                return Err(Error::Inconsistent {
                    var: x,
                    set: u.bits(),
                    best: head.best_score,
                    lb: lb.get(x),
                });
            }
            stats.generated += 1;
            let s = f + head.best_score - lb.get(x);
            if s > limit {
                stats.pruned += 1;
                continue;
            }
            let succ = u.with(x);
            present.set(succ);
            table.insert(Candidate {
                set: succ,
                f: s,
                leaf: x as u8,
                leaf_parents: head.best_parents,
            })?;
        }
    }
    if parent_pruning {
        if let Some(q) = queues.iter_mut().find(|q| q.remaining() > 0) {
            return Err(Error::corrupt(
                q.path().to_path_buf(),
                "parent queue has entries the order graph never reached",
            ));
        }
    }
    drop(queues);

    let merged = dir.tmp_dir().join(format!("order{}.candidates", l + 1));
    let dstats = table.finish(&merged)?;
    stats.spilled_runs = dstats.runs;
    let mut order = RecordWriter::<OrderEntry>::create(dir.order_file(l + 1))?;
    let mut recon = RecordWriter::<ReconRecord>::create(dir.recon_file(l + 1))?;
    for c in RecordReader::<Candidate>::open(&merged)?.sorted(true) {
        let c = c?;
        order.push(&OrderEntry { set: c.set, f: c.f })?;
        recon.push(&ReconRecord {
            set: c.set,
            leaf: c.leaf as usize,
            leaf_parents: c.leaf_parents,
        })?;
    }
    stats.surviving = order.finish()?;
    recon.finish()?;
    fs::remove_file(&merged).at(&merged)?;
    remove_if_exists(&current)?;
    stats.duplicates = stats.generated - stats.pruned - stats.surviving;
    debug_assert_eq!(stats.surviving, present.count());
    Ok(OrderLayer {
        present,
        stats,
        consistency_checks: checks,
    })
}

/// Finds the recon record for `set` by binary search over its layer file.
fn find_recon(path: &Path, set: VarSet) -> Result<Option<ReconRecord>> {
    let mut file = File::open(path).at(path)?;
    let len = file.metadata().at(path)?.len();
    let width = ReconRecord::WIDTH as u64;
    if len % width != 0 {
        return Err(Error::corrupt(path, "recon file is not a whole number of records"));
    }
    let mut buf = [0u8; ReconRecord::WIDTH];
    let (mut lo, mut hi) = (0u64, len / width);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        file.seek(SeekFrom::Start(mid * width)).at(path)?;
        file.read_exact(&mut buf).at(path)?;
        let rec = ReconRecord::decode(&buf);
        match rec.set.bits().cmp(&set.bits()) {
            std::cmp::Ordering::Equal => return Ok(Some(rec)),
            std::cmp::Ordering::Less => lo = mid + 1,
            std::cmp::Ordering::Greater => hi = mid,
        }
    }
    Ok(None)
}

/// Walks back from the goal through the recon files.
pub fn reconstruct(dir: &WorkDir, n: usize) -> Result<Network> {
    let mut net = Network::empty(n);
    let mut u = VarSet::full(n);
    while !u.is_empty() {
        let path = dir.recon_file(u.len());
        let rec = find_recon(&path, u)?
            .ok_or_else(|| Error::corrupt(&path, format!("no recon record for {u:?}")))?;
        let rest = u.without(rec.leaf);
        if !u.contains(rec.leaf) || !rec.leaf_parents.is_subset_of(rest) {
            return Err(Error::corrupt(
                &path,
                format!("inconsistent recon record for {u:?}"),
            ));
        }
        net.parents[rec.leaf] = rec.leaf_parents;
        u = rest;
    }
    Ok(net)
}

/// Search settings.
#[derive(Clone, Debug)]
pub struct LearnConfig {
    pub workdir: PathBuf,
    /// In-RAM node budget for each duplicate-detection table.
    pub max_size: usize,
    /// Fixed upper bound; `None` runs the greedy search.
    pub upper: Option<f64>,
    /// Restrict parent graphs to sets that survived in the order graph.
    pub parent_pruning: bool,
    pub greedy: GreedyConfig,
    /// Resident accumulator budget for the scoring sweep.
    pub score_budget: usize,
    /// Run per-variable parent-layer expansions on the rayon pool.
    pub parallel: bool,
}

impl LearnConfig {
    pub fn new(workdir: impl Into<PathBuf>) -> Self {
        LearnConfig {
            workdir: workdir.into(),
            max_size: 1_000_000,
            upper: None,
            parent_pruning: true,
            greedy: GreedyConfig::default(),
            score_budget: DEFAULT_SCORE_BUDGET,
            parallel: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LearnOutcome {
    pub network: Network,
    pub score: f64,
    pub upper_network: Option<Network>,
    pub lower_bounds: LowerBoundTable,
    pub stats: SearchStats,
}

fn stale_files(dir: &WorkDir, n: usize, layer: usize) -> u64 {
    let mut count = 0;
    for l in 0..layer {
        count += u64::from(dir.order_file(l).exists());
        count += (0..n).filter(|&x| dir.parents_file(x, l).exists()).count() as u64;
    }
    count
}

/// Learns an optimal network. Recon files stay in `cfg.workdir/recon`;
/// every other intermediate file is removed.
pub fn learn(d: &Dataset, cfg: &LearnConfig) -> Result<LearnOutcome> {
    let started = Instant::now();
    let n = d.num_vars();
    if cfg.max_size == 0 {
        return Err(Error::InvalidArgument("max_size must be at least 1".into()));
    }
    let dir = WorkDir::new(&cfg.workdir);
    dir.prepare()?;

    let (cache, lb) = compute_scores(d, &dir, cfg.score_budget)?;
    let score_seconds = started.elapsed().as_secs_f64();
    info!(
        "scored {} variables to depth {} in {score_seconds:.2}s",
        n,
        cache.depth()
    );

    let (upper, upper_network) = match cfg.upper {
        Some(u) => (u, None),
        None => {
            let net = greedy_upper_bound(&cache.load()?, &cfg.greedy);
            (net.score, Some(net))
        }
    };
    info!("upper bound {upper}");

    let mut stats = SearchStats {
        upper,
        lb_total: lb.total(),
        score_seconds,
        ..Default::default()
    };

    write_records(
        &dir.order_file(0),
        [&OrderEntry {
            set: VarSet::EMPTY,
            f: heuristic(VarSet::EMPTY, &lb),
        }],
    )?;
    for x in 0..n {
        init_parent_layer0(x, &cache, &dir)?;
    }
    stats.layers.push(LayerStats {
        layer: 0,
        generated: 1,
        surviving: 1,
        parent_nodes: n as u64,
        disk_bytes: dir.disk_usage(),
        ..Default::default()
    });

    let search_started = Instant::now();
    for l in 0..n {
        let out = expand_order_layer(l, n, &dir, &lb, upper, cfg.max_size, cfg.parent_pruning)?;
        stats.consistency_checks += out.consistency_checks;
        let mut layer_stats = out.stats;
        if layer_stats.surviving == 0 {
            return Err(Error::Unreachable(upper));
        }
        layer_stats.stale_files = stale_files(&dir, n, l);
        let mut peak = dir.disk_usage();

        if l + 1 < n {
            let present = cfg.parent_pruning.then_some(&out.present);
            let expand = |x: usize| expand_parent_layer(x, l, &dir, &cache, present, cfg.max_size);
            let per_var: Vec<_> = if cfg.parallel {
                (0..n).into_par_iter().map(expand).collect()
            } else {
                (0..n).map(expand).collect()
            };
            for st in per_var {
                let st = st?;
                layer_stats.parent_nodes += st.written;
                layer_stats.spilled_runs += st.runs;
            }
            peak = peak.max(dir.disk_usage());
        } else {
            for x in 0..n {
                remove_if_exists(&dir.parents_file(x, l))?;
            }
        }
        layer_stats.disk_bytes = peak;
        debug!(
            "layer {}: generated {} pruned {} surviving {}",
            layer_stats.layer, layer_stats.generated, layer_stats.pruned, layer_stats.surviving
        );
        stats.layers.push(layer_stats);
    }

    let goal_path = dir.order_file(n);
    let goal = crate::storage::read_records::<OrderEntry>(&goal_path)?;
    let goal = match goal.as_slice() {
        [g] if g.set == VarSet::full(n) => *g,
        _ => return Err(Error::corrupt(&goal_path, "goal layer must hold only the full set")),
    };
    let mut network = reconstruct(&dir, n)?;
    network.score = goal.f;

    for sub in ["scores", "parents", "order", "tmp"] {
        let p = dir.root().join(sub);
        fs::remove_dir_all(&p).at(&p)?;
    }
    stats.search_seconds = search_started.elapsed().as_secs_f64();
    stats.wall_seconds = started.elapsed().as_secs_f64();
    Ok(LearnOutcome {
        network,
        score: goal.f,
        upper_network,
        lower_bounds: lb,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::network_score;
    use crate::scorer::mdl_score_direct;

    fn lb(v: &[f64]) -> LowerBoundTable {
        LowerBoundTable(v.to_vec())
    }

    #[test]
    fn heuristic_examples() {
        let t = lb(&[1.5, 2.0, 4.0]);
        assert_eq!(heuristic(VarSet::full(3), &t), 0.0);
        assert_eq!(heuristic(VarSet::EMPTY, &t), 7.5);
        let u = VarSet::singleton(2);
        assert_eq!(heuristic(u, &t) - heuristic(u.with(0), &t), 1.5);
    }

    #[test]
    fn recon_layout_is_seventeen_bytes() {
        let r = ReconRecord {
            set: VarSet::from_bits(0b1011),
            leaf: 3,
            leaf_parents: VarSet::from_bits(0b11),
        };
        let mut buf = [0u8; 17];
        r.encode(&mut buf);
        assert_eq!(&buf[..8], &0b1011u64.to_le_bytes());
        assert_eq!(buf[8], 3);
        assert_eq!(&buf[9..], &0b11u64.to_le_bytes());
        assert_eq!(ReconRecord::decode(&buf), r);
    }

    #[test]
    fn chain_reconstruction() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = WorkDir::new(tmp.path());
        dir.prepare().unwrap();
        write_records(
            &dir.recon_file(2),
            [&ReconRecord {
                set: VarSet::full(2),
                leaf: 1,
                leaf_parents: VarSet::singleton(0),
            }],
        )
        .unwrap();
        write_records(
            &dir.recon_file(1),
            [
                &ReconRecord {
                    set: VarSet::singleton(0),
                    leaf: 0,
                    leaf_parents: VarSet::EMPTY,
                },
                &ReconRecord {
                    set: VarSet::singleton(1),
                    leaf: 1,
                    leaf_parents: VarSet::EMPTY,
                },
            ],
        )
        .unwrap();
        let net = reconstruct(&dir, 2).unwrap();
        assert_eq!(net.parents, vec![VarSet::EMPTY, VarSet::singleton(0)]);
    }

    #[test]
    fn missing_recon_record_is_corruption() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = WorkDir::new(tmp.path());
        dir.prepare().unwrap();
        write_records(
            &dir.recon_file(2),
            [&ReconRecord {
                set: VarSet::full(2),
                leaf: 1,
                leaf_parents: VarSet::singleton(0),
            }],
        )
        .unwrap();
        write_records::<ReconRecord>(&dir.recon_file(1), []).unwrap();
        assert!(matches!(reconstruct(&dir, 2), Err(Error::Corrupt { .. })));
    }

    #[test]
    fn single_variable_learn() {
        let d = Dataset::from_columns(vec!["a".into()], vec![2], vec![vec![0, 1, 1, 1]]).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let out = learn(&d, &LearnConfig::new(tmp.path())).unwrap();
        assert_eq!(out.network.parents, vec![VarSet::EMPTY]);
        assert_eq!(out.score, mdl_score_direct(0, VarSet::EMPTY, &d));
    }

    #[test]
    fn two_variable_first_layer_costs() {
        let d = Dataset::from_rows(&[
            vec![0, 0],
            vec![1, 1],
            vec![1, 1],
            vec![0, 0],
            vec![1, 0],
            vec![0, 0],
        ])
        .unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let cfg = LearnConfig {
            upper: Some(f64::INFINITY),
            ..LearnConfig::new(tmp.path())
        };
        let out = learn(&d, &cfg).unwrap();
        let rescored = network_score(&out.network.parents, &d).unwrap();
        assert!((rescored - out.score).abs() <= 1e-9 * rescored);
        assert_eq!(out.stats.layers[1].surviving, 2);
        assert_eq!(out.stats.layers[2].surviving, 1);
        assert_eq!(out.stats.layers[2].duplicates, 1);
    }
}
