//! MDL local scores: the direct counting formula, the AD-tree sweep that
//! produces every admissible score in one depth-first pass, and the
//! per-(variable, layer) score cache files in the order the parent graphs
//! consume them.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, IoContext, Result};
use crate::storage::{
    get_f64, get_u64, merge_runs, put_f64, put_u64, Record, RecordReader, SortedRun, SpillFile,
    WorkDir, DEFAULT_FAN_IN,
};
use crate::varset::VarSet;

/// Default cap on resident accumulators before the sweep spills runs.
pub const DEFAULT_SCORE_BUDGET: usize = 1 << 24;

/// Parent-count bound for MDL: `floor(log2(2N / log2 N))`.
pub fn max_parents(records: usize) -> Result<usize> {
    if records < 2 {
        return Err(Error::InvalidArgument(format!(
            "parent bound needs at least 2 records, got {records}"
        )));
    }
    let n = records as f64;
    let bound = (2.0 * n / n.log2()).log2().floor();
    Ok((bound as usize).max(1))
}

/// `(log2 N / 2) * (r_X - 1) * prod r_U`.
pub fn penalty(var: usize, parents: VarSet, d: &Dataset) -> f64 {
    let k = parents
        .iter()
        .fold((d.arity(var) - 1) as f64, |k, p| k * d.arity(p) as f64);
    (d.num_records() as f64).log2() / 2.0 * k
}

#[inline]
fn n_log_n(c: usize) -> f64 {
    if c <= 1 {
        0.0
    } else {
        let c = c as f64;
        c * c.log2()
    }
}

/// `MDL(X | U)` computed straight from joint counts.
pub fn mdl_score_direct(var: usize, parents: VarSet, d: &Dataset) -> f64 {
    debug_assert!(!parents.contains(var));
    let rx = d.arity(var);
    let cols: Vec<(&[u32], usize)> = parents.iter().map(|p| (d.column(p), d.arity(p))).collect();
    let xs = d.column(var);

    let configs = cols
        .iter()
        .try_fold(1usize, |acc, &(_, r)| acc.checked_mul(r))
        .filter(|&c| c.saturating_mul(rx) <= 1 << 20);

    let mut joint: Vec<usize>;
    let mut sparse: HashMap<(u128, u32), usize>;
    let mut marginal_sparse: HashMap<u128, usize>;
    let entropy = match configs {
        Some(q) => {
            joint = vec![0; q * rx];
            for row in 0..d.num_records() {
                let mut idx = 0usize;
                for &(col, r) in &cols {
                    idx = idx * r + col[row] as usize;
                }
                joint[idx * rx + xs[row] as usize] += 1;
            }
            joint
                .chunks(rx)
                .map(|cell| {
                    let nu: usize = cell.iter().sum();
                    n_log_n(nu) - cell.iter().map(|&c| n_log_n(c)).sum::<f64>()
                })
                .sum::<f64>()
        }
        None => {
            sparse = HashMap::new();
            marginal_sparse = HashMap::new();
            for row in 0..d.num_records() {
                let mut idx = 0u128;
                for &(col, r) in &cols {
                    idx = idx.wrapping_mul(r as u128).wrapping_add(col[row] as u128);
                }
                *sparse.entry((idx, xs[row])).or_default() += 1;
                *marginal_sparse.entry(idx).or_default() += 1;
            }
            marginal_sparse.values().map(|&c| n_log_n(c)).sum::<f64>()
                - sparse.values().map(|&c| n_log_n(c)).sum::<f64>()
        }
    };
    entropy + penalty(var, parents, d)
}

/// One cached local score.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreRecord {
    pub var: usize,
    pub parents: VarSet,
    pub score: f64,
}

/// Sort key of a score inside its `(X, l)` file: the canonical predecessor
/// `U \ {max U}` (as a mask, i.e. colex order) and then `max U`.
#[inline]
pub fn need_key(set: VarSet) -> (u64, u32) {
    match set.max() {
        None => (0, 0),
        Some(m) => (set.without(m).bits(), m as u32 + 1),
    }
}

/// On-disk score entry: 8-byte parent mask, 8-byte score.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CachedScore {
    pub parents: VarSet,
    pub score: f64,
}

impl Record for CachedScore {
    const WIDTH: usize = 16;
    type Key = (u64, u32);

    fn key(&self) -> (u64, u32) {
        need_key(self.parents)
    }

    fn encode(&self, buf: &mut [u8]) {
        put_u64(buf, 0, self.parents.bits());
        put_f64(buf, 8, self.score);
    }

    fn decode(buf: &[u8]) -> Self {
        CachedScore {
            parents: VarSet::from_bits(get_u64(buf, 0)),
            score: get_f64(buf, 8),
        }
    }
}

/// Partial entropy sum spilled by the sweep: variable, parent mask, value.
#[derive(Clone, Copy, Debug, PartialEq)]
struct PartialSum {
    var: u8,
    parents: u64,
    value: f64,
}

impl Record for PartialSum {
    const WIDTH: usize = 17;
    type Key = (u8, u32, (u64, u32));

    fn key(&self) -> Self::Key {
        let set = VarSet::from_bits(self.parents);
        (self.var, set.len() as u32, need_key(set))
    }

    fn encode(&self, buf: &mut [u8]) {
        buf[0] = self.var;
        put_u64(buf, 1, self.parents);
        put_f64(buf, 9, self.value);
    }

    fn decode(buf: &[u8]) -> Self {
        PartialSum {
            var: buf[0],
            parents: get_u64(buf, 1),
            value: get_f64(buf, 9),
        }
    }
}

/// `lb[X] = BestMDL(X, V \ {X})`.
#[derive(Clone, Debug, PartialEq)]
pub struct LowerBoundTable(pub Vec<f64>);

impl LowerBoundTable {
    pub fn get(&self, var: usize) -> f64 {
        self.0[var]
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreCacheMeta {
    pub records: usize,
    pub n: usize,
    pub max_parents: usize,
    pub log_base: u32,
}

/// Handle on the score files below `<workdir>/scores`.
#[derive(Clone, Debug)]
pub struct ScoreCache {
    dir: WorkDir,
    meta: ScoreCacheMeta,
}

impl ScoreCache {
    pub fn open(dir: &WorkDir) -> Result<Self> {
        let path = dir.scores_dir().join("meta.json");
        let text = fs::read_to_string(&path).at(&path)?;
        let meta = serde_json::from_str(&text)
            .map_err(|e| Error::corrupt(&path, e.to_string()))?;
        Ok(ScoreCache {
            dir: dir.clone(),
            meta,
        })
    }

    pub fn meta(&self) -> &ScoreCacheMeta {
        &self.meta
    }

    pub fn num_vars(&self) -> usize {
        self.meta.n
    }

    /// Largest cached parent-set size.
    pub fn depth(&self) -> usize {
        self.meta.max_parents.min(self.meta.n.saturating_sub(1))
    }

    pub fn file(&self, var: usize, layer: usize) -> PathBuf {
        self.dir.scores_file(var, layer)
    }

    /// Sequential reader over `(var, layer)`, `None` past the cached depth.
    pub fn reader(&self, var: usize, layer: usize) -> Result<Option<RecordReader<CachedScore>>> {
        if layer > self.depth() {
            return Ok(None);
        }
        Ok(Some(RecordReader::open(self.file(var, layer))?.sorted(true)))
    }

    /// Every record for every variable.
    pub fn records(&self) -> Result<Vec<ScoreRecord>> {
        let mut out = Vec::new();
        for var in 0..self.meta.n {
            for layer in 0..=self.depth() {
                for r in RecordReader::<CachedScore>::open(self.file(var, layer))? {
                    let r = r?;
                    out.push(ScoreRecord {
                        var,
                        parents: r.parents,
                        score: r.score,
                    });
                }
            }
        }
        Ok(out)
    }

    /// Loads the whole cache into a lookup table.
    pub fn load(&self) -> Result<ScoreTable> {
        let mut table = ScoreTable::new(self.meta.n, self.depth());
        for r in self.records()? {
            table.insert(r.var, r.parents, r.score);
        }
        Ok(table)
    }

    /// Deletes `(var, layer)` once its parent-graph layer is built.
    pub fn discard(&self, var: usize, layer: usize) -> Result<()> {
        crate::storage::remove_if_exists(&self.file(var, layer))
    }
}

/// In-memory `(X, U) -> MDL(X|U)` lookup.
#[derive(Clone, Debug, Default)]
pub struct ScoreTable {
    n: usize,
    depth: usize,
    map: FxHashMap<(usize, VarSet), f64>,
}

impl ScoreTable {
    pub fn new(n: usize, depth: usize) -> Self {
        ScoreTable {
            n,
            depth,
            map: FxHashMap::default(),
        }
    }

    pub fn insert(&mut self, var: usize, parents: VarSet, score: f64) {
        self.map.insert((var, parents), score);
    }

    pub fn get(&self, var: usize, parents: VarSet) -> Option<f64> {
        self.map.get(&(var, parents)).copied()
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// `lb[X]` = minimum cached score of `X`, read back from disk.
pub fn best_scores(cache: &ScoreCache) -> Result<LowerBoundTable> {
    let mut lb = vec![f64::INFINITY; cache.num_vars()];
    for r in cache.records()? {
        lb[r.var] = lb[r.var].min(r.score);
    }
    if let Some(var) = lb.iter().position(|v| v.is_infinite()) {
        return Err(Error::corrupt(
            cache.file(var, 0),
            format!("no scores cached for X{var}"),
        ));
    }
    Ok(LowerBoundTable(lb))
}

/// Writes one variable's scores as per-layer files sorted by [`need_key`].
pub fn sort_scores_by_need(
    dir: &WorkDir,
    var: usize,
    mut records: Vec<CachedScore>,
    depth: usize,
) -> Result<()> {
    records.sort_unstable_by_key(|r| (r.parents.len(), r.key()));
    let mut rest = records.as_slice();
    for layer in 0..=depth {
        let split = rest.partition_point(|r| r.parents.len() == layer);
        crate::storage::write_records(&dir.scores_file(var, layer), &rest[..split])?;
        rest = &rest[split..];
    }
    if !rest.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "X{var} has scores deeper than layer {depth}"
        )));
    }
    Ok(())
}

struct Sweep<'a> {
    d: &'a Dataset,
    n: usize,
    max_parents: usize,
    depth: usize,
    acc: FxHashMap<(u8, u64), f64>,
    budget: usize,
    runs: Vec<SortedRun>,
    spill: SpillFile<PartialSum>,
}

impl Sweep<'_> {
    fn add(&mut self, var: usize, set: VarSet, value: f64) -> Result<()> {
        *self.acc.entry((var as u8, set.bits())).or_insert(0.0) += value;
        if self.acc.len() >= self.budget {
            self.spill()?;
        }
        Ok(())
    }

    fn spill(&mut self) -> Result<()> {
        let mut table: FxHashMap<_, PartialSum> = self
            .acc
            .drain()
            .map(|((var, parents), value)| {
                let r = PartialSum {
                    var,
                    parents,
                    value,
                };
                (r.key(), r)
            })
            .collect();
        let run = self.spill.spill(&mut table)?;
        self.runs.push(run);
        Ok(())
    }

    /// An AD-node for instantiated set `set` with `count` consistent records.
    fn update(&mut self, set: VarSet, count: usize) -> Result<()> {
        let t = n_log_n(count);
        if set.len() <= self.max_parents {
            for x in VarSet::full(self.n).difference(set).iter() {
                self.add(x, set, t)?;
            }
        }
        for x in set.iter() {
            self.add(x, set.without(x), -t)?;
        }
        Ok(())
    }

    fn expand_ad(&mut self, from: usize, set: VarSet, rows: &[u32]) -> Result<()> {
        for j in from..self.n {
            self.expand_vary(j, set, rows)?;
        }
        Ok(())
    }

    fn expand_vary(&mut self, var: usize, set: VarSet, rows: &[u32]) -> Result<()> {
        let col = self.d.column(var);
        let arity = self.d.arity(var);
        let mut starts = vec![0usize; arity + 1];
        for &r in rows {
            starts[col[r as usize] as usize + 1] += 1;
        }
        for v in 0..arity {
            starts[v + 1] += starts[v];
        }
        let mut fill = starts.clone();
        let mut parts = vec![0u32; rows.len()];
        for &r in rows {
            let v = col[r as usize] as usize;
            parts[fill[v]] = r;
            fill[v] += 1;
        }
        let child = set.with(var);
        for v in 0..arity {
            let bucket = &parts[starts[v]..starts[v + 1]];
            if bucket.is_empty() {
                continue;
            }
            self.update(child, bucket.len())?;
            if child.len() <= self.depth {
                self.expand_ad(var + 1, child, bucket)?;
            }
        }
        Ok(())
    }
}

/// Runs the AD-tree sweep and writes the score cache into `dir`.
///
/// `budget` bounds the number of resident accumulators; past it, partial
/// sums are spilled as sorted runs and summed during the final merge.
pub fn compute_scores(
    d: &Dataset,
    dir: &WorkDir,
    budget: usize,
) -> Result<(ScoreCache, LowerBoundTable)> {
    let result = compute_scores_inner(d, dir, budget);
    if result.is_err() {
        let scores = dir.scores_dir();
        let _ = fs::remove_dir_all(&scores);
        let _ = fs::create_dir_all(&scores);
    }
    result
}

fn compute_scores_inner(
    d: &Dataset,
    dir: &WorkDir,
    budget: usize,
) -> Result<(ScoreCache, LowerBoundTable)> {
    let n = d.num_vars();
    let records = d.num_records();
    let max_parents = max_parents(records.max(2))?;
    let depth = max_parents.min(n - 1);
    let tmp = dir.tmp_dir();
    fs::create_dir_all(&tmp).at(&tmp)?;

    let mut sweep = Sweep {
        d,
        n,
        max_parents,
        depth,
        acc: FxHashMap::default(),
        budget: budget.max(2 * n),
        runs: Vec::new(),
        spill: SpillFile::new(&tmp),
    };
    // parent-marginal term of the empty parent set
    for x in 0..n {
        sweep.add(x, VarSet::EMPTY, n_log_n(records))?;
    }
    let all: Vec<u32> = (0..records as u32).collect();
    sweep.expand_ad(0, VarSet::EMPTY, &all)?;

    let mut lb = vec![f64::INFINITY; n];
    let finalize = |var: usize, parents: VarSet, entropy: f64, lb: &mut Vec<f64>| {
        let score = entropy + penalty(var, parents, d);
        lb[var] = lb[var].min(score);
        CachedScore { parents, score }
    };

    if sweep.runs.is_empty() {
        let mut per_var: Vec<Vec<CachedScore>> = vec![Vec::new(); n];
        for ((var, parents), entropy) in sweep.acc.drain() {
            let var = var as usize;
            let rec = finalize(var, VarSet::from_bits(parents), entropy, &mut lb);
            per_var[var].push(rec);
        }
        for (var, recs) in per_var.into_iter().enumerate() {
            check_count(var, n, depth, recs.len())?;
            sort_scores_by_need(dir, var, recs, depth)?;
        }
    } else {
        if !sweep.acc.is_empty() {
            sweep.spill()?;
        }
        let merged = tmp.join("scores.merged");
        let runs = std::mem::take(&mut sweep.runs);
        merge_runs(
            runs,
            &mut |a: PartialSum, b: PartialSum| PartialSum {
                value: a.value + b.value,
                ..a
            },
            &merged,
            &tmp,
            DEFAULT_FAN_IN,
        )?;
        split_merged(&merged, dir, n, depth, |var, parents, entropy| {
            finalize(var, parents, entropy, &mut lb)
        })?;
        fs::remove_file(&merged).at(&merged)?;
    }

    let meta = ScoreCacheMeta {
        records,
        n,
        max_parents,
        log_base: 2,
    };
    let meta_path = dir.scores_dir().join("meta.json");
    let text = serde_json::to_string_pretty(&meta).expect("meta serializes");
    fs::write(&meta_path, text).at(&meta_path)?;
    Ok((
        ScoreCache {
            dir: dir.clone(),
            meta,
        },
        LowerBoundTable(lb),
    ))
}

fn split_merged(
    merged: &Path,
    dir: &WorkDir,
    n: usize,
    depth: usize,
    mut finalize: impl FnMut(usize, VarSet, f64) -> CachedScore,
) -> Result<()> {
    use crate::storage::RecordWriter;
    let mut current: Option<(usize, usize, RecordWriter<CachedScore>)> = None;
    let mut counts = vec![0usize; n];
    let open = |var: usize, layer: usize| RecordWriter::create(dir.scores_file(var, layer));
    for r in RecordReader::<PartialSum>::open(merged)?.sorted(true) {
        let r = r?;
        let var = r.var as usize;
        let parents = VarSet::from_bits(r.parents);
        let layer = parents.len();
        if layer > depth || var >= n {
            return Err(Error::corrupt(merged, "score outside the cached range"));
        }
        let fresh = !matches!(&current, Some((v, l, _)) if *v == var && *l == layer);
        if fresh {
            if let Some((_, _, w)) = current.take() {
                w.finish()?;
            }
            current = Some((var, layer, open(var, layer)?));
        }
        counts[var] += 1;
        let rec = finalize(var, parents, r.value);
        current.as_mut().unwrap().2.push(&rec)?;
    }
    if let Some((_, _, w)) = current {
        w.finish()?;
    }
    for (var, &c) in counts.iter().enumerate() {
        check_count(var, n, depth, c)?;
    }
    Ok(())
}

fn check_count(var: usize, n: usize, depth: usize, got: usize) -> Result<()> {
    let want: u64 = (0..=depth).map(|k| crate::varset::binomial(n - 1, k)).sum();
    if got as u64 != want {
        return Err(Error::InvalidArgument(format!(
            "sweep produced {got} scores for X{var}, expected {want}"
        )));
    }
    Ok(())
}
