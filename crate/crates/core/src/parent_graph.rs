//! Layered parent graphs: for each variable, `BestMDL(X, U)` and an
//! attaining parent subset for every candidate set `U` of one size.

use std::path::Path;

use crate::error::{Error, Result};
use crate::scorer::{need_key, CachedScore, ScoreCache};
use crate::storage::{
    get_f64, get_u64, put_f64, put_u64, remove_if_exists, write_records, DedupTable, Record,
    RecordReader, WorkDir,
};
use crate::varset::{binomial, colex_rank, VarSet};

/// One parent-graph node: candidate set, best score, attaining subset.
/// On disk: 8-byte set mask, 8-byte score, 8-byte parents mask.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParentEntry {
    pub set: VarSet,
    pub best_score: f64,
    pub best_parents: VarSet,
}

impl Record for ParentEntry {
    const WIDTH: usize = 24;
    type Key = u64;

    fn key(&self) -> u64 {
        self.set.bits()
    }

    fn encode(&self, buf: &mut [u8]) {
        put_u64(buf, 0, self.set.bits());
        put_f64(buf, 8, self.best_score);
        put_u64(buf, 16, self.best_parents.bits());
    }

    fn decode(buf: &[u8]) -> Self {
        ParentEntry {
            set: VarSet::from_bits(get_u64(buf, 0)),
            best_score: get_f64(buf, 8),
            best_parents: VarSet::from_bits(get_u64(buf, 16)),
        }
    }
}

/// Lower score wins; on equal scores the smaller parents mask wins. A
/// subset always has a smaller mask, so an inherited set beats the full
/// candidate set on ties.
pub fn better_parent(a: ParentEntry, b: ParentEntry) -> ParentEntry {
    let ord = b
        .best_score
        .total_cmp(&a.best_score)
        .then(b.best_parents.bits().cmp(&a.best_parents.bits()));
    if ord.is_lt() {
        b
    } else {
        a
    }
}

/// Which sets of one order-graph layer survived pruning, indexed by colex
/// rank.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PresenceMap {
    layer: usize,
    words: Vec<u64>,
    count: u64,
}

impl PresenceMap {
    pub fn new(n: usize, layer: usize) -> Self {
        let size = binomial(n, layer);
        PresenceMap {
            layer,
            words: vec![0; size.div_ceil(64) as usize],
            count: 0,
        }
    }

    pub fn layer(&self) -> usize {
        self.layer
    }

    pub fn set(&mut self, s: VarSet) {
        debug_assert_eq!(s.len(), self.layer);
        let r = colex_rank(s).0;
        let w = &mut self.words[(r / 64) as usize];
        let bit = 1u64 << (r % 64);
        if *w & bit == 0 {
            *w |= bit;
            self.count += 1;
        }
    }

    pub fn get(&self, s: VarSet) -> bool {
        debug_assert_eq!(s.len(), self.layer);
        let r = colex_rank(s).0;
        self.words[(r / 64) as usize] >> (r % 64) & 1 == 1
    }

    /// Number of sets marked present.
    pub fn count(&self) -> u64 {
        self.count
    }
}

/// Counters from one parent-layer expansion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ParentLayerStats {
    pub entries_in: u64,
    pub generated: u64,
    pub written: u64,
    /// Score records in the `(X, l+1)` file.
    pub scores_total: u64,
    /// Score records turned into a full-set candidate.
    pub scores_used: u64,
    /// Score records passed over because their set was pruned.
    pub scores_skipped: u64,
    pub runs: u64,
}

/// Writes the single layer-0 node `({}, MDL(X|{}), {})`.
pub fn init_parent_layer0(var: usize, cache: &ScoreCache, dir: &WorkDir) -> Result<ParentEntry> {
    let path = cache.file(var, 0);
    let mut reader = RecordReader::<CachedScore>::open(&path)?;
    let rec = match (reader.next_record()?, reader.remaining()) {
        (Some(r), 0) if r.parents.is_empty() => r,
        _ => return Err(Error::corrupt(&path, "layer 0 must hold exactly MDL(X|{})")),
    };
    let entry = ParentEntry {
        set: VarSet::EMPTY,
        best_score: rec.score,
        best_parents: VarSet::EMPTY,
    };
    write_records(&dir.parents_file(var, 0), [&entry])?;
    cache.discard(var, 0)?;
    Ok(entry)
}

/// Sequential cursor over one score file.
struct ScoreCursor {
    reader: Option<RecordReader<CachedScore>>,
}

impl ScoreCursor {
    fn peek(&mut self) -> Result<Option<CachedScore>> {
        match &mut self.reader {
            Some(r) => Ok(r.peek()?.copied()),
            None => Ok(None),
        }
    }

    fn advance(&mut self) -> Result<()> {
        if let Some(r) = &mut self.reader {
            r.next_record()?;
        }
        Ok(())
    }

    fn path(&self) -> Option<&Path> {
        self.reader.as_ref().map(|r| r.path())
    }
}

/// Expands layer `l` of `var`'s parent graph into layer `l + 1`.
///
/// Every successor `S = U ∪ {Y}` of an entry `U` inherits `U`'s best; the
/// full-set score `MDL(X|S)` is taken from the score file on the canonical
/// generation (`Y > max U`). The score file is sorted by exactly that
/// generation order and is read once, front to back. Scores whose canonical
/// predecessor was pruned but whose set survived are taken as the reader
/// passes them. With `present == None` every successor is kept.
pub fn expand_parent_layer(
    var: usize,
    l: usize,
    dir: &WorkDir,
    cache: &ScoreCache,
    present: Option<&PresenceMap>,
    max_size: usize,
) -> Result<ParentLayerStats> {
    let n = cache.num_vars();
    let others = VarSet::full(n).without(var);
    let is_present = |s: VarSet| present.is_none_or(|p| p.get(s));
    let mut stats = ParentLayerStats::default();

    let mut scores = ScoreCursor {
        reader: cache.reader(var, l + 1)?,
    };
    stats.scores_total = scores.reader.as_ref().map_or(0, |r| r.remaining());
    let mut table = DedupTable::new(max_size, dir.tmp_dir(), better_parent);

    // Scores whose canonical predecessor sorts before `limit` (all of them
    // for `None`) can no longer be claimed by an entry.
    let drain_before = |limit: Option<u64>,
                            scores: &mut ScoreCursor,
                            table: &mut DedupTable<ParentEntry, _>,
                            stats: &mut ParentLayerStats|
     -> Result<()> {
        while let Some(rec) = scores.peek()? {
            if limit.is_some_and(|lim| need_key(rec.parents).0 >= lim) {
                break;
            }
            scores.advance()?;
            if is_present(rec.parents) {
                stats.scores_used += 1;
                stats.generated += 1;
                table.insert(ParentEntry {
                    set: rec.parents,
                    best_score: rec.score,
                    best_parents: rec.parents,
                })?;
            } else {
                stats.scores_skipped += 1;
            }
        }
        Ok(())
    };

    let current = dir.parents_file(var, l);
    for entry in RecordReader::<ParentEntry>::open(&current)?.sorted(true) {
        let entry = entry?;
        let u = entry.set;
        if u.len() != l || u.contains(var) {
            return Err(Error::corrupt(&current, format!("unexpected set {u:?}")));
        }
        stats.entries_in += 1;
        drain_before(Some(u.bits()), &mut scores, &mut table, &mut stats)?;

        let lowest_canonical = u.max().map_or(0, |m| m + 1);
        for y in others.difference(u).iter() {
            let s = u.with(y);
            let wanted = y >= lowest_canonical;
            if wanted {
                // pass over scores of pruned sets that precede S
                while let Some(rec) = scores.peek()? {
                    if rec.key() >= need_key(s) {
                        break;
                    }
                    if is_present(rec.parents) {
                        return Err(Error::corrupt(
                            scores.path().unwrap(),
                            format!("score for {:?} was not consumed in order", rec.parents),
                        ));
                    }
                    stats.scores_skipped += 1;
                    scores.advance()?;
                }
            }
            if !is_present(s) {
                continue;
            }
            stats.generated += 1;
            table.insert(ParentEntry { set: s, ..entry })?;
            if wanted && scores.reader.is_some() {
                match scores.peek()? {
                    Some(rec) if rec.parents == s => {
                        scores.advance()?;
                        stats.scores_used += 1;
                        stats.generated += 1;
                        table.insert(ParentEntry {
                            set: s,
                            best_score: rec.score,
                            best_parents: s,
                        })?;
                    }
                    _ => {
                        return Err(Error::corrupt(
                            scores.path().unwrap(),
                            format!("missing score for X{var} given {s:?}"),
                        ))
                    }
                }
            }
        }
    }
    drain_before(None, &mut scores, &mut table, &mut stats)?;
    drop(scores);

    let dstats = table.finish(&dir.parents_file(var, l + 1))?;
    stats.written = dstats.written;
    stats.runs = dstats.runs;
    remove_if_exists(&current)?;
    cache.discard(var, l + 1)?;
    Ok(stats)
}
