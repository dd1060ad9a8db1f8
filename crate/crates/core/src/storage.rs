//! External-memory primitives: fixed-width record files, an in-RAM
//! duplicate-merging table that spills sorted runs, and a k-way merge that
//! folds equal keys with a caller-supplied reducer.

use std::cmp::Reverse;
use std::collections::hash_map::Entry;
use std::collections::{BinaryHeap, VecDeque};
use std::fs::{self, File};
use std::hash::Hash;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Seek, SeekFrom, Write};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use rustc_hash::FxHashMap;

use crate::error::{Error, IoContext, Result};

/// Default cap on simultaneously open runs during a merge pass.
pub const DEFAULT_FAN_IN: usize = 64;

/// A little-endian fixed-width on-disk record.
pub trait Record: Copy {
    const WIDTH: usize;
    type Key: Ord + Copy + Hash + Eq;

    fn key(&self) -> Self::Key;
    fn encode(&self, buf: &mut [u8]);
    fn decode(buf: &[u8]) -> Self;
}

#[inline]
pub(crate) fn put_u64(buf: &mut [u8], at: usize, v: u64) {
    buf[at..at + 8].copy_from_slice(&v.to_le_bytes());
}

#[inline]
pub(crate) fn get_u64(buf: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(buf[at..at + 8].try_into().unwrap())
}

#[inline]
pub(crate) fn put_f64(buf: &mut [u8], at: usize, v: f64) {
    buf[at..at + 8].copy_from_slice(&v.to_le_bytes());
}

#[inline]
pub(crate) fn get_f64(buf: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(buf[at..at + 8].try_into().unwrap())
}

static TEMP_SEQ: AtomicU64 = AtomicU64::new(0);

fn temp_name(dir: &Path, stem: &str) -> PathBuf {
    let seq = TEMP_SEQ.fetch_add(1, Ordering::Relaxed);
    dir.join(format!("{stem}.{}.{seq}.tmp", std::process::id()))
}

/// Buffered writer that lands its file with an atomic rename on `finish`.
pub struct RecordWriter<R: Record> {
    out: BufWriter<File>,
    tmp: PathBuf,
    dest: PathBuf,
    buf: Vec<u8>,
    count: u64,
    done: bool,
    _r: PhantomData<R>,
}

impl<R: Record> RecordWriter<R> {
    pub fn create(dest: impl Into<PathBuf>) -> Result<Self> {
        let dest = dest.into();
        let dir = dest.parent().unwrap_or(Path::new("."));
        fs::create_dir_all(dir).at(dir)?;
        let stem = dest
            .file_name()
            .map_or("out".into(), |s| s.to_string_lossy().into_owned());
        let tmp = temp_name(dir, &stem);
        let file = File::create(&tmp).at(&tmp)?;
        Ok(RecordWriter {
            out: BufWriter::with_capacity(1 << 16, file),
            tmp,
            dest,
            buf: vec![0; R::WIDTH],
            count: 0,
            done: false,
            _r: PhantomData,
        })
    }

    pub fn push(&mut self, r: &R) -> Result<()> {
        r.encode(&mut self.buf);
        self.out.write_all(&self.buf).at(&self.tmp)?;
        self.count += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<u64> {
        self.out.flush().at(&self.tmp)?;
        fs::rename(&self.tmp, &self.dest).at(&self.dest)?;
        self.done = true;
        Ok(self.count)
    }
}

impl<R: Record> Drop for RecordWriter<R> {
    fn drop(&mut self) {
        if !self.done {
            let _ = fs::remove_file(&self.tmp);
        }
    }
}

/// Writes `records` to `dest` in the given order.
pub fn write_records<'a, R: Record + 'a>(
    dest: &Path,
    records: impl IntoIterator<Item = &'a R>,
) -> Result<u64> {
    let mut w = RecordWriter::create(dest)?;
    for r in records {
        w.push(r)?;
    }
    w.finish()
}

/// Sequential reader over a record file. Verifies that the file length is a
/// whole number of records and, when asked, that keys never decrease.
pub struct RecordReader<R: Record> {
    input: BufReader<File>,
    path: PathBuf,
    buf: Vec<u8>,
    remaining: u64,
    last: Option<R::Key>,
    strict: Option<bool>,
    peeked: Option<R>,
}

impl<R: Record> RecordReader<R> {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let file = File::open(&path).at(&path)?;
        let len = file.metadata().at(&path)?.len();
        if len % R::WIDTH as u64 != 0 {
            return Err(Error::corrupt(
                &path,
                format!("length {len} is not a multiple of {}", R::WIDTH),
            ));
        }
        Ok(RecordReader {
            input: BufReader::with_capacity(1 << 16, file),
            path,
            buf: vec![0; R::WIDTH],
            remaining: len / R::WIDTH as u64,
            last: None,
            strict: None,
            peeked: None,
        })
    }

    /// Reads `len` records starting at record `offset`.
    pub fn open_segment(path: impl Into<PathBuf>, offset: u64, len: u64) -> Result<Self> {
        let path = path.into();
        let mut file = File::open(&path).at(&path)?;
        let bytes = file.metadata().at(&path)?.len();
        let width = R::WIDTH as u64;
        if (offset + len) * width > bytes {
            return Err(Error::corrupt(
                &path,
                format!("segment {offset}+{len} runs past the end ({bytes} bytes)"),
            ));
        }
        file.seek(SeekFrom::Start(offset * width)).at(&path)?;
        let cap = (len * width).clamp(width, 1 << 16) as usize;
        Ok(RecordReader {
            input: BufReader::with_capacity(cap, file),
            path,
            buf: vec![0; R::WIDTH],
            remaining: len,
            last: None,
            strict: None,
            peeked: None,
        })
    }

    /// Reject keys that go backwards (`strict` also rejects repeats).
    pub fn sorted(mut self, strict: bool) -> Self {
        self.strict = Some(strict);
        self
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Records not yet returned, including a peeked one.
    pub fn remaining(&self) -> u64 {
        self.remaining + u64::from(self.peeked.is_some())
    }

    pub fn peek(&mut self) -> Result<Option<&R>> {
        if self.peeked.is_none() {
            self.peeked = self.read_one()?;
        }
        Ok(self.peeked.as_ref())
    }

    pub fn next_record(&mut self) -> Result<Option<R>> {
        match self.peeked.take() {
            Some(r) => Ok(Some(r)),
            None => self.read_one(),
        }
    }

    fn read_one(&mut self) -> Result<Option<R>> {
        if self.remaining == 0 {
            return Ok(None);
        }
        match self.input.read_exact(&mut self.buf) {
            Ok(()) => {}
            Err(e) if e.kind() == ErrorKind::UnexpectedEof => {
                return Err(Error::corrupt(&self.path, "truncated record"))
            }
            Err(e) => return Err(Error::io(&self.path, e)),
        }
        self.remaining -= 1;
        let r = R::decode(&self.buf);
        if let Some(strict) = self.strict {
            let k = r.key();
            if let Some(prev) = self.last {
                if k < prev || (strict && k == prev) {
                    return Err(Error::corrupt(&self.path, "records out of order"));
                }
            }
            self.last = Some(k);
        }
        Ok(Some(r))
    }
}

impl<R: Record> Iterator for RecordReader<R> {
    type Item = Result<R>;

    fn next(&mut self) -> Option<Result<R>> {
        self.next_record().transpose()
    }
}

/// Reads a whole record file into memory.
pub fn read_records<R: Record>(path: &Path) -> Result<Vec<R>> {
    RecordReader::open(path)?.collect()
}

/// A key-sorted run: `len` records starting at record `offset` of `path`.
#[derive(Clone, Debug)]
pub struct SortedRun {
    pub path: PathBuf,
    pub offset: u64,
    pub len: u64,
}

impl SortedRun {
    /// A run spanning the whole of `path`.
    pub fn whole<R: Record>(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let bytes = fs::metadata(&path).at(&path)?.len();
        Ok(SortedRun {
            path,
            offset: 0,
            len: bytes / R::WIDTH as u64,
        })
    }

    fn reader<R: Record>(&self) -> Result<RecordReader<R>> {
        RecordReader::open_segment(&self.path, self.offset, self.len)
    }
}

/// Append-only temporary file holding consecutive sorted runs. Nothing is
/// created on disk until the first record arrives.
pub struct SpillFile<R: Record> {
    dir: PathBuf,
    path: Option<PathBuf>,
    out: Option<BufWriter<File>>,
    buf: Vec<u8>,
    start: u64,
    next: u64,
    _r: PhantomData<R>,
}

impl<R: Record> SpillFile<R> {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        SpillFile {
            dir: dir.into(),
            path: None,
            out: None,
            buf: vec![0; R::WIDTH],
            start: 0,
            next: 0,
            _r: PhantomData,
        }
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn push(&mut self, r: &R) -> Result<()> {
        if self.out.is_none() {
            fs::create_dir_all(&self.dir).at(&self.dir)?;
            let path = temp_name(&self.dir, "spill");
            self.out = Some(BufWriter::with_capacity(1 << 16, File::create(&path).at(&path)?));
            self.path = Some(path);
        }
        let path = self.path.as_ref().expect("path set with writer");
        r.encode(&mut self.buf);
        self.out
            .as_mut()
            .expect("writer just created")
            .write_all(&self.buf)
            .at(path)?;
        self.next += 1;
        Ok(())
    }

    /// Ends the current run and makes it readable.
    pub fn seal(&mut self) -> Result<SortedRun> {
        let path = match (&mut self.out, &self.path) {
            (Some(out), Some(path)) => {
                out.flush().at(path)?;
                path.clone()
            }
            _ => temp_name(&self.dir, "empty"),
        };
        let run = SortedRun {
            path,
            offset: self.start,
            len: self.next - self.start,
        };
        self.start = self.next;
        Ok(run)
    }

    /// Sorts the table by key, appends it as one run and clears it.
    pub fn spill(&mut self, table: &mut FxHashMap<R::Key, R>) -> Result<SortedRun> {
        let mut records: Vec<R> = table.drain().map(|(_, r)| r).collect();
        records.sort_unstable_by_key(Record::key);
        for r in &records {
            self.push(r)?;
        }
        self.seal()
    }

    pub fn remove(mut self) -> Result<()> {
        self.out = None;
        match self.path.take() {
            Some(p) => remove_if_exists(&p),
            None => Ok(()),
        }
    }
}

/// Merges sorted runs into `dest`, folding equal keys with `combine`.
/// More than `fan_in` runs are merged in cascaded passes through a spill
/// file in `tmp_dir`. Every file backing an input run is deleted afterwards.
pub fn merge_runs<R, F>(
    runs: Vec<SortedRun>,
    combine: &mut F,
    dest: &Path,
    tmp_dir: &Path,
    fan_in: usize,
) -> Result<u64>
where
    R: Record,
    F: FnMut(R, R) -> R,
{
    let fan_in = fan_in.max(2);
    let mut inputs: Vec<PathBuf> = runs.iter().filter(|r| r.len > 0).map(|r| r.path.clone()).collect();
    inputs.sort();
    inputs.dedup();

    let mut queue: VecDeque<SortedRun> = runs.into_iter().filter(|r| r.len > 0).collect();
    let mut passes = SpillFile::<R>::new(tmp_dir);
    while queue.len() > fan_in {
        let batch: Vec<SortedRun> = queue.drain(..fan_in).collect();
        merge_segments(&batch, combine, |r| passes.push(r))?;
        queue.push_back(passes.seal()?);
    }
    let mut out = RecordWriter::<R>::create(dest)?;
    let runs: Vec<SortedRun> = queue.into();
    merge_segments(&runs, combine, |r| out.push(r))?;
    let written = out.finish()?;
    passes.remove()?;
    for p in inputs {
        remove_if_exists(&p)?;
    }
    Ok(written)
}

fn merge_segments<R, F>(
    runs: &[SortedRun],
    combine: &mut F,
    mut emit: impl FnMut(&R) -> Result<()>,
) -> Result<()>
where
    R: Record,
    F: FnMut(R, R) -> R,
{
    let mut readers = runs
        .iter()
        .map(|r| r.reader::<R>().map(|rd| rd.sorted(false)))
        .collect::<Result<Vec<_>>>()?;
    let mut heads: Vec<Option<R>> = Vec::with_capacity(readers.len());
    let mut heap = BinaryHeap::with_capacity(readers.len());
    for (i, rd) in readers.iter_mut().enumerate() {
        let head = rd.next_record()?;
        if let Some(r) = &head {
            heap.push(Reverse((r.key(), i)));
        }
        heads.push(head);
    }

    let mut pending: Option<R> = None;
    while let Some(Reverse((_, i))) = heap.pop() {
        let rec = heads[i].take().expect("heap entry without head");
        if let Some(next) = readers[i].next_record()? {
            heap.push(Reverse((next.key(), i)));
            heads[i] = Some(next);
        }
        pending = Some(match pending {
            Some(p) if p.key() == rec.key() => combine(p, rec),
            Some(p) => {
                emit(&p)?;
                rec
            }
            None => rec,
        });
    }
    if let Some(p) = pending {
        emit(&p)?;
    }
    Ok(())
}

/// Counters reported by a [`DedupTable`] when it is finished.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DedupStats {
    pub inserted: u64,
    pub written: u64,
    pub runs: u64,
    pub peak_resident: u64,
}

/// Bounded in-RAM duplicate detection that spills to sorted runs once
/// `max_size` distinct keys are resident.
pub struct DedupTable<R: Record, F> {
    map: FxHashMap<R::Key, R>,
    max_size: usize,
    runs: Vec<SortedRun>,
    spill: SpillFile<R>,
    tmp_dir: PathBuf,
    combine: F,
    fan_in: usize,
    stats: DedupStats,
}

impl<R, F> DedupTable<R, F>
where
    R: Record,
    F: FnMut(R, R) -> R,
{
    pub fn new(max_size: usize, tmp_dir: impl Into<PathBuf>, combine: F) -> Self {
        let tmp_dir = tmp_dir.into();
        DedupTable {
            map: FxHashMap::default(),
            max_size: max_size.max(1),
            runs: Vec::new(),
            spill: SpillFile::new(&tmp_dir),
            tmp_dir,
            combine,
            fan_in: DEFAULT_FAN_IN,
            stats: DedupStats::default(),
        }
    }

    pub fn with_fan_in(mut self, fan_in: usize) -> Self {
        self.fan_in = fan_in;
        self
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty() && self.runs.is_empty()
    }

    pub fn insert(&mut self, r: R) -> Result<()> {
        self.stats.inserted += 1;
        match self.map.entry(r.key()) {
            Entry::Occupied(mut e) => {
                let merged = (self.combine)(*e.get(), r);
                e.insert(merged);
            }
            Entry::Vacant(e) => {
                e.insert(r);
            }
        }
        self.stats.peak_resident = self.stats.peak_resident.max(self.map.len() as u64);
        if self.map.len() >= self.max_size {
            self.spill()?;
        }
        Ok(())
    }

    fn spill(&mut self) -> Result<()> {
        let run = self.spill.spill(&mut self.map)?;
        self.runs.push(run);
        self.stats.runs += 1;
        Ok(())
    }

    /// Writes the merged, key-sorted contents to `dest`.
    pub fn finish(mut self, dest: &Path) -> Result<DedupStats> {
        if self.runs.is_empty() {
            let mut records: Vec<R> = self.map.drain().map(|(_, r)| r).collect();
            records.sort_unstable_by_key(Record::key);
            self.stats.written = write_records(dest, &records)?;
        } else {
            if !self.map.is_empty() {
                self.spill()?;
            }
            let runs = std::mem::take(&mut self.runs);
            self.stats.written =
                merge_runs(runs, &mut self.combine, dest, &self.tmp_dir, self.fan_in)?;
        }
        Ok(self.stats)
    }
}

impl<R: Record, F> Drop for DedupTable<R, F> {
    fn drop(&mut self) {
        if let Some(p) = self.spill.path() {
            let _ = fs::remove_file(p);
        }
    }
}

/// Total size in bytes of every file below `dir`.
pub fn disk_usage(dir: &Path) -> u64 {
    let Ok(entries) = fs::read_dir(dir) else {
        return 0;
    };
    entries
        .flatten()
        .map(|e| match e.file_type() {
            Ok(t) if t.is_dir() => disk_usage(&e.path()),
            Ok(_) => e.metadata().map_or(0, |m| m.len()),
            Err(_) => 0,
        })
        .sum()
}

/// Removes a file, treating "already gone" as success.
pub fn remove_if_exists(path: &Path) -> Result<()> {
    match fs::remove_file(path) {
        Err(e) if e.kind() != ErrorKind::NotFound => Err(Error::io(path, e)),
        _ => Ok(()),
    }
}

/// Layout of a search working directory:
/// `{scores,parents,order,recon,tmp}` below one root.
#[derive(Clone, Debug)]
pub struct WorkDir {
    root: PathBuf,
}

impl WorkDir {
    pub const SUBDIRS: [&'static str; 5] = ["scores", "parents", "order", "recon", "tmp"];

    pub fn new(root: impl Into<PathBuf>) -> Self {
        WorkDir { root: root.into() }
    }

    /// Creates the layout, clearing anything a previous run left in it.
    pub fn prepare(&self) -> Result<()> {
        for sub in Self::SUBDIRS {
            let dir = self.root.join(sub);
            match fs::remove_dir_all(&dir) {
                Err(e) if e.kind() != ErrorKind::NotFound => return Err(Error::io(&dir, e)),
                _ => {}
            }
            fs::create_dir_all(&dir).at(&dir)?;
        }
        Ok(())
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn scores_dir(&self) -> PathBuf {
        self.root.join("scores")
    }

    pub fn scores_file(&self, var: usize, layer: usize) -> PathBuf {
        self.root
            .join("scores")
            .join(format!("X{var}"))
            .join(format!("layer{layer}.bin"))
    }

    pub fn parents_file(&self, var: usize, layer: usize) -> PathBuf {
        self.root
            .join("parents")
            .join(format!("X{var}"))
            .join(format!("layer{layer}.bin"))
    }

    pub fn order_file(&self, layer: usize) -> PathBuf {
        self.root.join("order").join(format!("layer{layer}.bin"))
    }

    pub fn recon_file(&self, layer: usize) -> PathBuf {
        self.root.join("recon").join(format!("layer{layer}.bin"))
    }

    pub fn tmp_dir(&self) -> PathBuf {
        self.root.join("tmp")
    }

    pub fn disk_usage(&self) -> u64 {
        disk_usage(&self.root)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[derive(Clone, Copy, Debug, PartialEq)]
    struct Scored {
        key: u64,
        score: f64,
    }

    impl Record for Scored {
        const WIDTH: usize = 16;
        type Key = u64;
        fn key(&self) -> u64 {
            self.key
        }
        fn encode(&self, buf: &mut [u8]) {
            put_u64(buf, 0, self.key);
            put_f64(buf, 8, self.score);
        }
        fn decode(buf: &[u8]) -> Self {
            Scored {
                key: get_u64(buf, 0),
                score: get_f64(buf, 8),
            }
        }
    }

    fn min_score(a: Scored, b: Scored) -> Scored {
        if b.score.total_cmp(&a.score).is_lt() {
            b
        } else {
            a
        }
    }

    fn s(key: u64, score: f64) -> Scored {
        Scored { key, score }
    }

    #[test]
    fn spill_single_entry() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = FxHashMap::default();
        t.insert(5, s(5, 1.0));
        let run = SpillFile::new(dir.path()).spill(&mut t).unwrap();
        assert_eq!(run.len, 1);
        assert!(t.is_empty());
        assert_eq!(read_records::<Scored>(&run.path).unwrap(), vec![s(5, 1.0)]);
    }

    #[test]
    fn spill_sorts_and_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = FxHashMap::default();
        for k in [9u64, 3, 7, 1] {
            t.insert(k, s(k, k as f64 * 0.5));
        }
        let original = t.clone();
        let run = SpillFile::new(dir.path()).spill(&mut t).unwrap();
        let back = read_records::<Scored>(&run.path).unwrap();
        assert!(back.windows(2).all(|w| w[0].key < w[1].key));
        let reloaded: FxHashMap<u64, Scored> = back.into_iter().map(|r| (r.key, r)).collect();
        assert_eq!(reloaded, original);
    }

    #[test]
    fn min_reducer_on_shared_key() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = FxHashMap::default();
        a.insert(4, s(4, 3.0));
        let mut b = FxHashMap::default();
        b.insert(4, s(4, 2.0));
        let mut spill = SpillFile::new(dir.path());
        let runs = vec![spill.spill(&mut a).unwrap(), spill.spill(&mut b).unwrap()];
        assert_eq!(runs[0].path, runs[1].path);
        assert_eq!((runs[1].offset, runs[1].len), (1, 1));
        let out = dir.path().join("out.bin");
        let n = merge_runs(runs, &mut min_score, &out, dir.path(), 64).unwrap();
        assert_eq!(n, 1);
        assert_eq!(read_records::<Scored>(&out).unwrap(), vec![s(4, 2.0)]);
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn single_run_merge_dedups_itself() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.bin");
        write_records(&path, &[s(1, 2.0), s(1, 1.0), s(3, 0.0)]).unwrap();
        let out = dir.path().join("out.bin");
        merge_runs(
            vec![SortedRun::whole::<Scored>(path).unwrap()],
            &mut min_score,
            &out,
            dir.path(),
            64,
        )
        .unwrap();
        assert_eq!(
            read_records::<Scored>(&out).unwrap(),
            vec![s(1, 1.0), s(3, 0.0)]
        );
    }

    #[test]
    fn unsorted_run_is_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.bin");
        write_records(&path, &[s(5, 0.0), s(2, 0.0)]).unwrap();
        let out = dir.path().join("out.bin");
        let err = merge_runs(
            vec![SortedRun::whole::<Scored>(path).unwrap()],
            &mut min_score,
            &out,
            dir.path(),
            64,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Corrupt { .. }));
    }

    #[test]
    fn segment_past_end_is_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.bin");
        write_records(&path, &[s(1, 0.0), s(2, 0.0)]).unwrap();
        assert!(RecordReader::<Scored>::open_segment(&path, 1, 1).is_ok());
        assert!(matches!(
            RecordReader::<Scored>::open_segment(&path, 1, 2),
            Err(Error::Corrupt { .. })
        ));
        let tail: Vec<Scored> = RecordReader::open_segment(&path, 1, 1)
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(tail, vec![s(2, 0.0)]);
    }

    #[test]
    fn truncated_file_is_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.bin");
        fs::write(&path, [0u8; 20]).unwrap();
        assert!(matches!(
            RecordReader::<Scored>::open(&path),
            Err(Error::Corrupt { .. })
        ));
    }

    #[test]
    fn dedup_table_respects_budget() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = DedupTable::new(3, dir.path(), min_score).with_fan_in(2);
        for i in 0..50u64 {
            t.insert(s(i % 11, (i * 7 % 13) as f64)).unwrap();
        }
        let out = dir.path().join("layer.bin");
        let stats = t.finish(&out).unwrap();
        assert!(stats.peak_resident <= 3);
        assert_eq!(stats.written, 11);
        let got = read_records::<Scored>(&out).unwrap();
        for r in &got {
            let best = (0..50u64)
                .filter(|i| i % 11 == r.key)
                .map(|i| (i * 7 % 13) as f64)
                .fold(f64::INFINITY, f64::min);
            assert_eq!(r.score, best);
        }
        // only the output remains
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    proptest! {
        #[test]
        fn merge_independent_of_partition(
            records in prop::collection::vec((0u64..40, -50i32..50), 1..200),
            budget in 1usize..20,
            fan_in in 2usize..6,
        ) {
            let dir = tempfile::tempdir().unwrap();
            let recs: Vec<Scored> = records.iter().map(|&(k, v)| s(k, v as f64)).collect();

            let whole = dir.path().join("whole.bin");
            let mut t = DedupTable::new(usize::MAX, dir.path(), min_score);
            for r in &recs { t.insert(*r).unwrap(); }
            t.finish(&whole).unwrap();

            let split = dir.path().join("split.bin");
            let mut t = DedupTable::new(budget, dir.path(), min_score).with_fan_in(fan_in);
            for r in recs.iter().rev() { t.insert(*r).unwrap(); }
            t.finish(&split).unwrap();

            prop_assert_eq!(fs::read(&whole).unwrap(), fs::read(&split).unwrap());
        }
    }
}
