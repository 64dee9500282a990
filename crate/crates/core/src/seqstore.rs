//! Per-author streaming store of semantic ids.
//!
//! Each author's raw id stream is kept run-length compressed: a sequence of
//! distinct adjacent ids and the length of each run. Appends are written to an
//! optional line log before the in-memory state moves, so replaying the log
//! rebuilds the store exactly.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::RwLock;

use crate::error::{Error, Result};
use crate::quantizer::{QuantizedSegment, Sid};

/// Run-length form of a raw id sequence.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CompressedSidSequence {
    distinct: Vec<Sid>,
    freq: Vec<u32>,
    total_len: u64,
}

impl CompressedSidSequence {
    /// Validating constructor.
    pub fn from_parts(distinct: Vec<Sid>, freq: Vec<u32>) -> Result<Self> {
        if distinct.len() != freq.len() {
            return Err(Error::invalid("distinct and freq lengths differ"));
        }
        if freq.contains(&0) {
            return Err(Error::invalid("run frequencies must be ≥ 1"));
        }
        if distinct.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("adjacent runs must carry different ids"));
        }
        let total_len = freq.iter().map(|&f| u64::from(f)).sum();
        Ok(CompressedSidSequence {
            distinct,
            freq,
            total_len,
        })
    }

    pub fn distinct(&self) -> &[Sid] {
        &self.distinct
    }

    pub fn freq(&self) -> &[u32] {
        &self.freq
    }

    pub fn total_len(&self) -> u64 {
        self.total_len
    }

    pub fn runs(&self) -> usize {
        self.distinct.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distinct.is_empty()
    }

    /// Extends the last run or opens a new one.
    pub fn push(&mut self, sid: Sid) {
        match (self.distinct.last(), self.freq.last_mut()) {
            (Some(&last), Some(f)) if last == sid => *f += 1,
            _ => {
                self.distinct.push(sid);
                self.freq.push(1);
            }
        }
        self.total_len += 1;
    }

    fn check(&self) -> Result<()> {
        CompressedSidSequence::from_parts(self.distinct.clone(), self.freq.clone()).and_then(|c| {
            if c.total_len == self.total_len {
                Ok(())
            } else {
                Err(Error::invalid("total_len disagrees with run frequencies"))
            }
        })
    }
}

pub fn compress(raw: &[Sid]) -> CompressedSidSequence {
    let mut c = CompressedSidSequence::default();
    for &s in raw {
        c.push(s);
    }
    c
}

pub fn decompress(c: &CompressedSidSequence) -> Result<Vec<Sid>> {
    c.check()?;
    let mut out = Vec::with_capacity(c.total_len as usize);
    for (&s, &f) in c.distinct.iter().zip(&c.freq) {
        out.extend(std::iter::repeat_n(s, f as usize));
    }
    Ok(out)
}

/// The last `l_max` runs of an author, front-padded to exactly `l_max`
/// positions. Pad positions carry `pad` and frequency 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistoryWindow {
    pub sids: Vec<Sid>,
    pub freqs: Vec<u32>,
    pub valid_len: usize,
}

impl HistoryWindow {
    pub fn l_max(&self) -> usize {
        self.sids.len()
    }

    fn pad_len(&self) -> usize {
        self.sids.len() - self.valid_len
    }

    pub fn valid_sids(&self) -> &[Sid] {
        &self.sids[self.pad_len()..]
    }

    pub fn valid_freqs(&self) -> &[u32] {
        &self.freqs[self.pad_len()..]
    }

    /// `true` for real positions, `false` for padding.
    pub fn mask(&self) -> Vec<bool> {
        let pad = self.pad_len();
        (0..self.sids.len()).map(|i| i >= pad).collect()
    }

    /// Builds a window from the tail of a compressed sequence.
    pub fn from_compressed(seq: &CompressedSidSequence, l_max: usize, pad: Sid) -> Self {
        let take = seq.runs().min(l_max);
        let start = seq.runs() - take;
        let pad_len = l_max - take;
        let mut sids = vec![pad; pad_len];
        let mut freqs = vec![0; pad_len];
        sids.extend_from_slice(&seq.distinct[start..]);
        freqs.extend_from_slice(&seq.freq[start..]);
        HistoryWindow {
            sids,
            freqs,
            valid_len: take,
        }
    }

    /// Window over only the first `raw_len` raw segments of `seq`; a run cut
    /// by the boundary keeps the part before it.
    pub fn prefix(seq: &CompressedSidSequence, raw_len: u64, l_max: usize, pad: Sid) -> Self {
        let mut seen = 0u64;
        let mut end = 0;
        let mut last_freq = 0;
        while end < seq.runs() && seen < raw_len {
            let f = u64::from(seq.freq[end]);
            last_freq = (raw_len - seen).min(f) as u32;
            seen += f;
            end += 1;
        }
        let take = end.min(l_max);
        let start = end - take;
        let pad_len = l_max - take;
        let mut sids = vec![pad; pad_len];
        let mut freqs = vec![0; pad_len];
        sids.extend_from_slice(&seq.distinct[start..end]);
        freqs.extend_from_slice(&seq.freq[start..end]);
        if take > 0 {
            freqs[l_max - 1] = last_freq;
        }
        HistoryWindow {
            sids,
            freqs,
            valid_len: take,
        }
    }

    /// The valid part as a compressed sequence.
    pub fn as_compressed(&self) -> Result<CompressedSidSequence> {
        CompressedSidSequence::from_parts(self.valid_sids().to_vec(), self.valid_freqs().to_vec())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct AuthorEntry {
    seq: CompressedSidSequence,
    next_seq_index: u64,
}

/// Append log line: `author_id \t seq_index \t sid`.
pub fn format_log_line(author_id: u64, seq_index: u64, sid: Sid) -> String {
    format!("{author_id}\t{seq_index}\t{}\n", sid.0)
}

/// Mapping author → compressed id sequence, with an optional durable log.
pub struct AuthorStore {
    authors: BTreeMap<u64, AuthorEntry>,
    pad: Sid,
    log: Option<Box<dyn Write + Send + Sync>>,
}

impl std::fmt::Debug for AuthorStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AuthorStore")
            .field("authors", &self.authors.len())
            .field("pad", &self.pad)
            .field("logged", &self.log.is_some())
            .finish()
    }
}

impl PartialEq for AuthorStore {
    fn eq(&self, other: &Self) -> bool {
        self.pad == other.pad && self.authors == other.authors
    }
}

impl AuthorStore {
    /// In-memory store; `pad` is the code used for window padding.
    pub fn new(pad: Sid) -> Self {
        AuthorStore {
            authors: BTreeMap::new(),
            pad,
            log: None,
        }
    }

    /// Store whose appends are written and flushed to `log` first.
    pub fn with_log(pad: Sid, log: Box<dyn Write + Send + Sync>) -> Self {
        AuthorStore {
            log: Some(log),
            ..AuthorStore::new(pad)
        }
    }

    pub fn pad(&self) -> Sid {
        self.pad
    }

    pub fn authors(&self) -> impl Iterator<Item = u64> + '_ {
        self.authors.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.authors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.authors.is_empty()
    }

    pub fn sequence(&self, author_id: u64) -> Option<&CompressedSidSequence> {
        self.authors.get(&author_id).map(|e| &e.seq)
    }

    /// Appends the next segment id of `author_id`, assigning it the next
    /// sequence index.
    pub fn append(&mut self, author_id: u64, sid: Sid) -> Result<()> {
        let next = self.authors.get(&author_id).map_or(0, |e| e.next_seq_index);
        self.append_at(author_id, next, sid)
    }

    /// Appends with an explicit sequence index, which must be strictly greater
    /// than the author's previous one.
    pub fn append_at(&mut self, author_id: u64, seq_index: u64, sid: Sid) -> Result<()> {
        if sid == self.pad {
            return Err(Error::invalid("the pad code cannot be appended"));
        }
        let expected_min = self.authors.get(&author_id).map_or(0, |e| e.next_seq_index);
        if seq_index < expected_min {
            return Err(Error::invalid(format!(
                "author {author_id}: seq_index {seq_index} is not after {}",
                expected_min.saturating_sub(1)
            )));
        }
        if let Some(log) = self.log.as_mut() {
            log.write_all(format_log_line(author_id, seq_index, sid).as_bytes())?;
            log.flush()?;
        }
        let entry = self.authors.entry(author_id).or_default();
        entry.seq.push(sid);
        entry.next_seq_index = seq_index + 1;
        Ok(())
    }

    pub fn window(&self, author_id: u64, l_max: usize) -> HistoryWindow {
        match self.authors.get(&author_id) {
            Some(e) => HistoryWindow::from_compressed(&e.seq, l_max, self.pad),
            None => HistoryWindow::from_compressed(&CompressedSidSequence::default(), l_max, self.pad),
        }
    }

    pub fn ingest(&mut self, segments: &[QuantizedSegment]) -> Result<()> {
        for s in segments {
            self.append_at(s.author_id, s.seq_index, s.sid)?;
        }
        Ok(())
    }

    /// Rebuilds a store from an append log.
    pub fn replay<R: BufRead>(pad: Sid, log: R) -> Result<Self> {
        let mut store = AuthorStore::new(pad);
        for (n, line) in log.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            let parse = |i: usize| -> Result<u64> {
                parts
                    .get(i)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::format(format!("log line {}: bad field {i}", n + 1)))
            };
            if parts.len() != 3 {
                return Err(Error::format(format!("log line {}: expected 3 fields", n + 1)));
            }
            let sid = u32::try_from(parse(2)?).map_err(|_| Error::format("sid overflows u32"))?;
            store.append_at(parse(0)?, parse(1)?, Sid(sid))?;
        }
        Ok(store)
    }

    pub fn replay_file(pad: Sid, path: &Path) -> Result<Self> {
        AuthorStore::replay(pad, BufReader::new(fs::File::open(path)?))
    }

    /// Snapshot layout, little-endian: `b"FSSS"`, version u32, pad u32,
    /// author count u32, then per author (ascending id): author_id u64,
    /// next_seq_index u64, run count u32, runs × (sid u32, freq u32).
    pub fn snapshot_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(SNAPSHOT_MAGIC);
        buf.extend_from_slice(&1u32.to_le_bytes());
        buf.extend_from_slice(&self.pad.0.to_le_bytes());
        buf.extend_from_slice(&(self.authors.len() as u32).to_le_bytes());
        for (&id, e) in &self.authors {
            buf.extend_from_slice(&id.to_le_bytes());
            buf.extend_from_slice(&e.next_seq_index.to_le_bytes());
            buf.extend_from_slice(&(e.seq.runs() as u32).to_le_bytes());
            for (s, f) in e.seq.distinct.iter().zip(&e.seq.freq) {
                buf.extend_from_slice(&s.0.to_le_bytes());
                buf.extend_from_slice(&f.to_le_bytes());
            }
        }
        buf
    }

    pub fn from_snapshot(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = bytes
                .get(pos..pos + n)
                .ok_or_else(|| Error::format("snapshot truncated"))?;
            pos += n;
            Ok(s)
        };
        if take(4)? != SNAPSHOT_MAGIC {
            return Err(Error::format("bad snapshot magic"));
        }
        let u32_of = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap());
        let u64_of = |b: &[u8]| u64::from_le_bytes(b.try_into().unwrap());
        if u32_of(take(4)?) != 1 {
            return Err(Error::format("unsupported snapshot version"));
        }
        let pad = Sid(u32_of(take(4)?));
        let count = u32_of(take(4)?);
        let mut store = AuthorStore::new(pad);
        for _ in 0..count {
            let id = u64_of(take(8)?);
            let next_seq_index = u64_of(take(8)?);
            let runs = u32_of(take(4)?) as usize;
            let mut distinct = Vec::with_capacity(runs);
            let mut freq = Vec::with_capacity(runs);
            for _ in 0..runs {
                distinct.push(Sid(u32_of(take(4)?)));
                freq.push(u32_of(take(4)?));
            }
            let seq = CompressedSidSequence::from_parts(distinct, freq)?;
            if seq.total_len() > next_seq_index {
                return Err(Error::format("snapshot run total exceeds sequence index"));
            }
            store.authors.insert(id, AuthorEntry { seq, next_seq_index });
        }
        if pos != bytes.len() {
            return Err(Error::format("trailing bytes in snapshot"));
        }
        Ok(store)
    }
}

const SNAPSHOT_MAGIC: &[u8; 4] = b"FSSS";

/// Store shared between one writer and any number of readers. Every read
/// observes a whole number of appends.
#[derive(Debug)]
pub struct SharedAuthorStore {
    inner: RwLock<AuthorStore>,
}

impl SharedAuthorStore {
    pub fn new(store: AuthorStore) -> Self {
        SharedAuthorStore {
            inner: RwLock::new(store),
        }
    }

    pub fn append(&self, author_id: u64, sid: Sid) -> Result<()> {
        self.inner
            .write()
            .map_err(|_| Error::invalid("store lock poisoned"))?
            .append(author_id, sid)
    }

    pub fn window(&self, author_id: u64, l_max: usize) -> Result<HistoryWindow> {
        Ok(self
            .inner
            .read()
            .map_err(|_| Error::invalid("store lock poisoned"))?
            .window(author_id, l_max))
    }

    pub fn into_inner(self) -> AuthorStore {
        self.inner.into_inner().unwrap_or_else(|e| e.into_inner())
    }
}
