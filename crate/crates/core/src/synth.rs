//! Synthetic live-stream corpus.
//!
//! Each author's stream is a hidden Markov walk over topics; a segment's
//! embedding is its topic centroid plus isotropic Gaussian jitter. Users hold a
//! per-topic affinity and their interaction labels are Bernoulli draws whose
//! logit depends on the topic of the *next* segment (or, for a negative
//! control, the current one).

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::sigmoid;

/// Interaction tasks in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Ctr,
    Wtr,
    Lvtr,
    Gtr,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::Ctr, Task::Wtr, Task::Lvtr, Task::Gtr];

    pub fn name(self) -> &'static str {
        match self {
            Task::Ctr => "ctr",
            Task::Wtr => "wtr",
            Task::Lvtr => "lvtr",
            Task::Gtr => "gtr",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn parse(s: &str) -> Option<Task> {
        Task::ALL.into_iter().find(|t| t.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub num_topics: usize,
    pub dim: usize,
    pub centroids: Vec<Vec<f64>>,
    pub transition: Vec<Vec<f64>>,
    pub self_stay: f64,
    pub noise_sigma: f64,
}

/// Knobs for [`gen_topic_model`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicParams {
    pub num_topics: usize,
    pub dim: usize,
    pub self_stay: f64,
    pub noise_sigma: f64,
    /// Dirichlet concentration of the random part of each transition row;
    /// small values give peaked, predictable successors.
    pub concentration: f64,
    /// Standard deviation of centroid coordinates.
    pub centroid_scale: f64,
}

impl TopicParams {
    pub fn new(num_topics: usize, dim: usize, self_stay: f64) -> Self {
        TopicParams {
            num_topics,
            dim,
            self_stay,
            noise_sigma: 0.0,
            concentration: 0.5,
            centroid_scale: 1.0,
        }
    }
}

fn categorical<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding can leave `acc` a hair below 1; fall back to the last
    // state with positive mass.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Draws centroids and a transition matrix whose diagonal carries at least
/// `self_stay` of each row's mass.
pub fn gen_topic_model(params: &TopicParams, seed: u64) -> Result<TopicModel> {
    let k = params.num_topics;
    if k < 2 {
        return Err(Error::invalid("num_topics must be at least 2"));
    }
    if params.dim < 2 {
        return Err(Error::invalid("embedding dimension must be at least 2"));
    }
    if !(0.0..1.0).contains(&params.self_stay) {
        return Err(Error::invalid("self_stay must lie in [0, 1)"));
    }
    if !(params.concentration > 0.0) || !(params.centroid_scale > 0.0) {
        return Err(Error::invalid("concentration and centroid_scale must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coord = Normal::new(0.0, params.centroid_scale).expect("positive scale");
    let centroids: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..params.dim).map(|_| coord.sample(&mut rng)).collect())
        .collect();

    let gamma = Gamma::new(params.concentration, 1.0).expect("positive concentration");
    let mut transition = Vec::with_capacity(k);
    for i in 0..k {
        let mut draw: Vec<f64> = (0..k).map(|_| gamma.sample(&mut rng)).collect();
        let total: f64 = draw.iter().sum();
        if total <= 0.0 {
            draw = vec![1.0 / k as f64; k];
        } else {
            draw.iter_mut().for_each(|x| *x /= total);
        }
        let mut row: Vec<f64> = draw.iter().map(|x| (1.0 - params.self_stay) * x).collect();
        row[i] += params.self_stay;
        transition.push(normalize(row));
    }
    TopicModel::new(centroids, transition, params.self_stay, params.noise_sigma)
}

fn normalize(mut row: Vec<f64>) -> Vec<f64> {
    let total: f64 = row.iter().sum();
    row.iter_mut().for_each(|x| *x /= total);
    row
}

impl TopicModel {
    /// Validating constructor for hand-built models.
    pub fn new(
        centroids: Vec<Vec<f64>>,
        transition: Vec<Vec<f64>>,
        self_stay: f64,
        noise_sigma: f64,
    ) -> Result<Self> {
        let k = centroids.len();
        if k < 2 {
            return Err(Error::invalid("need at least two topics"));
        }
        let dim = centroids[0].len();
        if dim == 0 || centroids.iter().any(|c| c.len() != dim) {
            return Err(Error::invalid("centroids must share a positive dimension"));
        }
        if centroids.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("topic centroids"));
        }
        for i in 0..k {
            for j in i + 1..k {
                if centroids[i] == centroids[j] {
                    return Err(Error::invalid(format!("centroids {i} and {j} coincide")));
                }
            }
        }
        if transition.len() != k || transition.iter().any(|r| r.len() != k) {
            return Err(Error::invalid("transition must be num_topics × num_topics"));
        }
        for (i, row) in transition.iter().enumerate() {
            let s: f64 = row.iter().sum();
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (s - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("transition row {i} is not stochastic")));
            }
        }
        if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
            return Err(Error::invalid("noise_sigma must be finite and non-negative"));
        }
        Ok(TopicModel {
            num_topics: k,
            dim,
            centroids,
            transition,
            self_stay,
            noise_sigma,
        })
    }

    /// Deterministic cycle `0 → 1 → … → k−1 → 0` with fresh centroids.
    pub fn cycle(num_topics: usize, dim: usize, seed: u64) -> Result<Self> {
        let base = gen_topic_model(&TopicParams::new(num_topics, dim, 0.0), seed)?;
        let transition = (0..num_topics)
            .map(|i| {
                let mut row = vec![0.0; num_topics];
                row[(i + 1) % num_topics] = 1.0;
                row
            })
            .collect();
        TopicModel::new(base.centroids, transition, 0.0, 0.0)
    }

    pub fn with_noise(mut self, noise_sigma: f64) -> Self {
        self.noise_sigma = noise_sigma;
        self
    }

    pub fn min_centroid_separation(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.num_topics {
            for j in i + 1..self.num_topics {
                let d: f64 = self.centroids[i]
                    .iter()
                    .zip(&self.centroids[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                best = best.min(d);
            }
        }
        best
    }

    pub fn max_row_sum_error(&self) -> f64 {
        self.transition
            .iter()
            .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn next_topic<R: Rng>(&self, rng: &mut R, current: usize) -> usize {
        categorical(rng, &self.transition[current])
    }

    /// Stationary distribution by power iteration.
    pub fn stationary(&self) -> Vec<f64> {
        let k = self.num_topics;
        let mut pi = vec![1.0 / k as f64; k];
        for _ in 0..10_000 {
            let mut next = vec![0.0; k];
            for (i, p) in pi.iter().enumerate() {
                for (j, t) in self.transition[i].iter().enumerate() {
                    next[j] += p * t;
                }
            }
            let delta: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
            pi = next;
            if delta < 1e-15 {
                break;
            }
        }
        pi
    }
}

/// One 30-second slice of an author's stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentEvent {
    pub author_id: u64,
    pub seq_index: u64,
    pub embedding: Vec<f64>,
    /// Hidden ground truth; written only to the ground-truth file.
    pub true_topic: usize,
}

pub fn gen_author_stream(
    model: &TopicModel,
    author_id: u64,
    length: usize,
    seed: u64,
) -> Result<Vec<SegmentEvent>> {
    if length == 0 {
        return Err(Error::invalid("stream length must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, model.noise_sigma.max(0.0)).expect("finite sigma");
    let mut topic = rng.gen_range(0..model.num_topics);
    let mut events = Vec::with_capacity(length);
    for t in 0..length {
        if t > 0 {
            topic = model.next_topic(&mut rng, topic);
        }
        let embedding = model.centroids[topic]
            .iter()
            .map(|&c| {
                if model.noise_sigma > 0.0 {
                    c + noise.sample(&mut rng)
                } else {
                    c
                }
            })
            .collect();
        events.push(SegmentEvent {
            author_id,
            seq_index: t as u64,
            embedding,
            true_topic: topic,
        });
    }
    Ok(events)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserModel {
    pub user_id: u64,
    pub affinity: Vec<f64>,
    /// Logit offsets per task, indexed by [`Task::index`].
    pub base_rate: [f64; 4],
}

pub fn gen_users(
    num_users: usize,
    num_topics: usize,
    affinity_scale: f64,
    base_rate: [f64; 4],
    seed: u64,
) -> Vec<UserModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Normal::new(0.0, affinity_scale.max(0.0)).expect("finite scale");
    (0..num_users)
        .map(|u| UserModel {
            user_id: u as u64,
            affinity: (0..num_topics).map(|_| dist.sample(&mut rng)).collect(),
            base_rate,
        })
        .collect()
}

/// Which segment's topic drives the labels of an interaction at index `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Horizon {
    /// Topic at `t + 1`: the content the user is about to see.
    Next,
    /// Topic at `t` (negative control).
    Current,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionRecord {
    pub user_id: u64,
    pub author_id: u64,
    pub at_seq_index: u64,
    /// Binary labels indexed by [`Task::index`].
    pub labels: [u8; 4],
}

impl InteractionRecord {
    pub fn label(&self, task: Task) -> u8 {
        self.labels[task.index()]
    }
}

/// Per-task probability of a positive label for `user` when the driving
/// segment has topic `topic`.
pub fn label_probability(user: &UserModel, topic: usize, task: Task, task_weight: &[f64; 4]) -> f64 {
    sigmoid(user.base_rate[task.index()] + user.affinity[topic] * task_weight[task.index()])
}

/// Draws the four labels of one interaction.
///
/// Interactions on an author's final segment are rejected: there is no next
/// segment to condition on, whatever the horizon.
pub fn sample_labels<R: Rng>(
    rng: &mut R,
    user: &UserModel,
    stream: &[SegmentEvent],
    at_seq_index: usize,
    horizon: Horizon,
    task_weight: &[f64; 4],
) -> Result<[u8; 4]> {
    if at_seq_index + 1 >= stream.len() {
        return Err(Error::invalid(format!(
            "interaction at seq_index {at_seq_index} has no next segment (stream length {})",
            stream.len()
        )));
    }
    let topic = match horizon {
        Horizon::Next => stream[at_seq_index + 1].true_topic,
        Horizon::Current => stream[at_seq_index].true_topic,
    };
    let mut labels = [0u8; 4];
    for task in Task::ALL {
        let p = label_probability(user, topic, task, task_weight);
        labels[task.index()] = u8::from(rng.gen::<f64>() < p);
    }
    Ok(labels)
}

/// Draws `count` interactions with uniformly random (user, author, index).
/// `min_index` keeps interactions away from the very start of a stream.
pub fn gen_interactions(
    users: &[UserModel],
    streams: &[Vec<SegmentEvent>],
    horizon: Horizon,
    task_weight: &[f64; 4],
    count: usize,
    min_index: usize,
    seed: u64,
) -> Result<Vec<InteractionRecord>> {
    if users.is_empty() || streams.is_empty() {
        return Err(Error::Empty("users or streams"));
    }
    if streams.iter().any(|s| s.len() < min_index + 2) {
        return Err(Error::invalid("every stream needs at least min_index + 2 segments"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let user = &users[rng.gen_range(0..users.len())];
        let stream = &streams[rng.gen_range(0..streams.len())];
        let t = rng.gen_range(min_index..stream.len() - 1);
        let labels = sample_labels(&mut rng, user, stream, t, horizon, task_weight)?;
        out.push(InteractionRecord {
            user_id: user.user_id,
            author_id: stream[0].author_id,
            at_seq_index: t as u64,
            labels,
        });
    }
    Ok(out)
}

/// Everything the generator knows for one corpus configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub topics: TopicParams,
    pub num_authors: usize,
    pub stream_length: usize,
    pub num_users: usize,
    pub num_interactions: usize,
    pub min_interaction_index: usize,
    pub affinity_scale: f64,
    pub base_rate: [f64; 4],
    pub task_weight: [f64; 4],
    pub horizon: Horizon,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            topics: TopicParams {
                noise_sigma: 0.05,
                ..TopicParams::new(16, 16, 0.5)
            },
            num_authors: 200,
            stream_length: 400,
            num_users: 200,
            num_interactions: 40_000,
            min_interaction_index: 8,
            affinity_scale: 1.5,
            base_rate: [-0.5, -1.0, -0.75, -1.5],
            task_weight: [1.0, 0.8, 0.9, 0.7],
            horizon: Horizon::Next,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub topic_model: TopicModel,
    pub users: Vec<UserModel>,
    /// One stream per author, indexed by author id.
    pub streams: Vec<Vec<SegmentEvent>>,
    pub interactions: Vec<InteractionRecord>,
}

impl Corpus {
    pub fn segments(&self) -> impl Iterator<Item = &SegmentEvent> {
        self.streams.iter().flatten()
    }
}

/// Sub-seed for one named part of a generator run.
pub fn sub_seed(seed: u64, part: &str) -> u64 {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(format!("{seed}:{part}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

pub fn gen_corpus(config: &SynthConfig, seed: u64) -> Result<Corpus> {
    let topic_model = gen_topic_model(&config.topics, sub_seed(seed, "topics"))?;
    let streams = (0..config.num_authors)
        .map(|a| {
            gen_author_stream(
                &topic_model,
                a as u64,
                config.stream_length,
                sub_seed(seed, &format!("author/{a}")),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let users = gen_users(
        config.num_users,
        topic_model.num_topics,
        config.affinity_scale,
        config.base_rate,
        sub_seed(seed, "users"),
    );
    let interactions = gen_interactions(
        &users,
        &streams,
        config.horizon,
        &config.task_weight,
        config.num_interactions,
        config.min_interaction_index,
        sub_seed(seed, "interactions"),
    )?;
    Ok(Corpus {
        topic_model,
        users,
        streams,
        interactions,
    })
}

// ---------------------------------------------------------------------------
// Record files
//
// segments:      author_id \t seq_index \t e0,e1,...   (shortest round-trip decimal)
// interactions:  user_id \t author_id \t at_seq_index \t ctr \t wtr \t lvtr \t gtr
// ground truth:  author_id \t seq_index \t true_topic
//
// Lines starting with '#' are headers and ignored on read.
// ---------------------------------------------------------------------------

const SEGMENTS_HEADER: &str = "# author_id\tseq_index\tembedding";
const INTERACTIONS_HEADER: &str = "# user_id\tauthor_id\tat_seq_index\tctr\twtr\tlvtr\tgtr";
const TRUTH_HEADER: &str = "# author_id\tseq_index\ttrue_topic";

fn data_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = fs::File::open(path)?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        out.push((n + 1, line));
    }
    Ok(out)
}

fn field<T: std::str::FromStr>(parts: &[&str], i: usize, line: usize) -> Result<T> {
    parts
        .get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::format(format!("line {line}: bad field {i}")))
}

pub fn write_segments(path: &Path, events: &[&SegmentEvent]) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "{SEGMENTS_HEADER}").unwrap();
    for e in events {
        write!(out, "{}\t{}\t", e.author_id, e.seq_index).unwrap();
        for (i, x) in e.embedding.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{x}").unwrap();
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Segments read back from disk carry no topic; `true_topic` is set to
/// `usize::MAX`.
pub fn read_segments(path: &Path) -> Result<Vec<SegmentEvent>> {
    data_lines(path)?
        .into_iter()
        .map(|(n, line)| {
            let parts: Vec<&str> = line.split('\t').collect();
            if parts.len() != 3 {
                return Err(Error::format(format!("line {n}: expected 3 fields")));
            }
            let embedding = parts[2]
                .split(',')
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::format(format!("line {n}: bad embedding")))?;
            if embedding.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("segment embedding"));
            }
            Ok(SegmentEvent {
                author_id: field(&parts, 0, n)?,
                seq_index: field(&parts, 1, n)?,
                embedding,
                true_topic: usize::MAX,
            })
        })
        .collect()
}

const SEGMENTS_BIN_MAGIC: &[u8; 4] = b"FSEG";

/// Binary alternative: `b"FSEG"`, version u32, count u64, dim u32, then per
/// record author_id u64, seq_index u64, dim × f64 — all little-endian.
pub fn write_segments_binary(path: &Path, events: &[&SegmentEvent]) -> Result<()> {
    let dim = events.first().map(|e| e.embedding.len()).unwrap_or(0);
    let mut buf = Vec::new();
    buf.extend_from_slice(SEGMENTS_BIN_MAGIC);
    buf.extend_from_slice(&1u32.to_le_bytes());
    buf.extend_from_slice(&(events.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(dim as u32).to_le_bytes());
    for e in events {
        if e.embedding.len() != dim {
            return Err(Error::invalid("segments have mixed dimensions"));
        }
        buf.extend_from_slice(&e.author_id.to_le_bytes());
        buf.extend_from_slice(&e.seq_index.to_le_bytes());
        for x in &e.embedding {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_segments_binary(path: &Path) -> Result<Vec<SegmentEvent>> {
    let bytes = fs::read(path)?;
    let bad = || Error::format("truncated segment file");
    if bytes.len() < 20 || &bytes[..4] != SEGMENTS_BIN_MAGIC {
        return Err(Error::format("bad segment file magic"));
    }
    let u64_at = |p: usize| -> Result<u64> {
        Ok(u64::from_le_bytes(bytes.get(p..p + 8).ok_or_else(bad)?.try_into().unwrap()))
    };
    let count = u64_at(8)? as usize;
    let dim = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize;
    let mut pos = 20;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let author_id = u64_at(pos)?;
        let seq_index = u64_at(pos + 8)?;
        pos += 16;
        let mut embedding = Vec::with_capacity(dim);
        for _ in 0..dim {
            embedding.push(f64::from_bits(u64_at(pos)?));
            pos += 8;
        }
        out.push(SegmentEvent {
            author_id,
            seq_index,
            embedding,
            true_topic: usize::MAX,
        });
    }
    if pos != bytes.len() {
        return Err(Error::format("trailing bytes in segment file"));
    }
    Ok(out)
}

pub fn write_interactions(path: &Path, records: &[InteractionRecord]) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "{INTERACTIONS_HEADER}").unwrap();
    for r in records {
        let [a, b, c, d] = r.labels;
        writeln!(
            out,
            "{}\t{}\t{}\t{a}\t{b}\t{c}\t{d}",
            r.user_id, r.author_id, r.at_seq_index
        )
        .unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_interactions(path: &Path) -> Result<Vec<InteractionRecord>> {
    data_lines(path)?
        .into_iter()
        .map(|(n, line)| {
            let parts: Vec<&str> = line.split('\t').collect();
            if parts.len() != 7 {
                return Err(Error::format(format!("line {n}: expected 7 fields")));
            }
            let mut labels = [0u8; 4];
            for (i, l) in labels.iter_mut().enumerate() {
                *l = field(&parts, 3 + i, n)?;
                if *l > 1 {
                    return Err(Error::format(format!("line {n}: label must be 0 or 1")));
                }
            }
            Ok(InteractionRecord {
                user_id: field(&parts, 0, n)?,
                author_id: field(&parts, 1, n)?,
                at_seq_index: field(&parts, 2, n)?,
                labels,
            })
        })
        .collect()
}

pub fn write_ground_truth(path: &Path, events: &[&SegmentEvent]) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "{TRUTH_HEADER}").unwrap();
    for e in events {
        writeln!(out, "{}\t{}\t{}", e.author_id, e.seq_index, e.true_topic).unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

/// Ground-truth rows `(author_id, seq_index, true_topic)`.
pub fn read_ground_truth(path: &Path) -> Result<Vec<(u64, u64, usize)>> {
    data_lines(path)?
        .into_iter()
        .map(|(n, line)| {
            let parts: Vec<&str> = line.split('\t').collect();
            Ok((field(&parts, 0, n)?, field(&parts, 1, n)?, field(&parts, 2, n)?))
        })
        .collect()
}

pub fn write_topic_model(path: &Path, model: &TopicModel) -> Result<()> {
    let json = serde_json::to_string_pretty(model).map_err(|e| Error::format(e.to_string()))?;
    fs::write(path, json)?;
    Ok(())
}

pub fn read_topic_model(path: &Path) -> Result<TopicModel> {
    let raw: TopicModel = serde_json::from_slice(&fs::read(path)?)
        .map_err(|e| Error::format(format!("topic model: {e}")))?;
    TopicModel::new(raw.centroids, raw.transition, raw.self_stay, raw.noise_sigma)
}
