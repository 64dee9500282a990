//! Whole-pipeline configuration and the in-memory steps shared by the CLI
//! stages and the experiment harnesses.
//!
//! Stage seeds are `sub_seed(global_seed, stage_name)`, where `sub_seed` is the
//! first eight bytes (little-endian) of SHA-256 over `"{seed}:{name}"`.

mod config;
pub mod stages;

pub use config::{
    EvalSection, PathsSection, PipelineConfig, PredictorSection, QuantizerSection, RankerSection, SeqstoreSection,
};

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::{
    accuracy, baseline_last, baseline_max_freq, baseline_max_weight, AccuracyRow, BayesOracle,
};
use crate::predictor::{training_pairs, PredictorModel, TrainingPair};
use crate::quantizer::{quantize_stream, train_kmeans, Codebook, KMeansParams, Sid};
use crate::ranker::{build_sample, FeatureFlags, RankSample};
use crate::seqstore::{AuthorStore, HistoryWindow};
use crate::synth::{InteractionRecord, SegmentEvent};

/// Deterministic subsample of at most `max_points` embeddings (every k-th).
pub fn codebook_points(segments: &[SegmentEvent], max_points: usize) -> Vec<Vec<f64>> {
    let stride = if max_points == 0 || segments.len() <= max_points {
        1
    } else {
        segments.len().div_ceil(max_points)
    };
    segments.iter().step_by(stride).map(|e| e.embedding.clone()).collect()
}

pub fn fit_codebook(segments: &[SegmentEvent], q: &QuantizerSection, seed: u64) -> Result<Codebook> {
    let points = codebook_points(segments, q.max_train_points);
    let params = KMeansParams {
        size: q.codebook_size,
        max_iters: q.max_iters,
        tol: q.tol,
        seed,
    };
    train_kmeans(&points, &params)
}

/// Quantizes every segment and loads the ids into a store keyed by author,
/// in `(author, seq_index)` order.
pub fn build_store(segments: &[SegmentEvent], codebook: &Codebook) -> Result<AuthorStore> {
    let mut sorted: Vec<&SegmentEvent> = segments.iter().collect();
    sorted.sort_by_key(|e| (e.author_id, e.seq_index));
    let quantized = quantize_stream(sorted, codebook)?;
    let mut store = AuthorStore::new(Sid(codebook.size() as u32));
    store.ingest(&quantized)?;
    Ok(store)
}

/// First raw index of an author's held-out region.
pub fn cutoff(total_len: u64, train_fraction: f64) -> u64 {
    (total_len as f64 * train_fraction).floor() as u64
}

/// Predictor examples split in time: a pair is held out when its target run
/// starts at or after the author's cutoff.
pub fn split_pairs(store: &AuthorStore, l_max: usize, train_fraction: f64) -> (Vec<TrainingPair>, Vec<TrainingPair>) {
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for author in store.authors() {
        let seq = store.sequence(author).expect("listed author");
        let cut = cutoff(seq.total_len(), train_fraction);
        for p in training_pairs(author, seq, l_max, store.pad()) {
            if p.target_start < cut {
                train.push(p);
            } else {
                test.push(p);
            }
        }
    }
    (train, test)
}

/// Interactions split with the same per-author cutoff: training keeps those
/// whose label segment lies before it, evaluation those at or after it.
pub fn split_interactions(
    store: &AuthorStore,
    interactions: &[InteractionRecord],
    train_fraction: f64,
) -> (Vec<InteractionRecord>, Vec<InteractionRecord>) {
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for r in interactions {
        let total = store.sequence(r.author_id).map_or(0, |s| s.total_len());
        let cut = cutoff(total, train_fraction);
        if r.at_seq_index + 1 < cut {
            train.push(r.clone());
        } else if r.at_seq_index >= cut {
            test.push(r.clone());
        }
    }
    (train, test)
}

/// Minibatch Adam training over shuffled epochs; returns per-step losses.
pub fn train_predictor(
    model: &mut PredictorModel,
    pairs: &[TrainingPair],
    steps: usize,
    batch: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if pairs.is_empty() {
        return Err(Error::Empty("predictor training set"));
    }
    if batch == 0 {
        return Err(Error::Config("predictor batch must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;
    let mut losses = Vec::with_capacity(steps);
    let mut b = Vec::with_capacity(batch);
    for _ in 0..steps {
        b.clear();
        for _ in 0..batch.min(pairs.len()) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let p = &pairs[order[cursor]];
            b.push((p.window.clone(), p.target));
            cursor += 1;
        }
        let loss = model.train_step(&b)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite("predictor loss"));
        }
        losses.push(loss);
    }
    Ok(losses)
}

const INFER_CHUNK: usize = 256;

pub fn predict_windows(model: &PredictorModel, windows: &[&HistoryWindow]) -> Result<Vec<crate::predictor::ForesightOutput>> {
    let mut out = Vec::with_capacity(windows.len());
    for chunk in windows.chunks(INFER_CHUNK) {
        out.extend(model.predict_batch(chunk)?);
    }
    Ok(out)
}

/// Hidden topic of every segment, by author.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    topics: BTreeMap<u64, Vec<usize>>,
}

impl GroundTruth {
    pub fn from_events(segments: &[SegmentEvent]) -> Self {
        GroundTruth::from_rows(segments.iter().map(|e| (e.author_id, e.seq_index, e.true_topic)))
    }

    pub fn from_rows<I: IntoIterator<Item = (u64, u64, usize)>>(rows: I) -> Self {
        let mut by: BTreeMap<u64, Vec<(u64, usize)>> = BTreeMap::new();
        for (a, i, t) in rows {
            by.entry(a).or_default().push((i, t));
        }
        let topics = by
            .into_iter()
            .map(|(a, mut v)| {
                v.sort_unstable();
                (a, v.into_iter().map(|(_, t)| t).collect())
            })
            .collect();
        GroundTruth { topics }
    }

    pub fn topic(&self, author: u64, seq_index: u64) -> Option<usize> {
        self.topics.get(&author)?.get(seq_index as usize).copied()
    }

    pub fn pairs_with(&self, store: &AuthorStore) -> Vec<(usize, Sid)> {
        let mut out = Vec::new();
        for author in store.authors() {
            let seq = store.sequence(author).expect("listed author");
            let mut idx = 0u64;
            for (&s, &f) in seq.distinct().iter().zip(seq.freq()) {
                for _ in 0..f {
                    if let Some(t) = self.topic(author, idx) {
                        out.push((t, s));
                    }
                    idx += 1;
                }
            }
        }
        out
    }
}

/// Accuracy of the model, the three rule baselines and (given ground truth)
/// the Bayes oracle on held-out pairs, in that order.
pub fn accuracy_table(
    model: &PredictorModel,
    test: &[TrainingPair],
    max_freq_lookback: usize,
    oracle: Option<(&BayesOracle, &GroundTruth)>,
) -> Result<Vec<AccuracyRow>> {
    let targets: Vec<Sid> = test.iter().map(|p| p.target).collect();
    let windows: Vec<&HistoryWindow> = test.iter().map(|p| &p.window).collect();
    let model_pred: Vec<Sid> = predict_windows(model, &windows)?.into_iter().map(|o| o.predicted).collect();
    let last = windows.iter().map(|w| baseline_last(w)).collect::<Result<Vec<_>>>()?;
    let freq = windows
        .iter()
        .map(|w| baseline_max_freq(w, max_freq_lookback))
        .collect::<Result<Vec<_>>>()?;
    let weight = windows.iter().map(|w| baseline_max_weight(w)).collect::<Result<Vec<_>>>()?;
    let mut rows = vec![
        AccuracyRow {
            strategy: "model".into(),
            accuracy: accuracy(&model_pred, &targets)?,
        },
        AccuracyRow {
            strategy: "last".into(),
            accuracy: accuracy(&last, &targets)?,
        },
        AccuracyRow {
            strategy: "max_freq".into(),
            accuracy: accuracy(&freq, &targets)?,
        },
        AccuracyRow {
            strategy: "max_weight".into(),
            accuracy: accuracy(&weight, &targets)?,
        },
    ];
    if let Some((oracle, truth)) = oracle {
        let mut pred = Vec::with_capacity(test.len());
        for p in test {
            let topic = truth
                .topic(p.author_id, p.target_start - 1)
                .ok_or_else(|| Error::invalid(format!("no ground truth for author {}", p.author_id)))?;
            pred.push(oracle.predict(topic)?);
        }
        rows.push(AccuracyRow {
            strategy: "bayes_oracle".into(),
            accuracy: accuracy(&pred, &targets)?,
        });
    }
    Ok(rows)
}

/// Ranker samples carrying both predictor features for the window that ends
/// at each interaction's segment. Arms switch features off through their
/// ranker flags.
pub fn ranker_samples(model: &PredictorModel, store: &AuthorStore, interactions: &[InteractionRecord]) -> Result<Vec<RankSample>> {
    let l_max = model.config().l_max;
    let windows: Vec<HistoryWindow> = interactions
        .iter()
        .map(|r| {
            let seq = store
                .sequence(r.author_id)
                .ok_or_else(|| Error::invalid(format!("interaction names unknown author {}", r.author_id)))?;
            Ok(HistoryWindow::prefix(seq, r.at_seq_index + 1, l_max, store.pad()))
        })
        .collect::<Result<_>>()?;
    let refs: Vec<&HistoryWindow> = windows.iter().collect();
    let outputs = predict_windows(model, &refs)?;
    Ok(interactions
        .iter()
        .zip(&outputs)
        .map(|(r, o)| build_sample(r, o, FeatureFlags::FORESIGHT))
        .collect())
}
