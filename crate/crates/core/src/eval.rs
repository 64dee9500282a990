//! Rule baselines, ranking metrics, the ablation runner and report output.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantizer::Sid;
use crate::ranker::{FeatureFlags, RankSample, RankerConfig, RankerModel};
use crate::seqstore::{decompress, HistoryWindow};
use crate::synth::Task;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

fn nonempty(w: &HistoryWindow) -> Result<()> {
    if w.valid_len == 0 {
        Err(Error::Empty("history window"))
    } else {
        Ok(())
    }
}

/// The id of the final run.
pub fn baseline_last(w: &HistoryWindow) -> Result<Sid> {
    nonempty(w)?;
    Ok(*w.valid_sids().last().expect("non-empty"))
}

/// Most frequent id among the last `l_raw` raw segments; on a tie the id seen
/// most recently wins.
pub fn baseline_max_freq(w: &HistoryWindow, l_raw: usize) -> Result<Sid> {
    nonempty(w)?;
    if l_raw == 0 {
        return Err(Error::Empty("raw lookback"));
    }
    let raw = decompress(&w.as_compressed()?)?;
    let tail = &raw[raw.len().saturating_sub(l_raw)..];
    // id -> (count, position of latest occurrence)
    let mut stats: BTreeMap<Sid, (u64, usize)> = BTreeMap::new();
    for (i, &s) in tail.iter().enumerate() {
        let e = stats.entry(s).or_insert((0, 0));
        e.0 += 1;
        e.1 = i;
    }
    Ok(pick_max(stats))
}

/// Id with the largest summed run length in the window; on a tie the id whose
/// latest run is most recent wins.
pub fn baseline_max_weight(w: &HistoryWindow) -> Result<Sid> {
    nonempty(w)?;
    let mut stats: BTreeMap<Sid, (u64, usize)> = BTreeMap::new();
    for (i, (&s, &f)) in w.valid_sids().iter().zip(w.valid_freqs()).enumerate() {
        let e = stats.entry(s).or_insert((0, 0));
        e.0 += u64::from(f);
        e.1 = i;
    }
    Ok(pick_max(stats))
}

fn pick_max(stats: BTreeMap<Sid, (u64, usize)>) -> Sid {
    stats
        .into_iter()
        .max_by_key(|&(_, (count, last))| (count, last))
        .map(|(s, _)| s)
        .expect("non-empty window")
}

/// Upper-bound predictor that knows the hidden topic of the last run.
///
/// Targets are next-run ids, so the oracle picks the most likely topic other
/// than the current one and reports that topic's majority id.
#[derive(Debug, Clone, PartialEq)]
pub struct BayesOracle {
    transition: Vec<Vec<f64>>,
    topic_to_sid: Vec<Sid>,
}

impl BayesOracle {
    pub fn new(transition: Vec<Vec<f64>>, topic_to_sid: Vec<Sid>) -> Result<Self> {
        let k = transition.len();
        if k < 2 || transition.iter().any(|r| r.len() != k) || topic_to_sid.len() != k {
            return Err(Error::invalid("oracle needs a square transition and one id per topic"));
        }
        Ok(BayesOracle {
            transition,
            topic_to_sid,
        })
    }

    /// Most likely next topic different from `current`, lowest index on ties.
    pub fn next_topic(&self, current: usize) -> Result<usize> {
        let row = self.transition.get(current).ok_or(Error::OutOfRange {
            what: "topic",
            index: current,
            size: self.transition.len(),
        })?;
        let mut best: Option<usize> = None;
        for (j, &p) in row.iter().enumerate() {
            if j != current && best.is_none_or(|b| p > row[b]) {
                best = Some(j);
            }
        }
        Ok(best.expect("at least two topics"))
    }

    pub fn predict(&self, current_topic: usize) -> Result<Sid> {
        Ok(self.topic_to_sid[self.next_topic(current_topic)?])
    }

    /// Probability that the oracle's pick is the next topic, given `current`.
    pub fn hit_probability(&self, current: usize) -> Result<f64> {
        let j = self.next_topic(current)?;
        let row = &self.transition[current];
        Ok(row[j] / (1.0 - row[current]))
    }
}

/// Majority id of each topic from `(topic, sid)` co-occurrences; a topic that
/// never occurs maps to id 0.
pub fn topic_sid_majority<I: IntoIterator<Item = (usize, Sid)>>(pairs: I, num_topics: usize) -> Vec<Sid> {
    let mut counts: Vec<BTreeMap<Sid, u64>> = vec![BTreeMap::new(); num_topics];
    for (t, s) in pairs {
        if t < num_topics {
            *counts[t].entry(s).or_insert(0) += 1;
        }
    }
    counts
        .into_iter()
        .map(|c| {
            c.into_iter()
                .fold(None, |best: Option<(Sid, u64)>, (s, n)| match best {
                    Some((_, bn)) if bn >= n => best,
                    _ => Some((s, n)),
                })
                .map_or(Sid(0), |(s, _)| s)
        })
        .collect()
}

pub fn accuracy(predictions: &[Sid], targets: &[Sid]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::ShapeMismatch {
            op: "accuracy",
            left: vec![predictions.len()],
            right: vec![targets.len()],
        });
    }
    if predictions.is_empty() {
        return Err(Error::Empty("accuracy input"));
    }
    let hits = predictions.iter().zip(targets).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / predictions.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredExample {
    pub user_id: u64,
    pub score: f64,
    pub label: u8,
    pub task: Task,
}

/// Area under the ROC curve by rank sum with mid-ranks for ties. `None` when
/// either class is absent.
pub fn auc(examples: &[ScoredExample]) -> Option<f64> {
    let pos = examples.iter().filter(|e| e.label == 1).count();
    let neg = examples.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.sort_by(|&a, &b| examples[a].score.total_cmp(&examples[b].score));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && examples[order[j + 1]].score == examples[order[i]].score {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let mid = (i + j + 2) as f64 / 2.0;
        let tied_pos = order[i..=j].iter().filter(|&&k| examples[k].label == 1).count();
        rank_sum += mid * tied_pos as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Per-user AUC averaged with weights equal to each user's example count.
/// Users with one class only are left out of both sums.
pub fn gauc(examples: &[ScoredExample]) -> Option<f64> {
    let mut by_user: BTreeMap<u64, Vec<ScoredExample>> = BTreeMap::new();
    for e in examples {
        by_user.entry(e.user_id).or_default().push(*e);
    }
    let (mut num, mut den) = (0.0, 0.0);
    for group in by_user.values() {
        if let Some(a) = auc(group) {
            num += a * group.len() as f64;
            den += group.len() as f64;
        }
    }
    (den > 0.0).then(|| num / den)
}

/// Ablation arms in reporting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Base,
    History,
    Foresight,
}

impl Arm {
    pub const ALL: [Arm; 3] = [Arm::Base, Arm::History, Arm::Foresight];

    pub fn name(self) -> &'static str {
        match self {
            Arm::Base => "base",
            Arm::History => "history",
            Arm::Foresight => "foresight",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Arm::Base => "base",
            Arm::History => "+history",
            Arm::Foresight => "+history+foresight",
        }
    }

    pub fn parse(s: &str) -> Option<Arm> {
        Arm::ALL.into_iter().find(|a| a.name() == s)
    }

    pub fn flags(self) -> FeatureFlags {
        match self {
            Arm::Base => FeatureFlags::BASE,
            Arm::History => FeatureFlags::HISTORY,
            Arm::Foresight => FeatureFlags::FORESIGHT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub epochs: usize,
    pub batch: usize,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
}

/// Trains a fresh ranker. Every arm given the same schedule sees the samples
/// in the same order.
pub fn train_ranker(config: RankerConfig, samples: &[RankSample], schedule: &TrainSchedule) -> Result<(RankerModel, Vec<f64>)> {
    if samples.is_empty() {
        return Err(Error::Empty("ranker training set"));
    }
    if schedule.batch == 0 {
        return Err(Error::Config("ranker batch must be positive".into()));
    }
    let mut model = RankerModel::new(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut losses = Vec::new();
    let mut batch = Vec::with_capacity(schedule.batch);
    for _ in 0..schedule.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(schedule.batch) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| samples[i].clone()));
            let loss = model.train_step(&batch)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite("ranker loss"));
            }
            losses.push(loss);
        }
    }
    Ok((model, losses))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskMetrics {
    pub task: Task,
    pub auc: Option<f64>,
    pub gauc: Option<f64>,
}

pub fn evaluate_ranker(model: &RankerModel, samples: &[RankSample]) -> Result<Vec<TaskMetrics>> {
    let mut scored: Vec<Vec<ScoredExample>> = vec![Vec::with_capacity(samples.len()); model.config().tasks.len()];
    for chunk in samples.chunks(512) {
        let refs: Vec<&RankSample> = chunk.iter().collect();
        let probs = model.forward(&refs)?;
        for (s, p) in chunk.iter().zip(probs) {
            for (col, &task) in model.config().tasks.iter().enumerate() {
                scored[col].push(ScoredExample {
                    user_id: s.user_id,
                    score: p[col],
                    label: s.labels[task.index()],
                    task,
                });
            }
        }
    }
    Ok(model
        .config()
        .tasks
        .iter()
        .zip(&scored)
        .map(|(&task, ex)| TaskMetrics {
            task,
            auc: auc(ex),
            gauc: gauc(ex),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArmOutcome {
    Trained {
        metrics: Vec<TaskMetrics>,
        final_loss: f64,
        ranker_hash: String,
    },
    Diverged(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmResult {
    pub arm: Arm,
    pub outcome: ArmOutcome,
}

impl ArmResult {
    pub fn metric(&self, task: Task) -> Option<TaskMetrics> {
        match &self.outcome {
            ArmOutcome::Trained { metrics, .. } => metrics.iter().find(|m| m.task == task).copied(),
            ArmOutcome::Diverged(_) => None,
        }
    }
}

/// Trains one ranker per arm on identical data, order and initialisation
/// seed, then scores each on `test`. A diverging arm is reported and the
/// others still run. Arms train on separate threads.
pub fn run_ablation(
    base: &RankerConfig,
    train: &[RankSample],
    test: &[RankSample],
    schedule: &TrainSchedule,
    arms: &[Arm],
) -> Vec<ArmResult> {
    let run = |arm: Arm| -> ArmResult {
        let config = RankerConfig {
            flags: arm.flags(),
            ..base.clone()
        };
        let outcome = train_ranker(config, train, schedule).and_then(|(model, losses)| {
            let metrics = evaluate_ranker(&model, test)?;
            Ok(ArmOutcome::Trained {
                metrics,
                final_loss: losses.last().copied().unwrap_or(f64::NAN),
                ranker_hash: model.content_hash(),
            })
        });
        ArmResult {
            arm,
            outcome: outcome.unwrap_or_else(|e| ArmOutcome::Diverged(e.to_string())),
        }
    };
    std::thread::scope(|s| {
        let handles: Vec<_> = arms.iter().map(|&a| s.spawn(move || run(a))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("ablation arm thread panicked"))
            .collect()
    })
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

/// Sample standard deviation (n − 1 denominator).
pub fn sample_std(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    Some((values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyRow {
    pub strategy: String,
    pub accuracy: f64,
}

/// Everything a run reports, with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub seed: u64,
    pub config_hash: String,
    pub accuracy: Vec<AccuracyRow>,
    /// One ablation per ranker seed.
    pub ablations: Vec<(u64, Vec<ArmResult>)>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.6}"))
}

fn fmt_delta(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:+.6}"))
}

impl EvalReport {
    fn tasks(&self) -> Vec<Task> {
        let mut tasks = Vec::new();
        for (_, arms) in &self.ablations {
            for a in arms {
                if let ArmOutcome::Trained { metrics, .. } = &a.outcome {
                    for m in metrics {
                        if !tasks.contains(&m.task) {
                            tasks.push(m.task);
                        }
                    }
                }
            }
        }
        tasks
    }

    fn arms(&self) -> Vec<Arm> {
        let mut arms: Vec<Arm> = self.ablations.iter().flat_map(|(_, r)| r.iter().map(|a| a.arm)).collect();
        arms.sort();
        arms.dedup();
        arms
    }

    /// Metric values of `arm` on `task` across seeds, skipping diverged or
    /// undefined entries.
    pub fn values(&self, arm: Arm, task: Task, gauc: bool) -> Vec<f64> {
        self.ablations
            .iter()
            .filter_map(|(_, results)| {
                let m = results.iter().find(|r| r.arm == arm)?.metric(task)?;
                if gauc {
                    m.gauc
                } else {
                    m.auc
                }
            })
            .collect()
    }

    /// Per-seed differences `arm − reference` where both are defined.
    pub fn deltas(&self, arm: Arm, reference: Arm, task: Task, gauc: bool) -> Vec<f64> {
        self.ablations
            .iter()
            .filter_map(|(_, results)| {
                let get = |a: Arm| {
                    let m = results.iter().find(|r| r.arm == a)?.metric(task)?;
                    if gauc {
                        m.gauc
                    } else {
                        m.auc
                    }
                };
                Some(get(arm)? - get(reference)?)
            })
            .collect()
    }

    fn diverged(&self) -> Vec<(u64, Arm, String)> {
        self.ablations
            .iter()
            .flat_map(|(seed, r)| {
                r.iter().filter_map(move |a| match &a.outcome {
                    ArmOutcome::Diverged(msg) => Some((*seed, a.arm, msg.clone())),
                    ArmOutcome::Trained { .. } => None,
                })
            })
            .collect()
    }

    /// Aligned plain-text tables.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "seed {}  config {}", self.seed, self.config_hash);
        let _ = writeln!(out);
        let _ = writeln!(out, "Next-id prediction accuracy");
        let width = self.accuracy.iter().map(|r| r.strategy.len()).max().unwrap_or(8).max(8);
        let _ = writeln!(out, "  {:<width$}  {:>9}", "strategy", "accuracy");
        for r in &self.accuracy {
            let _ = writeln!(out, "  {:<width$}  {:>8.4}%", r.strategy, 100.0 * r.accuracy);
        }
        let _ = writeln!(out);
        let seeds = self.ablations.len();
        let _ = writeln!(out, "Ranking ablation (mean over {seeds} seed(s), delta vs base)");
        let _ = writeln!(
            out,
            "  {:<20} {:<5} {:>10} {:>11} {:>10} {:>11}",
            "arm", "task", "auc", "d_auc", "gauc", "d_gauc"
        );
        for arm in self.arms() {
            for task in self.tasks() {
                let mean = |v: Vec<f64>| mean_std(&v).map(|m| m.0);
                let auc = mean(self.values(arm, task, false));
                let gauc = mean(self.values(arm, task, true));
                let (da, dg) = if arm == Arm::Base {
                    (None, None)
                } else {
                    (
                        mean(self.deltas(arm, Arm::Base, task, false)),
                        mean(self.deltas(arm, Arm::Base, task, true)),
                    )
                };
                let _ = writeln!(
                    out,
                    "  {:<20} {:<5} {:>10} {:>11} {:>10} {:>11}",
                    arm.label(),
                    task.name(),
                    fmt_opt(auc),
                    if arm == Arm::Base { "-".into() } else { fmt_delta(da) },
                    fmt_opt(gauc),
                    if arm == Arm::Base { "-".into() } else { fmt_delta(dg) },
                );
            }
        }
        for (seed, arm, msg) in self.diverged() {
            let _ = writeln!(out, "  diverged: seed {seed} arm {} ({msg})", arm.label());
        }
        out
    }

    /// Tab-separated form with a schema header; one metric per line.
    pub fn render_tsv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# foresight-eval-report\tschema={REPORT_SCHEMA_VERSION}");
        let _ = writeln!(out, "# seed={}\tconfig_hash={}", self.seed, self.config_hash);
        let _ = writeln!(out, "section\tseed\tname\ttask\tmetric\tvalue");
        for r in &self.accuracy {
            let _ = writeln!(out, "accuracy\t-\t{}\t-\taccuracy\t{:.6}", r.strategy, r.accuracy);
        }
        for (seed, results) in &self.ablations {
            for r in results {
                match &r.outcome {
                    ArmOutcome::Trained {
                        metrics,
                        final_loss,
                        ranker_hash,
                    } => {
                        for m in metrics {
                            let t = m.task.name();
                            let _ = writeln!(out, "arm\t{seed}\t{}\t{t}\tauc\t{}", r.arm.name(), fmt_opt(m.auc));
                            let _ = writeln!(out, "arm\t{seed}\t{}\t{t}\tgauc\t{}", r.arm.name(), fmt_opt(m.gauc));
                        }
                        let _ = writeln!(out, "arm\t{seed}\t{}\t-\tfinal_loss\t{final_loss:.6}", r.arm.name());
                        let _ = writeln!(out, "arm\t{seed}\t{}\t-\tranker_hash\t{ranker_hash}", r.arm.name());
                    }
                    ArmOutcome::Diverged(msg) => {
                        let _ = writeln!(out, "arm\t{seed}\t{}\t-\tdiverged\t{}", r.arm.name(), msg.replace('\t', " "));
                    }
                }
            }
        }
        out
    }
}
