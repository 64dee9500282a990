//! File-backed pipeline stages with a hash manifest.
//!
//! Each stage records the SHA-256 of its inputs, its outputs and the config
//! sections it depends on. A stage whose record still matches is skipped. An
//! input that an upstream stage produced must still carry the hash that stage
//! recorded; anything else is an integrity error.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::hash_json;
use super::{
    accuracy_table, fit_codebook, ranker_samples, split_interactions, split_pairs, train_predictor,
    GroundTruth, PipelineConfig,
};
use crate::error::{Error, Result};
use crate::eval::{
    evaluate_ranker, topic_sid_majority, train_ranker, Arm, ArmOutcome, ArmResult, BayesOracle, EvalReport,
    TrainSchedule,
};
use crate::numerics::checkpoint::hex;
use crate::predictor::{meta_path, PredictorModel};
use crate::quantizer::{quantize_stream, Codebook};
use crate::ranker::{RankSample, RankerConfig, RankerModel};
use crate::seqstore::{AuthorStore, HistoryWindow};
use crate::synth::{self, gen_corpus, Task};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub config_hash: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stages: BTreeMap<String, StageRecord>,
}

impl StageManifest {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Ok(StageManifest::default());
        }
        serde_json::from_slice(&fs::read(path)?).map_err(|e| Error::Integrity(format!("manifest unreadable: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::format(e.to_string()))?;
        fs::write(path, json + "\n")?;
        Ok(())
    }

    fn producer_of(&self, key: &str) -> Option<(&str, &str)> {
        self.stages
            .iter()
            .find_map(|(stage, r)| r.outputs.get(key).map(|h| (stage.as_str(), h.as_str())))
    }
}

pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::Integrity(format!("cannot read {}: {e}", path.display())))?;
    Ok(hex(&Sha256::digest(bytes)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    UpToDate,
}

/// Outcome of a stage body: files written, plus an optional failure that
/// should surface after the manifest is saved.
struct Produced {
    outputs: Vec<PathBuf>,
    deferred: Option<Error>,
}

impl Produced {
    fn ok(outputs: Vec<PathBuf>) -> Self {
        Produced { outputs, deferred: None }
    }
}

pub struct Pipeline {
    pub config: PipelineConfig,
    pub force: bool,
    /// Restricts ranker stages to one arm.
    pub arm: Option<Arm>,
    pub log: Box<dyn Write>,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, force: bool, arm: Option<Arm>) -> Self {
        Pipeline {
            config,
            force,
            arm,
            log: Box::new(std::io::stderr()),
        }
    }

    fn file(&self, key: &str) -> PathBuf {
        self.config.paths.file(key)
    }

    fn key_of(&self, path: &Path) -> String {
        path.strip_prefix(&self.config.paths.work_dir)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/")
    }

    fn manifest_path(&self) -> PathBuf {
        self.file("manifest")
    }

    fn arms(&self) -> Vec<Arm> {
        match self.arm {
            Some(a) => vec![a],
            None => self.config.ranker.arms.clone(),
        }
    }

    fn say(&mut self, msg: &str) {
        let _ = writeln!(self.log, "{msg}");
    }

    /// Hashes the inputs, refusing any that differ from what their producing
    /// stage recorded.
    fn input_hashes(&self, manifest: &StageManifest, inputs: &[PathBuf]) -> Result<BTreeMap<String, String>> {
        let mut out = BTreeMap::new();
        for p in inputs {
            let key = self.key_of(p);
            if !p.exists() {
                return Err(Error::Integrity(format!(
                    "missing input {}; run the stage that produces it first",
                    p.display()
                )));
            }
            let h = file_hash(p)?;
            if let Some((stage, recorded)) = manifest.producer_of(&key) {
                if recorded != h {
                    return Err(Error::Integrity(format!(
                        "{} changed since stage {stage} wrote it (hash {h}, recorded {recorded}); rerun {stage} with --force",
                        p.display()
                    )));
                }
            }
            out.insert(key, h);
        }
        Ok(out)
    }

    fn outputs_match(&self, record: &StageRecord) -> bool {
        record.outputs.iter().all(|(key, h)| {
            let p = self.config.paths.work_dir.join(key);
            file_hash(&p).is_ok_and(|cur| &cur == h)
        })
    }

    fn run_stage(
        &mut self,
        name: &str,
        config_hash: String,
        inputs: &[PathBuf],
        refuse_overwrite: &[PathBuf],
        body: impl FnOnce(&mut Self) -> Result<Produced>,
    ) -> Result<StageStatus> {
        fs::create_dir_all(&self.config.paths.work_dir)?;
        let mut manifest = StageManifest::load(&self.manifest_path())?;
        let inputs = self.input_hashes(&manifest, inputs)?;
        if !self.force {
            if let Some(rec) = manifest.stages.get(name) {
                if rec.config_hash == config_hash && rec.inputs == inputs && self.outputs_match(rec) {
                    self.say(&format!("{name}: up to date"));
                    return Ok(StageStatus::UpToDate);
                }
            }
            if let Some(p) = refuse_overwrite.iter().find(|p| p.exists()) {
                return Err(Error::invalid(format!(
                    "{} already exists and is not this configuration's output; pass --force to overwrite",
                    p.display()
                )));
            }
        }
        let start = Instant::now();
        let produced = body(self)?;
        let mut outputs = BTreeMap::new();
        for p in &produced.outputs {
            outputs.insert(self.key_of(p), file_hash(p)?);
        }
        // A file has one producer; records that also claimed it are stale.
        manifest
            .stages
            .retain(|stage, r| stage == name || !r.outputs.keys().any(|k| outputs.contains_key(k)));
        manifest.stages.insert(
            name.to_string(),
            StageRecord {
                config_hash,
                inputs,
                outputs,
                wall_ms: start.elapsed().as_millis() as u64,
            },
        );
        manifest.save(&self.manifest_path())?;
        self.say(&format!("{name}: done in {:.1}s", start.elapsed().as_secs_f64()));
        match produced.deferred {
            Some(e) => Err(e),
            None => Ok(StageStatus::Ran),
        }
    }

    pub fn gen(&mut self) -> Result<StageStatus> {
        let c = &self.config;
        let hash = hash_json(&("gen", c.seed, &c.synth));
        let outs = ["segments", "interactions", "ground_truth", "topic_model"].map(|k| self.file(k));
        self.run_stage("gen", hash, &[], &outs.clone(), |p| {
            let corpus = gen_corpus(&p.config.synth, p.config.stage_seed("gen"))?;
            let segs: Vec<_> = corpus.segments().collect();
            synth::write_segments_binary(&outs[0], &segs)?;
            synth::write_interactions(&outs[1], &corpus.interactions)?;
            synth::write_ground_truth(&outs[2], &segs)?;
            synth::write_topic_model(&outs[3], &corpus.topic_model)?;
            Ok(Produced::ok(outs.to_vec()))
        })
    }

    pub fn train_quantizer(&mut self) -> Result<StageStatus> {
        let c = &self.config;
        let hash = hash_json(&("train-quantizer", c.seed, &c.quantizer));
        let (seg, cb) = (self.file("segments"), self.file("codebook"));
        self.run_stage("train-quantizer", hash, std::slice::from_ref(&seg), &[], |p| {
            let segments = synth::read_segments_binary(&seg)?;
            let codebook = fit_codebook(&segments, &p.config.quantizer, p.config.stage_seed("train-quantizer"))?;
            codebook.save(&cb)?;
            Ok(Produced::ok(vec![cb.clone()]))
        })
    }

    pub fn quantize(&mut self) -> Result<StageStatus> {
        let hash = hash_json(&("quantize", 1));
        let (seg, cb) = (self.file("segments"), self.file("codebook"));
        let (log, snap) = (self.file("store_log"), self.file("store_snapshot"));
        self.run_stage("quantize", hash, &[seg.clone(), cb.clone()], &[], |_| {
            let segments = synth::read_segments_binary(&seg)?;
            let codebook = Codebook::load(&cb)?;
            let mut sorted: Vec<_> = segments.iter().collect();
            sorted.sort_by_key(|e| (e.author_id, e.seq_index));
            let quantized = quantize_stream(sorted, &codebook)?;
            let writer = BufWriter::new(fs::File::create(&log)?);
            let mut store = AuthorStore::with_log(crate::quantizer::Sid(codebook.size() as u32), Box::new(writer));
            store.ingest(&quantized)?;
            fs::write(&snap, store.snapshot_bytes())?;
            drop(store);
            Ok(Produced::ok(vec![log.clone(), snap.clone()]))
        })
    }

    fn load_store(&self) -> Result<AuthorStore> {
        AuthorStore::from_snapshot(&fs::read(self.file("store_snapshot"))?)
    }

    pub fn train_predictor(&mut self) -> Result<StageStatus> {
        let c = &self.config;
        let hash = hash_json(&("train-predictor", c.seed, &c.seqstore, &c.predictor, c.eval.train_fraction));
        let (snap, cb, pred) = (self.file("store_snapshot"), self.file("codebook"), self.file("predictor"));
        self.run_stage("train-predictor", hash, &[snap, cb.clone()], &[], |p| {
            let codebook = Codebook::load(&cb)?;
            let store = p.load_store()?;
            let (train, _) = split_pairs(&store, p.config.seqstore.l_max, p.config.eval.train_fraction);
            let mut model = PredictorModel::new(p.config.predictor_config()?, Some(&codebook))?;
            let pc = &p.config.predictor;
            let losses = train_predictor(&mut model, &train, pc.steps, pc.batch, p.config.stage_seed("train-predictor"))?;
            p.say(&format!(
                "train-predictor: {} windows, loss {:.4} -> {:.4}",
                train.len(),
                losses.first().copied().unwrap_or(f64::NAN),
                losses.last().copied().unwrap_or(f64::NAN)
            ));
            model.save(&pred, &codebook.content_hash())?;
            Ok(Produced::ok(vec![pred.clone(), meta_path(&pred)]))
        })
    }

    fn load_predictor(&self) -> Result<PredictorModel> {
        let codebook = Codebook::load(&self.file("codebook"))?;
        PredictorModel::load(&self.file("predictor"), &codebook.content_hash())
    }

    fn predictor_inputs(&self) -> Vec<PathBuf> {
        let pred = self.file("predictor");
        vec![
            self.file("store_snapshot"),
            self.file("codebook"),
            meta_path(&pred),
            pred,
            self.file("interactions"),
        ]
    }

    /// Ranker samples for the train or test side of the interaction split.
    fn samples(&self, model: &PredictorModel, store: &AuthorStore, train_side: bool) -> Result<Vec<RankSample>> {
        let interactions = synth::read_interactions(&self.file("interactions"))?;
        let (train, test) = split_interactions(store, &interactions, self.config.eval.train_fraction);
        ranker_samples(model, store, if train_side { &train } else { &test })
    }

    fn ranker_config(&self, k: usize, arm: Arm) -> Result<RankerConfig> {
        Ok(RankerConfig {
            flags: arm.flags(),
            ..self.config.ranker_config(k)?
        })
    }

    fn diverged_path(&self, arm: Arm, k: usize) -> PathBuf {
        self.config.paths.ranker(arm, k).with_extension("diverged")
    }

    pub fn train_ranker(&mut self) -> Result<StageStatus> {
        let c = &self.config;
        let arms = self.arms();
        let hash = hash_json(&("train-ranker", c.seed, &c.ranker, c.eval.train_fraction, c.eval.seeds, &arms));
        let stage = match self.arm {
            Some(a) => format!("train-ranker/{}", a.name()),
            None => "train-ranker".to_string(),
        };
        let inputs = self.predictor_inputs();
        self.run_stage(&stage, hash, &inputs, &[], |p| {
            let predictor = p.load_predictor()?;
            let before = predictor.content_hash();
            let store = p.load_store()?;
            let samples = p.samples(&predictor, &store, true)?;
            fs::create_dir_all(p.file("rankers"))?;
            let mut outputs = Vec::new();
            let mut failure = None;
            for k in 0..p.config.eval.seeds {
                let schedule = TrainSchedule {
                    epochs: p.config.ranker.epochs,
                    batch: p.config.ranker.batch,
                    seed: p.config.stage_seed(&format!("train-ranker/{k}")),
                };
                for &arm in &arms {
                    let path = p.config.paths.ranker(arm, k);
                    let marker = p.diverged_path(arm, k);
                    let _ = fs::remove_file(&marker);
                    match train_ranker(p.ranker_config(k, arm)?, &samples, &schedule) {
                        Ok((model, losses)) => {
                            model.save(&path)?;
                            p.say(&format!(
                                "train-ranker: {} seed {k} final loss {:.4}",
                                arm.label(),
                                losses.last().copied().unwrap_or(f64::NAN)
                            ));
                            outputs.push(meta_path(&path));
                            outputs.push(path);
                        }
                        Err(e @ Error::NonFinite(_)) => {
                            let _ = fs::remove_file(&path);
                            fs::write(&marker, format!("{e}\n"))?;
                            p.say(&format!("train-ranker: {} seed {k} diverged: {e}", arm.label()));
                            outputs.push(marker);
                            failure = Some(e);
                        }
                        Err(e) => return Err(e),
                    }
                }
            }
            if predictor.content_hash() != before {
                return Err(Error::Integrity("predictor changed during ranker training".into()));
            }
            Ok(Produced {
                outputs,
                deferred: failure,
            })
        })
    }

    pub fn evaluate(&mut self) -> Result<StageStatus> {
        let c = &self.config;
        let arms = self.arms();
        let hash = hash_json(&("evaluate", c.seed, &c.eval, &c.seqstore, &arms, c.provenance_hash()));
        let mut inputs = self.predictor_inputs();
        inputs.push(self.file("ground_truth"));
        inputs.push(self.file("topic_model"));
        for k in 0..c.eval.seeds {
            for &arm in &arms {
                let path = c.paths.ranker(arm, k);
                let marker = self.diverged_path(arm, k);
                if marker.exists() && !path.exists() {
                    inputs.push(marker);
                } else {
                    inputs.push(meta_path(&path));
                    inputs.push(path);
                }
            }
        }
        let (txt, tsv) = (self.file("report_text"), self.file("report_tsv"));
        self.run_stage("evaluate", hash, &inputs, &[], |p| {
            let report = p.build_report(&arms)?;
            fs::write(&txt, report.render_text())?;
            fs::write(&tsv, report.render_tsv())?;
            Ok(Produced::ok(vec![txt.clone(), tsv.clone()]))
        })
    }

    fn build_report(&mut self, arms: &[Arm]) -> Result<EvalReport> {
        let predictor = self.load_predictor()?;
        let store = self.load_store()?;
        let truth = GroundTruth::from_rows(synth::read_ground_truth(&self.file("ground_truth"))?);
        let topics = synth::read_topic_model(&self.file("topic_model"))?;
        let mapping = topic_sid_majority(truth.pairs_with(&store), topics.num_topics);
        let oracle = BayesOracle::new(topics.transition.clone(), mapping)?;
        let (_, test_pairs) = split_pairs(&store, self.config.seqstore.l_max, self.config.eval.train_fraction);
        let accuracy = accuracy_table(
            &predictor,
            &test_pairs,
            self.config.eval.max_freq_lookback,
            Some((&oracle, &truth)),
        )?;
        let test = self.samples(&predictor, &store, false)?;
        let mut ablations = Vec::new();
        for k in 0..self.config.eval.seeds {
            let mut results = Vec::new();
            for &arm in arms {
                let path = self.config.paths.ranker(arm, k);
                let marker = self.diverged_path(arm, k);
                let outcome = if !path.exists() && marker.exists() {
                    ArmOutcome::Diverged(fs::read_to_string(&marker)?.trim().to_string())
                } else {
                    let model = RankerModel::load(&path)?;
                    ArmOutcome::Trained {
                        metrics: evaluate_ranker(&model, &test)?,
                        final_loss: f64::NAN,
                        ranker_hash: model.content_hash(),
                    }
                };
                results.push(ArmResult { arm, outcome });
            }
            ablations.push((k as u64, results));
        }
        Ok(EvalReport {
            seed: self.config.seed,
            config_hash: self.config.provenance_hash(),
            accuracy,
            ablations,
        })
    }

    /// Ranks candidate authors for each user with the arm's seed-0 ranker.
    /// `candidates` holds `(user_id, author_id)` pairs; features come from
    /// each author's full stored history.
    pub fn score(&mut self, candidates: &[(u64, u64)], arm: Arm, task: Task) -> Result<Vec<(u64, Vec<(u64, f64)>)>> {
        let predictor = self.load_predictor()?;
        let store = self.load_store()?;
        let ranker = RankerModel::load(&self.config.paths.ranker(arm, 0))?;
        let mut by_user: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
        for &(u, a) in candidates {
            by_user.entry(u).or_default().push(a);
        }
        let mut out = Vec::new();
        for (user, authors) in by_user {
            let windows: Vec<HistoryWindow> = authors
                .iter()
                .map(|&a| store.window(a, predictor.config().l_max))
                .collect();
            let mut samples = Vec::with_capacity(authors.len());
            for (&a, w) in authors.iter().zip(&windows) {
                let o = predictor.predict_next(w)?;
                samples.push(RankSample {
                    user_id: user,
                    author_id: a,
                    history_feature: o.history_encoding,
                    foresight_feature: o.foresight_embedding,
                    labels: [0; 4],
                });
            }
            out.push((user, ranker.score(user, &samples, task)?));
        }
        Ok(out)
    }

    /// The text report written by the evaluate stage.
    pub fn report(&self) -> Result<String> {
        let path = self.file("report_text");
        fs::read_to_string(&path).map_err(|e| {
            Error::Integrity(format!("no report at {} ({e}); run evaluate first", path.display()))
        })
    }

    /// Every stage in order.
    pub fn run_all(&mut self) -> Result<()> {
        self.gen()?;
        self.train_quantizer()?;
        self.quantize()?;
        self.train_predictor()?;
        self.train_ranker()?;
        self.evaluate()?;
        Ok(())
    }
}
