use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::Arm;
use crate::numerics::checkpoint::hex;
use crate::predictor::PredictorConfig;
use crate::ranker::RankerConfig;
use crate::synth::{sub_seed, Horizon, SynthConfig, TopicParams};

pub const SEED_ENV: &str = "FORESIGHT_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizerSection {
    pub codebook_size: usize,
    pub max_iters: usize,
    pub tol: f64,
    /// Upper bound on embeddings used for K-Means (0 = all).
    pub max_train_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeqstoreSection {
    pub l_max: usize,
    pub f_max: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorSection {
    pub d_m: usize,
    pub l_enc: usize,
    pub l_dec: usize,
    pub heads: usize,
    pub ffn_hidden: usize,
    pub lr: f64,
    pub steps: usize,
    pub batch: usize,
    #[serde(default)]
    pub rms_norm: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankerSection {
    pub experts: usize,
    pub expert_hidden: usize,
    pub expert_out: usize,
    pub tower_hidden: usize,
    pub id_dim: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    /// Feature-flag settings to train, one ranker each.
    pub arms: Vec<Arm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub train_fraction: f64,
    pub test_fraction: f64,
    /// Number of ranker seeds per arm.
    pub seeds: usize,
    /// Raw-segment lookback of the max-frequency baseline.
    pub max_freq_lookback: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    pub work_dir: PathBuf,
}

/// Every file the pipeline reads or writes, relative to `work_dir`.
pub const FILES: &[(&str, &str)] = &[
    ("segments", "segments.fseg"),
    ("interactions", "interactions.tsv"),
    ("ground_truth", "ground_truth.tsv"),
    ("topic_model", "topic_model.json"),
    ("codebook", "codebook.fscb"),
    ("store_log", "sid_log.tsv"),
    ("store_snapshot", "sid_store.fsss"),
    ("predictor", "predictor.fsck"),
    ("rankers", "rankers"),
    ("report_text", "report.txt"),
    ("report_tsv", "report.tsv"),
    ("manifest", "manifest.json"),
];

impl PathsSection {
    pub fn file(&self, key: &str) -> PathBuf {
        let name = FILES
            .iter()
            .find(|(k, _)| *k == key)
            .unwrap_or_else(|| panic!("unknown pipeline file key {key}"))
            .1;
        self.work_dir.join(name)
    }

    pub fn ranker(&self, arm: Arm, seed_index: usize) -> PathBuf {
        self.file("rankers").join(format!("{}-{seed_index}.fsck", arm.name()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub synth: SynthConfig,
    pub quantizer: QuantizerSection,
    pub seqstore: SeqstoreSection,
    pub predictor: PredictorSection,
    pub ranker: RankerSection,
    pub eval: EvalSection,
    pub paths: PathsSection,
}

impl PipelineConfig {
    /// Small end-to-end configuration that finishes in about a minute.
    pub fn demo(work_dir: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            seed: 7,
            synth: SynthConfig {
                topics: TopicParams {
                    noise_sigma: 0.05,
                    ..TopicParams::new(16, 16, 0.5)
                },
                num_authors: 100,
                stream_length: 200,
                num_users: 100,
                num_interactions: 8000,
                min_interaction_index: 8,
                affinity_scale: 1.5,
                base_rate: [-0.5, -1.0, -0.75, -1.5],
                task_weight: [1.0, 0.8, 0.9, 0.7],
                horizon: Horizon::Next,
            },
            quantizer: QuantizerSection {
                codebook_size: 16,
                max_iters: 100,
                tol: 1e-7,
                max_train_points: 10_000,
            },
            seqstore: SeqstoreSection { l_max: 16, f_max: 512 },
            predictor: PredictorSection {
                d_m: 32,
                l_enc: 2,
                l_dec: 2,
                heads: 1,
                ffn_hidden: 64,
                lr: 3e-3,
                steps: 300,
                batch: 32,
                rms_norm: false,
            },
            ranker: RankerSection {
                experts: 4,
                expert_hidden: 32,
                expert_out: 16,
                tower_hidden: 16,
                id_dim: 16,
                lr: 3e-3,
                epochs: 2,
                batch: 64,
                arms: Arm::ALL.to_vec(),
            },
            eval: EvalSection {
                train_fraction: 0.8,
                test_fraction: 0.2,
                seeds: 2,
                max_freq_lookback: 32,
            },
            paths: PathsSection {
                work_dir: work_dir.into(),
            },
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file and applies the `FORESIGHT_SEED` override.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = PipelineConfig::from_toml_str(&text)?;
        if let Ok(v) = std::env::var(SEED_ENV) {
            cfg.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV} is not an unsigned integer: {v:?}")))?;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |m: &str| Err(Error::Config(m.to_string()));
        let e = &self.eval;
        if !(e.train_fraction > 0.0 && e.test_fraction > 0.0) {
            return cfg_err("split fractions must be positive");
        }
        if (e.train_fraction + e.test_fraction - 1.0).abs() > 1e-9 {
            return cfg_err("train_fraction + test_fraction must equal 1");
        }
        if e.seeds == 0 || e.max_freq_lookback == 0 {
            return cfg_err("eval seeds and max_freq_lookback must be positive");
        }
        if self.quantizer.codebook_size < 2 || self.quantizer.max_iters == 0 {
            return cfg_err("codebook_size must be ≥ 2 and max_iters ≥ 1");
        }
        if self.predictor.steps == 0 || self.predictor.batch == 0 {
            return cfg_err("predictor steps and batch must be positive");
        }
        if self.ranker.epochs == 0 || self.ranker.batch == 0 || self.ranker.arms.is_empty() {
            return cfg_err("ranker epochs, batch and arms must be non-empty");
        }
        if self.synth.num_authors == 0 || self.synth.stream_length < 2 || self.synth.num_users == 0 {
            return cfg_err("synth needs authors, users and streams of length ≥ 2");
        }
        let mut names: Vec<&str> = FILES.iter().map(|(_, n)| *n).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != FILES.len() {
            return cfg_err("pipeline paths must be distinct");
        }
        self.predictor_config()?.validate()?;
        self.ranker_config(0)?.validate()?;
        Ok(())
    }

    pub fn stage_seed(&self, stage: &str) -> u64 {
        sub_seed(self.seed, stage)
    }

    pub fn predictor_config(&self) -> Result<PredictorConfig> {
        let p = &self.predictor;
        Ok(PredictorConfig {
            d_m: p.d_m,
            l_enc: p.l_enc,
            l_dec: p.l_dec,
            heads: p.heads,
            ffn_hidden: p.ffn_hidden,
            l_max: self.seqstore.l_max,
            num_codes: self.quantizer.codebook_size,
            f_max: self.seqstore.f_max,
            rms_norm: p.rms_norm,
            zero_output_init: true,
            lr: p.lr,
            seed: self.stage_seed("predictor-init"),
        })
    }

    /// Ranker configuration for ranker seed `seed_index`; flags are set per arm.
    pub fn ranker_config(&self, seed_index: usize) -> Result<RankerConfig> {
        let r = &self.ranker;
        Ok(RankerConfig {
            num_experts: r.experts,
            expert_hidden: r.expert_hidden,
            expert_out: r.expert_out,
            tower_hidden: r.tower_hidden,
            id_dim: r.id_dim,
            lr: r.lr,
            ..RankerConfig::new(
                self.synth.num_users,
                self.synth.num_authors,
                self.predictor.d_m,
                self.stage_seed(&format!("ranker-init/{seed_index}")),
            )
        })
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hash_json(self)
    }

    /// Hash of everything except file locations, so the same experiment run
    /// in two directories reports the same provenance.
    pub fn provenance_hash(&self) -> String {
        hash_json(&(self.seed, &self.synth, &self.quantizer, &self.seqstore, &self.predictor, &self.ranker, &self.eval))
    }
}

pub(crate) fn hash_json<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config types serialize");
    hex(&Sha256::digest(json))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demo_roundtrips_through_toml() {
        let cfg = PipelineConfig::demo("run");
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(PipelineConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn bad_split_is_a_config_error() {
        let mut cfg = PipelineConfig::demo("run");
        cfg.eval.test_fraction = 0.3;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let text = PipelineConfig::demo("run").to_toml_string().unwrap() + "\nbogus = 1\n";
        assert!(matches!(PipelineConfig::from_toml_str(&text), Err(Error::Config(_))));
    }

    #[test]
    fn stage_seeds_differ() {
        let cfg = PipelineConfig::demo("run");
        assert_ne!(cfg.stage_seed("gen"), cfg.stage_seed("train-predictor"));
        assert_eq!(cfg.stage_seed("gen"), sub_seed(cfg.seed, "gen"));
    }
}
