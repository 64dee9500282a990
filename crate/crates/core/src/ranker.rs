//! Multi-gate mixture-of-experts ranking model.
//!
//! Input is the concatenation of a user id embedding, an author id embedding,
//! the pooled history encoding and the foresight embedding. The two predictor
//! features are plain copied numbers; nothing the ranker does can reach the
//! predictor's parameters. Disabled features are fed as zeros so every arm of
//! an ablation shares one input width and one initialisation.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{checkpoint, glorot, linear, normal_tensor, Adam, ParamId, ParamStore, Tape, Tensor, Var};
use crate::predictor::{meta_path, ForesightOutput};
use crate::synth::{InteractionRecord, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureFlags {
    pub use_history: bool,
    pub use_foresight: bool,
}

impl FeatureFlags {
    pub const BASE: FeatureFlags = FeatureFlags {
        use_history: false,
        use_foresight: false,
    };
    pub const HISTORY: FeatureFlags = FeatureFlags {
        use_history: true,
        use_foresight: false,
    };
    pub const FORESIGHT: FeatureFlags = FeatureFlags {
        use_history: true,
        use_foresight: true,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankerConfig {
    pub tasks: Vec<Task>,
    pub num_experts: usize,
    pub expert_hidden: usize,
    pub expert_out: usize,
    pub tower_hidden: usize,
    pub id_dim: usize,
    /// Width of each predictor feature.
    pub feature_dim: usize,
    pub num_users: usize,
    pub num_authors: usize,
    pub flags: FeatureFlags,
    pub eps: f64,
    pub lr: f64,
    pub seed: u64,
}

impl RankerConfig {
    pub fn new(num_users: usize, num_authors: usize, feature_dim: usize, seed: u64) -> Self {
        RankerConfig {
            tasks: Task::ALL.to_vec(),
            num_experts: 4,
            expert_hidden: 32,
            expert_out: 16,
            tower_hidden: 16,
            id_dim: 16,
            feature_dim,
            num_users,
            num_authors,
            flags: FeatureFlags::FORESIGHT,
            eps: 1e-7,
            lr: 1e-3,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() {
            return Err(Error::Config("ranker needs at least one task".into()));
        }
        if self.num_experts == 0 {
            return Err(Error::Config("ranker needs at least one expert".into()));
        }
        if [self.expert_hidden, self.expert_out, self.tower_hidden, self.id_dim, self.feature_dim]
            .contains(&0)
        {
            return Err(Error::Config("ranker widths must be positive".into()));
        }
        if !(self.eps > 0.0 && self.eps < 0.5) {
            return Err(Error::Config("ranker eps must lie in (0, 0.5)".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config("ranker lr must be positive".into()));
        }
        Ok(())
    }

    fn input_dim(&self) -> usize {
        2 * self.id_dim + 2 * self.feature_dim
    }
}

/// One ranker example with its predictor features already detached.
#[derive(Debug, Clone, PartialEq)]
pub struct RankSample {
    pub user_id: u64,
    pub author_id: u64,
    pub history_feature: Vec<f64>,
    pub foresight_feature: Vec<f64>,
    /// Indexed by [`Task::index`].
    pub labels: [u8; 4],
}

/// Copies the predictor output into a sample, zeroing disabled features.
pub fn build_sample(interaction: &InteractionRecord, output: &ForesightOutput, flags: FeatureFlags) -> RankSample {
    let keep = |on: bool, v: &Vec<f64>| if on { v.clone() } else { vec![0.0; v.len()] };
    RankSample {
        user_id: interaction.user_id,
        author_id: interaction.author_id,
        history_feature: keep(flags.use_history, &output.history_encoding),
        foresight_feature: keep(flags.use_foresight, &output.foresight_embedding),
        labels: interaction.labels,
    }
}

#[derive(Debug, Clone)]
struct Mlp2 {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

impl Mlp2 {
    fn lookup(store: &ParamStore, prefix: &str) -> Result<Self> {
        let get = |n: &str| {
            store
                .id(&format!("{prefix}.{n}"))
                .ok_or_else(|| Error::Format(format!("checkpoint lacks {prefix}.{n}")))
        };
        Ok(Mlp2 {
            w1: get("w1")?,
            b1: get("b1")?,
            w2: get("w2")?,
            b2: get("b2")?,
        })
    }
}

#[derive(Debug, Clone)]
struct Gate {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone)]
struct Layout {
    user_table: ParamId,
    author_table: ParamId,
    experts: Vec<Mlp2>,
    gates: Vec<Gate>,
    towers: Vec<Mlp2>,
}

/// Tape values of a batched forward pass.
#[derive(Debug, Clone)]
pub struct RankerVars {
    /// Per task, `B × num_experts` gate weights.
    pub gates: Vec<Var>,
    /// `B × tasks` probabilities after clamping.
    pub probs: Var,
}

#[derive(Debug, Clone)]
pub struct RankerModel {
    config: RankerConfig,
    store: ParamStore,
    layout: Layout,
}

/// Sidecar stored next to a ranker checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankerMeta {
    pub config: RankerConfig,
    pub checkpoint_hash: String,
}

impl RankerModel {
    /// Fresh model; tower output layers start at zero so every initial
    /// probability is exactly 0.5.
    pub fn new(config: RankerConfig) -> Result<Self> {
        RankerModel::with_init(config, true)
    }

    /// As [`RankerModel::new`] but with an optional random tower output layer.
    pub fn with_init(config: RankerConfig, zero_towers: bool) -> Result<Self> {
        config.validate()?;
        let c = &config;
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        let mut store = ParamStore::new();
        let user_table = store.add("user_table", normal_tensor(&mut rng, &[c.num_users + 1, c.id_dim], 0.1))?;
        let author_table = store.add("author_table", normal_tensor(&mut rng, &[c.num_authors + 1, c.id_dim], 0.1))?;
        let d_in = c.input_dim();
        let mut experts = Vec::with_capacity(c.num_experts);
        for k in 0..c.num_experts {
            let p = format!("expert{k}");
            experts.push(Mlp2 {
                w1: store.add(format!("{p}.w1"), glorot(&mut rng, d_in, c.expert_hidden))?,
                b1: store.add(format!("{p}.b1"), Tensor::zeros(&[1, c.expert_hidden]))?,
                w2: store.add(format!("{p}.w2"), glorot(&mut rng, c.expert_hidden, c.expert_out))?,
                b2: store.add(format!("{p}.b2"), Tensor::zeros(&[1, c.expert_out]))?,
            });
        }
        let mut gates = Vec::with_capacity(c.tasks.len());
        let mut towers = Vec::with_capacity(c.tasks.len());
        for t in &c.tasks {
            let p = t.name();
            gates.push(Gate {
                w: store.add(format!("gate.{p}.w"), glorot(&mut rng, d_in, c.num_experts))?,
                b: store.add(format!("gate.{p}.b"), Tensor::zeros(&[1, c.num_experts]))?,
            });
            let (w2, b2) = if zero_towers {
                (Tensor::zeros(&[c.tower_hidden, 1]), Tensor::zeros(&[1, 1]))
            } else {
                (glorot(&mut rng, c.tower_hidden, 1), normal_tensor(&mut rng, &[1, 1], 0.1))
            };
            towers.push(Mlp2 {
                w1: store.add(format!("tower.{p}.w1"), glorot(&mut rng, c.expert_out, c.tower_hidden))?,
                b1: store.add(format!("tower.{p}.b1"), normal_tensor(&mut rng, &[1, c.tower_hidden], 0.1))?,
                w2: store.add(format!("tower.{p}.w2"), w2)?,
                b2: store.add(format!("tower.{p}.b2"), b2)?,
            });
        }
        Ok(RankerModel {
            config,
            store,
            layout: Layout {
                user_table,
                author_table,
                experts,
                gates,
                towers,
            },
        })
    }

    pub fn from_store(config: RankerConfig, store: ParamStore) -> Result<Self> {
        let reference = RankerModel::new(config.clone())?;
        if store.len() != reference.store.len() {
            return Err(Error::Format("ranker checkpoint does not match its config".into()));
        }
        for id in reference.store.ids() {
            let name = reference.store.name(id);
            let got = store
                .id(name)
                .ok_or_else(|| Error::Format(format!("checkpoint lacks {name}")))?;
            if store.value(got).shape() != reference.store.value(id).shape() {
                return Err(Error::Format(format!("checkpoint tensor {name} has the wrong shape")));
            }
        }
        let id = |n: &str| store.id(n).expect("checked above");
        let layout = Layout {
            user_table: id("user_table"),
            author_table: id("author_table"),
            experts: (0..config.num_experts)
                .map(|k| Mlp2::lookup(&store, &format!("expert{k}")))
                .collect::<Result<_>>()?,
            gates: config
                .tasks
                .iter()
                .map(|t| Gate {
                    w: id(&format!("gate.{}.w", t.name())),
                    b: id(&format!("gate.{}.b", t.name())),
                })
                .collect(),
            towers: config
                .tasks
                .iter()
                .map(|t| Mlp2::lookup(&store, &format!("tower.{}", t.name())))
                .collect::<Result<_>>()?,
        };
        Ok(RankerModel { config, store, layout })
    }

    pub fn config(&self) -> &RankerConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn content_hash(&self) -> String {
        checkpoint::content_hash(&self.store)
    }

    fn user_row(&self, id: u64) -> usize {
        if id < self.config.num_users as u64 {
            id as usize
        } else {
            self.config.num_users
        }
    }

    fn author_row(&self, id: u64) -> usize {
        if id < self.config.num_authors as u64 {
            id as usize
        } else {
            self.config.num_authors
        }
    }

    fn features(&self, samples: &[&RankSample]) -> Result<(Tensor, Tensor)> {
        let d = self.config.feature_dim;
        let mut hist = Vec::with_capacity(samples.len() * d);
        let mut fore = Vec::with_capacity(samples.len() * d);
        for s in samples {
            if s.history_feature.len() != d || s.foresight_feature.len() != d {
                return Err(Error::ShapeMismatch {
                    op: "rank sample features",
                    left: vec![s.history_feature.len(), s.foresight_feature.len()],
                    right: vec![d],
                });
            }
            // Flags are applied here as well so a model never sees a feature
            // its configuration disables.
            if self.config.flags.use_history {
                hist.extend_from_slice(&s.history_feature);
            } else {
                hist.extend(std::iter::repeat_n(0.0, d));
            }
            if self.config.flags.use_foresight {
                fore.extend_from_slice(&s.foresight_feature);
            } else {
                fore.extend(std::iter::repeat_n(0.0, d));
            }
        }
        let n = samples.len();
        Ok((Tensor::matrix(n, d, hist)?, Tensor::matrix(n, d, fore)?))
    }

    /// Batched forward on `tape`.
    pub fn forward_on(&self, tape: &mut Tape, samples: &[&RankSample]) -> Result<RankerVars> {
        if samples.is_empty() {
            return Err(Error::Empty("rank batch"));
        }
        let c = &self.config;
        let (hist, fore) = self.features(samples)?;
        let users: Vec<usize> = samples.iter().map(|s| self.user_row(s.user_id)).collect();
        let authors: Vec<usize> = samples.iter().map(|s| self.author_row(s.author_id)).collect();
        let ut = tape.param(&self.store, self.layout.user_table);
        let at = tape.param(&self.store, self.layout.author_table);
        let u = tape.gather(ut, &users)?;
        let a = tape.gather(at, &authors)?;
        let h = tape.input(hist)?;
        let f = tape.input(fore)?;
        let x = tape.concat_cols(&[u, a, h, f])?;

        let mut expert_out = Vec::with_capacity(c.num_experts);
        for e in &self.layout.experts {
            let [w1, b1, w2, b2] = [e.w1, e.b1, e.w2, e.b2].map(|id| tape.param(&self.store, id));
            let z = linear(tape, x, w1, b1)?;
            let z = tape.relu(z);
            let z = linear(tape, z, w2, b2)?;
            expert_out.push(tape.relu(z));
        }

        let mut gates = Vec::with_capacity(c.tasks.len());
        let mut probs = Vec::with_capacity(c.tasks.len());
        for (gate, tower) in self.layout.gates.iter().zip(&self.layout.towers) {
            let gw = tape.param(&self.store, gate.w);
            let gb = tape.param(&self.store, gate.b);
            let g = linear(tape, x, gw, gb)?;
            let g = tape.softmax_rows(g);
            gates.push(g);
            let mut parts = Vec::with_capacity(c.num_experts);
            for (k, &o) in expert_out.iter().enumerate() {
                let gk = tape.slice_cols(g, k, 1)?;
                parts.push(tape.mul_col(o, gk)?);
            }
            let mixed = tape.add_n(&parts)?;
            let [w1, b1, w2, b2] = [tower.w1, tower.b1, tower.w2, tower.b2].map(|id| tape.param(&self.store, id));
            let z = linear(tape, mixed, w1, b1)?;
            let z = tape.relu(z);
            let z = linear(tape, z, w2, b2)?;
            probs.push(tape.sigmoid(z));
        }
        let probs = tape.concat_cols(&probs)?;
        Ok(RankerVars { gates, probs })
    }

    /// Per-task probabilities for each sample, clamped to `[eps, 1 − eps]`,
    /// in configured task order.
    pub fn forward(&self, samples: &[&RankSample]) -> Result<Vec<Vec<f64>>> {
        let mut tape = Tape::new();
        let vars = self.forward_on(&mut tape, samples)?;
        let eps = self.config.eps;
        let p = tape.value(vars.probs);
        Ok((0..p.rows())
            .map(|r| p.row(r).iter().map(|v| v.clamp(eps, 1.0 - eps)).collect())
            .collect())
    }

    /// Gate weights, `[sample][task][expert]`.
    pub fn gate_weights(&self, samples: &[&RankSample]) -> Result<Vec<Vec<Vec<f64>>>> {
        let mut tape = Tape::new();
        let vars = self.forward_on(&mut tape, samples)?;
        Ok((0..samples.len())
            .map(|r| vars.gates.iter().map(|&g| tape.value(g).row(r).to_vec()).collect())
            .collect())
    }

    fn batch_loss(&self, tape: &mut Tape, batch: &[RankSample]) -> Result<Var> {
        if batch.is_empty() {
            return Err(Error::Empty("rank batch"));
        }
        let refs: Vec<&RankSample> = batch.iter().collect();
        let vars = self.forward_on(tape, &refs)?;
        let mut labels = Vec::with_capacity(batch.len() * self.config.tasks.len());
        for s in batch {
            for t in &self.config.tasks {
                let y = s.labels[t.index()];
                if y > 1 {
                    return Err(Error::invalid(format!("label {y} is not binary")));
                }
                labels.push(f64::from(y));
            }
        }
        let total = tape.bce(vars.probs, &labels, self.config.eps)?;
        tape.scale(total, 1.0 / batch.len() as f64)
    }

    /// Mean over the batch of the per-sample summed task BCE.
    pub fn loss(&self, batch: &[RankSample]) -> Result<f64> {
        let mut tape = Tape::new();
        let l = self.batch_loss(&mut tape, batch)?;
        Ok(tape.value(l).item())
    }

    pub fn compute_gradients(&mut self, batch: &[RankSample]) -> Result<f64> {
        let mut tape = Tape::new();
        let l = self.batch_loss(&mut tape, batch)?;
        self.store.zero_grad();
        tape.backward(l, &mut self.store)?;
        Ok(tape.value(l).item())
    }

    /// One Adam step; returns the pre-step loss.
    pub fn train_step(&mut self, batch: &[RankSample]) -> Result<f64> {
        let loss = self.compute_gradients(batch)?;
        Adam::with_lr(self.config.lr).step(&mut self.store);
        Ok(loss)
    }

    /// Candidates ordered by descending probability on `task`, ties by
    /// ascending author id. `user_id` overrides each candidate's user.
    pub fn score(&self, user_id: u64, candidates: &[RankSample], task: Task) -> Result<Vec<(u64, f64)>> {
        if candidates.is_empty() {
            return Err(Error::Empty("candidate set"));
        }
        let col = self
            .config
            .tasks
            .iter()
            .position(|&t| t == task)
            .ok_or_else(|| Error::invalid(format!("ranker has no {} task", task.name())))?;
        let owned: Vec<RankSample> = candidates
            .iter()
            .map(|c| RankSample {
                user_id,
                ..c.clone()
            })
            .collect();
        let refs: Vec<&RankSample> = owned.iter().collect();
        let probs = self.forward(&refs)?;
        let mut ranked: Vec<(u64, f64)> = owned.iter().zip(probs).map(|(c, p)| (c.author_id, p[col])).collect();
        ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
        Ok(ranked)
    }

    pub fn save(&self, path: &Path) -> Result<RankerMeta> {
        checkpoint::save(&self.store, path)?;
        let meta = RankerMeta {
            config: self.config.clone(),
            checkpoint_hash: self.content_hash(),
        };
        let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::format(e.to_string()))?;
        fs::write(meta_path(path), json)?;
        Ok(meta)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(meta_path(path))?;
        let meta: RankerMeta =
            serde_json::from_str(&text).map_err(|e| Error::format(format!("ranker metadata: {e}")))?;
        let store = checkpoint::load(path)?;
        if checkpoint::content_hash(&store) != meta.checkpoint_hash {
            return Err(Error::Integrity("ranker checkpoint does not match its metadata".into()));
        }
        RankerModel::from_store(meta.config, store)
    }
}
