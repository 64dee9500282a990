//! Next-id foresight predictor.
//!
//! A history window of (id, run length) pairs is embedded, passed through a
//! stack of residual self-attention encoder blocks, then read by a decoder
//! whose only query is a begin-of-sequence vector. The decoder output is
//! scored against the id embedding table to give a distribution over the next
//! distinct id.
//!
//! Table layout: `sid_table` has `N + 2` rows, row `N` is the pad embedding
//! and row `N + 1` is the learnable BOS vector. `freq_table` row 0 belongs to
//! padding; real run lengths are capped at `f_max`.

mod data;

pub use data::{training_pairs, TrainingPair};

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    checkpoint, ffn, glorot, multi_head_attention, normal_tensor, Adam, ParamId, ParamStore, Tape,
    Tensor, Var,
};
use crate::quantizer::{Codebook, Sid};
use crate::seqstore::HistoryWindow;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorConfig {
    pub d_m: usize,
    pub l_enc: usize,
    pub l_dec: usize,
    pub heads: usize,
    pub ffn_hidden: usize,
    pub l_max: usize,
    /// Codebook size `N`.
    pub num_codes: usize,
    pub f_max: u32,
    /// Row-wise RMS normalisation after every residual add.
    pub rms_norm: bool,
    /// Start the decoder output path (BOS, attention output projections,
    /// final FFN layers) at zero so the first prediction is uniform.
    pub zero_output_init: bool,
    pub lr: f64,
    pub seed: u64,
}

impl PredictorConfig {
    pub fn new(num_codes: usize, seed: u64) -> Self {
        PredictorConfig {
            d_m: 32,
            l_enc: 2,
            l_dec: 2,
            heads: 1,
            ffn_hidden: 64,
            l_max: 32,
            num_codes,
            f_max: 512,
            rms_norm: false,
            zero_output_init: true,
            lr: 1e-3,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_m < 2 {
            return Err(Error::Config("d_m must be at least 2".into()));
        }
        if self.l_max < 1 {
            return Err(Error::Config("l_max must be at least 1".into()));
        }
        if self.num_codes < 2 {
            return Err(Error::Config("codebook size must be at least 2".into()));
        }
        if self.heads == 0 || !self.d_m.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "d_m {} not divisible by {} heads",
                self.d_m, self.heads
            )));
        }
        if self.ffn_hidden == 0 || self.f_max == 0 {
            return Err(Error::Config("ffn_hidden and f_max must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config("predictor lr must be positive".into()));
        }
        Ok(())
    }

    pub fn pad(&self) -> Sid {
        Sid(self.num_codes as u32)
    }

    fn bos_row(&self) -> usize {
        self.num_codes + 1
    }
}

#[derive(Debug, Clone, Copy)]
struct Block {
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
    wo: ParamId,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

impl Block {
    fn add(store: &mut ParamStore, prefix: &str, cfg: &PredictorConfig, rng: &mut ChaCha8Rng, zero_out: bool) -> Result<Self> {
        let (d, h) = (cfg.d_m, cfg.ffn_hidden);
        let out = |rng: &mut ChaCha8Rng, a, b| {
            if zero_out {
                Tensor::zeros(&[a, b])
            } else {
                glorot(rng, a, b)
            }
        };
        let wq = glorot(rng, d, d);
        let wk = glorot(rng, d, d);
        let wv = glorot(rng, d, d);
        let wo = out(rng, d, d);
        let w1 = glorot(rng, d, h);
        let w2 = out(rng, h, d);
        let b2 = if zero_out {
            Tensor::zeros(&[1, d])
        } else {
            normal_tensor(rng, &[1, d], 0.1)
        };
        Ok(Block {
            wq: store.add(format!("{prefix}.wq"), wq)?,
            wk: store.add(format!("{prefix}.wk"), wk)?,
            wv: store.add(format!("{prefix}.wv"), wv)?,
            wo: store.add(format!("{prefix}.wo"), wo)?,
            w1: store.add(format!("{prefix}.w1"), w1)?,
            b1: store.add(format!("{prefix}.b1"), normal_tensor(rng, &[1, h], 0.1))?,
            w2: store.add(format!("{prefix}.w2"), w2)?,
            b2: store.add(format!("{prefix}.b2"), b2)?,
        })
    }

    fn lookup(store: &ParamStore, prefix: &str) -> Result<Self> {
        let get = |n: &str| {
            store
                .id(&format!("{prefix}.{n}"))
                .ok_or_else(|| Error::Format(format!("checkpoint lacks {prefix}.{n}")))
        };
        Ok(Block {
            wq: get("wq")?,
            wk: get("wk")?,
            wv: get("wv")?,
            wo: get("wo")?,
            w1: get("w1")?,
            b1: get("b1")?,
            w2: get("w2")?,
            b2: get("b2")?,
        })
    }

    fn ffn(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w1 = tape.param(store, self.w1);
        let b1 = tape.param(store, self.b1);
        let w2 = tape.param(store, self.w2);
        let b2 = tape.param(store, self.b2);
        ffn(tape, x, w1, b1, w2, b2)
    }
}

#[derive(Debug, Clone)]
struct Layout {
    sid_table: ParamId,
    freq_table: ParamId,
    pos_table: ParamId,
    encoder: Vec<Block>,
    decoder: Vec<Block>,
}

/// Result of one inference pass over a window.
#[derive(Debug, Clone, PartialEq)]
pub struct ForesightOutput {
    /// Encoder output mean-pooled over the unmasked positions.
    pub history_encoding: Vec<f64>,
    /// Decoder output for the BOS query.
    pub foresight_embedding: Vec<f64>,
    /// Distribution over the `N` real ids.
    pub probs: Vec<f64>,
    pub predicted: Sid,
}

/// Sidecar written next to a predictor checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorMeta {
    pub config: PredictorConfig,
    pub codebook_hash: String,
    pub checkpoint_hash: String,
}

pub fn meta_path(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    checkpoint.with_file_name(name)
}

/// Tape values for a batch of windows.
#[derive(Debug, Clone, Copy)]
pub struct BatchVars {
    /// `(B·l_max) × d_m`, window `b` occupying rows `b·l_max ..`.
    pub encoded: Var,
    /// `B × d_m`
    pub decoded: Var,
    /// `B × N`
    pub logits: Var,
}

#[derive(Debug, Clone)]
pub struct PredictorModel {
    config: PredictorConfig,
    store: ParamStore,
    layout: Layout,
}

impl PredictorModel {
    /// Fresh model. When a codebook is given, the real-id rows of
    /// `sid_table` start as a fixed random projection of its centroids.
    pub fn new(config: PredictorConfig, codebook: Option<&Codebook>) -> Result<Self> {
        config.validate()?;
        let n = config.num_codes;
        let d = config.d_m;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();

        let mut sid = match codebook {
            Some(cb) => {
                if cb.size() != n {
                    return Err(Error::Config(format!(
                        "codebook has {} codes, predictor expects {n}",
                        cb.size()
                    )));
                }
                projected_rows(cb, d, &mut rng)
            }
            None => normal_tensor(&mut rng, &[n, d], 1.0 / (d as f64).sqrt()).into_data(),
        };
        sid.extend(normal_tensor(&mut rng, &[1, d], 0.1).into_data());
        if config.zero_output_init {
            sid.extend(std::iter::repeat_n(0.0, d));
        } else {
            sid.extend(normal_tensor(&mut rng, &[1, d], 0.5).into_data());
        }
        let sid_table = store.add("sid_table", Tensor::matrix(n + 2, d, sid)?)?;
        let freq_rows = config.f_max as usize + 1;
        let freq_table = store.add("freq_table", normal_tensor(&mut rng, &[freq_rows, d], 0.1))?;
        let pos_table = store.add("pos_table", normal_tensor(&mut rng, &[config.l_max, d], 0.1))?;
        let mut encoder = Vec::with_capacity(config.l_enc);
        for i in 0..config.l_enc {
            encoder.push(Block::add(&mut store, &format!("enc{i}"), &config, &mut rng, false)?);
        }
        let mut decoder = Vec::with_capacity(config.l_dec);
        for i in 0..config.l_dec {
            let zero = config.zero_output_init;
            decoder.push(Block::add(&mut store, &format!("dec{i}"), &config, &mut rng, zero)?);
        }
        Ok(PredictorModel {
            config,
            store,
            layout: Layout {
                sid_table,
                freq_table,
                pos_table,
                encoder,
                decoder,
            },
        })
    }

    /// Rebinds a parameter store (e.g. from a checkpoint) to the layout the
    /// config implies; every name and shape must match.
    pub fn from_store(config: PredictorConfig, store: ParamStore) -> Result<Self> {
        let reference = PredictorModel::new(config.clone(), None)?;
        if store.len() != reference.store.len() {
            return Err(Error::Format(format!(
                "checkpoint holds {} tensors, config implies {}",
                store.len(),
                reference.store.len()
            )));
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
        let lookup = |n: &str| store.id(n).expect("checked above");
        let layout = Layout {
            sid_table: lookup("sid_table"),
            freq_table: lookup("freq_table"),
            pos_table: lookup("pos_table"),
            encoder: (0..config.l_enc)
                .map(|i| Block::lookup(&store, &format!("enc{i}")))
                .collect::<Result<_>>()?,
            decoder: (0..config.l_dec)
                .map(|i| Block::lookup(&store, &format!("dec{i}")))
                .collect::<Result<_>>()?,
        };
        Ok(PredictorModel {
            config,
            store,
            layout,
        })
    }

    pub fn config(&self) -> &PredictorConfig {
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

    pub fn sid_table(&self) -> &Tensor {
        self.store.value(self.layout.sid_table)
    }

    pub fn freq_table(&self) -> &Tensor {
        self.store.value(self.layout.freq_table)
    }

    pub fn pos_table(&self) -> &Tensor {
        self.store.value(self.layout.pos_table)
    }

    fn check_window(&self, w: &HistoryWindow) -> Result<()> {
        if w.l_max() != self.config.l_max || w.freqs.len() != w.sids.len() || w.valid_len > w.l_max() {
            return Err(Error::ShapeMismatch {
                op: "history window",
                left: vec![w.sids.len(), w.freqs.len(), w.valid_len],
                right: vec![self.config.l_max],
            });
        }
        for s in &w.sids {
            if s.index() > self.config.num_codes {
                return Err(Error::OutOfRange {
                    what: "window sid",
                    index: s.index(),
                    size: self.config.num_codes + 1,
                });
            }
        }
        Ok(())
    }

    fn freq_row(&self, f: u32) -> usize {
        f.min(self.config.f_max) as usize
    }

    /// `sid_table[sid] + freq_table[min(freq, f_max)] + pos_table[i]` for every
    /// window position, windows stacked by rows.
    pub fn embed_on(&self, tape: &mut Tape, windows: &[&HistoryWindow]) -> Result<Var> {
        if windows.is_empty() {
            return Err(Error::Empty("window batch"));
        }
        let l = self.config.l_max;
        let mut sid_idx = Vec::with_capacity(windows.len() * l);
        let mut freq_idx = Vec::with_capacity(windows.len() * l);
        for w in windows {
            self.check_window(w)?;
            sid_idx.extend(w.sids.iter().map(|s| s.index()));
            freq_idx.extend(w.freqs.iter().map(|&f| self.freq_row(f)));
        }
        let pos_idx: Vec<usize> = (0..windows.len()).flat_map(|_| 0..l).collect();
        let sid_table = tape.param(&self.store, self.layout.sid_table);
        let freq_table = tape.param(&self.store, self.layout.freq_table);
        let pos_table = tape.param(&self.store, self.layout.pos_table);
        let s = tape.gather(sid_table, &sid_idx)?;
        let f = tape.gather(freq_table, &freq_idx)?;
        let p = tape.gather(pos_table, &pos_idx)?;
        tape.add_n(&[s, f, p])
    }

    fn residual(&self, tape: &mut Tape, x: Var, delta: Var) -> Result<Var> {
        let y = tape.add(x, delta)?;
        Ok(if self.config.rms_norm {
            tape.rms_norm_rows(y)
        } else {
            y
        })
    }

    /// Encoder stack over stacked windows; `masks[b]` marks the real positions
    /// of window `b`.
    pub fn encode_on(&self, tape: &mut Tape, x: Var, masks: &[Vec<bool>]) -> Result<Var> {
        let l = self.config.l_max;
        check_masks(masks, l)?;
        if tape.value(x).rows() != masks.len() * l || tape.value(x).cols() != self.config.d_m {
            return Err(Error::ShapeMismatch {
                op: "encode input",
                left: tape.value(x).shape().to_vec(),
                right: vec![masks.len() * l, self.config.d_m],
            });
        }
        let mut x = x;
        for block in &self.layout.encoder {
            let [wq, wk, wv, wo] = [block.wq, block.wk, block.wv, block.wo].map(|id| tape.param(&self.store, id));
            let q = tape.matmul(x, wq)?;
            let k = tape.matmul(x, wk)?;
            let v = tape.matmul(x, wv)?;
            let mut heads_out = Vec::with_capacity(masks.len());
            for (b, mask) in masks.iter().enumerate() {
                let qb = tape.slice_rows(q, b * l, l)?;
                let kb = tape.slice_rows(k, b * l, l)?;
                let vb = tape.slice_rows(v, b * l, l)?;
                heads_out.push(multi_head_attention(tape, qb, kb, vb, mask, self.config.heads)?);
            }
            let a = tape.concat_rows(&heads_out)?;
            let a = tape.matmul(a, wo)?;
            x = self.residual(tape, x, a)?;
            let f = block.ffn(tape, &self.store, x)?;
            x = self.residual(tape, x, f)?;
        }
        Ok(x)
    }

    /// Decoder stack: one BOS query per window attending to that window's
    /// encoder rows. Returns `B × d_m`.
    pub fn decode_on(&self, tape: &mut Tape, encoded: Var, masks: &[Vec<bool>]) -> Result<Var> {
        let l = self.config.l_max;
        check_masks(masks, l)?;
        if tape.value(encoded).rows() != masks.len() * l {
            return Err(Error::ShapeMismatch {
                op: "decode input",
                left: tape.value(encoded).shape().to_vec(),
                right: vec![masks.len() * l, self.config.d_m],
            });
        }
        let sid_table = tape.param(&self.store, self.layout.sid_table);
        let mut d = tape.gather(sid_table, &vec![self.config.bos_row(); masks.len()])?;
        for block in &self.layout.decoder {
            let [wq, wk, wv, wo] = [block.wq, block.wk, block.wv, block.wo].map(|id| tape.param(&self.store, id));
            let q = tape.matmul(d, wq)?;
            let k = tape.matmul(encoded, wk)?;
            let v = tape.matmul(encoded, wv)?;
            let mut ctx = Vec::with_capacity(masks.len());
            for (b, mask) in masks.iter().enumerate() {
                let qb = tape.slice_rows(q, b, 1)?;
                let kb = tape.slice_rows(k, b * l, l)?;
                let vb = tape.slice_rows(v, b * l, l)?;
                ctx.push(multi_head_attention(tape, qb, kb, vb, mask, self.config.heads)?);
            }
            let c = tape.concat_rows(&ctx)?;
            let c = tape.matmul(c, wo)?;
            d = self.residual(tape, d, c)?;
            let f = block.ffn(tape, &self.store, d)?;
            d = self.residual(tape, d, f)?;
        }
        Ok(d)
    }

    /// Similarity of each decoder row with the `N` real-id rows of the tied
    /// table.
    pub fn logits_on(&self, tape: &mut Tape, decoded: Var) -> Result<Var> {
        let table = tape.param(&self.store, self.layout.sid_table);
        let real = tape.slice_rows(table, 0, self.config.num_codes)?;
        tape.matmul_bt(decoded, real)
    }

    pub fn forward_on(&self, tape: &mut Tape, windows: &[&HistoryWindow]) -> Result<BatchVars> {
        let x = self.embed_on(tape, windows)?;
        let masks: Vec<Vec<bool>> = windows.iter().map(|w| w.mask()).collect();
        let encoded = self.encode_on(tape, x, &masks)?;
        let decoded = self.decode_on(tape, encoded, &masks)?;
        let logits = self.logits_on(tape, decoded)?;
        Ok(BatchVars {
            encoded,
            decoded,
            logits,
        })
    }

    pub fn embed_window(&self, w: &HistoryWindow) -> Result<Tensor> {
        let mut tape = Tape::new();
        let x = self.embed_on(&mut tape, &[w])?;
        Ok(tape.value(x).clone())
    }

    pub fn encode(&self, embedded: &Tensor, mask: &[bool]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let x = tape.input(embedded.clone())?;
        let e = self.encode_on(&mut tape, x, &[mask.to_vec()])?;
        Ok(tape.value(e).clone())
    }

    pub fn decode(&self, encoded: &Tensor, mask: &[bool]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let e = tape.input(encoded.clone())?;
        let d = self.decode_on(&mut tape, e, &[mask.to_vec()])?;
        Ok(tape.value(d).clone())
    }

    /// Softmax over the `N` real ids for a `1 × d_m` decoder output.
    pub fn classify(&self, d_hat: &Tensor) -> Result<Vec<f64>> {
        if d_hat.rows() != 1 || d_hat.cols() != self.config.d_m {
            return Err(Error::ShapeMismatch {
                op: "classify",
                left: d_hat.shape().to_vec(),
                right: vec![1, self.config.d_m],
            });
        }
        let mut tape = Tape::new();
        let d = tape.input(d_hat.clone())?;
        let z = self.logits_on(&mut tape, d)?;
        let p = tape.softmax_rows(z);
        Ok(tape.value(p).data().to_vec())
    }

    fn batch_loss(&self, tape: &mut Tape, batch: &[(HistoryWindow, Sid)]) -> Result<Var> {
        if batch.is_empty() {
            return Err(Error::Empty("training batch"));
        }
        let mut targets = Vec::with_capacity(batch.len());
        for (_, t) in batch {
            if t.index() >= self.config.num_codes {
                return Err(Error::OutOfRange {
                    what: "target sid",
                    index: t.index(),
                    size: self.config.num_codes,
                });
            }
            targets.push(t.index());
        }
        let windows: Vec<&HistoryWindow> = batch.iter().map(|(w, _)| w).collect();
        let vars = self.forward_on(tape, &windows)?;
        tape.cross_entropy_rows(vars.logits, &targets)
    }

    /// Mean cross-entropy of the batch without touching parameters.
    pub fn loss(&self, batch: &[(HistoryWindow, Sid)]) -> Result<f64> {
        let mut tape = Tape::new();
        let l = self.batch_loss(&mut tape, batch)?;
        Ok(tape.value(l).item())
    }

    /// Replaces the stored gradients with those of the batch loss and returns
    /// the loss.
    pub fn compute_gradients(&mut self, batch: &[(HistoryWindow, Sid)]) -> Result<f64> {
        let mut tape = Tape::new();
        let l = self.batch_loss(&mut tape, batch)?;
        self.store.zero_grad();
        tape.backward(l, &mut self.store)?;
        Ok(tape.value(l).item())
    }

    /// One Adam step on the mean cross-entropy; returns the pre-step loss.
    pub fn train_step(&mut self, batch: &[(HistoryWindow, Sid)]) -> Result<f64> {
        let loss = self.compute_gradients(batch)?;
        Adam::with_lr(self.config.lr).step(&mut self.store);
        Ok(loss)
    }

    pub fn predict_next(&self, w: &HistoryWindow) -> Result<ForesightOutput> {
        let mut out = self.predict_batch(&[w])?;
        Ok(out.pop().expect("one window in, one output out"))
    }

    /// Inference over several windows in one pass. Pure.
    pub fn predict_batch(&self, windows: &[&HistoryWindow]) -> Result<Vec<ForesightOutput>> {
        for w in windows {
            if w.valid_len == 0 {
                return Err(Error::Empty("history window"));
            }
        }
        let mut tape = Tape::new();
        let vars = self.forward_on(&mut tape, windows)?;
        let probs = tape.softmax_rows(vars.logits);
        let l = self.config.l_max;
        let enc = tape.value(vars.encoded);
        let dec = tape.value(vars.decoded);
        let probs = tape.value(probs);
        let mut out = Vec::with_capacity(windows.len());
        for (b, w) in windows.iter().enumerate() {
            let valid: Vec<usize> = (b * l + l - w.valid_len..(b + 1) * l).collect();
            let mut pooled = vec![0.0; self.config.d_m];
            for &r in &valid {
                pooled.iter_mut().zip(enc.row(r)).for_each(|(a, v)| *a += v);
            }
            let inv = 1.0 / valid.len() as f64;
            pooled.iter_mut().for_each(|a| *a *= inv);
            let p = probs.row(b).to_vec();
            let predicted = Sid(argmax_first(&p) as u32);
            out.push(ForesightOutput {
                history_encoding: pooled,
                foresight_embedding: dec.row(b).to_vec(),
                probs: p,
                predicted,
            });
        }
        Ok(out)
    }

    /// Writes the checkpoint and its metadata sidecar.
    pub fn save(&self, path: &Path, codebook_hash: &str) -> Result<PredictorMeta> {
        checkpoint::save(&self.store, path)?;
        let meta = PredictorMeta {
            config: self.config.clone(),
            codebook_hash: codebook_hash.to_string(),
            checkpoint_hash: self.content_hash(),
        };
        let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::format(e.to_string()))?;
        fs::write(meta_path(path), json)?;
        Ok(meta)
    }

    /// Loads a checkpoint, refusing it unless its sidecar names
    /// `codebook_hash` and the tensor content matches the recorded hash.
    pub fn load(path: &Path, codebook_hash: &str) -> Result<Self> {
        let meta_text = fs::read_to_string(meta_path(path))?;
        let meta: PredictorMeta =
            serde_json::from_str(&meta_text).map_err(|e| Error::format(format!("predictor metadata: {e}")))?;
        if meta.codebook_hash != codebook_hash {
            return Err(Error::Integrity(format!(
                "predictor was trained against codebook {} but codebook {} was supplied",
                meta.codebook_hash, codebook_hash
            )));
        }
        let store = checkpoint::load(path)?;
        let hash = checkpoint::content_hash(&store);
        if hash != meta.checkpoint_hash {
            return Err(Error::Integrity(format!(
                "predictor checkpoint hash {hash} does not match its metadata {}",
                meta.checkpoint_hash
            )));
        }
        PredictorModel::from_store(meta.config, store)
    }
}

fn check_masks(masks: &[Vec<bool>], l: usize) -> Result<()> {
    if masks.is_empty() {
        return Err(Error::Empty("window batch"));
    }
    for m in masks {
        if m.len() != l {
            return Err(Error::ShapeMismatch {
                op: "mask",
                left: vec![m.len()],
                right: vec![l],
            });
        }
        if !m.iter().any(|&v| v) {
            return Err(Error::FullyMasked);
        }
    }
    Ok(())
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Centroids pushed through a fixed Gaussian projection, then scaled so the
/// mean row norm is 1.
fn projected_rows(cb: &Codebook, d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let proj = normal_tensor(rng, &[cb.dim(), d], 1.0);
    let mut rows = Vec::with_capacity(cb.size() * d);
    for c in cb.rows_f64() {
        for j in 0..d {
            rows.push((0..cb.dim()).map(|i| c[i] * proj.at(i, j)).sum::<f64>());
        }
    }
    let mean_norm = rows
        .chunks(d)
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
        .sum::<f64>()
        / cb.size() as f64;
    if mean_norm > 0.0 {
        rows.iter_mut().for_each(|v| *v /= mean_norm);
    }
    rows
}
