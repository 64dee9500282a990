//! Oracles and helpers shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use foresight_core::eval::ScoredExample;
use foresight_core::numerics::ParamStore;
use foresight_core::quantizer::Sid;
use foresight_core::seqstore::HistoryWindow;
use foresight_core::synth::Task;
use rand::Rng;

pub const FD_STEP: f64 = 1e-5;
/// Gradients smaller than this are compared on an absolute scale.
pub const FD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Default)]
pub struct FdReport {
    pub checked: usize,
    pub worst_rel: f64,
    pub worst_at: String,
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FD_FLOOR)
}

/// Compares every stored gradient against central differences of `loss`.
/// The analytic gradients must already be in the store.
pub fn fd_check<M>(model: &mut M, store: impl Fn(&mut M) -> &mut ParamStore, loss: impl Fn(&M) -> f64) -> FdReport {
    let ids: Vec<_> = store(model).ids().collect();
    let mut report = FdReport::default();
    for id in ids {
        let (name, len) = {
            let s = store(model);
            (s.name(id).to_string(), s.value(id).len())
        };
        for i in 0..len {
            let analytic = store(model).grad(id).data()[i];
            let orig = store(model).value(id).data()[i];
            store(model).value_mut(id).data_mut()[i] = orig + FD_STEP;
            let up = loss(model);
            store(model).value_mut(id).data_mut()[i] = orig - FD_STEP;
            let down = loss(model);
            store(model).value_mut(id).data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let r = rel_err(analytic, numeric);
            report.checked += 1;
            if r > report.worst_rel || report.worst_at.is_empty() {
                report.worst_rel = r.max(report.worst_rel);
                report.worst_at = format!("{name}[{i}] analytic {analytic:e} numeric {numeric:e}");
            }
        }
    }
    report
}

/// Fraction of (positive, negative) pairs ordered correctly, ties counting
/// one half.
pub fn auc_pairwise(examples: &[ScoredExample]) -> Option<f64> {
    let pos: Vec<f64> = examples.iter().filter(|e| e.label == 1).map(|e| e.score).collect();
    let neg: Vec<f64> = examples.iter().filter(|e| e.label == 0).map(|e| e.score).collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut wins = 0.0;
    for &p in &pos {
        for &n in &neg {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    Some(wins / (pos.len() * neg.len()) as f64)
}

/// Random scored examples with deliberately coarse scores so ties occur.
pub fn random_examples<R: Rng>(rng: &mut R, n: usize, users: u64, levels: u32) -> Vec<ScoredExample> {
    (0..n)
        .map(|_| ScoredExample {
            user_id: rng.gen_range(0..users),
            score: f64::from(rng.gen_range(0..levels)) / f64::from(levels),
            label: rng.gen_range(0..2),
            task: Task::Ctr,
        })
        .collect()
}

/// Expands the valid part of a window into raw ids, one by one.
pub fn raw_of(w: &HistoryWindow) -> Vec<Sid> {
    let mut raw = Vec::new();
    for i in 0..w.sids.len() {
        if i + w.valid_len >= w.sids.len() {
            for _ in 0..w.freqs[i] {
                raw.push(w.sids[i]);
            }
        }
    }
    raw
}

pub fn brute_last(w: &HistoryWindow) -> Sid {
    *raw_of(w).last().unwrap()
}

/// For every candidate id, count its occurrences in the tail and find the
/// latest one; scan candidates and keep a strictly better (count, latest).
pub fn brute_max_freq(w: &HistoryWindow, l_raw: usize) -> Sid {
    let raw = raw_of(w);
    let start = raw.len().saturating_sub(l_raw);
    let tail = &raw[start..];
    let mut best: Option<(Sid, usize, usize)> = None;
    for &cand in tail {
        let count = tail.iter().filter(|&&s| s == cand).count();
        let latest = tail.iter().rposition(|&s| s == cand).unwrap();
        let better = match best {
            None => true,
            Some((_, c, l)) => count > c || (count == c && latest > l),
        };
        if better {
            best = Some((cand, count, latest));
        }
    }
    best.unwrap().0
}

pub fn brute_max_weight(w: &HistoryWindow) -> Sid {
    let off = w.sids.len() - w.valid_len;
    let runs: Vec<(Sid, u32)> = (off..w.sids.len()).map(|i| (w.sids[i], w.freqs[i])).collect();
    let mut best: Option<(Sid, u64, usize)> = None;
    for &(cand, _) in &runs {
        let weight: u64 = runs.iter().filter(|r| r.0 == cand).map(|r| u64::from(r.1)).sum();
        let latest = runs.iter().rposition(|r| r.0 == cand).unwrap();
        let better = match best {
            None => true,
            Some((_, c, l)) => weight > c || (weight == c && latest > l),
        };
        if better {
            best = Some((cand, weight, latest));
        }
    }
    best.unwrap().0
}

/// A random valid window: `valid_len` runs (adjacent ids distinct) with
/// frequencies in `1..=max_freq`, front-padded with `pad`.
pub fn random_window<R: Rng>(rng: &mut R, l_max: usize, num_codes: u32, max_freq: u32) -> HistoryWindow {
    let valid_len = rng.gen_range(1..=l_max);
    let pad = Sid(num_codes);
    let mut sids = vec![pad; l_max - valid_len];
    let mut freqs = vec![0; l_max - valid_len];
    let mut prev: Option<Sid> = None;
    for _ in 0..valid_len {
        let s = loop {
            let s = Sid(rng.gen_range(0..num_codes));
            if Some(s) != prev {
                break s;
            }
        };
        prev = Some(s);
        sids.push(s);
        freqs.push(rng.gen_range(1..=max_freq));
    }
    HistoryWindow { sids, freqs, valid_len }
}

pub mod models {
    use foresight_core::eval::Arm;
    use foresight_core::predictor::{PredictorConfig, PredictorModel};
    use foresight_core::quantizer::Sid;
    use foresight_core::ranker::{RankSample, RankerConfig, RankerModel};
    use foresight_core::seqstore::HistoryWindow;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::{fd_check, random_window, FdReport};

    pub const FD_D_M: usize = 8;
    pub const FD_L_MAX: usize = 6;
    pub const FD_N: usize = 12;

    pub fn fd_predictor_config(rms_norm: bool, heads: usize) -> PredictorConfig {
        PredictorConfig {
            d_m: FD_D_M,
            l_enc: 1,
            l_dec: 1,
            heads,
            ffn_hidden: 16,
            l_max: FD_L_MAX,
            num_codes: FD_N,
            f_max: 8,
            rms_norm,
            zero_output_init: false,
            lr: 1e-3,
            seed: 5,
        }
    }

    pub fn fd_batch(seed: u64) -> Vec<(HistoryWindow, Sid)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut batch: Vec<(HistoryWindow, Sid)> = (0..4)
            .map(|_| (random_window(&mut rng, FD_L_MAX, FD_N as u32, 12), Sid(rng.gen_range(0..FD_N as u32))))
            .collect();
        // one single-run window and one frequency above f_max
        batch[0].0 = random_window(&mut rng, 1, FD_N as u32, 3);
        batch[0].0.sids.splice(0..0, vec![Sid(FD_N as u32); FD_L_MAX - 1]);
        batch[0].0.freqs.splice(0..0, vec![0; FD_L_MAX - 1]);
        let last = FD_L_MAX - 1;
        batch[1].0.freqs[last] = 40;
        batch
    }

    pub fn predictor_fd(rms_norm: bool, heads: usize) -> FdReport {
        let mut model = PredictorModel::new(fd_predictor_config(rms_norm, heads), None).unwrap();
        let batch = fd_batch(17);
        model.compute_gradients(&batch).unwrap();
        fd_check(&mut model, |m| m.store_mut(), |m| m.loss(&batch).unwrap())
    }

    pub fn fd_ranker_config() -> RankerConfig {
        RankerConfig {
            num_experts: 3,
            expert_hidden: 6,
            expert_out: 5,
            tower_hidden: 4,
            id_dim: 4,
            ..RankerConfig::new(5, 4, FD_D_M, 8)
        }
    }

    pub fn random_samples(seed: u64, n: usize, users: u64, authors: u64, dim: usize) -> Vec<RankSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| RankSample {
                user_id: rng.gen_range(0..users),
                author_id: rng.gen_range(0..authors),
                history_feature: (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                foresight_feature: (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                labels: [0; 4].map(|_: u8| rng.gen_range(0..2)),
            })
            .collect()
    }

    pub fn ranker_fd(arm: Arm) -> FdReport {
        let config = RankerConfig {
            flags: arm.flags(),
            ..fd_ranker_config()
        };
        let mut model = RankerModel::with_init(config, false).unwrap();
        // users 0..=5 and authors 0..=4 include one out-of-vocabulary id each
        let batch = random_samples(23, 12, 6, 5, FD_D_M);
        model.compute_gradients(&batch).unwrap();
        fd_check(&mut model, |m| m.store_mut(), |m| m.loss(&batch).unwrap())
    }
}

/// Plain-loop re-implementation of the predictor forward pass.
pub mod oracle {
    use foresight_core::predictor::PredictorModel;
    use foresight_core::seqstore::HistoryWindow;

    pub type Mat = Vec<Vec<f64>>;

    pub struct Forward {
        pub encoded: Mat,
        pub pooled: Vec<f64>,
        pub decoded: Vec<f64>,
        pub probs: Vec<f64>,
    }

    fn param(m: &PredictorModel, name: &str) -> Mat {
        let s = m.store();
        let t = s.value(s.id(name).unwrap_or_else(|| panic!("missing {name}")));
        (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
    }

    fn mm(a: &Mat, b: &Mat) -> Mat {
        a.iter()
            .map(|row| {
                (0..b[0].len())
                    .map(|j| row.iter().zip(b).map(|(x, brow)| x * brow[j]).sum())
                    .collect()
            })
            .collect()
    }

    fn add(a: &Mat, b: &Mat) -> Mat {
        a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect()).collect()
    }

    fn rms(a: Mat) -> Mat {
        a.into_iter()
            .map(|r| {
                let ms = r.iter().map(|x| x * x).sum::<f64>() / r.len() as f64;
                let s = (ms + 1e-8).sqrt();
                r.iter().map(|x| x / s).collect()
            })
            .collect()
    }

    fn softmax(v: &[f64]) -> Vec<f64> {
        let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
        let z: f64 = e.iter().sum();
        e.iter().map(|x| x / z).collect()
    }

    fn attend(q: &Mat, k: &Mat, v: &Mat, mask: &[bool], heads: usize) -> Mat {
        let width = q[0].len();
        let hd = width / heads;
        let mut out = vec![vec![0.0; width]; q.len()];
        for h in 0..heads {
            let cols = h * hd..(h + 1) * hd;
            for (i, qi) in q.iter().enumerate() {
                let scores: Vec<f64> = k
                    .iter()
                    .zip(mask)
                    .map(|(kj, &ok)| {
                        if ok {
                            cols.clone().map(|c| qi[c] * kj[c]).sum::<f64>() / (hd as f64).sqrt()
                        } else {
                            f64::NEG_INFINITY
                        }
                    })
                    .collect();
                let w = softmax(&scores);
                for c in cols.clone() {
                    out[i][c] = w.iter().zip(v).map(|(wj, vj)| wj * vj[c]).sum();
                }
            }
        }
        out
    }

    fn ffn(m: &PredictorModel, p: &str, x: &Mat) -> Mat {
        let h: Mat = mm(x, &param(m, &format!("{p}.w1")))
            .into_iter()
            .map(|r| r.iter().zip(&param(m, &format!("{p}.b1"))[0]).map(|(a, b)| (a + b).max(0.0)).collect())
            .collect();
        mm(&h, &param(m, &format!("{p}.w2")))
            .into_iter()
            .map(|r| r.iter().zip(&param(m, &format!("{p}.b2"))[0]).map(|(a, b)| a + b).collect())
            .collect()
    }

    pub fn embed(m: &PredictorModel, w: &HistoryWindow) -> Mat {
        let c = m.config();
        let (sid, freq, pos) = (param(m, "sid_table"), param(m, "freq_table"), param(m, "pos_table"));
        (0..c.l_max)
            .map(|i| {
                let f = w.freqs[i].min(c.f_max) as usize;
                (0..c.d_m).map(|j| sid[w.sids[i].index()][j] + freq[f][j] + pos[i][j]).collect()
            })
            .collect()
    }

    pub fn encode(m: &PredictorModel, x: &Mat, mask: &[bool]) -> Mat {
        let c = m.config();
        let norm = |a: Mat| if c.rms_norm { rms(a) } else { a };
        let mut x = x.clone();
        for b in 0..c.l_enc {
            let p = format!("enc{b}");
            let q = mm(&x, &param(m, &format!("{p}.wq")));
            let k = mm(&x, &param(m, &format!("{p}.wk")));
            let v = mm(&x, &param(m, &format!("{p}.wv")));
            let a = mm(&attend(&q, &k, &v, mask, c.heads), &param(m, &format!("{p}.wo")));
            x = norm(add(&x, &a));
            let f = ffn(m, &p, &x);
            x = norm(add(&x, &f));
        }
        x
    }

    pub fn decode(m: &PredictorModel, enc: &Mat, mask: &[bool]) -> Vec<f64> {
        let c = m.config();
        let norm = |a: Mat| if c.rms_norm { rms(a) } else { a };
        let mut d = vec![param(m, "sid_table")[c.num_codes + 1].clone()];
        for b in 0..c.l_dec {
            let p = format!("dec{b}");
            let q = mm(&d, &param(m, &format!("{p}.wq")));
            let k = mm(enc, &param(m, &format!("{p}.wk")));
            let v = mm(enc, &param(m, &format!("{p}.wv")));
            let a = mm(&attend(&q, &k, &v, mask, c.heads), &param(m, &format!("{p}.wo")));
            d = norm(add(&d, &a));
            let f = ffn(m, &p, &d);
            d = norm(add(&d, &f));
        }
        d.remove(0)
    }

    pub fn classify(m: &PredictorModel, d: &[f64]) -> Vec<f64> {
        let sid = param(m, "sid_table");
        let logits: Vec<f64> = (0..m.config().num_codes)
            .map(|j| d.iter().zip(&sid[j]).map(|(a, b)| a * b).sum())
            .collect();
        softmax(&logits)
    }

    pub fn forward(m: &PredictorModel, w: &HistoryWindow) -> Forward {
        let mask = w.mask();
        let x = embed(m, w);
        let encoded = encode(m, &x, &mask);
        let valid: Vec<&Vec<f64>> = encoded.iter().zip(&mask).filter(|(_, &ok)| ok).map(|(r, _)| r).collect();
        let pooled = (0..m.config().d_m)
            .map(|j| valid.iter().map(|r| r[j]).sum::<f64>() / valid.len() as f64)
            .collect();
        let decoded = decode(m, &encoded, &mask);
        let probs = classify(m, &decoded);
        Forward {
            encoded,
            pooled,
            decoded,
            probs,
        }
    }
}

/// A small corpus pushed through quantization and a briefly trained
/// predictor.
pub mod world {
    use foresight_core::pipeline::{build_store, fit_codebook, split_pairs, train_predictor, QuantizerSection};
    use foresight_core::predictor::{PredictorConfig, PredictorModel};
    use foresight_core::quantizer::Codebook;
    use foresight_core::seqstore::AuthorStore;
    use foresight_core::synth::{gen_corpus, Corpus, SegmentEvent, SynthConfig, TopicParams};

    pub struct World {
        pub corpus: Corpus,
        pub codebook: Codebook,
        pub store: AuthorStore,
        pub predictor: PredictorModel,
    }

    pub fn small_synth() -> SynthConfig {
        SynthConfig {
            topics: TopicParams {
                noise_sigma: 0.05,
                ..TopicParams::new(6, 8, 0.5)
            },
            num_authors: 20,
            stream_length: 60,
            num_users: 10,
            num_interactions: 600,
            ..SynthConfig::default()
        }
    }

    pub fn build(synth: &SynthConfig, seed: u64, steps: usize) -> World {
        let corpus = gen_corpus(synth, seed).unwrap();
        let segments: Vec<SegmentEvent> = corpus.segments().cloned().collect();
        let q = QuantizerSection {
            codebook_size: synth.topics.num_topics,
            max_iters: 100,
            tol: 1e-9,
            max_train_points: 0,
        };
        let codebook = fit_codebook(&segments, &q, seed).unwrap();
        let store = build_store(&segments, &codebook).unwrap();
        let cfg = PredictorConfig {
            d_m: 8,
            l_max: 8,
            ffn_hidden: 16,
            lr: 3e-3,
            ..PredictorConfig::new(codebook.size(), seed)
        };
        let mut predictor = PredictorModel::new(cfg, Some(&codebook)).unwrap();
        let (train, _) = split_pairs(&store, 8, 0.8);
        if steps > 0 {
            train_predictor(&mut predictor, &train, steps, 16, seed).unwrap();
        }
        World {
            corpus,
            codebook,
            store,
            predictor,
        }
    }
}

/// Randomised property checks shared by the per-module tests and the
/// acceptance run. Each returns a description of the first violation.
pub mod checks {
    use std::io::Write;

    use foresight_core::eval::{auc, baseline_last, baseline_max_freq, baseline_max_weight, gauc, ScoredExample};
    use foresight_core::quantizer::{train_kmeans_traced, Codebook, KMeansParams, Sid};
    use foresight_core::seqstore::{compress, decompress, AuthorStore, HistoryWindow};
    use foresight_core::synth::Task;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::{auc_pairwise, brute_last, brute_max_freq, brute_max_weight, random_examples, random_window};

    pub type Check = std::result::Result<String, String>;

    pub fn auc_agrees_with_pairwise(instances: usize, seed: u64) -> Check {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for i in 0..instances {
            let n = rng.gen_range(2..300);
            let levels = if i % 2 == 0 { 5 } else { 1_000_000 };
            let ex = random_examples(&mut rng, n, 1, levels);
            match (auc(&ex), auc_pairwise(&ex)) {
                (Some(a), Some(b)) => worst = worst.max((a - b).abs()),
                (None, None) => {}
                other => return Err(format!("instance {i}: definedness differs {other:?}")),
            }
        }
        if worst < 1e-12 {
            Ok(format!("{instances} instances, max |Δ| = {worst:e}"))
        } else {
            Err(format!("max |Δ| = {worst:e}"))
        }
    }

    pub fn gauc_hand_example() -> Check {
        let ex = |user, score, label| ScoredExample {
            user_id: user,
            score,
            label,
            task: Task::Ctr,
        };
        // user 1 is perfectly ordered (AUC 1, 4 rows); user 2 is a tie
        // (AUC 1/2, 2 rows); user 3 has one class only and is skipped.
        let v = vec![
            ex(1, 0.9, 1),
            ex(1, 0.8, 1),
            ex(1, 0.2, 0),
            ex(1, 0.1, 0),
            ex(2, 0.5, 1),
            ex(2, 0.5, 0),
            ex(3, 0.4, 1),
        ];
        match gauc(&v) {
            Some(g) if g == 5.0 / 6.0 => Ok("(4·1 + 2·½)/6 = 5/6 exactly".into()),
            other => Err(format!("got {other:?}")),
        }
    }

    pub fn baselines_match_brute_force(windows: usize, seed: u64) -> Check {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in 0..windows {
            let l_max = rng.gen_range(1..=24);
            let codes = rng.gen_range(2..=6);
            let w = random_window(&mut rng, l_max, codes, 5);
            let l_raw = rng.gen_range(1..=40);
            let got = (
                baseline_last(&w).unwrap(),
                baseline_max_freq(&w, l_raw).unwrap(),
                baseline_max_weight(&w).unwrap(),
            );
            let want = (brute_last(&w), brute_max_freq(&w, l_raw), brute_max_weight(&w));
            if got != want {
                return Err(format!("window {i} {w:?} l_raw {l_raw}: got {got:?}, want {want:?}"));
            }
        }
        Ok(format!("{windows} windows, all three rules exact"))
    }

    pub fn random_raw<R: Rng>(rng: &mut R) -> Vec<Sid> {
        let len = rng.gen_range(0..200);
        let alphabet = rng.gen_range(1..6);
        let stay = rng.gen_range(0.0..0.95);
        let mut v: Vec<Sid> = Vec::with_capacity(len);
        for _ in 0..len {
            let s = match v.last() {
                Some(&prev) if rng.gen::<f64>() < stay => prev,
                _ => Sid(rng.gen_range(0..alphabet)),
            };
            v.push(s);
        }
        v
    }

    pub fn rle_roundtrip(sequences: usize, seed: u64) -> Check {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in 0..sequences {
            let raw = random_raw(&mut rng);
            let c = compress(&raw);
            if decompress(&c).map_err(|e| e.to_string())? != raw {
                return Err(format!("sequence {i} did not roundtrip"));
            }
            if c.distinct().windows(2).any(|w| w[0] == w[1]) || c.freq().contains(&0) {
                return Err(format!("sequence {i}: adjacent duplicates or zero run"));
            }
            if c.total_len() != raw.len() as u64 {
                return Err(format!("sequence {i}: length"));
            }
        }
        Ok(format!("{sequences} sequences"))
    }

    pub fn log_replay_equivalence(seed: u64) -> Check {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let path = dir.path().join("log.tsv");
        let file = std::fs::File::create(&path).map_err(|e| e.to_string())?;
        let pad = Sid(7);
        let mut live = AuthorStore::with_log(pad, Box::new(file));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..5000 {
            live.append(rng.gen_range(0..25), Sid(rng.gen_range(0..7))).map_err(|e| e.to_string())?;
        }
        let snapshot = live.snapshot_bytes();
        let windows: Vec<HistoryWindow> = live.authors().map(|a| live.window(a, 9)).collect();
        drop(live);
        let replayed = AuthorStore::replay_file(pad, &path).map_err(|e| e.to_string())?;
        let replay_windows: Vec<HistoryWindow> = replayed.authors().map(|a| replayed.window(a, 9)).collect();
        if replayed.snapshot_bytes() != snapshot || replay_windows != windows {
            return Err("replayed store differs from the live one".into());
        }
        let restored = AuthorStore::from_snapshot(&snapshot).map_err(|e| e.to_string())?;
        if restored.snapshot_bytes() != snapshot {
            return Err("snapshot did not roundtrip".into());
        }
        // a torn final line is tolerated only if the prefix is intact
        let mut f = std::fs::OpenOptions::new().append(true).open(&path).map_err(|e| e.to_string())?;
        f.write_all(b"3\tnot-a-number\t1\n").map_err(|e| e.to_string())?;
        if AuthorStore::replay_file(pad, &path).is_ok() {
            return Err("corrupt log line was accepted".into());
        }
        Ok("5000 appends over 25 authors; snapshot and windows identical".into())
    }

    pub fn gaussian_blobs(seed: u64, k: usize, dim: usize, per: usize, sigma: f64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers: Vec<Vec<f64>> = (0..k).map(|_| (0..dim).map(|_| rng.gen_range(-5.0..5.0)).collect()).collect();
        let normal = rand_distr::Normal::new(0.0, sigma).unwrap();
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for (c, center) in centers.iter().enumerate() {
            for _ in 0..per {
                points.push(center.iter().map(|x| x + rng.sample(normal)).collect());
                labels.push(c);
            }
        }
        (points, labels)
    }

    pub fn kmeans_inertia_monotone(runs: usize, seed: u64) -> Check {
        let mut steps = 0;
        for r in 0..runs {
            let (points, _) = gaussian_blobs(seed + r as u64, 3 + r % 5, 4, 40, 1.5);
            let params = KMeansParams {
                size: 2 + r % 7,
                max_iters: 60,
                tol: 0.0,
                seed: r as u64,
            };
            let (_, trace) = train_kmeans_traced(&points, &params).map_err(|e| e.to_string())?;
            for w in trace.steps.windows(2) {
                if w[1].inertia > w[0].inertia * (1.0 + 1e-12) {
                    return Err(format!("run {r}: inertia rose {} -> {}", w[0].inertia, w[1].inertia));
                }
            }
            steps += trace.steps.len();
        }
        Ok(format!("{runs} runs, {steps} iterations"))
    }

    pub fn codebook_roundtrip(cases: usize, seed: u64) -> Check {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in 0..cases {
            let (n, d) = (rng.gen_range(1..20), rng.gen_range(1..10));
            let data: Vec<f32> = (0..n * d).map(|_| f32::from_bits(rng.gen::<u32>() & 0xBF7F_FFFF)).collect();
            let cb = Codebook::new(n, d, data, rng.gen()).map_err(|e| e.to_string())?;
            let bytes = cb.to_bytes();
            let back = Codebook::from_bytes(&bytes).map_err(|e| e.to_string())?;
            if back.to_bytes() != bytes || back.content_hash() != cb.content_hash() {
                return Err(format!("case {i} not bit-exact"));
            }
        }
        Ok(format!("{cases} codebooks"))
    }
}
