//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `cargo test -p foresight-core --test acceptance` runs all nine; pass
//! criterion numbers after `--` to run a subset.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::checks::{self, Check};
use common::models::{predictor_fd, ranker_fd};
use common::world;
use foresight_core::eval::{mean_std, run_ablation, sample_std, Arm, BayesOracle, TrainSchedule};
use foresight_core::pipeline::{
    accuracy_table, build_store, fit_codebook, predict_windows, ranker_samples, split_interactions, split_pairs,
    train_predictor, GroundTruth, QuantizerSection,
};
use foresight_core::predictor::{PredictorConfig, PredictorModel};
use foresight_core::quantizer::Sid;
use foresight_core::ranker::{RankSample, RankerConfig};
use foresight_core::seqstore::HistoryWindow;
use foresight_core::synth::{gen_author_stream, gen_corpus, Horizon, SegmentEvent, SynthConfig, Task, TopicModel, TopicParams};

fn minutes(m: u64) -> Duration {
    Duration::from_secs(60 * m)
}

fn within(budget: Duration, start: Instant, check: Check) -> Check {
    let took = start.elapsed();
    match check {
        Ok(d) if took <= budget => Ok(d),
        Ok(d) => Err(format!("{d}; but took {took:.1?} > {budget:?}")),
        Err(e) => Err(e),
    }
}

fn quantizer(n: usize) -> QuantizerSection {
    QuantizerSection {
        codebook_size: n,
        max_iters: 100,
        tol: 1e-7,
        max_train_points: 20_000,
    }
}

// 1 ------------------------------------------------------------------------

fn gradient_integrity() -> Check {
    let start = Instant::now();
    let p = predictor_fd(false, 1);
    let mut worst = (p.worst_rel, format!("predictor {}", p.worst_at));
    let mut checked = p.checked;
    for arm in Arm::ALL {
        let r = ranker_fd(arm);
        checked += r.checked;
        if r.worst_rel > worst.0 {
            worst = (r.worst_rel, format!("ranker/{} {}", arm.name(), r.worst_at));
        }
    }
    let detail = format!("{checked} scalars, worst relative error {:.2e} ({})", worst.0, worst.1);
    within(minutes(2), start, if worst.0 < 1e-4 { Ok(detail) } else { Err(detail) })
}

// 2 ------------------------------------------------------------------------

fn uniform_init_loss() -> Check {
    let mut worst: f64 = 0.0;
    for (seed, n) in [(1u64, 16usize), (2, 12), (3, 5)] {
        let synth = SynthConfig {
            topics: TopicParams {
                noise_sigma: 0.05,
                ..TopicParams::new(n, 8, 0.5)
            },
            num_authors: 30,
            stream_length: 80,
            num_interactions: 10,
            ..SynthConfig::default()
        };
        let corpus = gen_corpus(&synth, seed).map_err(|e| e.to_string())?;
        let segs: Vec<SegmentEvent> = corpus.segments().cloned().collect();
        let cb = fit_codebook(&segs, &quantizer(n), seed).map_err(|e| e.to_string())?;
        let store = build_store(&segs, &cb).map_err(|e| e.to_string())?;
        let (train, _) = split_pairs(&store, 16, 0.8);
        let mut cfg = PredictorConfig::new(n, seed);
        cfg.l_max = 16;
        let mut model = PredictorModel::new(cfg, Some(&cb)).map_err(|e| e.to_string())?;
        let losses = train_predictor(&mut model, &train, 1, 32, seed).map_err(|e| e.to_string())?;
        worst = worst.max((losses[0] - (n as f64).ln()).abs());
    }
    let detail = format!("N ∈ {{16, 12, 5}}: max |loss − ln N| = {worst:.2e}");
    if worst < 1e-9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// 3 ------------------------------------------------------------------------

fn overfit_cycle() -> Check {
    let start = Instant::now();
    let model = TopicModel::cycle(3, 8, 11).map_err(|e| e.to_string())?;
    let mut segs = Vec::new();
    for a in 0..40u64 {
        segs.extend(gen_author_stream(&model, a, 60, 100 + a).map_err(|e| e.to_string())?);
    }
    let cb = fit_codebook(&segs, &quantizer(3), 11).map_err(|e| e.to_string())?;
    let store = build_store(&segs, &cb).map_err(|e| e.to_string())?;
    let l_max = 8;
    let (train, test) = split_pairs(&store, l_max, 0.8);
    let cfg = PredictorConfig {
        d_m: 16,
        l_enc: 1,
        l_dec: 1,
        ffn_hidden: 32,
        l_max,
        lr: 3e-3,
        ..PredictorConfig::new(3, 11)
    };
    let mut p = PredictorModel::new(cfg, Some(&cb)).map_err(|e| e.to_string())?;
    let batch: Vec<(HistoryWindow, Sid)> = train.iter().map(|t| (t.window.clone(), t.target)).collect();
    let mut reached = None;
    for step in 1..=2000 {
        let idx: Vec<usize> = (0..32).map(|i| (step * 32 + i * 7) % batch.len()).collect();
        let b: Vec<(HistoryWindow, Sid)> = idx.iter().map(|&i| batch[i].clone()).collect();
        let loss = p.train_step(&b).map_err(|e| e.to_string())?;
        if loss < 0.05 {
            reached = Some((step, loss));
            break;
        }
    }
    let full = p.loss(&batch).map_err(|e| e.to_string())?;
    let windows: Vec<&HistoryWindow> = test.iter().map(|t| &t.window).collect();
    let preds = predict_windows(&p, &windows).map_err(|e| e.to_string())?;
    let hits = preds.iter().zip(&test).filter(|(o, t)| o.predicted == t.target).count();
    let acc = hits as f64 / test.len() as f64;
    let detail = match reached {
        Some((s, l)) => format!(
            "batch loss {l:.4} at step {s}, train loss {full:.4}, held-out accuracy {acc:.4} on {} windows",
            test.len()
        ),
        None => format!("loss never fell below 0.05; held-out accuracy {acc:.4}"),
    };
    let pass = reached.is_some() && full < 0.05 && hits == test.len();
    within(minutes(3), start, if pass { Ok(detail) } else { Err(detail) })
}

// 4 ------------------------------------------------------------------------

fn markov_accuracy() -> Check {
    let start = Instant::now();
    let seed = 4;
    let synth = SynthConfig {
        topics: TopicParams {
            noise_sigma: 0.05,
            ..TopicParams::new(16, 16, 0.5)
        },
        num_authors: 1000,
        stream_length: 600,
        num_interactions: 10,
        ..SynthConfig::default()
    };
    let corpus = gen_corpus(&synth, seed).map_err(|e| e.to_string())?;
    let segs: Vec<SegmentEvent> = corpus.segments().cloned().collect();
    let cb = fit_codebook(&segs, &quantizer(16), seed).map_err(|e| e.to_string())?;
    let store = build_store(&segs, &cb).map_err(|e| e.to_string())?;
    let l_max = 16;
    let (train, test) = split_pairs(&store, l_max, 0.8);
    let cfg = PredictorConfig {
        l_max,
        lr: 3e-3,
        ..PredictorConfig::new(16, seed)
    };
    let mut model = PredictorModel::new(cfg, Some(&cb)).map_err(|e| e.to_string())?;
    train_predictor(&mut model, &train, 2000, 64, seed).map_err(|e| e.to_string())?;
    let truth = GroundTruth::from_events(&segs);
    let mapping = foresight_core::eval::topic_sid_majority(truth.pairs_with(&store), 16);
    let oracle = BayesOracle::new(corpus.topic_model.transition.clone(), mapping).map_err(|e| e.to_string())?;
    let rows = accuracy_table(&model, &test, 32, Some((&oracle, &truth))).map_err(|e| e.to_string())?;
    let get = |name: &str| rows.iter().find(|r| r.strategy == name).map(|r| r.accuracy).unwrap();
    let (m, bayes) = (get("model"), get("bayes_oracle"));
    let best = ["last", "max_freq", "max_weight"].map(get).into_iter().fold(0.0, f64::max);
    let detail = format!(
        "{} training windows ({} held out): model {:.4}, best baseline {:.4} (ratio {:.2}), bayes {:.4} (ratio {:.2})",
        train.len(),
        test.len(),
        m,
        best,
        m / best,
        bayes,
        m / bayes
    );
    let pass = train.len() >= 200_000 && m >= 1.5 * best && m >= 0.8 * bayes;
    within(minutes(10), start, if pass { Ok(detail) } else { Err(detail) })
}

// 5 and 6 ------------------------------------------------------------------

pub struct AblationOutcome {
    positive: Vec<f64>,
    negative: Vec<f64>,
    hashes_kept: bool,
}

fn ablation_synth(horizon: Horizon) -> SynthConfig {
    SynthConfig {
        num_authors: 200,
        stream_length: 400,
        num_users: 200,
        num_interactions: 40_000,
        horizon,
        ..SynthConfig::default()
    }
}

fn ctr_gauc(model_gauc: Option<f64>) -> Result<f64, String> {
    model_gauc.ok_or_else(|| "arm diverged or GAUC undefined".to_string())
}

/// Runs the +history and +foresight arms on both corpora for each seed. The
/// two corpora share streams and users (labels differ), so one predictor per
/// seed serves both.
fn ablation(seeds: u64, start: Instant) -> Result<AblationOutcome, String> {
    let mut out = AblationOutcome {
        positive: Vec::new(),
        negative: Vec::new(),
        hashes_kept: true,
    };
    for seed in 0..seeds {
        let pos = gen_corpus(&ablation_synth(Horizon::Next), 500 + seed).map_err(|e| e.to_string())?;
        let neg = gen_corpus(&ablation_synth(Horizon::Current), 500 + seed).map_err(|e| e.to_string())?;
        let segs: Vec<SegmentEvent> = pos.segments().cloned().collect();
        let cb = fit_codebook(&segs, &quantizer(16), seed).map_err(|e| e.to_string())?;
        let store = build_store(&segs, &cb).map_err(|e| e.to_string())?;
        let l_max = 8;
        let (train_pairs, _) = split_pairs(&store, l_max, 0.8);
        let cfg = PredictorConfig {
            l_max,
            lr: 3e-3,
            ..PredictorConfig::new(16, seed)
        };
        let mut predictor = PredictorModel::new(cfg, Some(&cb)).map_err(|e| e.to_string())?;
        train_predictor(&mut predictor, &train_pairs, 600, 64, seed).map_err(|e| e.to_string())?;
        let hash = predictor.content_hash();

        let (itrain, itest) = split_interactions(&store, &pos.interactions, 0.8);
        let strain = ranker_samples(&predictor, &store, &itrain).map_err(|e| e.to_string())?;
        let stest = ranker_samples(&predictor, &store, &itest).map_err(|e| e.to_string())?;
        let (ntrain, ntest) = split_interactions(&store, &neg.interactions, 0.8);
        let relabel = |samples: &[RankSample], recs: &[foresight_core::synth::InteractionRecord]| -> Vec<RankSample> {
            samples
                .iter()
                .zip(recs)
                .map(|(s, r)| {
                    assert_eq!((s.user_id, s.author_id), (r.user_id, r.author_id));
                    RankSample {
                        labels: r.labels,
                        ..s.clone()
                    }
                })
                .collect()
        };
        let (ntrain, ntest) = (relabel(&strain, &ntrain), relabel(&stest, &ntest));

        let rc = RankerConfig {
            lr: 3e-3,
            ..RankerConfig::new(200, 200, predictor.config().d_m, seed)
        };
        let sched = TrainSchedule { epochs: 3, batch: 64, seed };
        for (train, test, sink) in [(&strain, &stest, &mut out.positive), (&ntrain, &ntest, &mut out.negative)] {
            let res = run_ablation(&rc, train, test, &sched, &[Arm::History, Arm::Foresight]);
            let g = |a: Arm| ctr_gauc(res.iter().find(|r| r.arm == a).and_then(|r| r.metric(Task::Ctr)).and_then(|m| m.gauc));
            sink.push(g(Arm::Foresight)? - g(Arm::History)?);
        }
        out.hashes_kept &= predictor.content_hash() == hash;
        eprintln!(
            "  ablation seed {seed}: Δ+ {:+.4}  Δ− {:+.4}  ({:.0?})",
            out.positive.last().unwrap(),
            out.negative.last().unwrap(),
            start.elapsed()
        );
    }
    Ok(out)
}

fn ablation_direction(outcome: &Result<AblationOutcome, String>, start: Instant) -> Check {
    let o = outcome.as_ref().map_err(|e| e.clone())?;
    let (pm, _) = mean_std(&o.positive).unwrap();
    let (nm, _) = mean_std(&o.negative).unwrap();
    let ps = sample_std(&o.positive).unwrap_or(0.0);
    let ns = sample_std(&o.negative).unwrap_or(0.0);
    let detail = format!(
        "{} seeds in {:.0?}; foresight-dependent ΔGAUC(ctr) {pm:+.4} (std {ps:.4}); negative control Δ {nm:+.4}, 2·std {:.4}",
        o.positive.len(),
        start.elapsed(),
        2.0 * ns
    );
    let pass = pm >= 0.005 && nm.abs() < 2.0 * ns;
    within(minutes(15), start, if pass { Ok(detail) } else { Err(detail) })
}

fn stop_gradient(outcome: &Result<AblationOutcome, String>) -> Check {
    // a standalone run over every arm plus the hashes recorded in the ablation
    let w = world::build(&world::small_synth(), 6, 100);
    let before = w.predictor.content_hash();
    let (train, test) = split_interactions(&w.store, &w.corpus.interactions, 0.8);
    let strain = ranker_samples(&w.predictor, &w.store, &train).map_err(|e| e.to_string())?;
    let stest = ranker_samples(&w.predictor, &w.store, &test).map_err(|e| e.to_string())?;
    let rc = RankerConfig::new(10, 20, w.predictor.config().d_m, 6);
    let res = run_ablation(&rc, &strain, &stest, &TrainSchedule { epochs: 5, batch: 16, seed: 6 }, &Arm::ALL);
    let trained = res.iter().filter(|r| r.metric(Task::Ctr).is_some()).count();
    let standalone = w.predictor.content_hash() == before && trained == 3;
    let ablation_ok = outcome.as_ref().map(|o| o.hashes_kept);
    let detail = format!(
        "predictor hash unchanged after training {trained} arms: {standalone}; across ablation seeds: {}",
        ablation_ok.map_or("not run".into(), |b| b.to_string())
    );
    if standalone && ablation_ok.unwrap_or(true) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// 7 and 8 ------------------------------------------------------------------

fn all_of(parts: Vec<(&str, Check)>) -> Check {
    let mut details = Vec::new();
    for (name, c) in parts {
        match c {
            Ok(d) => details.push(format!("{name}: {d}")),
            Err(e) => return Err(format!("{name}: {e}")),
        }
    }
    Ok(details.join("; "))
}

fn metric_oracles() -> Check {
    all_of(vec![
        ("auc", checks::auc_agrees_with_pairwise(200, 71)),
        ("gauc", checks::gauc_hand_example()),
        ("baselines", checks::baselines_match_brute_force(1000, 72)),
    ])
}

fn data_structures() -> Check {
    all_of(vec![
        ("rle", checks::rle_roundtrip(1000, 81)),
        ("log replay", checks::log_replay_equivalence(82)),
        ("k-means", checks::kmeans_inertia_monotone(50, 83)),
        ("codebook", checks::codebook_roundtrip(200, 84)),
    ])
}

// 9 ------------------------------------------------------------------------

fn cli(config: &Path, args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_foresight"))
        .arg("--config")
        .arg(config)
        .args(args)
        .env_remove("FORESIGHT_SEED")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(out.stdout)
    } else {
        Err(format!("{args:?} exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)))
    }
}

fn end_to_end() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut reports = Vec::new();
    let mut slowest = Duration::ZERO;
    for run in ["a", "b"] {
        let root = dir.path().join(run);
        std::fs::create_dir_all(&root).map_err(|e| e.to_string())?;
        let config = root.join("foresight.toml");
        let toml = cli(Path::new("unused"), &["demo-config", "--work-dir", root.join("work").to_str().unwrap()])?;
        std::fs::write(&config, toml).map_err(|e| e.to_string())?;
        let start = Instant::now();
        cli(&config, &["run"])?;
        slowest = slowest.max(start.elapsed());
        let text = std::fs::read(root.join("work/report.txt")).map_err(|e| e.to_string())?;
        let tsv = std::fs::read(root.join("work/report.tsv")).map_err(|e| e.to_string())?;
        reports.push((text, tsv));
    }
    let same = reports[0] == reports[1];
    let detail = format!("reports byte-identical: {same}; slowest demo run {slowest:.1?}");
    if same && slowest <= minutes(10) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// --------------------------------------------------------------------------

fn main() {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |n: u32| wanted.is_empty() || wanted.contains(&n);
    let mut results: Vec<(u32, &str, Check, Duration)> = Vec::new();
    let mut record = |n: u32, name: &'static str, f: &mut dyn FnMut() -> Check| {
        if want(n) {
            let t = Instant::now();
            let r = f();
            let took = t.elapsed();
            println!(
                "criterion {n} {}: {name} ({took:.1?}) {}",
                if r.is_ok() { "PASS" } else { "FAIL" },
                match &r {
                    Ok(d) | Err(d) => d,
                }
            );
            results.push((n, name, r, took));
        }
    };
    record(1, "gradient integrity", &mut gradient_integrity);
    record(2, "uniform-init loss", &mut uniform_init_loss);
    record(3, "overfit capability", &mut overfit_cycle);
    record(4, "next-id accuracy direction", &mut markov_accuracy);
    let mut ablation_outcome: Option<Result<AblationOutcome, String>> = None;
    if want(5) || want(6) {
        let start = Instant::now();
        let outcome = ablation(5, start);
        record(5, "ablation direction", &mut || ablation_direction(&outcome, start));
        ablation_outcome = Some(outcome);
    }
    let outcome = ablation_outcome.unwrap_or_else(|| Err("ablation not run".into()));
    record(6, "stop-gradient contract", &mut || stop_gradient(&outcome));
    record(7, "metric oracles", &mut metric_oracles);
    record(8, "data-structure properties", &mut data_structures);
    record(9, "end-to-end determinism", &mut end_to_end);

    let failed = results.iter().filter(|r| r.2.is_err()).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    // verdicts are always printed; the exit status gates only when asked to,
    // so one failing criterion does not stop the rest of the test suite
    if failed > 0 && std::env::var_os("FORESIGHT_ACCEPTANCE_STRICT").is_some_and(|v| v == "1") {
        std::process::exit(1);
    }
}
