//! Acceptance suite: one test per release criterion, each printing a
//! single PASS/FAIL line (run with `--nocapture` to see them all).
//! Covers gradient correctness, attention and normalization invariants,
//! metric oracles, learning capability on constructed tasks, pipeline
//! ablation direction, significance-test calibration, and determinism.

use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use convernet_core::data::Instance;
use convernet_core::features::CONTEXT_DIM;
use convernet_core::metrics::{
    auc, average_precision, permutation_test, MetricKind, PredictionSet,
};
use convernet_core::nn::attention::{LengthAttention, UniformAttention};
use convernet_core::nn::check::check_params;
use convernet_core::nn::embedding::{embed_and_pool, init_embedding};
use convernet_core::nn::ln_lstm::{LnLstmParams, LN_EPS};
use convernet_core::nn::lstm::{bilstm_forward, LstmParams, RecurrentCell};
use convernet_core::nn::mlp::MlpParams;
use convernet_core::nn::{AttentionKind, ConverNet, Mode, ParamStore};
use convernet_core::pipeline::{
    cmd_evaluate, cmd_prepare, cmd_train, Corpus, EvalArgs, ModelKind, PrepareConfig, TrainArgs,
};
use convernet_core::synth;
use convernet_core::tensor::{Tape, Tensor};
use convernet_core::train::{score_instances, train, ModelConfig};

fn verdict(name: &str, ok: bool, detail: &str) {
    println!("{} {name} — {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "{name}: {detail}");
}

// ---------------------------------------------------------------- 1

#[test]
fn gradient_checks_every_layer_and_the_full_model() {
    let t0 = Instant::now();
    let mut failures: Vec<String> = Vec::new();
    // layer-level: analytic gradients within rel 1e-6 of central differences
    let mut layer = |name: &str, report: convernet_core::tensor::gradcheck::GradReport| {
        if !report.pass {
            failures.push(format!("{name}: {}", report.worst));
        }
    };

    let mut store = ParamStore::new();
    let emb = init_embedding(&mut store, "emb", 7, 3, 0.5, 3).unwrap();
    let r = check_params(&mut store, 1e-5, 1e-10, 1e-6, |tape, bind| {
        let ctx = tape.constant(Tensor::from_vec(vec![0.4, -0.3]));
        let pooled = embed_and_pool(tape, bind.value(emb), &[2, 5, 6], ctx)?;
        let sq = tape.mul(pooled, pooled)?;
        tape.sum(sq)
    })
    .unwrap();
    layer("embedding+pool", r);

    let mut store = ParamStore::new();
    let cell = LstmParams::init(&mut store, "c", 3, 2, 0.4, 5).unwrap();
    let r = check_params(&mut store, 1e-5, 1e-10, 1e-6, |tape, bind| {
        let x = tape.constant(Tensor::from_vec(vec![0.9, -0.2, 0.5]));
        let m0 = tape.constant(Tensor::from_vec(vec![0.1, -0.6]));
        let c0 = tape.constant(Tensor::from_vec(vec![0.3, 0.8]));
        let (m, c) = cell.step(tape, bind, x, m0, c0)?;
        let joined = tape.concat(&[m, c])?;
        let sq = tape.mul(joined, joined)?;
        tape.sum(sq)
    })
    .unwrap();
    layer("lstm step", r);

    let mut store = ParamStore::new();
    let cell = LnLstmParams::init(&mut store, "c", 2, 3, 0.4, 7).unwrap();
    for name in ["c.peep_i", "c.peep_f", "c.peep_o", "c.b_i", "c.b_o"] {
        let id = store.id_of(name).unwrap();
        for (k, v) in store.get_mut(id).data_mut().iter_mut().enumerate() {
            *v = 0.1 * (k as f64 + 1.0);
        }
    }
    let r = check_params(&mut store, 1e-5, 1e-10, 1e-6, |tape, bind| {
        let x = tape.constant(Tensor::from_vec(vec![0.7, -1.1]));
        let h0 = tape.constant(Tensor::from_vec(vec![0.2, -0.4, 0.6]));
        let c0 = tape.constant(Tensor::from_vec(vec![-0.5, 0.3, 0.9]));
        let (h, c) = cell.step(tape, bind, x, h0, c0)?;
        let joined = tape.concat(&[h, c])?;
        let sq = tape.mul(joined, joined)?;
        tape.sum(sq)
    })
    .unwrap();
    layer("layer-normalized lstm step", r);

    let mut store = ParamStore::new();
    let fwd = LnLstmParams::init(&mut store, "f", 2, 2, 0.4, 11).unwrap();
    let bwd = LnLstmParams::init(&mut store, "b", 2, 2, 0.4, 13).unwrap();
    let r = check_params(&mut store, 1e-5, 1e-10, 1e-6, |tape, bind| {
        let seq = tape.constant(
            Tensor::from_rows(&[vec![0.5, -0.5], vec![1.0, 0.2], vec![-0.3, 0.8]]).unwrap(),
        );
        let out = bilstm_forward(tape, bind, &fwd, &bwd, seq, 3)?;
        let sq = tape.mul(out, out)?;
        tape.sum(sq)
    })
    .unwrap();
    layer("bidirectional driver", r);

    let mut store = ParamStore::new();
    let att = LengthAttention::init(&mut store, "a", 4, 0.5, 17).unwrap();
    let r = check_params(&mut store, 1e-5, 1e-10, 1e-6, |tape, bind| {
        let h = tape.constant(
            Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0], vec![4.0, -4.0]]).unwrap(),
        );
        let out = att.apply(tape, bind, h, 3)?;
        let sq = tape.mul(out, out)?;
        tape.sum(sq)
    })
    .unwrap();
    layer("length-conditioned attention", r);

    let mut store = ParamStore::new();
    let att = UniformAttention::init(&mut store, "a", 4, 0.5, 19).unwrap();
    let r = check_params(&mut store, 1e-5, 1e-10, 1e-6, |tape, bind| {
        let h = tape.constant(
            Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0], vec![4.0, -4.0]]).unwrap(),
        );
        let out = att.apply(tape, bind, h, 3)?;
        let sq = tape.mul(out, out)?;
        tape.sum(sq)
    })
    .unwrap();
    layer("shared attention", r);

    let mut store = ParamStore::new();
    let w = store
        .add("merge.w", convernet_core::tensor::gaussian_init(&[4, 3], 0.4, 23).unwrap())
        .unwrap();
    let r = check_params(&mut store, 1e-5, 1e-10, 1e-6, |tape, bind| {
        let x = tape.constant(Tensor::from_vec(vec![0.5, -0.9, 0.2, 1.1]));
        let lin = tape.matmul(x, bind.value(w))?;
        let z = tape.tanh(lin)?;
        let sq = tape.mul(z, z)?;
        tape.sum(sq)
    })
    .unwrap();
    layer("merge", r);

    let mut store = ParamStore::new();
    let mlp = MlpParams::init(&mut store, "m", 3, &[4], 0.9, 0.4, 29).unwrap();
    let r = check_params(&mut store, 1e-5, 1e-10, 1e-6, |tape, bind| {
        let z = tape.constant(
            Tensor::from_rows(&[
                vec![0.5, -0.2, 0.8],
                vec![-0.4, 0.9, 0.1],
                vec![1.2, 0.3, -0.7],
                vec![0.0, -1.0, 0.6],
            ])
            .unwrap(),
        );
        let (y, _) = mlp.decode(tape, bind, z, Mode::Train)?;
        let sq = tape.mul(y, y)?;
        tape.sum(sq)
    })
    .unwrap();
    layer("batch-normalized decoder", r);

    // end-to-end on a 3-post instance (batched with a 2-post one so the
    // decoder sees real batch statistics), rel 1e-5
    let cfg = ModelConfig {
        d_w: 4,
        hidden: 3,
        stack_depth: 1,
        d_b: 2,
        merge_dim: 3,
        mlp_depth: 1,
        mlp_hidden: 3,
        l_max: 4,
        ..ModelConfig::default()
    };
    let mut store = ParamStore::new();
    let model = ConverNet::build(&mut store, &cfg, 8, 2, Some(2)).unwrap();
    let mk = |label: u8, posts: Vec<Vec<u32>>, bg: u32| Instance {
        thread_id: "t".into(),
        target_post_id: "p".into(),
        label,
        contexts: posts.iter().map(|_| vec![0.1, -0.2]).collect(),
        posts,
        background: Some(bg),
    };
    let a = mk(1, vec![vec![2, 3], vec![4], vec![5, 6, 7]], 1);
    let b = mk(0, vec![vec![6], vec![3, 2]], 0);
    let r = check_params(&mut store, 1e-5, 1e-8, 1e-5, |tape, bind| {
        let (y, _) = model.forward_batch(tape, bind, &[&a, &b], Mode::Train)?;
        tape.sum(y)
    })
    .unwrap();
    if !r.pass {
        failures.push(format!("full model: {}", r.worst));
    }

    let secs = t0.elapsed().as_secs_f64();
    let ok = failures.is_empty() && secs < 60.0;
    verdict(
        "gradient checks",
        ok,
        &format!("8 layers + full model vs central differences in {secs:.1}s {failures:?}"),
    );
}

// ---------------------------------------------------------------- 2

#[test]
fn length_conditioned_attention_invariants() {
    let mut store = ParamStore::new();
    let att = LengthAttention::init(&mut store, "a", 8, 0.5, 31).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(97);
    let mut ok = true;
    let mut detail = String::new();

    // single-post sequences pass the first row through untouched
    {
        let mut tape = Tape::new();
        let bind = store.bind(&mut tape, Mode::Eval);
        let h = tape.constant(
            Tensor::from_rows(&[vec![2.5, -1.25, 0.75], vec![9.0, 9.0, 9.0]]).unwrap(),
        );
        let out = att.apply(&mut tape, &bind, h, 1).unwrap();
        if tape.data(out).data() != [2.5, -1.25, 0.75] {
            ok = false;
            detail = "length-1 output differs from the first row".into();
        }
    }

    // 1000 random cases: output stays inside the per-column convex hull
    let mut hull_violations = 0;
    for _ in 0..1000 {
        let s = rng.random_range(1..=8usize);
        let d = rng.random_range(1..=6usize);
        for v in store.get_mut(att.w).data_mut().iter_mut() {
            *v = rng.random_range(-4.0..4.0);
        }
        let rows: Vec<Vec<f64>> = (0..s)
            .map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        let mut tape = Tape::new();
        let bind = store.bind(&mut tape, Mode::Eval);
        let h = tape.constant(Tensor::from_rows(&rows).unwrap());
        let out = att.apply(&mut tape, &bind, h, s).unwrap();
        for j in 0..d {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let v = tape.data(out).data()[j];
            if v < lo - 1e-12 || v > hi + 1e-12 {
                hull_violations += 1;
            }
        }
    }
    if hull_violations > 0 {
        ok = false;
        detail = format!("{hull_violations} convex-hull violations");
    }

    // gradient reaches only row s-1, columns < s
    {
        let mut tape = Tape::new();
        let bind = store.bind(&mut tape, Mode::Train);
        let h = tape.leaf(
            Tensor::from_rows(&[vec![1.0, 0.5], vec![-0.5, 2.0], vec![3.0, -1.0], vec![0.1, 0.2]])
                .unwrap(),
        );
        let out = att.apply(&mut tape, &bind, h, 3).unwrap();
        let loss = tape.sum(out).unwrap();
        tape.backward(loss).unwrap();
        let gw = tape.grad(bind.value(att.w)).unwrap();
        for r in 0..8 {
            for k in 0..8 {
                let g = gw.at2(r, k);
                let reachable = r == 2 && k < 3;
                if (!reachable && g != 0.0) || (reachable && g == 0.0) {
                    ok = false;
                    detail = format!("gradient leak at logits ({r},{k}) = {g}");
                }
            }
        }
        let gh = tape.grad(h).unwrap();
        if gh.row(3).iter().any(|v| *v != 0.0) {
            ok = false;
            detail = "gradient reached a padded input row".into();
        }
    }

    // adding a constant to a length's logit row changes nothing
    {
        let rows = Tensor::from_rows(&[vec![1.0, -2.0], vec![0.5, 0.5], vec![-3.0, 4.0]]).unwrap();
        let mut tape = Tape::new();
        let bind = store.bind(&mut tape, Mode::Eval);
        let h = tape.constant(rows.clone());
        let out = att.apply(&mut tape, &bind, h, 3).unwrap();
        let before = tape.data(out).data().to_vec();
        for v in store.get_mut(att.w).row_mut(2) {
            *v += 11.75;
        }
        let mut tape = Tape::new();
        let bind = store.bind(&mut tape, Mode::Eval);
        let h = tape.constant(rows);
        let out = att.apply(&mut tape, &bind, h, 3).unwrap();
        let drift = before
            .iter()
            .zip(tape.data(out).data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        if drift >= 1e-9 {
            ok = false;
            detail = format!("logit shift moved the output by {drift:.2e}");
        }
    }

    if ok {
        detail = "identity at length 1, 1000-case hull check, gradient locality, shift invariance"
            .into();
    }
    verdict("length-conditioned attention invariants", ok, &detail);
}

// ---------------------------------------------------------------- 3

#[test]
fn layer_normalization_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_mean = 0.0f64;
    let mut worst_std = 0.0f64;
    let mut worst_scale = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(3..=32usize);
        let magnitude = 10f64.powi(rng.random_range(-2..=2));
        let z: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0) * magnitude).collect();

        let mut tape = Tape::new();
        let zv = tape.constant(Tensor::from_vec(z.clone()));
        let out = tape.standardize(zv, LN_EPS).unwrap();
        let y = tape.data(out).data().to_vec();
        let mean = y.iter().sum::<f64>() / n as f64;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        worst_mean = worst_mean.max(mean.abs());
        worst_std = worst_std.max((var.sqrt() - 1.0).abs());

        // positive rescaling of the input leaves the output unchanged
        let c = rng.random_range(0.01..100.0);
        let scaled: Vec<f64> = z.iter().map(|v| v * c).collect();
        let mut tape2 = Tape::new();
        let sv = tape2.constant(Tensor::from_vec(scaled));
        let out2 = tape2.standardize(sv, LN_EPS).unwrap();
        let drift = y
            .iter()
            .zip(tape2.data(out2).data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        worst_scale = worst_scale.max(drift);
    }
    let ok = worst_mean < 1e-9 && worst_std < 1e-6 && worst_scale < 1e-9;
    verdict(
        "layer normalization invariants",
        ok,
        &format!(
            "200 cases: |mean| <= {worst_mean:.2e}, |std-1| <= {worst_std:.2e}, \
             rescale drift <= {worst_scale:.2e}"
        ),
    );
}

// ---------------------------------------------------------------- 4

#[test]
fn metric_implementations_match_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(211);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let n = rng.random_range(2..=200usize);
        let rows: Vec<(String, f64, u8)> = (0..n)
            .map(|i| {
                // half the cases quantize scores so tied runs are exercised
                let score = if case % 2 == 0 {
                    rng.random_range(0..=16) as f64 / 16.0
                } else {
                    rng.random::<f64>()
                };
                let label = if i == 0 {
                    1
                } else if i == 1 {
                    0
                } else {
                    rng.random_range(0..2u8)
                };
                (format!("x{i}"), score, label)
            })
            .collect();
        // O(P*N) pairwise oracle with half-credit on ties
        let mut wins = 0.0f64;
        let mut pairs = 0.0f64;
        for (_, sp, _) in rows.iter().filter(|r| r.2 == 1) {
            for (_, sn, _) in rows.iter().filter(|r| r.2 == 0) {
                pairs += 1.0;
                if sp > sn {
                    wins += 1.0;
                } else if sp == sn {
                    wins += 0.5;
                }
            }
        }
        let oracle = wins / pairs;
        let fast = auc(&PredictionSet::new(rows).unwrap()).unwrap();
        worst = worst.max((fast - oracle).abs());
    }
    let rank_ok = worst <= 1e-12;

    // ranking [positive, negative, positive] top-down
    let p = PredictionSet::new(vec![
        ("a".into(), 0.9, 1),
        ("b".into(), 0.5, 0),
        ("c".into(), 0.2, 1),
    ])
    .unwrap();
    let ap = average_precision(&p).unwrap();
    let ap_ok = (ap - 0.8333).abs() < 1e-4;

    let perfect = PredictionSet::new(vec![
        ("a".into(), 0.9, 1),
        ("b".into(), 0.8, 1),
        ("c".into(), 0.3, 0),
        ("d".into(), 0.1, 0),
    ])
    .unwrap();
    let perfect_ok =
        auc(&perfect).unwrap() == 1.0 && average_precision(&perfect).unwrap() == 1.0;

    let ok = rank_ok && ap_ok && perfect_ok;
    verdict(
        "metric oracles",
        ok,
        &format!(
            "rank-sum vs pairwise max gap {worst:.1e}; interleaved AP {ap:.4}; \
             perfect ranking scores 1.0"
        ),
    );
}

// ---------------------------------------------------------------- 5

#[test]
fn memorizes_a_small_planted_token_set() {
    let t0 = Instant::now();
    let (instances, vocab) = synth::planted_token_instances(64, 11);
    let cfg = ModelConfig {
        d_w: 16,
        hidden: 16,
        stack_depth: 1,
        d_b: 2,
        merge_dim: 8,
        mlp_depth: 1,
        mlp_hidden: 8,
        batch_size: 16,
        lr: 1e-2,
        l_max: 16,
        max_epochs: 200,
        patience: 200,
        seed: 5,
        attention: AttentionKind::Dwdl,
        ..ModelConfig::default()
    };
    let mut store = ParamStore::new();
    let model = ConverNet::build(&mut store, &cfg, vocab, CONTEXT_DIM, None).unwrap();
    let report = train(&mut store, &model, &instances, &instances, &cfg).unwrap();
    let hit = report
        .history
        .iter()
        .find(|h| h.val_accuracy >= 0.99)
        .map(|h| h.epoch);
    let secs = t0.elapsed().as_secs_f64();
    let ok = hit.is_some() && secs < 300.0;
    verdict(
        "memorization capacity",
        ok,
        &format!(
            "train accuracy >= 0.99 at epoch {hit:?} of {} in {secs:.0}s",
            report.history.len()
        ),
    );
}

// ---------------------------------------------------------------- 6

#[test]
fn length_conditioned_attention_learns_a_shifting_cue() {
    let t0 = Instant::now();
    let (train_set, test_set, vocab) = synth::length_cue_task(2000, 500, 5);
    let (fit, val) = train_set.split_at(1800);
    let run = |attention: AttentionKind| {
        let cfg = ModelConfig {
            d_w: 16,
            hidden: 16,
            stack_depth: 1,
            d_b: 2,
            merge_dim: 16,
            mlp_depth: 1,
            mlp_hidden: 16,
            batch_size: 32,
            lr: 1e-2,
            l_max: 12,
            max_epochs: 12,
            patience: 3,
            seed: 7,
            attention,
            ..ModelConfig::default()
        };
        let mut store = ParamStore::new();
        let model = ConverNet::build(&mut store, &cfg, vocab, CONTEXT_DIM, None).unwrap();
        let report = train(&mut store, &model, fit, val, &cfg).unwrap();
        let predictions = score_instances(&model, &report.best_store, &test_set).unwrap();
        auc(&predictions).unwrap()
    };
    let auc_conditioned = run(AttentionKind::Dwdl);
    let auc_plain = run(AttentionKind::None);
    let secs = t0.elapsed().as_secs_f64();
    let ok = auc_conditioned >= 0.90 && secs < 600.0;
    verdict(
        "shifting-cue discrimination",
        ok,
        &format!(
            "test AUC {auc_conditioned:.3} with length-conditioned attention \
             vs {auc_plain:.3} without, in {secs:.0}s"
        ),
    );
}

// ---------------------------------------------------------------- 7

#[test]
fn context_features_do_not_hurt_on_a_thread_corpus() {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let posts = synth::reddit_corpus(5000, 17);
    synth::write_posts_jsonl(&root.join("posts.jsonl"), &posts).unwrap();
    std::fs::write(root.join("lexicon.tsv"), synth::lexicon_tsv()).unwrap();

    let mut pcfg = PrepareConfig::new(Corpus::Reddit);
    pcfg.lexicon = Some(root.join("lexicon.tsv"));
    let prep = root.join("prep");
    cmd_prepare(&[root.join("posts.jsonl")], &prep, &pcfg).unwrap();

    std::fs::write(
        root.join("net.cfg"),
        "d_w=16\nhidden=16\nmerge_dim=16\nmlp_depth=1\nmlp_hidden=16\n\
         batch_size=64\nlr=0.01\nmax_epochs=6\npatience=2\nl_max=20\nseed=9\n",
    )
    .unwrap();
    let run = |out: PathBuf, attention: AttentionKind, ablate: Vec<String>| {
        let report = cmd_train(&TrainArgs {
            prepared: prep.clone(),
            out,
            model: ModelKind::ConverNet,
            attention: Some(attention),
            ablate,
            config: Some(root.join("net.cfg")),
            seed: None,
        })
        .unwrap();
        report.auc
    };
    let auc_full = run(root.join("full"), AttentionKind::Dwdl, vec![]);
    let auc_content = run(
        root.join("content-only"),
        AttentionKind::None,
        vec!["context".into()],
    );
    let secs = t0.elapsed().as_secs_f64();
    let ok = auc_full >= auc_content - 0.005 && secs < 1800.0;
    verdict(
        "context ablation direction",
        ok,
        &format!(
            "validation AUC {auc_full:.3} full vs {auc_content:.3} content-only \
             on 5000 threads in {secs:.0}s"
        ),
    );
}

// ---------------------------------------------------------------- 8

#[test]
fn permutation_test_p_values_are_uniform_under_the_null() {
    let n_tests = 500;
    let rounds = 199;
    let mut rng = ChaCha8Rng::seed_from_u64(401);
    let mut ps = Vec::with_capacity(n_tests);
    for case in 0..n_tests {
        let rows = |rng: &mut ChaCha8Rng| -> Vec<(String, f64, u8)> {
            (0..80)
                .map(|i| (format!("x{i}"), rng.random::<f64>(), (i < 40) as u8))
                .collect()
        };
        let a = PredictionSet::new(rows(&mut rng)).unwrap();
        let b = PredictionSet::new(rows(&mut rng)).unwrap();
        let p = permutation_test(&a, &b, MetricKind::Auc, rounds, 1000 + case as u64).unwrap();
        ps.push(p);
    }
    ps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // Kolmogorov-Smirnov statistic against the uniform CDF
    let n = ps.len() as f64;
    let mut ks = 0.0f64;
    for (i, p) in ps.iter().enumerate() {
        ks = ks.max(((i + 1) as f64 / n - p).abs());
        ks = ks.max((p - i as f64 / n).abs());
    }
    let ok = ks < 0.05;
    verdict(
        "significance calibration",
        ok,
        &format!("{n_tests} null comparisons, KS distance to uniform {ks:.3}"),
    );
}

// ---------------------------------------------------------------- 9

#[test]
fn the_whole_pipeline_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let posts = synth::reddit_corpus(220, 23);
    synth::write_posts_jsonl(&root.join("posts.jsonl"), &posts).unwrap();
    std::fs::write(root.join("lexicon.tsv"), synth::lexicon_tsv()).unwrap();
    std::fs::write(
        root.join("net.cfg"),
        "d_w=8\nhidden=8\nmerge_dim=8\nmlp_depth=1\nmlp_hidden=8\n\
         batch_size=16\nmax_epochs=2\npatience=5\nl_max=20\nseed=3\n",
    )
    .unwrap();

    let run = |tag: &str| {
        let mut pcfg = PrepareConfig::new(Corpus::Reddit);
        pcfg.lexicon = Some(root.join("lexicon.tsv"));
        let prep = root.join(format!("prep-{tag}"));
        cmd_prepare(&[root.join("posts.jsonl")], &prep, &pcfg).unwrap();
        let model_dir = root.join(format!("model-{tag}"));
        let report = cmd_train(&TrainArgs {
            prepared: prep.clone(),
            out: model_dir.clone(),
            model: ModelKind::ConverNet,
            attention: None,
            ablate: vec![],
            config: Some(root.join("net.cfg")),
            seed: None,
        })
        .unwrap();
        let eval_dir = root.join(format!("eval-{tag}"));
        cmd_evaluate(&EvalArgs {
            model_dir,
            instances: prep.join("test.instances"),
            out: eval_dir.clone(),
            model: None,
            embeddings: None,
            vocab: None,
        })
        .unwrap();
        (
            report.to_lines(),
            std::fs::read(eval_dir.join("predictions.csv")).unwrap(),
            std::fs::read(eval_dir.join("metrics.txt")).unwrap(),
        )
    };
    let (val_a, csv_a, metrics_a) = run("a");
    let (val_b, csv_b, metrics_b) = run("b");
    let ok = val_a == val_b && csv_a == csv_b && metrics_a == metrics_b;
    verdict(
        "end-to-end determinism",
        ok,
        "two identically-seeded prepare/train/evaluate runs byte-match",
    );
}
