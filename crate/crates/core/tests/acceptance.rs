//! Acceptance suite: one test per criterion, each printing a PASS line
//! with the measured numbers (run with `--nocapture` to see them).
//!
//! The heavy fixtures (default synthetic dataset, full-fit 3-channel
//! model) are built once and shared across criteria.

use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use wristemg::evaluation::{channel_sweep, evaluate_gr, kfold_by_sequence, EvalConfig};
use wristemg::features::{burg_ar, time_features};
use wristemg::models::{load_model, save_model, ForceNorm, KnnModel, RegressionTree, TreeNode};
use wristemg::pipeline::{
    fit_pipeline, predict_sequence, FittedPipeline, FoldContext, PipelineConfig,
};
use wristemg::preprocess::percentile_interpolated;
use wristemg::reduction::PcaModel;
use wristemg::selection::{mutual_information, MrmrTarget};
use wristemg::stream::StreamEngine;
use wristemg::synthgen::{generate_dataset, SynthSpec};
use wristemg::types::{Dataset, GestureLabel, Sequence};

fn default_dataset() -> &'static Dataset {
    static DATASET: OnceLock<Dataset> = OnceLock::new();
    DATASET.get_or_init(|| generate_dataset(&SynthSpec::default()).expect("default generation"))
}

/// Full fit on all 72 sequences, 3 channels, gesture-ranked.
fn model3() -> &'static FittedPipeline {
    static MODEL: OnceLock<FittedPipeline> = OnceLock::new();
    MODEL.get_or_init(|| {
        let d = default_dataset();
        let seqs: Vec<&Sequence> = d.sequences.iter().collect();
        fit_pipeline(&seqs, &PipelineConfig::default(), MrmrTarget::Gesture, None)
            .expect("full fit")
    })
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}

#[test]
fn criterion_1_unit_oracles() {
    let start = Instant::now();

    // Feature formulas against hand arithmetic.
    let f = time_features(&[3.0, 4.0, 3.0, 4.0], 1).expect("features");
    assert!(close(f[0], 3.5, 1e-9), "MAV");
    assert!(close(f[1], 12.5f64.sqrt(), 1e-9), "RMS");
    assert!(close(f[2], 0.25, 1e-9), "VAR");
    assert!(close(f[3], 0.5, 1e-9), "STD");
    assert!(close(f[4], 4.0, 1e-9), "MAX");
    assert!(close(f[5], 3.0, 1e-9), "MIN");
    assert!(close(f[6], 3.0, 1e-9), "WL");
    let g = time_features(&[1.0, 3.0, 2.0], 1).expect("features");
    assert!(close(g[6], 3.0, 1e-9), "WL of [1,3,2]");
    let c = time_features(&[-2.5; 20], 4).expect("features");
    assert!(close(c[0], 2.5, 1e-9) && c[2] == 0.0 && c[6] == 0.0 && c[7..] == [0.0; 4]);

    // Mutual information: self-information of a uniform 4-symbol series,
    // and a hand-evaluated joint table.
    let a: Vec<u32> = (0..400).map(|i| i % 4).collect();
    assert!(close(mutual_information(&a, &a).unwrap(), 2.0, 1e-9));
    let x = vec![0u32, 0, 0, 1, 1, 1];
    let y = vec![0u32, 0, 1, 0, 1, 1];
    let hand = {
        let mut s = 0.0f64;
        for pxy in [2.0f64 / 6.0, 1.0 / 6.0, 1.0 / 6.0, 2.0 / 6.0] {
            s += pxy * (pxy / 0.25).log2();
        }
        s
    };
    assert!(close(mutual_information(&x, &y).unwrap(), hand, 1e-9));

    // Percentile by interpolated order statistics.
    let v: Vec<f64> = (0..=100).map(|i| i as f64).collect();
    assert!(close(percentile_interpolated(&v, 95.0), 95.0, 1e-9));
    assert!(close(percentile_interpolated(&[1.0, 3.0], 50.0), 2.0, 1e-9));

    // Force normalization example and exact round trip.
    let n = ForceNorm::fit(&v).unwrap();
    assert!(close(n.offset, 0.0, 1e-9) && close(n.scale, 95.0, 1e-9));
    assert!(close(n.apply(95.0), 1.0, 1e-9));
    for f in [0.0, 12.3, 101.0] {
        assert!((n.invert(n.apply(f)) - f).abs() <= 1e-9);
    }

    // Burg on a known AR(1) process.
    let mut rng = ChaCha8Rng::seed_from_u64(12345);
    let mut xs = vec![0.0f64; 2000];
    for i in 1..xs.len() {
        let e: f64 = StandardNormal.sample(&mut rng);
        xs[i] = 0.9 * xs[i - 1] + e;
    }
    let coeff = burg_ar(&xs, 1).unwrap()[0];
    assert!((coeff - 0.9).abs() <= 0.05, "Burg AR(1) estimate {coeff}");

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "criterion 1 took {elapsed:.1} s");
    println!("criterion 1: PASS — unit oracles ok, burg={coeff:.4}, {elapsed:.2} s");
}

#[test]
fn criterion_2_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(777);

    // KNN against an independent brute-force scan on 50 random instances.
    let mut checked = 0;
    while checked < 50 {
        let n = rng.random_range(30..200);
        let dim = rng.random_range(2..=5);
        let k = rng.random_range(1..=10.min(n));
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let labels: Vec<GestureLabel> = (0..n)
            .map(|_| GestureLabel::from_index(rng.random_range(0..6)).unwrap())
            .collect();
        let knn = KnnModel::fit(&rows, &labels, k).unwrap();
        for _ in 0..5 {
            let q: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            // Brute force: full sort of (distance, index), then the same
            // documented vote rules evaluated from scratch.
            let mut all: Vec<(f64, usize)> = rows
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    let d2: f64 = r.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum();
                    (d2.sqrt(), i)
                })
                .collect();
            all.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            let mut votes = [0usize; 6];
            let mut sums = [0.0f64; 6];
            for &(d, i) in &all[..k] {
                votes[labels[i].index()] += 1;
                sums[labels[i].index()] += d;
            }
            let top = *votes.iter().max().unwrap();
            let expect = (0..6)
                .filter(|&c| votes[c] == top)
                .min_by(|&a, &b| sums[a].total_cmp(&sums[b]).then(a.cmp(&b)))
                .unwrap();
            assert_eq!(
                knn.predict(&q).unwrap(),
                GestureLabel::from_index(expect).unwrap(),
                "knn diverged from brute force"
            );
            checked += 1;
        }
    }

    // PCA reconstruction with all components on random 3-6 dim matrices.
    for dim in 3..=6 {
        let rows: Vec<Vec<f64>> = (0..80)
            .map(|_| {
                let base: f64 = rng.random_range(-1.0..1.0);
                (0..dim)
                    .map(|j| base * (j as f64 + 1.0) + rng.random_range(-0.5..0.5))
                    .collect()
            })
            .collect();
        let pca = PcaModel::fit(&rows, 0.95).unwrap();
        let back = pca.reconstruct(&pca.project_all(&rows).unwrap()).unwrap();
        for (orig, rec) in rows.iter().zip(&back) {
            for (a, b) in orig.iter().zip(rec) {
                assert!((a - b).abs() < 1e-8, "PCA reconstruction {a} vs {b}");
            }
        }
    }

    // Regression tree on the hand-derived 1-D step dataset.
    let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
    let targets: Vec<f64> = (0..10).map(|i| if i < 5 { 0.0 } else { 1.0 }).collect();
    let tree = RegressionTree::fit(&rows, &targets, 2).unwrap();
    match &tree.nodes[0] {
        TreeNode::Split { threshold, .. } => {
            assert!(
                *threshold > 4.0 && *threshold < 5.0,
                "threshold {threshold}"
            )
        }
        _ => panic!("expected root split"),
    }
    assert_eq!(tree.predict(&[3.0]).unwrap(), 0.0);
    assert_eq!(tree.predict(&[7.0]).unwrap(), 1.0);

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "criterion 2 took {elapsed:.1} s");
    println!("criterion 2: PASS — 50 KNN instances, PCA 3-6 dims, step tree, {elapsed:.2} s");
}

#[test]
fn criterion_3_default_synthetic_pipeline() {
    let start = Instant::now();
    let d = default_dataset();
    assert_eq!(d.sequences.len(), 72, "default dataset size");
    let gr_data = d.gesture_subset();
    assert_eq!(gr_data.sequences.len(), 60, "gesture subset size");

    let cfg = PipelineConfig::default();
    let eval = EvalConfig::default();

    // mRMR top-3 on the full dataset, both targets.
    let all: Vec<&Sequence> = d.sequences.iter().collect();
    let ctx = FoldContext::prepare(&all, &cfg, None).expect("context");
    let mut tops = Vec::new();
    for target in [MrmrTarget::Gesture, MrmrTarget::Force] {
        let ranking = ctx.rank(target).expect("ranking");
        let mut top: Vec<u8> = ranking.order[..3].iter().map(|c| c.get()).collect();
        top.sort();
        assert_eq!(
            top,
            vec![2, 5, 8],
            "{target:?} top-3 was {:?}",
            ranking.order
        );
        tops.push(format!(
            "{target:?}: {:?}",
            ranking.order[..3]
                .iter()
                .map(|c| c.get())
                .collect::<Vec<_>>()
        ));
    }

    // Channel sweep 1..3, one ranking per fold, both heads.
    let sweep = channel_sweep(&gr_data, d, &cfg, &eval, &[1, 2, 3]).expect("sweep");
    let acc: Vec<f64> = sweep.points.iter().map(|p| p.gr_accuracy_mean).collect();
    let md: Vec<f64> = sweep
        .points
        .iter()
        .map(|p| p.fe_mdape_mean.expect("mdape defined on synthetic data"))
        .collect();

    // 3-channel targets.
    assert!(acc[2] >= 0.85, "GR accuracy at 3 channels = {:.4}", acc[2]);
    assert!(md[2] <= 12.0, "FE MdAPE at 3 channels = {:.2}%", md[2]);

    // Monotone improvement 1 -> 3 within a 2-point noise tolerance.
    for i in 1..3 {
        assert!(
            acc[i] * 100.0 >= acc[i - 1] * 100.0 - 2.0,
            "GR accuracy dropped from {} to {} channels: {:?}",
            i,
            i + 1,
            acc
        );
        assert!(
            md[i] <= md[i - 1] + 2.0,
            "FE MdAPE rose from {} to {} channels: {:?}",
            i,
            i + 1,
            md
        );
    }
    assert!(
        acc[0] < acc[2],
        "1-channel accuracy must stay below 3-channel"
    );

    // 8-channel gesture recognition.
    let mut cfg8 = cfg.clone();
    cfg8.model.channels = 8;
    let plan = kfold_by_sequence(&gr_data, eval.folds, eval.seed).expect("plan");
    let gr8 = evaluate_gr(&gr_data, &cfg8, &plan).expect("8-channel evaluation");
    assert!(
        gr8.mean_accuracy >= 0.90,
        "GR accuracy at 8 channels = {:.4}",
        gr8.mean_accuracy
    );

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 600.0, "criterion 3 took {elapsed:.1} s");
    println!(
        "criterion 3: PASS — top3 {{2,5,8}} [{}]; GR acc 1/2/3ch = {:.3}/{:.3}/{:.3}, 8ch = {:.3}; \
         FE MdAPE 1/2/3ch = {:.2}/{:.2}/{:.2}%; {elapsed:.1} s",
        tops.join("; "),
        acc[0],
        acc[1],
        acc[2],
        gr8.mean_accuracy,
        md[0],
        md[1],
        md[2]
    );
}

#[test]
fn criterion_4_stream_batch_equivalence_and_latency() {
    let start = Instant::now();
    let fitted = model3();
    let d = default_dataset();

    // Three full sequences of different kinds.
    let picks: Vec<&Sequence> = vec![
        &d.sequences[0], // first gesture task
        d.sequences
            .iter()
            .find(|s| s.task == GestureLabel::Hc && !s.is_step_task())
            .unwrap(),
        d.sequences.iter().find(|s| s.is_step_task()).unwrap(),
    ];
    for s in &picks {
        let batch = predict_sequence(&fitted.model, s).expect("batch");
        let mut engine = StreamEngine::new(fitted.model.clone()).expect("engine");
        let mut streamed = Vec::new();
        for frame in &s.emg {
            if let Some(out) = engine.push(frame).expect("push") {
                streamed.push(out);
            }
        }
        assert_eq!(batch.len(), streamed.len(), "emission count on {}", s.id);
        for (b, o) in batch.iter().zip(&streamed) {
            assert_eq!(b.t, o.t, "timestamps on {}", s.id);
            assert_eq!(b.pred_label, o.gesture, "labels on {}", s.id);
            assert!(
                (b.pred_force - o.force_norm).abs() <= 1e-9,
                "force {} vs {} on {}",
                b.pred_force,
                o.force_norm,
                s.id
            );
        }
    }

    // Strict causality: a prefix of the input yields a prefix of outputs.
    let s = picks[0];
    let mut full_engine = StreamEngine::new(fitted.model.clone()).unwrap();
    let full: Vec<_> = s
        .emg
        .iter()
        .filter_map(|f| full_engine.push(f).unwrap())
        .collect();
    let cut = s.emg.len() * 2 / 3;
    let mut prefix_engine = StreamEngine::new(fitted.model.clone()).unwrap();
    let prefix: Vec<_> = s.emg[..cut]
        .iter()
        .filter_map(|f| prefix_engine.push(f).unwrap())
        .collect();
    assert_eq!(prefix.as_slice(), &full[..prefix.len()], "causality prefix");

    // Latency budget with the 3-channel model.
    let mut engine = StreamEngine::new(fitted.model.clone()).unwrap();
    for frame in &picks[1].emg {
        engine.push(frame).unwrap();
    }
    let report = engine.latency_report().expect("latency report");
    assert!(
        report.within_budget,
        "p99 push latency {:.3} ms over budget",
        report.p99_ms
    );

    let elapsed = start.elapsed().as_secs_f64();
    println!(
        "criterion 4: PASS — stream==batch on 3 sequences, prefix causality ok, p99 {:.3} ms, {elapsed:.1} s",
        report.p99_ms
    );
}

#[test]
fn criterion_5_leakage_canary() {
    let start = Instant::now();
    let d = default_dataset();
    let cfg = PipelineConfig::default();
    let eval = EvalConfig::default();
    let plan = kfold_by_sequence(d, eval.folds, eval.seed).unwrap();

    let fit_and_serialize = |data: &Dataset| -> Vec<u8> {
        let train: Vec<&Sequence> = plan
            .train_indices(0)
            .into_iter()
            .map(|i| &data.sequences[i])
            .collect();
        let fitted = fit_pipeline(&train, &cfg, MrmrTarget::Gesture, None).unwrap();
        let tmp = tempfile::NamedTempFile::new().unwrap();
        save_model(&fitted.model, tmp.path()).unwrap();
        std::fs::read(tmp.path()).unwrap()
    };

    let clean = fit_and_serialize(d);

    // Poison one held-out sequence heavily.
    let mut poisoned = d.clone();
    let victim = plan.folds[0][0];
    for frame in poisoned.sequences[victim].emg.iter_mut() {
        for v in frame.values.iter_mut() {
            *v = *v * 10.0 + 42.0;
        }
    }
    for f in poisoned.sequences[victim].force.iter_mut() {
        f.force += 50.0;
    }
    let after = fit_and_serialize(&poisoned);

    assert_eq!(
        clean, after,
        "model bytes changed after mutating held-out data"
    );
    let elapsed = start.elapsed().as_secs_f64();
    println!(
        "criterion 5: PASS — model files byte-identical ({} bytes) after poisoning sequence {}, {elapsed:.1} s",
        clean.len(),
        d.sequences[victim].id
    );
}

#[test]
fn criterion_6_persistence() {
    let start = Instant::now();

    // Small but real model for the round-trip check.
    let spec = SynthSpec {
        subjects: 2,
        hands_per_subject: 1,
        rest_s: (1.2, 1.4),
        hold_s: (1.5, 1.8),
        ramp_s: 0.5,
        step_hold_s: (0.6, 0.8),
        ..Default::default()
    };
    let d = generate_dataset(&spec).unwrap();
    let seqs: Vec<&Sequence> = d.sequences.iter().collect();
    let fitted =
        fit_pipeline(&seqs, &PipelineConfig::default(), MrmrTarget::Gesture, None).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let model_path = dir.path().join("model.json");
    save_model(&fitted.model, &model_path).unwrap();
    let loaded = load_model(&model_path).unwrap();
    assert_eq!(fitted.model, loaded, "bundle round trip");

    // Predictions on a fixed query set must be bit-identical.
    let before = predict_sequence(&fitted.model, &d.sequences[0]).unwrap();
    let after = predict_sequence(&loaded, &d.sequences[0]).unwrap();
    assert!(
        before.len() >= 100,
        "need >= 100 queries, got {}",
        before.len()
    );
    for (b, a) in before.iter().zip(&after) {
        assert_eq!(b.pred_label, a.pred_label);
        assert_eq!(
            b.pred_force.to_bits(),
            a.pred_force.to_bits(),
            "force bits differ"
        );
    }

    // Dataset round trip: field identity at 9 significant digits and
    // byte-identical re-save.
    let d1 = dir.path().join("data1");
    let d2 = dir.path().join("data2");
    let m1 = wristemg::io::save_dataset(&d, &d1).unwrap();
    let loaded_ds = wristemg::io::load_dataset(&m1).unwrap();
    assert_eq!(loaded_ds.sequences.len(), d.sequences.len());
    for (a, b) in d.sequences.iter().zip(&loaded_ds.sequences) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.emg.len(), b.emg.len());
        for (fa, fb) in a.emg.iter().zip(&b.emg) {
            assert!(wristemg::io::eq_sig9(fa.t, fb.t));
            for (va, vb) in fa.values.iter().zip(&fb.values) {
                assert!(wristemg::io::eq_sig9(*va, *vb));
            }
        }
    }
    let m2 = wristemg::io::save_dataset(&loaded_ds, &d2).unwrap();
    for entry in std::fs::read_dir(&d1).unwrap() {
        let name = entry.unwrap().file_name();
        let a = std::fs::read(d1.join(&name)).unwrap();
        let b = std::fs::read(d2.join(&name)).unwrap();
        assert_eq!(a, b, "{name:?} differs after round trip");
    }
    let _ = (m1, m2);

    let elapsed = start.elapsed().as_secs_f64();
    println!(
        "criterion 6: PASS — model and dataset round trips exact ({} queries), {elapsed:.1} s",
        before.len()
    );
}
