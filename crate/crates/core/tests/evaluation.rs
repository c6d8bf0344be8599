use codemix::corpus::Document;
use codemix::evaluation::{
    compute_metrics, cross_validate, render_report, parse_report_csv, stratified_kfold, Aggregation,
    ConfusionMatrix, CvOptions, FoldLearner, Metrics, NeuralLearner, ReportFormat,
};
use codemix::models::{Architecture, ModelSpec};
use codemix::synthetic::{code_mixed_corpus, random_embeddings};
use codemix::Result;
use proptest::prelude::*;

/// Counts each cell directly, independent of the library's match.
fn brute_force(probs: &[f64], gold: &[u8], threshold: f64) -> ConfusionMatrix {
    let count = |pred: bool, label: u8| {
        probs
            .iter()
            .zip(gold)
            .filter(|(p, y)| (**p >= threshold) == pred && **y == label)
            .count() as u64
    };
    ConfusionMatrix {
        tp: count(true, 1),
        fp: count(true, 0),
        fn_: count(false, 1),
        tn: count(false, 0),
    }
}

fn oracle_metrics(cm: &ConfusionMatrix) -> Metrics {
    let pct = |n: u64, d: u64| if d == 0 { 0.0 } else { 100.0 * n as f64 / d as f64 };
    let p = pct(cm.tp, cm.tp + cm.fp);
    let r = pct(cm.tp, cm.tp + cm.fn_);
    Metrics {
        precision: p,
        recall: r,
        f_score: if p > 0.0 && r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 },
        accuracy: pct(cm.tp + cm.tn, cm.tp + cm.fp + cm.fn_ + cm.tn),
    }
}

fn cases() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (1usize..=200).prop_flat_map(|n| {
        (
            // coarse grid so that exact threshold hits occur
            prop::collection::vec((0u32..=20).prop_map(|k| k as f64 / 20.0), n),
            prop::collection::vec(0u8..=1, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn metrics_match_brute_force((probs, gold) in cases()) {
        let (cm, m) = compute_metrics(&probs, &gold, 0.5).unwrap();
        let expected = brute_force(&probs, &gold, 0.5);
        prop_assert_eq!(cm, expected);
        prop_assert_eq!(m, oracle_metrics(&expected));
        prop_assert_eq!(cm.total(), probs.len() as u64);
        if m.precision > 0.0 && m.recall > 0.0 {
            prop_assert!(m.f_score >= m.precision.min(m.recall) - 1e-9);
            prop_assert!(m.f_score <= m.precision.max(m.recall) + 1e-9);
        }
    }

    #[test]
    fn raising_threshold_never_raises_recall((probs, gold) in cases(), t in 0.0f64..1.0, dt in 0.0f64..0.5) {
        let low = compute_metrics(&probs, &gold, t).unwrap().1.recall;
        let high = compute_metrics(&probs, &gold, t + dt).unwrap().1.recall;
        prop_assert!(high <= low);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn folds_partition_and_balance(
        n in 10usize..=5000,
        rate in 0.10f64..=0.50,
        k in 2usize..=10,
        seed in any::<u64>(),
    ) {
        let positives = ((n as f64) * rate).round() as usize;
        let labels: Vec<u8> = (0..n).map(|i| u8::from(i < positives)).collect();
        let a = stratified_kfold(&labels, k, seed).unwrap();
        prop_assert_eq!(a.folds.len(), n);
        let mut seen = vec![0u32; n];
        for f in 0..k {
            for i in a.test_indices(f) {
                seen[i] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        for class in [0u8, 1] {
            let per_fold: Vec<usize> = (0..k)
                .map(|f| a.test_indices(f).iter().filter(|&&i| labels[i] == class).count())
                .collect();
            let (lo, hi) = (per_fold.iter().min().unwrap(), per_fold.iter().max().unwrap());
            prop_assert!(hi - lo <= 1, "class {} sizes {:?}", class, per_fold);
        }
    }
}

#[test]
fn dataset_sized_folds() {
    let labels: Vec<u8> = (0..3849).map(|i| u8::from(i < 1436)).collect();
    let a = stratified_kfold(&labels, 10, 2024).unwrap();
    for f in 0..10 {
        let pos = a.test_indices(f).iter().filter(|&&i| labels[i] == 1).count();
        assert!(pos == 143 || pos == 144, "fold {f}: {pos}");
    }
}

/// Always predicts the majority class of its training data.
struct Majority;

impl FoldLearner for Majority {
    fn name(&self) -> String {
        "majority".into()
    }

    fn fit_predict(&self, train: &[Document], test: &[Document], _seed: u64) -> Result<Vec<f64>> {
        let pos = train.iter().filter(|d| d.label == Some(1)).count();
        let p = if 2 * pos > train.len() { 1.0 } else { 0.0 };
        Ok(vec![p; test.len()])
    }
}

#[test]
fn majority_learner_accuracy_is_majority_share() {
    let docs = code_mixed_corpus(157, 9);
    let opts = CvOptions::new(10, 3);
    let result = cross_validate(&Majority, &docs, &opts).unwrap();
    let labels: Vec<u8> = docs.iter().map(|d| d.label.unwrap()).collect();
    let folds = stratified_kfold(&labels, 10, 3).unwrap();
    for fr in &result.folds {
        let test = folds.test_indices(fr.fold);
        let negatives = test.iter().filter(|&&i| labels[i] == 0).count();
        let expected = 100.0 * negatives as f64 / test.len() as f64;
        assert_eq!(fr.metrics.accuracy, expected);
    }
    let mean_acc = result.folds.iter().map(|f| f.metrics.accuracy).sum::<f64>() / 10.0;
    assert!((result.mean.accuracy - mean_acc).abs() < 1e-12);

    let ids: Vec<&str> = result.predictions.iter().map(|p| p.id.as_str()).collect();
    let expected_ids: Vec<&str> = docs.iter().map(|d| d.id.as_str()).collect();
    assert_eq!(ids, expected_ids);
    let total: u64 = result.folds.iter().map(|f| f.confusion.total()).sum();
    assert_eq!(total, docs.len() as u64);
}

#[test]
fn unlabeled_document_is_rejected() {
    let mut docs = code_mixed_corpus(30, 1);
    docs[4].label = None;
    assert!(cross_validate(&Majority, &docs, &CvOptions::new(3, 1)).is_err());
}

#[test]
fn parallel_folds_match_sequential() {
    let docs = code_mixed_corpus(60, 2);
    let emb = random_embeddings(&docs, 8, 2).unwrap();
    let learner = NeuralLearner {
        spec: ModelSpec {
            embedding_dim: 8,
            filters_per_size: 4,
            lstm_units: 4,
            max_len: 10,
            epochs: 2,
            batch_size: 16,
            ..ModelSpec::new(Architecture::Lstm)
        },
        embeddings: &emb,
    };
    let seq = cross_validate(&learner, &docs, &CvOptions::new(4, 5)).unwrap();
    let par = cross_validate(&learner, &docs, &CvOptions::new(4, 5).with_jobs(3)).unwrap();
    assert_eq!(seq, par);
    assert_eq!(seq.folds.len(), 4);
    assert_eq!(seq.architecture, "LSTM");

    let csv = render_report(std::slice::from_ref(&seq), Aggregation::Pooled, ReportFormat::Csv);
    let rows = parse_report_csv(&csv).unwrap();
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[4].fold, "pooled");
    assert_eq!(format!("{:.2}", rows[4].metrics.f_score), format!("{:.2}", seq.pooled.f_score));
}
