use codemix::corpus::Document;
use codemix::evaluation::{compute_metrics, train_model};
use codemix::models::{Architecture, ClassifierModel, ModelSpec};
use codemix::seed::rng_for;
use codemix::synthetic::{random_embeddings, separable_corpus};
use codemix::Error;

fn spec(arch: Architecture, epochs: usize) -> ModelSpec {
    ModelSpec {
        epochs,
        max_len: 12,
        ..ModelSpec::new(arch)
    }
}

fn small_spec(arch: Architecture, epochs: usize) -> ModelSpec {
    ModelSpec {
        embedding_dim: 16,
        filters_per_size: 8,
        lstm_units: 8,
        batch_size: 16,
        ..spec(arch, epochs)
    }
}

fn gold(docs: &[Document]) -> Vec<u8> {
    docs.iter().map(|d| d.label.unwrap()).collect()
}

fn targets(docs: &[Document]) -> Vec<f64> {
    gold(docs).into_iter().map(f64::from).collect()
}

#[test]
fn each_architecture_overfits_separable_corpus() {
    let docs = separable_corpus(64, 1);
    let emb = random_embeddings(&docs, 300, 1).unwrap();
    for arch in Architecture::ALL {
        // batch size 64 on 64 samples: one Adam update per epoch
        let mut model = ClassifierModel::new(spec(arch, 0), &emb, 1).unwrap();
        let encoded: Vec<Vec<usize>> = docs.iter().map(|d| model.encode(d)).collect();
        let seqs: Vec<&[usize]> = encoded.iter().map(Vec::as_slice).collect();
        let mut rng = rng_for(1, "dropout", 0);
        let reached = (1..=30).find(|_| {
            model.train_step(&seqs, &targets(&docs), &mut rng).unwrap();
            let probs = model.predict_encoded(&encoded).unwrap();
            compute_metrics(&probs, &gold(&docs), 0.5).unwrap().1.accuracy == 100.0
        });
        assert!(reached.is_some(), "{arch} did not fit the training set in 30 epochs");
    }
}

#[test]
fn first_epoch_lowers_training_loss() {
    let docs = separable_corpus(64, 2);
    let emb = random_embeddings(&docs, 16, 2).unwrap();
    for arch in Architecture::ALL {
        let initial = ClassifierModel::new(small_spec(arch, 0), &emb, 4).unwrap();
        let encoded: Vec<Vec<usize>> = docs.iter().map(|d| initial.encode(d)).collect();
        let before = initial.mean_loss(&encoded, &targets(&docs)).unwrap();
        let trained = train_model(&small_spec(arch, 1), &docs, &emb, 4).unwrap();
        let after = trained.model.mean_loss(&encoded, &targets(&docs)).unwrap();
        assert!(after < before, "{arch}: {after} !< {before}");
        assert_eq!(trained.epoch_losses.len(), 1);
    }
}

#[test]
fn zero_epochs_returns_initialization() {
    let docs = separable_corpus(20, 3);
    let emb = random_embeddings(&docs, 16, 3).unwrap();
    let s = small_spec(Architecture::Cnn1d, 0);
    let trained = train_model(&s, &docs, &emb, 8).unwrap();
    let init = ClassifierModel::new(s, &emb, 8).unwrap();
    assert_eq!(trained.model, init);
    assert!(trained.epoch_losses.is_empty());
}

#[test]
fn training_is_deterministic() {
    let docs = separable_corpus(40, 4);
    let emb = random_embeddings(&docs, 16, 4).unwrap();
    for arch in Architecture::ALL {
        let s = small_spec(arch, 2);
        let a = train_model(&s, &docs, &emb, 21).unwrap();
        let b = train_model(&s, &docs, &emb, 21).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.epoch_losses, b.epoch_losses);
        let c = train_model(&s, &docs, &emb, 22).unwrap();
        assert_ne!(a.model, c.model);
    }
}

#[test]
fn frozen_embeddings_stay_bitwise_unchanged() {
    let docs = separable_corpus(40, 5);
    let emb = random_embeddings(&docs, 16, 5).unwrap();
    for arch in Architecture::ALL {
        let s = ModelSpec {
            embeddings_trainable: false,
            ..small_spec(arch, 2)
        };
        let init = ClassifierModel::new(s.clone(), &emb, 6).unwrap();
        let trained = train_model(&s, &docs, &emb, 6).unwrap().model;
        let bits = |m: &ClassifierModel| -> Vec<u64> {
            m.param("embedding").unwrap().value.data().iter().map(|v| v.to_bits()).collect()
        };
        assert_eq!(bits(&trained), bits(&init));
        assert_ne!(trained.param("dense.weight"), init.param("dense.weight"));

        let tuned = train_model(&small_spec(arch, 2), &docs, &emb, 6).unwrap().model;
        assert_ne!(bits(&tuned), bits(&init));
    }
}

#[test]
fn training_input_errors() {
    let docs = separable_corpus(10, 6);
    let emb = random_embeddings(&docs, 16, 6).unwrap();
    let s = small_spec(Architecture::Lstm, 1);
    assert!(matches!(train_model(&s, &[], &emb, 1), Err(Error::EmptyCorpus)));
    let unlabeled = vec![Document::new("u", "kya baat hai")];
    assert!(train_model(&s, &unlabeled, &emb, 1).is_err());
}
