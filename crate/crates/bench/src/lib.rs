//! Shared fixtures for the benchmarks.

use rand::Rng;

use powerdrop::harness::{tokenize_corpus, TokenLevel, EMBEDDED_CORPUS};
use powerdrop::{Architecture, DropoutSpec, Model, ModelParams, PredictionMatrix, SplitSeed};

/// `samples x classes` matrix of random distributions.
pub fn random_matrix(samples: usize, classes: usize, seed: u64) -> PredictionMatrix {
    let mut rng = SplitSeed::new(seed).rng();
    let rows: Vec<Vec<f64>> = (0..samples)
        .map(|_| {
            let w: Vec<f64> = (0..classes).map(|_| rng.random_range(0.01..1.0)).collect();
            let total: f64 = w.iter().sum();
            w.iter().map(|v| v / total).collect()
        })
        .collect();
    PredictionMatrix::from_probs(&rows).unwrap()
}

pub fn mlp(inputs: usize, hidden: usize, classes: usize, rate: f64) -> Model {
    let arch = Architecture::Mlp {
        inputs,
        hidden: vec![hidden],
        classes,
    };
    let params = ModelParams::init(arch.clone(), &SplitSeed::new(1)).unwrap();
    Model::new(params, DropoutSpec::uniform(&arch.mask_sites(), rate)).unwrap()
}

/// Character LSTM over the embedded corpus vocabulary.
pub fn lstm(embed: usize, hidden: usize, rate: f64) -> (Model, Vec<usize>) {
    let corpus = tokenize_corpus(EMBEDDED_CORPUS, TokenLevel::Char, &[1.0]).unwrap();
    let arch = Architecture::Lstm {
        vocab: corpus.vocab.len(),
        embed,
        hidden,
        tied: false,
    };
    let params = ModelParams::init(arch.clone(), &SplitSeed::new(2)).unwrap();
    let model = Model::new(params, DropoutSpec::uniform(&arch.mask_sites(), rate)).unwrap();
    (model, corpus.splits.into_iter().next().unwrap())
}
