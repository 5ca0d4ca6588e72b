//! Dataset ingestion: tokenised text corpora, numeric CSV classification
//! files and a synthetic two-moons generator.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::Example;
use crate::numeric::{SplitSeed, Tensor};

use super::config::{check_fractions, DataConfig, TokenLevel};

/// Public-domain plays (The Tempest, A Midsummer Night's Dream), ~190 KB.
pub const EMBEDDED_CORPUS: &str = include_str!("../../data/corpus.txt");

pub const UNK: &str = "<unk>";

pub const SPLIT_NAMES: [&str; 3] = ["train", "valid", "test"];

/// A tokenised corpus. The vocabulary is the sorted set of training tokens,
/// followed by [`UNK`] when a later split contains unseen tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct TextCorpus {
    pub vocab: Vec<String>,
    pub splits: Vec<Vec<usize>>,
    /// Occurrences of each vocabulary entry in the training split.
    pub frequencies: Vec<u64>,
    pub unk: Option<usize>,
}

fn tokenize(text: &str, level: TokenLevel) -> Vec<&str> {
    match level {
        TokenLevel::Char => text
            .char_indices()
            .map(|(i, c)| &text[i..i + c.len_utf8()])
            .collect(),
        TokenLevel::Word => text.split_whitespace().collect(),
    }
}

/// Split boundaries at `round(cumulative fraction · n)`.
pub fn split_bounds(n: usize, fractions: &[f64]) -> Result<Vec<(usize, usize)>> {
    check_fractions(fractions)?;
    let mut out = Vec::with_capacity(fractions.len());
    let mut cum = 0.0;
    let mut start = 0;
    for (i, f) in fractions.iter().enumerate() {
        cum += f;
        let end = if i + 1 == fractions.len() {
            n
        } else {
            ((cum * n as f64).round() as usize).min(n)
        };
        if end <= start {
            return Err(Error::config(format!(
                "split {} of {n} items would be empty",
                SPLIT_NAMES[i]
            )));
        }
        out.push((start, end));
        start = end;
    }
    Ok(out)
}

pub fn tokenize_corpus(text: &str, level: TokenLevel, fractions: &[f64]) -> Result<TextCorpus> {
    let tokens = tokenize(text, level);
    if tokens.is_empty() {
        return Err(Error::config("the corpus is empty"));
    }
    let bounds = split_bounds(tokens.len(), fractions)?;
    let (t0, t1) = bounds[0];
    let train_set: BTreeSet<&str> = tokens[t0..t1].iter().copied().collect();
    let mut vocab: Vec<String> = train_set.iter().map(|s| s.to_string()).collect();
    let index: HashMap<&str, usize> = train_set.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let unk = tokens[t1..]
        .iter()
        .any(|t| !index.contains_key(t))
        .then(|| {
            vocab.push(UNK.to_string());
            vocab.len() - 1
        });
    let splits: Vec<Vec<usize>> = bounds
        .iter()
        .map(|&(a, b)| {
            tokens[a..b]
                .iter()
                .map(|t| index.get(t).copied().or(unk).expect("train tokens are in the vocab"))
                .collect()
        })
        .collect();
    let mut frequencies = vec![0u64; vocab.len()];
    for &t in &splits[0] {
        frequencies[t] += 1;
    }
    Ok(TextCorpus {
        vocab,
        splits,
        frequencies,
        unk,
    })
}

/// Reads and tokenises a text file. Splits are contiguous (no shuffling).
pub fn ingest_text_corpus(path: &Path, level: TokenLevel, fractions: &[f64]) -> Result<TextCorpus> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    tokenize_corpus(&text, level, fractions)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassificationData {
    /// One row per example.
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl ClassificationData {
    pub fn examples(&self) -> Vec<Example> {
        (0..self.labels.len())
            .map(|i| Example::Labeled {
                features: self.features.row(i).to_vec(),
                label: self.labels[i],
            })
            .collect()
    }
}

/// Reads a headerless numeric CSV whose last column is an integer label.
/// With `classes` given, labels must lie in `[0, classes)`; otherwise the
/// class count is `max label + 1`.
pub fn ingest_classification_csv(path: &Path, classes: Option<usize>) -> Result<ClassificationData> {
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut width = None;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() < 2 {
            return Err(parse_err(line, "need at least one feature and a label".into()));
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(parse_err(
                    line,
                    format!("expected {w} columns, found {}", record.len()),
                ))
            }
            _ => {}
        }
        let n = record.len() - 1;
        for (col, cell) in record.iter().take(n).enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(line, format!("column {}: {cell:?} is not a number", col + 1)))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("column {}: value is not finite", col + 1)));
            }
            values.push(v);
        }
        let cell = &record[n];
        let label: usize = cell
            .parse()
            .map_err(|_| parse_err(line, format!("label {cell:?} is not a non-negative integer")))?;
        labels.push(label);
    }
    let Some(width) = width else {
        return Err(parse_err(1, "the file contains no rows".into()));
    };
    let max_label = labels.iter().copied().max().unwrap_or(0);
    let classes = match classes {
        Some(c) => {
            if max_label >= c {
                return Err(Error::Validation(format!(
                    "{}: label {max_label} outside [0, {c})",
                    path.display()
                )));
            }
            c
        }
        None => max_label + 1,
    };
    let features = Tensor::new(vec![labels.len(), width - 1], values)?;
    Ok(ClassificationData {
        features,
        labels,
        classes,
    })
}

/// Two interleaving half circles with Gaussian noise, labels alternating.
pub fn two_moons(samples: usize, noise: f64, seed: &SplitSeed) -> Vec<Example> {
    (0..samples)
        .map(|i| {
            let mut rng = seed.child(i as u64).rng();
            let label = i % 2;
            let t = std::f64::consts::PI * rng.random::<f64>();
            let (x, y) = if label == 0 {
                (t.cos(), t.sin())
            } else {
                (1.0 - t.cos(), 0.5 - t.sin())
            };
            let nx: f64 = rng.sample(StandardNormal);
            let ny: f64 = rng.sample(StandardNormal);
            Example::Labeled {
                features: vec![x + noise * nx, y + noise * ny],
                label,
            }
        })
        .collect()
}

/// One split: a token stream or a list of labelled examples.
#[derive(Clone, Debug, PartialEq)]
pub enum SplitData {
    Stream(Vec<usize>),
    Examples(Vec<Example>),
}

impl SplitData {
    pub fn targets(&self) -> usize {
        match self {
            SplitData::Stream(t) => t.len().saturating_sub(1),
            SplitData::Examples(e) => e.len(),
        }
    }

    /// Evaluation examples: a stream becomes one sequence (truncated to
    /// `max_targets` targets), an example list keeps its first `max_targets`.
    pub fn eval_examples(&self, max_targets: Option<usize>) -> Vec<Example> {
        match self {
            SplitData::Stream(t) => {
                let n = max_targets.map_or(t.len(), |m| (m + 1).min(t.len()));
                vec![Example::Sequence(t[..n].to_vec())]
            }
            SplitData::Examples(e) => e[..max_targets.map_or(e.len(), |m| m.min(e.len()))].to_vec(),
        }
    }
}

/// Loaded data for an experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// Feature count (MLP) or vocabulary size (LSTM).
    pub inputs: usize,
    pub classes: usize,
    pub splits: Vec<(String, SplitData)>,
    /// Training-split frequency of every class.
    pub frequencies: Vec<u64>,
    pub vocab: Option<Vec<String>>,
}

impl Dataset {
    pub fn split(&self, name: &str) -> Result<&SplitData> {
        self.splits
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, d)| d)
            .ok_or_else(|| {
                let names: Vec<&str> = self.splits.iter().map(|(n, _)| n.as_str()).collect();
                Error::config(format!("unknown split {name:?}; available: {names:?}"))
            })
    }

    pub fn split_index(&self, name: &str) -> Result<usize> {
        self.split(name)?;
        Ok(self.splits.iter().position(|(n, _)| n == name).unwrap())
    }

    /// Loads the configured data; `seed` drives synthetic generation.
    pub fn load(config: &DataConfig, seed: &SplitSeed) -> Result<Self> {
        match config {
            DataConfig::Text { path, level, splits } => {
                let corpus = match path {
                    Some(p) => ingest_text_corpus(p, *level, splits)?,
                    None => tokenize_corpus(EMBEDDED_CORPUS, *level, splits)?,
                };
                Ok(Dataset {
                    inputs: corpus.vocab.len(),
                    classes: corpus.vocab.len(),
                    splits: corpus
                        .splits
                        .into_iter()
                        .enumerate()
                        .map(|(i, s)| (SPLIT_NAMES[i].to_string(), SplitData::Stream(s)))
                        .collect(),
                    frequencies: corpus.frequencies,
                    vocab: Some(corpus.vocab),
                })
            }
            DataConfig::Csv {
                train,
                valid,
                test,
                classes,
            } => {
                let train_data = ingest_classification_csv(train, *classes)?;
                let classes = train_data.classes.max(classes.unwrap_or(0));
                let inputs = train_data.features.cols();
                let mut splits = vec![("train".to_string(), train_data)];
                for (name, path) in [("valid", valid), ("test", test)] {
                    if let Some(p) = path {
                        let d = ingest_classification_csv(p, Some(classes))?;
                        if d.features.cols() != inputs {
                            return Err(Error::shape(format!(
                                "{} has {} features, the training file {inputs}",
                                p.display(),
                                d.features.cols()
                            )));
                        }
                        splits.push((name.to_string(), d));
                    }
                }
                Ok(Self::from_labeled(
                    inputs,
                    classes,
                    splits.into_iter().map(|(n, d)| (n, d.examples())).collect(),
                ))
            }
            DataConfig::Moons {
                samples,
                noise,
                splits,
            } => {
                let all = two_moons(*samples, *noise, seed);
                let bounds = split_bounds(all.len(), splits)?;
                let named = bounds
                    .iter()
                    .enumerate()
                    .map(|(i, &(a, b))| (SPLIT_NAMES[i].to_string(), all[a..b].to_vec()))
                    .collect();
                Ok(Self::from_labeled(2, 2, named))
            }
        }
    }

    fn from_labeled(inputs: usize, classes: usize, splits: Vec<(String, Vec<Example>)>) -> Self {
        let mut frequencies = vec![0u64; classes];
        for ex in &splits[0].1 {
            for &t in ex.targets() {
                frequencies[t] += 1;
            }
        }
        Dataset {
            inputs,
            classes,
            splits: splits
                .into_iter()
                .map(|(n, e)| (n, SplitData::Examples(e)))
                .collect(),
            frequencies,
            vocab: None,
        }
    }
}
