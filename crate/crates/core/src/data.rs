//! Dataset loading, splitting, standardization and synthetic data.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantile::rank_count;
use crate::types::{Dataset, Sample};

/// Identifier of the generator behind every seeded draw in this crate.
pub const RNG_ALGORITHM: &str = "chacha8";

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelColumn {
    Index(usize),
    Last,
}

/// How a label cell maps to ±1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelRule {
    /// Cells equal to `positive` are +1. With `negative` set, any other
    /// value is rejected; otherwise it is −1. Numeric cells compare by value.
    Category {
        positive: String,
        #[serde(default)]
        negative: Option<String>,
    },
    /// Numeric column; +1 where it attains its maximum over the file.
    AtColumnMax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DelimitedOptions {
    pub delimiter: char,
    pub has_header: bool,
    pub label_column: LabelColumn,
    pub label_rule: LabelRule,
}

impl Default for DelimitedOptions {
    fn default() -> Self {
        DelimitedOptions {
            delimiter: ',',
            has_header: false,
            label_column: LabelColumn::Last,
            label_rule: LabelRule::Category {
                positive: "1".into(),
                negative: Some("-1".into()),
            },
        }
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

pub fn load_delimited(path: impl AsRef<Path>, options: &DelimitedOptions) -> Result<Dataset> {
    read_delimited(open(path.as_ref())?, options)
}

fn same_label(cell: &str, expected: &str) -> bool {
    if cell == expected {
        return true;
    }
    match (cell.parse::<f64>(), expected.parse::<f64>()) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

pub fn read_delimited<R: Read>(reader: R, options: &DelimitedOptions) -> Result<Dataset> {
    if !options.delimiter.is_ascii() {
        return Err(Error::invalid("delimiter must be a single ASCII character"));
    }
    let mut csv = csv::ReaderBuilder::new()
        .delimiter(options.delimiter as u8)
        .has_headers(options.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut width = None;
    let mut rows = Vec::new();
    let mut raw_labels = Vec::new();
    let mut lines = Vec::new();
    for record in csv.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::RaggedRows {
                line,
                expected,
                found: record.len(),
            });
        }
        let label_at = match options.label_column {
            LabelColumn::Last => expected - 1,
            LabelColumn::Index(i) if i < expected => i,
            LabelColumn::Index(i) => {
                return Err(Error::invalid(format!("label column {i} out of range for {expected} columns")))
            }
        };
        let mut features = Vec::with_capacity(expected - 1);
        for (col, cell) in record.iter().enumerate() {
            if col == label_at {
                continue;
            }
            let value = cell.parse::<f64>().map_err(|_| Error::Parse {
                line,
                column: col + 1,
                message: format!("not a number: {cell:?}"),
            })?;
            features.push(value);
        }
        rows.push(features);
        raw_labels.push(record[label_at].to_string());
        lines.push(line);
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }

    let labels: Vec<i8> = match &options.label_rule {
        LabelRule::Category { positive, negative } => raw_labels
            .iter()
            .zip(&lines)
            .map(|(cell, &line)| {
                if same_label(cell, positive) {
                    Ok(1)
                } else if negative.as_ref().is_none_or(|n| same_label(cell, n)) {
                    Ok(-1)
                } else {
                    Err(Error::UnknownLabel {
                        line,
                        value: cell.clone(),
                    })
                }
            })
            .collect::<Result<_>>()?,
        LabelRule::AtColumnMax => {
            let target: Vec<f64> = raw_labels
                .iter()
                .zip(&lines)
                .map(|(cell, &line)| {
                    cell.parse::<f64>().map_err(|_| Error::UnknownLabel {
                        line,
                        value: cell.clone(),
                    })
                })
                .collect::<Result<_>>()?;
            let max = target.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            target.iter().map(|&t| if t == max { 1 } else { -1 }).collect()
        }
    };
    Dataset::from_rows(rows, &labels)
}

fn parse_sparse_label(token: &str, line: usize) -> Result<i8> {
    match token.parse::<f64>() {
        Ok(v) if v == 1.0 => Ok(1),
        Ok(v) if v == -1.0 => Ok(-1),
        _ => Err(Error::UnknownLabel {
            line,
            value: token.to_string(),
        }),
    }
}

pub fn load_sparse(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    read_sparse(BufReader::new(open(path)?))
}

/// Reads `label idx:val …` lines with 1-based, strictly increasing
/// indices. Rows are densified to the largest index in the file.
pub fn read_sparse<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut entries: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut dimension = 0;
    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| Error::io("<sparse input>", e))?;
        let body = line.split('#').next().unwrap_or("");
        let mut tokens = body.split_whitespace();
        let Some(label) = tokens.next() else { continue };
        labels.push(parse_sparse_label(label, lineno)?);
        let mut row = Vec::new();
        let mut last = 0;
        for (t, token) in tokens.enumerate() {
            let parse_err = |message: String| Error::Parse {
                line: lineno,
                column: t + 2,
                message,
            };
            let (idx, val) = token
                .split_once(':')
                .ok_or_else(|| parse_err(format!("expected idx:val, got {token:?}")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| parse_err(format!("bad index {idx:?}")))?;
            let val: f64 = val
                .parse()
                .map_err(|_| parse_err(format!("bad value {val:?}")))?;
            if idx == 0 {
                return Err(parse_err("indices are 1-based".into()));
            }
            if idx == last {
                return Err(parse_err(format!("duplicate index {idx}")));
            }
            if idx < last {
                return Err(Error::NonMonotonicIndex { line: lineno, index: idx });
            }
            last = idx;
            row.push((idx, val));
        }
        dimension = dimension.max(last);
        entries.push(row);
    }
    if entries.is_empty() {
        return Err(Error::EmptyInput);
    }
    let rows = entries
        .into_iter()
        .map(|row| {
            let mut dense = vec![0.0; dimension];
            for (idx, val) in row {
                dense[idx - 1] = val;
            }
            dense
        })
        .collect();
    Dataset::from_rows(rows, &labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    #[serde(default)]
    pub stratified: bool,
}

impl SplitSpec {
    pub fn new(train_fraction: f64, seed: u64) -> Self {
        SplitSpec {
            train_fraction,
            seed,
            stratified: false,
        }
    }

    pub fn stratified(mut self) -> Self {
        self.stratified = true;
        self
    }
}

/// Train side gets `⌊fraction·N⌋` samples. In stratified mode its positive
/// count is the nearest integer to `fraction·P` at that size.
pub fn split(dataset: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train_fraction must lie in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    let n = dataset.len();
    let n_train = rank_count(spec.train_fraction, n);
    if n_train == 0 || n_train == n {
        return Err(Error::DegenerateSplit {
            train: n_train,
            test: n - n_train,
        });
    }
    let mut rng = rng(spec.seed);
    let mut train_idx;
    let mut test_idx;
    if spec.stratified {
        let mut pos = dataset.positive_indices();
        let mut neg = dataset.negative_indices();
        pos.shuffle(&mut rng);
        neg.shuffle(&mut rng);
        let ideal = n_train as f64 * pos.len() as f64 / n as f64;
        let lo = n_train.saturating_sub(neg.len());
        let hi = n_train.min(pos.len());
        let train_pos = (ideal.round() as usize).clamp(lo, hi);
        let train_neg = n_train - train_pos;
        train_idx = [&pos[..train_pos], &neg[..train_neg]].concat();
        test_idx = [&pos[train_pos..], &neg[train_neg..]].concat();
        train_idx.shuffle(&mut rng);
        test_idx.shuffle(&mut rng);
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        test_idx = order.split_off(n_train);
        train_idx = order;
    }
    Ok((dataset.select(&train_idx)?, dataset.select(&test_idx)?))
}

/// Per-feature affine map fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Population standard deviation; zero marks a constant feature.
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(dataset: &Dataset) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::EmptyInput);
        }
        let d = dataset.dimension();
        let n = dataset.len() as f64;
        let mut mean = vec![0.0; d];
        for s in dataset.samples() {
            for (m, x) in mean.iter_mut().zip(s.features()) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for s in dataset.samples() {
            for ((v, x), m) in var.iter_mut().zip(s.features()).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let sd = (v / n).sqrt();
                if sd > 1e-12 { sd } else { 0.0 }
            })
            .collect();
        Ok(Standardizer { mean, scale })
    }

    pub fn transform_row(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(x, (m, s))| if *s == 0.0 { 0.0 } else { (x - m) / s })
            .collect()
    }

    pub fn inverse_row(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(z, (m, s))| z * s + m)
            .collect()
    }

    pub fn transform(&self, dataset: &Dataset) -> Result<Dataset> {
        if dataset.dimension() != self.mean.len() {
            return Err(Error::Dimension {
                expected: self.mean.len(),
                found: dataset.dimension(),
            });
        }
        dataset.map_features(|x| self.transform_row(x))
    }

    pub fn inverse(&self, dataset: &Dataset) -> Result<Dataset> {
        dataset.map_features(|z| self.inverse_row(z))
    }
}

/// Fits on `train` and applies the same map to both sides.
pub fn standardize(train: &Dataset, test: &Dataset) -> Result<(Dataset, Dataset, Standardizer)> {
    let t = Standardizer::fit(train)?;
    Ok((t.transform(train)?, t.transform(test)?, t))
}

/// An extra isotropic component among the negatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierCluster {
    pub fraction: f64,
    pub mean: Vec<f64>,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n: usize,
    pub positive_prior: f64,
    pub dim: usize,
    pub mean_separation: f64,
    pub sigma: f64,
    /// Positive-class sigma; `None` shares `sigma`.
    pub positive_sigma: Option<f64>,
    pub outlier: Option<OutlierCluster>,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n: 10_000,
            positive_prior: 0.1,
            dim: 2,
            mean_separation: 2.0,
            sigma: 1.0,
            positive_sigma: None,
            outlier: None,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.dim == 0 {
            return Err(Error::invalid("synthetic n and dim must be positive"));
        }
        if !(self.positive_prior > 0.0 && self.positive_prior < 1.0) {
            return Err(Error::invalid("positive_prior must lie in (0, 1)"));
        }
        let sigmas = [Some(self.sigma), self.positive_sigma, self.outlier.as_ref().map(|o| o.sigma)];
        if !(self.mean_separation > 0.0) || sigmas.iter().flatten().any(|s| !(*s > 0.0)) {
            return Err(Error::invalid("mean_separation and sigmas must be positive"));
        }
        if let Some(o) = &self.outlier {
            if !(0.0..=1.0).contains(&o.fraction) || o.mean.len() != self.dim {
                return Err(Error::invalid("outlier fraction must lie in [0, 1] with a mean of length dim"));
            }
        }
        Ok(())
    }
}

/// Draws the Gaussian mixture: labels from the prior, positives around
/// `+sep/2·e₁`, negatives around `−sep/2·e₁`, optionally with a share of
/// negatives from an outlier component.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = rng(spec.seed);
    let half = spec.mean_separation / 2.0;
    let mut samples = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let positive = rng.random_bool(spec.positive_prior);
        let outlier = match (&spec.outlier, positive) {
            (Some(o), false) if rng.random_bool(o.fraction) => Some(o),
            _ => None,
        };
        let (center, sigma): (Vec<f64>, f64) = match outlier {
            Some(o) => (o.mean.clone(), o.sigma),
            None => {
                let mut c = vec![0.0; spec.dim];
                c[0] = if positive { half } else { -half };
                let s = if positive { spec.positive_sigma.unwrap_or(spec.sigma) } else { spec.sigma };
                (c, s)
            }
        };
        let x = center
            .iter()
            .map(|m| m + sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        samples.push(Sample::new(x, if positive { 1 } else { -1 })?);
    }
    Dataset::new(samples)
}

const IONOSPHERE_CSV: &str = include_str!("../data/ionosphere.csv");
const HOUSING_CSV: &str = include_str!("../data/housing.csv");

/// UCI Ionosphere: 351 radar returns, 34 features, "g" (good) positive.
pub fn ionosphere() -> Dataset {
    let options = DelimitedOptions {
        label_rule: LabelRule::Category {
            positive: "g".into(),
            negative: Some("b".into()),
        },
        ..DelimitedOptions::default()
    };
    read_delimited(IONOSPHERE_CSV.as_bytes(), &options).expect("bundled ionosphere data parses")
}

/// Boston Housing: 506 tracts, 13 features; positive where the median
/// value sits at the file's cap of 50.
pub fn housing() -> Dataset {
    let options = DelimitedOptions {
        has_header: true,
        label_rule: LabelRule::AtColumnMax,
        ..DelimitedOptions::default()
    };
    read_delimited(HOUSING_CSV.as_bytes(), &options).expect("bundled housing data parses")
}
