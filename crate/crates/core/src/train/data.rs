//! Datasets and their plain-text file formats.
//!
//! Dataset files hold one sample per line: comma-separated features, then
//! the label. Partition files hold one comma-separated index list per node.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::TrainError;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LocalDataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
}

impl LocalDataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self, TrainError> {
        if features.len() != labels.len() {
            return Err(TrainError::InvalidArgument(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        if let Some(w) = features.first().map(Vec::len) {
            if features.iter().any(|f| f.len() != w) {
                return Err(TrainError::InvalidArgument("ragged feature rows".into()));
            }
        }
        Ok(Self { features, labels })
    }

    /// `|R_i|`.
    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Integer class of every label by equal-count binning into `bins` classes.
    pub fn quantile_classes(&self, bins: usize) -> Vec<i64> {
        let mut order: Vec<usize> = (0..self.size()).collect();
        order.sort_by(|&a, &b| self.labels[a].total_cmp(&self.labels[b]).then(a.cmp(&b)));
        let mut classes = vec![0i64; self.size()];
        for (rank, &i) in order.iter().enumerate() {
            classes[i] = (rank * bins / self.size().max(1)) as i64;
        }
        classes
    }
}

/// `y = w* . x + noise` with standard normal features. Returns the data and `w*`.
pub fn regression_dataset(n: usize, dim: usize, noise: f64, seed: u64) -> (LocalDataset, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let eps: f64 = StandardNormal.sample(&mut rng);
        labels.push(x.iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>() + noise * eps);
        features.push(x);
    }
    (LocalDataset { features, labels }, truth)
}

pub fn parse_dataset(text: &str) -> Result<LocalDataset, TrainError> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let values = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| TrainError::Parse { line: i + 1, msg: e.to_string() })?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(TrainError::Parse { line: i + 1, msg: "non-finite value".into() });
        }
        let (label, row) = values.split_last().expect("split yields at least one field");
        features.push(row.to_vec());
        labels.push(*label);
    }
    LocalDataset::new(features, labels)
}

pub fn write_dataset(data: &LocalDataset) -> String {
    let mut out = String::new();
    for (x, y) in data.features.iter().zip(&data.labels) {
        for v in x {
            out.push_str(&format!("{v},"));
        }
        out.push_str(&format!("{y}\n"));
    }
    out
}

pub fn parse_partitions(text: &str) -> Result<Vec<Vec<usize>>, TrainError> {
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            let line = line.trim();
            if line.is_empty() {
                return Ok(Vec::new());
            }
            line.split(',')
                .map(|f| f.trim().parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| TrainError::Parse { line: i + 1, msg: e.to_string() })
        })
        .collect()
}

pub fn write_partitions(parts: &[Vec<usize>]) -> String {
    let mut out = String::new();
    for p in parts {
        let line: Vec<String> = p.iter().map(usize::to_string).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}
