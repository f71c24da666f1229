//! Linear evaluation: multinomial logistic regression on frozen features.

use std::io::{Read, Write};

use ndarray::{Array1, Axis};
use rand::seq::SliceRandom;

use crate::error::{invalid, AtdError, Result};
use crate::rng;
use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFeatures {
    pub features: Matrix,
    /// Class ids `0..classes`.
    pub labels: Vec<usize>,
}

impl LabeledFeatures {
    pub fn new(features: Matrix, labels: Vec<usize>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(AtdError::Shape(format!(
                "{} feature rows, {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(AtdError::NonFinite("features".into()));
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            features: self.features.select(Axis(0), rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Header `label,f1,..,fR`, one row per sample.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["label".to_string()];
        header.extend((1..=self.features.ncols()).map(|i| format!("f{i}")));
        w.write_record(&header).map_err(csv_err)?;
        for (row, &label) in self.features.rows().into_iter().zip(&self.labels) {
            let mut rec = vec![label.to_string()];
            rec.extend(row.iter().map(|v| format!("{v:?}")));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(input: impl Read) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers().map_err(csv_err)?.clone();
        if headers.get(0) != Some("label") {
            return Err(AtdError::Format("features CSV must start with a `label` column".into()));
        }
        let width = headers.len() - 1;
        let mut labels = Vec::new();
        let mut values = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            if rec.len() != width + 1 {
                return Err(AtdError::Format(format!(
                    "row {}: expected {} fields",
                    line + 1,
                    width + 1
                )));
            }
            labels.push(
                rec[0]
                    .trim()
                    .parse::<usize>()
                    .map_err(|e| AtdError::Format(format!("row {}: label: {e}", line + 1)))?,
            );
            for f in rec.iter().skip(1) {
                values.push(
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| AtdError::Format(format!("row {}: {e}", line + 1)))?,
                );
            }
        }
        let features =
            Matrix::from_shape_vec((labels.len(), width), values).map_err(|e| AtdError::Shape(e.to_string()))?;
        Self::new(features, labels)
    }
}

fn csv_err(e: csv::Error) -> AtdError {
    AtdError::Format(format!("csv: {e}"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticConfig {
    pub step: f64,
    pub l2: f64,
    pub iterations: usize,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            step: 0.5,
            l2: 1e-4,
            iterations: 5000,
        }
    }
}

/// Softmax classifier on standardized features.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub weights: Matrix,
    pub bias: Array1<f64>,
    mean: Array1<f64>,
    scale: Array1<f64>,
}

impl LinearModel {
    fn logits(&self, x: &Matrix) -> Matrix {
        let z = (x - &self.mean) / &self.scale;
        z.dot(&self.weights) + &self.bias
    }

    pub fn predict(&self, x: &Matrix) -> Vec<usize> {
        self.logits(x)
            .rows()
            .into_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .fold(
                        (0, f64::NEG_INFINITY),
                        |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) },
                    )
                    .0
            })
            .collect()
    }
}

fn softmax_rows(mut z: Matrix) -> Matrix {
    for mut row in z.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    z
}

/// Full-batch gradient descent on the mean cross-entropy plus `l2/2·‖W‖²`,
/// from zero weights, so the result is deterministic.
pub fn train_linear(train: &LabeledFeatures, cfg: LogisticConfig) -> Result<LinearModel> {
    let classes = train.classes();
    let distinct = {
        let mut seen = vec![false; classes];
        train.labels.iter().for_each(|&l| seen[l] = true);
        seen.iter().filter(|&&s| s).count()
    };
    if distinct < 2 {
        return Err(invalid("train", "need at least two classes"));
    }
    let x = &train.features;
    let (n, d) = x.dim();
    let mean = x.mean_axis(Axis(0)).unwrap();
    let scale = x.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-12 { s } else { 1.0 });
    let z = (x - &mean) / &scale;
    let mut onehot = Matrix::zeros((n, classes));
    for (i, &l) in train.labels.iter().enumerate() {
        onehot[[i, l]] = 1.0;
    }
    let mut model = LinearModel {
        weights: Matrix::zeros((d, classes)),
        bias: Array1::zeros(classes),
        mean,
        scale,
    };
    let inv_n = 1.0 / n as f64;
    for _ in 0..cfg.iterations {
        let p = softmax_rows(z.dot(&model.weights) + &model.bias);
        let resid = p - &onehot;
        let gw = z.t().dot(&resid) * inv_n + &model.weights * cfg.l2;
        let gb = resid.sum_axis(Axis(0)) * inv_n;
        model.weights.scaled_add(-cfg.step, &gw);
        model.bias.scaled_add(-cfg.step, &gb);
    }
    Ok(model)
}

pub fn accuracy(model: &LinearModel, test: &LabeledFeatures) -> Result<f64> {
    if test.is_empty() {
        return Err(invalid("test", "no samples"));
    }
    let pred = model.predict(&test.features);
    let hits = pred.iter().zip(&test.labels).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / test.len() as f64)
}

/// Seeded split of `0..n` into a training part of `⌈frac·n⌉` rows and the rest.
pub fn train_test_split(n: usize, frac: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, &[rng::TAG_SHUFFLE, u64::MAX]));
    let cut = ((frac * n as f64).ceil() as usize).min(n);
    let test = idx.split_off(cut);
    (idx, test)
}
