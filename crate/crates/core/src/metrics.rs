//! Normalized RMSE and the cosine-distance smoothness analysis.

use serde::{Deserialize, Serialize};

use crate::dc::{dc_targets, solve_dc};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::line_graph::{reconstruct_grid, LineGraphSample, TARGET_WIDTH};
use crate::tensor::Tensor;

pub const TARGET_NAMES: [&str; TARGET_WIDTH] = ["pf", "qf", "if_re", "if_im", "pt", "qt", "it_re", "it_im"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub dataset: String,
    pub n_rows: usize,
    pub nrmse: f64,
    pub per_feature: Vec<f64>,
}

impl EvalReport {
    pub fn csv_header() -> String {
        format!("model,dataset,n_rows,nrmse,{}", TARGET_NAMES.join(","))
    }

    pub fn csv_row(&self) -> String {
        let cols: Vec<String> = self.per_feature.iter().map(|v| v.to_string()).collect();
        format!("{},{},{},{},{}", self.model, self.dataset, self.n_rows, self.nrmse, cols.join(","))
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}\n", Self::csv_header(), self.csv_row())
    }
}

/// Per column `sqrt(MSE / var)` with the unbiased variance of the truth
/// column, averaged over columns. Rows are (sample, branch) pairs.
pub fn nrmse(truth: &Tensor, pred: &Tensor) -> Result<EvalReport> {
    if truth.shape() != pred.shape() {
        return Err(Error::dims(format!("{:?}", truth.shape()), format!("{:?}", pred.shape())));
    }
    let n = truth.rows();
    if n < 2 {
        return Err(Error::ZeroVariance(0));
    }
    let mut per_feature = Vec::with_capacity(truth.cols());
    for j in 0..truth.cols() {
        let mean = (0..n).map(|i| truth[(i, j)]).sum::<f64>() / n as f64;
        let var = (0..n).map(|i| (truth[(i, j)] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        if var == 0.0 {
            return Err(Error::ZeroVariance(j));
        }
        let mse = (0..n).map(|i| (truth[(i, j)] - pred[(i, j)]).powi(2)).sum::<f64>() / n as f64;
        per_feature.push((mse / var).sqrt());
    }
    Ok(EvalReport {
        model: String::new(),
        dataset: String::new(),
        n_rows: n,
        nrmse: per_feature.iter().sum::<f64>() / per_feature.len() as f64,
        per_feature,
    })
}

/// Stacks per-sample targets and predictions and scores them together.
pub fn nrmse_over(samples: &[&LineGraphSample], predictions: &[Tensor]) -> Result<EvalReport> {
    if samples.len() != predictions.len() {
        return Err(Error::dims(samples.len(), predictions.len()));
    }
    let truth: Vec<&Tensor> = samples
        .iter()
        .map(|s| s.targets.as_ref().ok_or(Error::UnconvergedLabel))
        .collect::<Result<_>>()?;
    let pred: Vec<&Tensor> = predictions.iter().collect();
    nrmse(&Tensor::vstack(&truth)?, &Tensor::vstack(&pred)?)
}

/// `1 - u.v / (|u| |v|)`.
pub fn cosine_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::dims(u.len(), v.len()));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((1.0 - dot / (nu * nv)).clamp(0.0, 2.0))
}

/// DC power flow on the grid behind each sample, scored on the AC target
/// layout. `reference` supplies ids and endpoints.
pub fn dc_baseline(sample: &LineGraphSample, reference: &Grid) -> Result<Tensor> {
    let grid = reconstruct_grid(sample, reference)?;
    let rows = dc_targets(&grid, &solve_dc(&grid)?)?;
    Ok(if rows.is_empty() {
        Tensor::zeros(0, TARGET_WIDTH)
    } else {
        Tensor::from_rows(&rows)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessReport {
    pub grid_name: String,
    /// Mean over samples of the distance between each vertex's prediction
    /// and the average label vector.
    pub prediction: Vec<f64>,
    /// Same with the true labels in place of the predictions.
    pub label: Vec<f64>,
    pub mean_prediction: f64,
    pub mean_label: f64,
}

impl SmoothnessReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("vertex,prediction,label\n");
        for (v, (p, l)) in self.prediction.iter().zip(&self.label).enumerate() {
            out.push_str(&format!("{v},{p},{l}\n"));
        }
        out
    }
}

fn mean_distance(values: &[&Tensor], reference: &[f64]) -> Result<Vec<f64>> {
    let n = values[0].rows();
    let mut out = vec![0.0; n];
    for t in values {
        for (v, acc) in out.iter_mut().enumerate() {
            *acc += cosine_distance(t.row(v), reference)?;
        }
    }
    Ok(out.into_iter().map(|d| d / values.len() as f64).collect())
}

/// Per-vertex cosine distance to the average label vector of the whole set.
/// All samples must share one topology.
pub fn smoothness_report(samples: &[&LineGraphSample], predictions: &[Tensor]) -> Result<SmoothnessReport> {
    let first = samples.first().ok_or(Error::EmptySplit("test"))?;
    if samples.len() != predictions.len() {
        return Err(Error::dims(samples.len(), predictions.len()));
    }
    if samples
        .iter()
        .any(|s| s.grid_name != first.grid_name || s.branch_index_map != first.branch_index_map)
    {
        return Err(Error::MixedTopology);
    }
    let labels: Vec<&Tensor> = samples
        .iter()
        .map(|s| s.targets.as_ref().ok_or(Error::UnconvergedLabel))
        .collect::<Result<_>>()?;
    if predictions.iter().any(|p| p.shape() != labels[0].shape()) {
        return Err(Error::dims(format!("{:?}", labels[0].shape()), "prediction of another shape"));
    }
    let all = Tensor::vstack(&labels)?;
    let mut mean = all.column_sums();
    mean.scale(1.0 / all.rows() as f64);

    let prediction = mean_distance(&predictions.iter().collect::<Vec<_>>(), mean.data())?;
    let label = mean_distance(&labels, mean.data())?;
    let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    Ok(SmoothnessReport {
        grid_name: first.grid_name.clone(),
        mean_prediction: avg(&prediction),
        mean_label: avg(&label),
        prediction,
        label,
    })
}
