//! Mean squared and mean absolute error on the normalized scale.

use serde::Serialize;

use crate::data::WindowedDataset;
use crate::error::{Error, Result};
use crate::network::{predict, StackedNetwork};
use crate::numcore::ShapeError;

fn check_lengths(y: &[f64], yhat: &[f64]) -> Result<()> {
    if y.len() != yhat.len() {
        return Err(Error::Shape(ShapeError::Length { left: y.len(), right: yhat.len() }));
    }
    if y.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(())
}

pub fn mse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_lengths(y, yhat)?;
    let sum: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / y.len() as f64)
}

pub fn mae(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_lengths(y, yhat)?;
    let sum: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).abs()).sum();
    Ok(sum / y.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub mse: f64,
    pub mae: f64,
    pub n: usize,
    pub predictions: Vec<f64>,
    pub targets: Vec<f64>,
}

/// One-step predictions for every window of `test`, scored against its
/// targets.
pub fn evaluate(net: &StackedNetwork, test: &WindowedDataset) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let predictions = test.inputs.iter().map(|seq| predict(net, seq)).collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        mse: mse(&test.targets, &predictions)?,
        mae: mae(&test.targets, &predictions)?,
        n: test.len(),
        predictions,
        targets: test.targets.clone(),
    })
}
