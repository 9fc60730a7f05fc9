//! Comparison models: one-step persistence and fixed-window logistic regression.

use crate::error::{Error, Result};
use crate::logreg::{classify, train, TrainConfig};
use crate::matrixize::Dataset;

/// Predicts each hour in `[lo, hi)` as the observed value of the hour before.
pub fn persistence_predict(y: &[u8], lo: usize, hi: usize) -> Result<Vec<u8>> {
    if lo == 0 || lo >= hi || hi > y.len() {
        return Err(Error::InvalidRange {
            lo,
            hi,
            len: y.len(),
        });
    }
    Ok(y[lo - 1..hi - 1].to_vec())
}

/// Trains one model on `train` and classifies every row of `test` with it.
pub fn traditional_logreg(
    train_set: &Dataset,
    test: &Dataset,
    config: &TrainConfig,
) -> Result<Vec<u8>> {
    if train_set.columns != test.columns {
        return Err(Error::ShapeMismatch(
            "training and test datasets have different neighbor columns".into(),
        ));
    }
    let w = train(train_set.x.view(), train_set.y.view(), config)?;
    test.x
        .rows()
        .into_iter()
        .map(|row| classify(row, &w))
        .collect()
}
