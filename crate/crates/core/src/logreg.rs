//! Single-neuron logistic regression with the error-weighted-derivative update.
//!
//! One pass computes `ŷ = φ(X·w)`, the error `r = y − ŷ`, adjustments
//! `A = r ⊙ d(ŷ)` and the update `w ← w + Xᵀ·A`. There is no bias term and
//! no learning rate. `d` is selected by [`DerivativeMode`]: the default
//! applies the sigmoid derivative to the activation itself, `φ(ŷ)(1 − φ(ŷ))`;
//! the textbook mode uses `ŷ(1 − ŷ)`.

use std::io::Write;

use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn net_input(x: ArrayView1<'_, f64>, w: ArrayView1<'_, f64>) -> Result<f64> {
    if x.len() != w.len() {
        return Err(Error::ShapeMismatch(format!(
            "input has {} values, weights have {}",
            x.len(),
            w.len()
        )));
    }
    Ok(x.dot(&w))
}

/// Logistic function `1 / (1 + e^{-t})`, evaluated without overflow.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid_derivative(t: f64) -> f64 {
    let s = sigmoid(t);
    s * (1.0 - s)
}

pub fn forward(x: ArrayView2<'_, f64>, w: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    if x.ncols() != w.len() {
        return Err(Error::ShapeMismatch(format!(
            "matrix has {} columns, weights have {}",
            x.ncols(),
            w.len()
        )));
    }
    Ok(x.dot(&w).mapv_into(sigmoid))
}

/// Which derivative weights the error in the backward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DerivativeMode {
    /// `φ(ŷ)(1 − φ(ŷ))`: the sigmoid derivative evaluated at the activation.
    #[default]
    Literal,
    /// `ŷ(1 − ŷ)`: the derivative at the net input.
    Textbook,
}

impl DerivativeMode {
    fn weight(self, y_hat: f64) -> f64 {
        match self {
            DerivativeMode::Literal => sigmoid_derivative(y_hat),
            DerivativeMode::Textbook => y_hat * (1.0 - y_hat),
        }
    }
}

impl std::str::FromStr for DerivativeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(Self::Literal),
            "textbook" => Ok(Self::Textbook),
            other => Err(Error::InvalidConfig(format!(
                "unknown derivative mode {other:?} (expected literal or textbook)"
            ))),
        }
    }
}

/// One backward pass. Returns the updated weights and `‖y − ŷ‖₂`.
pub fn backward(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    y_hat: ArrayView1<'_, f64>,
    w: ArrayView1<'_, f64>,
    mode: DerivativeMode,
) -> Result<(Array1<f64>, f64)> {
    if x.nrows() != y.len() || y.len() != y_hat.len() || x.ncols() != w.len() {
        return Err(Error::ShapeMismatch(format!(
            "X is {}x{}, y has {}, ŷ has {}, w has {}",
            x.nrows(),
            x.ncols(),
            y.len(),
            y_hat.len(),
            w.len()
        )));
    }
    let r = &y - &y_hat;
    let norm = r.dot(&r).sqrt();
    let adjustments = ndarray::Zip::from(&r)
        .and(&y_hat)
        .map_collect(|&r, &p| r * mode.weight(p));
    let updated = &w + &x.t().dot(&adjustments);
    Ok((updated, norm))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_iterations: usize,
    /// Training stops once `‖r‖₂` changes by less than this between passes.
    pub error_tolerance: f64,
    pub rng_seed: u64,
    #[serde(default)]
    pub derivative_mode: DerivativeMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            error_tolerance: 1e-6,
            rng_seed: 0,
            derivative_mode: DerivativeMode::Literal,
        }
    }
}

impl TrainConfig {
    pub fn with_seed(self, rng_seed: u64) -> Self {
        Self { rng_seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig(
                "max_iterations must be at least 1".into(),
            ));
        }
        if self.error_tolerance.is_nan() || self.error_tolerance < 0.0 {
            return Err(Error::InvalidConfig(
                "error_tolerance must be a nonnegative number".into(),
            ));
        }
        Ok(())
    }
}

/// Trained per-column weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub weights: Vec<f64>,
    pub iterations_run: usize,
    pub final_error_norm: f64,
}

impl WeightVector {
    pub fn view(&self) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.weights)
    }

    /// Writes `column_station_id,weight` rows.
    pub fn write_csv<W: Write>(&self, columns: &[String], out: W) -> Result<()> {
        if columns.len() != self.weights.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} column ids for {} weights",
                columns.len(),
                self.weights.len()
            )));
        }
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        writer.write_record(["column_station_id", "weight"])?;
        for (id, w) in columns.iter().zip(&self.weights) {
            writer.write_record([id.as_str(), &w.to_string()])?;
        }
        writer.flush()?;
        Ok(())
    }
}

pub fn initial_weights(columns: usize, seed: u64) -> Array1<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..columns).map(|_| rng.random::<f64>()).collect()
}

pub fn train(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    config: &TrainConfig,
) -> Result<WeightVector> {
    train_traced(x, y, config).map(|(w, _)| w)
}

/// Like [`train`], also returning `‖r‖₂` of every pass.
pub fn train_traced(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    config: &TrainConfig,
) -> Result<(WeightVector, Vec<f64>)> {
    config.validate()?;
    if x.nrows() == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    if x.nrows() != y.len() {
        return Err(Error::ShapeMismatch(format!(
            "X has {} rows, y has {}",
            x.nrows(),
            y.len()
        )));
    }

    let mut w = initial_weights(x.ncols(), config.rng_seed);
    let mut trace = Vec::new();
    for _ in 0..config.max_iterations {
        let y_hat = forward(x, w.view())?;
        let (next, norm) = backward(x, y, y_hat.view(), w.view(), config.derivative_mode)?;
        w = next;
        let converged = trace
            .last()
            .is_some_and(|&prev: &f64| (prev - norm).abs() < config.error_tolerance);
        trace.push(norm);
        if converged {
            break;
        }
    }
    Ok((
        WeightVector {
            weights: w.to_vec(),
            iterations_run: trace.len(),
            final_error_norm: *trace.last().unwrap_or(&0.0),
        },
        trace,
    ))
}

/// 1 iff the net input is strictly positive; a probability of exactly 0.5 maps to 0.
pub fn classify(x: ArrayView1<'_, f64>, w: &WeightVector) -> Result<u8> {
    Ok(u8::from(net_input(x, w.view())? > 0.0))
}
