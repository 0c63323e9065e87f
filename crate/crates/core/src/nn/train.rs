use std::io::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LossHistory, MlpModel, Normalizer, RmsProp};
use crate::constants::PASCAL_PER_BAR;
use crate::dataset::{split_indices, Dataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainStage {
    pub learning_rate: f64,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSchedule {
    pub stages: Vec<TrainStage>,
    pub batch_size: usize,
}

impl Default for TrainSchedule {
    /// Four stages of 500 epochs, 1e-7 down to 1e-10, batch 100.
    fn default() -> Self {
        Self {
            stages: [1e-7, 1e-8, 1e-9, 1e-10]
                .into_iter()
                .map(|learning_rate| TrainStage {
                    learning_rate,
                    epochs: 500,
                })
                .collect(),
            batch_size: 100,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::Config("training schedule has no stages".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        for (i, s) in self.stages.iter().enumerate() {
            if !(s.learning_rate > 0.0 && s.learning_rate.is_finite()) || s.epochs == 0 {
                return Err(Error::Config(format!(
                    "stage {i}: learning rate must be positive and epochs >= 1 (got {}, {})",
                    s.learning_rate, s.epochs
                )));
            }
            if i > 0 && s.learning_rate >= self.stages[i - 1].learning_rate {
                return Err(Error::Config(format!("stage {i}: learning rates must decrease")));
            }
        }
        Ok(())
    }

    pub fn total_epochs(&self) -> usize {
        self.stages.iter().map(|s| s.epochs).sum()
    }

    /// Learning rate of every epoch in order.
    fn rates(&self) -> impl Iterator<Item = f64> + '_ {
        self.stages
            .iter()
            .flat_map(|s| std::iter::repeat(s.learning_rate).take(s.epochs))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub hidden_layers: usize,
    pub width: usize,
    pub schedule: TrainSchedule,
    pub seed: u64,
    pub validation_rows: usize,
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers == 0 || self.width == 0 {
            return Err(Error::Config("network needs >= 1 hidden layer of width >= 1".into()));
        }
        self.schedule.validate()
    }
}

/// Provenance stored alongside the network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMeta {
    pub species: Vec<String>,
    pub spheres: Vec<String>,
    pub target: String,
    pub seed: u64,
    pub dataset_hash: String,
    /// Physics configuration the training rows were generated with.
    pub config_hash: String,
    pub epochs: usize,
}

/// Network plus the input scaling it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub mlp: MlpModel,
    pub normalizer: Normalizer,
    pub meta: ModelMeta,
}

impl TrainedModel {
    /// Predicted target pressure in bar for each dataset row.
    pub fn predict_bar(&self, frequencies: ndarray::ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        self.mlp.predict(self.normalizer.apply_rows(frequencies).view())
    }

    /// Describes how `species`/`spheres` differ from the training layout.
    pub fn layout_mismatch(&self, species: &[String], spheres: &[String]) -> Option<String> {
        if self.meta.species != species {
            return Some(format!(
                "model species order [{}] differs from [{}]",
                self.meta.species.join(","),
                species.join(",")
            ));
        }
        if self.meta.spheres != spheres {
            return Some(format!(
                "model sphere order [{}] differs from [{}]",
                self.meta.spheres.join(","),
                spheres.join(",")
            ));
        }
        None
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    pub history: LossHistory,
    pub train_rows: Vec<usize>,
    pub validation_rows: Vec<usize>,
}

fn targets_bar(ds: &Dataset) -> Result<Array1<f64>> {
    let t = ds.target_index()?;
    Ok(ds.pressures.column(t).mapv(|p| p / PASCAL_PER_BAR))
}

/// Splits `ds` with the seeded permutation and trains on the larger part.
pub fn train(ds: &Dataset, opts: &TrainOptions) -> Result<TrainOutcome> {
    opts.validate()?;
    let (train_rows, validation_rows) = split_indices(ds.len(), opts.validation_rows, opts.seed)?;
    let (model, history) = train_split(&ds.select(&train_rows), &ds.select(&validation_rows), opts, &ds.content_hash())?;
    Ok(TrainOutcome {
        model,
        history,
        train_rows,
        validation_rows,
    })
}

/// Full schedule on explicit training and validation sets. The normalizer is
/// fitted on `train_ds` only.
pub fn train_split(
    train_ds: &Dataset,
    val_ds: &Dataset,
    opts: &TrainOptions,
    dataset_hash: &str,
) -> Result<(TrainedModel, LossHistory)> {
    opts.validate()?;
    let normalizer = Normalizer::fit(train_ds.frequencies.view())?;
    let x = normalizer.apply_rows(train_ds.frequencies.view());
    let y = targets_bar(train_ds)?;
    let xv = normalizer.apply_rows(val_ds.frequencies.view());
    let yv = targets_bar(val_ds)?;

    let mut dims = vec![x.ncols()];
    dims.extend(std::iter::repeat(opts.width).take(opts.hidden_layers));
    dims.push(1);
    let mut init_rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut mlp = MlpModel::new(&dims, &mut init_rng)?;
    let mut opt = RmsProp::new(&mlp);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(opts.seed);
    shuffle_rng.set_stream(1);

    let n = x.nrows();
    let bs = opts.schedule.batch_size;
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = LossHistory::default();
    let mut xb = Array2::zeros((0, x.ncols()));
    let mut yb = Array1::zeros(0);
    for (epoch, lr) in opts.schedule.rates().enumerate() {
        order.shuffle(&mut shuffle_rng);
        let mut sum = 0.0;
        for batch in order.chunks(bs) {
            xb = if xb.nrows() == batch.len() { xb } else { Array2::zeros((batch.len(), x.ncols())) };
            yb = if yb.len() == batch.len() { yb } else { Array1::zeros(batch.len()) };
            for (k, &i) in batch.iter().enumerate() {
                xb.row_mut(k).assign(&x.row(i));
                yb[k] = y[i];
            }
            let (loss, grads) = mlp.loss_and_gradients(xb.view(), yb.view())?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, history });
            }
            sum += loss * batch.len() as f64;
            opt.step(&mut mlp, &grads, lr);
        }
        let train_mse = sum / n as f64;
        let val_mse = match mlp.loss(xv.view(), yv.view()) {
            Ok(v) if v.is_finite() => v,
            _ => return Err(Error::Diverged { epoch, history }),
        };
        history.train.push(train_mse);
        history.validation.push(val_mse);
        log::debug!("epoch {epoch}: lr {lr:e} train {train_mse:.6e} val {val_mse:.6e}");
        if (epoch + 1) % 50 == 0 {
            log::info!("epoch {}: train MSE {train_mse:.4e} bar^2, validation MSE {val_mse:.4e} bar^2", epoch + 1);
        }
    }

    let model = TrainedModel {
        mlp,
        normalizer,
        meta: ModelMeta {
            species: train_ds.meta.species.clone(),
            spheres: train_ds.meta.spheres.clone(),
            target: train_ds.meta.target.clone(),
            seed: opts.seed,
            dataset_hash: dataset_hash.to_string(),
            config_hash: train_ds.meta.config_hash.clone(),
            epochs: opts.schedule.total_epochs(),
        },
    };
    Ok((model, history))
}

/// Validation metrics in bar units; `rmse` is the sensor uncertainty.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mse: f64,
    pub rmse: f64,
    /// (true, predicted) target pressure in bar
    pub pairs: Vec<(f64, f64)>,
}

pub fn evaluate(model: &TrainedModel, ds: &Dataset) -> Result<EvalReport> {
    if ds.is_empty() {
        return Err(Error::Config("cannot evaluate on an empty dataset".into()));
    }
    let truth = targets_bar(ds)?;
    let pred = model.predict_bar(ds.frequencies.view())?;
    let mse = truth.iter().zip(&pred).map(|(t, p)| (p - t) * (p - t)).sum::<f64>() / ds.len() as f64;
    Ok(EvalReport {
        mse,
        rmse: mse.sqrt(),
        pairs: truth.iter().copied().zip(pred.iter().copied()).collect(),
    })
}

pub fn write_loss_history(history: &LossHistory, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::from("epoch,train_mse_bar2,validation_mse_bar2\n");
    for (i, (t, v)) in history.train.iter().zip(&history.validation).enumerate() {
        text.push_str(&format!("{},{t},{v}\n", i + 1));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_scatter(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(w, "true_bar,predicted_bar").map_err(io)?;
    for (t, p) in &report.pairs {
        writeln!(w, "{t},{p}").map_err(io)?;
    }
    w.flush().map_err(io)
}
