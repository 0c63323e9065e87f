use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Fully connected network with ReLU on every layer, including the scalar output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    /// `weights[l]` has shape (out, in).
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

/// Same shapes as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

#[inline]
fn relu(x: f64) -> f64 {
    x.max(0.0)
}

impl MlpModel {
    /// He-normal weights (variance `2 / fan_in`), zero biases.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(Error::Config(format!("invalid layer dimensions {dims:?}")));
        }
        let mut weights = Vec::with_capacity(dims.len() - 1);
        let mut biases = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            weights.push(Array2::from_shape_fn((fan_out, fan_in), |_| normal.sample(rng)));
            biases.push(Array1::zeros(fan_out));
        }
        Ok(Self { weights, biases })
    }

    pub fn from_parameters(weights: Vec<Array2<f64>>, biases: Vec<Array1<f64>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::Config("need one bias vector per weight matrix".into()));
        }
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.nrows() != b.len() {
                return Err(Error::Config(format!("layer {l}: {} outputs but {} biases", w.nrows(), b.len())));
            }
            if l > 0 && weights[l - 1].nrows() != w.ncols() {
                return Err(Error::Config(format!(
                    "layer {l} expects {} inputs, previous layer gives {}",
                    w.ncols(),
                    weights[l - 1].nrows()
                )));
            }
            if w.iter().chain(b.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("layer {l} has non-finite parameters")));
            }
        }
        if weights.last().map(|w| w.nrows()) != Some(1) {
            return Err(Error::Config("output layer must have a single unit".into()));
        }
        Ok(Self { weights, biases })
    }

    /// `[inputs, hidden..., 1]`
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.weights[0].ncols())
            .chain(self.weights.iter().map(|w| w.nrows()))
            .collect()
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Mutable access to the flat list of parameter arrays, weights then bias
    /// per layer (used by finite-difference checks).
    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| w.iter_mut().chain(b.iter_mut()))
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        let expect = self.weights[0].ncols();
        if cols != expect {
            return Err(Error::Config(format!("network expects {expect} inputs, got {cols}")));
        }
        Ok(())
    }

    /// Layer inputs and pre-activations for a batch (rows are samples).
    fn trace(&self, x: ArrayView2<'_, f64>) -> (Vec<Array2<f64>>, Vec<Array2<f64>>) {
        let mut inputs = Vec::with_capacity(self.weights.len());
        let mut pre = Vec::with_capacity(self.weights.len());
        let mut a = x.to_owned();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            let z = a.dot(&w.t()) + b;
            let next = z.mapv(relu);
            inputs.push(a);
            pre.push(z);
            a = next;
        }
        (inputs, pre)
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        self.check_input(x.ncols())?;
        let mut a = x.to_owned();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            a = (a.dot(&w.t()) + b).mapv(relu);
        }
        let out = a.index_axis_move(Axis(1), 0);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite network output".into()));
        }
        Ok(out)
    }

    pub fn forward(&self, x: ArrayView1<'_, f64>) -> Result<f64> {
        let row = x.insert_axis(Axis(0));
        Ok(self.predict(row)?[0])
    }

    /// Mean squared error over the batch.
    pub fn loss(&self, x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>) -> Result<f64> {
        let pred = self.predict(x)?;
        Ok((&pred - &y).mapv(|r| r * r).mean().unwrap_or(0.0))
    }

    /// MSE and its gradient with respect to every parameter.
    pub fn loss_and_gradients(&self, x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>) -> Result<(f64, Gradients)> {
        self.check_input(x.ncols())?;
        if x.nrows() == 0 || x.nrows() != y.len() {
            return Err(Error::Config(format!("batch has {} inputs and {} targets", x.nrows(), y.len())));
        }
        let (inputs, pre) = self.trace(x);
        let n = x.nrows() as f64;
        let out = pre.last().expect("at least one layer").column(0).mapv(relu);
        let resid = &out - &y;
        let loss = resid.mapv(|r| r * r).sum() / n;

        let layers = self.weights.len();
        let mut gw = vec![Array2::zeros((0, 0)); layers];
        let mut gb = vec![Array1::zeros(0); layers];
        let mut delta = (resid * (2.0 / n)).insert_axis(Axis(1));
        for l in (0..layers).rev() {
            Zip::from(&mut delta).and(&pre[l]).for_each(|d, &z| {
                if z <= 0.0 {
                    *d = 0.0;
                }
            });
            gw[l] = delta.t().dot(&inputs[l]);
            gb[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                delta = delta.dot(&self.weights[l]);
            }
        }
        Ok((
            loss,
            Gradients {
                weights: gw,
                biases: gb,
            },
        ))
    }
}

/// RMSprop: `s = rho s + (1 - rho) g^2`, `p -= lr g / sqrt(s + eps)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsProp {
    pub rho: f64,
    pub eps: f64,
    sq_w: Vec<Array2<f64>>,
    sq_b: Vec<Array1<f64>>,
}

impl RmsProp {
    pub fn new(model: &MlpModel) -> Self {
        Self::with_params(model, 0.9, 1e-8)
    }

    pub fn with_params(model: &MlpModel, rho: f64, eps: f64) -> Self {
        Self {
            rho,
            eps,
            sq_w: model.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            sq_b: model.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    pub fn step(&mut self, model: &mut MlpModel, grads: &Gradients, lr: f64) {
        let (rho, eps) = (self.rho, self.eps);
        let update = |p: &mut f64, s: &mut f64, &g: &f64| {
            *s = rho * *s + (1.0 - rho) * g * g;
            *p -= lr * g / (*s + eps).sqrt();
        };
        for l in 0..model.weights.len() {
            Zip::from(&mut model.weights[l])
                .and(&mut self.sq_w[l])
                .and(&grads.weights[l])
                .for_each(update);
            Zip::from(&mut model.biases[l])
                .and(&mut self.sq_b[l])
                .and(&grads.biases[l])
                .for_each(update);
        }
    }
}
