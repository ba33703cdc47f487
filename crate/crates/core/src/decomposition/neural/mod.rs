//! Factor networks `φ_q`, `φ_k` trained so that `φ_q(xq) · φ_k(xk)ᵀ`
//! matches a target bias in mean squared error.

mod adam;
mod mlp;

pub use adam::{AdamState, BETA1, BETA2, EPSILON};
pub use mlp::{Linear, Mlp};

use serde::{Deserialize, Serialize};

use super::{FactoredBias, Origin};
use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::rng::Rng;
use crate::tensor::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuralConfig {
    pub rank: usize,
    pub hidden: usize,
    pub iters: usize,
    pub lr: f64,
    /// Learning rate is multiplied by `lr_decay.0` every `lr_decay.1`
    /// iterations. The default spreads ×0.95-per-50-steps over a 2000-step
    /// run across the 10 000-step budget.
    pub lr_decay: (f64, usize),
    pub seed: u64,
}

impl Default for NeuralConfig {
    fn default() -> Self {
        Self {
            rank: 32,
            hidden: 256,
            iters: 10_000,
            lr: 1e-3,
            lr_decay: (0.95, 250),
            seed: 0,
        }
    }
}

impl NeuralConfig {
    pub fn lr_at(&self, iteration: usize) -> f64 {
        let (factor, every) = self.lr_decay;
        self.lr * factor.powi((iteration / every.max(1)) as i32)
    }
}

/// The query-side and key-side factor networks.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpPair<T> {
    pub query: Mlp<T>,
    pub key: Mlp<T>,
}

impl<T: Scalar> MlpPair<T> {
    pub fn new(input: usize, hidden: usize, rank: usize, seed: u64) -> Self {
        let mut rng = Rng::new(seed);
        let query = Mlp::new(input, hidden, rank, &mut rng);
        let key = Mlp::new(input, hidden, rank, &mut rng);
        Self { query, key }
    }

    pub fn factors(&self, xq: &Matrix<T>, xk: &Matrix<T>) -> (Matrix<T>, Matrix<T>) {
        (self.query.forward(xq), self.key.forward(xk))
    }

    /// Mean squared reconstruction error.
    pub fn loss(&self, xq: &Matrix<T>, xk: &Matrix<T>, target: &Matrix<T>) -> f64 {
        let (fq, fk) = self.factors(xq, xk);
        mse(&fq, &fk, target).0
    }

    /// Loss and parameter gradients by backpropagation through both
    /// networks and the factor product.
    pub fn loss_and_grads(
        &self,
        xq: &Matrix<T>,
        xk: &Matrix<T>,
        target: &Matrix<T>,
    ) -> (f64, MlpPair<T>) {
        let (fq, trace_q) = self.query.forward_traced(xq);
        let (fk, trace_k) = self.key.forward_traced(xk);
        let (loss, residual) = mse(&fq, &fk, target);
        // dL/dP = 2 (P − B) / (N·M)
        let scale = T::narrow(2.0 / (target.rows() * target.cols()) as f64);
        let g = residual.scale(scale);
        let dfq = g.matmul(&fk).expect("factor shapes agree");
        let dfk = g.transposed_matmul(&fq).expect("factor shapes agree");
        let grads = MlpPair {
            query: self.query.backward(&trace_q, &dfq),
            key: self.key.backward(&trace_k, &dfk),
        };
        (loss, grads)
    }

    pub fn is_finite(&self) -> bool {
        self.query.is_finite() && self.key.is_finite()
    }
}

/// Result of a training run.
#[derive(Clone, Debug)]
pub struct NeuralFit<T> {
    pub factors: FactoredBias<T>,
    pub networks: MlpPair<T>,
    /// Loss before each update; one entry per iteration.
    pub loss_trace: Vec<f64>,
    /// Loss at the returned parameters.
    pub final_loss: f64,
}

/// Trains the factor networks with full-batch Adam.
pub fn neural_decompose<T: Scalar>(
    xq: &Matrix<T>,
    xk: &Matrix<T>,
    target: &Matrix<T>,
    cfg: &NeuralConfig,
) -> Result<NeuralFit<T>> {
    if cfg.iters == 0 || cfg.rank == 0 || cfg.hidden == 0 {
        return Err(Error::Config(
            "iters, rank and hidden must all be positive".into(),
        ));
    }
    if xq.cols() != xk.cols() {
        return shape_err(format!(
            "query inputs have {} features, key inputs {}",
            xq.cols(),
            xk.cols()
        ));
    }
    if target.shape() != (xq.rows(), xk.rows()) {
        return shape_err(format!(
            "target is {}x{}, inputs give {}x{}",
            target.rows(),
            target.cols(),
            xq.rows(),
            xk.rows()
        ));
    }
    target.ensure_finite("target bias")?;

    let mut nets = MlpPair::new(xq.cols(), cfg.hidden, cfg.rank, cfg.seed);
    let mut adam_q = AdamState::new(&nets.query);
    let mut adam_k = AdamState::new(&nets.key);
    let mut trace = Vec::with_capacity(cfg.iters);

    for it in 0..cfg.iters {
        let (loss, grads) = nets.loss_and_grads(xq, xk, target);
        if !loss.is_finite() {
            return Err(Error::Training {
                iteration: it,
                loss,
            });
        }
        trace.push(loss);
        let lr = cfg.lr_at(it);
        adam_q.update(&mut nets.query, &grads.query, lr);
        adam_k.update(&mut nets.key, &grads.key, lr);
        if !nets.is_finite() {
            return Err(Error::Training {
                iteration: it,
                loss: f64::NAN,
            });
        }
    }

    let (fq, fk) = nets.factors(xq, xk);
    let final_loss = mse(&fq, &fk, target).0;
    if !final_loss.is_finite() {
        return Err(Error::Training {
            iteration: cfg.iters,
            loss: final_loss,
        });
    }
    let factors = FactoredBias::new(
        fq,
        fk,
        Origin::Neural,
        format!(
            "neural:rank={},hidden={},iters={}",
            cfg.rank, cfg.hidden, cfg.iters
        ),
    )?;
    Ok(NeuralFit {
        factors,
        networks: nets,
        loss_trace: trace,
        final_loss,
    })
}

/// Mean squared error of `fq · fkᵀ` against `target`, and the residual.
fn mse<T: Scalar>(fq: &Matrix<T>, fk: &Matrix<T>, target: &Matrix<T>) -> (f64, Matrix<T>) {
    let residual = fq
        .matmul_transposed(fk)
        .and_then(|p| p.sub(target))
        .expect("factor shapes agree");
    let sum: f64 = residual
        .as_slice()
        .iter()
        .map(|r| r.widen() * r.widen())
        .sum();
    (sum / residual.as_slice().len() as f64, residual)
}

/// Worst relative disagreement between backprop and central differences of
/// step `h`, over every parameter of `nets`. Denominators are floored at 1e-8.
pub fn gradient_check(
    nets: &MlpPair<f64>,
    xq: &Matrix<f64>,
    xk: &Matrix<f64>,
    target: &Matrix<f64>,
    h: f64,
) -> f64 {
    let (_, grads) = nets.loss_and_grads(xq, xk, target);
    let analytic = flatten(&grads);
    let params = flatten(nets);
    let mut worst: f64 = 0.0;
    for (idx, &p) in params.iter().enumerate() {
        let mut plus = nets.clone();
        set_flat(&mut plus, idx, p + h);
        let mut minus = nets.clone();
        set_flat(&mut minus, idx, p - h);
        let numeric = (plus.loss(xq, xk, target) - minus.loss(xq, xk, target)) / (2.0 * h);
        let denom = analytic[idx].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic[idx] - numeric).abs() / denom);
    }
    worst
}

fn flatten(p: &MlpPair<f64>) -> Vec<f64> {
    p.query
        .param_slices()
        .into_iter()
        .chain(p.key.param_slices())
        .flat_map(|s| s.iter().copied())
        .collect()
}

fn set_flat(p: &mut MlpPair<f64>, idx: usize, value: f64) {
    let mut seen = 0;
    for slice in p
        .query
        .param_slices_mut()
        .into_iter()
        .chain(p.key.param_slices_mut())
    {
        if idx < seen + slice.len() {
            slice[idx - seen] = value;
            return;
        }
        seen += slice.len();
    }
    panic!("parameter index {idx} out of range");
}
