//! One optimization step of the multi-level objective.

use thiserror::Error;

use crate::alignment::LossWeights;
use crate::autograd::Graph;
use crate::data::Batch;
use crate::model::{HiGita, ModelError};
use crate::nn::ParamStore;
use crate::optim::Adam;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// Per-level losses in `Level::ALL` order.
    pub levels: [f64; 4],
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("non-finite loss at step {step}: levels {levels:?}, total {total}, lambda {lambda}")]
    NonFiniteLoss {
        step: u64,
        levels: [f64; 4],
        total: f64,
        lambda: f64,
    },
}

/// Forward, backward, and one Adam update. Parameters and running
/// statistics are left untouched when the loss is not finite.
pub fn train_step(
    model: &HiGita,
    store: &mut ParamStore,
    adam: &mut Adam,
    batch: &Batch,
    weights: &LossWeights,
) -> Result<StepReport, TrainError> {
    let g = Graph::training();
    let losses = model.losses(&g, store, batch, weights)?;
    let report = StepReport {
        levels: losses.levels.map(|l| l.item()),
        total: losses.total.item(),
    };
    if !report.total.is_finite() || report.levels.iter().any(|l| !l.is_finite()) {
        return Err(TrainError::NonFiniteLoss {
            step: adam.t,
            levels: report.levels,
            total: report.total,
            lambda: model.lambda_value(store),
        });
    }
    let grads = g.backward(losses.total);
    let param_grads = g.param_grads(&grads);
    let updates = g.take_buffer_updates();
    drop(grads);
    drop(g);
    adam.step(store, &param_grads);
    store.apply_buffer_updates(updates);
    Ok(report)
}

/// Loss of a batch without updating anything (batch statistics, as in
/// training).
pub fn eval_losses(
    model: &HiGita,
    store: &ParamStore,
    batch: &Batch,
    weights: &LossWeights,
) -> Result<StepReport, ModelError> {
    let g = Graph::with_mode(false, true);
    let l = model.losses(&g, store, batch, weights)?;
    Ok(StepReport {
        levels: l.levels.map(|v| v.item()),
        total: l.total.item(),
    })
}
