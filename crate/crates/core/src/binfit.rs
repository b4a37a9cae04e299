//! Fits histogram bin logits to a set of depth samples by gradient descent on
//! the bidirectional Chamfer loss, differentiating through the width
//! normalization and a softplus reparameterization of the logits.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distribution::{bin_centers, BinLogits, DepthHistogram, DepthRange, DEFAULT_BINS, DEFAULT_EPSILON};
use crate::error::{Error, Result};
use crate::loss::chamfer_1d;
use crate::synth::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub bins: usize,
    pub steps: usize,
    /// Initial step size.
    pub lr: f64,
    /// Stop once an accepted step improves the loss by less than this fraction.
    pub tol: f64,
    pub epsilon: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            bins: DEFAULT_BINS,
            steps: 500,
            lr: 0.5,
            tol: 1e-9,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bins < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 bins, got {}", self.bins)));
        }
        if !(self.lr > 0.0) || !(self.epsilon > 0.0) || !(self.tol >= 0.0) {
            return Err(Error::InvalidArgument("lr and epsilon must be positive, tol nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitStep {
    pub iteration: usize,
    /// Loss at the accepted iterate.
    pub loss: f64,
    /// Step size that produced it (0 for the initial state).
    pub step: f64,
    /// Rejected trial steps before acceptance.
    pub halvings: u32,
}

#[derive(Debug, Clone)]
pub struct FitTrace {
    pub steps: Vec<FitStep>,
    pub params: Vec<f64>,
    pub logits: BinLogits,
    pub histogram: DepthHistogram,
}

impl FitTrace {
    pub fn initial_loss(&self) -> f64 {
        self.steps[0].loss
    }

    pub fn final_loss(&self) -> f64 {
        self.steps.last().expect("trace has the initial state").loss
    }
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// The differentiable chain `params -> softplus -> widths -> centers -> Chamfer`.
#[derive(Debug, Clone, Copy)]
pub struct BinObjective<'a> {
    samples: &'a [f64],
    range: DepthRange,
    epsilon: f64,
}

impl<'a> BinObjective<'a> {
    pub fn new(samples: &'a [f64], range: DepthRange, epsilon: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySet("depth samples"));
        }
        Ok(Self {
            samples,
            range,
            epsilon,
        })
    }

    pub fn histogram(&self, params: &[f64]) -> Result<DepthHistogram> {
        let logits = BinLogits::new(params.iter().map(|&p| softplus(p)).collect())?;
        bin_centers(&logits, self.range, self.epsilon)
    }

    pub fn loss(&self, params: &[f64]) -> Result<f64> {
        let h = self.histogram(params)?;
        Ok(chamfer_1d(self.samples, h.centers(), false)?.loss)
    }

    /// Loss and its gradient with respect to `params`.
    pub fn loss_and_grad(&self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        let logits: Vec<f64> = params.iter().map(|&p| softplus(p)).collect();
        let h = bin_centers(&BinLogits::new(logits.clone())?, self.range, self.epsilon)?;
        let ch = chamfer_1d(self.samples, h.centers(), true)?;
        let g_c = ch.grad.expect("requested");

        // c_i = d_min + sum_{j<i} w_j + w_i / 2
        let b = g_c.len();
        let mut g_w = vec![0.0; b];
        let mut suffix = 0.0;
        for i in (0..b).rev() {
            g_w[i] = 0.5 * g_c[i] + suffix;
            suffix += g_c[i];
        }

        // w_i = span * s_i / S with s_i = l_i + eps, S = sum s
        let s: Vec<f64> = logits.iter().map(|l| l + self.epsilon).collect();
        let total: f64 = s.iter().sum();
        let mean_gw: f64 = g_w.iter().zip(&s).map(|(g, si)| g * si).sum::<f64>() / total;
        let span = self.range.span();
        let grad = params
            .iter()
            .zip(&g_w)
            .map(|(&p, &gw)| span / total * (gw - mean_gw) * sigmoid(p))
            .collect();
        Ok((ch.loss, grad))
    }
}

/// Gradient descent with step halving: a trial step that raises the loss is
/// retried at half the size, and after an accepted step the size grows back
/// by 1.5x (never beyond `lr`).
pub fn fit_bins(samples: &[f64], range: DepthRange, cfg: &FitConfig, seed: u64) -> Result<FitTrace> {
    cfg.validate()?;
    let objective = BinObjective::new(samples, range, cfg.epsilon)?;
    if let Some(x) = samples.iter().find(|x| !range.contains(**x)) {
        return Err(Error::InvalidArgument(format!("sample {x} outside the depth range")));
    }

    let mut r = rng(seed);
    let mut params: Vec<f64> = (0..cfg.bins).map(|_| r.random_range(-0.1..0.1)).collect();
    let (mut loss, mut grad) = objective.loss_and_grad(&params)?;
    let mut steps = vec![FitStep {
        iteration: 0,
        loss,
        step: 0.0,
        halvings: 0,
    }];
    let mut step = cfg.lr;
    const MAX_HALVINGS: u32 = 60;

    for iteration in 1..=cfg.steps {
        let mut halvings = 0;
        let accepted = loop {
            let trial: Vec<f64> = params.iter().zip(&grad).map(|(p, g)| p - step * g).collect();
            let trial_loss = objective.loss(&trial)?;
            if trial_loss <= loss {
                break Some((trial, trial_loss));
            }
            halvings += 1;
            if halvings > MAX_HALVINGS {
                break None;
            }
            step *= 0.5;
        };
        let Some((trial, trial_loss)) = accepted else { break };
        let improvement = if loss > 0.0 { (loss - trial_loss) / loss } else { 0.0 };
        params = trial;
        loss = trial_loss;
        steps.push(FitStep {
            iteration,
            loss,
            step,
            halvings,
        });
        if improvement < cfg.tol {
            break;
        }
        grad = objective.loss_and_grad(&params)?.1;
        step = (step * 1.5).min(cfg.lr);
    }

    let logits = BinLogits::new(params.iter().map(|&p| softplus(p)).collect())?;
    let histogram = bin_centers(&logits, range, cfg.epsilon)?;
    Ok(FitTrace {
        steps,
        params,
        logits,
        histogram,
    })
}
