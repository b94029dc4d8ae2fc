use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Schedule {
    /// `lr0·factor^n` after `n` milestones (in completed epochs) have passed.
    StepDecay { milestones: Vec<usize>, factor: f64 },
    /// Multiply by `factor` after `patience` evals without a relative
    /// improvement of at least `threshold` over the best so far.
    Plateau {
        factor: f64,
        patience: usize,
        threshold: f64,
    },
}

impl Schedule {
    pub fn step_decay(milestones: Vec<usize>) -> Self {
        Schedule::StepDecay {
            milestones,
            factor: 0.1,
        }
    }

    pub fn plateau() -> Self {
        Schedule::Plateau {
            factor: 0.8,
            patience: 10,
            threshold: 1e-4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Schedule::StepDecay { .. } => "step_decay",
            Schedule::Plateau { .. } => "plateau",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    Mse,
    L1,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Mse => "mse",
            LossKind::L1 => "l1",
        })
    }
}

impl FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mse" => Ok(LossKind::Mse),
            "l1" => Ok(LossKind::L1),
            _ => Err(format!("unknown loss {s:?}, expected mse or l1")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentConfig {
    pub scales: Vec<f64>,
    /// Quarter turns applied to the original, e.g. `[1, 2, 3]`.
    pub rotations: Vec<usize>,
    /// Also rotate every downscaled copy.
    pub compose: bool,
}

impl AugmentConfig {
    pub fn none() -> Self {
        AugmentConfig {
            scales: Vec::new(),
            rotations: Vec::new(),
            compose: false,
        }
    }

    pub fn is_enabled(&self) -> bool {
        !self.scales.is_empty() || !self.rotations.is_empty()
    }
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            scales: vec![0.9, 0.8, 0.7, 0.6],
            rotations: vec![1, 2, 3],
            compose: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr0: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stops mid-epoch once this many optimiser steps have run.
    pub max_steps: Option<usize>,
    pub schedule: Schedule,
    pub seed: u64,
    pub loss: LossKind,
    /// Low-resolution patch side.
    pub patch_size: usize,
    pub patch_stride: usize,
    pub augment: AugmentConfig,
    /// Write `epoch_N.atup` every this many epochs; 0 disables.
    pub checkpoint_every: usize,
}

impl TrainConfig {
    fn patch_defaults(scale: usize) -> (usize, usize) {
        if scale <= 2 {
            (32, 16)
        } else {
            (16, 8)
        }
    }

    /// Super-resolution defaults: batch 20, plateau decay, scale and rotation
    /// augmentation, patch 32 / stride 16 at 2× and 16 / 8 otherwise.
    pub fn sisr(scale: usize) -> Self {
        let (m, s) = Self::patch_defaults(scale);
        TrainConfig {
            lr0: 1e-3,
            batch_size: 20,
            epochs: 2000,
            max_steps: None,
            schedule: Schedule::plateau(),
            seed: 0,
            loss: LossKind::Mse,
            patch_size: m,
            patch_stride: s,
            augment: AugmentConfig::default(),
            checkpoint_every: 0,
        }
    }

    /// Guided depth defaults: batch 10, 2000 epochs with tenfold decays after
    /// epochs 1200 and 1600, no augmentation.
    pub fn joint(factor: usize) -> Self {
        TrainConfig {
            batch_size: 10,
            schedule: Schedule::step_decay(vec![1200, 1600]),
            augment: AugmentConfig::none(),
            ..Self::sisr(factor)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad(format!("lr0 must be positive, got {}", self.lr0));
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if self.patch_size == 0 || self.patch_stride == 0 {
            return bad("patch size and stride must be positive".into());
        }
        let factor = match &self.schedule {
            Schedule::StepDecay { factor, .. } => *factor,
            Schedule::Plateau {
                factor,
                patience,
                threshold,
            } => {
                if *patience == 0 {
                    return bad("plateau patience must be positive".into());
                }
                if threshold.is_nan() || *threshold < 0.0 {
                    return bad(format!(
                        "plateau threshold must be non-negative, got {threshold}"
                    ));
                }
                *factor
            }
        };
        if !(factor > 0.0 && factor <= 1.0) {
            return bad(format!("decay factor must lie in (0, 1], got {factor}"));
        }
        if let Some(s) = self
            .augment
            .scales
            .iter()
            .find(|s| !(**s > 0.0 && **s <= 1.0))
        {
            return bad(format!("augmentation scale {s} not in (0, 1]"));
        }
        if let Some(r) = self
            .augment
            .rotations
            .iter()
            .find(|r| !(1..=3).contains(*r))
        {
            return bad(format!("rotation {r} quarter turns not in 1..=3"));
        }
        Ok(())
    }
}

/// Learning rate for the epoch after `epoch` completed epochs, given the eval
/// losses logged so far.
///
/// Plateau counting starts with the first eval: it sets the best value but is
/// not itself an improvement, so a flat history of `n·patience` evals yields
/// `n` decays.
pub fn schedule_lr(cfg: &TrainConfig, epoch: usize, eval_history: &[f64]) -> f64 {
    match &cfg.schedule {
        Schedule::StepDecay { milestones, factor } => {
            let passed = milestones.iter().filter(|&&m| epoch >= m).count();
            cfg.lr0 * factor.powi(passed as i32)
        }
        Schedule::Plateau {
            factor,
            patience,
            threshold,
        } => {
            let mut lr = cfg.lr0;
            let mut best = f64::INFINITY;
            let mut stale = 0;
            for &loss in eval_history {
                if best.is_finite() && loss < best * (1.0 - threshold) {
                    stale = 0;
                } else {
                    stale += 1;
                }
                best = best.min(loss);
                if stale == *patience {
                    lr *= factor;
                    stale = 0;
                }
            }
            lr
        }
    }
}
