use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::adam::{adam_step, AdamState};
use super::config::{schedule_lr, LossKind, TrainConfig};
use super::metrics::{crop_border, fmt_metric, mse, psnr_from_mse};
use crate::autodiff::{ParamGrads, ParamSet, Tape};
use crate::error::{Error, Result};
use crate::models::{save_checkpoint, Network};
use crate::par;
use crate::tensor::{SeededRng, Tensor};

/// Network inputs and the expected output.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub inputs: Vec<Tensor<f32>>,
    pub target: Tensor<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalItem {
    pub name: String,
    pub sample: Sample,
}

/// Which eval metric picks the retained checkpoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Select {
    MaxPsnr,
    MinRmse,
}

/// How predictions are scored.
#[derive(Clone, Debug, PartialEq)]
pub struct Scoring {
    /// Peak value for PSNR on the network's scale.
    pub max_val: f64,
    /// Multiplier from network units to reported RMSE units.
    pub rmse_unit: f64,
    /// Pixels dropped from each edge before scoring.
    pub border: usize,
    /// Predictions are clamped into this range before scoring.
    pub clamp: Option<(f32, f32)>,
    pub select: Select,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub train: Vec<Sample>,
    pub eval: Vec<EvalItem>,
    pub scoring: Scoring,
}

/// Per-image scores.
#[derive(Clone, Debug, PartialEq)]
pub struct ItemScore {
    pub name: String,
    pub mse: f64,
    pub psnr_db: f64,
    pub rmse: f64,
}

/// Means over an eval set.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalSummary {
    pub items: Vec<ItemScore>,
    pub loss: f64,
    pub psnr_db: f64,
    pub rmse: f64,
}

impl EvalSummary {
    fn better_than(&self, other: &EvalSummary, select: Select) -> bool {
        match select {
            Select::MaxPsnr => self.psnr_db > other.psnr_db,
            Select::MinRmse => self.rmse < other.rmse,
        }
    }
}

/// Scores one prediction against its target.
pub fn score(
    name: &str,
    pred: &Tensor<f32>,
    target: &Tensor<f32>,
    s: &Scoring,
) -> Result<ItemScore> {
    let pred = match s.clamp {
        Some((lo, hi)) => pred.map(|v| v.clamp(lo, hi)),
        None => pred.clone(),
    };
    let p = crop_border(&pred, s.border)?;
    let t = crop_border(target, s.border)?;
    let m = mse(&p, &t)?;
    Ok(ItemScore {
        name: name.to_string(),
        mse: m,
        psnr_db: psnr_from_mse(m, s.max_val),
        rmse: m.sqrt() * s.rmse_unit,
    })
}

pub fn summarize(items: Vec<ItemScore>) -> EvalSummary {
    let n = items.len().max(1) as f64;
    let mean = |f: fn(&ItemScore) -> f64| items.iter().map(f).sum::<f64>() / n;
    EvalSummary {
        loss: mean(|s| s.mse),
        psnr_db: mean(|s| s.psnr_db),
        rmse: mean(|s| s.rmse),
        items,
    }
}

/// Runs the model on every eval item.
pub fn evaluate<N: Network>(
    model: &N,
    params: &ParamSet<f32>,
    data: &Dataset,
) -> Result<EvalSummary> {
    let items = par::map_indices(data.eval.len(), |i| {
        let e = &data.eval[i];
        let pred = model.predict(params, &e.sample.inputs)?;
        score(&e.name, &pred, &e.sample.target, &data.scoring)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(summarize(items))
}

/// One row of the metric log.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub epoch: usize,
    pub split: &'static str,
    pub loss: f64,
    pub psnr_db: Option<f64>,
    pub rmse: Option<f64>,
    pub lr: f64,
}

pub const LOG_HEADER: &str = "epoch,split,loss,psnr_db,rmse,lr";

pub fn log_csv(rows: &[LogRow]) -> String {
    let mut s = String::from(LOG_HEADER);
    s.push('\n');
    for r in rows {
        let opt = |v: Option<f64>| v.map(fmt_metric).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{:.9},{},{},{}",
            r.epoch,
            r.split,
            r.loss,
            opt(r.psnr_db),
            opt(r.rmse),
            r.lr
        );
    }
    s
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub best: ParamSet<f32>,
    pub last: ParamSet<f32>,
    pub best_epoch: usize,
    pub best_eval: EvalSummary,
    pub log: Vec<LogRow>,
    pub steps: usize,
}

/// Loss and parameter gradients for one sample.
pub fn sample_grads<N: Network>(
    model: &N,
    params: &ParamSet<f32>,
    s: &Sample,
    loss: LossKind,
) -> Result<(f64, ParamGrads<f32>)> {
    let mut tape = Tape::new(params);
    let inputs: Vec<_> = s.inputs.iter().map(|t| tape.input(t.clone())).collect();
    let y = model.forward(&mut tape, &inputs)?;
    let l = match loss {
        LossKind::Mse => tape.mse(y, &s.target)?,
        LossKind::L1 => tape.l1(y, &s.target)?,
    };
    let value = tape.value(l).data()[0] as f64;
    Ok((value, tape.backward(l)?))
}

/// Mean loss and gradient over a batch; samples run concurrently and are
/// reduced in batch order.
pub fn batch_grads<N: Network>(
    model: &N,
    params: &ParamSet<f32>,
    batch: &[&Sample],
    loss: LossKind,
) -> Result<(f64, ParamGrads<f32>)> {
    let parts = par::map_indices(batch.len(), |i| sample_grads(model, params, batch[i], loss));
    let mut total = 0.0;
    let mut grads = ParamGrads::empty(params.len());
    for p in parts {
        let (l, g) = p?;
        total += l;
        grads.add_assign(&g)?;
    }
    let n = batch.len() as f64;
    grads.scale(1.0 / n as f32);
    Ok((total / n, grads))
}

struct Sink<'a> {
    dir: Option<&'a Path>,
}

impl Sink<'_> {
    fn path(&self, name: &str) -> Option<PathBuf> {
        self.dir.map(|d| d.join(name))
    }

    fn checkpoint(&self, name: &str, ps: &ParamSet<f32>) -> Result<()> {
        match self.path(name) {
            Some(p) => save_checkpoint(&p, ps),
            None => Ok(()),
        }
    }

    fn log(&self, rows: &[LogRow]) -> Result<()> {
        match self.path("metrics.csv") {
            Some(p) => std::fs::write(&p, log_csv(rows)).map_err(|e| Error::io(&p, e)),
            None => Ok(()),
        }
    }
}

/// Trains a copy of `init` and returns the best and final parameter sets.
///
/// The initial parameters are evaluated as epoch 0. Each epoch visits the
/// training samples in a seeded shuffled order. With `out_dir`, writes
/// `best.atup`, `last.atup`, optional `epoch_N.atup` and `metrics.csv`.
/// A non-finite loss or gradient stops training with an error after writing
/// the last finite parameters to `last.atup`.
pub fn train<N: Network>(
    model: &N,
    init: &ParamSet<f32>,
    data: &Dataset,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.train.is_empty() && cfg.epochs > 0 {
        return Err(Error::Config("no training samples".into()));
    }
    if data.eval.is_empty() {
        return Err(Error::Config("no eval samples".into()));
    }
    if let Some(d) = out_dir {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let sink = Sink { dir: out_dir };
    let mut params = init.clone();
    let mut adam = AdamState::new(&params);
    let rng = SeededRng::new(cfg.seed);

    let first = evaluate(model, &params, data)?;
    let mut prog = Progress {
        eval_losses: vec![first.loss],
        log: vec![LogRow {
            epoch: 0,
            split: "eval",
            loss: first.loss,
            psnr_db: Some(first.psnr_db),
            rmse: Some(first.rmse),
            lr: cfg.lr0,
        }],
        best: (params.clone(), 0, first),
    };
    sink.checkpoint("best.atup", &params)?;
    sink.log(&prog.log)?;

    let mut steps = 0;
    for epoch in 1..=cfg.epochs {
        if cfg.max_steps.is_some_and(|m| steps >= m) {
            break;
        }
        let lr = schedule_lr(cfg, epoch - 1, &prog.eval_losses);
        let mut order: Vec<usize> = (0..data.train.len()).collect();
        rng.fork(epoch as u64).shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &data.train[i]).collect();
            let step = batch_grads(model, &params, &batch, cfg.loss).and_then(|(l, g)| {
                if !l.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "loss {l} at epoch {epoch}, step {}",
                        steps + 1
                    )));
                }
                adam_step(&mut params, &g, &mut adam, lr)?;
                Ok(l)
            });
            let l = match step {
                Ok(l) => l,
                Err(e) => {
                    sink.checkpoint("last.atup", &params)?;
                    sink.log(&prog.log)?;
                    return Err(e);
                }
            };
            loss_sum += l;
            batches += 1;
            steps += 1;
            if cfg.max_steps.is_some_and(|m| steps >= m) {
                break;
            }
        }
        let train_row = LogRow {
            epoch,
            split: "train",
            loss: loss_sum / batches.max(1) as f64,
            psnr_db: None,
            rmse: None,
            lr,
        };
        prog.record(model, &params, data, &sink, train_row)?;
        if cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 {
            sink.checkpoint(&format!("epoch_{epoch}.atup"), &params)?;
        }
    }
    sink.checkpoint("last.atup", &params)?;
    sink.log(&prog.log)?;
    let Progress { log, best, .. } = prog;
    let (best_params, best_epoch, best_eval) = best;
    Ok(TrainOutcome {
        best: best_params,
        last: params,
        best_epoch,
        best_eval,
        log,
        steps,
    })
}

struct Progress {
    log: Vec<LogRow>,
    eval_losses: Vec<f64>,
    best: (ParamSet<f32>, usize, EvalSummary),
}

impl Progress {
    fn record<N: Network>(
        &mut self,
        model: &N,
        params: &ParamSet<f32>,
        data: &Dataset,
        sink: &Sink<'_>,
        train: LogRow,
    ) -> Result<()> {
        let LogRow {
            epoch,
            lr,
            loss: train_loss,
            ..
        } = train;
        self.log.push(train);
        let ev = evaluate(model, params, data)?;
        self.log.push(LogRow {
            epoch,
            split: "eval",
            loss: ev.loss,
            psnr_db: Some(ev.psnr_db),
            rmse: Some(ev.rmse),
            lr,
        });
        log::info!(
            "epoch {epoch}: train loss {train_loss:.6}, eval loss {:.6}, psnr {} dB, rmse {}, lr {lr:.3e}",
            ev.loss,
            fmt_metric(ev.psnr_db),
            fmt_metric(ev.rmse)
        );
        self.eval_losses.push(ev.loss);
        if ev.better_than(&self.best.2, data.scoring.select) {
            self.best = (params.clone(), epoch, ev);
            sink.checkpoint("best.atup", params)?;
        }
        sink.log(&self.log)
    }
}
