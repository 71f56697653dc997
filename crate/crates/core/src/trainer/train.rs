//! Desk-scale training loop: linear warmup into a fixed learning rate,
//! per-step loss logging, periodic checkpoints, and an EMA shadow for
//! evaluation weights. Fully seeded; the single-threaded path is
//! reproducible bit for bit, and the threaded path only fans the batch out
//! over workers and reduces in batch order, so it produces the same bits.

use crate::error::{CoreError, Result};
use crate::model::{save_checkpoint, Model};
use crate::rng::Rng;
use crate::trainer::optim::{Ema, Optimizer, OptimizerHyper, OptimizerKind};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainRunConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub warmup_steps: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub ema_decay: f64,
    pub seed: u64,
    pub checkpoint_every: usize,
    /// 1 runs strictly sequentially; more threads parallelize over the batch.
    pub threads: usize,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        TrainRunConfig {
            steps: 2000,
            batch_size: 8,
            warmup_steps: 250,
            lr: 1e-4,
            optimizer: OptimizerKind::Ademamix,
            ema_decay: 0.999,
            seed: 0,
            checkpoint_every: 500,
            threads: 1,
        }
    }
}

/// Linear warmup, then the base rate held constant.
pub fn lr_at(step: usize, cfg: &TrainRunConfig) -> f64 {
    if cfg.warmup_steps > 0 && step < cfg.warmup_steps {
        cfg.lr * step as f64 / cfg.warmup_steps as f64
    } else {
        cfg.lr
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub loss_total: f64,
    pub loss_rec: f64,
    pub loss_commit_mu: f64,
    pub loss_commit_alpha: f64,
}

pub struct TrainOutcome {
    pub records: Vec<StepRecord>,
    /// EMA shadow of the final parameters; evaluation weights.
    pub ema: Ema<f32>,
}

/// Deterministic epoch-shuffled sample order.
struct BatchSchedule {
    order: Vec<usize>,
    cursor: usize,
    epoch: u64,
    seed: u64,
}

impl BatchSchedule {
    fn new(n: usize, seed: u64) -> Self {
        let mut s = BatchSchedule { order: (0..n).collect(), cursor: 0, epoch: 0, seed };
        s.reshuffle();
        s
    }

    fn reshuffle(&mut self) {
        let mut rng = Rng::for_sample(self.seed ^ 0x5eed_5eed_5eed_5eed, self.epoch);
        rng.shuffle(&mut self.order);
    }

    fn next_batch(&mut self, batch: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(batch);
        while out.len() < batch {
            if self.cursor == self.order.len() {
                self.cursor = 0;
                self.epoch += 1;
                self.reshuffle();
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }
}

/// Train in place on normalized samples. When `out_dir` is given, writes
/// `train_log.jsonl`, periodic `ckpt_######` checkpoints, and `final` plus
/// `final_ema` at the end.
pub fn train(
    model: &mut Model<f32>,
    samples: &[Vec<f32>],
    cfg: &TrainRunConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    if samples.is_empty() {
        return Err(CoreError::EmptySplit);
    }
    if cfg.batch_size == 0 {
        return Err(CoreError::Config("batch_size must be >= 1".into()));
    }
    let mut hyper = OptimizerHyper::default_for(cfg.optimizer);
    hyper.lr = cfg.lr;
    let mut opt = Optimizer::new(cfg.optimizer, hyper, &model.params);
    let mut ema = Ema::new(cfg.ema_decay, &model.params);
    let mut schedule = BatchSchedule::new(samples.len(), cfg.seed);
    let mut records = Vec::with_capacity(cfg.steps);

    let mut log_file = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| CoreError::io(dir.display().to_string(), e))?;
            let path = dir.join("train_log.jsonl");
            Some(std::io::BufWriter::new(
                std::fs::File::create(&path)
                    .map_err(|e| CoreError::io(path.display().to_string(), e))?,
            ))
        }
        None => None,
    };

    let pool = (cfg.threads > 1)
        .then(|| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.threads)
                .build()
                .map_err(|e| CoreError::Config(format!("thread pool: {e}")))
        })
        .transpose()?;

    for step in 1..=cfg.steps {
        let lr = lr_at(step, cfg);
        let batch = schedule.next_batch(cfg.batch_size);

        let results: Vec<_> = match &pool {
            Some(pool) => pool.install(|| {
                batch
                    .par_iter()
                    .map(|&i| model.forward_train(&samples[i], false))
                    .collect::<Result<Vec<_>>>()
            })?,
            None => batch
                .iter()
                .map(|&i| model.forward_train(&samples[i], false))
                .collect::<Result<Vec<_>>>()?,
        };

        // fixed-order reduction over the batch
        let scale = 1.0f32 / cfg.batch_size as f32;
        let mut grads: Vec<Vec<f32>> = results[0].grads.clone();
        for r in &results[1..] {
            for (acc, g) in grads.iter_mut().zip(r.grads.iter()) {
                for (a, &v) in acc.iter_mut().zip(g.iter()) {
                    *a += v;
                }
            }
        }
        for g in &mut grads {
            for v in g.iter_mut() {
                *v *= scale;
            }
        }

        let mean = |f: fn(&crate::model::TrainStep<f32>) -> f64| {
            results.iter().map(f).sum::<f64>() / results.len() as f64
        };
        let record = StepRecord {
            step,
            lr,
            loss_total: mean(|r| r.loss_total),
            loss_rec: mean(|r| r.loss_rec),
            loss_commit_mu: mean(|r| r.loss_commit_mu),
            loss_commit_alpha: mean(|r| r.loss_commit_alpha),
        };
        if !record.loss_total.is_finite() {
            return Err(CoreError::NanLoss { step });
        }
        if let Some(f) = log_file.as_mut() {
            use std::io::Write;
            let line = serde_json::to_string(&record)
                .map_err(|e| CoreError::Config(format!("log serialization: {e}")))?;
            writeln!(f, "{line}").map_err(|e| CoreError::io("train_log.jsonl", e))?;
        }
        records.push(record);

        opt.step(&mut model.params, &grads, lr)?;
        ema.update(&model.params);

        if let Some(dir) = out_dir {
            if cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && step != cfg.steps {
                save_checkpoint(&dir.join(format!("ckpt_{step:06}")), model, step, false, cfg.seed)?;
            }
        }
    }

    if let Some(f) = log_file.as_mut() {
        use std::io::Write;
        f.flush().map_err(|e| CoreError::io("train_log.jsonl", e))?;
    }
    if let Some(dir) = out_dir {
        save_checkpoint(&dir.join("final"), model, cfg.steps, false, cfg.seed)?;
        let mut ema_model = Model::<f32> {
            config: model.config.clone(),
            params: model.params.clone(),
            plan: model.plan.clone(),
        };
        ema.write_to(&mut ema_model.params);
        save_checkpoint(&dir.join("final_ema"), &ema_model, cfg.steps, true, cfg.seed)?;
    }

    Ok(TrainOutcome { records, ema })
}
