use std::time::Instant;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;

use crate::aecmodel::{build_network, AecParams, Variant};
use crate::diffcore::{AdamConfig, AdamState};
use crate::error::{Error, Result};
use crate::simdata::{rng_for, EndmemberMatrix, HsiCube};

use super::{loss_and_grads, EpochRecord, LossTerms, TrainConfig, TrainHistory};

/// Builds a network around `m0` and trains it on `y`.
pub fn train(
    y: &HsiCube,
    m0: &EndmemberMatrix,
    variant: Variant,
    cfg: &TrainConfig,
) -> Result<(AecParams, TrainHistory)> {
    let params = build_network(m0, variant, cfg.seed)?;
    train_from(params, y, cfg)
}

/// Trains existing parameters with minibatch Adam.
///
/// Each epoch visits every pixel once in a fresh random order; the final
/// short batch is kept. Training stops once two consecutive epoch-mean
/// losses differ by less than `stop_threshold` relative to the earlier one
/// (never before the second epoch), or after `max_epochs`.
pub fn train_from(mut params: AecParams, y: &HsiCube, cfg: &TrainConfig) -> Result<(AecParams, TrainHistory)> {
    cfg.validate()?;
    let n = y.pixels();
    if n < cfg.batch_size {
        return Err(Error::invalid(format!(
            "cube has {n} pixels, fewer than one minibatch of {}",
            cfg.batch_size
        )));
    }
    if y.bands() != params.bands() {
        return Err(Error::Shape {
            what: "training cube",
            expected: (n, params.bands()),
            got: (n, y.bands()),
        });
    }

    let start = Instant::now();
    let mut adam = AdamState::new(params.trainables(), AdamConfig::default());
    let mut rng = rng_for(cfg.seed, 21);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = TrainHistory::default();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut acc = LossTerms::default();
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Array2<f64> = y.data().select(Axis(0), chunk);
            let step = loss_and_grads(batch, &params, cfg).and_then(|(terms, grads)| {
                adam.step(&mut params.trainables_mut(), &grads, cfg.learning_rate)?;
                Ok(terms)
            });
            match step {
                Ok(terms) => acc = acc + terms * chunk.len() as f64,
                Err(e) => return Err(diverged(epoch, e, history, start)),
            }
        }
        let terms = acc * (1.0 / n as f64);
        if !terms.total.is_finite() {
            return Err(diverged(epoch, Error::invalid("non-finite epoch loss"), history, start));
        }
        let previous = history.last().map(|r| r.terms.total);
        history.epochs.push(EpochRecord {
            epoch,
            terms,
            seconds: start.elapsed().as_secs_f64(),
        });
        if let Some(prev) = previous {
            if prev == 0.0 || ((terms.total - prev) / prev).abs() < cfg.stop_threshold {
                break;
            }
        }
    }
    history.wall_seconds = start.elapsed().as_secs_f64();
    Ok((params, history))
}

fn diverged(epoch: usize, cause: Error, mut history: TrainHistory, start: Instant) -> Error {
    history.wall_seconds = start.elapsed().as_secs_f64();
    Error::Diverged {
        epoch,
        reason: cause.to_string(),
        history: Box::new(history),
    }
}
