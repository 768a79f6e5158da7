use itertools::iproduct;
use rayon::prelude::*;

use crate::aecmodel::{AecParams, Variant};
use crate::error::{Error, Result};
use crate::metrics::{align_columns, rmse};
use crate::simdata::{AbundanceMatrix, EndmemberMatrix, HsiCube};

use super::{train, TrainConfig, TrainHistory};

/// Values tried for each hyper-parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub lambda_q: Vec<f64>,
    pub lambda_w: Vec<f64>,
    pub lambda_m: Vec<f64>,
    pub learning_rate: Vec<f64>,
}

impl Default for Grid {
    /// `λ ∈ {1e-6, 1e-2, 1}` for all three weights, `γ ∈ {1e-6, 1e-4}`.
    fn default() -> Self {
        let lambdas = vec![1e-6, 1e-2, 1.0];
        Self {
            lambda_q: lambdas.clone(),
            lambda_w: lambdas.clone(),
            lambda_m: lambdas,
            learning_rate: vec![1e-6, 1e-4],
        }
    }
}

impl Grid {
    /// `λ ∈ {1e-2, 1}`, `γ = 1e-4`.
    pub fn reduced() -> Self {
        let lambdas = vec![1e-2, 1.0];
        Self {
            lambda_q: lambdas.clone(),
            lambda_w: lambdas.clone(),
            lambda_m: lambdas,
            learning_rate: vec![1e-4],
        }
    }

    /// A grid holding only the values of `cfg`.
    pub fn single(cfg: &TrainConfig) -> Self {
        Self {
            lambda_q: vec![cfg.lambda_q],
            lambda_w: vec![cfg.lambda_w],
            lambda_m: vec![cfg.lambda_m],
            learning_rate: vec![cfg.learning_rate],
        }
    }

    /// One config per cell, in lexicographic order (λ_Q, λ_W, λ_M, γ);
    /// all other fields come from `base`.
    pub fn configs(&self, base: &TrainConfig) -> Vec<TrainConfig> {
        iproduct!(&self.lambda_q, &self.lambda_w, &self.lambda_m, &self.learning_rate)
            .map(|(&lambda_q, &lambda_w, &lambda_m, &learning_rate)| TrainConfig {
                lambda_q,
                lambda_w,
                lambda_m,
                learning_rate,
                ..base.clone()
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.lambda_q.len() * self.lambda_w.len() * self.lambda_m.len() * self.learning_rate.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Scores of one successfully trained cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellScores {
    /// Aligned abundance RMSE, when ground truth was supplied.
    pub rmse_a: Option<f64>,
    pub rmse_y: f64,
    pub epochs: usize,
    pub final_loss: f64,
    /// `‖MᵀMQ − Mᵀ‖_F / ‖Mᵀ‖_F` after training (MAC-U only).
    pub pinv_residual: Option<f64>,
    pub seconds: f64,
}

impl CellScores {
    fn selection_score(&self) -> f64 {
        self.rmse_a.unwrap_or(self.rmse_y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellOutcome {
    Trained(CellScores),
    Diverged { epoch: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub config: TrainConfig,
    pub outcome: CellOutcome,
}

impl CellResult {
    pub fn scores(&self) -> Option<&CellScores> {
        match &self.outcome {
            CellOutcome::Trained(s) => Some(s),
            CellOutcome::Diverged { .. } => None,
        }
    }
}

/// Outcome of a grid search: every cell plus the selected model.
#[derive(Debug, Clone)]
pub struct GridSearch {
    pub cells: Vec<CellResult>,
    /// Index into `cells` of the selected cell.
    pub best: usize,
    pub params: AecParams,
    pub history: TrainHistory,
}

impl GridSearch {
    pub fn best_config(&self) -> &TrainConfig {
        &self.cells[self.best].config
    }

    pub fn best_scores(&self) -> &CellScores {
        self.cells[self.best].scores().expect("selected cell trained")
    }
}

struct Candidate {
    score: f64,
    index: usize,
    params: AecParams,
    history: TrainHistory,
}

/// Trains one model per grid cell and keeps the best.
///
/// Cells run in parallel and share only the read-only cube. With `truth`
/// the winner has the lowest aligned abundance RMSE, otherwise the lowest
/// reconstruction RMSE; ties go to the earlier cell.
pub fn grid_search(
    y: &HsiCube,
    m0: &EndmemberMatrix,
    variant: Variant,
    grid: &Grid,
    base: &TrainConfig,
    truth: Option<&AbundanceMatrix>,
) -> Result<GridSearch> {
    if grid.is_empty() {
        return Err(Error::invalid("grid has no cells"));
    }
    let configs = grid.configs(base);
    // Without Q the λ_Q term vanishes, so cells differing only in λ_Q are
    // the same training run; each is trained once and its result shared.
    let key = |c: &TrainConfig| {
        let mut k = c.clone();
        if !variant.linear_encoder() {
            k.lambda_q = 0.0;
        }
        k
    };
    let mut source = Vec::with_capacity(configs.len());
    let mut unique: Vec<usize> = Vec::new();
    for (i, c) in configs.iter().enumerate() {
        match unique.iter().position(|&u| key(&configs[u]) == key(c)) {
            Some(pos) => source.push(pos),
            None => {
                source.push(unique.len());
                unique.push(i);
            }
        }
    }
    let runs: Vec<(CellResult, Option<Candidate>)> = unique
        .par_iter()
        .map(|&index| run_cell(y, m0, variant, configs[index].clone(), truth, index))
        .collect::<Result<_>>()?;

    let mut cells = Vec::with_capacity(configs.len());
    for (cfg, &src) in configs.into_iter().zip(&source) {
        cells.push(CellResult {
            config: cfg,
            outcome: runs[src].0.outcome.clone(),
        });
    }
    let mut best: Option<Candidate> = None;
    for (_, cand) in runs {
        if let Some(c) = cand {
            if best.as_ref().is_none_or(|b| c.score < b.score) {
                best = Some(c);
            }
        }
    }
    let best = best.ok_or(Error::AllCellsDiverged)?;
    Ok(GridSearch {
        cells,
        best: best.index,
        params: best.params,
        history: best.history,
    })
}

fn run_cell(
    y: &HsiCube,
    m0: &EndmemberMatrix,
    variant: Variant,
    cfg: TrainConfig,
    truth: Option<&AbundanceMatrix>,
    index: usize,
) -> Result<(CellResult, Option<Candidate>)> {
    match train(y, m0, variant, &cfg) {
        Ok((params, history)) => {
            let a = params.encode(y.view())?;
            let y_hat = params.decode(a.view())?;
            let rmse_y = rmse(y_hat.view(), y.view())?;
            let rmse_a = truth
                .map(|t| align_columns(a.view(), t.view()).map(|al| al.rmse))
                .transpose()?;
            let scores = CellScores {
                rmse_a,
                rmse_y,
                epochs: history.len(),
                final_loss: history.last().map_or(f64::NAN, |r| r.terms.total),
                pinv_residual: params.pinv_residual(),
                seconds: history.wall_seconds,
            };
            let score = scores.selection_score();
            let cand = score.is_finite().then_some(Candidate {
                score,
                index,
                params,
                history,
            });
            Ok((
                CellResult {
                    config: cfg,
                    outcome: CellOutcome::Trained(scores),
                },
                cand,
            ))
        }
        Err(Error::Diverged { epoch, reason, .. }) => Ok((
            CellResult {
                config: cfg,
                outcome: CellOutcome::Diverged { epoch, reason },
            },
            None,
        )),
        Err(e) => Err(e),
    }
}
