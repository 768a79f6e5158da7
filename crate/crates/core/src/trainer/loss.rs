use std::ops::{Add, Mul};

use ndarray::{Array2, ArrayView2};

use crate::aecmodel::{AecParams, ParamVars};
use crate::diffcore::{DiffError, Tape, Tensor, Var};
use crate::error::Result;

use super::TrainConfig;

/// Objective value split into its terms.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossTerms {
    /// Mean squared reconstruction error per pixel.
    pub data: f64,
    /// Weight decay on both MLPs.
    pub rw: f64,
    /// Endmember angle term.
    pub rm: f64,
    /// Pseudoinverse penalty `λ_Q ‖MᵀMQ − Mᵀ‖²`.
    pub lq: f64,
    pub total: f64,
}

impl Add for LossTerms {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            data: self.data + o.data,
            rw: self.rw + o.rw,
            rm: self.rm + o.rm,
            lq: self.lq + o.lq,
            total: self.total + o.total,
        }
    }
}

impl Mul<f64> for LossTerms {
    type Output = Self;

    fn mul(self, c: f64) -> Self {
        Self {
            data: self.data * c,
            rw: self.rw * c,
            rm: self.rm * c,
            lq: self.lq * c,
            total: self.total * c,
        }
    }
}

struct TermVars {
    data: Var,
    rw: Var,
    rm: Var,
    lq: Option<Var>,
    total: Var,
}

fn record_loss(
    tape: &mut Tape,
    params: &AecParams,
    vars: &ParamVars,
    batch: Var,
    cfg: &TrainConfig,
) -> Result<TermVars> {
    let (b, l) = tape.shape(batch);
    let p = params.endmembers();

    let a = params.encode_graph(tape, vars, batch)?;
    let y_hat = params.decode_graph(tape, vars, a)?;
    let diff = tape.sub(batch, y_hat)?;
    let sq = tape.frobenius_sq(diff)?;
    let data = tape.scale(sq, 1.0 / b as f64)?;

    let mut norm = None;
    for layer in vars.encoder.iter().chain(&vars.decoder) {
        for v in std::iter::once(layer.weight).chain(layer.bias) {
            let f = tape.frobenius_sq(v)?;
            norm = Some(match norm {
                Some(acc) => tape.add(acc, f)?,
                None => f,
            });
        }
    }
    let rw = tape.scale(norm.expect("MLPs have layers"), cfg.lambda_w)?;

    // cosines between current and initial endmembers, column by column
    let ones = tape.constant(Tensor::filled(1, l, 1.0));
    let cross = tape.mul(vars.m, vars.m0)?;
    let dots = tape.matmul(ones, cross)?;
    let msq = tape.mul(vars.m, vars.m)?;
    let sq_norms = tape.matmul(ones, msq)?;
    let inv_norms = tape.pow(sq_norms, -0.5)?;
    let m0_inv: Vec<f64> = params
        .m0()
        .values()
        .columns()
        .into_iter()
        .map(|c| 1.0 / c.dot(&c).sqrt())
        .collect();
    let m0_inv = tape.constant(Tensor::row(&m0_inv)?);
    let cos = tape.mul(dots, inv_norms)?;
    let cos = tape.mul(cos, m0_inv)?;
    let cos_sum = tape.sum(cos)?;
    let rm = if cfg.literal_cosine {
        tape.scale(cos_sum, cfg.lambda_m)?
    } else {
        let neg = tape.scale(cos_sum, -cfg.lambda_m)?;
        let offset = tape.constant(Tensor::scalar(cfg.lambda_m * p as f64)?);
        tape.add(offset, neg)?
    };

    let lq = match vars.q {
        Some(q) => {
            let mt = tape.transpose(vars.m)?;
            let mtm = tape.matmul(mt, vars.m)?;
            let mtmq = tape.matmul(mtm, q)?;
            let r = tape.sub(mtmq, mt)?;
            let f = tape.frobenius_sq(r)?;
            Some(tape.scale(f, cfg.lambda_q)?)
        }
        None => None,
    };

    let mut total = tape.add(data, rw)?;
    total = tape.add(total, rm)?;
    if let Some(lq) = lq {
        total = tape.add(total, lq)?;
    }
    Ok(TermVars {
        data,
        rw,
        rm,
        lq,
        total,
    })
}

fn read_terms(tape: &Tape, t: &TermVars) -> LossTerms {
    LossTerms {
        data: tape.scalar(t.data),
        rw: tape.scalar(t.rw),
        rm: tape.scalar(t.rm),
        lq: t.lq.map_or(0.0, |v| tape.scalar(v)),
        total: tape.scalar(t.total),
    }
}

/// Objective on one batch of pixels (`B × L`).
pub fn loss(batch: ArrayView2<'_, f64>, params: &AecParams, cfg: &TrainConfig) -> Result<LossTerms> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let y = tape.constant(Tensor::new(batch.to_owned())?);
    let terms = record_loss(&mut tape, params, &vars, y, cfg)?;
    Ok(read_terms(&tape, &terms))
}

/// Objective and its gradient with respect to every trainable, in
/// [`AecParams::trainables`] order.
pub fn loss_and_grads(batch: Array2<f64>, params: &AecParams, cfg: &TrainConfig) -> Result<(LossTerms, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let y = tape.constant(Tensor::new(batch)?);
    let terms = record_loss(&mut tape, params, &vars, y, cfg)?;
    let values = read_terms(&tape, &terms);
    let mut grads = tape.backward_scalar(terms.total)?;
    let out = vars
        .trainables()
        .into_iter()
        .map(|v| Tensor::new(grads.take_array(v)).map_err(|_| DiffError::NonFinite { op: "backward" }))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok((values, out))
}
