use crate::diffcore::{Tape, Var, LEAKY_SLOPE};
use crate::error::Result;

use super::params::AecParams;

/// Tape handles of one layer: weight and optional bias.
#[derive(Debug, Clone, Copy)]
pub struct LayerVars {
    pub weight: Var,
    pub bias: Option<Var>,
}

/// Tape leaves for every trainable, plus `M₀` as a constant.
#[derive(Debug, Clone)]
pub struct ParamVars {
    pub m: Var,
    pub m0: Var,
    pub q: Option<Var>,
    pub alpha_raw: Option<Var>,
    pub encoder: Vec<LayerVars>,
    pub decoder: Vec<LayerVars>,
}

impl ParamVars {
    /// Leaves in the same order as [`AecParams::trainables`].
    pub fn trainables(&self) -> Vec<Var> {
        let mut out = vec![self.m];
        out.extend(self.q);
        out.extend(self.alpha_raw);
        for l in self.encoder.iter().chain(&self.decoder) {
            out.push(l.weight);
            out.extend(l.bias);
        }
        out
    }
}

impl AecParams {
    /// Records every trainable as a leaf on `tape`.
    pub fn register(&self, tape: &mut Tape) -> ParamVars {
        let m = tape.leaf(self.m().clone());
        let m0 = tape.constant(self.m0().clone());
        let q = self.q().map(|t| tape.leaf(t.clone()));
        let alpha_raw = self.alpha_raw().map(|t| tape.leaf(t.clone()));
        let mut layers = |mlp: &super::Mlp| -> Vec<LayerVars> {
            mlp.layers()
                .iter()
                .map(|l| LayerVars {
                    weight: tape.leaf(l.weight().clone()),
                    bias: l.bias().map(|b| tape.leaf(b.clone())),
                })
                .collect()
        };
        let encoder = layers(self.encoder());
        let decoder = layers(self.decoder());
        ParamVars {
            m,
            m0,
            q,
            alpha_raw,
            encoder,
            decoder,
        }
    }

    /// Encoder on the tape: `y` is `B × L`, result `B × P` on the simplex.
    pub fn encode_graph(&self, tape: &mut Tape, vars: &ParamVars, y: Var) -> Result<Var> {
        let mut z = mlp_graph(tape, &vars.encoder, y, 0)?;
        if let (Some(q), Some(alpha)) = (vars.q, vars.alpha_raw) {
            let qt = tape.transpose(q)?;
            let lin = tape.matmul(y, qt)?;
            let gains = tape.abs(alpha)?;
            let scaled = tape.mul(lin, gains)?;
            z = tape.add(scaled, z)?;
        }
        let mag = tape.abs(z)?;
        Ok(tape.row_normalize(mag)?)
    }

    /// `ω_D(a, vec M)` on the tape; `a` is `B × P`, result `B × L`.
    pub fn omega_d_graph(&self, tape: &mut Tape, vars: &ParamVars, a: Var) -> Result<Var> {
        let (l, p) = (self.bands(), self.endmembers());
        let first = vars.decoder[0];
        let mt = tape.transpose(vars.m)?;
        let vec_m = tape.reshape(mt, 1, l * p)?;
        let w_a = tape.slice_rows(first.weight, 0, p)?;
        let w_m = tape.slice_rows(first.weight, p, p + l * p)?;
        let mut shared = tape.matmul(vec_m, w_m)?;
        if let Some(b) = first.bias {
            shared = tape.add(shared, b)?;
        }
        let za = tape.matmul(a, w_a)?;
        let h = tape.add(za, shared)?;
        mlp_graph(tape, &vars.decoder, h, 1)
    }

    /// Decoder on the tape; `a` is `B × P`, result `B × L`, nonnegative.
    pub fn decode_graph(&self, tape: &mut Tape, vars: &ParamVars, a: Var) -> Result<Var> {
        let mut y = self.omega_d_graph(tape, vars, a)?;
        if self.variant().linear_decoder() {
            let mt = tape.transpose(vars.m)?;
            let lin = tape.matmul(a, mt)?;
            y = tape.add(lin, y)?;
        }
        Ok(tape.relu(y)?)
    }
}

/// Applies layers `start..` to `h`. When `start > 0` the first layer has
/// already been applied by the caller and only its activation is pending.
fn mlp_graph(tape: &mut Tape, layers: &[LayerVars], mut h: Var, start: usize) -> Result<Var> {
    let last = layers.len() - 1;
    if start > 0 {
        h = tape.leaky_relu(h, LEAKY_SLOPE)?;
    }
    for (i, layer) in layers.iter().enumerate().skip(start) {
        h = tape.matmul(h, layer.weight)?;
        if let Some(b) = layer.bias {
            h = tape.add(h, b)?;
        }
        if i < last {
            h = tape.leaky_relu(h, LEAKY_SLOPE)?;
        }
    }
    Ok(h)
}
