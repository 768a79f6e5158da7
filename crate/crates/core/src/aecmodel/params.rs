use ndarray::{s, Array2, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;

use super::arch::{Architecture, Variant};
use crate::classic::pseudoinverse;
use crate::diffcore::{Tensor, LEAKY_SLOPE};
use crate::error::{Error, Result};
use crate::simdata::{rng_for, EndmemberMatrix};

/// Fully connected layer `x ↦ xW + b`; `weight` is `in × out`, `bias` `1 × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    weight: Tensor,
    bias: Option<Tensor>,
}

impl Dense {
    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    pub fn bias(&self) -> Option<&Tensor> {
        self.bias.as_ref()
    }

    pub fn weight_mut(&mut self) -> ArrayViewMut2<'_, f64> {
        self.weight.values_mut()
    }

    pub fn bias_mut(&mut self) -> Option<ArrayViewMut2<'_, f64>> {
        self.bias.as_mut().map(Tensor::values_mut)
    }

    fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut z = x.dot(self.weight.values());
        if let Some(b) = &self.bias {
            z += b.values();
        }
        z
    }
}

/// Leaky-ReLU MLP whose last layer is linear and bias-free.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

impl Mlp {
    fn init(widths: &[usize], rng: &mut impl Rng) -> Self {
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let (fan_in, fan_out) = (widths[i], widths[i + 1]);
                let bound = (6.0 / fan_in as f64).sqrt();
                let w = Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-bound..bound));
                Dense {
                    weight: Tensor::new(w).expect("finite init"),
                    bias: (i + 1 < n).then(|| Tensor::zeros(1, fan_out)),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Squared Frobenius norm of all weights and biases.
    pub fn norm_sq(&self) -> f64 {
        self.tensors().iter().map(|t| t.frobenius_sq()).sum()
    }

    pub fn zero(&mut self) {
        for layer in &mut self.layers {
            layer.weight.values_mut().fill(0.0);
            if let Some(b) = layer.bias.as_mut() {
                b.values_mut().fill(0.0);
            }
        }
    }

    /// Multiplies every weight and bias by `c`.
    pub fn scale(&mut self, c: f64) {
        for layer in &mut self.layers {
            layer.weight.values_mut().mapv_inplace(|v| v * c);
            if let Some(b) = layer.bias.as_mut() {
                b.values_mut().mapv_inplace(|v| v * c);
            }
        }
    }

    /// Row-wise forward pass over a batch.
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut h = x.to_owned();
        self.forward_from(0, &mut h);
        h
    }

    fn forward_from(&self, start: usize, h: &mut Array2<f64>) {
        let last = self.layers.len() - 1;
        if start > 0 {
            leaky(h);
        }
        for (i, layer) in self.layers.iter().enumerate().skip(start) {
            *h = layer.forward(h.view());
            if i < last {
                leaky(h);
            }
        }
    }

    fn tensors(&self) -> Vec<&Tensor> {
        self.layers
            .iter()
            .flat_map(|l| std::iter::once(&l.weight).chain(l.bias.as_ref()))
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| std::iter::once(&mut l.weight).chain(l.bias.as_mut()))
            .collect()
    }

    fn names(&self, prefix: &str) -> Vec<String> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            out.push(format!("{prefix}.{i}.w"));
            if l.bias.is_some() {
                out.push(format!("{prefix}.{i}.b"));
            }
        }
        out
    }
}

fn leaky(h: &mut Array2<f64>) {
    h.mapv_inplace(|x| if x >= 0.0 { x } else { LEAKY_SLOPE * x });
}

/// Normalized absolute value of each row; all-zero rows become uniform.
pub(crate) fn simplex_map(x: &mut Array2<f64>) {
    let p = x.ncols() as f64;
    for mut row in x.rows_mut() {
        row.mapv_inplace(f64::abs);
        let total = row.sum();
        if total == 0.0 {
            row.fill(1.0 / p);
        } else {
            row.mapv_inplace(|v| v / total);
        }
    }
}

/// All parameters of one autoencoder.
///
/// Trainables, in their fixed order: `M`, `Q` and `α_raw` (MAC-U only),
/// encoder layers, decoder layers (weight before bias within a layer). The
/// initial endmembers `M₀` are kept alongside and never trained.
#[derive(Debug, Clone, PartialEq)]
pub struct AecParams {
    variant: Variant,
    arch: Architecture,
    seed: u64,
    m: Tensor,
    m0: Tensor,
    q: Option<Tensor>,
    alpha_raw: Option<Tensor>,
    encoder: Mlp,
    decoder: Mlp,
}

/// Fresh network around the initial endmembers `m0`.
///
/// Weights are uniform in `±sqrt(6 / fan_in)`, biases zero, `α_raw = 1`,
/// `M = M₀` and `Q = M₀†`.
pub fn build_network(m0: &EndmemberMatrix, variant: Variant, seed: u64) -> Result<AecParams> {
    let arch = Architecture::new(m0.bands(), m0.count())?;
    let mut rng = rng_for(seed, 11);
    let encoder = Mlp::init(&arch.encoder, &mut rng);
    let decoder = Mlp::init(&arch.decoder, &mut rng);
    let m = Tensor::new(m0.data().clone())?;
    let (q, alpha_raw) = if variant.linear_encoder() {
        let q = Tensor::new(pseudoinverse(m0.view())?)?;
        (Some(q), Some(Tensor::filled(1, arch.endmembers, 1.0)))
    } else {
        (None, None)
    };
    Ok(AecParams {
        variant,
        arch,
        seed,
        m0: m.clone(),
        m,
        q,
        alpha_raw,
        encoder,
        decoder,
    })
}

impl AecParams {
    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn bands(&self) -> usize {
        self.arch.bands
    }

    pub fn endmembers(&self) -> usize {
        self.arch.endmembers
    }

    pub fn m(&self) -> &Tensor {
        &self.m
    }

    pub fn m0(&self) -> &Tensor {
        &self.m0
    }

    pub fn q(&self) -> Option<&Tensor> {
        self.q.as_ref()
    }

    pub fn alpha_raw(&self) -> Option<&Tensor> {
        self.alpha_raw.as_ref()
    }

    /// The effective nonnegative gains `|α_raw|`.
    pub fn alpha(&self) -> Option<Vec<f64>> {
        self.alpha_raw
            .as_ref()
            .map(|a| a.values().iter().map(|v| v.abs()).collect())
    }

    pub fn encoder(&self) -> &Mlp {
        &self.encoder
    }

    pub fn decoder(&self) -> &Mlp {
        &self.decoder
    }

    pub fn m_mut(&mut self) -> ArrayViewMut2<'_, f64> {
        self.m.values_mut()
    }

    pub fn q_mut(&mut self) -> Option<ArrayViewMut2<'_, f64>> {
        self.q.as_mut().map(Tensor::values_mut)
    }

    pub fn alpha_raw_mut(&mut self) -> Option<ArrayViewMut2<'_, f64>> {
        self.alpha_raw.as_mut().map(Tensor::values_mut)
    }

    pub fn encoder_mut(&mut self) -> &mut Mlp {
        &mut self.encoder
    }

    pub fn decoder_mut(&mut self) -> &mut Mlp {
        &mut self.decoder
    }

    /// Current endmembers as an estimate.
    pub fn endmember_estimate(&self) -> Result<EndmemberMatrix> {
        EndmemberMatrix::new(self.m.values().clone(), crate::simdata::Provenance::Estimated)
    }

    /// `‖W_E‖² + ‖W_D‖²`, biases included.
    pub fn mlp_norm_sq(&self) -> f64 {
        self.encoder.norm_sq() + self.decoder.norm_sq()
    }

    /// `‖MᵀMQ − Mᵀ‖_F / ‖Mᵀ‖_F`, or `None` without `Q`.
    pub fn pinv_residual(&self) -> Option<f64> {
        let q = self.q.as_ref()?;
        let m = self.m.values();
        let r = m.t().dot(m).dot(q.values()) - m.t();
        let num: f64 = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        Some(num / self.m.frobenius_sq().sqrt())
    }

    pub fn trainables(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.m];
        out.extend(self.q.as_ref());
        out.extend(self.alpha_raw.as_ref());
        out.extend(self.encoder.tensors());
        out.extend(self.decoder.tensors());
        out
    }

    pub(crate) fn trainables_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.m];
        out.extend(self.q.as_mut());
        out.extend(self.alpha_raw.as_mut());
        out.extend(self.encoder.tensors_mut());
        out.extend(self.decoder.tensors_mut());
        out
    }

    /// Names matching [`AecParams::trainables`] one to one.
    pub fn trainable_names(&self) -> Vec<String> {
        let mut out = vec!["m".to_string()];
        if self.q.is_some() {
            out.push("q".into());
        }
        if self.alpha_raw.is_some() {
            out.push("alpha_raw".into());
        }
        out.extend(self.encoder.names("enc"));
        out.extend(self.decoder.names("dec"));
        out
    }

    /// Overwrites every trainable with `values` (same order and shapes).
    pub fn set_trainables(&mut self, values: Vec<Tensor>) -> Result<()> {
        let mut slots = self.trainables_mut();
        if slots.len() != values.len() {
            return Err(Error::invalid(format!(
                "expected {} parameter tensors, got {}",
                slots.len(),
                values.len()
            )));
        }
        for (slot, v) in slots.iter().zip(&values) {
            if slot.shape() != v.shape() {
                return Err(Error::Shape {
                    what: "parameter",
                    expected: slot.shape(),
                    got: v.shape(),
                });
            }
        }
        for (slot, v) in slots.iter_mut().zip(values) {
            **slot = v;
        }
        Ok(())
    }

    pub(crate) fn set_m0(&mut self, m0: Tensor) -> Result<()> {
        if m0.shape() != self.m.shape() {
            return Err(Error::Shape {
                what: "m0",
                expected: self.m.shape(),
                got: m0.shape(),
            });
        }
        self.m0 = m0;
        Ok(())
    }

    /// Zeroes both MLPs, leaving only the linear branches.
    pub fn zero_nonlinear(&mut self) {
        self.encoder.zero();
        self.decoder.zero();
    }

    /// Pre-simplex encoder output for a batch of pixels (`B × L` → `B × P`).
    pub fn encode_pre(&self, y: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_cols("encode", y, self.bands())?;
        let mut z = self.encoder.forward(y);
        if let (Some(q), Some(alpha)) = (&self.q, self.alpha()) {
            let mut lin = y.dot(&q.values().t());
            for mut row in lin.rows_mut() {
                row.iter_mut().zip(&alpha).for_each(|(v, a)| *v *= a);
            }
            z += &lin;
        }
        Ok(z)
    }

    /// Abundances for a batch of pixels; every row lies on the simplex.
    pub fn encode(&self, y: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let mut z = self.encode_pre(y)?;
        simplex_map(&mut z);
        Ok(z)
    }

    /// Column-major vectorization of the current `M` as a `1 × LP` row.
    pub fn vec_m(&self) -> Array2<f64> {
        let m = self.m.values();
        Array2::from_shape_vec((1, m.len()), m.t().iter().copied().collect()).expect("length matches")
    }

    /// Nonlinear decoder term `ω_D(a, vec M)` for a batch (`B × P` → `B × L`).
    ///
    /// The first layer is applied in two pieces: the abundance rows of the
    /// weight act per pixel, while the vec(M) rows are shared by the whole
    /// batch and computed once.
    pub fn omega_d(&self, a: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_cols("decode", a, self.endmembers())?;
        let p = self.endmembers();
        let first = &self.decoder.layers[0];
        let w = first.weight.values();
        let mut shared = self.vec_m().dot(&w.slice(s![p.., ..]));
        if let Some(b) = &first.bias {
            shared += b.values();
        }
        let mut h = a.dot(&w.slice(s![..p, ..])) + &shared;
        self.decoder.forward_from(1, &mut h);
        Ok(h)
    }

    /// Reconstructed pixels for a batch of abundances; never negative.
    pub fn decode(&self, a: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let mut y = self.omega_d(a)?;
        if self.variant.linear_decoder() {
            y += &a.dot(&self.m.values().t());
        }
        y.mapv_inplace(|v| v.max(0.0));
        Ok(y)
    }

    /// Encoder followed by decoder.
    pub fn reconstruct(&self, y: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.decode(self.encode(y)?.view())
    }

    fn check_cols(&self, what: &'static str, x: ArrayView2<'_, f64>, cols: usize) -> Result<()> {
        if x.ncols() != cols {
            return Err(Error::Shape {
                what,
                expected: (x.nrows(), cols),
                got: x.dim(),
            });
        }
        Ok(())
    }
}

/// Balance between the two nonlinear contributions, per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearityReport {
    /// `‖ω_E(y_n)‖`.
    pub encoder_norms: Vec<f64>,
    /// `‖Q ω_D(a_n, M)‖`, with `Q = M†` for variants without a trained `Q`.
    pub decoder_norms: Vec<f64>,
    /// Mean of `|encoder_norm − decoder_norm|`.
    pub mean_gap: f64,
}

pub fn nonlinearity_report(y: ArrayView2<'_, f64>, params: &AecParams) -> Result<NonlinearityReport> {
    let q = match params.q() {
        Some(q) => q.values().clone(),
        None => pseudoinverse(params.m().view())?,
    };
    let a = params.encode(y)?;
    let we = params.encoder.forward(y);
    let wd = params.omega_d(a.view())?.dot(&q.t());
    let norms = |x: &Array2<f64>| -> Vec<f64> { x.axis_iter(Axis(0)).map(|r| r.dot(&r).sqrt()).collect() };
    let encoder_norms = norms(&we);
    let decoder_norms = norms(&wd);
    let mean_gap = encoder_norms
        .iter()
        .zip(&decoder_norms)
        .map(|(e, d)| (e - d).abs())
        .sum::<f64>()
        / encoder_norms.len().max(1) as f64;
    Ok(NonlinearityReport {
        encoder_norms,
        decoder_norms,
        mean_gap,
    })
}
