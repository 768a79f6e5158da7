use ndarray::{Array2, ArrayView2, Axis, Zip};
use rand_distr::{Distribution, Normal};

use super::{rng_for, HsiCube};
use crate::error::{Error, Result};

fn check_shapes(m: &ArrayView2<'_, f64>, a: &ArrayView2<'_, f64>) -> Result<()> {
    if m.ncols() != a.ncols() {
        return Err(Error::Shape {
            what: "mixing (endmembers vs abundances)",
            expected: (m.nrows(), m.ncols()),
            got: (a.nrows(), a.ncols()),
        });
    }
    Ok(())
}

/// Linear mixture: pixel `n` is `M a_n`. `m` is `L × P`, `a` is `N × P`.
pub fn lmm_mix(m: ArrayView2<'_, f64>, a: ArrayView2<'_, f64>, grid: Option<(usize, usize)>) -> Result<HsiCube> {
    check_shapes(&m, &a)?;
    HsiCube::new(a.dot(&m.t()), grid)
}

/// Bilinear mixture: `M a_n + Σ_{i<j} a_{n,i} a_{n,j} (m_i ⊙ m_j)`.
pub fn blmm_mix(m: ArrayView2<'_, f64>, a: ArrayView2<'_, f64>, grid: Option<(usize, usize)>) -> Result<HsiCube> {
    check_shapes(&m, &a)?;
    let p = m.ncols();
    let mut y = a.dot(&m.t());
    for i in 0..p {
        for j in i + 1..p {
            let cross = &m.column(i) * &m.column(j);
            let weight = &a.column(i) * &a.column(j);
            // y += weight ⊗ cross
            Zip::from(y.rows_mut()).and(&weight).for_each(|mut row, &w| {
                row.scaled_add(w, &cross);
            });
        }
    }
    HsiCube::new(y, grid)
}

/// Post-nonlinear mixture: `(M a_n)^ξ` elementwise.
pub fn pnmm_mix(
    m: ArrayView2<'_, f64>,
    a: ArrayView2<'_, f64>,
    xi: f64,
    grid: Option<(usize, usize)>,
) -> Result<HsiCube> {
    if !(xi > 0.0) || !xi.is_finite() {
        return Err(Error::invalid(format!("PNMM exponent must be positive, got {xi}")));
    }
    let linear = lmm_mix(m, a, grid)?;
    if xi == 1.0 {
        return Ok(linear);
    }
    if xi.fract() != 0.0 && linear.data().iter().any(|&v| v < 0.0) {
        return Err(Error::invalid(format!(
            "negative linear mixture cannot be raised to non-integer power {xi}"
        )));
    }
    HsiCube::new(linear.data().mapv(|v| v.powf(xi)), grid)
}

/// Adds white Gaussian noise at a global signal-to-noise ratio.
///
/// The variance is `‖Y‖_F² / (N L 10^(snr/10))`. `None` returns the cube
/// unchanged.
pub fn add_noise_snr(y: &HsiCube, snr_db: Option<f64>, seed: u64) -> Result<HsiCube> {
    let Some(snr) = snr_db else {
        return Ok(y.clone());
    };
    if !snr.is_finite() {
        return Err(Error::invalid(format!("SNR must be finite, got {snr}")));
    }
    let data = y.data();
    let power = data.iter().map(|v| v * v).sum::<f64>() / data.len() as f64;
    let sigma = (power / 10f64.powf(snr / 10.0)).sqrt();
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid(format!("noise level: {e}")))?;
    let mut rng = rng_for(seed, 0);
    let noisy = data.mapv(|v| v + normal.sample(&mut rng));
    HsiCube::new(noisy, y.grid())
}

/// Empirical SNR in dB of `noisy` relative to `clean`.
pub fn empirical_snr_db(clean: &HsiCube, noisy: &HsiCube) -> f64 {
    let signal: f64 = clean.data().iter().map(|v| v * v).sum();
    let noise: f64 = (noisy.data() - clean.data()).iter().map(|v| v * v).sum();
    10.0 * (signal / noise).log10()
}

/// Naive reference for tests and diagnostics: pixel-wise sum over endmembers.
#[doc(hidden)]
pub fn lmm_mix_naive(m: &Array2<f64>, a: &Array2<f64>) -> Array2<f64> {
    let (l, p) = m.dim();
    let n = a.len_of(Axis(0));
    let mut y = Array2::zeros((n, l));
    for i in 0..n {
        for b in 0..l {
            let mut acc = 0.0;
            for k in 0..p {
                acc += m[[b, k]] * a[[i, k]];
            }
            y[[i, b]] = acc;
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn lmm_identity() {
        let y = lmm_mix(Array2::eye(2).view(), array![[0.3, 0.7]].view(), None).unwrap();
        assert_eq!(y.data(), &array![[0.3, 0.7]]);
    }

    #[test]
    fn lmm_vertex_returns_endmember() {
        let m = array![[0.1, 0.4], [0.2, 0.5], [0.3, 0.6]];
        let y = lmm_mix(m.view(), array![[1.0, 0.0]].view(), None).unwrap();
        assert_eq!(y.pixel(0).to_vec(), vec![0.1, 0.2, 0.3]);
    }

    #[test]
    fn blmm_hand_example() {
        let m = array![[1.0, 1.0], [1.0, 0.0]];
        let y = blmm_mix(m.view(), array![[0.5, 0.5]].view(), None).unwrap();
        assert_eq!(y.pixel(0).to_vec(), vec![1.25, 0.5]);
    }

    #[test]
    fn blmm_single_endmember_is_linear() {
        let m = array![[0.2], [0.7], [0.4]];
        let a = array![[1.0], [1.0]];
        assert_eq!(
            blmm_mix(m.view(), a.view(), None).unwrap(),
            lmm_mix(m.view(), a.view(), None).unwrap()
        );
    }

    #[test]
    fn pnmm_scalar_value() {
        let m = array![[0.25], [0.5]];
        let y = pnmm_mix(m.view(), array![[1.0]].view(), 0.7, None).unwrap();
        let expected = (0.7 * 0.25f64.ln()).exp();
        assert!((y.data()[[0, 0]] - expected).abs() < 1e-15);
        assert!((y.data()[[0, 0]] - 0.379).abs() < 1e-3);
    }

    #[test]
    fn pnmm_negative_base_rejected() {
        let m = array![[-0.25], [0.5]];
        assert!(pnmm_mix(m.view(), array![[1.0]].view(), 0.7, None).is_err());
        assert!(pnmm_mix(m.view(), array![[1.0]].view(), 2.0, None).is_ok());
    }

    #[test]
    fn shape_mismatch() {
        assert!(lmm_mix(Array2::zeros((4, 3)).view(), Array2::zeros((2, 2)).view(), None).is_err());
    }

    #[test]
    fn no_noise_is_exact() {
        let y = HsiCube::new(array![[0.1, 0.2], [0.3, 0.4]], None).unwrap();
        assert_eq!(add_noise_snr(&y, None, 3).unwrap(), y);
    }
}
