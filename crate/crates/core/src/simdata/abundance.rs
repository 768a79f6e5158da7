use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::{rng_for, AbundanceMatrix};
use crate::error::{Error, Result};

/// `n` i.i.d. rows from a symmetric Dirichlet(concentration · 1_P).
///
/// Uses the normalized-Gamma construction.
pub fn sample_dirichlet_abundances(n: usize, p: usize, concentration: f64, seed: u64) -> Result<AbundanceMatrix> {
    if n == 0 || p == 0 {
        return Err(Error::invalid("dirichlet sampling needs N >= 1 and P >= 1"));
    }
    let gamma = Gamma::new(concentration, 1.0)
        .map_err(|e| Error::invalid(format!("dirichlet concentration {concentration}: {e}")))?;
    let mut rng = rng_for(seed, 0);
    let mut a = Array2::zeros((n, p));
    for mut row in a.rows_mut() {
        loop {
            for v in row.iter_mut() {
                *v = gamma.sample(&mut rng);
            }
            let total: f64 = row.sum();
            // tiny concentrations can underflow every draw to zero
            if total > 0.0 && total.is_finite() {
                row.mapv_inplace(|v| v / total);
                break;
            }
        }
    }
    AbundanceMatrix::new(a, None)
}

/// Spatially correlated abundance maps on a `rows × cols` grid.
///
/// Each of the `p` maps is a zero-mean Gaussian field with squared-exponential
/// correlation `exp(-d² / (2 corr_len²))`, built by convolving white noise
/// with a Gaussian kernel of standard deviation `corr_len / √2` truncated at
/// three deviations. The fields are mapped to the simplex by taking absolute
/// values and normalizing each pixel.
pub fn sample_grf_abundances(rows: usize, cols: usize, p: usize, corr_len: f64, seed: u64) -> Result<AbundanceMatrix> {
    if rows * cols == 0 || p == 0 {
        return Err(Error::invalid("random field needs a non-empty grid and P >= 1"));
    }
    if !(corr_len > 0.0) || !corr_len.is_finite() {
        return Err(Error::invalid(format!(
            "correlation length must be positive, got {corr_len}"
        )));
    }
    let sigma = corr_len / std::f64::consts::SQRT_2;
    let radius = (3.0 * sigma).ceil() as usize;
    let kernel: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();

    let mut rng = rng_for(seed, 0);
    let mut a = Array2::zeros((rows * cols, p));
    for k in 0..p {
        let field = gaussian_field(rows, cols, &kernel, radius, &mut rng);
        a.column_mut(k).assign(&field.mapv(f64::abs));
    }
    for mut row in a.rows_mut() {
        let total: f64 = row.sum();
        if total > 0.0 {
            row.mapv_inplace(|v| v / total);
        } else {
            row.fill(1.0 / p as f64);
        }
    }
    AbundanceMatrix::new(a, Some((rows, cols)))
}

/// Separable convolution of padded white noise; returns the field row-major.
fn gaussian_field(rows: usize, cols: usize, kernel: &[f64], radius: usize, rng: &mut impl Rng) -> Array1<f64> {
    let (pr, pc) = (rows + 2 * radius, cols + 2 * radius);
    let noise: Vec<f64> = (0..pr * pc).map(|_| StandardNormal.sample(rng)).collect();

    // horizontal pass: pr × cols
    let mut horiz = vec![0.0; pr * cols];
    for r in 0..pr {
        for c in 0..cols {
            horiz[r * cols + c] = kernel.iter().enumerate().map(|(t, w)| w * noise[r * pc + c + t]).sum();
        }
    }
    // vertical pass: rows × cols
    let mut out = Array1::zeros(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            out[r * cols + c] = kernel
                .iter()
                .enumerate()
                .map(|(t, w)| w * horiz[(r + t) * cols + c])
                .sum();
        }
    }
    out
}
