use ndarray::Array2;
use rand::Rng;

use super::{rng_for, EndmemberMatrix, Provenance};
use crate::error::{Error, Result};
use crate::metrics::spectral_angle;

/// Minimum pairwise spectral angle (radians) between generated endmembers.
pub const MIN_ENDMEMBER_ANGLE: f64 = 0.15;
const MAX_ATTEMPTS: usize = 100;

/// Draws `p` smooth synthetic reflectance spectra over `l` bands.
///
/// Each spectrum is a positive convex baseline plus 3–6 Gaussian absorption
/// or reflection bumps, rescaled to peak at 0.9. Whole matrices are redrawn
/// until every pair of columns is at least [`MIN_ENDMEMBER_ANGLE`] apart.
pub fn synth_endmembers(l: usize, p: usize, seed: u64) -> Result<EndmemberMatrix> {
    if p == 0 || l <= p {
        return Err(Error::invalid(format!(
            "need bands > endmembers >= 1, got L={l}, P={p}"
        )));
    }
    let mut rng = rng_for(seed, 0);
    for _ in 0..MAX_ATTEMPTS {
        let mut m = Array2::zeros((l, p));
        for k in 0..p {
            let spectrum = smooth_spectrum(l, &mut rng);
            m.column_mut(k).assign(&ndarray::Array1::from(spectrum));
        }
        if min_pairwise_angle(&m) >= MIN_ENDMEMBER_ANGLE {
            return EndmemberMatrix::new(m, Provenance::Generated);
        }
    }
    Err(Error::AngleUnreachable { attempts: MAX_ATTEMPTS })
}

fn smooth_spectrum(l: usize, rng: &mut impl Rng) -> Vec<f64> {
    let offset = rng.random_range(0.05..0.3);
    let curvature = rng.random_range(0.0..0.5);
    let vertex = rng.random_range(0.0..1.0);
    let bumps: Vec<(f64, f64, f64)> = (0..rng.random_range(3..=6))
        .map(|_| {
            (
                rng.random_range(0.1..1.0),
                rng.random_range(0.0..1.0),
                rng.random_range(0.02..0.12),
            )
        })
        .collect();
    let raw: Vec<f64> = (0..l)
        .map(|i| {
            let x = i as f64 / (l - 1) as f64;
            let base = offset + curvature * (x - vertex).powi(2);
            let peaks: f64 = bumps
                .iter()
                .map(|&(amp, center, width)| amp * (-(x - center).powi(2) / (2.0 * width * width)).exp())
                .sum();
            base + peaks
        })
        .collect();
    let peak = raw.iter().cloned().fold(f64::MIN, f64::max);
    raw.into_iter().map(|v| 0.9 * v / peak).collect()
}

/// Smallest spectral angle between any two columns (∞ for a single column).
pub fn min_pairwise_angle(m: &Array2<f64>) -> f64 {
    let p = m.ncols();
    let mut best = f64::INFINITY;
    for i in 0..p {
        for j in i + 1..p {
            let a = spectral_angle(m.column(i), m.column(j)).unwrap_or(0.0);
            best = best.min(a);
        }
    }
    best
}
