use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;

use super::linalg::solve_spd;
use crate::error::{Error, Result};
use crate::simdata::{AbundanceMatrix, HsiCube};

/// Weight of the sum-to-one row relative to the largest endmember entry.
pub const SUM_ROW_WEIGHT: f64 = 1e3;

/// Fully constrained least squares for one endmember matrix.
///
/// Each pixel is solved as a nonnegative least-squares problem (Lawson–Hanson
/// active set) on the system augmented with a heavily weighted sum-to-one
/// row, then renormalized to sum exactly to one.
#[derive(Debug, Clone)]
pub struct FclsSolver {
    p: usize,
    /// `EᵀE` for the augmented matrix `E = [M; δ1ᵀ]`, row-major `P × P`.
    gram: Vec<f64>,
    /// `M` transposed, `P × L`.
    mt: Array2<f64>,
    delta: f64,
}

impl FclsSolver {
    pub fn new(m: ArrayView2<'_, f64>) -> Result<Self> {
        let p = m.ncols();
        if p == 0 || m.nrows() == 0 {
            return Err(Error::invalid("FCLS needs a non-empty endmember matrix"));
        }
        let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if scale == 0.0 {
            return Err(Error::RankDeficient {
                condition: f64::INFINITY,
            });
        }
        let condition = super::gram_condition(m);
        if !(condition < super::MAX_CONDITION) {
            return Err(Error::RankDeficient { condition });
        }
        let delta = SUM_ROW_WEIGHT * scale;
        let mtm = m.t().dot(&m);
        let gram = (0..p * p).map(|ij| mtm[[ij / p, ij % p]] + delta * delta).collect();
        Ok(Self {
            p,
            gram,
            mt: m.t().to_owned(),
            delta,
        })
    }

    pub fn endmembers(&self) -> usize {
        self.p
    }

    /// Abundances of a single pixel; `pixel` only labels errors.
    pub fn solve(&self, y: ArrayView1<'_, f64>, pixel: usize) -> Result<Array1<f64>> {
        if y.len() != self.mt.ncols() {
            return Err(Error::Shape {
                what: "fcls pixel",
                expected: (self.mt.ncols(), 1),
                got: (y.len(), 1),
            });
        }
        let d2 = self.delta * self.delta;
        let rhs: Vec<f64> = self.mt.dot(&y).iter().map(|v| v + d2).collect();
        let mut x = nnls_gram(&self.gram, &rhs, self.p, pixel)?;
        let total: f64 = x.iter().sum();
        if total > 0.0 {
            x.iter_mut().for_each(|v| *v /= total);
        } else {
            x.fill(1.0 / self.p as f64);
        }
        Ok(Array1::from(x))
    }
}

/// FCLS abundances for every pixel of `y`, solved in parallel.
pub fn fcls(y: &HsiCube, m: ArrayView2<'_, f64>) -> Result<AbundanceMatrix> {
    if y.bands() != m.nrows() {
        return Err(Error::Shape {
            what: "fcls",
            expected: (m.nrows(), m.ncols()),
            got: (y.bands(), m.ncols()),
        });
    }
    let solver = FclsSolver::new(m)?;
    let rows: Vec<Array1<f64>> = (0..y.pixels())
        .into_par_iter()
        .map(|n| solver.solve(y.pixel(n), n))
        .collect::<Result<_>>()?;
    let p = solver.endmembers();
    let mut a = Array2::zeros((y.pixels(), p));
    for (mut dst, src) in a.rows_mut().into_iter().zip(rows) {
        dst.assign(&src);
    }
    AbundanceMatrix::new(a, y.grid())
}

/// Lawson–Hanson NNLS in normal-equation form: minimizes
/// `½xᵀGx − hᵀx` over `x ≥ 0`. Gives up after `3P` subproblem solves.
fn nnls_gram(gram: &[f64], h: &[f64], p: usize, pixel: usize) -> Result<Vec<f64>> {
    let max_iter = 3 * p;
    let tol = 1e-12 * h.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let mut x = vec![0.0; p];
    let mut passive = vec![false; p];
    let mut iterations = 0;

    let gradient = |x: &[f64]| -> Vec<f64> {
        (0..p)
            .map(|i| h[i] - (0..p).map(|j| gram[i * p + j] * x[j]).sum::<f64>())
            .collect()
    };

    loop {
        let w = gradient(&x);
        let candidate = (0..p).filter(|&j| !passive[j]).max_by(|&a, &b| w[a].total_cmp(&w[b]));
        let Some(j) = candidate.filter(|&j| w[j] > tol) else {
            break;
        };
        passive[j] = true;

        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(Error::NotConverged {
                    pixel,
                    iterations: max_iter,
                });
            }
            let idx: Vec<usize> = (0..p).filter(|&i| passive[i]).collect();
            let k = idx.len();
            let sub: Vec<f64> = idx
                .iter()
                .flat_map(|&i| idx.iter().map(move |&j| gram[i * p + j]))
                .collect();
            let rhs: Vec<f64> = idx.iter().map(|&i| h[i]).collect();
            let zp = solve_spd(&sub, k, &rhs).ok_or(Error::RankDeficient {
                condition: f64::INFINITY,
            })?;
            let mut z = vec![0.0; p];
            for (&i, &v) in idx.iter().zip(&zp) {
                z[i] = v;
            }
            if idx.iter().all(|&i| z[i] > 0.0) {
                x = z;
                break;
            }
            // step back toward x until the first passive variable hits zero
            let alpha = idx
                .iter()
                .filter(|&&i| z[i] <= 0.0)
                .map(|&i| x[i] / (x[i] - z[i]))
                .fold(f64::INFINITY, f64::min);
            for i in 0..p {
                x[i] += alpha * (z[i] - x[i]);
            }
            for &i in &idx {
                if x[i] <= 1e-15 {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
        }
    }
    Ok(x)
}
