//! Abundance and reconstruction error, spectral angles, and permutation
//! alignment of estimated abundance columns.

use std::fmt::Write as _;

use itertools::Itertools;
use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Largest endmember count accepted by [`align_columns`].
pub const MAX_ALIGN_ENDMEMBERS: usize = 8;

/// `sqrt(‖x − x_ref‖_F² / N_X)` over all elements.
pub fn rmse(x: ArrayView2<'_, f64>, x_ref: ArrayView2<'_, f64>) -> Result<f64> {
    if x.dim() != x_ref.dim() {
        return Err(Error::Shape {
            what: "rmse",
            expected: x_ref.dim(),
            got: x.dim(),
        });
    }
    if x.is_empty() {
        return Err(Error::invalid("rmse of empty arrays"));
    }
    let sq: f64 = x.iter().zip(x_ref.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sq / x.len() as f64).sqrt())
}

/// Angle in radians between two spectra.
pub fn spectral_angle(m: ArrayView1<'_, f64>, m_ref: ArrayView1<'_, f64>) -> Result<f64> {
    if m.len() != m_ref.len() {
        return Err(Error::Shape {
            what: "spectral angle",
            expected: (m_ref.len(), 1),
            got: (m.len(), 1),
        });
    }
    let nm = m.dot(&m).sqrt();
    let nr = m_ref.dot(&m_ref).sqrt();
    if nm == 0.0 || nr == 0.0 {
        return Err(Error::invalid("spectral angle of a zero vector"));
    }
    // 2·atan2(|u − v|, |u + v|) stays accurate for nearly parallel spectra
    let (mut diff, mut sum) = (0.0, 0.0);
    for (a, b) in m.iter().zip(m_ref.iter()) {
        let (u, v) = (a / nm, b / nr);
        diff += (u - v) * (u - v);
        sum += (u + v) * (u + v);
    }
    Ok(2.0 * diff.sqrt().atan2(sum.sqrt()))
}

/// Result of [`align_columns`]. Column `k` of `aligned` is column
/// `permutation[k]` of the estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub permutation: Vec<usize>,
    pub aligned: Array2<f64>,
    pub rmse: f64,
}

/// Finds the column permutation of `est` closest (in RMSE) to `truth` by
/// exhaustive search. Ties keep the lexicographically first permutation,
/// which is the identity when it is optimal.
pub fn align_columns(est: ArrayView2<'_, f64>, truth: ArrayView2<'_, f64>) -> Result<Alignment> {
    if est.dim() != truth.dim() {
        return Err(Error::Shape {
            what: "align_columns",
            expected: truth.dim(),
            got: est.dim(),
        });
    }
    let p = est.ncols();
    if p > MAX_ALIGN_ENDMEMBERS {
        return Err(Error::invalid(format!(
            "exhaustive alignment supports at most {MAX_ALIGN_ENDMEMBERS} endmembers, got {p}"
        )));
    }
    // cost[j][k]: squared error of placing estimated column j at truth column k
    let cost: Vec<Vec<f64>> = (0..p)
        .map(|j| {
            (0..p)
                .map(|k| {
                    est.column(j)
                        .iter()
                        .zip(truth.column(k).iter())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum()
                })
                .collect()
        })
        .collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for perm in (0..p).permutations(p) {
        let total: f64 = perm.iter().enumerate().map(|(k, &j)| cost[j][k]).sum();
        if best.as_ref().is_none_or(|(b, _)| total < *b) {
            best = Some((total, perm));
        }
    }
    let (_, permutation) = best.expect("at least one permutation");
    let aligned = permute_columns(est, &permutation);
    let rmse = rmse(aligned.view(), truth)?;
    Ok(Alignment {
        permutation,
        aligned,
        rmse,
    })
}

/// Column `k` of the result is column `perm[k]` of `x`.
pub fn permute_columns(x: ArrayView2<'_, f64>, perm: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((x.nrows(), perm.len()));
    for (k, &j) in perm.iter().enumerate() {
        out.column_mut(k).assign(&x.column(j));
    }
    out
}

/// Evaluation of one estimate against ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rmse_a: f64,
    pub rmse_y: Option<f64>,
    /// Angle of each aligned estimated endmember to its true counterpart.
    pub angles: Vec<f64>,
    pub permutation: Vec<usize>,
    pub seconds: f64,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "nan".into())
}

impl EvalReport {
    /// Aligns `est_a` to `truth_a`, then scores abundances, the optional
    /// reconstruction, and the optional endmembers under that alignment.
    pub fn evaluate(
        est_a: ArrayView2<'_, f64>,
        truth_a: ArrayView2<'_, f64>,
        reconstruction: Option<(ArrayView2<'_, f64>, ArrayView2<'_, f64>)>,
        endmembers: Option<(ArrayView2<'_, f64>, ArrayView2<'_, f64>)>,
        seconds: f64,
    ) -> Result<Self> {
        let alignment = align_columns(est_a, truth_a)?;
        let rmse_y = reconstruction.map(|(y_hat, y)| rmse(y_hat, y)).transpose()?;
        let angles = match endmembers {
            Some((est_m, true_m)) => {
                if est_m.dim() != true_m.dim() || est_m.ncols() != est_a.ncols() {
                    return Err(Error::Shape {
                        what: "endmember evaluation",
                        expected: true_m.dim(),
                        got: est_m.dim(),
                    });
                }
                let aligned = permute_columns(est_m, &alignment.permutation);
                (0..aligned.ncols())
                    .map(|k| spectral_angle(aligned.column(k), true_m.column(k)))
                    .collect::<Result<Vec<_>>>()?
            }
            None => Vec::new(),
        };
        Ok(Self {
            rmse_a: alignment.rmse,
            rmse_y,
            angles,
            permutation: alignment.permutation,
            seconds,
        })
    }

    fn fields(&self) -> Vec<(&'static str, String)> {
        vec![
            ("rmse_a", self.rmse_a.to_string()),
            ("rmse_y", opt(self.rmse_y)),
            ("angles", self.angles.iter().map(f64::to_string).join(";")),
            ("permutation", self.permutation.iter().join(";")),
            ("seconds", self.seconds.to_string()),
        ]
    }

    /// Flat `key = value` document, one field per line.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.fields() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn csv_header() -> &'static str {
        "rmse_a,rmse_y,angles,permutation,seconds"
    }

    pub fn csv_row(&self) -> String {
        self.fields().into_iter().map(|(_, v)| v).join(",")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    #[test]
    fn rmse_examples() {
        let x = array![[1.0, 2.0]];
        assert_eq!(rmse(x.view(), x.view()).unwrap(), 0.0);
        assert!((rmse(x.view(), array![[0.0, 0.0]].view()).unwrap() - 2.5f64.sqrt()).abs() < 1e-15);
        let y = &x + 0.1;
        assert!((rmse(y.view(), x.view()).unwrap() - 0.1).abs() < 1e-12);
        assert!(rmse(x.view(), array![[1.0], [2.0]].view()).is_err());
    }

    #[test]
    fn angle_examples() {
        let a = array![1.0, 1.0];
        let b = array![1.0, 0.0];
        assert_eq!(spectral_angle(a.view(), a.view()).unwrap(), 0.0);
        assert!((spectral_angle(a.view(), b.view()).unwrap() - FRAC_PI_4).abs() < 1e-12);
        let c = array![0.0, 3.0];
        assert!((spectral_angle(b.view(), c.view()).unwrap() - FRAC_PI_2).abs() < 1e-12);
        assert!(spectral_angle(b.view(), array![0.0, 0.0].view()).is_err());
    }

    #[test]
    fn swapped_columns_realigned() {
        let truth = array![[0.2, 0.8], [0.6, 0.4], [1.0, 0.0]];
        let est = array![[0.8, 0.2], [0.4, 0.6], [0.0, 1.0]];
        let al = align_columns(est.view(), truth.view()).unwrap();
        assert_eq!(al.permutation, vec![1, 0]);
        assert_eq!(al.rmse, 0.0);
        let ident = align_columns(truth.view(), truth.view()).unwrap();
        assert_eq!(ident.permutation, vec![0, 1]);
    }

    #[test]
    fn too_many_endmembers_for_alignment() {
        let x = Array2::<f64>::zeros((2, 9));
        assert!(align_columns(x.view(), x.view()).is_err());
    }

    #[test]
    fn report_csv_matches_kv() {
        let r = EvalReport {
            rmse_a: 0.125,
            rmse_y: Some(0.5),
            angles: vec![0.1, 0.2],
            permutation: vec![1, 0],
            seconds: 2.0,
        };
        let kv_values: Vec<String> = r
            .to_kv()
            .lines()
            .map(|l| l.split_once(" = ").unwrap().1.to_string())
            .collect();
        assert_eq!(r.csv_row(), kv_values.join(","));
        assert_eq!(EvalReport::csv_header().split(',').count(), kv_values.len());
    }
}
