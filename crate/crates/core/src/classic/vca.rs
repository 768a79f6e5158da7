use nalgebra::SymmetricEigen;
use ndarray::{Array1, Array2, Axis};
use rand_distr::{Distribution, StandardNormal};

use super::linalg::to_na;
use crate::error::{Error, Result};
use crate::simdata::{EndmemberMatrix, HsiCube, Provenance};

/// Endmembers selected by [`vca`] and the pixels they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct VcaResult {
    pub endmembers: EndmemberMatrix,
    pub indices: Vec<usize>,
}

/// Vertex component analysis.
///
/// Projects the mean-removed data onto its leading `P − 1` principal
/// directions, lifts each projection with a constant coordinate, and then
/// picks `P` pixels one at a time: each pick maximizes the absolute
/// projection onto a random direction orthogonal to the pixels already
/// chosen. The returned spectra are the selected input pixels themselves.
///
/// For `P = 1` the pixel with the largest projection onto the mean spectrum
/// is returned.
pub fn vca(y: &HsiCube, p: usize, seed: u64) -> Result<VcaResult> {
    let (n, l) = (y.pixels(), y.bands());
    if p == 0 || p > n {
        return Err(Error::invalid(format!("VCA needs 1 <= P <= N, got P={p}, N={n}")));
    }
    if p >= l {
        return Err(Error::invalid(format!("VCA needs P < L, got P={p}, L={l}")));
    }
    let data = y.data();
    let mean = data.mean_axis(Axis(0)).expect("non-empty cube");

    let indices = if p == 1 {
        let norm = mean.dot(&mean).sqrt();
        if norm == 0.0 {
            return Err(Error::Degenerate("mean spectrum is zero".into()));
        }
        let proj = data.dot(&mean);
        vec![argmax_abs(&proj, &[])]
    } else {
        let lifted = lifted_projection(data, &mean, p - 1)?;
        select_vertices(&lifted, p, seed)
    };

    let mut m = Array2::zeros((l, p));
    for (k, &idx) in indices.iter().enumerate() {
        m.column_mut(k).assign(&data.row(idx));
    }
    Ok(VcaResult {
        endmembers: EndmemberMatrix::new(m, Provenance::Extracted)?,
        indices,
    })
}

/// `N × (d + 1)`: principal coordinates plus a constant column equal to the
/// largest projection norm.
fn lifted_projection(data: &Array2<f64>, mean: &Array1<f64>, d: usize) -> Result<Array2<f64>> {
    let n = data.nrows();
    let centered = data - mean;
    let cov = centered.t().dot(&centered) / n as f64;
    let eig = SymmetricEigen::new(to_na(cov.view()));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]];
    let last = eig.eigenvalues[order[d - 1]];
    let energy = data.iter().map(|v| v * v).sum::<f64>() / data.len() as f64;
    if !(top > 0.0) || last <= top * 1e-14 || last <= energy * 1e-12 {
        return Err(Error::Degenerate(format!(
            "data covariance has fewer than {d} significant directions"
        )));
    }
    let basis = Array2::from_shape_fn((data.ncols(), d), |(i, j)| eig.eigenvectors[(i, order[j])]);
    let coords = centered.dot(&basis);
    let c = coords.rows().into_iter().map(|r| r.dot(&r).sqrt()).fold(0.0, f64::max);
    let mut lifted = Array2::from_elem((n, d + 1), c);
    lifted.slice_mut(ndarray::s![.., ..d]).assign(&coords);
    Ok(lifted)
}

fn select_vertices(lifted: &Array2<f64>, p: usize, seed: u64) -> Vec<usize> {
    let mut rng = crate::simdata::rng_for(seed, 0);
    let mut basis: Vec<Array1<f64>> = Vec::with_capacity(p);
    let mut chosen = Vec::with_capacity(p);
    while chosen.len() < p {
        let mut f: Array1<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
        for b in &basis {
            let c = f.dot(b);
            f.scaled_add(-c, b);
        }
        let norm = f.dot(&f).sqrt();
        if norm < 1e-12 {
            continue;
        }
        f /= norm;
        let proj = lifted.dot(&f);
        let idx = argmax_abs(&proj, &chosen);
        chosen.push(idx);

        // extend the orthonormal basis with the selected pixel
        let mut v = lifted.row(idx).to_owned();
        for b in &basis {
            let c = v.dot(b);
            v.scaled_add(-c, b);
        }
        let vn = v.dot(&v).sqrt();
        if vn > 1e-12 {
            basis.push(v / vn);
        }
    }
    chosen
}

fn argmax_abs(values: &Array1<f64>, exclude: &[usize]) -> usize {
    let mut best = (f64::MIN, 0);
    for (i, &v) in values.iter().enumerate() {
        if exclude.contains(&i) {
            continue;
        }
        if v.abs() > best.0 {
            best = (v.abs(), i);
        }
    }
    best.1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simdata::{lmm_mix, sample_dirichlet_abundances, synth_endmembers};

    #[test]
    fn single_endmember_picks_largest_projection() {
        let data = ndarray::array![[0.1, 0.1, 0.1], [0.5, 0.6, 0.4], [0.2, 0.3, 0.2]];
        let cube = HsiCube::new(data, None).unwrap();
        let r = vca(&cube, 1, 0).unwrap();
        assert_eq!(r.indices, vec![1]);
    }

    #[test]
    fn deterministic_for_seed() {
        let m = synth_endmembers(30, 3, 2).unwrap();
        let a = sample_dirichlet_abundances(200, 3, 1.0, 3).unwrap();
        let cube = lmm_mix(m.view(), a.view(), None).unwrap();
        assert_eq!(vca(&cube, 3, 5).unwrap(), vca(&cube, 3, 5).unwrap());
    }

    #[test]
    fn rejects_too_many_endmembers() {
        let cube = HsiCube::new(Array2::from_elem((2, 5), 0.3), None).unwrap();
        assert!(vca(&cube, 3, 0).is_err());
    }

    #[test]
    fn identical_pixels_are_degenerate() {
        let cube = HsiCube::new(Array2::from_elem((20, 5), 0.3), None).unwrap();
        assert!(matches!(vca(&cube, 2, 0), Err(Error::Degenerate(_))));
    }
}
