use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Hyperspectral image: `N` pixels by `L` bands, pixel-major, optionally
/// laid out on a `rows × cols` grid (row-major over pixels).
#[derive(Debug, Clone, PartialEq)]
pub struct HsiCube {
    data: Array2<f64>,
    grid: Option<(usize, usize)>,
}

impl HsiCube {
    pub fn new(data: Array2<f64>, grid: Option<(usize, usize)>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::invalid("cube must have at least one pixel and one band"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("cube contains non-finite values"));
        }
        if let Some((r, c)) = grid {
            if r * c != data.nrows() {
                return Err(Error::Shape {
                    what: "cube grid",
                    expected: (data.nrows(), 1),
                    got: (r, c),
                });
            }
        }
        Ok(Self { data, grid })
    }

    pub fn pixels(&self) -> usize {
        self.data.nrows()
    }

    pub fn bands(&self) -> usize {
        self.data.ncols()
    }

    pub fn grid(&self) -> Option<(usize, usize)> {
        self.grid
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn pixel(&self, n: usize) -> ArrayView1<'_, f64> {
        self.data.row(n)
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    /// Rounds every value through 32-bit storage precision.
    pub fn quantized_f32(&self) -> Self {
        Self {
            data: self.data.mapv(|v| f64::from(v as f32)),
            grid: self.grid,
        }
    }
}

/// Where an endmember matrix came from. Loaded and generated matrices are
/// reflectances and must lie in `[0, 1]`; extracted or estimated ones may
/// carry noise outside that range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Loaded,
    Generated,
    Extracted,
    Estimated,
}

/// `L × P` matrix whose columns are endmember spectra.
#[derive(Debug, Clone, PartialEq)]
pub struct EndmemberMatrix {
    data: Array2<f64>,
    provenance: Provenance,
}

impl EndmemberMatrix {
    pub fn new(data: Array2<f64>, provenance: Provenance) -> Result<Self> {
        let (l, p) = data.dim();
        if p == 0 || l <= p {
            return Err(Error::invalid(format!(
                "endmember matrix needs L > P >= 1, got {l} x {p}"
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("endmember matrix contains non-finite values"));
        }
        if matches!(provenance, Provenance::Loaded | Provenance::Generated)
            && data.iter().any(|&v| !(0.0..=1.0).contains(&v))
        {
            return Err(Error::invalid("endmember reflectances must lie in [0, 1]"));
        }
        if let Some(k) = data.axis_iter(Axis(1)).position(|c| c.iter().all(|&v| v == 0.0)) {
            return Err(Error::invalid(format!("endmember column {k} is zero")));
        }
        Ok(Self { data, provenance })
    }

    pub fn bands(&self) -> usize {
        self.data.nrows()
    }

    pub fn count(&self) -> usize {
        self.data.ncols()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn column(&self, k: usize) -> ArrayView1<'_, f64> {
        self.data.column(k)
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }
}

/// Rows within this distance of summing to one count as on the simplex.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// `N × P` abundances, each row on the unit simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct AbundanceMatrix {
    data: Array2<f64>,
    grid: Option<(usize, usize)>,
}

impl AbundanceMatrix {
    pub fn new(data: Array2<f64>, grid: Option<(usize, usize)>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::invalid("abundance matrix is empty"));
        }
        for (n, row) in data.rows().into_iter().enumerate() {
            if row.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(Error::invalid(format!(
                    "abundance row {n} has a negative or non-finite entry"
                )));
            }
            let s: f64 = row.sum();
            if (s - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::invalid(format!("abundance row {n} sums to {s}")));
            }
        }
        if let Some((r, c)) = grid {
            if r * c != data.nrows() {
                return Err(Error::Shape {
                    what: "abundance grid",
                    expected: (data.nrows(), 1),
                    got: (r, c),
                });
            }
        }
        Ok(Self { data, grid })
    }

    pub fn pixels(&self) -> usize {
        self.data.nrows()
    }

    pub fn count(&self) -> usize {
        self.data.ncols()
    }

    pub fn grid(&self) -> Option<(usize, usize)> {
        self.grid
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn endmember_invariants() {
        assert!(EndmemberMatrix::new(array![[0.1, 0.2], [0.3, 0.4]], Provenance::Generated).is_err());
        assert!(EndmemberMatrix::new(array![[0.1, 0.0], [0.3, 0.0], [0.2, 0.0]], Provenance::Loaded).is_err());
        assert!(EndmemberMatrix::new(array![[1.5], [0.3]], Provenance::Loaded).is_err());
        assert!(EndmemberMatrix::new(array![[1.5], [0.3]], Provenance::Extracted).is_ok());
    }

    #[test]
    fn abundance_rows_must_be_on_simplex() {
        assert!(AbundanceMatrix::new(array![[0.5, 0.5], [0.2, 0.8]], None).is_ok());
        assert!(AbundanceMatrix::new(array![[0.5, 0.6]], None).is_err());
        assert!(AbundanceMatrix::new(array![[1.5, -0.5]], None).is_err());
    }

    #[test]
    fn cube_grid_must_match() {
        assert!(HsiCube::new(Array2::zeros((6, 3)), Some((2, 3))).is_ok());
        assert!(HsiCube::new(Array2::zeros((6, 3)), Some((2, 2))).is_err());
    }
}
