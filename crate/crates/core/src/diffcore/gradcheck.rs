use super::{DiffError, Tensor};

/// `|a − b| / (|a| + |b| + 1e-12)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs() + 1e-12)
}

/// Compares analytic gradients against central differences with step `h`.
///
/// `eval` returns the loss and its gradient (one tensor per parameter). The
/// analytic gradient is taken at `params`; each coordinate is then perturbed
/// by ±h. Returns the maximum [`relative_error`] over all coordinates.
pub fn grad_check<F>(mut eval: F, params: &[Tensor], h: f64) -> Result<f64, DiffError>
where
    F: FnMut(&[Tensor]) -> Result<(f64, Vec<Tensor>), DiffError>,
{
    let (_, analytic) = eval(params)?;
    if analytic.len() != params.len() {
        return Err(DiffError::StateMismatch(format!(
            "{} gradients for {} parameters",
            analytic.len(),
            params.len()
        )));
    }
    let mut work = params.to_vec();
    let mut worst = 0.0f64;
    for k in 0..params.len() {
        let (rows, cols) = params[k].shape();
        for r in 0..rows {
            for c in 0..cols {
                let orig = params[k].get(r, c);
                work[k].values_mut()[[r, c]] = orig + h;
                let (plus, _) = eval(&work)?;
                work[k].values_mut()[[r, c]] = orig - h;
                let (minus, _) = eval(&work)?;
                work[k].values_mut()[[r, c]] = orig;
                let numeric = (plus - minus) / (2.0 * h);
                worst = worst.max(relative_error(analytic[k].get(r, c), numeric));
            }
        }
    }
    Ok(worst)
}
