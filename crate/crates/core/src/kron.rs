use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Eliminates every bus not listed in `keep` by a Schur complement:
/// `Y_kk - Y_ke Y_ee^-1 Y_ek`. Rows of the result follow the order of `keep`.
pub fn kron_reduce(y: &DMatrix<f64>, keep: &[usize]) -> Result<DMatrix<f64>> {
    let n = y.nrows();
    if y.ncols() != n {
        return Err(Error::Reduction(format!("matrix is {}x{}, expected square", n, y.ncols())));
    }
    if keep.is_empty() {
        return Err(Error::Reduction("no buses to keep".into()));
    }
    let mut kept = vec![false; n];
    for &k in keep {
        if k >= n {
            return Err(Error::Reduction(format!("bus index {k} out of range for {n} buses")));
        }
        if std::mem::replace(&mut kept[k], true) {
            return Err(Error::Reduction(format!("bus index {k} listed twice")));
        }
    }
    let elim: Vec<usize> = (0..n).filter(|&i| !kept[i]).collect();

    let ykk = DMatrix::from_fn(keep.len(), keep.len(), |i, j| y[(keep[i], keep[j])]);
    if elim.is_empty() {
        return Ok(ykk);
    }
    let yke = DMatrix::from_fn(keep.len(), elim.len(), |i, j| y[(keep[i], elim[j])]);
    let yee = DMatrix::from_fn(elim.len(), elim.len(), |i, j| y[(elim[i], elim[j])]);

    let scale = yee.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let lu = yee.lu();
    let min_pivot = lu.u().diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if !(min_pivot > 1e-12 * scale.max(1.0)) {
        return Err(Error::Reduction("eliminated block is singular".into()));
    }
    let x = lu.solve(&yke.transpose()).ok_or_else(|| Error::Reduction("eliminated block is singular".into()))?;
    let mut r = ykk - &yke * x;
    // Symmetrize away round-off.
    for i in 0..r.nrows() {
        for j in 0..i {
            let v = 0.5 * (r[(i, j)] + r[(j, i)]);
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    Ok(r)
}
