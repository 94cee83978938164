//! Dense symmetric linear algebra on small matrices.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative threshold under which an eigenvalue counts as zero.
pub const RANK_TOL: f64 = 1e-12;

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteData("matrix".into()));
    }
    let scale = m.amax().max(1.0);
    let asym = (m - m.transpose()).amax() / scale;
    if asym > 1e-10 {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

/// Eigenpairs of a symmetric matrix, eigenvalues descending; vectors are columns.
pub fn symmetric_eigen(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_symmetric(m)?;
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(src).into_owned();
        sign_normalize(&mut v);
        vectors.set_column(dst, &v);
    }
    Ok((values, vectors))
}

/// Flip `v` so its largest-magnitude entry (first one on ties) is positive.
pub fn sign_normalize(v: &mut DVector<f64>) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if !v.is_empty() && v[best] < 0.0 {
        v.neg_mut();
    }
}

/// Unit eigenvector of the largest eigenvalue.
///
/// When the top eigenvalue is repeated, the returned vector is the projection
/// of the first basis vector `e_i` with a non-negligible component in the top
/// eigenspace, so the identity matrix yields `e_1`.
pub fn dominant_eigenvector(m: &DMatrix<f64>) -> Result<(DVector<f64>, f64)> {
    let n = m.nrows();
    if n == 0 || m.ncols() != n {
        return Err(Error::InvalidConfig("dominant_eigenvector needs a non-empty square matrix".into()));
    }
    let (values, vectors) = symmetric_eigen(m)?;
    let lambda = values[0];
    let tol = 1e-10 * lambda.abs().max(1.0);
    let dim = values.iter().take_while(|&&l| lambda - l <= tol).count();
    let mut u = if dim == 1 {
        vectors.column(0).into_owned()
    } else {
        let basis = vectors.columns(0, dim);
        let mut pick = None;
        for i in 0..n {
            let coef = basis.row(i).transpose();
            let p = basis * coef;
            let norm = p.norm();
            if norm > 1e-6 {
                pick = Some(p / norm);
                break;
            }
        }
        pick.expect("a non-empty eigenspace has a component along some basis vector")
    };
    sign_normalize(&mut u);
    Ok((u, lambda.max(0.0)))
}

/// Rayleigh quotient `uᵀ M u`.
pub fn quadratic_form(u: &DVector<f64>, m: &DMatrix<f64>) -> f64 {
    (u.transpose() * m * u)[(0, 0)]
}

/// `(1/V)(X - mean)(X - mean)ᵀ` for a `C × V` matrix.
pub fn covariance(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let v = x.ncols();
    if v < 2 {
        return Err(Error::DegenerateSampleCount(v));
    }
    let mut xc = x.clone();
    center_rows(&mut xc);
    let mut r = &xc * xc.transpose() / v as f64;
    // Exact symmetry regardless of BLAS-style summation order.
    for i in 0..r.nrows() {
        for j in 0..i {
            let s = 0.5 * (r[(i, j)] + r[(j, i)]);
            r[(i, j)] = s;
            r[(j, i)] = s;
        }
    }
    Ok(r)
}

pub fn center_rows(x: &mut DMatrix<f64>) {
    for mut row in x.row_iter_mut() {
        let m = row.mean();
        row.add_scalar_mut(-m);
    }
}

/// `R^(-1/2)` of a symmetric positive definite matrix.
pub fn inverse_sqrt_psd(r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (values, vectors) = symmetric_eigen(r)?;
    let lmax = values.max();
    if !(lmax > 0.0) || values.iter().any(|&l| l < RANK_TOL * lmax) {
        return Err(Error::SingularCovariance);
    }
    let d = DMatrix::from_diagonal(&values.map(|l| 1.0 / l.sqrt()));
    Ok(&vectors * d * vectors.transpose())
}

/// Orthonormal basis (as columns) of the orthogonal complement of the given
/// orthonormal vectors in `R^dim`.
pub fn orthonormal_complement(used: &[DVector<f64>], dim: usize) -> DMatrix<f64> {
    let m = used.len();
    if m == 0 {
        return DMatrix::identity(dim, dim);
    }
    let mut a = DMatrix::zeros(dim, m + dim);
    for (j, u) in used.iter().enumerate() {
        a.set_column(j, u);
    }
    for i in 0..dim {
        a[(i, m + i)] = 1.0;
    }
    let q = a.qr().q();
    q.columns(m, dim.saturating_sub(m)).into_owned()
}
