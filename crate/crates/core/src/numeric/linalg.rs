//! Symmetric eigensolver, Cholesky solves and power iteration.

use super::matrix::{dot, Matrix};
use crate::error::{dim_err, Result, VeilError};

/// Eigenpairs of a symmetric matrix, sorted by descending eigenvalue.
/// `vectors` holds one unit eigenvector per row.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

/// Householder tridiagonalization followed by implicit QL (the EISPACK
/// tred2/tql2 pair).
pub fn symmetric_eigen(a: &Matrix) -> Result<SymmetricEigen> {
    let n = a.rows();
    if a.cols() != n {
        return Err(dim_err("symmetric_eigen", "square matrix", format!("{}x{}", n, a.cols())));
    }
    a.ensure_finite("symmetric_eigen input")?;
    if n == 0 {
        return Ok(SymmetricEigen {
            values: vec![],
            vectors: Matrix::zeros(0, 0),
        });
    }
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(&mut v, &mut d, &mut e);

    // Work on the transpose so each QL rotation touches two contiguous rows.
    let mut vt: Vec<Vec<f64>> = (0..n).map(|j| (0..n).map(|i| v[i][j]).collect()).collect();
    drop(v);
    tql2(&mut vt, &mut d, &mut e)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[j].total_cmp(&d[i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| d[i]).collect();
    let mut data = Vec::with_capacity(n * n);
    for &i in &order {
        data.extend_from_slice(&vt[i]);
    }
    Ok(SymmetricEigen {
        values,
        vectors: Matrix::new(n, n, data)?,
    })
}

fn tred2(v: &mut [Vec<f64>], d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    d.copy_from_slice(&v[n - 1]);

    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[i - 1][j];
                v[i][j] = 0.0;
                v[j][i] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[j][i] = f;
                g = e[j] + v[j][j] * f;
                for k in j + 1..i {
                    g += v[k][j] * d[k];
                    e[k] += v[k][j] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[k][j] -= f * e[k] + g * d[k];
                }
                d[j] = v[i - 1][j];
                v[i][j] = 0.0;
            }
        }
        d[i] = h;
    }

    for i in 0..n - 1 {
        v[n - 1][i] = v[i][i];
        v[i][i] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[k][i + 1] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[k][i + 1] * v[k][j];
                }
                for k in 0..=i {
                    v[k][j] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[k][i + 1] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[n - 1][j];
        v[n - 1][j] = 0.0;
    }
    v[n - 1][n - 1] = 1.0;
    e[0] = 0.0;
}

/// `vt` holds eigenvectors as rows.
fn tql2(vt: &mut [Vec<f64>], d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m == n {
            m = n - 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 300 {
                    return Err(VeilError::NonFinite("QL iteration did not converge".into()));
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);

                    let (lo, hi) = vt.split_at_mut(i + 1);
                    let row_i = &mut lo[i];
                    let row_i1 = &mut hi[0];
                    for (a, b) in row_i.iter_mut().zip(row_i1.iter_mut()) {
                        let hk = *b;
                        *b = s * *a + c * hk;
                        *a = c * *a - s * hk;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Solves `a · x = b` for symmetric positive definite `a` (one column of `b`
/// per right-hand side).
pub fn cholesky_solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    if a.cols() != n || b.rows() != n {
        return Err(dim_err("cholesky_solve", n, format!("{}x{} / {} rows", a.rows(), a.cols(), b.rows())));
    }
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let s = a.get(i, j) - dot(&l.row(i)[..j], &l.row(j)[..j]);
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return Err(VeilError::InvalidArgument(
                        "matrix is not positive definite".into(),
                    ));
                }
                l.set(i, i, s.sqrt());
            } else {
                l.set(i, j, s / l.get(j, j));
            }
        }
    }
    let m = b.cols();
    let mut x = b.clone();
    for c in 0..m {
        // forward: L y = b
        for i in 0..n {
            let mut s = x.get(i, c);
            for k in 0..i {
                s -= l.get(i, k) * x.get(k, c);
            }
            x.set(i, c, s / l.get(i, i));
        }
        // backward: Lᵀ x = y
        for i in (0..n).rev() {
            let mut s = x.get(i, c);
            for k in i + 1..n {
                s -= l.get(k, i) * x.get(k, c);
            }
            x.set(i, c, s / l.get(i, i));
        }
    }
    Ok(x)
}

/// Top-`q` eigenpairs of `XᵀX / (n−1)` for centered `x`, by power iteration
/// with deflation. Never forms the covariance.
pub fn power_iteration_eigen(
    centered: &Matrix,
    q: usize,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<SymmetricEigen> {
    let (n, d) = centered.shape();
    let denom = (n.max(2) - 1) as f64;
    let mut rng = super::Rng::new(seed);
    let mut values = Vec::with_capacity(q);
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(q);

    let apply = |v: &[f64], found: &[Vec<f64>], vals: &[f64]| -> Vec<f64> {
        let mut xv = vec![0.0; n];
        for (r, out) in xv.iter_mut().enumerate() {
            *out = dot(centered.row(r), v);
        }
        let mut w = vec![0.0; d];
        for (r, &s) in xv.iter().enumerate() {
            if s != 0.0 {
                for (wi, xi) in w.iter_mut().zip(centered.row(r)) {
                    *wi += s * xi;
                }
            }
        }
        for wi in w.iter_mut() {
            *wi /= denom;
        }
        for (u, &lam) in found.iter().zip(vals) {
            let c = lam * dot(u, v);
            for (wi, ui) in w.iter_mut().zip(u) {
                *wi -= c * ui;
            }
        }
        w
    };

    for _ in 0..q {
        let mut v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        orthonormalize(&mut v, &vectors);
        let mut lambda = 0.0;
        for _ in 0..max_iter {
            let mut w = apply(&v, &vectors, &values);
            let new_lambda = dot(&w, &v);
            orthonormalize(&mut w, &vectors);
            let delta: f64 = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = w;
            let converged = (new_lambda - lambda).abs() <= tol * new_lambda.abs().max(1.0) && delta <= tol.sqrt();
            lambda = new_lambda;
            if converged {
                break;
            }
        }
        values.push(lambda.max(0.0));
        vectors.push(v);
    }
    let mut data = Vec::with_capacity(q * d);
    for v in &vectors {
        data.extend_from_slice(v);
    }
    Ok(SymmetricEigen {
        values,
        vectors: Matrix::new(q, d, data)?,
    })
}

/// Gram-Schmidt against `basis`, then normalize. Falls back to a canonical
/// direction when `v` lies in the span.
pub(crate) fn orthonormalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for u in basis {
            let c = dot(u, v);
            for (vi, ui) in v.iter_mut().zip(u) {
                *vi -= c * ui;
            }
        }
    }
    let nrm = dot(v, v).sqrt();
    if nrm > 1e-12 {
        for vi in v.iter_mut() {
            *vi /= nrm;
        }
        return;
    }
    for axis in 0..v.len() {
        for (k, vi) in v.iter_mut().enumerate() {
            *vi = if k == axis { 1.0 } else { 0.0 };
        }
        for _ in 0..2 {
            for u in basis {
                let c = dot(u, v);
                for (vi, ui) in v.iter_mut().zip(u) {
                    *vi -= c * ui;
                }
            }
        }
        let nrm = dot(v, v).sqrt();
        if nrm > 1e-6 {
            for vi in v.iter_mut() {
                *vi /= nrm;
            }
            return;
        }
    }
}
