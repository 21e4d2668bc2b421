//! Small dense helpers on top of faer. Everything here works on matrices of
//! phase-space size (2n ≤ ~20) or on Galerkin blocks up to a few thousand rows.

use faer::prelude::*;
use faer::{c64, Mat, Side};

pub type RMat = Mat<f64>;
pub type CMat = Mat<c64>;

/// J = [[0, −I], [I, 0]], so that σ(X, Y) = Xᵀ J Y = ⟨ξ, y⟩ − ⟨x, η⟩.
pub fn j_matrix(n: usize) -> RMat {
    Mat::from_fn(2 * n, 2 * n, |i, j| {
        if i < n && j == i + n {
            -1.0
        } else if i >= n && j + n == i {
            1.0
        } else {
            0.0
        }
    })
}

pub fn to_complex(a: &RMat) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| c64::new(a[(i, j)], 0.0))
}

pub fn re(a: &CMat) -> RMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)].re)
}

pub fn im(a: &CMat) -> RMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)].im)
}

pub fn from_parts(re: &RMat, im: &RMat) -> CMat {
    Mat::from_fn(re.nrows(), re.ncols(), |i, j| c64::new(re[(i, j)], im[(i, j)]))
}

pub fn sym(a: &RMat) -> RMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| 0.5 * (a[(i, j)] + a[(j, i)]))
}

pub fn sym_c(a: &CMat) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| (a[(i, j)] + a[(j, i)]) * 0.5)
}

pub fn scale(a: &RMat, s: f64) -> RMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| s * a[(i, j)])
}

pub fn max_abs(a: &RMat) -> f64 {
    let mut m: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].abs());
        }
    }
    m
}

pub fn max_abs_c(a: &CMat) -> f64 {
    let mut m: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

pub fn norm2(a: &RMat) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    a.singular_values().map(|s| s[0]).unwrap_or(f64::NAN)
}

pub fn norm2_c(a: &CMat) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    a.singular_values().map(|s| s[0]).unwrap_or(f64::NAN)
}

fn norm1_c(a: &CMat) -> f64 {
    (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn all_finite(a: &CMat) -> bool {
    (0..a.ncols()).all(|j| (0..a.nrows()).all(|i| a[(i, j)].re.is_finite() && a[(i, j)].im.is_finite()))
}

pub fn matpow(a: &RMat, k: usize) -> RMat {
    let mut p = RMat::identity(a.nrows(), a.ncols());
    for _ in 0..k {
        p = &p * a;
    }
    p
}

/// Eigenvalues (ascending) and eigenvectors of a real symmetric matrix.
pub fn sym_eig(a: &RMat) -> (Vec<f64>, RMat) {
    if a.nrows() == 0 {
        return (vec![], RMat::zeros(0, 0));
    }
    let e = sym(a).self_adjoint_eigen(Side::Lower).expect("symmetric eigensolver failed");
    let s = e.S().column_vector();
    ((0..a.nrows()).map(|i| s[i]).collect(), e.U().to_owned())
}

pub fn lambda_min(a: &RMat) -> f64 {
    sym_eig(a).0.first().copied().unwrap_or(0.0)
}

pub fn lambda_max(a: &RMat) -> f64 {
    sym_eig(a).0.last().copied().unwrap_or(0.0)
}

/// Singular values of `a`, descending, padded with zeros up to `a.ncols()`.
pub fn singular_values_padded(a: &RMat) -> Vec<f64> {
    let mut s: Vec<f64> = if a.nrows() == 0 {
        vec![]
    } else {
        a.singular_values().expect("svd failed")
    };
    s.resize(a.ncols(), 0.0);
    s
}

/// Orthonormal basis of Ker a (columns), using an absolute threshold on singular values.
pub fn null_space(a: &RMat, tol: f64) -> RMat {
    let k = a.ncols();
    if a.nrows() == 0 {
        return RMat::identity(k, k);
    }
    let svd = a.svd().expect("svd failed");
    let s = svd.S().column_vector();
    let rank = (0..s.nrows()).filter(|&i| s[i] > tol).count();
    let v = svd.V();
    Mat::from_fn(k, k - rank, |i, j| v[(i, rank + j)])
}

/// Orthonormal basis of Ran a.
pub fn range_basis(a: &RMat, tol: f64) -> RMat {
    let m = a.nrows();
    if a.ncols() == 0 || m == 0 {
        return RMat::zeros(m, 0);
    }
    let svd = a.thin_svd().expect("svd failed");
    let s = svd.S().column_vector();
    let rank = (0..s.nrows()).filter(|&i| s[i] > tol).count();
    let u = svd.U();
    Mat::from_fn(m, rank, |i, j| u[(i, j)])
}

/// Orthonormal basis of the orthogonal complement of the span of the orthonormal columns of `b`.
pub fn orth_complement(b: &RMat, dim: usize) -> RMat {
    if b.ncols() == 0 {
        return RMat::identity(dim, dim);
    }
    null_space(&b.transpose().to_owned(), 1e-10)
}

pub fn hstack(a: &RMat, b: &RMat) -> RMat {
    assert_eq!(a.nrows(), b.nrows());
    let ca = a.ncols();
    Mat::from_fn(a.nrows(), ca + b.ncols(), |i, j| if j < ca { a[(i, j)] } else { b[(i, j - ca)] })
}

pub fn vstack(a: &RMat, b: &RMat) -> RMat {
    assert_eq!(a.ncols(), b.ncols());
    let ra = a.nrows();
    Mat::from_fn(ra + b.nrows(), a.ncols(), |i, j| if i < ra { a[(i, j)] } else { b[(i - ra, j)] })
}

/// Sine of the largest principal angle between the spans of two orthonormal
/// bases; 1 when the dimensions differ.
pub fn subspace_gap(a: &RMat, b: &RMat) -> f64 {
    if a.ncols() != b.ncols() {
        return 1.0;
    }
    if a.ncols() == 0 {
        return 0.0;
    }
    let proj = b * (b.transpose() * a);
    let resid = a - &proj;
    norm2(&resid).min(1.0)
}

/// Distance from a unit vector to the span of the orthonormal columns of `b`.
pub fn dist_to_span(x: &[f64], b: &RMat) -> f64 {
    let xv = Mat::from_fn(x.len(), 1, |i, _| x[i]);
    if b.ncols() == 0 {
        return x.iter().map(|v| v * v).sum::<f64>().sqrt();
    }
    let r = &xv - b * (b.transpose() * &xv);
    (0..x.len()).map(|i| r[(i, 0)] * r[(i, 0)]).sum::<f64>().sqrt()
}

pub fn solve(a: &RMat, b: &RMat) -> RMat {
    a.partial_piv_lu().solve(b)
}

pub fn solve_c(a: &CMat, b: &CMat) -> CMat {
    a.partial_piv_lu().solve(b)
}

pub fn inverse(a: &RMat) -> RMat {
    solve(a, &RMat::identity(a.nrows(), a.nrows()))
}

/// Cholesky factor L (lower) of a symmetric positive definite matrix.
pub fn cholesky(a: &RMat) -> Option<RMat> {
    sym(a).llt(Side::Lower).ok().map(|c| c.L().to_owned())
}

/// Largest λ with `m v = λ r v` for symmetric `m` and positive definite `r`.
pub fn gen_eig_max(m: &RMat, r: &RMat) -> Option<f64> {
    let l = cholesky(r)?;
    let linv = inverse(&l);
    let c = &linv * m * linv.transpose();
    Some(lambda_max(&c))
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Parlett–Reinsch balancing: D⁻¹AD with D a diagonal of powers of two chosen so
/// that row and column norms match. Eigenvalues are unchanged; their accuracy is not.
pub fn balance_c(a: &CMat) -> CMat {
    let n = a.nrows();
    let mut b = a.clone();
    let mut converged = false;
    while !converged {
        converged = true;
        for i in 0..n {
            let c: f64 = (0..n).filter(|&j| j != i).map(|j| b[(j, i)].norm()).sum();
            let r: f64 = (0..n).filter(|&j| j != i).map(|j| b[(i, j)].norm()).sum();
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let mut f = 1.0;
            let (mut cc, mut rr) = (c, r);
            while cc < rr / 2.0 {
                cc *= 2.0;
                rr /= 2.0;
                f *= 2.0;
            }
            while cc >= rr * 2.0 {
                cc /= 2.0;
                rr *= 2.0;
                f /= 2.0;
            }
            if (cc + rr) < 0.95 * (c + r) {
                converged = false;
                for j in 0..n {
                    b[(i, j)] /= f;
                    b[(j, i)] *= f;
                }
            }
        }
    }
    b
}

/// Matrix exponential by scaling and squaring with the degree-13 Padé approximant.
pub fn expm_c(a: &CMat) -> CMat {
    let n = a.nrows();
    let theta13 = 5.371920351148152;
    let nrm = norm1_c(a);
    let s = if nrm > theta13 { (nrm / theta13).log2().ceil() as i32 } else { 0 };
    let scale = 0.5f64.powi(s);
    let a1 = Mat::from_fn(n, n, |i, j| a[(i, j)] * scale);
    let id = CMat::identity(n, n);
    let a2 = &a1 * &a1;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = PADE13;
    let lin = |c6: f64, c4: f64, c2: f64, c0: f64| -> CMat {
        Mat::from_fn(n, n, |i, j| {
            a6[(i, j)] * c6 + a4[(i, j)] * c4 + a2[(i, j)] * c2 + id[(i, j)] * c0
        })
    };
    let u_inner = &a6 * lin(b[13], b[11], b[9], 0.0) + lin(b[7], b[5], b[3], b[1]);
    let u = &a1 * &u_inner;
    let v = &a6 * lin(b[12], b[10], b[8], 0.0) + lin(b[6], b[4], b[2], b[0]);
    let p = &v + &u;
    let q = &v - &u;
    let mut r = solve_c(&q, &p);
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

pub fn expm(a: &RMat) -> RMat {
    re(&expm_c(&to_complex(a)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expm_of_rotation_generator() {
        let t = 0.7;
        let a = Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 1) => -t,
            (1, 0) => t,
            _ => 0.0,
        });
        let e = expm(&a);
        assert!((e[(0, 0)] - t.cos()).abs() < 1e-14);
        assert!((e[(1, 0)] - t.sin()).abs() < 1e-14);
    }

    #[test]
    fn expm_large_norm_against_diagonal() {
        let a = Mat::from_fn(3, 3, |i, j| if i == j { c64::new(-(10.0 * i as f64 + 1.0), 3.0) } else { c64::new(0.0, 0.0) });
        let e = expm_c(&a);
        for i in 0..3 {
            let want = a[(i, i)].exp();
            assert!((e[(i, i)] - want).norm() <= 1e-13 * (1.0 + want.norm()));
        }
    }

    #[test]
    fn expm_nilpotent_is_polynomial() {
        let a = Mat::from_fn(3, 3, |i, j| if j == i + 1 { 2.0 } else { 0.0 });
        let e = expm(&a);
        assert!((e[(0, 2)] - 2.0).abs() < 1e-14);
        assert!((e[(0, 1)] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn null_space_and_gap() {
        let a = Mat::from_fn(1, 3, |_, j| [1.0, 1.0, 0.0][j]);
        let k = null_space(&a, 1e-12);
        assert_eq!(k.ncols(), 2);
        let want = Mat::from_fn(3, 2, |i, j| match (i, j) {
            (0, 0) => 1.0 / 2f64.sqrt(),
            (1, 0) => -1.0 / 2f64.sqrt(),
            (2, 1) => 1.0,
            _ => 0.0,
        });
        assert!(subspace_gap(&k, &want) < 1e-12);
    }

    #[test]
    fn generalized_eigenvalue() {
        let m = Mat::from_fn(2, 2, |i, j| if i == j { [2.0, 3.0][i] } else { 0.0 });
        let r = Mat::from_fn(2, 2, |i, j| if i == j { [1.0, 0.5][i] } else { 0.0 });
        assert!((gen_eig_max(&m, &r).unwrap() - 6.0).abs() < 1e-12);
    }
}
