use faer::c64;

use super::hermite::{compressed_product, momentum, position, HermiteBasis};
use super::sparse::Csr;
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::symplectic::{PhaseVector, QuadraticSymbol};

pub const DEFAULT_MAX_DIM: usize = 1 << 22;

/// Truncated Galerkin matrix of a Weyl-quantized polynomial.
#[derive(Debug, Clone)]
pub struct HermiteOperator {
    pub basis: HermiteBasis,
    pub a: Csr,
    pub label: String,
}

impl HermiteOperator {
    pub fn dim(&self) -> usize {
        self.basis.dim
    }

    pub fn apply(&self, u: &[c64]) -> Vec<c64> {
        self.a.apply(u)
    }
}

fn check_size(n: usize, nmax: usize, max_dim: usize) -> Result<HermiteBasis> {
    if nmax < 2 {
        return Err(Error::Precondition(format!("truncation order N = {nmax} < 2")));
    }
    let dim = (nmax as f64 + 1.0).powi(n as i32);
    if dim > max_dim as f64 {
        let fit = (max_dim as f64).powf(1.0 / n as f64).floor() as usize - 1;
        return Err(Error::Resource(format!(
            "(N+1)^n = {dim:.0} exceeds the cap {max_dim}; reduce N to at most {fit}"
        )));
    }
    Ok(HermiteBasis::new(n, nmax))
}

/// Sum of per-dimension matrices and two-dimension products, assembled column by column.
struct TensorSum {
    /// (dimension, matrix)
    single: Vec<(usize, CMat)>,
    /// (dim j, A, dim k, B, coefficient)
    pair: Vec<(usize, CMat, usize, CMat, c64)>,
}

fn column_nz(m: &CMat) -> Vec<Vec<(usize, c64)>> {
    (0..m.ncols())
        .map(|j| (0..m.nrows()).filter(|&i| m[(i, j)] != c64::new(0.0, 0.0)).map(|i| (i, m[(i, j)])).collect())
        .collect()
}

impl TensorSum {
    fn assemble(&self, basis: &HermiteBasis) -> Csr {
        let singles: Vec<(usize, Vec<Vec<(usize, c64)>>)> = self.single.iter().map(|(j, m)| (*j, column_nz(m))).collect();
        let pairs: Vec<_> = self.pair.iter().map(|(j, a, k, b, c)| (*j, column_nz(a), *k, column_nz(b), *c)).collect();
        let mut t = Vec::new();
        for col in 0..basis.dim {
            let alpha = basis.multi_index(col);
            for (j, nz) in &singles {
                let s = basis.stride(*j);
                for &(r, v) in &nz[alpha[*j]] {
                    let row = col + r * s - alpha[*j] * s;
                    t.push((row, col, v));
                }
            }
            for (j, na, k, nb, c) in &pairs {
                let (sj, sk) = (basis.stride(*j), basis.stride(*k));
                for &(r, va) in &na[alpha[*j]] {
                    for &(s, vb) in &nb[alpha[*k]] {
                        let row = col + r * sj - alpha[*j] * sj + s * sk - alpha[*k] * sk;
                        t.push((row, col, va * vb * c));
                    }
                }
            }
        }
        Csr::from_triplets(basis.dim, t)
    }
}

pub fn quantize(q: &QuadraticSymbol, nmax: usize) -> Result<HermiteOperator> {
    quantize_capped(q, nmax, DEFAULT_MAX_DIM)
}

/// q^w = Σ_{a,b} M_ab L_a L_b with L = (x₁..xₙ, D₁..Dₙ); same-dimension products
/// are exact compressions, cross-dimension factors commute.
pub fn quantize_capped(q: &QuadraticSymbol, nmax: usize, max_dim: usize) -> Result<HermiteOperator> {
    let n = q.n;
    let basis = check_size(n, nmax, max_dim)?;
    let l = basis.levels();
    let prods = [
        [compressed_product(l, true, true), compressed_product(l, true, false)],
        [compressed_product(l, false, true), compressed_product(l, false, false)],
    ];
    let (x1, d1) = (position(l), momentum(l));
    let mut ts = TensorSum { single: vec![], pair: vec![] };
    for j in 0..n {
        let mut m = CMat::zeros(l, l);
        for (ia, a) in [j, n + j].into_iter().enumerate() {
            for (ib, b) in [j, n + j].into_iter().enumerate() {
                let c = q.m[(a, b)];
                if c != c64::new(0.0, 0.0) {
                    m = &m + &prods[ia][ib] * faer::Scale(c);
                }
            }
        }
        ts.single.push((j, m));
        for k in j + 1..n {
            for (ia, a) in [j, n + j].into_iter().enumerate() {
                for (ib, b) in [k, n + k].into_iter().enumerate() {
                    let c = q.m[(a, b)] * 2.0;
                    if c != c64::new(0.0, 0.0) {
                        let fa = if ia == 0 { x1.clone() } else { d1.clone() };
                        let fb = if ib == 0 { x1.clone() } else { d1.clone() };
                        ts.pair.push((j, fa, k, fb, c));
                    }
                }
            }
        }
    }
    Ok(HermiteOperator { basis, a: ts.assemble(&basis), label: q.label.clone().unwrap_or_else(|| "symbol".into()) })
}

/// Σ_j (x0)_j x_j + (ξ0)_j D_j.
pub fn linear_observable(x0: &PhaseVector, nmax: usize) -> Result<HermiteOperator> {
    let n = x0.n;
    let basis = check_size(n, nmax, DEFAULT_MAX_DIM)?;
    let l = basis.levels();
    let (x1, d1) = (position(l), momentum(l));
    let mut ts = TensorSum { single: vec![], pair: vec![] };
    for j in 0..n {
        let m = &x1 * faer::Scale(x0.coords[j]) + &d1 * faer::Scale(x0.coords[n + j]);
        ts.single.push((j, m));
    }
    Ok(HermiteOperator { basis, a: ts.assemble(&basis), label: "observable".into() })
}

/// Diagonal of ⟨(x,D)⟩^s = (1 + Σ_j (2α_j + 1))^{s/2}.
pub fn japanese_bracket_weights(basis: &HermiteBasis, s: f64) -> Vec<f64> {
    (0..basis.dim)
        .map(|i| {
            let a = basis.multi_index(i);
            (1.0 + a.iter().map(|&k| 2.0 * k as f64 + 1.0).sum::<f64>()).powf(s / 2.0)
        })
        .collect()
}
