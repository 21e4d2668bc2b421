//! Tensor Hermite basis h_α = h_{α₁}⊗…⊗h_{αₙ}, α_j ∈ 0..=N, and the
//! one-dimensional ladder matrices. Flat index: dimension 0 varies slowest.

use faer::{c64, Mat};

use crate::linalg::CMat;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HermiteBasis {
    pub n: usize,
    pub nmax: usize,
    pub dim: usize,
}

impl HermiteBasis {
    pub fn new(n: usize, nmax: usize) -> Self {
        Self { n, nmax, dim: (nmax + 1).pow(n as u32) }
    }

    pub fn levels(&self) -> usize {
        self.nmax + 1
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let l = self.levels();
        let mut a = vec![0; self.n];
        for j in (0..self.n).rev() {
            a[j] = flat % l;
            flat /= l;
        }
        a
    }

    pub fn flat(&self, alpha: &[usize]) -> usize {
        alpha.iter().fold(0, |acc, &a| acc * self.levels() + a)
    }

    pub fn stride(&self, j: usize) -> usize {
        self.levels().pow((self.n - 1 - j) as u32)
    }

    pub fn degree(&self, flat: usize) -> usize {
        self.multi_index(flat).iter().sum()
    }

    /// Modes with every α_j ≤ N − margin.
    pub fn interior(&self, margin: usize) -> Vec<usize> {
        let cap = self.nmax.saturating_sub(margin);
        (0..self.dim).filter(|&i| self.multi_index(i).iter().all(|&a| a <= cap)).collect()
    }

    /// Modes with some α_j > N − margin.
    pub fn boundary(&self, margin: usize) -> Vec<usize> {
        let cap = self.nmax.saturating_sub(margin);
        (0..self.dim).filter(|&i| self.multi_index(i).iter().any(|&a| a > cap)).collect()
    }

    /// Flat indices ordered so that, for every N' ≤ N, the first (N'+1)ⁿ entries
    /// enumerate the sub-box α ≤ N'. Random states drawn in this order agree on
    /// common modes across truncation orders.
    pub fn nested_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.dim).collect();
        idx.sort_by_key(|&i| {
            let a = self.multi_index(i);
            (*a.iter().max().unwrap(), i)
        });
        idx
    }
}

fn ladder(levels: usize) -> CMat {
    Mat::from_fn(levels, levels, |i, j| if j == i + 1 { c64::new((j as f64).sqrt(), 0.0) } else { c64::new(0.0, 0.0) })
}

/// Position x = (a + a†)/√2 on `levels` Hermite functions.
pub fn position(levels: usize) -> CMat {
    let a = ladder(levels);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Mat::from_fn(levels, levels, |i, j| (a[(i, j)] + a[(j, i)].conj()) * s)
}

/// Momentum D = −i d/dx = −i(a − a†)/√2.
pub fn momentum(levels: usize) -> CMat {
    let a = ladder(levels);
    let s = c64::new(0.0, -std::f64::consts::FRAC_1_SQRT_2);
    Mat::from_fn(levels, levels, |i, j| (a[(i, j)] - a[(j, i)].conj()) * s)
}

/// Exact compression of the product L_a L_b (each x or D) to `levels` functions:
/// the product is formed with one extra level and then truncated.
pub fn compressed_product(levels: usize, a_is_x: bool, b_is_x: bool) -> CMat {
    let ext = levels + 1;
    let la = if a_is_x { position(ext) } else { momentum(ext) };
    let lb = if b_is_x { position(ext) } else { momentum(ext) };
    let p = &la * &lb;
    Mat::from_fn(levels, levels, |i, j| p[(i, j)])
}

/// Normalized Hermite functions h_0..h_{levels−1} at x (three-term recurrence).
pub fn hermite_functions(levels: usize, x: f64) -> Vec<f64> {
    let mut h = vec![0.0; levels];
    if levels == 0 {
        return h;
    }
    h[0] = std::f64::consts::PI.powf(-0.25) * (-0.5 * x * x).exp();
    if levels > 1 {
        h[1] = std::f64::consts::SQRT_2 * x * h[0];
    }
    for k in 2..levels {
        let kf = k as f64;
        h[k] = (2.0 / kf).sqrt() * x * h[k - 1] - ((kf - 1.0) / kf).sqrt() * h[k - 2];
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oscillator_is_diagonal() {
        let l = 9;
        let xx = compressed_product(l, true, true);
        let dd = compressed_product(l, false, false);
        for i in 0..l {
            for j in 0..l {
                let v = (xx[(i, j)] + dd[(i, j)]) * 0.5;
                let want = if i == j { i as f64 + 0.5 } else { 0.0 };
                assert!((v - c64::new(want, 0.0)).norm() < 1e-14, "{i} {j} {v}");
            }
        }
    }

    #[test]
    fn canonical_commutator_off_boundary() {
        // [x, D] = i on all but the last level
        let l = 12;
        let x = position(l);
        let d = momentum(l);
        let c = &x * &d - &d * &x;
        for i in 0..l - 1 {
            assert!((c[(i, i)] - c64::new(0.0, 1.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn hermite_functions_are_orthonormal_on_a_grid() {
        let h = 0.02;
        let levels = 40;
        let mut g = vec![vec![0.0; levels]; levels];
        let mut x = -20.0;
        while x <= 20.0 {
            let v = hermite_functions(levels, x);
            for a in 0..levels {
                for b in 0..levels {
                    g[a][b] += h * v[a] * v[b];
                }
            }
            x += h;
        }
        for a in 0..levels {
            for b in 0..levels {
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((g[a][b] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn position_matches_quadrature() {
        // ⟨h_k, x h_{k+1}⟩ = √((k+1)/2)
        let x = position(6);
        for k in 0..5 {
            assert!((x[(k, k + 1)].re - ((k + 1) as f64 / 2.0).sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn nested_order_prefix_is_sub_box() {
        let b = HermiteBasis::new(2, 5);
        let ord = b.nested_order();
        let sub: Vec<usize> = ord[..9].iter().map(|&i| *b.multi_index(i).iter().max().unwrap()).collect();
        assert!(sub.iter().all(|&m| m <= 2));
    }
}
