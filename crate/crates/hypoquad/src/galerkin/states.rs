//! Initial data: seeded random coefficient vectors and Hermite projections of Gaussians.

use faer::{c64, Mat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::hermite::{hermite_functions, HermiteBasis};
use super::sparse;
use crate::error::{Error, Result};
use crate::linalg::{self, RMat};

/// How coefficient magnitudes are drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Amplitude {
    /// |c_α| = (1+|α|)^{-p} exactly, uniform random phase.
    Exact,
    /// |c_α| = |g|·(1+|α|)^{-p}, g standard complex normal.
    Gaussian,
}

/// Normalized random state with polynomially decaying coefficients, |α| = Σα_j.
/// Coefficients are drawn in nested order, so states for different N agree on shared modes.
pub fn random_state(basis: &HermiteBasis, decay: f64, amplitude: Amplitude, seed: u64) -> Vec<c64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = vec![c64::new(0.0, 0.0); basis.dim];
    for i in basis.nested_order() {
        let deg = basis.degree(i) as f64;
        let w = (1.0 + deg).powf(-decay);
        let z = match amplitude {
            Amplitude::Exact => {
                let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                c64::from_polar(1.0, phase)
            }
            Amplitude::Gaussian => {
                let (a, b): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
                c64::new(a, b) * std::f64::consts::FRAC_1_SQRT_2
            }
        };
        u[i] = z * w;
    }
    let nrm = sparse::norm(&u);
    u.iter_mut().for_each(|v| *v /= nrm);
    u
}

/// Hermite coefficients of A·exp(−½(x−m)ᵀP(x−m)) for n ≤ 2, by the trapezoid
/// rule on a uniform grid (spectrally accurate for these integrands).
pub fn project_gaussian(basis: &HermiteBasis, mean: &[f64], precision: &RMat, amp: f64) -> Result<Vec<c64>> {
    let n = basis.n;
    if n > 2 || mean.len() != n || precision.nrows() != n {
        return Err(Error::Shape("Gaussian projection supports n ≤ 2 with matching mean/precision".into()));
    }
    let lmin = linalg::lambda_min(precision);
    if !(lmin > 0.0) {
        return Err(Error::Domain("precision matrix must be positive definite".into()));
    }
    let l = basis.levels();
    let reach = (2.0 * l as f64 + 1.0).sqrt() + 9.0;
    let mut half = reach;
    for &m in mean {
        half = half.max(m.abs() + 10.0 / lmin.sqrt());
    }
    let h = 0.05f64.min(std::f64::consts::PI / (4.0 * reach));
    let pts = (2.0 * half / h).ceil() as usize + 1;
    let grid: Vec<f64> = (0..pts).map(|i| -half + i as f64 * h).collect();
    // hf[i][k] = h_k(grid_i)
    let hf = Mat::from_fn(pts, l, |_, _| 0.0f64);
    let mut hf = hf;
    for (i, &x) in grid.iter().enumerate() {
        let v = hermite_functions(l, x);
        for k in 0..l {
            hf[(i, k)] = v[k];
        }
    }
    let gauss = |x: &[f64]| -> f64 {
        let mut q = 0.0;
        for a in 0..n {
            for b in 0..n {
                q += (x[a] - mean[a]) * precision[(a, b)] * (x[b] - mean[b]);
            }
        }
        amp * (-0.5 * q).exp()
    };
    let mut out = vec![c64::new(0.0, 0.0); basis.dim];
    if n == 1 {
        for k in 0..l {
            out[k] = c64::new(h * (0..pts).map(|i| gauss(&[grid[i]]) * hf[(i, k)]).sum::<f64>(), 0.0);
        }
    } else {
        let g = Mat::from_fn(pts, pts, |i, j| gauss(&[grid[i], grid[j]]));
        let c = hf.transpose() * &g * &hf;
        for a in 0..l {
            for b in 0..l {
                out[basis.flat(&[a, b])] = c64::new(h * h * c[(a, b)], 0.0);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ground_state_projection() {
        // h_0 = π^{-1/4} e^{-x²/2}
        let b = HermiteBasis::new(1, 10);
        let c = project_gaussian(&b, &[0.0], &RMat::identity(1, 1), std::f64::consts::PI.powf(-0.25)).unwrap();
        assert!((c[0].re - 1.0).abs() < 1e-13);
        assert!(c[1..].iter().all(|v| v.norm() < 1e-13));
    }

    #[test]
    fn coherent_state_2d() {
        // shifted ground state: c_{jk} = e^{-|z|²/2} z1^j z2^k / √(j! k!), z = m/√2
        let b = HermiteBasis::new(2, 12);
        let m = [0.6, -0.4];
        let amp = 1.0 / std::f64::consts::PI.sqrt();
        let c = project_gaussian(&b, &m, &RMat::identity(2, 2), amp).unwrap();
        let z = [m[0] / 2f64.sqrt(), m[1] / 2f64.sqrt()];
        let fact = |k: usize| (1..=k).map(|v| v as f64).product::<f64>();
        let pref = (-(z[0] * z[0] + z[1] * z[1]) / 2.0).exp();
        for j in 0..6 {
            for k in 0..6 {
                let want = pref * z[0].powi(j as i32) * z[1].powi(k as i32) / (fact(j) * fact(k)).sqrt();
                assert!((c[b.flat(&[j, k])].re - want).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn random_states_nest() {
        let small = random_state(&HermiteBasis::new(2, 4), 2.0, Amplitude::Exact, 7);
        let bb = HermiteBasis::new(2, 8);
        let big = random_state(&bb, 2.0, Amplitude::Exact, 7);
        let sb = HermiteBasis::new(2, 4);
        let ratio = big[bb.flat(&[3, 1])] / small[sb.flat(&[3, 1])];
        let ratio2 = big[bb.flat(&[0, 4])] / small[sb.flat(&[0, 4])];
        assert!((ratio - ratio2).norm() < 1e-14);
        assert!((sparse::norm(&big) - 1.0).abs() < 1e-14);
    }
}
