//! Subelliptic ratios ‖Λu‖/(‖q^w u‖ + ‖u‖) over seeded random ensembles.

use faer::{c64, Mat, Side};
use rayon::prelude::*;
use serde::Serialize;

use super::hermite::HermiteBasis;
use super::operator::{japanese_bracket_weights, quantize, HermiteOperator};
use super::sparse;
use super::spectrum::DENSE_CAP;
use super::states::{random_state, Amplitude};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, RMat};
use crate::singular::{kernel_chain, r_matrices, RankTol};
use crate::symplectic::QuadraticSymbol;

/// Coefficient decay exponent of the ensemble states.
pub const ENSEMBLE_DECAY: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Target {
    /// ⟨(x,D)⟩^{2/(2k0+1)}
    Global,
    /// Λ_0 = (1 + r_0^w)^{1/2}, or Λ_k^{2/(2k+1)} = (1 + r_k^w)^{1/(2k+1)} for k ≥ 1.
    Lambda(usize),
}

impl Target {
    pub fn label(&self) -> String {
        match self {
            Target::Global => "global".into(),
            Target::Lambda(k) => format!("lambda_{k}"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SubellipticResult {
    pub target: String,
    pub nmax: usize,
    pub ensemble: usize,
    pub seed: u64,
    pub exponent: f64,
    pub max_ratio: f64,
    pub mean_ratio: f64,
    pub median_ratio: f64,
    /// Smallest eigenvalue of the truncated 1 + r_k^w (Λ targets only).
    pub min_eigenvalue: Option<f64>,
    pub separable: bool,
}

enum Weight {
    Diagonal(Vec<f64>),
    /// Per-dimension Hermitian eigendecompositions (U_j, λ_j) and the power p of (1 + Σλ).
    Separable(Vec<(CMat, Vec<f64>)>, f64),
    Dense(CMat),
}

fn herm_eig(m: &CMat) -> Result<(Vec<f64>, CMat)> {
    let e = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Inconsistency(format!("Hermitian eigensolver: {e:?}")))?;
    let s = e.S().column_vector();
    Ok(((0..m.nrows()).map(|i| s[i].re).collect(), e.U().to_owned()))
}

/// Applies a levels×levels matrix along dimension j of a tensor-product coefficient vector.
fn mode_apply(basis: &HermiteBasis, j: usize, m: &CMat, u: &[c64]) -> Vec<c64> {
    let l = basis.levels();
    let s = basis.stride(j);
    let block = l * s;
    let mut out = vec![c64::new(0.0, 0.0); u.len()];
    let mut fiber = vec![c64::new(0.0, 0.0); l];
    for o in (0..u.len()).step_by(block) {
        for i in 0..s {
            for k in 0..l {
                fiber[k] = u[o + k * s + i];
            }
            for r in 0..l {
                let mut acc = c64::new(0.0, 0.0);
                for k in 0..l {
                    acc += m[(r, k)] * fiber[k];
                }
                out[o + r * s + i] = acc;
            }
        }
    }
    out
}

impl Weight {
    fn apply(&self, basis: &HermiteBasis, u: &[c64]) -> Vec<c64> {
        match self {
            Weight::Diagonal(w) => u.iter().zip(w).map(|(a, b)| a * b).collect(),
            Weight::Separable(parts, p) => {
                let mut v = u.to_vec();
                for (j, (uj, _)) in parts.iter().enumerate() {
                    v = mode_apply(basis, j, &uj.adjoint().to_owned(), &v);
                }
                for (i, x) in v.iter_mut().enumerate() {
                    let a = basis.multi_index(i);
                    let lam: f64 = parts.iter().zip(&a).map(|((_, ev), &k)| ev[k]).sum();
                    *x *= (1.0 + lam).max(0.0).powf(*p);
                }
                for (j, (uj, _)) in parts.iter().enumerate() {
                    v = mode_apply(basis, j, uj, &v);
                }
                v
            }
            Weight::Dense(m) => {
                let um = Mat::from_fn(u.len(), 1, |i, _| u[i]);
                let r = m * &um;
                (0..u.len()).map(|i| r[(i, 0)]).collect()
            }
        }
    }
}

fn separable(r: &RMat, n: usize) -> bool {
    let scale = 1.0 + linalg::max_abs(r);
    for a in 0..2 * n {
        for b in 0..2 * n {
            if a % n != b % n && r[(a, b)].abs() > 1e-14 * scale {
                return false;
            }
        }
    }
    true
}

/// (1 + r^w)^p together with the smallest eigenvalue of the truncated 1 + r^w.
fn lambda_weight(r: &RMat, n: usize, nmax: usize, p: f64) -> Result<(Weight, f64, bool)> {
    let basis = HermiteBasis::new(n, nmax);
    if separable(r, n) {
        let mut parts = vec![];
        let mut min_sum = 1.0;
        for j in 0..n {
            let idx = [j, n + j];
            let rj = Mat::from_fn(2, 2, |a, b| r[(idx[a], idx[b])]);
            let op = quantize(&QuadraticSymbol::real(1, &rj)?, nmax)?;
            let (ev, u) = herm_eig(&op.a.to_dense())?;
            min_sum += ev[0];
            parts.push((u, ev));
        }
        return Ok((Weight::Separable(parts, p), min_sum, true));
    }
    if basis.dim > DENSE_CAP {
        return Err(Error::Resource(format!(
            "coupled 1 + r^w needs a dense eigendecomposition of size {} > {DENSE_CAP}; reduce N",
            basis.dim
        )));
    }
    let op = quantize(&QuadraticSymbol::real(n, r)?, nmax)?;
    let mut m = op.a.to_dense();
    for i in 0..basis.dim {
        m[(i, i)] += c64::new(1.0, 0.0);
    }
    let (ev, u) = herm_eig(&m)?;
    let d = Mat::from_fn(basis.dim, basis.dim, |i, j| if i == j { c64::new(ev[i].max(0.0).powf(p), 0.0) } else { c64::new(0.0, 0.0) });
    let w = &u * &d * u.adjoint();
    Ok((Weight::Dense(w), ev[0], false))
}

pub fn subelliptic_ratio(q: &QuadraticSymbol, target: Target, ensemble: usize, nmax: usize, seed: u64) -> Result<SubellipticResult> {
    if ensemble == 0 {
        return Err(Error::Precondition("empty ensemble".into()));
    }
    let chain = kernel_chain(q, RankTol::default())?;
    let k0 = chain
        .k0
        .ok_or_else(|| Error::NotApplicable("the singular space is nontrivial; subelliptic estimates need S = {0}".into()))?;
    let op: HermiteOperator = quantize(q, nmax)?;
    let basis = op.basis;
    let (weight, exponent, min_eig, sep) = match target {
        Target::Global => {
            let s = 2.0 / (2 * k0 + 1) as f64;
            (Weight::Diagonal(japanese_bracket_weights(&basis, s)), s, None, true)
        }
        Target::Lambda(k) => {
            let r = r_matrices(q, k)?.pop().expect("r_matrices returns k+1 forms");
            let exponent = if k == 0 { 1.0 } else { 2.0 / (2 * k + 1) as f64 };
            let (w, min_eig, sep) = lambda_weight(&r, q.n, nmax, exponent / 2.0)?;
            if min_eig < 0.5 {
                return Err(Error::TruncationArtifact(format!("1 + r_{k}^w has eigenvalue {min_eig:.3e} < 1/2")));
            }
            (w, exponent, Some(min_eig), sep)
        }
    };
    let mut ratios: Vec<f64> = (0..ensemble)
        .into_par_iter()
        .map(|i| {
            let u = random_state(&basis, ENSEMBLE_DECAY, Amplitude::Gaussian, seed.wrapping_add(i as u64));
            let lu = sparse::norm(&weight.apply(&basis, &u));
            lu / (sparse::norm(&op.apply(&u)) + sparse::norm(&u))
        })
        .collect();
    let mean = ratios.iter().sum::<f64>() / ensemble as f64;
    ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(SubellipticResult {
        target: target.label(),
        nmax,
        ensemble,
        seed,
        exponent,
        max_ratio: *ratios.last().unwrap(),
        mean_ratio: mean,
        median_ratio: ratios[ensemble / 2],
        min_eigenvalue: min_eig,
        separable: sep,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symplectic::{harmonic_oscillator, kramers};

    #[test]
    fn elliptic_ratio_is_bounded_by_two() {
        // ⟨(x,D)⟩² = 1 + 2A for the oscillator, so the ratio is ≤ 2
        let r = subelliptic_ratio(&harmonic_oscillator(1), Target::Global, 20, 32, 1).unwrap();
        assert!(r.max_ratio <= 2.0 + 1e-12 && r.max_ratio > 0.5, "{r:?}");
    }

    #[test]
    fn separable_matches_dense() {
        let q = kramers();
        let r = r_matrices(&q, 1).unwrap().pop().unwrap();
        let n = 10;
        let basis = HermiteBasis::new(2, n);
        let (ws, m1, _) = lambda_weight(&r, 2, n, 1.0 / 3.0).unwrap();
        let op = quantize(&QuadraticSymbol::real(2, &r).unwrap(), n).unwrap();
        let mut m = op.a.to_dense();
        for i in 0..basis.dim {
            m[(i, i)] += c64::new(1.0, 0.0);
        }
        let (ev, u) = herm_eig(&m).unwrap();
        assert!((ev[0] - m1).abs() < 1e-10);
        let d = Mat::from_fn(basis.dim, basis.dim, |i, j| if i == j { c64::new(ev[i].powf(1.0 / 3.0), 0.0) } else { c64::new(0.0, 0.0) });
        let wd = Weight::Dense(&u * &d * u.adjoint());
        let x = random_state(&basis, 2.0, Amplitude::Gaussian, 3);
        let a = ws.apply(&basis, &x);
        let b = wd.apply(&basis, &x);
        let diff: Vec<c64> = a.iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(sparse::norm(&diff) < 1e-12 * sparse::norm(&a));
    }

    #[test]
    fn lambda_zero_kramers_runs() {
        let r = subelliptic_ratio(&kramers(), Target::Lambda(0), 8, 16, 5).unwrap();
        assert!(r.min_eigenvalue.unwrap() >= 1.0 - 1e-12);
        assert!(r.max_ratio.is_finite() && r.separable);
    }
}
