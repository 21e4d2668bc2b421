//! e^{-tA}u for truncated Galerkin matrices: dense Padé exponential for small
//! systems, a shifted and sub-stepped Taylor series on sparse matvecs otherwise.

use faer::{c64, Mat};

use super::operator::HermiteOperator;
use super::sparse::{self, Csr};
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy)]
pub struct PropagateOptions {
    /// Largest D propagated with a dense matrix exponential.
    pub dense_cap: usize,
    /// Relative truncation tolerance of each Taylor substep.
    pub tol: f64,
    /// Maximum number of Taylor terms per substep.
    pub max_terms: usize,
}

impl Default for PropagateOptions {
    fn default() -> Self {
        Self { dense_cap: 400, tol: 1e-13, max_terms: 80 }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<c64>>,
    pub norms: Vec<f64>,
    /// max_i (‖u(t_{i+1})‖ − ‖u(t_i)‖)/‖u0‖, ≤ 0 for a contraction.
    pub max_norm_increase: f64,
}

const THETA: f64 = 3.0;

/// e^{-τA}v by substepped Taylor series of the trace-shifted matrix.
pub fn expmv(a: &Csr, tau: f64, v: &[c64], opts: &PropagateOptions) -> Result<Vec<c64>> {
    if tau == 0.0 {
        return Ok(v.to_vec());
    }
    let mu = a.trace() / a.dim as f64;
    let shifted = a.sub(&Csr::diagonal(&vec![mu; a.dim]));
    let norm = shifted.norm1();
    let steps = ((tau.abs() * norm / THETA).ceil() as usize).max(1);
    let h = tau / steps as f64;
    let damp = (-mu * h).exp();
    let mut cur = v.to_vec();
    let mut term = vec![c64::new(0.0, 0.0); a.dim];
    let mut tmp = vec![c64::new(0.0, 0.0); a.dim];
    for _ in 0..steps {
        let mut acc = cur.clone();
        term.copy_from_slice(&cur);
        let mut converged = false;
        let mut prev_small = false;
        let mut achieved = f64::INFINITY;
        for k in 1..=opts.max_terms {
            shifted.apply_into(&term, &mut tmp);
            let f = c64::new(-h / k as f64, 0.0);
            for (ti, xi) in term.iter_mut().zip(&tmp) {
                *ti = xi * f;
            }
            sparse::axpy(c64::new(1.0, 0.0), &term, &mut acc);
            achieved = sparse::norm(&term) / sparse::norm(&acc).max(f64::MIN_POSITIVE);
            let small = achieved <= opts.tol;
            if small && prev_small {
                converged = true;
                break;
            }
            prev_small = small;
        }
        if !converged {
            return Err(Error::Propagation(format!(
                "Taylor substep did not converge; achieved relative term size {achieved:e}"
            )));
        }
        for (ci, ai) in cur.iter_mut().zip(&acc) {
            *ci = ai * damp;
        }
    }
    Ok(cur)
}

fn dense_step(a: &Csr, tau: f64, v: &[c64]) -> Vec<c64> {
    let d = a.to_dense();
    let e = linalg::expm_c(&(&d * faer::Scale(c64::new(-tau, 0.0))));
    let vm = Mat::from_fn(v.len(), 1, |i, _| v[i]);
    let r = &e * &vm;
    (0..v.len()).map(|i| r[(i, 0)]).collect()
}

pub fn propagate(op: &HermiteOperator, u0: &[c64], times: &[f64]) -> Result<Trajectory> {
    propagate_with(&op.a, u0, times, &PropagateOptions::default())
}

pub fn propagate_with(a: &Csr, u0: &[c64], times: &[f64], opts: &PropagateOptions) -> Result<Trajectory> {
    if u0.len() != a.dim {
        return Err(Error::Shape(format!("state length {} vs operator size {}", u0.len(), a.dim)));
    }
    if times.iter().any(|&t| !(t >= 0.0)) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain("time grid must be sorted and nonnegative".into()));
    }
    let n0 = sparse::norm(u0).max(f64::MIN_POSITIVE);
    let mut states = Vec::with_capacity(times.len());
    let mut norms = Vec::with_capacity(times.len());
    let mut cur = u0.to_vec();
    let mut t_prev = 0.0;
    let mut prev_norm = sparse::norm(u0);
    let mut max_inc = f64::NEG_INFINITY;
    for &t in times {
        let dt = t - t_prev;
        if dt > 0.0 {
            cur = if a.dim <= opts.dense_cap { dense_step(a, dt, &cur) } else { expmv(a, dt, &cur, opts)? };
        }
        let nrm = sparse::norm(&cur);
        max_inc = max_inc.max((nrm - prev_norm) / n0);
        prev_norm = nrm;
        norms.push(nrm);
        states.push(cur.clone());
        t_prev = t;
    }
    Ok(Trajectory { times: times.to_vec(), states, norms, max_norm_increase: max_inc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::galerkin::operator::quantize;
    use crate::symplectic::{harmonic_oscillator, kramers};

    fn first_hermite(d: usize) -> Vec<c64> {
        let mut u = vec![c64::new(0.0, 0.0); d];
        u[0] = c64::new(1.0, 0.0);
        u
    }

    #[test]
    fn oscillator_ground_state_decays_at_one_half() {
        let op = quantize(&harmonic_oscillator(1), 20).unwrap();
        let tr = propagate(&op, &first_hermite(21), &[0.0, 0.5, 2.0]).unwrap();
        assert_eq!(tr.states[0], first_hermite(21));
        for (i, &t) in [0.0f64, 0.5, 2.0].iter().enumerate() {
            assert!((tr.states[i][0].re - (-t / 2.0).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn taylor_route_matches_dense_route() {
        let op = quantize(&kramers(), 12).unwrap();
        let d = op.dim();
        let u: Vec<c64> = (0..d).map(|i| c64::new(1.0 / (1.0 + i as f64), (i % 3) as f64 * 0.1)).collect();
        let times = [0.05, 0.3, 1.0];
        let dense = propagate_with(&op.a, &u, &times, &PropagateOptions { dense_cap: usize::MAX, ..Default::default() }).unwrap();
        let taylor = propagate_with(&op.a, &u, &times, &PropagateOptions { dense_cap: 0, ..Default::default() }).unwrap();
        for k in 0..3 {
            let diff: Vec<c64> = dense.states[k].iter().zip(&taylor.states[k]).map(|(a, b)| a - b).collect();
            assert!(sparse::norm(&diff) < 1e-11 * sparse::norm(&dense.states[k]));
        }
        assert!(taylor.max_norm_increase <= 1e-12);
    }

    #[test]
    fn rejects_unsorted_grid() {
        let op = quantize(&harmonic_oscillator(1), 4).unwrap();
        assert!(matches!(propagate(&op, &first_hermite(5), &[0.5, 0.1]), Err(Error::Domain(_))));
    }
}
