//! Operator norms ‖L_X e^{-tA}‖ on the truncated space, by power iteration on
//! K*K. Unlike norms along one smooth trajectory, these see the worst data
//! and exhibit the t^{-(2k+1)/2} short-time rates.
//!
//! cargo run --release --example operator_rates [N]

use hypoquad::c64;
use hypoquad::galerkin::propagate::expmv;
use hypoquad::galerkin::{decay_exponent, linear_observable, quantize, random_state, sparse, Amplitude, PropagateOptions};
use hypoquad::multiplier::log_grid;
use hypoquad::singular::{direction_index, kernel_chain, RankTol};
use hypoquad::symplectic::{kramers, PhaseVector};
use rayon::prelude::*;

const LABELS: [&str; 4] = ["x", "v", "ξ", "η"];

fn main() -> hypoquad::Result<()> {
    let nmax = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(64);
    let q = kramers();
    let chain = kernel_chain(&q, RankTol::default())?;
    let op = quantize(&q, nmax)?;
    let adj = op.a.adjoint();
    let opts = PropagateOptions::default();
    let times = log_grid(10f64.powf(-2.5), 0.1, 8);
    println!("N = {nmax}, t ∈ [{:.2e}, {}]", times[0], times[7]);
    for (i, l) in LABELS.iter().enumerate() {
        let x0 = PhaseVector::basis(2, i);
        let obs = linear_observable(&x0, nmax)?.a;
        let obs_adj = obs.adjoint();
        let norms: Vec<(f64, f64)> = times
            .par_iter()
            .map(|&t| -> hypoquad::Result<(f64, f64)> {
                let mut v = random_state(&op.basis, 0.0, Amplitude::Gaussian, 5);
                let mut est = 0.0;
                for _ in 0..40 {
                    let nv = sparse::norm(&v);
                    v.iter_mut().for_each(|z| *z /= c64::new(nv, 0.0));
                    let w = obs.apply(&expmv(&op.a, t, &v, &opts)?);
                    est = sparse::norm(&w);
                    v = expmv(&adj, t, &obs_adj.apply(&w), &opts)?;
                }
                Ok((t, est))
            })
            .collect::<hypoquad::Result<_>>()?;
        let fit = decay_exponent(&norms, (times[0], times[7]))?;
        let k = direction_index(&chain, &x0)?;
        println!("e_{l}: index {k}, slope {:.3} (r² {:.4}) vs −{}/2", fit.slope, fit.r2, 2 * k + 1);
    }
    Ok(())
}
