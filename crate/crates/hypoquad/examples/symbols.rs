//! Quadratic symbols, their Hamilton maps and Poisson brackets.
//!
//! cargo run --release --example symbols

use hypoquad::linalg;
use hypoquad::symplectic::{hamilton_map, harmonic_oscillator, kramers, poisson_bracket, PhaseVector};

fn main() -> hypoquad::Result<()> {
    let q = kramers();
    println!("Kramers symbol, n = {}, accretive = {}", q.n, q.accretive);
    println!("M =\n{:?}", q.m);

    let f = hamilton_map(&q)?;
    println!("Hamilton map F = JM:\n{:?}", f.f);
    println!("σ-skew defect {:.2e} (threshold {:.2e})", f.skew_defect(), f.eps_sym());

    // q(X) at X = e_x + e_η
    let x = PhaseVector::real(&[1.0, 0.0, 0.0, 1.0])?;
    println!("q(e_x + e_η) = {}", q.evaluate(&x)?);

    // {q, |X|²/2}: the oscillator generates rotations in each (x_j, ξ_j) plane
    let b = poisson_bracket(&q, &harmonic_oscillator(2))?;
    println!("{{q, p}} with p the oscillator has max |entry| {:.3}", linalg::max_abs_c(&b.m));
    Ok(())
}
