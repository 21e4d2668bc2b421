//! Time-dependent multiplier Q_t for the Kramers symbol and its certificates.
//!
//! cargo run --release --example multiplier

use hypoquad::multiplier::{cauchy_schwarz_margin, log_grid, verify_lemma1, verify_lemma3, TimeQuadraticForm};
use hypoquad::singular::{kernel_chain, RankTol};
use hypoquad::symplectic::kramers;

fn main() -> hypoquad::Result<()> {
    let q = kramers();
    let chain = kernel_chain(&q, RankTol::default())?;
    let form = TimeQuadraticForm::build(&q, &chain)?;
    let c = &form.coeffs;
    println!("k0 = {}, c0 = {:.4}, c1 = {:.4}", c.k0, c.c0, c.c1);
    println!("a = {:?}\nb = {:?}", c.a, c.b);
    println!("sign margins a_j − (2j+2)b_j: {:?}", c.sign_margins());

    let grid = log_grid(1e-4, 1.0, 50);
    let l1 = verify_lemma1(&form, &grid)?;
    println!("lower bound margin ≥ {:.3e} (worst t = {:.1e})", l1.min_relative_margin, l1.worst_t);
    let l3 = verify_lemma3(&form, &grid)?;
    println!(
        "flow-derivative bound: minimal C {:?} ≤ explicit C {:.3e}: {}; routes agree to {:.1e}",
        l3.c_min,
        l3.c_explicit,
        l3.passes(),
        l3.max_route_difference
    );
    for eps in [0.1, 1.0, 10.0] {
        println!("Cauchy–Schwarz margin at ε = {eps}: {:.3e}", cauchy_schwarz_margin(&form, eps));
    }
    Ok(())
}
