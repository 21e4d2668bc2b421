//! Directional norms ‖L_X e^{-tA} u0‖ and their fitted power laws.
//!
//! cargo run --release --example decay [N]

use hypoquad::galerkin::decay::{exponential_rate, observable_norms};
use hypoquad::galerkin::{decay_exponent, linear_observable, propagate, quantize, random_state, sparse, spectrum_bottom, Amplitude};
use hypoquad::multiplier::log_grid;
use hypoquad::singular::{direction_index, kernel_chain, RankTol};
use hypoquad::symplectic::{kramers, PhaseVector};

const LABELS: [&str; 4] = ["x", "v", "ξ", "η"];

fn main() -> hypoquad::Result<()> {
    let nmax = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(48);
    let q = kramers();
    let chain = kernel_chain(&q, RankTol::default())?;
    let op = quantize(&q, nmax)?;
    let u0 = random_state(&op.basis, 2.0, Amplitude::Exact, 1);

    let short = log_grid(10f64.powf(-2.5), 0.1, 16);
    let long: Vec<f64> = (0..12).map(|i| 1.0 + i as f64).collect();
    let ts = propagate(&op, &u0, &short)?;
    let tl = propagate(&op, &u0, &long)?;
    let omega0 = spectrum_bottom(&q, 1)?.omega0;
    println!("N = {nmax}, dim {}", op.dim());
    for (i, l) in LABELS.iter().enumerate() {
        let x0 = PhaseVector::basis(2, i);
        let obs = linear_observable(&x0, nmax)?;
        let k = direction_index(&chain, &x0)?;
        let fit = decay_exponent(&observable_norms(&obs, &ts, sparse::norm(&u0)), (short[0], 0.1))?;
        let (rate, _) = exponential_rate(&observable_norms(&obs, &tl, sparse::norm(&u0)))?;
        println!(
            "e_{l}: index {k}, short-time slope {:.3} (r² {:.3}, bound exponent −{}/2); large-time rate {rate:.3} (−ω0 = {:.3})",
            fit.slope,
            fit.r2,
            2 * k + 1,
            -omega0
        );
    }
    Ok(())
}
