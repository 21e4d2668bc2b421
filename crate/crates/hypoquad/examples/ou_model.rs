//! Kramers as an Ornstein–Uhlenbeck model: invariant measure, conjugated
//! symbol, index agreement and the Gaussian oracle.
//!
//! cargo run --release --example ou_model

use hypoquad::c64;
use hypoquad::galerkin::{project_gaussian, propagate, quantize, sparse, spectrum_bottom, HermiteBasis};
use hypoquad::linalg::RMat;
use hypoquad::ou::{self, GaussianState};

fn main() -> hypoquad::Result<()> {
    let m = ou::kramers_model();
    println!("Kalman rank {}, k0 = {:?}, stability {:?}", m.kalman_rank, m.k0, m.stability);
    println!("Q∞ = {:?}, Lyapunov residual {:.1e}", m.qinf, m.lyapunov_residual.unwrap());

    let q = ou::conjugated_symbol(&m)?;
    println!("conjugated symbol M = {:?}", q.m);
    println!("ω0 = {:.6}, −½Tr B = {:.6}", spectrum_bottom(&q, 1)?.omega0, -0.5 * m.trace_b());
    for row in ou::index_table(&m, &q)? {
        println!("  {}: OU index {}, symbol index {}", row.label, row.ou_index, row.symbol_index);
    }
    for j in 0..=m.k0.unwrap() {
        let g = ou::lambda_generators(&m, j)?;
        println!("  j = {j}: symbol residual {:.1e}, sign identity {:.1e}", g.symbol_residual, g.sign_residual);
    }

    let nmax = 48;
    let basis = HermiteBasis::new(2, nmax);
    let g = GaussianState::new(vec![0.3, -0.2], RMat::identity(2, 2), 1.0)?;
    let (m0, p0, a0) = ou::sqrt_rho_times(&m, &g)?;
    let u0 = project_gaussian(&basis, &m0, &p0, a0)?;
    let times = [0.1, 0.5, 1.0];
    let traj = propagate(&quantize(&q, nmax)?, &u0, &times)?;
    for (&t, u) in times.iter().zip(&traj.states) {
        let (m1, p1, a1) = ou::conjugated_gaussian_solution(&m, &g, t)?;
        let exact = project_gaussian(&basis, &m1, &p1, a1)?;
        let d: Vec<c64> = exact.iter().zip(u).map(|(a, b)| a - b).collect();
        println!("t = {t}: Galerkin vs Kolmogorov relative error {:.2e}", sparse::norm(&d) / sparse::norm(&exact));
    }
    Ok(())
}
