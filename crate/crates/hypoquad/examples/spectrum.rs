//! Spectrum lattice from the Hamilton map against Galerkin eigenvalues.
//!
//! cargo run --release --example spectrum

use hypoquad::galerkin::spectrum::match_distance;
use hypoquad::galerkin::{galerkin_eigenvalues, quantize, spectrum_bottom};
use hypoquad::symplectic::kramers;

fn main() -> hypoquad::Result<()> {
    let q = kramers();
    let head = spectrum_bottom(&q, 6)?;
    println!("ω0 = {:.6}, modes:", head.omega0);
    for m in &head.modes {
        println!("  −iλ = {:.6} {:+.6}i  (×{})", m.value.0, m.value.1, m.multiplicity);
    }
    for nmax in [16, 32] {
        let ev = galerkin_eigenvalues(&quantize(&q, nmax)?)?;
        println!("N = {nmax}: lattice head vs Galerkin {:.2e}", match_distance(&head.lattice, &ev));
        for z in &ev[..6] {
            println!("  {:.6} {:+.6}i", z.re, z.im);
        }
    }
    Ok(())
}
