//! Defect of L_X e^{-tA} = e^{-tA} L_{T_t X} on the truncated space.
//!
//! cargo run --release --example commutation

use hypoquad::galerkin::commutation::{commutation_defect, transported_direction};
use hypoquad::symplectic::{harmonic_oscillator, kramers, PhaseVector};

fn main() -> hypoquad::Result<()> {
    let ho = harmonic_oscillator(1);
    let x = PhaseVector::basis(1, 0);
    let d = commutation_defect(&ho, &x, 0.3, 32)?;
    println!("oscillator, X = e_x, t = 0.3: defect {:.2e} (interior {:.2e})", d.full, d.interior);

    let q = kramers();
    let x = PhaseVector::basis(2, 0);
    let tx = transported_direction(&q, &x, 0.2)?;
    let coords: Vec<String> = tx.x().iter().chain(tx.xi()).map(|z| format!("{:.4}{:+.4}i", z.re, z.im)).collect();
    println!("Kramers T_t e_x at t = 0.2: ({})", coords.join(", "));
    for nmax in [8, 16, 32] {
        let d = commutation_defect(&q, &x, 0.2, nmax)?;
        println!("  N = {nmax}: defect {:.3e}, interior {:.3e}", d.full, d.interior);
    }
    Ok(())
}
