//! Subelliptic ratios over random ensembles at increasing truncation.
//!
//! cargo run --release --example subelliptic

use hypoquad::galerkin::subelliptic::{subelliptic_ratio, Target};
use hypoquad::symplectic::kramers;

fn main() -> hypoquad::Result<()> {
    let q = kramers();
    for target in [Target::Global, Target::Lambda(0), Target::Lambda(1)] {
        for nmax in [16, 32, 64] {
            let r = subelliptic_ratio(&q, target, 100, nmax, 1)?;
            println!(
                "{:>9} N = {nmax:>2}: exponent {:.3}, max {:.4}, median {:.4}",
                r.target, r.exponent, r.max_ratio, r.median_ratio
            );
        }
    }
    Ok(())
}
