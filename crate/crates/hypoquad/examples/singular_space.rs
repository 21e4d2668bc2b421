//! Kernel chain V_0 ⊂ V_1 ⊂ …, the singular space S and direction indices.
//!
//! cargo run --release --example singular_space

use std::path::Path;

use hypoquad::io::{parse_symbol, read_text};
use hypoquad::singular::{defect_forms, direction_index, kernel_chain, symplectic_split, RankTol};
use hypoquad::symplectic::{kramers, PhaseVector};

const LABELS: [&str; 4] = ["x", "v", "ξ", "η"];

fn main() -> hypoquad::Result<()> {
    let q = kramers();
    let chain = kernel_chain(&q, RankTol::default())?;
    println!("Kramers: dim V_k = {:?}, k0 = {:?}", chain.dims(), chain.k0);
    for (i, l) in LABELS.iter().enumerate() {
        let k = direction_index(&chain, &PhaseVector::basis(2, i))?;
        println!("  index of e_{l} = {k}  (short-time rate t^-{}/2)", 2 * k + 1);
    }
    let forms = defect_forms(&q, &chain)?;
    println!("  λ_min(R_k0) = {:.4}, kernel gap {:.1e}", forms.c0.unwrap_or(f64::NAN), forms.kernel_gap);

    // iξ²: no dissipation at all, S is the whole (symplectic) phase plane
    let text = read_text(Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/data/imaginary-xi-squared.json")))?;
    let q = parse_symbol(&text)?;
    let chain = kernel_chain(&q, RankTol::default())?;
    println!("iξ²: k0 = {:?}, dim S = {}", chain.k0, chain.s_basis.ncols());
    let split = symplectic_split(&q, &chain)?;
    println!("  S symplectic: {}, σ|S rank {}, splitting residual {:.1e}", split.s_symplectic, split.sigma_rank, split.splitting_residual);
    Ok(())
}
