//! Kalman rank condition against nonsingularity of the Gram matrix.
//!
//! cargo run --release --example controllability

use faer::Mat;
use hypoquad::ou::{self, Variant};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> hypoquad::Result<()> {
    // noise on v only, drift couples v into x
    let q = Mat::from_fn(2, 2, |i, j| if i == 1 && j == 1 { 2.0 } else { 0.0 });
    let b = Mat::from_fn(2, 2, |i, j| [[0.0, 1.0], [-1.0, -1.0]][i][j]);
    for (name, b) in [("coupled", b.clone()), ("decoupled", Mat::from_fn(2, 2, |i, j| if i == j { -1.0 } else { 0.0 }))] {
        let m = ou::ou_build(&q, &b, Variant::Ou)?;
        let g = ou::gram_matrix(&m, 1.0)?;
        println!(
            "{name}: Kalman rank {} → hypoelliptic {}; G_1 eigenvalues [{:.3e}, {:.3e}], nonsingular {}",
            m.kalman_rank,
            m.hypoelliptic,
            g.lambda_min,
            g.lambda_max,
            g.nonsingular()
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut agree, mut hypo) = (0, 0);
    for _ in 0..200 {
        let n = 1 + (agree % 4);
        let (q, b) = ou::random_pair(&mut rng, n);
        let m = ou::ou_build(&q, &b, Variant::Ou)?;
        agree += usize::from(m.hypoelliptic == ou::gram_matrix(&m, 1.0)?.nonsingular());
        hypo += usize::from(m.hypoelliptic);
    }
    println!("random pairs: {agree}/200 verdicts agree ({hypo} hypoelliptic)");
    Ok(())
}
