//! Singular space S = ∩ⱼ Ker[Re F (Im F)ʲ] ∩ ℝ²ⁿ, the chain V₀ ⊂ V₁ ⊂ …,
//! directional indices, the forms r_k and the symplectic splitting.

use faer::{c64, Mat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, RMat};
use crate::symplectic::{self, hamilton_map, PhaseVector, QuadraticSymbol};

pub const RANK_FACTOR: f64 = 1e-12;
pub const MEMBERSHIP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RankTol {
    /// Threshold 2n·σ_max·factor on the singular values of each stacked matrix.
    Relative(f64),
    Absolute(f64),
}

impl Default for RankTol {
    fn default() -> Self {
        RankTol::Relative(RANK_FACTOR)
    }
}

#[derive(Debug, Clone)]
pub struct SubspaceChain {
    pub n: usize,
    /// First k with trivial kernel intersection; `None` when S ≠ {0}.
    pub k0: Option<usize>,
    /// V_k for k = 0..=last (last = k0, or 2n−1 when S ≠ {0}).
    pub bases: Vec<RMat>,
    pub kernel_bases: Vec<RMat>,
    pub s_basis: RMat,
    /// Threshold actually used at each k.
    pub rank_tol: Vec<f64>,
    pub warnings: Vec<String>,
}

impl SubspaceChain {
    pub fn s_trivial(&self) -> bool {
        self.k0.is_some()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.bases.iter().map(|b| b.ncols()).collect()
    }

    /// Index of the last computed chain element.
    pub fn last(&self) -> usize {
        self.bases.len() - 1
    }
}

pub fn kernel_chain(q: &QuadraticSymbol, rank_tol: RankTol) -> Result<SubspaceChain> {
    if !q.accretive {
        return Err(Error::Precondition("kernel chain requires an accretive symbol".into()));
    }
    let n = q.n;
    let d = 2 * n;
    let h = hamilton_map(q)?;
    let (ref_, imf) = (h.re_f(), h.im_f());

    let mut stacked = RMat::zeros(0, d);
    let mut block = ref_.clone();
    let mut chain = SubspaceChain {
        n,
        k0: None,
        bases: vec![],
        kernel_bases: vec![],
        s_basis: RMat::zeros(d, 0),
        rank_tol: vec![],
        warnings: vec![],
    };
    for k in 0..d {
        stacked = linalg::vstack(&stacked, &block);
        let sv = linalg::singular_values_padded(&stacked);
        let tol = match rank_tol {
            RankTol::Relative(f) => d as f64 * sv[0] * f,
            RankTol::Absolute(t) => t,
        };
        if sv.iter().any(|&s| s >= tol / 10.0 && s <= 10.0 * tol && s > 0.0) {
            chain.warnings.push(format!("ill-conditioned rank decision at k = {k} (threshold {tol:e})"));
        }
        let ker = linalg::null_space(&stacked, tol);
        let v = linalg::orth_complement(&ker, d);
        chain.rank_tol.push(tol);
        chain.kernel_bases.push(ker.clone());
        chain.bases.push(v);
        if ker.ncols() == 0 {
            chain.k0 = Some(k);
            break;
        }
        block = &block * &imf;
    }
    chain.s_basis = chain.kernel_bases.last().unwrap().clone();
    Ok(chain)
}

pub fn direction_index(chain: &SubspaceChain, x0: &PhaseVector) -> Result<usize> {
    direction_index_tol(chain, x0, MEMBERSHIP_TOL)
}

pub fn direction_index_tol(chain: &SubspaceChain, x0: &PhaseVector, tol: f64) -> Result<usize> {
    if x0.n != chain.n {
        return Err(Error::Shape(format!("direction has n = {}, chain has n = {}", x0.n, chain.n)));
    }
    if !x0.is_real() {
        return Err(Error::NotApplicable("direction index is defined for real directions".into()));
    }
    let nrm = x0.norm();
    if nrm == 0.0 {
        return Err(Error::DegenerateDirection("X0 = 0".into()));
    }
    let x: Vec<f64> = x0.real_part().iter().map(|v| v / nrm).collect();
    for (k, v) in chain.bases.iter().enumerate() {
        if linalg::dist_to_span(&x, v) <= tol {
            return Ok(k);
        }
    }
    Err(Error::NotApplicable(format!(
        "direction is not in V_{} (singular space is nontrivial)",
        chain.last()
    )))
}

#[derive(Debug, Clone)]
pub struct DefectForms {
    /// R_k for k = 0..=chain.last().
    pub r: Vec<RMat>,
    /// λ_min(R_{k0}) when S = {0}.
    pub c0: Option<f64>,
    /// Largest principal-angle sine between Ker R_k and the chain kernels.
    pub kernel_gap: f64,
}

/// R_k = Σ_{j≤k} ((Im F)ʲ)ᵀ Re M (Im F)ʲ.
pub fn r_matrices(q: &QuadraticSymbol, kmax: usize) -> Result<Vec<RMat>> {
    let imf = hamilton_map(q)?.im_f();
    let rem = q.re_m();
    let d = 2 * q.n;
    let mut p = RMat::identity(d, d);
    let mut acc = RMat::zeros(d, d);
    let mut out = vec![];
    for _ in 0..=kmax {
        acc = &acc + p.transpose() * &rem * &p;
        out.push(linalg::sym(&acc));
        p = &p * &imf;
    }
    Ok(out)
}

pub fn defect_forms(q: &QuadraticSymbol, chain: &SubspaceChain) -> Result<DefectForms> {
    if !q.accretive {
        return Err(Error::Precondition("defect forms require an accretive symbol".into()));
    }
    let r = r_matrices(q, chain.last())?;
    let d = 2 * q.n;
    let mut gap: f64 = 0.0;
    for (k, rk) in r.iter().enumerate() {
        let (ev, u) = linalg::sym_eig(rk);
        let top = ev.last().copied().unwrap_or(0.0).abs();
        let tol = 1e-10 * top.max(f64::MIN_POSITIVE);
        let idx: Vec<usize> = (0..d).filter(|&i| ev[i] <= tol).collect();
        let ker = Mat::from_fn(d, idx.len(), |i, j| u[(i, idx[j])]);
        gap = gap.max(linalg::subspace_gap(&ker, &chain.kernel_bases[k]));
    }
    let c0 = match chain.k0 {
        Some(k0) => {
            let c0 = linalg::lambda_min(&r[k0]);
            if c0 <= chain.rank_tol[k0] {
                return Err(Error::Inconsistency(format!("c0 = {c0:e} but the chain reports S = {{0}}")));
            }
            Some(c0)
        }
        None => None,
    };
    Ok(DefectForms { r, c0, kernel_gap: gap })
}

#[derive(Debug, Clone)]
pub struct SymplecticSplit {
    pub s_symplectic: bool,
    /// Columns (ẽ₁..ẽ_m, ε̃₁..ε̃_m) of a symplectic basis of S.
    pub basis_s: RMat,
    /// Columns (e₁..e_p, ε₁..ε_p) of a symplectic basis of S^{σ⊥}.
    pub basis_sperp: RMat,
    pub q_restricted: Option<QuadraticSymbol>,
    pub imq_restricted: Option<QuadraticSymbol>,
    /// Rank of σ restricted to S.
    pub sigma_rank: usize,
    pub splitting_residual: f64,
}

/// Symplectic Gram–Schmidt with pivoting on |σ|. Columns of `w` must span a
/// symplectic subspace; returns (e₁..e_m, ε₁..ε_m) with σ(ε_j, e_k) = δ_jk.
fn symplectic_gram_schmidt(w: &RMat) -> Result<RMat> {
    let d = w.nrows();
    let mut vecs: Vec<Vec<f64>> = (0..w.ncols()).map(|j| (0..d).map(|i| w[(i, j)]).collect()).collect();
    let mut es = vec![];
    let mut eps = vec![];
    while !vecs.is_empty() {
        let mut best = (0, 0, 0.0f64);
        for a in 0..vecs.len() {
            for b in 0..vecs.len() {
                let s = symplectic::sigma(&vecs[b], &vecs[a]);
                if s.abs() > best.2.abs() {
                    best = (a, b, s);
                }
            }
        }
        if best.2.abs() < 1e-10 {
            return Err(Error::Inconsistency("symplectic Gram-Schmidt met a degenerate pair".into()));
        }
        let (a, b, s) = best;
        let e = vecs[a].clone();
        let f: Vec<f64> = vecs[b].iter().map(|v| v / s).collect();
        let mut rest: Vec<Vec<f64>> = vec![];
        for (i, v) in vecs.iter().enumerate() {
            if i == a || i == b {
                continue;
            }
            let se = symplectic::sigma(v, &e);
            let sf = symplectic::sigma(v, &f);
            let u: Vec<f64> = (0..d).map(|k| v[k] + sf * e[k] - se * f[k]).collect();
            rest.push(u);
        }
        es.push(e);
        eps.push(f);
        vecs = rest;
    }
    let m = es.len();
    Ok(Mat::from_fn(d, 2 * m, |i, j| if j < m { es[j][i] } else { eps[j - m][i] }))
}

fn sigma_gram(basis: &RMat) -> RMat {
    let d = basis.nrows();
    let col = |j: usize| -> Vec<f64> { (0..d).map(|i| basis[(i, j)]).collect() };
    Mat::from_fn(basis.ncols(), basis.ncols(), |i, j| symplectic::sigma(&col(i), &col(j)))
}

/// Checks σ(ε_j, e_k) = δ_jk and the vanishing pairings; returns the max defect.
pub fn symplectic_basis_defect(basis: &RMat) -> f64 {
    let m = basis.ncols() / 2;
    let g = sigma_gram(basis);
    let mut worst: f64 = 0.0;
    for a in 0..2 * m {
        for b in 0..2 * m {
            let want = if a >= m && b + m == a {
                1.0
            } else if a < m && b == a + m {
                -1.0
            } else {
                0.0
            };
            worst = worst.max((g[(a, b)] - want).abs());
        }
    }
    worst
}

pub fn symplectic_split(q: &QuadraticSymbol, chain: &SubspaceChain) -> Result<SymplecticSplit> {
    let n = q.n;
    let d = 2 * n;
    let s = &chain.s_basis;
    let ds = s.ncols();
    let g = sigma_gram(s);
    let sv = linalg::singular_values_padded(&g);
    let sigma_rank = sv.iter().filter(|&&v| v > 1e-10).count();
    let symplectic_s = sigma_rank == ds;
    if !symplectic_s {
        return Ok(SymplecticSplit {
            s_symplectic: false,
            basis_s: RMat::zeros(d, 0),
            basis_sperp: RMat::zeros(d, 0),
            q_restricted: None,
            imq_restricted: None,
            sigma_rank,
            splitting_residual: f64::NAN,
        });
    }

    let h = hamilton_map(q)?;
    let scale = 1.0 + linalg::norm2_c(&h.f);
    if ds > 0 {
        let refs = h.re_f() * s;
        let ims = h.im_f() * s;
        let leak = &ims - s * (s.transpose() * &ims);
        let (a, b) = (linalg::max_abs(&refs), linalg::max_abs(&leak));
        if a > 1e-9 * scale || b > 1e-9 * scale {
            return Err(Error::Inconsistency(format!(
                "stability relations fail: |Re F S| = {a:e}, |(I − Π_S) Im F S| = {b:e}"
            )));
        }
    }

    let basis_s = if ds > 0 { symplectic_gram_schmidt(s)? } else { RMat::zeros(d, 0) };
    // S^{σ⊥} = Ker (Sᵀ J) — σ(Y, s) = Yᵀ J s = 0 for all s.
    let jt = linalg::j_matrix(n);
    let constraint = (&jt * s).transpose().to_owned();
    let sperp = linalg::null_space(&constraint, 1e-10);
    let basis_sperp = if sperp.ncols() > 0 { symplectic_gram_schmidt(&sperp)? } else { RMat::zeros(d, 0) };

    let restrict = |p: &RMat, m: &RMat| -> RMat { linalg::sym(&(p.transpose() * m * p)) };
    let q_restricted = if basis_sperp.ncols() > 0 {
        let m = basis_sperp.ncols() / 2;
        let re = restrict(&basis_sperp, &q.re_m());
        let im = restrict(&basis_sperp, &q.im_m());
        Some(QuadraticSymbol::from_parts(m, &re, &im)?)
    } else {
        None
    };
    let imq_restricted = if ds > 0 {
        Some(QuadraticSymbol::real(ds / 2, &restrict(&basis_s, &q.im_m()))?)
    } else {
        None
    };

    // Splitting check on random X: decompose X = P y + P_S z.
    let full = linalg::hstack(&basis_sperp, &basis_s);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut resid: f64 = 0.0;
    for _ in 0..100 {
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let xm = Mat::from_fn(d, 1, |i, _| x[i]);
        let coords = linalg::solve(&full, &xm);
        let np = basis_sperp.ncols();
        let lhs = q.evaluate(&PhaseVector::real(&x)?)?;
        let mut rhs = c64::new(0.0, 0.0);
        if let Some(qr) = &q_restricted {
            let y: Vec<f64> = (0..np).map(|i| coords[(i, 0)]).collect();
            rhs += qr.evaluate(&PhaseVector::real(&y)?)?;
        }
        if let Some(ir) = &imq_restricted {
            let z: Vec<f64> = (np..d).map(|i| coords[(i, 0)]).collect();
            rhs += c64::new(0.0, 1.0) * ir.evaluate(&PhaseVector::real(&z)?)?;
        }
        let x2: f64 = x.iter().map(|v| v * v).sum();
        resid = resid.max((lhs - rhs).norm() / (1.0 + x2));
    }
    if resid > 1e-10 * scale {
        return Err(Error::Inconsistency(format!("splitting residual {resid:e}")));
    }

    Ok(SymplecticSplit {
        s_symplectic: true,
        basis_s,
        basis_sperp,
        q_restricted,
        imq_restricted,
        sigma_rank,
        splitting_residual: resid,
    })
}
