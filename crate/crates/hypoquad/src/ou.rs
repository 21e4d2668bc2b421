//! Ornstein–Uhlenbeck and Fokker–Planck models P = ½Tr(Q∇²) + ⟨Bx,∇⟩: Kalman
//! structure, Gramians, the invariant covariance, and the quadratic symbol of the
//! operator conjugated to flat L².

use faer::{c64, Mat};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, RMat};
use crate::singular::{direction_index, kernel_chain, RankTol};
use crate::symplectic::{hamilton_map, make_symbol, PhaseVector, QuadraticSymbol};

pub const PSD_TOL: f64 = 1e-10;
pub const SPEC_TOL: f64 = 1e-9;
pub const KALMAN_RANK_TOL: f64 = 1e-10;
pub const LYAPUNOV_TOL: f64 = 1e-10;
pub const GRAM_ROUTE_TOL: f64 = 1e-10;
pub const IDENTITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Ou,
    FokkerPlanck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
    /// Some eigenvalue of B within SPEC_TOL of the imaginary axis.
    Undecidable,
}

#[derive(Debug, Clone)]
pub struct OUModel {
    pub n: usize,
    pub qdiff: RMat,
    pub b: RMat,
    pub variant: Variant,
    pub q_half: RMat,
    pub kalman_rank: usize,
    pub hypoelliptic: bool,
    pub k0: Option<usize>,
    pub stability: Stability,
    pub qinf: Option<RMat>,
    pub lyapunov_residual: Option<f64>,
}

impl OUModel {
    pub fn trace_b(&self) -> f64 {
        (0..self.n).map(|i| self.b[(i, i)]).sum()
    }

    pub fn require_qinf(&self) -> Result<&RMat> {
        self.qinf.as_ref().ok_or_else(|| {
            Error::NoInvariantMeasure(format!("σ(B) ⊄ ℂ₋ (stability: {:?}); no invariant measure", self.stability))
        })
    }

    fn require_hypoelliptic(&self) -> Result<usize> {
        self.k0
            .ok_or_else(|| Error::Precondition(format!("model is not hypoelliptic (Kalman rank {} < {})", self.kalman_rank, self.n)))
    }
}

/// PSD square root. Eigenvalues within PSD_TOL·scale of zero (either sign) are
/// set to zero: √ would lift roundoff of size ε to √ε and fake extra rank.
pub fn psd_sqrt(q: &RMat) -> Result<RMat> {
    let (ev, u) = linalg::sym_eig(q);
    let scale = 1.0 + ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if let Some(&bad) = ev.iter().find(|&&v| v < -PSD_TOL * scale) {
        return Err(Error::RejectedInput(format!("diffusion matrix is not positive semidefinite (eigenvalue {bad:.3e})")));
    }
    let d = Mat::from_fn(ev.len(), ev.len(), |i, j| if i == j && ev[i] > PSD_TOL * scale { ev[i].sqrt() } else { 0.0 });
    Ok(linalg::sym(&(&u * &d * u.transpose())))
}

/// [Q½, BQ½, …, BᵏQ½].
pub fn kalman_matrix(b: &RMat, q_half: &RMat, k: usize) -> RMat {
    let mut out = q_half.clone();
    let mut p = q_half.clone();
    for _ in 0..k {
        p = b * &p;
        out = linalg::hstack(&out, &p);
    }
    out
}

fn rank_tol(a: &RMat) -> f64 {
    let s = linalg::singular_values_padded(a);
    KALMAN_RANK_TOL * s.first().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE)
}

/// Orthonormal basis of 𝒱_k = Ran Q½ + … + Ran BᵏQ½.
pub fn v_space(model: &OUModel, k: usize) -> RMat {
    let km = kalman_matrix(&model.b, &model.q_half, k);
    let full = kalman_matrix(&model.b, &model.q_half, model.n.saturating_sub(1));
    linalg::range_basis(&km, rank_tol(&full))
}

/// Orthonormal basis of Ran Q∞⁻¹Q½ + Ran BᵀQ∞⁻¹Q½ + … + Ran (Bᵀ)ᵏQ∞⁻¹Q½.
pub fn v_tilde_space(model: &OUModel, k: usize) -> Result<RMat> {
    let qinv = linalg::inverse(model.require_qinf()?);
    let start = &qinv * &model.q_half;
    let bt = model.b.transpose().to_owned();
    let km = kalman_matrix(&bt, &start, k);
    let full = kalman_matrix(&bt, &start, model.n.saturating_sub(1));
    Ok(linalg::range_basis(&km, rank_tol(&full)))
}

fn classify(b: &RMat) -> Result<Stability> {
    let ev = b.eigenvalues().map_err(|e| Error::Inconsistency(format!("eigensolver: {e:?}")))?;
    let mut st = Stability::Stable;
    for l in ev {
        if l.re.abs() <= SPEC_TOL {
            return Ok(Stability::Undecidable);
        }
        if l.re > 0.0 {
            st = Stability::Unstable;
        }
    }
    Ok(st)
}

/// Solves Q + BX + XBᵀ = 0 through the Kronecker form (I⊗B + B⊗I) vec X = −vec Q.
pub fn lyapunov(b: &RMat, q: &RMat) -> Result<(RMat, f64)> {
    let n = b.nrows();
    let k = Mat::from_fn(n * n, n * n, |r, c| {
        let (i, j) = (r % n, r / n);
        let (p, l) = (c % n, c / n);
        let mut v = 0.0;
        if l == j {
            v += b[(i, p)];
        }
        if p == i {
            v += b[(j, l)];
        }
        v
    });
    let rhs = Mat::from_fn(n * n, 1, |r, _| -q[(r % n, r / n)]);
    let sol = linalg::solve(&k, &rhs);
    let x = linalg::sym(&Mat::from_fn(n, n, |i, j| sol[(i + n * j, 0)]));
    if !x.col_iter().all(|c| c.iter().all(|v| v.is_finite())) {
        return Err(Error::Inconsistency("Lyapunov solve produced non-finite entries".into()));
    }
    let res = q + b * &x + &x * b.transpose();
    let rel = linalg::max_abs(&res) / (1.0 + linalg::max_abs(&x));
    Ok((x, rel))
}

pub fn ou_build(qdiff: &RMat, b: &RMat, variant: Variant) -> Result<OUModel> {
    let n = qdiff.nrows();
    if n == 0 || qdiff.ncols() != n || b.nrows() != n || b.ncols() != n {
        return Err(Error::Shape(format!(
            "Q is {}×{}, B is {}×{}",
            qdiff.nrows(),
            qdiff.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let all = |m: &RMat| m.col_iter().all(|c| c.iter().all(|v| v.is_finite()));
    if !all(qdiff) || !all(b) {
        return Err(Error::RejectedInput("non-finite matrix entry".into()));
    }
    let asym = linalg::max_abs(&(qdiff - qdiff.transpose()));
    if asym > 1e-12 * (1.0 + linalg::max_abs(qdiff)) {
        return Err(Error::RejectedInput(format!("diffusion matrix is not symmetric (defect {asym:.3e})")));
    }
    let qdiff = linalg::sym(qdiff);
    let q_half = psd_sqrt(&qdiff)?;
    let full = kalman_matrix(b, &q_half, n - 1);
    let tol = rank_tol(&full);
    let rank_of = |k: usize| linalg::range_basis(&kalman_matrix(b, &q_half, k), tol).ncols();
    let kalman_rank = rank_of(n - 1);
    let hypoelliptic = kalman_rank == n;
    let k0 = if hypoelliptic { (0..n).find(|&k| rank_of(k) == n) } else { None };
    let stability = classify(b)?;
    let (qinf, lyapunov_residual) = if stability == Stability::Stable {
        let (x, r) = lyapunov(b, &qdiff)?;
        (Some(x), Some(r))
    } else {
        (None, None)
    };
    Ok(OUModel { n, qdiff, b: b.clone(), variant, q_half, kalman_rank, hypoelliptic, k0, stability, qinf, lyapunov_residual })
}

// Gauss–Kronrod 7/15 nodes and weights on [−1, 1].
const GK_X: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const GK_WK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const GK_WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &dyn Fn(f64) -> RMat, a: f64, b: f64) -> (RMat, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = &fc * GK_WK[7];
    let mut g = &fc * GK_WG[3];
    for i in 0..7 {
        let s = f(c - h * GK_X[i]) + f(c + h * GK_X[i]);
        k = &k + &s * GK_WK[i];
        if i % 2 == 1 {
            g = &g + &s * GK_WG[i / 2];
        }
    }
    let k = &k * h;
    let g = &g * h;
    let err = linalg::max_abs(&(&k - &g));
    (k, err)
}

/// Adaptive Gauss–Kronrod integral of a matrix-valued function.
pub fn integrate(f: &dyn Fn(f64) -> RMat, a: f64, b: f64, tol: f64) -> RMat {
    let mut stack = vec![(a, b, 0usize)];
    let mut total: Option<RMat> = None;
    while let Some((lo, hi, depth)) = stack.pop() {
        let (v, err) = gk15(f, lo, hi);
        if err <= tol * (hi - lo) / (b - a) || depth >= 30 {
            total = Some(match total {
                Some(t) => &t + &v,
                None => v,
            });
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((mid, hi, depth + 1));
            stack.push((lo, mid, depth + 1));
        }
    }
    total.expect("at least one panel")
}

/// G_t = ∫₀ᵗ e^{sB} Q e^{sBᵀ} ds through the block exponential of [[−B, Q], [0, Bᵀ]]·t.
pub fn gram_block_exponential(b: &RMat, q: &RMat, t: f64) -> RMat {
    let n = b.nrows();
    let c = Mat::from_fn(2 * n, 2 * n, |i, j| match (i < n, j < n) {
        (true, true) => -b[(i, j)] * t,
        (true, false) => q[(i, j - n)] * t,
        (false, true) => 0.0,
        (false, false) => b[(j - n, i - n)] * t,
    });
    let e = linalg::expm(&c);
    let f22 = Mat::from_fn(n, n, |i, j| e[(n + i, n + j)]);
    let g12 = Mat::from_fn(n, n, |i, j| e[(i, n + j)]);
    linalg::sym(&(f22.transpose() * g12))
}

pub fn gram_quadrature(b: &RMat, q: &RMat, t: f64) -> RMat {
    let scale = 1.0 + linalg::max_abs(q);
    let f = |s: f64| {
        let e = linalg::expm(&linalg::scale(b, s));
        &e * q * e.transpose()
    };
    linalg::sym(&integrate(&f, 0.0, t, 1e-13 * scale * t.max(1e-300)))
}

#[derive(Debug, Clone, Serialize)]
pub struct Gram {
    pub t: f64,
    #[serde(skip)]
    pub g: RMat,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub route_difference: f64,
}

impl Gram {
    /// λ_min(G) > n·ε·‖G‖: nonsingularity without forming the determinant.
    pub fn nonsingular(&self) -> bool {
        let n = self.g.nrows() as f64;
        self.lambda_max > 0.0 && self.lambda_min > n * f64::EPSILON * self.lambda_max
    }
}

pub fn gram_matrix(model: &OUModel, t: f64) -> Result<Gram> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("Gramian needs t > 0, got {t}")));
    }
    let g = gram_block_exponential(&model.b, &model.qdiff, t);
    let gq = gram_quadrature(&model.b, &model.qdiff, t);
    let diff = linalg::max_abs(&(&g - &gq)) / (1.0 + linalg::max_abs(&g));
    if diff > GRAM_ROUTE_TOL {
        return Err(Error::Inconsistency(format!("Gramian routes disagree by {diff:.3e}")));
    }
    let (ev, _) = linalg::sym_eig(&g);
    Ok(Gram { t, lambda_min: ev[0], lambda_max: *ev.last().unwrap(), route_difference: diff, g })
}

/// Symbol of the operator conjugated to L²(dx):
/// ½|Q½ξ|² + ⅛|Q½Q∞⁻¹x|² ∓ i⟨(½QQ∞⁻¹ + B)x, ξ⟩ (− for OU, + for Fokker–Planck).
pub fn conjugated_symbol(model: &OUModel) -> Result<QuadraticSymbol> {
    let n = model.n;
    let qinv = linalg::inverse(model.require_qinf()?);
    let drift = &model.qdiff * &qinv * 0.5 + &model.b;
    let mxx = linalg::sym(&(&qinv * &model.qdiff * &qinv * 0.125));
    let mxixi = &model.qdiff * 0.5;
    let sign = match model.variant {
        Variant::Ou => -1.0,
        Variant::FokkerPlanck => 1.0,
    };
    let m = Mat::from_fn(2 * n, 2 * n, |i, j| match (i < n, j < n) {
        (true, true) => c64::new(mxx[(i, j)], 0.0),
        (false, false) => c64::new(mxixi[(i - n, j - n)], 0.0),
        // 2xᵀM_xξ ξ = ∓i ξᵀ C x
        (true, false) => c64::new(0.0, 0.5 * sign * drift[(j - n, i)]),
        (false, true) => c64::new(0.0, 0.5 * sign * drift[(i - n, j)]),
    });
    let q = make_symbol(n, &m)?.with_label(match model.variant {
        Variant::Ou => "ou-conjugated",
        Variant::FokkerPlanck => "fokker-planck-conjugated",
    });
    let f = hamilton_map(&q)?.f;
    let expected = hamilton_block_formula(model)?;
    let defect = linalg::max_abs_c(&(&f - &expected)) / (1.0 + linalg::max_abs_c(&expected));
    // the two routes associate products with Q∞⁻¹ differently
    let cond = linalg::norm2(model.require_qinf()?) * linalg::norm2(&qinv);
    if defect > IDENTITY_TOL * cond.max(1.0) {
        return Err(Error::Inconsistency(format!("Hamilton map deviates from the block formula by {defect:.3e}")));
    }
    if model.hypoelliptic {
        let chain = kernel_chain(&q, RankTol::default())?;
        if chain.k0 != model.k0 {
            return Err(Error::Inconsistency(format!(
                "k0 from the Kalman condition ({:?}) differs from the singular-space chain ({:?})",
                model.k0, chain.k0
            )));
        }
    }
    Ok(q)
}

/// [−(i/4)(QQ∞⁻¹+2B), ½Q; −⅛Q∞⁻¹QQ∞⁻¹, (i/4)(QQ∞⁻¹+2B)ᵀ], conjugated for Fokker–Planck.
pub fn hamilton_block_formula(model: &OUModel) -> Result<CMat> {
    let n = model.n;
    let qinv = linalg::inverse(model.require_qinf()?);
    let c = &model.qdiff * &qinv + &model.b * 2.0;
    let low = &qinv * &model.qdiff * &qinv * (-0.125);
    let s = match model.variant {
        Variant::Ou => 1.0,
        Variant::FokkerPlanck => -1.0,
    };
    Ok(Mat::from_fn(2 * n, 2 * n, |i, j| match (i < n, j < n) {
        (true, true) => c64::new(0.0, -0.25 * s * c[(i, j)]),
        (true, false) => c64::new(0.5 * model.qdiff[(i, j - n)], 0.0),
        (false, true) => c64::new(low[(i - n, j)], 0.0),
        (false, false) => c64::new(0.0, 0.25 * s * c[(j - n, i - n)]),
    }))
}

fn least_k(basis_of: impl Fn(usize) -> Result<RMat>, v: &[f64], k0: usize) -> Result<usize> {
    let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nrm == 0.0 || !nrm.is_finite() {
        return Err(Error::DegenerateDirection("zero direction has no index".into()));
    }
    let u: Vec<f64> = v.iter().map(|x| x / nrm).collect();
    for k in 0..=k0 {
        if linalg::dist_to_span(&u, &basis_of(k)?) <= 1e-8 {
            return Ok(k);
        }
    }
    Err(Error::Inconsistency("direction outside 𝒱_{k0} = ℝⁿ".into()))
}

/// Least k with ξ0 ∈ 𝒱_k.
pub fn frequency_index(model: &OUModel, xi0: &[f64]) -> Result<usize> {
    let k0 = model.require_hypoelliptic()?;
    if xi0.len() != model.n {
        return Err(Error::Shape(format!("ξ0 has length {}, expected {}", xi0.len(), model.n)));
    }
    least_k(|k| Ok(v_space(model, k)), xi0, k0)
}

/// Least k with x0 ∈ Q∞⁻¹𝒱_k.
pub fn space_index(model: &OUModel, x0: &[f64]) -> Result<usize> {
    let k0 = model.require_hypoelliptic()?;
    if x0.len() != model.n {
        return Err(Error::Shape(format!("x0 has length {}, expected {}", x0.len(), model.n)));
    }
    let qinf = model.require_qinf()?.clone();
    let moved: Vec<f64> = (0..model.n).map(|i| (0..model.n).map(|j| qinf[(i, j)] * x0[j]).sum()).collect();
    least_k(|k| Ok(v_space(model, k)), &moved, k0)
}

#[derive(Debug, Clone, Serialize)]
pub struct IndexRow {
    pub label: String,
    pub ou_index: usize,
    pub symbol_index: usize,
}

/// Frequency and space indices of every basis direction next to the
/// direction index of (0, e_j) and (e_j, 0) for the conjugated symbol.
pub fn index_table(model: &OUModel, q: &QuadraticSymbol) -> Result<Vec<IndexRow>> {
    let chain = kernel_chain(q, RankTol::default())?;
    let n = model.n;
    let mut rows = vec![];
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        rows.push(IndexRow {
            label: format!("xi{}", j + 1),
            ou_index: frequency_index(model, &e)?,
            symbol_index: direction_index(&chain, &PhaseVector::basis(n, n + j))?,
        });
        rows.push(IndexRow {
            label: format!("x{}", j + 1),
            ou_index: space_index(model, &e)?,
            symbol_index: direction_index(&chain, &PhaseVector::basis(n, j))?,
        });
    }
    Ok(rows)
}

/// Largest principal-angle sine between 𝒱̃_k and Q∞⁻¹𝒱_k over k ≤ k0.
pub fn lemma31_gap(model: &OUModel) -> Result<f64> {
    let k0 = model.require_hypoelliptic()?;
    let qinv = linalg::inverse(model.require_qinf()?);
    let mut worst: f64 = 0.0;
    for k in 0..=k0 {
        let vt = v_tilde_space(model, k)?;
        let moved = &qinv * v_space(model, k);
        let b = linalg::range_basis(&moved, 1e-12 * linalg::norm2(&moved).max(f64::MIN_POSITIVE));
        worst = worst.max(linalg::subspace_gap(&vt, &b));
    }
    Ok(worst)
}

#[derive(Debug, Clone)]
pub struct LambdaGenerator {
    pub j: usize,
    pub qj: RMat,
    pub bj: RMat,
    /// Residual between the symbol of 𝔏_j and Re q((Im F)ʲ·), relative to ‖Im F‖²ʲ‖Re M‖.
    pub symbol_residual: f64,
    /// Residual of (Q∞⁻¹Q + 2Bᵀ)ʲQ∞⁻¹ = (−1)ʲQ∞⁻¹(QQ∞⁻¹ + 2B)ʲ, relative to the factor norms.
    pub sign_residual: f64,
}

pub fn lambda_generators(model: &OUModel, j: usize) -> Result<LambdaGenerator> {
    let k0 = model.require_hypoelliptic()?;
    if j > k0 {
        return Err(Error::Precondition(format!("j = {j} exceeds k0 = {k0}")));
    }
    let n = model.n;
    let qinv = linalg::inverse(model.require_qinf()?);
    let left = linalg::matpow(&(&model.qdiff * &qinv + &model.b * 2.0), j);
    let right = linalg::matpow(&(&qinv * &model.qdiff + model.b.transpose() * 2.0), j);
    let w = 2f64.powi(-4 * j as i32);
    let qj = linalg::sym(&(&left * &model.qdiff * &right * w));
    let bj = &qj * &qinv * (-0.5);

    // route 1: ½⟨𝔔_jξ, ξ⟩ + ⅛⟨𝔔_jQ∞⁻¹x, Q∞⁻¹x⟩
    let xx = linalg::sym(&(&qinv * &qj * &qinv * 0.125));
    let route1 = Mat::from_fn(2 * n, 2 * n, |a, b| match (a < n, b < n) {
        (true, true) => xx[(a, b)],
        (false, false) => 0.5 * qj[(a - n, b - n)],
        _ => 0.0,
    });
    // route 2: ((Im F)ʲ)ᵀ Re M (Im F)ʲ
    let q = conjugated_symbol(model)?;
    let imf = hamilton_map(&q)?.im_f();
    let p = linalg::matpow(&imf, j);
    let route2 = linalg::sym(&(p.transpose() * q.re_m() * &p));
    // route 3: 2^{-(4j+1)}|Q½(Q∞⁻¹Q+2Bᵀ)ʲξ|² + 2^{-(4j+3)}|Q½Q∞⁻¹(QQ∞⁻¹+2B)ʲx|²
    let a3 = &model.q_half * &right;
    let b3 = &model.q_half * &qinv * &left;
    let xi3 = a3.transpose() * &a3 * 2f64.powi(-(4 * j as i32 + 1));
    let x3 = b3.transpose() * &b3 * 2f64.powi(-(4 * j as i32 + 3));
    let route3 = Mat::from_fn(2 * n, 2 * n, |a, b| match (a < n, b < n) {
        (true, true) => x3[(a, b)],
        (false, false) => xi3[(a - n, b - n)],
        _ => 0.0,
    });
    // residuals are relative to the size of the factors of each j-fold product,
    // the scale at which their roundoff lives
    let scale = linalg::max_abs(&route2)
        .max(linalg::norm2(&imf).powi(2 * j as i32) * linalg::norm2(&q.re_m()))
        .max(f64::MIN_POSITIVE);
    let symbol_residual = linalg::max_abs(&(&route1 - &route2)).max(linalg::max_abs(&(&route3 - &route2))) / scale;

    let lhs = &right * &qinv;
    let rhs = &qinv * &left * if j % 2 == 0 { 1.0 } else { -1.0 };
    let factor = linalg::norm2(&(&qinv * &model.qdiff + model.b.transpose() * 2.0));
    let sign_scale = (factor.powi(j as i32) * linalg::norm2(&qinv)).max(linalg::max_abs(&lhs)).max(f64::MIN_POSITIVE);
    let sign_residual = linalg::max_abs(&(&lhs - &rhs)) / sign_scale;
    Ok(LambdaGenerator { j, qj, bj, symbol_residual, sign_residual })
}

/// amplitude · exp(−½(x−mean)ᵀ covariance⁻¹ (x−mean)).
#[derive(Debug, Clone, Serialize)]
pub struct GaussianState {
    pub mean: Vec<f64>,
    #[serde(serialize_with = "ser_mat")]
    pub covariance: RMat,
    pub amplitude: f64,
}

fn ser_mat<S: serde::Serializer>(m: &RMat, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect();
    rows.serialize(s)
}

impl GaussianState {
    pub fn new(mean: Vec<f64>, covariance: RMat, amplitude: f64) -> Result<Self> {
        if covariance.nrows() != mean.len() || covariance.ncols() != mean.len() {
            return Err(Error::Shape("covariance does not match the mean".into()));
        }
        if !(amplitude > 0.0) || linalg::cholesky(&covariance).is_none() {
            return Err(Error::Domain("Gaussian state needs amplitude > 0 and a positive definite covariance".into()));
        }
        Ok(Self { mean, covariance, amplitude })
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let n = self.mean.len();
        let d = Mat::from_fn(n, 1, |i, _| x[i] - self.mean[i]);
        let s = linalg::solve(&self.covariance, &d);
        let quad: f64 = (0..n).map(|i| d[(i, 0)] * s[(i, 0)]).sum();
        self.amplitude * (-0.5 * quad).exp()
    }

    pub fn precision(&self) -> RMat {
        linalg::sym(&linalg::inverse(&self.covariance))
    }

    /// Product with exp(−½ xᵀ P x) for a symmetric PSD P; returns (mean, precision, amplitude).
    pub fn times_centered(&self, p: &RMat) -> Result<(Vec<f64>, RMat, f64)> {
        let n = self.mean.len();
        let p0 = self.precision();
        let pn = linalg::sym(&(&p0 + p));
        if linalg::cholesky(&pn).is_none() {
            return Err(Error::OracleDegeneracy("product Gaussian lost positive definiteness".into()));
        }
        let m0 = Mat::from_fn(n, 1, |i, _| self.mean[i]);
        let h = &p0 * &m0;
        let mu = linalg::solve(&pn, &h);
        let a = |u: &RMat, v: &RMat| (0..n).map(|i| u[(i, 0)] * v[(i, 0)]).sum::<f64>();
        let expo = -0.5 * a(&m0, &h) + 0.5 * a(&mu, &h);
        Ok(((0..n).map(|i| mu[(i, 0)]).collect(), pn, self.amplitude * expo.exp()))
    }
}

/// Closed-form image of a Gaussian under T(t)f(x) = E f(e^{tB}x − Y), Y ~ N(0, G_t).
pub fn kolmogorov_propagate_gaussian(model: &OUModel, g: &GaussianState, t: f64) -> Result<GaussianState> {
    model.require_hypoelliptic()?;
    if g.mean.len() != model.n {
        return Err(Error::Shape("Gaussian state dimension differs from the model".into()));
    }
    if t == 0.0 {
        return Ok(g.clone());
    }
    let gram = gram_matrix(model, t)?;
    let widened = linalg::sym(&(&g.covariance + &gram.g));
    let back = linalg::expm(&linalg::scale(&model.b, -t));
    let cov = linalg::sym(&(&back * &widened * back.transpose()));
    let (ev, _) = linalg::sym_eig(&cov);
    if !(ev[0] > 1e-14 * ev.last().unwrap().abs()) {
        return Err(Error::OracleDegeneracy(format!("propagated covariance has eigenvalue {:.3e}", ev[0])));
    }
    let det = |m: &RMat| linalg::sym_eig(m).0.iter().product::<f64>();
    let amp = g.amplitude * (det(&g.covariance) / det(&widened)).sqrt();
    let mean = (0..model.n).map(|i| (0..model.n).map(|j| back[(i, j)] * g.mean[j]).sum()).collect();
    GaussianState::new(mean, cov, amp)
}

#[derive(Debug, Clone, Serialize)]
pub struct MonteCarloCheck {
    pub samples: usize,
    pub seed: u64,
    pub points: Vec<Vec<f64>>,
    pub closed_form: Vec<f64>,
    pub estimate: Vec<f64>,
    pub std_error: Vec<f64>,
}

/// Evaluates T(t)f at `points` by sampling Y ~ N(0, G_t).
pub fn monte_carlo_kolmogorov(
    model: &OUModel,
    g: &GaussianState,
    t: f64,
    points: &[Vec<f64>],
    samples: usize,
    seed: u64,
) -> Result<MonteCarloCheck> {
    use rand::SeedableRng;
    let exact = kolmogorov_propagate_gaussian(model, g, t)?;
    let gram = gram_matrix(model, t)?;
    let (ev, u) = linalg::sym_eig(&gram.g);
    let root = &u * Mat::from_fn(ev.len(), ev.len(), |i, j| if i == j { ev[i].max(0.0).sqrt() } else { 0.0 });
    let fwd = linalg::expm(&linalg::scale(&model.b, t));
    let n = model.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = vec![0.0; points.len()];
    let mut sum2 = vec![0.0; points.len()];
    let z: Vec<f64> = vec![0.0; n];
    let mut zz = z;
    let mut y = vec![0.0; n];
    let moved: Vec<Vec<f64>> =
        points.iter().map(|p| (0..n).map(|i| (0..n).map(|j| fwd[(i, j)] * p[j]).sum()).collect()).collect();
    let mut arg = vec![0.0; n];
    for _ in 0..samples {
        for v in zz.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        for i in 0..n {
            y[i] = (0..n).map(|j| root[(i, j)] * zz[j]).sum();
        }
        for (k, m) in moved.iter().enumerate() {
            for i in 0..n {
                arg[i] = m[i] - y[i];
            }
            let v = g.evaluate(&arg);
            sum[k] += v;
            sum2[k] += v * v;
        }
    }
    let s = samples as f64;
    let estimate: Vec<f64> = sum.iter().map(|v| v / s).collect();
    let std_error = sum2.iter().zip(&estimate).map(|(q, m)| ((q / s - m * m).max(0.0) / s).sqrt()).collect();
    Ok(MonteCarloCheck {
        samples,
        seed,
        points: points.to_vec(),
        closed_form: points.iter().map(|p| exact.evaluate(p)).collect(),
        estimate,
        std_error,
    })
}

/// Fits amplitude·exp(−½(x−m)ᵀΣ⁻¹(x−m)) to positive samples by least squares on log values.
pub fn fit_gaussian(points: &[Vec<f64>], values: &[f64]) -> Result<GaussianState> {
    let n = points.first().map(|p| p.len()).unwrap_or(0);
    // unknowns: c, b (n), symmetric P (n(n+1)/2) in log f = c + bᵀx − ½xᵀPx
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let cols = 1 + n + pairs.len();
    if points.len() < cols || values.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Precondition("Gaussian fit needs enough positive samples".into()));
    }
    let a = Mat::from_fn(points.len(), cols, |r, c| {
        let x = &points[r];
        if c == 0 {
            1.0
        } else if c <= n {
            x[c - 1]
        } else {
            let (i, j) = pairs[c - 1 - n];
            if i == j {
                -0.5 * x[i] * x[i]
            } else {
                -x[i] * x[j]
            }
        }
    });
    let y = Mat::from_fn(points.len(), 1, |r, _| values[r].ln());
    let sol = linalg::solve(&(a.transpose() * &a), &(a.transpose() * &y));
    let mut p = RMat::zeros(n, n);
    for (k, &(i, j)) in pairs.iter().enumerate() {
        p[(i, j)] = sol[(1 + n + k, 0)];
        p[(j, i)] = sol[(1 + n + k, 0)];
    }
    let cov = linalg::inverse(&p);
    let bvec = Mat::from_fn(n, 1, |i, _| sol[(1 + i, 0)]);
    let mean = &cov * &bvec;
    let quad: f64 = (0..n).map(|i| mean[(i, 0)] * bvec[(i, 0)]).sum();
    let amp = (sol[(0, 0)] + 0.5 * quad).exp();
    GaussianState::new((0..n).map(|i| mean[(i, 0)]).collect(), linalg::sym(&cov), amp)
}

/// Gaussian √ρ·f with ρ the invariant density N(0, Q∞); returns (mean, precision, amplitude).
pub fn sqrt_rho_times(model: &OUModel, g: &GaussianState) -> Result<(Vec<f64>, RMat, f64)> {
    let qinf = model.require_qinf()?;
    let n = model.n as f64;
    let norm = (2.0 * std::f64::consts::PI).powf(-n / 4.0) * linalg::sym_eig(qinf).0.iter().product::<f64>().powf(-0.25);
    let (m, p, a) = g.times_centered(&(linalg::inverse(qinf) * 0.5))?;
    Ok((m, p, a * norm))
}

/// Flat-space solution e^{-t𝓛}(√ρ f) = e^{t Tr(B)/2} √ρ · T(t)f as (mean, precision, amplitude).
pub fn conjugated_gaussian_solution(model: &OUModel, g: &GaussianState, t: f64) -> Result<(Vec<f64>, RMat, f64)> {
    let out = kolmogorov_propagate_gaussian(model, g, t)?;
    let (m, p, a) = sqrt_rho_times(model, &out)?;
    Ok((m, p, a * (0.5 * t * model.trace_b()).exp()))
}

pub const MAX_RANDOM_CONDITION: f64 = 1e4;

/// Hypoelliptic stable model with random rank-r diffusion and κ(Q∞) ≤ MAX_RANDOM_CONDITION.
pub fn random_hypoelliptic(rng: &mut ChaCha8Rng, n: usize) -> OUModel {
    loop {
        let r = rng.random_range(1..=n);
        let c = Mat::from_fn(n, r, |_, _| rng.sample::<f64, _>(StandardNormal));
        let q = linalg::sym(&(&c * c.transpose()));
        let a = Mat::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let top = a.eigenvalues().unwrap().iter().fold(f64::NEG_INFINITY, |m, l| m.max(l.re));
        let shift = top + 0.2 + rng.random::<f64>();
        let b = &a - RMat::identity(n, n) * shift;
        if let Ok(m) = ou_build(&q, &b, Variant::Ou) {
            // near-uncontrollable draws make Q∞ numerically singular; keep κ(Q∞) moderate
            if let (true, Some(qinf)) = (m.hypoelliptic, &m.qinf) {
                let ev = linalg::sym_eig(qinf).0;
                if ev[0] > 0.0 && ev[n - 1] / ev[0] <= MAX_RANDOM_CONDITION {
                    return m;
                }
            }
        }
    }
}

/// Random (Q, B) pair for the Kalman/Gram equivalence: generic, zero-diffusion,
/// or uncontrollable by block structure under a coordinate permutation.
pub fn random_pair(rng: &mut ChaCha8Rng, n: usize) -> (RMat, RMat) {
    let normal = |rng: &mut ChaCha8Rng| rng.sample::<f64, _>(StandardNormal);
    let kind = rng.random_range(0..4);
    let mut b = Mat::from_fn(n, n, |_, _| normal(rng) / (n as f64).sqrt());
    let mut q = RMat::zeros(n, n);
    match kind {
        0 => {}
        1 | 2 if n > 1 => {
            // B block upper triangular with Q supported on the first block ⇒ Kalman rank ≤ s
            let s = rng.random_range(1..n);
            for i in s..n {
                for j in 0..s {
                    b[(i, j)] = 0.0;
                }
            }
            let c = Mat::from_fn(s, s, |_, _| normal(rng));
            let cc = &c * c.transpose();
            for i in 0..s {
                for j in 0..s {
                    q[(i, j)] = cc[(i, j)];
                }
            }
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            b = Mat::from_fn(n, n, |i, j| b[(perm[i], perm[j])]);
            q = Mat::from_fn(n, n, |i, j| q[(perm[i], perm[j])]);
        }
        _ => {
            let r = rng.random_range(1..=n);
            let c = Mat::from_fn(n, r, |_, _| normal(rng));
            q = linalg::sym(&(&c * c.transpose()));
        }
    }
    (q, b)
}

pub fn kramers_model() -> OUModel {
    let q = Mat::from_fn(2, 2, |i, j| if i == 1 && j == 1 { 2.0 } else { 0.0 });
    let b = Mat::from_fn(2, 2, |i, j| [[0.0, 1.0], [-1.0, -1.0]][i][j]);
    ou_build(&q, &b, Variant::Ou).expect("Kramers model is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symplectic::kramers;
    use rand::SeedableRng;

    #[test]
    fn kramers_structure() {
        let m = kramers_model();
        assert!(m.hypoelliptic);
        assert_eq!(m.k0, Some(1));
        assert_eq!(m.trace_b(), -1.0);
        let qinf = m.qinf.clone().unwrap();
        assert!(linalg::max_abs(&(&qinf - RMat::identity(2, 2))) < 1e-14);
        assert!(m.lyapunov_residual.unwrap() < 1e-15);
        let q = conjugated_symbol(&m).unwrap();
        assert!(linalg::max_abs_c(&(&q.m - &kramers().m)) < 1e-15);
        assert_eq!(frequency_index(&m, &[0.0, 1.0]).unwrap(), 0);
        assert_eq!(frequency_index(&m, &[1.0, 0.0]).unwrap(), 1);
        assert_eq!(space_index(&m, &[0.0, 1.0]).unwrap(), 0);
        assert!(matches!(frequency_index(&m, &[0.0, 0.0]), Err(Error::DegenerateDirection(_))));
        for r in index_table(&m, &q).unwrap() {
            assert_eq!(r.ou_index, r.symbol_index, "{r:?}");
        }
    }

    #[test]
    fn elliptic_and_degenerate_models() {
        let i2 = RMat::identity(2, 2);
        let m = ou_build(&i2, &(&i2 * -1.0), Variant::Ou).unwrap();
        assert_eq!(m.k0, Some(0));
        assert!(linalg::max_abs(&(m.qinf.clone().unwrap() - &i2 * 0.5)) < 1e-15);
        let q = conjugated_symbol(&m).unwrap();
        assert!(linalg::max_abs(&q.im_m()) < 1e-15);
        assert!(linalg::max_abs(&(q.re_m() - &RMat::identity(4, 4) * 0.5)) < 1e-15);
        let z = ou_build(&RMat::zeros(2, 2), &(&i2 * -1.0), Variant::Ou).unwrap();
        assert!(!z.hypoelliptic && z.kalman_rank == 0);
        let g = gram_matrix(&z, 1.0).unwrap();
        assert_eq!(g.lambda_max, 0.0);
        assert!(!g.nonsingular());
    }

    #[test]
    fn unstable_drift_has_no_invariant_measure() {
        let i2 = RMat::identity(2, 2);
        let m = ou_build(&i2, &i2, Variant::Ou).unwrap();
        assert_eq!(m.stability, Stability::Unstable);
        assert!(matches!(conjugated_symbol(&m), Err(Error::NoInvariantMeasure(_))));
    }

    #[test]
    fn gram_small_time_and_routes() {
        let m = kramers_model();
        let t = 1e-4;
        let g = gram_matrix(&m, t).unwrap();
        assert!(linalg::max_abs(&(&g.g - &m.qdiff * t)) < 1e-7);
        let g1 = gram_matrix(&m, 1.0).unwrap();
        assert!(g1.nonsingular() && g1.route_difference < 1e-12);
    }

    #[test]
    fn fokker_planck_flips_drift_sign() {
        let m = kramers_model();
        let fp = OUModel { variant: Variant::FokkerPlanck, ..m.clone() };
        let a = conjugated_symbol(&m).unwrap();
        let b = conjugated_symbol(&fp).unwrap();
        assert!(linalg::max_abs(&(a.im_m() + b.im_m())) < 1e-15);
    }

    #[test]
    fn generator_symbols_on_kramers() {
        let m = kramers_model();
        for j in 0..=1 {
            let l = lambda_generators(&m, j).unwrap();
            assert!(l.symbol_residual <= 1e-13 && l.sign_residual <= 1e-13, "{j}: {} {}", l.symbol_residual, l.sign_residual);
        }
        let l0 = lambda_generators(&m, 0).unwrap();
        assert!(linalg::max_abs(&(&l0.qj - &m.qdiff)) < 1e-15);
    }

    #[test]
    fn kolmogorov_limits() {
        let m = kramers_model();
        let g = GaussianState::new(vec![0.2, -0.1], RMat::identity(2, 2), 1.0).unwrap();
        let same = kolmogorov_propagate_gaussian(&m, &g, 0.0).unwrap();
        assert_eq!(same.amplitude, 1.0);
        let flat = GaussianState::new(vec![0.0, 0.0], RMat::identity(2, 2) * 1e8, 3.0).unwrap();
        let out = kolmogorov_propagate_gaussian(&m, &flat, 0.7).unwrap();
        assert!((out.evaluate(&[0.3, -0.4]) - 3.0).abs() < 1e-6);
        let near = kolmogorov_propagate_gaussian(&m, &g, 1e-9).unwrap();
        assert!((near.evaluate(&[0.1, 0.1]) - g.evaluate(&[0.1, 0.1])).abs() < 1e-7);
    }

    #[test]
    fn gaussian_fit_roundtrip() {
        let g = GaussianState::new(vec![0.4, -0.3], Mat::from_fn(2, 2, |i, j| if i == j { 1.5 } else { 0.2 }), 0.8).unwrap();
        let pts: Vec<Vec<f64>> = (0..9).map(|k| vec![(k % 3) as f64 - 1.0, (k / 3) as f64 - 1.0]).collect();
        let vals: Vec<f64> = pts.iter().map(|p| g.evaluate(p)).collect();
        let f = fit_gaussian(&pts, &vals).unwrap();
        assert!((f.amplitude - 0.8).abs() < 1e-12);
        assert!((f.mean[0] - 0.4).abs() < 1e-12);
        assert!(linalg::max_abs(&(&f.covariance - &g.covariance)) < 1e-12);
    }

    #[test]
    fn random_models_are_hypoelliptic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..=4 {
            let m = random_hypoelliptic(&mut rng, n);
            assert!(m.lyapunov_residual.unwrap() < LYAPUNOV_TOL);
            assert!(lemma31_gap(&m).unwrap() < 1e-8);
        }
    }
}
