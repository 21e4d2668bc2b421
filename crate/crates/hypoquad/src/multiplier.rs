//! The time-dependent multiplier Q_t = Σ a_j t^{2j+1} M_j − Σ b_j t^{2j+2} N_j
//! and numerical certificates for the inequalities it is built to satisfy.

use faer::Mat;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, RMat};
use crate::singular::{self, SubspaceChain};
use crate::symplectic::{hamilton_map, poisson_bracket, PhaseVector, QuadraticSymbol};

pub const C1_FLOOR: f64 = 1.0;

/// Variant of the backward recursion. `FlippedSign` negates the correction term
/// 2(a_j − (2j+2)b_j)²/b_j; it exists only so verification harnesses can prove
/// they detect a broken multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Recursion {
    #[default]
    Standard,
    FlippedSign,
}

#[derive(Debug, Clone, Serialize)]
pub struct MultiplierCoefficients {
    pub k0: usize,
    pub c0: f64,
    pub c1: f64,
    /// a_0..a_{k0+1}
    pub a: Vec<f64>,
    /// b_0..b_{k0}
    pub b: Vec<f64>,
}

impl MultiplierCoefficients {
    pub fn all_positive(&self) -> bool {
        self.a.iter().chain(&self.b).all(|&v| v > 0.0 && v.is_finite())
    }

    /// a_j − (2j+2) b_j for j ≤ k0; all must be positive.
    pub fn sign_margins(&self) -> Vec<f64> {
        (0..=self.k0).map(|j| self.a[j] - (2 * j + 2) as f64 * self.b[j]).collect()
    }

    /// c1 + 1 + a_0 + b_0² + 2(a_0 − 2b_0)²/b_0.
    pub fn c_explicit(&self) -> f64 {
        let (a0, b0) = (self.a[0], self.b[0]);
        self.c1 + 1.0 + a0 + b0 * b0 + 2.0 * (a0 - 2.0 * b0).powi(2) / b0
    }
}

/// Powers (Im F)^j and the forms M_j, N_j, and the cross form Re q((Im F)^j·, (Im F)^{j+2}·).
#[derive(Debug, Clone)]
pub struct TimeQuadraticForm {
    pub q: QuadraticSymbol,
    pub coeffs: MultiplierCoefficients,
    /// M_0..M_{k0+2}
    pub m: Vec<RMat>,
    /// N_0..N_{k0+1}
    pub nn: Vec<RMat>,
    /// O_0..O_{k0}
    pub o: Vec<RMat>,
}

fn im_f_powers(q: &QuadraticSymbol, count: usize) -> Result<Vec<RMat>> {
    let imf = hamilton_map(q)?.im_f();
    let d = 2 * q.n;
    let mut out = vec![RMat::identity(d, d)];
    for j in 1..count {
        out.push(&out[j - 1] * &imf);
    }
    Ok(out)
}

fn polar(p: &RMat, rem: &RMat, r: &RMat) -> RMat {
    linalg::sym(&(p.transpose() * rem * r))
}

pub fn multiplier_coefficients(q: &QuadraticSymbol, chain: &SubspaceChain) -> Result<MultiplierCoefficients> {
    multiplier_coefficients_with(q, chain, Recursion::Standard)
}

pub fn multiplier_coefficients_with(
    q: &QuadraticSymbol,
    chain: &SubspaceChain,
    recursion: Recursion,
) -> Result<MultiplierCoefficients> {
    if !q.accretive {
        return Err(Error::Precondition("multiplier requires an accretive symbol".into()));
    }
    let k0 = chain
        .k0
        .ok_or_else(|| Error::Precondition("multiplier requires a trivial singular space".into()))?;
    let p = im_f_powers(q, k0 + 3)?;
    let rem = q.re_m();
    let r = singular::r_matrices(q, k0)?;
    let rk0 = &r[k0];
    let c0 = linalg::lambda_min(rk0);
    if c0 <= 0.0 {
        return Err(Error::Precondition(format!("R_k0 is not positive definite (λ_min = {c0:e})")));
    }
    let m_top = polar(&p[k0 + 2], &rem, &p[k0 + 2]);
    let c1 = linalg::gen_eig_max(&m_top, rk0)
        .ok_or_else(|| Error::Precondition("R_k0 Cholesky failed".into()))?
        .max(C1_FLOOR);

    let mut a = vec![0.0; k0 + 2];
    let mut b = vec![0.0; k0 + 1];
    a[k0 + 1] = 1.0 / c1;
    b[k0] = 2.0 / 3.0 * (1.0 + (2 * k0 + 4) as f64 * a[k0 + 1]);
    a[k0] = 2.0 * b[k0] * b[k0] / a[k0 + 1];
    let sgn = match recursion {
        Recursion::Standard => 1.0,
        Recursion::FlippedSign => -1.0,
    };
    for j in (1..=k0).rev() {
        let jf = j as f64;
        let (aj, bj) = (a[j], b[j]);
        b[j - 1] = 2.0 / 3.0
            * (2.0 + c1 + (2.0 * jf + 1.0) * aj + bj * bj + sgn * 2.0 * (aj - (2.0 * jf + 2.0) * bj).powi(2) / bj);
        a[j - 1] = 8.0 * b[j - 1] * b[j - 1] / aj;
    }
    Ok(MultiplierCoefficients { k0, c0, c1, a, b })
}

impl TimeQuadraticForm {
    pub fn new(q: &QuadraticSymbol, coeffs: MultiplierCoefficients) -> Result<Self> {
        let k0 = coeffs.k0;
        let p = im_f_powers(q, k0 + 3)?;
        let rem = q.re_m();
        let m = (0..=k0 + 2).map(|j| polar(&p[j], &rem, &p[j])).collect();
        let nn = (0..=k0 + 1).map(|j| linalg::scale(&polar(&p[j], &rem, &p[j + 1]), 2.0)).collect();
        let o = (0..=k0).map(|j| polar(&p[j], &rem, &p[j + 2])).collect();
        Ok(Self { q: q.clone(), coeffs, m, nn, o })
    }

    pub fn build(q: &QuadraticSymbol, chain: &SubspaceChain) -> Result<Self> {
        Self::new(q, multiplier_coefficients(q, chain)?)
    }

    fn dim(&self) -> usize {
        2 * self.q.n
    }

    fn combo(&self, terms: &[(f64, &RMat)]) -> RMat {
        let d = self.dim();
        Mat::from_fn(d, d, |i, j| terms.iter().map(|(c, m)| c * m[(i, j)]).sum())
    }

    /// (Q_t, dQ_t/dt).
    pub fn assemble(&self, t: f64) -> Result<(RMat, RMat)> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("t = {t} < 0")));
        }
        let (a, b) = (&self.coeffs.a, &self.coeffs.b);
        let mut q_terms = vec![];
        let mut d_terms = vec![];
        for (j, aj) in a.iter().enumerate() {
            let e = 2 * j as i32 + 1;
            q_terms.push((aj * t.powi(e), &self.m[j]));
            d_terms.push((aj * e as f64 * t.powi(e - 1), &self.m[j]));
        }
        for (j, bj) in b.iter().enumerate() {
            let e = 2 * j as i32 + 2;
            q_terms.push((-bj * t.powi(e), &self.nn[j]));
            d_terms.push((-bj * e as f64 * t.powi(e - 1), &self.nn[j]));
        }
        Ok((self.combo(&q_terms), self.combo(&d_terms)))
    }

    pub fn qt(&self, t: f64) -> Result<RMat> {
        Ok(self.assemble(t)?.0)
    }

    /// Σ|coefficient|·‖form‖ at time t, the natural size of Q_t.
    pub fn scale_at(&self, t: f64) -> f64 {
        let (a, b) = (&self.coeffs.a, &self.coeffs.b);
        let sa: f64 = a.iter().enumerate().map(|(j, aj)| aj.abs() * t.powi(2 * j as i32 + 1) * linalg::norm2(&self.m[j])).sum();
        let sb: f64 = b.iter().enumerate().map(|(j, bj)| bj.abs() * t.powi(2 * j as i32 + 2) * linalg::norm2(&self.nn[j])).sum();
        sa + sb
    }

    /// H_{Im q} Q_t from the closed form
    /// 2Σ a_j t^{2j+1} N_j − 4Σ b_j t^{2j+2} M_{j+1} − 4Σ b_j t^{2j+2} O_j.
    pub fn flow_bracket_closed_form(&self, t: f64) -> RMat {
        let (a, b) = (&self.coeffs.a, &self.coeffs.b);
        let mut terms = vec![];
        for (j, aj) in a.iter().enumerate() {
            terms.push((2.0 * aj * t.powi(2 * j as i32 + 1), &self.nn[j]));
        }
        for (j, bj) in b.iter().enumerate() {
            let c = -4.0 * bj * t.powi(2 * j as i32 + 2);
            terms.push((c, &self.m[j + 1]));
            terms.push((c, &self.o[j]));
        }
        self.combo(&terms)
    }
}

/// H_{Im q}Q_t, cross-checked against the Poisson bracket {Im q, Q_t}.
pub fn hamilton_flow_bracket(form: &TimeQuadraticForm, t: f64) -> Result<(RMat, f64)> {
    let closed = form.flow_bracket_closed_form(t);
    let qt = form.qt(t)?;
    let qsym = QuadraticSymbol::real(form.q.n, &qt)?;
    let via_bracket = linalg::re(&poisson_bracket(&form.q.imag_part(), &qsym)?.m);
    let diff = linalg::max_abs(&(&closed - &via_bracket));
    let scale = 1.0 + linalg::max_abs(&closed) + linalg::norm2(&form.q.im_m()) * linalg::max_abs(&qt);
    let rel = diff / scale;
    if rel > 1e-9 {
        return Err(Error::Inconsistency(format!("flow-bracket routes differ by {rel:e} (relative)")));
    }
    Ok((closed, rel))
}

#[derive(Debug, Clone, Serialize)]
pub struct LemmaMargin {
    pub min_margin: f64,
    pub min_relative_margin: f64,
    pub worst_t: f64,
}

/// min over the grid of λ_min(Q_t − ¼ Σ_{j≤k0} a_j t^{2j+1} M_j), absolute and relative to the size of Q_t.
pub fn verify_lemma1(form: &TimeQuadraticForm, grid: &[f64]) -> Result<LemmaMargin> {
    let mut out = LemmaMargin { min_margin: f64::INFINITY, min_relative_margin: f64::INFINITY, worst_t: f64::NAN };
    let k0 = form.coeffs.k0;
    for &t in grid {
        let qt = form.qt(t)?;
        let lower: Vec<(f64, &RMat)> =
            (0..=k0).map(|j| (0.25 * form.coeffs.a[j] * t.powi(2 * j as i32 + 1), &form.m[j])).collect();
        let diff = &qt - form.combo(&lower);
        let margin = linalg::lambda_min(&diff);
        let rel = margin / form.scale_at(t).max(f64::MIN_POSITIVE);
        if rel < out.min_relative_margin {
            out.min_relative_margin = rel;
            out.worst_t = t;
        }
        out.min_margin = out.min_margin.min(margin);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelViolation {
    pub t: f64,
    pub eigenvalue: f64,
    pub eigenvector: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Lemma3Result {
    /// Minimal admissible C over the grid; `None` when no finite C works.
    pub c_min: Option<f64>,
    pub worst_t: f64,
    pub c_explicit: f64,
    pub max_route_difference: f64,
    pub kernel_violation: Option<KernelViolation>,
}

impl Lemma3Result {
    pub fn passes(&self) -> bool {
        self.kernel_violation.is_none()
            && matches!(self.c_min, Some(c) if c <= self.c_explicit * (1.0 + 1e-9))
    }
}

const BOUND_REL_TOL: f64 = 1e-10;

fn admissible(d: &RMat, m0: &RMat, c: f64, dn: f64, mn: f64) -> bool {
    let x = d - linalg::scale(m0, c);
    linalg::lambda_max(&x) <= BOUND_REL_TOL * (dn + c.abs() * mn)
}

/// Smallest C with D − C·M0 ⪯ 0, found by bisection; the lower starting point
/// is the largest generalized eigenvalue on Ran M0.
fn minimal_c(d: &RMat, m0: &RMat, range: &RMat) -> Option<f64> {
    let dn = linalg::norm2(d);
    let mn = linalg::norm2(m0);
    let dr = range.transpose() * d * range;
    let mr = range.transpose() * m0 * range;
    let lo0 = linalg::gen_eig_max(&dr, &mr).unwrap_or(0.0);
    if admissible(d, m0, lo0, dn, mn) {
        return Some(lo0);
    }
    let mut lo = lo0;
    let mut hi = lo0.abs().max(1.0) * 2.0 + lo0;
    while !admissible(d, m0, hi, dn, mn) {
        hi = lo0 + (hi - lo0) * 4.0;
        if hi > 1e15 * (1.0 + lo0.abs()) {
            return None;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if admissible(d, m0, mid, dn, mn) {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-14 * hi.abs() {
            break;
        }
    }
    Some(hi)
}

/// D_t = dQ_t/dt + ½ H_{Im q}Q_t must satisfy D_t ⪯ C·M_0 for some finite C.
pub fn verify_lemma3(form: &TimeQuadraticForm, grid: &[f64]) -> Result<Lemma3Result> {
    let m0 = &form.m[0];
    let d = form.dim();
    let (ev, u) = linalg::sym_eig(m0);
    let top = ev.last().copied().unwrap_or(0.0);
    let tol = 1e-12 * top.max(f64::MIN_POSITIVE);
    let ridx: Vec<usize> = (0..d).filter(|&i| ev[i] > tol).collect();
    let kidx: Vec<usize> = (0..d).filter(|&i| ev[i] <= tol).collect();
    let range = Mat::from_fn(d, ridx.len(), |i, j| u[(i, ridx[j])]);
    let kernel = Mat::from_fn(d, kidx.len(), |i, j| u[(i, kidx[j])]);

    let mut res = Lemma3Result {
        c_min: Some(f64::NEG_INFINITY),
        worst_t: f64::NAN,
        c_explicit: form.coeffs.c_explicit(),
        max_route_difference: 0.0,
        kernel_violation: None,
    };
    for &t in grid {
        let (_, dq) = form.assemble(t)?;
        let (h, rd) = hamilton_flow_bracket(form, t)?;
        res.max_route_difference = res.max_route_difference.max(rd);
        let dt = &dq + linalg::scale(&h, 0.5);
        let dn = linalg::norm2(&dt);
        if kernel.ncols() > 0 {
            let dk = kernel.transpose() * &dt * &kernel;
            let (kev, kvec) = linalg::sym_eig(&dk);
            let worst = *kev.last().unwrap();
            if worst > BOUND_REL_TOL * dn && res.kernel_violation.is_none() {
                let last = kvec.ncols() - 1;
                let v = &kernel * Mat::from_fn(kvec.nrows(), 1, |i, _| kvec[(i, last)]);
                res.kernel_violation =
                    Some(KernelViolation { t, eigenvalue: worst, eigenvector: (0..d).map(|i| v[(i, 0)]).collect() });
            }
        }
        match (res.c_min, minimal_c(&dt, m0, &range)) {
            (Some(c), Some(ct)) => {
                if ct > c {
                    res.c_min = Some(ct);
                    res.worst_t = t;
                }
            }
            (_, None) => {
                if res.c_min.is_some() {
                    res.worst_t = t;
                }
                res.c_min = None;
            }
            (None, Some(_)) => {}
        }
    }
    Ok(res)
}

/// Largest c with Q_t ⪰ (c/|X0|²)·min(1,t)^{2k+1}·X0X0ᵀ, k the index of X0.
pub fn directional_lower_bound(form: &TimeQuadraticForm, chain: &SubspaceChain, x0: &PhaseVector, t: f64) -> Result<f64> {
    let k = singular::direction_index(chain, x0)?;
    if !(t > 0.0) {
        return Err(Error::Domain(format!("t = {t} must be positive")));
    }
    let x = x0.real_part();
    let nrm2: f64 = x.iter().map(|v| v * v).sum();
    let qt = form.qt(t)?;
    let xm = Mat::from_fn(x.len(), 1, |i, _| x[i]);
    let y = linalg::solve(&qt, &xm);
    let quad: f64 = (0..x.len()).map(|i| x[i] * y[(i, 0)]).sum();
    let c = nrm2 / (t.min(1.0).powi(2 * k as i32 + 1) * quad);
    if !(c > 0.0) {
        return Err(Error::Inconsistency(format!("nonpositive directional constant {c:e} at t = {t}")));
    }
    Ok(c)
}

/// min over j and both signs of λ_min(M_j/ε + ε M_{j+1} ± N_j), relative to the forms' size.
pub fn cauchy_schwarz_margin(form: &TimeQuadraticForm, eps: f64) -> f64 {
    let mut worst = f64::INFINITY;
    for j in 0..form.nn.len() {
        let base = &linalg::scale(&form.m[j], 1.0 / eps) + &linalg::scale(&form.m[j + 1], eps);
        let s = 1.0 + linalg::norm2(&base) + linalg::norm2(&form.nn[j]);
        for sgn in [1.0, -1.0] {
            let x = &base + &linalg::scale(&form.nn[j], sgn);
            worst = worst.min(linalg::lambda_min(&x) / s);
        }
    }
    worst
}

pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::singular::{kernel_chain, RankTol};
    use crate::symplectic::{harmonic_oscillator, kramers};

    fn form_of(q: &QuadraticSymbol) -> (TimeQuadraticForm, SubspaceChain) {
        let chain = kernel_chain(q, RankTol::default()).unwrap();
        (TimeQuadraticForm::build(q, &chain).unwrap(), chain)
    }

    #[test]
    fn oscillator_coefficients() {
        let (f, _) = form_of(&harmonic_oscillator(1));
        let c = &f.coeffs;
        assert_eq!(c.c1, 1.0);
        assert!((c.a[1] - 1.0).abs() < 1e-15);
        assert!((c.b[0] - 10.0 / 3.0).abs() < 1e-14);
        assert!((c.a[0] - 200.0 / 9.0).abs() < 1e-13);
        // identities re-evaluate exactly
        assert!((c.b[0] - 2.0 / 3.0 * (1.0 + 4.0 * c.a[1])).abs() < 1e-15);
        assert!((c.a[0] - 2.0 * c.b[0] * c.b[0] / c.a[1]).abs() < 1e-13);
    }

    #[test]
    fn oscillator_qt_and_certificates() {
        let (f, chain) = form_of(&harmonic_oscillator(1));
        assert_eq!(linalg::max_abs(&f.qt(0.0).unwrap()), 0.0);
        let t = 0.37;
        let qt = f.qt(t).unwrap();
        let a0 = 200.0 / 9.0;
        assert!((qt[(0, 0)] - a0 * t * 0.5).abs() < 1e-13 && qt[(0, 1)].abs() < 1e-15);
        let grid = log_grid(1e-4, 1.0, 50);
        let m = verify_lemma1(&f, &grid).unwrap();
        assert!((m.min_margin - 0.75 * a0 * 1e-4 * 0.5).abs() < 1e-12);
        let l3 = verify_lemma3(&f, &grid).unwrap();
        assert!((l3.c_min.unwrap() - a0).abs() < 1e-9);
        assert!(l3.passes());
        let (h, _) = hamilton_flow_bracket(&f, 0.5).unwrap();
        assert_eq!(linalg::max_abs(&h), 0.0);
        let x0 = PhaseVector::real(&[1.0, 0.0]).unwrap();
        for &t in &[1e-3, 0.1, 1.0] {
            let c = directional_lower_bound(&f, &chain, &x0, t).unwrap();
            assert!((c - a0 / 2.0).abs() < 1e-10);
        }
        assert!(matches!(f.assemble(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn kramers_coefficients_and_sign_conditions() {
        let (f, _) = form_of(&kramers());
        let c = &f.coeffs;
        assert_eq!(c.k0, 1);
        assert!(c.all_positive());
        assert!(c.sign_margins().iter().all(|&m| m > 0.0));
        // c1 from an independent route: M_3 and R_1 are diagonal here.
        let m3 = &f.m[3];
        let r1 = [1.0 / 16.0, 0.25, 0.25, 1.0];
        let c1_direct = (0..4).map(|i| m3[(i, i)] / r1[i]).fold(0.0f64, f64::max).max(1.0);
        assert!((c.c1 - c1_direct).abs() < 1e-12);
        let qt = f.qt(1.0).unwrap();
        let bound = c.c0 / 4.0 * c.a[..=1].iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(linalg::lambda_min(&qt) >= bound);
    }

    #[test]
    fn kramers_certificates() {
        let (f, chain) = form_of(&kramers());
        let grid = log_grid(1e-3, 1.0, 50);
        assert!(verify_lemma1(&f, &grid).unwrap().min_relative_margin >= -1e-10);
        let l3 = verify_lemma3(&f, &grid).unwrap();
        assert!(l3.passes(), "{l3:?}");
        let (_, rd) = hamilton_flow_bracket(&f, 0.1).unwrap();
        assert!(rd < 1e-12);
        assert_eq!(linalg::max_abs(&hamilton_flow_bracket(&f, 0.0).unwrap().0), 0.0);
        let eta = PhaseVector::basis(2, 3);
        let cs: Vec<f64> = grid.iter().map(|&t| directional_lower_bound(&f, &chain, &eta, t).unwrap()).collect();
        assert!(cs.iter().cloned().fold(f64::INFINITY, f64::min) > 0.0);
        for eps in [0.1, 1.0, 10.0] {
            assert!(cauchy_schwarz_margin(&f, eps) >= -1e-12);
        }
    }

    #[test]
    fn flipped_recursion_breaks_flow_bound() {
        let q = kramers();
        let chain = kernel_chain(&q, RankTol::default()).unwrap();
        let coeffs = multiplier_coefficients_with(&q, &chain, Recursion::FlippedSign).unwrap();
        let f = TimeQuadraticForm::new(&q, coeffs).unwrap();
        let l3 = verify_lemma3(&f, &log_grid(1e-4, 1.0, 50)).unwrap();
        assert!(!l3.passes(), "{l3:?}");
    }
}
