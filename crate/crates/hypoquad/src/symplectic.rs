//! Quadratic symbols q(X) = Xᵀ M X on ℝ^{2n} (phase order x₁..xₙ, ξ₁..ξₙ),
//! their Hamilton maps and Poisson brackets.

use faer::{c64, Mat};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, RMat};

pub const PSD_FACTOR: f64 = 1e-10;
pub const SYM_FACTOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseVector {
    pub n: usize,
    pub coords: Vec<c64>,
}

impl PhaseVector {
    pub fn real(coords: &[f64]) -> Result<Self> {
        Self::complex(coords.iter().map(|&v| c64::new(v, 0.0)).collect())
    }

    pub fn complex(coords: Vec<c64>) -> Result<Self> {
        if coords.is_empty() || coords.len() % 2 != 0 {
            return Err(Error::Shape(format!("phase vector length {} is not 2n", coords.len())));
        }
        if coords.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::RejectedInput("non-finite phase vector entry".into()));
        }
        Ok(Self { n: coords.len() / 2, coords })
    }

    /// Unit vector along coordinate `idx` (0..n are x, n..2n are ξ).
    pub fn basis(n: usize, idx: usize) -> Self {
        let mut c = vec![c64::new(0.0, 0.0); 2 * n];
        c[idx] = c64::new(1.0, 0.0);
        Self { n, coords: c }
    }

    pub fn is_real(&self) -> bool {
        self.coords.iter().all(|c| c.im == 0.0)
    }

    pub fn real_part(&self) -> Vec<f64> {
        self.coords.iter().map(|c| c.re).collect()
    }

    pub fn norm(&self) -> f64 {
        self.coords.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn x(&self) -> &[c64] {
        &self.coords[..self.n]
    }

    pub fn xi(&self) -> &[c64] {
        &self.coords[self.n..]
    }
}

#[derive(Debug, Clone)]
pub struct QuadraticSymbol {
    pub n: usize,
    pub m: CMat,
    pub accretive: bool,
    pub label: Option<String>,
}

pub fn make_symbol(n: usize, m_raw: &CMat) -> Result<QuadraticSymbol> {
    if n == 0 || m_raw.nrows() != 2 * n || m_raw.ncols() != 2 * n {
        return Err(Error::Shape(format!(
            "coefficient matrix is {}x{}, expected {}x{}",
            m_raw.nrows(),
            m_raw.ncols(),
            2 * n,
            2 * n
        )));
    }
    if !linalg::all_finite(m_raw) {
        return Err(Error::RejectedInput("non-finite coefficient".into()));
    }
    let m = linalg::sym_c(m_raw);
    let eps = PSD_FACTOR * (1.0 + linalg::norm2_c(&m));
    let accretive = linalg::lambda_min(&linalg::re(&m)) >= -eps;
    Ok(QuadraticSymbol { n, m, accretive, label: None })
}

impl QuadraticSymbol {
    pub fn from_parts(n: usize, re: &RMat, im: &RMat) -> Result<Self> {
        make_symbol(n, &linalg::from_parts(re, im))
    }

    pub fn real(n: usize, m: &RMat) -> Result<Self> {
        make_symbol(n, &linalg::to_complex(m))
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn re_m(&self) -> RMat {
        linalg::re(&self.m)
    }

    pub fn im_m(&self) -> RMat {
        linalg::im(&self.m)
    }

    /// Re q as a (real) symbol.
    pub fn real_part(&self) -> QuadraticSymbol {
        QuadraticSymbol::real(self.n, &self.re_m()).expect("real part of a valid symbol")
    }

    /// Im q as a (real) symbol.
    pub fn imag_part(&self) -> QuadraticSymbol {
        QuadraticSymbol::real(self.n, &self.im_m()).expect("imaginary part of a valid symbol")
    }

    pub fn evaluate(&self, x: &PhaseVector) -> Result<c64> {
        self.polarized(x, x)
    }

    pub fn polarized(&self, x: &PhaseVector, y: &PhaseVector) -> Result<c64> {
        if x.n != self.n || y.n != self.n {
            return Err(Error::Shape(format!("symbol has n = {}, vectors have n = {}, {}", self.n, x.n, y.n)));
        }
        let d = 2 * self.n;
        let mut acc = c64::new(0.0, 0.0);
        for i in 0..d {
            let mut row = c64::new(0.0, 0.0);
            for j in 0..d {
                row += self.m[(i, j)] * y.coords[j];
            }
            acc += x.coords[i] * row;
        }
        Ok(acc)
    }

    /// α·self + β·other.
    pub fn combine(&self, alpha: c64, other: &QuadraticSymbol, beta: c64) -> Result<QuadraticSymbol> {
        if other.n != self.n {
            return Err(Error::Shape("symbols of different dimension".into()));
        }
        let m = Mat::from_fn(2 * self.n, 2 * self.n, |i, j| self.m[(i, j)] * alpha + other.m[(i, j)] * beta);
        make_symbol(self.n, &m)
    }
}

#[derive(Debug, Clone)]
pub struct HamiltonMap {
    pub n: usize,
    pub f: CMat,
}

impl HamiltonMap {
    pub fn re_f(&self) -> RMat {
        linalg::re(&self.f)
    }

    pub fn im_f(&self) -> RMat {
        linalg::im(&self.f)
    }

    /// ‖J F − (J F)ᵀ‖_max: zero for a σ-skew-symmetric map.
    pub fn skew_defect(&self) -> f64 {
        let jf = linalg::to_complex(&linalg::j_matrix(self.n)) * &self.f;
        let d = Mat::from_fn(jf.nrows(), jf.ncols(), |i, j| jf[(i, j)] - jf[(j, i)]);
        linalg::max_abs_c(&d)
    }

    pub fn eps_sym(&self) -> f64 {
        SYM_FACTOR * (1.0 + linalg::norm2_c(&self.f))
    }
}

/// F read off the Hessian blocks: F = ½[[∇ξ∇x q, ∇ξ²q], [−∇x²q, −∇x∇ξ q]], with Hessian 2M.
fn block_formula(q: &QuadraticSymbol) -> CMat {
    let n = q.n;
    let m = &q.m;
    Mat::from_fn(2 * n, 2 * n, |i, j| match (i < n, j < n) {
        (true, true) => m[(n + i, j)],
        (true, false) => m[(n + i, j)],
        (false, true) => -m[(i - n, j)],
        (false, false) => -m[(i - n, j)],
    })
}

pub fn hamilton_map(q: &QuadraticSymbol) -> Result<HamiltonMap> {
    let f = block_formula(q);
    let jm = linalg::to_complex(&linalg::j_matrix(q.n)) * &q.m;
    let alt = Mat::from_fn(jm.nrows(), jm.ncols(), |i, j| -jm[(i, j)]);
    let h = HamiltonMap { n: q.n, f };
    let diff = linalg::max_abs_c(&(&h.f - &alt));
    let eps = h.eps_sym();
    if diff > eps {
        return Err(Error::Inconsistency(format!("Hamilton map routes differ by {diff:e} > {eps:e}")));
    }
    let skew = h.skew_defect();
    if skew > eps {
        return Err(Error::Inconsistency(format!("Hamilton map not σ-skew-symmetric: {skew:e}")));
    }
    Ok(h)
}

/// Symbol with a prescribed Hamilton map: M = J F.
pub fn symbol_from_hamilton(n: usize, f: &CMat) -> Result<QuadraticSymbol> {
    let m = linalg::to_complex(&linalg::j_matrix(n)) * f;
    make_symbol(n, &m)
}

/// {q1, q2} = ∂ξq1·∂xq2 − ∂xq1·∂ξq2, computed from the commutator of Hamilton
/// maps and from the gradient pairing σ(∇q1, ∇q2); both must agree.
pub fn poisson_bracket(q1: &QuadraticSymbol, q2: &QuadraticSymbol) -> Result<QuadraticSymbol> {
    if q1.n != q2.n {
        return Err(Error::Shape(format!("bracket of n = {} and n = {}", q1.n, q2.n)));
    }
    let n = q1.n;
    let f1 = hamilton_map(q1)?.f;
    let f2 = hamilton_map(q2)?.f;
    let comm = &f1 * &f2 - &f2 * &f1;
    let fb = Mat::from_fn(2 * n, 2 * n, |i, j| comm[(i, j)] * -2.0);
    let by_commutator = symbol_from_hamilton(n, &fb)?;

    // ∇q(X) = 2 M X, σ(U, V) = Uᵀ J V.
    let j = linalg::to_complex(&linalg::j_matrix(n));
    let pairing = &q1.m * &j * &q2.m;
    let by_gradient = linalg::sym_c(&Mat::from_fn(2 * n, 2 * n, |i, k| pairing[(i, k)] * 4.0));

    let diff = linalg::max_abs_c(&(&by_commutator.m - &by_gradient));
    let eps = SYM_FACTOR * (1.0 + linalg::norm2_c(&f1)) * (1.0 + linalg::norm2_c(&f2));
    if diff > eps {
        return Err(Error::Inconsistency(format!("Poisson bracket routes differ by {diff:e}")));
    }
    Ok(by_commutator)
}

pub fn symplectic_form(x: &PhaseVector, y: &PhaseVector) -> Result<c64> {
    if x.n != y.n {
        return Err(Error::Shape(format!("σ of n = {} and n = {}", x.n, y.n)));
    }
    let n = x.n;
    let mut s = c64::new(0.0, 0.0);
    for i in 0..n {
        s += x.coords[n + i] * y.coords[i] - x.coords[i] * y.coords[n + i];
    }
    Ok(s)
}

/// σ on real coordinate slices.
pub fn sigma(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() / 2;
    (0..n).map(|i| x[n + i] * y[i] - x[i] * y[n + i]).sum()
}

/// (x² + ξ²)/2 in one dimension per coordinate pair.
pub fn harmonic_oscillator(n: usize) -> QuadraticSymbol {
    QuadraticSymbol::real(n, &linalg::scale(&RMat::identity(2 * n, 2 * n), 0.5))
        .unwrap()
        .with_label("harmonic-oscillator")
}

/// η² + v²/4 − i(vξ − xη) in phase order (x, v, ξ, η).
pub fn kramers() -> QuadraticSymbol {
    let mut re = RMat::zeros(4, 4);
    re[(1, 1)] = 0.25;
    re[(3, 3)] = 1.0;
    let mut im = RMat::zeros(4, 4);
    // −vξ: entries (v, ξ) = (1, 2); +xη: entries (x, η) = (0, 3).
    im[(1, 2)] = -0.5;
    im[(2, 1)] = -0.5;
    im[(0, 3)] = 0.5;
    im[(3, 0)] = 0.5;
    QuadraticSymbol::from_parts(2, &re, &im).unwrap().with_label("kramers")
}

/// Re M = CCᵀ with C of random width 1..=2n, Im M symmetric Gaussian. Accretive by
/// construction; the singular space may or may not be trivial.
pub fn random_accretive(rng: &mut ChaCha8Rng, n: usize) -> QuadraticSymbol {
    let d = 2 * n;
    let r = rng.random_range(1..=d);
    let c = Mat::from_fn(d, r, |_, _| rng.sample::<f64, _>(StandardNormal));
    let re = linalg::sym(&(&c * c.transpose()));
    let g = Mat::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let im = linalg::sym(&g);
    QuadraticSymbol::from_parts(n, &re, &im).expect("finite square input")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> c64 {
        c64::new(re, im)
    }

    #[test]
    fn symmetrizes_and_flags_indefinite() {
        let raw = Mat::from_fn(2, 2, |i, j| if (i, j) == (0, 1) { c(1.0, 0.0) } else { c(0.0, 0.0) });
        let q = make_symbol(1, &raw).unwrap();
        assert_eq!(q.m[(0, 1)], c(0.5, 0.0));
        assert_eq!(q.m[(1, 0)], c(0.5, 0.0));
        assert!(!q.accretive);
    }

    #[test]
    fn rejects_bad_input() {
        let raw = Mat::from_fn(2, 2, |_, _| c(f64::NAN, 0.0));
        assert!(matches!(make_symbol(1, &raw), Err(Error::RejectedInput(_))));
        let raw = CMat::zeros(3, 3);
        assert!(matches!(make_symbol(1, &raw), Err(Error::Shape(_))));
    }

    #[test]
    fn oscillator_values() {
        let q = harmonic_oscillator(1);
        assert!(q.accretive);
        let e1 = PhaseVector::real(&[1.0, 0.0]).unwrap();
        let e2 = PhaseVector::real(&[0.0, 1.0]).unwrap();
        assert_eq!(q.evaluate(&e1).unwrap(), c(0.5, 0.0));
        assert_eq!(q.polarized(&e1, &e2).unwrap(), c(0.0, 0.0));
        let f = hamilton_map(&q).unwrap().f;
        assert_eq!(f[(0, 1)], c(0.5, 0.0));
        assert_eq!(f[(1, 0)], c(-0.5, 0.0));
        assert_eq!(f[(0, 0)], c(0.0, 0.0));
    }

    #[test]
    fn kramers_values() {
        let q = kramers();
        assert!(q.accretive);
        let e_eta = PhaseVector::basis(2, 3);
        assert_eq!(q.evaluate(&e_eta).unwrap(), c(1.0, 0.0));
        // q(x, v, ξ, η) at (1, 2, 3, 4): 16 + 1 − i(6 − 4)
        let x = PhaseVector::real(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        let v = q.evaluate(&x).unwrap();
        assert!((v - c(17.0, -2.0)).norm() < 1e-14);
    }

    #[test]
    fn x_xi_hamilton_map() {
        let raw = Mat::from_fn(2, 2, |i, j| if i != j { c(0.5, 0.0) } else { c(0.0, 0.0) });
        let f = hamilton_map(&make_symbol(1, &raw).unwrap()).unwrap().f;
        assert_eq!(f[(0, 0)], c(0.5, 0.0));
        assert_eq!(f[(1, 1)], c(-0.5, 0.0));
        assert_eq!(f[(0, 1)], c(0.0, 0.0));
    }

    #[test]
    fn oscillator_hamilton_eigenvalues() {
        let f = hamilton_map(&harmonic_oscillator(1)).unwrap().f;
        let mut ev = f.eigenvalues().unwrap();
        ev.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap());
        assert!((ev[0] - c(0.0, -0.5)).norm() < 1e-14);
        assert!((ev[1] - c(0.0, 0.5)).norm() < 1e-14);
    }

    #[test]
    fn bracket_x_xi_with_x_squared() {
        let xxi = make_symbol(1, &Mat::from_fn(2, 2, |i, j| if i != j { c(0.5, 0.0) } else { c(0.0, 0.0) })).unwrap();
        let x2 = make_symbol(1, &Mat::from_fn(2, 2, |i, j| if (i, j) == (0, 0) { c(1.0, 0.0) } else { c(0.0, 0.0) })).unwrap();
        let b = poisson_bracket(&xxi, &x2).unwrap();
        assert!((b.m[(0, 0)] - c(2.0, 0.0)).norm() < 1e-15);
        assert!(b.m[(0, 1)].norm() < 1e-15 && b.m[(1, 1)].norm() < 1e-15);
        let self_b = poisson_bracket(&xxi, &xxi).unwrap();
        assert!(linalg::max_abs_c(&self_b.m) < 1e-15);
    }

    #[test]
    fn symplectic_form_signs() {
        let n = 2;
        let ex1 = PhaseVector::basis(n, 0);
        let exi1 = PhaseVector::basis(n, 2);
        assert_eq!(symplectic_form(&ex1, &exi1).unwrap(), c(-1.0, 0.0));
        assert_eq!(symplectic_form(&exi1, &ex1).unwrap(), c(1.0, 0.0));
        let a = PhaseVector::real(&[1.0, 0.0]).unwrap();
        let b = PhaseVector::real(&[0.0, 1.0]).unwrap();
        assert_eq!(symplectic_form(&a, &b).unwrap(), c(-1.0, 0.0));
        assert_eq!(sigma(&[1.0, 0.0], &[0.0, 1.0]), -1.0);
    }
}
