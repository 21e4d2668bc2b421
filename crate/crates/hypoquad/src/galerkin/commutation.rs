//! Transport of linear observables through the semigroup:
//! L_{X0} e^{-tA} = e^{-tA} L_{T_t X0}, T_t = 𝒥 e^{2itF} 𝒥⁻¹, 𝒥(x,ξ) = (ξ,−x).

use faer::c64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::operator::{linear_observable, quantize, HermiteOperator};
use super::propagate::{expmv, PropagateOptions};
use super::sparse::{self, Csr};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::symplectic::{hamilton_map, PhaseVector, QuadraticSymbol};

/// 𝒥 as a matrix: the negative of J.
fn script_j(n: usize) -> CMat {
    linalg::to_complex(&linalg::scale(&linalg::j_matrix(n), -1.0))
}

pub fn transport_map(q: &QuadraticSymbol, t: f64) -> Result<CMat> {
    let n = q.n;
    let f = hamilton_map(q)?.f;
    let e = linalg::expm_c(&(&f * faer::Scale(c64::new(0.0, 2.0 * t))));
    let jj = script_j(n);
    // 𝒥⁻¹ = −𝒥
    Ok(&jj * &e * &jj * faer::Scale(c64::new(-1.0, 0.0)))
}

pub fn transported_direction(q: &QuadraticSymbol, x0: &PhaseVector, t: f64) -> Result<PhaseVector> {
    if x0.n != q.n {
        return Err(Error::Shape(format!("direction in dimension {} for a symbol in dimension {}", x0.n, q.n)));
    }
    let tm = transport_map(q, t)?;
    let y = (0..2 * q.n).map(|i| (0..2 * q.n).map(|j| tm[(i, j)] * x0.coords[j]).sum()).collect();
    PhaseVector::complex(y)
}

#[derive(Debug, Clone, Serialize)]
pub struct CommutationDefect {
    pub t: f64,
    pub nmax: usize,
    /// Operator-norm estimate on the whole truncated space.
    pub full: f64,
    /// Same, restricted to modes with every α_j ≤ N − margin.
    pub interior: f64,
    pub margin: usize,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct DefectOptions {
    pub margin: usize,
    pub max_iter: usize,
    pub rel_tol: f64,
    pub seed: u64,
}

impl Default for DefectOptions {
    fn default() -> Self {
        Self { margin: 2, max_iter: 60, rel_tol: 1e-4, seed: 0x7a11 }
    }
}

struct Defect<'a> {
    a: &'a Csr,
    a_adj: Csr,
    l: Csr,
    l_adj: Csr,
    lt: Csr,
    lt_adj: Csr,
    t: f64,
    opts: PropagateOptions,
}

impl Defect<'_> {
    fn apply(&self, v: &[c64]) -> Result<Vec<c64>> {
        let mut r = self.l.apply(&expmv(self.a, self.t, v, &self.opts)?);
        let s = expmv(self.a, self.t, &self.lt.apply(v), &self.opts)?;
        sparse::axpy(c64::new(-1.0, 0.0), &s, &mut r);
        Ok(r)
    }

    fn apply_adj(&self, w: &[c64]) -> Result<Vec<c64>> {
        let mut r = expmv(&self.a_adj, self.t, &self.l_adj.apply(w), &self.opts)?;
        let s = self.lt_adj.apply(&expmv(&self.a_adj, self.t, w, &self.opts)?);
        sparse::axpy(c64::new(-1.0, 0.0), &s, &mut r);
        Ok(r)
    }
}

fn power_norm(k: &Defect, mask: Option<&[bool]>, dim: usize, o: &DefectOptions) -> Result<(f64, usize)> {
    let project = |v: &mut Vec<c64>| {
        if let Some(m) = mask {
            v.iter_mut().zip(m).filter(|(_, &keep)| !keep).for_each(|(x, _)| *x = c64::new(0.0, 0.0));
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(o.seed);
    let mut v: Vec<c64> = (0..dim).map(|_| c64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
    project(&mut v);
    let mut est = 0.0;
    for it in 1..=o.max_iter {
        let nv = sparse::norm(&v);
        if nv == 0.0 {
            return Ok((0.0, it));
        }
        v.iter_mut().for_each(|x| *x /= nv);
        let mut w = k.apply(&v)?;
        project(&mut w);
        let new = sparse::norm(&w);
        if new == 0.0 {
            return Ok((0.0, it));
        }
        let mut z = k.apply_adj(&w)?;
        project(&mut z);
        // ‖K*Kv‖/‖Kv‖ is a sharper lower bound than ‖Kv‖
        let sharper = sparse::norm(&z) / new;
        let done = (sharper - est).abs() <= o.rel_tol * sharper;
        est = sharper;
        v = z;
        if done {
            return Ok((est, it));
        }
    }
    Ok((est, o.max_iter))
}

/// ‖L_{X0} e^{-tA} − e^{-tA} L_{T_t X0}‖ on the truncated space, by power
/// iteration on K*K with both semigroups applied through expmv.
pub fn commutation_defect(q: &QuadraticSymbol, x0: &PhaseVector, t: f64, nmax: usize) -> Result<CommutationDefect> {
    commutation_defect_with(q, x0, t, nmax, &DefectOptions::default())
}

pub fn commutation_defect_with(
    q: &QuadraticSymbol,
    x0: &PhaseVector,
    t: f64,
    nmax: usize,
    o: &DefectOptions,
) -> Result<CommutationDefect> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("t = {t} must be nonnegative")));
    }
    if t == 0.0 {
        return Ok(CommutationDefect { t, nmax, full: 0.0, interior: 0.0, margin: o.margin, iterations: 0 });
    }
    let op: HermiteOperator = quantize(q, nmax)?;
    let l = linear_observable(x0, nmax)?.a;
    let lt = linear_observable(&transported_direction(q, x0, t)?, nmax)?.a;
    let k = Defect {
        a: &op.a,
        a_adj: op.a.adjoint(),
        l_adj: l.adjoint(),
        lt_adj: lt.adjoint(),
        l,
        lt,
        t,
        opts: PropagateOptions::default(),
    };
    let dim = op.dim();
    let mut mask = vec![false; dim];
    for i in op.basis.interior(o.margin) {
        mask[i] = true;
    }
    let (full, it1) = power_norm(&k, None, dim, o)?;
    let (interior, it2) = power_norm(&k, Some(&mask), dim, o)?;
    Ok(CommutationDefect { t, nmax, full, interior, margin: o.margin, iterations: it1.max(it2) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symplectic::{harmonic_oscillator, kramers};

    #[test]
    fn oscillator_transport_is_hyperbolic_rotation() {
        let t = 0.3f64;
        let y = transported_direction(&harmonic_oscillator(1), &PhaseVector::real(&[1.0, 0.0]).unwrap(), t).unwrap();
        assert!((y.coords[0] - c64::new(t.cosh(), 0.0)).norm() < 1e-14);
        assert!((y.coords[1] - c64::new(0.0, -t.sinh())).norm() < 1e-14);
    }

    #[test]
    fn zero_time_is_exact() {
        let d = commutation_defect(&kramers(), &PhaseVector::basis(2, 0), 0.0, 8).unwrap();
        assert_eq!(d.full, 0.0);
    }

    #[test]
    fn oscillator_defect_vanishes_inside() {
        let d = commutation_defect(&harmonic_oscillator(1), &PhaseVector::real(&[1.0, 0.0]).unwrap(), 0.3, 24).unwrap();
        // diagonal A: the truncated ladder relations stay exact up to the top level
        assert!(d.interior < 1e-10 && d.full < 1e-10, "{d:?}");
    }
}
