//! Bottom of the spectrum from the Hamilton map, and Galerkin eigenvalues for comparison.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};

use faer::c64;
use serde::Serialize;

use super::operator::HermiteOperator;
use crate::error::{Error, Result};
use crate::linalg;
use crate::symplectic::{hamilton_map, QuadraticSymbol};

pub const PAIRING_TOL: f64 = 1e-9;
pub const DENSE_CAP: usize = 5000;

#[derive(Debug, Clone, Serialize)]
pub struct Mode {
    /// −iλ for an eigenvalue λ of F with Re(−iλ) > 0.
    pub value: (f64, f64),
    pub multiplicity: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumHead {
    pub modes: Vec<Mode>,
    /// Smallest-real-part lattice points Σ(r_λ + 2k_λ)(−iλ), as (re, im).
    pub lattice: Vec<(f64, f64)>,
    pub omega0: f64,
    pub mu0: (f64, f64),
}

fn cmp_c(a: &c64, b: &c64) -> Ordering {
    a.re.partial_cmp(&b.re).unwrap().then(a.im.partial_cmp(&b.im).unwrap())
}

#[derive(PartialEq)]
struct Node(f64, Vec<usize>);
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Node {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.partial_cmp(&self.0).unwrap().then_with(|| o.1.cmp(&self.1))
    }
}

pub fn spectrum_bottom(q: &QuadraticSymbol, m: usize) -> Result<SpectrumHead> {
    spectrum_bottom_tol(q, m, PAIRING_TOL)
}

pub fn spectrum_bottom_tol(q: &QuadraticSymbol, m: usize, pairing_tol: f64) -> Result<SpectrumHead> {
    let f = hamilton_map(q)?.f;
    let ev = linalg::balance_c(&f).eigenvalues().map_err(|e| Error::Inconsistency(format!("eigensolver: {e:?}")))?;
    let scale = 1.0 + linalg::norm2_c(&f);
    // −iλ = Im λ − i Re λ
    let mut sel: Vec<c64> = vec![];
    for l in &ev {
        let w = c64::new(l.im, -l.re);
        if w.re.abs() <= pairing_tol * scale {
            return Err(Error::AmbiguousSpectrum(format!("eigenvalue {l} of F lies on the pairing boundary")));
        }
        if w.re > 0.0 {
            sel.push(w);
        }
    }
    sel.sort_by(cmp_c);
    let cluster = 1e-6 * scale;
    let mut modes: Vec<(c64, usize)> = vec![];
    for w in sel {
        match modes.last_mut() {
            Some((c, r)) if (*c - w).norm() <= cluster => {
                *c = (*c * *r as f64 + w) / (*r as f64 + 1.0);
                *r += 1;
            }
            _ => modes.push((w, 1)),
        }
    }
    let mu0: c64 = modes.iter().map(|(w, r)| w * *r as f64).sum();
    let omega0 = mu0.re;

    let value = |k: &[usize]| -> c64 { mu0 + modes.iter().zip(k).map(|((w, _), &kk)| w * (2 * kk) as f64).sum::<c64>() };
    let mut heap = BinaryHeap::new();
    let mut seen = BTreeSet::new();
    let k0 = vec![0usize; modes.len()];
    heap.push(Node(mu0.re, k0.clone()));
    seen.insert(k0);
    let mut found: Vec<c64> = vec![];
    let mut cutoff = f64::INFINITY;
    while let Some(Node(re, k)) = heap.pop() {
        if re > cutoff + 1e-12 * scale {
            break;
        }
        let v = value(&k);
        if !found.iter().any(|f| (*f - v).norm() <= 1e-10 * scale) {
            found.push(v);
            if found.len() == m.max(1) {
                cutoff = re;
            }
        }
        for i in 0..k.len() {
            let mut nk = k.clone();
            nk[i] += 1;
            if seen.insert(nk.clone()) {
                heap.push(Node(value(&nk).re, nk));
            }
        }
        if modes.is_empty() {
            break;
        }
    }
    found.sort_by(cmp_c);
    found.truncate(m);
    Ok(SpectrumHead {
        modes: modes.iter().map(|(w, r)| Mode { value: (w.re, w.im), multiplicity: *r }).collect(),
        lattice: found.iter().map(|v| (v.re, v.im)).collect(),
        omega0,
        mu0: (mu0.re, mu0.im),
    })
}

/// All eigenvalues of the Galerkin matrix, sorted by (re, im). The two parity
/// classes of the total degree |α| are invariant under any quadratic operator
/// and are solved separately.
pub fn galerkin_eigenvalues(op: &HermiteOperator) -> Result<Vec<c64>> {
    let mut out = vec![];
    for parity in 0..2 {
        let idx: Vec<usize> = (0..op.dim()).filter(|&i| op.basis.degree(i) % 2 == parity).collect();
        if idx.is_empty() {
            continue;
        }
        if idx.len() > DENSE_CAP {
            return Err(Error::Resource(format!(
                "parity block of size {} exceeds the dense cap {DENSE_CAP}; reduce N",
                idx.len()
            )));
        }
        let block = op.a.submatrix(&idx);
        let ev = block.eigenvalues().map_err(|e| Error::Inconsistency(format!("eigensolver: {e:?}")))?;
        out.extend(ev);
    }
    out.sort_by(cmp_c);
    Ok(out)
}

/// Maximum distance under the best one-to-one matching of `a` to the |a|
/// smallest-real-part entries of `b` (b sorted by real part).
pub fn match_distance(a: &[(f64, f64)], b: &[c64]) -> f64 {
    let m = a.len();
    if b.len() < m {
        return f64::INFINITY;
    }
    let av: Vec<c64> = a.iter().map(|&(r, i)| c64::new(r, i)).collect();
    let bv = &b[..m];
    let mut best = f64::INFINITY;
    let mut perm: Vec<usize> = (0..m).collect();
    fn heap_permute(k: usize, p: &mut Vec<usize>, av: &[c64], bv: &[c64], best: &mut f64) {
        if k == 1 {
            let d = p.iter().enumerate().map(|(i, &j)| (av[i] - bv[j]).norm()).fold(0.0, f64::max);
            *best = best.min(d);
            return;
        }
        for i in 0..k {
            heap_permute(k - 1, p, av, bv, best);
            if k % 2 == 0 {
                p.swap(i, k - 1);
            } else {
                p.swap(0, k - 1);
            }
        }
    }
    if m <= 8 {
        heap_permute(m, &mut perm, &av, bv, &mut best);
        best
    } else {
        let mut used = vec![false; m];
        let mut worst: f64 = 0.0;
        for x in &av {
            let (j, d) = (0..m)
                .filter(|&j| !used[j])
                .map(|j| (j, (x - bv[j]).norm()))
                .min_by(|p, q| p.1.partial_cmp(&q.1).unwrap())
                .unwrap();
            used[j] = true;
            worst = worst.max(d);
        }
        worst
    }
}

pub fn to_pairs(v: &[c64]) -> Vec<(f64, f64)> {
    v.iter().map(|c| (c.re, c.im)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::galerkin::operator::quantize;
    use crate::symplectic::{harmonic_oscillator, kramers};

    #[test]
    fn oscillator_lattice() {
        let h = spectrum_bottom(&harmonic_oscillator(1), 3).unwrap();
        assert_eq!(h.lattice.len(), 3);
        for (k, v) in h.lattice.iter().enumerate() {
            assert!((v.0 - (k as f64 + 0.5)).abs() < 1e-14 && v.1.abs() < 1e-14);
        }
        assert!((h.omega0 - 0.5).abs() < 1e-14);
    }

    #[test]
    fn kramers_lattice_head() {
        let h = spectrum_bottom(&kramers(), 6).unwrap();
        let s3 = 3f64.sqrt();
        let want = [(0.5, 0.0), (1.0, -s3 / 2.0), (1.0, s3 / 2.0), (1.5, -s3), (1.5, 0.0), (1.5, s3)];
        for (g, w) in h.lattice.iter().zip(want) {
            assert!((g.0 - w.0).abs() < 1e-12 && (g.1 - w.1).abs() < 1e-12, "{:?}", h.lattice);
        }
        assert!((h.omega0 - 0.5).abs() < 1e-14);
    }

    #[test]
    fn small_kramers_galerkin_bottom() {
        let op = quantize(&kramers(), 16).unwrap();
        let ev = galerkin_eigenvalues(&op).unwrap();
        assert!((ev[0].re - 0.5).abs() < 1e-3, "{}", ev[0]);
    }

    #[test]
    fn purely_imaginary_symbol_is_ambiguous() {
        let mut im = crate::linalg::RMat::zeros(2, 2);
        im[(0, 0)] = 1.0;
        im[(1, 1)] = 1.0;
        let q = QuadraticSymbol::from_parts(1, &crate::linalg::RMat::zeros(2, 2), &im).unwrap();
        assert!(matches!(spectrum_bottom(&q, 3), Err(Error::AmbiguousSpectrum(_))));
    }

    #[test]
    fn matching() {
        let a = [(1.0, 0.0), (2.0, 0.0)];
        let b = [c64::new(2.0, 1e-5), c64::new(1.0, 0.0), c64::new(9.0, 0.0)];
        assert!(match_distance(&a, &b) <= 1e-5 + 1e-15);
    }
}
