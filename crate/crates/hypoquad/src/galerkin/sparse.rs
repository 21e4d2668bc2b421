use faer::{c64, Mat};
use rayon::prelude::*;

use crate::linalg::CMat;

const PAR_ROWS: usize = 8192;

/// Compressed-row complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub dim: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<c64>,
}

impl Csr {
    /// Builds from (row, col, value) triplets; duplicates are summed, exact zeros dropped.
    pub fn from_triplets(dim: usize, mut t: Vec<(usize, usize, c64)>) -> Self {
        t.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols = Vec::with_capacity(t.len());
        let mut vals: Vec<c64> = Vec::with_capacity(t.len());
        let mut rows = Vec::with_capacity(t.len());
        for (r, c, v) in t {
            if let (Some(&lr), Some(&lc)) = (rows.last(), cols.last()) {
                if lr == r && lc == c {
                    *vals.last_mut().unwrap() += v;
                    continue;
                }
            }
            rows.push(r);
            cols.push(c);
            vals.push(v);
        }
        let keep: Vec<bool> = vals.iter().map(|v| *v != c64::new(0.0, 0.0)).collect();
        let mut fr = vec![];
        let mut fc = vec![];
        let mut fv = vec![];
        for i in 0..vals.len() {
            if keep[i] {
                fr.push(rows[i]);
                fc.push(cols[i]);
                fv.push(vals[i]);
            }
        }
        for &r in &fr {
            row_ptr[r + 1] += 1;
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        Csr { dim, row_ptr, cols: fc, vals: fv }
    }

    pub fn diagonal(d: &[c64]) -> Self {
        Self::from_triplets(d.len(), d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect())
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, c64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (self.cols[k], self.vals[k]))
    }

    pub fn get(&self, i: usize, j: usize) -> c64 {
        self.row(i).find(|&(c, _)| c == j).map(|(_, v)| v).unwrap_or(c64::new(0.0, 0.0))
    }

    pub fn triplets(&self) -> Vec<(usize, usize, c64)> {
        (0..self.dim).flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v))).collect()
    }

    pub fn apply_into(&self, x: &[c64], y: &mut [c64]) {
        let rowdot = |i: usize| -> c64 {
            let mut s = c64::new(0.0, 0.0);
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            s
        };
        if self.dim >= PAR_ROWS {
            y.par_iter_mut().enumerate().for_each(|(i, yi)| *yi = rowdot(i));
        } else {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = rowdot(i);
            }
        }
    }

    pub fn apply(&self, x: &[c64]) -> Vec<c64> {
        let mut y = vec![c64::new(0.0, 0.0); self.dim];
        self.apply_into(x, &mut y);
        y
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Csr {
        Csr::from_triplets(self.dim, self.triplets().into_iter().map(|(i, j, v)| (j, i, v.conj())).collect())
    }

    pub fn scale(&self, s: c64) -> Csr {
        Csr { vals: self.vals.iter().map(|v| v * s).collect(), ..self.clone() }
    }

    pub fn add(&self, other: &Csr) -> Csr {
        let mut t = self.triplets();
        t.extend(other.triplets());
        Csr::from_triplets(self.dim, t)
    }

    pub fn sub(&self, other: &Csr) -> Csr {
        self.add(&other.scale(c64::new(-1.0, 0.0)))
    }

    /// Max column sum of absolute values.
    pub fn norm1(&self) -> f64 {
        let mut col = vec![0.0f64; self.dim];
        for (k, &c) in self.cols.iter().enumerate() {
            col[c] += self.vals[k].norm();
        }
        col.into_iter().fold(0.0, f64::max)
    }

    pub fn trace(&self) -> c64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> CMat {
        let mut m = Mat::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                m[(i, j)] += v;
            }
        }
        m
    }

    /// Dense principal submatrix on the given index set.
    pub fn submatrix(&self, idx: &[usize]) -> CMat {
        let mut pos = vec![usize::MAX; self.dim];
        for (k, &i) in idx.iter().enumerate() {
            pos[i] = k;
        }
        let mut m = Mat::zeros(idx.len(), idx.len());
        for (a, &i) in idx.iter().enumerate() {
            for (j, v) in self.row(i) {
                if pos[j] != usize::MAX {
                    m[(a, pos[j])] += v;
                }
            }
        }
        m
    }
}

pub fn norm(x: &[c64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

pub fn dot(x: &[c64], y: &[c64]) -> c64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

pub fn axpy(a: c64, x: &[c64], y: &mut [c64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_roundtrip_and_duplicates() {
        let one = c64::new(1.0, 0.0);
        let m = Csr::from_triplets(3, vec![(0, 1, one), (0, 1, one), (2, 0, c64::new(0.0, 2.0)), (1, 1, c64::new(0.0, 0.0))]);
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 1), c64::new(2.0, 0.0));
        let y = m.apply(&[one, one, one]);
        assert_eq!(y, vec![c64::new(2.0, 0.0), c64::new(0.0, 0.0), c64::new(0.0, 2.0)]);
        let a = m.adjoint();
        assert_eq!(a.get(0, 2), c64::new(0.0, -2.0));
        assert_eq!(m.norm1(), 2.0);
    }
}
