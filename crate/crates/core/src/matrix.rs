//! Dense matrices over a ring, with exact Gaussian elimination over fields.
//!
//! Convention: a matrix representing a map V -> W has `rows = dim W` and
//! `cols = dim V` and acts on column vectors.

use crate::ring::{Field, RationalField, Ring};
use crate::scalar::Rational;

#[derive(Clone, PartialEq, Debug)]
pub struct Matrix<R: Ring> {
    pub rows: usize,
    pub cols: usize,
    entries: Vec<R::Elem>,
}

impl<R: Ring> Matrix<R> {
    pub fn zero(ring: &R, rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, entries: vec![ring.zero(); rows * cols] }
    }

    pub fn identity(ring: &R, n: usize) -> Self {
        let mut m = Matrix::zero(ring, n, n);
        for i in 0..n {
            m.set(i, i, ring.one());
        }
        m
    }

    pub fn from_rows(ring: &R, rows: Vec<Vec<R::Elem>>) -> crate::Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(crate::Error::Shape("ragged rows".into()));
        }
        let _ = ring;
        Ok(Matrix { rows: r, cols: c, entries: rows.into_iter().flatten().collect() })
    }

    pub fn from_fn(ring: &R, rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> R::Elem) -> Self {
        let mut m = Matrix::zero(ring, rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    pub fn get(&self, i: usize, j: usize) -> &R::Elem {
        &self.entries[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: R::Elem) {
        self.entries[i * self.cols + j] = v;
    }

    pub fn is_zero(&self, ring: &R) -> bool {
        self.entries.iter().all(|e| ring.is_zero(e))
    }

    pub fn add(&self, ring: &R, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch in add");
        let entries =
            self.entries.iter().zip(&other.entries).map(|(a, b)| ring.add(a, b)).collect();
        Matrix { rows: self.rows, cols: self.cols, entries }
    }

    pub fn sub(&self, ring: &R, other: &Self) -> Self {
        self.add(ring, &other.neg(ring))
    }

    pub fn neg(&self, ring: &R) -> Self {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|a| ring.neg(a)).collect(),
        }
    }

    pub fn scale(&self, ring: &R, c: &R::Elem) -> Self {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|a| ring.mul(c, a)).collect(),
        }
    }

    pub fn mul(&self, ring: &R, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "shape mismatch in mul");
        let mut out = Matrix::zero(ring, self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                if ring.is_zero(self.get(i, k)) {
                    continue;
                }
                for j in 0..other.cols {
                    let p = ring.mul(self.get(i, k), other.get(k, j));
                    let s = ring.add(out.get(i, j), &p);
                    out.set(i, j, s);
                }
            }
        }
        out
    }

    pub fn transpose(&self, ring: &R) -> Self {
        Matrix::from_fn(ring, self.cols, self.rows, |i, j| self.get(j, i).clone())
    }

    pub fn apply(&self, ring: &R, v: &[R::Elem]) -> Vec<R::Elem> {
        assert_eq!(self.cols, v.len(), "shape mismatch in apply");
        (0..self.rows)
            .map(|i| {
                let mut acc = ring.zero();
                for j in 0..self.cols {
                    acc = ring.add(&acc, &ring.mul(self.get(i, j), &v[j]));
                }
                acc
            })
            .collect()
    }

    /// Writes `block` into self with top-left corner at (r0, c0).
    pub fn set_block(&mut self, r0: usize, c0: usize, block: &Self) {
        assert!(r0 + block.rows <= self.rows && c0 + block.cols <= self.cols, "block out of range");
        for i in 0..block.rows {
            for j in 0..block.cols {
                self.set(r0 + i, c0 + j, block.get(i, j).clone());
            }
        }
    }

    pub fn map<S: Ring>(&self, target: &S, mut f: impl FnMut(&R::Elem) -> S::Elem) -> Matrix<S> {
        let _ = target;
        Matrix { rows: self.rows, cols: self.cols, entries: self.entries.iter().map(|e| f(e)).collect() }
    }

    pub fn row(&self, i: usize) -> Vec<R::Elem> {
        (0..self.cols).map(|j| self.get(i, j).clone()).collect()
    }
}

/// Result of row reduction: reduced matrix, pivot columns, rank.
pub struct Rref<F: Field> {
    pub mat: Matrix<F>,
    pub pivots: Vec<usize>,
}

impl<F: Field> Matrix<F> {
    pub fn rref(&self, field: &F) -> Rref<F> {
        let mut m = self.clone();
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..m.cols {
            if r == m.rows {
                break;
            }
            let Some(p) = (r..m.rows).find(|&i| !field.is_zero(m.get(i, c))) else { continue };
            for j in 0..m.cols {
                let tmp = m.get(r, j).clone();
                let v = m.get(p, j).clone();
                m.set(r, j, v);
                m.set(p, j, tmp);
            }
            let inv = field.inv(m.get(r, c));
            for j in 0..m.cols {
                let v = field.mul(m.get(r, j), &inv);
                m.set(r, j, v);
            }
            for i in 0..m.rows {
                if i != r && !field.is_zero(m.get(i, c)) {
                    let factor = m.get(i, c).clone();
                    for j in 0..m.cols {
                        let v = field.sub(m.get(i, j), &field.mul(&factor, m.get(r, j)));
                        m.set(i, j, v);
                    }
                }
            }
            pivots.push(c);
            r += 1;
        }
        Rref { mat: m, pivots }
    }

    pub fn rank(&self, field: &F) -> usize {
        self.rref(field).pivots.len()
    }

    /// Basis of the kernel (as column vectors), from the reduced form.
    pub fn kernel_basis(&self, field: &F) -> Vec<Vec<F::Elem>> {
        let red = self.rref(field);
        let pivot_set: std::collections::BTreeSet<usize> = red.pivots.iter().copied().collect();
        let mut basis = Vec::new();
        for free in 0..self.cols {
            if pivot_set.contains(&free) {
                continue;
            }
            let mut v = vec![field.zero(); self.cols];
            v[free] = field.one();
            for (r, &pc) in red.pivots.iter().enumerate() {
                v[pc] = field.neg(red.mat.get(r, free));
            }
            basis.push(v);
        }
        basis
    }

    /// One solution of self * x = b, if any.
    pub fn solve(&self, field: &F, b: &[F::Elem]) -> Option<Vec<F::Elem>> {
        assert_eq!(self.rows, b.len(), "shape mismatch in solve");
        let mut aug = Matrix::zero(field, self.rows, self.cols + 1);
        aug.set_block(0, 0, self);
        for i in 0..self.rows {
            aug.set(i, self.cols, b[i].clone());
        }
        let red = aug.rref(field);
        if red.pivots.contains(&self.cols) {
            return None;
        }
        let mut x = vec![field.zero(); self.cols];
        for (r, &pc) in red.pivots.iter().enumerate() {
            x[pc] = red.mat.get(r, self.cols).clone();
        }
        Some(x)
    }

    /// Inverse of a square matrix, if invertible.
    pub fn inverse(&self, field: &F) -> Option<Self> {
        assert_eq!(self.rows, self.cols, "inverse of non-square matrix");
        let n = self.rows;
        let mut aug = Matrix::zero(field, n, 2 * n);
        aug.set_block(0, 0, self);
        aug.set_block(0, n, &Matrix::identity(field, n));
        let red = aug.rref(field);
        if red.pivots.len() < n || red.pivots.iter().take(n).enumerate().any(|(i, &p)| i != p) {
            return None;
        }
        let mut out = Matrix::zero(field, n, n);
        for i in 0..n {
            for j in 0..n {
                out.set(i, j, red.mat.get(i, n + j).clone());
            }
        }
        Some(out)
    }
}

impl Matrix<crate::ring::PolyRing> {
    /// Entrywise evaluation at a base point and l value.
    pub fn eval_point(&self, point: &[Rational], lambda: &Rational) -> Matrix<RationalField> {
        self.map(&RationalField, |p| p.eval(point, lambda))
    }
}
