//! Finite filtered dgas over a coefficient ring and the Maurer-Cartan
//! geometry they carry: structure equations as an explicit quadratic
//! variety, gauge transport, staged lifting along filtered maps, tangent
//! cohomology, and specialization of a formal deformation parameter.
//!
//! A dga is stored through a filtered basis: every basis vector carries a
//! filtration level, `J^k` is the span of the vectors of level at least
//! `k`, and `J^kmax = 0`.  Differential and product must respect levels,
//! which makes `J^1` nilpotent and every solver below a finite exact
//! computation over the coefficient field.
//!
//! Instances whose natural degree range is unbounded above are cut off at
//! `degree_cap`; identities are then only asserted where every intermediate
//! term stays inside the materialized range, and callers of the solvers get
//! honest errors when a computation would need degrees past the cap.

use std::collections::BTreeMap;

use rand::Rng;

use crate::complexes::{cone, ChainMap, FreeComplex};
use crate::hochschild::{unit_word, word_level, QCtx, QElement, TensorWord};
use crate::matrix::Matrix;
use crate::poly::Poly;
use crate::ring::{Field, PolyRing, RationalField, Ring};
use crate::scalar::Rational;
use crate::{Error, Result};

fn vzero<R: Ring>(ring: &R, n: usize) -> Vec<R::Elem> {
    vec![ring.zero(); n]
}

fn vadd<R: Ring>(ring: &R, a: &[R::Elem], b: &[R::Elem]) -> Vec<R::Elem> {
    a.iter().zip(b).map(|(x, y)| ring.add(x, y)).collect()
}

fn vsub<R: Ring>(ring: &R, a: &[R::Elem], b: &[R::Elem]) -> Vec<R::Elem> {
    a.iter().zip(b).map(|(x, y)| ring.sub(x, y)).collect()
}

fn vscale<R: Ring>(ring: &R, c: &R::Elem, a: &[R::Elem]) -> Vec<R::Elem> {
    a.iter().map(|x| ring.mul(c, x)).collect()
}

fn vis_zero<R: Ring>(ring: &R, a: &[R::Elem]) -> bool {
    a.iter().all(|x| ring.is_zero(x))
}

fn vdot<R: Ring>(ring: &R, a: &[R::Elem], b: &[R::Elem]) -> R::Elem {
    let mut acc = ring.zero();
    for (x, y) in a.iter().zip(b) {
        acc = ring.add(&acc, &ring.mul(x, y));
    }
    acc
}

/// Finite filtered dga with unit, augmentation, and a distinguished
/// degree-one base element supported in filtration level zero.
#[derive(Clone, Debug)]
pub struct FiniteFilteredDGA<R: Ring> {
    pub complex: FreeComplex<R>,
    /// Structure constants: the matrix at `(p, q)` sends the pair basis of
    /// `Z^p (x) Z^q` (row-major, `a * rank(q) + b`) to coordinates of
    /// `Z^(p+q)`.
    pub product: BTreeMap<(i32, i32), Matrix<R>>,
    /// Coordinates of the algebra unit in degree zero.
    pub unit: Vec<R::Elem>,
    /// Filtration level of each basis vector, per degree.
    pub level: BTreeMap<i32, Vec<u32>>,
    /// First vanishing stage of the filtration.
    pub kmax: u32,
    /// Augmentation on degree zero; it must kill `J^1` and send the unit
    /// to one.
    pub eps: Vec<R::Elem>,
    /// Base Maurer-Cartan element in degree one, supported in level zero
    /// and satisfying the structure equation modulo `J^1`.
    pub eta0: Vec<R::Elem>,
    /// Highest materialized degree, when the natural range is infinite.
    pub degree_cap: Option<i32>,
}

/// How hard `validate` works on the quadratic and cubic axioms.
#[derive(Clone, Copy, Debug)]
pub enum ValidationDepth {
    /// Check the product axioms on every basis pair and triple.
    Full,
    /// Check the product axioms on seeded random basis picks.
    Sampled { seed: u64, trials: usize },
}

/// Outcome of `validate`: an empty violation list means every checked
/// identity holds.
#[derive(Clone, Debug)]
pub struct DgaReport {
    pub violations: Vec<String>,
    pub sampled: bool,
}

impl DgaReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// One structure equation: `constant + sum linear + sum quadratic = 0`,
/// indexed by a degree-two coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct McEquation<R: Ring> {
    pub row: usize,
    pub constant: R::Elem,
    pub linear: BTreeMap<usize, R::Elem>,
    pub quadratic: BTreeMap<(usize, usize), R::Elem>,
}

/// The structure equations of a dga, with one variable per degree-one
/// basis vector of positive level.
#[derive(Clone, Debug)]
pub struct MCVariety<R: Ring> {
    /// Degree-one coordinate index of each variable.
    pub vars: Vec<usize>,
    pub equations: Vec<McEquation<R>>,
    /// Width of the degree-two coordinate space the rows live in.
    pub rows: usize,
}

impl<R: Ring> MCVariety<R> {
    /// Evaluates all equations at a variable assignment, returning the full
    /// degree-two defect vector.
    pub fn eval_defect(&self, ring: &R, x: &[R::Elem]) -> Result<Vec<R::Elem>> {
        if x.len() != self.vars.len() {
            return Err(Error::Shape(format!(
                "expected {} variables, got {}",
                self.vars.len(),
                x.len()
            )));
        }
        let mut out = vzero(ring, self.rows);
        for eq in &self.equations {
            let mut acc = eq.constant.clone();
            for (&v, c) in &eq.linear {
                acc = ring.add(&acc, &ring.mul(c, &x[v]));
            }
            for (&(v, w), c) in &eq.quadratic {
                let prod = ring.mul(&x[v], &x[w]);
                acc = ring.add(&acc, &ring.mul(c, &prod));
            }
            out[eq.row] = ring.add(&out[eq.row], &acc);
        }
        Ok(out)
    }
}

impl<F: Field> MCVariety<F> {
    /// Jacobian of the equations at a variable assignment; rows follow the
    /// degree-two coordinates, columns the variables.
    pub fn jacobian(&self, field: &F, x: &[F::Elem]) -> Result<Matrix<F>> {
        if x.len() != self.vars.len() {
            return Err(Error::Shape("variable count mismatch".into()));
        }
        let mut m = Matrix::zero(field, self.rows, self.vars.len());
        for eq in &self.equations {
            for (&v, c) in &eq.linear {
                let cur = m.get(eq.row, v).clone();
                m.set(eq.row, v, field.add(&cur, c));
            }
            for (&(v, w), c) in &eq.quadratic {
                let cur = m.get(eq.row, v).clone();
                m.set(eq.row, v, field.add(&cur, &field.mul(c, &x[w])));
                let cur = m.get(eq.row, w).clone();
                m.set(eq.row, w, field.add(&cur, &field.mul(c, &x[v])));
            }
        }
        Ok(m)
    }
}

impl<R: Ring> FiniteFilteredDGA<R> {
    pub fn ring(&self) -> &R {
        &self.complex.ring
    }

    pub fn rank(&self, i: i32) -> usize {
        self.complex.rank(i)
    }

    pub fn degrees(&self) -> Vec<i32> {
        self.complex.degrees()
    }

    /// Whether a degree sits inside the materialized range.
    pub fn in_cap(&self, i: i32) -> bool {
        match self.degree_cap {
            Some(c) => i <= c,
            None => true,
        }
    }

    pub fn level_of(&self, i: i32, idx: usize) -> u32 {
        self.level.get(&i).map(|v| v[idx]).unwrap_or(0)
    }

    /// Structure-constant matrix for a degree pair, zero when absent.
    pub fn prod(&self, p: i32, q: i32) -> Matrix<R> {
        match self.product.get(&(p, q)) {
            Some(m) => m.clone(),
            None => Matrix::zero(
                self.ring(),
                self.rank(p + q),
                self.rank(p) * self.rank(q),
            ),
        }
    }

    /// Product of two basis vectors, read off a structure-constant column.
    pub fn basis_mul(&self, p: i32, a: usize, q: i32, b: usize) -> Vec<R::Elem> {
        let m = self.prod(p, q);
        let col = a * self.rank(q) + b;
        (0..m.rows).map(|r| m.get(r, col).clone()).collect()
    }

    /// Product of two coordinate vectors of the given degrees.
    pub fn mul(&self, p: i32, a: &[R::Elem], q: i32, b: &[R::Elem]) -> Vec<R::Elem> {
        let ring = self.ring();
        let mut out = vzero(ring, self.rank(p + q));
        let m = self.prod(p, q);
        for (ia, ca) in a.iter().enumerate() {
            if ring.is_zero(ca) {
                continue;
            }
            for (ib, cb) in b.iter().enumerate() {
                if ring.is_zero(cb) {
                    continue;
                }
                let c = ring.mul(ca, cb);
                let col = ia * self.rank(q) + ib;
                for (r, dst) in out.iter_mut().enumerate() {
                    *dst = ring.add(dst, &ring.mul(&c, m.get(r, col)));
                }
            }
        }
        out
    }

    /// Differential applied to a coordinate vector of the given degree.
    pub fn dvec(&self, i: i32, v: &[R::Elem]) -> Vec<R::Elem> {
        self.complex.diff(i).apply(self.ring(), v)
    }

    /// Indices of the basis vectors of a degree sitting in exactly the
    /// given level.
    pub fn grade_indices(&self, i: i32, g: u32) -> Vec<usize> {
        (0..self.rank(i)).filter(|&b| self.level_of(i, b) == g).collect()
    }

    /// Zeroes every coordinate whose level differs from `g`.
    pub fn grade_slice(&self, i: i32, v: &[R::Elem], g: u32) -> Vec<R::Elem> {
        let ring = self.ring();
        v.iter()
            .enumerate()
            .map(|(b, x)| if self.level_of(i, b) == g { x.clone() } else { ring.zero() })
            .collect()
    }

    /// Zeroes every coordinate of level below `g`.
    pub fn level_floor(&self, i: i32, v: &[R::Elem], g: u32) -> Vec<R::Elem> {
        let ring = self.ring();
        v.iter()
            .enumerate()
            .map(|(b, x)| if self.level_of(i, b) >= g { x.clone() } else { ring.zero() })
            .collect()
    }

    fn basis_vec(&self, i: i32, b: usize) -> Vec<R::Elem> {
        let ring = self.ring();
        let mut v = vzero(ring, self.rank(i));
        v[b] = ring.one();
        v
    }

    /// Structural and axiomatic checks.  Differential, unit, filtration,
    /// augmentation, and base element are always checked in full; the
    /// Leibniz rule and associativity follow the requested depth.
    pub fn validate(&self, depth: ValidationDepth) -> DgaReport {
        let ring = self.ring().clone();
        let mut violations = Vec::new();
        let degs = self.degrees();

        for &i in &degs {
            let want = self.rank(i);
            let got = self.level.get(&i).map(|v| v.len()).unwrap_or(0);
            if got != want {
                violations.push(format!(
                    "degree {i} stores {got} levels for {want} basis vectors"
                ));
            }
            for b in 0..self.rank(i) {
                if self.level_of(i, b) >= self.kmax {
                    violations.push(format!(
                        "degree {i} basis {b} has level {} but the filtration dies at {}",
                        self.level_of(i, b),
                        self.kmax
                    ));
                }
            }
        }
        if self.unit.len() != self.rank(0) {
            violations.push("unit vector width disagrees with degree zero".into());
        }
        if self.eps.len() != self.rank(0) {
            violations.push("augmentation width disagrees with degree zero".into());
        }
        if self.eta0.len() != self.rank(1) {
            violations.push("base element width disagrees with degree one".into());
        }
        if !violations.is_empty() {
            return DgaReport { violations, sampled: false };
        }

        for &i in &degs {
            if !self.in_cap(i + 1) {
                continue;
            }
            let d = self.complex.diff(i);
            for b in 0..self.rank(i) {
                let lb = self.level_of(i, b);
                for r in 0..d.rows {
                    if !ring.is_zero(d.get(r, b)) && self.level_of(i + 1, r) < lb {
                        violations.push(format!(
                            "differential drops the level of degree {i} basis {b}"
                        ));
                    }
                }
            }
            if self.in_cap(i + 2) {
                let dd = self.complex.diff(i + 1).mul(&ring, &d);
                if !dd.is_zero(&ring) {
                    violations.push(format!("differential does not square to zero at degree {i}"));
                }
            }
        }

        for (&(p, q), m) in &self.product {
            if !self.in_cap(p + q) {
                violations.push(format!("product at ({p}, {q}) lands past the degree cap"));
                continue;
            }
            if m.rows != self.rank(p + q) || m.cols != self.rank(p) * self.rank(q) {
                violations.push(format!("product matrix at ({p}, {q}) has the wrong shape"));
                continue;
            }
            for a in 0..self.rank(p) {
                for b in 0..self.rank(q) {
                    let floor = self.level_of(p, a) + self.level_of(q, b);
                    let col = a * self.rank(q) + b;
                    for r in 0..m.rows {
                        if !ring.is_zero(m.get(r, col)) && self.level_of(p + q, r) < floor {
                            violations.push(format!(
                                "product of ({p}, {a}) and ({q}, {b}) drops below level {floor}"
                            ));
                        }
                    }
                }
            }
        }

        if self.rank(0) > 0 {
            for &i in &degs {
                if !self.in_cap(i) {
                    continue;
                }
                for b in 0..self.rank(i) {
                    let e = self.basis_vec(i, b);
                    if self.mul(0, &self.unit, i, &e) != e {
                        violations.push(format!("left unit law fails at degree {i} basis {b}"));
                    }
                    if self.mul(i, &e, 0, &self.unit) != e {
                        violations.push(format!("right unit law fails at degree {i} basis {b}"));
                    }
                }
            }
            let mut eu = ring.zero();
            for (b, c) in self.eps.iter().enumerate() {
                eu = ring.add(&eu, &ring.mul(c, &self.unit[b]));
                if self.level_of(0, b) >= 1 && !ring.is_zero(c) {
                    violations.push(format!("augmentation sees the positive level coordinate {b}"));
                }
            }
            if !ring.is_one(&eu) {
                violations.push("augmentation does not send the unit to one".into());
            }
        }

        for (b, c) in self.eta0.iter().enumerate() {
            if self.level_of(1, b) >= 1 && !ring.is_zero(c) {
                violations.push(format!("base element touches the positive level coordinate {b}"));
            }
        }
        if self.in_cap(2) {
            let f = vadd(&ring, &self.dvec(1, &self.eta0), &self.mul(1, &self.eta0, 1, &self.eta0));
            let f0 = self.grade_slice(2, &f, 0);
            if !vis_zero(&ring, &f0) {
                violations.push("base element fails its structure equation at level zero".into());
            }
        }

        let mut pairs: Vec<(i32, usize, i32, usize)> = Vec::new();
        let mut triples: Vec<(i32, usize, i32, usize, i32, usize)> = Vec::new();
        let mut sampled = false;
        match depth {
            ValidationDepth::Full => {
                for &p in &degs {
                    for &q in &degs {
                        if !self.in_cap(p + q + 1) || !self.in_cap(p + 1) || !self.in_cap(q + 1) {
                            continue;
                        }
                        for a in 0..self.rank(p) {
                            for b in 0..self.rank(q) {
                                pairs.push((p, a, q, b));
                            }
                        }
                    }
                }
                for &p in &degs {
                    for &q in &degs {
                        for &r in &degs {
                            if !self.in_cap(p + q + r)
                                || !self.in_cap(p + q)
                                || !self.in_cap(q + r)
                            {
                                continue;
                            }
                            for a in 0..self.rank(p) {
                                for b in 0..self.rank(q) {
                                    for c in 0..self.rank(r) {
                                        triples.push((p, a, q, b, r, c));
                                    }
                                }
                            }
                        }
                    }
                }
            }
            ValidationDepth::Sampled { seed, trials } => {
                sampled = true;
                let mut rng = crate::gen::rng_from_seed(seed);
                let picks: Vec<(i32, usize)> = degs
                    .iter()
                    .flat_map(|&i| (0..self.rank(i)).map(move |b| (i, b)))
                    .collect();
                if !picks.is_empty() {
                    for _ in 0..trials {
                        let (p, a) = picks[rng.gen_range(0..picks.len())];
                        let (q, b) = picks[rng.gen_range(0..picks.len())];
                        if self.in_cap(p + q + 1) && self.in_cap(p + 1) && self.in_cap(q + 1) {
                            pairs.push((p, a, q, b));
                        }
                        let (r, c) = picks[rng.gen_range(0..picks.len())];
                        if self.in_cap(p + q + r) && self.in_cap(p + q) && self.in_cap(q + r) {
                            triples.push((p, a, q, b, r, c));
                        }
                    }
                }
            }
        }

        for (p, a, q, b) in pairs {
            let ea = self.basis_vec(p, a);
            let eb = self.basis_vec(q, b);
            let lhs = self.dvec(p + q, &self.mul(p, &ea, q, &eb));
            let mut rhs = self.mul(p + 1, &self.dvec(p, &ea), q, &eb);
            let sign = if p.rem_euclid(2) == 0 { ring.one() } else { ring.neg(&ring.one()) };
            let second = vscale(&ring, &sign, &self.mul(p, &ea, q + 1, &self.dvec(q, &eb)));
            rhs = vadd(&ring, &rhs, &second);
            if lhs != rhs {
                violations.push(format!(
                    "leibniz fails on degree {p} basis {a} times degree {q} basis {b}"
                ));
            }
        }

        for (p, a, q, b, r, c) in triples {
            let ea = self.basis_vec(p, a);
            let eb = self.basis_vec(q, b);
            let ec = self.basis_vec(r, c);
            let lhs = self.mul(p + q, &self.mul(p, &ea, q, &eb), r, &ec);
            let rhs = self.mul(p, &ea, q + r, &self.mul(q, &eb, r, &ec));
            if lhs != rhs {
                violations.push(format!(
                    "associativity fails on ({p}, {a}), ({q}, {b}), ({r}, {c})"
                ));
            }
        }

        DgaReport { violations, sampled }
    }

    /// Indices of the degree-one coordinates of positive level, the
    /// variables of the structure equations.
    pub fn mc_vars(&self) -> Vec<usize> {
        (0..self.rank(1)).filter(|&b| self.level_of(1, b) >= 1).collect()
    }

    /// Full degree-one vector for a variable assignment over the base
    /// element.
    pub fn eta_full(&self, x: &[R::Elem]) -> Result<Vec<R::Elem>> {
        let vars = self.mc_vars();
        if x.len() != vars.len() {
            return Err(Error::Shape(format!(
                "expected {} variables, got {}",
                vars.len(),
                x.len()
            )));
        }
        let mut out = self.eta0.clone();
        for (v, c) in vars.iter().zip(x) {
            out[*v] = self.ring().add(&out[*v], c);
        }
        Ok(out)
    }

    /// The structure defect `d(eta) + eta * eta` of a full degree-one
    /// vector.
    pub fn mc_defect(&self, eta: &[R::Elem]) -> Result<Vec<R::Elem>> {
        if eta.len() != self.rank(1) {
            return Err(Error::Shape("degree one coordinate width mismatch".into()));
        }
        if !self.in_cap(2) {
            return Err(Error::Window("degree two is past the materialized cap".into()));
        }
        Ok(vadd(self.ring(), &self.dvec(1, eta), &self.mul(1, eta, 1, eta)))
    }

    /// Whether a full degree-one vector is a Maurer-Cartan point over the
    /// base element: level-zero part pinned, defect exactly zero.
    pub fn is_mc_point(&self, eta: &[R::Elem]) -> Result<bool> {
        let ring = self.ring();
        if eta.len() != self.rank(1) {
            return Err(Error::Shape("degree one coordinate width mismatch".into()));
        }
        let base = self.grade_slice(1, eta, 0);
        if base != self.eta0 {
            return Ok(false);
        }
        Ok(vis_zero(ring, &self.mc_defect(eta)?))
    }

    /// The structure equations over the base element, one per degree-two
    /// coordinate that is touched.
    pub fn mc_equations(&self) -> Result<MCVariety<R>> {
        let ring = self.ring();
        if !self.in_cap(2) {
            return Err(Error::Window("degree two is past the materialized cap".into()));
        }
        let vars = self.mc_vars();
        let rows = self.rank(2);
        let constant = self.mc_defect(&self.eta0)?;
        let mut linear: Vec<BTreeMap<usize, R::Elem>> = vec![BTreeMap::new(); rows];
        for (vi, &v) in vars.iter().enumerate() {
            let ev = self.basis_vec(1, v);
            let mut col = self.dvec(1, &ev);
            col = vadd(ring, &col, &self.mul(1, &self.eta0, 1, &ev));
            col = vadd(ring, &col, &self.mul(1, &ev, 1, &self.eta0));
            for (r, c) in col.into_iter().enumerate() {
                if !ring.is_zero(&c) {
                    linear[r].insert(vi, c);
                }
            }
        }
        let mut quadratic: Vec<BTreeMap<(usize, usize), R::Elem>> = vec![BTreeMap::new(); rows];
        for (vi, &v) in vars.iter().enumerate() {
            for (wi, &w) in vars.iter().enumerate().skip(vi) {
                let mut col = self.basis_mul(1, v, 1, w);
                if wi > vi {
                    col = vadd(ring, &col, &self.basis_mul(1, w, 1, v));
                }
                for (r, c) in col.into_iter().enumerate() {
                    if !ring.is_zero(&c) {
                        quadratic[r].insert((vi, wi), c);
                    }
                }
            }
        }
        let mut equations = Vec::new();
        for r in 0..rows {
            let eq = McEquation {
                row: r,
                constant: constant[r].clone(),
                linear: std::mem::take(&mut linear[r]),
                quadratic: std::mem::take(&mut quadratic[r]),
            };
            let trivial = ring.is_zero(&eq.constant)
                && eq.linear.is_empty()
                && eq.quadratic.is_empty();
            if !trivial {
                equations.push(eq);
            }
        }
        Ok(MCVariety { vars, equations, rows })
    }

    /// Matrix of `a |-> d(a) + phi * a - (-1)^i a * eta` on degree `i`,
    /// the twisted differential with source `eta` and target `phi`.
    pub fn twisted_matrix(&self, i: i32, phi: &[R::Elem], eta: &[R::Elem]) -> Matrix<R> {
        let ring = self.ring().clone();
        let rows = self.rank(i + 1);
        let cols = self.rank(i);
        let mut m = Matrix::zero(&ring, rows, cols);
        let sign = if i.rem_euclid(2) == 0 { ring.neg(&ring.one()) } else { ring.one() };
        for b in 0..cols {
            let e = self.basis_vec(i, b);
            let mut col = self.dvec(i, &e);
            col = vadd(&ring, &col, &self.mul(1, phi, i, &e));
            col = vadd(&ring, &col, &vscale(&ring, &sign, &self.mul(i, &e, 1, eta)));
            for (r, c) in col.into_iter().enumerate() {
                m.set(r, b, c);
            }
        }
        m
    }

    /// Quotient by `J^k`: drops every basis vector of level `k` or more.
    /// Returns the quotient together with the projection map.
    pub fn truncate(&self, k: u32) -> (FiniteFilteredDGA<R>, DgaMap<R>) {
        let ring = self.ring().clone();
        let mut keep: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
        for &i in &self.degrees() {
            keep.insert(
                i,
                (0..self.rank(i)).filter(|&b| self.level_of(i, b) < k).collect(),
            );
        }
        let ranks: BTreeMap<i32, usize> = keep.iter().map(|(&i, v)| (i, v.len())).collect();
        let mut complex = FreeComplex::new(ring.clone(), ranks);
        for &i in &self.degrees() {
            if complex.rank(i + 1) == 0 || complex.rank(i) == 0 {
                continue;
            }
            let old = self.complex.diff(i);
            let rows = keep.get(&(i + 1)).cloned().unwrap_or_default();
            let cols = keep.get(&i).cloned().unwrap_or_default();
            let m = Matrix::from_fn(&ring, rows.len(), cols.len(), |r, c| {
                old.get(rows[r], cols[c]).clone()
            });
            complex.set_diff(i, m).expect("restricted differential keeps its shape");
        }
        let mut product = BTreeMap::new();
        for (&(p, q), m) in &self.product {
            let rows = keep.get(&(p + q)).cloned().unwrap_or_default();
            let colsp = keep.get(&p).cloned().unwrap_or_default();
            let colsq = keep.get(&q).cloned().unwrap_or_default();
            if rows.is_empty() || colsp.is_empty() || colsq.is_empty() {
                continue;
            }
            let new = Matrix::from_fn(&ring, rows.len(), colsp.len() * colsq.len(), |r, c| {
                let a = colsp[c / colsq.len()];
                let b = colsq[c % colsq.len()];
                m.get(rows[r], a * self.rank(q) + b).clone()
            });
            if !new.is_zero(&ring) {
                product.insert((p, q), new);
            }
        }
        let restrict = |i: i32, v: &[R::Elem]| -> Vec<R::Elem> {
            keep[&i].iter().map(|&b| v[b].clone()).collect()
        };
        let level = keep
            .iter()
            .map(|(&i, v)| (i, v.iter().map(|&b| self.level_of(i, b)).collect()))
            .collect();
        let out = FiniteFilteredDGA {
            complex,
            product,
            unit: if self.rank(0) > 0 { restrict(0, &self.unit) } else { Vec::new() },
            level,
            kmax: k,
            eps: if self.rank(0) > 0 { restrict(0, &self.eps) } else { Vec::new() },
            eta0: if self.rank(1) > 0 { restrict(1, &self.eta0) } else { Vec::new() },
            degree_cap: self.degree_cap,
        };
        let mut components = BTreeMap::new();
        for (&i, kept) in &keep {
            if kept.is_empty() || self.rank(i) == 0 {
                continue;
            }
            let m = Matrix::from_fn(&ring, kept.len(), self.rank(i), |r, c| {
                if kept[r] == c { ring.one() } else { ring.zero() }
            });
            components.insert(i, m);
        }
        (out, DgaMap { components })
    }
}

/// Map of filtered dgas, stored like a chain map.
#[derive(Clone, Debug)]
pub struct DgaMap<R: Ring> {
    pub components: BTreeMap<i32, Matrix<R>>,
}

impl<R: Ring> DgaMap<R> {
    pub fn identity(z: &FiniteFilteredDGA<R>) -> Self {
        let mut components = BTreeMap::new();
        for i in z.degrees() {
            components.insert(i, Matrix::identity(z.ring(), z.rank(i)));
        }
        DgaMap { components }
    }

    pub fn component(
        &self,
        src: &FiniteFilteredDGA<R>,
        tgt: &FiniteFilteredDGA<R>,
        i: i32,
    ) -> Matrix<R> {
        match self.components.get(&i) {
            Some(m) => m.clone(),
            None => Matrix::zero(src.ring(), tgt.rank(i), src.rank(i)),
        }
    }

    pub fn apply(
        &self,
        src: &FiniteFilteredDGA<R>,
        tgt: &FiniteFilteredDGA<R>,
        i: i32,
        v: &[R::Elem],
    ) -> Vec<R::Elem> {
        self.component(src, tgt, i).apply(src.ring(), v)
    }

    /// Checks that this is a map of filtered unital dgas compatible with
    /// augmentation and base element.
    pub fn check(
        &self,
        src: &FiniteFilteredDGA<R>,
        tgt: &FiniteFilteredDGA<R>,
    ) -> Result<()> {
        let ring = src.ring().clone();
        for (&i, m) in &self.components {
            if m.rows != tgt.rank(i) || m.cols != src.rank(i) {
                return Err(Error::Shape(format!(
                    "component at degree {i} must be {}x{}",
                    tgt.rank(i),
                    src.rank(i)
                )));
            }
        }
        let mut degs = src.degrees();
        degs.extend(tgt.degrees());
        degs.sort_unstable();
        degs.dedup();
        for &i in &degs {
            if !src.in_cap(i + 1) || !tgt.in_cap(i + 1) {
                continue;
            }
            let lhs = tgt.complex.diff(i).mul(&ring, &self.component(src, tgt, i));
            let rhs = self.component(src, tgt, i + 1).mul(&ring, &src.complex.diff(i));
            if !lhs.sub(&ring, &rhs).is_zero(&ring) {
                return Err(Error::Validation(format!(
                    "map fails to commute with the differentials at degree {i}"
                )));
            }
        }
        for &i in &degs {
            let m = self.component(src, tgt, i);
            for b in 0..src.rank(i) {
                let lb = src.level_of(i, b);
                for r in 0..m.rows {
                    if !ring.is_zero(m.get(r, b)) && tgt.level_of(i, r) < lb {
                        return Err(Error::Validation(format!(
                            "map drops the level of degree {i} basis {b}"
                        )));
                    }
                }
            }
        }
        if src.rank(0) > 0 {
            let u = self.apply(src, tgt, 0, &src.unit);
            if u != tgt.unit {
                return Err(Error::Validation("map does not preserve the unit".into()));
            }
            for b in 0..src.rank(0) {
                let e = src.basis_vec(0, b);
                let fe = self.apply(src, tgt, 0, &e);
                let lhs = vdot(&ring, &tgt.eps, &fe);
                let rhs = vdot(&ring, &src.eps, &e);
                if lhs != rhs {
                    return Err(Error::Validation(
                        "map does not preserve the augmentation".into(),
                    ));
                }
            }
        }
        if src.rank(1) > 0 || tgt.rank(1) > 0 {
            let f0 = self.apply(src, tgt, 1, &src.eta0);
            if f0 != tgt.eta0 {
                return Err(Error::Validation("map does not preserve the base element".into()));
            }
        }
        for &p in &degs {
            for &q in &degs {
                if !src.in_cap(p + q) || !tgt.in_cap(p + q) {
                    continue;
                }
                for a in 0..src.rank(p) {
                    for b in 0..src.rank(q) {
                        let ea = src.basis_vec(p, a);
                        let eb = src.basis_vec(q, b);
                        let lhs = self.apply(src, tgt, p + q, &src.mul(p, &ea, q, &eb));
                        let rhs = tgt.mul(
                            p,
                            &self.apply(src, tgt, p, &ea),
                            q,
                            &self.apply(src, tgt, q, &eb),
                        );
                        if lhs != rhs {
                            return Err(Error::Validation(format!(
                                "map is not multiplicative on ({p}, {a}) and ({q}, {b})"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Exact homology ranks of a complex over a field, skipping degrees whose
/// outgoing differential would leave the materialized window.
fn field_homology<F: Field>(
    c: &FreeComplex<F>,
    skip_above: Option<i32>,
) -> BTreeMap<i32, usize> {
    let field = &c.ring;
    let mut out = BTreeMap::new();
    for i in c.degrees() {
        if let Some(cap) = skip_above {
            if i + 1 > cap {
                continue;
            }
        }
        let din = c.diff(i - 1).rank(field);
        let dout = c.diff(i).rank(field);
        let h = c.rank(i) as i64 - din as i64 - dout as i64;
        assert!(h >= 0, "rank bookkeeping underflow, the complex does not square to zero");
        out.insert(i, h as usize);
    }
    out
}

impl<F: Field> FiniteFilteredDGA<F> {
    /// The level-`g` graded piece with the differential twisted by the base
    /// element.  Multiplication by the positive level structure defect
    /// raises the level, so the restriction squares to zero for every
    /// valid instance.
    pub fn grade_complex(&self, g: u32) -> FreeComplex<F> {
        let field = self.ring().clone();
        let mut ranks = BTreeMap::new();
        let mut picks: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
        for i in self.degrees() {
            let v = self.grade_indices(i, g);
            if !v.is_empty() {
                ranks.insert(i, v.len());
                picks.insert(i, v);
            }
        }
        let mut out = FreeComplex::new(field.clone(), ranks);
        let degs = out.degrees();
        for &i in &degs {
            let (Some(cols), Some(rows)) = (picks.get(&i), picks.get(&(i + 1))) else {
                continue;
            };
            if !self.in_cap(i + 1) {
                continue;
            }
            let full = self.twisted_matrix(i, &self.eta0, &self.eta0);
            let m = Matrix::from_fn(&field, rows.len(), cols.len(), |r, c| {
                full.get(rows[r], cols[c]).clone()
            });
            out.set_diff(i, m).expect("graded differential keeps its shape");
        }
        out
    }

    /// Smallest `k` with every twisted graded piece of level at least `k`
    /// acyclic; above this level the quotient by the filtration stage loses
    /// nothing.
    pub fn find_k0(&self) -> u32 {
        let mut k0 = 0;
        for g in 0..self.kmax {
            let c = self.grade_complex(g);
            let h = field_homology(&c, self.degree_cap);
            if h.values().any(|&r| r != 0) {
                k0 = g + 1;
            }
        }
        k0
    }

    /// Cohomology of the positive filtration levels under the twist by a
    /// Maurer-Cartan point, reported for every degree whose neighbours are
    /// materialized.
    pub fn tangent_cohomology(&self, eta: &[F::Elem]) -> Result<BTreeMap<i32, usize>> {
        let field = self.ring().clone();
        if !self.is_mc_point(eta)? {
            return Err(Error::Validation(
                "tangent cohomology is only defined at a point satisfying the structure equation"
                    .into(),
            ));
        }
        let mut picks: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
        for i in self.degrees() {
            let v: Vec<usize> =
                (0..self.rank(i)).filter(|&b| self.level_of(i, b) >= 1).collect();
            if !v.is_empty() {
                picks.insert(i, v);
            }
        }
        let restricted = |i: i32| -> Matrix<F> {
            let full = self.twisted_matrix(i, eta, eta);
            let cols = picks.get(&i).cloned().unwrap_or_default();
            let rows = picks.get(&(i + 1)).cloned().unwrap_or_default();
            Matrix::from_fn(&field, rows.len(), cols.len(), |r, c| {
                full.get(rows[r], cols[c]).clone()
            })
        };
        let mut out = BTreeMap::new();
        for (&i, v) in &picks {
            if !self.in_cap(i + 1) {
                continue;
            }
            let dout = restricted(i);
            let din = restricted(i - 1);
            let consec = dout.mul(&field, &din);
            if !consec.is_zero(&field) {
                return Err(Error::Validation(format!(
                    "twisted differential does not square to zero at degree {}",
                    i - 1
                )));
            }
            out.insert(i, v.len() - dout.rank(&field) - din.rank(&field));
        }
        Ok(out)
    }

    /// Inverse of a degree-zero vector congruent to the unit modulo `J^1`.
    pub fn invert_unital(&self, alpha: &[F::Elem]) -> Result<Vec<F::Elem>> {
        let field = self.ring().clone();
        if alpha.len() != self.rank(0) {
            return Err(Error::Shape("degree zero coordinate width mismatch".into()));
        }
        if self.grade_slice(0, alpha, 0) != self.unit {
            return Err(Error::Validation(
                "inversion needs a vector congruent to the unit modulo the filtration".into(),
            ));
        }
        let n = vsub(&field, alpha, &self.unit);
        let mut acc = self.unit.clone();
        let mut term = self.unit.clone();
        for _ in 0..=self.kmax {
            term = vscale(&field, &field.neg(&field.one()), &self.mul(0, &term, 0, &n));
            if vis_zero(&field, &term) {
                return Ok(acc);
            }
            acc = vadd(&field, &acc, &term);
        }
        Err(Error::Unsolvable("inversion did not terminate within the filtration".into()))
    }

    /// Transport of a Maurer-Cartan point along an invertible degree-zero
    /// vector: the unique `psi` with `d(alpha) + phi * alpha = alpha * psi`.
    /// The defect of the output equals the conjugated defect of the input,
    /// so transport preserves the structure equation exactly.
    pub fn gauge_transport(&self, alpha: &[F::Elem], phi: &[F::Elem]) -> Result<Vec<F::Elem>> {
        let field = self.ring();
        let inv = self.invert_unital(alpha)?;
        let mut num = self.mul(1, phi, 0, alpha);
        num = vadd(field, &num, &self.dvec(0, alpha));
        Ok(self.mul(0, &inv, 1, &num))
    }

    /// Chart point over a Maurer-Cartan point: feeds the positive level
    /// gauge coordinates through transport and verifies both defining
    /// equations exactly.
    pub fn chart_fiber(
        &self,
        phi: &[F::Elem],
        alpha_positive: &[F::Elem],
    ) -> Result<ChartPoint<F>> {
        let field = self.ring().clone();
        if !self.is_mc_point(phi)? {
            return Err(Error::Validation(
                "the chart sits over a point satisfying the structure equation".into(),
            ));
        }
        let coords: Vec<usize> =
            (0..self.rank(0)).filter(|&b| self.level_of(0, b) >= 1).collect();
        if alpha_positive.len() != coords.len() {
            return Err(Error::Shape(format!(
                "expected {} gauge coordinates, got {}",
                coords.len(),
                alpha_positive.len()
            )));
        }
        let mut alpha = self.unit.clone();
        for (b, c) in coords.iter().zip(alpha_positive) {
            alpha[*b] = field.add(&alpha[*b], c);
        }
        let psi = self.gauge_transport(&alpha, phi)?;
        if !self.is_mc_point(&psi)? {
            return Err(Error::Validation(
                "transport produced a point violating the structure equation".into(),
            ));
        }
        let mut residue = self.dvec(0, &alpha);
        residue = vadd(&field, &residue, &self.mul(1, phi, 0, &alpha));
        residue = vsub(&field, &residue, &self.mul(0, &alpha, 1, &psi));
        if !vis_zero(&field, &residue) {
            return Err(Error::Validation("transport equation failed to close".into()));
        }
        Ok(ChartPoint { alpha, psi })
    }

    /// Solves the transport equation `d(alpha) + phi * alpha = alpha * psi`
    /// for `alpha` congruent to the unit modulo `J^1`.  On failure the
    /// outcome carries an exact certificate: a functional killing the
    /// reachable set but not the requested difference.
    pub fn gauge_solve(&self, phi: &[F::Elem], psi: &[F::Elem]) -> Result<GaugeOutcome<F>> {
        let field = self.ring().clone();
        if !self.is_mc_point(phi)? || !self.is_mc_point(psi)? {
            return Err(Error::Validation(
                "gauge equivalence only relates points satisfying the structure equation".into(),
            ));
        }
        let coords: Vec<usize> =
            (0..self.rank(0)).filter(|&b| self.level_of(0, b) >= 1).collect();
        let rows = self.rank(1);
        let mut sys = Matrix::zero(&field, rows, coords.len());
        for (ci, &b) in coords.iter().enumerate() {
            let e = self.basis_vec(0, b);
            let mut col = self.dvec(0, &e);
            col = vadd(&field, &col, &self.mul(1, phi, 0, &e));
            col = vsub(&field, &col, &self.mul(0, &e, 1, psi));
            for (r, c) in col.into_iter().enumerate() {
                sys.set(r, ci, c);
            }
        }
        let rhs = vsub(&field, psi, phi);
        match sys.solve(&field, &rhs) {
            Some(x) => {
                let mut alpha = self.unit.clone();
                for (ci, &b) in coords.iter().enumerate() {
                    alpha[b] = field.add(&alpha[b], &x[ci]);
                }
                let back = self.gauge_transport(&alpha, phi)?;
                if back != psi {
                    return Err(Error::Validation(
                        "solved gauge fails to transport the source onto the target".into(),
                    ));
                }
                Ok(GaugeOutcome { alpha: Some(alpha), witness: None })
            }
            None => {
                let witness = cokernel_witness(&field, &sys, &rhs);
                Ok(GaugeOutcome { alpha: None, witness })
            }
        }
    }
}

/// A gauge together with its transported point.
#[derive(Clone, Debug)]
pub struct ChartPoint<F: Field> {
    pub alpha: Vec<F::Elem>,
    pub psi: Vec<F::Elem>,
}

/// Result of a gauge solve: either a gauge vector or an exact
/// inconsistency certificate for the linear system.
#[derive(Clone, Debug)]
pub struct GaugeOutcome<F: Field> {
    pub alpha: Option<Vec<F::Elem>>,
    pub witness: Option<Vec<F::Elem>>,
}

/// A functional vanishing on the column space of `a` but not on `b`;
/// exists exactly when `a x = b` has no solution over a field.
fn cokernel_witness<F: Field>(field: &F, a: &Matrix<F>, b: &[F::Elem]) -> Option<Vec<F::Elem>> {
    let t = a.transpose(field);
    for y in t.kernel_basis(field) {
        if !field.is_zero(&vdot(field, &y, b)) {
            return Some(y);
        }
    }
    None
}

/// One stage of a staged lift.
#[derive(Clone, Debug)]
pub struct TransportStage {
    pub grade: u32,
    pub structure_entries: usize,
    pub comparison_entries: usize,
    pub solved: bool,
}

/// Why a staged lift stopped, with the level, the exact residue, and the
/// graded cohomology it represents a class in.
#[derive(Clone, Debug)]
pub struct TransportObstruction<F: Field> {
    pub grade: u32,
    pub kind: String,
    pub residue: Vec<F::Elem>,
    pub witness: Option<Vec<F::Elem>>,
    pub grade_h: BTreeMap<i32, usize>,
}

/// Result of transporting a Maurer-Cartan point backwards along a filtered
/// map: a point upstairs plus the gauge matching its image with the given
/// point, or an obstruction.
#[derive(Clone, Debug)]
pub struct TransportOutcome<F: Field> {
    pub eta: Option<Vec<F::Elem>>,
    pub alpha: Option<Vec<F::Elem>>,
    pub stages: Vec<TransportStage>,
    pub obstruction: Option<TransportObstruction<F>>,
}

fn graded_chain_map<F: Field>(
    map: &DgaMap<F>,
    src: &FiniteFilteredDGA<F>,
    tgt: &FiniteFilteredDGA<F>,
    g: u32,
    src_grade: &FreeComplex<F>,
    tgt_grade: &FreeComplex<F>,
) -> ChainMap<F> {
    let field = src.ring().clone();
    let mut components = BTreeMap::new();
    let mut degs = src_grade.degrees();
    degs.extend(tgt_grade.degrees());
    degs.sort_unstable();
    degs.dedup();
    for i in degs {
        let cols = src.grade_indices(i, g);
        let rows = tgt.grade_indices(i, g);
        let full = map.component(src, tgt, i);
        let m = Matrix::from_fn(&field, rows.len(), cols.len(), |r, c| {
            full.get(rows[r], cols[c]).clone()
        });
        components.insert(i, m);
    }
    ChainMap { components }
}

/// Lifts a Maurer-Cartan point of the target back through a filtered dga
/// map whose graded pieces in positive levels are quasiisomorphisms.  The
/// lift is built one filtration level at a time; each stage solves one
/// exact linear system for the structure defect and one for the comparison
/// with the transported target point.
pub fn gm_transport<F: Field>(
    src: &FiniteFilteredDGA<F>,
    tgt: &FiniteFilteredDGA<F>,
    map: &DgaMap<F>,
    phi: &[F::Elem],
) -> Result<TransportOutcome<F>> {
    let field = src.ring().clone();
    map.check(src, tgt)?;
    if !tgt.is_mc_point(phi)? {
        return Err(Error::Validation(
            "the point to lift does not satisfy the structure equation".into(),
        ));
    }
    let top = src.kmax.max(tgt.kmax).saturating_sub(1);
    let cap = match (src.degree_cap, tgt.degree_cap) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (Some(a), None) => Some(a),
        (None, b) => b,
    };

    for g in 1..=top {
        let sg = src.grade_complex(g);
        let tg = tgt.grade_complex(g);
        let f = graded_chain_map(map, src, tgt, g, &sg, &tg);
        let c = cone(&sg, &tg, &f)?;
        let h = field_homology(&c, cap.map(|x| x - 1));
        if h.values().any(|&r| r != 0) {
            return Ok(TransportOutcome {
                eta: None,
                alpha: None,
                stages: Vec::new(),
                obstruction: Some(TransportObstruction {
                    grade: g,
                    kind: "the graded comparison map is not a quasiisomorphism".into(),
                    residue: Vec::new(),
                    witness: None,
                    grade_h: h,
                }),
            });
        }
    }

    let mut eta = src.eta0.clone();
    let mut alpha = tgt.unit.clone();
    let mut stages = Vec::new();

    for g in 1..=top {
        let defect = src.mc_defect(&eta)?;
        let r = src.grade_slice(2, &defect, g);
        let structure_entries =
            r.iter().filter(|c| !field.is_zero(c)).count();
        if structure_entries > 0 {
            let wcoords = src.grade_indices(1, g);
            let rrows = src.grade_indices(2, g);
            let tmat = src.twisted_matrix(1, &src.eta0, &src.eta0);
            let sys = Matrix::from_fn(&field, rrows.len(), wcoords.len(), |rr, cc| {
                tmat.get(rrows[rr], wcoords[cc]).clone()
            });
            let rhs: Vec<F::Elem> =
                rrows.iter().map(|&b| field.neg(&r[b])).collect();
            match sys.solve(&field, &rhs) {
                Some(u) => {
                    for (ci, &b) in wcoords.iter().enumerate() {
                        eta[b] = field.add(&eta[b], &u[ci]);
                    }
                }
                None => {
                    let witness = cokernel_witness(&field, &sys, &rhs);
                    let h = field_homology(&src.grade_complex(g), cap);
                    return Ok(TransportOutcome {
                        eta: None,
                        alpha: None,
                        stages,
                        obstruction: Some(TransportObstruction {
                            grade: g,
                            kind: "the structure defect does not bound in the graded piece"
                                .into(),
                            residue: r,
                            witness,
                            grade_h: h,
                        }),
                    });
                }
            }
        }

        let transported = tgt.gauge_transport(&alpha, phi)?;
        let mapped = map.apply(src, tgt, 1, &eta);
        let delta = tgt.grade_slice(1, &vsub(&field, &transported, &mapped), g);
        let comparison_entries = delta.iter().filter(|c| !field.is_zero(c)).count();
        if comparison_entries > 0 {
            let wcoords = src.grade_indices(1, g);
            let bcoords = tgt.grade_indices(0, g);
            let qrows = src.grade_indices(2, g);
            let zrows = tgt.grade_indices(1, g);
            let tq = src.twisted_matrix(1, &src.eta0, &src.eta0);
            let tz = tgt.twisted_matrix(0, &tgt.eta0, &tgt.eta0);
            let fmat = map.component(src, tgt, 1);
            let rows = qrows.len() + zrows.len();
            let cols = wcoords.len() + bcoords.len();
            let mut sys = Matrix::zero(&field, rows, cols);
            for (cc, &b) in wcoords.iter().enumerate() {
                for (rr, &row) in qrows.iter().enumerate() {
                    sys.set(rr, cc, tq.get(row, b).clone());
                }
                for (rr, &row) in zrows.iter().enumerate() {
                    sys.set(qrows.len() + rr, cc, fmat.get(row, b).clone());
                }
            }
            for (cc, &b) in bcoords.iter().enumerate() {
                for (rr, &row) in zrows.iter().enumerate() {
                    sys.set(
                        qrows.len() + rr,
                        wcoords.len() + cc,
                        field.neg(tz.get(row, b)),
                    );
                }
            }
            let mut rhs = vzero(&field, rows);
            for (rr, &row) in zrows.iter().enumerate() {
                rhs[qrows.len() + rr] = delta[row].clone();
            }
            match sys.solve(&field, &rhs) {
                Some(x) => {
                    for (ci, &b) in wcoords.iter().enumerate() {
                        eta[b] = field.add(&eta[b], &x[ci]);
                    }
                    let mut beta = tgt.unit.clone();
                    for (ci, &b) in bcoords.iter().enumerate() {
                        beta[b] = field.add(&beta[b], &x[wcoords.len() + ci]);
                    }
                    alpha = tgt.mul(0, &alpha, 0, &beta);
                }
                None => {
                    let witness = cokernel_witness(&field, &sys, &rhs);
                    let h = field_homology(&tgt.grade_complex(g), cap);
                    return Ok(TransportOutcome {
                        eta: None,
                        alpha: None,
                        stages,
                        obstruction: Some(TransportObstruction {
                            grade: g,
                            kind: "the comparison defect does not lift through the graded piece"
                                .into(),
                            residue: delta,
                            witness,
                            grade_h: h,
                        }),
                    });
                }
            }
        }

        stages.push(TransportStage {
            grade: g,
            structure_entries,
            comparison_entries,
            solved: true,
        });
    }

    if !src.is_mc_point(&eta)? {
        return Err(Error::Validation(
            "staged lifting terminated on a point violating the structure equation".into(),
        ));
    }
    let mapped = map.apply(src, tgt, 1, &eta);
    let mut residue = tgt.dvec(0, &alpha);
    residue = vadd(&field, &residue, &tgt.mul(1, phi, 0, &alpha));
    residue = vsub(&field, &residue, &tgt.mul(0, &alpha, 1, &mapped));
    if !vis_zero(&field, &residue) {
        return Err(Error::Validation(
            "staged lifting terminated with an open transport equation".into(),
        ));
    }
    Ok(TransportOutcome { eta: Some(eta), alpha: Some(alpha), stages, obstruction: None })
}

impl FiniteFilteredDGA<PolyRing> {
    /// Specializes the formal parameter to a rational value.  Every entry
    /// must be constant after the substitution.
    pub fn specialize_lambda(&self, value: &Rational) -> Result<FiniteFilteredDGA<RationalField>> {
        let field = RationalField;
        let conv = |p: &Poly| -> Result<Rational> {
            let s = p.subst_lambda(value);
            if !s.is_constant() {
                return Err(Error::Validation(
                    "specialization left a base variable in a coefficient".into(),
                ));
            }
            Ok(s.constant_term())
        };
        let ranks: BTreeMap<i32, usize> =
            self.degrees().iter().map(|&i| (i, self.rank(i))).collect();
        let mut complex = FreeComplex::new(field, ranks);
        for i in self.degrees() {
            if self.rank(i + 1) == 0 || self.rank(i) == 0 {
                continue;
            }
            let old = self.complex.diff(i);
            let mut m = Matrix::zero(&field, old.rows, old.cols);
            for r in 0..old.rows {
                for c in 0..old.cols {
                    m.set(r, c, conv(old.get(r, c))?);
                }
            }
            complex.set_diff(i, m)?;
        }
        let mut product = BTreeMap::new();
        for (&k, old) in &self.product {
            let mut m = Matrix::zero(&field, old.rows, old.cols);
            for r in 0..old.rows {
                for c in 0..old.cols {
                    m.set(r, c, conv(old.get(r, c))?);
                }
            }
            product.insert(k, m);
        }
        let convv = |v: &[Poly]| -> Result<Vec<Rational>> { v.iter().map(&conv).collect() };
        Ok(FiniteFilteredDGA {
            complex,
            product,
            unit: convv(&self.unit)?,
            level: self.level.clone(),
            kmax: self.kmax,
            eps: convv(&self.eps)?,
            eta0: convv(&self.eta0)?,
            degree_cap: self.degree_cap,
        })
    }
}

/// Specialization entry point mirroring the family operations: a formal
/// family evaluated at a rational parameter value.
pub fn hodge_specialize(
    z: &FiniteFilteredDGA<PolyRing>,
    value: &Rational,
) -> Result<FiniteFilteredDGA<RationalField>> {
    z.specialize_lambda(value)
}

impl MCVariety<PolyRing> {
    /// Specializes every coefficient of the equations at a parameter value.
    pub fn specialize_lambda(&self, value: &Rational) -> Result<MCVariety<RationalField>> {
        let conv = |p: &Poly| -> Result<Rational> {
            let s = p.subst_lambda(value);
            if !s.is_constant() {
                return Err(Error::Validation(
                    "specialization left a base variable in a coefficient".into(),
                ));
            }
            Ok(s.constant_term())
        };
        let mut equations = Vec::new();
        for eq in &self.equations {
            let mut linear = BTreeMap::new();
            for (&v, c) in &eq.linear {
                let c = conv(c)?;
                if !c.eq(&Rational::from_integer(0.into())) {
                    linear.insert(v, c);
                }
            }
            let mut quadratic = BTreeMap::new();
            for (&k, c) in &eq.quadratic {
                let c = conv(c)?;
                if !c.eq(&Rational::from_integer(0.into())) {
                    quadratic.insert(k, c);
                }
            }
            let constant = conv(&eq.constant)?;
            let trivial = constant.eq(&Rational::from_integer(0.into()))
                && linear.is_empty()
                && quadratic.is_empty();
            if !trivial {
                equations.push(McEquation { row: eq.row, constant, linear, quadratic });
            }
        }
        Ok(MCVariety { vars: self.vars.clone(), equations, rows: self.rows })
    }
}

/// Basis bookkeeping for a mapping dga materialized from a truncated
/// operator context: each coordinate is a table key plus a row in the
/// value column.
#[derive(Clone, Debug)]
pub struct QDgaBasis {
    pub per_degree: BTreeMap<i32, Vec<(TensorWord, i32, usize, usize)>>,
    pub truncation: u32,
}

impl QDgaBasis {
    pub fn index_of(&self, degree: i32, key: &(TensorWord, i32, usize), row: usize) -> Option<usize> {
        self.per_degree.get(&degree)?.iter().position(|(w, j, b, r)| {
            (w, *j, *b, *r) == (&key.0, key.1, key.2, row)
        })
    }

    /// Coordinates of a table element in a materialized degree.
    pub fn to_coords(&self, q: &QElement, degree: i32) -> Result<Vec<Rational>> {
        if q.degree != degree {
            return Err(Error::Shape("element degree disagrees with the requested one".into()));
        }
        let basis = self.per_degree.get(&degree).cloned().unwrap_or_default();
        let mut lookup: BTreeMap<(TensorWord, i32, usize, usize), usize> = BTreeMap::new();
        for (idx, (w, j, b, r)) in basis.iter().enumerate() {
            lookup.insert((w.clone(), *j, *b, *r), idx);
        }
        let mut out = vec![Rational::from_integer(0.into()); basis.len()];
        for ((w, j, b), col) in &q.table {
            for (r, p) in col.iter().enumerate() {
                if p.is_zero() {
                    continue;
                }
                if !p.is_constant() {
                    return Err(Error::Validation(
                        "the element carries a non constant coefficient".into(),
                    ));
                }
                let Some(&idx) = lookup.get(&(w.clone(), *j, *b, r)) else {
                    return Err(Error::Validation(format!(
                        "the element touches a key outside the materialized degree {degree}"
                    )));
                };
                out[idx] = p.constant_term();
            }
        }
        Ok(out)
    }

    /// Table element reconstructed from coordinates.
    pub fn from_coords(&self, degree: i32, v: &[Rational]) -> Result<QElement> {
        let basis = self.per_degree.get(&degree).cloned().unwrap_or_default();
        if v.len() != basis.len() {
            return Err(Error::Shape("coordinate width disagrees with the basis".into()));
        }
        let mut out = QElement::new(degree, self.truncation);
        for ((w, j, b, r), c) in basis.iter().zip(v) {
            if c.eq(&Rational::from_integer(0.into())) {
                continue;
            }
            let width = basis
                .iter()
                .filter(|(w2, j2, b2, _)| w2 == w && j2 == j && b2 == b)
                .count();
            let col = out
                .table
                .entry((w.clone(), *j, *b))
                .or_insert_with(|| vec![Poly::zero(); width]);
            col[*r] = Poly::constant(c.clone());
        }
        Ok(out)
    }
}

/// Materializes the mapping dga of a complex over a coefficient-field
/// operator context as a finite filtered dga.  The filtration level of a
/// coordinate is the level of its word; the base element is the one-slot
/// unit identity.  Degrees are materialized up to `degree_cap`, which must
/// leave room for the structure equations.
pub fn q_dga(
    ctx: &QCtx,
    e: &FreeComplex<PolyRing>,
    degree_cap: i32,
) -> Result<(FiniteFilteredDGA<RationalField>, QDgaBasis)> {
    let field = RationalField;
    if ctx.alg.base_vars != 0 {
        return Err(Error::Validation(
            "a finite model needs coefficients in the ground field, so the operator algebra must have no base variables".into(),
        ));
    }
    if degree_cap < 3 {
        return Err(Error::Validation(
            "the degree cap must be at least three to see the structure equations".into(),
        ));
    }
    for i in e.degrees() {
        let d = e.diff(i);
        for r in 0..d.rows {
            for c in 0..d.cols {
                if !d.get(r, c).is_constant() {
                    return Err(Error::Validation(
                        "the complex must have constant differential entries".into(),
                    ));
                }
            }
        }
    }
    let (Some(emin), Some(emax)) = (e.min_degree(), e.max_degree()) else {
        return Err(Error::Validation("the complex is empty".into()));
    };
    let lo = emin - emax;
    let mut per_degree: BTreeMap<i32, Vec<(TensorWord, i32, usize, usize)>> = BTreeMap::new();
    for i in lo..=degree_cap {
        let mut basis = Vec::new();
        for (w, j, b) in ctx.key_universe(e, e, i) {
            let width = e.rank(i + j - w.len() as i32);
            for r in 0..width {
                basis.push((w.clone(), j, b, r));
            }
        }
        if !basis.is_empty() {
            per_degree.insert(i, basis);
        }
    }
    let qbasis = QDgaBasis { per_degree: per_degree.clone(), truncation: ctx.truncation };

    let ranks: BTreeMap<i32, usize> = per_degree.iter().map(|(&i, v)| (i, v.len())).collect();
    let mut complex = FreeComplex::new(field, ranks.clone());
    let degs: Vec<i32> = ranks.keys().copied().collect();

    let delta = |i: i32, key: &(TensorWord, i32, usize, usize)| -> QElement {
        let (w, j, b, r) = key;
        let width = e.rank(i + j - w.len() as i32);
        let mut q = QElement::new(i, ctx.truncation);
        let mut col = vec![Poly::zero(); width];
        col[*r] = Poly::one();
        q.table.insert((w.clone(), *j, *b), col);
        q
    };

    for &i in &degs {
        if i + 1 > degree_cap || complex.rank(i + 1) == 0 {
            continue;
        }
        let basis = &per_degree[&i];
        let mut m = Matrix::zero(&field, complex.rank(i + 1), basis.len());
        for (c, key) in basis.iter().enumerate() {
            let dq = ctx.d_q(e, e, &delta(i, key))?;
            for (r, v) in qbasis.to_coords(&dq, i + 1)?.into_iter().enumerate() {
                m.set(r, c, v);
            }
        }
        complex.set_diff(i, m)?;
    }

    let mut product = BTreeMap::new();
    for &p in &degs {
        for &q in &degs {
            if p + q > degree_cap || complex.rank(p + q) == 0 {
                continue;
            }
            let bp = &per_degree[&p];
            let bq = &per_degree[&q];
            let mut m = Matrix::zero(&field, complex.rank(p + q), bp.len() * bq.len());
            let mut nonzero = false;
            for (a, ka) in bp.iter().enumerate() {
                let qa = delta(p, ka);
                for (b, kb) in bq.iter().enumerate() {
                    let prod = ctx.compose(e, e, e, &qa, &delta(q, kb))?;
                    if prod.table.is_empty() {
                        continue;
                    }
                    for (r, v) in qbasis.to_coords(&prod, p + q)?.into_iter().enumerate() {
                        if !v.eq(&Rational::from_integer(0.into())) {
                            nonzero = true;
                        }
                        m.set(r, a * bq.len() + b, v);
                    }
                }
            }
            if nonzero {
                product.insert((p, q), m);
            }
        }
    }

    let level = per_degree
        .iter()
        .map(|(&i, v)| (i, v.iter().map(|(w, _, _, _)| word_level(w)).collect::<Vec<u32>>()))
        .collect::<BTreeMap<i32, Vec<u32>>>();

    let unit = qbasis.to_coords(&ctx.unit(e), 0)?;

    let mut eps = vec![Rational::from_integer(0.into()); complex.rank(0)];
    let zero_basis = per_degree.get(&0).cloned().unwrap_or_default();
    if let Some(idx) = zero_basis
        .iter()
        .position(|(w, _, b, r)| w.is_empty() && *b == 0 && *r == 0)
    {
        eps[idx] = Rational::from_integer(1.into());
    }

    let mut eta0_elt = QElement::new(1, ctx.truncation);
    for j in e.degrees() {
        for b in 0..e.rank(j) {
            let mut col = vec![Poly::zero(); e.rank(j)];
            col[b] = Poly::one();
            eta0_elt.table.insert((unit_word(1), j, b), col);
        }
    }
    let eta0 = qbasis.to_coords(&eta0_elt, 1)?;

    let dga = FiniteFilteredDGA {
        complex,
        product,
        unit,
        level,
        kmax: ctx.truncation,
        eps,
        eta0,
        degree_cap: Some(degree_cap),
    };
    Ok((dga, qbasis))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{FilteredPBWAlgebra, Mode};
    use crate::scalar::rat_int;

    fn rat(n: i64) -> Rational {
        rat_int(n)
    }

    /// Unit u, one closed degree-one generator of level one squaring to a
    /// level-two degree-two generator.
    fn toy() -> FiniteFilteredDGA<RationalField> {
        let field = RationalField;
        let ranks: BTreeMap<i32, usize> = [(0, 1), (1, 1), (2, 1)].into_iter().collect();
        let complex = FreeComplex::new(field, ranks);
        let mut product = BTreeMap::new();
        product.insert((0, 0), Matrix::from_rows(&field, vec![vec![rat(1)]]).unwrap());
        product.insert((0, 1), Matrix::from_rows(&field, vec![vec![rat(1)]]).unwrap());
        product.insert((1, 0), Matrix::from_rows(&field, vec![vec![rat(1)]]).unwrap());
        product.insert((0, 2), Matrix::from_rows(&field, vec![vec![rat(1)]]).unwrap());
        product.insert((2, 0), Matrix::from_rows(&field, vec![vec![rat(1)]]).unwrap());
        product.insert((1, 1), Matrix::from_rows(&field, vec![vec![rat(1)]]).unwrap());
        let level: BTreeMap<i32, Vec<u32>> =
            [(0, vec![0]), (1, vec![1]), (2, vec![2])].into_iter().collect();
        FiniteFilteredDGA {
            complex,
            product,
            unit: vec![rat(1)],
            level,
            kmax: 3,
            eps: vec![rat(1)],
            eta0: vec![rat(0)],
            degree_cap: None,
        }
    }

    #[test]
    fn toy_dga_passes_validation_and_produces_one_equation() {
        let z = toy();
        let report = z.validate(ValidationDepth::Full);
        assert!(report.ok(), "{:?}", report.violations);
        let var = z.mc_equations().unwrap();
        assert_eq!(var.vars, vec![0]);
        assert_eq!(var.equations.len(), 1);
        let eq = &var.equations[0];
        assert!(eq.linear.is_empty());
        assert_eq!(eq.quadratic.get(&(0, 0)), Some(&rat(1)));
        assert!(z.is_mc_point(&[rat(0)]).unwrap());
        assert!(!z.is_mc_point(&[rat(1)]).unwrap());
    }

    #[test]
    fn q_dga_matches_the_table_calculus() {
        let alg = FilteredPBWAlgebra::new(Mode::Poly, 0, 1).unwrap();
        let ctx = QCtx::new(&alg, 2).unwrap();
        let ranks: BTreeMap<i32, usize> = [(-1, 1), (0, 1)].into_iter().collect();
        let e = FreeComplex::new(PolyRing::new(0), ranks);
        let (z, basis) = q_dga(&ctx, &e, 4).unwrap();
        let report = z.validate(ValidationDepth::Sampled { seed: 7, trials: 200 });
        assert!(report.ok(), "{:?}", report.violations);

        let mut rng = crate::gen::rng_from_seed(11);
        for _ in 0..10 {
            let p = ctx.random_element(&mut rng, &e, &e, 1, 2);
            let q = ctx.random_element(&mut rng, &e, &e, 1, 2);
            let pc = basis.to_coords(&p, 1).unwrap();
            let qc = basis.to_coords(&q, 1).unwrap();
            let dp = ctx.d_q(&e, &e, &p).unwrap();
            assert_eq!(basis.to_coords(&dp, 2).unwrap(), z.dvec(1, &pc));
            let prod = ctx.compose(&e, &e, &e, &p, &q).unwrap();
            assert_eq!(basis.to_coords(&prod, 2).unwrap(), z.mul(1, &pc, 1, &qc));
        }
    }
}
