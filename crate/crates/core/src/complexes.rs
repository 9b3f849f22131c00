//! Bounded complexes of finite free modules with explicit differentials.
//!
//! Everything is cohomologically graded: the differential raises degree by
//! one. A complex stores ranks and differentials on a finite window and is
//! zero outside it. Over a field the homology is computed by exact
//! elimination; over the polynomial ring it is sampled at rational points,
//! and disagreements between points are reported rather than averaged away.
//!
//! Complexes of free modules over the operator algebra are represented over
//! [`OppositePBW`]: a map of free left modules is a matrix of right
//! multipliers, and those compose by the ordinary matrix product over the
//! opposite ring.

use std::collections::BTreeMap;

use crate::algebra::{AlgebraElement, DExp, FilteredPBWAlgebra, OppositePBW};
use crate::matrix::Matrix;
use crate::poly::Poly;
use crate::ring::{Field, PolyRing, RationalField, Ring};
use crate::scalar::Rational;

#[derive(Clone, Debug)]
pub struct FreeComplex<R: Ring> {
    pub ring: R,
    ranks: BTreeMap<i32, usize>,
    diffs: BTreeMap<i32, Matrix<R>>,
}

impl<R: Ring> FreeComplex<R> {
    pub fn new(ring: R, ranks: BTreeMap<i32, usize>) -> Self {
        let ranks = ranks.into_iter().filter(|&(_, r)| r > 0).collect();
        FreeComplex { ring, ranks, diffs: BTreeMap::new() }
    }

    pub fn zero_complex(ring: R) -> Self {
        FreeComplex { ring, ranks: BTreeMap::new(), diffs: BTreeMap::new() }
    }

    /// Rank one in degree zero, nothing elsewhere.
    pub fn unit(ring: R) -> Self {
        let mut ranks = BTreeMap::new();
        ranks.insert(0, 1);
        FreeComplex::new(ring, ranks)
    }

    pub fn rank(&self, i: i32) -> usize {
        self.ranks.get(&i).copied().unwrap_or(0)
    }

    pub fn total_rank(&self) -> usize {
        self.ranks.values().sum()
    }

    /// Degrees with nonzero rank, ascending.
    pub fn degrees(&self) -> Vec<i32> {
        self.ranks.keys().copied().collect()
    }

    pub fn min_degree(&self) -> Option<i32> {
        self.ranks.keys().next().copied()
    }

    pub fn max_degree(&self) -> Option<i32> {
        self.ranks.keys().next_back().copied()
    }

    pub fn set_diff(&mut self, i: i32, d: Matrix<R>) -> crate::Result<()> {
        if d.rows != self.rank(i + 1) || d.cols != self.rank(i) {
            return Err(crate::Error::Shape(format!(
                "differential at degree {i} must be {}x{}, got {}x{}",
                self.rank(i + 1),
                self.rank(i),
                d.rows,
                d.cols
            )));
        }
        if d.is_zero(&self.ring) {
            self.diffs.remove(&i);
        } else {
            self.diffs.insert(i, d);
        }
        Ok(())
    }

    pub fn diff(&self, i: i32) -> Matrix<R> {
        match self.diffs.get(&i) {
            Some(d) => d.clone(),
            None => Matrix::zero(&self.ring, self.rank(i + 1), self.rank(i)),
        }
    }

    /// Verifies that consecutive differentials compose to zero.
    pub fn check_complex(&self) -> crate::Result<()> {
        let degs = self.degrees();
        for &i in &degs {
            let dd = self.diff(i + 1).mul(&self.ring, &self.diff(i));
            if !dd.is_zero(&self.ring) {
                return Err(crate::Error::Validation(format!(
                    "d o d is nonzero out of degree {i}"
                )));
            }
        }
        Ok(())
    }

    /// Shift: `E[n]^i = E^(i+n)` with differential scaled by `(-1)^n`.
    pub fn shift(&self, n: i32) -> Self {
        let ranks = self.ranks.iter().map(|(&i, &r)| (i - n, r)).collect();
        let mut out = FreeComplex::new(self.ring.clone(), ranks);
        let sign = if n.rem_euclid(2) == 0 { 1 } else { -1 };
        for (&i, d) in &self.diffs {
            let d = if sign == 1 { d.clone() } else { d.neg(&self.ring) };
            out.set_diff(i - n, d).expect("shift preserves shapes");
        }
        out
    }

    pub fn direct_sum(&self, other: &Self) -> Self {
        let mut ranks = BTreeMap::new();
        for i in all_degrees(&[self, other]) {
            let r = self.rank(i) + other.rank(i);
            if r > 0 {
                ranks.insert(i, r);
            }
        }
        let mut out = FreeComplex::new(self.ring.clone(), ranks);
        for i in all_degrees(&[self, other]) {
            let mut d = Matrix::zero(&self.ring, out.rank(i + 1), out.rank(i));
            d.set_block(0, 0, &self.diff(i));
            d.set_block(self.rank(i + 1), self.rank(i), &other.diff(i));
            out.set_diff(i, d).expect("block shapes agree");
        }
        out
    }
}

fn all_degrees<R: Ring>(cs: &[&FreeComplex<R>]) -> Vec<i32> {
    let mut degs: Vec<i32> = cs.iter().flat_map(|c| c.degrees()).collect();
    degs.sort_unstable();
    degs.dedup();
    degs
}

/// Degree-zero map of complexes, stored sparsely; a missing component is
/// the zero map.
#[derive(Clone, Debug)]
pub struct ChainMap<R: Ring> {
    pub components: BTreeMap<i32, Matrix<R>>,
}

impl<R: Ring> ChainMap<R> {
    pub fn new() -> Self {
        ChainMap { components: BTreeMap::new() }
    }

    pub fn identity(e: &FreeComplex<R>) -> Self {
        let mut components = BTreeMap::new();
        for i in e.degrees() {
            components.insert(i, Matrix::identity(&e.ring, e.rank(i)));
        }
        ChainMap { components }
    }

    pub fn component(
        &self,
        src: &FreeComplex<R>,
        tgt: &FreeComplex<R>,
        i: i32,
    ) -> Matrix<R> {
        match self.components.get(&i) {
            Some(m) => m.clone(),
            None => Matrix::zero(&src.ring, tgt.rank(i), src.rank(i)),
        }
    }

    pub fn check(
        &self,
        src: &FreeComplex<R>,
        tgt: &FreeComplex<R>,
    ) -> crate::Result<()> {
        let ring = &src.ring;
        for (&i, m) in &self.components {
            if m.rows != tgt.rank(i) || m.cols != src.rank(i) {
                return Err(crate::Error::Shape(format!(
                    "component at degree {i} must be {}x{}, got {}x{}",
                    tgt.rank(i),
                    src.rank(i),
                    m.rows,
                    m.cols
                )));
            }
        }
        for i in all_degrees(&[src, tgt]) {
            let lhs = tgt.diff(i).mul(ring, &self.component(src, tgt, i));
            let rhs = self.component(src, tgt, i + 1).mul(ring, &src.diff(i));
            if !lhs.sub(ring, &rhs).is_zero(ring) {
                return Err(crate::Error::Validation(format!(
                    "map fails to commute with differentials at degree {i}"
                )));
            }
        }
        Ok(())
    }
}

impl<R: Ring> Default for ChainMap<R> {
    fn default() -> Self {
        ChainMap::new()
    }
}

/// Degree `-1` collection of maps `K^i: E^i -> F^(i-1)`.
#[derive(Clone, Debug)]
pub struct Homotopy<R: Ring> {
    pub components: BTreeMap<i32, Matrix<R>>,
}

impl<R: Ring> Homotopy<R> {
    pub fn new() -> Self {
        Homotopy { components: BTreeMap::new() }
    }

    pub fn component(
        &self,
        src: &FreeComplex<R>,
        tgt: &FreeComplex<R>,
        i: i32,
    ) -> Matrix<R> {
        match self.components.get(&i) {
            Some(m) => m.clone(),
            None => Matrix::zero(&src.ring, tgt.rank(i - 1), src.rank(i)),
        }
    }

    /// The boundary `dK + Kd` of this homotopy in the hom complex, returned
    /// as a degree-zero map.
    pub fn boundary(
        &self,
        src: &FreeComplex<R>,
        tgt: &FreeComplex<R>,
    ) -> ChainMap<R> {
        let ring = &src.ring;
        let mut components = BTreeMap::new();
        for i in all_degrees(&[src, tgt]) {
            let a = tgt.diff(i - 1).mul(ring, &self.component(src, tgt, i));
            let b = self.component(src, tgt, i + 1).mul(ring, &src.diff(i));
            let m = a.add(ring, &b);
            if !m.is_zero(ring) {
                components.insert(i, m);
            }
        }
        ChainMap { components }
    }
}

impl<R: Ring> Default for Homotopy<R> {
    fn default() -> Self {
        Homotopy::new()
    }
}

/// Mapping cone of `f: E -> F`: degree `i` is `F^i (+) E^(i+1)` with
/// differential `(y, x) |-> (d y + f x, -d x)`.
pub fn cone<R: Ring>(
    src: &FreeComplex<R>,
    tgt: &FreeComplex<R>,
    f: &ChainMap<R>,
) -> crate::Result<FreeComplex<R>> {
    f.check(src, tgt)?;
    let ring = src.ring.clone();
    let mut ranks = BTreeMap::new();
    let mut degs = all_degrees(&[src, tgt]);
    degs.iter_mut().for_each(|d| *d -= 1);
    let mut all = all_degrees(&[src, tgt]);
    all.extend(degs);
    all.sort_unstable();
    all.dedup();
    for &i in &all {
        let r = tgt.rank(i) + src.rank(i + 1);
        if r > 0 {
            ranks.insert(i, r);
        }
    }
    let mut out = FreeComplex::new(ring.clone(), ranks);
    for &i in &all {
        let mut d = Matrix::zero(&ring, out.rank(i + 1), out.rank(i));
        d.set_block(0, 0, &tgt.diff(i));
        d.set_block(0, tgt.rank(i), &f.component(src, tgt, i + 1));
        d.set_block(tgt.rank(i + 1), tgt.rank(i), &src.diff(i + 1).neg(&ring));
        out.set_diff(i, d)?;
    }
    Ok(out)
}

/// Index map for tensor bases: degree `n` of `E (x) F` is spanned by pairs
/// `(a, b)` with `a` in degree `i` of `E` and `b` in degree `n - i` of `F`,
/// ordered by ascending `i`, then `a`, then `b`.
pub fn tensor_basis<R: Ring>(
    e: &FreeComplex<R>,
    f: &FreeComplex<R>,
    n: i32,
) -> Vec<(i32, usize, usize)> {
    let mut out = Vec::new();
    for i in e.degrees() {
        let j = n - i;
        for a in 0..e.rank(i) {
            for b in 0..f.rank(j) {
                out.push((i, a, b));
            }
        }
    }
    out
}

/// Tensor product with the Koszul sign `d(a (x) b) = da (x) b +
/// (-1)^|a| a (x) db`. Entries of the two factors are multiplied in the
/// ambient ring, so this is meaningful over commutative coefficients.
pub fn tensor<R: Ring>(e: &FreeComplex<R>, f: &FreeComplex<R>) -> FreeComplex<R> {
    let ring = e.ring.clone();
    let mut ranks = BTreeMap::new();
    let lo = e.min_degree().unwrap_or(0) + f.min_degree().unwrap_or(0);
    let hi = e.max_degree().unwrap_or(0) + f.max_degree().unwrap_or(0);
    for n in lo..=hi {
        let r = tensor_basis(e, f, n).len();
        if r > 0 {
            ranks.insert(n, r);
        }
    }
    let mut out = FreeComplex::new(ring.clone(), ranks);
    for n in lo..=hi {
        let src = tensor_basis(e, f, n);
        let dst = tensor_basis(e, f, n + 1);
        if src.is_empty() || dst.is_empty() {
            continue;
        }
        let pos: BTreeMap<(i32, usize, usize), usize> =
            dst.iter().enumerate().map(|(k, key)| (*key, k)).collect();
        let mut d = Matrix::zero(&ring, dst.len(), src.len());
        for (col, &(i, a, b)) in src.iter().enumerate() {
            let j = n - i;
            let de = e.diff(i);
            for a2 in 0..e.rank(i + 1) {
                let c = de.get(a2, a);
                if !ring.is_zero(c) {
                    let row = pos[&(i + 1, a2, b)];
                    let cur = ring.add(d.get(row, col), c);
                    d.set(row, col, cur);
                }
            }
            let df = f.diff(j);
            let sign_neg = i.rem_euclid(2) == 1;
            for b2 in 0..f.rank(j + 1) {
                let c = df.get(b2, b);
                if !ring.is_zero(c) {
                    let c = if sign_neg { ring.neg(c) } else { c.clone() };
                    let row = pos[&(i, a, b2)];
                    let cur = ring.add(d.get(row, col), &c);
                    d.set(row, col, cur);
                }
            }
        }
        out.set_diff(n, d).expect("tensor shapes agree");
    }
    out
}

/// Index map for hom bases: degree `n` of `Hom(E, F)` is spanned by the
/// elementary maps sending basis vector `a` of `E^i` to basis vector `b` of
/// `F^(i+n)`, ordered by ascending `i`, then `a`, then `b`.
pub fn hom_basis<R: Ring>(
    e: &FreeComplex<R>,
    f: &FreeComplex<R>,
    n: i32,
) -> Vec<(i32, usize, usize)> {
    let mut out = Vec::new();
    for i in e.degrees() {
        for a in 0..e.rank(i) {
            for b in 0..f.rank(i + n) {
                out.push((i, a, b));
            }
        }
    }
    out
}

/// Hom complex with differential `d(q) = d_F o q - (-1)^|q| q o d_E`.
/// Degree-zero cycles are exactly the chain maps.
pub fn hom_complex<R: Ring>(e: &FreeComplex<R>, f: &FreeComplex<R>) -> FreeComplex<R> {
    let ring = e.ring.clone();
    let (Some(elo), Some(ehi), Some(flo), Some(fhi)) =
        (e.min_degree(), e.max_degree(), f.min_degree(), f.max_degree())
    else {
        return FreeComplex::zero_complex(ring);
    };
    let lo = flo - ehi;
    let hi = fhi - elo;
    let mut ranks = BTreeMap::new();
    for n in lo..=hi {
        let r = hom_basis(e, f, n).len();
        if r > 0 {
            ranks.insert(n, r);
        }
    }
    let mut out = FreeComplex::new(ring.clone(), ranks);
    for n in lo..=hi {
        let src = hom_basis(e, f, n);
        let dst = hom_basis(e, f, n + 1);
        if src.is_empty() || dst.is_empty() {
            continue;
        }
        let pos: BTreeMap<(i32, usize, usize), usize> =
            dst.iter().enumerate().map(|(k, key)| (*key, k)).collect();
        let mut d = Matrix::zero(&ring, dst.len(), src.len());
        let sign_neg = n.rem_euclid(2) == 1;
        for (col, &(i, a, b)) in src.iter().enumerate() {
            let df = f.diff(i + n);
            for b2 in 0..f.rank(i + n + 1) {
                let c = df.get(b2, b);
                if !ring.is_zero(c) {
                    let row = pos[&(i, a, b2)];
                    let cur = ring.add(d.get(row, col), c);
                    d.set(row, col, cur);
                }
            }
            // Precomposition with d_E contributes at source degree i - 1.
            let de = e.diff(i - 1);
            for a2 in 0..e.rank(i - 1) {
                let c = de.get(a, a2);
                if !ring.is_zero(c) {
                    let c = if sign_neg { c.clone() } else { ring.neg(c) };
                    let row = pos[&(i - 1, a2, b)];
                    let cur = ring.add(d.get(row, col), &c);
                    d.set(row, col, cur);
                }
            }
        }
        out.set_diff(n, d).expect("hom shapes agree");
    }
    out
}

impl<F: Field> FreeComplex<F> {
    /// Exact homology ranks: `dim ker d^i - rank d^(i-1)` per degree.
    pub fn homology_ranks(&self) -> BTreeMap<i32, usize> {
        let mut out = BTreeMap::new();
        for i in self.degrees() {
            let cycles = self.rank(i) - self.diff(i).rank(&self.ring);
            let boundaries = self.diff(i - 1).rank(&self.ring);
            let h = cycles - boundaries;
            if h > 0 {
                out.insert(i, h);
            }
        }
        out
    }

    pub fn is_acyclic(&self) -> bool {
        self.homology_ranks().is_empty()
    }

    /// Intelligent truncation at degree zero: negative degrees survive,
    /// degree zero becomes the kernel of the outgoing differential, and
    /// positive degrees are dropped.
    pub fn tau_le0(&self) -> Self {
        let field = &self.ring;
        let kernel = self.diff(0).kernel_basis(field);
        let mut ranks: BTreeMap<i32, usize> = self
            .ranks
            .iter()
            .filter(|&(&i, _)| i < 0)
            .map(|(&i, &r)| (i, r))
            .collect();
        if !kernel.is_empty() {
            ranks.insert(0, kernel.len());
        }
        let mut out = FreeComplex::new(field.clone(), ranks);
        for i in self.degrees() {
            if i < -1 {
                out.set_diff(i, self.diff(i)).expect("negative degrees unchanged");
            }
        }
        if self.rank(-1) > 0 && !kernel.is_empty() {
            let kmat = Matrix::from_fn(field, self.rank(0), kernel.len(), |r, c| {
                kernel[c][r].clone()
            });
            let old = self.diff(-1);
            let mut d = Matrix::zero(field, kernel.len(), self.rank(-1));
            for col in 0..self.rank(-1) {
                let target: Vec<F::Elem> = (0..self.rank(0)).map(|r| old.get(r, col).clone()).collect();
                let coords = kmat
                    .solve(field, &target)
                    .expect("boundaries land in the kernel of d");
                for (r, v) in coords.into_iter().enumerate() {
                    d.set(r, col, v);
                }
            }
            out.set_diff(-1, d).expect("truncation keeps shapes");
        }
        out
    }
}

/// Homology ranks of a polynomial-coefficient complex sampled at several
/// rational points. Points where evaluation disagrees are kept side by side.
#[derive(Clone, Debug)]
pub struct PointHomology {
    pub points: Vec<(Vec<Rational>, Rational)>,
    pub per_point: Vec<BTreeMap<i32, usize>>,
}

impl PointHomology {
    pub fn unanimous(&self) -> bool {
        self.per_point.windows(2).all(|w| w[0] == w[1])
    }

    /// The shared answer, or `None` when the points disagree.
    pub fn consensus(&self) -> Option<&BTreeMap<i32, usize>> {
        if self.unanimous() {
            self.per_point.first()
        } else {
            None
        }
    }
}

impl FreeComplex<PolyRing> {
    pub fn eval_point(&self, point: &[Rational], lambda: &Rational) -> FreeComplex<RationalField> {
        let mut out = FreeComplex::new(RationalField, self.ranks.clone());
        for (&i, d) in &self.diffs {
            out.set_diff(i, d.eval_point(point, lambda)).expect("evaluation keeps shapes");
        }
        out
    }

    /// Samples homology at `n_points >= 3` random rational points drawn from
    /// a fixed seed. Disagreements between points are surfaced in the
    /// report, never averaged.
    pub fn homology_ranks_at_points(&self, n_points: usize, seed: u64) -> crate::Result<PointHomology> {
        if n_points < 3 {
            return Err(crate::Error::Validation(
                "homology sampling needs at least 3 points".into(),
            ));
        }
        let mut rng = crate::gen::rng_from_seed(seed);
        let mut points = Vec::new();
        let mut per_point = Vec::new();
        for _ in 0..n_points {
            let pt: Vec<Rational> = (0..self.ring.base_vars)
                .map(|_| crate::gen::random_nonzero_small_rational(&mut rng, 7))
                .collect();
            let lam = crate::gen::random_nonzero_small_rational(&mut rng, 7);
            per_point.push(self.eval_point(&pt, &lam).homology_ranks());
            points.push((pt, lam));
        }
        Ok(PointHomology { points, per_point })
    }
}

fn binom(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let mut out = 1usize;
    for i in 0..k {
        out = out * (n - i) / (i + 1);
    }
    out
}

/// Strictly increasing `r`-subsets of `{0, .., m-1}` in lexicographic order.
pub fn subsets(m: usize, r: usize) -> Vec<Vec<usize>> {
    if r > m {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(binom(m, r));
    let mut cur: Vec<usize> = (0..r).collect();
    loop {
        out.push(cur.clone());
        // Advance to the next subset in lex order.
        let mut i = r;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] + 1 <= m - (r - i) {
                cur[i] += 1;
                for j in i + 1..r {
                    cur[j] = cur[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Exponent vectors of total degree `k` in `m` variables, lexicographic.
pub fn monomials(m: usize, k: u32) -> Vec<Vec<u32>> {
    fn rec(m: usize, k: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if m == 1 {
            prefix.push(k);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in (0..=k).rev() {
            prefix.push(first);
            rec(m - 1, k - first, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if m == 0 {
        if k == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    rec(m, k, &mut Vec::new(), &mut out);
    out
}

/// Koszul-type resolution of the base ring as a left module: degree `-r`
/// is free of rank `binom(m, r)` on the `r`-subsets of the generators, and
/// the differential sends the basis vector of `S = {i_1 < .. < i_r}` to the
/// alternating sum of right multiplications by the dropped generator.
pub fn koszul_resolution(alg: &FilteredPBWAlgebra) -> FreeComplex<OppositePBW> {
    let m = alg.gens;
    let ring = OppositePBW(*alg);
    let mut ranks = BTreeMap::new();
    for r in 0..=m {
        ranks.insert(-(r as i32), binom(m, r));
    }
    let mut out = FreeComplex::new(ring.clone(), ranks);
    for r in 1..=m {
        let src = subsets(m, r);
        let dst = subsets(m, r - 1);
        let pos: BTreeMap<&Vec<usize>, usize> =
            dst.iter().enumerate().map(|(k, s)| (s, k)).collect();
        let mut d = Matrix::zero(&ring, dst.len(), src.len());
        for (col, s) in src.iter().enumerate() {
            for (j, &i_j) in s.iter().enumerate() {
                let mut rest = s.clone();
                rest.remove(j);
                let row = pos[&rest];
                let gen = alg.gen(i_j);
                let entry = if j % 2 == 0 { gen } else { gen.neg() };
                let cur = ring.add(d.get(row, col), &entry);
                d.set(row, col, cur);
            }
        }
        out.set_diff(-(r as i32), d).expect("koszul shapes agree");
    }
    out
}

/// The piece of the associated graded of [`koszul_resolution`] in internal
/// degree `n`: a complex of finite dimensional rational spaces with basis
/// (monomial in the symbols, subset), and differential multiplying by the
/// dropped symbol. Exact for `n >= 1`; for `n = 0` the homology is one
/// dimensional in degree zero.
pub fn koszul_gr_piece(m: usize, n: u32) -> FreeComplex<RationalField> {
    let ring = RationalField;
    let mut ranks = BTreeMap::new();
    let mut bases: BTreeMap<i32, Vec<(Vec<u32>, Vec<usize>)>> = BTreeMap::new();
    for r in 0..=m {
        if (r as u32) > n {
            continue;
        }
        let mut basis = Vec::new();
        for mono in monomials(m, n - r as u32) {
            for s in subsets(m, r) {
                basis.push((mono.clone(), s));
            }
        }
        if !basis.is_empty() {
            ranks.insert(-(r as i32), basis.len());
            bases.insert(-(r as i32), basis);
        }
    }
    let mut out = FreeComplex::new(ring, ranks);
    for r in 1..=m as i32 {
        let (Some(src), Some(dst)) = (bases.get(&-r), bases.get(&(-r + 1))) else {
            continue;
        };
        let pos: BTreeMap<&(Vec<u32>, Vec<usize>), usize> =
            dst.iter().enumerate().map(|(k, key)| (key, k)).collect();
        let mut d = Matrix::zero(&ring, dst.len(), src.len());
        for (col, (mono, s)) in src.iter().enumerate() {
            for (j, &i_j) in s.iter().enumerate() {
                let mut rest = s.clone();
                rest.remove(j);
                let mut mono2 = mono.clone();
                mono2[i_j] += 1;
                let row = pos[&(mono2, rest)];
                let sign = if j % 2 == 0 { Rational::from_integer(1.into()) } else { Rational::from_integer((-1).into()) };
                let cur = d.get(row, col) + &sign;
                d.set(row, col, cur);
            }
        }
        out.set_diff(-r, d).expect("graded koszul shapes agree");
    }
    out
}

/// A complex of free modules over the base polynomial ring together with a
/// strict action of the generators: `Di` acts on degree `i` as
/// `c d/dxi + gammas[i][di]`, one square matrix per degree and generator.
#[derive(Clone, Debug)]
pub struct ConnectionComplex {
    pub alg: FilteredPBWAlgebra,
    pub complex: FreeComplex<PolyRing>,
    pub gammas: BTreeMap<i32, Vec<Matrix<PolyRing>>>,
}

impl ConnectionComplex {
    /// A complex with the coefficientwise action and no lower order part.
    pub fn trivial(alg: FilteredPBWAlgebra, complex: FreeComplex<PolyRing>) -> Self {
        let ring = complex.ring.clone();
        let gammas = complex
            .degrees()
            .into_iter()
            .map(|i| {
                let r = complex.rank(i);
                (i, vec![Matrix::zero(&ring, r, r); alg.gens])
            })
            .collect();
        ConnectionComplex { alg, complex, gammas }
    }

    pub fn gamma(&self, i: i32, k: usize) -> Matrix<PolyRing> {
        let r = self.complex.rank(i);
        match self.gammas.get(&i) {
            Some(v) => v[k].clone(),
            None => Matrix::zero(&self.complex.ring, r, r),
        }
    }

    /// Checks shapes, flatness of the action, and compatibility with the
    /// differential.
    pub fn validate(&self) -> crate::Result<()> {
        let ring = &self.complex.ring;
        let c = self.alg.commut_factor();
        self.complex.check_complex()?;
        for (&i, v) in &self.gammas {
            if v.len() != self.alg.gens {
                return Err(crate::Error::Shape(format!(
                    "degree {i} carries {} action matrices, expected {}",
                    v.len(),
                    self.alg.gens
                )));
            }
            for (k, g) in v.iter().enumerate() {
                let r = self.complex.rank(i);
                if g.rows != r || g.cols != r {
                    return Err(crate::Error::Shape(format!(
                        "action matrix {k} at degree {i} must be {r}x{r}"
                    )));
                }
            }
        }
        for i in self.complex.degrees() {
            for k in 0..self.alg.gens {
                for l in k + 1..self.alg.gens {
                    let gk = self.gamma(i, k);
                    let gl = self.gamma(i, l);
                    let curv = partial_matrix(&gl, k)
                        .scale(ring, &c)
                        .sub(ring, &partial_matrix(&gk, l).scale(ring, &c))
                        .add(ring, &gk.mul(ring, &gl))
                        .sub(ring, &gl.mul(ring, &gk));
                    if !curv.is_zero(ring) {
                        return Err(crate::Error::Validation(format!(
                            "action is not flat at degree {i} in directions {k}, {l}"
                        )));
                    }
                }
            }
            let d = self.complex.diff(i);
            for k in 0..self.alg.gens {
                let defect = partial_matrix(&d, k)
                    .scale(ring, &c)
                    .add(ring, &self.gamma(i + 1, k).mul(ring, &d))
                    .sub(ring, &d.mul(ring, &self.gamma(i, k)));
                if !defect.is_zero(ring) {
                    return Err(crate::Error::Validation(format!(
                        "action does not commute with the differential at degree {i}, direction {k}"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn partial_matrix(m: &Matrix<PolyRing>, k: usize) -> Matrix<PolyRing> {
    let ring = PolyRing::new(0);
    m.map(&ring, |p| p.partial(k))
}

/// Basis of degree `n` of the Koszul-twisted tensor: pairs `(S, e)` with `S`
/// an `r`-subset and `e` a basis index of the complex in degree `n + r`,
/// ordered by ascending `r`, then `S`, then `e`.
pub fn koszul_tensor_basis(
    conn: &ConnectionComplex,
    n: i32,
) -> Vec<(Vec<usize>, usize)> {
    let m = conn.alg.gens;
    let mut out = Vec::new();
    for r in 0..=m {
        let j = n + r as i32;
        for s in subsets(m, r) {
            for e in 0..conn.complex.rank(j) {
                out.push((s.clone(), e));
            }
        }
    }
    out
}

/// Tensors the Koszul-type resolution with a strictly acting complex,
/// producing a complex of free modules over the operator algebra. On the
/// basis vector `(S, e)` the differential drops a generator of `S` with an
/// alternating sign, acting either by right multiplication or through the
/// action matrix, and adds the internal differential with sign `(-1)^|S|`.
pub fn tensor_with_koszul(conn: &ConnectionComplex) -> crate::Result<FreeComplex<OppositePBW>> {
    conn.validate()?;
    let alg = conn.alg;
    let ring = OppositePBW(alg);
    let m = alg.gens as i32;
    let (Some(lo), Some(hi)) = (conn.complex.min_degree(), conn.complex.max_degree()) else {
        return Ok(FreeComplex::zero_complex(ring));
    };
    let mut ranks = BTreeMap::new();
    for n in (lo - m)..=hi {
        let r = koszul_tensor_basis(conn, n).len();
        if r > 0 {
            ranks.insert(n, r);
        }
    }
    let mut out = FreeComplex::new(ring.clone(), ranks);
    for n in (lo - m)..=hi {
        let src = koszul_tensor_basis(conn, n);
        let dst = koszul_tensor_basis(conn, n + 1);
        if src.is_empty() || dst.is_empty() {
            continue;
        }
        let pos: BTreeMap<&(Vec<usize>, usize), usize> =
            dst.iter().enumerate().map(|(k, key)| (key, k)).collect();
        let mut d = Matrix::zero(&ring, dst.len(), src.len());
        let add_entry = |d: &mut Matrix<OppositePBW>, row: usize, col: usize, u: &AlgebraElement| {
            let cur = ring.add(d.get(row, col), u);
            d.set(row, col, cur);
        };
        for (col, (s, e)) in src.iter().enumerate() {
            let r = s.len();
            let j = n + r as i32;
            for (idx, &i_j) in s.iter().enumerate() {
                let mut rest = s.clone();
                rest.remove(idx);
                let sgn = idx % 2 == 0;
                // Right multiplication by the dropped generator.
                let gen = alg.gen(i_j);
                let gen = if sgn { gen } else { gen.neg() };
                add_entry(&mut d, pos[&(rest.clone(), *e)], col, &gen);
                // Action part, with the opposite sign.
                let g = conn.gamma(j, i_j);
                for e2 in 0..conn.complex.rank(j) {
                    let p = g.get(e2, *e);
                    if !p.is_zero() {
                        let u = AlgebraElement::term(DExp::unit(), p.clone());
                        let u = if sgn { u.neg() } else { u };
                        add_entry(&mut d, pos[&(rest.clone(), e2)], col, &u);
                    }
                }
            }
            // Internal differential, sign (-1)^r.
            let de = conn.complex.diff(j);
            for e2 in 0..conn.complex.rank(j + 1) {
                let p = de.get(e2, *e);
                if !p.is_zero() {
                    let u = AlgebraElement::term(DExp::unit(), p.clone());
                    let u = if r % 2 == 0 { u } else { u.neg() };
                    add_entry(&mut d, pos[&(s.clone(), e2)], col, &u);
                }
            }
        }
        out.set_diff(n, d)?;
    }
    Ok(out)
}

/// All words of level at most `cap` in `m` generators, ascending.
pub fn window_words(m: usize, cap: u32) -> Vec<DExp> {
    let mut out = Vec::new();
    for level in 0..=cap {
        for mono in monomials(m, level) {
            out.push(DExp::from_vec(mono));
        }
    }
    out.sort();
    out
}

/// Element of one degree of the tensor of the operator algebra with a
/// complex, written on the basis (word, basis index) with polynomial
/// coordinates pulled to the left.
pub type WindowElem = BTreeMap<(DExp, usize), Poly>;

fn window_add(into: &mut WindowElem, key: (DExp, usize), p: Poly) {
    if p.is_zero() {
        return;
    }
    let slot = into.entry(key.clone()).or_insert_with(Poly::zero);
    *slot = slot.add(&p);
    if slot.is_zero() {
        into.remove(&key);
    }
}

pub fn window_basis_elem(alpha: DExp, e: usize) -> WindowElem {
    let mut out = WindowElem::new();
    out.insert((alpha, e), Poly::one());
    out
}

pub fn window_level(v: &WindowElem) -> u32 {
    v.keys().map(|(alpha, _)| alpha.level()).max().unwrap_or(0)
}

/// Generator `k` acting on the plain tensor: left multiplication into the
/// word factor only, then normal ordering.
pub fn apply_plain(alg: &FilteredPBWAlgebra, k: usize, v: &WindowElem) -> WindowElem {
    let mut out = WindowElem::new();
    for ((beta, e), coeff) in v {
        let u = alg.multiply(&alg.gen(k), &AlgebraElement::term(beta.clone(), coeff.clone()));
        for (gamma, p) in u.terms() {
            window_add(&mut out, (gamma.clone(), *e), p.clone());
        }
    }
    out
}

/// Generator `k` acting on the coproduct-twisted tensor: the word leg as in
/// [`apply_plain`] plus the strict action on the complex leg, whose
/// coefficients are pulled back into the word factor.
pub fn apply_twisted(
    conn: &ConnectionComplex,
    degree: i32,
    k: usize,
    v: &WindowElem,
) -> WindowElem {
    let mut out = apply_plain(&conn.alg, k, v);
    let g = conn.gamma(degree, k);
    let rank = conn.complex.rank(degree);
    for ((beta, e), coeff) in v {
        for e2 in 0..rank {
            let p = g.get(e2, *e);
            if !p.is_zero() {
                window_add(&mut out, (beta.clone(), e2), coeff.mul(p));
            }
        }
    }
    out
}

/// Images of the window basis under the comparison map between the two
/// module structures: the unit basis vectors are fixed and the image of a
/// longer word is obtained by applying the twisted action of its smallest
/// generator to the image of the rest. The result is unit triangular in
/// the word level.
pub fn interchange_images(
    conn: &ConnectionComplex,
    degree: i32,
    cap: u32,
) -> BTreeMap<(DExp, usize), WindowElem> {
    let rank = conn.complex.rank(degree);
    let mut values: BTreeMap<(DExp, usize), WindowElem> = BTreeMap::new();
    for e in 0..rank {
        values.insert((DExp::unit(), e), window_basis_elem(DExp::unit(), e));
    }
    for alpha in window_words(conn.alg.gens, cap) {
        if alpha.is_unit() {
            continue;
        }
        let k = alpha.0.iter().position(|&a| a > 0).expect("nonunit word");
        let mut rest = alpha.0.clone();
        rest[k] -= 1;
        let rest = DExp::from_vec(rest);
        for e in 0..rank {
            let prev = values
                .get(&(rest.clone(), e))
                .expect("images are built by increasing level")
                .clone();
            values.insert((alpha.clone(), e), apply_twisted(conn, degree, k, &prev));
        }
    }
    values
}

/// Applies the comparison map, extended linearly over the base polynomials,
/// to an element supported on words the image table covers.
pub fn apply_interchange(
    images: &BTreeMap<(DExp, usize), WindowElem>,
    v: &WindowElem,
) -> WindowElem {
    let mut out = WindowElem::new();
    for (key, coeff) in v {
        let img = images.get(key).expect("element stays inside the image table");
        for (key2, p) in img {
            window_add(&mut out, key2.clone(), coeff.mul(p));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subset_and_monomial_enumeration() {
        assert_eq!(subsets(3, 2), vec![vec![0, 1], vec![0, 2], vec![1, 2]]);
        assert_eq!(subsets(2, 0), vec![Vec::<usize>::new()]);
        assert_eq!(monomials(2, 2), vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
        assert_eq!(monomials(0, 0), vec![Vec::<u32>::new()]);
    }

    #[test]
    fn unit_complex_is_a_point() {
        let u = FreeComplex::unit(RationalField);
        u.check_complex().unwrap();
        assert_eq!(u.homology_ranks(), BTreeMap::from([(0, 1)]));
    }
}
