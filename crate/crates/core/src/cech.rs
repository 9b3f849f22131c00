//! Globalization of local complexes and filtered dgas over a finite
//! covering poset.
//!
//! A covering is a finite strict poset of opens.  A presheaf assigns a
//! complex (or a filtered dga) to every open and a restriction map to every
//! strict inclusion, functorially.  The globalization lives on increasing
//! chains `U_0 < U_1 < ... < U_k`: a degree `i` element assigns to such a
//! chain a local element of degree `i - k` over `U_0`, and the differential
//! combines the internal one with the chain faces,
//!
//! ```text
//! (dg)(U_0..U_k) = (-1)^k d(g(U_0..U_k))
//!                + g(U_1..U_k)|_{U_0}
//!                + sum_{j=1}^{k} (-1)^j g(U_0..^j..U_k)
//! (fg)(U_0..U_k) = sum_{s=0}^{k} (-1)^{(|f|-s)(k-s)}
//!                  f(U_0..U_s) * g(U_s..U_k)|_{U_0}
//! ```
//!
//! with restriction to the smallest open wherever values live over a larger
//! one.  The internal sign and the split sign are fixed here once and kept
//! honest by the `d^2 = 0`, Leibniz, and associativity checks every
//! construction runs; the same conventions drive the second half of the
//! module, where local mapping-complex dgas with bounded pole order are
//! built over punctured affine lines and globalized the same way.

use std::collections::{BTreeMap, BTreeSet};

use num::traits::{One, Zero};

use crate::complexes::{cone, ChainMap, FreeComplex};
use crate::matrix::Matrix;
use crate::mcgeom::{DgaMap, FiniteFilteredDGA};
use crate::poly::Poly;
use crate::ring::{Field, PolyRing, RationalField, Ring};
use crate::scalar::{rat_int, Rational};
use crate::{Error, Result};

fn sign_of<R: Ring>(ring: &R, n: i64) -> R::Elem {
    if n.rem_euclid(2) == 0 {
        ring.one()
    } else {
        ring.neg(&ring.one())
    }
}

fn vzero<R: Ring>(ring: &R, n: usize) -> Vec<R::Elem> {
    vec![ring.zero(); n]
}

fn vadd_into<R: Ring>(ring: &R, dst: &mut [R::Elem], src: &[R::Elem], c: &R::Elem) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d = ring.add(d, &ring.mul(c, s));
    }
}

/// A finite strict poset of opens, the covering shape everything else is
/// indexed by.  The order relation is stored transitively closed; `total`
/// optionally names an open containing every other one.
#[derive(Clone, Debug)]
pub struct Covering {
    pub labels: Vec<String>,
    order: BTreeSet<(usize, usize)>,
    pub total: Option<usize>,
}

impl Covering {
    /// Builds a covering from generating relations `(small, big)`.  The
    /// transitive closure is taken; reflexive or cyclic relations are
    /// rejected.
    pub fn new(labels: Vec<String>, relations: &[(usize, usize)]) -> Result<Covering> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::Validation("a covering needs at least one open".into()));
        }
        let mut closed: BTreeSet<(usize, usize)> = BTreeSet::new();
        for &(a, b) in relations {
            if a >= n || b >= n {
                return Err(Error::Validation(format!(
                    "relation ({a}, {b}) points outside the {n} opens"
                )));
            }
            if a == b {
                return Err(Error::Validation(format!(
                    "the inclusion order must be strict, got ({a}, {a})"
                )));
            }
            closed.insert((a, b));
        }
        loop {
            let mut grew = false;
            let pairs: Vec<(usize, usize)> = closed.iter().copied().collect();
            for &(a, b) in &pairs {
                for &(c, d) in &pairs {
                    if b == c && closed.insert((a, d)) {
                        grew = true;
                    }
                }
            }
            if !grew {
                break;
            }
        }
        for &(a, b) in &closed {
            if a == b || closed.contains(&(b, a)) {
                return Err(Error::Validation(format!(
                    "the relations generate a cycle through {a} and {b}"
                )));
            }
        }
        Ok(Covering { labels, order: closed, total: None })
    }

    /// Marks one open as containing all others; it must already sit above
    /// every other open in the order.
    pub fn with_total(mut self, total: usize) -> Result<Covering> {
        if total >= self.labels.len() {
            return Err(Error::Validation("total open out of range".into()));
        }
        for i in 0..self.labels.len() {
            if i != total && !self.less(i, total) {
                return Err(Error::Validation(format!(
                    "open {i} does not sit inside the declared total open"
                )));
            }
        }
        self.total = Some(total);
        Ok(self)
    }

    /// Covering of an affine line by complements of marked-point subsets:
    /// open `i` omits the points of `subsets[i]`, so a strictly larger
    /// subset means a strictly smaller open.  The empty subset, if present,
    /// is the total space.
    pub fn from_subsets(subsets: &[BTreeSet<usize>]) -> Result<Covering> {
        let mut seen = BTreeSet::new();
        for s in subsets {
            if !seen.insert(s.clone()) {
                return Err(Error::Validation("duplicate marked-point subset".into()));
            }
        }
        let labels = subsets
            .iter()
            .map(|s| {
                let inner: Vec<String> = s.iter().map(|p| p.to_string()).collect();
                format!("X-{{{}}}", inner.join(","))
            })
            .collect();
        let mut relations = Vec::new();
        for (i, si) in subsets.iter().enumerate() {
            for (j, sj) in subsets.iter().enumerate() {
                if i != j && si.is_superset(sj) {
                    relations.push((i, j));
                }
            }
        }
        let cov = Covering::new(labels, &relations)?;
        match subsets.iter().position(|s| s.is_empty()) {
            Some(t) => cov.with_total(t),
            None => Ok(cov),
        }
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    /// Strict containment `a < b` in the closure.
    pub fn less(&self, a: usize, b: usize) -> bool {
        self.order.contains(&(a, b))
    }

    pub fn le(&self, a: usize, b: usize) -> bool {
        a == b || self.less(a, b)
    }

    /// All strictly increasing chains, sorted by length then
    /// lexicographically.  A chain is a flag `U_0 < U_1 < ... < U_k`.
    pub fn chains(&self) -> Vec<Vec<usize>> {
        let n = self.n();
        let mut out: Vec<Vec<usize>> = Vec::new();
        let mut layer: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        while !layer.is_empty() {
            out.extend(layer.iter().cloned());
            let mut next = Vec::new();
            for c in &layer {
                let last = *c.last().unwrap();
                for j in 0..n {
                    if self.less(last, j) {
                        let mut c2 = c.clone();
                        c2.push(j);
                        next.push(c2);
                    }
                }
            }
            layer = next;
        }
        out.sort_by(|a, b| (a.len(), a.as_slice()).cmp(&(b.len(), b.as_slice())));
        out
    }

    /// The largest open contained in both arguments, when the covering has
    /// a unique one among the candidates.
    pub fn meet(&self, a: usize, b: usize) -> Option<usize> {
        let cands: Vec<usize> =
            (0..self.n()).filter(|&z| self.le(z, a) && self.le(z, b)).collect();
        cands
            .iter()
            .copied()
            .find(|&top| cands.iter().all(|&z| self.le(z, top)))
    }
}

/// Chains of `c` obtained by inserting one open, tagged with the slot the
/// new open occupies.
fn insertions(cov: &Covering, c: &[usize]) -> Vec<(Vec<usize>, usize)> {
    let mut out = Vec::new();
    for o in 0..cov.n() {
        for j in 0..=c.len() {
            let below = j == 0 || cov.less(c[j - 1], o);
            let above = j == c.len() || cov.less(o, c[j]);
            if below && above {
                let mut c2 = c[..j].to_vec();
                c2.push(o);
                c2.extend_from_slice(&c[j..]);
                out.push((c2, j));
            }
        }
    }
    out
}

/// Basis bookkeeping for a globalized object: which (chain, local index)
/// pair each coordinate of each total degree stands for.
#[derive(Clone, Debug)]
pub struct CechIndex {
    pub chains: Vec<Vec<usize>>,
    pub basis: BTreeMap<i32, Vec<(usize, usize)>>,
    offsets: BTreeMap<(i32, usize), usize>,
}

impl CechIndex {
    /// Assembles the index from per-chain local degree lists and ranks.  A
    /// chain of length `k + 1` contributes its local degree `q` to total
    /// degree `q + k`.
    pub fn build(
        chains: Vec<Vec<usize>>,
        local_degrees: impl Fn(usize) -> Vec<i32>,
        local_rank: impl Fn(usize, i32) -> usize,
        cap: Option<i32>,
    ) -> CechIndex {
        let mut basis: BTreeMap<i32, Vec<(usize, usize)>> = BTreeMap::new();
        let mut offsets = BTreeMap::new();
        let mut degrees: BTreeSet<i32> = BTreeSet::new();
        for (cid, c) in chains.iter().enumerate() {
            let k = c.len() as i32 - 1;
            for q in local_degrees(cid) {
                let i = q + k;
                if cap.map(|cp| i > cp).unwrap_or(false) {
                    continue;
                }
                if local_rank(cid, q) > 0 {
                    degrees.insert(i);
                }
            }
        }
        for &i in &degrees {
            let mut row = Vec::new();
            for (cid, c) in chains.iter().enumerate() {
                let k = c.len() as i32 - 1;
                let r = local_rank(cid, i - k);
                if r == 0 {
                    continue;
                }
                offsets.insert((i, cid), row.len());
                for u in 0..r {
                    row.push((cid, u));
                }
            }
            basis.insert(i, row);
        }
        CechIndex { chains, basis, offsets }
    }

    pub fn rank(&self, i: i32) -> usize {
        self.basis.get(&i).map(|v| v.len()).unwrap_or(0)
    }

    pub fn offset(&self, i: i32, chain: usize) -> Option<usize> {
        self.offsets.get(&(i, chain)).copied()
    }

    pub fn position(&self, i: i32, chain: usize, local: usize) -> Option<usize> {
        self.offset(i, chain).map(|o| o + local)
    }

    pub fn chain_id(&self, chain: &[usize]) -> Option<usize> {
        self.chains.iter().position(|c| c == chain)
    }

    /// The (chain, local index) pair behind one coordinate.
    pub fn describe(&self, i: i32, pos: usize) -> Option<(usize, usize)> {
        self.basis.get(&i).and_then(|v| v.get(pos)).copied()
    }
}

/// A functorial assignment of complexes to opens and restriction chain maps
/// to strict inclusions, validated on construction.
#[derive(Clone, Debug)]
pub struct PresheafOfComplexes<R: Ring> {
    pub covering: Covering,
    pub values: Vec<FreeComplex<R>>,
    restrictions: BTreeMap<(usize, usize), ChainMap<R>>,
}

impl<R: Ring> PresheafOfComplexes<R> {
    pub fn new(
        covering: Covering,
        values: Vec<FreeComplex<R>>,
        restrictions: BTreeMap<(usize, usize), ChainMap<R>>,
    ) -> Result<Self> {
        if values.len() != covering.n() {
            return Err(Error::Shape(format!(
                "{} opens but {} complexes",
                covering.n(),
                values.len()
            )));
        }
        for v in &values {
            v.check_complex()?;
        }
        for a in 0..covering.n() {
            for b in 0..covering.n() {
                if !covering.less(a, b) {
                    continue;
                }
                let r = restrictions.get(&(a, b)).ok_or_else(|| {
                    Error::Validation(format!("missing restriction for {a} < {b}"))
                })?;
                r.check(&values[b], &values[a])?;
            }
        }
        let p = PresheafOfComplexes { covering, values, restrictions };
        for a in 0..p.covering.n() {
            for b in 0..p.covering.n() {
                for c in 0..p.covering.n() {
                    if !(p.covering.less(a, b) && p.covering.less(b, c)) {
                        continue;
                    }
                    for i in p.values[c].degrees() {
                        let two = p
                            .restriction_matrix(a, b, i)
                            .mul(&p.values[c].ring, &p.restriction_matrix(b, c, i));
                        let one = p.restriction_matrix(a, c, i);
                        if !two.sub(&p.values[c].ring, &one).is_zero(&p.values[c].ring) {
                            return Err(Error::Validation(format!(
                                "restrictions along {a} < {b} < {c} do not compose at degree {i}"
                            )));
                        }
                    }
                }
            }
        }
        Ok(p)
    }

    /// Restriction from the sections over `big` to those over `small`; the
    /// identity when the two coincide.
    pub fn restriction_matrix(&self, small: usize, big: usize, i: i32) -> Matrix<R> {
        if small == big {
            return Matrix::identity(&self.values[small].ring, self.values[small].rank(i));
        }
        match self.restrictions.get(&(small, big)) {
            Some(r) => r.component(&self.values[big], &self.values[small], i),
            None => Matrix::zero(
                &self.values[small].ring,
                self.values[small].rank(i),
                self.values[big].rank(i),
            ),
        }
    }
}

/// A globalized complex together with its chain-indexed basis.
#[derive(Clone, Debug)]
pub struct CechComplex<R: Ring> {
    pub complex: FreeComplex<R>,
    pub index: CechIndex,
}

/// Assembles the chain-indexed total complex of a presheaf of complexes
/// and verifies that its differential squares to zero.
pub fn globalize_complex<R: Ring>(p: &PresheafOfComplexes<R>) -> Result<CechComplex<R>> {
    let ring = p.values[0].ring.clone();
    let chains = p.covering.chains();
    let index = CechIndex::build(
        chains.clone(),
        |cid| p.values[chains[cid][0]].degrees(),
        |cid, q| p.values[chains[cid][0]].rank(q),
        None,
    );
    let ranks: BTreeMap<i32, usize> =
        index.basis.iter().map(|(&i, v)| (i, v.len())).collect();
    let mut complex = FreeComplex::new(ring.clone(), ranks);
    let degs: Vec<i32> = index.basis.keys().copied().collect();
    for &i in &degs {
        if index.rank(i + 1) == 0 {
            continue;
        }
        let mut m = Matrix::zero(&ring, index.rank(i + 1), index.rank(i));
        for (col, &(cid, u)) in index.basis[&i].iter().enumerate() {
            let c = &index.chains[cid];
            let k = c.len() as i32 - 1;
            let q = i - k;
            if let Some(o) = index.offset(i + 1, cid) {
                let d = p.values[c[0]].diff(q);
                let sgn = sign_of(&ring, k as i64);
                for r in 0..d.rows {
                    let v = ring.mul(&sgn, d.get(r, u));
                    if !ring.is_zero(&v) {
                        m.set(o + r, col, ring.add(m.get(o + r, col), &v));
                    }
                }
            }
            for (c2, j) in insertions(&p.covering, c) {
                let cid2 = index.chain_id(&c2).expect("insertion leaves the chain set");
                let Some(o) = index.offset(i + 1, cid2) else { continue };
                if j == 0 {
                    let rm = p.restriction_matrix(c2[0], c[0], q);
                    for r in 0..rm.rows {
                        let v = rm.get(r, u);
                        if !ring.is_zero(v) {
                            m.set(o + r, col, ring.add(m.get(o + r, col), v));
                        }
                    }
                } else {
                    let sgn = sign_of(&ring, j as i64);
                    m.set(o + u, col, ring.add(m.get(o + u, col), &sgn));
                }
            }
        }
        complex.set_diff(i, m)?;
    }
    complex.check_complex()?;
    Ok(CechComplex { complex, index })
}

/// Outcome of comparing a section complex with a globalization through the
/// canonical map: the map must be a chain map and its cone acyclic.
#[derive(Clone, Debug)]
pub struct ComparisonCertificate {
    pub chain_map_ok: bool,
    pub cone_homology: BTreeMap<i32, usize>,
}

impl ComparisonCertificate {
    pub fn ok(&self) -> bool {
        self.chain_map_ok && self.cone_homology.is_empty()
    }
}

/// Compares the sections over the total open with the globalization via
/// `a |-> (a|_U)_U` on single chains.  Needs the total open as a covering
/// member.
pub fn unit_comparison<F: Field>(
    p: &PresheafOfComplexes<F>,
    g: &CechComplex<F>,
) -> Result<ComparisonCertificate> {
    let x = p
        .covering
        .total
        .ok_or_else(|| Error::Validation("the covering does not contain the total open".into()))?;
    let f = single_chain_map(p, g, |u, i| p.restriction_matrix(u, x, i), &p.values[x])?;
    certify_cone(&p.values[x], &g.complex, &f)
}

/// Reconstructs the sections over `w` from the covering: the chain complex
/// valued in sections over the meets `U /\ w` receives the sections over
/// `w`, and the cone measures the defect.  Every open must have a meet with
/// `w` inside the covering.
pub fn sections_over<F: Field>(
    p: &PresheafOfComplexes<F>,
    w: usize,
) -> Result<ComparisonCertificate> {
    if w >= p.covering.n() {
        return Err(Error::Validation("unknown open".into()));
    }
    let mut meets = Vec::with_capacity(p.covering.n());
    for u in 0..p.covering.n() {
        let z = p.covering.meet(u, w).ok_or_else(|| {
            Error::Validation(format!("open {u} has no meet with {w} in the covering"))
        })?;
        meets.push(z);
    }
    let mut values = Vec::with_capacity(p.covering.n());
    for u in 0..p.covering.n() {
        values.push(p.values[meets[u]].clone());
    }
    let mut restrictions = BTreeMap::new();
    for a in 0..p.covering.n() {
        for b in 0..p.covering.n() {
            if !p.covering.less(a, b) {
                continue;
            }
            let (ma, mb) = (meets[a], meets[b]);
            let mut comp = BTreeMap::new();
            for i in values[b].degrees() {
                comp.insert(i, p.restriction_matrix(ma, mb, i));
            }
            restrictions.insert((a, b), ChainMap { components: comp });
        }
    }
    let meet_presheaf =
        PresheafOfComplexes::new(p.covering.clone(), values, restrictions)?;
    let g = globalize_complex(&meet_presheaf)?;
    let f = single_chain_map(
        &meet_presheaf,
        &g,
        |u, i| p.restriction_matrix(meets[u], w, i),
        &p.values[w],
    )?;
    certify_cone(&p.values[w], &g.complex, &f)
}

fn single_chain_map<R: Ring>(
    p: &PresheafOfComplexes<R>,
    g: &CechComplex<R>,
    block: impl Fn(usize, i32) -> Matrix<R>,
    src: &FreeComplex<R>,
) -> Result<ChainMap<R>> {
    let ring = &src.ring;
    let mut components = BTreeMap::new();
    for i in src.degrees() {
        let mut m = Matrix::zero(ring, g.complex.rank(i), src.rank(i));
        for (cid, c) in g.index.chains.iter().enumerate() {
            if c.len() != 1 {
                continue;
            }
            let Some(o) = g.index.offset(i, cid) else { continue };
            m.set_block(o, 0, &block(c[0], i));
        }
        components.insert(i, m);
    }
    let _ = p;
    Ok(ChainMap { components })
}

fn certify_cone<F: Field>(
    src: &FreeComplex<F>,
    tgt: &FreeComplex<F>,
    f: &ChainMap<F>,
) -> Result<ComparisonCertificate> {
    let chain_map_ok = f.check(src, tgt).is_ok();
    if !chain_map_ok {
        return Ok(ComparisonCertificate { chain_map_ok, cone_homology: BTreeMap::new() });
    }
    let c = cone(src, tgt, f)?;
    Ok(ComparisonCertificate { chain_map_ok, cone_homology: c.homology_ranks() })
}

/// A map of presheaves of complexes, one chain map per open.
#[derive(Clone, Debug)]
pub struct PresheafComplexMap<R: Ring> {
    pub components: Vec<ChainMap<R>>,
}

/// Outcome of checking that globalization commutes with strict fibers: the
/// kernels are taken openwise, globalized, and compared with the kernel of
/// the globalized map.
#[derive(Clone, Debug)]
pub struct FiberCertificate {
    pub natural: bool,
    pub surjective: bool,
    pub inclusion_chain_map: bool,
    pub composite_zero: bool,
    pub dims_match: bool,
}

impl FiberCertificate {
    pub fn ok(&self) -> bool {
        self.natural
            && self.surjective
            && self.inclusion_chain_map
            && self.composite_zero
            && self.dims_match
    }
}

/// Certifies that the globalization of the openwise strict fiber of a
/// surjective presheaf map equals the strict fiber of the globalized map,
/// dimensionwise and differential-wise.
pub fn strict_fiber_glob_commute<F: Field>(
    phi: &PresheafComplexMap<F>,
    a: &PresheafOfComplexes<F>,
    b: &PresheafOfComplexes<F>,
) -> Result<FiberCertificate> {
    let n = a.covering.n();
    if phi.components.len() != n || b.covering.n() != n {
        return Err(Error::Shape("the map must cover every open".into()));
    }
    let field = a.values[0].ring.clone();
    let mut cert = FiberCertificate {
        natural: true,
        surjective: true,
        inclusion_chain_map: true,
        composite_zero: true,
        dims_match: true,
    };
    for u in 0..n {
        if phi.components[u].check(&a.values[u], &b.values[u]).is_err() {
            cert.natural = false;
        }
    }
    for s in 0..n {
        for t in 0..n {
            if !a.covering.less(s, t) {
                continue;
            }
            for i in a.values[t].degrees() {
                let lhs = b
                    .restriction_matrix(s, t, i)
                    .mul(&field, &phi.components[t].component(&a.values[t], &b.values[t], i));
                let rhs = phi.components[s]
                    .component(&a.values[s], &b.values[s], i)
                    .mul(&field, &a.restriction_matrix(s, t, i));
                if !lhs.sub(&field, &rhs).is_zero(&field) {
                    cert.natural = false;
                }
            }
        }
    }
    if !cert.natural {
        return Ok(FiberCertificate {
            natural: false,
            surjective: false,
            inclusion_chain_map: false,
            composite_zero: false,
            dims_match: false,
        });
    }
    for u in 0..n {
        for i in b.values[u].degrees() {
            let m = phi.components[u].component(&a.values[u], &b.values[u], i);
            if m.rank(&field) != b.values[u].rank(i) {
                cert.surjective = false;
            }
        }
    }
    // Openwise kernels with induced differentials and restrictions.
    let mut kernels: Vec<BTreeMap<i32, Matrix<F>>> = Vec::with_capacity(n);
    for u in 0..n {
        let mut per_degree = BTreeMap::new();
        for i in a.values[u].degrees() {
            let m = phi.components[u].component(&a.values[u], &b.values[u], i);
            let vecs = m.kernel_basis(&field);
            let k = Matrix::from_fn(&field, a.values[u].rank(i), vecs.len(), |r, c| {
                vecs[c][r].clone()
            });
            per_degree.insert(i, k);
        }
        kernels.push(per_degree);
    }
    let in_kernel = |k: &Matrix<F>, v: &[F::Elem]| -> Option<Vec<F::Elem>> {
        k.solve(&field, v)
    };
    let mut kvalues = Vec::with_capacity(n);
    let mut krestrictions = BTreeMap::new();
    for u in 0..n {
        let ranks: BTreeMap<i32, usize> = kernels[u]
            .iter()
            .filter(|(_, k)| k.cols > 0)
            .map(|(&i, k)| (i, k.cols))
            .collect();
        let mut fc = FreeComplex::new(field.clone(), ranks);
        for (&i, k) in &kernels[u] {
            let up = kernels[u].get(&(i + 1));
            let rows = up.map(|m| m.cols).unwrap_or(0);
            if rows == 0 || k.cols == 0 {
                continue;
            }
            let up = up.unwrap();
            let mut d = Matrix::zero(&field, rows, k.cols);
            for c in 0..k.cols {
                let col: Vec<F::Elem> = (0..k.rows).map(|r| k.get(r, c).clone()).collect();
                let image = a.values[u].diff(i).apply(&field, &col);
                let x = in_kernel(up, &image).ok_or_else(|| {
                    Error::Validation("the differential leaves the openwise kernel".into())
                })?;
                for (r, v) in x.into_iter().enumerate() {
                    d.set(r, c, v);
                }
            }
            fc.set_diff(i, d)?;
        }
        kvalues.push(fc);
    }
    for s in 0..n {
        for t in 0..n {
            if !a.covering.less(s, t) {
                continue;
            }
            let mut comp = BTreeMap::new();
            for i in kvalues[t].degrees() {
                let kt = &kernels[t][&i];
                let ks = &kernels[s][&i];
                let mut m = Matrix::zero(&field, ks.cols, kt.cols);
                for c in 0..kt.cols {
                    let col: Vec<F::Elem> =
                        (0..kt.rows).map(|r| kt.get(r, c).clone()).collect();
                    let rest = a.restriction_matrix(s, t, i).apply(&field, &col);
                    let x = in_kernel(ks, &rest).ok_or_else(|| {
                        Error::Validation("a restriction leaves the openwise kernel".into())
                    })?;
                    for (r, v) in x.into_iter().enumerate() {
                        m.set(r, c, v);
                    }
                }
                comp.insert(i, m);
            }
            krestrictions.insert((s, t), ChainMap { components: comp });
        }
    }
    let kp = PresheafOfComplexes::new(a.covering.clone(), kvalues, krestrictions)?;
    let gk = globalize_complex(&kp)?;
    let ga = globalize_complex(a)?;
    let gb = globalize_complex(b)?;
    // Blockwise inclusion and blockwise map on the globalizations.
    let block_map = |src: &CechComplex<F>,
                     tgt: &CechComplex<F>,
                     block: &dyn Fn(usize, i32) -> Matrix<F>|
     -> ChainMap<F> {
        let mut components = BTreeMap::new();
        for i in src.complex.degrees() {
            let mut m = Matrix::zero(&field, tgt.complex.rank(i), src.complex.rank(i));
            for (cid, c) in src.index.chains.iter().enumerate() {
                let k = c.len() as i32 - 1;
                let (Some(os), Some(ot)) =
                    (src.index.offset(i, cid), tgt.index.offset(i, cid))
                else {
                    continue;
                };
                m.set_block(ot, os, &block(c[0], i - k));
            }
            components.insert(i, m);
        }
        ChainMap { components }
    };
    let inclusion = block_map(&gk, &ga, &|u, q| kernels[u][&q].clone());
    let gphi = block_map(&ga, &gb, &|u, q| {
        phi.components[u].component(&a.values[u], &b.values[u], q)
    });
    if inclusion.check(&gk.complex, &ga.complex).is_err() {
        cert.inclusion_chain_map = false;
    }
    for i in gk.complex.degrees() {
        let comp = gphi
            .component(&ga.complex, &gb.complex, i)
            .mul(&field, &inclusion.component(&gk.complex, &ga.complex, i));
        if !comp.is_zero(&field) {
            cert.composite_zero = false;
        }
    }
    let mut degs = ga.complex.degrees();
    degs.extend(gk.complex.degrees());
    degs.sort_unstable();
    degs.dedup();
    for &i in &degs {
        let m = gphi.component(&ga.complex, &gb.complex, i);
        let expected = ga.complex.rank(i) - m.rank(&field);
        let inc = inclusion.component(&gk.complex, &ga.complex, i);
        if gk.complex.rank(i) != expected || inc.rank(&field) != gk.complex.rank(i) {
            cert.dims_match = false;
        }
    }
    Ok(cert)
}

/// A functorial assignment of filtered dgas to opens with restriction dga
/// maps, validated on construction.
#[derive(Clone, Debug)]
pub struct PresheafOfDgas<R: Ring> {
    pub covering: Covering,
    pub values: Vec<FiniteFilteredDGA<R>>,
    restrictions: BTreeMap<(usize, usize), DgaMap<R>>,
}

impl<R: Ring> PresheafOfDgas<R> {
    pub fn new(
        covering: Covering,
        values: Vec<FiniteFilteredDGA<R>>,
        restrictions: BTreeMap<(usize, usize), DgaMap<R>>,
    ) -> Result<Self> {
        if values.len() != covering.n() {
            return Err(Error::Shape(format!(
                "{} opens but {} dgas",
                covering.n(),
                values.len()
            )));
        }
        for a in 0..covering.n() {
            for b in 0..covering.n() {
                if !covering.less(a, b) {
                    continue;
                }
                let r = restrictions.get(&(a, b)).ok_or_else(|| {
                    Error::Validation(format!("missing restriction for {a} < {b}"))
                })?;
                r.check(&values[b], &values[a])?;
            }
        }
        let p = PresheafOfDgas { covering, values, restrictions };
        let ring = p.values[0].ring().clone();
        for a in 0..p.covering.n() {
            for b in 0..p.covering.n() {
                for c in 0..p.covering.n() {
                    if !(p.covering.less(a, b) && p.covering.less(b, c)) {
                        continue;
                    }
                    for i in p.values[c].degrees() {
                        let two = p
                            .restriction_matrix(a, b, i)
                            .mul(&ring, &p.restriction_matrix(b, c, i));
                        let one = p.restriction_matrix(a, c, i);
                        if !two.sub(&ring, &one).is_zero(&ring) {
                            return Err(Error::Validation(format!(
                                "dga restrictions along {a} < {b} < {c} do not compose at degree {i}"
                            )));
                        }
                    }
                }
            }
        }
        Ok(p)
    }

    pub fn restriction_matrix(&self, small: usize, big: usize, i: i32) -> Matrix<R> {
        if small == big {
            return Matrix::identity(self.values[small].ring(), self.values[small].rank(i));
        }
        match self.restrictions.get(&(small, big)) {
            Some(r) => r.component(&self.values[big], &self.values[small], i),
            None => Matrix::zero(
                self.values[small].ring(),
                self.values[small].rank(i),
                self.values[big].rank(i),
            ),
        }
    }
}

/// A globalized filtered dga with its chain-indexed basis.
#[derive(Clone, Debug)]
pub struct CechDga<R: Ring> {
    pub dga: FiniteFilteredDGA<R>,
    pub index: CechIndex,
}

/// Assembles the chain-indexed filtered dga of a presheaf of filtered dgas.
/// Levels, units, augmentation, and base element are inherited blockwise:
/// single chains keep their local data, pair chains receive the local unit
/// as identity transition in the base element, and the degree cap is the
/// smallest local one.
pub fn globalize_dga<R: Ring>(p: &PresheafOfDgas<R>) -> Result<CechDga<R>> {
    let ring = p.values[0].ring().clone();
    let chains = p.covering.chains();
    let caps: Vec<i32> = p.values.iter().filter_map(|z| z.degree_cap).collect();
    let cap = caps.iter().copied().min();
    let index = CechIndex::build(
        chains.clone(),
        |cid| p.values[chains[cid][0]].degrees(),
        |cid, q| p.values[chains[cid][0]].rank(q),
        cap,
    );
    let ranks: BTreeMap<i32, usize> =
        index.basis.iter().map(|(&i, v)| (i, v.len())).collect();
    let mut complex = FreeComplex::new(ring.clone(), ranks);
    let degs: Vec<i32> = index.basis.keys().copied().collect();
    let in_cap = |i: i32| cap.map(|cp| i <= cp).unwrap_or(true);
    for &i in &degs {
        if !in_cap(i + 1) || index.rank(i + 1) == 0 {
            continue;
        }
        let mut m = Matrix::zero(&ring, index.rank(i + 1), index.rank(i));
        for (col, &(cid, u)) in index.basis[&i].iter().enumerate() {
            let c = &index.chains[cid];
            let k = c.len() as i32 - 1;
            let q = i - k;
            if let Some(o) = index.offset(i + 1, cid) {
                let d = p.values[c[0]].complex.diff(q);
                let sgn = sign_of(&ring, k as i64);
                for r in 0..d.rows {
                    let v = ring.mul(&sgn, d.get(r, u));
                    if !ring.is_zero(&v) {
                        m.set(o + r, col, ring.add(m.get(o + r, col), &v));
                    }
                }
            }
            for (c2, j) in insertions(&p.covering, c) {
                let cid2 = index.chain_id(&c2).expect("insertion leaves the chain set");
                let Some(o) = index.offset(i + 1, cid2) else { continue };
                if j == 0 {
                    let rm = p.restriction_matrix(c2[0], c[0], q);
                    for r in 0..rm.rows {
                        let v = rm.get(r, u);
                        if !ring.is_zero(v) {
                            m.set(o + r, col, ring.add(m.get(o + r, col), v));
                        }
                    }
                } else {
                    let sgn = sign_of(&ring, j as i64);
                    m.set(o + u, col, ring.add(m.get(o + u, col), &sgn));
                }
            }
        }
        complex.set_diff(i, m)?;
    }
    complex.check_complex()?;

    let mut product = BTreeMap::new();
    for &pd in &degs {
        for &qd in &degs {
            if !in_cap(pd + qd) || index.rank(pd + qd) == 0 {
                continue;
            }
            let rows = index.rank(pd + qd);
            let cols = index.rank(pd) * index.rank(qd);
            let mut m = Matrix::zero(&ring, rows, cols);
            let mut nonzero = false;
            for (fa, &(ca, ua)) in index.basis[&pd].iter().enumerate() {
                let cf = &index.chains[ca];
                let s = cf.len() as i32 - 1;
                for (fb, &(cb, ub)) in index.basis[&qd].iter().enumerate() {
                    let cg = &index.chains[cb];
                    if cf.last() != cg.first() {
                        continue;
                    }
                    let mut c = cf.clone();
                    c.extend_from_slice(&cg[1..]);
                    let cid = index.chain_id(&c).expect("concatenation leaves the chain set");
                    let Some(o) = index.offset(pd + qd, cid) else { continue };
                    let k = c.len() as i32 - 1;
                    let ldeg_f = pd - s;
                    let ldeg_g = qd - (k - s);
                    let sgn = sign_of(&ring, ((ldeg_f) as i64) * ((k - s) as i64));
                    let rm = p.restriction_matrix(cf[0], cg[0], ldeg_g);
                    let lp = p.values[cf[0]].prod(ldeg_f, ldeg_g);
                    let loc_q_rank = p.values[cf[0]].rank(ldeg_g);
                    let col = fa * index.rank(qd) + fb;
                    for ib in 0..rm.rows {
                        let rv = rm.get(ib, ub);
                        if ring.is_zero(rv) {
                            continue;
                        }
                        let pcol = ua * loc_q_rank + ib;
                        for r in 0..lp.rows {
                            let v = ring.mul(&sgn, &ring.mul(rv, lp.get(r, pcol)));
                            if !ring.is_zero(&v) {
                                nonzero = true;
                                m.set(o + r, col, ring.add(m.get(o + r, col), &v));
                            }
                        }
                    }
                }
            }
            if nonzero {
                product.insert((pd, qd), m);
            }
        }
    }

    let mut level = BTreeMap::new();
    for (&i, row) in &index.basis {
        let levels: Vec<u32> = row
            .iter()
            .map(|&(cid, u)| {
                let c = &index.chains[cid];
                let k = c.len() as i32 - 1;
                p.values[c[0]].level_of(i - k, u)
            })
            .collect();
        level.insert(i, levels);
    }

    let mut unit = vzero(&ring, index.rank(0));
    for (pos, &(cid, u)) in index.basis.get(&0).map(|v| v.as_slice()).unwrap_or(&[]).iter().enumerate()
    {
        let c = &index.chains[cid];
        if c.len() == 1 {
            unit[pos] = p.values[c[0]].unit[u].clone();
        }
    }

    let eps_chain = match p.covering.total {
        Some(t) => vec![t],
        None => chains.iter().find(|c| c.len() == 1).cloned().unwrap_or_default(),
    };
    let mut eps = vzero(&ring, index.rank(0));
    if let Some(cid) = index.chain_id(&eps_chain) {
        if let Some(o) = index.offset(0, cid) {
            let local = &p.values[eps_chain[0]].eps;
            for (u, v) in local.iter().enumerate() {
                eps[o + u] = v.clone();
            }
        }
    }

    let mut eta0 = vzero(&ring, index.rank(1));
    for (pos, &(cid, u)) in index.basis.get(&1).map(|v| v.as_slice()).unwrap_or(&[]).iter().enumerate()
    {
        let c = &index.chains[cid];
        if c.len() == 1 {
            eta0[pos] = p.values[c[0]].eta0[u].clone();
        } else if c.len() == 2 {
            eta0[pos] = p.values[c[0]].unit[u].clone();
        }
    }

    let kmax = p.values.iter().map(|z| z.kmax).max().unwrap_or(1);
    let dga = FiniteFilteredDGA {
        complex,
        product,
        unit,
        level,
        kmax,
        eps,
        eta0,
        degree_cap: cap,
    };
    Ok(CechDga { dga, index })
}

/// The cup-style product of coordinate vectors on a globalized dga.
pub fn mu_product<R: Ring>(
    g: &CechDga<R>,
    p: i32,
    f: &[R::Elem],
    q: i32,
    h: &[R::Elem],
) -> Vec<R::Elem> {
    g.dga.mul(p, f, q, h)
}

/// Value-level reassembly of the globalized differential from local data;
/// the second implementation the consistency certificates compare against.
fn glob_d_walk<R: Ring>(
    p: &PresheafOfDgas<R>,
    index: &CechIndex,
    i: i32,
    v: &[R::Elem],
) -> Vec<R::Elem> {
    let ring = p.values[0].ring().clone();
    let mut out = vzero(&ring, index.rank(i + 1));
    let Some(basis) = index.basis.get(&i) else { return out };
    for (pos, &(cid, u)) in basis.iter().enumerate() {
        if ring.is_zero(&v[pos]) {
            continue;
        }
        let c = &index.chains[cid];
        let k = c.len() as i32 - 1;
        let q = i - k;
        if let Some(o) = index.offset(i + 1, cid) {
            let d = p.values[c[0]].complex.diff(q);
            let sgn = sign_of(&ring, k as i64);
            for r in 0..d.rows {
                let w = ring.mul(&sgn, &ring.mul(&v[pos], d.get(r, u)));
                out[o + r] = ring.add(&out[o + r], &w);
            }
        }
        for (c2, j) in insertions(&p.covering, c) {
            let Some(cid2) = index.chain_id(&c2) else { continue };
            let Some(o) = index.offset(i + 1, cid2) else { continue };
            if j == 0 {
                let rm = p.restriction_matrix(c2[0], c[0], q);
                for r in 0..rm.rows {
                    let w = ring.mul(&v[pos], rm.get(r, u));
                    out[o + r] = ring.add(&out[o + r], &w);
                }
            } else {
                let sgn = sign_of(&ring, j as i64);
                let w = ring.mul(&sgn, &v[pos]);
                out[o + u] = ring.add(&out[o + u], &w);
            }
        }
    }
    out
}

/// Value-level reassembly of the globalized product from local data.
fn glob_mu_walk<R: Ring>(
    p: &PresheafOfDgas<R>,
    index: &CechIndex,
    pd: i32,
    f: &[R::Elem],
    qd: i32,
    h: &[R::Elem],
) -> Vec<R::Elem> {
    let ring = p.values[0].ring().clone();
    let mut out = vzero(&ring, index.rank(pd + qd));
    let (Some(bf), Some(bh)) = (index.basis.get(&pd), index.basis.get(&qd)) else {
        return out;
    };
    for (fa, &(ca, ua)) in bf.iter().enumerate() {
        if ring.is_zero(&f[fa]) {
            continue;
        }
        let cf = &index.chains[ca];
        let s = cf.len() as i32 - 1;
        for (fb, &(cb, ub)) in bh.iter().enumerate() {
            if ring.is_zero(&h[fb]) {
                continue;
            }
            let cg = &index.chains[cb];
            if cf.last() != cg.first() {
                continue;
            }
            let mut c = cf.clone();
            c.extend_from_slice(&cg[1..]);
            let Some(cid) = index.chain_id(&c) else { continue };
            let Some(o) = index.offset(pd + qd, cid) else { continue };
            let k = c.len() as i32 - 1;
            let ldeg_f = pd - s;
            let ldeg_g = qd - (k - s);
            let sgn = sign_of(&ring, (ldeg_f as i64) * ((k - s) as i64));
            let rm = p.restriction_matrix(cf[0], cg[0], ldeg_g);
            let lp = p.values[cf[0]].prod(ldeg_f, ldeg_g);
            let loc_q_rank = p.values[cf[0]].rank(ldeg_g);
            let coeff = ring.mul(&f[fa], &ring.mul(&h[fb], &sgn));
            for ib in 0..rm.rows {
                let rv = rm.get(ib, ub);
                if ring.is_zero(rv) {
                    continue;
                }
                let pcol = ua * loc_q_rank + ib;
                let cr = ring.mul(&coeff, rv);
                for r in 0..lp.rows {
                    let v = ring.mul(&cr, lp.get(r, pcol));
                    out[o + r] = ring.add(&out[o + r], &v);
                }
            }
        }
    }
    out
}

/// The twisted differential on a globalized dga reassembled from local
/// data, for comparison against the stored structure constants.
pub fn twisted_assembled_matrix<R: Ring>(
    p: &PresheafOfDgas<R>,
    g: &CechDga<R>,
    i: i32,
    phi: &[R::Elem],
    eta: &[R::Elem],
) -> Matrix<R> {
    let ring = p.values[0].ring().clone();
    let rows = g.index.rank(i + 1);
    let cols = g.index.rank(i);
    let mut m = Matrix::zero(&ring, rows, cols);
    let sgn = sign_of(&ring, i as i64 + 1);
    for b in 0..cols {
        let mut e = vzero(&ring, cols);
        e[b] = ring.one();
        let mut col = glob_d_walk(p, &g.index, i, &e);
        let left = glob_mu_walk(p, &g.index, 1, phi, i, &e);
        let right = glob_mu_walk(p, &g.index, i, &e, 1, eta);
        for r in 0..rows {
            let v = ring.add(&col[r], &left[r]);
            col[r] = ring.add(&v, &ring.mul(&sgn, &right[r]));
        }
        for (r, v) in col.into_iter().enumerate() {
            m.set(r, b, v);
        }
    }
    m
}

/// Checks that the pair-chain components of a degree one element are unital
/// transitions: augmentation one and invertible in the local dga.
pub fn transitions_unital<F: Field>(
    p: &PresheafOfDgas<F>,
    g: &CechDga<F>,
    eta: &[F::Elem],
) -> bool {
    let ring = p.values[0].ring().clone();
    let Some(basis) = g.index.basis.get(&1) else { return true };
    let mut per_chain: BTreeMap<usize, Vec<F::Elem>> = BTreeMap::new();
    for (pos, &(cid, u)) in basis.iter().enumerate() {
        if g.index.chains[cid].len() != 2 {
            continue;
        }
        let c0 = g.index.chains[cid][0];
        let slot = per_chain
            .entry(cid)
            .or_insert_with(|| vzero(&ring, p.values[c0].rank(0)));
        slot[u] = eta[pos].clone();
    }
    for (cid, v) in per_chain {
        let c0 = g.index.chains[cid][0];
        let z = &p.values[c0];
        let mut pairing = ring.zero();
        for (b, x) in v.iter().enumerate() {
            pairing = ring.add(&pairing, &ring.mul(&z.eps[b], x));
        }
        if !ring.is_one(&pairing) {
            return false;
        }
        if z.invert_unital(&v).is_err() {
            return false;
        }
    }
    true
}

/// Outcome of checking that Maurer-Cartan loci commute with globalization:
/// single-chain equation blocks are the local equations verbatim, the full
/// defect agrees with an independent local-data walk on a spanning probe
/// set, the twisted differential agrees with its reassembly, and the base
/// transitions are unital.
#[derive(Clone, Debug)]
pub struct McGlobCertificate {
    pub single_blocks_match: bool,
    pub defect_probes_match: bool,
    pub twisted_blocks_match: bool,
    pub transitions_unital: bool,
    pub hom_dims_match: bool,
    pub notes: Vec<String>,
}

impl McGlobCertificate {
    pub fn ok(&self) -> bool {
        self.single_blocks_match
            && self.defect_probes_match
            && self.twisted_blocks_match
            && self.transitions_unital
            && self.hom_dims_match
    }
}

/// Certifies on a finite instance that globalization commutes with the
/// Maurer-Cartan construction.
pub fn mc_glob_commute<F: Field>(
    p: &PresheafOfDgas<F>,
    g: &CechDga<F>,
) -> Result<McGlobCertificate> {
    let field = p.values[0].ring().clone();
    let mut notes = Vec::new();
    let gv = g.dga.mc_equations()?;
    let mut by_row: BTreeMap<usize, &crate::mcgeom::McEquation<F>> = BTreeMap::new();
    for eq in &gv.equations {
        by_row.insert(eq.row, eq);
    }
    let var_pos: BTreeMap<usize, usize> =
        gv.vars.iter().enumerate().map(|(i, &v)| (v, i)).collect();

    // Single-chain blocks carry the local varieties verbatim.
    let mut single_blocks_match = true;
    for (cid, c) in g.index.chains.iter().enumerate() {
        if c.len() != 1 {
            continue;
        }
        let z = &p.values[c[0]];
        if !z.in_cap(2) {
            continue;
        }
        let lv = z.mc_equations()?;
        let o2 = g.index.offset(2, cid);
        let mut local_rows: BTreeMap<usize, &crate::mcgeom::McEquation<F>> = BTreeMap::new();
        for eq in &lv.equations {
            local_rows.insert(eq.row, eq);
        }
        for r in 0..z.rank(2) {
            let Some(o2) = o2 else {
                if local_rows.contains_key(&r) {
                    single_blocks_match = false;
                    notes.push(format!("chain {cid} drops local equation row {r}"));
                }
                continue;
            };
            let grow = o2 + r;
            match (local_rows.get(&r), by_row.get(&grow)) {
                (None, None) => {}
                (None, Some(geq)) => {
                    single_blocks_match = false;
                    notes.push(format!(
                        "row {grow} of the globalization is nontrivial but local row {r} is not: {:?}",
                        geq.row
                    ));
                }
                (Some(_), None) => {
                    single_blocks_match = false;
                    notes.push(format!("local row {r} of chain {cid} vanished"));
                }
                (Some(leq), Some(geq)) => {
                    let remap = |v: usize| -> Option<usize> {
                        let coord = g.index.position(1, cid, lv.vars[v])?;
                        var_pos.get(&coord).copied()
                    };
                    let mut ok = field_eq(&field, &leq.constant, &geq.constant);
                    let mut lin = BTreeMap::new();
                    for (&v, cval) in &leq.linear {
                        match remap(v) {
                            Some(gvp) => {
                                lin.insert(gvp, cval.clone());
                            }
                            None => ok = false,
                        }
                    }
                    ok = ok && lin == geq.linear;
                    let mut quad = BTreeMap::new();
                    for (&(v, w), cval) in &leq.quadratic {
                        match (remap(v), remap(w)) {
                            (Some(a), Some(b)) => {
                                let key = if a <= b { (a, b) } else { (b, a) };
                                quad.insert(key, cval.clone());
                            }
                            _ => ok = false,
                        }
                    }
                    ok = ok && quad == geq.quadratic;
                    if !ok {
                        single_blocks_match = false;
                        notes.push(format!(
                            "local equation row {r} of chain {cid} disagrees with global row {grow}"
                        ));
                    }
                }
            }
        }
    }

    // Full defect against the independent walk, on a spanning probe set for
    // quadratic maps: zero, unit directions, and pairwise sums.
    let nvars = gv.vars.len();
    let mut probes: Vec<Vec<F::Elem>> = vec![vzero(&field, nvars)];
    for v in 0..nvars {
        let mut x = vzero(&field, nvars);
        x[v] = field.one();
        probes.push(x);
    }
    for v in 0..nvars {
        for w in (v + 1)..nvars {
            let mut x = vzero(&field, nvars);
            x[v] = field.one();
            x[w] = field.one();
            probes.push(x);
        }
    }
    let mut defect_probes_match = true;
    for x in &probes {
        let eta = g.dga.eta_full(x);
        let lhs = g.dga.mc_defect(&eta)?;
        let mut rhs = glob_d_walk(p, &g.index, 1, &eta);
        let sq = glob_mu_walk(p, &g.index, 1, &eta, 1, &eta);
        for (r, v) in sq.into_iter().enumerate() {
            rhs[r] = field.add(&rhs[r], &v);
        }
        if lhs != rhs {
            defect_probes_match = false;
            notes.push("a defect probe disagrees with the local-data walk".into());
            break;
        }
    }

    // Twisted differentials agree with their reassembly at the base point.
    let mut twisted_blocks_match = true;
    for i in g.dga.degrees() {
        if !g.dga.in_cap(i + 1) {
            continue;
        }
        let lhs = g.dga.twisted_matrix(i, &g.dga.eta0, &g.dga.eta0);
        let rhs = twisted_assembled_matrix(p, g, i, &g.dga.eta0, &g.dga.eta0);
        if !lhs.sub(&field, &rhs).is_zero(&field) {
            twisted_blocks_match = false;
            notes.push(format!("twisted differential disagrees at degree {i}"));
        }
    }

    let unital = transitions_unital(p, g, &g.dga.eta0);

    let mut hom_dims_match = true;
    for i in g.dga.degrees() {
        let mut total = 0;
        for c in &g.index.chains {
            let k = c.len() as i32 - 1;
            if g.dga.in_cap(i) {
                total += p.values[c[0]].rank(i - k);
            }
        }
        if total != g.dga.rank(i) {
            hom_dims_match = false;
            notes.push(format!("degree {i} dimensions disagree"));
        }
    }

    Ok(McGlobCertificate {
        single_blocks_match,
        defect_probes_match,
        twisted_blocks_match,
        transitions_unital: unital,
        hom_dims_match,
        notes,
    })
}

fn field_eq<R: Ring>(_ring: &R, a: &R::Elem, b: &R::Elem) -> bool {
    a == b
}

/// Views the complexes under a presheaf of dgas as a presheaf of
/// complexes, forgetting the multiplicative structure.
pub fn dga_presheaf_complexes<R: Ring>(p: &PresheafOfDgas<R>) -> Result<PresheafOfComplexes<R>> {
    let values: Vec<FreeComplex<R>> = p.values.iter().map(|z| z.complex.clone()).collect();
    let mut restrictions = BTreeMap::new();
    for a in 0..p.covering.n() {
        for b in 0..p.covering.n() {
            if !p.covering.less(a, b) {
                continue;
            }
            let mut comp = BTreeMap::new();
            for i in values[b].degrees() {
                comp.insert(i, p.restriction_matrix(a, b, i));
            }
            restrictions.insert((a, b), ChainMap { components: comp });
        }
    }
    PresheafOfComplexes::new(p.covering.clone(), values, restrictions)
}
