//! Simplicial shadows of bounded complexes. The representing complexes
//! D(n) are generated in degree -k by the strictly monotone injections
//! [k] -> [n]; levelwise mapping spaces are cut out by an exact linear
//! system, products come from the coproduct on D(n), and homotopy groups
//! fall out of the unnormalized chain complex of the levels. The affine
//! variant for augmented dg categories pins the augmentation of every
//! vertex to 1 and is solved as an inhomogeneous system.

use std::collections::BTreeMap;

use crate::complexes::{hom_basis, hom_complex, subsets, tensor, tensor_basis, FreeComplex};
use crate::matrix::Matrix;
use crate::ring::RationalField;
use crate::scalar::{rat_int, Rational};

#[derive(Clone, Debug)]
pub struct DnComplex {
    pub n: usize,
    /// `injections[k]` lists the strictly monotone maps `[k] -> [n]` by
    /// their images, in lexicographic order.
    pub injections: Vec<Vec<Vec<usize>>>,
    pub complex: FreeComplex<RationalField>,
}

pub fn build_dn(n: usize) -> DnComplex {
    let field = RationalField;
    let injections: Vec<Vec<Vec<usize>>> = (0..=n).map(|k| subsets(n + 1, k + 1)).collect();
    let mut ranks = BTreeMap::new();
    for (k, inj) in injections.iter().enumerate() {
        ranks.insert(-(k as i32), inj.len());
    }
    let mut complex = FreeComplex::new(field, ranks);
    for k in 1..=n {
        let src = &injections[k];
        let dst = &injections[k - 1];
        let pos: BTreeMap<&Vec<usize>, usize> =
            dst.iter().enumerate().map(|(i, v)| (v, i)).collect();
        let mut d = Matrix::zero(&field, dst.len(), src.len());
        for (col, phi) in src.iter().enumerate() {
            for i in 0..=k {
                let mut face = phi.clone();
                face.remove(i);
                let row = pos[&face];
                let sign = if i % 2 == 0 { rat_int(1) } else { rat_int(-1) };
                let cur = d.get(row, col) + &sign;
                d.set(row, col, cur);
            }
        }
        complex.set_diff(-(k as i32), d).expect("face shapes agree");
    }
    complex.check_complex().expect("faces satisfy the simplicial relations");
    DnComplex { n, injections, complex }
}

/// The coproduct on a generator: all splittings into an initial and a final
/// segment overlapping in one object.
pub fn kappa_terms(phi: &[usize]) -> Vec<(Vec<usize>, Vec<usize>)> {
    (0..phi.len())
        .map(|i| (phi[..=i].to_vec(), phi[i..].to_vec()))
        .collect()
}

/// The boundary of a generator; zero (an empty list) on the vertices.
fn boundary_terms(phi: &[usize]) -> Vec<(Vec<usize>, Rational)> {
    if phi.len() < 2 {
        return Vec::new();
    }
    (0..phi.len())
        .map(|i| {
            let mut face = phi.to_vec();
            face.remove(i);
            (face, if i % 2 == 0 { rat_int(1) } else { rat_int(-1) })
        })
        .collect()
}

/// Exact check that the coproduct is coassociative and a map of complexes.
pub fn kappa_check(n: usize) -> crate::Result<()> {
    let dn = build_dn(n);
    for injs in &dn.injections {
        for phi in injs {
            // Coassociativity: both ways of splitting twice give every
            // double splitting exactly once.
            let mut lhs: BTreeMap<(Vec<usize>, Vec<usize>, Vec<usize>), Rational> =
                BTreeMap::new();
            for (first, second) in kappa_terms(phi) {
                for (a, b) in kappa_terms(&first) {
                    *lhs.entry((a, b, second.clone())).or_insert_with(|| rat_int(0)) +=
                        rat_int(1);
                }
            }
            let mut rhs = BTreeMap::new();
            for (first, second) in kappa_terms(phi) {
                for (b, c) in kappa_terms(&second) {
                    *rhs.entry((first.clone(), b, c)).or_insert_with(|| rat_int(0)) +=
                        rat_int(1);
                }
            }
            if lhs != rhs {
                return Err(crate::Error::Validation(format!(
                    "coproduct is not coassociative on {phi:?}"
                )));
            }
            // Compatibility with the differential.
            let mut lhs: BTreeMap<(Vec<usize>, Vec<usize>), Rational> = BTreeMap::new();
            for (face, sign) in boundary_terms(phi) {
                for (a, b) in kappa_terms(&face) {
                    let slot = lhs.entry((a, b)).or_insert_with(|| rat_int(0));
                    *slot += &sign;
                }
            }
            let mut rhs: BTreeMap<(Vec<usize>, Vec<usize>), Rational> = BTreeMap::new();
            for (a, b) in kappa_terms(phi) {
                for (face, sign) in boundary_terms(&a) {
                    let slot = rhs.entry((face, b.clone())).or_insert_with(|| rat_int(0));
                    *slot += &sign;
                }
                // Koszul sign from moving d past the first factor, which
                // sits in degree -(len - 1).
                let first_sign = if (a.len() - 1) % 2 == 0 { rat_int(1) } else { rat_int(-1) };
                for (face, sign) in boundary_terms(&b) {
                    let slot = rhs.entry((a.clone(), face)).or_insert_with(|| rat_int(0));
                    *slot += &(first_sign.clone() * sign);
                }
            }
            lhs.retain(|_, v| v != &rat_int(0));
            rhs.retain(|_, v| v != &rat_int(0));
            if lhs != rhs {
                return Err(crate::Error::Validation(format!(
                    "coproduct does not commute with the differential on {phi:?}"
                )));
            }
        }
    }
    Ok(())
}

fn is_weakly_monotone(psi: &[usize], max: usize) -> bool {
    psi.windows(2).all(|w| w[0] <= w[1]) && psi.iter().all(|&v| v <= max)
}

fn compose_injection(psi: &[usize], phi: &[usize]) -> Option<Vec<usize>> {
    let out: Vec<usize> = phi.iter().map(|&v| psi[v]).collect();
    if out.windows(2).all(|w| w[0] < w[1]) {
        Some(out)
    } else {
        None
    }
}

/// The map `D(src.n) -> D(tgt.n)` induced by a monotone `psi`, as one
/// matrix per degree: a generator goes to its composition with `psi` when
/// that stays injective, and to zero otherwise.
pub fn induced_matrices(
    src: &DnComplex,
    tgt: &DnComplex,
    psi: &[usize],
) -> crate::Result<BTreeMap<i32, Matrix<RationalField>>> {
    if psi.len() != src.n + 1 || !is_weakly_monotone(psi, tgt.n) {
        return Err(crate::Error::Validation(format!(
            "{psi:?} is not a monotone map into [{}]",
            tgt.n
        )));
    }
    let field = RationalField;
    let empty: Vec<Vec<usize>> = Vec::new();
    let mut out = BTreeMap::new();
    for k in 0..=src.n {
        let cols = &src.injections[k];
        let rows = if k <= tgt.n { &tgt.injections[k] } else { &empty };
        let pos: BTreeMap<&Vec<usize>, usize> =
            rows.iter().enumerate().map(|(i, v)| (v, i)).collect();
        let mut m = Matrix::zero(&field, rows.len(), cols.len());
        for (col, phi) in cols.iter().enumerate() {
            if let Some(joined) = compose_injection(psi, phi) {
                m.set(pos[&joined], col, rat_int(1));
            }
        }
        out.insert(-(k as i32), m);
    }
    Ok(out)
}

/// Coface `[n-1] -> [n]` skipping `j`.
pub fn delta(n: usize, j: usize) -> Vec<usize> {
    (0..=n).filter(|&v| v != j).collect()
}

/// Codegeneracy `[n+1] -> [n]` repeating `j`.
pub fn sigma(n: usize, j: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(n + 2);
    for v in 0..=n {
        out.push(v);
        if v == j {
            out.push(v);
        }
    }
    out
}

/// Matrix of precomposition with the induced map of `psi: [p] -> [q]` on
/// the full mapping spaces, `Hom(D(q), A) -> Hom(D(p), A)`, in the
/// coordinates of [`hom_basis`] at degree zero.
pub fn level_transfer(
    a: &FreeComplex<RationalField>,
    from: &DnComplex,
    to: &DnComplex,
    psi: &[usize],
) -> crate::Result<Matrix<RationalField>> {
    if psi.len() != to.n + 1 || !is_weakly_monotone(psi, from.n) {
        return Err(crate::Error::Validation(format!(
            "{psi:?} is not a monotone map [{}] -> [{}]",
            to.n, from.n
        )));
    }
    let field = RationalField;
    let src_basis = hom_basis(&from.complex, a, 0);
    let dst_basis = hom_basis(&to.complex, a, 0);
    let src_pos: BTreeMap<(i32, usize, usize), usize> =
        src_basis.iter().enumerate().map(|(i, &key)| (key, i)).collect();
    let mut m = Matrix::zero(&field, dst_basis.len(), src_basis.len());
    for (row, &(deg, inj_idx, t)) in dst_basis.iter().enumerate() {
        let k = (-deg) as usize;
        let phi = &to.injections[k][inj_idx];
        if let Some(joined) = compose_injection(psi, phi) {
            let from_idx = from.injections[k]
                .iter()
                .position(|v| v == &joined)
                .expect("composition stays in range");
            if let Some(&col) = src_pos.get(&(deg, from_idx, t)) {
                m.set(row, col, rat_int(1));
            }
        }
    }
    Ok(m)
}

/// One simplicial level of the mapping space: a basis of the space of
/// chain maps `D(n) -> A`, in full mapping space coordinates.
#[derive(Clone, Debug)]
pub struct SimplicialLevel {
    pub n: usize,
    pub basis: Vec<Vec<Rational>>,
}

impl SimplicialLevel {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }
}

pub fn dp_level(a: &FreeComplex<RationalField>, n: usize) -> SimplicialLevel {
    let dn = build_dn(n);
    let hom = hom_complex(&dn.complex, a);
    SimplicialLevel { n, basis: hom.diff(0).kernel_basis(&RationalField) }
}

/// Expresses vectors of the ambient space in the coordinates of a spanning
/// basis, failing if one of them falls outside the span.
fn in_basis_coords(
    basis: &[Vec<Rational>],
    ambient_dim: usize,
    vectors: &[Vec<Rational>],
) -> crate::Result<Matrix<RationalField>> {
    let field = RationalField;
    let bmat = Matrix::from_fn(&field, ambient_dim, basis.len(), |r, c| basis[c][r].clone());
    let mut out = Matrix::zero(&field, basis.len(), vectors.len());
    for (col, v) in vectors.iter().enumerate() {
        let coords = bmat.solve(&field, v).ok_or_else(|| {
            crate::Error::Validation("vector escapes the solution space".into())
        })?;
        for (r, val) in coords.into_iter().enumerate() {
            out.set(r, col, val);
        }
    }
    Ok(out)
}

/// Exact check of the five families of simplicial identities on the full
/// mapping spaces, for all levels up to `max_level`.
pub fn simplicial_identities_check(
    a: &FreeComplex<RationalField>,
    max_level: usize,
) -> crate::Result<()> {
    let dns: Vec<DnComplex> = (0..=max_level + 1).map(build_dn).collect();
    let face = |n: usize, j: usize| -> crate::Result<Matrix<RationalField>> {
        level_transfer(a, &dns[n], &dns[n - 1], &delta(n, j))
    };
    let degen = |n: usize, j: usize| -> crate::Result<Matrix<RationalField>> {
        level_transfer(a, &dns[n], &dns[n + 1], &sigma(n, j))
    };
    let field = RationalField;
    for n in 2..=max_level {
        for j in 0..=n {
            for i in 0..j {
                let lhs = face(n - 1, i)?.mul(&field, &face(n, j)?);
                let rhs = face(n - 1, j - 1)?.mul(&field, &face(n, i)?);
                if lhs != rhs {
                    return Err(crate::Error::Validation(format!(
                        "face-face identity fails at n={n}, i={i}, j={j}"
                    )));
                }
            }
        }
    }
    for n in 0..max_level {
        for j in 0..=n {
            for i in 0..=j {
                let lhs = degen(n + 1, i)?.mul(&field, &degen(n, j)?);
                let rhs = degen(n + 1, j + 1)?.mul(&field, &degen(n, i)?);
                if lhs != rhs {
                    return Err(crate::Error::Validation(format!(
                        "degeneracy-degeneracy identity fails at n={n}, i={i}, j={j}"
                    )));
                }
            }
        }
    }
    for n in 0..max_level {
        for j in 0..=n {
            for i in 0..=n + 1 {
                let lhs = face(n + 1, i)?.mul(&field, &degen(n, j)?);
                let rhs = if i < j {
                    degen(n - 1, j - 1)?.mul(&field, &face(n, i)?)
                } else if i == j || i == j + 1 {
                    Matrix::identity(&field, lhs.cols)
                } else {
                    degen(n - 1, j)?.mul(&field, &face(n, i - 1)?)
                };
                if lhs != rhs {
                    return Err(crate::Error::Validation(format!(
                        "face-degeneracy identity fails at n={n}, i={i}, j={j}"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Homotopy group dimensions from the unnormalized chain complex of the
/// levelwise solution spaces.
pub fn dp_homotopy_groups(
    a: &FreeComplex<RationalField>,
    n_max: usize,
) -> crate::Result<BTreeMap<usize, usize>> {
    let field = RationalField;
    let truncated = a.tau_le0();
    let dns: Vec<DnComplex> = (0..=n_max + 1).map(build_dn).collect();
    let levels: Vec<SimplicialLevel> =
        (0..=n_max + 1).map(|n| dp_level(&truncated, n)).collect();
    let mut ranks = BTreeMap::new();
    for (n, level) in levels.iter().enumerate() {
        if level.dim() > 0 {
            ranks.insert(-(n as i32), level.dim());
        }
    }
    let mut moore = FreeComplex::new(field, ranks);
    for n in 1..=n_max + 1 {
        if levels[n].dim() == 0 || levels[n - 1].dim() == 0 {
            continue;
        }
        let hom_dim = hom_basis(&dns[n - 1].complex, &truncated, 0).len();
        let mut boundary = Matrix::zero(&field, hom_dim, levels[n].basis[0].len());
        for j in 0..=n {
            let f = level_transfer(&truncated, &dns[n], &dns[n - 1], &delta(n, j))?;
            boundary = if j % 2 == 0 {
                boundary.add(&field, &f)
            } else {
                boundary.sub(&field, &f)
            };
        }
        let images: Vec<Vec<Rational>> = levels[n]
            .basis
            .iter()
            .map(|v| boundary.apply(&field, v))
            .collect();
        let d = in_basis_coords(&levels[n - 1].basis, hom_dim, &images)?;
        moore.set_diff(-(n as i32), d)?;
    }
    let homology = moore.homology_ranks();
    let mut out = BTreeMap::new();
    for n in 0..=n_max {
        out.insert(n, homology.get(&-(n as i32)).copied().unwrap_or(0));
    }
    Ok(out)
}

/// Pointwise product of level elements through the coproduct: the value on
/// an injection is the sum over splittings of the tensor of the two values
/// on the initial and final segments.
pub fn dp_product_element(
    a: &FreeComplex<RationalField>,
    b: &FreeComplex<RationalField>,
    n: usize,
    x: &[Rational],
    y: &[Rational],
) -> Vec<Rational> {
    let dn = build_dn(n);
    let ab = tensor(a, b);
    let x_pos: BTreeMap<(i32, usize, usize), usize> = hom_basis(&dn.complex, a, 0)
        .iter()
        .enumerate()
        .map(|(i, &key)| (key, i))
        .collect();
    let y_pos: BTreeMap<(i32, usize, usize), usize> = hom_basis(&dn.complex, b, 0)
        .iter()
        .enumerate()
        .map(|(i, &key)| (key, i))
        .collect();
    let target = hom_basis(&dn.complex, &ab, 0);
    let mut out = vec![rat_int(0); target.len()];
    for (slot, &(deg, inj_idx, t)) in target.iter().enumerate() {
        let k = (-deg) as usize;
        let phi = &dn.injections[k][inj_idx];
        let (i_deg, a_idx, b_idx) = tensor_basis(a, b, deg)[t];
        let i = (-i_deg) as usize;
        if i > k {
            continue;
        }
        let first = phi[..=i].to_vec();
        let second = phi[i..].to_vec();
        let first_idx = dn.injections[i].iter().position(|v| v == &first).expect("prefix");
        let second_idx =
            dn.injections[k - i].iter().position(|v| v == &second).expect("suffix");
        let (Some(&xp), Some(&yp)) = (
            x_pos.get(&(-(i as i32), first_idx, a_idx)),
            y_pos.get(&(-((k - i) as i32), second_idx, b_idx)),
        ) else {
            continue;
        };
        out[slot] = &x[xp] * &y[yp];
    }
    out
}

/// The canonical level element of the unit complex: value 1 on every
/// vertex.
pub fn dp_unit_element(n: usize) -> Vec<Rational> {
    let dn = build_dn(n);
    let unit = FreeComplex::unit(RationalField);
    hom_basis(&dn.complex, &unit, 0)
        .iter()
        .map(|&(deg, _, _)| if deg == 0 { rat_int(1) } else { rat_int(0) })
        .collect()
}

/// A differential graded category with finitely many objects and finite
/// free hom complexes. Compositions are stored per object triple and
/// bidegree, with the column index running over pairs (first factor, then
/// second) in row-major order.
#[derive(Clone, Debug)]
pub struct Dgc {
    pub objects: usize,
    pub homs: BTreeMap<(usize, usize), FreeComplex<RationalField>>,
    pub compositions: BTreeMap<(usize, usize, usize), BTreeMap<(i32, i32), Matrix<RationalField>>>,
    pub identities: BTreeMap<usize, Vec<Rational>>,
}

/// A dg category augmented toward the base field: one functional on every
/// degree zero hom space, multiplicative and vanishing on boundaries.
#[derive(Clone, Debug)]
pub struct AugmentedDgc {
    pub dgc: Dgc,
    pub augmentations: BTreeMap<(usize, usize), Vec<Rational>>,
}

impl Dgc {
    pub fn hom(&self, x: usize, y: usize) -> &FreeComplex<RationalField> {
        self.homs.get(&(x, y)).expect("hom complex present for every pair")
    }

    pub fn composition(
        &self,
        x: usize,
        y: usize,
        z: usize,
        p: i32,
        q: i32,
    ) -> Matrix<RationalField> {
        let rows = self.hom(x, z).rank(p + q);
        let cols = self.hom(x, y).rank(p) * self.hom(y, z).rank(q);
        match self.compositions.get(&(x, y, z)).and_then(|m| m.get(&(p, q))) {
            Some(m) => m.clone(),
            None => Matrix::zero(&RationalField, rows, cols),
        }
    }

    /// Composes `u` in degree `p` of `hom(x, y)` with `v` in degree `q` of
    /// `hom(y, z)`.
    pub fn compose_elements(
        &self,
        (x, y, z): (usize, usize, usize),
        p: i32,
        u: &[Rational],
        q: i32,
        v: &[Rational],
    ) -> Vec<Rational> {
        let m = self.composition(x, y, z, p, q);
        let dim_q = self.hom(y, z).rank(q);
        let mut pair = vec![rat_int(0); u.len() * v.len()];
        for (i, a) in u.iter().enumerate() {
            for (j, b) in v.iter().enumerate() {
                pair[i * dim_q + j] = a * b;
            }
        }
        m.apply(&RationalField, &pair)
    }

    pub fn identity_of(&self, x: usize) -> &[Rational] {
        self.identities.get(&x).expect("identity present for every object")
    }

    pub fn validate(&self) -> crate::Result<()> {
        let field = RationalField;
        for x in 0..self.objects {
            for y in 0..self.objects {
                let hom = self
                    .homs
                    .get(&(x, y))
                    .ok_or_else(|| crate::Error::Validation(format!("missing hom({x}, {y})")))?;
                hom.check_complex()?;
            }
        }
        for x in 0..self.objects {
            if !self.identities.contains_key(&x) {
                return Err(crate::Error::Validation(format!("missing identity of {x}")));
            }
            let one = self.identity_of(x);
            let hom = self.hom(x, x);
            if one.len() != hom.rank(0) {
                return Err(crate::Error::Shape(format!("identity of {x} has wrong length")));
            }
            let closed = hom.diff(0).apply(&field, one);
            if closed.iter().any(|c| c != &rat_int(0)) {
                return Err(crate::Error::Validation(format!("identity of {x} is not closed")));
            }
        }
        // Unitality on basis elements.
        for (&(x, y), hom) in &self.homs {
            for q in hom.degrees() {
                for b in 0..hom.rank(q) {
                    let mut e = vec![rat_int(0); hom.rank(q)];
                    e[b] = rat_int(1);
                    let left =
                        self.compose_elements((x, x, y), 0, self.identity_of(x), q, &e);
                    let right =
                        self.compose_elements((x, y, y), q, &e, 0, self.identity_of(y));
                    if left != e || right != e {
                        return Err(crate::Error::Validation(format!(
                            "composition with the identity is not the identity on hom({x}, {y}) degree {q}"
                        )));
                    }
                }
            }
        }
        // Leibniz rule, as an identity of matrices per bidegree.
        for x in 0..self.objects {
            for y in 0..self.objects {
                for z in 0..self.objects {
                    let hxy = self.hom(x, y);
                    let hyz = self.hom(y, z);
                    let hxz = self.hom(x, z);
                    for p in hxy.degrees() {
                        for q in hyz.degrees() {
                            let lhs = hxz
                                .diff(p + q)
                                .mul(&field, &self.composition(x, y, z, p, q));
                            let first = self
                                .composition(x, y, z, p + 1, q)
                                .mul(&field, &left_factor(&hxy.diff(p), hyz.rank(q)));
                            let second = self
                                .composition(x, y, z, p, q + 1)
                                .mul(&field, &right_factor(hxy.rank(p), &hyz.diff(q)));
                            let second =
                                if p.rem_euclid(2) == 1 { second.neg(&field) } else { second };
                            if lhs != first.add(&field, &second) {
                                return Err(crate::Error::Validation(format!(
                                    "Leibniz fails for ({x}, {y}, {z}) at bidegree ({p}, {q})"
                                )));
                            }
                        }
                    }
                }
            }
        }
        // Associativity per object quadruple and tridegree.
        for x in 0..self.objects {
            for y in 0..self.objects {
                for z in 0..self.objects {
                    for w in 0..self.objects {
                        let hxy = self.hom(x, y);
                        let hyz = self.hom(y, z);
                        let hzw = self.hom(z, w);
                        for p in hxy.degrees() {
                            for q in hyz.degrees() {
                                for r in hzw.degrees() {
                                    let lhs = self.composition(x, z, w, p + q, r).mul(
                                        &field,
                                        &left_factor(
                                            &self.composition(x, y, z, p, q),
                                            hzw.rank(r),
                                        ),
                                    );
                                    let rhs = self.composition(x, y, w, p, q + r).mul(
                                        &field,
                                        &right_factor(
                                            hxy.rank(p),
                                            &self.composition(y, z, w, q, r),
                                        ),
                                    );
                                    if lhs != rhs {
                                        return Err(crate::Error::Validation(format!(
                                            "associativity fails for ({x}, {y}, {z}, {w}) at ({p}, {q}, {r})"
                                        )));
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Matrix of `d (x) 1` on pair coordinates in row-major order.
fn left_factor(d: &Matrix<RationalField>, dim_right: usize) -> Matrix<RationalField> {
    let field = RationalField;
    let mut out = Matrix::zero(&field, d.rows * dim_right, d.cols * dim_right);
    for i in 0..d.rows {
        for j in 0..d.cols {
            let v = d.get(i, j);
            if v != &rat_int(0) {
                for t in 0..dim_right {
                    out.set(i * dim_right + t, j * dim_right + t, v.clone());
                }
            }
        }
    }
    out
}

/// Matrix of `1 (x) d` on pair coordinates in row-major order.
fn right_factor(dim_left: usize, d: &Matrix<RationalField>) -> Matrix<RationalField> {
    let field = RationalField;
    let mut out = Matrix::zero(&field, dim_left * d.rows, dim_left * d.cols);
    for s in 0..dim_left {
        for i in 0..d.rows {
            for j in 0..d.cols {
                let v = d.get(i, j);
                if v != &rat_int(0) {
                    out.set(s * d.rows + i, s * d.cols + j, v.clone());
                }
            }
        }
    }
    out
}

impl AugmentedDgc {
    pub fn validate(&self) -> crate::Result<()> {
        self.dgc.validate()?;
        for x in 0..self.dgc.objects {
            for y in 0..self.dgc.objects {
                let hom = self.dgc.hom(x, y);
                let eps = self
                    .augmentations
                    .get(&(x, y))
                    .ok_or_else(|| crate::Error::Validation(format!("missing augmentation on ({x}, {y})")))?;
                if eps.len() != hom.rank(0) {
                    return Err(crate::Error::Shape(format!(
                        "augmentation on ({x}, {y}) has wrong length"
                    )));
                }
                // Vanishing on boundaries from degree -1.
                let d = hom.diff(-1);
                for col in 0..d.cols {
                    let mut pairing = rat_int(0);
                    for row in 0..d.rows {
                        pairing += &eps[row] * d.get(row, col);
                    }
                    if pairing != rat_int(0) {
                        return Err(crate::Error::Validation(format!(
                            "augmentation on ({x}, {y}) does not kill boundaries"
                        )));
                    }
                }
            }
        }
        for x in 0..self.dgc.objects {
            let eps = &self.augmentations[&(x, x)];
            let one = self.dgc.identity_of(x);
            let val = eps
                .iter()
                .zip(one)
                .fold(rat_int(0), |acc, (a, b)| acc + a * b);
            if val != rat_int(1) {
                return Err(crate::Error::Validation(format!(
                    "augmentation of the identity of {x} is not 1"
                )));
            }
        }
        // Multiplicativity on degree zero basis pairs.
        for x in 0..self.dgc.objects {
            for y in 0..self.dgc.objects {
                for z in 0..self.dgc.objects {
                    let rank_p = self.dgc.hom(x, y).rank(0);
                    let rank_q = self.dgc.hom(y, z).rank(0);
                    let eps_xy = &self.augmentations[&(x, y)];
                    let eps_yz = &self.augmentations[&(y, z)];
                    let eps_xz = &self.augmentations[&(x, z)];
                    for a in 0..rank_p {
                        for b in 0..rank_q {
                            let mut u = vec![rat_int(0); rank_p];
                            u[a] = rat_int(1);
                            let mut v = vec![rat_int(0); rank_q];
                            v[b] = rat_int(1);
                            let uv = self.dgc.compose_elements((x, y, z), 0, &u, 0, &v);
                            let lhs = eps_xz
                                .iter()
                                .zip(&uv)
                                .fold(rat_int(0), |acc, (e, c)| acc + e * c);
                            let rhs = &eps_xy[a] * &eps_yz[b];
                            if lhs != rhs {
                                return Err(crate::Error::Validation(format!(
                                    "augmentation is not multiplicative on ({x}, {y}, {z})"
                                )));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// A dg functor presented by its object map and one matrix per hom degree.
#[derive(Clone, Debug)]
pub struct DgcFunctor {
    pub obj_map: Vec<usize>,
    pub maps: BTreeMap<(usize, usize), BTreeMap<i32, Matrix<RationalField>>>,
}

impl DgcFunctor {
    pub fn map_at(&self, src: &Dgc, tgt: &Dgc, x: usize, y: usize, i: i32) -> Matrix<RationalField> {
        let rows = tgt.hom(self.obj_map[x], self.obj_map[y]).rank(i);
        let cols = src.hom(x, y).rank(i);
        match self.maps.get(&(x, y)).and_then(|m| m.get(&i)) {
            Some(m) => m.clone(),
            None => Matrix::zero(&RationalField, rows, cols),
        }
    }

    pub fn validate(&self, src: &Dgc, tgt: &Dgc) -> crate::Result<()> {
        let field = RationalField;
        if self.obj_map.len() != src.objects {
            return Err(crate::Error::Shape("object map has wrong length".into()));
        }
        for x in 0..src.objects {
            for y in 0..src.objects {
                let fx = self.obj_map[x];
                let fy = self.obj_map[y];
                let s = src.hom(x, y);
                let t = tgt.hom(fx, fy);
                for i in s.degrees() {
                    let lhs = t.diff(i).mul(&field, &self.map_at(src, tgt, x, y, i));
                    let rhs = self.map_at(src, tgt, x, y, i + 1).mul(&field, &s.diff(i));
                    if lhs != rhs {
                        return Err(crate::Error::Validation(format!(
                            "functor does not commute with d on hom({x}, {y}) at degree {i}"
                        )));
                    }
                }
                // Composition preservation per bidegree.
                for z in 0..src.objects {
                    let fz = self.obj_map[z];
                    for p in src.hom(x, y).degrees() {
                        for q in src.hom(y, z).degrees() {
                            let lhs = self
                                .map_at(src, tgt, x, z, p + q)
                                .mul(&field, &src.composition(x, y, z, p, q));
                            let pair = pair_map(
                                &self.map_at(src, tgt, x, y, p),
                                &self.map_at(src, tgt, y, z, q),
                            );
                            let rhs =
                                tgt.composition(fx, fy, fz, p, q).mul(&field, &pair);
                            if lhs != rhs {
                                return Err(crate::Error::Validation(format!(
                                    "functor breaks composition on ({x}, {y}, {z}) at ({p}, {q})"
                                )));
                            }
                        }
                    }
                }
            }
        }
        for x in 0..src.objects {
            let image = self
                .map_at(src, tgt, x, x, 0)
                .apply(&field, src.identity_of(x));
            if image != tgt.identity_of(self.obj_map[x]) {
                return Err(crate::Error::Validation(format!(
                    "functor does not preserve the identity of {x}"
                )));
            }
        }
        Ok(())
    }

    /// Degreewise surjectivity of the hom maps, the fibrancy condition the
    /// fiber construction relies on.
    pub fn check_surjective(&self, src: &Dgc, tgt: &Dgc) -> crate::Result<()> {
        let field = RationalField;
        for x in 0..src.objects {
            for y in 0..src.objects {
                let t = tgt.hom(self.obj_map[x], self.obj_map[y]);
                for i in t.degrees() {
                    let m = self.map_at(src, tgt, x, y, i);
                    if m.rank(&field) != t.rank(i) {
                        return Err(crate::Error::Validation(format!(
                            "hom map on ({x}, {y}) is not surjective in degree {i}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Matrix of `f (x) g` on pair coordinates in row-major order.
fn pair_map(f: &Matrix<RationalField>, g: &Matrix<RationalField>) -> Matrix<RationalField> {
    let field = RationalField;
    let mut out = Matrix::zero(&field, f.rows * g.rows, f.cols * g.cols);
    for i in 0..f.rows {
        for j in 0..f.cols {
            let a = f.get(i, j);
            if a == &rat_int(0) {
                continue;
            }
            for s in 0..g.rows {
                for t in 0..g.cols {
                    let b = g.get(s, t);
                    if b != &rat_int(0) {
                        out.set(i * g.rows + s, j * g.cols + t, a * b);
                    }
                }
            }
        }
    }
    out
}

/// The strict fiber of a fibrant dg functor over an object of the target,
/// as an augmented dg category, together with the embedding of each fiber
/// hom basis into the source hom spaces.
#[derive(Clone, Debug)]
pub struct FiberDgc {
    pub augmented: AugmentedDgc,
    /// Source objects lying over the base object, in order.
    pub objects: Vec<usize>,
    /// For each fiber pair and degree, the basis vectors in source hom
    /// coordinates.
    pub embeddings: BTreeMap<(usize, usize), BTreeMap<i32, Vec<Vec<Rational>>>>,
}

pub fn dgc_fiber(
    f: &DgcFunctor,
    src: &Dgc,
    tgt: &Dgc,
    b: usize,
) -> crate::Result<FiberDgc> {
    let field = RationalField;
    f.check_surjective(src, tgt)?;
    let objects: Vec<usize> =
        (0..src.objects).filter(|&x| f.obj_map[x] == b).collect();
    let one_b = tgt.identity_of(b).to_vec();
    let mut homs = BTreeMap::new();
    let mut embeddings = BTreeMap::new();
    let mut augmentations = BTreeMap::new();
    for (xi, &x) in objects.iter().enumerate() {
        for (yi, &y) in objects.iter().enumerate() {
            let hom = src.hom(x, y);
            let mut bases: BTreeMap<i32, Vec<Vec<Rational>>> = BTreeMap::new();
            let mut eps = Vec::new();
            for i in hom.degrees() {
                let m = f.map_at(src, tgt, x, y, i);
                if i != 0 {
                    let kernel = m.kernel_basis(&field);
                    if !kernel.is_empty() {
                        bases.insert(i, kernel);
                    }
                } else {
                    // Solutions of f(v) = t * 1_b, tracked with their t.
                    let mut aug = Matrix::zero(&field, m.rows, m.cols + 1);
                    aug.set_block(0, 0, &m);
                    for (r, val) in one_b.iter().enumerate() {
                        aug.set(r, m.cols, -val.clone());
                    }
                    let kernel = aug.kernel_basis(&field);
                    let mut vecs = Vec::new();
                    for k in kernel {
                        let (v, t) = k.split_at(m.cols);
                        vecs.push(v.to_vec());
                        eps.push(t[0].clone());
                    }
                    if !vecs.is_empty() {
                        bases.insert(0, vecs);
                    }
                }
            }
            let ranks: BTreeMap<i32, usize> =
                bases.iter().map(|(&i, v)| (i, v.len())).collect();
            let mut fiber_hom = FreeComplex::new(field, ranks);
            for (&i, basis) in &bases {
                let next = match bases.get(&(i + 1)) {
                    Some(n) => n,
                    None => {
                        // d must vanish out of this degree; verify.
                        for v in basis {
                            let image = hom.diff(i).apply(&field, v);
                            if image.iter().any(|c| c != &rat_int(0)) {
                                return Err(crate::Error::Validation(
                                    "fiber is not a subcomplex".into(),
                                ));
                            }
                        }
                        continue;
                    }
                };
                let images: Vec<Vec<Rational>> =
                    basis.iter().map(|v| hom.diff(i).apply(&field, v)).collect();
                let d = in_basis_coords(next, hom.rank(i + 1), &images)?;
                fiber_hom.set_diff(i, d)?;
            }
            homs.insert((xi, yi), fiber_hom);
            augmentations.insert((xi, yi), eps);
            embeddings.insert((xi, yi), bases);
        }
    }
    // Identities and compositions, expressed in the fiber bases.
    let mut identities = BTreeMap::new();
    for (xi, &x) in objects.iter().enumerate() {
        let basis = embeddings[&(xi, xi)].get(&0).cloned().unwrap_or_default();
        let coords = in_basis_coords(
            &basis,
            src.hom(x, x).rank(0),
            &[src.identity_of(x).to_vec()],
        )?;
        identities.insert(xi, (0..coords.rows).map(|r| coords.get(r, 0).clone()).collect());
    }
    let mut compositions = BTreeMap::new();
    for (xi, &x) in objects.iter().enumerate() {
        for (yi, &y) in objects.iter().enumerate() {
            for (zi, &z) in objects.iter().enumerate() {
                let mut per_bidegree = BTreeMap::new();
                let empty = BTreeMap::new();
                let xy = embeddings.get(&(xi, yi)).unwrap_or(&empty);
                let yz = embeddings.get(&(yi, zi)).unwrap_or(&empty);
                let xz = embeddings.get(&(xi, zi)).unwrap_or(&empty);
                for (&p, basis_p) in xy {
                    for (&q, basis_q) in yz {
                        let target = xz.get(&(p + q)).cloned().unwrap_or_default();
                        let mut images = Vec::new();
                        for u in basis_p {
                            for v in basis_q {
                                images.push(src.compose_elements((x, y, z), p, u, q, v));
                            }
                        }
                        let m = in_basis_coords(&target, src.hom(x, z).rank(p + q), &images)
                            .map_err(|_| {
                                crate::Error::Validation(
                                    "fiber is not closed under composition".into(),
                                )
                            })?;
                        if !m.is_zero(&field) {
                            per_bidegree.insert((p, q), m);
                        }
                    }
                }
                if !per_bidegree.is_empty() {
                    compositions.insert((xi, yi, zi), per_bidegree);
                }
            }
        }
    }
    let dgc = Dgc { objects: objects.len(), homs, compositions, identities };
    Ok(FiberDgc { augmented: AugmentedDgc { dgc, augmentations }, objects, embeddings })
}

/// One level of the affine construction: the solutions of the chain map
/// system whose augmentation is 1 on every vertex. An affine subspace,
/// returned as one particular solution plus a basis of the homogeneous
/// part; `particular` is `None` when the constraints are inconsistent.
#[derive(Clone, Debug)]
pub struct AffineDpLevel {
    pub n: usize,
    pub particular: Option<Vec<Rational>>,
    pub homogeneous: Vec<Vec<Rational>>,
}

pub fn affine_dp_level(
    aug: &AugmentedDgc,
    x: usize,
    y: usize,
    n: usize,
) -> crate::Result<AffineDpLevel> {
    let field = RationalField;
    let hom = aug.dgc.hom(x, y);
    let eps = &aug.augmentations[&(x, y)];
    let dn = build_dn(n);
    let hc = hom_complex(&dn.complex, hom);
    let d0 = hc.diff(0);
    let basis = hom_basis(&dn.complex, hom, 0);
    // Stack the closedness rows with one augmentation row per vertex.
    let vertices = dn.injections[0].len();
    let mut system = Matrix::zero(&field, d0.rows + vertices, basis.len());
    system.set_block(0, 0, &d0);
    for v in 0..vertices {
        for (col, &(deg, inj_idx, t)) in basis.iter().enumerate() {
            if deg == 0 && inj_idx == v {
                system.set(d0.rows + v, col, eps[t].clone());
            }
        }
    }
    let mut rhs = vec![rat_int(0); d0.rows + vertices];
    for slot in rhs.iter_mut().skip(d0.rows) {
        *slot = rat_int(1);
    }
    let particular = system.solve(&field, &rhs);
    let homogeneous = system.kernel_basis(&field);
    Ok(AffineDpLevel { n, particular, homogeneous })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn face_and_degeneracy_words() {
        assert_eq!(delta(2, 1), vec![0, 2]);
        assert_eq!(sigma(2, 0), vec![0, 0, 1, 2]);
        assert_eq!(kappa_terms(&[0, 2]), vec![(vec![0], vec![0, 2]), (vec![0, 2], vec![2])]);
    }

    #[test]
    fn dn_ranks_match_binomials() {
        for n in 0..=4usize {
            let dn = build_dn(n);
            for k in 0..=n {
                let expected = dn.injections[k].len();
                assert_eq!(dn.complex.rank(-(k as i32)), expected);
            }
        }
    }
}
