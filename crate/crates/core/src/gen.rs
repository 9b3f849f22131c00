//! Deterministic instance generators. Everything is driven by a seeded
//! ChaCha stream so that reports and test corpora are reproducible
//! byte-for-byte from a seed.

use crate::algebra::{AlgebraElement, DExp, FilteredPBWAlgebra, Mode};
use crate::complexes::{ChainMap, ConnectionComplex, FreeComplex, Homotopy};
use crate::matrix::Matrix;
use crate::poly::Poly;
use crate::ring::{PolyRing, RationalField};
use crate::scalar::{rat, Rational};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_small_rational<R: Rng>(rng: &mut R, bound: u32) -> Rational {
    let b = bound.max(1) as i64;
    rat(rng.gen_range(-b..=b), rng.gen_range(1..=b))
}

pub fn random_nonzero_small_rational<R: Rng>(rng: &mut R, bound: u32) -> Rational {
    loop {
        let r = random_small_rational(rng, bound);
        if !num::Zero::is_zero(&r) {
            return r;
        }
    }
}

/// Random polynomial in the first `base_vars` variables, optionally using l.
pub fn random_poly<R: Rng>(
    rng: &mut R,
    base_vars: usize,
    max_deg: u32,
    with_lambda: bool,
    max_terms: usize,
) -> Poly {
    let mut out = Poly::zero();
    let terms = rng.gen_range(0..=max_terms);
    for _ in 0..terms {
        let mut mono = Poly::constant(random_small_rational(rng, 3));
        let mut budget = max_deg;
        for v in 0..base_vars {
            if budget == 0 {
                break;
            }
            let e = rng.gen_range(0..=budget.min(2));
            for _ in 0..e {
                mono = mono.mul(&Poly::var(v));
            }
            budget -= e;
        }
        if with_lambda && budget > 0 && rng.gen_bool(0.4) {
            let e = rng.gen_range(1..=budget.min(2));
            for _ in 0..e {
                mono = mono.mul(&Poly::lambda());
            }
        }
        out = out.add(&mono);
    }
    out
}

pub fn random_dexp<R: Rng>(rng: &mut R, gens: usize, max_level: u32) -> DExp {
    let mut v = vec![0u32; gens];
    let mut budget = max_level;
    for slot in v.iter_mut() {
        if budget == 0 {
            break;
        }
        let e = rng.gen_range(0..=budget);
        *slot = e;
        budget -= e;
    }
    DExp::from_vec(v)
}

pub fn random_algebra_element<R: Rng>(
    rng: &mut R,
    algebra: &FilteredPBWAlgebra,
    max_level: u32,
    max_deg: u32,
    max_terms: usize,
) -> AlgebraElement {
    let with_lambda = algebra.mode == Mode::Rees;
    let mut out = AlgebraElement::zero();
    let terms = rng.gen_range(1..=max_terms.max(1));
    for _ in 0..terms {
        let alpha = random_dexp(rng, algebra.gens, max_level);
        let coeff = random_poly(rng, algebra.base_vars, max_deg, with_lambda, 2);
        out.add_term(alpha, coeff);
    }
    out
}

/// Random invertible rational matrix built from shear and sign operations,
/// together with its inverse.
pub fn random_invertible<R: Rng>(
    rng: &mut R,
    n: usize,
) -> (Matrix<RationalField>, Matrix<RationalField>) {
    let f = RationalField;
    let mut p = Matrix::identity(&f, n);
    if n == 0 {
        return (p.clone(), p);
    }
    for _ in 0..2 * n {
        let i = rng.gen_range(0..n);
        let mut j = rng.gen_range(0..n);
        if n > 1 {
            while j == i {
                j = rng.gen_range(0..n);
            }
            // Add a small multiple of row i to row j.
            let c = random_small_rational(rng, 2);
            let mut e = Matrix::identity(&f, n);
            e.set(j, i, c);
            p = e.mul(&f, &p);
        } else if rng.gen_bool(0.5) {
            p = p.neg(&f);
        }
    }
    let inv = p.inverse(&f).expect("product of elementary matrices");
    (p, inv)
}

/// A rational complex with known homology: a direct sum of one-term pieces
/// and contractible two-term pieces, conjugated degreewise by random
/// invertible matrices so the block structure is hidden.
#[derive(Clone, Debug)]
pub struct KnownHomology {
    pub complex: FreeComplex<RationalField>,
    pub homology: BTreeMap<i32, usize>,
}

fn interval_layout(
    lo: i32,
    hi: i32,
    dots: &BTreeMap<i32, usize>,
    starts: &BTreeMap<i32, usize>,
) -> (BTreeMap<i32, usize>, FreeComplex<RationalField>) {
    let f = RationalField;
    let at = |m: &BTreeMap<i32, usize>, i: i32| m.get(&i).copied().unwrap_or(0);
    let mut ranks = BTreeMap::new();
    for i in lo..=hi {
        let r = at(dots, i) + at(starts, i) + at(starts, i - 1);
        if r > 0 {
            ranks.insert(i, r);
        }
    }
    let mut complex = FreeComplex::new(f, ranks.clone());
    for i in lo..hi {
        let rows = complex.rank(i + 1);
        let cols = complex.rank(i);
        if rows == 0 || cols == 0 {
            continue;
        }
        let mut d = Matrix::zero(&f, rows, cols);
        // The start block of degree i maps identically onto the end block
        // of degree i + 1.
        let col0 = at(dots, i);
        let row0 = at(dots, i + 1) + at(starts, i + 1);
        for k in 0..at(starts, i) {
            d.set(row0 + k, col0 + k, crate::scalar::rat_int(1));
        }
        complex.set_diff(i, d).expect("layout shapes agree");
    }
    (ranks, complex)
}

pub fn random_known_complex<R: Rng>(
    rng: &mut R,
    lo: i32,
    hi: i32,
    max_dots: usize,
    max_intervals: usize,
) -> KnownHomology {
    let f = RationalField;
    let mut dots = BTreeMap::new();
    let mut starts = BTreeMap::new();
    for i in lo..=hi {
        dots.insert(i, rng.gen_range(0..=max_dots));
        if i < hi {
            starts.insert(i, rng.gen_range(0..=max_intervals));
        }
    }
    let (ranks, plain) = interval_layout(lo, hi, &dots, &starts);
    let mut ps = BTreeMap::new();
    for (&i, &r) in &ranks {
        ps.insert(i, random_invertible(rng, r));
    }
    let mut complex = FreeComplex::new(f, ranks.clone());
    for i in lo..hi {
        if complex.rank(i) == 0 || complex.rank(i + 1) == 0 {
            continue;
        }
        let d = plain.diff(i);
        let p_next = &ps[&(i + 1)].0;
        let p_inv = &ps[&i].1;
        complex
            .set_diff(i, p_next.mul(&f, &d).mul(&f, p_inv))
            .expect("conjugation keeps shapes");
    }
    let homology = dots.into_iter().filter(|&(_, n)| n > 0).collect();
    KnownHomology { complex, homology }
}

/// A pair of complexes joined by an explicit homotopy equivalence: `big` is
/// `small` plus contractible pieces, conjugated on both sides. `proj` and
/// `incl` are quasi-isomorphisms, `incl o proj - 1 = d K + K d` on `big`,
/// and `proj o incl = 1` on `small`.
#[derive(Clone, Debug)]
pub struct QisPair {
    pub big: FreeComplex<RationalField>,
    pub small: FreeComplex<RationalField>,
    pub proj: ChainMap<RationalField>,
    pub incl: ChainMap<RationalField>,
    pub homotopy: Homotopy<RationalField>,
}

pub fn random_qis_pair<R: Rng>(
    rng: &mut R,
    lo: i32,
    hi: i32,
    max_dots: usize,
    max_intervals: usize,
    max_extra: usize,
) -> QisPair {
    let f = RationalField;
    let small_plain = random_known_complex(rng, lo, hi, max_dots, max_intervals);
    // Keep the small side unconjugated twice: rebuild from its own data.
    let small = small_plain.complex;
    let mut extra = BTreeMap::new();
    for i in lo..hi {
        extra.insert(i, rng.gen_range(0..=max_extra));
    }
    let at = |m: &BTreeMap<i32, usize>, i: i32| m.get(&i).copied().unwrap_or(0);
    let mut big_ranks = BTreeMap::new();
    for i in lo..=hi {
        let r = small.rank(i) + at(&extra, i) + at(&extra, i - 1);
        if r > 0 {
            big_ranks.insert(i, r);
        }
    }
    // Unconjugated big: small block first, then extra starts, then ends.
    let mut big_plain = FreeComplex::new(f, big_ranks.clone());
    let mut proj_plain = BTreeMap::new();
    let mut incl_plain = BTreeMap::new();
    let mut k_plain: BTreeMap<i32, Matrix<RationalField>> = BTreeMap::new();
    for i in lo..=hi {
        let rb = big_plain.rank(i);
        let rs = small.rank(i);
        if rb == 0 {
            continue;
        }
        if i < hi && big_plain.rank(i + 1) > 0 {
            let mut d = Matrix::zero(&f, big_plain.rank(i + 1), rb);
            d.set_block(0, 0, &small.diff(i));
            let row0 = small.rank(i + 1) + at(&extra, i + 1);
            for k in 0..at(&extra, i) {
                d.set(row0 + k, rs + k, crate::scalar::rat_int(1));
            }
            big_plain.set_diff(i, d).expect("big layout shapes agree");
        }
        if rs > 0 {
            let mut p = Matrix::zero(&f, rs, rb);
            p.set_block(0, 0, &Matrix::identity(&f, rs));
            proj_plain.insert(i, p);
            let mut inc = Matrix::zero(&f, rb, rs);
            inc.set_block(0, 0, &Matrix::identity(&f, rs));
            incl_plain.insert(i, inc);
        }
        // Contract the extra intervals: send an end at degree i to minus
        // its start at degree i - 1.
        if at(&extra, i - 1) > 0 && big_plain.rank(i - 1) > 0 {
            let mut k = Matrix::zero(&f, big_plain.rank(i - 1), rb);
            let col0 = rs + at(&extra, i);
            let row0 = small.rank(i - 1);
            for t in 0..at(&extra, i - 1) {
                k.set(row0 + t, col0 + t, crate::scalar::rat_int(-1));
            }
            k_plain.insert(i, k);
        }
    }
    // Conjugate the big side only; the small side stays as produced.
    let mut qs = BTreeMap::new();
    for (&i, &r) in &big_ranks {
        qs.insert(i, random_invertible(rng, r));
    }
    let mut big = FreeComplex::new(f, big_ranks.clone());
    let mut proj = ChainMap::new();
    let mut incl = ChainMap::new();
    let mut homotopy = Homotopy::new();
    for &i in big_ranks.keys() {
        if big.rank(i + 1) > 0 && big.rank(i) > 0 {
            let d = big_plain.diff(i);
            big.set_diff(i, qs[&(i + 1)].0.mul(&f, &d).mul(&f, &qs[&i].1))
                .expect("conjugation keeps shapes");
        }
        if let Some(p) = proj_plain.get(&i) {
            proj.components.insert(i, p.mul(&f, &qs[&i].1));
            incl.components
                .insert(i, qs[&i].0.mul(&f, incl_plain.get(&i).expect("paired with proj")));
        }
        if let Some(k) = k_plain.get(&i) {
            if big.rank(i - 1) > 0 {
                homotopy
                    .components
                    .insert(i, qs[&(i - 1)].0.mul(&f, &k.mul(&f, &qs[&i].1)));
            }
        }
    }
    QisPair { big, small, proj, incl, homotopy }
}

/// Embeds a rational complex as a polynomial complex with constant entries.
pub fn constants_to_poly(
    c: &FreeComplex<RationalField>,
    base_vars: usize,
) -> FreeComplex<PolyRing> {
    let ring = PolyRing::new(base_vars);
    let mut ranks = BTreeMap::new();
    for i in c.degrees() {
        ranks.insert(i, c.rank(i));
    }
    let mut out = FreeComplex::new(ring.clone(), ranks);
    for i in c.degrees() {
        let d = c.diff(i).map(&ring, |q| Poly::constant(q.clone()));
        out.set_diff(i, d).expect("embedding keeps shapes");
    }
    out
}

/// Random unipotent polynomial matrix (identity plus strictly upper
/// triangular) and its exact inverse.
pub fn random_unipotent_poly<R: Rng>(
    rng: &mut R,
    n: usize,
    base_vars: usize,
    max_deg: u32,
) -> (Matrix<PolyRing>, Matrix<PolyRing>) {
    let ring = PolyRing::new(base_vars);
    let mut nilp = Matrix::zero(&ring, n, n);
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(0.7) {
                nilp.set(i, j, random_poly(rng, base_vars, max_deg, false, 2));
            }
        }
    }
    let p = Matrix::identity(&ring, n).add(&ring, &nilp);
    // Neumann series; the nilpotent part dies after n factors.
    let mut inv = Matrix::identity(&ring, n);
    let mut power = Matrix::identity(&ring, n);
    for k in 1..n {
        power = power.mul(&ring, &nilp);
        let signed = if k % 2 == 1 { power.neg(&ring) } else { power.clone() };
        inv = inv.add(&ring, &signed);
    }
    (p, inv)
}

/// Conjugates a strictly acting complex by unipotent polynomial matrices,
/// one per degree: the differential becomes `P d P^(-1)` and the action
/// matrices pick up the usual inhomogeneous term.
pub fn conjugate_connection<R: Rng>(
    rng: &mut R,
    conn: &ConnectionComplex,
    max_deg: u32,
) -> ConnectionComplex {
    let ring = conn.complex.ring.clone();
    let c = conn.alg.commut_factor();
    let mut ps = BTreeMap::new();
    for i in conn.complex.degrees() {
        ps.insert(i, random_unipotent_poly(rng, conn.complex.rank(i), ring.base_vars, max_deg));
    }
    let mut ranks = BTreeMap::new();
    for i in conn.complex.degrees() {
        ranks.insert(i, conn.complex.rank(i));
    }
    let mut complex = FreeComplex::new(ring.clone(), ranks);
    for i in conn.complex.degrees() {
        if complex.rank(i + 1) > 0 {
            let d = ps[&(i + 1)].0.mul(&ring, &conn.complex.diff(i)).mul(&ring, &ps[&i].1);
            complex.set_diff(i, d).expect("conjugation keeps shapes");
        }
    }
    let mut gammas = BTreeMap::new();
    for i in conn.complex.degrees() {
        let (p, pinv) = &ps[&i];
        let mut per_gen = Vec::new();
        for k in 0..conn.alg.gens {
            let dp_inv = pinv.map(&ring, |q| q.partial(k));
            let base = p.mul(&ring, &conn.gamma(i, k)).mul(&ring, pinv);
            let inhom = p.mul(&ring, &dp_inv).scale(&ring, &c);
            per_gen.push(base.add(&ring, &inhom));
        }
        gammas.insert(i, per_gen);
    }
    ConnectionComplex { alg: conn.alg, complex, gammas }
}

/// Promotes a rational chain map to polynomial coefficients.
pub fn chain_map_to_poly(m: &ChainMap<RationalField>, base_vars: usize) -> ChainMap<PolyRing> {
    let ring = PolyRing::new(base_vars);
    let components = m
        .components
        .iter()
        .map(|(&i, c)| (i, c.map(&ring, |q| Poly::constant(q.clone()))))
        .collect();
    ChainMap { components }
}

/// Promotes a rational homotopy to polynomial coefficients.
pub fn homotopy_to_poly(h: &Homotopy<RationalField>, base_vars: usize) -> Homotopy<PolyRing> {
    let ring = PolyRing::new(base_vars);
    let components = h
        .components
        .iter()
        .map(|(&i, c)| (i, c.map(&ring, |q| Poly::constant(q.clone()))))
        .collect();
    Homotopy { components }
}

/// A homotopy retraction with a flat connection on the big side.  The big
/// complex is conjugated by unipotent polynomial matrices and every piece of
/// the retraction follows the change of basis, so the homotopy identity
/// stays exact and the connection is flat by construction.
pub struct ConnectedQis {
    pub conn: ConnectionComplex,
    pub small: FreeComplex<PolyRing>,
    pub a0: ChainMap<PolyRing>,
    pub b0: ChainMap<PolyRing>,
    pub homotopy: Homotopy<PolyRing>,
}

pub fn random_connected_qis<R: Rng>(
    rng: &mut R,
    alg: FilteredPBWAlgebra,
    lo: i32,
    hi: i32,
    max_dots: usize,
    max_intervals: usize,
    max_extra: usize,
    max_deg: u32,
) -> ConnectedQis {
    let ring = PolyRing::new(alg.base_vars);
    let c = alg.commut_factor();
    let pair = random_qis_pair(rng, lo, hi, max_dots, max_intervals, max_extra);
    let small = constants_to_poly(&pair.small, alg.base_vars);
    let big0 = constants_to_poly(&pair.big, alg.base_vars);
    let mut ps: BTreeMap<i32, (Matrix<PolyRing>, Matrix<PolyRing>)> = BTreeMap::new();
    for i in big0.degrees() {
        ps.insert(i, random_unipotent_poly(rng, big0.rank(i), alg.base_vars, max_deg));
    }
    let p = |i: i32| -> Matrix<PolyRing> {
        match ps.get(&i) {
            Some((m, _)) => m.clone(),
            None => Matrix::identity(&ring, big0.rank(i)),
        }
    };
    let pinv = |i: i32| -> Matrix<PolyRing> {
        match ps.get(&i) {
            Some((_, m)) => m.clone(),
            None => Matrix::identity(&ring, big0.rank(i)),
        }
    };
    let mut ranks = BTreeMap::new();
    for i in big0.degrees() {
        ranks.insert(i, big0.rank(i));
    }
    let mut big = FreeComplex::new(ring.clone(), ranks);
    for i in big0.degrees() {
        if big0.rank(i + 1) == 0 {
            continue;
        }
        let d = p(i + 1).mul(&ring, &big0.diff(i)).mul(&ring, &pinv(i));
        big.set_diff(i, d).expect("conjugation keeps shapes");
    }
    let mut gammas = BTreeMap::new();
    for i in big0.degrees() {
        let mut per_gen = Vec::new();
        for k in 0..alg.gens {
            let dp_inv = pinv(i).map(&ring, |q| q.partial(k));
            per_gen.push(p(i).mul(&ring, &dp_inv).scale(&ring, &c));
        }
        gammas.insert(i, per_gen);
    }
    let conn = ConnectionComplex { alg, complex: big, gammas };
    let proj = chain_map_to_poly(&pair.proj, alg.base_vars);
    let incl = chain_map_to_poly(&pair.incl, alg.base_vars);
    let k_poly = homotopy_to_poly(&pair.homotopy, alg.base_vars);
    let mut a0 = ChainMap::new();
    let mut b0 = ChainMap::new();
    let mut homotopy = Homotopy::new();
    for i in big0.degrees() {
        if small.rank(i) > 0 {
            a0.components.insert(
                i,
                proj.component(&big0, &small, i).mul(&ring, &pinv(i)),
            );
            b0.components.insert(
                i,
                p(i).mul(&ring, &incl.component(&small, &big0, i)),
            );
        }
        if big0.rank(i - 1) > 0 {
            homotopy.components.insert(
                i,
                p(i - 1)
                    .mul(&ring, &k_poly.component(&big0, &big0, i))
                    .mul(&ring, &pinv(i)),
            );
        }
    }
    ConnectedQis { conn, small, a0, b0, homotopy }
}
