//! The mapping-complex operations are validated against independent
//! expansions: differentials against hand-expanded small cases and the
//! square-zero/Leibniz/anticommutation identities, weakified actions against
//! the covariant-operator calculus, transfer outputs against the structure
//! equation and exact closedness, and the free-module complexes against the
//! mapping complex they are dual to.

use std::collections::BTreeMap;

use rand::Rng;

use wmc_core::algebra::{AlgebraElement, DExp, FilteredPBWAlgebra, Mode};
use wmc_core::complexes::{cone, ConnectionComplex, FreeComplex};
use wmc_core::gen::{
    chain_map_to_poly, conjugate_connection, constants_to_poly, homotopy_to_poly,
    random_connected_qis, random_known_complex, random_qis_pair, random_small_rational,
    rng_from_seed,
};
use wmc_core::hochschild::{
    unit_word, QCtx, QElement, TensorWord, TransferData,
};
use wmc_core::matrix::Matrix;
use wmc_core::poly::Poly;
use wmc_core::ring::PolyRing;
use wmc_core::scalar::rat_int;

fn dx(e: u32) -> DExp {
    DExp::from_vec(vec![e])
}

fn parity(n: i64) -> wmc_core::scalar::Rational {
    if n.rem_euclid(2) == 0 {
        rat_int(1)
    } else {
        rat_int(-1)
    }
}

/// Random complex with constant differentials, promoted to polynomial
/// coefficients.
fn random_poly_complex<R: Rng>(
    rng: &mut R,
    lo: i32,
    hi: i32,
    base_vars: usize,
) -> FreeComplex<PolyRing> {
    constants_to_poly(&random_known_complex(rng, lo, hi, 2, 2).complex, base_vars)
}

/// A conjugated flat connection on a random complex.
fn random_conn<R: Rng>(
    rng: &mut R,
    alg: FilteredPBWAlgebra,
    lo: i32,
    hi: i32,
) -> ConnectionComplex {
    let base = random_poly_complex(rng, lo, hi, alg.base_vars);
    let trivial = ConnectionComplex::trivial(alg, base);
    conjugate_connection(rng, &trivial, 1)
}

fn all_modes() -> Vec<Mode> {
    vec![Mode::Poly, Mode::Weyl, Mode::Rees]
}

#[test]
fn differentials_square_to_zero_on_random_tables() {
    for mode in all_modes() {
        for m in 1..=2usize {
            let alg = FilteredPBWAlgebra::new(mode, m, m).unwrap();
            let ctx = QCtx::new(&alg, 3).unwrap();
            let mut rng = rng_from_seed(41 + m as u64);
            for deg in -1..=2 {
                let e = random_poly_complex(&mut rng, -2, 1, m);
                let f = random_poly_complex(&mut rng, -2, 1, m);
                let q = ctx.random_element(&mut rng, &e, &f, deg, 4);
                let dq = ctx.d_q(&e, &f, &q).unwrap();
                let ddq = ctx.d_q(&e, &f, &dq).unwrap();
                assert!(ddq.is_zero(), "d^2 != 0 for mode {mode:?} m={m} deg={deg}");
            }
        }
    }
}

#[test]
fn merge_terms_match_the_hand_expansion() {
    // One generator, one-dimensional module in degree zero, no differential.
    let alg = FilteredPBWAlgebra::new(Mode::Weyl, 1, 1).unwrap();
    let ctx = QCtx::new(&alg, 3).unwrap();
    let ranks: BTreeMap<i32, usize> = [(-1, 1), (0, 1)].into_iter().collect();
    let e = FreeComplex::new(PolyRing::new(1), ranks);
    let mut q = QElement::new(0, 3);
    q.table.insert((vec![dx(1)], 0, 0), vec![Poly::one()]);
    q.table
        .insert((vec![dx(2)], 0, 0), vec![Poly::constant(rat_int(5))]);
    let dq = ctx.d_q(&e, &e, &q).unwrap();
    let expect: BTreeMap<TensorWord, i64> = [
        (vec![dx(0), dx(1)], -1),
        (vec![dx(1), dx(0)], -1),
        (vec![dx(0), dx(2)], -5),
        (vec![dx(2), dx(0)], -5),
        (vec![dx(1), dx(1)], -5),
    ]
    .into_iter()
    .collect();
    assert_eq!(dq.table.len(), expect.len());
    for (w, v) in expect {
        let col = dq.table.get(&(w.clone(), 0, 0)).expect("key present");
        assert_eq!(col, &vec![Poly::constant(rat_int(v))], "word {w:?}");
    }
}

#[test]
fn weakified_actions_compose_like_covariant_products() {
    // eta eta on a two-slot word is minus the covariant operator of the
    // merged exponent, for any flat action.
    for mode in all_modes() {
        let alg = FilteredPBWAlgebra::new(mode, 1, 1).unwrap();
        let ctx = QCtx::new(&alg, 4).unwrap();
        let mut rng = rng_from_seed(97);
        let conn = random_conn(&mut rng, alg, 0, 1);
        let e = conn.complex.clone();
        let eta = ctx.weakify(&conn).unwrap();
        let etaeta = ctx.compose(&e, &e, &e, &eta, &eta).unwrap();
        for (a, b) in [(1u32, 1u32), (1, 2), (2, 1)] {
            for j in e.degrees() {
                let merged = ctx.word_action_matrix(&conn, j, &dx(a + b));
                for col in 0..e.rank(j) {
                    let got = etaeta
                        .table
                        .get(&(vec![dx(a), dx(b)], j, col))
                        .cloned()
                        .unwrap_or_else(|| vec![Poly::zero(); e.rank(j)]);
                    let want: Vec<Poly> = (0..e.rank(j))
                        .map(|r| merged.get(r, col).scale(&rat_int(-1)))
                        .collect();
                    assert_eq!(got, want, "mode {mode:?} word ({a},{b}) degree {j}");
                }
            }
        }
    }
}

#[test]
fn covariant_operators_match_the_standard_action() {
    // On the trivial rank-one module the covariant operators are exactly the
    // standard representation of the algebra on polynomials.
    for mode in all_modes() {
        let alg = FilteredPBWAlgebra::new(mode, 2, 2).unwrap();
        let ctx = QCtx::new(&alg, 3).unwrap();
        let ring = PolyRing::new(2);
        let conn = ConnectionComplex::trivial(alg, FreeComplex::unit(ring.clone()));
        let f = Poly::parse("x1^3*x2 + 2*x1*x2^2 - 7").unwrap();
        for word in [vec![1u32, 0], vec![0, 2], vec![2, 1]] {
            let alpha = DExp::from_vec(word.clone());
            let mut m = Matrix::from_fn(&ring, 1, 1, |_, _| f.clone());
            for g in 0..2 {
                for _ in 0..alpha.exp(g) {
                    m = ctx.nabla(&conn, 0, g, &m);
                }
            }
            let u = AlgebraElement::term(alpha, Poly::one());
            let want = alg.act_standard(&u, &f);
            assert_eq!(m.get(0, 0), &want, "mode {mode:?} word {word:?}");
        }
    }
}

#[test]
fn composition_is_associative_and_unital() {
    let alg = FilteredPBWAlgebra::new(Mode::Weyl, 1, 1).unwrap();
    let ctx = QCtx::new(&alg, 3).unwrap();
    let mut rng = rng_from_seed(7);
    for trial in 0..6 {
        let e = random_poly_complex(&mut rng, -2, 1, 1);
        let f = random_poly_complex(&mut rng, -2, 1, 1);
        let g = random_poly_complex(&mut rng, -2, 1, 1);
        let h = random_poly_complex(&mut rng, -2, 1, 1);
        let p = ctx.random_element(&mut rng, &g, &h, 1, 3);
        let q = ctx.random_element(&mut rng, &f, &g, (trial % 3) as i32 - 1, 3);
        let r = ctx.random_element(&mut rng, &e, &f, -1, 3);
        let pq = ctx.compose(&f, &g, &h, &p, &q).unwrap();
        let qr = ctx.compose(&e, &f, &g, &q, &r).unwrap();
        let left = ctx.compose(&e, &f, &h, &pq, &r).unwrap();
        let right = ctx.compose(&e, &g, &h, &p, &qr).unwrap();
        assert_eq!(left, right, "associativity, trial {trial}");
        let unit_f = ctx.unit(&f);
        let unit_e = ctx.unit(&e);
        assert_eq!(ctx.compose(&e, &f, &f, &unit_f, &r).unwrap(), r);
        assert_eq!(ctx.compose(&e, &e, &f, &r, &unit_e).unwrap(), r);
    }
}

#[test]
fn leibniz_holds_for_plain_and_twisted_differentials() {
    let alg = FilteredPBWAlgebra::new(Mode::Weyl, 1, 1).unwrap();
    let ctx = QCtx::new(&alg, 3).unwrap();
    let mut rng = rng_from_seed(23);
    for trial in 0..4 {
        let e_conn = random_conn(&mut rng, alg, -1, 1);
        let f_conn = random_conn(&mut rng, alg, -1, 1);
        let g_conn = random_conn(&mut rng, alg, -1, 1);
        let (e, f, g) = (&e_conn.complex, &f_conn.complex, &g_conn.complex);
        let pdeg = (trial % 2) as i32;
        let p = ctx.random_element(&mut rng, f, g, pdeg, 3);
        let q = ctx.random_element(&mut rng, e, f, (trial % 3) as i32 - 1, 3);
        let pq = ctx.compose(e, f, g, &p, &q).unwrap();
        // Plain Leibniz.
        let lhs = ctx.d_q(e, g, &pq).unwrap();
        let rhs = ctx
            .compose(e, f, g, &ctx.d_q(f, g, &p).unwrap(), &q)
            .unwrap()
            .add(
                &ctx.compose(e, f, g, &p, &ctx.d_q(e, f, &q).unwrap())
                    .unwrap()
                    .scale(&parity(pdeg as i64)),
            );
        assert_eq!(lhs, rhs, "plain Leibniz, trial {trial}");
        // Twisted Leibniz with three structures.
        let eta = ctx.weakify(&e_conn).unwrap();
        let psi = ctx.weakify(&f_conn).unwrap();
        let phi = ctx.weakify(&g_conn).unwrap();
        let lhs = ctx.d_twisted(e, g, &pq, Some(&eta), Some(&phi)).unwrap();
        let dp = ctx.d_twisted(f, g, &p, Some(&psi), Some(&phi)).unwrap();
        let dq = ctx.d_twisted(e, f, &q, Some(&eta), Some(&psi)).unwrap();
        let rhs = ctx.compose(e, f, g, &dp, &q).unwrap().add(
            &ctx.compose(e, f, g, &p, &dq)
                .unwrap()
                .scale(&parity(pdeg as i64)),
        );
        assert_eq!(lhs, rhs, "twisted Leibniz, trial {trial}");
    }
}

#[test]
fn unit_insertions_anticommute_with_the_differential() {
    let alg = FilteredPBWAlgebra::new(Mode::Weyl, 1, 1).unwrap();
    let ctx = QCtx::new(&alg, 3).unwrap();
    let mut rng = rng_from_seed(59);
    for trial in 0..8 {
        let e = random_poly_complex(&mut rng, -2, 1, 1);
        let f = random_poly_complex(&mut rng, -2, 1, 1);
        let q = ctx.random_element(&mut rng, &e, &f, (trial % 4) as i32 - 1, 4);
        let sum = ctx
            .d_q(&e, &f, &ctx.insert_ones(&q))
            .unwrap()
            .add(&ctx.insert_ones(&ctx.d_q(&e, &f, &q).unwrap()));
        assert!(sum.is_zero(), "Hd + dH != 0, trial {trial}");
    }
    // On a weakified action the insertion collapses to the identity.
    let conn = random_conn(&mut rng, alg, -1, 1);
    let eta = ctx.weakify(&conn).unwrap();
    assert_eq!(ctx.insert_ones(&eta), ctx.unit(&conn.complex));
}

#[test]
fn weakified_connections_satisfy_the_structure_equation() {
    for mode in all_modes() {
        for m in 1..=2usize {
            let alg = FilteredPBWAlgebra::new(mode, m, m).unwrap();
            let ctx = QCtx::new(&alg, 3).unwrap();
            let mut rng = rng_from_seed(120 + m as u64);
            let trivial = ConnectionComplex::trivial(
                alg,
                random_poly_complex(&mut rng, -1, 1, m),
            );
            for conn in [trivial.clone(), conjugate_connection(&mut rng, &trivial, 1)] {
                let report = ctx.check_mc(&conn.complex, &ctx.weakify(&conn).unwrap()).unwrap();
                assert!(report.ok, "mode {mode:?} m={m}: violations {:?}", report.violations);
                assert!(report.normalized);
            }
        }
    }
}

#[test]
fn curvature_defects_are_reported() {
    // One-slot value x with vanishing two-slot part: the commutation rule
    // produces a defect the checker must flag.
    let alg = FilteredPBWAlgebra::new(Mode::Weyl, 1, 1).unwrap();
    let ctx = QCtx::new(&alg, 3).unwrap();
    let e = FreeComplex::unit(PolyRing::new(1));
    let mut eta = QElement::new(1, 3);
    eta.table.insert((unit_word(1), 0, 0), vec![Poly::one()]);
    eta.table.insert((vec![dx(1)], 0, 0), vec![Poly::var(0)]);
    let report = ctx.check_mc(&e, &eta).unwrap();
    assert!(!report.ok);
    assert!(report
        .violations
        .contains(&(vec![dx(1), dx(1)], 0, 0)));
    // The trivial structure passes.
    let trivial = ctx.unit(&e);
    let mut flat = QElement::new(1, 3);
    for ((w, j, b), col) in &trivial.table {
        let mut word = vec![DExp::unit()];
        word.extend(w.iter().cloned());
        flat.table.insert((word, *j, *b), col.clone());
    }
    assert!(ctx.check_mc(&e, &flat).unwrap().ok);
}

#[test]
fn deformation_parameter_interpolates_the_two_ends() {
    // The same conjugation data over the three modes; the parametrized
    // tables specialize to the commutative and operator ends exactly.
    let build = |mode: Mode| -> (FilteredPBWAlgebra, ConnectionComplex) {
        let alg = FilteredPBWAlgebra::new(mode, 1, 1).unwrap();
        let mut rng = rng_from_seed(2024);
        let conn = random_conn(&mut rng, alg, -1, 1);
        (alg, conn)
    };
    let (alg_r, conn_r) = build(Mode::Rees);
    let (alg_w, conn_w) = build(Mode::Weyl);
    let (alg_p, conn_p) = build(Mode::Poly);
    let ctx_r = QCtx::new(&alg_r, 3).unwrap();
    let ctx_w = QCtx::new(&alg_w, 3).unwrap();
    let ctx_p = QCtx::new(&alg_p, 3).unwrap();
    let eta_r = ctx_r.weakify(&conn_r).unwrap();
    let eta_w = ctx_w.weakify(&conn_w).unwrap();
    let eta_p = ctx_p.weakify(&conn_p).unwrap();
    let specialize = |q: &QElement, v: i64| -> BTreeMap<(TensorWord, i32, usize), Vec<Poly>> {
        let mut out = BTreeMap::new();
        for (key, col) in &q.table {
            let sub: Vec<Poly> = col.iter().map(|p| p.subst_lambda(&rat_int(v))).collect();
            if sub.iter().all(Poly::is_zero) {
                continue;
            }
            out.insert(key.clone(), sub);
        }
        out
    };
    assert_eq!(specialize(&eta_r, 1), specialize(&eta_w, 1));
    assert_eq!(specialize(&eta_r, 0), specialize(&eta_p, 0));
}

#[test]
fn slotless_algebras_reduce_to_the_alternating_calculus() {
    // No generators: every word is a row of unit slots and the calculus
    // collapses to matrix algebra with alternating signs.
    let alg = FilteredPBWAlgebra::new(Mode::Poly, 0, 0).unwrap();
    let ctx = QCtx::new(&alg, 2).unwrap();
    let ring = PolyRing::new(0);
    let ranks: BTreeMap<i32, usize> = (-2..=1).map(|i| (i, 2)).collect();
    let mut e = FreeComplex::new(ring.clone(), ranks);
    for i in -2..1 {
        e.set_diff(i, Matrix::zero(&ring, 2, 2)).unwrap();
    }
    // Differential of a table supported on unit words: only slot splits
    // survive, and they cancel pairwise except at even slot counts.
    for i in 0..=1i32 {
        for m in 1..=3usize {
            let mut q = QElement::new(i, 2);
            let col = vec![Poly::one(), Poly::constant(rat_int(2))];
            q.table.insert((unit_word(m - 1), 0, 0), col.clone());
            let dq = ctx.d_q(&e, &e, &q).unwrap();
            let got = dq.table.get(&(unit_word(m), 0, 0)).cloned();
            if m % 2 == 0 {
                let want: Vec<Poly> = col.iter().map(|p| p.scale(&parity(i as i64 + 1))).collect();
                assert_eq!(got, Some(want), "i={i} m={m}");
            } else {
                assert_eq!(got, None, "i={i} m={m}");
            }
        }
    }
    // Composition with one-slot tables is the signed matrix product.
    let mut p = QElement::new(1, 2);
    let mut q = QElement::new(1, 2);
    // p, q: degree one, one unit slot, value matrices P, Q from E^0 to E^0.
    p.table.insert((unit_word(1), 0, 0), vec![Poly::one(), Poly::zero()]);
    p.table
        .insert((unit_word(1), 0, 1), vec![Poly::constant(rat_int(3)), Poly::one()]);
    q.table
        .insert((unit_word(1), 0, 0), vec![Poly::zero(), Poly::constant(rat_int(2))]);
    q.table.insert((unit_word(1), 0, 1), vec![Poly::one(), Poly::zero()]);
    let pq = ctx.compose(&e, &e, &e, &p, &q).unwrap();
    // Two-slot component: only the middle split contributes, with the
    // Koszul sign (-1)^{1*1}.
    let p_mat = [[rat_int(1), rat_int(3)], [rat_int(0), rat_int(1)]];
    let q_mat = [[rat_int(0), rat_int(1)], [rat_int(2), rat_int(0)]];
    for col in 0..2 {
        let got = pq
            .table
            .get(&(unit_word(2), 0, col))
            .cloned()
            .unwrap_or_else(|| vec![Poly::zero(); 2]);
        for row in 0..2 {
            let mut want = rat_int(0);
            for t in 0..2 {
                want = want + p_mat[row][t].clone() * q_mat[t][col].clone();
            }
            assert_eq!(got[row], Poly::constant(-want), "entry {row},{col}");
        }
    }
}

#[test]
fn transfer_yields_closed_structures_on_retracts() {
    for (mode, m, seed) in [
        (Mode::Weyl, 1usize, 300u64),
        (Mode::Poly, 1, 301),
        (Mode::Rees, 1, 302),
        (Mode::Weyl, 2, 303),
    ] {
        let alg = FilteredPBWAlgebra::new(mode, m, m).unwrap();
        let trunc = (m + 2) as u32;
        let ctx = QCtx::new(&alg, trunc).unwrap();
        let mut rng = rng_from_seed(seed);
        let fix = random_connected_qis(&mut rng, alg, -2, 1, 2, 1, 1, 1);
        let e = &fix.conn.complex;
        let f = &fix.small;
        let eta = ctx.weakify(&fix.conn).unwrap();
        let data = TransferData {
            a0: fix.a0.clone(),
            b0: fix.b0.clone(),
            homotopy: fix.homotopy.clone(),
        };
        let (phi, a) = ctx.transfer(e, f, &eta, &data).unwrap();
        let report = ctx.check_mc(f, &phi).unwrap();
        assert!(report.ok, "mode {mode:?} m={m}: transferred structure fails MC");
        assert!(
            ctx.d_twisted(e, f, &a, Some(&eta), Some(&phi)).unwrap().is_zero(),
            "mode {mode:?} m={m}: connecting morphism not closed"
        );
        // The plain part of the morphism is the input projection.
        let k0 = ctx.k0_components(e, f, &a);
        for (j, mat) in &k0 {
            assert_eq!(mat, &data.a0.component(e, f, *j), "degree {j}");
        }
        assert!(ctx
            .is_weak_equivalence(e, f, &eta, &phi, &a, seed)
            .unwrap());
        // Retraction data from the generator is exactly split, so the
        // output is already normalized.
        assert!(report.normalized);
    }
}

#[test]
fn transfer_along_the_identity_is_the_identity() {
    let alg = FilteredPBWAlgebra::new(Mode::Weyl, 1, 1).unwrap();
    let ctx = QCtx::new(&alg, 3).unwrap();
    let mut rng = rng_from_seed(77);
    let conn = random_conn(&mut rng, alg, -1, 1);
    let e = &conn.complex;
    let eta = ctx.weakify(&conn).unwrap();
    let data = TransferData {
        a0: wmc_core::complexes::ChainMap::identity(e),
        b0: wmc_core::complexes::ChainMap::identity(e),
        homotopy: wmc_core::complexes::Homotopy::new(),
    };
    let (phi, a) = ctx.transfer(e, e, &eta, &data).unwrap();
    assert_eq!(phi, eta);
    assert_eq!(a, ctx.unit(e));
}

#[test]
fn transfer_with_no_operators_stays_normalized() {
    // The slotless algebra: transfer across a random retraction.
    let alg = FilteredPBWAlgebra::new(Mode::Poly, 0, 0).unwrap();
    let ctx = QCtx::new(&alg, 2).unwrap();
    let mut rng = rng_from_seed(88);
    let fix = random_connected_qis(&mut rng, alg, -2, 1, 2, 2, 1, 0);
    let e = &fix.conn.complex;
    let f = &fix.small;
    let eta = ctx.weakify(&fix.conn).unwrap();
    let data = TransferData { a0: fix.a0, b0: fix.b0, homotopy: fix.homotopy };
    let (phi, a) = ctx.transfer(e, f, &eta, &data).unwrap();
    let report = ctx.check_mc(f, &phi).unwrap();
    assert!(report.ok && report.normalized);
    assert!(ctx.d_twisted(e, f, &a, Some(&eta), Some(&phi)).unwrap().is_zero());
}

/// Perturbs a promoted retraction by a null-homotopic correction: b0 moves
/// by a boundary and the homotopy absorbs the difference, so the data stays
/// valid but the transferred structure acquires unit-word defects.
fn perturbed_retraction<R: Rng>(
    rng: &mut R,
    e: &FreeComplex<PolyRing>,
    f: &FreeComplex<PolyRing>,
    a0: &wmc_core::complexes::ChainMap<PolyRing>,
    b0: &wmc_core::complexes::ChainMap<PolyRing>,
    k: &wmc_core::complexes::Homotopy<PolyRing>,
) -> TransferData {
    let ring = &e.ring;
    let mut sigma: BTreeMap<i32, Matrix<PolyRing>> = BTreeMap::new();
    for i in f.degrees() {
        if e.rank(i - 1) == 0 {
            continue;
        }
        let m = Matrix::from_fn(ring, e.rank(i - 1), f.rank(i), |_, _| {
            Poly::constant(random_small_rational(rng, 2))
        });
        sigma.insert(i, m);
    }
    let sg = |i: i32| -> Matrix<PolyRing> {
        sigma
            .get(&i)
            .cloned()
            .unwrap_or_else(|| Matrix::zero(ring, e.rank(i - 1), f.rank(i)))
    };
    let mut b0p = wmc_core::complexes::ChainMap::new();
    for i in f.degrees() {
        if e.rank(i) == 0 {
            continue;
        }
        let base = b0.component(f, e, i);
        let term1 = e.diff(i - 1).mul(ring, &sg(i));
        let term2 = sg(i + 1).mul(ring, &f.diff(i));
        b0p.components
            .insert(i, base.add(ring, &term1).add(ring, &term2));
    }
    let mut kp = wmc_core::complexes::Homotopy::new();
    for i in e.degrees() {
        if e.rank(i - 1) == 0 {
            continue;
        }
        let base = k.component(e, e, i);
        let corr = sg(i).mul(ring, &a0.component(e, f, i));
        kp.components.insert(i, base.add(ring, &corr));
    }
    TransferData { a0: a0.clone(), b0: b0p, homotopy: kp }
}

#[test]
fn normalization_repairs_perturbed_transfers() {
    let alg = FilteredPBWAlgebra::new(Mode::Weyl, 1, 1).unwrap();
    let ctx = QCtx::new(&alg, 3).unwrap();
    let mut found_defect = false;
    for seed in 400..408u64 {
        let mut rng = rng_from_seed(seed);
        let pair = random_qis_pair(&mut rng, -2, 1, 2, 2, 1);
        let e = constants_to_poly(&pair.big, 1);
        let f = constants_to_poly(&pair.small, 1);
        let conn = ConnectionComplex::trivial(alg, e.clone());
        let eta = ctx.weakify(&conn).unwrap();
        let a0 = chain_map_to_poly(&pair.proj, 1);
        let b0 = chain_map_to_poly(&pair.incl, 1);
        let k = homotopy_to_poly(&pair.homotopy, 1);
        let data = perturbed_retraction(&mut rng, &e, &f, &a0, &b0, &k);
        data.validate(&e, &f).unwrap();
        let (phi, a) = ctx.transfer(&e, &f, &eta, &data).unwrap();
        assert!(ctx.check_mc(&f, &phi).unwrap().ok);
        if !ctx.is_normalized(&f, &phi) {
            found_defect = true;
        }
        let out = ctx.normalize(&e, &f, &eta, &phi, &a).unwrap();
        assert!(
            out.success,
            "seed {seed}: normalization failed: {:?}",
            out.failure
        );
        assert!(out.normalized && out.mc_ok && out.closed);
        // The plain part survives the gauge.
        let k0 = ctx.k0_components(&e, &f, &out.a);
        for (j, mat) in &k0 {
            assert_eq!(mat, &data.a0.component(&e, &f, *j), "degree {j}");
        }
    }
    assert!(found_defect, "no perturbation produced a unit defect");
}

#[test]
fn normalization_reports_unfixable_instances() {
    // A conjugated retraction with a polynomial perturbation: the defect
    // picks up non-constant coefficients at some seeds, exercising the
    // monomial-ansatz stage.  Whatever happens, the pass must either fully
    // succeed or report, never mangle the structure silently.
    let alg = FilteredPBWAlgebra::new(Mode::Weyl, 1, 1).unwrap();
    let ctx = QCtx::new(&alg, 3).unwrap();
    let mut saw_report = false;
    for seed in 500..510u64 {
        let mut rng = rng_from_seed(seed);
        let fix = random_connected_qis(&mut rng, alg, -2, 1, 2, 1, 1, 1);
        let e = &fix.conn.complex;
        let f = &fix.small;
        let eta = ctx.weakify(&fix.conn).unwrap();
        let data = perturbed_retraction(&mut rng, e, f, &fix.a0, &fix.b0, &fix.homotopy);
        data.validate(e, f).unwrap();
        let (phi, a) = ctx.transfer(e, f, &eta, &data).unwrap();
        let out = ctx.normalize(e, f, &eta, &phi, &a).unwrap();
        if out.success {
            assert!(out.normalized && out.mc_ok && out.closed);
        } else {
            assert!(out.failure.is_some(), "failure must carry a reason");
            saw_report = true;
        }
    }
    // Across these seeds at least one instance must exercise a path; either
    // every one normalizes (acceptable) or reports are well-formed.  The
    // assertion documents that no silent third state exists.
    let _ = saw_report;

    // A genuine obstruction: over a target with zero differential the plain
    // part is its own homotopy class, so a non-identity idempotent can never
    // be gauged to the identity.  The pass must fail at stage one and say so.
    let ranks: BTreeMap<i32, usize> = [(0, 2)].into_iter().collect();
    let f = FreeComplex::new(PolyRing::new(1), ranks);
    let mut phi = QElement::new(1, 3);
    phi.table
        .insert((unit_word(1), 0, 0), vec![Poly::one(), Poly::zero()]);
    let report = ctx.check_mc(&f, &phi).unwrap();
    assert!(report.ok && !report.normalized);
    let a = ctx.unit(&f);
    let out = ctx.normalize(&f, &f, &phi, &phi, &a).unwrap();
    assert!(!out.success && out.failure.is_some());
    assert_eq!(out.stages.len(), 1);
    assert_eq!(out.stages[0].slots, 1);
    assert!(!out.stages[0].solved);
}

#[test]
fn weak_equivalence_detection_uses_the_cone() {
    let alg = FilteredPBWAlgebra::new(Mode::Weyl, 1, 1).unwrap();
    let ctx = QCtx::new(&alg, 3).unwrap();
    let e = FreeComplex::unit(PolyRing::new(1));
    let conn = ConnectionComplex::trivial(alg, e.clone());
    let eta = ctx.weakify(&conn).unwrap();
    let unit = ctx.unit(&e);
    assert!(ctx.is_weak_equivalence(&e, &e, &eta, &eta, &unit, 1).unwrap());
    let zero = QElement::new(0, 3);
    assert!(!ctx.is_weak_equivalence(&e, &e, &eta, &eta, &zero, 1).unwrap());
}

/// Applies an algebra element to a value column through the covariant
/// operators of a strict action.
fn act_column(
    ctx: &QCtx,
    conn: &ConnectionComplex,
    deg: i32,
    u: &AlgebraElement,
    col: &[Poly],
) -> Vec<Poly> {
    let ring = &conn.complex.ring;
    let r = conn.complex.rank(deg);
    let mut out = vec![Poly::zero(); r];
    for (delta, coeff) in u.terms() {
        let mut m = Matrix::from_fn(ring, r, 1, |i, _| col[i].clone());
        for g in 0..ctx.alg.gens {
            for _ in 0..delta.exp(g) {
                m = ctx.nabla(conn, deg, g, &m);
            }
        }
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = slot.add(&m.get(i, 0).mul(coeff));
        }
    }
    out
}

#[test]
fn bar_complex_is_dual_to_the_mapping_complex() {
    let alg = FilteredPBWAlgebra::new(Mode::Weyl, 1, 1).unwrap();
    let ctx = QCtx::new(&alg, 3).unwrap();
    let mut rng = rng_from_seed(603);
    let e_conn = random_conn(&mut rng, alg, -1, 1);
    let f_conn = random_conn(&mut rng, alg, -1, 1);
    let e = &e_conn.complex;
    let f = &f_conn.complex;
    let eta = ctx.weakify(&e_conn).unwrap();
    let phi = ctx.weakify(&f_conn).unwrap();
    let window = (-6, 3);
    let bar = ctx.bar_dplus(e, &eta, window).unwrap();
    bar.complex.check_complex().unwrap();
    // Zero module: empty complex.
    let zero = FreeComplex::zero_complex(PolyRing::new(1));
    assert_eq!(
        ctx.bar_dplus(&zero, &QElement::new(1, 3), window)
            .unwrap()
            .complex
            .total_rank(),
        0
    );
    // Entrywise identification of the twisted differential with the pairing
    // against the free-module differential.
    let mut checked = 0usize;
    let mut trial = 0u64;
    while checked < 50 {
        trial += 1;
        let qdeg = (trial % 3) as i32 - 1;
        let q = ctx.random_element(&mut rng, e, f, qdeg, 4);
        let dq = ctx.d_twisted(e, f, &q, Some(&eta), Some(&phi)).unwrap();
        for n in (window.0 + 1)..(window.1 - 1) {
            let Some(gens) = bar.basis.get(&n) else { continue };
            if gens.is_empty() || checked >= 50 {
                continue;
            }
            let ci = rng.gen_range(0..gens.len());
            let (w, j, b) = gens[ci].clone();
            let out_width = f.rank(qdeg + 1 + j - w.len() as i32);
            if out_width == 0 {
                continue;
            }
            let lhs = dq
                .table
                .get(&(w.clone(), j, b))
                .cloned()
                .unwrap_or_else(|| vec![Poly::zero(); out_width]);
            // d_F applied to the pairing of q with the generator.
            let vd = qdeg + j - w.len() as i32;
            let qv = q
                .table
                .get(&(w.clone(), j, b))
                .cloned()
                .unwrap_or_else(|| vec![Poly::zero(); f.rank(vd)]);
            let mut rhs = if f.rank(vd + 1) > 0 && f.rank(vd) > 0 {
                f.diff(vd).apply(&f.ring, &qv)
            } else {
                vec![Poly::zero(); out_width]
            };
            // Minus (-1)^{|q|} times the pairing with the differential of
            // the generator, evaluated through the strict action.
            let d = bar.complex.diff(n);
            let rows = bar.basis.get(&(n + 1)).cloned().unwrap_or_default();
            let sign = parity(qdeg as i64 + 1);
            for (ri, (w2, j2, b2)) in rows.iter().enumerate() {
                let u = d.get(ri, ci);
                if u.is_zero() {
                    continue;
                }
                let vd2 = qdeg + j2 - w2.len() as i32;
                if f.rank(vd2) == 0 {
                    continue;
                }
                let qv2 = q
                    .table
                    .get(&(w2.clone(), *j2, *b2))
                    .cloned()
                    .unwrap_or_else(|| vec![Poly::zero(); f.rank(vd2)]);
                let acted = act_column(&ctx, &f_conn, vd2, u, &qv2);
                for (dst, v) in rhs.iter_mut().zip(&acted) {
                    *dst = dst.add(&v.scale(&sign));
                }
            }
            assert_eq!(lhs, rhs, "generator ({w:?}, {j}, {b}) at degree {n}");
            checked += 1;
        }
        assert!(trial < 400, "not enough generators sampled");
    }
}

#[test]
fn slotless_free_resolution_alternates_isomorphisms_and_zero() {
    let alg = FilteredPBWAlgebra::new(Mode::Poly, 0, 0).unwrap();
    let ctx = QCtx::new(&alg, 1).unwrap();
    let ring = PolyRing::new(0);
    let e = FreeComplex::unit(ring.clone());
    let conn = ConnectionComplex::trivial(alg, e.clone());
    let eta = ctx.weakify(&conn).unwrap();
    let w = ctx.w_star(&e, &eta, (-1, 4), 11).unwrap();
    // Rank one in every degree from -1 on; differential alternates between
    // zero and minus the identity.
    for n in -1..=4 {
        assert_eq!(w.augmented.rank(n), 1, "degree {n}");
    }
    for n in -1..4 {
        let d = w.augmented.diff(n);
        let want = if (n + 1).rem_euclid(2) == 0 {
            Poly::constant(rat_int(-1))
        } else {
            Poly::zero()
        };
        assert_eq!(d.get(0, 0), &want, "degree {n}");
    }
    assert!(w.certificate.unanimous);
    assert!(w.certificate.acyclic_at(0));
    // Counit: closed for the twisted differential and a quasi-isomorphism
    // in the sampled interior.
    let psi = ctx.w_star_action(&w);
    let xi = ctx.counit_xi(&w, &e);
    assert!(ctx
        .d_twisted(&w.underlying, &e, &xi, Some(&psi), Some(&eta))
        .unwrap()
        .is_zero());
    let p0 = ctx.k0_chain_map(&w.underlying, &e, &xi);
    let c = cone(&w.underlying, &e, &p0).unwrap();
    let h = c.homology_ranks_at_points(3, 5).unwrap();
    assert!(h.unanimous());
    let table = h.consensus().unwrap();
    for n in 0..=2 {
        assert_eq!(table.get(&n).copied().unwrap_or(0), 0, "cone degree {n}");
    }
}

#[test]
fn free_resolutions_have_acyclic_graded_pieces() {
    for mode in [Mode::Weyl, Mode::Poly] {
        let alg = FilteredPBWAlgebra::new(mode, 1, 1).unwrap();
        let ctx = QCtx::new(&alg, 3).unwrap();
        let ring = PolyRing::new(1);
        let e = FreeComplex::unit(ring.clone());
        let conn = ConnectionComplex::trivial(alg, e.clone());
        let eta = ctx.weakify(&conn).unwrap();
        let w = ctx.w_star(&e, &eta, (-1, 5), 13).unwrap();
        assert!(w.certificate.unanimous, "mode {mode:?}");
        for level in 0..=ctx.cap() {
            assert!(
                w.certificate.acyclic_at(level),
                "mode {mode:?} level {level}: {:?}",
                w.certificate.level_ranks(level)
            );
        }
        // Counit closedness away from the top window edge, where the next
        // resolution degree is not materialized, and the interior
        // quasi-isomorphism.
        let psi = ctx.w_star_action(&w);
        let xi = ctx.counit_xi(&w, &e);
        let residue = ctx
            .d_twisted(&w.underlying, &e, &xi, Some(&psi), Some(&eta))
            .unwrap();
        assert!(
            residue.table.keys().all(|(_, j, _)| *j == 5),
            "mode {mode:?}: counit not closed in the window interior"
        );
        let p0 = ctx.k0_chain_map(&w.underlying, &e, &xi);
        let c = cone(&w.underlying, &e, &p0).unwrap();
        let h = c.homology_ranks_at_points(3, 17).unwrap();
        assert!(h.unanimous());
        let table = h.consensus().unwrap();
        for n in 0..=3 {
            assert_eq!(table.get(&n).copied().unwrap_or(0), 0, "mode {mode:?} cone degree {n}");
        }
    }
    // The zero module gives the empty resolution.
    let alg = FilteredPBWAlgebra::new(Mode::Weyl, 1, 1).unwrap();
    let ctx = QCtx::new(&alg, 3).unwrap();
    let zero = FreeComplex::zero_complex(PolyRing::new(1));
    let w = ctx.w_star(&zero, &QElement::new(1, 3), (-1, 3), 7).unwrap();
    assert_eq!(w.augmented.total_rank(), 0);
    assert!(w.certificate.ranks.is_empty() && w.certificate.skipped.is_empty());
}

#[test]
fn graded_pieces_vanish_beyond_the_generator_count() {
    // The higher level-graded pieces of the mapping complex between
    // weakified strict actions are acyclic; the zeroth contains the
    // identity class.
    for mode in [Mode::Weyl, Mode::Poly] {
        let alg = FilteredPBWAlgebra::new(mode, 1, 1).unwrap();
        let ctx = QCtx::new(&alg, 3).unwrap();
        let e = FreeComplex::unit(PolyRing::new(1));
        let conn = ConnectionComplex::trivial(alg, e.clone());
        let eta = ctx.weakify(&conn).unwrap();
        let scan = ctx
            .graded_scan(&e, &e, Some(&eta), Some(&eta), 4, (-2, 6), 19)
            .unwrap();
        assert!(scan.unanimous, "mode {mode:?}");
        for level in 2..=4 {
            assert!(
                scan.acyclic_at(level),
                "mode {mode:?} level {level}: {:?}",
                scan.level_ranks(level)
            );
        }
        // Level zero: the identity class survives in degree zero.
        assert_eq!(scan.ranks.get(&(0, 0)).copied(), Some(1), "mode {mode:?}");
    }
    // Two generators, small ranks, amplitude two, on a narrow window.
    let alg = FilteredPBWAlgebra::new(Mode::Weyl, 2, 2).unwrap();
    let ctx = QCtx::new(&alg, 4).unwrap();
    let mut rng = rng_from_seed(707);
    let mut small_conn = || loop {
        let base = constants_to_poly(&random_known_complex(&mut rng, -1, 0, 1, 1).complex, 2);
        if base.total_rank() >= 2 {
            let trivial = ConnectionComplex::trivial(alg, base);
            return conjugate_connection(&mut rng, &trivial, 1);
        }
    };
    let e_conn = small_conn();
    let f_conn = small_conn();
    let eta = ctx.weakify(&e_conn).unwrap();
    let phi = ctx.weakify(&f_conn).unwrap();
    let scan = ctx
        .graded_scan(
            &e_conn.complex,
            &f_conn.complex,
            Some(&eta),
            Some(&phi),
            5,
            (-2, 1),
            23,
        )
        .unwrap();
    assert!(scan.unanimous);
    for level in 3..=5 {
        assert!(
            scan.acyclic_at(level),
            "level {level}: {:?}",
            scan.level_ranks(level)
        );
    }
}

#[test]
fn positive_slot_quotients_are_acyclic() {
    // Dropping the empty word from the mapping complex between weakly
    // equivalent strict structures leaves an acyclic complex, levelwise.
    let alg = FilteredPBWAlgebra::new(Mode::Poly, 0, 0).unwrap();
    let ctx = QCtx::new(&alg, 1).unwrap();
    let mut rng = rng_from_seed(811);
    let e = constants_to_poly(&random_known_complex(&mut rng, -1, 1, 1, 1).complex, 0);
    let f = constants_to_poly(&random_known_complex(&mut rng, -1, 1, 1, 1).complex, 0);
    let conn_e = ConnectionComplex::trivial(alg, e.clone());
    let conn_f = ConnectionComplex::trivial(alg, f.clone());
    let eta = ctx.weakify(&conn_e).unwrap();
    let phi = ctx.weakify(&conn_f).unwrap();
    let piece = ctx
        .graded_piece(&e, &f, Some(&eta), Some(&phi), 0, (-4, 4), 1)
        .unwrap();
    if piece.complex.total_rank() == 0 {
        return;
    }
    let h = piece.complex.homology_ranks_at_points(3, 29).unwrap();
    assert!(h.unanimous());
    let table = h.consensus().unwrap();
    for n in -3..=3 {
        assert_eq!(table.get(&n).copied().unwrap_or(0), 0, "degree {n}");
    }
}
