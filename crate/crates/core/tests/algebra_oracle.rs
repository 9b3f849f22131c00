//! The rewrite engine is checked against an independent oracle: letters act
//! on Q[x1..xd, l] directly (Di as c * d/dxi, xj and l as multiplication),
//! with no normal ordering involved. Expected normal forms for the worked
//! examples were computed through that action first and are frozen here.

use wmc_core::algebra::{AlgebraElement, DExp, FilteredPBWAlgebra, Mode, Token};
use wmc_core::gen::{random_algebra_element, random_poly, rng_from_seed};
use wmc_core::poly::Poly;
use wmc_core::scalar::rat_int;
use rand::Rng;

fn commut_factor(mode: Mode) -> Poly {
    match mode {
        Mode::Poly => Poly::zero(),
        Mode::Weyl => Poly::one(),
        Mode::Rees => Poly::lambda(),
    }
}

/// One letter acting on a polynomial, defined without the algebra machinery.
fn oracle_act_token(mode: Mode, token: &Token, f: &Poly) -> Poly {
    match token {
        Token::Gen(i) => commut_factor(mode).mul(&f.partial(*i)),
        Token::Base(j) => Poly::var(*j).mul(f),
        Token::Lambda => Poly::lambda().mul(f),
        Token::Scalar(r) => f.scale(r),
    }
}

/// A word acts by applying its letters right to left.
fn oracle_act_word(mode: Mode, word: &[Token], f: &Poly) -> Poly {
    word.iter().rev().fold(f.clone(), |acc, t| oracle_act_token(mode, t, &acc))
}

fn act_elem(algebra: &FilteredPBWAlgebra, u: &AlgebraElement, f: &Poly) -> Poly {
    algebra.act_standard(u, f)
}

fn sample_polys(base_vars: usize) -> Vec<Poly> {
    let mut out = vec![
        Poly::one(),
        Poly::var(0),
        Poly::var(0).pow(3),
        Poly::parse("x1^2 - 2*x1 + 1/3").unwrap(),
    ];
    if base_vars > 1 {
        out.push(Poly::parse("x1*x2^2 + x2").unwrap());
    }
    out
}

#[test]
fn weyl_commutator_normal_form() {
    let alg = FilteredPBWAlgebra::new(Mode::Weyl, 1, 1).unwrap();
    // D1*x1 = x1*D1 + 1.
    let got = alg.normal_order(&[Token::Gen(0), Token::Base(0)]);
    let mut expect = AlgebraElement::term(DExp::gen(0), Poly::var(0));
    expect.add_term(DExp::unit(), Poly::one());
    assert_eq!(got, expect);
    // The oracle agrees on every sample polynomial.
    for f in sample_polys(1) {
        assert_eq!(
            act_elem(&alg, &got, &f),
            oracle_act_word(Mode::Weyl, &[Token::Gen(0), Token::Base(0)], &f)
        );
    }
}

#[test]
fn rees_commutator_normal_form() {
    let alg = FilteredPBWAlgebra::new(Mode::Rees, 1, 1).unwrap();
    // D1*x1 = x1*D1 + l.
    let got = alg.normal_order(&[Token::Gen(0), Token::Base(0)]);
    let mut expect = AlgebraElement::term(DExp::gen(0), Poly::var(0));
    expect.add_term(DExp::unit(), Poly::lambda());
    assert_eq!(got, expect);
}

#[test]
fn poly_mode_commutes() {
    let alg = FilteredPBWAlgebra::new(Mode::Poly, 1, 1).unwrap();
    let got = alg.normal_order(&[Token::Gen(0), Token::Base(0)]);
    assert_eq!(got, AlgebraElement::term(DExp::gen(0), Poly::var(0)));
}

#[test]
fn rees_action_on_cube() {
    let alg = FilteredPBWAlgebra::new(Mode::Rees, 1, 1).unwrap();
    // D1^2 acting on x1^3 gives 6 l^2 x1, twice l * d/dx1.
    let d2 = alg.multiply(&alg.gen(0), &alg.gen(0));
    let acted = alg.act_standard(&d2, &Poly::var(0).pow(3));
    assert_eq!(acted, Poly::parse("6*l^2*x1").unwrap());
    let via_oracle =
        oracle_act_word(Mode::Rees, &[Token::Gen(0), Token::Gen(0)], &Poly::var(0).pow(3));
    assert_eq!(acted, via_oracle);
}

#[test]
fn random_words_match_oracle() {
    // 200 random words per mode; the normal-ordered product must act exactly
    // like the raw word does.
    for mode in [Mode::Poly, Mode::Weyl, Mode::Rees] {
        let alg = FilteredPBWAlgebra::new(mode, 2, 2).unwrap();
        let mut rng = rng_from_seed(11);
        for _ in 0..200 {
            let len = rng.gen_range(1..=5);
            let word: Vec<Token> = (0..len)
                .map(|_| match rng.gen_range(0..4) {
                    0 => Token::Gen(rng.gen_range(0..2)),
                    1 => Token::Base(rng.gen_range(0..2)),
                    2 if mode == Mode::Rees => Token::Lambda,
                    _ => Token::Scalar(wmc_core::scalar::rat(rng.gen_range(-3..=3), 1)),
                })
                .collect();
            let elem = alg.normal_order(&word);
            for f in sample_polys(2) {
                assert_eq!(
                    act_elem(&alg, &elem, &f),
                    oracle_act_word(mode, &word, &f),
                    "word {word:?} disagrees with oracle on {f}"
                );
            }
        }
    }
}

#[test]
fn multiplication_is_associative() {
    // 200 random triples of level <= 3 elements in each mode.
    for mode in [Mode::Poly, Mode::Weyl, Mode::Rees] {
        let alg = FilteredPBWAlgebra::new(mode, 2, 2).unwrap();
        let mut rng = rng_from_seed(23);
        for _ in 0..200 {
            let u = random_algebra_element(&mut rng, &alg, 3, 2, 2);
            let v = random_algebra_element(&mut rng, &alg, 3, 2, 2);
            let w = random_algebra_element(&mut rng, &alg, 3, 2, 2);
            let left = alg.multiply(&alg.multiply(&u, &v), &w);
            let right = alg.multiply(&u, &alg.multiply(&v, &w));
            assert_eq!(left, right, "associativity failed in {mode:?}");
        }
    }
}

#[test]
fn action_is_multiplicative() {
    for mode in [Mode::Poly, Mode::Weyl, Mode::Rees] {
        let alg = FilteredPBWAlgebra::new(mode, 2, 2).unwrap();
        let mut rng = rng_from_seed(37);
        for _ in 0..100 {
            let u = random_algebra_element(&mut rng, &alg, 2, 2, 2);
            let v = random_algebra_element(&mut rng, &alg, 2, 2, 2);
            let f = random_poly(&mut rng, 2, 3, mode == Mode::Rees, 3);
            let via_product = alg.act_standard(&alg.multiply(&u, &v), &f);
            let via_composition = alg.act_standard(&u, &alg.act_standard(&v, &f));
            assert_eq!(via_product, via_composition);
        }
    }
}

#[test]
fn filtration_is_multiplicative() {
    for mode in [Mode::Poly, Mode::Weyl, Mode::Rees] {
        let alg = FilteredPBWAlgebra::new(mode, 2, 2).unwrap();
        let mut rng = rng_from_seed(41);
        for _ in 0..100 {
            let u = random_algebra_element(&mut rng, &alg, 3, 2, 2);
            let v = random_algebra_element(&mut rng, &alg, 3, 2, 2);
            let p = alg.multiply(&u, &v);
            if let (Some(lu), Some(lv), Some(lp)) = (u.level(), v.level(), p.level()) {
                assert!(lp <= lu + lv, "filtration violated: {lp} > {lu} + {lv}");
            }
        }
    }
}

#[test]
fn weyl_acts_faithfully_on_capped_window() {
    // In weyl mode an element of level <= 2 with coefficient degree <= 2 is
    // recovered from its action on monomials of degree <= 4: if two elements
    // act identically there, they are equal.
    let alg = FilteredPBWAlgebra::new(Mode::Weyl, 1, 1).unwrap();
    let mut rng = rng_from_seed(43);
    let monomials: Vec<Poly> = (0..=4u32).map(|k| Poly::var(0).pow(k)).collect();
    for _ in 0..50 {
        let u = random_algebra_element(&mut rng, &alg, 2, 2, 3);
        let v = random_algebra_element(&mut rng, &alg, 2, 2, 3);
        let same_action =
            monomials.iter().all(|f| alg.act_standard(&u, f) == alg.act_standard(&v, f));
        assert_eq!(same_action, u == v, "action on the capped window must separate elements");
    }
}

#[test]
fn coproduct_of_generators() {
    let alg = FilteredPBWAlgebra::new(Mode::Weyl, 1, 1).unwrap();
    // Delta(D1) = D1 (x) 1 + 1 (x) D1.
    let pairs = alg.delta_coproduct(&alg.gen(0), 4);
    let canon = alg.tensor_canonical_left(&pairs);
    assert_eq!(canon.len(), 2);
    assert_eq!(canon.get(&(DExp::gen(0), DExp::unit())), Some(&Poly::one()));
    assert_eq!(canon.get(&(DExp::unit(), DExp::gen(0))), Some(&Poly::one()));
    // Delta(D1^2) = D1^2 (x) 1 + 2 D1 (x) D1 + 1 (x) D1^2.
    let d2 = alg.multiply(&alg.gen(0), &alg.gen(0));
    let canon2 = alg.tensor_canonical_left(&alg.delta_coproduct(&d2, 4));
    let sq = DExp::from_vec(vec![2]);
    assert_eq!(canon2.get(&(sq.clone(), DExp::unit())), Some(&Poly::one()));
    assert_eq!(canon2.get(&(DExp::gen(0), DExp::gen(0))), Some(&Poly::parse("2").unwrap()));
    assert_eq!(canon2.get(&(DExp::unit(), sq)), Some(&Poly::one()));
}

#[test]
fn coproduct_satisfies_leibniz_duality() {
    // act(u, f*g) = sum act(psi_j, f) * act(eta_j, g) over the coproduct pairs.
    for mode in [Mode::Poly, Mode::Weyl, Mode::Rees] {
        let alg = FilteredPBWAlgebra::new(mode, 2, 2).unwrap();
        let mut rng = rng_from_seed(47);
        for _ in 0..100 {
            let u = random_algebra_element(&mut rng, &alg, 3, 2, 2);
            let f = random_poly(&mut rng, 2, 2, false, 2);
            let g = random_poly(&mut rng, 2, 2, false, 2);
            let level = u.level().unwrap_or(0);
            let lhs = alg.act_standard(&u, &f.mul(&g));
            let mut rhs = Poly::zero();
            for (psi, eta) in alg.delta_coproduct(&u, level) {
                rhs = rhs.add(&alg.act_standard(&psi, &f).mul(&alg.act_standard(&eta, &g)));
            }
            assert_eq!(lhs, rhs, "duality failed in {mode:?} for {u}");
        }
    }
}

#[test]
fn coproduct_lands_in_equalized_submodule() {
    for mode in [Mode::Weyl, Mode::Rees] {
        let alg = FilteredPBWAlgebra::new(mode, 2, 2).unwrap();
        let mut rng = rng_from_seed(53);
        for _ in 0..50 {
            let u = random_algebra_element(&mut rng, &alg, 3, 2, 2);
            let a = random_poly(&mut rng, 2, 2, false, 2);
            let level = u.level().unwrap_or(0);
            let pairs = alg.delta_coproduct(&u, level);
            let defect = alg.delta_equalizer_defect(&pairs, &a);
            assert!(defect.is_empty(), "equalizer defect {defect:?} for {u} against {a}");
        }
    }
}

#[test]
fn coproduct_is_coassociative_on_words() {
    // (Delta (x) 1) Delta = (1 (x) Delta) Delta on basis words, expanded into
    // canonical three-slot tensors.
    let alg = FilteredPBWAlgebra::new(Mode::Weyl, 2, 2).unwrap();
    for alpha in [DExp::gen(0), DExp::from_vec(vec![2]), DExp::from_vec(vec![1, 2])] {
        let u = AlgebraElement::term(alpha.clone(), Poly::one());
        let lvl = alpha.level();
        let mut left: Vec<(DExp, DExp, DExp)> = Vec::new();
        let mut left_coeff: Vec<Poly> = Vec::new();
        for (p, q) in alg.delta_coproduct(&u, lvl) {
            for (pp, pq) in alg.delta_coproduct(&p, lvl) {
                for ((a, b), c1) in alg.tensor_canonical_left(&[(pp, pq)]) {
                    for (g, c2) in q.terms() {
                        left.push((a.clone(), b.clone(), g.clone()));
                        left_coeff.push(c1.mul(c2));
                    }
                }
            }
        }
        let mut right: Vec<(DExp, DExp, DExp)> = Vec::new();
        let mut right_coeff: Vec<Poly> = Vec::new();
        for (p, q) in alg.delta_coproduct(&u, lvl) {
            for (qp, qq) in alg.delta_coproduct(&q, lvl) {
                for ((a, b), c1) in alg.tensor_canonical_left(&[(p.clone(), qp)]) {
                    for (g, c2) in qq.terms() {
                        right.push((a.clone(), b.clone(), g.clone()));
                        right_coeff.push(c1.mul(c2));
                    }
                }
            }
        }
        let collect = |keys: Vec<(DExp, DExp, DExp)>, coeffs: Vec<Poly>| {
            let mut m: std::collections::BTreeMap<(DExp, DExp, DExp), Poly> = Default::default();
            for (k, c) in keys.into_iter().zip(coeffs) {
                let slot = m.entry(k.clone()).or_insert_with(Poly::zero);
                *slot = slot.add(&c);
                if slot.is_zero() {
                    m.remove(&k);
                }
            }
            m
        };
        assert_eq!(collect(left, left_coeff), collect(right, right_coeff));
    }
}

#[test]
fn rees_specialization_commutes_with_multiplication() {
    let rees = FilteredPBWAlgebra::new(Mode::Rees, 2, 2).unwrap();
    let mut rng = rng_from_seed(59);
    for _ in 0..50 {
        let u = random_algebra_element(&mut rng, &rees, 2, 2, 2);
        let v = random_algebra_element(&mut rng, &rees, 2, 2, 2);
        let product = rees.multiply(&u, &v);
        for value in [rat_int(1), rat_int(0)] {
            let (target, u_s) = rees.rees_specialize(&u, &value).unwrap();
            let (_, v_s) = rees.rees_specialize(&v, &value).unwrap();
            let (_, p_s) = rees.rees_specialize(&product, &value).unwrap();
            assert_eq!(target.multiply(&u_s, &v_s), p_s);
            assert_eq!(
                target.mode,
                if value == rat_int(1) { Mode::Weyl } else { Mode::Poly }
            );
        }
    }
}

#[test]
fn element_validation_catches_mismatches() {
    let alg = FilteredPBWAlgebra::new(Mode::Weyl, 1, 1).unwrap();
    let bad_gen = AlgebraElement::term(DExp::from_vec(vec![0, 1]), Poly::one());
    assert!(alg.validate_element(&bad_gen).is_err());
    let bad_var = AlgebraElement::term(DExp::unit(), Poly::var(3));
    assert!(alg.validate_element(&bad_var).is_err());
    let bad_lambda = AlgebraElement::term(DExp::unit(), Poly::lambda());
    assert!(alg.validate_element(&bad_lambda).is_err());
    assert!(alg.validate_element(&alg.gen(0)).is_ok());
    assert!(FilteredPBWAlgebra::new(Mode::Weyl, 1, 2).is_err());
}
