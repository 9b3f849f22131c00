//! Filtered algebras L over A = Q[x1..xd] generated by pairwise-commuting
//! operators D1..Dm with the rewrite rule [Di, xj] = c * delta_ij, where the
//! central factor c is 0, 1 or l depending on the mode. Elements are kept in
//! left normal form: finite sums a_alpha(x, l) * D^alpha with coefficients on
//! the left. The filtration level of D^alpha is |alpha|; the associated graded
//! algebra is commutative in every mode.

use crate::poly::Poly;
use crate::scalar::{rat_int, Rational};
use num::{BigInt, One, Zero};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Commutative: [Di, xj] = 0, the standard action kills every Di.
    Poly,
    /// [Di, xi] = 1; Di acts as d/dxi.
    Weyl,
    /// [Di, xi] = l with l central; Di acts as l * d/dxi.
    Rees,
}

/// Exponent vector of a normal-form word D^alpha; trailing zeros trimmed.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Default)]
pub struct DExp(pub Vec<u32>);

impl DExp {
    pub fn unit() -> Self {
        DExp(Vec::new())
    }

    pub fn gen(i: usize) -> Self {
        let mut v = vec![0; i + 1];
        v[i] = 1;
        DExp(v)
    }

    pub fn from_vec(mut v: Vec<u32>) -> Self {
        while v.last() == Some(&0) {
            v.pop();
        }
        DExp(v)
    }

    pub fn exp(&self, i: usize) -> u32 {
        self.0.get(i).copied().unwrap_or(0)
    }

    pub fn level(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_unit(&self) -> bool {
        self.0.is_empty()
    }

    pub fn add(&self, other: &DExp) -> DExp {
        let n = self.0.len().max(other.0.len());
        DExp::from_vec((0..n).map(|i| self.exp(i) + other.exp(i)).collect())
    }

    /// Componentwise difference, if self >= other everywhere.
    pub fn checked_sub(&self, other: &DExp) -> Option<DExp> {
        let n = self.0.len().max(other.0.len());
        let mut v = Vec::with_capacity(n);
        for i in 0..n {
            let (a, b) = (self.exp(i), other.exp(i));
            if a < b {
                return None;
            }
            v.push(a - b);
        }
        Some(DExp::from_vec(v))
    }
}

impl Ord for DExp {
    fn cmp(&self, other: &Self) -> Ordering {
        let d = self.level().cmp(&other.level());
        if d != Ordering::Equal {
            return d;
        }
        let n = self.0.len().max(other.0.len());
        for i in 0..n {
            let c = self.exp(i).cmp(&other.exp(i));
            if c != Ordering::Equal {
                return c;
            }
        }
        Ordering::Equal
    }
}

impl PartialOrd for DExp {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Element in left normal form. Addition needs no algebra context; every
/// multiplicative operation goes through a FilteredPBWAlgebra.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct AlgebraElement {
    terms: BTreeMap<DExp, Poly>,
}

impl AlgebraElement {
    pub fn zero() -> Self {
        AlgebraElement { terms: BTreeMap::new() }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn term(alpha: DExp, coeff: Poly) -> Self {
        let mut e = AlgebraElement::zero();
        e.add_term(alpha, coeff);
        e
    }

    pub fn add_term(&mut self, alpha: DExp, coeff: Poly) {
        if coeff.is_zero() {
            return;
        }
        let slot = self.terms.entry(alpha.clone()).or_insert_with(Poly::zero);
        *slot = slot.add(&coeff);
        if slot.is_zero() {
            self.terms.remove(&alpha);
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (a, c) in &other.terms {
            out.add_term(a.clone(), c.clone());
        }
        out
    }

    pub fn neg(&self) -> Self {
        AlgebraElement { terms: self.terms.iter().map(|(a, c)| (a.clone(), c.neg())).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    /// Left multiplication by a coefficient polynomial.
    pub fn scale_poly(&self, p: &Poly) -> Self {
        let mut out = AlgebraElement::zero();
        for (a, c) in &self.terms {
            out.add_term(a.clone(), p.mul(c));
        }
        out
    }

    pub fn scale(&self, r: &Rational) -> Self {
        self.scale_poly(&Poly::constant(r.clone()))
    }

    pub fn terms(&self) -> impl Iterator<Item = (&DExp, &Poly)> {
        self.terms.iter()
    }

    pub fn coeff(&self, alpha: &DExp) -> Poly {
        self.terms.get(alpha).cloned().unwrap_or_else(Poly::zero)
    }

    /// Highest filtration level present (0 for constants, None for zero).
    pub fn level(&self) -> Option<u32> {
        self.terms.keys().map(DExp::level).max()
    }

    /// Drops all terms of filtration level strictly above `level`.
    pub fn truncate_level(&self, level: u32) -> Self {
        AlgebraElement {
            terms: self
                .terms
                .iter()
                .filter(|(a, _)| a.level() <= level)
                .map(|(a, c)| (a.clone(), c.clone()))
                .collect(),
        }
    }

    /// The coefficient of D^0, i.e. the image under the projection to A.
    pub fn constant_coefficient(&self) -> Poly {
        self.coeff(&DExp::unit())
    }
}

impl fmt::Display for AlgebraElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (alpha, coeff) in self.terms.iter().rev() {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            let c = coeff.to_string();
            let needs_parens = c.contains(' ') && !alpha.is_unit();
            if alpha.is_unit() {
                write!(f, "{c}")?;
            } else {
                if needs_parens {
                    write!(f, "({c})")?;
                } else if c != "1" {
                    write!(f, "{c}*")?;
                }
                let mut parts = Vec::new();
                for (i, &e) in alpha.0.iter().enumerate() {
                    match e {
                        0 => {}
                        1 => parts.push(format!("D{}", i + 1)),
                        _ => parts.push(format!("D{}^{}", i + 1, e)),
                    }
                }
                write!(f, "{}", parts.join("*"))?;
            }
        }
        Ok(())
    }
}

/// Word letter for explicit normal ordering.
#[derive(Clone, Debug, PartialEq)]
pub enum Token {
    Gen(usize),
    Base(usize),
    Lambda,
    Scalar(Rational),
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct FilteredPBWAlgebra {
    pub mode: Mode,
    pub base_vars: usize,
    pub gens: usize,
}

fn binom_u(n: u32, k: u32) -> Rational {
    let mut num = BigInt::one();
    let mut den = BigInt::one();
    for i in 0..k {
        num *= BigInt::from(n - i);
        den *= BigInt::from(i + 1);
    }
    Rational::new(num, den)
}

/// Product of componentwise binomial coefficients binom(alpha, gamma).
fn binom_multi(alpha: &DExp, gamma: &DExp) -> Rational {
    let mut out = Rational::one();
    for i in 0..alpha.0.len().max(gamma.0.len()) {
        out *= binom_u(alpha.exp(i), gamma.exp(i));
    }
    out
}

/// All exponent vectors gamma with gamma <= alpha componentwise.
fn sub_exponents(alpha: &DExp) -> Vec<DExp> {
    let mut out = vec![Vec::new()];
    for &a in &alpha.0 {
        let mut next = Vec::with_capacity(out.len() * (a as usize + 1));
        for prefix in &out {
            for g in 0..=a {
                let mut v = prefix.clone();
                v.push(g);
                next.push(v);
            }
        }
        out = next;
    }
    out.into_iter().map(DExp::from_vec).collect()
}

impl FilteredPBWAlgebra {
    pub fn new(mode: Mode, base_vars: usize, gens: usize) -> crate::Result<Self> {
        if matches!(mode, Mode::Weyl | Mode::Rees) && gens > base_vars {
            return Err(crate::Error::Validation(format!(
                "mode pairs Di with xi, so gens ({gens}) must not exceed base_vars ({base_vars})"
            )));
        }
        Ok(FilteredPBWAlgebra { mode, base_vars, gens })
    }

    /// The central factor c with [Di, xi] = c.
    pub fn commut_factor(&self) -> Poly {
        match self.mode {
            Mode::Poly => Poly::zero(),
            Mode::Weyl => Poly::one(),
            Mode::Rees => Poly::lambda(),
        }
    }

    pub fn one(&self) -> AlgebraElement {
        AlgebraElement::term(DExp::unit(), Poly::one())
    }

    pub fn gen(&self, i: usize) -> AlgebraElement {
        assert!(i < self.gens, "generator index out of range");
        AlgebraElement::term(DExp::gen(i), Poly::one())
    }

    pub fn base(&self, j: usize) -> AlgebraElement {
        assert!(j < self.base_vars, "base variable index out of range");
        AlgebraElement::term(DExp::unit(), Poly::var(j))
    }

    pub fn from_poly(&self, p: &Poly) -> AlgebraElement {
        AlgebraElement::term(DExp::unit(), p.clone())
    }

    /// Rejects elements that reference variables or generators outside this
    /// algebra, or use l outside rees mode.
    pub fn validate_element(&self, u: &AlgebraElement) -> crate::Result<()> {
        for (alpha, coeff) in u.terms() {
            if alpha.0.len() > self.gens {
                return Err(crate::Error::AlgebraMismatch(format!(
                    "term uses D{} but the algebra has {} generators",
                    alpha.0.len(),
                    self.gens
                )));
            }
            if let Some(v) = coeff.max_var_index() {
                if v >= self.base_vars {
                    return Err(crate::Error::AlgebraMismatch(format!(
                        "coefficient uses x{} but the algebra has {} base variables",
                        v + 1,
                        self.base_vars
                    )));
                }
            }
            if coeff.uses_lambda() && self.mode != Mode::Rees {
                return Err(crate::Error::AlgebraMismatch(
                    "l only exists in rees mode".into(),
                ));
            }
        }
        Ok(())
    }

    /// Moves D^alpha across a coefficient: D^alpha * b written in left normal
    /// form as a sum of (derivative of b) * D^(alpha - gamma) terms.
    pub fn move_past(&self, alpha: &DExp, b: &Poly) -> Vec<(DExp, Poly)> {
        if alpha.is_unit() || b.is_constant() {
            let c = b.clone();
            if c.is_zero() {
                return Vec::new();
            }
            return vec![(alpha.clone(), c)];
        }
        let c = self.commut_factor();
        let mut out = Vec::new();
        for gamma in sub_exponents(alpha) {
            let lv = gamma.level();
            let coeff = if lv == 0 {
                b.clone()
            } else {
                if c.is_zero() {
                    continue;
                }
                b.partial_multi(&gamma.0).mul(&c.pow(lv)).scale(&binom_multi(alpha, &gamma))
            };
            if coeff.is_zero() {
                continue;
            }
            out.push((alpha.checked_sub(&gamma).expect("gamma <= alpha"), coeff));
        }
        out
    }

    pub fn multiply(&self, u: &AlgebraElement, v: &AlgebraElement) -> AlgebraElement {
        let mut out = AlgebraElement::zero();
        for (alpha, a) in u.terms() {
            for (beta, b) in v.terms() {
                for (delta, coeff) in self.move_past(alpha, b) {
                    out.add_term(delta.add(beta), a.mul(&coeff));
                }
            }
        }
        out
    }

    /// Folds a word of letters into a normal-form element.
    pub fn normal_order(&self, word: &[Token]) -> AlgebraElement {
        let mut acc = self.one();
        for token in word {
            let factor = match token {
                Token::Gen(i) => self.gen(*i),
                Token::Base(j) => self.base(*j),
                Token::Lambda => {
                    assert!(self.mode == Mode::Rees, "l only exists in rees mode");
                    self.from_poly(&Poly::lambda())
                }
                Token::Scalar(r) => self.from_poly(&Poly::constant(r.clone())),
            };
            acc = self.multiply(&acc, &factor);
        }
        acc
    }

    /// Standard action on A: Di acts as c * d/dxi, coefficients multiply.
    pub fn act_standard(&self, u: &AlgebraElement, f: &Poly) -> Poly {
        let c = self.commut_factor();
        let mut out = Poly::zero();
        for (alpha, a) in u.terms() {
            let lv = alpha.level();
            let acted = if lv == 0 {
                f.clone()
            } else if c.is_zero() {
                continue;
            } else {
                f.partial_multi(&alpha.0).mul(&c.pow(lv))
            };
            out = out.add(&a.mul(&acted));
        }
        out
    }

    /// Coproduct by the binomial splitting of each D^alpha; terms of level
    /// above `level` are dropped first, so the result is exact whenever
    /// `level` bounds the element.
    pub fn delta_coproduct(
        &self,
        u: &AlgebraElement,
        level: u32,
    ) -> Vec<(AlgebraElement, AlgebraElement)> {
        let mut out = Vec::new();
        for (alpha, a) in u.truncate_level(level).terms() {
            for beta in sub_exponents(alpha) {
                let gamma = alpha.checked_sub(&beta).expect("beta <= alpha");
                let left = AlgebraElement::term(beta.clone(), a.scale(&binom_multi(alpha, &beta)));
                let right = AlgebraElement::term(gamma, Poly::one());
                out.push((left, right));
            }
        }
        out
    }

    /// Canonical form in the right-left contracted tensor L (x)_{>A<} L (the
    /// tensor used by tensor words): the coefficient of the second factor is
    /// multiplied through the first factor from the right.
    pub fn tensor_canonical_right(
        &self,
        pairs: &[(AlgebraElement, AlgebraElement)],
    ) -> BTreeMap<(DExp, DExp), Poly> {
        let mut out: BTreeMap<(DExp, DExp), Poly> = BTreeMap::new();
        for (u, v) in pairs {
            for (gamma, b) in v.terms() {
                // u (x) b*D^gamma = (u*b) (x) D^gamma over A.
                let ub = self.multiply(u, &self.from_poly(b));
                for (delta, coeff) in ub.terms() {
                    let key = (delta.clone(), gamma.clone());
                    let slot = out.entry(key.clone()).or_insert_with(Poly::zero);
                    *slot = slot.add(coeff);
                    if slot.is_zero() {
                        out.remove(&key);
                    }
                }
            }
        }
        out
    }

    /// Canonical form in the left-left contracted tensor L (x)_{<A<} L (the
    /// coproduct's target): left coefficients of both factors pull out and
    /// multiply, leaving pairs of basis words.
    pub fn tensor_canonical_left(
        &self,
        pairs: &[(AlgebraElement, AlgebraElement)],
    ) -> BTreeMap<(DExp, DExp), Poly> {
        let mut out: BTreeMap<(DExp, DExp), Poly> = BTreeMap::new();
        for (u, v) in pairs {
            for (alpha, a) in u.terms() {
                for (beta, b) in v.terms() {
                    let key = (alpha.clone(), beta.clone());
                    let slot = out.entry(key.clone()).or_insert_with(Poly::zero);
                    *slot = slot.add(&a.mul(b));
                    if slot.is_zero() {
                        out.remove(&key);
                    }
                }
            }
        }
        out
    }

    /// Defect of the equalizing condition sum (psi*a) (x) eta = sum psi (x) (eta*a)
    /// inside the left-left contracted tensor; empty iff the sum of tensors
    /// lies in the equalized submodule for this a.
    pub fn delta_equalizer_defect(
        &self,
        pairs: &[(AlgebraElement, AlgebraElement)],
        a: &Poly,
    ) -> BTreeMap<(DExp, DExp), Poly> {
        let a_elem = self.from_poly(a);
        let left: Vec<_> =
            pairs.iter().map(|(u, v)| (self.multiply(u, &a_elem), v.clone())).collect();
        let right: Vec<_> =
            pairs.iter().map(|(u, v)| (u.clone(), self.multiply(v, &a_elem))).collect();
        let mut lhs = self.tensor_canonical_left(&left);
        let rhs = self.tensor_canonical_left(&right);
        for (k, v) in rhs {
            let slot = lhs.entry(k.clone()).or_insert_with(Poly::zero);
            *slot = slot.sub(&v);
            if slot.is_zero() {
                lhs.remove(&k);
            }
        }
        lhs.retain(|_, v| !v.is_zero());
        lhs
    }

    /// Substitutes l := value. Only 1 (recovering weyl) and 0 (recovering
    /// poly) give one of the named modes, so only those are accepted.
    pub fn rees_specialize(
        &self,
        u: &AlgebraElement,
        value: &Rational,
    ) -> crate::Result<(FilteredPBWAlgebra, AlgebraElement)> {
        if self.mode != Mode::Rees {
            return Err(crate::Error::Validation("specialization starts from rees mode".into()));
        }
        let target_mode = if value == &rat_int(1) {
            Mode::Weyl
        } else if value.is_zero() {
            Mode::Poly
        } else {
            return Err(crate::Error::Validation(
                "specialization target must be l = 1 or l = 0".into(),
            ));
        };
        let target = FilteredPBWAlgebra::new(target_mode, self.base_vars, self.gens)?;
        let mut out = AlgebraElement::zero();
        for (alpha, coeff) in u.terms() {
            out.add_term(alpha.clone(), coeff.subst_lambda(value));
        }
        Ok((target, out))
    }
}

impl crate::ring::Ring for FilteredPBWAlgebra {
    type Elem = AlgebraElement;

    fn zero(&self) -> AlgebraElement {
        AlgebraElement::zero()
    }
    fn one(&self) -> AlgebraElement {
        FilteredPBWAlgebra::one(self)
    }
    fn add(&self, a: &AlgebraElement, b: &AlgebraElement) -> AlgebraElement {
        a.add(b)
    }
    fn neg(&self, a: &AlgebraElement) -> AlgebraElement {
        a.neg()
    }
    fn mul(&self, a: &AlgebraElement, b: &AlgebraElement) -> AlgebraElement {
        self.multiply(a, b)
    }
    fn is_zero(&self, a: &AlgebraElement) -> bool {
        a.is_zero()
    }
    fn from_int(&self, n: i64) -> AlgebraElement {
        AlgebraElement::term(DExp::unit(), Poly::constant(rat_int(n)))
    }
    fn describe(&self) -> String {
        format!("L({:?}, d={}, m={})", self.mode, self.base_vars, self.gens)
    }
}

/// Same elements, reversed product. A map of free left modules over a
/// noncommutative ring is a matrix of right multipliers, and composing two
/// such maps multiplies the matrices over the opposite ring; instantiating
/// the generic matrix code at this wrapper keeps that bookkeeping in one
/// place.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct OppositePBW(pub FilteredPBWAlgebra);

impl crate::ring::Ring for OppositePBW {
    type Elem = AlgebraElement;

    fn zero(&self) -> AlgebraElement {
        AlgebraElement::zero()
    }
    fn one(&self) -> AlgebraElement {
        self.0.one()
    }
    fn add(&self, a: &AlgebraElement, b: &AlgebraElement) -> AlgebraElement {
        a.add(b)
    }
    fn neg(&self, a: &AlgebraElement) -> AlgebraElement {
        a.neg()
    }
    fn mul(&self, a: &AlgebraElement, b: &AlgebraElement) -> AlgebraElement {
        self.0.multiply(b, a)
    }
    fn is_zero(&self, a: &AlgebraElement) -> bool {
        a.is_zero()
    }
    fn from_int(&self, n: i64) -> AlgebraElement {
        AlgebraElement::term(DExp::unit(), Poly::constant(rat_int(n)))
    }
    fn describe(&self) -> String {
        format!("{}^op", self.0.describe())
    }
}
