//! Rings as context objects. Elements carry no back-pointer to their ring, so
//! every operation goes through the ring value; this keeps elements small and
//! lets complexes and matrices stay generic over the coefficient ring.

use crate::poly::Poly;
use crate::scalar::Rational;
use num::{One, Zero};
use std::fmt::Debug;

pub trait Ring: Clone + Debug {
    type Elem: Clone + PartialEq + Debug;

    fn zero(&self) -> Self::Elem;
    fn one(&self) -> Self::Elem;
    fn add(&self, a: &Self::Elem, b: &Self::Elem) -> Self::Elem;
    fn neg(&self, a: &Self::Elem) -> Self::Elem;
    fn mul(&self, a: &Self::Elem, b: &Self::Elem) -> Self::Elem;
    fn is_zero(&self, a: &Self::Elem) -> bool;
    fn from_int(&self, n: i64) -> Self::Elem;
    fn describe(&self) -> String;

    fn sub(&self, a: &Self::Elem, b: &Self::Elem) -> Self::Elem {
        self.add(a, &self.neg(b))
    }

    fn is_one(&self, a: &Self::Elem) -> bool {
        *a == self.one()
    }
}

/// Rings whose nonzero elements are invertible; enables exact elimination.
pub trait Field: Ring {
    fn inv(&self, a: &Self::Elem) -> Self::Elem;

    fn div(&self, a: &Self::Elem, b: &Self::Elem) -> Self::Elem {
        self.mul(a, &self.inv(b))
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub struct RationalField;

impl Ring for RationalField {
    type Elem = Rational;

    fn zero(&self) -> Rational {
        Rational::zero()
    }
    fn one(&self) -> Rational {
        Rational::one()
    }
    fn add(&self, a: &Rational, b: &Rational) -> Rational {
        a + b
    }
    fn neg(&self, a: &Rational) -> Rational {
        -a.clone()
    }
    fn mul(&self, a: &Rational, b: &Rational) -> Rational {
        a * b
    }
    fn is_zero(&self, a: &Rational) -> bool {
        a.is_zero()
    }
    fn from_int(&self, n: i64) -> Rational {
        crate::scalar::rat_int(n)
    }
    fn describe(&self) -> String {
        "Q".to_string()
    }
}

impl Field for RationalField {
    fn inv(&self, a: &Rational) -> Rational {
        assert!(!a.is_zero(), "inverse of zero");
        a.recip()
    }
}

/// Polynomial ring Q[x1..xd, l]. `base_vars` is advisory (printing, random
/// points, descriptor validation); arithmetic itself is variable-count free.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct PolyRing {
    pub base_vars: usize,
}

impl PolyRing {
    pub fn new(base_vars: usize) -> Self {
        PolyRing { base_vars }
    }
}

impl Ring for PolyRing {
    type Elem = Poly;

    fn zero(&self) -> Poly {
        Poly::zero()
    }
    fn one(&self) -> Poly {
        Poly::one()
    }
    fn add(&self, a: &Poly, b: &Poly) -> Poly {
        a.add(b)
    }
    fn neg(&self, a: &Poly) -> Poly {
        a.neg()
    }
    fn mul(&self, a: &Poly, b: &Poly) -> Poly {
        a.mul(b)
    }
    fn is_zero(&self, a: &Poly) -> bool {
        a.is_zero()
    }
    fn from_int(&self, n: i64) -> Poly {
        Poly::constant(crate::scalar::rat_int(n))
    }
    fn describe(&self) -> String {
        format!("Q[x1..x{}, l]", self.base_vars)
    }
}
