//! Arbitrary-precision rational scalars and seeded helpers.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, Zero};
use rand::Rng;

pub type Rational = BigRational;

pub fn rat_int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn rat(num: i64, den: i64) -> Rational {
    assert!(den != 0, "zero denominator");
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn is_zero(r: &Rational) -> bool {
    r.is_zero()
}

pub fn is_one(r: &Rational) -> bool {
    r.is_one()
}

/// Parses "n" or "n/d" with optional sign.
pub fn parse_rational(s: &str) -> crate::Result<Rational> {
    let t = s.trim();
    let mk_err = || crate::Error::Parse(format!("bad rational literal: {s:?}"));
    if let Some((n, d)) = t.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| mk_err())?;
        let d: BigInt = d.trim().parse().map_err(|_| mk_err())?;
        if d.is_zero() {
            return Err(mk_err());
        }
        Ok(Rational::new(n, d))
    } else {
        let n: BigInt = t.parse().map_err(|_| mk_err())?;
        Ok(Rational::from_integer(n))
    }
}

/// Small random rational with numerator in [-bound, bound] and denominator in [1, bound].
pub fn random_rational<R: Rng>(rng: &mut R, bound: u32) -> Rational {
    let b = bound.max(1) as i64;
    let num = rng.gen_range(-b..=b);
    let den = rng.gen_range(1..=b);
    rat(num, den)
}

/// Random nonzero rational, useful for evaluation points kept away from 0.
pub fn random_nonzero_rational<R: Rng>(rng: &mut R, bound: u32) -> Rational {
    loop {
        let r = random_rational(rng, bound);
        if !r.is_zero() {
            return r;
        }
    }
}

pub fn rat_abs(r: &Rational) -> Rational {
    r.abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_print_round_trip() {
        for s in ["3", "-4/7", "0", "12/8"] {
            let r = parse_rational(s).unwrap();
            let back = parse_rational(&r.to_string()).unwrap();
            assert_eq!(r, back);
        }
        assert_eq!(parse_rational("12/8").unwrap(), rat(3, 2));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x").is_err());
    }
}
