//! Sparse multivariate polynomials over the rationals in base variables
//! x1..xd plus one distinguished central variable l (printed as `l`).
//!
//! Terms are kept in graded-lexicographic order: higher total degree first,
//! ties broken by exponents of x1, x2, ... and finally l.

use crate::scalar::{parse_rational, Rational};
use num::{One, Zero};
use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

/// Monomial: exponents of the base variables (trailing zeros trimmed) and of l.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Mono {
    pub xs: Vec<u32>,
    pub lambda: u32,
}

impl Mono {
    pub fn unit() -> Self {
        Mono { xs: Vec::new(), lambda: 0 }
    }

    pub fn var(i: usize) -> Self {
        let mut xs = vec![0; i + 1];
        xs[i] = 1;
        Mono { xs, lambda: 0 }
    }

    pub fn lambda_var() -> Self {
        Mono { xs: Vec::new(), lambda: 1 }
    }

    fn trim(mut self) -> Self {
        while self.xs.last() == Some(&0) {
            self.xs.pop();
        }
        self
    }

    pub fn total_degree(&self) -> u32 {
        self.xs.iter().sum::<u32>() + self.lambda
    }

    pub fn exp(&self, i: usize) -> u32 {
        self.xs.get(i).copied().unwrap_or(0)
    }

    fn mul(&self, other: &Mono) -> Mono {
        let n = self.xs.len().max(other.xs.len());
        let xs = (0..n).map(|i| self.exp(i) + other.exp(i)).collect();
        Mono { xs, lambda: self.lambda + other.lambda }
    }
}

impl Ord for Mono {
    fn cmp(&self, other: &Self) -> Ordering {
        let d = self.total_degree().cmp(&other.total_degree());
        if d != Ordering::Equal {
            return d;
        }
        let n = self.xs.len().max(other.xs.len());
        for i in 0..n {
            let c = self.exp(i).cmp(&other.exp(i));
            if c != Ordering::Equal {
                return c;
            }
        }
        self.lambda.cmp(&other.lambda)
    }
}

impl PartialOrd for Mono {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Sparse polynomial; invariant: no zero coefficients, all keys trimmed.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct Poly {
    terms: BTreeMap<Mono, Rational>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly { terms: BTreeMap::new() }
    }

    pub fn one() -> Self {
        Poly::constant(Rational::one())
    }

    pub fn constant(c: Rational) -> Self {
        let mut p = Poly::zero();
        if !c.is_zero() {
            p.terms.insert(Mono::unit(), c);
        }
        p
    }

    pub fn var(i: usize) -> Self {
        Poly::from_mono(Mono::var(i), Rational::one())
    }

    pub fn lambda() -> Self {
        Poly::from_mono(Mono::lambda_var(), Rational::one())
    }

    pub fn from_mono(m: Mono, c: Rational) -> Self {
        let mut p = Poly::zero();
        if !c.is_zero() {
            p.terms.insert(m.trim(), c);
        }
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty() || (self.terms.len() == 1 && self.terms.contains_key(&Mono::unit()))
    }

    /// Constant term as a rational.
    pub fn constant_term(&self) -> Rational {
        self.terms.get(&Mono::unit()).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Mono, &Rational)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn total_degree(&self) -> u32 {
        self.terms.keys().map(Mono::total_degree).max().unwrap_or(0)
    }

    /// Largest base-variable index used, if any.
    pub fn max_var_index(&self) -> Option<usize> {
        self.terms.keys().filter(|m| !m.xs.is_empty()).map(|m| m.xs.len() - 1).max()
    }

    pub fn uses_lambda(&self) -> bool {
        self.terms.keys().any(|m| m.lambda > 0)
    }

    fn add_term(&mut self, m: Mono, c: Rational) {
        if c.is_zero() {
            return;
        }
        let m = m.trim();
        let entry = self.terms.entry(m.clone()).or_insert_with(Rational::zero);
        *entry += c;
        if entry.is_zero() {
            self.terms.remove(&m);
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }

    pub fn neg(&self) -> Poly {
        Poly { terms: self.terms.iter().map(|(m, c)| (m.clone(), -c.clone())).collect() }
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &other.terms {
                out.add_term(m1.mul(m2), c1 * c2);
            }
        }
        out
    }

    pub fn scale(&self, c: &Rational) -> Poly {
        if c.is_zero() {
            return Poly::zero();
        }
        Poly { terms: self.terms.iter().map(|(m, k)| (m.clone(), k * c)).collect() }
    }

    pub fn pow(&self, n: u32) -> Poly {
        let mut out = Poly::one();
        for _ in 0..n {
            out = out.mul(self);
        }
        out
    }

    /// Partial derivative with respect to base variable i.
    pub fn partial(&self, i: usize) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            let e = m.exp(i);
            if e == 0 {
                continue;
            }
            let mut xs = m.xs.clone();
            xs[i] -= 1;
            out.add_term(Mono { xs, lambda: m.lambda }, c * Rational::from_integer(e.into()));
        }
        out
    }

    /// Iterated partial derivative by the multi-exponent gamma.
    pub fn partial_multi(&self, gamma: &[u32]) -> Poly {
        let mut out = self.clone();
        for (i, &g) in gamma.iter().enumerate() {
            for _ in 0..g {
                out = out.partial(i);
                if out.is_zero() {
                    return out;
                }
            }
        }
        out
    }

    /// Evaluates at the given base point and l value.
    pub fn eval(&self, point: &[Rational], lambda: &Rational) -> Rational {
        let mut acc = Rational::zero();
        for (m, c) in &self.terms {
            let mut t = c.clone();
            for (i, &e) in m.xs.iter().enumerate() {
                let x = point.get(i).cloned().unwrap_or_else(Rational::zero);
                for _ in 0..e {
                    t *= x.clone();
                }
            }
            for _ in 0..m.lambda {
                t *= lambda.clone();
            }
            acc += t;
        }
        acc
    }

    /// Substitutes a rational value for l, keeping the base variables.
    pub fn subst_lambda(&self, value: &Rational) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            let mut coeff = c.clone();
            for _ in 0..m.lambda {
                coeff *= value.clone();
            }
            out.add_term(Mono { xs: m.xs.clone(), lambda: 0 }, coeff);
        }
        out
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        // Descending order reads naturally: leading term first.
        for (m, c) in self.terms.iter().rev() {
            let neg = c < &Rational::zero();
            let mag = if neg { -c.clone() } else { c.clone() };
            if first {
                if neg {
                    write!(f, "-")?;
                }
                first = false;
            } else if neg {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            let mut factors: Vec<String> = Vec::new();
            if !mag.is_one() || (m.xs.iter().all(|&e| e == 0) && m.lambda == 0) {
                factors.push(mag.to_string());
            }
            for (i, &e) in m.xs.iter().enumerate() {
                match e {
                    0 => {}
                    1 => factors.push(format!("x{}", i + 1)),
                    _ => factors.push(format!("x{}^{}", i + 1, e)),
                }
            }
            match m.lambda {
                0 => {}
                1 => factors.push("l".to_string()),
                e => factors.push(format!("l^{e}")),
            }
            write!(f, "{}", factors.join("*"))?;
        }
        Ok(())
    }
}

struct Parser<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    src: &'a str,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, msg: &str) -> crate::Result<T> {
        Err(crate::Error::Parse(format!("{msg} in polynomial {:?}", self.src)))
    }

    fn skip_ws(&mut self) {
        while matches!(self.chars.peek(), Some(c) if c.is_whitespace()) {
            self.chars.next();
        }
    }

    fn expr(&mut self) -> crate::Result<Poly> {
        self.skip_ws();
        let mut neg = false;
        if let Some(&c) = self.chars.peek() {
            if c == '+' || c == '-' {
                neg = c == '-';
                self.chars.next();
            }
        }
        let mut acc = self.term()?;
        if neg {
            acc = acc.neg();
        }
        loop {
            self.skip_ws();
            match self.chars.peek() {
                Some('+') => {
                    self.chars.next();
                    let t = self.term()?;
                    acc = acc.add(&t);
                }
                Some('-') => {
                    self.chars.next();
                    let t = self.term()?;
                    acc = acc.sub(&t);
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn term(&mut self) -> crate::Result<Poly> {
        let mut acc = self.factor()?;
        loop {
            self.skip_ws();
            match self.chars.peek() {
                Some('*') => {
                    self.chars.next();
                    let fct = self.factor()?;
                    acc = acc.mul(&fct);
                }
                // Juxtaposition of a parenthesized factor also multiplies.
                Some('(') => {
                    let fct = self.factor()?;
                    acc = acc.mul(&fct);
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn factor(&mut self) -> crate::Result<Poly> {
        self.skip_ws();
        let base = match self.chars.peek() {
            Some('(') => {
                self.chars.next();
                let inner = self.expr()?;
                self.skip_ws();
                if self.chars.next() != Some(')') {
                    return self.err("expected ')'");
                }
                inner
            }
            Some('-') => {
                self.chars.next();
                return Ok(self.factor()?.neg());
            }
            Some(c) if c.is_ascii_digit() => {
                let lit = self.number_literal();
                Poly::constant(parse_rational(&lit)?)
            }
            Some(c) if c.is_alphabetic() => {
                let name = self.ident();
                if name == "l" || name == "lambda" {
                    Poly::lambda()
                } else if let Some(rest) = name.strip_prefix('x') {
                    let idx: usize = rest
                        .parse()
                        .map_err(|_| crate::Error::Parse(format!("bad variable {name:?}")))?;
                    if idx == 0 {
                        return self.err("variables are numbered from x1");
                    }
                    Poly::var(idx - 1)
                } else {
                    return self.err(&format!("unknown symbol {name:?}"));
                }
            }
            _ => return self.err("unexpected end of input"),
        };
        self.skip_ws();
        if self.chars.peek() == Some(&'^') {
            self.chars.next();
            self.skip_ws();
            let lit = self.number_literal();
            let exp: u32 =
                lit.parse().map_err(|_| crate::Error::Parse(format!("bad exponent {lit:?}")))?;
            return Ok(base.pow(exp));
        }
        Ok(base)
    }

    fn number_literal(&mut self) -> String {
        let mut out = String::new();
        while matches!(self.chars.peek(), Some(c) if c.is_ascii_digit()) {
            out.push(self.chars.next().unwrap());
        }
        self.skip_ws();
        // Rational literal n/d, only when the slash is followed by a digit.
        let mut lookahead = self.chars.clone();
        if lookahead.next() == Some('/') {
            while matches!(lookahead.peek(), Some(c) if c.is_whitespace()) {
                lookahead.next();
            }
            if matches!(lookahead.peek(), Some(c) if c.is_ascii_digit()) {
                self.chars.next();
                self.skip_ws();
                out.push('/');
                while matches!(self.chars.peek(), Some(c) if c.is_ascii_digit()) {
                    out.push(self.chars.next().unwrap());
                }
            }
        }
        out
    }

    fn ident(&mut self) -> String {
        let mut out = String::new();
        while matches!(self.chars.peek(), Some(c) if c.is_alphanumeric()) {
            out.push(self.chars.next().unwrap());
        }
        out
    }
}

impl Poly {
    /// Parses expressions like "2*x1^2*x2 - 1/3*l + 4".
    pub fn parse(s: &str) -> crate::Result<Poly> {
        let mut p = Parser { chars: s.chars().peekable(), src: s };
        let out = p.expr()?;
        p.skip_ws();
        if p.chars.next().is_some() {
            return Err(crate::Error::Parse(format!("trailing input in polynomial {s:?}")));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{rat, rat_int};

    #[test]
    fn arithmetic_and_ordering() {
        let x = Poly::var(0);
        let y = Poly::var(1);
        let p = x.add(&y).mul(&x.sub(&y));
        let expect = x.mul(&x).sub(&y.mul(&y));
        assert_eq!(p, expect);
        assert_eq!(p.total_degree(), 2);
    }

    #[test]
    fn derivative_and_eval() {
        // d/dx1 (x1^3 x2 + l x1) = 3 x1^2 x2 + l
        let p = Poly::parse("x1^3*x2 + l*x1").unwrap();
        let dp = p.partial(0);
        assert_eq!(dp, Poly::parse("3*x1^2*x2 + l").unwrap());
        // At x1=2, x2=5, l=1/2: 8*5 + 1 = 41.
        let v = p.eval(&[rat_int(2), rat_int(5)], &rat(1, 2));
        assert_eq!(v, rat_int(41));
    }

    #[test]
    fn parse_round_trip() {
        for s in ["2*x1^2*x2 - 1/3*l + 4", "x1", "-x2^3 + 1/2", "0", "l^2 - l"] {
            let p = Poly::parse(s).unwrap();
            let q = Poly::parse(&p.to_string()).unwrap();
            assert_eq!(p, q, "round trip failed for {s}");
        }
    }

    #[test]
    fn lambda_substitution() {
        let p = Poly::parse("l^2*x1 + 2*l + x1").unwrap();
        let at1 = p.subst_lambda(&rat_int(1));
        assert_eq!(at1, Poly::parse("2*x1 + 2").unwrap());
        let at0 = p.subst_lambda(&rat_int(0));
        assert_eq!(at0, Poly::parse("x1").unwrap());
    }
}
