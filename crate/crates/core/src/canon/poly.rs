//! Sparse multivariate polynomials and rational functions over `Q`.
//!
//! Variables are either symbols or opaque atoms such as `sin(t)`. Rational
//! functions are kept with the gcd of numerator and denominator cancelled
//! and a monic denominator, so equal values over the same variables have
//! equal representations.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use super::Atom;
use crate::expr::{Rational, Symbol};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    Sym(Symbol),
    Atom(Arc<Atom>),
}

/// A power product, sorted by variable with no zero exponents.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monomial(Vec<(Var, u32)>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn var(v: Var, k: u32) -> Self {
        if k == 0 {
            Monomial::one()
        } else {
            Monomial(vec![(v, k)])
        }
    }

    pub fn factors(&self) -> &[(Var, u32)] {
        &self.0
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn degree(&self) -> u64 {
        self.0.iter().map(|(_, k)| u64::from(*k)).sum()
    }

    pub fn exponent(&self, v: &Var) -> u32 {
        self.0
            .iter()
            .find(|(w, _)| w == v)
            .map(|(_, k)| *k)
            .unwrap_or(0)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut out = Vec::with_capacity(self.0.len() + other.0.len());
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].0.cmp(&other.0[j].0) {
                Ordering::Less => {
                    out.push(self.0[i].clone());
                    i += 1;
                }
                Ordering::Greater => {
                    out.push(other.0[j].clone());
                    j += 1;
                }
                Ordering::Equal => {
                    out.push((self.0[i].0.clone(), self.0[i].1 + other.0[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.0[i..]);
        out.extend_from_slice(&other.0[j..]);
        Monomial(out)
    }

    /// `self / other` if `other` divides `self`.
    pub fn div(&self, other: &Monomial) -> Option<Monomial> {
        let mut out = Vec::with_capacity(self.0.len());
        let mut j = 0;
        for (v, k) in &self.0 {
            if j < other.0.len() && other.0[j].0 < *v {
                return None;
            }
            if j < other.0.len() && other.0[j].0 == *v {
                let kk = other.0[j].1;
                if kk > *k {
                    return None;
                }
                if kk < *k {
                    out.push((v.clone(), k - kk));
                }
                j += 1;
            } else {
                out.push((v.clone(), *k));
            }
        }
        (j == other.0.len()).then_some(Monomial(out))
    }

    /// Splits off the power of `v`.
    pub fn split(&self, v: &Var) -> (u32, Monomial) {
        let mut k = 0;
        let mut rest = Vec::with_capacity(self.0.len());
        for (w, e) in &self.0 {
            if w == v {
                k = *e;
            } else {
                rest.push((w.clone(), *e));
            }
        }
        (k, Monomial(rest))
    }

    /// Graded order: total degree first, then the larger exponent on the
    /// first differing variable.
    pub fn grlex_cmp(&self, other: &Monomial) -> Ordering {
        self.degree().cmp(&other.degree()).then_with(|| {
            let (mut i, mut j) = (0, 0);
            loop {
                match (self.0.get(i), other.0.get(j)) {
                    (None, None) => return Ordering::Equal,
                    (Some(_), None) => return Ordering::Greater,
                    (None, Some(_)) => return Ordering::Less,
                    (Some((a, ka)), Some((b, kb))) => match a.cmp(b) {
                        Ordering::Less => return Ordering::Greater,
                        Ordering::Greater => return Ordering::Less,
                        Ordering::Equal => {
                            if ka != kb {
                                return ka.cmp(kb);
                            }
                            i += 1;
                            j += 1;
                        }
                    },
                }
            }
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Poly {
    terms: BTreeMap<Monomial, Rational>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly::default()
    }

    pub fn one() -> Self {
        Poly::constant(Rational::one())
    }

    pub fn constant(q: Rational) -> Self {
        let mut p = Poly::zero();
        if !q.is_zero() {
            p.terms.insert(Monomial::one(), q);
        }
        p
    }

    pub fn var(v: Var) -> Self {
        Poly::term(Monomial::var(v, 1), Rational::one())
    }

    pub fn term(m: Monomial, c: Rational) -> Self {
        let mut p = Poly::zero();
        if !c.is_zero() {
            p.terms.insert(m, c);
        }
        p
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (Monomial, Rational)>) -> Self {
        let mut p = Poly::zero();
        for (m, c) in terms {
            p.add_term(m, c);
        }
        p
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Rational)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_one(&self) -> bool {
        self.as_constant().is_some_and(|c| c.is_one())
    }

    pub fn as_constant(&self) -> Option<Rational> {
        match self.terms.len() {
            0 => Some(Rational::zero()),
            1 => {
                let (m, c) = self.terms.iter().next().unwrap();
                m.is_one().then(|| c.clone())
            }
            _ => None,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.as_constant().is_some()
    }

    /// The single term of a monomial polynomial.
    pub fn as_term(&self) -> Option<(&Monomial, &Rational)> {
        if self.terms.len() == 1 {
            self.terms.iter().next()
        } else {
            None
        }
    }

    fn add_term(&mut self, m: Monomial, c: Rational) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if e.get().is_zero() {
                    e.remove();
                }
            }
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), -c.clone());
        }
        out
    }

    pub fn neg(&self) -> Poly {
        Poly {
            terms: self.terms.iter().map(|(m, c)| (m.clone(), -c.clone())).collect(),
        }
    }

    pub fn scale(&self, q: &Rational) -> Poly {
        if q.is_zero() {
            return Poly::zero();
        }
        Poly {
            terms: self.terms.iter().map(|(m, c)| (m.clone(), c * q)).collect(),
        }
    }

    pub fn mul_term(&self, m: &Monomial, q: &Rational) -> Poly {
        if q.is_zero() {
            return Poly::zero();
        }
        Poly {
            terms: self.terms.iter().map(|(n, c)| (n.mul(m), c * q)).collect(),
        }
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            for (n, d) in &other.terms {
                out.add_term(m.mul(n), c * d);
            }
        }
        out
    }

    pub fn pow(&self, k: u32) -> Poly {
        let mut result = Poly::one();
        let mut base = self.clone();
        let mut k = k;
        while k > 0 {
            if k & 1 == 1 {
                result = result.mul(&base);
            }
            k >>= 1;
            if k > 0 {
                base = base.mul(&base);
            }
        }
        result
    }

    /// Leading term under [`Monomial::grlex_cmp`].
    pub fn leading(&self) -> Option<(&Monomial, &Rational)> {
        self.terms.iter().max_by(|a, b| a.0.grlex_cmp(b.0))
    }

    pub fn leading_coeff(&self) -> Rational {
        self.leading().map(|(_, c)| c.clone()).unwrap_or_else(Rational::zero)
    }

    pub fn monic(&self) -> Poly {
        match self.leading() {
            None => Poly::zero(),
            Some((_, c)) => {
                let inv = c.recip();
                self.scale(&inv)
            }
        }
    }

    pub fn vars(&self) -> BTreeSet<Var> {
        self.terms
            .keys()
            .flat_map(|m| m.0.iter().map(|(v, _)| v.clone()))
            .collect()
    }

    pub fn degree_in(&self, v: &Var) -> u32 {
        self.terms.keys().map(|m| m.exponent(v)).max().unwrap_or(0)
    }

    /// Coefficients in `v`, indexed by degree.
    pub fn coeffs_in(&self, v: &Var) -> Vec<Poly> {
        let mut out = vec![Poly::zero(); self.degree_in(v) as usize + 1];
        for (m, c) in &self.terms {
            let (k, rest) = m.split(v);
            out[k as usize].add_term(rest, c.clone());
        }
        out
    }

    pub fn from_coeffs(v: &Var, coeffs: &[Poly]) -> Poly {
        let mut out = Poly::zero();
        for (k, c) in coeffs.iter().enumerate() {
            let vk = Monomial::var(v.clone(), k as u32);
            for (m, q) in &c.terms {
                out.add_term(m.mul(&vk), q.clone());
            }
        }
        out
    }

    /// `self / d` when `d` divides `self` exactly.
    pub fn div_exact(&self, d: &Poly) -> Option<Poly> {
        let (lm, lc) = d.leading()?;
        let (lm, lc) = (lm.clone(), lc.clone());
        let mut r = self.clone();
        let mut q = Poly::zero();
        while let Some((rm, rc)) = r.leading() {
            let m = rm.div(&lm)?;
            let c = rc / &lc;
            r = r.sub(&d.mul_term(&m, &c));
            q.add_term(m, c);
        }
        Some(q)
    }

    /// Exponents of `v` shared by every term.
    pub fn min_exponent(&self, v: &Var) -> u32 {
        self.terms.keys().map(|m| m.exponent(v)).min().unwrap_or(0)
    }

    /// Substitutes each variable by `f(var)` where `f` returns `Some`.
    pub fn map_vars<T>(
        &self,
        one: T,
        from_const: impl Fn(&Rational) -> T,
        mut factor: impl FnMut(&Var, u32) -> T,
        mul: impl Fn(T, T) -> T,
        add: impl Fn(T, T) -> T,
        zero: T,
    ) -> T
    where
        T: Clone,
    {
        let mut acc = zero;
        for (m, c) in &self.terms {
            let mut term = from_const(c);
            for (v, k) in &m.0 {
                term = mul(term, factor(v, *k));
            }
            let _ = &one;
            acc = add(acc, term);
        }
        acc
    }
}

/// Greatest common divisor, normalised to leading coefficient 1.
pub fn gcd(a: &Poly, b: &Poly) -> Poly {
    if a.is_zero() {
        return b.monic();
    }
    if b.is_zero() {
        return a.monic();
    }
    if a.is_constant() || b.is_constant() {
        return Poly::one();
    }
    if let (Some(ta), Some(tb)) = (a.as_term(), b.as_term()) {
        return Poly::term(monomial_gcd(ta.0, tb.0), Rational::one());
    }
    let mut vars = a.vars();
    vars.extend(b.vars());
    let v = vars.into_iter().next_back().unwrap();
    let (da, db) = (a.degree_in(&v), b.degree_in(&v));
    if da == 0 {
        return gcd(a, &content_in(b, &v));
    }
    if db == 0 {
        return gcd(&content_in(a, &v), b);
    }
    let ca = content_in(a, &v);
    let cb = content_in(b, &v);
    let pa = a.div_exact(&ca).expect("content divides");
    let pb = b.div_exact(&cb).expect("content divides");
    let c = gcd(&ca, &cb);
    let g = primitive_prs(pa, pb, &v);
    c.mul(&g).monic()
}

fn monomial_gcd(a: &Monomial, b: &Monomial) -> Monomial {
    let mut out = Vec::new();
    for (v, k) in &a.0 {
        let kb = b.exponent(v);
        if kb > 0 {
            out.push((v.clone(), (*k).min(kb)));
        }
    }
    Monomial(out)
}

fn content_in(p: &Poly, v: &Var) -> Poly {
    let mut g = Poly::zero();
    for c in p.coeffs_in(v) {
        if c.is_zero() {
            continue;
        }
        g = gcd(&g, &c);
        if g.is_one() {
            break;
        }
    }
    g
}

fn primitive_part(p: &Poly, v: &Var) -> Poly {
    let c = content_in(p, v);
    p.div_exact(&c).expect("content divides").monic()
}

fn primitive_prs(a: Poly, b: Poly, v: &Var) -> Poly {
    let (mut a, mut b) = if a.degree_in(v) >= b.degree_in(v) {
        (a, b)
    } else {
        (b, a)
    };
    loop {
        let r = pseudo_rem(&a, &b, v);
        if r.is_zero() {
            return primitive_part(&b, v);
        }
        if r.degree_in(v) == 0 {
            return Poly::one();
        }
        a = b;
        b = primitive_part(&r, v);
    }
}

fn pseudo_rem(a: &Poly, b: &Poly, v: &Var) -> Poly {
    let bc = b.coeffs_in(v);
    let db = bc.len() - 1;
    let lb = &bc[db];
    let mut r = a.coeffs_in(v);
    trim(&mut r);
    while r.len() > db && !(r.len() == 1 && r[0].is_zero()) {
        let shift = r.len() - 1 - db;
        let lr = r.last().unwrap().clone();
        for c in r.iter_mut() {
            *c = c.mul(lb);
        }
        for (i, c) in bc.iter().enumerate() {
            r[i + shift] = r[i + shift].sub(&c.mul(&lr));
        }
        trim(&mut r);
    }
    Poly::from_coeffs(v, &r)
}

fn trim(coeffs: &mut Vec<Poly>) {
    while coeffs.len() > 1 && coeffs.last().is_some_and(|c| c.is_zero()) {
        coeffs.pop();
    }
}

/// A quotient of polynomials with no common factor and monic denominator.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RatFunc {
    num: Poly,
    den: Poly,
}

impl RatFunc {
    pub fn zero() -> Self {
        RatFunc::from_poly(Poly::zero())
    }

    pub fn one() -> Self {
        RatFunc::constant(Rational::one())
    }

    pub fn constant(q: Rational) -> Self {
        RatFunc::from_poly(Poly::constant(q))
    }

    pub fn integer(n: i64) -> Self {
        RatFunc::constant(Rational::from_integer(BigInt::from(n)))
    }

    pub fn var(v: Var) -> Self {
        RatFunc::from_poly(Poly::var(v))
    }

    pub fn from_poly(p: Poly) -> Self {
        RatFunc {
            num: p,
            den: Poly::one(),
        }
    }

    /// `num / den`, or `None` when `den` is zero.
    pub fn new(num: Poly, den: Poly) -> Option<Self> {
        if den.is_zero() {
            return None;
        }
        if num.is_zero() {
            return Some(RatFunc::zero());
        }
        if let Some(c) = den.as_constant() {
            return Some(RatFunc::from_poly(num.scale(&c.recip())));
        }
        let g = gcd(&num, &den);
        let (num, den) = if g.is_one() {
            (num, den)
        } else {
            (
                num.div_exact(&g).expect("gcd divides"),
                den.div_exact(&g).expect("gcd divides"),
            )
        };
        let lc = den.leading_coeff().recip();
        Some(RatFunc {
            num: num.scale(&lc),
            den: den.scale(&lc),
        })
    }

    pub fn num(&self) -> &Poly {
        &self.num
    }

    pub fn den(&self) -> &Poly {
        &self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.den.is_one() && self.num.is_one()
    }

    pub fn as_constant(&self) -> Option<Rational> {
        if self.den.is_one() {
            self.num.as_constant()
        } else {
            None
        }
    }

    pub fn as_poly(&self) -> Option<&Poly> {
        self.den.is_one().then_some(&self.num)
    }

    pub fn size(&self) -> usize {
        self.num.len() + self.den.len()
    }

    pub fn neg(&self) -> RatFunc {
        RatFunc {
            num: self.num.neg(),
            den: self.den.clone(),
        }
    }

    pub fn add(&self, other: &RatFunc) -> RatFunc {
        if self.den == other.den {
            return RatFunc::new(self.num.add(&other.num), self.den.clone()).unwrap();
        }
        let num = self.num.mul(&other.den).add(&other.num.mul(&self.den));
        RatFunc::new(num, self.den.mul(&other.den)).unwrap()
    }

    pub fn sub(&self, other: &RatFunc) -> RatFunc {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &RatFunc) -> RatFunc {
        if self.den.is_one() && other.den.is_one() {
            return RatFunc::from_poly(self.num.mul(&other.num));
        }
        RatFunc::new(self.num.mul(&other.num), self.den.mul(&other.den)).unwrap()
    }

    pub fn recip(&self) -> Option<RatFunc> {
        RatFunc::new(self.den.clone(), self.num.clone())
    }

    pub fn div(&self, other: &RatFunc) -> Option<RatFunc> {
        Some(self.mul(&other.recip()?))
    }

    pub fn scale(&self, q: &Rational) -> RatFunc {
        RatFunc::new(self.num.scale(q), self.den.clone()).unwrap()
    }

    /// Integer power; `None` for a negative power of zero.
    pub fn powi(&self, k: i64) -> Option<RatFunc> {
        let e = u32::try_from(k.unsigned_abs()).ok()?;
        let p = RatFunc {
            num: self.num.pow(e),
            den: self.den.pow(e),
        };
        if k < 0 {
            p.recip()
        } else {
            Some(p)
        }
    }

    /// Sign of the leading numerator coefficient: the representative of
    /// `{f, -f}` with positive sign is used for odd and even functions.
    pub fn is_negative(&self) -> bool {
        self.num.leading_coeff().is_negative()
    }
}
