//! Outward-rounded interval enclosures for sign analysis.
//!
//! Bounds are `f64` with an open/closed flag each. Every operation returns
//! an interval containing all real values the expression takes when its
//! symbols range over their intervals; points where the expression is
//! undefined are ignored, so an enclosure says nothing about definedness.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use num_traits::ToPrimitive;

use crate::expr::{Expr, Func, Rational, Symbol};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub lo_open: bool,
    pub hi_open: bool,
}

/// Ulps of slack for library transcendental functions.
const LIBM_ULPS: u32 = 2;

fn down(x: f64, n: u32) -> f64 {
    (0..n).fold(x, |v, _| v.next_down())
}

fn up(x: f64, n: u32) -> f64 {
    (0..n).fold(x, |v, _| v.next_up())
}

/// `a*b` with `0*inf = 0`, plus whether the product is exact.
fn mul_exact(a: f64, b: f64) -> (f64, bool) {
    if a == 0.0 || b == 0.0 {
        return (0.0, true);
    }
    let p = a * b;
    if !p.is_finite() {
        return (p, true);
    }
    (p, a.mul_add(b, -p) == 0.0)
}

fn add_exact(a: f64, b: f64) -> (f64, bool) {
    let s = a + b;
    if !s.is_finite() {
        return (s, true);
    }
    // TwoSum error term.
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err == 0.0)
}

impl Interval {
    pub const ENTIRE: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
        lo_open: true,
        hi_open: true,
    };

    pub fn new(lo: f64, hi: f64, lo_open: bool, hi_open: bool) -> Self {
        Interval {
            lo,
            hi,
            lo_open: lo_open || lo.is_infinite(),
            hi_open: hi_open || hi.is_infinite(),
        }
    }

    pub fn closed(lo: f64, hi: f64) -> Self {
        Interval::new(lo, hi, false, false)
    }

    pub fn open(lo: f64, hi: f64) -> Self {
        Interval::new(lo, hi, true, true)
    }

    pub fn point(x: f64) -> Self {
        Interval::closed(x, x)
    }

    pub fn positive() -> Self {
        Interval::open(0.0, f64::INFINITY)
    }

    pub fn nonnegative() -> Self {
        Interval::new(0.0, f64::INFINITY, false, true)
    }

    /// Tightest enclosure of an exact rational.
    pub fn from_rational(q: &Rational) -> Self {
        let f = q.to_f64().unwrap_or(f64::NAN);
        if f.is_nan() {
            return Interval::ENTIRE;
        }
        if f.is_finite() && Rational::from_float(f).as_ref() == Some(q) {
            return Interval::point(f);
        }
        Interval::open(f.next_down(), f.next_up())
    }

    pub fn is_entire(&self) -> bool {
        self.lo == f64::NEG_INFINITY && self.hi == f64::INFINITY
    }

    pub fn contains_zero(&self) -> bool {
        let above = self.lo < 0.0 || (self.lo == 0.0 && !self.lo_open);
        let below = self.hi > 0.0 || (self.hi == 0.0 && !self.hi_open);
        above && below
    }

    pub fn is_positive(&self) -> bool {
        self.lo > 0.0 || (self.lo == 0.0 && self.lo_open)
    }

    pub fn is_negative(&self) -> bool {
        self.hi < 0.0 || (self.hi == 0.0 && self.hi_open)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.lo >= 0.0
    }

    pub fn is_nonzero(&self) -> bool {
        self.is_positive() || self.is_negative()
    }

    /// `self ⊆ other`.
    pub fn is_subset_of(&self, other: &Interval) -> bool {
        let lo_ok = self.lo > other.lo || (self.lo == other.lo && (self.lo_open || !other.lo_open));
        let hi_ok = self.hi < other.hi || (self.hi == other.hi && (self.hi_open || !other.hi_open));
        lo_ok && hi_ok
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        let (lo, lo_open) = if self.lo < other.lo {
            (self.lo, self.lo_open)
        } else if other.lo < self.lo {
            (other.lo, other.lo_open)
        } else {
            (self.lo, self.lo_open && other.lo_open)
        };
        let (hi, hi_open) = if self.hi > other.hi {
            (self.hi, self.hi_open)
        } else if other.hi > self.hi {
            (other.hi, other.hi_open)
        } else {
            (self.hi, self.hi_open && other.hi_open)
        };
        Interval::new(lo, hi, lo_open, hi_open)
    }

    pub fn neg(&self) -> Interval {
        Interval::new(-self.hi, -self.lo, self.hi_open, self.lo_open)
    }

    pub fn add(&self, other: &Interval) -> Interval {
        let (lo, lo_exact) = add_exact(self.lo, other.lo);
        let (hi, hi_exact) = add_exact(self.hi, other.hi);
        if lo.is_nan() || hi.is_nan() {
            return Interval::ENTIRE;
        }
        Interval::new(
            if lo_exact { lo } else { lo.next_down() },
            if hi_exact { hi } else { hi.next_up() },
            self.lo_open || other.lo_open,
            self.hi_open || other.hi_open,
        )
    }

    pub fn sub(&self, other: &Interval) -> Interval {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Interval) -> Interval {
        let ends = |iv: &Interval| [(iv.lo, iv.lo_open), (iv.hi, iv.hi_open)];
        let mut lo = (f64::INFINITY, true);
        let mut hi = (f64::NEG_INFINITY, true);
        for (a, ao) in ends(self) {
            for (b, bo) in ends(other) {
                let (p, exact) = mul_exact(a, b);
                let zero_closed = p == 0.0 && ((a == 0.0 && !ao) || (b == 0.0 && !bo));
                let open = if zero_closed { false } else { ao || bo };
                let (pl, ph) = if exact {
                    (p, p)
                } else {
                    (p.next_down(), p.next_up())
                };
                let open_l = open || !exact;
                if pl < lo.0 || (pl == lo.0 && !open_l) {
                    lo = (pl, if pl == lo.0 { lo.1 && open_l } else { open_l });
                }
                if ph > hi.0 || (ph == hi.0 && !open_l) {
                    hi = (ph, if ph == hi.0 { hi.1 && open_l } else { open_l });
                }
            }
        }
        Interval::new(lo.0, hi.0, lo.1, hi.1)
    }

    /// Enclosure of `1/x` over the nonzero part of `self`.
    pub fn recip(&self) -> Interval {
        if self.contains_zero() || (self.lo < 0.0 && self.hi > 0.0) {
            return Interval::ENTIRE;
        }
        let inv = |x: f64, toward_down: bool| -> (f64, bool) {
            if x == 0.0 {
                return (if toward_down { f64::NEG_INFINITY } else { f64::INFINITY }, true);
            }
            let r = 1.0 / x;
            if r.is_infinite() || r == 0.0 {
                return (r, true);
            }
            let exact = r.mul_add(x, -1.0) == 0.0;
            if exact {
                (r, true)
            } else if toward_down {
                (r.next_down(), false)
            } else {
                (r.next_up(), false)
            }
        };
        if self.is_positive() {
            let (lo, le) = inv(self.hi, true);
            let (hi, he) = if self.lo == 0.0 {
                (f64::INFINITY, true)
            } else {
                inv(self.lo, false)
            };
            let lo = if self.hi.is_infinite() { 0.0 } else { lo };
            Interval::new(lo, hi, self.hi_open || !le || self.hi.is_infinite(), self.lo_open || !he)
        } else {
            self.neg().recip().neg()
        }
    }

    pub fn div(&self, other: &Interval) -> Interval {
        self.mul(&other.recip())
    }

    pub fn abs(&self) -> Interval {
        if self.is_nonnegative() {
            *self
        } else if self.is_negative() || self.hi <= 0.0 {
            self.neg()
        } else {
            let (hi, hi_open) = if -self.lo > self.hi {
                (-self.lo, self.lo_open)
            } else if self.hi > -self.lo {
                (self.hi, self.hi_open)
            } else {
                (self.hi, self.hi_open && self.lo_open)
            };
            Interval::new(0.0, hi, false, hi_open)
        }
    }

    pub fn powi(&self, n: i64) -> Interval {
        if n == 0 {
            return Interval::point(1.0);
        }
        if n < 0 {
            return self.powi(-n).recip();
        }
        let base = if n % 2 == 0 { self.abs() } else { *self };
        let mut acc = Interval::point(1.0);
        // Monotone on the chosen base, so repeated multiplication of the
        // endpoints stays tight.
        for _ in 0..n.min(64) {
            acc = acc.mul(&base);
        }
        if n > 64 {
            return monotone(&base, |x| x.powf(n as f64), 4 * LIBM_ULPS);
        }
        acc
    }

    /// Real power with a rational exponent `p/q`, `q > 1`.
    pub fn pow_rational(&self, p: i64, q: i64) -> Interval {
        let odd_root = q % 2 == 1;
        if !odd_root && self.is_negative() {
            return Interval::ENTIRE;
        }
        let clipped = if odd_root {
            *self
        } else {
            Interval::new(self.lo.max(0.0), self.hi, self.lo_open && self.lo >= 0.0, self.hi_open)
        };
        let root = monotone(
            &clipped,
            |x| {
                let r = x.abs().powf(1.0 / q as f64);
                if x < 0.0 {
                    -r
                } else {
                    r
                }
            },
            4 * LIBM_ULPS,
        );
        root.powi(p)
    }

    pub fn exp(&self) -> Interval {
        let r = monotone(self, f64::exp, LIBM_ULPS);
        if r.lo <= 0.0 {
            Interval::new(0.0, r.hi, true, r.hi_open)
        } else {
            r
        }
    }

    pub fn ln(&self) -> Interval {
        if self.hi <= 0.0 {
            return Interval::ENTIRE;
        }
        let clipped = if self.lo <= 0.0 {
            Interval::new(0.0, self.hi, true, self.hi_open)
        } else {
            *self
        };
        monotone(&clipped, f64::ln, LIBM_ULPS)
    }

    pub fn sqrt(&self) -> Interval {
        self.pow_rational(1, 2)
    }

    pub fn arcsin(&self) -> Interval {
        if self.lo > 1.0 || self.hi < -1.0 {
            return Interval::ENTIRE;
        }
        let clipped = Interval::new(
            self.lo.max(-1.0),
            self.hi.min(1.0),
            self.lo_open && self.lo >= -1.0,
            self.hi_open && self.hi <= 1.0,
        );
        let r = monotone(&clipped, f64::asin, LIBM_ULPS);
        Interval::new(r.lo.max(-FRAC_PI_2.next_up()), r.hi.min(FRAC_PI_2.next_up()), r.lo_open, r.hi_open)
    }

    pub fn sin(&self) -> Interval {
        periodic(self, f64::sin, FRAC_PI_2)
    }

    pub fn cos(&self) -> Interval {
        periodic(self, f64::cos, 0.0)
    }

    pub fn tan(&self) -> Interval {
        if !(self.lo.is_finite() && self.hi.is_finite()) || self.hi - self.lo >= PI {
            return Interval::ENTIRE;
        }
        // Branch index of each endpoint between consecutive poles.
        let branch = |x: f64| ((x + FRAC_PI_2) / PI).floor();
        let margin = 1e-9;
        if branch(self.lo - margin) != branch(self.hi + margin) {
            return Interval::ENTIRE;
        }
        monotone(self, f64::tan, 4 * LIBM_ULPS)
    }
}

/// Image under an increasing function, widened by `ulps` at each end.
fn monotone(iv: &Interval, f: impl Fn(f64) -> f64, ulps: u32) -> Interval {
    let eval = |x: f64| -> f64 {
        if x == f64::INFINITY {
            f(f64::MAX).max(f(x))
        } else {
            f(x)
        }
    };
    let lo = eval(iv.lo);
    let hi = eval(iv.hi);
    if lo.is_nan() || hi.is_nan() {
        return Interval::ENTIRE;
    }
    // Every function used here is exact at these points.
    let exact = |x: f64, y: f64| x.is_infinite() || ((x == 0.0 || x == 1.0) && (y == 0.0 || y == 1.0));
    let lo = if exact(iv.lo, lo) { lo } else { down(lo, ulps) };
    let hi = if exact(iv.hi, hi) { hi } else { up(hi, ulps) };
    Interval::new(lo, hi, iv.lo_open, iv.hi_open)
}

/// Image under `sin` or `cos`, where `peak` is the phase of a maximum.
fn periodic(iv: &Interval, f: impl Fn(f64) -> f64, peak: f64) -> Interval {
    let full = Interval::closed(-1.0, 1.0);
    if !(iv.lo.is_finite() && iv.hi.is_finite()) || iv.hi - iv.lo >= 2.0 * PI {
        return full;
    }
    let margin = 1e-9;
    // Extremum locations peak + k*pi; even k are maxima.
    let k_lo = ((iv.lo - margin - peak) / PI).ceil();
    let k_hi = ((iv.hi + margin - peak) / PI).floor();
    let (a, b) = (f(iv.lo), f(iv.hi));
    let mut lo = down(a.min(b), LIBM_ULPS).max(-1.0);
    let mut hi = up(a.max(b), LIBM_ULPS).min(1.0);
    let mut k = k_lo;
    while k <= k_hi {
        if (k as i64).rem_euclid(2) == 0 {
            hi = 1.0;
        } else {
            lo = -1.0;
        }
        k += 1.0;
    }
    Interval::closed(lo, hi)
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{}, {}{}",
            if self.lo_open { '(' } else { '[' },
            self.lo,
            self.hi,
            if self.hi_open { ')' } else { ']' }
        )
    }
}

/// Intervals for the free symbols of an expression; missing symbols range
/// over the whole line.
pub type Env = BTreeMap<Symbol, Interval>;

pub fn enclose(e: &Expr, env: &Env) -> Interval {
    match e {
        Expr::Const(q) => Interval::from_rational(q),
        Expr::Time | Expr::State(_) | Expr::Param(_) | Expr::Init(_) => e
            .as_symbol()
            .and_then(|s| env.get(&s).copied())
            .unwrap_or(Interval::ENTIRE),
        Expr::Neg(a) => enclose(a, env).neg(),
        Expr::Add(a, b) => enclose(a, env).add(&enclose(b, env)),
        Expr::Mul(a, b) => {
            if a == b {
                return enclose(a, env).powi(2);
            }
            enclose(a, env).mul(&enclose(b, env))
        }
        Expr::Div(a, b) => enclose(a, env).div(&enclose(b, env)),
        Expr::Pow(a, b) => {
            let base = enclose(a, env);
            match b.as_rational() {
                Some(q) if q.is_integer() => match q.to_integer().to_i64() {
                    Some(n) if n.abs() <= 1 << 20 => base.powi(n),
                    _ => Interval::ENTIRE,
                },
                Some(q) => match (q.numer().to_i64(), q.denom().to_i64()) {
                    (Some(p), Some(d)) if d <= 1 << 20 => base.pow_rational(p, d),
                    _ => Interval::ENTIRE,
                },
                None => {
                    // exp(b*ln(a)), defined for a > 0 only.
                    let ex = enclose(b, env);
                    ex.mul(&base.ln()).exp()
                }
            }
        }
        Expr::Func(f, a) => {
            let x = enclose(a, env);
            match f {
                Func::Sin => x.sin(),
                Func::Cos => x.cos(),
                Func::Tan => x.tan(),
                Func::Sqrt => x.sqrt(),
                Func::Exp => x.exp(),
                Func::Ln => x.ln(),
                Func::Arcsin => x.arcsin(),
                Func::Custom(_) => Interval::ENTIRE,
            }
        }
        Expr::Tuple(_) => Interval::ENTIRE,
    }
}

/// Whether `q` lies in `iv`, checked exactly at the endpoints.
pub fn contains_rational(iv: &Interval, q: &Rational) -> bool {
    let cmp_end = |x: f64| -> Option<std::cmp::Ordering> {
        if x.is_infinite() {
            return Some(if x > 0.0 {
                std::cmp::Ordering::Greater
            } else {
                std::cmp::Ordering::Less
            });
        }
        Rational::from_float(x).map(|r| r.cmp(q))
    };
    let lo_ok = match cmp_end(iv.lo) {
        Some(std::cmp::Ordering::Less) => true,
        Some(std::cmp::Ordering::Equal) => !iv.lo_open,
        _ => false,
    };
    let hi_ok = match cmp_end(iv.hi) {
        Some(std::cmp::Ordering::Greater) => true,
        Some(std::cmp::Ordering::Equal) => !iv.hi_open,
        _ => false,
    };
    lo_ok && hi_ok
}
