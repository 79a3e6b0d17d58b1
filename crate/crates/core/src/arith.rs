//! Exact integer and rational arithmetic plus the multiplicative-function
//! kernels used by the rest of the crate.
//!
//! Machine arithmetic is 64-bit with 128-bit intermediates. Every operation
//! that could overflow is checked and reports [`Error::Overflow`] instead of
//! wrapping.

use std::cmp::Ordering;
use std::fmt;
use std::sync::OnceLock;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use num_rational::BigRational;

/// Upper end of the smallest-prime-factor sieve.
pub const SIEVE_LIMIT: u64 = 1_000_000;
/// Largest integer accepted by [`factorize`].
pub const FACTOR_CAP: u64 = 1_000_000_000_000;
/// Default size budget for [`primorial`], in bits.
pub const PRIMORIAL_BIT_BUDGET: u64 = 1 << 16;

pub fn gcd_u64(a: u64, b: u64) -> u64 {
    a.gcd(&b)
}

pub fn gcd_i128(a: i128, b: i128) -> i128 {
    a.gcd(&b)
}

/// A reduced rational `num/den` with `den >= 1`. Zero is always `0/1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fraction {
    num: i64,
    den: i64,
}

impl Fraction {
    pub const ZERO: Fraction = Fraction { num: 0, den: 1 };

    pub fn new(num: i64, den: u64) -> Result<Self> {
        reduce_fraction(num, den)
    }

    pub fn integer(n: i64) -> Self {
        Fraction { num: n, den: 1 }
    }

    pub fn num(&self) -> i64 {
        self.num
    }

    pub fn den(&self) -> i64 {
        self.den
    }

    pub fn is_integer(&self) -> bool {
        self.den == 1
    }

    pub fn is_zero(&self) -> bool {
        self.num == 0
    }

    pub fn to_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn to_big(&self) -> BigRational {
        BigRational::new(BigInt::from(self.num), BigInt::from(self.den))
    }

    pub fn neg(&self) -> Self {
        Fraction {
            num: -self.num,
            den: self.den,
        }
    }

    pub fn abs(&self) -> Self {
        Fraction {
            num: self.num.abs(),
            den: self.den,
        }
    }

    /// Exact sum; fails if the reduced result leaves 64-bit range.
    pub fn checked_add(&self, other: &Fraction) -> Result<Fraction> {
        let w = WideFraction::from(*self).checked_add(&WideFraction::from(*other))?;
        w.narrow()
    }

    pub fn checked_sub(&self, other: &Fraction) -> Result<Fraction> {
        self.checked_add(&other.neg())
    }

    /// Distance to the nearest integer, `‖x‖`.
    pub fn dist_to_integer(&self) -> Fraction {
        let r = self.num.rem_euclid(self.den);
        let d = r.min(self.den - r);
        Fraction {
            num: d,
            den: if d == 0 { 1 } else { self.den },
        }
    }
}

impl Ord for Fraction {
    fn cmp(&self, other: &Self) -> Ordering {
        let lhs = self.num as i128 * other.den as i128;
        let rhs = other.num as i128 * self.den as i128;
        lhs.cmp(&rhs)
    }
}

impl PartialOrd for Fraction {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl std::str::FromStr for Fraction {
    type Err = Error;

    /// Parses `p/q` or a bare integer `p`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidArgument(format!("not a rational: {s:?}"));
        match s.split_once('/') {
            Some((p, q)) => {
                let p: i64 = p.trim().parse().map_err(|_| bad())?;
                let q: u64 = q.trim().parse().map_err(|_| bad())?;
                reduce_fraction(p, q)
            }
            None => Ok(Fraction::integer(s.parse().map_err(|_| bad())?)),
        }
    }
}

/// Reduces `num/den`, placing the sign on the numerator.
pub fn reduce_fraction(num: i64, den: u64) -> Result<Fraction> {
    if den == 0 {
        return Err(Error::ZeroDenominator);
    }
    let den = i64::try_from(den).map_err(|_| Error::Overflow("reduce_fraction"))?;
    if num == 0 {
        return Ok(Fraction::ZERO);
    }
    let g = (num.unsigned_abs()).gcd(&(den as u64)) as i64;
    Ok(Fraction {
        num: num / g,
        den: den / g,
    })
}

/// Reduced rational with 128-bit parts, used for exact partial sums whose
/// denominators can reach products of several 64-bit denominators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WideFraction {
    pub num: i128,
    pub den: i128,
}

impl WideFraction {
    pub const ZERO: WideFraction = WideFraction { num: 0, den: 1 };

    pub fn new(num: i128, den: i128) -> Result<Self> {
        if den == 0 {
            return Err(Error::ZeroDenominator);
        }
        if num == 0 {
            return Ok(Self::ZERO);
        }
        let g = gcd_i128(num, den);
        let (mut n, mut d) = (num / g, den / g);
        if d < 0 {
            n = n
                .checked_neg()
                .ok_or(Error::Overflow("WideFraction::new"))?;
            d = d
                .checked_neg()
                .ok_or(Error::Overflow("WideFraction::new"))?;
        }
        Ok(WideFraction { num: n, den: d })
    }

    pub fn integer(n: i128) -> Self {
        WideFraction { num: n, den: 1 }
    }

    pub fn checked_add(&self, other: &WideFraction) -> Result<WideFraction> {
        const CTX: &str = "exact fraction sum";
        if self.den == other.den {
            let num = self
                .num
                .checked_add(other.num)
                .ok_or(Error::Overflow(CTX))?;
            return WideFraction::new(num, self.den);
        }
        let g = gcd_i128(self.den, other.den);
        let lcm = (self.den / g)
            .checked_mul(other.den)
            .ok_or(Error::Overflow(CTX))?;
        let a = self
            .num
            .checked_mul(other.den / g)
            .ok_or(Error::Overflow(CTX))?;
        let b = other
            .num
            .checked_mul(self.den / g)
            .ok_or(Error::Overflow(CTX))?;
        WideFraction::new(a.checked_add(b).ok_or(Error::Overflow(CTX))?, lcm)
    }

    pub fn neg(&self) -> WideFraction {
        WideFraction {
            num: -self.num,
            den: self.den,
        }
    }

    pub fn is_integer(&self) -> bool {
        self.den == 1
    }

    pub fn is_zero(&self) -> bool {
        self.num == 0
    }

    /// Fractional part in `[0, 1)`, reduced.
    pub fn fract(&self) -> WideFraction {
        let r = self.num.rem_euclid(self.den);
        if r == 0 {
            Self::ZERO
        } else {
            WideFraction {
                num: r,
                den: self.den,
            }
        }
    }

    pub fn narrow(&self) -> Result<Fraction> {
        let num = i64::try_from(self.num).map_err(|_| Error::Overflow("narrowing fraction"))?;
        let den = i64::try_from(self.den).map_err(|_| Error::Overflow("narrowing fraction"))?;
        Ok(Fraction { num, den })
    }
}

impl From<Fraction> for WideFraction {
    fn from(f: Fraction) -> Self {
        WideFraction {
            num: f.num as i128,
            den: f.den as i128,
        }
    }
}

/// Prime factorization as `(prime, exponent)` pairs sorted by prime.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Factorization {
    factors: Vec<(u64, u32)>,
}

impl Factorization {
    pub fn factors(&self) -> &[(u64, u32)] {
        &self.factors
    }

    pub fn primes(&self) -> impl Iterator<Item = u64> + '_ {
        self.factors.iter().map(|&(p, _)| p)
    }

    pub fn exponent_of(&self, p: u64) -> u32 {
        self.factors
            .binary_search_by_key(&p, |&(q, _)| q)
            .map(|i| self.factors[i].1)
            .unwrap_or(0)
    }

    pub fn is_squarefree(&self) -> bool {
        self.factors.iter().all(|&(_, e)| e == 1)
    }

    pub fn value(&self) -> u64 {
        self.factors.iter().map(|&(p, e)| p.pow(e)).product()
    }
}

fn spf_table() -> &'static [u32] {
    static SPF: OnceLock<Vec<u32>> = OnceLock::new();
    SPF.get_or_init(|| {
        let n = SIEVE_LIMIT as usize;
        let mut spf = vec![0u32; n + 1];
        for i in 2..=n {
            if spf[i] == 0 {
                spf[i] = i as u32;
                if i * i <= n {
                    let mut j = i * i;
                    while j <= n {
                        if spf[j] == 0 {
                            spf[j] = i as u32;
                        }
                        j += i;
                    }
                }
            }
        }
        spf
    })
}

/// Primes up to [`SIEVE_LIMIT`], ascending.
fn sieve_primes() -> &'static [u64] {
    static PRIMES: OnceLock<Vec<u64>> = OnceLock::new();
    PRIMES.get_or_init(|| {
        let spf = spf_table();
        (2..spf.len())
            .filter(|&i| spf[i] as usize == i)
            .map(|i| i as u64)
            .collect()
    })
}

/// Factorization by sieve lookup below [`SIEVE_LIMIT`] and trial division by
/// sieved primes above it, up to [`FACTOR_CAP`].
pub fn factorize(n: u64) -> Result<Factorization> {
    if n == 0 {
        return Err(Error::BelowMinimum {
            what: "n",
            value: 0,
            min: 1,
        });
    }
    if n > FACTOR_CAP {
        return Err(Error::AboveCap {
            what: "factorization input",
            value: n as u128,
            cap: FACTOR_CAP as u128,
        });
    }
    let mut factors: Vec<(u64, u32)> = Vec::new();
    let mut push = |p: u64| match factors.last_mut() {
        Some((q, e)) if *q == p => *e += 1,
        _ => factors.push((p, 1)),
    };
    let mut m = n;
    if m > SIEVE_LIMIT {
        for &p in sieve_primes() {
            if p * p > m {
                break;
            }
            while m % p == 0 {
                push(p);
                m /= p;
            }
            if m <= SIEVE_LIMIT {
                break;
            }
        }
        if m > SIEVE_LIMIT {
            // No factor below sqrt(m) remains, so m is prime.
            push(m);
            m = 1;
        }
    }
    let spf = spf_table();
    while m > 1 {
        let p = spf[m as usize] as u64;
        push(p);
        m /= p;
    }
    Ok(Factorization { factors })
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n <= SIEVE_LIMIT {
        return spf_table()[n as usize] as u64 == n;
    }
    match factorize(n) {
        Ok(f) => f.factors() == [(n, 1)],
        Err(_) => false,
    }
}

/// All primes `p <= n` (for `n` up to the sieve limit).
pub fn primes_up_to(n: u64) -> Result<Vec<u64>> {
    if n > SIEVE_LIMIT {
        return Err(Error::AboveCap {
            what: "prime listing bound",
            value: n as u128,
            cap: SIEVE_LIMIT as u128,
        });
    }
    let ps = sieve_primes();
    let end = ps.partition_point(|&p| p <= n);
    Ok(ps[..end].to_vec())
}

pub fn totient(n: u64) -> Result<u64> {
    let f = factorize(n)?;
    Ok(f.factors()
        .iter()
        .map(|&(p, e)| (p - 1) * p.pow(e - 1))
        .product())
}

pub fn mobius(n: u64) -> Result<i8> {
    let f = factorize(n)?;
    if !f.is_squarefree() {
        return Ok(0);
    }
    Ok(if f.factors().len() % 2 == 0 { 1 } else { -1 })
}

pub fn is_squarefree(n: u64) -> Result<bool> {
    Ok(factorize(n)?.is_squarefree())
}

/// Squarefree divisors of `n`, ascending.
pub fn squarefree_divisors(n: u64) -> Result<Vec<u64>> {
    let f = factorize(n)?;
    let mut divs = vec![1u64];
    for p in f.primes() {
        let extra: Vec<u64> = divs.iter().map(|d| d * p).collect();
        divs.extend(extra);
    }
    divs.sort_unstable();
    Ok(divs)
}

/// All divisors of `n`, ascending.
pub fn divisors(n: u64) -> Result<Vec<u64>> {
    let f = factorize(n)?;
    let mut divs = vec![1u64];
    for &(p, e) in f.factors() {
        let base = divs.clone();
        let mut pk = 1u64;
        for _ in 0..e {
            pk *= p;
            divs.extend(base.iter().map(|d| d * pk));
        }
    }
    divs.sort_unstable();
    Ok(divs)
}

/// Product of all primes `p <= y`, within [`PRIMORIAL_BIT_BUDGET`].
pub fn primorial(y: u64) -> Result<BigUint> {
    primorial_with_budget(y, PRIMORIAL_BIT_BUDGET)
}

pub fn primorial_with_budget(y: u64, max_bits: u64) -> Result<BigUint> {
    if y < 2 {
        return Err(Error::BelowMinimum {
            what: "primorial bound y",
            value: y as i128,
            min: 2,
        });
    }
    let mut acc = BigUint::one();
    for p in primes_up_to(y)? {
        acc *= p;
        if acc.bits() > max_bits {
            return Err(Error::AboveCap {
                what: "primorial size in bits",
                value: acc.bits() as u128,
                cap: max_bits as u128,
            });
        }
    }
    Ok(acc)
}

/// Primorial that must fit a machine word, for use as a modulus.
pub fn primorial_u64(y: u64) -> Result<u64> {
    primorial(y)?
        .to_u64()
        .ok_or(Error::Overflow("primorial as 64-bit modulus"))
}

/// `C(n, r)` as an exact big integer.
pub fn binomial(n: u64, r: u64) -> BigInt {
    if r > n {
        return BigInt::zero();
    }
    let r = r.min(n - r);
    let mut acc = BigInt::one();
    for i in 0..r {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

/// `base^exp` for a big rational, with `x^0 = 1` (including `0^0`).
pub fn rational_pow(base: &BigRational, exp: u32) -> BigRational {
    let mut acc = BigRational::one();
    for _ in 0..exp {
        acc *= base;
    }
    acc
}

pub fn rational_from_ints(num: i128, den: i128) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Renders a big rational as `p/q` (or `p` when integral).
pub fn rational_string(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Nearest float to a big rational, robust to huge numerators and
/// denominators.
pub fn rational_to_f64(r: &BigRational) -> f64 {
    if let (Some(n), Some(d)) = (r.numer().to_f64(), r.denom().to_f64()) {
        if n.is_finite() && d.is_finite() && d != 0.0 {
            return n / d;
        }
    }
    let shift = r.numer().bits() as i64 - r.denom().bits() as i64;
    let scaled = if shift > 60 {
        r / BigRational::from_integer(BigInt::one() << (shift - 60) as usize)
    } else {
        r * BigRational::from_integer(BigInt::one() << (60 - shift) as usize)
    };
    let base =
        scaled.numer().to_f64().unwrap_or(f64::NAN) / scaled.denom().to_f64().unwrap_or(f64::NAN);
    let v = base * 2f64.powi((shift - 60) as i32);
    if r.is_negative() && v > 0.0 {
        -v
    } else {
        v
    }
}
