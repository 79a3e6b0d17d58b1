//! Moments of reduced residues in short intervals.
//!
//! `M_{k1,k2}(q,h) = sum_{n<=q} (c(n) - phi(q)h/q)^{k1} c(n)^{k2}` where
//! `c(n)` counts `m ∈ [n, n+h)` coprime to `q`. The exponential-sum side
//! `V_{k1,k2}` is evaluated in the residue representation: for squarefree
//! `q` each fraction `a/r` with `r | q`, `gcd(a, r) = 1` is `t/q` for exactly
//! one `t mod q`, with `r = q / gcd(t, q)`. The divisor-tuple sum becomes a
//! cyclic convolution evaluated at `0`.

#![allow(non_snake_case)]

use std::f64::consts::PI;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_integer::Integer;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::arith::{binomial, gcd_u64, mobius, rational_pow, totient, BigRational, Fraction};
use crate::error::{Error, Result};
use crate::singular::{squarefree_primes, sum_refined};

pub const MAX_MODULUS: u64 = 1_000_000;
pub const MAX_WINDOW: u64 = 10_000;
pub const MAX_MOMENT_ORDER: usize = 8;
pub const MAX_EXPSUM_PRIMES: usize = 6;
pub const MAX_EXPSUM_ORDER: usize = 5;
/// Limit on complex multiply-adds for one convolution evaluation.
pub const EXPSUM_BUDGET: u128 = 10_000_000_000;
pub const MAX_SPLIT_MODULUS: u64 = 100_000;
pub const MAX_SPLIT_WINDOW: u64 = 1_000;
/// Relative tolerance for float paths against exact values.
pub const FLOAT_TOLERANCE: f64 = 1e-9;

fn check_squarefree_modulus(q: u64, cap: u64) -> Result<Vec<u64>> {
    if q > cap {
        return Err(Error::AboveCap {
            what: "modulus",
            value: q as u128,
            cap: cap as u128,
        });
    }
    squarefree_primes(q)
}

fn check_window(h: u64, cap: u64) -> Result<()> {
    if h == 0 {
        return Err(Error::BelowMinimum {
            what: "h",
            value: 0,
            min: 1,
        });
    }
    if h > cap {
        return Err(Error::AboveCap {
            what: "h",
            value: h as u128,
            cap: cap as u128,
        });
    }
    Ok(())
}

fn check_order(k: usize, cap: usize) -> Result<()> {
    if k > cap {
        return Err(Error::AboveCap {
            what: "moment order",
            value: k as u128,
            cap: cap as u128,
        });
    }
    Ok(())
}

/// `coprime[r] = gcd(r, q) == 1` for `r < q`.
fn coprime_table(q: u64, primes: &[u64]) -> Vec<bool> {
    let mut table = vec![true; q as usize];
    for &p in primes {
        for r in (0..q as usize).step_by(p as usize) {
            table[r] = false;
        }
    }
    if q == 1 {
        table[0] = true;
    }
    table
}

/// `hist[c]` = number of `n ∈ [1, q]` whose window `[n, n+h)` holds `c`
/// integers coprime to `q`.
pub fn window_histogram(q: u64, h: u64) -> Result<Vec<u64>> {
    let primes = check_squarefree_modulus(q, MAX_MODULUS)?;
    check_window(h, MAX_WINDOW)?;
    let coprime = coprime_table(q, &primes);
    let qs = q as usize;
    let hs = h as usize;
    let phi = coprime.iter().filter(|&&c| c).count() as u64;
    // count over [n, n+h) = full periods plus a partial run
    let full = (h / q) * phi;
    let rem = hs % qs;
    let mut count: u64 = (0..rem).filter(|&m| coprime[(1 + m) % qs]).count() as u64;
    let mut hist = vec![0u64; hs + 1];
    for n in 1..=qs {
        hist[(full + count) as usize] += 1;
        // slide: drop n, add n + rem
        if rem > 0 {
            if coprime[n % qs] {
                count -= 1;
            }
            if coprime[(n + rem) % qs] {
                count += 1;
            }
        }
    }
    Ok(hist)
}

/// Exact `M_{k1,k2}(q,h)`.
pub fn M_mixed_direct(q: u64, h: u64, k1: usize, k2: usize) -> Result<BigRational> {
    check_order(k1 + k2, MAX_MOMENT_ORDER)?;
    let hist = window_histogram(q, h)?;
    let phi_h = BigInt::from(totient(q)?) * BigInt::from(h);
    let qb = BigInt::from(q);
    // (c - phi h / q)^{k1} c^{k2} = (q c - phi h)^{k1} c^{k2} / q^{k1}
    let total: BigInt = hist
        .iter()
        .enumerate()
        .filter(|(_, &n)| n > 0)
        .map(|(c, &n)| {
            let cb = BigInt::from(c);
            let dev = &qb * &cb - &phi_h;
            dev.pow(k1 as u32) * cb.pow(k2 as u32) * BigInt::from(n)
        })
        .sum();
    Ok(BigRational::new(total, qb.pow(k1 as u32)))
}

pub fn M_direct(q: u64, h: u64, k: usize) -> Result<BigRational> {
    M_mixed_direct(q, h, k, 0)
}

/// `E(x) = sum_{m=1}^h e(mx)`, by the closed geometric form
/// `e((h+1)x/2) sin(pi h x) / sin(pi x)` with all angles reduced exactly.
pub fn E_kernel(x: Fraction, h: u64) -> Complex64 {
    exp_sum_at(x.num() as i128, x.den() as i128, h)
}

fn exp_sum_at(num: i128, den: i128, h: u64) -> Complex64 {
    let r = num.rem_euclid(den);
    if r == 0 {
        return Complex64::new(h as f64, 0.0);
    }
    let h = h as i128;
    let two_den = 2 * den;
    // angles as multiples of pi/den, reduced mod 2pi
    let phase = ((h + 1) * r).rem_euclid(two_den) as f64 * PI / den as f64;
    let top = (h * r).rem_euclid(two_den) as f64 * PI / den as f64;
    let bottom = r as f64 * PI / den as f64;
    Complex64::from_polar(top.sin() / bottom.sin(), phase)
}

/// `F(x) = min(h, 1/||x||)`, exact.
pub fn F_kernel(x: Fraction, h: u64) -> Fraction {
    let d = x.dist_to_integer();
    let hf = Fraction::integer(h as i64);
    if d.is_zero() {
        return hf;
    }
    // 1/||x|| = den/num with num > 0
    let inv = Fraction::new(d.den(), d.num() as u64).expect("positive distance");
    inv.min(hf)
}

/// `mu(r)/phi(r)` with `r = q / gcd(t, q)`, for each `t mod q`.
fn residue_weights(q: u64) -> Result<Vec<f64>> {
    let mut cache = std::collections::HashMap::new();
    (0..q)
        .map(|t| {
            let r = q / gcd_u64(t, q);
            if let Some(&w) = cache.get(&r) {
                return Ok(w);
            }
            let w = mobius(r)? as f64 / totient(r)? as f64;
            cache.insert(r, w);
            Ok(w)
        })
        .collect()
}

fn check_expsum(q: u64, k: usize) -> Result<()> {
    let primes = squarefree_primes(q)?;
    if primes.len() > MAX_EXPSUM_PRIMES {
        return Err(Error::AboveCap {
            what: "number of prime factors",
            value: primes.len() as u128,
            cap: MAX_EXPSUM_PRIMES as u128,
        });
    }
    check_order(k, MAX_EXPSUM_ORDER)?;
    let estimate = (q as u128) * (q as u128) * (k.saturating_sub(1) as u128);
    if estimate > EXPSUM_BUDGET {
        return Err(Error::BudgetExceeded {
            what: "exponential sum convolution",
            estimate,
            budget: EXPSUM_BUDGET,
        });
    }
    Ok(())
}

/// `sum_{t_1 + ... + t_k ≡ 0 (mod q)} prod_i f_i(t_i)`.
///
/// The first `k-1` kernels are folded by cyclic convolution; the last index
/// is then forced to `t_k ≡ -(t_1 + ... + t_{k-1})`.
fn convolution_at_zero(q: usize, kernels: &[Vec<Complex64>]) -> Complex64 {
    let Some((last, init)) = kernels.split_last() else {
        return Complex64::one();
    };
    let mut acc: Vec<Complex64> = match init.split_first() {
        Some((first, _)) => first.clone(),
        None => {
            let mut delta = vec![Complex64::zero(); q];
            delta[0] = Complex64::one();
            delta
        }
    };
    for f in init.iter().skip(1) {
        let support: Vec<(usize, Complex64)> = f
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, v)| *v != Complex64::zero())
            .collect();
        acc = (0..q)
            .into_par_iter()
            .map(|s| support.iter().map(|&(t, v)| acc[(s + q - t) % q] * v).sum())
            .collect();
    }
    (0..q).map(|t| acc[(q - t) % q] * last[t]).sum()
}

fn real_part(z: Complex64) -> Result<f64> {
    if z.im.abs() > FLOAT_TOLERANCE * (1.0 + z.re.abs()) {
        return Err(Error::PrecisionBreach {
            real: z.re,
            imag: z.im,
        });
    }
    Ok(z.re)
}

/// `V_{k1,k2}(q,h)`: the first `k1` denominators range over `1 < r | q`,
/// the remaining `k2` over `1 <= r | q`.
pub fn V_mixed_expsum(q: u64, h: u64, k1: usize, k2: usize) -> Result<f64> {
    check_expsum(q, k1 + k2)?;
    check_window(h, MAX_WINDOW)?;
    let weights = residue_weights(q)?;
    let kernel: Vec<Complex64> = (0..q)
        .map(|t| exp_sum_at(t as i128, q as i128, h) * weights[t as usize])
        .collect();
    let mut strict = kernel.clone();
    strict[0] = Complex64::zero();
    let mut kernels = vec![strict; k1];
    kernels.extend(std::iter::repeat_n(kernel, k2));
    real_part(convolution_at_zero(q as usize, &kernels))
}

pub fn V_expsum(q: u64, h: u64, k: usize) -> Result<f64> {
    V_mixed_expsum(q, h, k, 0)
}

/// Exponential-sum form of `S0(D;q)`:
/// `sum_{t_i ≠ 0, sum t_i ≡ 0} prod_i w(t_i) e(d_i t_i / q)`.
pub fn S0_expsum(d: &[i64], q: u64) -> Result<f64> {
    check_expsum(q, d.len())?;
    let weights = residue_weights(q)?;
    let kernels: Vec<Vec<Complex64>> = d
        .iter()
        .map(|&di| {
            (0..q)
                .map(|t| {
                    if t == 0 {
                        return Complex64::zero();
                    }
                    let turns = (di as i128 * t as i128).rem_euclid(q as i128) as f64 / q as f64;
                    Complex64::from_polar(weights[t as usize], 2.0 * PI * turns)
                })
                .collect()
        })
        .collect();
    real_part(convolution_at_zero(q as usize, &kernels))
}

/// `V_k(q,h) = sum_{d ∈ [1,h]^k} S0(D;q)`, exact.
pub fn V_via_singular(q: u64, h: u64, k: usize) -> Result<BigRational> {
    check_window(h, MAX_WINDOW)?;
    sum_refined(h, k, q, false)
}

fn normaliser(q: u64, k: usize) -> Result<BigRational> {
    let density = BigRational::new(BigInt::from(totient(q)?), BigInt::from(q));
    Ok(BigRational::from_integer(BigInt::from(q)) * rational_pow(&density, k as u32))
}

/// `M_k(q,h) - q (phi(q)/q)^k V_k(q,h)`, exact; zero when the identity holds.
pub fn check_MV_identity(q: u64, h: u64, k: usize) -> Result<BigRational> {
    Ok(M_direct(q, h, k)? - normaliser(q, k)? * V_via_singular(q, h, k)?)
}

/// `|a - b| / (1 + |b|)`.
pub fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + b.abs())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RSumBound {
    #[serde(serialize_with = "as_rational_string")]
    pub lhs: BigRational,
    #[serde(serialize_with = "as_rational_string")]
    pub rhs: BigRational,
    pub holds: bool,
}

fn as_rational_string<S: serde::Serializer>(
    r: &BigRational,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&crate::arith::rational_string(r))
}

pub const MAX_RSUM_PRIMES: usize = 5;
pub const MAX_RSUM_ORDER: usize = 4;

/// Exact left side
/// `sum_{r_i | q} prod mu(r_i)^2/phi(r_i) #{b : gcd(b_i,r_i)=1, sum b_i/r_i ∈ Z}`
/// against `prod_{p|q} (1 + 2^k/(p-1))`.
///
/// In the residue representation `1/phi(r)` is `phi(gcd(t,q)) / phi(q)`, so
/// the sum is an integer convolution divided by `phi(q)^k`.
pub fn check_r_sum_bound(q: u64, k: usize) -> Result<RSumBound> {
    let primes = squarefree_primes(q)?;
    if primes.len() > MAX_RSUM_PRIMES {
        return Err(Error::AboveCap {
            what: "number of prime factors",
            value: primes.len() as u128,
            cap: MAX_RSUM_PRIMES as u128,
        });
    }
    if k == 0 {
        return Err(Error::BelowMinimum {
            what: "k",
            value: 0,
            min: 1,
        });
    }
    check_order(k, MAX_RSUM_ORDER)?;
    let qs = q as usize;
    let weight: Vec<u128> = (0..q)
        .map(|t| totient(gcd_u64(t, q)).map(|w| w as u128))
        .collect::<Result<_>>()?;
    let mut acc = weight.clone();
    for _ in 1..k - 1 {
        acc = (0..qs)
            .into_par_iter()
            .map(|s| (0..qs).map(|t| acc[(s + qs - t) % qs] * weight[t]).sum())
            .collect();
    }
    let total: u128 = if k == 1 {
        weight[0]
    } else {
        (0..qs).map(|t| acc[(qs - t) % qs] * weight[t]).sum()
    };
    let lhs = BigRational::new(BigInt::from(total), BigInt::from(totient(q)?).pow(k as u32));
    let rhs = primes
        .iter()
        .map(|&p| {
            BigRational::one() + BigRational::new(BigInt::from(1u64 << k), BigInt::from(p - 1))
        })
        .fold(BigRational::one(), |a, b| a * b);
    let holds = lhs <= rhs;
    Ok(RSumBound { lhs, rhs, holds })
}

/// `M_k(q1 q2, h) - sum_{k1+k2=k} C(k,k1) P2^{k1} sum_{n1} D1^{k1} sum_{n2} D2^{k2}`
/// with `P_i = phi(q_i)/q_i`,
/// `D1(n1) = #{m <= h : (m+n1, q1) = 1} - h P1` and
/// `D2(n1,n2) = #{m <= h : (m+n1, q1) = (m+n2, q2) = 1} - P2 #{m <= h : (m+n1, q1) = 1}`.
pub fn check_smooth_rough_decomposition(q1: u64, q2: u64, h: u64, k: usize) -> Result<BigRational> {
    if q1.gcd(&q2) != 1 {
        return Err(Error::InvalidArgument(format!(
            "moduli {q1} and {q2} are not coprime"
        )));
    }
    let q = q1
        .checked_mul(q2)
        .filter(|&q| q <= MAX_SPLIT_MODULUS)
        .ok_or(Error::AboveCap {
            what: "q1 q2",
            value: q1 as u128 * q2 as u128,
            cap: MAX_SPLIT_MODULUS as u128,
        })?;
    check_window(h, MAX_SPLIT_WINDOW)?;
    check_order(k, MAX_MOMENT_ORDER)?;
    let p1 = squarefree_primes(q1)?;
    let p2 = squarefree_primes(q2)?;
    let c1 = coprime_table(q1, &p1);
    let c2 = coprime_table(q2, &p2);
    let phi1 = totient(q1)? as i64;
    let phi2 = totient(q2)? as i64;
    let (q1i, q2i, hi) = (q1 as i64, q2 as i64, h as i64);

    // Scaled integers A = q1 D1, B = q2 D2; histogram of (A, B) pairs.
    let mut pairs: std::collections::HashMap<(i64, i64), u64> = std::collections::HashMap::new();
    for n1 in 1..=q1 {
        let inside1: Vec<bool> = (1..=h).map(|m| c1[((m + n1) % q1) as usize]).collect();
        let count1 = inside1.iter().filter(|&&b| b).count() as i64;
        let a = q1i * count1 - hi * phi1;
        for n2 in 1..=q2 {
            let both = (1..=h)
                .zip(&inside1)
                .filter(|&(m, &in1)| in1 && c2[((m + n2) % q2) as usize])
                .count() as i64;
            let b = q2i * both - phi2 * count1;
            *pairs.entry((a, b)).or_insert(0) += 1;
        }
    }

    let p2_ratio = BigRational::new(BigInt::from(phi2), BigInt::from(q2));
    let mut rhs = BigRational::zero();
    for k1 in 0..=k {
        let k2 = k - k1;
        let s: BigInt = pairs
            .iter()
            .map(|(&(a, b), &n)| {
                BigInt::from(a).pow(k1 as u32) * BigInt::from(b).pow(k2 as u32) * BigInt::from(n)
            })
            .sum();
        let scale = BigInt::from(q1).pow(k1 as u32) * BigInt::from(q2).pow(k2 as u32);
        rhs += BigRational::from_integer(binomial(k as u64, k1 as u64))
            * rational_pow(&p2_ratio, k1 as u32)
            * BigRational::new(s, scale);
    }
    Ok(M_direct(q, h, k)? - rhs)
}

/// Direct moment alongside the float exponential-sum path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentResult {
    pub q: u64,
    pub h: u64,
    pub k1: usize,
    pub k2: usize,
    #[serde(serialize_with = "as_rational_string")]
    pub exact: BigRational,
    pub value: f64,
    pub method: &'static str,
    /// `|M - q (phi/q)^k V| / (1 + |M|)` with `V` from the exponential sum,
    /// when that path is within its caps.
    pub expsum_gap: Option<f64>,
}

pub fn evaluate_moment(q: u64, h: u64, k1: usize, k2: usize) -> Result<MomentResult> {
    let exact = M_mixed_direct(q, h, k1, k2)?;
    let value = crate::arith::rational_to_f64(&exact);
    let expsum_gap = match V_mixed_expsum(q, h, k1, k2) {
        Ok(v) => {
            let scaled = crate::arith::rational_to_f64(&normaliser(q, k1 + k2)?) * v;
            Some(relative_gap(scaled, value))
        }
        Err(Error::AboveCap { .. } | Error::BudgetExceeded { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(MomentResult {
        q,
        h,
        k1,
        k2,
        exact,
        value,
        method: "window-histogram",
        expsum_gap,
    })
}
