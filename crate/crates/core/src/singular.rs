//! Truncated singular series `S(D;q)`, the refined series `S0(D;q)`, their
//! tuple sums, and a truncated infinite product with an explicit tail bound.
//!
//! `S(D;q) = prod_{p|q} p^{k-1} (p - nu_p(D)) / (p-1)^k` for squarefree `q`.
//! For a fixed tuple, `nu_p` of every sub-tuple is determined by the way
//! the indices split into residue classes mod `p`. That split (labelled by
//! first occurrence) is the memo key for all tuple sums below.

#![allow(non_snake_case)]

use std::collections::{BTreeSet, HashMap};

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::arith::{factorize, is_prime, primes_up_to, rational_to_f64, totient, BigRational};
use crate::error::{Error, Result};

pub const MAX_TUPLE_LEN: usize = 8;
pub const MAX_OFFSET: i64 = 1_000_000;
/// Limit on `h^k · 2^k · omega(q)` for tuple sums.
pub const SERIES_BUDGET: u128 = 2_000_000_000;

fn check_tuple(d: &[i64]) -> Result<()> {
    if d.len() > MAX_TUPLE_LEN {
        return Err(Error::AboveCap {
            what: "tuple length",
            value: d.len() as u128,
            cap: MAX_TUPLE_LEN as u128,
        });
    }
    if let Some(x) = d.iter().find(|x| x.abs() > MAX_OFFSET) {
        return Err(Error::AboveCap {
            what: "tuple entry",
            value: x.unsigned_abs() as u128,
            cap: MAX_OFFSET as u128,
        });
    }
    Ok(())
}

/// Primes of a squarefree modulus, ascending.
pub fn squarefree_primes(q: u64) -> Result<Vec<u64>> {
    let f = factorize(q)?;
    if !f.is_squarefree() {
        return Err(Error::NotSquarefree(q));
    }
    Ok(f.primes().collect())
}

/// Number of residue classes mod `p` met by `d`.
pub fn nu_p(d: &[i64], p: u64) -> Result<usize> {
    if !is_prime(p) {
        return Err(Error::NotPrime(p));
    }
    Ok(d.iter()
        .map(|x| x.rem_euclid(p as i64))
        .collect::<BTreeSet<_>>()
        .len())
}

fn euler_factor(p: u64, k: usize, nu: usize) -> BigRational {
    let p_big = BigInt::from(p);
    let num = num_traits::pow(p_big, k - 1) * BigInt::from(p - nu as u64);
    let den = num_traits::pow(BigInt::from(p - 1), k);
    BigRational::new(num, den)
}

pub fn S_mod_q(d: &[i64], q: u64) -> Result<BigRational> {
    check_tuple(d)?;
    let primes = squarefree_primes(q)?;
    if d.is_empty() {
        return Ok(BigRational::one());
    }
    let mut out = BigRational::one();
    for p in primes {
        let nu = nu_p(d, p)?;
        if nu as u64 >= p {
            return Ok(BigRational::zero());
        }
        out *= euler_factor(p, d.len(), nu);
    }
    Ok(out)
}

/// Residue-class pattern of a tuple modulo each prime of `q`: for every
/// prime, index `i` carries the label of the class of `d_i`, labels
/// numbered by first occurrence. Invariant under translation of `d`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PatternKey {
    k: u8,
    labels: Vec<u8>,
}

impl PatternKey {
    pub fn new(d: &[i64], primes: &[u64]) -> Self {
        let k = d.len();
        let mut labels = Vec::with_capacity(k * primes.len());
        let mut seen: Vec<i64> = Vec::with_capacity(k);
        for &p in primes {
            seen.clear();
            for &x in d {
                let r = x.rem_euclid(p as i64);
                let label = match seen.iter().position(|&s| s == r) {
                    Some(l) => l,
                    None => {
                        seen.push(r);
                        seen.len() - 1
                    }
                };
                labels.push(label as u8);
            }
        }
        PatternKey { k: k as u8, labels }
    }

    fn prime_labels(&self, j: usize) -> &[u8] {
        let k = self.k as usize;
        &self.labels[j * k..(j + 1) * k]
    }

    /// `nu_p` of every sub-tuple, indexed by bitmask.
    fn nu_table(&self, j: usize) -> Vec<u8> {
        let k = self.k as usize;
        let labels = self.prime_labels(j);
        let mut classes = vec![0u32; 1 << k];
        for mask in 1usize..(1 << k) {
            let low = mask.trailing_zeros() as usize;
            classes[mask] = classes[mask & (mask - 1)] | 1 << labels[low];
        }
        classes.iter().map(|c| c.count_ones() as u8).collect()
    }
}

/// Exact evaluation of `S` and `S0` from pattern keys for one modulus.
pub struct SeriesEvaluator {
    q: u64,
    primes: Vec<u64>,
    phi: u64,
}

impl SeriesEvaluator {
    pub fn new(q: u64) -> Result<Self> {
        Ok(SeriesEvaluator {
            q,
            primes: squarefree_primes(q)?,
            phi: totient(q)?,
        })
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    pub fn primes(&self) -> &[u64] {
        &self.primes
    }

    pub fn key(&self, d: &[i64]) -> PatternKey {
        PatternKey::new(d, &self.primes)
    }

    /// `phi(q)^k · S(D_Q;q)` for every sub-tuple mask `Q`, as integers.
    fn scaled_subseries(&self, key: &PatternKey) -> Vec<BigInt> {
        let k = key.k as usize;
        let full = 1usize << k;
        let mut out = vec![BigInt::one(); full];
        for (j, &p) in self.primes.iter().enumerate() {
            let nu = key.nu_table(j);
            for (mask, slot) in out.iter_mut().enumerate() {
                let size = mask.count_ones() as usize;
                let nu = nu[mask] as u64;
                // p^{s-1} (p - nu) (p-1)^{k-s}; the empty tuple gives (p-1)^k.
                let factor = if size == 0 {
                    BigInt::from(p - 1).pow(k as u32)
                } else if nu >= p {
                    BigInt::zero()
                } else {
                    BigInt::from(p).pow(size as u32 - 1)
                        * BigInt::from(p - nu)
                        * BigInt::from(p - 1).pow((k - size) as u32)
                };
                *slot *= factor;
            }
        }
        out
    }

    fn scale(&self, k: usize) -> BigInt {
        BigInt::from(self.phi).pow(k as u32)
    }

    /// `S(D_Q;q)` for every sub-tuple mask `Q` of the keyed tuple.
    pub fn subseries(&self, key: &PatternKey) -> Vec<BigRational> {
        let scale = self.scale(key.k as usize);
        self.scaled_subseries(key)
            .into_iter()
            .map(|v| BigRational::new(v, scale.clone()))
            .collect()
    }

    pub fn series(&self, key: &PatternKey) -> BigRational {
        let k = key.k as usize;
        let scaled = self.scaled_subseries(key);
        BigRational::new(scaled[(1 << k) - 1].clone(), self.scale(k))
    }

    pub fn refined(&self, key: &PatternKey) -> BigRational {
        let k = key.k as usize;
        let scaled = self.scaled_subseries(key);
        let mut total = BigInt::zero();
        for (mask, v) in scaled.into_iter().enumerate() {
            if (k - mask.count_ones() as usize) % 2 == 0 {
                total += v;
            } else {
                total -= v;
            }
        }
        BigRational::new(total, self.scale(k))
    }
}

/// `S0(D;q) = sum_{Q ⊆ D} (-1)^{k-|Q|} S(D_Q;q)`, with `S0(∅;q) = 1`.
pub fn S0_mod_q(d: &[i64], q: u64) -> Result<BigRational> {
    check_tuple(d)?;
    let ev = SeriesEvaluator::new(q)?;
    Ok(ev.refined(&ev.key(d)))
}

/// `S(D;q) - sum_{X ⊆ D} S0(D_X;q)`; zero by Möbius inversion.
pub fn check_duality(d: &[i64], q: u64) -> Result<BigRational> {
    let k = d.len();
    let mut sum = BigRational::zero();
    for mask in 0u32..(1 << k) {
        let sub: Vec<i64> = (0..k)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| d[i])
            .collect();
        sum += S0_mod_q(&sub, q)?;
    }
    Ok(S_mod_q(d, q)? - sum)
}

/// `S(D2;q) - (q/phi(q))^{k2-k1} S(D1;q)` where `D1` lists the distinct
/// entries of `D2`.
pub fn check_repeated_elements(d1: &[i64], d2: &[i64], q: u64) -> Result<BigRational> {
    let set1: BTreeSet<i64> = d1.iter().copied().collect();
    if set1.len() != d1.len() {
        return Err(Error::InvalidArgument(
            "first tuple must have distinct entries".into(),
        ));
    }
    let set2: BTreeSet<i64> = d2.iter().copied().collect();
    if set1 != set2 {
        return Err(Error::InvalidArgument(
            "tuples must have the same set of entries".into(),
        ));
    }
    let ratio = BigRational::new(BigInt::from(q), BigInt::from(totient(q)?));
    let lift = crate::arith::rational_pow(&ratio, (d2.len() - d1.len()) as u32);
    Ok(S_mod_q(d2, q)? - lift * S_mod_q(d1, q)?)
}

/// Truncated infinite product with a rigorous bound on `|S(D) - value|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InfiniteSeries {
    pub value: f64,
    pub tail_bound: f64,
    pub truncation: u64,
}

/// `prod_{p <= P} (1-1/p)^{-k} (1 - nu_p/p)`.
///
/// For `p > P >= max(2k, max |d_i - d_j|)` every `nu_p = k`, and
/// `ln((1-1/p)^{-k}(1-k/p)) = sum_{j>=2} (k - k^j) / (j p^j)`, whose size is
/// at most `k^2/p^2` once `k/p <= 1/2`. Summing over `p > P` gives at most
/// `k^2/P`, so the tail factor lies in `[e^{-k^2/P}, e^{k^2/P}]`.
pub fn S_infinite(d: &[i64], truncation: u64) -> Result<InfiniteSeries> {
    check_tuple(d)?;
    let distinct: BTreeSet<i64> = d.iter().copied().collect();
    if distinct.len() != d.len() {
        return Err(Error::InvalidArgument(
            "entries must be distinct for the infinite product".into(),
        ));
    }
    let k = d.len();
    let spread = match (distinct.first(), distinct.last()) {
        (Some(lo), Some(hi)) => (hi - lo) as u64,
        _ => 0,
    };
    let min_p = (2 * k as u64).max(spread).max(2);
    if truncation < min_p {
        return Err(Error::BelowMinimum {
            what: "truncation prime",
            value: truncation as i128,
            min: min_p as i128,
        });
    }
    let primes = primes_up_to(truncation)?;
    let mut value = 1.0f64;
    for &p in &primes {
        let nu = nu_p(d, p)?;
        let pf = p as f64;
        value *= (pf - nu as f64) / (pf - 1.0) * (pf / (pf - 1.0)).powi(k as i32 - 1);
    }
    let kk = (k * k) as f64;
    let tail = value * (kk / truncation as f64).exp_m1();
    // each factor carries a few ulps of rounding
    let rounding = value.abs() * primes.len() as f64 * (k as f64 + 3.0) * f64::EPSILON;
    Ok(InfiniteSeries {
        value,
        tail_bound: tail + rounding,
        truncation,
    })
}

fn check_budget(h: u64, k: usize, omega: usize) -> Result<()> {
    let estimate = (h as u128)
        .saturating_pow(k as u32)
        .saturating_mul(1u128 << k)
        .saturating_mul(omega.max(1) as u128);
    if estimate > SERIES_BUDGET {
        return Err(Error::BudgetExceeded {
            what: "tuple sum over [1,h]^k",
            estimate,
            budget: SERIES_BUDGET,
        });
    }
    Ok(())
}

/// Multiplicities of pattern keys over `[1,h]^k`, optionally only over
/// tuples with distinct entries.
pub fn pattern_histogram(
    ev: &SeriesEvaluator,
    h: u64,
    k: usize,
    distinct_only: bool,
) -> Result<HashMap<PatternKey, u64>> {
    if k > MAX_TUPLE_LEN {
        return Err(Error::AboveCap {
            what: "tuple length",
            value: k as u128,
            cap: MAX_TUPLE_LEN as u128,
        });
    }
    check_budget(h, k, ev.primes.len())?;
    let mut hist = HashMap::new();
    if h == 0 {
        return Ok(hist);
    }
    let mut d = vec![1i64; k];
    loop {
        let keep = !distinct_only || {
            let set: BTreeSet<i64> = d.iter().copied().collect();
            set.len() == k
        };
        if keep {
            *hist.entry(ev.key(&d)).or_insert(0) += 1;
        }
        // odometer over [1,h]^k
        let mut i = 0;
        loop {
            if i == k {
                return Ok(hist);
            }
            if d[i] < h as i64 {
                d[i] += 1;
                break;
            }
            d[i] = 1;
            i += 1;
        }
    }
}

/// Weighted sum of a per-key exact quantity, keys visited in sorted order.
fn weighted_sum<F>(hist: HashMap<PatternKey, u64>, f: F) -> BigRational
where
    F: Fn(&PatternKey) -> BigRational + Sync,
{
    let mut entries: Vec<(PatternKey, u64)> = hist.into_iter().collect();
    entries.sort_unstable();
    entries
        .par_iter()
        .map(|(key, count)| f(key) * BigRational::from_integer(BigInt::from(*count)))
        .reduce(BigRational::zero, |a, b| a + b)
}

/// `sum_{d ∈ [1,h]^k} S0(D;q)`.
pub fn sum_refined(h: u64, k: usize, q: u64, distinct_only: bool) -> Result<BigRational> {
    let ev = SeriesEvaluator::new(q)?;
    if k == 0 {
        return Ok(BigRational::one());
    }
    let hist = pattern_histogram(&ev, h, k, distinct_only)?;
    Ok(weighted_sum(hist, |key| ev.refined(key)))
}

/// `R_k(h;q) = sum over distinct d ∈ [1,h]^k of S0(D;q)`.
pub fn R_mod_q(h: u64, k: usize, q: u64) -> Result<BigRational> {
    sum_refined(h, k, q, true)
}

/// Exact `(sum over distinct d ∈ [1,h]^k of S(D;q)) / h^k`.
pub fn gallagher_ratio_exact(h: u64, k: usize, q: u64) -> Result<BigRational> {
    if h == 0 {
        return Err(Error::BelowMinimum {
            what: "h",
            value: 0,
            min: 1,
        });
    }
    let ev = SeriesEvaluator::new(q)?;
    let hist = pattern_histogram(&ev, h, k, true)?;
    let total = weighted_sum(hist, |key| ev.series(key));
    Ok(total / BigRational::from_integer(BigInt::from(h).pow(k as u32)))
}

pub fn gallagher_ratio(h: u64, k: usize, q: u64) -> Result<f64> {
    gallagher_ratio_exact(h, k, q).map(|r| rational_to_f64(&r))
}

/// `|exponential-sum form of S0(D;q) - S0(D;q)|`, relative to `1 + |S0|`.
pub fn check_S0_expansion(d: &[i64], q: u64) -> Result<f64> {
    let exact = S0_mod_q(d, q)?;
    let approx = crate::moments::S0_expsum(d, q)?;
    let e = exact.to_f64().unwrap_or(f64::NAN);
    Ok((approx - e).abs() / (1.0 + e.abs()))
}

/// Whether `value` is negative; used to exhibit a negative refined series.
pub fn is_negative(value: &BigRational) -> bool {
    value.is_negative()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::rational_from_ints;
    use proptest::prelude::*;

    fn r(n: i128, d: i128) -> BigRational {
        rational_from_ints(n, d)
    }

    #[test]
    fn nu_examples() {
        assert_eq!(nu_p(&[0, 2, 3], 2).unwrap(), 2);
        assert_eq!(nu_p(&[0, 0, 0], 7).unwrap(), 1);
        assert_eq!(nu_p(&[0, 1, 2], 3).unwrap(), 3);
        assert_eq!(nu_p(&[0, 1], 4), Err(Error::NotPrime(4)));
    }

    #[test]
    fn series_examples() {
        assert_eq!(S_mod_q(&[0, 2], 30).unwrap(), r(45, 32));
        assert_eq!(S_mod_q(&[0, 2], 2).unwrap(), r(2, 1));
        assert_eq!(S_mod_q(&[0, 1], 2).unwrap(), r(0, 1));
        assert_eq!(S_mod_q(&[0, 0], 6).unwrap(), r(3, 1));
        assert_eq!(S_mod_q(&[], 30).unwrap(), r(1, 1));
        assert_eq!(S_mod_q(&[0, 2], 12), Err(Error::NotSquarefree(12)));

        assert_eq!(S0_mod_q(&[0, 2], 30).unwrap(), r(13, 32));
        assert_eq!(S0_mod_q(&[], 30).unwrap(), r(1, 1));
        for d in -5..5 {
            for q in [1, 2, 6, 30, 210] {
                assert!(S0_mod_q(&[d], q).unwrap().is_zero());
            }
        }
    }

    #[test]
    fn evaluator_matches_direct_products() {
        let ev = SeriesEvaluator::new(210).unwrap();
        for d in [vec![0, 2], vec![1, 4, 6], vec![3, 3, 5, 10], vec![0, 1]] {
            assert_eq!(ev.series(&ev.key(&d)), S_mod_q(&d, 210).unwrap());
        }
    }

    #[test]
    fn repeated_elements() {
        let res = check_repeated_elements(&[0], &[0, 0], 6).unwrap();
        assert!(res.is_zero());
        assert!(check_repeated_elements(&[0, 2], &[0, 2, 2], 30)
            .unwrap()
            .is_zero());
        assert_eq!(S_mod_q(&[0, 2, 2], 30).unwrap(), r(675, 128));
        assert!(check_repeated_elements(&[0, 2], &[0, 2], 30)
            .unwrap()
            .is_zero());
        assert!(check_repeated_elements(&[0, 1], &[0, 2, 2], 30).is_err());
        assert!(check_repeated_elements(&[0, 0], &[0, 0], 30).is_err());
    }

    #[test]
    fn duality_exhaustive_small() {
        for q in [6, 30, 210] {
            for a in 0..4 {
                for b in 0..4 {
                    for c in 0..4 {
                        assert!(check_duality(&[a, b, c], q).unwrap().is_zero());
                        assert!(check_duality(&[a, b, c, a + b], q).unwrap().is_zero());
                    }
                }
            }
        }
    }

    #[test]
    fn infinite_product() {
        let one = S_infinite(&[0], 1000).unwrap();
        assert_eq!(one.value, 1.0);

        let twin = S_infinite(&[0, 2], 100_000).unwrap();
        assert!((twin.value - 1.320_323_6).abs() <= twin.tail_bound + 1e-7);
        assert!(twin.tail_bound < 1e-4);

        let coarse = S_infinite(&[0, 2], 1000).unwrap();
        let fine = S_infinite(&[0, 2], 100_000).unwrap();
        assert!(fine.tail_bound < coarse.tail_bound);
        assert!((coarse.value - fine.value).abs() <= coarse.tail_bound + fine.tail_bound);

        // truncation at P agrees with the finite product over primes <= P
        let q = crate::arith::primorial_u64(13).unwrap();
        let finite = S_mod_q(&[0, 2, 6], q).unwrap().to_f64().unwrap();
        let trunc = S_infinite(&[0, 2, 6], 13).unwrap();
        assert!((finite - trunc.value).abs() <= 1e-12);

        assert!(S_infinite(&[0, 0], 1000).is_err());
        assert!(S_infinite(&[0, 50], 40).is_err());
    }

    #[test]
    fn tuple_sums() {
        assert_eq!(R_mod_q(3, 2, 30).unwrap(), r(-51, 16));
        assert!(is_negative(&R_mod_q(3, 2, 30).unwrap()));
        assert_eq!(R_mod_q(3, 3, 30).unwrap(), r(57, 16));
        assert_eq!(R_mod_q(4, 3, 30).unwrap(), r(57, 4));
        for h in 1..5 {
            assert!(R_mod_q(h, 1, 30).unwrap().is_zero());
        }
        for k in 2..5 {
            assert!(R_mod_q(1, k, 30).unwrap().is_zero());
        }
        assert_eq!(sum_refined(2, 2, 6, false).unwrap(), r(2, 1));
        assert_eq!(sum_refined(4, 3, 30, false).unwrap(), r(1, 32));
        assert_eq!(sum_refined(4, 2, 30, false).unwrap(), r(37, 8));
        assert!(matches!(
            R_mod_q(100, 6, 30),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn gallagher() {
        for h in 1..6 {
            assert_eq!(gallagher_ratio_exact(h, 1, 30).unwrap(), r(1, 1));
        }
        assert_eq!(gallagher_ratio(2, 2, 2).unwrap(), 0.0);
        let q = crate::arith::primorial_u64(30).unwrap();
        let drift: Vec<f64> = [4, 8, 12]
            .iter()
            .map(|&h| (gallagher_ratio(h, 2, q).unwrap() - 1.0).abs())
            .collect();
        assert!((drift[0] - (1.0 - 0.332_569_198_217_243)).abs() < 1e-12);
        assert!(drift[0] > drift[1] && drift[1] > drift[2]);
    }

    #[test]
    fn multiplicative_in_q() {
        for d in [vec![0, 2], vec![1, 4, 6], vec![0, 1, 3, 7]] {
            let a = S_mod_q(&d, 6).unwrap() * S_mod_q(&d, 35).unwrap();
            assert_eq!(a, S_mod_q(&d, 210).unwrap());
        }
    }

    #[test]
    fn translation_invariance_exhaustive() {
        for a in 0..5 {
            for b in 0..5 {
                for c in 0..5 {
                    let d = [a, b, c];
                    for shift in [-7, 1, 13] {
                        let e = [a + shift, b + shift, c + shift];
                        for p in [2, 3, 5, 7] {
                            assert_eq!(nu_p(&d, p).unwrap(), nu_p(&e, p).unwrap());
                        }
                        assert_eq!(S0_mod_q(&d, 210).unwrap(), S0_mod_q(&e, 210).unwrap());
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn permutation_invariance(
            (d, e) in prop::collection::vec(-30i64..30, 1..6)
                .prop_flat_map(|d| (Just(d.clone()), Just(d).prop_shuffle()))
        ) {
            prop_assert_eq!(S_mod_q(&d, 210).unwrap(), S_mod_q(&e, 210).unwrap());
            prop_assert_eq!(S0_mod_q(&d, 210).unwrap(), S0_mod_q(&e, 210).unwrap());
        }

        #[test]
        fn series_is_nonnegative(d in prop::collection::vec(-50i64..50, 0..6)) {
            prop_assert!(!S_mod_q(&d, 2310).unwrap().is_negative());
        }
    }
}
