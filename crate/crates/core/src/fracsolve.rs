//! Exact counting of tuples of reduced fractions `a_i/q_i` whose sum is an
//! integer (or zero, or a fixed integer).
//!
//! Every constraint regime first materialises a per-index alphabet of
//! reduced fractions; the counting engines then work on alphabets only.
//! Two engines are provided: full enumeration, and a meet-in-the-middle join
//! on exact partial-sum keys. Both are exact and must agree.

use std::collections::HashMap;
use std::hash::Hash;
use std::time::Instant;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::arith::{gcd_u64, BigRational, Fraction, WideFraction};
use crate::error::{Error, Result};

pub const MAX_ARITY: usize = 7;
pub const MAX_ALPHABET: usize = 50_000;
/// Upper limit on enumerated partial tuples for one count.
pub const WORK_BUDGET: u128 = 50_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    /// Sum lies in ℤ.
    AnyInteger,
    /// Sum equals 0.
    Zero,
    /// Sum equals the given integer.
    Fixed(i64),
}

impl Target {
    fn as_fixed(&self) -> Option<i64> {
        match *self {
            Target::AnyInteger => None,
            Target::Zero => Some(0),
            Target::Fixed(m) => Some(m),
        }
    }
}

impl std::str::FromStr for Target {
    type Err = Error;

    /// `int`, `zero`, or `m=M`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "int" | "any" | "any-integer" => Ok(Target::AnyInteger),
            "zero" | "0" => Ok(Target::Zero),
            other => other
                .strip_prefix("m=")
                .and_then(|m| m.trim().parse().ok())
                .map(Target::Fixed)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown target {other:?}"))),
        }
    }
}

impl std::fmt::Display for Target {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Target::AnyInteger => write!(f, "int"),
            Target::Zero => write!(f, "zero"),
            Target::Fixed(m) => write!(f, "m={m}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Naive,
    MeetInTheMiddle,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "naive" => Ok(Method::Naive),
            "mitm" | "meet-in-the-middle" => Ok(Method::MeetInTheMiddle),
            other => Err(Error::InvalidArgument(format!("unknown method {other:?}"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Naive => write!(f, "naive"),
            Method::MeetInTheMiddle => write!(f, "mitm"),
        }
    }
}

/// `|a_i| <= n`, `q_i <= q_max`, all indices alike.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BoxConstraint {
    pub k: usize,
    pub n: u64,
    #[serde(rename = "Q")]
    pub q_max: u64,
    pub target: Target,
}

/// Closed interval with exact rational endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ClosedInterval {
    pub lo: Fraction,
    pub hi: Fraction,
}

impl ClosedInterval {
    pub fn new(lo: Fraction, hi: Fraction) -> Result<Self> {
        if lo > hi {
            return Err(Error::InvalidConstraint(format!(
                "interval [{lo}, {hi}] is empty"
            )));
        }
        Ok(ClosedInterval { lo, hi })
    }

    pub fn contains(&self, x: &Fraction) -> bool {
        self.lo <= *x && *x <= self.hi
    }

    pub fn length(&self) -> Result<Fraction> {
        self.hi.checked_sub(&self.lo)
    }
}

/// `a_i/q_i ∈ A_i` and `q_i <= caps[i]`, with `A_i ⊆ [-1, 1]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IntervalConstraint {
    pub intervals: Vec<ClosedInterval>,
    pub caps: Vec<u64>,
    pub target: Target,
}

/// `a_i ∈ sets[i]` and `q_i <= caps[i]`, with `sets[i] ⊆ [1, caps[i]]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NumeratorSetConstraint {
    pub sets: Vec<Vec<u64>>,
    pub caps: Vec<u64>,
    pub target: Target,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ConstraintEcho {
    Box(BoxConstraint),
    Interval(IntervalConstraint),
    NumeratorSets(NumeratorSetConstraint),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountReport {
    pub constraint: ConstraintEcho,
    pub total: u64,
    pub degenerate: Option<u64>,
    pub non_degenerate: Option<u64>,
    pub elapsed_secs: f64,
    pub method: Method,
}

fn check_arity(k: usize, odd: bool) -> Result<()> {
    if k == 0 {
        return Err(Error::EmptyTuple);
    }
    if k > MAX_ARITY {
        return Err(Error::AboveCap {
            what: "arity",
            value: k as u128,
            cap: MAX_ARITY as u128,
        });
    }
    if odd && k % 2 == 0 {
        return Err(Error::InvalidConstraint(format!(
            "arity must be odd, got {k}"
        )));
    }
    Ok(())
}

fn alphabet_overflow(len: usize) -> Error {
    Error::AboveCap {
        what: "alphabet size",
        value: len as u128,
        cap: MAX_ALPHABET as u128,
    }
}

/// Reduced fractions `a/q` with `|a| <= n`, `1 <= q <= q_max`; zero only as
/// `0/1`. Sorted ascending.
pub fn enumerate_fraction_set(n: u64, q_max: u64) -> Result<Vec<Fraction>> {
    if q_max == 0 {
        return Err(Error::BelowMinimum {
            what: "Q",
            value: 0,
            min: 1,
        });
    }
    let n = i64::try_from(n).map_err(|_| Error::Overflow("numerator bound"))?;
    let mut out = Vec::new();
    for q in 1..=q_max {
        for a in -n..=n {
            if gcd_u64(a.unsigned_abs(), q) == 1 {
                out.push(Fraction::new(a, q)?);
                if out.len() > MAX_ALPHABET {
                    return Err(alphabet_overflow(out.len()));
                }
            }
        }
    }
    out.sort_unstable();
    Ok(out)
}

/// Reduced fractions in a closed interval with denominators up to `q_max`.
pub fn enumerate_interval_set(interval: &ClosedInterval, q_max: u64) -> Result<Vec<Fraction>> {
    let mut out = Vec::new();
    for q in 1..=q_max {
        let qi = i64::try_from(q).map_err(|_| Error::Overflow("denominator cap"))?;
        // ceil(lo * q) ..= floor(hi * q)
        let lo = Integer::div_ceil(
            &(interval.lo.num() as i128 * qi as i128),
            &(interval.lo.den() as i128),
        );
        let hi = Integer::div_floor(
            &(interval.hi.num() as i128 * qi as i128),
            &(interval.hi.den() as i128),
        );
        for a in lo..=hi {
            let a = a as i64;
            if gcd_u64(a.unsigned_abs(), q) == 1 {
                out.push(Fraction::new(a, q)?);
                if out.len() > MAX_ALPHABET {
                    return Err(alphabet_overflow(out.len()));
                }
            }
        }
    }
    out.sort_unstable();
    Ok(out)
}

/// Reduced fractions `a/q` with `a ∈ set`, `q <= q_max`.
pub fn enumerate_numerator_set(set: &[u64], q_max: u64) -> Result<Vec<Fraction>> {
    let mut out = Vec::new();
    for &a in set {
        let ai = i64::try_from(a).map_err(|_| Error::Overflow("numerator"))?;
        for q in 1..=q_max {
            if gcd_u64(a, q) == 1 {
                out.push(Fraction::new(ai, q)?);
                if out.len() > MAX_ALPHABET {
                    return Err(alphabet_overflow(out.len()));
                }
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

impl BoxConstraint {
    pub fn validate(&self) -> Result<()> {
        check_arity(self.k, false)?;
        if self.q_max == 0 {
            return Err(Error::BelowMinimum {
                what: "Q",
                value: 0,
                min: 1,
            });
        }
        Ok(())
    }

    pub fn alphabets(&self) -> Result<Vec<Vec<Fraction>>> {
        self.validate()?;
        let a = enumerate_fraction_set(self.n, self.q_max)?;
        Ok(vec![a; self.k])
    }
}

impl IntervalConstraint {
    pub fn validate(&self) -> Result<()> {
        check_arity(self.intervals.len(), true)?;
        if self.caps.len() != self.intervals.len() {
            return Err(Error::InvalidConstraint(format!(
                "{} intervals but {} caps",
                self.intervals.len(),
                self.caps.len()
            )));
        }
        let unit = ClosedInterval {
            lo: Fraction::integer(-1),
            hi: Fraction::integer(1),
        };
        for (i, (iv, &cap)) in self.intervals.iter().zip(&self.caps).enumerate() {
            if cap == 0 {
                return Err(Error::InvalidConstraint(format!(
                    "Q_{} must be >= 1",
                    i + 1
                )));
            }
            if iv.lo > iv.hi || !unit.contains(&iv.lo) || !unit.contains(&iv.hi) {
                return Err(Error::InvalidConstraint(format!(
                    "A_{} = [{}, {}] is not an interval inside [-1, 1]",
                    i + 1,
                    iv.lo,
                    iv.hi
                )));
            }
            // δ_i >= 1/Q_i  <=>  δ_i · Q_i >= 1
            let len = iv.length()?;
            if (len.num() as i128) * (cap as i128) < len.den() as i128 {
                return Err(Error::InvalidConstraint(format!(
                    "A_{} has length {} < 1/{}",
                    i + 1,
                    len,
                    cap
                )));
            }
        }
        Ok(())
    }

    pub fn alphabets(&self) -> Result<Vec<Vec<Fraction>>> {
        self.validate()?;
        self.intervals
            .iter()
            .zip(&self.caps)
            .map(|(iv, &cap)| enumerate_interval_set(iv, cap))
            .collect()
    }
}

impl NumeratorSetConstraint {
    pub fn validate(&self) -> Result<()> {
        check_arity(self.sets.len(), true)?;
        if self.caps.len() != self.sets.len() {
            return Err(Error::InvalidConstraint(format!(
                "{} numerator sets but {} caps",
                self.sets.len(),
                self.caps.len()
            )));
        }
        for (i, (set, &cap)) in self.sets.iter().zip(&self.caps).enumerate() {
            if set.is_empty() {
                return Err(Error::InvalidConstraint(format!("B_{} is empty", i + 1)));
            }
            if let Some(a) = set.iter().find(|&&a| a == 0 || a > cap) {
                return Err(Error::InvalidConstraint(format!(
                    "B_{} contains {} outside [1, {}]",
                    i + 1,
                    a,
                    cap
                )));
            }
        }
        Ok(())
    }

    pub fn alphabets(&self) -> Result<Vec<Vec<Fraction>>> {
        self.validate()?;
        self.sets
            .iter()
            .zip(&self.caps)
            .map(|(set, &cap)| enumerate_numerator_set(set, cap))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Sum representations

/// Exact arithmetic on partial sums, with the keys used by the join.
trait SumRepr: Sync {
    type V: Copy + Send + Sync + Eq + Hash;

    fn zero(&self) -> Self::V;
    fn add(&self, a: Self::V, b: Self::V) -> Result<Self::V>;
    /// `Some(m)` when the value is the integer `m`.
    fn integer_value(&self, v: Self::V) -> Option<i128>;
    /// Join key of a partial sum from the right half.
    fn key(&self, v: Self::V, target: Target) -> Self::V;
    /// Key a right-half sum must have to complete the left-half sum `v`.
    fn complement(&self, v: Self::V, target: Target) -> Result<Self::V>;
}

/// Values scaled by a common denominator `modulus` into machine integers.
struct Scaled {
    modulus: i64,
}

impl SumRepr for Scaled {
    type V = i64;

    fn zero(&self) -> i64 {
        0
    }

    fn add(&self, a: i64, b: i64) -> Result<i64> {
        a.checked_add(b)
            .ok_or(Error::Overflow("scaled partial sum"))
    }

    fn integer_value(&self, v: i64) -> Option<i128> {
        (v % self.modulus == 0).then(|| (v / self.modulus) as i128)
    }

    fn key(&self, v: i64, target: Target) -> i64 {
        match target {
            Target::AnyInteger => v.rem_euclid(self.modulus),
            _ => v,
        }
    }

    fn complement(&self, v: i64, target: Target) -> Result<i64> {
        match target.as_fixed() {
            None => Ok((-v).rem_euclid(self.modulus)),
            Some(m) => m
                .checked_mul(self.modulus)
                .and_then(|t| t.checked_sub(v))
                .ok_or(Error::Overflow("scaled join key")),
        }
    }
}

struct Exact;

impl SumRepr for Exact {
    type V = WideFraction;

    fn zero(&self) -> WideFraction {
        WideFraction::ZERO
    }

    fn add(&self, a: WideFraction, b: WideFraction) -> Result<WideFraction> {
        a.checked_add(&b)
    }

    fn integer_value(&self, v: WideFraction) -> Option<i128> {
        v.is_integer().then_some(v.num)
    }

    fn key(&self, v: WideFraction, target: Target) -> WideFraction {
        match target {
            Target::AnyInteger => v.fract(),
            _ => v,
        }
    }

    fn complement(&self, v: WideFraction, target: Target) -> Result<WideFraction> {
        match target.as_fixed() {
            None => Ok(v.neg().fract()),
            Some(m) => WideFraction::integer(m as i128).checked_add(&v.neg()),
        }
    }
}

/// Picks the scaled representation when a common denominator keeps every
/// partial sum (and every fixed target) comfortably inside `i64`.
fn scaled_repr(alphabets: &[Vec<Fraction>], target: Target) -> Option<(Scaled, Vec<Vec<i64>>)> {
    let mut modulus: u128 = 1;
    for x in alphabets.iter().flatten() {
        let d = x.den() as u128;
        modulus = modulus / modulus.gcd(&d) * d;
        if modulus > 1 << 40 {
            return None;
        }
    }
    let max_abs = alphabets
        .iter()
        .flatten()
        .map(|x| x.num().unsigned_abs() as u128 * (modulus / x.den() as u128))
        .max()
        .unwrap_or(0);
    let fixed = target.as_fixed().unwrap_or(0).unsigned_abs() as u128 * modulus;
    let bound = max_abs
        .checked_mul(alphabets.len() as u128 + 1)?
        .checked_add(fixed)?;
    if bound >= 1 << 62 {
        return None;
    }
    let m = modulus as i64;
    let values = alphabets
        .iter()
        .map(|a| a.iter().map(|x| x.num() * (m / x.den())).collect())
        .collect();
    Some((Scaled { modulus: m }, values))
}

fn wide_values(alphabets: &[Vec<Fraction>]) -> Vec<Vec<WideFraction>> {
    alphabets
        .iter()
        .map(|a| a.iter().map(|&x| WideFraction::from(x)).collect())
        .collect()
}

/// Rejects configurations whose total tuple count could overflow `u64`, or
/// whose enumeration work exceeds the budget.
fn check_sizes(alphabets: &[Vec<Fraction>], method: Method) -> Result<()> {
    let mut total: u128 = 1;
    for a in alphabets {
        if a.len() > MAX_ALPHABET {
            return Err(alphabet_overflow(a.len()));
        }
        total = total.saturating_mul(a.len() as u128);
    }
    if total >= 1 << 63 {
        return Err(Error::AboveCap {
            what: "number of candidate tuples",
            value: total,
            cap: 1 << 63,
        });
    }
    let work = match method {
        Method::Naive => total,
        Method::MeetInTheMiddle => {
            let (left, right) = alphabets.split_at(alphabets.len() / 2);
            let prod = |s: &[Vec<Fraction>]| s.iter().map(|a| a.len() as u128).product::<u128>();
            prod(left) + prod(right)
        }
    };
    if work > WORK_BUDGET {
        return Err(Error::BudgetExceeded {
            what: "tuple enumeration",
            estimate: work,
            budget: WORK_BUDGET,
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Naive engine

/// Histogram of integer-valued sums.
type IntegerTally = HashMap<i128, u64>;

fn naive_dfs<R: SumRepr>(
    repr: &R,
    values: &[Vec<R::V>],
    sum: R::V,
    tally: &mut IntegerTally,
) -> Result<()> {
    match values {
        [] => {
            if let Some(m) = repr.integer_value(sum) {
                *tally.entry(m).or_default() += 1;
            }
            Ok(())
        }
        [last] => {
            for &x in last {
                if let Some(m) = repr.integer_value(repr.add(sum, x)?) {
                    *tally.entry(m).or_default() += 1;
                }
            }
            Ok(())
        }
        [first, rest @ ..] => {
            for &x in first {
                naive_dfs(repr, rest, repr.add(sum, x)?, tally)?;
            }
            Ok(())
        }
    }
}

fn naive_tally_with<R: SumRepr>(repr: &R, values: &[Vec<R::V>]) -> Result<IntegerTally> {
    let (first, rest) = values.split_first().ok_or(Error::EmptyTuple)?;
    first
        .par_iter()
        .map(|&x| {
            let mut tally = IntegerTally::new();
            naive_dfs(repr, rest, x, &mut tally)?;
            Ok(tally)
        })
        .try_reduce(IntegerTally::new, |mut a, b| {
            for (m, c) in b {
                *a.entry(m).or_default() += c;
            }
            Ok(a)
        })
}

/// Full enumeration: number of tuples with each integer sum value.
pub fn naive_integer_sums(alphabets: &[Vec<Fraction>]) -> Result<IntegerTally> {
    check_sizes(alphabets, Method::Naive)?;
    match scaled_repr(alphabets, Target::AnyInteger) {
        Some((repr, values)) => naive_tally_with(&repr, &values),
        None => naive_tally_with(&Exact, &wide_values(alphabets)),
    }
}

fn tally_count(tally: &IntegerTally, target: Target) -> u64 {
    match target.as_fixed() {
        None => tally.values().sum(),
        Some(m) => tally.get(&(m as i128)).copied().unwrap_or(0),
    }
}

// ---------------------------------------------------------------------------
// Meet-in-the-middle engine

fn half_sums<R: SumRepr>(
    repr: &R,
    values: &[Vec<R::V>],
    target: Target,
    keyed: bool,
) -> Result<HashMap<R::V, u64>> {
    let mut sums: HashMap<R::V, u64> = HashMap::new();
    sums.insert(repr.zero(), 1);
    for alphabet in values {
        let mut next: HashMap<R::V, u64> = HashMap::with_capacity(sums.len() * alphabet.len());
        for (&s, &c) in &sums {
            for &x in alphabet {
                let v = repr.add(s, x)?;
                let v = if keyed { repr.key(v, target) } else { v };
                *next.entry(v).or_default() += c;
            }
        }
        sums = next;
    }
    Ok(sums)
}

fn mitm_with<R: SumRepr>(repr: &R, values: &[Vec<R::V>], target: Target) -> Result<u64> {
    let (left, right) = values.split_at(values.len() / 2);
    // Reducing the left half modulo 1 is also exact for any-integer targets.
    let left_sums = half_sums(repr, left, target, true)?;
    let right_sums = half_sums(repr, right, target, true)?;
    let left_entries: Vec<(R::V, u64)> = left_sums.into_iter().collect();
    left_entries
        .par_iter()
        .map(|&(s, c)| {
            let want = repr.complement(s, target)?;
            Ok(c * right_sums.get(&want).copied().unwrap_or(0))
        })
        .try_reduce(|| 0u64, |a, b| Ok(a + b))
}

/// Meet-in-the-middle count over per-index alphabets.
pub fn mitm_count(alphabets: &[Vec<Fraction>], target: Target) -> Result<u64> {
    check_sizes(alphabets, Method::MeetInTheMiddle)?;
    match scaled_repr(alphabets, target) {
        Some((repr, values)) => mitm_with(&repr, &values, target),
        None => mitm_with(&Exact, &wide_values(alphabets), target),
    }
}

/// Counts tuples `(x_1..x_k)`, `x_i ∈ alphabets[i]`, whose sum meets `target`.
pub fn count_tuples(alphabets: &[Vec<Fraction>], target: Target, method: Method) -> Result<u64> {
    if alphabets.is_empty() {
        return Err(Error::EmptyTuple);
    }
    match method {
        Method::Naive => Ok(tally_count(&naive_integer_sums(alphabets)?, target)),
        Method::MeetInTheMiddle => mitm_count(alphabets, target),
    }
}

fn report(constraint: ConstraintEcho, total: u64, start: Instant, method: Method) -> CountReport {
    CountReport {
        constraint,
        total,
        degenerate: None,
        non_degenerate: None,
        elapsed_secs: start.elapsed().as_secs_f64(),
        method,
    }
}

pub fn count_box(c: &BoxConstraint, method: Method) -> Result<CountReport> {
    let start = Instant::now();
    let total = count_tuples(&c.alphabets()?, c.target, method)?;
    Ok(report(ConstraintEcho::Box(*c), total, start, method))
}

pub fn count_interval(c: &IntervalConstraint, method: Method) -> Result<CountReport> {
    let start = Instant::now();
    let total = count_tuples(&c.alphabets()?, c.target, method)?;
    Ok(report(
        ConstraintEcho::Interval(c.clone()),
        total,
        start,
        method,
    ))
}

pub fn count_numerator_sets(c: &NumeratorSetConstraint, method: Method) -> Result<CountReport> {
    let start = Instant::now();
    let total = count_tuples(&c.alphabets()?, c.target, method)?;
    Ok(report(
        ConstraintEcho::NumeratorSets(c.clone()),
        total,
        start,
        method,
    ))
}

// ---------------------------------------------------------------------------
// Solution enumeration and degeneracy

/// Calls `visit` on every tuple meeting `target`. The last coordinate is
/// looked up from the exact value (or fractional part) it is forced to take.
pub fn for_each_solution<F>(alphabets: &[Vec<Fraction>], target: Target, visit: F) -> Result<()>
where
    F: Fn(&[Fraction]) -> Result<()> + Sync,
{
    let k = alphabets.len();
    if k == 0 {
        return Err(Error::EmptyTuple);
    }
    check_sizes(&alphabets[..k - 1], Method::Naive)?;
    let mut last: HashMap<WideFraction, Vec<Fraction>> = HashMap::new();
    for &x in &alphabets[k - 1] {
        last.entry(Exact.key(x.into(), target)).or_default().push(x);
    }
    let prefix_alphabets = &alphabets[..k - 1];

    fn walk<F>(
        prefix_alphabets: &[Vec<Fraction>],
        last: &HashMap<WideFraction, Vec<Fraction>>,
        target: Target,
        tuple: &mut Vec<Fraction>,
        sum: WideFraction,
        visit: &F,
    ) -> Result<()>
    where
        F: Fn(&[Fraction]) -> Result<()> + Sync,
    {
        let depth = tuple.len();
        if depth == prefix_alphabets.len() {
            let want = Exact.complement(sum, target)?;
            if let Some(xs) = last.get(&want) {
                for &x in xs {
                    tuple.push(x);
                    visit(tuple)?;
                    tuple.pop();
                }
            }
            return Ok(());
        }
        for &x in &prefix_alphabets[depth] {
            tuple.push(x);
            walk(
                prefix_alphabets,
                last,
                target,
                tuple,
                sum.checked_add(&x.into())?,
                visit,
            )?;
            tuple.pop();
        }
        Ok(())
    }

    if prefix_alphabets.is_empty() {
        let mut tuple = Vec::with_capacity(1);
        return walk(
            prefix_alphabets,
            &last,
            target,
            &mut tuple,
            WideFraction::ZERO,
            &visit,
        );
    }
    prefix_alphabets[0].par_iter().try_for_each(|&x| {
        let mut tuple = Vec::with_capacity(k);
        tuple.push(x);
        walk(
            prefix_alphabets,
            &last,
            target,
            &mut tuple,
            x.into(),
            &visit,
        )
    })
}

/// A zero-sum tuple is degenerate when some proper non-empty sub-tuple
/// already sums to zero.
pub fn is_degenerate(tuple: &[Fraction]) -> Result<bool> {
    let k = tuple.len();
    let full = (1u32 << k) - 1;
    for mask in 1..full {
        let mut s = WideFraction::ZERO;
        for (i, &x) in tuple.iter().enumerate() {
            if mask >> i & 1 == 1 {
                s = s.checked_add(&x.into())?;
            }
        }
        if s.is_zero() {
            return Ok(true);
        }
    }
    Ok(false)
}

pub const MAX_CLASSIFY_ARITY: usize = 5;

/// Counts zero-sum tuples and splits them into degenerate and
/// non-degenerate solutions.
pub fn classify_degenerate(c: &BoxConstraint) -> Result<CountReport> {
    if c.target != Target::Zero {
        return Err(Error::InvalidConstraint(
            "degeneracy is only defined for target zero".into(),
        ));
    }
    if c.k > MAX_CLASSIFY_ARITY {
        return Err(Error::AboveCap {
            what: "arity for degeneracy classification",
            value: c.k as u128,
            cap: MAX_CLASSIFY_ARITY as u128,
        });
    }
    let start = Instant::now();
    let alphabets = c.alphabets()?;
    let degenerate = std::sync::atomic::AtomicU64::new(0);
    let non_degenerate = std::sync::atomic::AtomicU64::new(0);
    for_each_solution(&alphabets, Target::Zero, |t| {
        let counter = if is_degenerate(t)? {
            &degenerate
        } else {
            &non_degenerate
        };
        counter.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        Ok(())
    })?;
    let degenerate = degenerate.into_inner();
    let non_degenerate = non_degenerate.into_inner();
    let mut r = report(
        ConstraintEcho::Box(*c),
        degenerate + non_degenerate,
        start,
        Method::Naive,
    );
    r.degenerate = Some(degenerate);
    r.non_degenerate = Some(non_degenerate);
    Ok(r)
}

// ---------------------------------------------------------------------------
// Reference quantities

/// Reference curves for ratio reporting. Nothing here is a pass/fail bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxReference {
    /// `n^{(k+1)/2} Q^{(k-1)/2}`.
    pub upper_shape: f64,
    /// `n^2 Q`, the size of the three-term diagonal family (`k = 3`).
    pub lower_n2q: Option<u128>,
    /// `n^{k-1} Q`, expected order of non-degenerate zero-sum solutions.
    pub nondegenerate_heuristic: u128,
}

pub fn box_reference(c: &BoxConstraint) -> BoxReference {
    let (n, q, k) = (c.n as f64, c.q_max as f64, c.k as f64);
    let upper_shape = n.powf((k + 1.0) / 2.0) * q.powf((k - 1.0) / 2.0);
    let n_big = c.n as u128;
    BoxReference {
        upper_shape,
        lower_n2q: (c.k == 3).then(|| n_big * n_big * c.q_max as u128),
        nondegenerate_heuristic: n_big
            .saturating_pow(c.k.saturating_sub(1) as u32)
            .saturating_mul(c.q_max as u128),
    }
}

/// Minimum over index sets `X` with `|X| = (k+1)/2` of
/// `(prod_{i∈X} δ_i) · prod_i Q_i`, with the minimising `X` (1-based).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SetReference {
    #[serde(serialize_with = "serialize_rational")]
    pub value: BigRational,
    pub minimizing_set: Vec<usize>,
}

fn serialize_rational<S: serde::Serializer>(
    r: &BigRational,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&crate::arith::rational_string(r))
}

fn min_over_half_sets(weights: &[BigRational], caps: &[u64]) -> SetReference {
    let arity = weights.len();
    let size = arity.div_ceil(2);
    let all: BigRational = caps
        .iter()
        .map(|&q| BigRational::from_integer(BigInt::from(q)))
        .fold(BigRational::one(), |a, b| a * b);
    let mut best: Option<(BigRational, u32)> = None;
    for mask in 0u32..(1 << arity) {
        if mask.count_ones() as usize != size {
            continue;
        }
        let v = (0..arity)
            .filter(|i| mask >> i & 1 == 1)
            .fold(all.clone(), |acc, i| acc * &weights[i]);
        if best.as_ref().is_none_or(|(b, _)| v < *b) {
            best = Some((v, mask));
        }
    }
    let (value, mask) = best.unwrap_or((BigRational::zero(), 0));
    SetReference {
        value,
        minimizing_set: (0..arity)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| i + 1)
            .collect(),
    }
}

pub fn interval_reference(c: &IntervalConstraint) -> Result<SetReference> {
    let lengths = c
        .intervals
        .iter()
        .map(|iv| iv.length().map(|l| l.to_big()))
        .collect::<Result<Vec<_>>>()?;
    Ok(min_over_half_sets(&lengths, &c.caps))
}

/// Same shape with `|B_i| / Q_i` in place of `δ_i`, i.e.
/// `prod_{i∈X} |B_i| prod_{j∉X} Q_j`.
pub fn numerator_set_reference(c: &NumeratorSetConstraint) -> SetReference {
    let ratios: Vec<BigRational> = c
        .sets
        .iter()
        .zip(&c.caps)
        .map(|(s, &q)| BigRational::new(BigInt::from(s.len()), BigInt::from(q.max(1))))
        .collect();
    min_over_half_sets(&ratios, &c.caps)
}

/// Number of triples `(a_1, a_2, q)` with `0 <= a_i <= n`, `q <= Q` and
/// `gcd(a_i, q) = 1`; each yields the solution `a_1/q + a_2/q - (a_1+a_2)/q`.
pub fn diagonal_family_size(n: u64, q_max: u64) -> u64 {
    (1..=q_max)
        .map(|q| {
            let coprime = (0..=n).filter(|&a| gcd_u64(a, q) == 1).count() as u64;
            coprime * coprime
        })
        .sum()
}

pub fn upper_shape_ratio(count: u64, c: &BoxConstraint) -> f64 {
    count.to_f64().unwrap_or(f64::NAN) / box_reference(c).upper_shape
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relgcd::decompose_local;

    fn frac(n: i64, d: u64) -> Fraction {
        Fraction::new(n, d).unwrap()
    }

    fn boxc(k: usize, n: u64, q: u64, target: Target) -> BoxConstraint {
        BoxConstraint {
            k,
            n,
            q_max: q,
            target,
        }
    }

    fn both(c: &BoxConstraint) -> u64 {
        let a = count_box(c, Method::Naive).unwrap().total;
        let b = count_box(c, Method::MeetInTheMiddle).unwrap().total;
        assert_eq!(a, b, "{c:?}");
        a
    }

    #[test]
    fn alphabet_examples() {
        assert_eq!(
            enumerate_fraction_set(1, 2).unwrap(),
            vec![frac(-1, 1), frac(-1, 2), frac(0, 1), frac(1, 2), frac(1, 1)]
        );
        assert_eq!(
            enumerate_fraction_set(1, 1).unwrap(),
            vec![frac(-1, 1), frac(0, 1), frac(1, 1)]
        );
        assert_eq!(enumerate_fraction_set(2, 3).unwrap().len(), 11);
        assert!(enumerate_fraction_set(1, 0).is_err());
        assert!(matches!(
            enumerate_fraction_set(1, 30_000),
            Err(Error::AboveCap { .. })
        ));
    }

    #[test]
    fn box_examples() {
        assert_eq!(both(&boxc(3, 1, 1, Target::AnyInteger)), 27);
        assert_eq!(both(&boxc(3, 1, 2, Target::AnyInteger)), 63);
        assert_eq!(both(&boxc(3, 1, 1, Target::Zero)), 7);
        // brute-force oracle values (Python, exact Fraction arithmetic)
        assert_eq!(both(&boxc(3, 2, 4, Target::AnyInteger)), 363);
        assert_eq!(both(&boxc(3, 2, 4, Target::Fixed(1))), 67);
        assert_eq!(both(&boxc(5, 1, 2, Target::AnyInteger)), 1563);
        assert_eq!(both(&boxc(5, 1, 2, Target::Zero)), 381);
        assert_eq!(both(&boxc(5, 1, 2, Target::Fixed(1)),), 320);
    }

    #[test]
    fn exact_path_agrees_with_scaled_path() {
        // Denominators up to 60 push the common denominator past the scaled
        // representation, forcing the exact path.
        let alph = enumerate_fraction_set(1, 60).unwrap();
        assert!(scaled_repr(&vec![alph.clone(); 3], Target::AnyInteger).is_none());
        let alphabets = vec![alph; 3];
        let naive = tally_count(
            &naive_tally_with(&Exact, &wide_values(&alphabets)).unwrap(),
            Target::AnyInteger,
        );
        let mitm = mitm_with(&Exact, &wide_values(&alphabets), Target::AnyInteger).unwrap();
        assert_eq!(naive, mitm);
        let mut forced = std::sync::atomic::AtomicU64::new(0);
        for_each_solution(&alphabets, Target::AnyInteger, |_| {
            forced.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
            Ok(())
        })
        .unwrap();
        assert_eq!(*forced.get_mut(), naive);
    }

    #[test]
    fn interval_examples() {
        let unit = ClosedInterval::new(frac(-1, 1), frac(1, 1)).unwrap();
        for q in 1..=4 {
            let c = IntervalConstraint {
                intervals: vec![unit; 3],
                caps: vec![q; 3],
                target: Target::AnyInteger,
            };
            let n = count_interval(&c, Method::MeetInTheMiddle).unwrap().total;
            // box alphabet with n = Q cut down to [-1, 1]
            let alph: Vec<Fraction> = enumerate_fraction_set(q, q)
                .unwrap()
                .into_iter()
                .filter(|x| unit.contains(x))
                .collect();
            assert_eq!(
                n,
                count_tuples(&vec![alph; 3], Target::AnyInteger, Method::Naive).unwrap()
            );
            if q == 1 {
                assert_eq!(n, both(&boxc(3, 1, 1, Target::AnyInteger)));
            }
        }

        let half = ClosedInterval::new(frac(0, 1), frac(1, 2)).unwrap();
        let c = IntervalConstraint {
            intervals: vec![half; 3],
            caps: vec![4; 3],
            target: Target::AnyInteger,
        };
        assert_eq!(
            c.alphabets().unwrap()[0],
            vec![frac(0, 1), frac(1, 4), frac(1, 3), frac(1, 2)]
        );
        assert_eq!(count_interval(&c, Method::Naive).unwrap().total, 8);
        assert_eq!(
            count_interval(&c, Method::MeetInTheMiddle).unwrap().total,
            8
        );

        let narrow = ClosedInterval::new(frac(-1, 10), frac(0, 1)).unwrap();
        let c = IntervalConstraint {
            intervals: vec![narrow; 3],
            caps: vec![10; 3],
            target: Target::Zero,
        };
        assert!(count_interval(&c, Method::Naive).unwrap().total >= 1);
    }

    #[test]
    fn interval_validation() {
        let short = ClosedInterval::new(frac(0, 1), frac(1, 5)).unwrap();
        let c = IntervalConstraint {
            intervals: vec![short; 3],
            caps: vec![4; 3],
            target: Target::AnyInteger,
        };
        assert!(matches!(c.validate(), Err(Error::InvalidConstraint(_))));
        let wide = ClosedInterval::new(frac(-2, 1), frac(1, 1)).unwrap();
        let c = IntervalConstraint {
            intervals: vec![wide; 3],
            caps: vec![4; 3],
            target: Target::AnyInteger,
        };
        assert!(c.validate().is_err());
        let unit = ClosedInterval::new(frac(-1, 1), frac(1, 1)).unwrap();
        let c = IntervalConstraint {
            intervals: vec![unit; 2],
            caps: vec![4; 2],
            target: Target::AnyInteger,
        };
        assert!(c.validate().is_err());
        assert!(ClosedInterval::new(frac(1, 2), frac(0, 1)).is_err());
    }

    #[test]
    fn numerator_set_examples() {
        let c = NumeratorSetConstraint {
            sets: vec![vec![1]; 3],
            caps: vec![1; 3],
            target: Target::AnyInteger,
        };
        assert_eq!(count_numerator_sets(&c, Method::Naive).unwrap().total, 1);

        let c = NumeratorSetConstraint {
            sets: vec![vec![1, 2]; 3],
            caps: vec![3; 3],
            target: Target::AnyInteger,
        };
        for m in [Method::Naive, Method::MeetInTheMiddle] {
            assert_eq!(count_numerator_sets(&c, m).unwrap().total, 28);
        }

        // full range equals the positive part of the box alphabet with n = Q
        let q = 5;
        let c = NumeratorSetConstraint {
            sets: vec![(1..=q).collect(); 3],
            caps: vec![q; 3],
            target: Target::AnyInteger,
        };
        let positive: Vec<Fraction> = enumerate_fraction_set(q, q)
            .unwrap()
            .into_iter()
            .filter(|x| x.num() > 0)
            .collect();
        assert_eq!(c.alphabets().unwrap()[0], positive);
        assert_eq!(
            count_numerator_sets(&c, Method::MeetInTheMiddle)
                .unwrap()
                .total,
            count_tuples(&vec![positive; 3], Target::AnyInteger, Method::Naive).unwrap()
        );

        let bad = NumeratorSetConstraint {
            sets: vec![vec![1, 4]; 3],
            caps: vec![3; 3],
            target: Target::AnyInteger,
        };
        assert!(count_numerator_sets(&bad, Method::Naive).is_err());
    }

    #[test]
    fn degeneracy() {
        assert!(!is_degenerate(&[frac(1, 2), frac(1, 2), frac(-1, 1)]).unwrap());
        assert!(is_degenerate(&[frac(1, 2), frac(-1, 2), frac(0, 1)]).unwrap());
        let r = classify_degenerate(&boxc(3, 2, 4, Target::Zero)).unwrap();
        assert_eq!(r.degenerate, Some(37));
        assert_eq!(r.non_degenerate, Some(36));
        assert_eq!(r.total, both(&boxc(3, 2, 4, Target::Zero)));
        assert!(classify_degenerate(&boxc(3, 2, 4, Target::AnyInteger)).is_err());
        assert!(classify_degenerate(&boxc(6, 1, 1, Target::Zero)).is_err());
    }

    #[test]
    fn references() {
        let r = box_reference(&boxc(3, 4, 16, Target::AnyInteger));
        assert_eq!(r.upper_shape, 256.0);
        assert_eq!(r.lower_n2q, Some(256));
        assert_eq!(
            box_reference(&boxc(3, 8, 8, Target::Zero)).nondegenerate_heuristic,
            512
        );
        assert_eq!(
            box_reference(&boxc(5, 8, 8, Target::Zero)).nondegenerate_heuristic,
            32768
        );

        let caps = vec![3u64, 5, 7];
        let c = IntervalConstraint {
            intervals: caps
                .iter()
                .map(|&q| ClosedInterval::new(Fraction::ZERO, frac(1, q)).unwrap())
                .collect(),
            caps: caps.clone(),
            target: Target::AnyInteger,
        };
        let r = interval_reference(&c).unwrap();
        // with δ_i = 1/Q_i the product is prod_{i∉X} Q_i; smallest leaves out Q = 3
        assert_eq!(r.value, BigRational::from_integer(3.into()));
        assert_eq!(r.minimizing_set, vec![2, 3]);
    }

    #[test]
    fn singleton_gcds_are_trivial_on_solutions() {
        for n in 1..=4 {
            for q in 1..=6 {
                let alphabets = boxc(3, n, q, Target::AnyInteger).alphabets().unwrap();
                for_each_solution(&alphabets, Target::AnyInteger, |t| {
                    let dens: Vec<u64> = t.iter().map(|x| x.den() as u64).collect();
                    let d = decompose_local(&dens)?;
                    for i in 1..=3 {
                        assert_eq!(d.singleton(i), 1, "{t:?}");
                    }
                    Ok(())
                })
                .unwrap();
            }
        }
    }

    #[test]
    fn target_parsing() {
        assert_eq!("int".parse::<Target>().unwrap(), Target::AnyInteger);
        assert_eq!("zero".parse::<Target>().unwrap(), Target::Zero);
        assert_eq!("m=-2".parse::<Target>().unwrap(), Target::Fixed(-2));
        assert!("m=x".parse::<Target>().is_err());
        assert_eq!("mitm".parse::<Method>().unwrap(), Method::MeetInTheMiddle);
    }

    #[test]
    fn oversized_configurations_are_rejected() {
        let alph = enumerate_fraction_set(40, 40).unwrap();
        let err = count_tuples(&vec![alph; 7], Target::AnyInteger, Method::Naive).unwrap_err();
        assert!(matches!(
            err,
            Error::AboveCap { .. } | Error::BudgetExceeded { .. }
        ));
        assert!(count_box(&boxc(8, 1, 1, Target::Zero), Method::Naive).is_err());
    }
}
