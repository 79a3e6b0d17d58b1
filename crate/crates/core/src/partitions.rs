//! Set partitions of `{1..k}` and the identities that rewrite the sum of
//! `S0` over distinct tuples as a combination of the moments `V_j`.
//!
//! `1_{d distinct} = sum_P w(P) Delta_P(d)`, where `w(P)` is the signed count
//! of graphs whose connected components are the blocks of `P`. Expanding
//! `S0` and collapsing repeated entries turns each partition into
//! polynomials in `z = q/phi(q)`:
//! `P_l(z) = ((1-z)^l - 1)/z` and
//! `f_{R,P}(z) = prod_{m∈R} P_{|S_m|}(z) prod_{m∉R} (1 + P_{|S_m|}(z))`.

#![allow(non_snake_case)]

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::arith::{binomial, rational_string, totient, BigRational};
use crate::error::{Error, Result};
use crate::singular::{R_mod_q, SeriesEvaluator};

pub const MAX_PARTITION_SIZE: usize = 8;
pub const MAX_EDGE_SLOTS: usize = 24;
/// Limit on enumerated tuples in the lemma check.
pub const LEMMA_BUDGET: u128 = 1_000_000;

/// Partition of `{1..k}` into non-empty blocks, each sorted, blocks ordered
/// by their least element.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct SetPartition {
    k: usize,
    blocks: Vec<Vec<usize>>,
}

impl SetPartition {
    pub fn from_blocks(mut blocks: Vec<Vec<usize>>) -> Result<Self> {
        let k: usize = blocks.iter().map(Vec::len).sum();
        let mut seen = vec![false; k + 1];
        for block in &mut blocks {
            if block.is_empty() {
                return Err(Error::InvalidArgument("empty block".into()));
            }
            block.sort_unstable();
            for &i in block.iter() {
                if i == 0 || i > k || seen[i] {
                    return Err(Error::InvalidArgument(format!(
                        "blocks do not partition 1..{k}"
                    )));
                }
                seen[i] = true;
            }
        }
        blocks.sort_unstable_by_key(|b| b[0]);
        Ok(SetPartition { k, blocks })
    }

    /// From a restricted growth string `a` with `a[0] = 0`,
    /// `a[i] <= 1 + max(a[..i])`.
    fn from_growth_string(a: &[usize]) -> Self {
        let m = a.iter().copied().max().map_or(0, |x| x + 1);
        let mut blocks = vec![Vec::new(); m];
        for (i, &b) in a.iter().enumerate() {
            blocks[b].push(i + 1);
        }
        SetPartition { k: a.len(), blocks }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    /// Number of blocks `M`.
    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Number of singleton blocks `N_1`.
    pub fn num_singletons(&self) -> usize {
        self.blocks.iter().filter(|b| b.len() == 1).count()
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(Vec::len).collect()
    }

    /// Block index (0-based) of each element `1..k`.
    pub fn block_index(&self) -> Vec<usize> {
        let mut idx = vec![0; self.k];
        for (m, b) in self.blocks.iter().enumerate() {
            for &i in b {
                idx[i - 1] = m;
            }
        }
        idx
    }

    /// `Delta_P(d)`: whether `d` is constant on every block.
    pub fn delta(&self, d: &[i64]) -> bool {
        self.blocks
            .iter()
            .all(|b| b.iter().all(|&i| d[i - 1] == d[b[0] - 1]))
    }
}

impl fmt::Display for SetPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.blocks {
            let items: Vec<String> = b.iter().map(|i| i.to_string()).collect();
            write!(f, "{{{}}}", items.join(","))?;
        }
        Ok(())
    }
}

/// All partitions of `{1..k}`, in lexicographic order of their restricted
/// growth strings.
pub fn enumerate_partitions(k: usize) -> Result<Vec<SetPartition>> {
    if k > MAX_PARTITION_SIZE {
        return Err(Error::AboveCap {
            what: "partition size",
            value: k as u128,
            cap: MAX_PARTITION_SIZE as u128,
        });
    }
    if k == 0 {
        return Ok(vec![SetPartition {
            k: 0,
            blocks: Vec::new(),
        }]);
    }
    let mut out = Vec::new();
    let mut a = vec![0usize; k];
    let mut maxes = vec![0usize; k];
    loop {
        out.push(SetPartition::from_growth_string(&a));
        // next growth string: bump the rightmost position that can grow
        let Some(i) = (1..k).rev().find(|&i| a[i] <= maxes[i - 1]) else {
            return Ok(out);
        };
        a[i] += 1;
        maxes[i] = maxes[i - 1].max(a[i]);
        for j in i + 1..k {
            a[j] = 0;
            maxes[j] = maxes[i];
        }
    }
}

/// `w(P) = sum over graphs G with components exactly the blocks of (-1)^{|G|}`,
/// by enumerating every edge subset inside the blocks.
pub fn w_weight_bruteforce(p: &SetPartition) -> Result<i64> {
    let edges: Vec<(usize, usize)> = p
        .blocks
        .iter()
        .flat_map(|b| {
            b.iter()
                .enumerate()
                .flat_map(move |(x, &i)| b[x + 1..].iter().map(move |&j| (i - 1, j - 1)))
        })
        .collect();
    if edges.len() > MAX_EDGE_SLOTS {
        return Err(Error::AboveCap {
            what: "edge slots",
            value: edges.len() as u128,
            cap: MAX_EDGE_SLOTS as u128,
        });
    }
    let block_masks: Vec<u32> = p
        .blocks
        .iter()
        .map(|b| b.iter().fold(0u32, |m, &i| m | 1 << (i - 1)))
        .collect();
    let total = (0u32..1 << edges.len())
        .into_par_iter()
        .filter(|&g| {
            let mut adj = [0u32; MAX_PARTITION_SIZE];
            for (e, &(i, j)) in edges.iter().enumerate() {
                if g >> e & 1 == 1 {
                    adj[i] |= 1 << j;
                    adj[j] |= 1 << i;
                }
            }
            block_masks.iter().all(|&block| {
                let start = block.trailing_zeros() as usize;
                let mut reached = 1u32 << start;
                let mut frontier = reached;
                while frontier != 0 {
                    let v = frontier.trailing_zeros() as usize;
                    frontier &= frontier - 1;
                    let new = adj[v] & !reached;
                    reached |= new;
                    frontier |= new;
                }
                reached == block
            })
        })
        .map(|g| if g.count_ones() % 2 == 0 { 1i64 } else { -1 })
        .sum();
    Ok(total)
}

/// Closed form `prod_m (-1)^{|S_m|-1} (|S_m|-1)!`.
pub fn w_weight(p: &SetPartition) -> i64 {
    p.blocks
        .iter()
        .map(|b| {
            let s = b.len() as i64;
            let fact: i64 = (1..s).product();
            if s % 2 == 1 {
                fact
            } else {
                -fact
            }
        })
        .product()
}

/// `sum_P w(P) Delta_P(d)` over all partitions of `{1..len(d)}`.
pub fn distinctness_expansion(d: &[i64]) -> Result<i64> {
    Ok(enumerate_partitions(d.len())?
        .iter()
        .filter(|p| p.delta(d))
        .map(w_weight)
        .sum())
}

/// Polynomial with integer coefficients, ascending degree, no trailing zeros.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IntPolynomial {
    coeffs: Vec<BigInt>,
}

impl IntPolynomial {
    pub fn new(coeffs: Vec<BigInt>) -> Self {
        let mut p = IntPolynomial { coeffs };
        p.trim();
        p
    }

    pub fn from_i64(coeffs: &[i64]) -> Self {
        Self::new(coeffs.iter().map(|&c| BigInt::from(c)).collect())
    }

    pub fn zero() -> Self {
        IntPolynomial { coeffs: Vec::new() }
    }

    pub fn constant(c: impl Into<BigInt>) -> Self {
        Self::new(vec![c.into()])
    }

    pub fn one() -> Self {
        Self::constant(1)
    }

    /// `z - c`.
    pub fn linear(c: i64) -> Self {
        Self::from_i64(&[-c, 1])
    }

    fn trim(&mut self) {
        while self.coeffs.last().is_some_and(Zero::is_zero) {
            self.coeffs.pop();
        }
    }

    pub fn coeffs(&self) -> &[BigInt] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        let get = |v: &[BigInt], i: usize| v.get(i).cloned().unwrap_or_default();
        Self::new(
            (0..n)
                .map(|i| get(&self.coeffs, i) + get(&other.coeffs, i))
                .collect(),
        )
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::zero();
        }
        let mut out = vec![BigInt::zero(); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self::new(out)
    }

    pub fn scale(&self, c: &BigInt) -> Self {
        Self::new(self.coeffs.iter().map(|a| a * c).collect())
    }

    pub fn pow(&self, e: u32) -> Self {
        (0..e).fold(Self::one(), |acc, _| acc.mul(self))
    }

    pub fn eval(&self, z: &BigRational) -> BigRational {
        self.coeffs
            .iter()
            .rev()
            .fold(BigRational::zero(), |acc, c| {
                acc * z + BigRational::from_integer(c.clone())
            })
    }
}

impl fmt::Display for IntPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (i, c) in self.coeffs.iter().enumerate().rev() {
            if c.is_zero() {
                continue;
            }
            let sign = if c.is_negative() { "-" } else { "+" };
            if first {
                if c.is_negative() {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            first = false;
            let a = c.abs();
            match (i, a.is_one()) {
                (0, _) => write!(f, "{a}")?,
                (1, true) => write!(f, "z")?,
                (1, false) => write!(f, "{a}z")?,
                (_, true) => write!(f, "z^{i}")?,
                (_, false) => write!(f, "{a}z^{i}")?,
            }
        }
        Ok(())
    }
}

impl Serialize for IntPolynomial {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// `P_l(z) = sum_{j=1}^l C(l,j) (-1)^j z^{j-1}`.
pub fn P_poly(l: usize) -> Result<IntPolynomial> {
    if l == 0 {
        return Err(Error::BelowMinimum {
            what: "l",
            value: 0,
            min: 1,
        });
    }
    Ok(IntPolynomial::new(
        (1..=l)
            .map(|j| {
                let c = binomial(l as u64, j as u64);
                if j % 2 == 1 {
                    -c
                } else {
                    c
                }
            })
            .collect(),
    ))
}

/// `f_{R,P}` with `R` a bitmask over block indices (0-based).
pub fn f_poly(r: u32, p: &SetPartition) -> Result<IntPolynomial> {
    let mut out = IntPolynomial::one();
    for (m, b) in p.blocks.iter().enumerate() {
        let pl = P_poly(b.len())?;
        let factor = if r >> m & 1 == 1 {
            pl
        } else {
            pl.add(&IntPolynomial::one())
        };
        out = out.mul(&factor);
    }
    Ok(out)
}

fn z_of(q: u64) -> Result<BigRational> {
    Ok(BigRational::new(BigInt::from(q), BigInt::from(totient(q)?)))
}

fn sign(k: usize) -> BigRational {
    if k % 2 == 0 {
        BigRational::one()
    } else {
        -BigRational::one()
    }
}

/// All tuples of `[1,h]^len`, first coordinate varying fastest.
fn tuples(h: u64, len: usize) -> impl Iterator<Item = Vec<i64>> {
    let total = (h as usize).pow(len as u32);
    (0..total).map(move |mut idx| {
        (0..len)
            .map(|_| {
                let d = (idx % h as usize) as i64 + 1;
                idx /= h as usize;
                d
            })
            .collect()
    })
}

fn check_lemma_budget(h: u64, k: usize) -> Result<()> {
    let estimate = (h as u128).saturating_pow(k as u32).saturating_mul(1 << k);
    if estimate > LEMMA_BUDGET {
        return Err(Error::BudgetExceeded {
            what: "partition lemma tuple sum",
            estimate,
            budget: LEMMA_BUDGET,
        });
    }
    if h == 0 {
        return Err(Error::BelowMinimum {
            what: "h",
            value: 0,
            min: 1,
        });
    }
    Ok(())
}

/// Difference of the two sides of
/// `sum_{d ∈ [1,h]^k} Delta_P(d) sum_{Q} (-1)^{|Q|} S(D_Q;q)
///  = sum_{e ∈ [1,h]^M} sum_{J ⊆ blocks} prod_{m∈J} P_{|S_m|}(z) S(E_J;q)`.
pub fn check_partition_lemma(p: &SetPartition, h: u64, q: u64) -> Result<BigRational> {
    let k = p.k();
    let m = p.num_blocks();
    check_lemma_budget(h, k)?;
    let ev = SeriesEvaluator::new(q)?;
    let z = z_of(q)?;

    // left: literal sum over constrained k-tuples
    let mut lhs = BigRational::zero();
    for d in tuples(h, k).filter(|d| p.delta(d)) {
        let key = ev.key(&d);
        let mut inner = BigRational::zero();
        for (mask, s) in ev.subseries(&key).into_iter().enumerate() {
            if mask.count_ones() % 2 == 0 {
                inner += s;
            } else {
                inner -= s;
            }
        }
        lhs += inner;
    }

    // right: sum over block values
    let block_poly: Vec<BigRational> = p
        .block_sizes()
        .iter()
        .map(|&s| P_poly(s).map(|pl| pl.eval(&z)))
        .collect::<Result<_>>()?;
    let mut rhs = BigRational::zero();
    for e in tuples(h, m) {
        let key = ev.key(&e);
        for (mask, s) in ev.subseries(&key).into_iter().enumerate() {
            let coef = (0..m)
                .filter(|b| mask >> b & 1 == 1)
                .fold(BigRational::one(), |acc, b| acc * &block_poly[b]);
            rhs += coef * s;
        }
    }
    Ok(lhs - rhs)
}

/// `V_0..=V_k` at `(q,h)` by the exact series path.
pub fn exact_moments_up_to(q: u64, h: u64, k: usize) -> Result<Vec<BigRational>> {
    (0..=k)
        .map(|j| crate::moments::V_via_singular(q, h, j))
        .collect()
}

/// `(-1)^k sum_P w(P) sum_R f_{R,P}(z) h^{M-|R|} V_{|R|}(q,h)`.
pub fn Rk_partition_sum(h: u64, k: usize, q: u64) -> Result<BigRational> {
    let v = exact_moments_up_to(q, h, k)?;
    let z = z_of(q)?;
    let hb = BigRational::from_integer(BigInt::from(h));
    let parts = enumerate_partitions(k)?;
    let terms = parts
        .par_iter()
        .map(|p| {
            let m = p.num_blocks();
            let w = BigRational::from_integer(BigInt::from(w_weight(p)));
            let mut inner = BigRational::zero();
            for r in 0u32..(1 << m) {
                let f = f_poly(r, p)?;
                if f.is_zero() {
                    continue;
                }
                let size = r.count_ones() as usize;
                inner += f.eval(&z) * crate::arith::rational_pow(&hb, (m - size) as u32) * &v[size];
            }
            Ok(w * inner)
        })
        .collect::<Result<Vec<_>>>()?;
    let total = terms.into_iter().fold(BigRational::zero(), |a, b| a + b);
    Ok(sign(k) * total)
}

/// `R_k(h;q)` minus its partition expansion; exactly zero.
pub fn check_Rk_partition_identity(h: u64, k: usize, q: u64) -> Result<BigRational> {
    Ok(R_mod_q(h, k, q)? - Rk_partition_sum(h, k, q)?)
}

/// Coefficient of `h^a V_b` in a main-term expression.
pub type MainTerms = BTreeMap<(usize, usize), IntPolynomial>;

fn add_term(terms: &mut MainTerms, key: (usize, usize), poly: IntPolynomial) {
    let slot = terms.entry(key).or_insert_with(IntPolynomial::zero);
    *slot = slot.add(&poly);
    if slot.is_zero() {
        terms.remove(&key);
    }
}

/// Main terms for odd `k` straight from the partition sum: partitions into
/// parts of sizes 1 and 2 with `R` the singletons or the singletons plus one
/// pair, and partitions with exactly one part of size 3 and `R` the set of
/// singletons (possibly empty, which gives the `V_0` terms). Terms in `V_1`
/// are dropped.
pub fn odd_main_terms_from_partitions(k: usize) -> Result<MainTerms> {
    if k % 2 == 0 {
        return Err(Error::InvalidArgument(format!("k must be odd, got {k}")));
    }
    let mut terms = MainTerms::new();
    for p in enumerate_partitions(k)? {
        let sizes = p.block_sizes();
        let singles: u32 = sizes
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == 1)
            .fold(0, |acc, (m, _)| acc | 1 << m);
        let triples = sizes.iter().filter(|&&s| s == 3).count();
        let small = sizes.iter().all(|&s| s <= 2);
        let mut choices: Vec<u32> = Vec::new();
        if small {
            choices.push(singles);
            choices.extend(
                (0..sizes.len())
                    .filter(|&m| sizes[m] == 2)
                    .map(|m| singles | 1 << m),
            );
        } else if triples == 1 && sizes.iter().all(|&s| s <= 3) {
            choices.push(singles);
        }
        let w = BigInt::from(-w_weight(&p));
        for r in choices {
            let size = r.count_ones() as usize;
            if size == 1 {
                continue;
            }
            let f = f_poly(r, &p)?.scale(&w);
            add_term(&mut terms, (p.num_blocks() - size, size), f);
        }
    }
    Ok(terms)
}

/// Closed form of the same main terms for `k = 2l + 1`:
/// `sum_{j=0}^{l} (-1)^j C(k,2j) (2j-1)!! (z-1)^j h^j V_{k-2j}`
/// `+ sum_{j=1}^{l} (-1)^j C(k,2j) (2j-1)!! j (z-1)^{j-1} (z-2) h^{j-1} V_{k+1-2j}`
/// `+ sum_{j=0}^{l-1} 2 (-1)^j [k! / (3! (2j)! (k-3-2j)!)] (2j-1)!! (z-1)^{j+1} (z-2) h^{j+1} V_{k-3-2j}`.
pub fn odd_main_terms_closed_form(k: usize) -> Result<MainTerms> {
    if k % 2 == 0 {
        return Err(Error::InvalidArgument(format!("k must be odd, got {k}")));
    }
    let l = k / 2;
    let kk = k as u64;
    let double_fact =
        |j: usize| -> BigInt { (1..=j as u64).map(|i| BigInt::from(2 * i - 1)).product() };
    let pm = |j: usize| -> BigInt {
        if j % 2 == 0 {
            BigInt::one()
        } else {
            -BigInt::one()
        }
    };
    let zm1 = IntPolynomial::linear(1);
    let zm2 = IntPolynomial::linear(2);
    let mut terms = MainTerms::new();
    for j in 0..=l {
        let c = pm(j) * binomial(kk, 2 * j as u64) * double_fact(j);
        add_term(&mut terms, (j, k - 2 * j), zm1.pow(j as u32).scale(&c));
    }
    for j in 1..=l {
        let c = pm(j) * binomial(kk, 2 * j as u64) * double_fact(j) * BigInt::from(j);
        add_term(
            &mut terms,
            (j - 1, k + 1 - 2 * j),
            zm1.pow(j as u32 - 1).mul(&zm2).scale(&c),
        );
    }
    for j in 0..l {
        let multinomial = binomial(kk, 3) * binomial(kk - 3, 2 * j as u64);
        let c = BigInt::from(2) * pm(j) * multinomial * double_fact(j);
        add_term(
            &mut terms,
            (j + 1, k - 3 - 2 * j),
            zm1.pow(j as u32 + 1).mul(&zm2).scale(&c),
        );
    }
    terms.retain(|&(_, v), _| v != 1);
    Ok(terms)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TermRow {
    pub label: String,
    pub coefficient: IntPolynomial,
    pub h_power: usize,
    pub v_index: usize,
    #[serde(serialize_with = "as_rational_string")]
    pub value: BigRational,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TermTable {
    pub k: usize,
    pub h: u64,
    pub q: u64,
    pub rows: Vec<TermRow>,
    #[serde(serialize_with = "as_rational_string")]
    pub main_sum: BigRational,
    #[serde(serialize_with = "as_rational_string")]
    pub r_mod_q: BigRational,
}

fn as_rational_string<S: serde::Serializer>(
    r: &BigRational,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&rational_string(r))
}

/// Evaluates each main term of `R_3` or `R_5` at `(q,h)` next to `R_k(h;q)`.
/// The formulas carry unquantified error terms, so nothing is asserted.
pub fn evaluate_R3_R5_main_terms(h: u64, q: u64, k: usize) -> Result<TermTable> {
    if k != 3 && k != 5 {
        return Err(Error::InvalidArgument(format!("k must be 3 or 5, got {k}")));
    }
    let terms = odd_main_terms_closed_form(k)?;
    let v = exact_moments_up_to(q, h, k)?;
    let z = z_of(q)?;
    let hb = BigRational::from_integer(BigInt::from(h));
    let mut rows: Vec<TermRow> = terms
        .into_iter()
        .map(|((a, b), coefficient)| {
            let value = coefficient.eval(&z) * crate::arith::rational_pow(&hb, a as u32) * &v[b];
            let h_part = match a {
                0 => String::new(),
                1 => "h ".to_string(),
                _ => format!("h^{a} "),
            };
            TermRow {
                label: format!("({coefficient}) {h_part}V{b}"),
                coefficient,
                h_power: a,
                v_index: b,
                value,
            }
        })
        .collect();
    rows.sort_by_key(|r| std::cmp::Reverse(r.v_index));
    let main_sum = rows.iter().fold(BigRational::zero(), |a, r| a + &r.value);
    Ok(TermTable {
        k,
        h,
        q,
        rows,
        main_sum,
        r_mod_q: R_mod_q(h, k, q)?,
    })
}

/// Float view of an exact value, for reporting.
pub fn approx(v: &BigRational) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly(c: &[i64]) -> IntPolynomial {
        IntPolynomial::from_i64(c)
    }

    fn part(blocks: &[&[usize]]) -> SetPartition {
        SetPartition::from_blocks(blocks.iter().map(|b| b.to_vec()).collect()).unwrap()
    }

    #[test]
    fn bell_numbers() {
        let bell = [1, 1, 2, 5, 15, 52, 203, 877, 4140];
        for (k, &b) in bell.iter().enumerate() {
            let ps = enumerate_partitions(k).unwrap();
            assert_eq!(ps.len(), b);
            let mut sorted = ps.clone();
            sorted.sort();
            sorted.dedup();
            assert_eq!(sorted.len(), b);
            for p in &ps {
                assert_eq!(p.k(), k);
                assert!(p.blocks().windows(2).all(|w| w[0][0] < w[1][0]));
            }
        }
        assert!(enumerate_partitions(9).is_err());
    }

    #[test]
    fn from_blocks_validation() {
        let p = part(&[&[3], &[2, 1]]);
        assert_eq!(p.blocks(), &[vec![1, 2], vec![3]]);
        assert_eq!(p.to_string(), "{1,2}{3}");
        assert!(SetPartition::from_blocks(vec![vec![1, 1]]).is_err());
        assert!(SetPartition::from_blocks(vec![vec![1], vec![3]]).is_err());
        assert!(SetPartition::from_blocks(vec![vec![1], vec![]]).is_err());
    }

    #[test]
    fn weights() {
        for k in 0..=6 {
            for p in enumerate_partitions(k).unwrap() {
                assert_eq!(w_weight_bruteforce(&p).unwrap(), w_weight(&p), "{p}");
            }
        }
        assert_eq!(w_weight(&part(&[&[1], &[2], &[3]])), 1);
        for k in [3usize, 5, 7] {
            for p in enumerate_partitions(k).unwrap() {
                let sizes = p.block_sizes();
                let pairs = sizes.iter().filter(|&&s| s == 2).count() as u32;
                let triples = sizes.iter().filter(|&&s| s == 3).count();
                let sign = (-1i64).pow(pairs);
                if sizes.iter().all(|&s| s <= 2) {
                    assert_eq!(w_weight_bruteforce(&p).unwrap(), sign);
                } else if triples == 1 && sizes.iter().all(|&s| s <= 3) {
                    assert_eq!(w_weight_bruteforce(&p).unwrap(), 2 * sign);
                }
            }
        }
        assert!(w_weight_bruteforce(&part(&[&[1, 2, 3, 4, 5, 6, 7, 8]])).is_err());
    }

    #[test]
    fn distinctness_exhaustive() {
        for d in tuples(4, 4) {
            let distinct = {
                let mut s = d.clone();
                s.sort_unstable();
                s.dedup();
                s.len() == d.len()
            };
            assert_eq!(
                distinctness_expansion(&d).unwrap(),
                distinct as i64,
                "{d:?}"
            );
        }
    }

    #[test]
    fn p_polynomials() {
        assert_eq!(P_poly(1).unwrap(), poly(&[-1]));
        assert_eq!(P_poly(2).unwrap(), poly(&[-2, 1]));
        assert_eq!(P_poly(3).unwrap(), poly(&[-3, 3, -1]));
        assert_eq!(P_poly(3).unwrap().to_string(), "-z^2 + 3z - 3");
        let one_minus_z = poly(&[1, -1]);
        for l in 1..=10 {
            let p = P_poly(l).unwrap();
            assert_eq!(p.degree(), Some(l - 1));
            let lhs = p.mul(&poly(&[0, 1])).add(&IntPolynomial::one());
            assert_eq!(lhs, one_minus_z.pow(l as u32));
        }
        assert!(P_poly(0).is_err());
    }

    #[test]
    fn f_polynomials() {
        for k in 1..=6 {
            let singles = SetPartition::from_blocks((1..=k).map(|i| vec![i]).collect()).unwrap();
            let all = (1u32 << k) - 1;
            let expect = if k % 2 == 0 { 1 } else { -1 };
            assert_eq!(f_poly(all, &singles).unwrap(), poly(&[expect]));
        }
        for k in 1..=6 {
            for p in enumerate_partitions(k).unwrap() {
                let m = p.num_blocks();
                for r in 0u32..(1 << m) {
                    let f = f_poly(r, &p).unwrap();
                    let outside_single = p
                        .block_sizes()
                        .iter()
                        .enumerate()
                        .any(|(b, &s)| s == 1 && r >> b & 1 == 0);
                    assert_eq!(f.is_zero(), outside_single, "{p} {r:b}");
                    if !f.is_zero() {
                        assert_eq!(f.degree(), Some(k - m));
                    }
                }
            }
        }
        // j pairs and k-2j singletons, R = singletons: (-1)^k (z-1)^j
        let p = part(&[&[1, 2], &[3, 4], &[5]]);
        let r = 0b100;
        assert_eq!(
            f_poly(r, &p).unwrap(),
            IntPolynomial::linear(1).pow(2).scale(&BigInt::from(-1))
        );
    }

    #[test]
    fn partition_lemma() {
        assert!(check_partition_lemma(&part(&[&[1], &[2], &[3]]), 3, 30)
            .unwrap()
            .is_zero());
        assert!(check_partition_lemma(&part(&[&[1, 2]]), 2, 6)
            .unwrap()
            .is_zero());
        assert!(check_partition_lemma(&part(&[&[1, 2], &[3]]), 3, 30)
            .unwrap()
            .is_zero());
        for k in 1..=3 {
            for p in enumerate_partitions(k).unwrap() {
                assert!(check_partition_lemma(&p, 3, 210).unwrap().is_zero(), "{p}");
            }
        }
    }

    #[test]
    fn rk_identity() {
        for h in 1..=4 {
            assert!(Rk_partition_sum(h, 1, 30).unwrap().is_zero());
        }
        assert!(check_Rk_partition_identity(3, 2, 6).unwrap().is_zero());
        assert!(check_Rk_partition_identity(3, 3, 30).unwrap().is_zero());
        assert!(check_Rk_partition_identity(4, 4, 210).unwrap().is_zero());
    }

    #[test]
    fn main_terms_match_partition_sum() {
        for k in [3, 5, 7] {
            assert_eq!(
                odd_main_terms_from_partitions(k).unwrap(),
                odd_main_terms_closed_form(k).unwrap(),
                "k={k}"
            );
        }
        let r3 = odd_main_terms_closed_form(3).unwrap();
        assert_eq!(r3.len(), 3);
        assert_eq!(r3[&(0, 3)], poly(&[1]));
        assert_eq!(r3[&(0, 2)], poly(&[6, -3]));
        assert_eq!(r3[&(1, 0)], poly(&[4, -6, 2]));

        let r5 = odd_main_terms_closed_form(5).unwrap();
        let zm1 = IntPolynomial::linear(1);
        let zm2 = IntPolynomial::linear(2);
        assert_eq!(r5.len(), 5);
        assert_eq!(r5[&(0, 5)], poly(&[1]));
        assert_eq!(r5[&(0, 4)], zm2.scale(&BigInt::from(-10)));
        assert_eq!(r5[&(1, 3)], zm1.scale(&BigInt::from(-10)));
        // 30 from pairs with one pair in R, 20 from a triple plus a pair
        assert_eq!(r5[&(1, 2)], zm1.mul(&zm2).scale(&BigInt::from(50)));
        assert_eq!(r5[&(2, 0)], zm1.pow(2).mul(&zm2).scale(&BigInt::from(-20)));
    }

    #[test]
    fn term_tables() {
        let t = evaluate_R3_R5_main_terms(4, 30, 3).unwrap();
        assert_eq!(t.rows.len(), 3);
        assert_eq!(t.r_mod_q, R_mod_q(4, 3, 30).unwrap());
        let t1 = evaluate_R3_R5_main_terms(1, 30, 5).unwrap();
        assert_eq!(t1.rows.len(), 5);
        assert!(t1.r_mod_q.is_zero());
        assert!(evaluate_R3_R5_main_terms(3, 30, 4).is_err());
    }
}
