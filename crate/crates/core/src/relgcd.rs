//! Relative greatest common divisors.
//!
//! A tuple `q_1..q_k` of positive integers is parameterised by integers
//! `g_I`, one per subset `I` of the index set, such that
//! `q_i = prod_{I ∋ i} g_I` and `gcd(g_I, g_J) = 1` unless one of `I`, `J`
//! contains the other. Subsets are bitmasks: bit `i` stands for index `i + 1`.
//!
//! Two independent constructions are provided: a prime-by-prime ("local")
//! construction from sorted `p`-adic valuations, and the top-down recursive
//! construction `g_I = gcd(q_i : i ∈ I) / prod_{J ⊋ I} g_J`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::Serialize;

use crate::arith::{factorize, gcd_u64};
use crate::error::{Error, Result};

pub const MAX_ARITY: usize = 16;

pub type SubsetMask = u32;

/// Sparse map `I -> g_I`; subsets absent from the map have `g_I = 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RelGcdDecomposition {
    k: usize,
    g: BTreeMap<SubsetMask, u64>,
}

impl RelGcdDecomposition {
    /// Builds a decomposition from explicit entries; entries equal to 1 are
    /// dropped. Does not check the relative-gcd laws.
    pub fn from_entries(
        k: usize,
        entries: impl IntoIterator<Item = (SubsetMask, u64)>,
    ) -> Result<Self> {
        check_arity(k)?;
        let full = full_mask(k);
        let mut g = BTreeMap::new();
        for (mask, v) in entries {
            if mask & !full != 0 || mask == 0 && v != 1 {
                return Err(Error::InvalidArgument(format!(
                    "subset mask {mask:#b} outside the index set of arity {k}"
                )));
            }
            if v == 0 {
                return Err(Error::InvalidArgument("g_I must be positive".into()));
            }
            if v > 1 {
                g.insert(mask, v);
            }
        }
        Ok(RelGcdDecomposition { k, g })
    }

    pub fn arity(&self) -> usize {
        self.k
    }

    /// `g_I` for the subset encoded by `mask`.
    pub fn get(&self, mask: SubsetMask) -> u64 {
        self.g.get(&mask).copied().unwrap_or(1)
    }

    /// Subsets with `g_I > 1`, in increasing mask order.
    pub fn nontrivial(&self) -> impl Iterator<Item = (SubsetMask, u64)> + '_ {
        self.g.iter().map(|(&m, &v)| (m, v))
    }

    /// `g_{{i}}` for a 1-based index.
    pub fn singleton(&self, i: usize) -> u64 {
        self.get(1 << (i - 1))
    }
}

impl fmt::Display for RelGcdDecomposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .g
            .iter()
            .map(|(&m, v)| format!("g{}={}", subset_label(m), v))
            .collect();
        if parts.is_empty() {
            write!(f, "all g_I = 1")
        } else {
            write!(f, "{}", parts.join(" "))
        }
    }
}

/// `{1,3}` for mask `0b101`.
pub fn subset_label(mask: SubsetMask) -> String {
    let idx: Vec<String> = (0..32)
        .filter(|i| mask >> i & 1 == 1)
        .map(|i| (i + 1).to_string())
        .collect();
    format!("{{{}}}", idx.join(","))
}

fn full_mask(k: usize) -> SubsetMask {
    if k == 32 {
        u32::MAX
    } else {
        (1u32 << k) - 1
    }
}

fn check_arity(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::EmptyTuple);
    }
    if k > MAX_ARITY {
        return Err(Error::AboveCap {
            what: "tuple arity",
            value: k as u128,
            cap: MAX_ARITY as u128,
        });
    }
    Ok(())
}

fn check_tuple(q: &[u64]) -> Result<()> {
    check_arity(q.len())?;
    if let Some(pos) = q.iter().position(|&x| x == 0) {
        return Err(Error::InvalidArgument(format!(
            "q_{} must be positive",
            pos + 1
        )));
    }
    Ok(())
}

/// Local construction: for each prime `p`, sort indices by `ν_p(q_i)` (ties
/// by original index) and give the suffix set `{i..k}` of the sorted order
/// the exponent `ν_p(q_i) - ν_p(q_{i-1})`.
pub fn decompose_local(q: &[u64]) -> Result<RelGcdDecomposition> {
    check_tuple(q)?;
    let k = q.len();
    let mut valuations: BTreeMap<u64, Vec<u32>> = BTreeMap::new();
    for (i, &qi) in q.iter().enumerate() {
        for &(p, e) in factorize(qi)?.factors() {
            valuations.entry(p).or_insert_with(|| vec![0; k])[i] = e;
        }
    }
    let mut g: HashMap<SubsetMask, u64> = HashMap::new();
    let mut order: Vec<usize> = Vec::with_capacity(k);
    for (p, nu) in valuations {
        order.clear();
        order.extend(0..k);
        order.sort_by_key(|&i| nu[i]);
        let mut suffix = full_mask(k);
        let mut prev = 0u32;
        for &i in &order {
            let step = nu[i] - prev;
            if step > 0 {
                let entry = g.entry(suffix).or_insert(1);
                *entry = entry
                    .checked_mul(p.pow(step))
                    .ok_or(Error::Overflow("decompose_local"))?;
            }
            prev = nu[i];
            suffix &= !(1 << i);
        }
    }
    RelGcdDecomposition::from_entries(k, g)
}

/// Recursive construction, top-down from the full index set.
pub fn decompose_recursive(q: &[u64]) -> Result<RelGcdDecomposition> {
    check_tuple(q)?;
    let k = q.len();
    let full = full_mask(k);
    let size = 1usize << k;

    // gcd over each subset, built from the subset with its lowest bit removed.
    let mut subset_gcd = vec![0u64; size];
    for mask in 1..size {
        let low = mask.trailing_zeros() as usize;
        subset_gcd[mask] = gcd_u64(subset_gcd[mask & (mask - 1)], q[low]);
    }

    let mut g = vec![1u64; size];
    for mask in (1..size as SubsetMask).rev() {
        let mut above = 1u64;
        let mut sup = (mask + 1) | mask;
        while sup <= full {
            above = above
                .checked_mul(g[sup as usize])
                .ok_or(Error::Overflow("decompose_recursive"))?;
            sup = (sup + 1) | mask;
        }
        let whole = subset_gcd[mask as usize];
        if whole % above != 0 {
            return Err(Error::InexactDivision("decompose_recursive"));
        }
        g[mask as usize] = whole / above;
    }
    RelGcdDecomposition::from_entries(
        k,
        g.into_iter()
            .enumerate()
            .skip(1)
            .map(|(m, v)| (m as SubsetMask, v)),
    )
}

/// `q_i = prod_{I ∋ i} g_I`.
pub fn recompose(d: &RelGcdDecomposition) -> Vec<u64> {
    (0..d.k)
        .map(|i| {
            d.nontrivial()
                .filter(|(m, _)| m >> i & 1 == 1)
                .map(|(_, v)| v)
                .product()
        })
        .collect()
}

/// Outcome of a pairwise-coprimality law check; `witness` names the first
/// offending pair of subsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LawCheck {
    pub holds: bool,
    pub witness: Option<(SubsetMask, SubsetMask)>,
}

impl LawCheck {
    fn from_witness(witness: Option<(SubsetMask, SubsetMask)>) -> Self {
        LawCheck {
            holds: witness.is_none(),
            witness,
        }
    }
}

fn comparable(a: SubsetMask, b: SubsetMask) -> bool {
    a & b == a || a & b == b
}

/// `gcd(g_I, g_J) > 1` only when `I ⊆ J` or `J ⊆ I`.
pub fn check_cross_coprimality(d: &RelGcdDecomposition) -> LawCheck {
    let entries: Vec<_> = d.nontrivial().collect();
    for (x, &(i, gi)) in entries.iter().enumerate() {
        for &(j, gj) in &entries[x + 1..] {
            if !comparable(i, j) && gcd_u64(gi, gj) > 1 {
                return LawCheck::from_witness(Some((i, j)));
            }
        }
    }
    LawCheck::from_witness(None)
}

/// For squarefree `q`, all `g_I` with distinct `I` are pairwise coprime.
pub fn check_squarefree_pairwise(d: &RelGcdDecomposition, q: &[u64]) -> Result<LawCheck> {
    for &qi in q {
        if !factorize(qi)?.is_squarefree() {
            return Err(Error::NotSquarefree(qi));
        }
    }
    let entries: Vec<_> = d.nontrivial().collect();
    for (x, &(i, gi)) in entries.iter().enumerate() {
        for &(j, gj) in &entries[x + 1..] {
            if gcd_u64(gi, gj) > 1 {
                return Ok(LawCheck::from_witness(Some((i, j))));
            }
        }
    }
    Ok(LawCheck::from_witness(None))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(idx: &[usize]) -> SubsetMask {
        idx.iter().map(|i| 1 << (i - 1)).sum()
    }

    fn dense(d: &RelGcdDecomposition) -> Vec<u64> {
        (0..1u32 << d.arity()).map(|m| d.get(m)).collect()
    }

    #[test]
    fn worked_example_6_9_12() {
        let d = decompose_local(&[6, 9, 12]).unwrap();
        assert_eq!(d.get(mask(&[1])), 1);
        assert_eq!(d.get(mask(&[1, 2])), 1);
        assert_eq!(d.get(mask(&[2, 3])), 1);
        assert_eq!(d.get(mask(&[3])), 2);
        assert_eq!(d.get(mask(&[1, 3])), 2);
        assert_eq!(d.get(mask(&[2])), 3);
        assert_eq!(d.get(mask(&[1, 2, 3])), 3);
        assert_eq!(d.get(0), 1);
        assert_eq!(d.nontrivial().count(), 4);
        assert_eq!(decompose_recursive(&[6, 9, 12]).unwrap(), d);
        assert_eq!(recompose(&d), vec![6, 9, 12]);
        assert!(check_cross_coprimality(&d).holds);
    }

    #[test]
    fn pair_and_equal_tuples() {
        let d = decompose_local(&[4, 6]).unwrap();
        assert_eq!(d.get(mask(&[1, 2])), 2);
        assert_eq!(d.get(mask(&[1])), 2);
        assert_eq!(d.get(mask(&[2])), 3);

        let d = decompose_local(&[7, 7, 7]).unwrap();
        assert_eq!(d.nontrivial().collect::<Vec<_>>(), vec![(0b111, 7)]);

        let d = decompose_recursive(&[1, 1]).unwrap();
        assert_eq!(d.nontrivial().count(), 0);

        let ones = RelGcdDecomposition::from_entries(3, []).unwrap();
        assert_eq!(recompose(&ones), vec![1, 1, 1]);
    }

    #[test]
    fn recursive_matches_local_30_42_70() {
        let a = decompose_local(&[30, 42, 70]).unwrap();
        let b = decompose_recursive(&[30, 42, 70]).unwrap();
        assert_eq!(dense(&a), dense(&b));
        // 2 | all three, 3 | {1,2}, 5 | {1,3}, 7 | {2,3}
        assert_eq!(a.get(0b111), 2);
        assert_eq!(a.get(0b011), 3);
        assert_eq!(a.get(0b101), 5);
        assert_eq!(a.get(0b110), 7);
    }

    #[test]
    fn cross_coprimality_witness() {
        let d = RelGcdDecomposition::from_entries(2, [(0b01, 2), (0b10, 2)]).unwrap();
        let check = check_cross_coprimality(&d);
        assert!(!check.holds);
        assert_eq!(check.witness, Some((0b01, 0b10)));
    }

    #[test]
    fn squarefree_pairwise_examples() {
        let q = [6, 10, 15];
        let d = decompose_local(&q).unwrap();
        assert_eq!(
            d.nontrivial().collect::<Vec<_>>(),
            vec![(0b011, 2), (0b101, 3), (0b110, 5)]
        );
        assert!(check_squarefree_pairwise(&d, &q).unwrap().holds);
        let q = [2, 3];
        assert!(
            check_squarefree_pairwise(&decompose_local(&q).unwrap(), &q)
                .unwrap()
                .holds
        );
        let q = [4, 6];
        assert_eq!(
            check_squarefree_pairwise(&decompose_local(&q).unwrap(), &q),
            Err(Error::NotSquarefree(4))
        );
    }

    #[test]
    fn rejects_bad_tuples() {
        assert_eq!(decompose_local(&[]), Err(Error::EmptyTuple));
        assert!(decompose_local(&[1; 17]).is_err());
        assert!(decompose_recursive(&[3, 0]).is_err());
        assert!(decompose_local(&[1; 16]).is_ok());
    }

    #[test]
    fn exhaustive_laws_small() {
        for a in 1..=20u64 {
            for b in 1..=20 {
                for c in 1..=20 {
                    for e in [1u64, 8, 12, 18, 20] {
                        let q = [a, b, c, e];
                        let d = decompose_local(&q).unwrap();
                        assert_eq!(recompose(&d), q);
                        assert!(check_cross_coprimality(&d).holds, "{q:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn ties_do_not_matter() {
        // Equal valuations in different positions give the same map after
        // relabelling.
        let d1 = decompose_local(&[12, 18, 12]).unwrap();
        let d2 = decompose_local(&[12, 12, 18]).unwrap();
        let swap = |m: SubsetMask| (m & 1) | ((m >> 1) & 1) << 2 | ((m >> 2) & 1) << 1;
        for m in 0..8 {
            assert_eq!(d1.get(m), d2.get(swap(m)));
        }
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn roundtrip_and_agreement(q in proptest::collection::vec(1u64..=1_000_000, 1..=5)) {
                let local = decompose_local(&q).unwrap();
                prop_assert_eq!(recompose(&local), q.clone());
                prop_assert_eq!(decompose_recursive(&q).unwrap(), local.clone());
                prop_assert!(check_cross_coprimality(&local).holds);
                prop_assert_eq!(local.get(0), 1);
            }

            #[test]
            fn permutation_relabels(q in proptest::collection::vec(1u64..=5000, 2..=5), seed in 0usize..120) {
                let k = q.len();
                let mut perm: Vec<usize> = (0..k).collect();
                // deterministic permutation from seed
                let mut s = seed;
                for i in (1..k).rev() {
                    perm.swap(i, s % (i + 1));
                    s /= i + 1;
                }
                let permuted: Vec<u64> = perm.iter().map(|&i| q[i]).collect();
                let d = decompose_local(&q).unwrap();
                let dp = decompose_local(&permuted).unwrap();
                for m in 0..(1u32 << k) {
                    let mut orig = 0u32;
                    for (pos, &i) in perm.iter().enumerate() {
                        if m >> pos & 1 == 1 {
                            orig |= 1 << i;
                        }
                    }
                    prop_assert_eq!(dp.get(m), d.get(orig));
                }
            }
        }
    }
}
