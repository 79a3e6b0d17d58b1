//! Invariant suites across all modules, at two sizes.

use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;
use std::time::Instant;

use num_traits::Zero;
use oddmoments::arith::{factorize, rational_to_f64, Fraction};
use oddmoments::fracsolve::{count_box, for_each_solution, BoxConstraint, Method, Target};
use oddmoments::moments::{
    check_MV_identity, check_r_sum_bound, check_smooth_rough_decomposition, relative_gap, V_expsum,
    V_via_singular, FLOAT_TOLERANCE,
};
use oddmoments::partitions::{
    check_Rk_partition_identity, check_partition_lemma, distinctness_expansion,
    enumerate_partitions, w_weight, w_weight_bruteforce,
};
use oddmoments::relgcd::{
    check_cross_coprimality, check_squarefree_pairwise, decompose_local, decompose_recursive,
    recompose,
};
use oddmoments::singular::{check_S0_expansion, check_duality, check_repeated_elements};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Level {
    #[default]
    Quick,
    Full,
}

impl FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "quick" => Ok(Level::Quick),
            "full" => Ok(Level::Full),
            other => Err(format!("unknown level {other:?} (quick, full)")),
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Quick => "quick",
            Level::Full => "full",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub checked: u64,
    pub failed: u64,
    /// First few failures, for the report.
    pub examples: Vec<String>,
    pub seconds: f64,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.failed == 0
    }
}

#[derive(Default)]
struct Tally {
    checked: u64,
    failed: u64,
    examples: Vec<String>,
}

impl Tally {
    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok {
            self.failed += 1;
            if self.examples.len() < 5 {
                self.examples.push(what());
            }
        }
    }

    /// Errors count as failures.
    fn check_result<T>(
        &mut self,
        r: oddmoments::Result<T>,
        ok: impl FnOnce(&T) -> bool,
        what: impl FnOnce() -> String,
    ) {
        match r {
            Ok(v) => {
                let passed = ok(&v);
                self.check(passed, what);
            }
            Err(e) => self.check(false, || format!("{}: {e}", what())),
        }
    }
}

fn odometer(k: usize, max: u64, mut visit: impl FnMut(&[u64])) {
    let mut q = vec![1u64; k];
    loop {
        visit(&q);
        let Some(i) = q.iter().position(|&x| x < max) else {
            return;
        };
        q[i] += 1;
        q[..i].iter_mut().for_each(|x| *x = 1);
    }
}

fn relgcd_suite(level: Level, t: &mut Tally) {
    let (kmax, qmax) = match level {
        Level::Quick => (3, 12),
        Level::Full => (4, 30),
    };
    for k in 1..=kmax {
        odometer(k, qmax, |q| {
            let (Ok(local), Ok(recursive)) = (decompose_local(q), decompose_recursive(q)) else {
                t.check(false, || format!("{q:?}: decomposition failed"));
                return;
            };
            t.check(recompose(&local) == q, || format!("{q:?}: roundtrip"));
            t.check(local == recursive, || {
                format!("{q:?}: definitions disagree")
            });
            t.check(check_cross_coprimality(&local).holds, || {
                format!("{q:?}: cross-coprimality")
            });
            let squarefree = q
                .iter()
                .all(|&x| factorize(x).is_ok_and(|f| f.is_squarefree()));
            if squarefree {
                t.check_result(
                    check_squarefree_pairwise(&local, q),
                    |c| c.holds,
                    || format!("{q:?}: squarefree pairwise coprimality"),
                );
            }
        });
    }
}

fn counting_suite(level: Level, t: &mut Tally) {
    let (ks, nmax, qmax): (&[usize], u64, u64) = match level {
        Level::Quick => (&[3], 2, 5),
        Level::Full => (&[3, 5], 4, 8),
    };
    for &k in ks {
        for n in 1..=nmax {
            for q_max in 1..=qmax {
                for target in [Target::AnyInteger, Target::Zero, Target::Fixed(1)] {
                    let c = BoxConstraint {
                        k,
                        n,
                        q_max,
                        target,
                    };
                    let pair = count_box(&c, Method::Naive)
                        .and_then(|a| Ok((a.total, count_box(&c, Method::MeetInTheMiddle)?.total)));
                    t.check_result(pair, |(a, b)| a == b, || format!("naive vs mitm {c:?}"));
                }
            }
        }
    }
}

fn singleton_suite(level: Level, t: &mut Tally) {
    let bound = match level {
        Level::Quick => 5,
        Level::Full => 10,
    };
    for n in 1..=bound {
        for q_max in 1..=bound {
            let c = BoxConstraint {
                k: 3,
                n,
                q_max,
                target: Target::AnyInteger,
            };
            let bad = Mutex::new(Vec::new());
            let run = c.alphabets().and_then(|a| {
                for_each_solution(&a, Target::AnyInteger, |s: &[Fraction]| {
                    let dens: Vec<u64> = s.iter().map(|x| x.den() as u64).collect();
                    let d = decompose_local(&dens)?;
                    if (1..=3).any(|i| d.singleton(i) != 1) {
                        bad.lock().unwrap().push(format!("{s:?}"));
                    }
                    Ok(())
                })
            });
            let bad = bad.into_inner().unwrap();
            t.check_result(
                run,
                |_| bad.is_empty(),
                || format!("singleton g_i > 1 for n={n} Q={q_max}: {:?}", bad.first()),
            );
        }
    }
}

fn moments_suite(level: Level, t: &mut Tally) {
    let (moduli, hmax, kmax): (&[u64], u64, usize) = match level {
        Level::Quick => (&[2, 6, 30], 4, 3),
        Level::Full => (&[2, 6, 30, 210], 6, 4),
    };
    for &q in moduli {
        for h in 1..=hmax {
            for k in 1..=kmax {
                t.check_result(
                    check_MV_identity(q, h, k),
                    |r| r.is_zero(),
                    || format!("M = q(phi/q)^k V at q={q} h={h} k={k}"),
                );
                let pair = V_via_singular(q, h, k)
                    .and_then(|v| Ok((rational_to_f64(&v), V_expsum(q, h, k)?)));
                t.check_result(
                    pair,
                    |(exact, float)| relative_gap(*float, *exact) <= FLOAT_TOLERANCE,
                    || format!("dual-path V at q={q} h={h} k={k}"),
                );
            }
        }
    }
    let rsum_moduli: &[u64] = match level {
        Level::Quick => &[2, 6, 30],
        Level::Full => &[2, 3, 5, 6, 10, 15, 30, 210],
    };
    for &q in rsum_moduli {
        for k in 1..=kmax {
            t.check_result(
                check_r_sum_bound(q, k),
                |b| b.holds,
                || format!("r-sum bound q={q} k={k}"),
            );
        }
    }
    let splits: &[(u64, u64)] = match level {
        Level::Quick => &[(2, 3), (6, 35)],
        Level::Full => &[(2, 3), (6, 35), (10, 21)],
    };
    for &(q1, q2) in splits {
        for h in 1..=4 {
            for k in 0..=3 {
                t.check_result(
                    check_smooth_rough_decomposition(q1, q2, h, k),
                    |r| r.is_zero(),
                    || format!("smooth/rough ({q1},{q2}) h={h} k={k}"),
                );
            }
        }
    }
}

fn tuples(h: i64, k: usize) -> Vec<Vec<i64>> {
    let mut out = vec![Vec::new()];
    for _ in 0..k {
        out = out
            .into_iter()
            .flat_map(|t| {
                (1..=h).map(move |d| {
                    let mut u = t.clone();
                    u.push(d);
                    u
                })
            })
            .collect();
    }
    out
}

fn singular_suite(level: Level, t: &mut Tally) {
    let (moduli, hmax, kmax): (&[u64], i64, usize) = match level {
        Level::Quick => (&[6, 30], 3, 3),
        Level::Full => (&[6, 30, 42, 105], 5, 4),
    };
    for &q in moduli {
        for k in 1..=kmax {
            for d in tuples(hmax, k) {
                let mut distinct = d.clone();
                distinct.sort_unstable();
                distinct.dedup();
                t.check_result(
                    check_repeated_elements(&distinct, &d, q),
                    |r| r.is_zero(),
                    || format!("repeated elements {d:?} q={q}"),
                );
                t.check_result(
                    check_duality(&d, q),
                    |r| r.is_zero(),
                    || format!("duality {d:?} q={q}"),
                );
                if k <= 3 {
                    t.check_result(
                        check_S0_expansion(&d, q),
                        |g| *g <= FLOAT_TOLERANCE,
                        || format!("refined series expansion {d:?} q={q}"),
                    );
                }
            }
        }
    }
}

fn partitions_suite(level: Level, t: &mut Tally) {
    let (moduli, hmax, kmax): (&[u64], u64, usize) = match level {
        Level::Quick => (&[6, 30], 3, 3),
        Level::Full => (&[6, 30, 42, 105], 5, 4),
    };
    for k in 1..=6 {
        for p in enumerate_partitions(k).unwrap_or_default() {
            t.check_result(
                w_weight_bruteforce(&p),
                |&w| w == w_weight(&p),
                || format!("w({p}) brute force vs closed form"),
            );
        }
    }
    for d in tuples(4, 4) {
        let mut distinct = d.clone();
        distinct.sort_unstable();
        distinct.dedup();
        let expected = i64::from(distinct.len() == d.len());
        t.check_result(
            distinctness_expansion(&d),
            |&v| v == expected,
            || format!("distinctness expansion {d:?}"),
        );
    }
    for &q in moduli {
        for k in 1..=kmax {
            for p in enumerate_partitions(k).unwrap_or_default() {
                for h in 1..=hmax {
                    t.check_result(
                        check_partition_lemma(&p, h, q),
                        |r| r.is_zero(),
                        || format!("partition lemma {p} h={h} q={q}"),
                    );
                }
            }
            for h in 1..=hmax {
                t.check_result(
                    check_Rk_partition_identity(h, k, q),
                    |r| r.is_zero(),
                    || format!("R_k partition identity h={h} k={k} q={q}"),
                );
            }
        }
    }
}

type Suite = fn(Level, &mut Tally);

pub const SUITE_NAMES: [&str; 6] = [
    "relgcd",
    "fracsolve",
    "singleton-forcing",
    "moments",
    "singular",
    "partitions",
];

const SUITES: [Suite; 6] = [
    relgcd_suite,
    counting_suite,
    singleton_suite,
    moments_suite,
    singular_suite,
    partitions_suite,
];

/// Runs the named suites (all when `only` is empty) in a fixed order.
pub fn verify_all(level: Level, only: &[String]) -> Result<Vec<SuiteResult>, String> {
    if let Some(bad) = only.iter().find(|s| !SUITE_NAMES.contains(&s.as_str())) {
        return Err(format!(
            "unknown suite {bad:?} (expected one of {})",
            SUITE_NAMES.join(", ")
        ));
    }
    Ok(SUITE_NAMES
        .iter()
        .zip(SUITES)
        .filter(|(name, _)| only.is_empty() || only.iter().any(|s| s == *name))
        .map(|(&name, suite)| {
            let start = Instant::now();
            let mut t = Tally::default();
            suite(level, &mut t);
            SuiteResult {
                name,
                checked: t.checked,
                failed: t.failed,
                examples: t.examples,
                seconds: start.elapsed().as_secs_f64(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_level_passes() {
        let results = verify_all(Level::Quick, &[]).unwrap();
        assert_eq!(results.len(), SUITE_NAMES.len());
        for r in &results {
            assert!(r.passed(), "{}: {:?}", r.name, r.examples);
            assert!(r.checked > 0, "{} checked nothing", r.name);
        }
    }

    #[test]
    fn suite_selection() {
        let results = verify_all(Level::Quick, &["partitions".to_string()]).unwrap();
        assert_eq!(results.len(), 1);
        assert_eq!(results[0].name, "partitions");
        assert!(verify_all(Level::Quick, &["nope".to_string()]).is_err());
    }

    #[test]
    fn tally_records_failures_and_errors() {
        let mut t = Tally::default();
        t.check(true, || unreachable!());
        t.check(false, || "bad".into());
        t.check_result::<u64>(
            Err(oddmoments::Error::EmptyTuple),
            |_| true,
            || "err".into(),
        );
        assert_eq!((t.checked, t.failed), (3, 2));
        assert_eq!(t.examples[0], "bad");
        assert!(t.examples[1].starts_with("err: "));
    }
}
