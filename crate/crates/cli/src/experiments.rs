use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use num_traits::ToPrimitive;
use oddmoments::arith::{primorial_u64, rational_to_f64, totient, BigRational};
use oddmoments::fracsolve::{
    box_reference, classify_degenerate, count_box, diagonal_family_size, BoxConstraint, Target,
    MAX_CLASSIFY_ARITY,
};
use oddmoments::moments::{M_direct, MAX_MODULUS, MAX_MOMENT_ORDER, MAX_WINDOW};
use oddmoments::singular::{gallagher_ratio_exact, R_mod_q, MAX_TUPLE_LEN};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{ConfigError, ExperimentConfig};
use crate::output::{exact, float, Row};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    /// Box counts against `n^2 Q` and `n^{(k+1)/2} Q^{(k-1)/2}`.
    Thm1Scaling,
    /// `M_k(q,h)` against `q (x + x^{(k-1)/2})`, `x = phi(q) h / q`.
    MomentGrowth,
    /// `R_k(h; primorial(y))` against `h^{(k-1)/2}`.
    RkGrowth,
    /// Average of the singular series over distinct tuples in `[1,h]^k`.
    Gallagher,
    /// Zero-sum solutions split by degeneracy, against `n^{k-1} Q`.
    DegenerateSplit,
}

pub const EXPERIMENTS: [Experiment; 5] = [
    Experiment::Thm1Scaling,
    Experiment::MomentGrowth,
    Experiment::RkGrowth,
    Experiment::Gallagher,
    Experiment::DegenerateSplit,
];

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Thm1Scaling => "thm1-scaling",
            Experiment::MomentGrowth => "moment-growth",
            Experiment::RkGrowth => "rk-growth",
            Experiment::Gallagher => "gallagher",
            Experiment::DegenerateSplit => "degenerate-split",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EXPERIMENTS
            .into_iter()
            .find(|e| e.name() == s.trim())
            .ok_or_else(|| {
                let names: Vec<&str> = EXPERIMENTS.iter().map(|e| e.name()).collect();
                format!(
                    "unknown experiment {s:?} (expected one of {})",
                    names.join(", ")
                )
            })
    }
}

/// One grid point, validated.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Point {
    Box(BoxConstraint),
    Moment { q: u64, h: u64, k: usize },
    Primorial { y: u64, q: u64, h: u64, k: usize },
}

fn require<'a>(name: &'static str, values: &'a [u64]) -> Result<&'a [u64], ConfigError> {
    if values.is_empty() {
        Err(ConfigError::Invalid(format!("grid for {name} is empty")))
    } else {
        Ok(values)
    }
}

fn in_range(name: &str, v: u64, lo: u64, hi: u64) -> Result<(), ConfigError> {
    if v < lo || v > hi {
        Err(ConfigError::Invalid(format!(
            "{name} = {v} outside [{lo}, {hi}]"
        )))
    } else {
        Ok(())
    }
}

fn invalid(e: oddmoments::Error) -> ConfigError {
    ConfigError::Invalid(e.to_string())
}

/// Expands and validates the grid. Nothing is computed beyond cap checks.
fn grid(cfg: &ExperimentConfig) -> Result<Vec<Point>, ConfigError> {
    let mut points = Vec::new();
    match cfg.experiment {
        Experiment::Thm1Scaling | Experiment::DegenerateSplit => {
            let split = cfg.experiment == Experiment::DegenerateSplit;
            let target = if split { Target::Zero } else { cfg.target };
            for &k in require("k", &cfg.k)? {
                if split {
                    in_range("k", k, 1, MAX_CLASSIFY_ARITY as u64)?;
                }
                for &n in require("n", &cfg.n)? {
                    in_range("n", n, 1, u64::MAX)?;
                    for &q_max in require("Q", &cfg.q_max)? {
                        let c = BoxConstraint {
                            k: k as usize,
                            n,
                            q_max,
                            target,
                        };
                        c.validate().map_err(invalid)?;
                        points.push(Point::Box(c));
                    }
                }
            }
        }
        Experiment::MomentGrowth => {
            for &q in require("q", &cfg.q)? {
                in_range("q", q, 1, MAX_MODULUS)?;
                for &h in require("h", &cfg.h)? {
                    in_range("h", h, 1, MAX_WINDOW)?;
                    for &k in require("k", &cfg.k)? {
                        in_range("k", k, 1, MAX_MOMENT_ORDER as u64)?;
                        points.push(Point::Moment {
                            q,
                            h,
                            k: k as usize,
                        });
                    }
                }
            }
        }
        Experiment::RkGrowth | Experiment::Gallagher => {
            for &y in require("y", &cfg.y)? {
                let q = primorial_u64(y).map_err(invalid)?;
                for &h in require("h", &cfg.h)? {
                    in_range("h", h, 1, MAX_WINDOW)?;
                    for &k in require("k", &cfg.k)? {
                        in_range("k", k, 1, MAX_TUPLE_LEN as u64)?;
                        points.push(Point::Primorial {
                            y,
                            q,
                            h,
                            k: k as usize,
                        });
                    }
                }
            }
        }
    }
    Ok(points)
}

pub fn validate(cfg: &ExperimentConfig) -> Result<usize, ConfigError> {
    grid(cfg).map(|g| g.len())
}

type Measured = oddmoments::Result<Vec<(&'static str, Value)>>;

fn measure_box(c: &BoxConstraint, cfg: &ExperimentConfig) -> Measured {
    let report = count_box(c, cfg.method)?;
    let reference = box_reference(c);
    let n2q = BigRational::from_integer((c.n as u128 * c.n as u128 * c.q_max as u128).into());
    let count = BigRational::from_integer(report.total.into());
    Ok(vec![
        ("count", json!(report.total)),
        ("count_over_n2q", exact(&(&count / &n2q))),
        (
            "count_over_n2q_f64",
            float(rational_to_f64(&(&count / &n2q))),
        ),
        ("upper_shape", float(reference.upper_shape)),
        (
            "count_over_upper_shape",
            float(report.total as f64 / reference.upper_shape),
        ),
        (
            "diagonal_family",
            if c.k == 3 {
                json!(diagonal_family_size(c.n, c.q_max))
            } else {
                Value::Null
            },
        ),
    ])
}

fn measure_split(c: &BoxConstraint) -> Measured {
    let report = classify_degenerate(c)?;
    let heuristic = box_reference(c).nondegenerate_heuristic;
    let non = report.non_degenerate.unwrap_or(0);
    Ok(vec![
        ("total", json!(report.total)),
        ("degenerate", json!(report.degenerate)),
        ("non_degenerate", json!(report.non_degenerate)),
        ("heuristic_nk1q", json!(heuristic.to_string())),
        (
            "non_degenerate_over_heuristic",
            float(non as f64 / heuristic.to_f64().unwrap_or(f64::NAN)),
        ),
    ])
}

fn measure_moment(q: u64, h: u64, k: usize) -> Measured {
    let m = M_direct(q, h, k)?;
    let x = totient(q)? as f64 * h as f64 / q as f64;
    let reference = q as f64 * (x + x.powf((k as f64 - 1.0) / 2.0));
    let value = rational_to_f64(&m);
    Ok(vec![
        ("moment", exact(&m)),
        ("moment_f64", float(value)),
        ("reference", float(reference)),
        ("ratio", float(value / reference)),
    ])
}

fn measure_rk(q: u64, h: u64, k: usize) -> Measured {
    let r = R_mod_q(h, k, q)?;
    let value = rational_to_f64(&r);
    let reference = (h as f64).powf((k as f64 - 1.0) / 2.0);
    Ok(vec![
        ("rk", exact(&r)),
        ("rk_f64", float(value)),
        ("reference", float(reference)),
        ("ratio", float(value / reference)),
    ])
}

fn measure_gallagher(q: u64, h: u64, k: usize) -> Measured {
    let r = gallagher_ratio_exact(h, k, q)?;
    let value = rational_to_f64(&r);
    Ok(vec![
        ("ratio", exact(&r)),
        ("ratio_f64", float(value)),
        ("drift", float((value - 1.0).abs())),
    ])
}

const COLUMNS_BOX: [&str; 6] = [
    "count",
    "count_over_n2q",
    "count_over_n2q_f64",
    "upper_shape",
    "count_over_upper_shape",
    "diagonal_family",
];
const COLUMNS_SPLIT: [&str; 5] = [
    "total",
    "degenerate",
    "non_degenerate",
    "heuristic_nk1q",
    "non_degenerate_over_heuristic",
];
const COLUMNS_MOMENT: [&str; 4] = ["moment", "moment_f64", "reference", "ratio"];
const COLUMNS_RK: [&str; 4] = ["rk", "rk_f64", "reference", "ratio"];
const COLUMNS_GALLAGHER: [&str; 3] = ["ratio", "ratio_f64", "drift"];

fn run_point(cfg: &ExperimentConfig, point: &Point) -> Row {
    let mut row = Row::new();
    row.insert("experiment".into(), json!(cfg.experiment.name()));
    let start = Instant::now();
    let (columns, measured): (&[&str], Measured) = match (cfg.experiment, point) {
        (Experiment::Thm1Scaling, Point::Box(c)) | (Experiment::DegenerateSplit, Point::Box(c)) => {
            row.insert("k".into(), json!(c.k));
            row.insert("n".into(), json!(c.n));
            row.insert("Q".into(), json!(c.q_max));
            row.insert("target".into(), json!(c.target.to_string()));
            if cfg.experiment == Experiment::Thm1Scaling {
                row.insert("method".into(), json!(cfg.method.to_string()));
                (&COLUMNS_BOX, measure_box(c, cfg))
            } else {
                (&COLUMNS_SPLIT, measure_split(c))
            }
        }
        (_, &Point::Moment { q, h, k }) => {
            row.insert("q".into(), json!(q));
            row.insert("h".into(), json!(h));
            row.insert("k".into(), json!(k));
            (&COLUMNS_MOMENT, measure_moment(q, h, k))
        }
        (experiment, &Point::Primorial { y, q, h, k }) => {
            row.insert("y".into(), json!(y));
            row.insert("q".into(), json!(q));
            row.insert("h".into(), json!(h));
            row.insert("k".into(), json!(k));
            if experiment == Experiment::Gallagher {
                (&COLUMNS_GALLAGHER, measure_gallagher(q, h, k))
            } else {
                (&COLUMNS_RK, measure_rk(q, h, k))
            }
        }
        (e, p) => unreachable!("grid point {p:?} does not belong to {e}"),
    };
    let seconds = start.elapsed().as_secs_f64();
    let error = match measured {
        Ok(values) => {
            for (name, v) in values {
                row.insert(name.into(), v);
            }
            Value::Null
        }
        Err(e) => {
            for name in columns {
                row.insert((*name).into(), Value::Null);
            }
            json!(e.to_string())
        }
    };
    row.insert("seconds".into(), float(seconds));
    row.insert("error".into(), error);
    row
}

/// Runs every grid point. Rows come back in grid order whatever the worker
/// count; a failing point fills the `error` column instead of aborting.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<Row>, ConfigError> {
    let points = grid(cfg)?;
    Ok(points.par_iter().map(|p| run_point(cfg, p)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> ExperimentConfig {
        ExperimentConfig::parse(text).unwrap()
    }

    #[test]
    fn names_round_trip() {
        for e in EXPERIMENTS {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        }
    }

    #[test]
    fn thm1_scaling_small_grid() {
        let rows = run_experiment(&cfg(
            "experiment = thm1-scaling\nk = 3\nn = [2]\nQ = [3, 4]",
        ))
        .unwrap();
        assert_eq!(rows.len(), 2);
        // box k=3, n=2, Q=4 gives 363 integer-sum triples
        assert_eq!(rows[1]["count"], json!(363));
        assert_eq!(rows[1]["count_over_n2q"], json!("363/16"));
        assert_eq!(rows[1]["error"], Value::Null);
    }

    #[test]
    fn empty_grid_is_rejected() {
        let err = run_experiment(&cfg("experiment = thm1-scaling\nk = 3\nn = [2]")).unwrap_err();
        assert_eq!(err, ConfigError::Invalid("grid for Q is empty".into()));
        assert!(validate(&cfg("experiment = gallagher\nk = [2]\nh = []\ny = 30")).is_err());
    }

    #[test]
    fn caps_are_checked_before_running() {
        assert!(validate(&cfg(
            "experiment = moment-growth\nq = [6]\nh = [3]\nk = [99]"
        ))
        .is_err());
        assert!(validate(&cfg(
            "experiment = degenerate-split\nk = [7]\nn = [1]\nQ = [1]"
        ))
        .is_err());
        assert!(validate(&cfg("experiment = rk-growth\ny = [1000]\nh = [3]\nk = [3]")).is_err());
    }

    #[test]
    fn failing_points_fill_the_error_column() {
        // k = 8 passes the arity cap but exceeds the pattern budget at h = 9999
        let rows = run_experiment(&cfg(
            "experiment = rk-growth\ny = [30]\nh = [3, 9999]\nk = [8]",
        ))
        .unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0]["error"], Value::Null);
        assert!(rows[1]["error"].is_string());
        assert_eq!(rows[1]["rk"], Value::Null);
        let keys0: Vec<&String> = rows[0].keys().collect();
        let keys1: Vec<&String> = rows[1].keys().collect();
        assert_eq!(keys0, keys1);
    }

    #[test]
    fn gallagher_drift_shrinks() {
        let rows = run_experiment(&cfg(
            "experiment = gallagher\nk = 2\nh = [4, 8, 12]\ny = 30",
        ))
        .unwrap();
        let drift: Vec<f64> = rows.iter().map(|r| r["drift"].as_f64().unwrap()).collect();
        assert!(drift.windows(2).all(|w| w[1] < w[0]), "{drift:?}");
    }

    #[test]
    fn moment_and_split_rows() {
        let rows =
            run_experiment(&cfg("experiment = moment-growth\nq = 30\nh = 4\nk = 2")).unwrap();
        assert_eq!(rows[0]["moment"], json!("148/15"));
        let rows =
            run_experiment(&cfg("experiment = degenerate-split\nk = 3\nn = 2\nQ = 4")).unwrap();
        assert_eq!(rows[0]["degenerate"], json!(37));
        assert_eq!(rows[0]["non_degenerate"], json!(36));
    }
}
