//! Line-oriented `key = value` files. Lists are written `[a, b, c]` and may
//! contain inclusive ranges `lo..hi`; rationals are written `p/q`. `#` starts
//! a comment.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use oddmoments::arith::Fraction;
use oddmoments::fracsolve::{ClosedInterval, IntervalConstraint, Method, Target};

use crate::experiments::Experiment;
use crate::output::Format;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("duplicate key {0:?}")]
    Duplicate(String),
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("missing key {0:?}")]
    Missing(&'static str),
    #[error("key {key:?}: {msg}")]
    Value { key: String, msg: String },
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read {path}: {msg}")]
    Io { path: PathBuf, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Entry {
    Scalar(String),
    List(Vec<String>),
}

/// Parsed entries in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: Vec<(String, Entry)>,
}

fn expand_range(item: &str) -> Option<Vec<String>> {
    let (lo, hi) = item.split_once("..")?;
    let lo: i64 = lo.trim().parse().ok()?;
    let hi: i64 = hi.trim().parse().ok()?;
    Some((lo..=hi).map(|v| v.to_string()).collect())
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut kv = KeyValues::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let syntax = |msg: &str| ConfigError::Syntax {
                line: idx + 1,
                msg: msg.to_string(),
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| syntax("expected key = value"))?;
            let key = key.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(syntax("malformed key"));
            }
            let value = value.trim();
            let entry = if let Some(inner) = value.strip_prefix('[') {
                let inner = inner
                    .strip_suffix(']')
                    .ok_or_else(|| syntax("unterminated list"))?;
                let mut items = Vec::new();
                for item in inner.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    match expand_range(item) {
                        Some(range) => items.extend(range),
                        None => items.push(item.to_string()),
                    }
                }
                Entry::List(items)
            } else if value.is_empty() {
                return Err(syntax("empty value"));
            } else {
                Entry::Scalar(value.to_string())
            };
            if kv.get(key).is_some() {
                return Err(ConfigError::Duplicate(key.to_string()));
            }
            kv.entries.push((key.to_string(), entry));
        }
        Ok(kv)
    }

    pub fn read(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    fn reject_unknown(&self, allowed: &[&str]) -> Result<(), ConfigError> {
        match self.keys().find(|k| !allowed.contains(k)) {
            Some(k) => Err(ConfigError::UnknownKey(k.to_string())),
            None => Ok(()),
        }
    }

    pub fn scalar<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(Entry::Scalar(s)) => s.parse().map(Some).map_err(|e: T::Err| ConfigError::Value {
                key: key.to_string(),
                msg: e.to_string(),
            }),
            Some(Entry::List(_)) => Err(ConfigError::Value {
                key: key.to_string(),
                msg: "expected a single value, found a list".into(),
            }),
        }
    }

    /// A list, or a scalar read as a one-element list. Missing keys give an
    /// empty list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        let items: Vec<&str> = match self.get(key) {
            None => return Ok(Vec::new()),
            Some(Entry::Scalar(s)) => vec![s.as_str()],
            Some(Entry::List(v)) => v.iter().map(String::as_str).collect(),
        };
        items
            .into_iter()
            .map(|s| {
                s.parse().map_err(|e: T::Err| ConfigError::Value {
                    key: key.to_string(),
                    msg: format!("{s:?}: {e}"),
                })
            })
            .collect()
    }
}

/// A named experiment over a parameter grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub k: Vec<u64>,
    pub n: Vec<u64>,
    /// Denominator caps, key `Q`.
    pub q_max: Vec<u64>,
    /// Moduli, key `q`.
    pub q: Vec<u64>,
    pub h: Vec<u64>,
    pub y: Vec<u64>,
    pub target: Target,
    pub method: Method,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub workers: Option<usize>,
}

const EXPERIMENT_KEYS: [&str; 12] = [
    "experiment",
    "k",
    "n",
    "Q",
    "q",
    "h",
    "y",
    "target",
    "method",
    "output",
    "format",
    "workers",
];

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        ExperimentConfig {
            experiment,
            k: Vec::new(),
            n: Vec::new(),
            q_max: Vec::new(),
            q: Vec::new(),
            h: Vec::new(),
            y: Vec::new(),
            target: Target::AnyInteger,
            method: Method::MeetInTheMiddle,
            output: None,
            format: Format::Csv,
            workers: None,
        }
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self, ConfigError> {
        kv.reject_unknown(&EXPERIMENT_KEYS)?;
        let experiment = kv
            .scalar::<Experiment>("experiment")?
            .ok_or(ConfigError::Missing("experiment"))?;
        let mut cfg = ExperimentConfig::new(experiment);
        cfg.k = kv.list("k")?;
        cfg.n = kv.list("n")?;
        cfg.q_max = kv.list("Q")?;
        cfg.q = kv.list("q")?;
        cfg.h = kv.list("h")?;
        cfg.y = kv.list("y")?;
        if let Some(t) = kv.scalar("target")? {
            cfg.target = t;
        }
        if let Some(m) = kv.scalar("method")? {
            cfg.method = m;
        }
        cfg.output = kv.scalar::<PathBuf>("output")?;
        if let Some(f) = kv.scalar("format")? {
            cfg.format = f;
        }
        cfg.workers = kv.scalar("workers")?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::from_key_values(&KeyValues::parse(text)?)
    }

    pub fn read(path: &Path) -> Result<Self, ConfigError> {
        Self::from_key_values(&KeyValues::read(path)?)
    }

    /// Serialises to the same `key = value` form that [`Self::parse`] reads.
    pub fn to_text(&self) -> String {
        let mut out = format!("experiment = {}\n", self.experiment);
        let lists: [(&str, &Vec<u64>); 6] = [
            ("k", &self.k),
            ("n", &self.n),
            ("Q", &self.q_max),
            ("q", &self.q),
            ("h", &self.h),
            ("y", &self.y),
        ];
        for (key, values) in lists {
            if !values.is_empty() {
                let items: Vec<String> = values.iter().map(u64::to_string).collect();
                out.push_str(&format!("{key} = [{}]\n", items.join(", ")));
            }
        }
        out.push_str(&format!("target = {}\n", self.target));
        out.push_str(&format!("method = {}\n", self.method));
        if let Some(p) = &self.output {
            out.push_str(&format!("output = {}\n", p.display()));
        }
        out.push_str(&format!("format = {}\n", self.format));
        if let Some(w) = self.workers {
            out.push_str(&format!("workers = {w}\n"));
        }
        out
    }
}

/// Interval counting problem for `count-interval`:
///
/// ```text
/// lo = [0, 0, 0]
/// hi = [1/2, 1/2, 1/2]
/// caps = [4, 4, 4]
/// target = int
/// ```
///
/// A scalar `lo`, `hi` or `caps` applies to every index; `k` is then
/// required to fix the arity.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSpec {
    pub constraint: IntervalConstraint,
    pub method: Method,
}

impl IntervalSpec {
    pub fn from_key_values(kv: &KeyValues) -> Result<Self, ConfigError> {
        kv.reject_unknown(&["k", "lo", "hi", "caps", "target", "method"])?;
        let lo: Vec<Fraction> = kv.list("lo")?;
        let hi: Vec<Fraction> = kv.list("hi")?;
        let caps: Vec<u64> = kv.list("caps")?;
        let k = match kv.scalar::<usize>("k")? {
            Some(k) => k,
            None => lo.len().max(hi.len()).max(caps.len()),
        };
        let widen = |key: &'static str, len: usize| -> Result<(), ConfigError> {
            if len == 0 {
                Err(ConfigError::Missing(key))
            } else if len != 1 && len != k {
                Err(ConfigError::Value {
                    key: key.to_string(),
                    msg: format!("expected 1 or {k} entries, found {len}"),
                })
            } else {
                Ok(())
            }
        };
        widen("lo", lo.len())?;
        widen("hi", hi.len())?;
        widen("caps", caps.len())?;
        let pick = |v: &[Fraction], i: usize| if v.len() == 1 { v[0] } else { v[i] };
        let intervals = (0..k)
            .map(|i| {
                ClosedInterval::new(pick(&lo, i), pick(&hi, i))
                    .map_err(|e| ConfigError::Invalid(e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let caps = (0..k)
            .map(|i| if caps.len() == 1 { caps[0] } else { caps[i] })
            .collect();
        let constraint = IntervalConstraint {
            intervals,
            caps,
            target: kv.scalar("target")?.unwrap_or(Target::AnyInteger),
        };
        constraint
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(IntervalSpec {
            constraint,
            method: kv.scalar("method")?.unwrap_or(Method::MeetInTheMiddle),
        })
    }

    pub fn read(path: &Path) -> Result<Self, ConfigError> {
        Self::from_key_values(&KeyValues::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_scalars_lists_and_ranges() {
        let kv = KeyValues::parse("# grid\nk = [2, 4,8]\nh = [2..5]\ny = 30 # modulus\n").unwrap();
        assert_eq!(kv.list::<u64>("k").unwrap(), vec![2, 4, 8]);
        assert_eq!(kv.list::<u64>("h").unwrap(), vec![2, 3, 4, 5]);
        assert_eq!(kv.list::<u64>("y").unwrap(), vec![30]);
        assert_eq!(kv.scalar::<u64>("y").unwrap(), Some(30));
        assert!(kv.scalar::<u64>("k").is_err());
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        assert_eq!(
            KeyValues::parse("k = 3\nbogus\n"),
            Err(ConfigError::Syntax {
                line: 2,
                msg: "expected key = value".into()
            })
        );
        assert!(matches!(
            KeyValues::parse("k = [1, 2"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
        assert_eq!(
            KeyValues::parse("k = 1\nk = 2"),
            Err(ConfigError::Duplicate("k".into()))
        );
    }

    #[test]
    fn experiment_config_round_trips() {
        let text = "experiment = thm1-scaling\nk = [3]\nn = [2,4,8]\nQ = [8..9]\ntarget = m=1\nformat = json\nworkers = 2\noutput = out/x.csv\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.q_max, vec![8, 9]);
        assert_eq!(cfg.target, Target::Fixed(1));
        assert_eq!(cfg.format, Format::JsonLines);
        let again = ExperimentConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.to_text(), cfg.to_text());
    }

    #[test]
    fn experiment_config_rejects_bad_input() {
        assert_eq!(
            ExperimentConfig::parse("k = [3]"),
            Err(ConfigError::Missing("experiment"))
        );
        assert_eq!(
            ExperimentConfig::parse("experiment = gallagher\nkk = 1"),
            Err(ConfigError::UnknownKey("kk".into()))
        );
        assert!(ExperimentConfig::parse("experiment = nope").is_err());
        assert!(ExperimentConfig::parse("experiment = gallagher\nh = [x]").is_err());
    }

    #[test]
    fn interval_spec_broadcasts_scalars() {
        let kv = KeyValues::parse("k = 3\nlo = 0\nhi = 1/2\ncaps = 4").unwrap();
        let spec = IntervalSpec::from_key_values(&kv).unwrap();
        assert_eq!(spec.constraint.intervals.len(), 3);
        assert_eq!(
            spec.constraint.intervals[2].hi,
            Fraction::new(1, 2).unwrap()
        );
        assert_eq!(spec.constraint.caps, vec![4, 4, 4]);
    }

    #[test]
    fn interval_spec_rejects_bad_shapes() {
        let kv = KeyValues::parse("lo = [0, 0]\nhi = [1, 1, 1]\ncaps = 4").unwrap();
        assert!(IntervalSpec::from_key_values(&kv).is_err());
        let kv = KeyValues::parse("lo = [1/2]\nhi = [0]\ncaps = [4]").unwrap();
        assert!(matches!(
            IntervalSpec::from_key_values(&kv),
            Err(ConfigError::Invalid(_))
        ));
        let kv = KeyValues::parse("lo = 0\nhi = 1").unwrap();
        assert_eq!(
            IntervalSpec::from_key_values(&kv),
            Err(ConfigError::Missing("caps"))
        );
    }
}
