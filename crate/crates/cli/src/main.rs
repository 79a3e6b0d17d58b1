use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use num_traits::Zero;
use oddmoments::arith::{primorial_u64, rational_to_f64};
use oddmoments::fracsolve::{
    box_reference, classify_degenerate, count_box, count_interval, interval_reference,
    BoxConstraint, CountReport, Method, Target,
};
use oddmoments::moments::{
    check_MV_identity, check_r_sum_bound, check_smooth_rough_decomposition, evaluate_moment,
};
use oddmoments::partitions::{
    check_Rk_partition_identity, check_partition_lemma, enumerate_partitions,
    evaluate_R3_R5_main_terms, w_weight, w_weight_bruteforce,
};
use oddmoments::relgcd::{
    check_cross_coprimality, check_squarefree_pairwise, decompose_local, decompose_recursive,
    recompose, subset_label,
};
use oddmoments::singular::{R_mod_q, S_infinite, SeriesEvaluator};
use oddmoments_cli::config::{ConfigError, ExperimentConfig, IntervalSpec};
use oddmoments_cli::experiments::{self};
use oddmoments_cli::output::{exact, float, write_rows, Format, Row};
use oddmoments_cli::verify::{verify_all, Level};
use serde_json::{json, Value};

/// Exact counting, moment and singular-series computations.
#[derive(Parser, Debug)]
#[command(name = "oddmoments", version, about)]
struct Cli {
    /// Worker threads for parallel sections
    #[arg(long, global = true, env = "ODDMOMENTS_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Relative gcd decomposition of q_1, ..., q_k
    Relgcd {
        #[arg(required = true, num_args = 1..)]
        q: Vec<u64>,
        #[arg(long, default_value = "table")]
        format: Format,
    },
    /// Count k-tuples of reduced fractions a/q, |a| <= n, q <= Q
    Count {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        n: u64,
        #[arg(long = "Q")]
        q_max: u64,
        /// int, zero or m=M
        #[arg(long, default_value = "int")]
        target: Target,
        /// Split zero-sum solutions into degenerate and non-degenerate
        #[arg(long)]
        classify: bool,
        #[arg(long, default_value = "mitm")]
        method: Method,
        #[arg(long, default_value = "table")]
        out: Format,
    },
    /// Count with per-index interval constraints read from a key = value file
    CountInterval {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value = "table")]
        out: Format,
    },
    /// Moments of reduced residues in a window of length h
    Moments {
        #[arg(long)]
        q: u64,
        #[arg(long)]
        h: u64,
        #[arg(long)]
        k: Option<usize>,
        /// Mixed moment orders K1,K2
        #[arg(long, value_delimiter = ',')]
        mixed: Option<Vec<usize>>,
        #[arg(long)]
        check: Option<MomentCheck>,
        /// Smooth part q1 of q for --check rough
        #[arg(long)]
        split: Option<u64>,
        #[arg(long, default_value = "table")]
        out: Format,
    },
    /// Truncated singular series of a tuple of offsets
    Singular {
        #[arg(
            long,
            value_delimiter = ',',
            required = true,
            allow_hyphen_values = true
        )]
        d: Vec<i64>,
        #[arg(long)]
        q: Option<u64>,
        /// Also report the refined series
        #[arg(long)]
        refined: bool,
        /// Also report the full product truncated at P with a tail bound
        #[arg(long)]
        infinite: bool,
        #[arg(long = "P", default_value_t = 100_000)]
        p: u64,
        #[arg(long, default_value = "table")]
        out: Format,
    },
    /// R_k(h) with modulus primorial(y)
    Rk {
        #[arg(long)]
        h: u64,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        y: u64,
        #[arg(long, default_value = "table")]
        out: Format,
    },
    /// Main terms of R_3 or R_5 next to R_k(h)
    RkTerms {
        #[arg(long)]
        h: u64,
        #[arg(long)]
        y: u64,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value = "table")]
        out: Format,
    },
    /// Set partitions of {1..k} with their weights and identity checks
    Partitions {
        #[arg(long)]
        k: usize,
        /// Include the brute-force graph weight
        #[arg(long)]
        weights: bool,
        #[arg(long)]
        check: Option<PartitionCheck>,
        #[arg(long)]
        h: Option<u64>,
        #[arg(long)]
        q: Option<u64>,
        #[arg(long, default_value = "table")]
        out: Format,
    },
    /// Registered experiments
    Experiment {
        #[command(subcommand)]
        action: ExperimentAction,
    },
    /// Run the invariant suites
    Verify {
        #[arg(long, default_value = "quick")]
        level: Level,
        /// Restrict to the named suites
        #[arg(long)]
        suite: Vec<String>,
    },
}

#[derive(Subcommand, Debug)]
enum ExperimentAction {
    /// Run the experiment described by a config file
    Run {
        config: PathBuf,
        /// Override the output path (`-` for stdout)
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        format: Option<Format>,
        /// Validate the config and print the grid size without running
        #[arg(long)]
        dry_run: bool,
    },
    /// List registered experiments
    List,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum MomentCheck {
    Identity,
    Rough,
    Rsum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum PartitionCheck {
    Lemma,
    RkIdentity,
}

#[derive(Debug)]
enum Failure {
    /// Bad arguments, config or caps: exit 2.
    Usage(String),
    /// A checked invariant did not hold: exit 1.
    Invariant(String),
}

impl From<oddmoments::Error> for Failure {
    fn from(e: oddmoments::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(format!("i/o: {e}"))
    }
}

type Outcome = Result<(), Failure>;

fn emit(rows: &[Row], format: Format) -> Outcome {
    write_rows(rows, format, io::stdout().lock())?;
    Ok(())
}

fn row(pairs: Vec<(&str, Value)>) -> Row {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn invariant(ok: bool, what: &str) -> Outcome {
    if ok {
        Ok(())
    } else {
        Err(Failure::Invariant(what.to_string()))
    }
}

fn relgcd(q: &[u64], format: Format) -> Outcome {
    let local = decompose_local(q)?;
    let roundtrip = recompose(&local) == q;
    let agrees = decompose_recursive(q)? == local;
    let cross = check_cross_coprimality(&local);
    let pairwise = match check_squarefree_pairwise(&local, q) {
        Ok(c) => Some(c.holds),
        Err(oddmoments::Error::NotSquarefree(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let g: serde_json::Map<String, Value> = local
        .nontrivial()
        .map(|(mask, v)| (subset_label(mask), json!(v)))
        .collect();
    let checks = json!({
        "roundtrip": roundtrip,
        "recursive_agrees": agrees,
        "cross_coprimality": cross.holds,
        "squarefree_pairwise": pairwise,
    });
    let mut out = io::stdout().lock();
    match format {
        Format::Table => {
            writeln!(out, "q = {q:?}")?;
            for (label, v) in &g {
                writeln!(out, "g{label} = {v}")?;
            }
            for (name, v) in checks.as_object().into_iter().flatten() {
                let shown = match v {
                    Value::Null => "n/a (not squarefree)".to_string(),
                    other => other.to_string(),
                };
                writeln!(out, "{name}: {shown}")?;
            }
        }
        _ => {
            serde_json::to_writer(&mut out, &json!({ "q": q, "g": g, "checks": checks }))
                .map_err(io::Error::from)?;
            writeln!(out)?;
        }
    }
    invariant(
        roundtrip && agrees && cross.holds && pairwise != Some(false),
        "relative gcd laws",
    )
}

fn report_row(r: &CountReport, c: &BoxConstraint) -> Row {
    let reference = box_reference(c);
    row(vec![
        ("k", json!(c.k)),
        ("n", json!(c.n)),
        ("Q", json!(c.q_max)),
        ("target", json!(c.target.to_string())),
        ("method", json!(r.method.to_string())),
        ("total", json!(r.total)),
        ("degenerate", json!(r.degenerate)),
        ("non_degenerate", json!(r.non_degenerate)),
        ("upper_shape", float(reference.upper_shape)),
        (
            "lower_n2q",
            json!(reference.lower_n2q.map(|v| v.to_string())),
        ),
        (
            "nondegenerate_heuristic",
            json!(reference.nondegenerate_heuristic.to_string()),
        ),
        ("seconds", float(r.elapsed_secs)),
    ])
}

fn count(c: BoxConstraint, classify: bool, method: Method, out: Format) -> Outcome {
    let report = if classify {
        classify_degenerate(&c)?
    } else {
        count_box(&c, method)?
    };
    emit(&[report_row(&report, &c)], out)
}

fn count_interval_cmd(spec: &Path, out: Format) -> Outcome {
    let spec = IntervalSpec::read(spec)?;
    let c = &spec.constraint;
    let report = count_interval(c, spec.method)?;
    let reference = interval_reference(c)?;
    let intervals: Vec<String> = c
        .intervals
        .iter()
        .map(|i| format!("[{}, {}]", i.lo, i.hi))
        .collect();
    emit(
        &[row(vec![
            ("intervals", json!(intervals.join(" "))),
            ("caps", json!(format!("{:?}", c.caps))),
            ("target", json!(c.target.to_string())),
            ("method", json!(spec.method.to_string())),
            ("total", json!(report.total)),
            ("reference", exact(&reference.value)),
            (
                "minimizing_set",
                json!(format!("{:?}", reference.minimizing_set)),
            ),
            ("seconds", float(report.elapsed_secs)),
        ])],
        out,
    )
}

#[allow(clippy::too_many_arguments)]
fn moments(
    q: u64,
    h: u64,
    k: Option<usize>,
    mixed: Option<Vec<usize>>,
    check: Option<MomentCheck>,
    split: Option<u64>,
    out: Format,
) -> Outcome {
    let (k1, k2) = match (&mixed, k) {
        (Some(m), _) if m.len() == 2 => (m[0], m[1]),
        (Some(_), _) => {
            return Err(Failure::Usage(
                "--mixed takes exactly two orders K1,K2".into(),
            ))
        }
        (None, Some(k)) => (k, 0),
        (None, None) => return Err(Failure::Usage("either --k or --mixed is required".into())),
    };
    let base = vec![
        ("q", json!(q)),
        ("h", json!(h)),
        ("k1", json!(k1)),
        ("k2", json!(k2)),
    ];
    match check {
        None => {
            let m = evaluate_moment(q, h, k1, k2)?;
            let mut r = base;
            r.extend([
                ("exact", exact(&m.exact)),
                ("value", float(m.value)),
                ("expsum_gap", m.expsum_gap.map_or(Value::Null, float)),
            ]);
            emit(&[row(r)], out)
        }
        Some(MomentCheck::Identity) => {
            if k2 != 0 {
                return Err(Failure::Usage(
                    "the identity check takes --k, not --mixed".into(),
                ));
            }
            let residual = check_MV_identity(q, h, k1)?;
            let mut r = base;
            r.push(("residual", exact(&residual)));
            emit(&[row(r)], out)?;
            invariant(residual.is_zero(), "M_k = q (phi/q)^k V_k")
        }
        Some(MomentCheck::Rough) => {
            let q1 =
                split.ok_or_else(|| Failure::Usage("--check rough needs --split Q1".into()))?;
            if q1 == 0 || q % q1 != 0 {
                return Err(Failure::Usage(format!(
                    "--split {q1} does not divide q = {q}"
                )));
            }
            let q2 = q / q1;
            let residual = check_smooth_rough_decomposition(q1, q2, h, k1 + k2)?;
            let mut r = base;
            r.extend([
                ("q1", json!(q1)),
                ("q2", json!(q2)),
                ("residual", exact(&residual)),
            ]);
            emit(&[row(r)], out)?;
            invariant(residual.is_zero(), "smooth/rough decomposition")
        }
        Some(MomentCheck::Rsum) => {
            let b = check_r_sum_bound(q, k1 + k2)?;
            emit(
                &[row(vec![
                    ("q", json!(q)),
                    ("k", json!(k1 + k2)),
                    ("lhs", exact(&b.lhs)),
                    ("rhs", exact(&b.rhs)),
                    ("holds", json!(b.holds)),
                ])],
                out,
            )?;
            invariant(b.holds, "r-sum bound")
        }
    }
}

fn singular(
    d: &[i64],
    q: Option<u64>,
    refined: bool,
    infinite: bool,
    p: u64,
    out: Format,
) -> Outcome {
    let tuple: Vec<String> = d.iter().map(i64::to_string).collect();
    let mut r = vec![("d", json!(tuple.join(",")))];
    if q.is_none() && !infinite {
        return Err(Failure::Usage("give --q, --infinite, or both".into()));
    }
    if let Some(q) = q {
        let ev = SeriesEvaluator::new(q)?;
        let key = ev.key(d);
        let s = ev.series(&key);
        r.extend([
            ("q", json!(q)),
            ("S", exact(&s)),
            ("S_f64", float(rational_to_f64(&s))),
        ]);
        if refined {
            let s0 = ev.refined(&key);
            r.extend([("S0", exact(&s0)), ("S0_f64", float(rational_to_f64(&s0)))]);
        }
    }
    if infinite {
        let s = S_infinite(d, p)?;
        r.extend([
            ("P", json!(s.truncation)),
            ("S_infinite", float(s.value)),
            ("tail_bound", float(s.tail_bound)),
        ]);
    }
    emit(&[row(r)], out)
}

fn rk(h: u64, k: usize, y: u64, out: Format) -> Outcome {
    let q = primorial_u64(y)?;
    let r = R_mod_q(h, k, q)?;
    let value = rational_to_f64(&r);
    let reference = (h as f64).powf((k as f64 - 1.0) / 2.0);
    emit(
        &[row(vec![
            ("y", json!(y)),
            ("q", json!(q)),
            ("h", json!(h)),
            ("k", json!(k)),
            ("rk", exact(&r)),
            ("rk_f64", float(value)),
            ("reference", float(reference)),
            ("ratio", float(value / reference)),
        ])],
        out,
    )
}

fn rk_terms(h: u64, y: u64, k: usize, out: Format) -> Outcome {
    let q = primorial_u64(y)?;
    let table = evaluate_R3_R5_main_terms(h, q, k)?;
    let mut rows: Vec<Row> = table
        .rows
        .iter()
        .map(|t| {
            row(vec![
                ("term", json!(t.label)),
                ("coefficient", json!(t.coefficient.to_string())),
                ("h_power", json!(t.h_power)),
                ("v_index", json!(t.v_index)),
                ("value", exact(&t.value)),
                ("value_f64", float(rational_to_f64(&t.value))),
            ])
        })
        .collect();
    for (label, v) in [
        ("main terms", &table.main_sum),
        ("R_k(h;q)", &table.r_mod_q),
    ] {
        rows.push(row(vec![
            ("term", json!(label)),
            ("coefficient", Value::Null),
            ("h_power", Value::Null),
            ("v_index", Value::Null),
            ("value", exact(v)),
            ("value_f64", float(rational_to_f64(v))),
        ]));
    }
    emit(&rows, out)
}

fn partitions(
    k: usize,
    weights: bool,
    check: Option<PartitionCheck>,
    h: Option<u64>,
    q: Option<u64>,
    out: Format,
) -> Outcome {
    let hq = || match (h, q) {
        (Some(h), Some(q)) => Ok((h, q)),
        _ => Err(Failure::Usage("--check needs --h and --q".into())),
    };
    match check {
        Some(PartitionCheck::RkIdentity) => {
            let (h, q) = hq()?;
            let residual = check_Rk_partition_identity(h, k, q)?;
            emit(
                &[row(vec![
                    ("k", json!(k)),
                    ("h", json!(h)),
                    ("q", json!(q)),
                    ("residual", exact(&residual)),
                ])],
                out,
            )?;
            invariant(residual.is_zero(), "R_k partition identity")
        }
        _ => {
            let lemma = match check {
                Some(PartitionCheck::Lemma) => Some(hq()?),
                _ => None,
            };
            let mut rows = Vec::new();
            let mut ok = true;
            for p in enumerate_partitions(k)? {
                let mut r = vec![
                    ("partition", json!(p.to_string())),
                    ("blocks", json!(p.num_blocks())),
                    ("singletons", json!(p.num_singletons())),
                    ("w", json!(w_weight(&p))),
                ];
                if weights {
                    let brute = w_weight_bruteforce(&p)?;
                    ok &= brute == w_weight(&p);
                    r.push(("w_bruteforce", json!(brute)));
                }
                if let Some((h, q)) = lemma {
                    let residual = check_partition_lemma(&p, h, q)?;
                    ok &= residual.is_zero();
                    r.push(("lemma_residual", exact(&residual)));
                }
                rows.push(row(r));
            }
            emit(&rows, out)?;
            invariant(ok, "partition weights or lemma")
        }
    }
}

fn experiment_run(
    path: &Path,
    output: Option<PathBuf>,
    format: Option<Format>,
    dry_run: bool,
) -> Outcome {
    let mut cfg = ExperimentConfig::read(path)?;
    if let Some(o) = output {
        cfg.output = Some(o);
    }
    if let Some(f) = format {
        cfg.format = f;
    }
    let points = experiments::validate(&cfg)?;
    if dry_run {
        println!("{}: {points} grid points", cfg.experiment);
        return Ok(());
    }
    let rows = experiments::run_experiment(&cfg)?;
    match cfg.output.as_deref() {
        None => emit(&rows, cfg.format)?,
        Some(p) if p.as_os_str() == "-" => emit(&rows, cfg.format)?,
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            write_rows(
                &rows,
                cfg.format,
                io::BufWriter::new(std::fs::File::create(p)?),
            )?;
            let failed = rows.iter().filter(|r| !r["error"].is_null()).count();
            eprintln!(
                "{}: wrote {} rows to {} ({failed} with errors)",
                cfg.experiment,
                rows.len(),
                p.display()
            );
        }
    }
    Ok(())
}

fn verify(level: Level, suites: &[String]) -> Outcome {
    let results = verify_all(level, suites).map_err(Failure::Usage)?;
    let mut out = io::stdout().lock();
    writeln!(
        out,
        "{:<18} {:>9} {:>7} {:>9}",
        "suite", "checked", "failed", "seconds"
    )?;
    for r in &results {
        writeln!(
            out,
            "{:<18} {:>9} {:>7} {:>9.2}  {}",
            r.name,
            r.checked,
            r.failed,
            r.seconds,
            if r.passed() { "PASS" } else { "FAIL" }
        )?;
        for e in &r.examples {
            writeln!(out, "    {e}")?;
        }
    }
    let failed: Vec<&str> = results
        .iter()
        .filter(|r| !r.passed())
        .map(|r| r.name)
        .collect();
    invariant(
        failed.is_empty(),
        &format!("failing suites: {}", failed.join(", ")),
    )
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Relgcd { q, format } => relgcd(&q, format),
        Command::Count {
            k,
            n,
            q_max,
            target,
            classify,
            method,
            out,
        } => count(
            BoxConstraint {
                k,
                n,
                q_max,
                target,
            },
            classify,
            method,
            out,
        ),
        Command::CountInterval { spec, out } => count_interval_cmd(&spec, out),
        Command::Moments {
            q,
            h,
            k,
            mixed,
            check,
            split,
            out,
        } => moments(q, h, k, mixed, check, split, out),
        Command::Singular {
            d,
            q,
            refined,
            infinite,
            p,
            out,
        } => singular(&d, q, refined, infinite, p, out),
        Command::Rk { h, k, y, out } => rk(h, k, y, out),
        Command::RkTerms { h, y, k, out } => rk_terms(h, y, k, out),
        Command::Partitions {
            k,
            weights,
            check,
            h,
            q,
            out,
        } => partitions(k, weights, check, h, q, out),
        Command::Experiment { action } => match action {
            ExperimentAction::Run {
                config,
                output,
                format,
                dry_run,
            } => experiment_run(&config, output, format, dry_run),
            ExperimentAction::List => {
                for e in experiments::EXPERIMENTS {
                    println!("{e}");
                }
                Ok(())
            }
        },
        Command::Verify { level, suite } => verify(level, &suite),
    }
}

fn workers_from_config(cli: &Cli) -> Option<usize> {
    match &cli.command {
        Command::Experiment {
            action: ExperimentAction::Run { config, .. },
        } => ExperimentConfig::read(config).ok()?.workers,
        _ => None,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers.or_else(|| workers_from_config(&cli)) {
        if n == 0 {
            eprintln!("error: worker count must be positive");
            return ExitCode::from(2);
        }
        // only fails if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invariant(what)) => {
            eprintln!("invariant failed: {what}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn negative_offsets_parse() {
        let cli =
            Cli::try_parse_from(["oddmoments", "singular", "--d", "-2,0,6", "--q", "30"]).unwrap();
        match cli.command {
            Command::Singular { d, q, .. } => {
                assert_eq!(d, vec![-2, 0, 6]);
                assert_eq!(q, Some(30));
            }
            other => panic!("{other:?}"),
        }
    }
}
