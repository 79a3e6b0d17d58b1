use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use oddmoments::arith::{rational_string, BigRational};
use serde_json::{Map, Value};

/// One output record. Keys keep insertion order, which fixes the column order.
pub type Row = Map<String, Value>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    JsonLines,
    Table,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "csv" => Ok(Format::Csv),
            "json" | "jsonl" | "json-lines" => Ok(Format::JsonLines),
            "table" => Ok(Format::Table),
            other => Err(format!("unknown format {other:?} (csv, json, table)")),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::JsonLines => "json-lines",
            Format::Table => "table",
        })
    }
}

/// Exact rational as a `p/q` string (plain integer when the denominator is 1).
pub fn exact(r: &BigRational) -> Value {
    Value::String(rational_string(r))
}

pub fn float(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or_else(|| Value::String(x.to_string()), Value::Number)
}

fn columns(rows: &[Row]) -> Vec<String> {
    let mut cols: Vec<String> = Vec::new();
    for row in rows {
        for key in row.keys() {
            if !cols.contains(key) {
                cols.push(key.clone());
            }
        }
    }
    cols
}

fn cell(v: Option<&Value>) -> String {
    match v {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(other) => other.to_string(),
    }
}

pub fn write_rows<W: Write>(rows: &[Row], format: Format, out: W) -> io::Result<()> {
    match format {
        Format::Csv => write_csv(rows, out),
        Format::JsonLines => write_json_lines(rows, out),
        Format::Table => write_table(rows, out),
    }
}

fn write_csv<W: Write>(rows: &[Row], out: W) -> io::Result<()> {
    let cols = columns(rows);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&cols)?;
    for row in rows {
        w.write_record(cols.iter().map(|c| cell(row.get(c))))?;
    }
    w.flush()
}

fn write_json_lines<W: Write>(rows: &[Row], mut out: W) -> io::Result<()> {
    for row in rows {
        serde_json::to_writer(&mut out, row)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

fn write_table<W: Write>(rows: &[Row], mut out: W) -> io::Result<()> {
    let cols = columns(rows);
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| cols.iter().map(|c| cell(r.get(c))).collect())
        .collect();
    let widths: Vec<usize> = cols
        .iter()
        .enumerate()
        .map(|(i, c)| {
            cells
                .iter()
                .map(|r| r[i].len())
                .max()
                .unwrap_or(0)
                .max(c.len())
        })
        .collect();
    let line = |items: &[String]| {
        items
            .iter()
            .zip(&widths)
            .map(|(s, w)| format!("{s:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    writeln!(out, "{}", line(&cols))?;
    for r in &cells {
        writeln!(out, "{}", line(r))?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::One;
    use serde_json::json;

    fn rows() -> Vec<Row> {
        let mut a = Row::new();
        a.insert("k".into(), json!(3));
        a.insert(
            "value".into(),
            exact(&BigRational::new(6.into(), (-4).into())),
        );
        let mut b = Row::new();
        b.insert("k".into(), json!(5));
        b.insert("value".into(), exact(&BigRational::one()));
        b.insert("error".into(), json!("budget, exceeded"));
        vec![a, b]
    }

    #[test]
    fn csv_uses_union_of_columns() {
        let mut buf = Vec::new();
        write_rows(&rows(), Format::Csv, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "k,value,error\n3,-3/2,\n5,1,\"budget, exceeded\"\n"
        );
    }

    #[test]
    fn json_lines_keep_key_order() {
        let mut buf = Vec::new();
        write_rows(&rows(), Format::JsonLines, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), r#"{"k":3,"value":"-3/2"}"#);
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn table_pads_columns() {
        let mut buf = Vec::new();
        write_rows(&rows(), Format::Table, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("k  value  error\n3  -3/2\n"));
    }

    #[test]
    fn format_names() {
        for f in [Format::Csv, Format::JsonLines, Format::Table] {
            assert_eq!(f.to_string().parse::<Format>().unwrap(), f);
        }
        assert!("xml".parse::<Format>().is_err());
    }

    #[test]
    fn non_finite_floats_become_strings() {
        assert_eq!(float(f64::NAN), json!("NaN"));
        assert_eq!(float(0.5), json!(0.5));
    }
}
