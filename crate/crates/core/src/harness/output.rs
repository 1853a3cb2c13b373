//! CSV and JSON emission. Every file opens with a metadata block carrying the
//! flat configuration, so a run can be repeated from its output alone.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use super::config::OutputFormat;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Missing,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Num)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_owned())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// 17 significant digits in scientific notation.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x:.16e}")
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(v) => fmt_num(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Missing => "nan".into(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(v) => serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number),
            Cell::Int(v) => Value::from(*v),
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Missing => Value::Null,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| (*c).to_owned()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

/// Ordered `key: value` metadata lines.
pub type Meta = Vec<(String, String)>;

pub fn render_csv(meta: &Meta, table: &Table) -> String {
    let mut s = String::new();
    for (k, v) in meta {
        let _ = writeln!(s, "# {k}: {v}");
    }
    s.push_str(&table.columns.join(","));
    s.push('\n');
    for row in &table.rows {
        let cells: Vec<String> = row.iter().map(Cell::csv).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

pub fn render_json(meta: &Meta, table: &Table) -> String {
    let mut m = Map::new();
    for (k, v) in meta {
        let parsed = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.clone()));
        m.insert(k.clone(), parsed);
    }
    let rows: Vec<Value> = table
        .rows
        .iter()
        .map(|r| {
            Value::Object(
                table
                    .columns
                    .iter()
                    .zip(r)
                    .map(|(c, v)| (c.clone(), v.json()))
                    .collect(),
            )
        })
        .collect();
    let doc = serde_json::json!({ "metadata": Value::Object(m), "rows": rows });
    let mut s = serde_json::to_string_pretty(&doc).expect("json document");
    s.push('\n');
    s
}

/// Write `table` to `dir/stem.{csv,json}`, creating `dir` if needed.
pub fn write_table(
    dir: &Path,
    stem: &str,
    format: OutputFormat,
    meta: &Meta,
    table: &Table,
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let path = dir.join(format!("{stem}.{}", format.as_str()));
    let body = match format {
        OutputFormat::Csv => render_csv(meta, table),
        OutputFormat::Json => render_json(meta, table),
    };
    std::fs::write(&path, body).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Parse a numeric sample file: one point per line, comma or whitespace
/// separated. Lines starting with `#` and a leading non-numeric header line
/// are skipped.
pub fn read_points(path: &Path) -> Result<(usize, Vec<f64>)> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut dim = None;
    let mut data = Vec::new();
    let mut seen_row = false;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        let parsed: std::result::Result<Vec<f64>, _> =
            fields.iter().map(|f| f.parse::<f64>()).collect();
        let row = match parsed {
            Ok(r) => r,
            Err(_) if !seen_row => {
                seen_row = true;
                continue;
            }
            Err(_) => {
                return Err(Error::usage(format!(
                    "{}:{}: non-numeric row",
                    path.display(),
                    lineno + 1
                )))
            }
        };
        seen_row = true;
        match dim {
            None => dim = Some(row.len()),
            Some(d) if d != row.len() => {
                return Err(Error::usage(format!(
                    "{}:{}: expected {d} columns, found {}",
                    path.display(),
                    lineno + 1,
                    row.len()
                )))
            }
            _ => {}
        }
        data.extend(row);
    }
    match dim {
        Some(d) if d > 0 => Ok((d, data)),
        _ => Err(Error::usage(format!("{} holds no samples", path.display()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format_is_fixed() {
        assert_eq!(fmt_num(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_num(0.0), "0.0000000000000000e0");
        assert_eq!(fmt_num(f64::NAN), "nan");
        let x = 0.1 + 0.2;
        assert_eq!(fmt_num(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn csv_layout() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec![Cell::Num(1.5), Cell::Missing]);
        let meta = vec![("config".to_string(), "{}".to_string())];
        assert_eq!(
            render_csv(&meta, &t),
            "# config: {}\na,b\n1.5000000000000000e0,nan\n"
        );
        let j: Value = serde_json::from_str(&render_json(&meta, &t)).unwrap();
        assert_eq!(j["rows"][0]["a"], 1.5);
        assert!(j["rows"][0]["b"].is_null());
    }

    #[test]
    fn reads_points_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        std::fs::write(&p, "# note\nx,y\n1,2\n3.5 4\n").unwrap();
        assert_eq!(read_points(&p).unwrap(), (2, vec![1.0, 2.0, 3.5, 4.0]));
        std::fs::write(&p, "1,2\n3\n").unwrap();
        assert!(read_points(&p).is_err());
        std::fs::write(&p, "x\n").unwrap();
        assert!(read_points(&p).is_err());
    }
}
