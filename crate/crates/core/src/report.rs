//! Report documents and their JSON, CSV and Markdown renderings.
//!
//! Canonical JSON sorts object keys, rounds every float to six significant
//! digits and drops any `wall_clock` subtree, so identical inputs give
//! byte-identical output.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Number, Value};

pub const WALL_CLOCK_KEY: &str = "wall_clock";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    /// True when wall-clock fields have been removed, making the content a
    /// pure function of config and seed.
    pub deterministic: bool,
    pub config: Value,
    pub payload: Value,
}

impl ReportDocument {
    pub fn new(command: &str, seed: u64, config: Value, payload: Value) -> Self {
        ReportDocument {
            tool: env!("CARGO_PKG_NAME").to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            command: command.to_owned(),
            seed,
            deterministic: false,
            config,
            payload,
        }
    }

    /// Canonical rendering. With `keep_wall_clock` the timing subtrees stay
    /// and the document is marked non-deterministic.
    pub fn to_canonical_json(&self, keep_wall_clock: bool) -> String {
        let mut doc = self.clone();
        doc.deterministic = !keep_wall_clock;
        let value = serde_json::to_value(&doc).expect("report documents serialize");
        canonical_json(value, keep_wall_clock)
    }
}

/// Rounds `x` to six significant digits.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().unwrap_or(x)
}

fn normalize(value: Value, keep_wall_clock: bool) -> Value {
    match value {
        Value::Object(map) => {
            let sorted: Map<String, Value> = map
                .into_iter()
                .filter(|(k, _)| keep_wall_clock || k != WALL_CLOCK_KEY)
                .map(|(k, v)| (k, normalize(v, keep_wall_clock)))
                .collect();
            Value::Object(sorted)
        }
        Value::Array(items) => Value::Array(
            items
                .into_iter()
                .map(|v| normalize(v, keep_wall_clock))
                .collect(),
        ),
        Value::Number(n) if n.is_f64() => n
            .as_f64()
            .and_then(|x| Number::from_f64(round_sig(x)))
            .map_or(Value::Null, Value::Number),
        other => other,
    }
}

/// Pretty-printed canonical JSON with a trailing newline.
pub fn canonical_json(value: Value, keep_wall_clock: bool) -> String {
    let mut s = serde_json::to_string_pretty(&normalize(value, keep_wall_clock))
        .expect("normalized values serialize");
    s.push('\n');
    s
}

/// Formats a number with at most six significant digits and no trailing
/// zeros.
pub fn fmt_num(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let r = round_sig(x);
    let s = format!("{r}");
    if s.contains('e') {
        format!("{r:e}")
    } else {
        s
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

/// A flat table destined for CSV or Markdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, title: &str, columns: &[&str]) -> Self {
        Table {
            name: name.to_owned(),
            title: title.to_owned(),
            columns: columns.iter().map(|c| (*c).to_owned()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_markdown(&self) -> String {
        let esc = |s: &str| s.replace('|', "\\|");
        let mut out = format!("### {}\n\n", self.title);
        out.push_str(&format!(
            "| {} |\n",
            self.columns
                .iter()
                .map(|c| esc(c))
                .collect::<Vec<_>>()
                .join(" | ")
        ));
        out.push_str(&format!("|{}\n", " --- |".repeat(self.columns.len())));
        for row in &self.rows {
            out.push_str(&format!(
                "| {} |\n",
                row.iter().map(|c| esc(c)).collect::<Vec<_>>().join(" | ")
            ));
        }
        out
    }
}

/// Markdown page: heading, key facts, then every table.
pub fn markdown_page(
    doc: &ReportDocument,
    summary: &[(String, String)],
    tables: &[Table],
) -> String {
    let mut out = format!("# {} {}\n\n", doc.tool, doc.command);
    out.push_str(&format!(
        "- version: {}\n- seed: {}\n",
        doc.version, doc.seed
    ));
    for (k, v) in summary {
        out.push_str(&format!("- {k}: {v}\n"));
    }
    for t in tables {
        out.push('\n');
        out.push_str(&t.to_markdown());
    }
    out
}
