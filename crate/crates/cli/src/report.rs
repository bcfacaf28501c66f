//! Analysis reports and their text and JSON renderings.
//!
//! JSON carries every number at full precision; text rounds each column to
//! its declared number of decimals.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
    /// `inf`, `-inf` or `nan`; JSON has no literal for these.
    NonFinite {
        nonfinite: String,
    },
    Empty,
}

impl Cell {
    pub fn num(x: f64) -> Self {
        if x.is_finite() {
            Cell::Num(x)
        } else if x.is_nan() {
            Cell::NonFinite {
                nonfinite: "nan".into(),
            }
        } else if x > 0.0 {
            Cell::NonFinite {
                nonfinite: "inf".into(),
            }
        } else {
            Cell::NonFinite {
                nonfinite: "-inf".into(),
            }
        }
    }

    pub fn opt(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::num)
    }

    pub fn text(s: impl Into<String>) -> Self {
        Cell::Text(s.into())
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(i) => Some(*i as f64),
            Cell::Num(x) => Some(*x),
            Cell::NonFinite { nonfinite } => match nonfinite.as_str() {
                "inf" => Some(f64::INFINITY),
                "-inf" => Some(f64::NEG_INFINITY),
                _ => Some(f64::NAN),
            },
            _ => None,
        }
    }

    fn render(&self, decimals: Option<usize>) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Num(x) => match decimals {
                Some(d) => {
                    let s = format!("{x:.d$}");
                    // no "-0.00"
                    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
                        s[1..].to_string()
                    } else {
                        s
                    }
                }
                None => format!("{x:?}"),
            },
            Cell::Text(s) => s.clone(),
            Cell::NonFinite { nonfinite } => nonfinite.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn is_numeric(&self) -> bool {
        matches!(self, Cell::Int(_) | Cell::Num(_) | Cell::NonFinite { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    /// Decimals shown in text output; `None` prints the shortest exact form.
    pub decimals: Option<usize>,
}

impl Column {
    pub fn new(name: impl Into<String>, decimals: Option<usize>) -> Self {
        Self {
            name: name.into(),
            decimals,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub title: String,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Cell>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scalar {
    pub name: String,
    pub value: Cell,
    pub decimals: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub kind: String,
    pub input_digest: Option<String>,
    pub sections: Vec<Section>,
    pub scalars: Vec<Scalar>,
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(kind: &str, input_digest: Option<String>) -> Self {
        Self {
            kind: kind.to_string(),
            input_digest,
            sections: Vec::new(),
            scalars: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn scalar(&mut self, name: &str, value: Cell, decimals: Option<usize>) {
        self.scalars.push(Scalar {
            name: name.to_string(),
            value,
            decimals,
        });
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn section(&self, title: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.title == title)
    }

    pub fn get_scalar(&self, name: &str) -> Option<&Cell> {
        self.scalars
            .iter()
            .find(|s| s.name == name)
            .map(|s| &s.value)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {}", self.kind);
        if let Some(d) = &self.input_digest {
            let _ = writeln!(out, "input sha256: {d}");
        }
        for s in &self.sections {
            out.push('\n');
            render_section(&mut out, s);
        }
        if !self.scalars.is_empty() {
            out.push('\n');
            let width = self
                .scalars
                .iter()
                .map(|s| s.name.chars().count())
                .max()
                .unwrap_or(0);
            for s in &self.scalars {
                let _ = writeln!(out, "{:<width$}  {}", s.name, s.value.render(s.decimals));
            }
        }
        if !self.notes.is_empty() {
            out.push('\n');
            for n in &self.notes {
                let _ = writeln!(out, "note: {n}");
            }
        }
        out
    }
}

fn render_section(out: &mut String, s: &Section) {
    let _ = writeln!(out, "## {}", s.title);
    let cells: Vec<Vec<String>> = s
        .rows
        .iter()
        .map(|r| {
            r.iter()
                .zip(&s.columns)
                .map(|(c, col)| c.render(col.decimals))
                .collect()
        })
        .collect();
    let widths: Vec<usize> = s
        .columns
        .iter()
        .enumerate()
        .map(|(i, c)| {
            cells
                .iter()
                .filter_map(|r| r.get(i))
                .map(|v| v.chars().count())
                .chain([c.name.chars().count()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let numeric: Vec<bool> = (0..s.columns.len())
        .map(|i| {
            s.rows
                .iter()
                .any(|r| r.get(i).is_some_and(Cell::is_numeric))
        })
        .collect();
    let line = |vals: Vec<&str>| -> String {
        let parts: Vec<String> = vals
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let pad = widths[i].saturating_sub(v.chars().count());
                if numeric[i] {
                    format!("{}{v}", " ".repeat(pad))
                } else {
                    format!("{v}{}", " ".repeat(pad))
                }
            })
            .collect();
        parts.join("  ").trim_end().to_string()
    };
    let _ = writeln!(
        out,
        "{}",
        line(s.columns.iter().map(|c| c.name.as_str()).collect())
    );
    for r in &cells {
        let _ = writeln!(out, "{}", line(r.iter().map(String::as_str).collect()));
    }
}
