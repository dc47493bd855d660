//! Minimal CSV writer: fixed column order, 12 significant digits, LF endings.

use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(usize),
    Bool(bool),
    Text(&'static str),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&'static str> for Cell {
    fn from(v: &'static str) -> Self {
        Cell::Text(v)
    }
}

/// `{:.11e}` for finite values; `inf`, `-inf`, `nan` otherwise. Negative
/// zero prints as zero.
pub fn format_number(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else if v == 0.0 {
        format!("{:.11e}", 0.0)
    } else {
        format!("{v:.11e}")
    }
}

pub struct Table {
    header: Vec<&'static str>,
    body: String,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            body: String::new(),
        }
    }

    pub fn row(&mut self, cells: Vec<Cell>) {
        assert_eq!(cells.len(), self.header.len(), "row width");
        for (i, cell) in cells.iter().enumerate() {
            if i > 0 {
                self.body.push(',');
            }
            match cell {
                Cell::Num(v) => self.body.push_str(&format_number(*v)),
                Cell::Int(v) => write!(self.body, "{v}").unwrap(),
                Cell::Bool(v) => self.body.push_str(if *v { "true" } else { "false" }),
                Cell::Text(s) => self.body.push_str(s),
            }
        }
        self.body.push('\n');
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        out.push_str(&self.body);
        out
    }
}
