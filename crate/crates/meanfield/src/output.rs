//! CSV tables and deterministic number formatting.

use sha2::{Digest, Sha256};

/// Formats a float so that it parses back to the same value.
///
/// Plain decimal notation for moderate magnitudes, exponent notation
/// otherwise, so tiny probabilities stay short.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-5..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn fmt_bool(b: bool) -> String {
    String::from(if b { "true" } else { "false" })
}

/// One CSV output. Every table gets a leading `run_id` column on write.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len(), "{}", self.name);
        self.rows.push(row);
    }

    pub fn to_bytes(&self, run_id: &str) -> csv::Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
        w.write_record(std::iter::once("run_id").chain(self.columns.iter().map(String::as_str)))?;
        for row in &self.rows {
            w.write_record(std::iter::once(run_id).chain(row.iter().map(String::as_str)))?;
        }
        w.into_inner().map_err(|e| e.into_error().into())
    }
}

/// A non-tabular output file, such as a control table or a binary path dump.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

/// Everything a command produces.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outputs {
    pub tables: Vec<Table>,
    pub artifacts: Vec<Artifact>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[macro_export]
macro_rules! row {
    ($($x:expr),* $(,)?) => {
        vec![$($crate::output::Cell::cell(&$x)),*]
    };
}

/// Conversion of row values to CSV fields.
pub trait Cell {
    fn cell(&self) -> String;
}

impl Cell for f64 {
    fn cell(&self) -> String {
        fmt_f64(*self)
    }
}

impl Cell for usize {
    fn cell(&self) -> String {
        self.to_string()
    }
}

impl Cell for u64 {
    fn cell(&self) -> String {
        self.to_string()
    }
}

impl Cell for bool {
    fn cell(&self) -> String {
        fmt_bool(*self)
    }
}

impl Cell for &str {
    fn cell(&self) -> String {
        self.to_string()
    }
}

impl Cell for String {
    fn cell(&self) -> String {
        self.clone()
    }
}

impl<T: Cell> Cell for Option<T> {
    fn cell(&self) -> String {
        self.as_ref().map_or_else(String::new, Cell::cell)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn csv_has_header_and_run_id() {
        let mut t = Table::new("t", &["a", "note"]);
        t.push(row![1.5, "x, y"]);
        let text = String::from_utf8(t.to_bytes("abc").unwrap()).unwrap();
        assert_eq!(text, "run_id,a,note\r\nabc,1.5,\"x, y\"\r\n");
    }

    #[test]
    fn small_values_use_exponent_notation() {
        assert_eq!(fmt_f64(1.5e-195), "1.5e-195");
        assert_eq!(fmt_f64(0.25), "0.25");
        assert_eq!(fmt_f64(f64::NAN), "NaN");
    }

    proptest! {
        #[test]
        fn formatting_round_trips(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
            prop_assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }
}
