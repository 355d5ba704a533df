//! CSV input and output with `inf`, `-inf` and `nan` literals.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use crate::error::{CliError, Result};

/// A CSV file held as text cells, with its header.
#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// Parses a numeric cell, accepting `inf`, `-inf` and `nan` in any case.
pub fn parse_cell(cell: &str) -> Option<f64> {
    let t = cell.trim();
    match t.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" => Some(f64::INFINITY),
        "-inf" | "-infinity" => Some(f64::NEG_INFINITY),
        "nan" => Some(f64::NAN),
        _ => t.parse().ok(),
    }
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let name = path.display().to_string();
        let file = File::open(path).map_err(|source| CliError::Io {
            path: name.clone(),
            source,
        })?;
        Self::from_reader(name, file)
    }

    pub fn from_reader<R: io::Read>(name: String, reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| CliError::Data(format!("{name}: {e}")))?
            .iter()
            .map(str::to_string)
            .collect();
        if headers.is_empty() || headers.iter().all(String::is_empty) {
            return Err(CliError::Data(format!("{name}: missing header row")));
        }
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| CliError::Data(format!("{name}: {e}")))?;
            rows.push(record.iter().map(str::to_string).collect());
        }
        if rows.is_empty() {
            return Err(CliError::Data(format!("{name}: no data rows")));
        }
        Ok(Self { name, headers, rows })
    }

    pub fn has(&self, column: &str) -> bool {
        self.headers.iter().any(|h| h == column)
    }

    fn index(&self, column: &str) -> Result<usize> {
        self.headers.iter().position(|h| h == column).ok_or_else(|| {
            CliError::Data(format!("{}: no column '{column}' (have {})", self.name, self.headers.join(", ")))
        })
    }

    /// A numeric column; non-numeric or non-finite cells are reported with
    /// their line number (the header is line 1).
    pub fn column(&self, column: &str) -> Result<Vec<f64>> {
        let j = self.index(column)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let cell = &row[j];
                match parse_cell(cell) {
                    Some(v) if v.is_finite() => Ok(v),
                    _ => Err(CliError::Data(format!(
                        "{}: line {}, column '{column}': '{cell}' is not a finite number",
                        self.name,
                        i + 2
                    ))),
                }
            })
            .collect()
    }

    /// Row-major matrix of the given columns.
    pub fn matrix(&self, columns: &[String]) -> Result<Vec<f64>> {
        let cols = columns
            .iter()
            .map(|c| self.column(c))
            .collect::<Result<Vec<_>>>()?;
        let mut flat = Vec::with_capacity(self.rows.len() * cols.len());
        for i in 0..self.rows.len() {
            flat.extend(cols.iter().map(|c| c[i]));
        }
        Ok(flat)
    }
}

/// Writes `bytes` to `path`, or to stdout when `path` is `None` or `-`.
pub fn write_output(path: Option<&str>, bytes: &str) -> Result<()> {
    match path {
        None | Some("-") => io::stdout()
            .lock()
            .write_all(bytes.as_bytes())
            .map_err(|source| CliError::Io {
                path: "<stdout>".into(),
                source,
            }),
        Some(p) => std::fs::write(p, bytes).map_err(|source| CliError::Io {
            path: p.to_string(),
            source,
        }),
    }
}

/// Renders rows of cells as CSV.
pub fn to_csv(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| CliError::Data(e.to_string()))?;
    for row in rows {
        w.write_record(row).map_err(|e| CliError::Data(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literals() {
        assert_eq!(parse_cell("inf"), Some(f64::INFINITY));
        assert_eq!(parse_cell(" -INF "), Some(f64::NEG_INFINITY));
        assert!(parse_cell("nan").unwrap().is_nan());
        assert_eq!(parse_cell("1.5"), Some(1.5));
        assert_eq!(parse_cell("x"), None);
    }

    #[test]
    fn bad_cells_name_their_line() {
        let t = Table::from_reader("t.csv".into(), "x,y\n1,2\n3,oops\n".as_bytes()).unwrap();
        assert_eq!(t.column("x").unwrap(), vec![1.0, 3.0]);
        let err = t.column("y").unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("'y'"), "{err}");
        assert!(t.column("z").is_err());
    }

    #[test]
    fn matrix_is_row_major() {
        let t = Table::from_reader("t".into(), "a,b\n1,2\n3,4\n".as_bytes()).unwrap();
        assert_eq!(t.matrix(&["b".into(), "a".into()]).unwrap(), vec![2.0, 1.0, 4.0, 3.0]);
    }
}
