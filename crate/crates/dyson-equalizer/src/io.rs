//! CSV interchange for matrices and vectors.
//!
//! Format: headerless dense CSV, one matrix row per line, locale-independent
//! decimal point. A first line that fails numeric parsing is treated as a
//! header, skipped with a warning on stderr. Values are written with 17
//! significant digits so write-then-read reproduces every `f64` bit-exactly.

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

/// Formats one value with 17 significant digits (round-trip exact).
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Parses a dense CSV matrix from a reader. `source` names the input in
/// errors.
pub fn read_matrix_from(reader: impl BufRead, source: &str) -> Result<DenseMatrix> {
    let mut values: Vec<f64> = Vec::new();
    let mut cols: Option<usize> = None;
    let mut rows = 0usize;
    let mut first_data_line = true;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<f64>, _> =
            fields.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(row) => {
                match cols {
                    None => cols = Some(row.len()),
                    Some(c) if c != row.len() => {
                        return Err(Error::Parse {
                            line: line_no,
                            msg: format!("expected {c} fields, found {}", row.len()),
                        });
                    }
                    _ => {}
                }
                values.extend(row);
                rows += 1;
                first_data_line = false;
            }
            Err(e) => {
                if first_data_line && rows == 0 {
                    eprintln!("warning: {source}: line 1 is not numeric, treating it as a header");
                    first_data_line = false;
                    continue;
                }
                let bad = fields
                    .iter()
                    .find(|f| f.parse::<f64>().is_err())
                    .copied()
                    .unwrap_or("");
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("cannot parse field {bad:?}: {e}"),
                });
            }
        }
    }
    if rows == 0 {
        return Err(Error::Parse {
            line: 1,
            msg: format!("{source} contains no data rows"),
        });
    }
    DenseMatrix::new(rows, cols.unwrap_or(0), values).map_err(|e| match e {
        Error::InvalidInput(msg) => Error::Parse { line: 1, msg },
        other => other,
    })
}

pub fn read_matrix(path: &Path) -> Result<DenseMatrix> {
    let file = std::fs::File::open(path)?;
    read_matrix_from(
        std::io::BufReader::new(file),
        &path.display().to_string(),
    )
}

pub fn write_matrix_to(mut writer: impl Write, m: &DenseMatrix) -> Result<()> {
    for i in 0..m.rows() {
        let line: Vec<String> = m.row(i).iter().map(|&v| format_value(v)).collect();
        writeln!(writer, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn write_matrix(path: &Path, m: &DenseMatrix) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    write_matrix_to(&mut w, m)?;
    w.flush()?;
    Ok(())
}

/// Writes a vector as a single-column CSV.
pub fn write_vector(path: &Path, v: &[f64]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    for &e in v {
        writeln!(w, "{}", format_value(e))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a generic CSV table with a header row.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn roundtrip_preserves_bits() {
        let m = DenseMatrix::new(
            2,
            3,
            vec![
                1.0,
                -2.5e-17,
                std::f64::consts::PI,
                1.0 / 3.0,
                -0.0,
                4.472135954999579e8,
            ],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_matrix_to(&mut buf, &m).unwrap();
        let back = read_matrix_from(Cursor::new(buf), "buf").unwrap();
        assert_eq!(m.shape(), back.shape());
        for (a, b) in m.values().iter().zip(back.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn header_is_skipped_with_warning() {
        let data = "col_a,col_b\n1.0,2.0\n3.0,4.0\n";
        let m = read_matrix_from(Cursor::new(data), "test").unwrap();
        assert_eq!(m.shape(), (2, 2));
        assert_eq!(m.get(1, 0), 3.0);
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let data = "1.0,2.0\n3.0\n";
        match read_matrix_from(Cursor::new(data), "test") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn non_numeric_body_is_rejected() {
        let data = "1.0,2.0\nhello,4.0\n";
        assert!(matches!(
            read_matrix_from(Cursor::new(data), "test"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(read_matrix_from(Cursor::new(""), "test").is_err());
    }

    #[test]
    fn scalar_file() {
        let m = read_matrix_from(Cursor::new("2\n"), "test").unwrap();
        assert_eq!(m.shape(), (1, 1));
        assert_eq!(m.get(0, 0), 2.0);
    }
}
