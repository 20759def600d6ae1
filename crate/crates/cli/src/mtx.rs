//! Matrix Market file input and output.
//!
//! Reads real-valued matrices in `coordinate` or `array` format with
//! `general` or `symmetric` storage; symmetric storage is expanded to the
//! full matrix. Writes `array real general` with seventeen significant
//! digits, which round-trips every finite double exactly. Parse failures
//! carry the one-based line number where they were detected.

use std::fmt;
use std::fs;
use std::path::Path;

use parafun::matcore::DenseMatrix;

use crate::error::{CliError, CliResult};

/// Parse failure with its location in the file.
#[derive(Debug)]
pub struct MtxError {
    /// One-based line number.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for MtxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for MtxError {}

fn fail<T>(line: usize, message: impl Into<String>) -> Result<T, MtxError> {
    Err(MtxError {
        line,
        message: message.into(),
    })
}

/// Storage layout declared in the banner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    Coordinate,
    Array,
}

/// Symmetry declared in the banner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
}

/// Reads a Matrix Market file into a dense matrix.
pub fn read_matrix(path: &Path) -> CliResult<DenseMatrix> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_matrix(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Writes `m` in `array real general` format with full precision.
pub fn write_matrix(path: &Path, m: &DenseMatrix) -> CliResult<()> {
    let mut text = String::with_capacity(64 + 26 * m.rows() * m.cols());
    text.push_str("%%MatrixMarket matrix array real general\n");
    text.push_str(&format!("{} {}\n", m.rows(), m.cols()));
    for j in 0..m.cols() {
        for i in 0..m.rows() {
            text.push_str(&format!("{:.16e}\n", m.get(i, j)));
        }
    }
    fs::write(path, text)
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

/// Token cursor over the data lines of a file, tracking line numbers.
struct Tokens<'a> {
    toks: Vec<(usize, &'a str)>,
    pos: usize,
    eof_line: usize,
}

impl<'a> Tokens<'a> {
    fn next(&mut self, what: &str) -> Result<(usize, &'a str), MtxError> {
        match self.toks.get(self.pos) {
            Some(&t) => {
                self.pos += 1;
                Ok(t)
            }
            None => fail(self.eof_line, format!("unexpected end of file, expected {what}")),
        }
    }

    fn next_usize(&mut self, what: &str) -> Result<usize, MtxError> {
        let (line, tok) = self.next(what)?;
        match tok.parse::<usize>() {
            Ok(v) => Ok(v),
            Err(_) => fail(line, format!("expected {what}, found '{tok}'")),
        }
    }

    fn next_f64(&mut self, what: &str) -> Result<(usize, f64), MtxError> {
        let (line, tok) = self.next(what)?;
        match tok.parse::<f64>() {
            Ok(v) => Ok((line, v)),
            Err(_) => fail(line, format!("expected a real value, found '{tok}'")),
        }
    }
}

/// Parses the textual content of a Matrix Market file.
pub fn parse_matrix(text: &str) -> Result<DenseMatrix, MtxError> {
    let banner = match text.lines().next() {
        Some(first) => first,
        None => return fail(1, "empty file, expected a %%MatrixMarket banner"),
    };
    let (layout, symmetry) = parse_banner(banner)?;

    // Everything after the banner is a whitespace-separated token stream;
    // comment lines (leading %) and blank lines are skipped whole.
    let mut tokens = Tokens {
        toks: text
            .lines()
            .enumerate()
            .skip(1)
            .filter(|(_, line)| !line.trim_start().starts_with('%'))
            .flat_map(|(idx, line)| line.split_whitespace().map(move |t| (idx + 1, t)))
            .collect(),
        pos: 0,
        eof_line: text.lines().count().max(1) + 1,
    };

    let rows = tokens.next_usize("the row count")?;
    let cols = tokens.next_usize("the column count")?;
    if rows == 0 || cols == 0 {
        return fail(2, format!("matrix dimensions must be positive, got {rows}x{cols}"));
    }
    if symmetry == Symmetry::Symmetric && rows != cols {
        return fail(2, format!("symmetric storage requires a square matrix, got {rows}x{cols}"));
    }
    let mut m = DenseMatrix::zeros(rows, cols);

    match layout {
        Layout::Coordinate => {
            let nnz = tokens.next_usize("the entry count")?;
            for _ in 0..nnz {
                let i = tokens.next_usize("a row index")?;
                let j = tokens.next_usize("a column index")?;
                let (line, v) = tokens.next_f64("an entry value")?;
                if i == 0 || i > rows || j == 0 || j > cols {
                    return fail(line, format!("entry ({i}, {j}) outside a {rows}x{cols} matrix"));
                }
                m.set(i - 1, j - 1, v);
                if symmetry == Symmetry::Symmetric {
                    m.set(j - 1, i - 1, v);
                }
            }
        }
        Layout::Array => {
            // Array storage is column-major; symmetric files hold only the
            // lower triangle of each column.
            for j in 0..cols {
                let i0 = if symmetry == Symmetry::Symmetric { j } else { 0 };
                for i in i0..rows {
                    let (_, v) = tokens.next_f64("an entry value")?;
                    m.set(i, j, v);
                    if symmetry == Symmetry::Symmetric {
                        m.set(j, i, v);
                    }
                }
            }
        }
    }

    if let Ok((line, tok)) = tokens.next("nothing") {
        return fail(line, format!("trailing data '{tok}' after the final entry"));
    }
    Ok(m)
}

/// Parses the `%%MatrixMarket` banner line.
fn parse_banner(line: &str) -> Result<(Layout, Symmetry), MtxError> {
    let fields: Vec<String> = line.split_whitespace().map(str::to_lowercase).collect();
    if fields.len() != 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" {
        return fail(
            1,
            format!("malformed banner '{line}', expected '%%MatrixMarket matrix <format> <field> <symmetry>'"),
        );
    }
    let layout = match fields[2].as_str() {
        "coordinate" => Layout::Coordinate,
        "array" => Layout::Array,
        other => return fail(1, format!("unsupported format '{other}', expected coordinate or array")),
    };
    match fields[3].as_str() {
        "real" | "integer" => {}
        other => return fail(1, format!("unsupported field '{other}', expected real or integer")),
    }
    let symmetry = match fields[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        other => return fail(1, format!("unsupported symmetry '{other}', expected general or symmetric")),
    };
    Ok((layout, symmetry))
}

#[cfg(test)]
mod tests {
    use super::*;

    use parafun::reference::laplacian_1d;

    fn entries(m: &DenseMatrix) -> Vec<f64> {
        (0..m.rows())
            .flat_map(|i| (0..m.cols()).map(move |j| (i, j)))
            .map(|(i, j)| m.get(i, j))
            .collect()
    }

    #[test]
    fn array_general_is_column_major() {
        let text = "%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n4\n";
        let m = parse_matrix(text).unwrap();
        assert_eq!(entries(&m), vec![1.0, 3.0, 2.0, 4.0]);
    }

    #[test]
    fn banner_is_case_insensitive_and_comments_are_skipped() {
        let text = "%%matrixmarket MATRIX Array Real General\n% a comment\n\n1 2\n% another\n5.5\n-1\n";
        let m = parse_matrix(text).unwrap();
        assert_eq!(entries(&m), vec![5.5, -1.0]);
    }

    #[test]
    fn coordinate_general_reads_sparse_entries() {
        let text = "%%MatrixMarket matrix coordinate real general\n3 3 2\n1 3 4.5\n3 1 -2\n";
        let m = parse_matrix(text).unwrap();
        assert_eq!(m.get(0, 2), 4.5);
        assert_eq!(m.get(2, 0), -2.0);
        assert_eq!(m.get(1, 1), 0.0);
    }

    #[test]
    fn coordinate_symmetric_expands_to_full() {
        let text = "%%MatrixMarket matrix coordinate real symmetric\n3 3 3\n1 1 2\n2 1 -1\n3 2 -1\n";
        let m = parse_matrix(text).unwrap();
        assert_eq!(m.get(0, 1), -1.0);
        assert_eq!(m.get(1, 0), -1.0);
        assert_eq!(m.get(1, 2), -1.0);
        assert_eq!(m.get(2, 1), -1.0);
        assert_eq!(m.get(0, 0), 2.0);
    }

    #[test]
    fn array_symmetric_reads_lower_triangle() {
        let text = "%%MatrixMarket matrix array real symmetric\n2 2\n1\n7\n3\n";
        let m = parse_matrix(text).unwrap();
        assert_eq!(entries(&m), vec![1.0, 7.0, 7.0, 3.0]);
    }

    #[test]
    fn malformed_banner_reports_line_one() {
        let err = parse_matrix("%%MatrixMarket vector real general\n1 1\n0\n").unwrap_err();
        assert_eq!(err.line, 1);
        assert!(err.to_string().contains("banner"), "{err}");
    }

    #[test]
    fn unsupported_field_is_rejected() {
        let err = parse_matrix("%%MatrixMarket matrix array complex general\n1 1\n0\n").unwrap_err();
        assert_eq!(err.line, 1);
        assert!(err.to_string().contains("complex"), "{err}");
    }

    #[test]
    fn bad_value_reports_its_line() {
        let err = parse_matrix("%%MatrixMarket matrix array real general\n2 1\n1.0\noops\n")
            .unwrap_err();
        assert_eq!(err.line, 4);
        assert!(err.to_string().contains("oops"), "{err}");
    }

    #[test]
    fn out_of_range_coordinate_reports_its_line() {
        let err =
            parse_matrix("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n")
                .unwrap_err();
        assert_eq!(err.line, 3);
        assert!(err.to_string().contains("outside"), "{err}");
    }

    #[test]
    fn truncated_file_reports_end_of_file() {
        let err = parse_matrix("%%MatrixMarket matrix array real general\n2 2\n1.0\n").unwrap_err();
        assert!(err.to_string().contains("end of file"), "{err}");
    }

    #[test]
    fn trailing_data_is_rejected() {
        let err = parse_matrix("%%MatrixMarket matrix array real general\n1 1\n1.0\n2.0\n")
            .unwrap_err();
        assert_eq!(err.line, 4);
        assert!(err.to_string().contains("trailing"), "{err}");
    }

    #[test]
    fn nonsquare_symmetric_is_rejected() {
        let err = parse_matrix("%%MatrixMarket matrix array real symmetric\n2 3\n1\n").unwrap_err();
        assert!(err.to_string().contains("square"), "{err}");
    }

    #[test]
    fn write_read_round_trips_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.mtx");
        let a = laplacian_1d(8).unwrap();
        write_matrix(&path, &a).unwrap();
        let b = read_matrix(&path).unwrap();
        assert_eq!(a.shape(), b.shape());
        assert_eq!(entries(&a), entries(&b));

        // Awkward magnitudes and signs survive the 17-digit round trip.
        let odd = DenseMatrix::from_rows(&[
            vec![1.0 / 3.0, -2.2250738585072014e-308],
            vec![9.9e300, -0.0],
        ])
        .unwrap();
        write_matrix(&path, &odd).unwrap();
        let back = read_matrix(&path).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(odd.get(i, j).to_bits(), back.get(i, j).to_bits());
            }
        }
    }

    #[test]
    fn identity_round_trips_bitwise_through_text() {
        let eye = DenseMatrix::identity(2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("eye.mtx");
        write_matrix(&path, &eye).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        write_matrix(&path, &read_matrix(&path).unwrap()).unwrap();
        assert_eq!(text, std::fs::read_to_string(&path).unwrap());
    }

    #[test]
    fn missing_file_is_a_config_error() {
        let err = read_matrix(Path::new("/nonexistent/a.mtx")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
