//! Headerless numeric CSV files: one matrix row per line.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .map(|field| {
                field.parse::<f64>().map_err(|e| {
                    Error::Usage(format!("{}:{}: cannot parse {field:?}: {e}", path.display(), line + 1))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Dimension {
                    what: "csv row length",
                    expected: first.len(),
                    got: row.len(),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Usage(format!("{} is empty", path.display())));
    }
    let (m, n) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_fn(m, n, |i, j| rows[i][j]))
}

/// A vector stored either as one column or one row.
pub fn read_vector(path: &Path) -> Result<DVector<f64>> {
    let m = read_matrix(path)?;
    if m.ncols() == 1 {
        Ok(m.column(0).into_owned())
    } else if m.nrows() == 1 {
        Ok(m.row(0).transpose())
    } else {
        Err(Error::Usage(format!(
            "{} holds a {}x{} matrix, expected a vector",
            path.display(),
            m.nrows(),
            m.ncols()
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn reads_matrix_and_vectors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        std::fs::File::create(&p).unwrap().write_all(b"1, 2.5,-3\n4,5,6e-1\n").unwrap();
        let m = read_matrix(&p).unwrap();
        assert_eq!(m.shape(), (2, 3));
        assert_eq!(m[(0, 1)], 2.5);
        assert_eq!(m[(1, 2)], 0.6);

        let q = dir.path().join("b.csv");
        std::fs::File::create(&q).unwrap().write_all(b"1\n2\n3\n").unwrap();
        assert_eq!(read_vector(&q).unwrap().len(), 3);
        assert!(read_vector(&p).is_err());
    }

    #[test]
    fn ragged_rows_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        std::fs::File::create(&p).unwrap().write_all(b"1,2\n3\n").unwrap();
        assert!(read_matrix(&p).is_err());
    }
}
