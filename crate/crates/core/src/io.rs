//! Plain numeric CSV for matrices and vectors. A leading row that does not
//! parse as numbers is treated as a header and skipped.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{RepairError, Result};
use crate::scalar::Real;

fn parse_row<F: Real>(record: &csv::StringRecord) -> Option<Vec<F>> {
    record
        .iter()
        .map(|field| field.trim().parse::<f64>().ok().map(F::lit))
        .collect()
}

/// Reads a rectangular numeric table.
pub fn read_matrix_from<F: Real, R: Read>(reader: R) -> Result<Array2<F>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (idx, record) in rdr.records().enumerate() {
        let record = record?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let Some(values) = parse_row::<F>(&record) else {
            if idx == 0 {
                continue;
            }
            return Err(RepairError::Parse(format!("non-numeric field on line {}", idx + 1)));
        };
        match cols {
            None => cols = Some(values.len()),
            Some(c) if c != values.len() => {
                return Err(RepairError::Parse(format!(
                    "line {} has {} fields, expected {c}",
                    idx + 1,
                    values.len()
                )))
            }
            _ => {}
        }
        data.extend(values);
        rows += 1;
    }
    let cols = cols.ok_or_else(|| RepairError::Parse("no numeric rows".into()))?;
    Ok(Array2::from_shape_vec((rows, cols), data).expect("row lengths checked"))
}

pub fn read_matrix<F: Real>(path: impl AsRef<Path>) -> Result<Array2<F>> {
    read_matrix_from(File::open(path)?)
}

/// Reads a vector stored as one column or one row.
pub fn read_vector<F: Real>(path: impl AsRef<Path>) -> Result<Array1<F>> {
    let m = read_matrix::<F>(path)?;
    match m.dim() {
        (_, 1) => Ok(m.column(0).to_owned()),
        (1, _) => Ok(m.row(0).to_owned()),
        (r, c) => Err(RepairError::Parse(format!("expected a vector, found a {r}x{c} table"))),
    }
}

pub fn write_matrix_to<F: Real, W: Write>(writer: W, m: ArrayView2<'_, F>, header: Option<&[String]>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if let Some(h) = header {
        if h.len() != m.ncols() {
            return Err(RepairError::Dimension(format!("{} header names for {} columns", h.len(), m.ncols())));
        }
        w.write_record(h)?;
    }
    for row in m.rows() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_matrix<F: Real>(path: impl AsRef<Path>, m: ArrayView2<'_, F>, header: Option<&[String]>) -> Result<()> {
    write_matrix_to(BufWriter::new(File::create(path)?), m, header)
}

/// Writes a vector as a single column.
pub fn write_vector<F: Real>(path: impl AsRef<Path>, v: ArrayView1<'_, F>, header: Option<&str>) -> Result<()> {
    let col = v.to_owned().insert_axis(ndarray::Axis(1));
    let names = header.map(|h| vec![h.to_string()]);
    write_matrix(path, col.view(), names.as_deref())
}
