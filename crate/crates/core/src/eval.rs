//! The n×k evaluation matrix `L[i][j] = q_j(x_i)` shared by the estimators
//! and the ρ-certificate, plus headerless CSV reading and writing.

use std::io::{Read, Write};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct EvalMatrix {
    values: Vec<f64>,
    n: usize,
    k: usize,
}

/// Validates a row-major table of evaluations.
///
/// Entries must be finite and nonnegative and no row may vanish entirely: such
/// a sample has zero likelihood under every mixture.
pub fn validate_eval_matrix(raw: &[Vec<f64>]) -> Result<EvalMatrix> {
    let n = raw.len();
    if n == 0 {
        return Err(Error::invalid("evaluation matrix has no rows"));
    }
    let k = raw[0].len();
    if k == 0 {
        return Err(Error::invalid("evaluation matrix has no columns"));
    }
    let mut values = Vec::with_capacity(n * k);
    for (i, row) in raw.iter().enumerate() {
        if row.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: row.len(),
            });
        }
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::invalid(format!("entry ({i}, {j}) is not finite")));
            }
            if v < 0.0 {
                return Err(Error::invalid(format!(
                    "entry ({i}, {j}) is negative ({v})"
                )));
            }
        }
        if row.iter().all(|&v| v == 0.0) {
            return Err(Error::DegenerateSample { row: i });
        }
        values.extend_from_slice(row);
    }
    Ok(EvalMatrix { values, n, k })
}

impl EvalMatrix {
    pub fn from_rows(raw: &[Vec<f64>]) -> Result<Self> {
        validate_eval_matrix(raw)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.k + j]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    /// Multiplies every entry by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::invalid("scale factor must be positive and finite"));
        }
        Ok(EvalMatrix {
            values: self.values.iter().map(|v| v * c).collect(),
            n: self.n,
            k: self.k,
        })
    }

    /// `Σ_j w_j L[i][j]` for every row.
    pub fn mixture_densities(&self, weights: &[f64]) -> Vec<f64> {
        self.rows().map(|row| dot(row, weights)).collect()
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        validate_eval_matrix(&read_table(reader)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_table(writer, self.rows())
    }
}

/// Reads a headerless CSV of numbers without further validation.
pub fn read_table<R: Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        rows.push(
            record
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| Error::invalid(format!("cannot parse '{f}' as a number")))
                })
                .collect::<Result<Vec<f64>>>()?,
        );
    }
    Ok(rows)
}

pub fn write_table<'a, W: Write>(writer: W, rows: impl Iterator<Item = &'a [f64]>) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(writer);
    for row in rows {
        wtr.write_record(row.iter().map(|v| format!("{v:?}")))?;
    }
    wtr.flush()?;
    Ok(())
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
