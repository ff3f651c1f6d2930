//! Survival curves as right-continuous step functions on a time grid.

use std::io::{Read, Write};

use ndarray::Array2;

use crate::dataset::fmt_f64;
use crate::error::{Error, Result};

fn check_increasing(grid: &[f64]) -> Result<()> {
    if let Some(k) = grid.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument(format!("grid is not strictly increasing at index {}", k + 1)));
    }
    if grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidArgument("grid contains non-finite values".into()));
    }
    Ok(())
}

/// Step lookup: index of the largest grid point `<= t`, if any.
pub(crate) fn step_index(grid: &[f64], t: f64) -> Option<usize> {
    grid.partition_point(|&s| s <= t).checked_sub(1)
}

/// One individual's predicted survival `S(t|x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalCurve {
    pub grid: Vec<f64>,
    pub survival: Vec<f64>,
}

impl SurvivalCurve {
    /// Value at the largest grid time `<= t`; 1 before the grid starts.
    pub fn at(&self, t: f64) -> f64 {
        step_index(&self.grid, t).map_or(1.0, |k| self.survival[k])
    }

    /// Monotone non-increasing, within `[0, 1]`, and 1 at `t = 0` (when
    /// the grid covers zero).
    pub fn is_valid(&self) -> bool {
        self.survival.iter().all(|s| (0.0..=1.0).contains(s))
            && self.survival.windows(2).all(|w| w[1] <= w[0])
            && self.at(0.0) == 1.0
    }
}

/// Survival curves for many individuals sharing one grid; `values` is
/// `n_times x n_rows`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalCurves {
    times: Vec<f64>,
    values: Array2<f64>,
}

impl SurvivalCurves {
    pub fn new(times: Vec<f64>, values: Array2<f64>) -> Result<Self> {
        check_increasing(&times)?;
        if values.nrows() != times.len() {
            return Err(Error::DimensionMismatch { expected: times.len(), actual: values.nrows() });
        }
        Ok(Self { times, values })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn n_rows(&self) -> usize {
        self.values.ncols()
    }

    /// `S(t | x_row)` by step lookup.
    pub fn at(&self, t: f64, row: usize) -> f64 {
        step_index(&self.times, t).map_or(1.0, |k| self.values[[k, row]])
    }

    /// `S(t | x_row)` for every row.
    pub fn column_at(&self, t: f64) -> Vec<f64> {
        match step_index(&self.times, t) {
            Some(k) => self.values.row(k).to_vec(),
            None => vec![1.0; self.n_rows()],
        }
    }

    pub fn curve(&self, row: usize) -> SurvivalCurve {
        SurvivalCurve { grid: self.times.clone(), survival: self.values.column(row).to_vec() }
    }

    /// Re-evaluates every curve on another increasing grid.
    pub fn on_grid(&self, grid: &[f64]) -> Result<Self> {
        check_increasing(grid)?;
        let mut values = Array2::ones((grid.len(), self.n_rows()));
        for (k, &t) in grid.iter().enumerate() {
            if let Some(src) = step_index(&self.times, t) {
                values.row_mut(k).assign(&self.values.row(src));
            }
        }
        Ok(Self { times: grid.to_vec(), values })
    }

    /// CSV: `time,s_row0,s_row1,...`, one line per grid time.
    pub fn write_csv<W: Write>(&self, mut sink: W) -> Result<()> {
        let mut header = String::from("time");
        for j in 0..self.n_rows() {
            header.push_str(&format!(",s_row{j}"));
        }
        writeln!(sink, "{header}")?;
        for (k, &t) in self.times.iter().enumerate() {
            let mut line = fmt_f64(t);
            for &v in self.values.row(k) {
                line.push(',');
                line.push_str(&fmt_f64(v));
            }
            writeln!(sink, "{line}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(source: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
        let headers = reader.headers()?.clone();
        if headers.get(0) != Some("time") {
            return Err(Error::MissingColumn("time".into()));
        }
        let n_rows = headers.len() - 1;
        let mut times = Vec::new();
        let mut flat = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            if rec.len() != headers.len() {
                return Err(Error::InvalidRow { row: i + 1, message: "wrong number of fields".into() });
            }
            for (c, field) in rec.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| Error::InvalidRow {
                    row: i + 1,
                    message: format!("non-numeric value `{field}`"),
                })?;
                if c == 0 {
                    times.push(v);
                } else {
                    flat.push(v);
                }
            }
        }
        let values = Array2::from_shape_vec((times.len(), n_rows), flat).expect("shape checked per record");
        Self::new(times, values)
    }
}
