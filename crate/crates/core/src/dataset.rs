//! Right-censored survival data: loading, validation, standardization,
//! splitting and risk-set indexing.

use std::io::{Read, Write};

use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Covariates plus per-row duration and event indicator.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    covariates: Array2<f64>,
    durations: Vec<f64>,
    events: Vec<bool>,
    names: Vec<String>,
}

impl SurvivalDataset {
    /// Builds a dataset, checking row counts and duration validity.
    pub fn new(covariates: Array2<f64>, durations: Vec<f64>, events: Vec<bool>) -> Result<Self> {
        let names = (0..covariates.ncols()).map(|j| format!("x{j}")).collect();
        Self::with_names(covariates, durations, events, names)
    }

    pub fn with_names(
        covariates: Array2<f64>,
        durations: Vec<f64>,
        events: Vec<bool>,
        names: Vec<String>,
    ) -> Result<Self> {
        let n = durations.len();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if events.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: events.len() });
        }
        if covariates.nrows() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: covariates.nrows() });
        }
        if names.len() != covariates.ncols() {
            return Err(Error::DimensionMismatch {
                expected: covariates.ncols(),
                actual: names.len(),
            });
        }
        for (i, &t) in durations.iter().enumerate() {
            if !t.is_finite() || t < 0.0 {
                return Err(Error::InvalidRow {
                    row: i + 1,
                    message: format!("duration must be finite and non-negative, got {t}"),
                });
            }
        }
        Ok(Self { covariates, durations, events, names })
    }

    pub fn len(&self) -> usize {
        self.durations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.durations.is_empty()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn covariates(&self) -> &Array2<f64> {
        &self.covariates
    }

    pub fn durations(&self) -> &[f64] {
        &self.durations
    }

    pub fn events(&self) -> &[bool] {
        &self.events
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_events(&self) -> usize {
        self.events.iter().filter(|&&d| d).count()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.covariates.row(i)
    }

    /// New dataset holding the given rows, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let covariates = self.covariates.select(Axis(0), rows);
        let durations = rows.iter().map(|&i| self.durations[i]).collect();
        let events = rows.iter().map(|&i| self.events[i]).collect();
        Self::with_names(covariates, durations, events, self.names.clone())
    }

    pub fn with_covariates(&self, covariates: Array2<f64>) -> Result<Self> {
        Self::with_names(covariates, self.durations.clone(), self.events.clone(), self.names.clone())
    }
}

/// Reads `duration,event,<covariates...>` CSV. Row numbers in errors are
/// 1-based data rows (the header is not counted).
pub fn load_csv<R: Read>(source: R) -> Result<SurvivalDataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(source);
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let duration_col = find("duration")?;
    let event_col = find("event")?;
    let covariate_cols: Vec<usize> =
        (0..headers.len()).filter(|&c| c != duration_col && c != event_col).collect();
    let names: Vec<String> = covariate_cols.iter().map(|&c| headers[c].to_string()).collect();

    let mut durations = Vec::new();
    let mut events = Vec::new();
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::InvalidRow {
                row,
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        let parse = |c: usize| -> Result<f64> {
            record[c].parse::<f64>().map_err(|_| Error::InvalidRow {
                row,
                message: format!("non-numeric value `{}` in column `{}`", &record[c], &headers[c]),
            })
        };
        let t = parse(duration_col)?;
        if !t.is_finite() || t < 0.0 {
            return Err(Error::InvalidRow { row, message: format!("negative or non-finite duration {t}") });
        }
        let d = parse(event_col)?;
        let d = if d == 0.0 {
            false
        } else if d == 1.0 {
            true
        } else {
            return Err(Error::InvalidRow { row, message: format!("event must be 0 or 1, got {d}") });
        };
        durations.push(t);
        events.push(d);
        for &c in &covariate_cols {
            values.push(parse(c)?);
        }
    }
    if durations.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let covariates = Array2::from_shape_vec((durations.len(), covariate_cols.len()), values)
        .expect("row-major buffer matches shape");
    SurvivalDataset::with_names(covariates, durations, events, names)
}

/// Reads covariates only, for prediction. `duration` and `event` columns
/// are dropped when present; every other column is a covariate.
pub fn load_covariates_csv<R: Read>(source: R) -> Result<(Vec<String>, Array2<f64>)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(source);
    let headers = reader.headers()?.clone();
    let cols: Vec<usize> = (0..headers.len()).filter(|&c| !matches!(&headers[c], "duration" | "event")).collect();
    let names: Vec<String> = cols.iter().map(|&c| headers[c].to_string()).collect();
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::InvalidRow {
                row: i + 1,
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        for &c in &cols {
            let v = record[c].parse::<f64>().map_err(|_| Error::InvalidRow {
                row: i + 1,
                message: format!("non-numeric value `{}` in column `{}`", &record[c], &headers[c]),
            })?;
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::EmptyDataset);
    }
    let x = Array2::from_shape_vec((rows, cols.len()), values).expect("row-major buffer matches shape");
    Ok((names, x))
}

/// 17 significant digits; parses back to the identical double.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_csv<W: Write>(dataset: &SurvivalDataset, mut sink: W) -> Result<()> {
    let mut header = vec!["duration".to_string(), "event".to_string()];
    header.extend(dataset.names.iter().cloned());
    writeln!(sink, "{}", header.join(","))?;
    for i in 0..dataset.len() {
        let mut line = String::with_capacity(32 * (2 + dataset.n_covariates()));
        line.push_str(&fmt_f64(dataset.durations[i]));
        line.push(',');
        line.push(if dataset.events[i] { '1' } else { '0' });
        for &v in dataset.covariates.row(i) {
            line.push(',');
            line.push_str(&fmt_f64(v));
        }
        writeln!(sink, "{line}")?;
    }
    Ok(())
}

/// Per-column affine transform fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Sample standard deviation; zero marks a constant column.
    pub sd: Vec<f64>,
}

impl Standardizer {
    pub fn fit(train: &SurvivalDataset) -> Self {
        let x = train.covariates();
        let n = x.nrows() as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut sd = Vec::with_capacity(x.ncols());
        for col in x.columns() {
            let m = col.sum() / n;
            let ss: f64 = col.iter().map(|v| (v - m) * (v - m)).sum();
            let s = if x.nrows() > 1 { (ss / (n - 1.0)).sqrt() } else { 0.0 };
            mean.push(m);
            sd.push(if s > 0.0 && s.is_finite() { s } else { 0.0 });
        }
        Self { mean, sd }
    }

    pub fn transform(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(Error::DimensionMismatch { expected: self.mean.len(), actual: x.ncols() });
        }
        let mut out = x.clone();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let (m, s) = (self.mean[j], self.sd[j]);
            if s > 0.0 {
                col.mapv_inplace(|v| (v - m) / s);
            } else {
                col.fill(0.0);
            }
        }
        Ok(out)
    }

    pub fn apply(&self, dataset: &SurvivalDataset) -> Result<SurvivalDataset> {
        dataset.with_covariates(self.transform(dataset.covariates())?)
    }

    /// Inverse transform; constant columns come back as their mean.
    pub fn inverse(&self, z: &Array2<f64>) -> Result<Array2<f64>> {
        if z.ncols() != self.mean.len() {
            return Err(Error::DimensionMismatch { expected: self.mean.len(), actual: z.ncols() });
        }
        let mut out = z.clone();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let (m, s) = (self.mean[j], self.sd[j]);
            col.mapv_inplace(|v| v * s + m);
        }
        Ok(out)
    }
}

pub fn fit_standardizer(train: &SurvivalDataset) -> Standardizer {
    Standardizer::fit(train)
}

pub fn apply_standardizer(s: &Standardizer, dataset: &SurvivalDataset) -> Result<SurvivalDataset> {
    s.apply(dataset)
}

/// Random disjoint partition into train/validation/test.
pub fn split_dataset(
    dataset: &SurvivalDataset,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(SurvivalDataset, SurvivalDataset, SurvivalDataset)> {
    let (a, b, c) = fractions;
    if !(a > 0.0 && b > 0.0 && c > 0.0) || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split fractions must be positive and sum to 1, got ({a}, {b}, {c})"
        )));
    }
    let n = dataset.len();
    let n_train = (n as f64 * a).round() as usize;
    let n_val = ((n as f64 * b).round() as usize).min(n - n_train);
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train, rest) = rows.split_at(n_train);
    let (val, test) = rest.split_at(n_val);
    Ok((dataset.subset(train)?, dataset.subset(val)?, dataset.subset(test)?))
}

/// Duration-sorted view giving `R_i = {j : T_j >= T_i}` as a contiguous
/// slice of the sort order.
#[derive(Debug, Clone)]
pub struct RiskSetIndex {
    order: Vec<usize>,
    position: Vec<usize>,
    start: Vec<usize>,
    event_rows: Vec<usize>,
    sorted_durations: Vec<f64>,
}

impl RiskSetIndex {
    pub fn new(durations: &[f64], events: &[bool]) -> Self {
        let n = durations.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| durations[i].total_cmp(&durations[j]).then(i.cmp(&j)));
        let mut position = vec![0; n];
        for (p, &i) in order.iter().enumerate() {
            position[i] = p;
        }
        let sorted_durations: Vec<f64> = order.iter().map(|&i| durations[i]).collect();
        let mut start = vec![0; n];
        let mut first = 0;
        for p in 0..n {
            if p > 0 && sorted_durations[p] != sorted_durations[p - 1] {
                first = p;
            }
            start[order[p]] = first;
        }
        let event_rows = order.iter().copied().filter(|&i| events[i]).collect();
        Self { order, position, start, event_rows, sorted_durations }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Rows sorted by ascending duration (ties by row index).
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn sorted_durations(&self) -> &[f64] {
        &self.sorted_durations
    }

    /// Event rows, in ascending duration order.
    pub fn event_rows(&self) -> &[usize] {
        &self.event_rows
    }

    pub fn position(&self, row: usize) -> usize {
        self.position[row]
    }

    /// First sorted position belonging to the risk set of `row`.
    pub fn risk_start(&self, row: usize) -> usize {
        self.start[row]
    }

    pub fn risk_set_size(&self, row: usize) -> usize {
        self.order.len() - self.start[row]
    }

    pub fn risk_set(&self, row: usize) -> &[usize] {
        &self.order[self.start[row]..]
    }
}

pub fn build_risk_index(dataset: &SurvivalDataset) -> RiskSetIndex {
    RiskSetIndex::new(dataset.durations(), dataset.events())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn ds(t: &[f64], d: &[u8]) -> SurvivalDataset {
        let x = Array2::zeros((t.len(), 1));
        SurvivalDataset::new(x, t.to_vec(), d.iter().map(|&v| v == 1).collect()).unwrap()
    }

    #[test]
    fn load_two_rows() {
        let csv = "duration,event,x0\n1.0,1,0.5\n2.0,0,-0.5\n";
        let d = load_csv(csv.as_bytes()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.n_covariates(), 1);
        assert_eq!(d.durations(), &[1.0, 2.0]);
        assert_eq!(d.events(), &[true, false]);
        assert_eq!(d.covariates(), &array![[0.5], [-0.5]]);
    }

    #[test]
    fn covariates_with_or_without_outcomes() {
        let (names, x) = load_covariates_csv("duration,x0,event,x1\n1,0.5,1,2\n".as_bytes()).unwrap();
        assert_eq!(names, vec!["x0", "x1"]);
        assert_eq!(x, array![[0.5, 2.0]]);
        let (names, x) = load_covariates_csv("a\n1\n2\n".as_bytes()).unwrap();
        assert_eq!(names, vec!["a"]);
        assert_eq!(x.nrows(), 2);
    }

    #[test]
    fn load_rejects_bad_event_with_row() {
        let csv = "duration,event,x0\n1,1,0\n2,0,0\n3,2,0\n";
        let err = load_csv(csv.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::InvalidRow { row: 3, .. }), "{err}");
        assert!(err.to_string().contains("row 3"));
    }

    #[test]
    fn load_rejects_header_only() {
        let err = load_csv("duration,event,x0\n".as_bytes()).unwrap_err();
        assert_eq!(err.to_string(), "empty dataset");
    }

    #[test]
    fn load_rejects_missing_column_and_bad_cells() {
        assert!(matches!(load_csv("time,event\n1,1\n".as_bytes()), Err(Error::MissingColumn(_))));
        let err = load_csv("duration,event,x\n1,1,abc\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::InvalidRow { row: 1, .. }));
        let err = load_csv("duration,event,x\n1,1,0\n-2,1,0\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::InvalidRow { row: 2, .. }));
    }

    #[test]
    fn standardizer_basic() {
        let x = array![[1.0, 5.0], [3.0, 5.0]];
        let d = SurvivalDataset::new(x, vec![1.0, 2.0], vec![true, true]).unwrap();
        let s = fit_standardizer(&d);
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert!((s.sd[0] - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(s.sd[1], 0.0);
        let z = apply_standardizer(&s, &d).unwrap();
        assert!(z.covariates().column(0).sum().abs() < 1e-15);
        assert_eq!(z.covariates().column(1).to_vec(), vec![0.0, 0.0]);

        let test = SurvivalDataset::new(array![[2.0, 1.0]], vec![1.0], vec![false]).unwrap();
        let zt = s.apply(&test).unwrap();
        assert_eq!(zt.covariates()[[0, 0]], 0.0);
        assert_eq!(zt.covariates()[[0, 1]], 0.0);

        let bad = SurvivalDataset::new(array![[1.0]], vec![1.0], vec![true]).unwrap();
        assert!(matches!(s.apply(&bad), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn split_sizes_and_determinism() {
        let d = ds(&(0..10).map(|v| v as f64).collect::<Vec<_>>(), &[1; 10]);
        let (a, b, c) = split_dataset(&d, (0.6, 0.2, 0.2), 7).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (6, 2, 2));
        let mut all: Vec<f64> =
            a.durations().iter().chain(b.durations()).chain(c.durations()).copied().collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, d.durations());
        let (a2, _, _) = split_dataset(&d, (0.6, 0.2, 0.2), 7).unwrap();
        assert_eq!(a, a2);
        assert!(split_dataset(&d, (0.5, 0.5, 0.5), 7).is_err());
    }

    #[test]
    fn risk_sets() {
        let idx = build_risk_index(&ds(&[1.0, 2.0, 3.0], &[1, 1, 1]));
        let sizes: Vec<usize> = idx.event_rows().iter().map(|&i| idx.risk_set_size(i)).collect();
        assert_eq!(sizes, vec![3, 2, 1]);

        let idx = build_risk_index(&ds(&[1.0, 1.0, 2.0], &[1, 1, 1]));
        assert_eq!(idx.risk_set_size(0), 3);
        assert_eq!(idx.risk_set_size(1), 3);

        let idx = build_risk_index(&ds(&[1.0, 2.0], &[0, 1]));
        assert_eq!(idx.event_rows(), &[1]);
        assert_eq!(idx.risk_set_size(1), 1);
        assert!(idx.risk_set(1).contains(&1));
    }
}
