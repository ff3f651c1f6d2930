//! K-means segmentation of predicted survival curves.

use std::collections::BTreeMap;
use std::io::Write;

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curves::SurvivalCurves;
use crate::dataset::fmt_f64;
use crate::error::{Error, Result};

/// Curves evaluated on a shared equidistant grid, one row per individual.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveMatrix {
    pub grid: Vec<f64>,
    pub rows: Array2<f64>,
}

/// Evaluates every curve on `m + 1` equidistant points over `[0, span]`.
/// Points past a curve's last time reuse its last value.
pub fn curves_to_matrix(curves: &SurvivalCurves, m: usize, span: f64) -> Result<CurveMatrix> {
    if m == 0 || !(span > 0.0) || !span.is_finite() {
        return Err(Error::InvalidArgument(format!("need m >= 1 and a positive span, got m={m}, span={span}")));
    }
    let grid: Vec<f64> = (0..=m).map(|j| span * j as f64 / m as f64).collect();
    if let Some(&last) = curves.times().last() {
        if last < span {
            log::warn!("curves end at {last} but the grid spans {span}; extending by the last value");
        }
    }
    let on = curves.on_grid(&grid)?;
    Ok(CurveMatrix { grid, rows: on.values().t().to_owned() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// `k x n_points`.
    pub centers: Array2<f64>,
    pub assignments: Vec<usize>,
    pub proportions: Vec<f64>,
    /// Inertia after each Lloyd iteration.
    pub inertia: Vec<f64>,
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index from weights proportional to `w`; uniform when all weights vanish.
fn weighted_pick(w: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return rng.random_range(0..w.len());
    }
    let mut u = rng.random::<f64>() * total;
    for (i, &v) in w.iter().enumerate() {
        if u < v {
            return i;
        }
        u -= v;
    }
    w.iter().rposition(|&v| v > 0.0).unwrap_or(0)
}

fn plus_plus_seed(x: &Array2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = x.nrows();
    let mut centers = Array2::zeros((k, x.ncols()));
    let first = rng.random_range(0..n);
    centers.row_mut(0).assign(&x.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), centers.row(0))).collect();
    for c in 1..k {
        let pick = weighted_pick(&d2, rng);
        centers.row_mut(c).assign(&x.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.row(i), centers.row(c)));
        }
    }
    centers
}

/// Nearest center per row (lowest index on ties) and the total inertia.
fn assign(x: &Array2<f64>, centers: &Array2<f64>) -> (Vec<usize>, Vec<f64>) {
    let mut labels = Vec::with_capacity(x.nrows());
    let mut dists = Vec::with_capacity(x.nrows());
    for row in x.rows() {
        let (best, d) = centers
            .rows()
            .into_iter()
            .map(|c| sq_dist(row, c))
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (j, d)| if d < acc.1 { (j, d) } else { acc });
        labels.push(best);
        dists.push(d);
    }
    (labels, dists)
}

/// Lloyd's algorithm with k-means++ seeding and Euclidean distance. An
/// emptied cluster is re-seeded at the row farthest from its center.
pub fn kmeans_curves(matrix: &CurveMatrix, k: usize, seed: u64, max_iter: usize) -> Result<KMeansResult> {
    let x = &matrix.rows;
    let n = x.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k must be in 1..={n}, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = plus_plus_seed(x, k, &mut rng);
    let (mut labels, mut dists) = assign(x, &centers);
    let mut inertia = vec![dists.iter().sum::<f64>()];
    for _ in 0..max_iter {
        let mut sums = Array2::<f64>::zeros(centers.raw_dim());
        let mut counts = vec![0usize; k];
        for (row, &l) in x.rows().into_iter().zip(&labels) {
            let mut s = sums.row_mut(l);
            s += &row;
            counts[l] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                let mean: Array1<f64> = &sums.row(c) / counts[c] as f64;
                centers.row_mut(c).assign(&mean);
            } else {
                let far = dists
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc })
                    .0;
                log::debug!("cluster {c} emptied; re-seeding at row {far}");
                centers.row_mut(c).assign(&x.row(far));
                dists[far] = 0.0;
            }
        }
        let (new_labels, new_dists) = assign(x, &centers);
        let changed = new_labels != labels;
        labels = new_labels;
        dists = new_dists;
        inertia.push(dists.iter().sum());
        if !changed {
            break;
        }
    }
    let mut counts = vec![0usize; k];
    for &l in &labels {
        counts[l] += 1;
    }
    let proportions = counts.iter().map(|&c| c as f64 / n as f64).collect();
    Ok(KMeansResult { centers, assignments: labels, proportions, inertia })
}

impl KMeansResult {
    /// CSV: `time,cluster_0,...`, one line per grid point.
    pub fn write_centers_csv<W: Write>(&self, grid: &[f64], mut sink: W) -> Result<()> {
        let mut header = String::from("time");
        for c in 0..self.centers.nrows() {
            header.push_str(&format!(",cluster_{c}"));
        }
        writeln!(sink, "{header}")?;
        for (j, &t) in grid.iter().enumerate() {
            let mut line = fmt_f64(t);
            for c in 0..self.centers.nrows() {
                line.push(',');
                line.push_str(&fmt_f64(self.centers[[c, j]]));
            }
            writeln!(sink, "{line}")?;
        }
        Ok(())
    }

    pub fn proportions_summary(&self) -> ClusterSummary {
        ClusterSummary {
            proportions: self.proportions.iter().enumerate().map(|(c, &p)| (c.to_string(), p)).collect(),
            percent: self.proportions.iter().enumerate().map(|(c, &p)| (c.to_string(), (p * 100.0).round() as u32)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub proportions: BTreeMap<String, f64>,
    /// Proportions as whole percentages.
    pub percent: BTreeMap<String, u32>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn planted() -> CurveMatrix {
        let grid: Vec<f64> = (0..=50).map(|j| j as f64).collect();
        let rows = Array2::from_shape_fn((200, 51), |(i, j)| {
            let rate = if i % 2 == 0 { 0.01 } else { 0.2 };
            (-rate * grid[j]).exp()
        });
        CurveMatrix { grid, rows }
    }

    #[test]
    fn matrix_uses_step_lookup() {
        let curves = SurvivalCurves::new(vec![0.0, 1.0, 3.0], array![[1.0, 1.0], [0.8, 1.0], [0.5, 1.0]]).unwrap();
        let m = curves_to_matrix(&curves, 1, 3.0).unwrap();
        assert_eq!(m.rows, array![[1.0, 0.5], [1.0, 1.0]]);
        let m = curves_to_matrix(&curves, 3, 3.0).unwrap();
        assert_eq!(m.rows.row(0).to_vec(), vec![1.0, 0.8, 0.8, 0.5]);
        assert_eq!(curves_to_matrix(&curves, 4, 6.0).unwrap().rows.row(0)[4], 0.5);
    }

    #[test]
    fn single_cluster_is_mean() {
        let m = planted();
        let r = kmeans_curves(&m, 1, 3, 50).unwrap();
        let mean = m.rows.mean_axis(ndarray::Axis(0)).unwrap();
        for (a, b) in r.centers.row(0).iter().zip(&mean) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn k_equals_n_has_zero_inertia() {
        let m = CurveMatrix { grid: vec![0.0, 1.0], rows: array![[1.0, 0.2], [1.0, 0.5], [1.0, 0.9]] };
        let r = kmeans_curves(&m, 3, 0, 10).unwrap();
        assert_eq!(*r.inertia.last().unwrap(), 0.0);
        assert!(kmeans_curves(&m, 4, 0, 10).is_err());
    }

    #[test]
    fn planted_split_is_recovered() {
        let r = kmeans_curves(&planted(), 2, 11, 100).unwrap();
        let a = r.assignments[0];
        for (i, &l) in r.assignments.iter().enumerate() {
            assert_eq!(l == a, i % 2 == 0);
        }
        assert_eq!(r.proportions, vec![0.5, 0.5]);
        for w in r.inertia.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        let s = r.proportions_summary();
        assert_eq!(s.percent["0"], 50);
    }

    #[test]
    fn centers_csv_layout() {
        let m = CurveMatrix { grid: vec![0.0, 1.0], rows: array![[1.0, 0.2], [1.0, 0.5]] };
        let r = kmeans_curves(&m, 2, 0, 10).unwrap();
        let mut buf = Vec::new();
        r.write_centers_csv(&m.grid, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("time,cluster_0,cluster_1\n"));
        assert_eq!(text.lines().count(), 3);
    }
}
