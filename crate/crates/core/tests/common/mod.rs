//! Shared independent oracles for integration tests. Everything here is
//! deliberately implemented without touching the library's solver/fit code
//! paths.

#![allow(dead_code)]

/// Alternate row/column scaling of a dense positive matrix toward the given
/// row and column sum targets. One `row_scale`/`col_scale` pair corresponds
/// to one solver sweep.
pub struct SinkhornOracle {
    pub matrix: Vec<Vec<f64>>,
    pub row_target: f64,
    pub col_target: f64,
}

impl SinkhornOracle {
    pub fn new(matrix: Vec<Vec<f64>>, row_target: f64, col_target: f64) -> Self {
        SinkhornOracle {
            matrix,
            row_target,
            col_target,
        }
    }

    pub fn row_scale(&mut self) {
        for row in &mut self.matrix {
            let sum: f64 = row.iter().sum();
            if sum > 0.0 {
                for v in row.iter_mut() {
                    *v *= self.row_target / sum;
                }
            }
        }
    }

    pub fn col_scale(&mut self) {
        let cols = self.matrix.first().map_or(0, Vec::len);
        for j in 0..cols {
            let sum: f64 = self.matrix.iter().map(|r| r[j]).sum();
            if sum > 0.0 {
                for row in self.matrix.iter_mut() {
                    row[j] *= self.col_target / sum;
                }
            }
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.matrix.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let cols = self.matrix.first().map_or(0, Vec::len);
        (0..cols)
            .map(|j| self.matrix.iter().map(|r| r[j]).sum())
            .collect()
    }
}

pub fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for (ra, rb) in a.iter().zip(b) {
        for (va, vb) in ra.iter().zip(rb) {
            worst = worst.max((va - vb).abs());
        }
    }
    worst
}

/// Kendall tau-b rank correlation (tie-aware).
pub fn kendall_tau_b(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let (mut concordant, mut discordant) = (0i64, 0i64);
    let (mut ties_a, mut ties_b) = (0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let da = a[i] - a[j];
            let db = b[i] - b[j];
            if da == 0.0 && db == 0.0 {
                continue;
            } else if da == 0.0 {
                ties_a += 1;
            } else if db == 0.0 {
                ties_b += 1;
            } else if (da > 0.0) == (db > 0.0) {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    let n0 = concordant + discordant;
    let denom = (((n0 + ties_a) as f64) * ((n0 + ties_b) as f64)).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        (concordant - discordant) as f64 / denom
    }
}

/// Mean of a slice.
pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Standard error of the mean.
pub fn stderr(values: &[f64]) -> f64 {
    let m = mean(values);
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64;
    (var / values.len() as f64).sqrt()
}

/// Relative L2 distance between two vectors.
pub fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm
}

/// L1-normalize a vector.
pub fn normalized(v: &[f64]) -> Vec<f64> {
    let sum: f64 = v.iter().sum();
    v.iter().map(|x| x / sum).collect()
}
