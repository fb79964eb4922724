use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::grid::SH_COEFFS;

/// Mean-centered linear projection of SH vectors onto their leading
/// principal directions.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel {
    pub mean: [f64; SH_COEFFS],
    /// Orthonormal rows, by descending explained variance.
    pub basis: Vec<[f64; SH_COEFFS]>,
    /// Eigenvalue of each basis row.
    pub variances: Vec<f64>,
}

/// Fits a `k`-component PCA. Each basis row is oriented so that its
/// largest-magnitude entry is non-negative.
pub fn pca_fit(samples: &[[f32; SH_COEFFS]], k: usize) -> Result<PcaModel> {
    if k == 0 || k > SH_COEFFS {
        return Err(Error::invalid(format!("PCA rank must be in 1..=27, got {k}")));
    }
    if samples.len() < k {
        return Err(Error::invalid(format!(
            "PCA with {k} components needs at least {k} samples, got {}",
            samples.len()
        )));
    }
    let n = samples.len() as f64;
    let mut mean = [0f64; SH_COEFFS];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += *v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);

    let mut cov = DMatrix::<f64>::zeros(SH_COEFFS, SH_COEFFS);
    let mut centered = [0f64; SH_COEFFS];
    for s in samples {
        for i in 0..SH_COEFFS {
            centered[i] = s[i] as f64 - mean[i];
        }
        for i in 0..SH_COEFFS {
            let ci = centered[i];
            if ci == 0.0 {
                continue;
            }
            for j in i..SH_COEFFS {
                cov[(i, j)] += ci * centered[j];
            }
        }
    }
    for i in 0..SH_COEFFS {
        for j in i..SH_COEFFS {
            let v = cov[(i, j)] / n;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..SH_COEFFS).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut basis = Vec::with_capacity(k);
    let mut variances = Vec::with_capacity(k);
    for &col in order.iter().take(k) {
        let mut row = [0f64; SH_COEFFS];
        for (i, r) in row.iter_mut().enumerate() {
            *r = eig.eigenvectors[(i, col)];
        }
        let pivot = row
            .iter()
            .copied()
            .fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
        if pivot < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
        }
        basis.push(row);
        variances.push(eig.eigenvalues[col].max(0.0));
    }
    Ok(PcaModel {
        mean,
        basis,
        variances,
    })
}

impl PcaModel {
    pub fn components(&self) -> usize {
        self.basis.len()
    }

    /// `basis * (sh - mean)`.
    pub fn project(&self, sh: &[f32; SH_COEFFS]) -> Vec<f64> {
        self.basis
            .iter()
            .map(|row| {
                row.iter()
                    .zip(sh.iter().zip(&self.mean))
                    .map(|(b, (v, m))| b * (*v as f64 - m))
                    .sum()
            })
            .collect()
    }

    pub fn back_project(&self, coeffs: &[f64]) -> [f64; SH_COEFFS] {
        let mut out = self.mean;
        for (row, c) in self.basis.iter().zip(coeffs) {
            for (o, b) in out.iter_mut().zip(row) {
                *o += c * b;
            }
        }
        out
    }
}

/// Free-function form of [`PcaModel::project`].
pub fn pca_project(model: &PcaModel, sh: &[f32; SH_COEFFS]) -> Vec<f64> {
    model.project(sh)
}
