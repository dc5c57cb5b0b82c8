// SPDX-License-Identifier: Apache-2.0

//! Position-space density matrices of the heavy particle along one axis and
//! their evolution under ∂ρ(R₁,R₂)/∂t = −F(R₁−R₂)ρ(R₁,R₂).

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::pairwise_sum;
use crate::vec3::Vec3;

/// ρ(R_i, R_j) on a uniform grid R_i = x_i·axis.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrixGrid {
    axis: Vec3,
    positions: Vec<f64>,
    values: DMatrix<Complex64>,
    time: f64,
}

/// Hermiticity tolerance relative to the largest entry.
const HERMITIAN_TOL: f64 = 1e-12;

impl DensityMatrixGrid {
    /// Validates a uniform grid of at least two points, an N×N matrix,
    /// hermiticity and a real nonnegative diagonal.
    pub fn new(
        axis: Vec3,
        positions: Vec<f64>,
        values: DMatrix<Complex64>,
        time: f64,
    ) -> Result<Self> {
        let axis = axis.unit()?;
        let n = positions.len();
        if n < 2 {
            return Err(Error::invalid("positions", "need at least two grid points"));
        }
        if positions.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("positions", "must be finite"));
        }
        let dx = positions[1] - positions[0];
        if !(dx > 0.0) {
            return Err(Error::invalid("positions", "must be increasing"));
        }
        for w in positions.windows(2) {
            if ((w[1] - w[0]) - dx).abs() > 1e-9 * dx {
                return Err(Error::invalid("positions", "grid must be uniform"));
            }
        }
        if values.nrows() != n || values.ncols() != n {
            return Err(Error::invalid(
                "values",
                format!("expected a {n}x{n} matrix"),
            ));
        }
        if !(time >= 0.0) || !time.is_finite() {
            return Err(Error::invalid("time", "must be finite and nonnegative"));
        }
        let grid = DensityMatrixGrid {
            axis,
            positions,
            values,
            time,
        };
        let scale = grid.max_abs();
        if !scale.is_finite() {
            return Err(Error::invalid("values", "must be finite"));
        }
        if grid.hermiticity_defect() > HERMITIAN_TOL * scale {
            return Err(Error::invalid("values", "matrix is not Hermitian"));
        }
        for i in 0..n {
            let d = grid.values[(i, i)];
            if d.re < 0.0 || d.im.abs() > HERMITIAN_TOL * scale {
                return Err(Error::invalid(
                    "values",
                    "diagonal must be real and nonnegative",
                ));
            }
        }
        Ok(grid)
    }

    /// Pure state ρ_ij = φ_i φ_j*.
    pub fn pure(axis: Vec3, positions: Vec<f64>, psi: &[Complex64]) -> Result<Self> {
        if psi.len() != positions.len() {
            return Err(Error::invalid("psi", "length must match the grid"));
        }
        let n = psi.len();
        let mut m = DMatrix::from_fn(n, n, |i, j| psi[i] * psi[j].conj());
        for i in 0..n {
            m[(i, i)] = Complex64::new(psi[i].norm_sqr(), 0.0);
        }
        DensityMatrixGrid::new(axis, positions, m, 0.0)
    }

    pub fn axis(&self) -> Vec3 {
        self.axis
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn values(&self) -> &DMatrix<Complex64> {
        &self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.positions[1] - self.positions[0]
    }

    /// Riemann sum Σρ_ii·Δx.
    pub fn trace(&self) -> f64 {
        let diag: Vec<f64> = (0..self.len()).map(|i| self.values[(i, i)].re).collect();
        pairwise_sum(&diag) * self.spacing()
    }

    /// max |ρ_ij − ρ_ji*|.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.values[(i, j)] - self.values[(j, i)].conj()).norm());
            }
        }
        worst
    }

    fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Smallest eigenvalue of the operator with kernel ρ, i.e. of ρ·Δx.
    pub fn min_eigenvalue(&self) -> f64 {
        let m = self.values.map(|z| z * self.spacing());
        // Symmetrize away rounding before the Hermitian solver.
        let h = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
        SymmetricEigen::new(h)
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }
}

/// ρ_ij(t) = ρ_ij e^{−F(|x_i − x_j|)t}.
///
/// F is evaluated once per distinct separation kΔx. The diagonal is left
/// untouched; F(0) must vanish to 1e-12 of the largest tabulated rate.
pub fn evolve<F>(grid: &DensityMatrixGrid, rate_fn: F, t: f64) -> Result<DensityMatrixGrid>
where
    F: Fn(f64) -> Result<f64>,
{
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::invalid("t", "must be finite and nonnegative"));
    }
    let n = grid.len();
    let dx = grid.spacing();
    let table: Vec<f64> = (0..n)
        .map(|k| rate_fn(k as f64 * dx))
        .collect::<Result<_>>()?;
    if table.iter().any(|f| !f.is_finite()) {
        return Err(Error::Contract(
            "rate function returned a non-finite value".into(),
        ));
    }
    let f_max = table.iter().fold(0.0f64, |m, f| m.max(f.abs()));
    if table[0].abs() > 1e-12 * f_max {
        return Err(Error::Contract(format!(
            "rate at zero separation is {} instead of 0",
            table[0]
        )));
    }
    let decay: Vec<f64> = std::iter::once(1.0)
        .chain(table[1..].iter().map(|f| (-f * t).exp()))
        .collect();
    let cols: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            (0..n)
                .map(|i| grid.values[(i, j)] * decay[i.abs_diff(j)])
                .collect()
        })
        .collect();
    let values = DMatrix::from_fn(n, n, |i, j| cols[j][i]);
    Ok(DensityMatrixGrid {
        axis: grid.axis,
        positions: grid.positions.clone(),
        values,
        time: grid.time + t,
    })
}

/// Outcome of [`coherence_length`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherenceLength {
    pub length: f64,
    /// False when the envelope never dropped to the threshold; `length` is
    /// then the grid extent.
    pub reached: bool,
}

/// Smallest separation d = kΔx with max_{|i−j|=k} |ρ_ij|/√(ρ_iiρ_jj) ≤ threshold.
/// Pairs with a vanishing diagonal entry are skipped.
pub fn coherence_length(grid: &DensityMatrixGrid, threshold: f64) -> Result<CoherenceLength> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::invalid("threshold", "must lie in (0, 1]"));
    }
    if !(grid.trace() > 0.0) {
        return Err(Error::invalid("grid", "density matrix has zero trace"));
    }
    let n = grid.len();
    let diag: Vec<f64> = (0..n).map(|i| grid.values[(i, i)].re).collect();
    for k in 0..n {
        let mut envelope: f64 = 0.0;
        let mut any = false;
        for i in 0..n - k {
            let norm = (diag[i] * diag[i + k]).sqrt();
            if norm > 0.0 {
                any = true;
                envelope = envelope.max(grid.values[(i, i + k)].norm() / norm);
            }
        }
        if any && envelope <= threshold {
            return Ok(CoherenceLength {
                length: k as f64 * grid.spacing(),
                reached: true,
            });
        }
    }
    Ok(CoherenceLength {
        length: grid.positions[n - 1] - grid.positions[0],
        reached: false,
    })
}
