//! Full-order second-order vibrational systems
//! `M q'' + (C_int + B G(g) B^T) q' + K q = E w`, `z = H q`.
//!
//! `M` is diagonal, `K` sparse symmetric positive definite, and the internal
//! damping is a fixed fraction `alpha_c` of critical damping. The external
//! dampers live in the columns of `B`; several columns may share one gain
//! (see [`SecondOrderSystem::gain_map`]).

mod benchmarks;
pub mod io;
mod sparse;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use benchmarks::{
    build_example1, build_example2, example1_grid, example2_grid, scale_index, EXAMPLE1_PAPER_N,
    EXAMPLE2_PAPER_D,
};
pub use io::{read_model, write_model};
pub use sparse::SparseMatrix;

use crate::error::{Error, Result};
use crate::kernels::{sym_eig, DenseMatrix};

/// Feasible interval `[lower, upper]` of one gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainBounds {
    pub lower: f64,
    pub upper: f64,
}

impl GainBounds {
    pub const NONNEGATIVE: GainBounds = GainBounds {
        lower: 0.0,
        upper: f64::INFINITY,
    };

    pub fn project(&self, g: f64) -> f64 {
        g.clamp(self.lower, self.upper)
    }

    pub fn contains(&self, g: f64) -> bool {
        g >= self.lower && g <= self.upper
    }
}

/// Damper gains (viscosities), one per independent gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GainVector(Vec<f64>);

impl GainVector {
    /// Validated constructor: every gain must be finite and non-negative.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
            return Err(Error::InvalidGain(format!(
                "gain {bad} is not a finite non-negative value"
            )));
        }
        Ok(Self(values))
    }

    /// Unvalidated gains, for probing outside the feasible set (dense paths
    /// only; the modal SMW solve rejects negative gains).
    pub fn unchecked(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(p: usize) -> Self {
        Self(vec![0.0; p])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&g| g == 0.0)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl From<GainVector> for Vec<f64> {
    fn from(g: GainVector) -> Self {
        g.0
    }
}

/// Expand independent gains into per-damper-column gains.
pub(crate) fn expand_gains(gain_map: &[usize], g: &GainVector) -> Result<Vec<f64>> {
    let p = gain_map.iter().map(|&i| i + 1).max().unwrap_or(0);
    if g.len() != p {
        return Err(Error::InvalidGain(format!(
            "expected {p} gains, got {}",
            g.len()
        )));
    }
    Ok(gain_map.iter().map(|&i| g.as_slice()[i]).collect())
}

/// Full-order model data.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderSystem {
    mass: DVector<f64>,
    stiffness: SparseMatrix,
    alpha_c: f64,
    damper_geometry: SparseMatrix,
    gain_map: Vec<usize>,
    gain_bounds: Vec<GainBounds>,
    input_map: DenseMatrix,
    output_map: DenseMatrix,
}

impl SecondOrderSystem {
    /// Assemble and validate a system. `gain_map[c]` names the gain that
    /// drives damper column `c`; gains are numbered densely from zero and
    /// `gain_bounds` has one entry per gain.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        mass: DVector<f64>,
        stiffness: SparseMatrix,
        alpha_c: f64,
        damper_geometry: SparseMatrix,
        gain_map: Vec<usize>,
        gain_bounds: Vec<GainBounds>,
        input_map: DenseMatrix,
        output_map: DenseMatrix,
    ) -> Result<Self> {
        let n = mass.len();
        if n == 0 {
            return Err(Error::InvalidDimension(
                "system has no degrees of freedom".into(),
            ));
        }
        if let Some(m) = mass.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
            return Err(Error::InvalidInput(format!(
                "mass entry {m} is not strictly positive"
            )));
        }
        if stiffness.rows() != n || stiffness.cols() != n {
            return Err(Error::InvalidDimension(format!(
                "stiffness is {}x{}, expected {n}x{n}",
                stiffness.rows(),
                stiffness.cols()
            )));
        }
        let asym = stiffness.max_asymmetry();
        if asym > 1e-12 * stiffness.max_abs() {
            return Err(Error::NotSymmetric {
                asymmetry: asym,
                norm: stiffness.max_abs(),
            });
        }
        if !(alpha_c > 0.0 && alpha_c < 1.0) {
            return Err(Error::InvalidInput(format!(
                "alpha_c = {alpha_c} is outside (0, 1)"
            )));
        }
        if damper_geometry.rows() != n {
            return Err(Error::InvalidDimension(format!(
                "damper geometry has {} rows, expected {n}",
                damper_geometry.rows()
            )));
        }
        if gain_map.len() != damper_geometry.cols() {
            return Err(Error::InvalidDimension(format!(
                "gain map covers {} damper columns, geometry has {}",
                gain_map.len(),
                damper_geometry.cols()
            )));
        }
        let p = gain_map.iter().map(|&i| i + 1).max().unwrap_or(0);
        if (0..p).any(|i| !gain_map.contains(&i)) {
            return Err(Error::InvalidInput("gain map skips a gain index".into()));
        }
        if gain_bounds.len() != p {
            return Err(Error::InvalidDimension(format!(
                "{} gain bounds for {p} gains",
                gain_bounds.len()
            )));
        }
        for b in &gain_bounds {
            if !(b.lower >= 0.0 && b.lower <= b.upper) {
                return Err(Error::InvalidInput(format!(
                    "gain bounds [{}, {}] are not 0 <= lower <= upper",
                    b.lower, b.upper
                )));
            }
        }
        if input_map.nrows() != n || output_map.ncols() != n {
            return Err(Error::InvalidDimension(format!(
                "ports are E: {}x{}, H: {}x{} for n = {n}",
                input_map.nrows(),
                input_map.ncols(),
                output_map.nrows(),
                output_map.ncols()
            )));
        }
        Ok(Self {
            mass,
            stiffness,
            alpha_c,
            damper_geometry,
            gain_map,
            gain_bounds,
            input_map,
            output_map,
        })
    }

    pub fn n(&self) -> usize {
        self.mass.len()
    }

    /// Number of independent gains.
    pub fn num_gains(&self) -> usize {
        self.gain_bounds.len()
    }

    /// Number of damper columns in `B`.
    pub fn num_dampers(&self) -> usize {
        self.damper_geometry.cols()
    }

    pub fn mass(&self) -> &DVector<f64> {
        &self.mass
    }

    pub fn stiffness(&self) -> &SparseMatrix {
        &self.stiffness
    }

    pub fn alpha_c(&self) -> f64 {
        self.alpha_c
    }

    pub fn damper_geometry(&self) -> &SparseMatrix {
        &self.damper_geometry
    }

    pub fn gain_map(&self) -> &[usize] {
        &self.gain_map
    }

    pub fn gain_bounds(&self) -> &[GainBounds] {
        &self.gain_bounds
    }

    pub fn input_map(&self) -> &DenseMatrix {
        &self.input_map
    }

    pub fn output_map(&self) -> &DenseMatrix {
        &self.output_map
    }

    /// Per-column damper gains `diag(G(g))`.
    pub fn damper_gains(&self, g: &GainVector) -> Result<Vec<f64>> {
        expand_gains(&self.gain_map, g)
    }

    pub fn check_gains(&self, g: &GainVector) -> Result<()> {
        if g.len() != self.num_gains() {
            return Err(Error::InvalidGain(format!(
                "expected {} gains, got {}",
                self.num_gains(),
                g.len()
            )));
        }
        for (gi, b) in g.as_slice().iter().zip(&self.gain_bounds) {
            if !b.contains(*gi) {
                return Err(Error::InvalidGain(format!(
                    "gain {gi} outside [{}, {}]",
                    b.lower, b.upper
                )));
            }
        }
        Ok(())
    }

    /// `M^{-1/2} K M^{-1/2}` as a dense symmetric matrix.
    pub fn scaled_stiffness(&self) -> DenseMatrix {
        let n = self.n();
        let inv_sqrt: Vec<f64> = self.mass.iter().map(|m| 1.0 / m.sqrt()).collect();
        let mut out = DMatrix::zeros(n, n);
        for &(i, j, v) in self.stiffness.entries() {
            out[(i, j)] = inv_sqrt[i] * v * inv_sqrt[j];
        }
        out
    }

    /// Smallest eigenvalue of `M^{-1/2} K M^{-1/2}`; positive iff `K` is
    /// positive definite.
    pub fn min_scaled_stiffness_eigenvalue(&self) -> Result<f64> {
        let e = sym_eig(&self.scaled_stiffness())?;
        Ok(e.values[0])
    }

    /// Dense internal damping
    /// `C_int = 2 alpha_c M^{1/2} (M^{-1/2} K M^{-1/2})^{1/2} M^{1/2}`.
    pub fn internal_damping(&self) -> Result<DenseMatrix> {
        let e = sym_eig(&self.scaled_stiffness())?;
        if e.values[0] <= 0.0 {
            return Err(Error::NotPositiveDefinite(format!(
                "stiffness has scaled eigenvalue {:.3e}",
                e.values[0]
            )));
        }
        let mut scaled = e.vectors.clone();
        for (j, lambda) in e.values.iter().enumerate() {
            scaled.column_mut(j).scale_mut(lambda.sqrt());
        }
        let root = scaled * e.vectors.transpose();
        let sqrt_m: Vec<f64> = self.mass.iter().map(|m| m.sqrt()).collect();
        let n = self.n();
        let mut c = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..n {
                c[(i, j)] = 2.0 * self.alpha_c * sqrt_m[i] * root[(i, j)] * sqrt_m[j];
            }
        }
        Ok((&c + c.transpose()) * 0.5)
    }

    /// Dense external damping `B G(g) B^T`.
    pub fn external_damping(&self, g: &GainVector) -> Result<DenseMatrix> {
        let gains = self.damper_gains(g)?;
        let n = self.n();
        let mut c = DMatrix::zeros(n, n);
        let entries = self.damper_geometry.entries();
        for &(i, ci, vi) in entries {
            for &(j, cj, vj) in entries {
                if ci == cj {
                    c[(i, j)] += vi * gains[ci] * vj;
                }
            }
        }
        Ok(c)
    }
}

/// Full damping matrix `C(g) = C_int + B G(g) B^T`. Dense; meant for the
/// oracle path at desk-scale `n`.
pub fn damping_matrix(sys: &SecondOrderSystem, g: &GainVector) -> Result<DenseMatrix> {
    Ok(sys.internal_damping()? + sys.external_damping(g)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn scalar_system(m: f64, k: f64, alpha_c: f64) -> SecondOrderSystem {
        SecondOrderSystem::new(
            DVector::from_element(1, m),
            SparseMatrix::from_triplets(1, 1, [(0, 0, k)]),
            alpha_c,
            SparseMatrix::from_triplets(1, 1, [(0, 0, 1.0)]),
            vec![0],
            vec![GainBounds::NONNEGATIVE],
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap()
    }

    #[test]
    fn scalar_damping_matrix() {
        let sys = scalar_system(1.0, 4.0, 0.1);
        let c = damping_matrix(&sys, &GainVector::new(vec![3.0]).unwrap()).unwrap();
        assert_relative_eq!(c[(0, 0)], 3.4, epsilon = 1e-14);
    }

    #[test]
    fn zero_gain_is_internal_only() {
        let sys = build_example1(40, 0.005, 5, 20).unwrap();
        let c = damping_matrix(&sys, &GainVector::zeros(2)).unwrap();
        let c_int = sys.internal_damping().unwrap();
        assert_eq!(c, c_int);
    }

    #[test]
    fn rejects_bad_gains_and_masses() {
        assert!(GainVector::new(vec![1.0, -1.0]).is_err());
        assert!(GainVector::new(vec![f64::NAN]).is_err());
        let bad = SecondOrderSystem::new(
            DVector::from_element(1, 0.0),
            SparseMatrix::from_triplets(1, 1, [(0, 0, 1.0)]),
            0.1,
            SparseMatrix::from_triplets(1, 1, [(0, 0, 1.0)]),
            vec![0],
            vec![GainBounds::NONNEGATIVE],
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
        );
        assert!(bad.is_err());
    }

    #[test]
    fn rejects_inverted_bounds() {
        let bad = SecondOrderSystem::new(
            DVector::from_element(1, 1.0),
            SparseMatrix::from_triplets(1, 1, [(0, 0, 1.0)]),
            0.1,
            SparseMatrix::from_triplets(1, 1, [(0, 0, 1.0)]),
            vec![0],
            vec![GainBounds {
                lower: 2.0,
                upper: 1.0,
            }],
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
        );
        assert!(bad.is_err());
    }
}
