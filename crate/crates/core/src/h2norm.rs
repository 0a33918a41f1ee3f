//! H2 norms through first-order linearization and a Lyapunov solve.
//!
//! `||F||^2 = trace(E1^T X E1)` with `A^T X + X A = -H1^T H1`.

use std::cmp::Ordering;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{DenseMatrix, Lyapunov};
use crate::model::{GainVector, SecondOrderSystem};

/// Default largest `n` accepted by the full-order oracle.
pub const DEFAULT_ORACLE_CAP: usize = 600;

/// `x' = A x + E1 w`, `z = H1 x`.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrderRealization {
    pub a: DenseMatrix,
    pub e1: DenseMatrix,
    pub h1: DenseMatrix,
}

/// An H2 norm, or the unstable sentinel (`value = +inf`, `stable = false`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct H2Value {
    pub value: f64,
    pub stable: bool,
}

impl H2Value {
    pub const UNSTABLE: H2Value = H2Value {
        value: f64::INFINITY,
        stable: false,
    };

    /// Order used by the optimizer: the sentinel is worse than any finite
    /// value.
    pub fn total_cmp(&self, other: &H2Value) -> Ordering {
        self.value.total_cmp(&other.value)
    }
}

/// Block linearization `A = [[0, I], [-M^{-1}K, -M^{-1}C]]`,
/// `E1 = [0; M^{-1}E]`, `H1 = [H, 0]`.
pub fn linearize(
    m: &DenseMatrix,
    c: &DenseMatrix,
    k: &DenseMatrix,
    e: &DenseMatrix,
    h: &DenseMatrix,
) -> Result<FirstOrderRealization> {
    let d = m.nrows();
    if m.ncols() != d
        || c.shape() != (d, d)
        || k.shape() != (d, d)
        || e.nrows() != d
        || h.ncols() != d
    {
        return Err(Error::InvalidDimension(format!(
            "second-order blocks do not agree on dimension {d}"
        )));
    }
    let lu = m.clone().lu();
    let minv_k = lu
        .solve(k)
        .ok_or_else(|| Error::Singular("mass matrix".into()))?;
    let minv_c = lu
        .solve(c)
        .ok_or_else(|| Error::Singular("mass matrix".into()))?;
    let minv_e = lu
        .solve(e)
        .ok_or_else(|| Error::Singular("mass matrix".into()))?;

    let mut a = DMatrix::zeros(2 * d, 2 * d);
    a.view_mut((0, d), (d, d)).fill_with_identity();
    a.view_mut((d, 0), (d, d)).copy_from(&(-minv_k));
    a.view_mut((d, d), (d, d)).copy_from(&(-minv_c));
    let mut e1 = DMatrix::zeros(2 * d, e.ncols());
    e1.view_mut((d, 0), (d, e.ncols())).copy_from(&minv_e);
    let mut h1 = DMatrix::zeros(h.nrows(), 2 * d);
    h1.view_mut((0, 0), (h.nrows(), d)).copy_from(h);
    Ok(FirstOrderRealization { a, e1, h1 })
}

/// H2 norm of a first-order realization. Non-Hurwitz `A` gives the
/// unstable sentinel.
pub fn h2_norm(fo: &FirstOrderRealization) -> Result<H2Value> {
    let lyap = match Lyapunov::new(&fo.a) {
        Ok(l) => l,
        Err(Error::Unstable { .. }) => return Ok(H2Value::UNSTABLE),
        Err(e) => return Err(e),
    };
    let trace = lyap.trace_factored(&fo.h1, &fo.e1)?;
    Ok(H2Value {
        value: trace.max(0.0).sqrt(),
        stable: true,
    })
}

/// Dense full-order H2 evaluation, meant as a reference at desk scale.
///
/// The internal damping is formed once at construction.
#[derive(Debug, Clone)]
pub struct FullOrderOracle<'a> {
    sys: &'a SecondOrderSystem,
    c_int: DenseMatrix,
    m: DenseMatrix,
    k: DenseMatrix,
}

impl<'a> FullOrderOracle<'a> {
    pub fn new(sys: &'a SecondOrderSystem) -> Result<Self> {
        Self::with_cap(sys, DEFAULT_ORACLE_CAP)
    }

    /// Refuses systems with `n > cap`.
    pub fn with_cap(sys: &'a SecondOrderSystem, cap: usize) -> Result<Self> {
        if sys.n() > cap {
            return Err(Error::OracleCapExceeded { n: sys.n(), cap });
        }
        Ok(Self {
            sys,
            c_int: sys.internal_damping()?,
            m: DMatrix::from_diagonal(sys.mass()),
            k: sys.stiffness().to_dense(),
        })
    }

    /// Gains may lie outside the bounds (and be negative) here; the result
    /// then simply reports instability if it occurs.
    pub fn evaluate(&self, g: &GainVector) -> Result<H2Value> {
        let c = &self.c_int + self.sys.external_damping(g)?;
        let fo = linearize(
            &self.m,
            &c,
            &self.k,
            self.sys.input_map(),
            self.sys.output_map(),
        )?;
        h2_norm(&fo)
    }
}

/// One-shot full-order H2 norm with the default size cap.
pub fn h2_full_oracle(sys: &SecondOrderSystem, g: &GainVector) -> Result<H2Value> {
    FullOrderOracle::new(sys)?.evaluate(g)
}
