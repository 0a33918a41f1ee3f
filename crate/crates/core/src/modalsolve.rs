//! Modal coordinates and the diagonal-plus-low-rank shifted solve.
//!
//! With `Phi = M^{-1/2} U`, where `U` diagonalizes `M^{-1/2} K M^{-1/2}`,
//! the undamped and internally damped parts become diagonal:
//! `Phi^T M Phi = I`, `Phi^T K Phi = Omega^2`, `Phi^T C_int Phi = 2 alpha_c Omega`.
//! Only the external dampers `B_m G(g) B_m^T` couple modes, and they have
//! rank at most `p`, so every shifted solve costs `O(n p^2 + p^3)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::kernels::{complexify, solve_complex, sym_eig, ComplexMatrix, DenseMatrix};
use crate::model::{expand_gains, GainBounds, GainVector, SecondOrderSystem};

/// Largest `n` for which the dense modal matrix is kept.
pub const DEFAULT_PHI_CAP: usize = 5000;
/// Condition number of the inner correction matrix that triggers a retry.
pub const INNER_CONDITION_LIMIT: f64 = 1e14;
/// Relative shift perturbation applied on the retry.
pub const SHIFT_PERTURBATION: f64 = 1e-10;

/// A system in modal coordinates.
#[derive(Debug, Clone)]
pub struct ModalSystem {
    omega: DVector<f64>,
    alpha_c: f64,
    b_m: DenseMatrix,
    e_m: DenseMatrix,
    h_m: DenseMatrix,
    phi: Option<DenseMatrix>,
    gain_map: Vec<usize>,
    gain_bounds: Vec<GainBounds>,
}

impl ModalSystem {
    /// Assemble directly from modal data. `alpha_c` may be zero here, which
    /// the physical constructor does not allow.
    #[allow(clippy::too_many_arguments)]
    pub fn from_modal_data(
        omega: DVector<f64>,
        alpha_c: f64,
        b_m: DenseMatrix,
        e_m: DenseMatrix,
        h_m: DenseMatrix,
        gain_map: Vec<usize>,
        gain_bounds: Vec<GainBounds>,
    ) -> Result<Self> {
        let n = omega.len();
        if omega.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidInput(
                "modal frequencies must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&alpha_c) {
            return Err(Error::InvalidInput(format!(
                "alpha_c = {alpha_c} is outside [0, 1)"
            )));
        }
        if b_m.nrows() != n || e_m.nrows() != n || h_m.ncols() != n {
            return Err(Error::InvalidDimension(
                "modal port matrices do not match omega".into(),
            ));
        }
        if gain_map.len() != b_m.ncols() {
            return Err(Error::InvalidDimension(
                "gain map does not cover the damper columns".into(),
            ));
        }
        Ok(Self {
            omega,
            alpha_c,
            b_m,
            e_m,
            h_m,
            phi: None,
            gain_map,
            gain_bounds,
        })
    }

    pub fn n(&self) -> usize {
        self.omega.len()
    }

    pub fn omega(&self) -> &DVector<f64> {
        &self.omega
    }

    pub fn alpha_c(&self) -> f64 {
        self.alpha_c
    }

    /// `Phi^T B`.
    pub fn b_m(&self) -> &DenseMatrix {
        &self.b_m
    }

    /// `Phi^T E`.
    pub fn e_m(&self) -> &DenseMatrix {
        &self.e_m
    }

    /// `H Phi`.
    pub fn h_m(&self) -> &DenseMatrix {
        &self.h_m
    }

    /// The modal matrix, if it was retained.
    pub fn phi(&self) -> Option<&DenseMatrix> {
        self.phi.as_ref()
    }

    pub fn gain_map(&self) -> &[usize] {
        &self.gain_map
    }

    pub fn gain_bounds(&self) -> &[GainBounds] {
        &self.gain_bounds
    }

    pub fn num_gains(&self) -> usize {
        self.gain_bounds.len()
    }

    pub fn inputs(&self) -> usize {
        self.e_m.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.h_m.nrows()
    }

    /// Diagonal of the modal internal damping, `2 alpha_c omega`.
    pub fn internal_damping_diag(&self) -> DVector<f64> {
        self.omega.map(|w| 2.0 * self.alpha_c * w)
    }

    /// Per-column gains; rejects negative or wrongly sized input.
    pub fn column_gains(&self, g: &GainVector) -> Result<Vec<f64>> {
        let gains = expand_gains(&self.gain_map, g)?;
        if let Some(bad) = gains.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidGain(format!(
                "the modal solve needs non-negative gains, got {bad}"
            )));
        }
        Ok(gains)
    }

    /// `D(sigma) = sigma^2 + 2 alpha_c omega sigma + omega^2`, checked for
    /// collisions with the internally damped poles.
    fn diagonal(&self, sigma: Complex64) -> Result<Vec<Complex64>> {
        let mut d = Vec::with_capacity(self.n());
        for (i, &w) in self.omega.iter().enumerate() {
            let di = sigma * sigma + sigma * (2.0 * self.alpha_c * w) + w * w;
            if di.norm() <= 1e-14 * (sigma.norm_sqr() + w * w) {
                return Err(Error::PoleCollision { sigma, mode: i });
            }
            d.push(di);
        }
        Ok(d)
    }
}

/// Transform `sys` to modal coordinates, keeping `Phi` when `n` is at most
/// [`DEFAULT_PHI_CAP`].
pub fn to_modal(sys: &SecondOrderSystem) -> Result<ModalSystem> {
    to_modal_with_cap(sys, DEFAULT_PHI_CAP)
}

/// [`to_modal`] with an explicit cap on retaining the dense `Phi`.
pub fn to_modal_with_cap(sys: &SecondOrderSystem, phi_cap: usize) -> Result<ModalSystem> {
    let n = sys.n();
    let eig = sym_eig(&sys.scaled_stiffness())?;
    if eig.values[0] <= 0.0 {
        return Err(Error::NotPositiveDefinite(format!(
            "smallest eigenvalue of M^-1/2 K M^-1/2 is {:.3e}",
            eig.values[0]
        )));
    }
    let omega = eig.values.map(f64::sqrt);
    let mut phi = eig.vectors;
    for (i, m) in sys.mass().iter().enumerate() {
        phi.row_mut(i).scale_mut(1.0 / m.sqrt());
    }

    let geometry = sys.damper_geometry();
    let mut b_m = DMatrix::zeros(n, geometry.cols());
    for &(i, c, v) in geometry.entries() {
        let row = phi.row(i).transpose();
        b_m.column_mut(c).axpy(v, &row, 1.0);
    }
    let e_m = phi.tr_mul(sys.input_map());
    let h_m = sys.output_map() * &phi;

    Ok(ModalSystem {
        omega,
        alpha_c: sys.alpha_c(),
        b_m,
        e_m,
        h_m,
        phi: (n <= phi_cap).then_some(phi),
        gain_map: sys.gain_map().to_vec(),
        gain_bounds: sys.gain_bounds().to_vec(),
    })
}

fn condition_number(s: &ComplexMatrix) -> f64 {
    let sv = s.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solve `(sigma^2 I + sigma (2 alpha_c Omega + B_m G(g) B_m^T) + Omega^2) Y = V`
/// for modal right-hand sides `V`.
///
/// With every gain zero the result is the diagonal solve `D(sigma)^{-1} V`
/// with no correction term.
pub fn shifted_solve(
    ms: &ModalSystem,
    g: &GainVector,
    sigma: Complex64,
    rhs: &ComplexMatrix,
) -> Result<ComplexMatrix> {
    if rhs.nrows() != ms.n() {
        return Err(Error::InvalidDimension(format!(
            "right-hand side has {} rows, system has {}",
            rhs.nrows(),
            ms.n()
        )));
    }
    let gains = ms.column_gains(g)?;
    match solve_once(ms, &gains, sigma, rhs) {
        Err(Error::ShiftDegenerate { .. }) => {
            let perturbed = sigma * (1.0 + SHIFT_PERTURBATION);
            log::debug!("inner SMW matrix near singular at {sigma}, retrying at {perturbed}");
            solve_once(ms, &gains, perturbed, rhs)
        }
        other => other,
    }
}

fn solve_once(
    ms: &ModalSystem,
    gains: &[f64],
    sigma: Complex64,
    rhs: &ComplexMatrix,
) -> Result<ComplexMatrix> {
    let d = ms.diagonal(sigma)?;
    let mut y = rhs.clone();
    for (i, di) in d.iter().enumerate() {
        let inv = 1.0 / di;
        y.row_mut(i).iter_mut().for_each(|v| *v *= inv);
    }
    let active: Vec<usize> = (0..gains.len()).filter(|&c| gains[c] > 0.0).collect();
    if active.is_empty() {
        return Ok(y);
    }

    let q = active.len();
    let n = ms.n();
    // U = B_m[:, active] diag(sqrt g)
    let mut u = DMatrix::<f64>::zeros(n, q);
    for (a, &c) in active.iter().enumerate() {
        u.column_mut(a)
            .axpy(gains[c].sqrt(), &ms.b_m.column(c), 0.0);
    }
    let mut dinv_u = complexify(&u);
    for (i, di) in d.iter().enumerate() {
        let inv = 1.0 / di;
        dinv_u.row_mut(i).iter_mut().for_each(|v| *v *= inv);
    }
    let mut s = u.transpose().map(|x| Complex64::new(x, 0.0)) * &dinv_u * sigma;
    for a in 0..q {
        s[(a, a)] += 1.0;
    }
    let condition = condition_number(&s);
    if !(condition <= INNER_CONDITION_LIMIT) {
        return Err(Error::ShiftDegenerate {
            sigma,
            size: q,
            condition,
        });
    }
    let ut_y = u.transpose().map(|x| Complex64::new(x, 0.0)) * &y;
    let z = solve_complex(&s, &ut_y)?;
    y -= dinv_u * z * sigma;
    Ok(y)
}

/// Transfer function `F(sigma; g) = H_m Y` with `Y` the shifted solve of `E_m`.
pub fn transfer_eval(ms: &ModalSystem, g: &GainVector, sigma: Complex64) -> Result<ComplexMatrix> {
    let y = shifted_solve(ms, g, sigma, &complexify(&ms.e_m))?;
    Ok(complexify(&ms.h_m) * y)
}

/// Modal damping applied to a block, `(2 alpha_c Omega + B_m G B_m^T) Y`.
fn apply_damping(ms: &ModalSystem, gains: &[f64], y: &ComplexMatrix) -> ComplexMatrix {
    let mut out = y.clone();
    for (i, w) in ms.omega.iter().enumerate() {
        let f = 2.0 * ms.alpha_c * w;
        out.row_mut(i).iter_mut().for_each(|v| *v *= f);
    }
    for (c, &gc) in gains.iter().enumerate() {
        if gc == 0.0 {
            continue;
        }
        let col = ms.b_m.column(c).map(|x| Complex64::new(x, 0.0));
        let proj = col.transpose() * y;
        out += col * proj * Complex64::new(gc, 0.0);
    }
    out
}

/// `d/ds [P(s)^{-1}] V = -P^{-1} (2 s I + C_m(g)) P^{-1} V` at `s = sigma`.
pub fn resolvent_derivative(
    ms: &ModalSystem,
    g: &GainVector,
    sigma: Complex64,
    rhs: &ComplexMatrix,
) -> Result<ComplexMatrix> {
    let gains = ms.column_gains(g)?;
    let y = shifted_solve(ms, g, sigma, rhs)?;
    let mut w = apply_damping(ms, &gains, &y);
    w += &y * (sigma * 2.0);
    Ok(-shifted_solve(ms, g, sigma, &w)?)
}

/// Analytic derivative `F'(sigma; g) = -H P^{-1} (2 sigma M + C) P^{-1} E`.
pub fn transfer_derivative(
    ms: &ModalSystem,
    g: &GainVector,
    sigma: Complex64,
) -> Result<ComplexMatrix> {
    let dy = resolvent_derivative(ms, g, sigma, &complexify(&ms.e_m))?;
    Ok(complexify(&ms.h_m) * dy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_example1, damping_matrix};
    use approx::assert_relative_eq;

    fn scalar_modal(alpha_c: f64) -> ModalSystem {
        ModalSystem::from_modal_data(
            DVector::from_element(1, 1.0),
            alpha_c,
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            vec![0],
            vec![GainBounds::NONNEGATIVE],
        )
        .unwrap()
    }

    fn one(v: f64) -> ComplexMatrix {
        DMatrix::from_element(1, 1, Complex64::new(v, 0.0))
    }

    #[test]
    fn scalar_modal_transform() {
        let sys = SecondOrderSystem::new(
            DVector::from_element(1, 4.0),
            crate::model::SparseMatrix::from_triplets(1, 1, [(0, 0, 16.0)]),
            0.1,
            crate::model::SparseMatrix::from_triplets(1, 1, [(0, 0, 1.0)]),
            vec![0],
            vec![GainBounds::NONNEGATIVE],
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        let ms = to_modal(&sys).unwrap();
        assert_relative_eq!(ms.omega()[0], 2.0, epsilon = 1e-15);
        assert_relative_eq!(ms.phi().unwrap()[(0, 0)].abs(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn smw_scalar_one_third() {
        let ms = scalar_modal(0.0);
        let y = shifted_solve(
            &ms,
            &GainVector::new(vec![1.0]).unwrap(),
            Complex64::new(1.0, 0.0),
            &one(1.0),
        )
        .unwrap();
        assert_relative_eq!(y[(0, 0)].re, 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(y[(0, 0)].im, 0.0);
    }

    #[test]
    fn zero_gain_is_pure_diagonal_solve() {
        let sys = build_example1(40, 0.005, 5, 20).unwrap();
        let ms = to_modal(&sys).unwrap();
        let sigma = Complex64::new(0.3, 1.7);
        let rhs = complexify(ms.e_m());
        let y = shifted_solve(&ms, &GainVector::zeros(2), sigma, &rhs).unwrap();
        for i in 0..ms.n() {
            let w = ms.omega()[i];
            let d = sigma * sigma + sigma * (2.0 * ms.alpha_c() * w) + w * w;
            let inv = 1.0 / d;
            for j in 0..rhs.ncols() {
                assert_eq!(y[(i, j)], rhs[(i, j)] * inv);
            }
        }
    }

    #[test]
    fn pole_collision_is_reported() {
        let ms = scalar_modal(0.0);
        let err = transfer_eval(&ms, &GainVector::zeros(1), Complex64::new(0.0, 1.0)).unwrap_err();
        assert!(matches!(err, Error::PoleCollision { mode: 0, .. }));
    }

    #[test]
    fn scalar_transfer_value() {
        // F(1) = he / (1 + 2 alpha_c + 1)
        let ms = scalar_modal(0.2);
        let f = transfer_eval(&ms, &GainVector::zeros(1), Complex64::new(1.0, 0.0)).unwrap();
        assert_relative_eq!(f[(0, 0)].re, 1.0 / 2.4, epsilon = 1e-15);
    }

    #[test]
    fn negative_gains_are_rejected() {
        let ms = scalar_modal(0.1);
        let g = GainVector::unchecked(vec![-1.0]);
        assert!(matches!(
            shifted_solve(&ms, &g, Complex64::new(1.0, 0.0), &one(1.0)),
            Err(Error::InvalidGain(_))
        ));
    }

    #[test]
    fn matches_dense_solve_and_modal_damping() {
        let sys = build_example1(60, 0.005, 7, 40).unwrap();
        let ms = to_modal(&sys).unwrap();
        let phi = ms.phi().unwrap();
        let g = GainVector::new(vec![250.0, 1300.0]).unwrap();
        let c = damping_matrix(&sys, &g).unwrap();

        // Phi^T C_int Phi = 2 alpha_c Omega
        let c_int_m = phi.transpose() * sys.internal_damping().unwrap() * phi;
        let diag = ms.internal_damping_diag();
        for i in 0..ms.n() {
            for j in 0..ms.n() {
                let expect = if i == j { diag[i] } else { 0.0 };
                assert!((c_int_m[(i, j)] - expect).abs() < 1e-9 * diag.max());
            }
        }

        let sigma = Complex64::new(0.8, 3.1);
        let m = DMatrix::from_diagonal(&sys.mass().map(|x| Complex64::new(x, 0.0)));
        let p =
            m * (sigma * sigma) + complexify(&c) * sigma + complexify(&sys.stiffness().to_dense());
        let q = solve_complex(&p, &complexify(sys.input_map())).unwrap();
        let expect =
            complexify(&phi.transpose()) * complexify(&DMatrix::from_diagonal(sys.mass())) * q;
        let got = shifted_solve(&ms, &g, sigma, &complexify(ms.e_m())).unwrap();
        assert!((&got - &expect).norm() <= 1e-10 * expect.norm());
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let sys = build_example1(40, 0.005, 5, 20).unwrap();
        let ms = to_modal(&sys).unwrap();
        let g = GainVector::new(vec![100.0, 40.0]).unwrap();
        let s = Complex64::new(0.5, 2.0);
        let h = 1e-5;
        let fp = transfer_eval(&ms, &g, s + h).unwrap();
        let fm = transfer_eval(&ms, &g, s - h).unwrap();
        let fd = (fp - fm) / Complex64::new(2.0 * h, 0.0);
        let d = transfer_derivative(&ms, &g, s).unwrap();
        assert!((&d - &fd).norm() <= 1e-6 * d.norm());
    }
}
