//! Symmetrized IRKA for second-order systems.
//!
//! Each iteration solves the full model at the current shifts along the
//! current tangents, projects one-sidedly onto the span of those solves
//! (which keeps `M_r`, `C_r`, `K_r` symmetric and definite), reduces the
//! order-`2r` linearization of the projected model internally down to `r`
//! poles and mirrors them into the next shifts.

mod reduce;

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use reduce::{internal_reduce, pole_residue, select_dominant, PoleResidueForm};

use crate::error::{Error, Result};
use crate::h2norm::{h2_norm, linearize, FirstOrderRealization, H2Value};
use crate::kernels::{complexify, orth, solve_complex, sym_eig, ComplexMatrix, DenseMatrix};
use crate::modalsolve::{shifted_solve, ModalSystem};
use crate::model::{expand_gains, GainVector};

/// Relative rank tolerance for basis orthonormalization.
pub const BASIS_TOL: f64 = 1e-12;
/// Shifts are kept at least this far (relative to the largest frequency)
/// into the right half-plane.
pub const SHIFT_FLOOR: f64 = 1e-8;
/// Restarts allowed after an unstable intermediate model.
pub const MAX_RESTARTS: usize = 2;

const CLOSURE_TOL: f64 = 1e-12;

/// Internal-reduction strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    /// Balanced truncation of the linearized projected model.
    #[serde(rename = "a", alias = "bt")]
    Bt,
    /// One-sided IRKA on the linearized projected model.
    #[serde(rename = "b", alias = "irka1s")]
    Irka1s,
    /// Most dominant poles of the projected quadratic eigenproblem.
    #[serde(rename = "c", alias = "dompoles")]
    DomPoles,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Bt, Strategy::Irka1s, Strategy::DomPoles];

    pub fn letter(self) -> &'static str {
        match self {
            Strategy::Bt => "a",
            Strategy::Irka1s => "b",
            Strategy::DomPoles => "c",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.letter())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" | "bt" => Ok(Strategy::Bt),
            "b" | "irka1s" => Ok(Strategy::Irka1s),
            "c" | "dompoles" => Ok(Strategy::DomPoles),
            other => Err(Error::InvalidInput(format!(
                "unknown strategy {other:?} (expected a/bt, b/irka1s or c/dompoles)"
            ))),
        }
    }
}

/// Loop controls shared by the outer iteration and the IRKA1S inner loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sym2IrkaSettings {
    pub strategy: Strategy,
    pub it_max: usize,
    pub tol: f64,
}

impl Default for Sym2IrkaSettings {
    fn default() -> Self {
        Self {
            strategy: Strategy::DomPoles,
            it_max: 40,
            tol: 1e-3,
        }
    }
}

/// Shifts with their tangent directions, closed under conjugation.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationData {
    shifts: Vec<Complex64>,
    tangents: Vec<DVector<Complex64>>,
}

impl InterpolationData {
    /// Validates conjugate closure (shift and tangent), a common tangent
    /// length and strictly positive real parts.
    pub fn new(shifts: Vec<Complex64>, tangents: Vec<DVector<Complex64>>) -> Result<Self> {
        if shifts.len() != tangents.len() {
            return Err(Error::InvalidInput(format!(
                "{} shifts but {} tangents",
                shifts.len(),
                tangents.len()
            )));
        }
        if shifts.is_empty() {
            return Err(Error::InvalidInput("no interpolation points".into()));
        }
        let m = tangents[0].len();
        if tangents.iter().any(|t| t.len() != m) {
            return Err(Error::InvalidDimension("tangents differ in length".into()));
        }
        for (i, s) in shifts.iter().enumerate() {
            if !(s.re > 0.0) || !s.im.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "shift {s} is not in the open right half-plane"
                )));
            }
            if s.im != 0.0 {
                let scale = s.norm();
                let partner = shifts.iter().enumerate().position(|(j, t)| {
                    j != i
                        && (t - s.conj()).norm() <= CLOSURE_TOL * scale
                        && (&tangents[j] - tangents[i].map(|z| z.conj())).norm()
                            <= CLOSURE_TOL * tangents[i].norm().max(f64::MIN_POSITIVE)
                });
                if partner.is_none() {
                    return Err(Error::InvalidInput(format!(
                        "shift {s} has no conjugate partner with conjugate tangent"
                    )));
                }
            } else if tangents[i].iter().any(|z| z.im != 0.0) {
                return Err(Error::InvalidInput(format!(
                    "real shift {s} carries a complex tangent"
                )));
            }
        }
        Ok(Self { shifts, tangents })
    }

    pub fn shifts(&self) -> &[Complex64] {
        &self.shifts
    }

    pub fn tangents(&self) -> &[DVector<Complex64>] {
        &self.tangents
    }

    pub fn len(&self) -> usize {
        self.shifts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shifts.is_empty()
    }
}

fn lexicographic(a: &Complex64, b: &Complex64) -> Ordering {
    a.im.total_cmp(&b.im).then(a.re.total_cmp(&b.re))
}

/// `max_i |new_i - old_i| / |old_i|` after sorting both sets by
/// (imaginary, real) part; `+inf` when the sizes differ.
pub fn shift_change(old: &[Complex64], new: &[Complex64]) -> f64 {
    if old.len() != new.len() {
        return f64::INFINITY;
    }
    let mut a = old.to_vec();
    let mut b = new.to_vec();
    a.sort_by(lexicographic);
    b.sort_by(lexicographic);
    a.iter()
        .zip(&b)
        .map(|(o, n)| (n - o).norm() / o.norm())
        .fold(0.0, f64::max)
}

/// Scale so the largest-magnitude entry is real and positive, with unit norm.
pub(crate) fn normalize_tangent(mut t: DVector<Complex64>) -> DVector<Complex64> {
    let norm = t.norm();
    if norm == 0.0 {
        return t;
    }
    let mut pivot = Complex64::new(0.0, 0.0);
    for z in t.iter() {
        if z.norm() > pivot.norm() {
            pivot = *z;
        }
    }
    let phase = pivot.conj() / pivot.norm();
    t.iter_mut().for_each(|z| *z = *z * phase / norm);
    t
}

/// Orthonormal real basis spanning the solves
/// `(sigma_i^2 M + sigma_i C(g) + K)^{-1} E b_i` in modal coordinates.
///
/// A conjugate pair contributes the real and imaginary parts of one solve.
pub fn build_basis(
    ms: &ModalSystem,
    g: &GainVector,
    interp: &InterpolationData,
) -> Result<DenseMatrix> {
    if interp.tangents[0].len() != ms.inputs() {
        return Err(Error::InvalidDimension(format!(
            "tangents have length {}, system has {} inputs",
            interp.tangents[0].len(),
            ms.inputs()
        )));
    }
    let e = complexify(ms.e_m());
    let columns: Vec<Vec<DVector<f64>>> = interp
        .shifts
        .par_iter()
        .zip(interp.tangents.par_iter())
        .map(|(s, b)| -> Result<Vec<DVector<f64>>> {
            if s.im < 0.0 {
                return Ok(Vec::new());
            }
            let rhs = &e * b;
            let v = shifted_solve(
                ms,
                g,
                *s,
                &DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice()),
            )?;
            let v = v.column(0);
            let mut out = vec![v.map(|z| z.re)];
            if s.im > 0.0 {
                out.push(v.map(|z| z.im));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut cols: Vec<DVector<f64>> = columns.into_iter().flatten().collect();
    for c in cols.iter_mut() {
        let nrm = c.norm();
        if nrm > 0.0 {
            *c /= nrm;
        }
    }
    cols.retain(|c| c.norm() > 0.0);
    if cols.is_empty() {
        return Err(Error::DegenerateBasis);
    }
    let x = orth(&DMatrix::from_columns(&cols), BASIS_TOL)?;
    if x.ncols() == 0 {
        return Err(Error::DegenerateBasis);
    }
    Ok(x)
}

/// Gains and shifts a reduced model was built from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub gains: Vec<Vec<f64>>,
    pub shifts: Vec<(f64, f64)>,
}

/// One-sided projection of a modal system onto a real basis.
#[derive(Debug, Clone)]
pub struct ReducedModel {
    basis: DenseMatrix,
    m_r: DenseMatrix,
    k_r: DenseMatrix,
    c_int_r: DenseMatrix,
    b_r: DenseMatrix,
    e_r: DenseMatrix,
    h_r: DenseMatrix,
    gain_map: Vec<usize>,
    pub provenance: Provenance,
}

fn symmetrize(a: DenseMatrix) -> DenseMatrix {
    (&a + a.transpose()) * 0.5
}

fn check_spd(a: &DenseMatrix, what: &'static str) -> Result<()> {
    let e = sym_eig(a)?;
    let max = e.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if e.values.is_empty() || !(e.values[0] > 1e-14 * max) {
        return Err(Error::ProjectionDegenerate(what));
    }
    Ok(())
}

/// Project `ms` onto the modal-coordinate basis `x` (orthonormal columns).
pub fn project(ms: &ModalSystem, x: &DenseMatrix) -> Result<ReducedModel> {
    if x.nrows() != ms.n() || x.ncols() == 0 {
        return Err(Error::InvalidDimension(format!(
            "basis is {}x{}, system has n = {}",
            x.nrows(),
            x.ncols(),
            ms.n()
        )));
    }
    let omega = ms.omega();
    let mut kx = x.clone();
    let mut cx = x.clone();
    for i in 0..ms.n() {
        let w = omega[i];
        kx.row_mut(i).scale_mut(w * w);
        cx.row_mut(i).scale_mut(2.0 * ms.alpha_c() * w);
    }
    let m_r = symmetrize(x.tr_mul(x));
    let k_r = symmetrize(x.tr_mul(&kx));
    let c_int_r = symmetrize(x.tr_mul(&cx));
    check_spd(&m_r, "reduced mass matrix lost definiteness")?;
    check_spd(&k_r, "reduced stiffness matrix lost definiteness")?;
    Ok(ReducedModel {
        basis: x.clone(),
        m_r,
        k_r,
        c_int_r,
        b_r: x.tr_mul(ms.b_m()),
        e_r: x.tr_mul(ms.e_m()),
        h_r: ms.h_m() * x,
        gain_map: ms.gain_map().to_vec(),
        provenance: Provenance::default(),
    })
}

impl ReducedModel {
    pub fn dim(&self) -> usize {
        self.m_r.nrows()
    }

    pub fn basis(&self) -> &DenseMatrix {
        &self.basis
    }

    pub fn m_r(&self) -> &DenseMatrix {
        &self.m_r
    }

    pub fn k_r(&self) -> &DenseMatrix {
        &self.k_r
    }

    pub fn c_int_r(&self) -> &DenseMatrix {
        &self.c_int_r
    }

    pub fn b_r(&self) -> &DenseMatrix {
        &self.b_r
    }

    pub fn e_r(&self) -> &DenseMatrix {
        &self.e_r
    }

    pub fn h_r(&self) -> &DenseMatrix {
        &self.h_r
    }

    /// `C_r(g) = C_int_r + B_r G(g) B_r^T`. Gains are not range-checked.
    pub fn damping(&self, g: &GainVector) -> Result<DenseMatrix> {
        let gains = expand_gains(&self.gain_map, g)?;
        let mut c = self.c_int_r.clone();
        for (col, gc) in gains.iter().enumerate() {
            if *gc != 0.0 {
                let b = self.b_r.column(col);
                c.ger(*gc, &b, &b, 1.0);
            }
        }
        Ok(symmetrize(c))
    }

    pub fn linearize(&self, g: &GainVector) -> Result<FirstOrderRealization> {
        linearize(
            &self.m_r,
            &self.damping(g)?,
            &self.k_r,
            &self.e_r,
            &self.h_r,
        )
    }

    /// Surrogate H2 norm at `g` (unstable sentinel if the reduced
    /// linearization is not Hurwitz).
    pub fn h2(&self, g: &GainVector) -> Result<H2Value> {
        h2_norm(&self.linearize(g)?)
    }

    /// `P_r(s)^{-1} = (s^2 M_r + s C_r(g) + K_r)^{-1}`.
    pub fn resolvent(&self, g: &GainVector, s: Complex64) -> Result<ComplexMatrix> {
        let p = complexify(&self.m_r) * (s * s)
            + complexify(&self.damping(g)?) * s
            + complexify(&self.k_r);
        let r = self.dim();
        solve_complex(&p, &ComplexMatrix::identity(r, r))
    }

    /// Reduced transfer function `H_r P_r(s)^{-1} E_r`.
    pub fn transfer_eval(&self, g: &GainVector, s: Complex64) -> Result<ComplexMatrix> {
        Ok(complexify(&self.h_r) * self.resolvent(g, s)? * complexify(&self.e_r))
    }

    /// `-P_r^{-1} (2 s M_r + C_r) P_r^{-1}`.
    pub fn resolvent_derivative(&self, g: &GainVector, s: Complex64) -> Result<ComplexMatrix> {
        let pinv = self.resolvent(g, s)?;
        let dp = complexify(&self.m_r) * (s * 2.0) + complexify(&self.damping(g)?);
        Ok(-(&pinv * dp * &pinv))
    }
}

/// Result of one sym2IRKA run.
#[derive(Debug, Clone)]
pub struct Sym2IrkaOutput {
    /// Basis of the last iteration (modal coordinates).
    pub basis: DenseMatrix,
    /// Interpolation data the basis was built from.
    pub basis_interp: InterpolationData,
    /// Shifts and tangents produced from the last projected model; the
    /// recycling seed for the next run.
    pub next_interp: InterpolationData,
    pub iterations: usize,
    pub converged: bool,
    pub restarts: usize,
}

pub(crate) fn shift_floor(ms: &ModalSystem) -> f64 {
    SHIFT_FLOOR * ms.omega().max()
}

/// Run sym2IRKA at gain `g` from `init`.
pub fn sym2irka(
    ms: &ModalSystem,
    g: &GainVector,
    r: usize,
    settings: &Sym2IrkaSettings,
    init: &InterpolationData,
) -> Result<Sym2IrkaOutput> {
    if settings.it_max == 0 {
        return Err(Error::InvalidInput("itMax must be at least 1".into()));
    }
    if r == 0 {
        return Err(Error::InvalidInput(
            "reduced order r must be positive".into(),
        ));
    }
    let floor = shift_floor(ms);
    let mut interp = init.clone();
    let mut restarts = 0;
    let mut iterations = 0;
    loop {
        iterations += 1;
        let basis = build_basis(ms, g, &interp)?;
        let rm = project(ms, &basis)?;
        let next = match internal_reduce(&rm, g, r, settings, &interp, floor) {
            Ok(next) => next,
            Err(Error::Unstable { abscissa }) => {
                if restarts == MAX_RESTARTS {
                    return Err(Error::NonConvergence(format!(
                        "sym2IRKA hit an unstable intermediate model {} times (last spectral abscissa {abscissa:.3e}) after {iterations} iterations",
                        restarts + 1
                    )));
                }
                restarts += 1;
                log::warn!(
                    "sym2IRKA: unstable intermediate model, restart {restarts} from mirrored poles"
                );
                interp = reduce::mirrored_dominant(&rm, g, r, floor)?;
                if iterations >= settings.it_max {
                    return Err(Error::NonConvergence(format!(
                        "sym2IRKA ran out of iterations while restarting ({iterations} of {})",
                        settings.it_max
                    )));
                }
                continue;
            }
            Err(e) => return Err(e),
        };
        let change = shift_change(interp.shifts(), next.shifts());
        log::debug!(
            "sym2IRKA iteration {iterations}: shift change {change:.3e}, basis width {}",
            basis.ncols()
        );
        let converged = change < settings.tol;
        if converged || iterations >= settings.it_max {
            return Ok(Sym2IrkaOutput {
                basis,
                basis_interp: interp,
                next_interp: next,
                iterations,
                converged,
                restarts,
            });
        }
        interp = next;
    }
}

/// Mirrored modally damped poles for the `r/2` lowest modes, with tangents
/// from the dominant right singular vector of the `g = 0` modal truncation.
pub fn seed_interpolation(ms: &ModalSystem, r: usize) -> Result<InterpolationData> {
    if r == 0 || !r.is_multiple_of(2) {
        return Err(Error::InvalidInput(format!(
            "r = {r} must be positive and even"
        )));
    }
    if r > ms.n() {
        return Err(Error::InvalidDimension(format!(
            "r = {r} exceeds n = {}",
            ms.n()
        )));
    }
    let floor = shift_floor(ms);
    let alpha = ms.alpha_c();
    let modes = r.min(ms.n());
    let h = complexify(&ms.h_m().columns(0, modes).into_owned());
    let e = complexify(&ms.e_m().rows(0, modes).into_owned());
    let mut shifts = Vec::with_capacity(r);
    let mut tangents = Vec::with_capacity(r);
    for i in 0..r / 2 {
        let w = ms.omega()[i];
        let s = Complex64::new((alpha * w).max(floor), w * (1.0 - alpha * alpha).sqrt());
        let mut scaled = e.clone();
        for k in 0..modes {
            let wk = ms.omega()[k];
            let d = s * s + s * (2.0 * alpha * wk) + wk * wk;
            let inv = 1.0 / d;
            scaled.row_mut(k).iter_mut().for_each(|z| *z *= inv);
        }
        let f = &h * scaled;
        let tangent = dominant_right_singular_vector(&f);
        shifts.push(s);
        tangents.push(tangent.clone());
        shifts.push(s.conj());
        tangents.push(tangent.map(|z| z.conj()));
    }
    InterpolationData::new(shifts, tangents)
}

fn dominant_right_singular_vector(f: &ComplexMatrix) -> DVector<Complex64> {
    if f.ncols() == 1 {
        return DVector::from_element(1, Complex64::new(1.0, 0.0));
    }
    let svd = f.clone().svd(false, true);
    let vt = svd.v_t.expect("requested right singular vectors");
    let mut best = 0;
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s > svd.singular_values[best] {
            best = i;
        }
    }
    normalize_tangent(vt.row(best).transpose().map(|z| z.conj()))
}

/// The off-line phase: seed shifts, then one sym2IRKA run at `g = 0`.
pub fn initial_interpolation(
    ms: &ModalSystem,
    r: usize,
    settings: &Sym2IrkaSettings,
) -> Result<Sym2IrkaOutput> {
    let seed = seed_interpolation(ms, r)?;
    sym2irka(ms, &GainVector::zeros(ms.num_gains()), r, settings, &seed)
}

#[cfg(test)]
mod tests;
