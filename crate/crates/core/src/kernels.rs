//! Dense kernels for the small and medium problems that show up after
//! reduction (and for the desk-scale full-order oracle).
//!
//! Factorizations are delegated to LAPACK; everything here works on
//! column-major nalgebra matrices so the buffers go to Fortran untouched.
//! All tolerances are relative to Frobenius norms.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Real dense matrix, column-major.
pub type DenseMatrix = DMatrix<f64>;
/// Complex dense matrix, column-major.
pub type ComplexMatrix = DMatrix<Complex64>;

/// Relative symmetry tolerance accepted by [`sym_eig`].
pub const SYMMETRY_TOL: f64 = 1e-12;
/// A real part above `-STABILITY_MARGIN * ||A||_F` counts as unstable.
pub const STABILITY_MARGIN: f64 = 1e-12;
/// Eigenvalue condition number above which a spectrum is flagged as
/// defective to working precision.
pub const ILL_CONDITIONED: f64 = 1e10;

/// Symmetric eigendecomposition `A = U diag(values) U^T`.
#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Eigenvalues in non-decreasing order.
    pub values: DVector<f64>,
    /// Orthonormal eigenvectors, one per column.
    pub vectors: DenseMatrix,
}

/// Complex spectrum of a real matrix with right (and optionally left)
/// eigenvectors.
///
/// Left vectors `w_k` satisfy `w_k^T A = lambda_k w_k^T` (plain transpose)
/// and are scaled so that `w_k^T v_k = 1`.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<Complex64>,
    pub right: ComplexMatrix,
    pub left: Option<ComplexMatrix>,
    /// Set when some eigenvalue has condition number above [`ILL_CONDITIONED`].
    pub ill_conditioned: bool,
}

/// Thin singular value decomposition.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DenseMatrix,
    pub singular_values: DVector<f64>,
    pub vt: DenseMatrix,
}

/// Real Schur form `A = Z T Z^T` with `T` quasi-upper-triangular.
#[derive(Debug, Clone)]
pub struct RealSchur {
    pub t: DenseMatrix,
    pub z: DenseMatrix,
    pub eigenvalues: Vec<Complex64>,
}

fn lapack_check(routine: &'static str, info: i32) -> Result<()> {
    if info == 0 {
        Ok(())
    } else {
        Err(Error::Lapack { routine, info })
    }
}

fn check_finite(a: &DenseMatrix, what: &str) -> Result<()> {
    if a.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "{what} has non-finite entries"
        )))
    }
}

fn check_square(a: &DenseMatrix, what: &str) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::InvalidDimension(format!(
            "{what} must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(a.nrows())
}

/// Symmetric eigendecomposition. Rejects inputs whose asymmetry exceeds
/// [`SYMMETRY_TOL`] relative to `||A||_F`.
pub fn sym_eig(a: &DenseMatrix) -> Result<SymEigen> {
    let n = check_square(a, "sym_eig input")?;
    check_finite(a, "sym_eig input")?;
    let norm = a.norm();
    let asymmetry = (a - a.transpose()).norm();
    if asymmetry > SYMMETRY_TOL * norm {
        return Err(Error::NotSymmetric { asymmetry, norm });
    }
    if n == 0 {
        return Ok(SymEigen {
            values: DVector::zeros(0),
            vectors: DenseMatrix::zeros(0, 0),
        });
    }
    let mut work_a = a.clone();
    let mut w = vec![0.0; n];
    let ni = n as i32;
    let mut info = 0;
    let mut work = vec![0.0];
    let mut iwork = vec![0i32];
    unsafe {
        lapack::dsyevd(
            b'V',
            b'L',
            ni,
            work_a.as_mut_slice(),
            ni,
            &mut w,
            &mut work,
            -1,
            &mut iwork,
            -1,
            &mut info,
        );
    }
    lapack_check("dsyevd", info)?;
    let lwork = work[0] as usize;
    let liwork = iwork[0] as usize;
    let mut work = vec![0.0; lwork.max(1)];
    let mut iwork = vec![0i32; liwork.max(1)];
    unsafe {
        lapack::dsyevd(
            b'V',
            b'L',
            ni,
            work_a.as_mut_slice(),
            ni,
            &mut w,
            &mut work,
            lwork as i32,
            &mut iwork,
            liwork as i32,
            &mut info,
        );
    }
    lapack_check("dsyevd", info)?;
    Ok(SymEigen {
        values: DVector::from_vec(w),
        vectors: work_a,
    })
}

/// Full complex eigendecomposition of a real square matrix.
///
/// Conjugate pairs come out adjacent (positive imaginary part first) with
/// exactly conjugate eigenvectors.
pub fn gen_eig(a: &DenseMatrix, want_left: bool) -> Result<EigenPairs> {
    let n = check_square(a, "gen_eig input")?;
    check_finite(a, "gen_eig input")?;
    if n == 0 {
        return Ok(EigenPairs {
            values: Vec::new(),
            right: ComplexMatrix::zeros(0, 0),
            left: want_left.then(|| ComplexMatrix::zeros(0, 0)),
            ill_conditioned: false,
        });
    }
    let ni = n as i32;
    let mut work_a = a.clone();
    let mut wr = vec![0.0; n];
    let mut wi = vec![0.0; n];
    let mut vl = vec![0.0; if want_left { n * n } else { 1 }];
    let mut vr = vec![0.0; n * n];
    let jobvl = if want_left { b'V' } else { b'N' };
    let ldvl = if want_left { ni } else { 1 };
    let mut info = 0;
    let mut work = vec![0.0];
    unsafe {
        lapack::dgeev(
            jobvl,
            b'V',
            ni,
            work_a.as_mut_slice(),
            ni,
            &mut wr,
            &mut wi,
            &mut vl,
            ldvl,
            &mut vr,
            ni,
            &mut work,
            -1,
            &mut info,
        );
    }
    lapack_check("dgeev", info)?;
    let lwork = (work[0] as usize).max(4 * n);
    let mut work = vec![0.0; lwork];
    unsafe {
        lapack::dgeev(
            jobvl,
            b'V',
            ni,
            work_a.as_mut_slice(),
            ni,
            &mut wr,
            &mut wi,
            &mut vl,
            ldvl,
            &mut vr,
            ni,
            &mut work,
            lwork as i32,
            &mut info,
        );
    }
    lapack_check("dgeev", info)?;

    let values: Vec<Complex64> = wr
        .iter()
        .zip(&wi)
        .map(|(&re, &im)| Complex64::new(re, im))
        .collect();
    let right = unpack_eigenvectors(&vr, n, &wi);
    let mut ill_conditioned = false;
    let left = if want_left {
        // LAPACK returns u with u^H A = lambda u^H; the transpose convention
        // wants w = conj(u).
        let mut w = unpack_eigenvectors(&vl, n, &wi).map(|z| z.conj());
        for k in 0..n {
            let overlap: Complex64 = w
                .column(k)
                .iter()
                .zip(right.column(k).iter())
                .map(|(a, b)| a * b)
                .sum();
            let wn = w.column(k).norm();
            let vn = right.column(k).norm();
            if overlap.norm() * ILL_CONDITIONED <= wn * vn {
                ill_conditioned = true;
            }
            if overlap.norm() > 0.0 {
                let scale = Complex64::new(1.0, 0.0) / overlap;
                w.column_mut(k).iter_mut().for_each(|z| *z *= scale);
            }
        }
        Some(w)
    } else {
        None
    };
    if ill_conditioned {
        log::warn!(
            "gen_eig: spectrum is defective to working precision; residues may be inaccurate"
        );
    }
    Ok(EigenPairs {
        values,
        right,
        left,
        ill_conditioned,
    })
}

fn unpack_eigenvectors(packed: &[f64], n: usize, wi: &[f64]) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(n, n);
    let mut j = 0;
    while j < n {
        if wi[j] == 0.0 {
            for i in 0..n {
                out[(i, j)] = Complex64::new(packed[j * n + i], 0.0);
            }
            j += 1;
        } else {
            for i in 0..n {
                let re = packed[j * n + i];
                let im = packed[(j + 1) * n + i];
                out[(i, j)] = Complex64::new(re, im);
                out[(i, j + 1)] = Complex64::new(re, -im);
            }
            j += 2;
        }
    }
    out
}

/// Thin SVD (`u` is `rows x min(rows, cols)`).
pub fn svd(a: &DenseMatrix) -> Result<Svd> {
    check_finite(a, "svd input")?;
    let (m, n) = a.shape();
    let k = m.min(n);
    if k == 0 {
        return Ok(Svd {
            u: DenseMatrix::zeros(m, 0),
            singular_values: DVector::zeros(0),
            vt: DenseMatrix::zeros(0, n),
        });
    }
    let mut work_a = a.clone();
    let mut s = vec![0.0; k];
    let mut u = DenseMatrix::zeros(m, k);
    let mut vt = DenseMatrix::zeros(k, n);
    let mut iwork = vec![0i32; 8 * k];
    let mut info = 0;
    let mut work = vec![0.0];
    unsafe {
        lapack::dgesdd(
            b'S',
            m as i32,
            n as i32,
            work_a.as_mut_slice(),
            m as i32,
            &mut s,
            u.as_mut_slice(),
            m as i32,
            vt.as_mut_slice(),
            k as i32,
            &mut work,
            -1,
            &mut iwork,
            &mut info,
        );
    }
    lapack_check("dgesdd", info)?;
    let lwork = work[0] as usize;
    let mut work = vec![0.0; lwork.max(1)];
    unsafe {
        lapack::dgesdd(
            b'S',
            m as i32,
            n as i32,
            work_a.as_mut_slice(),
            m as i32,
            &mut s,
            u.as_mut_slice(),
            m as i32,
            vt.as_mut_slice(),
            k as i32,
            &mut work,
            lwork as i32,
            &mut iwork,
            &mut info,
        );
    }
    lapack_check("dgesdd", info)?;
    Ok(Svd {
        u,
        singular_values: DVector::from_vec(s),
        vt,
    })
}

/// Orthonormal basis for the numerical range of `columns`.
///
/// Keeps the left singular vectors whose singular value exceeds
/// `tol * sigma_max`; a zero input yields a matrix with no columns.
pub fn orth(columns: &DenseMatrix, tol: f64) -> Result<DenseMatrix> {
    if !(tol >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "orth tolerance must be >= 0, got {tol}"
        )));
    }
    let rows = columns.nrows();
    if columns.ncols() == 0 || rows == 0 {
        return Ok(DenseMatrix::zeros(rows, 0));
    }
    let dec = svd(columns)?;
    let smax = dec.singular_values.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return Ok(DenseMatrix::zeros(rows, 0));
    }
    let rank = dec
        .singular_values
        .iter()
        .filter(|&&s| s > tol * smax)
        .count();
    Ok(dec.u.columns(0, rank).into_owned())
}

/// Real Schur decomposition via `dgees`.
pub fn real_schur(a: &DenseMatrix) -> Result<RealSchur> {
    let n = check_square(a, "schur input")?;
    check_finite(a, "schur input")?;
    if n == 0 {
        return Ok(RealSchur {
            t: DenseMatrix::zeros(0, 0),
            z: DenseMatrix::zeros(0, 0),
            eigenvalues: Vec::new(),
        });
    }
    let ni = n as i32;
    let mut t = a.clone();
    let mut z = DenseMatrix::zeros(n, n);
    let mut wr = vec![0.0; n];
    let mut wi = vec![0.0; n];
    let mut sdim = 0;
    let mut bwork = vec![0i32; n];
    let mut info = 0;
    let mut work = vec![0.0];
    unsafe {
        lapack::dgees(
            b'V',
            b'N',
            None,
            ni,
            t.as_mut_slice(),
            ni,
            &mut sdim,
            &mut wr,
            &mut wi,
            z.as_mut_slice(),
            ni,
            &mut work,
            -1,
            &mut bwork,
            &mut info,
        );
    }
    lapack_check("dgees", info)?;
    let lwork = (work[0] as usize).max(3 * n);
    let mut work = vec![0.0; lwork];
    unsafe {
        lapack::dgees(
            b'V',
            b'N',
            None,
            ni,
            t.as_mut_slice(),
            ni,
            &mut sdim,
            &mut wr,
            &mut wi,
            z.as_mut_slice(),
            ni,
            &mut work,
            lwork as i32,
            &mut bwork,
            &mut info,
        );
    }
    lapack_check("dgees", info)?;
    let eigenvalues = wr
        .iter()
        .zip(&wi)
        .map(|(&re, &im)| Complex64::new(re, im))
        .collect();
    Ok(RealSchur { t, z, eigenvalues })
}

/// Largest real part among `eigenvalues` (`-inf` for an empty spectrum).
pub fn spectral_abscissa(eigenvalues: &[Complex64]) -> f64 {
    eigenvalues
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Hurwitz test with the conservative margin used throughout: borderline
/// spectra are unstable.
pub fn is_hurwitz(eigenvalues: &[Complex64], norm: f64) -> bool {
    spectral_abscissa(eigenvalues) < -STABILITY_MARGIN * norm
}

/// Lyapunov solver bound to one Schur factorization of `A`.
///
/// Solves `A^T X + X A = -Q` for any number of right-hand sides.
#[derive(Debug, Clone)]
pub struct Lyapunov {
    schur: RealSchur,
}

impl Lyapunov {
    /// Factor `A`; fails with [`Error::Unstable`] unless `A` is Hurwitz.
    pub fn new(a: &DenseMatrix) -> Result<Self> {
        let schur = real_schur(a)?;
        if !is_hurwitz(&schur.eigenvalues, a.norm()) {
            return Err(Error::Unstable {
                abscissa: spectral_abscissa(&schur.eigenvalues),
            });
        }
        Ok(Self { schur })
    }

    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.schur.eigenvalues
    }

    pub fn schur(&self) -> &RealSchur {
        &self.schur
    }

    /// Solve `T^T Y + Y T = rhs` in Schur coordinates (overwrites `rhs`).
    fn solve_schur(&self, rhs: &mut DenseMatrix) -> Result<()> {
        let n = self.schur.t.nrows() as i32;
        if n == 0 {
            return Ok(());
        }
        let mut scale = [1.0];
        let mut info = 0;
        unsafe {
            lapack::dtrsyl(
                b'T',
                b'N',
                &[1],
                n,
                n,
                self.schur.t.as_slice(),
                n,
                self.schur.t.as_slice(),
                n,
                rhs.as_mut_slice(),
                n,
                &mut scale,
                &mut info,
            );
        }
        // info = 1 means perturbed eigenvalues; the Hurwitz check already
        // guarantees A and -A^T share no spectrum.
        if info < 0 {
            return Err(Error::Lapack {
                routine: "dtrsyl",
                info,
            });
        }
        if scale[0] != 1.0 {
            *rhs /= scale[0];
        }
        Ok(())
    }

    /// Full solution `X` of `A^T X + X A = -Q` for symmetric `Q`.
    pub fn solve(&self, q: &DenseMatrix) -> Result<DenseMatrix> {
        let z = &self.schur.z;
        if q.shape() != z.shape() {
            return Err(Error::InvalidDimension(format!(
                "Lyapunov right-hand side is {}x{}, expected {}x{}",
                q.nrows(),
                q.ncols(),
                z.nrows(),
                z.ncols()
            )));
        }
        let mut c = -(z.transpose() * q * z);
        self.solve_schur(&mut c)?;
        let x = z * c * z.transpose();
        Ok((&x + x.transpose()) * 0.5)
    }

    /// `trace(G^T X G)` where `A^T X + X A = -F^T F`, without forming `X`.
    pub fn trace_factored(&self, f: &DenseMatrix, g: &DenseMatrix) -> Result<f64> {
        let z = &self.schur.z;
        let n = z.nrows();
        if f.ncols() != n || g.nrows() != n {
            return Err(Error::InvalidDimension(format!(
                "factors {}x{} and {}x{} do not match state dimension {n}",
                f.nrows(),
                f.ncols(),
                g.nrows(),
                g.ncols()
            )));
        }
        let fz = f * z;
        let mut c = -(fz.transpose() * &fz);
        self.solve_schur(&mut c)?;
        let gz = z.transpose() * g;
        let cg = &c * &gz;
        Ok(gz.dot(&cg))
    }
}

/// Solve `A^T X + X A = -Q` (Bartels-Stewart on the real Schur form).
pub fn lyap_solve(a: &DenseMatrix, q: &DenseMatrix) -> Result<DenseMatrix> {
    check_square(a, "Lyapunov coefficient")?;
    check_finite(q, "Lyapunov right-hand side")?;
    Lyapunov::new(a)?.solve(q)
}

/// Solve the complex square system `A X = B` by LU with partial pivoting.
pub fn solve_complex(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if a.nrows() != a.ncols() || a.nrows() != b.nrows() {
        return Err(Error::InvalidDimension(format!(
            "complex solve with {}x{} matrix and {} right-hand-side rows",
            a.nrows(),
            a.ncols(),
            b.nrows()
        )));
    }
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Singular("complex LU found a zero pivot".into()))
}

/// Lift a real matrix to the complex field.
pub fn complexify(a: &DenseMatrix) -> ComplexMatrix {
    a.map(|x| Complex64::new(x, 0.0))
}
