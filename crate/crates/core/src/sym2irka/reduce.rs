//! Pole-residue forms and the three internal-reduction strategies.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{
    normalize_tangent, shift_change, InterpolationData, ReducedModel, Strategy, Sym2IrkaSettings,
    BASIS_TOL,
};
use crate::error::{Error, Result};
use crate::h2norm::FirstOrderRealization;
use crate::kernels::{
    complexify, gen_eig, is_hurwitz, lyap_solve, orth, spectral_abscissa, svd, sym_eig,
    ComplexMatrix, DenseMatrix,
};
use crate::model::GainVector;

/// Hankel singular values below this fraction of the largest are dropped.
const HANKEL_TOL: f64 = 1e-14;

/// `F(s) = sum_k c_k b_k^T / (s - lambda_k)`.
#[derive(Debug, Clone)]
pub struct PoleResidueForm {
    pub poles: Vec<Complex64>,
    /// `c_k` as columns (`m_out x N`).
    pub c: ComplexMatrix,
    /// `b_k` as columns (`m_in x N`).
    pub b: ComplexMatrix,
    pub ill_conditioned: bool,
}

impl PoleResidueForm {
    pub fn eval(&self, s: Complex64) -> ComplexMatrix {
        let mut f = ComplexMatrix::zeros(self.c.nrows(), self.b.nrows());
        for (k, l) in self.poles.iter().enumerate() {
            let w = Complex64::new(1.0, 0.0) / (s - l);
            f += self.c.column(k) * self.b.column(k).transpose() * w;
        }
        f
    }

    /// Index of the exact conjugate partner of pole `k` (itself when real).
    fn partner(&self, k: usize) -> usize {
        let l = self.poles[k];
        if l.im == 0.0 {
            return k;
        }
        if l.im > 0.0 && k + 1 < self.poles.len() && self.poles[k + 1] == l.conj() {
            return k + 1;
        }
        if l.im < 0.0 && k > 0 && self.poles[k - 1] == l.conj() {
            return k - 1;
        }
        self.poles.iter().position(|m| *m == l.conj()).unwrap_or(k)
    }
}

/// Poles and rank-one residues from right and (normalized) left
/// eigenvectors: `c_k = H1 v_k`, `b_k^T = w_k^T E1`.
pub fn pole_residue(fo: &FirstOrderRealization) -> Result<PoleResidueForm> {
    let eig = gen_eig(&fo.a, true)?;
    let w = eig.left.expect("left vectors requested");
    let c = complexify(&fo.h1) * &eig.right;
    let b = (w.transpose() * complexify(&fo.e1)).transpose();
    Ok(PoleResidueForm {
        poles: eig.values,
        c,
        b,
        ill_conditioned: eig.ill_conditioned,
    })
}

/// Indices of the `r` most dominant poles (`||c_k|| ||b_k|| / |Re lambda_k|`),
/// extended by one when needed to close the set under conjugation.
///
/// Ties go to the smaller `|Im|`, then to the positive imaginary part.
pub fn select_dominant(pr: &PoleResidueForm, r: usize) -> Vec<usize> {
    let n = pr.poles.len();
    let dominance: Vec<f64> = (0..n)
        .map(|k| {
            let leader = if pr.poles[k].im < 0.0 {
                pr.partner(k)
            } else {
                k
            };
            pr.c.column(leader).norm() * pr.b.column(leader).norm() / pr.poles[leader].re.abs()
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        dominance[j]
            .total_cmp(&dominance[i])
            .then(pr.poles[i].im.abs().total_cmp(&pr.poles[j].im.abs()))
            .then(pr.poles[j].im.total_cmp(&pr.poles[i].im))
    });
    let mut chosen: Vec<usize> = order.into_iter().take(r.min(n)).collect();
    let missing: Vec<usize> = chosen
        .iter()
        .map(|&k| pr.partner(k))
        .filter(|p| !chosen.contains(p))
        .collect();
    chosen.extend(missing);
    chosen
}

/// Next interpolation data from poles `mu_k` and tangents `b_k`:
/// `sigma_k = -mu_k`, with non-positive real parts reflected and floored.
fn mirror(pr: &PoleResidueForm, indices: &[usize], floor: f64) -> Result<InterpolationData> {
    let mut shifts = Vec::with_capacity(indices.len());
    let mut tangents = Vec::with_capacity(indices.len());
    for &k in indices {
        let mut s = -pr.poles[k];
        if s.re <= 0.0 {
            s.re = s.re.abs().max(floor);
        }
        shifts.push(s);
        tangents.push(normalize_tangent(pr.b.column(k).into_owned()));
    }
    // Tangents of conjugate poles must be exact conjugates.
    for (pos, &k) in indices.iter().enumerate() {
        if pr.poles[k].im < 0.0 {
            let p = pr.partner(k);
            if let Some(ppos) = indices.iter().position(|&i| i == p) {
                tangents[pos] = tangents[ppos].map(|z| z.conj());
                shifts[pos] = shifts[ppos].conj();
            }
        }
        if pr.poles[k].im == 0.0 {
            tangents[pos] = tangents[pos].map(|z| Complex64::new(z.re, 0.0));
        }
    }
    InterpolationData::new(shifts, tangents)
}

/// Mirrored poles of the whole realization.
fn mirror_all(pr: &PoleResidueForm, floor: f64) -> Result<InterpolationData> {
    let all: Vec<usize> = (0..pr.poles.len()).collect();
    mirror(pr, &all, floor)
}

/// Restart data: the `r` most dominant poles of `rm` at `g`, mirrored.
pub(super) fn mirrored_dominant(
    rm: &ReducedModel,
    g: &GainVector,
    r: usize,
    floor: f64,
) -> Result<InterpolationData> {
    let pr = pole_residue(&rm.linearize(g)?)?;
    let chosen = select_dominant(&pr, r);
    mirror(&pr, &chosen, floor)
}

/// One internal-reduction step on the order-`2 r_hat` linearization of
/// `rm` at `g`, returning the next shifts and tangents.
///
/// `current` seeds the IRKA1S inner loop. `floor` is the smallest real part
/// a reflected shift may have.
pub fn internal_reduce(
    rm: &ReducedModel,
    g: &GainVector,
    r: usize,
    settings: &Sym2IrkaSettings,
    current: &InterpolationData,
    floor: f64,
) -> Result<InterpolationData> {
    let fo = rm.linearize(g)?;
    let eig = gen_eig(&fo.a, false)?;
    if !is_hurwitz(&eig.values, fo.a.norm()) {
        return Err(Error::Unstable {
            abscissa: spectral_abscissa(&eig.values),
        });
    }
    let order = fo.a.nrows();
    match settings.strategy {
        Strategy::DomPoles => {
            let pr = pole_residue(&fo)?;
            let chosen = select_dominant(&pr, r);
            mirror(&pr, &chosen, floor)
        }
        Strategy::Bt => {
            if order <= r {
                return mirror_all(&pole_residue(&fo)?, floor);
            }
            let truncated = balanced_truncation(&fo, r)?;
            mirror_all(&pole_residue(&truncated)?, floor)
        }
        Strategy::Irka1s => {
            if order <= r {
                return mirror_all(&pole_residue(&fo)?, floor);
            }
            irka_one_sided(&fo, r, settings, current, floor)
        }
    }
}

/// Square-root factor `L` with `P = L L^T`, negative eigenvalues clipped.
fn psd_factor(p: &DenseMatrix) -> Result<DenseMatrix> {
    let e = sym_eig(&((p + p.transpose()) * 0.5))?;
    let mut l = e.vectors;
    for (j, v) in e.values.iter().enumerate() {
        l.column_mut(j).scale_mut(v.max(0.0).sqrt());
    }
    Ok(l)
}

/// Square-root balanced truncation to order at most `r`.
pub(crate) fn balanced_truncation(
    fo: &FirstOrderRealization,
    r: usize,
) -> Result<FirstOrderRealization> {
    let a = &fo.a;
    let p = lyap_solve(&a.transpose(), &(&fo.e1 * fo.e1.transpose()))?;
    let q = lyap_solve(a, &(fo.h1.transpose() * &fo.h1))?;
    let lp = psd_factor(&p)?;
    let lq = psd_factor(&q)?;
    let dec = svd(&(lq.transpose() * &lp))?;
    let smax = dec.singular_values.iter().cloned().fold(0.0, f64::max);
    let k = dec
        .singular_values
        .iter()
        .take(r)
        .filter(|&&s| s > HANKEL_TOL * smax)
        .count();
    if k == 0 {
        return Err(Error::DegenerateBasis);
    }
    let inv_sqrt = DVector::from_iterator(
        k,
        dec.singular_values.iter().take(k).map(|s| 1.0 / s.sqrt()),
    );
    let mut tl = dec.u.columns(0, k).transpose() * lq.transpose();
    let mut tr = &lp * dec.vt.rows(0, k).transpose();
    for i in 0..k {
        tl.row_mut(i).scale_mut(inv_sqrt[i]);
        tr.column_mut(i).scale_mut(inv_sqrt[i]);
    }
    Ok(FirstOrderRealization {
        a: &tl * a * &tr,
        e1: &tl * &fo.e1,
        h1: &fo.h1 * &tr,
    })
}

/// Trim or pad the seed to roughly `r` points while keeping it closed
/// under conjugation.
fn fit_seed(
    current: &InterpolationData,
    pr_full: &PoleResidueForm,
    r: usize,
    floor: f64,
) -> Result<InterpolationData> {
    let mut shifts = current.shifts().to_vec();
    let mut tangents = current.tangents().to_vec();
    if shifts.len() > r {
        let mut order: Vec<usize> = (0..shifts.len()).collect();
        order.sort_by(|&i, &j| {
            shifts[i]
                .im
                .abs()
                .total_cmp(&shifts[j].im.abs())
                .then(shifts[j].im.total_cmp(&shifts[i].im))
        });
        let mut keep: Vec<usize> = order[..r].to_vec();
        for &k in &order[..r] {
            if shifts[k].im > 0.0 {
                if let Some(p) =
                    (0..shifts.len()).find(|&j| shifts[j] == shifts[k].conj() && !keep.contains(&j))
                {
                    keep.push(p);
                }
            }
        }
        let snapshot = keep.clone();
        keep.retain(|&k| {
            shifts[k].im >= 0.0 || snapshot.iter().any(|&j| shifts[j] == shifts[k].conj())
        });
        keep.sort_unstable();
        shifts = keep.iter().map(|&k| shifts[k]).collect();
        tangents = keep.iter().map(|&k| tangents[k].clone()).collect();
    }
    if shifts.len() < r {
        let extra = mirror(
            pr_full,
            &select_dominant(pr_full, pr_full.poles.len()),
            floor,
        )?;
        for (s, t) in extra.shifts().iter().zip(extra.tangents()) {
            if shifts.len() >= r && s.im >= 0.0 {
                break;
            }
            if !shifts.contains(s) {
                shifts.push(*s);
                tangents.push(t.clone());
            }
        }
    }
    InterpolationData::new(shifts, tangents)
}

/// One-sided IRKA (`W = V`) on a first-order realization, down to order `r`.
fn irka_one_sided(
    fo: &FirstOrderRealization,
    r: usize,
    settings: &Sym2IrkaSettings,
    current: &InterpolationData,
    floor: f64,
) -> Result<InterpolationData> {
    let pr_full = pole_residue(fo)?;
    let eig = gen_eig(&fo.a, true)?;
    let right = eig.right;
    let left_e = eig.left.expect("left vectors requested").transpose() * complexify(&fo.e1);
    let n = fo.a.nrows();

    let mut interp = fit_seed(current, &pr_full, r, floor)?;
    let mut last = None;
    for it in 0..settings.it_max {
        // (sigma I - A)^{-1} E1 b = V diag(1 / (sigma - lambda)) W^T E1 b
        let mut cols: Vec<DVector<f64>> = Vec::with_capacity(interp.len());
        for (s, b) in interp.shifts().iter().zip(interp.tangents()) {
            if s.im < 0.0 {
                continue;
            }
            let mut coeff = &left_e * b;
            for (k, l) in eig.values.iter().enumerate() {
                coeff[k] /= s - l;
            }
            let v = &right * coeff;
            cols.push(v.map(|z| z.re));
            if s.im > 0.0 {
                cols.push(v.map(|z| z.im));
            }
        }
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
        let v = orth(&DMatrix::from_columns(&cols), BASIS_TOL)?;
        if v.ncols() == 0 || v.nrows() != n {
            return Err(Error::DegenerateBasis);
        }
        let red = FirstOrderRealization {
            a: v.transpose() * &fo.a * &v,
            e1: v.transpose() * &fo.e1,
            h1: &fo.h1 * &v,
        };
        let pr = pole_residue(&red)?;
        let next = mirror_all(&pr, floor)?;
        let change = shift_change(interp.shifts(), next.shifts());
        log::trace!("IRKA1S inner iteration {}: change {change:.3e}", it + 1);
        interp = next.clone();
        last = Some(next);
        if change < settings.tol {
            break;
        }
    }
    last.ok_or_else(|| Error::InvalidInput("itMax must be at least 1".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::solve_complex;
    use approx::assert_relative_eq;

    fn realization(
        a: &[f64],
        n: usize,
        e: &[f64],
        m: usize,
        h: &[f64],
        p: usize,
    ) -> FirstOrderRealization {
        FirstOrderRealization {
            a: DMatrix::from_row_slice(n, n, a),
            e1: DMatrix::from_row_slice(n, m, e),
            h1: DMatrix::from_row_slice(p, n, h),
        }
    }

    #[test]
    fn first_order_lag() {
        let pr = pole_residue(&realization(&[-1.0], 1, &[1.0], 1, &[1.0], 1)).unwrap();
        assert_relative_eq!(pr.poles[0].re, -1.0);
        let r = pr.c[(0, 0)] * pr.b[(0, 0)];
        assert_relative_eq!(r.re, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn scalar_second_order_partial_fractions() {
        // 1 / (s^2 + 3 s + 2) = 1/(s+1) - 1/(s+2)
        let fo = realization(&[0.0, 1.0, -2.0, -3.0], 2, &[0.0, 1.0], 1, &[1.0, 0.0], 1);
        let pr = pole_residue(&fo).unwrap();
        let mut pairs: Vec<(f64, f64)> = (0..2)
            .map(|k| (pr.poles[k].re, (pr.c[(0, k)] * pr.b[(0, k)]).re))
            .collect();
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        assert_relative_eq!(pairs[0].0, -1.0, epsilon = 1e-14);
        assert_relative_eq!(pairs[0].1, 1.0, epsilon = 1e-13);
        assert_relative_eq!(pairs[1].0, -2.0, epsilon = 1e-14);
        assert_relative_eq!(pairs[1].1, -1.0, epsilon = 1e-13);
    }

    #[test]
    fn reconstruction_at_probe_points() {
        let fo = realization(
            &[-0.5, 2.0, 0.1, -2.0, -0.5, 0.0, 0.3, 0.0, -1.5],
            3,
            &[1.0, 0.0, 0.5, 1.0, 0.2, -1.0],
            2,
            &[1.0, 1.0, 0.0],
            1,
        );
        let pr = pole_residue(&fo).unwrap();
        for s in [Complex64::new(0.1, 0.3), Complex64::new(2.0, -1.0)] {
            let shifted = ComplexMatrix::identity(3, 3) * s - complexify(&fo.a);
            let direct = complexify(&fo.h1) * solve_complex(&shifted, &complexify(&fo.e1)).unwrap();
            assert!((pr.eval(s) - &direct).norm() <= 1e-12 * direct.norm());
        }
    }

    fn synthetic(residues: &[f64]) -> PoleResidueForm {
        // Conjugate pairs at -1 +- i k, equal real parts.
        let mut poles = Vec::new();
        let mut c = Vec::new();
        for (k, rn) in residues.iter().enumerate() {
            let l = Complex64::new(-1.0, (k + 1) as f64);
            poles.push(l);
            poles.push(l.conj());
            c.push(Complex64::new(*rn, 0.0));
            c.push(Complex64::new(*rn, 0.0));
        }
        let n = poles.len();
        PoleResidueForm {
            poles,
            c: ComplexMatrix::from_row_slice(1, n, &c),
            b: ComplexMatrix::from_element(1, n, Complex64::new(1.0, 0.0)),
            ill_conditioned: false,
        }
    }

    #[test]
    fn dominance_order() {
        let pr = synthetic(&[0.1, 10.0, 1.0]);
        let chosen = select_dominant(&pr, 2);
        assert_eq!(chosen, vec![2, 3]);
        let chosen = select_dominant(&pr, 4);
        assert_eq!(chosen, vec![2, 3, 4, 5]);
    }

    #[test]
    fn odd_count_extends_to_close_pairs() {
        let pr = synthetic(&[10.0, 1.0]);
        let chosen = select_dominant(&pr, 3);
        assert_eq!(chosen, vec![0, 1, 2, 3]);
    }

    #[test]
    fn ties_prefer_small_imaginary_part() {
        let pr = synthetic(&[1.0, 1.0]);
        assert_eq!(select_dominant(&pr, 1), vec![0, 1]);
    }

    #[test]
    fn balanced_truncation_keeps_stable_dominant_part() {
        let fo = realization(
            &[-1.0, 0.0, 0.0, 0.0, -2.0, 0.0, 0.0, 0.0, -50.0],
            3,
            &[1.0, 1.0, 1e-4],
            1,
            &[1.0, 1.0, 1e-4],
            1,
        );
        let t = balanced_truncation(&fo, 2).unwrap();
        assert_eq!(t.a.nrows(), 2);
        let pr = pole_residue(&t).unwrap();
        for l in &pr.poles {
            assert!(l.re < 0.0);
        }
        let s = Complex64::new(0.0, 0.5);
        let full = pole_residue(&fo).unwrap().eval(s);
        assert!((pr.eval(s) - &full).norm() < 1e-6 * full.norm());
    }
}
