use super::*;
use crate::kernels::DenseMatrix;
use crate::modalsolve::{to_modal, transfer_eval};
use crate::model::{build_example1, GainBounds};
use approx::assert_relative_eq;

fn example(n: usize) -> ModalSystem {
    let grid = crate::model::example1_grid(n);
    let (j, k) = grid[5];
    to_modal(&build_example1(n, 0.005, j, k).unwrap()).unwrap()
}

fn projector(x: &DenseMatrix) -> DenseMatrix {
    x * x.transpose()
}

fn siso_modal(omega: &[f64], alpha_c: f64) -> ModalSystem {
    let n = omega.len();
    ModalSystem::from_modal_data(
        DVector::from_column_slice(omega),
        alpha_c,
        DMatrix::from_element(n, 1, 0.3),
        DMatrix::from_fn(n, 1, |i, _| 1.0 / (i + 1) as f64),
        DMatrix::from_fn(1, n, |_, j| 1.0 + j as f64),
        vec![0],
        vec![GainBounds::NONNEGATIVE],
    )
    .unwrap()
}

#[test]
fn strategy_names_round_trip() {
    for s in Strategy::ALL {
        assert_eq!(s.letter().parse::<Strategy>().unwrap(), s);
    }
    assert_eq!("dompoles".parse::<Strategy>().unwrap(), Strategy::DomPoles);
    assert!("x".parse::<Strategy>().is_err());
}

#[test]
fn interpolation_data_rejects_open_pairs() {
    let t = DVector::from_element(1, Complex64::new(1.0, 0.0));
    assert!(InterpolationData::new(vec![Complex64::new(1.0, 2.0)], vec![t.clone()]).is_err());
    assert!(InterpolationData::new(vec![Complex64::new(-1.0, 0.0)], vec![t.clone()]).is_err());
    let ok = InterpolationData::new(
        vec![Complex64::new(1.0, 2.0), Complex64::new(1.0, -2.0)],
        vec![t.clone(), t.clone()],
    );
    assert!(ok.is_ok());
    let bad_tangent = DVector::from_element(1, Complex64::new(0.0, 1.0));
    assert!(InterpolationData::new(vec![Complex64::new(1.0, 0.0)], vec![bad_tangent]).is_err());
}

#[test]
fn shift_change_is_permutation_stable() {
    let a = vec![
        Complex64::new(1.0, 2.0),
        Complex64::new(1.0, -2.0),
        Complex64::new(3.0, 0.0),
    ];
    let mut b = a.clone();
    b.reverse();
    assert_eq!(shift_change(&a, &b), 0.0);
    assert_eq!(shift_change(&a, &a[..2]), f64::INFINITY);
    let mut c = a.clone();
    c[2] = Complex64::new(3.3, 0.0);
    assert_relative_eq!(shift_change(&a, &c), 0.1, epsilon = 1e-14);
}

#[test]
fn conjugate_pair_collapses_to_real_and_imaginary_parts() {
    let ms = siso_modal(&[1.0, 2.0, 3.0, 4.0], 0.01);
    let s = Complex64::new(0.2, 1.5);
    let one = DVector::from_element(1, Complex64::new(1.0, 0.0));
    let interp = InterpolationData::new(vec![s, s.conj()], vec![one.clone(), one]).unwrap();
    let g = GainVector::new(vec![0.7]).unwrap();
    let x = build_basis(&ms, &g, &interp).unwrap();
    assert_eq!(x.ncols(), 2);
    let v = shifted_solve(&ms, &g, s, &complexify(ms.e_m())).unwrap();
    let span = DMatrix::from_columns(&[v.column(0).map(|z| z.re), v.column(0).map(|z| z.im)]);
    let q = orth(&span, 1e-12).unwrap();
    assert!((projector(&x) - projector(&q)).norm() < 1e-12);
}

#[test]
fn real_shift_gives_normalized_solve() {
    let ms = siso_modal(&[1.0, 2.0, 3.0], 0.01);
    let s = Complex64::new(0.5, 0.0);
    let one = DVector::from_element(1, Complex64::new(1.0, 0.0));
    let interp = InterpolationData::new(vec![s], vec![one]).unwrap();
    let g = GainVector::zeros(1);
    let x = build_basis(&ms, &g, &interp).unwrap();
    let v = shifted_solve(&ms, &g, s, &complexify(ms.e_m()))
        .unwrap()
        .map(|z| z.re);
    let v = v.column(0) / v.norm();
    assert_eq!(x.ncols(), 1);
    assert!((x.column(0) - &v).norm() < 1e-14 || (x.column(0) + &v).norm() < 1e-14);
}

#[test]
fn identity_projection_reproduces_modal_model() {
    let ms = siso_modal(&[1.0, 2.0, 3.0], 0.05);
    let rm = project(&ms, &DMatrix::identity(3, 3)).unwrap();
    assert_eq!(rm.m_r(), &DMatrix::identity(3, 3));
    assert_eq!(
        rm.k_r(),
        &DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, 4.0, 9.0]))
    );
    assert_eq!(rm.e_r(), ms.e_m());
    let g = GainVector::new(vec![0.4]).unwrap();
    let s = Complex64::new(0.3, 1.1);
    let full = transfer_eval(&ms, &g, s).unwrap();
    assert!((rm.transfer_eval(&g, s).unwrap() - &full).norm() < 1e-14 * full.norm());
}

#[test]
fn single_mode_projection() {
    let ms = siso_modal(&[1.5, 2.0, 3.0], 0.05);
    let x = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
    let rm = project(&ms, &x).unwrap();
    assert_eq!(rm.m_r()[(0, 0)], 1.0);
    assert_eq!(rm.k_r()[(0, 0)], 2.25);
}

#[test]
fn siso_seed_tangents_are_one() {
    let ms = siso_modal(&[1.0, 2.0, 3.0, 4.0], 0.02);
    let seed = seed_interpolation(&ms, 4).unwrap();
    for t in seed.tangents() {
        assert_eq!(t[0], Complex64::new(1.0, 0.0));
    }
}

#[test]
fn undamped_seed_is_nudged_off_the_axis() {
    let ms = siso_modal(&[1.0, 2.0], 0.0);
    let seed = seed_interpolation(&ms, 2).unwrap();
    let floor = SHIFT_FLOOR * 2.0;
    assert_eq!(seed.shifts()[0], Complex64::new(floor, 1.0));
    assert_eq!(seed.shifts()[1], Complex64::new(floor, -1.0));
}

#[test]
fn seed_rejects_bad_orders() {
    let ms = siso_modal(&[1.0, 2.0], 0.01);
    assert!(seed_interpolation(&ms, 3).is_err());
    assert!(seed_interpolation(&ms, 4).is_err());
}

#[test]
fn single_pass_basis_equals_build_basis() {
    let ms = example(120);
    let seed = seed_interpolation(&ms, 8).unwrap();
    let g = GainVector::new(vec![300.0, 50.0]).unwrap();
    let settings = Sym2IrkaSettings {
        it_max: 1,
        ..Default::default()
    };
    let out = sym2irka(&ms, &g, 8, &settings, &seed).unwrap();
    assert_eq!(out.iterations, 1);
    assert_eq!(out.basis, build_basis(&ms, &g, &seed).unwrap());
    assert_eq!(out.basis_interp, seed);
}

#[test]
fn every_strategy_keeps_shifts_closed_and_stable() {
    let ms = example(300);
    let g = GainVector::new(vec![500.0, 200.0]).unwrap();
    for strategy in Strategy::ALL {
        let settings = Sym2IrkaSettings {
            strategy,
            it_max: 40,
            tol: 1e-3,
        };
        let off = initial_interpolation(&ms, 12, &settings).unwrap();
        let out = sym2irka(&ms, &g, 12, &settings, &off.next_interp).unwrap();
        for data in [&off.next_interp, &out.next_interp, &out.basis_interp] {
            // the constructor enforces closure and the half-plane
            InterpolationData::new(data.shifts().to_vec(), data.tangents().to_vec()).unwrap();
        }
        let rm = project(&ms, &out.basis).unwrap();
        assert!(rm.h2(&g).unwrap().stable, "strategy {strategy}");
    }
}

#[test]
fn tangential_interpolation_holds_on_basis_data() {
    let ms = example(200);
    let g = GainVector::new(vec![800.0, 100.0]).unwrap();
    let settings = Sym2IrkaSettings::default();
    let off = initial_interpolation(&ms, 10, &settings).unwrap();
    let out = sym2irka(&ms, &g, 10, &settings, &off.next_interp).unwrap();
    let rm = project(&ms, &out.basis).unwrap();
    for (s, b) in out
        .basis_interp
        .shifts()
        .iter()
        .zip(out.basis_interp.tangents())
    {
        let full = transfer_eval(&ms, &g, *s).unwrap() * b;
        let red = rm.transfer_eval(&g, *s).unwrap() * b;
        assert!((&full - &red).norm() <= 1e-8 * full.norm());
    }
}

#[test]
fn converged_run_is_a_fixed_point() {
    let ms = example(150);
    let settings = Sym2IrkaSettings::default();
    let off = initial_interpolation(&ms, 8, &settings).unwrap();
    assert!(off.converged);
    let again = sym2irka(&ms, &GainVector::zeros(2), 8, &settings, &off.next_interp).unwrap();
    assert_eq!(again.iterations, 1);
}

#[test]
fn bt_without_truncation_returns_mirrored_poles() {
    let ms = example(100);
    let g = GainVector::new(vec![100.0, 100.0]).unwrap();
    let seed = seed_interpolation(&ms, 4).unwrap();
    let x = build_basis(&ms, &g, &seed).unwrap();
    let rm = project(&ms, &x).unwrap();
    let settings = Sym2IrkaSettings {
        strategy: Strategy::Bt,
        ..Default::default()
    };
    let r = 2 * rm.dim();
    let next = internal_reduce(&rm, &g, r, &settings, &seed, 0.0).unwrap();
    let poles = crate::kernels::gen_eig(&rm.linearize(&g).unwrap().a, false)
        .unwrap()
        .values;
    let mirrored: Vec<Complex64> = poles.iter().map(|l| -l).collect();
    assert_eq!(shift_change(&mirrored, next.shifts()), 0.0);
}
