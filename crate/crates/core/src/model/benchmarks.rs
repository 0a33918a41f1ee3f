//! The two benchmark families: a chain of masses with nearest and
//! next-nearest springs (example 1) and a two-row oscillator coupled through
//! one heavy mass (example 2).
//!
//! Both are defined at a reference size (n = 1900, d = 1000). Other sizes
//! keep the geometry: site indices scale proportionally and round to the
//! nearest valid index, and the piecewise mass profiles are evaluated at the
//! reference-equivalent index.

use nalgebra::{DMatrix, DVector};

use super::{GainBounds, SecondOrderSystem, SparseMatrix};
use crate::error::{Error, Result};

pub const EXAMPLE1_PAPER_N: usize = 1900;
pub const EXAMPLE2_PAPER_D: usize = 1000;

const EX1_SPRING: f64 = 500.0;
const EX1_MASS_BREAK: usize = 475;
const EX1_EXCITATION_START: usize = 471;
const EX1_EXCITATION: [f64; 10] = [10.0, 20.0, 30.0, 40.0, 50.0, 50.0, 40.0, 30.0, 20.0, 10.0];
const EX1_OUTPUT_STRIDE: usize = 100;
const EX1_OUTPUTS: usize = 18;

const EX2_K1: f64 = 400.0;
const EX2_K2: f64 = 100.0;
const EX2_K3: f64 = 300.0;
const EX2_ROW_CENTER: usize = 500;
const EX2_OUTPUT_HALF_WIDTH: usize = 10;
const EX2_DAMPER_REACH: usize = 25;

/// Map a 1-based index on the reference grid of size `reference` to the
/// nearest 1-based index on a grid of size `size`, clamped to `1..=size`.
pub fn scale_index(index: usize, reference: usize, size: usize) -> usize {
    let scaled = (index as f64 * size as f64 / reference as f64).round() as usize;
    scaled.clamp(1, size)
}

fn unit(n: usize, i: usize) -> Vec<(usize, f64)> {
    debug_assert!(i < n);
    vec![(i, 1.0)]
}

/// Example 1: `n` masses in sequence, springs `k_i = 500` to the first and
/// second neighbours, dampers `[e_j, e_{j+1}, e_k, e_{k+1}]` with the pairs
/// sharing gains `g_1` and `g_2`. `j` and `k` are 1-based.
pub fn build_example1(n: usize, alpha_c: f64, j: usize, k: usize) -> Result<SecondOrderSystem> {
    if n < 20 {
        return Err(Error::InvalidDimension(format!(
            "example 1 needs n >= 20 to host its excitation and output stencils, got {n}"
        )));
    }
    if j < 1 || k > n - 1 || j + 1 >= k {
        return Err(Error::InvalidDimension(format!(
            "damper indices must satisfy 1 <= j, j + 1 < k <= n - 1 (got j = {j}, k = {k}, n = {n})"
        )));
    }
    let ratio = EXAMPLE1_PAPER_N as f64 / n as f64;
    let mass_break = scale_index(EX1_MASS_BREAK, EXAMPLE1_PAPER_N, n);
    let mass = DVector::from_fn(n, |r, _| {
        let i = r + 1;
        let t = i as f64 * ratio;
        if i <= mass_break {
            144.0 - 3.0 * t / 20.0
        } else {
            t / 10.0 + 25.0
        }
    });

    // k_i is constant; the pattern references k_{n+1} at the last row.
    let spring = |_i: usize| EX1_SPRING;
    let mut triplets = Vec::with_capacity(5 * n);
    for r in 0..n {
        let i = r + 1;
        triplets.push((r, r, 2.0 * spring(i) + 2.0 * spring(i + 1)));
        if r + 1 < n {
            let v = -spring(i + 1);
            triplets.push((r, r + 1, v));
            triplets.push((r + 1, r, v));
        }
        if r + 2 < n {
            let v = -spring(i + 2);
            triplets.push((r, r + 2, v));
            triplets.push((r + 2, r, v));
        }
    }
    let stiffness = SparseMatrix::from_triplets(n, n, triplets);

    let m_in = EX1_EXCITATION.len();
    let start = scale_index(EX1_EXCITATION_START, EXAMPLE1_PAPER_N, n).min(n + 1 - m_in) - 1;
    let mut input = DMatrix::zeros(n, m_in);
    for (c, w) in EX1_EXCITATION.iter().enumerate() {
        input[(start + c, c)] = *w;
    }

    let mut output = DMatrix::zeros(EX1_OUTPUTS, n);
    for o in 0..EX1_OUTPUTS {
        let site = scale_index(EX1_OUTPUT_STRIDE * (o + 1), EXAMPLE1_PAPER_N, n);
        output[(o, site - 1)] = 1.0;
    }

    let columns = [j - 1, j, k - 1, k];
    let geometry = SparseMatrix::from_triplets(
        n,
        4,
        columns
            .iter()
            .enumerate()
            .flat_map(|(c, &row)| unit(n, row).into_iter().map(move |(i, v)| (i, c, v))),
    );

    SecondOrderSystem::new(
        mass,
        stiffness,
        alpha_c,
        geometry,
        vec![0, 0, 1, 1],
        vec![GainBounds::NONNEGATIVE; 2],
        input,
        output,
    )
}

/// Example 2: two rows of `d` masses (stiffness `k_1 = 400`, `k_2 = 100`)
/// tied to a last mass grounded through `k_3 = 300`; `n = 2d + 1`. Four
/// independent dampers `e_j - e_{j+5}`, `e_{j+20} - e_{j+25}` and the same
/// offsets from `k`. `j` must sit in the first row and `k` in the second,
/// both 1-based.
pub fn build_example2(d: usize, alpha_c: f64, j: usize, k: usize) -> Result<SecondOrderSystem> {
    if d < 30 {
        return Err(Error::InvalidDimension(format!(
            "example 2 needs d >= 30, got {d}"
        )));
    }
    if j < 1 || j + EX2_DAMPER_REACH > d {
        return Err(Error::InvalidDimension(format!(
            "damper index j = {j} must satisfy 1 <= j and j + 25 <= d = {d}"
        )));
    }
    if k < d + 1 || k + EX2_DAMPER_REACH > 2 * d {
        return Err(Error::InvalidDimension(format!(
            "damper index k = {k} must satisfy d + 1 <= k and k + 25 <= 2d = {}",
            2 * d
        )));
    }
    let n = 2 * d + 1;
    let ratio = EXAMPLE2_PAPER_D as f64 / d as f64;
    let mass = DVector::from_fn(n, |r, _| {
        let i = r + 1;
        if i == n {
            100.0
        } else if i <= d {
            let t = i as f64 * ratio;
            if t < 500.0 {
                100.0 - t / 10.0
            } else {
                t / 30.0 + 33.0
            }
        } else {
            let u = (i - d) as f64 * ratio + 1.0;
            100.0 - u * 5.0 / 20.0 + u * u / 5000.0
        }
    });

    let mut triplets = Vec::with_capacity(6 * n);
    for (row, spring) in [(0usize, EX2_K1), (1, EX2_K2)] {
        let offset = row * d;
        for i in 0..d {
            triplets.push((offset + i, offset + i, 2.0 * spring));
            if i + 1 < d {
                triplets.push((offset + i, offset + i + 1, -spring));
                triplets.push((offset + i + 1, offset + i, -spring));
            }
        }
        triplets.push((offset + d - 1, n - 1, -spring));
        triplets.push((n - 1, offset + d - 1, -spring));
    }
    triplets.push((n - 1, n - 1, EX2_K1 + EX2_K2 + EX2_K3));
    let stiffness = SparseMatrix::from_triplets(n, n, triplets);

    let mut input = DMatrix::zeros(n, 21);
    for c in 0..10 {
        let w = 1000.0 - 100.0 * c as f64;
        input[(c, c)] = w;
        input[(d + c, 10 + c)] = w;
    }
    input[(n - 1, 20)] = 2000.0;

    let center = scale_index(EX2_ROW_CENTER, EXAMPLE2_PAPER_D, d)
        .clamp(EX2_OUTPUT_HALF_WIDTH + 1, d - EX2_OUTPUT_HALF_WIDTH);
    let width = 2 * EX2_OUTPUT_HALF_WIDTH + 1;
    let mut output = DMatrix::zeros(2 * width, n);
    for o in 0..width {
        let site = center - EX2_OUTPUT_HALF_WIDTH + o;
        output[(o, site - 1)] = 1.0;
        output[(width + o, d + site - 1)] = 1.0;
    }

    let mut geometry = Vec::with_capacity(8);
    for (c, base) in [j, j + 20, k, k + 20].into_iter().enumerate() {
        geometry.push((base - 1, c, 1.0));
        geometry.push((base + 4, c, -1.0));
    }
    let geometry = SparseMatrix::from_triplets(n, 4, geometry);

    SecondOrderSystem::new(
        mass,
        stiffness,
        alpha_c,
        geometry,
        vec![0, 1, 2, 3],
        vec![GainBounds::NONNEGATIVE; 4],
        input,
        output,
    )
}

/// Damper-position grid of example 1 (44 configurations at reference size)
/// scaled to `n`.
pub fn example1_grid(n: usize) -> Vec<(usize, usize)> {
    let mut grid = Vec::with_capacity(44);
    for j in [50, 150, 250, 350] {
        for k in (850..=1850).step_by(100) {
            let js = scale_index(j, EXAMPLE1_PAPER_N, n).clamp(1, n.saturating_sub(3).max(1));
            let ks = scale_index(k, EXAMPLE1_PAPER_N, n).clamp(js + 2, n - 1);
            grid.push((js, ks));
        }
    }
    grid
}

/// Damper-position grid of example 2 (28 configurations at reference size)
/// scaled to `d`.
pub fn example2_grid(d: usize) -> Vec<(usize, usize)> {
    let mut grid = Vec::with_capacity(28);
    for j in [250, 450, 650, 850] {
        for k in (1150..=1750).step_by(100) {
            let js = scale_index(j, EXAMPLE2_PAPER_D, d).clamp(1, d - EX2_DAMPER_REACH);
            let ks = (d + scale_index(k - EXAMPLE2_PAPER_D, EXAMPLE2_PAPER_D, d))
                .clamp(d + 1, 2 * d - EX2_DAMPER_REACH);
            grid.push((js, ks));
        }
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn example1_reference_values() {
        let sys = build_example1(1900, 0.005, 50, 850).unwrap();
        assert_relative_eq!(sys.mass()[0], 143.85, epsilon = 1e-12);
        assert_relative_eq!(sys.mass()[475], 72.6, epsilon = 1e-12);
        let k = sys.stiffness();
        assert_eq!(k.get(4, 4), 2000.0);
        assert_eq!(k.get(4, 5), -500.0);
        assert_eq!(k.get(4, 6), -500.0);
        assert_eq!(k.get(4, 7), 0.0);
        let e = sys.input_map();
        assert_eq!(e[(474, 4)], 50.0);
        assert_eq!(e[(470, 0)], 10.0);
        assert_eq!(e[(99, 0)], 0.0);
        assert_eq!(e.shape(), (1900, 10));
        let h = sys.output_map();
        assert_eq!(h.shape(), (18, 1900));
        for o in 0..18 {
            assert_eq!(h[(o, 100 * (o + 1) - 1)], 1.0);
            assert_eq!(h.row(o).sum(), 1.0);
        }
    }

    #[test]
    fn example1_geometry_and_tying() {
        let sys = build_example1(300, 0.005, 10, 200).unwrap();
        let b = sys.damper_geometry();
        for c in 0..4 {
            assert_eq!(b.column_nnz(c), 1);
        }
        assert_eq!(b.get(9, 0), 1.0);
        assert_eq!(b.get(10, 1), 1.0);
        assert_eq!(b.get(199, 2), 1.0);
        assert_eq!(b.get(200, 3), 1.0);
        assert_eq!(sys.gain_map(), &[0, 0, 1, 1]);
        assert_eq!(sys.stiffness().max_asymmetry(), 0.0);
    }

    #[test]
    fn example1_rejects_bad_sizes() {
        assert!(matches!(
            build_example1(10, 0.005, 2, 6),
            Err(Error::InvalidDimension(_))
        ));
        assert!(build_example1(300, 0.005, 10, 11).is_err());
        assert!(build_example1(300, 0.005, 10, 300).is_err());
        assert!(build_example1(300, 0.005, 0, 100).is_err());
    }

    #[test]
    fn example2_reference_values() {
        let sys = build_example2(1000, 0.003, 250, 1150).unwrap();
        assert_eq!(sys.n(), 2001);
        assert_relative_eq!(sys.mass()[2000], 100.0);
        assert_relative_eq!(sys.mass()[0], 99.9, epsilon = 1e-12);
        assert_relative_eq!(sys.mass()[500], 501.0 / 30.0 + 33.0, epsilon = 1e-12);
        assert_relative_eq!(sys.mass()[499], 500.0 / 30.0 + 33.0, epsilon = 1e-12);
        assert_relative_eq!(
            sys.mass()[1000],
            100.0 - 0.5 + 4.0 / 5000.0,
            epsilon = 1e-12
        );
        let k = sys.stiffness();
        assert_eq!(k.get(2000, 2000), 800.0);
        assert_eq!(k.get(0, 0), 800.0);
        assert_eq!(k.get(1000, 1000), 200.0);
        assert_eq!(k.get(999, 2000), -400.0);
        assert_eq!(k.get(1999, 2000), -100.0);
        assert_eq!(k.get(999, 1000), 0.0);
        let e = sys.input_map();
        assert_eq!(e[(2000, 20)], 2000.0);
        assert_eq!(e[(0, 0)], 1000.0);
        assert_eq!(e[(9, 9)], 100.0);
        assert_eq!(e[(1009, 19)], 100.0);
        let h = sys.output_map();
        assert_eq!(h.shape(), (42, 2001));
        assert_eq!(h[(0, 489)], 1.0);
        assert_eq!(h[(20, 509)], 1.0);
        assert_eq!(h[(21, 1489)], 1.0);
        assert_eq!(h[(41, 1509)], 1.0);
    }

    #[test]
    fn example2_geometry() {
        let sys = build_example2(150, 0.003, 38, 170).unwrap();
        assert_eq!(sys.n(), 301);
        let b = sys.damper_geometry();
        for c in 0..4 {
            assert_eq!(b.column_nnz(c), 2);
        }
        assert_eq!(b.get(37, 0), 1.0);
        assert_eq!(b.get(42, 0), -1.0);
        assert_eq!(b.get(57, 1), 1.0);
        assert_eq!(b.get(62, 1), -1.0);
        assert_eq!(b.get(169, 2), 1.0);
        assert_eq!(b.get(194, 3), -1.0);
        assert_eq!(sys.gain_map(), &[0, 1, 2, 3]);
        assert!(build_example2(150, 0.003, 130, 170).is_err());
        assert!(build_example2(150, 0.003, 38, 140).is_err());
        assert!(build_example2(20, 0.003, 1, 25).is_err());
    }

    #[test]
    fn grids_have_reference_sizes() {
        let g1 = example1_grid(1900);
        assert_eq!(g1.len(), 44);
        assert_eq!(g1[0], (50, 850));
        assert_eq!(g1[43], (350, 1850));
        let g2 = example2_grid(1000);
        assert_eq!(g2.len(), 28);
        assert_eq!(g2[0], (250, 1150));
        assert_eq!(g2[27], (850, 1750));
        for (j, k) in example1_grid(300) {
            assert!(build_example1(300, 0.005, j, k).is_ok());
        }
        for (j, k) in example2_grid(150) {
            assert!(build_example2(150, 0.003, j, k).is_ok());
        }
    }
}
