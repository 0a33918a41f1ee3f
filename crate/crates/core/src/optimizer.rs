//! Nelder-Mead simplex search in the style of `fminsearch`, plus a wrapper
//! that handles gain bounds by projection and a quadratic penalty.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::GainBounds;

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;
const RELATIVE_STEP: f64 = 0.05;
const ZERO_STEP: f64 = 0.00025;

/// Stopping rule and budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadSettings {
    pub tol_x: f64,
    pub tol_f: f64,
    /// `None` means `400 p`.
    pub max_evals: Option<usize>,
}

impl Default for NelderMeadSettings {
    fn default() -> Self {
        Self {
            tol_x: 1e-4,
            tol_f: 1e-4,
            max_evals: None,
        }
    }
}

/// Outcome of a simplex search. `history` holds the best vertex after
/// initialization and after every iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evaluations: usize,
    pub iterations: usize,
    /// Whether the tolerance test (rather than the budget) stopped the run.
    pub converged: bool,
    pub history: Vec<(Vec<f64>, f64)>,
}

fn initial_simplex(x0: &[f64]) -> Vec<Vec<f64>> {
    let mut simplex = vec![x0.to_vec()];
    for i in 0..x0.len() {
        let mut v = x0.to_vec();
        v[i] = if x0[i] != 0.0 {
            (1.0 + RELATIVE_STEP) * x0[i]
        } else {
            ZERO_STEP
        };
        simplex.push(v);
    }
    simplex
}

/// Minimize `objective` from `x0`.
///
/// Stops once every vertex is within `tol_x` of the best (max-norm) and
/// every value within `tol_f` of the best, or when the evaluation budget is
/// spent. Non-finite values are ordered after every finite value.
pub fn nelder_mead<F>(
    mut objective: F,
    x0: &[f64],
    settings: &NelderMeadSettings,
) -> Result<NelderMeadResult>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(settings.tol_x > 0.0 && settings.tol_f > 0.0) {
        return Err(Error::InvalidInput(
            "Nelder-Mead tolerances must be positive".into(),
        ));
    }
    let p = x0.len();
    if p == 0 {
        return Err(Error::InvalidDimension(
            "cannot optimize over zero variables".into(),
        ));
    }
    let max_evals = settings.max_evals.unwrap_or(400 * p);
    let mut evaluations = 0;
    let mut eval = |x: &[f64], evaluations: &mut usize| -> f64 {
        *evaluations += 1;
        let f = objective(x);
        if f.is_nan() {
            f64::INFINITY
        } else {
            f
        }
    };

    let mut vertices: Vec<(Vec<f64>, f64)> = initial_simplex(x0)
        .into_iter()
        .map(|v| {
            let f = eval(&v, &mut evaluations);
            (v, f)
        })
        .collect();
    if vertices.iter().all(|(_, f)| !f.is_finite()) {
        return Err(Error::InvalidInput(
            "objective is non-finite at every vertex of the initial simplex".into(),
        ));
    }
    sort(&mut vertices);
    let mut history = vec![vertices[0].clone()];
    let mut iterations = 0;
    let mut converged = false;

    loop {
        if within_tolerance(&vertices, settings) {
            converged = true;
            break;
        }
        if evaluations >= max_evals {
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..p)
            .map(|j| vertices[..p].iter().map(|(v, _)| v[j]).sum::<f64>() / p as f64)
            .collect();
        let worst = vertices[p].0.clone();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(REFLECT);
        let fr = eval(&xr, &mut evaluations);
        let mut shrink = false;
        if fr < vertices[0].1 {
            let xe = along(REFLECT * EXPAND);
            let fe = eval(&xe, &mut evaluations);
            vertices[p] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < vertices[p - 1].1 {
            vertices[p] = (xr, fr);
        } else if fr < vertices[p].1 {
            let xc = along(REFLECT * CONTRACT);
            let fc = eval(&xc, &mut evaluations);
            if fc <= fr {
                vertices[p] = (xc, fc);
            } else {
                shrink = true;
            }
        } else {
            let xcc = along(-CONTRACT);
            let fcc = eval(&xcc, &mut evaluations);
            if fcc < vertices[p].1 {
                vertices[p] = (xcc, fcc);
            } else {
                shrink = true;
            }
        }
        if shrink {
            let best = vertices[0].0.clone();
            for vertex in vertices.iter_mut().skip(1) {
                let v: Vec<f64> = best
                    .iter()
                    .zip(&vertex.0)
                    .map(|(b, x)| b + SHRINK * (x - b))
                    .collect();
                let f = eval(&v, &mut evaluations);
                *vertex = (v, f);
            }
        }
        sort(&mut vertices);
        history.push(vertices[0].clone());
    }

    let (x, f) = vertices[0].clone();
    Ok(NelderMeadResult {
        x,
        f,
        evaluations,
        iterations,
        converged,
        history,
    })
}

fn sort(vertices: &mut [(Vec<f64>, f64)]) {
    vertices.sort_by(|a, b| a.1.total_cmp(&b.1));
}

fn within_tolerance(vertices: &[(Vec<f64>, f64)], settings: &NelderMeadSettings) -> bool {
    let (best, fbest) = &vertices[0];
    let mut dx: f64 = 0.0;
    let mut df: f64 = 0.0;
    for (v, f) in &vertices[1..] {
        for (a, b) in v.iter().zip(best) {
            dx = dx.max((a - b).abs());
        }
        df = df.max(if f == fbest { 0.0 } else { (f - fbest).abs() });
    }
    dx <= settings.tol_x && df <= settings.tol_f
}

/// Bound handling for a gain objective.
///
/// The raw objective is evaluated at the projection of `g` onto the bounds
/// and `mu ||g - proj(g)||^2` is added, with `mu = 1e6 * raw(proj(x0))`.
/// `None` from the raw objective (an unstable model) becomes `+inf`.
pub struct FeasibilityWrap<F> {
    raw: F,
    bounds: Vec<GainBounds>,
    mu: f64,
}

impl<F> FeasibilityWrap<F>
where
    F: FnMut(&[f64]) -> Option<f64>,
{
    pub fn new(mut raw: F, bounds: Vec<GainBounds>, x0: &[f64]) -> Self {
        let projected: Vec<f64> = x0.iter().zip(&bounds).map(|(x, b)| b.project(*x)).collect();
        let f0 = raw(&projected).filter(|f| f.is_finite()).unwrap_or(1.0);
        Self {
            raw,
            bounds,
            mu: 1e6 * f0.abs().max(f64::MIN_POSITIVE),
        }
    }

    pub fn penalty_weight(&self) -> f64 {
        self.mu
    }

    pub fn project(&self, g: &[f64]) -> Vec<f64> {
        g.iter()
            .zip(&self.bounds)
            .map(|(x, b)| b.project(*x))
            .collect()
    }

    pub fn eval(&mut self, g: &[f64]) -> f64 {
        let projected = self.project(g);
        let dist2: f64 = g
            .iter()
            .zip(&projected)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        match (self.raw)(&projected) {
            Some(f) if f.is_finite() => {
                if dist2 == 0.0 {
                    f
                } else {
                    f + self.mu * dist2
                }
            }
            _ => f64::INFINITY,
        }
    }
}

/// Closure form of [`FeasibilityWrap`].
pub fn feasibility_wrap<F>(raw: F, bounds: Vec<GainBounds>, x0: &[f64]) -> impl FnMut(&[f64]) -> f64
where
    F: FnMut(&[f64]) -> Option<f64>,
{
    let mut wrap = FeasibilityWrap::new(raw, bounds, x0);
    move |g: &[f64]| wrap.eval(g)
}
