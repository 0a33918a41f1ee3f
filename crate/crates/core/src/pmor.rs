//! Parametric reduction over gain samples and the two optimization loops.
//!
//! Per-sample sym2IRKA bases are concatenated and orthonormalized into one
//! aggregate basis; the projected model, with the gains left free, is the
//! surrogate that Nelder-Mead minimizes. Each sym2IRKA run starts from the
//! final shifts of the previous one.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::h2norm::FullOrderOracle;
use crate::kernels::{orth, DenseMatrix};
use crate::modalsolve::ModalSystem;
use crate::model::{GainVector, SecondOrderSystem};
use crate::optimizer::{nelder_mead, FeasibilityWrap, NelderMeadSettings};
use crate::sym2irka::{
    initial_interpolation, project, sym2irka, ReducedModel, Sym2IrkaOutput, Sym2IrkaSettings,
    BASIS_TOL,
};

/// Default cap on outer iterations of the adaptive loop.
pub const DEFAULT_MAX_OUTER: usize = 15;

/// One sampled gain and the width of the basis it contributed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contributor {
    pub gains: Vec<f64>,
    pub width: usize,
}

/// Orthonormalized union of per-sample bases.
#[derive(Debug, Clone)]
pub struct AggregateBasis {
    x: DenseMatrix,
    contributors: Vec<Contributor>,
    tol: f64,
}

impl AggregateBasis {
    pub fn x(&self) -> &DenseMatrix {
        &self.x
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn contributors(&self) -> &[Contributor] {
        &self.contributors
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Augment with another sample's basis.
    pub fn push(&mut self, g: &GainVector, basis: &DenseMatrix) -> Result<()> {
        if basis.nrows() != self.x.nrows() {
            return Err(Error::InvalidDimension(format!(
                "basis has {} rows, aggregate has {}",
                basis.nrows(),
                self.x.nrows()
            )));
        }
        let mut joined = DenseMatrix::zeros(self.x.nrows(), self.x.ncols() + basis.ncols());
        joined.columns_mut(0, self.x.ncols()).copy_from(&self.x);
        joined
            .columns_mut(self.x.ncols(), basis.ncols())
            .copy_from(basis);
        self.x = orth(&joined, self.tol)?;
        self.contributors.push(Contributor {
            gains: g.as_slice().to_vec(),
            width: basis.ncols(),
        });
        Ok(())
    }
}

/// `orth([V_1, ..., V_m])` with contributor bookkeeping.
pub fn aggregate(bases: &[(GainVector, DenseMatrix)], tol: f64) -> Result<AggregateBasis> {
    let (first_g, first) = bases
        .first()
        .ok_or_else(|| Error::InvalidInput("cannot aggregate an empty list of bases".into()))?;
    let mut agg = AggregateBasis {
        x: orth(first, tol)?,
        contributors: vec![Contributor {
            gains: first_g.as_slice().to_vec(),
            width: first.ncols(),
        }],
        tol,
    };
    for (g, v) in &bases[1..] {
        agg.push(g, v)?;
    }
    Ok(agg)
}

/// How gain samples are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    Predetermined,
    Adaptive,
}

impl std::str::FromStr for SamplingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "predetermined" => Ok(SamplingMode::Predetermined),
            "adaptive" => Ok(SamplingMode::Adaptive),
            other => Err(Error::InvalidInput(format!(
                "unknown sampling mode {other:?} (expected predetermined or adaptive)"
            ))),
        }
    }
}

/// Settings shared by both loops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmorSettings {
    pub r: usize,
    pub sym2irka: Sym2IrkaSettings,
    pub optimizer: NelderMeadSettings,
    /// Optimizer start point.
    pub x0: Vec<f64>,
    /// Adaptive stopping threshold on the max-norm of consecutive gains.
    pub tol_diff: f64,
    pub max_outer: usize,
    pub orth_tol: f64,
}

impl PmorSettings {
    pub fn new(r: usize, x0: Vec<f64>) -> Self {
        Self {
            r,
            sym2irka: Sym2IrkaSettings::default(),
            optimizer: NelderMeadSettings::default(),
            x0,
            tol_diff: 1e-3,
            max_outer: DEFAULT_MAX_OUTER,
            orth_tol: BASIS_TOL,
        }
    }
}

/// Summary of one sym2IRKA run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRun {
    pub gains: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub width: usize,
}

/// Wall-clock seconds per phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub offline: f64,
    pub sampling: f64,
    pub optimizer: f64,
    pub total: f64,
}

/// Everything a caller needs to judge a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationReport {
    pub mode: SamplingMode,
    pub strategy: String,
    pub r: usize,
    pub gains: Vec<f64>,
    pub surrogate_h2: f64,
    pub full_h2: Option<f64>,
    /// Sampled gains in the order they entered the aggregate basis.
    pub samples: Vec<Vec<f64>>,
    /// Per-outer-iteration surrogate optima (one entry in predetermined mode).
    pub iterates: Vec<Vec<f64>>,
    pub iterate_values: Vec<f64>,
    pub sym2irka_runs: Vec<SampleRun>,
    pub sym2irka_iterations: usize,
    pub optimizer_evaluations: usize,
    pub outer_iterations: usize,
    pub converged: bool,
    pub reduced_dim: usize,
    /// Norm used for the tolDiff test.
    pub tol_diff_norm: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timings: Option<Timings>,
}

/// Report plus the objects behind it.
#[derive(Debug, Clone)]
pub struct PmorRun {
    pub report: OptimizationReport,
    pub aggregate: AggregateBasis,
    pub surrogate: ReducedModel,
    /// One entry per surrogate optimization, in order.
    pub searches: Vec<SurrogateSearch>,
}

/// A surrogate and the best-so-far history of the optimization run on it.
#[derive(Debug, Clone)]
pub struct SurrogateSearch {
    pub model: ReducedModel,
    /// Raw simplex vertices; the objective was evaluated at their projection.
    pub history: Vec<(Vec<f64>, f64)>,
}

struct SurrogateOptimum {
    gains: Vec<f64>,
    value: f64,
    evaluations: usize,
    history: Vec<(Vec<f64>, f64)>,
}

fn surrogate_objective(rm: &ReducedModel) -> impl FnMut(&[f64]) -> Option<f64> + '_ {
    move |g: &[f64]| {
        rm.h2(&GainVector::unchecked(g.to_vec()))
            .ok()
            .filter(|v| v.stable)
            .map(|v| v.value)
    }
}

/// Minimize the surrogate H2 norm from `x0` under the gain bounds.
fn optimize_surrogate(
    rm: &ReducedModel,
    ms: &ModalSystem,
    settings: &PmorSettings,
) -> Result<SurrogateOptimum> {
    let mut wrap = FeasibilityWrap::new(
        surrogate_objective(rm),
        ms.gain_bounds().to_vec(),
        &settings.x0,
    );
    let res = nelder_mead(|g| wrap.eval(g), &settings.x0, &settings.optimizer)?;
    let gains = wrap.project(&res.x);
    let value = rm.h2(&GainVector::unchecked(gains.clone()))?.value;
    Ok(SurrogateOptimum {
        gains,
        value,
        evaluations: res.evaluations,
        history: res.history,
    })
}

fn check_settings(ms: &ModalSystem, settings: &PmorSettings) -> Result<()> {
    if settings.x0.len() != ms.num_gains() {
        return Err(Error::InvalidGain(format!(
            "start point has {} entries, system has {} gains",
            settings.x0.len(),
            ms.num_gains()
        )));
    }
    if settings.r == 0 || !settings.r.is_multiple_of(2) || settings.r > ms.n() {
        return Err(Error::InvalidInput(format!(
            "r = {} must be even and in 2..={}",
            settings.r,
            ms.n()
        )));
    }
    Ok(())
}

fn check_sample(ms: &ModalSystem, g: &GainVector) -> Result<()> {
    if g.len() != ms.num_gains() {
        return Err(Error::InvalidGain(format!(
            "sample has {} entries, system has {} gains",
            g.len(),
            ms.num_gains()
        )));
    }
    for (x, b) in g.as_slice().iter().zip(ms.gain_bounds()) {
        if !b.contains(*x) {
            return Err(Error::InvalidGain(format!(
                "sample gain {x} outside [{}, {}]",
                b.lower, b.upper
            )));
        }
    }
    Ok(())
}

/// Runs sym2IRKA over a sequence of samples with shift recycling.
struct Sampler<'a> {
    ms: &'a ModalSystem,
    settings: &'a PmorSettings,
    offline: Option<Sym2IrkaOutput>,
    last: Sym2IrkaOutput,
    runs: Vec<SampleRun>,
    sampling_time: f64,
}

impl<'a> Sampler<'a> {
    fn new(ms: &'a ModalSystem, settings: &'a PmorSettings) -> Result<(Self, f64)> {
        let t = Instant::now();
        let offline = initial_interpolation(ms, settings.r, &settings.sym2irka)?;
        let elapsed = t.elapsed().as_secs_f64();
        log::info!(
            "off-line phase: {} iterations, converged = {}, width {}",
            offline.iterations,
            offline.converged,
            offline.basis.ncols()
        );
        Ok((
            Self {
                ms,
                settings,
                last: offline.clone(),
                offline: Some(offline),
                runs: Vec::new(),
                sampling_time: 0.0,
            },
            elapsed,
        ))
    }

    fn sample(&mut self, g: &GainVector) -> Result<DenseMatrix> {
        let t = Instant::now();
        let out = match self.offline.take() {
            Some(off) if g.is_zero() => off,
            other => {
                self.offline = other;
                sym2irka(
                    self.ms,
                    g,
                    self.settings.r,
                    &self.settings.sym2irka,
                    &self.last.next_interp,
                )?
            }
        };
        self.sampling_time += t.elapsed().as_secs_f64();
        log::info!(
            "sample {:?}: {} iterations, converged = {}, width {}",
            g.as_slice(),
            out.iterations,
            out.converged,
            out.basis.ncols()
        );
        self.runs.push(SampleRun {
            gains: g.as_slice().to_vec(),
            iterations: out.iterations,
            converged: out.converged,
            width: out.basis.ncols(),
        });
        let basis = out.basis.clone();
        self.last = out;
        Ok(basis)
    }

    fn total_iterations(&self) -> usize {
        self.runs.iter().map(|r| r.iterations).sum()
    }
}

/// Aggregated surrogate built from a fixed sample list.
#[derive(Debug, Clone)]
pub struct Surrogate {
    pub aggregate: AggregateBasis,
    pub model: ReducedModel,
    pub runs: Vec<SampleRun>,
    pub offline_seconds: f64,
    pub sampling_seconds: f64,
}

/// Sample, aggregate and project. Samples whose sym2IRKA run fails are
/// dropped; the call fails only when none succeeds.
pub fn build_surrogate(
    ms: &ModalSystem,
    samples: &[GainVector],
    settings: &PmorSettings,
) -> Result<Surrogate> {
    check_settings(ms, settings)?;
    if samples.is_empty() {
        return Err(Error::InvalidInput(
            "predetermined sampling needs at least one sample".into(),
        ));
    }
    for g in samples {
        check_sample(ms, g)?;
    }
    let (mut sampler, offline_seconds) = Sampler::new(ms, settings)?;
    let mut bases = Vec::with_capacity(samples.len());
    let mut last_err = None;
    for g in samples {
        match sampler.sample(g) {
            Ok(v) => bases.push((g.clone(), v)),
            Err(e) => {
                log::warn!("sample {:?} dropped: {e}", g.as_slice());
                last_err = Some(e);
            }
        }
    }
    if bases.is_empty() {
        return Err(
            last_err.unwrap_or_else(|| Error::NonConvergence("no sample produced a basis".into()))
        );
    }
    let aggregate = aggregate(&bases, settings.orth_tol)?;
    let model = project(ms, aggregate.x())?;
    Ok(Surrogate {
        aggregate,
        model,
        runs: sampler.runs,
        offline_seconds,
        sampling_seconds: sampler.sampling_time,
    })
}

/// Predetermined sampling: sample, aggregate, optimize once.
pub fn optimize_predetermined(
    ms: &ModalSystem,
    samples: &[GainVector],
    settings: &PmorSettings,
) -> Result<PmorRun> {
    let start = Instant::now();
    let Surrogate {
        aggregate: agg,
        model: rm,
        runs,
        offline_seconds,
        sampling_seconds,
    } = build_surrogate(ms, samples, settings)?;

    let t = Instant::now();
    let opt = optimize_surrogate(&rm, ms, settings)?;
    let optimizer_time = t.elapsed().as_secs_f64();

    let report = OptimizationReport {
        mode: SamplingMode::Predetermined,
        strategy: settings.sym2irka.strategy.letter().into(),
        r: settings.r,
        gains: opt.gains.clone(),
        surrogate_h2: opt.value,
        full_h2: None,
        samples: samples.iter().map(|g| g.as_slice().to_vec()).collect(),
        iterates: vec![opt.gains.clone()],
        iterate_values: vec![opt.value],
        sym2irka_iterations: runs.iter().map(|r| r.iterations).sum(),
        sym2irka_runs: runs,
        optimizer_evaluations: opt.evaluations,
        outer_iterations: 1,
        converged: true,
        reduced_dim: agg.dim(),
        tol_diff_norm: "max".into(),
        timings: Some(Timings {
            offline: offline_seconds,
            sampling: sampling_seconds,
            optimizer: optimizer_time,
            total: start.elapsed().as_secs_f64(),
        }),
    };
    Ok(PmorRun {
        report,
        aggregate: agg,
        surrogate: rm.clone(),
        searches: vec![SurrogateSearch {
            model: rm,
            history: opt.history,
        }],
    })
}

fn max_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Adaptive sampling: alternate surrogate optimization and sampling at the
/// surrogate optimum until consecutive optima agree to `tol_diff`.
///
/// `warm_start` samples join `g0` in the initial subspace. When the outer
/// cap is hit, the report is flagged unconverged and carries the iterate
/// that is best on the final surrogate.
pub fn optimize_adaptive(
    ms: &ModalSystem,
    g0: &GainVector,
    warm_start: &[GainVector],
    settings: &PmorSettings,
) -> Result<PmorRun> {
    let start = Instant::now();
    check_settings(ms, settings)?;
    check_sample(ms, g0)?;
    for g in warm_start {
        check_sample(ms, g)?;
    }
    if settings.max_outer == 0 {
        return Err(Error::InvalidInput(
            "the adaptive loop needs at least one outer iteration".into(),
        ));
    }
    let (mut sampler, offline_time) = Sampler::new(ms, settings)?;
    let mut samples = vec![g0.clone()];
    samples.extend(warm_start.iter().cloned());
    let mut bases = Vec::with_capacity(samples.len());
    for g in &samples {
        bases.push((g.clone(), sampler.sample(g)?));
    }
    let mut agg = aggregate(&bases, settings.orth_tol)?;
    let mut rm = project(ms, agg.x())?;

    let mut optimizer_time = 0.0;
    let mut evaluations = 0;
    let mut iterates: Vec<Vec<f64>> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut searches = Vec::new();
    for outer in 1..=settings.max_outer {
        let t = Instant::now();
        let opt = optimize_surrogate(&rm, ms, settings)?;
        optimizer_time += t.elapsed().as_secs_f64();
        evaluations += opt.evaluations;
        searches.push(SurrogateSearch {
            model: rm.clone(),
            history: opt.history,
        });
        log::info!(
            "outer iteration {outer}: gains {:?}, surrogate H2 {:.6e}",
            opt.gains,
            opt.value
        );
        let done = iterates
            .last()
            .is_some_and(|prev| max_norm_diff(prev, &opt.gains) < settings.tol_diff);
        iterates.push(opt.gains.clone());
        values.push(opt.value);
        if done {
            converged = true;
            break;
        }
        if outer == settings.max_outer {
            break;
        }
        let g = GainVector::new(opt.gains.clone())?;
        let basis = sampler.sample(&g)?;
        agg.push(&g, &basis)?;
        samples.push(g);
        rm = project(ms, agg.x())?;
    }

    let (gains, value) = if converged {
        (
            iterates.last().cloned().unwrap_or_default(),
            *values.last().unwrap_or(&f64::INFINITY),
        )
    } else {
        log::warn!(
            "adaptive loop stopped after {} outer iterations without meeting tolDiff",
            iterates.len()
        );
        let mut best = (Vec::new(), f64::INFINITY);
        for g in &iterates {
            let v = rm.h2(&GainVector::unchecked(g.clone()))?.value;
            if v < best.1 {
                best = (g.clone(), v);
            }
        }
        best
    };

    let report = OptimizationReport {
        mode: SamplingMode::Adaptive,
        strategy: settings.sym2irka.strategy.letter().into(),
        r: settings.r,
        gains,
        surrogate_h2: value,
        full_h2: None,
        samples: samples.iter().map(|g| g.as_slice().to_vec()).collect(),
        outer_iterations: iterates.len(),
        iterates,
        iterate_values: values,
        sym2irka_iterations: sampler.total_iterations(),
        sym2irka_runs: sampler.runs.clone(),
        optimizer_evaluations: evaluations,
        converged,
        reduced_dim: agg.dim(),
        tol_diff_norm: "max".into(),
        timings: Some(Timings {
            offline: offline_time,
            sampling: sampler.sampling_time,
            optimizer: optimizer_time,
            total: start.elapsed().as_secs_f64(),
        }),
    };
    Ok(PmorRun {
        report,
        aggregate: agg,
        surrogate: rm,
        searches,
    })
}

/// Result of minimizing the full-order objective directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullOrderOptimum {
    pub gains: Vec<f64>,
    pub h2: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Minimize the dense full-order H2 norm with the same optimizer protocol
/// as the surrogate path. Only feasible below the oracle cap.
pub fn optimize_full_order(
    sys: &SecondOrderSystem,
    x0: &[f64],
    settings: &NelderMeadSettings,
    cap: usize,
) -> Result<FullOrderOptimum> {
    let oracle = FullOrderOracle::with_cap(sys, cap)?;
    let raw = |g: &[f64]| {
        oracle
            .evaluate(&GainVector::unchecked(g.to_vec()))
            .ok()
            .filter(|v| v.stable)
            .map(|v| v.value)
    };
    let mut wrap = FeasibilityWrap::new(raw, sys.gain_bounds().to_vec(), x0);
    let res = nelder_mead(|g| wrap.eval(g), x0, settings)?;
    let gains = wrap.project(&res.x);
    let h2 = oracle
        .evaluate(&GainVector::unchecked(gains.clone()))?
        .value;
    Ok(FullOrderOptimum {
        gains,
        h2,
        evaluations: res.evaluations,
        converged: res.converged,
    })
}

/// The candidate with the largest `| ||F|| - ||F_r|| |`, using the dense
/// full-order oracle (refused above `cap`).
pub fn greedy_deviation(
    sys: &SecondOrderSystem,
    surrogate: &ReducedModel,
    candidates: &[GainVector],
    cap: usize,
) -> Result<(GainVector, f64)> {
    let oracle = FullOrderOracle::with_cap(sys, cap)?;
    let mut best: Option<(GainVector, f64)> = None;
    for g in candidates {
        let full = oracle.evaluate(g)?.value;
        let red = surrogate.h2(g)?.value;
        let dev = (full - red).abs();
        if best.as_ref().is_none_or(|(_, d)| dev > *d) {
            best = Some((g.clone(), dev));
        }
    }
    best.ok_or_else(|| Error::InvalidInput("no candidate gains supplied".into()))
}
