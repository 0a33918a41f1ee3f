//! Run configuration: presets, TOML overlays and validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::h2norm::DEFAULT_ORACLE_CAP;
use crate::model::{
    build_example1, build_example2, example1_grid, example2_grid, read_model, GainVector,
    SecondOrderSystem, EXAMPLE1_PAPER_N, EXAMPLE2_PAPER_D,
};
use crate::optimizer::NelderMeadSettings;
use crate::pmor::{PmorSettings, SamplingMode, DEFAULT_MAX_OUTER};
use crate::sym2irka::{Strategy, Sym2IrkaSettings, BASIS_TOL};

pub const CONFIG_ENV: &str = "H2DAMP_CONFIG";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExampleId {
    Ex1,
    Ex2,
    Files,
}

impl std::str::FromStr for ExampleId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ex1" | "example1" => Ok(ExampleId::Ex1),
            "ex2" | "example2" => Ok(ExampleId::Ex2),
            "files" => Ok(ExampleId::Files),
            other => Err(Error::InvalidInput(format!(
                "unknown example {other:?} (expected ex1, ex2 or files)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub example: ExampleId,
    /// `n` for example 1, `d` for example 2 (`n = 2d + 1`).
    pub size: usize,
    pub alpha_c: f64,
    pub j: usize,
    pub k: usize,
    /// Model directory when `example = "files"`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReductionConfig {
    pub strategy: Strategy,
    pub r: usize,
    pub it_max: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub mode: SamplingMode,
    /// Predetermined gain samples.
    pub samples: Vec<Vec<f64>>,
    /// First adaptive sample.
    pub g0: Vec<f64>,
    /// Extra samples in the initial adaptive subspace.
    pub warm_start: Vec<Vec<f64>>,
    pub tol_diff: f64,
    pub max_outer: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub tol_x: f64,
    pub tol_f: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub max_evals: Option<usize>,
    pub x0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub enabled: bool,
    pub cap: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Explicit `(j, k)` pairs; empty means the example's scaled grid.
    pub grid: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub json: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub csv: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Reserved; nothing in the default pipeline is randomized.
    pub seed: u64,
    pub model: ModelConfig,
    pub reduction: ReductionConfig,
    pub sampling: SamplingConfig,
    pub optimizer: OptimizerConfig,
    pub oracle: OracleConfig,
    pub sweep: SweepConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Ex1Paper,
    Ex1Desk,
    Ex2Paper,
    Ex2Desk,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::Ex1Paper,
        Preset::Ex1Desk,
        Preset::Ex2Paper,
        Preset::Ex2Desk,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Ex1Paper => "ex1-paper",
            Preset::Ex1Desk => "ex1-desk",
            Preset::Ex2Paper => "ex2-paper",
            Preset::Ex2Desk => "ex2-desk",
        }
    }

    pub fn config(self) -> RunConfig {
        match self {
            Preset::Ex1Paper => example1_preset(EXAMPLE1_PAPER_N, 60, false),
            Preset::Ex1Desk => example1_preset(300, 20, true),
            Preset::Ex2Paper => example2_preset(EXAMPLE2_PAPER_D, 120, false),
            Preset::Ex2Desk => example2_preset(150, 24, true),
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown preset {s:?}")))
    }
}

fn example1_preset(n: usize, r: usize, oracle: bool) -> RunConfig {
    let (j, k) = example1_grid(n)[0];
    RunConfig {
        seed: 0,
        model: ModelConfig {
            example: ExampleId::Ex1,
            size: n,
            alpha_c: 0.005,
            j,
            k,
            dir: None,
        },
        reduction: ReductionConfig {
            strategy: Strategy::DomPoles,
            r,
            it_max: 40,
            tol: 1e-3,
        },
        sampling: SamplingConfig {
            mode: SamplingMode::Adaptive,
            samples: vec![
                vec![0.0, 0.0],
                vec![1000.0, 1000.0],
                vec![100.0, 1000.0],
                vec![1000.0, 100.0],
            ],
            g0: vec![0.0, 0.0],
            warm_start: Vec::new(),
            tol_diff: 1e-3,
            max_outer: DEFAULT_MAX_OUTER,
        },
        optimizer: OptimizerConfig {
            tol_x: 1e-4,
            tol_f: 1e-4,
            max_evals: None,
            x0: vec![1000.0, 1000.0],
        },
        oracle: OracleConfig {
            enabled: oracle,
            cap: DEFAULT_ORACLE_CAP,
        },
        sweep: SweepConfig { grid: Vec::new() },
        output: OutputConfig::default(),
    }
}

fn example2_preset(d: usize, r: usize, oracle: bool) -> RunConfig {
    let (j, k) = example2_grid(d)[0];
    RunConfig {
        seed: 0,
        model: ModelConfig {
            example: ExampleId::Ex2,
            size: d,
            alpha_c: 0.003,
            j,
            k,
            dir: None,
        },
        reduction: ReductionConfig {
            strategy: Strategy::DomPoles,
            r,
            it_max: 40,
            tol: 1e-3,
        },
        sampling: SamplingConfig {
            mode: SamplingMode::Adaptive,
            samples: vec![
                vec![0.0; 4],
                vec![1000.0; 4],
                vec![1000.0, 1000.0, 4000.0, 4000.0],
                vec![4000.0, 4000.0, 1000.0, 1000.0],
                vec![4000.0, 500.0, 4000.0, 500.0],
            ],
            g0: vec![0.0; 4],
            warm_start: vec![vec![1000.0; 4]],
            tol_diff: 0.05,
            max_outer: DEFAULT_MAX_OUTER,
        },
        optimizer: OptimizerConfig {
            tol_x: 5e-4,
            tol_f: 5e-4,
            max_evals: None,
            x0: vec![1000.0; 4],
        },
        oracle: OracleConfig {
            enabled: oracle,
            cap: DEFAULT_ORACLE_CAP,
        },
        sweep: SweepConfig { grid: Vec::new() },
        output: OutputConfig::default(),
    }
}

fn merge(base: &mut toml::Value, overlay: toml::Value) {
    match (base, overlay) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (key, value) in o {
                match b.get_mut(&key) {
                    Some(slot) => merge(slot, value),
                    None => {
                        b.insert(key, value);
                    }
                }
            }
        }
        (slot, value) => *slot = value,
    }
}

impl RunConfig {
    /// Overlay a TOML document on this configuration. Keys absent from the
    /// document keep their current values.
    pub fn overlay_toml(&self, text: &str, origin: &Path) -> Result<RunConfig> {
        let parse_err = |message: String| Error::Parse {
            path: origin.to_path_buf(),
            message,
        };
        let overlay: toml::Value = toml::from_str(text).map_err(|e| parse_err(e.to_string()))?;
        let mut base = toml::Value::try_from(self).map_err(|e| parse_err(e.to_string()))?;
        merge(&mut base, overlay);
        base.try_into()
            .map_err(|e: toml::de::Error| parse_err(e.to_string()))
    }

    pub fn overlay_file(&self, path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        self.overlay_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }

    /// Number of gains implied by the model choice, when known without I/O.
    fn num_gains_hint(&self) -> Option<usize> {
        match self.model.example {
            ExampleId::Ex1 => Some(2),
            ExampleId::Ex2 => Some(4),
            ExampleId::Files => None,
        }
    }

    /// Check every field that can be checked before building the model.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        let m = &self.model;
        if !(0.0..1.0).contains(&m.alpha_c) || m.alpha_c <= 0.0 {
            return bad(format!("alpha_c = {} must lie in (0, 1)", m.alpha_c));
        }
        match m.example {
            ExampleId::Ex1 => {
                if m.size < 4 {
                    return bad(format!("example 1 needs n >= 4, got {}", m.size));
                }
                if m.j == 0 || m.j + 1 >= m.k || m.k + 1 > m.size {
                    return bad(format!(
                        "damper indices need 1 <= j, j + 1 < k, k + 1 <= n; got j = {}, k = {}",
                        m.j, m.k
                    ));
                }
            }
            ExampleId::Ex2 => {
                if m.size < 30 {
                    return bad(format!("example 2 needs d >= 30, got {}", m.size));
                }
                if m.j == 0 || m.j + 25 > m.size || m.k <= m.size || m.k + 25 > 2 * m.size {
                    return bad(format!(
                        "damper indices need 1 <= j <= d - 25 and d < k <= 2d - 25; got j = {}, k = {}",
                        m.j, m.k
                    ));
                }
            }
            ExampleId::Files => {
                if m.dir.is_none() {
                    return bad("example = \"files\" needs model.dir".into());
                }
            }
        }
        let red = &self.reduction;
        if red.r == 0 || !red.r.is_multiple_of(2) {
            return bad(format!("r = {} must be a positive even number", red.r));
        }
        if red.it_max == 0 {
            return bad("it_max must be positive".into());
        }
        if !(red.tol > 0.0) {
            return bad(format!("sym2IRKA tolerance {} must be positive", red.tol));
        }
        let s = &self.sampling;
        if !(s.tol_diff > 0.0) {
            return bad(format!("tol_diff = {} must be positive", s.tol_diff));
        }
        if s.max_outer == 0 {
            return bad("max_outer must be positive".into());
        }
        if s.samples.is_empty() {
            return bad("at least one predetermined sample is required".into());
        }
        let o = &self.optimizer;
        if !(o.tol_x > 0.0 && o.tol_f > 0.0) {
            return bad("optimizer tolerances must be positive".into());
        }
        if o.max_evals == Some(0) {
            return bad("max_evals must be positive".into());
        }
        if self.oracle.cap == 0 {
            return bad("oracle cap must be positive".into());
        }
        if let Some(p) = self.num_gains_hint() {
            self.check_gain_lengths(p)?;
        }
        for &(j, k) in &self.sweep.grid {
            let mut row = self.clone();
            row.model.j = j;
            row.model.k = k;
            row.sweep.grid.clear();
            row.validate()?;
        }
        Ok(())
    }

    /// Check every gain vector against the model's gain count and bounds.
    pub fn check_gain_lengths(&self, p: usize) -> Result<()> {
        let s = &self.sampling;
        let named = std::iter::once(("x0", &self.optimizer.x0))
            .chain(std::iter::once(("g0", &s.g0)))
            .chain(s.samples.iter().map(|g| ("sample", g)))
            .chain(s.warm_start.iter().map(|g| ("warm_start", g)));
        for (what, g) in named {
            if g.len() != p {
                return Err(Error::InvalidGain(format!(
                    "{what} {g:?} has {} entries, model has {p} gains",
                    g.len()
                )));
            }
            GainVector::new(g.clone())?;
        }
        Ok(())
    }

    pub fn build_model(&self) -> Result<SecondOrderSystem> {
        let m = &self.model;
        let sys = match m.example {
            ExampleId::Ex1 => build_example1(m.size, m.alpha_c, m.j, m.k)?,
            ExampleId::Ex2 => build_example2(m.size, m.alpha_c, m.j, m.k)?,
            ExampleId::Files => read_model(m.dir.as_deref().unwrap_or(Path::new(".")))?,
        };
        self.check_gain_lengths(sys.num_gains())?;
        Ok(sys)
    }

    /// Damper positions swept by `sweep`.
    pub fn sweep_grid(&self) -> Result<Vec<(usize, usize)>> {
        if !self.sweep.grid.is_empty() {
            return Ok(self.sweep.grid.clone());
        }
        match self.model.example {
            ExampleId::Ex1 => Ok(example1_grid(self.model.size)),
            ExampleId::Ex2 => Ok(example2_grid(self.model.size)),
            ExampleId::Files => Err(Error::InvalidInput(
                "a file-based model needs an explicit sweep.grid".into(),
            )),
        }
    }

    pub fn pmor_settings(&self) -> PmorSettings {
        PmorSettings {
            r: self.reduction.r,
            sym2irka: Sym2IrkaSettings {
                strategy: self.reduction.strategy,
                it_max: self.reduction.it_max,
                tol: self.reduction.tol,
            },
            optimizer: self.optimizer_settings(),
            x0: self.optimizer.x0.clone(),
            tol_diff: self.sampling.tol_diff,
            max_outer: self.sampling.max_outer,
            orth_tol: BASIS_TOL,
        }
    }

    pub fn optimizer_settings(&self) -> NelderMeadSettings {
        NelderMeadSettings {
            tol_x: self.optimizer.tol_x,
            tol_f: self.optimizer.tol_f,
            max_evals: self.optimizer.max_evals,
        }
    }
}
