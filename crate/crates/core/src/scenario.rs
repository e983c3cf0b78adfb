//! Scenario files: a TOML document describing the plant, the update logic,
//! the DoS signal and its budget, the simulation window and the Lyapunov
//! weight.
//!
//! ```toml
//! [plant]
//! A = [[0.0, 1.0], [-1.0, 0.5]]
//! B = [[0.0], [1.0]]
//! K = [[-1.0, -2.0]]
//!
//! [trigger]
//! kind = "pure_time"
//! sigma = 0.1
//! delta1 = 0.02
//!
//! [dos]
//! intervals = [[1.0, 0.3]]
//!
//! [budget]
//! kappa = 0.5
//! tau = 6.0
//!
//! [sim]
//! x0 = [1.0, 0.0]
//! horizon = 10.0
//! record_step = 0.005
//! ```
//!
//! A missing `trigger.delta2` is filled with the Riccati bound. The `dos`
//! section holds exactly one of `intervals`, `generator` or `file`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dos::{gen_greedy_adversary, gen_periodic, gen_random_budgeted, DosBudget, DosSequence};
use crate::error::{Error, Result};
use crate::matrix::{RealMatrix, Vector};
use crate::plant::{InputMode, LtiPlant};
use crate::sim::{SimConfig, DEFAULT_CROSSING_TOL};
use crate::trigger::{plant_delta2, LogicKind, Predictor, TriggerConfig, Varphi};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub plant: PlantSection,
    pub trigger: TriggerSection,
    pub dos: DosSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<BudgetSection>,
    pub sim: SimSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "K")]
    pub k: Vec<Vec<f64>>,
    #[serde(default)]
    pub input_mode: InputMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggerSection {
    pub kind: LogicKind,
    pub sigma: f64,
    pub delta1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta2: Option<f64>,
    #[serde(default)]
    pub varphi: Varphi,
    #[serde(default)]
    pub predictor: Predictor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DosGenerator {
    Periodic { onset: f64, period: f64, duty: f64 },
    Random { min_duration: f64, seed: u64 },
    /// Jams the attempts of a periodic schedule with the given period.
    Greedy { min_duration: f64, attempt_period: f64 },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DosSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intervals: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<DosGenerator>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSection {
    pub kappa: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub record_step: f64,
    #[serde(default = "default_crossing_tol")]
    pub crossing_tol: f64,
}

fn default_crossing_tol() -> f64 {
    DEFAULT_CROSSING_TOL
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<Vec<f64>>>,
}

/// A scenario turned into model objects.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: SimConfig,
    pub q: RealMatrix,
    /// Set when `delta2` was absent and filled from the Riccati bound.
    pub computed_delta2: Option<f64>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            line: e.span().map_or(0, |s| line_of(text, s.start)),
            message: e.message().to_string(),
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Input(format!("cannot serialize scenario: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Builds the simulation config. Relative DoS file paths are resolved
    /// against `base_dir`.
    pub fn resolve(&self, base_dir: Option<&Path>) -> Result<Resolved> {
        let plant = LtiPlant::new(
            RealMatrix::from_rows(&self.plant.a)?,
            RealMatrix::from_rows(&self.plant.b)?,
            RealMatrix::from_rows(&self.plant.k)?,
            self.plant.input_mode,
        )?;
        let t = &self.trigger;
        let (delta2, computed_delta2) = match t.delta2 {
            Some(d) => (d, None),
            None => {
                let d = plant_delta2(&plant, t.sigma)?;
                (d, Some(d))
            }
        };
        let mut trigger = TriggerConfig::new(t.sigma, t.delta1, delta2, t.varphi)?;
        trigger.predictor = t.predictor;

        let horizon = self.sim.horizon;
        let declared = self.budget.map(|b| DosBudget::new(b.kappa, b.tau)).transpose()?;
        let d = &self.dos;
        let sources = [d.intervals.is_some(), d.generator.is_some(), d.file.is_some()];
        if sources.iter().filter(|&&s| s).count() != 1 {
            return Err(Error::Input("dos section needs exactly one of intervals, generator, file".into()));
        }
        let need_budget = || declared.ok_or_else(|| Error::Input("a [budget] section is required".into()));
        let (dos, budget) = if let Some(iv) = &d.intervals {
            let pairs: Vec<(f64, f64)> = iv.iter().map(|p| (p[0], p[1])).collect();
            (DosSequence::from_pairs(&pairs)?, need_budget()?)
        } else if let Some(path) = &d.file {
            let full = match base_dir {
                Some(dir) if path.is_relative() => dir.join(path),
                _ => path.clone(),
            };
            let text = std::fs::read_to_string(&full)
                .map_err(|e| Error::Input(format!("cannot read DoS file {}: {e}", full.display())))?;
            let (seq, header) = DosSequence::parse_text(&text)?;
            let budget = declared.or(header).ok_or_else(|| Error::Input("no budget in scenario or DoS file".into()))?;
            (seq, budget)
        } else {
            match d.generator.as_ref().expect("checked above") {
                DosGenerator::Periodic { onset, period, duty } => {
                    let (seq, own) = gen_periodic(*onset, *period, *duty, horizon)?;
                    (seq, declared.unwrap_or(own))
                }
                DosGenerator::Random { min_duration, seed } => {
                    let b = need_budget()?;
                    (gen_random_budgeted(&b, *min_duration, *seed, horizon)?, b)
                }
                DosGenerator::Greedy { min_duration, attempt_period } => {
                    if !(*attempt_period > 0.0) {
                        return Err(Error::Input("attempt_period must be positive".into()));
                    }
                    let b = need_budget()?;
                    let n = (horizon / attempt_period).floor() as usize;
                    let times: Vec<f64> = (0..=n).map(|i| i as f64 * attempt_period).collect();
                    (gen_greedy_adversary(&b, *min_duration, &times)?, b)
                }
            }
        };

        let n = plant.state_dim();
        let q = match &self.analysis.q {
            Some(rows) => RealMatrix::from_rows(rows)?,
            None => RealMatrix::identity(n),
        };
        if q.rows() != n || q.cols() != n {
            return Err(Error::Dimension(format!("Q must be {n}x{n}")));
        }
        let config = SimConfig {
            plant,
            logic: t.kind,
            trigger,
            dos,
            budget,
            x0: Vector::from_row_slice(&self.sim.x0),
            horizon,
            record_step: self.sim.record_step,
            crossing_tol: self.sim.crossing_tol,
        };
        config.validate()?;
        Ok(Resolved { config, q, computed_delta2 })
    }
}
