//! Experiment configuration: TOML on disk, resolved into model objects.
//!
//! Every field has a default equal to the committed template
//! (`config/default.toml`), so a file only needs the keys it changes.
//! Unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::content::ContentLibrary;
use crate::delay::CacheBudgets;
use crate::error::{config_err, Error, Result};
use crate::geometry::{NetworkGeometry, RadioConfig, TierGeometry};
use crate::grid::LayerGrid;
use crate::mc::SimConfig;
use crate::optimizer::{InitialPolicy, OptimizerConfig};

/// The committed template, embedded for `ExperimentConfig::default()` checks
/// and for users who run without `--config`.
pub const DEFAULT_TEMPLATE: &str = include_str!("../config/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContentSection {
    pub file_count: usize,
    pub layer_count: usize,
    /// Size of every layer when `layer_sizes_bits` is absent.
    pub layer_size_bits: f64,
    /// Per-file, per-layer sizes; overrides `layer_size_bits`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layer_sizes_bits: Option<Vec<Vec<f64>>>,
    pub skewness: f64,
    pub plateau: f64,
}

impl Default for ContentSection {
    fn default() -> Self {
        Self {
            file_count: 20,
            layer_count: 2,
            layer_size_bits: 25e6,
            layer_sizes_bits: None,
            skewness: 1.0,
            plateau: 5.0,
        }
    }
}

/// Missing keys take the defaults of the tier they belong to.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TierSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub serving_radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pathloss: Option<f64>,
}

impl TierSection {
    fn new(density: f64, serving_radius: Option<f64>, pathloss: f64) -> Self {
        Self {
            density: Some(density),
            serving_radius,
            pathloss: Some(pathloss),
        }
    }

    fn fill_from(&mut self, defaults: &TierSection) {
        self.density = self.density.or(defaults.density);
        self.serving_radius = self.serving_radius.or(defaults.serving_radius);
        self.pathloss = self.pathloss.or(defaults.pathloss);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TiersSection {
    pub d2d: TierSection,
    pub sbs: TierSection,
    pub mbs: TierSection,
}

impl Default for TiersSection {
    fn default() -> Self {
        Self {
            d2d: TierSection::new(0.01, Some(20.0), 4.0),
            sbs: TierSection::new(0.001, Some(60.0), 4.0),
            mbs: TierSection::new(1e-5, None, 4.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioSection {
    pub sir_threshold_db: f64,
    pub bandwidth_d2d_hz: f64,
    pub bandwidth_sbs_hz: f64,
    pub bandwidth_mbs_hz: f64,
    pub backhaul_bps: f64,
}

impl Default for RadioSection {
    fn default() -> Self {
        Self {
            sir_threshold_db: 5.0,
            bandwidth_d2d_hz: 20e6,
            bandwidth_sbs_hz: 20e6,
            bandwidth_mbs_hz: 10e6,
            backhaul_bps: 5e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetsSection {
    pub d2d_bits: f64,
    pub sbs_bits: f64,
}

impl Default for BudgetsSection {
    fn default() -> Self {
        Self {
            d2d_bits: 200e6,
            sbs_bits: 500e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub trials: usize,
    pub window_multiplier: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mbs_window_radius: Option<f64>,
    pub master_seed: u64,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            trials: crate::mc::DEFAULT_TRIALS,
            window_multiplier: crate::mc::DEFAULT_WINDOW_MULTIPLIER,
            mbs_window_radius: None,
            master_seed: 20_240_521,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialPolicyName {
    Mpcp,
    Epcp,
    Icp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    pub max_iterations: usize,
    pub convergence_tol: f64,
    pub fd_step: f64,
    pub bisection_tol: f64,
    pub initial_policy: InitialPolicyName,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let d = OptimizerConfig::<f64>::default();
        Self {
            max_iterations: d.max_iterations,
            convergence_tol: d.convergence_tol,
            fd_step: d.fd_step,
            bisection_tol: d.bisection_tol,
            initial_policy: InitialPolicyName::Mpcp,
        }
    }
}

/// Variables a sweep can step through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVar {
    /// SIR threshold in dB.
    ThetaDb,
    /// D2D cache size in bits.
    MD,
    /// SBS cache size in bits.
    MS,
    Skewness,
    Plateau,
    /// Backhaul rate in bit/s.
    BackhaulRate,
    /// Caching probability (validation and delay-surface grids).
    P,
}

impl SweepVar {
    pub const ALL: [SweepVar; 7] = [
        SweepVar::ThetaDb,
        SweepVar::MD,
        SweepVar::MS,
        SweepVar::Skewness,
        SweepVar::Plateau,
        SweepVar::BackhaulRate,
        SweepVar::P,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepVar::ThetaDb => "theta_db",
            SweepVar::MD => "m_d",
            SweepVar::MS => "m_s",
            SweepVar::Skewness => "skewness",
            SweepVar::Plateau => "plateau",
            SweepVar::BackhaulRate => "backhaul_rate",
            SweepVar::P => "p",
        }
    }
}

impl fmt::Display for SweepVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepVar {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                let known: Vec<_> = Self::ALL.iter().map(|v| v.name()).collect();
                config_err(format!(
                    "unknown sweep variable `{s}` (known: {})",
                    known.join(", ")
                ))
            })
    }
}

/// `steps` evenly spaced values from `start` to `stop` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub variable: SweepVar,
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

impl SweepSpec {
    pub fn new(variable: SweepVar, start: f64, stop: f64, steps: usize) -> Result<Self> {
        let spec = Self {
            variable,
            start,
            stop,
            steps,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(config_err("sweep.steps must be >= 1"));
        }
        if !(self.start.is_finite() && self.stop.is_finite()) {
            return Err(config_err("sweep bounds must be finite"));
        }
        if self.steps == 1 && self.start != self.stop {
            return Err(config_err("a one-step sweep needs start == stop"));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.start];
        }
        let span = self.stop - self.start;
        let last = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|k| {
                if k == self.steps - 1 {
                    self.stop
                } else {
                    self.start + span * k as f64 / last
                }
            })
            .collect()
    }
}

impl FromStr for SweepSpec {
    type Err = Error;

    /// `VAR=start:stop:steps`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            config_err(format!(
                "sweep `{s}` is not of the form VAR=start:stop:steps"
            ))
        };
        let (var, range) = s.split_once('=').ok_or_else(bad)?;
        let parts: Vec<&str> = range.split(':').collect();
        let [start, stop, steps] = parts.as_slice() else {
            return Err(bad());
        };
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
        let steps = steps.trim().parse::<usize>().map_err(|_| bad())?;
        Self::new(var.trim().parse()?, num(start)?, num(stop)?, steps)
    }
}

impl fmt::Display for SweepSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}={}:{}:{}",
            self.variable, self.start, self.stop, self.steps
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub content: ContentSection,
    pub tiers: TiersSection,
    pub radio: RadioSection,
    pub budgets: BudgetsSection,
    pub sim: SimSection,
    pub optimizer: OptimizerSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    pub output: OutputSection,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(config_err(format!("{name} must be > 0, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        let defaults = TiersSection::default();
        cfg.tiers.d2d.fill_from(&defaults.d2d);
        cfg.tiers.sbs.fill_from(&defaults.sbs);
        cfg.tiers.mbs.fill_from(&defaults.mbs);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => config_err(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the resolved configuration, output location excluded.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output = OutputSection::default();
        let digest = Sha256::digest(canonical.to_toml_string().as_bytes());
        format!("{digest:x}")
    }

    /// Builds every model object once, which runs all cross-field checks.
    pub fn validate(&self) -> Result<()> {
        self.library()?;
        self.network()?;
        self.radio()?;
        self.budgets()?;
        self.sim_config().validate()?;
        self.optimizer_config().validate()?;
        if let Some(s) = &self.sweep {
            s.validate()?;
        }
        Ok(())
    }

    pub fn library(&self) -> Result<ContentLibrary<f64>> {
        let c = &self.content;
        let sizes = match &c.layer_sizes_bits {
            Some(rows) => {
                let grid = LayerGrid::from_rows(rows.clone())
                    .map_err(|e| config_err(format!("content.layer_sizes_bits: {e}")))?;
                if grid.shape() != (c.file_count, c.layer_count) {
                    return Err(config_err(format!(
                        "content.layer_sizes_bits is {}x{}, but file_count x layer_count is {}x{}",
                        grid.files(),
                        grid.layers(),
                        c.file_count,
                        c.layer_count
                    )));
                }
                grid
            }
            None => {
                positive("content.layer_size_bits", c.layer_size_bits)?;
                LayerGrid::filled(c.file_count, c.layer_count, c.layer_size_bits)
            }
        };
        ContentLibrary::new(sizes, c.skewness, c.plateau)
    }

    pub fn network(&self) -> Result<NetworkGeometry<f64>> {
        let tier = |name: &str, t: &TierSection, bounded: bool| -> Result<TierGeometry<f64>> {
            let ctx = |e: Error| match e {
                Error::Config(m) | Error::Domain(m) => config_err(format!("tiers.{name}: {m}")),
                other => other,
            };
            match (bounded, t.serving_radius) {
                (true, None) => Err(config_err(format!(
                    "tiers.{name}.serving_radius is required"
                ))),
                (false, Some(_)) => Err(config_err(format!(
                    "tiers.{name}.serving_radius is not used (the macro tier is unbounded)"
                ))),
                _ => {
                    let density = t
                        .density
                        .ok_or_else(|| config_err(format!("tiers.{name}.density is required")))?;
                    let pathloss = t.pathloss.unwrap_or(4.0);
                    TierGeometry::new(density, t.serving_radius, pathloss).map_err(ctx)
                }
            }
        };
        let t = &self.tiers;
        NetworkGeometry::new(
            tier("d2d", &t.d2d, true)?,
            tier("sbs", &t.sbs, true)?,
            tier("mbs", &t.mbs, false)?,
        )
    }

    pub fn radio(&self) -> Result<RadioConfig<f64>> {
        let r = &self.radio;
        if !r.sir_threshold_db.is_finite() {
            return Err(config_err("radio.sir_threshold_db must be finite"));
        }
        RadioConfig::with_threshold_db(
            r.sir_threshold_db,
            r.bandwidth_d2d_hz,
            r.bandwidth_sbs_hz,
            r.bandwidth_mbs_hz,
            r.backhaul_bps,
        )
    }

    pub fn budgets(&self) -> Result<CacheBudgets<f64>> {
        positive("budgets.d2d_bits", self.budgets.d2d_bits)?;
        positive("budgets.sbs_bits", self.budgets.sbs_bits)?;
        CacheBudgets::new(self.budgets.d2d_bits, self.budgets.sbs_bits)
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            trials: self.sim.trials,
            window_multiplier: self.sim.window_multiplier,
            mbs_window_radius: self.sim.mbs_window_radius,
            master_seed: self.sim.master_seed,
        }
    }

    pub fn optimizer_config(&self) -> OptimizerConfig<f64> {
        let o = &self.optimizer;
        OptimizerConfig {
            max_iterations: o.max_iterations,
            convergence_tol: o.convergence_tol,
            fd_step: o.fd_step,
            bisection_tol: o.bisection_tol,
            initial: match o.initial_policy {
                InitialPolicyName::Mpcp => InitialPolicy::Mpcp,
                InitialPolicyName::Epcp => InitialPolicy::Epcp,
                InitialPolicyName::Icp => InitialPolicy::Icp {
                    seed: self.sim.master_seed,
                },
            },
        }
    }

    /// Copy with one sweep variable set. `p` is not a configuration field and
    /// is rejected here.
    pub fn with_value(&self, var: SweepVar, value: f64) -> Result<Self> {
        let mut c = self.clone();
        match var {
            SweepVar::ThetaDb => c.radio.sir_threshold_db = value,
            SweepVar::MD => c.budgets.d2d_bits = value,
            SweepVar::MS => c.budgets.sbs_bits = value,
            SweepVar::Skewness => c.content.skewness = value,
            SweepVar::Plateau => c.content.plateau = value,
            SweepVar::BackhaulRate => c.radio.backhaul_bps = value,
            SweepVar::P => {
                return Err(config_err(
                    "sweep variable `p` only applies to validate and delay-surface",
                ))
            }
        }
        c.validate()?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_equals_defaults() {
        let parsed = ExperimentConfig::from_toml_str(DEFAULT_TEMPLATE).unwrap();
        assert_eq!(parsed, ExperimentConfig::default());
        assert_eq!(parsed.hash(), ExperimentConfig::default().hash());
    }

    #[test]
    fn dotted_keys_and_partial_files() {
        let cfg = ExperimentConfig::from_toml_str(
            "content.file_count = 5\ntiers.d2d.density = 0.02\nradio.sir_threshold_db = 7.0\n",
        )
        .unwrap();
        assert_eq!(cfg.content.file_count, 5);
        assert_eq!(cfg.tiers.d2d.density, Some(0.02));
        assert_eq!(cfg.tiers.d2d.serving_radius, Some(20.0));
        assert_eq!(cfg.tiers.mbs.serving_radius, None);
        assert_eq!(cfg.budgets, BudgetsSection::default());
    }

    #[test]
    fn rejects_inconsistencies_with_field_names() {
        let cases = [
            ("content.layer_count = 1", "layer_count"),
            (
                "tiers.sbs.serving_radius = 10.0",
                "tiers.sbs.serving_radius",
            ),
            ("tiers.d2d.pathloss = 2.0", "tiers.d2d"),
            ("tiers.mbs.serving_radius = 10.0", "tiers.mbs"),
            ("radio.backhaul_bps = 0.0", "radio.backhaul_bps"),
            ("budgets.d2d_bits = -1.0", "budgets.d2d_bits"),
            ("sim.window_multiplier = 2.0", "window_multiplier"),
            ("content.bogus = 1", "bogus"),
        ];
        for (text, needle) in cases {
            let err = ExperimentConfig::from_toml_str(text).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{text}: {err}");
            assert!(err.to_string().contains(needle), "{text}: {err}");
        }
    }

    #[test]
    fn per_layer_sizes() {
        let cfg = ExperimentConfig::from_toml_str(
            "[content]\nfile_count = 2\nlayer_count = 2\nlayer_sizes_bits = [[1.0, 2.0], [3.0, 4.0]]\n",
        )
        .unwrap();
        assert_eq!(cfg.library().unwrap().super_layer_sizes().get(1, 1), 7.0);
        assert!(ExperimentConfig::from_toml_str(
            "[content]\nfile_count = 3\nlayer_sizes_bits = [[1.0, 2.0], [3.0, 4.0]]\n"
        )
        .is_err());
    }

    #[test]
    fn sweep_parsing() {
        let s: SweepSpec = "theta_db=3:7:3".parse().unwrap();
        assert_eq!(s.variable, SweepVar::ThetaDb);
        assert_eq!(s.values(), vec![3.0, 5.0, 7.0]);
        assert_eq!(s.to_string().parse::<SweepSpec>().unwrap(), s);
        let one: SweepSpec = "m_d=1e8:1e8:1".parse().unwrap();
        assert_eq!(one.values(), vec![1e8]);
        for bad in [
            "theta_db=3:7",
            "nope=1:2:3",
            "theta_db=1:2:0",
            "theta_db",
            "p=a:1:2",
        ] {
            assert!(bad.parse::<SweepSpec>().is_err(), "{bad}");
        }
        let v: SweepSpec = "p=0:1:11".parse().unwrap();
        assert_eq!(v.values()[10], 1.0);
        assert!((v.values()[3] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn with_value_and_hash() {
        let base = ExperimentConfig::default();
        let c = base.with_value(SweepVar::MD, 3e8).unwrap();
        assert_eq!(c.budgets.d2d_bits, 3e8);
        assert_ne!(c.hash(), base.hash());
        assert!(base.with_value(SweepVar::P, 0.5).is_err());
        assert!(base.with_value(SweepVar::BackhaulRate, -1.0).is_err());
        let mut moved = base.clone();
        moved.output.path = Some("elsewhere.csv".into());
        assert_eq!(moved.hash(), base.hash());
        assert_eq!(base.hash().len(), 64);
    }

    #[test]
    fn optimizer_initial_mapping() {
        let cfg = ExperimentConfig::from_toml_str(
            "optimizer.initial_policy = \"icp\"\nsim.master_seed = 9",
        )
        .unwrap();
        assert_eq!(
            cfg.optimizer_config().initial,
            InitialPolicy::Icp { seed: 9 }
        );
        assert!(ExperimentConfig::from_toml_str("optimizer.initial_policy = \"best\"").is_err());
    }
}
