//! Experiment drivers behind the CLI subcommands. Each returns a [`Report`]:
//! a CSV table plus the outcome of the subcommand's pass/fail gate, if any.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::config::{ExperimentConfig, SweepSpec, SweepVar};
use crate::delay::DelayModel;
use crate::error::{config_err, Result};
use crate::geometry::{
    stp_cache_tier, stp_mbs, stp_nearest_cached, stp_nearest_uncached, TierGeometry,
};
use crate::mc::{self, derive_seed, EstimatorResult, SimConfig};
use crate::optimizer::optimize_with_model;
use crate::policy::{epcp, icp, mpcp, validate_policy, CachingPolicy};
use crate::scalar::db_to_linear;

/// Absolute agreement bound for probability rows of the validation gate.
pub const PROBABILITY_ABS_TOL: f64 = 0.01;
/// Agreement bound in standard errors.
pub const STDERR_MULTIPLE: f64 = 3.0;

pub const DEFAULT_P_GRID: [f64; 6] = [0.0, 0.1, 0.3, 0.5, 0.7, 1.0];
pub const DEFAULT_MBS_THETA_DB: [f64; 5] = [-5.0, 0.0, 5.0, 10.0, 15.0];
/// Ratio between the two MBS densities of the density-invariance rows.
pub const MBS_DENSITY_FACTOR: f64 = 10.0;

pub fn default_optimize_sweep() -> SweepSpec {
    SweepSpec {
        variable: SweepVar::ThetaDb,
        start: 3.0,
        stop: 11.0,
        steps: 5,
    }
}

/// 3, 5 and 7 dB.
pub fn default_convergence_sweep() -> SweepSpec {
    SweepSpec {
        variable: SweepVar::ThetaDb,
        start: 3.0,
        stop: 7.0,
        steps: 3,
    }
}

pub fn default_surface_axis() -> SweepSpec {
    SweepSpec {
        variable: SweepVar::P,
        start: 0.0,
        stop: 1.0,
        steps: 21,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    /// Number of rows that failed the gate; `None` when the subcommand has
    /// no gate.
    pub gate_failures: Option<usize>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.gate_failures.unwrap_or(0) == 0
    }

    /// CSV text: a comment line with the config hash and master seed, the
    /// column names, then the rows.
    pub fn to_csv(&self, cfg: &ExperimentConfig) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# config_hash={},master_seed={}",
            cfg.hash(),
            cfg.sim.master_seed
        );
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let k = self.columns.iter().position(|c| *c == name)?;
        Some(self.rows.iter().map(|r| r[k].as_str()).collect())
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

const NA: &str = "NA";

#[derive(Debug, Clone, PartialEq)]
pub struct ValidateOptions {
    /// Caching probabilities for the D2D and SBS rows.
    pub p_values: Vec<f64>,
    /// SIR thresholds (dB) for the MBS rows.
    pub mbs_theta_db: Vec<f64>,
    /// Adds ungated rows from full network realizations.
    pub realized: bool,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self {
            p_values: DEFAULT_P_GRID.to_vec(),
            mbs_theta_db: DEFAULT_MBS_THETA_DB.to_vec(),
            realized: false,
        }
    }
}

impl ValidateOptions {
    /// Replaces the grid named by the sweep variable (`p` or `theta_db`).
    pub fn with_sweep(mut self, sweep: &SweepSpec) -> Result<Self> {
        match sweep.variable {
            SweepVar::P => {
                let values = sweep.values();
                if values.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err(config_err("sweep p values must lie in [0, 1]"));
                }
                self.p_values = values;
            }
            SweepVar::ThetaDb => self.mbs_theta_db = sweep.values(),
            other => {
                return Err(config_err(format!(
                    "validate sweeps `p` or `theta_db`, not `{other}`"
                )))
            }
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Gate {
    /// Probability: within k·stderr and within the absolute bound.
    Probability,
    /// Delay in seconds: within k·stderr.
    Delay,
    None,
}

struct Row {
    quantity: String,
    sweep_var: &'static str,
    value: f64,
    analytic: f64,
    mc: Option<EstimatorResult>,
    gate: Gate,
}

impl Row {
    fn pass(&self) -> Option<bool> {
        let mc = self.mc.as_ref()?;
        let diff = (self.analytic - mc.mean).abs();
        match self.gate {
            Gate::Probability => {
                Some(diff <= STDERR_MULTIPLE * mc.stderr && diff <= PROBABILITY_ABS_TOL)
            }
            Gate::Delay => Some(diff <= STDERR_MULTIPLE * mc.stderr),
            Gate::None => None,
        }
    }

    fn cells(&self) -> Vec<String> {
        let (mean, se, trials) = match &self.mc {
            Some(r) => (num(r.mean), num(r.stderr), r.trials_used.to_string()),
            None => (NA.into(), NA.into(), "0".into()),
        };
        let pass = match self.pass() {
            Some(true) => "pass",
            Some(false) => "fail",
            None => NA,
        };
        vec![
            self.quantity.clone(),
            self.sweep_var.into(),
            num(self.value),
            num(self.analytic),
            mean,
            se,
            trials,
            pass.into(),
        ]
    }
}

/// Analytic vs Monte-Carlo success probabilities and delay.
///
/// Rows, in order: for each of the D2D and SBS tiers and each `p`, the
/// nearest-cached, nearest-uncached and mixed success probabilities; the MBS
/// success probability over the threshold grid; the MBS probability at two
/// densities; the end-to-end delay under the empty and the uniform-½
/// policies. MC is not applicable at `p = 0`. Every estimator runs under its
/// own seed derived from the master seed and the row number.
pub fn validate_probabilities(cfg: &ExperimentConfig, opts: &ValidateOptions) -> Result<Report> {
    cfg.validate()?;
    let network = cfg.network()?;
    let radio = cfg.radio()?;
    let lib = cfg.library()?;
    let theta = radio.sir_threshold();
    let base = cfg.sim_config();
    let mut k = 0u64;
    let mut next_sim = || {
        let s = SimConfig {
            master_seed: derive_seed(base.master_seed, k),
            ..base
        };
        k += 1;
        s
    };

    let mut rows = Vec::new();
    type Analytic = fn(f64, &TierGeometry<f64>, f64) -> Result<f64>;
    type Estimator = fn(f64, &TierGeometry<f64>, f64, &SimConfig) -> Result<EstimatorResult>;
    let per_tier: [(&str, Analytic, Estimator); 3] = [
        (
            "stp_nearest_cached",
            stp_nearest_cached,
            mc::mc_stp_nearest_cached,
        ),
        (
            "stp_nearest_uncached",
            stp_nearest_uncached,
            mc::mc_stp_nearest_uncached,
        ),
        ("stp_cache_tier", stp_cache_tier, mc::mc_stp_cache_tier),
    ];
    for (tier, geom) in [("d2d", &network.d2d), ("sbs", &network.sbs)] {
        for (name, analytic, estimator) in per_tier {
            for &p in &opts.p_values {
                let sim = next_sim();
                let mc = if p > 0.0 {
                    Some(estimator(p, geom, theta, &sim)?)
                } else {
                    None
                };
                rows.push(Row {
                    quantity: format!("{name}_{tier}"),
                    sweep_var: "p",
                    value: p,
                    analytic: analytic(p, geom, theta)?,
                    mc,
                    gate: Gate::Probability,
                });
            }
        }
        if opts.realized {
            for &p in opts.p_values.iter().filter(|p| **p > 0.0) {
                let sim = next_sim();
                rows.push(Row {
                    quantity: format!("stp_cache_tier_realized_{tier}"),
                    sweep_var: "p",
                    value: p,
                    analytic: stp_cache_tier(p, geom, theta)?,
                    mc: Some(mc::mc_stp_cache_tier_realized(p, geom, theta, &sim)?),
                    gate: Gate::None,
                });
            }
        }
    }

    let (lambda_m, alpha_m) = (network.mbs.density(), network.mbs.pathloss());
    for &db in &opts.mbs_theta_db {
        let th = db_to_linear(db);
        let sim = next_sim();
        rows.push(Row {
            quantity: "stp_mbs".into(),
            sweep_var: "theta_db",
            value: db,
            analytic: stp_mbs(alpha_m, th)?,
            mc: Some(mc::mc_stp_mbs(lambda_m, alpha_m, th, &sim)?),
            gate: Gate::Probability,
        });
    }
    for density in [lambda_m, lambda_m * MBS_DENSITY_FACTOR] {
        let sim = next_sim();
        rows.push(Row {
            quantity: "stp_mbs_density".into(),
            sweep_var: "mbs_density",
            value: density,
            analytic: stp_mbs(alpha_m, theta)?,
            mc: Some(mc::mc_stp_mbs(density, alpha_m, theta, &sim)?),
            gate: Gate::Probability,
        });
    }

    let model = DelayModel::new(&lib, &network, &radio)?;
    let (f, l) = (lib.file_count(), lib.layer_count());
    for p in [0.0, 0.5] {
        let policy = CachingPolicy::uniform(f, l, p, p);
        let sim = next_sim();
        rows.push(Row {
            quantity: "delay_end_to_end".into(),
            sweep_var: "p_uniform",
            value: p,
            analytic: model.total(&policy)?,
            mc: Some(mc::mc_delay_end_to_end(
                &policy, &lib, &network, &radio, &sim,
            )?),
            gate: Gate::Delay,
        });
    }

    let failures = rows.iter().filter(|r| r.pass() == Some(false)).count();
    Ok(Report {
        columns: vec![
            "quantity",
            "sweep_var",
            "value",
            "analytic",
            "mc_mean",
            "mc_stderr",
            "trials",
            "pass",
        ],
        rows: rows.iter().map(Row::cells).collect(),
        gate_failures: Some(failures),
    })
}

/// Overall delay on a grid of uniform policies `(p_d, p_s)`.
pub fn delay_surface(cfg: &ExperimentConfig, axis: &SweepSpec) -> Result<Report> {
    cfg.validate()?;
    if axis.variable != SweepVar::P {
        return Err(config_err(format!(
            "delay-surface sweeps `p`, not `{}`",
            axis.variable
        )));
    }
    let values = axis.values();
    if values.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(config_err("sweep p values must lie in [0, 1]"));
    }
    let lib = cfg.library()?;
    let model = DelayModel::new(&lib, &cfg.network()?, &cfg.radio()?)?;
    let (f, l) = (lib.file_count(), lib.layer_count());
    let demand = lib.demand();
    let mut rows = Vec::with_capacity(values.len() * values.len());
    for &pd in &values {
        for &ps in &values {
            let b = model.evaluate(&CachingPolicy::uniform(f, l, pd, ps))?;
            let hit = model.hit_rate(pd, ps);
            rows.push(vec![
                num(pd),
                num(ps),
                num(b.total),
                num(demand.dot(&b.d2d)),
                num(demand.dot(&b.sbs)),
                num(demand.dot(&b.mbs)),
                num(hit),
            ]);
        }
    }
    Ok(Report {
        columns: vec![
            "p_d", "p_s", "delay_s", "d2d_s", "sbs_s", "mbs_s", "hit_rate",
        ],
        rows,
        gate_failures: None,
    })
}

/// Delays of the optimized policy and the three baselines at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub optimized: f64,
    pub mpcp: f64,
    pub epcp: f64,
    pub icp: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl Comparison {
    /// Optimized no worse than any baseline.
    pub fn ordered(&self) -> bool {
        let slack = 1e-12 * self.optimized.abs().max(1.0);
        self.optimized <= self.mpcp + slack
            && self.optimized <= self.epcp + slack
            && self.optimized <= self.icp + slack
    }
}

/// Runs the optimizer and the baselines for one configuration. ICP uses the
/// master seed.
pub fn compare_policies(cfg: &ExperimentConfig) -> Result<Comparison> {
    let lib = cfg.library()?;
    let budgets = cfg.budgets()?;
    let model = DelayModel::new(&lib, &cfg.network()?, &cfg.radio()?)?;
    let result = optimize_with_model(&model, &budgets, &cfg.optimizer_config())?;
    Ok(Comparison {
        optimized: result.best_delay,
        mpcp: model.total(&mpcp(&lib, &budgets))?,
        epcp: model.total(&epcp(&lib, &budgets))?,
        icp: model.total(&icp(&lib, &budgets, cfg.sim.master_seed)?)?,
        iterations: result.iterations_run,
        converged: result.converged,
    })
}

/// Optimized vs baseline delay over a sweep. Gate: the optimized delay is no
/// larger than any baseline at every point.
pub fn optimize_and_compare(cfg: &ExperimentConfig, sweep: &SweepSpec) -> Result<Report> {
    cfg.validate()?;
    sweep.validate()?;
    let points: Vec<(f64, ExperimentConfig)> = sweep
        .values()
        .into_iter()
        .map(|v| Ok((v, cfg.with_value(sweep.variable, v)?)))
        .collect::<Result<_>>()?;
    let results: Vec<Comparison> = points
        .par_iter()
        .map(|(_, c)| compare_policies(c))
        .collect::<Result<_>>()?;
    let rows = points
        .iter()
        .zip(&results)
        .map(|((v, _), r)| {
            vec![
                sweep.variable.name().to_string(),
                num(*v),
                num(r.optimized),
                num(r.mpcp),
                num(r.epcp),
                num(r.icp),
                r.iterations.to_string(),
                r.converged.to_string(),
            ]
        })
        .collect();
    Ok(Report {
        columns: vec![
            "sweep_var",
            "value",
            "optimized_s",
            "mpcp_s",
            "epcp_s",
            "icp_s",
            "iterations",
            "converged",
        ],
        rows,
        gate_failures: Some(results.iter().filter(|r| !r.ordered()).count()),
    })
}

/// Optimizer trajectories, one block of rows per SIR threshold.
pub fn convergence(cfg: &ExperimentConfig, theta_db: &[f64]) -> Result<Report> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &db in theta_db {
        let c = cfg.with_value(SweepVar::ThetaDb, db)?;
        let model = DelayModel::new(&c.library()?, &c.network()?, &c.radio()?)?;
        let r = optimize_with_model(&model, &c.budgets()?, &c.optimizer_config())?;
        for rec in &r.trajectory {
            rows.push(vec![
                num(db),
                rec.iteration.to_string(),
                num(rec.delay),
                num(rec.best_delay),
                num(rec.step_size),
                num(rec.budget_residual_d2d),
                num(rec.budget_residual_sbs),
                r.converged.to_string(),
            ]);
        }
    }
    Ok(Report {
        columns: vec![
            "theta_db",
            "iteration",
            "delay_s",
            "best_delay_s",
            "step_size",
            "budget_residual_d_bits",
            "budget_residual_s_bits",
            "converged",
        ],
        rows,
        gate_failures: None,
    })
}

/// Delay breakdown, hit rate and cache usage of every policy at the
/// configured point.
pub fn baselines(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let lib = cfg.library()?;
    let budgets = cfg.budgets()?;
    let model = DelayModel::new(&lib, &cfg.network()?, &cfg.radio()?)?;
    let (f, l) = (lib.file_count(), lib.layer_count());
    let optimized = optimize_with_model(&model, &budgets, &cfg.optimizer_config())?.best_policy;
    let policies = [
        ("optimized", optimized),
        ("mpcp", mpcp(&lib, &budgets)),
        ("epcp", epcp(&lib, &budgets)),
        ("icp", icp(&lib, &budgets, cfg.sim.master_seed)?),
        ("none", CachingPolicy::zeros(f, l)),
    ];
    let demand = lib.demand();
    let mut rows = Vec::new();
    for (name, policy) in &policies {
        let b = model.evaluate(policy)?;
        let report = validate_policy(policy, &lib, &budgets)?;
        let hit: f64 = (0..f)
            .flat_map(|i| (0..l).map(move |j| (i, j)))
            .map(|(i, j)| {
                demand.get(i, j) * model.hit_rate(policy.d2d.get(i, j), policy.sbs.get(i, j))
            })
            .sum();
        rows.push(vec![
            name.to_string(),
            num(b.total),
            num(demand.dot(&b.d2d)),
            num(demand.dot(&b.sbs)),
            num(demand.dot(&b.mbs)),
            num(hit),
            num(report.d2d.usage),
            num(report.sbs.usage),
            report.feasible().to_string(),
        ]);
    }
    Ok(Report {
        columns: vec![
            "policy",
            "delay_s",
            "d2d_s",
            "sbs_s",
            "mbs_s",
            "hit_rate",
            "usage_d_bits",
            "usage_s_bits",
            "feasible",
        ],
        rows,
        gate_failures: None,
    })
}
