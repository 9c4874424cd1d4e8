//! Gradient projection for the delay-minimizing cache placement, and an
//! exhaustive grid search used as a reference on tiny catalogs.
//!
//! Each iteration takes a step of length `1/t` along the negative delay
//! gradient, independently for the D2D and SBS matrices, and maps the result
//! back onto `{0 <= p <= 1, Σ c p = M}` with a uniform shift `u`:
//! `p = min([p̂ − u]⁺, 1)`. Note that a uniform shift is not the Euclidean
//! projection onto the size-weighted budget plane; it is the operator the
//! algorithm is defined with.

use crate::content::ContentLibrary;
use crate::delay::{CacheBudgets, DelayModel};
use crate::error::{domain_err, Error, Result};
use crate::geometry::{NetworkGeometry, RadioConfig};
use crate::grid::LayerGrid;
use crate::policy::{epcp, icp, mpcp, CachingPolicy};
use crate::scalar::Real;

const MAX_BISECTIONS: usize = 400;

/// Uniform-shift projection of `p_hat` onto the full-budget box set.
///
/// Returns all ones when `budget >= Σ c` (equality cannot be met). Otherwise
/// finds the shift by bisection until `|Σ c q − budget| <= tol · budget`,
/// then solves the linear piece containing the root exactly.
pub fn project_budget<T: Real>(
    p_hat: &LayerGrid<T>,
    sizes: &LayerGrid<T>,
    budget: T,
    tol: T,
) -> Result<LayerGrid<T>> {
    if !(budget.is_finite() && budget > T::zero()) {
        return Err(domain_err(format!(
            "cache budget must be > 0, got {budget}"
        )));
    }
    sizes.ensure_shape(p_hat.files(), p_hat.layers())?;
    if p_hat.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(domain_err("projection input contains a non-finite entry"));
    }
    let total = sizes.sum();
    if budget >= total {
        return Ok(LayerGrid::filled(p_hat.files(), p_hat.layers(), T::one()));
    }

    let shift = |u: T| p_hat.map(|v| (v - u).max(T::zero()).min(T::one()));
    let usage = |u: T| -> T {
        p_hat
            .as_slice()
            .iter()
            .zip(sizes.as_slice())
            .map(|(&v, &c)| c * (v - u).max(T::zero()).min(T::one()))
            .sum()
    };

    let min_p = p_hat.as_slice().iter().copied().fold(T::infinity(), T::min);
    let max_p = p_hat
        .as_slice()
        .iter()
        .copied()
        .fold(T::neg_infinity(), T::max);
    let min_c = sizes.as_slice().iter().copied().fold(T::infinity(), T::min);
    // usage(lo) = Σc > budget, usage(hi) = 0 < budget.
    let mut lo = min_p - T::one() - budget / min_c;
    let mut hi = max_p;
    let mut u = T::lit(0.5) * (lo + hi);
    for _ in 0..MAX_BISECTIONS {
        u = T::lit(0.5) * (lo + hi);
        let s = usage(u);
        if (s - budget).abs() <= tol * budget {
            break;
        }
        if s > budget {
            lo = u;
        } else {
            hi = u;
        }
        if hi - lo <= T::epsilon() * (T::one() + u.abs()) {
            break;
        }
    }

    // Exact solve on the linear piece around the bisection point.
    let mut free_c = T::zero();
    let mut free_cp = T::zero();
    let mut capped_c = T::zero();
    for (&v, &c) in p_hat.as_slice().iter().zip(sizes.as_slice()) {
        let x = v - u;
        if x >= T::one() {
            capped_c = capped_c + c;
        } else if x > T::zero() {
            free_c = free_c + c;
            free_cp = free_cp + c * v;
        }
    }
    if free_c > T::zero() {
        let exact = (free_cp + capped_c - budget) / free_c;
        if (usage(exact) - budget).abs() <= (usage(u) - budget).abs() {
            u = exact;
        }
    }
    Ok(shift(u))
}

/// Where the optimizer starts.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialPolicy<T> {
    Mpcp,
    Epcp,
    Icp { seed: u64 },
    Given(CachingPolicy<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig<T> {
    pub max_iterations: usize,
    /// Stop once the delay changes by less than this many seconds.
    pub convergence_tol: T,
    /// Finite-difference step for the gradient.
    pub fd_step: T,
    /// Budget residual tolerance of the projection, relative to the budget.
    pub bisection_tol: T,
    pub initial: InitialPolicy<T>,
}

impl<T: Real> Default for OptimizerConfig<T> {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            convergence_tol: T::lit(1e-6),
            fd_step: T::lit(1e-6),
            bisection_tol: T::lit(1e-10),
            initial: InitialPolicy::Mpcp,
        }
    }
}

impl<T: Real> OptimizerConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Config(
                "optimizer.max_iterations must be >= 1".into(),
            ));
        }
        for (name, v) in [
            ("optimizer.convergence_tol", self.convergence_tol),
            ("optimizer.fd_step", self.fd_step),
            ("optimizer.bisection_tol", self.bisection_tol),
        ] {
            if !(v.is_finite() && v > T::zero()) {
                return Err(Error::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.fd_step >= T::lit(0.5) {
            return Err(Error::Config("optimizer.fd_step must be < 0.5".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord<T> {
    pub iteration: usize,
    pub delay: T,
    /// Lowest delay seen up to and including this iteration.
    pub best_delay: T,
    pub step_size: T,
    /// `Σ c p − M` in bits, per tier.
    pub budget_residual_d2d: T,
    pub budget_residual_sbs: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerResult<T> {
    pub best_policy: CachingPolicy<T>,
    pub best_delay: T,
    /// Iteration 0 is the (projected) initial policy.
    pub trajectory: Vec<IterationRecord<T>>,
    pub iterations_run: usize,
    pub converged: bool,
}

impl<T: Real> OptimizerResult<T> {
    pub fn delay_trajectory(&self) -> Vec<T> {
        self.trajectory.iter().map(|r| r.delay).collect()
    }
}

/// Finite-difference derivative of one cell's demand-weighted delay.
///
/// The overall delay is a sum of per-cell terms, each depending only on that
/// cell's two probabilities, so differencing the cell term is the same as
/// differencing the overall delay, at O(1) cost per entry.
fn cell_derivative<T: Real>(p: T, h: T, cost: impl Fn(T) -> T) -> T {
    let one = T::one();
    if p - h < T::zero() {
        (cost(p + h) - cost(p)) / h
    } else if p + h > one {
        (cost(p) - cost(p - h)) / h
    } else {
        (cost(p + h) - cost(p - h)) / (h + h)
    }
}

/// `(∂D/∂p_d, ∂D/∂p_s)` by central differences with step `h`, one-sided
/// within `h` of the box edges.
pub fn gradient_with_model<T: Real>(
    model: &DelayModel<T>,
    policy: &CachingPolicy<T>,
    h: T,
) -> Result<(LayerGrid<T>, LayerGrid<T>)> {
    let lib = model.library();
    let (files, layers) = (lib.file_count(), lib.layer_count());
    policy.ensure_shape(files, layers)?;
    let mut gd = LayerGrid::zeros(files, layers);
    let mut gs = LayerGrid::zeros(files, layers);
    for i in 0..files {
        for j in 0..layers {
            let pd = policy.d2d.get(i, j);
            let ps = policy.sbs.get(i, j);
            gd.set(
                i,
                j,
                cell_derivative(pd, h, |x| model.cell_cost(i, j, x, ps)),
            );
            gs.set(
                i,
                j,
                cell_derivative(ps, h, |x| model.cell_cost(i, j, pd, x)),
            );
        }
    }
    Ok((gd, gs))
}

pub fn objective_gradient<T: Real>(
    policy: &CachingPolicy<T>,
    lib: &ContentLibrary<T>,
    network: &NetworkGeometry<T>,
    radio: &RadioConfig<T>,
    h: T,
) -> Result<(LayerGrid<T>, LayerGrid<T>)> {
    gradient_with_model(&DelayModel::new(lib, network, radio)?, policy, h)
}

fn initial_policy<T: Real>(
    model: &DelayModel<T>,
    budgets: &CacheBudgets<T>,
    init: &InitialPolicy<T>,
) -> Result<CachingPolicy<T>> {
    let lib = model.library();
    Ok(match init {
        InitialPolicy::Mpcp => mpcp(lib, budgets),
        InitialPolicy::Epcp => epcp(lib, budgets),
        InitialPolicy::Icp { seed } => icp(lib, budgets, *seed)?,
        InitialPolicy::Given(p) => {
            p.ensure_shape(lib.file_count(), lib.layer_count())?;
            p.clone()
        }
    })
}

/// Runs the gradient projection and returns the best iterate.
pub fn optimize_with_model<T: Real>(
    model: &DelayModel<T>,
    budgets: &CacheBudgets<T>,
    cfg: &OptimizerConfig<T>,
) -> Result<OptimizerResult<T>> {
    cfg.validate()?;
    let sizes = model.library().super_layer_sizes();
    let tol = cfg.bisection_tol;
    let project = |d: &LayerGrid<T>, s: &LayerGrid<T>| -> Result<CachingPolicy<T>> {
        Ok(CachingPolicy {
            d2d: project_budget(d, sizes, budgets.d2d, tol)?,
            sbs: project_budget(s, sizes, budgets.sbs, tol)?,
        })
    };
    let residuals = |p: &CachingPolicy<T>| {
        (
            p.d2d.dot(sizes) - budgets.d2d.min(sizes.sum()),
            p.sbs.dot(sizes) - budgets.sbs.min(sizes.sum()),
        )
    };

    let start = initial_policy(model, budgets, &cfg.initial)?;
    let mut policy = project(&start.d2d, &start.sbs)?;
    let mut delay = model.total(&policy)?;
    let mut best_policy = policy.clone();
    let mut best_delay = delay;
    let (rd, rs) = residuals(&policy);
    let mut trajectory = vec![IterationRecord {
        iteration: 0,
        delay,
        best_delay,
        step_size: T::zero(),
        budget_residual_d2d: rd,
        budget_residual_sbs: rs,
    }];
    let mut converged = false;
    let mut iterations_run = 0;

    for t in 1..=cfg.max_iterations {
        let step = T::lit(t as f64).recip();
        let (gd, gs) = gradient_with_model(model, &policy, cfg.fd_step)?;
        let mut hat_d = policy.d2d.clone();
        for (v, g) in hat_d.as_mut_slice().iter_mut().zip(gd.as_slice()) {
            *v = *v - step * *g;
        }
        let mut hat_s = policy.sbs.clone();
        for (v, g) in hat_s.as_mut_slice().iter_mut().zip(gs.as_slice()) {
            *v = *v - step * *g;
        }
        let next = project(&hat_d, &hat_s)?;
        let next_delay = model.total(&next)?;
        if next_delay < best_delay {
            best_delay = next_delay;
            best_policy = next.clone();
        }
        let (rd, rs) = residuals(&next);
        trajectory.push(IterationRecord {
            iteration: t,
            delay: next_delay,
            best_delay,
            step_size: step,
            budget_residual_d2d: rd,
            budget_residual_sbs: rs,
        });
        iterations_run = t;
        let change = (next_delay - delay).abs();
        policy = next;
        delay = next_delay;
        if change < cfg.convergence_tol {
            converged = true;
            break;
        }
    }

    Ok(OptimizerResult {
        best_policy,
        best_delay,
        trajectory,
        iterations_run,
        converged,
    })
}

pub fn optimize<T: Real>(
    lib: &ContentLibrary<T>,
    network: &NetworkGeometry<T>,
    radio: &RadioConfig<T>,
    budgets: &CacheBudgets<T>,
    cfg: &OptimizerConfig<T>,
) -> Result<OptimizerResult<T>> {
    optimize_with_model(&DelayModel::new(lib, network, radio)?, budgets, cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult<T> {
    pub policy: CachingPolicy<T>,
    pub delay: T,
}

/// Largest catalog (files × layers) the grid oracle accepts.
pub const ORACLE_MAX_CELLS: usize = 6;

/// Exhaustive minimum over grid policies (every probability a multiple of
/// `grid_step`) that fill both caches exactly.
///
/// Usage `Σ c p` is an integer multiple of `gcd(c) · grid_step`, so the
/// search is a dynamic program over the pair of used budget units; this
/// visits every full-budget grid policy without listing them one by one.
/// When a budget is not a multiple of that unit the largest reachable usage
/// below it is used; a budget at or above the catalog size fixes the tier to
/// all ones.
pub fn grid_oracle_with_model<T: Real>(
    model: &DelayModel<T>,
    budgets: &CacheBudgets<T>,
    grid_step: T,
) -> Result<OracleResult<T>> {
    let lib = model.library();
    let (files, layers) = (lib.file_count(), lib.layer_count());
    let cells = files * layers;
    if cells > ORACLE_MAX_CELLS {
        return Err(Error::TooLarge(format!(
            "{files}x{layers} catalog has {cells} cells, grid oracle accepts at most {ORACLE_MAX_CELLS}"
        )));
    }
    let levels_f = grid_step.recip().to_f64_lossy();
    let levels = levels_f.round();
    if !(grid_step > T::zero())
        || (levels_f - levels).abs() > 1e-9
        || !(1.0..=100.0).contains(&levels)
    {
        return Err(domain_err(format!(
            "grid_step must be 1/n for an integer n in 1..=100, got {grid_step}"
        )));
    }
    let n = levels as usize;

    let sizes: Vec<f64> = lib
        .super_layer_sizes()
        .as_slice()
        .iter()
        .map(|c| c.to_f64_lossy())
        .collect();
    let int_sizes: Vec<u64> = sizes
        .iter()
        .map(|&c| {
            let r = c.round();
            if (c - r).abs() <= 1e-9 * c.max(1.0) && r >= 1.0 {
                Ok(r as u64)
            } else {
                Err(domain_err(format!(
                    "grid oracle needs whole-bit super-layer sizes, got {c}"
                )))
            }
        })
        .collect::<Result<_>>()?;
    let unit = int_sizes.iter().copied().fold(0, gcd);
    let weights: Vec<usize> = int_sizes.iter().map(|&c| (c / unit) as usize).collect();
    let max_units: usize = weights.iter().map(|w| w * n).sum();
    let total_bits: f64 = sizes.iter().sum();
    let unit_bits = unit as f64 / n as f64;
    let target = |budget: T| -> usize {
        let b = budget.to_f64_lossy();
        if b >= total_bits {
            max_units
        } else {
            ((b / unit_bits) + 1e-9).floor() as usize
        }
    };
    let (cap_d, cap_s) = (target(budgets.d2d), target(budgets.sbs));
    let width = cap_s + 1;
    let states = (cap_d + 1) * width;

    let step = T::lit(1.0 / n as f64);
    let level = |k: usize| {
        if k == n {
            T::one()
        } else {
            T::lit(k as f64) * step
        }
    };
    // cost[cell][a * (n + 1) + b]
    let side = n + 1;
    let costs: Vec<Vec<T>> = (0..cells)
        .map(|k| {
            let (i, j) = (k / layers, k % layers);
            let mut v = Vec::with_capacity(side * side);
            for a in 0..side {
                for b in 0..side {
                    v.push(model.cell_cost(i, j, level(a), level(b)));
                }
            }
            v
        })
        .collect();

    let inf = T::infinity();
    let mut value = vec![inf; states];
    value[0] = T::zero();
    let mut choices: Vec<Vec<u32>> = Vec::with_capacity(cells);
    for k in 0..cells {
        let w = weights[k];
        let mut next = vec![inf; states];
        let mut choice = vec![u32::MAX; states];
        for ud in 0..=cap_d {
            for us in 0..=cap_s {
                let base = value[ud * width + us];
                if base == inf {
                    continue;
                }
                for a in 0..side {
                    let nd = ud + a * w;
                    if nd > cap_d {
                        break;
                    }
                    let row = &costs[k][a * side..(a + 1) * side];
                    for (b, &c) in row.iter().enumerate() {
                        let ns = us + b * w;
                        if ns > cap_s {
                            break;
                        }
                        let idx = nd * width + ns;
                        let cand = base + c;
                        if cand < next[idx] {
                            next[idx] = cand;
                            choice[idx] = (a * side + b) as u32;
                        }
                    }
                }
            }
        }
        value = next;
        choices.push(choice);
    }

    // Largest reachable usage per tier (tier usages are independent).
    let best_d = (0..=cap_d)
        .rev()
        .find(|&ud| (0..=cap_s).any(|us| value[ud * width + us] < inf))
        .unwrap_or(0);
    let best_s = (0..=cap_s)
        .rev()
        .find(|&us| value[best_d * width + us] < inf)
        .unwrap_or(0);

    let mut d2d = LayerGrid::zeros(files, layers);
    let mut sbs = LayerGrid::zeros(files, layers);
    let (mut ud, mut us) = (best_d, best_s);
    for k in (0..cells).rev() {
        let pick = choices[k][ud * width + us] as usize;
        let (a, b) = (pick / side, pick % side);
        d2d.as_mut_slice()[k] = level(a);
        sbs.as_mut_slice()[k] = level(b);
        ud -= a * weights[k];
        us -= b * weights[k];
    }
    let policy = CachingPolicy { d2d, sbs };
    let delay = model.total(&policy)?;
    Ok(OracleResult { policy, delay })
}

pub fn grid_oracle<T: Real>(
    lib: &ContentLibrary<T>,
    network: &NetworkGeometry<T>,
    radio: &RadioConfig<T>,
    budgets: &CacheBudgets<T>,
    grid_step: T,
) -> Result<OracleResult<T>> {
    grid_oracle_with_model(&DelayModel::new(lib, network, radio)?, budgets, grid_step)
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::TierGeometry;
    use approx::assert_abs_diff_eq;

    fn row(v: &[f64]) -> LayerGrid<f64> {
        LayerGrid::from_vec(1, v.len(), v.to_vec()).unwrap()
    }

    #[test]
    fn projection_single_entry() {
        let q = project_budget(&row(&[0.9]), &row(&[10.0]), 5.0, 1e-10).unwrap();
        assert_abs_diff_eq!(q.get(0, 0), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn projection_capping_case() {
        let q = project_budget(&row(&[1.4, 0.5]), &row(&[1.0, 1.0]), 1.5, 1e-10).unwrap();
        assert_eq!(q.get(0, 0), 1.0);
        assert_abs_diff_eq!(q.get(0, 1), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn projection_interior_case() {
        let q = project_budget(&row(&[0.8, 0.6]), &row(&[1.0, 1.0]), 1.0, 1e-10).unwrap();
        assert_abs_diff_eq!(q.get(0, 0), 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(q.get(0, 1), 0.4, epsilon = 1e-15);
    }

    #[test]
    fn projection_non_binding_and_errors() {
        let q = project_budget(&row(&[0.1, -3.0]), &row(&[1.0, 2.0]), 3.0, 1e-10).unwrap();
        assert_eq!(q.as_slice(), &[1.0, 1.0]);
        assert!(project_budget(&row(&[0.5]), &row(&[1.0]), 0.0, 1e-10).is_err());
        assert!(project_budget(&row(&[0.5]), &row(&[1.0]), -1.0, 1e-10).is_err());
    }

    fn toy_model() -> DelayModel<f64> {
        let lib = ContentLibrary::uniform(2, 2, 25e6, 1.0, 5.0).unwrap();
        let net = NetworkGeometry::new(
            TierGeometry::bounded(0.01, 20.0, 4.0).unwrap(),
            TierGeometry::bounded(0.001, 60.0, 4.0).unwrap(),
            TierGeometry::unbounded(1e-5, 4.0).unwrap(),
        )
        .unwrap();
        let radio = RadioConfig::with_threshold_db(5.0, 20e6, 20e6, 10e6, 100e6).unwrap();
        DelayModel::new(&lib, &net, &radio).unwrap()
    }

    #[test]
    fn gradient_negative_at_all_miss() {
        let model = toy_model();
        let zero = CachingPolicy::zeros(2, 2);
        let (gd, gs) = gradient_with_model(&model, &zero, 1e-6).unwrap();
        let demand = model.library().demand();
        for k in 0..4 {
            let (i, j) = (k / 2, k % 2);
            if demand.get(i, j) > 0.0 {
                assert!(gd.get(i, j) < 0.0);
                assert!(gs.get(i, j) < 0.0);
            } else {
                // Zero-demand cells do not enter the objective.
                assert_eq!(gd.get(i, j), 0.0);
            }
        }
    }

    #[test]
    fn gradient_richardson_consistency() {
        let model = toy_model();
        let p = CachingPolicy::uniform(2, 2, 0.3, 0.6);
        let (g1, _) = gradient_with_model(&model, &p, 1e-4).unwrap();
        let (g2, _) = gradient_with_model(&model, &p, 5e-5).unwrap();
        // Central differences: error O(h^2), so the two agree far below h.
        assert!(g1.max_abs_diff(&g2) < 1e-7, "{}", g1.max_abs_diff(&g2));
    }

    #[test]
    fn oracle_refuses_large_instances() {
        let lib = ContentLibrary::uniform(4, 2, 1.0, 1.0, 0.0).unwrap();
        let model = DelayModel::new(&lib, toy_model_net(), &toy_radio()).unwrap();
        let b = CacheBudgets::new(2.0, 2.0).unwrap();
        assert!(matches!(
            grid_oracle_with_model(&model, &b, 0.05),
            Err(Error::TooLarge(_))
        ));
        assert!(grid_oracle_with_model(&toy_model(), &b, 0.3).is_err());
    }

    fn toy_model_net() -> &'static NetworkGeometry<f64> {
        use std::sync::OnceLock;
        static NET: OnceLock<NetworkGeometry<f64>> = OnceLock::new();
        NET.get_or_init(|| {
            NetworkGeometry::new(
                TierGeometry::bounded(0.01, 20.0, 4.0).unwrap(),
                TierGeometry::bounded(0.001, 60.0, 4.0).unwrap(),
                TierGeometry::unbounded(1e-5, 4.0).unwrap(),
            )
            .unwrap()
        })
    }

    fn toy_radio() -> RadioConfig<f64> {
        RadioConfig::with_threshold_db(5.0, 20e6, 20e6, 10e6, 100e6).unwrap()
    }

    #[test]
    fn oracle_tiny_budget_is_all_miss() {
        let model = toy_model();
        let b = CacheBudgets::new(1.0, 1.0).unwrap();
        let r = grid_oracle_with_model(&model, &b, 0.05).unwrap();
        assert_eq!(r.policy, CachingPolicy::zeros(2, 2));
        assert_abs_diff_eq!(r.delay, model.all_miss_delay(), epsilon = 1e-12);
    }

    #[test]
    fn oracle_fills_budget_exactly() {
        let model = toy_model();
        let b = CacheBudgets::new(60e6, 90e6).unwrap();
        let r = grid_oracle_with_model(&model, &b, 0.05).unwrap();
        let sizes = model.library().super_layer_sizes();
        assert_abs_diff_eq!(r.policy.d2d.dot(sizes), 60e6, epsilon = 1e-3);
        assert_abs_diff_eq!(r.policy.sbs.dot(sizes), 90e6, epsilon = 1e-3);
    }

    #[test]
    fn optimizer_fixed_point_at_optimum() {
        // Half-catalog budgets: caching both demanded items fully is optimal.
        let model = toy_model();
        let b = CacheBudgets::new(75e6, 75e6).unwrap();
        let oracle = grid_oracle_with_model(&model, &b, 0.05).unwrap();
        let cfg = OptimizerConfig {
            initial: InitialPolicy::Given(oracle.policy.clone()),
            ..OptimizerConfig::default()
        };
        let r = optimize_with_model(&model, &b, &cfg).unwrap();
        assert!(r.best_delay <= oracle.delay + 1e-12);
        assert!((r.best_delay - oracle.delay).abs() <= 1e-6);
        assert!(r.converged);
    }
}
