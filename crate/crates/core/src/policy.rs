//! Caching policies, feasibility checks and the benchmark placements.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::content::ContentLibrary;
use crate::delay::CacheBudgets;
use crate::error::{domain_err, Error, Result};
use crate::grid::LayerGrid;
use crate::optimizer::project_budget;
use crate::scalar::Real;

/// Relative slack allowed when checking a budget inequality.
pub const BUDGET_REL_TOL: f64 = 1e-9;

/// Per-(file, super layer) caching probabilities of the D2D and SBS tiers.
#[derive(Debug, Clone, PartialEq)]
pub struct CachingPolicy<T> {
    pub d2d: LayerGrid<T>,
    pub sbs: LayerGrid<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tier {
    D2d,
    Sbs,
}

impl Tier {
    pub fn name(self) -> &'static str {
        match self {
            Tier::D2d => "d2d",
            Tier::Sbs => "sbs",
        }
    }
}

impl<T: Real> CachingPolicy<T> {
    /// Rejects mismatched shapes and entries outside `[0, 1]`.
    pub fn new(d2d: LayerGrid<T>, sbs: LayerGrid<T>) -> Result<Self> {
        sbs.ensure_shape(d2d.files(), d2d.layers())?;
        for (tier, g) in [("d2d", &d2d), ("sbs", &sbs)] {
            if let Some(v) = g
                .as_slice()
                .iter()
                .find(|v| !(**v >= T::zero() && **v <= T::one()))
            {
                return Err(domain_err(format!(
                    "{tier} caching probability {v} outside [0, 1]"
                )));
            }
        }
        Ok(Self { d2d, sbs })
    }

    /// Clamps every entry into `[0, 1]` (NaN becomes 0).
    pub fn clamped(d2d: LayerGrid<T>, sbs: LayerGrid<T>) -> Result<Self> {
        let clamp = |v: T| {
            if v.is_nan() {
                T::zero()
            } else {
                v.max(T::zero()).min(T::one())
            }
        };
        Self::new(d2d.map(clamp), sbs.map(clamp))
    }

    pub fn zeros(files: usize, layers: usize) -> Self {
        Self::uniform(files, layers, T::zero(), T::zero())
    }

    pub fn uniform(files: usize, layers: usize, p_d: T, p_s: T) -> Self {
        Self {
            d2d: LayerGrid::filled(files, layers, p_d),
            sbs: LayerGrid::filled(files, layers, p_s),
        }
    }

    pub fn ensure_shape(&self, files: usize, layers: usize) -> Result<()> {
        self.d2d.ensure_shape(files, layers)?;
        self.sbs.ensure_shape(files, layers)
    }

    pub fn tier(&self, tier: Tier) -> &LayerGrid<T> {
        match tier {
            Tier::D2d => &self.d2d,
            Tier::Sbs => &self.sbs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TierFeasibility<T> {
    /// `Σ p c` in bits.
    pub usage: T,
    pub budget: T,
    /// `budget − usage`; negative when over budget.
    pub slack: T,
    /// Number of entries outside `[0, 1]`.
    pub box_violations: usize,
}

impl<T: Real> TierFeasibility<T> {
    pub fn within_budget(&self) -> bool {
        self.usage <= self.budget * (T::one() + T::lit(BUDGET_REL_TOL))
    }

    pub fn feasible(&self) -> bool {
        self.box_violations == 0 && self.within_budget()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityReport<T> {
    pub d2d: TierFeasibility<T>,
    pub sbs: TierFeasibility<T>,
}

impl<T: Real> FeasibilityReport<T> {
    pub fn feasible(&self) -> bool {
        self.d2d.feasible() && self.sbs.feasible()
    }
}

fn tier_report<T: Real>(p: &LayerGrid<T>, sizes: &LayerGrid<T>, budget: T) -> TierFeasibility<T> {
    let usage = p.dot(sizes);
    TierFeasibility {
        usage,
        budget,
        slack: budget - usage,
        box_violations: p
            .as_slice()
            .iter()
            .filter(|v| !(**v >= T::zero() && **v <= T::one()))
            .count(),
    }
}

/// Box and budget check of both tiers. Works on unvalidated matrices too, so
/// it can report box violations.
pub fn validate_policy<T: Real>(
    policy: &CachingPolicy<T>,
    lib: &ContentLibrary<T>,
    budgets: &CacheBudgets<T>,
) -> Result<FeasibilityReport<T>> {
    policy.ensure_shape(lib.file_count(), lib.layer_count())?;
    let sizes = lib.super_layer_sizes();
    Ok(FeasibilityReport {
        d2d: tier_report(&policy.d2d, sizes, budgets.d2d),
        sbs: tier_report(&policy.sbs, sizes, budgets.sbs),
    })
}

/// Greedy fill in decreasing order of `weights` (stable on ties): whole
/// items while they fit, then a fraction of the next one that exhausts the
/// budget exactly.
fn greedy_fill<T: Real>(weights: &LayerGrid<T>, sizes: &LayerGrid<T>, budget: T) -> LayerGrid<T> {
    let (files, layers) = sizes.shape();
    let mut order: Vec<usize> = (0..files * layers).collect();
    let w = weights.as_slice();
    order.sort_by(|&a, &b| w[b].partial_cmp(&w[a]).unwrap_or(std::cmp::Ordering::Equal));
    let mut out = LayerGrid::zeros(files, layers);
    let mut left = budget;
    for k in order {
        let c = sizes.as_slice()[k];
        if c <= left {
            out.as_mut_slice()[k] = T::one();
            left = left - c;
        } else {
            out.as_mut_slice()[k] = (left / c).max(T::zero());
            break;
        }
    }
    out
}

/// Most popular content placement: cache super layers in decreasing joint
/// request probability until each tier's cache is full.
pub fn mpcp<T: Real>(lib: &ContentLibrary<T>, budgets: &CacheBudgets<T>) -> CachingPolicy<T> {
    let sizes = lib.super_layer_sizes();
    CachingPolicy {
        d2d: greedy_fill(lib.demand(), sizes, budgets.d2d),
        sbs: greedy_fill(lib.demand(), sizes, budgets.sbs),
    }
}

/// Equal probability content placement: one probability for every item,
/// as large as the cache allows.
pub fn epcp<T: Real>(lib: &ContentLibrary<T>, budgets: &CacheBudgets<T>) -> CachingPolicy<T> {
    let total = lib.total_catalog_bits();
    let (f, l) = (lib.file_count(), lib.layer_count());
    CachingPolicy::uniform(
        f,
        l,
        (budgets.d2d / total).min(T::one()),
        (budgets.sbs / total).min(T::one()),
    )
}

/// Independent content placement: i.i.d. uniform draws per item and tier,
/// projected onto the full-budget set. Deterministic in `seed`.
pub fn icp<T: Real>(
    lib: &ContentLibrary<T>,
    budgets: &CacheBudgets<T>,
    seed: u64,
) -> Result<CachingPolicy<T>> {
    let (f, l) = (lib.file_count(), lib.layer_count());
    let sizes = lib.super_layer_sizes();
    let tol = T::lit(1e-12).max(T::epsilon() * T::lit(16.0));
    let draw = |stream: u64, budget: T| -> Result<LayerGrid<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let raw = LayerGrid::from_fn(f, l, |_, _| T::lit(rng.random::<f64>()));
        project_budget(&raw, sizes, budget, tol)
    };
    Ok(CachingPolicy {
        d2d: draw(0, budgets.d2d)?,
        sbs: draw(1, budgets.sbs)?,
    })
}

/// Formats with `digits` significant digits in positional notation.
fn format_sig(v: f64, digits: i32) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let mag = v.abs().log10().floor() as i32;
    let decimals = (digits - 1 - mag).max(0) as usize;
    format!("{v:.decimals$}")
}

/// Text matrix format: per tier a header line
/// `tier=<d2d|sbs> files=<F> layers=<L>` followed by one comma-separated row
/// per file, 9 significant digits.
pub fn write_policy_text<T: Real>(policy: &CachingPolicy<T>) -> String {
    let mut out = String::new();
    for tier in [Tier::D2d, Tier::Sbs] {
        let g = policy.tier(tier);
        let _ = writeln!(
            out,
            "tier={} files={} layers={}",
            tier.name(),
            g.files(),
            g.layers()
        );
        for row in g.rows() {
            let cells: Vec<String> = row
                .iter()
                .map(|v| format_sig(v.to_f64_lossy(), 9))
                .collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
    }
    out
}

pub fn parse_policy_text<T: Real>(text: &str) -> Result<CachingPolicy<T>> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let mut read_block = |expect: Tier| -> Result<LayerGrid<T>> {
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse(format!("missing {} block", expect.name())))?;
        let mut tier = None;
        let mut files = None;
        let mut layers = None;
        for field in header.split_whitespace() {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad header field '{field}'")))?;
            match k {
                "tier" => tier = Some(v.to_string()),
                "files" => files = v.parse::<usize>().ok(),
                "layers" => layers = v.parse::<usize>().ok(),
                _ => return Err(Error::Parse(format!("unknown header field '{k}'"))),
            }
        }
        if tier.as_deref() != Some(expect.name()) {
            return Err(Error::Parse(format!(
                "expected tier={} header, got '{header}'",
                expect.name()
            )));
        }
        let (files, layers) = files
            .zip(layers)
            .ok_or_else(|| Error::Parse(format!("header '{header}' needs files= and layers=")))?;
        let mut rows = Vec::with_capacity(files);
        for _ in 0..files {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("{} block truncated", expect.name())))?;
            let row = line
                .split(',')
                .map(|c| {
                    c.trim()
                        .parse::<f64>()
                        .map(T::lit)
                        .map_err(|e| Error::Parse(format!("bad probability '{c}': {e}")))
                })
                .collect::<Result<Vec<T>>>()?;
            if row.len() != layers {
                return Err(Error::Shape {
                    expected_rows: files,
                    expected_cols: layers,
                    rows: files,
                    cols: row.len(),
                });
            }
            rows.push(row);
        }
        LayerGrid::from_rows(rows)
    };
    let d2d = read_block(Tier::D2d)?;
    let sbs = read_block(Tier::Sbs)?;
    CachingPolicy::new(d2d, sbs)
}
