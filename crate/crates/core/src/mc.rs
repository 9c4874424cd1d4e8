//! Monte-Carlo counterparts of the success probabilities and the delay.
//!
//! The estimators sample exactly the model the closed forms are built on:
//! the serving distance is drawn from the thinned nearest-neighbour law
//! truncated to the serving disk, and interferers form a full-density PPP
//! either beyond the serving node (nearest node caches) or over the whole
//! window (nearest node does not cache). Fading powers are unit-mean
//! exponential. Interference is truncated at the simulation window.
//!
//! Trial `i` draws from ChaCha stream `i` of a generator seeded with the
//! master seed, so results do not depend on how trials are scheduled across
//! threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use rayon::prelude::*;

use crate::content::ContentLibrary;
use crate::delay::DelayModel;
use crate::error::{config_err, domain_err, Result};
use crate::geometry::{NetworkGeometry, RadioConfig, TierGeometry};
use crate::policy::CachingPolicy;

pub const DEFAULT_TRIALS: usize = 50_000;
pub const DEFAULT_WINDOW_MULTIPLIER: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub trials: usize,
    /// Window radius as a multiple of the serving radius (bounded tiers).
    pub window_multiplier: f64,
    /// Absolute window radius for the MBS tier, in metres. When unset the
    /// window holds `window_multiplier² × 9` MBSs on average.
    pub mbs_window_radius: Option<f64>,
    pub master_seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            trials: DEFAULT_TRIALS,
            window_multiplier: DEFAULT_WINDOW_MULTIPLIER,
            mbs_window_radius: None,
            master_seed: 0x5eed,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(config_err("sim.trials must be >= 1"));
        }
        if !(self.window_multiplier.is_finite() && self.window_multiplier >= 5.0) {
            return Err(config_err(format!(
                "sim.window_multiplier must be >= 5, got {}",
                self.window_multiplier
            )));
        }
        if let Some(r) = self.mbs_window_radius {
            if !(r.is_finite() && r > 0.0) {
                return Err(config_err(format!(
                    "sim.mbs_window_radius must be > 0, got {r}"
                )));
            }
        }
        Ok(())
    }

    fn mbs_window(&self, density: f64) -> f64 {
        self.mbs_window_radius.unwrap_or_else(|| {
            3.0 * self.window_multiplier / (std::f64::consts::PI * density).sqrt()
        })
    }
}

/// Sample mean of i.i.d. trial outcomes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorResult {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(trials_used)`.
    pub stderr: f64,
    pub trials_used: usize,
}

impl EstimatorResult {
    pub fn from_samples(samples: impl IntoIterator<Item = f64>) -> Self {
        let xs: Vec<f64> = samples.into_iter().collect();
        let n = xs.len();
        if n == 0 {
            return Self::not_applicable();
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            stderr,
            trials_used: n,
        }
    }

    /// Placeholder for estimates that are not defined (no trials run).
    pub fn not_applicable() -> Self {
        Self {
            mean: 0.0,
            stderr: 0.0,
            trials_used: 0,
        }
    }

    /// `|mean − reference| <= k · stderr`.
    pub fn agrees_with(&self, reference: f64, k: f64) -> bool {
        (self.mean - reference).abs() <= k * self.stderr
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

/// One realization of the received SIR at the typical user (origin).
#[derive(Debug, Clone, PartialEq)]
pub struct SirSample {
    pub serving_distance: f64,
    pub serving_gain: f64,
    pub interferer_distances: Vec<f64>,
    pub interferer_gains: Vec<f64>,
    pub sir: f64,
}

impl SirSample {
    pub fn success(&self, theta: f64) -> bool {
        self.sir >= theta
    }
}

/// Generator for trial `trial` under `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Independent seed number `index` derived from `master` (SplitMix64 step),
/// for experiments that run several estimators under one master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Homogeneous PPP of density `density` on the disk of radius `radius`
/// centred at the origin.
pub fn sample_ppp<R: Rng + ?Sized>(density: f64, radius: f64, rng: &mut R) -> Result<Vec<Point>> {
    if !(density > 0.0 && radius > 0.0) {
        return Err(domain_err("PPP needs density > 0 and radius > 0"));
    }
    let mean = density * std::f64::consts::PI * radius * radius;
    let count = Poisson::new(mean)
        .map_err(|e| domain_err(format!("bad Poisson mean {mean}: {e}")))?
        .sample(rng) as usize;
    Ok((0..count)
        .map(|_| {
            let r = radius * rng.random::<f64>().sqrt();
            let phi = std::f64::consts::TAU * rng.random::<f64>();
            Point {
                x: r * phi.cos(),
                y: r * phi.sin(),
            }
        })
        .collect())
}

/// Distance to the nearest node of the `p`-thinned process, conditioned on
/// it lying inside the serving disk. Inverse-CDF sampling.
pub fn sample_serving_distance<R: Rng + ?Sized>(
    p: f64,
    geom: &TierGeometry<f64>,
    rng: &mut R,
) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(domain_err(format!(
            "serving distance law needs 0 < p <= 1, got {p}"
        )));
    }
    let r_max = geom.finite_radius()?;
    Ok(serving_distance_sq(p * geom.density(), r_max, rng.random::<f64>()).sqrt())
}

/// Squared distance for a uniform `u`, thinned density `rate`.
fn serving_distance_sq(rate: f64, r_max: f64, u: f64) -> f64 {
    let scale = rate * std::f64::consts::PI;
    let truncation = -(-scale * r_max * r_max).exp_m1();
    -(-u * truncation).ln_1p() / scale
}

/// Interferer field around the typical user. Nodes are generated outwards:
/// squared distances of a planar PPP form a 1-D Poisson process of rate
/// `λπ`, so a wider window sees the same inner nodes plus more.
struct Field {
    rate: f64,
    window_sq: f64,
    half_alpha: f64,
}

impl Field {
    fn new(density: f64, window: f64, alpha: f64) -> Result<Self> {
        if !(density > 0.0 && window > 0.0) {
            return Err(domain_err(
                "interferer field needs density > 0 and window > 0",
            ));
        }
        Ok(Self {
            rate: density * std::f64::consts::PI,
            window_sq: window * window,
            half_alpha: alpha / 2.0,
        })
    }

    #[inline]
    fn path_gain(&self, dist_sq: f64) -> f64 {
        if self.half_alpha == 2.0 {
            (dist_sq * dist_sq).recip()
        } else {
            dist_sq.powf(-self.half_alpha)
        }
    }

    /// Visits nodes beyond `inner_sq`, nearest first, with their fading
    /// powers, until the window ends or `visit` returns false.
    fn visit<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        inner_sq: f64,
        mut visit: impl FnMut(f64, f64) -> bool,
    ) {
        let mut d2 = inner_sq;
        loop {
            let gap: f64 = Exp1.sample(rng);
            d2 += gap / self.rate;
            if d2 > self.window_sq {
                return;
            }
            let g: f64 = Exp1.sample(rng);
            if !visit(d2, g) {
                return;
            }
        }
    }

    /// One success trial with the serving node at squared distance `r0_sq`.
    fn succeeds<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        r0_sq: f64,
        inner_sq: f64,
        theta: f64,
    ) -> bool {
        let g0: f64 = Exp1.sample(rng);
        let budget = g0 * self.path_gain(r0_sq) / theta;
        let mut interference = 0.0;
        self.visit(rng, inner_sq, |d2, g| {
            interference += g * self.path_gain(d2);
            interference <= budget
        });
        interference <= budget
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R, r0_sq: f64, inner_sq: f64) -> SirSample {
        let g0: f64 = Exp1.sample(rng);
        let mut distances = Vec::new();
        let mut gains = Vec::new();
        let mut interference = 0.0;
        self.visit(rng, inner_sq, |d2, g| {
            interference += g * self.path_gain(d2);
            distances.push(d2.sqrt());
            gains.push(g);
            true
        });
        SirSample {
            serving_distance: r0_sq.sqrt(),
            serving_gain: g0,
            interferer_distances: distances,
            interferer_gains: gains,
            sir: g0 * self.path_gain(r0_sq) / interference,
        }
    }
}

/// Which interferers a bounded-tier trial sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServingCase {
    /// Nearest node caches the item: interferers only beyond it.
    NearestCached,
    /// Nearest node does not cache it: interferers everywhere.
    NearestUncached,
}

struct TierSampler {
    rate: f64,
    r_max: f64,
    field: Field,
    theta: f64,
}

impl TierSampler {
    fn new(p: f64, geom: &TierGeometry<f64>, theta: f64, sim: &SimConfig) -> Result<Self> {
        sim.validate()?;
        if !(p > 0.0 && p <= 1.0) {
            return Err(domain_err(format!(
                "conditional success estimate needs 0 < p <= 1, got {p}"
            )));
        }
        if !(theta > 0.0) {
            return Err(domain_err(format!(
                "SIR threshold must be > 0, got {theta}"
            )));
        }
        let r_max = geom.finite_radius()?;
        Ok(Self {
            rate: p * geom.density(),
            r_max,
            field: Field::new(
                geom.density(),
                sim.window_multiplier * r_max,
                geom.pathloss(),
            )?,
            theta,
        })
    }

    fn trial<R: Rng + ?Sized>(&self, rng: &mut R, case: ServingCase) -> bool {
        let r0_sq = serving_distance_sq(self.rate, self.r_max, rng.random::<f64>());
        let inner = match case {
            ServingCase::NearestCached => r0_sq,
            ServingCase::NearestUncached => 0.0,
        };
        self.field.succeeds(rng, r0_sq, inner, self.theta)
    }
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn run_trials(
    sim: &SimConfig,
    trial: impl Fn(&mut ChaCha8Rng) -> Option<f64> + Sync,
) -> EstimatorResult {
    let outcomes: Vec<Option<f64>> = (0..sim.trials as u64)
        .into_par_iter()
        .map(|i| trial(&mut trial_rng(sim.master_seed, i)))
        .collect();
    EstimatorResult::from_samples(outcomes.into_iter().flatten())
}

/// Draws one SIR realization of a bounded tier, for inspection.
pub fn sample_sir<R: Rng + ?Sized>(
    p: f64,
    geom: &TierGeometry<f64>,
    case: ServingCase,
    sim: &SimConfig,
    rng: &mut R,
) -> Result<SirSample> {
    let sampler = TierSampler::new(p, geom, 1.0, sim)?;
    let r0_sq = serving_distance_sq(sampler.rate, sampler.r_max, rng.random::<f64>());
    let inner = if case == ServingCase::NearestCached {
        r0_sq
    } else {
        0.0
    };
    Ok(sampler.field.sample(rng, r0_sq, inner))
}

pub fn mc_stp_nearest_cached(
    p: f64,
    geom: &TierGeometry<f64>,
    theta: f64,
    sim: &SimConfig,
) -> Result<EstimatorResult> {
    let s = TierSampler::new(p, geom, theta, sim)?;
    Ok(run_trials(sim, |rng| {
        Some(indicator(s.trial(rng, ServingCase::NearestCached)))
    }))
}

pub fn mc_stp_nearest_uncached(
    p: f64,
    geom: &TierGeometry<f64>,
    theta: f64,
    sim: &SimConfig,
) -> Result<EstimatorResult> {
    let s = TierSampler::new(p, geom, theta, sim)?;
    Ok(run_trials(sim, |rng| {
        Some(indicator(s.trial(rng, ServingCase::NearestUncached)))
    }))
}

/// Mixture of the two cases: with probability `p` the nearest node caches.
/// At `p = 0` no node can serve and the result is a degenerate zero.
pub fn mc_stp_cache_tier(
    p: f64,
    geom: &TierGeometry<f64>,
    theta: f64,
    sim: &SimConfig,
) -> Result<EstimatorResult> {
    if p == 0.0 {
        sim.validate()?;
        geom.finite_radius()?;
        return Ok(EstimatorResult::not_applicable());
    }
    let s = TierSampler::new(p, geom, theta, sim)?;
    Ok(run_trials(sim, |rng| {
        let case = if rng.random::<f64>() < p {
            ServingCase::NearestCached
        } else {
            ServingCase::NearestUncached
        };
        Some(indicator(s.trial(rng, case)))
    }))
}

/// Success probability of the nearest MBS: unbounded nearest-point distance
/// law, interferers beyond the serving MBS.
pub fn mc_stp_mbs(
    density: f64,
    pathloss: f64,
    theta: f64,
    sim: &SimConfig,
) -> Result<EstimatorResult> {
    sim.validate()?;
    TierGeometry::unbounded(density, pathloss)?;
    if !(theta > 0.0) {
        return Err(domain_err(format!(
            "SIR threshold must be > 0, got {theta}"
        )));
    }
    let field = Field::new(density, sim.mbs_window(density), pathloss)?;
    let scale = density * std::f64::consts::PI;
    Ok(run_trials(sim, |rng| {
        let r0_sq = -(-rng.random::<f64>()).ln_1p() / scale;
        Some(indicator(field.succeeds(rng, r0_sq, r0_sq, theta)))
    }))
}

/// Success probability of a bounded tier from full network realizations:
/// every node caches independently with probability `p`, the nearest caching
/// node inside the serving disk serves, all other nodes interfere. Trials
/// without a caching node in the disk are discarded, so `trials_used` counts
/// associated trials only. Not part of the validation gate; it measures how
/// far the per-case model is from an end-to-end network.
pub fn mc_stp_cache_tier_realized(
    p: f64,
    geom: &TierGeometry<f64>,
    theta: f64,
    sim: &SimConfig,
) -> Result<EstimatorResult> {
    sim.validate()?;
    if !(p > 0.0 && p <= 1.0) {
        return Err(domain_err(format!(
            "realized estimate needs 0 < p <= 1, got {p}"
        )));
    }
    let r_max = geom.finite_radius()?;
    let field = Field::new(
        geom.density(),
        sim.window_multiplier * r_max,
        geom.pathloss(),
    )?;
    let r_max_sq = r_max * r_max;
    Ok(run_trials(sim, |rng| {
        let mut nodes: Vec<(f64, bool, f64)> = Vec::new();
        field.visit(rng, 0.0, |d2, g| {
            nodes.push((d2, false, g));
            true
        });
        for node in &mut nodes {
            node.1 = rng.random::<f64>() < p;
        }
        // Nodes are sorted by distance: the first caching one serves.
        let serving = nodes
            .iter()
            .position(|(d2, cached, _)| *cached && *d2 <= r_max_sq)?;
        let (r0_sq, _, g0) = nodes[serving];
        let interference: f64 = nodes
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != serving)
            .map(|(_, (d2, _, g))| g * field.path_gain(*d2))
            .sum();
        Some(indicator(
            g0 * field.path_gain(r0_sq) >= theta * interference,
        ))
    }))
}

/// Realized delay of one request under the D2D → SBS → MBS cascade, whose
/// expectation is the overall delay.
pub fn mc_delay_end_to_end(
    policy: &CachingPolicy<f64>,
    lib: &ContentLibrary<f64>,
    network: &NetworkGeometry<f64>,
    radio: &RadioConfig<f64>,
    sim: &SimConfig,
) -> Result<EstimatorResult> {
    sim.validate()?;
    let (files, layers) = (lib.file_count(), lib.layer_count());
    let policy = CachingPolicy::new(policy.d2d.clone(), policy.sbs.clone())?;
    policy.ensure_shape(files, layers)?;
    let model = DelayModel::new(lib, network, radio)?;
    let theta = radio.sir_threshold();

    let cumulative: Vec<f64> = lib
        .demand()
        .as_slice()
        .iter()
        .scan(0.0, |acc, &p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    let d2d_field = Field::new(
        network.d2d.density(),
        sim.window_multiplier * network.d2d.finite_radius()?,
        network.d2d.pathloss(),
    )?;
    let sbs_field = Field::new(
        network.sbs.density(),
        sim.window_multiplier * network.sbs.finite_radius()?,
        network.sbs.pathloss(),
    )?;
    let mbs_field = Field::new(
        network.mbs.density(),
        sim.mbs_window(network.mbs.density()),
        network.mbs.pathloss(),
    )?;
    let mbs_scale = network.mbs.density() * std::f64::consts::PI;
    let downlink_mbs = (radio.bandwidth_mbs * radio.spectral_efficiency()).recip();

    // One local tier: association, case draw, SIR trial.
    let local_hit =
        |rng: &mut ChaCha8Rng, p: f64, geom: &TierGeometry<f64>, field: &Field| -> bool {
            let mass = geom.density()
                * p
                * std::f64::consts::PI
                * geom.serving_radius().unwrap_or(0.0).powi(2);
            let associated = rng.random::<f64>() < -(-mass).exp_m1();
            if !associated {
                return false;
            }
            let r_max = geom.serving_radius().unwrap_or(0.0);
            let r0_sq = serving_distance_sq(p * geom.density(), r_max, rng.random::<f64>());
            let inner = if rng.random::<f64>() < p { r0_sq } else { 0.0 };
            field.succeeds(rng, r0_sq, inner, theta)
        };

    Ok(run_trials(sim, |rng| {
        let u = rng.random::<f64>() * cumulative.last().copied().unwrap_or(1.0);
        let k = cumulative
            .partition_point(|&c| c <= u)
            .min(files * layers - 1);
        let (i, j) = (k / layers, k % layers);
        let bits = lib.super_layer_sizes().get(i, j);
        if local_hit(rng, policy.d2d.get(i, j), &network.d2d, &d2d_field) {
            return Some(model.d2d_time(bits));
        }
        if local_hit(rng, policy.sbs.get(i, j), &network.sbs, &sbs_field) {
            return Some(model.sbs_time(bits));
        }
        let r0_sq = -(-rng.random::<f64>()).ln_1p() / mbs_scale;
        let mut delay = bits / radio.backhaul_rate;
        if mbs_field.succeeds(rng, r0_sq, r0_sq, theta) {
            delay += bits * downlink_mbs;
        }
        Some(delay)
    }))
}
