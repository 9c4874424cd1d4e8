//! Success probabilities of the nearest potential serving node in each tier.
//!
//! Nodes of a tier form a homogeneous PPP of density `lambda`; a node caches a
//! given super layer independently with probability `p`, so caching nodes
//! form a thinned PPP of density `p * lambda`. All nodes of a tier transmit,
//! so interference always comes from the full-density process. Fading is
//! Rayleigh (unit-mean exponential power) and the network is interference
//! limited.
//!
//! The D2D and SBS tiers share the same algebra and are both handled by
//! [`TierLink`]; the MBS tier always serves from the nearest node and has a
//! density-free success probability, see [`stp_mbs`].

use crate::error::{config_err, domain_err, Result};
use crate::quadrature::integrate;
use crate::scalar::{db_to_linear, Real};

/// Spatial parameters of one transmitter tier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TierGeometry<T> {
    density: T,
    serving_radius: Option<T>,
    pathloss: T,
}

impl<T: Real> TierGeometry<T> {
    /// `serving_radius = None` means the tier serves from any distance.
    pub fn new(density: T, serving_radius: Option<T>, pathloss: T) -> Result<Self> {
        if !(density.is_finite() && density > T::zero()) {
            return Err(config_err(format!(
                "tier density must be > 0, got {density}"
            )));
        }
        if let Some(r) = serving_radius {
            if !(r.is_finite() && r > T::zero()) {
                return Err(config_err(format!("serving radius must be > 0, got {r}")));
            }
        }
        if !(pathloss.is_finite() && pathloss > T::lit(2.0)) {
            return Err(config_err(format!(
                "path-loss exponent must be > 2, got {pathloss}"
            )));
        }
        Ok(Self {
            density,
            serving_radius,
            pathloss,
        })
    }

    pub fn bounded(density: T, serving_radius: T, pathloss: T) -> Result<Self> {
        Self::new(density, Some(serving_radius), pathloss)
    }

    pub fn unbounded(density: T, pathloss: T) -> Result<Self> {
        Self::new(density, None, pathloss)
    }

    pub fn density(&self) -> T {
        self.density
    }

    pub fn serving_radius(&self) -> Option<T> {
        self.serving_radius
    }

    pub fn pathloss(&self) -> T {
        self.pathloss
    }

    pub(crate) fn finite_radius(&self) -> Result<T> {
        self.serving_radius
            .ok_or_else(|| domain_err("operation needs a tier with a finite serving radius"))
    }

    /// Expected number of nodes (cached or not) inside the serving disk.
    pub(crate) fn disk_mass(&self) -> Result<T> {
        let r = self.finite_radius()?;
        Ok(self.density * T::PI() * r * r)
    }
}

/// The three tiers of the network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkGeometry<T> {
    pub d2d: TierGeometry<T>,
    pub sbs: TierGeometry<T>,
    pub mbs: TierGeometry<T>,
}

impl<T: Real> NetworkGeometry<T> {
    /// Checks the cross-tier constraints: bounded D2D and SBS disks with the
    /// SBS cell at least as large as the D2D collaborative area.
    pub fn new(d2d: TierGeometry<T>, sbs: TierGeometry<T>, mbs: TierGeometry<T>) -> Result<Self> {
        let rc = d2d
            .serving_radius
            .ok_or_else(|| config_err("tiers.d2d.serving_radius is required"))?;
        let rd = sbs
            .serving_radius
            .ok_or_else(|| config_err("tiers.sbs.serving_radius is required"))?;
        if rd < rc {
            return Err(config_err(format!(
                "tiers.sbs.serving_radius ({rd}) must be >= tiers.d2d.serving_radius ({rc})"
            )));
        }
        Ok(Self { d2d, sbs, mbs })
    }
}

/// Link-level radio parameters shared by all tiers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioConfig<T> {
    sir_threshold: T,
    pub bandwidth_d2d: T,
    pub bandwidth_sbs: T,
    pub bandwidth_mbs: T,
    pub backhaul_rate: T,
}

impl<T: Real> RadioConfig<T> {
    /// `sir_threshold` is linear; bandwidths in Hz, backhaul in bit/s.
    pub fn new(
        sir_threshold: T,
        bandwidth_d2d: T,
        bandwidth_sbs: T,
        bandwidth_mbs: T,
        backhaul_rate: T,
    ) -> Result<Self> {
        for (name, v) in [
            ("radio.sir_threshold", sir_threshold),
            ("radio.bandwidth_d2d_hz", bandwidth_d2d),
            ("radio.bandwidth_sbs_hz", bandwidth_sbs),
            ("radio.bandwidth_mbs_hz", bandwidth_mbs),
            ("radio.backhaul_bps", backhaul_rate),
        ] {
            if !(v.is_finite() && v > T::zero()) {
                return Err(config_err(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(Self {
            sir_threshold,
            bandwidth_d2d,
            bandwidth_sbs,
            bandwidth_mbs,
            backhaul_rate,
        })
    }

    pub fn with_threshold_db(
        sir_threshold_db: T,
        bandwidth_d2d: T,
        bandwidth_sbs: T,
        bandwidth_mbs: T,
        backhaul_rate: T,
    ) -> Result<Self> {
        Self::new(
            db_to_linear(sir_threshold_db),
            bandwidth_d2d,
            bandwidth_sbs,
            bandwidth_mbs,
            backhaul_rate,
        )
    }

    pub fn sir_threshold(&self) -> T {
        self.sir_threshold
    }

    pub fn set_sir_threshold(&mut self, theta: T) -> Result<()> {
        if !(theta.is_finite() && theta > T::zero()) {
            return Err(config_err(format!(
                "radio.sir_threshold must be > 0, got {theta}"
            )));
        }
        self.sir_threshold = theta;
        Ok(())
    }

    /// `log2(1 + theta)`, the rate per Hz guaranteed by a successful link.
    pub fn spectral_efficiency(&self) -> T {
        self.sir_threshold.ln_1p() / T::LN_2()
    }
}

/// `G_a(b) = ∫_b^∞ dx / (1 + x^(a/2))` for `a > 2`, `b >= 0`.
///
/// Closed form `π/2 − atan(b)` when `a = 4`. Otherwise adaptive quadrature
/// up to `B = max(b, 10)` plus the tail beyond `B`, which is summed exactly
/// from the alternating expansion `1/(1+x^s) = Σ_{k≥1} (−1)^{k+1} x^{−ks}`
/// (convergent for `x > 1`).
pub fn g_integral<T: Real>(a: T, b: T) -> Result<T> {
    if !(a.is_finite() && a > T::lit(2.0)) {
        return Err(domain_err(format!(
            "G_a(b) diverges unless a > 2, got a = {a}"
        )));
    }
    if !(b.is_finite() && b >= T::zero()) {
        return Err(domain_err(format!("G_a(b) needs b >= 0, got b = {b}")));
    }
    if a == T::lit(4.0) {
        return Ok(T::FRAC_PI_2() - b.atan());
    }
    let s = a / T::lit(2.0);
    let split = b.max(T::lit(10.0));
    let tol = T::quad_tol();
    let body = if split > b {
        integrate(|x: T| (T::one() + x.powf(s)).recip(), b, split, tol).value
    } else {
        T::zero()
    };
    Ok(body + power_tail(s, split, tol))
}

/// `∫_B^∞ dx / (1 + x^s)` for `B >= 10`, `s > 1`.
fn power_tail<T: Real>(s: T, start: T, tol: T) -> T {
    let mut sum = T::zero();
    let mut sign = T::one();
    for k in 1..=500 {
        let ks = T::lit(k as f64) * s;
        let term = start.powf(T::one() - ks) / (ks - T::one());
        sum = sum + sign * term;
        if term < tol * T::lit(1e-3) {
            break;
        }
        sign = -sign;
    }
    sum
}

/// Probability that at least one node of the tier caching the item lies in
/// the serving disk: `1 − exp(−λ p π r²)`.
pub fn association_probability<T: Real>(p: T, geom: &TierGeometry<T>) -> Result<T> {
    check_probability(p)?;
    let mass = geom.disk_mass()?;
    Ok(-(-(mass * p)).exp_m1())
}

/// `q(x) = [1 − exp(−λπr²(p + θ^{2/α} G_α(x)))] / (p + θ^{2/α} G_α(x))`.
pub fn q_factor<T: Real>(p: T, geom: &TierGeometry<T>, theta: T, x: T) -> Result<T> {
    check_probability(p)?;
    let mass = geom.disk_mass()?;
    let load = theta.powf(T::lit(2.0) / geom.pathloss) * g_integral(geom.pathloss, x)?;
    Ok(q_with_load(p, mass, load))
}

#[inline]
fn q_with_load<T: Real>(p: T, mass: T, load: T) -> T {
    let denom = p + load;
    -(-(mass * denom)).exp_m1() / denom
}

fn check_probability<T: Real>(p: T) -> Result<()> {
    if !(p >= T::zero() && p <= T::one()) {
        return Err(domain_err(format!(
            "caching probability must be in [0, 1], got {p}"
        )));
    }
    Ok(())
}

/// Precomputed link model of one bounded tier at a fixed SIR threshold.
///
/// The two interference loads `θ^{2/α} G_α(θ^{−2/α})` (interferers only
/// beyond the serving node) and `θ^{2/α} G_α(0)` (interferers everywhere)
/// do not depend on the caching probability, so they are evaluated once.
#[derive(Debug, Clone, Copy)]
pub struct TierLink<T> {
    geom: TierGeometry<T>,
    theta: T,
    mass: T,
    load_far: T,
    load_all: T,
}

impl<T: Real> TierLink<T> {
    pub fn new(geom: &TierGeometry<T>, theta: T) -> Result<Self> {
        if !(theta.is_finite() && theta > T::zero()) {
            return Err(domain_err(format!(
                "SIR threshold must be > 0, got {theta}"
            )));
        }
        let mass = geom.disk_mass()?;
        let a = geom.pathloss;
        let scale = theta.powf(T::lit(2.0) / a);
        let load_far = scale * g_integral(a, theta.powf(-T::lit(2.0) / a))?;
        let load_all = scale * g_integral(a, T::zero())?;
        Ok(Self {
            geom: *geom,
            theta,
            mass,
            load_far,
            load_all,
        })
    }

    pub fn geometry(&self) -> &TierGeometry<T> {
        &self.geom
    }

    pub fn theta(&self) -> T {
        self.theta
    }

    pub fn association(&self, p: T) -> T {
        -(-(self.mass * p)).exp_m1()
    }

    /// `q(θ^{−2/α})`.
    pub fn q_nearest(&self, p: T) -> T {
        q_with_load(p, self.mass, self.load_far)
    }

    /// `q(0)`.
    pub fn q_farther(&self, p: T) -> T {
        q_with_load(p, self.mass, self.load_all)
    }

    /// Success probability when the nearest node caches the item.
    pub fn nearest_cached(&self, p: T) -> T {
        if p <= T::zero() {
            return T::zero();
        }
        p * self.q_nearest(p) / self.association(p)
    }

    /// Success probability when the nearest node does not cache the item and
    /// a farther caching node serves.
    pub fn nearest_uncached(&self, p: T) -> T {
        if p <= T::zero() {
            return T::zero();
        }
        p * self.q_farther(p) / self.association(p)
    }

    /// Mixture of the two cases with weights `p` and `1 − p`.
    pub fn cache_tier(&self, p: T) -> T {
        if p <= T::zero() {
            return T::zero();
        }
        self.hit_term(p) / self.association(p)
    }

    /// `association × cache_tier`, written as `p (p (q(θ^{−2/α}) − q(0)) + q(0))`
    /// so it is continuous at `p = 0`.
    pub fn hit_term(&self, p: T) -> T {
        let q_far = self.q_farther(p);
        p * (p * (self.q_nearest(p) - q_far) + q_far)
    }
}

fn link<T: Real>(p: T, geom: &TierGeometry<T>, theta: T) -> Result<TierLink<T>> {
    check_probability(p)?;
    TierLink::new(geom, theta)
}

pub fn stp_nearest_cached<T: Real>(p: T, geom: &TierGeometry<T>, theta: T) -> Result<T> {
    Ok(link(p, geom, theta)?.nearest_cached(p))
}

pub fn stp_nearest_uncached<T: Real>(p: T, geom: &TierGeometry<T>, theta: T) -> Result<T> {
    Ok(link(p, geom, theta)?.nearest_uncached(p))
}

pub fn stp_cache_tier<T: Real>(p: T, geom: &TierGeometry<T>, theta: T) -> Result<T> {
    Ok(link(p, geom, theta)?.cache_tier(p))
}

pub fn hit_term<T: Real>(p: T, geom: &TierGeometry<T>, theta: T) -> Result<T> {
    Ok(link(p, geom, theta)?.hit_term(p))
}

/// Success probability from the nearest MBS,
/// `[1 + θ^{2/α} G_α(θ^{−2/α})]^{−1}`. It does not depend on the density.
pub fn stp_mbs<T: Real>(pathloss: T, theta: T) -> Result<T> {
    if !(theta.is_finite() && theta > T::zero()) {
        return Err(domain_err(format!(
            "SIR threshold must be > 0, got {theta}"
        )));
    }
    let two = T::lit(2.0);
    let load = theta.powf(two / pathloss) * g_integral(pathloss, theta.powf(-two / pathloss))?;
    Ok((T::one() + load).recip())
}
