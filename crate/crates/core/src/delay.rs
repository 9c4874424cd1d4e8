//! Partial and overall service delay of a caching policy.
//!
//! A request for super layer `(f, l)` is first offered to the nearest D2D
//! helper caching it, then to the nearest caching SBS, and finally served by
//! the nearest MBS after a backhaul fetch. Each local tier contributes its
//! hit term (association × success probability) times the transmission time
//! `c / (W log2(1 + θ))`; the MBS branch carries the backhaul time plus the
//! MBS success probability times its transmission time.
//!
//! All quantities are in bits, Hz, bit/s and seconds.

use crate::content::ContentLibrary;
use crate::error::{config_err, Result};
use crate::geometry::{stp_mbs, NetworkGeometry, RadioConfig, TierGeometry, TierLink};
use crate::grid::LayerGrid;
use crate::policy::CachingPolicy;
use crate::scalar::Real;

/// Per-node cache capacities in bits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CacheBudgets<T> {
    pub d2d: T,
    pub sbs: T,
}

impl<T: Real> CacheBudgets<T> {
    pub fn new(d2d: T, sbs: T) -> Result<Self> {
        if !(d2d.is_finite() && d2d > T::zero()) {
            return Err(config_err(format!(
                "budgets.d2d_bits must be > 0, got {d2d}"
            )));
        }
        if !(sbs.is_finite() && sbs > T::zero()) {
            return Err(config_err(format!(
                "budgets.sbs_bits must be > 0, got {sbs}"
            )));
        }
        Ok(Self { d2d, sbs })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayBreakdown<T> {
    pub d2d: LayerGrid<T>,
    pub sbs: LayerGrid<T>,
    pub mbs: LayerGrid<T>,
    /// Demand-weighted sum of the three partial delays.
    pub total: T,
}

/// The three partial delays of one super layer, in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellDelay<T> {
    pub d2d: T,
    pub sbs: T,
    pub mbs: T,
}

impl<T: Real> CellDelay<T> {
    pub fn sum(&self) -> T {
        self.d2d + self.sbs + self.mbs
    }
}

/// Delay evaluator with every policy-independent quantity precomputed.
#[derive(Debug, Clone)]
pub struct DelayModel<T> {
    library: ContentLibrary<T>,
    d2d: TierLink<T>,
    sbs: TierLink<T>,
    mbs_success: T,
    secs_per_bit_d2d: T,
    secs_per_bit_sbs: T,
    secs_per_bit_miss: T,
}

impl<T: Real> DelayModel<T> {
    pub fn new(
        library: &ContentLibrary<T>,
        network: &NetworkGeometry<T>,
        radio: &RadioConfig<T>,
    ) -> Result<Self> {
        let theta = radio.sir_threshold();
        let se = radio.spectral_efficiency();
        let mbs_success = stp_mbs(network.mbs.pathloss(), theta)?;
        Ok(Self {
            library: library.clone(),
            d2d: TierLink::new(&network.d2d, theta)?,
            sbs: TierLink::new(&network.sbs, theta)?,
            mbs_success,
            secs_per_bit_d2d: (radio.bandwidth_d2d * se).recip(),
            secs_per_bit_sbs: (radio.bandwidth_sbs * se).recip(),
            secs_per_bit_miss: radio.backhaul_rate.recip()
                + mbs_success / (radio.bandwidth_mbs * se),
        })
    }

    pub fn library(&self) -> &ContentLibrary<T> {
        &self.library
    }

    pub fn d2d_link(&self) -> &TierLink<T> {
        &self.d2d
    }

    pub fn sbs_link(&self) -> &TierLink<T> {
        &self.sbs
    }

    pub fn mbs_success(&self) -> T {
        self.mbs_success
    }

    /// Seconds to deliver `bits` over a successful D2D link.
    pub fn d2d_time(&self, bits: T) -> T {
        bits * self.secs_per_bit_d2d
    }

    pub fn sbs_time(&self, bits: T) -> T {
        bits * self.secs_per_bit_sbs
    }

    /// Expected seconds of the all-miss branch: backhaul plus MBS downlink
    /// weighted by its success probability.
    pub fn miss_time(&self, bits: T) -> T {
        bits * self.secs_per_bit_miss
    }

    /// Partial delays of the 0-based cell `(i, j)` under caching
    /// probabilities `p_d`, `p_s`.
    #[inline]
    pub fn cell(&self, i: usize, j: usize, p_d: T, p_s: T) -> CellDelay<T> {
        let bits = self.library.super_layer_sizes().get(i, j);
        let hit_d = self.d2d.hit_term(p_d);
        let hit_s = self.sbs.hit_term(p_s);
        let one = T::one();
        CellDelay {
            d2d: hit_d * self.d2d_time(bits),
            sbs: (one - hit_d) * hit_s * self.sbs_time(bits),
            mbs: (one - hit_d) * (one - hit_s) * self.miss_time(bits),
        }
    }

    /// Demand-weighted contribution of one cell to the overall delay.
    #[inline]
    pub fn cell_cost(&self, i: usize, j: usize, p_d: T, p_s: T) -> T {
        self.library.demand().get(i, j) * self.cell(i, j, p_d, p_s).sum()
    }

    pub fn evaluate(&self, policy: &CachingPolicy<T>) -> Result<DelayBreakdown<T>> {
        let (files, layers) = (self.library.file_count(), self.library.layer_count());
        policy.ensure_shape(files, layers)?;
        let mut d2d = LayerGrid::zeros(files, layers);
        let mut sbs = LayerGrid::zeros(files, layers);
        let mut mbs = LayerGrid::zeros(files, layers);
        let mut total = T::zero();
        let demand = self.library.demand();
        for i in 0..files {
            for j in 0..layers {
                let c = self.cell(i, j, policy.d2d.get(i, j), policy.sbs.get(i, j));
                d2d.set(i, j, c.d2d);
                sbs.set(i, j, c.sbs);
                mbs.set(i, j, c.mbs);
                total = total + demand.get(i, j) * c.sum();
            }
        }
        Ok(DelayBreakdown {
            d2d,
            sbs,
            mbs,
            total,
        })
    }

    /// Overall delay only.
    pub fn total(&self, policy: &CachingPolicy<T>) -> Result<T> {
        let (files, layers) = (self.library.file_count(), self.library.layer_count());
        policy.ensure_shape(files, layers)?;
        Ok(self.total_unchecked(&policy.d2d, &policy.sbs))
    }

    pub(crate) fn total_unchecked(&self, p_d: &LayerGrid<T>, p_s: &LayerGrid<T>) -> T {
        let (files, layers) = p_d.shape();
        let mut total = T::zero();
        for i in 0..files {
            for j in 0..layers {
                total = total + self.cell_cost(i, j, p_d.get(i, j), p_s.get(i, j));
            }
        }
        total
    }

    /// Delay with nothing cached anywhere.
    pub fn all_miss_delay(&self) -> T {
        self.library.demand().dot(self.library.super_layer_sizes()) * self.secs_per_bit_miss
    }

    /// Probability that a request for the cell is served from a local cache.
    pub fn hit_rate(&self, p_d: T, p_s: T) -> T {
        let one = T::one();
        one - (one - self.d2d.hit_term(p_d)) * (one - self.sbs.hit_term(p_s))
    }

    /// Weights of the D2D, SBS and MBS branches; they sum to one.
    pub fn branch_weights(&self, p_d: T, p_s: T) -> [T; 3] {
        let one = T::one();
        let hd = self.d2d.hit_term(p_d);
        let hs = self.sbs.hit_term(p_s);
        [hd, (one - hd) * hs, (one - hd) * (one - hs)]
    }
}

fn cell_bits<T: Real>(lib: &ContentLibrary<T>, f: usize, l: usize) -> Result<T> {
    lib.super_layer_size(f, l)
}

/// D2D partial delay of super layer `l` of file `f` (1-based).
pub fn partial_delay_d2d<T: Real>(
    f: usize,
    l: usize,
    p_d: T,
    lib: &ContentLibrary<T>,
    geom_d: &TierGeometry<T>,
    radio: &RadioConfig<T>,
) -> Result<T> {
    let bits = cell_bits(lib, f, l)?;
    let hit = crate::geometry::hit_term(p_d, geom_d, radio.sir_threshold())?;
    Ok(hit * bits / (radio.bandwidth_d2d * radio.spectral_efficiency()))
}

pub fn partial_delay_sbs<T: Real>(
    f: usize,
    l: usize,
    p_d: T,
    p_s: T,
    lib: &ContentLibrary<T>,
    network: &NetworkGeometry<T>,
    radio: &RadioConfig<T>,
) -> Result<T> {
    let bits = cell_bits(lib, f, l)?;
    let theta = radio.sir_threshold();
    let hit_d = crate::geometry::hit_term(p_d, &network.d2d, theta)?;
    let hit_s = crate::geometry::hit_term(p_s, &network.sbs, theta)?;
    Ok((T::one() - hit_d) * hit_s * bits / (radio.bandwidth_sbs * radio.spectral_efficiency()))
}

pub fn partial_delay_mbs<T: Real>(
    f: usize,
    l: usize,
    p_d: T,
    p_s: T,
    lib: &ContentLibrary<T>,
    network: &NetworkGeometry<T>,
    radio: &RadioConfig<T>,
) -> Result<T> {
    let bits = cell_bits(lib, f, l)?;
    let theta = radio.sir_threshold();
    let hit_d = crate::geometry::hit_term(p_d, &network.d2d, theta)?;
    let hit_s = crate::geometry::hit_term(p_s, &network.sbs, theta)?;
    let p_m = stp_mbs(network.mbs.pathloss(), theta)?;
    let one = T::one();
    Ok((one - hit_d)
        * (one - hit_s)
        * bits
        * (radio.backhaul_rate.recip() + p_m / (radio.bandwidth_mbs * radio.spectral_efficiency())))
}

pub fn overall_delay<T: Real>(
    policy: &CachingPolicy<T>,
    lib: &ContentLibrary<T>,
    network: &NetworkGeometry<T>,
    radio: &RadioConfig<T>,
) -> Result<DelayBreakdown<T>> {
    DelayModel::new(lib, network, radio)?.evaluate(policy)
}

pub fn hit_rate<T: Real>(
    f: usize,
    l: usize,
    p_d: T,
    p_s: T,
    lib: &ContentLibrary<T>,
    network: &NetworkGeometry<T>,
    radio: &RadioConfig<T>,
) -> Result<T> {
    lib.demand().check(f, l)?;
    let theta = radio.sir_threshold();
    let hit_d = crate::geometry::hit_term(p_d, &network.d2d, theta)?;
    let hit_s = crate::geometry::hit_term(p_s, &network.sbs, theta)?;
    Ok(T::one() - (T::one() - hit_d) * (T::one() - hit_s))
}
