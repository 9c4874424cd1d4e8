//! Globally adaptive 15-point Gauss-Kronrod quadrature on a finite interval.

#![allow(clippy::excessive_precision)]

use crate::scalar::Real;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// 7-point Gauss weights for nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

const MAX_INTERVALS: usize = 1000;

#[derive(Debug, Clone, Copy)]
pub struct Integral<T> {
    pub value: T,
    pub abs_error: T,
    pub intervals: usize,
}

fn kronrod<T: Real>(f: &impl Fn(T) -> T, a: T, b: T) -> (T, T) {
    let half = T::lit(0.5);
    let center = half * (a + b);
    let half_len = half * (b - a);
    let fc = f(center);
    let mut kron = fc * T::lit(WGK[7]);
    let mut gauss = fc * T::lit(WG[3]);
    for (k, (&x, &w)) in XGK.iter().zip(&WGK).take(7).enumerate() {
        let dx = half_len * T::lit(x);
        let pair = f(center - dx) + f(center + dx);
        kron = kron + pair * T::lit(w);
        if k % 2 == 1 {
            gauss = gauss + pair * T::lit(WG[k / 2]);
        }
    }
    let value = kron * half_len;
    let err = ((kron - gauss) * half_len).abs();
    (value, err)
}

/// Integrates `f` over `[a, b]` until the estimated absolute error drops
/// below `tol`, always bisecting the interval with the largest error.
pub fn integrate<T: Real>(f: impl Fn(T) -> T, a: T, b: T, tol: T) -> Integral<T> {
    if a == b {
        return Integral {
            value: T::zero(),
            abs_error: T::zero(),
            intervals: 0,
        };
    }
    let (v, e) = kronrod(&f, a, b);
    let mut parts = vec![(a, b, v, e)];
    loop {
        let total_err: T = parts.iter().map(|p| p.3).sum();
        if total_err <= tol || parts.len() >= MAX_INTERVALS {
            let value = parts.iter().map(|p| p.2).sum();
            return Integral {
                value,
                abs_error: total_err,
                intervals: parts.len(),
            };
        }
        let worst = parts
            .iter()
            .enumerate()
            .max_by(|x, y| {
                x.1 .3
                    .partial_cmp(&y.1 .3)
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .map(|(i, _)| i)
            .unwrap_or(0);
        let (lo, hi, pv, pe) = parts.swap_remove(worst);
        let mid = T::lit(0.5) * (lo + hi);
        if mid <= lo || mid >= hi {
            // Interval can no longer be split in this precision.
            parts.push((lo, hi, pv, pe));
            return Integral {
                value: parts.iter().map(|p| p.2).sum(),
                abs_error: total_err,
                intervals: parts.len(),
            };
        }
        let (v1, e1) = kronrod(&f, lo, mid);
        let (v2, e2) = kronrod(&f, mid, hi);
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
}
