//! Adaptive Gauss–Kronrod (7/15) quadrature for complex-valued integrands.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_3,
    0.949_107_912_342_758_524_526_189_684_047_9,
    0.864_864_423_359_769_072_789_712_788_640_9,
    0.741_531_185_599_394_439_863_864_773_280_8,
    0.586_087_235_467_691_130_294_144_845_693_0,
    0.405_845_151_377_397_166_906_606_412_076_9,
    0.207_784_955_007_898_467_600_689_403_773_2,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_97,
    0.063_092_092_629_978_553_290_700_663_189_20,
    0.104_790_010_322_250_183_839_876_322_541_5,
    0.140_653_259_715_525_918_745_189_590_510_2,
    0.169_004_726_639_267_902_826_583_426_598_6,
    0.190_350_578_064_785_409_913_256_402_421_0,
    0.204_432_940_075_298_892_414_161_999_234_6,
    0.209_482_141_084_727_828_012_999_174_891_7,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_1,
    0.279_705_391_489_276_667_901_467_771_423_8,
    0.381_830_050_505_118_944_950_369_775_488_98,
    0.417_959_183_673_469_387_755_102_040_816_3,
];

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: C64,
    pub error: f64,
    /// Integral of the absolute value of the integrand, used as an accuracy scale.
    pub abs_value: f64,
}

impl std::ops::Add for Integral {
    type Output = Integral;
    fn add(self, o: Integral) -> Integral {
        Integral {
            value: self.value + o.value,
            error: self.error + o.error,
            abs_value: self.abs_value + o.abs_value,
        }
    }
}

impl Integral {
    pub const ZERO: Integral = Integral {
        value: C64::new(0.0, 0.0),
        error: 0.0,
        abs_value: 0.0,
    };
}

fn gk15<F: Fn(f64) -> C64>(f: &F, a: f64, b: f64) -> Integral {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut abs = fc.norm() * WGK[7];
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        kronrod += (f1 + f2) * WGK[j];
        abs += (f1.norm() + f2.norm()) * WGK[j];
        if j % 2 == 1 {
            gauss += (f1 + f2) * WG[j / 2];
        }
    }
    Integral {
        value: kronrod * h,
        error: ((kronrod - gauss) * h).norm(),
        abs_value: abs * h.abs(),
    }
}

/// Integrates `f` over `[a, b]` by global adaptive bisection until the summed
/// error estimate falls below `max(abs_tol, rel_tol * ∫|f|)`.
pub fn integrate<F: Fn(f64) -> C64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> Result<Integral> {
    let first = gk15(&f, a, b);
    let mut intervals = vec![(a, b, first)];
    let mut total = first;
    loop {
        let target = abs_tol.max(rel_tol * total.abs_value);
        if total.error <= target {
            return Ok(total);
        }
        if intervals.len() >= max_intervals {
            return Err(Error::Quadrature {
                estimate: total.error,
                target,
            });
        }
        let (worst, _) = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2.error.total_cmp(&y.1 .2.error))
            .expect("non-empty interval list");
        let (lo, hi, old) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let left = gk15(&f, lo, mid);
        let right = gk15(&f, mid, hi);
        total.value += left.value + right.value - old.value;
        total.error += left.error + right.error - old.error;
        total.abs_value += left.abs_value + right.abs_value - old.abs_value;
        intervals.push((lo, mid, left));
        intervals.push((mid, hi, right));
        // keep the running error estimate from drifting negative through cancellation
        if total.error < 0.0 {
            total.error = intervals.iter().map(|iv| iv.2.error).sum();
        }
    }
}
