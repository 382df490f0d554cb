//! Dense 2×2 complex matrices for the two-level system.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

pub const I: C64 = C64::new(0.0, 1.0);
pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Row-major 2×2 complex matrix `[a00, a01, a10, a11]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Mat2(pub [C64; 4]);

impl Mat2 {
    pub const ZERO: Mat2 = Mat2([ZERO; 4]);
    pub const IDENTITY: Mat2 = Mat2([ONE, ZERO, ZERO, ONE]);
    pub const SIGMA_X: Mat2 = Mat2([ZERO, ONE, ONE, ZERO]);
    pub const SIGMA_Y: Mat2 = Mat2([ZERO, C64::new(0.0, -1.0), I, ZERO]);
    pub const SIGMA_Z: Mat2 = Mat2([ONE, ZERO, ZERO, C64::new(-1.0, 0.0)]);

    pub fn new(a00: C64, a01: C64, a10: C64, a11: C64) -> Self {
        Mat2([a00, a01, a10, a11])
    }

    pub fn from_real(a00: f64, a01: f64, a10: f64, a11: f64) -> Self {
        Mat2([a00.into(), a01.into(), a10.into(), a11.into()])
    }

    /// Projector onto the `+1` eigenstate of σ_z.
    pub fn up() -> Self {
        Mat2::from_real(1.0, 0.0, 0.0, 0.0)
    }

    /// Projector onto the `−1` eigenstate of σ_z.
    pub fn down() -> Self {
        Mat2::from_real(0.0, 0.0, 0.0, 1.0)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.0[2 * r + c]
    }

    #[inline]
    pub fn trace(&self) -> C64 {
        self.0[0] + self.0[3]
    }

    #[inline]
    pub fn dagger(&self) -> Self {
        let a = &self.0;
        Mat2([a[0].conj(), a[2].conj(), a[1].conj(), a[3].conj()])
    }

    #[inline]
    pub fn scale(&self, s: C64) -> Self {
        let a = &self.0;
        Mat2([a[0] * s, a[1] * s, a[2] * s, a[3] * s])
    }

    #[inline]
    pub fn scale_re(&self, s: f64) -> Self {
        let a = &self.0;
        Mat2([a[0] * s, a[1] * s, a[2] * s, a[3] * s])
    }

    #[inline]
    pub fn commutator(&self, other: &Mat2) -> Mat2 {
        *self * *other - *other * *self
    }

    /// `[σ_z, X]`
    #[inline]
    pub fn sz_commutator(&self) -> Mat2 {
        let a = &self.0;
        Mat2([ZERO, a[1] * 2.0, -a[2] * 2.0, ZERO])
    }

    /// `σ_z X`
    #[inline]
    pub fn sz_left(&self) -> Mat2 {
        let a = &self.0;
        Mat2([a[0], a[1], -a[2], -a[3]])
    }

    /// `X σ_z`
    #[inline]
    pub fn sz_right(&self) -> Mat2 {
        let a = &self.0;
        Mat2([a[0], -a[1], a[2], -a[3]])
    }

    /// `self += s * x`
    #[inline]
    pub fn axpy(&mut self, s: C64, x: &Mat2) {
        for (a, b) in self.0.iter_mut().zip(x.0.iter()) {
            *a += s * b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Largest entrywise deviation from Hermiticity.
    pub fn hermiticity_error(&self) -> f64 {
        (*self - self.dagger()).max_abs()
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    #[inline]
    fn add(self, o: Mat2) -> Mat2 {
        let (a, b) = (&self.0, &o.0);
        Mat2([a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]])
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    #[inline]
    fn sub(self, o: Mat2) -> Mat2 {
        let (a, b) = (&self.0, &o.0);
        Mat2([a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]])
    }
}

impl Neg for Mat2 {
    type Output = Mat2;
    #[inline]
    fn neg(self) -> Mat2 {
        let a = &self.0;
        Mat2([-a[0], -a[1], -a[2], -a[3]])
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    #[inline]
    fn mul(self, o: Mat2) -> Mat2 {
        let (a, b) = (&self.0, &o.0);
        Mat2([
            a[0] * b[0] + a[1] * b[2],
            a[0] * b[1] + a[1] * b[3],
            a[2] * b[0] + a[3] * b[2],
            a[2] * b[1] + a[3] * b[3],
        ])
    }
}

impl Mul<C64> for Mat2 {
    type Output = Mat2;
    #[inline]
    fn mul(self, s: C64) -> Mat2 {
        self.scale(s)
    }
}

impl Mul<f64> for Mat2 {
    type Output = Mat2;
    #[inline]
    fn mul(self, s: f64) -> Mat2 {
        self.scale_re(s)
    }
}

impl AddAssign for Mat2 {
    #[inline]
    fn add_assign(&mut self, o: Mat2) {
        for (a, b) in self.0.iter_mut().zip(o.0.iter()) {
            *a += b;
        }
    }
}

impl SubAssign for Mat2 {
    #[inline]
    fn sub_assign(&mut self, o: Mat2) {
        for (a, b) in self.0.iter_mut().zip(o.0.iter()) {
            *a -= b;
        }
    }
}
