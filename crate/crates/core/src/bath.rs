//! Spin system, spectral density, noise power, and the quadrature reference
//! for the bath correlation function.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Mat2;
use crate::quadrature::{integrate, Integral};

/// Two-level system `H_s = ε σ_z + Δ σ_x`, coupled to the bath through σ_z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinSystem {
    pub epsilon: f64,
    pub delta: f64,
}

impl SpinSystem {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !epsilon.is_finite() {
            return Err(Error::InvalidParameter {
                name: "epsilon",
                reason: "must be finite".into(),
            });
        }
        if !delta.is_finite() || delta < 0.0 {
            return Err(Error::InvalidParameter {
                name: "delta",
                reason: format!("must be finite and >= 0, got {delta}"),
            });
        }
        Ok(SpinSystem { epsilon, delta })
    }

    pub fn hamiltonian(&self) -> Mat2 {
        Mat2::from_real(self.epsilon, self.delta, self.delta, -self.epsilon)
    }

    /// The coupling operator q̂.
    pub fn coupling_operator(&self) -> Mat2 {
        Mat2::SIGMA_Z
    }

    /// Half of the level splitting, `sqrt(ε² + Δ²)`.
    pub fn half_splitting(&self) -> f64 {
        self.epsilon.hypot(self.delta)
    }

    /// `exp(−i H_s t)` in closed form.
    pub fn evolution(&self, t: f64) -> Mat2 {
        let omega = self.half_splitting();
        if omega == 0.0 {
            return Mat2::IDENTITY;
        }
        let (sin, cos) = (omega * t).sin_cos();
        let h = self.hamiltonian().scale_re(1.0 / omega);
        Mat2::IDENTITY.scale_re(cos) - h.scale(C64::new(0.0, sin))
    }

    /// Interaction-picture coupling operator `e^{iH t} σ_z e^{−iH t}`.
    pub fn coupling_interaction(&self, t: f64) -> Mat2 {
        let u = self.evolution(t);
        u.dagger() * Mat2::SIGMA_Z * u
    }
}

/// Parameters of `J(ω) = (π/2) α ω_c^{1−s} ω^s e^{−ω/ω_c}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralParams {
    pub alpha: f64,
    pub s: f64,
    pub omega_c: f64,
}

impl SpectralParams {
    pub fn new(alpha: f64, s: f64, omega_c: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "alpha",
                reason: format!("must be >= 0, got {alpha}"),
            });
        }
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::InvalidParameter {
                name: "s",
                reason: format!("must lie in [0, 1], got {s}"),
            });
        }
        if !(omega_c > 0.0 && omega_c.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "omega_c",
                reason: format!("must be > 0, got {omega_c}"),
            });
        }
        Ok(SpectralParams { alpha, s, omega_c })
    }
}

/// Inverse temperature; `Infinite` is the zero-temperature limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InverseTemperature {
    Infinite,
    Finite(f64),
}

impl InverseTemperature {
    /// Builds β from a temperature `T ≥ 0`; `T = 0` maps to `Infinite`.
    pub fn from_temperature(temperature: f64) -> Result<Self> {
        if !(temperature >= 0.0 && temperature.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "temperature",
                reason: format!("must be finite and >= 0, got {temperature}"),
            });
        }
        Ok(if temperature == 0.0 {
            InverseTemperature::Infinite
        } else {
            InverseTemperature::Finite(1.0 / temperature)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathSpec {
    pub spectral: SpectralParams,
    pub beta: InverseTemperature,
}

impl BathSpec {
    pub fn new(spectral: SpectralParams, beta: InverseTemperature) -> Result<Self> {
        if let InverseTemperature::Finite(b) = beta {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: "beta",
                    reason: format!("must be > 0, got {b}"),
                });
            }
        }
        Ok(BathSpec { spectral, beta })
    }

    pub fn zero_temperature(spectral: SpectralParams) -> Self {
        BathSpec {
            spectral,
            beta: InverseTemperature::Infinite,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpacingKind {
    Uniform,
    Logarithmic,
    Composite,
}

/// Strictly increasing list of finite sample points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleGrid {
    points: Vec<f64>,
    spacing: SpacingKind,
}

impl SampleGrid {
    pub fn new(points: Vec<f64>, spacing: SpacingKind) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParameter {
                name: "grid",
                reason: "must be nonempty".into(),
            });
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "grid",
                reason: "points must be finite".into(),
            });
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter {
                name: "grid",
                reason: "points must be strictly increasing".into(),
            });
        }
        Ok(SampleGrid { points, spacing })
    }

    pub fn uniform(start: f64, end: f64, n: usize) -> Result<Self> {
        if n == 1 {
            return SampleGrid::new(vec![start], SpacingKind::Uniform);
        }
        let h = (end - start) / (n - 1) as f64;
        SampleGrid::new(
            (0..n).map(|i| start + h * i as f64).collect(),
            SpacingKind::Uniform,
        )
    }

    pub fn logarithmic(start: f64, end: f64, n: usize) -> Result<Self> {
        if !(start > 0.0 && end > start) {
            return Err(Error::InvalidParameter {
                name: "grid",
                reason: "logarithmic grid needs 0 < start < end".into(),
            });
        }
        let (a, b) = (start.ln(), end.ln());
        let h = if n > 1 { (b - a) / (n - 1) as f64 } else { 0.0 };
        let mut pts: Vec<f64> = (0..n).map(|i| (a + h * i as f64).exp()).collect();
        if n > 1 {
            pts[0] = start;
            pts[n - 1] = end;
        }
        SampleGrid::new(pts, SpacingKind::Logarithmic)
    }

    /// Frequency grid for rational fitting of the noise power: `points_per_side`
    /// logarithmic points on `[lo·ω_c, hi·ω_c]`, the mirrored negative points, and ω = 0.
    pub fn symmetric_logarithmic(
        omega_c: f64,
        lo: f64,
        hi: f64,
        points_per_side: usize,
    ) -> Result<Self> {
        let pos = SampleGrid::logarithmic(lo * omega_c, hi * omega_c, points_per_side)?;
        let mut pts: Vec<f64> = pos.points.iter().rev().map(|w| -w).collect();
        pts.push(0.0);
        pts.extend_from_slice(&pos.points);
        SampleGrid::new(pts, SpacingKind::Composite)
    }

    /// Time grid `{0} ∪ logspace(t_min, t_max, n)`.
    pub fn certification(t_min: f64, t_max: f64, n: usize) -> Result<Self> {
        let log = SampleGrid::logarithmic(t_min, t_max, n)?;
        let mut pts = vec![0.0];
        pts.extend_from_slice(&log.points);
        SampleGrid::new(pts, SpacingKind::Composite)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn spacing(&self) -> SpacingKind {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// `J(ω)` for `ω ≥ 0`.
pub fn spectral_density(omega: f64, p: &SpectralParams) -> Result<f64> {
    if !(omega >= 0.0) {
        return Err(Error::Domain(format!(
            "spectral density is defined for omega >= 0, got {omega}"
        )));
    }
    Ok(spectral_density_unchecked(omega, p))
}

#[inline]
pub(crate) fn spectral_density_unchecked(omega: f64, p: &SpectralParams) -> f64 {
    if p.alpha == 0.0 {
        return 0.0;
    }
    FRAC_PI_2 * p.alpha * p.omega_c.powf(1.0 - p.s) * omega.powf(p.s) * (-omega / p.omega_c).exp()
}

/// Quantum noise power `S_β(ω) = 2[n_β(ω) + 1] J(ω)`, extended to ω < 0 by detailed balance.
pub fn noise_power(omega: f64, b: &BathSpec) -> f64 {
    let w = omega.abs();
    let j = spectral_density_unchecked(w, &b.spectral);
    match b.beta {
        InverseTemperature::Infinite => {
            if omega > 0.0 {
                2.0 * j
            } else {
                0.0
            }
        }
        InverseTemperature::Finite(beta) => {
            if omega == 0.0 {
                // 2J(ω)/(βω) as ω → 0
                let p = &b.spectral;
                if p.alpha == 0.0 {
                    0.0
                } else if p.s == 1.0 {
                    2.0 * FRAC_PI_2 * p.alpha / beta
                } else {
                    f64::INFINITY
                }
            } else {
                // 1 − e^{−β|ω|}
                let denom = -(-beta * w).exp_m1();
                if omega > 0.0 {
                    2.0 * j / denom
                } else {
                    2.0 * j * (-beta * w).exp() / denom
                }
            }
        }
    }
}

/// Upper frequency beyond which the exponential cutoff makes the integrand negligible.
fn frequency_ceiling(p: &SpectralParams) -> f64 {
    50.0 * p.omega_c
}

/// Power of ω governing the integrand `J(ω)·coth(βω/2)` at small ω.
fn small_frequency_exponent(b: &BathSpec) -> f64 {
    match b.beta {
        InverseTemperature::Infinite => b.spectral.s,
        InverseTemperature::Finite(_) => b.spectral.s - 1.0,
    }
}

/// `(2/π) J(ω) [coth(βω/2) cos ωt − i sin ωt]`, the one-sided integrand of C(t).
fn correlation_integrand(omega: f64, t: f64, b: &BathSpec) -> C64 {
    let j = spectral_density_unchecked(omega, &b.spectral);
    if j == 0.0 {
        return C64::new(0.0, 0.0);
    }
    let (sin, cos) = (omega * t).sin_cos();
    let coth = match b.beta {
        InverseTemperature::Infinite => 1.0,
        InverseTemperature::Finite(beta) => {
            let x = beta * omega;
            // coth(x/2) = (1 + e^{-x}) / (1 − e^{-x})
            (1.0 + (-x).exp()) / -(-x).exp_m1()
        }
    };
    C64::new(coth * cos, -sin) * (2.0 / PI * j)
}

fn integrate_correlation(t: f64, b: &BathSpec, abs_tol: f64, rel_tol: f64) -> Result<Integral> {
    let p = &b.spectral;
    if p.alpha == 0.0 {
        return Ok(Integral::ZERO);
    }
    let a = small_frequency_exponent(b);
    if a <= -1.0 {
        return Err(Error::Domain(format!(
            "C(t) diverges for s = {} at finite temperature",
            p.s
        )));
    }
    let split = 1.0 / t.abs().max(1.0 / p.omega_c);
    let ceiling = frequency_ceiling(p);
    let max_iv = 4000;

    // ω = split · u^k removes the algebraic endpoint behaviour ω^a.
    let k = 2.0 / (a + 1.0);
    let low = integrate(
        |u: f64| {
            let omega = split * u.powf(k);
            correlation_integrand(omega, t, b) * (split * k * u.powf(k - 1.0))
        },
        0.0,
        1.0,
        abs_tol * 0.5,
        rel_tol,
        max_iv,
    )?;

    let width = if t == 0.0 {
        ceiling
    } else {
        FRAC_PI_4 / t.abs()
    };
    let panels = ((ceiling - split) / width).ceil().max(1.0) as usize;
    let panel_width = (ceiling - split) / panels as f64;
    let panel_tol = abs_tol * 0.5 / panels as f64;
    let mut high = Integral::ZERO;
    for i in 0..panels {
        let lo = split + panel_width * i as f64;
        let hi = if i + 1 == panels {
            ceiling
        } else {
            lo + panel_width
        };
        high = high
            + integrate(
                |w| correlation_integrand(w, t, b),
                lo,
                hi,
                panel_tol,
                rel_tol,
                max_iv,
            )?;
    }
    Ok(low + high)
}

/// Scale of the correlation function, `∫(2/π) J(ω) coth(βω/2) dω`; equals C(0).
pub fn correlation_scale(b: &BathSpec, quad_tol: f64) -> Result<f64> {
    Ok(integrate_correlation(0.0, b, 0.0, quad_tol * 0.1)?.value.re)
}

/// `C(t) = (1/π) ∫ S_β(ω) e^{−iωt} dω` by adaptive quadrature, for any real `t`.
///
/// The accuracy target is `quad_tol` relative to `C(0)`.
pub fn correlation_integral(t: f64, b: &BathSpec, quad_tol: f64) -> Result<C64> {
    if !(quad_tol > 0.0) {
        return Err(Error::InvalidParameter {
            name: "quad_tol",
            reason: "must be > 0".into(),
        });
    }
    let scale = correlation_scale(b, quad_tol)?;
    Ok(integrate_correlation(t, b, quad_tol * scale, 0.0)?.value)
}

/// Quadrature reference for the bath correlation function at `t ≥ 0`.
pub fn correlation_oracle(t: f64, b: &BathSpec, quad_tol: f64) -> Result<C64> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!(
            "correlation oracle requires t >= 0, got {t}"
        )));
    }
    correlation_integral(t, b, quad_tol)
}

/// Evaluates the oracle on every point of a grid, reusing the normalisation.
pub fn correlation_on_grid(grid: &[f64], b: &BathSpec, quad_tol: f64) -> Result<Vec<C64>> {
    let scale = correlation_scale(b, quad_tol)?;
    grid.iter()
        .map(|&t| {
            if t < 0.0 {
                return Err(Error::Domain(format!(
                    "correlation oracle requires t >= 0, got {t}"
                )));
            }
            Ok(integrate_correlation(t, b, quad_tol * scale, 0.0)?.value)
        })
        .collect()
}
