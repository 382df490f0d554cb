//! Non-interacting blip approximation for the unbiased spin-boson model.

use std::f64::consts::{FRAC_PI_4, PI};

use num_complex::Complex64 as C64;

use crate::bath::{
    spectral_density_unchecked, BathSpec, InverseTemperature, SpectralParams, SpinSystem,
};
use crate::error::{Error, Result};
use crate::quadrature::{integrate, Integral};
use statrs::function::gamma::gamma;

/// Pair interaction `Q(t) = Q′(t) + iQ″(t)` on a time grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairInteraction {
    pub times: Vec<f64>,
    pub q_real: Vec<f64>,
    pub q_imag: Vec<f64>,
}

/// `(8/π) J(ω)/ω² [coth(βω/2)(1 − cos ωt) + i sin ωt]`
fn pair_integrand(omega: f64, t: f64, b: &BathSpec) -> C64 {
    let j = spectral_density_unchecked(omega, &b.spectral);
    if j == 0.0 {
        return C64::new(0.0, 0.0);
    }
    let coth = match b.beta {
        InverseTemperature::Infinite => 1.0,
        InverseTemperature::Finite(beta) => {
            let x = beta * omega;
            (1.0 + (-x).exp()) / -(-x).exp_m1()
        }
    };
    let half = (0.5 * omega * t).sin();
    let pref = 8.0 / PI * j / (omega * omega);
    C64::new(coth * 2.0 * half * half, (omega * t).sin()) * pref
}

fn check_domain(b: &BathSpec, t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!(
            "pair interaction requires t >= 0, got {t}"
        )));
    }
    if b.spectral.s <= 0.0 && b.spectral.alpha > 0.0 {
        return Err(Error::Domain(format!(
            "Q′(t) diverges for s = {} (need s > 0)",
            b.spectral.s
        )));
    }
    Ok(())
}

/// `(Q′(t), Q″(t))` by adaptive quadrature to absolute accuracy `quad_tol`.
pub fn pair_interaction(t: f64, b: &BathSpec, quad_tol: f64) -> Result<(f64, f64)> {
    check_domain(b, t)?;
    if !(quad_tol > 0.0) {
        return Err(Error::InvalidParameter {
            name: "quad_tol",
            reason: "must be > 0".into(),
        });
    }
    let p = &b.spectral;
    if t == 0.0 || p.alpha == 0.0 {
        return Ok((0.0, 0.0));
    }
    let ceiling = 50.0 * p.omega_c;
    let split = (1.0 / t).min(p.omega_c);
    let max_iv = 4000;
    // the imaginary part behaves as ω^{s−1} near zero; ω = split·u^{1/s} flattens it
    let k = 1.0 / p.s;
    let low = integrate(
        |u: f64| {
            let omega = split * u.powf(k);
            pair_integrand(omega, t, b) * (split * k * u.powf(k - 1.0))
        },
        0.0,
        1.0,
        0.5 * quad_tol,
        0.0,
        max_iv,
    )?;
    let width = FRAC_PI_4 / t;
    let panels = ((ceiling - split) / width).ceil().max(1.0) as usize;
    let panel_width = (ceiling - split) / panels as f64;
    let panel_tol = 0.5 * quad_tol / panels as f64;
    let mut high = Integral::ZERO;
    for i in 0..panels {
        let lo = split + panel_width * i as f64;
        let hi = if i + 1 == panels {
            ceiling
        } else {
            lo + panel_width
        };
        high = high + integrate(|w| pair_integrand(w, t, b), lo, hi, panel_tol, 0.0, max_iv)?;
    }
    let q = (low + high).value;
    Ok((q.re, q.im))
}

/// Closed form of `Q(t)` at zero temperature:
/// `4αΓ(s)/(1−s)·[(1 + iω_c t)^{1−s} − 1]`, and `4α ln(1 + iω_c t)` for s = 1.
pub fn pair_interaction_zero_temperature(t: f64, p: &SpectralParams) -> Result<(f64, f64)> {
    if p.s <= 0.0 && p.alpha > 0.0 {
        return Err(Error::Domain(format!(
            "Q′(t) diverges for s = {} (need s > 0)",
            p.s
        )));
    }
    let z = C64::new(1.0, p.omega_c * t);
    let q = if (1.0 - p.s).abs() < 1e-12 {
        4.0 * p.alpha * z.ln()
    } else {
        let g = gamma(p.s);
        4.0 * p.alpha * g / (1.0 - p.s) * (z.powf(1.0 - p.s) - 1.0)
    };
    Ok((q.re, q.im))
}

/// Pair interaction on every point of a grid.
pub fn pair_interaction_series(
    times: &[f64],
    b: &BathSpec,
    quad_tol: f64,
) -> Result<PairInteraction> {
    let mut out = PairInteraction {
        times: times.to_vec(),
        ..Default::default()
    };
    for &t in times {
        let (re, im) = pair_interaction(t, b, quad_tol)?;
        out.q_real.push(re);
        out.q_imag.push(im);
    }
    Ok(out)
}

fn check_unbiased(sys: &SpinSystem) -> Result<()> {
    if sys.epsilon != 0.0 {
        return Err(Error::Unsupported(format!(
            "NIBA kernel is implemented for ε = 0 only, got ε = {}",
            sys.epsilon
        )));
    }
    Ok(())
}

/// `K(t) = 4Δ² e^{−Q′(t)} cos Q″(t)`.
pub fn niba_kernel(t: f64, sys: &SpinSystem, b: &BathSpec, quad_tol: f64) -> Result<f64> {
    check_unbiased(sys)?;
    let (qr, qi) = pair_interaction(t, b, quad_tol)?;
    Ok(kernel_from_pair(sys.delta, qr, qi))
}

fn kernel_from_pair(delta: f64, qr: f64, qi: f64) -> f64 {
    4.0 * delta * delta * (-qr).exp() * qi.cos()
}

/// NIBA kernel on a grid, with the pair interaction it was built from.
pub fn niba_kernel_series(
    times: &[f64],
    sys: &SpinSystem,
    b: &BathSpec,
    quad_tol: f64,
) -> Result<(Vec<f64>, PairInteraction)> {
    check_unbiased(sys)?;
    let q = pair_interaction_series(times, b, quad_tol)?;
    let k = q
        .q_real
        .iter()
        .zip(&q.q_imag)
        .map(|(&r, &i)| kernel_from_pair(sys.delta, r, i))
        .collect();
    Ok((k, q))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bath(alpha: f64, s: f64) -> BathSpec {
        BathSpec::zero_temperature(SpectralParams::new(alpha, s, 20.0).unwrap())
    }

    #[test]
    fn ohmic_closed_form() {
        let b = bath(0.1, 1.0);
        for t in [0.01, 0.3, 1.0, 4.0, 10.0] {
            let (re, im) = pair_interaction(t, &b, 1e-10).unwrap();
            let x = 20.0 * t;
            assert!(
                (re - 2.0 * 0.1 * (1.0 + x * x).ln()).abs() < 1e-8,
                "t={t} re={re}"
            );
            assert!((im - 4.0 * 0.1 * x.atan()).abs() < 1e-8, "t={t} im={im}");
        }
    }

    #[test]
    fn sub_ohmic_matches_zero_temperature_closed_form() {
        for s in [0.25, 0.5, 0.75] {
            let b = bath(0.05, s);
            for t in [0.05, 1.0, 7.0] {
                let (re, im) = pair_interaction(t, &b, 1e-10).unwrap();
                let (cr, ci) = pair_interaction_zero_temperature(t, &b.spectral).unwrap();
                assert!(
                    (re - cr).abs() < 1e-8 && (im - ci).abs() < 1e-8,
                    "s={s} t={t}: {re},{im} vs {cr},{ci}"
                );
            }
        }
    }

    #[test]
    fn trivial_limits() {
        let b = bath(0.05, 0.5);
        assert_eq!(pair_interaction(0.0, &b, 1e-10).unwrap(), (0.0, 0.0));
        assert_eq!(
            pair_interaction(3.0, &bath(0.0, 0.5), 1e-10).unwrap(),
            (0.0, 0.0)
        );
        let sys = SpinSystem::new(0.0, 1.0).unwrap();
        assert_eq!(niba_kernel(0.0, &sys, &b, 1e-10).unwrap(), 4.0);
        assert_eq!(niba_kernel(2.0, &sys, &bath(0.0, 0.5), 1e-10).unwrap(), 4.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            pair_interaction(1.0, &bath(0.1, 0.0), 1e-10),
            Err(Error::Domain(_))
        ));
        let biased = SpinSystem::new(0.5, 1.0).unwrap();
        assert!(matches!(
            niba_kernel(1.0, &biased, &bath(0.1, 0.5), 1e-10),
            Err(Error::Unsupported(_))
        ));
    }
}
