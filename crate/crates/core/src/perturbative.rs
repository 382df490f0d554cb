//! Second-order master equations: the time-nonlocal Born equation
//! ("Redfield-plus") and the conventional time-local Redfield equation.
//!
//! Both work in the interaction picture with respect to `H_s` and use the
//! exponential modes of the correlation function, `C(t) = Σ d_k e^{−z_k t}`.

use num_complex::Complex64 as C64;

use crate::bath::SpinSystem;
use crate::error::{Error, Result};
use crate::heom::{validate_initial, PropagatorConfig, Trajectory};
use crate::matrix::{Mat2, I};
use crate::modes::{reconstruct_correlation, ModeSet};

/// `q̂ᴵ(t)` and `C(t)` on the uniform solver grid.
#[derive(Debug, Clone)]
pub struct InteractionPictureCache {
    pub times: Vec<f64>,
    pub coupling: Vec<Mat2>,
    pub correlation: Vec<C64>,
    evolution: Vec<Mat2>,
}

impl InteractionPictureCache {
    pub fn new(sys: &SpinSystem, modes: &ModeSet, dt: f64, steps: usize) -> Self {
        let times: Vec<f64> = (0..=steps).map(|i| i as f64 * dt).collect();
        let evolution: Vec<Mat2> = times.iter().map(|&t| sys.evolution(t)).collect();
        let coupling = evolution
            .iter()
            .map(|u| u.dagger() * Mat2::SIGMA_Z * *u)
            .collect();
        let correlation = times
            .iter()
            .map(|&t| reconstruct_correlation(modes, t))
            .collect();
        InteractionPictureCache {
            times,
            coupling,
            correlation,
            evolution,
        }
    }

    /// Schrödinger-picture density at grid point `i`.
    fn to_schrodinger(&self, i: usize, rho_i: &Mat2) -> Mat2 {
        let u = &self.evolution[i];
        *u * *rho_i * u.dagger()
    }
}

/// `q̂ᴵ(t) = a + b e^{2iΩt} + b† e^{−2iΩt}` with `Ω = sqrt(ε² + Δ²)`.
#[derive(Debug, Clone, Copy)]
struct CouplingHarmonics {
    a: Mat2,
    b: Mat2,
    omega2: f64,
}

impl CouplingHarmonics {
    fn new(sys: &SpinSystem) -> Self {
        let omega = sys.half_splitting();
        if omega == 0.0 {
            return CouplingHarmonics {
                a: Mat2::SIGMA_Z,
                b: Mat2::ZERO,
                omega2: 0.0,
            };
        }
        let quarter = std::f64::consts::FRAC_PI_4 / omega;
        let q0 = sys.coupling_interaction(0.0);
        let q1 = sys.coupling_interaction(quarter);
        let q2 = sys.coupling_interaction(2.0 * quarter);
        let a = (q0 + q2).scale_re(0.5);
        let sum = (q0 - q2).scale_re(0.5);
        let diff = (q1 - a).scale(-I);
        CouplingHarmonics {
            a,
            b: (sum + diff).scale_re(0.5),
            omega2: 2.0 * omega,
        }
    }

    /// `Γ(t) = Σ_k d_k ∫₀ᵗ e^{−z_k(t−τ)} q̂ᴵ(τ) dτ`, in closed form.
    fn memory(&self, modes: &ModeSet, t: f64) -> Mat2 {
        let w = C64::new(0.0, self.omega2);
        let (ep, em) = ((w * t).exp(), (-w * t).exp());
        let mut out = Mat2::ZERO;
        for m in &modes.modes {
            let (d, z) = (m.amplitude, m.rate);
            let decay = (-z * t).exp();
            let g0 = (1.0 - decay) / z;
            let gp = (ep - decay) / (z + w);
            let gm = (em - decay) / (z - w);
            out.axpy(d * g0, &self.a);
            out.axpy(d * gp, &self.b);
            out.axpy(d * gm, &self.b.dagger());
        }
        out
    }
}

/// Weights `(w₀, w₁)` of `∫₀ʰ e^{−z(h−u)} f(u) du ≈ w₀ f(0) + w₁ f(h)` for
/// linear `f`, and the one-step decay `e^{−zh}`.
fn exponential_weights(z: C64, h: f64) -> (C64, C64, C64) {
    let x = z * h;
    let decay = (-x).exp();
    if x.norm() < 1e-3 {
        // series avoid the cancellation in 1 − e^{−x}(1 + x)
        let phi1 = 1.0 - x / 2.0 + x * x / 6.0 - x * x * x / 24.0;
        let phi2 = 0.5 - x / 6.0 + x * x / 24.0 - x * x * x / 120.0;
        let w1 = phi2 * h;
        return (decay, phi1 * h - w1, w1);
    }
    let total = (1.0 - decay) / z;
    let w1 = total - (1.0 - decay * (1.0 + x)) / (z * z * h);
    (decay, total - w1, w1)
}

/// `ρ̇ᴵ = −Σ_k [q̂ᴵ(t), d_k A_k − (d_k A_k)†]` with `A_k = ∫₀ᵗ e^{−z_k(t−τ)} q̂ᴵρᴵ dτ`.
fn born_rate(q: &Mat2, modes: &ModeSet, hist: &[Mat2]) -> Mat2 {
    let mut x = Mat2::ZERO;
    for (m, a) in modes.modes.iter().zip(hist) {
        x.axpy(m.amplitude, a);
    }
    let x = x - x.dagger();
    -(*q * x - x * *q)
}

fn check_config(cfg: &PropagatorConfig) -> Result<usize> {
    if !(cfg.dt > 0.0) || cfg.record_stride == 0 {
        return Err(Error::InvalidParameter {
            name: "cfg",
            reason: "dt and record_stride must be positive".into(),
        });
    }
    Ok(cfg.steps())
}

fn unstable(rho: &Mat2, last: f64) -> Result<()> {
    if !rho.is_finite() || rho.max_abs() > 1e150 {
        return Err(Error::Unstable {
            last_stable_time: last,
        });
    }
    Ok(())
}

/// Solves the time-nonlocal Born equation with full memory over `ρᴵ(τ)`.
///
/// Each mode's history integral is advanced by exact exponential weights for
/// a piecewise-linear integrand on the solver grid; the outer step is a
/// predictor-corrector (Heun) step.
pub fn redfield_plus_propagate(
    initial: &Mat2,
    sys: &SpinSystem,
    modes: &ModeSet,
    cfg: &PropagatorConfig,
) -> Result<Trajectory> {
    validate_initial(initial)?;
    let steps = check_config(cfg)?;
    let h = cfg.dt;
    let cache = InteractionPictureCache::new(sys, modes, h, steps);
    let weights: Vec<(C64, C64, C64)> = modes
        .modes
        .iter()
        .map(|m| exponential_weights(m.rate, h))
        .collect();

    let mut rho = *initial;
    let mut hist = vec![Mat2::ZERO; modes.len()];
    let mut next = vec![Mat2::ZERO; modes.len()];
    let mut traj = Trajectory::default();
    traj.times.push(0.0);
    traj.rho.push(*initial);

    let advance = |hist: &[Mat2], next: &mut [Mat2], f0: &Mat2, f1: &Mat2| {
        for ((n, a), (decay, w0, w1)) in next.iter_mut().zip(hist).zip(&weights) {
            *n = a.scale(*decay) + f0.scale(*w0) + f1.scale(*w1);
        }
    };

    let mut rate = born_rate(&cache.coupling[0], modes, &hist);
    for i in 0..steps {
        let (q0, q1) = (&cache.coupling[i], &cache.coupling[i + 1]);
        let f0 = *q0 * rho;
        let predicted = rho + rate.scale_re(h);
        advance(&hist, &mut next, &f0, &(*q1 * predicted));
        let rate_p = born_rate(q1, modes, &next);
        rho = rho + (rate + rate_p).scale_re(0.5 * h);
        advance(&hist, &mut next, &f0, &(*q1 * rho));
        std::mem::swap(&mut hist, &mut next);
        rate = born_rate(q1, modes, &hist);
        unstable(&rho, cache.times[i])?;
        if (i + 1) % cfg.record_stride == 0 || i + 1 == steps {
            traj.times.push(cache.times[i + 1]);
            traj.rho.push(cache.to_schrodinger(i + 1, &rho));
        }
    }
    Ok(traj)
}

/// Solves the time-local Redfield equation `ρ̇ᴵ = −[q̂ᴵ(t), Γ(t)ρᴵ − ρᴵΓ(t)†]`
/// by fixed-step RK4.
pub fn redfield_propagate(
    initial: &Mat2,
    sys: &SpinSystem,
    modes: &ModeSet,
    cfg: &PropagatorConfig,
) -> Result<Trajectory> {
    validate_initial(initial)?;
    let steps = check_config(cfg)?;
    let h = cfg.dt;
    let harm = CouplingHarmonics::new(sys);
    let rhs = |t: f64, rho: &Mat2| {
        let q = sys.coupling_interaction(t);
        let g = harm.memory(modes, t);
        let x = g * *rho - *rho * g.dagger();
        -(q * x - x * q)
    };
    let mut rho = *initial;
    let mut traj = Trajectory::default();
    traj.times.push(0.0);
    traj.rho.push(*initial);
    for i in 0..steps {
        let t = i as f64 * h;
        let k1 = rhs(t, &rho);
        let k2 = rhs(t + 0.5 * h, &(rho + k1.scale_re(0.5 * h)));
        let k3 = rhs(t + 0.5 * h, &(rho + k2.scale_re(0.5 * h)));
        let k4 = rhs(t + h, &(rho + k3.scale_re(h)));
        rho = rho + (k1 + k2.scale_re(2.0) + k3.scale_re(2.0) + k4).scale_re(h / 6.0);
        unstable(&rho, t)?;
        if (i + 1) % cfg.record_stride == 0 || i + 1 == steps {
            let t1 = (i + 1) as f64 * h;
            let u = sys.evolution(t1);
            traj.times.push(t1);
            traj.rho.push(u * rho * u.dagger());
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heom::observe_population;
    use crate::modes::BathMode;

    fn single_mode() -> ModeSet {
        let mut m = ModeSet::empty(1e-3);
        m.modes
            .push(BathMode::new(C64::new(0.4, -0.2), C64::new(2.0, 3.0)).unwrap());
        m
    }

    #[test]
    fn harmonics_reproduce_interaction_coupling() {
        let sys = SpinSystem::new(0.3, 0.8).unwrap();
        let h = CouplingHarmonics::new(&sys);
        for t in [0.0, 0.37, 1.9, 5.2] {
            let w = C64::new(0.0, h.omega2 * t);
            let q = h.a + h.b.scale(w.exp()) + h.b.dagger().scale((-w).exp());
            assert!((q - sys.coupling_interaction(t)).max_abs() < 1e-13);
        }
    }

    #[test]
    fn closed_form_memory_matches_quadrature() {
        let sys = SpinSystem::new(0.2, 1.0).unwrap();
        let modes = single_mode();
        let harm = CouplingHarmonics::new(&sys);
        let t = 1.3;
        let n = 20000;
        let h = t / n as f64;
        let mut acc = Mat2::ZERO;
        for j in 0..=n {
            let tau = j as f64 * h;
            let w = if j == 0 || j == n { 0.5 } else { 1.0 };
            acc.axpy(
                reconstruct_correlation(&modes, t - tau) * (w * h),
                &sys.coupling_interaction(tau),
            );
        }
        assert!((harm.memory(&modes, t) - acc).max_abs() < 1e-7);
    }

    #[test]
    fn exponential_weights_integrate_linear_functions() {
        for z in [
            C64::new(3.0, 2.0),
            C64::new(1e-5, 1e-5),
            C64::new(40.0, -70.0),
        ] {
            let h = 0.01;
            let (decay, w0, w1) = exponential_weights(z, h);
            assert!((decay - (-z * h).exp()).norm() < 1e-15);
            // f(u) = 2 + 5u
            let exact = crate::quadrature::integrate(
                |u| (-z * (h - u)).exp() * (2.0 + 5.0 * u),
                0.0,
                h,
                1e-18,
                1e-14,
                100,
            )
            .unwrap()
            .value;
            let approx = w0 * 2.0 + w1 * (2.0 + 5.0 * h);
            assert!(
                (exact - approx).norm() < 1e-12 * exact.norm(),
                "{z}: {exact} vs {approx}"
            );
        }
    }

    #[test]
    fn free_dynamics_without_bath() {
        let sys = SpinSystem::new(0.0, 1.0).unwrap();
        let modes = ModeSet::empty(1e-3);
        let cfg = PropagatorConfig::new(0.01, 5.0, 10, &modes).unwrap();
        for traj in [
            redfield_plus_propagate(&Mat2::up(), &sys, &modes, &cfg).unwrap(),
            redfield_propagate(&Mat2::up(), &sys, &modes, &cfg).unwrap(),
        ] {
            let p = observe_population(&traj);
            for (t, v) in p.times.iter().zip(&p.values) {
                assert!((v - (2.0 * t).cos()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn solvers_conserve_trace_and_hermiticity() {
        let sys = SpinSystem::new(0.3, 1.0).unwrap();
        let modes = single_mode();
        let cfg = PropagatorConfig::new(0.005, 4.0, 20, &modes).unwrap();
        for traj in [
            redfield_plus_propagate(&Mat2::up(), &sys, &modes, &cfg).unwrap(),
            redfield_propagate(&Mat2::up(), &sys, &modes, &cfg).unwrap(),
        ] {
            assert!(traj.max_trace_error() < 1e-12);
            assert!(traj.max_hermiticity_error() < 1e-12);
        }
    }

    #[test]
    fn short_time_agreement_is_third_order() {
        let sys = SpinSystem::new(0.0, 1.0).unwrap();
        let modes = single_mode();
        let mut gaps = Vec::new();
        for t in [0.2, 0.1] {
            let cfg = PropagatorConfig::new(t / 400.0, t, 400, &modes).unwrap();
            let a = redfield_plus_propagate(&Mat2::up(), &sys, &modes, &cfg).unwrap();
            let b = redfield_propagate(&Mat2::up(), &sys, &modes, &cfg).unwrap();
            gaps.push((a.rho[1] - b.rho[1]).max_abs());
        }
        // halving t must shrink the gap at least as fast as t³
        let ratio = gaps[0] / gaps[1];
        assert!(ratio > 6.0, "ratio {ratio}, gaps {gaps:?}");
    }
}
