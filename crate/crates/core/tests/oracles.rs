//! Reference values computed independently (high-precision quadrature of the
//! defining integrals, closed-form solutions) and frozen here.

use num_complex::Complex64 as C64;

use fpheom::barycentric::{aaa_fit, poles_and_residues, PoleResidue};
use fpheom::bath::SpinSystem;
use fpheom::bath::{
    correlation_integral, correlation_oracle, noise_power, spectral_density, BathSpec,
    InverseTemperature, SampleGrid, SpectralParams,
};
use fpheom::gme::{asymptotic_rate, extract_kernel, gme_forward, MemoryKernelSeries};
use fpheom::modes::{decompose, modes_from_poles, reconstruct_correlation, FitOptions};
use fpheom::niba::{niba_kernel, pair_interaction, pair_interaction_zero_temperature};

fn half_ohmic() -> SpectralParams {
    SpectralParams::new(0.1, 0.5, 20.0).unwrap()
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs().max(1e-300)
}

#[test]
fn spectral_density_values() {
    let p = half_ohmic();
    assert_eq!(spectral_density(0.0, &p).unwrap(), 0.0);
    assert!(close(
        spectral_density(20.0, &p).unwrap(),
        1.155_727_349_790_921_7,
        1e-14
    ));
    assert_eq!(
        spectral_density(5.0, &SpectralParams::new(0.0, 0.5, 20.0).unwrap()).unwrap(),
        0.0
    );
}

#[test]
fn noise_power_values() {
    let b = BathSpec::zero_temperature(half_ohmic());
    assert_eq!(noise_power(-3.0, &b), 0.0);
    assert!(close(noise_power(20.0, &b), 2.311_454_699_581_843_4, 1e-14));
    let warm = BathSpec::new(half_ohmic(), InverseTemperature::Finite(2.0)).unwrap();
    assert!(close(
        noise_power(-1.0, &warm) / noise_power(1.0, &warm),
        (-2.0f64).exp(),
        1e-12
    ));
}

#[test]
fn correlation_matches_high_precision_quadrature() {
    let b = BathSpec::zero_temperature(half_ohmic());
    let reference = [
        (0.0, C64::new(35.449_077_018_110_32, 0.0)),
        (
            0.05,
            C64::new(8.066_257_758_615_742, -19.473_668_878_447_327),
        ),
        (
            1.0,
            C64::new(-0.257_997_865_964_914_5, -0.299_882_511_389_982_55),
        ),
        (
            5.0,
            C64::new(-0.024_685_644_019_601_246, -0.025_437_522_850_572_998),
        ),
    ];
    for (t, c) in reference {
        let got = correlation_oracle(t, &b, 1e-10).unwrap();
        assert!((got - c).norm() <= 1e-8 * 35.45, "t={t}: {got} vs {c}");
    }
    assert_eq!(correlation_integral(0.0, &b, 1e-10).unwrap().im, 0.0);
}

#[test]
fn correlation_decays_algebraically() {
    let b = BathSpec::zero_temperature(half_ohmic());
    let ts = [50.0f64, 100.0, 200.0];
    let logs: Vec<(f64, f64)> = ts
        .iter()
        .map(|&t| {
            (
                t.ln(),
                correlation_oracle(t, &b, 1e-10).unwrap().norm().ln(),
            )
        })
        .collect();
    let n = logs.len() as f64;
    let (sx, sy): (f64, f64) = logs.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let sxx: f64 = logs.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = logs.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    assert!((slope + 1.5).abs() < 0.15, "slope {slope}");
}

#[test]
fn lorentzian_fit_recovers_poles_and_residues() {
    let grid = SampleGrid::uniform(-10.0, 10.0, 201).unwrap();
    let values: Vec<f64> = grid.points().iter().map(|w| 1.0 / (w * w + 1.0)).collect();
    let a = aaa_fit(grid.points(), &values, 1e-13, 20).unwrap();
    assert_eq!(a.degree(), 2);
    let mut pr = poles_and_residues(&a).unwrap();
    pr.sort_by(|x, y| x.pole.im.total_cmp(&y.pole.im));
    assert!((pr[0].pole - C64::new(0.0, -1.0)).norm() < 1e-10);
    assert!((pr[1].pole - C64::new(0.0, 1.0)).norm() < 1e-10);
    assert!((pr[0].residue - C64::new(0.0, 0.5)).norm() < 1e-10);
    assert!((pr[1].residue - C64::new(0.0, -0.5)).norm() < 1e-10);
}

#[test]
fn lorentzian_pole_gives_one_mode() {
    let (lambda, gamma, omega) = (0.7, 1.3, 2.0);
    let pr = [
        PoleResidue {
            pole: C64::new(omega, -gamma),
            residue: C64::new(0.0, lambda),
        },
        PoleResidue {
            pole: C64::new(omega, gamma),
            residue: C64::new(0.0, -lambda),
        },
    ];
    let m = modes_from_poles(&pr, 1e-3);
    assert_eq!(m.len(), 1);
    assert!((m.modes[0].amplitude - C64::new(2.0 * lambda, 0.0)).norm() < 1e-15);
    assert!((m.modes[0].rate - C64::new(gamma, omega)).norm() < 1e-15);
    let t = 0.8;
    let exact = 2.0 * lambda * (-gamma * t).exp() * C64::new(0.0, -omega * t).exp();
    assert!((reconstruct_correlation(&m, t) - exact).norm() < 1e-14);
}

#[test]
fn certified_modes_reproduce_initial_correlation() {
    let d = decompose(
        &BathSpec::zero_temperature(half_ohmic()),
        &FitOptions::default(),
    )
    .unwrap();
    let c0 = reconstruct_correlation(&d.modes, 0.0);
    assert!(
        (c0 - C64::new(35.4491, 0.0)).norm() / 35.4491 <= 1e-3,
        "{c0}"
    );
    assert!(d.modes.certified_residual.unwrap() <= 1e-3);
}

#[test]
fn pair_interaction_matches_high_precision_quadrature() {
    let b = BathSpec::zero_temperature(SpectralParams::new(0.05, 0.5, 20.0).unwrap());
    let sys = SpinSystem::new(0.0, 1.0).unwrap();
    for (t, qr, qi, k) in [
        (
            1.0,
            1.589_747_439_149_797,
            2.186_664_148_120_129,
            -0.471_323_504_790_373_6,
        ),
        (
            5.0,
            4.329_403_642_079_943,
            4.988_253_243_579_183,
            0.014_354_791_914_888_6,
        ),
    ] {
        let (re, im) = pair_interaction(t, &b, 1e-10).unwrap();
        assert!(
            (re - qr).abs() < 1e-8 && (im - qi).abs() < 1e-8,
            "t={t}: {re} {im}"
        );
        let (cr, ci) = pair_interaction_zero_temperature(t, &b.spectral).unwrap();
        assert!((cr - qr).abs() < 1e-12 && (ci - qi).abs() < 1e-12);
        assert!((niba_kernel(t, &sys, &b, 1e-10).unwrap() - k).abs() < 1e-8);
    }
}

#[test]
fn ohmic_pair_interaction_closed_form() {
    let b = BathSpec::zero_temperature(SpectralParams::new(0.2, 1.0, 20.0).unwrap());
    for t in [0.1, 2.0, 9.0] {
        let (re, im) = pair_interaction(t, &b, 1e-10).unwrap();
        let x: f64 = 20.0 * t;
        assert!((re - 2.0 * 0.2 * (1.0 + x * x).ln()).abs() < 1e-8);
        assert!((im - 4.0 * 0.2 * x.atan()).abs() < 1e-8);
    }
}

/// `K = e^{−t}`, `P(0) = 1` is equivalent to `Ṗ = −M`, `Ṁ = P − M`, whose
/// solution is `e^{−t/2}[cos(√3t/2) + sin(√3t/2)/√3]`.
fn exponential_kernel_population(t: f64) -> f64 {
    let w = 3f64.sqrt() / 2.0;
    (-t / 2.0).exp() * ((w * t).cos() + (w * t).sin() / 3f64.sqrt())
}

#[test]
fn exponential_kernel_forward_solution() {
    assert!((exponential_kernel_population(2.5) + 0.023_359_579_906_692_36).abs() < 1e-15);
    let errs: Vec<f64> = [0.02, 0.01]
        .iter()
        .map(|&h| {
            let k = MemoryKernelSeries::sample(|t| (-t).exp(), h, (6.0 / h) as usize + 1);
            let p = gme_forward(&k, 1.0, 6.0).unwrap();
            p.times
                .iter()
                .zip(&p.values)
                .map(|(t, v)| (v - exponential_kernel_population(*t)).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    assert!(errs[1] < 1e-4, "{errs:?}");
    assert!(errs[0] / errs[1] > 3.5, "{errs:?}");
}

#[test]
fn kernel_examples() {
    let h = 0.01;
    let times: Vec<f64> = (0..=600).map(|i| i as f64 * h).collect();
    let p = fpheom::heom::PopulationSeries::new(
        times.clone(),
        times
            .iter()
            .map(|&t| exponential_kernel_population(t))
            .collect(),
    );
    let k = extract_kernel(&p).unwrap();
    let err = k
        .times
        .iter()
        .zip(&k.values)
        .map(|(t, v)| (v - (-t).exp()).abs())
        .fold(0.0, f64::max);
    assert!(err < 10.0 * h * h, "{err}");
    let r = asymptotic_rate(&MemoryKernelSeries::sample(|t| (-t).exp(), 1e-3, 30_000)).unwrap();
    assert!((r.k.unwrap() - 1.0).abs() < 1e-6);
    assert!(
        asymptotic_rate(&MemoryKernelSeries::sample(|_| 4.0, 1e-2, 1000))
            .unwrap()
            .k
            .is_none()
    );
}

/// A single mode `d·e^{−zt}` with real `d` is the vacuum correlation of a
/// damped oscillator coupled through `√d·σ_z(a + a†)`. The Lindblad
/// reference (Fock space truncated at 40 quanta, adaptive 8th-order
/// integration) gives P(t) at t = 0, 0.5, …, 5.
#[test]
fn single_mode_matches_pseudomode_reference() {
    use fpheom::heom::{observe_population, propagate, PropagatorConfig};
    use fpheom::matrix::Mat2;
    use fpheom::modes::{BathMode, ModeSet};
    let reference = [
        1.0,
        0.62306709,
        0.23973574,
        0.27885630,
        0.17581271,
        -0.06691013,
        -0.18904160,
        -0.22324762,
        -0.26916707,
        -0.30918848,
        -0.31927098,
    ];
    let mut m = ModeSet::empty(1e-3);
    m.modes
        .push(BathMode::new(C64::new(3.0, 0.0), C64::new(0.8, 2.5)).unwrap());
    let sys = SpinSystem::new(0.3, 1.0).unwrap();
    let cfg = PropagatorConfig::new(1e-3, 5.0, 500, &m).unwrap();
    let p = observe_population(&propagate(&Mat2::up(), &sys, &m, &cfg, 20).unwrap());
    for (got, want) in p.values.iter().zip(reference) {
        assert!((got - want).abs() < 2e-8, "{got} vs {want}");
    }
}
