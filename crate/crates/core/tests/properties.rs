use std::sync::Arc;

use num_complex::Complex64 as C64;
use proptest::prelude::*;

use fpheom::bath::{noise_power, BathSpec, InverseTemperature, SpectralParams, SpinSystem};
use fpheom::gme::{extract_kernel_discrete, gme_forward, MemoryKernelSeries};
use fpheom::heom::{propagate_with, HeomGenerator, HierarchyState, PropagatorConfig};
use fpheom::hierarchy::{enumerate_hierarchy, NONE};
use fpheom::matrix::Mat2;
use fpheom::modes::{BathMode, ModeSet};
use fpheom::output::Table;

fn mode_strategy() -> impl Strategy<Value = BathMode> {
    (-3.0..3.0f64, -3.0..3.0f64, 0.2..5.0f64, -5.0..5.0f64)
        .prop_map(|(dr, di, zr, zi)| BathMode::new(C64::new(dr, di), C64::new(zr, zi)).unwrap())
}

fn entry() -> impl Strategy<Value = C64> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b)| C64::new(a, b))
}

/// A hierarchy state with `ado(m,n) = ado(n,m)†`.
fn symmetric_state(k: usize, l: usize, seed: Vec<C64>) -> HierarchyState {
    let set = Arc::new(enumerate_hierarchy(k, l).unwrap());
    let mut st = HierarchyState::factorized(set.clone(), Mat2::up());
    for i in 0..set.len() {
        let c = set.conjugate_of(i);
        if c < i {
            continue;
        }
        let e = |j: usize| seed[(4 * i + j) % seed.len()];
        let mut a = Mat2::new(e(0), e(1), e(2), e(3));
        if c == i {
            a = (a + a.dagger()).scale_re(0.5);
        }
        st.ados[i] = a;
        st.ados[c] = a.dagger();
    }
    st
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn hierarchy_size_is_stars_and_bars(k in 0usize..5, l in 0usize..5) {
        let set = enumerate_hierarchy(k, l).unwrap();
        let stars_and_bars = (1..=l).fold(1u128, |acc, j| acc * (2 * k + j) as u128 / j as u128);
        prop_assert_eq!(set.len() as u128, stars_and_bars);
        for i in 0..set.len() {
            prop_assert_eq!(set.lookup(&set.index(i)), Some(i));
            prop_assert_eq!(set.conjugate_of(set.conjugate_of(i)), i);
            for slot in 0..2 * k {
                let u = set.up(i, slot);
                if u != NONE {
                    prop_assert_eq!(set.down(u as usize, slot) as usize, i);
                    prop_assert_eq!(set.tier_of(u as usize), set.tier_of(i) + 1);
                }
            }
        }
    }

    #[test]
    fn derivative_keeps_conjugation_symmetry(
        modes in prop::collection::vec(mode_strategy(), 1..4),
        seed in prop::collection::vec(entry(), 8..32),
        eps in -1.0..1.0f64,
        l in 1usize..4,
    ) {
        let st = symmetric_state(modes.len(), l, seed);
        let set = st.index_set.clone();
        let ms = ModeSet { modes, fit_tolerance: 1e-3, certified_residual: None };
        let gen = HeomGenerator::new(set.clone(), &SpinSystem::new(eps, 1.0).unwrap(), &ms).unwrap();
        let mut full = vec![Mat2::ZERO; set.len()];
        let mut half = vec![Mat2::ZERO; set.len()];
        gen.apply(&st.ados, &mut full);
        gen.apply_symmetric(&st.ados, &mut half);
        let scale = full.iter().map(Mat2::max_abs).fold(1.0, f64::max);
        for i in 0..set.len() {
            prop_assert!((full[i] - full[set.conjugate_of(i)].dagger()).max_abs() <= 1e-13 * scale);
            prop_assert!((full[i] - half[i]).max_abs() <= 1e-13 * scale);
        }
        // the reduced density stays trace-preserving
        prop_assert!(full[0].trace().norm() <= 1e-13 * scale);
    }

    #[test]
    fn branch_choice_does_not_change_reduced_dynamics(modes in prop::collection::vec(mode_strategy(), 1..3), flip in 0usize..3) {
        let ms = ModeSet { modes, fit_tolerance: 1e-3, certified_residual: None };
        let sys = SpinSystem::new(0.3, 1.0).unwrap();
        let set = Arc::new(enumerate_hierarchy(ms.len(), 3).unwrap());
        let cfg = PropagatorConfig::new(0.1 / ms.max_rate().max(1.0) / 2.0, 0.5, 1000, &ms).unwrap();
        let a = HeomGenerator::new(set.clone(), &sys, &ms).unwrap();
        let mut b = a.clone();
        b.flip_branch(flip % ms.len());
        let ra = propagate_with(&a, &Mat2::up(), &cfg).unwrap();
        let rb = propagate_with(&b, &Mat2::up(), &cfg).unwrap();
        let (x, y) = (ra.rho.last().unwrap(), rb.rho.last().unwrap());
        prop_assert!((*x - *y).max_abs() < 1e-12);
    }

    #[test]
    fn discrete_extraction_inverts_forward(a in 0.1..3.0f64, w in 0.0..4.0f64, c in 0.5..5.0f64) {
        let h = 0.02;
        let k = MemoryKernelSeries::sample(|t| c * (-a * t).exp() * (w * t).cos(), h, 200);
        let p = gme_forward(&k, 1.0, 4.0).unwrap();
        let back = extract_kernel_discrete(&p, k.values[0]).unwrap();
        let err = back.values.iter().zip(&k.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        prop_assert!(err < 1e-6 * c, "{}", err);
    }

    #[test]
    fn detailed_balance(beta in 0.05..20.0f64, omega in 1e-3..50.0f64, s in 0.05..1.0f64) {
        let b = BathSpec::new(SpectralParams::new(0.1, s, 20.0).unwrap(), InverseTemperature::Finite(beta)).unwrap();
        let (neg, pos) = (noise_power(-omega, &b), noise_power(omega, &b));
        prop_assert!((neg - (-beta * omega).exp() * pos).abs() <= 1e-12 * pos.abs());
    }

    #[test]
    fn csv_round_trip(values in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::ZERO, 1..50)) {
        let times: Vec<f64> = (0..values.len()).map(|i| i as f64).collect();
        let t = Table::new(&["t", "v"], vec![times, values]).unwrap();
        prop_assert_eq!(Table::parse(&t.to_bytes().unwrap()).unwrap(), t);
    }
}
