//! Exponential bath modes `C(t) ≈ Σ_k d_k e^{−z_k t}`: conversion from the
//! poles of the rational noise-power fit, certification against quadrature,
//! and a time-domain reduction to the fewest modes meeting the tolerance.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::barycentric::{aaa_fit, poles_and_residues, BarycentricApproximant, PoleResidue};
use crate::bath::{correlation_on_grid, noise_power, BathSpec, SampleGrid};
use crate::error::{Error, Result};

/// One exponential mode `d e^{−z t}` with `Re z > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BathMode {
    pub amplitude: C64,
    pub rate: C64,
}

impl BathMode {
    pub fn new(amplitude: C64, rate: C64) -> Result<Self> {
        if !(rate.re > 0.0) {
            return Err(Error::InvalidParameter {
                name: "rate",
                reason: format!("mode must decay, got Re z = {}", rate.re),
            });
        }
        Ok(BathMode { amplitude, rate })
    }

    #[inline]
    pub fn eval(&self, t: f64) -> C64 {
        self.amplitude * (-self.rate * t).exp()
    }
}

/// A list of decaying modes; `certified_residual` is set once the
/// reconstruction has been checked against the quadrature reference.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSet {
    pub modes: Vec<BathMode>,
    pub fit_tolerance: f64,
    pub certified_residual: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModeRecord {
    d_re: f64,
    d_im: f64,
    z_re: f64,
    z_im: f64,
}

#[derive(Serialize, Deserialize)]
struct ModeSetRecord {
    modes: Vec<ModeRecord>,
    tol: f64,
    residual: Option<f64>,
}

impl Serialize for ModeSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ModeSetRecord {
            modes: self
                .modes
                .iter()
                .map(|m| ModeRecord {
                    d_re: m.amplitude.re,
                    d_im: m.amplitude.im,
                    z_re: m.rate.re,
                    z_im: m.rate.im,
                })
                .collect(),
            tol: self.fit_tolerance,
            residual: self.certified_residual,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ModeSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rec = ModeSetRecord::deserialize(d)?;
        let modes = rec
            .modes
            .into_iter()
            .map(|m| BathMode::new(C64::new(m.d_re, m.d_im), C64::new(m.z_re, m.z_im)))
            .collect::<Result<Vec<_>>>()
            .map_err(serde::de::Error::custom)?;
        Ok(ModeSet {
            modes,
            fit_tolerance: rec.tol,
            certified_residual: rec.residual,
        })
    }
}

impl ModeSet {
    pub fn empty(fit_tolerance: f64) -> Self {
        ModeSet {
            modes: Vec::new(),
            fit_tolerance,
            certified_residual: None,
        }
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn max_rate(&self) -> f64 {
        self.modes.iter().map(|m| m.rate.norm()).fold(0.0, f64::max)
    }

    pub fn amplitude_sum(&self) -> C64 {
        self.modes.iter().map(|m| m.amplitude).sum()
    }
}

/// Maps lower-half-plane poles `ω_p = ω_k − iγ_k` with residue `r` to modes
/// `d_k = −2i r`, `z_k = γ_k + iω_k`; upper-half-plane poles do not
/// contribute for `t ≥ 0`.
pub fn modes_from_poles(pr: &[PoleResidue], fit_tolerance: f64) -> ModeSet {
    let modes = pr
        .iter()
        .filter(|p| p.pole.im < 0.0)
        .map(|p| BathMode {
            amplitude: C64::new(0.0, -2.0) * p.residue,
            rate: C64::new(0.0, 1.0) * p.pole,
        })
        .filter(|m| m.rate.re > 0.0)
        .collect();
    ModeSet {
        modes,
        fit_tolerance,
        certified_residual: None,
    }
}

/// `Σ_k d_k e^{−z_k t}`.
pub fn reconstruct_correlation(m: &ModeSet, t: f64) -> C64 {
    m.modes.iter().map(|mode| mode.eval(t)).sum()
}

/// Checks the reconstruction against reference values `oracle[i] = C(grid[i])`.
///
/// The residual is `max_i |Σ d e^{−z t_i} − C(t_i)| / |c0|`, where `c0 = C(0)`.
pub fn certify(mut m: ModeSet, grid: &SampleGrid, oracle: &[C64], c0: C64) -> Result<ModeSet> {
    if oracle.len() != grid.len() {
        return Err(Error::InvalidParameter {
            name: "oracle",
            reason: "length differs from grid".into(),
        });
    }
    let norm = c0.norm();
    if norm == 0.0 {
        return Err(Error::InvalidParameter {
            name: "oracle",
            reason: "C(0) vanishes; nothing to certify against".into(),
        });
    }
    let (t_worst, worst) = grid
        .points()
        .iter()
        .zip(oracle)
        .map(|(&t, &c)| (t, (reconstruct_correlation(&m, t) - c).norm() / norm))
        .fold((0.0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    if worst <= m.fit_tolerance {
        m.certified_residual = Some(worst);
        Ok(m)
    } else {
        Err(Error::Certification {
            t: t_worst,
            residual: worst,
            tolerance: m.fit_tolerance,
        })
    }
}

/// Least-squares amplitudes for fixed rates, and the fitted values.
fn solve_amplitudes(
    times: &[f64],
    target: &[C64],
    weights: &[f64],
    rates: &[C64],
) -> Option<(Vec<C64>, Vec<C64>)> {
    let (n, k) = (times.len(), rates.len());
    let a = DMatrix::from_fn(n, k, |i, j| (-rates[j] * times[i]).exp() * weights[i]);
    let b = DVector::from_iterator(n, target.iter().zip(weights).map(|(c, w)| c * *w));
    let svd = a.svd(true, true);
    let d = svd.solve(&b, 1e-13).ok()?;
    let fit = times
        .iter()
        .map(|&t| (0..k).map(|j| d[j] * (-rates[j] * t).exp()).sum())
        .collect();
    Some((d.iter().copied().collect(), fit))
}

fn rates_from_params(p: &[f64]) -> Vec<C64> {
    let k = p.len() / 2;
    (0..k).map(|j| C64::new(p[j].exp(), p[k + j])).collect()
}

fn weighted_residual(
    times: &[f64],
    target: &[C64],
    weights: &[f64],
    scale: f64,
    p: &[f64],
) -> Option<Vec<f64>> {
    let rates = rates_from_params(p);
    let (_, fit) = solve_amplitudes(times, target, weights, &rates)?;
    let mut r = Vec::with_capacity(2 * times.len());
    for ((f, c), w) in fit.iter().zip(target).zip(weights) {
        let e = (f - c) * (*w / scale);
        r.push(e.re);
        r.push(e.im);
    }
    Some(r)
}

/// Levenberg–Marquardt on the rate parameters with amplitudes projected out.
fn levenberg_marquardt(
    times: &[f64],
    target: &[C64],
    weights: &[f64],
    scale: f64,
    mut p: Vec<f64>,
) -> Vec<f64> {
    let cost = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>();
    let Some(mut r) = weighted_residual(times, target, weights, scale, &p) else {
        return p;
    };
    let mut c = cost(&r);
    let mut lambda = 1e-3;
    let np = p.len();
    for _ in 0..300 {
        let mut jac = DMatrix::<f64>::zeros(r.len(), np);
        for j in 0..np {
            let h = 1e-7 * p[j].abs().max(1.0);
            let mut q = p.clone();
            q[j] += h;
            let Some(rq) = weighted_residual(times, target, weights, scale, &q) else {
                return p;
            };
            for i in 0..r.len() {
                jac[(i, j)] = (rq[i] - r[i]) / h;
            }
        }
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * DVector::from_vec(r.clone());
        let mut improved = false;
        for _ in 0..20 {
            let mut m = jtj.clone();
            for j in 0..np {
                m[(j, j)] += lambda * jtj[(j, j)].max(1e-12);
            }
            let Some(step) = m.cholesky().map(|ch| ch.solve(&(-&jtr))) else {
                lambda *= 4.0;
                continue;
            };
            let q: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            if let Some(rq) = weighted_residual(times, target, weights, scale, &q) {
                let cq = cost(&rq);
                if cq < c {
                    let rel = (c - cq) / c.max(f64::MIN_POSITIVE);
                    p = q;
                    r = rq;
                    c = cq;
                    lambda = (lambda / 3.0).max(1e-12);
                    improved = rel > 1e-12;
                    break;
                }
            }
            lambda *= 4.0;
        }
        if !improved {
            break;
        }
    }
    p
}

/// Fits `n_modes` exponentials to reference samples `(times, target)`,
/// starting from the `n_modes` largest-amplitude modes of `seed`.
///
/// Amplitudes enter linearly and are solved exactly for every trial set of
/// rates; the rates `z = e^u + iω` are refined by Levenberg–Marquardt, then a
/// few Lawson reweighting rounds push the least-squares fit toward the
/// minimax one. The returned set is uncertified.
pub fn reduce_modes(
    seed: &ModeSet,
    times: &[f64],
    target: &[C64],
    n_modes: usize,
) -> Result<ModeSet> {
    if n_modes == 0 || n_modes > seed.len() {
        return Err(Error::InvalidParameter {
            name: "n_modes",
            reason: format!("must lie in 1..={}, got {n_modes}", seed.len()),
        });
    }
    let scale = target.iter().fold(0.0f64, |m, c| m.max(c.norm()));
    if scale == 0.0 {
        return Err(Error::InvalidParameter {
            name: "target",
            reason: "reference samples vanish".into(),
        });
    }
    let mut order: Vec<usize> = (0..seed.len()).collect();
    order.sort_by(|&a, &b| {
        seed.modes[b]
            .amplitude
            .norm()
            .total_cmp(&seed.modes[a].amplitude.norm())
            .then(a.cmp(&b))
    });
    let chosen: Vec<BathMode> = order[..n_modes].iter().map(|&i| seed.modes[i]).collect();
    let mut p: Vec<f64> = chosen.iter().map(|m| m.rate.re.ln()).collect();
    p.extend(chosen.iter().map(|m| m.rate.im));

    let mut weights = vec![1.0; times.len()];
    let mut best: Option<(f64, Vec<C64>, Vec<C64>)> = None;
    for _round in 0..12 {
        p = levenberg_marquardt(times, target, &weights, scale, p);
        let rates = rates_from_params(&p);
        let Some((amps, fit)) = solve_amplitudes(times, target, &weights, &rates) else {
            break;
        };
        let errs: Vec<f64> = fit
            .iter()
            .zip(target)
            .map(|(f, c)| (f - c).norm())
            .collect();
        let max_err = errs.iter().fold(0.0f64, |m, e| m.max(*e));
        if best.as_ref().is_none_or(|b| max_err < b.0) {
            best = Some((max_err, rates.clone(), amps));
        }
        // Lawson update: emphasise samples with large error
        let total: f64 = weights.iter().zip(&errs).map(|(w, e)| w * e).sum();
        if total <= 0.0 {
            break;
        }
        for (w, e) in weights.iter_mut().zip(&errs) {
            *w = (*w * e / total * times.len() as f64).max(1e-3).sqrt();
        }
    }
    let (_, rates, amps) =
        best.ok_or_else(|| Error::Eigen("mode reduction failed to produce a fit".into()))?;
    let modes = amps
        .into_iter()
        .zip(rates)
        .map(|(d, z)| BathMode {
            amplitude: d,
            rate: z,
        })
        .collect();
    Ok(ModeSet {
        modes,
        fit_tolerance: seed.fit_tolerance,
        certified_residual: None,
    })
}

/// How the raw pole-derived modes are post-processed before certification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeReduction {
    /// Use the pole-derived modes unchanged.
    None,
    /// Use the smallest mode count (up to the raw count) whose time-domain
    /// refit certifies.
    Minimal,
}

/// Settings for the full decomposition pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitOptions {
    /// Relative tolerance of the rational fit and of the certified residual.
    pub tol: f64,
    pub max_degree: usize,
    /// Fit window `[window_lo·ω_c, window_hi·ω_c]` (mirrored to negative ω).
    pub window_lo: f64,
    pub window_hi: f64,
    pub window_points: usize,
    /// Certification horizon.
    pub t_max: f64,
    pub cert_points: usize,
    pub quad_tol: f64,
    pub reduction: ModeReduction,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tol: 1e-3,
            max_degree: 60,
            window_lo: 1e-4,
            window_hi: 1e2,
            window_points: 500,
            t_max: 20.0,
            cert_points: 400,
            quad_tol: 1e-10,
            reduction: ModeReduction::Minimal,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: &str| {
            Err(Error::InvalidParameter {
                name,
                reason: reason.into(),
            })
        };
        if !(self.tol > 0.0) {
            return bad("fit.tol", "must be > 0");
        }
        if self.max_degree == 0 {
            return bad("fit.max_degree", "must be >= 1");
        }
        if !(self.window_lo > 0.0 && self.window_hi > self.window_lo) {
            return bad("fit.window", "need 0 < window_lo < window_hi");
        }
        if self.window_points < 2 {
            return bad("fit.window_points", "must be >= 2");
        }
        if !(self.t_max > 0.0) || self.cert_points < 2 {
            return bad("fit.t_max", "need t_max > 0 and cert_points >= 2");
        }
        if !(self.quad_tol > 0.0) {
            return bad("fit.quad_tol", "must be > 0");
        }
        Ok(())
    }
}

/// Everything produced by [`decompose`].
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub approximant: BarycentricApproximant,
    pub pole_modes: ModeSet,
    pub modes: ModeSet,
    pub c0: C64,
}

/// Rational fit of the noise power → poles → modes → optional reduction →
/// certification on `{0} ∪ logspace(10⁻³/ω_c, t_max)`.
pub fn decompose(bath: &BathSpec, opts: &FitOptions) -> Result<Decomposition> {
    opts.validate()?;
    let wc = bath.spectral.omega_c;
    let fgrid =
        SampleGrid::symmetric_logarithmic(wc, opts.window_lo, opts.window_hi, opts.window_points)?;
    let values: Vec<f64> = fgrid
        .points()
        .iter()
        .map(|&w| noise_power(w, bath))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Unsupported(
            "noise power is singular on the fit grid (finite temperature with s < 1)".into(),
        ));
    }
    let approximant = aaa_fit(fgrid.points(), &values, opts.tol, opts.max_degree)?;
    let pr = poles_and_residues(&approximant)?;
    let pole_modes = modes_from_poles(&pr, opts.tol);

    let cert_grid = SampleGrid::certification(1e-3 / wc, opts.t_max, opts.cert_points)?;
    let oracle = correlation_on_grid(cert_grid.points(), bath, opts.quad_tol)?;
    let c0 = oracle[0];
    if c0.norm() == 0.0 {
        // uncoupled bath: the empty mode set is exact
        let modes = ModeSet {
            modes: Vec::new(),
            fit_tolerance: opts.tol,
            certified_residual: Some(0.0),
        };
        return Ok(Decomposition {
            approximant,
            pole_modes,
            modes,
            c0,
        });
    }

    let modes = match opts.reduction {
        ModeReduction::None => certify(pole_modes.clone(), &cert_grid, &oracle, c0)?,
        ModeReduction::Minimal => {
            // fit on an interleaved grid so that certification sees unseen points
            let fit_grid =
                SampleGrid::certification(1.37e-3 / wc, opts.t_max * 0.999, opts.cert_points)?;
            let fit_vals = correlation_on_grid(fit_grid.points(), bath, opts.quad_tol)?;
            let mut last_err = None;
            let mut found = None;
            for k in 1..=pole_modes.len() {
                let reduced = reduce_modes(&pole_modes, fit_grid.points(), &fit_vals, k)?;
                match certify(reduced, &cert_grid, &oracle, c0) {
                    Ok(m) => {
                        found = Some(m);
                        break;
                    }
                    Err(e) => last_err = Some(e),
                }
            }
            match found {
                Some(m) => m,
                None => match certify(pole_modes.clone(), &cert_grid, &oracle, c0) {
                    Ok(m) => m,
                    Err(e) => return Err(last_err.unwrap_or(e)),
                },
            }
        }
    };
    Ok(Decomposition {
        approximant,
        pole_modes,
        modes,
        c0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lorentzian_mode(lambda: f64, gamma: f64, omega: f64) -> PoleResidue {
        PoleResidue {
            pole: C64::new(omega, -gamma),
            residue: C64::new(0.0, lambda),
        }
    }

    #[test]
    fn lorentzian_maps_to_single_mode() {
        let (lambda, gamma, omega) = (0.7, 1.3, 2.0);
        let upper = PoleResidue {
            pole: C64::new(omega, gamma),
            residue: C64::new(0.0, -lambda),
        };
        let m = modes_from_poles(&[lorentzian_mode(lambda, gamma, omega), upper], 1e-3);
        assert_eq!(m.len(), 1);
        assert!((m.modes[0].amplitude - C64::new(2.0 * lambda, 0.0)).norm() < 1e-15);
        assert!((m.modes[0].rate - C64::new(gamma, omega)).norm() < 1e-15);
        let t = 0.8;
        let expected = 2.0 * lambda * (-gamma * t).exp() * C64::new(0.0, -omega * t).exp();
        assert!((reconstruct_correlation(&m, t) - expected).norm() < 1e-15);
    }

    #[test]
    fn upper_half_plane_only_gives_empty_set() {
        let upper = PoleResidue {
            pole: C64::new(0.5, 1.0),
            residue: C64::new(0.0, -1.0),
        };
        let m = modes_from_poles(&[upper], 1e-3);
        assert!(m.is_empty());
        assert_eq!(reconstruct_correlation(&m, 3.0), C64::new(0.0, 0.0));
    }

    #[test]
    fn conjugate_pair_gives_real_amplitude_sum() {
        // S(ω) = Lorentzian centred at +Ω plus its mirror at −Ω
        let pr = [
            lorentzian_mode(0.5, 1.0, 3.0),
            lorentzian_mode(0.5, 1.0, -3.0),
        ];
        let m = modes_from_poles(&pr, 1e-3);
        assert_eq!(m.len(), 2);
        assert!(m.amplitude_sum().im.abs() < 1e-15);
        assert!(reconstruct_correlation(&m, 0.0).im.abs() < 1e-15);
    }

    #[test]
    fn certify_exact_set_and_reject_empty() {
        let (lambda, gamma, omega) = (0.7, 1.3, 2.0);
        let m = modes_from_poles(&[lorentzian_mode(lambda, gamma, omega)], 1e-3);
        let grid = SampleGrid::certification(1e-3, 10.0, 50).unwrap();
        let exact: Vec<C64> = grid
            .points()
            .iter()
            .map(|&t| 2.0 * lambda * C64::new(-gamma * t, -omega * t).exp())
            .collect();
        let ok = certify(m, &grid, &exact, exact[0]).unwrap();
        assert!(ok.certified_residual.unwrap() < 1e-15);

        match certify(ModeSet::empty(1e-3), &grid, &exact, exact[0]) {
            Err(Error::Certification { t, residual, .. }) => {
                assert_eq!(t, 0.0);
                assert!((residual - 1.0).abs() < 1e-15);
            }
            other => panic!("expected certification failure, got {other:?}"),
        }
    }

    #[test]
    fn json_layout() {
        let m = ModeSet {
            modes: vec![BathMode::new(C64::new(1.0, -0.5), C64::new(2.0, 3.0)).unwrap()],
            fit_tolerance: 1e-3,
            certified_residual: Some(4e-4),
        };
        let v: serde_json::Value = serde_json::to_value(&m).unwrap();
        assert_eq!(v["modes"][0]["d_im"], -0.5);
        assert_eq!(v["modes"][0]["z_im"], 3.0);
        assert_eq!(v["tol"], 1e-3);
        assert_eq!(v["residual"], 4e-4);
        let back: ModeSet = serde_json::from_value(v).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn json_rejects_growing_mode() {
        let text =
            r#"{"modes":[{"d_re":1,"d_im":0,"z_re":-1,"z_im":0}],"tol":0.001,"residual":null}"#;
        assert!(serde_json::from_str::<ModeSet>(text).is_err());
    }

    #[test]
    fn reduction_recovers_two_mode_signal() {
        let truth = [
            (C64::new(3.0, 0.2), C64::new(5.0, 2.0)),
            (C64::new(1.0, -0.1), C64::new(0.3, -0.5)),
        ];
        let times: Vec<f64> = (0..300).map(|i| i as f64 * 0.05).collect();
        let target: Vec<C64> = times
            .iter()
            .map(|&t| truth.iter().map(|(d, z)| d * (-z * t).exp()).sum())
            .collect();
        // perturbed seed with an extra small mode
        let seed = ModeSet {
            modes: vec![
                BathMode::new(C64::new(2.5, 0.0), C64::new(4.0, 1.5)).unwrap(),
                BathMode::new(C64::new(1.2, 0.0), C64::new(0.5, -0.3)).unwrap(),
                BathMode::new(C64::new(0.01, 0.0), C64::new(9.0, 0.0)).unwrap(),
            ],
            fit_tolerance: 1e-6,
            certified_residual: None,
        };
        let m = reduce_modes(&seed, &times, &target, 2).unwrap();
        for (d, z) in truth {
            let found = m
                .modes
                .iter()
                .any(|mode| (mode.rate - z).norm() < 1e-6 && (mode.amplitude - d).norm() < 1e-6);
            assert!(found, "mode {d} e^(-{z} t) not recovered: {:?}", m.modes);
        }
    }
}
