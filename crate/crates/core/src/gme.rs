//! Generalized master equation for populations: forward Volterra solver,
//! kernel extraction from population trajectories, and asymptotic rates.
//!
//! Discretization on a uniform grid `t_i = i·h`:
//! `M_i = h·[½K_i P_0 + Σ_{0<j<i} K_{i−j} P_j + ½K_0 P_i]` approximates
//! `∫₀^{t_i} K(t_i − τ) P(τ) dτ` and `Ṗ_i = −M_i`.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heom::PopulationSeries;

/// Scalar memory kernel on a uniform grid starting at zero.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MemoryKernelSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl MemoryKernelSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Self {
        MemoryKernelSeries { times, values }
    }

    /// Samples `f` on `0, h, …, n·h`.
    pub fn sample(f: impl Fn(f64) -> f64, h: f64, n: usize) -> Self {
        let times: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
        let values = times.iter().map(|&t| f(t)).collect();
        MemoryKernelSeries { times, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn spacing(&self) -> Result<f64> {
        PopulationSeries::new(self.times.clone(), Vec::new()).spacing()
    }

    /// Indices where consecutive samples change sign.
    pub fn zero_crossings(&self) -> Vec<usize> {
        self.values
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[0] * w[1] < 0.0)
            .map(|(i, _)| i + 1)
            .collect()
    }
}

/// 2×2 kernel `K_{σσ'}` for populations `(P₊, P₋)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatrixKernelSeries {
    pub times: Vec<f64>,
    pub values: Vec<Matrix2<f64>>,
}

impl MatrixKernelSeries {
    /// `K₊₊ − K₊₋`, the scalar kernel of `P = P₊ − P₋` in the symmetric case.
    pub fn scalar_reduction(&self) -> MemoryKernelSeries {
        let values = self.values.iter().map(|k| k[(0, 0)] - k[(0, 1)]).collect();
        MemoryKernelSeries {
            times: self.times.clone(),
            values,
        }
    }
}

/// `Σ_{0<j<i} K_{i−j} P_j`, the interior of the trapezoid sum for `M_i`.
fn interior_sum(k: &[f64], p: &[f64], i: usize) -> f64 {
    (1..i).map(|j| k[i - j] * p[j]).sum()
}

fn memory(k: &[f64], p: &[f64], i: usize, h: f64) -> f64 {
    if i == 0 {
        return 0.0;
    }
    h * (0.5 * k[i] * p[0] + interior_sum(k, p, i) + 0.5 * k[0] * p[i])
}

/// Integrates `Ṗ = −∫₀ᵗ K(t−τ)P(τ)dτ` by Heun steps with trapezoidal memory.
pub fn gme_forward(kernel: &MemoryKernelSeries, p0: f64, t_final: f64) -> Result<PopulationSeries> {
    let h = kernel.spacing()?;
    let n = (t_final / h - 1e-9).ceil().max(0.0) as usize;
    if n >= kernel.len() {
        return Err(Error::InvalidParameter {
            name: "kernel",
            reason: format!(
                "grid ends at {} but t_final = {t_final}",
                kernel.times.last().copied().unwrap_or(0.0)
            ),
        });
    }
    if !p0.is_finite() {
        return Err(Error::InvalidParameter {
            name: "P0",
            reason: "must be finite".into(),
        });
    }
    let k = &kernel.values;
    let mut p = Vec::with_capacity(n + 1);
    p.push(p0);
    let mut rate = 0.0;
    for i in 0..n {
        let predicted = p[i] + h * rate;
        p.push(predicted);
        let rate_p = -memory(k, &p, i + 1, h);
        p[i + 1] = p[i] + 0.5 * h * (rate + rate_p);
        rate = -memory(k, &p, i + 1, h);
    }
    Ok(PopulationSeries::new(kernel.times[..=n].to_vec(), p))
}

/// Exact inverse of [`gme_forward`] given `K(0)`: replays the Heun step for each
/// `K_{i+1}` using the same memory sums.
pub fn extract_kernel_discrete(pops: &PopulationSeries, k0: f64) -> Result<MemoryKernelSeries> {
    let h = pops.spacing()?;
    let p = &pops.values;
    check_diagonal(p[0], p, h)?;
    let mut k = vec![k0];
    let mut rate = 0.0;
    for i in 0..p.len() - 1 {
        let predicted = p[i] + h * rate;
        let rate_p = 2.0 * (p[i + 1] - p[i]) / h - rate;
        // rate_p = −h·[½K_{i+1}P_0 + Σ K_{i+1−j}P_j + ½K_0·predicted]
        k.push(0.0);
        let s = interior_sum(&k, p, i + 1);
        k[i + 1] = (-rate_p / h - s - 0.5 * k[0] * predicted) / (0.5 * p[0]);
        rate = -memory(&k, p, i + 1, h);
    }
    Ok(MemoryKernelSeries::new(pops.times.clone(), k))
}

fn check_diagonal(p0: f64, p: &[f64], h: f64) -> Result<()> {
    let scale = p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(p0.abs() > 1e-8 * scale.max(f64::MIN_POSITIVE)) || !(h > 0.0) {
        return Err(Error::IllPosed(format!(
            "diagonal h·P(0)/2 = {:e} is effectively zero; use the matrix extraction with initial conditions P(0) = ±1",
            0.5 * h * p0
        )));
    }
    Ok(())
}

/// First derivative by 4th-order differences (one-sided near the ends).
pub fn derivative(p: &[f64], h: f64) -> Result<Vec<f64>> {
    let n = p.len();
    if n < 5 {
        return Err(Error::InvalidParameter {
            name: "series",
            reason: "need at least 5 samples".into(),
        });
    }
    let mut d = vec![0.0; n];
    let fwd0 = |q: &[f64]| {
        (-25.0 * q[0] + 48.0 * q[1] - 36.0 * q[2] + 16.0 * q[3] - 3.0 * q[4]) / (12.0 * h)
    };
    let fwd1 =
        |q: &[f64]| (-3.0 * q[0] - 10.0 * q[1] + 18.0 * q[2] - 6.0 * q[3] + q[4]) / (12.0 * h);
    d[0] = fwd0(&p[..5]);
    d[1] = fwd1(&p[..5]);
    for i in 2..n - 2 {
        d[i] = (-p[i + 2] + 8.0 * p[i + 1] - 8.0 * p[i - 1] + p[i - 2]) / (12.0 * h);
    }
    let rev: Vec<f64> = p[n - 5..].iter().rev().copied().collect();
    d[n - 1] = -fwd0(&rev);
    d[n - 2] = -fwd1(&rev);
    Ok(d)
}

/// Second derivative by 4th-order differences (one-sided near the ends).
pub fn second_derivative(p: &[f64], h: f64) -> Result<Vec<f64>> {
    let n = p.len();
    if n < 6 {
        return Err(Error::InvalidParameter {
            name: "series",
            reason: "need at least 6 samples".into(),
        });
    }
    let h2 = 12.0 * h * h;
    let fwd0 = |q: &[f64]| {
        (45.0 * q[0] - 154.0 * q[1] + 214.0 * q[2] - 156.0 * q[3] + 61.0 * q[4] - 10.0 * q[5]) / h2
    };
    let fwd1 =
        |q: &[f64]| (10.0 * q[0] - 15.0 * q[1] - 4.0 * q[2] + 14.0 * q[3] - 6.0 * q[4] + q[5]) / h2;
    let mut d = vec![0.0; n];
    d[0] = fwd0(&p[..6]);
    d[1] = fwd1(&p[..6]);
    for i in 2..n - 2 {
        d[i] = (-p[i + 2] + 16.0 * p[i + 1] - 30.0 * p[i] + 16.0 * p[i - 1] - p[i - 2]) / h2;
    }
    let rev: Vec<f64> = p[n - 6..].iter().rev().copied().collect();
    d[n - 1] = fwd0(&rev);
    d[n - 2] = fwd1(&rev);
    Ok(d)
}

/// Weight of sample `j` in the quadrature of `∫₀^{ih}`: 4th-order Gregory
/// from six samples on, trapezoid below.
fn gregory_weight(i: usize, j: usize) -> f64 {
    const END: [f64; 3] = [3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0];
    if i < 5 {
        return if j == 0 || j == i { 0.5 } else { 1.0 };
    }
    match j.min(i - j) {
        e @ 0..=2 => END[e],
        _ => 1.0,
    }
}

/// Solves the differentiated equation `P̈(t) = −K(t)P(0) − ∫₀ᵗ K(τ)Ṗ(t−τ)dτ`,
/// a second-kind Volterra equation for `K`, with finite-difference
/// derivatives of `P`. Unlike the first-kind form it has no parasitic
/// sawtooth mode.
pub fn extract_kernel(pops: &PopulationSeries) -> Result<MemoryKernelSeries> {
    let h = pops.spacing()?;
    let p = &pops.values;
    if p.len() < 6 {
        return Err(Error::InvalidParameter {
            name: "series",
            reason: "need at least 6 samples".into(),
        });
    }
    check_diagonal(p[0], p, h)?;
    let d = derivative(p, h)?;
    let dd = second_derivative(p, h)?;
    let mut k = vec![-dd[0] / p[0]];
    for i in 1..p.len() {
        let s: f64 = (0..i).map(|j| gregory_weight(i, j) * k[j] * d[i - j]).sum();
        k.push((-dd[i] - h * s) / (p[0] + gregory_weight(i, i) * h * d[0]));
    }
    Ok(MemoryKernelSeries::new(pops.times.clone(), k))
}

/// 2×2 extraction from two trajectories of `P = ⟨σ_z⟩` started in `P(0) = +1`
/// and `P(0) = −1`, using populations `P_± = (1 ± P)/2`.
pub fn extract_kernel_matrix(
    from_up: &PopulationSeries,
    from_down: &PopulationSeries,
) -> Result<MatrixKernelSeries> {
    let h = from_up.spacing()?;
    if from_down.spacing()? != h || from_up.len() != from_down.len() {
        return Err(Error::InvalidParameter {
            name: "series",
            reason: "trajectories must share one grid".into(),
        });
    }
    let n = from_up.len();
    if n < 6 {
        return Err(Error::InvalidParameter {
            name: "series",
            reason: "need at least 6 samples".into(),
        });
    }
    // column c holds the populations of the trajectory started in state c
    let pops: Vec<Matrix2<f64>> = (0..n)
        .map(|i| {
            let (a, b) = (from_up.values[i], from_down.values[i]);
            Matrix2::new(
                0.5 * (1.0 + a),
                0.5 * (1.0 + b),
                0.5 * (1.0 - a),
                0.5 * (1.0 - b),
            )
        })
        .collect();
    let entry = |r: usize, c: usize| -> Vec<f64> { pops.iter().map(|m| m[(r, c)]).collect() };
    let mut deriv = vec![Matrix2::zeros(); n];
    let mut second = vec![Matrix2::zeros(); n];
    for r in 0..2 {
        for c in 0..2 {
            let e = entry(r, c);
            for (i, v) in derivative(&e, h)?.into_iter().enumerate() {
                deriv[i][(r, c)] = v;
            }
            for (i, v) in second_derivative(&e, h)?.into_iter().enumerate() {
                second[i][(r, c)] = v;
            }
        }
    }
    let singular = || {
        Error::IllPosed(
            "initial population matrix is singular; trajectories must start in distinct states"
                .into(),
        )
    };
    let mut k = vec![-second[0] * pops[0].try_inverse().ok_or_else(singular)?];
    for i in 1..n {
        let mut s = Matrix2::zeros();
        for j in 0..i {
            s += k[j] * deriv[i - j] * gregory_weight(i, j);
        }
        let diag = pops[0] + deriv[0] * (gregory_weight(i, i) * h);
        k.push((-second[i] - s * h) * diag.try_inverse().ok_or_else(singular)?);
    }
    Ok(MatrixKernelSeries {
        times: from_up.times.clone(),
        values: k,
    })
}

/// `k = ∫₀^∞ K(τ) dτ` with a power-law tail estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    /// Absent when the tail is not integrable.
    pub k: Option<f64>,
    pub horizon: f64,
    pub tail_exponent: f64,
    pub tail: f64,
    pub converged: bool,
}

/// Rates for each kernel entry, in row-major order for the matrix case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateMatrix {
    pub labels: Vec<String>,
    pub rates: Vec<RateEstimate>,
}

/// Trapezoid over the sampled horizon plus `∫_T^∞ A t^{−p}` from a log-log fit
/// of `|K|` over the last decade. `p ≤ 1` flags the integral as divergent.
pub fn asymptotic_rate(kernel: &MemoryKernelSeries) -> Result<RateEstimate> {
    let h = kernel.spacing()?;
    let k = &kernel.values;
    let n = k.len();
    let horizon = kernel.times[n - 1];
    let body = h * (k.iter().sum::<f64>() - 0.5 * (k[0] + k[n - 1]));

    let start = kernel
        .times
        .iter()
        .position(|&t| t >= 0.1 * horizon && t > 0.0)
        .unwrap_or(n - 1);
    let (mut sx, mut sy, mut sxx, mut sxy, mut m) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in start..n {
        let (t, v) = (kernel.times[i], k[i].abs());
        if v > 0.0 && t > 0.0 {
            let (x, y) = (t.ln(), v.ln());
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
            m += 1.0;
        }
    }
    if m < 3.0 {
        // kernel identically zero over the tail
        return Ok(RateEstimate {
            k: Some(body),
            horizon,
            tail_exponent: f64::INFINITY,
            tail: 0.0,
            converged: true,
        });
    }
    let slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    let p = -slope;
    if !(p > 1.0) {
        return Ok(RateEstimate {
            k: None,
            horizon,
            tail_exponent: p,
            tail: f64::NAN,
            converged: false,
        });
    }
    let amp = ((sy - slope * sx) / m).exp();
    let tail_mean: f64 = k[start..].iter().sum::<f64>() / (n - start) as f64;
    let tail = tail_mean.signum() * amp * horizon.powf(1.0 - p) / (p - 1.0);
    let converged = tail.abs() <= 0.05 * body.abs().max(1e-300) || tail.abs() < 1e-12;
    Ok(RateEstimate {
        k: Some(body + tail),
        horizon,
        tail_exponent: p,
        tail,
        converged,
    })
}

pub fn asymptotic_rates(kernel: &MemoryKernelSeries) -> Result<RateMatrix> {
    Ok(RateMatrix {
        labels: vec!["k".into()],
        rates: vec![asymptotic_rate(kernel)?],
    })
}

pub fn asymptotic_rates_matrix(kernel: &MatrixKernelSeries) -> Result<RateMatrix> {
    let mut out = RateMatrix {
        labels: Vec::new(),
        rates: Vec::new(),
    };
    for (r, c, name) in [
        (0, 0, "k_pp"),
        (0, 1, "k_pm"),
        (1, 0, "k_mp"),
        (1, 1, "k_mm"),
    ] {
        let series = MemoryKernelSeries::new(
            kernel.times.clone(),
            kernel.values.iter().map(|m| m[(r, c)]).collect(),
        );
        out.labels.push(name.into());
        out.rates.push(asymptotic_rate(&series)?);
    }
    Ok(out)
}
