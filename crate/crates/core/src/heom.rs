//! Free-pole hierarchy: right-hand side, fixed-step RK4 propagation and the
//! reduced-density trajectory.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bath::SpinSystem;
use crate::error::{Error, Result};
use crate::hierarchy::{enumerate_hierarchy, HierarchyIndexSet, NONE};
use crate::matrix::{Mat2, I};
use crate::modes::ModeSet;

/// Below this many ADOs the right-hand side runs sequentially.
const PARALLEL_THRESHOLD: usize = 4096;

/// Largest entry magnitude accepted before a run is declared unstable.
const OVERFLOW_LIMIT: f64 = 1e150;

#[derive(Debug, Clone)]
pub struct HierarchyState {
    pub index_set: Arc<HierarchyIndexSet>,
    pub ados: Vec<Mat2>,
    pub time: f64,
}

impl HierarchyState {
    /// `ρ_{0,0} = rho`, every other ADO zero.
    pub fn factorized(index_set: Arc<HierarchyIndexSet>, rho: Mat2) -> Self {
        let mut ados = vec![Mat2::ZERO; index_set.len()];
        ados[0] = rho;
        HierarchyState {
            index_set,
            ados,
            time: 0.0,
        }
    }

    pub fn reduced(&self) -> Mat2 {
        self.ados[0]
    }

    /// Largest deviation from `ado(m,n) = ado(n,m)†` over all stored pairs.
    pub fn conjugation_error(&self) -> f64 {
        (0..self.ados.len())
            .map(|i| (self.ados[i] - self.ados[self.index_set.conjugate_of(i)].dagger()).max_abs())
            .fold(0.0, f64::max)
    }

    /// JSON snapshot for debugging: one record per ADO with its multi-index.
    pub fn to_json(&self) -> serde_json::Value {
        let ados: Vec<_> = self
            .ados
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let idx = self.index_set.index(i);
                serde_json::json!({
                    "m": idx.m,
                    "n": idx.n,
                    "re": a.0.iter().map(|z| z.re).collect::<Vec<_>>(),
                    "im": a.0.iter().map(|z| z.im).collect::<Vec<_>>(),
                })
            })
            .collect();
        serde_json::json!({ "time": self.time, "K": self.index_set.modes(), "L": self.index_set.max_tier(), "ados": ados })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Rk4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagatorConfig {
    pub dt: f64,
    pub t_final: f64,
    pub method: Method,
    pub record_stride: usize,
    /// Keep full hierarchy snapshots at every recorded step.
    #[serde(default)]
    pub keep_states: bool,
    /// Evaluate only one ADO of each conjugate pair and fill the partner by
    /// Hermitian conjugation.
    #[serde(default = "yes")]
    pub exploit_symmetry: bool,
}

fn yes() -> bool {
    true
}

impl PropagatorConfig {
    pub fn new(dt: f64, t_final: f64, record_stride: usize, modes: &ModeSet) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: format!("must be positive, got {dt}"),
            });
        }
        if !(t_final >= 0.0 && t_final.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "t_final",
                reason: format!("must be >= 0, got {t_final}"),
            });
        }
        if record_stride == 0 {
            return Err(Error::InvalidParameter {
                name: "record_stride",
                reason: "must be at least 1".into(),
            });
        }
        let stiff = dt * modes.max_rate();
        if stiff > 0.1 * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: format!(
                    "dt·max|z| = {stiff:.4} exceeds 0.1; use dt <= {:.3e}",
                    0.1 / modes.max_rate()
                ),
            });
        }
        Ok(PropagatorConfig {
            dt,
            t_final,
            method: Method::Rk4,
            record_stride,
            keep_states: false,
            exploit_symmetry: true,
        })
    }

    /// Largest step allowed by the default rule `min(0.1/max|z|, 0.05/max(|ε|+|Δ|, 1))`.
    pub fn default_step(sys: &SpinSystem, modes: &ModeSet) -> f64 {
        let by_system = 0.05 / (sys.epsilon.abs() + sys.delta).max(1.0);
        if modes.is_empty() {
            by_system
        } else {
            by_system.min(0.1 / modes.max_rate())
        }
    }

    /// Default step, shrunk so that `t_final` is an integer number of steps.
    pub fn default_for(
        sys: &SpinSystem,
        modes: &ModeSet,
        t_final: f64,
        record_stride: usize,
    ) -> Result<Self> {
        let h = Self::default_step(sys, modes);
        let steps = (t_final / h).ceil().max(1.0);
        Self::new(t_final / steps, t_final, record_stride, modes)
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt - 1e-9).ceil().max(0.0) as usize
    }
}

/// Time series of the reduced density matrix.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub rho: Vec<Mat2>,
    pub states: Option<Vec<HierarchyState>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn max_trace_error(&self) -> f64 {
        self.rho
            .iter()
            .map(|r| (r.trace() - 1.0).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_hermiticity_error(&self) -> f64 {
        self.rho
            .iter()
            .map(Mat2::hermiticity_error)
            .fold(0.0, f64::max)
    }
}

/// `P(t) = Tr[σ_z ρ(t)]` on the trajectory grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PopulationSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Largest |Im Tr[σ_z ρ]| seen; a diagnostic, ideally zero.
    pub max_imag: f64,
}

impl PopulationSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Self {
        PopulationSeries {
            times,
            values,
            max_imag: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Spacing of a uniform grid, or an error if the grid is not uniform.
    pub fn spacing(&self) -> Result<f64> {
        if self.times.len() < 2 {
            return Err(Error::InvalidParameter {
                name: "times",
                reason: "need at least two samples".into(),
            });
        }
        let h = self.times[1] - self.times[0];
        let uniform = self
            .times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h.abs().max(1.0));
        if !(h > 0.0) || !uniform || self.times[0].abs() > 1e-12 {
            return Err(Error::InvalidParameter {
                name: "times",
                reason: "grid must be uniform and start at 0".into(),
            });
        }
        Ok(h)
    }

    /// Largest pointwise difference against another series on a matched grid.
    pub fn sup_distance(&self, other: &PopulationSeries) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub fn observe_population(traj: &Trajectory) -> PopulationSeries {
    let mut max_imag = 0.0f64;
    let values = traj
        .rho
        .iter()
        .map(|r| {
            let p = r.0[0] - r.0[3];
            max_imag = max_imag.max(p.im.abs());
            p.re
        })
        .collect();
    PopulationSeries {
        times: traj.times.clone(),
        values,
        max_imag,
    }
}

/// Linear generator of the hierarchy, precomputed for one index set.
#[derive(Debug, Clone)]
pub struct HeomGenerator {
    index_set: Arc<HierarchyIndexSet>,
    /// `H₀₀ − H₁₁`
    h_split: f64,
    /// `H₀₁ = H₁₀`
    h_tunnel: f64,
    /// `√d_k` for the `m` couplings.
    sqrt_d: Vec<C64>,
    /// `√d_k*` for the `n` couplings.
    sqrt_d_conj: Vec<C64>,
    /// `Σ m_k z_k + n_k z_k*` per ADO.
    damping: Vec<C64>,
    sqrt_int: Vec<f64>,
}

impl HeomGenerator {
    pub fn new(
        index_set: Arc<HierarchyIndexSet>,
        sys: &SpinSystem,
        modes: &ModeSet,
    ) -> Result<Self> {
        let k = index_set.modes();
        if modes.len() != k {
            return Err(Error::InvalidParameter {
                name: "modes",
                reason: format!("index set has K = {k} but {} modes were given", modes.len()),
            });
        }
        let sqrt_d: Vec<C64> = modes.modes.iter().map(|m| m.amplitude.sqrt()).collect();
        let sqrt_d_conj = sqrt_d.iter().map(|s| s.conj()).collect();
        let damping = (0..index_set.len())
            .map(|i| {
                let v = index_set.slot_vector(i);
                modes
                    .modes
                    .iter()
                    .enumerate()
                    .fold(C64::new(0.0, 0.0), |acc, (j, md)| {
                        acc + md.rate * v[j] as f64 + md.rate.conj() * v[k + j] as f64
                    })
            })
            .collect();
        let sqrt_int = (0..=index_set.max_tier() + 1)
            .map(|x| (x as f64).sqrt())
            .collect();
        Ok(HeomGenerator {
            index_set,
            h_split: 2.0 * sys.epsilon,
            h_tunnel: sys.delta,
            sqrt_d,
            sqrt_d_conj,
            damping,
            sqrt_int,
        })
    }

    pub fn index_set(&self) -> &Arc<HierarchyIndexSet> {
        &self.index_set
    }

    /// Uses the other branch of `√d_k` in all four coupling terms of mode `k`.
    pub fn flip_branch(&mut self, k: usize) {
        self.sqrt_d[k] = -self.sqrt_d[k];
        self.sqrt_d_conj[k] = -self.sqrt_d_conj[k];
    }

    /// Time derivative of a single ADO.
    #[inline]
    fn derivative(&self, ados: &[Mat2], i: usize) -> Mat2 {
        let set = &*self.index_set;
        self.derivative_core(ados, ados[i], i, set.up_row(i), set.down_row(i))
    }

    /// Time derivative of packed unit `u`.
    #[inline]
    fn derivative_packed(&self, p: &Packing, x: &[Mat2], u: usize) -> Mat2 {
        let w = 2 * self.index_set.modes();
        self.derivative_core(
            x,
            x[u],
            p.canon[u] as usize,
            &p.up[u * w..(u + 1) * w],
            &p.down[u * w..(u + 1) * w],
        )
    }

    /// Written out entrywise for `q̂ = σ_z` and a real symmetric `H_s`.
    /// Neighbour entries with `CONJ` set refer to the adjoint of the stored ADO.
    #[inline(always)]
    fn derivative_core(&self, x: &[Mat2], rho: Mat2, i: usize, up: &[u32], down: &[u32]) -> Mat2 {
        let set = &*self.index_set;
        let k = set.modes();
        let v = set.slot_vector(i);
        let [r00, r01, r10, r11] = rho.0;
        let g = self.damping[i];
        let (ac, b) = (self.h_split, self.h_tunnel);
        let mut o00 = -I * (r10 - r01) * b - g * r00;
        let mut o01 = -I * (r01 * ac + (r11 - r00) * b) - g * r01;
        let mut o10 = -I * (-r10 * ac + (r00 - r11) * b) - g * r10;
        let mut o11 = -I * (r01 - r10) * b - g * r11;
        if k == 0 {
            return Mat2([o00, o01, o10, o11]);
        }
        let fetch = |e: u32| {
            let a = x[(e & !CONJ) as usize];
            if e & CONJ != 0 {
                a.dagger()
            } else {
                a
            }
        };
        // only the off-diagonal of the upward sum survives [σ_z, ·]
        let (mut u01, mut u10) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
        let mut l = [C64::new(0.0, 0.0); 4];
        let mut r = [C64::new(0.0, 0.0); 4];
        for j in 0..k {
            let (mj, nj) = (v[j] as usize, v[k + j] as usize);
            if up[j] != NONE {
                let c = self.sqrt_d[j] * self.sqrt_int[mj + 1];
                let a = fetch(up[j]).0;
                u01 += c * a[1];
                u10 += c * a[2];
            }
            if up[k + j] != NONE {
                let c = self.sqrt_d_conj[j] * self.sqrt_int[nj + 1];
                let a = fetch(up[k + j]).0;
                u01 += c * a[1];
                u10 += c * a[2];
            }
            if mj > 0 {
                let c = self.sqrt_d[j] * self.sqrt_int[mj];
                let a = fetch(down[j]).0;
                for e in 0..4 {
                    l[e] += c * a[e];
                }
            }
            if nj > 0 {
                let c = self.sqrt_d_conj[j] * self.sqrt_int[nj];
                let a = fetch(down[k + j]).0;
                for e in 0..4 {
                    r[e] += c * a[e];
                }
            }
        }
        // −i[σ_z, U] − iσ_z L + i R σ_z
        o00 += I * (r[0] - l[0]);
        o01 += -I * (2.0 * u01 + l[1] + r[1]);
        o10 += I * (2.0 * u10 + l[2] + r[2]);
        o11 += I * (l[3] - r[3]);
        Mat2([o00, o01, o10, o11])
    }

    /// Writes the derivative of every ADO into `out`.
    pub fn apply(&self, ados: &[Mat2], out: &mut [Mat2]) {
        if ados.len() >= PARALLEL_THRESHOLD {
            out.par_iter_mut()
                .enumerate()
                .with_min_len(1024)
                .for_each(|(i, o)| *o = self.derivative(ados, i));
        } else {
            for (i, o) in out.iter_mut().enumerate() {
                *o = self.derivative(ados, i);
            }
        }
    }

    /// As [`apply`](Self::apply), evaluating one member of each conjugate pair.
    /// Valid only for states with the conjugation symmetry.
    pub fn apply_symmetric(&self, ados: &[Mat2], out: &mut [Mat2]) {
        let set = &*self.index_set;
        if ados.len() >= PARALLEL_THRESHOLD {
            out.par_iter_mut()
                .enumerate()
                .with_min_len(1024)
                .for_each(|(i, o)| {
                    if set.conjugate_of(i) >= i {
                        *o = self.derivative(ados, i);
                    }
                });
        } else {
            for (i, o) in out.iter_mut().enumerate() {
                if set.conjugate_of(i) >= i {
                    *o = self.derivative(ados, i);
                }
            }
        }
        for i in 0..out.len() {
            let c = set.conjugate_of(i);
            if c < i {
                out[i] = out[c].dagger();
            }
        }
    }
}

/// Flag on a packed neighbour entry: use the adjoint of the stored ADO.
const CONJ: u32 = 1 << 31;

/// Storage for the canonical half of a hierarchy, one ADO per conjugate
/// pair `{i, conj(i)}` (the member with the larger ordinal).
struct Packing {
    canon: Vec<u32>,
    /// Packed position of every full ordinal, with `CONJ` if it is not stored.
    pos: Vec<u32>,
    up: Vec<u32>,
    down: Vec<u32>,
}

impl Packing {
    fn new(set: &HierarchyIndexSet) -> Self {
        let n = set.len();
        let canon: Vec<u32> = (0..n)
            .filter(|&i| set.conjugate_of(i) >= i)
            .map(|i| i as u32)
            .collect();
        assert!(n < CONJ as usize);
        let mut pos = vec![0u32; n];
        for (u, &i) in canon.iter().enumerate() {
            pos[i as usize] = u as u32;
        }
        for i in 0..n {
            let c = set.conjugate_of(i);
            if c < i {
                pos[i] = pos[c] | CONJ;
            }
        }
        let map = |row: &[u32]| {
            row.iter()
                .map(|&e| if e == NONE { NONE } else { pos[e as usize] })
                .collect::<Vec<_>>()
        };
        let up = canon
            .iter()
            .flat_map(|&i| map(set.up_row(i as usize)))
            .collect();
        let down = canon
            .iter()
            .flat_map(|&i| map(set.down_row(i as usize)))
            .collect();
        Packing {
            canon,
            pos,
            up,
            down,
        }
    }

    fn unpack(&self, x: &[Mat2]) -> Vec<Mat2> {
        self.pos
            .iter()
            .map(|&e| {
                let a = x[(e & !CONJ) as usize];
                if e & CONJ != 0 {
                    a.dagger()
                } else {
                    a
                }
            })
            .collect()
    }
}

/// One Runge–Kutta stage fused with its updates: for every unit with
/// derivative `d` at `x`, `acc ← base + c_acc·d` and `next ← y + c_next·d`,
/// where `base` is `y` on the first stage and `acc` afterwards.
struct Stage<'a> {
    x: &'a [Mat2],
    y: &'a [Mat2],
    c_acc: f64,
    c_next: f64,
    first: bool,
}

const CHUNK: usize = 1024;

fn run_stage<F>(f: &F, st: &Stage<'_>, acc: &mut [Mat2], next: Option<&mut [Mat2]>)
where
    F: Fn(&[Mat2], usize) -> Mat2 + Sync,
{
    let n = acc.len();
    let update = |off: usize, a: &mut [Mat2], mut b: Option<&mut [Mat2]>| {
        for j in 0..a.len() {
            let u = off + j;
            let d = f(st.x, u);
            let base = if st.first { st.y[u] } else { a[j] };
            a[j] = base + d.scale_re(st.c_acc);
            if let Some(b) = b.as_deref_mut() {
                b[j] = st.y[u] + d.scale_re(st.c_next);
            }
        }
    };
    match next {
        Some(nx) if n >= PARALLEL_THRESHOLD => acc
            .par_chunks_mut(CHUNK)
            .zip(nx.par_chunks_mut(CHUNK))
            .enumerate()
            .for_each(|(c, (a, b))| update(c * CHUNK, a, Some(b))),
        None if n >= PARALLEL_THRESHOLD => acc
            .par_chunks_mut(CHUNK)
            .enumerate()
            .for_each(|(c, a)| update(c * CHUNK, a, None)),
        nx => update(0, acc, nx),
    }
}

/// Low-storage RK4: leaves `y(t + dt)` in `acc`.
fn rk4_step<F>(f: &F, dt: f64, y: &[Mat2], acc: &mut [Mat2], xa: &mut [Mat2], xb: &mut [Mat2])
where
    F: Fn(&[Mat2], usize) -> Mat2 + Sync,
{
    run_stage(
        f,
        &Stage {
            x: y,
            y,
            c_acc: dt / 6.0,
            c_next: dt / 2.0,
            first: true,
        },
        acc,
        Some(xa),
    );
    run_stage(
        f,
        &Stage {
            x: xa,
            y,
            c_acc: dt / 3.0,
            c_next: dt / 2.0,
            first: false,
        },
        acc,
        Some(xb),
    );
    run_stage(
        f,
        &Stage {
            x: xb,
            y,
            c_acc: dt / 3.0,
            c_next: dt,
            first: false,
        },
        acc,
        Some(xa),
    );
    run_stage(
        f,
        &Stage {
            x: xa,
            y,
            c_acc: dt / 6.0,
            c_next: 0.0,
            first: false,
        },
        acc,
        None,
    );
}

/// The hierarchy time derivative of `state`.
pub fn heom_rhs(state: &HierarchyState, sys: &SpinSystem, modes: &ModeSet) -> Result<Vec<Mat2>> {
    let gen = HeomGenerator::new(state.index_set.clone(), sys, modes)?;
    let mut out = vec![Mat2::ZERO; state.ados.len()];
    gen.apply(&state.ados, &mut out);
    Ok(out)
}

pub(crate) fn validate_initial(initial: &Mat2) -> Result<()> {
    if !initial.is_finite()
        || initial.hermiticity_error() > 1e-12
        || (initial.trace() - 1.0).norm() > 1e-12
    {
        return Err(Error::InvalidParameter {
            name: "initial",
            reason: "must be a Hermitian matrix with unit trace".into(),
        });
    }
    Ok(())
}

/// Propagates the hierarchy truncated at tier `max_tier` from a factorized
/// initial state.
pub fn propagate(
    initial: &Mat2,
    sys: &SpinSystem,
    modes: &ModeSet,
    cfg: &PropagatorConfig,
    max_tier: usize,
) -> Result<Trajectory> {
    let set = Arc::new(enumerate_hierarchy(modes.len(), max_tier)?);
    let gen = HeomGenerator::new(set, sys, modes)?;
    propagate_with(&gen, initial, cfg)
}

/// Propagates with a prebuilt generator.
pub fn propagate_with(
    gen: &HeomGenerator,
    initial: &Mat2,
    cfg: &PropagatorConfig,
) -> Result<Trajectory> {
    validate_initial(initial)?;
    if cfg.record_stride == 0 || !(cfg.dt > 0.0) {
        return Err(Error::InvalidParameter {
            name: "cfg",
            reason: "dt and record_stride must be positive".into(),
        });
    }
    let set = gen.index_set();
    let packing = cfg.exploit_symmetry.then(|| Packing::new(set));
    let n = packing.as_ref().map_or(set.len(), |p| p.canon.len());
    // ordinal 0 is self-conjugate and sits first in either layout
    let mut y = vec![Mat2::ZERO; n];
    y[0] = *initial;
    let mut acc = vec![Mat2::ZERO; n];
    let mut xa = vec![Mat2::ZERO; n];
    let mut xb = vec![Mat2::ZERO; n];
    let dt = cfg.dt;
    let steps = cfg.steps();

    let mut traj = Trajectory {
        states: cfg.keep_states.then(Vec::new),
        ..Default::default()
    };
    let record = |traj: &mut Trajectory, y: &[Mat2], time: f64| {
        traj.times.push(time);
        traj.rho.push(y[0]);
        if let Some(s) = traj.states.as_mut() {
            let ados = packing.as_ref().map_or_else(|| y.to_vec(), |p| p.unpack(y));
            s.push(HierarchyState {
                index_set: set.clone(),
                ados,
                time,
            });
        }
    };
    record(&mut traj, &y, 0.0);
    let mut last_stable = 0.0;

    let full = |x: &[Mat2], i: usize| gen.derivative(x, i);
    let packed = |x: &[Mat2], u: usize| gen.derivative_packed(packing.as_ref().unwrap(), x, u);
    for step in 1..=steps {
        match packing {
            Some(_) => rk4_step(&packed, dt, &y, &mut acc, &mut xa, &mut xb),
            None => rk4_step(&full, dt, &y, &mut acc, &mut xa, &mut xb),
        }
        std::mem::swap(&mut y, &mut acc);
        let time = step as f64 * dt;

        let rho = y[0];
        if !rho.is_finite() || rho.max_abs() > OVERFLOW_LIMIT {
            return Err(Error::Unstable {
                last_stable_time: last_stable,
            });
        }
        if step % cfg.record_stride == 0 || step == steps {
            if y.iter()
                .any(|a| !a.is_finite() || a.max_abs() > OVERFLOW_LIMIT)
            {
                return Err(Error::Unstable {
                    last_stable_time: last_stable,
                });
            }
            record(&mut traj, &y, time);
        }
        last_stable = time;
    }
    Ok(traj)
}
