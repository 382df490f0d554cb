//! Experiment orchestration: decomposition, the requested tasks, CSV/JSON
//! artifacts and the run manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, InitialState, Task};
use crate::error::{Error, Result};
use crate::gme::{
    asymptotic_rates, asymptotic_rates_matrix, extract_kernel, extract_kernel_matrix, gme_forward,
    MemoryKernelSeries, RateMatrix,
};
use crate::heom::{observe_population, propagate, Method, PopulationSeries, PropagatorConfig};
use crate::modes::{decompose, ModeSet};
use crate::niba::niba_kernel_series;
use crate::output::{
    checksum, kernel_table, matrix_kernel_table, population_table, read_population,
    trajectory_table, Table,
};
use crate::perturbative::{redfield_plus_propagate, redfield_propagate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    #[serde(rename = "K")]
    pub k: usize,
    pub residual: Option<f64>,
    pub modes: ModeSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub method: Method,
    pub dt: f64,
    pub t_final: f64,
    pub steps: usize,
    pub record_stride: usize,
    pub sample_spacing: f64,
    pub exploit_symmetry: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskFailure {
    pub task: String,
    pub error: String,
    /// True when the failure comes from the input rather than the numerics.
    pub validation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    /// The configuration with every default filled in; feeding it back to
    /// `run` reproduces the artifacts.
    pub config: ExperimentConfig,
    pub modes: ModeSummary,
    pub solver: SolverSettings,
    pub wall_clock_seconds: f64,
    /// File name → SHA-256 of its contents.
    pub artifacts: BTreeMap<String, String>,
    pub failures: Vec<TaskFailure>,
}

impl RunManifest {
    pub fn succeeded(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::write(
            dir.join("manifest.json"),
            serde_json::to_string_pretty(self)? + "\n",
        )?;
        Ok(())
    }
}

/// Process exit status: 0 success, 2 invalid input, 3 numerical failure.
pub fn exit_code(failures: &[TaskFailure]) -> i32 {
    match failures {
        [] => 0,
        f if f.iter().all(|x| x.validation) => 2,
        _ => 3,
    }
}

pub fn error_exit_code(e: &Error) -> i32 {
    if e.is_validation() {
        2
    } else {
        3
    }
}

/// Formats a parameter for file names: `0.25` → `0.25`, `1` → `1`.
fn label(x: f64) -> String {
    format!("{x}")
}

struct Run<'a> {
    cfg: &'a ExperimentConfig,
    dir: PathBuf,
    artifacts: BTreeMap<String, String>,
}

impl Run<'_> {
    fn emit(&mut self, name: String, table: &Table) -> Result<()> {
        let sum = table.write(&self.dir.join(&name))?;
        self.artifacts.insert(name, sum);
        Ok(())
    }

    fn emit_json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let bytes = (serde_json::to_string_pretty(value)? + "\n").into_bytes();
        std::fs::write(self.dir.join(name), &bytes)?;
        self.artifacts.insert(name.into(), checksum(&bytes));
        Ok(())
    }

    fn s_label(&self) -> String {
        label(self.cfg.bath.s)
    }
}

#[derive(Serialize)]
struct RatesDocument {
    #[serde(skip_serializing_if = "Option::is_none")]
    exact: Option<RateMatrix>,
    #[serde(skip_serializing_if = "Option::is_none")]
    niba: Option<RateMatrix>,
}

/// Decomposes the bath, resolves the solver settings and the config, and
/// creates the output directory.
fn prepare(
    cfg: &ExperimentConfig,
    out: &Path,
) -> Result<(ExperimentConfig, ModeSet, PropagatorConfig)> {
    cfg.validate()?;
    let bath = cfg.bath()?;
    let dec = decompose(&bath, &cfg.fit).map_err(|e| e.in_task("decompose"))?;
    let prop = cfg.resolve_propagator(&dec.modes)?;
    let mut resolved = cfg.clone();
    resolved.run.dt = Some(prop.dt);
    resolved.run.record_stride = Some(prop.record_stride);
    if resolved.needs_exact_kernel() {
        resolved.kernel.level = cfg.kernel_level();
    }
    resolved.output = out.to_path_buf();
    std::fs::create_dir_all(out)?;
    Ok((resolved, dec.modes, prop))
}

fn manifest(
    cfg: ExperimentConfig,
    modes: ModeSet,
    prop: &PropagatorConfig,
    started: Instant,
) -> RunManifest {
    RunManifest {
        tool: format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
        config: cfg,
        modes: ModeSummary {
            k: modes.len(),
            residual: modes.certified_residual,
            modes,
        },
        solver: SolverSettings {
            method: prop.method,
            dt: prop.dt,
            t_final: prop.t_final,
            steps: prop.steps(),
            record_stride: prop.record_stride,
            sample_spacing: prop.dt * prop.record_stride as f64,
            exploit_symmetry: prop.exploit_symmetry,
        },
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        artifacts: BTreeMap::new(),
        failures: Vec::new(),
    }
}

/// Decomposes the bath and writes `modes.json` and `manifest.json` into `out`.
pub fn run_decompose(cfg: &ExperimentConfig, out: &Path) -> Result<RunManifest> {
    let started = Instant::now();
    let (resolved, modes, prop) = prepare(cfg, out)?;
    let mut run = Run {
        cfg: &resolved,
        dir: out.to_path_buf(),
        artifacts: BTreeMap::new(),
    };
    run.emit_json("modes.json", &modes)?;
    let artifacts = std::mem::take(&mut run.artifacts);
    let mut m = manifest(resolved, modes, &prop, started);
    m.artifacts = artifacts;
    m.wall_clock_seconds = started.elapsed().as_secs_f64();
    m.write(out)?;
    Ok(m)
}

/// Runs every requested task and writes its artifacts plus `manifest.json`
/// into `out` (defaulting to `cfg.output`). A failing task is recorded in
/// the manifest and the remaining tasks still run; failures before any task
/// starts are returned as errors.
pub fn run_experiment(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<RunManifest> {
    let started = Instant::now();
    let out = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.output.clone());
    let (resolved, modes, prop) = prepare(cfg, &out)?;
    let sys = resolved.system()?;
    let bath = resolved.bath()?;
    let initial = resolved.run.initial.density();
    let mut run = Run {
        cfg: &resolved,
        dir: out.clone(),
        artifacts: BTreeMap::new(),
    };
    let mut failures = Vec::new();
    let mut fail = |task: String, e: Error| {
        failures.push(TaskFailure {
            validation: e.is_validation(),
            error: e.to_string(),
            task,
        })
    };

    let mut tasks = resolved.tasks.clone();
    tasks.sort();
    tasks.dedup();

    let mut heom_pops: BTreeMap<usize, PopulationSeries> = BTreeMap::new();
    let mut niba_kernel: Option<MemoryKernelSeries> = None;
    let mut rates = RatesDocument {
        exact: None,
        niba: None,
    };
    for task in tasks {
        match task {
            Task::Heom => {
                let mut seen = std::collections::BTreeSet::new();
                for &l in resolved.run.levels.iter().filter(|&&l| seen.insert(l)) {
                    let name = format!("heom L={l}");
                    let r = propagate(&initial, &sys, &modes, &prop, l).and_then(|traj| {
                        run.emit(format!("P_heom_L{l}.csv"), &trajectory_table(&traj))?;
                        Ok(observe_population(&traj))
                    });
                    match r {
                        Ok(p) => {
                            heom_pops.insert(l, p);
                        }
                        Err(e) => fail(name, e),
                    }
                }
            }
            Task::RedfieldPlus => {
                if let Err(e) = redfield_plus_propagate(&initial, &sys, &modes, &prop)
                    .and_then(|t| run.emit("P_redfield_plus.csv".into(), &trajectory_table(&t)))
                {
                    fail("redfield_plus".into(), e);
                }
            }
            Task::Redfield => {
                if let Err(e) = redfield_propagate(&initial, &sys, &modes, &prop)
                    .and_then(|t| run.emit("P_redfield.csv".into(), &trajectory_table(&t)))
                {
                    fail("redfield".into(), e);
                }
            }
            Task::Niba => {
                let r = (|| {
                    let n = prop.steps() / prop.record_stride;
                    let h = prop.dt * prop.record_stride as f64;
                    let times: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
                    let (values, _) =
                        niba_kernel_series(&times, &sys, &bath, resolved.kernel.quad_tol)?;
                    let kernel = MemoryKernelSeries::new(times, values);
                    let s = run.s_label();
                    run.emit(format!("K_niba_s{s}.csv"), &kernel_table(&kernel, "K_niba"))?;
                    let p0 = (initial.0[0] - initial.0[3]).re;
                    let p = gme_forward(&kernel, p0, prop.t_final)?;
                    run.emit(format!("P_niba_s{s}.csv"), &population_table(&p))?;
                    Ok(kernel)
                })();
                match r {
                    Ok(k) => niba_kernel = Some(k),
                    Err(e) => fail("niba".into(), e),
                }
            }
            Task::ExtractKernel | Task::Rates => {
                if task == Task::Rates && resolved.has(Task::ExtractKernel) {
                    // handled together with the extraction
                    continue;
                }
                let r = (|| -> Result<()> {
                    let level = resolved.kernel_level().expect("validated");
                    let from_start = match heom_pops.get(&level) {
                        Some(p) => p.clone(),
                        None => {
                            observe_population(&propagate(&initial, &sys, &modes, &prop, level)?)
                        }
                    };
                    let s = run.s_label();
                    let exact = if resolved.kernel.matrix {
                        let other = match resolved.run.initial {
                            InitialState::Up => InitialState::Down,
                            InitialState::Down => InitialState::Up,
                        };
                        let from_other = observe_population(&propagate(
                            &other.density(),
                            &sys,
                            &modes,
                            &prop,
                            level,
                        )?);
                        let (up, down) = match resolved.run.initial {
                            InitialState::Up => (from_start, from_other),
                            InitialState::Down => (from_other, from_start),
                        };
                        let k = extract_kernel_matrix(&up, &down)?;
                        if resolved.has(Task::ExtractKernel) {
                            run.emit(format!("K_exact_s{s}.csv"), &matrix_kernel_table(&k))?;
                        }
                        asymptotic_rates_matrix(&k)?
                    } else {
                        let k = extract_kernel(&from_start)?;
                        if resolved.has(Task::ExtractKernel) {
                            run.emit(format!("K_exact_s{s}.csv"), &kernel_table(&k, "K"))?;
                        }
                        asymptotic_rates(&k)?
                    };
                    if resolved.has(Task::Rates) {
                        rates.exact = Some(exact);
                    }
                    Ok(())
                })();
                if let Err(e) = r {
                    fail(format!("{task:?}").to_lowercase(), e);
                }
            }
        }
    }
    if resolved.has(Task::Rates) {
        if let Some(k) = &niba_kernel {
            match asymptotic_rates(k) {
                Ok(r) => rates.niba = Some(r),
                Err(e) => fail("rates".into(), e),
            }
        }
        if rates.exact.is_some() || rates.niba.is_some() {
            if let Err(e) = run.emit_json("rates.json", &rates) {
                fail("rates".into(), e);
            }
        }
    }
    let artifacts = std::mem::take(&mut run.artifacts);
    let mut m = manifest(resolved, modes, &prop, started);
    m.artifacts = artifacts;
    m.failures = failures;
    m.write(&out)?;
    Ok(m)
}

/// One sweep point's outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub label: String,
    pub directory: PathBuf,
    pub failures: Vec<TaskFailure>,
}

/// Runs each sweep point in `out/<label>` with at most `jobs` points in flight.
pub fn run_sweep(
    cfg: &ExperimentConfig,
    out: Option<&Path>,
    jobs: usize,
) -> Result<Vec<SweepPoint>> {
    cfg.validate()?;
    let points = cfg.sweep_points();
    if points.is_empty() {
        return Err(Error::Config("`sweep`: no s or alpha values given".into()));
    }
    let root = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.output.clone());
    std::fs::create_dir_all(&root)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    use rayon::prelude::*;
    let results: Vec<SweepPoint> = pool.install(|| {
        points
            .par_iter()
            .map(|(name, c)| {
                let dir = root.join(name);
                let failures = match run_experiment(c, Some(&dir)) {
                    Ok(m) => m.failures,
                    Err(e) => vec![TaskFailure {
                        task: name.clone(),
                        validation: e.is_validation(),
                        error: e.to_string(),
                    }],
                };
                SweepPoint {
                    label: name.clone(),
                    directory: dir,
                    failures,
                }
            })
            .collect()
    });
    std::fs::write(
        root.join("sweep.json"),
        serde_json::to_string_pretty(&results)? + "\n",
    )?;
    Ok(results)
}

/// Kernel extraction from population CSVs (`t`, `P` columns). With `down`,
/// the 2×2 kernel is extracted from the pair of runs started in `+1` and `−1`.
pub fn run_extract(up: &Path, down: Option<&Path>, out: &Path) -> Result<BTreeMap<String, String>> {
    std::fs::create_dir_all(out)?;
    let cfg = ExperimentConfig::default();
    let mut run = Run {
        cfg: &cfg,
        dir: out.to_path_buf(),
        artifacts: BTreeMap::new(),
    };
    let p = read_population(up)?;
    let rates = match down {
        Some(d) => {
            let k = extract_kernel_matrix(&p, &read_population(d)?)?;
            run.emit("K_exact.csv".into(), &matrix_kernel_table(&k))?;
            asymptotic_rates_matrix(&k)?
        }
        None => {
            let k = extract_kernel(&p)?;
            run.emit("K_exact.csv".into(), &kernel_table(&k, "K"))?;
            asymptotic_rates(&k)?
        }
    };
    run.emit_json(
        "rates.json",
        &RatesDocument {
            exact: Some(rates),
            niba: None,
        },
    )?;
    Ok(run.artifacts)
}
