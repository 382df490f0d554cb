//! CSV tables with 17 significant digits and SHA-256 checksums.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gme::{MatrixKernelSeries, MemoryKernelSeries};
use crate::heom::{PopulationSeries, Trajectory};

/// Column-major numeric table with a header row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub headers: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(headers: &[&str], columns: Vec<Vec<f64>>) -> Result<Self> {
        if headers.len() != columns.len() || columns.windows(2).any(|w| w[0].len() != w[1].len()) {
            return Err(Error::InvalidParameter {
                name: "table",
                reason: "ragged columns or header mismatch".into(),
            });
        }
        Ok(Table {
            headers: headers.iter().map(|s| s.to_string()).collect(),
            columns,
        })
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.headers
            .iter()
            .position(|h| h == name)
            .map(|i| self.columns[i].as_slice())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.headers)?;
        for r in 0..self.rows() {
            w.write_record(self.columns.iter().map(|c| format!("{:.16e}", c[r])))?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    /// Writes the table and returns the SHA-256 of the bytes written.
    pub fn write(&self, path: &Path) -> Result<String> {
        let bytes = self.to_bytes()?;
        std::fs::write(path, &bytes)?;
        Ok(checksum(&bytes))
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let mut r = csv::Reader::from_reader(bytes);
        let headers: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let mut columns = vec![Vec::new(); headers.len()];
        for rec in r.records() {
            let rec = rec?;
            for (c, field) in columns.iter_mut().zip(rec.iter()) {
                let v = field
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("bad number {field:?}: {e}")))?;
                c.push(v);
            }
        }
        Ok(Table { headers, columns })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read(path)?)
    }
}

pub fn checksum(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub const TRAJECTORY_COLUMNS: [&str; 7] = [
    "t",
    "P",
    "Re rho00",
    "Re rho11",
    "Re rho01",
    "Im rho01",
    "trace_error",
];

pub fn trajectory_table(traj: &Trajectory) -> Table {
    let col = |f: &dyn Fn(usize) -> f64| (0..traj.len()).map(f).collect::<Vec<f64>>();
    let rho = &traj.rho;
    let columns = vec![
        traj.times.clone(),
        col(&|i| (rho[i].0[0] - rho[i].0[3]).re),
        col(&|i| rho[i].0[0].re),
        col(&|i| rho[i].0[3].re),
        col(&|i| rho[i].0[1].re),
        col(&|i| rho[i].0[1].im),
        col(&|i| (rho[i].trace() - 1.0).norm()),
    ];
    Table {
        headers: TRAJECTORY_COLUMNS.iter().map(|s| s.to_string()).collect(),
        columns,
    }
}

pub fn population_table(p: &PopulationSeries) -> Table {
    Table {
        headers: vec!["t".into(), "P".into()],
        columns: vec![p.times.clone(), p.values.clone()],
    }
}

pub fn kernel_table(k: &MemoryKernelSeries, name: &str) -> Table {
    Table {
        headers: vec!["t".into(), name.into()],
        columns: vec![k.times.clone(), k.values.clone()],
    }
}

pub fn matrix_kernel_table(k: &MatrixKernelSeries) -> Table {
    let entry = |r: usize, c: usize| k.values.iter().map(|m| m[(r, c)]).collect();
    Table {
        headers: ["t", "K_pp", "K_pm", "K_mp", "K_mm"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        columns: vec![
            k.times.clone(),
            entry(0, 0),
            entry(0, 1),
            entry(1, 0),
            entry(1, 1),
        ],
    }
}

/// Reads the population column `P` (with its `t` column) from any table that has one.
pub fn read_population(path: &Path) -> Result<PopulationSeries> {
    let t = Table::read(path)?;
    match (t.column("t"), t.column("P")) {
        (Some(times), Some(p)) => Ok(PopulationSeries::new(times.to_vec(), p.to_vec())),
        _ => Err(Error::Config(format!(
            "{} lacks `t` and `P` columns",
            path.display()
        ))),
    }
}
