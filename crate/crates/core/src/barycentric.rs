//! Barycentric rational approximation by the AAA algorithm, with poles,
//! residues and zeros from the barycentric companion pencil.

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `r(x) = Σ w_j f_j/(x − z_j) / Σ w_j/(x − z_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarycentricApproximant {
    pub support_points: Vec<f64>,
    pub support_values: Vec<f64>,
    pub weights: Vec<C64>,
    /// Max absolute error on the non-support samples after each greedy step.
    pub error_history: Vec<f64>,
    /// Final max error divided by the largest sample magnitude.
    pub relative_error: f64,
    /// False when `max_degree` was reached before `rel_tol`.
    pub converged: bool,
}

impl BarycentricApproximant {
    pub fn degree(&self) -> usize {
        self.weights.len().saturating_sub(1)
    }

    pub fn eval(&self, x: C64) -> C64 {
        let mut num = C64::new(0.0, 0.0);
        let mut den = C64::new(0.0, 0.0);
        for ((&z, &f), &w) in self
            .support_points
            .iter()
            .zip(&self.support_values)
            .zip(&self.weights)
        {
            let diff = x - z;
            if diff == C64::new(0.0, 0.0) {
                return C64::new(f, 0.0);
            }
            let c = w / diff;
            num += c * f;
            den += c;
        }
        num / den
    }

    pub fn eval_real(&self, x: f64) -> C64 {
        self.eval(C64::new(x, 0.0))
    }

    fn numerator_weights(&self) -> Vec<C64> {
        self.weights
            .iter()
            .zip(&self.support_values)
            .map(|(w, f)| w * f)
            .collect()
    }
}

/// Greedy AAA fit of `values` sampled at `grid`.
///
/// Iteration stops when the max error on the samples drops to
/// `rel_tol · max|f|` or the rational degree reaches `max_degree`.
pub fn aaa_fit(
    grid: &[f64],
    values: &[f64],
    rel_tol: f64,
    max_degree: usize,
) -> Result<BarycentricApproximant> {
    let n = grid.len();
    if n != values.len() {
        return Err(Error::InvalidParameter {
            name: "samples",
            reason: "grid and values differ in length".into(),
        });
    }
    if n < 3 {
        return Err(Error::InvalidParameter {
            name: "samples",
            reason: format!("need at least 3 samples, got {n}"),
        });
    }
    if !(rel_tol > 0.0) {
        return Err(Error::InvalidParameter {
            name: "rel_tol",
            reason: "must be > 0".into(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "samples",
            reason: "values must be finite".into(),
        });
    }
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let target = rel_tol * scale;

    if values.iter().all(|&v| v == values[0]) {
        return Ok(BarycentricApproximant {
            support_points: vec![grid[0]],
            support_values: vec![values[0]],
            weights: vec![C64::new(1.0, 0.0)],
            error_history: vec![0.0],
            relative_error: 0.0,
            converged: true,
        });
    }

    let mut is_support = vec![false; n];
    let mut support: Vec<usize> = Vec::new();
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut approx: Vec<C64> = vec![C64::new(mean, 0.0); n];
    let mut weights: Vec<C64> = Vec::new();
    let mut history = Vec::new();
    let mut err = f64::INFINITY;

    while support.len() <= max_degree {
        // worst sample; ties resolve to the lowest index
        let mut worst = None;
        let mut worst_err = -1.0;
        for i in 0..n {
            if is_support[i] {
                continue;
            }
            let e = (approx[i] - values[i]).norm();
            if e > worst_err {
                worst_err = e;
                worst = Some(i);
            }
        }
        let Some(j) = worst else { break };
        is_support[j] = true;
        support.push(j);

        let rows: Vec<usize> = (0..n).filter(|&i| !is_support[i]).collect();
        let m = support.len();
        let cauchy = DMatrix::from_fn(rows.len(), m, |r, c| {
            C64::new(1.0 / (grid[rows[r]] - grid[support[c]]), 0.0)
        });
        if rows.is_empty() {
            weights = vec![C64::new(1.0, 0.0); m];
            err = 0.0;
            history.push(err);
            break;
        }
        let loewner = DMatrix::from_fn(rows.len(), m, |r, c| {
            cauchy[(r, c)] * (values[rows[r]] - values[support[c]])
        });
        weights = smallest_right_singular_vector(loewner)?;

        let fvals: Vec<f64> = support.iter().map(|&k| values[k]).collect();
        err = 0.0;
        for (r, &i) in rows.iter().enumerate() {
            let mut num = C64::new(0.0, 0.0);
            let mut den = C64::new(0.0, 0.0);
            for c in 0..m {
                let t = cauchy[(r, c)] * weights[c];
                num += t * fvals[c];
                den += t;
            }
            approx[i] = num / den;
            err = f64::max(err, (approx[i] - values[i]).norm());
        }
        for &k in &support {
            approx[k] = C64::new(values[k], 0.0);
        }
        history.push(err);
        if err <= target {
            break;
        }
    }

    Ok(BarycentricApproximant {
        support_points: support.iter().map(|&k| grid[k]).collect(),
        support_values: support.iter().map(|&k| values[k]).collect(),
        weights,
        error_history: history,
        relative_error: if scale > 0.0 { err / scale } else { 0.0 },
        converged: err <= target,
    })
}

fn smallest_right_singular_vector(a: DMatrix<C64>) -> Result<Vec<C64>> {
    let m = a.ncols();
    if m == 1 {
        return Ok(vec![C64::new(1.0, 0.0)]);
    }
    // pad to at least m rows so that the thin SVD returns the full right basis
    let a = if a.nrows() < m {
        let mut padded = DMatrix::zeros(m, m);
        padded.rows_mut(0, a.nrows()).copy_from(&a);
        padded
    } else {
        a
    };
    let svd = a
        .try_svd(false, true, 1e-15, 10_000)
        .ok_or_else(|| Error::Eigen("SVD did not converge".into()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Eigen("SVD returned no right singular vectors".into()))?;
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty singular values");
    Ok(v_t.row(idx).iter().map(|v| v.conj()).collect())
}

/// Finite roots of `Σ_j a_j / (x − z_j)`.
///
/// The roots are the finite generalized eigenvalues of the arrowhead pencil
/// `([0 aᵀ; 1 Z], diag(0, I))`. A Householder reflection onto the constraint
/// `aᵀv = 0` deflates the two infinite eigenvalues and leaves an ordinary
/// eigenproblem of size `m − 1`.
fn barycentric_roots(nodes: &[f64], a: &[C64]) -> Result<Vec<C64>> {
    let m = nodes.len();
    if m <= 1 {
        return Ok(Vec::new());
    }
    let norm = a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::Eigen("weights are all zero".into()));
    }
    // target vector is conj(a) so that aᵀv = (conj a)ᴴ v
    let ca: Vec<C64> = a.iter().map(|x| x.conj()).collect();
    let phase = if ca[0].norm() > 0.0 {
        ca[0] / ca[0].norm()
    } else {
        C64::new(1.0, 0.0)
    };
    let mut v = DVector::from_vec(ca.clone());
    v[0] += phase * norm;
    let vnorm2 = v.iter().map(|x| x.norm_sqr()).sum::<f64>();
    let h = DMatrix::<C64>::identity(m, m) - (&v * v.adjoint()) * C64::new(2.0 / vnorm2, 0.0);

    let ones = DVector::from_element(m, C64::new(1.0, 0.0));
    let b = &h * ones;
    let z = DMatrix::from_diagonal(&DVector::from_iterator(
        m,
        nodes.iter().map(|&x| C64::new(x, 0.0)),
    ));
    let hzh = &h * z * &h;
    if b[0].norm() <= 1e-13 * (m as f64).sqrt() {
        // Σa ≈ 0: a root escapes to infinity and the deflation is singular.
        return Err(Error::Eigen(
            "barycentric weights sum to zero; pencil deflation is singular".into(),
        ));
    }
    let reduced = DMatrix::from_fn(m - 1, m - 1, |r, c| {
        hzh[(r + 1, c + 1)] - b[r + 1] * hzh[(0, c + 1)] / b[0]
    });
    eigenvalues(reduced)
}

fn eigenvalues(m: DMatrix<C64>) -> Result<Vec<C64>> {
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = Schur::try_new(m, 1e-15, 100_000)
        .ok_or_else(|| Error::Eigen("Schur iteration did not converge".into()))?;
    let ev = schur
        .eigenvalues()
        .ok_or_else(|| Error::Eigen("Schur form is not triangular".into()))?;
    Ok(ev
        .iter()
        .copied()
        .filter(|z| z.re.is_finite() && z.im.is_finite())
        .collect())
}

/// A simple pole with its residue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoleResidue {
    pub pole: C64,
    pub residue: C64,
}

/// Zeros of the approximant (roots of the barycentric numerator).
///
/// The numerator degree often drops below `m − 1`, so the pencil has extra
/// infinite eigenvalues. They are separated by a Möbius shift: with
/// `μ = 1/(λ − c)` the pencil becomes the ordinary eigenproblem of
/// `(E − cB)⁻¹B`, where infinite `λ` map to `μ ≈ 0`. Zeros far outside the
/// support region are dropped; they only serve doublet detection.
pub fn zeros(a: &BarycentricApproximant) -> Result<Vec<C64>> {
    let nw = a.numerator_weights();
    let m = nw.len();
    if m <= 1 || nw.iter().all(|w| w.norm() == 0.0) {
        return Ok(Vec::new());
    }
    let zmax = a
        .support_points
        .iter()
        .fold(0.0f64, |acc, z| acc.max(z.abs()));
    let zmean = a.support_points.iter().sum::<f64>() / m as f64;
    let c = C64::new(
        zmean + std::f64::consts::FRAC_1_PI * (zmax + 1.0),
        0.618_033_988 * (zmax + 1.0),
    );
    let n = m + 1;
    let mut shifted = DMatrix::<C64>::zeros(n, n);
    let mut b = DMatrix::<C64>::zeros(n, n);
    for j in 0..m {
        shifted[(0, j + 1)] = nw[j];
        shifted[(j + 1, 0)] = C64::new(1.0, 0.0);
        shifted[(j + 1, j + 1)] = C64::new(a.support_points[j], 0.0) - c;
        b[(j + 1, j + 1)] = C64::new(1.0, 0.0);
    }
    let lu = shifted.lu();
    let Some(inv_b) = lu.solve(&b) else {
        return Err(Error::Eigen("shifted pencil is singular".into()));
    };
    let mu = eigenvalues(inv_b)?;
    let mu_max = mu.iter().fold(0.0f64, |acc, x| acc.max(x.norm()));
    let horizon = 1e6 * (zmax + 1.0);
    Ok(mu
        .into_iter()
        .filter(|x| x.norm() > 1e-8 * mu_max)
        .map(|x| c + C64::new(1.0, 0.0) / x)
        .filter(|l| l.norm() <= horizon)
        .collect())
}

/// Relative residue below which a pole is treated as numerical noise.
pub const SPURIOUS_RESIDUE: f64 = 1e-13;
/// Pole–zero distance below which the pair is a Froissart doublet.
pub const DOUBLET_DISTANCE: f64 = 1e-10;

/// Poles of the approximant with residues from `N(p)/D'(p)`, after
/// removing spurious poles and Froissart doublets.
pub fn poles_and_residues(a: &BarycentricApproximant) -> Result<Vec<PoleResidue>> {
    if a.weights.iter().all(|w| w.norm() == 0.0) {
        return Err(Error::Eigen("weights are all zero".into()));
    }
    let poles = barycentric_roots(&a.support_points, &a.weights)?;
    let zs = zeros(a)?;
    let mut out: Vec<PoleResidue> = poles
        .into_iter()
        .map(|p| {
            let mut num = C64::new(0.0, 0.0);
            let mut dden = C64::new(0.0, 0.0);
            for ((&z, &f), &w) in a
                .support_points
                .iter()
                .zip(&a.support_values)
                .zip(&a.weights)
            {
                let d = p - z;
                num += w * f / d;
                dden -= w / (d * d);
            }
            PoleResidue {
                pole: p,
                residue: num / dden,
            }
        })
        .filter(|pr| pr.residue.re.is_finite() && pr.residue.im.is_finite())
        .collect();
    let max_res = out.iter().fold(0.0f64, |m, pr| m.max(pr.residue.norm()));
    out.retain(|pr| pr.residue.norm() >= SPURIOUS_RESIDUE * max_res);
    out.retain(|pr| zs.iter().all(|z| (z - pr.pole).norm() >= DOUBLET_DISTANCE));
    out.sort_by(|x, y| {
        x.pole
            .re
            .total_cmp(&y.pole.re)
            .then(x.pole.im.total_cmp(&y.pole.im))
    });
    Ok(out)
}
