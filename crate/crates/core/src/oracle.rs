//! Independent verification of emitted plans and the grid census.
//!
//! The checks below only read the matrices and numbers a plan carries. They
//! use their own elimination and Jacobi eigen routines rather than the
//! factorizations the planner relies on.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::GramBasis;
use crate::conditions::Region;
use crate::error::{Error, Result};
use crate::kraus::{plan, PlanOutcome, TransformPlan};
use crate::state::{make_state, PureState};

/// The raw artifacts of a plan: what `verify` needs and nothing else.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSet {
    pub support: Vec<usize>,
    pub embedding: DMatrix<f64>,
    pub probs: Vec<f64>,
    pub kraus_ops: Vec<DMatrix<f64>>,
    pub completion: Option<Vec<DMatrix<f64>>>,
}

impl TransformPlan {
    pub fn operator_set(&self) -> OperatorSet {
        OperatorSet {
            support: self.support.clone(),
            embedding: self.embedding.clone(),
            probs: self.probs.clone(),
            kraus_ops: self.kraus_ops.clone(),
            completion: self.completion.as_ref().map(|ops| ops.iter().map(|f| f.matrix.clone()).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub deviation: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl VerificationReport {
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
fn eliminate(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let n = a.nrows();
    let mut m = a.clone();
    let mut x = b.clone();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[(i, col)].abs().total_cmp(&m[(j, col)].abs()))?;
        if m[(piv, col)].abs() < 1e-300 {
            return None;
        }
        m.swap_rows(col, piv);
        x.swap_rows(col, piv);
        for r in col + 1..n {
            let f = m[(r, col)] / m[(col, col)];
            if f != 0.0 {
                for c in col..n {
                    m[(r, c)] -= f * m[(col, c)];
                }
                x[r] -= f * x[col];
            }
        }
    }
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| m[(r, c)] * x[c]).sum();
        x[r] = (x[r] - s) / m[(r, r)];
    }
    Some(x)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut m = (a + a.transpose()) * 0.5;
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[(i, j)].powi(2)).sum();
        let scale: f64 = m.iter().map(|v| v * v).sum();
        if off <= 1e-32 * scale.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    (0..n).map(|i| m[(i, i)]).collect()
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

fn l1(c: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..c.len() {
        for j in 0..c.len() {
            if i != j {
                s += (c[i] * c[j]).abs();
            }
        }
    }
    s
}

/// Largest off-target coefficient mass over all input basis vectors: every
/// column `op * c_j` must be a multiple of a single `c_t`.
fn freeness_deviation(op: &DMatrix<f64>, embedding: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for j in 0..embedding.ncols() {
        let image = op * embedding.column(j);
        let Some(x) = eliminate(embedding, &image) else { return f64::INFINITY };
        let (t, _) = x.iter().enumerate().fold((0, 0.0_f64), |acc, (i, v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc });
        let off: f64 = x.iter().enumerate().filter(|&(i, _)| i != t).map(|(_, v)| v * v).sum();
        worst = worst.max(off.sqrt());
    }
    worst
}

/// Re-derives every claim of an operator set for the pair `psi -> phi`.
pub fn verify_operators(psi: &PureState, phi: &PureState, ops: &OperatorSet, tol: f64) -> Result<VerificationReport> {
    let d = psi.dim();
    let m = ops.support.len();
    if phi.dim() != d {
        return Err(Error::BadShape(format!("states of dimension {d} and {}", phi.dim())));
    }
    if m == 0 || ops.support.iter().any(|&i| i >= d) || ops.embedding.shape() != (m, m) {
        return Err(Error::BadShape("support and embedding do not fit the states".into()));
    }
    let all_square = |v: &[DMatrix<f64>]| v.iter().all(|k| k.shape() == (m, m));
    if ops.kraus_ops.len() != ops.probs.len() || !all_square(&ops.kraus_ops) || !ops.completion.as_deref().is_none_or(all_square) {
        return Err(Error::BadShape("operator shapes do not match the support".into()));
    }

    let mut checks = Vec::new();
    let mut push = |name: String, deviation: f64| {
        let pass = deviation.is_finite() && deviation <= tol;
        checks.push(Check { name, deviation, pass });
    };

    let b = &ops.embedding;
    let gram = psi.basis().gram();
    let sub_gram = DMatrix::from_fn(m, m, |a, c| gram[(ops.support[a], ops.support[c])]);
    push("embedding_gram".into(), inf_norm(&(b.transpose() * b - sub_gram)));

    let outside = (0..d)
        .filter(|i| !ops.support.contains(i))
        .map(|i| psi.coeffs()[i].abs().max(phi.coeffs()[i].abs()))
        .fold(0.0_f64, f64::max);
    push("support".into(), outside);

    let psi_e = b * DVector::from_iterator(m, ops.support.iter().map(|&i| psi.coeffs()[i]));
    let phi_e = b * DVector::from_iterator(m, ops.support.iter().map(|&i| phi.coeffs()[i]));
    push("states_normalized".into(), (psi_e.norm_squared() - 1.0).abs().max((phi_e.norm_squared() - 1.0).abs()));

    push("probability_sum".into(), (ops.probs.iter().sum::<f64>() - 1.0).abs());
    push("probability_nonneg".into(), ops.probs.iter().fold(0.0_f64, |acc, p| acc.max(-p)));

    let mut total = DMatrix::<f64>::zeros(m, m);
    for (n, (k, &p)) in ops.kraus_ops.iter().zip(&ops.probs).enumerate() {
        let out = k * &psi_e;
        push(format!("kraus_action[{}]", n + 1), (&out - &phi_e * p.max(0.0).sqrt()).norm());
        push(format!("measured_probability[{}]", n + 1), (out.norm_squared() - p).abs());
        push(format!("kraus_free[{}]", n + 1), freeness_deviation(k, b));
        total += k.transpose() * k;
    }

    let residual = DMatrix::identity(m, m) - &total;
    let min_eig = jacobi_eigenvalues(&residual).into_iter().fold(f64::INFINITY, f64::min);
    push("residual_psd".into(), (-min_eig).max(0.0));

    if let Some(fs) = &ops.completion {
        for (i, f) in fs.iter().enumerate() {
            let label = m + i + 1;
            push(format!("completion_annihilates[{label}]"), (f * &psi_e).norm());
            push(format!("completion_free[{label}]"), freeness_deviation(f, b));
            total += f.transpose() * f;
        }
        push("completeness".into(), inf_norm(&(total - DMatrix::identity(m, m))));
    }

    push("l1_monotone".into(), (l1(phi.coeffs()) - l1(psi.coeffs())).max(0.0));

    let passed = checks.iter().all(|c| c.pass);
    Ok(VerificationReport { checks, passed })
}

pub fn verify_plan(psi: &PureState, phi: &PureState, plan: &TransformPlan, tol: f64) -> Result<VerificationReport> {
    verify_operators(psi, phi, &plan.operator_set(), tol)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceSpec {
    /// Sources range over the same grid as the targets.
    Grid,
    /// One fixed source (coefficients, normalized on use).
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Points per angle. Two levels use `N` directions, three levels `N^2`.
    pub resolution: usize,
    pub source: SourceSpec,
    /// Targets appended to the grid (coefficients, normalized on use).
    pub extra_targets: Vec<Vec<f64>>,
    /// Keep a record for every pair, not only the disagreements.
    pub keep_records: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairRecord {
    pub psi: Vec<f64>,
    pub phi: Vec<f64>,
    pub region: String,
    pub majorization: bool,
    pub coc: bool,
    pub l1_monotone: bool,
    pub planned: bool,
    pub verified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Census {
    pub pairs: usize,
    pub counts: BTreeMap<String, usize>,
    pub planned: usize,
    pub verified: usize,
    /// Pairs where "region is R1" and "plan verified" disagree, sorted by coefficients.
    pub disagreements: Vec<PairRecord>,
    pub records: Vec<PairRecord>,
}

pub const MAX_GRID_PAIRS: usize = 1_000_000;

/// Midpoint angle grid of unit directions, one representative per `+-` pair.
pub fn grid_directions(d: usize, resolution: usize) -> Result<Vec<Vec<f64>>> {
    let n = resolution;
    let angle = |i: usize| (i as f64 + 0.5) * PI / n as f64;
    match d {
        2 => Ok((0..n).map(|i| vec![angle(i).cos(), angle(i).sin()]).collect()),
        3 => Ok((0..n)
            .flat_map(|i| {
                (0..n).map(move |j| {
                    let (t, p) = (angle(i), angle(j));
                    vec![t.sin() * p.cos(), t.sin() * p.sin(), t.cos()]
                })
            })
            .collect()),
        _ => Err(Error::UnsupportedDimension(d)),
    }
}

fn lex(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(a.len().cmp(&b.len()))
}

fn record(psi: &PureState, phi: &PureState, tol: f64) -> Result<PairRecord> {
    let outcome = plan(psi, phi, tol)?;
    let report = outcome.report();
    let verified = match &outcome {
        PlanOutcome::Planned(p) => verify_plan(psi, phi, p, tol)?.passed,
        PlanOutcome::Refused { .. } => false,
    };
    Ok(PairRecord {
        psi: psi.coeffs().to_vec(),
        phi: phi.coeffs().to_vec(),
        region: report.region.to_string(),
        majorization: report.majorization,
        coc: report.coc,
        l1_monotone: report.l1_monotone,
        planned: outcome.plan().is_some(),
        verified,
    })
}

/// Classifies, plans and verifies every grid pair over a two- or three-level basis.
pub fn exhaustive_condition_scan(basis: &Arc<GramBasis>, grid: &GridSpec, tol: f64) -> Result<Census> {
    let d = basis.dim();
    if !(2..=3).contains(&d) {
        return Err(Error::UnsupportedDimension(d));
    }
    if grid.resolution == 0 {
        return Err(Error::BadShape("grid resolution must be positive".into()));
    }
    let points = grid.resolution.saturating_pow(d as u32 - 1);
    let n_sources = match grid.source {
        SourceSpec::Grid => points,
        SourceSpec::Fixed(_) => 1,
    };
    let pairs = n_sources.saturating_mul(points.saturating_add(grid.extra_targets.len()));
    if pairs > MAX_GRID_PAIRS {
        return Err(Error::GridTooLarge(pairs));
    }
    let mut targets = grid_directions(d, grid.resolution)?;
    let sources = match &grid.source {
        SourceSpec::Grid => targets.clone(),
        SourceSpec::Fixed(c) => vec![c.clone()],
    };
    targets.extend(grid.extra_targets.iter().cloned());
    let norm = |c: &Vec<f64>| make_state(basis, c, true, tol);
    let sources: Vec<PureState> = sources.iter().map(norm).collect::<Result<_>>()?;
    let targets: Vec<PureState> = targets.iter().map(norm).collect::<Result<_>>()?;

    let records: Vec<PairRecord> = (0..pairs)
        .into_par_iter()
        .map(|idx| record(&sources[idx / targets.len()], &targets[idx % targets.len()], tol))
        .collect::<Result<_>>()?;

    let mut counts = BTreeMap::new();
    let (mut planned, mut verified) = (0, 0);
    let mut disagreements = Vec::new();
    for r in &records {
        *counts.entry(r.region.clone()).or_insert(0) += 1;
        planned += r.planned as usize;
        verified += r.verified as usize;
        if (r.region == Region::R1.to_string()) != r.verified {
            disagreements.push(r.clone());
        }
    }
    disagreements.sort_by(|a, b| lex(&a.psi, &b.psi).then_with(|| lex(&a.phi, &b.phi)));
    Ok(Census {
        pairs,
        counts,
        planned,
        verified,
        disagreements,
        records: if grid.keep_records { records } else { Vec::new() },
    })
}
