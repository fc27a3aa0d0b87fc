//! Majorization, the completeness condition, region labels, the doubly
//! stochastic form and the qubit closed forms.

use std::f64::consts::TAU;
use std::fmt;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::kraus::{analyse, IndexFunctionSet};
use crate::state::PureState;

/// Region of the convertibility diagram, keyed by the condition triple
/// (majorization, CoC, l1 monotone).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    R1,
    R2,
    R3,
    R4,
    R5,
    Other { majorization: bool, coc: bool, l1_monotone: bool },
}

impl Region {
    pub fn from_triple(majorization: bool, coc: bool, l1_monotone: bool) -> Region {
        match (majorization, coc, l1_monotone) {
            (true, true, true) => Region::R1,
            (true, false, false) => Region::R2,
            (false, false, false) => Region::R3,
            (true, false, true) => Region::R4,
            (false, false, true) => Region::R5,
            _ => Region::Other { majorization, coc, l1_monotone },
        }
    }

    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let flag = |b: bool| if b { 'T' } else { 'F' };
        match self {
            Region::R1 => f.write_str("R1"),
            Region::R2 => f.write_str("R2"),
            Region::R3 => f.write_str("R3"),
            Region::R4 => f.write_str("R4"),
            Region::R5 => f.write_str("R5"),
            Region::Other { majorization, coc, l1_monotone } => {
                write!(f, "Other({}{}{})", flag(*majorization), flag(*coc), flag(*l1_monotone))
            }
        }
    }
}

impl Serialize for Region {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// Smallest slack of each condition; a condition holds iff its margin is at least `-tol`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Margins {
    pub majorization: f64,
    pub coc: f64,
    pub l1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvertibilityReport {
    pub majorization: bool,
    pub coc: bool,
    pub l1_monotone: bool,
    pub region: Region,
    pub margins: Margins,
    /// Whether `I - sum K^T K` is PSD for the synthesized operators; absent
    /// when the probabilities are infeasible.
    pub residual_psd: Option<bool>,
    pub probabilities: Option<Vec<f64>>,
}

fn check_sorted(v: &[f64], tol: f64) -> Result<()> {
    match v.windows(2).position(|w| w[1] > w[0] + tol) {
        Some(i) => Err(Error::NotOrdered(i + 1)),
        None => Ok(()),
    }
}

/// Partial-sum majorization of sorted tilde vectors.
///
/// The slack vector holds `sum_{i<=k} phi~_i - sum_{i<=k} psi~_i` for every
/// `k < d`, followed by `-|sum psi~ - sum phi~|`.
pub fn check_majorization(psi: &[f64], phi: &[f64], tol: f64) -> Result<(bool, Vec<f64>)> {
    if psi.len() != phi.len() {
        return Err(Error::BadShape(format!("tilde vectors of length {} and {}", psi.len(), phi.len())));
    }
    check_sorted(psi, tol)?;
    check_sorted(phi, tol)?;
    let d = psi.len();
    let (mut sp, mut sf) = (0.0, 0.0);
    let mut slack = Vec::with_capacity(d);
    for k in 0..d {
        sp += psi[k];
        sf += phi[k];
        if k + 1 < d {
            slack.push(sf - sp);
        }
    }
    slack.push(-(sp - sf).abs());
    let ok = slack.iter().all(|&s| s >= -tol);
    Ok((ok, slack))
}

/// `entries[n][j] = phi_{f_n(j)}^2`; row 0 is the unpermuted squared target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaMatrix {
    pub entries: Vec<Vec<f64>>,
}

/// Builds omega from target coefficients in sorted order.
pub fn build_omega(phi_sorted: &[f64], fns: &IndexFunctionSet) -> Result<OmegaMatrix> {
    fns.validate()?;
    if fns.dim() != phi_sorted.len() {
        return Err(Error::BadShape(format!("index functions on {} points for a {}-level state", fns.dim(), phi_sorted.len())));
    }
    let entries = fns.fns.iter().map(|f| f.iter().map(|&k| phi_sorted[k].powi(2)).collect()).collect();
    Ok(OmegaMatrix { entries })
}

/// `psi_j^2 - sum_n p_n omega_nj` for `j = 2..d`, with source coefficients in sorted order.
pub fn check_coc(psi_sorted: &[f64], probs: &[f64], omega: &OmegaMatrix, tol: f64) -> Result<(bool, Vec<f64>)> {
    let d = psi_sorted.len();
    if probs.len() != omega.entries.len() || omega.entries.iter().any(|r| r.len() != d) {
        return Err(Error::BadShape("omega does not match the state and probabilities".into()));
    }
    let slack: Vec<f64> = (1..d)
        .map(|j| {
            let used: f64 = probs.iter().zip(&omega.entries).map(|(p, row)| p * row[j]).sum();
            psi_sorted[j].powi(2) - used
        })
        .collect();
    let ok = slack.iter().all(|&s| s >= -tol);
    Ok((ok, slack))
}

/// Canonically orders both states and evaluates all three conditions.
pub fn classify_region(psi: &PureState, phi: &PureState, tol: f64) -> Result<ConvertibilityReport> {
    Ok(analyse(psi, phi, tol)?.report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticForm {
    pub dmatrix: Vec<Vec<f64>>,
}

impl StochasticForm {
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.dmatrix.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }
}

/// Assembles `D` with `D[k][f_n(k)] += p_n` and checks it is doubly stochastic.
pub fn stochastic_form(psi: &[f64], phi: &[f64], probs: &[f64], fns: &IndexFunctionSet, tol: f64) -> Result<StochasticForm> {
    fns.validate()?;
    let d = fns.dim();
    if psi.len() != d || phi.len() != d || probs.len() != fns.len() {
        return Err(Error::BadShape("stochastic form inputs disagree in length".into()));
    }
    let mut dm = vec![vec![0.0; d]; d];
    for (p, f) in probs.iter().zip(&fns.fns) {
        for (k, &fk) in f.iter().enumerate() {
            dm[k][fk] += p;
        }
    }
    let mut dev: f64 = 0.0;
    for k in 0..d {
        dev = dev.max((dm[k].iter().sum::<f64>() - 1.0).abs());
        dev = dev.max((dm.iter().map(|r| r[k]).sum::<f64>() - 1.0).abs());
        for v in &dm[k] {
            dev = dev.max(-v);
        }
    }
    let form = StochasticForm { dmatrix: dm };
    for (a, b) in form.apply(phi).iter().zip(psi) {
        dev = dev.max((a - b).abs());
    }
    if dev > tol {
        return Err(Error::NotStochastic(dev));
    }
    Ok(form)
}

fn by_magnitude(c: &[f64]) -> (f64, f64) {
    if c[0].abs() < c[1].abs() {
        (c[1], c[0])
    } else {
        (c[0], c[1])
    }
}

/// Qubit interval of `mu` on which the pair converts deterministically.
///
/// Coefficients are first ordered by magnitude, `lambda = psi_1/psi_2`,
/// `kappa = phi_1/phi_2`. A vanishing `phi_2` is the limit `kappa -> inf`,
/// and `psi = phi` is feasible on the whole range.
pub fn qubit_closed_form(psi: &PureState, phi: &PureState, tol: f64) -> Result<(bool, Interval)> {
    if psi.dim() != 2 {
        return Err(Error::UnsupportedDimension(psi.dim()));
    }
    if !psi.shares_basis(phi) {
        return Err(Error::BasisMismatch);
    }
    let mu = psi.basis().mu(0, 1);
    let full = Interval::open(-1.0, 1.0);
    let (a1, a2) = by_magnitude(psi.coeffs());
    let (b1, b2) = by_magnitude(phi.coeffs());

    if a2.abs() <= tol {
        if b2.abs() > tol {
            return Err(Error::RankMismatch("source has rank one but target has rank two".into()));
        }
        return Ok((true, full));
    }
    let lambda = a1 / a2;
    let bound = if b2.abs() <= tol {
        -1.0 / lambda
    } else {
        let kappa = b1 / b2;
        if kappa.abs() < lambda.abs() - tol {
            return Err(Error::Indeterminate { lambda, kappa });
        }
        if (kappa - lambda).abs() <= tol {
            return Ok((true, full));
        }
        let den = 1.0 + kappa * lambda;
        if den.abs() <= tol {
            if lambda < 0.0 {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            }
        } else {
            -(kappa + lambda) / den
        }
    };
    let interval = if lambda < 0.0 { Interval::new(0.0, bound, true, false) } else { Interval::new(bound, 0.0, false, true) };
    let interval = interval.intersect(&full);
    Ok((interval.contains(mu), interval))
}

/// Local phases `alpha_2` (initial) and `beta_2` (final) of a qubit pair, radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitPhaseCase {
    pub alpha2: f64,
    pub beta2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseCase {
    General,
    FinalPhaseOnly,
    InitialPhaseOnly,
    BothPhases,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseVerdict {
    pub case: PhaseCase,
    /// `None` when the verdict is left to the real pipeline or is not classified.
    pub deterministic: Option<bool>,
}

fn is_zero_angle(a: f64, tol: f64) -> bool {
    let r = a.rem_euclid(TAU);
    r <= tol || TAU - r <= tol
}

pub fn qubit_phase_case(case: QubitPhaseCase, psi: &PureState, tol: f64) -> Result<PhaseVerdict> {
    if psi.dim() != 2 {
        return Err(Error::UnsupportedDimension(psi.dim()));
    }
    let (c, deterministic) = match (is_zero_angle(case.alpha2, tol), is_zero_angle(case.beta2, tol)) {
        (true, true) => (PhaseCase::General, None),
        (true, false) => {
            let [p1, p2] = [psi.coeffs()[0], psi.coeffs()[1]];
            (PhaseCase::FinalPhaseOnly, Some((p1.abs() - p2.abs()).abs() <= tol))
        }
        (false, true) => (PhaseCase::InitialPhaseOnly, Some(psi.basis().mu(0, 1).abs() <= tol)),
        (false, false) => (PhaseCase::BothPhases, None),
    };
    Ok(PhaseVerdict { case: c, deterministic })
}
