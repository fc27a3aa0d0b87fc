//! Pure superposition states and the quantities derived from their coefficients.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::basis::{gram_inner, independence_range, GramBasis};
use crate::error::{Error, Result};
use crate::interval::Interval;

/// `|psi> = sum_i psi_i |c_i>` with real coefficients, normalized in the Gram metric.
#[derive(Debug, Clone)]
pub struct PureState {
    basis: Arc<GramBasis>,
    coeffs: Vec<f64>,
}

impl PureState {
    pub fn basis(&self) -> &Arc<GramBasis> {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    /// True when both states live over the same basis object or identical Gram matrices.
    pub fn shares_basis(&self, other: &PureState) -> bool {
        Arc::ptr_eq(&self.basis, &other.basis) || self.basis.gram() == other.basis.gram()
    }

    /// Same state with coefficients relabelled: new slot `a` holds old slot `perm[a]`.
    fn relabelled(&self, perm: &[usize], tol: f64) -> Result<PureState> {
        let coeffs = perm.iter().map(|&i| self.coeffs[i]).collect();
        let basis = if self.basis.equal_mu().is_some() {
            Arc::clone(&self.basis)
        } else {
            Arc::new(self.basis.permuted(perm, tol)?)
        };
        Ok(PureState { basis, coeffs })
    }
}

/// Builds a state, either rescaling to unit norm or checking that it already is.
pub fn make_state(basis: &Arc<GramBasis>, coeffs: &[f64], normalize: bool, tol: f64) -> Result<PureState> {
    if coeffs.len() != basis.dim() {
        return Err(Error::BadShape(format!("expected {} coefficients, got {}", basis.dim(), coeffs.len())));
    }
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::BadShape("non-finite coefficient".into()));
    }
    let norm2 = gram_inner(basis, coeffs, coeffs)?;
    if norm2 <= tol * tol || coeffs.iter().all(|&c| c == 0.0) {
        return Err(Error::ZeroVector);
    }
    let coeffs = if normalize {
        let s = norm2.sqrt();
        coeffs.iter().map(|c| c / s).collect()
    } else {
        if (norm2 - 1.0).abs() > tol {
            return Err(Error::NotNormalized(norm2));
        }
        coeffs.to_vec()
    };
    Ok(PureState { basis: Arc::clone(basis), coeffs })
}

/// Tilde coefficients with the ordering that sorts them non-increasingly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TildeVector {
    /// Values in the original basis labels.
    pub values: Vec<f64>,
    /// `order[a]` is the original label at sorted position `a`.
    pub order: Vec<usize>,
}

impl TildeVector {
    pub fn sorted(&self) -> Vec<f64> {
        self.order.iter().map(|&i| self.values[i]).collect()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// `psi_i (psi_i + sum_{j != i} mu_ij psi_j)`, i.e. `psi_i (G psi)_i`.
pub fn tilde_values(basis: &GramBasis, coeffs: &[f64]) -> Vec<f64> {
    let d = coeffs.len();
    (0..d)
        .map(|i| {
            let off: f64 = (0..d).filter(|&j| j != i).map(|j| basis.mu(i, j) * coeffs[j]).sum();
            coeffs[i] * (coeffs[i] + off)
        })
        .collect()
}

/// Stable descending order. An entry only overtakes its predecessor when it is
/// larger by more than `tol`, so near-ties keep the lower original index first.
pub fn descending_order(values: &[f64], tol: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    for a in 1..order.len() {
        let mut b = a;
        while b > 0 && values[order[b]] > values[order[b - 1]] + tol {
            order.swap(b, b - 1);
            b -= 1;
        }
    }
    order
}

pub fn tilde(state: &PureState) -> TildeVector {
    tilde_with_tol(state, crate::DEFAULT_TOL)
}

pub fn tilde_with_tol(state: &PureState, tol: f64) -> TildeVector {
    let values = tilde_values(&state.basis, &state.coeffs);
    let order = descending_order(&values, tol);
    TildeVector { values, order }
}

/// l1 norm of superposition of `|psi><psi|`: `sum_{i != j} |psi_i psi_j|`.
pub fn l1_norm(state: &PureState) -> f64 {
    l1_of(&state.coeffs)
}

pub(crate) fn l1_of(coeffs: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (i, a) in coeffs.iter().enumerate() {
        for (j, b) in coeffs.iter().enumerate() {
            if i != j {
                acc += (a * b).abs();
            }
        }
    }
    acc
}

pub fn superposition_rank(state: &PureState, tol: f64) -> usize {
    state.coeffs.iter().filter(|c| c.abs() > tol).count()
}

/// Reorders coefficients by flips so the tilde values are non-increasing.
///
/// Returns the reordered state and the permutation (`new[a] = old[perm[a]]`).
/// With unequal scalar products the basis is relabelled along with the state.
pub fn canonical_order(state: &PureState, tol: f64) -> Result<(PureState, Vec<usize>)> {
    let perm = tilde_with_tol(state, tol).order;
    let reordered = state.relabelled(&perm, tol)?;
    Ok((reordered, perm))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaximalSign {
    Plus,
    Minus,
}

impl std::str::FromStr for MaximalSign {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plus" | "+" => Ok(MaximalSign::Plus),
            "minus" | "-" => Ok(MaximalSign::Minus),
            other => Err(Error::BadShape(format!("unknown sign {other:?}"))),
        }
    }
}

/// Interval of `mu` on which the maximal state of the given sign is defined.
pub fn maximal_range(d: usize, sign: MaximalSign) -> Result<Interval> {
    let independent = independence_range(d)?;
    match sign {
        MaximalSign::Plus => Ok(Interval::new(independent.lo, 0.0, false, true)),
        MaximalSign::Minus if d == 2 => Ok(Interval::new(0.0, 1.0, true, false)),
        MaximalSign::Minus => Err(Error::Unsupported(format!("the minus maximal state is only defined for d = 2, got d = {d}"))),
    }
}

/// Checks that `mu` lies in the admissible interval for the maximal state.
/// Closed ends are widened by `tol`.
pub fn check_maximal_range(d: usize, mu: f64, sign: MaximalSign, tol: f64) -> Result<()> {
    let range = maximal_range(d, sign)?;
    let widened = Interval {
        lo: if range.lo_closed { range.lo - tol } else { range.lo },
        hi: if range.hi_closed { range.hi + tol } else { range.hi },
        ..range
    };
    if widened.contains(mu) {
        Ok(())
    } else {
        Err(Error::OutOfRange { mu, interval: range.to_string() })
    }
}

/// The maximal superposition state `Psi_+` (any d) or `Psi_-` (d = 2).
pub fn maximal_state(basis: &Arc<GramBasis>, sign: MaximalSign, tol: f64) -> Result<PureState> {
    let d = basis.dim();
    let mu = basis
        .equal_mu()
        .ok_or_else(|| Error::Unsupported("maximal states need equal scalar products".into()))?;
    check_maximal_range(d, mu, sign, tol)?;
    let coeffs = match sign {
        MaximalSign::Plus => {
            let c = 1.0 / (d as f64 * (1.0 + (d as f64 - 1.0) * mu)).sqrt();
            vec![c; d]
        }
        MaximalSign::Minus => {
            let c = 1.0 / (2.0 * (1.0 - mu)).sqrt();
            vec![c, -c]
        }
    };
    make_state(basis, &coeffs, false, tol.max(1e-12))
}
