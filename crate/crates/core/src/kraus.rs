//! Plan synthesis: index functions, probabilities, Kraus operators, residual
//! certificate and the explicit free completion for two and three levels.
//!
//! Planning happens in the frame spanned by the source support. Inside that
//! frame both states are sorted by their tilde values; the index functions
//! `f_n` act on sorted positions and are mapped back to basis labels as
//! `g_n = pi_phi . f_n . pi_psi^-1`, so no flip operators are materialised.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::GramBasis;
use crate::conditions::{
    build_omega, check_coc, check_majorization, ConvertibilityReport, Margins, Region,
};
use crate::error::{Error, Result};
use crate::linalg::{max_abs, min_sym_eigenvalue};
use crate::state::{descending_order, l1_of, superposition_rank, tilde_values, PureState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Ge,
    Le,
}

/// The permutations `f_n`, 0-based. `fns[0]` is the identity and every
/// other entry is the transposition `swap_pairs[n - 1]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexFunctionSet {
    pub fns: Vec<Vec<usize>>,
    pub swap_pairs: Vec<(usize, usize)>,
}

impl IndexFunctionSet {
    pub fn from_swaps(d: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut fns = vec![(0..d).collect::<Vec<_>>()];
        for (n, &(a, b)) in pairs.iter().enumerate() {
            if a >= d || b >= d || a == b {
                return Err(Error::BadPermutation(n + 2));
            }
            let mut f: Vec<usize> = (0..d).collect();
            f.swap(a, b);
            fns.push(f);
        }
        Ok(Self { fns, swap_pairs: pairs.to_vec() })
    }

    pub fn dim(&self) -> usize {
        self.fns.first().map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.fns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fns.is_empty()
    }

    /// Every `f_n` must be a bijection on `0..d`; the first must be the identity.
    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        for (n, f) in self.fns.iter().enumerate() {
            let mut seen = vec![false; d];
            if f.len() != d {
                return Err(Error::BadPermutation(n + 1));
            }
            for &v in f {
                if v >= d || seen[v] {
                    return Err(Error::BadPermutation(n + 1));
                }
                seen[v] = true;
            }
        }
        if self.fns.first().is_some_and(|f| f.iter().enumerate().any(|(i, &v)| i != v)) {
            return Err(Error::BadPermutation(1));
        }
        Ok(())
    }
}

/// Index functions together with the sign pattern that selected them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub functions: IndexFunctionSet,
    /// Sign of `psi~_k - phi~_k` for `k = 2..d-1`.
    pub signature: Vec<Sign>,
    /// Row of the two-to-four level table, when one applies.
    pub table_row: Option<u8>,
    pub pattern: String,
}

/// Picks the index functions from the sorted tilde vectors.
pub fn select_index_functions(psi_sorted: &[f64], phi_sorted: &[f64], tol: f64) -> Result<Selection> {
    let d = psi_sorted.len();
    if phi_sorted.len() != d {
        return Err(Error::BadShape(format!("tilde vectors of length {d} and {}", phi_sorted.len())));
    }
    let signature: Vec<Sign> = (1..d.saturating_sub(1))
        .map(|k| if psi_sorted[k] >= phi_sorted[k] - tol { Sign::Ge } else { Sign::Le })
        .collect();
    let ge = |k: usize| signature[k - 1] == Sign::Ge;

    let (pairs, table_row, pattern): (Vec<(usize, usize)>, Option<u8>, &str) = match d {
        0 => return Err(Error::BadDimension(0)),
        1 => (vec![], None, "trivial"),
        2 => (vec![(0, 1)], Some(1), "qubit"),
        3 if ge(1) => (vec![(0, 2), (0, 1)], Some(2), "all_ge"),
        3 => (vec![(0, 2), (1, 2)], Some(3), "all_le"),
        4 => match (ge(1), ge(2)) {
            (true, true) => (vec![(0, 3), (0, 1), (0, 2)], Some(4), "all_ge"),
            (true, false) => (vec![(0, 3), (0, 1), (2, 3)], Some(5), "ge_le"),
            (false, false) => (vec![(0, 3), (1, 3), (2, 3)], Some(6), "all_le"),
            (false, true) => {
                if phi_sorted[1] + phi_sorted[2] >= psi_sorted[1] + psi_sorted[2] - tol {
                    (vec![(0, 3), (1, 3), (1, 2)], Some(7), "le_ge")
                } else {
                    (vec![(0, 3), (0, 2), (1, 2)], Some(8), "le_ge")
                }
            }
        },
        _ => {
            if signature.iter().all(|s| *s == Sign::Ge) {
                ((1..d).map(|k| (0, k)).collect(), None, "all_ge")
            } else if signature.iter().all(|s| *s == Sign::Le) {
                ((0..d - 1).map(|k| (k, d - 1)).collect(), None, "all_le")
            } else {
                let sig: Vec<&str> = signature.iter().map(|s| if *s == Sign::Ge { "ge" } else { "le" }).collect();
                return Err(Error::UnsupportedCase(format!(
                    "d = {d} with mixed sign pattern [{}]; only all-ge and all-le patterns are tabulated",
                    sig.join(", ")
                )));
            }
        }
    };
    Ok(Selection {
        functions: IndexFunctionSet::from_swaps(d, &pairs)?,
        signature,
        table_row,
        pattern: pattern.to_string(),
    })
}

/// Solves `sum_n p_n phi~_{f_n(k)} = psi~_k` on sorted tilde vectors.
///
/// Singular systems fall back to a least-squares solution that must reproduce
/// the right-hand side within `tol`.
pub fn solve_probabilities(psi_sorted: &[f64], phi_sorted: &[f64], fns: &IndexFunctionSet, tol: f64) -> Result<Vec<f64>> {
    let d = psi_sorted.len();
    if phi_sorted.len() != d || fns.dim() != d || fns.len() != d {
        return Err(Error::BadShape("probability system is not square".into()));
    }
    fns.validate()?;
    let a = DMatrix::from_fn(d, d, |k, n| phi_sorted[fns.fns[n][k]]);
    let b = DVector::from_column_slice(psi_sorted);

    let residual = |p: &DVector<f64>| (&a * p - &b).amax();
    let direct = a.clone().lu().solve(&b).filter(|p| p.iter().all(|v| v.is_finite()) && residual(p) <= tol);
    let p = match direct {
        Some(p) => p,
        None => {
            let p = a
                .clone()
                .svd(true, true)
                .solve(&b, 1e-12)
                .map_err(|_| Error::Degenerate(f64::INFINITY))?;
            let r = residual(&p);
            if r > tol {
                return Err(Error::Degenerate(r));
            }
            p
        }
    };
    let probs: Vec<f64> = p.iter().copied().collect();
    let min = probs.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -tol {
        return Err(Error::Infeasible { probs, min });
    }
    Ok(probs)
}

/// Residual `R = I - sum K^T K` with its smallest eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualCertificate {
    pub residual: DMatrix<f64>,
    pub psd: bool,
    pub min_eigenvalue: f64,
}

pub fn residual_certificate(kraus_ops: &[DMatrix<f64>], tol: f64) -> Result<ResidualCertificate> {
    let d = kraus_ops.first().map_or(0, |k| k.nrows());
    if kraus_ops.iter().any(|k| k.nrows() != d || k.ncols() != d) {
        return Err(Error::BadShape("Kraus operators differ in shape".into()));
    }
    let mut residual = DMatrix::identity(d, d);
    for k in kraus_ops {
        residual -= k.transpose() * k;
    }
    residual = (&residual + residual.transpose()) * 0.5;
    let min_eigenvalue = if d == 0 { 0.0 } else { min_sym_eigenvalue(&residual) };
    Ok(ResidualCertificate { psd: min_eigenvalue >= -tol, residual, min_eigenvalue })
}

/// `X_j` (diagonal) and `Y_jl` (off-diagonal) entries of the residual in the
/// sorted source frame, for `j, l = 2..d` (1-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppendixBQuantities {
    pub x: Vec<f64>,
    pub y: Vec<(usize, usize, f64)>,
}

impl AppendixBQuantities {
    pub fn min_x(&self) -> f64 {
        self.x.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// A completion operator `F_m = |c_target> (sum_k w_k <c_k^perp| / zeta_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeOperator {
    /// 1-based operator label, `d + 1 ..= 2d`.
    pub index: usize,
    /// Basis label (0-based, original labels) that every input is sent to.
    pub target: usize,
    pub matrix: DMatrix<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RefusalReason {
    Majorization { margin: f64 },
    Infeasible { min_probability: f64 },
    Degenerate { residual: f64 },
    Coc { margin: f64 },
    L1Increase { margin: f64 },
    ResidualNotPsd { min_eigenvalue: f64 },
    Incomplete { deviation: f64 },
}

impl std::fmt::Display for RefusalReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RefusalReason::Majorization { margin } => write!(f, "majorization fails (margin {margin:e})"),
            RefusalReason::Infeasible { min_probability } => write!(f, "negative probability {min_probability:e}"),
            RefusalReason::Degenerate { residual } => write!(f, "singular probability system (residual {residual:e})"),
            RefusalReason::Coc { margin } => write!(f, "completeness condition fails (margin {margin:e})"),
            RefusalReason::L1Increase { margin } => write!(f, "l1 norm would increase (margin {margin:e})"),
            RefusalReason::ResidualNotPsd { min_eigenvalue } => {
                write!(f, "residual I - sum K^T K is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")
            }
            RefusalReason::Incomplete { deviation } => write!(f, "completion mismatch {deviation:e}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TransformPlan {
    /// Dimension of the full basis.
    pub dim: usize,
    /// Original labels spanned by the source, ascending. Operators act on this sub-basis.
    pub support: Vec<usize>,
    /// Embedding of the support sub-basis; columns are the vectors `c_i`.
    pub embedding: DMatrix<f64>,
    /// Sorted-frame index functions.
    pub index_functions: IndexFunctionSet,
    pub case_signature: Vec<Sign>,
    pub table_row: Option<u8>,
    pub pattern: String,
    /// Original labels of the source in descending tilde order.
    pub source_order: Vec<usize>,
    /// Original labels of the target in descending tilde order.
    pub target_order: Vec<usize>,
    /// `label_maps[n][a]`: position in `support` that `K_n` sends position `a` to.
    pub label_maps: Vec<Vec<usize>>,
    pub probs: Vec<f64>,
    pub kraus_ops: Vec<DMatrix<f64>>,
    pub residual: DMatrix<f64>,
    pub residual_min_eig: f64,
    pub appendix_b: Option<AppendixBQuantities>,
    /// Explicit free completion; `Some(vec![])` when the residual already vanishes.
    pub completion: Option<Vec<FreeOperator>>,
    pub report: ConvertibilityReport,
}

#[derive(Debug, Clone)]
pub enum PlanOutcome {
    Planned(Box<TransformPlan>),
    Refused { report: ConvertibilityReport, reason: RefusalReason },
}

impl PlanOutcome {
    pub fn plan(&self) -> Option<&TransformPlan> {
        match self {
            PlanOutcome::Planned(p) => Some(p),
            PlanOutcome::Refused { .. } => None,
        }
    }

    pub fn report(&self) -> &ConvertibilityReport {
        match self {
            PlanOutcome::Planned(p) => &p.report,
            PlanOutcome::Refused { report, .. } => report,
        }
    }
}

/// Both states restricted to the source support and sorted by tilde value.
#[derive(Debug, Clone)]
pub(crate) struct Frame {
    pub dim: usize,
    pub support: Vec<usize>,
    pub basis: GramBasis,
    pub psi_order: Vec<usize>,
    pub phi_order: Vec<usize>,
    /// Sorted tilde values.
    pub pt: Vec<f64>,
    pub ft: Vec<f64>,
    /// Coefficients in sorted order.
    pub ps: Vec<f64>,
    pub fs: Vec<f64>,
}

impl Frame {
    pub fn new(psi: &PureState, phi: &PureState, tol: f64) -> Result<Frame> {
        if !psi.shares_basis(phi) {
            return Err(Error::BasisMismatch);
        }
        let source = superposition_rank(psi, tol);
        let target = superposition_rank(phi, tol);
        if target > source {
            return Err(Error::RankIncrease { source_rank: source, target_rank: target });
        }
        let dim = psi.dim();
        let support: Vec<usize> = (0..dim).filter(|&i| psi.coeffs()[i].abs() > tol).collect();
        if (0..dim).any(|i| phi.coeffs()[i].abs() > tol && !support.contains(&i)) {
            return Err(Error::SupportMismatch);
        }
        let basis = if support.len() == dim { psi.basis().as_ref().clone() } else { psi.basis().restrict(&support, tol)? };
        let sub_psi: Vec<f64> = support.iter().map(|&i| psi.coeffs()[i]).collect();
        let sub_phi: Vec<f64> = support.iter().map(|&i| phi.coeffs()[i]).collect();
        let psi_tilde = tilde_values(&basis, &sub_psi);
        let phi_tilde = tilde_values(&basis, &sub_phi);
        let psi_order = descending_order(&psi_tilde, tol);
        let phi_order = descending_order(&phi_tilde, tol);
        Ok(Frame {
            dim,
            pt: psi_order.iter().map(|&i| psi_tilde[i]).collect(),
            ft: phi_order.iter().map(|&i| phi_tilde[i]).collect(),
            ps: psi_order.iter().map(|&i| sub_psi[i]).collect(),
            fs: phi_order.iter().map(|&i| sub_phi[i]).collect(),
            support,
            basis,
            psi_order,
            phi_order,
        })
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }
}

/// Kraus operators with the coefficient-space data they were built from.
#[derive(Debug, Clone)]
pub(crate) struct Synthesis {
    /// `c[n][k]` in sorted source positions.
    pub c: Vec<Vec<f64>>,
    /// `label_maps[n][a]` in frame labels.
    pub label_maps: Vec<Vec<usize>>,
    pub kraus_ops: Vec<DMatrix<f64>>,
    pub embedding_inverse: DMatrix<f64>,
    pub certificate: ResidualCertificate,
}

fn synthesize(frame: &Frame, fns: &IndexFunctionSet, probs: &[f64], tol: f64) -> Result<Synthesis> {
    let m = frame.len();
    let b = frame.basis.embedding();
    let b_inv = b.clone().try_inverse().ok_or(Error::NotPositiveDefinite { min_eigenvalue: 0.0 })?;
    let mut c = Vec::with_capacity(m);
    let mut label_maps = Vec::with_capacity(m);
    let mut kraus_ops = Vec::with_capacity(m);
    for (n, f) in fns.fns.iter().enumerate() {
        let amp = probs[n].max(0.0).sqrt();
        let mut coeff = DMatrix::zeros(m, m);
        let mut cn = vec![0.0; m];
        let mut g = vec![0; m];
        for k in 0..m {
            if frame.ps[k].abs() <= tol {
                return Err(Error::DivisionByZero(frame.support[frame.psi_order[k]]));
            }
            let src = frame.psi_order[k];
            let dst = frame.phi_order[f[k]];
            cn[k] = amp * frame.fs[f[k]] / frame.ps[k];
            coeff[(dst, src)] = cn[k];
            g[src] = dst;
        }
        kraus_ops.push(b * coeff * &b_inv);
        c.push(cn);
        label_maps.push(g);
    }
    let certificate = residual_certificate(&kraus_ops, tol)?;
    Ok(Synthesis { c, label_maps, kraus_ops, embedding_inverse: b_inv, certificate })
}

/// Residual entries in the sorted source frame, computed from the
/// completeness equations, and the diagonal from `F psi = 0`.
fn appendix_b(frame: &Frame, synthesis: &Synthesis) -> (AppendixBQuantities, DMatrix<f64>) {
    let m = frame.len();
    let g = frame.basis.gram();
    let o = &frame.psi_order;
    let mut q = DMatrix::zeros(m, m);
    for j in 0..m {
        for l in 0..m {
            if j == l {
                continue;
            }
            let mut v = g[(o[j], o[l])];
            for (n, cn) in synthesis.c.iter().enumerate() {
                let map = &synthesis.label_maps[n];
                v -= cn[j] * cn[l] * g[(map[o[j]], map[o[l]])];
            }
            q[(j, l)] = v;
        }
    }
    for j in 0..m {
        let s: f64 = (0..m).filter(|&l| l != j).map(|l| frame.ps[l] * q[(l, j)]).sum();
        q[(j, j)] = -s / frame.ps[j];
    }
    let x = (1..m).map(|j| q[(j, j)]).collect();
    let mut y = Vec::new();
    for j in 1..m {
        for l in j + 1..m {
            y.push((j + 1, l + 1, q[(j, l)]));
        }
    }
    (AppendixBQuantities { x, y }, q)
}

/// Pivoted Cholesky of a small symmetric PSD matrix. Columns are returned
/// with a negative pivot entry.
fn pivoted_cholesky(s: &DMatrix<f64>, floor: f64) -> Vec<DVector<f64>> {
    let n = s.nrows();
    let mut a = s.clone();
    let mut cols = Vec::new();
    let mut used = vec![false; n];
    for _ in 0..n {
        let pivot = (0..n).filter(|&i| !used[i]).max_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
        let Some(p) = pivot else { break };
        if a[(p, p)] <= floor {
            break;
        }
        used[p] = true;
        let root = a[(p, p)].sqrt();
        let mut col = a.column(p) / root;
        for i in 0..n {
            if used[i] && i != p {
                col[i] = 0.0;
            }
        }
        a -= &col * col.transpose();
        cols.push(-col);
    }
    cols
}

fn complete(frame: &Frame, synthesis: &Synthesis, q: &DMatrix<f64>, tol: f64) -> Result<Vec<FreeOperator>> {
    let m = frame.len();
    if m < 2 {
        return Ok(Vec::new());
    }
    let block = q.view((1, 1), (m - 1, m - 1)).into_owned();
    let block = (&block + block.transpose()) * 0.5;
    if max_abs(&block) <= tol * tol {
        return Ok(Vec::new());
    }
    let b = frame.basis.embedding();
    let cols = pivoted_cholesky(&block, tol * tol);

    let mut total: DMatrix<f64> = synthesis.kraus_ops.iter().map(|k| k.transpose() * k).sum();
    let mut ops = Vec::with_capacity(m);
    for slot in 0..m {
        let target = frame.psi_order[slot];
        let matrix = match cols.get(slot) {
            Some(col) => {
                let mut w = vec![0.0; m];
                let mut lead = 0.0;
                for l in 1..m {
                    w[frame.psi_order[l]] = col[l - 1];
                    lead += frame.ps[l] * col[l - 1];
                }
                w[frame.psi_order[0]] = -lead / frame.ps[0];
                let row = DVector::from_vec(w).transpose() * &synthesis.embedding_inverse;
                b.column(target) * row
            }
            None => DMatrix::zeros(m, m),
        };
        total += matrix.transpose() * &matrix;
        ops.push(FreeOperator { index: m + slot + 1, target: frame.support[target], matrix });
    }
    let deviation = max_abs(&(total - DMatrix::identity(m, m)));
    if deviation > tol {
        return Err(Error::Incomplete(deviation));
    }
    Ok(ops)
}

/// Everything the planner and the region classifier derive from a pair.
#[derive(Debug, Clone)]
pub(crate) struct Analysis {
    pub frame: Frame,
    pub selection: Selection,
    pub probs: Result<Vec<f64>>,
    pub synthesis: Option<Synthesis>,
    pub report: ConvertibilityReport,
}

pub(crate) fn analyse(psi: &PureState, phi: &PureState, tol: f64) -> Result<Analysis> {
    let frame = Frame::new(psi, phi, tol)?;
    let (majorization, maj_slack) = check_majorization(&frame.pt, &frame.ft, tol)?;
    let maj_margin = maj_slack.iter().copied().fold(0.0_f64, f64::min);
    let selection = select_index_functions(&frame.pt, &frame.ft, tol)?;
    let probs = solve_probabilities(&frame.pt, &frame.ft, &selection.functions, tol);

    let (coc, coc_margin, synthesis) = match &probs {
        Ok(p) => {
            let omega = build_omega(&frame.fs, &selection.functions)?;
            let (coc, slack) = check_coc(&frame.ps, p, &omega, tol)?;
            let margin = slack.iter().copied().fold(0.0_f64, f64::min);
            (coc, margin, Some(synthesize(&frame, &selection.functions, p, tol)?))
        }
        Err(Error::Infeasible { min, .. }) => (false, *min, None),
        Err(Error::Degenerate(r)) => (false, -r, None),
        Err(e) => return Err(e.clone()),
    };
    let l1_margin = l1_of(psi.coeffs()) - l1_of(phi.coeffs());
    let l1_monotone = l1_margin >= -tol;
    let report = ConvertibilityReport {
        majorization,
        coc,
        l1_monotone,
        region: Region::from_triple(majorization, coc, l1_monotone),
        margins: Margins { majorization: maj_margin, coc: coc_margin, l1: l1_margin },
        residual_psd: synthesis.as_ref().map(|s| s.certificate.psd),
        probabilities: probs.as_ref().ok().cloned(),
    };
    Ok(Analysis { frame, selection, probs, synthesis, report })
}

/// The `X_j`, `Y_jl` quantities for a two- or three-level pair with feasible probabilities.
pub fn appendix_b_quantities(psi: &PureState, phi: &PureState, tol: f64) -> Result<AppendixBQuantities> {
    let an = analyse(psi, phi, tol)?;
    let m = an.frame.len();
    if !(2..=3).contains(&m) {
        return Err(Error::UnsupportedDimension(m));
    }
    let synthesis = match (&an.probs, &an.synthesis) {
        (Ok(_), Some(s)) => s,
        (Err(e), _) => return Err(e.clone()),
        _ => unreachable!("feasible probabilities always carry a synthesis"),
    };
    Ok(appendix_b(&an.frame, synthesis).0)
}

/// Builds the deterministic plan, or explains why none is produced.
pub fn plan(psi: &PureState, phi: &PureState, tol: f64) -> Result<PlanOutcome> {
    let an = analyse(psi, phi, tol)?;
    let report = an.report.clone();
    let refuse = |reason| Ok(PlanOutcome::Refused { report: report.clone(), reason });

    if !report.majorization {
        return refuse(RefusalReason::Majorization { margin: report.margins.majorization });
    }
    let probs = match an.probs {
        Ok(p) => p,
        Err(Error::Infeasible { min, .. }) => return refuse(RefusalReason::Infeasible { min_probability: min }),
        Err(Error::Degenerate(r)) => return refuse(RefusalReason::Degenerate { residual: r }),
        Err(e) => return Err(e),
    };
    if !report.coc {
        return refuse(RefusalReason::Coc { margin: report.margins.coc });
    }
    if !report.l1_monotone {
        return refuse(RefusalReason::L1Increase { margin: report.margins.l1 });
    }
    let synthesis = an.synthesis.expect("feasible probabilities always carry a synthesis");
    if !synthesis.certificate.psd {
        return refuse(RefusalReason::ResidualNotPsd { min_eigenvalue: synthesis.certificate.min_eigenvalue });
    }

    let frame = &an.frame;
    let m = frame.len();
    let (appendix, completion) = if (2..=3).contains(&m) {
        let (quantities, q) = appendix_b(frame, &synthesis);
        match complete(frame, &synthesis, &q, tol) {
            Ok(ops) => (Some(quantities), Some(ops)),
            Err(Error::Incomplete(deviation)) => return refuse(RefusalReason::Incomplete { deviation }),
            Err(e) => return Err(e),
        }
    } else if m == 1 {
        (None, Some(Vec::new()))
    } else {
        (None, None)
    };

    let labels = |order: &[usize]| order.iter().map(|&i| frame.support[i]).collect::<Vec<_>>();
    Ok(PlanOutcome::Planned(Box::new(TransformPlan {
        dim: frame.dim,
        support: frame.support.clone(),
        embedding: frame.basis.embedding().clone(),
        index_functions: an.selection.functions,
        case_signature: an.selection.signature,
        table_row: an.selection.table_row,
        pattern: an.selection.pattern,
        source_order: labels(&frame.psi_order),
        target_order: labels(&frame.phi_order),
        label_maps: synthesis.label_maps,
        probs,
        kraus_ops: synthesis.kraus_ops,
        residual_min_eig: synthesis.certificate.min_eigenvalue,
        residual: synthesis.certificate.residual,
        appendix_b: appendix,
        completion,
        report,
    })))
}
