//! Non-orthogonal basis: Gram matrix, independence gate, embedding and dual basis.
//!
//! A [`GramBasis`] fixes a concrete realisation of the abstract basis
//! `{|c_i>}`. The embedding is the upper Cholesky factor `U` of `G = U^T U`;
//! its columns are the vectors `c_i`. The dual vectors `c_k^perp` are the
//! normalized columns of `U G^{-1}`, so that `<c_k^perp|c_j> = zeta_k delta_kj`.
//! Everything downstream (Kraus operators, residuals) is expressed in this
//! embedding. Only representation-independent quantities are meaningful.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::linalg::{is_symmetric, min_sym_eigenvalue};

/// Scalar products as given by the user: one shared value or a full matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MuSpec {
    Equal(f64),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramBasis {
    gram: DMatrix<f64>,
    embedding: DMatrix<f64>,
    dual: DMatrix<f64>,
    zeta: Vec<f64>,
    equal_mu: Option<f64>,
}

impl GramBasis {
    /// Validates `gram` and derives the embedding and dual basis.
    ///
    /// A 1x1 Gram matrix is accepted so that rank-one supports can be planned.
    pub fn from_gram(gram: DMatrix<f64>, tol: f64) -> Result<Self> {
        let d = gram.nrows();
        if d == 0 {
            return Err(Error::BadDimension(d));
        }
        if !gram.is_square() {
            return Err(Error::BadShape(format!("Gram matrix is {}x{}", gram.nrows(), gram.ncols())));
        }
        if gram.iter().any(|v| !v.is_finite()) {
            return Err(Error::BadShape("non-finite scalar product".into()));
        }
        if !is_symmetric(&gram, tol) {
            return Err(Error::BadShape("scalar products are not symmetric".into()));
        }
        for i in 0..d {
            if (gram[(i, i)] - 1.0).abs() > tol {
                return Err(Error::BadShape(format!("diagonal entry {} is {}, expected 1", i + 1, gram[(i, i)])));
            }
        }

        let min_eigenvalue = min_sym_eigenvalue(&gram);
        if min_eigenvalue <= tol {
            return Err(Error::NotPositiveDefinite { min_eigenvalue });
        }
        let chol = gram
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite { min_eigenvalue })?;
        let embedding = chol.l().transpose();
        let gram_inv = chol.inverse();
        let unnormalized = &embedding * gram_inv;

        let mut dual = DMatrix::zeros(d, d);
        let mut zeta = Vec::with_capacity(d);
        for k in 0..d {
            let col = unnormalized.column(k);
            let norm = col.norm();
            dual.set_column(k, &(col / norm));
            // <c_k^perp|c_k> = (u_k . c_k) / |u_k| = 1 / |u_k|
            zeta.push(1.0 / norm);
        }

        let equal_mu = equal_off_diagonal(&gram, tol);
        Ok(Self { gram, embedding, dual, zeta, equal_mu })
    }

    pub fn dim(&self) -> usize {
        self.gram.nrows()
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn mu(&self, i: usize, j: usize) -> f64 {
        self.gram[(i, j)]
    }

    /// Columns are the embedded basis vectors `c_i`.
    pub fn embedding(&self) -> &DMatrix<f64> {
        &self.embedding
    }

    /// Columns are the unit-norm dual vectors `c_k^perp`.
    pub fn dual(&self) -> &DMatrix<f64> {
        &self.dual
    }

    pub fn zeta(&self) -> &[f64] {
        &self.zeta
    }

    /// The shared off-diagonal scalar product, when all of them agree.
    pub fn equal_mu(&self) -> Option<f64> {
        self.equal_mu
    }

    pub fn basis_vector(&self, i: usize) -> DVector<f64> {
        self.embedding.column(i).into_owned()
    }

    /// `c_k^perp / zeta_k`, the row functional picking out coefficient `k`.
    pub fn scaled_dual(&self, k: usize) -> DVector<f64> {
        self.dual.column(k) / self.zeta[k]
    }

    /// Embeds a coefficient vector: `sum_i x_i c_i`.
    pub fn embed(&self, coeffs: &[f64]) -> DVector<f64> {
        &self.embedding * DVector::from_column_slice(coeffs)
    }

    /// The basis obtained by keeping only `indices` (in the given order).
    pub fn restrict(&self, indices: &[usize], tol: f64) -> Result<GramBasis> {
        let sub = DMatrix::from_fn(indices.len(), indices.len(), |a, b| self.gram[(indices[a], indices[b])]);
        GramBasis::from_gram(sub, tol)
    }

    /// Relabels the basis so that new index `a` is old index `perm[a]`.
    pub fn permuted(&self, perm: &[usize], tol: f64) -> Result<GramBasis> {
        if self.equal_mu.is_some() {
            return Ok(self.clone());
        }
        self.restrict(perm, tol)
    }
}

fn equal_off_diagonal(gram: &DMatrix<f64>, tol: f64) -> Option<f64> {
    let d = gram.nrows();
    if d < 2 {
        return None;
    }
    let mu = gram[(0, 1)];
    for i in 0..d {
        for j in 0..d {
            if i != j && (gram[(i, j)] - mu).abs() > tol {
                return None;
            }
        }
    }
    Some(mu)
}

/// Builds the Gram matrix described by `mu` for dimension `d`.
pub fn gram_matrix(d: usize, mu: &MuSpec) -> Result<DMatrix<f64>> {
    if d < 2 {
        return Err(Error::BadDimension(d));
    }
    match mu {
        MuSpec::Equal(m) => {
            if !m.is_finite() || m.abs() >= 1.0 {
                return Err(Error::BadShape(format!("|mu| must be < 1, got {m}")));
            }
            Ok(DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { *m }))
        }
        MuSpec::Matrix(rows) => {
            if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                return Err(Error::BadShape(format!("mu must be {d}x{d}")));
            }
            for (i, row) in rows.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    if i != j && (!v.is_finite() || v.abs() >= 1.0) {
                        return Err(Error::BadShape(format!("|mu_{}{}| must be < 1, got {v}", i + 1, j + 1)));
                    }
                }
            }
            Ok(DMatrix::from_fn(d, d, |i, j| if i == j && rows[i][j] == 0.0 { 1.0 } else { rows[i][j] }))
        }
    }
}

/// Constructs and validates a basis from its scalar products.
///
/// A zero diagonal in a matrix `mu` is read as the implied unit diagonal.
/// The independence gate rejects any Gram matrix whose smallest eigenvalue
/// is at most `tol`.
pub fn build_basis(d: usize, mu: &MuSpec, tol: f64) -> Result<GramBasis> {
    GramBasis::from_gram(gram_matrix(d, mu)?, tol)
}

/// Admissible open interval `(1/(1-d), 1)` for equal scalar products.
pub fn independence_range(d: usize) -> Result<Interval> {
    if d < 2 {
        return Err(Error::BadDimension(d));
    }
    Ok(Interval::open(1.0 / (1.0 - d as f64), 1.0))
}

pub fn det_gram(basis: &GramBasis) -> f64 {
    basis.gram.determinant()
}

/// Metric inner product `sum_ij G_ij x_i y_j`.
pub fn gram_inner(basis: &GramBasis, x: &[f64], y: &[f64]) -> Result<f64> {
    let d = basis.dim();
    if x.len() != d || y.len() != d {
        return Err(Error::BadShape(format!("expected vectors of length {d}, got {} and {}", x.len(), y.len())));
    }
    Ok(x.iter().enumerate().flat_map(|(i, xi)| y.iter().enumerate().map(move |(j, yj)| basis.gram[(i, j)] * xi * yj)).sum())
}

/// Gram diagnostics emitted by the `gram` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramDiagnostics {
    pub d: usize,
    pub det: f64,
    pub min_eigenvalue: f64,
    /// Admissible equal-mu range; absent for a full matrix.
    pub range: Option<[f64; 2]>,
    pub ok: bool,
}

pub fn gram_diagnostics(d: usize, mu: &MuSpec, tol: f64) -> Result<GramDiagnostics> {
    let gram = gram_matrix(d, mu)?;
    let det = gram.determinant();
    let min_eigenvalue = min_sym_eigenvalue(&gram);
    let range = match mu {
        MuSpec::Equal(_) => {
            let r = independence_range(d)?;
            Some([r.lo, r.hi])
        }
        MuSpec::Matrix(_) => None,
    };
    let ok = match GramBasis::from_gram(gram, tol) {
        Ok(_) => true,
        Err(Error::NotPositiveDefinite { .. }) => false,
        Err(e) => return Err(e),
    };
    Ok(GramDiagnostics { d, det, min_eigenvalue, range, ok })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use approx::assert_abs_diff_eq;

    const TOL: f64 = 1e-9;

    fn det3(m12: f64, m13: f64, m23: f64) -> f64 {
        1.0 - m12 * m12 - m13 * m13 - m23 * m23 + 2.0 * m12 * m13 * m23
    }

    #[test]
    fn accepts_d3_mu_0_9() {
        let b = build_basis(3, &MuSpec::Equal(0.9), TOL).unwrap();
        assert_abs_diff_eq!(det_gram(&b), 0.028, epsilon = 1e-12);
        assert_abs_diff_eq!(det_gram(&b), det3(0.9, 0.9, 0.9), epsilon = 1e-12);
    }

    #[test]
    fn rejects_d3_mu_minus_half() {
        let err = build_basis(3, &MuSpec::Equal(-0.5), TOL).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { .. }));
    }

    #[test]
    fn orthonormal_limit_is_identity() {
        let b = build_basis(2, &MuSpec::Equal(0.0), TOL).unwrap();
        let id = DMatrix::<f64>::identity(2, 2);
        assert_abs_diff_eq!(max_abs(&(b.embedding() - &id)), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(max_abs(&(b.dual() - &id)), 0.0, epsilon = 1e-15);
        assert_eq!(b.zeta(), &[1.0, 1.0]);
    }

    #[test]
    fn ranges() {
        assert_eq!(independence_range(2).unwrap(), Interval::open(-1.0, 1.0));
        assert_eq!(independence_range(3).unwrap(), Interval::open(-0.5, 1.0));
        assert_abs_diff_eq!(independence_range(11).unwrap().lo, -0.1, epsilon = 1e-15);
        assert_eq!(independence_range(1), Err(Error::BadDimension(1)));
    }

    #[test]
    fn determinants() {
        let b = build_basis(3, &MuSpec::Equal(0.0), TOL).unwrap();
        assert_abs_diff_eq!(det_gram(&b), 1.0, epsilon = 1e-15);
        let b = build_basis(3, &MuSpec::Equal(0.5), TOL).unwrap();
        assert_abs_diff_eq!(det_gram(&b), 0.5, epsilon = 1e-14);
        let b = build_basis(2, &MuSpec::Equal(0.6), TOL).unwrap();
        assert_abs_diff_eq!(det_gram(&b), 0.64, epsilon = 1e-14);
    }

    #[test]
    fn det_matches_formula_for_unequal_mu() {
        let mu = MuSpec::Matrix(vec![vec![1.0, 0.2, -0.3], vec![0.2, 1.0, 0.4], vec![-0.3, 0.4, 1.0]]);
        let b = build_basis(3, &mu, TOL).unwrap();
        assert_abs_diff_eq!(det_gram(&b), det3(0.2, -0.3, 0.4), epsilon = 1e-14);
        assert_eq!(b.equal_mu(), None);
    }

    #[test]
    fn inner_products() {
        let b = build_basis(2, &MuSpec::Equal(0.0), TOL).unwrap();
        assert_abs_diff_eq!(gram_inner(&b, &[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);

        let b = build_basis(2, &MuSpec::Equal(0.5), TOL).unwrap();
        let s = 7f64.sqrt();
        let x = [3.0 / s, -1.0 / s];
        assert_abs_diff_eq!(gram_inner(&b, &x, &x).unwrap(), 1.0, epsilon = 1e-14);

        let b = build_basis(3, &MuSpec::Equal(-9.0 / 19.0), TOL).unwrap();
        let x = [5.0 / 3.0, 4.0 / 3.0, 2.0 / 3.0];
        assert_abs_diff_eq!(gram_inner(&b, &x, &x).unwrap(), 1.0, epsilon = 1e-12);

        assert!(matches!(gram_inner(&b, &[1.0], &x), Err(Error::BadShape(_))));
    }

    #[test]
    fn shape_errors() {
        assert!(matches!(
            build_basis(2, &MuSpec::Matrix(vec![vec![1.0, 0.2], vec![0.3, 1.0]]), TOL),
            Err(Error::BadShape(_))
        ));
        assert!(matches!(build_basis(3, &MuSpec::Matrix(vec![vec![1.0, 0.2], vec![0.2, 1.0]]), TOL), Err(Error::BadShape(_))));
        assert!(matches!(build_basis(2, &MuSpec::Equal(1.0), TOL), Err(Error::BadShape(_))));
        assert_eq!(build_basis(1, &MuSpec::Equal(0.0), TOL), Err(Error::BadDimension(1)));
    }

    #[test]
    fn dual_is_biorthogonal() {
        let mu = MuSpec::Matrix(vec![vec![1.0, 0.2, -0.3], vec![0.2, 1.0, 0.4], vec![-0.3, 0.4, 1.0]]);
        let b = build_basis(3, &mu, TOL).unwrap();
        let overlap = b.dual().transpose() * b.embedding();
        for i in 0..3 {
            for j in 0..3 {
                if i == j {
                    assert_abs_diff_eq!(overlap[(i, i)], b.zeta()[i], epsilon = 1e-12);
                } else {
                    assert_abs_diff_eq!(overlap[(i, j)], 0.0, epsilon = 1e-12);
                }
            }
            assert_abs_diff_eq!(b.dual().column(i).norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn diagnostics_flag_rejection() {
        let diag = gram_diagnostics(3, &MuSpec::Equal(-0.5), TOL).unwrap();
        assert!(!diag.ok);
        assert_abs_diff_eq!(diag.det, 0.0, epsilon = 1e-12);
        assert_eq!(diag.range, Some([-0.5, 1.0]));
    }
}
