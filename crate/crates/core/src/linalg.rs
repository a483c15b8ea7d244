//! Dense symmetric linear algebra: the block rearrangement operator, the
//! nearest Kronecker product factorization, symmetric matrix roots and
//! ordered eigenvalues.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative gap between the two leading singular values below which the
/// leading singular pair is flagged as ambiguous.
pub const GAP_TOLERANCE: f64 = 1e-8;

/// Magnitude of `L(1,1)` below which the factorization is declared degenerate.
pub const SIGN_FIX_TOLERANCE: f64 = 1e-12;

/// A square matrix that is exactly symmetric as stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Symmetrizes `a` as `(a + a')/2`.
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() == 0 {
            return Err(Error::InvalidArgument(format!(
                "expected a nonempty square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
        }
        Ok(SymMatrix(symmetrize(a)))
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix(DMatrix::identity(dim, dim))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// `1e-10 * (1 + max diagonal entry)`.
    pub fn pd_tolerance(&self) -> f64 {
        let max_diag = self.0.diagonal().iter().cloned().fold(0.0_f64, f64::max);
        1e-10 * (1.0 + max_diag)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        eigen_sorted(&self.0).0.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn is_positive_definite(&self) -> bool {
        self.min_eigenvalue() > self.pd_tolerance()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.0.row_iter().map(|r| r.iter().cloned().collect()).collect()
    }
}

pub(crate) fn symmetrize(a: DMatrix<f64>) -> DMatrix<f64> {
    let t = a.transpose();
    (a + t) * 0.5
}

/// Eigenvalues (nonincreasing) and matching eigenvector columns.
fn eigen_sorted(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(a.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Eigenvalues of a symmetric matrix, sorted nonincreasingly.
pub fn ordered_eigenvalues(a: &SymMatrix) -> Vec<f64> {
    eigen_sorted(a.matrix()).0
}

fn spectral_map(a: &SymMatrix, f: impl Fn(f64) -> f64) -> Result<SymMatrix> {
    let tol = a.pd_tolerance();
    let (values, vectors) = eigen_sorted(a.matrix());
    let smallest = *values.last().expect("nonempty");
    if smallest <= tol {
        return Err(Error::Singular { eigenvalue: smallest, tolerance: tol });
    }
    let d = DMatrix::from_diagonal(&DVector::from_iterator(values.len(), values.iter().map(|&v| f(v))));
    Ok(SymMatrix(symmetrize(&vectors * d * vectors.transpose())))
}

/// The unique symmetric positive definite inverse square root.
pub fn sym_inv_sqrt(a: &SymMatrix) -> Result<SymMatrix> {
    spectral_map(a, |v| 1.0 / v.sqrt())
}

/// The unique symmetric positive definite square root.
pub fn sym_sqrt(a: &SymMatrix) -> Result<SymMatrix> {
    spectral_map(a, f64::sqrt)
}

/// Inverse of a symmetric positive definite matrix.
pub fn sym_inv(a: &SymMatrix) -> Result<SymMatrix> {
    spectral_map(a, |v| 1.0 / v)
}

/// Block rearrangement of a `(k*p) x (k*p)` matrix into a `(p*p) x (k*k)`
/// matrix.
///
/// With `A_lj` the `(l, j)` block of size `k x k`, row `j*p + l` of the
/// output is `vec(A_lj)'` (column-stacking `vec`). This maps `G ⊗ H` to the
/// rank-one matrix `vec(G) vec(H)'`.
pub fn rearrange(a: &DMatrix<f64>, p: usize, k: usize) -> Result<DMatrix<f64>> {
    if p == 0 || k == 0 {
        return Err(Error::InvalidArgument("p and k must be positive".into()));
    }
    if a.nrows() != k * p || a.ncols() != k * p {
        return Err(Error::InvalidArgument(format!(
            "rearrangement expects a {0}x{0} matrix for p={1}, k={2}; got {3}x{4}",
            k * p,
            p,
            k,
            a.nrows(),
            a.ncols()
        )));
    }
    let mut out = DMatrix::zeros(p * p, k * k);
    for j in 0..p {
        for l in 0..p {
            let row = j * p + l;
            for c in 0..k {
                for r in 0..k {
                    out[(row, c * k + r)] = a[(l * k + r, j * k + c)];
                }
            }
        }
    }
    Ok(out)
}

/// Column-stacking `vec`.
pub fn vec(a: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(a.as_slice())
}

/// Singular values (nonincreasing) and the leading unit singular vectors of
/// `r`, from the eigendecomposition of the smaller Gram matrix. nalgebra's
/// bidiagonal SVD can return inconsistent vectors for exactly rank-one input,
/// which is the Kronecker case itself.
fn leading_singular_pair(r: &DMatrix<f64>) -> (Vec<f64>, DVector<f64>, DVector<f64>) {
    let wide = r.nrows() <= r.ncols();
    let gram = if wide { r * r.transpose() } else { r.transpose() * r };
    let (values, vectors) = eigen_sorted(&symmetrize(gram));
    let sigma: Vec<f64> = values.iter().map(|&l| l.max(0.0).sqrt()).collect();
    let (mut u, mut v);
    if wide {
        u = vectors.column(0).into_owned();
        v = r.transpose() * &u;
    } else {
        v = vectors.column(0).into_owned();
        u = r * &v;
    }
    // A few alternating power steps restore full accuracy in the vectors.
    for _ in 0..3 {
        let vn = v.norm();
        if vn == 0.0 {
            break;
        }
        v /= vn;
        u = r * &v;
        let un = u.norm();
        if un == 0.0 {
            break;
        }
        u /= un;
        v = r.transpose() * &u;
    }
    let mut sigma = sigma;
    let vn = v.norm();
    if vn > 0.0 {
        v /= vn;
        sigma[0] = vn;
    }
    (sigma, u, v)
}

/// Frobenius-nearest Kronecker product `G ⊗ H`, with `G[0][0] = 1`.
#[derive(Debug, Clone)]
pub struct KpFactorization {
    pub g: SymMatrix,
    pub h: SymMatrix,
    /// `||G ⊗ H - A||_F`.
    pub residual: f64,
    /// Singular values of the rearranged input, nonincreasing.
    pub sigma: Vec<f64>,
    /// Set when the two leading singular values are within `GAP_TOLERANCE`
    /// (relative) of each other.
    pub ambiguous_top_pair: bool,
}

impl KpFactorization {
    pub fn kron(&self) -> DMatrix<f64> {
        self.g.matrix().kronecker(self.h.matrix())
    }
}

fn top_pair_ambiguous(sigma: &[f64]) -> bool {
    sigma.len() > 1 && sigma[0] - sigma[1] < GAP_TOLERANCE * sigma[0]
}

pub fn nearest_kp(a: &SymMatrix, p: usize, k: usize) -> Result<KpFactorization> {
    if a.dim() != k * p {
        return Err(Error::InvalidArgument(format!(
            "matrix of dimension {} cannot be factored as {}x{} ⊗ {}x{}",
            a.dim(),
            p,
            p,
            k,
            k
        )));
    }
    let tol = a.pd_tolerance();
    let min_eig = a.min_eigenvalue();
    if min_eig <= tol {
        return Err(Error::InvalidArgument(format!(
            "nearest Kronecker product requires a positive definite input (minimum eigenvalue {min_eig:e})"
        )));
    }

    let r = rearrange(a.matrix(), p, k)?;
    let (sigma, mut left, mut right) = leading_singular_pair(&r);
    let sigma1 = sigma[0];
    if left[0] < 0.0 {
        left.neg_mut();
        right.neg_mut();
    }
    let l11 = left[0];
    if l11.abs() < SIGN_FIX_TOLERANCE {
        return Err(Error::DegenerateFactorization(format!(
            "leading left singular vector has first component {l11:e}"
        )));
    }

    let g = SymMatrix::new(DMatrix::from_column_slice(p, p, (left / l11).as_slice()))?;
    let h = SymMatrix::new(DMatrix::from_column_slice(k, k, (right * (sigma1 * l11)).as_slice()))?;
    for (name, m) in [("G", &g), ("H", &h)] {
        if !m.is_positive_definite() {
            return Err(Error::DegenerateFactorization(format!(
                "factor {name} is not positive definite (minimum eigenvalue {:e})",
                m.min_eigenvalue()
            )));
        }
    }

    let residual = (g.matrix().kronecker(h.matrix()) - a.matrix()).norm();
    let ambiguous_top_pair = top_pair_ambiguous(&sigma);
    Ok(KpFactorization { g, h, residual, sigma, ambiguous_top_pair })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn sym(a: DMatrix<f64>) -> SymMatrix {
        SymMatrix::new(a).unwrap()
    }

    #[test]
    fn construction_symmetrizes() {
        let s = sym(dmatrix![1.0, 2.0; 4.0, 1.0]);
        assert_eq!(s.matrix()[(0, 1)], 3.0);
        assert_eq!(s.matrix()[(1, 0)], 3.0);
        assert!(SymMatrix::new(DMatrix::zeros(2, 3)).is_err());
        assert!(SymMatrix::new(dmatrix![f64::NAN]).is_err());
    }

    #[test]
    fn exact_three_by_four_product_is_recovered() {
        let g = dmatrix![2.0, 0.5, -0.3; 0.5, 1.5, 0.2; -0.3, 0.2, 0.8];
        let h = dmatrix![
            3.0, 1.0, 0.0, 0.4;
            1.0, 2.0, 0.3, 0.0;
            0.0, 0.3, 1.0, -0.2;
            0.4, 0.0, -0.2, 0.6
        ];
        let a = g.kronecker(&h);
        let kp = nearest_kp(&sym(a.clone()), 3, 4).unwrap();
        assert!((kp.kron() - &a).norm() < 1e-12 * a.norm());
        assert!((kp.sigma[0] - a.norm()).abs() < 1e-12 * a.norm());
        assert!((kp.g.matrix() * 2.0 - &g).amax() < 1e-12);
        assert!(kp.residual < 1e-12 * a.norm());
        assert!(!kp.ambiguous_top_pair);
    }

    #[test]
    fn rearrange_small_kron_by_hand() {
        // G ⊗ H for G=[[1,2],[2,5]], H=[[3,1],[1,4]]; vec(G)=(1,2,2,5), vec(H)=(3,1,1,4).
        let g = dmatrix![1.0, 2.0; 2.0, 5.0];
        let h = dmatrix![3.0, 1.0; 1.0, 4.0];
        let r = rearrange(&g.kronecker(&h), 2, 2).unwrap();
        let expected = dmatrix![
            3.0, 1.0, 1.0, 4.0;
            6.0, 2.0, 2.0, 8.0;
            6.0, 2.0, 2.0, 8.0;
            15.0, 5.0, 5.0, 20.0
        ];
        assert_eq!(r, expected);
    }

    #[test]
    fn rearrange_identity() {
        let r = rearrange(&DMatrix::identity(4, 4), 2, 2).unwrap();
        let v = vec(&DMatrix::identity(2, 2));
        assert_eq!(r, &v * v.transpose());
    }

    #[test]
    fn rearrange_rejects_bad_shape() {
        assert!(matches!(rearrange(&DMatrix::zeros(5, 5), 2, 2), Err(Error::InvalidArgument(_))));
        assert!(rearrange(&DMatrix::zeros(4, 4), 0, 4).is_err());
    }

    #[test]
    fn nearest_kp_recovers_exact_product() {
        let g = dmatrix![1.0, 0.3; 0.3, 2.0];
        let h = dmatrix![2.0, 0.5, 0.1; 0.5, 1.5, -0.2; 0.1, -0.2, 1.0];
        let a = sym(g.kronecker(&h));
        let kp = nearest_kp(&a, 2, 3).unwrap();
        assert!((kp.g.matrix() - &g).amax() < 1e-12);
        assert!((kp.h.matrix() - &h).amax() < 1e-12);
        assert!(kp.residual <= 1e-10 * a.matrix().norm());
        assert!(!kp.ambiguous_top_pair);
        assert_eq!(kp.g.matrix()[(0, 0)], 1.0);
    }

    #[test]
    fn nearest_kp_beats_the_generating_pair_under_perturbation() {
        let g = dmatrix![1.0, 0.4; 0.4, 1.5];
        let h = dmatrix![1.0, 0.2; 0.2, 0.8];
        let e = dmatrix![
            0.01, 0.0, 0.02, -0.01;
            0.0, -0.02, 0.0, 0.01;
            0.02, 0.0, 0.01, 0.0;
            -0.01, 0.01, 0.0, 0.03
        ];
        let a = sym(g.kronecker(&h) + &e);
        let kp = nearest_kp(&a, 2, 2).unwrap();
        assert!(kp.residual <= e.norm());
        let tail: f64 = kp.sigma[1..].iter().map(|s| s * s).sum();
        assert!((kp.residual.powi(2) - tail).abs() <= 1e-8 * tail.max(1e-300));
    }

    #[test]
    fn nearest_kp_rejects_indefinite_and_misshapen_input() {
        let a = sym(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 1.0, -1.0])));
        assert!(matches!(nearest_kp(&a, 2, 2), Err(Error::InvalidArgument(_))));
        assert!(matches!(nearest_kp(&SymMatrix::identity(4), 2, 3), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn gap_rule_flags_near_ties_only() {
        assert!(top_pair_ambiguous(&[3.0, 3.0 - 1e-9, 1.0]));
        assert!(!top_pair_ambiguous(&[3.0, 2.9, 1.0]));
        assert!(!top_pair_ambiguous(&[3.0]));
    }

    #[test]
    fn inverse_root_of_identity_and_diagonal() {
        let i3 = SymMatrix::identity(3);
        assert!((sym_inv_sqrt(&i3).unwrap().matrix() - DMatrix::identity(3, 3)).amax() < 1e-15);
        let b = sym_inv_sqrt(&SymMatrix::from_diagonal(&[4.0, 9.0])).unwrap();
        assert!((b.matrix() - dmatrix![0.5, 0.0; 0.0, 1.0 / 3.0]).amax() < 1e-15);
    }

    #[test]
    fn inverse_root_reports_offending_eigenvalue() {
        match sym_inv_sqrt(&SymMatrix::from_diagonal(&[1.0, 0.0])) {
            Err(Error::Singular { eigenvalue, .. }) => assert_eq!(eigenvalue, 0.0),
            other => panic!("expected singular error, got {other:?}"),
        }
        // Tiny positive eigenvalues are an error too, never clamped.
        assert!(sym_inv_sqrt(&SymMatrix::from_diagonal(&[1.0, 1e-13])).is_err());
    }

    #[test]
    fn eigenvalues_are_sorted() {
        assert_eq!(ordered_eigenvalues(&SymMatrix::from_diagonal(&[1.0, 3.0, 2.0])), vec![3.0, 2.0, 1.0]);
        assert_eq!(ordered_eigenvalues(&SymMatrix::identity(3)), vec![1.0; 3]);
    }
}
