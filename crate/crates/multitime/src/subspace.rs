//! Linear subspaces of R^n with orthonormal bases.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A subspace stored as an n x r matrix with orthonormal columns.
#[derive(Debug, Clone)]
pub struct Subspace {
    basis: DMatrix<f64>,
    sigma_tol: f64,
}

pub(crate) fn symmetric_eigen_sorted(mat: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = mat.symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    (values, vectors)
}

impl Subspace {
    pub fn zero(ambient: usize, sigma_tol: f64) -> Subspace {
        Subspace {
            basis: DMatrix::zeros(ambient, 0),
            sigma_tol,
        }
    }

    pub fn full(ambient: usize, sigma_tol: f64) -> Subspace {
        Subspace {
            basis: DMatrix::identity(ambient, ambient),
            sigma_tol,
        }
    }

    /// Wrap a matrix that is already orthonormal (checked).
    pub fn from_orthonormal(basis: DMatrix<f64>, sigma_tol: f64) -> Result<Subspace> {
        let r = basis.ncols();
        let gram = basis.transpose() * &basis;
        let defect = (&gram - DMatrix::identity(r, r))
            .iter()
            .fold(0.0f64, |m, &v| m.max(v.abs()));
        if defect > 1e-12 {
            return Err(Error::Config(format!(
                "basis is not orthonormal (defect {defect:.3e})"
            )));
        }
        Ok(Subspace { basis, sigma_tol })
    }

    /// Orthonormal basis for the column span of an arbitrary matrix.
    pub fn from_spanning(cols: &DMatrix<f64>, sigma_tol: f64) -> Subspace {
        let ambient = cols.nrows();
        if cols.ncols() == 0 {
            return Subspace::zero(ambient, sigma_tol);
        }
        let (values, vectors) = symmetric_eigen_sorted(cols * cols.transpose());
        let lambda_max = values.first().copied().unwrap_or(0.0).max(0.0);
        if lambda_max == 0.0 {
            return Subspace::zero(ambient, sigma_tol);
        }
        // Eigenvalues of A A^T are squared singular values of A.
        let cut = (sigma_tol * sigma_tol) * lambda_max;
        let keep: Vec<_> = values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > cut)
            .map(|(i, _)| vectors.column(i).into_owned())
            .collect();
        if keep.is_empty() {
            Subspace::zero(ambient, sigma_tol)
        } else {
            Subspace {
                basis: DMatrix::from_columns(&keep),
                sigma_tol,
            }
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn sigma_tol(&self) -> f64 {
        self.sigma_tol
    }

    /// Orthogonal complement via the projector I - B B^T.
    pub fn complement(&self) -> Subspace {
        let n = self.ambient_dim();
        let projector = DMatrix::identity(n, n) - &self.basis * self.basis.transpose();
        let (values, vectors) = symmetric_eigen_sorted(projector);
        let keep: Vec<_> = values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.5)
            .map(|(i, _)| vectors.column(i).into_owned())
            .collect();
        if keep.is_empty() {
            Subspace::zero(n, self.sigma_tol)
        } else {
            Subspace {
                basis: DMatrix::from_columns(&keep),
                sigma_tol: self.sigma_tol,
            }
        }
    }

    /// Projection-residual membership test:
    /// ||x - B B^T x|| <= tol * max(1, ||x||).
    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        let proj = &self.basis * (self.basis.transpose() * x);
        (x - proj).norm() <= tol * x.norm().max(1.0)
    }

    /// Image of the subspace under a linear map, re-orthonormalized.
    pub fn map_through(&self, map: &DMatrix<f64>) -> Subspace {
        Subspace::from_spanning(&(map * &self.basis), self.sigma_tol)
    }
}

/// Intersection of subspaces as the complement of the span of all
/// complements. An empty list yields the full space (vacuous intersection).
pub fn intersect(subspaces: &[Subspace], ambient: usize, sigma_tol: f64) -> Result<Subspace> {
    if subspaces.is_empty() {
        return Ok(Subspace::full(ambient, sigma_tol));
    }
    if subspaces.iter().any(|s| s.ambient_dim() != ambient) {
        return Err(Error::Dimension(
            "subspaces live in different ambient dimensions".into(),
        ));
    }
    let mut cols: Vec<DVector<f64>> = Vec::new();
    for s in subspaces {
        let comp = s.complement();
        for c in comp.basis.column_iter() {
            cols.push(c.into_owned());
        }
    }
    if cols.is_empty() {
        return Ok(Subspace::full(ambient, sigma_tol));
    }
    let stacked = DMatrix::from_columns(&cols);
    // Complement columns are unit vectors; a fixed relative threshold on the
    // stacked Gram spectrum separates span from rounding noise.
    let union = Subspace::from_spanning(&stacked, 1e-8);
    Ok(Subspace {
        sigma_tol,
        ..union.complement()
    })
}

/// Largest principal angle between equal-dimension subspaces; pi/2 when the
/// dimensions differ, 0 when both are trivial.
pub fn largest_principal_angle(a: &Subspace, b: &Subspace) -> f64 {
    if a.dim() != b.dim() {
        return std::f64::consts::FRAC_PI_2;
    }
    if a.dim() == 0 {
        return 0.0;
    }
    let overlap = a.basis.transpose() * &b.basis;
    let svd = overlap.svd(false, false);
    let sigma_min = svd
        .singular_values
        .iter()
        .fold(f64::INFINITY, |m, &v| m.min(v))
        .clamp(-1.0, 1.0);
    sigma_min.acos()
}
