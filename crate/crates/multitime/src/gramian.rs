//! Curve gramians, their image subspaces and the Im-gramian space estimator.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::curve::{monotone_family, Multitime, PiecewiseCurve};
use crate::error::{Error, Result};
use crate::propagator::{flow_nodes, fundamental_matrix, propagate_flow, PropagatorConfig};
use crate::subspace::{self, Subspace};
use crate::system::MultitimeSystem;

#[derive(Debug, Clone, Copy)]
pub struct GramianConfig {
    pub propagator: PropagatorConfig,
    pub sigma_tol: f64,
}

impl Default for GramianConfig {
    fn default() -> Self {
        GramianConfig {
            propagator: PropagatorConfig::default(),
            sigma_tol: crate::SIGMA_TOL,
        }
    }
}

impl GramianConfig {
    pub fn from_system(sys: &MultitimeSystem) -> Result<GramianConfig> {
        Ok(GramianConfig {
            propagator: PropagatorConfig::from_system(sys)?,
            sigma_tol: sys.defaults.sigma_tol.unwrap_or(crate::SIGMA_TOL),
        })
    }
}

/// Symmetric gramian matrix of one curve, with quadrature metadata.
#[derive(Debug, Clone)]
pub struct GramianResult {
    pub matrix: DMatrix<f64>,
    pub curve_id: String,
    /// ||C - C^T||_inf of the raw quadrature output, before symmetrization.
    pub symmetry_residual: f64,
    pub min_eigenvalue: f64,
    /// Full spectrum, descending, so rank decisions are auditable.
    pub eigenvalues: Vec<f64>,
    pub sigma_tol: f64,
}

impl GramianResult {
    pub fn rank(&self) -> usize {
        let max = self
            .eigenvalues
            .iter()
            .fold(0.0f64, |m, &v| m.max(v.abs()));
        if max == 0.0 {
            return 0;
        }
        self.eigenvalues
            .iter()
            .filter(|&&v| v.abs() > self.sigma_tol * max)
            .count()
    }
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()))
}

/// The gramian C_gamma = int_gamma chi(t0,s) N_a N_a^T chi(t0,s)^T ds^a.
pub fn curve_gramian(
    sys: &MultitimeSystem,
    curve: &PiecewiseCurve,
    cfg: &GramianConfig,
) -> Result<GramianResult> {
    let flow = propagate_flow(sys, curve, &cfg.propagator)?;
    let mut c = DMatrix::zeros(sys.n, sys.n);
    for node in flow_nodes(curve, &flow, cfg.propagator.panels_per_segment)? {
        for alpha in 0..sys.m {
            let vel = node.velocity[alpha];
            if vel == 0.0 || sys.coeff_n[alpha].is_zero() {
                continue;
            }
            let b = &node.chi_t0_s * sys.coeff_n[alpha].eval(&node.point)?;
            c += (&b * b.transpose()) * (vel * node.weight);
        }
    }
    let symmetry_residual = max_abs(&(&c - c.transpose()));
    let sym = (&c + c.transpose()) * 0.5;
    let eig = sym.clone().symmetric_eigen();
    let mut eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let min_eigenvalue = eigenvalues.last().copied().unwrap_or(0.0);
    Ok(GramianResult {
        matrix: sym,
        curve_id: curve.describe(),
        symmetry_residual,
        min_eigenvalue,
        eigenvalues,
        sigma_tol: cfg.sigma_tol,
    })
}

/// Im(C) as the span of eigenvectors with |lambda| above the relative
/// threshold. Absolute values make this meaningful on decreasing curves,
/// whose gramians are negative semidefinite.
pub fn image_subspace(g: &GramianResult) -> Subspace {
    let eig = g.matrix.clone().symmetric_eigen();
    let lambda_max = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if lambda_max == 0.0 {
        return Subspace::zero(g.matrix.nrows(), g.sigma_tol);
    }
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .abs()
            .partial_cmp(&eig.eigenvalues[i].abs())
            .unwrap()
    });
    let cols: Vec<DVector<f64>> = order
        .into_iter()
        .filter(|&i| eig.eigenvalues[i].abs() > g.sigma_tol * lambda_max)
        .map(|i| eig.eigenvectors.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        Subspace::zero(g.matrix.nrows(), g.sigma_tol)
    } else {
        Subspace::from_orthonormal(DMatrix::from_columns(&cols), g.sigma_tol)
            .expect("eigenvectors of a symmetric matrix are orthonormal")
    }
}

#[derive(Debug, Clone)]
pub struct ReversalReport {
    /// ||chi(t,t0) C_gamma chi(t,t0)^T + C_(gamma-)||_inf.
    pub residual: f64,
    pub rank_forward: usize,
    pub rank_reverse: usize,
}

/// Checks the reversal identity chi(t,t0) C_gamma chi(t,t0)^T = -C_(gamma-).
pub fn reversal_check(
    sys: &MultitimeSystem,
    curve: &PiecewiseCurve,
    cfg: &GramianConfig,
) -> Result<ReversalReport> {
    let forward = curve_gramian(sys, curve, cfg)?;
    let reversed = curve_gramian(sys, &curve.reverse(), cfg)?;
    let chi = fundamental_matrix(sys, curve, &cfg.propagator)?;
    let mapped = &chi * &forward.matrix * chi.transpose();
    Ok(ReversalReport {
        residual: max_abs(&(mapped + &reversed.matrix)),
        rank_forward: forward.rank(),
        rank_reverse: reversed.rank(),
    })
}

/// Max pairwise gramian difference across equal-endpoint curves.
pub fn path_independence_check(
    sys: &MultitimeSystem,
    curves: &[PiecewiseCurve],
    cfg: &GramianConfig,
) -> Result<f64> {
    if let Some(first) = curves.first() {
        for c in curves {
            let same = first
                .start()
                .iter()
                .zip(c.start().iter())
                .all(|(a, b)| a == b)
                && first.end().iter().zip(c.end().iter()).all(|(a, b)| a == b);
            if !same {
                return Err(Error::Config(
                    "path independence check requires equal-endpoint curves".into(),
                ));
            }
        }
    }
    let gramians: Vec<GramianResult> = curves
        .par_iter()
        .map(|c| curve_gramian(sys, c, cfg))
        .collect::<Result<_>>()?;
    let mut worst = 0.0f64;
    for i in 0..gramians.len() {
        for j in (i + 1)..gramians.len() {
            worst = worst.max(max_abs(&(&gramians[i].matrix - &gramians[j].matrix)));
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy)]
pub struct FamilyConfig {
    pub count: usize,
    pub seed: u64,
}

impl Default for FamilyConfig {
    fn default() -> Self {
        FamilyConfig { count: 8, seed: 0 }
    }
}

/// Estimate of the Im-gramian space over a finite curve family.
#[derive(Debug)]
pub struct ImGramianReport {
    pub subspace: Subspace,
    /// (curve id, gramian rank) per family member, in family order.
    pub per_curve: Vec<(String, usize)>,
    pub warning: Option<String>,
}

/// Intersection of gramian images over a seeded monotone curve family.
///
/// Any finite family only over-approximates the space intersected over all
/// monotone curves; the report lists the family actually used.
pub fn im_gramian_space(
    sys: &MultitimeSystem,
    t0: &Multitime,
    t: &Multitime,
    family_cfg: &FamilyConfig,
    cfg: &GramianConfig,
) -> Result<ImGramianReport> {
    if t0.iter().zip(t.iter()).all(|(a, b)| a == b) {
        return Ok(ImGramianReport {
            subspace: Subspace::zero(sys.n, cfg.sigma_tol),
            per_curve: Vec::new(),
            warning: Some("degenerate endpoints t0 = t: gramian is zero".into()),
        });
    }
    let domain = sys.domain.clone();
    let family = monotone_family(t0, t, family_cfg.count, family_cfg.seed, &|p| {
        domain.contains(p)
    })?;
    let gramians: Vec<GramianResult> = family
        .par_iter()
        .map(|c| curve_gramian(sys, c, cfg))
        .collect::<Result<_>>()?;
    let images: Vec<Subspace> = gramians.iter().map(image_subspace).collect();
    let per_curve = gramians
        .iter()
        .map(|g| (g.curve_id.clone(), g.rank()))
        .collect();
    let subspace = subspace::intersect(&images, sys.n, cfg.sigma_tol)?;
    Ok(ImGramianReport {
        subspace,
        per_curve,
        warning: None,
    })
}

/// Largest principal angle between the (t, t0) estimate and
/// chi(t,t0) applied to the (t0, t) estimate.
pub fn w_flow_check(
    sys: &MultitimeSystem,
    t0: &Multitime,
    t: &Multitime,
    family_cfg: &FamilyConfig,
    cfg: &GramianConfig,
) -> Result<f64> {
    let forward = im_gramian_space(sys, t0, t, family_cfg, cfg)?;
    let backward = im_gramian_space(sys, t, t0, family_cfg, cfg)?;
    let chi = fundamental_matrix(
        sys,
        &PiecewiseCurve::segment(t0.clone(), t.clone())?,
        &cfg.propagator,
    )?;
    let mapped = forward.subspace.map_through(&chi);
    Ok(subspace::largest_principal_angle(&backward.subspace, &mapped))
}

/// Vanishing-integrand diagnostic: for every v in the kernel of the curve
/// gramian, max over quadrature nodes and non-degenerate axes of
/// ||v^T chi(t0,s) N_a(s)||.
pub fn kernel_diagnostic(
    sys: &MultitimeSystem,
    curve: &PiecewiseCurve,
    cfg: &GramianConfig,
) -> Result<f64> {
    let gram = curve_gramian(sys, curve, cfg)?;
    let kernel = image_subspace(&gram).complement();
    if kernel.dim() == 0 {
        return Ok(0.0);
    }
    let flow = propagate_flow(sys, curve, &cfg.propagator)?;
    let t0 = curve.start();
    let t = curve.end();
    let active: Vec<usize> = (0..sys.m)
        .filter(|&a| (t[a] - t0[a]).abs() > 1e-12)
        .collect();
    let mut worst = 0.0f64;
    for node in flow_nodes(curve, &flow, cfg.propagator.panels_per_segment)? {
        for &alpha in &active {
            let b = &node.chi_t0_s * sys.coeff_n[alpha].eval(&node.point)?;
            for v in kernel.basis().column_iter() {
                worst = worst.max((b.transpose() * v).norm());
            }
        }
    }
    Ok(worst)
}
