//! Multitime system definition and integrability residual checks.
//!
//! The complete-integrability conditions on the coefficient families and on
//! candidate controls are evaluated as numerical residuals over a sample
//! grid inside the domain, with symbolic derivatives of the coefficient
//! entries.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{parse_expr, MatrixExpr};

/// Open per-axis bounds; `None` means unbounded on that side.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct AxisBounds {
    #[serde(default)]
    pub lower: Option<f64>,
    #[serde(default)]
    pub upper: Option<f64>,
}

/// Open convex domain: a product of open intervals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainSpec {
    pub bounds: Vec<AxisBounds>,
}

impl DomainSpec {
    pub fn full(m: usize) -> DomainSpec {
        DomainSpec {
            bounds: vec![AxisBounds::default(); m],
        }
    }

    pub fn contains(&self, t: &[f64]) -> bool {
        t.len() == self.bounds.len()
            && t.iter().zip(&self.bounds).all(|(x, b)| {
                b.lower.map_or(true, |lo| *x > lo) && b.upper.map_or(true, |hi| *x < hi)
            })
    }

    pub fn describe(&self) -> String {
        let axes: Vec<String> = self
            .bounds
            .iter()
            .map(|b| {
                format!(
                    "({}, {})",
                    b.lower.map_or("-inf".into(), |v| v.to_string()),
                    b.upper.map_or("inf".into(), |v| v.to_string())
                )
            })
            .collect();
        axes.join(" x ")
    }

    /// Default probe box: [0,1] per axis intersected with the domain shifted
    /// inward by 1e-3 on finite open boundaries.
    pub fn default_probe_box(&self) -> Result<Vec<(f64, f64)>> {
        self.bounds
            .iter()
            .map(|b| {
                let lo = b.lower.map_or(0.0, |l| (l + 1e-3).max(0.0));
                let hi = b.upper.map_or(1.0, |u| (u - 1e-3).min(1.0));
                if lo >= hi {
                    Err(Error::Config(format!(
                        "cannot derive a probe box inside {}; declare one explicitly",
                        self.describe()
                    )))
                } else {
                    Ok((lo, hi))
                }
            })
            .collect()
    }
}

/// Numeric defaults carried by a system document.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct DocumentDefaults {
    #[serde(default)]
    pub steps_per_segment: Option<usize>,
    #[serde(default)]
    pub panels_per_segment: Option<usize>,
    #[serde(default)]
    pub residual_tol: Option<f64>,
    #[serde(default)]
    pub sigma_tol: Option<f64>,
    #[serde(default)]
    pub grid_per_axis: Option<usize>,
}

/// On-disk JSON schema for a multitime system.
///
/// `M` holds m matrices of n x n expression strings, `N` holds m matrices of
/// n x k expression strings, both as rows of strings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemDocument {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    #[serde(default)]
    pub domain: Option<DomainSpec>,
    #[serde(rename = "M")]
    pub m_matrices: Vec<Vec<Vec<String>>>,
    #[serde(rename = "N")]
    pub n_matrices: Vec<Vec<Vec<String>>>,
    #[serde(default)]
    pub probe_box: Option<Vec<(f64, f64)>>,
    #[serde(default)]
    pub defaults: Option<DocumentDefaults>,
}

/// The system dx/dt^a = M_a(t) x + N_a(t) u_a(t) over an open convex domain.
#[derive(Debug, Clone)]
pub struct MultitimeSystem {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub domain: DomainSpec,
    pub coeff_m: Vec<MatrixExpr>,
    pub coeff_n: Vec<MatrixExpr>,
    pub probe_box: Vec<(f64, f64)>,
    pub defaults: DocumentDefaults,
}

fn parse_matrix(
    raw: &[Vec<String>],
    rows: usize,
    cols: usize,
    label: &str,
) -> Result<MatrixExpr> {
    if raw.len() != rows || raw.iter().any(|r| r.len() != cols) {
        return Err(Error::Dimension(format!(
            "{label} must be {rows}x{cols}, got {}x{}",
            raw.len(),
            raw.first().map_or(0, Vec::len)
        )));
    }
    let mut entries = Vec::with_capacity(rows * cols);
    for (r, row) in raw.iter().enumerate() {
        for (c, text) in row.iter().enumerate() {
            let e = parse_expr(text).map_err(|err| {
                Error::Schema(format!("{label}[{r}][{c}] = {text:?}: {err}"))
            })?;
            entries.push(e);
        }
    }
    MatrixExpr::new(rows, cols, entries)
}

/// Parse and dimension-check a system document.
pub fn load_system(doc: &SystemDocument) -> Result<MultitimeSystem> {
    let (m, n, k) = (doc.m, doc.n, doc.k);
    if m == 0 || n == 0 || k == 0 {
        return Err(Error::Schema("m, n, k must be positive".into()));
    }
    if doc.m_matrices.len() != m || doc.n_matrices.len() != m {
        return Err(Error::Dimension(format!(
            "expected {m} M and N matrices, got {} and {}",
            doc.m_matrices.len(),
            doc.n_matrices.len()
        )));
    }
    let domain = doc.domain.clone().unwrap_or_else(|| DomainSpec::full(m));
    if domain.bounds.len() != m {
        return Err(Error::Dimension(format!(
            "domain declares {} axes for m = {m}",
            domain.bounds.len()
        )));
    }
    let mut coeff_m = Vec::with_capacity(m);
    let mut coeff_n = Vec::with_capacity(m);
    for alpha in 0..m {
        coeff_m.push(parse_matrix(
            &doc.m_matrices[alpha],
            n,
            n,
            &format!("M[{alpha}]"),
        )?);
        coeff_n.push(parse_matrix(
            &doc.n_matrices[alpha],
            n,
            k,
            &format!("N[{alpha}]"),
        )?);
    }
    for (label, mats) in [("M", &coeff_m), ("N", &coeff_n)] {
        for (alpha, mat) in mats.iter().enumerate() {
            if let Some(v) = mat.max_var() {
                if v >= m {
                    return Err(Error::Schema(format!(
                        "{label}[{alpha}] uses variable t{} but m = {m}",
                        v + 1
                    )));
                }
            }
        }
    }
    let probe_box = match &doc.probe_box {
        Some(pb) => {
            if pb.len() != m || pb.iter().any(|(lo, hi)| lo >= hi) {
                return Err(Error::Schema("probe_box must give m nonempty intervals".into()));
            }
            pb.clone()
        }
        None => domain.default_probe_box()?,
    };
    let sys = MultitimeSystem {
        m,
        n,
        k,
        domain,
        coeff_m,
        coeff_n,
        probe_box,
        defaults: doc.defaults.clone().unwrap_or_default(),
    };
    // All entries must evaluate somewhere in D: probe the box corners and center.
    for t in lattice(&sys.probe_box, 2).points.iter().chain(std::iter::once(
        &sys.probe_box.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect::<Vec<_>>(),
    )) {
        for mats in [&sys.coeff_m, &sys.coeff_n] {
            for mat in mats.iter() {
                mat.eval(t)?;
            }
        }
    }
    Ok(sys)
}

impl MultitimeSystem {
    pub fn residual_tol(&self) -> f64 {
        self.defaults.residual_tol.unwrap_or(crate::RESIDUAL_TOL)
    }

    pub fn from_json(text: &str) -> Result<MultitimeSystem> {
        let doc: SystemDocument =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        load_system(&doc)
    }
}

/// A finite sample of the domain, in a fixed lexicographic order.
#[derive(Debug, Clone)]
pub struct Grid {
    pub points: Vec<Vec<f64>>,
}

/// Uniform lattice over the probe box with `per_axis` points per axis.
pub fn lattice(probe_box: &[(f64, f64)], per_axis: usize) -> Grid {
    let m = probe_box.len();
    let total = per_axis.pow(m as u32);
    let mut points = Vec::with_capacity(total);
    for idx in 0..total {
        let mut rem = idx;
        let mut t = vec![0.0; m];
        for axis in (0..m).rev() {
            let i = rem % per_axis;
            rem /= per_axis;
            let (lo, hi) = probe_box[axis];
            t[axis] = if per_axis == 1 {
                0.5 * (lo + hi)
            } else {
                lo + (hi - lo) * i as f64 / (per_axis - 1) as f64
            };
        }
        points.push(t);
    }
    Grid { points }
}

impl MultitimeSystem {
    pub fn default_grid(&self) -> Grid {
        let per_axis = self.defaults.grid_per_axis.unwrap_or(11);
        lattice(&self.probe_box, per_axis)
    }
}

/// Max-abs residual of a left-minus-right matrix identity over a grid.
#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    pub check: String,
    pub max_abs_residual: f64,
    pub argmax_point: Vec<f64>,
    /// 1-based (alpha, beta) pair attaining the max.
    pub argmax_indices: (usize, usize),
    pub samples: usize,
    pub skipped: usize,
    pub threshold: f64,
    pub pass: bool,
}

struct PointResidual {
    value: f64,
    pair: (usize, usize),
}

fn residual_over_grid<F>(
    check: &str,
    grid: &Grid,
    threshold: f64,
    per_point: F,
) -> ResidualReport
where
    F: Fn(&[f64]) -> Result<PointResidual> + Sync,
{
    let evaluated: Vec<Option<PointResidual>> = grid
        .points
        .par_iter()
        .map(|t| per_point(t).ok())
        .collect();
    let mut max_abs = 0.0;
    let mut argmax_point = grid.points.first().cloned().unwrap_or_default();
    let mut argmax_indices = (1, 2);
    let mut skipped = 0;
    for (t, r) in grid.points.iter().zip(&evaluated) {
        match r {
            Some(pr) => {
                if pr.value > max_abs {
                    max_abs = pr.value;
                    argmax_point = t.clone();
                    argmax_indices = pr.pair;
                }
            }
            None => skipped += 1,
        }
    }
    ResidualReport {
        check: check.to_string(),
        max_abs_residual: max_abs,
        argmax_point,
        argmax_indices,
        samples: grid.points.len(),
        skipped,
        threshold,
        // Skipped points mean the check could not be fully evaluated.
        pass: max_abs <= threshold && skipped == 0,
    }
}

fn max_abs_entry(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, &x| acc.max(x.abs()))
}

/// Residual of the pairwise compatibility condition on the drift matrices:
/// dM_a/dt^b + M_a M_b = dM_b/dt^a + M_b M_a for all a < b.
pub fn check_ii4(sys: &MultitimeSystem, grid: &Grid, threshold: f64) -> ResidualReport {
    let m = sys.m;
    let dm: Vec<Vec<MatrixExpr>> = (0..m)
        .map(|a| (0..m).map(|b| sys.coeff_m[a].diff(b)).collect())
        .collect();
    residual_over_grid("II4", grid, threshold, |t| {
        let mv: Vec<DMatrix<f64>> = sys
            .coeff_m
            .iter()
            .map(|e| e.eval(t))
            .collect::<Result<_>>()?;
        let mut best = PointResidual {
            value: 0.0,
            pair: (1, 2),
        };
        for a in 0..m {
            for b in (a + 1)..m {
                let r = dm[a][b].eval(t)? + &mv[a] * &mv[b] - dm[b][a].eval(t)? - &mv[b] * &mv[a];
                let v = max_abs_entry(&r);
                if v > best.value {
                    best = PointResidual {
                        value: v,
                        pair: (a + 1, b + 1),
                    };
                }
            }
        }
        Ok(best)
    })
}

/// Residual of the gramian path-independence condition, evaluated verbatim:
/// M_a N_b N_b^T + dN_a/ds^b N_a^T + N_a dN_a^T/ds^b + N_b N_b^T M_a^T,
/// minus the same with a and b exchanged.
pub fn check_ii6(sys: &MultitimeSystem, grid: &Grid, threshold: f64) -> ResidualReport {
    let m = sys.m;
    let dn: Vec<Vec<MatrixExpr>> = (0..m)
        .map(|a| (0..m).map(|b| sys.coeff_n[a].diff(b)).collect())
        .collect();
    residual_over_grid("II6", grid, threshold, |t| {
        let mv: Vec<DMatrix<f64>> = sys
            .coeff_m
            .iter()
            .map(|e| e.eval(t))
            .collect::<Result<_>>()?;
        let nv: Vec<DMatrix<f64>> = sys
            .coeff_n
            .iter()
            .map(|e| e.eval(t))
            .collect::<Result<_>>()?;
        let side = |a: usize, b: usize| -> Result<DMatrix<f64>> {
            let dna_b = dn[a][b].eval(t)?;
            Ok(&mv[a] * (&nv[b] * nv[b].transpose())
                + &dna_b * nv[a].transpose()
                + &nv[a] * dna_b.transpose()
                + (&nv[b] * nv[b].transpose()) * mv[a].transpose())
        };
        let mut best = PointResidual {
            value: 0.0,
            pair: (1, 2),
        };
        for a in 0..m {
            for b in (a + 1)..m {
                let r = side(a, b)? - side(b, a)?;
                let v = max_abs_entry(&r);
                if v > best.value {
                    best = PointResidual {
                        value: v,
                        pair: (a + 1, b + 1),
                    };
                }
            }
        }
        Ok(best)
    })
}

/// Residual of the control admissibility condition for a candidate control
/// family u = (u_1, ..., u_m), each a k x 1 expression matrix.
pub fn check_control(
    sys: &MultitimeSystem,
    u: &[MatrixExpr],
    grid: &Grid,
    threshold: f64,
) -> Result<ResidualReport> {
    let m = sys.m;
    if u.len() != m {
        return Err(Error::Dimension(format!(
            "expected {m} control components, got {}",
            u.len()
        )));
    }
    for (alpha, ua) in u.iter().enumerate() {
        if ua.rows() != sys.k || ua.cols() != 1 {
            return Err(Error::Dimension(format!(
                "u[{alpha}] must be {}x1, got {}x{}",
                sys.k,
                ua.rows(),
                ua.cols()
            )));
        }
    }
    let dn: Vec<Vec<MatrixExpr>> = (0..m)
        .map(|a| (0..m).map(|b| sys.coeff_n[a].diff(b)).collect())
        .collect();
    let du: Vec<Vec<MatrixExpr>> = (0..m)
        .map(|a| (0..m).map(|b| u[a].diff(b)).collect())
        .collect();
    Ok(residual_over_grid("II5", grid, threshold, |t| {
        let mv: Vec<DMatrix<f64>> = sys
            .coeff_m
            .iter()
            .map(|e| e.eval(t))
            .collect::<Result<_>>()?;
        let nv: Vec<DMatrix<f64>> = sys
            .coeff_n
            .iter()
            .map(|e| e.eval(t))
            .collect::<Result<_>>()?;
        let uv: Vec<DMatrix<f64>> = u.iter().map(|e| e.eval(t)).collect::<Result<_>>()?;
        let side = |a: usize, b: usize| -> Result<DMatrix<f64>> {
            Ok(&mv[a] * (&nv[b] * &uv[b]) + dn[a][b].eval(t)? * &uv[a] + &nv[a] * du[a][b].eval(t)?)
        };
        let mut best = PointResidual {
            value: 0.0,
            pair: (1, 2),
        };
        for a in 0..m {
            for b in (a + 1)..m {
                let r = side(a, b)? - side(b, a)?;
                let v = max_abs_entry(&r);
                if v > best.value {
                    best = PointResidual {
                        value: v,
                        pair: (a + 1, b + 1),
                    };
                }
            }
        }
        Ok(best)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demos;

    #[test]
    fn example4_document_loads() {
        let sys = demos::system_example4a().unwrap();
        assert_eq!((sys.m, sys.n, sys.k), (2, 2, 2));
        assert!(sys.coeff_m.iter().all(MatrixExpr::is_zero));
        assert!(sys.coeff_n[1].is_zero());
        let n1 = sys.coeff_n[0].eval(&[0.0, 0.5]).unwrap();
        assert_eq!(n1, DMatrix::from_diagonal_element(2, 2, 0.5));
    }

    #[test]
    fn section7_document_loads() {
        let sys = demos::system_section7().unwrap();
        assert_eq!((sys.m, sys.n, sys.k), (2, 2, 1));
        let n1 = sys.coeff_n[0].eval(&[0.3, 0.8]).unwrap();
        assert_eq!(n1, DMatrix::from_column_slice(2, 1, &[1.0, 0.0]));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let doc = SystemDocument {
            m: 2,
            n: 2,
            k: 1,
            domain: None,
            m_matrices: vec![
                vec![vec!["0".into(), "0".into()], vec!["0".into(), "0".into()]];
                2
            ],
            // N[0] is 3x1 against n = 2.
            n_matrices: vec![
                vec![vec!["1".into()], vec!["0".into()], vec!["0".into()]],
                vec![vec!["0".into()], vec!["1".into()]],
            ],
            probe_box: None,
            defaults: None,
        };
        assert!(matches!(load_system(&doc), Err(Error::Dimension(_))));
    }

    #[test]
    fn ii4_zero_for_zero_drift() {
        let sys = demos::system_example4a().unwrap();
        let r = check_ii4(&sys, &sys.default_grid(), 1e-9);
        assert_eq!(r.max_abs_residual, 0.0);
        assert!(r.pass);
    }

    #[test]
    fn ii4_zero_for_commuting_constants() {
        let sys = demos::system_nilpotent().unwrap();
        let r = check_ii4(&sys, &sys.default_grid(), 1e-9);
        assert_eq!(r.max_abs_residual, 0.0);
    }

    #[test]
    fn ii4_detects_noncommuting_constants() {
        let doc = SystemDocument {
            m: 2,
            n: 2,
            k: 1,
            domain: None,
            m_matrices: vec![
                vec![vec!["0".into(), "1".into()], vec!["0".into(), "0".into()]],
                vec![vec!["0".into(), "0".into()], vec!["1".into(), "0".into()]],
            ],
            n_matrices: vec![
                vec![vec!["0".into()], vec!["0".into()]];
                2
            ],
            probe_box: None,
            defaults: None,
        };
        let sys = load_system(&doc).unwrap();
        let r = check_ii4(&sys, &sys.default_grid(), 1e-9);
        // max |M1 M2 - M2 M1| = 1 for these matrices
        assert!((r.max_abs_residual - 1.0).abs() < 1e-14);
        assert!(!r.pass);
    }

    #[test]
    fn ii6_zero_for_constant_n_zero_m() {
        let sys = demos::system_section7().unwrap();
        let r = check_ii6(&sys, &sys.default_grid(), 1e-9);
        assert_eq!(r.max_abs_residual, 0.0);
    }

    #[test]
    fn ii6_matches_finite_differences_on_nonsymmetric_n() {
        // Random-ish nonsymmetric N1(t), zero M: residual is nonzero and
        // must agree with an independent finite-difference evaluation.
        let doc = SystemDocument {
            m: 2,
            n: 2,
            k: 2,
            domain: None,
            m_matrices: vec![
                vec![vec!["0".into(), "0".into()], vec!["0".into(), "0".into()]];
                2
            ],
            n_matrices: vec![
                vec![
                    vec!["t1+t2^2".into(), "sin(t1)".into()],
                    vec!["0.3*t2".into(), "1".into()],
                ],
                vec![vec!["1".into(), "0".into()], vec!["t1".into(), "0.5".into()]],
            ],
            probe_box: None,
            defaults: None,
        };
        let sys = load_system(&doc).unwrap();
        let grid = Grid {
            points: vec![vec![0.37, 0.61]],
        };
        let r = check_ii6(&sys, &grid, 1e-9);
        assert!(r.max_abs_residual > 1e-3);

        // Finite-difference oracle for the same expression at the same point.
        let t = [0.37, 0.61];
        let h = 1e-6;
        let n_at = |alpha: usize, t: &[f64]| sys.coeff_n[alpha].eval(t).unwrap();
        let dn_fd = |alpha: usize, beta: usize| {
            let mut tp = t.to_vec();
            let mut tm = t.to_vec();
            tp[beta] += h;
            tm[beta] -= h;
            (n_at(alpha, &tp) - n_at(alpha, &tm)) / (2.0 * h)
        };
        // With M = 0 the condition reduces to the N-derivative terms.
        let d12 = dn_fd(0, 1);
        let d21 = dn_fd(1, 0);
        let n1 = n_at(0, &t);
        let n2 = n_at(1, &t);
        let left = &d12 * n1.transpose() + &n1 * d12.transpose();
        let right = &d21 * n2.transpose() + &n2 * d21.transpose();
        let fd_res = max_abs_entry(&(left - right));
        assert!(
            (r.max_abs_residual - fd_res).abs() < 1e-6,
            "symbolic {} vs finite-difference {}",
            r.max_abs_residual,
            fd_res
        );
    }

    #[test]
    fn control_residual_for_constant_u1_in_example4() {
        let sys = demos::system_example4a().unwrap();
        let c = 0.7;
        let u = vec![
            MatrixExpr::new(
                2,
                1,
                vec![parse_expr(&c.to_string()).unwrap(), parse_expr("0").unwrap()],
            )
            .unwrap(),
            MatrixExpr::zeros(2, 1),
        ];
        let r = check_control(&sys, &u, &sys.default_grid(), 1e-9).unwrap();
        assert!((r.max_abs_residual - c).abs() < 1e-12);
        assert!(!r.pass);
    }

    #[test]
    fn zero_control_passes() {
        let sys = demos::system_example4a().unwrap();
        let u = vec![MatrixExpr::zeros(2, 1), MatrixExpr::zeros(2, 1)];
        let r = check_control(&sys, &u, &sys.default_grid(), 1e-9).unwrap();
        assert_eq!(r.max_abs_residual, 0.0);
        assert!(r.pass);
    }

    #[test]
    fn case_b_reciprocal_control_is_admissible() {
        let sys = demos::system_example4b().unwrap();
        // u1 = v / (s2 * (t1 - t01)) with v = (1,1), t1 - t01 = 1.
        let u = vec![
            MatrixExpr::new(
                2,
                1,
                vec![
                    parse_expr("1/t2").unwrap(),
                    parse_expr("1/t2").unwrap(),
                ],
            )
            .unwrap(),
            MatrixExpr::zeros(2, 1),
        ];
        let r = check_control(&sys, &u, &sys.default_grid(), 1e-9).unwrap();
        assert!(r.max_abs_residual < 1e-9, "residual {}", r.max_abs_residual);
        assert!(r.pass);
    }

    #[test]
    fn default_probe_box_respects_open_bounds() {
        let sys = demos::system_example4b().unwrap();
        assert_eq!(sys.probe_box[1].0, 1e-3);
        assert!(sys.domain.contains(&[5.0, 0.5]));
        assert!(!sys.domain.contains(&[5.0, 0.0]));
    }

    #[test]
    fn lattice_is_deterministic_and_ordered() {
        let g = lattice(&[(0.0, 1.0), (0.0, 2.0)], 3);
        assert_eq!(g.points.len(), 9);
        assert_eq!(g.points[0], vec![0.0, 0.0]);
        assert_eq!(g.points[1], vec![0.0, 1.0]);
        assert_eq!(g.points[8], vec![1.0, 2.0]);
    }
}
