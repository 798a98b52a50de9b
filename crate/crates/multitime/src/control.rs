//! Controllability functionals, their minimization, and minimum-phase
//! transfer planning with gramian controls.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::curve::{Multitime, PiecewiseCurve};
use crate::error::{Error, Result};
use crate::expr::{Expr, Func, MatrixExpr};
use crate::gramian::{curve_gramian, GramianConfig, GramianResult};
use crate::propagator::{
    flow_nodes, fundamental_matrix, propagate_flow, solve_state, ControlLaw, Phase,
    PropagatorConfig,
};
use crate::quadrature;
use crate::system::{check_ii4, check_ii6, MultitimeSystem};

/// The quadratic affine functional F(v) = <Cv, v> - 2<x0, v>.
#[derive(Debug, Clone)]
pub struct FunctionalSpec {
    pub gramian: GramianResult,
    pub x0: DVector<f64>,
    pub t0: Multitime,
    pub t: Multitime,
}

impl FunctionalSpec {
    pub fn new(
        gramian: GramianResult,
        x0: DVector<f64>,
        t0: Multitime,
        t: Multitime,
    ) -> Result<FunctionalSpec> {
        if gramian.matrix.nrows() != x0.len() {
            return Err(Error::Dimension(format!(
                "gramian is {}x{} but x0 has length {}",
                gramian.matrix.nrows(),
                gramian.matrix.ncols(),
                x0.len()
            )));
        }
        let asym = (&gramian.matrix - gramian.matrix.transpose())
            .iter()
            .fold(0.0f64, |m, &v| m.max(v.abs()));
        if asym > crate::SYMMETRY_TOL {
            return Err(Error::Config(format!(
                "gramian is not symmetric (defect {asym:.3e})"
            )));
        }
        Ok(FunctionalSpec { gramian, x0, t0, t })
    }
}

pub fn functional_value(spec: &FunctionalSpec, v: &DVector<f64>) -> f64 {
    (&spec.gramian.matrix * v).dot(v) - 2.0 * spec.x0.dot(v)
}

/// F evaluated through the adjoint solution phi_v(s) = chi(t0,s)^T v:
/// int_gamma ||N_a^T phi_v||^2 ds^a - 2 <x0, phi_v(t0)>.
pub fn functional_value_dual(
    sys: &MultitimeSystem,
    curve: &PiecewiseCurve,
    x0: &DVector<f64>,
    v: &DVector<f64>,
    cfg: &PropagatorConfig,
) -> Result<f64> {
    let flow = propagate_flow(sys, curve, cfg)?;
    let mut acc = 0.0;
    for node in flow_nodes(curve, &flow, cfg.panels_per_segment)? {
        let phi = node.chi_t0_s.transpose() * v;
        for alpha in 0..sys.m {
            let vel = node.velocity[alpha];
            if vel == 0.0 || sys.coeff_n[alpha].is_zero() {
                continue;
            }
            let n_here = sys.coeff_n[alpha].eval(&node.point)?;
            acc += node.weight * vel * (n_here.transpose() * &phi).norm_squared();
        }
    }
    // phi_v(t0) = v because chi(t0, t0) = I.
    Ok(acc - 2.0 * x0.dot(v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MinStatus {
    UniqueMinimum,
    MinimumFamily,
    NoMinimum,
}

#[derive(Debug, Clone)]
pub struct MinResult {
    pub status: MinStatus,
    /// Minimum-norm solution of Cv = x0 (the pseudo-solution even when the
    /// system is inconsistent).
    pub v0: DVector<f64>,
    pub value: f64,
    /// ||C v0 - x0||.
    pub residual: f64,
}

/// Minimize F by eigendecomposition of the gramian: v0 solves C v = x0 on
/// Im(C); no minimum exists when x0 leaves Im(C).
pub fn minimize_functional(spec: &FunctionalSpec) -> Result<MinResult> {
    let c = &spec.gramian.matrix;
    let n = c.nrows();
    let (values, vectors) = crate::subspace::symmetric_eigen_sorted(c.clone());
    let lambda_max = values.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let cut = spec.gramian.sigma_tol * lambda_max;
    let mut v0 = DVector::zeros(n);
    let mut projection = DVector::zeros(n);
    let mut rank = 0usize;
    for (i, &lambda) in values.iter().enumerate() {
        if lambda.abs() <= cut || lambda_max == 0.0 {
            continue;
        }
        rank += 1;
        let q = vectors.column(i);
        let coef = q.dot(&spec.x0);
        projection += q * coef;
        v0 += q * (coef / lambda);
    }
    let defect = (&spec.x0 - projection).norm();
    let status = if defect > crate::MEMBERSHIP_TOL * spec.x0.norm().max(1.0) {
        MinStatus::NoMinimum
    } else if rank == n {
        MinStatus::UniqueMinimum
    } else {
        MinStatus::MinimumFamily
    };
    Ok(MinResult {
        status,
        value: functional_value(spec, &v0),
        residual: (c * &v0 - &spec.x0).norm(),
        v0,
    })
}

/// The gramian control u_{a,v}(s) = N_a^T(s) chi(t0,s)^T v of a fixed v.
pub struct GramianControl {
    pub v: DVector<f64>,
    coeff_n: Vec<MatrixExpr>,
}

impl GramianControl {
    /// Evaluate all m control components at an explicit point s, propagating
    /// chi(t0, s) along the straight segment from t0.
    pub fn eval_at(
        &self,
        sys: &MultitimeSystem,
        t0: &Multitime,
        s: &Multitime,
        cfg: &PropagatorConfig,
    ) -> Result<Vec<DVector<f64>>> {
        let seg = PiecewiseCurve::segment(t0.clone(), s.clone())?;
        let chi_s_t0 = fundamental_matrix(sys, &seg, cfg)?;
        let chi_t0_s = chi_s_t0.try_inverse().ok_or_else(|| {
            Error::Singular("fundamental matrix not invertible at control point".into())
        })?;
        (0..self.coeff_n.len())
            .map(|alpha| self.eval(alpha, s, &chi_t0_s))
            .collect()
    }
}

impl ControlLaw for GramianControl {
    fn eval(&self, alpha: usize, s: &[f64], chi_t0_s: &DMatrix<f64>) -> Result<DVector<f64>> {
        let n_here = self.coeff_n[alpha].eval(s)?;
        Ok(n_here.transpose() * (chi_t0_s.transpose() * &self.v))
    }

    fn describe(&self) -> String {
        format!(
            "gramian control u_a(s) = N_a^T(s) chi(t0,s)^T v, v = {:?}",
            self.v.as_slice()
        )
    }
}

pub fn synthesize_control(sys: &MultitimeSystem, v: DVector<f64>) -> Result<GramianControl> {
    if v.len() != sys.n {
        return Err(Error::Dimension(format!(
            "v has length {}, expected n = {}",
            v.len(),
            sys.n
        )));
    }
    Ok(GramianControl {
        v,
        coeff_n: sys.coeff_n.clone(),
    })
}

/// A planned phase transfer (t0, x0) -> (t, y) with its gramian control.
#[derive(Debug, Clone, Serialize)]
pub struct TransferPlan {
    pub t0: Vec<f64>,
    pub t: Vec<f64>,
    pub x0: Vec<f64>,
    pub y: Vec<f64>,
    /// Right-hand side w = chi(t0,t) y - x0 of the gramian equation C v = w.
    pub w: Vec<f64>,
    pub v: Vec<f64>,
    pub status: MinStatus,
    pub feasible: bool,
    pub value: f64,
    /// ||C v - w||.
    pub residual: f64,
    pub control_description: Vec<String>,
    pub warnings: Vec<String>,
}

impl TransferPlan {
    pub fn v_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.v)
    }
}

/// Solve C v = chi(t0,t) y - x0 along the straight segment from t0 to t.
///
/// When the integrability checks fail on the system's default grid the plan
/// is still produced but flagged as formal: the synthesized control is not
/// guaranteed admissible.
pub fn plan_transfer(
    sys: &MultitimeSystem,
    t0: &Multitime,
    x0: &DVector<f64>,
    t: &Multitime,
    y: &DVector<f64>,
    cfg: &GramianConfig,
) -> Result<TransferPlan> {
    if x0.len() != sys.n || y.len() != sys.n {
        return Err(Error::Dimension(format!(
            "states of length {} and {}, expected n = {}",
            x0.len(),
            y.len(),
            sys.n
        )));
    }
    let mut warnings = Vec::new();
    let grid = sys.default_grid();
    let ii4 = check_ii4(sys, &grid, sys.residual_tol());
    if !ii4.pass {
        warnings.push(format!(
            "II4 fails on the default grid (residual {:.3e}): fundamental matrix may be path-dependent",
            ii4.max_abs_residual
        ));
    }
    let ii6 = check_ii6(sys, &grid, sys.residual_tol());
    if !ii6.pass {
        warnings.push(format!(
            "formal plan: II6 fails on the default grid (residual {:.3e}); control admissibility not guaranteed",
            ii6.max_abs_residual
        ));
    }
    let any_up = t0.iter().zip(t.iter()).any(|(a, b)| b > a);
    let any_down = t0.iter().zip(t.iter()).any(|(a, b)| b < a);
    if any_up && any_down {
        warnings.push(
            "endpoints are not componentwise ordered: the segment gramian need not be semidefinite"
                .into(),
        );
    }
    let curve = PiecewiseCurve::segment(t0.clone(), t.clone())?;
    let chi_t_t0 = fundamental_matrix(sys, &curve, &cfg.propagator)?;
    let chi_t0_t = chi_t_t0.try_inverse().ok_or_else(|| {
        Error::Singular("fundamental matrix chi(t, t0) is not invertible".into())
    })?;
    let w = chi_t0_t * y - x0;
    let gram = curve_gramian(sys, &curve, cfg)?;
    let spec = FunctionalSpec::new(gram, w.clone(), t0.clone(), t.clone())?;
    let min = minimize_functional(&spec)?;
    let control_description = (0..sys.m)
        .map(|alpha| {
            if sys.coeff_n[alpha].is_zero() {
                format!("u_{}(s) = 0", alpha + 1)
            } else {
                format!("u_{}(s) = N_{}^T(s) chi(t0,s)^T v", alpha + 1, alpha + 1)
            }
        })
        .collect();
    Ok(TransferPlan {
        t0: t0.to_vec(),
        t: t.to_vec(),
        x0: x0.iter().copied().collect(),
        y: y.iter().copied().collect(),
        w: w.iter().copied().collect(),
        v: min.v0.iter().copied().collect(),
        status: min.status,
        feasible: min.status != MinStatus::NoMinimum,
        value: min.value,
        residual: min.residual,
        control_description,
        warnings,
    })
}

/// Simulate the planned control along `curve` and return ||x(t) - y||.
pub fn verify_transfer(
    sys: &MultitimeSystem,
    plan: &TransferPlan,
    curve: &PiecewiseCurve,
    cfg: &PropagatorConfig,
) -> Result<f64> {
    let control = synthesize_control(sys, plan.v_vector())?;
    let phase0 = Phase {
        t: Multitime::new(plan.t0.clone())?,
        x: DVector::from_column_slice(&plan.x0),
    };
    let x = solve_state(sys, &control, &phase0, curve, cfg)?;
    Ok((x - DVector::from_column_slice(&plan.y)).norm())
}

/// The extended functional J(phi) = int_gamma ||N_a^T phi||^2 ds^a
/// - 2 <x0, phi(t0)> for an arbitrary expression-defined phi: R^m -> R^n.
pub fn extended_functional(
    sys: &MultitimeSystem,
    curve: &PiecewiseCurve,
    x0: &DVector<f64>,
    phi: &[Expr],
    cfg: &GramianConfig,
) -> Result<f64> {
    if phi.len() != sys.n {
        return Err(Error::Dimension(format!(
            "phi has {} components, expected n = {}",
            phi.len(),
            sys.n
        )));
    }
    let eval_phi = |s: &[f64]| -> Result<DVector<f64>> {
        let vals = phi.iter().map(|e| e.eval(s)).collect::<Result<Vec<_>>>()?;
        Ok(DVector::from_vec(vals))
    };
    let mut acc = 0.0;
    for (tau, weight) in quadrature::curve_nodes(curve, cfg.propagator.panels_per_segment) {
        let s = curve.point(tau);
        if !sys.domain.contains(&s) {
            return Err(Error::Domain(format!(
                "curve point {s:?} leaves D = {}",
                sys.domain.describe()
            )));
        }
        let vel = curve.velocity(tau);
        let phi_here = eval_phi(&s)?;
        for alpha in 0..sys.m {
            if vel[alpha] == 0.0 || sys.coeff_n[alpha].is_zero() {
                continue;
            }
            let n_here = sys.coeff_n[alpha].eval(&s)?;
            acc += weight * vel[alpha] * (n_here.transpose() * &phi_here).norm_squared();
        }
    }
    let phi0 = eval_phi(curve.start())?;
    Ok(acc - 2.0 * x0.dot(&phi0))
}

/// The descent family phi_1(s) = c sqrt(q / (1 + q^2 (s1+s2-t0^1-t0^2)^2)),
/// with c = a+b and phi_2 = phi_1 when a+b != 0, else c = a and
/// phi_2 = -phi_1.
pub fn section7_phi(q: f64, a: f64, b: f64, t0: &Multitime) -> Result<Vec<Expr>> {
    if a == 0.0 && b == 0.0 {
        return Err(Error::Config("x0 must be nonzero".into()));
    }
    if q <= 0.0 {
        return Err(Error::Config(format!("q must be positive, got {q}")));
    }
    if t0.dim() != 2 {
        return Err(Error::Dimension(format!(
            "t0 has dimension {}, expected 2",
            t0.dim()
        )));
    }
    let (c, flip) = if a + b != 0.0 { (a + b, false) } else { (a, true) };
    let sigma = Expr::sub(
        Expr::add(Expr::var(0), Expr::var(1)),
        Expr::constant(t0[0] + t0[1]),
    );
    let denom = Expr::add(
        Expr::constant(1.0),
        Expr::mul(Expr::constant(q * q), Expr::pow(sigma, 2)),
    );
    let phi1 = Expr::mul(
        Expr::constant(c),
        Expr::apply(Func::Sqrt, Expr::div(Expr::constant(q), denom)),
    );
    let phi2 = if flip { Expr::neg(phi1.clone()) } else { phi1.clone() };
    Ok(vec![phi1, phi2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demos;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn mt(v: &[f64]) -> Multitime {
        Multitime::new(v.to_vec()).unwrap()
    }

    fn seg(a: &[f64], b: &[f64]) -> PiecewiseCurve {
        PiecewiseCurve::segment(mt(a), mt(b)).unwrap()
    }

    fn gram_from(matrix: DMatrix<f64>) -> GramianResult {
        let eig = matrix.clone().symmetric_eigen();
        let mut eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        eigenvalues.sort_by(|a, b| b.partial_cmp(a).unwrap());
        GramianResult {
            min_eigenvalue: eigenvalues.last().copied().unwrap_or(0.0),
            eigenvalues,
            matrix,
            curve_id: "synthetic".into(),
            symmetry_residual: 0.0,
            sigma_tol: crate::SIGMA_TOL,
        }
    }

    fn spec_from(matrix: DMatrix<f64>, x0: &[f64]) -> FunctionalSpec {
        FunctionalSpec::new(
            gram_from(matrix),
            DVector::from_column_slice(x0),
            mt(&[0.0, 0.0]),
            mt(&[1.0, 1.0]),
        )
        .unwrap()
    }

    #[test]
    fn quadratic_form_values() {
        let spec = spec_from(DMatrix::identity(2, 2), &[0.0, 0.0]);
        assert_eq!(
            functional_value(&spec, &DVector::from_column_slice(&[3.0, 4.0])),
            25.0
        );
        let zero = spec_from(DMatrix::zeros(2, 2), &[0.0, 0.0]);
        assert_eq!(
            functional_value(&zero, &DVector::from_column_slice(&[5.0, -7.0])),
            0.0
        );
    }

    #[test]
    fn section7_functional_at_v_equals_minus_five() {
        let sys = demos::system_section7().unwrap();
        let cfg = GramianConfig::default();
        let gram = curve_gramian(&sys, &seg(&[0.0, 0.0], &[1.0, 1.0]), &cfg).unwrap();
        let spec = FunctionalSpec::new(
            gram,
            DVector::from_column_slice(&[1.0, 2.0]),
            mt(&[0.0, 0.0]),
            mt(&[1.0, 1.0]),
        )
        .unwrap();
        let v = DVector::from_column_slice(&[1.0, 2.0]);
        assert!((functional_value(&spec, &v) + 5.0).abs() < 1e-9);
        let min = minimize_functional(&spec).unwrap();
        assert_eq!(min.status, MinStatus::UniqueMinimum);
        assert!((min.v0 - v).norm() < 1e-8);
        assert!((min.value + 5.0).abs() < 1e-8);
    }

    #[test]
    fn degenerate_gramian_minimum_family() {
        let spec = spec_from(DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, 0.0])), &[1.0, 0.0]);
        let min = minimize_functional(&spec).unwrap();
        assert_eq!(min.status, MinStatus::MinimumFamily);
        assert!((min.v0[0] - 1.0).abs() < 1e-12);
        assert_eq!(min.v0[1], 0.0);
        assert!((min.value + 1.0).abs() < 1e-12);
    }

    #[test]
    fn off_image_target_has_no_minimum() {
        let spec = spec_from(DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, 0.0])), &[0.0, 1.0]);
        let min = minimize_functional(&spec).unwrap();
        assert_eq!(min.status, MinStatus::NoMinimum);
        assert!((min.residual - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_asymmetric_gramian() {
        let r = FunctionalSpec::new(
            gram_from(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0])),
            DVector::zeros(2),
            mt(&[0.0, 0.0]),
            mt(&[1.0, 1.0]),
        );
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn primal_dual_agreement() {
        let prop = PropagatorConfig::default();
        let cfg = GramianConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for sys in [
            demos::system_example4a().unwrap(),
            demos::system_section7().unwrap(),
            demos::system_driftpair().unwrap(),
        ] {
            let curve = seg(&[0.0, 0.0], &[1.0, 1.0]);
            let gram = curve_gramian(&sys, &curve, &cfg).unwrap();
            for _ in 0..5 {
                let x0 = DVector::from_fn(sys.n, |_, _| rng.gen_range(-2.0..2.0));
                let v = DVector::from_fn(sys.n, |_, _| rng.gen_range(-2.0..2.0));
                let spec = FunctionalSpec::new(
                    gram.clone(),
                    x0.clone(),
                    mt(&[0.0, 0.0]),
                    mt(&[1.0, 1.0]),
                )
                .unwrap();
                let primal = functional_value(&spec, &v);
                let dual = functional_value_dual(&sys, &curve, &x0, &v, &prop).unwrap();
                assert!((primal - dual).abs() < 1e-7, "{primal} vs {dual}");
            }
        }
    }

    #[test]
    fn dual_of_zero_v_is_zero() {
        let sys = demos::system_section7().unwrap();
        let d = functional_value_dual(
            &sys,
            &seg(&[0.0, 0.0], &[1.0, 1.0]),
            &DVector::from_column_slice(&[1.0, 2.0]),
            &DVector::zeros(2),
            &PropagatorConfig::default(),
        )
        .unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn section7_gramian_control_is_constant_v() {
        let sys = demos::system_section7().unwrap();
        let control =
            synthesize_control(&sys, DVector::from_column_slice(&[0.4, -1.3])).unwrap();
        let us = control
            .eval_at(
                &sys,
                &mt(&[0.0, 0.0]),
                &mt(&[0.7, 0.2]),
                &PropagatorConfig::default(),
            )
            .unwrap();
        assert!((us[0][0] - 0.4).abs() < 1e-12);
        assert!((us[1][0] + 1.3).abs() < 1e-12);
    }

    #[test]
    fn example4_control_scales_with_s2() {
        let sys = demos::system_example4a().unwrap();
        let control = synthesize_control(&sys, DVector::from_column_slice(&[1.0, 0.0])).unwrap();
        let us = control
            .eval_at(
                &sys,
                &mt(&[0.0, 0.0]),
                &mt(&[0.5, 0.5]),
                &PropagatorConfig::default(),
            )
            .unwrap();
        assert!((us[0][0] - 0.5).abs() < 1e-12);
        assert!(us[0][1].abs() < 1e-12);
        assert_eq!(us[1].norm(), 0.0);
    }

    #[test]
    fn section7_transfer_to_origin() {
        let sys = demos::system_section7().unwrap();
        let cfg = GramianConfig::default();
        let t0 = mt(&[0.0, 0.0]);
        let t = mt(&[1.0, 1.0]);
        let x0 = DVector::from_column_slice(&[1.0, 2.0]);
        let plan = plan_transfer(&sys, &t0, &x0, &t, &DVector::zeros(2), &cfg).unwrap();
        assert!(plan.feasible);
        assert!(plan.warnings.is_empty(), "{:?}", plan.warnings);
        assert!((plan.v_vector() + x0).norm() < 1e-8);
        let err = verify_transfer(&sys, &plan, &seg(&[0.0, 0.0], &[1.0, 1.0]), &cfg.propagator)
            .unwrap();
        assert!(err < 1e-7, "endpoint error {err}");
    }

    #[test]
    fn homogeneous_target_needs_zero_control() {
        let sys = demos::system_driftpair().unwrap();
        let cfg = GramianConfig::default();
        let t0 = mt(&[0.0, 0.0]);
        let t = mt(&[1.0, 1.0]);
        let x0 = DVector::from_column_slice(&[0.5, -0.25]);
        let chi = fundamental_matrix(&sys, &seg(&[0.0, 0.0], &[1.0, 1.0]), &cfg.propagator)
            .unwrap();
        let y = &chi * &x0;
        let plan = plan_transfer(&sys, &t0, &x0, &t, &y, &cfg).unwrap();
        assert!(plan.feasible);
        assert!(DVector::from_column_slice(&plan.w).norm() < 1e-8);
        assert!(plan.v_vector().norm() < 1e-7);
    }

    #[test]
    fn driftpair_random_transfers_verify() {
        let sys = demos::system_driftpair().unwrap();
        let cfg = GramianConfig::default();
        let t0 = mt(&[0.0, 0.0]);
        let t = mt(&[1.0, 1.0]);
        let curve = seg(&[0.0, 0.0], &[1.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..3 {
            let x0 = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
            let y = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
            let plan = plan_transfer(&sys, &t0, &x0, &t, &y, &cfg).unwrap();
            assert!(plan.feasible);
            let err = verify_transfer(&sys, &plan, &curve, &cfg.propagator).unwrap();
            assert!(err < 1e-6, "endpoint error {err}");
        }
    }

    #[test]
    fn rank_deficient_transfer_is_infeasible() {
        let sys = demos::system_rankone().unwrap();
        let cfg = GramianConfig::default();
        let plan = plan_transfer(
            &sys,
            &mt(&[0.0, 0.0]),
            &DVector::zeros(2),
            &mt(&[1.0, 1.0]),
            &DVector::from_column_slice(&[0.0, 1.0]),
            &cfg,
        )
        .unwrap();
        assert!(!plan.feasible);
        assert_eq!(plan.status, MinStatus::NoMinimum);
    }

    #[test]
    fn formal_plan_warns_when_ii6_fails() {
        let sys = demos::system_example4a().unwrap();
        let cfg = GramianConfig::default();
        let plan = plan_transfer(
            &sys,
            &mt(&[0.0, 0.0]),
            &DVector::from_column_slice(&[1.0, 0.0]),
            &mt(&[1.0, 1.0]),
            &DVector::zeros(2),
            &cfg,
        )
        .unwrap();
        assert!(plan.feasible, "gramian has rank 2");
        assert!(plan
            .warnings
            .iter()
            .any(|w| w.contains("II6")), "{:?}", plan.warnings);
    }

    #[test]
    fn section7_phi_values_and_case_split() {
        let t0 = mt(&[0.0, 0.0]);
        let phi = section7_phi(1.0, 1.0, 2.0, &t0).unwrap();
        assert!((phi[0].eval(&[0.0, 0.0]).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(
            phi[0].eval(&[0.3, 0.4]).unwrap(),
            phi[1].eval(&[0.3, 0.4]).unwrap()
        );
        let flip = section7_phi(4.0, 1.0, -1.0, &t0).unwrap();
        assert!((flip[0].eval(&[0.0, 0.0]).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(
            flip[1].eval(&[0.5, 0.1]).unwrap(),
            -flip[0].eval(&[0.5, 0.1]).unwrap()
        );
        assert!(section7_phi(1.0, 0.0, 0.0, &t0).is_err());
        assert!(section7_phi(-1.0, 1.0, 0.0, &t0).is_err());
    }

    #[test]
    fn extended_functional_matches_arctan_form() {
        let sys = demos::system_section7().unwrap();
        let cfg = GramianConfig {
            propagator: PropagatorConfig::new(1024, 1024).unwrap(),
            sigma_tol: crate::SIGMA_TOL,
        };
        let curve = seg(&[0.0, 0.0], &[1.0, 1.0]);
        let (a, b) = (1.0, 2.0);
        let x0 = DVector::from_column_slice(&[a, b]);
        for q in [1.0, 10.0] {
            let phi = section7_phi(q, a, b, &mt(&[0.0, 0.0])).unwrap();
            let j = extended_functional(&sys, &curve, &x0, &phi, &cfg).unwrap();
            let oracle = (a + b).powi(2) * (2.0 * q).atan() - 2.0 * (a + b).powi(2) * q.sqrt();
            assert!((j - oracle).abs() < 1e-6, "q={q}: {j} vs {oracle}");
        }
    }

    #[test]
    fn extended_functional_extends_dual() {
        // Constant phi = v reproduces the dual functional when chi = I.
        let sys = demos::system_section7().unwrap();
        let cfg = GramianConfig::default();
        let curve = seg(&[0.0, 0.0], &[1.0, 1.0]);
        let x0 = DVector::from_column_slice(&[1.0, 2.0]);
        let v = DVector::from_column_slice(&[0.7, -0.4]);
        let phi = vec![Expr::constant(v[0]), Expr::constant(v[1])];
        let j = extended_functional(&sys, &curve, &x0, &phi, &cfg).unwrap();
        let dual = functional_value_dual(&sys, &curve, &x0, &v, &cfg.propagator).unwrap();
        assert!((j - dual).abs() < 1e-10);
    }
}
