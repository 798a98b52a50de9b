//! Fundamental matrix propagation and Cauchy solution simulation.
//!
//! The flow Y(tau) = chi(gamma(tau), t0) is integrated once per curve with
//! fixed-step RK4 on dX/dtau = (sum_a M_a(gamma(tau)) gammadot^a(tau)) X.
//! Interior values chi(t0, s) are reconstructed as Y(tau)^-1 from the stored
//! grid via cubic Hermite interpolation, so curvilinear integrals cost one
//! n x n inverse per quadrature node instead of one integration.

use nalgebra::{DMatrix, DVector};

use crate::curve::{Multitime, PiecewiseCurve};
use crate::error::{Error, Result};
use crate::expr::MatrixExpr;
use crate::quadrature;
use crate::system::MultitimeSystem;

#[derive(Debug, Clone, Copy)]
pub struct PropagatorConfig {
    pub steps_per_segment: usize,
    pub panels_per_segment: usize,
}

impl Default for PropagatorConfig {
    fn default() -> Self {
        PropagatorConfig {
            steps_per_segment: 256,
            panels_per_segment: 64,
        }
    }
}

impl PropagatorConfig {
    /// `steps_per_segment` must be a positive multiple of
    /// `panels_per_segment` so quadrature nodes reuse the ODE grid.
    pub fn new(steps_per_segment: usize, panels_per_segment: usize) -> Result<PropagatorConfig> {
        if steps_per_segment == 0 || panels_per_segment == 0 {
            return Err(Error::Config("steps and panels must be positive".into()));
        }
        if steps_per_segment % panels_per_segment != 0 {
            return Err(Error::Config(format!(
                "steps_per_segment ({steps_per_segment}) must be a multiple of panels_per_segment ({panels_per_segment})"
            )));
        }
        Ok(PropagatorConfig {
            steps_per_segment,
            panels_per_segment,
        })
    }

    pub fn from_system(sys: &MultitimeSystem) -> Result<PropagatorConfig> {
        let d = PropagatorConfig::default();
        PropagatorConfig::new(
            sys.defaults.steps_per_segment.unwrap_or(d.steps_per_segment),
            sys.defaults.panels_per_segment.unwrap_or(d.panels_per_segment),
        )
    }
}

/// A multitime together with a state vector.
#[derive(Debug, Clone)]
pub struct Phase {
    pub t: Multitime,
    pub x: DVector<f64>,
}

struct SegmentGrid {
    tau0: f64,
    tau1: f64,
    ys: Vec<DMatrix<f64>>,
    dys: Vec<DMatrix<f64>>,
}

/// Dense output of one forward flow solve along a curve.
pub struct DenseFlow {
    segments: Vec<SegmentGrid>,
}

impl DenseFlow {
    /// Y at the end of the curve, i.e. chi(t, t0).
    pub fn endpoint(&self) -> &DMatrix<f64> {
        let seg = self.segments.last().expect("flow has at least one segment");
        seg.ys.last().expect("segment has at least one grid point")
    }

    /// Cubic Hermite interpolation of Y(tau) from the RK4 grid.
    pub fn eval(&self, tau: f64) -> DMatrix<f64> {
        let seg = self
            .segments
            .iter()
            .find(|s| tau <= s.tau1)
            .unwrap_or_else(|| self.segments.last().unwrap());
        let steps = seg.ys.len() - 1;
        let h = (seg.tau1 - seg.tau0) / steps as f64;
        let raw = ((tau - seg.tau0) / h).floor();
        let i = (raw.max(0.0) as usize).min(steps.saturating_sub(1));
        let s = ((tau - seg.tau0) - i as f64 * h) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        &seg.ys[i] * h00
            + &seg.dys[i] * (h10 * h)
            + &seg.ys[i + 1] * h01
            + &seg.dys[i + 1] * (h11 * h)
    }
}

fn direction_matrix(
    sys: &MultitimeSystem,
    curve: &PiecewiseCurve,
    seg: usize,
    tau: f64,
) -> Result<DMatrix<f64>> {
    let s = curve.point(tau);
    if !sys.domain.contains(&s) {
        return Err(Error::Domain(format!(
            "{}: curve point {s:?} at tau = {tau} leaves D = {}",
            curve.describe(),
            sys.domain.describe()
        )));
    }
    let vel = curve.segment_velocity(seg, tau);
    let mut a = DMatrix::zeros(sys.n, sys.n);
    for alpha in 0..sys.m {
        if vel[alpha] != 0.0 && !sys.coeff_m[alpha].is_zero() {
            a += sys.coeff_m[alpha].eval(&s)? * vel[alpha];
        }
    }
    Ok(a)
}

/// Integrate Y(tau) = chi(gamma(tau), gamma(0)) along the curve.
pub fn propagate_flow(
    sys: &MultitimeSystem,
    curve: &PiecewiseCurve,
    cfg: &PropagatorConfig,
) -> Result<DenseFlow> {
    if curve.dim() != sys.m {
        return Err(Error::Dimension(format!(
            "curve in dimension {} for a system with m = {}",
            curve.dim(),
            sys.m
        )));
    }
    let n = sys.n;
    let bps = curve.breakpoints().to_vec();
    let mut y = DMatrix::identity(n, n);
    let mut segments = Vec::with_capacity(curve.segment_count());
    for seg in 0..curve.segment_count() {
        let (tau0, tau1) = (bps[seg], bps[seg + 1]);
        let steps = cfg.steps_per_segment;
        let h = (tau1 - tau0) / steps as f64;
        let mut ys = Vec::with_capacity(steps + 1);
        let mut dys = Vec::with_capacity(steps + 1);
        let mut a_here = direction_matrix(sys, curve, seg, tau0)?;
        ys.push(y.clone());
        dys.push(&a_here * &y);
        for i in 0..steps {
            let tau = tau0 + i as f64 * h;
            let a_mid = direction_matrix(sys, curve, seg, tau + 0.5 * h)?;
            let a_next = direction_matrix(sys, curve, seg, tau + h)?;
            let k1 = &a_here * &y;
            let k2 = &a_mid * (&y + &k1 * (0.5 * h));
            let k3 = &a_mid * (&y + &k2 * (0.5 * h));
            let k4 = &a_next * (&y + &k3 * h);
            y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::Eval {
                    point: curve.point(tau + h),
                    msg: "fundamental matrix integration produced non-finite values".into(),
                });
            }
            a_here = a_next;
            ys.push(y.clone());
            dys.push(&a_here * &y);
        }
        segments.push(SegmentGrid {
            tau0,
            tau1,
            ys,
            dys,
        });
    }
    Ok(DenseFlow { segments })
}

/// chi(t, s) for the curve's endpoints s = gamma(0), t = gamma(1).
pub fn fundamental_matrix(
    sys: &MultitimeSystem,
    curve: &PiecewiseCurve,
    cfg: &PropagatorConfig,
) -> Result<DMatrix<f64>> {
    Ok(propagate_flow(sys, curve, cfg)?.endpoint().clone())
}

fn segment_between(a: &Multitime, b: &Multitime) -> Result<PiecewiseCurve> {
    PiecewiseCurve::segment(a.clone(), b.clone())
}

/// Flow-composition defect ||chi(t,s) chi(s,r) - chi(t,r)||_inf via three
/// straight-segment propagations.
pub fn compose_check(
    sys: &MultitimeSystem,
    r: &Multitime,
    s: &Multitime,
    t: &Multitime,
    cfg: &PropagatorConfig,
) -> Result<f64> {
    let chi_sr = fundamental_matrix(sys, &segment_between(r, s)?, cfg)?;
    let chi_ts = fundamental_matrix(sys, &segment_between(s, t)?, cfg)?;
    let chi_tr = fundamental_matrix(sys, &segment_between(r, t)?, cfg)?;
    let defect = chi_ts * chi_sr - chi_tr;
    Ok(defect.iter().fold(0.0f64, |m, &v| m.max(v.abs())))
}

/// A control family evaluated along a curve. The adjoint factor
/// chi(t0, s)^T is supplied by the propagator at each quadrature node.
pub trait ControlLaw {
    fn eval(&self, alpha: usize, s: &[f64], chi_t0_s: &DMatrix<f64>) -> Result<DVector<f64>>;
    fn describe(&self) -> String;
}

/// Control given by m expression matrices of shape k x 1.
pub struct ExprControl(pub Vec<MatrixExpr>);

impl ControlLaw for ExprControl {
    fn eval(&self, alpha: usize, s: &[f64], _chi: &DMatrix<f64>) -> Result<DVector<f64>> {
        let v = self.0[alpha].eval(s)?;
        Ok(DVector::from_column_slice(v.as_slice()))
    }

    fn describe(&self) -> String {
        "expression control".into()
    }
}

fn invert_flow_value(y: &DMatrix<f64>, tau: f64) -> Result<DMatrix<f64>> {
    y.clone().try_inverse().ok_or_else(|| {
        Error::Singular(format!(
            "flow matrix not invertible at tau = {tau}; integration blow-up"
        ))
    })
}

/// One quadrature node along a curve, with chi(t0, s) reconstructed from
/// the dense flow.
pub struct FlowNode {
    pub tau: f64,
    pub weight: f64,
    pub point: Vec<f64>,
    pub velocity: Vec<f64>,
    /// chi(t0, gamma(tau)) = Y(tau)^-1.
    pub chi_t0_s: DMatrix<f64>,
}

/// Quadrature nodes paired with the flow data needed for curvilinear
/// integrands of the form chi(t0,s) N_a(s) (...) gammadot^a.
pub fn flow_nodes(
    curve: &PiecewiseCurve,
    flow: &DenseFlow,
    panels_per_segment: usize,
) -> Result<Vec<FlowNode>> {
    quadrature::curve_nodes(curve, panels_per_segment)
        .into_iter()
        .map(|(tau, weight)| {
            let y = flow.eval(tau);
            Ok(FlowNode {
                tau,
                weight,
                point: curve.point(tau),
                velocity: curve.velocity(tau),
                chi_t0_s: invert_flow_value(&y, tau)?,
            })
        })
        .collect()
}

/// Simulate the Cauchy solution x(t) = chi(t,t0) x0 + int chi(t,s) N_a u_a ds^a
/// along the given curve starting at `phase0`.
pub fn solve_state(
    sys: &MultitimeSystem,
    control: &dyn ControlLaw,
    phase0: &Phase,
    curve: &PiecewiseCurve,
    cfg: &PropagatorConfig,
) -> Result<DVector<f64>> {
    let start = curve.start();
    if start
        .iter()
        .zip(phase0.t.iter())
        .any(|(a, b)| (a - b).abs() > 1e-12)
    {
        return Err(Error::Config(format!(
            "curve starts at {:?}, phase at {:?}",
            start.as_slice(),
            phase0.t.as_slice()
        )));
    }
    let flow = propagate_flow(sys, curve, cfg)?;
    // Accumulate z = x0 + int chi(t0,s) N_a u_a ds^a, then push through
    // chi(t,t0): chi(t,s) = chi(t,t0) chi(t0,s).
    let mut z = phase0.x.clone();
    for node in flow_nodes(curve, &flow, cfg.panels_per_segment)? {
        let mut contrib = DVector::zeros(sys.n);
        for alpha in 0..sys.m {
            let vel = node.velocity[alpha];
            if vel == 0.0 || sys.coeff_n[alpha].is_zero() {
                continue;
            }
            let u = control.eval(alpha, &node.point, &node.chi_t0_s)?;
            if u.len() != sys.k {
                return Err(Error::Dimension(format!(
                    "control component {} has length {}, expected k = {}",
                    alpha + 1,
                    u.len(),
                    sys.k
                )));
            }
            let n_here = sys.coeff_n[alpha].eval(&node.point)?;
            contrib += &node.chi_t0_s * (n_here * u) * vel;
        }
        z += contrib * node.weight;
    }
    Ok(flow.endpoint() * z)
}
