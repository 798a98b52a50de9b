//! Composite Gauss-Legendre quadrature (order 5 per panel).

use crate::curve::PiecewiseCurve;

/// Order-5 Gauss-Legendre nodes and weights on [-1, 1].
pub fn gl5() -> ([f64; 5], [f64; 5]) {
    let a = (5.0 - 2.0 * (10.0f64 / 7.0).sqrt()).sqrt() / 3.0;
    let b = (5.0 + 2.0 * (10.0f64 / 7.0).sqrt()).sqrt() / 3.0;
    let wa = (322.0 + 13.0 * 70.0f64.sqrt()) / 900.0;
    let wb = (322.0 - 13.0 * 70.0f64.sqrt()) / 900.0;
    ([-b, -a, 0.0, a, b], [wb, wa, 128.0 / 225.0, wa, wb])
}

/// Quadrature nodes `(tau, weight)` over [lo, hi] with `panels` panels.
pub fn panel_nodes(lo: f64, hi: f64, panels: usize) -> Vec<(f64, f64)> {
    let (xs, ws) = gl5();
    let h = (hi - lo) / panels as f64;
    let mut out = Vec::with_capacity(5 * panels);
    for p in 0..panels {
        let a = lo + p as f64 * h;
        let mid = a + 0.5 * h;
        let half = 0.5 * h;
        for i in 0..5 {
            out.push((mid + half * xs[i], half * ws[i]));
        }
    }
    out
}

/// Nodes over a curve's parameter range, `panels_per_segment` panels per
/// curve segment. Nodes are strictly interior to panels, so segment
/// breakpoints (where the velocity may jump) are never sampled.
pub fn curve_nodes(curve: &PiecewiseCurve, panels_per_segment: usize) -> Vec<(f64, f64)> {
    let bps = curve.breakpoints();
    let mut out = Vec::new();
    for seg in 0..curve.segment_count() {
        out.extend(panel_nodes(bps[seg], bps[seg + 1], panels_per_segment));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_interval_length() {
        let total: f64 = panel_nodes(0.0, 3.0, 7).iter().map(|(_, w)| w).sum();
        assert!((total - 3.0).abs() < 1e-13);
    }

    #[test]
    fn exact_on_degree_nine_polynomial() {
        // GL5 integrates polynomials up to degree 9 exactly.
        let val: f64 = panel_nodes(0.0, 1.0, 1)
            .iter()
            .map(|(x, w)| w * x.powi(9))
            .sum();
        assert!((val - 0.1).abs() < 1e-14);
    }

    #[test]
    fn composite_converges_on_transcendental() {
        let f = |x: f64| (3.0 * x).sin();
        let exact = (1.0 - (3.0f64).cos()) / 3.0;
        let approx: f64 = panel_nodes(0.0, 1.0, 4).iter().map(|(x, w)| w * f(*x)).sum();
        assert!((approx - exact).abs() < 1e-12);
    }
}
