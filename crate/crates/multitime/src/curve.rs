//! Piecewise-C1 curves in multitime space.
//!
//! Increasing and decreasing curves are strictly monotone in every axis whose
//! endpoints differ and constant in the others. Monotone curves are built
//! from per-axis reparameterization profiles h(u) = (1-w)u + w*u^p.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A point t = (t1, ..., tm) in multitime space.
#[derive(Debug, Clone, PartialEq)]
pub struct Multitime(Vec<f64>);

impl Multitime {
    pub fn new(components: Vec<f64>) -> Result<Multitime> {
        if components.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config(format!(
                "multitime components must be finite, got {components:?}"
            )));
        }
        Ok(Multitime(components))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Deref for Multitime {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Multitime {
    fn from(v: Vec<f64>) -> Multitime {
        Multitime(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Increasing,
    Decreasing,
}

/// Per-axis strictly increasing profile h(u) = (1-w)u + w*u^p on [0,1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Profile {
    pub w: f64,
    pub p: f64,
}

impl Profile {
    pub const IDENTITY: Profile = Profile { w: 0.0, p: 1.0 };

    pub fn new(w: f64, p: f64) -> Result<Profile> {
        if !(0.0..=1.0).contains(&w) || p <= 0.0 {
            return Err(Error::Config(format!(
                "profile requires w in [0,1] and p > 0, got w={w}, p={p}"
            )));
        }
        Ok(Profile { w, p })
    }

    pub fn value(&self, u: f64) -> f64 {
        (1.0 - self.w) * u + self.w * u.powf(self.p)
    }

    pub fn derivative(&self, u: f64) -> f64 {
        // For p < 1 the derivative blows up at u = 0; evaluate one-sided a
        // hair inside so the result stays finite.
        let u = if self.p < 1.0 { u.max(1e-9) } else { u };
        (1.0 - self.w) + self.w * self.p * u.powf(self.p - 1.0)
    }
}

#[derive(Debug, Clone)]
enum CurveKind {
    Line,
    Monotone { profiles: Vec<Profile> },
    Staircase,
    Reversed(Box<PiecewiseCurve>),
}

/// Piecewise-C1 curve on [0,1] with endpoints t0 = gamma(0), t = gamma(1).
#[derive(Debug, Clone)]
pub struct PiecewiseCurve {
    from: Multitime,
    to: Multitime,
    breakpoints: Vec<f64>,
    kind: CurveKind,
}

fn orderable_direction(t0: &[f64], t: &[f64]) -> Result<Direction> {
    let any_up = t0.iter().zip(t).any(|(a, b)| b > a);
    let any_down = t0.iter().zip(t).any(|(a, b)| b < a);
    if any_up && any_down {
        return Err(Error::NotOrderable(format!(
            "endpoints {t0:?} and {t:?} are not componentwise ordered"
        )));
    }
    if any_down {
        Ok(Direction::Decreasing)
    } else {
        Ok(Direction::Increasing)
    }
}

impl PiecewiseCurve {
    /// Straight segment gamma(tau) = (1-tau) t0 + tau t.
    pub fn segment(t0: Multitime, t: Multitime) -> Result<PiecewiseCurve> {
        check_dims(&t0, &t)?;
        Ok(PiecewiseCurve {
            from: t0,
            to: t,
            breakpoints: vec![0.0, 1.0],
            kind: CurveKind::Line,
        })
    }

    /// Monotone curve gamma^a(tau) = t0^a + (t^a - t0^a) h_a(tau).
    ///
    /// Endpoints must be componentwise ordered in one direction.
    pub fn monotone(t0: Multitime, t: Multitime, profiles: Vec<Profile>) -> Result<PiecewiseCurve> {
        check_dims(&t0, &t)?;
        orderable_direction(&t0, &t)?;
        if profiles.len() != t0.dim() {
            return Err(Error::Dimension(format!(
                "{} profiles for a {}-dimensional curve",
                profiles.len(),
                t0.dim()
            )));
        }
        Ok(PiecewiseCurve {
            from: t0,
            to: t,
            breakpoints: vec![0.0, 1.0],
            kind: CurveKind::Monotone { profiles },
        })
    }

    /// Axis-by-axis staircase: moves axis 1 first, then axis 2, etc.
    ///
    /// Used for path-independence testing; it is not an increasing curve in
    /// the strict sense whenever more than one axis is non-degenerate.
    pub fn staircase(t0: Multitime, t: Multitime) -> Result<PiecewiseCurve> {
        check_dims(&t0, &t)?;
        let m = t0.dim();
        let breakpoints = (0..=m).map(|j| j as f64 / m as f64).collect();
        Ok(PiecewiseCurve {
            from: t0,
            to: t,
            breakpoints,
            kind: CurveKind::Staircase,
        })
    }

    /// Reversal gamma^-(tau) = gamma(1 - tau); swaps the endpoints.
    pub fn reverse(&self) -> PiecewiseCurve {
        if let CurveKind::Reversed(inner) = &self.kind {
            return (**inner).clone();
        }
        let mut breakpoints: Vec<f64> = self.breakpoints.iter().map(|b| 1.0 - b).collect();
        breakpoints.reverse();
        PiecewiseCurve {
            from: self.to.clone(),
            to: self.from.clone(),
            breakpoints,
            kind: CurveKind::Reversed(Box::new(self.clone())),
        }
    }

    pub fn dim(&self) -> usize {
        self.from.dim()
    }

    pub fn start(&self) -> &Multitime {
        &self.from
    }

    pub fn end(&self) -> &Multitime {
        &self.to
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn segment_count(&self) -> usize {
        self.breakpoints.len() - 1
    }

    pub fn point(&self, tau: f64) -> Vec<f64> {
        match &self.kind {
            CurveKind::Line => self
                .from
                .iter()
                .zip(self.to.iter())
                .map(|(a, b)| a + tau * (b - a))
                .collect(),
            CurveKind::Monotone { profiles } => self
                .from
                .iter()
                .zip(self.to.iter())
                .zip(profiles)
                .map(|((a, b), h)| a + (b - a) * h.value(tau))
                .collect(),
            CurveKind::Staircase => {
                let m = self.dim();
                let scaled = (tau * m as f64).clamp(0.0, m as f64);
                let mut out: Vec<f64> = self.from.to_vec();
                for alpha in 0..m {
                    let local = (scaled - alpha as f64).clamp(0.0, 1.0);
                    out[alpha] += local * (self.to[alpha] - self.from[alpha]);
                }
                out
            }
            CurveKind::Reversed(inner) => inner.point(1.0 - tau),
        }
    }

    /// Velocity on the segment containing `tau` (ties resolve rightward
    /// except at tau = 1).
    pub fn velocity(&self, tau: f64) -> Vec<f64> {
        let seg = self.segment_index(tau);
        self.segment_velocity(seg, tau)
    }

    pub fn segment_index(&self, tau: f64) -> usize {
        let q = self.segment_count();
        for j in 0..q {
            if tau < self.breakpoints[j + 1] {
                return j;
            }
        }
        q - 1
    }

    /// Velocity evaluated with segment `seg`'s one-sided convention.
    pub fn segment_velocity(&self, seg: usize, tau: f64) -> Vec<f64> {
        match &self.kind {
            CurveKind::Line => self.from.iter().zip(self.to.iter()).map(|(a, b)| b - a).collect(),
            CurveKind::Monotone { profiles } => self
                .from
                .iter()
                .zip(self.to.iter())
                .zip(profiles)
                .map(|((a, b), h)| (b - a) * h.derivative(tau))
                .collect(),
            CurveKind::Staircase => {
                let m = self.dim();
                let mut out = vec![0.0; m];
                out[seg] = m as f64 * (self.to[seg] - self.from[seg]);
                out
            }
            CurveKind::Reversed(inner) => {
                let inner_seg = inner.segment_count() - 1 - seg;
                inner
                    .segment_velocity(inner_seg, 1.0 - tau)
                    .into_iter()
                    .map(|v| -v)
                    .collect()
            }
        }
    }

    /// Sampling-based monotonicity check per Definition 5 semantics: strict
    /// monotonicity on non-degenerate axes, constancy on degenerate ones.
    pub fn is_monotone(&self, direction: Direction) -> bool {
        const SAMPLES: usize = 512;
        let sign = match direction {
            Direction::Increasing => 1.0,
            Direction::Decreasing => -1.0,
        };
        let m = self.dim();
        let points: Vec<Vec<f64>> = (0..SAMPLES)
            .map(|i| self.point(i as f64 / (SAMPLES - 1) as f64))
            .collect();
        for alpha in 0..m {
            let span = self.to[alpha] - self.from[alpha];
            if span.abs() <= 1e-12 {
                if points.iter().any(|p| (p[alpha] - self.from[alpha]).abs() > 1e-12) {
                    return false;
                }
                continue;
            }
            if span * sign <= 0.0 {
                return false;
            }
            let mut flat = 0usize;
            for w in points.windows(2) {
                let d = (w[1][alpha] - w[0][alpha]) * sign;
                if d < -1e-12 {
                    return false;
                }
                if d <= 1e-12 * span.abs() {
                    flat += 1;
                }
            }
            // Strictness: equality only at isolated sample points.
            if flat > 2 {
                return false;
            }
            // Derivative sign per segment at interior samples.
            for seg in 0..self.segment_count() {
                let (a, b) = (self.breakpoints[seg], self.breakpoints[seg + 1]);
                for i in 0..32 {
                    let tau = a + (b - a) * (i as f64 + 0.5) / 32.0;
                    if self.segment_velocity(seg, tau)[alpha] * sign < -1e-9 {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Short identifier used in gramian reports.
    pub fn describe(&self) -> String {
        let ends = format!("{:?}->{:?}", self.from.as_slice(), self.to.as_slice());
        match &self.kind {
            CurveKind::Line => format!("segment[{ends}]"),
            CurveKind::Monotone { profiles } => {
                let ps: Vec<String> = profiles
                    .iter()
                    .map(|h| format!("(w={:.3},p={})", h.w, h.p))
                    .collect();
                format!("monotone[{ends}; {}]", ps.join(","))
            }
            CurveKind::Staircase => format!("staircase[{ends}]"),
            CurveKind::Reversed(inner) => format!("reversed[{}]", inner.describe()),
        }
    }
}

fn check_dims(t0: &Multitime, t: &Multitime) -> Result<()> {
    if t0.dim() != t.dim() {
        return Err(Error::Dimension(format!(
            "endpoints of dimension {} and {}",
            t0.dim(),
            t.dim()
        )));
    }
    Ok(())
}

const PROFILE_EXPONENTS: [f64; 3] = [0.5, 2.0, 3.0];

/// Deterministic-under-seed family of monotone curves with equal endpoints:
/// the straight segment plus `count` randomized-profile curves. Every member
/// must lie inside the domain (checked by sampling, with resampling).
pub fn monotone_family(
    t0: &Multitime,
    t: &Multitime,
    count: usize,
    seed: u64,
    in_domain: &dyn Fn(&[f64]) -> bool,
) -> Result<Vec<PiecewiseCurve>> {
    orderable_direction(t0, t)?;
    let m = t0.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut family = Vec::with_capacity(count + 1);
    let segment = PiecewiseCurve::segment(t0.clone(), t.clone())?;
    if !curve_in_domain(&segment, in_domain) {
        return Err(Error::Domain(format!(
            "segment from {:?} to {:?} exits the domain",
            t0.as_slice(),
            t.as_slice()
        )));
    }
    family.push(segment);
    for _ in 0..count {
        let mut accepted = None;
        for _ in 0..100 {
            let profiles: Vec<Profile> = (0..m)
                .map(|_| Profile {
                    w: rng.gen::<f64>(),
                    p: PROFILE_EXPONENTS[rng.gen_range(0..PROFILE_EXPONENTS.len())],
                })
                .collect();
            let curve = PiecewiseCurve::monotone(t0.clone(), t.clone(), profiles)?;
            if curve_in_domain(&curve, in_domain) {
                accepted = Some(curve);
                break;
            }
        }
        match accepted {
            Some(curve) => family.push(curve),
            None => {
                return Err(Error::Domain(format!(
                    "could not keep a monotone curve from {:?} to {:?} inside the domain after 100 retries",
                    t0.as_slice(),
                    t.as_slice()
                )))
            }
        }
    }
    Ok(family)
}

fn curve_in_domain(curve: &PiecewiseCurve, in_domain: &dyn Fn(&[f64]) -> bool) -> bool {
    const SAMPLES: usize = 100;
    (0..=SAMPLES).all(|i| in_domain(&curve.point(i as f64 / SAMPLES as f64)))
}
