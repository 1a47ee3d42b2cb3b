//! The exact planar rarefaction wave between the two constant states, the
//! patch corner points, and characteristic tracing in the self-similar plane.

use crate::error::{Result, SolverError};
use crate::fields::{CartField, PolarField, RtStateField};
use crate::state::{CartPoint, PatchState};

/// Constant states on either side of the planar wave, p1 < p4 < 0.
#[derive(Clone, Copy, Debug)]
pub struct WaveParams {
    pub p1: f64,
    pub p4: f64,
    /// Proxy for the closeness hypothesis: reported (not enforced) when
    /// |p4 - p1| > kappa * |p1|.
    pub kappa: f64,
}

impl WaveParams {
    pub fn new(p1: f64, p4: f64) -> Result<Self> {
        Self::with_kappa(p1, p4, 0.5)
    }

    pub fn with_kappa(p1: f64, p4: f64, kappa: f64) -> Result<Self> {
        if !(p1 < p4 && p4 < 0.0) {
            return Err(SolverError::Domain(format!(
                "wave requires p1 < p4 < 0, got p1={p1}, p4={p4}"
            )));
        }
        Ok(Self { p1, p4, kappa })
    }

    pub fn closeness_ok(&self) -> bool {
        (self.p4 - self.p1).abs() <= self.kappa * self.p1.abs()
    }

    /// Angle of the lower corner B: sin^2(theta_B) = p4/p1.
    pub fn theta_b(&self) -> f64 {
        (self.p4 / self.p1).sqrt().asin()
    }

    /// Upper corner A = (0, -p1), a sonic point of the wave.
    pub fn point_a(&self) -> CartPoint {
        CartPoint::new(0.0, -self.p1)
    }

    /// Lower corner B: intersection of the boundary characteristic circle
    /// xi^2 + eta^2 = -p1 eta with the strip edge eta = -p4.
    pub fn point_b(&self) -> CartPoint {
        CartPoint::new((self.p4 * (self.p1 - self.p4)).sqrt(), -self.p4)
    }

    /// Radius of the boundary characteristic at angle theta: r = -p1 sin(theta).
    pub fn ab_radius(&self, theta: f64) -> f64 {
        -self.p1 * theta.sin()
    }
}

/// Wave state (p, m, n): p = -eta, m = 0, n = ln(p4/p).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WaveState {
    pub p: f64,
    pub m: f64,
    pub n: f64,
}

/// Exact wave state at a point of the strip -p4 <= eta <= -p1.
pub fn wave_state(pt: CartPoint, w: &WaveParams) -> Result<WaveState> {
    let tol = 1e-12 * w.p1.abs();
    if pt.eta < -w.p4 - tol || pt.eta > -w.p1 + tol {
        return Err(SolverError::Domain(format!(
            "point eta={} outside the wave strip [{}, {}]",
            pt.eta, -w.p4, -w.p1
        )));
    }
    let p = -pt.eta;
    Ok(WaveState {
        p,
        m: 0.0,
        n: (w.p4 / p).ln(),
    })
}

/// Data carried by the wave along the boundary characteristic AB:
/// p = p1 sin^2(theta), dp_plus = p1 sin(2 theta), dp_minus = 0.
pub fn wave_rs(theta: f64, w: &WaveParams) -> Result<PatchState> {
    let tb = w.theta_b();
    let tol = 1e-12;
    if theta < tb - tol || theta > std::f64::consts::FRAC_PI_2 + tol {
        return Err(SolverError::Domain(format!(
            "theta={theta} outside the AB range [{tb}, pi/2]"
        )));
    }
    let s = theta.sin();
    Ok(PatchState::new(
        w.p1 * s * s,
        w.p1 * (2.0 * theta).sin(),
        0.0,
    ))
}

/// The wave as field providers: p = -eta in Cartesian, p = -r sin(theta) in
/// polar, and the closed (r, t) form of the directional derivatives,
/// dp_plus = -2 t sqrt(2r - t^2), dp_minus = 0.
#[derive(Clone, Copy, Debug)]
pub struct WaveField;

impl CartField for WaveField {
    fn p(&self, pt: CartPoint) -> f64 {
        -pt.eta
    }
}

impl PolarField for WaveField {
    fn p(&self, r: f64, theta: f64) -> f64 {
        -r * theta.sin()
    }
}

impl RtStateField for WaveField {
    fn states(&self, r: f64, t: f64) -> (f64, f64) {
        (-2.0 * t * (2.0 * r - t * t).sqrt(), 0.0)
    }
}

/// Characteristic family label in the self-similar plane. The positive family
/// is the one containing the boundary circle through A; inside the wave the
/// negative family consists of the lines eta = const.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    Plus,
    Minus,
}

#[derive(Clone, Copy, Debug)]
pub struct TraceOptions {
    /// Fixed RK4 step in the arc parameter.
    pub step: f64,
    pub max_steps: usize,
    /// Terminate when r + p falls below this.
    pub sonic_stop: f64,
    /// Terminate on leaving eta in [lo, hi]; the final point is cut to the edge.
    pub eta_range: Option<(f64, f64)>,
    /// Accept a start on the sonic locus (tangency direction is well defined
    /// when the discriminant vanishes).
    pub allow_sonic_start: bool,
    /// Orientation hint for the first step.
    pub initial_dir: (f64, f64),
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self {
            step: 1e-3,
            max_steps: 200_000,
            sonic_stop: 1e-10,
            eta_range: None,
            allow_sonic_start: false,
            initial_dir: (1.0, 0.0),
        }
    }
}

/// Unit characteristic direction at a point, oriented to keep a nonnegative
/// dot product with `prev`.
///
/// The slopes solve (xi^2 - p^2) m^2 - 2 xi eta m + (eta^2 - p^2) = 0, so each
/// family has two homogeneous representations,
///   (dxi, deta) ~ (xi^2 - p^2, xi eta +/- root)
///   (dxi, deta) ~ (xi eta -/+ root, eta^2 - p^2),
/// with root = sqrt(p^2 (xi^2 + eta^2 - p^2)). Either one can degenerate to
/// (0,0) (e.g. the minus family at xi^2 = p^2); the larger-norm one is used.
fn char_direction(
    pt: CartPoint,
    p: f64,
    family: Family,
    prev: (f64, f64),
    allow_sonic: bool,
) -> Result<(f64, f64)> {
    let r2 = pt.xi * pt.xi + pt.eta * pt.eta;
    let disc = p * p * (r2 - p * p);
    let scale = (p * p).max(r2);
    if disc < -1e-13 * scale * scale {
        return Err(SolverError::Domain(format!(
            "elliptic point (xi={}, eta={}): r^2 - p^2 = {:.3e}",
            pt.xi,
            pt.eta,
            r2 - p * p
        )));
    }
    let sonic = disc <= 1e-13 * scale * scale;
    if sonic && !allow_sonic {
        return Err(SolverError::Sonic(format!(
            "characteristic start on the sonic locus at (xi={}, eta={})",
            pt.xi, pt.eta
        )));
    }
    let root = disc.max(0.0).sqrt();
    let sign = match family {
        Family::Plus => 1.0,
        Family::Minus => -1.0,
    };
    let rep1 = (pt.xi * pt.xi - p * p, pt.xi * pt.eta + sign * root);
    let rep2 = (pt.xi * pt.eta - sign * root, pt.eta * pt.eta - p * p);
    let (vx, vy) = if rep1.0.hypot(rep1.1) >= rep2.0.hypot(rep2.1) {
        rep1
    } else {
        rep2
    };
    let norm = vx.hypot(vy);
    if norm == 0.0 {
        return Err(SolverError::Sonic(format!(
            "degenerate characteristic direction at (xi={}, eta={})",
            pt.xi, pt.eta
        )));
    }
    let mut dir = (vx / norm, vy / norm);
    if dir.0 * prev.0 + dir.1 * prev.1 < 0.0 {
        dir = (-dir.0, -dir.1);
    }
    Ok(dir)
}

/// Fixed-step RK4 trace of one characteristic of the pressure field,
/// with one adaptive halving pass once r + p drops below 1e-2.
pub fn characteristic_trace(
    start: CartPoint,
    family: Family,
    field: &dyn CartField,
    opts: &TraceOptions,
) -> Result<Vec<CartPoint>> {
    let mut pts = Vec::with_capacity(1024);
    let mut cur = start;
    let mut dir = opts.initial_dir;

    // Validate the start; an off-sonic-circle start must be hyperbolic.
    char_direction(cur, field.p(cur), family, dir, opts.allow_sonic_start)?;
    pts.push(cur);

    for step_idx in 0..opts.max_steps {
        let sonic_proximity = cur.radius() + field.p(cur);
        if step_idx > 0 && sonic_proximity < opts.sonic_stop {
            return Ok(pts);
        }
        // Adaptive halving near the sonic curve keeps the last cells accurate.
        let h = if sonic_proximity < 1e-2 {
            0.5 * opts.step
        } else {
            opts.step
        };
        let allow = opts.allow_sonic_start && step_idx == 0;

        let d1 = char_direction(cur, field.p(cur), family, dir, allow)?;
        let m1 = CartPoint::new(cur.xi + 0.5 * h * d1.0, cur.eta + 0.5 * h * d1.1);
        let d2 = char_direction(m1, field.p(m1), family, d1, allow)?;
        let m2 = CartPoint::new(cur.xi + 0.5 * h * d2.0, cur.eta + 0.5 * h * d2.1);
        let d3 = char_direction(m2, field.p(m2), family, d2, allow)?;
        let m3 = CartPoint::new(cur.xi + h * d3.0, cur.eta + h * d3.1);
        let d4 = char_direction(m3, field.p(m3), family, d3, allow)?;

        let next = CartPoint::new(
            cur.xi + h / 6.0 * (d1.0 + 2.0 * d2.0 + 2.0 * d3.0 + d4.0),
            cur.eta + h / 6.0 * (d1.1 + 2.0 * d2.1 + 2.0 * d3.1 + d4.1),
        );

        if let Some((lo, hi)) = opts.eta_range {
            let crossed = if next.eta < lo {
                Some(lo)
            } else if next.eta > hi {
                Some(hi)
            } else {
                None
            };
            if let Some(edge) = crossed {
                let w = (edge - cur.eta) / (next.eta - cur.eta);
                pts.push(CartPoint::new(cur.xi + w * (next.xi - cur.xi), edge));
                return Ok(pts);
            }
        }

        dir = d1;
        cur = next;
        pts.push(cur);
    }
    Err(SolverError::StepBudget(opts.max_steps))
}

/// Trace the boundary characteristic AB from the sonic corner A down to the
/// strip edge eta = -p4; the terminal point approximates B.
pub fn trace_ab(w: &WaveParams, step: f64) -> Result<Vec<CartPoint>> {
    let opts = TraceOptions {
        step,
        eta_range: Some((-w.p4, -w.p1)),
        allow_sonic_start: true,
        initial_dir: (1.0, 0.0),
        ..TraceOptions::default()
    };
    characteristic_trace(w.point_a(), Family::Plus, &WaveField, &opts)
}

/// Trace the negative characteristic from B into the wave (a line eta = -p4),
/// stopping near the sonic locus.
pub fn trace_minus_from_b(w: &WaveParams, step: f64) -> Result<Vec<CartPoint>> {
    let opts = TraceOptions {
        step,
        sonic_stop: 1e-4,
        allow_sonic_start: false,
        initial_dir: (-1.0, 0.0),
        ..TraceOptions::default()
    };
    characteristic_trace(w.point_b(), Family::Minus, &WaveField, &opts)
}
