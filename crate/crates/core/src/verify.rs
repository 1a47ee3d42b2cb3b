//! Independent finite-difference certification of the derived identities, on
//! exact and computed fields.
//!
//! Directional derivatives are taken along locally re-traced characteristic
//! segments, not along grid lines, so they match the characteristic
//! operators exactly. Each check compares an FD left side against the
//! closed-form right side from [`crate::coeffs`]; a `Mutation` can scale one
//! closed-form coefficient to prove the checks would catch a wrong formula.

use serde::Serialize;

use crate::coeffs::{coeff_e_h_f_g, coeff_l1_l2, lambda_inv_polar, lambda_pm, q_polar, rt_sources};
use crate::error::{Result, SolverError};
use crate::fields::{CartField, PolarField, RtStateField};
use crate::interp::lagrange_local;
use crate::rtfield::RtField;
use crate::state::CartPoint;

/// Identities are only checked for t >= SONIC_CHECK_FLOOR * sqrt(r): below
/// that, FD noise dominates the degenerate factors.
pub const SONIC_CHECK_FLOOR: f64 = 1e-4;

// ---------------------------------------------------------------------------
// mutation hooks

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoeffTarget {
    CommutatorH,
    F1,
    F2,
    F3,
    G1,
    G2,
    G3,
    L1,
    L2,
}

pub const ALL_TARGETS: [CoeffTarget; 9] = [
    CoeffTarget::CommutatorH,
    CoeffTarget::F1,
    CoeffTarget::F2,
    CoeffTarget::F3,
    CoeffTarget::G1,
    CoeffTarget::G2,
    CoeffTarget::G3,
    CoeffTarget::L1,
    CoeffTarget::L2,
];

/// Optional 1-coefficient perturbation of the closed-form right sides,
/// used by the regression canaries.
#[derive(Clone, Copy, Debug, Default)]
pub struct Mutation {
    target: Option<(CoeffTarget, f64)>,
}

impl Mutation {
    pub const NONE: Mutation = Mutation { target: None };

    pub fn scale(target: CoeffTarget, factor: f64) -> Self {
        Self {
            target: Some((target, factor)),
        }
    }

    fn factor(&self, t: CoeffTarget) -> f64 {
        match self.target {
            Some((tt, f)) if tt == t => f,
            _ => 1.0,
        }
    }
}

// ---------------------------------------------------------------------------
// residual bookkeeping

#[derive(Clone, Debug, Serialize)]
pub struct ResidualEntry {
    pub identity: String,
    pub location: String,
    pub h: f64,
    pub residual: f64,
    /// observed convergence order; reported only when >= 3 step sizes ran
    pub order: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ResidualReport {
    pub entries: Vec<ResidualEntry>,
}

impl ResidualReport {
    pub fn write_json<W: std::io::Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "identity,location,h,residual,order")?;
        for e in &self.entries {
            writeln!(
                w,
                "{},{},{},{},{}",
                e.identity,
                e.location,
                e.h,
                e.residual,
                e.order.map(|o| o.to_string()).unwrap_or_default()
            )?;
        }
        Ok(())
    }
}

/// Residuals under successive step halvings and the least-squares order of
/// log(residual) against log(h).
#[derive(Clone, Debug)]
pub struct OrderStudy {
    pub hs: Vec<f64>,
    pub residuals: Vec<f64>,
    pub order: f64,
}

pub fn order_study(
    mut eval: impl FnMut(f64) -> Result<f64>,
    h0: f64,
    halvings: usize,
) -> Result<OrderStudy> {
    assert!(halvings >= 2, "order requires at least 3 step sizes");
    let mut hs = Vec::with_capacity(halvings + 1);
    let mut residuals = Vec::with_capacity(halvings + 1);
    let mut h = h0;
    for _ in 0..=halvings {
        hs.push(h);
        residuals.push(eval(h)?.abs().max(1e-300));
        h *= 0.5;
    }
    let xs: Vec<f64> = hs.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = residuals.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(OrderStudy {
        hs,
        residuals,
        order: sxy / sxx,
    })
}

// ---------------------------------------------------------------------------
// second-order PDE residuals

/// FD residual of the self-similar second-order equation at a Cartesian
/// point, centered differences of width h.
pub fn residual_cartesian(field: &dyn CartField, pt: CartPoint, h: f64) -> f64 {
    let p = |xi: f64, eta: f64| field.p(CartPoint::new(xi, eta));
    let (xi, eta) = (pt.xi, pt.eta);
    let p0 = p(xi, eta);
    let p_xi = (p(xi + h, eta) - p(xi - h, eta)) / (2.0 * h);
    let p_eta = (p(xi, eta + h) - p(xi, eta - h)) / (2.0 * h);
    let p_xixi = (p(xi + h, eta) - 2.0 * p0 + p(xi - h, eta)) / (h * h);
    let p_etaeta = (p(xi, eta + h) - 2.0 * p0 + p(xi, eta - h)) / (h * h);
    let p_cross = (p(xi + h, eta + h) - p(xi + h, eta - h) - p(xi - h, eta + h)
        + p(xi - h, eta - h))
        / (4.0 * h * h);
    let radial = xi * p_xi + eta * p_eta;
    (p0 * p0 - xi * xi) * p_xixi - 2.0 * xi * eta * p_cross + (p0 * p0 - eta * eta) * p_etaeta
        + 2.0 / p0 * radial * radial
        - 2.0 * radial
}

/// One Richardson pass over h and h/2, cancelling the h^2 error term.
pub fn residual_cartesian_extrapolated(field: &dyn CartField, pt: CartPoint, h: f64) -> f64 {
    (4.0 * residual_cartesian(field, pt, 0.5 * h) - residual_cartesian(field, pt, h)) / 3.0
}

/// FD residual of the polar form of the second-order equation.
pub fn residual_polar(field: &dyn PolarField, r: f64, theta: f64, h: f64) -> f64 {
    let p0 = field.p(r, theta);
    let p_r = (field.p(r + h, theta) - field.p(r - h, theta)) / (2.0 * h);
    let p_rr = (field.p(r + h, theta) - 2.0 * p0 + field.p(r - h, theta)) / (h * h);
    let p_tt = (field.p(r, theta + h) - 2.0 * p0 + field.p(r, theta - h)) / (h * h);
    (p0 * p0 - r * r) * p_rr + p0 * p0 / (r * r) * p_tt + p0 * p0 / r * p_r
        + 2.0 * r * r / p0 * p_r * p_r
        - 2.0 * r * p_r
}

pub fn residual_polar_extrapolated(field: &dyn PolarField, r: f64, theta: f64, h: f64) -> f64 {
    (4.0 * residual_polar(field, r, theta, 0.5 * h) - residual_polar(field, r, theta, h)) / 3.0
}

// ---------------------------------------------------------------------------
// characteristic-directional derivatives in the polar plane

fn hyperbolicity_guard(r: f64, p: f64) -> Result<()> {
    let t2 = r + p;
    if t2 < SONIC_CHECK_FLOOR * SONIC_CHECK_FLOOR * r {
        return Err(SolverError::Sonic(format!(
            "identity check refused at r+p = {t2:.3e} (floor t >= 1e-4 sqrt(r))"
        )));
    }
    Ok(())
}

/// RK4 trace of the polar characteristic dr/dtheta = sign * lambda_inv from
/// theta to theta + dtheta.
fn trace_polar(
    field: &dyn PolarField,
    r: f64,
    theta: f64,
    sign: f64,
    dtheta: f64,
    substeps: usize,
) -> Result<(f64, f64)> {
    let slope = |r: f64, theta: f64| -> Result<f64> {
        Ok(sign * lambda_inv_polar(r, field.p(r, theta))?)
    };
    let h = dtheta / substeps as f64;
    let mut cr = r;
    let mut ct = theta;
    for _ in 0..substeps {
        let k1 = slope(cr, ct)?;
        let k2 = slope(cr + 0.5 * h * k1, ct + 0.5 * h)?;
        let k3 = slope(cr + 0.5 * h * k2, ct + 0.5 * h)?;
        let k4 = slope(cr + h * k3, ct + h)?;
        cr += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        ct += h;
    }
    Ok((cr, ct))
}

/// Directional derivative of `f` along the +/- characteristic through
/// (r, theta), central over the re-traced segment.
fn directional_fd(
    field: &dyn PolarField,
    r: f64,
    theta: f64,
    sign: f64,
    h: f64,
    f: &dyn Fn(f64, f64) -> f64,
) -> Result<f64> {
    let (r_p, th_p) = trace_polar(field, r, theta, sign, h, 4)?;
    let (r_m, th_m) = trace_polar(field, r, theta, sign, -h, 4)?;
    Ok((f(r_p, th_p) - f(r_m, th_m)) / (2.0 * h))
}

/// Residuals of the characteristic decomposition of the polar equation:
///   d+ d- p - Q (d+p - d-p) d-p   and   d- d+ p - Q (d-p - d+p) d+p,
/// with all directional derivatives taken by FD along re-traced
/// characteristics.
pub fn decomposition_residuals(
    field: &dyn PolarField,
    r: f64,
    theta: f64,
    h: f64,
) -> Result<(f64, f64)> {
    let p0 = field.p(r, theta);
    hyperbolicity_guard(r, p0)?;
    let q = q_polar(r, p0)?;

    let pf = |rr: f64, tt: f64| field.p(rr, tt);
    let dp_plus = directional_fd(field, r, theta, 1.0, h, &pf)?;
    let dp_minus = directional_fd(field, r, theta, -1.0, h, &pf)?;

    // nested derivatives: the inner directional derivative as a field
    let inner_minus = |rr: f64, tt: f64| -> f64 {
        directional_fd(field, rr, tt, -1.0, h, &pf).unwrap_or(f64::NAN)
    };
    let inner_plus = |rr: f64, tt: f64| -> f64 {
        directional_fd(field, rr, tt, 1.0, h, &pf).unwrap_or(f64::NAN)
    };
    let d_plus_d_minus = directional_fd(field, r, theta, 1.0, h, &inner_minus)?;
    let d_minus_d_plus = directional_fd(field, r, theta, -1.0, h, &inner_plus)?;

    let res1 = d_plus_d_minus - q * (dp_plus - dp_minus) * dp_minus;
    let res2 = d_minus_d_plus - q * (dp_minus - dp_plus) * dp_plus;
    Ok((res1, res2))
}

// ---------------------------------------------------------------------------
// (r, t)-plane checks

/// RK4 trace of the (r,t)-plane characteristic dr/dt = Lambda_{plus|minus}
/// from t to t + dt.
fn trace_rt(
    states: &dyn RtStateField,
    r: f64,
    t: f64,
    plus_family: bool,
    dt: f64,
    substeps: usize,
) -> Result<(f64, f64)> {
    let slope = |r: f64, t: f64| -> Result<f64> {
        let (rp, sm) = states.states(r, t);
        let (lp, lm) = lambda_pm(r, t, rp, sm)?;
        Ok(if plus_family { lp } else { lm })
    };
    let h = dt / substeps as f64;
    let mut cr = r;
    let mut ct = t;
    for _ in 0..substeps {
        let k1 = slope(cr, ct)?;
        let k2 = slope(cr + 0.5 * h * k1, ct + 0.5 * h)?;
        let k3 = slope(cr + 0.5 * h * k2, ct + 0.5 * h)?;
        let k4 = slope(cr + h * k3, ct + h)?;
        cr += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        ct += h;
    }
    Ok((cr, ct))
}

pub struct IdentityResidual {
    pub lhs: f64,
    pub rhs: f64,
}

impl IdentityResidual {
    pub fn residual(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }

    pub fn scale(&self) -> f64 {
        self.lhs.abs().max(self.rhs.abs()).max(1e-30)
    }
}

/// Commutator-ratio identity: the FD value of d- Lambda_plus - d+ Lambda_minus
/// along re-traced (r,t) characteristics against (Lambda_plus -
/// Lambda_minus)(2/t + h(r,t)).
pub fn commutator_residual(
    states: &dyn RtStateField,
    r: f64,
    t: f64,
    h: f64,
    mutation: Mutation,
) -> Result<IdentityResidual> {
    let (rp, sm) = states.states(r, t);
    hyperbolicity_guard(r, t * t - r)?;
    let (lp0, lm0) = lambda_pm(r, t, rp, sm)?;

    let lam_plus = |rr: f64, tt: f64| -> Result<f64> {
        let (a, b) = states.states(rr, tt);
        Ok(lambda_pm(rr, tt, a, b)?.0)
    };
    let lam_minus = |rr: f64, tt: f64| -> Result<f64> {
        let (a, b) = states.states(rr, tt);
        Ok(lambda_pm(rr, tt, a, b)?.1)
    };

    // d- of Lambda_plus: central along the minus characteristic
    let (r_p, t_p) = trace_rt(states, r, t, false, h, 4)?;
    let (r_m, t_m) = trace_rt(states, r, t, false, -h, 4)?;
    let d_minus_lp = (lam_plus(r_p, t_p)? - lam_plus(r_m, t_m)?) / (2.0 * h);

    let (r_p, t_p) = trace_rt(states, r, t, true, h, 4)?;
    let (r_m, t_m) = trace_rt(states, r, t, true, -h, 4)?;
    let d_plus_lm = (lam_minus(r_p, t_p)? - lam_minus(r_m, t_m)?) / (2.0 * h);

    let c = coeff_e_h_f_g(r, t, rp, sm)?;
    Ok(IdentityResidual {
        lhs: d_minus_lp - d_plus_lm,
        rhs: (lp0 - lm0) * (2.0 / t + c.h * mutation.factor(CoeffTarget::CommutatorH)),
    })
}

/// Jump identity for the transported derivative of dp_plus on a solution
/// field: (Lambda_plus - Lambda_minus) d_r[src_plus] against
/// t f1 dp_plus_r + t f2 dp_minus_r + t^2 f3.
pub fn jump_identity_dp_plus(
    states: &dyn RtStateField,
    r: f64,
    t: f64,
    h: f64,
    mutation: Mutation,
) -> Result<IdentityResidual> {
    jump_identity(states, r, t, h, mutation, true)
}

/// Mirror identity for dp_minus, with the g coefficients.
pub fn jump_identity_dp_minus(
    states: &dyn RtStateField,
    r: f64,
    t: f64,
    h: f64,
    mutation: Mutation,
) -> Result<IdentityResidual> {
    jump_identity(states, r, t, h, mutation, false)
}

fn jump_identity(
    states: &dyn RtStateField,
    r: f64,
    t: f64,
    h: f64,
    mutation: Mutation,
    plus: bool,
) -> Result<IdentityResidual> {
    hyperbolicity_guard(r, t * t - r)?;
    let (rp, sm) = states.states(r, t);
    let (lp, lm) = lambda_pm(r, t, rp, sm)?;

    let src = |rr: f64| -> Result<f64> {
        let (a, b) = states.states(rr, t);
        let (sp, smn) = rt_sources(rr, t, a, b)?;
        Ok(if plus { sp } else { smn })
    };
    let d_src = (src(r + h)? - src(r - h)?) / (2.0 * h);
    let lhs = (lp - lm) * d_src;

    let (rp_p, sm_p) = states.states(r + h, t);
    let (rp_m, sm_m) = states.states(r - h, t);
    let rp_r = (rp_p - rp_m) / (2.0 * h);
    let sm_r = (sm_p - sm_m) / (2.0 * h);

    let c = coeff_e_h_f_g(r, t, rp, sm)?;
    let rhs = if plus {
        t * c.f1 * mutation.factor(CoeffTarget::F1) * rp_r
            + t * c.f2 * mutation.factor(CoeffTarget::F2) * sm_r
            + t * t * c.f3 * mutation.factor(CoeffTarget::F3)
    } else {
        t * c.g1 * mutation.factor(CoeffTarget::G1) * rp_r
            + t * c.g2 * mutation.factor(CoeffTarget::G2) * sm_r
            + t * t * c.g3 * mutation.factor(CoeffTarget::G3)
    };
    Ok(IdentityResidual { lhs, rhs })
}

/// Algebraic form of the jump identities at a free state
/// (r, t, dp_plus, dp_minus, dp_plus_r, dp_minus_r): the left side expands
/// d_r[src] by the chain rule with the partials of the closed-form source
/// taken by central FD in each argument. Independent of the printed f/g
/// forms on the right.
#[allow(clippy::too_many_arguments)]
pub fn jump_identity_algebraic(
    r: f64,
    t: f64,
    dp_plus: f64,
    dp_minus: f64,
    dp_plus_r: f64,
    dp_minus_r: f64,
    h: f64,
    mutation: Mutation,
    plus: bool,
) -> Result<IdentityResidual> {
    let (lp, lm) = lambda_pm(r, t, dp_plus, dp_minus)?;
    let src = |rr: f64, a: f64, b: f64| -> Result<f64> {
        let (sp, smn) = rt_sources(rr, t, a, b)?;
        Ok(if plus { sp } else { smn })
    };
    let hr = h * r.abs().max(1.0);
    let ha = h * dp_plus.abs().max(1.0);
    let hb = h * dp_minus.abs().max(1.0);
    let d_r = (src(r + hr, dp_plus, dp_minus)? - src(r - hr, dp_plus, dp_minus)?) / (2.0 * hr);
    let d_a = (src(r, dp_plus + ha, dp_minus)? - src(r, dp_plus - ha, dp_minus)?) / (2.0 * ha);
    let d_b = (src(r, dp_plus, dp_minus + hb)? - src(r, dp_plus, dp_minus - hb)?) / (2.0 * hb);
    let lhs = (lp - lm) * (d_r + d_a * dp_plus_r + d_b * dp_minus_r);

    let c = coeff_e_h_f_g(r, t, dp_plus, dp_minus)?;
    let rhs = if plus {
        t * c.f1 * mutation.factor(CoeffTarget::F1) * dp_plus_r
            + t * c.f2 * mutation.factor(CoeffTarget::F2) * dp_minus_r
            + t * t * c.f3 * mutation.factor(CoeffTarget::F3)
    } else {
        t * c.g1 * mutation.factor(CoeffTarget::G1) * dp_plus_r
            + t * c.g2 * mutation.factor(CoeffTarget::G2) * dp_minus_r
            + t * t * c.g3 * mutation.factor(CoeffTarget::G3)
    };
    Ok(IdentityResidual { lhs, rhs })
}

/// v-evolution identity at a free state, with the left side obtained by FD
/// along a locally reconstructed solution: the states are advanced in t by
/// the evolution right sides with the r-gradients frozen, which reproduces
/// the exact v_t at the base point as the step vanishes.
#[allow(clippy::too_many_arguments)]
pub fn v_evolution_residual(
    r: f64,
    t: f64,
    dp_plus: f64,
    dp_minus: f64,
    dp_plus_r: f64,
    dp_minus_r: f64,
    delta: f64,
    h: f64,
    mutation: Mutation,
) -> Result<IdentityResidual> {
    let rhs_pair = |tt: f64, a: f64, b: f64| -> Result<(f64, f64)> {
        let (lp, lm) = lambda_pm(r, tt, a, b)?;
        let (sp, smn) = rt_sources(r, tt, a, b)?;
        Ok((-lm * dp_plus_r + sp, -lp * dp_minus_r + smn))
    };
    let advance = |dt: f64| -> Result<(f64, f64)> {
        // two RK4 substeps in the frozen-gradient evolution
        let mut a = dp_plus;
        let mut b = dp_minus;
        let mut tt = t;
        let hstep = dt / 2.0;
        for _ in 0..2 {
            let (k1a, k1b) = rhs_pair(tt, a, b)?;
            let (k2a, k2b) = rhs_pair(tt + 0.5 * hstep, a + 0.5 * hstep * k1a, b + 0.5 * hstep * k1b)?;
            let (k3a, k3b) = rhs_pair(tt + 0.5 * hstep, a + 0.5 * hstep * k2a, b + 0.5 * hstep * k2b)?;
            let (k4a, k4b) = rhs_pair(tt + hstep, a + hstep * k3a, b + hstep * k3b)?;
            a += hstep / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a);
            b += hstep / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b);
            tt += hstep;
        }
        Ok((a, b))
    };
    let (a_p, b_p) = advance(h)?;
    let (a_m, b_m) = advance(-h)?;
    let v_p = 1.0 / b_p - 1.0 / a_p;
    let v_m = 1.0 / b_m - 1.0 / a_m;
    let lhs = (v_p - v_m) / (2.0 * h);

    let v0 = 1.0 / dp_minus - 1.0 / dp_plus;
    let (l1, l2) = coeff_l1_l2(r, t, dp_plus, dp_minus, dp_plus_r, dp_minus_r, delta)?;
    let rhs = l1 * mutation.factor(CoeffTarget::L1) * v0 / t
        + l2 * mutation.factor(CoeffTarget::L2) * t.powf(2.0 - delta);
    Ok(IdentityResidual { lhs, rhs })
}

/// v-evolution residual measured directly on a marched field level by a
/// nonuniform three-level stencil in t.
pub fn v_evolution_field_residual(
    field: &RtField,
    level_idx: usize,
    k_global: usize,
    delta: f64,
    mutation: Mutation,
) -> Result<IdentityResidual> {
    if level_idx == 0 || level_idx + 1 >= field.levels.len() {
        return Err(SolverError::Domain("interior level required".into()));
    }
    let above = &field.levels[level_idx - 1];
    let here = &field.levels[level_idx];
    let below = &field.levels[level_idx + 1];
    for lv in [above, here, below] {
        if k_global < lv.lo || k_global > lv.hi() {
            return Err(SolverError::Domain("column outside level window".into()));
        }
    }
    let v_of = |lv: &crate::rtfield::Level| {
        1.0 / lv.dp_minus[k_global - lv.lo] - 1.0 / lv.dp_plus[k_global - lv.lo]
    };
    // nonuniform central derivative at t_here, with t_above > t_here > t_below
    let (t_a, t_h, t_b) = (above.t, here.t, below.t);
    let (v_a, v_h, v_b) = (v_of(above), v_of(here), v_of(below));
    let da = t_a - t_h;
    let db = t_h - t_b;
    let v_t = (db * db * v_a + (da * da - db * db) * v_h - da * da * v_b)
        / (da * db * (da + db));

    let (rr, sr) = field.r_derivs(here);
    let k = k_global - here.lo;
    let r = field.r_of(k_global);
    let (l1, l2) = coeff_l1_l2(
        r,
        t_h,
        here.dp_plus[k],
        here.dp_minus[k],
        rr[k],
        sr[k],
        delta,
    )?;
    let rhs = l1 * mutation.factor(CoeffTarget::L1) * v_h / t_h
        + l2 * mutation.factor(CoeffTarget::L2) * t_h.powf(2.0 - delta);
    Ok(IdentityResidual { lhs: v_t, rhs })
}

// ---------------------------------------------------------------------------
// interpolating providers over a marched field

/// The marched field as a polar pressure provider: each grid column carries
/// theta(t), inverted locally to t(theta), so p(r, theta) = t^2 - r. Local
/// cubic interpolation per column and across the four nearest columns.
pub struct FieldPolarPressure<'a> {
    pub field: &'a RtField,
}

impl FieldPolarPressure<'_> {
    /// t on one grid column at the given angle, by inverse interpolation of
    /// the column's monotone theta(t) samples.
    fn column_t(&self, k_global: usize, theta: f64) -> f64 {
        let levels = &self.field.levels;
        let mut ths = Vec::with_capacity(levels.len());
        let mut ts = Vec::with_capacity(levels.len());
        for lv in levels {
            if k_global >= lv.lo && k_global <= lv.hi() {
                ths.push(lv.theta[k_global - lv.lo]);
                ts.push(lv.t);
            }
        }
        lagrange_local(&ths, &ts, theta)
    }
}

impl PolarField for FieldPolarPressure<'_> {
    fn p(&self, r: f64, theta: f64) -> f64 {
        let f = self.field;
        let bottom = f.bottom();
        let x = ((r - f.r0) / f.dr).clamp(bottom.lo as f64, bottom.hi() as f64);
        let k0 = (x.floor() as usize)
            .max(bottom.lo)
            .min(bottom.hi().saturating_sub(3));
        let ks: Vec<usize> = (0..4).map(|i| k0 + i).collect();
        let rs: Vec<f64> = ks.iter().map(|&k| f.r_of(k)).collect();
        let ps: Vec<f64> = ks
            .iter()
            .map(|&k| {
                let t = self.column_t(k, theta);
                t * t - f.r_of(k)
            })
            .collect();
        lagrange_local(&rs, &ps, r)
    }
}

/// (dp_plus, dp_minus) anywhere in the marched staircase, by local cubic
/// interpolation in r within levels and in t across levels. Queries are
/// clamped to the covered region.
pub struct FieldStates<'a> {
    pub field: &'a RtField,
}

impl FieldStates<'_> {
    fn level_value(&self, lv: &crate::rtfield::Level, r: f64) -> (f64, f64) {
        let f = self.field;
        let x = ((r - f.r0) / f.dr - lv.lo as f64)
            .clamp(0.0, (lv.len() - 1) as f64);
        let i0 = (x.floor() as usize).min(lv.len().saturating_sub(4));
        let xs: Vec<f64> = (0..4.min(lv.len()))
            .map(|k| f.r_of(lv.lo + i0 + k))
            .collect();
        let rp: Vec<f64> = (0..xs.len()).map(|k| lv.dp_plus[i0 + k]).collect();
        let sm: Vec<f64> = (0..xs.len()).map(|k| lv.dp_minus[i0 + k]).collect();
        (lagrange_local(&xs, &rp, r), lagrange_local(&xs, &sm, r))
    }
}

impl RtStateField for FieldStates<'_> {
    fn states(&self, r: f64, t: f64) -> (f64, f64) {
        let levels = &self.field.levels;
        let n = levels.len();
        let pos = levels.partition_point(|lv| lv.t > t);
        let lo = pos.saturating_sub(2).min(n.saturating_sub(4));
        let stencil = &levels[lo..(lo + 4).min(n)];
        let ts: Vec<f64> = stencil.iter().map(|lv| lv.t).collect();
        let vals: Vec<(f64, f64)> = stencil.iter().map(|lv| self.level_value(lv, r)).collect();
        let rp: Vec<f64> = vals.iter().map(|v| v.0).collect();
        let sm: Vec<f64> = vals.iter().map(|v| v.1).collect();
        (lagrange_local(&ts, &rp, t), lagrange_local(&ts, &sm, t))
    }
}
