//! Regularity diagnostics measured on the marched field: the vanishing rate
//! of dp_plus - dp_minus, the v/t and t^delta derivative bounds, the monitor
//! constants of the near-sonic coefficient functions, level-curve slopes of
//! the approximate sonic line, and sonic-line extrapolation of the states.

use serde::Serialize;

use crate::coeffs::{coeff_e_h_f_g, coeff_l1_l2, lambda_inv_rt, rt_sources};
use crate::error::{Result, SolverError};
use crate::goursat::CharacteristicMesh;
use crate::interp::lagrange_local;
use crate::rtfield::RtField;
use crate::state::DerivedQuantities;

/// The reciprocal combinations and characteristic jumps at one field node:
/// u = 1/dp_plus + 1/dp_minus, v = 1/dp_minus - 1/dp_plus, and
/// g = (Lambda_plus - Lambda_minus) dp_plus_r = t^2 E dp_plus_r (h likewise
/// with dp_minus_r). None when a state sits at zero.
pub fn derived_at(field: &RtField, level_idx: usize, k: usize) -> Result<Option<DerivedQuantities>> {
    let lv = &field.levels[level_idx];
    let (rp, sm) = (lv.dp_plus[k], lv.dp_minus[k]);
    if rp.abs() < 1e-12 || sm.abs() < 1e-12 {
        return Ok(None);
    }
    let r = field.r_of(lv.lo + k);
    let (rr, sr) = field.r_derivs(lv);
    let c = coeff_e_h_f_g(r, lv.t, rp, sm)?;
    let t2e = lv.t * lv.t * c.e;
    Ok(Some(DerivedQuantities {
        u: 1.0 / rp + 1.0 / sm,
        v: 1.0 / sm - 1.0 / rp,
        g: t2e * rr[k],
        h: t2e * sr[k],
    }))
}

/// One point of the level curve r + p = eps.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SonicSample {
    pub r: f64,
    pub eps: f64,
    pub theta_eps: f64,
    pub dtheta_eps: f64,
}

/// Least-squares fit of log|dp_plus - dp_minus| against log t.
#[derive(Clone, Debug, Serialize)]
pub struct RateFit {
    pub exponent: f64,
    pub constant: f64,
    pub residual: f64,
    pub n_samples: usize,
    pub t_lo: f64,
    pub t_hi: f64,
    pub degenerate: bool,
}

/// Sup-norm samples of the coefficient functions over the marched domain,
/// and the seed/bound constants assembled from them.
#[derive(Clone, Debug, Serialize)]
pub struct MonitorConstants {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub k5: f64,
    pub m0: f64,
    pub m_hat: f64,
    pub delta: f64,
    /// K3 > 2 K2 e^{2 K1 t0} / delta at the chosen handoff level.
    pub k3_gap_ok: bool,
    /// sup |v|/t <= m_hat over the whole field.
    pub v_bound_ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct TdeltaBound {
    pub delta: f64,
    pub sup_t_delta_dp_plus_r: f64,
    pub sup_t_delta_dp_minus_r: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LevelRow {
    pub t: f64,
    pub max_v_over_t: Option<f64>,
    pub max_state_gap: f64,
    pub w: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LevelCurveDiag {
    pub eps: Vec<f64>,
    /// sup_r |theta_eps'(r)| per eps.
    pub sup_slope: Vec<f64>,
    /// sup_r |theta'_{eps/4} - theta'_eps| per consecutive schedule pair.
    pub cauchy_sup: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SonicExtrapolation {
    pub n_columns: usize,
    /// max_r 'disagreement of the two extrapolation sequences' per state.
    pub max_seq_gap_dp_plus: f64,
    pub max_seq_gap_dp_minus: f64,
    /// max_r |dp_plus(r, 0) - dp_minus(r, 0)| from sequence A.
    pub max_state_mismatch: f64,
    /// a few (r, dp_plus, dp_minus) samples of the extrapolated sonic data
    pub samples: Vec<(f64, f64, f64)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SignBounds {
    pub all_nonpositive: bool,
    pub interior_sup: f64,
    pub boundary_sup: f64,
    pub bounded_by_twice_boundary: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Diagnostics {
    pub sup_v_over_t: Option<f64>,
    pub t_delta_bounds: Vec<TdeltaBound>,
    pub rate_fit: Option<RateFit>,
    pub monitor: MonitorConstants,
    pub w_samples: Vec<(f64, f64)>,
    pub level_curves: LevelCurveDiag,
    pub sonic: SonicExtrapolation,
    pub signs: SignBounds,
    pub per_level: Vec<LevelRow>,
}

#[derive(Clone, Debug)]
pub struct DiagConfig {
    pub delta: f64,
    pub delta_list: Vec<f64>,
    /// eps schedule for the level curves; empty selects the default
    /// t0^2 / 4^k down to 16 t_min^2.
    pub eps_schedule: Vec<f64>,
    pub rate_band: (f64, f64),
    /// sonic mismatch tolerance as a fraction of |p1|.
    pub sonic_tol_frac: f64,
    pub p1: f64,
}

impl DiagConfig {
    pub fn reference(p1: f64) -> Self {
        Self {
            delta: 1.5,
            delta_list: vec![1.1, 1.5, 1.9],
            eps_schedule: Vec::new(),
            rate_band: (0.9, 1.1),
            sonic_tol_frac: 5e-3,
            p1,
        }
    }
}

pub fn default_eps_schedule(t0: f64, t_min: f64) -> Vec<f64> {
    let mut eps = t0 * t0;
    let floor = 16.0 * t_min * t_min;
    let mut out = Vec::new();
    while eps >= floor {
        out.push(eps);
        eps /= 4.0;
    }
    out
}

/// Interpolated (dp_plus, dp_minus, theta) at one grid column and arbitrary
/// t, by local cubic interpolation across levels. The column must lie inside
/// the window of every stencil level.
fn column_at(field: &RtField, k_global: usize, t: f64) -> Option<(f64, f64, f64)> {
    let n = field.levels.len();
    if n < 4 {
        return None;
    }
    // levels are ordered by decreasing t
    let pos = field.levels.partition_point(|lv| lv.t > t);
    let lo = pos.saturating_sub(2).min(n - 4);
    let window = &field.levels[lo..lo + 4];
    let mut ts = [0.0; 4];
    let mut rp = [0.0; 4];
    let mut sm = [0.0; 4];
    let mut th = [0.0; 4];
    for (idx, lv) in window.iter().enumerate() {
        if k_global < lv.lo || k_global > lv.hi() {
            return None;
        }
        ts[idx] = lv.t;
        rp[idx] = lv.dp_plus[k_global - lv.lo];
        sm[idx] = lv.dp_minus[k_global - lv.lo];
        th[idx] = lv.theta[k_global - lv.lo];
    }
    Some((
        lagrange_local(&ts, &rp, t),
        lagrange_local(&ts, &sm, t),
        lagrange_local(&ts, &th, t),
    ))
}

/// Trace the level curve r + p = eps through the field: theta_eps(r) from
/// the theta columns at t = sqrt(eps), and its slope from
/// -(1 + p_r)/p_theta with p_r = (dp_plus - dp_minus)/(2 lambda_inv) and
/// p_theta = (dp_plus + dp_minus)/2.
pub fn sonic_trace(field: &RtField, eps_schedule: &[f64]) -> Result<Vec<Vec<SonicSample>>> {
    let bottom = field.bottom();
    let mut out = Vec::with_capacity(eps_schedule.len());
    for &eps in eps_schedule {
        let t = eps.sqrt();
        if t > field.t0 * (1.0 + 1e-12) || t < field.t_min * (1.0 - 1e-12) {
            return Err(SolverError::RootBracket(format!(
                "eps = {eps:.4e} lies outside the covered range t in [{:.4e}, {:.4e}]",
                field.t_min, field.t0
            )));
        }
        let mut samples = Vec::new();
        for k in bottom.lo..=bottom.hi() {
            let Some((rp, sm, th)) = column_at(field, k, t) else {
                continue;
            };
            let r = field.r_of(k);
            let lam = lambda_inv_rt(r, t)?;
            let p_r = (rp - sm) / (2.0 * lam);
            let p_th = 0.5 * (rp + sm);
            samples.push(SonicSample {
                r,
                eps,
                theta_eps: th,
                dtheta_eps: -(1.0 + p_r) / p_th,
            });
        }
        if samples.len() < 8 {
            return Err(SolverError::RootBracket(format!(
                "only {} columns cover eps = {eps:.4e}",
                samples.len()
            )));
        }
        out.push(samples);
    }
    Ok(out)
}

fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let res = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum::<f64>()
        .sqrt()
        / n.sqrt();
    (slope, intercept, res)
}

/// Rate fit of log|dp_plus - dp_minus| vs log t at the column through the
/// middle of the surviving window, over t in [10 t_min, t0/4].
fn fit_rate(field: &RtField) -> Option<RateFit> {
    let bottom = field.bottom();
    let k_mid = (bottom.lo + bottom.hi()) / 2;
    let (t_lo, t_hi) = (10.0 * field.t_min, field.t0 / 4.0);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut degenerate = false;
    for lv in &field.levels {
        if lv.t < t_lo || lv.t > t_hi || k_mid < lv.lo || k_mid > lv.hi() {
            continue;
        }
        let gap = (lv.dp_plus[k_mid - lv.lo] - lv.dp_minus[k_mid - lv.lo]).abs();
        if gap < 1e-13 {
            degenerate = true;
            continue;
        }
        xs.push(lv.t.ln());
        ys.push(gap.ln());
    }
    if xs.len() < 8 {
        return None;
    }
    let (slope, intercept, residual) = linear_fit(&xs, &ys);
    Some(RateFit {
        exponent: slope,
        constant: intercept.exp(),
        residual,
        n_samples: xs.len(),
        t_lo,
        t_hi,
        degenerate,
    })
}

/// All regularity diagnostics of one marched field (with its source mesh for
/// the sign/boundedness summary).
pub fn diagnostics(
    field: &RtField,
    mesh: &CharacteristicMesh,
    cfg: &DiagConfig,
) -> Result<Diagnostics> {
    if field.t0 / field.t_min < 100.0 {
        return Err(SolverError::InsufficientRange(format!(
            "t0/t_min = {:.1} < 100",
            field.t0 / field.t_min
        )));
    }

    let guard = 1e-12;
    let mut sup_v_over_t: Option<f64> = None;
    let mut t_delta = cfg
        .delta_list
        .iter()
        .map(|&delta| TdeltaBound {
            delta,
            sup_t_delta_dp_plus_r: 0.0,
            sup_t_delta_dp_minus_r: 0.0,
        })
        .collect::<Vec<_>>();
    let mut per_level = Vec::with_capacity(field.levels.len());

    // monitor constants over every field node
    let mut k1 = 0.0_f64;
    let mut k2 = 0.0_f64;
    let mut k3 = f64::INFINITY;
    let mut k4 = 0.0_f64;
    let mut k5 = 0.0_f64;
    let mut g_ratio = 0.0_f64; // max |G| / (K2 t^{2-delta} e^{K1 t}) modulo constants
    let mut h_ratio = 0.0_f64;
    let mut src_sup = 0.0_f64;

    struct NodeSample {
        t: f64,
        g: f64,
        h: f64,
    }
    let mut gh_samples: Vec<NodeSample> = Vec::new();

    for lv in &field.levels {
        let (rr, sr) = field.r_derivs(lv);
        let mut lv_v: Option<f64> = None;
        let mut lv_gap = 0.0_f64;
        for k in 0..lv.len() {
            let r = field.r_of(lv.lo + k);
            let (rp, sm) = (lv.dp_plus[k], lv.dp_minus[k]);
            lv_gap = lv_gap.max((rp - sm).abs());

            if rp.abs() > guard && sm.abs() > guard {
                let v = (1.0 / sm - 1.0 / rp).abs() / lv.t;
                lv_v = Some(lv_v.unwrap_or(0.0).max(v));
            }
            for b in t_delta.iter_mut() {
                let w = lv.t.powf(b.delta);
                b.sup_t_delta_dp_plus_r = b.sup_t_delta_dp_plus_r.max(w * rr[k].abs());
                b.sup_t_delta_dp_minus_r = b.sup_t_delta_dp_minus_r.max(w * sr[k].abs());
            }

            let c = coeff_e_h_f_g(r, lv.t, rp, sm)?;
            k1 = k1.max(c.h.abs()).max(c.f3.abs()).max(c.g3.abs());
            k2 = k2
                .max(c.f1.abs())
                .max(c.f2.abs())
                .max(c.g1.abs())
                .max(c.g2.abs());
            k3 = k3.min(c.e.abs());
            // the v-evolution coefficients need states away from zero; nodes
            // with degenerate dp values are skipped, not fatal
            if rp.abs() > guard && sm.abs() > guard {
                let (l1, l2) = coeff_l1_l2(r, lv.t, rp, sm, rr[k], sr[k], cfg.delta)?;
                k4 = k4.max(((l1 - 1.0) / lv.t).abs());
                k5 = k5.max(l2.abs());
            }

            // characteristic jumps: G = t^2 E dp_plus_r, H = t^2 E dp_minus_r
            let t2e = lv.t * lv.t * c.e;
            gh_samples.push(NodeSample {
                t: lv.t,
                g: (t2e * rr[k]).abs(),
                h: (t2e * sr[k]).abs(),
            });

            let (sp, smn) = rt_sources(r, lv.t, rp, sm)?;
            src_sup = src_sup.max(sp.abs()).max(smn.abs());
        }
        if let Some(v) = lv_v {
            sup_v_over_t = Some(sup_v_over_t.unwrap_or(0.0).max(v));
        }
        per_level.push(LevelRow {
            t: lv.t,
            max_v_over_t: lv_v,
            max_state_gap: lv_gap,
            w: 0.0, // filled below once the Lipschitz constant is known
        });
    }

    for row in per_level.iter_mut() {
        row.w = 2.0 * src_sup * row.t + row.max_state_gap;
    }
    let w_samples: Vec<(f64, f64)> = per_level.iter().map(|r| (r.t, r.w)).collect();

    for s in &gh_samples {
        let denom = k2 * s.t.powf(2.0 - cfg.delta) * (k1 * s.t).exp();
        if denom > 0.0 {
            g_ratio = g_ratio.max(s.g / denom);
            h_ratio = h_ratio.max(s.h / denom);
        }
    }
    let m0 = g_ratio.max(h_ratio) + 1.0;

    // top-level v/t feeds the explicit bound of the v evolution estimate
    let top = field.top();
    let mut top_v: f64 = 0.0;
    for k in 0..top.len() {
        let (rp, sm) = (top.dp_plus[k], top.dp_minus[k]);
        if rp.abs() > guard && sm.abs() > guard {
            top_v = top_v.max((1.0 / sm - 1.0 / rp).abs() / top.t);
        }
    }
    let tb = field.t0;
    let m_hat = (k4 * tb).exp()
        * (top_v + (k4 * tb).exp() * k5 * tb.powf(2.0 - cfg.delta) / (2.0 - cfg.delta));
    let v_bound_ok = sup_v_over_t.map(|v| v <= m_hat).unwrap_or(false);
    let k3_gap_ok = k3 > 2.0 * k2 * (2.0 * k1 * tb).exp() / cfg.delta;

    let monitor = MonitorConstants {
        k1,
        k2,
        k3,
        k4,
        k5,
        m0,
        m_hat,
        delta: cfg.delta,
        k3_gap_ok,
        v_bound_ok,
    };

    // level-curve slopes over the eps schedule
    let schedule = if cfg.eps_schedule.is_empty() {
        default_eps_schedule(field.t0, field.t_min)
    } else {
        cfg.eps_schedule.clone()
    };
    let traces = sonic_trace(field, &schedule)?;
    let sup_slope: Vec<f64> = traces
        .iter()
        .map(|tr| tr.iter().map(|s| s.dtheta_eps.abs()).fold(0.0, f64::max))
        .collect();
    let mut cauchy_sup = Vec::new();
    for pair in traces.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let mut sup = 0.0_f64;
        for sb in b {
            // match columns by radius (grids are identical across eps)
            if let Some(sa) = a.iter().find(|s| (s.r - sb.r).abs() < 1e-12) {
                sup = sup.max((sa.dtheta_eps - sb.dtheta_eps).abs());
            }
        }
        cauchy_sup.push(sup);
    }
    let level_curves = LevelCurveDiag {
        eps: schedule,
        sup_slope,
        cauchy_sup,
    };

    let sonic = sonic_extrapolation(field);

    // sign and boundedness over mesh nodes and field nodes
    let mut all_nonpositive = true;
    let mut interior_sup = 0.0_f64;
    for n in mesh.nodes() {
        all_nonpositive &= n.state.dp_plus <= 0.0 && n.state.dp_minus <= 0.0;
        interior_sup = interior_sup
            .max(n.state.dp_plus.abs())
            .max(n.state.dp_minus.abs());
    }
    for lv in &field.levels {
        for k in 0..lv.len() {
            all_nonpositive &= lv.dp_plus[k] <= 0.0 && lv.dp_minus[k] <= 0.0;
            interior_sup = interior_sup.max(lv.dp_plus[k].abs()).max(lv.dp_minus[k].abs());
        }
    }
    let signs = SignBounds {
        all_nonpositive,
        interior_sup,
        boundary_sup: mesh.boundary_sup,
        bounded_by_twice_boundary: interior_sup <= 2.0 * mesh.boundary_sup,
    };

    Ok(Diagnostics {
        sup_v_over_t,
        t_delta_bounds: t_delta,
        rate_fit: fit_rate(field),
        monitor,
        w_samples,
        level_curves,
        sonic,
        signs,
        per_level,
    })
}

/// Richardson extrapolation of the states onto the sonic line from two
/// independent level sequences: sequence A assumes a leading O(t) error and
/// uses the two lowest levels; sequence B assumes O(t^2) and uses two
/// disjoint levels slightly higher.
fn sonic_extrapolation(field: &RtField) -> SonicExtrapolation {
    let n = field.levels.len();
    let la1 = &field.levels[n - 1];
    let la2 = &field.levels[n - 3];
    let lb1 = &field.levels[n - 2];
    let lb2 = &field.levels[n - 5];
    let bottom = field.bottom();

    let lin_t = |t1: f64, y1: f64, t2: f64, y2: f64| (y2 * t1 - y1 * t2) / (t1 - t2);
    let lin_t2 = |t1: f64, y1: f64, t2: f64, y2: f64| {
        (y2 * t1 * t1 - y1 * t2 * t2) / (t1 * t1 - t2 * t2)
    };

    let mut max_gap_plus = 0.0_f64;
    let mut max_gap_minus = 0.0_f64;
    let mut max_mismatch = 0.0_f64;
    let mut samples = Vec::new();
    let mut count = 0usize;
    for k in bottom.lo..=bottom.hi() {
        let within =
            |lv: &crate::rtfield::Level| k >= lv.lo && k <= lv.hi();
        if !(within(la1) && within(la2) && within(lb1) && within(lb2)) {
            continue;
        }
        let pick = |lv: &crate::rtfield::Level| {
            (lv.dp_plus[k - lv.lo], lv.dp_minus[k - lv.lo], lv.t)
        };
        let (rp_a1, sm_a1, t_a1) = pick(la1);
        let (rp_a2, sm_a2, t_a2) = pick(la2);
        let (rp_b1, sm_b1, t_b1) = pick(lb1);
        let (rp_b2, sm_b2, t_b2) = pick(lb2);

        let rp_a = lin_t(t_a2, rp_a2, t_a1, rp_a1);
        let sm_a = lin_t(t_a2, sm_a2, t_a1, sm_a1);
        let rp_b = lin_t2(t_b2, rp_b2, t_b1, rp_b1);
        let sm_b = lin_t2(t_b2, sm_b2, t_b1, sm_b1);

        max_gap_plus = max_gap_plus.max((rp_a - rp_b).abs());
        max_gap_minus = max_gap_minus.max((sm_a - sm_b).abs());
        max_mismatch = max_mismatch.max((rp_a - sm_a).abs());
        if count % 40 == 0 {
            samples.push((field.r_of(k), rp_a, sm_a));
        }
        count += 1;
    }
    SonicExtrapolation {
        n_columns: count,
        max_seq_gap_dp_plus: max_gap_plus,
        max_seq_gap_dp_minus: max_gap_minus,
        max_state_mismatch: max_mismatch,
        samples,
    }
}

/// Threshold checks behind `diagnose --strict`; every returned string is one
/// violated criterion. Thresholds that cannot be evaluated count as
/// violations.
pub fn strict_violations(d: &Diagnostics, cfg: &DiagConfig) -> Vec<String> {
    let mut out = Vec::new();
    match &d.rate_fit {
        None => out.push("rate fit unavailable (insufficient samples)".into()),
        Some(f) if f.degenerate => out.push("rate fit degenerate (vanishing state gap)".into()),
        Some(f) => {
            if !(f.exponent >= cfg.rate_band.0 && f.exponent <= cfg.rate_band.1) {
                out.push(format!(
                    "rate exponent {:.4} outside [{}, {}]",
                    f.exponent, cfg.rate_band.0, cfg.rate_band.1
                ));
            }
        }
    }
    let tol = cfg.sonic_tol_frac * cfg.p1.abs();
    if d.sonic.max_seq_gap_dp_plus > tol || d.sonic.max_seq_gap_dp_minus > tol {
        out.push(format!(
            "sonic extrapolation sequences disagree beyond {tol:.3e}: ({:.3e}, {:.3e})",
            d.sonic.max_seq_gap_dp_plus, d.sonic.max_seq_gap_dp_minus
        ));
    }
    if d.sonic.max_state_mismatch > tol {
        out.push(format!(
            "sonic values of dp_plus and dp_minus differ by {:.3e} > {tol:.3e}",
            d.sonic.max_state_mismatch
        ));
    }
    let decreasing = d
        .level_curves
        .cauchy_sup
        .windows(2)
        .all(|w| w[1] < w[0]);
    if d.level_curves.cauchy_sup.len() < 4 || !decreasing {
        out.push("level-curve slopes not Cauchy over the eps schedule".into());
    }
    if !d.signs.all_nonpositive {
        out.push("positive directional derivative found".into());
    }
    if !d.signs.bounded_by_twice_boundary {
        out.push(format!(
            "interior sup {:.4} exceeds twice the boundary sup {:.4}",
            d.signs.interior_sup, d.signs.boundary_sup
        ));
    }
    if d.sup_v_over_t.is_none() {
        out.push("v/t unavailable (degenerate states)".into());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::goursat::{solve, GammaMinusProfile, MeshConfig};
    use crate::rtfield::{handoff, rt_march, FieldConfig};
    use crate::wave::WaveParams;
    use approx::assert_relative_eq;

    fn reference_run(n: usize) -> (CharacteristicMesh, RtField) {
        let w = WaveParams::new(-2.0, -1.0).unwrap();
        let profile = GammaMinusProfile {
            s0: 1.0,
            theta_c: w.theta_b() + 0.5,
        };
        let mcfg = MeshConfig {
            n_plus: n,
            n_minus: n,
            ..MeshConfig::default()
        };
        let mesh = solve(&w, &profile, &mcfg).unwrap();
        let fcfg = FieldConfig::default();
        let mut field = handoff(&mesh, &fcfg).unwrap();
        rt_march(&mut field, &fcfg).unwrap();
        (mesh, field)
    }

    #[test]
    fn wave_level_curves_match_closed_form() {
        // On the wave, theta_eps(r) = asin(1 - eps/r) and
        // theta_eps'(r) = (eps/r^2)/sqrt(1-(1-eps/r)^2); build a synthetic
        // field carrying exact wave data and compare both outputs.
        use crate::fields::RtStateField;
        use crate::rtfield::Level;
        use crate::wave::WaveField;
        let (r0, dr, n, t0) = (1.4, 1e-3, 200usize, 0.1);
        let mut levels = Vec::new();
        let mut t = t0;
        while t > 1e-3 * t0 {
            levels.push(Level {
                t,
                lo: 0,
                dp_plus: (0..n)
                    .map(|k| WaveField.states(r0 + k as f64 * dr, t).0)
                    .collect(),
                dp_minus: vec![0.0; n],
                theta: (0..n)
                    .map(|k| {
                        let r = r0 + k as f64 * dr;
                        (1.0 - t * t / r).asin()
                    })
                    .collect(),
            });
            t *= 0.9;
        }
        let field = RtField {
            r0,
            dr,
            t0,
            t_min: 1e-3 * t0,
            levels,
            sheds: Vec::new(),
        };
        let eps = t0 * t0 / 16.0;
        let traces = sonic_trace(&field, &[eps]).unwrap();
        for s in &traces[0] {
            let exact_theta = (1.0 - eps / s.r).asin();
            let exact_slope = (eps / (s.r * s.r)) / (1.0 - (1.0 - eps / s.r).powi(2)).sqrt();
            assert_relative_eq!(s.theta_eps, exact_theta, max_relative = 1e-9);
            assert_relative_eq!(s.dtheta_eps, exact_slope, max_relative = 1e-7);
        }
    }

    #[test]
    fn level_curve_slope_formula_matches_numeric_slope() {
        // -(1 + p_r)/p_theta against the finite-difference slope of
        // theta_eps(r) across columns, on the computed reference field.
        let (_, field) = reference_run(24);
        let eps = field.t0 * field.t0 / 16.0;
        let tr = &sonic_trace(&field, &[eps]).unwrap()[0];
        let mut worst: f64 = 0.0;
        for k in 1..tr.len() - 1 {
            let numeric = (tr[k + 1].theta_eps - tr[k - 1].theta_eps)
                / (tr[k + 1].r - tr[k - 1].r);
            worst = worst.max((tr[k].dtheta_eps - numeric).abs());
        }
        assert!(worst < 5e-3, "formula vs numeric slope defect {worst:.3e}");
    }

    #[test]
    fn eps_outside_range_is_an_error() {
        let (_, field) = reference_run(12);
        let err = sonic_trace(&field, &[4.0 * field.t0 * field.t0]);
        assert!(matches!(err, Err(SolverError::RootBracket(_))));
    }

    #[test]
    fn reference_diagnostics_certify_the_regularity_claims() {
        let (mesh, field) = reference_run(24);
        let cfg = DiagConfig::reference(-2.0);
        let d = diagnostics(&field, &mesh, &cfg).unwrap();

        // rate law: |dp_plus - dp_minus| ~ t
        let fit = d.rate_fit.as_ref().expect("rate fit");
        assert!(
            fit.exponent > 0.9 && fit.exponent < 1.1,
            "rate exponent {:.4}",
            fit.exponent
        );
        assert!(fit.n_samples >= 8);

        // v/t bounded and within the explicit bound
        let v = d.sup_v_over_t.expect("v/t defined");
        assert!(v.is_finite() && v > 0.0);
        assert!(d.monitor.v_bound_ok, "sup v/t = {v:.4} vs m_hat = {:.4}", d.monitor.m_hat);
        assert!(d.monitor.k3 > 0.0);

        // signs and boundedness
        assert!(d.signs.all_nonpositive);
        assert!(d.signs.bounded_by_twice_boundary);

        // level curves: slopes bounded, Cauchy decreasing
        assert!(d.level_curves.cauchy_sup.len() >= 4);
        for w in d.level_curves.cauchy_sup.windows(2) {
            assert!(w[1] < w[0], "cauchy sups {:?}", d.level_curves.cauchy_sup);
        }

        // sonic matching within 5e-3 |p1|
        let tol = 5e-3 * 2.0;
        assert!(d.sonic.max_state_mismatch < tol, "{:.3e}", d.sonic.max_state_mismatch);
        assert!(d.sonic.max_seq_gap_dp_plus < tol);
        assert!(d.sonic.max_seq_gap_dp_minus < tol);

        // w samples decrease toward the sonic line
        let w_first = d.w_samples.first().unwrap().1;
        let w_last = d.w_samples.last().unwrap().1;
        assert!(w_last < 0.2 * w_first);

        // nothing strict-violated on the reference run
        assert!(strict_violations(&d, &cfg).is_empty());
    }

    #[test]
    fn derived_quantities_vanish_where_states_match() {
        let (_, field) = reference_run(12);
        let li = field.levels.len() / 2;
        let lv = &field.levels[li];
        for k in [0, lv.len() / 2, lv.len() - 1] {
            let d = derived_at(&field, li, k).unwrap().expect("nondegenerate");
            let (rp, sm) = (lv.dp_plus[k], lv.dp_minus[k]);
            assert_relative_eq!(d.u, 1.0 / rp + 1.0 / sm, max_relative = 1e-14);
            assert!(d.g.is_finite() && d.h.is_finite());
            // v = 0 exactly when the two derivatives coincide
            if (rp - sm).abs() < 1e-15 {
                assert_eq!(d.v, 0.0);
            }
        }
    }

    #[test]
    fn matched_constant_states_flag_a_degenerate_rate_fit() {
        // dp_plus == dp_minus everywhere: v/t is identically zero and the
        // state gap has no decades to fit, which must be flagged rather than
        // reported as a rate.
        use crate::rtfield::Level;
        let (r0, dr, n, t0) = (1.5, 1e-3, 60usize, 0.2);
        let mut levels = Vec::new();
        let mut t = t0;
        while t > 1e-3 * t0 {
            levels.push(Level {
                t,
                lo: 0,
                dp_plus: vec![-1.3; n],
                dp_minus: vec![-1.3; n],
                theta: vec![1.0; n],
            });
            t *= 0.9;
        }
        let field = RtField {
            r0,
            dr,
            t0,
            t_min: 1e-3 * t0,
            levels,
            sheds: Vec::new(),
        };
        let fit = super::fit_rate(&field);
        assert!(fit.is_none() || fit.unwrap().degenerate);
        // and v/t is exactly zero wherever defined
        let lv = field.bottom();
        let v = 1.0 / lv.dp_minus[0] - 1.0 / lv.dp_plus[0];
        assert_eq!(v, 0.0);
    }

    #[test]
    fn strict_flags_bad_rate_exponent() {
        let (mesh, field) = reference_run(12);
        let cfg = DiagConfig {
            rate_band: (1.5, 1.6),
            ..DiagConfig::reference(-2.0)
        };
        let d = diagnostics(&field, &mesh, &cfg).unwrap();
        let v = strict_violations(&d, &cfg);
        assert!(v.iter().any(|s| s.contains("rate exponent")));
    }
}
