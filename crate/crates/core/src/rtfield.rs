//! The near-sonic layer: resampling of the characteristic mesh onto a
//! uniform r-grid at the handoff level t = t0, and the explicit downward
//! march of the (r, t) transport system to t_min.
//!
//! The march is midpoint (second order) in t with upwinded one-sided
//! r-derivatives chosen per cell from the sign of the advection slope.
//! Source terms are assembled from the factored t^2 Q form, so all
//! coefficients stay finite as t -> 0. The active r-window shrinks with the
//! characteristic cone: fractional cell debts accumulate at the two edges at
//! the local |Lambda| rates and an edge cell is dropped whenever a debt
//! reaches one.

use crate::coeffs::{lambda_pm, rt_sources};
use crate::error::{Result, SolverError};
use crate::goursat::CharacteristicMesh;
use crate::interp::MonotoneCubic;

#[derive(Clone, Copy, Debug)]
pub struct FieldConfig {
    /// Uniform grid spacing in r.
    pub dr: f64,
    /// Active window as fractions of the handoff level-curve span.
    pub window: (f64, f64),
    /// t_min = t_min_factor * t0; the march never reaches t = 0.
    pub t_min_factor: f64,
    /// Geometric step factor: dt = (1 - dt_ratio) * t, re-checked per step
    /// against the CFL bound.
    pub dt_ratio: f64,
    pub cfl: f64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            dr: 2e-3,
            window: (0.05, 0.80),
            t_min_factor: 1e-3,
            dt_ratio: 0.9,
            // The midpoint stage pair with the 3-point one-sided stencil has
            // grid-mode symbol -4*nu on the real axis, so nu must stay below
            // 0.5; 0.9 is kept as the hard precondition, 0.45 as the step cap.
            cfl: 0.45,
        }
    }
}

/// One t-level of the field. Vectors are indexed by (global cell - lo);
/// the radius of global cell k is r0 + k * dr. p is not stored: p = t^2 - r
/// identically.
#[derive(Clone, Debug)]
pub struct Level {
    pub t: f64,
    pub lo: usize,
    pub dp_plus: Vec<f64>,
    pub dp_minus: Vec<f64>,
    pub theta: Vec<f64>,
}

impl Level {
    pub fn hi(&self) -> usize {
        self.lo + self.dp_plus.len() - 1
    }

    pub fn len(&self) -> usize {
        self.dp_plus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dp_plus.is_empty()
    }
}

/// Per-step record of the cone shrinkage, for the domain-of-determinacy
/// bookkeeping: cells shed on each side and the step's max Courant number.
#[derive(Clone, Copy, Debug)]
pub struct ShedRecord {
    pub left: usize,
    pub right: usize,
    pub courant: f64,
}

pub struct RtField {
    pub r0: f64,
    pub dr: f64,
    pub t0: f64,
    pub t_min: f64,
    pub levels: Vec<Level>,
    pub sheds: Vec<ShedRecord>,
}

impl RtField {
    pub fn r_of(&self, k: usize) -> f64 {
        self.r0 + k as f64 * self.dr
    }

    pub fn top(&self) -> &Level {
        &self.levels[0]
    }

    pub fn bottom(&self) -> &Level {
        self.levels.last().unwrap()
    }

    /// Centered r-derivatives of (dp_plus, dp_minus) on one level, one-sided
    /// (second order) at the window edges.
    pub fn r_derivs(&self, level: &Level) -> (Vec<f64>, Vec<f64>) {
        let d = |v: &[f64]| -> Vec<f64> {
            let n = v.len();
            let mut out = vec![0.0; n];
            for k in 0..n {
                out[k] = if k == 0 {
                    (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * self.dr)
                } else if k == n - 1 {
                    (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * self.dr)
                } else {
                    (v[k + 1] - v[k - 1]) / (2.0 * self.dr)
                };
            }
            out
        };
        (d(&level.dp_plus), d(&level.dp_minus))
    }

    /// CSV export: r, t, p, dp_plus, dp_minus, v/t, dp_plus_r, dp_minus_r.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "r,t,p,R,S,V_over_t,Rr,Sr")?;
        for level in &self.levels {
            let (rr, sr) = self.r_derivs(level);
            for k in 0..level.len() {
                let r = self.r_of(level.lo + k);
                let (rp, sm) = (level.dp_plus[k], level.dp_minus[k]);
                let v_over_t = if rp.abs() > 1e-12 && sm.abs() > 1e-12 {
                    (1.0 / sm - 1.0 / rp) / level.t
                } else {
                    f64::NAN
                };
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{}",
                    r,
                    level.t,
                    level.t * level.t - r,
                    rp,
                    sm,
                    v_over_t,
                    rr[k],
                    sr[k]
                )?;
            }
        }
        Ok(())
    }
}

/// Resample (dp_plus, dp_minus, theta) along the mesh's handoff level curve
/// r + p = t0^2 onto the uniform r-grid, by monotone cubic interpolation in r.
pub fn handoff(mesh: &CharacteristicMesh, cfg: &FieldConfig) -> Result<RtField> {
    let crossings = mesh.level_crossings()?;
    let mut rs = Vec::with_capacity(crossings.len());
    let mut rp = Vec::with_capacity(crossings.len());
    let mut sm = Vec::with_capacity(crossings.len());
    let mut th = Vec::with_capacity(crossings.len());
    for c in &crossings {
        if let Some(&last) = rs.last() {
            if c.r - last < 1e-12 * c.r.abs().max(1.0) {
                continue;
            }
        }
        rs.push(c.r);
        rp.push(c.dp_plus);
        sm.push(c.dp_minus);
        th.push(c.theta);
    }
    if rs.len() < 4 {
        return Err(SolverError::LevelSetCoverage(
            "fewer than 4 distinct level-curve samples".into(),
        ));
    }
    let span = rs[rs.len() - 1] - rs[0];
    if span < 20.0 * cfg.dr {
        return Err(SolverError::LevelSetCoverage(format!(
            "level-curve span {span:.4e} too small for dr = {:.4e}",
            cfg.dr
        )));
    }
    let w_lo = rs[0] + cfg.window.0 * span;
    let w_hi = rs[0] + cfg.window.1 * span;
    let n = ((w_hi - w_lo) / cfg.dr).floor() as usize + 1;
    if n < 16 {
        return Err(SolverError::LevelSetCoverage(format!(
            "window [{w_lo:.4}, {w_hi:.4}] holds only {n} grid nodes"
        )));
    }

    let ip_rp = MonotoneCubic::new(rs.clone(), rp);
    let ip_sm = MonotoneCubic::new(rs.clone(), sm);
    let ip_th = MonotoneCubic::new(rs, th);

    let level = Level {
        t: mesh.t0,
        lo: 0,
        dp_plus: (0..n).map(|k| ip_rp.eval(w_lo + k as f64 * cfg.dr)).collect(),
        dp_minus: (0..n).map(|k| ip_sm.eval(w_lo + k as f64 * cfg.dr)).collect(),
        theta: (0..n).map(|k| ip_th.eval(w_lo + k as f64 * cfg.dr)).collect(),
    };
    Ok(RtField {
        r0: w_lo,
        dr: cfg.dr,
        t0: mesh.t0,
        t_min: cfg.t_min_factor * mesh.t0,
        levels: vec![level],
        sheds: Vec::new(),
    })
}

/// One-sided derivative pulling from the given side where the stencil
/// allows; at the very edge the interior-biased stencil is used instead (the
/// affected cell sits inside the shrinking edge band and is shed shortly).
fn upwind_deriv(v: &[f64], k: usize, dr: f64, pull_right: bool) -> f64 {
    let n = v.len();
    if pull_right {
        if k + 2 < n {
            (-3.0 * v[k] + 4.0 * v[k + 1] - v[k + 2]) / (2.0 * dr)
        } else if k + 1 < n {
            (v[k + 1] - v[k]) / dr
        } else {
            (3.0 * v[k] - 4.0 * v[k - 1] + v[k - 2]) / (2.0 * dr)
        }
    } else if k >= 2 {
        (3.0 * v[k] - 4.0 * v[k - 1] + v[k - 2]) / (2.0 * dr)
    } else if k >= 1 {
        (v[k] - v[k - 1]) / dr
    } else {
        (-3.0 * v[k] + 4.0 * v[k + 1] - v[k + 2]) / (2.0 * dr)
    }
}

struct StageRates {
    d_dp_plus: Vec<f64>,
    d_dp_minus: Vec<f64>,
    d_theta: Vec<f64>,
    max_lambda_plus: f64,
    max_lambda_minus: f64,
}

/// Downward increments per unit step at every cell of one stage level:
/// dp_plus(t - dt) = dp_plus(t) + dt * rate, with
/// rate = Lambda_minus * dp_plus_r - src_plus (mirrored for dp_minus, and
/// theta advances by -theta_t).
fn stage_rates(field: &RtField, level: &Level) -> Result<StageRates> {
    let n = level.len();
    let mut rates = StageRates {
        d_dp_plus: vec![0.0; n],
        d_dp_minus: vec![0.0; n],
        d_theta: vec![0.0; n],
        max_lambda_plus: 0.0,
        max_lambda_minus: 0.0,
    };
    for k in 0..n {
        let r = field.r_of(level.lo + k);
        let (rp, sm) = (level.dp_plus[k], level.dp_minus[k]);
        let map_err = |e: SolverError| SolverError::Degenerate {
            r,
            theta: level.t,
            msg: format!("march at t={:.6e}: {e}", level.t),
        };
        let (lp, lm) = lambda_pm(r, level.t, rp, sm).map_err(map_err)?;
        let (src_p, src_m) = rt_sources(r, level.t, rp, sm).map_err(map_err)?;
        let rp_r = upwind_deriv(&level.dp_plus, k, field.dr, lm > 0.0);
        let sm_r = upwind_deriv(&level.dp_minus, k, field.dr, lp > 0.0);
        rates.d_dp_plus[k] = lm * rp_r - src_p;
        rates.d_dp_minus[k] = lp * sm_r - src_m;
        rates.d_theta[k] = -4.0 * level.t / (rp + sm);
        rates.max_lambda_plus = rates.max_lambda_plus.max(lp.abs());
        rates.max_lambda_minus = rates.max_lambda_minus.max(lm.abs());
    }
    Ok(rates)
}

/// March the field from its current bottom level down to t_min.
pub fn rt_march(field: &mut RtField, cfg: &FieldConfig) -> Result<()> {
    let t_min = field.t_min;
    let mut debt_left = 0.0_f64;
    let mut debt_right = 0.0_f64;

    while field.bottom().t > t_min * (1.0 + 1e-12) {
        let cur = field.bottom().clone();
        let rates = stage_rates(field, &cur)?;
        let max_lambda = rates.max_lambda_plus.max(rates.max_lambda_minus);
        let mut dt = cfg.dt_ratio.mul_add(-cur.t, cur.t); // (1 - ratio) * t
        if max_lambda > 0.0 {
            dt = dt.min(cfg.cfl * field.dr / max_lambda);
        }
        dt = dt.min(cur.t - t_min);
        let courant = max_lambda * dt / field.dr;
        if courant > 0.9 * (1.0 + 1e-12) {
            return Err(SolverError::Cfl {
                lhs: max_lambda * dt,
                rhs: 0.9 * field.dr,
            });
        }

        // half level on the same window
        let n = cur.len();
        let half = Level {
            t: cur.t - 0.5 * dt,
            lo: cur.lo,
            dp_plus: (0..n)
                .map(|k| cur.dp_plus[k] + 0.5 * dt * rates.d_dp_plus[k])
                .collect(),
            dp_minus: (0..n)
                .map(|k| cur.dp_minus[k] + 0.5 * dt * rates.d_dp_minus[k])
                .collect(),
            theta: (0..n)
                .map(|k| cur.theta[k] + 0.5 * dt * rates.d_theta[k])
                .collect(),
        };
        let half_rates = stage_rates(field, &half)?;

        // cone shedding: debts accumulate at the per-side exit rates
        debt_left += rates.max_lambda_plus * dt / field.dr;
        debt_right += rates.max_lambda_minus * dt / field.dr;
        let shed_l = if debt_left >= 1.0 {
            debt_left -= 1.0;
            1
        } else {
            0
        };
        let shed_r = if debt_right >= 1.0 {
            debt_right -= 1.0;
            1
        } else {
            0
        };
        let new_lo = cur.lo + shed_l;
        let new_hi = cur.hi() - shed_r;
        if new_hi - new_lo + 1 < 8 {
            return Err(SolverError::Domain(format!(
                "marched window exhausted at t = {:.4e}; enlarge the r-window or dr",
                cur.t
            )));
        }

        let m = new_hi - new_lo + 1;
        let off = new_lo - cur.lo;
        let mut next = Level {
            t: cur.t - dt,
            lo: new_lo,
            dp_plus: Vec::with_capacity(m),
            dp_minus: Vec::with_capacity(m),
            theta: Vec::with_capacity(m),
        };
        for k in 0..m {
            let kk = k + off;
            next.dp_plus
                .push(cur.dp_plus[kk] + dt * half_rates.d_dp_plus[kk]);
            next.dp_minus
                .push(cur.dp_minus[kk] + dt * half_rates.d_dp_minus[kk]);
            next.theta.push(cur.theta[kk] + dt * half_rates.d_theta[kk]);
        }
        if next
            .dp_plus
            .iter()
            .chain(&next.dp_minus)
            .chain(&next.theta)
            .any(|v| !v.is_finite())
        {
            return Err(SolverError::NonFinite(format!(
                "march level t = {:.6e}",
                next.t
            )));
        }
        field.levels.push(next);
        field.sheds.push(ShedRecord {
            left: shed_l,
            right: shed_r,
            courant,
        });
    }
    Ok(())
}
