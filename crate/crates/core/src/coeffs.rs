//! Closed-form coefficient functions of the characteristic systems, in polar
//! (r, p) and in degeneracy (r, t) variables.
//!
//! Every function here is pure: the same inputs give bitwise-identical
//! outputs. Near-sonic evaluation must go through the (r, t) forms; the polar
//! forms refuse points with r + p below `POLAR_SONIC_FLOOR` because they
//! divide by quantities that vanish at the sonic curve.

use crate::error::{Result, SolverError};

/// Polar forms refuse evaluation when r + p < this * max(1, r),
/// i.e. t below 1e-8 in the degeneracy coordinate.
pub const POLAR_SONIC_FLOOR: f64 = 1e-16;

/// Relative floor for the characteristic denominators dp_plus + lambda_inv
/// and dp_minus - lambda_inv.
pub const DENOM_GUARD: f64 = 1e-10;

/// lambda^{-1} = (r/|p|) sqrt(r^2 - p^2), the polar characteristic slope
/// magnitude dr/dtheta. Zero exactly at the sonic locus r = |p|.
pub fn lambda_inv_polar(r: f64, p: f64) -> Result<f64> {
    if !(r > 0.0) || !(p < 0.0) {
        return Err(SolverError::Domain(format!(
            "lambda_inv_polar requires r > 0 and p < 0, got r={r}, p={p}"
        )));
    }
    let disc = r * r - p * p;
    if disc < 0.0 {
        return Err(SolverError::Domain(format!(
            "lambda_inv_polar: elliptic point, r^2 - p^2 = {disc:.3e} < 0"
        )));
    }
    Ok(r / p.abs() * disc.sqrt())
}

/// lambda^{-1} = r t sqrt(2r - t^2) / (r - t^2) in the (r, t) coordinates.
/// Agrees with [`lambda_inv_polar`] at p = t^2 - r.
pub fn lambda_inv_rt(r: f64, t: f64) -> Result<f64> {
    check_rt(r, t, "lambda_inv_rt")?;
    Ok(r * t * (2.0 * r - t * t).sqrt() / (r - t * t))
}

/// lambda^{-1} / t = r sqrt(2r - t^2) / (r - t^2); regular at t = 0 with
/// limit sqrt(2r).
pub fn lambda_inv_rt_over_t(r: f64, t: f64) -> Result<f64> {
    check_rt(r, t, "lambda_inv_rt_over_t")?;
    Ok(r * (2.0 * r - t * t).sqrt() / (r - t * t))
}

/// Q = r^2 / (2 p (r^2 - p^2)) in polar variables; negative throughout the
/// supersonic patch and singular on the sonic curve.
pub fn q_polar(r: f64, p: f64) -> Result<f64> {
    if !(r > 0.0) || !(p < 0.0) {
        return Err(SolverError::Domain(format!(
            "q_polar requires r > 0 and p < 0, got r={r}, p={p}"
        )));
    }
    let rp = r + p;
    if rp < POLAR_SONIC_FLOOR * r.max(1.0) {
        return Err(SolverError::Sonic(format!(
            "q_polar at r+p = {rp:.3e}: use the (r,t) forms near the sonic curve"
        )));
    }
    Ok(r * r / (2.0 * p * (r * r - p * p)))
}

/// Q = -r^2 / (2 t^2 (r - t^2)(2r - t^2)) in the (r, t) coordinates.
pub fn q_rt(r: f64, t: f64) -> Result<f64> {
    check_rt(r, t, "q_rt")?;
    if t < 1e-8 * r.max(1.0).sqrt() {
        return Err(SolverError::Sonic(format!(
            "q_rt singular at t = {t:.3e}; use t2_q_rt"
        )));
    }
    let t2 = t * t;
    Ok(-r * r / (2.0 * t2 * (r - t2) * (2.0 * r - t2)))
}

/// The factored combination t^2 * Q = -r^2 / (2 (r - t^2)(2r - t^2)),
/// regular through t = 0 with limit -1/4.
pub fn t2_q_rt(r: f64, t: f64) -> Result<f64> {
    check_rt(r, t, "t2_q_rt")?;
    let t2 = t * t;
    Ok(-r * r / (2.0 * (r - t2) * (2.0 * r - t2)))
}

/// Characteristic slopes dr/dt = Lambda_plus, Lambda_minus of the (r, t)
/// system. Both vanish linearly in t for bounded negative states.
pub fn lambda_pm(r: f64, t: f64, dp_plus: f64, dp_minus: f64) -> Result<(f64, f64)> {
    let lam = lambda_inv_rt(r, t)?;
    let (den_plus, den_minus) = guarded_denominators(lam, dp_plus, dp_minus)?;
    let lp = 2.0 * t * lam / den_plus;
    let lm = -2.0 * t * lam / den_minus;
    Ok((lp, lm))
}

/// Right-hand sides of the (r, t) transport equations, assembled from the
/// factored t^2 Q form so every factor stays finite as t -> 0:
///   d dp_plus/dt  along dr/dt = Lambda_minus
///   d dp_minus/dt along dr/dt = Lambda_plus
pub fn rt_sources(r: f64, t: f64, dp_plus: f64, dp_minus: f64) -> Result<(f64, f64)> {
    if t <= 0.0 {
        return Err(SolverError::Sonic(
            "rt_sources needs t > 0: the sources carry (dp_minus - dp_plus)/t".into(),
        ));
    }
    let lam = lambda_inv_rt(r, t)?;
    let (den_plus, den_minus) = guarded_denominators(lam, dp_plus, dp_minus)?;
    let q2t = t2_q_rt(r, t)?;
    let diff_over_t = (dp_minus - dp_plus) / t;
    let src_plus = 2.0 * q2t * diff_over_t * dp_plus / den_minus;
    let src_minus = -2.0 * q2t * diff_over_t * dp_minus / den_plus;
    Ok((src_plus, src_minus))
}

/// The full record of closed-form coefficients at one (r, t, dp_plus,
/// dp_minus) state: E, the commutator correction h, and the six transport
/// coefficients of the second-derivative identities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoeffSet {
    pub e: f64,
    pub h: f64,
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    pub g1: f64,
    pub g2: f64,
    pub g3: f64,
}

pub fn coeff_e_h_f_g(r: f64, t: f64, dp_plus: f64, dp_minus: f64) -> Result<CoeffSet> {
    let lam = lambda_inv_rt(r, t)?;
    let (dp, dm) = guarded_denominators(lam, dp_plus, dp_minus)?;
    let t2 = t * t;
    let rmt = r - t2;
    let sq = (2.0 * r - t2).sqrt();

    let e = 2.0 * r * sq / rmt * (1.0 / dp + 1.0 / dm);

    let h = t * (3.0 * r - t2) / (rmt * (2.0 * r - t2))
        + (r.powi(3) * (3.0 * dp_plus - 3.0 * dp_minus + 4.0 * lam)
            + 2.0 * t * lam * (t2 * t2 * t + r * r * t - 3.0 * r * t2 * t))
            / (dp * dm * rmt * rmt * sq);

    let rfac = r * r / (rmt * (2.0 * r - t2));
    let f1 = rfac * (2.0 * dp_plus - dp_minus) / dm * e;
    let f2 = -dp_plus / dm * (1.0 + (dp_plus - dp_minus) / dm) * rfac * e;
    let f3 = r * dp_plus * (dp_plus - dp_minus) / (dm * rmt * rmt * (2.0 * r - t2).powf(1.5))
        * ((-3.0 * r * r * t2 + r * t2 * t2 + r.powi(3)) / (dm * rmt)
            - t * (3.0 * r - 2.0 * t2) / sq)
        * e;

    let g1 = -dp_minus / dp * (1.0 + (dp_minus - dp_plus) / dp) * rfac * e;
    let g2 = rfac * (2.0 * dp_minus - dp_plus) / dp * e;
    let g3 = r * dp_minus * (dp_minus - dp_plus) / (dp * rmt * rmt * (2.0 * r - t2).powf(1.5))
        * ((3.0 * r * r * t2 - r * t2 * t2 - r.powi(3)) / (dp * rmt)
            - t * (3.0 * r - 2.0 * t2) / sq)
        * e;

    Ok(CoeffSet {
        e,
        h,
        f1,
        f2,
        f3,
        g1,
        g2,
        g3,
    })
}

/// Coefficients of the v-evolution identity
///   v_t = l1 v/t + l2 t^{2-delta},
/// with v = 1/dp_minus - 1/dp_plus. l1 -> 1 as t -> 0 whenever v -> 0.
pub fn coeff_l1_l2(
    r: f64,
    t: f64,
    dp_plus: f64,
    dp_minus: f64,
    dp_plus_r: f64,
    dp_minus_r: f64,
    delta: f64,
) -> Result<(f64, f64)> {
    let lam = lambda_inv_rt(r, t)?;
    guarded_denominators(lam, dp_plus, dp_minus)?;
    if dp_plus == 0.0 || dp_minus == 0.0 {
        return Err(SolverError::Domain(
            "coeff_l1_l2: vanishing dp_plus or dp_minus".into(),
        ));
    }
    let t2 = t * t;
    let rmt = r - t2;
    let sq = (2.0 * r - t2).sqrt();
    let v = 1.0 / dp_minus - 1.0 / dp_plus;
    let a = 1.0 - lam / dp_minus;
    let b = 1.0 + lam / dp_plus;

    let l1 = r * r * (2.0 - lam * v) / (rmt * (2.0 * r - t2) * a * b);
    let l2 = 2.0 * r * sq / (rmt * dp_plus * dp_minus)
        * (t.powf(delta) * dp_plus_r / (a * dp_plus)
            + t.powf(delta) * dp_minus_r / (b * dp_minus));
    Ok((l1, l2))
}

fn check_rt(r: f64, t: f64, who: &str) -> Result<()> {
    if !(r > 0.0) || t < 0.0 || t * t >= r {
        return Err(SolverError::Domain(format!(
            "{who} requires 0 <= t^2 < r, got r={r}, t={t}"
        )));
    }
    Ok(())
}

fn guarded_denominators(lam: f64, dp_plus: f64, dp_minus: f64) -> Result<(f64, f64)> {
    let scale = 1.0_f64.max(dp_plus.abs()).max(dp_minus.abs());
    let threshold = DENOM_GUARD * scale;
    let den_plus = dp_plus + lam;
    let den_minus = dp_minus - lam;
    if den_plus.abs() < threshold {
        return Err(SolverError::DenominatorGuard {
            which: "dp_plus + lambda_inv",
            value: den_plus.abs(),
            threshold,
        });
    }
    if den_minus.abs() < threshold {
        return Err(SolverError::DenominatorGuard {
            which: "dp_minus - lambda_inv",
            value: den_minus.abs(),
            threshold,
        });
    }
    Ok((den_plus, den_minus))
}
