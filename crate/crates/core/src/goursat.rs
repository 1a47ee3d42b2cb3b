//! Characteristic-mesh (Massau) solver for the Goursat problem on the
//! curvilinear triangle bounded by the wave characteristic AB, the data
//! spine BC, and the sonic curve.
//!
//! Mesh layout: `strands[i][j]` is the node on the i-th minus characteristic
//! (emanating from the AB node a_i) and the j-th plus characteristic
//! (emanating from the BC node b_j). Strand 0 is BC itself, level 0 is AB,
//! and node (0,0) is the corner B. Along both families theta increases
//! toward the interior and r + p decreases toward the sonic curve; each
//! strand ends at its first node below the handoff level r + p = t0^2 (that
//! node is kept so the level set stays bracketed).

use std::io::Write;

use crate::coeffs::{lambda_inv_polar, q_polar};
use crate::error::{Result, SolverError};
use crate::state::{PatchState, PolarPoint};
use crate::wave::{wave_rs, WaveParams};

/// Prescribed boundary function for dp_minus along BC: linear ramp that
/// vanishes at B (matching the wave) and reaches -s0 at theta_c.
#[derive(Clone, Copy, Debug)]
pub struct GammaMinusProfile {
    pub s0: f64,
    pub theta_c: f64,
}

impl GammaMinusProfile {
    pub fn value(&self, theta_b: f64, theta: f64) -> f64 {
        -self.s0 * (theta - theta_b) / (self.theta_c - theta_b)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct MeshConfig {
    pub n_plus: usize,
    pub n_minus: usize,
    /// Handoff level: strands stop at r + p < t0^2.
    pub t0: f64,
    /// AB data is used only where r + p >= ab_margin * t0^2.
    pub ab_margin: f64,
    /// BC data is generated down to r + p = eps_stop_frac * t0^2.
    pub eps_stop_frac: f64,
    pub corrector_tol: f64,
    pub corrector_max_iter: usize,
    pub corrector_relax: f64,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self {
            n_plus: 32,
            n_minus: 32,
            // The handoff must sit a few mesh cells above the sonic line:
            // one diagonal cell of a 16x16 mesh drops r + p by ~0.03 near the
            // bottom, so t0^2 = 0.09 keeps terminal cells supersonic.
            t0: 0.3,
            ab_margin: 1.25,
            eps_stop_frac: 0.5,
            // Relaxation 0.5 halves the per-iteration contraction, and cells
            // hugging the handoff level contract at only ~0.65 per sweep; a
            // budget of 50 strands them a few iterations short of 1e-12.
            corrector_tol: 1e-12,
            corrector_max_iter: 100,
            corrector_relax: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CharNode {
    pub i: usize,
    pub j: usize,
    pub theta: f64,
    pub r: f64,
    pub state: PatchState,
}

impl CharNode {
    pub fn sonic_proximity(&self) -> f64 {
        self.r + self.state.p
    }

    pub fn polar(&self) -> PolarPoint {
        PolarPoint::new(self.r, self.theta)
    }
}

/// One sample of the handoff level curve r + p = t0^2.
#[derive(Clone, Copy, Debug)]
pub struct LevelCrossing {
    pub strand: usize,
    pub r: f64,
    pub theta: f64,
    pub dp_plus: f64,
    pub dp_minus: f64,
}

pub struct CharacteristicMesh {
    pub strands: Vec<Vec<CharNode>>,
    pub theta_b: f64,
    pub t0: f64,
    /// sup of max(|dp_plus|, |dp_minus|) over the boundary data (AB and BC).
    pub boundary_sup: f64,
}

/// Generate the data curve BC from the corner state at B by integrating
///   dr/dtheta = -lambda_inv,  dp/dtheta = profile(theta),
///   d(dp_plus)/dtheta = Q (dp_minus - dp_plus) dp_plus
/// with RK4. A fine presolve locates the angle where r + p reaches
/// `eps_stop`; the returned curve then uses n_steps uniform steps to there.
pub fn gamma_minus_generate(
    b_state: PatchState,
    profile: &GammaMinusProfile,
    theta_b: f64,
    r_b: f64,
    n_steps: usize,
    eps_stop: f64,
) -> Result<Vec<CharNode>> {
    let theta_end = presolve_touchdown(b_state, profile, theta_b, r_b, eps_stop)?;
    let h = (theta_end - theta_b) / n_steps as f64;

    let mut nodes = Vec::with_capacity(n_steps + 1);
    let mut y = [r_b, b_state.p, b_state.dp_plus];
    let mut theta = theta_b;
    nodes.push(CharNode {
        i: 0,
        j: 0,
        theta,
        r: r_b,
        state: b_state,
    });
    for j in 1..=n_steps {
        y = rk4_step(theta, y, h, profile, theta_b)?;
        theta = theta_b + h * j as f64;
        nodes.push(CharNode {
            i: 0,
            j,
            theta,
            r: y[0],
            state: PatchState::new(y[1], y[2], profile.value(theta_b, theta)),
        });
        if y[0] + y[1] < eps_stop {
            break;
        }
    }
    Ok(nodes)
}

fn presolve_touchdown(
    b_state: PatchState,
    profile: &GammaMinusProfile,
    theta_b: f64,
    r_b: f64,
    eps_stop: f64,
) -> Result<f64> {
    let h = 1e-3;
    let mut y = [r_b, b_state.p, b_state.dp_plus];
    let mut theta = theta_b;
    for _ in 0..200_000 {
        let prev = (theta, y[0] + y[1]);
        y = rk4_step(theta, y, h, profile, theta_b)?;
        theta += h;
        let cur = y[0] + y[1];
        if cur < eps_stop {
            // linear interpolation of the crossing inside the last step
            let w = (prev.1 - eps_stop) / (prev.1 - cur);
            return Ok(prev.0 + w * h);
        }
    }
    Err(SolverError::StepBudget(200_000))
}

fn gamma_minus_rhs(
    theta: f64,
    y: [f64; 3],
    profile: &GammaMinusProfile,
    theta_b: f64,
) -> Result<[f64; 3]> {
    let [r, p, dp_plus] = y;
    let lam = lambda_inv_polar(r, p)?;
    let q = q_polar(r, p)?;
    let s = profile.value(theta_b, theta);
    Ok([-lam, s, q * (s - dp_plus) * dp_plus])
}

fn rk4_step(
    theta: f64,
    y: [f64; 3],
    h: f64,
    profile: &GammaMinusProfile,
    theta_b: f64,
) -> Result<[f64; 3]> {
    let add = |y: [f64; 3], k: [f64; 3], c: f64| {
        [y[0] + c * k[0], y[1] + c * k[1], y[2] + c * k[2]]
    };
    let k1 = gamma_minus_rhs(theta, y, profile, theta_b)?;
    let k2 = gamma_minus_rhs(theta + 0.5 * h, add(y, k1, 0.5 * h), profile, theta_b)?;
    let k3 = gamma_minus_rhs(theta + 0.5 * h, add(y, k2, 0.5 * h), profile, theta_b)?;
    let k4 = gamma_minus_rhs(theta + h, add(y, k3, h), profile, theta_b)?;
    Ok([
        y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        y[2] + h / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
    ])
}

/// Predictor-corrector (Massau) solve for the interior node at the
/// intersection of the minus characteristic through `a` and the plus
/// characteristic through `b`. dp_plus transports from the minus parent,
/// dp_minus from the plus parent; p uses the average of its two
/// characteristic integrals. Trapezoidal coefficient averaging with
/// fixed-point relaxation.
pub fn interior_node(
    a: &CharNode,
    b: &CharNode,
    cfg: &MeshConfig,
    i: usize,
    j: usize,
) -> Result<CharNode> {
    if (a.theta - b.theta).abs() < 1e-15 && (a.r - b.r).abs() < 1e-15 {
        return Ok(CharNode { i, j, ..*a });
    }

    let degen = |r: f64, theta: f64, e: SolverError| SolverError::Degenerate {
        r,
        theta,
        msg: e.to_string(),
    };

    let lam_a = lambda_inv_polar(a.r, a.state.p).map_err(|e| degen(a.r, a.theta, e))?;
    let lam_b = lambda_inv_polar(b.r, b.state.p).map_err(|e| degen(b.r, b.theta, e))?;
    let q_a = q_polar(a.r, a.state.p).map_err(|e| degen(a.r, a.theta, e))?;
    let q_b = q_polar(b.r, b.state.p).map_err(|e| degen(b.r, b.theta, e))?;
    let rhs_dp_plus_a = q_a * (a.state.dp_minus - a.state.dp_plus) * a.state.dp_plus;
    let rhs_dp_minus_b = q_b * (b.state.dp_plus - b.state.dp_minus) * b.state.dp_minus;

    // predictor: all trapezoid halves taken from the parents
    let mut cur = {
        let theta = (a.r - b.r + lam_a * a.theta + lam_b * b.theta) / (lam_a + lam_b);
        let r = a.r - lam_a * (theta - a.theta);
        let dp_plus = a.state.dp_plus + rhs_dp_plus_a * (theta - a.theta);
        let dp_minus = b.state.dp_minus + rhs_dp_minus_b * (theta - b.theta);
        let p = 0.5
            * ((a.state.p + a.state.dp_minus * (theta - a.theta))
                + (b.state.p + b.state.dp_plus * (theta - b.theta)));
        CharNode {
            i,
            j,
            theta,
            r,
            state: PatchState::new(p, dp_plus, dp_minus),
        }
    };

    let mut last_delta = f64::INFINITY;
    for _ in 0..cfg.corrector_max_iter {
        let lam_p = lambda_inv_polar(cur.r, cur.state.p).map_err(|e| degen(cur.r, cur.theta, e))?;
        let q_p = q_polar(cur.r, cur.state.p).map_err(|e| degen(cur.r, cur.theta, e))?;

        let m_a = 0.5 * (lam_a + lam_p);
        let m_b = 0.5 * (lam_b + lam_p);
        let theta = (a.r - b.r + m_a * a.theta + m_b * b.theta) / (m_a + m_b);
        let r = a.r - m_a * (theta - a.theta);

        let rhs_plus_p = q_p * (cur.state.dp_minus - cur.state.dp_plus) * cur.state.dp_plus;
        let rhs_minus_p = q_p * (cur.state.dp_plus - cur.state.dp_minus) * cur.state.dp_minus;
        let dp_plus = a.state.dp_plus + 0.5 * (rhs_dp_plus_a + rhs_plus_p) * (theta - a.theta);
        let dp_minus = b.state.dp_minus + 0.5 * (rhs_dp_minus_b + rhs_minus_p) * (theta - b.theta);

        let p_from_a = a.state.p + 0.5 * (a.state.dp_minus + cur.state.dp_minus) * (theta - a.theta);
        let p_from_b = b.state.p + 0.5 * (b.state.dp_plus + cur.state.dp_plus) * (theta - b.theta);
        let p = 0.5 * (p_from_a + p_from_b);

        let delta = (theta - cur.theta)
            .abs()
            .max((r - cur.r).abs())
            .max((p - cur.state.p).abs())
            .max((dp_plus - cur.state.dp_plus).abs())
            .max((dp_minus - cur.state.dp_minus).abs());

        let w = cfg.corrector_relax;
        cur.theta += w * (theta - cur.theta);
        cur.r += w * (r - cur.r);
        cur.state.p += w * (p - cur.state.p);
        cur.state.dp_plus += w * (dp_plus - cur.state.dp_plus);
        cur.state.dp_minus += w * (dp_minus - cur.state.dp_minus);

        if delta < cfg.corrector_tol {
            // forward orientation: theta advances toward the interior and
            // the parent triangle keeps positive signed area
            let area = signed_area(a, b, &cur);
            if area <= 0.0 || cur.theta <= a.theta || cur.theta <= b.theta {
                return Err(SolverError::FoldOver { i, j, area });
            }
            return Ok(cur);
        }
        last_delta = delta;
    }
    Err(SolverError::NoConvergence {
        i,
        j,
        iters: cfg.corrector_max_iter,
        delta: last_delta,
    })
}

/// Orientation of the parent triangle in the (theta, r) plane; positive for a
/// well-formed cell (minus parent above in r, plus parent below, node ahead
/// in theta).
fn signed_area(a: &CharNode, b: &CharNode, p: &CharNode) -> f64 {
    (a.theta - p.theta) * (b.r - p.r) - (a.r - p.r) * (b.theta - p.theta)
}

/// Solve the Goursat problem: fill the triangle strand by strand from the AB
/// and BC data until every strand has crossed the handoff level.
pub fn solve(w: &WaveParams, profile: &GammaMinusProfile, cfg: &MeshConfig) -> Result<CharacteristicMesh> {
    let theta_b = w.theta_b();
    let handoff = cfg.t0 * cfg.t0;

    // AB data range: theta in [theta_b, theta_cut], where r + p on AB equals
    // ab_margin * t0^2; beyond that the wave data is already inside the
    // handoff layer. On AB, r + p = |p1| sin(theta) (1 - sin(theta)).
    let m = cfg.ab_margin * handoff / w.p1.abs();
    let sin_b = (w.p4 / w.p1).sqrt();
    let b_corner = sin_b * (1.0 - sin_b);
    if m >= b_corner {
        return Err(SolverError::Domain(format!(
            "handoff level t0^2 = {handoff:.4e} too close to the corner data: \
             ab_margin*t0^2/|p1| = {m:.4e} >= {b_corner:.4e}"
        )));
    }
    let disc = (1.0 - 4.0 * m).max(0.0).sqrt();
    let sin_cut = 0.5 * (1.0 + disc);
    let theta_cut = sin_cut.min(1.0).asin();

    let mut strands: Vec<Vec<CharNode>> = Vec::with_capacity(cfg.n_plus + 1);

    // strand 0 = BC
    let b_state = wave_rs(theta_b, w)?;
    let bc = gamma_minus_generate(
        b_state,
        profile,
        theta_b,
        w.ab_radius(theta_b),
        cfg.n_minus,
        cfg.eps_stop_frac * handoff,
    )?;
    let mut boundary_sup: f64 = bc
        .iter()
        .map(|n| n.state.dp_plus.abs().max(n.state.dp_minus.abs()))
        .fold(0.0, f64::max);
    // BC itself stops at its own crossing of the handoff level.
    let bc_cut = first_below(&bc, handoff).unwrap_or(bc.len() - 1);
    strands.push(bc[..=bc_cut].to_vec());

    for i in 1..=cfg.n_plus {
        let theta_i = theta_b + (theta_cut - theta_b) * i as f64 / cfg.n_plus as f64;
        let ab_state = wave_rs(theta_i, w)?;
        boundary_sup = boundary_sup
            .max(ab_state.dp_plus.abs())
            .max(ab_state.dp_minus.abs());
        let mut strand = vec![CharNode {
            i,
            j: 0,
            theta: theta_i,
            r: w.ab_radius(theta_i),
            state: ab_state,
        }];
        if strand[0].sonic_proximity() < handoff {
            strands.push(strand);
            continue;
        }
        for j in 1.. {
            // A node below the handoff level terminates its strand (it is
            // kept so the level curve stays bracketed) but must not seed
            // children: the next cell down may dive through the sonic line.
            let Some(plus_parent) = strands[i - 1].get(j) else {
                break;
            };
            if plus_parent.sonic_proximity() < handoff {
                break;
            }
            let minus_parent = strand[j - 1];
            let node = interior_node(&minus_parent, plus_parent, cfg, i, j)?;
            let below = node.sonic_proximity() < handoff;
            strand.push(node);
            if below {
                break;
            }
        }
        strands.push(strand);
    }

    Ok(CharacteristicMesh {
        strands,
        theta_b,
        t0: cfg.t0,
        boundary_sup,
    })
}

fn first_below(nodes: &[CharNode], level: f64) -> Option<usize> {
    nodes.iter().position(|n| n.sonic_proximity() < level)
}

impl CharacteristicMesh {
    pub fn node(&self, i: usize, j: usize) -> Option<&CharNode> {
        self.strands.get(i).and_then(|s| s.get(j))
    }

    pub fn nodes(&self) -> impl Iterator<Item = &CharNode> {
        self.strands.iter().flatten()
    }

    pub fn node_count(&self) -> usize {
        self.strands.iter().map(Vec::len).sum()
    }

    /// Samples of the handoff level curve r + p = t0^2, one per strand that
    /// brackets it, sorted by r.
    pub fn level_crossings(&self) -> Result<Vec<LevelCrossing>> {
        let level = self.t0 * self.t0;
        let mut out = Vec::new();
        for (i, strand) in self.strands.iter().enumerate() {
            let Some(jb) = first_below(strand, level) else {
                continue;
            };
            if jb == 0 {
                continue; // strand starts below the level, nothing bracketed
            }
            let hi = &strand[jb - 1];
            let lo = &strand[jb];
            let s_hi = hi.sonic_proximity();
            let s_lo = lo.sonic_proximity();
            let wgt = (s_hi - level) / (s_hi - s_lo);
            let r = hi.r + wgt * (lo.r - hi.r);
            out.push(LevelCrossing {
                strand: i,
                r,
                theta: hi.theta + wgt * (lo.theta - hi.theta),
                dp_plus: hi.state.dp_plus + wgt * (lo.state.dp_plus - hi.state.dp_plus),
                dp_minus: hi.state.dp_minus + wgt * (lo.state.dp_minus - hi.state.dp_minus),
            });
        }
        if out.len() < 4 {
            return Err(SolverError::LevelSetCoverage(format!(
                "only {} strands bracket r+p = {level:.4e}",
                out.len()
            )));
        }
        out.sort_by(|a, b| a.r.total_cmp(&b.r));
        Ok(out)
    }

    /// p at a probe point, by a quadratic moving-least-squares fit over the
    /// nearest mesh nodes. Cell containment gates coverage (None outside);
    /// the quadratic fit keeps the interpolation error an order below the
    /// mesh's own, so probe differences measure solver convergence.
    pub fn probe_p(&self, theta: f64, r: f64) -> Option<f64> {
        self.containing_cell(theta, r)?;
        let mut nearest: Vec<(f64, f64, f64, f64)> = self
            .nodes()
            .map(|n| {
                let d2 = (n.theta - theta).powi(2) + (n.r - r).powi(2);
                (d2, n.theta, n.r, n.state.p)
            })
            .collect();
        nearest.sort_by(|a, b| a.0.total_cmp(&b.0));
        nearest.truncate(12);
        if nearest.len() < 8 {
            return None;
        }
        let scale = nearest.last().unwrap().0.sqrt().max(1e-12);
        // weighted quadratic fit in centered, scaled coordinates
        let mut ata = [[0.0_f64; 6]; 6];
        let mut aty = [0.0_f64; 6];
        for &(d2, th, rr, p) in &nearest {
            let x = (th - theta) / scale;
            let y = (rr - r) / scale;
            let basis = [1.0, x, y, x * x, x * y, y * y];
            let w = {
                let q = (d2.sqrt() / (1.5 * scale)).min(1.0);
                (1.0 - q * q).powi(2).max(1e-6)
            };
            for a in 0..6 {
                for b in 0..6 {
                    ata[a][b] += w * basis[a] * basis[b];
                }
                aty[a] += w * basis[a] * p;
            }
        }
        solve6(&mut ata, &mut aty).map(|c| c[0])
    }

    fn containing_cell(&self, theta: f64, r: f64) -> Option<(usize, usize)> {
        for i in 0..self.strands.len() - 1 {
            let jmax = self.strands[i].len().min(self.strands[i + 1].len());
            for j in 0..jmax.saturating_sub(1) {
                let n00 = &self.strands[i][j];
                let n01 = &self.strands[i][j + 1];
                let n10 = &self.strands[i + 1][j];
                let n11 = &self.strands[i + 1][j + 1];
                for (q0, q1, q2) in [(n00, n10, n11), (n00, n11, n01)] {
                    if tri_interp(theta, r, q0, q1, q2).is_some() {
                        return Some((i, j));
                    }
                }
            }
        }
        None
    }

    /// CSV export: i, j, theta, r, xi, eta, p, dp_plus, dp_minus, t.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "i,j,theta,r,xi,eta,p,R,S,t")?;
        for n in self.nodes() {
            let c = n.polar().to_cart();
            let t = n.sonic_proximity().max(0.0).sqrt();
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                n.i, n.j, n.theta, n.r, c.xi, c.eta, n.state.p, n.state.dp_plus, n.state.dp_minus, t
            )?;
        }
        Ok(())
    }
}

/// Gaussian elimination with partial pivoting on a 6x6 normal system.
fn solve6(a: &mut [[f64; 6]; 6], y: &mut [f64; 6]) -> Option<[f64; 6]> {
    for col in 0..6 {
        let pivot = (col..6).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, pivot);
        y.swap(col, pivot);
        for row in col + 1..6 {
            let f = a[row][col] / a[col][col];
            for k in col..6 {
                a[row][k] -= f * a[col][k];
            }
            y[row] -= f * y[col];
        }
    }
    let mut x = [0.0_f64; 6];
    for col in (0..6).rev() {
        let mut acc = y[col];
        for k in col + 1..6 {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
    }
    Some(x)
}

fn tri_interp(theta: f64, r: f64, a: &CharNode, b: &CharNode, c: &CharNode) -> Option<f64> {
    let det = (b.theta - a.theta) * (c.r - a.r) - (c.theta - a.theta) * (b.r - a.r);
    if det.abs() < 1e-300 {
        return None;
    }
    let l1 = ((theta - a.theta) * (c.r - a.r) - (c.theta - a.theta) * (r - a.r)) / det;
    let l2 = ((b.theta - a.theta) * (r - a.r) - (theta - a.theta) * (b.r - a.r)) / det;
    let l0 = 1.0 - l1 - l2;
    let eps = -1e-12;
    if l0 >= eps && l1 >= eps && l2 >= eps {
        Some(l0 * a.state.p + l1 * b.state.p + l2 * c.state.p)
    } else {
        None
    }
}
