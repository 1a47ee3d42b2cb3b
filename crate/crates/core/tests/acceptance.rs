//! Acceptance suite: every exit criterion of the build, one test per
//! criterion, each printing a PASS/FAIL line (visible with --nocapture).
//!
//! All tolerances are pinned here in code; the reference run is
//! p1 = -2, p4 = -1 with the default solver configuration.

use std::sync::OnceLock;
use std::time::Instant;

use sonic_patch::config::SolverConfig;
use sonic_patch::diagnostics::Diagnostics;
use sonic_patch::fields::CartField;

use sonic_patch::pipeline::{compute_diagnostics, compute_field, compute_mesh};

use sonic_patch::state::CartPoint;
use sonic_patch::verify::{
    commutator_residual, decomposition_residuals, jump_identity_algebraic, order_study,
    residual_cartesian, residual_polar, residual_polar_extrapolated, v_evolution_residual,
    CoeffTarget, Mutation, ALL_TARGETS,
};
use sonic_patch::wave::{trace_ab, WaveField, WaveParams};

struct ReferenceRun {
    diag: Diagnostics,
}

fn reference(refine: u32) -> &'static ReferenceRun {
    static RUNS: [OnceLock<ReferenceRun>; 2] = [OnceLock::new(), OnceLock::new()];
    RUNS[(refine - 1) as usize].get_or_init(|| {
        let cfg = SolverConfig::default().with_refine(refine);
        let mesh = compute_mesh(&cfg).expect("reference mesh");
        let field = compute_field(&cfg, &mesh).expect("reference field");
        let diag = compute_diagnostics(&cfg, &mesh, &field).expect("reference diagnostics");
        ReferenceRun { diag }
    })
}

fn check(criterion: &str, ok: bool, detail: String) {
    println!(
        "{} criterion {criterion}: {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {criterion}: {detail}");
}

/// The shipped reference configuration is pinned to the built-in defaults;
/// every anchored number in this suite refers to that run.
#[test]
fn shipped_reference_config_is_pinned() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/reference.cfg");
    let shipped = SolverConfig::load(&path).expect("shipped config parses");
    assert_eq!(shipped, SolverConfig::default());
}

/// 1. Exact-solution residual of the polar second-order equation on the
/// planar wave: |residual| <= 1e-10 at 100 sampled points after Richardson
/// extrapolation; runtime < 1 s.
#[test]
fn acceptance_01_wave_residual() {
    let start = Instant::now();
    let w = WaveParams::new(-2.0, -1.0).unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let theta = w.theta_b() + 1e-3 + (k as f64 / 99.0) * 0.70;
        let r = w.ab_radius(theta) * (0.93 + 0.06 * ((k * 7) % 10) as f64 / 10.0);
        worst = worst.max(residual_polar_extrapolated(&WaveField, r, theta, 1e-2).abs());
    }
    let elapsed = start.elapsed();
    check(
        "1",
        worst <= 1e-10 && elapsed.as_secs_f64() < 1.0,
        format!("max |polar second-order residual| = {worst:.3e} over 100 points in {elapsed:?}"),
    );
}

/// 2. Circle oracle: the traced AB characteristic terminates at B = (1,1)
/// within 1e-6 (RK4, arc step 1e-3) and deviates from xi^2+eta^2 = 2 eta by
/// at most 1e-8; runtime < 1 s.
#[test]
fn acceptance_02_circle_oracle() {
    let start = Instant::now();
    let w = WaveParams::new(-2.0, -1.0).unwrap();
    let pts = trace_ab(&w, 1e-3).unwrap();
    let end = *pts.last().unwrap();
    let end_err = (end.xi - 1.0).hypot(end.eta - 1.0);
    let mut dev: f64 = 0.0;
    for p in &pts[..pts.len() - 1] {
        dev = dev.max(((p.xi * p.xi + (p.eta - 1.0) * (p.eta - 1.0)).sqrt() - 1.0).abs());
    }
    let elapsed = start.elapsed();
    check(
        "2",
        end_err <= 1e-6 && dev <= 1e-8 && elapsed.as_secs_f64() < 1.0,
        format!("|endpoint - B| = {end_err:.3e}, max circle deviation = {dev:.3e} in {elapsed:?}"),
    );
}

/// 3. Goursat self-convergence: p at 10 fixed interior probes changes by a
/// factor <= 0.35 per mesh doubling across n in {16, 32, 64}; runtime < 30 s.
#[test]
fn acceptance_03_goursat_self_convergence() {
    let start = Instant::now();
    let probes: Vec<(f64, f64)> = (0..10)
        .map(|k| {
            let theta = 0.85 + 0.03 * k as f64;
            (theta, 2.0 * theta.sin() - 0.12)
        })
        .collect();
    let mut values = Vec::new();
    for n in [16usize, 32, 64] {
        let cfg = SolverConfig {
            n_plus: n,
            n_minus: n,
            ..SolverConfig::default()
        };
        let mesh = compute_mesh(&cfg).unwrap();
        let v: Vec<f64> = probes
            .iter()
            .map(|&(theta, r)| {
                mesh.probe_p(theta, r)
                    .unwrap_or_else(|| panic!("probe ({theta},{r}) not covered at n={n}"))
            })
            .collect();
        values.push(v);
    }
    // aggregate the probe set: per-probe difference quotients are fragile to
    // accidental error cancellation at one probe, the max over the set is not
    let e32 = (0..probes.len())
        .map(|i| (values[1][i] - values[0][i]).abs())
        .fold(0.0_f64, f64::max);
    let e64 = (0..probes.len())
        .map(|i| (values[2][i] - values[1][i]).abs())
        .fold(0.0_f64, f64::max);
    let ratio = e64 / e32;
    let elapsed = start.elapsed();
    check(
        "3",
        ratio <= 0.35 && elapsed.as_secs_f64() < 30.0,
        format!(
            "max probe change {e32:.3e} (16->32) -> {e64:.3e} (32->64), factor {ratio:.3} (<= 0.35) in {elapsed:?}"
        ),
    );
}

/// 4. Sign and boundedness: dp_plus <= 0 and dp_minus <= 0 at every mesh and
/// field node of the reference run; max magnitude <= 2x the boundary
/// supremum.
#[test]
fn acceptance_04_sign_and_boundedness() {
    let run = reference(1);
    let s = &run.diag.signs;
    check(
        "4",
        s.all_nonpositive && s.bounded_by_twice_boundary,
        format!(
            "all nonpositive = {}, interior sup {:.4} vs 2 x boundary sup {:.4}",
            s.all_nonpositive,
            s.interior_sup,
            2.0 * s.boundary_sup
        ),
    );
}

/// 5. Sonic matching: Richardson-extrapolated dp_plus and dp_minus at t = 0
/// agree within 5e-3 |p1| along the sonic line, from two independent
/// extrapolation sequences (linear in t and linear in t^2).
#[test]
fn acceptance_05_sonic_matching() {
    let run = reference(1);
    let tol = 5e-3 * 2.0;
    let s = &run.diag.sonic;
    let ok = s.max_seq_gap_dp_plus <= tol
        && s.max_seq_gap_dp_minus <= tol
        && s.max_state_mismatch <= tol;
    check(
        "5",
        ok,
        format!(
            "sequence gaps ({:.3e}, {:.3e}), dp_plus vs dp_minus mismatch {:.3e}, tol {tol:.3e} over {} columns",
            s.max_seq_gap_dp_plus, s.max_seq_gap_dp_minus, s.max_state_mismatch, s.n_columns
        ),
    );
}

/// 6. Rate law: least-squares exponent of log|dp_plus - dp_minus| vs log t
/// over t in [10 t_min, t0/4] lies in [0.9, 1.1]; fit residual reported.
#[test]
fn acceptance_06_rate_law() {
    let run = reference(1);
    let fit = run.diag.rate_fit.as_ref().expect("rate fit available");
    let ok = fit.exponent >= 0.9 && fit.exponent <= 1.1 && !fit.degenerate;
    check(
        "6",
        ok,
        format!(
            "exponent = {:.4} (fit residual {:.3e}, {} samples over t in [{:.2e}, {:.2e}])",
            fit.exponent, fit.residual, fit.n_samples, fit.t_lo, fit.t_hi
        ),
    );
}

/// 7. Weighted-derivative bounds: max |v|/t and max t^delta |dp_plus_r|,
/// t^delta |dp_minus_r| for delta in {1.1, 1.5, 1.9} change by <= 25%
/// between the two finest refinement levels.
#[test]
fn acceptance_07_weighted_bounds_stable() {
    let coarse = reference(1);
    let fine = reference(2);
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-300);

    let va = coarse.diag.sup_v_over_t.expect("v/t coarse");
    let vb = fine.diag.sup_v_over_t.expect("v/t fine");
    let mut ok = rel(va, vb) <= 0.25;
    let mut detail = format!("sup|v|/t: {va:.4} -> {vb:.4} ({:.1}%)", 100.0 * rel(va, vb));

    for (a, b) in coarse
        .diag
        .t_delta_bounds
        .iter()
        .zip(&fine.diag.t_delta_bounds)
    {
        assert_eq!(a.delta, b.delta);
        let r1 = rel(a.sup_t_delta_dp_plus_r, b.sup_t_delta_dp_plus_r);
        let r2 = rel(a.sup_t_delta_dp_minus_r, b.sup_t_delta_dp_minus_r);
        ok &= r1 <= 0.25 && r2 <= 0.25;
        detail.push_str(&format!(
            "; delta={}: ({:.1}%, {:.1}%)",
            a.delta,
            100.0 * r1,
            100.0 * r2
        ));
    }
    check("7", ok, detail);
}

/// 8. C1 sonic curve: sup_r |theta'_{eps/4} - theta'_eps| strictly decreasing
/// over at least 4 consecutive schedule steps, and sup over eps of |theta'|
/// finite and stable (<= 25%) under refinement.
#[test]
fn acceptance_08_c1_sonic_curve() {
    let coarse = reference(1);
    let fine = reference(2);
    let cs = &coarse.diag.level_curves.cauchy_sup;
    let decreasing = cs.len() >= 4 && cs.windows(2).all(|w| w[1] < w[0]);
    let sup_a = coarse
        .diag
        .level_curves
        .sup_slope
        .iter()
        .fold(0.0_f64, |m, &v| m.max(v));
    let sup_b = fine
        .diag
        .level_curves
        .sup_slope
        .iter()
        .fold(0.0_f64, |m, &v| m.max(v));
    let rel = (sup_a - sup_b).abs() / sup_a.max(sup_b);
    let ok = decreasing && sup_a.is_finite() && rel <= 0.25;
    check(
        "8",
        ok,
        format!(
            "cauchy sups {:?} decreasing = {decreasing}; sup|theta'| {sup_a:.4} -> {sup_b:.4} ({:.1}%)",
            cs.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>(),
            100.0 * rel
        ),
    );
}

/// 9. Identity certification: all verification residuals converge under
/// FD-step halving with measured order >= 0.9 of nominal, and perturbing any
/// single closed-form coefficient by 1% makes its residual plateau above 10x
/// the converged value. Runtime < 60 s total.
#[test]
fn acceptance_09_identity_certification() {
    let start = Instant::now();

    // manufactured pressure fields with hand-coded exact left sides pin the
    // FD order of the second-order-equation residuals
    struct ManufacturedCart;
    impl ManufacturedCart {
        fn p(xi: f64, eta: f64) -> f64 {
            -eta + 0.1 * (1.3 * xi).sin() * (0.7 * eta).cos()
        }
        fn exact_lhs(xi: f64, eta: f64) -> f64 {
            let p = Self::p(xi, eta);
            let s = (1.3 * xi).sin();
            let c = (1.3 * xi).cos();
            let cs = (0.7 * eta).cos();
            let sn = (0.7 * eta).sin();
            let p_xi = 0.13 * c * cs;
            let p_eta = -1.0 - 0.07 * s * sn;
            let p_xixi = -0.169 * s * cs;
            let p_etaeta = -0.049 * s * cs;
            let p_cross = -0.091 * c * sn;
            let radial = xi * p_xi + eta * p_eta;
            (p * p - xi * xi) * p_xixi - 2.0 * xi * eta * p_cross
                + (p * p - eta * eta) * p_etaeta
                + 2.0 / p * radial * radial
                - 2.0 * radial
        }
    }
    impl CartField for ManufacturedCart {
        fn p(&self, pt: CartPoint) -> f64 {
            Self::p(pt.xi, pt.eta)
        }
    }
    let mpolar = |r: f64, theta: f64| -r * theta.sin() + 0.05 * (2.0 * r).sin() * theta.cos();
    let mpolar_lhs = |r: f64, theta: f64| {
        let p = mpolar(r, theta);
        let p_r = -theta.sin() + 0.1 * (2.0 * r).cos() * theta.cos();
        let p_rr = -0.2 * (2.0 * r).sin() * theta.cos();
        let p_tt = r * theta.sin() - 0.05 * (2.0 * r).sin() * theta.cos();
        (p * p - r * r) * p_rr + p * p / (r * r) * p_tt + p * p / r * p_r
            + 2.0 * r * r / p * p_r * p_r
            - 2.0 * r * p_r
    };

    // (name, nominal order, study)
    let mut results: Vec<(&str, f64, f64, f64)> = Vec::new(); // name, nominal, order, last residual

    let pt = CartPoint::new(0.6, 1.4);
    let exact = ManufacturedCart::exact_lhs(pt.xi, pt.eta);
    let s = order_study(
        |h| Ok((residual_cartesian(&ManufacturedCart, pt, h) - exact).abs()),
        2e-2,
        3,
    )
    .unwrap();
    results.push(("second-order eq (cartesian)", 2.0, s.order, *s.residuals.last().unwrap()));

    let exact = mpolar_lhs(1.5, 1.0);
    let s = order_study(
        |h| Ok((residual_polar(&mpolar, 1.5, 1.0, h) - exact).abs()),
        2e-2,
        3,
    )
    .unwrap();
    results.push(("second-order eq (polar)", 2.0, s.order, *s.residuals.last().unwrap()));

    let s = order_study(
        |h| {
            let (a, b) = decomposition_residuals(&WaveField, 1.5, 1.0, h)?;
            Ok(a.abs().max(b.abs()))
        },
        2e-2,
        3,
    )
    .unwrap();
    results.push(("decomposition", 1.0, s.order, *s.residuals.last().unwrap()));

    let s = order_study(
        |h| Ok(commutator_residual(&WaveField, 1.6, 0.12, h, Mutation::NONE)?.residual()),
        1e-2,
        3,
    )
    .unwrap();
    results.push(("commutator 2/t + h", 2.0, s.order, *s.residuals.last().unwrap()));

    for (name, plus) in [("jump identity (plus)", true), ("jump identity (minus)", false)] {
        let s = order_study(
            |h| {
                Ok(jump_identity_algebraic(
                    1.5, 0.2, -1.1, -0.9, 0.8, -0.6, h, Mutation::NONE, plus,
                )?
                .residual())
            },
            1e-3,
            3,
        )
        .unwrap();
        results.push((name, 2.0, s.order, *s.residuals.last().unwrap()));
    }

    let s = order_study(
        |h| {
            Ok(v_evolution_residual(
                1.5, 0.15, -1.3, -0.8, 0.7, -0.4, 1.5, h, Mutation::NONE,
            )?
            .residual())
        },
        1e-2,
        3,
    )
    .unwrap();
    results.push(("v-evolution", 2.0, s.order, *s.residuals.last().unwrap()));

    let mut ok = true;
    let mut detail = String::new();
    for (name, nominal, order, last) in &results {
        let pass = order >= &(0.9 * nominal);
        ok &= pass;
        detail.push_str(&format!("{name}: order {order:.2} (res {last:.2e}); "));
    }

    // mutation canaries: each coefficient target must blow up its identity
    let mut canaries_ok = true;
    for target in ALL_TARGETS {
        let eval = |m: Mutation, h: f64| -> f64 {
            match target {
                CoeffTarget::CommutatorH => commutator_residual(&WaveField, 1.6, 0.12, h, m)
                    .unwrap()
                    .residual(),
                CoeffTarget::F1 | CoeffTarget::F2 | CoeffTarget::F3 => {
                    jump_identity_algebraic(1.5, 0.2, -1.1, -0.9, 0.8, -0.6, h, m, true)
                        .unwrap()
                        .residual()
                }
                CoeffTarget::G1 | CoeffTarget::G2 | CoeffTarget::G3 => {
                    jump_identity_algebraic(1.5, 0.2, -1.1, -0.9, 0.8, -0.6, h, m, false)
                        .unwrap()
                        .residual()
                }
                CoeffTarget::L1 | CoeffTarget::L2 => {
                    v_evolution_residual(1.5, 0.15, -1.3, -0.8, 0.7, -0.4, 1.5, h, m)
                        .unwrap()
                        .residual()
                }
            }
        };
        let clean = eval(Mutation::NONE, 1e-3);
        let mutated = eval(Mutation::scale(target, 1.01), 1e-3);
        if mutated <= 10.0 * clean.max(1e-14) {
            canaries_ok = false;
            detail.push_str(&format!("canary {target:?} failed; "));
        }
    }
    ok &= canaries_ok;

    let elapsed = start.elapsed();
    ok &= elapsed.as_secs_f64() < 60.0;
    check(
        "9",
        ok,
        format!("{detail}canaries {} in {elapsed:?}", if canaries_ok { "ok" } else { "FAILED" }),
    );
}
