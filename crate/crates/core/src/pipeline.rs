//! Orchestration of the full run: wave tracing, Goursat solve, near-sonic
//! march, regularity diagnostics, identity verification, and artifact
//! emission with a deterministic manifest.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::config::SolverConfig;
use crate::diagnostics::{diagnostics, strict_violations, DiagConfig, Diagnostics};
use crate::error::Result;
use crate::goursat::{solve, CharacteristicMesh};
use crate::rtfield::{handoff, rt_march, RtField};
use crate::verify::{
    commutator_residual, decomposition_residuals, jump_identity_algebraic,
    jump_identity_dp_minus, jump_identity_dp_plus, order_study, residual_cartesian_extrapolated,
    residual_polar, residual_polar_extrapolated, v_evolution_field_residual, v_evolution_residual,
    FieldPolarPressure, FieldStates, Mutation, ResidualEntry, ResidualReport,
};
use crate::wave::{trace_ab, trace_minus_from_b, WaveField, WaveParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Trace,
    Solve,
    March,
    Diagnose,
    Verify,
    All,
}

#[derive(Debug, Default)]
pub struct RunOutcome {
    pub artifacts: Vec<String>,
    pub violations: Vec<String>,
}

pub fn compute_mesh(cfg: &SolverConfig) -> Result<CharacteristicMesh> {
    solve(&cfg.wave()?, &cfg.profile()?, &cfg.mesh_config())
}

pub fn compute_field(cfg: &SolverConfig, mesh: &CharacteristicMesh) -> Result<RtField> {
    let fcfg = cfg.field_config();
    let mut field = handoff(mesh, &fcfg)?;
    rt_march(&mut field, &fcfg)?;
    Ok(field)
}

pub fn compute_diagnostics(
    cfg: &SolverConfig,
    mesh: &CharacteristicMesh,
    field: &RtField,
) -> Result<Diagnostics> {
    let dcfg = DiagConfig {
        delta: cfg.delta,
        delta_list: cfg.delta_list.clone(),
        eps_schedule: cfg.eps_schedule.clone(),
        ..DiagConfig::reference(cfg.p1)
    };
    diagnostics(field, mesh, &dcfg)
}

/// Identity certification on the reference wave and on the computed field:
/// per-identity order studies where an exact field is available, pointwise
/// residuals on the computed field.
pub fn build_residual_report(cfg: &SolverConfig, field: &RtField) -> Result<ResidualReport> {
    let mut report = ResidualReport::default();
    let w = cfg.wave()?;
    let h0 = cfg.fd_step;

    // sample points inside the wave strip for the exact-solution residuals
    let wave_pts: Vec<(f64, f64)> = (0..25)
        .map(|k| {
            let theta = w.theta_b() + 0.02 + 0.028 * k as f64;
            let r = w.ab_radius(theta) * 0.995;
            (r, theta)
        })
        .collect();

    let mut push = |identity: &str, location: String, h: f64, residual: f64, order: Option<f64>| {
        report.entries.push(ResidualEntry {
            identity: identity.to_string(),
            location,
            h,
            residual,
            order,
        });
    };

    // second-order equation, both coordinate forms, on the exact wave
    let mut worst_cart = 0.0_f64;
    let mut worst_polar = 0.0_f64;
    for &(r, theta) in &wave_pts {
        let pt = crate::state::PolarPoint::new(r, theta).to_cart();
        worst_cart = worst_cart.max(residual_cartesian_extrapolated(&WaveField, pt, h0).abs());
        worst_polar = worst_polar.max(residual_polar_extrapolated(&WaveField, r, theta, h0).abs());
    }
    push("eq_cartesian/wave", format!("{} points", wave_pts.len()), h0, worst_cart, None);
    push("eq_polar/wave", format!("{} points", wave_pts.len()), h0, worst_polar, None);

    // characteristic decomposition on the wave (nested directional FD)
    let (rd, td) = (1.5, 1.0);
    let study = order_study(
        |h| {
            let (a, b) = decomposition_residuals(&WaveField, rd, td, h)?;
            Ok(a.abs().max(b.abs()))
        },
        h0,
        3,
    )?;
    push(
        "decomposition/wave",
        format!("(r,theta)=({rd},{td})"),
        *study.hs.last().unwrap(),
        *study.residuals.last().unwrap(),
        Some(study.order),
    );

    // commutator ratio on the wave and on the computed field
    let (rc, tc) = (1.6, 0.12);
    let study = order_study(
        |h| Ok(commutator_residual(&WaveField, rc, tc, h, Mutation::NONE)?.residual()),
        1e-2,
        3,
    )?;
    push(
        "commutator/wave",
        format!("(r,t)=({rc},{tc})"),
        *study.hs.last().unwrap(),
        *study.residuals.last().unwrap(),
        Some(study.order),
    );

    let provider = FieldStates { field };
    let mid_level = &field.levels[field.levels.len() / 3];
    let t_f = mid_level.t;
    let r_f = field.r_of((mid_level.lo + mid_level.hi()) / 2);
    let res = commutator_residual(&provider, r_f, t_f, 0.02 * t_f, Mutation::NONE)?;
    push(
        "commutator/field",
        format!("(r,t)=({r_f:.4},{t_f:.4})"),
        0.02 * t_f,
        res.residual() / res.scale(),
        None,
    );

    // second-order equation and its decomposition on the computed patch,
    // through the theta-augmented pressure provider
    let pfield = FieldPolarPressure { field };
    let half_idx = field
        .levels
        .iter()
        .position(|lv| lv.t <= 0.5 * field.t0)
        .unwrap_or(field.levels.len() / 2);
    let half = &field.levels[half_idx];
    let k_half = (half.lo + half.hi()) / 2;
    let (r_h, th_h) = (field.r_of(k_half), half.theta[k_half - half.lo]);
    let h_patch = 4.0 * field.dr;
    push(
        "eq_polar/patch",
        format!("(r,theta)=({r_h:.4},{th_h:.4})"),
        h_patch,
        residual_polar(&pfield, r_h, th_h, h_patch).abs(),
        None,
    );
    let (d1, d2) = decomposition_residuals(&pfield, r_h, th_h, h_patch)?;
    push(
        "decomposition/patch",
        format!("(r,theta)=({r_h:.4},{th_h:.4})"),
        h_patch,
        d1.abs().max(d2.abs()),
        None,
    );

    // jump identities: algebraic order studies plus field samples
    for (name, plus) in [("jump_plus", true), ("jump_minus", false)] {
        let study = order_study(
            |h| {
                Ok(jump_identity_algebraic(
                    1.5, 0.2, -1.1, -0.9, 0.8, -0.6, h, Mutation::NONE, plus,
                )?
                .residual())
            },
            1e-3,
            3,
        )?;
        push(
            &format!("{name}/algebraic"),
            "(1.5,0.2,-1.1,-0.9,0.8,-0.6)".into(),
            *study.hs.last().unwrap(),
            *study.residuals.last().unwrap(),
            Some(study.order),
        );
        let res = if plus {
            jump_identity_dp_plus(&provider, r_f, t_f, 2.0 * field.dr, Mutation::NONE)?
        } else {
            jump_identity_dp_minus(&provider, r_f, t_f, 2.0 * field.dr, Mutation::NONE)?
        };
        push(
            &format!("{name}/field"),
            format!("(r,t)=({r_f:.4},{t_f:.4})"),
            2.0 * field.dr,
            res.residual() / res.scale(),
            None,
        );
    }

    // jump identity on the wave in its (r,t) closed form
    let study = order_study(
        |h| Ok(jump_identity_dp_plus(&WaveField, 1.5, 0.1, h, Mutation::NONE)?.residual()),
        4e-3,
        3,
    )?;
    push(
        "jump_plus/wave",
        "(r,t)=(1.5,0.1)".into(),
        *study.hs.last().unwrap(),
        *study.residuals.last().unwrap(),
        Some(study.order),
    );

    // v evolution: frozen-gradient order study and a field sample
    let study = order_study(
        |h| {
            Ok(v_evolution_residual(
                1.5, 0.15, -1.3, -0.8, 0.7, -0.4, cfg.delta, h, Mutation::NONE,
            )?
            .residual())
        },
        1e-2,
        3,
    )?;
    push(
        "v_evolution/frozen",
        "(1.5,0.15,-1.3,-0.8,0.7,-0.4)".into(),
        *study.hs.last().unwrap(),
        *study.residuals.last().unwrap(),
        Some(study.order),
    );
    let li = field.levels.len() / 3;
    let kg = (field.levels[li].lo + field.levels[li].hi()) / 2;
    let res = v_evolution_field_residual(field, li, kg, cfg.delta, Mutation::NONE)?;
    push(
        "v_evolution/field",
        format!("level {li}, r={:.4}", field.r_of(kg)),
        field.levels[li - 1].t - field.levels[li + 1].t,
        res.residual() / res.scale(),
        None,
    );

    Ok(report)
}

fn write_wave_trace_csv(
    path: &Path,
    pts: &[crate::state::CartPoint],
    w: &WaveParams,
) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "xi,eta,r,theta,p,R,S")?;
    for c in pts {
        let pol = c.to_polar();
        // wave closed forms; dp_plus = -2 r cos(theta), dp_minus = 0
        let state = (-2.0 * pol.r * pol.theta.cos(), 0.0);
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            c.xi,
            c.eta,
            pol.r,
            pol.theta,
            -c.eta,
            state.0,
            state.1
        )?;
    }
    let _ = w;
    Ok(())
}

/// Run one pipeline stage, writing its artifacts plus the manifest into
/// `out_dir`. `strict` only affects the diagnose/all stages.
pub fn run(cfg: &SolverConfig, stage: Stage, out_dir: &Path, strict: bool) -> Result<RunOutcome> {
    fs::create_dir_all(out_dir)?;
    let mut outcome = RunOutcome::default();
    let artifact = |name: &str| out_dir.join(name);

    let wave = cfg.wave()?;

    if matches!(stage, Stage::Trace) {
        let ab = trace_ab(&wave, 1e-3)?;
        write_wave_trace_csv(&artifact("trace_ab.csv"), &ab, &wave)?;
        outcome.artifacts.push("trace_ab.csv".into());
        let minus = trace_minus_from_b(&wave, 1e-3)?;
        write_wave_trace_csv(&artifact("trace_minus_b.csv"), &minus, &wave)?;
        outcome.artifacts.push("trace_minus_b.csv".into());
    }

    let needs_mesh = !matches!(stage, Stage::Trace);
    if needs_mesh {
        let mesh = compute_mesh(cfg)?;
        if matches!(stage, Stage::Solve | Stage::All) {
            let mut out = BufWriter::new(fs::File::create(artifact("mesh.csv"))?);
            mesh.write_csv(&mut out)?;
            outcome.artifacts.push("mesh.csv".into());
        }
        if !matches!(stage, Stage::Solve) {
            let field = compute_field(cfg, &mesh)?;
            if matches!(stage, Stage::March | Stage::All) {
                let mut out = BufWriter::new(fs::File::create(artifact("field.csv"))?);
                field.write_csv(&mut out)?;
                outcome.artifacts.push("field.csv".into());
            }
            if matches!(stage, Stage::Diagnose | Stage::All) {
                let d = compute_diagnostics(cfg, &mesh, &field)?;
                let out = BufWriter::new(fs::File::create(artifact("diagnostics.json"))?);
                serde_json::to_writer_pretty(out, &d)?;
                outcome.artifacts.push("diagnostics.json".into());
                if strict {
                    let dcfg = DiagConfig {
                        delta: cfg.delta,
                        delta_list: cfg.delta_list.clone(),
                        eps_schedule: cfg.eps_schedule.clone(),
                        ..DiagConfig::reference(cfg.p1)
                    };
                    outcome.violations = strict_violations(&d, &dcfg);
                }
            }
            if matches!(stage, Stage::Verify | Stage::All) {
                let report = build_residual_report(cfg, &field)?;
                report.write_json(BufWriter::new(fs::File::create(artifact("residuals.json"))?))?;
                outcome.artifacts.push("residuals.json".into());
                report.write_csv(BufWriter::new(fs::File::create(artifact("residuals.csv"))?))?;
                outcome.artifacts.push("residuals.csv".into());
            }
        }
    }

    write_manifest(cfg, out_dir, &outcome, &wave)?;
    Ok(outcome)
}

/// Deterministic manifest (config hash, artifact list, canonical config);
/// the wall-clock stamp goes to a separate file so artifact bytes stay
/// reproducible.
fn write_manifest(
    cfg: &SolverConfig,
    out_dir: &Path,
    outcome: &RunOutcome,
    wave: &WaveParams,
) -> Result<()> {
    let mut m = BufWriter::new(fs::File::create(out_dir.join("manifest.txt"))?);
    writeln!(m, "config_hash = {}", cfg.hash())?;
    writeln!(m, "artifacts = {}", outcome.artifacts.join(","))?;
    writeln!(m, "closeness_ok = {}", wave.closeness_ok())?;
    writeln!(m, "[config]")?;
    write!(m, "{}", cfg.canonical())?;

    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut t = BufWriter::new(fs::File::create(out_dir.join("timestamp.txt"))?);
    writeln!(t, "unix_seconds = {stamp}")?;
    Ok(())
}

/// Map an error to the documented CLI exit code, a strict violation to 4.
pub fn exit_code_for(result: &Result<RunOutcome>, strict: bool) -> i32 {
    match result {
        Ok(outcome) => {
            if strict && !outcome.violations.is_empty() {
                4
            } else {
                0
            }
        }
        Err(e) => e.exit_code(),
    }
}
