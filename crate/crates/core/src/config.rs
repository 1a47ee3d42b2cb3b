//! Run configuration: a plain `key = value` text file with `#` comments.
//! Missing keys take the reference defaults; unknown keys are errors.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Result, SolverError};
use crate::goursat::{GammaMinusProfile, MeshConfig};
use crate::rtfield::FieldConfig;
use crate::wave::WaveParams;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub p1: f64,
    pub p4: f64,
    pub kappa: f64,
    /// Boundary profile along the spine: dp_minus ramps linearly from 0 at B
    /// to -s0 at theta_b + theta_c_offset.
    pub s0: f64,
    pub theta_c_offset: f64,
    pub n_plus: usize,
    pub n_minus: usize,
    pub t0: f64,
    pub ab_margin: f64,
    pub eps_stop_frac: f64,
    pub corrector_tol: f64,
    pub corrector_max_iter: usize,
    pub corrector_relax: f64,
    pub dr: f64,
    pub r_window_lo: f64,
    pub r_window_hi: f64,
    pub t_min_factor: f64,
    pub dt_ratio: f64,
    pub cfl: f64,
    pub delta: f64,
    pub delta_list: Vec<f64>,
    /// Level-curve schedule; empty selects t0^2 / 4^k down to 16 t_min^2.
    pub eps_schedule: Vec<f64>,
    pub fd_step: f64,
    pub refine: u32,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            p1: -2.0,
            p4: -1.0,
            kappa: 0.5,
            s0: 1.0,
            theta_c_offset: 0.5,
            n_plus: 32,
            n_minus: 32,
            t0: 0.3,
            ab_margin: 1.25,
            eps_stop_frac: 0.5,
            corrector_tol: 1e-12,
            corrector_max_iter: 100,
            corrector_relax: 0.5,
            dr: 2e-3,
            r_window_lo: 0.05,
            r_window_hi: 0.80,
            t_min_factor: 1e-3,
            dt_ratio: 0.9,
            cfl: 0.45,
            delta: 1.5,
            delta_list: vec![1.1, 1.5, 1.9],
            eps_schedule: Vec::new(),
            fd_step: 1e-2,
            refine: 1,
        }
    }
}

macro_rules! setters {
    ($cfg:ident, $key:ident, $val:ident, $line:ident; $($name:ident : $kind:tt),+ $(,)?) => {
        match $key {
            $(stringify!($name) => setters!(@set $cfg, $name, $kind, $val, $line, $key),)+
            _ => {
                return Err(SolverError::Config {
                    line: $line,
                    key: $key.to_string(),
                    msg: "unknown key".into(),
                })
            }
        }
    };
    (@set $cfg:ident, $name:ident, f64, $val:ident, $line:ident, $key:ident) => {
        $cfg.$name = parse_num($val, $line, $key)?
    };
    (@set $cfg:ident, $name:ident, usize, $val:ident, $line:ident, $key:ident) => {
        $cfg.$name = parse_usize($val, $line, $key)?
    };
    (@set $cfg:ident, $name:ident, u32, $val:ident, $line:ident, $key:ident) => {
        $cfg.$name = parse_usize($val, $line, $key)? as u32
    };
    (@set $cfg:ident, $name:ident, list, $val:ident, $line:ident, $key:ident) => {
        $cfg.$name = parse_list($val, $line, $key)?
    };
}

fn parse_num(v: &str, line: usize, key: &str) -> Result<f64> {
    v.trim().parse::<f64>().map_err(|e| SolverError::Config {
        line,
        key: key.to_string(),
        msg: format!("bad number '{v}': {e}"),
    })
}

fn parse_usize(v: &str, line: usize, key: &str) -> Result<usize> {
    v.trim().parse::<usize>().map_err(|e| SolverError::Config {
        line,
        key: key.to_string(),
        msg: format!("bad integer '{v}': {e}"),
    })
}

fn parse_list(v: &str, line: usize, key: &str) -> Result<Vec<f64>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|part| parse_num(part, line, key))
        .collect()
}

impl SolverConfig {
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, val)) = content.split_once('=') else {
                return Err(SolverError::Config {
                    line,
                    key: content.to_string(),
                    msg: "expected 'key = value'".into(),
                });
            };
            let key = key.trim();
            let val = val.trim();
            setters!(cfg, key, val, line;
                p1: f64, p4: f64, kappa: f64, s0: f64, theta_c_offset: f64,
                n_plus: usize, n_minus: usize, t0: f64, ab_margin: f64,
                eps_stop_frac: f64, corrector_tol: f64, corrector_max_iter: usize,
                corrector_relax: f64, dr: f64, r_window_lo: f64, r_window_hi: f64,
                t_min_factor: f64, dt_ratio: f64, cfl: f64, delta: f64,
                delta_list: list, eps_schedule: list, fd_step: f64, refine: u32,
            );
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| SolverError::Config {
            line: 0,
            key: key.to_string(),
            msg,
        };
        if !(self.p1 < self.p4 && self.p4 < 0.0) {
            return Err(bad("p1", format!("need p1 < p4 < 0, got ({}, {})", self.p1, self.p4)));
        }
        if self.n_plus < 8 || self.n_minus < 8 {
            return Err(bad("n_plus", "mesh sizes must be at least 8".into()));
        }
        // the handoff level must sit below the corner data r + p at B
        let sin_b = (self.p4 / self.p1).sqrt();
        let corner = self.p1.abs() * sin_b * (1.0 - sin_b);
        if self.t0 * self.t0 >= corner {
            return Err(bad(
                "t0",
                format!("t0^2 = {:.4e} must stay below the corner r+p = {corner:.4e}", self.t0 * self.t0),
            ));
        }
        if !(self.delta > 1.0 && self.delta < 2.0) {
            return Err(bad("delta", format!("delta = {} outside (1, 2)", self.delta)));
        }
        for &d in &self.delta_list {
            if !(d > 1.0 && d < 2.0) {
                return Err(bad("delta_list", format!("delta = {d} outside (1, 2)")));
            }
        }
        if !(self.r_window_lo >= 0.0 && self.r_window_lo < self.r_window_hi && self.r_window_hi <= 1.0) {
            return Err(bad("r_window_lo", "need 0 <= lo < hi <= 1".into()));
        }
        for &e in &self.eps_schedule {
            if !(e > 0.0 && e < self.t0 * self.t0 * (1.0 + 1e-12)) {
                return Err(bad(
                    "eps_schedule",
                    format!("eps = {e} outside (0, t0^2]"),
                ));
            }
        }
        if self.refine == 0 {
            return Err(bad("refine", "refine must be positive".into()));
        }
        // positivity / range guards; NaN fails every comparison below
        if !(self.dr > 0.0) {
            return Err(bad("dr", format!("dr = {} must be positive", self.dr)));
        }
        if !(self.t_min_factor > 0.0 && self.t_min_factor < 0.1) {
            return Err(bad("t_min_factor", "need 0 < t_min_factor < 0.1".into()));
        }
        if !(self.dt_ratio > 0.5 && self.dt_ratio < 1.0) {
            return Err(bad("dt_ratio", "need 0.5 < dt_ratio < 1".into()));
        }
        if !(self.cfl > 0.0 && self.cfl <= 0.9) {
            return Err(bad("cfl", "need 0 < cfl <= 0.9".into()));
        }
        if !(self.kappa > 0.0)
            || !(self.s0 >= 0.0)
            || !(self.theta_c_offset > 0.0)
            || !(self.fd_step > 0.0)
        {
            return Err(bad(
                "kappa",
                "kappa, theta_c_offset, fd_step must be positive and s0 nonnegative".into(),
            ));
        }
        if !(self.eps_stop_frac > 0.0 && self.eps_stop_frac < 1.0) {
            return Err(bad("eps_stop_frac", "need 0 < eps_stop_frac < 1".into()));
        }
        if !(self.ab_margin >= 1.0) {
            return Err(bad("ab_margin", "need ab_margin >= 1".into()));
        }
        if !(self.corrector_tol > 0.0)
            || !(self.corrector_relax > 0.0 && self.corrector_relax <= 1.0)
            || self.corrector_max_iter == 0
        {
            return Err(bad(
                "corrector_tol",
                "corrector tolerance, relaxation, and budget must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Global mesh-refinement multiplier: mesh sizes scale up, grid spacing
    /// down, and the geometric t-step ratio moves toward 1 so the t-steps
    /// shrink by the same factor.
    pub fn with_refine(&self, k: u32) -> Self {
        let mut out = self.clone();
        out.refine = k;
        out.n_plus = self.n_plus * k as usize;
        out.n_minus = self.n_minus * k as usize;
        out.dr = self.dr / k as f64;
        out.dt_ratio = self.dt_ratio.powf(1.0 / k as f64);
        out
    }

    /// Canonical serialization: every key in fixed order, round-trip decimal
    /// precision. The config hash is the SHA-256 of this string.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        writeln!(s, "p1 = {}", self.p1).unwrap();
        writeln!(s, "p4 = {}", self.p4).unwrap();
        writeln!(s, "kappa = {}", self.kappa).unwrap();
        writeln!(s, "s0 = {}", self.s0).unwrap();
        writeln!(s, "theta_c_offset = {}", self.theta_c_offset).unwrap();
        writeln!(s, "n_plus = {}", self.n_plus).unwrap();
        writeln!(s, "n_minus = {}", self.n_minus).unwrap();
        writeln!(s, "t0 = {}", self.t0).unwrap();
        writeln!(s, "ab_margin = {}", self.ab_margin).unwrap();
        writeln!(s, "eps_stop_frac = {}", self.eps_stop_frac).unwrap();
        writeln!(s, "corrector_tol = {}", self.corrector_tol).unwrap();
        writeln!(s, "corrector_max_iter = {}", self.corrector_max_iter).unwrap();
        writeln!(s, "corrector_relax = {}", self.corrector_relax).unwrap();
        writeln!(s, "dr = {}", self.dr).unwrap();
        writeln!(s, "r_window_lo = {}", self.r_window_lo).unwrap();
        writeln!(s, "r_window_hi = {}", self.r_window_hi).unwrap();
        writeln!(s, "t_min_factor = {}", self.t_min_factor).unwrap();
        writeln!(s, "dt_ratio = {}", self.dt_ratio).unwrap();
        writeln!(s, "cfl = {}", self.cfl).unwrap();
        writeln!(s, "delta = {}", self.delta).unwrap();
        let list = self
            .delta_list
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join(",");
        writeln!(s, "delta_list = {list}").unwrap();
        let eps = self
            .eps_schedule
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join(",");
        writeln!(s, "eps_schedule = {eps}").unwrap();
        writeln!(s, "fd_step = {}", self.fd_step).unwrap();
        writeln!(s, "refine = {}", self.refine).unwrap();
        s
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn wave(&self) -> Result<WaveParams> {
        WaveParams::with_kappa(self.p1, self.p4, self.kappa)
    }

    pub fn profile(&self) -> Result<GammaMinusProfile> {
        Ok(GammaMinusProfile {
            s0: self.s0,
            theta_c: self.wave()?.theta_b() + self.theta_c_offset,
        })
    }

    pub fn mesh_config(&self) -> MeshConfig {
        MeshConfig {
            n_plus: self.n_plus,
            n_minus: self.n_minus,
            t0: self.t0,
            ab_margin: self.ab_margin,
            eps_stop_frac: self.eps_stop_frac,
            corrector_tol: self.corrector_tol,
            corrector_max_iter: self.corrector_max_iter,
            corrector_relax: self.corrector_relax,
        }
    }

    pub fn field_config(&self) -> FieldConfig {
        FieldConfig {
            dr: self.dr,
            window: (self.r_window_lo, self.r_window_hi),
            t_min_factor: self.t_min_factor,
            dt_ratio: self.dt_ratio,
            cfl: self.cfl,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_canonical_form() {
        let cfg = SolverConfig::default();
        let parsed = SolverConfig::parse_str(&cfg.canonical()).unwrap();
        assert_eq!(cfg, parsed);
        assert_eq!(cfg.hash(), parsed.hash());
    }

    #[test]
    fn parse_overrides_and_comments() {
        let text = "# reference run\n p1 = -2.5\nn_plus = 16 # coarse\n\ndelta_list = 1.2, 1.8\n";
        let cfg = SolverConfig::parse_str(text).unwrap();
        assert_eq!(cfg.p1, -2.5);
        assert_eq!(cfg.n_plus, 16);
        assert_eq!(cfg.delta_list, vec![1.2, 1.8]);
        assert_eq!(cfg.p4, -1.0); // default preserved
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = SolverConfig::parse_str("p1 = -2\nwhatever = 3\n").unwrap_err();
        match err {
            SolverError::Config { line, key, .. } => {
                assert_eq!(line, 2);
                assert_eq!(key, "whatever");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn bad_value_reports_line_and_key() {
        let err = SolverConfig::parse_str("t0 = zero point three\n").unwrap_err();
        match err {
            SolverError::Config { line, key, .. } => {
                assert_eq!(line, 1);
                assert_eq!(key, "t0");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn semantic_validation() {
        assert!(SolverConfig::parse_str("p1 = -1\np4 = -2\n").is_err());
        assert!(SolverConfig::parse_str("n_plus = 4\n").is_err());
        assert!(SolverConfig::parse_str("t0 = 0.9\n").is_err());
        assert!(SolverConfig::parse_str("delta = 2.5\n").is_err());
    }

    #[test]
    fn refine_scales_resolution() {
        let cfg = SolverConfig::default().with_refine(2);
        assert_eq!(cfg.n_plus, 64);
        assert_eq!(cfg.dr, 1e-3);
        assert!((cfg.dt_ratio - 0.9_f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = SolverConfig::default();
        let mut b = a.clone();
        b.t0 = 0.25;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), SolverConfig::default().hash());
        assert_eq!(a.hash().len(), 64);
    }
}
