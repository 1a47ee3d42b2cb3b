//! Field-provider traits: the verification and tracing machinery works
//! against these rather than against any particular solution object.

use crate::state::CartPoint;

/// Pressure field over the self-similar plane.
pub trait CartField {
    fn p(&self, pt: CartPoint) -> f64;
}

/// Pressure field in polar variables.
pub trait PolarField {
    fn p(&self, r: f64, theta: f64) -> f64;
}

/// (dp_plus, dp_minus) as functions of the degeneracy coordinates.
pub trait RtStateField {
    fn states(&self, r: f64, t: f64) -> (f64, f64);
}

impl<F: Fn(CartPoint) -> f64> CartField for F {
    fn p(&self, pt: CartPoint) -> f64 {
        self(pt)
    }
}

impl<F: Fn(f64, f64) -> f64> PolarField for F {
    fn p(&self, r: f64, theta: f64) -> f64 {
        self(r, theta)
    }
}
