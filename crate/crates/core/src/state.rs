//! Value types shared by the wave, mesh, and field modules.

/// Point in the self-similar plane (xi, eta) = (x/t, y/t).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CartPoint {
    pub xi: f64,
    pub eta: f64,
}

impl CartPoint {
    pub fn new(xi: f64, eta: f64) -> Self {
        Self { xi, eta }
    }

    pub fn radius(&self) -> f64 {
        self.xi.hypot(self.eta)
    }

    pub fn to_polar(&self) -> PolarPoint {
        PolarPoint {
            r: self.radius(),
            theta: self.eta.atan2(self.xi),
        }
    }
}

/// Polar point (r, theta) with r = sqrt(xi^2 + eta^2).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolarPoint {
    pub r: f64,
    pub theta: f64,
}

impl PolarPoint {
    pub fn new(r: f64, theta: f64) -> Self {
        Self { r, theta }
    }

    pub fn to_cart(&self) -> CartPoint {
        CartPoint {
            xi: self.r * self.theta.cos(),
            eta: self.r * self.theta.sin(),
        }
    }
}

/// Point in the degeneracy coordinates (r, t), t = sqrt(r + p).
///
/// Valid states keep t^2 < r, so p = t^2 - r stays negative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RtPoint {
    pub r: f64,
    pub t: f64,
}

impl RtPoint {
    pub fn new(r: f64, t: f64) -> Self {
        Self { r, t }
    }

    pub fn pressure(&self) -> f64 {
        self.t * self.t - self.r
    }
}

/// The unknown triple carried on characteristic meshes: p and its directional
/// derivatives along the plus and minus characteristics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PatchState {
    pub p: f64,
    /// dp_plus = directional derivative of p along the plus characteristic.
    pub dp_plus: f64,
    /// dp_minus = directional derivative of p along the minus characteristic.
    pub dp_minus: f64,
}

impl PatchState {
    pub fn new(p: f64, dp_plus: f64, dp_minus: f64) -> Self {
        Self {
            p,
            dp_plus,
            dp_minus,
        }
    }

    /// Degeneracy coordinate t = sqrt(r + p); NaN outside the supersonic region.
    pub fn t_at(&self, r: f64) -> f64 {
        (r + self.p).sqrt()
    }
}

/// Reciprocal combinations of the directional derivatives.
///
/// u = 1/dp_plus + 1/dp_minus, v = 1/dp_minus - 1/dp_plus; v vanishes where the
/// two derivatives coincide (on the sonic curve). g and h are the jumps of the
/// r-derivatives across the two characteristic directions in the (r,t) plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivedQuantities {
    pub u: f64,
    pub v: f64,
    pub g: f64,
    pub h: f64,
}
