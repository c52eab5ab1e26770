//! Circle diffeomorphisms with one attracting and one repelling fixed point,
//! C¹-close to the identity.
//!
//! The displacement field s(y) = (1 − cos ωΔ)·sin ω(y−p) − sin ωΔ·(1 − cos ω(y−p)),
//! with ω = 2π/L and Δ = q − p, factors as
//! 4·sin(ωΔ/2)·sin(ω(y−p)/2)·sin(ω(p+Δ−y)/2), so it vanishes exactly at p and
//! q mod L and crosses upward at p, downward at q. The map y ↦ y − η·s(y)/max|s|
//! then has p attracting and q repelling, and is a diffeomorphism for small η.

use crate::error::{EndoError, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CircleMap {
    pub circumference: f64,
    pub attracting: f64,
    pub repelling: f64,
    /// Displacement amplitude after normalization: max |map(y) − y| = eta.
    pub eta: f64,
    norm: f64,
}

impl CircleMap {
    pub fn new(circumference: f64, attracting: f64, repelling: f64, eta: f64) -> Result<Self> {
        if !(circumference > 0.0) || !(eta > 0.0) {
            return Err(EndoError::InvalidArgument(format!(
                "need positive circumference and eta, got {circumference}, {eta}"
            )));
        }
        let sep = (repelling - attracting).rem_euclid(circumference);
        if sep < 1e-9 || (circumference - sep) < 1e-9 {
            return Err(EndoError::InvalidArgument(
                "attracting and repelling fixed points coincide".into(),
            ));
        }
        let mut map = CircleMap { circumference, attracting, repelling, eta, norm: 1.0 };
        let mut m: f64 = 0.0;
        for i in 0..=100_000 {
            let y = circumference * i as f64 / 100_000.0;
            m = m.max(map.raw_field(y).abs());
        }
        map.norm = m;
        let max_deriv = map.max_abs_field_deriv();
        if eta * max_deriv >= 1.0 {
            return Err(EndoError::Construction {
                inequality: "eta * max|s'| < 1 (circle diffeomorphism)".into(),
                detail: format!("eta = {eta}, max|s'| = {max_deriv}"),
            });
        }
        Ok(map)
    }

    fn omega(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.circumference
    }

    fn raw_field(&self, y: f64) -> f64 {
        let w = self.omega();
        let d = w * (self.repelling - self.attracting);
        let t = w * (y - self.attracting);
        (1.0 - d.cos()) * t.sin() - d.sin() * (1.0 - t.cos())
    }

    fn raw_field_deriv(&self, y: f64) -> f64 {
        let w = self.omega();
        let d = w * (self.repelling - self.attracting);
        let t = w * (y - self.attracting);
        w * ((1.0 - d.cos()) * t.cos() - d.sin() * t.sin())
    }

    fn max_abs_field_deriv(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..=100_000 {
            let y = self.circumference * i as f64 / 100_000.0;
            m = m.max((self.raw_field_deriv(y) / self.norm).abs());
        }
        m
    }

    /// Displacement map(y) − y; periodic with period `circumference`.
    pub fn offset(&self, y: f64) -> f64 {
        -self.eta * self.raw_field(y) / self.norm
    }

    pub fn offset_deriv(&self, y: f64) -> f64 {
        -self.eta * self.raw_field_deriv(y) / self.norm
    }

    /// Lift evaluation: degree-one, eval(y + L) = eval(y) + L.
    pub fn eval(&self, y: f64) -> f64 {
        y + self.offset(y)
    }

    pub fn deriv(&self, y: f64) -> f64 {
        1.0 + self.offset_deriv(y)
    }

    /// Inverse on the lift: the unique y with eval(y) = target.
    pub fn inverse(&self, target: f64) -> f64 {
        let mut y = target;
        for _ in 0..60 {
            let err = self.eval(y) - target;
            if err.abs() < 1e-15 {
                break;
            }
            y -= err / self.deriv(y);
        }
        y
    }

    /// max |deriv| over [lo, hi], by dense scan.
    pub fn max_deriv_on(&self, lo: f64, hi: f64) -> f64 {
        let n = 10_000;
        let mut m: f64 = 0.0;
        for i in 0..=n {
            let y = lo + (hi - lo) * i as f64 / n as f64;
            m = m.max(self.deriv(y).abs());
        }
        m
    }

    /// Verify the fixed-point structure: derivative < 1 at the attractor,
    /// > 1 at the repeller, derivative positive everywhere.
    pub fn verify_structure(&self) -> Result<()> {
        let da = self.deriv(self.attracting);
        let dr = self.deriv(self.repelling);
        if !(da < 1.0) {
            return Err(EndoError::Construction {
                inequality: "deriv(attracting) < 1".into(),
                detail: format!("got {da}"),
            });
        }
        if !(dr > 1.0) {
            return Err(EndoError::Construction {
                inequality: "deriv(repelling) > 1".into(),
                detail: format!("got {dr}"),
            });
        }
        let n = 50_000;
        for i in 0..=n {
            let y = self.circumference * i as f64 / n as f64;
            if self.deriv(y) <= 0.0 {
                return Err(EndoError::Construction {
                    inequality: "deriv > 0 everywhere (diffeomorphism)".into(),
                    detail: format!("deriv({y}) = {}", self.deriv(y)),
                });
            }
        }
        let off_a = self.offset(self.attracting).abs();
        let off_r = self.offset(self.repelling).abs();
        if off_a > 1e-12 || off_r > 1e-12 {
            return Err(EndoError::Construction {
                inequality: "fixed points of the displacement field".into(),
                detail: format!("offsets {off_a}, {off_r}"),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_points_and_classes() {
        let g = CircleMap::new(2.0, 0.0, 0.15, 0.02).unwrap();
        g.verify_structure().unwrap();
        assert!(g.offset(0.0).abs() < 1e-14);
        assert!(g.offset(0.15).abs() < 1e-12);
        assert!(g.deriv(0.0) < 1.0);
        assert!(g.deriv(0.15) > 1.0);
    }

    #[test]
    fn periodic_lift() {
        let g = CircleMap::new(2.0, 0.0, 0.15, 0.02).unwrap();
        for i in 0..50 {
            let y = -3.0 + 0.17 * i as f64;
            assert!((g.eval(y + 2.0) - (g.eval(y) + 2.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_round_trip() {
        let h = CircleMap::new(2.0, 0.3, 1.5, 0.02).unwrap();
        for i in 0..100 {
            let y = 0.02 * i as f64;
            let inv = h.inverse(h.eval(y));
            assert!((inv - y).abs() < 1e-12, "y={y} inv={inv}");
        }
    }

    #[test]
    fn amplitude_is_eta() {
        let g = CircleMap::new(2.0, 0.0, 0.15, 0.02).unwrap();
        let mut max_off: f64 = 0.0;
        for i in 0..=100_000 {
            let y = 2.0 * i as f64 / 100_000.0;
            max_off = max_off.max(g.offset(y).abs());
        }
        assert!((max_off - 0.02).abs() < 1e-9);
    }

    #[test]
    fn contraction_toward_attractor() {
        let h = CircleMap::new(2.0, 0.3, 1.5, 0.02).unwrap();
        // On [0, y0] the derivative stays below 1: pullbacks of vertical
        // segments there grow.
        let kappa = h.max_deriv_on(0.0, 0.3);
        assert!(kappa < 1.0, "kappa = {kappa}");
        // orbit of 0 sweeps up toward y0
        let mut y = 0.0;
        for _ in 0..2000 {
            y = h.eval(y);
        }
        assert!(y > 0.25 && y < 0.3 + 1e-9);
    }
}
