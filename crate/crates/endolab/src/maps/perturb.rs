//! Random C¹-bounded perturbations: a lattice-periodic trigonometric
//! displacement field added to a base family. Periodicity keeps the lattice
//! action, hence the homotopy class, unchanged.

use super::{Domain, EndoMap, MapKind, Matrix2};
use crate::error::{EndoError, Result};
use crate::torus::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Δ(x, y) = (c₁ sin(ω(k₁x + l₁y) + φ₁), c₂ sin(ω(k₂x + l₂y) + φ₂)),
/// ω = 2π/side. The amplitude is scaled so that
/// sup|Δ| + sup max-entry|DΔ| equals the requested C¹ size.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TrigField {
    pub amp: (f64, f64),
    pub wave: [(f64, f64); 2],
    pub phase: (f64, f64),
    pub omega: f64,
}

impl TrigField {
    pub fn random(side: f64, c1_size: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1));
        let omega = std::f64::consts::TAU / side;
        let wave = [
            (rng.gen_range(1..=3) as f64, rng.gen_range(1..=3) as f64),
            (rng.gen_range(1..=3) as f64, rng.gen_range(1..=3) as f64),
        ];
        let phase = (rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(0.0..std::f64::consts::TAU));
        // Unit-amplitude bound: value √2, Jacobian entry ω·max wave component.
        let entry = omega
            * wave
                .iter()
                .map(|w| w.0.abs().max(w.1.abs()))
                .fold(0.0, f64::max);
        let unit_bound = std::f64::consts::SQRT_2 + entry;
        let a = c1_size / unit_bound;
        TrigField { amp: (a, a), wave, phase, omega }
    }

    pub fn eval(&self, x: f64, y: f64) -> Vector2 {
        let t1 = self.omega * (self.wave[0].0 * x + self.wave[0].1 * y) + self.phase.0;
        let t2 = self.omega * (self.wave[1].0 * x + self.wave[1].1 * y) + self.phase.1;
        Vector2::new(self.amp.0 * t1.sin(), self.amp.1 * t2.sin())
    }

    pub fn jacobian(&self, x: f64, y: f64) -> Matrix2 {
        let t1 = self.omega * (self.wave[0].0 * x + self.wave[0].1 * y) + self.phase.0;
        let t2 = self.omega * (self.wave[1].0 * x + self.wave[1].1 * y) + self.phase.1;
        Matrix2::new(
            self.amp.0 * self.omega * self.wave[0].0 * t1.cos(),
            self.amp.0 * self.omega * self.wave[0].1 * t1.cos(),
            self.amp.1 * self.omega * self.wave[1].0 * t2.cos(),
            self.amp.1 * self.omega * self.wave[1].1 * t2.cos(),
        )
    }

    /// Guaranteed bound on sup|Δ| + sup max-entry|DΔ|.
    pub fn c1_bound(&self) -> f64 {
        let value = (self.amp.0 * self.amp.0 + self.amp.1 * self.amp.1).sqrt();
        let entry = [
            self.amp.0 * self.omega * self.wave[0].0.abs(),
            self.amp.0 * self.omega * self.wave[0].1.abs(),
            self.amp.1 * self.omega * self.wave[1].0.abs(),
            self.amp.1 * self.omega * self.wave[1].1.abs(),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        value + entry
    }
}

/// A perturbed family member.
#[derive(Debug, Clone, Serialize)]
pub struct PerturbedMap {
    pub base: Box<EndoMap>,
    pub field: TrigField,
}

/// Random C¹ perturbation of a torus family, with sup value + Jacobian entry
/// norm at most `c1_size`.
pub fn perturb(map: &EndoMap, c1_size: f64, seed: u64) -> Result<EndoMap> {
    let torus = map
        .torus()
        .ok_or_else(|| EndoError::Unsupported("perturbations apply to torus maps".into()))?;
    if !(c1_size > 0.0) {
        return Err(EndoError::InvalidArgument(format!(
            "perturbation size must be positive, got {c1_size}"
        )));
    }
    let field = TrigField::random(torus.side(), c1_size, seed);
    Ok(EndoMap {
        kind: MapKind::Perturbed(PerturbedMap { base: Box::new(map.clone()), field }),
        domain: Domain::Torus(torus),
    })
}
