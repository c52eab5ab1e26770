//! One-dimensional profiles: the C^∞ bump ψ, the compactly supported
//! perturbation profile φ, and the C¹ cutoffs used by the flattening and
//! collapse constructions.
//!
//! φ is built from its derivative: a narrow quartic spike of height exactly 1
//! centered at δ/2, balanced by two shallow quartic wells so that
//! ∫φ′ = 0 and φ vanishes at both support ends. The spike width is a fraction
//! `spike_frac` of δ; the well depth is then 2β/(1−2β), so for the default
//! β = 1/16 the derivative ranges over [−1/7, 1]. Keeping the negative part
//! shallow is what makes |μ − ψ(x)φ′(y)| stay below |λ| for every family we
//! construct, which the cone-field checks require.

use crate::error::{EndoError, Result};
use serde::{Deserialize, Serialize};

/// Standard bump kernel b(u) = exp(1 − 1/(1−u²)) on (−1, 1), zero outside.
/// b(0) = 1, unique maximum at 0, C^∞ on ℝ.
pub fn bump_kernel(u: f64) -> f64 {
    let u2 = u * u;
    if u2 >= 1.0 - 1e-12 {
        return 0.0;
    }
    (1.0 - 1.0 / (1.0 - u2)).exp()
}

/// Derivative of [`bump_kernel`].
pub fn bump_kernel_deriv(u: f64) -> f64 {
    let u2 = u * u;
    if u2 >= 1.0 - 1e-12 {
        return 0.0;
    }
    let den = 1.0 - u2;
    bump_kernel(u) * (-2.0 * u / (den * den))
}

/// The even C^∞ bump ψ: peak `height` at `center`, support
/// [center − θ, center + θ].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BumpPsi {
    pub theta: f64,
    pub height: f64,
    pub center: f64,
}

impl BumpPsi {
    pub fn new(theta: f64, height: f64, center: f64) -> Result<Self> {
        if !(theta > 0.0) || !theta.is_finite() || !height.is_finite() || !center.is_finite() {
            return Err(EndoError::InvalidArgument(format!(
                "bad bump parameters theta={theta} height={height} center={center}"
            )));
        }
        Ok(BumpPsi { theta, height, center })
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.height * bump_kernel((x - self.center) / self.theta)
    }

    pub fn deriv(&self, x: f64) -> f64 {
        self.height / self.theta * bump_kernel_deriv((x - self.center) / self.theta)
    }

    /// max |ψ′| over the support, by dense scan at the given resolution.
    /// This is the constant M entering the cone-parameter inequality.
    pub fn max_abs_deriv(&self, resolution: usize) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..=resolution {
            let u = -1.0 + 2.0 * i as f64 / resolution as f64;
            m = m.max((self.height / self.theta * bump_kernel_deriv(u)).abs());
        }
        m
    }
}

/// Quartic bump Q(s) = (1−s²)² on [−1, 1]; Q and Q′ vanish at ±1.
fn quartic(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        return 0.0;
    }
    let t = 1.0 - s * s;
    t * t
}

fn quartic_deriv(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        return 0.0;
    }
    -4.0 * s * (1.0 - s * s)
}

/// ∫_{−1}^{s} Q = s − 2s³/3 + s⁵/5 + 8/15, clamped to [0, 16/15].
fn quartic_integral(s: f64) -> f64 {
    if s <= -1.0 {
        return 0.0;
    }
    if s >= 1.0 {
        return 16.0 / 15.0;
    }
    s - 2.0 * s.powi(3) / 3.0 + s.powi(5) / 5.0 + 8.0 / 15.0
}

/// The compactly supported profile φ on [base, base + δ], specified through
/// its derivative (spike at δ/2 of height `midslope` = 1, shallow balancing
/// wells on both sides). φ(base) = φ(base+δ) = 0 and the one-sided
/// derivatives vanish at the support ends.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BumpPhi {
    pub delta: f64,
    pub base: f64,
    pub midslope: f64,
    /// Spike half-width as a fraction of δ. Must lie in (0, 1/4).
    pub spike_frac: f64,
}

impl BumpPhi {
    pub const DEFAULT_SPIKE_FRAC: f64 = 1.0 / 16.0;

    pub fn new(delta: f64, base: f64) -> Result<Self> {
        Self::with_spike_frac(delta, base, Self::DEFAULT_SPIKE_FRAC)
    }

    pub fn with_spike_frac(delta: f64, base: f64, spike_frac: f64) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() || !base.is_finite() {
            return Err(EndoError::InvalidArgument(format!(
                "bad profile parameters delta={delta} base={base}"
            )));
        }
        if !(spike_frac > 0.0 && spike_frac < 0.25) {
            return Err(EndoError::InvalidArgument(format!(
                "spike_frac must lie in (0, 1/4), got {spike_frac}"
            )));
        }
        Ok(BumpPhi { delta, base, midslope: 1.0, spike_frac })
    }

    /// Well depth c = 2β/(1−2β); φ′ ranges over [−c, 1].
    pub fn well_depth(&self) -> f64 {
        2.0 * self.spike_frac / (1.0 - 2.0 * self.spike_frac)
    }

    /// max |φ| = (8/15)·β·δ, attained next to the spike.
    pub fn max_abs(&self) -> f64 {
        8.0 / 15.0 * self.spike_frac * self.delta
    }

    fn pieces(&self) -> (f64, f64, f64, f64) {
        let w = self.spike_frac * self.delta; // spike half-width
        let m = self.delta / 2.0; // spike center (offset from base)
        let h1 = (m - w) / 2.0; // well half-width
        let c = self.well_depth();
        (w, m, h1, c)
    }

    pub fn deriv(&self, y: f64) -> f64 {
        let u = y - self.base;
        if u <= 0.0 || u >= self.delta {
            return 0.0;
        }
        let (w, m, h1, c) = self.pieces();
        if u < m - w {
            -c * quartic((u - h1) / h1)
        } else if u <= m + w {
            self.midslope * quartic((u - m) / w)
        } else {
            -c * quartic((u - (self.delta - h1)) / h1)
        }
    }

    /// Second derivative, used by curvature estimates in tests.
    pub fn deriv2(&self, y: f64) -> f64 {
        let u = y - self.base;
        if u <= 0.0 || u >= self.delta {
            return 0.0;
        }
        let (w, m, h1, c) = self.pieces();
        if u < m - w {
            -c * quartic_deriv((u - h1) / h1) / h1
        } else if u <= m + w {
            self.midslope * quartic_deriv((u - m) / w) / w
        } else {
            -c * quartic_deriv((u - (self.delta - h1)) / h1) / h1
        }
    }

    pub fn eval(&self, y: f64) -> f64 {
        let u = y - self.base;
        if u <= 0.0 || u >= self.delta {
            return 0.0;
        }
        let (w, m, h1, c) = self.pieces();
        let well = 16.0 / 15.0 * h1 * c; // integral of one well
        if u < m - w {
            -c * h1 * quartic_integral((u - h1) / h1)
        } else if u <= m + w {
            -well + self.midslope * w * quartic_integral((u - m) / w)
        } else {
            -well + self.midslope * w * 16.0 / 15.0
                - c * h1 * quartic_integral((u - (self.delta - h1)) / h1)
        }
    }
}

/// Piecewise-quadratic smoothed ramp on [0, 1]: S(0) = 0, S(1) = 1, C¹ with
/// S′ = 0 at both ends, linear in the middle. The corner rounding occupies a
/// `rounding` fraction of the band at each end, so max S′ = 1/(1−rounding).
fn smoothed_ramp(t: f64, rounding: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let smax = 1.0 / (1.0 - rounding);
    if t < rounding {
        smax * t * t / (2.0 * rounding)
    } else if t <= 1.0 - rounding {
        smax * (t - rounding / 2.0)
    } else {
        1.0 - smax * (1.0 - t) * (1.0 - t) / (2.0 * rounding)
    }
}

fn smoothed_ramp_deriv(t: f64, rounding: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        return 0.0;
    }
    let smax = 1.0 / (1.0 - rounding);
    if t < rounding {
        smax * t / rounding
    } else if t <= 1.0 - rounding {
        smax
    } else {
        smax * (1.0 - t) / rounding
    }
}

const RAMP_ROUNDING: f64 = 0.05;

/// Even C¹ cutoff in one variable: 0 on [−δ/2, δ/2], 1 for |y| ≥ δ, monotone
/// on each transition band. Max slope is (2/δ)/(1−0.05); the 5% excess over
/// 2/δ is reported by [`FoldCutoff::slope_excess`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FoldCutoff {
    pub delta: f64,
}

impl FoldCutoff {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(EndoError::InvalidArgument(format!("delta must be positive, got {delta}")));
        }
        Ok(FoldCutoff { delta })
    }

    pub fn eval(&self, y: f64) -> f64 {
        let t = (y.abs() - self.delta / 2.0) / (self.delta / 2.0);
        smoothed_ramp(t, RAMP_ROUNDING)
    }

    pub fn deriv(&self, y: f64) -> f64 {
        let t = (y.abs() - self.delta / 2.0) / (self.delta / 2.0);
        let d = smoothed_ramp_deriv(t, RAMP_ROUNDING) * 2.0 / self.delta;
        if y < 0.0 {
            -d
        } else {
            d
        }
    }

    /// Achieved excess η over the nominal 2/δ slope bound: max|c′| = (2/δ)(1+η).
    pub fn slope_excess(&self) -> f64 {
        1.0 / (1.0 - RAMP_ROUNDING) - 1.0
    }
}

/// Radial C¹ cutoff as a function of s = x² + y²: 0 for s ≤ (δ/2)², 1 for
/// s ≥ δ², monotone in between.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RadialCutoff {
    pub delta: f64,
}

impl RadialCutoff {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(EndoError::InvalidArgument(format!("delta must be positive, got {delta}")));
        }
        Ok(RadialCutoff { delta })
    }

    fn band(&self) -> (f64, f64) {
        let lo = (self.delta / 2.0) * (self.delta / 2.0);
        let hi = self.delta * self.delta;
        (lo, hi - lo)
    }

    pub fn eval_s(&self, s: f64) -> f64 {
        let (lo, width) = self.band();
        smoothed_ramp((s - lo) / width, RAMP_ROUNDING)
    }

    /// d/ds of the cutoff.
    pub fn deriv_s(&self, s: f64) -> f64 {
        let (lo, width) = self.band();
        smoothed_ramp_deriv((s - lo) / width, RAMP_ROUNDING) / width
    }

    pub fn max_abs_deriv_s(&self) -> f64 {
        let (_, width) = self.band();
        (1.0 / (1.0 - RAMP_ROUNDING)) / width
    }
}

/// One line of a [`ConstraintReport`].
#[derive(Debug, Clone, Serialize)]
pub struct ConstraintCheck {
    pub name: String,
    pub pass: bool,
    /// How robustly the constraint holds; negative means violated.
    pub margin: f64,
}

/// Pass/fail per profile constraint, with worst margins, from dense sampling.
#[derive(Debug, Clone, Serialize)]
pub struct ConstraintReport {
    pub checks: Vec<ConstraintCheck>,
    pub samples: usize,
}

impl ConstraintReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&ConstraintCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn push(&mut self, name: &str, pass: bool, margin: f64) {
        self.checks.push(ConstraintCheck { name: name.into(), pass, margin });
    }
}

/// Any of the profile shapes, for uniform constraint reporting.
pub enum Profile {
    Psi(BumpPsi),
    Phi(BumpPhi),
    Fold(FoldCutoff),
    Radial(RadialCutoff),
}

/// Check every profile invariant by dense sampling (≥ 10⁴ points) and finite
/// differences; returns pass/fail per constraint with the worst margin seen.
pub fn profile_constraint_report(profile: &Profile) -> ConstraintReport {
    let n = 20_000usize;
    let mut report = ConstraintReport { checks: Vec::new(), samples: n };
    match profile {
        Profile::Psi(p) => {
            report.push("peak value at center", (p.eval(p.center) - p.height).abs() < 1e-12, p.height.abs() - (p.eval(p.center) - p.height).abs());
            let mut outside: f64 = 0.0;
            let mut even_dev: f64 = 0.0;
            let mut sign_changes = 0usize;
            let mut prev = p.deriv(p.center - p.theta * (1.0 - 1e-9));
            for i in 0..=n {
                let t = -1.5 + 3.0 * i as f64 / n as f64;
                let x = p.center + t * p.theta;
                if t.abs() >= 1.0 {
                    outside = outside.max(p.eval(x).abs());
                }
                even_dev = even_dev.max((p.eval(p.center + t * p.theta) - p.eval(p.center - t * p.theta)).abs());
                if t.abs() < 1.0 {
                    let d = p.deriv(x);
                    if d * prev < 0.0 {
                        sign_changes += 1;
                    }
                    if d != 0.0 {
                        prev = d;
                    }
                }
            }
            report.push("zero outside support", outside == 0.0, -outside);
            report.push("even about center", even_dev < 1e-12 * p.height.abs().max(1.0), -even_dev);
            report.push("unique interior critical point", sign_changes == 1, 1.0 - (sign_changes as f64 - 1.0).abs());
        }
        Profile::Phi(p) => {
            let d = p.delta;
            report.push(
                "zero at support ends",
                p.eval(p.base).abs() < 1e-10 * d && p.eval(p.base + d).abs() < 1e-10 * d,
                -(p.eval(p.base).abs().max(p.eval(p.base + d).abs())),
            );
            let edge = p.deriv(p.base + 1e-12 * d).abs().max(p.deriv(p.base + d - 1e-12 * d).abs());
            report.push("one-sided derivatives vanish at ends", edge < 1e-6, -edge);
            let mid = p.deriv(p.base + d / 2.0);
            report.push("derivative at midpoint equals midslope", (mid - p.midslope).abs() < 1e-12, -(mid - p.midslope).abs());
            let mut max_abs: f64 = 0.0;
            for i in 0..=n {
                let y = p.base + d * i as f64 / n as f64;
                max_abs = max_abs.max(p.eval(y).abs());
            }
            report.push("max |phi| <= delta", max_abs <= d, 1.0 - max_abs / d);
            let net = p.eval(p.base + d * (1.0 - 1e-15)) - p.eval(p.base + d * 1e-15);
            report.push("derivative integrates to zero", net.abs() < 1e-10 * d.max(1e-300), -net.abs());
        }
        Profile::Fold(c) => {
            let d = c.delta;
            let bound = 2.0 / d * (1.0 + 0.12);
            let mut max_slope: f64 = 0.0;
            let mut in_range = true;
            let mut monotone = true;
            let mut prev = c.eval(0.0);
            for i in 0..=n {
                let y = d * 1.2 * i as f64 / n as f64;
                let v = c.eval(y);
                if !(0.0..=1.0).contains(&v) {
                    in_range = false;
                }
                if v < prev - 1e-14 {
                    monotone = false;
                }
                prev = v;
                max_slope = max_slope.max(c.deriv(y).abs());
            }
            report.push("values in [0, 1]", in_range, if in_range { 1.0 } else { -1.0 });
            report.push("monotone on transition band", monotone, if monotone { 1.0 } else { -1.0 });
            report.push("slope within (2/delta)(1+0.12)", max_slope <= bound, (bound - max_slope) / bound);
            report.push("plateau values exact", c.eval(d / 4.0) == 0.0 && c.eval(1.5 * d) == 1.0, 1.0);
        }
        Profile::Radial(r) => {
            let hi = r.delta * r.delta;
            let mut in_range = true;
            let mut monotone = true;
            let mut max_deriv: f64 = 0.0;
            let mut prev = 0.0;
            for i in 0..=n {
                let s = 1.2 * hi * i as f64 / n as f64;
                let v = r.eval_s(s);
                if !(0.0..=1.0).contains(&v) {
                    in_range = false;
                }
                if v < prev - 1e-14 {
                    monotone = false;
                }
                prev = v;
                max_deriv = max_deriv.max(r.deriv_s(s).abs());
            }
            report.push("values in [0, 1]", in_range, if in_range { 1.0 } else { -1.0 });
            report.push("monotone in s", monotone, if monotone { 1.0 } else { -1.0 });
            let bound = r.max_abs_deriv_s() * (1.0 + 1e-9);
            report.push("derivative within reported bound", max_deriv <= bound, (bound - max_deriv) / bound);
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn psi_peak_and_support() {
        // Expanding-family profile with μ = 2: peak 2μ = 4.
        let psi = BumpPsi::new(0.25, 4.0, 0.0).unwrap();
        assert_eq!(psi.eval(0.0), 4.0);
        assert_eq!(psi.eval(0.25), 0.0);
        assert_eq!(psi.eval(-0.25), 0.0);
        assert_eq!(psi.eval(0.3), 0.0);
    }

    #[test]
    fn psi_is_even() {
        let psi = BumpPsi::new(0.1, 4.0, 0.7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let t = rng.gen_range(-0.12..0.12);
            assert!((psi.eval(0.7 + t) - psi.eval(0.7 - t)).abs() < 1e-14);
        }
    }

    #[test]
    fn phi_ends_are_flat_zeros() {
        let phi = BumpPhi::new(0.02, 0.0).unwrap();
        assert_eq!(phi.eval(0.0), 0.0);
        assert_eq!(phi.eval(0.02), 0.0);
        assert!(phi.deriv(1e-14).abs() < 1e-9);
        assert!(phi.deriv(0.02 - 1e-14).abs() < 1e-9);
    }

    #[test]
    fn phi_midslope_is_one() {
        let phi = BumpPhi::new(0.02, 0.3).unwrap();
        assert_eq!(phi.deriv(0.3 + 0.01), 1.0);
    }

    #[test]
    fn phi_extrema_match_scan_oracle() {
        // Oracle: dense 1-D scan of the profile on its support.
        let phi = BumpPhi::new(1.0, 0.0).unwrap();
        let n = 200_000;
        let mut max_abs: f64 = 0.0;
        let mut min_d: f64 = f64::INFINITY;
        let mut max_d: f64 = f64::NEG_INFINITY;
        for i in 0..=n {
            let y = i as f64 / n as f64;
            max_abs = max_abs.max(phi.eval(y).abs());
            min_d = min_d.min(phi.deriv(y));
            max_d = max_d.max(phi.deriv(y));
        }
        assert!((max_abs - phi.max_abs()).abs() < 1e-9);
        assert!((min_d + phi.well_depth()).abs() < 1e-9, "well depth {min_d}");
        assert!((max_d - 1.0).abs() < 1e-12);
        assert!(max_abs <= phi.delta);
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let psi = BumpPsi::new(0.2, 4.0, 0.5).unwrap();
        let phi = BumpPhi::new(0.4, 0.1).unwrap();
        for _ in 0..1000 {
            let x = rng.gen_range(0.31..0.69);
            let fd = central_diff(|t| psi.eval(t), x, 1e-6 * 0.2);
            let an = psi.deriv(x);
            if an.abs() > 1e-6 {
                assert!(
                    ((fd - an) / an).abs() < 1e-5,
                    "psi deriv mismatch at {x}: fd={fd} an={an}"
                );
            }
            let y = rng.gen_range(0.11..0.49);
            let fd = central_diff(|t| phi.eval(t), y, 1e-7 * 0.4);
            let an = phi.deriv(y);
            if an.abs() > 1e-6 {
                assert!(((fd - an) / an).abs() < 1e-5, "phi deriv mismatch at {y}");
            }
        }
    }

    #[test]
    fn psi_max_deriv_reproducible_across_resolutions() {
        let psi = BumpPsi::new(0.05, 4.0, 0.0).unwrap();
        let m1 = psi.max_abs_deriv(10_000);
        let m2 = psi.max_abs_deriv(100_000);
        assert!((m1 - m2).abs() / m2 < 1e-3);
        // The kernel slope peaks near 2.17, scaled by height/θ.
        assert!((m2 * 0.05 / 4.0 - 2.17).abs() < 0.02);
    }

    #[test]
    fn valid_phi_report_passes() {
        let phi = BumpPhi::new(0.02, 0.0).unwrap();
        let report = profile_constraint_report(&Profile::Phi(phi));
        assert!(report.all_pass(), "{:?}", report.checks);
        let margin = report.check("max |phi| <= delta").unwrap().margin;
        assert!((margin - (1.0 - phi.max_abs() / phi.delta)).abs() < 1e-9);
    }

    #[test]
    fn degenerate_psi_fails_unique_critical_point() {
        let psi = BumpPsi::new(0.1, 0.0, 0.0).unwrap();
        let report = profile_constraint_report(&Profile::Psi(psi));
        assert!(!report.check("unique interior critical point").unwrap().pass);
    }

    #[test]
    fn fold_cutoff_slope_bound() {
        let c = FoldCutoff::new(0.02).unwrap();
        let report = profile_constraint_report(&Profile::Fold(c));
        assert!(report.all_pass(), "{:?}", report.checks);
        assert!(c.slope_excess() <= 0.12);
        // nominal bound 2/δ = 100, achieved max ≈ 105.3
        let mut max_slope: f64 = 0.0;
        for i in 0..=100_000 {
            let y = 0.03 * i as f64 / 100_000.0;
            max_slope = max_slope.max(c.deriv(y).abs());
        }
        assert!(max_slope <= 100.0 * (1.0 + c.slope_excess()) + 1e-6);
        assert!(max_slope > 100.0, "ramp cannot be steeper than the mean slope");
    }

    #[test]
    fn radial_cutoff_plateaus() {
        let r = RadialCutoff::new(0.1).unwrap();
        assert_eq!(r.eval_s(0.0), 0.0);
        assert_eq!(r.eval_s(0.0024), 0.0); // below (δ/2)² = 0.0025
        assert_eq!(r.eval_s(0.011), 1.0); // above δ² = 0.01
        let report = profile_constraint_report(&Profile::Radial(r));
        assert!(report.all_pass(), "{:?}", report.checks);
    }
}
