//! Flat torus geometry: the quotient T² = ℝ²/(side·ℤ)², points, tangent
//! vectors, minimal lifts and the induced action on the fundamental group.
//!
//! The canonical fundamental domain is [0, side)². Families published on
//! ℝ²/[−1,1]² use side = 2 and their constants are reduced mod 2, so a chart
//! value −0.5 is stored as 1.5.

use crate::error::{EndoError, Result};
use serde::{Deserialize, Serialize};

/// A flat torus with square fundamental domain [0, side)².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Torus {
    side: f64,
}

impl Torus {
    pub fn new(side: f64) -> Result<Self> {
        if !(side > 0.0) || !side.is_finite() {
            return Err(EndoError::InvalidArgument(format!(
                "torus side must be positive and finite, got {side}"
            )));
        }
        Ok(Torus { side })
    }

    /// Unit torus ℝ²/ℤ².
    pub fn unit() -> Self {
        Torus { side: 1.0 }
    }

    /// The side-2 torus ℝ²/(2ℤ)², i.e. ℝ²/[−1,1]² with coordinates reduced
    /// to [0, 2).
    pub fn double() -> Self {
        Torus { side: 2.0 }
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    /// Reduce a scalar to [0, side).
    pub fn wrap_coord(&self, x: f64) -> f64 {
        let mut r = x.rem_euclid(self.side);
        // rem_euclid of a tiny negative can round up to exactly `side`.
        if r >= self.side {
            r = 0.0;
        }
        r
    }

    /// Signed representative of x in [−side/2, side/2). Exact (returns x
    /// unchanged) when x is already in range, which keeps evaluations inside
    /// the tiny bump supports at full precision.
    pub fn wrap_signed(&self, x: f64) -> f64 {
        let half = self.side / 2.0;
        if (-half..half).contains(&x) {
            return x;
        }
        let mut r = (x + half).rem_euclid(self.side) - half;
        if r >= half {
            r = -half;
        }
        r
    }
}

/// A tangent vector (or plain displacement) in ℝ².
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vector2 {
    pub x: f64,
    pub y: f64,
}

impl Vector2 {
    pub fn new(x: f64, y: f64) -> Self {
        Vector2 { x, y }
    }

    pub fn dot(&self, other: Vector2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(&self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    /// Counter-clockwise rotation by π/2.
    pub fn perp(&self) -> Vector2 {
        Vector2::new(-self.y, self.x)
    }

    pub fn normalized(&self) -> Vector2 {
        let n = self.norm();
        Vector2::new(self.x / n, self.y / n)
    }

    pub fn scale(&self, s: f64) -> Vector2 {
        Vector2::new(self.x * s, self.y * s)
    }
}

impl std::ops::Add for Vector2 {
    type Output = Vector2;
    fn add(self, o: Vector2) -> Vector2 {
        Vector2::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Vector2 {
    type Output = Vector2;
    fn sub(self, o: Vector2) -> Vector2 {
        Vector2::new(self.x - o.x, self.y - o.y)
    }
}

/// A point on a flat torus, stored with coordinates in [0, side)².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    pub x: f64,
    pub y: f64,
    pub torus: Torus,
}

impl TorusPoint {
    pub fn as_vector(&self) -> Vector2 {
        Vector2::new(self.x, self.y)
    }

    pub fn translate(&self, v: Vector2) -> TorusPoint {
        wrap_unchecked(self.x + v.x, self.y + v.y, self.torus)
    }
}

/// Reduce raw plane coordinates to the canonical fundamental domain.
pub fn wrap(raw: (f64, f64), torus: Torus) -> Result<TorusPoint> {
    if !raw.0.is_finite() || !raw.1.is_finite() {
        return Err(EndoError::InvalidArgument(format!(
            "non-finite coordinates ({}, {})",
            raw.0, raw.1
        )));
    }
    Ok(wrap_unchecked(raw.0, raw.1, torus))
}

pub(crate) fn wrap_unchecked(x: f64, y: f64, torus: Torus) -> TorusPoint {
    TorusPoint {
        x: torus.wrap_coord(x),
        y: torus.wrap_coord(y),
        torus,
    }
}

fn check_same_torus(p: &TorusPoint, q: &TorusPoint) -> Result<()> {
    if p.torus != q.torus {
        return Err(EndoError::MismatchedTorus(p.torus.side(), q.torus.side()));
    }
    Ok(())
}

/// Geodesic distance: the minimum over lattice translates of the Euclidean
/// distance between lifts.
pub fn torus_distance(p: &TorusPoint, q: &TorusPoint) -> Result<f64> {
    check_same_torus(p, q)?;
    let dx = p.torus.wrap_signed(q.x - p.x);
    let dy = p.torus.wrap_signed(q.y - p.y);
    Ok(dx.hypot(dy))
}

/// Result of [`shortest_displacement`]: the minimal lift of q − p, with a
/// flag set when a coordinate difference is exactly half a side and the
/// positive representative was chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Displacement {
    pub vector: Vector2,
    pub ambiguous: bool,
}

/// The lift of q − p of minimal norm. Exact half-side differences are
/// tie-broken toward the positive component and flagged.
pub fn shortest_displacement(p: &TorusPoint, q: &TorusPoint) -> Result<Displacement> {
    check_same_torus(p, q)?;
    let half = p.torus.side() / 2.0;
    let mut ambiguous = false;
    let mut comp = |d: f64| -> f64 {
        let w = p.torus.wrap_signed(d);
        if w == -half {
            ambiguous = true;
            half
        } else {
            w
        }
    };
    let vector = Vector2::new(comp(q.x - p.x), comp(q.y - p.y));
    Ok(Displacement { vector, ambiguous })
}

/// A 2×2 integer matrix, the lattice action of a torus endomorphism.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntMatrix2 {
    pub a: i64,
    pub b: i64,
    pub c: i64,
    pub d: i64,
}

impl IntMatrix2 {
    pub fn new(a: i64, b: i64, c: i64, d: i64) -> Self {
        IntMatrix2 { a, b, c, d }
    }

    pub fn diag(a: i64, d: i64) -> Self {
        IntMatrix2 { a, b: 0, c: 0, d }
    }

    pub fn det(&self) -> i64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> i64 {
        self.a + self.d
    }

    /// Valid as a family base: |det| ≥ 2 and two distinct real eigenvalues,
    /// i.e. tr² − 4·det > 0.
    pub fn check_family_base(&self) -> Result<()> {
        if self.det().abs() < 2 {
            return Err(EndoError::Construction {
                inequality: "|det A| >= 2".into(),
                detail: format!("det = {}", self.det()),
            });
        }
        let discr = self.trace() * self.trace() - 4 * self.det();
        if discr <= 0 {
            return Err(EndoError::Construction {
                inequality: "tr(A)^2 - 4 det(A) > 0 (two distinct real eigenvalues)".into(),
                detail: format!("discriminant = {discr}"),
            });
        }
        Ok(())
    }

    /// Eigenvalues ordered by decreasing modulus, with unit eigenvectors.
    /// Requires a positive discriminant.
    pub fn eigen(&self) -> Result<EigenData> {
        let tr = self.trace() as f64;
        let det = self.det() as f64;
        let discr = tr * tr - 4.0 * det;
        if discr <= 0.0 {
            return Err(EndoError::InvalidArgument(
                "matrix does not have two distinct real eigenvalues".into(),
            ));
        }
        let s = discr.sqrt();
        let l1 = (tr + s) / 2.0;
        let l2 = (tr - s) / 2.0;
        let (big, small) = if l1.abs() >= l2.abs() { (l1, l2) } else { (l2, l1) };
        Ok(EigenData {
            lambda: big,
            mu: small,
            v_lambda: self.eigenvector(big),
            v_mu: self.eigenvector(small),
        })
    }

    fn eigenvector(&self, lam: f64) -> Vector2 {
        // (A − λI) v = 0; pick the row with the larger residual entries.
        let r1 = Vector2::new(self.a as f64 - lam, self.b as f64);
        let r2 = Vector2::new(self.c as f64, self.d as f64 - lam);
        let v = if r1.norm() >= r2.norm() {
            Vector2::new(-r1.y, r1.x)
        } else {
            Vector2::new(-r2.y, r2.x)
        };
        let v = v.normalized();
        // Deterministic sign: first nonzero component positive.
        if v.x < 0.0 || (v.x == 0.0 && v.y < 0.0) {
            v.scale(-1.0)
        } else {
            v
        }
    }

    pub fn apply(&self, v: Vector2) -> Vector2 {
        Vector2::new(
            self.a as f64 * v.x + self.b as f64 * v.y,
            self.c as f64 * v.x + self.d as f64 * v.y,
        )
    }

    pub fn apply_point(&self, p: &TorusPoint) -> TorusPoint {
        let v = self.apply(p.as_vector());
        wrap_unchecked(v.x, v.y, p.torus)
    }
}

/// Spectral data of an integer matrix with two real eigenvalues.
#[derive(Debug, Clone, Copy)]
pub struct EigenData {
    /// Eigenvalue of larger modulus.
    pub lambda: f64,
    /// Eigenvalue of smaller modulus.
    pub mu: f64,
    pub v_lambda: Vector2,
    pub v_mu: Vector2,
}

/// Compute the integer matrix M with F(x + side·e_j) − F(x) = side·M·e_j for
/// a lift F of the given map, by path-lifting along both axes from several
/// base points. Errors if the result is non-integral or base-point dependent
/// beyond 1e-6.
pub fn homology_action<F>(map: F, torus: Torus) -> Result<IntMatrix2>
where
    F: Fn(TorusPoint) -> TorusPoint,
{
    let side = torus.side();
    let bases = [(0.1, 0.1), (0.3, 0.7), (0.6, 0.2), (0.8, 0.9)];
    let mut cols: Option<[[f64; 2]; 2]> = None;
    for &(bx, by) in &bases {
        let base = wrap_unchecked(bx * side, by * side, torus);
        for (j, dir) in [(0usize, Vector2::new(1.0, 0.0)), (1, Vector2::new(0.0, 1.0))] {
            let col = lift_translation(&map, base, dir, torus)?;
            let m0 = col.x / side;
            let m1 = col.y / side;
            if (m0 - m0.round()).abs() > 1e-6 || (m1 - m1.round()).abs() > 1e-6 {
                return Err(EndoError::InconsistentLift(format!(
                    "non-integer lattice action ({m0}, {m1}) at base ({bx}, {by})"
                )));
            }
            let entry = [m0.round(), m1.round()];
            match &mut cols {
                None => {
                    let mut c = [[0.0; 2]; 2];
                    c[j] = entry;
                    cols = Some(c);
                }
                Some(c) => {
                    if c[j] == [0.0, 0.0] && j == 1 && c[0] != [0.0, 0.0] {
                        c[j] = entry;
                    } else if c[j] == [0.0, 0.0] && j == 0 {
                        c[j] = entry;
                    } else if c[j] != entry {
                        return Err(EndoError::InconsistentLift(format!(
                            "lattice action differs between base points: {:?} vs {:?}",
                            c[j], entry
                        )));
                    }
                }
            }
        }
    }
    let c = cols.unwrap();
    Ok(IntMatrix2 {
        a: c[0][0] as i64,
        b: c[1][0] as i64,
        c: c[0][1] as i64,
        d: c[1][1] as i64,
    })
}

/// March from `base` to `base + side·dir`, lifting images continuously, and
/// return the net image displacement.
fn lift_translation<F>(map: &F, base: TorusPoint, dir: Vector2, torus: Torus) -> Result<Vector2>
where
    F: Fn(TorusPoint) -> TorusPoint,
{
    let steps = 256;
    let side = torus.side();
    let mut lifted = map(base).as_vector();
    let mut prev_img = map(base);
    for k in 1..=steps {
        let t = side * k as f64 / steps as f64;
        let p = base.translate(dir.scale(t));
        let img = map(p);
        let d = shortest_displacement(&prev_img, &img)?;
        lifted = lifted + d.vector;
        prev_img = img;
    }
    Ok(lifted - map(base).as_vector())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn wrap_examples() {
        let t1 = Torus::unit();
        let p = wrap((1.25, -0.25), t1).unwrap();
        assert!((p.x - 0.25).abs() < 1e-15);
        assert!((p.y - 0.75).abs() < 1e-15);

        let z = wrap((0.0, 0.0), t1).unwrap();
        assert_eq!((z.x, z.y), (0.0, 0.0));

        let t2 = Torus::double();
        let q = wrap((2.4, 3.0), t2).unwrap();
        assert!((q.x - 0.4).abs() < 1e-12);
        assert!((q.y - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wrap_rejects_non_finite() {
        assert!(wrap((f64::NAN, 0.0), Torus::unit()).is_err());
        assert!(wrap((0.0, f64::INFINITY), Torus::unit()).is_err());
    }

    #[test]
    fn wrap_is_idempotent_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let torus = Torus::unit();
        for _ in 0..1000 {
            let raw = (rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0));
            let p = wrap(raw, torus).unwrap();
            let pp = wrap((p.x, p.y), torus).unwrap();
            assert_eq!(p, pp);
            assert!(p.x >= 0.0 && p.x < 1.0 && p.y >= 0.0 && p.y < 1.0);
        }
    }

    #[test]
    fn wrap_tiny_negative_stays_in_domain() {
        let p = wrap((-1e-22, -1e-300), Torus::unit()).unwrap();
        assert!(p.x < 1.0 && p.y < 1.0);
    }

    #[test]
    fn distance_examples() {
        let t = Torus::unit();
        let o = wrap((0.0, 0.0), t).unwrap();
        let p = wrap((0.9, 0.0), t).unwrap();
        assert!((torus_distance(&o, &p).unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(torus_distance(&p, &p).unwrap(), 0.0);
        let q = wrap((0.5, 0.5), t).unwrap();
        assert!((torus_distance(&o, &q).unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn distance_rejects_mismatched_torus() {
        let p = wrap((0.1, 0.1), Torus::unit()).unwrap();
        let q = wrap((0.1, 0.1), Torus::double()).unwrap();
        assert!(torus_distance(&p, &q).is_err());
    }

    #[test]
    fn distance_is_a_metric_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = Torus::unit();
        for _ in 0..1000 {
            let mut pt = || wrap((rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)), t).unwrap();
            let (a, b, c) = (pt(), pt(), pt());
            let dab = torus_distance(&a, &b).unwrap();
            let dba = torus_distance(&b, &a).unwrap();
            let dac = torus_distance(&a, &c).unwrap();
            let dcb = torus_distance(&c, &b).unwrap();
            assert!(dab >= 0.0);
            assert!((dab - dba).abs() < 1e-12);
            assert!(dab <= dac + dcb + 1e-12);
            assert!(torus_distance(&a, &a).unwrap() < 1e-15);
        }
    }

    #[test]
    fn displacement_examples() {
        let t = Torus::unit();
        let o = wrap((0.0, 0.0), t).unwrap();
        let p = wrap((0.9, 0.0), t).unwrap();
        let d = shortest_displacement(&o, &p).unwrap();
        assert!((d.vector.x + 0.1).abs() < 1e-12 && d.vector.y == 0.0);
        assert!(!d.ambiguous);

        let a = wrap((0.2, 0.2), t).unwrap();
        let b = wrap((0.3, 0.2), t).unwrap();
        let d = shortest_displacement(&a, &b).unwrap();
        assert!((d.vector.x - 0.1).abs() < 1e-12);

        let h = wrap((0.5, 0.0), t).unwrap();
        let d = shortest_displacement(&o, &h).unwrap();
        assert_eq!(d.vector.x, 0.5);
        assert!(d.ambiguous);
    }

    #[test]
    fn displacement_norm_matches_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let t = Torus::double();
        for _ in 0..500 {
            let mut pt = || wrap((rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0)), t).unwrap();
            let (a, b) = (pt(), pt());
            let d = shortest_displacement(&a, &b).unwrap();
            let dist = torus_distance(&a, &b).unwrap();
            assert!((d.vector.norm() - dist).abs() < 1e-12);
        }
    }

    #[test]
    fn homology_of_linear_map() {
        let a = IntMatrix2::diag(3, 2);
        let t = Torus::unit();
        let m = homology_action(|p| a.apply_point(&p), t).unwrap();
        assert_eq!(m, a);

        let s = IntMatrix2::new(3, 1, 1, 1);
        let m = homology_action(|p| s.apply_point(&p), t).unwrap();
        assert_eq!(m, s);
    }

    #[test]
    fn eigen_of_saddle_matrix() {
        let a = IntMatrix2::new(3, 1, 1, 1);
        let e = a.eigen().unwrap();
        assert!((e.lambda - (2.0 + 2.0f64.sqrt())).abs() < 1e-12);
        assert!((e.mu - (2.0 - 2.0f64.sqrt())).abs() < 1e-12);
        // slope of the unstable direction is √2 − 1
        assert!((e.v_lambda.y / e.v_lambda.x - (2.0f64.sqrt() - 1.0)).abs() < 1e-12);
        // symmetric matrix: orthogonal eigenvectors
        assert!(e.v_lambda.dot(e.v_mu).abs() < 1e-12);
    }

    #[test]
    fn family_base_validation() {
        assert!(IntMatrix2::diag(3, 2).check_family_base().is_ok());
        assert!(IntMatrix2::diag(1, 1).check_family_base().is_err());
        // equal eigenvalues rejected
        assert!(IntMatrix2::diag(2, 2).check_family_base().is_err());
    }
}
