//! The endomorphism families: evaluation, Jacobians, critical sets, preimage
//! fibers, fixed points and persistence certificates.

pub mod analysis;
pub mod circle;
pub mod families;
pub mod perturb;
pub mod preimages;
#[cfg(test)]
mod tests;

pub use analysis::{
    critical_set, fixed_points, persistence_certificate, CriticalSetGeometry, FixedPointClass,
    FixedPointInfo, PersistenceCertificate,
};
pub use circle::CircleMap;
pub use families::{
    build_expanding, build_non_hyperbolic, build_saddle, BuiltFamily, CriticalBallConfig,
    ExpandingConfig, NonHyperbolicConfig, SaddleConfig,
};
pub use perturb::{perturb, TrigField};
pub use preimages::preimages;

use crate::error::{EndoError, Result};
use crate::profiles::{BumpPhi, BumpPsi, FoldCutoff, RadialCutoff};
use crate::torus::{
    homology_action as torus_homology, wrap_unchecked, IntMatrix2, Torus, TorusPoint, Vector2,
};
use serde::Serialize;

/// A planar axis-aligned rectangle, used for chart domains and search boxes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Rect { x0, y0, x1, y1 }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }
}

/// A rectangular sampling grid: cell centers of a resolution² lattice on the
/// region.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GridSpec {
    pub region: Rect,
    pub resolution: usize,
}

/// A real 2×2 matrix [[a, b], [c, d]].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Matrix2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Matrix2 {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Matrix2 { a, b, c, d }
    }

    pub fn from_int(m: &IntMatrix2) -> Self {
        Matrix2::new(m.a as f64, m.b as f64, m.c as f64, m.d as f64)
    }

    pub fn identity() -> Self {
        Matrix2::new(1.0, 0.0, 0.0, 1.0)
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn apply(&self, v: Vector2) -> Vector2 {
        Vector2::new(self.a * v.x + self.b * v.y, self.c * v.x + self.d * v.y)
    }

    pub fn inverse(&self) -> Option<Matrix2> {
        let det = self.det();
        if det.abs() < 1e-300 {
            return None;
        }
        Some(Matrix2::new(self.d / det, -self.b / det, -self.c / det, self.a / det))
    }

    pub fn frobenius(&self) -> f64 {
        (self.a * self.a + self.b * self.b + self.c * self.c + self.d * self.d).sqrt()
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.a.abs().max(self.b.abs()).max(self.c.abs()).max(self.d.abs())
    }

    /// Largest singular value.
    pub fn sigma_max(&self) -> f64 {
        let (s1, _) = self.singular_values();
        s1
    }

    /// Singular values (σ₁ ≥ σ₂ ≥ 0).
    pub fn singular_values(&self) -> (f64, f64) {
        let q = self.a * self.a + self.b * self.b + self.c * self.c + self.d * self.d;
        let det = self.det();
        let disc = (q * q - 4.0 * det * det).max(0.0).sqrt();
        let s1 = ((q + disc) / 2.0).max(0.0).sqrt();
        let s2 = ((q - disc) / 2.0).max(0.0).sqrt();
        (s1, s2)
    }

    /// Unit right-singular vector of the smallest singular value, i.e. the
    /// near-kernel direction.
    pub fn kernel_direction(&self) -> Vector2 {
        // Right-singular vectors are eigenvectors of AᵀA.
        let m = Matrix2::new(
            self.a * self.a + self.c * self.c,
            self.a * self.b + self.c * self.d,
            self.a * self.b + self.c * self.d,
            self.b * self.b + self.d * self.d,
        );
        let (_, s2) = self.singular_values();
        let lam = s2 * s2;
        let r1 = Vector2::new(m.a - lam, m.b);
        let r2 = Vector2::new(m.c, m.d - lam);
        let v = if r1.norm() >= r2.norm() { r1.perp() } else { r2.perp() };
        if v.norm() < 1e-14 {
            Vector2::new(0.0, 1.0)
        } else {
            v.normalized()
        }
    }

    /// Eigenvalue moduli, with a flag for a complex pair.
    pub fn eigen_moduli(&self) -> (f64, f64, bool) {
        let tr = self.a + self.d;
        let det = self.det();
        let disc = tr * tr - 4.0 * det;
        if disc >= 0.0 {
            let s = disc.sqrt();
            let l1 = (tr + s) / 2.0;
            let l2 = (tr - s) / 2.0;
            (l1, l2, false)
        } else {
            let m = det.abs().sqrt();
            (m, m, true)
        }
    }
}

/// Jacobian of a map at a point.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct JacobianMatrix {
    pub matrix: Matrix2,
    pub at: (f64, f64),
}

impl JacobianMatrix {
    pub fn det(&self) -> f64 {
        self.matrix.det()
    }
}

/// Flattening surgery applied to the second coordinate of an expanding-family
/// map: inside |x| ≤ x_half the y-input is re-parametrized through a C¹
/// plateau of half-width `w` around `y_center`, so ∂f₂/∂y ≡ 0 on an open
/// rectangle and the critical set acquires interior.
#[derive(Debug, Clone, Serialize)]
pub struct PlateauFlattening {
    pub x_cutoff: FoldCutoff,
    pub y_center: f64,
    pub w: f64,
}

impl PlateauFlattening {
    /// Plateau reparametrization: identity for |t| ≥ 2w, constant for
    /// |t| ≤ w, C¹ monotone in between (t = y − y_center).
    fn reparam(&self, t: f64) -> f64 {
        let s = t.abs();
        if s >= 2.0 * self.w {
            return t;
        }
        if s <= self.w {
            return 0.0;
        }
        let u = (s - self.w) / self.w;
        let h = self.w * (5.0 * u * u - 3.0 * u * u * u);
        h.copysign(t)
    }

    fn reparam_deriv(&self, t: f64) -> f64 {
        let s = t.abs();
        if s >= 2.0 * self.w {
            return 1.0;
        }
        if s <= self.w {
            return 0.0;
        }
        let u = (s - self.w) / self.w;
        10.0 * u - 9.0 * u * u
    }

    /// Re-parametrized y and its ∂/∂y, ∂/∂x at (x, y) (signed coordinates).
    fn apply(&self, xs: f64, y: f64) -> (f64, f64, f64) {
        let b = 1.0 - self.x_cutoff.eval(xs);
        if b == 0.0 {
            return (y, 1.0, 0.0);
        }
        let t = y - self.y_center;
        let py = self.y_center + self.reparam(t);
        let yy = y + b * (py - y);
        let dy = 1.0 + b * (self.reparam_deriv(t) - 1.0);
        let dx = -self.x_cutoff.deriv(xs) * (py - y);
        (yy, dy, dx)
    }

    /// The open rectangle (in signed coordinates) on which det Df ≡ 0.
    pub fn interior_rect(&self) -> Rect {
        let xh = self.x_cutoff.delta / 2.0;
        Rect::new(-0.99 * xh, self.y_center - 0.99 * self.w, 0.99 * xh, self.y_center + 0.99 * self.w)
    }
}

/// Expanding-family payload: f(x, y) = (λx, μy − ψ(x)φ(y)) with the bump
/// supported deep inside U″ = B(0, r/8).
#[derive(Debug, Clone, Serialize)]
pub struct ExpandingMap {
    pub matrix: IntMatrix2,
    pub lambda: f64,
    pub mu: f64,
    pub r: f64,
    pub theta: f64,
    pub psi: BumpPsi,
    pub phi: BumpPhi,
    pub plateau: Option<PlateauFlattening>,
    pub torus: Torus,
}

impl ExpandingMap {
    fn second_coord(&self, x: f64, y: f64) -> f64 {
        let xs = self.torus.wrap_signed(x);
        let ys = self.torus.wrap_signed(y);
        let (yy, _, _) = match &self.plateau {
            Some(p) => p.apply(xs, ys),
            None => (ys, 1.0, 0.0),
        };
        self.mu * y + (self.mu * (yy - ys) - self.psi.eval(xs) * self.phi.eval(yy))
    }

    fn jacobian(&self, x: f64, y: f64) -> Matrix2 {
        let xs = self.torus.wrap_signed(x);
        let ys = self.torus.wrap_signed(y);
        match &self.plateau {
            None => Matrix2::new(
                self.lambda,
                0.0,
                -self.psi.deriv(xs) * self.phi.eval(ys),
                self.mu - self.psi.eval(xs) * self.phi.deriv(ys),
            ),
            Some(p) => {
                let (yy, dy, dx) = p.apply(xs, ys);
                let gy = self.mu - self.psi.eval(xs) * self.phi.deriv(yy);
                let gx = -self.psi.deriv(xs) * self.phi.eval(yy);
                Matrix2::new(self.lambda, 0.0, gx + gy * dx, gy * dy)
            }
        }
    }
}

/// Critical bump glued into the non-hyperbolic family on a ball where the
/// base map equals A.
#[derive(Debug, Clone, Serialize)]
pub struct CriticalBump {
    pub center: (f64, f64),
    pub r: f64,
    pub theta: f64,
    pub psi: BumpPsi,
    pub phi: BumpPhi,
}

/// Non-hyperbolic payload on the side-2 torus: (λx, g(y)) on the strip A₀,
/// (λx, h(y)) on A₁ (the published lift λx − 2 agrees with λx mod 2), the
/// identity second coordinate elsewhere, C¹-blended on collars, plus an
/// optional critical bump (λx, y − ψ(x)φ(y)) on a ball.
#[derive(Debug, Clone, Serialize)]
pub struct NonHyperbolicMap {
    pub matrix: IntMatrix2,
    pub lambda: f64,
    pub strip_eps: f64,
    pub strip_halfwidth: f64,
    pub strip0_center: f64,
    pub strip1_center: f64,
    pub collar_width: f64,
    pub g: CircleMap,
    pub h: CircleMap,
    pub bump: Option<CriticalBump>,
    pub torus: Torus,
}

impl NonHyperbolicMap {
    /// Blend weight of a strip at horizontal position x: 1 on the strip,
    /// 0 beyond the collar, C¹ monotone on the collar band.
    pub fn strip_weight(&self, x: f64, center: f64) -> f64 {
        let d = self.torus.wrap_signed(x - center).abs();
        if d <= self.strip_halfwidth {
            1.0
        } else if d >= self.strip_halfwidth + self.collar_width {
            0.0
        } else {
            1.0 - ramp01((d - self.strip_halfwidth) / self.collar_width)
        }
    }

    fn weight_deriv(&self, x: f64, center: f64) -> f64 {
        let ds = self.torus.wrap_signed(x - center);
        let d = ds.abs();
        if d <= self.strip_halfwidth || d >= self.strip_halfwidth + self.collar_width {
            return 0.0;
        }
        let t = (d - self.strip_halfwidth) / self.collar_width;
        let slope = -ramp01_deriv(t) / self.collar_width;
        slope * ds.signum()
    }

    pub fn in_strip0(&self, x: f64) -> bool {
        self.torus.wrap_signed(x - self.strip0_center).abs() <= self.strip_halfwidth
    }

    pub fn in_strip1(&self, x: f64) -> bool {
        self.torus.wrap_signed(x - self.strip1_center).abs() <= self.strip_halfwidth
    }

    fn second_coord_offset(&self, x: f64, y: f64) -> f64 {
        let w0 = self.strip_weight(x, self.strip0_center);
        let w1 = self.strip_weight(x, self.strip1_center);
        let mut t = w0 * self.g.offset(y) + w1 * self.h.offset(y);
        if let Some(b) = &self.bump {
            let xs = self.torus.wrap_signed(x - b.center.0);
            let ys = self.torus.wrap_signed(y - b.center.1);
            t -= b.psi.eval(xs) * b.phi.eval(ys);
        }
        t
    }

    fn jacobian(&self, x: f64, y: f64) -> Matrix2 {
        let w0 = self.strip_weight(x, self.strip0_center);
        let w1 = self.strip_weight(x, self.strip1_center);
        let dw0 = self.weight_deriv(x, self.strip0_center);
        let dw1 = self.weight_deriv(x, self.strip1_center);
        let mut j21 = dw0 * self.g.offset(y) + dw1 * self.h.offset(y);
        let mut j22 = 1.0 + w0 * self.g.offset_deriv(y) + w1 * self.h.offset_deriv(y);
        if let Some(b) = &self.bump {
            let xs = self.torus.wrap_signed(x - b.center.0);
            let ys = self.torus.wrap_signed(y - b.center.1);
            j21 -= b.psi.deriv(xs) * b.phi.eval(ys);
            j22 -= b.psi.eval(xs) * b.phi.deriv(ys);
        }
        Matrix2::new(self.lambda, 0.0, j21, j22)
    }
}

/// The smoothed 0→1 ramp on [0, 1], shared with the fold cutoff shape.
fn ramp01(t: f64) -> f64 {
    FoldCutoff { delta: 2.0 }.eval(1.0 + t.clamp(0.0, 1.0))
}

fn ramp01_deriv(t: f64) -> f64 {
    if !(0.0..=1.0).contains(&t) {
        return 0.0;
    }
    FoldCutoff { delta: 2.0 }.deriv(1.0 + t)
}

/// Saddle payload: f(p) = A·p − ψ(u)φ(v)·v_μ, where (u, v) are the dual-basis
/// coordinates of the minimal lift of p − c and v_μ is the contracting
/// eigenvector. Outside B(c, r) the map is exactly A.
#[derive(Debug, Clone, Serialize)]
pub struct SaddleMap {
    pub matrix: IntMatrix2,
    pub lambda: f64,
    pub mu: f64,
    /// Unit eigenvectors for λ and μ.
    pub v_lambda: Vector2,
    pub v_mu: Vector2,
    /// Dual covectors: du·v_λ = 1, du·v_μ = 0 and vice versa.
    pub du: Vector2,
    pub dv: Vector2,
    pub center: TorusPoint,
    pub twin: TorusPoint,
    pub r: f64,
    pub theta: f64,
    pub psi: BumpPsi,
    pub phi: BumpPhi,
    pub torus: Torus,
}

impl SaddleMap {
    /// Dual-basis coordinates of the minimal lift of p − c.
    pub fn bump_coords(&self, x: f64, y: f64) -> (f64, f64) {
        let dx = self.torus.wrap_signed(x - self.center.x);
        let dy = self.torus.wrap_signed(y - self.center.y);
        let d = Vector2::new(dx, dy);
        (self.du.dot(d), self.dv.dot(d))
    }

    fn amp(&self, x: f64, y: f64) -> f64 {
        let (u, v) = self.bump_coords(x, y);
        self.psi.eval(u) * self.phi.eval(v)
    }

    fn jacobian(&self, x: f64, y: f64) -> Matrix2 {
        let (u, v) = self.bump_coords(x, y);
        let gpu = self.psi.deriv(u) * self.phi.eval(v);
        let gpv = self.psi.eval(u) * self.phi.deriv(v);
        // grad(amp) = gpu·du + gpv·dv in standard coordinates
        let g = Vector2::new(gpu * self.du.x + gpv * self.dv.x, gpu * self.du.y + gpv * self.dv.y);
        let a = Matrix2::from_int(&self.matrix);
        Matrix2::new(
            a.a - self.v_mu.x * g.x,
            a.b - self.v_mu.x * g.y,
            a.c - self.v_mu.y * g.x,
            a.d - self.v_mu.y * g.y,
        )
    }
}

/// Collapse construction: g(p) = f(0,0) + R(|p|²)·(f(p) − f(0,0)); constant on
/// B(0, δ/2), equal to f outside B(0, δ).
#[derive(Debug, Clone, Serialize)]
pub struct CollapseMap {
    pub base: Box<EndoMap>,
    pub delta: f64,
    pub cutoff: RadialCutoff,
    pub value_at_origin: (f64, f64),
}

/// The map variant: three torus families plus the planar chart maps used by
/// the singularity constructions.
#[derive(Debug, Clone, Serialize)]
pub enum MapKind {
    Linear(IntMatrix2),
    Expanding(ExpandingMap),
    NonHyperbolic(NonHyperbolicMap),
    Saddle(SaddleMap),
    /// Fold normal form (x, y²) on a chart.
    Fold,
    /// Cusp normal form (x, −xy + y³) on a chart.
    Cusp,
    /// (x, c(y)·y²) with a fold cutoff c.
    FlattenedFold(FoldCutoff),
    Collapse(CollapseMap),
    /// (x² + y², xy): both partials vanish at the origin.
    QuadraticModel,
    Perturbed(perturb::PerturbedMap),
}

/// Where a map lives: a torus, or a planar chart box.
#[derive(Debug, Clone, Copy, Serialize)]
pub enum Domain {
    Torus(Torus),
    Chart(Rect),
}

/// A nonlinear region of a family (everywhere else the map is its base
/// matrix); used to focus refinement and verification grids.
#[derive(Debug, Clone, Copy)]
pub enum NonlinearRegion {
    Ball { center: (f64, f64), radius: f64 },
    XBand { center: f64, halfwidth: f64 },
}

/// A tagged family member with analytic evaluation and Jacobian.
#[derive(Debug, Clone, Serialize)]
pub struct EndoMap {
    pub kind: MapKind,
    pub domain: Domain,
}

impl EndoMap {
    pub fn torus(&self) -> Option<Torus> {
        match self.domain {
            Domain::Torus(t) => Some(t),
            Domain::Chart(_) => None,
        }
    }

    pub fn chart(&self) -> Option<Rect> {
        match self.domain {
            Domain::Torus(_) => None,
            Domain::Chart(r) => Some(r),
        }
    }

    pub fn linear(matrix: IntMatrix2, torus: Torus) -> Self {
        EndoMap { kind: MapKind::Linear(matrix), domain: Domain::Torus(torus) }
    }

    pub fn fold_chart(rect: Rect) -> Self {
        EndoMap { kind: MapKind::Fold, domain: Domain::Chart(rect) }
    }

    pub fn cusp_chart(rect: Rect) -> Self {
        EndoMap { kind: MapKind::Cusp, domain: Domain::Chart(rect) }
    }

    pub fn quadratic_model(rect: Rect) -> Self {
        EndoMap { kind: MapKind::QuadraticModel, domain: Domain::Chart(rect) }
    }

    /// Short address of the canonical instances.
    pub fn name(&self) -> String {
        match &self.kind {
            MapKind::Linear(m) => format!("linear-{}-{}-{}-{}", m.a, m.b, m.c, m.d),
            MapKind::Expanding(e) => format!("expanding-{}-{}", e.matrix.a, e.matrix.d),
            MapKind::NonHyperbolic(n) => format!("nonhyp-{}", n.matrix.a),
            MapKind::Saddle(s) => {
                format!("saddle-{}-{}-{}-{}", s.matrix.a, s.matrix.b, s.matrix.c, s.matrix.d)
            }
            MapKind::Fold => "fold".into(),
            MapKind::Cusp => "cusp".into(),
            MapKind::FlattenedFold(_) => "flattened-fold".into(),
            MapKind::Collapse(_) => "collapse".into(),
            MapKind::QuadraticModel => "quadratic-model".into(),
            MapKind::Perturbed(p) => format!("perturbed({})", p.base.name()),
        }
    }

    /// Lift/chart evaluation on raw plane coordinates.
    pub fn eval_lift(&self, x: f64, y: f64) -> (f64, f64) {
        match &self.kind {
            MapKind::Linear(m) => {
                (m.a as f64 * x + m.b as f64 * y, m.c as f64 * x + m.d as f64 * y)
            }
            MapKind::Expanding(e) => (e.lambda * x, e.second_coord(x, y)),
            MapKind::NonHyperbolic(n) => (n.lambda * x, y + n.second_coord_offset(x, y)),
            MapKind::Saddle(s) => {
                let a = &s.matrix;
                let amp = s.amp(x, y);
                (
                    a.a as f64 * x + a.b as f64 * y - amp * s.v_mu.x,
                    a.c as f64 * x + a.d as f64 * y - amp * s.v_mu.y,
                )
            }
            MapKind::Fold => (x, y * y),
            MapKind::Cusp => (x, -x * y + y * y * y),
            MapKind::FlattenedFold(c) => (x, c.eval(y) * y * y),
            MapKind::Collapse(c) => {
                let (fx, fy) = c.base.eval_lift(x, y);
                let s = x * x + y * y;
                let w = c.cutoff.eval_s(s);
                (
                    c.value_at_origin.0 + w * (fx - c.value_at_origin.0),
                    c.value_at_origin.1 + w * (fy - c.value_at_origin.1),
                )
            }
            MapKind::QuadraticModel => (x * x + y * y, x * y),
            MapKind::Perturbed(p) => {
                let (fx, fy) = p.base.eval_lift(x, y);
                let d = p.field.eval(x, y);
                (fx + d.x, fy + d.y)
            }
        }
    }

    /// Torus evaluation: the lift, wrapped.
    pub fn eval(&self, p: &TorusPoint) -> TorusPoint {
        let (x, y) = self.eval_lift(p.x, p.y);
        wrap_unchecked(x, y, p.torus)
    }

    /// Analytic Jacobian at raw plane coordinates.
    pub fn jacobian_at(&self, x: f64, y: f64) -> Matrix2 {
        match &self.kind {
            MapKind::Linear(m) => Matrix2::from_int(m),
            MapKind::Expanding(e) => e.jacobian(x, y),
            MapKind::NonHyperbolic(n) => n.jacobian(x, y),
            MapKind::Saddle(s) => s.jacobian(x, y),
            MapKind::Fold => Matrix2::new(1.0, 0.0, 0.0, 2.0 * y),
            MapKind::Cusp => Matrix2::new(1.0, 0.0, -y, -x + 3.0 * y * y),
            MapKind::FlattenedFold(c) => {
                Matrix2::new(1.0, 0.0, 0.0, c.deriv(y) * y * y + 2.0 * c.eval(y) * y)
            }
            MapKind::Collapse(c) => {
                let s = x * x + y * y;
                let w = c.cutoff.eval_s(s);
                let dw = c.cutoff.deriv_s(s);
                let (fx, fy) = c.base.eval_lift(x, y);
                let j = c.base.jacobian_at(x, y);
                let rx = fx - c.value_at_origin.0;
                let ry = fy - c.value_at_origin.1;
                Matrix2::new(
                    w * j.a + dw * 2.0 * x * rx,
                    w * j.b + dw * 2.0 * y * rx,
                    w * j.c + dw * 2.0 * x * ry,
                    w * j.d + dw * 2.0 * y * ry,
                )
            }
            MapKind::QuadraticModel => Matrix2::new(2.0 * x, 2.0 * y, y, x),
            MapKind::Perturbed(p) => {
                let j = p.base.jacobian_at(x, y);
                let dj = p.field.jacobian(x, y);
                Matrix2::new(j.a + dj.a, j.b + dj.b, j.c + dj.c, j.d + dj.d)
            }
        }
    }

    pub fn jacobian(&self, p: &TorusPoint) -> JacobianMatrix {
        JacobianMatrix { matrix: self.jacobian_at(p.x, p.y), at: (p.x, p.y) }
    }

    pub fn det_at(&self, x: f64, y: f64) -> f64 {
        self.jacobian_at(x, y).det()
    }

    /// The lattice action of the family (None for chart maps).
    pub fn base_matrix(&self) -> Option<IntMatrix2> {
        match &self.kind {
            MapKind::Linear(m) => Some(*m),
            MapKind::Expanding(e) => Some(e.matrix),
            MapKind::NonHyperbolic(n) => Some(n.matrix),
            MapKind::Saddle(s) => Some(s.matrix),
            MapKind::Perturbed(p) => p.base.base_matrix(),
            MapKind::Collapse(c) => c.base.base_matrix(),
            _ => None,
        }
    }

    /// Integer matrix induced on the fundamental group, computed by
    /// path-lifting at several base points.
    pub fn homology_action(&self) -> Result<IntMatrix2> {
        let torus = self.torus().ok_or_else(|| {
            EndoError::Unsupported("homology action requires a torus map".into())
        })?;
        torus_homology(|p| self.eval(&p), torus)
    }

    /// Regions where the map differs from its base matrix.
    pub fn nonlinear_regions(&self) -> Vec<NonlinearRegion> {
        match &self.kind {
            MapKind::Linear(_) => vec![],
            MapKind::Expanding(e) => {
                let mut v = vec![NonlinearRegion::Ball { center: (0.0, 0.0), radius: e.r / 8.0 }];
                if let Some(p) = &e.plateau {
                    v.push(NonlinearRegion::Ball {
                        center: (0.0, p.y_center),
                        radius: p.x_cutoff.delta + 2.0 * p.w + e.phi.delta,
                    });
                }
                v
            }
            MapKind::NonHyperbolic(n) => {
                let hw = n.strip_halfwidth + n.collar_width;
                let mut v = vec![
                    NonlinearRegion::XBand { center: n.strip0_center, halfwidth: hw },
                    NonlinearRegion::XBand { center: n.strip1_center, halfwidth: hw },
                ];
                if let Some(b) = &n.bump {
                    v.push(NonlinearRegion::Ball { center: b.center, radius: b.r });
                }
                v
            }
            MapKind::Saddle(s) => {
                vec![NonlinearRegion::Ball { center: (s.center.x, s.center.y), radius: s.r }]
            }
            MapKind::Perturbed(_) => vec![],
            _ => vec![],
        }
    }

    /// True when the point is outside every declared support region, where
    /// the family equals its base matrix exactly.
    pub fn is_off_support(&self, p: &TorusPoint) -> bool {
        let torus = match self.torus() {
            Some(t) => t,
            None => return false,
        };
        for region in self.nonlinear_regions() {
            match region {
                NonlinearRegion::Ball { center, radius } => {
                    let dx = torus.wrap_signed(p.x - center.0);
                    let dy = torus.wrap_signed(p.y - center.1);
                    if dx.hypot(dy) <= radius {
                        return false;
                    }
                }
                NonlinearRegion::XBand { center, halfwidth } => {
                    if torus.wrap_signed(p.x - center).abs() <= halfwidth {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Regions where mapped curves need a finer chord length, paired with
    /// the required scale. The annulus ball of the expanding family is
    /// listed so escape constructions resolve U′ crossings at vertex level.
    pub fn refinement_regions(&self) -> Vec<(NonlinearRegion, f64)> {
        match &self.kind {
            MapKind::Expanding(e) => {
                let mut v = vec![
                    (
                        NonlinearRegion::Ball { center: (0.0, 0.0), radius: e.r / 8.0 },
                        e.theta / 10.0,
                    ),
                    (
                        NonlinearRegion::Ball { center: (0.0, 0.0), radius: 4.0 * e.r },
                        e.r / 20.0,
                    ),
                ];
                if let Some(p) = &e.plateau {
                    v.push((
                        NonlinearRegion::Ball {
                            center: (0.0, p.y_center),
                            radius: p.x_cutoff.delta + 2.0 * p.w + e.phi.delta,
                        },
                        e.theta / 10.0,
                    ));
                }
                v
            }
            MapKind::Saddle(s) => vec![(
                NonlinearRegion::Ball { center: (s.center.x, s.center.y), radius: s.r },
                s.theta / 10.0,
            )],
            MapKind::NonHyperbolic(n) => match &n.bump {
                Some(b) => vec![(
                    NonlinearRegion::Ball { center: b.center, radius: b.r },
                    b.theta / 10.0,
                )],
                None => vec![],
            },
            MapKind::Perturbed(p) => p.base.refinement_regions(),
            _ => vec![],
        }
    }

    /// Smallest geometric feature of the map, used to size finite-difference
    /// steps and refinement scales.
    pub fn feature_scale(&self) -> f64 {
        match &self.kind {
            MapKind::Linear(_) => self.torus().map(|t| t.side()).unwrap_or(1.0),
            MapKind::Expanding(e) => e.phi.delta * e.phi.spike_frac,
            MapKind::NonHyperbolic(n) => match &n.bump {
                Some(b) => b.phi.delta * b.phi.spike_frac,
                None => n.collar_width,
            },
            MapKind::Saddle(s) => s.phi.delta * s.phi.spike_frac,
            MapKind::Fold | MapKind::Cusp | MapKind::QuadraticModel => 1.0,
            MapKind::FlattenedFold(c) => c.delta / 4.0,
            MapKind::Collapse(c) => c.delta * c.delta / 4.0,
            MapKind::Perturbed(p) => p.base.feature_scale(),
        }
    }

    /// Search region for the critical set: the support bounding box for the
    /// known families, the chart (or full torus) otherwise.
    pub fn critical_search_region(&self) -> Rect {
        match &self.kind {
            MapKind::Expanding(e) => {
                let d = e.phi.delta;
                Rect::new(-2.0 * e.theta, -0.5 * d, 2.0 * e.theta, 1.5 * d)
            }
            MapKind::NonHyperbolic(n) => match &n.bump {
                Some(b) => {
                    let d = b.phi.delta;
                    Rect::new(
                        b.center.0 - 2.0 * b.theta,
                        b.center.1 - 0.5 * d,
                        b.center.0 + 2.0 * b.theta,
                        b.center.1 + 1.5 * d,
                    )
                }
                None => full_domain_rect(self),
            },
            MapKind::Saddle(s) => {
                let ext = s.theta.max(s.phi.delta) * 1.6;
                Rect::new(s.center.x - ext, s.center.y - ext, s.center.x + ext, s.center.y + ext)
            }
            _ => full_domain_rect(self),
        }
    }
}

fn full_domain_rect(map: &EndoMap) -> Rect {
    match map.domain {
        Domain::Torus(t) => Rect::new(0.0, 0.0, t.side(), t.side()),
        Domain::Chart(r) => r,
    }
}
