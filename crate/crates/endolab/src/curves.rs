//! Cone-tangent polyline curves on the torus: refinement, mapping, lifted
//! diameter, growth certification, annulus avoidance and the escape-point /
//! internal-radius constructions.

use crate::cones::ConeSpec;
use crate::error::{EndoError, Result};
use crate::maps::{EndoMap, NonlinearRegion};
use crate::torus::{
    shortest_displacement, torus_distance, wrap_unchecked, Torus, TorusPoint, Vector2,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Piecewise-linear curve with per-segment minimal-lift displacements, so the
/// lift is well defined as long as every segment is shorter than side/4.
#[derive(Debug, Clone)]
pub struct TorusPolyline {
    pub torus: Torus,
    vertices: Vec<TorusPoint>,
    /// Lift displacement from vertex i to i+1.
    seg: Vec<Vector2>,
    /// Original-curve parameter of each vertex, preserved by refinement and
    /// mapping; used to trace subcurves back to the seed.
    params: Vec<f64>,
}

impl TorusPolyline {
    pub fn from_points(torus: Torus, pts: &[(f64, f64)]) -> Result<Self> {
        if pts.len() < 2 {
            return Err(EndoError::InvalidArgument("a polyline needs at least 2 vertices".into()));
        }
        let vertices: Vec<TorusPoint> =
            pts.iter().map(|&(x, y)| wrap_unchecked(x, y, torus)).collect();
        let n = vertices.len();
        let params: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        Self::assemble(torus, vertices, params)
    }

    /// Straight segment between two raw endpoints (length below side/4).
    pub fn segment(torus: Torus, a: (f64, f64), b: (f64, f64)) -> Result<Self> {
        Self::from_points(torus, &[a, b])
    }

    fn assemble(torus: Torus, vertices: Vec<TorusPoint>, params: Vec<f64>) -> Result<Self> {
        let mut seg = Vec::with_capacity(vertices.len() - 1);
        for i in 0..vertices.len() - 1 {
            let d = shortest_displacement(&vertices[i], &vertices[i + 1])?;
            if d.vector.norm() >= torus.side() / 4.0 {
                return Err(EndoError::InvalidArgument(format!(
                    "segment {i} of length {} is lift-ambiguous (limit side/4 = {})",
                    d.vector.norm(),
                    torus.side() / 4.0
                )));
            }
            seg.push(d.vector);
        }
        Ok(TorusPolyline { torus, vertices, seg, params })
    }

    pub fn vertices(&self) -> &[TorusPoint] {
        &self.vertices
    }

    pub fn segments(&self) -> &[Vector2] {
        &self.seg
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn total_length(&self) -> f64 {
        self.seg.iter().map(|s| s.norm()).sum()
    }

    /// Lift of the vertex chain starting at vertex 0.
    pub fn lift(&self) -> Vec<Vector2> {
        let mut out = Vec::with_capacity(self.vertices.len());
        let mut cur = self.vertices[0].as_vector();
        out.push(cur);
        for s in &self.seg {
            cur = cur + *s;
            out.push(cur);
        }
        out
    }

    /// Point at an original parameter value (linear interpolation in the lift).
    pub fn point_at_param(&self, t: f64) -> TorusPoint {
        let i = match self.params.windows(2).position(|w| t >= w[0] && t <= w[1]) {
            Some(i) => i,
            None => {
                if t <= self.params[0] {
                    return self.vertices[0];
                }
                return *self.vertices.last().unwrap();
            }
        };
        let (t0, t1) = (self.params[i], self.params[i + 1]);
        let frac = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.5 };
        self.vertices[i].translate(self.seg[i].scale(frac))
    }

    /// Subcurve spanned by a vertex range (inclusive).
    pub fn slice(&self, from: usize, to: usize) -> Result<TorusPolyline> {
        if to <= from || to >= self.vertices.len() {
            return Err(EndoError::InvalidArgument(format!("bad slice {from}..{to}")));
        }
        Self::assemble(
            self.torus,
            self.vertices[from..=to].to_vec(),
            self.params[from..=to].to_vec(),
        )
    }

    /// Bisect segments until each is at most h_max, or at most the region's
    /// finer scale where a sub-segment touches one of the refinement regions.
    /// Bisection keeps the fine resolution local: the far part of a long
    /// segment stops touching once its own reach shrinks.
    pub fn refine(
        &self,
        h_max: f64,
        fine: Option<&[(NonlinearRegion, f64)]>,
        cap: usize,
    ) -> Result<TorusPolyline> {
        let mut vertices = Vec::with_capacity(self.vertices.len());
        let mut params = Vec::with_capacity(self.params.len());
        let target_for = |v: &TorusPoint, d: Vector2| -> f64 {
            let mut t = h_max;
            if let Some(regions) = fine {
                for (r, scale) in regions {
                    if segment_touches(v, d, std::slice::from_ref(r), self.torus) {
                        t = t.min(*scale);
                    }
                }
            }
            t
        };
        for i in 0..self.seg.len() {
            // stack of (start point, displacement, param start, param span)
            let mut stack = vec![(
                self.vertices[i],
                self.seg[i],
                self.params[i],
                self.params[i + 1] - self.params[i],
            )];
            while let Some((v, d, t0, tspan)) = stack.pop() {
                if d.norm() <= target_for(&v, d) {
                    vertices.push(v);
                    params.push(t0);
                    if vertices.len() > cap {
                        return Err(EndoError::RefinementOverflow {
                            vertices: vertices.len(),
                            cap,
                        });
                    }
                } else {
                    let half = d.scale(0.5);
                    // push the second half first so the first comes out on top
                    stack.push((v.translate(half), half, t0 + tspan / 2.0, tspan / 2.0));
                    stack.push((v, half, t0, tspan / 2.0));
                }
            }
        }
        vertices.push(*self.vertices.last().unwrap());
        params.push(*self.params.last().unwrap());
        Self::assemble(self.torus, vertices, params)
    }

    /// Map every vertex; fails if some image segment is lift-ambiguous.
    fn map_vertices(&self, map: &EndoMap) -> Result<TorusPolyline> {
        let vertices: Vec<TorusPoint> = self.vertices.iter().map(|p| map.eval(p)).collect();
        Self::assemble(self.torus, vertices, self.params.clone())
    }

    /// Merge runs of collinear segments (within `tol` of perfect alignment).
    /// Merged displacements are summed, not re-derived from wraps, so chords
    /// longer than the minimal-lift bound keep their true lift.
    pub fn simplify(&self, tol: f64) -> TorusPolyline {
        if self.vertices.len() <= 2 {
            return self.clone();
        }
        let mut vertices = vec![self.vertices[0]];
        let mut params = vec![self.params[0]];
        let mut seg = Vec::new();
        let mut acc = self.seg[0];
        for i in 1..self.seg.len() {
            let b = self.seg[i];
            let cross = (acc.x * b.y - acc.y * b.x).abs();
            if cross <= tol * acc.norm() * b.norm() && acc.dot(b) > 0.0 {
                acc = acc + b;
            } else {
                vertices.push(self.vertices[i]);
                params.push(self.params[i]);
                seg.push(acc);
                acc = b;
            }
        }
        seg.push(acc);
        vertices.push(*self.vertices.last().unwrap());
        params.push(*self.params.last().unwrap());
        TorusPolyline { torus: self.torus, vertices, seg, params }
    }
}

fn segment_touches(
    v: &TorusPoint,
    d: Vector2,
    regions: &[NonlinearRegion],
    torus: Torus,
) -> bool {
    let mid = v.translate(d.scale(0.5));
    let reach = d.norm();
    for r in regions {
        match *r {
            NonlinearRegion::Ball { center, radius } => {
                let dx = torus.wrap_signed(mid.x - center.0);
                let dy = torus.wrap_signed(mid.y - center.1);
                if dx.hypot(dy) <= radius + reach {
                    return true;
                }
            }
            NonlinearRegion::XBand { center, halfwidth } => {
                if torus.wrap_signed(mid.x - center).abs() <= halfwidth + reach {
                    return true;
                }
            }
        }
    }
    false
}

/// Lifted diameter of a polyline. Saturates at side/2, beyond which the lift
/// no longer matches the torus diameter.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DiameterValue {
    pub value: f64,
    pub saturated: bool,
}

pub fn diameter(curve: &TorusPolyline) -> DiameterValue {
    let pts = curve.lift();
    let value = hull_diameter(&pts);
    DiameterValue { value, saturated: value >= curve.torus.side() / 2.0 }
}

/// Exact diameter of a planar point set: convex hull + rotating calipers.
fn hull_diameter(pts: &[Vector2]) -> f64 {
    if pts.len() < 2 {
        return 0.0;
    }
    let hull = convex_hull(pts);
    if hull.len() == 1 {
        return 0.0;
    }
    if hull.len() == 2 {
        return (hull[1] - hull[0]).norm();
    }
    let n = hull.len();
    let mut best: f64 = 0.0;
    let mut j = 1usize;
    for i in 0..n {
        let edge = hull[(i + 1) % n] - hull[i];
        loop {
            let next = (j + 1) % n;
            let cur = cross(edge, hull[j] - hull[i]);
            let nxt = cross(edge, hull[next] - hull[i]);
            if nxt > cur {
                j = next;
            } else {
                break;
            }
        }
        best = best.max((hull[j] - hull[i]).norm());
        best = best.max((hull[j] - hull[(i + 1) % n]).norm());
    }
    best
}

fn cross(a: Vector2, b: Vector2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Andrew monotone chain; collinear input degenerates to its two extremes.
fn convex_hull(pts: &[Vector2]) -> Vec<Vector2> {
    let mut p: Vec<Vector2> = pts.to_vec();
    p.sort_by(|a, b| (a.x, a.y).partial_cmp(&(b.x, b.y)).unwrap());
    p.dedup_by(|a, b| (a.x - b.x).abs() < 1e-18 && (a.y - b.y).abs() < 1e-18);
    if p.len() <= 2 {
        return p;
    }
    let mut lower: Vec<Vector2> = Vec::new();
    for &pt in &p {
        while lower.len() >= 2
            && cross(lower[lower.len() - 1] - lower[lower.len() - 2], pt - lower[lower.len() - 2])
                <= 0.0
        {
            lower.pop();
        }
        lower.push(pt);
    }
    let mut upper: Vec<Vector2> = Vec::new();
    for &pt in p.iter().rev() {
        while upper.len() >= 2
            && cross(upper[upper.len() - 1] - upper[upper.len() - 2], pt - upper[upper.len() - 2])
                <= 0.0
        {
            upper.pop();
        }
        upper.push(pt);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    if lower.len() < 2 {
        return vec![p[0], p[p.len() - 1]];
    }
    lower
}

/// Refinement policy for curve mapping.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RefinementPolicy {
    pub h_max: f64,
    pub vertex_cap: usize,
    pub tol: f64,
}

impl RefinementPolicy {
    pub fn for_map(map: &EndoMap) -> Self {
        let side = map.torus().map(|t| t.side()).unwrap_or(1.0);
        RefinementPolicy { h_max: 1e-3 * side, vertex_cap: 4_000_000, tol: 1e-9 }
    }
}

/// Check every chord of the curve against the cone; returns the worst slope.
pub fn verify_tangent_cone(curve: &TorusPolyline, cone: &ConeSpec) -> Result<(bool, f64)> {
    let mut worst: f64 = 0.0;
    for s in curve.segments() {
        if s.norm() == 0.0 {
            return Err(EndoError::DegenerateSegment);
        }
        worst = worst.max(cone.slope(*s));
    }
    Ok((worst < cone.half_aperture, worst))
}

/// Refine until segments are at most h_max (finer on the map's refinement
/// regions), then map vertices. Retries with halved step when an image
/// segment would be lift-ambiguous.
pub fn map_curve(map: &EndoMap, curve: &TorusPolyline, policy: &RefinementPolicy) -> Result<TorusPolyline> {
    let regions = map.refinement_regions();
    let mut h = policy.h_max;
    for _ in 0..10 {
        let refined = curve.refine(h, Some(&regions), policy.vertex_cap)?;
        match refined.map_vertices(map) {
            Ok(image) => return Ok(image),
            Err(EndoError::InvalidArgument(_)) => {
                h /= 2.0;
            }
            Err(e) => return Err(e),
        }
    }
    Err(EndoError::RefinementOverflow { vertices: curve.len(), cap: policy.vertex_cap })
}

/// Per-iterate diameters of a cone-tangent curve under the map.
#[derive(Debug, Clone, Serialize)]
pub struct GrowthCertificate {
    pub diameters: Vec<f64>,
    pub factors: Vec<f64>,
    pub lambda_prime: f64,
    pub pass: bool,
    pub saturated_at: Option<usize>,
    pub policy: RefinementPolicy,
}

/// Iterate the curve n times (or until the lifted diameter saturates at
/// side/2), certifying diam(f(γ)) ≥ λ′·diam(γ) per step.
pub fn growth_certify(
    map: &EndoMap,
    curve: &TorusPolyline,
    cone: &ConeSpec,
    lambda_prime: f64,
    n: usize,
    policy: &RefinementPolicy,
) -> Result<GrowthCertificate> {
    let (ok, worst) = verify_tangent_cone(curve, cone)?;
    if !ok {
        return Err(EndoError::GeometryViolated(format!(
            "seed curve leaves the cone (worst slope {worst} vs aperture {})",
            cone.half_aperture
        )));
    }
    let mut current = curve.clone();
    let mut diameters = vec![diameter(&current).value];
    let mut factors = Vec::new();
    let mut saturated_at = None;
    for k in 0..n {
        current = map_curve(map, &current, policy)?;
        current = current.simplify(1e-12);
        let d = diameter(&current);
        factors.push(d.value / diameters.last().unwrap());
        diameters.push(d.value);
        if d.saturated {
            saturated_at = Some(k + 1);
            break;
        }
    }
    let tol = 1e-9;
    let pass = factors.iter().all(|&f| f >= lambda_prime - tol);
    Ok(GrowthCertificate { diameters, factors, lambda_prime, pass, saturated_at, policy: *policy })
}

/// Sampled verification that the first nine iterates of the annulus U \ U′
/// stay clear of U′, with the exact linear inner radius for comparison.
#[derive(Debug, Clone, Serialize)]
pub struct AnnulusReport {
    pub samples: usize,
    pub steps: usize,
    /// min over samples of distance-to-origin − 3r, per step.
    pub per_step_clearance: Vec<f64>,
    pub min_clearance: f64,
    /// Inner radius |μ|^i · 3r of the exact linear image.
    pub oracle_inner_radius: Vec<f64>,
    pub pass: bool,
}

pub fn annulus_avoidance_check(
    map: &EndoMap,
    steps: usize,
    samples: usize,
    seed: u64,
) -> Result<AnnulusReport> {
    let e = map
        .as_expanding()
        .ok_or_else(|| EndoError::Unsupported("annulus check applies to the expanding family".into()))?;
    let torus = map.torus().unwrap();
    let r = e.r;
    let origin = wrap_unchecked(0.0, 0.0, torus);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_step = vec![f64::INFINITY; steps];
    for _ in 0..samples {
        let rho = rng.gen_range(3.0 * r..4.0 * r);
        let ang = rng.gen_range(0.0..std::f64::consts::TAU);
        let mut p = wrap_unchecked(rho * ang.cos(), rho * ang.sin(), torus);
        for step in per_step.iter_mut() {
            p = map.eval(&p);
            let clearance = torus_distance(&p, &origin)? - 3.0 * r;
            if clearance < *step {
                *step = clearance;
            }
        }
    }
    let oracle: Vec<f64> =
        (1..=steps).map(|i| e.mu.abs().powi(i as i32) * 3.0 * r).collect();
    let min_clearance = per_step.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(AnnulusReport {
        samples,
        steps,
        per_step_clearance: per_step,
        min_clearance,
        oracle_inner_radius: oracle,
        pass: min_clearance > 0.0,
    })
}

/// Result of the escape construction: a point of the seed curve whose forward
/// orbit leaves U′ permanently after n₀ steps (validated up to a finite
/// budget).
#[derive(Debug, Clone, Serialize)]
pub struct EscapeReport {
    pub point: TorusPoint,
    pub n0: usize,
    /// Forward steps of the validation run (0 means unvalidated).
    pub validated_to: usize,
    pub curve_steps: usize,
    pub unvalidated: bool,
}

/// Iterate a cone-tangent seed curve; whenever the image meets U′, keep a
/// subcurve of diameter ≥ r inside the annulus U \ U′ and track its parameter
/// interval backward. The midpoint of the final nested interval is the escape
/// point; its orbit is then validated to stay out of U′ for `budget` steps
/// beyond n₀ (the step at which the diameter first reached 10r).
pub fn escape_point(
    map: &EndoMap,
    seed: &TorusPolyline,
    budget: usize,
    policy: &RefinementPolicy,
) -> Result<EscapeReport> {
    let e = map
        .as_expanding()
        .ok_or_else(|| EndoError::Unsupported("escape construction needs the expanding family".into()))?;
    let torus = map.torus().unwrap();
    let r = e.r;
    let origin = wrap_unchecked(0.0, 0.0, torus);

    let mut current = seed.clone();
    let mut n = 0usize;
    let mut n0: Option<usize> = None;
    let extra_after_n0 = 6usize;
    let max_curve_steps = 60usize;

    loop {
        let d = diameter(&current);
        if n0.is_none() && (d.value >= 10.0 * r || d.saturated) {
            n0 = Some(n);
        }
        if let Some(k) = n0 {
            if n >= k + extra_after_n0 || n >= max_curve_steps {
                break;
            }
        }
        if n >= max_curve_steps {
            break;
        }
        current = map_curve(map, &current, policy)?.simplify(1e-12);
        n += 1;

        let dists: Vec<f64> = current
            .vertices()
            .iter()
            .map(|p| torus_distance(p, &origin).unwrap())
            .collect();
        if dists.iter().any(|&d| d <= 3.0 * r) {
            // Keep a run of vertices inside the annulus with diameter ≥ r.
            let mut chosen: Option<(usize, usize)> = None;
            let mut start: Option<usize> = None;
            for (i, &di) in dists.iter().enumerate() {
                let inside = di > 3.0 * r && di < 4.0 * r;
                match (inside, start) {
                    (true, None) => start = Some(i),
                    (false, Some(s)) => {
                        if i - s >= 1 {
                            let sub = current.slice(s, i - 1);
                            if let Ok(sub) = sub {
                                if diameter(&sub).value >= 0.999 * r {
                                    chosen = Some((s, i - 1));
                                    break;
                                }
                            }
                        }
                        start = None;
                    }
                    _ => {}
                }
            }
            if chosen.is_none() {
                if let Some(s) = start {
                    let end = dists.len() - 1;
                    if end > s {
                        if let Ok(sub) = current.slice(s, end) {
                            if diameter(&sub).value >= 0.999 * r {
                                chosen = Some((s, end));
                            }
                        }
                    }
                }
            }
            let (s, t) = chosen.ok_or_else(|| {
                EndoError::GeometryViolated(
                    "no annulus subcurve of diameter r; growth assumption violated".into(),
                )
            })?;
            current = current.slice(s, t)?;
        }
    }

    let n0 = n0.ok_or_else(|| {
        EndoError::NoGrowth(format!("diameter never reached 10r within {max_curve_steps} steps"))
    })?;

    let t_mid = 0.5 * (current.params()[0] + current.params()[current.len() - 1]);
    let y = seed.point_at_param(t_mid);

    // Forward validation: the orbit must stay out of U′ for all checked
    // steps at or beyond n₀.
    let mut p = y;
    let mut validated_to = 0usize;
    for step in 1..=budget {
        p = map.eval(&p);
        if step >= n0 && torus_distance(&p, &origin)? <= 3.0 * r {
            return Err(EndoError::EscapeInvalid { step });
        }
        validated_to = step;
    }
    Ok(EscapeReport {
        point: y,
        n0,
        validated_to,
        curve_steps: n,
        unvalidated: budget == 0,
    })
}

/// Result of the internal-radius construction: from n_ν on, the image of V
/// contains the r-ball around the orbit of y.
#[derive(Debug, Clone, Serialize)]
pub struct InternalRadiusReport {
    pub n_nu: usize,
    /// Ball containment checked by winding/min-distance up to this step.
    pub verified_directly_to: usize,
    /// Beyond direct verification the property persists by one exact step:
    /// outside U′ the map is the base matrix and A(B(z, r)) ⊇ B(Az, r); this
    /// field records how far that avoidance condition was checked.
    pub verified_inductively_to: usize,
}

/// Find the first n_ν with f^n(V) ⊇ B(f^n(y), r) for all tested n ≥ n_ν,
/// where V = B(y, v_radius). The boundary circle of V is tracked as a dense
/// polyline; containment is certified by winding number and clearance until
/// the image saturates the lift, after which the exact linear step keeps the
/// inclusion while the orbit stays clear of U′.
pub fn internal_radius_growth(
    map: &EndoMap,
    y: &TorusPoint,
    v_radius: f64,
    r: f64,
    budget: usize,
) -> Result<InternalRadiusReport> {
    let torus = map.torus().ok_or_else(|| {
        EndoError::Unsupported("internal radius growth runs on torus maps".into())
    })?;
    let origin = wrap_unchecked(0.0, 0.0, torus);
    let exclusion = map.as_expanding().map(|e| 3.0 * e.r);

    let n_samples = 1024;
    let mut boundary: Vec<TorusPoint> = (0..=n_samples)
        .map(|k| {
            let ang = std::f64::consts::TAU * k as f64 / n_samples as f64;
            y.translate(Vector2::new(v_radius * ang.cos(), v_radius * ang.sin()))
        })
        .collect();
    let mut center = *y;
    let mut n_nu: Option<usize> = None;
    let mut direct_to = 0usize;

    for n in 0..=budget {
        if let Some(rr) = exclusion {
            let d = torus_distance(&center, &origin)?;
            if n > 0 && d <= rr {
                return Err(EndoError::GeometryViolated(format!(
                    "orbit entered the excluded ball at step {n}"
                )));
            }
        }
        // Stop direct verification once the boundary diameter saturates.
        let lifted = lift_loop(&boundary, torus);
        let diam = hull_diameter(&lifted);
        if diam >= 0.45 * torus.side() {
            let ind_to = verify_avoidance_tail(map, &center, exclusion, n, budget)?;
            let n_nu = n_nu.ok_or_else(|| {
                EndoError::NoGrowth(format!(
                    "ball containment not reached before lift saturation at step {n}"
                ))
            })?;
            return Ok(InternalRadiusReport {
                n_nu,
                verified_directly_to: direct_to,
                verified_inductively_to: ind_to,
            });
        }
        let contains = contains_ball(&lifted, &boundary[0].torus, &center, r);
        if contains {
            if n_nu.is_none() {
                n_nu = Some(n);
            }
            direct_to = n;
        } else if n_nu.is_some() {
            return Err(EndoError::NoGrowth(format!(
                "containment lost at step {n} after being reached"
            )));
        }
        if n == budget {
            break;
        }
        boundary = boundary.iter().map(|p| map.eval(p)).collect();
        center = map.eval(&center);
    }

    match n_nu {
        Some(n_nu) => Ok(InternalRadiusReport {
            n_nu,
            verified_directly_to: direct_to,
            verified_inductively_to: direct_to,
        }),
        None => Err(EndoError::NoGrowth(format!(
            "image of V never contained the r-ball within budget {budget}"
        ))),
    }
}

fn verify_avoidance_tail(
    map: &EndoMap,
    center: &TorusPoint,
    exclusion: Option<f64>,
    from: usize,
    budget: usize,
) -> Result<usize> {
    let rr = match exclusion {
        Some(rr) => rr,
        None => return Ok(budget),
    };
    let torus = map.torus().unwrap();
    let origin = wrap_unchecked(0.0, 0.0, torus);
    let mut p = *center;
    let mut last = from;
    for n in from + 1..=budget {
        p = map.eval(&p);
        if torus_distance(&p, &origin)? <= rr {
            return Err(EndoError::EscapeInvalid { step: n });
        }
        last = n;
    }
    Ok(last)
}

/// Lift a closed loop of points continuously.
fn lift_loop(points: &[TorusPoint], _torus: Torus) -> Vec<Vector2> {
    let mut out = Vec::with_capacity(points.len());
    let mut cur = points[0].as_vector();
    out.push(cur);
    for w in points.windows(2) {
        let d = shortest_displacement(&w[0], &w[1]).unwrap().vector;
        cur = cur + d;
        out.push(cur);
    }
    out
}

/// B(center, r) ⊆ interior of the lifted loop: winding number ±1 around the
/// center and boundary clearance at least r.
fn contains_ball(lifted: &[Vector2], torus: &Torus, center: &TorusPoint, r: f64) -> bool {
    // Place the center on the same lift as the loop start.
    let start = lifted[0];
    let start_pt = wrap_unchecked(start.x, start.y, *torus);
    let d = shortest_displacement(&start_pt, center).unwrap().vector;
    let c = start + d;

    let mut wind = 0.0f64;
    let mut min_dist = f64::INFINITY;
    for w in lifted.windows(2) {
        let a = w[0] - c;
        let b = w[1] - c;
        wind += (a.x * b.y - a.y * b.x).atan2(a.dot(b));
        min_dist = min_dist.min(point_segment_distance(c, w[0], w[1]));
    }
    let turns = wind / std::f64::consts::TAU;
    (turns.abs() - 1.0).abs() < 0.1 && min_dist >= r
}

fn point_segment_distance(p: Vector2, a: Vector2, b: Vector2) -> f64 {
    let ab = b - a;
    let denom = ab.norm_sq();
    if denom == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(ab) / denom).clamp(0.0, 1.0);
    (p - (a + ab.scale(t))).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cones::{family_grids, verify_unstable_cones};
    use crate::maps::{build_expanding, EndoMap, ExpandingConfig};
    use crate::torus::IntMatrix2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn linear32() -> EndoMap {
        EndoMap::linear(IntMatrix2::diag(3, 2), Torus::unit())
    }

    #[test]
    fn tangent_cone_chord_checks() {
        let torus = Torus::unit();
        let cone = ConeSpec::horizontal_unstable(0.25);
        let flat = TorusPolyline::segment(torus, (0.0, 0.0), (0.2, 0.0)).unwrap();
        let (ok, worst) = verify_tangent_cone(&flat, &cone).unwrap();
        assert!(ok && worst == 0.0);

        let mild = TorusPolyline::segment(torus, (0.0, 0.0), (0.2, 0.2 * 0.125)).unwrap();
        let (ok, worst) = verify_tangent_cone(&mild, &cone).unwrap();
        assert!(ok);
        assert!((worst - 0.125).abs() < 1e-12);

        let steep = TorusPolyline::segment(torus, (0.0, 0.0), (0.2, 0.2 * 0.5)).unwrap();
        let (ok, worst) = verify_tangent_cone(&steep, &cone).unwrap();
        assert!(!ok);
        assert!((worst - 0.5).abs() < 1e-12);

        let degenerate =
            TorusPolyline::from_points(torus, &[(0.1, 0.1), (0.1, 0.1), (0.2, 0.1)]).unwrap();
        assert!(matches!(
            verify_tangent_cone(&degenerate, &cone),
            Err(EndoError::DegenerateSegment)
        ));
    }

    #[test]
    fn diameter_examples() {
        let torus = Torus::unit();
        let seg = TorusPolyline::segment(torus, (0.0, 0.0), (0.2, 0.0)).unwrap();
        let d = diameter(&seg);
        assert!((d.value - 0.2).abs() < 1e-12);
        assert!(!d.saturated);

        // single segments at side/4 are lift-ambiguous and rejected
        assert!(TorusPolyline::segment(torus, (0.0, 0.0), (0.3, 0.0)).is_err());

        let long = TorusPolyline::from_points(torus, &[(0.0, 0.0), (0.15, 0.0), (0.3, 0.0)]).unwrap();
        assert!((diameter(&long).value - 0.3).abs() < 1e-12);

        let point = TorusPolyline::from_points(torus, &[(0.4, 0.4), (0.4, 0.4)]).unwrap();
        assert_eq!(diameter(&point).value, 0.0);

        // cone-violating L-shape still gets a lifted diameter
        let ell = TorusPolyline::from_points(torus, &[(0.0, 0.0), (0.1, 0.0), (0.1, 0.1)]).unwrap();
        let d = diameter(&ell);
        assert!((d.value - 0.02f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn refinement_counts_segments() {
        let torus = Torus::unit();
        // side/4-safe pieces: three chained segments of length ~0.16
        let pts: Vec<(f64, f64)> =
            (0..=3).map(|k| (0.1 + 0.16 * k as f64, 0.2)).collect();
        let curve = TorusPolyline::from_points(torus, &pts).unwrap();
        let refined = curve.refine(0.01, None, 1_000_000).unwrap();
        assert!(refined.len() >= 49, "{} vertices", refined.len());
        for s in refined.segments() {
            assert!(s.norm() <= 0.01 + 1e-12);
        }
        // refinement preserves the endpoints and the params range
        assert_eq!(refined.params()[0], 0.0);
        assert_eq!(*refined.params().last().unwrap(), 1.0);
    }

    #[test]
    fn map_curve_scales_horizontal_segments_by_lambda() {
        let map = linear32();
        let torus = map.torus().unwrap();
        let policy = RefinementPolicy::for_map(&map);
        let seg = TorusPolyline::segment(torus, (0.0, 0.3), (0.05, 0.3)).unwrap();
        let img = map_curve(&map, &seg, &policy).unwrap();
        assert!((diameter(&img).value - 0.15).abs() < 1e-12);
    }

    #[test]
    fn growth_factors_of_the_linear_map_are_exactly_lambda() {
        let map = linear32();
        let torus = map.torus().unwrap();
        let policy = RefinementPolicy::for_map(&map);
        let cone = ConeSpec::horizontal_unstable(0.25);
        let seg = TorusPolyline::segment(torus, (0.0, 0.3), (0.002, 0.3)).unwrap();
        let cert = growth_certify(&map, &seg, &cone, std::f64::consts::SQRT_2, 12, &policy).unwrap();
        assert!(cert.pass);
        assert!(cert.saturated_at.is_some());
        for (k, f) in cert.factors.iter().enumerate() {
            if Some(k + 1) != cert.saturated_at {
                assert!((f - 3.0).abs() < 1e-9, "factor {f}");
            }
        }

        let fail = growth_certify(&map, &seg, &cone, 3.5, 3, &policy).unwrap();
        assert!(!fail.pass);
    }

    #[test]
    fn growth_to_ten_r_within_ten_steps() {
        let built = build_expanding(&ExpandingConfig::canonical()).unwrap();
        let map = &built.map;
        let e = map.as_expanding().unwrap();
        let torus = map.torus().unwrap();
        let policy = RefinementPolicy::for_map(map);
        let cone = ConeSpec::horizontal_unstable(built.cone.a0);
        let r = e.r;
        // A horizontal chord of the annulus U \ U′ with diameter exactly r.
        let seg =
            TorusPolyline::segment(torus, (-r / 2.0, 3.5 * r), (r / 2.0, 3.5 * r)).unwrap();
        let cert = growth_certify(map, &seg, &cone, built.cone.lambda_prime, 10, &policy).unwrap();
        assert!(cert.pass, "{:?}", cert.factors);
        let reached = cert
            .diameters
            .iter()
            .position(|&d| d >= 10.0 * r)
            .expect("diameter never reached 10r");
        assert!(reached <= 10, "took {reached} steps");
        for f in &cert.factors {
            assert!(*f >= std::f64::consts::SQRT_2 - 1e-9);
        }
    }

    #[test]
    fn cone_closure_of_curve_images() {
        let built = build_expanding(&ExpandingConfig::canonical()).unwrap();
        let map = &built.map;
        let torus = map.torus().unwrap();
        let policy = RefinementPolicy::for_map(map);
        let cone = ConeSpec::horizontal_unstable(built.cone.a0);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..100 {
            let x = rng.gen_range(0.0..1.0);
            let y = rng.gen_range(0.0..1.0);
            let slope = rng.gen_range(-built.cone.a0 * 0.9..built.cone.a0 * 0.9);
            let len = rng.gen_range(0.01..0.1);
            let seg = TorusPolyline::segment(torus, (x, y), (x + len, y + slope * len)).unwrap();
            let img = map_curve(map, &seg, &policy).unwrap();
            let (ok, worst) = verify_tangent_cone(&img, &cone).unwrap();
            assert!(ok, "image slope {worst} at seed ({x}, {y})");
        }
    }

    #[test]
    fn curve_through_the_bump_stays_in_the_cone() {
        let built = build_expanding(&ExpandingConfig::canonical()).unwrap();
        let map = &built.map;
        let e = map.as_expanding().unwrap();
        let torus = map.torus().unwrap();
        let policy = RefinementPolicy::for_map(map);
        let cone = ConeSpec::horizontal_unstable(built.cone.a0);
        // crosses the bump support horizontally at the fold height
        let seg = TorusPolyline::segment(
            torus,
            (-2.0 * e.theta, e.phi.delta * 0.45),
            (2.0 * e.theta, e.phi.delta * 0.45),
        )
        .unwrap();
        let img = map_curve(map, &seg, &policy).unwrap();
        let (ok, worst) = verify_tangent_cone(&img, &cone).unwrap();
        assert!(ok, "image slope {worst}");
    }

    #[test]
    fn refinement_invariance_of_the_image_diameter() {
        let built = build_expanding(&ExpandingConfig::canonical()).unwrap();
        let map = &built.map;
        let torus = map.torus().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..100 {
            let x = rng.gen_range(0.0..1.0);
            let y = rng.gen_range(0.0..1.0);
            let len = rng.gen_range(0.01..0.2);
            let seg = TorusPolyline::segment(torus, (x, y), (x + len, y)).unwrap();
            let coarse = RefinementPolicy { h_max: 1e-3, vertex_cap: 4_000_000, tol: 1e-9 };
            let fine = RefinementPolicy { h_max: 5e-4, vertex_cap: 4_000_000, tol: 1e-9 };
            let d1 = diameter(&map_curve(map, &seg, &coarse).unwrap()).value;
            let d2 = diameter(&map_curve(map, &seg, &fine).unwrap()).value;
            assert!((d1 - d2).abs() < 1e-6 * d1.max(1e-300), "{d1} vs {d2}");
        }
    }

    #[test]
    fn annulus_avoidance_with_linear_oracle() {
        let built = build_expanding(&ExpandingConfig::canonical()).unwrap();
        let e = built.map.as_expanding().unwrap();
        let r = e.r;
        let report = annulus_avoidance_check(&built.map, 9, 10_000, 99).unwrap();
        assert!(report.pass);
        // clearance at step i is at least (2^i − 1)·3r; the oracle records
        // the exact inner radius 3r·2^i.
        for (i, (clear, oracle)) in report
            .per_step_clearance
            .iter()
            .zip(&report.oracle_inner_radius)
            .enumerate()
        {
            let step = i + 1;
            assert!((oracle - 3.0 * r * 2f64.powi(step as i32)).abs() < 1e-18);
            assert!(*clear >= oracle - 3.0 * r - 1e-12, "step {step}: {clear}");
        }
        // one step only: clearance ≥ 6r − 3r = 3r
        let one = annulus_avoidance_check(&built.map, 1, 1000, 7).unwrap();
        assert!(one.min_clearance >= 3.0 * r - 1e-12);
    }

    #[test]
    fn escape_point_far_from_the_bump_is_immediate() {
        let built = build_expanding(&ExpandingConfig::canonical()).unwrap();
        let torus = built.map.torus().unwrap();
        let policy = RefinementPolicy::for_map(&built.map);
        let seed = TorusPolyline::segment(torus, (0.4, 0.7), (0.45, 0.7)).unwrap();
        let rep = escape_point(&built.map, &seed, 500, &policy).unwrap();
        assert_eq!(rep.n0, 0);
        assert_eq!(rep.validated_to, 500);
        assert!(!rep.unvalidated);
    }

    #[test]
    fn escape_point_from_a_tiny_annulus_seed() {
        let built = build_expanding(&ExpandingConfig::canonical()).unwrap();
        let e = built.map.as_expanding().unwrap();
        let torus = built.map.torus().unwrap();
        let policy = RefinementPolicy::for_map(&built.map);
        let r = e.r;
        let seed =
            TorusPolyline::segment(torus, (-r / 2.0, 3.5 * r), (r / 2.0, 3.5 * r)).unwrap();
        let rep = escape_point(&built.map, &seed, 1000, &policy).unwrap();
        assert!(rep.n0 <= 10, "n0 = {}", rep.n0);

        let unvalidated = escape_point(&built.map, &seed, 0, &policy).unwrap();
        assert!(unvalidated.unvalidated);
    }

    #[test]
    fn internal_radius_growth_oracle() {
        let map = linear32();
        let torus = map.torus().unwrap();
        let y = crate::torus::wrap((0.3, 0.7), torus).unwrap();
        let r = 5e-6;
        // exact axis-length oracle: the weaker eigenvalue 2 governs
        let rep = internal_radius_growth(&map, &y, 1e-7, r, 9).unwrap();
        assert_eq!(rep.n_nu, (r / 1e-7).log2().ceil() as usize);

        // V already contains the r-ball
        let rep = internal_radius_growth(&map, &y, 1e-3, r, 5).unwrap();
        assert_eq!(rep.n_nu, 0);
    }

    #[test]
    fn internal_radius_growth_detects_orbit_entering_the_ball() {
        let built = build_expanding(&ExpandingConfig::canonical()).unwrap();
        let torus = built.map.torus().unwrap();
        // a point that stays inside U′ (near the origin fixed point)
        let y = crate::torus::wrap((1e-7, 0.0), torus).unwrap();
        assert!(matches!(
            internal_radius_growth(&built.map, &y, 1e-8, 1e-6, 10),
            Err(EndoError::GeometryViolated(_))
        ));
    }

    #[test]
    fn growth_matches_cone_verification() {
        // Whenever the cones pass at (map, cone, λ′), certified growth
        // factors stay above λ′ − 1e-9.
        let built = build_expanding(&ExpandingConfig::canonical()).unwrap();
        let cone = ConeSpec::horizontal_unstable(built.cone.a0);
        let cones_pass = verify_unstable_cones(
            &built.map,
            &cone,
            built.cone.lambda_prime,
            &family_grids(&built.map, 512, 64),
        )
        .unwrap()
        .pass;
        assert!(cones_pass);
        let torus = built.map.torus().unwrap();
        let policy = RefinementPolicy::for_map(&built.map);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..20 {
            let x = rng.gen_range(0.0..1.0);
            let y = rng.gen_range(0.0..1.0);
            let seg = TorusPolyline::segment(torus, (x, y), (x + 0.01, y)).unwrap();
            let cert =
                growth_certify(&built.map, &seg, &cone, built.cone.lambda_prime, 6, &policy)
                    .unwrap();
            assert!(cert.pass, "factors {:?}", cert.factors);
        }
    }
}
