//! End-to-end transitivity experiments (escape → internal radius → covering
//! for the expanding route; curve intersection for the saddle route) and the
//! invariant-manifold density runs of the non-hyperbolic family.

use super::saddle::{intersection_constants, stable_segment_family, straight_segment};
use super::{density_report, DensityReport, PointCloud};
use crate::cones::ConeParams;
use crate::curves::{escape_point, internal_radius_growth, map_curve, RefinementPolicy, TorusPolyline};
use crate::error::{EndoError, Result};
use crate::maps::{fixed_points, preimages, EndoMap, MapKind, Matrix2};
use crate::torus::{
    shortest_displacement, torus_distance, wrap_unchecked, TorusPoint, Vector2,
};
use serde::Serialize;

/// Outcome of a transitivity experiment: a validated witness, or an honest
/// budget-bound failure to find one.
#[derive(Debug, Clone, Serialize)]
pub enum TransitivityOutcome {
    Found {
        n0: usize,
        witness: TorusPoint,
        route: String,
        /// torus distance of map^{n0}(witness) to the target center.
        hit_distance: f64,
    },
    Inconclusive {
        route: String,
        reason: String,
    },
}

impl TransitivityOutcome {
    pub fn is_found(&self) -> bool {
        matches!(self, TransitivityOutcome::Found { .. })
    }
}

/// Find n₀ and a witness w ∈ V₁ with map^{n₀}(w) ∈ V₂, by the route suited to
/// the family; the witness is always validated by exact forward iteration.
pub fn transitivity_experiment(
    map: &EndoMap,
    cone: &ConeParams,
    v1: (TorusPoint, f64),
    v2: (TorusPoint, f64),
    budget: usize,
    seed: u64,
) -> Result<TransitivityOutcome> {
    match &map.kind {
        MapKind::Expanding(_) => expanding_route(map, v1, v2),
        MapKind::Linear(m) => {
            let (e1, e2, _) = Matrix2::from_int(m).eigen_moduli();
            if e1.abs() > 1.0 && e2.abs() > 1.0 {
                linear_route(map, v1, v2)
            } else {
                forward_search_route(map, v1, v2, budget)
            }
        }
        MapKind::Saddle(_) => saddle_route(map, cone, v1, v2, seed),
        _ => forward_search_route(map, v1, v2, budget),
    }
}

/// Expanding family: escape point, internal-radius growth, then the covering
/// exponent of the base matrix pulls the target back into the grown ball.
fn expanding_route(
    map: &EndoMap,
    v1: (TorusPoint, f64),
    v2: (TorusPoint, f64),
) -> Result<TransitivityOutcome> {
    let e = map.as_expanding().unwrap();
    let torus = map.torus().unwrap();
    let policy = RefinementPolicy::for_map(map);

    // Cone-tangent seed curve in V₁.
    let seed_pts: Vec<(f64, f64)> = (0..=32)
        .map(|k| {
            let t = (k as f64 / 32.0 - 0.5) * v1.1 * 0.9;
            (v1.0.x + t, v1.0.y)
        })
        .collect();
    let seed = TorusPolyline::from_points(torus, &seed_pts)?;
    let escape = escape_point(map, &seed, 400, &policy)?;
    let y = escape.point;

    let d_to_center = torus_distance(&y, &v1.0)?;
    let rho_v = (v1.1 - d_to_center) * 0.9;
    if rho_v <= 0.0 {
        return Ok(TransitivityOutcome::Inconclusive {
            route: "expanding".into(),
            reason: "escape point left the source ball".into(),
        });
    }
    let irg = internal_radius_growth(map, &y, rho_v, e.r, 60)?;
    let n2 = escape.n0.max(irg.n_nu);
    witness_via_covering(map, &y, n2, e.r, v1, v2, "expanding")
}

/// Purely linear expanding matrix: the ball grows immediately; only the
/// covering step is needed.
fn linear_route(
    map: &EndoMap,
    v1: (TorusPoint, f64),
    v2: (TorusPoint, f64),
) -> Result<TransitivityOutcome> {
    let m = map.base_matrix().unwrap();
    let (_, mu_min, _) = Matrix2::from_int(&m).eigen_moduli();
    let r_target = v1.1.min(0.01);
    // internal radius: B(y, v1.1) already contains an r_target-ball.
    let n2 = 0usize;
    let _ = mu_min;
    witness_via_covering(map, &v1.0, n2, r_target, v1, v2, "linear")
}

fn witness_via_covering(
    map: &EndoMap,
    y: &TorusPoint,
    n2: usize,
    r: f64,
    v1: (TorusPoint, f64),
    v2: (TorusPoint, f64),
    route: &str,
) -> Result<TransitivityOutcome> {
    let torus = map.torus().unwrap();
    let side = torus.side();
    let m_int = map.base_matrix().unwrap();
    let am = Matrix2::from_int(&m_int);
    let (_, mu_min, _) = am.eigen_moduli();
    let rho = r / 32.0;
    let m = ((side / (2.0 * rho)).ln() / mu_min.abs().ln()).ceil().max(1.0) as usize;

    // Forward orbit of y up to n₂.
    let mut orbit = Vec::with_capacity(n2 + 1);
    orbit.push(*y);
    for _ in 0..n2 {
        orbit.push(map.eval(orbit.last().unwrap()));
    }
    let z = orbit[n2];

    // Virtual disk B(z, ρ) ⊆ B(z, r) ⊆ f^{n₂}(V₁): its m-th linear image
    // covers the torus, so the target has an A^m-preimage within ρ of z.
    let mut apow = Matrix2::identity();
    for _ in 0..m {
        apow = Matrix2::new(
            apow.a * am.a + apow.b * am.c,
            apow.a * am.b + apow.b * am.d,
            apow.c * am.a + apow.d * am.c,
            apow.c * am.b + apow.d * am.d,
        );
    }
    let apow_inv = apow.inverse().unwrap();
    let t = v2.0;
    let imz = apow.apply(z.as_vector());
    let k1 = ((imz.x - t.x) / side).round();
    let k2 = ((imz.y - t.y) / side).round();
    let wm_raw = apow_inv.apply(Vector2::new(t.x + side * k1, t.y + side * k2));
    let wm = wrap_unchecked(wm_raw.x, wm_raw.y, torus);
    if torus_distance(&wm, &z)? > r {
        return Ok(TransitivityOutcome::Inconclusive {
            route: route.into(),
            reason: "covering preimage missed the grown ball".into(),
        });
    }
    // Shoot so the finite-precision forward chain truly lands on the target.
    let wm = newton_shoot(map, wm, m, &t).unwrap_or(wm);

    // Pull wm back n₂ steps along the branch shadowing the orbit of y.
    let mut w = wm;
    for j in (0..n2).rev() {
        let pres = preimages(map, &w)?;
        let pick = pres
            .iter()
            .min_by(|a, b| {
                let da = torus_distance(a, &orbit[j]).unwrap();
                let db = torus_distance(b, &orbit[j]).unwrap();
                da.partial_cmp(&db).unwrap()
            })
            .copied();
        w = match pick {
            Some(p) => p,
            None => {
                return Ok(TransitivityOutcome::Inconclusive {
                    route: route.into(),
                    reason: format!("no preimage while pulling back at step {j}"),
                })
            }
        };
    }

    let n0 = n2 + m;
    let w = newton_shoot(map, w, n0, &t).unwrap_or(w);
    if torus_distance(&w, &v1.0)? > v1.1 {
        return Ok(TransitivityOutcome::Inconclusive {
            route: route.into(),
            reason: "witness drifted out of the source ball".into(),
        });
    }
    let mut p = w;
    for _ in 0..n0 {
        p = map.eval(&p);
    }
    let hit = torus_distance(&p, &v2.0)?;
    if hit < v2.1 {
        Ok(TransitivityOutcome::Found { n0, witness: w, route: route.into(), hit_distance: hit })
    } else {
        Ok(TransitivityOutcome::Inconclusive {
            route: route.into(),
            reason: format!("forward validation missed the target by {hit}"),
        })
    }
}

/// Newton shooting: adjust w so that map^n(w) equals the target, using the
/// chain-rule Jacobian along the orbit.
fn newton_shoot(map: &EndoMap, start: TorusPoint, n: usize, target: &TorusPoint) -> Option<TorusPoint> {
    let mut w = start;
    for _ in 0..40 {
        let mut p = w;
        let mut jac = Matrix2::identity();
        for _ in 0..n {
            let j = map.jacobian_at(p.x, p.y);
            jac = Matrix2::new(
                j.a * jac.a + j.b * jac.c,
                j.a * jac.b + j.b * jac.d,
                j.c * jac.a + j.d * jac.c,
                j.c * jac.b + j.d * jac.d,
            );
            p = map.eval(&p);
        }
        let err = shortest_displacement(&p, target).ok()?.vector;
        if err.norm() < 1e-12 {
            return Some(w);
        }
        let step = jac.inverse()?.apply(err);
        if !step.x.is_finite() || !step.y.is_finite() {
            return None;
        }
        w = w.translate(step);
    }
    Some(w)
}

/// Saddle family: grow a u-curve from V₁ past the intersection length, pull a
/// stable curve family back from V₂, intersect, then shoot the witness.
fn saddle_route(
    map: &EndoMap,
    cone: &ConeParams,
    v1: (TorusPoint, f64),
    v2: (TorusPoint, f64),
    seed: u64,
) -> Result<TransitivityOutcome> {
    let s = map.as_saddle().unwrap();
    let torus = map.torus().unwrap();
    let policy = RefinementPolicy::for_map(map);
    let mu1 = cone.mu1.unwrap_or(0.7);

    let ic = intersection_constants(s.v_lambda, s.v_mu, s.r, 4.0 * cone.a0, torus, seed)?;

    // Unstable curve from V₁, grown past M.
    let pts = straight_segment(torus, (v1.0.x, v1.0.y), s.v_lambda, v1.1 * 0.9, 64)
        .iter()
        .map(|p| (p.x, p.y))
        .collect::<Vec<_>>();
    let mut gamma = TorusPolyline::from_points(torus, &pts)?;
    let mut n1 = 0usize;
    while gamma.total_length() <= ic.m_len {
        gamma = map_curve(map, &gamma, &policy)?.simplify(1e-12);
        n1 += 1;
        if n1 > 80 {
            return Err(EndoError::NoGrowth(format!(
                "u-curve did not reach length {} in 80 iterates",
                ic.m_len
            )));
        }
    }

    // Stable family from V₂.
    let sigma = Matrix2::from_int(&s.matrix).sigma_max();
    let ell0 = (v2.1 / sigma).min(0.2 * torus.side());
    let family = stable_segment_family(map, &v2.0, ell0, mu1, 60)?;

    // Segment-pair intersection on the torus.
    let hit = intersect_polylines(&gamma, &family.curve)?;
    let (tau, zeta) = match hit {
        Some(h) => h,
        None => {
            return Ok(TransitivityOutcome::Inconclusive {
                route: "saddle".into(),
                reason: "curves did not intersect at the certified lengths".into(),
            })
        }
    };

    let w0 = gamma_param_to_seed(&gamma, tau, torus, &pts)?;
    let w = newton_shoot(map, w0, n1, &zeta).unwrap_or(w0);
    let n0 = n1 + family.m + 1;
    let mut p = w;
    for _ in 0..n0 {
        p = map.eval(&p);
    }
    let hit_distance = torus_distance(&p, &v2.0)?;
    if torus_distance(&w, &v1.0)? <= v1.1 && hit_distance < v2.1 {
        Ok(TransitivityOutcome::Found { n0, witness: w, route: "saddle".into(), hit_distance })
    } else {
        Ok(TransitivityOutcome::Inconclusive {
            route: "saddle".into(),
            reason: format!("validation missed: witness distance {hit_distance}"),
        })
    }
}

/// Map an original-curve parameter back to a point of the seed segment.
fn gamma_param_to_seed(
    _gamma: &TorusPolyline,
    tau: f64,
    torus: crate::torus::Torus,
    seed_pts: &[(f64, f64)],
) -> Result<TorusPoint> {
    let seed = TorusPolyline::from_points(torus, seed_pts)?;
    Ok(seed.point_at_param(tau))
}

/// First crossing between a long polyline (with params) and a short vertex
/// chain; returns the long curve's interpolated parameter and the crossing
/// point.
fn intersect_polylines(
    gamma: &TorusPolyline,
    beta: &[TorusPoint],
) -> Result<Option<(f64, TorusPoint)>> {
    let gv = gamma.vertices();
    let gs = gamma.segments();
    let gp = gamma.params();
    for i in 0..gs.len() {
        let p = gv[i];
        let d1 = gs[i];
        for w in beta.windows(2) {
            let q = w[0];
            let d2 = shortest_displacement(&w[0], &w[1])?.vector;
            let rel = shortest_displacement(&p, &q)?.vector;
            let den = d1.x * d2.y - d1.y * d2.x;
            if den.abs() < 1e-300 {
                continue;
            }
            let t = (rel.x * d2.y - rel.y * d2.x) / den;
            let u = (rel.x * d1.y - rel.y * d1.x) / den;
            if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
                let tau = gp[i] + (gp[i + 1] - gp[i]) * t;
                let zeta = p.translate(d1.scale(t));
                return Ok(Some((tau, zeta)));
            }
        }
    }
    Ok(None)
}

/// Budget-bounded forward search: iterate a fine sample of V₁ and report the
/// first sample landing in V₂.
fn forward_search_route(
    map: &EndoMap,
    v1: (TorusPoint, f64),
    v2: (TorusPoint, f64),
    budget: usize,
) -> Result<TransitivityOutcome> {
    let n = 40usize;
    let mut samples = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let dx = (i as f64 / (n - 1) as f64 - 0.5) * 2.0 * v1.1;
            let dy = (j as f64 / (n - 1) as f64 - 0.5) * 2.0 * v1.1;
            if dx.hypot(dy) <= v1.1 * 0.95 {
                samples.push(v1.0.translate(Vector2::new(dx, dy)));
            }
        }
    }
    let originals = samples.clone();
    for step in 1..=budget {
        for (idx, p) in samples.iter_mut().enumerate() {
            *p = map.eval(p);
            let d = torus_distance(p, &v2.0)?;
            if d < v2.1 {
                return Ok(TransitivityOutcome::Found {
                    n0: step,
                    witness: originals[idx],
                    route: "forward-search".into(),
                    hit_distance: d,
                });
            }
        }
    }
    Ok(TransitivityOutcome::Inconclusive {
        route: "forward-search".into(),
        reason: format!("no sample of V1 reached V2 within {budget} steps"),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ManifoldKind {
    Unstable,
    Stable,
}

/// ε-coverage of the accumulated unstable (forward) or stable (backward)
/// manifold of the saddle fixed point p₀ of the non-hyperbolic family.
///
/// The unstable manifold is tracked as a set of horizontal levels with
/// x-interval sets: the first coordinate multiplies intervals by λ, the strip
/// portions move the level through g or h, and the remainder keeps its level.
/// Collar and bump portions are dropped, which under-approximates the
/// manifold, so a full coverage report is sound evidence. The stable manifold
/// is the union of full vertical circles over the backward orbit of x = 0.
pub fn manifold_density(
    map: &EndoMap,
    kind: ManifoldKind,
    iterations: usize,
    eps: f64,
    grid_res: usize,
) -> Result<DensityReport> {
    let n = map.as_non_hyperbolic().ok_or_else(|| {
        EndoError::Unsupported("manifold density runs on the non-hyperbolic family".into())
    })?;
    let torus = map.torus().unwrap();

    // Locate p₀: the saddle fixed point on the strip-0 axis.
    let fps = fixed_points(map, 96)?;
    let p0 = fps
        .iter()
        .find(|f| {
            torus_distance(
                &f.torus_point(torus),
                &wrap_unchecked(n.strip0_center, n.g.attracting, torus),
            )
            .unwrap()
                < 1e-6
        })
        .ok_or_else(|| EndoError::GeometryViolated("saddle fixed point p0 not found".into()))?;
    let p0 = p0.torus_point(torus);

    match kind {
        ManifoldKind::Stable => stable_density(map, n, p0, iterations, eps, grid_res),
        ManifoldKind::Unstable => unstable_density(map, n, p0, iterations, eps, grid_res),
    }
}

fn stable_density(
    map: &EndoMap,
    n: &crate::maps::NonHyperbolicMap,
    p0: TorusPoint,
    iterations: usize,
    eps: f64,
    grid_res: usize,
) -> Result<DensityReport> {
    let torus = map.torus().unwrap();
    let side = torus.side();
    let lambda = n.matrix.a;
    let quantum = 1e-9;
    let mut xs: Vec<f64> = vec![p0.x];
    let mut iterations_used = 0usize;
    for _ in 0..iterations {
        iterations_used += 1;
        let mut next: Vec<f64> = Vec::with_capacity(xs.len() * lambda as usize);
        for &x in &xs {
            for k in 0..lambda {
                next.push(((x + side * k as f64) / lambda as f64).rem_euclid(side));
            }
        }
        next.extend_from_slice(&xs);
        next.sort_by(|a, b| a.partial_cmp(b).unwrap());
        next.dedup_by(|a, b| (*a - *b).abs() < quantum);
        xs = next;
        if xs.len() > 400_000 {
            break;
        }
        if x_cover_fraction(&xs, side, eps, grid_res) >= 1.0 {
            break;
        }
    }
    let _ = iterations_used;
    // Coverage: verticals are full circles, so the 2-D distance to the set
    // is the wrapped x-distance.
    let mut hit = 0usize;
    let mut max_empty: f64 = 0.0;
    for i in 0..grid_res {
        let cx = side * (i as f64 + 0.5) / grid_res as f64;
        let d = min_wrap_distance(&xs, cx, side);
        if d <= eps {
            hit += grid_res;
        }
        max_empty = max_empty.max(d);
    }
    Ok(DensityReport {
        eps,
        grid_res,
        fraction: hit as f64 / (grid_res * grid_res) as f64,
        max_empty_cell_distance: max_empty,
        samples: xs.len(),
        inconclusive: hit < grid_res * grid_res,
    })
}

fn x_cover_fraction(xs: &[f64], side: f64, eps: f64, grid_res: usize) -> f64 {
    let mut hit = 0usize;
    for i in 0..grid_res {
        let cx = side * (i as f64 + 0.5) / grid_res as f64;
        if min_wrap_distance(xs, cx, side) <= eps {
            hit += 1;
        }
    }
    hit as f64 / grid_res as f64
}

fn min_wrap_distance(sorted_xs: &[f64], x: f64, side: f64) -> f64 {
    // binary search over the sorted list, with wraparound.
    match sorted_xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
        Ok(_) => 0.0,
        Err(pos) => {
            let mut best = f64::INFINITY;
            for idx in [
                pos.wrapping_sub(1).min(sorted_xs.len() - 1),
                pos % sorted_xs.len(),
            ] {
                let d = (sorted_xs[idx] - x).abs();
                best = best.min(d.min(side - d));
            }
            // also check the global ends for wrap
            let d0 = (sorted_xs[0] - x).abs();
            let d1 = (sorted_xs[sorted_xs.len() - 1] - x).abs();
            best.min(d0.min(side - d0)).min(d1.min(side - d1))
        }
    }
}

/// Circular interval set: disjoint sorted (start, len) pieces mod side.
#[derive(Debug, Clone, Default)]
struct IntervalSet {
    pieces: Vec<(f64, f64)>,
}

impl IntervalSet {
    fn from_band(center: f64, halfwidth: f64, side: f64) -> Self {
        let mut s = IntervalSet::default();
        s.insert((center - halfwidth).rem_euclid(side), 2.0 * halfwidth, side);
        s
    }

    fn insert(&mut self, start: f64, len: f64, side: f64) {
        if len >= side {
            self.pieces = vec![(0.0, side)];
            return;
        }
        if len <= 0.0 {
            return;
        }
        let start = start.rem_euclid(side);
        if start + len > side {
            self.insert_flat(start, side - start);
            self.insert_flat(0.0, start + len - side);
        } else {
            self.insert_flat(start, len);
        }
    }

    fn insert_flat(&mut self, start: f64, len: f64) {
        let mut merged = Vec::with_capacity(self.pieces.len() + 1);
        let (mut s, mut e) = (start, start + len);
        for &(ps, pl) in &self.pieces {
            let pe = ps + pl;
            if pe < s - 1e-12 || ps > e + 1e-12 {
                merged.push((ps, pl));
            } else {
                s = s.min(ps);
                e = e.max(pe);
            }
        }
        merged.push((s, e - s));
        merged.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        self.pieces = merged;
    }

    fn union(&mut self, other: &IntervalSet, side: f64) -> bool {
        let before = self.total_len();
        for &(s, l) in &other.pieces {
            self.insert(s, l, side);
        }
        self.total_len() > before + 1e-12
    }

    fn total_len(&self) -> f64 {
        self.pieces.iter().map(|p| p.1).sum()
    }

    fn intersect_band(&self, center: f64, halfwidth: f64, side: f64) -> IntervalSet {
        let mut out = IntervalSet::default();
        let bands = [(center - halfwidth).rem_euclid(side)];
        for &bs in &bands {
            let blen = 2.0 * halfwidth;
            // split band at wrap and intersect both flat parts
            let parts: Vec<(f64, f64)> = if bs + blen > side {
                vec![(bs, side - bs), (0.0, bs + blen - side)]
            } else {
                vec![(bs, blen)]
            };
            for (qs, ql) in parts {
                for &(ps, pl) in &self.pieces {
                    let s = ps.max(qs);
                    let e = (ps + pl).min(qs + ql);
                    if e > s {
                        out.insert(s, e - s, side);
                    }
                }
            }
        }
        out
    }

    fn subtract_band(&self, center: f64, halfwidth: f64, side: f64) -> IntervalSet {
        let mut out = IntervalSet::default();
        let bs = (center - halfwidth).rem_euclid(side);
        let blen = 2.0 * halfwidth;
        let parts: Vec<(f64, f64)> = if bs + blen > side {
            vec![(bs, side - bs), (0.0, bs + blen - side)]
        } else {
            vec![(bs, blen)]
        };
        for &(ps, pl) in &self.pieces {
            let mut segs = vec![(ps, ps + pl)];
            for &(qs, ql) in &parts {
                let qe = qs + ql;
                let mut next = Vec::new();
                for (s, e) in segs {
                    if qe <= s || qs >= e {
                        next.push((s, e));
                    } else {
                        if qs > s {
                            next.push((s, qs));
                        }
                        if qe < e {
                            next.push((qe, e));
                        }
                    }
                }
                segs = next;
            }
            for (s, e) in segs {
                out.insert(s, e - s, side);
            }
        }
        out
    }

    fn scale(&self, lambda: f64, side: f64) -> IntervalSet {
        let mut out = IntervalSet::default();
        for &(s, l) in &self.pieces {
            out.insert((lambda * s).rem_euclid(side), lambda * l, side);
        }
        out
    }

    fn distance_to(&self, x: f64, side: f64) -> f64 {
        let mut best = f64::INFINITY;
        for &(s, l) in &self.pieces {
            let rel = (x - s).rem_euclid(side);
            if rel <= l {
                return 0.0;
            }
            let d = (rel - l).min(side - rel);
            best = best.min(d);
        }
        best
    }
}

fn unstable_density(
    map: &EndoMap,
    n: &crate::maps::NonHyperbolicMap,
    p0: TorusPoint,
    iterations: usize,
    eps: f64,
    grid_res: usize,
) -> Result<DensityReport> {
    let torus = map.torus().unwrap();
    let side = torus.side();
    let lambda = n.lambda;
    let quantum = 1e-5 * side;
    let key_of = |y: f64| -> i64 { (y.rem_euclid(side) / quantum).round() as i64 };

    let band = n.strip_halfwidth + n.collar_width;
    let bump_y: Option<(f64, f64)> = n
        .bump
        .as_ref()
        .map(|b| (b.center.1, b.phi.delta));

    use std::collections::BTreeMap;
    let mut levels: BTreeMap<i64, (f64, IntervalSet)> = BTreeMap::new();
    levels.insert(
        key_of(p0.y),
        (
            p0.y,
            IntervalSet::from_band(n.strip0_center, n.strip_halfwidth, side),
        ),
    );

    let coverage = |levels: &BTreeMap<i64, (f64, IntervalSet)>| -> (f64, f64, usize) {
        let mut hit = 0usize;
        let mut max_empty: f64 = 0.0;
        for j in 0..grid_res {
            let cy = side * (j as f64 + 0.5) / grid_res as f64;
            for i in 0..grid_res {
                let cx = side * (i as f64 + 0.5) / grid_res as f64;
                let mut best = f64::INFINITY;
                for (_, (y, set)) in levels.iter() {
                    let dy = {
                        let d = (y - cy).abs().rem_euclid(side);
                        d.min(side - d)
                    };
                    if dy > best.min(eps * 4.0) {
                        continue;
                    }
                    let dx = set.distance_to(cx, side);
                    best = best.min(dy.hypot(dx));
                    if best == 0.0 {
                        break;
                    }
                }
                if best <= eps {
                    hit += 1;
                }
                max_empty = max_empty.max(best);
            }
        }
        let frac = hit as f64 / (grid_res * grid_res) as f64;
        (frac, max_empty, hit)
    };

    let mut iter_done = 0usize;
    for it in 0..iterations {
        iter_done = it + 1;
        let snapshot: Vec<(f64, IntervalSet)> =
            levels.values().map(|(y, s)| (*y, s.clone())).collect();
        let mut changed = false;
        for (y, set) in snapshot {
            if set.total_len() == 0.0 {
                continue;
            }
            // strip 0 → level g(y)
            let part0 = set.intersect_band(n.strip0_center, n.strip_halfwidth, side);
            if part0.total_len() > 0.0 {
                let ny = n.g.eval(y).rem_euclid(side);
                changed |= merge_level(&mut levels, key_of(ny), ny, part0.scale(lambda, side), side);
            }
            // strip 1 → level h(y)
            let part1 = set.intersect_band(n.strip1_center, n.strip_halfwidth, side);
            if part1.total_len() > 0.0 {
                let ny = n.h.eval(y).rem_euclid(side);
                changed |= merge_level(&mut levels, key_of(ny), ny, part1.scale(lambda, side), side);
            }
            // identity part: outside both bands (and outside the bump ball
            // when the level crosses the bump's y-support)
            let mut rest = set
                .subtract_band(n.strip0_center, band, side)
                .subtract_band(n.strip1_center, band, side);
            if let (Some((by, bd)), Some(b)) = (bump_y, n.bump.as_ref()) {
                let dy = (y - by).rem_euclid(side);
                if dy <= bd || dy >= side - 1e-12 {
                    rest = rest.subtract_band(b.center.0, b.r, side);
                }
            }
            if rest.total_len() > 0.0 {
                changed |= merge_level(&mut levels, key_of(y), y, rest.scale(lambda, side), side);
            }
        }
        if levels.len() > 300_000 {
            break;
        }
        if it % 16 == 15 || !changed {
            let (frac, _, _) = coverage(&levels);
            if frac >= 1.0 {
                break;
            }
            if !changed {
                break;
            }
        }
    }
    let _ = iter_done;

    let (fraction, max_empty, _) = coverage(&levels);
    Ok(DensityReport {
        eps,
        grid_res,
        fraction,
        max_empty_cell_distance: max_empty,
        samples: levels.len(),
        inconclusive: fraction < 1.0,
    })
}

fn merge_level(
    levels: &mut std::collections::BTreeMap<i64, (f64, IntervalSet)>,
    key: i64,
    y: f64,
    set: IntervalSet,
    side: f64,
) -> bool {
    match levels.get_mut(&key) {
        Some((_, existing)) => existing.union(&set, side),
        None => {
            levels.insert(key, (y, set));
            true
        }
    }
}

/// Accumulated forward-orbit cloud of a sample of points, for experiments
/// that need plain point coverage.
pub fn orbit_cloud(map: &EndoMap, starts: &[TorusPoint], steps: usize, eps: f64) -> Result<PointCloud> {
    let torus = map.torus().ok_or_else(|| {
        EndoError::Unsupported("orbit clouds require a torus map".into())
    })?;
    let mut cloud = PointCloud::new(torus, eps);
    for s in starts {
        let mut p = *s;
        cloud.insert(&p);
        for _ in 0..steps {
            p = map.eval(&p);
            cloud.insert(&p);
        }
    }
    Ok(cloud)
}

/// Convenience: density of a plain forward orbit cloud.
pub fn cloud_density(cloud: &PointCloud, eps: f64, grid_res: usize) -> DensityReport {
    density_report(cloud, eps, grid_res)
}
