//! Saddle-case machinery: intersection constants for long unstable curves
//! against short stable curves, inverse branches avoiding the bump ball, and
//! the pulled-back stable segment family.

use crate::error::{EndoError, Result};
use crate::maps::{preimages, EndoMap, Matrix2};
use crate::torus::{torus_distance, wrap_unchecked, Torus, TorusPoint, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Constants of the curve-intersection property: straight curves of length M
/// in the a₁-cone around the irrational direction w cross every curve of
/// length ε in the a₁-cone around w₁.
#[derive(Debug, Clone, Serialize)]
pub struct IntersectionConstants {
    pub a1: f64,
    pub m_len: f64,
    pub eps: f64,
    pub w: (f64, f64),
    pub w1: (f64, f64),
    pub pairs_per_level: usize,
}

/// Reject directions whose line meets a nonzero lattice point: the continued
/// fraction of the slope terminates.
pub fn is_irrational_direction(w: Vector2, depth: usize) -> bool {
    if w.norm() < 1e-14 {
        return false;
    }
    let slope = if w.x.abs() >= w.y.abs() { w.y / w.x } else { w.x / w.y };
    let mut t = slope.abs();
    for _ in 0..depth {
        let frac = t - t.floor();
        if frac < 1e-12 {
            return false;
        }
        t = 1.0 / frac;
    }
    true
}

/// Choose a₁ from the angular gap between w and w₁ and find the minimal
/// validated curve length M by doubling search: at each level, 10³ random
/// straight segment pairs (u-segment of length L, s-segment of length ε, each
/// tilted randomly within its cone) must all intersect on the torus with a
/// transversality margin.
pub fn intersection_constants(
    w: Vector2,
    w1: Vector2,
    eps: f64,
    a0: f64,
    torus: Torus,
    seed: u64,
) -> Result<IntersectionConstants> {
    if !is_irrational_direction(w, 20) {
        return Err(EndoError::InvalidArgument(format!(
            "direction ({}, {}) is rational",
            w.x, w.y
        )));
    }
    let cross = (w.x * w1.y - w.y * w1.x).abs();
    if cross < 1e-12 {
        return Err(EndoError::InvalidArgument("directions are not independent".into()));
    }
    let w = w.normalized();
    let w1 = w1.normalized();
    let gap = cross.asin().min(std::f64::consts::FRAC_PI_2);
    let a1 = ((gap / 2.0).tan() / 2.0).min(a0 / 2.0);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut level = torus.side();
    let max_len = 1e6 * torus.side();
    while level <= max_len {
        if validate_level(w, w1, a1, eps, level, torus, 1000, &mut rng, true) == 0 {
            return Ok(IntersectionConstants {
                a1,
                m_len: level,
                eps,
                w: (w.x, w.y),
                w1: (w1.x, w1.y),
                pairs_per_level: 1000,
            });
        }
        level *= 2.0;
    }
    Err(EndoError::InfeasibleParameters(format!(
        "intersection length did not stabilize below {max_len}"
    )))
}

/// Re-run the randomized validation on a fresh sample; returns the failure
/// count (zero for a sound constant).
pub fn revalidate_intersection_constants(
    c: &IntersectionConstants,
    torus: Torus,
    pairs: usize,
    seed: u64,
) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    validate_level(
        Vector2::new(c.w.0, c.w.1),
        Vector2::new(c.w1.0, c.w1.1),
        c.a1,
        c.eps,
        c.m_len,
        torus,
        pairs,
        &mut rng,
        false,
    )
}

#[allow(clippy::too_many_arguments)]
fn validate_level(
    w: Vector2,
    w1: Vector2,
    a1: f64,
    eps: f64,
    len: f64,
    torus: Torus,
    pairs: usize,
    rng: &mut ChaCha8Rng,
    with_margin: bool,
) -> usize {
    let side = torus.side();
    let tilt = a1.atan();
    let mut failures = 0usize;
    for _ in 0..pairs {
        let anchor_u = Vector2::new(rng.gen_range(0.0..side), rng.gen_range(0.0..side));
        let anchor_s = Vector2::new(rng.gen_range(0.0..side), rng.gen_range(0.0..side));
        let du = rotate(w, rng.gen_range(-tilt..tilt));
        let ds = rotate(w1, rng.gen_range(-tilt..tilt));
        let hit = segments_intersect_torus(
            anchor_u,
            du.scale(len),
            anchor_s - ds.scale(eps / 2.0),
            ds.scale(eps),
            side,
            if with_margin { 0.05 } else { 0.0 },
        );
        if !hit {
            failures += 1;
        }
    }
    failures
}

fn rotate(v: Vector2, ang: f64) -> Vector2 {
    let (s, c) = ang.sin_cos();
    Vector2::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

/// Does the segment A + t·D (t ∈ [0,1]) meet B + s·E + k·side for some
/// lattice k? The candidate offsets are generated by marching along the long
/// segment. With `margin` > 0 the crossing parameter s must stay away from
/// the ends of the short segment.
pub fn segments_intersect_torus(
    a: Vector2,
    d: Vector2,
    b: Vector2,
    e: Vector2,
    side: f64,
    margin: f64,
) -> bool {
    let len = d.norm();
    let steps = ((len / (0.45 * side)).ceil() as usize).max(1);
    let mut seen: Vec<(i64, i64)> = Vec::new();
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let p = a + d.scale(t);
        let base_k1 = ((p.x - b.x) / side).round() as i64;
        let base_k2 = ((p.y - b.y) / side).round() as i64;
        for dk1 in -1i64..=1 {
            for dk2 in -1i64..=1 {
                let k = (base_k1 + dk1, base_k2 + dk2);
                if seen.contains(&k) {
                    continue;
                }
                seen.push(k);
                let b_shift = Vector2::new(b.x + k.0 as f64 * side, b.y + k.1 as f64 * side);
                if let Some((t, s)) = segment_pair_params(a, d, b_shift, e) {
                    if (0.0..=1.0).contains(&t) && s >= margin && s <= 1.0 - margin {
                        return true;
                    }
                }
            }
        }
    }
    false
}

/// Intersection parameters of A + tD and B + sE.
fn segment_pair_params(a: Vector2, d: Vector2, b: Vector2, e: Vector2) -> Option<(f64, f64)> {
    let den = d.x * e.y - d.y * e.x;
    if den.abs() < 1e-300 {
        return None;
    }
    let rx = b.x - a.x;
    let ry = b.y - a.y;
    let t = (rx * e.y - ry * e.x) / den;
    let s = (rx * d.y - ry * d.x) / -den;
    Some((t, s))
}

/// An inverse branch p₀ = p, p₋₁, …, p₋depth with every backward point
/// outside B(c, 3r). At each step any preimage outside the ball is accepted,
/// smallest coordinates first.
pub fn inverse_branch_avoiding(
    map: &EndoMap,
    p: &TorusPoint,
    depth: usize,
) -> Result<Vec<TorusPoint>> {
    let s = map
        .as_saddle()
        .ok_or_else(|| EndoError::Unsupported("avoiding branches use the saddle family".into()))?;
    let mut branch = vec![*p];
    let mut current = *p;
    for step in 0..depth {
        let pres = preimages(map, &current)?;
        let pick = pres.iter().find(|q| {
            torus_distance(q, &s.center).unwrap() > 3.0 * s.r
        });
        match pick {
            Some(q) => {
                branch.push(*q);
                current = *q;
            }
            None => {
                return Err(EndoError::GeometryViolated(format!(
                    "no preimage outside B(c, 3r) at backward step {step}"
                )))
            }
        }
    }
    Ok(branch)
}

/// The pulled-back stable curve family: β₀ at q, β_{i+1} the longest curve at
/// q₋(i+1) with f(β_{i+1}) ⊆ β_i, stopping at length > r.
#[derive(Debug, Clone, Serialize)]
pub struct StableSegmentFamily {
    pub m: usize,
    pub lengths: Vec<f64>,
    /// Vertices of β_m.
    pub curve: Vec<TorusPoint>,
    pub base_point: TorusPoint,
    pub met_ball: bool,
}

/// Build the family for a target neighbourhood: q is a preimage of the
/// target center outside B(c, 3r); β₀ is a stable-direction segment at q of
/// length ℓ₀; each pullback grows by at least μ₁⁻¹ while disjoint from
/// B(c, r), or already exceeds r when it meets the ball.
pub fn stable_segment_family(
    map: &EndoMap,
    target_center: &TorusPoint,
    ell0: f64,
    mu1: f64,
    depth_budget: usize,
) -> Result<StableSegmentFamily> {
    let s = map
        .as_saddle()
        .ok_or_else(|| EndoError::Unsupported("stable segments use the saddle family".into()))?;
    let branch = inverse_branch_avoiding(map, target_center, depth_budget + 1)?;
    let q = branch[1];

    // β₀: stable-direction segment centered at q.
    let n0 = 64usize;
    let mut beta: Vec<TorusPoint> = (0..=n0)
        .map(|k| {
            let t = (k as f64 / n0 as f64 - 0.5) * ell0;
            q.translate(s.v_mu.scale(t))
        })
        .collect();
    let mut lengths = vec![polyline_length(&beta)];
    let mut met_ball = false;

    for i in 0..depth_budget {
        let anchor = branch[i + 2];
        let prev_len = *lengths.last().unwrap();
        let (next, hit_ball) = pull_back_curve(map, &beta, &anchor, s)?;
        let len = polyline_length(&next);
        if hit_ball {
            met_ball = true;
            if len <= s.r {
                return Err(EndoError::GeometryViolated(format!(
                    "pullback met the ball with length {len} <= r = {}",
                    s.r
                )));
            }
        } else if len < prev_len / mu1 * (1.0 - 1e-6) && len <= s.r {
            return Err(EndoError::GeometryViolated(format!(
                "pullback truncated below the mu1 growth: {len} < {}",
                prev_len / mu1
            )));
        }
        beta = next;
        lengths.push(len);
        if len > s.r {
            return Ok(StableSegmentFamily {
                m: i + 1,
                lengths,
                curve: beta,
                base_point: q,
                met_ball,
            });
        }
    }
    Err(EndoError::NoGrowth(format!(
        "stable family did not reach length r within {depth_budget} pullbacks"
    )))
}

/// Pull a polyline back through the branch at `anchor`: per vertex, take the
/// preimage continuing continuously from the anchor; stop extending at a
/// discontinuity or once the curve leaves the r-ball clearance. Also reports
/// whether the pullback met B(c, r).
fn pull_back_curve(
    map: &EndoMap,
    beta: &[TorusPoint],
    anchor: &TorusPoint,
    s: &crate::maps::SaddleMap,
) -> Result<(Vec<TorusPoint>, bool)> {
    let mid = beta.len() / 2;
    let a = Matrix2::from_int(&s.matrix);
    let ainv = a.inverse().unwrap();
    let mut hit_ball = false;

    // Walk outward from the middle in both directions.
    let walk = |range: Box<dyn Iterator<Item = usize>>, out: &mut Vec<TorusPoint>| -> Result<()> {
        let mut prev_img = beta[mid];
        let mut prev_pre = *anchor;
        for idx in range {
            let v = beta[idx];
            let step = crate::torus::shortest_displacement(&prev_img, &v)?.vector;
            let predicted = prev_pre.translate(ainv.apply(step));
            let pres = preimages(map, &v)?;
            let best = pres
                .iter()
                .min_by(|p, q| {
                    let dp = torus_distance(p, &predicted).unwrap();
                    let dq = torus_distance(q, &predicted).unwrap();
                    dp.partial_cmp(&dq).unwrap()
                })
                .copied();
            match best {
                Some(b)
                    if torus_distance(&b, &predicted)? < 4.0 * step.norm() + 1e-9 =>
                {
                    out.push(b);
                    prev_img = v;
                    prev_pre = b;
                }
                _ => break,
            }
        }
        Ok(())
    };

    let mut fwd: Vec<TorusPoint> = vec![*anchor];
    walk(Box::new(mid + 1..beta.len()), &mut fwd)?;
    let mut bwd: Vec<TorusPoint> = Vec::new();
    walk(Box::new((0..mid).rev()), &mut bwd)?;
    bwd.reverse();
    bwd.extend(fwd);
    let curve = bwd;
    for p in &curve {
        if torus_distance(p, &s.center)? <= s.r {
            hit_ball = true;
        }
    }
    if curve.len() < 2 {
        return Err(EndoError::GeometryViolated("pullback curve degenerated".into()));
    }
    Ok((curve, hit_ball))
}

pub(crate) fn polyline_length(pts: &[TorusPoint]) -> f64 {
    pts.windows(2)
        .map(|w| crate::torus::shortest_displacement(&w[0], &w[1]).unwrap().vector.norm())
        .sum()
}

/// Midpoint-anchored straight segment helper used by the experiments.
pub fn straight_segment(
    torus: Torus,
    center: (f64, f64),
    dir: Vector2,
    len: f64,
    n: usize,
) -> Vec<TorusPoint> {
    let d = dir.normalized();
    (0..=n)
        .map(|k| {
            let t = (k as f64 / n as f64 - 0.5) * len;
            wrap_unchecked(center.0 + t * d.x, center.1 + t * d.y, torus)
        })
        .collect()
}
