//! Preimage fibers. The skew families reduce to |λ| horizontal branches plus
//! a one-dimensional solve in the second coordinate; the scan is refined on
//! the bump windows where folds can produce up to three roots per branch.

use super::{EndoMap, MapKind};
use crate::error::{EndoError, Result};
use crate::torus::{shortest_displacement, torus_distance, wrap_unchecked, IntMatrix2, Torus, TorusPoint, Vector2};

const RESIDUAL_TOL: f64 = 1e-10;
const ACCEPT_TOL: f64 = 1e-9;

/// All solutions of eval(p) = t, forward-validated to within 1e-9 and sorted
/// by coordinates. The generic count is |det A|.
pub fn preimages(map: &EndoMap, t: &TorusPoint) -> Result<Vec<TorusPoint>> {
    let torus = map
        .torus()
        .ok_or_else(|| EndoError::Unsupported(format!("preimages of chart map {}", map.name())))?;
    let mut roots = match &map.kind {
        MapKind::Linear(m) => lattice_preimages(m, t, torus),
        MapKind::Expanding(e) => {
            let mut windows = vec![(0.0, e.phi.delta)];
            if let Some(p) = &e.plateau {
                windows.push((p.y_center - 2.0 * p.w - e.phi.delta, p.y_center + 2.0 * p.w + e.phi.delta));
            }
            skew_preimages(map, t, torus, e.matrix.a, &windows)?
        }
        MapKind::NonHyperbolic(n) => {
            let windows = match &n.bump {
                Some(b) => vec![(b.center.1, b.center.1 + b.phi.delta)],
                None => vec![],
            };
            skew_preimages(map, t, torus, n.matrix.a, &windows)?
        }
        MapKind::Saddle(_) => saddle_preimages(map, t, torus)?,
        _ => {
            return Err(EndoError::Unsupported(format!(
                "preimages not available for {}",
                map.name()
            )))
        }
    };

    // Polish and validate every candidate.
    let mut out: Vec<TorusPoint> = Vec::new();
    roots.sort_by(|a, b| (a.x, a.y).partial_cmp(&(b.x, b.y)).unwrap());
    for p in roots {
        let polished = polish(map, p, t)?;
        if !out
            .iter()
            .any(|q| torus_distance(q, &polished).unwrap() < ACCEPT_TOL)
        {
            out.push(polished);
        }
    }
    out.sort_by(|a, b| (a.x, a.y).partial_cmp(&(b.x, b.y)).unwrap());
    Ok(out)
}

fn polish(map: &EndoMap, mut p: TorusPoint, t: &TorusPoint) -> Result<TorusPoint> {
    for _ in 0..40 {
        let img = map.eval(&p);
        let err = shortest_displacement(&img, t)?.vector;
        if err.norm() < RESIDUAL_TOL {
            return Ok(p);
        }
        let jac = map.jacobian_at(p.x, p.y);
        let step = match jac.inverse() {
            Some(inv) => inv.apply(err),
            None => Vector2::new(err.x * 0.5, err.y * 0.5),
        };
        if step.norm() > 0.25 * p.torus.side() {
            break;
        }
        p = p.translate(step);
    }
    let img = map.eval(&p);
    let res = torus_distance(&img, t)?;
    if res < ACCEPT_TOL {
        Ok(p)
    } else {
        Err(EndoError::UnresolvedFiber(format!(
            "branch near ({}, {}) has residual {res}",
            p.x, p.y
        )))
    }
}

/// Preimages of t under a linear integer map: A⁻¹(t + side·k) over lattice
/// coset representatives.
fn lattice_preimages(m: &IntMatrix2, t: &TorusPoint, torus: Torus) -> Vec<TorusPoint> {
    let side = torus.side();
    let inv = super::Matrix2::from_int(m).inverse().expect("family matrices are invertible");
    let range = m.a.abs() + m.b.abs() + m.c.abs() + m.d.abs();
    let mut pts: Vec<TorusPoint> = Vec::new();
    for k1 in -range..=range {
        for k2 in -range..=range {
            let v = inv.apply(Vector2::new(t.x + side * k1 as f64, t.y + side * k2 as f64));
            let p = wrap_unchecked(v.x, v.y, torus);
            if !pts.iter().any(|q| torus_distance(q, &p).unwrap() < ACCEPT_TOL) {
                pts.push(p);
            }
        }
    }
    pts
}

/// Branch solve for maps of the form (λx, G(x, y)) with integer λ: the fiber
/// splits into |λ| vertical branches; on each, G(x, ·) − t_y is scanned for
/// sign changes of every reachable lattice level, densely on the given
/// nonlinear windows, then bisected and polished.
fn skew_preimages(
    map: &EndoMap,
    t: &TorusPoint,
    torus: Torus,
    lambda: i64,
    windows: &[(f64, f64)],
) -> Result<Vec<TorusPoint>> {
    let side = torus.side();
    let n_branch = lambda.unsigned_abs() as usize;
    let mut out = Vec::new();
    for i in 0..n_branch {
        let x = (t.x + side * i as f64) / lambda as f64;
        let x = torus.wrap_coord(x);
        let g = |y: f64| map.eval_lift(x, y).1;
        for y in solve_periodic_level(&g, t.y, side, windows) {
            out.push(wrap_unchecked(x, torus.wrap_coord(y), torus));
        }
    }
    Ok(out)
}

/// All y ∈ [0, side) with g(y) ≡ target (mod side), where g is a lift with
/// g(y + side) = g(y) + d·side for some positive integer d. Coarse scan plus
/// dense scans on the windows, bisection on brackets, which is fold-safe.
fn solve_periodic_level(
    g: &impl Fn(f64) -> f64,
    target: f64,
    side: f64,
    windows: &[(f64, f64)],
) -> Vec<f64> {
    let coarse = 4096usize;
    let mut samples: Vec<f64> = (0..=coarse).map(|k| side * k as f64 / coarse as f64).collect();
    for &(lo, hi) in windows {
        let fine = 4096usize;
        if hi > lo {
            for k in 0..=fine {
                let y = lo + (hi - lo) * k as f64 / fine as f64;
                samples.push(y.rem_euclid(side));
            }
        }
    }
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    samples.dedup_by(|a, b| (*a - *b).abs() < 1e-18);

    let mut roots: Vec<f64> = Vec::new();
    let mut push_root = |y: f64| {
        if !roots.iter().any(|r| (r - y).abs() < 1e-11 || (side - (r - y).abs()) < 1e-11) {
            roots.push(y);
        }
    };

    let h = |y: f64| g(y) - target;
    let mut prev_y = samples[0];
    let mut prev_v = h(prev_y);
    // Exact hit at the first sample.
    if (prev_v / side - (prev_v / side).round()).abs() * side < 1e-12 {
        push_root(prev_y);
    }
    for &y in samples.iter().skip(1) {
        let v = h(y);
        let (lo_l, hi_l) = (prev_v.min(v), prev_v.max(v));
        let mut level = (lo_l / side).ceil() * side;
        while level <= hi_l {
            if level >= lo_l {
                // bracketed crossing of this lattice level
                let root = bisect(&|z| h(z) - level, prev_y, y, prev_v - level, v - level);
                if let Some(root) = root {
                    push_root(root);
                }
            }
            level += side;
        }
        prev_y = y;
        prev_v = v;
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    roots
}

fn bisect(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut fa: f64, fb: f64) -> Option<f64> {
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa * fb > 0.0 {
        return None;
    }
    for _ in 0..80 {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 || (b - a) < 1e-15 {
            return Some(m);
        }
        if fa * fm < 0.0 {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
    }
    Some(0.5 * (a + b))
}

/// Saddle preimages: the |det A| lattice coset candidates, replaced near the
/// bump support by a one-dimensional solve in the contracting eigendirection.
fn saddle_preimages(map: &EndoMap, t: &TorusPoint, torus: Torus) -> Result<Vec<TorusPoint>> {
    let s = map.as_saddle().unwrap();
    let mut out: Vec<TorusPoint> = Vec::new();
    let theta = s.theta;
    let delta = s.phi.delta;

    for cand in lattice_preimages(&s.matrix, t, torus) {
        let (u, v) = s.bump_coords(cand.x, cand.y);
        let near_support = u.abs() <= theta * 1.5 && v >= -0.5 * delta && v <= 1.5 * delta;
        if !near_support {
            out.push(cand);
        }
    }

    // In-support roots: u is fixed by the expanding eigencoordinate of the
    // minimal lift of t − A(c); v solves μv − ψ(u)φ(v) = d_v.
    let ac = s.matrix.apply_point(&s.center);
    let d = shortest_displacement(&ac, t)?.vector;
    let du = s.du.dot(d);
    let dv = s.dv.dot(d);
    let u = du / s.lambda;
    if u.abs() <= theta {
        let psi_u = s.psi.eval(u);
        let f = |v: f64| s.mu * v - psi_u * s.phi.eval(v) - dv;
        let fine = 8192usize;
        let lo = -0.2 * delta - 1e-12;
        let hi = 1.2 * delta;
        let mut prev_v = lo;
        let mut prev_f = f(lo);
        for k in 1..=fine {
            let vv = lo + (hi - lo) * k as f64 / fine as f64;
            let fv = f(vv);
            if prev_f == 0.0 || prev_f * fv < 0.0 {
                if let Some(root) = bisect(&f, prev_v, vv, prev_f, fv) {
                    let p = s.center.translate(Vector2::new(
                        u * s.v_lambda.x + root * s.v_mu.x,
                        u * s.v_lambda.y + root * s.v_mu.y,
                    ));
                    out.push(p);
                }
            }
            prev_v = vv;
            prev_f = fv;
        }
    }
    Ok(out)
}
