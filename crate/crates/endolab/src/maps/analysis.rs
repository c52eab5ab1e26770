//! Grid analysis of a map: the critical set {det Df = 0} by marching squares,
//! fixed points by Newton refinement from a seed grid, and the two-point
//! persistence certificate for the critical set.

use super::{EndoMap, GridSpec, MapKind, Matrix2, Rect};
use crate::error::{EndoError, Result};
use crate::torus::{shortest_displacement, torus_distance, wrap_unchecked, TorusPoint, Vector2};
use serde::Serialize;
use std::collections::BTreeMap;

/// Polyline approximation of {det Df = 0} on a grid, with the sign data
/// justifying it.
#[derive(Debug, Clone, Serialize)]
pub struct CriticalSetGeometry {
    pub polylines: Vec<Vec<(f64, f64)>>,
    pub resolution: usize,
    pub region: Rect,
    pub min_abs_det: f64,
    pub has_sign_change: bool,
    /// Estimated |∇det|·cell-diagonal: every returned vertex has
    /// |det| below this.
    pub vertex_tolerance: f64,
    pub coarse_warning: bool,
}

impl CriticalSetGeometry {
    pub fn is_empty(&self) -> bool {
        self.polylines.is_empty()
    }
}

/// Marching-squares zero contour of det ∘ Df over the map's critical search
/// region. Empty output means no sign change and min |det| > 0 on the grid.
pub fn critical_set(map: &EndoMap, resolution: usize) -> Result<CriticalSetGeometry> {
    if resolution < 64 {
        return Err(EndoError::InvalidArgument(format!(
            "resolution {resolution} below the minimum of 64"
        )));
    }
    let region = map.critical_search_region();
    critical_set_in(map, resolution, region)
}

pub fn critical_set_in(map: &EndoMap, resolution: usize, region: Rect) -> Result<CriticalSetGeometry> {
    let n = resolution;
    let w = region.width();
    let h = region.height();
    let dx = w / n as f64;
    let dy = h / n as f64;

    let mut vals = vec![0.0f64; (n + 1) * (n + 1)];
    let mut min_abs = f64::INFINITY;
    let mut min_v = f64::INFINITY;
    let mut max_v = f64::NEG_INFINITY;
    for j in 0..=n {
        for i in 0..=n {
            let x = region.x0 + i as f64 * dx;
            let y = region.y0 + j as f64 * dy;
            let d = map.det_at(x, y);
            vals[j * (n + 1) + i] = d;
            min_abs = min_abs.min(d.abs());
            min_v = min_v.min(d);
            max_v = max_v.max(d);
        }
    }
    let has_sign_change = min_v < 0.0 && max_v > 0.0;

    // Lipschitz estimate for the vertex tolerance.
    let mut grad_max: f64 = 0.0;
    for j in 0..n {
        for i in 0..n {
            let v = vals[j * (n + 1) + i];
            let vx = vals[j * (n + 1) + i + 1];
            let vy = vals[(j + 1) * (n + 1) + i];
            grad_max = grad_max.max(((vx - v) / dx).abs()).max(((vy - v) / dy).abs());
        }
    }
    let vertex_tol = grad_max * dx.hypot(dy);

    // Marching squares: per cell, interpolate zero crossings on the edges.
    // Edge keys: (j, i, 0) bottom horizontal edge of node (i, j); (j, i, 1)
    // left vertical edge.
    type EdgeKey = (usize, usize, u8);
    let interp = |va: f64, vb: f64| -> f64 {
        if (va - vb).abs() < 1e-300 {
            0.5
        } else {
            va / (va - vb)
        }
    };
    let mut segments: Vec<(EdgeKey, EdgeKey)> = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let v00 = vals[j * (n + 1) + i];
            let v10 = vals[j * (n + 1) + i + 1];
            let v01 = vals[(j + 1) * (n + 1) + i];
            let v11 = vals[(j + 1) * (n + 1) + i + 1];
            let mut case = 0u8;
            if v00 < 0.0 {
                case |= 1;
            }
            if v10 < 0.0 {
                case |= 2;
            }
            if v11 < 0.0 {
                case |= 4;
            }
            if v01 < 0.0 {
                case |= 8;
            }
            if case == 0 || case == 15 {
                continue;
            }
            let bottom: EdgeKey = (j, i, 0);
            let top: EdgeKey = (j + 1, i, 0);
            let left: EdgeKey = (j, i, 1);
            let right: EdgeKey = (j, i + 1, 1);
            let segs: &[(EdgeKey, EdgeKey)] = match case {
                1 | 14 => &[(left, bottom)],
                2 | 13 => &[(bottom, right)],
                3 | 12 => &[(left, right)],
                4 | 11 => &[(right, top)],
                6 | 9 => &[(bottom, top)],
                7 | 8 => &[(left, top)],
                5 | 10 => {
                    // saddle cell: disambiguate with the center value
                    let center = map.det_at(
                        region.x0 + (i as f64 + 0.5) * dx,
                        region.y0 + (j as f64 + 0.5) * dy,
                    );
                    let neg_center = center < 0.0;
                    if (case == 5) == neg_center {
                        &[(left, top), (bottom, right)]
                    } else {
                        &[(left, bottom), (right, top)]
                    }
                }
                _ => &[],
            };
            segments.extend_from_slice(segs);
        }
    }

    // Resolve edge keys to coordinates.
    let edge_point = |key: &EdgeKey| -> (f64, f64) {
        let (j, i, kind) = *key;
        if kind == 0 {
            let va = vals[j * (n + 1) + i];
            let vb = vals[j * (n + 1) + i + 1];
            let t = interp(va, vb);
            (region.x0 + (i as f64 + t) * dx, region.y0 + j as f64 * dy)
        } else {
            let va = vals[j * (n + 1) + i];
            let vb = vals[(j + 1) * (n + 1) + i];
            let t = interp(va, vb);
            (region.x0 + i as f64 * dx, region.y0 + (j as f64 + t) * dy)
        }
    };

    // Chain segments into polylines via edge adjacency.
    let mut adjacency: BTreeMap<EdgeKey, Vec<usize>> = BTreeMap::new();
    for (idx, (a, b)) in segments.iter().enumerate() {
        adjacency.entry(*a).or_default().push(idx);
        adjacency.entry(*b).or_default().push(idx);
    }
    let mut used = vec![false; segments.len()];
    let mut polylines = Vec::new();
    for start in 0..segments.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let (a0, b0) = segments[start];
        let mut chain = vec![a0, b0];
        // extend forward from b0, then backward from a0
        for dir in 0..2 {
            loop {
                let tip = if dir == 0 { *chain.last().unwrap() } else { chain[0] };
                let next = adjacency
                    .get(&tip)
                    .and_then(|ids| ids.iter().find(|&&id| !used[id]).copied());
                match next {
                    Some(id) => {
                        used[id] = true;
                        let (a, b) = segments[id];
                        let other = if a == tip { b } else { a };
                        if dir == 0 {
                            chain.push(other);
                        } else {
                            chain.insert(0, other);
                        }
                    }
                    None => break,
                }
            }
        }
        polylines.push(chain.iter().map(|k| edge_point(k)).collect::<Vec<_>>());
    }

    let feature = map.feature_scale();
    let coarse_warning = dx.max(dy) > feature;
    Ok(CriticalSetGeometry {
        polylines,
        resolution,
        region,
        min_abs_det: min_abs,
        has_sign_change,
        vertex_tolerance: vertex_tol,
        coarse_warning,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FixedPointClass {
    Saddle,
    Repelling,
    Attracting,
    NonHyperbolic,
}

impl std::fmt::Display for FixedPointClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FixedPointClass::Saddle => "saddle",
            FixedPointClass::Repelling => "repelling",
            FixedPointClass::Attracting => "attracting",
            FixedPointClass::NonHyperbolic => "nonhyperbolic",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct FixedPointInfo {
    pub x: f64,
    pub y: f64,
    /// Real eigenvalues, or the common modulus for a complex pair.
    pub eig1: f64,
    pub eig2: f64,
    pub complex_pair: bool,
    pub class: FixedPointClass,
    /// Df at the fixed point is singular (fold-degenerate classification).
    pub degenerate: bool,
}

impl FixedPointInfo {
    pub fn torus_point(&self, torus: crate::torus::Torus) -> TorusPoint {
        wrap_unchecked(self.x, self.y, torus)
    }
}

/// Newton refinement of f(p) = p from a seed grid; classification by the
/// eigenvalue moduli of Df with tolerance 1e-8 around 1. Seeds whose Newton
/// iteration diverges are skipped. On chart maps the displacement is plain
/// (no wrap) and iterates must stay in the chart.
pub fn fixed_points(map: &EndoMap, seed_resolution: usize) -> Result<Vec<FixedPointInfo>> {
    let (torus, region) = match map.torus() {
        Some(t) => (Some(t), Rect::new(0.0, 0.0, t.side(), t.side())),
        None => (None, map.chart().unwrap()),
    };
    let n = seed_resolution.max(16);
    let cell = region.width().max(region.height()) / n as f64;
    let mut found: Vec<FixedPointInfo> = Vec::new();

    for j in 0..n {
        for i in 0..n {
            let seed = (
                region.x0 + region.width() * (i as f64 + 0.5) / n as f64,
                region.y0 + region.height() * (j as f64 + 0.5) / n as f64,
            );
            let d0 = displacement(map, torus, seed);
            // A root within one cell of the seed can displace the seed by up
            // to ‖Df − I‖ times the cell size.
            let jac = map.jacobian_at(seed.0, seed.1);
            let gain = Matrix2::new(jac.a - 1.0, jac.b, jac.c, jac.d - 1.0).frobenius() + 1.0;
            if d0.norm() > 1.5 * gain * cell {
                continue;
            }
            if let Some(p) = newton_fixed(map, torus, &region, seed) {
                if found.iter().all(|f| point_distance(torus, (f.x, f.y), p) > 1e-7) {
                    let jac = map.jacobian_at(p.0, p.1);
                    let (e1, e2, complex_pair) = jac.eigen_moduli();
                    let tol = 1e-8;
                    let m1 = e1.abs();
                    let m2 = e2.abs();
                    let class = if (m1 - 1.0).abs() <= tol || (m2 - 1.0).abs() <= tol {
                        FixedPointClass::NonHyperbolic
                    } else if m1 > 1.0 && m2 > 1.0 {
                        FixedPointClass::Repelling
                    } else if m1 < 1.0 && m2 < 1.0 {
                        FixedPointClass::Attracting
                    } else {
                        FixedPointClass::Saddle
                    };
                    found.push(FixedPointInfo {
                        x: p.0,
                        y: p.1,
                        eig1: e1,
                        eig2: e2,
                        complex_pair,
                        class,
                        degenerate: jac.det().abs() < 1e-10,
                    });
                }
            }
        }
    }
    found.sort_by(|a, b| (a.x, a.y).partial_cmp(&(b.x, b.y)).unwrap());
    Ok(found)
}

fn point_distance(torus: Option<crate::torus::Torus>, a: (f64, f64), b: (f64, f64)) -> f64 {
    match torus {
        Some(t) => {
            let p = wrap_unchecked(a.0, a.1, t);
            let q = wrap_unchecked(b.0, b.1, t);
            torus_distance(&p, &q).unwrap()
        }
        None => (a.0 - b.0).hypot(a.1 - b.1),
    }
}

fn displacement(map: &EndoMap, torus: Option<crate::torus::Torus>, p: (f64, f64)) -> Vector2 {
    match torus {
        Some(t) => {
            let pt = wrap_unchecked(p.0, p.1, t);
            let img = map.eval(&pt);
            shortest_displacement(&pt, &img).unwrap().vector
        }
        None => {
            let (fx, fy) = map.eval_lift(p.0, p.1);
            Vector2::new(fx - p.0, fy - p.1)
        }
    }
}

fn newton_fixed(
    map: &EndoMap,
    torus: Option<crate::torus::Torus>,
    region: &Rect,
    mut p: (f64, f64),
) -> Option<(f64, f64)> {
    let scale = region.width().max(region.height());
    for _ in 0..60 {
        let d = displacement(map, torus, p);
        if d.norm() < 1e-12 {
            return Some(p);
        }
        let jac = map.jacobian_at(p.0, p.1);
        let m = Matrix2::new(jac.a - 1.0, jac.b, jac.c, jac.d - 1.0);
        let step = match m.inverse() {
            Some(inv) if m.det().abs() > 1e-9 => inv.apply(d),
            _ => {
                // Damped least-squares step for near-singular (Df − I), as on
                // circles of fixed points of the non-hyperbolic base matrix.
                let mt = Matrix2::new(m.a, m.c, m.b, m.d);
                let mtm = Matrix2::new(
                    mt.a * m.a + mt.b * m.c,
                    mt.a * m.b + mt.b * m.d,
                    mt.c * m.a + mt.d * m.c,
                    mt.c * m.b + mt.d * m.d,
                );
                let reg = Matrix2::new(mtm.a + 1e-12, mtm.b, mtm.c, mtm.d + 1e-12);
                let rhs = mt.apply(d);
                reg.inverse()?.apply(rhs)
            }
        };
        if !step.x.is_finite() || !step.y.is_finite() || step.norm() > 0.3 * scale {
            return None;
        }
        p = (p.0 - step.x, p.1 - step.y);
        if torus.is_none() && !region.contains(p.0, p.1) {
            return None;
        }
        if let Some(t) = torus {
            let w = wrap_unchecked(p.0, p.1, t);
            p = (w.x, w.y);
        }
    }
    let d = displacement(map, torus, p);
    if d.norm() < 1e-10 {
        Some(p)
    } else {
        None
    }
}

/// Two concrete points witnessing both determinant signs; any C¹ perturbation
/// whose Jacobian stays within the stated bound keeps both signs, hence a
/// nonempty critical set.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PersistenceCertificate {
    pub p_minus: TorusPoint,
    pub p_plus: TorusPoint,
    pub det_minus: f64,
    pub det_plus: f64,
    pub margin: f64,
    /// Admissible sup-norm Jacobian perturbation: margin / (sup‖Df‖ + 1).
    pub jacobian_perturbation_bound: f64,
}

pub fn persistence_certificate(map: &EndoMap) -> Result<PersistenceCertificate> {
    let torus = map
        .torus()
        .ok_or_else(|| EndoError::Unsupported("persistence certificates live on torus maps".into()))?;
    let (p_minus, p_plus) = match &map.kind {
        MapKind::Expanding(e) => {
            let pm = wrap_unchecked(0.0, e.phi.delta / 2.0, torus);
            let pp = wrap_unchecked(torus.side() / 2.0, torus.side() / 2.0, torus);
            (pm, pp)
        }
        MapKind::Saddle(s) => {
            let off = s.v_mu.scale(s.phi.delta / 2.0);
            let pm = s.center.translate(off);
            (pm, s.twin)
        }
        MapKind::NonHyperbolic(n) => match &n.bump {
            Some(b) => {
                let pm = wrap_unchecked(b.center.0, b.center.1 + b.phi.delta / 2.0, torus);
                let pp = wrap_unchecked(b.center.0 + 3.0 * b.r, b.center.1, torus);
                (pm, pp)
            }
            None => return scan_certificate(map, torus),
        },
        MapKind::Perturbed(p) => {
            let base_cert = persistence_certificate(&p.base)?;
            (base_cert.p_minus, base_cert.p_plus)
        }
        _ => return scan_certificate(map, torus),
    };
    certificate_from(map, p_minus, p_plus)
}

fn scan_certificate(map: &EndoMap, torus: crate::torus::Torus) -> Result<PersistenceCertificate> {
    let side = torus.side();
    let n = 128;
    let mut best_min = (f64::INFINITY, (0.0, 0.0));
    let mut best_max = (f64::NEG_INFINITY, (0.0, 0.0));
    for spec in scan_grids(map, side) {
        for j in 0..n {
            for i in 0..n {
                let x = spec.region.x0 + (i as f64 + 0.5) / n as f64 * spec.region.width();
                let y = spec.region.y0 + (j as f64 + 0.5) / n as f64 * spec.region.height();
                let d = map.det_at(x, y);
                if d < best_min.0 {
                    best_min = (d, (x, y));
                }
                if d > best_max.0 {
                    best_max = (d, (x, y));
                }
            }
        }
    }
    if !(best_min.0 < 0.0 && best_max.0 > 0.0) {
        return Err(EndoError::NotCertifiable(format!(
            "determinant does not change sign on the grid (range [{}, {}])",
            best_min.0, best_max.0
        )));
    }
    certificate_from(
        map,
        wrap_unchecked(best_min.1 .0, best_min.1 .1, torus),
        wrap_unchecked(best_max.1 .0, best_max.1 .1, torus),
    )
}

fn scan_grids(map: &EndoMap, side: f64) -> Vec<GridSpec> {
    let mut grids = vec![GridSpec { region: Rect::new(0.0, 0.0, side, side), resolution: 128 }];
    let sb = map.critical_search_region();
    if sb.width() < side {
        grids.push(GridSpec { region: sb, resolution: 128 });
    }
    grids
}

fn certificate_from(
    map: &EndoMap,
    p_minus: TorusPoint,
    p_plus: TorusPoint,
) -> Result<PersistenceCertificate> {
    let det_minus = map.det_at(p_minus.x, p_minus.y);
    let det_plus = map.det_at(p_plus.x, p_plus.y);
    if !(det_minus < 0.0 && det_plus > 0.0) {
        return Err(EndoError::NotCertifiable(format!(
            "witness determinants {det_minus}, {det_plus} do not straddle zero"
        )));
    }
    let margin = det_minus.abs().min(det_plus) / 2.0;
    let df_sup = crate::cones::sup_jacobian_norm(map);
    Ok(PersistenceCertificate {
        p_minus,
        p_plus,
        det_minus,
        det_plus,
        margin,
        jacobian_perturbation_bound: margin / (df_sup + 1.0),
    })
}
