//! Fold/cusp normal forms, numeric critical-point classification, the
//! fold-flattening perturbation (critical set with interior) and the
//! ball-collapse construction that destroys transitivity.

use crate::error::{EndoError, Result};
use crate::maps::{
    CollapseMap, Domain, EndoMap, MapKind, PlateauFlattening, Rect,
};
use crate::profiles::{FoldCutoff, RadialCutoff};
use crate::torus::{wrap_unchecked, TorusPoint, Vector2};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CriticalClass {
    Fold,
    Cusp,
    Degenerate,
}

/// Classification diagnostics of an approximately critical point.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CriticalPointClass {
    pub class: CriticalClass,
    pub det_gradient_norm: f64,
    /// Angle between ker Df and the tangent of the critical curve, in
    /// [0, π/2]. Folds are transverse (large angle), cusps tangent.
    pub kernel_tangent_angle: f64,
}

/// Classify a critical point: the critical curve's tangent is perpendicular
/// to ∇(det Df); the kernel of Df comes from the smallest singular direction.
/// Transversality of the two means a fold, tangency a cusp, and a vanishing
/// gradient is degenerate.
pub fn classify_critical_point(
    map: &EndoMap,
    p: (f64, f64),
    tol: f64,
    angle_tol: f64,
) -> Result<CriticalPointClass> {
    let det = map.det_at(p.0, p.1);
    if det.abs() >= tol {
        return Err(EndoError::InvalidArgument(format!(
            "point is not critical: |det| = {} >= {tol}",
            det.abs()
        )));
    }
    let h = 1e-6 * map.feature_scale().max(1e-9);
    let gx = (map.det_at(p.0 + h, p.1) - map.det_at(p.0 - h, p.1)) / (2.0 * h);
    let gy = (map.det_at(p.0, p.1 + h) - map.det_at(p.0, p.1 - h)) / (2.0 * h);
    let grad = Vector2::new(gx, gy);
    let gnorm = grad.norm();
    if gnorm < tol {
        return Ok(CriticalPointClass {
            class: CriticalClass::Degenerate,
            det_gradient_norm: gnorm,
            kernel_tangent_angle: 0.0,
        });
    }
    let tangent = grad.perp().normalized();
    let kernel = map.jacobian_at(p.0, p.1).kernel_direction();
    let cross = (kernel.x * tangent.y - kernel.y * tangent.x).abs();
    let dot = kernel.dot(tangent).abs();
    let angle = cross.atan2(dot);
    let class = if angle > angle_tol { CriticalClass::Fold } else { CriticalClass::Cusp };
    Ok(CriticalPointClass { class, det_gradient_norm: gnorm, kernel_tangent_angle: angle })
}

/// Certificate of the fold-flattening construction.
#[derive(Debug, Clone, Serialize)]
pub struct FlattenCertificate {
    pub eps: f64,
    pub delta: f64,
    /// 4δ < ε and δ² < ε.
    pub delta_inequalities_hold: bool,
    /// Measured sup of value distance + Jacobian entry distance to (x, y²).
    pub c1_distance: f64,
    /// max |det| over a dense sample of the strip |y| ≤ δ/2 (identically
    /// zero by construction).
    pub max_det_on_core: f64,
    /// The Jacobian on B(0, δ/2) equals [[1,0],[0,0]] exactly.
    pub core_jacobian_exact: bool,
    pub cutoff_slope_excess: f64,
}

/// Build (x, c(y)·y²) with δ = min(ε/5, √(ε/2)) and certify: C¹ distance to
/// the fold below ε, and det ≡ 0 on the ball of radius δ/2.
pub fn flatten_fold(eps: f64) -> Result<(EndoMap, FlattenCertificate)> {
    if !(eps > 0.0) {
        return Err(EndoError::InvalidArgument("eps must be positive".into()));
    }
    let delta = (eps / 5.0).min((eps / 2.0).sqrt());
    let cutoff = FoldCutoff::new(delta)?;
    let chart = Rect::new(-1.0, -1.0, 1.0, 1.0);
    let map = EndoMap { kind: MapKind::FlattenedFold(cutoff), domain: Domain::Chart(chart) };
    let fold = EndoMap::fold_chart(chart);

    let c1 = c1_distance(&map, &fold, chart, 200);
    let n = 1000usize;
    let mut max_core_det: f64 = 0.0;
    let mut core_exact = true;
    for k in 0..n {
        let ang = std::f64::consts::TAU * k as f64 / n as f64;
        let rad = delta / 2.0 * ((k % 17) as f64 / 17.0);
        let (x, y) = (rad * ang.cos(), rad * ang.sin());
        let j = map.jacobian_at(x, y);
        max_core_det = max_core_det.max(j.det().abs());
        if j.a != 1.0 || j.b != 0.0 || j.c != 0.0 || j.d != 0.0 {
            core_exact = false;
        }
    }
    let cert = FlattenCertificate {
        eps,
        delta,
        delta_inequalities_hold: 4.0 * delta < eps && delta * delta < eps,
        c1_distance: c1,
        max_det_on_core: max_core_det,
        core_jacobian_exact: core_exact,
        cutoff_slope_excess: cutoff.slope_excess(),
    };
    if !cert.delta_inequalities_hold {
        return Err(EndoError::Construction {
            inequality: "4*delta < eps and delta^2 < eps".into(),
            detail: format!("delta = {delta}, eps = {eps}"),
        });
    }
    Ok((map, cert))
}

/// Certificate of the ball-collapse construction.
#[derive(Debug, Clone, Serialize)]
pub struct CollapseCertificate {
    pub eps: f64,
    pub delta: f64,
    /// Diameter of the image of B(0, δ/2) (a single point, so 0).
    pub image_diameter: f64,
    pub c1_distance: f64,
    /// The hypothesis checks: f(B(0,δ)) ⊆ B(f(0,0), ε/5) and partials < ε/5.
    pub hypothesis_margin: f64,
    /// The forward-search transitivity probe failed to reach a target ball
    /// disjoint from the orbit closure of f(0,0).
    pub probe_inconclusive: bool,
    pub probe_budget: usize,
}

/// Collapse a chart map on a ball: g = f(0,0) + R(x²+y²)(f − f(0,0)), with δ
/// found by halving until f(B(0,δ)) ⊆ B(f(0,0), ε/5) and all partials stay
/// below ε/5 on the ball.
pub fn collapse_counterexample(base: &EndoMap, eps: f64) -> Result<(EndoMap, CollapseCertificate)> {
    let chart = base
        .chart()
        .ok_or_else(|| EndoError::Unsupported("the collapse construction works on chart maps".into()))?;
    if !(eps > 0.0) {
        return Err(EndoError::InvalidArgument("eps must be positive".into()));
    }
    let f00 = base.eval_lift(0.0, 0.0);
    let mut delta = eps / 5.0;
    let mut margin;
    loop {
        if delta < 1e-8 {
            return Err(EndoError::InfeasibleParameters(format!(
                "delta search fell below 1e-8 without satisfying the eps/5 bounds (eps = {eps})"
            )));
        }
        margin = hypothesis_margin(base, f00, delta, eps);
        if margin > 0.0 {
            break;
        }
        delta /= 2.0;
    }

    let cutoff = RadialCutoff::new(delta)?;
    let map = EndoMap {
        kind: MapKind::Collapse(CollapseMap {
            base: Box::new(base.clone()),
            delta,
            cutoff,
            value_at_origin: f00,
        }),
        domain: Domain::Chart(chart),
    };

    // Image diameter of B(0, δ/2): sample and take max pairwise distance.
    let mut images: Vec<(f64, f64)> = Vec::new();
    for k in 0..400 {
        let ang = std::f64::consts::TAU * k as f64 / 400.0;
        let rad = delta / 2.0 * ((k % 13) as f64 / 13.0);
        images.push(map.eval_lift(rad * ang.cos(), rad * ang.sin()));
    }
    let mut diam: f64 = 0.0;
    for i in 0..images.len() {
        for j in i + 1..images.len() {
            let d = (images[i].0 - images[j].0).hypot(images[i].1 - images[j].1);
            diam = diam.max(d);
        }
    }

    let c1 = c1_distance(&map, base, chart, 200);

    // Probe: forward search from a ball near the collapse center toward a
    // target ball away from the orbit closure of f(0,0).
    let budget = 2000usize;
    let target = (0.5, 0.5);
    let probe_hit = chart_forward_search(&map, (0.0, 0.0, delta / 4.0), (target, 1e-3), budget);
    let cert = CollapseCertificate {
        eps,
        delta,
        image_diameter: diam,
        c1_distance: c1,
        hypothesis_margin: margin,
        probe_inconclusive: !probe_hit,
        probe_budget: budget,
    };
    Ok((map, cert))
}

fn hypothesis_margin(base: &EndoMap, f00: (f64, f64), delta: f64, eps: f64) -> f64 {
    let n = 200usize;
    let mut max_val: f64 = 0.0;
    let mut max_partial: f64 = 0.0;
    for j in 0..=n {
        for i in 0..=n {
            let x = -delta + 2.0 * delta * i as f64 / n as f64;
            let y = -delta + 2.0 * delta * j as f64 / n as f64;
            if x.hypot(y) > delta {
                continue;
            }
            let (fx, fy) = base.eval_lift(x, y);
            max_val = max_val.max((fx - f00.0).hypot(fy - f00.1));
            max_partial = max_partial.max(base.jacobian_at(x, y).max_abs_entry());
        }
    }
    (eps / 5.0 - max_val).min(eps / 5.0 - max_partial)
}

fn chart_forward_search(
    map: &EndoMap,
    source: (f64, f64, f64),
    target: ((f64, f64), f64),
    budget: usize,
) -> bool {
    let chart = map.chart().unwrap();
    let n = 24;
    let mut pts = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let dx = (i as f64 / (n - 1) as f64 - 0.5) * 2.0 * source.2;
            let dy = (j as f64 / (n - 1) as f64 - 0.5) * 2.0 * source.2;
            if dx.hypot(dy) <= source.2 {
                pts.push((source.0 + dx, source.1 + dy));
            }
        }
    }
    for _ in 0..budget {
        for p in pts.iter_mut() {
            *p = map.eval_lift(p.0, p.1);
            if !chart.contains(p.0, p.1) {
                continue;
            }
            if (p.0 - target.0 .0).hypot(p.1 - target.0 .1) < target.1 {
                return true;
            }
        }
    }
    false
}

/// max over a grid of (value distance + max Jacobian entry distance) between
/// two maps on a common chart.
pub fn c1_distance(map1: &EndoMap, map2: &EndoMap, region: Rect, resolution: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for j in 0..=resolution {
        for i in 0..=resolution {
            let x = region.x0 + region.width() * i as f64 / resolution as f64;
            let y = region.y0 + region.height() * j as f64 / resolution as f64;
            let (a1, b1) = map1.eval_lift(x, y);
            let (a2, b2) = map2.eval_lift(x, y);
            let dv = (a1 - a2).hypot(b1 - b2);
            let j1 = map1.jacobian_at(x, y);
            let j2 = map2.jacobian_at(x, y);
            let dj = (j1.a - j2.a)
                .abs()
                .max((j1.b - j2.b).abs())
                .max((j1.c - j2.c).abs())
                .max((j1.d - j2.d).abs());
            worst = worst.max(dv + dj);
        }
    }
    worst
}

/// An expanding family member surgically flattened along its fold curve, so
/// the critical set has interior; plus the open rectangle that is provably
/// critical and a start point inside it.
#[derive(Debug, Clone, Serialize)]
pub struct FlattenedFamily {
    pub map: EndoMap,
    pub interior_rect: Rect,
    pub start: TorusPoint,
    pub c1_distance_to_base: f64,
}

/// Glue a plateau into the canonical expanding family: inside |x| ≤ θ/4 the
/// second coordinate's y-argument is re-parametrized through a C¹ plateau
/// centered on the fold height y* (where ψ(0)φ′(y*) = μ), so ∂f₂/∂y ≡ 0 on an
/// open rectangle.
pub fn flattened_expanding_family() -> Result<FlattenedFamily> {
    let built = crate::maps::build_expanding(&crate::maps::ExpandingConfig::canonical())?;
    let base = built.map;
    let e = base.as_expanding().unwrap().clone();
    let torus = base.torus().unwrap();

    // Fold height: the smallest y with ψ(0)·φ′(y) = μ (on the rising flank of
    // the spike).
    let target = e.mu / e.psi.eval(0.0);
    let lo0 = e.phi.delta * (0.5 - e.phi.spike_frac);
    let hi0 = e.phi.delta * 0.5;
    let mut lo = lo0;
    let mut hi = hi0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if e.phi.deriv(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let y_star = 0.5 * (lo + hi);
    let w = e.phi.delta * 1e-3;
    let plateau = PlateauFlattening { x_cutoff: FoldCutoff::new(e.theta / 2.0)?, y_center: y_star, w };
    let rect = plateau.interior_rect();

    let mut flattened = e.clone();
    flattened.plateau = Some(plateau);
    let map = EndoMap { kind: MapKind::Expanding(flattened), domain: Domain::Torus(torus) };

    // Every point of the interior rectangle is critical.
    let mut max_det: f64 = 0.0;
    for k in 0..1000 {
        let fx = (k % 37) as f64 / 37.0;
        let fy = (k % 41) as f64 / 41.0;
        let x = rect.x0 + fx * rect.width();
        let y = rect.y0 + fy * rect.height();
        max_det = max_det.max(map.det_at(x, y).abs());
    }
    if max_det != 0.0 {
        return Err(EndoError::GeometryViolated(format!(
            "plateau interior is not exactly critical: max |det| = {max_det}"
        )));
    }

    let search = Rect::new(
        -2.0 * e.theta,
        y_star - 4.0 * w,
        2.0 * e.theta,
        y_star + 4.0 * w,
    );
    let c1 = c1_distance(&map, &base, search, 200);

    let start = wrap_unchecked(e.theta / 8.0, y_star, torus);
    Ok(FlattenedFamily { map, interior_rect: rect, start, c1_distance_to_base: c1 })
}

/// Orbit-density experiment started inside the interior of the critical set
/// of the flattened family.
pub fn dense_critical_orbit_experiment(
    n: usize,
    eps: f64,
    grid_res: usize,
) -> Result<(FlattenedFamily, crate::transitivity::DensityReport)> {
    let fam = flattened_expanding_family()?;
    let det = fam.map.det_at(fam.start.x, fam.start.y);
    if det != 0.0 {
        return Err(EndoError::GeometryViolated(format!(
            "start point is not critical: det = {det}"
        )));
    }
    let report = crate::transitivity::orbit_density(&fam.map, &fam.start, n, eps, grid_res)?;
    Ok((fam, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::Rect;

    #[test]
    fn fold_points_classify_as_folds() {
        let fold = EndoMap::fold_chart(Rect::new(-1.0, -1.0, 1.0, 1.0));
        for k in 0..100 {
            let x = -0.9 + 1.8 * k as f64 / 99.0;
            let c = classify_critical_point(&fold, (x, 0.0), 1e-9, 1e-3).unwrap();
            assert_eq!(c.class, CriticalClass::Fold, "at x = {x}");
            // kernel (0,1) vs tangent (1,0): right angle
            assert!((c.kernel_tangent_angle - std::f64::consts::FRAC_PI_2).abs() < 1e-3);
        }
    }

    #[test]
    fn cusp_origin_and_offorigin_parabola() {
        let cusp = EndoMap::cusp_chart(Rect::new(-1.0, -1.0, 1.0, 1.0));
        let c = classify_critical_point(&cusp, (0.0, 0.0), 1e-9, 1e-3).unwrap();
        assert_eq!(c.class, CriticalClass::Cusp);
        // off-origin points of the critical parabola x = 3y² are folds
        for k in 0..100 {
            let t = 0.02 + 0.4 * k as f64 / 99.0;
            let t = if k % 2 == 0 { t } else { -t };
            let c = classify_critical_point(&cusp, (3.0 * t * t, t), 1e-9, 1e-3).unwrap();
            assert_eq!(c.class, CriticalClass::Fold, "at t = {t}");
        }
    }

    #[test]
    fn non_critical_point_rejected() {
        let fold = EndoMap::fold_chart(Rect::new(-1.0, -1.0, 1.0, 1.0));
        assert!(classify_critical_point(&fold, (0.0, 0.5), 1e-9, 1e-3).is_err());
    }

    #[test]
    fn flatten_certificate_numbers() {
        let (map, cert) = flatten_fold(0.1).unwrap();
        assert!((cert.delta - 0.02).abs() < 1e-15);
        assert!(cert.delta_inequalities_hold);
        assert!(cert.c1_distance < 0.1, "c1 = {}", cert.c1_distance);
        assert_eq!(cert.max_det_on_core, 0.0);
        assert!(cert.core_jacobian_exact);
        // outside |y| >= delta the map equals the fold exactly
        let (x, y) = map.eval_lift(0.3, 0.5);
        assert_eq!((x, y), (0.3, 0.25));
    }

    #[test]
    fn collapse_certificate_numbers() {
        let quad = EndoMap::quadratic_model(Rect::new(-1.0, -1.0, 1.0, 1.0));
        let (map, cert) = collapse_counterexample(&quad, 0.1).unwrap();
        assert_eq!(cert.image_diameter, 0.0);
        assert!(cert.c1_distance < 0.1, "c1 = {}", cert.c1_distance);
        assert!(cert.probe_inconclusive);
        // outside B(0, δ): g = f pointwise
        let p = map.eval_lift(0.9, 0.0);
        let q = quad.eval_lift(0.9, 0.0);
        assert_eq!(p, q);
        // on B(0, δ/2): constant value f(0,0)
        let v = map.eval_lift(cert.delta / 4.0, 0.0);
        assert_eq!(v, (0.0, 0.0));
    }

    #[test]
    fn c1_distance_of_map_with_itself_is_zero() {
        let fold = EndoMap::fold_chart(Rect::new(-1.0, -1.0, 1.0, 1.0));
        assert_eq!(c1_distance(&fold, &fold, Rect::new(-1.0, -1.0, 1.0, 1.0), 50), 0.0);
    }
}
