use super::*;
use crate::torus::{torus_distance, wrap, IntMatrix2, Torus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn canonical_expanding() -> BuiltFamily {
    build_expanding(&ExpandingConfig::canonical()).unwrap()
}

fn canonical_nonhyp() -> BuiltFamily {
    build_non_hyperbolic(&NonHyperbolicConfig::canonical()).unwrap()
}

fn canonical_saddle() -> BuiltFamily {
    build_saddle(&SaddleConfig::canonical()).unwrap()
}

#[test]
fn expanding_equals_matrix_off_support() {
    let b = canonical_expanding();
    let torus = b.map.torus().unwrap();
    let a = b.map.base_matrix().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut checked = 0;
    while checked < 10_000 {
        let p = wrap((rng.gen(), rng.gen()), torus).unwrap();
        if !b.map.is_off_support(&p) {
            continue;
        }
        checked += 1;
        let d = torus_distance(&b.map.eval(&p), &a.apply_point(&p)).unwrap();
        assert!(d < 1e-12, "distance {d}");
    }
}

#[test]
fn nonhyp_fixed_point_at_origin() {
    let b = canonical_nonhyp();
    let torus = b.map.torus().unwrap();
    let p0 = wrap((0.0, 0.0), torus).unwrap();
    let img = b.map.eval(&p0);
    assert!(torus_distance(&img, &p0).unwrap() < 1e-14);
}

#[test]
fn expanding_at_half_delta_maps_straight_up() {
    // φ(δ/2) = 0, so (0, δ/2) ↦ (0, μ·δ/2).
    let b = canonical_expanding();
    let e = b.map.as_expanding().unwrap();
    let torus = b.map.torus().unwrap();
    let p = wrap((0.0, e.phi.delta / 2.0), torus).unwrap();
    let img = b.map.eval(&p);
    let expect = wrap((0.0, e.mu * e.phi.delta / 2.0), torus).unwrap();
    assert!(torus_distance(&img, &expect).unwrap() < 1e-18);
}

#[test]
fn jacobian_matches_finite_differences() {
    for built in [canonical_expanding(), canonical_nonhyp(), canonical_saddle()] {
        let map = &built.map;
        let torus = map.torus().unwrap();
        let side = torus.side();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        // Global samples use a step scaled to the torus; support-box samples
        // a step scaled to the smallest feature (the coordinates there are
        // tiny, so the small step stays well above rounding).
        let mut samples: Vec<(f64, f64, f64)> = (0..500)
            .map(|_| (rng.gen_range(0.0..side), rng.gen_range(0.0..side), 1e-8 * side))
            .collect();
        let sb = map.critical_search_region();
        let h_fine = 2e-4 * map.feature_scale();
        for _ in 0..500 {
            samples.push((
                rng.gen_range(sb.x0..sb.x1),
                rng.gen_range(sb.y0..sb.y1),
                h_fine,
            ));
        }
        for (x, y, h) in samples {
            let j = map.jacobian_at(x, y);
            let fd = |f: &dyn Fn(f64, f64) -> f64, dx: f64, dy: f64| {
                (f(x + h * dx, y + h * dy) - f(x - h * dx, y - h * dy)) / (2.0 * h)
            };
            let f1 = |x: f64, y: f64| map.eval_lift(x, y).0;
            let f2 = |x: f64, y: f64| map.eval_lift(x, y).1;
            for (analytic, numeric) in [
                (j.a, fd(&f1, 1.0, 0.0)),
                (j.b, fd(&f1, 0.0, 1.0)),
                (j.c, fd(&f2, 1.0, 0.0)),
                (j.d, fd(&f2, 0.0, 1.0)),
            ] {
                let scale = analytic.abs().max(1.0);
                assert!(
                    (analytic - numeric).abs() / scale < 1e-5,
                    "{}: at ({x}, {y}): analytic {analytic} vs fd {numeric}",
                    map.name()
                );
            }
        }
    }
}

#[test]
fn determinant_values_of_the_expanding_family() {
    let b = canonical_expanding();
    let e = b.map.as_expanding().unwrap();
    let det_fold = b.map.det_at(0.0, e.phi.delta / 2.0);
    assert!((det_fold + 6.0).abs() < 1e-9, "det = {det_fold}");
    // outside U the determinant is exactly λμ
    let det_out = b.map.det_at(0.4, 0.7);
    assert!((det_out - 6.0).abs() < 1e-12);
}

#[test]
fn critical_set_of_linear_map_is_empty() {
    let map = EndoMap::linear(IntMatrix2::diag(3, 2), Torus::unit());
    let cs = critical_set(&map, 64).unwrap();
    assert!(cs.is_empty());
    assert!(!cs.has_sign_change);
    assert!(cs.min_abs_det > 0.0);
}

#[test]
fn critical_set_resolution_floor() {
    let map = EndoMap::linear(IntMatrix2::diag(3, 2), Torus::unit());
    assert!(critical_set(&map, 32).is_err());
}

#[test]
fn critical_set_of_expanding_family_sits_in_the_bump_box() {
    let b = canonical_expanding();
    let e = b.map.as_expanding().unwrap();
    let cs = critical_set(&b.map, 256).unwrap();
    assert!(!cs.is_empty());
    assert!(cs.has_sign_change);
    for poly in &cs.polylines {
        for &(x, y) in poly {
            assert!(x >= -2.0 * e.theta - 1e-12 && x <= 2.0 * e.theta + 1e-12);
            assert!(y >= 0.0 - 1e-12 && y <= e.phi.delta + 1e-12, "y = {y}");
            let d = b.map.det_at(x, y);
            assert!(d.abs() <= cs.vertex_tolerance, "det {d} vs tol {}", cs.vertex_tolerance);
        }
    }
}

#[test]
fn critical_set_of_fold_chart_is_the_zero_line() {
    let map = EndoMap::fold_chart(Rect::new(-1.0, -1.0, 1.0, 1.0));
    let cs = critical_set(&map, 128).unwrap();
    assert!(!cs.is_empty());
    for poly in &cs.polylines {
        for &(_, y) in poly {
            assert!(y.abs() < 1e-9, "critical vertex off the fold line: y = {y}");
        }
    }
}

#[test]
fn linear_preimages_are_the_lattice_cosets() {
    let map = EndoMap::linear(IntMatrix2::diag(3, 2), Torus::unit());
    let t = wrap((0.0, 0.0), Torus::unit()).unwrap();
    let pres = preimages(&map, &t).unwrap();
    assert_eq!(pres.len(), 6);
    for i in 0..3 {
        for j in 0..2 {
            let expect = wrap((i as f64 / 3.0, j as f64 / 2.0), Torus::unit()).unwrap();
            assert!(
                pres.iter().any(|p| torus_distance(p, &expect).unwrap() < 1e-12),
                "missing coset ({i}, {j})"
            );
        }
    }
}

#[test]
fn saddle_preimages_generic_count_is_two() {
    let b = canonical_saddle();
    let torus = b.map.torus().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let t = wrap((rng.gen(), rng.gen()), torus).unwrap();
        let pres = preimages(&b.map, &t).unwrap();
        assert_eq!(pres.len(), 2, "target ({}, {})", t.x, t.y);
        for p in &pres {
            assert!(torus_distance(&b.map.eval(p), &t).unwrap() < 1e-9);
        }
    }
}

#[test]
fn expanding_preimages_match_brute_force_grid_oracle() {
    // Brute-force 2048² grid inversion as the independent oracle, for a
    // target far from the bump strip (the fiber is then the linear lattice).
    let b = canonical_expanding();
    let torus = b.map.torus().unwrap();
    let t = wrap((0.37, 0.81), torus).unwrap();
    let pres = preimages(&b.map, &t).unwrap();
    assert_eq!(pres.len(), 6);

    let n = 2048usize;
    let cell = 1.0 / n as f64;
    let tol = cell * 4.0;
    let mut hits: Vec<(f64, f64)> = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let p = wrap((i as f64 * cell, j as f64 * cell), torus).unwrap();
            let img = b.map.eval(&p);
            if torus_distance(&img, &t).unwrap() < tol {
                hits.push((p.x, p.y));
            }
        }
    }
    // every brute-force hit must lie near a reported preimage
    for (hx, hy) in hits {
        let hp = wrap((hx, hy), torus).unwrap();
        assert!(
            pres.iter().any(|p| torus_distance(p, &hp).unwrap() < 4.0 * cell),
            "oracle hit ({hx}, {hy}) unexplained"
        );
    }
    // and all six linear-fiber points are reported
    for i in 0..3 {
        for j in 0..2 {
            let expect = wrap(((0.37 + i as f64) / 3.0, (0.81 + j as f64) / 2.0), torus).unwrap();
            assert!(pres.iter().any(|p| torus_distance(p, &expect).unwrap() < 1e-9));
        }
    }
}

#[test]
fn preimage_forward_residuals() {
    for built in [canonical_expanding(), canonical_nonhyp(), canonical_saddle()] {
        let map = &built.map;
        let torus = map.torus().unwrap();
        let det = map.base_matrix().unwrap().det().unsigned_abs() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let t = wrap(
                (rng.gen_range(0.0..torus.side()), rng.gen_range(0.0..torus.side())),
                torus,
            )
            .unwrap();
            let pres = preimages(map, &t).unwrap();
            assert_eq!(pres.len(), det, "{} at ({}, {})", map.name(), t.x, t.y);
            for p in &pres {
                assert!(torus_distance(&map.eval(p), &t).unwrap() < 1e-9);
            }
        }
    }
}

#[test]
fn fixed_points_of_linear_diag() {
    // (A − I) p ∈ ℤ² with A = diag(3, 2): x ∈ {0, 1/2}, y = 0.
    let map = EndoMap::linear(IntMatrix2::diag(3, 2), Torus::unit());
    let fps = fixed_points(&map, 64).unwrap();
    assert_eq!(fps.len(), 2);
    for f in &fps {
        assert_eq!(f.class, FixedPointClass::Repelling);
        assert!(f.y.abs() < 1e-10);
    }
    assert!(fps[0].x.abs() < 1e-10);
    assert!((fps[1].x - 0.5).abs() < 1e-10);
}

#[test]
fn fixed_points_of_the_non_hyperbolic_family() {
    let b = canonical_nonhyp();
    let n = b.map.as_non_hyperbolic().unwrap();
    let torus = b.map.torus().unwrap();
    let fps = fixed_points(&b.map, 128).unwrap();
    // Restrict to the strips: exactly the four isolated points.
    let in_strips: Vec<_> = fps
        .iter()
        .filter(|f| n.in_strip0(f.x) || n.in_strip1(f.x))
        .collect();
    assert_eq!(in_strips.len(), 4, "{:?}", in_strips);

    let q0x = 2.0 / (n.lambda - 1.0);
    let expectations = [
        ((0.0, 0.0), FixedPointClass::Saddle),
        ((0.0, 0.15), FixedPointClass::Repelling),
        ((q0x, 0.3), FixedPointClass::Saddle),
        ((q0x, 1.5), FixedPointClass::Repelling),
    ];
    for ((ex, ey), class) in expectations {
        let expect = wrap((ex, ey), torus).unwrap();
        let found = in_strips
            .iter()
            .find(|f| torus_distance(&f.torus_point(torus), &expect).unwrap() < 1e-8);
        let found = found.unwrap_or_else(|| panic!("missing fixed point ({ex}, {ey})"));
        assert_eq!(found.class, class, "at ({ex}, {ey})");
    }
    // Off the strips, the base matrix leaves whole vertical circles fixed.
    let off_strip: Vec<_> = fps
        .iter()
        .filter(|f| !n.in_strip0(f.x) && !n.in_strip1(f.x))
        .collect();
    assert!(!off_strip.is_empty());
    for f in off_strip {
        assert_eq!(f.class, FixedPointClass::NonHyperbolic);
    }
}

#[test]
fn fixed_points_of_the_fold_chart_are_degenerate_lines() {
    let map = EndoMap::fold_chart(Rect::new(-0.5, -0.5, 1.5, 1.5));
    let fps = fixed_points(&map, 64).unwrap();
    assert!(!fps.is_empty());
    for f in &fps {
        assert!(f.y.abs() < 1e-9 || (f.y - 1.0).abs() < 1e-9, "y = {}", f.y);
        if f.y.abs() < 1e-9 {
            assert!(f.degenerate);
        }
    }
}

#[test]
fn persistence_certificates() {
    let b = canonical_expanding();
    let cert = persistence_certificate(&b.map).unwrap();
    assert!((cert.det_minus + 6.0).abs() < 1e-9);
    assert!((cert.det_plus - 6.0).abs() < 1e-12);
    assert!((cert.margin - 3.0).abs() < 1e-9);
    assert!(cert.jacobian_perturbation_bound > 0.0);

    let s = canonical_saddle();
    let cert = persistence_certificate(&s.map).unwrap();
    let sp = s.map.as_saddle().unwrap();
    let expect = sp.lambda * (sp.mu - (1.0 + sp.theta));
    assert!((cert.det_minus - expect).abs() < 1e-9);
    assert!(cert.det_plus > 0.0);

    let linear = EndoMap::linear(IntMatrix2::diag(3, 2), Torus::unit());
    assert!(matches!(
        persistence_certificate(&linear),
        Err(crate::error::EndoError::NotCertifiable(_))
    ));
}

#[test]
fn homology_action_of_every_family_is_its_base_matrix() {
    for built in [canonical_expanding(), canonical_nonhyp(), canonical_saddle()] {
        let m = built.map.homology_action().unwrap();
        assert_eq!(m, built.map.base_matrix().unwrap());
    }
}

#[test]
fn construction_errors_name_the_inequality() {
    let mut cfg = ExpandingConfig::canonical();
    cfg.r = 1e-4; // 3⁹·4r = 7.9 > 1/2
    match build_expanding(&cfg) {
        Err(crate::error::EndoError::Construction { inequality, .. }) => {
            assert!(inequality.contains("lambda|^9 * 4r"), "{inequality}");
        }
        other => panic!("expected a construction error, got {other:?}"),
    }

    let mut cfg = NonHyperbolicConfig::canonical();
    cfg.lambda = 5;
    assert!(build_non_hyperbolic(&cfg).is_err());

    let mut cfg = SaddleConfig::canonical();
    cfg.matrix = IntMatrix2::diag(3, 2); // expanding, not saddle
    match build_saddle(&cfg) {
        Err(crate::error::EndoError::Construction { inequality, .. }) => {
            assert!(inequality.contains("|lambda| > 1 > |mu|"));
        }
        other => panic!("expected a construction error, got {other:?}"),
    }
}

#[test]
fn perturbation_respects_its_c1_budget() {
    let b = canonical_expanding();
    let size = 1e-3;
    let p = perturb(&b.map, size, 5).unwrap();
    let torus = p.torus().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..2000 {
        let x = rng.gen_range(0.0..torus.side());
        let y = rng.gen_range(0.0..torus.side());
        let (bx, by) = b.map.eval_lift(x, y);
        let (px, py) = p.eval_lift(x, y);
        let dv = (bx - px).hypot(by - py);
        let jb = b.map.jacobian_at(x, y);
        let jp = p.jacobian_at(x, y);
        let dj = (jb.a - jp.a)
            .abs()
            .max((jb.b - jp.b).abs())
            .max((jb.c - jp.c).abs())
            .max((jb.d - jp.d).abs());
        worst = worst.max(dv + dj);
    }
    assert!(worst <= size * (1.0 + 1e-9), "measured {worst}");
    assert!(worst > size * 0.2, "perturbation unexpectedly small: {worst}");
    // homotopy class unchanged
    assert_eq!(p.homology_action().unwrap(), b.map.base_matrix().unwrap());
}

#[test]
fn circle_map_condition_report() {
    let b = canonical_nonhyp();
    let n = b.map.as_non_hyperbolic().unwrap();
    // |h'| ≤ κ < 1 on [0, y0]; |g'| ≤ κ < 1 on [0, g⁻¹(h(0))].
    let kappa_h = n.h.max_deriv_on(0.0, n.h.attracting);
    assert!(kappa_h < 1.0);
    let h0 = n.h.eval(0.0);
    assert!(h0 > 0.0);
    let kappa_g = n.g.max_deriv_on(0.0, n.g.inverse(h0));
    assert!(kappa_g < 1.0);
}
