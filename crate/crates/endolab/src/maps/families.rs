//! Constructors for the three families. Each validates every payload
//! inequality before returning and re-checks the built map (lattice action,
//! off-support identity, annulus avoidance where applicable).

use super::{
    CircleMap, CriticalBump, Domain, EndoMap, ExpandingMap, MapKind, Matrix2, NonHyperbolicMap,
    SaddleMap,
};
use crate::cones::{choose_unstable_params, ConeParams};
use crate::error::{EndoError, Result};
use crate::profiles::{BumpPhi, BumpPsi};
use crate::torus::{torus_distance, wrap_unchecked, IntMatrix2, Torus, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A constructed family member together with its certified cone constants.
#[derive(Debug, Clone)]
pub struct BuiltFamily {
    pub map: EndoMap,
    pub cone: ConeParams,
}

/// Parameters of the expanding construction over a diagonal matrix with
/// |λ| > |μ| > 1.
#[derive(Debug, Clone)]
pub struct ExpandingConfig {
    pub matrix: IntMatrix2,
    pub r: f64,
    /// θ = theta_factor · r; must satisfy 2θ < r/8.
    pub theta_factor: f64,
    pub a: f64,
    pub lambda_prime: f64,
    /// Requested φ width; the cone-parameter selection may shrink it.
    pub delta_request: Option<f64>,
}

impl ExpandingConfig {
    pub fn canonical() -> Self {
        ExpandingConfig {
            matrix: IntMatrix2::diag(3, 2),
            r: 5e-6,
            theta_factor: 0.05,
            a: 0.5,
            lambda_prime: std::f64::consts::SQRT_2,
            delta_request: None,
        }
    }
}

pub fn build_expanding(cfg: &ExpandingConfig) -> Result<BuiltFamily> {
    let torus = Torus::unit();
    let side = torus.side();
    let m = cfg.matrix;
    m.check_family_base()?;
    if m.b != 0 || m.c != 0 {
        return Err(EndoError::Construction {
            inequality: "diagonal base matrix".into(),
            detail: format!("got off-diagonal entries {} and {}", m.b, m.c),
        });
    }
    let lambda = m.a as f64;
    let mu = m.d as f64;
    if !(lambda.abs() > mu.abs() && mu.abs() > 1.0) {
        return Err(EndoError::Construction {
            inequality: "|lambda| > |mu| > 1".into(),
            detail: format!("eigenvalues {lambda}, {mu}"),
        });
    }
    if !(cfg.lambda_prime >= std::f64::consts::SQRT_2 && cfg.lambda_prime < lambda.abs()) {
        return Err(EndoError::Construction {
            inequality: "sqrt(2) <= lambda' < |lambda|".into(),
            detail: format!("lambda' = {}", cfg.lambda_prime),
        });
    }

    // Injectivity radius: A is injective on balls of radius below
    // side·min|A⁻¹k|/2 over nonzero lattice k.
    let delta_a = injectivity_radius(&m, side);
    if !(4.0 * cfg.r < delta_a) {
        return Err(EndoError::Construction {
            inequality: "4r < injectivity radius of A".into(),
            detail: format!("4r = {}, radius = {delta_a}", 4.0 * cfg.r),
        });
    }
    // No iterate of U may wrap during the first nine steps; with the inner
    // radius doubling this forces the annulus-avoidance property.
    let nowrap = lambda.abs().powi(9) * 4.0 * cfg.r;
    if !(nowrap <= side / 2.0) {
        return Err(EndoError::Construction {
            inequality: "|lambda|^9 * 4r <= side/2".into(),
            detail: format!("{nowrap} > {}", side / 2.0),
        });
    }
    let theta = cfg.theta_factor * cfg.r;
    if !(2.0 * theta < cfg.r / 8.0) {
        return Err(EndoError::Construction {
            inequality: "closure of B(0, 2*theta) inside B(0, r/8)".into(),
            detail: format!("2*theta = {}, r/8 = {}", 2.0 * theta, cfg.r / 8.0),
        });
    }

    let psi = BumpPsi::new(theta, 2.0 * mu, 0.0)?;
    let delta_request = cfg.delta_request.unwrap_or(theta / 2.0);
    if !(delta_request < theta) {
        return Err(EndoError::Construction {
            inequality: "delta < theta".into(),
            detail: format!("delta = {delta_request}, theta = {theta}"),
        });
    }
    let cone = choose_unstable_params(lambda, mu, &psi, cfg.a, cfg.lambda_prime, delta_request)?;
    let phi = BumpPhi::new(cone.delta0, 0.0)?;

    let map = EndoMap {
        kind: MapKind::Expanding(ExpandingMap {
            matrix: m,
            lambda,
            mu,
            r: cfg.r,
            theta,
            psi,
            phi,
            plateau: None,
            torus,
        }),
        domain: Domain::Torus(torus),
    };

    verify_lattice_action(&map, &m)?;
    verify_off_support_identity(&map, 2000)?;
    verify_annulus_avoidance_sampled(&map, cfg.r, 10_000)?;
    Ok(BuiltFamily { map, cone })
}

/// Critical ball of the non-hyperbolic family.
#[derive(Debug, Clone, Copy)]
pub struct CriticalBallConfig {
    pub center: (f64, f64),
    pub r: f64,
    /// θ = theta_factor · r.
    pub theta_factor: f64,
}

impl CriticalBallConfig {
    pub fn canonical() -> Self {
        CriticalBallConfig { center: (0.7, 0.1), r: 0.05, theta_factor: 0.25 }
    }
}

/// Parameters of the non-hyperbolic construction over diag(λ, 1), integer
/// λ > 5, on the side-2 torus. Coordinates use the canonical domain [0, 2);
/// published chart values in [−1, 1] are the same numbers mod 2.
#[derive(Debug, Clone)]
pub struct NonHyperbolicConfig {
    pub lambda: i64,
    /// Circle-map displacement amplitude (C¹ distance of g, h to the identity
    /// is of this order).
    pub eta: f64,
    /// Repelling fixed point x₁ of g (the attracting one is 0).
    pub g_repelling: f64,
    /// Fixed points y₀ (attracting) and y₁ (repelling) of h.
    pub h_attracting: f64,
    pub h_repelling: f64,
    pub collar_width: f64,
    pub critical_ball: Option<CriticalBallConfig>,
    pub a: f64,
    pub lambda_prime: f64,
}

impl NonHyperbolicConfig {
    pub fn canonical() -> Self {
        NonHyperbolicConfig {
            lambda: 6,
            eta: 0.02,
            g_repelling: 0.15,
            h_attracting: 0.3,
            h_repelling: 1.5,
            collar_width: 0.04,
            critical_ball: Some(CriticalBallConfig::canonical()),
            a: 0.5,
            lambda_prime: std::f64::consts::SQRT_2,
        }
    }

    /// The intermediate map without critical points (useful in tests).
    pub fn canonical_without_critical_ball() -> Self {
        NonHyperbolicConfig { critical_ball: None, ..Self::canonical() }
    }
}

pub fn build_non_hyperbolic(cfg: &NonHyperbolicConfig) -> Result<BuiltFamily> {
    let torus = Torus::double();
    let side = torus.side();
    if cfg.lambda <= 5 {
        return Err(EndoError::Construction {
            inequality: "integer lambda > 5".into(),
            detail: format!("lambda = {}", cfg.lambda),
        });
    }
    let lambda = cfg.lambda as f64;
    let eps = 1.0 / (100.0 * lambda);
    let halfwidth = 1.0 / (2.0 * lambda) + eps;
    let strip0_center = 0.0;
    let strip1_center = 2.0 / lambda;
    if !(1.0 < cfg.lambda_prime && cfg.lambda_prime < lambda) {
        return Err(EndoError::Construction {
            inequality: "1 < lambda' < lambda".into(),
            detail: format!("lambda' = {}", cfg.lambda_prime),
        });
    }

    // Bands (strip + collar) must be pairwise disjoint on the circle.
    let band = halfwidth + cfg.collar_width;
    let gap = torus.wrap_signed(strip1_center - strip0_center).abs() - 2.0 * band;
    if gap <= 0.0 {
        return Err(EndoError::Construction {
            inequality: "blend collars disjoint from both strips".into(),
            detail: format!("band overlap {gap}"),
        });
    }

    let g = CircleMap::new(side, 0.0, cfg.g_repelling, cfg.eta)?;
    let h = CircleMap::new(side, cfg.h_attracting, cfg.h_repelling, cfg.eta)?;
    g.verify_structure()?;
    h.verify_structure()?;

    // Contraction requirements: |h'| ≤ κ < 1 on [0, y₀] and |g'| ≤ κ < 1 on
    // [0, g⁻¹(h(0))], with h(0) > 0.
    let h0 = h.eval(0.0);
    if !(h0 > 0.0) {
        return Err(EndoError::Construction {
            inequality: "h(0) > 0".into(),
            detail: format!("h(0) = {h0}"),
        });
    }
    let kappa_h = h.max_deriv_on(0.0, cfg.h_attracting);
    if !(kappa_h < 1.0) {
        return Err(EndoError::Construction {
            inequality: "|h'| <= kappa < 1 on [0, y0]".into(),
            detail: format!("max = {kappa_h}"),
        });
    }
    let g_inv_h0 = g.inverse(h0);
    let kappa_g = g.max_deriv_on(0.0, g_inv_h0);
    if !(kappa_g < 1.0) {
        return Err(EndoError::Construction {
            inequality: "|g'| <= kappa < 1 on [0, g^{-1}(h(0))]".into(),
            detail: format!("max = {kappa_g}"),
        });
    }
    // The repeller of g must sit inside the arc (g⁻¹(h(0)), y₀) swept by the
    // h-orbit of 0; this is what lets the accumulated horizontal levels
    // escape past it and fill the vertical circle.
    if !(cfg.g_repelling > g_inv_h0 && cfg.g_repelling < cfg.h_attracting) {
        return Err(EndoError::Construction {
            inequality: "g-repeller inside (g^{-1}(h(0)), y0)".into(),
            detail: format!(
                "x1 = {}, interval = ({g_inv_h0}, {})",
                cfg.g_repelling, cfg.h_attracting
            ),
        });
    }

    // Fixed verticals of the base matrix outside the strips must also avoid
    // the collars, so they stay genuinely linear.
    for k in 0..(cfg.lambda - 1) {
        let x = side * k as f64 / (cfg.lambda - 1) as f64;
        let d0 = torus.wrap_signed(x - strip0_center).abs();
        let d1 = torus.wrap_signed(x - strip1_center).abs();
        let in_band0 = d0 <= band;
        let in_band1 = d1 <= band;
        if (in_band0 && d0 > halfwidth) || (in_band1 && d1 > halfwidth) {
            return Err(EndoError::Construction {
                inequality: "fixed verticals avoid the blend collars".into(),
                detail: format!("x = {x}"),
            });
        }
    }

    let matrix = IntMatrix2::diag(cfg.lambda, 1);
    let (bump, cone) = match cfg.critical_ball {
        None => (
            None,
            ConeParams {
                a0: cfg.a / 2.0,
                delta0: f64::MIN_POSITIVE,
                lambda_prime: cfg.lambda_prime,
                mu1: None,
                m_psi: 0.0,
                lambda_abs: lambda,
                mu_abs: 1.0,
            },
        ),
        Some(ball) => {
            let theta = ball.theta_factor * ball.r;
            let psi = BumpPsi::new(theta, 1.0 + theta, 0.0)?;
            let cone = choose_unstable_params(
                lambda,
                1.0,
                &psi,
                cfg.a,
                cfg.lambda_prime,
                (theta / 2.0).min(2.0 * theta * 0.999),
            )?;
            if !(cone.delta0 < 2.0 * theta && 2.0 * theta < ball.r) {
                return Err(EndoError::Construction {
                    inequality: "delta < 2*theta < r".into(),
                    detail: format!("delta = {}, theta = {theta}, r = {}", cone.delta0, ball.r),
                });
            }
            if !(theta * theta + cone.delta0 * cone.delta0 < ball.r * ball.r) {
                return Err(EndoError::Construction {
                    inequality: "bump support inside B(z0, r)".into(),
                    detail: format!("theta = {theta}, delta = {}", cone.delta0),
                });
            }
            // The ball must sit in the region where the base map is A.
            for (cx, hw) in [(strip0_center, band), (strip1_center, band)] {
                if torus.wrap_signed(ball.center.0 - cx).abs() <= hw + ball.r {
                    return Err(EndoError::Construction {
                        inequality: "critical ball outside strips and collars".into(),
                        detail: format!("ball x = {}", ball.center.0),
                    });
                }
            }
            let phi = BumpPhi::new(cone.delta0, 0.0)?;
            (
                Some(CriticalBump { center: ball.center, r: ball.r, theta, psi, phi }),
                cone,
            )
        }
    };

    let map = EndoMap {
        kind: MapKind::NonHyperbolic(NonHyperbolicMap {
            matrix,
            lambda,
            strip_eps: eps,
            strip_halfwidth: halfwidth,
            strip0_center,
            strip1_center,
            collar_width: cfg.collar_width,
            g,
            h,
            bump,
            torus,
        }),
        domain: Domain::Torus(torus),
    };
    verify_lattice_action(&map, &matrix)?;
    verify_off_support_identity(&map, 2000)?;
    Ok(BuiltFamily { map, cone })
}

/// Parameters of the saddle construction, |λ| > 1 > |μ|, |det| ≥ 2.
#[derive(Debug, Clone)]
pub struct SaddleConfig {
    pub matrix: IntMatrix2,
    pub r: f64,
    /// θ = theta_factor · r with 2θ < r.
    pub theta_factor: f64,
    /// Cone aperture budget (a₁ of the intersection machinery); the family
    /// cone uses a₀ = a₁/2.
    pub a1: f64,
    pub lambda_prime: f64,
    pub mu1: f64,
    pub delta_request: Option<f64>,
}

impl SaddleConfig {
    pub fn canonical() -> Self {
        SaddleConfig {
            matrix: IntMatrix2::new(3, 1, 1, 1),
            r: 0.02,
            theta_factor: 0.25,
            a1: 0.25,
            lambda_prime: std::f64::consts::SQRT_2,
            mu1: 0.7,
            delta_request: None,
        }
    }
}

pub fn build_saddle(cfg: &SaddleConfig) -> Result<BuiltFamily> {
    let torus = Torus::unit();
    let m = cfg.matrix;
    m.check_family_base()?;
    let eig = m.eigen()?;
    if !(eig.lambda.abs() > 1.0 && eig.mu.abs() < 1.0) {
        return Err(EndoError::Construction {
            inequality: "|lambda| > 1 > |mu|".into(),
            detail: format!("eigenvalues {}, {}", eig.lambda, eig.mu),
        });
    }
    if !(1.0 < cfg.lambda_prime && cfg.lambda_prime < eig.lambda.abs()) {
        return Err(EndoError::Construction {
            inequality: "1 < lambda' < |lambda|".into(),
            detail: format!("lambda' = {}", cfg.lambda_prime),
        });
    }
    if !(cfg.mu1 > eig.mu.abs() && cfg.mu1 < 1.0) {
        return Err(EndoError::Construction {
            inequality: "|mu| < mu1 < 1".into(),
            detail: format!("mu1 = {}", cfg.mu1),
        });
    }
    let theta = cfg.theta_factor * cfg.r;
    if !(2.0 * theta < cfg.r) {
        return Err(EndoError::Construction {
            inequality: "2*theta < r".into(),
            detail: format!("theta = {theta}, r = {}", cfg.r),
        });
    }

    // Dual basis to the eigenbasis.
    let p = Matrix2::new(eig.v_lambda.x, eig.v_mu.x, eig.v_lambda.y, eig.v_mu.y);
    let pinv = p.inverse().ok_or_else(|| EndoError::InvalidArgument("degenerate eigenbasis".into()))?;
    let du = Vector2::new(pinv.a, pinv.b);
    let dv = Vector2::new(pinv.c, pinv.d);

    let psi = BumpPsi::new(theta, 1.0 + theta, 0.0)?;
    let delta_request = cfg.delta_request.unwrap_or(theta / 2.0);
    if !(delta_request < 2.0 * theta) {
        return Err(EndoError::Construction {
            inequality: "delta < 2*theta".into(),
            detail: format!("delta = {delta_request}"),
        });
    }
    let mut cone = choose_unstable_params(
        eig.lambda,
        eig.mu,
        &psi,
        cfg.a1,
        cfg.lambda_prime,
        delta_request,
    )?;
    cone.mu1 = Some(cfg.mu1);
    let delta0 = cone.delta0;

    // Bump support (a parallelogram in the eigenbasis) must fit in B(c, r).
    let mut support_radius: f64 = 0.0;
    for (u, v) in [(-theta, 0.0), (theta, 0.0), (-theta, delta0), (theta, delta0)] {
        let corner = Vector2::new(
            u * eig.v_lambda.x + v * eig.v_mu.x,
            u * eig.v_lambda.y + v * eig.v_mu.y,
        );
        support_radius = support_radius.max(corner.norm());
    }
    if !(support_radius < cfg.r) {
        return Err(EndoError::Construction {
            inequality: "bump support inside B(c, r)".into(),
            detail: format!("support radius {support_radius}, r = {}", cfg.r),
        });
    }

    let (center, twin) = find_saddle_center(&m, cfg.r, torus)?;

    let map = EndoMap {
        kind: MapKind::Saddle(SaddleMap {
            matrix: m,
            lambda: eig.lambda,
            mu: eig.mu,
            v_lambda: eig.v_lambda,
            v_mu: eig.v_mu,
            du,
            dv,
            center,
            twin,
            r: cfg.r,
            theta,
            psi,
            phi: BumpPhi::new(delta0, 0.0)?,
            torus,
        }),
        domain: Domain::Torus(torus),
    };
    verify_lattice_action(&map, &m)?;
    verify_off_support_identity(&map, 2000)?;
    Ok(BuiltFamily { map, cone })
}

/// Search a coarse grid for a bump center c with a twin preimage partner:
/// A(c) = A(twin) on the torus, A(c) ≠ c, the 3r-balls around c and twin
/// disjoint, and A(B(c, 3r)) disjoint from B(c, 3r).
fn find_saddle_center(m: &IntMatrix2, r: f64, torus: Torus) -> Result<(crate::torus::TorusPoint, crate::torus::TorusPoint)> {
    let side = torus.side();
    let a = Matrix2::from_int(m);
    let sigma = a.sigma_max();
    let ainv = a.inverse().ok_or_else(|| EndoError::InvalidArgument("singular matrix".into()))?;

    // Kernel cosets of A acting on the torus: offsets κ = A⁻¹k mod side.
    let mut offsets = Vec::new();
    let range = (m.a.abs() + m.b.abs() + m.c.abs() + m.d.abs()).max(2);
    for k1 in -range..=range {
        for k2 in -range..=range {
            let off = ainv.apply(Vector2::new(side * k1 as f64, side * k2 as f64));
            let ox = torus.wrap_coord(off.x);
            let oy = torus.wrap_coord(off.y);
            if ox.hypot(oy) > 1e-9 && (side - ox).hypot(oy) > 1e-9
                && ox.hypot(side - oy) > 1e-9 && (side - ox).hypot(side - oy) > 1e-9
            {
                offsets.push((ox, oy));
            }
        }
    }
    if offsets.is_empty() {
        return Err(EndoError::Construction {
            inequality: "|det A| >= 2 (twin preimage exists)".into(),
            detail: "no nontrivial kernel coset".into(),
        });
    }

    let need = 3.0 * r * (1.0 + sigma);
    let steps = 40;
    for i in 0..steps {
        for j in 0..steps {
            let c = wrap_unchecked(
                side * (i as f64 + 0.5) / steps as f64,
                side * (j as f64 + 0.5) / steps as f64,
                torus,
            );
            let ac = m.apply_point(&c);
            let moved = torus_distance(&ac, &c).unwrap();
            if moved <= need * 1.05 {
                continue;
            }
            for &(ox, oy) in &offsets {
                let twin = wrap_unchecked(c.x + ox, c.y + oy, torus);
                let sep = torus_distance(&twin, &c).unwrap();
                let twin_image = m.apply_point(&twin);
                if sep > 6.0 * r * 1.05 && torus_distance(&twin_image, &ac).unwrap() < 1e-9 {
                    return Ok((c, twin));
                }
            }
        }
    }
    Err(EndoError::Construction {
        inequality: "separated bump center exists".into(),
        detail: format!("no center found for r = {r}"),
    })
}

fn injectivity_radius(m: &IntMatrix2, side: f64) -> f64 {
    let a = Matrix2::from_int(m);
    let inv = match a.inverse() {
        Some(inv) => inv,
        None => return 0.0,
    };
    let mut best = f64::INFINITY;
    for k1 in -3i32..=3 {
        for k2 in -3i32..=3 {
            if k1 == 0 && k2 == 0 {
                continue;
            }
            let v = inv.apply(Vector2::new(side * k1 as f64, side * k2 as f64));
            best = best.min(v.norm());
        }
    }
    best / 2.0
}

/// Path-lifted lattice action must equal the base matrix exactly.
fn verify_lattice_action(map: &EndoMap, expected: &IntMatrix2) -> Result<()> {
    let got = map.homology_action()?;
    if got != *expected {
        return Err(EndoError::InconsistentLift(format!(
            "lattice action {:?} differs from base matrix {:?}",
            got, expected
        )));
    }
    Ok(())
}

/// Sampled check that the map equals its base matrix off the support regions.
fn verify_off_support_identity(map: &EndoMap, samples: usize) -> Result<()> {
    let torus = map.torus().unwrap();
    let m = map.base_matrix().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0x0ff5);
    let mut checked = 0usize;
    while checked < samples {
        let p = wrap_unchecked(
            rng.gen_range(0.0..torus.side()),
            rng.gen_range(0.0..torus.side()),
            torus,
        );
        if !map.is_off_support(&p) {
            continue;
        }
        checked += 1;
        let fp = map.eval(&p);
        let ap = m.apply_point(&p);
        let d = torus_distance(&fp, &ap)?;
        if d > 1e-12 {
            return Err(EndoError::Construction {
                inequality: "f = A off the support".into(),
                detail: format!("distance {d} at ({}, {})", p.x, p.y),
            });
        }
    }
    Ok(())
}

/// Sampled annulus-avoidance verification: points of U\U′ stay out of U′ for
/// nine iterates.
fn verify_annulus_avoidance_sampled(map: &EndoMap, r: f64, samples: usize) -> Result<()> {
    let torus = map.torus().unwrap();
    let origin = wrap_unchecked(0.0, 0.0, torus);
    let mut rng = ChaCha8Rng::seed_from_u64(0xa111);
    for _ in 0..samples {
        let rho = rng.gen_range(3.0 * r..4.0 * r);
        let ang = rng.gen_range(0.0..std::f64::consts::TAU);
        let mut p = wrap_unchecked(rho * ang.cos(), rho * ang.sin(), torus);
        for i in 1..=9 {
            p = map.eval(&p);
            let d = torus_distance(&p, &origin)?;
            if d <= 3.0 * r {
                return Err(EndoError::Construction {
                    inequality: "A^i(U \\ U') disjoint from U' for i = 1..9".into(),
                    detail: format!("violated at iterate {i}, distance {d}"),
                });
            }
        }
    }
    Ok(())
}

impl EndoMap {
    pub fn as_expanding(&self) -> Option<&ExpandingMap> {
        match &self.kind {
            MapKind::Expanding(e) => Some(e),
            _ => None,
        }
    }

    pub fn as_non_hyperbolic(&self) -> Option<&NonHyperbolicMap> {
        match &self.kind {
            MapKind::NonHyperbolic(n) => Some(n),
            _ => None,
        }
    }

    pub fn as_saddle(&self) -> Option<&SaddleMap> {
        match &self.kind {
            MapKind::Saddle(s) => Some(s),
            _ => None,
        }
    }
}
