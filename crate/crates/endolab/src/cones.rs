//! Cone fields: parameter selection from the slope inequality, then grid
//! verification of invariance, expansion and stable-cone contraction with
//! explicit margins and a conservative robustness radius.

use crate::error::{EndoError, Result};
use crate::maps::{perturb, preimages, EndoMap, GridSpec, Matrix2};
use crate::profiles::{BumpPhi, BumpPsi};
use crate::torus::{wrap_unchecked, Vector2};
use rayon::prelude::*;
use serde::Serialize;

/// Orientation of a cone: unstable cones open around the primary axis w,
/// stable cones around its orthogonal complement w⊥. Membership is measured
/// by the component ratio in the (w, w⊥) frame: |c₂/c₁| < a for unstable,
/// |c₁/c₂| < a for stable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConeSense {
    Unstable,
    Stable,
}

/// A constant-aperture cone field.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConeSpec {
    /// Unit primary direction w (the expanding direction of the family).
    pub axis: Vector2,
    pub half_aperture: f64,
    pub sense: ConeSense,
}

impl ConeSpec {
    pub fn new(axis: Vector2, half_aperture: f64, sense: ConeSense) -> Result<Self> {
        if !(half_aperture > 0.0) {
            return Err(EndoError::InvalidArgument(format!(
                "half-aperture must be positive, got {half_aperture}"
            )));
        }
        if axis.norm() < 1e-14 {
            return Err(EndoError::InvalidArgument("zero cone axis".into()));
        }
        Ok(ConeSpec { axis: axis.normalized(), half_aperture, sense })
    }

    pub fn horizontal_unstable(a: f64) -> Self {
        ConeSpec::new(Vector2::new(1.0, 0.0), a, ConeSense::Unstable).unwrap()
    }

    /// Components of v in the (w, w⊥) frame.
    pub fn coords(&self, v: Vector2) -> (f64, f64) {
        (v.dot(self.axis), v.dot(self.axis.perp()))
    }

    /// Slope of v relative to the cone axis (axis-aligned component in the
    /// denominator). Infinite when the denominator vanishes.
    pub fn slope(&self, v: Vector2) -> f64 {
        let (c1, c2) = self.coords(v);
        match self.sense {
            ConeSense::Unstable => (c2 / c1).abs(),
            ConeSense::Stable => (c1 / c2).abs(),
        }
    }

    pub fn contains(&self, v: Vector2) -> bool {
        self.slope(v) < self.half_aperture
    }

    /// The two boundary rays of the cone.
    pub fn boundary_rays(&self) -> [Vector2; 2] {
        let a = self.half_aperture;
        let (e1, e2) = match self.sense {
            ConeSense::Unstable => (self.axis, self.axis.perp()),
            ConeSense::Stable => (self.axis.perp(), self.axis),
        };
        [
            Vector2::new(e1.x + a * e2.x, e1.y + a * e2.y),
            Vector2::new(e1.x - a * e2.x, e1.y - a * e2.y),
        ]
    }

    /// Boundary rays plus `n` interior directions across the closed cone.
    pub fn sample_directions(&self, n: usize) -> Vec<Vector2> {
        let a = self.half_aperture;
        let (e1, e2) = match self.sense {
            ConeSense::Unstable => (self.axis, self.axis.perp()),
            ConeSense::Stable => (self.axis.perp(), self.axis),
        };
        let mut dirs = Vec::with_capacity(n + 2);
        for i in 0..=(n + 1) {
            let t = -a + 2.0 * a * i as f64 / (n + 1) as f64;
            dirs.push(Vector2::new(e1.x + t * e2.x, e1.y + t * e2.y).normalized());
        }
        dirs
    }
}

/// Certified cone constants for a family: aperture a₀, bump width δ₀ chosen
/// so that M·δ₀/|λ| + |μ|·a₀/|λ| < a₀ with at least 50% slack, the expansion
/// constant λ′, and the stable constant μ₁ for the saddle case.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConeParams {
    pub a0: f64,
    pub delta0: f64,
    pub lambda_prime: f64,
    pub mu1: Option<f64>,
    /// max |ψ′| entering the selection inequality.
    pub m_psi: f64,
    pub lambda_abs: f64,
    pub mu_abs: f64,
}

impl ConeParams {
    /// Left-hand side of the slope inequality M·δ₀/|λ| + |μ|·a₀/|λ|.
    pub fn inequality_lhs(&self) -> f64 {
        self.m_psi * self.delta0 / self.lambda_abs + self.mu_abs * self.a0 / self.lambda_abs
    }

    pub fn inequality_holds(&self) -> bool {
        self.inequality_lhs() < self.a0
    }

    /// Fraction of the headroom a₀(|λ|−|μ|)/|λ| left unused by the M·δ₀ term.
    pub fn slack_fraction(&self) -> f64 {
        let headroom = self.a0 * (self.lambda_abs - self.mu_abs) / self.lambda_abs;
        if headroom <= 0.0 {
            return 0.0;
        }
        1.0 - (self.m_psi * self.delta0 / self.lambda_abs) / headroom
    }
}

/// Pick (a₀, δ₀) for the bump family with Jacobian
/// [[λ, 0], [−ψ′(x)φ(y), μ − ψ(x)φ′(y)]] (written in the frame that
/// diagonalizes the base matrix): a₀ = a/2, δ₀ from the slope inequality with
/// a 50% safety factor, then halved until the sampled expansion ratio over
/// cone directions exceeds λ′.
pub fn choose_unstable_params(
    lambda: f64,
    mu: f64,
    psi: &BumpPsi,
    a: f64,
    lambda_prime: f64,
    delta_request: f64,
) -> Result<ConeParams> {
    if !(lambda.abs() > mu.abs()) {
        return Err(EndoError::InvalidArgument(format!(
            "need |lambda| > |mu|, got {lambda}, {mu}"
        )));
    }
    if !(lambda_prime > 1.0 && lambda_prime < lambda.abs()) {
        return Err(EndoError::InvalidArgument(format!(
            "need 1 < lambda' < |lambda|, got {lambda_prime}"
        )));
    }
    if !(a > 0.0 && delta_request > 0.0) {
        return Err(EndoError::InvalidArgument("need a > 0 and delta > 0".into()));
    }
    let a0 = a / 2.0;
    let m_psi = psi.max_abs_deriv(100_000);

    // The verified slope bound needs sup|μ − ψφ′| < |λ|; with the spike
    // profile the sup is |μ| + height·well_depth.
    let worst_vertical = mu.abs() + psi.height.abs() * BumpPhi::DEFAULT_SPIKE_FRAC * 2.0
        / (1.0 - 2.0 * BumpPhi::DEFAULT_SPIKE_FRAC);
    if worst_vertical >= lambda.abs() {
        return Err(EndoError::InfeasibleParameters(format!(
            "sup|mu - psi*phi'| = {worst_vertical} >= |lambda| = {}",
            lambda.abs()
        )));
    }

    let mut delta0 = if m_psi > 0.0 {
        delta_request.min(0.499 * a0 * (lambda.abs() - mu.abs()) / m_psi)
    } else {
        delta_request
    };

    for _ in 0..1100 {
        if delta0 < 1e-300 {
            return Err(EndoError::InfeasibleParameters(format!(
                "no delta0 above 1e-300 achieves expansion ratio {lambda_prime} (lambda' too close to |lambda|)"
            )));
        }
        if sampled_expansion_ok(lambda, mu, psi, delta0, a0, lambda_prime) {
            break;
        }
        delta0 /= 2.0;
    }

    Ok(ConeParams {
        a0,
        delta0,
        lambda_prime,
        mu1: None,
        m_psi,
        lambda_abs: lambda.abs(),
        mu_abs: mu.abs(),
    })
}

fn sampled_expansion_ok(
    lambda: f64,
    mu: f64,
    psi: &BumpPsi,
    delta0: f64,
    a0: f64,
    lambda_prime: f64,
) -> bool {
    let phi = match BumpPhi::new(delta0, 0.0) {
        Ok(p) => p,
        Err(_) => return false,
    };
    let n = 128;
    let cone = ConeSpec::horizontal_unstable(a0);
    let dirs = cone.sample_directions(14);
    for i in 0..=n {
        let x = psi.center - psi.theta + 2.0 * psi.theta * i as f64 / n as f64;
        for j in 0..=n {
            let y = delta0 * j as f64 / n as f64;
            let jac = Matrix2::new(
                lambda,
                0.0,
                -psi.deriv(x) * phi.eval(y),
                mu - psi.eval(x) * phi.deriv(y),
            );
            for v in &dirs {
                let u = jac.apply(*v);
                if u.norm() / v.norm() <= lambda_prime {
                    return false;
                }
            }
        }
    }
    true
}

/// Worst-case margins of a cone verification over one or more grids.
#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub label: String,
    pub grids: Vec<(usize, usize)>,
    /// a₀ − worst image slope, minus the grid Lipschitz budget.
    pub invariance_margin: f64,
    pub invariance_margin_raw: f64,
    /// min over grid and cone directions of |Df v|/|v|, minus the budget.
    pub expansion_ratio: f64,
    pub expansion_ratio_raw: f64,
    pub worst_point: (f64, f64),
    pub lipschitz_budget: f64,
    pub required_ratio: f64,
    pub a0: f64,
    pub pass: bool,
    /// Conservative C¹ perturbation radius keeping both margins positive;
    /// filled by [`robustness_margin`].
    pub robustness_radius: Option<f64>,
    /// Stable-cone verification only: branch points skipped because they fell
    /// inside the excluded ball.
    pub skipped_branches: usize,
}

impl VerificationReport {
    fn passes(&self) -> bool {
        self.invariance_margin > 0.0 && self.expansion_ratio >= self.required_ratio
    }
}

/// Verify unstable-cone invariance and expansion over the given grids.
///
/// Invariance is tested on the two boundary rays only: the image slope bound
/// is monotone in |v₂/v₁|, so the boundary dominates the open cone. Expansion
/// additionally samples 16 interior directions.
pub fn verify_unstable_cones(
    map: &EndoMap,
    cone: &ConeSpec,
    lambda_prime: f64,
    grids: &[GridSpec],
) -> Result<VerificationReport> {
    if cone.sense != ConeSense::Unstable {
        return Err(EndoError::InvalidArgument("expected an unstable cone".into()));
    }
    let a0 = cone.half_aperture;
    let dirs = cone.sample_directions(14);
    let rays = cone.boundary_rays();

    let mut worst_slope = f64::NEG_INFINITY;
    let mut worst_ratio = f64::INFINITY;
    let mut worst_point = (0.0, 0.0);
    let mut grid_list = Vec::new();
    let mut budget: f64 = 0.0;

    for spec in grids {
        grid_list.push((spec.resolution, spec.resolution));
        let res = spec.resolution;
        let cell_w = spec.region.width() / res as f64;
        let cell_h = spec.region.height() / res as f64;

        let rows: Vec<(f64, f64, (f64, f64))> = (0..res)
            .into_par_iter()
            .map(|j| {
                let y = spec.region.y0 + (j as f64 + 0.5) * cell_h;
                let mut row_slope = f64::NEG_INFINITY;
                let mut row_ratio = f64::INFINITY;
                let mut row_worst = (0.0, 0.0);
                for i in 0..res {
                    let x = spec.region.x0 + (i as f64 + 0.5) * cell_w;
                    let jac = map.jacobian_at(x, y);
                    for v in rays.iter() {
                        let u = jac.apply(*v);
                        let s = cone.slope(u);
                        if s > row_slope {
                            row_slope = s;
                            row_worst = (x, y);
                        }
                    }
                    for v in dirs.iter() {
                        let u = jac.apply(*v);
                        let r = u.norm() / v.norm();
                        if r < row_ratio {
                            row_ratio = r;
                            if a0 - row_slope > row_ratio - lambda_prime {
                                row_worst = (x, y);
                            }
                        }
                    }
                }
                (row_slope, row_ratio, row_worst)
            })
            .collect();
        for (s, r, w) in rows {
            if s > worst_slope || r < worst_ratio {
                worst_point = w;
            }
            worst_slope = worst_slope.max(s);
            worst_ratio = worst_ratio.min(r);
        }
        if !worst_slope.is_finite() {
            return Err(EndoError::GeometryViolated(format!(
                "cone degenerate: image ray left the half-plane near {:?}",
                worst_point
            )));
        }
        budget = budget.max(slope_lipschitz_budget(map, cone, spec, cell_w, cell_h));
    }

    let inv_raw = a0 - worst_slope;
    let report = VerificationReport {
        label: format!("unstable cones of {}", map.name()),
        grids: grid_list,
        invariance_margin: inv_raw - budget,
        invariance_margin_raw: inv_raw,
        expansion_ratio: worst_ratio - budget,
        expansion_ratio_raw: worst_ratio,
        worst_point,
        lipschitz_budget: budget,
        required_ratio: lambda_prime,
        a0,
        pass: false,
        robustness_radius: None,
        skipped_branches: 0,
    };
    Ok(VerificationReport { pass: report.passes(), ..report })
}

/// Estimate the per-cell variation of the image-slope field on a coarse
/// subgrid: max finite difference between neighbouring main-grid cells.
fn slope_lipschitz_budget(
    map: &EndoMap,
    cone: &ConeSpec,
    spec: &GridSpec,
    cell_w: f64,
    cell_h: f64,
) -> f64 {
    let sub = 64usize;
    let rays = cone.boundary_rays();
    let slope_at = |x: f64, y: f64| -> f64 {
        let jac = map.jacobian_at(x, y);
        rays.iter().map(|v| cone.slope(jac.apply(*v))).fold(f64::NEG_INFINITY, f64::max)
    };
    let mut worst: f64 = 0.0;
    for j in 0..sub {
        let y = spec.region.y0 + (j as f64 + 0.5) / sub as f64 * spec.region.height();
        for i in 0..sub {
            let x = spec.region.x0 + (i as f64 + 0.5) / sub as f64 * spec.region.width();
            let s = slope_at(x, y);
            let sx = slope_at(x + cell_w, y);
            let sy = slope_at(x, y + cell_h);
            if s.is_finite() && sx.is_finite() && sy.is_finite() {
                worst = worst.max((sx - s).abs()).max((sy - s).abs());
            }
        }
    }
    worst
}

/// Verify stable-cone invariance and inverse growth for the saddle family.
///
/// Grid points q outside B(c, r) are pulled back through every preimage
/// branch whose branch point also lies outside the ball (there the map equals
/// its base matrix, so the branch derivative is exactly A⁻¹); branch points
/// inside the ball are skipped and counted.
pub fn verify_stable_cones(
    map: &EndoMap,
    cone: &ConeSpec,
    mu1: f64,
    resolution: usize,
) -> Result<VerificationReport> {
    if cone.sense != ConeSense::Stable {
        return Err(EndoError::InvalidArgument("expected a stable cone".into()));
    }
    let saddle = map
        .as_saddle()
        .ok_or_else(|| EndoError::Unsupported("stable cones are verified on the saddle family".into()))?;
    let torus = map.torus().unwrap();
    let side = torus.side();
    let a0 = cone.half_aperture;
    let required = 1.0 / mu1;
    let dirs = cone.sample_directions(14);
    let rays = cone.boundary_rays();

    let rows: Vec<(f64, f64, (f64, f64), usize)> = (0..resolution)
        .into_par_iter()
        .map(|j| {
            let y = side * (j as f64 + 0.5) / resolution as f64;
            let mut row_slope = f64::NEG_INFINITY;
            let mut row_ratio = f64::INFINITY;
            let mut row_worst = (0.0, 0.0);
            let mut skipped = 0usize;
            for i in 0..resolution {
                let x = side * (i as f64 + 0.5) / resolution as f64;
                let q = wrap_unchecked(x, y, torus);
                let dq = crate::torus::torus_distance(&q, &saddle.center).unwrap();
                if dq <= saddle.r {
                    continue;
                }
                let branches = match preimages(map, &q) {
                    Ok(b) => b,
                    Err(_) => continue,
                };
                for p in branches {
                    let dp = crate::torus::torus_distance(&p, &saddle.center).unwrap();
                    if dp <= saddle.r {
                        skipped += 1;
                        continue;
                    }
                    let jac = map.jacobian_at(p.x, p.y);
                    let binv = match jac.inverse() {
                        Some(b) => b,
                        None => {
                            skipped += 1;
                            continue;
                        }
                    };
                    for v in rays.iter() {
                        let u = binv.apply(*v);
                        let s = cone.slope(u);
                        if s > row_slope {
                            row_slope = s;
                            row_worst = (x, y);
                        }
                    }
                    for v in dirs.iter() {
                        let u = binv.apply(*v);
                        let r = u.norm() / v.norm();
                        if r < row_ratio {
                            row_ratio = r;
                        }
                    }
                }
            }
            (row_slope, row_ratio, row_worst, skipped)
        })
        .collect();

    let mut worst_slope = f64::NEG_INFINITY;
    let mut worst_ratio = f64::INFINITY;
    let mut worst_point = (0.0, 0.0);
    let mut skipped = 0usize;
    for (s, r, w, k) in rows {
        if s > worst_slope {
            worst_point = w;
        }
        worst_slope = worst_slope.max(s);
        worst_ratio = worst_ratio.min(r);
        skipped += k;
    }

    let report = VerificationReport {
        label: format!("stable cones of {}", map.name()),
        grids: vec![(resolution, resolution)],
        invariance_margin: a0 - worst_slope,
        invariance_margin_raw: a0 - worst_slope,
        expansion_ratio: worst_ratio,
        expansion_ratio_raw: worst_ratio,
        worst_point,
        lipschitz_budget: 0.0,
        required_ratio: required,
        a0,
        pass: false,
        robustness_radius: None,
        skipped_branches: skipped,
    };
    Ok(VerificationReport { pass: report.passes(), ..report })
}

/// Conservative C¹ robustness radius ρ for a passed report:
/// ρ = min(margins)/(2(1 + a₀ + sup‖Df‖)), then validated by re-running the
/// checks on 8 randomly perturbed maps of size ρ/2.
pub fn robustness_margin(
    report: &VerificationReport,
    map: &EndoMap,
    cone: &ConeSpec,
    grids: &[GridSpec],
) -> Result<f64> {
    if !report.pass {
        return Err(EndoError::NoMargin);
    }
    let df_sup = sup_jacobian_norm(map);
    let margin = report
        .invariance_margin
        .min(report.expansion_ratio - report.required_ratio);
    let mut rho = margin / (2.0 * (1.0 + report.a0 + df_sup));

    for _attempt in 0..3 {
        let mut all_pass = true;
        for seed in 0..8u64 {
            let perturbed = perturb(map, rho / 2.0, seed)?;
            let rep = verify_unstable_cones(&perturbed, cone, report.required_ratio, grids)?;
            if !rep.pass {
                all_pass = false;
                break;
            }
        }
        if all_pass {
            return Ok(rho);
        }
        rho /= 2.0;
    }
    Err(EndoError::NoMargin)
}

/// sup of the Jacobian Frobenius norm, sampled globally plus on the support
/// regions.
pub fn sup_jacobian_norm(map: &EndoMap) -> f64 {
    let mut sup: f64 = 0.0;
    if let Some(torus) = map.torus() {
        let side = torus.side();
        let n = 64;
        for j in 0..n {
            for i in 0..n {
                let x = side * (i as f64 + 0.5) / n as f64;
                let y = side * (j as f64 + 0.5) / n as f64;
                sup = sup.max(map.jacobian_at(x, y).frobenius());
            }
        }
    }
    for spec in family_grids(map, 128, 0) {
        let n = 128;
        for j in 0..n {
            for i in 0..n {
                let x = spec.region.x0 + (i as f64 + 0.5) / n as f64 * spec.region.width();
                let y = spec.region.y0 + (j as f64 + 0.5) / n as f64 * spec.region.height();
                sup = sup.max(map.jacobian_at(x, y).frobenius());
            }
        }
    }
    sup
}

/// The default verification grids for a family: a fine grid on the bump
/// support box (the only region where the Jacobian varies for the
/// expanding/saddle families), per-band grids for the non-hyperbolic strips
/// and collars, plus a global sweep (resolution 0 skips the global grid).
/// Enclosing balls are deliberately not gridded: away from the support
/// rectangle the map is exactly linear, while a uniform ball grid cannot
/// resolve the far smaller bump.
pub fn family_grids(map: &EndoMap, support_res: usize, global_res: usize) -> Vec<GridSpec> {
    let mut grids = Vec::new();
    if let Some(torus) = map.torus() {
        let side = torus.side();
        for region in map.nonlinear_regions() {
            if let crate::maps::NonlinearRegion::XBand { center, halfwidth } = region {
                grids.push(GridSpec {
                    region: crate::maps::Rect::new(
                        center - 1.1 * halfwidth,
                        0.0,
                        center + 1.1 * halfwidth,
                        side,
                    ),
                    resolution: support_res,
                });
            }
        }
        let sb = map.critical_search_region();
        if sb.width() < side {
            grids.push(GridSpec { region: sb, resolution: support_res });
        }
        if global_res > 0 {
            grids.push(GridSpec {
                region: crate::maps::Rect::new(0.0, 0.0, side, side),
                resolution: global_res,
            });
        }
    } else if let Some(chart) = map.chart() {
        grids.push(GridSpec { region: chart, resolution: support_res.max(global_res) });
    }
    grids
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{
        build_expanding, build_non_hyperbolic, build_saddle, EndoMap, ExpandingConfig,
        NonHyperbolicConfig, SaddleConfig,
    };
    use crate::torus::{IntMatrix2, Torus};

    fn linear_map(a: i64, b: i64, c: i64, d: i64) -> EndoMap {
        EndoMap::linear(IntMatrix2::new(a, b, c, d), Torus::unit())
    }

    fn global_grid(map: &EndoMap, res: usize) -> Vec<GridSpec> {
        let side = map.torus().unwrap().side();
        vec![GridSpec { region: crate::maps::Rect::new(0.0, 0.0, side, side), resolution: res }]
    }

    #[test]
    fn chosen_params_satisfy_the_slope_inequality_with_slack() {
        for built in [
            build_expanding(&ExpandingConfig::canonical()).unwrap(),
            build_non_hyperbolic(&NonHyperbolicConfig::canonical()).unwrap(),
            build_saddle(&SaddleConfig::canonical()).unwrap(),
        ] {
            let c = built.cone;
            assert!(c.inequality_holds(), "{}", built.map.name());
            assert!(c.slack_fraction() >= 0.5, "{}: slack {}", built.map.name(), c.slack_fraction());
        }
    }

    #[test]
    fn param_selection_matches_the_rearranged_inequality() {
        // a₀ = a/2 and δ₀ ≤ ½·a₀(|λ|−|μ|)/M.
        let psi = crate::profiles::BumpPsi::new(0.1, 4.0, 0.0).unwrap();
        let p = choose_unstable_params(3.0, 2.0, &psi, 0.5, std::f64::consts::SQRT_2, 0.05).unwrap();
        assert_eq!(p.a0, 0.25);
        assert!(p.delta0 <= 0.125 / p.m_psi + 1e-18);
        assert!(p.delta0 > 0.0);
    }

    #[test]
    fn infeasible_lambda_prime_is_rejected() {
        let psi = crate::profiles::BumpPsi::new(0.1, 4.0, 0.0).unwrap();
        assert!(choose_unstable_params(3.0, 2.0, &psi, 0.5, 3.0, 0.05).is_err());
        assert!(choose_unstable_params(3.0, 2.0, &psi, 0.5, 0.9, 0.05).is_err());
    }

    #[test]
    fn linear_invariance_margin_is_exact() {
        // Slopes multiply by μ/λ = 2/3, so the margin is a₀(1 − 2/3).
        let map = linear_map(3, 0, 0, 2);
        let cone = ConeSpec::horizontal_unstable(0.25);
        let rep = verify_unstable_cones(&map, &cone, std::f64::consts::SQRT_2, &global_grid(&map, 128)).unwrap();
        assert!(rep.pass);
        assert!((rep.invariance_margin_raw - 0.25 / 3.0).abs() < 1e-12);
        assert!(rep.lipschitz_budget < 1e-12);
        // expansion on near-horizontal vectors is at least 3/√(1+a0²)
        assert!(rep.expansion_ratio_raw >= 3.0 / (1.0 + 0.0625f64).sqrt() - 1e-9);
    }

    #[test]
    fn axis_swap_breaks_invariance() {
        let map = linear_map(0, 1, 1, 0);
        let cone = ConeSpec::horizontal_unstable(0.25);
        let rep = verify_unstable_cones(&map, &cone, 1.0000001, &global_grid(&map, 64));
        match rep {
            Ok(r) => assert!(!r.pass),
            Err(EndoError::GeometryViolated(_)) => {}
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn overlarge_lambda_prime_fails_expansion() {
        let map = linear_map(3, 0, 0, 2);
        let cone = ConeSpec::horizontal_unstable(0.25);
        let rep = verify_unstable_cones(&map, &cone, 3.5, &global_grid(&map, 64)).unwrap();
        assert!(!rep.pass);
        assert!(rep.expansion_ratio_raw < 3.5);
        assert!(rep.expansion_ratio_raw > 2.8);
    }

    #[test]
    fn expanding_family_cones_verify_on_support_and_global_grids() {
        let built = build_expanding(&ExpandingConfig::canonical()).unwrap();
        let cone = ConeSpec::horizontal_unstable(built.cone.a0);
        let grids = family_grids(&built.map, 512, 128);
        let rep = verify_unstable_cones(&built.map, &cone, built.cone.lambda_prime, &grids).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert!(rep.invariance_margin > 0.0);
        assert!(rep.expansion_ratio >= std::f64::consts::SQRT_2);
    }

    #[test]
    fn grid_refinement_does_not_flip_pass() {
        let built = build_expanding(&ExpandingConfig::canonical()).unwrap();
        let cone = ConeSpec::horizontal_unstable(built.cone.a0);
        let coarse = verify_unstable_cones(
            &built.map,
            &cone,
            built.cone.lambda_prime,
            &family_grids(&built.map, 512, 0),
        )
        .unwrap();
        assert!(coarse.pass, "{coarse:?}");
        let fine = verify_unstable_cones(
            &built.map,
            &cone,
            built.cone.lambda_prime,
            &family_grids(&built.map, 2048, 0),
        )
        .unwrap();
        assert!(fine.pass, "{fine:?}");
    }

    #[test]
    fn saddle_family_cones_verify_in_the_eigenframe() {
        let built = build_saddle(&SaddleConfig::canonical()).unwrap();
        let s = built.map.as_saddle().unwrap();
        let cone = ConeSpec::new(s.v_lambda, built.cone.a0, ConeSense::Unstable).unwrap();
        let grids = family_grids(&built.map, 512, 128);
        let rep = verify_unstable_cones(&built.map, &cone, built.cone.lambda_prime, &grids).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn stable_cones_of_the_saddle_reduce_to_exact_linear_algebra() {
        let built = build_saddle(&SaddleConfig::canonical()).unwrap();
        let s = built.map.as_saddle().unwrap();
        let cone = ConeSpec::new(s.v_lambda, built.cone.a0, ConeSense::Stable).unwrap();
        let rep = verify_stable_cones(&built.map, &cone, 0.7, 96).unwrap();
        assert!(rep.pass, "{rep:?}");
        // growth is exactly 1/μ on the axis; over the cone at least
        // (1/μ)/√(1+a0²), far above 1/0.7
        let mu = 2.0 - 2.0f64.sqrt();
        let axis_growth = 1.0 / mu;
        assert!(rep.expansion_ratio_raw <= axis_growth + 1e-10);
        assert!(
            rep.expansion_ratio_raw
                >= axis_growth / (1.0 + built.cone.a0 * built.cone.a0).sqrt() - 1e-10
        );
        // invariance: slopes contract by μ/λ exactly
        let expected_margin = built.cone.a0 * (1.0 - mu / (2.0 + 2.0f64.sqrt()));
        assert!((rep.invariance_margin_raw - expected_margin).abs() < 1e-10);

        // weaker requirement passes with a bigger margin
        let rep99 = verify_stable_cones(&built.map, &cone, 0.99, 64).unwrap();
        assert!(rep99.pass);
        assert!(rep99.expansion_ratio - 1.0 / 0.99 > rep.expansion_ratio - 1.0 / 0.7);

        // a cone around the unstable direction contracts under the inverse
        let wrong = ConeSpec::new(s.v_mu, built.cone.a0, ConeSense::Stable).unwrap();
        let bad = verify_stable_cones(&built.map, &wrong, 0.7, 64).unwrap();
        assert!(!bad.pass);
    }

    #[test]
    fn robustness_margin_matches_the_formula_and_survives_perturbations() {
        let map = linear_map(3, 0, 0, 2);
        let cone = ConeSpec::horizontal_unstable(0.25);
        let grids = global_grid(&map, 128);
        let rep = verify_unstable_cones(&map, &cone, std::f64::consts::SQRT_2, &grids).unwrap();
        let rho = robustness_margin(&rep, &map, &cone, &grids).unwrap();
        let df = sup_jacobian_norm(&map);
        let expect = rep.invariance_margin.min(rep.expansion_ratio - rep.required_ratio)
            / (2.0 * (1.0 + 0.25 + df));
        assert!((rho - expect).abs() < 1e-12 || rho <= expect);
        assert!(rho > 0.0);
    }

    #[test]
    fn failed_report_gives_no_margin() {
        let map = linear_map(3, 0, 0, 2);
        let cone = ConeSpec::horizontal_unstable(0.25);
        let grids = global_grid(&map, 64);
        let rep = verify_unstable_cones(&map, &cone, 3.5, &grids).unwrap();
        assert!(matches!(
            robustness_margin(&rep, &map, &cone, &grids),
            Err(EndoError::NoMargin)
        ));
    }
}
