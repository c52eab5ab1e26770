//! Transitivity evidence: backward-orbit trees with ε-coverage statistics,
//! forward-orbit density, exact covering exponents for expanding integer
//! matrices, and the saddle-case intersection machinery.

pub mod experiment;
pub mod saddle;

pub use experiment::{manifold_density, transitivity_experiment, ManifoldKind, TransitivityOutcome};
pub use saddle::{
    intersection_constants, inverse_branch_avoiding, revalidate_intersection_constants,
    stable_segment_family, IntersectionConstants, StableSegmentFamily,
};

use crate::error::{EndoError, Result};
use crate::maps::{preimages, EndoMap, Matrix2};
use crate::torus::{torus_distance, wrap_unchecked, IntMatrix2, Torus, TorusPoint, Vector2};
use serde::Serialize;

/// ε-coverage of a point set against a fixed reference grid.
#[derive(Debug, Clone, Serialize)]
pub struct DensityReport {
    pub eps: f64,
    pub grid_res: usize,
    /// Fraction of grid cells whose center lies within ε of the set.
    pub fraction: f64,
    pub max_empty_cell_distance: f64,
    pub samples: usize,
    /// Budget (node cap / iteration cap) was exhausted before the statistic
    /// stabilized; evidence, not refutation.
    pub inconclusive: bool,
}

impl DensityReport {
    pub fn dense(&self) -> bool {
        self.fraction >= 1.0
    }
}

/// Bucketed nearest-neighbour structure on the torus.
pub struct PointCloud {
    torus: Torus,
    cell: f64,
    n: usize,
    buckets: Vec<Vec<Vector2>>,
    pub len: usize,
}

impl PointCloud {
    pub fn new(torus: Torus, cell_hint: f64) -> Self {
        let n = ((torus.side() / cell_hint).ceil() as usize).clamp(8, 512);
        PointCloud {
            torus,
            cell: torus.side() / n as f64,
            n,
            buckets: vec![Vec::new(); n * n],
            len: 0,
        }
    }

    pub fn insert(&mut self, p: &TorusPoint) {
        let i = ((p.x / self.cell) as usize).min(self.n - 1);
        let j = ((p.y / self.cell) as usize).min(self.n - 1);
        self.buckets[j * self.n + i].push(Vector2::new(p.x, p.y));
        self.len += 1;
    }

    /// Distance from (x, y) to the nearest stored point.
    pub fn nearest_distance(&self, x: f64, y: f64) -> f64 {
        if self.len == 0 {
            return f64::INFINITY;
        }
        let ci = ((x / self.cell) as usize).min(self.n - 1) as i64;
        let cj = ((y / self.cell) as usize).min(self.n - 1) as i64;
        let mut best = f64::INFINITY;
        let max_ring = self.n as i64;
        for ring in 0..=max_ring {
            if best.is_finite() && (ring - 1) as f64 * self.cell > best {
                break;
            }
            for dj in -ring..=ring {
                for di in -ring..=ring {
                    if di.abs() != ring && dj.abs() != ring {
                        continue;
                    }
                    let ii = (ci + di).rem_euclid(self.n as i64) as usize;
                    let jj = (cj + dj).rem_euclid(self.n as i64) as usize;
                    for q in &self.buckets[jj * self.n + ii] {
                        let dx = self.torus.wrap_signed(q.x - x);
                        let dy = self.torus.wrap_signed(q.y - y);
                        best = best.min(dx.hypot(dy));
                    }
                }
            }
        }
        best
    }
}

/// Coverage of a point cloud against the reference grid.
pub fn density_report(cloud: &PointCloud, eps: f64, grid_res: usize) -> DensityReport {
    let side = cloud.torus.side();
    let mut hit = 0usize;
    let mut max_empty: f64 = 0.0;
    for j in 0..grid_res {
        for i in 0..grid_res {
            let x = side * (i as f64 + 0.5) / grid_res as f64;
            let y = side * (j as f64 + 0.5) / grid_res as f64;
            let d = cloud.nearest_distance(x, y);
            if d <= eps {
                hit += 1;
            }
            max_empty = max_empty.max(d);
        }
    }
    DensityReport {
        eps,
        grid_res,
        fraction: hit as f64 / (grid_res * grid_res) as f64,
        max_empty_cell_distance: max_empty,
        samples: cloud.len,
        inconclusive: false,
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TreeNode {
    pub point: TorusPoint,
    pub depth: usize,
    pub parent: Option<usize>,
    /// Forward-check residual torus_distance(eval(point), parent).
    pub residual: f64,
}

/// Breadth-first backward-orbit tree with cell-novelty pruning.
#[derive(Debug, Clone, Serialize)]
pub struct InverseBranchTree {
    pub root: TorusPoint,
    pub nodes: Vec<TreeNode>,
    pub depth_limit: usize,
    pub capped: bool,
}

impl InverseBranchTree {
    /// Every non-root node forward-maps onto its parent within 1e-9.
    pub fn max_residual(&self) -> f64 {
        self.nodes.iter().map(|n| n.residual).fold(0.0, f64::max)
    }
}

/// Build the preimage tree of `target` up to `depth`, keeping a node only if
/// its cell on a fine novelty grid has not been hit yet (backward branches of
/// the families contract, so a pruned node's descendants stay within the cell
/// blur of the kept representative's descendants).
pub fn preorbit_tree(
    map: &EndoMap,
    target: &TorusPoint,
    depth: usize,
    novelty_res: usize,
    node_cap: usize,
) -> Result<InverseBranchTree> {
    let torus = map.torus().ok_or_else(|| {
        EndoError::Unsupported("preorbit trees require a torus map".into())
    })?;
    let side = torus.side();
    let cell = side / novelty_res as f64;
    let mut seen = vec![false; novelty_res * novelty_res];
    let mut mark = |p: &TorusPoint| -> bool {
        let i = ((p.x / cell) as usize).min(novelty_res - 1);
        let j = ((p.y / cell) as usize).min(novelty_res - 1);
        let idx = j * novelty_res + i;
        let novel = !seen[idx];
        seen[idx] = true;
        novel
    };

    let mut nodes = vec![TreeNode { point: *target, depth: 0, parent: None, residual: 0.0 }];
    mark(target);
    let mut frontier: Vec<usize> = vec![0];
    let mut capped = false;

    for d in 1..=depth {
        let mut next = Vec::new();
        for &idx in &frontier {
            let parent_point = nodes[idx].point;
            let pres = preimages(map, &parent_point)?;
            for p in pres {
                if nodes.len() >= node_cap {
                    capped = true;
                    break;
                }
                let residual = torus_distance(&map.eval(&p), &parent_point)?;
                if residual >= 1e-9 {
                    return Err(EndoError::UnresolvedFiber(format!(
                        "tree node residual {residual} at depth {d}"
                    )));
                }
                if mark(&p) {
                    nodes.push(TreeNode { point: p, depth: d, parent: Some(idx), residual });
                    next.push(nodes.len() - 1);
                }
            }
            if capped {
                break;
            }
        }
        frontier = next;
        if capped || frontier.is_empty() {
            break;
        }
    }
    Ok(InverseBranchTree { root: *target, nodes, depth_limit: depth, capped })
}

/// ε-coverage of the union of all preimages of `target` up to `depth`.
pub fn preorbit_density(
    map: &EndoMap,
    target: &TorusPoint,
    depth: usize,
    eps: f64,
    grid_res: usize,
) -> Result<(DensityReport, InverseBranchTree)> {
    let torus = map.torus().unwrap();
    let novelty = (grid_res * 4).max(64);
    let tree = preorbit_tree(map, target, depth, novelty, 1_000_000)?;
    let mut cloud = PointCloud::new(torus, eps);
    for n in &tree.nodes {
        cloud.insert(&n.point);
    }
    let mut report = density_report(&cloud, eps, grid_res);
    report.inconclusive = tree.capped && !report.dense();
    Ok((report, tree))
}

/// ε-coverage of the forward orbit {map^n(start) : n ≤ N}.
pub fn orbit_density(
    map: &EndoMap,
    start: &TorusPoint,
    n: usize,
    eps: f64,
    grid_res: usize,
) -> Result<DensityReport> {
    let torus = map.torus().ok_or_else(|| {
        EndoError::Unsupported("orbit density requires a torus map".into())
    })?;
    let mut cloud = PointCloud::new(torus, eps);
    let mut p = *start;
    cloud.insert(&p);
    for _ in 0..n {
        p = map.eval(&p);
        cloud.insert(&p);
    }
    Ok(density_report(&cloud, eps, grid_res))
}

/// Certified covering exponent of an expanding integer matrix: disks of
/// radius ε/8 centered on the reference grid, and the smallest m with
/// |μ_min|^m · ε/8 ≥ side/2. Each disk's m-th image is verified to cover the
/// reference grid by exact ellipse-plus-lattice membership (A^m of a disk is
/// an explicit ellipse; a sampled forward check cannot resolve it, since
/// adjacent samples separate by the full expansion factor).
#[derive(Debug, Clone, Serialize)]
pub struct CoveringCertificate {
    pub eps: f64,
    pub disk_radius: f64,
    pub m: usize,
    pub grid_res: usize,
    pub disks: usize,
    pub all_disks_cover: bool,
    pub failed_disks: Vec<usize>,
    /// min over disks and grid points of the image-space containment depth.
    pub depth_margin: f64,
    /// Sup-distance budget d(g^m, A^m) under which covering persists.
    pub robustness_radius: f64,
    /// Radius of the ball certified inside every image around every grid
    /// point under such a perturbation.
    pub containment_radius: f64,
}

pub fn covering_exponent(a: &IntMatrix2, eps: f64, torus: Torus) -> Result<CoveringCertificate> {
    let side = torus.side();
    let am = Matrix2::from_int(a);
    let (m1, m2, _) = am.eigen_moduli();
    let (mu_max, mu_min) = (m1.abs().max(m2.abs()), m1.abs().min(m2.abs()));
    if mu_min <= 1.0 {
        return Err(EndoError::InvalidArgument(format!(
            "matrix is not expanding: eigenvalue moduli {mu_max}, {mu_min}"
        )));
    }
    if !(eps > 0.0) {
        return Err(EndoError::InvalidArgument("eps must be positive".into()));
    }
    let rho = eps / 8.0;
    let m = ((side / (2.0 * rho)).ln() / mu_min.ln()).ceil().max(1.0) as usize;

    // A^m and its inverse, exactly representable while entries stay below 2^53.
    let mut apow = Matrix2::identity();
    for _ in 0..m {
        apow = mat_mul(&apow, &am);
    }
    let apow_inv = apow
        .inverse()
        .ok_or_else(|| EndoError::InvalidArgument("matrix power not invertible".into()))?;

    let grid_res = 64usize;
    let centers: Vec<(f64, f64)> = (0..grid_res * grid_res)
        .map(|k| {
            let i = k % grid_res;
            let j = k / grid_res;
            (
                side * (i as f64 + 0.5) / grid_res as f64,
                side * (j as f64 + 0.5) / grid_res as f64,
            )
        })
        .collect();

    // Lattice generated by side·A^{-m}.
    let u1 = apow_inv.apply(Vector2::new(side, 0.0));
    let u2 = apow_inv.apply(Vector2::new(0.0, side));

    let mut failed = Vec::new();
    let mut depth_margin = f64::INFINITY;
    for (disk_idx, &(cx, cy)) in centers.iter().enumerate() {
        let imc = apow.apply(Vector2::new(cx, cy));
        let mut disk_ok = true;
        for &(zx, zy) in centers.iter() {
            let w0 = apow_inv.apply(Vector2::new(zx - imc.x, zy - imc.y));
            let d = closest_lattice_distance(w0, u1, u2);
            if d > rho {
                disk_ok = false;
            }
            depth_margin = depth_margin.min((rho - d) * mu_min.powi(m as i32));
        }
        if !disk_ok {
            failed.push(disk_idx);
        }
    }

    Ok(CoveringCertificate {
        eps,
        disk_radius: rho,
        m,
        grid_res,
        disks: centers.len(),
        all_disks_cover: failed.is_empty(),
        failed_disks: failed,
        depth_margin: depth_margin.max(0.0),
        robustness_radius: depth_margin.max(0.0) / 8.0,
        containment_radius: depth_margin.max(0.0) / 16.0,
    })
}

fn mat_mul(a: &Matrix2, b: &Matrix2) -> Matrix2 {
    Matrix2::new(
        a.a * b.a + a.b * b.c,
        a.a * b.b + a.b * b.d,
        a.c * b.a + a.d * b.c,
        a.c * b.b + a.d * b.d,
    )
}

/// Distance from w to the lattice ℤu₁ + ℤu₂ (Babai rounding plus a local
/// search window).
fn closest_lattice_distance(w: Vector2, u1: Vector2, u2: Vector2) -> f64 {
    let basis = Matrix2::new(u1.x, u2.x, u1.y, u2.y);
    let coords = match basis.inverse() {
        Some(inv) => inv.apply(w),
        None => return w.norm(),
    };
    let k1 = coords.x.round();
    let k2 = coords.y.round();
    let mut best = f64::INFINITY;
    for d1 in -2i64..=2 {
        for d2 in -2i64..=2 {
            let a = k1 + d1 as f64;
            let b = k2 + d2 as f64;
            let p = Vector2::new(a * u1.x + b * u2.x, a * u1.y + b * u2.y);
            best = best.min((w - p).norm());
        }
    }
    best
}

/// Forward-sample validation of the covering oracle on a few disks: every
/// sampled image point must itself be certified covered.
pub fn validate_covering_samples(
    a: &IntMatrix2,
    cert: &CoveringCertificate,
    torus: Torus,
    samples_per_disk: usize,
) -> Result<()> {
    let side = torus.side();
    let map = EndoMap::linear(*a, torus);
    let mut apow = Matrix2::identity();
    let am = Matrix2::from_int(a);
    for _ in 0..cert.m {
        apow = mat_mul(&apow, &am);
    }
    let apow_inv = apow.inverse().unwrap();
    let u1 = apow_inv.apply(Vector2::new(side, 0.0));
    let u2 = apow_inv.apply(Vector2::new(0.0, side));

    for disk in [0usize, cert.disks / 3, cert.disks / 2, cert.disks - 1] {
        let i = disk % cert.grid_res;
        let j = disk / cert.grid_res;
        let cx = side * (i as f64 + 0.5) / cert.grid_res as f64;
        let cy = side * (j as f64 + 0.5) / cert.grid_res as f64;
        let imc = apow.apply(Vector2::new(cx, cy));
        for k in 0..samples_per_disk {
            let ang = std::f64::consts::TAU * k as f64 / samples_per_disk as f64;
            let rad = cert.disk_radius * (0.3 + 0.7 * ((k * 7919) % 97) as f64 / 97.0);
            let p = wrap_unchecked(cx + rad * ang.cos(), cy + rad * ang.sin(), torus);
            let mut q = p;
            for _ in 0..cert.m {
                q = map.eval(&q);
            }
            // The wrapped forward image must be lattice-equivalent to a point
            // of the exact image ellipse.
            let w0 = apow_inv.apply(Vector2::new(q.x - imc.x, q.y - imc.y));
            let d = closest_lattice_distance(w0, u1, u2);
            if d > cert.disk_radius * (1.0 + 1e-6) + 1e-9 {
                return Err(EndoError::GeometryViolated(format!(
                    "sampled image escaped the certified ellipse: distance {d}"
                )));
            }
        }
    }
    Ok(())
}
