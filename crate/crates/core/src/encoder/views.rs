//! Multi-view 2D object features: pinhole projection into a small set of
//! fixed orbital views, binary occupancy rasterization, and a fixed-seed
//! random-projection feature per view, averaged over views where the
//! object is visible.

use crate::error::{Error, Result};
use crate::numerics::ops;
use crate::numerics::scalar::Real;
use crate::numerics::tensor::Tensor;
use crate::numerics::SeedRng;
use crate::pointcloud::scene::PointCloud;

use super::objects::ObjectProposal;

/// Occupancy raster resolution per view (GRID×GRID cells).
pub const GRID: usize = 16;

/// Pinhole camera; the image plane is GRID×GRID pixels, so the occupancy
/// grid and pixel grid coincide.
#[derive(Debug, Clone)]
pub struct Camera {
    pub position: [f64; 3],
    pub look_at: [f64; 3],
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize(a: [f64; 3]) -> [f64; 3] {
    let n = dot(a, a).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

impl Camera {
    pub fn looking_at(position: [f64; 3], look_at: [f64; 3]) -> Self {
        let half = GRID as f64 / 2.0;
        Camera { position, look_at, fx: half, fy: half, cx: half, cy: half }
    }

    fn basis(&self) -> ([f64; 3], [f64; 3], [f64; 3]) {
        let forward = normalize(sub(self.look_at, self.position));
        // world up is +z; fall back to +y when looking straight down/up
        let up_hint = if forward[2].abs() > 0.999 { [0.0, 1.0, 0.0] } else { [0.0, 0.0, 1.0] };
        let right = normalize(cross(forward, up_hint));
        let up = cross(right, forward);
        (right, up, forward)
    }

    /// Pixel coordinates of a world point, or `None` when behind the camera
    /// or outside the GRID×GRID image.
    pub fn project(&self, p: [f64; 3]) -> Option<(f64, f64)> {
        let (right, up, forward) = self.basis();
        let rel = sub(p, self.position);
        let z = dot(rel, forward);
        if z <= 1e-9 {
            return None;
        }
        let u = self.fx * dot(rel, right) / z + self.cx;
        let v = self.fy * dot(rel, up) / z + self.cy;
        let lim = GRID as f64;
        if u < 0.0 || u >= lim || v < 0.0 || v >= lim {
            return None;
        }
        Some((u, v))
    }
}

/// Fixed set of cameras on a horizontal orbit around the scene, all looking
/// at the scene center. Synthetic scenes have no recorded trajectories, so
/// the views are deterministic functions of the scene bounds.
pub fn orbital_views(pc: &PointCloud, num_views: usize) -> Vec<Camera> {
    let (lo, hi) = pc.bounds();
    let center = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]), 0.5 * (lo[2] + hi[2])];
    let diag = ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2) + (hi[2] - lo[2]).powi(2))
        .sqrt()
        .max(1e-3);
    let radius = 1.5 * diag;
    let height = center[2] + 0.75 * diag;
    (0..num_views)
        .map(|i| {
            let ang = std::f64::consts::TAU * i as f64 / num_views as f64;
            Camera::looking_at(
                [center[0] + radius * ang.cos(), center[1] + radius * ang.sin(), height],
                center,
            )
        })
        .collect()
}

/// Binary occupancy grid (row-major GRID×GRID) of an object in one view;
/// `None` when no point projects into the image.
pub fn rasterize(obj: &ObjectProposal, cam: &Camera) -> Option<Vec<f64>> {
    let mut grid = vec![0.0; GRID * GRID];
    let mut any = false;
    for &p in &obj.positions {
        if let Some((u, v)) = cam.project(p) {
            grid[v as usize * GRID + u as usize] = 1.0;
            any = true;
        }
    }
    any.then_some(grid)
}

/// Maps a GRID×GRID occupancy raster to a feature row `[1×d2]`.
pub trait Feature2dProvider<T: Real> {
    fn extract(&self, occupancy: &[f64]) -> Result<Tensor<T>>;
    fn dim(&self) -> usize;
}

/// Built-in 2D provider: a fixed-seed random projection of the occupancy
/// grid. Untrained by design — it is a stand-in feature extractor, not a
/// learned one.
pub struct RandomProjection2d<T: Real> {
    w: Tensor<T>,
    d_out: usize,
}

impl<T: Real> RandomProjection2d<T> {
    pub fn new(d_out: usize, seed: u64) -> Self {
        let mut rng = SeedRng::new(seed);
        let bound = 1.0 / (GRID as f64);
        RandomProjection2d {
            w: Tensor::rand_uniform(vec![GRID * GRID, d_out], bound, &mut rng),
            d_out,
        }
    }
}

impl<T: Real> Feature2dProvider<T> for RandomProjection2d<T> {
    fn extract(&self, occupancy: &[f64]) -> Result<Tensor<T>> {
        if occupancy.len() != GRID * GRID {
            return Err(Error::Contract(format!(
                "occupancy grid has {} cells, expected {}",
                occupancy.len(),
                GRID * GRID
            )));
        }
        let x = Tensor::from_f64s(vec![1, GRID * GRID], occupancy);
        ops::matmul(&x, &self.w)
    }

    fn dim(&self) -> usize {
        self.d_out
    }
}

/// Per-view features averaged over views in which the object is visible.
pub fn extract_object_features_2d<T: Real>(
    obj: &ObjectProposal,
    views: &[Camera],
    provider: &dyn Feature2dProvider<T>,
) -> Result<Tensor<T>> {
    if views.is_empty() {
        return Err(Error::Contract("extract_object_features_2d: no views".into()));
    }
    let mut per_view = Vec::new();
    for cam in views {
        if let Some(grid) = rasterize(obj, cam) {
            per_view.push(provider.extract(&grid).map_err(|e| {
                Error::Provider(format!("2d features for instance {}: {e}", obj.instance_id))
            })?);
        }
    }
    if per_view.is_empty() {
        return Err(Error::NotVisible);
    }
    let stacked = ops::concat_rows(&per_view)?;
    let f = ops::group_mean(&stacked, &[(0..per_view.len()).collect()])?;
    f.check_finite("object 2d feature")?;
    Ok(f)
}
