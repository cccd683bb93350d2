//! Object-centric features: proposals cut from ground-truth instances, a
//! pluggable 3D feature provider (built-in: trainable point-set encoder),
//! and optional precomputed features loaded from a JSONL file.

use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::numerics::ops;
use crate::numerics::scalar::Real;
use crate::numerics::tensor::Tensor;
use crate::numerics::SeedRng;
use crate::pointcloud::scene::PointCloud;

/// One object candidate: its points plus an axis-aligned bounding box.
/// Ground-truth instances stand in for detector output.
#[derive(Debug, Clone)]
pub struct ObjectProposal {
    pub instance_id: u32,
    pub positions: Vec<[f64; 3]>,
    pub colors: Vec<[f64; 3]>,
    pub center: [f64; 3],
    pub extents: [f64; 3],
}

impl ObjectProposal {
    pub fn from_instance(pc: &PointCloud, instance_id: u32) -> Result<Self> {
        let inst = pc
            .instances
            .iter()
            .find(|i| i.id == instance_id)
            .ok_or_else(|| Error::Contract(format!("no instance {instance_id} in scene")))?;
        if inst.point_indices.is_empty() {
            return Err(Error::Contract(format!("instance {instance_id} has no points")));
        }
        let positions: Vec<[f64; 3]> =
            inst.point_indices.iter().map(|&p| pc.positions[p]).collect();
        let colors: Vec<[f64; 3]> = inst.point_indices.iter().map(|&p| pc.colors[p]).collect();
        let mut lo = positions[0];
        let mut hi = positions[0];
        for p in &positions {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let center = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]), 0.5 * (lo[2] + hi[2])];
        let extents = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
        Ok(ObjectProposal { instance_id, positions, colors, center, extents })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Per-object feature pair; `f2d_raw` is absent when the 2D path is disabled.
#[derive(Debug, Clone)]
pub struct ObjectFeatures<T: Real> {
    pub f3d_raw: Tensor<T>,
    pub f2d_raw: Option<Tensor<T>>,
}

/// Source of raw 3D object features `[1×d3]`.
pub trait Feature3dProvider<T: Real> {
    fn extract(&self, obj: &ObjectProposal) -> Result<Tensor<T>>;
    fn dim(&self) -> usize;
}

pub fn extract_object_features_3d<T: Real>(
    obj: &ObjectProposal,
    provider: &dyn Feature3dProvider<T>,
) -> Result<Tensor<T>> {
    let f = provider
        .extract(obj)
        .map_err(|e| Error::Provider(format!("3d features for instance {}: {e}", obj.instance_id)))?;
    f.check_finite("object 3d feature")?;
    Ok(f)
}

/// Built-in trainable provider: per-point MLP over box-normalized position
/// and color, mean-pooled over the object's points. Permutation-invariant.
pub struct PointSetEncoder3d<T: Real> {
    w1: Tensor<T>,
    b1: Tensor<T>,
    w2: Tensor<T>,
    b2: Tensor<T>,
    d_out: usize,
}

impl<T: Real> PointSetEncoder3d<T> {
    pub fn new(hidden: usize, d_out: usize, rng: &mut SeedRng) -> Self {
        PointSetEncoder3d {
            w1: Tensor::rand_uniform(vec![6, hidden], 1.0 / 6f64.sqrt(), rng).requires_grad(),
            b1: Tensor::zeros(vec![hidden]).requires_grad(),
            w2: Tensor::rand_uniform(vec![hidden, d_out], 1.0 / (hidden as f64).sqrt(), rng)
                .requires_grad(),
            b2: Tensor::zeros(vec![d_out]).requires_grad(),
            d_out,
        }
    }

    pub fn params(&self) -> Vec<(String, Tensor<T>)> {
        vec![
            ("obj3d.w1".into(), self.w1.clone()),
            ("obj3d.b1".into(), self.b1.clone()),
            ("obj3d.w2".into(), self.w2.clone()),
            ("obj3d.b2".into(), self.b2.clone()),
        ]
    }
}

impl<T: Real> Feature3dProvider<T> for PointSetEncoder3d<T> {
    fn extract(&self, obj: &ObjectProposal) -> Result<Tensor<T>> {
        if obj.is_empty() {
            return Err(Error::Contract("empty object proposal".into()));
        }
        let n = obj.len();
        let mut data = Vec::with_capacity(n * 6);
        for (p, c) in obj.positions.iter().zip(&obj.colors) {
            for a in 0..3 {
                let half = (obj.extents[a] * 0.5).max(1e-6);
                data.push(T::lit((p[a] - obj.center[a]) / half));
            }
            for a in 0..3 {
                data.push(T::lit(c[a]));
            }
        }
        let x = Tensor::from_vec(vec![n, 6], data);
        let h = ops::relu(&ops::add_bias(&ops::matmul(&x, &self.w1)?, &self.b1)?);
        let f = ops::add_bias(&ops::matmul(&h, &self.w2)?, &self.b2)?;
        ops::group_mean(&f, &[(0..n).collect()])
    }

    fn dim(&self) -> usize {
        self.d_out
    }
}

#[derive(Deserialize)]
struct FeatureLine {
    instance: u32,
    f3d: Vec<f64>,
    #[serde(default)]
    f2d: Option<Vec<f64>>,
}

/// Precomputed per-instance features loaded from JSONL
/// `{"instance": int, "f3d": [...], "f2d": [...]}`. Lets externally computed
/// features replace the built-in providers without code changes.
pub struct FeatureFile {
    map: HashMap<u32, (Vec<f64>, Option<Vec<f64>>)>,
    d3: usize,
}

impl FeatureFile {
    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut map = HashMap::new();
        let mut d3 = 0;
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: FeatureLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.display().to_string(),
                message: format!("line {}: {e}", lineno + 1),
            })?;
            if d3 == 0 {
                d3 = rec.f3d.len();
            } else if rec.f3d.len() != d3 {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    message: format!("line {}: inconsistent f3d length", lineno + 1),
                });
            }
            map.insert(rec.instance, (rec.f3d, rec.f2d));
        }
        if map.is_empty() {
            return Err(Error::Parse {
                path: path.display().to_string(),
                message: "no feature records".into(),
            });
        }
        Ok(FeatureFile { map, d3 })
    }

    pub fn f2d<T: Real>(&self, instance: u32) -> Result<Option<Tensor<T>>> {
        let (_, f2d) = self
            .map
            .get(&instance)
            .ok_or_else(|| Error::Provider(format!("no features for instance {instance}")))?;
        Ok(f2d.as_ref().map(|v| Tensor::from_f64s(vec![1, v.len()], v)))
    }
}

impl<T: Real> Feature3dProvider<T> for FeatureFile {
    fn extract(&self, obj: &ObjectProposal) -> Result<Tensor<T>> {
        let (f3d, _) = self
            .map
            .get(&obj.instance_id)
            .ok_or_else(|| Error::Provider(format!("no features for instance {}", obj.instance_id)))?;
        Ok(Tensor::from_f64s(vec![1, f3d.len()], f3d))
    }

    fn dim(&self) -> usize {
        self.d3
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn proposal(seed: u64, n: usize, color: [f64; 3]) -> ObjectProposal {
        let mut rng = SeedRng::new(seed);
        let positions: Vec<[f64; 3]> = (0..n)
            .map(|_| [rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(0.0, 1.0)])
            .collect();
        let colors = vec![color; n];
        let mut lo = positions[0];
        let mut hi = positions[0];
        for p in &positions {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        ObjectProposal {
            instance_id: 1,
            positions,
            colors,
            center: [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]), 0.5 * (lo[2] + hi[2])],
            extents: [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]],
        }
    }

    #[test]
    fn same_object_twice_is_identical() {
        let mut rng = SeedRng::new(1);
        let enc = PointSetEncoder3d::<f64>::new(8, 12, &mut rng);
        let obj = proposal(5, 20, [0.3, 0.3, 0.3]);
        let a = extract_object_features_3d(&obj, &enc).unwrap();
        let b = extract_object_features_3d(&obj, &enc).unwrap();
        assert_eq!(a.to_f64s(), b.to_f64s());
    }

    #[test]
    fn permuting_points_keeps_feature() {
        let mut rng = SeedRng::new(1);
        let enc = PointSetEncoder3d::<f64>::new(8, 12, &mut rng);
        let obj = proposal(6, 25, [0.2, 0.8, 0.4]);
        let a = extract_object_features_3d(&obj, &enc).unwrap().to_f64s();
        let mut rev = obj.clone();
        rev.positions.reverse();
        rev.colors.reverse();
        let b = extract_object_features_3d(&rev, &enc).unwrap().to_f64s();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
    }

    #[test]
    fn disjoint_colors_give_distinct_features() {
        let mut rng = SeedRng::new(2);
        let enc = PointSetEncoder3d::<f64>::new(8, 12, &mut rng);
        let a = extract_object_features_3d(&proposal(7, 30, [1.0, 0.0, 0.0]), &enc)
            .unwrap()
            .to_f64s();
        let b = extract_object_features_3d(&proposal(7, 30, [0.0, 0.0, 1.0]), &enc)
            .unwrap()
            .to_f64s();
        let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(dot / (na * nb) < 1.0 - 1e-9);
    }

    #[test]
    fn feature_file_round_trip_and_missing_instance() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.jsonl");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, r#"{{"instance": 1, "f3d": [1.0, 2.0], "f2d": [0.5]}}"#).unwrap();
        writeln!(f, r#"{{"instance": 2, "f3d": [3.0, 4.0]}}"#).unwrap();
        drop(f);
        let ff = FeatureFile::load(&path).unwrap();
        let obj = proposal(1, 3, [0.0; 3]);
        let f3d: Tensor<f64> = ff.extract(&obj).unwrap();
        assert_eq!(f3d.to_f64s(), vec![1.0, 2.0]);
        assert!(ff.f2d::<f64>(2).unwrap().is_none());
        assert!(ff.f2d::<f64>(1).unwrap().is_some());
        let mut missing = obj;
        missing.instance_id = 9;
        assert!(matches!(
            Feature3dProvider::<f64>::extract(&ff, &missing),
            Err(Error::Provider(_))
        ));
    }
}
