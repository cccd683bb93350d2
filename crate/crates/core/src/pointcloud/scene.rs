use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointcloud::superpoint::SuperpointPartition;

/// A scene: point positions (meters), per-point colors in `[0,1]`, and
/// labeled instances over disjoint point index sets. Points outside every
/// instance are background.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub name: String,
    pub positions: Vec<[f64; 3]>,
    pub colors: Vec<[f64; 3]>,
    pub instances: Vec<Instance>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: u32,
    pub label: String,
    pub point_indices: Vec<usize>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn instance(&self, id: u32) -> Option<&Instance> {
        self.instances.iter().find(|i| i.id == id)
    }

    /// Hard point mask of one instance.
    pub fn instance_mask(&self, id: u32) -> Option<InstanceMask> {
        let inst = self.instance(id)?;
        let mut values = vec![0.0; self.len()];
        for &p in &inst.point_indices {
            values[p] = 1.0;
        }
        Some(InstanceMask { level: MaskLevel::Point, values, hard: true })
    }

    /// Axis-aligned bounds (min, max) over all points.
    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.positions {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        (lo, hi)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.colors.len() != n {
            return Err(Error::Validation(format!(
                "{} points but {} colors",
                n,
                self.colors.len()
            )));
        }
        if self.positions.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Validation("non-finite point position".into()));
        }
        if self.colors.iter().flatten().any(|&c| !(0.0..=1.0).contains(&c)) {
            return Err(Error::Validation("color channel outside [0,1]".into()));
        }
        let mut ids = HashSet::new();
        let mut claimed = vec![false; n];
        for inst in &self.instances {
            if !ids.insert(inst.id) {
                return Err(Error::Validation(format!("duplicate instance id {}", inst.id)));
            }
            for &p in &inst.point_indices {
                if p >= n {
                    return Err(Error::Validation(format!(
                        "instance {} references point {p} of {n}",
                        inst.id
                    )));
                }
                if claimed[p] {
                    return Err(Error::Validation(format!(
                        "point {p} belongs to more than one instance"
                    )));
                }
                claimed[p] = true;
            }
        }
        Ok(())
    }
}

/// Where a mask lives: one value per point or one per superpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskLevel {
    Point,
    Superpoint,
}

/// Binary (hard) or `[0,1]`-valued (soft) mask at either level.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMask {
    pub level: MaskLevel,
    pub values: Vec<f64>,
    pub hard: bool,
}

impl InstanceMask {
    pub fn hard(level: MaskLevel, bits: Vec<bool>) -> Self {
        InstanceMask {
            level,
            values: bits.into_iter().map(|b| if b { 1.0 } else { 0.0 }).collect(),
            hard: true,
        }
    }

    pub fn soft(level: MaskLevel, values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| (0.0..=1.0).contains(v)));
        InstanceMask { level, values, hard: false }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn bits(&self) -> Vec<bool> {
        self.values.iter().map(|&v| v >= 0.5).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct SceneFile {
    name: String,
    points: Vec<[f64; 3]>,
    colors: Vec<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    superpoints: Option<Vec<usize>>,
    instances: Vec<InstanceFile>,
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    id: u32,
    label: String,
    point_indices: Vec<usize>,
}

pub fn load_scene(path: &Path) -> Result<(PointCloud, Option<SuperpointPartition>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: SceneFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let pc = PointCloud {
        name: file.name,
        positions: file.points,
        colors: file.colors,
        instances: file
            .instances
            .into_iter()
            .map(|i| Instance { id: i.id, label: i.label, point_indices: i.point_indices })
            .collect(),
    };
    pc.validate()?;
    let sp = match file.superpoints {
        Some(assignment) => {
            if assignment.len() != pc.len() {
                return Err(Error::Validation(format!(
                    "{} superpoint labels for {} points",
                    assignment.len(),
                    pc.len()
                )));
            }
            Some(SuperpointPartition::new(assignment)?)
        }
        None => None,
    };
    Ok((pc, sp))
}

pub fn save_scene(path: &Path, pc: &PointCloud, sp: Option<&SuperpointPartition>) -> Result<()> {
    let file = SceneFile {
        name: pc.name.clone(),
        points: pc.positions.clone(),
        colors: pc.colors.clone(),
        superpoints: sp.map(|s| s.assignment().to_vec()),
        instances: pc
            .instances
            .iter()
            .map(|i| InstanceFile {
                id: i.id,
                label: i.label.clone(),
                point_indices: i.point_indices.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_string(&file)
        .map_err(|e| Error::Parse { path: path.display().to_string(), message: e.to_string() })?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_point_scene() -> PointCloud {
        PointCloud {
            name: "tiny".into(),
            positions: vec![[0.1, 0.2, 0.3]],
            colors: vec![[1.0, 0.0, 0.0]],
            instances: vec![Instance { id: 1, label: "box".into(), point_indices: vec![0] }],
        }
    }

    #[test]
    fn minimal_scene_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        let pc = one_point_scene();
        save_scene(&path, &pc, None).unwrap();
        let (loaded, sp) = load_scene(&path).unwrap();
        assert_eq!(loaded, pc);
        assert!(sp.is_none());
    }

    #[test]
    fn out_of_range_instance_index_is_validation_error() {
        let mut pc = one_point_scene();
        pc.instances[0].point_indices = vec![1];
        assert!(matches!(pc.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn overlapping_instances_rejected() {
        let mut pc = one_point_scene();
        pc.instances.push(Instance { id: 2, label: "sphere".into(), point_indices: vec![0] });
        assert!(matches!(pc.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn malformed_json_is_parse_error_with_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, "{\"name\": 3}").unwrap();
        match load_scene(&path) {
            Err(Error::Parse { path: p, .. }) => assert!(p.contains("bad.json")),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
