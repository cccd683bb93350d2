use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::pointcloud::scene::PointCloud;

pub const DEFAULT_VOXEL_SIZE: f64 = 0.25;

/// Total partition of a scene's points into contiguous superpoint ids
/// `0..count`, every superpoint non-empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuperpointPartition {
    assignment: Vec<usize>,
    count: usize,
}

impl SuperpointPartition {
    pub fn new(assignment: Vec<usize>) -> Result<Self> {
        if assignment.is_empty() {
            return Err(Error::Validation("empty superpoint assignment".into()));
        }
        let count = assignment.iter().max().unwrap() + 1;
        let mut seen = vec![false; count];
        for &s in &assignment {
            seen[s] = true;
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(Error::Validation(format!(
                "superpoint ids not contiguous: id {missing} unused"
            )));
        }
        Ok(SuperpointPartition { assignment, count })
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn num_points(&self) -> usize {
        self.assignment.len()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Member point indices per superpoint, in ascending point order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.count];
        for (p, &s) in self.assignment.iter().enumerate() {
            groups[s].push(p);
        }
        groups
    }

    /// Canonical form for comparing partitions regardless of labeling:
    /// sorted list of sorted member sets.
    pub fn as_set_partition(&self) -> Vec<Vec<usize>> {
        let mut groups = self.members();
        groups.sort();
        groups
    }
}

/// Uniform voxel-grid binning: points sharing a voxel cell share a
/// superpoint. Ids follow first appearance in input order, so the result is
/// deterministic for a given point order and, as a set partition, identical
/// under permutation.
pub fn generate_superpoints(pc: &PointCloud, voxel_size: f64) -> Result<SuperpointPartition> {
    if !(voxel_size > 0.0) {
        return Err(Error::Contract(format!("voxel_size must be positive, got {voxel_size}")));
    }
    if pc.is_empty() {
        return Err(Error::Contract("cannot partition an empty scene".into()));
    }
    let mut cells: HashMap<[i64; 3], usize> = HashMap::new();
    let mut assignment = Vec::with_capacity(pc.len());
    for p in &pc.positions {
        let cell = [
            (p[0] / voxel_size).floor() as i64,
            (p[1] / voxel_size).floor() as i64,
            (p[2] / voxel_size).floor() as i64,
        ];
        let next = cells.len();
        let id = *cells.entry(cell).or_insert(next);
        assignment.push(id);
    }
    SuperpointPartition::new(assignment)
}
