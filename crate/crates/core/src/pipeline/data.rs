//! Dataset plumbing: synthetic benchmark generation, the on-disk layout
//! (`manifest.json`, `scenes/*.json`, `train.jsonl`, `val.jsonl`), and an
//! in-memory dataset with per-scene caches.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoder::{knn_groups, orbital_views, Camera, ObjectProposal, KNN_K};
use crate::error::{Error, Result};
use crate::pointcloud::scene::{load_scene, save_scene, PointCloud};
use crate::pointcloud::superpoint::{generate_superpoints, SuperpointPartition};
use crate::pointcloud::synth::{synth_scene, GeneratorConfig, SampleRecord, GRAMMAR_VERSION};

pub const VAL_EVERY: usize = 5; // every 5th scene goes to the validation split

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetManifest {
    pub seed: u64,
    pub grammar_version: String,
    pub num_scenes: usize,
    pub objects_per_scene: usize,
    pub train_scenes: usize,
    pub val_scenes: usize,
    pub train_samples: usize,
    pub val_samples: usize,
}

fn scene_seed(master: u64, index: usize) -> u64 {
    master ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Generate `num_scenes` scenes plus an 80/20 train/val sample split.
pub fn synth_dataset(
    out: &Path,
    num_scenes: usize,
    objects_per_scene: usize,
    seed: u64,
) -> Result<DatasetManifest> {
    if num_scenes == 0 {
        return Err(Error::Validation("num_scenes must be at least 1".into()));
    }
    let gen_cfg = GeneratorConfig { objects_per_scene, ..GeneratorConfig::default() };
    let scenes_dir = out.join("scenes");
    std::fs::create_dir_all(&scenes_dir).map_err(|e| Error::io(&scenes_dir, e))?;
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut manifest = DatasetManifest {
        seed,
        grammar_version: GRAMMAR_VERSION.into(),
        num_scenes,
        objects_per_scene,
        train_scenes: 0,
        val_scenes: 0,
        train_samples: 0,
        val_samples: 0,
    };
    for i in 0..num_scenes {
        let name = format!("scene_{i:04}");
        let (pc, sp, mut samples) = synth_scene(&gen_cfg, scene_seed(seed, i), &name)?;
        for s in &mut samples {
            s.scene = name.clone();
        }
        save_scene(&scenes_dir.join(format!("{name}.json")), &pc, Some(&sp))?;
        let is_val = num_scenes > 1 && i % VAL_EVERY == VAL_EVERY - 1;
        if is_val {
            manifest.val_scenes += 1;
            manifest.val_samples += samples.len();
            val.extend(samples);
        } else {
            manifest.train_scenes += 1;
            manifest.train_samples += samples.len();
            train.extend(samples);
        }
    }
    write_samples(&out.join("train.jsonl"), &train)?;
    write_samples(&out.join("val.jsonl"), &val)?;
    let manifest_path = out.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Validation(format!("manifest encode: {e}")))?;
    std::fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest)
}

pub fn write_samples(path: &Path, samples: &[SampleRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for s in samples {
        let line = serde_json::to_string(s)
            .map_err(|e| Error::Validation(format!("sample encode: {e}")))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_samples(path: &Path) -> Result<Vec<SampleRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SampleRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: format!("line {}: {e}", lineno + 1),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// One scene with everything that depends only on geometry precomputed.
pub struct SceneEntry {
    pub pc: PointCloud,
    pub sp: SuperpointPartition,
    pub knn: Vec<Vec<usize>>,
    pub views: Vec<Camera>,
    /// Ground-truth instances as proposals, ascending id.
    pub proposals: Vec<ObjectProposal>,
}

impl SceneEntry {
    pub fn build(pc: PointCloud, sp: Option<SuperpointPartition>, voxel_size: f64, num_views: usize) -> Result<Self> {
        pc.validate()?;
        let sp = match sp {
            Some(sp) => sp,
            None => generate_superpoints(&pc, voxel_size)?,
        };
        let knn = knn_groups(&pc.positions, KNN_K);
        let views = orbital_views(&pc, num_views);
        let mut ids: Vec<u32> = pc.instances.iter().map(|i| i.id).collect();
        ids.sort_unstable();
        let proposals = ids
            .iter()
            .map(|&id| ObjectProposal::from_instance(&pc, id))
            .collect::<Result<Vec<_>>>()?;
        Ok(SceneEntry { pc, sp, knn, views, proposals })
    }
}

pub struct Dataset {
    pub scenes: BTreeMap<String, SceneEntry>,
    pub samples: Vec<SampleRecord>,
}

/// Load one split, caching each referenced scene once and validating every
/// sample against its scene before anything runs.
pub fn load_dataset(
    dir: &Path,
    split: &str,
    voxel_size: f64,
    num_views: usize,
) -> Result<Dataset> {
    let samples = read_samples(&dir.join(format!("{split}.jsonl")))?;
    let mut scenes = BTreeMap::new();
    for s in &samples {
        if !scenes.contains_key(&s.scene) {
            let path: PathBuf = dir.join("scenes").join(format!("{}.json", s.scene));
            let (pc, sp) = load_scene(&path)?;
            scenes.insert(s.scene.clone(), SceneEntry::build(pc, sp, voxel_size, num_views)?);
        }
        let entry = &scenes[&s.scene];
        if s.response.contains("<SEG>")
            && !entry.pc.instances.iter().any(|i| i.id == s.target_instance)
        {
            return Err(Error::Validation(format!(
                "sample targets instance {} missing from scene {}",
                s.target_instance, s.scene
            )));
        }
    }
    Ok(Dataset { scenes, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn splits_are_scene_disjoint_and_counts_exact() {
        let dir = tempfile::tempdir().unwrap();
        let m = synth_dataset(dir.path(), 10, 4, 5).unwrap();
        assert_eq!(m.train_scenes + m.val_scenes, 10);
        assert_eq!(m.val_scenes, 2);
        let train = read_samples(&dir.path().join("train.jsonl")).unwrap();
        let val = read_samples(&dir.path().join("val.jsonl")).unwrap();
        assert_eq!(train.len(), m.train_samples);
        assert_eq!(val.len(), m.val_samples);
        let ts: BTreeSet<_> = train.iter().map(|s| s.scene.clone()).collect();
        let vs: BTreeSet<_> = val.iter().map(|s| s.scene.clone()).collect();
        assert!(ts.is_disjoint(&vs));
        assert_eq!(ts.len() + vs.len(), 10);
    }

    #[test]
    fn same_seed_reproduces_identical_files() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        synth_dataset(d1.path(), 3, 3, 11).unwrap();
        synth_dataset(d2.path(), 3, 3, 11).unwrap();
        for f in ["manifest.json", "train.jsonl", "val.jsonl", "scenes/scene_0001.json"] {
            let a = std::fs::read(d1.path().join(f)).unwrap();
            let b = std::fs::read(d2.path().join(f)).unwrap();
            assert_eq!(a, b, "file {f} differs between same-seed runs");
        }
    }

    #[test]
    fn load_dataset_caches_and_validates() {
        let dir = tempfile::tempdir().unwrap();
        synth_dataset(dir.path(), 6, 3, 2).unwrap();
        let ds = load_dataset(dir.path(), "val", 0.25, 4).unwrap();
        assert!(!ds.samples.is_empty());
        assert_eq!(ds.scenes.len(), 1); // one val scene out of six
        let entry = ds.scenes.values().next().unwrap();
        assert_eq!(entry.proposals.len(), 3);
        assert_eq!(entry.knn.len(), entry.pc.len());
    }

    #[test]
    fn broken_target_instance_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        synth_dataset(dir.path(), 2, 3, 2).unwrap();
        let path = dir.path().join("train.jsonl");
        let mut samples = read_samples(&path).unwrap();
        samples[0].target_instance = 99;
        write_samples(&path, &samples).unwrap();
        assert!(matches!(
            load_dataset(dir.path(), "train", 0.25, 4),
            Err(Error::Validation(_))
        ));
    }
}
