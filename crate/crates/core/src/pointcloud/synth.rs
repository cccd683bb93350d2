//! Synthetic scene and instruction generator: colored primitives on a floor
//! plus templated instruction/response records. Stands in for real RGB-D
//! scan data at desk scale; fully deterministic per seed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::SeedRng;
use crate::pointcloud::scene::{Instance, PointCloud};
use crate::pointcloud::superpoint::{generate_superpoints, SuperpointPartition};

/// Version tag of the instruction grammar; recorded in dataset manifests so
/// metric numbers are never compared across template changes.
pub const GRAMMAR_VERSION: &str = "g1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub objects_per_scene: usize,
    pub points_per_object: usize,
    pub floor_points: usize,
    pub samples_per_scene: usize,
    /// Voxel size for the generated superpoint partition.
    pub voxel_size: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            objects_per_scene: 4,
            points_per_object: 120,
            floor_points: 200,
            samples_per_scene: 6,
            voxel_size: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Referring,
    Spatial,
    Reasoning,
    Qa,
}

/// One training/evaluation sample. `scene` is filled with the scene file
/// path when a dataset is written to disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleRecord {
    pub scene: String,
    pub instruction: String,
    pub response: String,
    pub target_instance: u32,
    #[serde(default = "default_task")]
    pub task: TaskKind,
}

fn default_task() -> TaskKind {
    TaskKind::Referring
}

const SHAPES: [&str; 4] = ["box", "sphere", "cylinder", "chair"];
const COLORS: [(&str, [f64; 3]); 8] = [
    ("red", [0.9, 0.1, 0.1]),
    ("green", [0.1, 0.8, 0.15]),
    ("blue", [0.12, 0.2, 0.9]),
    ("yellow", [0.9, 0.85, 0.1]),
    ("orange", [0.95, 0.55, 0.1]),
    ("purple", [0.6, 0.15, 0.8]),
    ("cyan", [0.1, 0.8, 0.85]),
    ("white", [0.92, 0.92, 0.92]),
];

/// Every word the instruction grammar can emit. The LM vocabulary is built
/// over this list; anything else falls back to byte tokens.
pub fn grammar_words() -> Vec<&'static str> {
    let mut words = vec![
        "Segment", "the", "to", "left", "of", "object", "that", "can", "roll", "in", "any",
        "direction", "people", "sit", "on", "accommodate", "multiple", "shaped", "like", "a",
        "best", "suited", "for", "storing", "items", "What", "color", "is", "It", "you", "could",
    ];
    words.extend(SHAPES);
    for (name, _) in COLORS {
        words.push(name);
    }
    words
}

struct SceneObject {
    id: u32,
    shape: &'static str,
    color: &'static str,
    center: [f64; 3],
}

fn jitter_color(base: [f64; 3], rng: &mut SeedRng) -> [f64; 3] {
    let mut c = base;
    for ch in &mut c {
        *ch = (*ch + rng.uniform(-0.04, 0.04)).clamp(0.0, 1.0);
    }
    c
}

fn box_point(center: [f64; 3], ext: [f64; 3], rng: &mut SeedRng) -> [f64; 3] {
    [
        center[0] + rng.uniform(-ext[0], ext[0]),
        center[1] + rng.uniform(-ext[1], ext[1]),
        center[2] + rng.uniform(-ext[2], ext[2]),
    ]
}

fn sample_object_points(
    shape: &str,
    center: [f64; 3],
    n: usize,
    rng: &mut SeedRng,
) -> Vec<[f64; 3]> {
    let mut pts = Vec::with_capacity(n);
    match shape {
        "box" => {
            let ext = [rng.uniform(0.25, 0.4), rng.uniform(0.25, 0.4), rng.uniform(0.2, 0.3)];
            let c = [center[0], center[1], ext[2]];
            for _ in 0..n {
                pts.push(box_point(c, ext, rng));
            }
        }
        "sphere" => {
            let r = rng.uniform(0.2, 0.32);
            let c = [center[0], center[1], r];
            for _ in 0..n {
                // uniform in the ball
                loop {
                    let p = [rng.uniform(-r, r), rng.uniform(-r, r), rng.uniform(-r, r)];
                    if p[0] * p[0] + p[1] * p[1] + p[2] * p[2] <= r * r {
                        pts.push([c[0] + p[0], c[1] + p[1], c[2] + p[2]]);
                        break;
                    }
                }
            }
        }
        "cylinder" => {
            let r = rng.uniform(0.15, 0.28);
            let h = rng.uniform(0.4, 0.7);
            for _ in 0..n {
                loop {
                    let x = rng.uniform(-r, r);
                    let y = rng.uniform(-r, r);
                    if x * x + y * y <= r * r {
                        pts.push([center[0] + x, center[1] + y, rng.uniform(0.0, h)]);
                        break;
                    }
                }
            }
        }
        "chair" => {
            // seat + back + four legs
            let seat_h = 0.35;
            let seat = ([center[0], center[1], seat_h], [0.22, 0.22, 0.035]);
            let back = ([center[0], center[1] + 0.2, seat_h + 0.28], [0.22, 0.03, 0.24]);
            let n_seat = n * 2 / 5;
            let n_back = n * 3 / 10;
            let n_legs = n - n_seat - n_back;
            for _ in 0..n_seat {
                pts.push(box_point(seat.0, seat.1, rng));
            }
            for _ in 0..n_back {
                pts.push(box_point(back.0, back.1, rng));
            }
            let legs = [[-0.18, -0.18], [0.18, -0.18], [-0.18, 0.18], [0.18, 0.18]];
            for k in 0..n_legs {
                let leg = legs[k % 4];
                pts.push(box_point(
                    [center[0] + leg[0], center[1] + leg[1], seat_h / 2.0],
                    [0.025, 0.025, seat_h / 2.0],
                    rng,
                ));
            }
        }
        other => unreachable!("unknown shape {other}"),
    }
    pts
}

fn referring_samples(objects: &[SceneObject]) -> Vec<SampleRecord> {
    objects
        .iter()
        .filter(|o| {
            objects
                .iter()
                .filter(|p| p.shape == o.shape && p.color == o.color)
                .count()
                == 1
        })
        .map(|o| SampleRecord {
            scene: String::new(),
            instruction: format!("Segment the {} {}.", o.color, o.shape),
            response: format!("It is <OBJ{}>. <SEG>", o.id),
            target_instance: o.id,
            task: TaskKind::Referring,
        })
        .collect()
}

fn spatial_samples(objects: &[SceneObject]) -> Vec<SampleRecord> {
    let mut out = Vec::new();
    for anchor in objects {
        // the anchor itself must be uniquely describable
        if objects
            .iter()
            .filter(|p| p.shape == anchor.shape && p.color == anchor.color)
            .count()
            != 1
        {
            continue;
        }
        for shape in SHAPES {
            let candidates: Vec<&SceneObject> = objects
                .iter()
                .filter(|o| {
                    o.id != anchor.id && o.shape == shape && o.center[0] < anchor.center[0] - 0.5
                })
                .collect();
            if candidates.len() == 1 {
                let target = candidates[0];
                out.push(SampleRecord {
                    scene: String::new(),
                    instruction: format!(
                        "Segment the {shape} to the left of the {} {}.",
                        anchor.color, anchor.shape
                    ),
                    response: format!("It is <OBJ{}>. <SEG>", target.id),
                    target_instance: target.id,
                    task: TaskKind::Spatial,
                });
            }
        }
    }
    out
}

fn reasoning_samples(objects: &[SceneObject]) -> Vec<SampleRecord> {
    let phrases: &[(&str, &[&str])] = &[
        ("sphere", &["Segment the object that can roll in any direction."]),
        (
            "chair",
            &[
                "Segment the object that people can sit on.",
                "Segment the object that can accommodate multiple people.",
            ],
        ),
        ("cylinder", &["Segment the object shaped like a can."]),
        ("box", &["Segment the object best suited for storing items."]),
    ];
    let mut out = Vec::new();
    for (shape, lines) in phrases {
        let matching: Vec<&SceneObject> = objects.iter().filter(|o| o.shape == *shape).collect();
        if matching.len() == 1 {
            for line in *lines {
                out.push(SampleRecord {
                    scene: String::new(),
                    instruction: line.to_string(),
                    response: format!("It is <OBJ{}>. <SEG>", matching[0].id),
                    target_instance: matching[0].id,
                    task: TaskKind::Reasoning,
                });
            }
        }
    }
    out
}

fn qa_samples(objects: &[SceneObject]) -> Vec<SampleRecord> {
    let mut out = Vec::new();
    for shape in SHAPES {
        let matching: Vec<&SceneObject> = objects.iter().filter(|o| o.shape == shape).collect();
        if matching.len() == 1 {
            out.push(SampleRecord {
                scene: String::new(),
                instruction: format!("What color is the {shape}?"),
                response: format!("It is {}.", matching[0].color),
                target_instance: matching[0].id,
                task: TaskKind::Qa,
            });
        }
    }
    out
}

/// Generate one scene plus its superpoint partition and sample records.
pub fn synth_scene(
    cfg: &GeneratorConfig,
    seed: u64,
    name: &str,
) -> Result<(PointCloud, SuperpointPartition, Vec<SampleRecord>)> {
    if cfg.objects_per_scene == 0 {
        return Err(Error::Contract("objects_per_scene must be at least 1".into()));
    }
    if cfg.objects_per_scene > 9 {
        return Err(Error::Contract("at most 9 objects fit the placement lattice".into()));
    }
    if cfg.points_per_object < 10 {
        return Err(Error::Contract("points_per_object must be at least 10".into()));
    }
    let mut rng = SeedRng::new(seed);

    // distinct (color, shape) pairs so every referring expression is unique
    let mut combos: Vec<(usize, usize)> = (0..COLORS.len())
        .flat_map(|c| (0..SHAPES.len()).map(move |s| (c, s)))
        .collect();
    rng.shuffle(&mut combos);

    // placement lattice: 3×3 cell centers over a 4×4 m floor
    let mut slots: Vec<[f64; 2]> = Vec::new();
    for gx in 0..3 {
        for gy in 0..3 {
            slots.push([0.75 + 1.25 * gx as f64, 0.75 + 1.25 * gy as f64]);
        }
    }
    rng.shuffle(&mut slots);

    let mut positions = Vec::new();
    let mut colors = Vec::new();
    let mut instances = Vec::new();
    let mut objects = Vec::new();

    for k in 0..cfg.objects_per_scene {
        let (ci, si) = combos[k];
        let (color_name, base_rgb) = COLORS[ci];
        let shape = SHAPES[si];
        let slot = slots[k];
        let center = [
            slot[0] + rng.uniform(-0.12, 0.12),
            slot[1] + rng.uniform(-0.12, 0.12),
            0.0,
        ];
        let pts = sample_object_points(shape, center, cfg.points_per_object, &mut rng);
        let start = positions.len();
        for p in pts {
            positions.push(p);
            colors.push(jitter_color(base_rgb, &mut rng));
        }
        let id = (k + 1) as u32;
        instances.push(Instance {
            id,
            label: shape.to_string(),
            point_indices: (start..positions.len()).collect(),
        });
        objects.push(SceneObject { id, shape, color: color_name, center });
    }

    for _ in 0..cfg.floor_points {
        positions.push([rng.uniform(0.0, 4.0), rng.uniform(0.0, 4.0), rng.uniform(0.0, 0.02)]);
        colors.push(jitter_color([0.5, 0.5, 0.5], &mut rng));
    }

    let pc = PointCloud { name: name.to_string(), positions, colors, instances };
    pc.validate()?;
    let sp = generate_superpoints(&pc, cfg.voxel_size)?;

    // round-robin over task kinds until the per-scene budget is filled
    let mut pools = [
        referring_samples(&objects),
        spatial_samples(&objects),
        reasoning_samples(&objects),
        qa_samples(&objects),
    ];
    for pool in &mut pools {
        rng.shuffle(pool);
    }
    let mut samples = Vec::new();
    let mut cursor = [0usize; 4];
    while samples.len() < cfg.samples_per_scene {
        let before = samples.len();
        for (k, pool) in pools.iter().enumerate() {
            if samples.len() == cfg.samples_per_scene {
                break;
            }
            if cursor[k] < pool.len() {
                samples.push(pool[cursor[k]].clone());
                cursor[k] += 1;
            }
        }
        if samples.len() == before {
            break; // pools exhausted
        }
    }
    Ok((pc, sp, samples))
}
