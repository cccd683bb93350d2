//! Command-line front end: dataset synthesis, training, evaluation,
//! inference, and gradient checking.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rseg3d::error::{Error, Result};
use rseg3d::numerics::gradcheck::{check_op, op_names, DEFAULT_TOL};
use rseg3d::pipeline::{
    evaluate, infer_on_entry, load_dataset, synth_dataset, train, write_loss_log, RunConfig,
    SceneEntry, Segmenter,
};
use rseg3d::pointcloud::load_scene;

#[derive(Parser)]
#[command(name = "rseg3d", about = "Language-instructed 3D segmentation on point clouds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic benchmark dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        num_scenes: usize,
        #[arg(long, default_value_t = 4)]
        objects_per_scene: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train on a dataset's train split and write a checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// JSON file with RunConfig keys; omitted keys use defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Disable the 2D view feature tokens.
        #[arg(long = "no-2d")]
        no_2d: bool,
        /// Disable the object identifier tokens.
        #[arg(long = "no-obj-ids")]
        no_obj_ids: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint on a dataset's val split and write a report.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long = "no-2d")]
        no_2d: bool,
        #[arg(long = "no-obj-ids")]
        no_obj_ids: bool,
    },
    /// Run one instruction against one scene.
    Infer {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        instruction: String,
        /// Write the predicted point mask as JSON.
        #[arg(long = "out-mask")]
        out_mask: Option<PathBuf>,
    },
    /// Finite-difference checks of the differentiable ops.
    Gradcheck {
        /// Comma-separated op names; defaults to all.
        #[arg(long, value_delimiter = ',')]
        ops: Option<Vec<String>>,
    },
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth { out, num_scenes, objects_per_scene, seed } => {
            let m = synth_dataset(&out, num_scenes, objects_per_scene, seed)?;
            println!(
                "wrote {} train / {} val scenes ({} / {} samples) to {}",
                m.train_scenes,
                m.val_scenes,
                m.train_samples,
                m.val_samples,
                out.display()
            );
            Ok(())
        }
        Command::Train { data, config, out, no_2d, no_obj_ids, seed } => {
            let mut cfg = match config {
                Some(path) => RunConfig::load(&path)?,
                None => RunConfig::default(),
            };
            if no_2d {
                cfg.use_2d_features = false;
            }
            if no_obj_ids {
                cfg.use_object_identifiers = false;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let ds = load_dataset(&data, "train", cfg.voxel_size, cfg.num_views)?;
            let model = Segmenter::<f64>::new(cfg)?;
            let log = train(&model, &ds, &out)?;
            let mut log_path = out.as_os_str().to_owned();
            log_path.push(".loss.jsonl");
            write_loss_log(std::path::Path::new(&log_path), &log)?;
            let last = log.last().expect("training ran at least one step");
            println!(
                "trained {} steps; final losses: llm {:.4} mask {:.4} total {:.4}",
                last.step, last.llm, last.mask, last.total
            );
            println!("checkpoint: {}", out.display());
            Ok(())
        }
        Command::Eval { ckpt, data, report, no_2d, no_obj_ids } => {
            let mut model = Segmenter::<f64>::load(&ckpt)?;
            // flags only narrow: absent switches keep the training-time flags
            if no_2d && model.cfg.use_2d_features {
                eprintln!("warning: --no-2d differs from the training configuration");
                model.cfg.use_2d_features = false;
            }
            if no_obj_ids && model.cfg.use_object_identifiers {
                eprintln!("warning: --no-obj-ids differs from the training configuration");
                model.cfg.use_object_identifiers = false;
            }
            let ds = load_dataset(&data, "val", model.cfg.voxel_size, model.cfg.num_views)?;
            let r = evaluate(&model, &ds)?;
            r.validate()?;
            let text = serde_json::to_string_pretty(&r)
                .map_err(|e| Error::Validation(format!("report encode: {e}")))?;
            std::fs::write(&report, text).map_err(|e| Error::io(&report, e))?;
            if let Some(seg) = &r.segmentation {
                println!(
                    "segmentation: mIoU {:.4} Acc@0.25 {:.4} Acc@0.5 {:.4} ({} samples)",
                    seg.miou, seg.acc_at_025, seg.acc_at_05, seg.count
                );
            }
            if let Some(qa) = &r.qa {
                println!("qa: CIDEr {:.4} BLEU-4 {:.4} ({} samples)", qa.cider, qa.bleu4, qa.count);
            }
            println!("report: {}", report.display());
            Ok(())
        }
        Command::Infer { ckpt, scene, instruction, out_mask } => {
            let model = Segmenter::<f64>::load(&ckpt)?;
            let (pc, sp) = load_scene(&scene)?;
            let entry = SceneEntry::build(pc, sp, model.cfg.voxel_size, model.cfg.num_views)?;
            let result = infer_on_entry(&model, &entry, &instruction)?;
            println!("{}", result.text);
            match (&result.mask, out_mask) {
                (Some(mask), Some(path)) => {
                    let indices: Vec<usize> = mask
                        .bits()
                        .iter()
                        .enumerate()
                        .filter(|(_, &b)| b)
                        .map(|(i, _)| i)
                        .collect();
                    let body = serde_json::json!({
                        "num_points": entry.pc.len(),
                        "point_indices": indices,
                    });
                    std::fs::write(&path, body.to_string()).map_err(|e| Error::io(&path, e))?;
                    println!("mask: {} of {} points -> {}", indices.len(), entry.pc.len(), path.display());
                }
                (Some(mask), None) => {
                    let n = mask.bits().iter().filter(|&&b| b).count();
                    println!("mask: {} of {} points", n, entry.pc.len());
                }
                (None, _) => println!("no <SEG> token emitted; text-only result"),
            }
            Ok(())
        }
        Command::Gradcheck { ops } => {
            let names: Vec<String> = match ops {
                Some(list) => list,
                None => op_names().into_iter().map(String::from).collect(),
            };
            let mut worst_overall: f64 = 0.0;
            for (i, name) in names.iter().enumerate() {
                let worst = check_op(name, 1000 + i as u64)?;
                worst_overall = worst_overall.max(worst);
                println!("{name:<14} max rel error {worst:.3e}");
            }
            if worst_overall > DEFAULT_TOL {
                return Err(Error::Numerical(format!(
                    "gradcheck worst relative error {worst_overall:.3e} exceeds {DEFAULT_TOL:.0e}"
                )));
            }
            println!("all checks within {DEFAULT_TOL:.0e}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
