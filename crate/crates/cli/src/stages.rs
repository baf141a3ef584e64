//! The seven single-run pipeline stages.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sdfmap_core::augment::{self, Dataset, LabeledSample};
use sdfmap_core::model::{self, FourierEncoder, SdfModel};
use sdfmap_core::pointcloud::{self, PointCloud};
use sdfmap_core::reconstruct::{self, SliceField};
use sdfmap_core::synthetic::{self, Scene};

use crate::config::PipelineConfig;
use crate::manifest::{file_digest, prepare_out_dir, Manifest, ManifestBuilder};
use crate::{CliError, Result};

fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        return Err(CliError::Validation(format!(
            "missing {what}: {}",
            path.display()
        )));
    }
    Ok(())
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Load a cloud by extension: `.bin` packed float records, anything else the
/// ASCII format.
pub fn load_cloud(path: &Path, config: &PipelineConfig) -> Result<PointCloud> {
    require_file(path, "point cloud")?;
    let cloud = if path.extension().is_some_and(|e| e == "bin") {
        pointcloud::load_bin_records(path, &config.record_layout).map_err(runtime)?
    } else {
        pointcloud::load_ascii_xyz(path).map_err(runtime)?
    };
    Ok(cloud)
}

/// `simulate`: scene file in, simulated scan out.
pub fn simulate(scene_path: &Path, config: &PipelineConfig, out: &Path) -> Result<Manifest> {
    require_file(scene_path, "scene file")?;
    let out = prepare_out_dir(out)?;
    let scene = Scene::load(scene_path).map_err(CliError::validation)?;
    let cloud = synthetic::simulate_scan(&scene, &config.scan).map_err(runtime)?;
    if cloud.is_empty() {
        return Err(CliError::Runtime("scan produced zero hits".into()));
    }
    let scan_file = out.join("scan.xyz");
    pointcloud::save_ascii_xyz(&cloud, &scan_file).map_err(runtime)?;

    let mut b = ManifestBuilder::new("simulate", config);
    b.input("scene", scene_path)?;
    b.artifact("scan", "scan.xyz");
    b.metric("hit_count", cloud.len());
    b.write(&out)
}

/// `ingest`: class filter, optional scene-change gate, ground filter.
pub fn ingest(
    cloud_path: &Path,
    labels_path: Option<&Path>,
    prev_path: Option<&Path>,
    config: &PipelineConfig,
    out: &Path,
) -> Result<Manifest> {
    let out = prepare_out_dir(out)?;
    let mut cloud = load_cloud(cloud_path, config)?;
    let mut b = ManifestBuilder::new("ingest", config);
    b.input("cloud", cloud_path)?;

    if let Some(labels) = labels_path {
        require_file(labels, "label sidecar")?;
        b.input("labels", labels)?;
        let ids = pointcloud::load_class_sidecar(labels).map_err(runtime)?;
        cloud = pointcloud::attach_class_labels(&cloud, &ids).map_err(runtime)?;
    }
    if cloud.points.iter().all(|p| p.class_id.is_some()) {
        cloud = pointcloud::filter_classes(&cloud, &config.filter).map_err(runtime)?;
    } else if !config.filter.drop_class_ids.is_empty() {
        return Err(CliError::Validation(
            "filter.drop_class_ids set but the cloud has no class ids (pass a label sidecar)"
                .into(),
        ));
    }
    if cloud.is_empty() {
        return Err(CliError::Runtime("class filter removed every point".into()));
    }

    // Gate against the previous static cloud before ground filtering.
    let mut gate_passed = true;
    if let Some(prev) = prev_path {
        let prev_cloud = load_cloud(prev, config)?;
        b.input("prev", prev)?;
        gate_passed =
            pointcloud::scene_change_gate(&prev_cloud, &cloud, &config.filter).map_err(runtime)?;
    }
    b.metric("gate_passed", gate_passed);

    if gate_passed {
        let (obstacles, floor) = pointcloud::ground_filter(&cloud, &config.filter);
        b.metric("obstacle_count", obstacles.len());
        b.metric("floor_count", floor.len());
        pointcloud::save_ascii_xyz(&obstacles, out.join("obstacles.xyz")).map_err(runtime)?;
        b.artifact("obstacles", "obstacles.xyz");
        if !floor.is_empty() {
            pointcloud::save_ascii_xyz(&floor, out.join("floor.xyz")).map_err(runtime)?;
            b.artifact("floor", "floor.xyz");
        }
    }
    b.write(&out)
}

/// `augment`: obstacle cloud in, labeled dataset out.
pub fn augment(cloud_path: &Path, config: &PipelineConfig, out: &Path) -> Result<Manifest> {
    let out = prepare_out_dir(out)?;
    let cloud = load_cloud(cloud_path, config)?;
    let dataset = augment::build_dataset(&cloud, &config.sample, config.method, &config.confidence)
        .map_err(runtime)?;
    let dataset_file = out.join("dataset.txt");
    augment::save_dataset(&dataset, &dataset_file).map_err(runtime)?;

    let mut b = ManifestBuilder::new("augment", config);
    b.input("cloud", cloud_path)?;
    b.artifact("dataset", "dataset.txt");
    b.metric("sample_count", dataset.len());
    b.metric("surface_count", dataset.surface_count);
    b.metric("dataset_sha256", file_digest(&dataset_file)?);
    b.write(&out)
}

/// Build the encoder named by the config, if enabled.
pub fn encoder_from(config: &PipelineConfig) -> Result<Option<FourierEncoder>> {
    match config.encoder.to_core() {
        Some(core_config) => Ok(Some(
            FourierEncoder::from_config(&core_config).map_err(CliError::validation)?,
        )),
        None => Ok(None),
    }
}

/// `train`: dataset in, checkpoint plus loss history out.
pub fn train(dataset_path: &Path, config: &PipelineConfig, out: &Path) -> Result<Manifest> {
    require_file(dataset_path, "dataset")?;
    let out = prepare_out_dir(out)?;
    let dataset = augment::load_dataset(dataset_path).map_err(runtime)?;
    if dataset.is_empty() {
        return Err(CliError::Validation("dataset has no samples".into()));
    }
    let encoder = encoder_from(config)?;
    let (model, history) =
        model::train(&dataset, encoder, &config.mlp, &config.train).map_err(runtime)?;

    let checkpoint = out.join("model.sdfm");
    model::save_checkpoint(&model, &checkpoint).map_err(runtime)?;
    let mut loss_csv = String::from("epoch,mean_loss\n");
    for (epoch, loss) in history.iter().enumerate() {
        loss_csv.push_str(&format!("{epoch},{loss:.12e}\n"));
    }
    fs::write(out.join("loss.csv"), loss_csv).map_err(runtime)?;

    let mut b = ManifestBuilder::new("train", config);
    b.input("dataset", dataset_path)?;
    b.artifact("checkpoint", "model.sdfm");
    b.artifact("loss_history", "loss.csv");
    if let Some(final_loss) = history.last() {
        b.metric("final_loss", final_loss);
    }
    b.metric("parameter_count", model.parameter_count());
    b.metric("checkpoint_sha256", file_digest(&checkpoint)?);
    b.write(&out)
}

/// One evaluation-scatter row.
#[derive(Debug, Clone, Copy)]
pub struct ScatterRow {
    pub sdf_label: f64,
    pub sdf_pred: f64,
    pub conf_pred: f64,
    pub valid: bool,
}

/// Predicted confidence is valid when it lies in [0, 1 + 1e-6].
pub fn scatter_rows(model: &SdfModel, samples: &[LabeledSample]) -> Vec<ScatterRow> {
    samples
        .iter()
        .map(|s| {
            let (sdf_pred, conf_pred) = model.forward(&s.position);
            ScatterRow {
                sdf_label: s.sdf,
                sdf_pred,
                conf_pred,
                valid: (0.0..=1.0 + 1e-6).contains(&conf_pred),
            }
        })
        .collect()
}

pub fn write_scatter_csv(rows: &[ScatterRow], path: &Path) -> Result<()> {
    let mut out = String::from("sdf_label,sdf_pred,conf_pred,valid_flag\n");
    for r in rows {
        out.push_str(&format!(
            "{:.8e},{:.8e},{:.8e},{}\n",
            r.sdf_label, r.sdf_pred, r.conf_pred, r.valid
        ));
    }
    fs::write(path, out).map_err(runtime)
}

/// Shell metrics of a model against the analytic oracle.
#[derive(Debug, Clone, Copy)]
pub struct ShellMetrics {
    pub points: usize,
    pub sign_agreement: f64,
    pub mean_abs_error: f64,
    pub median_abs_error: f64,
}

/// Monte-Carlo shell evaluation: scan hit points offset along the analytic
/// surface normal by u ~ U(-h, h).
pub fn shell_metrics(
    model: &SdfModel,
    scene: &Scene,
    scan: &PointCloud,
    config: &PipelineConfig,
) -> Result<ShellMetrics> {
    if scan.is_empty() {
        return Err(CliError::Runtime("empty scan for shell evaluation".into()));
    }
    let settings = config.eval;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut agree = 0usize;
    let mut errors = Vec::with_capacity(settings.points);
    for _ in 0..settings.points {
        let hit = scan.points[rng.gen_range(0..scan.len())].position;
        let normal = synthetic::analytic_normal(scene, &hit);
        let u: f64 = rng.gen_range(-settings.shell_halfwidth..settings.shell_halfwidth);
        let p = sdfmap_core::pointcloud::Point3::new(
            hit.x + u * normal.x,
            hit.y + u * normal.y,
            hit.z + u * normal.z,
        );
        let truth = synthetic::analytic_sdf(scene, &p);
        let (pred, _) = model.forward(&p);
        if (pred >= 0.0) == (truth >= 0.0) {
            agree += 1;
        }
        errors.push((pred - truth).abs());
    }
    errors.sort_by(f64::total_cmp);
    let n = errors.len();
    Ok(ShellMetrics {
        points: n,
        sign_agreement: agree as f64 / n as f64,
        mean_abs_error: errors.iter().sum::<f64>() / n as f64,
        median_abs_error: errors[n / 2],
    })
}

/// `eval`: score a checkpoint against the analytic scene oracle and/or a
/// labeled dataset.
pub fn eval(
    checkpoint_path: &Path,
    scene_path: Option<&Path>,
    dataset_path: Option<&Path>,
    config: &PipelineConfig,
    out: &Path,
) -> Result<Manifest> {
    require_file(checkpoint_path, "checkpoint")?;
    if scene_path.is_none() && dataset_path.is_none() {
        return Err(CliError::Validation(
            "eval needs --scene (oracle metrics) or --dataset (label scatter)".into(),
        ));
    }
    let out = prepare_out_dir(out)?;
    let model = model::load_checkpoint(checkpoint_path).map_err(runtime)?;
    let mut b = ManifestBuilder::new("eval", config);
    b.input("checkpoint", checkpoint_path)?;
    let mut metrics_csv = String::from("metric,value\n");

    if let Some(scene_path) = scene_path {
        require_file(scene_path, "scene file")?;
        b.input("scene", scene_path)?;
        let scene = Scene::load(scene_path).map_err(CliError::validation)?;
        let scan = synthetic::simulate_scan(&scene, &config.scan).map_err(runtime)?;
        let shell = shell_metrics(&model, &scene, &scan, config)?;
        metrics_csv.push_str(&format!("shell_points,{}\n", shell.points));
        metrics_csv.push_str(&format!("sign_agreement,{:.6}\n", shell.sign_agreement));
        metrics_csv.push_str(&format!("mean_abs_error,{:.6}\n", shell.mean_abs_error));
        metrics_csv.push_str(&format!("median_abs_error,{:.6}\n", shell.median_abs_error));
        b.metric("sign_agreement", shell.sign_agreement);
        b.metric("mean_abs_error", shell.mean_abs_error);
    }

    if let Some(dataset_path) = dataset_path {
        require_file(dataset_path, "dataset")?;
        b.input("dataset", dataset_path)?;
        let dataset = augment::load_dataset(dataset_path).map_err(runtime)?;
        let rows = scatter_rows(&model, &dataset.samples);
        write_scatter_csv(&rows, &out.join("scatter.csv"))?;
        b.artifact("scatter", "scatter.csv");
        let invalid = rows.iter().filter(|r| !r.valid).count();
        metrics_csv.push_str(&format!("scatter_rows,{}\n", rows.len()));
        metrics_csv.push_str(&format!("invalid_confidence_rows,{invalid}\n"));
        b.metric("invalid_confidence_rows", invalid);
        let loss = model::batch_loss(&model, &dataset.samples, &config.train).map_err(runtime)?;
        metrics_csv.push_str(&format!("dataset_loss,{loss:.8e}\n"));
        b.metric("dataset_loss", loss);
    }

    fs::write(out.join("metrics.csv"), metrics_csv).map_err(runtime)?;
    b.artifact("metrics", "metrics.csv");
    b.write(&out)
}

/// `extract`: checkpoint in, iso-surface mesh out.
pub fn extract(checkpoint_path: &Path, config: &PipelineConfig, out: &Path) -> Result<Manifest> {
    require_file(checkpoint_path, "checkpoint")?;
    let out = prepare_out_dir(out)?;
    let model = model::load_checkpoint(checkpoint_path).map_err(runtime)?;
    let grid = reconstruct::sample_grid(
        &model,
        &config.grid.bounds,
        (
            config.grid.resolution[0],
            config.grid.resolution[1],
            config.grid.resolution[2],
        ),
    )
    .map_err(CliError::validation)?;
    let mesh = reconstruct::marching_cubes(&grid, 0.0);
    reconstruct::save_obj(&mesh, out.join("mesh.obj")).map_err(runtime)?;
    reconstruct::save_ply(&mesh, out.join("mesh.ply")).map_err(runtime)?;

    let mut b = ManifestBuilder::new("extract", config);
    b.input("checkpoint", checkpoint_path)?;
    b.artifact("mesh_obj", "mesh.obj");
    b.artifact("mesh_ply", "mesh.ply");
    b.metric("vertex_count", mesh.vertices.len());
    b.metric("triangle_count", mesh.triangles.len());
    b.metric("degenerate_dropped", mesh.degenerate_dropped);
    if config.grid.export_csv {
        let mut csv = String::from("x,y,z,value\n");
        let (nx, ny, nz) = grid.resolution;
        for ix in 0..nx {
            for iy in 0..ny {
                for iz in 0..nz {
                    let p = grid.lattice_point(ix, iy, iz);
                    csv.push_str(&format!(
                        "{:.8e},{:.8e},{:.8e},{:.8e}\n",
                        p.x,
                        p.y,
                        p.z,
                        grid.value(ix, iy, iz)
                    ));
                }
            }
        }
        fs::write(out.join("grid.csv"), csv).map_err(runtime)?;
        b.artifact("grid", "grid.csv");
    }
    b.write(&out)
}

/// `slice`: checkpoint in, bird's-eye graymap + CSV out.
pub fn slice(checkpoint_path: &Path, config: &PipelineConfig, out: &Path) -> Result<Manifest> {
    require_file(checkpoint_path, "checkpoint")?;
    let out = prepare_out_dir(out)?;
    let model = model::load_checkpoint(checkpoint_path).map_err(runtime)?;
    let slice = compute_slice(&model, config)?;
    reconstruct::save_pgm(&slice, out.join("slice.pgm")).map_err(runtime)?;
    reconstruct::save_slice_csv(&slice, out.join("slice.csv")).map_err(runtime)?;

    let mut b = ManifestBuilder::new("slice", config);
    b.input("checkpoint", checkpoint_path)?;
    b.artifact("image", "slice.pgm");
    b.artifact("values", "slice.csv");
    b.metric("negative_components", slice.negative_components());
    b.write(&out)
}

pub fn compute_slice(model: &SdfModel, config: &PipelineConfig) -> Result<SliceField> {
    let s = config.slice;
    reconstruct::birds_eye_slice(
        model,
        s.z,
        s.min,
        s.max,
        (s.resolution[0], s.resolution[1]),
    )
    .map_err(CliError::validation)
}

/// In-memory variant of the simulate → augment chain used by the harness.
pub fn build_street_dataset(
    scene: &Scene,
    config: &PipelineConfig,
    method: sdfmap_core::augment::Method,
    sample_seed: u64,
) -> Result<Dataset> {
    let cloud = synthetic::simulate_scan(scene, &config.scan).map_err(runtime)?;
    let mut spec = config.sample;
    spec.seed = sample_seed;
    augment::build_dataset(&cloud, &spec, method, &config.confidence).map_err(runtime)
}
