//! The three comparative studies: network depth, augmentation scheme, and
//! the Fourier encoder. All are paired designs: arms share datasets, splits,
//! and seeds wherever the comparison calls for it, and every emitted CSV is
//! reproducible byte for byte from the manifest.

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sdfmap_core::augment::{self, Dataset, Method};
use sdfmap_core::model::{self, Activation, MlpConfig, TrainConfig};
use sdfmap_core::pointcloud::PointCloud;
use sdfmap_core::synthetic::{self, Scene};

use crate::config::PipelineConfig;
use crate::manifest::{hex_digest, prepare_out_dir, Manifest, ManifestBuilder};
use crate::plot::{write_plot, Series};
use crate::stages::{self, encoder_from, scatter_rows, write_scatter_csv};
use crate::{CliError, Result};

/// Obstacle points for an experiment: either a scene to scan or a cloud file.
pub fn experiment_source(
    scene: Option<&Path>,
    cloud: Option<&Path>,
    config: &PipelineConfig,
) -> Result<(PointCloud, Option<Scene>)> {
    match (scene, cloud) {
        (Some(scene_path), None) => {
            let scene = Scene::load(scene_path).map_err(CliError::validation)?;
            let cloud = synthetic::simulate_scan(&scene, &config.scan).map_err(CliError::runtime)?;
            Ok((cloud, Some(scene)))
        }
        (None, Some(cloud_path)) => Ok((stages::load_cloud(cloud_path, config)?, None)),
        (Some(_), Some(_)) => Err(CliError::Validation(
            "pass either --scene or --cloud, not both".into(),
        )),
        (None, None) => Err(CliError::Validation(
            "an experiment needs --scene or --cloud".into(),
        )),
    }
}

fn build_arm_dataset(
    obstacles: &PointCloud,
    config: &PipelineConfig,
    method: Method,
    seed: u64,
) -> Result<Dataset> {
    let mut spec = config.sample;
    spec.seed = seed;
    augment::build_dataset(obstacles, &spec, method, &config.confidence).map_err(CliError::runtime)
}

fn dataset_digest(dataset: &Dataset) -> String {
    hex_digest(augment::dataset_text(dataset).as_bytes())
}

/// Deterministic parallel map: output order is the input order regardless of
/// how many workers run.
fn parallel_map<T, R, F>(items: &[T], threads: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = if threads == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        threads
    }
    .min(items.len().max(1));

    if workers <= 1 {
        return items.iter().map(|item| f(item)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                if idx >= items.len() {
                    break;
                }
                let result = f(&items[idx]);
                *slots[idx].lock().unwrap() = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("worker filled slot"))
        .collect()
}

/// 80/20 split by seeded shuffle; the same split serves every arm.
fn holdout_split(dataset: &Dataset, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let test_len = dataset.len() / 5;
    let test = order[..test_len].to_vec();
    let train = order[test_len..].to_vec();
    (train, test)
}

fn subset(dataset: &Dataset, indices: &[usize]) -> Dataset {
    let mut out = dataset.clone();
    out.samples = indices.iter().map(|&i| dataset.samples[i]).collect();
    out.surface_count = 0; // subset ordering no longer groups surface rows
    out
}

/// `sweep-depth`: 40 models over hidden_layers 1..=20 x skip on/off, with
/// the §-fixed constants relu/width-64/huber/adam, one shared dataset and one
/// shared 80/20 split.
pub fn sweep_depth(
    scene: Option<&Path>,
    cloud: Option<&Path>,
    config: &PipelineConfig,
    out: &Path,
) -> Result<Manifest> {
    let out = prepare_out_dir(out)?;
    let (obstacles, _) = experiment_source(scene, cloud, config)?;
    let dataset = build_arm_dataset(&obstacles, config, config.method, config.sample.seed)?;
    let digest = dataset_digest(&dataset);
    let (train_idx, test_idx) = holdout_split(&dataset, config.experiment.holdout_seed);
    let train_set = subset(&dataset, &train_idx);
    let test_set = subset(&dataset, &test_idx);

    let arms: Vec<(usize, bool)> = (1..=20usize)
        .flat_map(|layers| [(layers, false), (layers, true)])
        .collect();
    let tc = TrainConfig {
        epochs: config.experiment.sweep_epochs,
        ..config.train
    };
    let results = parallel_map(&arms, config.experiment.threads, |&(layers, skip)| {
        let mc = MlpConfig {
            hidden_layers: layers,
            hidden_width: 64,
            activation: Activation::Relu,
            skip_connections: skip,
            ..config.mlp
        };
        let encoder = encoder_from(config)?;
        let (model, _) = model::train(&train_set, encoder, &mc, &tc).map_err(CliError::runtime)?;
        let test_loss =
            model::batch_loss(&model, &test_set.samples, &tc).map_err(CliError::runtime)?;
        Ok::<_, CliError>((layers, skip, model.parameter_count(), test_loss))
    });

    let mut csv = String::from("layers,skip,params,final_test_loss\n");
    let mut no_skip = Vec::new();
    let mut with_skip = Vec::new();
    for result in results {
        let (layers, skip, params, loss) = result?;
        csv.push_str(&format!("{layers},{skip},{params},{loss:.8e}\n"));
        if skip {
            with_skip.push((params as f64, loss));
        } else {
            no_skip.push((params as f64, loss));
        }
    }
    fs::write(out.join("sweep_depth.csv"), &csv).map_err(CliError::runtime)?;
    write_plot(
        &out.join("sweep_depth.svg"),
        "Held-out loss vs trainable parameters",
        "trainable parameters",
        "test loss",
        &[
            Series {
                label: "no skip connections".into(),
                points: no_skip,
                line: true,
            },
            Series {
                label: "skip connections".into(),
                points: with_skip,
                line: true,
            },
        ],
        &csv,
    )?;

    let mut b = ManifestBuilder::new("sweep-depth", config);
    if let Some(p) = scene {
        b.input("scene", p)?;
    }
    if let Some(p) = cloud {
        b.input("cloud", p)?;
    }
    b.artifact("table", "sweep_depth.csv");
    b.artifact("plot", "sweep_depth.svg");
    b.metric("dataset_sha256", &digest);
    b.metric("train_rows", train_idx.len());
    b.metric("test_rows", test_idx.len());
    b.write(&out)
}

struct AugmentArm {
    method: Method,
    seed: u64,
}

/// `compare-augment`: uniform vs gaussian sampling, one model per arm per
/// seed, final losses plus confidence-vs-distance scatters over one shared
/// evaluation set.
pub fn compare_augmentation(
    scene: Option<&Path>,
    cloud: Option<&Path>,
    config: &PipelineConfig,
    out: &Path,
) -> Result<Manifest> {
    let out = prepare_out_dir(out)?;
    let (obstacles, _) = experiment_source(scene, cloud, config)?;

    // One evaluation set for every arm and seed: uniform sampling covers the
    // whole label range, drawn with a seed none of the arms train on.
    let eval_seed = config.experiment.holdout_seed ^ 0x5eed;
    let eval_set = build_arm_dataset(&obstacles, config, Method::Uniform, eval_seed)?;

    let arms: Vec<AugmentArm> = config
        .experiment
        .seeds
        .iter()
        .flat_map(|&seed| {
            [
                AugmentArm {
                    method: Method::Uniform,
                    seed,
                },
                AugmentArm {
                    method: Method::Gaussian,
                    seed,
                },
            ]
        })
        .collect();
    let tc = TrainConfig {
        epochs: config.experiment.compare_epochs,
        ..config.train
    };
    let results = parallel_map(&arms, config.experiment.threads, |arm| {
        let dataset = build_arm_dataset(&obstacles, config, arm.method, arm.seed)?;
        let digest = dataset_digest(&dataset);
        let mc = MlpConfig {
            seed: arm.seed,
            ..config.mlp
        };
        let tc_arm = TrainConfig {
            seed: arm.seed,
            ..tc
        };
        let encoder = encoder_from(config)?;
        let (model, history) =
            model::train(&dataset, encoder, &mc, &tc_arm).map_err(CliError::runtime)?;
        let rows = scatter_rows(&model, &eval_set.samples);
        Ok::<_, CliError>((digest, history.last().copied().unwrap_or(f64::NAN), rows))
    });

    let mut summary =
        String::from("method,seed,final_huber_loss,invalid_rows,negative_invalid_rows,dataset_sha256\n");
    let mut digests = Vec::new();
    let mut first_seed_series = Vec::new();
    for (arm, result) in arms.iter().zip(results) {
        let (digest, final_loss, rows) = result?;
        let invalid = rows.iter().filter(|r| !r.valid).count();
        let negative_invalid = rows
            .iter()
            .filter(|r| r.sdf_label < 0.0 && r.conf_pred < 0.0)
            .count();
        summary.push_str(&format!(
            "{},{},{:.8e},{},{},{}\n",
            arm.method, arm.seed, final_loss, invalid, negative_invalid, digest
        ));
        let scatter_name = format!("scatter_{}_seed{}.csv", arm.method, arm.seed);
        write_scatter_csv(&rows, &out.join(&scatter_name))?;
        if arm.seed == config.experiment.seeds[0] {
            first_seed_series.push(Series {
                label: arm.method.to_string(),
                points: rows.iter().map(|r| (r.sdf_label, r.conf_pred)).collect(),
                line: false,
            });
        }
        digests.push(digest);
    }
    fs::write(out.join("compare_augment.csv"), &summary).map_err(CliError::runtime)?;
    write_plot(
        &out.join("compare_augment.svg"),
        "Predicted confidence vs distance label",
        "signed distance label (m)",
        "predicted confidence",
        &first_seed_series,
        &summary,
    )?;

    let mut b = ManifestBuilder::new("compare-augment", config);
    if let Some(p) = scene {
        b.input("scene", p)?;
    }
    if let Some(p) = cloud {
        b.input("cloud", p)?;
    }
    b.artifact("table", "compare_augment.csv");
    b.artifact("plot", "compare_augment.svg");
    b.metric("eval_set_sha256", dataset_digest(&eval_set));
    b.metric("arm_dataset_sha256", digests);
    b.write(&out)
}

/// `compare-encoder`: the three-arm table — plain network on uniform data,
/// plain network on gaussian data, encoder network on gaussian data.
pub fn compare_encoder(
    scene: Option<&Path>,
    cloud: Option<&Path>,
    config: &PipelineConfig,
    out: &Path,
) -> Result<Manifest> {
    let out = prepare_out_dir(out)?;
    let (obstacles, _) = experiment_source(scene, cloud, config)?;

    struct Arm {
        label: &'static str,
        augmentation: &'static str,
        method: Method,
        with_encoder: bool,
        seed: u64,
    }
    let arms: Vec<Arm> = config
        .experiment
        .seeds
        .iter()
        .flat_map(|&seed| {
            [
                Arm {
                    label: "ANN",
                    augmentation: "UNIFORM",
                    method: Method::Uniform,
                    with_encoder: false,
                    seed,
                },
                Arm {
                    label: "ANN",
                    augmentation: "GAUSSIAN",
                    method: Method::Gaussian,
                    with_encoder: false,
                    seed,
                },
                Arm {
                    label: "ANN+FF",
                    augmentation: "GAUSSIAN",
                    method: Method::Gaussian,
                    with_encoder: true,
                    seed,
                },
            ]
        })
        .collect();
    let tc = TrainConfig {
        epochs: config.experiment.compare_epochs,
        ..config.train
    };
    let results = parallel_map(&arms, config.experiment.threads, |arm| {
        let dataset = build_arm_dataset(&obstacles, config, arm.method, arm.seed)?;
        let digest = dataset_digest(&dataset);
        let mc = MlpConfig {
            seed: arm.seed,
            ..config.mlp
        };
        let tc_arm = TrainConfig {
            seed: arm.seed,
            ..tc
        };
        let encoder = if arm.with_encoder {
            encoder_from(config)?
        } else {
            None
        };
        let (_, history) =
            model::train(&dataset, encoder, &mc, &tc_arm).map_err(CliError::runtime)?;
        Ok::<_, CliError>((digest, history.last().copied().unwrap_or(f64::NAN)))
    });

    let mut combined = String::from("model,augmentation,seed,final_huber_loss,dataset_sha256\n");
    let mut per_seed: std::collections::BTreeMap<u64, String> = std::collections::BTreeMap::new();
    let mut series: std::collections::BTreeMap<&'static str, Vec<(f64, f64)>> =
        std::collections::BTreeMap::new();
    for (arm, result) in arms.iter().zip(results) {
        let (digest, final_loss) = result?;
        combined.push_str(&format!(
            "{},{},{},{:.8e},{}\n",
            arm.label, arm.augmentation, arm.seed, final_loss, digest
        ));
        per_seed
            .entry(arm.seed)
            .or_insert_with(|| String::from("model,augmentation,final_huber_loss\n"))
            .push_str(&format!(
                "{},{},{:.8e}\n",
                arm.label, arm.augmentation, final_loss
            ));
        series
            .entry(match (arm.label, arm.augmentation) {
                ("ANN", "UNIFORM") => "ANN / uniform",
                ("ANN", "GAUSSIAN") => "ANN / gaussian",
                _ => "ANN+FF / gaussian",
            })
            .or_default()
            .push((arm.seed as f64, final_loss));
    }
    fs::write(out.join("compare_encoder.csv"), &combined).map_err(CliError::runtime)?;
    for (seed, text) in &per_seed {
        fs::write(out.join(format!("compare_encoder_seed{seed}.csv")), text)
            .map_err(CliError::runtime)?;
    }
    write_plot(
        &out.join("compare_encoder.svg"),
        "Final training loss per arm",
        "seed",
        "final huber loss",
        &series
            .into_iter()
            .map(|(label, points)| Series {
                label: label.into(),
                points,
                line: true,
            })
            .collect::<Vec<_>>(),
        &combined,
    )?;

    let mut b = ManifestBuilder::new("compare-encoder", config);
    if let Some(p) = scene {
        b.input("scene", p)?;
    }
    if let Some(p) = cloud {
        b.input("cloud", p)?;
    }
    b.artifact("table", "compare_encoder.csv");
    b.artifact("plot", "compare_encoder.svg");
    b.write(&out)
}
