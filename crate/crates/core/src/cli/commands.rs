use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::scene::{
    load_scene, quaternion_wxyz, save_scene, select_references, write_points, ObjectInfo, Scene, DEFAULT_DEPTH_SCALE,
    RIGIDITY_TOLERANCE,
};
use crate::error::{Error, Result};
use crate::evalkit::{
    orbit_poses, perturb_pose, random_object, random_pose, FrameMetrics, MetricReport, ObjectModel, Primitive,
    SymmetryGroup, SyntheticScene, Texture,
};
use crate::fsutil::{read_json, write_json};
use crate::geometry::{zoom_viewport, CameraIntrinsics, CameraParams, PixelGrid, RigidTransform, Viewport, DEFAULT_ZOOM_DISTANCE};
use crate::modeling::{build_latent, LatentObject, ObservedView};
use crate::objective::LossBreakdown;
use crate::pose::{coarse_estimate, estimate_problem, PoseEstimate, PoseProblem, StopReason};
use crate::raster::Raster;
use crate::rendering::{render_color, render_volume, PoseParams, RenderSetup, TransmittanceDecoder};
use crate::voxels::{read_dump, write_dump};

pub const LATENT_FILE: &str = "latent.bin";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_ECHO: &str = "config.json";
pub const POSES_FILE: &str = "poses.json";

fn echo(out: &Path, cfg: &RunConfig) -> Result<()> {
    write_json(&out.join(CONFIG_ECHO), cfg)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectSpec {
    /// Box with a sphere and a cylinder attached, scaled to `radius`.
    Random { radius: f64 },
    Primitives { primitives: Vec<Primitive> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViewSpec {
    Orbit { count: usize, distance: f64 },
    Random { count: usize, distance: f64, lateral: f64 },
    /// Poses of the reference set, each perturbed.
    Perturbed { count: usize, max_deg: f64, max_t: f64 },
    Poses { object_to_camera: Vec<[[f64; 4]; 4]> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub name: String,
    pub intrinsics: CameraIntrinsics,
    pub object: ObjectSpec,
    pub texture: Texture,
    pub references: ViewSpec,
    pub queries: Option<ViewSpec>,
    pub model_points: usize,
    pub symmetry: Option<SymmetryGroup>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            name: "object".into(),
            intrinsics: CameraIntrinsics {
                fu: 150.0,
                fv: 150.0,
                u0: 64.0,
                v0: 64.0,
                width: 128,
                height: 128,
            },
            object: ObjectSpec::Random { radius: 0.1 },
            texture: Texture::default(),
            references: ViewSpec::Orbit {
                count: 16,
                distance: 0.6,
            },
            queries: Some(ViewSpec::Perturbed {
                count: 5,
                max_deg: 30.0,
                max_t: 0.1,
            }),
            model_points: 2048,
            symmetry: None,
        }
    }
}

impl SynthSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
        } else {
            serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
        }
    }
}

fn view_poses(spec: &ViewSpec, refs: &[RigidTransform], rng: &mut ChaCha8Rng) -> Result<Vec<RigidTransform>> {
    Ok(match spec {
        ViewSpec::Orbit { count, distance } => orbit_poses(*count, *distance, rng.random()),
        ViewSpec::Random { count, distance, lateral } => (0..*count).map(|_| random_pose(rng, *distance, *lateral)).collect(),
        ViewSpec::Perturbed { count, max_deg, max_t } => {
            if refs.is_empty() {
                return Err(Error::InvalidConfig("perturbed views need reference views".into()));
            }
            (0..*count)
                .map(|_| {
                    let base = refs[rng.random_range(0..refs.len())];
                    perturb_pose(rng, &base, *max_deg, *max_t)
                })
                .collect()
        }
        ViewSpec::Poses { object_to_camera } => object_to_camera
            .iter()
            .enumerate()
            .map(|(i, m)| {
                RigidTransform::from_row_major(m, RIGIDITY_TOLERANCE).map_err(|e| Error::NonRigidExtrinsics {
                    entry: format!("object_to_camera[{i}]"),
                    message: e.to_string(),
                })
            })
            .collect::<Result<_>>()?,
    })
}

/// Writes `references/` and, if requested, `queries/` scene directories.
pub fn cmd_synth(spec: &SynthSpec, cfg: &RunConfig, out: &Path) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let primitives = match &spec.object {
        ObjectSpec::Random { radius } => random_object(&mut rng, *radius),
        ObjectSpec::Primitives { primitives } => primitives.clone(),
    };
    let scene = SyntheticScene {
        primitives,
        texture: spec.texture,
        intrinsics: spec.intrinsics,
    };
    scene.validate()?;
    let points = scene.model_points(spec.model_points)?;
    let object = ObjectInfo {
        name: spec.name.clone(),
        diameter_m: 2.0 * scene.bounding_radius(),
        symmetry: spec.symmetry.clone(),
        points_path: Some("points.json".into()),
    };
    let refs = view_poses(&spec.references, &[], &mut rng)?;
    let mut sets = vec![("references", refs.clone())];
    if let Some(q) = &spec.queries {
        sets.push(("queries", view_poses(q, &refs, &mut rng)?));
    }
    for (dir, poses) in sets {
        let views = poses
            .iter()
            .enumerate()
            .map(|(i, p)| Ok((format!("{i:04}"), scene.render(p)?)))
            .collect::<Result<Vec<_>>>()?;
        let d = out.join(dir);
        save_scene(&d, spec.intrinsics, DEFAULT_DEPTH_SCALE, &views, object.clone())?;
        write_points(&points, &d.join("points.json"))?;
    }
    write_json(&out.join("scene.json"), &scene)?;
    echo(out, cfg)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentSummary {
    /// Scene the latent was built from, for image-based color.
    pub scene: PathBuf,
    pub references: Vec<String>,
    pub radius_m: f64,
    pub resolution: usize,
    pub occupied_voxels: usize,
    pub intrinsics: CameraIntrinsics,
    pub object: ObjectInfo,
}

pub fn cmd_reconstruct(scene_dir: &Path, select_refs: Option<usize>, cfg: &RunConfig, out: &Path) -> Result<()> {
    cfg.validate()?;
    let scene = load_scene(scene_dir)?;
    let picked: Vec<usize> = match select_refs {
        Some(n) => {
            let mut idx = select_references(&scene.poses(), n);
            idx.sort_unstable();
            idx
        }
        None => (0..scene.views.len()).collect(),
    };
    let views: Vec<ObservedView> = picked.iter().map(|&i| scene.views[i].clone()).collect();
    let radius = 0.5 * scene.manifest.object.diameter_m;
    let latent = build_latent(
        &views,
        &cfg.modeling.encoder,
        &cfg.modeling.fusion.strategy(),
        &cfg.modeling.config(),
        radius,
    )?;
    write_dump(latent.volume(), &out.join(LATENT_FILE))?;
    let summary = LatentSummary {
        scene: std::fs::canonicalize(scene_dir).map_err(|e| Error::io(scene_dir, e))?,
        references: picked.iter().map(|&i| scene.manifest.views[i].name.clone()).collect(),
        radius_m: radius,
        resolution: latent.resolution(),
        occupied_voxels: latent.occupied().iter().filter(|o| **o).count(),
        intrinsics: scene.manifest.intrinsics,
        object: scene.manifest.object.clone(),
    };
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    echo(out, cfg)
}

/// Latent volume plus its reference views when the source scene is still readable.
pub fn load_latent(dir: &Path) -> Result<(LatentObject, LatentSummary)> {
    let summary: LatentSummary = read_json(&dir.join(SUMMARY_FILE))?;
    let volume = read_dump(&dir.join(LATENT_FILE))?;
    let views = match load_scene(&summary.scene) {
        Ok(scene) => summary
            .references
            .iter()
            .filter_map(|n| scene.manifest.views.iter().position(|v| &v.name == n).map(|i| scene.views[i].clone()))
            .collect(),
        Err(_) => Vec::new(),
    };
    Ok((LatentObject::new(volume, views)?, summary))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseEntry {
    pub name: String,
    pub object_to_camera: [[f64; 4]; 4],
}

/// Cameras to render; also accepts a predictions file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraSpec {
    #[serde(default)]
    pub intrinsics: Option<CameraIntrinsics>,
    pub frames: Vec<PoseEntry>,
}

impl CameraSpec {
    pub fn orbit(count: usize, distance: f64, seed: u64) -> Self {
        Self {
            intrinsics: None,
            frames: orbit_poses(count, distance, seed)
                .iter()
                .enumerate()
                .map(|(i, p)| PoseEntry {
                    name: format!("{i:04}"),
                    object_to_camera: p.to_row_major(),
                })
                .collect(),
        }
    }
}

/// Full-frame depth, mask and image-based color for one camera.
pub fn render_frame(latent: &LatentObject, camera: &CameraParams, cfg: &RunConfig) -> Result<ObservedView> {
    let k = camera.intrinsics;
    let e = camera.extrinsics;
    let pose = PoseParams::new(
        e.rotation,
        e.translation,
        zoom_viewport(&k, &e.translation, latent.diameter(), DEFAULT_ZOOM_DISTANCE)?,
    );
    let setup = RenderSetup {
        intrinsics: k,
        target: PixelGrid::full(&k),
        lateral: cfg.render.lateral,
        depth_bins: latent.resolution(),
    };
    let out = render_volume(latent.volume(), &pose, &setup, &TransmittanceDecoder)?;
    let mask = out.mask.map(|&m| if m >= 0.5 { 1.0 } else { 0.0 });
    let depth = Raster::from_fn(k.width, k.height, |x, y| if mask.get(x, y) > 0.0 { out.depth.get(x, y) } else { 0.0 });
    let image = if latent.views().is_empty() {
        Raster::filled(k.width, k.height, [0.0; 3])
    } else {
        render_color(latent.views(), camera, &depth, &cfg.blend)?.0
    };
    ObservedView::new(image, mask, depth, *camera)
}

/// Renders every camera into a scene directory under `out`.
pub fn cmd_render(latent_dir: &Path, cameras: &CameraSpec, cfg: &RunConfig, out: &Path) -> Result<()> {
    cfg.validate()?;
    let (latent, summary) = load_latent(latent_dir)?;
    let k = cameras.intrinsics.unwrap_or(summary.intrinsics);
    k.validate()?;
    let views = cameras
        .frames
        .par_iter()
        .map(|f| {
            let e = RigidTransform::from_row_major(&f.object_to_camera, RIGIDITY_TOLERANCE).map_err(|err| {
                Error::NonRigidExtrinsics {
                    entry: f.name.clone(),
                    message: err.to_string(),
                }
            })?;
            Ok((f.name.clone(), render_frame(&latent, &CameraParams::new(k, e, Viewport::full(&k)), cfg)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut object = summary.object.clone();
    object.points_path = None;
    save_scene(out, k, DEFAULT_DEPTH_SCALE, &views, object)?;
    echo(out, cfg)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameLoss {
    pub depth: f64,
    pub mask: f64,
    pub iou: f64,
    pub latent: f64,
    pub total: f64,
}

impl From<&LossBreakdown> for FrameLoss {
    fn from(l: &LossBreakdown) -> Self {
        Self {
            depth: l.depth,
            mask: l.mask,
            iou: l.iou,
            latent: l.latent,
            total: l.total,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub name: String,
    /// Row-major object-to-camera matrix; authoritative.
    pub object_to_camera: [[f64; 4]; 4],
    pub quaternion_wxyz: [f64; 4],
    pub translation: [f64; 3],
    pub viewport: [f64; 4],
    pub loss: FrameLoss,
    pub stop: StopReason,
    pub trace: String,
}

impl Prediction {
    fn new(name: &str, est: &PoseEstimate, trace: String) -> Self {
        let t = est.transform();
        Self {
            name: name.to_string(),
            object_to_camera: t.to_row_major(),
            quaternion_wxyz: quaternion_wxyz(&t),
            translation: [t.translation.x, t.translation.y, t.translation.z],
            viewport: est.viewport.to_array(),
            loss: FrameLoss::from(&est.loss),
            stop: est.stop,
            trace,
        }
    }

    pub fn transform(&self) -> Result<RigidTransform> {
        RigidTransform::from_row_major(&self.object_to_camera, RIGIDITY_TOLERANCE).map_err(|e| Error::NonRigidExtrinsics {
            entry: self.name.clone(),
            message: e.to_string(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionFile {
    pub coarse_only: bool,
    pub intrinsics: CameraIntrinsics,
    pub frames: Vec<Prediction>,
}

/// Estimates every query frame (or those named in `only`) against the latent.
pub fn cmd_estimate(
    scene_dir: &Path,
    latent_dir: &Path,
    coarse_only: bool,
    only: Option<&[String]>,
    cfg: &RunConfig,
    out: &Path,
) -> Result<()> {
    cfg.validate()?;
    let scene = load_scene(scene_dir)?;
    let (latent, _) = load_latent(latent_dir)?;
    let selected = select_frames(&scene, only)?;
    let results = selected
        .par_iter()
        .map(|&i| {
            let mut c = cfg.estimate;
            c.coarse.seed = c.coarse.seed.wrapping_add(i as u64);
            let problem = PoseProblem::new(&scene.views[i], &latent, &c)?;
            if coarse_only {
                coarse_estimate(&problem, &c.weights, &c.coarse)
            } else {
                estimate_problem(&problem, &c)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut frames = Vec::with_capacity(results.len());
    for (&i, est) in selected.iter().zip(&results) {
        let name = &scene.manifest.views[i].name;
        let trace = format!("traces/{name}.csv");
        est.write_trace(&out.join(&trace))?;
        frames.push(Prediction::new(name, est, trace));
    }
    write_json(
        &out.join(POSES_FILE),
        &PredictionFile {
            coarse_only,
            intrinsics: scene.manifest.intrinsics,
            frames,
        },
    )?;
    echo(out, cfg)
}

fn select_frames(scene: &Scene, only: Option<&[String]>) -> Result<Vec<usize>> {
    match only {
        None => Ok((0..scene.views.len()).collect()),
        Some(names) => names
            .iter()
            .map(|n| {
                scene.manifest.views.iter().position(|v| &v.name == n).ok_or_else(|| Error::Manifest {
                    entry: n.clone(),
                    message: "no such frame in the scene".into(),
                })
            })
            .collect(),
    }
}

pub fn cmd_evaluate(predictions: &Path, scene_dir: &Path, cfg: &RunConfig, out: &Path) -> Result<MetricReport> {
    let preds: PredictionFile = read_json(predictions)?;
    let scene = load_scene(scene_dir)?;
    let points = scene.model_points()?;
    let info = &scene.manifest.object;
    let model = ObjectModel {
        name: info.name.clone(),
        points,
        symmetry: info.symmetry.clone().unwrap_or_default(),
    };
    let k = scene.manifest.intrinsics;
    let frames = preds
        .frames
        .iter()
        .map(|p| {
            let i = select_frames(&scene, Some(std::slice::from_ref(&p.name)))?[0];
            FrameMetrics::compute(&model, &p.name, &scene.views[i].camera.extrinsics, &p.transform()?, &k)
        })
        .collect::<Result<Vec<_>>>()?;
    let diameters = [(model.name.clone(), model.points.diameter)].into_iter().collect();
    let report = MetricReport::from_frames(frames, &diameters)?;
    report.write(out)?;
    echo(out, cfg)?;
    Ok(report)
}
