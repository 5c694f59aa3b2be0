//! Scene directories: a `manifest.json` plus color, mask and 16-bit depth PNGs.

use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, ImageFormat, Luma, Rgb};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalkit::{ModelPoints, SymmetryGroup};
use crate::fsutil::{read_json, write_atomic, write_json};
use crate::geometry::{CameraIntrinsics, CameraParams, RigidTransform, Viewport};
use crate::modeling::ObservedView;
use crate::raster::Raster;

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
/// Depth PNG units per meter (millimeters).
pub const DEFAULT_DEPTH_SCALE: f64 = 1000.0;
/// Allowed deviation of persisted extrinsics from a rigid transform.
pub const RIGIDITY_TOLERANCE: f64 = 1e-5;

fn default_depth_scale() -> f64 {
    DEFAULT_DEPTH_SCALE
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewEntry {
    pub name: String,
    pub image_path: String,
    pub mask_path: String,
    pub depth_path: String,
    /// Row-major object-to-camera matrix; authoritative.
    pub object_to_camera: [[f64; 4]; 4],
    /// Readable duplicate of the rotation, `w, x, y, z`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quaternion_wxyz: Option<[f64; 4]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectInfo {
    #[serde(default = "default_object_name")]
    pub name: String,
    pub diameter_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symmetry: Option<SymmetryGroup>,
    /// JSON list of object-frame surface points, for evaluation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points_path: Option<String>,
}

fn default_object_name() -> String {
    "object".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub version: u32,
    pub intrinsics: CameraIntrinsics,
    #[serde(default = "default_depth_scale")]
    pub depth_scale: f64,
    pub views: Vec<ViewEntry>,
    pub object: ObjectInfo,
}

/// A loaded scene; `views[i]` belongs to `manifest.views[i]`.
#[derive(Clone, Debug)]
pub struct Scene {
    pub root: PathBuf,
    pub manifest: SceneManifest,
    pub views: Vec<ObservedView>,
}

impl Scene {
    pub fn names(&self) -> Vec<&str> {
        self.manifest.views.iter().map(|v| v.name.as_str()).collect()
    }

    pub fn poses(&self) -> Vec<RigidTransform> {
        self.views.iter().map(|v| v.camera.extrinsics).collect()
    }

    pub fn model_points(&self) -> Result<ModelPoints> {
        let rel = self.manifest.object.points_path.as_ref().ok_or_else(|| Error::Manifest {
            entry: "object.points_path".into(),
            message: "evaluation needs model points".into(),
        })?;
        let path = self.root.join(rel);
        if !path.exists() {
            return Err(Error::MissingFile {
                entry: "object.points_path".into(),
                path,
            });
        }
        let pts: Vec<[f64; 3]> = read_json(&path)?;
        ModelPoints::new(pts.into_iter().map(nalgebra::Vector3::from).collect())
    }
}

fn manifest_error(entry: &str, message: impl Into<String>) -> Error {
    Error::Manifest {
        entry: entry.into(),
        message: message.into(),
    }
}

fn existing(root: &Path, entry: &str, rel: &str) -> Result<PathBuf> {
    let path = root.join(rel);
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::MissingFile {
            entry: entry.into(),
            path,
        })
    }
}

fn open_image(path: &Path) -> Result<image::DynamicImage> {
    image::open(path).map_err(|e| Error::Image {
        path: path.into(),
        message: e.to_string(),
    })
}

pub fn load_scene(dir: &Path) -> Result<Scene> {
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        return Err(Error::MissingFile {
            entry: "manifest".into(),
            path: manifest_path,
        });
    }
    let manifest: SceneManifest = read_json(&manifest_path).map_err(|e| manifest_error("manifest", e.to_string()))?;
    if manifest.version != MANIFEST_VERSION {
        return Err(manifest_error("version", format!("unsupported version {}", manifest.version)));
    }
    manifest
        .intrinsics
        .validate()
        .map_err(|e| manifest_error("intrinsics", e.to_string()))?;
    if !(manifest.depth_scale > 0.0) {
        return Err(manifest_error("depth_scale", "must be positive"));
    }
    if !(manifest.object.diameter_m > 0.0) {
        return Err(manifest_error("object.diameter_m", "must be positive"));
    }
    let k = manifest.intrinsics;
    let mut views = Vec::with_capacity(manifest.views.len());
    for (i, entry) in manifest.views.iter().enumerate() {
        let id = format!("views[{i}] ({})", entry.name);
        let extrinsics =
            RigidTransform::from_row_major(&entry.object_to_camera, RIGIDITY_TOLERANCE).map_err(|e| {
                Error::NonRigidExtrinsics {
                    entry: id.clone(),
                    message: e.to_string(),
                }
            })?;
        let rgb = open_image(&existing(dir, &id, &entry.image_path)?)?.to_rgb8();
        let mask = open_image(&existing(dir, &id, &entry.mask_path)?)?.to_luma8();
        let depth_path = existing(dir, &id, &entry.depth_path)?;
        let depth = match open_image(&depth_path)? {
            image::DynamicImage::ImageLuma16(d) => d,
            other => {
                return Err(Error::Image {
                    path: depth_path,
                    message: format!("depth must be 16-bit grayscale, got {:?}", other.color()),
                })
            }
        };
        let (w, h) = (rgb.width() as usize, rgb.height() as usize);
        let image = Raster::from_vec(
            w,
            h,
            rgb.pixels().map(|p| p.0.map(|c| c as f64 / 255.0)).collect(),
        );
        let mask = Raster::from_vec(
            mask.width() as usize,
            mask.height() as usize,
            mask.pixels().map(|p| if p.0[0] >= 128 { 1.0 } else { 0.0 }).collect(),
        );
        let depth = Raster::from_vec(
            depth.width() as usize,
            depth.height() as usize,
            depth.pixels().map(|p| p.0[0] as f64 / manifest.depth_scale).collect(),
        );
        let view = ObservedView::new(image, mask, depth, CameraParams::new(k, extrinsics, Viewport::full(&k)))
            .map_err(|e| manifest_error(&id, e.to_string()))?;
        views.push(view);
    }
    Ok(Scene {
        root: dir.to_path_buf(),
        manifest,
        views,
    })
}

fn png_bytes<P: image::Pixel<Subpixel = S> + image::PixelWithColorType, S: image::Primitive>(
    img: &ImageBuffer<P, Vec<S>>,
    path: &Path,
) -> Result<Vec<u8>>
where
    [S]: image::EncodableLayout,
{
    let mut bytes = Vec::new();
    img.write_to(&mut Cursor::new(&mut bytes), ImageFormat::Png)
        .map_err(|e| Error::Image {
            path: path.into(),
            message: e.to_string(),
        })?;
    Ok(bytes)
}

pub fn write_color_png(image: &Raster<[f64; 3]>, path: &Path) -> Result<()> {
    let img = ImageBuffer::from_fn(image.width() as u32, image.height() as u32, |x, y| {
        Rgb(image.get(x as usize, y as usize).map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8))
    });
    write_atomic(path, &png_bytes(&img, path)?)
}

pub fn write_mask_png(mask: &Raster<f64>, path: &Path) -> Result<()> {
    let img = ImageBuffer::from_fn(mask.width() as u32, mask.height() as u32, |x, y| {
        Luma([if mask.get(x as usize, y as usize) >= 0.5 { 255u8 } else { 0 }])
    });
    write_atomic(path, &png_bytes(&img, path)?)
}

/// Depth in meters to `round(d * scale)`; 0 stays invalid.
pub fn write_depth_png(depth: &Raster<f64>, scale: f64, path: &Path) -> Result<()> {
    let max = depth.data().iter().copied().fold(0.0, f64::max);
    if max * scale > u16::MAX as f64 {
        return Err(Error::InvalidConfig(format!(
            "depth {max} m does not fit 16 bits at scale {scale}"
        )));
    }
    let img = ImageBuffer::from_fn(depth.width() as u32, depth.height() as u32, |x, y| {
        Luma([(depth.get(x as usize, y as usize) * scale).round() as u16])
    });
    write_atomic(path, &png_bytes(&img, path)?)
}

/// Writes `views` under `dir` with a manifest; extrinsics come from each view's camera.
pub fn save_scene(
    dir: &Path,
    intrinsics: CameraIntrinsics,
    depth_scale: f64,
    views: &[(String, ObservedView)],
    object: ObjectInfo,
) -> Result<SceneManifest> {
    let mut entries = Vec::with_capacity(views.len());
    for (name, view) in views {
        let entry = ViewEntry {
            name: name.clone(),
            image_path: format!("color/{name}.png"),
            mask_path: format!("mask/{name}.png"),
            depth_path: format!("depth/{name}.png"),
            object_to_camera: view.camera.extrinsics.to_row_major(),
            quaternion_wxyz: Some(quaternion_wxyz(&view.camera.extrinsics)),
        };
        write_color_png(&view.image, &dir.join(&entry.image_path))?;
        write_mask_png(&view.mask, &dir.join(&entry.mask_path))?;
        write_depth_png(&view.depth, depth_scale, &dir.join(&entry.depth_path))?;
        entries.push(entry);
    }
    let manifest = SceneManifest {
        version: MANIFEST_VERSION,
        intrinsics,
        depth_scale,
        views: entries,
        object,
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn write_points(points: &ModelPoints, path: &Path) -> Result<()> {
    let pts: Vec<[f64; 3]> = points.points.iter().map(|p| [p.x, p.y, p.z]).collect();
    write_json(path, &pts)
}

pub fn quaternion_wxyz(t: &RigidTransform) -> [f64; 4] {
    let q = t.rotation.quaternion();
    [q.w, q.i, q.j, q.k]
}

/// Greedy farthest-point subset of `poses` under rotation geodesic distance,
/// starting from the first pose; ties go to the lower index.
pub fn select_references(poses: &[RigidTransform], n: usize) -> Vec<usize> {
    if poses.is_empty() || n == 0 {
        return Vec::new();
    }
    let mut chosen = vec![0];
    let mut nearest: Vec<f64> = poses.iter().map(|p| p.rotation.angle_to(&poses[0].rotation)).collect();
    while chosen.len() < n.min(poses.len()) {
        let mut next = None;
        for (i, &d) in nearest.iter().enumerate() {
            if !chosen.contains(&i) && next.is_none_or(|(_, b)| d > b) {
                next = Some((i, d));
            }
        }
        let (i, _) = next.expect("an unchosen pose remains");
        chosen.push(i);
        for (j, d) in nearest.iter_mut().enumerate() {
            *d = d.min(poses[j].rotation.angle_to(&poses[i].rotation));
        }
    }
    chosen
}
