//! Scene directories, run configuration and the commands behind the binary.

mod commands;
mod config;
mod scene;

pub use commands::{
    cmd_estimate, cmd_evaluate, cmd_reconstruct, cmd_render, cmd_synth, load_latent, render_frame, CameraSpec, FrameLoss,
    LatentSummary, ObjectSpec, PoseEntry, Prediction, PredictionFile, SynthSpec, ViewSpec, CONFIG_ECHO, LATENT_FILE,
    POSES_FILE, SUMMARY_FILE,
};
pub use config::{ModelingSection, RenderSection, RunConfig};
pub use scene::{
    load_scene, quaternion_wxyz, save_scene, select_references, write_color_png, write_depth_png, write_mask_png,
    write_points, ObjectInfo, Scene, SceneManifest, ViewEntry, DEFAULT_DEPTH_SCALE, MANIFEST_FILE, MANIFEST_VERSION,
    RIGIDITY_TOLERANCE,
};
