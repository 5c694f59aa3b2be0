use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use latentcarve::cli::{
    cmd_estimate, cmd_evaluate, cmd_reconstruct, cmd_render, cmd_synth, CameraSpec, RunConfig, SynthSpec,
};
use latentcarve::Error;

#[derive(Parser)]
#[command(name = "latentcarve", version, about = "Latent voxel reconstruction and render-and-compare pose estimation")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML or JSON); defaults fill anything missing.
    #[arg(long, global = true, env = "LATENTCARVE_CONFIG")]
    config: Option<PathBuf>,
    /// Seed for every randomized stage; overrides the config.
    #[arg(long, global = true, env = "LATENTCARVE_SEED")]
    seed: Option<u64>,
    /// Worker threads; all cores when unset.
    #[arg(long, global = true, env = "LATENTCARVE_JOBS")]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = "LATENTCARVE_OUT", default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic object into reference and query scene directories.
    Synth {
        /// Scene spec (TOML or JSON); built-in defaults when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Build a latent volume from a scene's posed views.
    Reconstruct {
        #[arg(long)]
        scene: PathBuf,
        /// Keep N views chosen by farthest-point sampling of their orientations.
        #[arg(long = "select-refs", value_name = "N")]
        select_refs: Option<usize>,
    },
    /// Render depth, mask and color of a latent into a scene directory.
    Render {
        #[arg(long)]
        latent: PathBuf,
        /// Camera list (JSON with `frames`); a predictions file works too.
        #[arg(long, conflicts_with = "orbit")]
        cameras: Option<PathBuf>,
        /// Render N orbit views instead.
        #[arg(long, value_name = "N")]
        orbit: Option<usize>,
        /// Orbit distance in meters.
        #[arg(long, default_value_t = 0.6)]
        distance: f64,
    },
    /// Estimate the pose of every query frame against a latent.
    Estimate {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        latent: PathBuf,
        /// Skip refinement.
        #[arg(long = "coarse-only")]
        coarse_only: bool,
        /// Only these frame names.
        #[arg(long, value_delimiter = ',')]
        frames: Option<Vec<String>>,
    },
    /// Score predictions against a ground-truth scene.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        scene: PathBuf,
    },
}

fn run(cli: Cli) -> latentcarve::Result<()> {
    let c = &cli.common;
    if let Some(j) = c.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    }
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg = cfg.with_seed(s);
    }
    cfg.validate()?;
    let out = &c.out;
    match &cli.command {
        Command::Synth { spec } => {
            let spec = match spec {
                Some(p) => SynthSpec::load(p)?,
                None => SynthSpec::default(),
            };
            cmd_synth(&spec, &cfg, out)
        }
        Command::Reconstruct { scene, select_refs } => cmd_reconstruct(scene, *select_refs, &cfg, out),
        Command::Render {
            latent,
            cameras,
            orbit,
            distance,
        } => {
            let spec = match (cameras, orbit) {
                (Some(p), _) => read_camera_spec(p)?,
                (None, Some(n)) => CameraSpec::orbit(*n, *distance, cfg.seed),
                (None, None) => return Err(Error::InvalidConfig("render needs --cameras or --orbit".into())),
            };
            cmd_render(latent, &spec, &cfg, out)
        }
        Command::Estimate {
            scene,
            latent,
            coarse_only,
            frames,
        } => cmd_estimate(scene, latent, *coarse_only, frames.as_deref(), &cfg, out),
        Command::Evaluate { predictions, scene } => cmd_evaluate(predictions, scene, &cfg, out).map(|r| {
            for (name, s) in &r.per_object {
                println!(
                    "{name}: ADD AUC {:.3}  ADD-S AUC {:.3}  Proj.2D AUC {:.3}  recall@0.1d {:.3}  ({} frames)",
                    s.add_auc, s.adds_auc, s.proj2d_auc, s.recall_at_tenth_diameter, s.n_frames
                );
            }
        }),
    }
}

fn read_camera_spec(path: &std::path::Path) -> latentcarve::Result<CameraSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Serde(format!("{}: {e}", path.display())))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = format!("{e:?}");
            let kind = kind.split([' ', '(', '{']).next().unwrap_or("Error");
            eprintln!(
                "{}",
                serde_json::json!({ "error": kind, "message": e.to_string() })
            );
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
