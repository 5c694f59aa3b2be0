use nalgebra::Vector3;

use crate::voxels::{FeatureVolume, VolumeFrame};

/// Sum of a few Gaussian bumps clipped to `[0, 1]`-ish occupancy.
pub(crate) fn smooth_blobs(m: usize, radius: f64) -> FeatureVolume {
    let bumps = [
        (Vector3::new(0.3, -0.2, 0.1), 0.35, 1.2),
        (Vector3::new(-0.35, 0.3, -0.2), 0.3, 0.9),
        (Vector3::new(0.0, 0.1, 0.4), 0.25, 0.8),
    ];
    FeatureVolume::from_fn(1, [m; 3], VolumeFrame::cube(radius), |_, p| {
        let q = p / radius;
        bumps
            .iter()
            .map(|(c, s, a)| a * (-(q - c).norm_squared() / (2.0 * s * s)).exp())
            .sum::<f64>()
            .min(0.98)
    })
}

/// Small asymmetric object carved from 12 views at 64x64, plus a query of
/// it at a perturbed pose.
pub(crate) fn pose_fixture(seed: u64) -> (crate::modeling::ObservedView, crate::modeling::LatentObject, crate::geometry::RigidTransform) {
    use crate::evalkit::{orbit_poses, perturb_pose, Primitive, SyntheticScene, Texture};
    use crate::geometry::{CameraIntrinsics, RigidTransform};
    use crate::modeling::{build_latent, FusionStrategy, ModelingConfig, OccupancyEncoder};
    use rand::SeedableRng;

    let scene = SyntheticScene {
        primitives: vec![
            Primitive::Box {
                pose: RigidTransform::identity(),
                half_extents: Vector3::new(0.07, 0.04, 0.025),
            },
            Primitive::Sphere {
                center: Vector3::new(0.05, 0.03, 0.01),
                radius: 0.03,
            },
        ],
        texture: Texture::default(),
        intrinsics: CameraIntrinsics::new(75.0, 75.0, 32.0, 32.0, 64, 64).unwrap(),
    };
    let refs = orbit_poses(12, 0.6, seed);
    let views: Vec<_> = refs.iter().map(|e| scene.render(e).unwrap()).collect();
    let latent = build_latent(
        &views,
        &OccupancyEncoder::default(),
        &FusionStrategy::Carve,
        &ModelingConfig::new(16),
        scene.bounding_radius(),
    )
    .unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let gt = perturb_pose(&mut rng, &refs[seed as usize % refs.len()], 15.0, 0.03);
    (scene.render(&gt).unwrap(), latent, gt)
}

/// Estimation settings sized for unit tests.
pub(crate) fn small_estimate_config() -> crate::pose::EstimateConfig {
    let mut cfg = crate::pose::EstimateConfig::default();
    cfg.image_size = 32;
    cfg.coarse_image_size = 16;
    cfg.screen_image_size = 16;
    cfg.coarse.num_orientations = 64;
    cfg.coarse.cem_iterations = 4;
    cfg.coarse.cem_population = 16;
    cfg.coarse.gmm_components = 4;
    cfg.coarse.modes = 2;
    cfg.screen_iterations = 5;
    cfg.refine.max_iterations = 30;
    cfg
}
