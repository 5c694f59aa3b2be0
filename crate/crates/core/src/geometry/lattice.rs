//! Orientation seeding from a spherical Fibonacci lattice.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `k` unit directions, lattice point `i` at height `1 - (2i+1)/k` and azimuth `i * golden angle`.
pub fn fibonacci_directions(k: usize) -> Vec<Vector3<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..k)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / k as f64;
            let rho = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            Vector3::new(rho * phi.cos(), rho * phi.sin(), z)
        })
        .collect()
}

/// Object-to-camera rotation for a camera sitting along `direction` (object frame)
/// and looking at the origin, rolled by `roll` radians about its optical axis.
pub fn look_at_rotation(direction: &Vector3<f64>, roll: f64) -> UnitQuaternion<f64> {
    let forward = -direction.normalize();
    let up = if forward.z.abs() > 0.99 {
        Vector3::y()
    } else {
        Vector3::z()
    };
    let right = forward.cross(&up).normalize();
    let down = forward.cross(&right);
    let base = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
    let roll = Rotation3::from_axis_angle(&Vector3::z_axis(), roll);
    UnitQuaternion::from_rotation_matrix(&(roll * Rotation3::from_matrix_unchecked(base)))
}

/// `k` orientations: lattice viewing directions each with a uniformly drawn roll.
pub fn fibonacci_orientations(k: usize, seed: u64) -> Vec<UnitQuaternion<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fibonacci_directions(k)
        .iter()
        .map(|d| {
            let roll = rng.random_range(0.0..std::f64::consts::TAU);
            look_at_rotation(d, roll)
        })
        .collect()
}
