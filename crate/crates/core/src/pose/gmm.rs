//! Diagonal Gaussian mixture fitted by k-means++ seeding and a fixed number of EM steps.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub(crate) const DIM: usize = 6;
pub(crate) type Point = [f64; DIM];

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct DiagGmm {
    pub weights: Vec<f64>,
    pub means: Vec<Point>,
    pub vars: Vec<Point>,
}

fn moments(data: &[Point], floor: &Point) -> (Point, Point) {
    let n = data.len() as f64;
    let mut mean = [0.0; DIM];
    for p in data {
        for d in 0..DIM {
            mean[d] += p[d] / n;
        }
    }
    let mut var = *floor;
    for p in data {
        for d in 0..DIM {
            var[d] += (p[d] - mean[d]).powi(2) / n;
        }
    }
    (mean, var)
}

fn scaled_dist2(a: &Point, b: &Point, var: &Point) -> f64 {
    (0..DIM).map(|d| (a[d] - b[d]).powi(2) / var[d]).sum()
}

fn kmeans_pp<R: Rng>(data: &[Point], k: usize, var: &Point, rng: &mut R) -> Vec<Point> {
    let mut centers = vec![data[rng.random_range(0..data.len())]];
    while centers.len() < k {
        let d2: Vec<f64> = data
            .iter()
            .map(|p| {
                centers
                    .iter()
                    .map(|c| scaled_dist2(p, c, var))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut idx = data.len() - 1;
            for (i, w) in d2.iter().enumerate() {
                if r < *w {
                    idx = i;
                    break;
                }
                r -= w;
            }
            idx
        } else {
            rng.random_range(0..data.len())
        };
        centers.push(data[pick]);
    }
    centers
}

fn log_density(x: &Point, mean: &Point, var: &Point) -> f64 {
    -0.5 * (0..DIM)
        .map(|d| (2.0 * std::f64::consts::PI * var[d]).ln() + (x[d] - mean[d]).powi(2) / var[d])
        .sum::<f64>()
}

impl DiagGmm {
    /// Fits `k` components to `data`, which must be sorted best first: weak
    /// components (weight below `min_weight`) restart at `data[0]`.
    pub fn fit<R: Rng>(data: &[Point], k: usize, floor: &Point, em_steps: usize, min_weight: f64, rng: &mut R) -> Self {
        assert!(!data.is_empty(), "fitting a mixture needs data");
        let k = k.clamp(1, data.len());
        let (_, global) = moments(data, floor);
        let mut gmm = Self {
            weights: vec![1.0 / k as f64; k],
            means: kmeans_pp(data, k, &global, rng),
            vars: vec![global; k],
        };
        let mut resp = vec![vec![0.0; k]; data.len()];
        for _ in 0..em_steps {
            for (x, r) in data.iter().zip(resp.iter_mut()) {
                for j in 0..k {
                    r[j] = gmm.weights[j].ln() + log_density(x, &gmm.means[j], &gmm.vars[j]);
                }
                let top = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let norm: f64 = r.iter().map(|v| (v - top).exp()).sum();
                for v in r.iter_mut() {
                    *v = (*v - top).exp() / norm;
                }
            }
            for j in 0..k {
                let nk: f64 = resp.iter().map(|r| r[j]).sum();
                gmm.weights[j] = nk / data.len() as f64;
                if nk < 1e-12 {
                    gmm.vars[j] = global;
                    continue;
                }
                let mut mean = [0.0; DIM];
                for (x, r) in data.iter().zip(&resp) {
                    for d in 0..DIM {
                        mean[d] += r[j] * x[d] / nk;
                    }
                }
                let mut var = *floor;
                for (x, r) in data.iter().zip(&resp) {
                    for d in 0..DIM {
                        var[d] += r[j] * (x[d] - mean[d]).powi(2) / nk;
                    }
                }
                gmm.means[j] = mean;
                gmm.vars[j] = var;
            }
        }
        let mut reseeded = false;
        for j in 0..k {
            if !(gmm.weights[j] >= min_weight) {
                gmm.means[j] = data[0];
                gmm.vars[j] = global;
                gmm.weights[j] = 1.0 / k as f64;
                reseeded = true;
            }
        }
        if reseeded {
            let s: f64 = gmm.weights.iter().sum();
            gmm.weights.iter_mut().for_each(|w| *w /= s);
        }
        gmm
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Point {
        let mut r = rng.random::<f64>();
        let mut j = self.weights.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            if r < *w {
                j = i;
                break;
            }
            r -= w;
        }
        let mut p = self.means[j];
        for d in 0..DIM {
            let z: f64 = StandardNormal.sample(rng);
            p[d] += self.vars[j][d].sqrt() * z;
        }
        p
    }
}
