//! Image and volume losses with their gradients with respect to the prediction.

use crate::error::{Error, Result};
use crate::raster::{DepthMap, Mask};
use crate::voxels::FeatureVolume;

/// Clamp used in every logarithm.
pub const LOG_CLAMP: f64 = 1e-7;

/// A scalar loss and its gradient with respect to each predicted entry.
#[derive(Clone, Debug, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub gradient: Vec<f64>,
}

fn check_shapes(a: &[f64], b: &[f64], what: &str) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!(
            "{what}: {} vs {} entries",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean absolute depth error over pixels with valid observed depth inside the observed mask.
pub fn loss_depth(predicted: &DepthMap, observed: &DepthMap, observed_mask: &Mask) -> Result<LossValue> {
    check_shapes(predicted.data(), observed.data(), "depth")?;
    check_shapes(predicted.data(), observed_mask.data(), "depth mask")?;
    let valid: Vec<bool> = observed
        .data()
        .iter()
        .zip(observed_mask.data())
        .map(|(&d, &m)| d > 0.0 && m > 0.5)
        .collect();
    let n = valid.iter().filter(|&&v| v).count();
    if n == 0 {
        return Err(Error::NoValidPixels);
    }
    let inv = 1.0 / n as f64;
    let mut value = 0.0;
    let mut gradient = vec![0.0; valid.len()];
    for (i, ok) in valid.iter().enumerate() {
        if *ok {
            let d = predicted.data()[i] - observed.data()[i];
            value += d.abs();
            gradient[i] = sign(d) * inv;
        }
    }
    Ok(LossValue {
        value: value * inv,
        gradient,
    })
}

/// Pixel-wise binary cross-entropy averaged over the image.
pub fn loss_mask(predicted: &Mask, observed: &Mask) -> Result<LossValue> {
    check_shapes(predicted.data(), observed.data(), "mask")?;
    let n = predicted.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let inv = 1.0 / n as f64;
    let mut value = 0.0;
    let mut gradient = vec![0.0; n];
    for (i, (&p, &m)) in predicted.data().iter().zip(observed.data()).enumerate() {
        let q = p.clamp(LOG_CLAMP, 1.0 - LOG_CLAMP);
        value -= m * q.ln() + (1.0 - m) * (1.0 - q).ln();
        if q == p {
            gradient[i] = (-m / q + (1.0 - m) / (1.0 - q)) * inv;
        }
    }
    Ok(LossValue {
        value: value * inv,
        gradient,
    })
}

/// `log U - log I` with the product t-norm soft union and intersection.
pub fn loss_iou(predicted: &Mask, observed: &Mask) -> Result<LossValue> {
    check_shapes(predicted.data(), observed.data(), "iou")?;
    let mut inter = 0.0;
    let mut union = 0.0;
    for (&p, &m) in predicted.data().iter().zip(observed.data()) {
        inter += p * m;
        union += p + m - p * m;
    }
    let (i_c, u_c) = (inter.max(LOG_CLAMP), union.max(LOG_CLAMP));
    let di = if inter > LOG_CLAMP { 1.0 / inter } else { 0.0 };
    let du = if union > LOG_CLAMP { 1.0 / union } else { 0.0 };
    let gradient = observed
        .data()
        .iter()
        .map(|&m| (1.0 - m) * du - m * di)
        .collect();
    Ok(LossValue {
        value: u_c.ln() - i_c.ln(),
        gradient,
    })
}

/// Mean absolute difference between two volumes of equal layout; the gradient
/// is with respect to `a` (the one for `b` is its negation).
pub fn loss_volume_l1(a: &FeatureVolume, b: &FeatureVolume) -> Result<LossValue> {
    if !a.same_layout(b) {
        return Err(Error::ShapeMismatch("latent loss volumes differ in layout".into()));
    }
    let n = a.data().len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let inv = 1.0 / n as f64;
    let mut value = 0.0;
    let gradient = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| {
            value += (x - y).abs();
            sign(x - y) * inv
        })
        .collect();
    Ok(LossValue {
        value: value * inv,
        gradient,
    })
}
