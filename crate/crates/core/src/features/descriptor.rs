//! Dense local descriptors: gradient-orientation histograms over a patch
//! grid, with the usual L2-normalize / clip / renormalize pipeline. No
//! keypoint detection and no scale space; patches are sampled on a fixed
//! grid, which is all the bag-of-visual-words baseline needs.

use crate::error::{CoreError, Result};
use crate::image::ImageTensor;
use crate::scalar::Real;

pub const SPATIAL_CELLS: usize = 4;
pub const ORIENTATION_BINS: usize = 8;
/// 4 x 4 spatial cells x 8 orientation bins.
pub const DESCRIPTOR_DIM: usize = SPATIAL_CELLS * SPATIAL_CELLS * ORIENTATION_BINS;

const CLIP: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor<F> {
    pub vector: Vec<F>,
}

impl<F: Real> Descriptor<F> {
    pub fn l2_norm(&self) -> f64 {
        self.vector
            .iter()
            .map(|v| v.as_f64() * v.as_f64())
            .sum::<f64>()
            .sqrt()
    }
}

/// Extract descriptors over a dense grid of `patch`-sized windows stepping by
/// `grid_step`. Color images are first collapsed to grayscale by channel
/// mean. Images smaller than the patch yield an empty sequence.
pub fn extract_descriptors<F: Real>(
    img: &ImageTensor<F>,
    grid_step: usize,
    patch: usize,
) -> Result<Vec<Descriptor<F>>> {
    if grid_step == 0 || patch == 0 {
        return Err(CoreError::InvalidInput("grid_step and patch must be positive".into()));
    }
    if !patch.is_multiple_of(SPATIAL_CELLS) {
        return Err(CoreError::InvalidInput(format!(
            "patch size {patch} must be divisible by {SPATIAL_CELLS}"
        )));
    }
    let gray = img.to_grayscale();
    if gray.height < patch || gray.width < patch {
        return Ok(Vec::new());
    }
    let (gx, gy) = gradients(&gray);
    let cell = patch / SPATIAL_CELLS;
    let mut out = Vec::new();
    let mut y = 0;
    while y + patch <= gray.height {
        let mut x = 0;
        while x + patch <= gray.width {
            out.push(patch_descriptor(&gx, &gy, gray.width, y, x, cell));
            x += grid_step;
        }
        y += grid_step;
    }
    Ok(out)
}

/// Central differences with clamped borders, flat row-major buffers.
fn gradients<F: Real>(gray: &ImageTensor<F>) -> (Vec<f64>, Vec<f64>) {
    let (h, w) = (gray.height, gray.width);
    let mut gx = vec![0.0; h * w];
    let mut gy = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let xl = x.saturating_sub(1);
            let xr = (x + 1).min(w - 1);
            let yu = y.saturating_sub(1);
            let yd = (y + 1).min(h - 1);
            gx[y * w + x] = (gray.at(y, xr, 0).as_f64() - gray.at(y, xl, 0).as_f64()) / 2.0;
            gy[y * w + x] = (gray.at(yd, x, 0).as_f64() - gray.at(yu, x, 0).as_f64()) / 2.0;
        }
    }
    (gx, gy)
}

fn patch_descriptor<F: Real>(
    gx: &[f64],
    gy: &[f64],
    width: usize,
    top: usize,
    left: usize,
    cell: usize,
) -> Descriptor<F> {
    let mut hist = vec![0.0f64; DESCRIPTOR_DIM];
    let patch = cell * SPATIAL_CELLS;
    for dy in 0..patch {
        for dx in 0..patch {
            let y = top + dy;
            let x = left + dx;
            let (dx_v, dy_v) = (gx[y * width + x], gy[y * width + x]);
            let mag = (dx_v * dx_v + dy_v * dy_v).sqrt();
            if mag == 0.0 {
                continue;
            }
            let theta = dy_v.atan2(dx_v); // (-pi, pi]
            let bin_width = std::f64::consts::TAU / ORIENTATION_BINS as f64;
            let bin = (((theta + std::f64::consts::PI) / bin_width).floor() as usize)
                % ORIENTATION_BINS;
            let cy = dy / cell;
            let cx = dx / cell;
            hist[(cy * SPATIAL_CELLS + cx) * ORIENTATION_BINS + bin] += mag;
        }
    }
    normalize(&mut hist);
    Descriptor {
        vector: hist.into_iter().map(F::of).collect(),
    }
}

/// L2-normalize, clip at 0.2, renormalize. The zero vector stays zero.
fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return;
    }
    v.iter_mut().for_each(|x| *x = (*x / norm).min(CLIP));
    let norm2 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm2 > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm2);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_gives_zero_descriptors() {
        let img = ImageTensor::<f64>::constant(32, 32, 1, 0.4);
        let ds = extract_descriptors(&img, 8, 16).unwrap();
        assert!(!ds.is_empty());
        for d in &ds {
            assert!(d.vector.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn image_smaller_than_patch_is_empty() {
        let img = ImageTensor::<f64>::constant(8, 8, 1, 0.0);
        assert!(extract_descriptors(&img, 8, 16).unwrap().is_empty());
    }

    #[test]
    fn vertical_step_edge_concentrates_in_horizontal_bins() {
        // Left half dark, right half bright: gradients point along +x
        // (theta = 0), which lands in bin 4 of 8.
        let mut img = ImageTensor::<f64>::constant(16, 16, 1, 0.0);
        for y in 0..16 {
            for x in 8..16 {
                img.set(y, x, 0, 1.0);
            }
        }
        let ds = extract_descriptors(&img, 16, 16).unwrap();
        assert_eq!(ds.len(), 1);
        let v = &ds[0].vector;
        let horizontal: f64 = (0..DESCRIPTOR_DIM)
            .filter(|i| i % ORIENTATION_BINS == 4 || i % ORIENTATION_BINS == 0)
            .map(|i| v[i])
            .sum();
        let total: f64 = v.iter().sum();
        assert!(total > 0.0);
        assert!(
            horizontal / total > 0.99,
            "horizontal mass fraction {}",
            horizontal / total
        );

        // Finite-difference oracle at an interior pixel on the edge.
        let x = 7usize;
        let y = 5usize;
        let fd_gx = (img.at(y, x + 1, 0) - img.at(y, x - 1, 0)) / 2.0;
        let fd_gy = (img.at(y + 1, x, 0) - img.at(y - 1, x, 0)) / 2.0;
        assert!(fd_gx > 0.0);
        assert_eq!(fd_gy, 0.0);
    }

    #[test]
    fn norms_bounded_by_one() {
        let mut rng = crate::rng::Rng::new(12);
        let values: Vec<f64> = (0..24 * 24).map(|_| rng.next_f64()).collect();
        let img = ImageTensor::new(24, 24, 1, values).unwrap();
        for d in extract_descriptors(&img, 4, 16).unwrap() {
            assert!(d.l2_norm() <= 1.0 + 1e-12);
            assert_eq!(d.vector.len(), DESCRIPTOR_DIM);
        }
    }

    #[test]
    fn patch_not_divisible_by_cells_errors() {
        let img = ImageTensor::<f64>::constant(32, 32, 1, 0.0);
        assert!(extract_descriptors(&img, 8, 15).is_err());
    }
}
