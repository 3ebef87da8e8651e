//! Synthetic domain-shift benchmark.
//!
//! Target instances are drawn from class-conditional Gaussians; auxiliary
//! instances from rotated and shifted versions of the same classes, with
//! labels flipped independently at a configurable rate to emulate weak
//! labels. Separate RNG streams drive point draws and label noise, so the
//! same seed with a different noise rate yields identical feature vectors.

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Domain, Instance};
use crate::error::{CoreError, Result};
use crate::image::ImageTensor;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    pub aux_size: usize,
    pub target_train_size: usize,
    pub test_size: usize,
    pub mean_real: Vec<f64>,
    pub mean_fake: Vec<f64>,
    pub cov_real: Vec<Vec<f64>>,
    pub cov_fake: Vec<Vec<f64>>,
    /// Added to every auxiliary draw after rotation.
    pub shift: Vec<f64>,
    /// Rotation of the auxiliary distribution in the plane of the first two
    /// coordinates, degrees.
    pub rotation_degrees: f64,
    /// Probability of flipping an auxiliary label; must be < 0.5.
    pub aux_label_noise_rate: f64,
    pub seed: u64,
}

impl ShiftSpec {
    /// Benchmark defaults: 32-d unit Gaussians one sigma either side of the
    /// origin along the diagonal (Bayes accuracy ~0.84), 25-degree auxiliary
    /// rotation, unit-length mean shift mostly along the class axis, 20%
    /// auxiliary label noise. Sized so a 100-instance target-only model,
    /// the naive combination and the boosted transfer land clearly apart.
    pub fn default_benchmark() -> Self {
        let dim = 32;
        let unit = 1.0 / (dim as f64).sqrt();
        let mean_fake: Vec<f64> = vec![unit; dim];
        let mean_real: Vec<f64> = vec![-unit; dim];
        // Unit shift along the class axis: an intercept bias the target data
        // can correct, leaving the rotation as the incorrigible distortion.
        let shift: Vec<f64> = vec![unit; dim];
        let eye: Vec<Vec<f64>> = (0..dim)
            .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        ShiftSpec {
            aux_size: 2000,
            target_train_size: 100,
            test_size: 1000,
            mean_real,
            mean_fake,
            cov_real: eye.clone(),
            cov_fake: eye,
            shift,
            rotation_degrees: 25.0,
            aux_label_noise_rate: 0.2,
            seed: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean_real.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.aux_size == 0 || self.target_train_size == 0 || self.test_size == 0 {
            return Err(CoreError::InvalidInput("all sizes must be >= 1".into()));
        }
        let d = self.dim();
        if d == 0
            || self.mean_fake.len() != d
            || self.shift.len() != d
            || self.cov_real.len() != d
            || self.cov_fake.len() != d
            || self.cov_real.iter().any(|r| r.len() != d)
            || self.cov_fake.iter().any(|r| r.len() != d)
        {
            return Err(CoreError::InvalidInput("inconsistent dimensions".into()));
        }
        if !(0.0..0.5).contains(&self.aux_label_noise_rate) {
            return Err(CoreError::InvalidInput(format!(
                "noise rate {} outside [0, 0.5)",
                self.aux_label_noise_rate
            )));
        }
        Ok(())
    }
}

/// Lower-triangular Cholesky factor; errors when the matrix is not positive
/// definite.
pub fn cholesky(cov: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = cov.len();
    let mut l = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in 0..=i {
            if (cov[i][j] - cov[j][i]).abs() > 1e-9 {
                return Err(CoreError::DegenerateCovariance);
            }
            let mut sum = cov[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(CoreError::DegenerateCovariance);
                }
                l[i][j] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    Ok(l)
}

struct ClassSampler {
    mean: Vec<f64>,
    chol: Vec<Vec<f64>>,
}

impl ClassSampler {
    fn sample(&self, rng: &mut Rng) -> Vec<f64> {
        let d = self.mean.len();
        let z: Vec<f64> = (0..d).map(|_| rng.next_gaussian()).collect();
        (0..d)
            .map(|i| {
                self.mean[i] + (0..=i).map(|k| self.chol[i][k] * z[k]).sum::<f64>()
            })
            .collect()
    }
}

fn rotate_and_shift(x: &[f64], cos: f64, sin: f64, shift: &[f64]) -> Vec<f64> {
    let mut out = x.to_vec();
    if out.len() >= 2 {
        let (a, b) = (out[0], out[1]);
        out[0] = cos * a - sin * b;
        out[1] = sin * a + cos * b;
    }
    for (o, s) in out.iter_mut().zip(shift) {
        *o += *s;
    }
    out
}

/// Generate the benchmark dataset: auxiliary (weak-labeled, shifted) first,
/// then target train, then target test, all with inline feature vectors.
pub fn synth_shift(spec: &ShiftSpec) -> Result<Dataset> {
    spec.validate()?;
    let samplers = [
        ClassSampler { mean: spec.mean_real.clone(), chol: cholesky(&spec.cov_real)? },
        ClassSampler { mean: spec.mean_fake.clone(), chol: cholesky(&spec.cov_fake)? },
    ];
    let theta = spec.rotation_degrees.to_radians();
    let (sin, cos) = theta.sin_cos();

    let mut point_rng = Rng::stream(spec.seed, 0x0901);
    let mut noise_rng = Rng::stream(spec.seed, 0x0902);
    let mut instances = Vec::new();

    for i in 0..spec.aux_size {
        let label = (i % 2) as u8;
        let x = samplers[label as usize].sample(&mut point_rng);
        let x = rotate_and_shift(&x, cos, sin, &spec.shift);
        let flipped = noise_rng.next_bool(spec.aux_label_noise_rate);
        let weak = if flipped { 1 - label } else { label };
        instances.push(Instance {
            id: format!("aux-{i:05}"),
            image_path: None,
            text: None,
            features: Some(x),
            label: Some(weak),
            domain: Domain::Auxiliary,
            weight: 1.0,
        });
    }
    for (count, domain, tag) in [
        (spec.target_train_size, Domain::TargetTrain, "train"),
        (spec.test_size, Domain::TargetTest, "test"),
    ] {
        for i in 0..count {
            let label = (i % 2) as u8;
            let x = samplers[label as usize].sample(&mut point_rng);
            instances.push(Instance {
                id: format!("{tag}-{i:05}"),
                image_path: None,
                text: None,
                features: Some(x),
                label: Some(label),
                domain,
                weight: 1.0,
            });
        }
    }
    Dataset::from_instances(instances)
}

pub const RENDER_SIDE: usize = 16;

/// Rasterize a feature vector's first two coordinates as a 16x16 grayscale
/// image: two Gaussian blobs at mirrored positions encode the point, so the
/// class geometry survives as spatial structure the conv net can learn.
pub fn render_point(features: &[f64]) -> ImageTensor<f64> {
    let side = RENDER_SIDE as f64;
    let center = (side - 1.0) / 2.0;
    let scale = side / 8.0;
    let fx = features.first().copied().unwrap_or(0.0);
    let fy = features.get(1).copied().unwrap_or(0.0);
    let px = (center + scale * fx).clamp(0.0, side - 1.0);
    let py = (center + scale * fy).clamp(0.0, side - 1.0);
    let qx = (center - scale * fx).clamp(0.0, side - 1.0);
    let qy = (center - scale * fy).clamp(0.0, side - 1.0);
    let sigma2 = 1.5f64 * 1.5;
    let mut img = ImageTensor::constant(RENDER_SIDE, RENDER_SIDE, 1, 0.0);
    for y in 0..RENDER_SIDE {
        for x in 0..RENDER_SIDE {
            let d1 = (x as f64 - px).powi(2) + (y as f64 - py).powi(2);
            let d2 = (x as f64 - qx).powi(2) + (y as f64 - qy).powi(2);
            let v = (-d1 / (2.0 * sigma2)).exp() + 0.6 * (-d2 / (2.0 * sigma2)).exp();
            img.set(y, x, 0, v.min(1.0));
        }
    }
    img
}
