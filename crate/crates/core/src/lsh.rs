//! Near-duplicate image detection with random-hyperplane LSH.
//!
//! Images are reduced to a 16x16 grayscale thumbnail, mean-centered and
//! projected onto seeded random unit hyperplanes; each projection sign
//! contributes one signature bit. Greedy scanning then drops any image whose
//! signature falls within a Hamming threshold of an already kept one.

use crate::error::{CoreError, Result};
use crate::image::{resize_bilinear, ImageTensor};
use crate::rng::Rng;
use crate::scalar::Real;

pub const THUMBNAIL_SIDE: usize = 16;
pub const DEFAULT_PLANES: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitSignature {
    bits: Vec<bool>,
}

impl BitSignature {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn hamming(&self, other: &BitSignature) -> usize {
        assert_eq!(self.bits.len(), other.bits.len(), "signature lengths differ");
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| a != b)
            .count()
    }
}

/// The seeded hyperplane family. Depends only on (planes, seed), so one
/// projector serves a whole corpus.
pub struct HyperplaneFamily {
    planes: Vec<Vec<f64>>,
}

impl HyperplaneFamily {
    pub fn new(planes: usize, seed: u64) -> Self {
        assert!(planes >= 1, "need at least one hyperplane");
        let dim = THUMBNAIL_SIDE * THUMBNAIL_SIDE;
        let mut rng = Rng::stream(seed, 0x15_4a5);
        let planes = (0..planes)
            .map(|_| {
                let mut v: Vec<f64> = (0..dim).map(|_| rng.next_gaussian()).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                // A zero draw is impossible in practice; guard anyway.
                if norm > 0.0 {
                    v.iter_mut().for_each(|x| *x /= norm);
                }
                v
            })
            .collect();
        HyperplaneFamily { planes }
    }

    pub fn signature<F: Real>(&self, img: &ImageTensor<F>) -> BitSignature {
        let thumb = resize_bilinear(&img.to_grayscale(), THUMBNAIL_SIDE, THUMBNAIL_SIDE);
        let vals: Vec<f64> = thumb.values().iter().map(|v| v.as_f64()).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let centered: Vec<f64> = vals.iter().map(|v| v - mean).collect();
        let bits = self
            .planes
            .iter()
            .map(|p| {
                let dot: f64 = p.iter().zip(&centered).map(|(a, b)| a * b).sum();
                dot >= 0.0
            })
            .collect();
        BitSignature { bits }
    }
}

/// Signature of one image under `planes` seeded hyperplanes.
pub fn lsh_signature<F: Real>(img: &ImageTensor<F>, planes: usize, seed: u64) -> BitSignature {
    HyperplaneFamily::new(planes, seed).signature(img)
}

/// Greedy near-duplicate removal over signatures, in input order. Returns the
/// kept indices; an image is dropped iff its signature lies within Hamming
/// `threshold` of a previously kept image's signature.
pub fn dedup_signatures(signatures: &[BitSignature], threshold: usize) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for (i, sig) in signatures.iter().enumerate() {
        let dup = kept.iter().any(|&k| signatures[k].hamming(sig) <= threshold);
        if !dup {
            kept.push(i);
        }
    }
    kept
}

/// Convenience wrapper: signatures + greedy scan in one call.
pub fn dedup<F: Real>(
    images: &[ImageTensor<F>],
    planes: usize,
    threshold: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if threshold > planes {
        return Err(CoreError::InvalidInput(format!(
            "threshold {threshold} exceeds plane count {planes}"
        )));
    }
    let family = HyperplaneFamily::new(planes, seed);
    let sigs: Vec<BitSignature> = images.iter().map(|img| family.signature(img)).collect();
    Ok(dedup_signatures(&sigs, threshold))
}
