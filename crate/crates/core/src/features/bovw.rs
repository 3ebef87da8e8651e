//! Visual-word vocabulary via seeded k-means and bag-of-visual-words
//! histograms.

use crate::error::{CoreError, Result};
use crate::features::descriptor::Descriptor;
use crate::rng::Rng;
use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct Vocabulary<F> {
    pub centroids: Vec<Vec<F>>,
    pub descriptor_dim: usize,
}

impl<F: Real> Vocabulary<F> {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }
}

fn dist2<F: Real>(a: &[F], b: &[F]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x.as_f64() - y.as_f64();
            d * d
        })
        .sum()
}

/// Index of the nearest centroid; ties resolve to the lowest index.
pub fn nearest_centroid<F: Real>(v: &[F], centroids: &[Vec<F>]) -> usize {
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = dist2(v, c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Seeded k-means++ followed by Lloyd iterations until the assignment
/// reaches a fixpoint or `max_iters` passes. Empty clusters are reseeded to
/// the point currently farthest from its own centroid. Deterministic given
/// the seed.
pub fn build_vocabulary<F: Real>(
    descriptors: &[Descriptor<F>],
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<Vocabulary<F>> {
    build_vocabulary_traced(descriptors, k, seed, max_iters).map(|(v, _)| v)
}

/// As `build_vocabulary`, but also returns the within-cluster objective after
/// each Lloyd iteration (non-increasing by construction).
pub fn build_vocabulary_traced<F: Real>(
    descriptors: &[Descriptor<F>],
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<(Vocabulary<F>, Vec<f64>)> {
    if k == 0 {
        return Err(CoreError::KMeans("k must be at least 1".into()));
    }
    if descriptors.len() < k {
        return Err(CoreError::KMeans(format!(
            "{} descriptors for k = {k}",
            descriptors.len()
        )));
    }
    let dim = descriptors[0].vector.len();
    if descriptors.iter().any(|d| d.vector.len() != dim) {
        return Err(CoreError::ShapeMismatch {
            expected: format!("descriptor dim {dim}"),
            found: "mixed dimensions".into(),
        });
    }
    let points: Vec<&[F]> = descriptors.iter().map(|d| d.vector.as_slice()).collect();
    let mut rng = Rng::stream(seed, 0x6b6d);
    let mut centroids = plus_plus_init(&points, k, &mut rng)?;

    let mut assignment = vec![usize::MAX; points.len()];
    let mut objective_history = Vec::new();
    for _ in 0..max_iters {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let c = nearest_centroid(p, &centroids);
            if c != assignment[i] {
                assignment[i] = c;
                changed = true;
            }
        }
        reseed_empty_clusters(&points, &mut centroids, &mut assignment);
        // Means update.
        let mut sums = vec![vec![0.0f64; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            let c = assignment[i];
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(p.iter()) {
                *s += v.as_f64();
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c]
                    .iter()
                    .map(|s| F::of(s / counts[c] as f64))
                    .collect();
            }
        }
        let objective: f64 = points
            .iter()
            .enumerate()
            .map(|(i, p)| dist2(p, &centroids[assignment[i]]))
            .sum();
        objective_history.push(objective);
        if !changed {
            break;
        }
    }

    Ok((
        Vocabulary {
            centroids,
            descriptor_dim: dim,
        },
        objective_history,
    ))
}

fn plus_plus_init<F: Real>(points: &[&[F]], k: usize, rng: &mut Rng) -> Result<Vec<Vec<F>>> {
    let mut centroids: Vec<Vec<F>> = Vec::with_capacity(k);
    centroids.push(points[rng.next_index(points.len())].to_vec());
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| dist2(p, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            return Err(CoreError::KMeans(
                "fewer distinct descriptors than k".into(),
            ));
        }
        let mut target = rng.next_f64() * total;
        let mut pick = points.len() - 1;
        for (i, &w) in d2.iter().enumerate() {
            if target < w {
                pick = i;
                break;
            }
            target -= w;
        }
        let chosen = points[pick].to_vec();
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(dist2(p, &chosen));
        }
        centroids.push(chosen);
    }
    Ok(centroids)
}

fn reseed_empty_clusters<F: Real>(
    points: &[&[F]],
    centroids: &mut [Vec<F>],
    assignment: &mut [usize],
) {
    for c in 0..centroids.len() {
        if assignment.contains(&c) {
            continue;
        }
        // Move the point farthest from its own centroid, skipping clusters
        // that would become empty in turn.
        let mut far_i = None;
        let mut far_d = -1.0;
        for (i, p) in points.iter().enumerate() {
            let owner = assignment[i];
            let owner_size = assignment.iter().filter(|&&a| a == owner).count();
            if owner_size <= 1 {
                continue;
            }
            let d = dist2(p, &centroids[owner]);
            if d > far_d {
                far_d = d;
                far_i = Some(i);
            }
        }
        if let Some(i) = far_i {
            centroids[c] = points[i].to_vec();
            assignment[i] = c;
        }
    }
}

/// Histogram of nearest-centroid assignments, L1-normalized when nonempty.
pub fn bovw_histogram<F: Real>(
    descriptors: &[Descriptor<F>],
    vocab: &Vocabulary<F>,
) -> Result<Vec<F>> {
    let mut hist = vec![F::zero(); vocab.k()];
    if descriptors.is_empty() {
        return Ok(hist);
    }
    for d in descriptors {
        if d.vector.len() != vocab.descriptor_dim {
            return Err(CoreError::ShapeMismatch {
                expected: format!("descriptor dim {}", vocab.descriptor_dim),
                found: format!("{}", d.vector.len()),
            });
        }
        hist[nearest_centroid(&d.vector, &vocab.centroids)] += F::one();
    }
    let total = F::from_count(descriptors.len());
    hist.iter_mut().for_each(|h| *h /= total);
    Ok(hist)
}
