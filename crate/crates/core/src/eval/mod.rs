//! Metrics, stratified splitting, the synthetic domain-shift benchmark and
//! the multi-arm comparison harness.

pub mod compare;
pub mod synth;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Domain};
use crate::error::{CoreError, Result};
use crate::rng::Rng;

/// Confusion counts with fake (label 1) as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_pos: u64,
    pub false_pos: u64,
    pub true_neg: u64,
    pub false_neg: u64,
}

impl ConfusionCounts {
    pub fn from_predictions(predictions: &[u8], labels: &[u8]) -> Result<Self> {
        if predictions.len() != labels.len() || predictions.is_empty() {
            return Err(CoreError::ShapeMismatch {
                expected: format!("{} nonempty predictions/labels", predictions.len()),
                found: format!("{}", labels.len()),
            });
        }
        let mut c = ConfusionCounts::default();
        for (&p, &l) in predictions.iter().zip(labels) {
            match (p, l) {
                (1, 1) => c.true_pos += 1,
                (1, 0) => c.false_pos += 1,
                (0, 0) => c.true_neg += 1,
                (0, 1) => c.false_neg += 1,
                _ => {
                    return Err(CoreError::InvalidInput(format!(
                        "non-binary prediction/label pair ({p}, {l})"
                    )))
                }
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }
}

/// Per-method report: accuracy plus both-class precision / recall / F1.
/// Zero-denominator ratios are defined as 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method_name: String,
    pub accuracy: f64,
    pub fake_precision: f64,
    pub fake_recall: f64,
    pub fake_f1: f64,
    pub real_precision: f64,
    pub real_recall: f64,
    pub real_f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn compute_metrics(predictions: &[u8], labels: &[u8], method_name: &str) -> Result<MetricsReport> {
    let c = ConfusionCounts::from_predictions(predictions, labels)?;
    let fake_precision = ratio(c.true_pos, c.true_pos + c.false_pos);
    let fake_recall = ratio(c.true_pos, c.true_pos + c.false_neg);
    let real_precision = ratio(c.true_neg, c.true_neg + c.false_neg);
    let real_recall = ratio(c.true_neg, c.true_neg + c.false_pos);
    Ok(MetricsReport {
        method_name: method_name.to_string(),
        accuracy: ratio(c.true_pos + c.true_neg, c.total()),
        fake_precision,
        fake_recall,
        fake_f1: f1(fake_precision, fake_recall),
        real_precision,
        real_recall,
        real_f1: f1(real_precision, real_recall),
    })
}

/// Stratified split over a labeled sequence: per class, floor(ratio * count)
/// indices go to train after a seeded shuffle, the remainder to test.
/// Errors when either class is absent.
pub fn stratified_split(
    labels: &[u8],
    ratio: (u32, u32),
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let (train_parts, test_parts) = ratio;
    if train_parts == 0 || test_parts == 0 {
        return Err(CoreError::InvalidInput("split ratio parts must be positive".into()));
    }
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &l) in labels.iter().enumerate() {
        if l > 1 {
            return Err(CoreError::InvalidInput(format!("label {l} outside {{0,1}}")));
        }
        by_class[l as usize].push(i);
    }
    if by_class[0].is_empty() || by_class[1].is_empty() {
        return Err(CoreError::InvalidInput("a class has zero instances".into()));
    }
    let denom = (train_parts + test_parts) as u64;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, indices) in by_class.iter_mut().enumerate() {
        let mut rng = Rng::stream(seed, 0x5917 + class as u64);
        rng.shuffle(indices);
        let take = (indices.len() as u64 * train_parts as u64 / denom) as usize;
        train.extend_from_slice(&indices[..take]);
        test.extend_from_slice(&indices[take..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Split a dataset's target instances into train/test domains, returning a
/// new dataset with reassigned domain tags. Auxiliary instances pass through.
pub fn split_dataset(data: &Dataset, ratio: (u32, u32), seed: u64) -> Result<Dataset> {
    let target_idx: Vec<usize> = data
        .instances
        .iter()
        .enumerate()
        .filter(|(_, inst)| {
            matches!(inst.domain, Domain::TargetTrain | Domain::TargetTest)
        })
        .map(|(i, _)| i)
        .collect();
    let labels: Vec<u8> = target_idx
        .iter()
        .map(|&i| {
            data.instances[i]
                .label
                .ok_or_else(|| CoreError::InvalidInput(format!(
                    "target instance `{}` lacks a label",
                    data.instances[i].id
                )))
        })
        .collect::<Result<_>>()?;
    let (train_rel, _) = stratified_split(&labels, ratio, seed)?;
    let train_set: std::collections::HashSet<usize> =
        train_rel.iter().map(|&r| target_idx[r]).collect();
    let mut out = data.clone();
    for &i in &target_idx {
        out.instances[i].domain = if train_set.contains(&i) {
            Domain::TargetTrain
        } else {
            Domain::TargetTest
        };
    }
    Ok(out)
}

/// Aligned plain-text comparison table: method column plus the seven numeric
/// columns (accuracy, then fake and real precision / recall / F1).
pub fn render_table(reports: &[(String, Option<MetricsReport>)]) -> String {
    let mut rows: Vec<Vec<String>> = vec![vec![
        "Method".into(),
        "Accuracy".into(),
        "Fake P".into(),
        "Fake R".into(),
        "Fake F1".into(),
        "Real P".into(),
        "Real R".into(),
        "Real F1".into(),
    ]];
    for (name, report) in reports {
        match report {
            Some(r) => rows.push(vec![
                name.clone(),
                format!("{:.3}", r.accuracy),
                format!("{:.3}", r.fake_precision),
                format!("{:.3}", r.fake_recall),
                format!("{:.3}", r.fake_f1),
                format!("{:.3}", r.real_precision),
                format!("{:.3}", r.real_recall),
                format!("{:.3}", r.real_f1),
            ]),
            None => {
                let mut row = vec![name.clone()];
                row.extend(std::iter::repeat_n("skipped".to_string(), 7));
                rows.push(row);
            }
        }
    }
    let widths: Vec<usize> = (0..8)
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_hand_arithmetic() {
        // tp=75, fn=25, fp=20, tn=80.
        let mut preds = Vec::new();
        let mut labels = Vec::new();
        for (p, l, count) in [(1u8, 1u8, 75), (0, 1, 25), (1, 0, 20), (0, 0, 80)] {
            preds.extend(std::iter::repeat_n(p, count));
            labels.extend(std::iter::repeat_n(l, count));
        }
        let m = compute_metrics(&preds, &labels, "hand").unwrap();
        assert!((m.fake_precision - 75.0 / 95.0).abs() < 1e-12);
        assert!((m.fake_recall - 0.75).abs() < 1e-12);
        assert!((m.fake_f1 - 0.7692).abs() < 1e-4);
        assert!((m.accuracy - 155.0 / 200.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_predictions() {
        let m = compute_metrics(&[1, 0, 1], &[1, 0, 1], "perfect").unwrap();
        for v in [
            m.accuracy,
            m.fake_precision,
            m.fake_recall,
            m.fake_f1,
            m.real_precision,
            m.real_recall,
            m.real_f1,
        ] {
            assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn all_predicted_fake_on_balanced_set() {
        let preds = vec![1u8; 10];
        let labels: Vec<u8> = (0..10).map(|i| (i % 2) as u8).collect();
        let m = compute_metrics(&preds, &labels, "all-fake").unwrap();
        assert_eq!(m.fake_recall, 1.0);
        assert_eq!(m.fake_precision, 0.5);
        // Real precision/recall hit the zero-denominator convention.
        assert_eq!(m.real_recall, 0.0);
        assert_eq!(m.real_precision, 0.0);
        assert_eq!(m.real_f1, 0.0);
    }

    #[test]
    fn metrics_match_brute_force_recount() {
        let mut rng = Rng::new(15);
        for _ in 0..20 {
            let n = 5 + rng.next_index(50);
            let preds: Vec<u8> = (0..n).map(|_| rng.next_index(2) as u8).collect();
            let labels: Vec<u8> = (0..n).map(|_| rng.next_index(2) as u8).collect();
            let m = compute_metrics(&preds, &labels, "rand").unwrap();
            let correct = preds.iter().zip(&labels).filter(|(p, l)| p == l).count();
            assert!((m.accuracy - correct as f64 / n as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn class_swap_symmetry() {
        let mut rng = Rng::new(16);
        let n = 60;
        let preds: Vec<u8> = (0..n).map(|_| rng.next_index(2) as u8).collect();
        let labels: Vec<u8> = (0..n).map(|_| rng.next_index(2) as u8).collect();
        let swapped_preds: Vec<u8> = preds.iter().map(|p| 1 - p).collect();
        let swapped_labels: Vec<u8> = labels.iter().map(|l| 1 - l).collect();
        let a = compute_metrics(&preds, &labels, "a").unwrap();
        let b = compute_metrics(&swapped_preds, &swapped_labels, "b").unwrap();
        assert!((a.accuracy - b.accuracy).abs() < 1e-12);
        assert!((a.fake_precision - b.real_precision).abs() < 1e-12);
        assert!((a.fake_recall - b.real_recall).abs() < 1e-12);
        assert!((a.real_f1 - b.fake_f1).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch_errors() {
        assert!(compute_metrics(&[1], &[1, 0], "x").is_err());
        assert!(compute_metrics(&[], &[], "x").is_err());
    }

    #[test]
    fn split_nine_to_one_on_a_large_balanced_set() {
        let labels: Vec<u8> = (0..14_616).map(|i| (i % 2) as u8).collect();
        let (train, test) = stratified_split(&labels, (9, 1), 3).unwrap();
        assert_eq!(train.len(), 13_154);
        assert_eq!(test.len(), 14_616 - 13_154);
        // Per class: floor(0.9 * 7308) = 6577.
        let fake_train = train.iter().filter(|&&i| labels[i] == 1).count();
        assert_eq!(fake_train, 6577);
    }

    #[test]
    fn split_ten_instances() {
        let labels = [1u8, 1, 1, 1, 1, 0, 0, 0, 0, 0];
        let (train, test) = stratified_split(&labels, (9, 1), 1).unwrap();
        assert_eq!(train.len(), 8);
        assert_eq!(test.len(), 2);
        let fake_train = train.iter().filter(|&&i| labels[i] == 1).count();
        assert_eq!(fake_train, 4);
    }

    #[test]
    fn split_deterministic_and_partition() {
        let labels: Vec<u8> = (0..101).map(|i| (i % 3 == 0) as u8).collect();
        let a = stratified_split(&labels, (4, 1), 9).unwrap();
        let b = stratified_split(&labels, (4, 1), 9).unwrap();
        assert_eq!(a, b);
        let mut all: Vec<usize> = a.0.iter().chain(a.1.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..101).collect::<Vec<_>>());
    }

    #[test]
    fn split_single_class_errors() {
        assert!(stratified_split(&[1, 1, 1], (9, 1), 0).is_err());
    }

    #[test]
    fn table_renders_one_row_per_arm() {
        let r = compute_metrics(&[1, 0], &[1, 0], "m").unwrap();
        let text = render_table(&[
            ("alpha".into(), Some(r)),
            ("beta".into(), None),
        ]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].contains("Accuracy"));
        assert!(lines[2].contains("skipped"));
        // Seven numeric columns after the method name.
        assert_eq!(lines[1].split_whitespace().count(), 8);
    }
}
