//! Feature-matrix CSV with a header row:
//! `id,domain,label,weight,<feature columns>`. Floats use the shortest
//! round-trip rendering, so re-reading reproduces the exact values.

use std::fmt::Write as _;
use std::path::Path;

use imcred_core::dataset::Domain;
use imcred_core::error::{CoreError, Result};

#[derive(Debug, Clone)]
pub struct FeatureRow {
    pub id: String,
    pub domain: Domain,
    pub label: Option<u8>,
    pub weight: f64,
    pub features: Vec<f64>,
}

pub struct FeatureMatrix {
    pub feature_names: Vec<String>,
    pub rows: Vec<FeatureRow>,
}

fn domain_str(d: Domain) -> &'static str {
    match d {
        Domain::Auxiliary => "auxiliary",
        Domain::TargetTrain => "target_train",
        Domain::TargetTest => "target_test",
    }
}

fn domain_parse(s: &str) -> Result<Domain> {
    match s {
        "auxiliary" => Ok(Domain::Auxiliary),
        "target_train" => Ok(Domain::TargetTrain),
        "target_test" => Ok(Domain::TargetTest),
        other => Err(CoreError::InvalidInput(format!("unknown domain `{other}`"))),
    }
}

pub fn write_matrix(matrix: &FeatureMatrix, path: &Path) -> Result<()> {
    let mut out = String::from("id,domain,label,weight");
    for name in &matrix.feature_names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for row in &matrix.rows {
        if row.features.len() != matrix.feature_names.len() {
            return Err(CoreError::ShapeMismatch {
                expected: format!("{} features", matrix.feature_names.len()),
                found: format!("{} in row `{}`", row.features.len(), row.id),
            });
        }
        let label = row.label.map(|l| l.to_string()).unwrap_or_default();
        write!(out, "{},{},{},{}", row.id, domain_str(row.domain), label, row.weight)
            .expect("write to string");
        for f in &row.features {
            write!(out, ",{f}").expect("write to string");
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<FeatureMatrix> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| CoreError::InvalidInput("empty feature CSV".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 4 || cols[..4] != ["id", "domain", "label", "weight"] {
        return Err(CoreError::InvalidInput(
            "feature CSV header must start with id,domain,label,weight".into(),
        ));
    }
    let feature_names: Vec<String> = cols[4..].iter().map(|s| s.to_string()).collect();
    let mut rows = Vec::new();
    for (lineno, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 + feature_names.len() {
            return Err(CoreError::Manifest {
                line: lineno + 1,
                msg: format!("expected {} fields, found {}", 4 + feature_names.len(), fields.len()),
            });
        }
        let label = if fields[2].is_empty() {
            None
        } else {
            Some(fields[2].parse::<u8>().map_err(|e| CoreError::Manifest {
                line: lineno + 1,
                msg: format!("bad label: {e}"),
            })?)
        };
        let weight: f64 = fields[3].parse().map_err(|e| CoreError::Manifest {
            line: lineno + 1,
            msg: format!("bad weight: {e}"),
        })?;
        let features = fields[4..]
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|e| CoreError::Manifest {
                    line: lineno + 1,
                    msg: format!("bad feature value: {e}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(FeatureRow {
            id: fields[0].to_string(),
            domain: domain_parse(fields[1])?,
            label,
            weight,
            features,
        });
    }
    Ok(FeatureMatrix { feature_names, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_exact() {
        let dir = std::env::temp_dir().join(format!("imcred-csv-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.csv");
        let matrix = FeatureMatrix {
            feature_names: vec!["a".into(), "b".into()],
            rows: vec![
                FeatureRow {
                    id: "x".into(),
                    domain: Domain::Auxiliary,
                    label: Some(1),
                    weight: 0.1,
                    features: vec![1.0 / 3.0, -2.5e-17],
                },
                FeatureRow {
                    id: "y".into(),
                    domain: Domain::TargetTest,
                    label: None,
                    weight: 1.0,
                    features: vec![0.0, 5.0],
                },
            ],
        };
        write_matrix(&matrix, &path).unwrap();
        let back = read_matrix(&path).unwrap();
        assert_eq!(back.feature_names, matrix.feature_names);
        assert_eq!(back.rows.len(), 2);
        assert_eq!(back.rows[0].features, matrix.rows[0].features);
        assert_eq!(back.rows[1].label, None);
        assert_eq!(back.rows[1].domain, Domain::TargetTest);
    }
}
