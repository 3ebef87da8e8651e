//! Dataset representation and manifest ingestion.
//!
//! A manifest is UTF-8 JSON-lines, one instance per line:
//! `{"id", "image"?, "text"?, "features"?, "label", "domain", "weight"?}`.
//! Image paths are relative to the manifest's directory.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Auxiliary,
    TargetTrain,
    TargetTest,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Domain::Auxiliary => "auxiliary",
            Domain::TargetTrain => "target_train",
            Domain::TargetTest => "target_test",
        };
        f.write_str(s)
    }
}

/// One data point. `label` is the weak label for auxiliary instances and the
/// gold label for target instances (0 = real, 1 = fake). `weight` is mutated
/// only by the boosting driver between iterations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    #[serde(rename = "image", skip_serializing_if = "Option::is_none")]
    pub image_path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<f64>>,
    pub label: Option<u8>,
    pub domain: Domain,
    #[serde(default = "default_weight")]
    pub weight: f64,
}

fn default_weight() -> f64 {
    1.0
}

impl Instance {
    fn validate(&self) -> std::result::Result<(), String> {
        if self.image_path.is_none() && self.text.is_none() && self.features.is_none() {
            return Err("instance carries neither image, text nor features".into());
        }
        if !(self.weight >= 0.0) {
            return Err(format!("weight {} is negative or NaN", self.weight));
        }
        if matches!(self.domain, Domain::TargetTrain | Domain::TargetTest) && self.label.is_none() {
            return Err(format!("{} instance lacks a label", self.domain));
        }
        if let Some(l) = self.label {
            if l > 1 {
                return Err(format!("label {l} outside {{0,1}}"));
            }
        }
        Ok(())
    }
}

/// An instance collection with cached auxiliary / target-train counts.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub instances: Vec<Instance>,
    /// Directory image paths are resolved against; set by `load_manifest`.
    pub base_dir: Option<PathBuf>,
}

impl Dataset {
    pub fn from_instances(instances: Vec<Instance>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (i, inst) in instances.iter().enumerate() {
            inst.validate().map_err(|msg| CoreError::Manifest { line: i + 1, msg })?;
            if !seen.insert(inst.id.clone()) {
                return Err(CoreError::DuplicateId {
                    id: inst.id.clone(),
                    line: i + 1,
                });
            }
        }
        Ok(Dataset {
            instances,
            base_dir: None,
        })
    }

    /// n of the boosting algorithm: auxiliary instance count.
    pub fn n_auxiliary(&self) -> usize {
        self.count(Domain::Auxiliary)
    }

    /// m of the boosting algorithm: target training instance count.
    pub fn m_target_train(&self) -> usize {
        self.count(Domain::TargetTrain)
    }

    fn count(&self, d: Domain) -> usize {
        self.instances.iter().filter(|i| i.domain == d).count()
    }

    pub fn indices_of(&self, d: Domain) -> Vec<usize> {
        self.instances
            .iter()
            .enumerate()
            .filter(|(_, i)| i.domain == d)
            .map(|(k, _)| k)
            .collect()
    }

    /// Absolute path of an instance's image, resolved against the manifest dir.
    pub fn image_path(&self, inst: &Instance) -> Option<PathBuf> {
        inst.image_path.as_ref().map(|p| match &self.base_dir {
            Some(dir) => dir.join(p),
            None => PathBuf::from(p),
        })
    }
}

/// Load a JSON-lines manifest. Counts n and m are recomputed; absent weights
/// default to 1.0. Malformed lines and duplicate ids are reported with their
/// line number.
pub fn load_manifest(path: &Path) -> Result<Dataset> {
    let content = fs::read_to_string(path)?;
    let mut instances = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (lineno, line) in content.lines().enumerate() {
        let line_1 = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let inst: Instance = serde_json::from_str(line).map_err(|e| CoreError::Manifest {
            line: line_1,
            msg: e.to_string(),
        })?;
        inst.validate().map_err(|msg| CoreError::Manifest {
            line: line_1,
            msg,
        })?;
        if !seen.insert(inst.id.clone()) {
            return Err(CoreError::DuplicateId {
                id: inst.id,
                line: line_1,
            });
        }
        instances.push(inst);
    }
    Ok(Dataset {
        instances,
        base_dir: path.parent().map(|p| p.to_path_buf()),
    })
}

/// Write a manifest; one compact JSON object per line, in instance order.
pub fn save_manifest(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut out = fs::File::create(path)?;
    for inst in &dataset.instances {
        serde_json::to_writer(&mut out, inst)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(name: &str, content: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("imcred-dataset-{}-{name}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let p = dir.join("manifest.jsonl");
        fs::write(&p, content).unwrap();
        p
    }

    #[test]
    fn counts_from_two_line_manifest() {
        let p = write_tmp(
            "counts",
            concat!(
                "{\"id\":\"a\",\"text\":\"hello\",\"label\":1,\"domain\":\"auxiliary\"}\n",
                "{\"id\":\"b\",\"text\":\"world\",\"label\":0,\"domain\":\"target_train\"}\n",
            ),
        );
        let ds = load_manifest(&p).unwrap();
        assert_eq!(ds.n_auxiliary(), 1);
        assert_eq!(ds.m_target_train(), 1);
        assert_eq!(ds.instances[0].weight, 1.0);
    }

    #[test]
    fn empty_manifest() {
        let p = write_tmp("empty", "");
        let ds = load_manifest(&p).unwrap();
        assert_eq!(ds.n_auxiliary(), 0);
        assert_eq!(ds.m_target_train(), 0);
    }

    #[test]
    fn line_missing_all_content_errors_with_line_number() {
        let p = write_tmp(
            "nocontent",
            concat!(
                "{\"id\":\"a\",\"text\":\"x\",\"label\":1,\"domain\":\"auxiliary\"}\n",
                "{\"id\":\"b\",\"label\":0,\"domain\":\"auxiliary\"}\n",
            ),
        );
        match load_manifest(&p) {
            Err(CoreError::Manifest { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected manifest error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_id_errors() {
        let p = write_tmp(
            "dup",
            concat!(
                "{\"id\":\"a\",\"text\":\"x\",\"label\":1,\"domain\":\"auxiliary\"}\n",
                "{\"id\":\"a\",\"text\":\"y\",\"label\":0,\"domain\":\"auxiliary\"}\n",
            ),
        );
        assert!(matches!(load_manifest(&p), Err(CoreError::DuplicateId { line: 2, .. })));
    }

    #[test]
    fn malformed_json_names_line() {
        let p = write_tmp("badjson", "{\"id\":\n");
        assert!(matches!(load_manifest(&p), Err(CoreError::Manifest { line: 1, .. })));
    }

    #[test]
    fn target_instance_requires_label() {
        let p = write_tmp(
            "nolabel",
            "{\"id\":\"a\",\"text\":\"x\",\"label\":null,\"domain\":\"target_test\"}\n",
        );
        assert!(load_manifest(&p).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let ds = Dataset::from_instances(vec![Instance {
            id: "z".into(),
            image_path: Some("img/z.pgm".into()),
            text: None,
            features: Some(vec![0.25, -1.5]),
            label: Some(1),
            domain: Domain::TargetTrain,
            weight: 0.5,
        }])
        .unwrap();
        let p = write_tmp("rt", "");
        save_manifest(&ds, &p).unwrap();
        let back = load_manifest(&p).unwrap();
        assert_eq!(back.instances.len(), 1);
        assert_eq!(back.instances[0].features.as_deref(), Some(&[0.25, -1.5][..]));
        assert_eq!(back.instances[0].weight, 0.5);
        let resolved = back.image_path(&back.instances[0]).unwrap();
        assert!(resolved.ends_with("img/z.pgm"));
    }
}
