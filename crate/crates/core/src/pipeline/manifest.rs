//! Dataset manifests persisted as JSON Lines.
//!
//! Paths are held resolved in memory and written relative to the manifest's
//! own directory, so a run directory can be moved without breaking links.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::{self, Deserializer, MapAccess, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The three sampled values of one augmentation warp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineParams {
    pub rotate_deg: f64,
    /// Horizontal shift as a fraction of the width.
    pub shift_x: f64,
    /// Vertical shift as a fraction of the height.
    pub shift_y: f64,
    pub zoom: f64,
}

impl AffineParams {
    pub const IDENTITY: AffineParams = AffineParams {
        rotate_deg: 0.0,
        shift_x: 0.0,
        shift_y: 0.0,
        zoom: 1.0,
    };
}

/// How a record was derived from its source. Serialized as the string
/// `"identity"` or as an object of [`AffineParams`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transform {
    Identity,
    Affine(AffineParams),
}

impl Transform {
    pub fn is_identity(&self) -> bool {
        matches!(self, Transform::Identity)
    }
}

impl Serialize for Transform {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Transform::Identity => s.serialize_str("identity"),
            Transform::Affine(p) => p.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for Transform {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Transform;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("\"identity\" or an affine descriptor object")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Transform, E> {
                if v == "identity" {
                    Ok(Transform::Identity)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
            fn visit_map<A: MapAccess<'de>>(self, map: A) -> std::result::Result<Transform, A::Error> {
                AffineParams::deserialize(de::value::MapAccessDeserializer::new(map)).map(Transform::Affine)
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub sample_id: String,
    pub path: PathBuf,
    pub source_id: String,
    pub transform: Transform,
    #[serde(default)]
    pub label: Option<usize>,
}

impl ManifestRecord {
    pub fn original(sample_id: impl Into<String>, path: impl Into<PathBuf>) -> Self {
        let sample_id = sample_id.into();
        Self {
            source_id: sample_id.clone(),
            sample_id,
            path: path.into(),
            transform: Transform::Identity,
            label: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    pub records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    pub fn new(records: Vec<ManifestRecord>) -> Result<Self> {
        let m = Self { records };
        m.validate()?;
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn is_labeled(&self) -> bool {
        self.records.first().is_some_and(|r| r.label.is_some())
    }

    pub fn ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.sample_id.clone()).collect()
    }

    pub fn labels(&self) -> Option<Vec<usize>> {
        self.records.iter().map(|r| r.label).collect()
    }

    /// Number of distinct labels, or 0 for an unlabeled manifest.
    pub fn num_classes(&self) -> usize {
        self.records
            .iter()
            .filter_map(|r| r.label)
            .collect::<HashSet<_>>()
            .len()
    }

    pub fn validate(&self) -> Result<()> {
        let mut by_id: HashMap<&str, &ManifestRecord> = HashMap::with_capacity(self.records.len());
        for r in &self.records {
            if by_id.insert(&r.sample_id, r).is_some() {
                return Err(Error::invariant(format!("duplicate sample_id {:?}", r.sample_id)));
            }
        }
        let labeled = self.records.iter().filter(|r| r.label.is_some()).count();
        if labeled != 0 && labeled != self.records.len() {
            return Err(Error::invariant(format!(
                "{labeled} of {} records carry labels; labels must be all or none",
                self.records.len()
            )));
        }
        for r in &self.records {
            if r.transform.is_identity() {
                if r.source_id != r.sample_id {
                    return Err(Error::invariant(format!(
                        "identity record {:?} names a different source {:?}",
                        r.sample_id, r.source_id
                    )));
                }
                continue;
            }
            let src = by_id.get(r.source_id.as_str()).ok_or_else(|| {
                Error::invariant(format!(
                    "record {:?} refers to missing source {:?}",
                    r.sample_id, r.source_id
                ))
            })?;
            if !src.transform.is_identity() {
                return Err(Error::invariant(format!(
                    "source {:?} of {:?} is itself augmented",
                    r.source_id, r.sample_id
                )));
            }
            if src.label != r.label {
                return Err(Error::invariant(format!(
                    "record {:?} has label {:?} but its source has {:?}",
                    r.sample_id, r.label, src.label
                )));
            }
        }
        Ok(())
    }

    /// Writes the manifest as JSON Lines.
    pub fn save(&self, path: &Path) -> Result<()> {
        let base = manifest_dir(path)?;
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for r in &self.records {
            let mut rec = r.clone();
            rec.path = relative_to(&rec.path, &base)?;
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let base = manifest_dir(path)?;
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for (no, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut rec: ManifestRecord = serde_json::from_str(&line)
                .map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), no + 1)))?;
            if rec.path.is_relative() {
                rec.path = base.join(&rec.path);
            }
            records.push(rec);
        }
        Self::new(records)
    }
}

fn manifest_dir(path: &Path) -> Result<PathBuf> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::path::absolute(parent).map_err(|e| Error::io(parent, e))
}

fn relative_to(path: &Path, base: &Path) -> Result<PathBuf> {
    let abs = std::path::absolute(path).map_err(|e| Error::io(path, e))?;
    Ok(pathdiff::diff_paths(&abs, base).unwrap_or(abs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, src: &str, aug: bool, label: Option<usize>) -> ManifestRecord {
        ManifestRecord {
            sample_id: id.into(),
            path: PathBuf::from(format!("{id}.png")),
            source_id: src.into(),
            transform: if aug {
                Transform::Affine(AffineParams {
                    rotate_deg: 1.5,
                    shift_x: -0.01,
                    shift_y: 0.02,
                    zoom: 0.95,
                })
            } else {
                Transform::Identity
            },
            label,
        }
    }

    #[test]
    fn rejects_duplicate_ids() {
        let err = DatasetManifest::new(vec![rec("a", "a", false, None), rec("a", "a", false, None)]);
        assert!(matches!(err, Err(Error::Invariant(_))));
    }

    #[test]
    fn rejects_partial_labels() {
        let err = DatasetManifest::new(vec![rec("a", "a", false, Some(0)), rec("b", "b", false, None)]);
        assert!(err.is_err());
    }

    #[test]
    fn rejects_label_mismatch_with_source() {
        let err = DatasetManifest::new(vec![rec("a", "a", false, Some(0)), rec("a_1", "a", true, Some(1))]);
        assert!(err.is_err());
    }

    #[test]
    fn rejects_dangling_source() {
        assert!(DatasetManifest::new(vec![rec("a_1", "a", true, None)]).is_err());
    }

    #[test]
    fn jsonl_round_trip_with_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = DatasetManifest::new(vec![rec("a", "a", false, Some(2)), rec("a_1", "a", true, Some(2))]).unwrap();
        for r in &mut m.records {
            r.path = dir.path().join("img").join(&r.path);
        }
        let path = dir.path().join("m.jsonl");
        m.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"path\":\"img/a.png\""), "{text}");
        assert!(text.contains("\"transform\":\"identity\""));
        let back = DatasetManifest::load(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back.records[1].transform, m.records[1].transform);
        assert_eq!(
            std::path::absolute(&back.records[0].path).unwrap(),
            std::path::absolute(&m.records[0].path).unwrap()
        );
    }
}
