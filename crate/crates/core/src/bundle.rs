//! Persisted models: one JSON document holding every fitted component.
//!
//! ```text
//! {"format":"tourkit-model","version":1,"checksum":"<sha256 of payload>","payload":{...}}
//! ```
//!
//! The checksum covers the payload text exactly as stored, so any edit to the
//! payload is caught before it is decoded.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use sha2::{Digest, Sha256};

use crate::data::{write_pois, write_trajectories, PoiTable, Trajectory};
use crate::error::{Error, Result};
use crate::model::TrainedModels;

pub const FORMAT: &str = "tourkit-model";
pub const VERSION: u32 = 1;

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Content hash of a dataset, taken over its canonical CSV rendering.
pub fn dataset_fingerprint(pois: &PoiTable, trajectories: &[Trajectory]) -> Result<String> {
    let mut text = Vec::new();
    write_pois(&mut text, pois)?;
    write_trajectories(&mut text, trajectories)?;
    Ok(sha256_hex(&text))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub fingerprint: String,
    pub models: TrainedModels,
}

#[derive(Serialize, Deserialize)]
struct Envelope<'a> {
    format: String,
    version: u32,
    checksum: String,
    #[serde(borrow)]
    payload: &'a RawValue,
}

impl ModelBundle {
    pub fn to_json(&self) -> Result<String> {
        let payload = serde_json::to_string(self)?;
        let raw = RawValue::from_string(payload)?;
        let envelope = Envelope {
            format: FORMAT.to_string(),
            version: VERSION,
            checksum: sha256_hex(raw.get().as_bytes()),
            payload: &raw,
        };
        let mut out = serde_json::to_string(&envelope)?;
        out.push('\n');
        Ok(out)
    }

    /// Decodes and checks a bundle. With `expected_fingerprint` set, the
    /// bundle must have been trained on that dataset unless `force` is given.
    pub fn from_json(text: &str, expected_fingerprint: Option<&str>, force: bool) -> Result<Self> {
        let envelope: Envelope<'_> = serde_json::from_str(text)
            .map_err(|e| Error::Bundle(format!("not a model bundle: {e}")))?;
        if envelope.format != FORMAT {
            return Err(Error::Bundle(format!("unknown format {:?}", envelope.format)));
        }
        if envelope.version != VERSION {
            return Err(Error::Bundle(format!(
                "unsupported bundle version {} (expected {VERSION})",
                envelope.version
            )));
        }
        let actual = sha256_hex(envelope.payload.get().as_bytes());
        if actual != envelope.checksum {
            return Err(Error::Bundle("checksum mismatch; the bundle is corrupted".into()));
        }
        let bundle: ModelBundle = serde_json::from_str(envelope.payload.get())
            .map_err(|e| Error::Bundle(format!("malformed payload: {e}")))?;
        bundle
            .models
            .validate()
            .map_err(|e| Error::Bundle(format!("inconsistent models: {e}")))?;
        if let Some(expected) = expected_fingerprint {
            if expected != bundle.fingerprint {
                if !force {
                    return Err(Error::Bundle(format!(
                        "bundle was trained on dataset {} but this dataset is {expected}; pass --force to use it anyway",
                        bundle.fingerprint
                    )));
                }
                log::warn!("dataset fingerprint differs from the bundle's; continuing");
            }
        }
        Ok(bundle)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>, expected_fingerprint: Option<&str>, force: bool) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, expected_fingerprint, force)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_dataset, SynthConfig};
    use crate::model::{fit, ModelParams, Needs};

    fn bundle() -> ModelBundle {
        let (pois, trajs) = synth_dataset(&SynthConfig {
            seed: 2,
            n_pois: 8,
            n_traj: 30,
            max_len: 4,
        })
        .unwrap();
        let models = fit(&pois, &trajs, &ModelParams::default(), Needs::ALL).unwrap();
        ModelBundle {
            fingerprint: dataset_fingerprint(&pois, &trajs).unwrap(),
            models,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let b = bundle();
        let text = b.to_json().unwrap();
        let back = ModelBundle::from_json(&text, Some(&b.fingerprint), false).unwrap();
        assert_eq!(back, b);
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn corruption_is_detected() {
        let text = bundle().to_json().unwrap();
        let tampered = text.replacen("\"c\":10.0", "\"c\":11.0", 1);
        assert_ne!(tampered, text);
        let err = ModelBundle::from_json(&tampered, None, false).unwrap_err();
        assert!(err.to_string().contains("checksum"), "{err}");

        let wrong_version = text.replacen("\"version\":1", "\"version\":9", 1);
        let err = ModelBundle::from_json(&wrong_version, None, false).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");

        assert!(ModelBundle::from_json("{}", None, false).is_err());
        assert!(ModelBundle::from_json(&text[..text.len() / 2], None, false).is_err());
    }

    #[test]
    fn fingerprint_mismatch_needs_force() {
        let text = bundle().to_json().unwrap();
        assert!(ModelBundle::from_json(&text, Some("00"), false).is_err());
        assert!(ModelBundle::from_json(&text, Some("00"), true).is_ok());
    }
}
