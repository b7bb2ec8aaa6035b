//! JSON envelope for trained models.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::EsnParams;
use crate::data::write_atomic;
use crate::error::{Error, Result};
use crate::nn::FORMAT_VERSION;
use crate::training::TrainedModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model_kind", content = "model", rename_all = "snake_case")]
pub enum ModelBody {
    Lstm(TrainedModel),
    Esn(EsnParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    #[serde(flatten)]
    pub body: ModelBody,
}

impl ModelFile {
    pub fn lstm(model: TrainedModel) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            body: ModelBody::Lstm(model),
        }
    }

    pub fn esn(model: EsnParams) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            body: ModelBody::Esn(model),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        let version = raw.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let file: ModelFile = serde_json::from_value(raw)?;
        if let ModelBody::Lstm(m) = &file.body {
            if m.net.format_version != FORMAT_VERSION {
                return Err(Error::UnsupportedVersion {
                    found: m.net.format_version,
                    expected: FORMAT_VERSION,
                });
            }
            m.net.validate()?;
        }
        Ok(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn into_lstm(self) -> Result<TrainedModel> {
        match self.body {
            ModelBody::Lstm(m) => Ok(m),
            ModelBody::Esn(_) => Err(Error::InvalidInput("expected an LSTM model file, found an ESN".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{EsnConfig, EsnParams};
    use crate::training::{pretrain, TrainConfig};

    fn small_model() -> TrainedModel {
        pretrain(&TrainConfig {
            steps: 3_000,
            hidden: 4,
            pretrain_epochs: 3,
            ..TrainConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn lstm_round_trip_is_bitwise() {
        let model = small_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        ModelFile::lstm(model.clone()).save(&path).unwrap();
        let back = ModelFile::load(&path).unwrap().into_lstm().unwrap();
        for (a, b) in back.net.tensors().iter().zip(model.net.tensors()) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        assert_eq!(back, model);
    }

    #[test]
    fn esn_has_its_own_tag() {
        let esn = EsnParams::new(EsnConfig {
            reservoir_size: 5,
            ..EsnConfig::default()
        })
        .unwrap();
        let json = ModelFile::esn(esn.clone()).to_json().unwrap();
        assert!(json.contains("\"model_kind\": \"esn\""));
        let back = ModelFile::from_json(&json).unwrap();
        assert_eq!(back.body, ModelBody::Esn(esn));
        assert!(back.into_lstm().is_err());
    }

    #[test]
    fn unknown_version_rejected() {
        let json = ModelFile::lstm(small_model()).to_json().unwrap();
        let bumped = json.replacen("\"format_version\": 1", "\"format_version\": 7", 1);
        assert!(matches!(
            ModelFile::from_json(&bumped),
            Err(Error::UnsupportedVersion { found: 7, .. })
        ));
    }
}
