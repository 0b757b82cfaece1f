//! Model artifacts: trained networks serialized with enough provenance to
//! reproduce them.
//!
//! An artifact is one JSON document holding either a global (pre-trained)
//! model or a per-series forecaster, tagged with a schema version and the
//! (corpus, seed, config-hash) provenance triple. Floating-point fields
//! survive the round trip bit-exactly — the JSON writer emits
//! shortest-round-trip decimals and the reader parses them back to the same
//! bits — which is what lets a reloaded model reproduce its predictions
//! exactly. Deliberately absent: wall-clock timestamps. Two runs of the same
//! configuration must produce byte-identical artifacts, and a timestamp
//! would break that for zero reproducibility value; the provenance triple
//! identifies the training run better than a clock reading would.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use tsforge_core::forecasters::TrainedForecaster;
use tsforge_core::transfer::GlobalModel;
use tsforge_core::{Error, Result};

pub const ARTIFACT_SCHEMA_VERSION: u32 = 1;

/// Where a model came from: which corpus or series it was trained on, under
/// which derived seed, within which experiment configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    /// Ingest identity: source file stem(s) for global models, the series id
    /// for fine-tuned ones.
    pub corpus_id: String,
    /// The derived task seed the training loop actually consumed.
    pub seed: u64,
    /// Hash of the experiment configuration the model belongs to.
    pub config_hash: String,
}

/// The serialized model itself: a global network awaiting fine-tuning, or a
/// finished per-series forecaster. Adjacently tagged so the payload's own
/// tags (the forecaster enum carries one) stay inside `model`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "snake_case")]
pub enum ArtifactPayload {
    Global(Box<GlobalModel>),
    Forecaster(Box<TrainedForecaster>),
}

/// One model on disk: schema version, payload, provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelArtifact {
    pub schema_version: u32,
    pub payload: ArtifactPayload,
    pub provenance: Provenance,
}

impl ModelArtifact {
    pub fn global(model: GlobalModel, provenance: Provenance) -> Self {
        Self {
            schema_version: ARTIFACT_SCHEMA_VERSION,
            payload: ArtifactPayload::Global(Box::new(model)),
            provenance,
        }
    }

    pub fn forecaster(model: TrainedForecaster, provenance: Provenance) -> Self {
        Self {
            schema_version: ARTIFACT_SCHEMA_VERSION,
            payload: ArtifactPayload::Forecaster(Box::new(model)),
            provenance,
        }
    }

    /// The payload as a global model, or an error naming what it really is.
    pub fn into_global(self) -> Result<GlobalModel> {
        match self.payload {
            ArtifactPayload::Global(m) => Ok(*m),
            ArtifactPayload::Forecaster(_) => Err(Error::invalid_config(
                "artifact holds a per-series forecaster, not a global model",
            )),
        }
    }

    /// The payload as a per-series forecaster, or an error naming what it
    /// really is.
    pub fn into_forecaster(self) -> Result<TrainedForecaster> {
        match self.payload {
            ArtifactPayload::Forecaster(m) => Ok(*m),
            ArtifactPayload::Global(_) => Err(Error::invalid_config(
                "artifact holds a global model, not a per-series forecaster",
            )),
        }
    }
}

/// Serializes an artifact to canonical JSON bytes (used both for writing and
/// for checksum bookkeeping).
pub fn artifact_bytes(artifact: &ModelArtifact) -> Vec<u8> {
    serde_json::to_vec_pretty(artifact).expect("artifact serializes")
}

/// Writes one artifact to `path`, creating parent directories.
pub fn persist_model(artifact: &ModelArtifact, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
    }
    fs::write(path, artifact_bytes(artifact))
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

/// Reads one artifact back. Truncated or malformed files surface as parse
/// errors; a schema version this build does not understand is rejected with
/// an explicit migration message instead of being misread.
pub fn load_model(path: impl AsRef<Path>) -> Result<ModelArtifact> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;

    // Check the version before strict parsing, so a future schema with new
    // fields reports "migrate" rather than "unknown key".
    #[derive(Deserialize)]
    struct VersionProbe {
        schema_version: u32,
    }
    let probe: VersionProbe = serde_json::from_str(&raw).map_err(|e| Error::Parse {
        row: e.line(),
        column: e.column(),
        detail: format!("artifact '{}': {e}", path.display()),
    })?;
    if probe.schema_version != ARTIFACT_SCHEMA_VERSION {
        return Err(Error::invalid_config(format!(
            "artifact '{}' has schema_version {} but this build reads {}; migrate the artifact \
             or retrain",
            path.display(),
            probe.schema_version,
            ARTIFACT_SCHEMA_VERSION
        )));
    }

    serde_json::from_str(&raw).map_err(|e| Error::Parse {
        row: e.line(),
        column: e.column(),
        detail: format!("artifact '{}': {e}", path.display()),
    })
}
