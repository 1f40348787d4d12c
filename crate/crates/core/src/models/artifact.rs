//! Versioned binary container for fitted models: magic, format version, a
//! JSON manifest and a JSON payload, each length-prefixed.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::arima::ArimaModel;
use super::ffnn::Ffnn;
use super::forest::RandomForest;
use super::linear::LinearModel;
use super::lstm::LstmNet;
use super::ModelSpec;
use crate::error::{Error, Result};
use crate::features::FeatureColumn;
use crate::preprocess::ColumnTransform;

const MAGIC: &[u8; 8] = b"WFSTKMDL";
pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FittedModel {
    Arima(ArimaModel),
    Linear(LinearModel),
    Forest(RandomForest),
    Ffnn(Ffnn),
    Lstm(LstmNet),
    /// Shared recurrent layers with one retrained head (weights, bias) per
    /// ticker.
    FinetunedLstm { base: LstmNet, heads: BTreeMap<String, (Vec<f64>, f64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactManifest {
    pub spec: ModelSpec,
    /// Ticker, sector or `all`, per the spec's scope.
    pub group: String,
    pub window_start: chrono::NaiveDate,
    pub window_end: chrono::NaiveDate,
    /// SHA-256 over the training rows that produced the model.
    pub training_hash: String,
    pub transforms: Vec<(FeatureColumn, Option<ColumnTransform>)>,
    pub payload_sha256: String,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_artifact(path: &Path, manifest: &ArtifactManifest, model: &FittedModel) -> Result<()> {
    let payload = serde_json::to_vec(model)?;
    let mut manifest = manifest.clone();
    manifest.payload_sha256 = hex(&Sha256::digest(&payload));
    let head = serde_json::to_vec(&manifest)?;
    let mut out = Vec::with_capacity(32 + head.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&ARTIFACT_VERSION.to_le_bytes());
    out.extend_from_slice(&(head.len() as u64).to_le_bytes());
    out.extend_from_slice(&head);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn read_artifact(path: &Path) -> Result<(ArtifactManifest, FittedModel)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::parse(path, msg.to_string());
    let mut rest: &[u8] = &bytes;
    let mut take = |n: usize| -> Result<&[u8]> {
        if rest.len() < n {
            return Err(bad("truncated model artifact"));
        }
        let (head, tail) = rest.split_at(n);
        rest = tail;
        Ok(head)
    };
    if take(8)? != MAGIC {
        return Err(bad("not a model artifact"));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes"));
    if version != ARTIFACT_VERSION {
        return Err(bad(&format!("unsupported artifact version {version}")));
    }
    let len = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
    let manifest: ArtifactManifest = serde_json::from_slice(take(len)?)?;
    let len = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
    let payload = take(len)?;
    if hex(&Sha256::digest(payload)) != manifest.payload_sha256 {
        return Err(bad("payload checksum mismatch"));
    }
    Ok((manifest, serde_json::from_slice(payload)?))
}
