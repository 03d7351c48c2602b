//! Checkpoint directories: `manifest.json` plus a raw little-endian `f32`
//! parameter blob `params.bin` whose SHA-256 is recorded in the manifest.

use std::fs;
use std::path::Path;

use quadload_core::nets::ParamStore;
use quadload_core::rl::{Phase, PolicyBundle};
use quadload_core::rng::RngState;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{hex, RunConfig};
use crate::Error;

pub const FORMAT: &str = "quadload-checkpoint/1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const BLOB_FILE: &str = "params.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobInfo {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Trainer generator positions when the checkpoint was written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerRng {
    pub policy: RngState,
    pub update: RngState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub phase: Phase,
    /// Iterations trained in this phase.
    pub iteration: u32,
    pub seed: u64,
    pub config_hash: String,
    /// Blob checksum of the checkpoint this one was trained from.
    pub parent: Option<String>,
    pub rng: Option<TrainerRng>,
    pub params: Vec<ParamEntry>,
    pub blob: BlobInfo,
    pub config: RunConfig,
}

impl Manifest {
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.rows * p.cols).sum()
    }
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub store: ParamStore<f32>,
}

fn encode(store: &ParamStore<f32>) -> (Vec<ParamEntry>, Vec<u8>) {
    let mut entries = Vec::new();
    let mut blob = Vec::with_capacity(store.num_scalars() * 4);
    for (_, p) in store.iter() {
        entries.push(ParamEntry { name: p.name.clone(), rows: p.rows, cols: p.cols });
        for v in &p.data {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    (entries, blob)
}

impl Checkpoint {
    pub fn from_bundle(
        bundle: &PolicyBundle,
        config: &RunConfig,
        iteration: u32,
        parent: Option<String>,
        rng: Option<TrainerRng>,
    ) -> Self {
        let (params, blob) = encode(&bundle.store);
        let manifest = Manifest {
            format: FORMAT.into(),
            phase: bundle.phase,
            iteration,
            seed: config.rl.train.seed,
            config_hash: config.hash(),
            parent,
            rng,
            params,
            blob: BlobInfo { file: BLOB_FILE.into(), bytes: blob.len() as u64, sha256: hex(&Sha256::digest(&blob)) },
            config: config.clone(),
        };
        Self { manifest, store: bundle.store.clone() }
    }

    pub fn save(&self, dir: &Path) -> Result<(), Error> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir.display(), e))?;
        let (_, blob) = encode(&self.store);
        let blob_path = dir.join(BLOB_FILE);
        fs::write(&blob_path, &blob).map_err(|e| Error::io(blob_path.display(), e))?;
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, text + "\n").map_err(|e| Error::io(path.display(), e))
    }

    pub fn read_manifest(dir: &Path) -> Result<Manifest, Error> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(path.display(), e))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::CorruptCheckpoint(format!("{}: {e}", path.display())))?;
        if manifest.format != FORMAT {
            return Err(Error::CorruptCheckpoint(format!("unknown format {:?}", manifest.format)));
        }
        Ok(manifest)
    }

    /// Loads and verifies the blob checksum and size.
    pub fn load(dir: &Path) -> Result<Self, Error> {
        let manifest = Self::read_manifest(dir)?;
        let path = dir.join(&manifest.blob.file);
        let blob = fs::read(&path).map_err(|e| Error::io(path.display(), e))?;
        let digest = hex(&Sha256::digest(&blob));
        if digest != manifest.blob.sha256 {
            return Err(Error::CorruptCheckpoint(format!(
                "{} checksum {digest} does not match manifest {}",
                path.display(),
                manifest.blob.sha256
            )));
        }
        if blob.len() as u64 != manifest.blob.bytes || blob.len() != 4 * manifest.num_scalars() {
            return Err(Error::CorruptCheckpoint(format!("{} has {} bytes", path.display(), blob.len())));
        }
        let mut store = ParamStore::new();
        let mut words = blob.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
        for p in &manifest.params {
            let data: Vec<f32> = words.by_ref().take(p.rows * p.cols).collect();
            if store.find(&p.name).is_some() {
                return Err(Error::CorruptCheckpoint(format!("duplicate parameter {}", p.name)));
            }
            store.add(p.name.clone(), p.rows, p.cols, data);
        }
        Ok(Self { manifest, store })
    }

    pub fn bundle(&self) -> Result<PolicyBundle, Error> {
        PolicyBundle::bind(self.manifest.config.rl.train.bundle.clone(), self.manifest.phase, self.store.clone())
            .map_err(|e| Error::CheckpointMismatch(format!("parameters do not fit the recorded layout: {e}")))
    }
}
