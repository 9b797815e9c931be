//! `UQSO` checkpoint files: magic, little-endian `u32` version, length-prefixed
//! JSON manifest, then little-endian `f64` values (parameters, followed by the
//! two Adam moment vectors when optimizer state is saved).

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamConfig, AdamState, ParamStore, Tensor};
use crate::cvae::ModelConfig;
use crate::dataset::{read_f64s, split_container};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"UQSO";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

impl ManifestEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerSnapshot {
    pub config: AdamConfig,
    pub step: u64,
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelCheckpoint {
    /// Resolved experiment configuration, as echoed text.
    pub config_text: String,
    pub model: ModelConfig,
    pub manifest: Vec<ManifestEntry>,
    pub params: Vec<f64>,
    pub optimizer: Option<OptimizerSnapshot>,
    pub iteration: usize,
}

#[derive(Serialize, Deserialize)]
struct OptimizerHeader {
    config: AdamConfig,
    step: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config_text: String,
    model: ModelConfig,
    iteration: usize,
    manifest: Vec<ManifestEntry>,
    optimizer: Option<OptimizerHeader>,
}

pub fn manifest_of(store: &ParamStore) -> Vec<ManifestEntry> {
    store
        .iter()
        .map(|(_, name, t)| ManifestEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
        })
        .collect()
}

impl ModelCheckpoint {
    pub fn capture(
        config_text: String,
        model: &ModelConfig,
        store: &ParamStore,
        adam: Option<&AdamState>,
        iteration: usize,
    ) -> Self {
        let optimizer = adam.map(|a| {
            let (m, v) = a.moments();
            let flat = |ts: &[Tensor]| ts.iter().flat_map(|t| t.data().iter().copied()).collect::<Vec<_>>();
            OptimizerSnapshot {
                config: a.config,
                step: a.step_count(),
                first: flat(m),
                second: flat(v),
            }
        });
        Self {
            config_text,
            model: model.clone(),
            manifest: manifest_of(store),
            params: store.flatten(),
            optimizer,
            iteration,
        }
    }

    /// Loads the parameters into `store`, which must have the same manifest.
    pub fn restore(&self, store: &mut ParamStore) -> Result<()> {
        let have = manifest_of(store);
        for (i, want) in self.manifest.iter().enumerate() {
            let Some(got) = have.get(i) else {
                return Err(Error::ManifestMismatch {
                    name: want.name.clone(),
                    msg: "missing from the model".into(),
                });
            };
            if got != want {
                return Err(Error::ManifestMismatch {
                    name: want.name.clone(),
                    msg: format!("checkpoint has `{}` {:?}, model has `{}` {:?}", want.name, want.shape, got.name, got.shape),
                });
            }
        }
        if let Some(extra) = have.get(self.manifest.len()) {
            return Err(Error::ManifestMismatch {
                name: extra.name.clone(),
                msg: "not present in the checkpoint".into(),
            });
        }
        store.load_flat(&self.params)
    }

    /// Optimizer state shaped like the manifest.
    pub fn adam_state(&self) -> Option<AdamState> {
        let opt = self.optimizer.as_ref()?;
        let split = |flat: &[f64]| {
            let mut off = 0;
            self.manifest
                .iter()
                .map(|e| {
                    let t = Tensor::new(e.shape.clone(), flat[off..off + e.len()].to_vec()).expect("manifest shape");
                    off += e.len();
                    t
                })
                .collect::<Vec<_>>()
        };
        Some(AdamState::from_parts(opt.config, split(&opt.first), split(&opt.second), opt.step))
    }
}

pub fn checkpoint_to_bytes(ckpt: &ModelCheckpoint) -> Vec<u8> {
    let header = Header {
        config_text: ckpt.config_text.clone(),
        model: ckpt.model.clone(),
        iteration: ckpt.iteration,
        manifest: ckpt.manifest.clone(),
        optimizer: ckpt.optimizer.as_ref().map(|o| OptimizerHeader {
            config: o.config,
            step: o.step,
        }),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut values = ckpt.params.clone();
    if let Some(o) = &ckpt.optimizer {
        values.extend_from_slice(&o.first);
        values.extend_from_slice(&o.second);
    }
    let mut buf = Vec::with_capacity(12 + json.len() + 8 * values.len());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn checkpoint_from_bytes(bytes: &[u8], path: &Path) -> Result<ModelCheckpoint> {
    let (json, payload) = split_container(bytes, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, path)?;
    let header: Header = serde_json::from_slice(json).map_err(|e| Error::MalformedHeader(e.to_string()))?;
    let n: usize = header.manifest.iter().map(ManifestEntry::len).sum();
    let expected = if header.optimizer.is_some() { 3 * n } else { n };
    if payload.len() % 8 != 0 || payload.len() / 8 != expected {
        return Err(Error::LengthMismatch {
            expected,
            found: payload.len() / 8,
        });
    }
    let values = read_f64s(payload);
    let optimizer = header.optimizer.map(|o| OptimizerSnapshot {
        config: o.config,
        step: o.step,
        first: values[n..2 * n].to_vec(),
        second: values[2 * n..].to_vec(),
    });
    Ok(ModelCheckpoint {
        config_text: header.config_text,
        model: header.model,
        manifest: header.manifest,
        params: values[..n].to_vec(),
        optimizer,
        iteration: header.iteration,
    })
}

pub fn checkpoint_write(ckpt: &ModelCheckpoint, path: &Path) -> Result<()> {
    let bytes = checkpoint_to_bytes(ckpt);
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn checkpoint_read(path: &Path) -> Result<ModelCheckpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cvae::UqSonet;
    use crate::rng::Rng;
    use crate::set_embed::EmbedConfig;

    fn tiny(d_emb: usize) -> (ModelConfig, ParamStore) {
        let cfg = ModelConfig {
            embed: EmbedConfig {
                dim: 1,
                heads: 2,
                d_emb,
                q: 3,
                lambda_hidden: vec![5],
                head_hidden: vec![4],
            },
            p: 4,
            d_z: 2,
            out_dim: 1,
            m_out: 6,
            branch_hidden: vec![5],
            trunk_hidden: vec![5],
            encoder_hidden: vec![5],
            sigma_u2: 1e-3,
            beta: 1.0,
            output_scale: 1.0,
        };
        let mut store = ParamStore::new();
        UqSonet::new(&mut store, cfg.clone(), &mut Rng::seeded(0)).unwrap();
        (cfg, store)
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let (cfg, store) = tiny(6);
        let adam = AdamState::new(&store, AdamConfig::default());
        let ckpt = ModelCheckpoint::capture("problem = diffusion1d\n".into(), &cfg, &store, Some(&adam), 7);
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.uqso"), dir.path().join("b.uqso"));
        checkpoint_write(&ckpt, &a).unwrap();
        let back = checkpoint_read(&a).unwrap();
        assert_eq!(back, ckpt);
        checkpoint_write(&back, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        assert_eq!(back.adam_state().unwrap(), adam);
        let mut fresh = tiny(6).1;
        fresh.values_mut()[0].data_mut()[0] = 42.0;
        back.restore(&mut fresh).unwrap();
        assert_eq!(fresh.flatten(), store.flatten());
    }

    #[test]
    fn short_blob_is_length_mismatch() {
        let (cfg, store) = tiny(6);
        let ckpt = ModelCheckpoint::capture(String::new(), &cfg, &store, None, 0);
        let bytes = checkpoint_to_bytes(&ckpt);
        let err = checkpoint_from_bytes(&bytes[..bytes.len() - 8], Path::new("x")).unwrap_err();
        assert!(matches!(err, Error::LengthMismatch { expected, found } if found + 1 == expected));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(checkpoint_from_bytes(&bad, Path::new("x")), Err(Error::BadMagic { .. })));
        let mut bad = bytes;
        bad[4] = 9;
        assert!(matches!(
            checkpoint_from_bytes(&bad, Path::new("x")),
            Err(Error::VersionMismatch { found: 9, .. })
        ));
    }

    #[test]
    fn shape_mismatch_names_first_entry() {
        let (cfg, store) = tiny(6);
        let ckpt = ModelCheckpoint::capture(String::new(), &cfg, &store, None, 0);
        let mut other = tiny(7).1;
        let err = ckpt.restore(&mut other).unwrap_err();
        let first_diff = manifest_of(&store)
            .into_iter()
            .zip(manifest_of(&other))
            .find(|(a, b)| a != b)
            .unwrap()
            .0
            .name;
        assert!(matches!(err, Error::ManifestMismatch { ref name, .. } if *name == first_diff));
    }
}
