//! Parameter checkpoints: `<stem>.bin` holds every tensor as little-endian
//! f64 in visiting order, `<stem>.json` lists `{name, shape, offset}` per
//! tensor (offsets counted in scalars).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::Parameters;

pub const FORMAT: &str = "f64-le";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub scalars: usize,
    pub tensors: Vec<ManifestEntry>,
}

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("bin"), stem.with_extension("json"))
}

pub fn manifest_of<P: Parameters>(params: &P) -> Manifest {
    let mut tensors = Vec::new();
    let mut offset = 0;
    params.visit(&mut |m, t| {
        tensors.push(ManifestEntry {
            name: m.name.clone(),
            shape: m.shape.clone(),
            offset,
        });
        offset += t.len();
    });
    Manifest {
        format: FORMAT.into(),
        scalars: offset,
        tensors,
    }
}

pub fn save<P: Parameters>(params: &P, stem: &Path) -> Result<()> {
    let (bin, json) = paths(stem);
    if let Some(dir) = bin.parent() {
        fs::create_dir_all(dir)?;
    }
    let bytes: Vec<u8> = params.to_flat().iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(bin, bytes)?;
    fs::write(json, serde_json::to_string_pretty(&manifest_of(params))?)?;
    Ok(())
}

/// Loads into `params`, whose tensor names and shapes must match the manifest.
pub fn load<P: Parameters>(params: &mut P, stem: &Path) -> Result<()> {
    let (bin, json) = paths(stem);
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(json)?)?;
    if manifest.format != FORMAT {
        return Err(Error::InvalidInput(format!(
            "unknown checkpoint format {}",
            manifest.format
        )));
    }
    let expected = manifest_of(params);
    if expected.tensors != manifest.tensors {
        return Err(Error::InvalidInput("checkpoint tensors do not match the model".into()));
    }
    let bytes = fs::read(bin)?;
    if bytes.len() != manifest.scalars * 8 {
        return Err(Error::DimensionMismatch {
            what: "checkpoint bytes",
            expected: manifest.scalars * 8,
            got: bytes.len(),
        });
    }
    let flat: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    params.set_flat(&flat);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, ModelParams};
    use crate::rng;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ModelConfig::default();
        let params = ModelParams::init(&cfg, &mut rng::root(1)).unwrap();
        let stem = dir.path().join("ckpt");
        save(&params, &stem).unwrap();
        let mut other = ModelParams::init(&cfg, &mut rng::root(2)).unwrap();
        load(&mut other, &stem).unwrap();
        assert_eq!(params, other);

        let m = manifest_of(&params);
        assert_eq!(m.tensors[0].name, "encoder.w");
        assert!(m.tensors.iter().any(|t| t.name == "blocks.1.lru.nu_log"));
        let len = std::fs::metadata(stem.with_extension("bin")).unwrap().len();
        assert_eq!(len as usize, m.scalars * 8);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("ckpt");
        let small = ModelParams::init(&ModelConfig::default(), &mut rng::root(1)).unwrap();
        save(&small, &stem).unwrap();
        let wide = ModelConfig {
            h: 16,
            ..Default::default()
        };
        let mut big = ModelParams::init(&wide, &mut rng::root(1)).unwrap();
        assert!(load(&mut big, &stem).is_err());
    }
}
