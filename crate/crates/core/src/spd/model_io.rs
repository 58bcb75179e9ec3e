use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::binio::{BinReader, BinWriter};
use crate::error::Result;
use crate::hashing::{config_hash, sha256_bytes};

use super::net::{DetectorConfig, DetectorParams};

pub const SGDM_MAGIC: &[u8; 4] = b"SGDM";
pub const SGDM_VERSION: u32 = 1;

/// Writes magic, version, the config as canonical JSON with its SHA-256, and
/// the parameters as `f32`.
pub fn write_detector<W: Write>(w: W, params: &DetectorParams) -> Result<W> {
    let mut w = BinWriter::new(w);
    w.bytes(SGDM_MAGIC)?;
    w.u32(SGDM_VERSION)?;
    write_block(&mut w, params)?;
    w.finish()
}

pub(crate) fn write_block<W: Write>(w: &mut BinWriter<W>, params: &DetectorParams) -> Result<()> {
    let json = crate::hashing::canonical_json(&params.config)?;
    w.len(json.len(), "config block")?;
    w.bytes(json.as_bytes())?;
    w.bytes(&sha256_bytes(json.as_bytes()))?;
    w.len(params.len(), "parameter count")?;
    let v: Vec<f32> = params.values.iter().map(|&x| x as f32).collect();
    w.f32s(&v)
}

pub fn read_detector<R: Read>(r: R) -> Result<DetectorParams> {
    let mut r = BinReader::new(r, "SGDM");
    r.magic(SGDM_MAGIC)?;
    r.version(SGDM_VERSION)?;
    let p = read_block(&mut r)?;
    r.end()?;
    Ok(p)
}

pub(crate) fn read_block<R: Read>(r: &mut BinReader<R>) -> Result<DetectorParams> {
    let n = r.u32("config length")? as usize;
    let mut json = vec![0u8; n];
    r.bytes(&mut json, "config")?;
    let mut hash = [0u8; 32];
    r.bytes(&mut hash, "config hash")?;
    if sha256_bytes(&json) != hash {
        return Err(r.err("config hash mismatch"));
    }
    let config: DetectorConfig =
        serde_json::from_slice(&json).map_err(|e| r.err(format!("config: {e}")))?;
    let count = r.u32("parameter count")? as usize;
    let values = r.f32s(count, "parameters")?;
    DetectorParams::from_values(&config, values.into_iter().map(f64::from).collect())
        .map_err(|e| r.err(e.to_string()))
}

pub fn save_detector(params: &DetectorParams, path: impl AsRef<Path>) -> Result<String> {
    write_detector(BufWriter::new(File::create(path)?), params)?;
    config_hash(&params.config)
}

pub fn load_detector(path: impl AsRef<Path>) -> Result<DetectorParams> {
    read_detector(BufReader::new(File::open(path)?))
}
