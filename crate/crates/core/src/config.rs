//! Run configuration: every module default in one document, layered as
//! TOML file, then `SEGALIGN_*` environment variables, then command-line
//! overrides.
//!
//! Environment variables address nested keys with double underscores
//! (`SEGALIGN_INDEX__TOP_N=30`); overrides use dotted paths
//! (`index.top_n=30`). Values are parsed as TOML literals and fall back to
//! plain strings.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::align::{BaselineParams, DpParams, Method};
use crate::error::{Error, Result};
use crate::eval::Protocol;
use crate::hashing::config_hash;
use crate::index::GroupOptions;
use crate::keyframe::{ScorerParams, TeacherParams};
use crate::optim::SgdConfig;
use crate::spd::DetectorConfig;
use crate::ssan::SsanConfig;
use crate::synth::{EditMix, SynthConfig};

pub const ENV_PREFIX: &str = "SEGALIGN_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Query videos, each with one copied counterpart in the gallery.
    pub queries: usize,
    /// Unrelated gallery videos.
    pub distractors: usize,
    pub synth: SynthConfig,
    pub mix: EditMix,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            queries: 5,
            distractors: 15,
            synth: SynthConfig::default(),
            mix: EditMix::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeyframeSource {
    /// Teacher labels of the similarity-threshold rule.
    Teacher,
    /// Scores of the learned scorer.
    Scorer,
    /// Every basis frame.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KeyframeConfig {
    pub source: KeyframeSource,
    /// Quantization threshold on keyframe scores.
    pub threshold: f64,
    pub interval: Option<usize>,
    pub teacher: TeacherParams,
    pub scorer: ScorerParams,
}

impl Default for KeyframeConfig {
    fn default() -> Self {
        Self {
            source: KeyframeSource::Teacher,
            threshold: 0.5,
            interval: Some(8),
            teacher: TeacherParams::default(),
            scorer: ScorerParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexKind {
    Flat,
    Ivf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexConfig {
    pub kind: IndexKind,
    pub top_n: usize,
    pub k_c: usize,
    pub nprobe: usize,
    pub kmeans_iters: usize,
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self {
            kind: IndexKind::Flat,
            top_n: 20,
            k_c: 16,
            nprobe: 4,
            kmeans_iters: 20,
        }
    }
}

/// Detector training used when no model file is supplied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub pairs: usize,
    /// First synthetic pair index, kept away from the evaluation pairs.
    pub first_pair: usize,
    /// Held-out pairs that set the detector's operating threshold.
    pub calibration_pairs: usize,
    pub sgd: SgdConfig,
    /// Scorer fit to teacher labels before joint training.
    pub scorer_sgd: SgdConfig,
    pub ssan_sgd: SgdConfig,
    pub ssan: SsanConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            pairs: 100,
            first_pair: 1_000_000,
            calibration_pairs: 25,
            sgd: SgdConfig { epochs: 10, ..SgdConfig::default() },
            scorer_sgd: SgdConfig { lr: 0.5, epochs: 400, weight_decay: 0.0, ..SgdConfig::default() },
            ssan_sgd: SgdConfig { lr: 0.005, epochs: 6, ..SgdConfig::default() },
            ssan: SsanConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; overrides the seeds of data, index and training.
    pub seed: u64,
    /// Worker cap; `0` uses all cores.
    pub threads: usize,
    pub method: Method,
    pub data: DataConfig,
    pub keyframes: KeyframeConfig,
    pub index: IndexConfig,
    pub group: GroupOptions,
    pub baseline: BaselineParams,
    pub detector: DetectorConfig,
    pub training: TrainingConfig,
    pub protocol: Protocol,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: 1,
            method: Method::Spd,
            data: DataConfig::default(),
            keyframes: KeyframeConfig::default(),
            index: IndexConfig::default(),
            group: GroupOptions::default(),
            // keyframe-compacted hit maps peak lower than dense maps
            baseline: BaselineParams {
                dp: DpParams { min_sim: 0.6, ..DpParams::default() },
                ..BaselineParams::default()
            },
            detector: DetectorConfig::default(),
            training: TrainingConfig::default(),
            protocol: Protocol::default(),
        }
    }
}

impl RunConfig {
    /// Copy with the master seed pushed into every seeded component.
    pub fn seeded(&self) -> Self {
        let mut c = self.clone();
        c.data.synth.seed = c.seed;
        c.training.sgd.seed = c.seed;
        c.training.scorer_sgd.seed = c.seed;
        c.training.ssan_sgd.seed = c.seed;
        c.detector.seed = c.seed;
        c
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| Error::Config(e.to_string());
        self.data.synth.validate().map_err(cfg)?;
        self.keyframes.teacher.validate().map_err(cfg)?;
        self.detector.validate().map_err(cfg)?;
        if self.data.queries == 0 {
            return Err(Error::Config("data.queries must be positive".into()));
        }
        if self.index.top_n == 0 {
            return Err(Error::Config("index.top_n must be positive".into()));
        }
        if self.keyframes.interval == Some(0) {
            return Err(Error::Config("keyframes.interval must be positive".into()));
        }
        if self.index.kind == IndexKind::Ivf && (self.index.k_c == 0 || self.index.nprobe == 0) {
            return Err(Error::Config("ivf needs k_c and nprobe >= 1".into()));
        }
        Ok(())
    }

    pub fn hash(&self) -> Result<String> {
        config_hash(self)
    }
}

/// Parses a TOML literal, or keeps the raw text as a string. `none`
/// clears an optional value.
fn parse_value(raw: &str) -> Value {
    if raw == "none" {
        return Value::Null;
    }
    #[derive(Deserialize)]
    struct Wrap {
        v: toml::Value,
    }
    match toml::from_str::<Wrap>(&format!("v = {raw}")) {
        Ok(w) => serde_json::to_value(w.v).unwrap_or_else(|_| Value::String(raw.to_string())),
        Err(_) => Value::String(raw.to_string()),
    }
}

/// Sets `path` inside `doc`, refusing keys the document does not have.
fn set_path(doc: &mut Value, path: &[&str], value: Value, origin: &str) -> Result<()> {
    let unknown = || Error::Config(format!("unknown config key `{}` ({origin})", path.join(".")));
    let (last, parents) = path.split_last().ok_or_else(unknown)?;
    let mut node = doc;
    for p in parents {
        node = node.as_object_mut().and_then(|o| o.get_mut(*p)).ok_or_else(unknown)?;
    }
    let obj = node.as_object_mut().ok_or_else(unknown)?;
    if !obj.contains_key(*last) {
        return Err(unknown());
    }
    obj.insert(last.to_string(), value);
    Ok(())
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Builds a config from defaults, an optional TOML file, environment
/// pairs and `key.path=value` overrides, in that order of precedence.
pub fn load_layered<I>(file: Option<&Path>, env: I, overrides: &[String]) -> Result<RunConfig>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut doc = serde_json::to_value(RunConfig::default())?;
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let t: toml::Value = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        merge(&mut doc, serde_json::to_value(t)?);
    }
    let mut env: Vec<(String, String)> = env
        .into_iter()
        .filter(|(k, _)| k.starts_with(ENV_PREFIX))
        .collect();
    env.sort();
    for (k, v) in env {
        let key = k[ENV_PREFIX.len()..].to_ascii_lowercase();
        let path: Vec<&str> = key.split("__").collect();
        set_path(&mut doc, &path, parse_value(&v), &k)?;
    }
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
        let path: Vec<&str> = k.trim().split('.').collect();
        set_path(&mut doc, &path, parse_value(v.trim()), "flag")?;
    }
    let cfg: RunConfig = serde_json::from_value(doc).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Layered config using the process environment.
pub fn load_from_env(file: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    load_layered(file, std::env::vars(), overrides)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn layers_apply_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.toml");
        std::fs::write(&file, "seed = 3\nmethod = \"dp\"\n[index]\ntop_n = 7\nk_c = 9\n").unwrap();
        let c = load_layered(
            Some(&file),
            env(&[("SEGALIGN_INDEX__TOP_N", "11"), ("SEGALIGN_SEED", "5"), ("OTHER", "x")]),
            &["seed=8".into()],
        )
        .unwrap();
        assert_eq!(c.seed, 8);
        assert_eq!(c.index.top_n, 11);
        assert_eq!(c.index.k_c, 9);
        assert_eq!(c.method, Method::Dp);
        assert_eq!(c.index.nprobe, IndexConfig::default().nprobe);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let e = load_layered(None, env(&[]), &["index.topn=3".into()]).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let e = load_layered(None, env(&[("SEGALIGN_NOPE", "1")]), &[]).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let e = load_layered(None, env(&[]), &["method=fast".into()]).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn option_and_string_values() {
        let c = load_layered(None, env(&[]), &["keyframes.interval=4".into(), "keyframes.source=scorer".into()]).unwrap();
        assert_eq!(c.keyframes.interval, Some(4));
        assert_eq!(c.keyframes.source, KeyframeSource::Scorer);
        let c = load_layered(None, env(&[("SEGALIGN_KEYFRAMES__INTERVAL", "none")]), &[]).unwrap();
        assert_eq!(c.keyframes.interval, None);
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        b.index.top_n += 1;
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
    }
}
