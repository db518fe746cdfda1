//! Optional JSON config file, overridden by command-line flags.
//!
//! The file is one object. Scalar top-level keys are defaults for every
//! command; a nested object under a command name (`"train"`, `"dict-train"`,
//! `"mos-serve"`, ...) applies to that command only. Keys use the argument
//! struct's field names, e.g. `hr_dir`, `epochs`.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::{read_json, HarnessError, Result};

/// Parsed config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    root: Map<String, Value>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        match read_json::<Value>(path)? {
            Value::Object(root) => Ok(ConfigFile { root }),
            _ => Err(HarnessError::Invalid(format!("{}: config must be a JSON object", path.display()))),
        }
    }

    pub fn from_value(v: Value) -> Result<Self> {
        match v {
            Value::Object(root) => Ok(ConfigFile { root }),
            _ => Err(HarnessError::Invalid("config must be a JSON object".into())),
        }
    }

    /// Shared defaults overlaid with the `command` section.
    pub fn section(&self, command: &str) -> Map<String, Value> {
        let mut out: Map<String, Value> = self.root.iter().filter(|(_, v)| !v.is_object()).map(|(k, v)| (k.clone(), v.clone())).collect();
        if let Some(Value::Object(sec)) = self.root.get(command) {
            out.extend(sec.clone());
        }
        out
    }

    /// `flags` with every unset field filled from the file. `T` must skip
    /// serializing `None` fields and ignore keys it does not know.
    pub fn merge<T: Serialize + DeserializeOwned>(&self, command: &str, flags: &T) -> Result<T> {
        let mut merged = self.section(command);
        let Value::Object(set) = serde_json::to_value(flags).expect("serializable") else {
            unreachable!("argument structs serialize to objects")
        };
        merged.extend(set);
        serde_json::from_value(Value::Object(merged)).map_err(|e| HarnessError::Invalid(format!("config section {command:?}: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Default, PartialEq, Serialize, Deserialize)]
    struct Args {
        #[serde(skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        epochs: Option<usize>,
        #[serde(skip_serializing_if = "Option::is_none")]
        out: Option<String>,
    }

    #[test]
    fn flags_override_section_overrides_shared() {
        let cfg = ConfigFile::from_value(serde_json::json!({
            "seed": 1, "epochs": 2, "out": "shared",
            "train": { "epochs": 30, "out": "t.ckpt" },
            "run": { "out": "sr" }
        }))
        .unwrap();
        let flags = Args { out: Some("flag.ckpt".into()), ..Default::default() };
        assert_eq!(cfg.merge("train", &flags).unwrap(), Args { seed: Some(1), epochs: Some(30), out: Some("flag.ckpt".into()) });
        assert_eq!(cfg.merge("run", &Args::default()).unwrap(), Args { seed: Some(1), epochs: Some(2), out: Some("sr".into()) });
        assert_eq!(ConfigFile::default().merge("x", &flags).unwrap(), flags);
    }

    #[test]
    fn bad_types_and_files() {
        let cfg = ConfigFile::from_value(serde_json::json!({ "train": { "epochs": "many" } })).unwrap();
        assert!(cfg.merge("train", &Args::default()).is_err());
        assert!(ConfigFile::from_value(serde_json::json!([1])).is_err());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, "{\"seed\": 4}").unwrap();
        assert_eq!(ConfigFile::load(&p).unwrap().merge("run", &Args::default()).unwrap().seed, Some(4));
        assert!(ConfigFile::load(&dir.path().join("missing.json")).is_err());
    }
}
