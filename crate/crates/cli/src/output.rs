//! Artifact writing. Every file carries the config hash and seed, and is
//! replaced atomically through a temporary file in the target directory.

use std::fs;
use std::io::Write;
use std::path::Path;

use fosls::Network;
use serde_json::{json, Value};

use crate::error::CliError;

/// Hash and seed stamped into every artifact.
#[derive(Debug, Clone)]
pub struct Stamp {
    pub config_hash: String,
    pub seed: u64,
}

impl Stamp {
    pub fn comments(&self) -> Vec<String> {
        vec![format!("config_hash={}", self.config_hash), format!("seed={}", self.seed)]
    }

    pub fn comment_block(&self) -> String {
        self.comments().iter().map(|c| format!("# {c}\n")).collect()
    }
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    ensure_dir(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

fn stamped(mut doc: Value, stamp: &Stamp) -> Value {
    if let Value::Object(map) = &mut doc {
        map.insert("config_hash".into(), json!(stamp.config_hash));
        map.insert("seed".into(), json!(stamp.seed));
    }
    doc
}

pub fn write_json(path: &Path, doc: Value, stamp: &Stamp) -> Result<(), CliError> {
    let text = serde_json::to_string(&stamped(doc, stamp)).expect("json serializes");
    write_atomic(path, text.as_bytes())
}

/// Network checkpoint with the stamp as extra fields; loaders ignore them.
pub fn write_network(path: &Path, net: &Network, stamp: &Stamp) -> Result<(), CliError> {
    write_json(path, serde_json::to_value(net).expect("network serializes"), stamp)
}

pub fn read_network(path: &Path) -> Result<Network, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::config(format!("cannot read checkpoint {}: {e}", path.display())))?;
    Network::from_json(&text).map_err(|e| CliError::config(format!("checkpoint {}: {e}", path.display())))
}
