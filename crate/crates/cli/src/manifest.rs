//! Run manifests: the seed, config hash and version that pin a run, written
//! as sorted `key = value` lines. No timestamps — a manifest plus the same
//! binary must reproduce the outputs bit for bit (trace timing defaults to
//! the zero clock for the same reason).

use crate::config::fnv1a;
use crate::CliResult;
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Default, Clone)]
pub struct Manifest {
    entries: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, config_hash: &str) -> Self {
        let mut m = Manifest::default();
        m.set("command", command);
        m.set("config_hash", config_hash);
        m.set("version", env!("CARGO_PKG_VERSION"));
        m
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }
}

/// Hash of a produced artifact, recorded in manifests.
pub fn file_hash(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path)?;
    Ok(format!("{:016x}", fnv1a(&bytes)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_lines_are_sorted_and_stable() {
        let mut m = Manifest::new("train", "abc");
        m.set("seed", 7u64);
        m.set("checkpoint_hash", "ff00");
        let r1 = m.render();
        let r2 = m.render();
        assert_eq!(r1, r2);
        let lines: Vec<&str> = r1.lines().collect();
        let mut sorted = lines.clone();
        sorted.sort();
        assert_eq!(lines, sorted);
    }
}
