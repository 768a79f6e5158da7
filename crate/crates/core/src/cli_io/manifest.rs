use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use super::formats::write_atomic;
use crate::error::{Error, Result};

/// Flat `key=value` record of one command invocation.
///
/// Arguments are stored as `arg.<flag>` entries in canonical form (defaults
/// included), inputs as `input.<name>.path` / `input.<name>.sha256`, so the
/// run can be repeated with `rerun`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunManifest {
    entries: Vec<(String, String)>,
}

pub const MANIFEST_FILE: &str = "manifest.txt";

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        let mut m = Self::default();
        m.set("tool", env!("CARGO_PKG_NAME"));
        m.set("version", env!("CARGO_PKG_VERSION"));
        m.set("command", command);
        m.set("threads", rayon::current_num_threads());
        m.set("started_unix", unix_now());
        m
    }

    /// Sets `key`, replacing an earlier value.
    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string().replace('\n', " ");
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    /// `(flag, value)` pairs recorded with [`RunManifest::record_args`].
    pub fn args(&self) -> Vec<(&str, &str)> {
        self.entries
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("arg.").map(|f| (f, v.as_str())))
            .collect()
    }

    pub fn record_args(&mut self, args: &[(&str, String)]) {
        for (flag, value) in args {
            self.set(&format!("arg.{flag}"), value);
        }
    }

    /// Records an input file with its content hash.
    pub fn record_input(&mut self, name: &str, path: &Path) -> Result<()> {
        let hash = super::formats::sha256_file(path)?;
        let abs = fs::canonicalize(path)?;
        self.set(&format!("input.{name}.path"), abs.display());
        self.set(&format!("input.{name}.sha256"), hash);
        Ok(())
    }

    /// `(name, path, sha256)` of every recorded input.
    pub fn inputs(&self) -> Vec<(String, String, String)> {
        self.entries
            .iter()
            .filter_map(|(k, v)| {
                let name = k.strip_prefix("input.")?.strip_suffix(".path")?;
                let hash = self.get(&format!("input.{name}.sha256"))?;
                Some((name.to_string(), v.clone(), hash.to_string()))
            })
            .collect()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut m = Self::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format("manifest", format!("line {}: expected key=value", i + 1)))?;
            m.set(k, v);
        }
        if m.get("command").is_none() {
            return Err(Error::format("manifest", "missing `command`"));
        }
        Ok(m)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Stamps the finish time and writes the manifest atomically.
    pub fn write(&mut self, dir: &Path) -> Result<()> {
        self.set("finished_unix", unix_now());
        write_atomic(&dir.join(MANIFEST_FILE), self.render().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_parse_round_trip() {
        let mut m = RunManifest::new("generate");
        m.record_args(&[("seed", "3".into()), ("snr", "20".into())]);
        m.set("seed", 3);
        let back = RunManifest::parse(&m.render()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.args(), vec![("seed", "3"), ("snr", "20")]);
        assert_eq!(back.get("command"), Some("generate"));
    }

    #[test]
    fn values_may_contain_equals() {
        let m = RunManifest::parse("command=x\narg.note=a=b\n").unwrap();
        assert_eq!(m.get("arg.note"), Some("a=b"));
        assert!(RunManifest::parse("arg.x=1\n").is_err());
    }
}
