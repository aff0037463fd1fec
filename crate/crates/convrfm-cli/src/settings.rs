//! Flag/config resolution and the run manifest.
//!
//! Every value a command uses is resolved through [`Settings`] with the
//! precedence: explicit flag, then config-file entry, then built-in default.
//! The config file is flat `key=value` text (`#` starts a comment). A run
//! manifest written by [`write_manifest`] uses the same syntax, so a previous
//! run's manifest can be passed back via `--config` to reproduce it.
//!
//! Resolution is strict: after a command has resolved everything it
//! understands, leftover config keys are reported as usage errors, so typos
//! do not silently fall back to defaults. The `command` line and `artifact.*`
//! hash lines of a manifest are ignored on load.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{io_error, CliError, CliResult};

pub struct Settings {
    file: BTreeMap<String, String>,
    consumed: BTreeSet<String>,
    resolved: BTreeMap<String, String>,
}

impl Settings {
    /// Loads the optional config file; `None` resolves everything from flags
    /// and defaults.
    pub fn load(config: Option<&str>) -> CliResult<Self> {
        let mut file = BTreeMap::new();
        if let Some(path) = config {
            let path = Path::new(path);
            let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
            for (lineno, raw) in text.lines().enumerate() {
                let line = raw.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let Some((key, value)) = line.split_once('=') else {
                    return Err(CliError::usage(format!(
                        "{}:{}: expected key=value, got '{line}'",
                        path.display(),
                        lineno + 1
                    )));
                };
                let key = key.trim().to_string();
                if key == "command" || key.starts_with("artifact.") {
                    continue;
                }
                file.insert(key, value.trim().to_string());
            }
        }
        Ok(Self {
            file,
            consumed: BTreeSet::new(),
            resolved: BTreeMap::new(),
        })
    }

    fn parse<T: FromStr>(key: &str, raw: &str) -> CliResult<T> {
        raw.parse().map_err(|_| {
            CliError::usage(format!(
                "key '{key}': cannot parse '{raw}' as {}",
                std::any::type_name::<T>()
            ))
        })
    }

    fn record(&mut self, key: &str, value: impl Display) {
        self.consumed.insert(key.to_string());
        self.resolved.insert(key.to_string(), value.to_string());
    }

    /// Resolves a value with a default.
    pub fn value<T>(&mut self, key: &str, flag: Option<T>, default: T) -> CliResult<T>
    where
        T: FromStr + Display,
    {
        let got = match flag {
            Some(v) => v,
            None => match self.file.get(key) {
                Some(raw) => Self::parse(key, raw)?,
                None => default,
            },
        };
        self.record(key, &got);
        Ok(got)
    }

    /// Resolves a value that has no default; missing means a usage error.
    pub fn require<T>(&mut self, key: &str, flag: Option<T>) -> CliResult<T>
    where
        T: FromStr + Display,
    {
        match self.optional(key, flag)? {
            Some(v) => Ok(v),
            None => Err(CliError::usage(format!(
                "missing required value for '{key}' (pass --{key} or set it in the config file)"
            ))),
        }
    }

    /// Resolves a value that may legitimately be absent.
    pub fn optional<T>(&mut self, key: &str, flag: Option<T>) -> CliResult<Option<T>>
    where
        T: FromStr + Display,
    {
        self.consumed.insert(key.to_string());
        let got = match flag {
            Some(v) => Some(v),
            None => match self.file.get(key) {
                Some(raw) => Some(Self::parse::<T>(key, raw)?),
                None => None,
            },
        };
        if let Some(v) = &got {
            self.resolved.insert(key.to_string(), v.to_string());
        }
        Ok(got)
    }

    /// Resolves a comma-separated list of parseable values.
    pub fn list<T>(&mut self, key: &str, flag: Option<String>, default: &[T]) -> CliResult<Vec<T>>
    where
        T: FromStr + Display + Clone,
    {
        let raw = match flag {
            Some(v) => Some(v),
            None => self.file.get(key).cloned(),
        };
        let values = match raw {
            Some(raw) => raw
                .split(',')
                .map(|part| Self::parse(key, part.trim()))
                .collect::<CliResult<Vec<T>>>()?,
            None => default.to_vec(),
        };
        if values.is_empty() {
            return Err(CliError::usage(format!("key '{key}': empty list")));
        }
        let rendered = values
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",");
        self.record(key, rendered);
        Ok(values)
    }

    /// Overrides a recorded value after the fact (e.g. a path filled in by
    /// the run itself), so the manifest reflects what was actually used.
    pub fn force(&mut self, key: &str, value: impl Display) {
        self.record(key, value);
    }

    /// Rejects config keys nothing consumed.
    pub fn finish(&self) -> CliResult<()> {
        let unknown: Vec<&String> = self
            .file
            .keys()
            .filter(|k| !self.consumed.contains(*k))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(CliError::usage(format!(
                "unknown configuration key(s): {}",
                unknown
                    .iter()
                    .map(|s| s.as_str())
                    .collect::<Vec<_>>()
                    .join(", ")
            )))
        }
    }

    fn resolved_pairs(&self) -> impl Iterator<Item = (&String, &String)> {
        self.resolved.iter()
    }
}

/// Caps the global worker pool; 0 keeps the library default. Safe to call
/// once per process.
pub fn apply_threads(threads: usize) {
    if threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
}

fn sha256_hex(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Writes `manifest.txt` into the output directory: the command name, every
/// resolved setting, and a SHA-256 line per artifact (paths relative to the
/// output directory, `/`-separated).
pub fn write_manifest(
    out: &Path,
    command: &str,
    settings: &Settings,
    artifacts: &[PathBuf],
) -> CliResult<PathBuf> {
    let mut text = format!("command={command}\n");
    for (key, value) in settings.resolved_pairs() {
        text.push_str(&format!("{key}={value}\n"));
    }
    let mut hashed = Vec::with_capacity(artifacts.len());
    for path in artifacts {
        let rel = path
            .strip_prefix(out)
            .unwrap_or(path)
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        hashed.push((rel, sha256_hex(path)?));
    }
    hashed.sort();
    for (rel, hash) in hashed {
        text.push_str(&format!("artifact.{rel}={hash}\n"));
    }
    let path = out.join("manifest.txt");
    fs::write(&path, text).map_err(|e| io_error(&path, e))?;
    Ok(path)
}

/// Creates the output directory and returns it as a path.
pub fn ensure_out_dir(out: &str) -> CliResult<PathBuf> {
    let path = PathBuf::from(out);
    fs::create_dir_all(&path).map_err(|e| io_error(&path, e))?;
    Ok(path)
}

/// Writes a text artifact.
pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| io_error(path, e))
}
