//! `key = value` files. `#` starts a comment; blank lines are ignored.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::ScenarioError;

#[derive(Debug, Clone)]
pub(crate) struct Conf {
    file: PathBuf,
    /// key -> (value, line)
    entries: BTreeMap<String, (String, usize)>,
}

impl Conf {
    pub fn parse(file: &Path, text: &str) -> Result<Self, ScenarioError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ScenarioError::Syntax {
                    file: file.to_path_buf(),
                    line: i + 1,
                    msg: format!("expected `key = value`, got `{line}`"),
                });
            };
            let k = k.trim().to_string();
            if entries.insert(k.clone(), (v.trim().to_string(), i + 1)).is_some() {
                return Err(ScenarioError::Syntax {
                    file: file.to_path_buf(),
                    line: i + 1,
                    msg: format!("duplicate key `{k}`"),
                });
            }
        }
        Ok(Self {
            file: file.to_path_buf(),
            entries,
        })
    }

    pub fn read(file: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(file).map_err(|e| ScenarioError::io(file, e))?;
        Self::parse(file, &text)
    }

    pub fn file(&self) -> &Path {
        &self.file
    }

    pub fn opt<T: FromStr>(&self, key: &str) -> Result<Option<T>, ScenarioError>
    where
        T::Err: Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, line)) => v.parse().map(Some).map_err(|e: T::Err| ScenarioError::Syntax {
                file: self.file.clone(),
                line: *line,
                msg: format!("`{key}`: cannot parse `{v}`: {e}"),
            }),
        }
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, ScenarioError>
    where
        T::Err: Display,
    {
        self.opt(key)?.ok_or_else(|| ScenarioError::Missing {
            file: self.file.clone(),
            field: key.to_string(),
        })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    /// Rejects keys outside `known`, which catches typos.
    pub fn check_keys(&self, known: &[&str]) -> Result<(), ScenarioError> {
        match self.entries.iter().find(|(k, _)| !known.contains(&k.as_str())) {
            Some((k, (_, line))) => Err(ScenarioError::Syntax {
                file: self.file.clone(),
                line: *line,
                msg: format!("unknown key `{k}`"),
            }),
            None => Ok(()),
        }
    }
}

/// Renders `key = value` lines in the given order.
pub(crate) fn render(pairs: &[(&str, String)]) -> String {
    let mut out = String::new();
    for (k, v) in pairs {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(v);
        out.push('\n');
    }
    out
}
