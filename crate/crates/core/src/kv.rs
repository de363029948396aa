//! Flat, sectioned `key = value` text format used for every config file.
//!
//! ```text
//! # comment
//! [sim]
//! dt = 0.01
//! substeps = 4
//! ```
//!
//! Section and key order is preserved so that writing a parsed document
//! reproduces it (minus comments and blank lines).

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("[{section}] {key}: cannot parse {value:?}")]
    BadValue {
        section: String,
        key: String,
        value: String,
    },
    #[error("[{section}] unknown key {key:?}")]
    UnknownKey { section: String, key: String },
    #[error("unknown section [{0}]")]
    UnknownSection(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvSection {
    pub name: String,
    entries: Vec<(String, String)>,
}

impl KvSection {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            entries: Vec::new(),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl fmt::Display) {
        let key = key.into();
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key, value)),
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn parse_value<T: FromStr>(&self, key: &str, value: &str) -> Result<T, ConfigError> {
        value.parse().map_err(|_| ConfigError::BadValue {
            section: self.name.clone(),
            key: key.to_string(),
            value: value.to_string(),
        })
    }

    pub fn unknown(&self, key: &str) -> ConfigError {
        ConfigError::UnknownKey {
            section: self.name.clone(),
            key: key.to_string(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvDoc {
    sections: Vec<KvSection>,
}

impl KvDoc {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut doc = KvDoc::default();
        let mut current: Option<usize> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                    line: i + 1,
                    msg: "unterminated section header".into(),
                })?;
                let name = name.trim();
                if name.is_empty() {
                    return Err(ConfigError::Syntax {
                        line: i + 1,
                        msg: "empty section name".into(),
                    });
                }
                current = Some(doc.section_index(name));
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                msg: "expected `key = value`".into(),
            })?;
            let idx = current.ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                msg: "key outside of any section".into(),
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    msg: "empty key".into(),
                });
            }
            doc.sections[idx].set(key, value.trim());
        }
        Ok(doc)
    }

    fn section_index(&mut self, name: &str) -> usize {
        match self.sections.iter().position(|s| s.name == name) {
            Some(i) => i,
            None => {
                self.sections.push(KvSection::new(name));
                self.sections.len() - 1
            }
        }
    }

    pub fn section(&self, name: &str) -> Option<&KvSection> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn section_mut(&mut self, name: &str) -> &mut KvSection {
        let idx = self.section_index(name);
        &mut self.sections[idx]
    }

    pub fn push_section(&mut self, section: KvSection) {
        let idx = self.section_index(&section.name.clone());
        self.sections[idx] = section;
    }

    pub fn sections(&self) -> impl Iterator<Item = &KvSection> {
        self.sections.iter()
    }

    /// Rejects any section not in `known`.
    pub fn check_sections(&self, known: &[&str]) -> Result<(), ConfigError> {
        match self.sections.iter().find(|s| !known.contains(&s.name.as_str())) {
            Some(s) => Err(ConfigError::UnknownSection(s.name.clone())),
            None => Ok(()),
        }
    }
}

impl fmt::Display for KvDoc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, section) in self.sections.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            writeln!(f, "[{}]", section.name)?;
            for (k, v) in section.entries() {
                writeln!(f, "{k} = {v}")?;
            }
        }
        Ok(())
    }
}
