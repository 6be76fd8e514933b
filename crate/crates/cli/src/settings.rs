//! Flat `key = value` config files merged under command-line flags.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::{fail, Kind};

/// Values from an optional config file, consumed key by key. Every value
/// that gets resolved is recorded so the full configuration can be echoed.
#[derive(Debug, Default)]
pub struct Settings {
    file: BTreeMap<String, (usize, String)>,
    resolved: Vec<(String, String)>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| fail(Kind::Io, format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let mut file = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(fail(Kind::Config, format!("line {}: expected key = value", i + 1)));
            };
            let key = k.trim().replace('-', "_");
            if file.insert(key.clone(), (i + 1, v.trim().to_owned())).is_some() {
                return Err(fail(Kind::Config, format!("line {}: duplicate key '{key}'", i + 1)));
            }
        }
        Ok(Settings {
            file,
            resolved: Vec::new(),
        })
    }

    /// Flag value if given, else the file value, else `default`.
    pub fn get<T>(&mut self, key: &str, flag: Option<T>, default: T) -> anyhow::Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let from_file = self.file.remove(key);
        let value = match (flag, from_file) {
            (Some(v), _) => v,
            (None, Some((line, text))) => text
                .parse()
                .map_err(|e| fail(Kind::Config, format!("line {line}: {key}: {e}")))?,
            (None, None) => default,
        };
        self.resolved.push((key.to_owned(), value.to_string()));
        Ok(value)
    }

    /// Like [`Self::get`] for a value with no default.
    pub fn require<T>(&mut self, key: &str, flag: Option<T>) -> anyhow::Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let from_file = self.file.remove(key);
        let value = match (flag, from_file) {
            (Some(v), _) => v,
            (None, Some((line, text))) => text
                .parse()
                .map_err(|e| fail(Kind::Config, format!("line {line}: {key}: {e}")))?,
            (None, None) => return Err(fail(Kind::Usage, format!("missing required setting '{key}'"))),
        };
        self.resolved.push((key.to_owned(), value.to_string()));
        Ok(value)
    }

    /// Fails on file keys nobody asked for, then prints the resolved
    /// configuration to stderr.
    pub fn finish(self, command: &str) -> anyhow::Result<()> {
        if let Some((key, (line, _))) = self.file.into_iter().next() {
            return Err(fail(Kind::Config, format!("line {line}: unknown key '{key}' for {command}")));
        }
        eprintln!("# {command}");
        for (k, v) in &self.resolved {
            eprintln!("{k} = {v}");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_and_unknown_keys_fail() {
        let mut s = Settings::parse("dim = 16\n# comment\nmargin=3.5\n").unwrap();
        assert_eq!(s.get("dim", Some(8usize), 32).unwrap(), 8);
        assert_eq!(s.get("margin", None, 1.0f64).unwrap(), 3.5);
        assert_eq!(s.get("steps", None, 10usize).unwrap(), 10);
        s.finish("train").unwrap();

        let mut s = Settings::parse("dimm = 16").unwrap();
        s.get("dim", None, 32usize).unwrap();
        let err = s.finish("train").unwrap_err().to_string();
        assert!(err.contains("unknown key 'dimm'"), "{err}");
    }

    #[test]
    fn malformed_lines_are_config_errors() {
        assert!(Settings::parse("just words").is_err());
        assert!(Settings::parse("a = 1\na = 2").is_err());
        let mut s = Settings::parse("steps = many").unwrap();
        assert!(s.get("steps", None, 1usize).is_err());
    }
}
