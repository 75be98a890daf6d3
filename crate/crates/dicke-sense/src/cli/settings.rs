//! Key/value settings of one subcommand: built-in defaults, then the
//! command's section of the `--config` file, then command-line overrides.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::harness::sweep::{parse_f64, split_list};

/// A recognised key with its default (empty = unset) and a one-line help.
#[derive(Clone, Copy, Debug)]
pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

pub const fn key(name: &'static str, default: &'static str, help: &'static str) -> Key {
    Key { name, default, help }
}

#[derive(Clone, Debug)]
pub struct Settings {
    section: String,
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn new(section: &str, keys: &[Key], config: Option<&ini::Ini>, overrides: &[(String, String)]) -> Result<Self> {
        let mut values = BTreeMap::new();
        for k in keys {
            if !k.default.is_empty() {
                values.insert(k.name.to_string(), k.default.to_string());
            }
        }
        let known = |name: &str| keys.iter().any(|k| k.name == name);
        if let Some(sec) = config.and_then(|c| c.section(Some(section))) {
            for (k, v) in sec.iter() {
                if !known(k) {
                    return Err(Error::Parse(format!("unknown key '{k}' in [{section}]")));
                }
                values.insert(k.to_string(), v.trim().to_string());
            }
        }
        for (k, v) in overrides {
            if !known(k) {
                return Err(Error::Parse(format!("unknown setting '{k}' for {section}")));
            }
            values.insert(k.clone(), v.trim().to_string());
        }
        Ok(Settings { section: section.to_string(), values })
    }

    fn err(&self, k: &str, msg: impl std::fmt::Display) -> Error {
        Error::Parse(format!("[{}] {k}: {msg}", self.section))
    }

    pub fn has(&self, k: &str) -> bool {
        self.values.get(k).is_some_and(|v| !v.is_empty())
    }

    pub fn str(&self, k: &str) -> Result<&str> {
        self.values
            .get(k)
            .map(String::as_str)
            .filter(|v| !v.is_empty())
            .ok_or_else(|| self.err(k, "missing value"))
    }

    pub fn get<T: FromStr<Err = Error>>(&self, k: &str) -> Result<T> {
        self.str(k)?.parse().map_err(|e| self.err(k, e))
    }

    pub fn opt<T: FromStr<Err = Error>>(&self, k: &str) -> Result<Option<T>> {
        if self.has(k) {
            self.get(k).map(Some)
        } else {
            Ok(None)
        }
    }

    pub fn list<T: FromStr<Err = Error>>(&self, k: &str) -> Result<Vec<T>> {
        let v: Vec<T> = split_list(self.str(k)?).map(str::parse).collect::<Result<_>>().map_err(|e| self.err(k, e))?;
        if v.is_empty() {
            return Err(self.err(k, "empty list"));
        }
        Ok(v)
    }

    pub fn f64(&self, k: &str) -> Result<f64> {
        parse_f64(self.str(k)?).map_err(|e| self.err(k, e))
    }

    pub fn opt_f64(&self, k: &str) -> Result<Option<f64>> {
        if self.has(k) {
            self.f64(k).map(Some)
        } else {
            Ok(None)
        }
    }

    pub fn f64_list(&self, k: &str) -> Result<Vec<f64>> {
        let v: Vec<f64> = split_list(self.str(k)?).map(parse_f64).collect::<Result<_>>().map_err(|e| self.err(k, e))?;
        if v.is_empty() {
            return Err(self.err(k, "empty list"));
        }
        Ok(v)
    }

    pub fn usize(&self, k: &str) -> Result<usize> {
        self.str(k)?.parse().map_err(|e| self.err(k, e))
    }

    pub fn usize_list(&self, k: &str) -> Result<Vec<usize>> {
        let v: Vec<usize> = split_list(self.str(k)?)
            .map(|x| x.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| self.err(k, e))?;
        if v.is_empty() {
            return Err(self.err(k, "empty list"));
        }
        Ok(v)
    }

    pub fn bool(&self, k: &str) -> Result<bool> {
        match self.str(k)? {
            "true" | "yes" | "1" | "on" => Ok(true),
            "false" | "no" | "0" | "off" => Ok(false),
            v => Err(self.err(k, format!("expected a boolean, got '{v}'"))),
        }
    }

    pub fn strings(&self, k: &str) -> Result<Vec<String>> {
        Ok(split_list(self.str(k)?).map(String::from).collect())
    }
}

/// Splits `key=value` overrides.
pub fn parse_overrides(items: &[String]) -> Result<Vec<(String, String)>> {
    items
        .iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::Parse(format!("expected key=value, got '{s}'")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const KEYS: &[Key] = &[key("n", "10", ""), key("omega_ratio", "1", ""), key("t1", "", "")];

    #[test]
    fn layers_defaults_config_and_overrides() {
        let ini = ini::Ini::load_from_str("[qfi1]\nn = 20, 40\nomega_ratio = 2\n").unwrap();
        let o = parse_overrides(&["omega_ratio=0.5".into()]).unwrap();
        let s = Settings::new("qfi1", KEYS, Some(&ini), &o).unwrap();
        assert_eq!(s.usize_list("n").unwrap(), vec![20, 40]);
        assert_eq!(s.f64("omega_ratio").unwrap(), 0.5);
        assert!(!s.has("t1"));
        assert!(s.str("t1").is_err());
    }

    #[test]
    fn unknown_keys_are_errors() {
        let ini = ini::Ini::load_from_str("[qfi1]\nbogus = 1\n").unwrap();
        assert!(Settings::new("qfi1", KEYS, Some(&ini), &[]).is_err());
        let o = parse_overrides(&["bogus=1".into()]).unwrap();
        assert!(Settings::new("qfi1", KEYS, None, &o).is_err());
        assert!(parse_overrides(&["novalue".into()]).is_err());
    }
}
