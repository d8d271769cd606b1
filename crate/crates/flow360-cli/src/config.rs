use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::CliError;

/// Option defaults loaded from a `key = value` file. Command-line flags
/// always win over config values; config values win over built-in
/// defaults.
pub struct Config {
    values: BTreeMap<String, String>,
    // Interior mutability so lookups can be recorded through `&self`
    // during resolution.
    consumed: RefCell<BTreeSet<String>>,
}

impl Config {
    pub fn empty() -> Config {
        Config {
            values: BTreeMap::new(),
            consumed: RefCell::new(BTreeSet::new()),
        }
    }

    /// One `key = value` per line; `#` starts a comment; blank lines are
    /// skipped; a repeated key keeps the last value.
    pub fn load(path: &Path) -> Result<Config, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|err| CliError::Io(format!("{}: {err}", path.display())))?;
        let mut values = BTreeMap::new();
        for (index, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Usage(format!(
                    "{}:{}: expected key = value",
                    path.display(),
                    index + 1
                )));
            };
            let key = key.trim();
            if key.is_empty() {
                return Err(CliError::Usage(format!(
                    "{}:{}: empty key",
                    path.display(),
                    index + 1
                )));
            }
            values.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Config {
            values,
            consumed: RefCell::new(BTreeSet::new()),
        })
    }

    fn lookup(&self, key: &str) -> Option<&str> {
        // Mark even when a flag later shadows the value: the key is
        // understood by this command either way.
        if self.values.contains_key(key) {
            self.consumed.borrow_mut().insert(key.to_string());
        }
        self.values.get(key).map(String::as_str)
    }

    /// Flag, else config, else `None`.
    pub fn resolve_opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        let from_config = self.lookup(key);
        if flag.is_some() {
            return Ok(flag);
        }
        match from_config {
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|err| CliError::Usage(format!("config key '{key}' = '{raw}': {err}"))),
            None => Ok(None),
        }
    }

    /// Flag, else config, else the given default.
    pub fn resolve<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        Ok(self.resolve_opt(flag, key)?.unwrap_or(default))
    }

    /// Call after all keys were resolved. With `strict`, keys the
    /// command never looked up are an error; otherwise they are ignored.
    pub fn finish(&self, strict: bool) -> Result<(), CliError> {
        let consumed = self.consumed.borrow();
        let unused: Vec<&str> = self
            .values
            .keys()
            .map(String::as_str)
            .filter(|key| !consumed.contains(*key))
            .collect();
        if unused.is_empty() {
            return Ok(());
        }
        if strict {
            return Err(CliError::Usage(format!(
                "config keys not understood by this command: {}",
                unused.join(", ")
            )));
        }
        log::debug!("ignoring config keys: {}", unused.join(", "));
        Ok(())
    }
}
