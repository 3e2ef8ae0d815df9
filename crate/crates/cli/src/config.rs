//! Optional plain-text config files: the same `key = value` grammar the
//! reports use. Command-line flags override config values.

use std::collections::BTreeMap;
use std::path::Path;

use spikemorph_core::verify::parse_key_value;
use spikemorph_core::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(ConfigFile::default()) };
        let text = std::fs::read_to_string(path)?;
        let mut values = BTreeMap::new();
        for (_, section) in parse_key_value(&text)? {
            values.extend(section);
        }
        Ok(ConfigFile { values })
    }

    /// Flag value if given, else the parsed config value, else none.
    pub fn resolve<T: std::str::FromStr>(&self, key: &str, flag: Option<T>) -> Result<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| Error::Argument(format!("config key '{key}' has bad value '{raw}'"))),
        }
    }

    /// Like `resolve` but with a default.
    pub fn get_or<T: std::str::FromStr>(&self, key: &str, flag: Option<T>, default: T) -> Result<T> {
        Ok(self.resolve(key, flag)?.unwrap_or(default))
    }
}
