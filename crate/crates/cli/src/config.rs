//! Flag resolution: command-line flags override a single optional JSON
//! config file, which overrides built-in defaults. The seed additionally
//! falls back to `MOE_LAB_SEED` before its default of 0.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult, PathContext};

pub const SEED_ENV: &str = "MOE_LAB_SEED";

/// Resolves settings for one subcommand and records every resolved value
/// for the run manifest.
#[derive(Debug, Default)]
pub struct Resolver {
    file: Map<String, Value>,
    resolved: Map<String, Value>,
}

impl Resolver {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let file = match path {
            None => Map::new(),
            Some(p) => {
                let text = std::fs::read_to_string(p).at(p)?;
                match serde_json::from_str::<Value>(&text) {
                    Ok(Value::Object(map)) => map
                        .into_iter()
                        .map(|(k, v)| (k.replace('_', "-"), v))
                        .collect(),
                    Ok(_) => {
                        return Err(CliError::usage(format!(
                            "{}: config must be a JSON object",
                            p.display()
                        )))
                    }
                    Err(e) => return Err(CliError::usage(format!("{}: {e}", p.display()))),
                }
            }
        };
        Ok(Self {
            file,
            resolved: Map::new(),
        })
    }

    /// Flag value, else config value, else `None`.
    pub fn optional<T: DeserializeOwned + Serialize + Clone>(
        &mut self,
        key: &str,
        flag: Option<T>,
    ) -> CliResult<Option<T>> {
        // the config entry is consumed (and must parse) even when a flag wins
        let from_file = match self.file.remove(key) {
            Some(raw) => Some(
                serde_json::from_value(raw)
                    .map_err(|e| CliError::usage(format!("config key `{key}`: {e}")))?,
            ),
            None => None,
        };
        let value = flag.or(from_file);
        if let Some(v) = &value {
            self.record(key, v);
        }
        Ok(value)
    }

    /// Flag value, else config value, else `default`.
    pub fn value<T: DeserializeOwned + Serialize + Clone>(
        &mut self,
        key: &str,
        flag: Option<T>,
        default: T,
    ) -> CliResult<T> {
        match self.optional(key, flag)? {
            Some(v) => Ok(v),
            None => {
                self.record(key, &default);
                Ok(default)
            }
        }
    }

    /// Like [`Resolver::optional`] but the setting must be present.
    pub fn required<T: DeserializeOwned + Serialize + Clone>(
        &mut self,
        key: &str,
        flag: Option<T>,
    ) -> CliResult<T> {
        self.optional(key, flag)?
            .ok_or_else(|| CliError::usage(format!("missing required setting --{key}")))
    }

    /// List-valued setting; an empty flag list counts as absent.
    pub fn list<T: DeserializeOwned + Serialize + Clone>(
        &mut self,
        key: &str,
        flag: Vec<T>,
        default: Vec<T>,
    ) -> CliResult<Vec<T>> {
        let flag = (!flag.is_empty()).then_some(flag);
        self.value(key, flag, default)
    }

    /// `--seed`, else config `seed`, else `MOE_LAB_SEED`, else 0.
    pub fn seed(&mut self, flag: Option<u64>) -> CliResult<u64> {
        let env = match std::env::var(SEED_ENV) {
            Ok(s) => Some(s.trim().parse::<u64>().map_err(|_| {
                CliError::usage(format!("{SEED_ENV}={s:?} is not an unsigned integer"))
            })?),
            Err(_) => None,
        };
        let seed = self.optional("seed", flag)?.or(env).unwrap_or(0);
        self.record("seed", &seed);
        Ok(seed)
    }

    /// Records a derived or flag-only value in the manifest config.
    pub fn record<T: Serialize>(&mut self, key: &str, value: &T) {
        let v = serde_json::to_value(value).expect("settings serialize to JSON");
        self.resolved.insert(key.to_string(), v);
    }

    /// Fails on config keys no setting consumed (likely typos) and returns
    /// the resolved configuration.
    pub fn finish(self) -> CliResult<Map<String, Value>> {
        if let Some(key) = self.file.keys().next() {
            return Err(CliError::usage(format!("unknown config key `{key}`")));
        }
        Ok(self.resolved)
    }
}
