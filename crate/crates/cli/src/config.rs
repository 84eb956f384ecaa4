//! Flag parsing with config-file fallback.
//!
//! Every flag can also be given in a `key = value` config file passed via
//! `--config`; explicit flags win over the file.

use std::collections::BTreeMap;
use std::fs;
use std::ops::RangeInclusive;
use std::path::PathBuf;

use trajflow_core::scoring::WeightFlags;

use crate::{CliError, Result};

/// Canonical spelling of a flag set: `none` or `+`-joined components in
/// `emp`, `weekday`, `hour` order.
pub fn flags_name(flags: WeightFlags) -> String {
    if flags.is_empty() {
        return "none".into();
    }
    let mut parts = Vec::new();
    if flags.emp {
        parts.push("emp");
    }
    if flags.weekday {
        parts.push("weekday");
    }
    if flags.hour {
        parts.push("hour");
    }
    parts.join("+")
}

/// Parse `none`, `all`, or a `,`/`+`-separated subset of
/// `emp`, `weekday`, `hour`.
pub fn parse_flags(spec: &str) -> Result<WeightFlags> {
    let spec = spec.trim();
    if spec.eq_ignore_ascii_case("none") || spec.is_empty() {
        return Ok(WeightFlags::NONE);
    }
    if spec.eq_ignore_ascii_case("all") {
        return Ok(WeightFlags::ALL);
    }
    let mut flags = WeightFlags::NONE;
    for part in spec.split([',', '+']) {
        match part.trim() {
            "emp" => flags.emp = true,
            "weekday" => flags.weekday = true,
            "hour" => flags.hour = true,
            other => {
                return Err(CliError::Usage(format!(
                    "unknown weight flag {other:?} (expected emp, weekday, hour)"
                )))
            }
        }
    }
    Ok(flags)
}

/// Merged view of command-line flags over config-file values.
#[derive(Debug, Default)]
pub struct Options {
    values: BTreeMap<String, String>,
}

impl Options {
    /// Parse `--key value` / `--key=value` pairs; a `--config FILE` is
    /// loaded first so explicit flags override it.
    pub fn from_args(args: &[String]) -> Result<Options> {
        let mut cli = BTreeMap::new();
        let mut iter = args.iter().peekable();
        while let Some(arg) = iter.next() {
            let Some(flag) = arg.strip_prefix("--") else {
                return Err(CliError::Usage(format!("unexpected argument {arg:?}")));
            };
            let (key, value) = match flag.split_once('=') {
                Some((k, v)) => (k.to_string(), v.to_string()),
                None => {
                    // A flag followed by another flag (or nothing) is a
                    // boolean switch.
                    match iter.peek() {
                        Some(next) if !next.starts_with("--") => {
                            (flag.to_string(), iter.next().unwrap().clone())
                        }
                        _ => (flag.to_string(), "true".to_string()),
                    }
                }
            };
            if key.is_empty() {
                return Err(CliError::Usage(format!("malformed flag {arg:?}")));
            }
            if cli.insert(key.clone(), value).is_some() {
                return Err(CliError::Usage(format!("flag --{key} given twice")));
            }
        }

        let mut values = BTreeMap::new();
        if let Some(config_path) = cli.get("config") {
            values = load_config_file(&PathBuf::from(config_path))?;
        }
        values.extend(cli);
        Ok(Options { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| CliError::Usage(format!("missing required flag --{key}")))
    }

    pub fn path(&self, key: &str) -> Result<PathBuf> {
        Ok(PathBuf::from(self.require(key)?))
    }

    pub fn path_opt(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(PathBuf::from)
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| CliError::Usage(format!("--{key} expects a number, got {v:?}"))),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| CliError::Usage(format!("--{key} expects an integer, got {v:?}"))),
        }
    }

    pub fn usize_req(&self, key: &str) -> Result<usize> {
        let v = self.require(key)?;
        v.parse()
            .map_err(|_| CliError::Usage(format!("--{key} expects an integer, got {v:?}")))
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| CliError::Usage(format!("--{key} expects an integer, got {v:?}"))),
        }
    }

    pub fn i64_or(&self, key: &str, default: i64) -> Result<i64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| CliError::Usage(format!("--{key} expects an integer, got {v:?}"))),
        }
    }

    pub fn bool_flag(&self, key: &str) -> Result<bool> {
        match self.get(key) {
            None => Ok(false),
            Some("true") | Some("1") | Some("yes") => Ok(true),
            Some("false") | Some("0") | Some("no") => Ok(false),
            Some(v) => Err(CliError::Usage(format!("--{key} expects a boolean, got {v:?}"))),
        }
    }

    /// Inclusive integer range written `A..B`.
    pub fn range_or(
        &self,
        key: &str,
        default: RangeInclusive<usize>,
    ) -> Result<RangeInclusive<usize>> {
        let Some(v) = self.get(key) else {
            return Ok(default);
        };
        let bad = || CliError::Usage(format!("--{key} expects a range like 1..8, got {v:?}"));
        let (lo, hi) = v.split_once("..").ok_or_else(bad)?;
        let lo: usize = lo.trim().parse().map_err(|_| bad())?;
        let hi: usize = hi.trim().trim_start_matches('=').trim().parse().map_err(|_| bad())?;
        if lo == 0 || hi < lo {
            return Err(bad());
        }
        Ok(lo..=hi)
    }

    /// Error on any provided key outside the allowed set; catches typos.
    pub fn reject_unknown(&self, allowed: &[&str]) -> Result<()> {
        for key in self.values.keys() {
            if key != "config" && !allowed.contains(&key.as_str()) {
                return Err(CliError::Usage(format!("unknown flag --{key}")));
            }
        }
        Ok(())
    }
}

fn load_config_file(path: &PathBuf) -> Result<BTreeMap<String, String>> {
    let content = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut values = BTreeMap::new();
    for (line_no, line) in content.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!(
                "{}:{}: expected key = value",
                path.display(),
                line_no + 1
            ))
        })?;
        values.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(values)
}
