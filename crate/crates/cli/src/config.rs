use std::ffi::OsString;
use std::path::Path;

use readcheck::{Error, Result};

/// Parse `key = value` lines; blank lines and `#` comments are ignored.
pub fn parse_config(text: &str, path: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (index, raw) in text.lines().enumerate() {
        let line = raw.split_once('#').map_or(raw, |(a, _)| a).trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Malformed {
            path: path.to_path_buf(),
            index,
            message: format!("expected key = value, got {line:?}"),
        })?;
        let key = k.trim().replace('_', "-");
        let value = v.trim().trim_matches('"').to_string();
        if key.is_empty() || key == "config" {
            return Err(Error::Malformed {
                path: path.to_path_buf(),
                index,
                message: format!("invalid key {:?}", k.trim()),
            });
        }
        out.push((key, value));
    }
    Ok(out)
}

fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(p.into());
        }
    }
    None
}

/// Insert the settings of a `--config` file right after the subcommand so
/// that flags given on the command line take precedence.
pub fn expand_args(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let settings = parse_config(&text, path)?;
    let split = 2.min(args.len());
    let mut out: Vec<OsString> = args[..split].to_vec();
    out.extend(settings.into_iter().map(|(k, v)| OsString::from(format!("--{k}={v}"))));
    out.extend(args[split..].iter().cloned());
    Ok(out)
}
