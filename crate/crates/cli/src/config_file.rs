//! `--config FILE`: a JSON object whose keys are long flag names.
//!
//! Each key becomes `--key value` unless the flag already appears on the
//! command line, so explicit flags win. Underscores in keys are read as
//! hyphens, arrays become comma-separated lists, `true` becomes a bare switch
//! and `false` or `null` are dropped.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use rsgnn::Error;
use serde_json::Value;

pub fn expand(mut args: Vec<OsString>) -> rsgnn::Result<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    let Value::Object(map) = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
    else {
        return Err(Error::Parse(format!(
            "{}: expected a JSON object",
            path.display()
        )));
    };
    let given: Vec<String> = args
        .iter()
        .filter_map(|a| a.to_str())
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a).to_string())
        .collect();
    for (key, value) in map {
        let flag = key.replace('_', "-");
        if flag == "config" || given.contains(&flag) {
            continue;
        }
        let rendered = match value {
            Value::Null | Value::Bool(false) => continue,
            Value::Bool(true) => None,
            Value::Number(n) => Some(n.to_string()),
            Value::String(s) => Some(s),
            Value::Array(items) => Some(
                items
                    .iter()
                    .map(|v| match v {
                        Value::String(s) => Ok(s.clone()),
                        Value::Number(n) => Ok(n.to_string()),
                        other => Err(Error::Parse(format!(
                            "{}: unsupported list item {other} for {key}",
                            path.display()
                        ))),
                    })
                    .collect::<rsgnn::Result<Vec<_>>>()?
                    .join(","),
            ),
            Value::Object(_) => {
                return Err(Error::Parse(format!(
                    "{}: nested object for {key} is not a flag value",
                    path.display()
                )))
            }
        };
        args.push(format!("--{flag}").into());
        if let Some(v) = rendered {
            args.push(v.into());
        }
    }
    Ok(args)
}

fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut iter = args.iter();
    while let Some(a) = iter.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return iter.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}
