//! Optional flag file: one `key = value` per line, keys spelled like the long
//! flags without dashes. `#` starts a comment. Values from the file are placed
//! before the command-line flags, so the command line overrides them.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::CliError;

pub fn parse(text: &str, origin: &Path) -> Result<Vec<OsString>, CliError> {
    let mut args = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::input(format!("{}:{}: expected `key = value`", origin.display(), lineno + 1)))?;
        let key = key.trim().trim_start_matches("--");
        if key.is_empty() || key == "config" {
            return Err(CliError::input(format!(
                "{}:{}: invalid key",
                origin.display(),
                lineno + 1
            )));
        }
        args.push(format!("--{key}").into());
        args.push(value.trim().into());
    }
    Ok(args)
}

/// Removes `--config FILE` from `args` and splices the file's flags in right
/// after the subcommand name.
pub fn expand(mut args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let mut path: Option<PathBuf> = None;
    let mut i = 1;
    while i < args.len() {
        let arg = args[i].to_string_lossy().into_owned();
        if arg == "--" {
            break;
        }
        if arg == "--config" {
            if i + 1 >= args.len() {
                // Leave it to the parser to report the missing value.
                break;
            }
            path = Some(PathBuf::from(args.remove(i + 1)));
            args.remove(i);
        } else if let Some(p) = arg.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
            args.remove(i);
        } else {
            i += 1;
        }
    }
    let Some(path) = path else { return Ok(args) };
    let text =
        fs::read_to_string(&path).map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    let extra = parse(&text, &path)?;
    let at = args
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
        .map_or(args.len(), |p| p + 2);
    args.splice(at..at, extra);
    Ok(args)
}
