//! Flat `key=value` configuration files.
//!
//! Keys are flag names without the leading dashes (`k-children` and
//! `k_children` are the same key). Blank lines and lines starting with `#`
//! are ignored. Values from the file are placed before the command-line
//! flags, so anything given on the command line wins.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

pub fn parse(text: &str, path: &Path) -> Result<Vec<(String, String)>> {
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("{}:{}: expected key=value", path.display(), idx + 1);
        };
        let key = key.trim().trim_start_matches('-').replace('_', "-");
        if key.is_empty() || key == "config" {
            bail!("{}:{}: invalid key {key:?}", path.display(), idx + 1);
        }
        entries.push((key, value.trim().to_owned()));
    }
    Ok(entries)
}

/// Finds `--config <path>` or `--config=<path>` among the arguments after
/// the subcommand, removing it.
fn take_config(args: &mut Vec<OsString>) -> Result<Option<PathBuf>> {
    let mut found = None;
    let mut i = 0;
    while i < args.len() {
        let a = args[i].to_string_lossy().into_owned();
        if a == "--config" {
            let Some(v) = args.get(i + 1).cloned() else {
                bail!("--config needs a path");
            };
            args.drain(i..i + 2);
            found = Some(PathBuf::from(v));
        } else if let Some(v) = a.strip_prefix("--config=") {
            let v = v.to_owned();
            args.remove(i);
            found = Some(PathBuf::from(v));
        } else {
            i += 1;
        }
    }
    Ok(found)
}

/// Returns the argument vector with config-file flags spliced in right after
/// the subcommand name. The second value is the config path, if any.
pub fn expand(
    args: Vec<OsString>,
    subcommands: &[&str],
) -> Result<(Vec<OsString>, Option<PathBuf>)> {
    let sub = args
        .iter()
        .skip(1)
        .position(|a| subcommands.iter().any(|s| a == s))
        .map(|p| p + 1);
    let Some(sub) = sub else {
        return Ok((args, None));
    };
    let mut head: Vec<OsString> = args[..=sub].to_vec();
    let mut tail: Vec<OsString> = args[sub + 1..].to_vec();
    let Some(path) = take_config(&mut tail)? else {
        head.extend(tail);
        return Ok((head, None));
    };
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("reading config {}", path.display()))?;
    for (key, value) in parse(&text, &path)? {
        head.push(format!("--{key}").into());
        head.push(value.into());
    }
    head.extend(tail);
    Ok((head, Some(path)))
}
