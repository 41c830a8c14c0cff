//! `--config` file overlay: flat `key = value` lines turned into flags
//! placed before the real command-line flags.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::CommandFactory;

use crate::args::Cli;

fn config_path(raw: &[OsString]) -> Result<Option<PathBuf>, String> {
    let mut it = raw.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return match it.next() {
                Some(p) => Ok(Some(PathBuf::from(p))),
                None => Err("--config needs a file path".into()),
            };
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Ok(Some(PathBuf::from(p)));
        }
    }
    Ok(None)
}

fn given_on_command_line(raw: &[OsString], long: &str) -> bool {
    let flag = format!("--{long}");
    let eq = format!("--{long}=");
    raw.iter().any(|a| {
        let s = a.to_string_lossy();
        s == flag || s.starts_with(&eq)
    })
}

/// Returns the argument list with config-file entries spliced in right
/// after the subcommand name.
pub fn expand_args(raw: Vec<OsString>) -> Result<Vec<OsString>, Vec<String>> {
    let path = match config_path(&raw) {
        Ok(Some(p)) => p,
        Ok(None) => return Ok(raw),
        Err(e) => return Err(vec![e]),
    };
    let text = fs::read_to_string(&path)
        .map_err(|e| vec![format!("cannot read config file {}: {e}", path.display())])?;

    let cmd = Cli::command();
    let names: Vec<String> = cmd
        .get_subcommands()
        .map(|s| s.get_name().to_string())
        .collect();
    let Some(pos) = raw
        .iter()
        .position(|a| names.iter().any(|n| *n == a.to_string_lossy()))
    else {
        // no subcommand: let clap report it
        return Ok(raw);
    };
    let sub_name = raw[pos].to_string_lossy().into_owned();
    let sub = cmd.find_subcommand(&sub_name).expect("known subcommand");

    let mut extra = Vec::new();
    let mut errors = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            errors.push(format!(
                "{}:{}: expected key = value",
                path.display(),
                n + 1
            ));
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        let key = match key.split_once('.') {
            Some((scope, k)) if scope == sub_name => k,
            Some((scope, _)) if names.iter().any(|s| s == scope) => continue,
            Some(_) => {
                errors.push(format!(
                    "{}:{}: unknown section in `{key}`",
                    path.display(),
                    n + 1
                ));
                continue;
            }
            None => key,
        };
        let long = key.replace('_', "-");
        let Some(arg) = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(long.as_str()))
        else {
            errors.push(format!(
                "{}:{}: `{key}` is not a flag of `kws {sub_name}`",
                path.display(),
                n + 1
            ));
            continue;
        };
        if long == "config" || given_on_command_line(&raw, &long) {
            continue;
        }
        if arg.get_action().takes_values() {
            extra.push(OsString::from(format!("--{long}")));
            extra.push(OsString::from(value));
        } else {
            match value {
                "true" => extra.push(OsString::from(format!("--{long}"))),
                "false" => {}
                other => errors.push(format!(
                    "{}:{}: `{key}` expects true or false, got `{other}`",
                    path.display(),
                    n + 1
                )),
            }
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }
    let mut out = raw;
    out.splice(pos + 1..pos + 1, extra);
    Ok(out)
}
