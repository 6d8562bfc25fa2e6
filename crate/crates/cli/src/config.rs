//! Flat `key=value` run configs mirroring the command-line flags.

use std::path::Path;

use clap::{ArgMatches, Command};

use crate::CliError;

/// Flags that never appear in a config file.
const SKIPPED: [&str; 3] = ["help", "version", "config"];

fn is_flag(arg: &clap::Arg) -> bool {
    !arg.get_action().takes_values()
}

/// Parses a config file into `--key value` tokens for `sub`. Keys must name
/// one of the subcommand's flags.
pub fn config_tokens(sub: &Command, path: &Path) -> Result<Vec<String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Invalid(format!("cannot read config {}: {e}", path.display())))?;
    let mut tokens = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Invalid(format!("config {} line {}: expected key=value", path.display(), n + 1))
        })?;
        let (key, value) = (key.trim(), value.trim());
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key) && !SKIPPED.contains(&key))
            .ok_or_else(|| {
                CliError::Invalid(format!(
                    "config {} line {}: unknown key '{key}' for {}",
                    path.display(),
                    n + 1,
                    sub.get_name()
                ))
            })?;
        if is_flag(arg) {
            match value {
                "true" => tokens.push(format!("--{key}")),
                "false" => {}
                _ => {
                    return Err(CliError::Invalid(format!(
                        "config {} line {}: '{key}' takes true or false",
                        path.display(),
                        n + 1
                    )))
                }
            }
        } else {
            tokens.push(format!("--{key}"));
            // multi-valued flags are written comma-joined
            if arg.get_num_args().is_some_and(|r| r.max_values() > 1) {
                tokens.extend(value.split(',').map(String::from));
            } else {
                tokens.push(value.to_string());
            }
        }
    }
    Ok(tokens)
}

/// The effective value of every flag, defaults included, as a config file.
pub fn resolved_config(sub: &Command, matches: &ArgMatches) -> String {
    let mut out = format!("# scatvox {}\n", sub.get_name());
    for arg in sub.get_arguments() {
        let id = arg.get_id().as_str();
        let Some(long) = arg.get_long() else { continue };
        if SKIPPED.contains(&long) {
            continue;
        }
        let Some(raw) = matches.get_raw(id) else { continue };
        let values: Vec<String> = raw.map(|v| v.to_string_lossy().into_owned()).collect();
        if values.is_empty() {
            continue;
        }
        out.push_str(&format!("{long}={}\n", values.join(",")));
    }
    out
}
