//! `key=value` settings files.
//!
//! Keys are long flag names without the leading dashes (`lr`, `weight-decay`,
//! `data`). Blank lines and `#` comments are ignored. A value from the file
//! is used only when the flag was not given on the command line.

use std::fs;
use std::path::Path;

use clap::parser::ValueSource;
use clap::{ArgMatches, Command};

#[derive(Debug)]
pub struct SettingsError(pub String);

pub fn parse(text: &str, path: &Path) -> Result<Vec<(String, String)>, SettingsError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(at) => &raw[..at],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(SettingsError(format!(
                "{}:{}: expected key=value, got {line:?}",
                path.display(),
                i + 1
            )));
        };
        let key = key.trim().trim_start_matches("--").to_string();
        if key.is_empty() {
            return Err(SettingsError(format!("{}:{}: empty key", path.display(), i + 1)));
        }
        out.push((key, value.trim().to_string()));
    }
    Ok(out)
}

pub fn read(path: &Path) -> Result<Vec<(String, String)>, SettingsError> {
    let text = fs::read_to_string(path)
        .map_err(|e| SettingsError(format!("cannot read settings file {}: {e}", path.display())))?;
    parse(&text, path)
}

/// Extra arguments that apply `settings` to the subcommand `sub` wherever
/// the command line left a flag at its default.
pub fn overrides(
    command: &Command,
    sub: &str,
    matches: &ArgMatches,
    settings: &[(String, String)],
    path: &Path,
) -> Result<Vec<String>, SettingsError> {
    let cmd = command
        .find_subcommand(sub)
        .expect("subcommand present in the parsed matches");
    let mut extra = Vec::new();
    for (key, value) in settings {
        let Some(arg) = cmd.get_arguments().find(|a| a.get_long() == Some(key.as_str())) else {
            return Err(SettingsError(format!(
                "{}: unknown setting {key:?} for `{sub}`",
                path.display()
            )));
        };
        if matches.value_source(arg.get_id().as_str()) == Some(ValueSource::CommandLine) {
            continue;
        }
        let takes_value = arg.get_action().takes_values();
        if takes_value {
            extra.push(format!("--{key}={value}"));
        } else {
            match value.as_str() {
                "true" | "1" | "yes" => extra.push(format!("--{key}")),
                "false" | "0" | "no" => {}
                _ => {
                    return Err(SettingsError(format!(
                        "{}: setting {key:?} takes true or false, got {value:?}",
                        path.display()
                    )))
                }
            }
        }
    }
    Ok(extra)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_blank_lines() {
        let text = "# run settings\n\nlr = 0.01  # faster\n--epochs=5\n";
        let got = parse(text, Path::new("s.txt")).unwrap();
        assert_eq!(
            got,
            vec![("lr".into(), "0.01".into()), ("epochs".into(), "5".into())]
        );
    }

    #[test]
    fn missing_equals_names_the_line() {
        let err = parse("lr=1\nepochs 5\n", Path::new("s.txt")).unwrap_err();
        assert!(err.0.contains("s.txt:2"), "{}", err.0);
    }
}
