//! Command-line front end for `mpedge`.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 acceptance failure.

pub mod args;
pub mod commands;
pub mod config;
pub mod verify;

use std::ffi::OsString;
use std::io::Write;

use clap::{CommandFactory, FromArgMatches};

use crate::args::{Cli, EXCLUSIVE, NOT_ECHOED};
use crate::config::ConfigMap;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    Config(String),
    Numerical(String),
    Acceptance(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Acceptance(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Acceptance(m) => write!(f, "acceptance failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<mpedge::Error> for CliError {
    fn from(e: mpedge::Error) -> Self {
        use mpedge::Error::*;
        match e {
            Parameter(_) | Domain(_) | Regime(_) => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// exit code. Records go to `stdout`, diagnostics to `stderr`.
pub fn run(argv: Vec<OsString>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    match execute(argv, stdout) {
        Ok(()) => 0,
        Err(Exit::Clap(e)) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let sink: &mut dyn Write = if code == 0 { stdout } else { stderr };
            let _ = write!(sink, "{}", e.render());
            code
        }
        Err(Exit::Cli(e)) => {
            let _ = writeln!(stderr, "mpedge: {e}");
            e.exit_code()
        }
    }
}

enum Exit {
    Clap(clap::Error),
    Cli(CliError),
}

impl From<CliError> for Exit {
    fn from(e: CliError) -> Self {
        Exit::Cli(e)
    }
}

fn execute(argv: Vec<OsString>, stdout: &mut dyn Write) -> Result<(), Exit> {
    let mut argv: Vec<String> = argv
        .into_iter()
        .map(|a| a.into_string().map_err(|a| CliError::Config(format!("argument {a:?} is not UTF-8"))))
        .collect::<Result<_, _>>()?;
    let config_path = take_config_flag(&mut argv)?;
    let root = Cli::command();
    if let Some(path) = &config_path {
        let map = ConfigMap::load(std::path::Path::new(path))?;
        argv = merge_config(&root, argv, &map)?;
    }
    let matches = root.clone().try_get_matches_from(&argv).map_err(Exit::Clap)?;
    let cli = Cli::from_arg_matches(&matches).map_err(Exit::Clap)?;
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let sub_cmd = root.find_subcommand(name).expect("parsed subcommand exists");
    let echo = echo_entries(name, sub_cmd, sub);
    let ctx = commands::Context {
        threads: cli.threads,
        header: echo,
        config_path: config_path.map(Into::into),
    };
    commands::dispatch(&cli.command, &ctx, stdout)?;
    Ok(())
}

/// Removes `--config FILE` / `--config=FILE` from `argv`.
fn take_config_flag(argv: &mut Vec<String>) -> Result<Option<String>, CliError> {
    let mut found = None;
    let mut i = 1;
    while i < argv.len() {
        if argv[i] == "--" {
            break;
        }
        if argv[i] == "--config" {
            if i + 1 >= argv.len() {
                return Err(CliError::Config("--config needs a file".into()));
            }
            found = Some(argv.remove(i + 1));
            argv.remove(i);
        } else if let Some(v) = argv[i].strip_prefix("--config=") {
            found = Some(v.to_string());
            argv.remove(i);
        } else {
            i += 1;
        }
    }
    Ok(found)
}

/// Splices config entries in as flags right after the subcommand so that
/// command-line flags, coming later, override them.
fn merge_config(root: &clap::Command, argv: Vec<String>, map: &ConfigMap) -> Result<Vec<String>, CliError> {
    let is_sub = |s: &str| root.find_subcommand(s).is_some();
    let mut pos = None;
    let mut i = 1;
    while i < argv.len() {
        let a = &argv[i];
        if a == "--threads" {
            i += 2;
            continue;
        }
        if !a.starts_with('-') && is_sub(a) {
            pos = Some(i);
            break;
        }
        i += 1;
    }
    let (head, name, tail) = match pos {
        Some(p) => (argv[..p].to_vec(), argv[p].clone(), argv[p + 1..].to_vec()),
        None => {
            let name = map
                .get("command")
                .ok_or_else(|| CliError::Config("no subcommand on the command line or in the config".into()))?
                .to_string();
            (argv[..1].to_vec(), name, argv[1..].to_vec())
        }
    };
    let sub = root
        .find_subcommand(&name)
        .ok_or_else(|| CliError::Config(format!("unknown command `{name}`")))?;
    let given: Vec<String> = head
        .iter()
        .chain(&tail)
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a).to_string())
        .collect();
    let mut injected = Vec::new();
    for (key, value) in &map.entries {
        if key == "command" {
            continue;
        }
        let long = key.replace('_', "-");
        let displaced = EXCLUSIVE.iter().any(|(a, b)| {
            (a.contains(&long.as_str()) && b.iter().any(|k| given.iter().any(|g| g == k)))
                || (b.contains(&long.as_str()) && a.iter().any(|k| given.iter().any(|g| g == k)))
        });
        if displaced {
            continue;
        }
        let arg = sub
            .get_arguments()
            .chain(root.get_arguments())
            .find(|a| a.get_long() == Some(long.as_str()))
            .ok_or_else(|| CliError::Config(format!("unknown key `{key}` for `{name}`")))?;
        if arg.get_long() == Some("config") {
            continue;
        }
        if arg.get_action().takes_values() {
            injected.push(format!("--{long}={value}"));
        } else {
            match value.as_str() {
                "true" => injected.push(format!("--{long}")),
                "false" => {}
                _ => return Err(CliError::Config(format!("`{key}` takes true or false, got `{value}`"))),
            }
        }
    }
    let mut out = head;
    out.push(name);
    out.extend(injected);
    out.extend(tail);
    Ok(out)
}

/// Effective flag values of the subcommand, in declaration order, as config
/// entries.
fn echo_entries(name: &str, cmd: &clap::Command, m: &clap::ArgMatches) -> Vec<(String, String)> {
    let mut out = vec![("command".to_string(), name.to_string())];
    for arg in cmd.get_arguments() {
        let id = arg.get_id().as_str();
        if NOT_ECHOED.contains(&id) {
            continue;
        }
        let Some(long) = arg.get_long() else { continue };
        let Ok(Some(raw)) = m.try_get_raw(id) else { continue };
        let value: Vec<String> = raw.map(|v| v.to_string_lossy().into_owned()).collect();
        if value.is_empty() {
            continue;
        }
        out.push((long.replace('-', "_"), value.join(",")));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn config_flag_is_extracted() {
        let mut a = strings(&["mpedge", "--config", "x.cfg", "edge", "--config=y.cfg"]);
        assert_eq!(take_config_flag(&mut a).unwrap().as_deref(), Some("y.cfg"));
        assert_eq!(a, strings(&["mpedge", "edge"]));
    }

    #[test]
    fn command_line_flags_follow_config_flags() {
        let map = ConfigMap::parse("command = edge\nmeasure = f2\nd = 0.5\n").unwrap();
        let root = Cli::command();
        let out = merge_config(&root, strings(&["mpedge", "--d", "1.5"]), &map).unwrap();
        assert_eq!(out, strings(&["mpedge", "edge", "--measure=f2", "--d=0.5", "--d", "1.5"]));
        let out = merge_config(&root, strings(&["mpedge", "edge", "--d", "1.5"]), &map).unwrap();
        assert_eq!(out, strings(&["mpedge", "edge", "--measure=f2", "--d=0.5", "--d", "1.5"]));
    }

    #[test]
    fn exclusive_keys_are_displaced() {
        let map = ConfigMap::parse("measure = f1\nM = 10\nd = 1.5\n").unwrap();
        let root = Cli::command();
        let out = merge_config(&root, strings(&["mpedge", "simulate", "--N", "30"]), &map).unwrap();
        assert!(!out.contains(&"--d=1.5".to_string()));
        assert!(out.contains(&"--measure=f1".to_string()));
    }

    #[test]
    fn unknown_key_is_a_config_error() {
        let map = ConfigMap::parse("command = edge\ncolour = red\n").unwrap();
        let err = merge_config(&Cli::command(), strings(&["mpedge"]), &map).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
