use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

/// One `key = value` entry, with the `[section]` it appeared under.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub section: Option<String>,
    pub key: String,
    pub value: String,
}

/// Parse a config file: `key = value` lines, `#` comments, optional
/// `[subcommand]` section headers. Underscores in keys read as hyphens.
pub fn parse_config(text: &str) -> Result<Vec<Entry>, String> {
    let mut section = None;
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim();
            if name.is_empty() {
                return Err(format!("config line {}: empty section name", n + 1));
            }
            section = Some(name.to_string());
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected key = value, got {raw:?}", n + 1))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() || key.starts_with('-') {
            return Err(format!("config line {}: bad key {:?}", n + 1, k.trim()));
        }
        if key == "config" {
            return Err(format!("config line {}: config files cannot nest", n + 1));
        }
        out.push(Entry {
            section: section.clone(),
            key,
            value: v.trim().to_string(),
        });
    }
    Ok(out)
}

const VALUED_GLOBALS: [&str; 3] = ["--config", "--seed", "--threads"];

fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--" {
            break;
        }
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(v));
        }
    }
    None
}

fn subcommand_index(args: &[OsString]) -> Option<usize> {
    let mut i = 1;
    while i < args.len() {
        let s = args[i].to_string_lossy();
        if s == "--" {
            return None;
        }
        if VALUED_GLOBALS.contains(&s.as_ref()) {
            i += 2;
        } else if s.starts_with('-') {
            i += 1;
        } else {
            return Some(i);
        }
    }
    None
}

/// Insert the config file's entries as flags right after the subcommand
/// name, so that flags given on the command line come later and win.
/// Errors carry the exit code: 1 for an unreadable file, 2 for a malformed one.
pub fn expand_config(args: &[OsString]) -> Result<Vec<OsString>, (i32, String)> {
    let Some(path) = config_path(args) else {
        return Ok(args.to_vec());
    };
    let Some(idx) = subcommand_index(args) else {
        return Ok(args.to_vec());
    };
    let text = fs::read_to_string(&path).map_err(|e| (1, format!("cannot read config {}: {e}", path.display())))?;
    let entries = parse_config(&text).map_err(|e| (2, format!("{}: {e}", path.display())))?;
    let sub = args[idx].to_string_lossy().into_owned();
    let mut flags = Vec::new();
    for e in entries {
        if e.section.as_deref().is_some_and(|s| s != sub) {
            continue;
        }
        match e.value.as_str() {
            "true" => flags.push(OsString::from(format!("--{}", e.key))),
            "false" => {}
            v => flags.push(OsString::from(format!("--{}={v}", e.key))),
        }
    }
    let mut out: Vec<OsString> = args[..=idx].to_vec();
    out.extend(flags);
    out.extend(args[idx + 1..].iter().cloned());
    Ok(out)
}
