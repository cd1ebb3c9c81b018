//! Path handling shared by the subcommands.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use bendseg::imgcore::{read_float_maps, read_label_map};
use bendseg::{FloatMap, LabelFormat, LabelMap};

use crate::{CliError, CliResult};

pub fn input_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

pub fn label_format(path: &Path, requested: Option<LabelFormat>) -> CliResult<LabelFormat> {
    requested
        .or_else(|| LabelFormat::from_path(path))
        .ok_or_else(|| input_error(path, "unknown label-map extension (expected .png or .lmap)"))
}

pub fn read_labels(path: &Path, requested: Option<LabelFormat>) -> CliResult<LabelMap> {
    let format = label_format(path, requested)?;
    read_label_map(path, format).map_err(|e| input_error(path, e))
}

pub fn read_channels(path: &Path, expected: usize) -> CliResult<Vec<FloatMap>> {
    let maps = read_float_maps(path).map_err(|e| input_error(path, e))?;
    if maps.len() != expected {
        return Err(input_error(path, format!("expected {expected} channel(s), found {}", maps.len())));
    }
    Ok(maps)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Label maps in `dir` keyed by file stem.
pub fn list_label_maps(dir: &Path, only: Option<LabelFormat>) -> CliResult<BTreeMap<String, PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| input_error(dir, e))?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| input_error(dir, e))?.path();
        let Some(format) = LabelFormat::from_path(&path) else { continue };
        if only.is_some_and(|f| f != format) || !path.is_file() {
            continue;
        }
        if let Some(previous) = out.insert(stem(&path), path.clone()) {
            return Err(input_error(&path, format!("clashes with {}", previous.display())));
        }
    }
    Ok(out)
}

/// Files named `<stem><suffix>` in `dir`, keyed by stem.
pub fn list_with_suffix(dir: &Path, suffix: &str) -> CliResult<BTreeMap<String, PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| input_error(dir, e))?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| input_error(dir, e))?.path();
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        if let Some(s) = name.strip_suffix(suffix) {
            out.insert(s.to_string(), path);
        }
    }
    Ok(out)
}

pub fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| input_error(dir, e))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| input_error(path, e))
}

/// `key=value` lines sorted by key.
pub fn key_values<K: AsRef<str>, V: std::fmt::Display>(pairs: impl IntoIterator<Item = (K, V)>) -> String {
    let mut lines: Vec<String> = pairs.into_iter().map(|(k, v)| format!("{}={v}", k.as_ref())).collect();
    lines.sort();
    lines.into_iter().map(|l| l + "\n").collect()
}

/// Parses `key=value` lines, ignoring blanks.
pub fn parse_key_values(path: &Path) -> CliResult<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| input_error(path, e))?;
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let (k, v) =
            line.split_once('=').ok_or_else(|| input_error(path, format!("line {}: expected key=value", n + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}
