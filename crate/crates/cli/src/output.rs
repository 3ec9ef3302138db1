//! Output directory layout: `<out>/<name>.json` per command,
//! `<out>/traces/*.csv` for traces and tables, `<out>/meta/<name>.json`
//! for timestamps, and `<out>/report.json` for the bundle.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{Map, Value};

use ising_lsi::report::{to_json_string, Csv};

use crate::CliError;

pub struct Output {
    dir: Option<PathBuf>,
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

impl Output {
    pub fn new(dir: Option<PathBuf>) -> Self {
        Output { dir }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn write(&self, relative: &str, contents: &str) -> Result<(), CliError> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let path = dir.join(relative);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
        }
        fs::write(&path, contents).map_err(|e| io_error(&path, e))
    }

    /// Prints the report and, with an output directory, stores it together
    /// with a separate metadata file holding the timestamp.
    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let text = to_json_string(value).map_err(|e| CliError::Io(e.to_string()))?;
        println!("{text}");
        self.write(&format!("{name}.json"), &(text + "\n"))?;
        let seconds = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let meta = serde_json::json!({
            "command": name,
            "version": env!("CARGO_PKG_VERSION"),
            "unix_time": seconds,
        });
        self.write(&format!("meta/{name}.json"), &(meta.to_string() + "\n"))
    }

    pub fn csv(&self, name: &str, csv: &Csv) -> Result<(), CliError> {
        self.write(&format!("traces/{name}.csv"), &csv.render())
    }
}

/// Collects every `<out>/*.json` except the bundle itself into
/// `<out>/report.json`, keyed by file stem.
pub fn bundle(dir: &Path) -> Result<Value, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json") && p.file_stem().is_some_and(|s| s != "report"))
        .collect();
    files.sort();
    let mut out = Map::new();
    for path in files {
        let text = fs::read_to_string(&path).map_err(|e| io_error(&path, e))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let key = path.file_stem().unwrap().to_string_lossy().into_owned();
        out.insert(key, value);
    }
    if out.is_empty() {
        return Err(CliError::Input(format!("no reports found in {}", dir.display())));
    }
    Ok(Value::Object(out))
}
