use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::config::{CommandName, RunConfig};
use crate::error::CliError;

/// Scientific notation with 17 significant digits; `-0` prints as `0`.
pub fn fmt_f(x: f64) -> String {
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.16e}")
}

pub struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let path = self.path(name);
        let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(&path).map_err(io)?;
        w.write_record(header).map_err(io)?;
        for row in rows {
            w.write_record(row).map_err(io)?;
        }
        w.flush().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn json(&mut self, name: &str, value: &Value) -> Result<(), CliError> {
        let path = self.path(name);
        let text = serde_json::to_string_pretty(value).expect("json values serialize");
        std::fs::write(&path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Writes `<command>.manifest.json` echoing the resolved configuration,
    /// the tolerances in force, every file written and a command summary.
    pub fn manifest(mut self, command: CommandName, cfg: &RunConfig, summary: Value) -> Result<(), CliError> {
        let model = cfg.spec().ok().map(|s| serde_json::to_value(s).expect("model serializes"));
        let manifest = json!({
            "tool": "opspace",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command.as_str(),
            "config": cfg,
            "model": model,
            "tolerances": tolerances(),
            "outputs": self.files,
            "summary": summary,
        });
        let name = format!("{}.manifest.json", command.as_str());
        self.json(&name, &manifest)
    }
}

pub fn tolerances() -> Value {
    use opspace::{dynamics, lattice, spectral};
    json!({
        "cluster_relative": spectral::CLUSTER_TOLERANCE,
        "defect_rank_relative": spectral::DEFECT_TOLERANCE,
        "exceptional_condition_limit": spectral::EP_CONDITION_LIMIT,
        "cross_check_relative": dynamics::CROSS_CHECK_TOLERANCE,
        "secular_threshold_relative": dynamics::SECULAR_THRESHOLD,
        "density_validation": dynamics::DENSITY_TOLERANCE,
        "lattice_zero_relative": lattice::ZERO_TOLERANCE,
        "lattice_consistency_relative": lattice::CONSISTENCY_TOLERANCE,
    })
}
