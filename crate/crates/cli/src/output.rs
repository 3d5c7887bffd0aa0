//! Run-directory writers: results CSV, reproducibility manifest, run log.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nlnoise_core::spectral::PsdEstimate;

use crate::CliError;

pub struct RunDir {
    pub dir: PathBuf,
    log: BufWriter<File>,
}

impl RunDir {
    pub fn create(dir: &Path) -> Result<RunDir, CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Config(format!("--out {}: {e}", dir.display())))?;
        let log = BufWriter::new(
            File::create(dir.join("run.log"))
                .map_err(|e| CliError::Config(format!("run.log: {e}")))?,
        );
        Ok(RunDir { dir: dir.to_path_buf(), log })
    }

    pub fn log(&mut self, line: &str) {
        eprintln!("{line}");
        let _ = writeln!(self.log, "{line}");
    }

    pub fn log_file_only(&mut self, line: &str) {
        let _ = writeln!(self.log, "{line}");
    }

    /// Write a CSV table (UTF-8, LF, round-trip float formatting).
    pub fn write_csv(&self, name: &str, header: &str, rows: &[Vec<String>]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let mut f = BufWriter::new(
            File::create(&path).map_err(|e| CliError::Compute(format!("{name}: {e}")))?,
        );
        let io = |e: std::io::Error| CliError::Compute(format!("{name}: {e}"));
        writeln!(f, "{header}").map_err(io)?;
        for row in rows {
            writeln!(f, "{}", row.join(",")).map_err(io)?;
        }
        Ok(())
    }

    pub fn write_psd(&self, name: &str, psd: &PsdEstimate) -> Result<(), CliError> {
        let rows: Vec<Vec<String>> = psd
            .freqs
            .iter()
            .zip(&psd.values)
            .map(|(f, v)| vec![fmt(*f), fmt(*v)])
            .collect();
        self.write_csv(name, "freq_hz,psd", &rows)
    }

    /// Manifest with everything needed to reproduce the run bit-identically.
    pub fn write_manifest(
        &self,
        command: &str,
        tree: &toml::Table,
        seed: u64,
        jobs: usize,
        overrides: &[String],
    ) -> Result<(), CliError> {
        let manifest = serde_json::json!({
            "command": command,
            "seed": seed,
            "jobs": jobs,
            "overrides": overrides,
            "config": tree,
            "versions": {
                "nlnoise-cli": env!("CARGO_PKG_VERSION"),
                "nlnoise-core": nlnoise_core_version(),
            },
        });
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::Compute(format!("manifest: {e}")))?;
        std::fs::write(self.dir.join("manifest.json"), text + "\n")
            .map_err(|e| CliError::Compute(format!("manifest: {e}")))?;
        Ok(())
    }
}

fn nlnoise_core_version() -> &'static str {
    // Workspace-pinned; the cli and core versions move together.
    env!("CARGO_PKG_VERSION")
}

/// Shortest round-trip decimal form.
pub fn fmt(x: f64) -> String {
    format!("{x:e}")
}
