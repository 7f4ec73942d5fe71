use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::time::Duration;

use refocus_core::clock::rfc3339;
use refocus_core::Clock;

/// Appends one line per stage: counts, skip-list paths and wall time.
pub struct RunLog {
    path: PathBuf,
    clock: Clock,
}

impl RunLog {
    pub fn new(path: PathBuf, clock: Clock) -> Self {
        Self { path, clock }
    }

    pub fn record(&self, stage: &str, fields: &[(&str, String)], wall: Duration) {
        let mut line = format!("{} stage={stage}", rfc3339(&self.clock.now()));
        for (k, v) in fields {
            line.push_str(&format!(" {k}={v}"));
        }
        line.push_str(&format!(" wall_ms={}\n", wall.as_millis()));
        log::info!("{}", line.trim_end());
        let written = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .and_then(|mut f| f.write_all(line.as_bytes()));
        if let Err(e) = written {
            log::warn!("could not append to {}: {e}", self.path.display());
        }
    }
}
