use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Writes through a sibling temporary file and a rename, so readers never
/// observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| CliError::io(tmp.display(), e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path.display(), e))
}

pub fn read_file(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path.display(), e))
}

/// `<file>.manifest.txt` next to a single-file output.
pub fn sidecar_manifest(out: &Path) -> PathBuf {
    let mut p = out.as_os_str().to_owned();
    p.push(".manifest.txt");
    PathBuf::from(p)
}

/// Run record as `key: value` lines, in insertion order.
#[derive(Debug)]
pub struct Manifest {
    entries: Vec<(String, String)>,
    started: Instant,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        let mut m = Self {
            entries: Vec::new(),
            started: Instant::now(),
        };
        m.set("command", command);
        m
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.push((key.to_owned(), value.to_string()));
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k}: {v}\n"))
            .collect()
    }

    /// Stamps the elapsed wall-clock time and writes the manifest.
    pub fn finish(mut self, path: &Path) -> CliResult<()> {
        let secs = self.started.elapsed().as_secs_f64();
        self.set("wall_clock_s", format!("{secs:.3}"));
        write_atomic(path, self.to_text().as_bytes())
    }
}

/// Binary greyscale PGM (P5, maxval 255) from intensities in `[0, 1]`.
pub fn encode_pgm(width: usize, height: usize, pixels: &[f64]) -> Vec<u8> {
    assert_eq!(pixels.len(), width * height, "pixel count");
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(
        pixels
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}
