use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Version of every CSV layout written by the pipeline.
pub const SCHEMA_VERSION: u32 = 1;

/// The comment line that opens every output CSV.
pub fn header_line(kind: &str, seed: u64) -> String {
    format!("# gazenet {kind} schema={SCHEMA_VERSION} seed={seed}\n")
}

/// Files written under temporary names and renamed into place only on
/// [`OutputSet::commit`]. Dropping an uncommitted set removes them.
pub struct OutputSet {
    dir: PathBuf,
    pending: Vec<(PathBuf, PathBuf)>,
}

impl OutputSet {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(OutputSet {
            dir: dir.to_path_buf(),
            pending: Vec::new(),
        })
    }

    /// Writes `contents` to `relative` (inside the output directory).
    pub fn write(&mut self, relative: &str, contents: &[u8]) -> Result<()> {
        let target = self.dir.join(relative);
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut tmp = target.clone().into_os_string();
        tmp.push(".partial");
        let tmp = PathBuf::from(tmp);
        let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        self.pending.push((tmp.clone(), target));
        let mut w = BufWriter::new(file);
        w.write_all(contents)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(&tmp, e))?;
        Ok(())
    }

    /// Renames every pending file into place and returns the final paths.
    pub fn commit(mut self) -> Result<Vec<PathBuf>> {
        let mut done = Vec::new();
        for (tmp, target) in std::mem::take(&mut self.pending) {
            fs::rename(&tmp, &target).map_err(|e| Error::io(&target, e))?;
            done.push(target);
        }
        Ok(done)
    }
}

impl Drop for OutputSet {
    fn drop(&mut self) {
        for (tmp, _) in &self.pending {
            let _ = fs::remove_file(tmp);
        }
    }
}

/// CSV text with the schema header comment followed by the records.
pub fn csv_document(
    kind: &str,
    seed: u64,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<Vec<u8>> {
    let mut buf = header_line(kind, seed).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush().map_err(|e| Error::io("<buffer>", e))?;
    }
    Ok(buf)
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}
