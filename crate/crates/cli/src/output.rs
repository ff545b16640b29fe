//! Output directory with atomic file writes.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use fracwave::spacegrid::Field2D;
use serde::Serialize;

pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: &Path) -> io::Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Writes `bytes` to a temporary sibling, then renames it into place.
    pub fn write_bytes(&self, name: &str, bytes: &[u8]) -> io::Result<PathBuf> {
        let target = self.path(name);
        let tmp = self.path(&format!(".{name}.tmp-{}", std::process::id()));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(bytes)?;
            f.sync_all()?;
        }
        if let Err(e) = fs::rename(&tmp, &target) {
            let _ = fs::remove_file(&tmp);
            return Err(e);
        }
        Ok(target)
    }

    pub fn write_text(&self, name: &str, text: &str) -> io::Result<PathBuf> {
        self.write_bytes(name, text.as_bytes())
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> io::Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
        text.push('\n');
        self.write_text(name, &text)
    }

    pub fn write_field(&self, name: &str, field: &Field2D) -> io::Result<PathBuf> {
        let mut buf = Vec::new();
        field.write_binary(&mut buf).map_err(io::Error::other)?;
        self.write_bytes(name, &buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_leaves_no_temporaries() {
        let dir = std::env::temp_dir().join(format!("fracwave-out-{}", std::process::id()));
        let out = OutputDir::create(&dir).unwrap();
        out.write_text("a.txt", "one").unwrap();
        out.write_text("a.txt", "two").unwrap();
        assert_eq!(fs::read_to_string(out.path("a.txt")).unwrap(), "two");
        let names: Vec<_> = fs::read_dir(&dir).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 1);
        fs::remove_dir_all(&dir).unwrap();
    }
}
