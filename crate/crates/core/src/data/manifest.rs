use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageEntry {
    pub path: PathBuf,
    pub role: Role,
}

/// Patch geometry: LR window size, grid stride and the centered HR window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchParams {
    pub lr_size: usize,
    pub stride: usize,
    pub hr_size: usize,
}

impl Default for PatchParams {
    fn default() -> Self {
        PatchParams { lr_size: 33, stride: 33, hr_size: 17 }
    }
}

impl PatchParams {
    pub fn validate(&self) -> Result<()> {
        if self.lr_size == 0 || self.stride == 0 || self.hr_size == 0 {
            return Err(Error::InvalidArgument("patch sizes and stride must be positive".into()));
        }
        if self.hr_size > self.lr_size || (self.lr_size - self.hr_size) % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "HR window {} must be centered inside LR window {}",
                self.hr_size, self.lr_size
            )));
        }
        Ok(())
    }

    /// HR window offset from the LR window corner.
    pub fn offset(&self) -> usize {
        (self.lr_size - self.hr_size) / 2
    }
}

fn default_scale() -> u32 {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub images: Vec<ImageEntry>,
    #[serde(default = "default_scale")]
    pub scale: u32,
    #[serde(default)]
    pub patch: PatchParams,
}

impl DatasetManifest {
    /// Reads a manifest; relative image paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(Error::at(path))?;
        let mut m: DatasetManifest = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for e in &mut m.images {
            if e.path.is_relative() {
                e.path = base.join(&e.path);
            }
        }
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=4).contains(&self.scale) {
            return Err(Error::InvalidArgument(format!("scale {} not in 2..=4", self.scale)));
        }
        self.patch.validate()
    }

    pub fn paths(&self, role: Role) -> impl Iterator<Item = &Path> {
        self.images.iter().filter(move |e| e.role == role).map(|e| e.path.as_path())
    }

    /// Paths of the given role that do not exist on disk.
    pub fn missing(&self) -> Vec<&Path> {
        self.images.iter().map(|e| e.path.as_path()).filter(|p| !p.exists()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_resolves() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        fs::write(&p, r#"{"images":[{"path":"a.pgm","role":"train"},{"path":"/abs/b.pgm","role":"test"}],"scale":3}"#)
            .unwrap();
        let m = DatasetManifest::load(&p).unwrap();
        assert_eq!(m.scale, 3);
        assert_eq!(m.patch, PatchParams::default());
        assert_eq!(m.paths(Role::Train).next().unwrap(), dir.path().join("a.pgm"));
        assert_eq!(m.paths(Role::Test).next().unwrap(), Path::new("/abs/b.pgm"));
        assert_eq!(m.missing().len(), 2);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_geometry() {
        assert!(serde_json::from_str::<DatasetManifest>(r#"{"images":[],"colour":true}"#).is_err());
        let bad = PatchParams { lr_size: 33, stride: 33, hr_size: 16 };
        assert!(bad.validate().is_err());
        assert_eq!(PatchParams::default().offset(), 8);
    }
}
