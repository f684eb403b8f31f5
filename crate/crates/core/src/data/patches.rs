//! LR/HR training pairs and their binary cache.
//!
//! Cache layout (little-endian): `"CTPD"`, version u32, count u32, LR
//! height and width u32, HR height and width u32, then all LR samples and
//! all HR samples as f32.

use std::fs;
use std::path::Path;

use super::bicubic::{crop_to_multiple, degrade};
use super::image::load_image;
use super::manifest::{DatasetManifest, PatchParams, Role};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::tensor::Tensor4;

pub const PATCH_MAGIC: [u8; 4] = *b"CTPD";
pub const PATCH_VERSION: u32 = 1;

/// Where a patch came from: image index in load order and LR window corner.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchSource {
    pub image: usize,
    pub y: usize,
    pub x: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatchSet {
    lr_size: usize,
    hr_size: usize,
    lr: Vec<f32>,
    hr: Vec<f32>,
    sources: Vec<PatchSource>,
}

impl PatchSet {
    pub fn empty(lr_size: usize, hr_size: usize) -> Self {
        PatchSet { lr_size, hr_size, lr: Vec::new(), hr: Vec::new(), sources: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn lr_size(&self) -> usize {
        self.lr_size
    }

    pub fn hr_size(&self) -> usize {
        self.hr_size
    }

    pub fn sources(&self) -> &[PatchSource] {
        &self.sources
    }

    pub fn lr_patch(&self, i: usize) -> &[f32] {
        let n = self.lr_size * self.lr_size;
        &self.lr[i * n..(i + 1) * n]
    }

    pub fn hr_patch(&self, i: usize) -> &[f32] {
        let n = self.hr_size * self.hr_size;
        &self.hr[i * n..(i + 1) * n]
    }

    /// Stacks the listed pairs into `(LR, HR)` batch tensors.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor4, Tensor4)> {
        if indices.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let mut lr = Vec::with_capacity(indices.len() * self.lr_size * self.lr_size);
        let mut hr = Vec::with_capacity(indices.len() * self.hr_size * self.hr_size);
        for &i in indices {
            lr.extend_from_slice(self.lr_patch(i));
            hr.extend_from_slice(self.hr_patch(i));
        }
        Ok((
            Tensor4::from_vec(indices.len(), 1, self.lr_size, self.lr_size, lr)?,
            Tensor4::from_vec(indices.len(), 1, self.hr_size, self.hr_size, hr)?,
        ))
    }

    /// Appends `other`, renumbering its image indices after ours.
    pub fn extend(&mut self, other: PatchSet) -> Result<()> {
        if (other.lr_size, other.hr_size) != (self.lr_size, self.hr_size) {
            return Err(Error::dims("PatchSet::extend", "lr_size", self.lr_size, "other.lr_size", other.lr_size));
        }
        let shift = self.sources.iter().map(|s| s.image + 1).max().unwrap_or(0);
        self.lr.extend(other.lr);
        self.hr.extend(other.hr);
        self.sources.extend(other.sources.into_iter().map(|s| PatchSource { image: s.image + shift, ..s }));
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(28 + 4 * (self.lr.len() + self.hr.len()));
        out.extend_from_slice(&PATCH_MAGIC);
        for v in [PATCH_VERSION, self.len() as u32, self.lr_size as u32, self.lr_size as u32, self.hr_size as u32, self.hr_size as u32]
        {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in self.lr.iter().chain(&self.hr) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Decodes a cache. Provenance is not stored, so every patch reports
    /// image 0 at the origin.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 28 {
            return Err(Error::Truncated("patch cache header".into()));
        }
        if bytes[..4] != PATCH_MAGIC {
            let mut found = [0u8; 4];
            found.copy_from_slice(&bytes[..4]);
            return Err(Error::BadMagic { expected: PATCH_MAGIC, found });
        }
        let word = |i: usize| u32::from_le_bytes([bytes[4 * i], bytes[4 * i + 1], bytes[4 * i + 2], bytes[4 * i + 3]]) as usize;
        if word(1) != PATCH_VERSION as usize {
            return Err(Error::VersionMismatch { expected: PATCH_VERSION, found: word(1) as u32 });
        }
        let (n, lh, lw, hh, hw) = (word(2), word(3), word(4), word(5), word(6));
        if lh != lw || hh != hw {
            return Err(Error::Invariant("patch cache holds non-square patches".into()));
        }
        let lr_len = n * lh * lw;
        let hr_len = n * hh * hw;
        let payload = &bytes[28..];
        if payload.len() != 4 * (lr_len + hr_len) {
            return Err(Error::Truncated(format!("patch payload has {} bytes, expected {}", payload.len(), 4 * (lr_len + hr_len))));
        }
        let floats: Vec<f32> = payload.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        let (lr, hr) = floats.split_at(lr_len);
        Ok(PatchSet {
            lr_size: lh,
            hr_size: hh,
            lr: lr.to_vec(),
            hr: hr.to_vec(),
            sources: vec![PatchSource { image: 0, y: 0, x: 0 }; n],
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(Error::at(dir))?;
        }
        fs::write(path, self.to_bytes()).map_err(Error::at(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path).map_err(Error::at(path))?)
    }

    /// Patches of every image with the given role, in manifest order.
    /// Images that cannot be read are errors; images too small for one
    /// patch are skipped and reported in the returned warnings.
    pub fn from_manifest(manifest: &DatasetManifest, role: Role, exec: Exec) -> Result<(PatchSet, Vec<String>)> {
        let paths: Vec<&Path> = manifest.paths(role).collect();
        let results = exec.map(paths.len(), |i| -> Result<Result<PatchSet>> {
            let img = load_image(paths[i])?;
            Ok(extract_patches(&img, manifest.scale as usize, &manifest.patch))
        });
        let mut set = PatchSet::empty(manifest.patch.lr_size, manifest.patch.hr_size);
        let mut warnings = Vec::new();
        for (i, r) in results.into_iter().enumerate() {
            match r? {
                Ok(mut p) => {
                    p.sources.iter_mut().for_each(|s| s.image = i);
                    set.lr.extend(p.lr);
                    set.hr.extend(p.hr);
                    set.sources.extend(p.sources);
                }
                Err(e) => warnings.push(format!("{}: skipped ({e})", paths[i].display())),
            }
        }
        Ok((set, warnings))
    }
}

/// Cuts LR/HR pairs from one HR image on a `stride` grid. LR windows come
/// from the bicubic-degraded image; each HR target is the centered
/// `hr_size` window of the original at the same location.
pub fn extract_patches(hr_image: &Tensor4, scale: usize, params: &PatchParams) -> Result<PatchSet> {
    params.validate()?;
    let hr = crop_to_multiple(hr_image, scale)?;
    if hr.h() < params.lr_size || hr.w() < params.lr_size {
        return Err(Error::InvalidArgument(format!(
            "image {}x{} smaller than one {}x{} patch",
            hr.h(),
            hr.w(),
            params.lr_size,
            params.lr_size
        )));
    }
    let lr = degrade(&hr, scale)?;
    let off = params.offset();
    let mut set = PatchSet::empty(params.lr_size, params.hr_size);
    let mut y = 0;
    while y + params.lr_size <= hr.h() {
        let mut x = 0;
        while x + params.lr_size <= hr.w() {
            set.lr.extend_from_slice(lr.crop(y, x, params.lr_size, params.lr_size)?.data());
            set.hr.extend_from_slice(hr.crop(y + off, x + off, params.hr_size, params.hr_size)?.data());
            set.sources.push(PatchSource { image: 0, y, x });
            x += params.stride;
        }
        y += params.stride;
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;

    fn random_image(h: usize, w: usize, seed: u64) -> Tensor4 {
        let mut rng = RngState::new(seed);
        Tensor4::image(h, w, (0..h * w).map(|_| rng.uniform() as f32).collect()).unwrap()
    }

    #[test]
    fn grid_count() {
        let set = extract_patches(&random_image(66, 66, 1), 2, &PatchParams::default()).unwrap();
        assert_eq!(set.len(), 4);
        assert_eq!(set.sources()[3], PatchSource { image: 0, y: 33, x: 33 });
    }

    #[test]
    fn hr_window_is_centered() {
        let img = random_image(66, 66, 2);
        let set = extract_patches(&img, 2, &PatchParams::default()).unwrap();
        // HR center (8, 8) maps to LR center (16, 16) = original pixel (16, 16)
        let hr = set.hr_patch(1);
        assert_eq!(hr[8 * 17 + 8], img.get(0, 0, 16, 33 + 16));
        assert_eq!(hr[0], img.get(0, 0, 8, 33 + 8));
    }

    #[test]
    fn too_small_is_an_error() {
        assert!(extract_patches(&random_image(32, 40, 3), 2, &PatchParams::default()).is_err());
    }

    #[test]
    fn cache_round_trip() {
        let set = extract_patches(&random_image(70, 40, 4), 2, &PatchParams::default()).unwrap();
        let bytes = set.to_bytes();
        let back = PatchSet::from_bytes(&bytes).unwrap();
        assert_eq!(back.len(), set.len());
        assert_eq!(back.to_bytes(), bytes);
        let mut bad = bytes.clone();
        bad[1] = b'X';
        assert!(matches!(PatchSet::from_bytes(&bad), Err(Error::BadMagic { .. })));
        assert!(matches!(PatchSet::from_bytes(&bytes[..bytes.len() - 1]), Err(Error::Truncated(_))));
    }

    #[test]
    fn batch_stacks_pairs() {
        let set = extract_patches(&random_image(66, 66, 5), 2, &PatchParams::default()).unwrap();
        let (lr, hr) = set.batch(&[2, 0]).unwrap();
        assert_eq!(lr.dims(), (2, 1, 33, 33));
        assert_eq!(hr.dims(), (2, 1, 17, 17));
        assert_eq!(lr.sample(0), set.lr_patch(2));
        assert!(set.lr.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
