//! Binary model files and their JSON sidecars.
//!
//! Layout (little-endian, no padding): `"CTSR"`, version u32, scale u32,
//! layer count u32, then per layer kernel_size, in_channels, out_filters,
//! pad, activation (u32 each), the weights as f32 in `(out, in, kh, kw)`
//! order and the biases as f32.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Activation, Layer, LayerSpec, Network, StageRecord};
use crate::error::{Error, Result};
use crate::tensor::Kernel;

pub const MODEL_MAGIC: [u8; 4] = *b"CTSR";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Sidecar {
    format_version: u32,
    scale: u32,
    depth: usize,
    param_count: usize,
    filters: Vec<usize>,
    layers: Vec<LayerSpec>,
    stage_history: Vec<StageRecord>,
}

/// `dir/stem.json` next to `dir/stem.ctsr`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// `dir/stem{suffix}.ext`, e.g. `model-d5.ctsr` for suffix `-d5`.
pub fn checkpoint_path(base: &Path, suffix: &str) -> PathBuf {
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into());
    let name = match base.extension() {
        Some(ext) => format!("{stem}{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}{suffix}"),
    };
    base.with_file_name(name)
}

impl Network {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * (self.param_count() + 64 * self.depth()));
        out.extend_from_slice(&MODEL_MAGIC);
        for v in [FORMAT_VERSION, self.scale, self.layers.len() as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for l in &self.layers {
            let s = &l.spec;
            for v in [s.kernel_size as u32, s.in_channels as u32, s.out_filters as u32, s.pad as u32, s.activation.code()] {
                out.extend_from_slice(&v.to_le_bytes());
            }
            for w in l.kernel.data().iter().chain(&l.bias) {
                out.extend_from_slice(&w.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Network> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != MODEL_MAGIC {
            let mut found = [0u8; 4];
            found.copy_from_slice(magic);
            return Err(Error::BadMagic { expected: MODEL_MAGIC, found });
        }
        let version = r.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch { expected: FORMAT_VERSION, found: version });
        }
        let scale = r.u32("scale")?;
        let count = r.u32("layer count")? as usize;
        let mut layers = Vec::with_capacity(count.min(1024));
        for i in 0..count {
            let kernel_size = r.u32("kernel_size")? as usize;
            let in_channels = r.u32("in_channels")? as usize;
            let out_filters = r.u32("out_filters")? as usize;
            let pad = r.u32("pad")? as usize;
            let activation = Activation::from_code(r.u32("activation")?)?;
            let spec = LayerSpec { kernel_size, in_channels, out_filters, pad, activation };
            spec.validate().map_err(|e| Error::Invariant(format!("layer {i}: {e}")))?;
            let weights = r.f32s(spec.weight_count(), "weights")?;
            let bias = r.f32s(out_filters, "biases")?;
            let kernel = Kernel::from_vec(out_filters, in_channels, kernel_size, weights)?;
            layers.push(Layer { spec, kernel, bias });
        }
        if r.pos != bytes.len() {
            return Err(Error::Invariant(format!("{} trailing bytes after last layer", bytes.len() - r.pos)));
        }
        Network::from_layers(layers, scale)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated(format!("{what} at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let b = self.take(n.checked_mul(4).ok_or_else(|| Error::Truncated(what.into()))?, what)?;
        Ok(b.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
    }
}

/// Writes the binary model and its JSON sidecar.
pub fn save_model(net: &Network, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(Error::at(dir))?;
    }
    fs::write(path, net.to_bytes()).map_err(Error::at(path))?;
    let sidecar = Sidecar {
        format_version: FORMAT_VERSION,
        scale: net.scale,
        depth: net.depth(),
        param_count: net.param_count(),
        filters: net.filter_counts(),
        layers: net.specs(),
        stage_history: net.history.clone(),
    };
    let side = sidecar_path(path);
    fs::write(&side, serde_json::to_string_pretty(&sidecar)? + "\n").map_err(Error::at(&side))?;
    Ok(())
}

/// Reads a binary model. Stage history comes from the sidecar when one is
/// present and agrees with the binary's layer specs.
pub fn load_model(path: &Path) -> Result<Network> {
    let bytes = fs::read(path).map_err(Error::at(path))?;
    let mut net = Network::from_bytes(&bytes)?;
    if let Ok(text) = fs::read_to_string(sidecar_path(path)) {
        match serde_json::from_str::<Sidecar>(&text) {
            Ok(side) if side.layers == net.specs() => net.set_history(side.stage_history),
            Ok(_) => log::warn!("{}: sidecar specs disagree with binary, history ignored", path.display()),
            Err(e) => log::warn!("{}: unreadable sidecar ({e}), history ignored", path.display()),
        }
    }
    Ok(net)
}
