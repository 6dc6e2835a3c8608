//! Versioned little-endian checkpoint files.
//!
//! Layout:
//!
//! ```text
//! magic     8 bytes  "PRISCKPT"
//! version   u32
//! model     u32 x 6  image channels, blocks, subnet growth, subnet layers,
//!                    enhancer growth, enhancer layers
//! flags     u8 x 4   pre enhance, post enhance, domain, step reached
//! init seed u64
//! sets      u32 count, then per set: u16 length + UTF-8 label
//! tensors   u32 count, then per tensor: u16 length + UTF-8 name, u8 group,
//!                    u32 x 4 shape (n, c, h, w), f32 x numel
//! ```
//!
//! Enhancer sets are namespaced in tensor names (`enhance.<label>.pre...`).

use std::io::{Cursor, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use pris_core::enhance::Domain;
use pris_core::inn::DenseConfig;
use pris_core::model::{ModelConfig, PrisModel, DEFAULT_SET};
use pris_core::params::{Group, ParamId};
use pris_core::{Shape, Tensor};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MAGIC: &[u8; 8] = b"PRISCKPT";
pub const VERSION: u32 = 1;

fn group_code(g: Group) -> u8 {
    match g {
        Group::Inn => 0,
        Group::PreEnhance => 1,
        Group::PostEnhance => 2,
    }
}

fn write_str(out: &mut Vec<u8>, s: &str) {
    out.write_u16::<LE>(s.len() as u16).unwrap();
    out.extend_from_slice(s.as_bytes());
}

pub fn to_bytes(model: &PrisModel) -> Vec<u8> {
    let cfg = model.config();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    // writes into a Vec cannot fail
    out.write_u32::<LE>(VERSION).unwrap();
    for v in [
        cfg.image_channels,
        cfg.blocks,
        cfg.subnet.growth,
        cfg.subnet.hidden_layers,
        cfg.enhancer.growth,
        cfg.enhancer.hidden_layers,
    ] {
        out.write_u32::<LE>(v as u32).unwrap();
    }
    let domain = match cfg.domain {
        Domain::Spatial => 0,
        Domain::Frequency => 1,
    };
    out.extend_from_slice(&[cfg.pre_enhance as u8, cfg.post_enhance as u8, domain, model.step_reached]);
    out.write_u64::<LE>(model.init_seed()).unwrap();

    let sets: Vec<&str> = model.enhancer_labels().collect();
    out.write_u32::<LE>(sets.len() as u32).unwrap();
    for s in sets {
        write_str(&mut out, s);
    }
    let entries = model.params().entries();
    out.write_u32::<LE>(entries.len() as u32).unwrap();
    for e in entries {
        write_str(&mut out, &e.name);
        out.push(group_code(e.group));
        let s = e.value.shape();
        for d in [s.n, s.c, s.h, s.w] {
            out.write_u32::<LE>(d as u32).unwrap();
        }
        for &v in e.value.data() {
            out.write_f32::<LE>(v).unwrap();
        }
    }
    out
}

fn bad(msg: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("invalid checkpoint: {msg}"))
}

struct Reader<'a>(Cursor<&'a [u8]>);

impl Reader<'_> {
    fn u8(&mut self) -> CliResult<u8> {
        self.0.read_u8().map_err(|_| bad("truncated"))
    }
    fn u16(&mut self) -> CliResult<u16> {
        self.0.read_u16::<LE>().map_err(|_| bad("truncated"))
    }
    fn u32(&mut self) -> CliResult<u32> {
        self.0.read_u32::<LE>().map_err(|_| bad("truncated"))
    }
    fn u64(&mut self) -> CliResult<u64> {
        self.0.read_u64::<LE>().map_err(|_| bad("truncated"))
    }
    fn flag(&mut self, what: &str) -> CliResult<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(bad(format!("{what} flag is {v}"))),
        }
    }
    fn string(&mut self) -> CliResult<String> {
        let n = self.u16()? as usize;
        let mut buf = vec![0u8; n];
        self.0.read_exact(&mut buf).map_err(|_| bad("truncated"))?;
        String::from_utf8(buf).map_err(|_| bad("name is not UTF-8"))
    }
    fn f32s(&mut self, n: usize) -> CliResult<Vec<f32>> {
        let left = self.0.get_ref().len() - self.0.position() as usize;
        if n.checked_mul(4).is_none_or(|b| b > left) {
            return Err(bad("truncated tensor data"));
        }
        let mut v = vec![0f32; n];
        self.0.read_f32_into::<LE>(&mut v).map_err(|_| bad("truncated"))?;
        Ok(v)
    }
}

pub fn from_bytes(bytes: &[u8]) -> CliResult<PrisModel> {
    let mut r = Reader(Cursor::new(bytes));
    let mut magic = [0u8; 8];
    r.0.read_exact(&mut magic).map_err(|_| bad("truncated"))?;
    if &magic != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version} (expected {VERSION})")));
    }
    let mut dims = [0usize; 6];
    for d in &mut dims {
        *d = r.u32()? as usize;
    }
    let pre_enhance = r.flag("pre enhance")?;
    let post_enhance = r.flag("post enhance")?;
    let domain = match r.u8()? {
        0 => Domain::Spatial,
        1 => Domain::Frequency,
        v => return Err(bad(format!("domain code {v}"))),
    };
    let step = r.u8()?;
    if step > 3 {
        return Err(bad(format!("step {step}")));
    }
    let init_seed = r.u64()?;
    let config = ModelConfig {
        image_channels: dims[0],
        blocks: dims[1],
        subnet: DenseConfig { growth: dims[2], hidden_layers: dims[3] },
        enhancer: DenseConfig { growth: dims[4], hidden_layers: dims[5] },
        pre_enhance,
        post_enhance,
        domain,
    };
    config.validate().map_err(bad)?;
    let mut model = PrisModel::new(config, init_seed).map_err(bad)?;
    model.step_reached = step;

    let n_sets = r.u32()?;
    for i in 0..n_sets {
        let label = r.string()?;
        if i == 0 && label == DEFAULT_SET {
            continue;
        }
        model.add_enhancer_set(&label, None).map_err(bad)?;
    }
    let expected = model.params().len();
    let n_tensors = r.u32()? as usize;
    if n_tensors != expected {
        return Err(bad(format!("{n_tensors} tensors, the model has {expected}")));
    }
    for i in 0..n_tensors {
        let name = r.string()?;
        let group = r.u8()?;
        let mut d = [0usize; 4];
        for v in &mut d {
            *v = r.u32()? as usize;
        }
        let entry = model.params().entry(ParamId(i));
        if entry.name != name {
            return Err(bad(format!("tensor {i} is {name:?}, expected {:?}", entry.name)));
        }
        if group_code(entry.group) != group {
            return Err(bad(format!("{name}: group code {group}")));
        }
        let shape = Shape::new(d[0], d[1], d[2], d[3]);
        if shape != entry.value.shape() {
            return Err(bad(format!("{name}: shape {:?}, expected {:?}", shape, entry.value.shape())));
        }
        let data = r.f32s(shape.numel())?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(bad(format!("{name}: non-finite weights")));
        }
        model.params_mut().assign(&name, Tensor::from_vec(shape, data).map_err(bad)?).map_err(bad)?;
    }
    if (r.0.position() as usize) != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    Ok(model)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Write `model` and return the file's SHA-256.
pub fn save(path: &Path, model: &PrisModel) -> CliResult<String> {
    let bytes = to_bytes(model);
    let mut f = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(&bytes).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Load a model and the SHA-256 of its file.
pub fn load(path: &Path) -> CliResult<(PrisModel, String)> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Data(format!("cannot read model {}: {e}", path.display())))?;
    let model = from_bytes(&bytes).map_err(|e| match e {
        CliError::Data(m) => CliError::Data(format!("{}: {m}", path.display())),
        other => other,
    })?;
    Ok((model, sha256_hex(&bytes)))
}

/// `{base}.{attack}.ckpt`, where `base` is `model` without its `.ckpt`
/// extension.
pub fn per_attack_path(model: &Path, attack: &str) -> PathBuf {
    let base = if model.extension().is_some_and(|e| e == "ckpt") {
        model.with_extension("")
    } else {
        model.to_path_buf()
    };
    let mut name = base.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(format!(".{attack}.ckpt"));
    base.with_file_name(name)
}
