//! Checkpoint format: magic `DCASA1`, version u16 LE, entry count u32 LE,
//! then `(name, dtype, shape, little-endian raw data)` records. Optimizer
//! state rides along as `opt.m.*` / `opt.v.*` entries plus `opt.step`;
//! loaders that only want model weights skip the `opt.` namespace.

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use dcasa_core::optim::{AdamConfig, AdamState};
use dcasa_core::params::ParamSet;
use dcasa_core::tensor::{Dtype, Scalar, Tensor};

use crate::error::{Error, Result};

const MAGIC: &[u8; 6] = b"DCASA1";
const VERSION: u16 = 1;

fn push_entry<T: Scalar>(out: &mut Vec<u8>, name: &str, tensor: &Tensor<T>) {
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(T::DTYPE.code());
    out.push(tensor.ndim() as u8);
    for &d in tensor.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    match T::DTYPE {
        Dtype::F32 => {
            for &v in tensor.data() {
                out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
            }
        }
        Dtype::F64 => {
            for &v in tensor.data() {
                out.extend_from_slice(&v.as_f64().to_le_bytes());
            }
        }
    }
}

pub fn save<T: Scalar>(
    path: &Path,
    params: &ParamSet<T>,
    state: Option<&AdamState<T>>,
) -> Result<()> {
    let mut entries: Vec<(String, &Tensor<T>)> = Vec::new();
    for p in params.iter() {
        entries.push((p.name.clone(), &p.value));
    }
    let step_tensor;
    if let Some(state) = state {
        for (p, m) in params.iter().zip(state.m.iter()) {
            entries.push((format!("opt.m.{}", p.name), m));
        }
        for (p, v) in params.iter().zip(state.v.iter()) {
            entries.push((format!("opt.v.{}", p.name), v));
        }
        step_tensor = Tensor::scalar(T::cast(state.step as f64));
        entries.push(("opt.step".to_string(), &step_tensor));
    }
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, tensor) in &entries {
        push_entry(&mut out, name, tensor);
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

struct RawEntry {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn read_entries(path: &Path) -> Result<Vec<RawEntry>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let fail = |detail: String| Error::format(path, detail);
    let mut cur = Cursor::new(&bytes);
    let mut magic = [0u8; 6];
    cur.read_exact(&mut magic)
        .map_err(|_| fail("truncated header".into()))?;
    if &magic != MAGIC {
        return Err(fail("bad magic; not a checkpoint".into()));
    }
    let mut u16b = [0u8; 2];
    cur.read_exact(&mut u16b)
        .map_err(|_| fail("truncated version".into()))?;
    let version = u16::from_le_bytes(u16b);
    if version != VERSION {
        return Err(fail(format!("unsupported version {version}")));
    }
    let mut u32b = [0u8; 4];
    cur.read_exact(&mut u32b)
        .map_err(|_| fail("truncated entry count".into()))?;
    let count = u32::from_le_bytes(u32b);
    let mut entries = Vec::with_capacity(count as usize);
    for i in 0..count {
        let trunc = || fail(format!("truncated in entry {i}"));
        let mut u16b = [0u8; 2];
        cur.read_exact(&mut u16b).map_err(|_| trunc())?;
        let name_len = u16::from_le_bytes(u16b) as usize;
        let mut name = vec![0u8; name_len];
        cur.read_exact(&mut name).map_err(|_| trunc())?;
        let name = String::from_utf8(name)
            .map_err(|_| fail(format!("entry {i}: name is not UTF-8")))?;
        let mut b = [0u8; 1];
        cur.read_exact(&mut b).map_err(|_| trunc())?;
        let dtype = Dtype::from_code(b[0])
            .ok_or_else(|| fail(format!("entry '{name}': unknown dtype {}", b[0])))?;
        cur.read_exact(&mut b).map_err(|_| trunc())?;
        let ndim = b[0] as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            let mut u32b = [0u8; 4];
            cur.read_exact(&mut u32b).map_err(|_| trunc())?;
            shape.push(u32::from_le_bytes(u32b) as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        match dtype {
            Dtype::F32 => {
                let mut buf = [0u8; 4];
                for _ in 0..numel {
                    cur.read_exact(&mut buf).map_err(|_| trunc())?;
                    data.push(f32::from_le_bytes(buf) as f64);
                }
            }
            Dtype::F64 => {
                let mut buf = [0u8; 8];
                for _ in 0..numel {
                    cur.read_exact(&mut buf).map_err(|_| trunc())?;
                    data.push(f64::from_le_bytes(buf));
                }
            }
        }
        entries.push(RawEntry { name, shape, data });
    }
    Ok(entries)
}

/// Loads weights (and optimizer state when present) into a parameter set of
/// the expected architecture. Every model parameter must be present with an
/// identical shape; the first mismatch is named.
pub fn load<T: Scalar>(
    path: &Path,
    params: &mut ParamSet<T>,
    adam_cfg: AdamConfig,
) -> Result<Option<AdamState<T>>> {
    let entries = read_entries(path)?;
    let by_name: std::collections::BTreeMap<&str, &RawEntry> =
        entries.iter().map(|e| (e.name.as_str(), e)).collect();
    let to_tensor = |e: &RawEntry| -> Tensor<T> {
        Tensor::from_vec(&e.shape, e.data.iter().map(|&v| T::cast(v)).collect())
            .expect("shape/data consistent by construction")
    };
    let names: Vec<String> = params.iter().map(|p| p.name.clone()).collect();
    for (idx, name) in names.iter().enumerate() {
        let entry = by_name.get(name.as_str()).ok_or_else(|| {
            Error::format(path, format!("missing parameter '{name}'"))
        })?;
        if entry.shape != params.get(idx).value.shape() {
            return Err(Error::format(
                path,
                format!(
                    "parameter '{name}': checkpoint shape {:?}, architecture wants {:?}",
                    entry.shape,
                    params.get(idx).value.shape()
                ),
            ));
        }
        params.set_value(idx, to_tensor(entry))?;
    }
    if by_name.contains_key("opt.step") {
        let mut state = AdamState::new(params, adam_cfg);
        state.step = by_name["opt.step"].data[0] as u64;
        for (idx, name) in names.iter().enumerate() {
            let m = by_name
                .get(format!("opt.m.{name}").as_str())
                .ok_or_else(|| Error::format(path, format!("missing opt.m.{name}")))?;
            let v = by_name
                .get(format!("opt.v.{name}").as_str())
                .ok_or_else(|| Error::format(path, format!("missing opt.v.{name}")))?;
            state.m[idx] = to_tensor(m);
            state.v[idx] = to_tensor(v);
        }
        Ok(Some(state))
    } else {
        Ok(None)
    }
}
