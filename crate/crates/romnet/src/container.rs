//! Versioned binary container for meshes, fields and trained artifacts.
//!
//! Layout: a fixed 16-byte magic, a `u32` format version, a `u64` array
//! count, then for each named array a small header followed by the raw
//! little-endian payload. A plain-text sidecar manifest (`<file>.manifest`)
//! lists the stored arrays so containers can be inspected without this
//! library. Files are written to a temporary path and renamed into place.

use crate::error::{Error, Result};
use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

pub const MAGIC: [u8; 16] = *b"ROMNET-CONTAINER";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum Array {
    F64 { shape: Vec<usize>, data: Vec<f64> },
    U64 { shape: Vec<usize>, data: Vec<u64> },
}

impl Array {
    fn len(&self) -> usize {
        match self {
            Array::F64 { data, .. } => data.len(),
            Array::U64 { data, .. } => data.len(),
        }
    }

    fn shape(&self) -> &[usize] {
        match self {
            Array::F64 { shape, .. } => shape,
            Array::U64 { shape, .. } => shape,
        }
    }

    fn dtype_tag(&self) -> u8 {
        match self {
            Array::F64 { .. } => 0,
            Array::U64 { .. } => 1,
        }
    }

    fn dtype_name(&self) -> &'static str {
        match self {
            Array::F64 { .. } => "f64le",
            Array::U64 { .. } => "u64le",
        }
    }
}

/// An ordered collection of named arrays.
#[derive(Debug, Default)]
pub struct Container {
    arrays: Vec<(String, Array)>,
    index: HashMap<String, usize>,
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.arrays.iter().map(|(n, _)| n.as_str())
    }

    pub fn push(&mut self, name: &str, array: Array) {
        if let Some(&i) = self.index.get(name) {
            self.arrays[i].1 = array;
        } else {
            self.index.insert(name.to_string(), self.arrays.len());
            self.arrays.push((name.to_string(), array));
        }
    }

    pub fn push_f64(&mut self, name: &str, shape: &[usize], data: Vec<f64>) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.push(
            name,
            Array::F64 {
                shape: shape.to_vec(),
                data,
            },
        );
    }

    pub fn push_u64(&mut self, name: &str, shape: &[usize], data: Vec<u64>) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.push(
            name,
            Array::U64 {
                shape: shape.to_vec(),
                data,
            },
        );
    }

    pub fn push_scalar(&mut self, name: &str, value: f64) {
        self.push_f64(name, &[1], vec![value]);
    }

    pub fn get(&self, name: &str) -> Result<&Array> {
        self.index
            .get(name)
            .map(|&i| &self.arrays[i].1)
            .ok_or_else(|| Error::InvalidInput(format!("container has no array `{name}`")))
    }

    pub fn f64(&self, name: &str) -> Result<(&[usize], &[f64])> {
        match self.get(name)? {
            Array::F64 { shape, data } => Ok((shape, data)),
            _ => Err(Error::InvalidInput(format!("array `{name}` is not f64"))),
        }
    }

    pub fn u64(&self, name: &str) -> Result<(&[usize], &[u64])> {
        match self.get(name)? {
            Array::U64 { shape, data } => Ok((shape, data)),
            _ => Err(Error::InvalidInput(format!("array `{name}` is not u64"))),
        }
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        let (_, data) = self.f64(name)?;
        data.first()
            .copied()
            .ok_or_else(|| Error::InvalidInput(format!("array `{name}` is empty")))
    }

    pub fn usizes(&self, name: &str) -> Result<Vec<usize>> {
        Ok(self.u64(name)?.1.iter().map(|&v| v as usize).collect())
    }

    fn manifest_path(path: &Path) -> PathBuf {
        let mut os = path.as_os_str().to_owned();
        os.push(".manifest");
        PathBuf::from(os)
    }

    /// Serializes the container and its manifest sidecar, atomically.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(&MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.arrays.len() as u64).to_le_bytes());
        for (name, array) in &self.arrays {
            let name_bytes = name.as_bytes();
            buf.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
            buf.extend_from_slice(name_bytes);
            buf.push(array.dtype_tag());
            let shape = array.shape();
            buf.push(shape.len() as u8);
            for &d in shape {
                buf.extend_from_slice(&(d as u64).to_le_bytes());
            }
            match array {
                Array::F64 { data, .. } => {
                    for v in data {
                        buf.extend_from_slice(&v.to_le_bytes());
                    }
                }
                Array::U64 { data, .. } => {
                    for v in data {
                        buf.extend_from_slice(&v.to_le_bytes());
                    }
                }
            }
        }

        let mut manifest = String::new();
        manifest.push_str(&format!("format romnet-container v{VERSION}\n"));
        manifest.push_str(&format!("arrays {}\n", self.arrays.len()));
        for (name, array) in &self.arrays {
            let dims: Vec<String> = array.shape().iter().map(|d| d.to_string()).collect();
            manifest.push_str(&format!(
                "{} {} [{}] {} values\n",
                name,
                array.dtype_name(),
                dims.join("x"),
                array.len()
            ));
        }

        write_atomic(path, &buf)?;
        write_atomic(&Self::manifest_path(path), manifest.as_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut file = std::fs::File::open(path)?;
        let mut buf = Vec::new();
        file.read_to_end(&mut buf)?;
        let mut cursor = 0usize;

        let take = |cursor: &mut usize, n: usize| -> Result<&[u8]> {
            if *cursor + n > buf.len() {
                return Err(Error::InvalidInput(format!(
                    "truncated container {}",
                    path.display()
                )));
            }
            let slice = &buf[*cursor..*cursor + n];
            *cursor += n;
            Ok(slice)
        };

        if take(&mut cursor, 16)? != MAGIC {
            return Err(Error::InvalidInput(format!(
                "{} is not a romnet container (bad magic)",
                path.display()
            )));
        }
        let version = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap());
        if version != VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported container version {version}"
            )));
        }
        let n_arrays = u64::from_le_bytes(take(&mut cursor, 8)?.try_into().unwrap()) as usize;

        let mut out = Container::new();
        for _ in 0..n_arrays {
            let name_len = u16::from_le_bytes(take(&mut cursor, 2)?.try_into().unwrap()) as usize;
            let name = String::from_utf8(take(&mut cursor, name_len)?.to_vec())
                .map_err(|_| Error::InvalidInput("non-utf8 array name".into()))?;
            let dtype = take(&mut cursor, 1)?[0];
            let ndim = take(&mut cursor, 1)?[0] as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(u64::from_le_bytes(take(&mut cursor, 8)?.try_into().unwrap()) as usize);
            }
            let count: usize = shape.iter().product();
            match dtype {
                0 => {
                    let raw = take(&mut cursor, count * 8)?;
                    let data = raw
                        .chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect();
                    out.push(&name, Array::F64 { shape, data });
                }
                1 => {
                    let raw = take(&mut cursor, count * 8)?;
                    let data = raw
                        .chunks_exact(8)
                        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
                        .collect();
                    out.push(&name, Array::U64 { shape, data });
                }
                other => {
                    return Err(Error::InvalidInput(format!("unknown dtype tag {other}")));
                }
            }
        }
        Ok(out)
    }
}

/// Write-then-rename so that readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .ok_or_else(|| Error::Io(std::io::Error::other("path has no parent")))?;
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".tmp.{}.{}",
        std::process::id(),
        path.file_name().unwrap_or_default().to_string_lossy()
    ));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}
