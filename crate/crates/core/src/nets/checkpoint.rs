//! Binary tensor archive.
//!
//! Layout: one version byte, a little-endian `u32` header length, the UTF-8
//! header, then every tensor's `f32` payload (little-endian) in header order.
//! Header lines are either `@key=value` metadata or `name d0xd1x..`.

use super::tensor::Tensor;
use super::NetError;
use std::io::{Read, Write};

pub const CHECKPOINT_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Archive {
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

impl Archive {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn push_meta(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.meta.push((key.into(), value.into()));
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor<f32>) {
        self.tensors.push((name.into(), t));
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut header = String::new();
        for (k, v) in &self.meta {
            header.push_str(&format!("@{k}={v}\n"));
        }
        for (name, t) in &self.tensors {
            let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
            header.push_str(&format!("{name} {}\n", dims.join("x")));
        }
        let payload: usize = self.tensors.iter().map(|(_, t)| t.len() * 4).sum();
        let mut out = Vec::with_capacity(5 + header.len() + payload);
        out.push(CHECKPOINT_VERSION);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        for (_, t) in &self.tensors {
            for x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NetError> {
        let bad = |m: &str| NetError::Checkpoint(m.to_string());
        if bytes.len() < 5 {
            return Err(bad("file too short"));
        }
        if bytes[0] != CHECKPOINT_VERSION {
            return Err(NetError::Checkpoint(format!(
                "unsupported version {}",
                bytes[0]
            )));
        }
        let hlen = u32::from_le_bytes(bytes[1..5].try_into().unwrap()) as usize;
        let header = bytes
            .get(5..5 + hlen)
            .ok_or_else(|| bad("truncated header"))?;
        let header = std::str::from_utf8(header).map_err(|_| bad("header is not UTF-8"))?;
        let mut archive = Archive::default();
        let mut pos = 5 + hlen;
        for line in header.lines() {
            if let Some(rest) = line.strip_prefix('@') {
                let (k, v) = rest
                    .split_once('=')
                    .ok_or_else(|| bad("malformed metadata line"))?;
                archive.meta.push((k.to_string(), v.to_string()));
                continue;
            }
            let (name, dims) = line
                .rsplit_once(' ')
                .ok_or_else(|| bad("malformed tensor line"))?;
            let shape: Vec<usize> = dims
                .split('x')
                .map(|d| d.parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|_| bad("malformed tensor shape"))?;
            let n: usize = shape.iter().product();
            let raw = bytes
                .get(pos..pos + 4 * n)
                .ok_or_else(|| NetError::Checkpoint(format!("truncated payload for {name}")))?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            pos += 4 * n;
            archive
                .tensors
                .push((name.to_string(), Tensor::from_vec(shape, data)));
        }
        if pos != bytes.len() {
            return Err(bad("trailing bytes after payload"));
        }
        Ok(archive)
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(&self.to_bytes())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, NetError> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)
            .map_err(|e| NetError::Checkpoint(e.to_string()))?;
        Self::from_bytes(&buf)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), NetError> {
        // write-then-rename so readers never see a partial file
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes())
            .map_err(|e| NetError::Checkpoint(format!("{}: {e}", tmp.display())))?;
        std::fs::rename(&tmp, path)
            .map_err(|e| NetError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, NetError> {
        let bytes = std::fs::read(path)
            .map_err(|e| NetError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bytes_round_trip() {
        let mut a = Archive::default();
        a.push_meta("kind", "test");
        a.push(
            "w",
            Tensor::matrix(2, 2, vec![1.0, -0.5, f32::MIN_POSITIVE, 3.25]),
        );
        a.push("b", Tensor::row(vec![0.1]));
        let bytes = a.to_bytes();
        assert_eq!(bytes[0], CHECKPOINT_VERSION);
        let b = Archive::from_bytes(&bytes).unwrap();
        assert_eq!(a, b);
        assert_eq!(b.to_bytes(), bytes);
    }

    #[test]
    fn rejects_bad_version_and_truncation() {
        let mut a = Archive::default();
        a.push("w", Tensor::row(vec![1.0, 2.0]));
        let mut bytes = a.to_bytes();
        bytes.pop();
        assert!(Archive::from_bytes(&bytes).is_err());
        bytes[0] = 9;
        assert!(Archive::from_bytes(&bytes).is_err());
    }
}
