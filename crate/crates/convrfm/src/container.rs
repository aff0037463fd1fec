//! Binary artifact containers.
//!
//! Every on-disk artifact shares one envelope: a 16-byte header — 4-byte ASCII
//! magic, `version: u32`, a format-specific `count: u32`, and a format-specific
//! `extra: u32`, all little-endian — followed by a format-specific body whose
//! numeric payload is little-endian `f64`. Readers validate the magic, the
//! version, every declared extent, and reject trailing bytes, reporting the
//! byte offset of the first problem.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;


pub const CONTAINER_VERSION: u32 = 1;

/// Upper bound on any single declared extent; guards allocation on corrupt
/// headers.
const MAX_EXTENT: u64 = 1 << 24;

// ---------------------------------------------------------------------------
// Low-level reader/writer with offset tracking
// ---------------------------------------------------------------------------

pub(crate) struct ContainerReader<R> {
    inner: R,
    path: String,
    offset: u64,
}

impl ContainerReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(Self {
            inner: BufReader::new(file),
            path: path.display().to_string(),
            offset: 0,
        })
    }
}

impl<R: Read> ContainerReader<R> {
    pub fn offset(&self) -> u64 {
        self.offset
    }

    pub fn fail(&self, message: impl Into<String>) -> Error {
        Error::format(self.path.clone(), self.offset, message)
    }

    pub fn read_bytes(&mut self, buf: &mut [u8]) -> Result<()> {
        let mut filled = 0;
        while filled < buf.len() {
            match self.inner.read(&mut buf[filled..]) {
                // Advance past what did arrive so the error names the exact
                // byte where the file ran out.
                Ok(0) => {
                    self.offset += filled as u64;
                    return Err(self.fail(format!(
                        "unexpected end of file ({} more bytes wanted)",
                        buf.len() - filled
                    )));
                }
                Ok(k) => filled += k,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(Error::io(self.path.clone(), e)),
            }
        }
        self.offset += buf.len() as u64;
        Ok(())
    }

    pub fn read_u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.read_bytes(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    pub fn read_u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.read_bytes(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }

    pub fn read_f64(&mut self) -> Result<f64> {
        let mut b = [0u8; 8];
        self.read_bytes(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }

    /// Reads `n` little-endian `f64` values converted to `T`.
    pub fn read_f64_vec<T: Scalar>(&mut self, n: usize) -> Result<Vec<T>> {
        let mut out = Vec::with_capacity(n);
        let mut buf = vec![0u8; 8 * 4096];
        let mut remaining = n;
        while remaining > 0 {
            let take = remaining.min(4096);
            let bytes = &mut buf[..8 * take];
            self.read_bytes(bytes)?;
            for chunk in bytes.chunks_exact(8) {
                let v = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
                out.push(T::from_f64(v));
            }
            remaining -= take;
        }
        Ok(out)
    }

    pub fn read_u32_vec(&mut self, n: usize) -> Result<Vec<u32>> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(self.read_u32()?);
        }
        Ok(out)
    }

    /// Validates the 16-byte envelope; returns `(count, extra)`.
    pub fn read_header(&mut self, magic: [u8; 4]) -> Result<(u32, u32)> {
        let mut got = [0u8; 4];
        self.inner
            .read_exact(&mut got)
            .map_err(|_| self.fail("file shorter than header"))?;
        if got != magic {
            return Err(self.fail(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&got),
                String::from_utf8_lossy(&magic)
            )));
        }
        self.offset += 4;
        let version = self.read_u32()?;
        if version != CONTAINER_VERSION {
            return Err(self.fail(format!(
                "unsupported version {version}, expected {CONTAINER_VERSION}"
            )));
        }
        let count = self.read_u32()?;
        let extra = self.read_u32()?;
        Ok((count, extra))
    }

    pub fn check_extent(&self, name: &str, value: u64) -> Result<u64> {
        if value == 0 || value > MAX_EXTENT {
            Err(self.fail(format!("implausible {name} extent {value}")))
        } else {
            Ok(value)
        }
    }

    pub fn expect_eof(&mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        match self.inner.read(&mut probe) {
            Ok(0) => Ok(()),
            Ok(_) => Err(self.fail("trailing bytes after payload")),
            Err(e) => Err(Error::io(self.path.clone(), e)),
        }
    }
}

pub(crate) struct ContainerWriter {
    inner: BufWriter<File>,
    path: String,
}

impl ContainerWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(Self {
            inner: BufWriter::new(file),
            path: path.display().to_string(),
        })
    }

    fn io_err(&self, e: std::io::Error) -> Error {
        Error::io(self.path.clone(), e)
    }

    pub fn write_bytes(&mut self, bytes: &[u8]) -> Result<()> {
        self.inner.write_all(bytes).map_err(|e| self.io_err(e))
    }

    pub fn write_u32(&mut self, v: u32) -> Result<()> {
        self.write_bytes(&v.to_le_bytes())
    }

    pub fn write_u64(&mut self, v: u64) -> Result<()> {
        self.write_bytes(&v.to_le_bytes())
    }

    pub fn write_f64(&mut self, v: f64) -> Result<()> {
        self.write_bytes(&v.to_le_bytes())
    }

    pub fn write_f64_iter<T: Scalar>(&mut self, values: impl IntoIterator<Item = T>) -> Result<()> {
        for v in values {
            self.write_f64(v.to_f64_lossy())?;
        }
        Ok(())
    }

    pub fn write_header(&mut self, magic: [u8; 4], count: u32, extra: u32) -> Result<()> {
        self.write_bytes(&magic)?;
        self.write_u32(CONTAINER_VERSION)?;
        self.write_u32(count)?;
        self.write_u32(extra)
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush().map_err(|e| self.io_err(e))
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    const TEST_MAGIC: [u8; 4] = *b"TSTC";

    #[test]
    fn header_and_payload_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        let mut w = ContainerWriter::create(&path).unwrap();
        w.write_header(TEST_MAGIC, 7, 9).unwrap();
        w.write_u32(42).unwrap();
        w.write_f64_iter([1.5f64, -2.5].into_iter()).unwrap();
        w.finish().unwrap();

        let mut r = ContainerReader::open(&path).unwrap();
        assert_eq!(r.read_header(TEST_MAGIC).unwrap(), (7, 9));
        assert_eq!(r.read_u32().unwrap(), 42);
        assert_eq!(r.read_f64_vec::<f64>(2).unwrap(), vec![1.5, -2.5]);
        r.expect_eof().unwrap();
    }

    #[test]
    fn wrong_magic_reports_offset_zero() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        std::fs::write(&path, b"NOPE\x01\x00\x00\x00\x00\x00\x00\x00\x00\x00\x00\x00").unwrap();
        let mut r = ContainerReader::open(&path).unwrap();
        match r.read_header(TEST_MAGIC) {
            Err(Error::Format { offset, message, .. }) => {
                assert_eq!(offset, 0);
                assert!(message.contains("TSTC"), "message: {message}");
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn oversized_extent_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        let mut w = ContainerWriter::create(&path).unwrap();
        w.write_header(TEST_MAGIC, 1, 0).unwrap();
        w.finish().unwrap();
        let mut r = ContainerReader::open(&path).unwrap();
        r.read_header(TEST_MAGIC).unwrap();
        assert!(r.check_extent("count", u64::MAX).is_err());
    }
}
