//! Little-endian primitives for the crate's binary artifact formats.

use std::io::{ErrorKind, Read, Write};

use crate::error::{Error, Result};

pub(crate) struct BinWriter<W: Write> {
    w: W,
}

impl<W: Write> BinWriter<W> {
    pub fn new(w: W) -> Self {
        Self { w }
    }

    pub fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.w.write_all(b)?;
        Ok(())
    }

    pub fn u32(&mut self, v: u32) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub fn len(&mut self, v: usize, what: &str) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::invalid(format!("{what} too large")))?;
        self.u32(v)
    }

    pub fn f64(&mut self, v: f64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub fn str16(&mut self, s: &str) -> Result<()> {
        let n = u16::try_from(s.len()).map_err(|_| Error::invalid(format!("string too long: {s}")))?;
        self.bytes(&n.to_le_bytes())?;
        self.bytes(s.as_bytes())
    }

    pub fn f32s(&mut self, v: &[f32]) -> Result<()> {
        let mut buf = Vec::with_capacity(v.len() * 4);
        v.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes()));
        self.bytes(&buf)
    }

    pub fn finish(mut self) -> Result<W> {
        self.w.flush()?;
        Ok(self.w)
    }
}

pub(crate) struct BinReader<R: Read> {
    r: R,
    format: &'static str,
}

impl<R: Read> BinReader<R> {
    pub fn new(r: R, format: &'static str) -> Self {
        Self { r, format }
    }

    pub fn bytes(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        self.r.read_exact(buf).map_err(|e| match e.kind() {
            ErrorKind::UnexpectedEof => Error::format(self.format, format!("truncated {what}")),
            _ => Error::Io(e),
        })
    }

    pub fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let mut m = [0u8; 4];
        self.bytes(&mut m, "header")?;
        if &m != expected {
            return Err(Error::format(self.format, "bad magic"));
        }
        Ok(())
    }

    pub fn version(&mut self, expected: u32) -> Result<()> {
        let v = self.u32("version")?;
        if v != expected {
            return Err(Error::format(self.format, format!("unsupported version {v}")));
        }
        Ok(())
    }

    pub fn u32(&mut self, what: &str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.bytes(&mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }

    pub fn f64(&mut self, what: &str) -> Result<f64> {
        let mut b = [0u8; 8];
        self.bytes(&mut b, what)?;
        Ok(f64::from_le_bytes(b))
    }

    pub fn str16(&mut self, what: &str) -> Result<String> {
        let mut b = [0u8; 2];
        self.bytes(&mut b, what)?;
        let mut s = vec![0u8; u16::from_le_bytes(b) as usize];
        self.bytes(&mut s, what)?;
        String::from_utf8(s).map_err(|_| Error::format(self.format, format!("{what} is not utf-8")))
    }

    pub fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let mut buf = vec![0u8; n * 4];
        self.bytes(&mut buf, what)?;
        Ok(buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    /// Errors unless the stream is exhausted.
    pub fn end(&mut self) -> Result<()> {
        let mut b = [0u8; 1];
        match self.r.read(&mut b)? {
            0 => Ok(()),
            _ => Err(Error::format(self.format, "trailing bytes")),
        }
    }

    pub fn err(&self, reason: impl Into<String>) -> Error {
        Error::format(self.format, reason)
    }
}
