//! Little-endian binary helpers with byte-offset error reporting.

use crate::error::{Error, Result};
use crate::numerics::Tensor2D;
use crate::scalar::Scalar;

#[derive(Default)]
pub(crate) struct Writer {
    pub buf: Vec<u8>,
}

impl Writer {
    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }
    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn len_u32(&mut self, n: usize) -> Result<()> {
        let v = u32::try_from(n).map_err(|_| Error::contract(format!("length {n} exceeds u32")))?;
        self.u32(v);
        Ok(())
    }
    pub fn str(&mut self, s: &str) -> Result<()> {
        self.len_u32(s.len())?;
        self.bytes(s.as_bytes());
        Ok(())
    }
    pub fn tensor<S: Scalar>(&mut self, t: &Tensor2D<S>) -> Result<()> {
        self.len_u32(t.rows())?;
        self.len_u32(t.cols())?;
        for &v in t.data() {
            self.bytes(&v.to_le_bytes_vec());
        }
        Ok(())
    }
}

pub(crate) struct Reader<'a> {
    what: &'static str,
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(what: &'static str, data: &'a [u8]) -> Self {
        Self { what, data, pos: 0 }
    }

    pub fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub fn error(&self, reason: impl Into<String>) -> Error {
        Error::parse(self.what, self.offset(), reason)
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.data.len() - self.pos < n {
            return Err(self.error(format!(
                "truncated: need {n} bytes, {} left",
                self.data.len() - self.pos
            )));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    pub fn magic(&mut self, want: &[u8; 4]) -> Result<()> {
        let start = self.pos;
        let got = self.take(4)?;
        if got != want {
            self.pos = start;
            return Err(self.error(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(got),
                String::from_utf8_lossy(want)
            )));
        }
        Ok(())
    }
    pub fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let at = self.pos;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| Error::parse(self.what, at as u64, "invalid UTF-8"))
    }
    pub fn tensor<S: Scalar>(&mut self) -> Result<Tensor2D<S>> {
        let rows = self.u32()? as usize;
        let cols = self.u32()? as usize;
        let n = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(S::BYTES))
            .ok_or_else(|| self.error("tensor shape overflow"))?;
        let bytes = self.take(n)?;
        let data = bytes.chunks_exact(S::BYTES).map(S::from_le_slice).collect();
        Tensor2D::from_vec(rows, cols, data)
    }
    pub fn finish(&self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(self.error(format!("{} trailing bytes", self.data.len() - self.pos)));
        }
        Ok(())
    }
}
