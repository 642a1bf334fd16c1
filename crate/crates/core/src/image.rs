//! Band-interleaved f32 images for the lintra driver.
//!
//! File layout, all little-endian: `u32` magic `KTIM`, width, height,
//! bands, then `width * height * bands` f32 samples row by row.

use std::io::{self, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MAGIC: u32 = u32::from_le_bytes(*b"KTIM");

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub bands: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn zeros(width: usize, height: usize, bands: usize) -> Self {
        Self {
            width,
            height,
            bands,
            data: vec![0.0; width * height * bands],
        }
    }

    /// Pixel values uniform in `[0, 255)`.
    pub fn random(width: usize, height: usize, bands: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..width * height * bands).map(|_| rng.gen_range(0.0..255.0)).collect();
        Self {
            width,
            height,
            bands,
            data,
        }
    }

    pub fn row_len(&self) -> usize {
        self.width * self.bands
    }

    pub fn row(&self, y: usize) -> &[f32] {
        let n = self.row_len();
        &self.data[y * n..(y + 1) * n]
    }

    pub fn row_mut(&mut self, y: usize) -> &mut [f32] {
        let n = self.row_len();
        &mut self.data[y * n..(y + 1) * n]
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        for v in [MAGIC, self.width as u32, self.height as u32, self.bands as u32] {
            w.write_all(&v.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)
    }

    pub fn read_from<R: Read>(mut r: R) -> io::Result<Self> {
        let mut head = [0u8; 16];
        r.read_exact(&mut head)?;
        let word = |i: usize| u32::from_le_bytes(head[i * 4..i * 4 + 4].try_into().unwrap());
        if word(0) != MAGIC {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "not a KTIM image"));
        }
        let (width, height, bands) = (word(1) as usize, word(2) as usize, word(3) as usize);
        let len = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(bands))
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "image dimensions overflow"))?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != len * 4 {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("expected {} sample bytes, found {}", len * 4, bytes.len()),
            ));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            width,
            height,
            bands,
            data,
        })
    }

    pub fn load(path: &Path) -> io::Result<Self> {
        Self::read_from(io::BufReader::new(std::fs::File::open(path)?))
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        let mut w = io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let img = Image::random(7, 3, 3, 11);
        let mut buf = Vec::new();
        img.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 7 * 3 * 3 * 4);
        assert_eq!(&buf[..4], b"KTIM");
        assert_eq!(Image::read_from(&buf[..]).unwrap(), img);
    }

    #[test]
    fn rejects_bad_headers_and_truncation() {
        let mut buf = Vec::new();
        Image::zeros(2, 2, 1).write_to(&mut buf).unwrap();
        assert!(Image::read_from(&buf[..buf.len() - 1]).is_err());
        buf[0] = b'X';
        assert!(Image::read_from(&buf[..]).is_err());
    }

    #[test]
    fn rows_are_band_interleaved() {
        let mut img = Image::zeros(4, 2, 3);
        img.row_mut(1)[5] = 1.0;
        assert_eq!(img.data[12 + 5], 1.0);
        assert_eq!(img.row(1).len(), 12);
    }
}
