//! The frames x channels buffer passed between every stage of the pipeline,
//! plus its binary container.

use std::path::Path;

use crate::binio::{Reader, Writer};
use crate::error::{structural, Result};

/// Row-major `frames x channels` matrix of reals.
///
/// Row `t` holds the `channels` values of frame `t`. Weight matrices reuse
/// the same type with one row per output unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2 {
    frames: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Tensor2 {
    pub fn zeros(frames: usize, channels: usize) -> Self {
        Self { frames, channels, data: vec![0.0; frames * channels] }
    }

    pub fn from_vec(frames: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != frames * channels {
            return Err(structural(format!("buffer of {} values cannot be shaped {frames}x{channels}", data.len())));
        }
        Ok(Self { frames, channels, data })
    }

    /// Builds a tensor from equally sized rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let channels = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * channels);
        for (i, r) in rows.iter().enumerate() {
            if r.as_ref().len() != channels {
                return Err(structural(format!("row {i} has {} values, expected {channels}", r.as_ref().len())));
            }
            data.extend_from_slice(r.as_ref());
        }
        Ok(Self { frames: rows.len(), channels, data })
    }

    /// A single-channel column.
    pub fn column(values: Vec<f64>) -> Self {
        Self { frames: values.len(), channels: 1, data: values }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.frames, self.channels)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.channels..(t + 1) * self.channels]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.data[t * self.channels..(t + 1) * self.channels]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on zero; an empty-channel tensor has no data anyway
        self.data.chunks_exact(self.channels.max(1)).take(self.frames)
    }

    pub fn get(&self, t: usize, c: usize) -> f64 {
        self.data[t * self.channels + c]
    }

    pub fn set(&mut self, t: usize, c: usize, v: f64) {
        self.data[t * self.channels + c] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Same values reinterpreted under a new shape of equal size.
    pub fn reshape(self, frames: usize, channels: usize) -> Result<Self> {
        Self::from_vec(frames, channels, self.data)
    }

    /// Index of the largest value in each row (first on ties).
    pub fn argmax_rows(&self) -> Vec<usize> {
        self.rows().map(argmax).collect()
    }
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

const ARCHIVE_MAGIC: &[u8; 8] = b"RCNNTNSR";
const ARCHIVE_VERSION: u32 = 1;

pub(crate) fn write_tensor(w: &mut Writer, t: &Tensor2) {
    w.u64(t.frames as u64);
    w.u64(t.channels as u64);
    for &v in &t.data {
        w.f64(v);
    }
}

pub(crate) fn read_tensor(r: &mut Reader<'_>) -> Result<Tensor2> {
    let frames = r.u64()? as usize;
    let channels = r.u64()? as usize;
    let n = frames.checked_mul(channels).ok_or_else(|| r.error("tensor shape overflows"))?;
    let bytes = r.take(n.checked_mul(8).ok_or_else(|| r.error("tensor size overflows"))?)?;
    let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
    Ok(Tensor2 { frames, channels, data })
}

/// Named tensors persisted together: one record per utterance for posterior
/// and feature files.
///
/// Layout: magic `RCNNTNSR`, u32 version, u32 record count, then per record
/// {u32 id length, id bytes, u64 frames, u64 channels, frames*channels f64},
/// all little-endian.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorArchive {
    pub entries: Vec<(String, Tensor2)>,
}

impl TensorArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, id: impl Into<String>, t: Tensor2) {
        self.entries.push((id.into(), t));
    }

    pub fn get(&self, id: &str) -> Option<&Tensor2> {
        self.entries.iter().find(|(k, _)| k == id).map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(ARCHIVE_MAGIC);
        w.u32(ARCHIVE_VERSION);
        w.u32(self.entries.len() as u32);
        for (id, t) in &self.entries {
            w.string(id);
            write_tensor(&mut w, t);
        }
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.header(ARCHIVE_MAGIC, "tensor archive", ARCHIVE_VERSION)?;
        let n = r.u32()?;
        let mut entries = Vec::new();
        for _ in 0..n {
            let id = r.string()?;
            entries.push((id, read_tensor(&mut r)?));
        }
        r.finish()?;
        Ok(Self { entries })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
