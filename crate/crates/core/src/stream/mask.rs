//! Binary instance masks and their run-length encoding.
//!
//! The text encoding is a space-separated list of decimal run lengths over
//! the row-major pixel order, alternating 0-runs and 1-runs and always
//! starting with a (possibly empty) 0-run.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MaskError {
    #[error("malformed run length {0:?}")]
    BadRun(String),
    #[error("runs cover {got} pixels, expected {expected}")]
    Coverage { expected: usize, got: usize },
    #[error("mask has no set pixel")]
    Empty,
    #[error("detection confidence {0} outside [0, 1]")]
    Confidence(f64),
}

/// Row-major binary image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BitMask {
    pub fn new(width: u32, height: u32, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), width as usize * height as usize, "mask size mismatch");
        BitMask { width, height, bits }
    }

    pub fn empty(width: u32, height: u32) -> Self {
        BitMask { width, height, bits: vec![false; width as usize * height as usize] }
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for v in 0..height {
            for u in 0..width {
                bits.push(f(u, v));
            }
        }
        BitMask { width, height, bits }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, u: u32, v: u32) -> bool {
        self.bits[v as usize * self.width as usize + u as usize]
    }

    #[inline]
    pub fn set(&mut self, u: u32, v: u32, value: bool) {
        let w = self.width as usize;
        self.bits[v as usize * w + u as usize] = value;
    }

    /// Bounds-checked lookup for real-valued pixel coordinates (rounded).
    pub fn contains(&self, u: f64, v: f64) -> bool {
        let (u, v) = (u.round(), v.round());
        if u < 0.0 || v < 0.0 || u >= self.width as f64 || v >= self.height as f64 {
            return false;
        }
        self.get(u as u32, v as u32)
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    /// Set pixels as `(u, v)` in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(move |(i, _)| (i as u32 % w, i as u32 / w))
    }

    pub fn to_rle(&self) -> String {
        let mut runs = Vec::new();
        let mut current = false;
        let mut len = 0usize;
        for &b in &self.bits {
            if b == current {
                len += 1;
            } else {
                runs.push(len);
                current = b;
                len = 1;
            }
        }
        runs.push(len);
        runs.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(" ")
    }

    pub fn from_rle(rle: &str, width: u32, height: u32) -> Result<Self, MaskError> {
        let expected = width as usize * height as usize;
        let mut bits = Vec::with_capacity(expected);
        let mut value = false;
        for tok in rle.split_ascii_whitespace() {
            let n: usize = tok.parse().map_err(|_| MaskError::BadRun(tok.to_string()))?;
            if bits.len() + n > expected {
                return Err(MaskError::Coverage { expected, got: bits.len() + n });
            }
            bits.extend(std::iter::repeat_n(value, n));
            value = !value;
        }
        if bits.len() != expected {
            return Err(MaskError::Coverage { expected, got: bits.len() });
        }
        Ok(BitMask { width, height, bits })
    }
}

/// A 2D instance detection.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMask {
    pub class_label: String,
    pub mask: BitMask,
    pub confidence: f64,
}

impl InstanceMask {
    pub fn new(class_label: impl Into<String>, mask: BitMask, confidence: f64) -> Result<Self, MaskError> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(MaskError::Confidence(confidence));
        }
        if mask.is_empty() {
            return Err(MaskError::Empty);
        }
        Ok(InstanceMask { class_label: class_label.into(), mask, confidence })
    }

    pub fn to_record(&self) -> MaskRecord {
        MaskRecord { class: self.class_label.clone(), rle: self.mask.to_rle(), conf: self.confidence }
    }

    pub fn from_record(rec: &MaskRecord, width: u32, height: u32) -> Result<Self, MaskError> {
        InstanceMask::new(rec.class.clone(), BitMask::from_rle(&rec.rle, width, height)?, rec.conf)
    }
}

/// On-disk form of an [`InstanceMask`]; dimensions come from the frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskRecord {
    pub class: String,
    pub rle: String,
    pub conf: f64,
}
