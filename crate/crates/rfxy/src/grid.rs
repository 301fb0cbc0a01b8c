//! Real-valued fields on an axis-aligned rectangle of ℤ².

use std::io::{Read, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Region, Site};

pub const GRID_FORMAT_VERSION: u32 = 1;

/// Values on `origin + [0, w) × [0, h)`, stored as `data[[x - ox, y - oy]]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub origin: Site,
    pub data: Array2<f64>,
}

impl Grid {
    pub fn zeros(origin: Site, w: usize, h: usize) -> Self {
        Self { origin, data: Array2::zeros((w, h)) }
    }

    pub fn from_fn(origin: Site, w: usize, h: usize, mut f: impl FnMut(Site) -> f64) -> Self {
        let data = Array2::from_shape_fn((w, h), |(i, j)| f((origin.0 + i as i64, origin.1 + j as i64)));
        Self { origin, data }
    }

    pub fn width(&self) -> usize {
        self.data.nrows()
    }

    pub fn height(&self) -> usize {
        self.data.ncols()
    }

    pub fn contains(&self, (x, y): Site) -> bool {
        let (i, j) = (x - self.origin.0, y - self.origin.1);
        i >= 0 && j >= 0 && (i as usize) < self.width() && (j as usize) < self.height()
    }

    pub fn get(&self, s: Site) -> Option<f64> {
        if self.contains(s) {
            Some(self.data[[(s.0 - self.origin.0) as usize, (s.1 - self.origin.1) as usize]])
        } else {
            None
        }
    }

    /// Panics outside the rectangle.
    pub fn at(&self, s: Site) -> f64 {
        self.data[[(s.0 - self.origin.0) as usize, (s.1 - self.origin.1) as usize]]
    }

    /// Panics outside the rectangle.
    pub fn set(&mut self, s: Site, v: f64) {
        self.data[[(s.0 - self.origin.0) as usize, (s.1 - self.origin.1) as usize]] = v;
    }

    /// The covered rectangle as a region.
    pub fn domain(&self) -> Region {
        Region::rect(self.origin.0, self.origin.1, self.width() as i64, self.height() as i64)
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Binary layout: `u32` side, `u32` version, then `side²` little-endian
    /// `f64` values with `x` fastest. Square grids anchored at the origin only.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.width();
        if n != self.height() || self.origin != (0, 0) {
            return Err(Error::Format("binary format holds square grids anchored at the origin".into()));
        }
        w.write_all(&(n as u32).to_le_bytes())?;
        w.write_all(&GRID_FORMAT_VERSION.to_le_bytes())?;
        for y in 0..n {
            for x in 0..n {
                w.write_all(&self.data[[x, y]].to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut head = [0u8; 8];
        r.read_exact(&mut head)?;
        let n = u32::from_le_bytes(head[0..4].try_into().unwrap()) as usize;
        let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
        if version != GRID_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported grid file version {version}")));
        }
        let mut data = Array2::zeros((n, n));
        let mut buf = [0u8; 8];
        for y in 0..n {
            for x in 0..n {
                r.read_exact(&mut buf)?;
                data[[x, y]] = f64::from_le_bytes(buf);
            }
        }
        Ok(Self { origin: (0, 0), data })
    }
}
