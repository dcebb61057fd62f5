//! Periodic lattice geometry.
//!
//! Sites of the torus `{0,…,L−1}^d` are indexed in row-major order: the last
//! coordinate varies fastest. The `2d` elementary steps are enumerated as
//! `+e_1, −e_1, +e_2, −e_2, …`, so a [`Dir`] index `2i` is `+e_{i+1}` and
//! `2i + 1` is `−e_{i+1}`.

use serde::{Deserialize, Serialize};
use std::fmt;

/// One of the `2d` unit steps `±e_i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Dir(pub u8);

impl Dir {
    #[inline]
    pub fn positive(axis: usize) -> Self {
        Dir((2 * axis) as u8)
    }

    #[inline]
    pub fn negative(axis: usize) -> Self {
        Dir((2 * axis + 1) as u8)
    }

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }

    #[inline]
    pub fn axis(self) -> usize {
        (self.0 >> 1) as usize
    }

    #[inline]
    pub fn is_positive(self) -> bool {
        self.0 & 1 == 0
    }

    /// `+1` for `+e_i`, `−1` for `−e_i`.
    #[inline]
    pub fn sign(self) -> i64 {
        if self.is_positive() {
            1
        } else {
            -1
        }
    }

    #[inline]
    pub fn opposite(self) -> Self {
        Dir(self.0 ^ 1)
    }

    /// Signed 1-based axis label, e.g. `+2` or `-1`; used in text dumps.
    pub fn label(self) -> i32 {
        (self.axis() as i32 + 1) * self.sign() as i32
    }

    pub fn from_label(label: i32, dim: usize) -> Option<Self> {
        let axis = label.unsigned_abs() as usize;
        if axis == 0 || axis > dim {
            return None;
        }
        Some(if label > 0 {
            Dir::positive(axis - 1)
        } else {
            Dir::negative(axis - 1)
        })
    }
}

impl fmt::Display for Dir {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = if self.is_positive() { '+' } else { '-' };
        write!(f, "{}e{}", s, self.axis() + 1)
    }
}

/// The discrete torus `(Z/LZ)^d` with a precomputed neighbour table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Torus {
    dim: usize,
    side: usize,
    sites: usize,
    strides: Vec<usize>,
    neighbors: Vec<u32>,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum TorusError {
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("side length must be at least 2, got {0}")]
    SideTooSmall(usize),
    #[error("torus with side {side} in dimension {dim} is too large")]
    TooLarge { dim: usize, side: usize },
}

impl Torus {
    pub fn new(dim: usize, side: usize) -> Result<Self, TorusError> {
        if dim == 0 {
            return Err(TorusError::ZeroDimension);
        }
        if side < 2 {
            return Err(TorusError::SideTooSmall(side));
        }
        let sites = (0..dim)
            .try_fold(1usize, |acc, _| acc.checked_mul(side))
            .filter(|&n| n <= u32::MAX as usize / (2 * dim))
            .ok_or(TorusError::TooLarge { dim, side })?;

        let mut strides = vec![1usize; dim];
        for i in (0..dim.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * side;
        }

        let mut torus = Torus {
            dim,
            side,
            sites,
            strides,
            neighbors: Vec::new(),
        };
        let mut neighbors = Vec::with_capacity(sites * 2 * dim);
        for x in 0..sites {
            for k in 0..2 * dim {
                let dir = Dir(k as u8);
                neighbors.push(torus.shift(x, dir.axis(), dir.sign()) as u32);
            }
        }
        torus.neighbors = neighbors;
        Ok(torus)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn side(&self) -> usize {
        self.side
    }

    #[inline]
    pub fn num_sites(&self) -> usize {
        self.sites
    }

    #[inline]
    pub fn num_dirs(&self) -> usize {
        2 * self.dim
    }

    /// Number of unordered axis pairs `(i, j)`, `i < j`.
    #[inline]
    pub fn num_planes(&self) -> usize {
        self.dim * (self.dim - 1) / 2
    }

    pub fn dirs(&self) -> impl Iterator<Item = Dir> + Clone {
        (0..2 * self.dim as u8).map(Dir)
    }

    /// Axis pairs `(i, j)` with `i < j` in lexicographic order.
    pub fn planes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.dim).flat_map(move |i| (i + 1..self.dim).map(move |j| (i, j)))
    }

    /// Position of the pair `(i, j)`, `i < j`, in [`Torus::planes`].
    pub fn plane_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.dim);
        i * self.dim - i * (i + 1) / 2 + (j - i - 1)
    }

    #[inline]
    pub fn neighbor(&self, site: usize, dir: Dir) -> usize {
        self.neighbors[site * 2 * self.dim + dir.index()] as usize
    }

    /// Site reached by moving `delta` steps along `axis`, with wrap-around.
    pub fn shift(&self, site: usize, axis: usize, delta: i64) -> usize {
        let stride = self.strides[axis];
        let c = (site / stride) % self.side;
        let l = self.side as i64;
        let nc = (c as i64 + delta).rem_euclid(l) as usize;
        site - c * stride + nc * stride
    }

    pub fn coords(&self, site: usize) -> Vec<usize> {
        (0..self.dim)
            .map(|i| (site / self.strides[i]) % self.side)
            .collect()
    }

    pub fn coord(&self, site: usize, axis: usize) -> usize {
        (site / self.strides[axis]) % self.side
    }

    pub fn site(&self, coords: &[usize]) -> usize {
        debug_assert_eq!(coords.len(), self.dim);
        coords
            .iter()
            .zip(&self.strides)
            .map(|(&c, &s)| (c % self.side) * s)
            .sum()
    }

    /// `(-1)^{x_1 + … + x_d}` as `0` (even) or `1` (odd).
    pub fn parity(&self, site: usize) -> usize {
        (0..self.dim).map(|i| self.coord(site, i)).sum::<usize>() % 2
    }
}
