//! 2D-to-1D serialization orders over patch grids.
//!
//! Three quadrant-recursive curves are provided alongside three linear
//! baselines:
//!
//! - `Hilbert`: the classic Hilbert curve. Entry at `(0, 0)`, first step
//!   towards `(0, 1)`, exit at `(W-1, 0)`.
//! - `Coil`: four Hilbert quadrants closed into a loop (the Moore
//!   production). Entry at `(W/2-1, 0)`, exit at `(W/2, 0)`, so the two ends
//!   of the sequence are grid neighbours.
//! - `Meurthe`: a quadrant-recursive curve whose gates sit as close to the
//!   middle of each shared edge as parity and adjacency allow, instead of at
//!   the corners. Entry on the left edge, exit at the mirror cell on the
//!   right edge, both in the lower half. Coincides with `Hilbert` up to 4x4.
//! - `Raster`, `Zigzag` (boustrophedon rows) and `LocalWindow(w)` (raster over
//!   non-overlapping `w x w` windows, raster inside each window).
//!
//! All three fractal kinds move by exactly one grid step between consecutive
//! sequence positions and fill every aligned `2^m x 2^m` block before leaving
//! it. They require square power-of-two grids; [`generate_order_padded`]
//! serializes any other shape by walking the enclosing power-of-two curve and
//! skipping cells outside the grid.

mod gated;
mod hilbert;
mod linear;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Patch-grid dimensions, in cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridShape {
    pub width: usize,
    pub height: usize,
}

impl GridShape {
    pub fn new(width: usize, height: usize) -> Result<Self, CurveError> {
        if width == 0 || height == 0 {
            return Err(CurveError::InvalidShape {
                width,
                height,
                reason: "grid dimensions must be positive",
            });
        }
        Ok(Self { width, height })
    }

    pub fn square(side: usize) -> Result<Self, CurveError> {
        Self::new(side, side)
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.x < self.width && cell.y < self.height
    }

    /// True for `2^k x 2^k` grids.
    pub fn is_pow2_square(&self) -> bool {
        self.width == self.height && self.width.is_power_of_two()
    }
}

/// Integer grid coordinate of one patch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }

    pub fn manhattan(self, other: Cell) -> usize {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }

    pub fn euclidean(self, other: Cell) -> f64 {
        let dx = self.x.abs_diff(other.x) as f64;
        let dy = self.y.abs_diff(other.y) as f64;
        (dx * dx + dy * dy).sqrt()
    }
}

/// Default window side of the `LocalWindow` baseline.
pub const DEFAULT_LOCAL_WINDOW: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CurveKind {
    Hilbert,
    Coil,
    Meurthe,
    Raster,
    Zigzag,
    LocalWindow(usize),
}

impl CurveKind {
    pub fn is_fractal(self) -> bool {
        matches!(self, CurveKind::Hilbert | CurveKind::Coil | CurveKind::Meurthe)
    }
}

impl fmt::Display for CurveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CurveKind::Hilbert => f.write_str("hilbert"),
            CurveKind::Coil => f.write_str("coil"),
            CurveKind::Meurthe => f.write_str("meurthe"),
            CurveKind::Raster => f.write_str("raster"),
            CurveKind::Zigzag => f.write_str("zigzag"),
            CurveKind::LocalWindow(w) => write!(f, "local:{w}"),
        }
    }
}

impl FromStr for CurveKind {
    type Err = CurveError;

    /// Accepts `hilbert`, `coil`, `meurthe`, `raster`, `zigzag`, `local`
    /// and `local:<w>`. `fractal` is an alias for `hilbert`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let kind = match lower.as_str() {
            "hilbert" | "fractal" => CurveKind::Hilbert,
            "coil" => CurveKind::Coil,
            "meurthe" => CurveKind::Meurthe,
            "raster" | "linear" => CurveKind::Raster,
            "zigzag" => CurveKind::Zigzag,
            "local" => CurveKind::LocalWindow(DEFAULT_LOCAL_WINDOW),
            other => match other.strip_prefix("local:") {
                Some(w) => match w.parse::<usize>() {
                    Ok(w) if w > 0 => CurveKind::LocalWindow(w),
                    _ => return Err(CurveError::UnknownKind(s.to_string())),
                },
                None => return Err(CurveError::UnknownKind(s.to_string())),
            },
        };
        Ok(kind)
    }
}

impl Serialize for CurveKind {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CurveKind {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CurveError {
    #[error("invalid {width}x{height} grid: {reason}")]
    InvalidShape {
        width: usize,
        height: usize,
        reason: &'static str,
    },
    #[error("unknown curve kind {0:?}")]
    UnknownKind(String),
    #[error("level {level} needs 4^{level} cells but the order has only {len}")]
    InvalidLevel { level: u32, len: usize },
}

/// A bijection between grid cells and sequence positions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScanOrder {
    kind: CurveKind,
    shape: GridShape,
    seq_to_coord: Vec<Cell>,
    coord_to_seq: Vec<usize>,
}

impl ScanOrder {
    /// Wraps an explicit cell sequence, checking that it visits every cell
    /// of `shape` exactly once.
    pub fn from_cells(kind: CurveKind, shape: GridShape, cells: Vec<Cell>) -> Result<Self, CurveError> {
        if cells.len() != shape.len() {
            return Err(CurveError::InvalidShape {
                width: shape.width,
                height: shape.height,
                reason: "cell sequence length does not match the grid",
            });
        }
        let mut coord_to_seq = vec![usize::MAX; shape.len()];
        for (i, &c) in cells.iter().enumerate() {
            if !shape.contains(c) {
                return Err(CurveError::InvalidShape {
                    width: shape.width,
                    height: shape.height,
                    reason: "cell sequence leaves the grid",
                });
            }
            let slot = &mut coord_to_seq[c.y * shape.width + c.x];
            if *slot != usize::MAX {
                return Err(CurveError::InvalidShape {
                    width: shape.width,
                    height: shape.height,
                    reason: "cell sequence visits a cell twice",
                });
            }
            *slot = i;
        }
        Ok(Self {
            kind,
            shape,
            seq_to_coord: cells,
            coord_to_seq,
        })
    }

    pub fn kind(&self) -> CurveKind {
        self.kind
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.seq_to_coord.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seq_to_coord.is_empty()
    }

    pub fn cell(&self, index: usize) -> Cell {
        self.seq_to_coord[index]
    }

    pub fn index_of(&self, cell: Cell) -> usize {
        self.coord_to_seq[cell.y * self.shape.width + cell.x]
    }

    pub fn cells(&self) -> &[Cell] {
        &self.seq_to_coord
    }

    /// Sequence index per cell, row-major (`y * width + x`).
    pub fn inverse(&self) -> &[usize] {
        &self.coord_to_seq
    }

    /// Same cell sequence relabelled with a different kind.
    pub fn with_kind(mut self, kind: CurveKind) -> Self {
        self.kind = kind;
        self
    }

    /// True when every consecutive pair of positions is 4-adjacent.
    pub fn is_unit_step(&self) -> bool {
        self.seq_to_coord.windows(2).all(|w| w[0].manhattan(w[1]) == 1)
    }

    /// Writes `index,x,y` rows with a header line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(b"index,x,y\n")?;
        for (i, c) in self.seq_to_coord.iter().enumerate() {
            writeln!(out, "{},{},{}", i, c.x, c.y)?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::with_capacity(self.len() * 12);
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv is ascii")
    }
}

/// Builds the scan order of `kind` over `shape`.
///
/// Fractal kinds reject anything but `2^k x 2^k` grids; use
/// [`generate_order_padded`] for other shapes.
pub fn generate_order(kind: CurveKind, shape: GridShape) -> Result<ScanOrder, CurveError> {
    let cells = match kind {
        CurveKind::Hilbert | CurveKind::Coil | CurveKind::Meurthe => {
            if !shape.is_pow2_square() {
                return Err(CurveError::InvalidShape {
                    width: shape.width,
                    height: shape.height,
                    reason: "fractal curves need a square power-of-two grid",
                });
            }
            fractal_cells(kind, shape.width)
        }
        CurveKind::Raster => linear::raster(shape),
        CurveKind::Zigzag => linear::zigzag(shape),
        CurveKind::LocalWindow(w) => {
            if w == 0 {
                return Err(CurveError::UnknownKind(kind.to_string()));
            }
            linear::local_window(shape, w)
        }
    };
    ScanOrder::from_cells(kind, shape, cells)
}

/// Like [`generate_order`], but fractal kinds accept any shape: the smallest
/// enclosing power-of-two curve is walked and out-of-grid cells are dropped,
/// keeping the relative order of the rest.
pub fn generate_order_padded(kind: CurveKind, shape: GridShape) -> Result<ScanOrder, CurveError> {
    if !kind.is_fractal() || shape.is_pow2_square() {
        return generate_order(kind, shape);
    }
    let side = shape.width.max(shape.height).next_power_of_two();
    let cells = fractal_cells(kind, side).into_iter().filter(|&c| shape.contains(c)).collect();
    ScanOrder::from_cells(kind, shape, cells)
}

fn fractal_cells(kind: CurveKind, side: usize) -> Vec<Cell> {
    match kind {
        CurveKind::Hilbert => hilbert::hilbert(side),
        CurveKind::Coil => hilbert::moore(side),
        CurveKind::Meurthe => gated::mid_gated(side),
        _ => unreachable!("not a fractal kind"),
    }
}

/// Checks that every aligned run of `4^level` sequence positions covers
/// exactly one aligned `2^level x 2^level` block of the grid.
pub fn block_locality_check(order: &ScanOrder, level: u32) -> Result<bool, CurveError> {
    let run = 4usize
        .checked_pow(level)
        .filter(|&r| r <= order.len())
        .ok_or(CurveError::InvalidLevel { level, len: order.len() })?;
    let side = 1usize << level;
    if !order.len().is_multiple_of(run) {
        return Ok(false);
    }
    let ok = order.cells().chunks(run).all(|chunk| {
        let bx = chunk[0].x / side;
        let by = chunk[0].y / side;
        chunk.iter().all(|c| c.x / side == bx && c.y / side == by)
    });
    // With distinct cells, `run` members inside one `side x side` block fill it.
    Ok(ok)
}
