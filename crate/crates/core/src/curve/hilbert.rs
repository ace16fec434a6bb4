use super::Cell;

/// Hilbert curve on a `side x side` grid, `side` a power of two.
pub(super) fn hilbert(side: usize) -> Vec<Cell> {
    (0..side * side).map(|d| d2xy(side, d)).collect()
}

fn d2xy(side: usize, d: usize) -> Cell {
    let (mut x, mut y) = (0usize, 0usize);
    let mut t = d;
    let mut s = 1usize;
    while s < side {
        let rx = 1 & (t / 2);
        let ry = 1 & (t ^ rx);
        if ry == 0 {
            if rx == 1 {
                x = s - 1 - x;
                y = s - 1 - y;
            }
            std::mem::swap(&mut x, &mut y);
        }
        x += s * rx;
        y += s * ry;
        t /= 4;
        s *= 2;
    }
    Cell::new(x, y)
}

/// One of the eight symmetries of a `side x side` block.
#[derive(Clone, Copy)]
struct Symmetry {
    swap: bool,
    flip_x: bool,
    flip_y: bool,
}

impl Symmetry {
    fn all() -> impl Iterator<Item = Symmetry> {
        (0..8).map(|b| Symmetry {
            swap: b & 1 != 0,
            flip_x: b & 2 != 0,
            flip_y: b & 4 != 0,
        })
    }

    fn apply(self, side: usize, c: Cell) -> Cell {
        let (mut x, mut y) = (c.x, c.y);
        if self.swap {
            std::mem::swap(&mut x, &mut y);
        }
        if self.flip_x {
            x = side - 1 - x;
        }
        if self.flip_y {
            y = side - 1 - y;
        }
        Cell::new(x, y)
    }
}

/// Hilbert curve over a `side x side` block running from corner `from` to the
/// adjacent corner `to`, in block-local coordinates.
pub(super) fn hilbert_between(side: usize, from: Cell, to: Cell) -> Vec<Cell> {
    let base = hilbert(side);
    if side == 1 {
        return base;
    }
    let start = base[0];
    let end = base[base.len() - 1];
    let sym = Symmetry::all()
        .find(|s| s.apply(side, start) == from && s.apply(side, end) == to)
        .expect("gates must be adjacent corners of the block");
    base.into_iter().map(|c| sym.apply(side, c)).collect()
}

/// Four Hilbert quadrants closed into a loop: up the left half, down the
/// right half, entering and leaving through the middle of the bottom edge.
pub(super) fn moore(side: usize) -> Vec<Cell> {
    if side < 2 {
        return hilbert(side);
    }
    let h = side / 2;
    let last = h - 1;
    // (block origin, entry corner, exit corner), block-local
    let blocks = [
        ((0, 0), Cell::new(last, 0), Cell::new(last, last)),
        ((0, h), Cell::new(last, 0), Cell::new(last, last)),
        ((h, h), Cell::new(0, last), Cell::new(0, 0)),
        ((h, 0), Cell::new(0, last), Cell::new(0, 0)),
    ];
    let mut out = Vec::with_capacity(side * side);
    for ((ox, oy), from, to) in blocks {
        out.extend(
            hilbert_between(h, from, to)
                .into_iter()
                .map(|c| Cell::new(c.x + ox, c.y + oy)),
        );
    }
    out
}
