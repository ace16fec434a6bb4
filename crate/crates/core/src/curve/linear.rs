use super::{Cell, GridShape};

pub(super) fn raster(shape: GridShape) -> Vec<Cell> {
    (0..shape.height)
        .flat_map(|y| (0..shape.width).map(move |x| Cell::new(x, y)))
        .collect()
}

pub(super) fn zigzag(shape: GridShape) -> Vec<Cell> {
    let w = shape.width;
    (0..shape.height)
        .flat_map(|y| {
            (0..w).map(move |i| {
                let x = if y % 2 == 0 { i } else { w - 1 - i };
                Cell::new(x, y)
            })
        })
        .collect()
}

/// Raster over `window x window` tiles, raster inside each tile. Tiles on the
/// right and bottom edges are clipped when the window does not divide the grid.
pub(super) fn local_window(shape: GridShape, window: usize) -> Vec<Cell> {
    let mut out = Vec::with_capacity(shape.len());
    for wy in (0..shape.height).step_by(window) {
        for wx in (0..shape.width).step_by(window) {
            for y in wy..(wy + window).min(shape.height) {
                for x in wx..(wx + window).min(shape.width) {
                    out.push(Cell::new(x, y));
                }
            }
        }
    }
    out
}
