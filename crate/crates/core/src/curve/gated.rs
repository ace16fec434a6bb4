//! Quadrant-recursive curves with free gate placement.
//!
//! A block of side `n >= 4` is split into four quadrants visited in a U, the
//! only Hamiltonian order on a 2x2 arrangement. Each quadrant is traversed
//! recursively from an entry gate to an exit gate; consecutive quadrants are
//! joined through a facing pair of cells on their shared edge. Gate positions
//! are chosen in preference order (middle of the shared edge first) subject
//! to two necessary conditions at every level: entry and exit have opposite
//! checkerboard colour, and sit in distinct, edge-adjacent quadrants.

use std::collections::HashMap;

use super::Cell;

/// The `Meurthe` production. Entry on the left edge and exit at the mirror
/// cell on the right edge, both as close to the middle of the lower half as
/// the gate conditions allow; mid-edge-first gates inside.
pub(super) fn mid_gated(side: usize) -> Vec<Cell> {
    if side == 1 {
        return vec![Cell::new(0, 0)];
    }
    let mut solver = GateSolver::default();
    let (entry, exit) = mid_first(side / 2)
        .into_iter()
        .map(|y| (Cell::new(0, y), Cell::new(side - 1, y)))
        .find(|&(e, x)| solver.feasible(side, e, x))
        .expect("corner gates are always feasible");
    let mut out = Vec::with_capacity(side * side);
    solver.emit(side, entry, exit, Cell::new(0, 0), &mut out);
    out
}

/// `0..h` ordered by distance from the middle, ties to the lower offset.
fn mid_first(h: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..h).collect();
    v.sort_by_key(|&s| ((2 * s).abs_diff(h - 1), s));
    v
}

type Key = (usize, Cell, Cell);
type Plan = [(Cell, Cell, Cell); 4]; // (quadrant origin, local entry, local exit)

#[derive(Default)]
struct GateSolver {
    plans: HashMap<Key, Option<Plan>>,
}

const CYCLE: [(usize, usize); 4] = [(0, 0), (1, 0), (1, 1), (0, 1)];

fn colour(c: Cell) -> usize {
    (c.x + c.y) & 1
}

impl GateSolver {
    fn feasible(&mut self, n: usize, entry: Cell, exit: Cell) -> bool {
        match n {
            1 => entry == exit,
            2 => entry.manhattan(exit) == 1,
            _ => self.plan(n, entry, exit).is_some(),
        }
    }

    fn plan(&mut self, n: usize, entry: Cell, exit: Cell) -> Option<Plan> {
        let key = (n, entry, exit);
        if let Some(p) = self.plans.get(&key) {
            return *p;
        }
        let p = self.search(n, entry, exit);
        self.plans.insert(key, p);
        p
    }

    fn search(&mut self, n: usize, entry: Cell, exit: Cell) -> Option<Plan> {
        if colour(entry) == colour(exit) {
            return None;
        }
        let h = n / 2;
        let qe = (entry.x / h, entry.y / h);
        let qx = (exit.x / h, exit.y / h);
        if qe.0.abs_diff(qx.0) + qe.1.abs_diff(qx.1) != 1 {
            return None;
        }
        let ie = CYCLE.iter().position(|&q| q == qe).unwrap();
        let step = if CYCLE[(ie + 1) % 4] == qx { 3 } else { 1 };
        let quads: [(usize, usize); 4] = std::array::from_fn(|k| CYCLE[(ie + k * step) % 4]);
        let origin = |q: (usize, usize)| Cell::new(q.0 * h, q.1 * h);
        let local = |c: Cell, q: (usize, usize)| Cell::new(c.x - q.0 * h, c.y - q.1 * h);

        let candidates = mid_first(h);

        let e0 = local(entry, quads[0]);
        let x3 = local(exit, quads[3]);
        for &s1 in &candidates {
            let (x0, e1) = crossing(quads[0], quads[1], s1, h);
            if !self.feasible(h, e0, x0) {
                continue;
            }
            for &s2 in &candidates {
                let (x1, e2) = crossing(quads[1], quads[2], s2, h);
                if !self.feasible(h, e1, x1) {
                    continue;
                }
                for &s3 in &candidates {
                    let (x2, e3) = crossing(quads[2], quads[3], s3, h);
                    if self.feasible(h, e2, x2) && self.feasible(h, e3, x3) {
                        return Some([
                            (origin(quads[0]), e0, x0),
                            (origin(quads[1]), e1, x1),
                            (origin(quads[2]), e2, x2),
                            (origin(quads[3]), e3, x3),
                        ]);
                    }
                }
            }
        }
        None
    }

    fn emit(&mut self, n: usize, entry: Cell, exit: Cell, origin: Cell, out: &mut Vec<Cell>) {
        let at = |c: Cell| Cell::new(c.x + origin.x, c.y + origin.y);
        match n {
            1 => out.push(at(entry)),
            2 => {
                // walk the 2x2 ring starting at `entry`, away from `exit`
                let ring = CYCLE.map(|(x, y)| Cell::new(x, y));
                let i = ring.iter().position(|&c| c == entry).unwrap();
                let step = if ring[(i + 1) % 4] == exit { 3 } else { 1 };
                for k in 0..4 {
                    out.push(at(ring[(i + k * step) % 4]));
                }
            }
            _ => {
                let plan = self.plan(n, entry, exit).expect("emit is only called on feasible gates");
                for (o, e, x) in plan {
                    self.emit(n / 2, e, x, at(o), out);
                }
            }
        }
    }
}

/// Facing cells on the edge shared by quadrants `a` and `b`, at offset `s`
/// along that edge, in each quadrant's local coordinates.
fn crossing(a: (usize, usize), b: (usize, usize), s: usize, h: usize) -> (Cell, Cell) {
    let far = |lo: bool| if lo { h - 1 } else { 0 };
    if a.0 != b.0 {
        (Cell::new(far(a.0 < b.0), s), Cell::new(far(b.0 < a.0), s))
    } else {
        (Cell::new(s, far(a.1 < b.1)), Cell::new(s, far(b.1 < a.1)))
    }
}
