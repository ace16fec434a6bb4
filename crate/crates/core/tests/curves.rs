use fractalssm::curve::{
    block_locality_check, generate_order, generate_order_padded, Cell, CurveError, CurveKind, GridShape, ScanOrder,
};
use proptest::prelude::*;

const FRACTALS: [CurveKind; 3] = [CurveKind::Hilbert, CurveKind::Coil, CurveKind::Meurthe];

fn order(kind: CurveKind, side: usize) -> ScanOrder {
    generate_order(kind, GridShape::square(side).unwrap()).unwrap()
}

/// Textbook rotate-and-flip index to coordinate map.
fn d2xy(n: usize, mut d: usize) -> (usize, usize) {
    let (mut x, mut y) = (0, 0);
    let mut s = 1;
    while s < n {
        let rx = 1 & (d / 2);
        let ry = 1 & (d ^ rx);
        if ry == 0 {
            if rx == 1 {
                x = s - 1 - x;
                y = s - 1 - y;
            }
            std::mem::swap(&mut x, &mut y);
        }
        x += s * rx;
        y += s * ry;
        d /= 4;
        s *= 2;
    }
    (x, y)
}

#[test]
fn hilbert_matches_reference_map_up_to_64() {
    for k in 0..=6 {
        let n = 1 << k;
        let o = order(CurveKind::Hilbert, n);
        for d in 0..n * n {
            let (x, y) = d2xy(n, d);
            assert_eq!(o.cell(d), Cell::new(x, y), "side {n}, index {d}");
        }
    }
}

#[test]
fn fractal_orders_are_unit_step_bijections_up_to_64() {
    for kind in FRACTALS {
        for k in 0..=6 {
            let n = 1 << k;
            let o = order(kind, n);
            assert_eq!(o.len(), n * n);
            assert!(o.is_unit_step(), "{kind} {n}");
            for (i, &c) in o.cells().iter().enumerate() {
                assert_eq!(o.index_of(c), i);
            }
            for level in 0..=k {
                assert!(block_locality_check(&o, level as u32).unwrap(), "{kind} {n} level {level}");
            }
        }
    }
}

#[test]
fn endpoints() {
    for k in 1..=6 {
        let n = 1 << k;
        let h = order(CurveKind::Hilbert, n);
        assert_eq!((h.cell(0), h.cell(n * n - 1)), (Cell::new(0, 0), Cell::new(n - 1, 0)));
        let c = order(CurveKind::Coil, n);
        // closed loop: last cell touches the first
        assert_eq!(c.cell(0).manhattan(c.cell(n * n - 1)), 1, "coil {n}");
        let m = order(CurveKind::Meurthe, n);
        assert_eq!(m.cell(0).x, 0);
        assert_eq!(m.cell(n * n - 1).x, n - 1);
        assert_eq!(m.cell(0).y, m.cell(n * n - 1).y);
    }
}

#[test]
fn curves_are_distinct_from_eight() {
    assert_eq!(
        order(CurveKind::Meurthe, 4),
        order(CurveKind::Hilbert, 4).with_kind(CurveKind::Meurthe)
    );
    for n in [8, 16, 32] {
        let h = order(CurveKind::Hilbert, n);
        let c = order(CurveKind::Coil, n);
        let m = order(CurveKind::Meurthe, n);
        assert_ne!(h.cells(), c.cells());
        assert_ne!(h.cells(), m.cells());
        assert_ne!(c.cells(), m.cells());
    }
}

#[test]
fn non_fractal_kinds() {
    let r = order(CurveKind::Raster, 4);
    assert_eq!(r.cell(5), Cell::new(1, 1));
    let z = order(CurveKind::Zigzag, 4);
    assert_eq!(z.cell(4), Cell::new(3, 1));
    assert!(z.is_unit_step());
    let l = order(CurveKind::LocalWindow(2), 4);
    assert_eq!(
        &l.cells()[..5],
        &[
            Cell::new(0, 0),
            Cell::new(1, 0),
            Cell::new(0, 1),
            Cell::new(1, 1),
            Cell::new(2, 0)
        ]
    );
}

#[test]
fn shape_errors_and_padding() {
    for kind in FRACTALS {
        assert!(matches!(
            generate_order(kind, GridShape::square(3).unwrap()),
            Err(CurveError::InvalidShape { width: 3, height: 3, .. })
        ));
        assert!(generate_order(kind, GridShape::new(4, 8).unwrap()).is_err());
        let p = generate_order_padded(kind, GridShape::new(5, 3).unwrap()).unwrap();
        assert_eq!(p.len(), 15);
    }
    assert!(generate_order(CurveKind::Raster, GridShape::new(5, 3).unwrap()).is_ok());
    assert!("peano".parse::<CurveKind>().is_err());
    assert_eq!("local:3".parse::<CurveKind>(), Ok(CurveKind::LocalWindow(3)));
}

#[test]
fn csv_layout() {
    let csv = order(CurveKind::Raster, 2).to_csv();
    assert_eq!(csv, "index,x,y\n0,0,0\n1,1,0\n2,0,1\n3,1,1\n");
}

proptest! {
    #[test]
    fn any_shape_orders_are_bijections(w in 1usize..20, h in 1usize..20, kind_ix in 0usize..6) {
        let kind = [CurveKind::Hilbert, CurveKind::Coil, CurveKind::Meurthe, CurveKind::Raster, CurveKind::Zigzag, CurveKind::LocalWindow(3)][kind_ix];
        let o = generate_order_padded(kind, GridShape::new(w, h).unwrap()).unwrap();
        prop_assert_eq!(o.len(), w * h);
        for (i, &c) in o.cells().iter().enumerate() {
            prop_assert_eq!(o.inverse()[c.y * w + c.x], i);
        }
    }

    #[test]
    fn padded_keeps_enclosing_relative_order(w in 1usize..17, h in 1usize..17) {
        let side = w.max(h).next_power_of_two();
        let full = order(CurveKind::Hilbert, side);
        let p = generate_order_padded(CurveKind::Hilbert, GridShape::new(w, h).unwrap()).unwrap();
        let ranks: Vec<usize> = p.cells().iter().map(|&c| full.index_of(c)).collect();
        prop_assert!(ranks.windows(2).all(|r| r[0] < r[1]));
    }
}
