//! Structure distortion score (SDS).
//!
//! For an interior sequence position `i` (one with all of `i-2, i-1, i+1,
//! i+2`), the score is the sum of grid Euclidean distances from the patch at
//! `i` to those four sequence neighbours. `Mean` divides the sum by four,
//! which puts every unit-step curve in `[(1+sqrt 2)/2, 1.5]`. Positions
//! without four neighbours carry no score and are left out of coverage
//! denominators.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::curve::{Cell, CurveKind, GridShape, ScanOrder};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Aggregation {
    Sum,
    #[default]
    Mean,
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregation::Sum => "sum",
            Aggregation::Mean => "mean",
        })
    }
}

impl FromStr for Aggregation {
    type Err = SdsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sum" => Ok(Aggregation::Sum),
            "mean" => Ok(Aggregation::Mean),
            _ => Err(SdsError::UnknownAggregation(s.to_string())),
        }
    }
}

impl Serialize for Aggregation {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Aggregation {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SdsError {
    #[error("order has {0} positions; at least 5 are needed for an interior patch")]
    TooShort(usize),
    #[error("threshold list is empty")]
    EmptyThresholds,
    #[error("thresholds must be finite and strictly ascending")]
    UnsortedThresholds,
    #[error("unknown aggregation {0:?}")]
    UnknownAggregation(String),
    #[error("i/o failure: {0}")]
    IoFailure(#[from] std::io::Error),
}

/// Per-patch scores for one (curve, grid) pair plus an optional coverage table.
#[derive(Clone, Debug, PartialEq)]
pub struct SdsReport {
    pub order_kind: CurveKind,
    pub shape: GridShape,
    pub aggregation: Aggregation,
    /// Indexed by sequence position; `None` at the two positions on each end.
    pub per_patch_sds: Vec<Option<f64>>,
    pub cells: Vec<Cell>,
    pub thresholds: Vec<f64>,
    pub coverage: Vec<f64>,
}

pub fn compute_sds(order: &ScanOrder, aggregation: Aggregation) -> Result<SdsReport, SdsError> {
    let n = order.len();
    if n < 5 {
        return Err(SdsError::TooShort(n));
    }
    let cells = order.cells();
    let per_patch_sds = (0..n)
        .map(|i| {
            if i < 2 || i + 2 >= n {
                return None;
            }
            let p = cells[i];
            // fixed summation order: i-2, i-1, i+1, i+2
            let sum =
                p.euclidean(cells[i - 2]) + p.euclidean(cells[i - 1]) + p.euclidean(cells[i + 1]) + p.euclidean(cells[i + 2]);
            Some(match aggregation {
                Aggregation::Sum => sum,
                Aggregation::Mean => sum / 4.0,
            })
        })
        .collect();
    Ok(SdsReport {
        order_kind: order.kind(),
        shape: order.shape(),
        aggregation,
        per_patch_sds,
        cells: cells.to_vec(),
        thresholds: Vec::new(),
        coverage: Vec::new(),
    })
}

/// Fraction of interior patches with score `<=` each threshold.
pub fn threshold_table(report: &SdsReport, thresholds: &[f64]) -> Result<Vec<f64>, SdsError> {
    if thresholds.is_empty() {
        return Err(SdsError::EmptyThresholds);
    }
    if thresholds.iter().any(|t| !t.is_finite()) || thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SdsError::UnsortedThresholds);
    }
    let interior: Vec<f64> = report.interior_values().collect();
    let denom = interior.len() as f64;
    Ok(thresholds
        .iter()
        .map(|&t| interior.iter().filter(|&&v| v <= t).count() as f64 / denom)
        .collect())
}

impl SdsReport {
    pub fn interior_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.per_patch_sds.iter().filter_map(|v| *v)
    }

    /// Number of interior patches, the denominator of every coverage value.
    pub fn denominator(&self) -> usize {
        self.interior_values().count()
    }

    /// Attaches a coverage table.
    pub fn with_table(mut self, thresholds: &[f64]) -> Result<Self, SdsError> {
        self.coverage = threshold_table(&self, thresholds)?;
        self.thresholds = thresholds.to_vec();
        Ok(self)
    }

    /// `(min, max)` over interior values.
    pub fn range(&self) -> (f64, f64) {
        self.interior_values()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    }

    pub fn to_json(&self) -> serde_json::Value {
        let per_patch: Vec<_> = self
            .per_patch_sds
            .iter()
            .zip(&self.cells)
            .enumerate()
            .map(|(index, (sds, c))| serde_json::json!({ "index": index, "x": c.x, "y": c.y, "sds": sds }))
            .collect();
        let table: Vec<_> = self
            .thresholds
            .iter()
            .zip(&self.coverage)
            .map(|(t, c)| serde_json::json!({ "threshold": t, "coverage": c }))
            .collect();
        serde_json::json!({
            "kind": self.order_kind.to_string(),
            "width": self.shape.width,
            "height": self.shape.height,
            "aggregation": self.aggregation.to_string(),
            "denominator": self.denominator(),
            "per_patch": per_patch,
            "table": table,
        })
    }

    /// Coverage table as aligned text, one threshold per line.
    pub fn table_text(&self) -> String {
        let mut s = format!(
            "{} {}x{} ({}, {} interior patches)\n",
            self.order_kind,
            self.shape.width,
            self.shape.height,
            self.aggregation,
            self.denominator()
        );
        s.push_str("threshold  coverage\n");
        for (t, c) in self.thresholds.iter().zip(&self.coverage) {
            s.push_str(&format!("{:>9.3}  {:>8.3}\n", t, c));
        }
        s
    }

    /// Plain-text PGM (P2) heatmap on the grid. Darker means higher score;
    /// values are normalized linearly over `range` (the report's own range
    /// when `None`). Boundary positions get the lightest shade and a
    /// degenerate range renders mid-gray.
    pub fn to_pgm(&self, range: Option<(f64, f64)>) -> String {
        let (lo, hi) = range.unwrap_or_else(|| self.range());
        let (w, h) = (self.shape.width, self.shape.height);
        let mut pixels = vec![255u8; w * h];
        for (v, c) in self.per_patch_sds.iter().zip(&self.cells) {
            if let Some(v) = v {
                pixels[c.y * w + c.x] = shade(*v, lo, hi);
            }
        }
        let mut s = format!("P2\n{} {}\n255\n", w, h);
        for row in pixels.chunks(w) {
            let line: Vec<String> = row.iter().map(|p| p.to_string()).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }
}

fn shade(v: f64, lo: f64, hi: f64) -> u8 {
    if hi.is_nan() || lo.is_nan() || hi <= lo {
        return 128;
    }
    let t = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
    255 - (t * 255.0).round() as u8
}

/// Joint `(min, max)` across reports, for side-by-side heatmaps.
pub fn joint_range(reports: &[&SdsReport]) -> (f64, f64) {
    reports
        .iter()
        .map(|r| r.range())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (a, b)| (lo.min(a), hi.max(b)))
}

pub fn export_heatmap(report: &SdsReport, range: Option<(f64, f64)>, path: &Path) -> Result<(), SdsError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(report.to_pgm(range).as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::generate_order;

    fn order(kind: CurveKind, n: usize) -> ScanOrder {
        generate_order(kind, GridShape::square(n).unwrap()).unwrap()
    }

    #[test]
    fn raster_row_interior_is_one_and_a_half() {
        let r = compute_sds(&order(CurveKind::Raster, 8), Aggregation::Mean).unwrap();
        // position (4, 3): neighbours (2..=6, 3) all in one row
        let i = 3 * 8 + 4;
        assert_eq!(r.per_patch_sds[i], Some(1.5));
    }

    #[test]
    fn hilbert_diagonal_neighbours() {
        let o = order(CurveKind::Hilbert, 4);
        let r = compute_sds(&o, Aggregation::Mean).unwrap();
        let expected = (2.0 + 2.0 * 2f64.sqrt()) / 4.0;
        // enumerate: a position whose 2-step neighbours are both diagonal
        let cells = o.cells();
        let i = (2..14)
            .find(|&i| {
                cells[i].manhattan(cells[i - 2]) == 2
                    && cells[i].manhattan(cells[i + 2]) == 2
                    && cells[i].x != cells[i - 2].x
                    && cells[i].y != cells[i - 2].y
                    && cells[i].x != cells[i + 2].x
                    && cells[i].y != cells[i + 2].y
            })
            .expect("4x4 Hilbert has a doubly diagonal position");
        assert!((r.per_patch_sds[i].unwrap() - expected).abs() < 1e-15);
        assert!((expected - 1.2071067811865475).abs() < 1e-15);
    }

    #[test]
    fn sum_minimum_on_unit_step_curves() {
        let r = compute_sds(&order(CurveKind::Hilbert, 8), Aggregation::Sum).unwrap();
        let min = r.range().0;
        assert!((min - (2.0 + 2.0 * 2f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn boundary_positions_have_no_score() {
        let r = compute_sds(&order(CurveKind::Raster, 4), Aggregation::Mean).unwrap();
        assert_eq!(r.per_patch_sds[0], None);
        assert_eq!(r.per_patch_sds[1], None);
        assert_eq!(r.per_patch_sds[14], None);
        assert_eq!(r.per_patch_sds[15], None);
        assert_eq!(r.denominator(), 12);
    }

    #[test]
    fn too_short_and_threshold_errors() {
        let o = order(CurveKind::Hilbert, 2);
        assert!(matches!(compute_sds(&o, Aggregation::Mean), Err(SdsError::TooShort(4))));
        let r = compute_sds(&order(CurveKind::Hilbert, 4), Aggregation::Mean).unwrap();
        assert!(matches!(threshold_table(&r, &[]), Err(SdsError::EmptyThresholds)));
        assert!(matches!(threshold_table(&r, &[1.5, 1.5]), Err(SdsError::UnsortedThresholds)));
    }

    #[test]
    fn coverage_below_minimum_is_zero_and_at_one_and_a_half_is_one() {
        let r = compute_sds(&order(CurveKind::Hilbert, 16), Aggregation::Mean).unwrap();
        let cov = threshold_table(&r, &[1.2, 1.5]).unwrap();
        assert_eq!(cov, vec![0.0, 1.0]);
    }

    #[test]
    fn pgm_header_and_degenerate_range() {
        let r = compute_sds(&order(CurveKind::Hilbert, 4), Aggregation::Mean).unwrap();
        assert!(r.to_pgm(None).starts_with("P2\n4 4\n255\n"));
        let mut flat = r.clone();
        for v in flat.per_patch_sds.iter_mut().flatten() {
            *v = 1.3;
        }
        let pgm = flat.to_pgm(None);
        let body: Vec<u8> = pgm
            .lines()
            .skip(3)
            .flat_map(|l| l.split(' ').map(|p| p.parse::<u8>().unwrap()))
            .collect();
        for (i, c) in flat.cells.iter().enumerate() {
            let px = body[c.y * 4 + c.x];
            if flat.per_patch_sds[i].is_some() {
                assert_eq!(px, 128);
            } else {
                assert_eq!(px, 255);
            }
        }
    }

    #[test]
    fn json_report_fields() {
        let r = compute_sds(&order(CurveKind::LocalWindow(4), 8), Aggregation::Mean)
            .unwrap()
            .with_table(&[1.5, 2.0])
            .unwrap();
        let j = r.to_json();
        assert_eq!(j["kind"], "local:4");
        assert_eq!(j["aggregation"], "mean");
        assert_eq!(j["denominator"], 60);
        assert_eq!(j["per_patch"].as_array().unwrap().len(), 64);
        assert!(j["per_patch"][0]["sds"].is_null());
        assert_eq!(j["table"][1]["threshold"], 2.0);
    }
}
