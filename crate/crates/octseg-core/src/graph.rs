//! Boundary search on gradient-weighted pixel graphs.
//!
//! A B-scan is turned into two vertical-gradient fields (dark-to-light and
//! light-to-dark). Within a region of interest, every pixel becomes a node
//! with directed edges to the admissible pixels of the next column whose row
//! differs by at most a configured step. Edge weights fall as the gradient
//! magnitude of the two endpoints rises, so the minimum-cost left-to-right
//! path traces the strongest continuous edge. Virtual source and sink nodes
//! make the endpoints free: they connect to every admissible pixel of the
//! first and last columns at the minimal weight.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image_io::BScan;

/// Search parameters for [`shortest_boundary`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    /// Weight floor added to every edge so that zero-gradient paths still
    /// carry positive cost.
    pub w_min: f64,
    /// Largest allowed row change between adjacent columns of a path.
    pub max_vertical_step: usize,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            w_min: 1e-5,
            max_vertical_step: 1,
        }
    }
}

impl GraphConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.w_min.is_finite() || self.w_min <= 0.0 {
            return Err(Error::Config(format!(
                "graph.w_min must be a positive finite number, got {}",
                self.w_min
            )));
        }
        if !(1..=8).contains(&self.max_vertical_step) {
            return Err(Error::Config(format!(
                "graph.max_vertical_step must be within 1..=8, got {}",
                self.max_vertical_step
            )));
        }
        Ok(())
    }
}

/// Direction a gradient field responds to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientDirection {
    /// High where intensity increases downward (dark above, bright below).
    DarkToLight,
    /// High where intensity decreases downward (bright above, dark below).
    LightToDark,
}

/// Normalized vertical-gradient image; values lie in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct GradientField {
    pub rows: usize,
    pub cols: usize,
    pub direction: GradientDirection,
    g: Vec<f64>,
}

impl GradientField {
    /// Builds a field from raw values. Intended for tests and synthetic
    /// inputs; the pipeline obtains fields from [`vertical_gradients`].
    pub fn from_values(
        rows: usize,
        cols: usize,
        direction: GradientDirection,
        g: Vec<f64>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyImage);
        }
        if g.len() != rows * cols {
            return Err(Error::PixelCountMismatch {
                rows,
                cols,
                got: g.len(),
            });
        }
        Ok(Self {
            rows,
            cols,
            direction,
            g,
        })
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.g[row * self.cols + col]
    }

    pub fn values(&self) -> &[f64] {
        &self.g
    }
}

/// The two complementary gradient fields of one scan.
#[derive(Debug, Clone)]
pub struct GradientPair {
    pub dark_to_light: GradientField,
    pub light_to_dark: GradientField,
    /// True when the scan carried no gradient variation at all; both fields
    /// are then flat 0.5 and boundaries found on them are meaningless.
    pub degenerate: bool,
}

/// Computes the forward vertical derivative of every pixel, replicating the
/// last row, then min-max normalizes the whole field to `[0, 1]`. The
/// normalized field answers dark-to-light transitions; its complement
/// (`1 - g`) answers light-to-dark ones, so the two always sum to one.
///
/// A scan without any intensity variation has no spread to normalize by;
/// both fields are then filled with 0.5 and the pair is flagged degenerate.
pub fn vertical_gradients(scan: &BScan) -> GradientPair {
    let (rows, cols) = (scan.rows, scan.cols);
    let mut d = vec![0.0f64; rows * cols];
    if rows >= 2 {
        for r in 0..rows - 1 {
            for c in 0..cols {
                d[r * cols + c] = scan.at(r + 1, c) - scan.at(r, c);
            }
        }
        for c in 0..cols {
            d[(rows - 1) * cols + c] = d[(rows - 2) * cols + c];
        }
    }

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in &d {
        lo = lo.min(v);
        hi = hi.max(v);
    }

    let degenerate = rows < 2 || hi == lo;
    let dark_to_light: Vec<f64> = if degenerate {
        vec![0.5; rows * cols]
    } else {
        let range = hi - lo;
        d.iter().map(|&v| (v - lo) / range).collect()
    };
    let light_to_dark: Vec<f64> = dark_to_light.iter().map(|&v| 1.0 - v).collect();

    GradientPair {
        dark_to_light: GradientField {
            rows,
            cols,
            direction: GradientDirection::DarkToLight,
            g: dark_to_light,
        },
        light_to_dark: GradientField {
            rows,
            cols,
            direction: GradientDirection::LightToDark,
            g: light_to_dark,
        },
        degenerate,
    }
}

/// Weight of the edge between two pixels whose normalized gradients are
/// `g_a` and `g_b`: `2 - (g_a + g_b) + w_min`. Strong gradients at both ends
/// drive the weight toward the floor `w_min`.
#[inline]
pub fn edge_weight(g_a: f64, g_b: f64, w_min: f64) -> f64 {
    2.0 - (g_a + g_b) + w_min
}

/// Per-pixel admissibility mask restricting the boundary search.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoiMask {
    pub rows: usize,
    pub cols: usize,
    mask: Vec<bool>,
}

impl RoiMask {
    /// Mask admitting every pixel.
    pub fn full(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            mask: vec![true; rows * cols],
        }
    }

    /// Mask admitting nothing; callers switch pixels on individually.
    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            mask: vec![false; rows * cols],
        }
    }

    /// Mask admitting, per column, the inclusive row band `bounds[c] =
    /// (top, bottom)`. Bands are clamped to the image; a column whose band
    /// is empty after clamping stays fully inadmissible.
    pub fn from_row_bounds(rows: usize, cols: usize, bounds: &[(usize, usize)]) -> Result<Self> {
        if bounds.len() != cols {
            return Err(Error::ColumnCountMismatch {
                left: cols,
                right: bounds.len(),
            });
        }
        let mut roi = Self::empty(rows, cols);
        for (c, &(top, bottom)) in bounds.iter().enumerate() {
            let bottom = bottom.min(rows.saturating_sub(1));
            for r in top..=bottom {
                roi.set(r, c, true);
            }
        }
        Ok(roi)
    }

    #[inline]
    pub fn admissible(&self, row: usize, col: usize) -> bool {
        self.mask[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.mask[row * self.cols + col] = value;
    }

    /// Number of admissible pixels in one column.
    pub fn column_count(&self, col: usize) -> usize {
        (0..self.rows).filter(|&r| self.admissible(r, col)).count()
    }
}

/// Names the anatomical meaning of a traced boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryLabel {
    Ilm,
    Rnfl,
    Rpe,
    /// Intermediate boundary with no anatomical commitment yet.
    Raw,
}

/// One row per column plus the cost of the path that produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Boundary {
    pub label: BoundaryLabel,
    pub row: Vec<usize>,
    pub cost: f64,
}

impl Boundary {
    pub fn new(label: BoundaryLabel, row: Vec<usize>, cost: f64) -> Self {
        Self { label, row, cost }
    }

    pub fn cols(&self) -> usize {
        self.row.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct HeapEntry {
    /// Total-order key wrapping the f64 cost; see `OrderedCost`.
    cost: OrderedCost,
    row: usize,
    seq: u64,
    col: usize,
}

/// f64 wrapper ordered by `total_cmp`; path costs are finite sums of
/// positive weights, so the exotic orderings of `total_cmp` never surface.
#[derive(Debug, Clone, Copy, PartialEq)]
struct OrderedCost(f64);

impl Eq for OrderedCost {}

impl PartialOrd for OrderedCost {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrderedCost {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Finds the minimum-cost left-to-right path through the ROI and returns it
/// as one row per column.
///
/// A virtual source connects to every admissible pixel of the first column
/// and every admissible pixel of the last column connects to a virtual
/// sink, both at weight `w_min`, so the path endpoints are unconstrained.
/// Between columns `c` and `c + 1` the path may move at most
/// `max_vertical_step` rows. Cost ties are broken toward the smaller row
/// and then toward the node relaxed earlier, which makes the result
/// deterministic for identical inputs.
pub fn shortest_boundary(
    field: &GradientField,
    roi: &RoiMask,
    config: &GraphConfig,
) -> Result<Boundary> {
    shortest_boundary_anchored(field, roi, 0..field.cols, None, None, config)
}

/// [`shortest_boundary`] restricted to the columns in `span`, optionally
/// pinning the path next to known rows just outside the span: with
/// `left_anchor` the first column may only use rows within the vertical
/// step of that row, and `right_anchor` constrains the last column the same
/// way. Re-segmenting an interval of a longer boundary without tearing the
/// seams is the intended use.
pub fn shortest_boundary_anchored(
    field: &GradientField,
    roi: &RoiMask,
    span: std::ops::Range<usize>,
    left_anchor: Option<usize>,
    right_anchor: Option<usize>,
    config: &GraphConfig,
) -> Result<Boundary> {
    if field.rows != roi.rows || field.cols != roi.cols {
        return Err(Error::ColumnCountMismatch {
            left: field.cols,
            right: roi.cols,
        });
    }
    if !(1..=8).contains(&config.max_vertical_step) {
        return Err(Error::Config(format!(
            "max_vertical_step must be within 1..=8, got {}",
            config.max_vertical_step
        )));
    }
    if span.start >= span.end || span.end > field.cols {
        return Err(Error::Config(format!(
            "column span {}..{} is empty or exceeds the {} available columns",
            span.start, span.end, field.cols
        )));
    }

    let rows = field.rows;
    let width = span.end - span.start;
    let m = config.max_vertical_step as isize;
    let w_min = config.w_min;

    for c in span.clone() {
        if roi.column_count(c) == 0 {
            return Err(Error::DisconnectedRoi {
                reason: format!("column {c} has no admissible pixels"),
            });
        }
    }

    let within = |row: usize, anchor: Option<usize>| -> bool {
        match anchor {
            None => true,
            Some(a) => (row as isize - a as isize).abs() <= m,
        }
    };

    let idx = |row: usize, col: usize| -> usize { (col - span.start) * rows + row };

    let mut dist = vec![f64::INFINITY; width * rows];
    let mut parent = vec![usize::MAX; width * rows];
    let mut heap = std::collections::BinaryHeap::new();
    let mut seq = 0u64;

    for r in 0..rows {
        if roi.admissible(r, span.start) && within(r, left_anchor) {
            dist[idx(r, span.start)] = w_min;
            heap.push(std::cmp::Reverse(HeapEntry {
                cost: OrderedCost(w_min),
                row: r,
                seq,
                col: span.start,
            }));
            seq += 1;
        }
    }
    if heap.is_empty() {
        return Err(Error::DisconnectedRoi {
            reason: format!(
                "no admissible pixel in column {} reachable from the left anchor",
                span.start
            ),
        });
    }

    while let Some(std::cmp::Reverse(entry)) = heap.pop() {
        let (row, col) = (entry.row, entry.col);
        if entry.cost.0 > dist[idx(row, col)] {
            continue;
        }
        if col + 1 >= span.end {
            continue;
        }
        let g_here = field.at(row, col);
        let lo = (row as isize - m).max(0) as usize;
        let hi = ((row as isize + m) as usize).min(rows - 1);
        for next in lo..=hi {
            if !roi.admissible(next, col + 1) {
                continue;
            }
            let w = edge_weight(g_here, field.at(next, col + 1), w_min);
            let cand = dist[idx(row, col)] + w;
            if cand < dist[idx(next, col + 1)] {
                dist[idx(next, col + 1)] = cand;
                parent[idx(next, col + 1)] = row;
                heap.push(std::cmp::Reverse(HeapEntry {
                    cost: OrderedCost(cand),
                    row: next,
                    seq,
                    col: col + 1,
                }));
                seq += 1;
            }
        }
    }

    let last = span.end - 1;
    let mut best: Option<(f64, usize)> = None;
    for r in 0..rows {
        if !roi.admissible(r, last) || !within(r, right_anchor) {
            continue;
        }
        let d = dist[idx(r, last)];
        if !d.is_finite() {
            continue;
        }
        let total = d + w_min;
        let better = match best {
            None => true,
            Some((bc, _)) => total < bc,
        };
        if better {
            best = Some((total, r));
        }
    }

    let (cost, end_row) = best.ok_or_else(|| Error::DisconnectedRoi {
        reason: "no admissible path connects the first and last columns".to_string(),
    })?;

    let mut row = vec![0usize; width];
    let mut r = end_row;
    for c in (span.start..span.end).rev() {
        row[c - span.start] = r;
        if c > span.start {
            r = parent[idx(r, c)];
        }
    }

    Ok(Boundary::new(BoundaryLabel::Raw, row, cost))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scan_from(rows: usize, cols: usize, data: Vec<f64>) -> BScan {
        BScan::new(rows, cols, data, "test").unwrap()
    }

    fn uniform_field(rows: usize, cols: usize, value: f64) -> GradientField {
        GradientField::from_values(
            rows,
            cols,
            GradientDirection::DarkToLight,
            vec![value; rows * cols],
        )
        .unwrap()
    }

    /// Exhaustive path enumeration used to certify the search. Accumulates
    /// costs in path order exactly like the implementation does.
    fn brute_force_cost(
        field: &GradientField,
        roi: &RoiMask,
        m: isize,
        w_min: f64,
    ) -> Option<f64> {
        fn recurse(
            field: &GradientField,
            roi: &RoiMask,
            m: isize,
            w_min: f64,
            row: usize,
            col: usize,
            cost: f64,
            best: &mut Option<f64>,
        ) {
            if col + 1 == field.cols {
                let total = cost + w_min;
                if best.map_or(true, |b| total < b) {
                    *best = Some(total);
                }
                return;
            }
            for next in 0..field.rows {
                if (next as isize - row as isize).abs() > m {
                    continue;
                }
                if !roi.admissible(next, col + 1) {
                    continue;
                }
                let w = edge_weight(field.at(row, col), field.at(next, col + 1), w_min);
                recurse(field, roi, m, w_min, next, col + 1, cost + w, best);
            }
        }

        let mut best = None;
        for r in 0..field.rows {
            if roi.admissible(r, 0) {
                recurse(field, roi, m, w_min, r, 0, w_min, &mut best);
            }
        }
        best
    }

    #[test]
    fn step_image_gradients_peak_on_the_step_row() {
        let rows = 6;
        let cols = 4;
        let mut data = vec![0.0; rows * cols];
        for r in 3..rows {
            for c in 0..cols {
                data[r * cols + c] = 1.0;
            }
        }
        let pair = vertical_gradients(&scan_from(rows, cols, data));
        assert!(!pair.degenerate);
        for c in 0..cols {
            for r in 0..rows {
                let expected = if r == 2 { 1.0 } else { 0.0 };
                assert_eq!(pair.dark_to_light.at(r, c), expected, "row {r} col {c}");
                assert_eq!(pair.light_to_dark.at(r, c), 1.0 - expected);
            }
        }
    }

    #[test]
    fn constant_image_yields_flat_half_fields_and_degenerate_flag() {
        let pair = vertical_gradients(&scan_from(4, 5, vec![0.3; 20]));
        assert!(pair.degenerate);
        assert!(pair.dark_to_light.values().iter().all(|&v| v == 0.5));
        assert!(pair.light_to_dark.values().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn last_row_replicates_the_previous_derivative() {
        // Two rows: the single real derivative row is copied into the last.
        let pair = vertical_gradients(&scan_from(2, 2, vec![0.0, 0.25, 1.0, 0.75]));
        assert_eq!(pair.dark_to_light.at(0, 0), pair.dark_to_light.at(1, 0));
        assert_eq!(pair.dark_to_light.at(0, 1), pair.dark_to_light.at(1, 1));
    }

    #[test]
    fn complement_fields_sum_to_one_everywhere() {
        let data: Vec<f64> = (0..64).map(|i| ((i * 37) % 64) as f64 / 63.0).collect();
        let pair = vertical_gradients(&scan_from(8, 8, data));
        for (a, b) in pair
            .dark_to_light
            .values()
            .iter()
            .zip(pair.light_to_dark.values())
        {
            assert_eq!(a + b, 1.0);
        }
    }

    #[test]
    fn edge_weight_hits_floor_and_ceiling() {
        let w_min = 1e-5;
        assert!((edge_weight(1.0, 1.0, w_min) - w_min).abs() < 1e-15);
        assert!((edge_weight(0.0, 0.0, w_min) - (2.0 + w_min)).abs() < 1e-15);
    }

    #[test]
    fn boundary_follows_a_bright_line_and_costs_the_floor() {
        let (rows, cols) = (9, 12);
        let w_min = 1e-5;
        let mut g = vec![0.0; rows * cols];
        for c in 0..cols {
            g[4 * cols + c] = 1.0;
        }
        let field =
            GradientField::from_values(rows, cols, GradientDirection::LightToDark, g).unwrap();
        let cfg = GraphConfig::default();
        let b = shortest_boundary(&field, &RoiMask::full(rows, cols), &cfg).unwrap();
        assert_eq!(b.row, vec![4; cols]);
        let expected = (cols - 1) as f64 * w_min + 2.0 * w_min;
        assert!((b.cost - expected).abs() < 1e-12, "cost {}", b.cost);
    }

    #[test]
    fn single_row_roi_forces_that_row() {
        let field = uniform_field(7, 5, 0.2);
        let roi = RoiMask::from_row_bounds(7, 5, &[(3, 3); 5]).unwrap();
        let b = shortest_boundary(&field, &roi, &GraphConfig::default()).unwrap();
        assert_eq!(b.row, vec![3; 5]);
    }

    #[test]
    fn empty_column_is_reported_as_disconnected() {
        let field = uniform_field(6, 4, 0.5);
        let mut roi = RoiMask::full(6, 4);
        for r in 0..6 {
            roi.set(r, 2, false);
        }
        let err = shortest_boundary(&field, &roi, &GraphConfig::default()).unwrap_err();
        assert!(matches!(err, Error::DisconnectedRoi { .. }), "{err:?}");
    }

    #[test]
    fn unreachable_columns_are_reported_as_disconnected() {
        // Every column has pixels, but the step bound cannot bridge them.
        let field = uniform_field(10, 3, 0.5);
        let bounds = [(0, 0), (9, 9), (9, 9)];
        let roi = RoiMask::from_row_bounds(10, 3, &bounds).unwrap();
        let err = shortest_boundary(&field, &roi, &GraphConfig::default()).unwrap_err();
        assert!(matches!(err, Error::DisconnectedRoi { .. }), "{err:?}");
    }

    #[test]
    fn anchors_restrict_endpoint_rows() {
        let field = uniform_field(12, 6, 0.5);
        let roi = RoiMask::full(12, 6);
        let cfg = GraphConfig::default();
        let b =
            shortest_boundary_anchored(&field, &roi, 0..6, Some(8), Some(8), &cfg).unwrap();
        assert!((b.row[0] as isize - 8).abs() <= 1);
        assert!((b.row[5] as isize - 8).abs() <= 1);
    }

    #[test]
    fn search_is_deterministic_on_tied_costs() {
        let field = uniform_field(8, 8, 0.5);
        let roi = RoiMask::full(8, 8);
        let cfg = GraphConfig::default();
        let a = shortest_boundary(&field, &roi, &cfg).unwrap();
        let b = shortest_boundary(&field, &roi, &cfg).unwrap();
        assert_eq!(a.row, b.row);
        assert_eq!(a.cost.to_bits(), b.cost.to_bits());
    }

    #[test]
    fn adding_a_constant_derivative_leaves_the_boundary_unchanged() {
        // Intensities on a 1/64 lattice keep every arithmetic step exact, so
        // min-max normalization cancels the added constant bit-for-bit.
        let (rows, cols) = (16, 10);
        let mut data = vec![0.0; rows * cols];
        let mut state = 11u64;
        for v in data.iter_mut() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            *v = ((state >> 58) & 31) as f64 / 64.0;
        }
        let shifted: Vec<f64> = data
            .iter()
            .enumerate()
            .map(|(i, &v)| v + (i / cols) as f64 / 64.0)
            .collect();

        let base = vertical_gradients(&scan_from(rows, cols, data));
        let moved = vertical_gradients(&scan_from(rows, cols, shifted));
        assert_eq!(
            base.dark_to_light.values(),
            moved.dark_to_light.values(),
            "normalization must cancel a constant derivative shift"
        );

        let cfg = GraphConfig::default();
        let roi = RoiMask::full(rows, cols);
        let a = shortest_boundary(&base.light_to_dark, &roi, &cfg).unwrap();
        let b = shortest_boundary(&moved.light_to_dark, &roi, &cfg).unwrap();
        assert_eq!(a.row, b.row);
        assert_eq!(a.cost.to_bits(), b.cost.to_bits());
    }

    proptest! {
        #[test]
        fn search_matches_exhaustive_enumeration(
            values in proptest::collection::vec(0.0f64..=1.0, 36),
            step in 1usize..=2,
        ) {
            let field = GradientField::from_values(
                6, 6, GradientDirection::DarkToLight, values,
            ).unwrap();
            let roi = RoiMask::full(6, 6);
            let cfg = GraphConfig { w_min: 1e-5, max_vertical_step: step };
            let found = shortest_boundary(&field, &roi, &cfg).unwrap();
            let oracle = brute_force_cost(&field, &roi, step as isize, cfg.w_min).unwrap();
            prop_assert_eq!(found.cost.to_bits(), oracle.to_bits());
        }

        #[test]
        fn paths_respect_roi_and_step_bound(
            values in proptest::collection::vec(0.0f64..=1.0, 48),
            step in 1usize..=3,
            band_top in 0usize..4,
        ) {
            let rows = 8;
            let cols = 6;
            let field = GradientField::from_values(
                rows, cols, GradientDirection::DarkToLight, values,
            ).unwrap();
            let band_bottom = band_top + 4;
            let roi = RoiMask::from_row_bounds(
                rows, cols, &vec![(band_top, band_bottom); cols],
            ).unwrap();
            let cfg = GraphConfig { w_min: 1e-5, max_vertical_step: step };
            let b = shortest_boundary(&field, &roi, &cfg).unwrap();
            prop_assert_eq!(b.row.len(), cols);
            for c in 0..cols {
                prop_assert!(roi.admissible(b.row[c], c));
                if c > 0 {
                    let diff = (b.row[c] as isize - b.row[c - 1] as isize).abs();
                    prop_assert!(diff <= step as isize);
                }
            }
        }
    }
}
