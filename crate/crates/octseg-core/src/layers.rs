//! Whole-scan segmentation: ILM and RPE extraction, RPE flattening, the
//! RNFL search region built from the morphological edge, the intensity-guided
//! correction pass, and the assembly of the final result.
//!
//! The stages compose as follows. The brightest band (the RPE complex) is
//! located per column to anchor the RPE search; the ILM is then traced
//! strictly above it. Flattening shifts every column so
//! the RPE lies on one row, which makes the RNFL search band nearly
//! horizontal. The first bright row of the cleaned morphological mask
//! ([`crate::preprocess::phase1_pipeline`]) bounds that band from below,
//! with fallbacks where the mask has no edge and a widened corridor around
//! large edge jumps near the scan center. A shortest light-to-dark path
//! inside the band yields the RNFL outer boundary, which the correction pass
//! ([`phase2_correct`]) then audits interval by interval against the tissue
//! brightness just below it, re-tracing intervals whose underside looks too
//! bright. The result is mapped back to the original geometry and clamped
//! into anatomical order.

use std::collections::BTreeSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::graph::{
    self, Boundary, BoundaryLabel, GradientField, GraphConfig, RoiMask,
};
use crate::image_io::BScan;
use crate::metrics::{scan_metrics, ScanMetrics};
use crate::preprocess::{self, Phase1Edge, PreprocessConfig};

/// Smallest scan the pipeline accepts; the fixed windows and margins of the
/// individual stages assume at least this much room.
pub const MIN_ROWS: usize = 16;
pub const MIN_COLS: usize = 16;

/// When the morphological mask yields no edge at all, the RNFL is searched in
/// a band of `rows / FALLBACK_BAND_DIVISOR` rows below the ILM.
const FALLBACK_BAND_DIVISOR: usize = 8;

/// Geometry parameters for the ILM/RPE searches and edge analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayersConfig {
    /// Half-height of the RPE search band around the per-column brightness
    /// peak.
    pub rpe_band_halfwidth: usize,
    /// The ILM search is confined to rows more than this many rows above the
    /// traced RPE.
    pub ilm_clearance_px: usize,
    /// Window (in columns) of the median filter smoothing the per-column
    /// brightness peaks into the RPE approximation. Must be odd.
    pub rpe_median_window: usize,
    /// The RPE approximation picks the deepest row of a column whose
    /// intensity reaches this fraction of the column's maximum.
    pub rpe_peak_fraction: f64,
    /// Smallest row jump between neighboring edge columns that counts as a
    /// discontinuity.
    pub gap_threshold_px: usize,
}

impl Default for LayersConfig {
    fn default() -> Self {
        Self {
            rpe_band_halfwidth: 20,
            ilm_clearance_px: 10,
            rpe_median_window: 15,
            rpe_peak_fraction: 0.8,
            gap_threshold_px: 3,
        }
    }
}

impl LayersConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rpe_band_halfwidth == 0 {
            return Err(Error::Config(
                "layers.rpe_band_halfwidth must be at least 1".into(),
            ));
        }
        if self.ilm_clearance_px == 0 {
            return Err(Error::Config(
                "layers.ilm_clearance_px must be at least 1".into(),
            ));
        }
        if self.rpe_median_window == 0 || self.rpe_median_window % 2 == 0 {
            return Err(Error::Config(format!(
                "layers.rpe_median_window must be odd and positive, got {}",
                self.rpe_median_window
            )));
        }
        if !self.rpe_peak_fraction.is_finite()
            || self.rpe_peak_fraction <= 0.0
            || self.rpe_peak_fraction > 1.0
        {
            return Err(Error::Config(format!(
                "layers.rpe_peak_fraction must lie in (0, 1], got {}",
                self.rpe_peak_fraction
            )));
        }
        if self.gap_threshold_px == 0 {
            return Err(Error::Config(
                "layers.gap_threshold_px must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Parameters of the intensity-guided RNFL correction pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Phase2Config {
    /// Run the correction pass at all.
    pub enabled: bool,
    /// A column counts as dark when the mean intensity just below the RNFL
    /// boundary falls under `k` times the sub-ILM reference intensity.
    pub k: f64,
    /// Number of rows sampled below a boundary for the intensity tests.
    pub depth_px: usize,
    /// An interval passes when at least this fraction of its columns is
    /// dark below the boundary.
    pub low_fraction: f64,
    /// Rows the interval's lower search bound moves up per correction step.
    pub shift_px: usize,
    /// The sub-ILM reference intensity averages the per-column means whose
    /// ascending rank falls in `[rank_lo, rank_hi)` of the column count.
    pub rank_lo: f64,
    pub rank_hi: f64,
    /// Correction steps allowed per interval before giving up.
    pub max_iterations: usize,
    /// Additionally test fixed-width probe tiles across the left and right
    /// sections, catching bad stretches inside otherwise passing intervals.
    pub extra_probe: bool,
    /// Expect bright rather than dark tissue below the boundary.
    pub invert_polarity: bool,
}

impl Default for Phase2Config {
    fn default() -> Self {
        Self {
            enabled: true,
            k: 0.9,
            depth_px: 5,
            low_fraction: 0.60,
            shift_px: 3,
            rank_lo: 0.7,
            rank_hi: 0.9,
            max_iterations: 10,
            extra_probe: true,
            invert_polarity: false,
        }
    }
}

impl Phase2Config {
    pub fn validate(&self) -> Result<()> {
        if !self.k.is_finite() || self.k <= 0.0 || self.k > 1.0 {
            return Err(Error::Config(format!(
                "phase2.k must lie in (0, 1], got {}",
                self.k
            )));
        }
        if self.depth_px == 0 {
            return Err(Error::Config("phase2.depth_px must be at least 1".into()));
        }
        if !self.low_fraction.is_finite() || self.low_fraction <= 0.0 || self.low_fraction > 1.0 {
            return Err(Error::Config(format!(
                "phase2.low_fraction must lie in (0, 1], got {}",
                self.low_fraction
            )));
        }
        if self.shift_px == 0 {
            return Err(Error::Config("phase2.shift_px must be at least 1".into()));
        }
        let ranks_valid = self.rank_lo.is_finite()
            && self.rank_hi.is_finite()
            && 0.0 <= self.rank_lo
            && self.rank_lo < self.rank_hi
            && self.rank_hi <= 1.0;
        if !ranks_valid {
            return Err(Error::Config(format!(
                "phase2 rank window must satisfy 0 <= rank_lo < rank_hi <= 1, got [{}, {})",
                self.rank_lo, self.rank_hi
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config(
                "phase2.max_iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Horizontal third of a scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    Left,
    Middle,
    Right,
}

/// Section containing `col` when the width is split at `cols / 3` and
/// `2 * cols / 3`.
pub fn section_of(col: usize, cols: usize) -> Section {
    if col < cols / 3 {
        Section::Left
    } else if col < 2 * cols / 3 {
        Section::Middle
    } else {
        Section::Right
    }
}

/// What kind of irregularity a [`Discontinuity`] records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscontinuityKind {
    /// Row jump between two present edge columns.
    Jump,
    /// Border of a run of columns without any edge.
    RunBorder,
}

/// One irregularity of the morphological edge, anchored at the left column
/// of the offending column pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Discontinuity {
    pub column: usize,
    /// Row distance across the irregularity. For a run border this is the
    /// jump between the present values on either side of the run, or zero
    /// when the run touches the scan border.
    pub gap_px: usize,
    pub section: Section,
    pub kind: DiscontinuityKind,
}

/// All edge irregularities of one scan, in column order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DiscontinuitySet {
    pub items: Vec<Discontinuity>,
}

impl DiscontinuitySet {
    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    fn in_section(&self, section: Section) -> impl Iterator<Item = &Discontinuity> + '_ {
        self.items.iter().filter(move |d| d.section == section)
    }
}

/// Scans the edge for row jumps larger than `gap_threshold_px` and for the
/// borders of absent runs. Jumps are recorded at the left column of the
/// offending pair; a run border is recorded at the column where presence
/// changes, carrying the jump between the present values on either side of
/// the whole run (zero when the run reaches the scan border).
pub fn detect_discontinuities(edge: &Phase1Edge, gap_threshold_px: usize) -> DiscontinuitySet {
    let e = &edge.first_bright_row;
    let cols = e.len();
    let mut items = Vec::new();
    for c in 0..cols.saturating_sub(1) {
        match (e[c], e[c + 1]) {
            (Some(a), Some(b)) => {
                if a.abs_diff(b) > gap_threshold_px {
                    items.push(Discontinuity {
                        column: c,
                        gap_px: a.abs_diff(b),
                        section: section_of(c, cols),
                        kind: DiscontinuityKind::Jump,
                    });
                }
            }
            (Some(a), None) => {
                let after = e[c + 1..].iter().find_map(|&v| v);
                items.push(Discontinuity {
                    column: c,
                    gap_px: after.map_or(0, |v| a.abs_diff(v)),
                    section: section_of(c, cols),
                    kind: DiscontinuityKind::RunBorder,
                });
            }
            (None, Some(b)) => {
                let before = e[..=c].iter().rev().find_map(|&v| v);
                items.push(Discontinuity {
                    column: c,
                    gap_px: before.map_or(0, |v| b.abs_diff(v)),
                    section: section_of(c, cols),
                    kind: DiscontinuityKind::RunBorder,
                });
            }
            (None, None) => {}
        }
    }
    DiscontinuitySet { items }
}

/// Per-column brightness anchor, median-filtered across columns into a
/// stable first guess of the RPE row.
///
/// Each column contributes its deepest row whose intensity reaches
/// `rpe_peak_fraction` of the column's maximum. The RPE is the outermost of
/// the bright bands, so preferring depth over raw peak height keeps the
/// anchor on it even in columns where the nerve fiber band or a speckle
/// cluster momentarily outshines it — the absolute argmax flips to such
/// impostors in runs that no median window can repair. The ratio test makes
/// the anchor invariant under intensity rescaling. The median window
/// replicates the border columns.
pub fn approximate_rpe(scan: &BScan, config: &LayersConfig) -> Boundary {
    let (rows, cols) = (scan.rows, scan.cols);
    let mut peak = vec![0usize; cols];
    for c in 0..cols {
        let mut max = scan.at(0, c);
        for r in 1..rows {
            max = max.max(scan.at(r, c));
        }
        let floor = config.rpe_peak_fraction * max;
        for r in 0..rows {
            if scan.at(r, c) >= floor {
                peak[c] = r;
            }
        }
    }

    let half = (config.rpe_median_window / 2) as isize;
    let mut row = Vec::with_capacity(cols);
    let mut window = Vec::with_capacity(config.rpe_median_window);
    for c in 0..cols {
        window.clear();
        for o in -half..=half {
            let cc = (c as isize + o).clamp(0, cols as isize - 1) as usize;
            window.push(peak[cc]);
        }
        window.sort_unstable();
        row.push(window[window.len() / 2]);
    }
    Boundary::new(BoundaryLabel::Raw, row, 0.0)
}

/// ILM and RPE of one scan, plus the degenerate-input marker.
#[derive(Debug, Clone)]
pub struct IlmRpe {
    pub ilm: Boundary,
    pub rpe: Boundary,
    /// The scan carried no gradient variation; both boundaries are synthetic
    /// flat lines at one quarter and three quarters of the height.
    pub degenerate_gradients: bool,
}

/// Traces the RPE within a band around its brightness approximation, then
/// the ILM strictly above it, both as strongest dark-to-light transitions.
///
/// The brightness approximation runs on a smoothed copy of the scan so that
/// a single saturated speckle pixel cannot steal a column's peak; the
/// boundaries themselves are traced on the unsmoothed gradients, which keep
/// single-row transitions razor sharp.
pub fn segment_ilm_rpe(
    scan: &BScan,
    layers: &LayersConfig,
    pre: &PreprocessConfig,
    graph_config: &GraphConfig,
) -> Result<IlmRpe> {
    let (rows, cols) = (scan.rows, scan.cols);
    let pair = graph::vertical_gradients(scan);
    if pair.degenerate {
        return Ok(IlmRpe {
            ilm: Boundary::new(BoundaryLabel::Ilm, vec![rows / 4; cols], 0.0),
            rpe: Boundary::new(BoundaryLabel::Rpe, vec![3 * rows / 4; cols], 0.0),
            degenerate_gradients: true,
        });
    }

    let anchor = preprocess::smooth(scan, pre)?;
    let approx = approximate_rpe(&anchor, layers);
    let rpe_bounds: Vec<(usize, usize)> = approx
        .row
        .iter()
        .map(|&r| {
            (
                r.saturating_sub(layers.rpe_band_halfwidth),
                (r + layers.rpe_band_halfwidth).min(rows - 1),
            )
        })
        .collect();
    let rpe_roi = RoiMask::from_row_bounds(rows, cols, &rpe_bounds)?;
    let rpe_raw = graph::shortest_boundary(&pair.dark_to_light, &rpe_roi, graph_config)?;
    let rpe = Boundary::new(BoundaryLabel::Rpe, rpe_raw.row, rpe_raw.cost);

    let ilm_bounds: Vec<(usize, usize)> = rpe
        .row
        .iter()
        .map(|&r| {
            let bottom = r as isize - layers.ilm_clearance_px as isize - 1;
            if bottom < 0 {
                (1, 0)
            } else {
                (0, bottom as usize)
            }
        })
        .collect();
    let ilm_roi = RoiMask::from_row_bounds(rows, cols, &ilm_bounds)?;
    let ilm_raw = graph::shortest_boundary(&pair.dark_to_light, &ilm_roi, graph_config)?;
    let ilm = Boundary::new(BoundaryLabel::Ilm, ilm_raw.row, ilm_raw.cost);

    for c in 0..cols {
        if ilm.row[c] >= rpe.row[c] {
            return Err(Error::OrderingViolation {
                col: c,
                upper: ilm.row[c],
                lower: rpe.row[c],
            });
        }
    }

    Ok(IlmRpe {
        ilm,
        rpe,
        degenerate_gradients: false,
    })
}

/// Per-column downward shifts that move the given RPE onto a single row (its
/// lower median). Positive shifts move a column's content down.
pub fn flatten_shifts(rpe: &Boundary) -> Result<Vec<isize>> {
    if rpe.row.is_empty() {
        return Err(Error::EmptyBoundary);
    }
    let mut sorted = rpe.row.clone();
    sorted.sort_unstable();
    let target = sorted[(sorted.len() - 1) / 2] as isize;
    Ok(rpe.row.iter().map(|&r| target - r as isize).collect())
}

/// Shifts every column of the scan by its entry in `shifts`, replicating the
/// border rows into the vacated space.
pub fn apply_shifts(scan: &BScan, shifts: &[isize]) -> Result<BScan> {
    let (rows, cols) = (scan.rows, scan.cols);
    if shifts.len() != cols {
        return Err(Error::ColumnCountMismatch {
            left: cols,
            right: shifts.len(),
        });
    }
    let mut data = vec![0.0f64; rows * cols];
    for c in 0..cols {
        for r in 0..rows {
            let src = (r as isize - shifts[c]).clamp(0, rows as isize - 1) as usize;
            data[r * cols + c] = scan.at(src, c);
        }
    }
    BScan::new(rows, cols, data, scan.source_id.clone())
}

/// Moves a boundary by the per-column shifts, clamping to the image. Returns
/// the shifted boundary and whether any column was clamped.
pub fn shift_boundary(boundary: &Boundary, shifts: &[isize], rows: usize) -> (Boundary, bool) {
    let mut clamped = false;
    let row = boundary
        .row
        .iter()
        .zip(shifts)
        .map(|(&r, &s)| {
            let v = r as isize + s;
            let kept = v.clamp(0, rows as isize - 1);
            clamped |= kept != v;
            kept as usize
        })
        .collect();
    (Boundary::new(boundary.label, row, boundary.cost), clamped)
}

/// Moves a boundary back from flattened to original coordinates, undoing the
/// per-column shifts. Returns the boundary and whether any column clamped.
pub fn unflatten_boundary(boundary: &Boundary, shifts: &[isize], rows: usize) -> (Boundary, bool) {
    let inverted: Vec<isize> = shifts.iter().map(|&s| -s).collect();
    shift_boundary(boundary, &inverted, rows)
}

fn shift_edge(edge: &Phase1Edge, shifts: &[isize], rows: usize) -> (Phase1Edge, bool) {
    let mut clamped = false;
    let first_bright_row = edge
        .first_bright_row
        .iter()
        .zip(shifts)
        .map(|(&e, &s)| {
            e.map(|r| {
                let v = r as isize + s;
                let kept = v.clamp(0, rows as isize - 1);
                clamped |= kept != v;
                kept as usize
            })
        })
        .collect();
    (Phase1Edge { first_bright_row }, clamped)
}

/// Search band for the RNFL outer boundary: one inclusive row interval per
/// column, plus markers recording which fallback rules fired.
#[derive(Debug, Clone)]
pub struct RnflRoi {
    pub rows: usize,
    /// Inclusive `(top, bottom)` rows per column; every column admits at
    /// least one row.
    pub bounds: Vec<(usize, usize)>,
    /// Some columns took their lower bound from the ILM plus the fovea
    /// corridor offset instead of the morphological edge.
    pub fovea_copy_used: bool,
    /// Some columns had no edge and fell back to the ILM plus the global
    /// median offset.
    pub edge_absent_fallback: bool,
}

impl RnflRoi {
    pub fn mask(&self) -> RoiMask {
        RoiMask::from_row_bounds(self.rows, self.bounds.len(), &self.bounds)
            .expect("bounds are built for every column")
    }
}

/// Builds the RNFL search band from the ILM and the morphological edge.
///
/// The default band for a column runs from one row below the ILM down to two
/// rows above the edge. Two fallbacks override the lower bound: columns
/// inside the fovea corridor (between the outermost middle-section
/// discontinuities, or the whole middle third when there is only one) use
/// the ILM plus half the averaged gap, and columns without any edge use the
/// ILM plus the median edge offset of the present columns. Every column is
/// clamped so it admits at least one row, which makes the construction
/// total.
pub fn rnfl_roi(
    ilm: &Boundary,
    edge: &Phase1Edge,
    discontinuities: &DiscontinuitySet,
    rows: usize,
) -> Result<RnflRoi> {
    let cols = ilm.cols();
    if edge.cols() != cols {
        return Err(Error::ColumnCountMismatch {
            left: cols,
            right: edge.cols(),
        });
    }

    let offsets: Vec<isize> = (0..cols)
        .filter_map(|c| {
            edge.first_bright_row[c].map(|e| e as isize - 2 - ilm.row[c] as isize)
        })
        .collect();
    let global_offset: isize = if offsets.is_empty() {
        (rows / FALLBACK_BAND_DIVISOR).max(1) as isize
    } else {
        let mut sorted = offsets;
        sorted.sort_unstable();
        sorted[(sorted.len() - 1) / 2].max(1)
    };

    let middle: Vec<&Discontinuity> = discontinuities.in_section(Section::Middle).collect();
    let corridor: Option<(Range<usize>, isize)> = match middle.as_slice() {
        [] => None,
        [single] => {
            let offset = (single.gap_px.div_ceil(2)).max(1) as isize;
            Some((cols / 3..2 * cols / 3, offset))
        }
        [first, .., last] => {
            let offset = ((first.gap_px + last.gap_px).div_ceil(4)).max(1) as isize;
            Some((first.column + 1..last.column + 1, offset))
        }
    };

    let mut fovea_copy_used = false;
    let mut edge_absent_fallback = false;
    let mut bounds = Vec::with_capacity(cols);
    for c in 0..cols {
        let ilm_row = ilm.row[c] as isize;
        let target = match edge.first_bright_row[c] {
            None => {
                edge_absent_fallback = true;
                ilm_row + global_offset
            }
            Some(e) => match &corridor {
                Some((range, offset)) if range.contains(&c) => {
                    fovea_copy_used = true;
                    ilm_row + offset
                }
                _ => e as isize - 2,
            },
        };
        let top = ((ilm_row + 1).min(rows as isize - 1)).max(0) as usize;
        let bottom = target
            .max(ilm_row + 1)
            .min(rows as isize - 1)
            .max(top as isize) as usize;
        bounds.push((top, bottom));
    }

    Ok(RnflRoi {
        rows,
        bounds,
        fovea_copy_used,
        edge_absent_fallback,
    })
}

/// Reference brightness of the tissue just below the ILM: per-column means
/// of up to `depth_px` rows under the boundary, sorted ascending, averaged
/// over the configured rank window. The rank window discards the darkest and
/// brightest columns (vessels, reflections) from the estimate.
pub fn ilm_intensity_estimate(
    scan: &BScan,
    ilm: &Boundary,
    config: &Phase2Config,
) -> Result<f64> {
    if ilm.cols() != scan.cols {
        return Err(Error::ColumnCountMismatch {
            left: scan.cols,
            right: ilm.cols(),
        });
    }
    let mut means = Vec::with_capacity(scan.cols);
    for c in 0..scan.cols {
        let start = ilm.row[c] + 1;
        if start >= scan.rows {
            continue;
        }
        let end = (ilm.row[c] + config.depth_px).min(scan.rows - 1);
        let mut sum = 0.0;
        for r in start..=end {
            sum += scan.at(r, c);
        }
        means.push(sum / (end - start + 1) as f64);
    }
    if means.is_empty() {
        return Err(Error::NoRoomBelowIlm);
    }
    means.sort_unstable_by(f64::total_cmp);
    let n = means.len();
    let lo = ((config.rank_lo * n as f64).floor() as usize).min(n - 1);
    let hi = ((config.rank_hi * n as f64).floor() as usize).min(n);
    let slice = if lo < hi {
        &means[lo..hi]
    } else {
        std::slice::from_ref(&means[lo])
    };
    Ok(slice.iter().sum::<f64>() / slice.len() as f64)
}

/// One applied correction step of the intensity-guided pass.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrectionRecord {
    /// First column of the corrected interval.
    pub col_start: usize,
    /// One past the last column of the corrected interval.
    pub col_end: usize,
    /// Zero-based step number within this interval.
    pub iteration: usize,
    /// Fraction of interval columns that looked as expected below the
    /// boundary when the step was triggered.
    pub pass_fraction: f64,
    /// Rows the interval's lower search bound moved up.
    pub shift_px: usize,
}

/// Outcome of [`phase2_correct`].
#[derive(Debug, Clone)]
pub struct Phase2Outcome {
    pub rnfl: Boundary,
    pub corrections: Vec<CorrectionRecord>,
    /// Some interval was still failing when its step budget ran out.
    pub iteration_cap_hit: bool,
    /// Some interval was still failing when its search band could not move
    /// up any further.
    pub bound_floor_hit: bool,
    /// Columns where the stitched boundary jumps more than the allowed
    /// vertical step.
    pub seam_step_violations: usize,
}

/// Test intervals: the left and right sections split at their
/// discontinuities, in left-to-right order, followed by fixed-width probe
/// tiles across both sections when enabled. The middle section is never
/// tested.
fn phase2_intervals(
    discontinuities: &DiscontinuitySet,
    cols: usize,
    extra_probe: bool,
) -> Vec<(usize, usize)> {
    let sections = [(0, cols / 3, Section::Left), (2 * cols / 3, cols, Section::Right)];
    let mut intervals = Vec::new();
    for (start, end, section) in sections {
        let mut cuts: Vec<usize> = discontinuities
            .in_section(section)
            .map(|d| d.column + 1)
            .filter(|&cut| cut > start && cut < end)
            .collect();
        cuts.sort_unstable();
        cuts.dedup();
        let mut s = start;
        for cut in cuts {
            intervals.push((s, cut));
            s = cut;
        }
        if s < end {
            intervals.push((s, end));
        }
    }
    if extra_probe {
        let width = (cols / 8).max(1);
        for (start, end, _) in sections {
            let mut s = start;
            while s < end {
                intervals.push((s, (s + width).min(end)));
                s += width;
            }
        }
    }
    intervals
}

/// Fraction of interval columns whose mean intensity below the boundary
/// matches the expected polarity. Columns with no room below the boundary
/// count as matching.
fn pass_fraction(
    scan: &BScan,
    boundary_rows: &[usize],
    interval: Range<usize>,
    i_hat: f64,
    config: &Phase2Config,
) -> f64 {
    let len = interval.len();
    let mut passing = 0usize;
    for c in interval {
        let start = boundary_rows[c] + 1;
        if start >= scan.rows {
            passing += 1;
            continue;
        }
        let end = (boundary_rows[c] + config.depth_px).min(scan.rows - 1);
        let mut sum = 0.0;
        for r in start..=end {
            sum += scan.at(r, c);
        }
        let mean = sum / (end - start + 1) as f64;
        let dark = mean < config.k * i_hat;
        if dark != config.invert_polarity {
            passing += 1;
        }
    }
    passing as f64 / len as f64
}

/// Re-traces one span with progressively relaxed seam anchors: both anchors,
/// left only, right only, then free. Anchors that leave a seam unreachable
/// fail with a disconnected region; the next rung drops them.
fn anchored_with_fallback(
    field: &GradientField,
    roi: &RoiMask,
    span: Range<usize>,
    left: Option<usize>,
    right: Option<usize>,
    config: &GraphConfig,
) -> Result<Boundary> {
    let attempts = [(left, right), (left, None), (None, right), (None, None)];
    let mut last = None;
    for (l, r) in attempts {
        match graph::shortest_boundary_anchored(field, roi, span.clone(), l, r, config) {
            Ok(b) => return Ok(b),
            Err(e @ Error::DisconnectedRoi { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("final unanchored attempt either succeeds or records an error"))
}

/// Total path cost of a traced boundary on a gradient field, accumulated in
/// the same order the search itself adds terms: entry floor, edge weights
/// left to right, exit floor.
pub fn path_cost(field: &GradientField, rows_path: &[usize], w_min: f64) -> f64 {
    let mut cost = w_min;
    for c in 0..rows_path.len().saturating_sub(1) {
        cost += graph::edge_weight(
            field.at(rows_path[c], c),
            field.at(rows_path[c + 1], c + 1),
            w_min,
        );
    }
    cost + w_min
}

/// Audits the RNFL boundary interval by interval against the tissue
/// brightness below it and re-traces the intervals that fail.
///
/// For each failing interval the lower search bound moves up by
/// `shift_px` (never above one row below the ILM), the span is re-traced
/// with seam anchors into the neighboring columns, and the test repeats
/// until it passes, the bound cannot move, or the step budget is spent.
/// Intervals are processed sequentially left to right, sections before probe
/// tiles, so later intervals see earlier corrections at their seams. When no
/// interval fired, the input boundary is returned bit-identical; otherwise
/// the cost is recomputed over the stitched path.
pub fn phase2_correct(
    scan: &BScan,
    field: &GradientField,
    rnfl: &Boundary,
    roi: &RoiMask,
    ilm: &Boundary,
    discontinuities: &DiscontinuitySet,
    i_hat: f64,
    config: &Phase2Config,
    graph_config: &GraphConfig,
) -> Result<Phase2Outcome> {
    let cols = rnfl.cols();
    let rows = scan.rows;
    if cols != scan.cols || roi.cols != cols || ilm.cols() != cols {
        return Err(Error::ColumnCountMismatch {
            left: scan.cols,
            right: cols,
        });
    }

    let mut bounds = Vec::with_capacity(cols);
    for c in 0..cols {
        let top = (0..rows).find(|&r| roi.admissible(r, c));
        let bottom = (0..rows).rev().find(|&r| roi.admissible(r, c));
        match (top, bottom) {
            (Some(t), Some(b)) => bounds.push((t, b)),
            _ => {
                return Err(Error::DisconnectedRoi {
                    reason: format!("column {c} admits no rows"),
                })
            }
        }
    }

    let mut roi = roi.clone();
    let mut current = rnfl.row.clone();
    let mut corrections = Vec::new();
    let mut iteration_cap_hit = false;
    let mut bound_floor_hit = false;

    for (start, end) in phase2_intervals(discontinuities, cols, config.extra_probe) {
        for iteration in 0..config.max_iterations {
            let fraction = pass_fraction(scan, &current, start..end, i_hat, config);
            if fraction >= config.low_fraction {
                break;
            }

            let mut moved = false;
            for c in start..end {
                let (top, bottom) = bounds[c];
                let floor = (ilm.row[c] + 1).max(top).min(bottom);
                let raised = bottom.saturating_sub(config.shift_px).max(floor);
                if raised < bottom {
                    for r in raised + 1..=bottom {
                        roi.set(r, c, false);
                    }
                    bounds[c] = (top, raised);
                    moved = true;
                }
            }
            if !moved {
                bound_floor_hit = true;
                break;
            }

            let left = (start > 0).then(|| current[start - 1]);
            let right = (end < cols).then(|| current[end]);
            let patch = anchored_with_fallback(field, &roi, start..end, left, right, graph_config)?;
            current[start..end].copy_from_slice(&patch.row);

            corrections.push(CorrectionRecord {
                col_start: start,
                col_end: end,
                iteration,
                pass_fraction: fraction,
                shift_px: config.shift_px,
            });

            if iteration + 1 == config.max_iterations
                && pass_fraction(scan, &current, start..end, i_hat, config) < config.low_fraction
            {
                iteration_cap_hit = true;
            }
        }
    }

    let seam_step_violations = (0..cols.saturating_sub(1))
        .filter(|&c| current[c].abs_diff(current[c + 1]) > graph_config.max_vertical_step)
        .count();

    let rnfl = if corrections.is_empty() {
        rnfl.clone()
    } else {
        let cost = path_cost(field, &current, graph_config.w_min);
        Boundary::new(rnfl.label, current, cost)
    };

    Ok(Phase2Outcome {
        rnfl,
        corrections,
        iteration_cap_hit,
        bound_floor_hit,
        seam_step_violations,
    })
}

/// Conditions worth surfacing that occurred while segmenting one scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentationFlag {
    /// The morphological pipeline produced an empty mask; the RNFL band fell
    /// back to a fixed-height strip below the ILM.
    Phase1EmptyFallback,
    /// Binarization could not separate two intensity classes.
    OtsuDegenerate,
    /// The scan carried no gradient variation; boundaries are synthetic.
    DegenerateGradients,
    /// The fovea corridor override shaped part of the RNFL band.
    FoveaCopyUsed,
    /// Columns without a morphological edge used the median-offset fallback.
    EdgeAbsentFallback,
    /// A correction interval spent its whole step budget without passing.
    Phase2IterationCap,
    /// A correction interval hit the top of its search band while failing.
    Phase2BoundFloor,
    /// The corrected boundary jumps more than the allowed vertical step at
    /// some seam.
    Phase2SeamStep,
    /// Moving a boundary into flattened coordinates hit the image border.
    ShiftClamped,
    /// Mapping the RNFL back to original coordinates hit the image border.
    UnflattenClamped,
    /// The final RNFL was clamped into the [ILM, RPE] order.
    RnflClamped,
}

/// Complete segmentation of one B-scan.
#[derive(Debug, Clone, Serialize)]
pub struct SegmentationResult {
    pub source_id: String,
    pub rows: usize,
    pub cols: usize,
    pub ilm: Boundary,
    pub rnfl: Boundary,
    pub rpe: Boundary,
    /// Sub-ILM reference intensity the correction pass compared against.
    pub reference_intensity: f64,
    pub metrics: ScanMetrics,
    pub corrections: Vec<CorrectionRecord>,
    pub flags: Vec<SegmentationFlag>,
}

/// Segments one scan end to end: ILM and RPE extraction, RPE flattening,
/// the morphological RNFL band, the shortest-path RNFL trace, the
/// intensity-guided correction, and the mapping back to original
/// coordinates with metrics computed on the raw input.
pub fn segment_all(scan: &BScan, config: &RunConfig) -> Result<SegmentationResult> {
    config.validate()?;
    scan.ensure_min_size(MIN_ROWS, MIN_COLS)?;
    let (rows, cols) = (scan.rows, scan.cols);
    let mut flags = BTreeSet::new();

    let phase1 = match preprocess::phase1_pipeline(scan, &config.preprocess) {
        Ok(output) => {
            if output.otsu_degenerate {
                flags.insert(SegmentationFlag::OtsuDegenerate);
            }
            Some(output)
        }
        Err(Error::Phase1Empty) => {
            flags.insert(SegmentationFlag::Phase1EmptyFallback);
            None
        }
        Err(e) => return Err(e),
    };

    let ilm_rpe = segment_ilm_rpe(scan, &config.layers, &config.preprocess, &config.graph)?;
    if ilm_rpe.degenerate_gradients {
        flags.insert(SegmentationFlag::DegenerateGradients);
    }
    let (ilm, rpe) = (ilm_rpe.ilm, ilm_rpe.rpe);

    let shifts = flatten_shifts(&rpe)?;
    let flat_scan = apply_shifts(scan, &shifts)?;
    let (flat_ilm, ilm_clamped) = shift_boundary(&ilm, &shifts, rows);
    if ilm_clamped {
        flags.insert(SegmentationFlag::ShiftClamped);
    }
    let flat_rpe_row = rpe.row[0].wrapping_add_signed(shifts[0]);

    let flat_pair = graph::vertical_gradients(&flat_scan);
    if flat_pair.degenerate {
        flags.insert(SegmentationFlag::DegenerateGradients);
    }

    let (mut roi, discontinuities) = match &phase1 {
        Some(output) => {
            let (flat_edge, edge_clamped) = shift_edge(&output.edge, &shifts, rows);
            if edge_clamped {
                flags.insert(SegmentationFlag::ShiftClamped);
            }
            let discontinuities =
                detect_discontinuities(&flat_edge, config.layers.gap_threshold_px);
            let roi = rnfl_roi(&flat_ilm, &flat_edge, &discontinuities, rows)?;
            (roi, discontinuities)
        }
        None => {
            let band = (rows / FALLBACK_BAND_DIVISOR).max(1);
            let bounds: Vec<(usize, usize)> = flat_ilm
                .row
                .iter()
                .map(|&r| {
                    let top = (r + 1).min(rows - 1);
                    (top, (r + band).min(rows - 1).max(top))
                })
                .collect();
            (
                RnflRoi {
                    rows,
                    bounds,
                    fovea_copy_used: false,
                    edge_absent_fallback: false,
                },
                DiscontinuitySet::default(),
            )
        }
    };
    if roi.fovea_copy_used {
        flags.insert(SegmentationFlag::FoveaCopyUsed);
    }
    if roi.edge_absent_fallback {
        flags.insert(SegmentationFlag::EdgeAbsentFallback);
    }

    let cap = flat_rpe_row.saturating_sub(1);
    for (top, bottom) in roi.bounds.iter_mut() {
        *bottom = (*bottom).min(cap).max(*top);
    }
    let mask = roi.mask();

    let rnfl_raw = graph::shortest_boundary(&flat_pair.light_to_dark, &mask, &config.graph)?;
    let rnfl_initial = Boundary::new(BoundaryLabel::Rnfl, rnfl_raw.row, rnfl_raw.cost);

    let reference_intensity = ilm_intensity_estimate(&flat_scan, &flat_ilm, &config.phase2)?;

    let (flat_rnfl, corrections) = if config.phase2.enabled && !flat_pair.degenerate {
        let outcome = phase2_correct(
            &flat_scan,
            &flat_pair.light_to_dark,
            &rnfl_initial,
            &mask,
            &flat_ilm,
            &discontinuities,
            reference_intensity,
            &config.phase2,
            &config.graph,
        )?;
        if outcome.iteration_cap_hit {
            flags.insert(SegmentationFlag::Phase2IterationCap);
        }
        if outcome.bound_floor_hit {
            flags.insert(SegmentationFlag::Phase2BoundFloor);
        }
        if outcome.seam_step_violations > 0 {
            flags.insert(SegmentationFlag::Phase2SeamStep);
        }
        (outcome.rnfl, outcome.corrections)
    } else {
        (rnfl_initial, Vec::new())
    };

    let (rnfl_back, unflatten_clamped) = unflatten_boundary(&flat_rnfl, &shifts, rows);
    if unflatten_clamped {
        flags.insert(SegmentationFlag::UnflattenClamped);
    }

    let mut rnfl_rows = rnfl_back.row;
    for c in 0..cols {
        let clamped = rnfl_rows[c].clamp(ilm.row[c], rpe.row[c]);
        if clamped != rnfl_rows[c] {
            flags.insert(SegmentationFlag::RnflClamped);
            rnfl_rows[c] = clamped;
        }
    }
    let rnfl = Boundary::new(BoundaryLabel::Rnfl, rnfl_rows, rnfl_back.cost);

    let metrics = scan_metrics(scan, &ilm, &rnfl, &rpe, &config.metrics)?;

    Ok(SegmentationResult {
        source_id: scan.source_id.clone(),
        rows,
        cols,
        ilm,
        rnfl,
        rpe,
        reference_intensity,
        metrics,
        corrections,
        flags: flags.into_iter().collect(),
    })
}
