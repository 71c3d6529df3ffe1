//! Clinical quantities derived from the traced boundaries: per-column
//! thickness profiles and band intensity summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Boundary, BoundaryLabel};
use crate::image_io::BScan;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Axial pixel pitch in µm; thickness profiles carry a µm track only
    /// when this is set.
    pub axial_scale_um_per_px: Option<f64>,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            axial_scale_um_per_px: None,
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(s) = self.axial_scale_um_per_px {
            if !s.is_finite() || s <= 0.0 {
                return Err(Error::Config(format!(
                    "axial_scale_um_per_px must be positive, got {s}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-column distance between two boundaries, measured along image rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThicknessProfile {
    pub from: BoundaryLabel,
    pub to: BoundaryLabel,
    pub px: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub um: Option<Vec<f64>>,
    pub mean_px: f64,
    pub min_px: usize,
    pub max_px: usize,
}

/// Thickness per column as `lower.row − upper.row`, requiring the upper
/// boundary to sit at or above the lower one everywhere.
pub fn thickness_profile(
    upper: &Boundary,
    lower: &Boundary,
    axial_scale_um_per_px: Option<f64>,
) -> Result<ThicknessProfile> {
    if upper.cols() != lower.cols() {
        return Err(Error::ColumnCountMismatch {
            left: upper.cols(),
            right: lower.cols(),
        });
    }
    if upper.cols() == 0 {
        return Err(Error::EmptyBoundary);
    }
    let mut px = Vec::with_capacity(upper.cols());
    for c in 0..upper.cols() {
        if upper.row[c] > lower.row[c] {
            return Err(Error::OrderingViolation {
                col: c,
                upper: upper.row[c],
                lower: lower.row[c],
            });
        }
        px.push(lower.row[c] - upper.row[c]);
    }
    let um = axial_scale_um_per_px.map(|s| px.iter().map(|&t| t as f64 * s).collect());
    let mean_px = px.iter().sum::<usize>() as f64 / px.len() as f64;
    Ok(ThicknessProfile {
        from: upper.label,
        to: lower.label,
        min_px: *px.iter().min().expect("nonempty"),
        max_px: *px.iter().max().expect("nonempty"),
        px,
        um,
        mean_px,
    })
}

/// Mean intensity over the inclusive band between two boundaries. A column
/// where the boundaries coincide contributes its single pixel.
pub fn band_intensity(img: &BScan, upper: &Boundary, lower: &Boundary) -> Result<f64> {
    if upper.cols() != lower.cols() {
        return Err(Error::ColumnCountMismatch {
            left: upper.cols(),
            right: lower.cols(),
        });
    }
    if upper.cols() != img.cols {
        return Err(Error::ColumnCountMismatch {
            left: img.cols,
            right: upper.cols(),
        });
    }
    if upper.cols() == 0 {
        return Err(Error::EmptyBoundary);
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for c in 0..img.cols {
        if upper.row[c] > lower.row[c] {
            return Err(Error::OrderingViolation {
                col: c,
                upper: upper.row[c],
                lower: lower.row[c],
            });
        }
        if lower.row[c] >= img.rows {
            return Err(Error::BoundaryOutOfBounds {
                col: c,
                row: lower.row[c],
                rows: img.rows,
            });
        }
        for r in upper.row[c]..=lower.row[c] {
            sum += img.at(r, c);
            count += 1;
        }
    }
    Ok(sum / count as f64)
}

/// The standard metric set reported for one segmented scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanMetrics {
    /// ILM → RNFL thickness (the nerve fiber layer itself).
    pub rnfl: ThicknessProfile,
    /// RNFL → RPE thickness (everything beneath the nerve fiber layer).
    pub outer: ThicknessProfile,
    /// ILM → RPE thickness (whole retina as segmented here).
    pub total: ThicknessProfile,
    /// Mean intensity between ILM and RNFL.
    pub rnfl_band_intensity: f64,
    /// Mean intensity of the RPE boundary ± 2 px.
    pub rpe_band_intensity: f64,
}

/// Assembles the full metric set from the three traced boundaries.
pub fn scan_metrics(
    img: &BScan,
    ilm: &Boundary,
    rnfl: &Boundary,
    rpe: &Boundary,
    cfg: &MetricsConfig,
) -> Result<ScanMetrics> {
    cfg.validate()?;
    let scale = cfg.axial_scale_um_per_px;
    let rpe_upper = Boundary::new(
        BoundaryLabel::Raw,
        rpe.row.iter().map(|&r| r.saturating_sub(2)).collect(),
        0.0,
    );
    let rpe_lower = Boundary::new(
        BoundaryLabel::Raw,
        rpe.row.iter().map(|&r| (r + 2).min(img.rows - 1)).collect(),
        0.0,
    );
    Ok(ScanMetrics {
        rnfl: thickness_profile(ilm, rnfl, scale)?,
        outer: thickness_profile(rnfl, rpe, scale)?,
        total: thickness_profile(ilm, rpe, scale)?,
        rnfl_band_intensity: band_intensity(img, ilm, rnfl)?,
        rpe_band_intensity: band_intensity(img, &rpe_upper, &rpe_lower)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(label: BoundaryLabel, rows: &[usize]) -> Boundary {
        Boundary::new(label, rows.to_vec(), 0.0)
    }

    #[test]
    fn coincident_boundaries_give_a_zero_profile() {
        let ilm = b(BoundaryLabel::Ilm, &[20, 20, 20]);
        let rnfl = b(BoundaryLabel::Rnfl, &[20, 20, 20]);
        let p = thickness_profile(&ilm, &rnfl, None).unwrap();
        assert_eq!(p.px, vec![0, 0, 0]);
        assert_eq!((p.mean_px, p.min_px, p.max_px), (0.0, 0, 0));
        assert!(p.um.is_none());
    }

    #[test]
    fn profile_subtracts_rows_and_scales_to_microns() {
        let ilm = b(BoundaryLabel::Ilm, &[10, 10]);
        let rpe = b(BoundaryLabel::Rpe, &[50, 52]);
        let p = thickness_profile(&ilm, &rpe, Some(3.9)).unwrap();
        assert_eq!(p.px, vec![40, 42]);
        let um = p.um.unwrap();
        assert!((um[0] - 156.0).abs() < 1e-9);
        assert!((um[1] - 163.8).abs() < 1e-9);
        assert_eq!((p.min_px, p.max_px), (40, 42));
        assert_eq!(p.mean_px, 41.0);
    }

    #[test]
    fn crossing_boundaries_are_an_ordering_violation() {
        let a = b(BoundaryLabel::Ilm, &[10, 30]);
        let c = b(BoundaryLabel::Rnfl, &[20, 20]);
        let err = thickness_profile(&a, &c, None).unwrap_err();
        assert!(
            matches!(err, Error::OrderingViolation { col: 1, upper: 30, lower: 20 }),
            "{err:?}"
        );
    }

    #[test]
    fn uniform_band_intensity_returns_the_constant() {
        let img = BScan::new(8, 4, vec![0.7; 32], "t").unwrap();
        let upper = b(BoundaryLabel::Ilm, &[2; 4]);
        let lower = b(BoundaryLabel::Rnfl, &[5; 4]);
        let v = band_intensity(&img, &upper, &lower).unwrap();
        assert!((v - 0.7).abs() < 1e-12);

        // With a dyadic constant every partial sum is exact, so the mean is
        // bit-equal to the input.
        let img = BScan::new(8, 4, vec![0.75; 32], "t").unwrap();
        assert_eq!(band_intensity(&img, &upper, &lower).unwrap(), 0.75);
    }

    #[test]
    fn band_intensity_averages_across_columns() {
        let img = BScan::new(2, 2, vec![0.2, 0.6, 0.2, 0.6], "t").unwrap();
        let upper = b(BoundaryLabel::Ilm, &[0, 0]);
        let lower = b(BoundaryLabel::Rnfl, &[1, 1]);
        let v = band_intensity(&img, &upper, &lower).unwrap();
        assert!((v - 0.4).abs() < 1e-12);
    }

    #[test]
    fn zero_height_columns_contribute_one_pixel() {
        let img = BScan::new(3, 2, vec![0.0, 1.0, 0.5, 0.5, 1.0, 0.0], "t").unwrap();
        let upper = b(BoundaryLabel::Ilm, &[1, 1]);
        let lower = b(BoundaryLabel::Rnfl, &[1, 1]);
        assert_eq!(band_intensity(&img, &upper, &lower).unwrap(), 0.5);
    }

    #[test]
    fn band_rows_outside_the_image_are_rejected() {
        let img = BScan::new(4, 2, vec![0.5; 8], "t").unwrap();
        let upper = b(BoundaryLabel::Ilm, &[1, 1]);
        let lower = b(BoundaryLabel::Rnfl, &[3, 4]);
        let err = band_intensity(&img, &upper, &lower).unwrap_err();
        assert!(matches!(err, Error::BoundaryOutOfBounds { col: 1, row: 4, .. }), "{err:?}");
    }

    #[test]
    fn scan_metrics_reads_the_rpe_band_two_px_each_side() {
        // Bright plateau exactly on RPE ± 2 so the band mean is 1.0.
        let rpe_row = 10usize;
        let img = BScan::new(16, 3, {
            let mut d = vec![0.0; 16 * 3];
            for r in rpe_row - 2..=rpe_row + 2 {
                for c in 0..3 {
                    d[r * 3 + c] = 1.0;
                }
            }
            d
        }, "t")
        .unwrap();
        let ilm = b(BoundaryLabel::Ilm, &[2; 3]);
        let rnfl = b(BoundaryLabel::Rnfl, &[4; 3]);
        let rpe = b(BoundaryLabel::Rpe, &[rpe_row; 3]);
        let m = scan_metrics(&img, &ilm, &rnfl, &rpe, &MetricsConfig::default()).unwrap();
        assert_eq!(m.rpe_band_intensity, 1.0);
        assert_eq!(m.rnfl.px, vec![2, 2, 2]);
        assert_eq!(m.total.px, vec![8, 8, 8]);
    }

    proptest! {
        #[test]
        fn per_column_thickness_decomposes_exactly(
            triples in proptest::collection::vec((0usize..40, 0usize..40, 0usize..40), 1..32),
        ) {
            let ilm: Vec<usize> = triples.iter().map(|&(a, b, c)| a.min(b).min(c)).collect();
            let rpe: Vec<usize> = triples.iter().map(|&(a, b, c)| a.max(b).max(c)).collect();
            let rnfl: Vec<usize> = triples
                .iter()
                .map(|&(a, b, c)| {
                    let (lo, hi) = (a.min(b).min(c), a.max(b).max(c));
                    a + b + c - lo - hi
                })
                .collect();
            let ilm = b(BoundaryLabel::Ilm, &ilm);
            let rnfl = b(BoundaryLabel::Rnfl, &rnfl);
            let rpe = b(BoundaryLabel::Rpe, &rpe);
            let upper = thickness_profile(&ilm, &rnfl, None).unwrap();
            let lower = thickness_profile(&rnfl, &rpe, None).unwrap();
            let total = thickness_profile(&ilm, &rpe, None).unwrap();
            for c in 0..total.px.len() {
                prop_assert_eq!(total.px[c], upper.px[c] + lower.px[c]);
            }
        }

        #[test]
        fn band_intensity_survives_column_permutation(
            cols in 2usize..10,
            seed in 0u64..1000,
        ) {
            let rows = 6usize;
            let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            let mut next = || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 33) % 256) as f64 / 255.0
            };
            let data: Vec<f64> = (0..rows * cols).map(|_| next()).collect();
            let img = BScan::new(rows, cols, data.clone(), "t").unwrap();
            let upper = b(BoundaryLabel::Ilm, &vec![1; cols]);
            let lower = b(BoundaryLabel::Rnfl, &vec![4; cols]);
            let direct = band_intensity(&img, &upper, &lower).unwrap();

            // Rotate the columns and measure again.
            let mut rotated = vec![0.0; rows * cols];
            for r in 0..rows {
                for c in 0..cols {
                    rotated[r * cols + (c + 1) % cols] = data[r * cols + c];
                }
            }
            let img2 = BScan::new(rows, cols, rotated, "t").unwrap();
            let moved = band_intensity(&img2, &upper, &lower).unwrap();
            prop_assert!((direct - moved).abs() < 1e-12);
        }

        #[test]
        fn band_intensity_matches_a_flat_summation_oracle(
            vals in proptest::collection::vec(0u8..=255, 6 * 8),
            top in 0usize..3,
            height in 0usize..3,
        ) {
            let data: Vec<f64> = vals.iter().map(|&v| v as f64 / 255.0).collect();
            let img = BScan::new(6, 8, data.clone(), "t").unwrap();
            let upper = b(BoundaryLabel::Ilm, &vec![top; 8]);
            let lower = b(BoundaryLabel::Rnfl, &vec![top + height; 8]);
            let ours = band_intensity(&img, &upper, &lower).unwrap();

            let picked: Vec<f64> = (0..6 * 8)
                .filter(|i| (top..=top + height).contains(&(i / 8)))
                .map(|i| data[i])
                .collect();
            let reference = picked.iter().sum::<f64>() / picked.len() as f64;
            prop_assert!((ours - reference).abs() < 1e-12);
        }
    }
}
