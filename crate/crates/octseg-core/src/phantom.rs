//! Synthetic B-scan generator with known ground truth, plus the scorer
//! that grades a segmentation against that truth.
//!
//! Layer boundaries are piecewise-cubic curves sampled per column; each
//! region between boundaries is painted with a constant base intensity, so
//! in a noiseless phantom the strongest vertical transitions sit exactly on
//! the ground-truth rows. Optional features model the artifacts the
//! segmenter must survive: a foveal dip, an RNFL pinch-out, columnar vessel
//! shadows, extra painted rectangles, and multiplicative speckle.

use rand::SeedableRng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Boundary, BoundaryLabel};
use crate::image_io::BScan;

/// Base intensity per anatomical region, top to bottom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayerIntensities {
    pub vitreous: f64,
    pub rnfl_band: f64,
    pub inner_tissue: f64,
    pub rpe_band: f64,
    pub below: f64,
}

impl Default for LayerIntensities {
    fn default() -> Self {
        Self {
            vitreous: 0.05,
            rnfl_band: 0.85,
            inner_tissue: 0.40,
            rpe_band: 0.95,
            below: 0.12,
        }
    }
}

/// Foveal depression: a raised-cosine dip applied to the ILM and RNFL
/// curves, optionally pinching the RNFL down to zero thickness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FoveaSpec {
    pub center_col: f64,
    pub width: f64,
    /// Peak downward displacement in rows at the fovea center.
    pub dip_px: f64,
    /// Force the RNFL boundary onto the ILM inside the window.
    pub rnfl_pinch: bool,
    /// Paint a single bright row just beneath the ILM inside the window,
    /// restoring a light-to-dark edge where the pinch removed the band.
    pub ilm_line_intensity: Option<f64>,
}

impl Default for FoveaSpec {
    fn default() -> Self {
        Self {
            center_col: 0.0,
            width: 1.0,
            dip_px: 0.0,
            rnfl_pinch: false,
            ilm_line_intensity: None,
        }
    }
}

/// Columnar shadow: intensities below the ILM are multiplied by
/// `attenuation` for columns within `width` of `center_col`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VesselSpec {
    pub center_col: f64,
    pub width: f64,
    pub attenuation: f64,
}

/// Rectangle painted over the layered background, inclusive bounds clamped
/// to the image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PaintBand {
    pub col_start: usize,
    pub col_end: usize,
    pub row_top: usize,
    pub row_bottom: usize,
    pub intensity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSpec {
    pub rows: usize,
    pub cols: usize,
    /// Control points as `[col, row]` pairs with strictly increasing col.
    pub ilm_curve: Vec<[f64; 2]>,
    pub rnfl_curve: Vec<[f64; 2]>,
    pub rpe_curve: Vec<[f64; 2]>,
    pub intensities: LayerIntensities,
    /// Thickness of the bright band under the RPE boundary.
    pub rpe_band_px: usize,
    pub fovea: Option<FoveaSpec>,
    pub vessels: Vec<VesselSpec>,
    pub bands: Vec<PaintBand>,
    /// Multiplicative speckle scale; 0 disables the noise pass entirely.
    pub speckle_sigma: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            rows: 320,
            cols: 640,
            ilm_curve: vec![[0.0, 60.0], [639.0, 68.0]],
            rnfl_curve: vec![[0.0, 78.0], [639.0, 86.0]],
            rpe_curve: vec![[0.0, 150.0], [639.0, 158.0]],
            intensities: LayerIntensities::default(),
            rpe_band_px: 6,
            fovea: Some(FoveaSpec {
                center_col: 320.0,
                width: 120.0,
                dip_px: 10.0,
                rnfl_pinch: false,
                ilm_line_intensity: None,
            }),
            vessels: vec![
                VesselSpec {
                    center_col: 140.0,
                    width: 12.0,
                    attenuation: 0.45,
                },
                VesselSpec {
                    center_col: 470.0,
                    width: 8.0,
                    attenuation: 0.55,
                },
            ],
            bands: Vec::new(),
            speckle_sigma: 0.05,
            seed: 7,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.rows < 16 || self.cols < 16 {
            return cfg(format!("phantom must be at least 16×16, got {}×{}", self.rows, self.cols));
        }
        for (name, curve) in [
            ("ilm_curve", &self.ilm_curve),
            ("rnfl_curve", &self.rnfl_curve),
            ("rpe_curve", &self.rpe_curve),
        ] {
            if curve.is_empty() {
                return cfg(format!("{name} needs at least one control point"));
            }
            for w in curve.windows(2) {
                if w[1][0] <= w[0][0] {
                    return cfg(format!("{name} control columns must strictly increase"));
                }
            }
            if curve.iter().flatten().any(|v| !v.is_finite()) {
                return cfg(format!("{name} has a non-finite control point"));
            }
        }
        let li = &self.intensities;
        for (name, v) in [
            ("vitreous", li.vitreous),
            ("rnfl_band", li.rnfl_band),
            ("inner_tissue", li.inner_tissue),
            ("rpe_band", li.rpe_band),
            ("below", li.below),
        ] {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return cfg(format!("intensity {name} must lie in [0, 1], got {v}"));
            }
        }
        if self.rpe_band_px == 0 {
            return cfg("rpe_band_px must be at least 1".to_string());
        }
        if let Some(f) = &self.fovea {
            if !(f.width > 0.0) || !f.width.is_finite() {
                return cfg(format!("fovea width must be positive, got {}", f.width));
            }
            if !f.dip_px.is_finite() || f.dip_px < 0.0 {
                return cfg(format!("fovea dip_px must be non-negative, got {}", f.dip_px));
            }
            if let Some(i) = f.ilm_line_intensity {
                if !i.is_finite() || !(0.0..=1.0).contains(&i) {
                    return cfg(format!("ilm_line_intensity must lie in [0, 1], got {i}"));
                }
            }
        }
        for v in &self.vessels {
            if !v.attenuation.is_finite() || !(0.0..=1.0).contains(&v.attenuation) {
                return cfg(format!("vessel attenuation must lie in [0, 1], got {}", v.attenuation));
            }
            if !(v.width > 0.0) || !v.width.is_finite() {
                return cfg(format!("vessel width must be positive, got {}", v.width));
            }
        }
        for b in &self.bands {
            if b.col_start > b.col_end || b.row_top > b.row_bottom {
                return cfg("painted band bounds are inverted".to_string());
            }
            if !b.intensity.is_finite() || !(0.0..=1.0).contains(&b.intensity) {
                return cfg(format!("band intensity must lie in [0, 1], got {}", b.intensity));
            }
        }
        if !self.speckle_sigma.is_finite() || self.speckle_sigma < 0.0 {
            return cfg(format!("speckle_sigma must be non-negative, got {}", self.speckle_sigma));
        }
        Ok(())
    }
}

/// Piecewise-cubic Hermite interpolation through `(col, row)` control
/// points, with finite-difference tangents (C¹, flat extrapolation).
fn curve_row(points: &[[f64; 2]], col: f64) -> f64 {
    match points {
        [] => unreachable!("validated nonempty"),
        [p] => return p[1],
        _ => {}
    }
    let n = points.len();
    if col <= points[0][0] {
        return points[0][1];
    }
    if col >= points[n - 1][0] {
        return points[n - 1][1];
    }
    let i = points.partition_point(|p| p[0] <= col) - 1;
    let (x0, y0) = (points[i][0], points[i][1]);
    let (x1, y1) = (points[i + 1][0], points[i + 1][1]);
    let h = x1 - x0;
    let slope = |a: usize, b: usize| (points[b][1] - points[a][1]) / (points[b][0] - points[a][0]);
    let m0 = if i == 0 {
        slope(0, 1)
    } else {
        (slope(i - 1, i) + slope(i, i + 1)) / 2.0
    };
    let m1 = if i + 2 == n {
        slope(n - 2, n - 1)
    } else {
        (slope(i, i + 1) + slope(i + 1, i + 2)) / 2.0
    };
    let t = (col - x0) / h;
    let (t2, t3) = (t * t, t * t * t);
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0
        + (t3 - 2.0 * t2 + t) * h * m0
        + (-2.0 * t3 + 3.0 * t2) * y1
        + (t3 - t2) * h * m1
}

/// A generated scan together with its ground-truth boundaries.
#[derive(Debug, Clone)]
pub struct Phantom {
    pub scan: BScan,
    pub ilm: Boundary,
    pub rnfl: Boundary,
    pub rpe: Boundary,
}

/// Renders the spec. Painting order: layered regions, extra bands, the
/// foveal ILM line, vessel shadows, then speckle — so later features
/// modulate everything beneath them.
pub fn generate(spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let (rows, cols) = (spec.rows, spec.cols);
    let clamp_row = |v: f64| (v.round().max(0.0) as usize).min(rows - 1);

    let fovea_scale = |c: usize| -> f64 {
        match &spec.fovea {
            Some(f) => {
                let d = (c as f64 - f.center_col).abs();
                if d <= f.width / 2.0 {
                    0.5 * (1.0 + (std::f64::consts::PI * d / (f.width / 2.0)).cos())
                } else {
                    0.0
                }
            }
            None => 0.0,
        }
    };
    let in_pinch = |c: usize| -> bool {
        spec.fovea
            .as_ref()
            .is_some_and(|f| f.rnfl_pinch && (c as f64 - f.center_col).abs() <= f.width / 2.0)
    };

    let mut t_ilm = Vec::with_capacity(cols);
    let mut t_rnfl = Vec::with_capacity(cols);
    let mut t_rpe = Vec::with_capacity(cols);
    for c in 0..cols {
        let dip = spec.fovea.map_or(0.0, |f| f.dip_px) * fovea_scale(c);
        let ilm = clamp_row(curve_row(&spec.ilm_curve, c as f64) + dip);
        let rnfl = if in_pinch(c) {
            ilm
        } else {
            clamp_row(curve_row(&spec.rnfl_curve, c as f64) + dip)
        };
        let rpe = clamp_row(curve_row(&spec.rpe_curve, c as f64));
        if ilm > rnfl || rnfl > rpe {
            return Err(Error::CurveOrdering {
                col: c,
                detail: format!("ilm {ilm}, rnfl {rnfl}, rpe {rpe}"),
            });
        }
        t_ilm.push(ilm);
        t_rnfl.push(rnfl);
        t_rpe.push(rpe);
    }

    let li = &spec.intensities;
    let mut data = vec![0.0f64; rows * cols];
    for c in 0..cols {
        for r in 0..rows {
            let v = if r <= t_ilm[c] {
                li.vitreous
            } else if r <= t_rnfl[c] {
                li.rnfl_band
            } else if r <= t_rpe[c] {
                li.inner_tissue
            } else if r <= t_rpe[c] + spec.rpe_band_px {
                li.rpe_band
            } else {
                li.below
            };
            data[r * cols + c] = v;
        }
    }

    for band in &spec.bands {
        for c in band.col_start..=band.col_end.min(cols - 1) {
            for r in band.row_top..=band.row_bottom.min(rows - 1) {
                data[r * cols + c] = band.intensity;
            }
        }
    }

    if let Some(f) = &spec.fovea {
        if let Some(intensity) = f.ilm_line_intensity {
            for c in 0..cols {
                if in_pinch(c) && t_ilm[c] + 1 < rows {
                    data[(t_ilm[c] + 1) * cols + c] = intensity;
                }
            }
        }
    }

    for vessel in &spec.vessels {
        for c in 0..cols {
            if (c as f64 - vessel.center_col).abs() <= vessel.width / 2.0 {
                for r in t_ilm[c] + 1..rows {
                    data[r * cols + c] *= vessel.attenuation;
                }
            }
        }
    }

    if spec.speckle_sigma > 0.0 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(spec.seed);
        let normal = rand_distr::StandardNormal;
        for v in &mut data {
            let n: f64 = normal.sample(&mut rng);
            *v = (*v * (1.0 + spec.speckle_sigma * n)).clamp(0.0, 1.0);
        }
    }

    let scan = BScan::new(rows, cols, data, format!("phantom-seed-{}", spec.seed))?;
    Ok(Phantom {
        scan,
        ilm: Boundary::new(BoundaryLabel::Ilm, t_ilm, 0.0),
        rnfl: Boundary::new(BoundaryLabel::Rnfl, t_rnfl, 0.0),
        rpe: Boundary::new(BoundaryLabel::Rpe, t_rpe, 0.0),
    })
}

/// Per-boundary MAE tolerances an evaluation must meet to pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalTolerances {
    pub ilm_mae_px: f64,
    pub rnfl_mae_px: f64,
    pub rpe_mae_px: f64,
}

impl Default for EvalTolerances {
    fn default() -> Self {
        Self {
            ilm_mae_px: 2.0,
            rnfl_mae_px: 3.0,
            rpe_mae_px: 2.0,
        }
    }
}

/// Error summary for one boundary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryScore {
    pub label: BoundaryLabel,
    pub mae_px: f64,
    pub max_abs_px: usize,
    /// Fraction of columns within one pixel of the truth.
    pub within_1px: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub ilm: BoundaryScore,
    pub rnfl: BoundaryScore,
    pub rpe: BoundaryScore,
    pub pass: bool,
}

fn score(pred: &Boundary, truth: &Boundary) -> Result<BoundaryScore> {
    if pred.cols() != truth.cols() {
        return Err(Error::ColumnCountMismatch {
            left: pred.cols(),
            right: truth.cols(),
        });
    }
    if pred.cols() == 0 {
        return Err(Error::EmptyBoundary);
    }
    let abs: Vec<usize> = pred
        .row
        .iter()
        .zip(&truth.row)
        .map(|(&p, &t)| p.abs_diff(t))
        .collect();
    let n = abs.len() as f64;
    Ok(BoundaryScore {
        label: truth.label,
        mae_px: abs.iter().sum::<usize>() as f64 / n,
        max_abs_px: *abs.iter().max().expect("nonempty"),
        within_1px: abs.iter().filter(|&&d| d <= 1).count() as f64 / n,
    })
}

/// Grades predicted boundaries against the truth; passes iff every
/// boundary's MAE is within its tolerance.
pub fn evaluate(
    pred: (&Boundary, &Boundary, &Boundary),
    truth: (&Boundary, &Boundary, &Boundary),
    tol: &EvalTolerances,
) -> Result<EvalReport> {
    let ilm = score(pred.0, truth.0)?;
    let rnfl = score(pred.1, truth.1)?;
    let rpe = score(pred.2, truth.2)?;
    let pass = ilm.mae_px <= tol.ilm_mae_px
        && rnfl.mae_px <= tol.rnfl_mae_px
        && rpe.mae_px <= tol.rpe_mae_px;
    Ok(EvalReport {
        ilm,
        rnfl,
        rpe,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn flat_spec() -> PhantomSpec {
        PhantomSpec {
            rows: 120,
            cols: 64,
            ilm_curve: vec![[0.0, 30.0]],
            rnfl_curve: vec![[0.0, 45.0]],
            rpe_curve: vec![[0.0, 80.0]],
            rpe_band_px: 5,
            fovea: None,
            vessels: Vec::new(),
            bands: Vec::new(),
            speckle_sigma: 0.0,
            seed: 1,
            ..PhantomSpec::default()
        }
    }

    #[test]
    fn noiseless_phantom_switches_regions_exactly_at_the_truth_rows() {
        let p = generate(&flat_spec()).unwrap();
        let li = LayerIntensities::default();
        for c in [0, 17, 63] {
            assert_eq!(p.scan.at(p.ilm.row[c], c), li.vitreous);
            assert_eq!(p.scan.at(p.ilm.row[c] + 1, c), li.rnfl_band);
            assert_eq!(p.scan.at(p.rnfl.row[c], c), li.rnfl_band);
            assert_eq!(p.scan.at(p.rnfl.row[c] + 1, c), li.inner_tissue);
            assert_eq!(p.scan.at(p.rpe.row[c], c), li.inner_tissue);
            assert_eq!(p.scan.at(p.rpe.row[c] + 1, c), li.rpe_band);
            assert_eq!(p.scan.at(p.rpe.row[c] + 6, c), li.below);
        }
    }

    #[test]
    fn same_seed_reproduces_the_image_bit_for_bit() {
        let spec = PhantomSpec {
            speckle_sigma: 0.1,
            ..flat_spec()
        };
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.scan.data(), b.scan.data());

        let other = generate(&PhantomSpec { seed: 2, ..spec }).unwrap();
        assert_ne!(a.scan.data(), other.scan.data());
    }

    #[test]
    fn pinch_collapses_the_truth_rnfl_onto_the_ilm() {
        let spec = PhantomSpec {
            fovea: Some(FoveaSpec {
                center_col: 32.0,
                width: 40.0,
                dip_px: 0.0,
                rnfl_pinch: true,
                ilm_line_intensity: None,
            }),
            ..flat_spec()
        };
        let p = generate(&spec).unwrap();
        for c in 0..64usize {
            let inside = (c as f64 - 32.0).abs() <= 20.0;
            if inside {
                assert_eq!(p.rnfl.row[c], p.ilm.row[c], "column {c}");
            } else {
                assert!(p.rnfl.row[c] > p.ilm.row[c], "column {c}");
            }
        }
    }

    #[test]
    fn dip_lowers_the_ilm_by_its_full_depth_at_the_center_only() {
        let spec = PhantomSpec {
            fovea: Some(FoveaSpec {
                center_col: 32.0,
                width: 30.0,
                dip_px: 12.0,
                rnfl_pinch: false,
                ilm_line_intensity: None,
            }),
            ..flat_spec()
        };
        let p = generate(&spec).unwrap();
        assert_eq!(p.ilm.row[32], 42, "full dip at center");
        assert_eq!(p.ilm.row[0], 30, "flat outside the window");
        assert_eq!(p.ilm.row[63], 30);
        assert_eq!(p.rnfl.row[32], 57, "rnfl follows the dip");
    }

    #[test]
    fn crossing_curves_are_rejected_with_the_column() {
        let spec = PhantomSpec {
            rnfl_curve: vec![[0.0, 20.0]],
            ..flat_spec()
        };
        let err = generate(&spec).unwrap_err();
        assert!(matches!(err, Error::CurveOrdering { col: 0, .. }), "{err:?}");
    }

    #[test]
    fn vessels_attenuate_only_below_the_ilm() {
        let spec = PhantomSpec {
            vessels: vec![VesselSpec {
                center_col: 10.0,
                width: 2.0,
                attenuation: 0.5,
            }],
            ..flat_spec()
        };
        let p = generate(&spec).unwrap();
        let li = LayerIntensities::default();
        assert_eq!(p.scan.at(30, 10), li.vitreous, "vitreous untouched");
        assert_eq!(p.scan.at(31, 10), li.rnfl_band * 0.5, "band shadowed");
        assert_eq!(p.scan.at(31, 20), li.rnfl_band, "outside the vessel");
    }

    #[test]
    fn painted_bands_overwrite_the_layered_background() {
        let spec = PhantomSpec {
            bands: vec![PaintBand {
                col_start: 5,
                col_end: 8,
                row_top: 50,
                row_bottom: 55,
                intensity: 0.99,
            }],
            ..flat_spec()
        };
        let p = generate(&spec).unwrap();
        assert_eq!(p.scan.at(52, 6), 0.99);
        assert_eq!(p.scan.at(52, 9), LayerIntensities::default().inner_tissue);
    }

    #[test]
    fn ilm_line_paints_one_bright_row_inside_the_pinch() {
        let spec = PhantomSpec {
            fovea: Some(FoveaSpec {
                center_col: 32.0,
                width: 20.0,
                dip_px: 0.0,
                rnfl_pinch: true,
                ilm_line_intensity: Some(0.9),
            }),
            ..flat_spec()
        };
        let p = generate(&spec).unwrap();
        assert_eq!(p.scan.at(31, 32), 0.9, "line right under the ilm");
        assert_eq!(p.scan.at(32, 32), LayerIntensities::default().inner_tissue);
        assert_eq!(p.scan.at(31, 0), LayerIntensities::default().rnfl_band, "outside pinch");
    }

    #[test]
    fn two_point_curves_interpolate_linearly() {
        assert_eq!(curve_row(&[[0.0, 10.0], [10.0, 20.0]], 5.0), 15.0);
        assert_eq!(curve_row(&[[0.0, 10.0], [10.0, 20.0]], 0.0), 10.0);
        assert_eq!(curve_row(&[[0.0, 10.0], [10.0, 20.0]], 30.0), 20.0, "flat extrapolation");
    }

    #[test]
    fn cubic_curves_pass_through_their_control_points() {
        let pts = [[0.0, 40.0], [20.0, 55.0], [50.0, 35.0], [63.0, 45.0]];
        for p in &pts {
            assert!((curve_row(&pts, p[0]) - p[1]).abs() < 1e-12);
        }
        // C¹ interpolation stays within a sane envelope between points.
        for c in 0..=63 {
            let v = curve_row(&pts, c as f64);
            assert!((25.0..=65.0).contains(&v), "col {c} → {v}");
        }
    }

    #[test]
    fn identical_boundaries_score_zero_and_pass() {
        let p = generate(&flat_spec()).unwrap();
        let report = evaluate(
            (&p.ilm, &p.rnfl, &p.rpe),
            (&p.ilm, &p.rnfl, &p.rpe),
            &EvalTolerances::default(),
        )
        .unwrap();
        assert!(report.pass);
        for s in [&report.ilm, &report.rnfl, &report.rpe] {
            assert_eq!((s.mae_px, s.max_abs_px, s.within_1px), (0.0, 0, 1.0));
        }
    }

    #[test]
    fn constant_offset_scores_its_magnitude() {
        let p = generate(&flat_spec()).unwrap();
        let shifted = Boundary::new(
            BoundaryLabel::Rnfl,
            p.rnfl.row.iter().map(|&r| r + 2).collect(),
            0.0,
        );
        let report = evaluate(
            (&p.ilm, &shifted, &p.rpe),
            (&p.ilm, &p.rnfl, &p.rpe),
            &EvalTolerances::default(),
        )
        .unwrap();
        assert_eq!(report.rnfl.mae_px, 2.0);
        assert_eq!(report.rnfl.max_abs_px, 2);
        assert_eq!(report.rnfl.within_1px, 0.0);
        assert!(report.pass, "2 px is within the 3 px rnfl tolerance");
    }

    #[test]
    fn mixed_offsets_average_and_report_the_worst() {
        let truth = Boundary::new(BoundaryLabel::Ilm, vec![10; 8], 0.0);
        let pred = Boundary::new(
            BoundaryLabel::Ilm,
            vec![10, 10, 10, 10, 14, 14, 14, 14],
            0.0,
        );
        let s = score(&pred, &truth).unwrap();
        assert_eq!(s.mae_px, 2.0);
        assert_eq!(s.max_abs_px, 4);
        assert_eq!(s.within_1px, 0.5);
    }

    #[test]
    fn column_count_mismatch_is_rejected() {
        let a = Boundary::new(BoundaryLabel::Ilm, vec![1; 4], 0.0);
        let b = Boundary::new(BoundaryLabel::Ilm, vec![1; 5], 0.0);
        let err = score(&a, &b).unwrap_err();
        assert!(matches!(err, Error::ColumnCountMismatch { left: 4, right: 5 }), "{err:?}");
    }

    proptest! {
        #[test]
        fn mae_never_exceeds_the_max_error(
            rows in proptest::collection::vec((0usize..100, 0usize..100), 1..40),
        ) {
            let pred = Boundary::new(BoundaryLabel::Ilm, rows.iter().map(|r| r.0).collect(), 0.0);
            let truth = Boundary::new(BoundaryLabel::Ilm, rows.iter().map(|r| r.1).collect(), 0.0);
            let s = score(&pred, &truth).unwrap();
            prop_assert!(s.mae_px <= s.max_abs_px as f64 + 1e-12);
            prop_assert!((0.0..=1.0).contains(&s.within_1px));
        }

        #[test]
        fn speckled_phantoms_stay_in_range_and_reproduce(
            sigma in 0.01f64..0.3,
            seed in 0u64..500,
        ) {
            let spec = PhantomSpec { speckle_sigma: sigma, seed, ..flat_spec() };
            let a = generate(&spec).unwrap();
            let b = generate(&spec).unwrap();
            prop_assert_eq!(a.scan.data(), b.scan.data());
            for &v in a.scan.data() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
