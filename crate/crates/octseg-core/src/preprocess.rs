//! Phase-1 preprocessing: smooth, median-filter and binarize the scan, then
//! morphologically clean the binary image and extract the per-column edge
//! that will bound the RNFL search from below.
//!
//! The pipeline ends by deleting the topmost surviving bright band — the
//! ILM–RNFL complex itself — so the first bright row left in each column
//! marks tissue *below* the RNFL. Columns where nothing bright survives
//! (fovea, vessel shadows) report an absent edge rather than a guess.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image_io::BScan;

/// How [`binarize`] picks its threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinarizeMethod {
    /// Maximize inter-class variance over a 256-bin histogram.
    Otsu,
    /// Use `fixed_threshold` as given.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Gaussian window side length; odd.
    pub smooth_window: usize,
    pub smooth_sigma: f64,
    /// Vertical median window applied within each column; odd.
    pub column_median_window: usize,
    pub binarize_method: BinarizeMethod,
    /// Threshold in `[0, 1]`; required by `BinarizeMethod::Fixed`.
    pub fixed_threshold: Option<f64>,
    /// Square structuring-element side for the closing passes.
    pub closing_se: usize,
    /// Components smaller than this are dropped after the first closing.
    pub min_area_px: usize,
    /// Area floor for the second removal pass; defaults to the column count
    /// of the image being processed.
    pub band_area_floor: Option<usize>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            smooth_window: 5,
            smooth_sigma: 1.5,
            column_median_window: 7,
            binarize_method: BinarizeMethod::Otsu,
            fixed_threshold: None,
            closing_se: 2,
            min_area_px: 500,
            band_area_floor: None,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.smooth_window == 0 || self.smooth_window % 2 == 0 {
            return cfg(format!("smooth_window must be odd, got {}", self.smooth_window));
        }
        if !self.smooth_sigma.is_finite() || self.smooth_sigma <= 0.0 {
            return cfg(format!("smooth_sigma must be positive, got {}", self.smooth_sigma));
        }
        if self.column_median_window == 0 || self.column_median_window % 2 == 0 {
            return cfg(format!(
                "column_median_window must be odd, got {}",
                self.column_median_window
            ));
        }
        if self.closing_se == 0 {
            return cfg("closing_se must be at least 1".to_string());
        }
        if self.min_area_px == 0 {
            return cfg("min_area_px must be at least 1".to_string());
        }
        if self.band_area_floor == Some(0) {
            return cfg("band_area_floor must be at least 1".to_string());
        }
        match (self.binarize_method, self.fixed_threshold) {
            (BinarizeMethod::Fixed, None) => {
                cfg("binarize_method = \"fixed\" requires fixed_threshold".to_string())
            }
            (BinarizeMethod::Fixed, Some(t)) if !t.is_finite() || !(0.0..=1.0).contains(&t) => {
                cfg(format!("fixed_threshold must lie in [0, 1], got {t}"))
            }
            (BinarizeMethod::Otsu, Some(_)) => {
                cfg("fixed_threshold is set but binarize_method is \"otsu\"".to_string())
            }
            _ => Ok(()),
        }
    }
}

/// Boolean mask with the same shape as the scan it was derived from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    pub rows: usize,
    pub cols: usize,
    mask: Vec<bool>,
}

impl BinaryImage {
    pub fn new_false(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            mask: vec![false; rows * cols],
        }
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> bool {
        self.mask[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.mask[row * self.cols + col] = value;
    }

    pub fn count_true(&self) -> usize {
        self.mask.iter().filter(|&&v| v).count()
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }
}

/// Topmost bright row per column of the cleaned mask; `None` where the
/// column went fully dark.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Phase1Edge {
    pub first_bright_row: Vec<Option<usize>>,
}

impl Phase1Edge {
    pub fn cols(&self) -> usize {
        self.first_bright_row.len()
    }

    pub fn present_count(&self) -> usize {
        self.first_bright_row.iter().filter(|r| r.is_some()).count()
    }
}

/// Everything [`phase1_pipeline`] learned, kept for diagnostics.
#[derive(Debug, Clone)]
pub struct Phase1Output {
    /// Cleaned mask after the topmost band was deleted.
    pub mask: BinaryImage,
    pub edge: Phase1Edge,
    /// Binarization threshold actually applied.
    pub threshold: f64,
    /// Otsu could not separate two classes and fell back to 0.5.
    pub otsu_degenerate: bool,
    /// Bottommost row of the deleted band, per column.
    pub removed_band_bottom: Vec<Option<usize>>,
}

/// Result of [`binarize`]: the mask plus the threshold that produced it.
#[derive(Debug, Clone)]
pub struct BinarizeOutcome {
    pub image: BinaryImage,
    pub threshold: f64,
    /// Histogram had a single occupied bin; threshold fell back to 0.5.
    pub degenerate: bool,
}

fn gaussian_kernel(window: usize, sigma: f64) -> Vec<f64> {
    let half = (window / 2) as isize;
    let mut k: Vec<f64> = (-half..=half)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    for w in &mut k {
        *w /= total;
    }
    k
}

/// Gaussian-smooths the scan with replicate-padded borders. The kernel is
/// separable, so the two 1-D passes equal the full 2-D convolution exactly:
/// replicate padding clamps each axis independently.
pub fn smooth(img: &BScan, cfg: &PreprocessConfig) -> Result<BScan> {
    cfg.validate()?;
    let kernel = gaussian_kernel(cfg.smooth_window, cfg.smooth_sigma);
    let half = (cfg.smooth_window / 2) as isize;
    let (rows, cols) = (img.rows, img.cols);

    let clamp = |v: isize, hi: usize| v.clamp(0, hi as isize - 1) as usize;
    let mut horizontal = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = 0.0;
            for (i, w) in kernel.iter().enumerate() {
                let cc = clamp(c as isize + i as isize - half, cols);
                acc += w * img.at(r, cc);
            }
            horizontal[r * cols + c] = acc;
        }
    }
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = 0.0;
            for (i, w) in kernel.iter().enumerate() {
                let rr = clamp(r as isize + i as isize - half, rows);
                acc += w * horizontal[rr * cols + c];
            }
            out[r * cols + c] = acc.clamp(0.0, 1.0);
        }
    }
    BScan::new(rows, cols, out, img.source_id.clone())
}

/// Median-filters each column independently along its length, replicating
/// the first and last rows past the borders.
pub fn column_median(img: &BScan, cfg: &PreprocessConfig) -> Result<BScan> {
    cfg.validate()?;
    let window = cfg.column_median_window;
    if window > img.rows {
        return Err(Error::WindowTooLarge {
            window,
            available: img.rows,
        });
    }
    let half = (window / 2) as isize;
    let (rows, cols) = (img.rows, img.cols);
    let mut out = vec![0.0; rows * cols];
    let mut buf = vec![0.0; window];
    for c in 0..cols {
        for r in 0..rows {
            for (i, slot) in buf.iter_mut().enumerate() {
                let rr = (r as isize + i as isize - half).clamp(0, rows as isize - 1) as usize;
                *slot = img.at(rr, c);
            }
            buf.sort_unstable_by(f64::total_cmp);
            out[r * cols + c] = buf[window / 2];
        }
    }
    BScan::new(rows, cols, out, img.source_id.clone())
}

/// Thresholds the scan: `mask = intensity ≥ threshold`, where the threshold
/// is either the configured fixed value or Otsu's inter-class-variance
/// maximizer over a 256-bin histogram (bin = round(v · 255), cut `t` maps to
/// threshold (t + 0.5) / 255, ties resolved toward the smallest cut).
pub fn binarize(img: &BScan, cfg: &PreprocessConfig) -> Result<BinarizeOutcome> {
    cfg.validate()?;
    let (threshold, degenerate) = match cfg.binarize_method {
        BinarizeMethod::Fixed => (cfg.fixed_threshold.expect("validated"), false),
        BinarizeMethod::Otsu => {
            let mut hist = [0u64; 256];
            for &v in img.data() {
                hist[(v * 255.0).round() as usize] += 1;
            }
            let total: u64 = hist.iter().sum();
            let total_sum: f64 = hist
                .iter()
                .enumerate()
                .map(|(b, &n)| b as f64 * n as f64)
                .sum();
            let mut best: Option<(usize, f64)> = None;
            let (mut w0, mut sum0) = (0u64, 0.0f64);
            for t in 0..255usize {
                w0 += hist[t];
                sum0 += t as f64 * hist[t] as f64;
                if w0 == 0 {
                    continue;
                }
                let w1 = total - w0;
                if w1 == 0 {
                    break;
                }
                let mu0 = sum0 / w0 as f64;
                let mu1 = (total_sum - sum0) / w1 as f64;
                let var = w0 as f64 * w1 as f64 * (mu0 - mu1) * (mu0 - mu1);
                if best.is_none_or(|(_, b)| var > b) {
                    best = Some((t, var));
                }
            }
            match best {
                Some((t, _)) => ((t as f64 + 0.5) / 255.0, false),
                None => (0.5, true),
            }
        }
    };
    let mut image = BinaryImage::new_false(img.rows, img.cols);
    for r in 0..img.rows {
        for c in 0..img.cols {
            image.set(r, c, img.at(r, c) >= threshold);
        }
    }
    Ok(BinarizeOutcome {
        image,
        threshold,
        degenerate,
    })
}

/// Morphological closing (dilation then erosion) with a `se_side` × `se_side`
/// square whose origin sits at its top-left pixel. Dilation discards results
/// that fall outside the image; erosion treats out-of-image probes as
/// satisfied. Under this pairing closing never removes a true pixel and
/// applying it twice changes nothing.
pub fn close(img: &BinaryImage, se_side: usize) -> BinaryImage {
    let (rows, cols) = (img.rows, img.cols);
    let mut dilated = BinaryImage::new_false(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            'probe: for dr in 0..se_side {
                for dc in 0..se_side {
                    if r >= dr && c >= dc && img.at(r - dr, c - dc) {
                        dilated.set(r, c, true);
                        break 'probe;
                    }
                }
            }
        }
    }
    let mut out = BinaryImage::new_false(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            let mut all = true;
            'check: for dr in 0..se_side {
                for dc in 0..se_side {
                    let (rr, cc) = (r + dr, c + dc);
                    if rr < rows && cc < cols && !dilated.at(rr, cc) {
                        all = false;
                        break 'check;
                    }
                }
            }
            out.set(r, c, all);
        }
    }
    out
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
    }
}

/// Unions every true pixel with its true neighbors among the four already
/// visited in raster order, which covers all eight directions.
fn link_components(img: &BinaryImage) -> UnionFind {
    let (rows, cols) = (img.rows, img.cols);
    let mut uf = UnionFind::new(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            if !img.at(r, c) {
                continue;
            }
            let idx = r * cols + c;
            if c > 0 && img.at(r, c - 1) {
                uf.union(idx, idx - 1);
            }
            if r > 0 {
                for cc in c.saturating_sub(1)..=(c + 1).min(cols - 1) {
                    if img.at(r - 1, cc) {
                        uf.union(idx, (r - 1) * cols + cc);
                    }
                }
            }
        }
    }
    uf
}

/// Clears every 8-connected component with fewer than `min_area` pixels.
pub fn remove_small(img: &BinaryImage, min_area: usize) -> BinaryImage {
    let mut uf = link_components(img);
    let mut area = vec![0usize; img.rows * img.cols];
    for idx in 0..img.rows * img.cols {
        if img.mask()[idx] {
            area[uf.find(idx)] += 1;
        }
    }
    let mut out = img.clone();
    for r in 0..img.rows {
        for c in 0..img.cols {
            let idx = r * img.cols + c;
            if img.mask()[idx] && area[uf.find(idx)] < min_area {
                out.set(r, c, false);
            }
        }
    }
    out
}

/// Runs the full Phase-1 sequence: smooth → column median → binarize →
/// close → drop components under `min_area_px` → close → drop components
/// under `band_area_floor` (column count by default) → delete the band
/// containing the topmost surviving pixel → read off each column's first
/// bright row.
pub fn phase1_pipeline(img: &BScan, cfg: &PreprocessConfig) -> Result<Phase1Output> {
    cfg.validate()?;
    let smoothed = smooth(img, cfg)?;
    let medianed = column_median(&smoothed, cfg)?;
    let binarized = binarize(&medianed, cfg)?;
    let closed = close(&binarized.image, cfg.closing_se);
    let survivors = remove_small(&closed, cfg.min_area_px);
    let closed_again = close(&survivors, cfg.closing_se);
    let floor = cfg.band_area_floor.unwrap_or(img.cols);
    let mut mask = remove_small(&closed_again, floor);

    let top = mask.mask().iter().position(|&v| v).ok_or(Error::Phase1Empty)?;
    let mut uf = link_components(&mask);
    let band_root = uf.find(top);
    let mut removed_band_bottom = vec![None; img.cols];
    for r in 0..img.rows {
        for c in 0..img.cols {
            let idx = r * img.cols + c;
            if mask.mask()[idx] && uf.find(idx) == band_root {
                mask.set(r, c, false);
                removed_band_bottom[c] = Some(r);
            }
        }
    }
    if mask.count_true() == 0 {
        return Err(Error::Phase1Empty);
    }

    let first_bright_row = (0..img.cols)
        .map(|c| (0..img.rows).find(|&r| mask.at(r, c)))
        .collect();
    Ok(Phase1Output {
        mask,
        edge: Phase1Edge { first_bright_row },
        threshold: binarized.threshold,
        otsu_degenerate: binarized.degenerate,
        removed_band_bottom,
    })
}
