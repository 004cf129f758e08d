//! Percentile thresholds for the two dissimilarity measures.
//!
//! Thresholds come from a reference set of patch dissimilarities: a search
//! window is centered on every main-diagonal pixel whose window and patch
//! margin fit inside the image, and every window position is compared with the
//! window center. Nothing is padded here.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dissimilarity::{PaddedGuide, PaddedScattering};
use crate::error::{Error, Result};
use crate::estimator::PgnlmConfig;
use crate::types::{GuideImage, Pixel, ScatteringImage};

/// Thresholds derived from the reference dissimilarity set.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub t_pol: f64,
    pub t_opt: f64,
    pub p_pol: f64,
    pub p_opt: f64,
    pub n_samples: usize,
    pub search_half: usize,
    pub patch_half: usize,
}

/// Where reference search windows are centered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamplingMode {
    #[default]
    Diagonal,
    /// Uniformly drawn interior centers, without replacement.
    /// `count` defaults to the number of diagonal centers.
    Random { seed: u64, count: Option<usize> },
}

/// The full reference set, in enumeration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReferenceSet {
    pub d_pol: Vec<f64>,
    pub d_opt: Vec<f64>,
}

fn margin_check(height: usize, width: usize, search_half: usize, patch_half: usize) -> Result<usize> {
    let margin = search_half + patch_half;
    if height.min(width) <= 2 * margin {
        return Err(Error::ImageTooSmall {
            height,
            width,
            search_half,
            patch_half,
            min_side: 2 * margin,
        });
    }
    Ok(margin)
}

/// Diagonal centers `(i, i)` for `i` in `[m, min(h, w) - m)`, `m = search_half + patch_half`.
pub fn diagonal_sample_positions(
    height: usize,
    width: usize,
    search_half: usize,
    patch_half: usize,
) -> Result<Vec<Pixel>> {
    let m = margin_check(height, width, search_half, patch_half)?;
    Ok((m..height.min(width) - m).map(|i| Pixel::new(i, i)).collect())
}

/// Interior centers drawn uniformly without replacement.
pub fn random_sample_positions(
    height: usize,
    width: usize,
    search_half: usize,
    patch_half: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<Pixel>> {
    let m = margin_check(height, width, search_half, patch_half)?;
    let (ih, iw) = (height - 2 * m, width - 2 * m);
    let total = ih * iw;
    if count > total {
        return Err(Error::InvalidConfig(format!(
            "cannot draw {count} distinct centers from {total} interior positions"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(index::sample(&mut rng, total, count)
        .into_iter()
        .map(|k| Pixel::new(m + k / iw, m + k % iw))
        .collect())
}

/// Enumerates `d_Pol` (and `d_OPT` when a guide is given) between each
/// center patch and every patch in its search window.
pub fn reference_dissimilarities(
    img: &ScatteringImage,
    guide: Option<&GuideImage>,
    search_half: usize,
    patch_half: usize,
    mode: SamplingMode,
) -> Result<ReferenceSet> {
    if let Some(g) = guide {
        g.ensure_matches(img)?;
    }
    let (h, w) = (img.height(), img.width());
    let centers = match mode {
        SamplingMode::Diagonal => diagonal_sample_positions(h, w, search_half, patch_half)?,
        SamplingMode::Random { seed, count } => {
            let n = match count {
                Some(n) => n,
                None => diagonal_sample_positions(h, w, search_half, patch_half)?.len(),
            };
            random_sample_positions(h, w, search_half, patch_half, n, seed)?
        }
    };

    // margin 0: every access below stays inside the image
    let pad = PaddedScattering::new(img, 0, Default::default());
    let gpad = guide.map(|g| PaddedGuide::new(g, 0, Default::default()));
    let hs = search_half as isize;

    let per_center = |t: &Pixel| -> (Vec<f64>, Vec<f64>) {
        let ti = pad.index(t.row, t.col, 0, 0);
        let window = (2 * search_half + 1) * (2 * search_half + 1);
        let mut dp = Vec::with_capacity(window);
        let mut dopt = Vec::with_capacity(if gpad.is_some() { window } else { 0 });
        for dr in -hs..=hs {
            for dc in -hs..=hs {
                let si = pad.index(t.row, t.col, dr, dc);
                dp.push(pad.patch_dissim(ti, si, patch_half));
                if let Some(g) = &gpad {
                    dopt.push(g.patch_dissim(ti, si, patch_half));
                }
            }
        }
        (dp, dopt)
    };

    #[cfg(feature = "parallel")]
    let parts: Vec<(Vec<f64>, Vec<f64>)> = {
        use rayon::prelude::*;
        centers.par_iter().map(per_center).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<(Vec<f64>, Vec<f64>)> = centers.iter().map(per_center).collect();

    let mut set = ReferenceSet::default();
    for (ci, (dp, dopt)) in parts.into_iter().enumerate() {
        if dp.iter().chain(&dopt).any(|v| !v.is_finite()) {
            let t = centers[ci];
            return Err(Error::NonFiniteDissimilarity {
                row: t.row,
                col: t.col,
            });
        }
        set.d_pol.extend(dp);
        set.d_opt.extend(dopt);
    }
    Ok(set)
}

/// Percentile of `values` with linear interpolation between closest ranks:
/// rank `p / 100 * (n - 1)` in ascending order.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of an empty set");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    percentile_sorted(&sorted, p)
}

/// [`percentile`] on data already sorted ascending.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let p = p.clamp(0.0, 100.0);
    let rank = p / 100.0 * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    if lo == hi {
        return sorted[lo];
    }
    let frac = rank - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

fn check_percentile(name: &str, p: f64) -> Result<()> {
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::InvalidConfig(format!(
            "{name} must lie in [0, 100], got {p}"
        )));
    }
    Ok(())
}

/// Thresholds at `cfg.p_pol` / `cfg.p_opt` from the diagonal reference set.
pub fn calibrate(img: &ScatteringImage, guide: &GuideImage, cfg: &PgnlmConfig) -> Result<CalibrationResult> {
    calibrate_with(img, guide, cfg, SamplingMode::Diagonal)
}

pub fn calibrate_with(
    img: &ScatteringImage,
    guide: &GuideImage,
    cfg: &PgnlmConfig,
    mode: SamplingMode,
) -> Result<CalibrationResult> {
    check_percentile("p_pol", cfg.p_pol)?;
    check_percentile("p_opt", cfg.p_opt)?;
    let mut set = reference_dissimilarities(img, Some(guide), cfg.search_half, cfg.patch_half, mode)?;
    let n_samples = set.d_pol.len();
    set.d_pol.sort_by(f64::total_cmp);
    set.d_opt.sort_by(f64::total_cmp);
    Ok(CalibrationResult {
        t_pol: percentile_sorted(&set.d_pol, cfg.p_pol),
        t_opt: percentile_sorted(&set.d_opt, cfg.p_opt),
        p_pol: cfg.p_pol,
        p_opt: cfg.p_opt,
        n_samples,
        search_half: cfg.search_half,
        patch_half: cfg.patch_half,
    })
}

impl CalibrationResult {
    /// Plain `key=value` lines; floats are written in shortest round-trip form.
    pub fn to_kv_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "t_pol={:?}", self.t_pol);
        let _ = writeln!(s, "t_opt={:?}", self.t_opt);
        let _ = writeln!(s, "p_pol={:?}", self.p_pol);
        let _ = writeln!(s, "p_opt={:?}", self.p_opt);
        let _ = writeln!(s, "n_samples={}", self.n_samples);
        let _ = writeln!(s, "search_half={}", self.search_half);
        let _ = writeln!(s, "patch_half={}", self.patch_half);
        s
    }

    pub fn from_kv_str(text: &str, origin: &Path) -> Result<Self> {
        let parse_err = |reason: String| Error::Parse {
            path: origin.to_path_buf(),
            reason,
        };
        let mut t_pol = None;
        let mut t_opt = None;
        let mut p_pol = None;
        let mut p_opt = None;
        let mut n_samples = None;
        let mut search_half = None;
        let mut patch_half = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("line {}: expected key=value", lineno + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            let f = || {
                v.parse::<f64>()
                    .map_err(|e| parse_err(format!("line {}: {k}: {e}", lineno + 1)))
            };
            let u = || {
                v.parse::<usize>()
                    .map_err(|e| parse_err(format!("line {}: {k}: {e}", lineno + 1)))
            };
            match k {
                "t_pol" => t_pol = Some(f()?),
                "t_opt" => t_opt = Some(f()?),
                "p_pol" => p_pol = Some(f()?),
                "p_opt" => p_opt = Some(f()?),
                "n_samples" => n_samples = Some(u()?),
                "search_half" => search_half = Some(u()?),
                "patch_half" => patch_half = Some(u()?),
                other => log::warn!("{}: ignoring unknown key '{other}'", origin.display()),
            }
        }
        let need = |name: &str| parse_err(format!("missing key '{name}'"));
        let res = Self {
            t_pol: t_pol.ok_or_else(|| need("t_pol"))?,
            t_opt: t_opt.ok_or_else(|| need("t_opt"))?,
            p_pol: p_pol.ok_or_else(|| need("p_pol"))?,
            p_opt: p_opt.ok_or_else(|| need("p_opt"))?,
            n_samples: n_samples.ok_or_else(|| need("n_samples"))?,
            search_half: search_half.ok_or_else(|| need("search_half"))?,
            patch_half: patch_half.ok_or_else(|| need("patch_half"))?,
        };
        if !(res.t_pol >= 0.0 && res.t_pol.is_finite() && res.t_opt >= 0.0 && res.t_opt.is_finite()) {
            return Err(parse_err("thresholds must be finite and non-negative".into()));
        }
        if res.n_samples == 0 {
            return Err(parse_err("n_samples must be positive".into()));
        }
        Ok(res)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_kv_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_kv_str(&text, path)
    }
}
