//! Guided nonlocal covariance estimation.
//!
//! For every output pixel `t`, each candidate `s` in the search window is
//! scored by its polarimetric patch dissimilarity and, in guided mode, its
//! optical patch dissimilarity. Candidates above the polarimetric threshold are
//! rejected, the survivors are capped at `s_max` by their ranking key, and the
//! estimate is the weighted mean of the retained outer products `s_s s_s^H`.
//! Rasters are mirror padded here, unlike during calibration.

use crate::calibration::CalibrationResult;
use crate::dissimilarity::{normalize_dissim, pgnlm_weight, PaddedGuide, PaddedScattering};
use crate::error::{Error, Result};
use crate::hermitian::HermitianMatrix3;
use crate::types::{BorderPolicy, CovarianceField, GuideImage, Pixel, ScatteringImage};

/// All estimator tunables. Defaults are a 39x39 search window, 5x5 patches,
/// `gamma = 0.85`, `lambda = 2`, median thresholds and at most 64 predictors.
#[derive(Debug, Clone, PartialEq)]
pub struct PgnlmConfig {
    pub search_half: usize,
    pub patch_half: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub p_pol: f64,
    pub p_opt: f64,
    pub s_max: usize,
    pub guided: bool,
    pub border: BorderPolicy,
}

impl Default for PgnlmConfig {
    fn default() -> Self {
        Self {
            search_half: 19,
            patch_half: 2,
            gamma: 0.85,
            lambda: 2.0,
            p_pol: 50.0,
            p_opt: 50.0,
            s_max: 64,
            guided: true,
            border: BorderPolicy::Mirror,
        }
    }
}

impl PgnlmConfig {
    /// Number of candidates in the search window, `(2 search_half + 1)^2`.
    pub fn window_len(&self) -> usize {
        let side = 2 * self.search_half + 1;
        side * side
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be finite and >= 0, got {}", self.lambda));
        }
        for (name, p) in [("p_pol", self.p_pol), ("p_opt", self.p_opt)] {
            if !(0.0..=100.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 100], got {p}"));
            }
        }
        if self.s_max == 0 || self.s_max > self.window_len() {
            return bad(format!(
                "s_max must lie in [1, {}] for search half-width {}, got {}",
                self.window_len(),
                self.search_half,
                self.s_max
            ));
        }
        Ok(())
    }

    /// One-line summary in the units a user sets them in.
    pub fn summary(&self) -> String {
        let ws = 2 * self.search_half + 1;
        let ps = 2 * self.patch_half + 1;
        format!(
            "search={ws}x{ws} patch={ps}x{ps} gamma={} lambda={} p_pol={} p_opt={} s_max={} guided={}",
            self.gamma, self.lambda, self.p_pol, self.p_opt, self.s_max, self.guided
        )
    }
}

/// Per-pixel predictor count `|Omega''(t)|` and weight sum `N(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorDiagnostics {
    pub height: usize,
    pub width: usize,
    pub predictors_used: Vec<u32>,
    pub weight_sum: Vec<f64>,
}

impl EstimatorDiagnostics {
    /// Mean of `predictors_used / window_len` over all pixels.
    pub fn mean_fraction_used(&self, window_len: usize) -> f64 {
        let total: u64 = self.predictors_used.iter().map(|&n| u64::from(n)).sum();
        total as f64 / (self.predictors_used.len() * window_len) as f64
    }
}

/// Estimate at a single pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelEstimate {
    pub covariance: HermitianMatrix3,
    pub predictors_used: usize,
    pub weight_sum: f64,
}

/// Retained candidate indices, in ascending (raster) order.
///
/// Candidates with `d_pol <= t_pol` survive, and `center` always does. When
/// more than `s_max` survive, the center is kept and the other `s_max - 1`
/// slots go to the survivors with the smallest `rank_key` (ties broken by
/// index). `rank_key` is the optical dissimilarity in guided mode and the
/// polarimetric one otherwise. An infinite `t_pol` accepts every candidate.
pub fn select_predictors(
    d_pol: &[f64],
    rank_key: &[f64],
    center: usize,
    t_pol: f64,
    s_max: usize,
) -> Vec<usize> {
    debug_assert_eq!(d_pol.len(), rank_key.len());
    debug_assert!(center < d_pol.len());
    let mut kept: Vec<usize> = (0..d_pol.len())
        .filter(|&i| i == center || d_pol[i] <= t_pol)
        .collect();
    if kept.len() <= s_max {
        return kept;
    }
    kept.retain(|&i| i != center);
    let order = |a: &usize, b: &usize| rank_key[*a].total_cmp(&rank_key[*b]).then(a.cmp(b));
    let take = s_max.saturating_sub(1);
    if take > 0 {
        kept.select_nth_unstable_by(take - 1, order);
    }
    kept.truncate(take);
    kept.push(center);
    kept.sort_unstable();
    kept
}

/// Prepared estimator: padded rasters plus configuration, reusable across pixels.
pub struct Estimator<'a> {
    img: &'a ScatteringImage,
    cfg: PgnlmConfig,
    pad: PaddedScattering,
    gpad: Option<PaddedGuide>,
    t_pol: f64,
    t_opt: f64,
    accept_all: bool,
}

impl<'a> Estimator<'a> {
    /// `guide` is required when `cfg.guided` is set and ignored otherwise.
    pub fn new(
        img: &'a ScatteringImage,
        guide: Option<&GuideImage>,
        cfg: &PgnlmConfig,
        calib: &CalibrationResult,
    ) -> Result<Self> {
        cfg.validate()?;
        if calib.search_half != cfg.search_half || calib.patch_half != cfg.patch_half {
            return Err(Error::CalibrationMismatch {
                calib_search: calib.search_half,
                calib_patch: calib.patch_half,
                cfg_search: cfg.search_half,
                cfg_patch: cfg.patch_half,
            });
        }
        let margin = cfg.search_half + cfg.patch_half;
        let gpad = if cfg.guided {
            let g = guide.ok_or(Error::MissingGuide)?;
            g.ensure_matches(img)?;
            Some(PaddedGuide::new(g, margin, cfg.border))
        } else {
            None
        };
        Ok(Self {
            img,
            cfg: cfg.clone(),
            pad: PaddedScattering::new(img, margin, cfg.border),
            gpad,
            t_pol: calib.t_pol,
            t_opt: calib.t_opt,
            accept_all: calib.p_pol >= 100.0,
        })
    }

    pub fn config(&self) -> &PgnlmConfig {
        &self.cfg
    }

    /// Raw `(d_pol, d_opt)` for every candidate in raster order of the
    /// search window; `d_opt` is empty in unguided mode.
    pub fn candidate_dissimilarities(&self, t: Pixel) -> (Vec<f64>, Vec<f64>) {
        let hs = self.cfg.search_half as isize;
        let hp = self.cfg.patch_half;
        let n = self.cfg.window_len();
        let ti = self.pad.index(t.row, t.col, 0, 0);
        let mut d_pol = Vec::with_capacity(n);
        let mut d_opt = Vec::with_capacity(if self.gpad.is_some() { n } else { 0 });
        for dr in -hs..=hs {
            for dc in -hs..=hs {
                let si = self.pad.index(t.row, t.col, dr, dc);
                d_pol.push(self.pad.patch_dissim(ti, si, hp));
                if let Some(g) = &self.gpad {
                    d_opt.push(g.patch_dissim(ti, si, hp));
                }
            }
        }
        (d_pol, d_opt)
    }

    /// Retained candidate indices and their weights.
    pub fn predictors(&self, t: Pixel) -> Result<(Vec<usize>, Vec<f64>)> {
        let (d_pol, d_opt) = self.candidate_dissimilarities(t);
        if let Some(bad) = d_pol.iter().chain(&d_opt).position(|v| !v.is_finite()) {
            log::debug!("non-finite dissimilarity for candidate {bad} at {t:?}");
            return Err(Error::NonFiniteDissimilarity {
                row: t.row,
                col: t.col,
            });
        }
        let center = self.cfg.window_len() / 2;
        let threshold = if self.accept_all {
            f64::INFINITY
        } else {
            self.t_pol
        };
        let rank_key = if self.gpad.is_some() { &d_opt } else { &d_pol };
        let chosen = select_predictors(&d_pol, rank_key, center, threshold, self.cfg.s_max);

        let gamma = if self.gpad.is_some() { self.cfg.gamma } else { 1.0 };
        let weights = chosen
            .iter()
            .map(|&k| {
                let dp = normalize_dissim(d_pol[k], self.t_pol);
                let dopt = if self.gpad.is_some() {
                    normalize_dissim(d_opt[k], self.t_opt)
                } else {
                    0.0
                };
                pgnlm_weight(dp, dopt, gamma, self.cfg.lambda)
            })
            .collect();
        Ok((chosen, weights))
    }

    /// Search-window offset `(drow, dcol)` of candidate index `k`.
    pub fn candidate_offset(&self, k: usize) -> (isize, isize) {
        let side = 2 * self.cfg.search_half + 1;
        let hs = self.cfg.search_half as isize;
        ((k / side) as isize - hs, (k % side) as isize - hs)
    }

    pub fn pixel(&self, t: Pixel) -> Result<PixelEstimate> {
        let (chosen, weights) = self.predictors(t)?;
        let mut acc = HermitianMatrix3::ZERO;
        let mut norm = 0.0;
        for (&k, &w) in chosen.iter().zip(&weights) {
            let (dr, dc) = self.candidate_offset(k);
            let s = &self.pad.vectors[self.pad.index(t.row, t.col, dr, dc)];
            acc.add_weighted_outer(s, w);
            norm += w;
        }
        Ok(PixelEstimate {
            covariance: acc.div_scalar(norm),
            predictors_used: chosen.len(),
            weight_sum: norm,
        })
    }

    pub fn run(&self) -> Result<(CovarianceField, EstimatorDiagnostics)> {
        let (h, w) = (self.img.height(), self.img.width());
        let one = |i: usize| self.pixel(Pixel::new(i / w, i % w));

        #[cfg(feature = "parallel")]
        let estimates: Vec<Result<PixelEstimate>> = {
            use rayon::prelude::*;
            (0..h * w).into_par_iter().map(one).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let estimates: Vec<Result<PixelEstimate>> = (0..h * w).map(one).collect();

        let mut cov = Vec::with_capacity(h * w);
        let mut used = Vec::with_capacity(h * w);
        let mut wsum = Vec::with_capacity(h * w);
        for e in estimates {
            let e = e?;
            cov.push(e.covariance);
            used.push(e.predictors_used as u32);
            wsum.push(e.weight_sum);
        }
        Ok((
            CovarianceField::new(h, w, cov)?,
            EstimatorDiagnostics {
                height: h,
                width: w,
                predictors_used: used,
                weight_sum: wsum,
            },
        ))
    }
}

/// Estimate at one pixel; prefer [`Estimator`] when evaluating many pixels.
pub fn estimate_pixel(
    img: &ScatteringImage,
    guide: Option<&GuideImage>,
    t: Pixel,
    cfg: &PgnlmConfig,
    calib: &CalibrationResult,
) -> Result<PixelEstimate> {
    if t.row >= img.height() || t.col >= img.width() {
        return Err(Error::InvalidConfig(format!(
            "pixel ({}, {}) outside {}x{} image",
            t.row,
            t.col,
            img.height(),
            img.width()
        )));
    }
    Estimator::new(img, guide, cfg, calib)?.pixel(t)
}

/// Estimate at every pixel. `cfg.guided = false` runs the unguided variant:
/// weights use only the polarimetric term and the cap keeps the candidates with
/// the lowest polarimetric dissimilarity.
pub fn estimate_image(
    img: &ScatteringImage,
    guide: Option<&GuideImage>,
    cfg: &PgnlmConfig,
    calib: &CalibrationResult,
) -> Result<(CovarianceField, EstimatorDiagnostics)> {
    Estimator::new(img, guide, cfg, calib)?.run()
}

/// Unweighted moving-window mean of outer products with mirror padding.
pub fn boxcar(img: &ScatteringImage, window_half: usize) -> CovarianceField {
    let (h, w) = (img.height(), img.width());
    let pad = PaddedScattering::new(img, window_half, BorderPolicy::Mirror);
    let k = window_half as isize;
    let n = ((2 * window_half + 1) * (2 * window_half + 1)) as f64;
    let one = |i: usize| {
        let (r, c) = (i / w, i % w);
        let mut acc = HermitianMatrix3::ZERO;
        let mut norm = 0.0;
        for dr in -k..=k {
            for dc in -k..=k {
                acc.add_weighted_outer(&pad.vectors[pad.index(r, c, dr, dc)], 1.0);
                norm += 1.0;
            }
        }
        debug_assert_eq!(norm, n);
        acc.div_scalar(norm)
    };

    #[cfg(feature = "parallel")]
    let data: Vec<HermitianMatrix3> = {
        use rayon::prelude::*;
        (0..h * w).into_par_iter().map(one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let data: Vec<HermitianMatrix3> = (0..h * w).map(one).collect();

    CovarianceField::new(h, w, data).expect("boxcar of a valid image is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::calibrate;
    use crate::simulator::{builtin_scene, generate_scene};
    use crate::types::TargetVector;
    use num_complex::Complex64;

    fn small_cfg() -> PgnlmConfig {
        PgnlmConfig {
            search_half: 4,
            patch_half: 1,
            s_max: 20,
            ..PgnlmConfig::default()
        }
    }

    #[test]
    fn defaults_match_published_parameters() {
        let c = PgnlmConfig::default();
        assert_eq!(c.window_len(), 1521);
        assert_eq!(2 * c.patch_half + 1, 5);
        assert_eq!(
            (c.gamma, c.lambda, c.p_pol, c.p_opt, c.s_max),
            (0.85, 2.0, 50.0, 50.0, 64)
        );
        assert!(c.guided);
        assert_eq!(
            c.summary(),
            "search=39x39 patch=5x5 gamma=0.85 lambda=2 p_pol=50 p_opt=50 s_max=64 guided=true"
        );
    }

    #[test]
    fn config_validation() {
        let mut c = PgnlmConfig::default();
        c.s_max = 1522;
        assert!(c.validate().is_err());
        c.s_max = 0;
        assert!(c.validate().is_err());
        c.s_max = 1521;
        c.validate().unwrap();
        c.gamma = 1.2;
        assert!(c.validate().is_err());
        c.gamma = 1.0;
        c.lambda = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn selection_hand_trace() {
        let d_pol = [0.0, 0.1, 0.2, 0.9, 1.1];
        let d_opt = [0.0, 0.5, 0.2, 0.1, 0.0];
        let kept = select_predictors(&d_pol, &d_opt, 0, 1.0, 3);
        // 1-based candidates 1, 4, 3
        assert_eq!(kept, vec![0, 2, 3]);
    }

    #[test]
    fn selection_edge_cases() {
        let d_pol = [0.5, 0.9, 0.0, 0.8];
        let key = [0.1, 0.0, 0.0, 0.2];
        // threshold excludes everything but the center
        assert_eq!(select_predictors(&d_pol, &key, 2, 0.1, 4), vec![2]);
        // no cap needed
        assert_eq!(select_predictors(&d_pol, &key, 2, 1.0, 10), vec![0, 1, 2, 3]);
        // s_max = 1 is center only
        assert_eq!(select_predictors(&d_pol, &key, 2, 1.0, 1), vec![2]);
        // ties on the key fall back to raster order; center always kept
        let flat = [0.0; 4];
        assert_eq!(select_predictors(&d_pol, &flat, 3, 1.0, 2), vec![0, 3]);
        // infinite threshold accepts all
        assert_eq!(
            select_predictors(&[9.0, 0.0, 9.0], &[0.0; 3], 1, f64::INFINITY, 3),
            vec![0, 1, 2]
        );
    }

    #[test]
    fn constant_image_reproduces_outer_product() {
        let s = TargetVector::new(
            Complex64::new(0.5, -1.0),
            Complex64::new(0.25, 0.0),
            Complex64::new(-1.0, 2.0),
        );
        let img = ScatteringImage::constant(14, 14, s).unwrap();
        let guide = GuideImage::constant(14, 14, &[0.3, 0.1]).unwrap();
        let cfg = small_cfg();
        let calib = calibrate(&img, &guide, &cfg).unwrap();
        let (field, diag) = estimate_image(&img, Some(&guide), &cfg, &calib).unwrap();
        let expected = s.outer_product();
        // dyadic components make every sum and the final division exact
        assert!(field.data().iter().all(|m| *m == expected));
        assert!(diag.predictors_used.iter().all(|&n| n as usize == cfg.s_max));
    }

    #[test]
    fn single_predictor_is_center_outer_product() {
        let scene = generate_scene(&builtin_scene("edge2", 24, 1).unwrap()).unwrap();
        let cfg = PgnlmConfig {
            s_max: 1,
            ..small_cfg()
        };
        let calib = calibrate(&scene.slc, &scene.guide, &cfg).unwrap();
        let (field, diag) = estimate_image(&scene.slc, Some(&scene.guide), &cfg, &calib).unwrap();
        assert_eq!(field, CovarianceField::single_look(&scene.slc));
        assert!(diag.predictors_used.iter().all(|&n| n == 1));
        assert!(diag.weight_sum.iter().all(|&w| w == 1.0));
    }

    #[test]
    fn boxcar_identity_window_and_constant() {
        let scene = generate_scene(&builtin_scene("homogeneous", 9, 2).unwrap()).unwrap();
        assert_eq!(boxcar(&scene.slc, 0), CovarianceField::single_look(&scene.slc));
        let s = TargetVector::real(1.0, -2.0, 0.5);
        let img = ScatteringImage::constant(5, 6, s).unwrap();
        for m in boxcar(&img, 2).data() {
            assert!(m.sub(&s.outer_product()).frobenius_norm() < 1e-14);
        }
    }

    #[test]
    fn boxcar_three_by_three_center() {
        let data: Vec<TargetVector> = (0..9)
            .map(|i| {
                let f = i as f64;
                TargetVector::new(
                    Complex64::new(f, 1.0),
                    Complex64::new(0.5, -f),
                    Complex64::new(f * f, 0.25),
                )
            })
            .collect();
        let img = ScatteringImage::new(3, 3, data.clone()).unwrap();
        let got = *boxcar(&img, 1).get(1, 1);
        // brute force over the full 3x3 matrix
        let mut full = [[Complex64::new(0.0, 0.0); 3]; 3];
        for s in &data {
            let v = s.as_array();
            for i in 0..3 {
                for j in 0..3 {
                    full[i][j] += v[i] * v[j].conj() / 9.0;
                }
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                let d = got.element(i, j) - full[i][j];
                assert!(
                    d.norm() < 1e-12,
                    "({i},{j}) {:?} vs {:?}",
                    got.element(i, j),
                    full[i][j]
                );
            }
        }
    }

    #[test]
    fn missing_guide_and_geometry_errors() {
        let scene = generate_scene(&builtin_scene("homogeneous", 16, 2).unwrap()).unwrap();
        let cfg = small_cfg();
        let calib = calibrate(&scene.slc, &scene.guide, &cfg).unwrap();
        assert!(matches!(
            estimate_image(&scene.slc, None, &cfg, &calib),
            Err(Error::MissingGuide)
        ));
        let other = PgnlmConfig {
            patch_half: 2,
            ..cfg.clone()
        };
        assert!(matches!(
            estimate_image(&scene.slc, Some(&scene.guide), &other, &calib),
            Err(Error::CalibrationMismatch { .. })
        ));
        let small_guide = GuideImage::constant(8, 16, &[0.0]).unwrap();
        assert!(matches!(
            estimate_image(&scene.slc, Some(&small_guide), &cfg, &calib),
            Err(Error::DimensionMismatch { .. })
        ));
        // unguided ignores the guide entirely
        let unguided = PgnlmConfig { guided: false, ..cfg };
        estimate_image(&scene.slc, None, &unguided, &calib).unwrap();
    }

    #[test]
    fn center_weight_is_one_and_included() {
        let scene = generate_scene(&builtin_scene("checkerboard", 20, 5).unwrap()).unwrap();
        let cfg = small_cfg();
        let calib = calibrate(&scene.slc, &scene.guide, &cfg).unwrap();
        let est = Estimator::new(&scene.slc, Some(&scene.guide), &cfg, &calib).unwrap();
        let center = cfg.window_len() / 2;
        for t in [Pixel::new(0, 0), Pixel::new(19, 3), Pixel::new(10, 10)] {
            let (chosen, weights) = est.predictors(t).unwrap();
            let pos = chosen.iter().position(|&k| k == center).expect("center retained");
            assert_eq!(weights[pos], 1.0);
            assert!(weights.iter().all(|&w| w > 0.0 && w <= 1.0));
        }
    }

    #[test]
    fn estimate_pixel_matches_image_run() {
        let scene = generate_scene(&builtin_scene("edge2", 18, 4).unwrap()).unwrap();
        let cfg = small_cfg();
        let calib = calibrate(&scene.slc, &scene.guide, &cfg).unwrap();
        let (field, diag) = estimate_image(&scene.slc, Some(&scene.guide), &cfg, &calib).unwrap();
        let t = Pixel::new(5, 9);
        let one = estimate_pixel(&scene.slc, Some(&scene.guide), t, &cfg, &calib).unwrap();
        assert_eq!(one.covariance, *field.get(5, 9));
        assert_eq!(one.predictors_used as u32, diag.predictors_used[5 * 18 + 9]);
        assert!(estimate_pixel(&scene.slc, Some(&scene.guide), Pixel::new(18, 0), &cfg, &calib).is_err());
    }
}
