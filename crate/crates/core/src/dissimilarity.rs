//! Patch dissimilarities and the exponential weight kernel.
//!
//! The polarimetric measure compares target vectors directly, normalising the
//! squared difference by the mean squared norm of the two vectors, and averages
//! that over a patch. The optical measure is the band- and patch-averaged
//! squared difference of guide values. Both are symmetric in the two patch
//! centers, bit for bit.

use crate::types::{BorderPolicy, GuideImage, Patch, Pixel, ScatteringImage, TargetVector};

#[inline]
pub(crate) fn vector_dissim_with_norms(a: &TargetVector, b: &TargetVector, na: f64, nb: f64) -> f64 {
    let den = 0.5 * (na + nb);
    if den == 0.0 {
        // both vectors are exactly zero
        return 0.0;
    }
    let num = (a.hh - b.hh).norm_sqr() + (a.hv - b.hv).norm_sqr() + (a.vv - b.vv).norm_sqr();
    num / den
}

/// `|a - b|^2 / (0.5 (|a|^2 + |b|^2))`, in `[0, 4]`; zero when both vectors are zero.
pub fn vector_dissim(a: &TargetVector, b: &TargetVector) -> f64 {
    vector_dissim_with_norms(a, b, a.norm_sqr(), b.norm_sqr())
}

/// Mean of [`vector_dissim`] over corresponding pixels of the patches centered on `t` and `s`.
pub fn polsar_patch_dissim(
    img: &ScatteringImage,
    t: Pixel,
    s: Pixel,
    patch: Patch,
    border: BorderPolicy,
) -> f64 {
    let (tr, tc) = (t.row as isize, t.col as isize);
    let (sr, sc) = (s.row as isize, s.col as isize);
    let mut sum = 0.0;
    for (dr, dc) in patch.offsets() {
        let a = img.get_padded(tr + dr, tc + dc, border);
        let b = img.get_padded(sr + dr, sc + dc, border);
        sum += vector_dissim_with_norms(a, b, a.norm_sqr(), b.norm_sqr());
    }
    sum / patch.len() as f64
}

/// Squared guide difference averaged over bands and patch offsets.
pub fn optical_patch_dissim(
    guide: &GuideImage,
    t: Pixel,
    s: Pixel,
    patch: Patch,
    border: BorderPolicy,
) -> f64 {
    let (tr, tc) = (t.row as isize, t.col as isize);
    let (sr, sc) = (s.row as isize, s.col as isize);
    let mut sum = 0.0;
    for (dr, dc) in patch.offsets() {
        let a = guide.pixel_padded(tr + dr, tc + dc, border);
        let b = guide.pixel_padded(sr + dr, sc + dc, border);
        sum += band_sq_diff(a, b);
    }
    sum / (patch.len() * guide.bands()) as f64
}

#[inline]
fn band_sq_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Exponential weight `exp(-lambda (gamma d_pol + (1 - gamma) d_opt))` on
/// percentile-normalised dissimilarities.
///
/// A term whose mixing coefficient is zero is skipped, so an infinite
/// dissimilarity in a disabled domain does not poison the weight.
pub fn pgnlm_weight(d_pol_norm: f64, d_opt_norm: f64, gamma: f64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 1.0;
    }
    let mut e = 0.0;
    if gamma > 0.0 {
        e += gamma * d_pol_norm;
    }
    if gamma < 1.0 {
        e += (1.0 - gamma) * d_opt_norm;
    }
    (-lambda * e).exp()
}

/// Dissimilarity divided by its percentile threshold.
///
/// A zero threshold maps zero to zero and anything else to infinity.
#[inline]
pub fn normalize_dissim(d: f64, threshold: f64) -> f64 {
    if threshold > 0.0 {
        d / threshold
    } else if d == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Scattering image copied into a mirror-padded buffer with precomputed norms,
/// so that patch loops need no border handling.
#[derive(Debug, Clone)]
pub(crate) struct PaddedScattering {
    pub margin: usize,
    pub stride: usize,
    pub vectors: Vec<TargetVector>,
    pub norms: Vec<f64>,
}

impl PaddedScattering {
    pub fn new(img: &ScatteringImage, margin: usize, border: BorderPolicy) -> Self {
        let ph = img.height() + 2 * margin;
        let pw = img.width() + 2 * margin;
        let m = margin as isize;
        let mut vectors = Vec::with_capacity(ph * pw);
        for r in 0..ph as isize {
            for c in 0..pw as isize {
                vectors.push(*img.get_padded(r - m, c - m, border));
            }
        }
        let norms = vectors.iter().map(TargetVector::norm_sqr).collect();
        Self {
            margin,
            stride: pw,
            vectors,
            norms,
        }
    }

    /// Linear index of image position `(row, col)` shifted by `(dr, dc)`.
    #[inline]
    pub fn index(&self, row: usize, col: usize, dr: isize, dc: isize) -> usize {
        let r = (row + self.margin) as isize + dr;
        let c = (col + self.margin) as isize + dc;
        r as usize * self.stride + c as usize
    }

    /// Patch dissimilarity between patches whose centers have linear indices `t` and `s`.
    #[inline]
    pub fn patch_dissim(&self, t: usize, s: usize, patch_half: usize) -> f64 {
        let h = patch_half as isize;
        let side = 2 * patch_half + 1;
        let mut sum = 0.0;
        for dr in -h..=h {
            let row_off = dr * self.stride as isize;
            let t0 = (t as isize + row_off - h) as usize;
            let s0 = (s as isize + row_off - h) as usize;
            let tv = &self.vectors[t0..t0 + side];
            let sv = &self.vectors[s0..s0 + side];
            let tn = &self.norms[t0..t0 + side];
            let sn = &self.norms[s0..s0 + side];
            for k in 0..side {
                sum += vector_dissim_with_norms(&tv[k], &sv[k], tn[k], sn[k]);
            }
        }
        sum / (side * side) as f64
    }
}

/// Guide image copied into a mirror-padded buffer.
#[derive(Debug, Clone)]
pub(crate) struct PaddedGuide {
    pub stride: usize,
    pub bands: usize,
    pub values: Vec<f64>,
}

impl PaddedGuide {
    pub fn new(guide: &GuideImage, margin: usize, border: BorderPolicy) -> Self {
        let ph = guide.height() + 2 * margin;
        let pw = guide.width() + 2 * margin;
        let m = margin as isize;
        let mut values = Vec::with_capacity(ph * pw * guide.bands());
        for r in 0..ph as isize {
            for c in 0..pw as isize {
                values.extend_from_slice(guide.pixel_padded(r - m, c - m, border));
            }
        }
        Self {
            stride: pw,
            bands: guide.bands(),
            values,
        }
    }

    #[inline]
    pub fn patch_dissim(&self, t: usize, s: usize, patch_half: usize) -> f64 {
        let h = patch_half as isize;
        let side = 2 * patch_half + 1;
        let b = self.bands;
        let mut sum = 0.0;
        for dr in -h..=h {
            let row_off = dr * self.stride as isize;
            let t0 = (t as isize + row_off - h) as usize * b;
            let s0 = (s as isize + row_off - h) as usize * b;
            let tv = &self.values[t0..t0 + side * b];
            let sv = &self.values[s0..s0 + side * b];
            for k in 0..side {
                sum += band_sq_diff(&tv[k * b..(k + 1) * b], &sv[k * b..(k + 1) * b]);
            }
        }
        sum / (side * side * b) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn tv(v: [(f64, f64); 3]) -> TargetVector {
        TargetVector::new(c(v[0].0, v[0].1), c(v[1].0, v[1].1), c(v[2].0, v[2].1))
    }

    #[test]
    fn vector_dissim_examples() {
        let a = TargetVector::new(c(1.0, 0.0), c(0.0, 1.0), c(2.0, 0.0));
        assert_eq!(vector_dissim(&a, &a), 0.0);
        let e1 = TargetVector::real(1.0, 0.0, 0.0);
        let e2 = TargetVector::real(0.0, 1.0, 0.0);
        assert_eq!(vector_dissim(&e1, &e2), 2.0);
        let two = TargetVector::real(2.0, 0.0, 0.0);
        assert!((vector_dissim(&e1, &two) - 0.4).abs() < 1e-15);
        assert_eq!(vector_dissim(&TargetVector::ZERO, &TargetVector::ZERO), 0.0);
        // opposite vectors reach the upper bound
        let neg = TargetVector::real(-1.0, 0.0, 0.0);
        assert_eq!(vector_dissim(&e1, &neg), 4.0);
    }

    #[test]
    fn optical_examples() {
        let g = GuideImage::new(1, 2, 1, vec![0.5, 0.1]).unwrap();
        let d = optical_patch_dissim(
            &g,
            Pixel::new(0, 0),
            Pixel::new(0, 1),
            Patch::new(0),
            BorderPolicy::Mirror,
        );
        assert!((d - 0.16).abs() < 1e-15);

        let g = GuideImage::new(1, 2, 2, vec![0.0, 0.0, 0.3, 0.4]).unwrap();
        let d = optical_patch_dissim(
            &g,
            Pixel::new(0, 0),
            Pixel::new(0, 1),
            Patch::new(0),
            BorderPolicy::Mirror,
        );
        assert!((d - 0.125).abs() < 1e-15);
    }

    #[test]
    fn polsar_patch_reduces_to_vector_dissim_for_single_offset() {
        let img = ScatteringImage::new(
            1,
            2,
            vec![
                tv([(1.0, 0.5), (0.2, 0.0), (0.0, -1.0)]),
                tv([(0.3, 0.0), (0.0, 0.9), (1.0, 1.0)]),
            ],
        )
        .unwrap();
        let d = polsar_patch_dissim(
            &img,
            Pixel::new(0, 0),
            Pixel::new(0, 1),
            Patch::new(0),
            BorderPolicy::Mirror,
        );
        assert_eq!(d, vector_dissim(img.get(0, 0), img.get(0, 1)));
    }

    #[test]
    fn polsar_patch_on_three_pixel_row() {
        // 1x3 patch (row of three) centered on the middle of a 1x3 image,
        // compared with itself shifted by mirror padding: t = 1, s = 0.
        let px = [
            tv([(1.0, 0.0), (0.0, 0.0), (0.0, 0.0)]),
            tv([(0.0, 0.0), (1.0, 0.0), (0.0, 0.0)]),
            tv([(2.0, 0.0), (0.0, 0.0), (1.0, 1.0)]),
        ];
        let img = ScatteringImage::new(1, 3, px.to_vec()).unwrap();
        // Independent scalar loop over the horizontal offsets only; the vertical
        // offsets of a 3x3 patch on a 1-row image mirror back onto row 0, so a
        // 1-row image with a 3x3 patch repeats each column term three times.
        let norm = |v: &TargetVector| v.norm_sqr();
        let scalar = |a: &TargetVector, b: &TargetVector| {
            let mut num = 0.0;
            for (x, y) in a.as_array().iter().zip(b.as_array().iter()) {
                let d = x - y;
                num += d.re * d.re + d.im * d.im;
            }
            num / (0.5 * (norm(a) + norm(b)))
        };
        // t = 1: columns 0,1,2. s = 0: columns mirror(-1)=1, 0, 1.
        let expected = (scalar(&px[0], &px[1]) + scalar(&px[1], &px[0]) + scalar(&px[2], &px[1])) / 3.0;
        let got = polsar_patch_dissim(
            &img,
            Pixel::new(0, 1),
            Pixel::new(0, 0),
            Patch::new(1),
            BorderPolicy::Mirror,
        );
        assert!((got - expected).abs() < 1e-14, "{got} vs {expected}");
        // hand values: 2, 2, |(2,-1,1+i)|^2=7 over 0.5*(1+6)=3.5 -> 2
        assert!((expected - 2.0).abs() < 1e-14);
    }

    #[test]
    fn weight_examples() {
        assert!((pgnlm_weight(1.0, 1.0, 0.85, 2.0) - (-2.0f64).exp()).abs() < 1e-12);
        assert!((pgnlm_weight(1.0, 1.0, 0.85, 2.0) - 0.1353).abs() < 1e-4);
        assert_eq!(pgnlm_weight(0.0, 0.0, 0.85, 2.0), 1.0);
        let w = pgnlm_weight(0.5, 1.0, 0.85, 2.0);
        assert!((w - (-2.0f64 * (0.425 + 0.15)).exp()).abs() < 1e-15);
        assert!((w - 0.3166).abs() < 1e-4);
        assert_eq!(pgnlm_weight(3.0, 7.0, 0.5, 0.0), 1.0);
    }

    #[test]
    fn weight_ignores_disabled_domain() {
        assert_eq!(pgnlm_weight(0.0, f64::INFINITY, 1.0, 2.0), 1.0);
        assert_eq!(pgnlm_weight(f64::INFINITY, 0.0, 0.0, 2.0), 1.0);
        assert_eq!(pgnlm_weight(0.0, f64::INFINITY, 0.85, 2.0), 0.0);
    }

    #[test]
    fn normalisation_with_zero_threshold() {
        assert_eq!(normalize_dissim(0.5, 0.25), 2.0);
        assert_eq!(normalize_dissim(0.0, 0.0), 0.0);
        assert_eq!(normalize_dissim(1e-30, 0.0), f64::INFINITY);
    }

    #[test]
    fn padded_matches_direct_evaluation() {
        let mut data = Vec::new();
        for i in 0..35 {
            let f = i as f64;
            data.push(tv([(f.sin(), f.cos()), (0.3 * f, -0.1), ((2.0 * f).sin(), 0.7)]));
        }
        let img = ScatteringImage::new(5, 7, data).unwrap();
        let guide = GuideImage::new(5, 7, 2, (0..70).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let pad = PaddedScattering::new(&img, 4, BorderPolicy::Mirror);
        let gpad = PaddedGuide::new(&guide, 4, BorderPolicy::Mirror);
        for (tr, tc, dr, dc) in [(0, 0, 2, 2), (4, 6, -2, -1), (2, 3, 0, 0), (1, 5, 1, -2)] {
            let t = Pixel::new(tr, tc);
            let s = Pixel::new((tr as isize + dr) as usize, (tc as isize + dc) as usize);
            let ti = pad.index(tr, tc, 0, 0);
            let si = pad.index(tr, tc, dr, dc);
            let direct = polsar_patch_dissim(&img, t, s, Patch::new(2), BorderPolicy::Mirror);
            assert_eq!(pad.patch_dissim(ti, si, 2), direct);
            let direct = optical_patch_dissim(&guide, t, s, Patch::new(2), BorderPolicy::Mirror);
            assert_eq!(gpad.patch_dissim(ti, si, 2), direct);
        }
    }

    fn arb_vector() -> impl Strategy<Value = TargetVector> {
        proptest::array::uniform6(-10.0f64..10.0)
            .prop_map(|a| TargetVector::new(c(a[0], a[1]), c(a[2], a[3]), c(a[4], a[5])))
    }

    fn arb_image(h: usize, w: usize) -> impl Strategy<Value = ScatteringImage> {
        proptest::collection::vec(arb_vector(), h * w)
            .prop_map(move |d| ScatteringImage::new(h, w, d).unwrap())
    }

    proptest! {
        #[test]
        fn vector_dissim_symmetric_and_bounded(a in arb_vector(), b in arb_vector()) {
            let d = vector_dissim(&a, &b);
            prop_assert_eq!(d, vector_dissim(&b, &a));
            prop_assert!((0.0..=4.0 + 1e-12).contains(&d));
        }

        #[test]
        fn patch_dissim_symmetric_bounded_scale_invariant(
            img in arb_image(6, 5),
            tr in 0usize..6, tc in 0usize..5, sr in 0usize..6, sc in 0usize..5,
            half in 0usize..3,
            zr in -3.0f64..3.0, zi in -3.0f64..3.0,
        ) {
            let (t, s) = (Pixel::new(tr, tc), Pixel::new(sr, sc));
            let p = Patch::new(half);
            let d = polsar_patch_dissim(&img, t, s, p, BorderPolicy::Mirror);
            prop_assert_eq!(d, polsar_patch_dissim(&img, s, t, p, BorderPolicy::Mirror));
            prop_assert!((0.0..=4.0 + 1e-12).contains(&d));
            let z = c(zr, zi);
            prop_assume!(z.norm() > 1e-3);
            let scaled = img.scaled(z).unwrap();
            let ds = polsar_patch_dissim(&scaled, t, s, p, BorderPolicy::Mirror);
            prop_assert!((ds - d).abs() <= 1e-10 * d.max(1e-300), "{} vs {}", ds, d);
        }

        #[test]
        fn optical_symmetric_and_scales_quadratically(
            vals in proptest::collection::vec(-5.0f64..5.0, 4 * 4 * 2),
            tr in 0usize..4, tc in 0usize..4, sr in 0usize..4, sc in 0usize..4,
            k in 0u32..4,
        ) {
            let g = GuideImage::new(4, 4, 2, vals).unwrap();
            let (t, s) = (Pixel::new(tr, tc), Pixel::new(sr, sc));
            let p = Patch::new(1);
            let d = optical_patch_dissim(&g, t, s, p, BorderPolicy::Mirror);
            prop_assert_eq!(d, optical_patch_dissim(&g, s, t, p, BorderPolicy::Mirror));
            // powers of two scale without rounding
            let cfac = f64::from(1u32 << k);
            let ds = optical_patch_dissim(&g.scaled(cfac).unwrap(), t, s, p, BorderPolicy::Mirror);
            prop_assert_eq!(ds, cfac * cfac * d);
            let ds = optical_patch_dissim(&g.scaled(1.7).unwrap(), t, s, p, BorderPolicy::Mirror);
            prop_assert!((ds - 1.7 * 1.7 * d).abs() <= 1e-12 * ds.max(1e-300));
        }

        #[test]
        fn weight_monotone_and_bounded(
            a in 0.0f64..5.0, b in 0.0f64..5.0, da in 1e-3f64..1.0,
            gamma in 0.01f64..0.99, lambda in 0.1f64..5.0,
        ) {
            let w = pgnlm_weight(a, b, gamma, lambda);
            prop_assert!(w > 0.0 && w <= 1.0);
            prop_assert!(pgnlm_weight(a + da, b, gamma, lambda) < w);
            prop_assert!(pgnlm_weight(a, b + da, gamma, lambda) < w);
        }
    }
}
