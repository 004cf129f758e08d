//! Synthetic paired SLC / guide scenes with known covariance ground truth.
//!
//! Target vectors are zero-mean circular complex Gaussian, `s = L z`, where
//! `L L^H = Sigma` and `z` has i.i.d. entries whose real and imaginary parts
//! are `N(0, 1/2)`.
//!
//! Random streams: every stream is ChaCha8 keyed with
//! `ChaCha8Rng::seed_from_u64(seed)`. Row `r` of the SLC draws from stream
//! `2r`, row `r` of the guide noise from stream `2r + 1`, and scene layout
//! choices (the mosaic class assignment) from stream `u64::MAX`. Output is
//! therefore independent of how rows are scheduled across threads.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::hermitian::HermitianMatrix3;
use crate::types::{GuideImage, LabelRaster, Pixel, ScatteringImage, TargetVector};

pub const SCENE_NAMES: [&str; 5] = [
    "homogeneous",
    "edge2",
    "checkerboard",
    "point_target",
    "canopy_mosaic",
];

const LAYOUT_STREAM: u64 = u64::MAX;

/// Covariance and guide signature of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassModel {
    pub sigma: HermitianMatrix3,
    pub guide_mean: Vec<f64>,
}

/// A deterministic pixel overriding the sampled value.
#[derive(Debug, Clone, PartialEq)]
pub struct PointTarget {
    pub pixel: Pixel,
    pub vector: TargetVector,
    /// Guide value at the target; `None` keeps the class mean plus noise.
    pub guide: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub name: String,
    pub height: usize,
    pub width: usize,
    pub class_map: Vec<u16>,
    pub classes: Vec<ClassModel>,
    pub guide_noise: f64,
    pub seed: u64,
    pub point_targets: Vec<PointTarget>,
    /// Optional grouping (e.g. mosaic cell id) for grouped cross-validation.
    pub groups: Option<Vec<u16>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub slc: ScatteringImage,
    pub guide: GuideImage,
    pub class_map: LabelRaster,
    pub groups: Option<LabelRaster>,
}

/// Draws `s = L z` for a fixed positive definite covariance.
#[derive(Debug, Clone)]
pub struct ComplexGaussian {
    l: [[Complex64; 3]; 3],
}

impl ComplexGaussian {
    pub fn new(sigma: &HermitianMatrix3) -> Result<Self> {
        Ok(Self { l: sigma.cholesky()? })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> TargetVector {
        let mut z = [Complex64::new(0.0, 0.0); 3];
        for zi in &mut z {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *zi = Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2;
        }
        let l = &self.l;
        TargetVector::new(
            l[0][0] * z[0],
            l[1][0] * z[0] + l[1][1] * z[1],
            l[2][0] * z[0] + l[2][1] * z[1] + l[2][2] * z[2],
        )
    }
}

/// One circular complex Gaussian target vector with covariance `sigma`.
pub fn sample_target_vector<R: Rng + ?Sized>(sigma: &HermitianMatrix3, rng: &mut R) -> Result<TargetVector> {
    Ok(ComplexGaussian::new(sigma)?.sample(rng))
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScene(m));
        if self.height == 0 || self.width == 0 {
            return bad(format!(
                "dimensions must be positive, got {}x{}",
                self.height, self.width
            ));
        }
        if self.class_map.len() != self.height * self.width {
            return bad(format!(
                "class map has {} entries for {}x{}",
                self.class_map.len(),
                self.height,
                self.width
            ));
        }
        if self.classes.is_empty() {
            return bad("at least one class is required".into());
        }
        let bands = self.classes[0].guide_mean.len();
        if bands == 0 {
            return bad("guide needs at least one band".into());
        }
        for (k, c) in self.classes.iter().enumerate() {
            if c.guide_mean.len() != bands {
                return bad(format!(
                    "class {k} has {} guide bands, expected {bands}",
                    c.guide_mean.len()
                ));
            }
            let ev = c.sigma.min_eigenvalue();
            if !(ev > 0.0) {
                return bad(format!(
                    "class {k} covariance is not positive definite (eigenvalue {ev:e})"
                ));
            }
        }
        if let Some(&id) = self
            .class_map
            .iter()
            .find(|&&id| id as usize >= self.classes.len())
        {
            return bad(format!("class map references undefined class {id}"));
        }
        if !(self.guide_noise >= 0.0 && self.guide_noise.is_finite()) {
            return bad(format!(
                "guide noise must be finite and >= 0, got {}",
                self.guide_noise
            ));
        }
        for p in &self.point_targets {
            if p.pixel.row >= self.height || p.pixel.col >= self.width {
                return bad(format!("point target {:?} outside the scene", p.pixel));
            }
            if let Some(g) = &p.guide {
                if g.len() != bands {
                    return bad("point target guide value has the wrong band count".into());
                }
            }
        }
        if let Some(g) = &self.groups {
            if g.len() != self.class_map.len() {
                return bad("group map size differs from class map".into());
            }
        }
        Ok(())
    }

    pub fn bands(&self) -> usize {
        self.classes[0].guide_mean.len()
    }

    /// Class covariance for every pixel.
    pub fn truth(&self) -> Vec<HermitianMatrix3> {
        self.classes.iter().map(|c| c.sigma).collect()
    }

    /// Plain-text sidecar describing how the scene was generated.
    pub fn metadata_string(&self) -> String {
        let mut s = String::new();
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
        let _ = writeln!(s, "scene={}", self.name);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "height={}", self.height);
        let _ = writeln!(s, "width={}", self.width);
        let _ = writeln!(s, "bands={}", self.bands());
        let _ = writeln!(s, "guide_noise={:?}", self.guide_noise);
        let _ = writeln!(
            s,
            "rng=chacha8 seed_from_u64; slc row r -> stream 2r; guide row r -> stream 2r+1"
        );
        let _ = writeln!(s, "classes={}", self.classes.len());
        for (k, c) in self.classes.iter().enumerate() {
            let _ = writeln!(s, "class.{k}.sigma={}", join(&c.sigma.to_reals()));
            let _ = writeln!(s, "class.{k}.guide_mean={}", join(&c.guide_mean));
        }
        let _ = writeln!(s, "point_targets={}", self.point_targets.len());
        for (k, p) in self.point_targets.iter().enumerate() {
            let v = p.vector;
            let _ = writeln!(
                s,
                "point.{k}={} {} {}",
                p.pixel.row,
                p.pixel.col,
                join(&[v.hh.re, v.hh.im, v.hv.re, v.hv.im, v.vv.re, v.vv.im])
            );
        }
        s
    }
}

/// Per-class covariance matrices recovered from a metadata sidecar.
pub fn read_class_truth(path: &Path) -> Result<Vec<HermitianMatrix3>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_class_truth(&text, path)
}

pub fn parse_class_truth(text: &str, origin: &Path) -> Result<Vec<HermitianMatrix3>> {
    let err = |reason: String| Error::Parse {
        path: origin.to_path_buf(),
        reason,
    };
    let mut n_classes = None;
    let mut sigmas: Vec<(usize, HermitianMatrix3)> = Vec::new();
    for line in text.lines() {
        let Some((k, v)) = line.split_once('=') else {
            continue;
        };
        if k == "classes" {
            n_classes = Some(
                v.trim()
                    .parse::<usize>()
                    .map_err(|e| err(format!("classes: {e}")))?,
            );
        } else if let Some(rest) = k.strip_prefix("class.") {
            let Some(idx) = rest.strip_suffix(".sigma") else {
                continue;
            };
            let idx: usize = idx.parse().map_err(|e| err(format!("{k}: {e}")))?;
            let vals: Vec<f64> = v
                .split_whitespace()
                .map(str::parse::<f64>)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| err(format!("{k}: {e}")))?;
            let arr: [f64; 9] = vals
                .try_into()
                .map_err(|_| err(format!("{k}: expected 9 values")))?;
            sigmas.push((idx, HermitianMatrix3::from_reals(arr)));
        }
    }
    let n = n_classes.ok_or_else(|| err("missing 'classes' key".into()))?;
    let mut out = vec![None; n];
    for (i, m) in sigmas {
        if i >= n {
            return Err(err(format!("class index {i} >= classes={n}")));
        }
        out[i] = Some(m);
    }
    out.into_iter()
        .enumerate()
        .map(|(i, m)| m.ok_or_else(|| err(format!("missing class.{i}.sigma"))))
        .collect()
}

/// Samples the SLC and guide rasters for `spec`.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let (h, w, bands) = (spec.height, spec.width, spec.bands());
    let samplers = spec
        .classes
        .iter()
        .map(|c| ComplexGaussian::new(&c.sigma))
        .collect::<Result<Vec<_>>>()?;

    let row = |r: usize| -> (Vec<TargetVector>, Vec<f64>) {
        let mut slc_rng = stream_rng(spec.seed, 2 * r as u64);
        let mut guide_rng = stream_rng(spec.seed, 2 * r as u64 + 1);
        let mut vectors = Vec::with_capacity(w);
        let mut guide = Vec::with_capacity(w * bands);
        for c in 0..w {
            let class = spec.class_map[r * w + c] as usize;
            vectors.push(samplers[class].sample(&mut slc_rng));
            for &mu in &spec.classes[class].guide_mean {
                let n: f64 = guide_rng.sample(StandardNormal);
                guide.push(mu + spec.guide_noise * n);
            }
        }
        (vectors, guide)
    };

    #[cfg(feature = "parallel")]
    let rows: Vec<(Vec<TargetVector>, Vec<f64>)> = {
        use rayon::prelude::*;
        (0..h).into_par_iter().map(row).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<(Vec<TargetVector>, Vec<f64>)> = (0..h).map(row).collect();

    let mut slc = Vec::with_capacity(h * w);
    let mut guide = Vec::with_capacity(h * w * bands);
    for (v, g) in rows {
        slc.extend(v);
        guide.extend(g);
    }
    for p in &spec.point_targets {
        let i = p.pixel.row * w + p.pixel.col;
        slc[i] = p.vector;
        if let Some(g) = &p.guide {
            guide[i * bands..(i + 1) * bands].copy_from_slice(g);
        }
    }
    Ok(Scene {
        slc: ScatteringImage::new(h, w, slc)?,
        guide: GuideImage::new(h, w, bands, guide)?,
        class_map: LabelRaster::new(h, w, spec.class_map.clone())?,
        groups: spec
            .groups
            .as_ref()
            .map(|g| LabelRaster::new(h, w, g.clone()))
            .transpose()?,
    })
}

/// Reference class: co-pol dominated with moderate HH/VV correlation.
pub fn homogeneous_sigma() -> HermitianMatrix3 {
    HermitianMatrix3 {
        c13: Complex64::new(0.5, 0.0),
        ..HermitianMatrix3::diag(1.0, 0.25, 1.0)
    }
}

/// Brighter second class with a different HH/VV phase, used by the edge scenes.
pub fn bright_sigma() -> HermitianMatrix3 {
    HermitianMatrix3 {
        c13: Complex64::new(-0.8, 0.6),
        ..HermitianMatrix3::diag(4.0, 0.5, 2.0)
    }
}

/// Live canopy: strong cross-pol (volume) share, weak HH/VV correlation.
pub fn live_canopy_sigma() -> HermitianMatrix3 {
    HermitianMatrix3 {
        c13: Complex64::new(0.25, 0.0),
        ..HermitianMatrix3::diag(1.0, 0.40, 0.9)
    }
}

/// Dead / defoliated canopy: less volume scattering, stronger HH/VV correlation.
pub fn dead_canopy_sigma() -> HermitianMatrix3 {
    HermitianMatrix3 {
        c13: Complex64::from_polar(0.5, 0.35),
        ..HermitianMatrix3::diag(1.0, 0.22, 0.8)
    }
}

const GUIDE_A: [f64; 3] = [0.30, 0.40, 0.20];
const GUIDE_B: [f64; 3] = [0.10, 0.25, 0.35];
const GUIDE_LIVE: [f64; 3] = [0.05, 0.08, 0.35];
const GUIDE_DEAD: [f64; 3] = [0.07, 0.10, 0.25];
const GUIDE_NOISE: f64 = 0.02;

/// Side of a mosaic cell in pixels.
pub const MOSAIC_CELL: usize = 8;

/// Named, parameterised test scenes of `size x size` pixels.
///
/// * `homogeneous`: one class, [`homogeneous_sigma`].
/// * `edge2`: [`homogeneous_sigma`] left of column `size / 2`, [`bright_sigma`] from it on.
/// * `checkerboard`: the two edge classes in cells of `max(size / 8, 2)` pixels.
/// * `point_target`: homogeneous background with one deterministic pixel of
///   100x the background power at the center; the guide shows it as a bright
///   reflector.
/// * `canopy_mosaic`: [`MOSAIC_CELL`]-pixel cells, each randomly live or dead
///   canopy; groups are cell ids.
pub fn builtin_scene(name: &str, size: usize, seed: u64) -> Result<SceneSpec> {
    if size < 2 {
        return Err(Error::InvalidScene(format!(
            "size must be at least 2, got {size}"
        )));
    }
    let n = size * size;
    let two_classes = || {
        vec![
            ClassModel {
                sigma: homogeneous_sigma(),
                guide_mean: GUIDE_A.to_vec(),
            },
            ClassModel {
                sigma: bright_sigma(),
                guide_mean: GUIDE_B.to_vec(),
            },
        ]
    };
    let mut spec = SceneSpec {
        name: name.to_string(),
        height: size,
        width: size,
        class_map: vec![0; n],
        classes: vec![ClassModel {
            sigma: homogeneous_sigma(),
            guide_mean: GUIDE_A.to_vec(),
        }],
        guide_noise: GUIDE_NOISE,
        seed,
        point_targets: Vec::new(),
        groups: None,
    };
    match name {
        "homogeneous" => {}
        "edge2" => {
            spec.classes = two_classes();
            for (i, c) in spec.class_map.iter_mut().enumerate() {
                *c = u16::from(i % size >= size / 2);
            }
        }
        "checkerboard" => {
            spec.classes = two_classes();
            let cell = (size / 8).max(2);
            for (i, c) in spec.class_map.iter_mut().enumerate() {
                let (r, col) = (i / size, i % size);
                *c = (((r / cell) + (col / cell)) % 2) as u16;
            }
        }
        "point_target" => {
            let amp = 10.0; // 100x power
            let s = homogeneous_sigma();
            spec.point_targets.push(PointTarget {
                pixel: Pixel::new(size / 2, size / 2),
                vector: TargetVector::real(amp * s.c11.sqrt(), amp * s.c22.sqrt(), amp * s.c33.sqrt()),
                guide: Some(vec![0.8; GUIDE_A.len()]),
            });
        }
        "canopy_mosaic" => {
            spec.classes = vec![
                ClassModel {
                    sigma: live_canopy_sigma(),
                    guide_mean: GUIDE_LIVE.to_vec(),
                },
                ClassModel {
                    sigma: dead_canopy_sigma(),
                    guide_mean: GUIDE_DEAD.to_vec(),
                },
            ];
            let cells_per_side = size.div_ceil(MOSAIC_CELL);
            let mut rng = stream_rng(seed, LAYOUT_STREAM);
            let cell_class: Vec<u16> = (0..cells_per_side * cells_per_side)
                .map(|_| u16::from(rng.random_bool(0.5)))
                .collect();
            let mut groups = vec![0u16; n];
            for i in 0..n {
                let (r, c) = (i / size, i % size);
                let cell = (r / MOSAIC_CELL) * cells_per_side + c / MOSAIC_CELL;
                spec.class_map[i] = cell_class[cell];
                groups[i] = cell as u16;
            }
            spec.groups = Some(groups);
        }
        other => return Err(Error::UnknownScene(other.to_string())),
    }
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_cov(samples: &[TargetVector]) -> HermitianMatrix3 {
        let mut acc = HermitianMatrix3::ZERO;
        for s in samples {
            acc.add_weighted_outer(s, 1.0);
        }
        acc.div_scalar(samples.len() as f64)
    }

    #[test]
    fn identity_covariance_converges() {
        let g = ComplexGaussian::new(&HermitianMatrix3::identity()).unwrap();
        let mut rng = stream_rng(11, 0);
        let samples: Vec<_> = (0..100_000).map(|_| g.sample(&mut rng)).collect();
        let c = sample_cov(&samples);
        assert!(c.sub(&HermitianMatrix3::identity()).frobenius_norm() < 0.02);
        let mean = samples.iter().fold([Complex64::new(0.0, 0.0); 3], |mut m, s| {
            for (mi, si) in m.iter_mut().zip(s.as_array()) {
                *mi += si / samples.len() as f64;
            }
            m
        });
        assert!(mean.iter().all(|m| m.norm() < 0.02), "{mean:?}");
    }

    #[test]
    fn diagonal_power_converges() {
        let sigma = HermitianMatrix3::diag(4.0, 1.0, 1.0);
        let mut rng = stream_rng(12, 0);
        let g = ComplexGaussian::new(&sigma).unwrap();
        let p: f64 = (0..100_000)
            .map(|_| g.sample(&mut rng).hh.norm_sqr())
            .sum::<f64>()
            / 1e5;
        assert!((p - 4.0).abs() < 0.12, "{p}");
    }

    #[test]
    fn real_and_imaginary_parts_have_half_variance() {
        let g = ComplexGaussian::new(&HermitianMatrix3::identity()).unwrap();
        let mut rng = stream_rng(13, 0);
        let n = 50_000;
        let (mut vr, mut vi) = (0.0, 0.0);
        for _ in 0..n {
            let s = g.sample(&mut rng);
            vr += s.hv.re * s.hv.re;
            vi += s.hv.im * s.hv.im;
        }
        assert!((vr / n as f64 - 0.5).abs() < 0.02);
        assert!((vi / n as f64 - 0.5).abs() < 0.02);
    }

    #[test]
    fn non_pd_sigma_rejected_with_eigenvalue() {
        let sigma = HermitianMatrix3 {
            c12: Complex64::new(2.0, 0.0),
            ..HermitianMatrix3::identity()
        };
        let mut rng = stream_rng(1, 0);
        match sample_target_vector(&sigma, &mut rng) {
            Err(Error::NotPositiveDefinite { eigenvalue }) => assert!((eigenvalue + 1.0).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn builtin_matrices_are_positive_definite() {
        for s in [
            homogeneous_sigma(),
            bright_sigma(),
            live_canopy_sigma(),
            dead_canopy_sigma(),
        ] {
            assert!(s.min_eigenvalue() > 0.0);
        }
        // eigenvalues of the reference class: 0.25, 0.5, 1.5
        let ev = homogeneous_sigma().eigenvalues();
        for (a, b) in ev.iter().zip([0.25, 0.5, 1.5]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn scene_geometry() {
        let h = builtin_scene("homogeneous", 64, 0).unwrap();
        assert_eq!(h.classes.len(), 1);
        assert_eq!(h.classes[0].sigma, homogeneous_sigma());

        let e = builtin_scene("edge2", 64, 0).unwrap();
        for r in 0..64 {
            for c in 0..64 {
                assert_eq!(e.class_map[r * 64 + c], u16::from(c >= 32));
            }
        }

        let p = builtin_scene("point_target", 64, 0).unwrap();
        let s = generate_scene(&p).unwrap();
        let bg = homogeneous_sigma();
        assert_eq!(s.slc.get(32, 32).hh.norm_sqr(), 100.0 * bg.c11);
        assert!((s.slc.get(32, 32).norm_sqr() - 100.0 * bg.trace()).abs() < 1e-9);

        let m = builtin_scene("canopy_mosaic", 64, 5).unwrap();
        let g = m.groups.as_ref().unwrap();
        assert_eq!(*g.iter().max().unwrap(), 63);
        // class constant within a cell
        for i in 0..64 * 64 {
            let (r, c) = (i / 64, i % 64);
            let anchor = (r / MOSAIC_CELL * MOSAIC_CELL) * 64 + c / MOSAIC_CELL * MOSAIC_CELL;
            assert_eq!(m.class_map[i], m.class_map[anchor]);
        }
        assert!(m.class_map.contains(&0) && m.class_map.contains(&1));

        assert!(matches!(
            builtin_scene("forest", 64, 0),
            Err(Error::UnknownScene(_))
        ));
    }

    #[test]
    fn zero_guide_noise_gives_constant_guide() {
        let mut spec = builtin_scene("homogeneous", 32, 3).unwrap();
        spec.guide_noise = 0.0;
        let s = generate_scene(&spec).unwrap();
        for r in 0..32 {
            for c in 0..32 {
                assert_eq!(s.guide.pixel(r, c), &GUIDE_A);
            }
        }
    }

    #[test]
    fn same_seed_same_scene() {
        let spec = builtin_scene("checkerboard", 40, 99).unwrap();
        assert_eq!(generate_scene(&spec).unwrap(), generate_scene(&spec).unwrap());
        let other = builtin_scene("checkerboard", 40, 100).unwrap();
        assert_ne!(
            generate_scene(&spec).unwrap().slc,
            generate_scene(&other).unwrap().slc
        );
    }

    #[test]
    fn per_class_covariance_matches() {
        let spec = builtin_scene("edge2", 200, 17).unwrap();
        let s = generate_scene(&spec).unwrap();
        for k in 0..2u16 {
            let samples: Vec<_> = s
                .slc
                .data()
                .iter()
                .zip(s.class_map.data())
                .filter(|(_, &c)| c == k)
                .map(|(v, _)| *v)
                .collect();
            assert!(samples.len() >= 10_000);
            let sigma = spec.classes[k as usize].sigma;
            let err = sample_cov(&samples).sub(&sigma).frobenius_norm() / sigma.frobenius_norm();
            assert!(err < 0.05, "class {k}: {err}");
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = builtin_scene("homogeneous", 8, 0).unwrap();
        spec.class_map[3] = 4;
        assert!(matches!(generate_scene(&spec), Err(Error::InvalidScene(_))));
        let mut spec = builtin_scene("homogeneous", 8, 0).unwrap();
        spec.classes[0].sigma = HermitianMatrix3::diag(1.0, 0.0, 1.0);
        assert!(matches!(generate_scene(&spec), Err(Error::InvalidScene(_))));
    }

    #[test]
    fn metadata_round_trip_truth() {
        let spec = builtin_scene("canopy_mosaic", 16, 4).unwrap();
        let text = spec.metadata_string();
        assert!(text.contains("seed=4\n"));
        let truth = parse_class_truth(&text, Path::new("meta")).unwrap();
        assert_eq!(truth, spec.truth());
    }
}
