//! WebAssembly bindings for an interactive estimator demo.
//!
//! The page simulates a scene, then lets the user
//! 1. run the guided estimator with adjustable parameters,
//! 2. compare it with a boxcar filter of chosen size, and
//! 3. click a pixel to see its predictor weights in the search window.
//!
//! All logic lives in [`DemoState`], which is plain Rust and tested natively;
//! [`Demo`] is the thin JavaScript-facing wrapper.

use pgnlm::analysis::region;
use pgnlm::{
    boxcar, builtin_scene, calibrate, enl, estimate_image, generate_scene, matrix_error, CalibrationResult,
    CovarianceField, Estimator, HermitianMatrix3, PgnlmConfig, Pixel, Scene, SceneSpec,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest scene side accepted by the demo, to keep the page responsive.
pub const MAX_SIZE: usize = 128;

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Stats {
    pub t_pol: f64,
    pub t_opt: f64,
    pub mean_fraction_used: f64,
    pub enl_input: f64,
    pub enl_pgnlm: f64,
    pub enl_boxcar: f64,
    pub error_input: f64,
    pub error_pgnlm: f64,
    pub error_boxcar: f64,
}

/// A simulated scene plus the latest estimates.
pub struct DemoState {
    spec: SceneSpec,
    scene: Scene,
    pub cfg: PgnlmConfig,
    pub boxcar_half: usize,
    calib: Option<CalibrationResult>,
    pgnlm: Option<CovarianceField>,
    fraction_used: f64,
    boxcar: Option<CovarianceField>,
}

impl DemoState {
    pub fn new(scene: &str, size: usize, seed: u64) -> Result<Self, String> {
        if !(8..=MAX_SIZE).contains(&size) {
            return Err(format!("size must lie in [8, {MAX_SIZE}], got {size}"));
        }
        let spec = builtin_scene(scene, size, seed).map_err(|e| e.to_string())?;
        let scene = generate_scene(&spec).map_err(|e| e.to_string())?;
        let search_half = ((size - 1) / 2 - PgnlmConfig::default().patch_half).min(19);
        Ok(Self {
            spec,
            scene,
            cfg: PgnlmConfig {
                search_half,
                ..PgnlmConfig::default()
            },
            boxcar_half: 2,
            calib: None,
            pgnlm: None,
            fraction_used: f64::NAN,
            boxcar: None,
        })
    }

    pub fn size(&self) -> usize {
        self.spec.width
    }

    /// Calibrate and run the estimator with the current configuration.
    pub fn run_pgnlm(&mut self) -> Result<(), String> {
        let calib = calibrate(&self.scene.slc, &self.scene.guide, &self.cfg).map_err(|e| e.to_string())?;
        let guide = self.cfg.guided.then_some(&self.scene.guide);
        let (cov, diag) =
            estimate_image(&self.scene.slc, guide, &self.cfg, &calib).map_err(|e| e.to_string())?;
        self.fraction_used = diag.mean_fraction_used(self.cfg.window_len());
        self.pgnlm = Some(cov);
        self.calib = Some(calib);
        Ok(())
    }

    pub fn run_boxcar(&mut self) {
        self.boxcar = Some(boxcar(&self.scene.slc, self.boxcar_half));
    }

    fn field(&self, layer: &str) -> Result<CovarianceField, String> {
        match layer {
            "input" => Ok(CovarianceField::single_look(&self.scene.slc)),
            "pgnlm" => self.pgnlm.clone().ok_or_else(|| "run the estimator first".into()),
            "boxcar" => self.boxcar.clone().ok_or_else(|| "run the boxcar first".into()),
            other => Err(format!("unknown layer '{other}'")),
        }
    }

    /// RGBA bytes of a layer: Pauli-style composite for covariance layers
    /// (`input`, `pgnlm`, `boxcar`), first three bands for `guide`, class map for `truth`.
    pub fn layer_rgba(&self, layer: &str) -> Result<Vec<u8>, String> {
        match layer {
            "guide" => {
                let g = &self.scene.guide;
                let bands = g.bands();
                let pixels: Vec<[f64; 3]> = g
                    .data()
                    .chunks_exact(bands)
                    .map(|p| [p[0], p[1.min(bands - 1)], p[2.min(bands - 1)]])
                    .collect();
                Ok(to_rgba(&pixels, &robust_scale(&pixels)))
            }
            "truth" => {
                let palette = [[46, 139, 87], [205, 133, 63], [70, 130, 180], [220, 20, 60]];
                Ok(self
                    .spec
                    .class_map
                    .iter()
                    .flat_map(|&k| {
                        let [r, g, b] = palette[k as usize % palette.len()];
                        [r, g, b, 255]
                    })
                    .collect())
            }
            _ => {
                let field = self.field(layer)?;
                let composite: Vec<[f64; 3]> = field.data().iter().map(pauli).collect();
                // scale by the input so layers are comparable
                let reference: Vec<[f64; 3]> = CovarianceField::single_look(&self.scene.slc)
                    .data()
                    .iter()
                    .map(pauli)
                    .collect();
                Ok(to_rgba(&composite, &robust_scale(&reference)))
            }
        }
    }

    /// Weights of every candidate in the search window of `(row, col)` as a
    /// square RGBA tile; unselected candidates are dark blue.
    pub fn weight_map(&self, row: usize, col: usize) -> Result<Vec<u8>, String> {
        let calib = self.calib.as_ref().ok_or("run the estimator first")?;
        if row >= self.spec.height || col >= self.spec.width {
            return Err(format!("pixel ({row}, {col}) is outside the image"));
        }
        let guide = self.cfg.guided.then_some(&self.scene.guide);
        let est = Estimator::new(&self.scene.slc, guide, &self.cfg, calib).map_err(|e| e.to_string())?;
        let (chosen, weights) = est.predictors(Pixel::new(row, col)).map_err(|e| e.to_string())?;
        let mut w = vec![f64::NAN; self.cfg.window_len()];
        for (&k, &wk) in chosen.iter().zip(&weights) {
            w[k] = wk;
        }
        Ok(w.iter()
            .flat_map(|&v| if v.is_nan() { [10, 20, 60, 255] } else { heat(v) })
            .collect())
    }

    pub fn stats(&self) -> Result<Stats, String> {
        let calib = self.calib.as_ref().ok_or("run the estimator first")?;
        let input = CovarianceField::single_look(&self.scene.slc);
        let pg = self.pgnlm.as_ref().ok_or("run the estimator first")?;
        let bx = self.boxcar.as_ref().ok_or("run the boxcar first")?;
        let truth = self.spec.truth();
        let err = |f: &CovarianceField| -> Result<f64, String> {
            Ok(matrix_error(f, &truth, &self.spec.class_map, None)
                .map_err(|e| e.to_string())?
                .overall)
        };
        Ok(Stats {
            t_pol: calib.t_pol,
            t_opt: calib.t_opt,
            mean_fraction_used: self.fraction_used,
            enl_input: self.c11_enl(&input)?,
            enl_pgnlm: self.c11_enl(pg)?,
            enl_boxcar: self.c11_enl(bx)?,
            error_input: err(&input)?,
            error_pgnlm: err(pg)?,
            error_boxcar: err(bx)?,
        })
    }

    /// ENL of C11 over the largest single-class square in the top-left corner.
    fn c11_enl(&self, f: &CovarianceField) -> Result<f64, String> {
        let w = f.width();
        let first = self.spec.class_map[0];
        let mut side = 1;
        while side < w.min(f.height())
            && (0..=side).all(|i| {
                self.spec.class_map[side * w + i] == first && self.spec.class_map[i * w + side] == first
            })
        {
            side += 1;
        }
        let c11: Vec<f64> = f.data().iter().map(|c| c.c11).collect();
        let values = region(&c11, w, 0, 0, side, side).map_err(|e| e.to_string())?;
        enl(&values).map_err(|e| e.to_string())
    }
}

/// `[|HH - VV|^2 / 2, C22, |HH + VV|^2 / 2]` from a lexicographic covariance.
fn pauli(c: &HermitianMatrix3) -> [f64; 3] {
    let cross = c.c13.re;
    [
        0.5 * (c.c11 + c.c33 - 2.0 * cross).max(0.0),
        c.c22,
        0.5 * (c.c11 + c.c33 + 2.0 * cross).max(0.0),
    ]
}

/// Per-channel scale: three times the channel mean.
fn robust_scale(pixels: &[[f64; 3]]) -> [f64; 3] {
    let mut s = [0.0; 3];
    for p in pixels {
        for (si, pi) in s.iter_mut().zip(p) {
            *si += pi;
        }
    }
    s.map(|v| {
        let m = 3.0 * v / pixels.len().max(1) as f64;
        if m > 0.0 {
            m
        } else {
            1.0
        }
    })
}

fn to_rgba(pixels: &[[f64; 3]], scale: &[f64; 3]) -> Vec<u8> {
    pixels
        .iter()
        .flat_map(|p| {
            let ch = |i: usize| ((p[i] / scale[i]).clamp(0.0, 1.0).sqrt() * 255.0).round() as u8;
            [ch(0), ch(1), ch(2), 255]
        })
        .collect()
}

/// Black-red-yellow-white ramp on `[0, 1]`.
fn heat(v: f64) -> [u8; 4] {
    let t = v.clamp(0.0, 1.0) * 3.0;
    let c = |x: f64| (x.clamp(0.0, 1.0) * 255.0).round() as u8;
    [c(t), c(t - 1.0), c(t - 2.0), 255]
}

/// JavaScript-facing wrapper around [`DemoState`].
#[wasm_bindgen]
pub struct Demo {
    state: DemoState,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(scene: &str, size: usize, seed: u64) -> Result<Demo, JsError> {
        Ok(Demo {
            state: DemoState::new(scene, size, seed).map_err(|e| JsError::new(&e))?,
        })
    }

    pub fn size(&self) -> usize {
        self.state.size()
    }

    pub fn search_side(&self) -> usize {
        2 * self.state.cfg.search_half + 1
    }

    #[allow(clippy::too_many_arguments)]
    pub fn set_params(
        &mut self,
        gamma: f64,
        lambda: f64,
        s_max: usize,
        p_pol: f64,
        p_opt: f64,
        guided: bool,
    ) {
        let cfg = &mut self.state.cfg;
        cfg.gamma = gamma;
        cfg.lambda = lambda;
        cfg.s_max = s_max.max(1);
        cfg.p_pol = p_pol;
        cfg.p_opt = p_opt;
        cfg.guided = guided;
    }

    pub fn set_boxcar_half(&mut self, half: usize) {
        self.state.boxcar_half = half;
    }

    pub fn run_pgnlm(&mut self) -> Result<(), JsError> {
        self.state.run_pgnlm().map_err(|e| JsError::new(&e))
    }

    pub fn run_boxcar(&mut self) {
        self.state.run_boxcar();
    }

    pub fn layer_rgba(&self, layer: &str) -> Result<Vec<u8>, JsError> {
        self.state.layer_rgba(layer).map_err(|e| JsError::new(&e))
    }

    pub fn weight_map(&self, row: usize, col: usize) -> Result<Vec<u8>, JsError> {
        self.state.weight_map(row, col).map_err(|e| JsError::new(&e))
    }

    /// Summary numbers as a JSON string.
    pub fn stats_json(&self) -> Result<String, JsError> {
        let s = self.state.stats().map_err(|e| JsError::new(&e))?;
        serde_json::to_string(&s).map_err(|e| JsError::new(&e.to_string()))
    }
}
