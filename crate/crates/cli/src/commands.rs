use std::fs;
use std::path::{Path, PathBuf};

use pgnlm::analysis::{region, FEATURE_NAMES};
use pgnlm::calibration::{percentile, reference_dissimilarities, SamplingMode};
use pgnlm::container::{read_container, write_container, Raster};
use pgnlm::simulator::read_class_truth;
use pgnlm::{
    builtin_scene, crossval_classify, enl, estimate_image, extract_features, generate_scene, matrix_error,
    CalibrationResult, Classifier, CovarianceField, CvConfig, GuideImage, LabelRaster, LabeledSet,
    PgnlmConfig, ScatteringImage,
};
use serde::Serialize;

use crate::{
    BoxcarArgs, CalibrateArgs, ClassifyArgs, CompareArgs, EstimateArgs, FeaturesArgs, MetricsArgs,
    SimulateArgs,
};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] pgnlm::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Mismatch(String),
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.category(),
            CliError::Usage(_) => "usage",
            CliError::Mismatch(_) => "mismatch",
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self.category() {
            "usage" => 2,
            "io" => 3,
            "format" => 4,
            "geometry" => 5,
            "config" => 6,
            "data" => 7,
            "classify" => 8,
            "mismatch" => 9,
            _ => 1,
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn read_slc(path: &Path) -> CliResult<ScatteringImage> {
    Ok(read_container(path)?.into_slc()?)
}

fn read_guide(path: &Path) -> CliResult<GuideImage> {
    Ok(read_container(path)?.into_guide()?)
}

fn read_labels(path: &Path) -> CliResult<LabelRaster> {
    Ok(read_container(path)?.into_labels()?)
}

/// Covariance raster, or the single-look covariance of an SLC raster.
fn read_covariance(path: &Path) -> CliResult<CovarianceField> {
    Ok(match read_container(path)? {
        Raster::Slc(img) => CovarianceField::single_look(&img),
        other => other.into_covariance()?,
    })
}

fn write_text(path: &Path, text: &str) -> CliResult {
    fs::write(path, text).map_err(|e| {
        pgnlm::Error::Io {
            path: path.to_path_buf(),
            source: e,
        }
        .into()
    })
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report types serialise") + "\n"
}

pub fn simulate(a: &SimulateArgs) -> CliResult {
    let spec = builtin_scene(&a.scene, a.size, a.seed)?;
    let scene = generate_scene(&spec)?;
    write_container(&Raster::Slc(scene.slc), &a.out_slc)?;
    write_container(&Raster::Guide(scene.guide), &a.out_guide)?;
    write_container(&Raster::Labels(scene.class_map), &a.out_labels)?;
    if let Some(p) = &a.out_groups {
        let groups = scene.groups.ok_or_else(|| {
            CliError::Usage(format!("scene '{}' has no groups; drop --out-groups", a.scene))
        })?;
        write_container(&Raster::Labels(groups), p)?;
    }
    if let Some(p) = &a.out_meta {
        write_text(p, &spec.metadata_string())?;
    }
    println!(
        "simulated {} {}x{} seed={}",
        a.scene, spec.height, spec.width, a.seed
    );
    Ok(())
}

pub fn calibrate(a: &CalibrateArgs) -> CliResult {
    let slc = read_slc(&a.slc)?;
    let guide = read_guide(&a.guide)?;
    let cfg = PgnlmConfig {
        search_half: a.search,
        patch_half: a.patch,
        p_pol: a.p_pol,
        p_opt: a.p_opt,
        ..PgnlmConfig::default()
    };
    let calib = pgnlm::calibrate(&slc, &guide, &cfg)?;
    calib.save(&a.out)?;
    println!(
        "calibrated t_pol={:?} t_opt={:?} from {} samples",
        calib.t_pol, calib.t_opt, calib.n_samples
    );
    Ok(())
}

/// Thresholds at new percentiles, recomputed from the input rasters.
fn recalibrate(
    slc: &ScatteringImage,
    guide: Option<&GuideImage>,
    base: &CalibrationResult,
    p_pol: f64,
    p_opt: f64,
) -> CliResult<CalibrationResult> {
    if !(0.0..=100.0).contains(&p_pol) || !(0.0..=100.0).contains(&p_opt) {
        return Err(pgnlm::Error::InvalidConfig(format!(
            "percentiles must lie in [0, 100], got p_pol={p_pol} p_opt={p_opt}"
        ))
        .into());
    }
    let refs = reference_dissimilarities(
        slc,
        guide,
        base.search_half,
        base.patch_half,
        SamplingMode::Diagonal,
    )?;
    let t_opt = if refs.d_opt.is_empty() {
        base.t_opt
    } else {
        percentile(&refs.d_opt, p_opt)
    };
    Ok(CalibrationResult {
        t_pol: percentile(&refs.d_pol, p_pol),
        t_opt,
        p_pol,
        p_opt,
        n_samples: refs.d_pol.len(),
        ..base.clone()
    })
}

pub fn estimate(a: &EstimateArgs) -> CliResult {
    let slc = read_slc(&a.slc)?;
    let guide = match (&a.guide, a.unguided) {
        (Some(p), _) => Some(read_guide(p)?),
        (None, true) => None,
        (None, false) => {
            return Err(CliError::Usage(
                "guided estimation needs --guide (or pass --unguided)".into(),
            ))
        }
    };
    let mut calib = CalibrationResult::load(&a.calib)?;
    let p_pol = a.p_pol.unwrap_or(calib.p_pol);
    let p_opt = a.p_opt.unwrap_or(calib.p_opt);
    if p_pol != calib.p_pol || p_opt != calib.p_opt {
        log::info!("recalibrating at p_pol={p_pol} p_opt={p_opt}");
        calib = recalibrate(&slc, guide.as_ref(), &calib, p_pol, p_opt)?;
    }
    let cfg = PgnlmConfig {
        search_half: calib.search_half,
        patch_half: calib.patch_half,
        gamma: a.gamma,
        lambda: a.lambda,
        p_pol: calib.p_pol,
        p_opt: calib.p_opt,
        s_max: a.smax,
        guided: !a.unguided,
        ..PgnlmConfig::default()
    };
    println!("config: {}", cfg.summary());
    println!("thresholds: t_pol={:?} t_opt={:?}", calib.t_pol, calib.t_opt);

    let (cov, diag) = estimate_image(&slc, guide.as_ref(), &cfg, &calib)?;
    let (h, w) = (cov.height(), cov.width());
    write_container(&Raster::Covariance(cov), &a.out)?;
    if let Some(prefix) = &a.diagnostics {
        let used = diag.predictors_used.iter().map(|&u| f64::from(u)).collect();
        let with_suffix = |s: &str| {
            let mut p = prefix.clone().into_os_string();
            p.push(s);
            PathBuf::from(p)
        };
        write_container(
            &Raster::Guide(GuideImage::new(h, w, 1, used)?),
            &with_suffix("_predictors.bin"),
        )?;
        write_container(
            &Raster::Guide(GuideImage::new(h, w, 1, diag.weight_sum.clone())?),
            &with_suffix("_weights.bin"),
        )?;
    }
    println!(
        "estimated {h}x{w}; mean predictor fraction {:.4}",
        diag.mean_fraction_used(cfg.window_len())
    );
    Ok(())
}

pub fn boxcar(a: &BoxcarArgs) -> CliResult {
    let slc = read_slc(&a.slc)?;
    let cov = pgnlm::boxcar(&slc, a.half);
    write_container(&Raster::Covariance(cov), &a.out)?;
    println!("boxcar {0}x{0} written", 2 * a.half + 1);
    Ok(())
}

pub fn features(a: &FeaturesArgs) -> CliResult {
    let cov = read_covariance(&a.cov)?;
    let data = extract_features(&cov).iter().flat_map(|f| f.to_array()).collect();
    let raster = GuideImage::new(cov.height(), cov.width(), FEATURE_NAMES.len(), data)?;
    write_container(&Raster::Guide(raster), &a.out)?;
    println!("features {} written", FEATURE_NAMES.join(","));
    Ok(())
}

#[derive(Debug, Serialize)]
struct EnlReport {
    region: [usize; 4],
    c11: f64,
    c22: f64,
    c33: f64,
}

#[derive(Debug, Serialize)]
struct MetricsReport {
    height: usize,
    width: usize,
    enl: EnlReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    matrix_error: Option<pgnlm::MatrixErrorSummary>,
}

fn parse_region(s: &str) -> CliResult<[usize; 4]> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Usage(format!("--enl-region must be x,y,w,h: {e}")))?;
    parts
        .try_into()
        .map_err(|_| CliError::Usage(format!("--enl-region must have four fields, got '{s}'")))
}

/// JSON with infinite ENL written as the string "inf".
fn finite_or_string(v: f64) -> serde_json::Value {
    if v.is_finite() {
        serde_json::json!(v)
    } else {
        serde_json::json!(v.to_string())
    }
}

pub fn metrics(a: &MetricsArgs) -> CliResult {
    let cov = read_covariance(&a.cov)?;
    let (h, w) = (cov.height(), cov.width());
    let reg = match &a.enl_region {
        Some(s) => parse_region(s)?,
        None => [0, 0, w, h],
    };
    let channel_enl = |f: fn(&pgnlm::HermitianMatrix3) -> f64| -> CliResult<f64> {
        let values: Vec<f64> = cov.data().iter().map(f).collect();
        Ok(enl(&region(&values, w, reg[0], reg[1], reg[2], reg[3])?)?)
    };
    let enl_report = EnlReport {
        region: reg,
        c11: channel_enl(|c| c.c11)?,
        c22: channel_enl(|c| c.c22)?,
        c33: channel_enl(|c| c.c33)?,
    };
    let matrix_error = match (&a.truth, &a.labels) {
        (Some(t), Some(l)) => {
            let truth = read_class_truth(t)?;
            let labels = read_labels(l)?;
            if labels.height() != h || labels.width() != w {
                return Err(pgnlm::Error::DimensionMismatch {
                    expected_h: h,
                    expected_w: w,
                    got_h: labels.height(),
                    got_w: labels.width(),
                }
                .into());
            }
            Some(matrix_error(&cov, &truth, labels.data(), None)?)
        }
        _ => None,
    };
    let mut value = serde_json::to_value(MetricsReport {
        height: h,
        width: w,
        enl: enl_report,
        matrix_error,
    })
    .expect("metrics serialise");
    for ch in ["c11", "c22", "c33"] {
        let v = &mut value["enl"][ch];
        if v.is_null() {
            *v = finite_or_string(f64::INFINITY);
        }
    }
    let text = to_json(&value);
    match &a.out {
        Some(p) => write_text(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[derive(Debug, Serialize)]
struct ClassifyReport<'a> {
    features: [&'static str; 5],
    folds_requested: usize,
    grouped: bool,
    seed: u64,
    classifier: Classifier,
    samples: usize,
    #[serde(flatten)]
    report: &'a pgnlm::CvReport,
}

pub fn classify(a: &ClassifyArgs) -> CliResult {
    let feats = read_guide(&a.features)?;
    if feats.bands() != FEATURE_NAMES.len() {
        return Err(CliError::Usage(format!(
            "{} has {} bands; expected the {}-band output of `features`",
            a.features.display(),
            feats.bands(),
            FEATURE_NAMES.len()
        )));
    }
    let labels = read_labels(&a.labels)?;
    let geometry_check = |h: usize, w: usize| -> CliResult {
        if h != feats.height() || w != feats.width() {
            return Err(pgnlm::Error::DimensionMismatch {
                expected_h: feats.height(),
                expected_w: feats.width(),
                got_h: h,
                got_w: w,
            }
            .into());
        }
        Ok(())
    };
    geometry_check(labels.height(), labels.width())?;
    let groups = match &a.groups {
        Some(p) => {
            let g = read_labels(p)?;
            geometry_check(g.height(), g.width())?;
            Some(g.data().iter().map(|&x| u32::from(x)).collect())
        }
        None => None,
    };
    let features = feats
        .data()
        .chunks_exact(FEATURE_NAMES.len())
        .map(|c| c.try_into().expect("five bands"))
        .collect();
    let data = LabeledSet::new(features, labels.data().to_vec(), groups)?;
    let cfg = CvConfig {
        folds: a.k,
        grouped: a.groups.is_some(),
        seed: a.seed,
        classifier: match a.knn {
            Some(k) => Classifier::Knn { k },
            None => Classifier::NearestCentroid,
        },
    };
    let report = crossval_classify(&data, &cfg)?;
    let out = ClassifyReport {
        features: FEATURE_NAMES,
        folds_requested: cfg.folds,
        grouped: cfg.grouped,
        seed: cfg.seed,
        classifier: cfg.classifier,
        samples: data.len(),
        report: &report,
    };
    write_text(&a.out, &to_json(&out))?;
    if let Some(p) = &a.csv {
        write_text(p, &report.to_csv())?;
    }
    println!(
        "mean accuracy {:.4} over {} folds",
        report.mean,
        report.folds.len()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct CompareReport {
    kind: &'static str,
    max_difference: f64,
    tol: f64,
    within_tolerance: bool,
}

fn max_abs_diff(a: impl Iterator<Item = f64>, b: impl Iterator<Item = f64>) -> f64 {
    a.zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn compare(a: &CompareArgs) -> CliResult {
    let ra = read_container(&a.a)?;
    let rb = read_container(&a.b)?;
    if ra.kind() != rb.kind() {
        return Err(pgnlm::Error::WrongKind {
            expected: ra.kind().name(),
            found: rb.kind().name(),
        }
        .into());
    }
    let (ha, wa, hb, wb) = (ra.height(), ra.width(), rb.height(), rb.width());
    if (ha, wa) != (hb, wb) {
        return Err(pgnlm::Error::DimensionMismatch {
            expected_h: ha,
            expected_w: wa,
            got_h: hb,
            got_w: wb,
        }
        .into());
    }
    let kind = ra.kind().name();
    let diff = match (ra, rb) {
        (Raster::Covariance(x), Raster::Covariance(y)) => x.max_relative_difference(&y)?,
        (Raster::Slc(x), Raster::Slc(y)) => {
            let flat = |img: &ScatteringImage| -> Vec<f64> {
                img.data()
                    .iter()
                    .flat_map(|s| s.as_array().into_iter().flat_map(|z| [z.re, z.im]))
                    .collect()
            };
            max_abs_diff(flat(&x).into_iter(), flat(&y).into_iter())
        }
        (Raster::Guide(x), Raster::Guide(y)) => {
            if x.bands() != y.bands() {
                return Err(CliError::Mismatch(format!(
                    "band counts differ: {} vs {}",
                    x.bands(),
                    y.bands()
                )));
            }
            max_abs_diff(x.data().iter().copied(), y.data().iter().copied())
        }
        (Raster::Labels(x), Raster::Labels(y)) => {
            x.data().iter().zip(y.data()).filter(|(p, q)| p != q).count() as f64
        }
        _ => unreachable!("kinds checked above"),
    };
    let report = CompareReport {
        kind,
        max_difference: diff,
        tol: a.tol,
        within_tolerance: diff <= a.tol,
    };
    print!("{}", to_json(&report));
    if report.within_tolerance {
        Ok(())
    } else {
        Err(CliError::Mismatch(format!(
            "{} and {} differ by {diff:e} (tolerance {:e})",
            a.a.display(),
            a.b.display(),
            a.tol
        )))
    }
}
