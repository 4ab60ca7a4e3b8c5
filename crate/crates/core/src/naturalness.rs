//! Turning sample fractions into class labels and h/m scores.
//!
//! Single threshold: `h` if `fp_s < fp_t`, else `m`.
//! Dual threshold: `h` if `fp_s < fp_l`, `u` if `fp_l <= fp_s <= fp_r`,
//! `m` otherwise. Boundary values go to the non-human side.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fp::FpSummary;
use crate::types::{CalibrationMeta, ClassLabel, CorpusResult, ThresholdConfig, Thresholds};

/// Calibrated boundaries are kept this far inside (0, 1).
pub const BOUNDARY_EPS: f64 = 1e-9;

fn check_fp(fp_s: f64) -> Result<()> {
    if fp_s > 0.0 && fp_s <= 1.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange(format!("fp_s={fp_s} must lie in (0,1]")))
    }
}

pub fn classify_single(fp_s: f64, fp_t: f64) -> Result<ClassLabel> {
    check_fp(fp_s)?;
    Thresholds::Single { fp_t }.validate()?;
    Ok(if fp_s < fp_t {
        ClassLabel::Human
    } else {
        ClassLabel::Machine
    })
}

pub fn classify_dual(fp_s: f64, fp_l: f64, fp_r: f64) -> Result<ClassLabel> {
    check_fp(fp_s)?;
    Thresholds::Dual { fp_l, fp_r }.validate()?;
    Ok(if fp_s < fp_l {
        ClassLabel::Human
    } else if fp_s <= fp_r {
        ClassLabel::Undefined
    } else {
        ClassLabel::Machine
    })
}

pub fn classify(fp_s: f64, thresholds: &Thresholds) -> Result<ClassLabel> {
    match *thresholds {
        Thresholds::Single { fp_t } => classify_single(fp_s, fp_t),
        Thresholds::Dual { fp_l, fp_r } => classify_dual(fp_s, fp_l, fp_r),
    }
}

/// `(h, m) = (n_h / (n_h + n_m), 1 - h)`.
pub fn h_score_two_class(n_h: usize, n_m: usize) -> Result<(f64, f64)> {
    let n = n_h + n_m;
    if n == 0 {
        return Err(Error::EmptyInput("h score needs at least one labeled sample"));
    }
    // n_m / n equals 1 - h and avoids the rounding of the subtraction.
    Ok((n_h as f64 / n as f64, n_m as f64 / n as f64))
}

/// `(h, m) = (n_h / n, n_m / n)` with `n = n_h + n_m + n_u`; `h + m <= 1`.
pub fn h_score_three_class(n_h: usize, n_m: usize, n_u: usize) -> Result<(f64, f64)> {
    let n = n_h + n_m + n_u;
    if n == 0 {
        return Err(Error::EmptyInput("h score needs at least one labeled sample"));
    }
    Ok((n_h as f64 / n as f64, n_m as f64 / n as f64))
}

/// Relative cost of the two error kinds during threshold search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    /// Cost of a natural sample labeled `m`.
    pub natural: f64,
    /// Cost of a synthetic sample labeled `h`.
    pub synthetic: f64,
}

impl Default for ClassWeights {
    fn default() -> Self {
        Self {
            natural: 1.0,
            synthetic: 1.0,
        }
    }
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn moments(values: &[f64]) -> (f64, f64) {
    FpSummary::from_values(values).map_or((f64::NAN, f64::NAN), |s| (s.mean, s.stdev))
}

fn base_meta(natural: &[f64], synthetic: &[f64]) -> CalibrationMeta {
    let (natural_mean, natural_stdev) = moments(natural);
    let (synthetic_mean, synthetic_stdev) = moments(synthetic);
    CalibrationMeta {
        n_natural: natural.len(),
        n_synthetic: synthetic.len(),
        natural_mean,
        natural_stdev,
        synthetic_mean,
        synthetic_stdev,
        ..Default::default()
    }
}

fn check_population(values: &[f64], min: usize, what: &'static str) -> Result<()> {
    if values.len() < min {
        return Err(Error::EmptyInput(what));
    }
    values.iter().try_for_each(|&v| check_fp(v))
}

/// Misclassifications `(natural labeled m, synthetic labeled h)` at `fp_t`,
/// given sorted populations.
fn single_errors(natural: &[f64], synthetic: &[f64], fp_t: f64) -> (usize, usize) {
    let nat_m = natural.len() - natural.partition_point(|&v| v < fp_t);
    let syn_h = synthetic.partition_point(|&v| v < fp_t);
    (nat_m, syn_h)
}

fn clamp_boundary(v: f64) -> f64 {
    v.clamp(BOUNDARY_EPS, 1.0 - BOUNDARY_EPS)
}

pub fn calibrate_single(natural: &[f64], synthetic: &[f64]) -> Result<ThresholdConfig> {
    calibrate_single_weighted(natural, synthetic, ClassWeights::default())
}

/// Picks `fp_t` among midpoints of adjacent pooled values, minimizing the
/// weighted error count; ties go to the smallest candidate.
pub fn calibrate_single_weighted(natural: &[f64], synthetic: &[f64], weights: ClassWeights) -> Result<ThresholdConfig> {
    check_population(natural, 1, "natural calibration set is empty")?;
    check_population(synthetic, 1, "synthetic calibration set is empty")?;
    let (nat, syn) = (sorted(natural), sorted(synthetic));
    let pooled = sorted(&[natural, synthetic].concat());
    let mut best: Option<(f64, f64)> = None;
    for pair in pooled.windows(2) {
        let t = (pair[0] + pair[1]) / 2.0;
        let (nm, sh) = single_errors(&nat, &syn, t);
        let cost = weights.natural * nm as f64 + weights.synthetic * sh as f64;
        if best.is_none_or(|(_, c)| cost < c) {
            best = Some((t, cost));
        }
    }
    let (t, _) = best.expect("pooled set has at least two values");
    let fp_t = clamp_boundary(t);
    let (nm, sh) = single_errors(&nat, &syn, fp_t);
    let errors = nm + sh;
    let mut meta = base_meta(natural, synthetic);
    meta.calibration_errors = errors;
    meta.calibration_accuracy = 1.0 - errors as f64 / pooled.len() as f64;
    Ok(ThresholdConfig {
        thresholds: Thresholds::Single { fp_t },
        calibration_meta: meta,
    })
}

/// Boundaries from the two populations' moments:
/// `fp_l = mean_nat + c * sd_nat`, `fp_r = mean_syn - c * sd_syn`.
///
/// If the boundaries cross, the result collapses to a single threshold at
/// their midpoint and `degenerate_overlap` is set.
pub fn calibrate_dual(natural: &[f64], synthetic: &[f64], c: f64) -> Result<ThresholdConfig> {
    check_population(natural, 2, "natural calibration set needs at least 2 samples")?;
    check_population(synthetic, 2, "synthetic calibration set needs at least 2 samples")?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidHyperparameter(format!("spread factor c={c} must be > 0")));
    }
    let mut meta = base_meta(natural, synthetic);
    meta.spread_factor = Some(c);
    let fp_l = meta.natural_mean + c * meta.natural_stdev;
    let fp_r = meta.synthetic_mean - c * meta.synthetic_stdev;
    let thresholds = if fp_l > fp_r {
        meta.degenerate_overlap = true;
        Thresholds::Single {
            fp_t: clamp_boundary((fp_l + fp_r) / 2.0),
        }
    } else {
        Thresholds::Dual {
            fp_l: clamp_boundary(fp_l),
            fp_r: clamp_boundary(fp_r),
        }
    };
    let mut correct = 0;
    let mut errors = 0;
    for (values, truth) in [(natural, ClassLabel::Human), (synthetic, ClassLabel::Machine)] {
        for &v in values {
            match classify(v, &thresholds)? {
                ClassLabel::Undefined => {}
                label if label == truth => correct += 1,
                _ => errors += 1,
            }
        }
    }
    meta.calibration_errors = errors;
    // Undefined labels count as neither correct nor errors.
    meta.calibration_accuracy = correct as f64 / (natural.len() + synthetic.len()) as f64;
    Ok(ThresholdConfig {
        thresholds,
        calibration_meta: meta,
    })
}

/// Classifies every sample and applies the two- or three-class h score.
pub fn evaluate_system(sample_fps: &[f64], thresholds: &ThresholdConfig) -> Result<CorpusResult> {
    if sample_fps.is_empty() {
        return Err(Error::EmptyInput("no samples to evaluate"));
    }
    thresholds.thresholds.validate()?;
    let (mut n_h, mut n_m, mut n_u) = (0, 0, 0);
    for &fp in sample_fps {
        match classify(fp, &thresholds.thresholds)? {
            ClassLabel::Human => n_h += 1,
            ClassLabel::Machine => n_m += 1,
            ClassLabel::Undefined => n_u += 1,
        }
    }
    let dual = thresholds.is_dual();
    let (h_score, m_score) = if dual {
        h_score_three_class(n_h, n_m, n_u)?
    } else {
        h_score_two_class(n_h, n_m)?
    };
    Ok(CorpusResult {
        n: sample_fps.len(),
        n_h,
        n_m,
        n_u,
        h_score,
        m_score,
        // Summed in sorted order so that input order cannot perturb the last bit.
        mean_fp: sorted(sample_fps).iter().sum::<f64>() / sample_fps.len() as f64,
        dual,
    })
}

/// One operating point of the threshold sweep; synthetic is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    /// Synthetic samples labeled `m`.
    pub tpr: f64,
    /// Natural samples labeled `m`.
    pub fpr: f64,
}

/// Sweep over every distinct observed value (plus one point above the max).
/// Reported alongside calibration; not used to select thresholds.
pub fn roc_sweep(natural: &[f64], synthetic: &[f64]) -> Vec<RocPoint> {
    let (nat, syn) = (sorted(natural), sorted(synthetic));
    let mut cuts = sorted(&[natural, synthetic].concat());
    cuts.dedup();
    if let Some(&last) = cuts.last() {
        cuts.push(f64::from_bits(last.to_bits() + 1));
    }
    cuts.into_iter()
        .map(|t| {
            let (nm, sh) = single_errors(&nat, &syn, t);
            RocPoint {
                threshold: t,
                tpr: (syn.len() - sh) as f64 / syn.len().max(1) as f64,
                fpr: nm as f64 / nat.len().max(1) as f64,
            }
        })
        .collect()
}
