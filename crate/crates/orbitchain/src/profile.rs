//! Per-function performance model: piecewise-linear CPU speed, constant GPU
//! speed, memory footprints, and minimum instantiation quota.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

const CONTINUITY_TOL: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum ProfileError {
    #[error("segment {0} needs at least 2 samples, got {1}")]
    InsufficientSamples(usize, usize),
    #[error("fitted model decreases over its domain")]
    NonMonotoneFit,
    #[error("breakpoints must be strictly increasing and inside the sample quota range")]
    InvalidBreakpoints,
    #[error("segments are not contiguous at quota {0}")]
    NotContiguous(f64),
    #[error("quota {0} above model domain end {1}")]
    QuotaAboveDomain(f64, f64),
    #[error("invalid profile field: {0}")]
    InvalidField(String),
    #[error("singular normal equations in piecewise fit")]
    SingularFit,
}

/// One linear piece of a speed model, valid on `[quota_lo, quota_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub quota_lo: f64,
    pub quota_hi: f64,
    pub slope: f64,
    pub intercept: f64,
}

impl Segment {
    pub fn value_at(&self, quota: f64) -> f64 {
        self.slope * quota + self.intercept
    }
}

/// Piecewise-linear CPU speed model in tiles/second over CPU-core quotas.
///
/// Segments are contiguous and the model is monotonically non-decreasing.
/// Models loaded verbatim from independently fitted coefficient tables may
/// carry small discontinuities at breakpoints; evaluation at a shared
/// breakpoint uses the left segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseSpeedModel {
    segments: Vec<Segment>,
}

impl PiecewiseSpeedModel {
    pub fn new(segments: Vec<Segment>) -> Result<Self, ProfileError> {
        if segments.is_empty() {
            return Err(ProfileError::InvalidField("no segments".into()));
        }
        for seg in &segments {
            if !(seg.quota_hi > seg.quota_lo) {
                return Err(ProfileError::InvalidField(format!(
                    "empty segment [{}, {}]",
                    seg.quota_lo, seg.quota_hi
                )));
            }
        }
        for w in segments.windows(2) {
            if (w[0].quota_hi - w[1].quota_lo).abs() > 1e-9 {
                return Err(ProfileError::NotContiguous(w[0].quota_hi));
            }
        }
        let model = Self { segments };
        if !model.is_monotone() {
            return Err(ProfileError::NonMonotoneFit);
        }
        Ok(model)
    }

    pub fn single_line(lo: f64, hi: f64, slope: f64, intercept: f64) -> Result<Self, ProfileError> {
        Self::new(vec![Segment {
            quota_lo: lo,
            quota_hi: hi,
            slope,
            intercept,
        }])
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// `(domain start, domain end)` in CPU-core units.
    pub fn domain(&self) -> (f64, f64) {
        (
            self.segments.first().unwrap().quota_lo,
            self.segments.last().unwrap().quota_hi,
        )
    }

    fn is_monotone(&self) -> bool {
        for seg in &self.segments {
            if seg.slope < -1e-9 {
                return false;
            }
        }
        for w in self.segments.windows(2) {
            // A downward jump at the breakpoint breaks monotonicity even if
            // both slopes are non-negative.
            if w[1].value_at(w[1].quota_lo) < w[0].value_at(w[0].quota_hi) - 1e-9 {
                return false;
            }
        }
        true
    }

    /// True iff the breakpoint values are continuous within 1e-6 tiles/s.
    pub fn is_continuous(&self) -> bool {
        self.segments.windows(2).all(|w| {
            (w[0].value_at(w[0].quota_hi) - w[1].value_at(w[1].quota_lo)).abs() <= CONTINUITY_TOL
        })
    }

    /// True iff segment slopes are non-increasing left to right.
    pub fn is_concave(&self) -> bool {
        self.segments.windows(2).all(|w| w[1].slope <= w[0].slope + 1e-12)
    }
}

/// Speed at a given CPU quota. Quotas below the domain start evaluate to
/// zero: the function cannot be instantiated there.
pub fn eval_speed(model: &PiecewiseSpeedModel, quota: f64) -> Result<f64, ProfileError> {
    let (lo, hi) = model.domain();
    if quota > hi + 1e-9 {
        return Err(ProfileError::QuotaAboveDomain(quota, hi));
    }
    if quota < lo {
        return Ok(0.0);
    }
    let seg = model
        .segments
        .iter()
        .find(|s| quota <= s.quota_hi + 1e-12)
        .unwrap_or_else(|| model.segments.last().unwrap());
    Ok(seg.value_at(quota).max(0.0))
}

pub fn is_concave(model: &PiecewiseSpeedModel) -> bool {
    model.is_concave()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    /// Joint least squares with the segment values tied at breakpoints.
    Continuous,
    /// Independent ordinary least squares per segment; may leave small
    /// discontinuities at breakpoints, mirroring per-segment fitted tables.
    Independent,
}

/// Fits a piecewise-linear speed model to `(quota, speed)` samples split at
/// the given breakpoints. Returns the model and the coefficient of
/// determination per segment.
pub fn fit_piecewise_linear(
    samples: &[(f64, f64)],
    breakpoints: &[f64],
    mode: FitMode,
) -> Result<(PiecewiseSpeedModel, Vec<f64>), ProfileError> {
    if samples.len() < 2 {
        return Err(ProfileError::InsufficientSamples(0, samples.len()));
    }
    let lo = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let hi = samples.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    let mut knots = vec![lo];
    for &b in breakpoints {
        if b <= *knots.last().unwrap() + 1e-12 || b >= hi - 1e-12 {
            return Err(ProfileError::InvalidBreakpoints);
        }
        knots.push(b);
    }
    knots.push(hi);
    let nseg = knots.len() - 1;

    // A sample sitting exactly on a breakpoint belongs to the lower segment.
    let mut per_segment: Vec<Vec<(f64, f64)>> = vec![Vec::new(); nseg];
    for &(q, v) in samples {
        let k = knots[1..nseg]
            .iter()
            .position(|&b| q <= b + 1e-12)
            .unwrap_or(nseg - 1);
        per_segment[k].push((q, v));
    }
    for (k, seg_samples) in per_segment.iter().enumerate() {
        if seg_samples.len() < 2 {
            return Err(ProfileError::InsufficientSamples(k, seg_samples.len()));
        }
    }

    let segments = match mode {
        FitMode::Independent => {
            let mut segs = Vec::with_capacity(nseg);
            for k in 0..nseg {
                let (slope, intercept) = ols_line(&per_segment[k])?;
                segs.push(Segment {
                    quota_lo: knots[k],
                    quota_hi: knots[k + 1],
                    slope,
                    intercept,
                });
            }
            segs
        }
        FitMode::Continuous => fit_continuous(samples, &knots)?,
    };

    let r2 = per_segment
        .iter()
        .zip(&segments)
        .map(|(pts, seg)| r_squared(pts, seg))
        .collect();
    let model = PiecewiseSpeedModel::new(segments).map_err(|e| match e {
        ProfileError::NonMonotoneFit => ProfileError::NonMonotoneFit,
        other => other,
    })?;
    Ok((model, r2))
}

/// Least-squares line through a point set.
fn ols_line(points: &[(f64, f64)]) -> Result<(f64, f64), ProfileError> {
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let det = n * sxx - sx * sx;
    if det.abs() < 1e-12 {
        return Err(ProfileError::SingularFit);
    }
    let slope = (n * sxy - sx * sy) / det;
    let intercept = (sy - slope * sx) / n;
    Ok((slope, intercept))
}

/// Continuous piecewise fit: parametrize by the model values at the knots
/// (linear interpolation between knots) and solve the normal equations.
fn fit_continuous(samples: &[(f64, f64)], knots: &[f64]) -> Result<Vec<Segment>, ProfileError> {
    let m = knots.len();
    let mut ata = vec![vec![0.0f64; m]; m];
    let mut atb = vec![0.0f64; m];
    for &(q, v) in samples {
        // Hat-function basis weights for this sample.
        let k = knots[1..m - 1]
            .iter()
            .position(|&b| q <= b + 1e-12)
            .unwrap_or(m - 2);
        let (x0, x1) = (knots[k], knots[k + 1]);
        let w1 = ((q - x0) / (x1 - x0)).clamp(0.0, 1.0);
        let w0 = 1.0 - w1;
        let idx = [(k, w0), (k + 1, w1)];
        for &(a, wa) in &idx {
            for &(b, wb) in &idx {
                ata[a][b] += wa * wb;
            }
            atb[a] += wa * v;
        }
    }
    let values = solve_dense(&mut ata, &mut atb)?;
    let mut segs = Vec::with_capacity(m - 1);
    for k in 0..m - 1 {
        let slope = (values[k + 1] - values[k]) / (knots[k + 1] - knots[k]);
        segs.push(Segment {
            quota_lo: knots[k],
            quota_hi: knots[k + 1],
            slope,
            intercept: values[k] - slope * knots[k],
        });
    }
    Ok(segs)
}

/// Gaussian elimination with partial pivoting; systems here are tiny.
fn solve_dense(a: &mut [Vec<f64>], b: &mut [f64]) -> Result<Vec<f64>, ProfileError> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < 1e-12 {
            return Err(ProfileError::SingularFit);
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

fn r_squared(points: &[(f64, f64)], seg: &Segment) -> f64 {
    let n = points.len() as f64;
    let mean = points.iter().map(|p| p.1).sum::<f64>() / n;
    let ss_tot: f64 = points.iter().map(|p| (p.1 - mean).powi(2)).sum();
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.1 - seg.value_at(p.0)).powi(2))
        .sum();
    if ss_tot < 1e-30 {
        if ss_res < 1e-18 {
            1.0
        } else {
            f64::NEG_INFINITY
        }
    } else {
        1.0 - ss_res / ss_tot
    }
}

/// Memory footprint of a function, split by device. On devices with unified
/// memory both parts charge the same pool.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MemoryFootprint {
    pub cpu_bytes: f64,
    #[serde(default)]
    pub gpu_bytes: f64,
}

/// Full performance profile of one analytics function.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FunctionProfile {
    pub speed_cpu: PiecewiseSpeedModel,
    /// Tiles/second under GPU acceleration; zero when the function has no
    /// GPU path.
    pub speed_gpu: f64,
    pub mem: MemoryFootprint,
    /// Base CPU quota pre-allocated for full-speed GPU inference.
    pub gpu_base_cpu_quota: f64,
    /// Minimum CPU quota for the function to be instantiated.
    pub min_cpu_quota: f64,
}

impl FunctionProfile {
    pub fn validate(&self) -> Result<(), ProfileError> {
        if self.speed_gpu < 0.0 {
            return Err(ProfileError::InvalidField("speed_gpu < 0".into()));
        }
        if self.mem.cpu_bytes <= 0.0 {
            return Err(ProfileError::InvalidField("mem.cpu_bytes <= 0".into()));
        }
        if self.mem.gpu_bytes < 0.0 {
            return Err(ProfileError::InvalidField("mem.gpu_bytes < 0".into()));
        }
        if self.min_cpu_quota <= 0.0 {
            return Err(ProfileError::InvalidField("min_cpu_quota <= 0".into()));
        }
        if self.gpu_base_cpu_quota < 0.0 {
            return Err(ProfileError::InvalidField("gpu_base_cpu_quota < 0".into()));
        }
        let (lo, _) = self.speed_cpu.domain();
        if (lo - self.min_cpu_quota).abs() > 1e-9 {
            return Err(ProfileError::InvalidField(format!(
                "speed model domain starts at {lo}, expected min_cpu_quota {}",
                self.min_cpu_quota
            )));
        }
        Ok(())
    }
}

/// Registry mapping `profile_ref` identifiers to profiles.
pub type ProfileSet = BTreeMap<String, FunctionProfile>;

/// Table-literal cloud-detection model used throughout the test suite:
/// slope 0.3253 / intercept -0.0140 on [0.5, 2], slope 0.1751 / intercept
/// 0.3458 on [2, 4].
pub fn cloud_detection_table_model() -> PiecewiseSpeedModel {
    PiecewiseSpeedModel::new(vec![
        Segment {
            quota_lo: 0.5,
            quota_hi: 2.0,
            slope: 0.3253,
            intercept: -0.0140,
        },
        Segment {
            quota_lo: 2.0,
            quota_hi: 4.0,
            slope: 0.1751,
            intercept: 0.3458,
        },
    ])
    .expect("table coefficients form a valid model")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn recovers_table_lines_in_independent_mode() {
        let mut samples = Vec::new();
        for k in 0..8 {
            let q = 0.5 + 1.4 * k as f64 / 7.0;
            samples.push((q, 0.3253 * q - 0.0140));
        }
        for k in 0..8 {
            let q = 2.1 + 1.9 * k as f64 / 7.0;
            samples.push((q, 0.1751 * q + 0.3458));
        }
        let (model, r2) = fit_piecewise_linear(&samples, &[2.0], FitMode::Independent).unwrap();
        let segs = model.segments();
        assert_abs_diff_eq!(segs[0].slope, 0.3253, epsilon = 1e-6);
        assert_abs_diff_eq!(segs[0].intercept, -0.0140, epsilon = 1e-6);
        assert_abs_diff_eq!(segs[1].slope, 0.1751, epsilon = 1e-6);
        assert_abs_diff_eq!(segs[1].intercept, 0.3458, epsilon = 1e-6);
        assert_abs_diff_eq!(r2[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r2[1], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn single_segment_identity_line() {
        let samples: Vec<(f64, f64)> = (0..10).map(|k| (k as f64 * 0.4 + 0.5, k as f64 * 0.4 + 0.5)).collect();
        let (model, r2) = fit_piecewise_linear(&samples, &[], FitMode::Continuous).unwrap();
        let seg = model.segments()[0];
        assert_abs_diff_eq!(seg.slope, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(seg.intercept, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r2[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn noisy_landuse_fit_has_high_r2() {
        // Samples from the two landuse lines with sigma = 0.01 Gaussian
        // noise; cross-checked against per-segment OLS.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut samples = Vec::new();
        let mut seg1 = Vec::new();
        let mut seg2 = Vec::new();
        for k in 0..20 {
            let q = 0.5 + 1.5 * k as f64 / 19.0;
            let noise = normal_sample(&mut rng) * 0.01;
            let v = 0.8535 * q - 0.0020 + noise;
            samples.push((q, v));
            if q <= 2.0 {
                seg1.push((q, v));
            } else {
                seg2.push((q, v));
            }
        }
        for k in 0..20 {
            let q = 2.05 + 1.95 * k as f64 / 19.0;
            let noise = normal_sample(&mut rng) * 0.01;
            let v = 0.3481 * q + 1.2266 + noise;
            samples.push((q, v));
            seg2.push((q, v));
        }
        let (model, r2) = fit_piecewise_linear(&samples, &[2.0], FitMode::Independent).unwrap();
        assert!(r2.iter().all(|&r| r > 0.95), "r2 = {r2:?}");
        // Independent mode must agree with a closed-form OLS oracle on each
        // segment within noise-scaled tolerance.
        let (s1, i1) = ols_line(&seg1).unwrap();
        assert_abs_diff_eq!(model.segments()[0].slope, s1, epsilon = 1e-9);
        assert_abs_diff_eq!(model.segments()[0].intercept, i1, epsilon = 1e-9);
    }

    fn normal_sample(rng: &mut impl Rng) -> f64 {
        // Box-Muller; good enough for test noise.
        let u1: f64 = rng.gen_range(1e-12..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    #[test]
    fn continuous_fit_is_continuous_at_breakpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples: Vec<(f64, f64)> = (0..40)
            .map(|k| {
                let q = 0.5 + 3.5 * k as f64 / 39.0;
                let v = if q <= 2.0 {
                    0.3253 * q - 0.0140
                } else {
                    0.1751 * q + 0.3458
                };
                (q, v + normal_sample(&mut rng) * 0.005)
            })
            .collect();
        let (model, _) = fit_piecewise_linear(&samples, &[2.0], FitMode::Continuous).unwrap();
        assert!(model.is_continuous());
    }

    #[test]
    fn eval_matches_table_lines() {
        let model = cloud_detection_table_model();
        assert_abs_diff_eq!(eval_speed(&model, 1.0).unwrap(), 0.3113, epsilon = 1e-9);
        assert_abs_diff_eq!(eval_speed(&model, 3.0).unwrap(), 0.8711, epsilon = 1e-9);
        assert_eq!(eval_speed(&model, 0.0).unwrap(), 0.0);
        assert!(matches!(
            eval_speed(&model, 5.0),
            Err(ProfileError::QuotaAboveDomain(_, _))
        ));
    }

    #[test]
    fn concavity_checks() {
        assert!(cloud_detection_table_model().is_concave());
        let single = PiecewiseSpeedModel::single_line(0.5, 4.0, 1.0, 0.0).unwrap();
        assert!(single.is_concave());
        let convex = PiecewiseSpeedModel::new(vec![
            Segment {
                quota_lo: 0.5,
                quota_hi: 2.0,
                slope: 0.1,
                intercept: 0.0,
            },
            Segment {
                quota_lo: 2.0,
                quota_hi: 4.0,
                slope: 0.3,
                intercept: -0.4,
            },
        ])
        .unwrap();
        assert!(!convex.is_concave());
    }

    #[test]
    fn too_few_samples_per_segment() {
        let samples = vec![(0.5, 0.1), (1.0, 0.2), (3.0, 0.5)];
        assert!(matches!(
            fit_piecewise_linear(&samples, &[2.0], FitMode::Independent),
            Err(ProfileError::InsufficientSamples(1, 1))
        ));
    }

    #[test]
    fn decreasing_samples_fail_monotonicity() {
        let samples: Vec<(f64, f64)> = (0..10).map(|k| (k as f64 + 0.5, 10.0 - k as f64)).collect();
        assert_eq!(
            fit_piecewise_linear(&samples, &[], FitMode::Independent).unwrap_err(),
            ProfileError::NonMonotoneFit
        );
    }

    #[test]
    fn fit_idempotence_recovers_exact_model() {
        let model = cloud_detection_table_model();
        let samples: Vec<(f64, f64)> = (0..30)
            .map(|k| {
                let q = 0.5 + 3.5 * k as f64 / 29.0;
                (q, eval_speed(&model, q).unwrap())
            })
            .collect();
        let (refit, _) = fit_piecewise_linear(&samples, &[2.0], FitMode::Independent).unwrap();
        for (a, b) in refit.segments().iter().zip(model.segments()) {
            assert_abs_diff_eq!(a.slope, b.slope, epsilon = 1e-6);
            assert_abs_diff_eq!(a.intercept, b.intercept, epsilon = 1e-6);
        }
    }
}
