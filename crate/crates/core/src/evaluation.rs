//! Absolute trajectory error: timestamp association, rigid alignment and
//! translational error statistics.

use nalgebra::{Isometry3, Matrix3, Point3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Pose, TimedPose};

/// Default association window (s).
pub const DEFAULT_MAX_DT: f64 = 0.02;
/// Smallest-to-largest singular value ratio below which the rotation is
/// considered unobservable.
const DEGENERATE_RATIO: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{0} trajectory is empty")]
    Empty(&'static str),
    #[error("{which} trajectory timestamps are not sorted at index {index}")]
    Unsorted { which: &'static str, index: usize },
    #[error("no pose pairs within {max_dt} s of each other")]
    NoMatches { max_dt: f64 },
    #[error("max_dt must be >= 0, got {0}")]
    MaxDt(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub est: usize,
    pub gt: usize,
    /// `est.timestamp − gt.timestamp` (s).
    pub dt: f64,
}

fn check_sorted(poses: &[TimedPose], which: &'static str) -> Result<(), EvalError> {
    if poses.is_empty() {
        return Err(EvalError::Empty(which));
    }
    match poses.windows(2).position(|w| w[1].timestamp < w[0].timestamp) {
        Some(i) => Err(EvalError::Unsorted { which, index: i + 1 }),
        None => Ok(()),
    }
}

fn to_ns(t: f64) -> i64 {
    (t * 1e9).round() as i64
}

/// Greedy nearest-timestamp association: candidate pairs within `max_dt`
/// are taken in order of increasing |Δt| (nanosecond resolution, ties by
/// estimate then ground-truth index), each pose used at most once. The
/// result is ordered by estimate index.
pub fn associate(est: &[TimedPose], gt: &[TimedPose], max_dt: f64) -> Result<Vec<Match>, EvalError> {
    if !(max_dt >= 0.0) {
        return Err(EvalError::MaxDt(max_dt));
    }
    check_sorted(est, "estimated")?;
    check_sorted(gt, "ground-truth")?;
    let window = to_ns(max_dt);
    let gt_ns: Vec<i64> = gt.iter().map(|p| to_ns(p.timestamp)).collect();
    let mut candidates: Vec<(i64, usize, usize)> = Vec::new();
    for (i, e) in est.iter().enumerate() {
        let t = to_ns(e.timestamp);
        let lo = gt_ns.partition_point(|&g| g < t - window);
        for (j, &g) in gt_ns.iter().enumerate().skip(lo) {
            if g > t + window {
                break;
            }
            candidates.push(((t - g).abs(), i, j));
        }
    }
    candidates.sort_unstable();
    let (mut est_used, mut gt_used) = (vec![false; est.len()], vec![false; gt.len()]);
    let mut out = Vec::new();
    for (_, i, j) in candidates {
        if !est_used[i] && !gt_used[j] {
            est_used[i] = true;
            gt_used[j] = true;
            out.push(Match {
                est: i,
                gt: j,
                dt: est[i].timestamp - gt[j].timestamp,
            });
        }
    }
    out.sort_by_key(|m| m.est);
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    /// Maps estimate positions onto ground truth: `p_gt ≈ scale·R·p_est + t`.
    pub transform: Pose,
    pub scale: f64,
    /// The rotation was unobservable (fewer than 3 non-collinear points)
    /// and only a translation was fitted.
    pub translation_only: bool,
}

impl Alignment {
    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        let r = self.transform.rotation * p.coords * self.scale;
        Point3::from(r + self.transform.translation.vector)
    }
}

/// Closed-form least-squares alignment of `est` onto `gt` (SVD of the
/// cross-covariance). With `with_scale` a similarity scale is fitted too.
pub fn align_rigid(est: &[Point3<f64>], gt: &[Point3<f64>], with_scale: bool) -> Alignment {
    assert_eq!(est.len(), gt.len(), "alignment needs paired points");
    let n = est.len().max(1) as f64;
    let ce: Vector3<f64> = est.iter().map(|p| p.coords).sum::<Vector3<f64>>() / n;
    let cg: Vector3<f64> = gt.iter().map(|p| p.coords).sum::<Vector3<f64>>() / n;
    let mut h = Matrix3::zeros();
    let mut var_e = 0.0;
    for (e, g) in est.iter().zip(gt) {
        let (de, dg) = (e.coords - ce, g.coords - cg);
        h += dg * de.transpose();
        var_e += de.norm_squared();
    }
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v requested"));
    let s = svd.singular_values;
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let degenerate = !(s[order[1]] > DEGENERATE_RATIO * s[order[0]]) || s[order[0]] <= 0.0;
    if degenerate {
        return Alignment {
            transform: Pose::from_parts(Translation3::from(cg - ce), UnitQuaternion::identity()),
            scale: 1.0,
            translation_only: true,
        };
    }
    // R = U·diag(1, 1, ±1)·Vᵀ, flipping the weakest direction to avoid reflections.
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(order[2], order[2])] = -1.0;
    }
    let r = u * d * v_t;
    let scale = if with_scale && var_e > 0.0 {
        let trace: f64 = (0..3).map(|k| s[k] * d[(k, k)]).sum();
        trace / var_e
    } else {
        1.0
    };
    let rotation = UnitQuaternion::from_matrix(&r);
    let t = cg - rotation * ce * scale;
    let fitted = Alignment {
        transform: Isometry3::from_parts(Translation3::from(t), rotation),
        scale,
        translation_only: false,
    };
    // SVD round-off leaves a residual rotation of a few ulps; keep the plain
    // centroid shift whenever it fits at least as well.
    let shift = Alignment {
        transform: Pose::from_parts(Translation3::from(cg - ce), UnitQuaternion::identity()),
        scale: 1.0,
        translation_only: false,
    };
    if residual(&shift, est, gt) <= residual(&fitted, est, gt) {
        shift
    } else {
        fitted
    }
}

fn residual(a: &Alignment, est: &[Point3<f64>], gt: &[Point3<f64>]) -> f64 {
    est.iter().zip(gt).map(|(e, g)| (a.apply(e) - g).norm_squared()).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AteResult {
    pub rmse: f64,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub matched_pairs: usize,
    /// Matched pairs over ground-truth poses.
    pub tracked_fraction: f64,
    pub alignment: Alignment,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairError {
    pub est_timestamp: f64,
    pub gt_timestamp: f64,
    /// Translational error after alignment (m).
    pub error: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AteOptions {
    pub max_dt: f64,
    pub with_scale: bool,
}

impl Default for AteOptions {
    fn default() -> Self {
        Self {
            max_dt: DEFAULT_MAX_DT,
            with_scale: false,
        }
    }
}

/// ATE statistics plus the per-pair errors in estimate order.
pub fn compute_ate_detailed(
    est: &[TimedPose],
    gt: &[TimedPose],
    options: &AteOptions,
) -> Result<(AteResult, Vec<PairError>), EvalError> {
    let matches = associate(est, gt, options.max_dt)?;
    if matches.is_empty() {
        return Err(EvalError::NoMatches { max_dt: options.max_dt });
    }
    let pe: Vec<Point3<f64>> = matches.iter().map(|m| est[m.est].position()).collect();
    let pg: Vec<Point3<f64>> = matches.iter().map(|m| gt[m.gt].position()).collect();
    let alignment = align_rigid(&pe, &pg, options.with_scale);
    let pairs: Vec<PairError> = matches
        .iter()
        .zip(pe.iter().zip(&pg))
        .map(|(m, (e, g))| PairError {
            est_timestamp: est[m.est].timestamp,
            gt_timestamp: gt[m.gt].timestamp,
            error: (alignment.apply(e) - g).norm(),
        })
        .collect();
    let n = pairs.len() as f64;
    let mut errs: Vec<f64> = pairs.iter().map(|p| p.error).collect();
    errs.sort_by(f64::total_cmp);
    let mean = errs.iter().sum::<f64>() / n;
    let rmse = (errs.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    let k = errs.len();
    let median = if k % 2 == 1 {
        errs[k / 2]
    } else {
        0.5 * (errs[k / 2 - 1] + errs[k / 2])
    };
    let std = (errs.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n).sqrt();
    let result = AteResult {
        rmse,
        mean,
        median,
        std,
        min: errs[0],
        max: errs[k - 1],
        matched_pairs: k,
        tracked_fraction: k as f64 / gt.len() as f64,
        alignment,
    };
    Ok((result, pairs))
}

pub fn compute_ate(est: &[TimedPose], gt: &[TimedPose], max_dt: f64) -> Result<AteResult, EvalError> {
    let options = AteOptions {
        max_dt,
        ..AteOptions::default()
    };
    compute_ate_detailed(est, gt, &options).map(|(r, _)| r)
}

/// Share of ground-truth poses with an estimate within `max_dt`; 0 when
/// nothing matches.
pub fn tracked_fraction(est: &[TimedPose], gt: &[TimedPose], max_dt: f64) -> Result<f64, EvalError> {
    Ok(associate(est, gt, max_dt)?.len() as f64 / gt.len() as f64)
}

/// Human-readable statistics block.
pub fn format_ate(r: &AteResult) -> String {
    format!(
        "matched_pairs {}\ntracked_fraction {:.6}\nrmse {:.6}\nmean {:.6}\nmedian {:.6}\nstd {:.6}\nmin {:.6}\nmax {:.6}\n",
        r.matched_pairs, r.tracked_fraction, r.rmse, r.mean, r.median, r.std, r.min, r.max
    )
}
