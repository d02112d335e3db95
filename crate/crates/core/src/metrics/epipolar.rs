//! Fundamental matrices and the epipolar Sampson error.

use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::MetricError;
use crate::flow::FlowField;
use crate::geometry::{relative_pose, CameraIntrinsics, CameraModel, Pixel, Pose};

/// A pixel in frame `t` and its match in frame `t + 1`.
pub type Correspondence = (Pixel, Pixel);

/// Pairs whose Sampson denominator falls below this are skipped.
pub const SAMPSON_MIN_DENOMINATOR: f64 = 1e-12;

/// Relative translations shorter than this admit no unique F.
pub const MIN_BASELINE: f64 = 1e-9;

#[inline]
fn homogeneous(p: &Pixel) -> Vector3<f64> {
    Vector3::new(p.u, p.v, 1.0)
}

fn skew(t: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -t.z, t.y, t.z, 0.0, -t.x, -t.y, t.x, 0.0)
}

fn unit_frobenius(f: Matrix3<f64>) -> Matrix3<f64> {
    f / f.norm()
}

/// Ground-truth F with `x_bᵀ F x_a = 0`, from two calibrated perspective
/// cameras. Normalized to unit Frobenius norm.
pub fn fundamental_from_poses(
    a: (&CameraIntrinsics, &Pose),
    b: (&CameraIntrinsics, &Pose),
) -> Result<Matrix3<f64>, MetricError> {
    for cam in [a.0, b.0] {
        if cam.model != CameraModel::Perspective {
            return Err(MetricError::UnsupportedModel(cam.model));
        }
    }
    // Pose of camera a in camera b's frame: X_b = R X_a + t.
    let rel = relative_pose(b.1, a.1);
    if rel.translation.norm() <= MIN_BASELINE {
        return Err(MetricError::DegenerateBaseline);
    }
    let essential = skew(&rel.translation) * rel.rotation.to_rotation_matrix().into_inner();
    let ka_inv =
        a.0.k_matrix()
            .try_inverse()
            .expect("positive focal lengths");
    let kb_inv =
        b.0.k_matrix()
            .try_inverse()
            .expect("positive focal lengths");
    Ok(unit_frobenius(kb_inv.transpose() * essential * ka_inv))
}

/// Sampson error of one pair, or `None` when its denominator vanishes.
#[inline]
pub fn sampson_pair(f: &Matrix3<f64>, c: &Correspondence) -> Option<f64> {
    let (xa, xb) = (homogeneous(&c.0), homogeneous(&c.1));
    let fx = f * xa;
    let ftx = f.transpose() * xb;
    let num = xb.dot(&fx);
    let den = fx.x * fx.x + fx.y * fx.y + ftx.x * ftx.x + ftx.y * ftx.y;
    (den > SAMPSON_MIN_DENOMINATOR).then(|| num * num / den)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampsonSummary {
    /// Mean over retained pairs, in pixel².
    pub mean: f64,
    pub retained: usize,
    pub skipped: usize,
}

pub fn sampson_error(
    c: &[Correspondence],
    f: &Matrix3<f64>,
) -> Result<SampsonSummary, MetricError> {
    let values: Vec<f64> = c.iter().filter_map(|pair| sampson_pair(f, pair)).collect();
    if values.is_empty() {
        return Err(MetricError::EmptyAfterFiltering { skipped: c.len() });
    }
    Ok(SampsonSummary {
        mean: values.iter().sum::<f64>() / values.len() as f64,
        retained: values.len(),
        skipped: c.len() - values.len(),
    })
}

/// Robust estimation settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    /// Sampson inlier threshold in pixel².
    pub threshold: f64,
    pub max_iterations: usize,
    /// Target probability of drawing one all-inlier sample.
    pub confidence: f64,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        RansacParams {
            threshold: 1.0,
            max_iterations: 2000,
            confidence: 0.999,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FundamentalEstimate {
    pub f: Matrix3<f64>,
    pub inliers: Vec<bool>,
}

impl FundamentalEstimate {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|&&b| b).count()
    }
}

/// Similarity moving the centroid to the origin with mean distance √2.
fn normalizer(points: &[Pixel]) -> Option<Matrix3<f64>> {
    let n = points.len() as f64;
    let (mx, my) = points
        .iter()
        .fold((0.0, 0.0), |(x, y), p| (x + p.u / n, y + p.v / n));
    let mean_dist = points
        .iter()
        .map(|p| (p.u - mx).hypot(p.v - my))
        .sum::<f64>()
        / n;
    if !(mean_dist > 1e-12) {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Some(Matrix3::new(
        s,
        0.0,
        -s * mx,
        0.0,
        s,
        -s * my,
        0.0,
        0.0,
        1.0,
    ))
}

/// Normalized eight-point fit with rank-2 enforcement. `None` when the
/// configuration leaves the solution undetermined.
pub fn eight_point(c: &[Correspondence]) -> Option<Matrix3<f64>> {
    if c.len() < 8 {
        return None;
    }
    let pa: Vec<Pixel> = c.iter().map(|m| m.0).collect();
    let pb: Vec<Pixel> = c.iter().map(|m| m.1).collect();
    let ta = normalizer(&pa)?;
    let tb = normalizer(&pb)?;
    // Zero rows pad the system so the SVD always exposes all nine columns.
    let rows = c.len().max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, m) in c.iter().enumerate() {
        let xa = ta * homogeneous(&m.0);
        let xb = tb * homogeneous(&m.1);
        let (x, y) = (xa.x / xa.z, xa.y / xa.z);
        let (xp, yp) = (xb.x / xb.z, xb.y / xb.z);
        let row = [xp * x, xp * y, xp, yp * x, yp * y, yp, x, y, 1.0];
        for (j, v) in row.iter().enumerate() {
            a[(i, j)] = *v;
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let (smallest, second) = (order[0], order[1]);
    let largest = svd.singular_values[order[order.len() - 1]];
    if svd.singular_values[second] <= 1e-10 * largest {
        return None;
    }
    let fvec = v_t.row(smallest);
    let f = Matrix3::new(
        fvec[0], fvec[1], fvec[2], fvec[3], fvec[4], fvec[5], fvec[6], fvec[7], fvec[8],
    );

    let svd3 = f.svd(true, true);
    let (u, v_t) = (svd3.u?, svd3.v_t?);
    let mut s = svd3.singular_values;
    let min_i = s.imin();
    s[min_i] = 0.0;
    let rank2 = u * Matrix3::from_diagonal(&s) * v_t;

    let f = tb.transpose() * rank2 * ta;
    let norm = f.norm();
    (norm.is_finite() && norm > 0.0).then(|| f / norm)
}

fn score(f: &Matrix3<f64>, c: &[Correspondence], threshold: f64) -> (Vec<bool>, usize, f64) {
    let mut inliers = vec![false; c.len()];
    let mut count = 0;
    let mut err = 0.0;
    for (i, pair) in c.iter().enumerate() {
        if let Some(d) = sampson_pair(f, pair) {
            if d < threshold {
                inliers[i] = true;
                count += 1;
                err += d;
            }
        }
    }
    (inliers, count, err)
}

/// Random-sample consensus over eight-point fits, refit on the final inlier
/// set. Deterministic for a given seed.
pub fn fundamental_from_matches(
    c: &[Correspondence],
    params: &RansacParams,
) -> Result<FundamentalEstimate, MetricError> {
    if c.len() < 8 {
        return Err(MetricError::InsufficientMatches(c.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<(Matrix3<f64>, Vec<bool>, usize, f64)> = None;
    let mut needed = params.max_iterations;
    let mut iter = 0;
    while iter < needed.min(params.max_iterations) {
        iter += 1;
        let idx = sample(&mut rng, c.len(), 8);
        let subset: Vec<Correspondence> = idx.iter().map(|i| c[i]).collect();
        let Some(f) = eight_point(&subset) else {
            continue;
        };
        let (inliers, count, err) = score(&f, c, params.threshold);
        let better = match &best {
            None => true,
            Some((_, _, bc, be)) => count > *bc || (count == *bc && err < *be),
        };
        if better {
            let ratio = count as f64 / c.len() as f64;
            let miss = 1.0 - ratio.powi(8);
            needed = if miss <= f64::EPSILON {
                iter
            } else {
                ((1.0 - params.confidence).ln() / miss.ln()).ceil().max(1.0) as usize
            };
            best = Some((f, inliers, count, err));
        }
    }
    let (mut f, mut inliers, count, err) = best.ok_or(MetricError::DegenerateConfiguration)?;

    let inlier_set: Vec<Correspondence> = c
        .iter()
        .zip(&inliers)
        .filter_map(|(m, &ok)| ok.then_some(*m))
        .collect();
    if let Some(refit) = eight_point(&inlier_set) {
        let (ri, rc, re) = score(&refit, c, params.threshold);
        if rc > count || (rc == count && re <= err) {
            (f, inliers) = (refit, ri);
        }
    }
    Ok(FundamentalEstimate { f, inliers })
}

/// Matches induced by a flow field on a `grid × grid` lattice of pixels.
/// Samples with invalid flow or a target outside the image are dropped.
pub fn grid_correspondences(flow: &FlowField, grid: usize) -> Vec<Correspondence> {
    let (w, h) = flow.dims();
    let mut out = Vec::with_capacity(grid * grid);
    for gy in 0..grid {
        let y = ((gy as f64 + 0.5) * h as f64 / grid as f64).floor() as usize;
        for gx in 0..grid {
            let x = ((gx as f64 + 0.5) * w as f64 / grid as f64).floor() as usize;
            let Some([du, dv]) = flow.get(x.min(w - 1), y.min(h - 1)) else {
                continue;
            };
            let a = Pixel::new(x as f64, y as f64);
            let b = Pixel::new(a.u + du as f64, a.v + dv as f64);
            if b.u >= 0.0 && b.v >= 0.0 && b.u <= (w - 1) as f64 && b.v <= (h - 1) as f64 {
                out.push((a, b));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{project, transform_point, Direction, Vec3};
    use nalgebra::UnitQuaternion;
    use rand::Rng;

    fn cam() -> CameraIntrinsics {
        CameraIntrinsics::new(
            CameraModel::Perspective,
            300.0,
            310.0,
            160.0,
            120.0,
            320,
            240,
        )
        .unwrap()
    }

    fn pose_pair() -> (Pose, Pose) {
        (
            Pose::new(
                UnitQuaternion::from_euler_angles(0.01, -0.02, 0.005),
                Vec3::new(0.1, 0.0, 0.0),
            ),
            Pose::new(
                UnitQuaternion::from_euler_angles(-0.03, 0.04, 0.01),
                Vec3::new(0.4, 0.1, 0.05),
            ),
        )
    }

    fn scene_matches(n: usize, seed: u64) -> Vec<Correspondence> {
        let (pa, pb) = pose_pair();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = cam();
        let mut out = Vec::new();
        while out.len() < n {
            let world = Vec3::new(
                rng.random_range(-3.0..3.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(4.0..12.0),
            );
            let a = project(&transform_point(&world, &pa, Direction::WorldToCam), &c);
            let b = project(&transform_point(&world, &pb, Direction::WorldToCam), &c);
            if let (Ok(a), Ok(b)) = (a, b) {
                out.push((a, b));
            }
        }
        out
    }

    fn gt_f() -> Matrix3<f64> {
        let (pa, pb) = pose_pair();
        fundamental_from_poses((&cam(), &pa), (&cam(), &pb)).unwrap()
    }

    fn same_up_to_sign(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
        (a - b).norm().min((a + b).norm())
    }

    #[test]
    fn gt_fundamental_annihilates_true_matches() {
        let f = gt_f();
        assert!((f.norm() - 1.0).abs() < 1e-12);
        for (a, b) in scene_matches(200, 1) {
            assert!(homogeneous(&b).dot(&(f * homogeneous(&a))).abs() < 1e-6);
        }
        assert!(f.determinant().abs() < 1e-12);
        let s = sampson_error(&scene_matches(200, 2), &f).unwrap();
        assert!(s.mean < 1e-12);
    }

    #[test]
    fn identical_poses_are_degenerate() {
        let p = pose_pair().0;
        assert_eq!(
            fundamental_from_poses((&cam(), &p), (&cam(), &p)),
            Err(MetricError::DegenerateBaseline)
        );
        let fish = cam().with_model(CameraModel::FisheyeEquidistant);
        let (pa, pb) = pose_pair();
        assert!(matches!(
            fundamental_from_poses((&fish, &pa), (&cam(), &pb)),
            Err(MetricError::UnsupportedModel(_))
        ));
    }

    #[test]
    fn swapping_cameras_transposes() {
        let (pa, pb) = pose_pair();
        let ab = fundamental_from_poses((&cam(), &pa), (&cam(), &pb)).unwrap();
        let ba = fundamental_from_poses((&cam(), &pb), (&cam(), &pa)).unwrap();
        assert!(same_up_to_sign(&ab.transpose(), &ba) < 1e-12);
    }

    #[test]
    fn sampson_scalar_oracle() {
        let f = Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        let pair = (Pixel::new(10.0, 20.0), Pixel::new(35.0, 22.0));
        // Fx1 = (0, -1, 20); F^T x2 = (0, 1, -22); x2^T F x1 = -22 + 20 = -2.
        let (fx0, fx1, ftx0, ftx1, e) = (0.0f64, -1.0f64, 0.0f64, 1.0f64, -2.0f64);
        let oracle = e * e / (fx0 * fx0 + fx1 * fx1 + ftx0 * ftx0 + ftx1 * ftx1);
        let got = sampson_error(&[pair], &f).unwrap();
        assert_eq!(got.mean, oracle);
        assert_eq!(oracle, 2.0);
        for lambda in [-3.0, 0.25, 1e6] {
            let scaled = sampson_error(&[pair], &(f * lambda)).unwrap().mean;
            assert!((scaled - oracle).abs() < 1e-9);
        }
        let on_line = (Pixel::new(10.0, 20.0), Pixel::new(99.0, 20.0));
        assert_eq!(sampson_error(&[on_line], &f).unwrap().mean, 0.0);
    }

    #[test]
    fn empty_after_filtering() {
        let zero = Matrix3::zeros();
        let pair = (Pixel::new(1.0, 1.0), Pixel::new(2.0, 2.0));
        assert_eq!(
            sampson_error(&[pair, pair], &zero),
            Err(MetricError::EmptyAfterFiltering { skipped: 2 })
        );
    }

    #[test]
    fn seven_matches_are_insufficient() {
        let m = scene_matches(7, 3);
        assert_eq!(
            fundamental_from_matches(&m, &RansacParams::default()),
            Err(MetricError::InsufficientMatches(7))
        );
    }

    #[test]
    fn noiseless_matches_recover_gt() {
        let m = scene_matches(100, 4);
        let est = fundamental_from_matches(&m, &RansacParams::default()).unwrap();
        assert_eq!(est.inlier_count(), 100);
        assert!(same_up_to_sign(&est.f, &gt_f()) < 1e-3);
        let minimal = eight_point(&m[..8]).unwrap();
        assert!(same_up_to_sign(&minimal, &gt_f()) < 1e-3);
    }

    #[test]
    fn gross_outliers_are_rejected() {
        let mut m = scene_matches(140, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n_out = 60;
        for pair in m.iter_mut().take(n_out) {
            pair.1 = Pixel::new(rng.random_range(0.0..320.0), rng.random_range(0.0..240.0));
        }
        let est = fundamental_from_matches(
            &m,
            &RansacParams {
                seed: 42,
                ..Default::default()
            },
        )
        .unwrap();
        let excluded = est.inliers[..n_out].iter().filter(|&&b| !b).count();
        assert!(
            excluded as f64 >= 0.95 * n_out as f64,
            "excluded {excluded}"
        );
        assert!(est.inliers[n_out..].iter().all(|&b| b));
        let again = fundamental_from_matches(
            &m,
            &RansacParams {
                seed: 42,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(est, again);
    }

    #[test]
    fn planar_scene_is_degenerate() {
        // All points on one plane: the eight-point null space is not unique.
        let (pa, pb) = pose_pair();
        let c = cam();
        let m: Vec<Correspondence> = (0..40)
            .map(|i| {
                let world = Vec3::new((i % 8) as f64 * 0.5 - 2.0, (i / 8) as f64 * 0.4 - 1.0, 6.0);
                (
                    project(&transform_point(&world, &pa, Direction::WorldToCam), &c).unwrap(),
                    project(&transform_point(&world, &pb, Direction::WorldToCam), &c).unwrap(),
                )
            })
            .collect();
        assert_eq!(
            fundamental_from_matches(&m, &RansacParams::default()),
            Err(MetricError::DegenerateConfiguration)
        );
    }

    #[test]
    fn grid_samples_follow_flow() {
        let flow = FlowField::from_fn(64, 64, |x, _| (x < 60).then_some([1.5, -0.5]));
        let m = grid_correspondences(&flow, 32);
        assert!(!m.is_empty() && m.len() < 32 * 32);
        for (a, b) in &m {
            assert_eq!((b.u - a.u, b.v - a.v), (1.5, -0.5));
        }
    }
}
