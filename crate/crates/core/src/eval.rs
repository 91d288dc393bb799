//! Trajectory and reconstruction accuracy.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::geom::Pose;
use crate::kdtree::KdTree;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{path}:{line}: {reason}")]
    Parse { path: PathBuf, line: usize, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("no timestamps could be associated")]
    NoMatches,
    #[error("point configuration is degenerate: {0}")]
    DegenerateConfiguration(String),
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("timestamps must be strictly increasing (line {0})")]
    NonMonotone(usize),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub stamps: Vec<f64>,
    pub poses: Vec<Pose>,
}

impl Trajectory {
    pub fn new(stamps: Vec<f64>, poses: Vec<Pose>) -> Result<Self, EvalError> {
        assert_eq!(stamps.len(), poses.len());
        if let Some(i) = stamps.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(EvalError::NonMonotone(i + 2));
        }
        Ok(Trajectory { stamps, poses })
    }

    pub fn len(&self) -> usize {
        self.stamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stamps.is_empty()
    }

    pub fn centers(&self) -> Vec<Vector3<f64>> {
        self.poses.iter().map(Pose::center).collect()
    }

    /// `timestamp tx ty tz qx qy qz qw` lines (camera center and
    /// world-from-camera rotation).
    pub fn to_tum(&self) -> String {
        let mut s = String::new();
        for (t, p) in self.stamps.iter().zip(&self.poses) {
            let (c, q) = p.to_tum();
            writeln!(s, "{t:.6} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9}", c.x, c.y, c.z, q.i, q.j, q.k, q.w).unwrap();
        }
        s
    }

    pub fn parse_tum(text: &str, path: &Path) -> Result<Self, EvalError> {
        let mut stamps = Vec::new();
        let mut poses = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fail = |reason: String| EvalError::Parse { path: path.to_path_buf(), line: i + 1, reason };
            let vals: Vec<f64> = line
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<f64>().map_err(|e| fail(format!("{t:?}: {e}"))))
                .collect::<Result<_, _>>()?;
            if vals.len() != 8 {
                return Err(fail(format!("expected 8 values, found {}", vals.len())));
            }
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(fail("non-finite value".into()));
            }
            let q = nalgebra::Quaternion::new(vals[7], vals[4], vals[5], vals[6]);
            if q.norm() < 1e-9 {
                return Err(fail("zero quaternion".into()));
            }
            if stamps.last().is_some_and(|&prev| !(vals[0] > prev)) {
                return Err(fail("timestamps must be strictly increasing".into()));
            }
            stamps.push(vals[0]);
            poses.push(Pose::from_tum(Vector3::new(vals[1], vals[2], vals[3]), UnitQuaternion::from_quaternion(q)));
        }
        Ok(Trajectory { stamps, poses })
    }

    pub fn read_tum(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io { path: path.to_path_buf(), source })?;
        Self::parse_tum(&text, path)
    }
}

/// Greedy nearest-timestamp matching within `max_dt`; each entry is used
/// at most once. Returns `(est index, gt index)` pairs in est order.
pub fn associate(est: &[f64], gt: &[f64], max_dt: f64) -> Result<Vec<(usize, usize)>, EvalError> {
    let mut pairs = Vec::new();
    for (i, &t) in est.iter().enumerate() {
        let start = gt.partition_point(|&g| g < t - max_dt);
        for (j, &g) in gt.iter().enumerate().skip(start) {
            if g > t + max_dt {
                break;
            }
            pairs.push(((t - g).abs(), i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_e = vec![false; est.len()];
    let mut used_g = vec![false; gt.len()];
    let mut out = Vec::new();
    for (_, i, j) in pairs {
        if !used_e[i] && !used_g[j] {
            used_e[i] = true;
            used_g[j] = true;
            out.push((i, j));
        }
    }
    if out.is_empty() {
        return Err(EvalError::NoMatches);
    }
    out.sort_unstable();
    Ok(out)
}

/// `p ↦ s R p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Similarity {
    pub fn identity() -> Self {
        Similarity { scale: 1.0, rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p * self.scale + self.translation
    }

    pub fn then(&self, next: &Similarity) -> Similarity {
        Similarity {
            scale: next.scale * self.scale,
            rotation: next.rotation * self.rotation,
            translation: next.apply(&self.translation),
        }
    }
}

/// Least-squares fit without degeneracy checks; rank-deficient inputs get
/// one of the equally optimal rotations.
fn umeyama(est: &[Vector3<f64>], gt: &[Vector3<f64>], with_scale: bool) -> Similarity {
    let n = est.len() as f64;
    let mu_e = est.iter().sum::<Vector3<f64>>() / n;
    let mu_g = gt.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    let mut var_e = 0.0;
    for (e, g) in est.iter().zip(gt) {
        let (de, dg) = (e - mu_e, g - mu_g);
        cov += dg * de.transpose();
        var_e += de.norm_squared();
    }
    cov /= n;
    var_e /= n;
    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut s = Matrix3::identity();
    if (u.determinant() * v_t.determinant()) < 0.0 {
        s[(2, 2)] = -1.0;
    }
    let rotation = u * s * v_t;
    let scale = if with_scale && var_e > 0.0 {
        (svd.singular_values.component_mul(&s.diagonal())).sum() / var_e
    } else {
        1.0
    };
    let translation = mu_g - rotation * mu_e * scale;
    Similarity { scale, rotation, translation }
}

/// Similarity (or rigid, without scale) transform minimizing
/// `Σ ‖gt − (s R est + t)‖²`.
pub fn align_umeyama(est: &[Vector3<f64>], gt: &[Vector3<f64>], with_scale: bool) -> Result<Similarity, EvalError> {
    assert_eq!(est.len(), gt.len());
    if est.len() < 3 {
        return Err(EvalError::DegenerateConfiguration(format!("{} point pairs", est.len())));
    }
    for (name, pts) in [("estimate", est), ("reference", gt)] {
        let mu = pts.iter().sum::<Vector3<f64>>() / pts.len() as f64;
        let mut m = Matrix3::zeros();
        for p in pts {
            m += (p - mu) * (p - mu).transpose();
        }
        let sv = m.singular_values();
        let largest = sv.max();
        let mut sorted: Vec<f64> = sv.iter().copied().collect();
        sorted.sort_by(|a, b| b.total_cmp(a));
        if largest <= 0.0 || sorted[1] <= 1e-12 * largest {
            return Err(EvalError::DegenerateConfiguration(format!("{name} points are collinear or coincident")));
        }
    }
    Ok(umeyama(est, gt, with_scale))
}

fn rmse(est: &[Vector3<f64>], gt: &[Vector3<f64>], t: &Similarity) -> f64 {
    (est.iter().zip(gt).map(|(e, g)| (g - t.apply(e)).norm_squared()).sum::<f64>() / est.len() as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AteResult {
    pub rmse: f64,
    pub n_matched: usize,
    pub alignment: Similarity,
}

/// RMSE of camera-center errors after associating timestamps and aligning.
///
/// Collinear trajectories are accepted: the rotation about the line is
/// undetermined but the residual is not.
pub fn ate_rmse(est: &Trajectory, gt: &Trajectory, max_dt: f64, with_scale: bool) -> Result<AteResult, EvalError> {
    let pairs = associate(&est.stamps, &gt.stamps, max_dt)?;
    let (ec, gc) = (est.centers(), gt.centers());
    let e: Vec<_> = pairs.iter().map(|&(i, _)| ec[i]).collect();
    let g: Vec<_> = pairs.iter().map(|&(_, j)| gc[j]).collect();
    Ok(ate_from_points(&e, &g, with_scale))
}

pub fn ate_from_points(est: &[Vector3<f64>], gt: &[Vector3<f64>], with_scale: bool) -> AteResult {
    let fit = umeyama(est, gt, with_scale);
    let (r_fit, r_id) = (rmse(est, gt, &fit), rmse(est, gt, &Similarity::identity()));
    // the identity is a valid candidate and wins exact ties
    let (rmse, alignment) = if r_id <= r_fit { (r_id, Similarity::identity()) } else { (r_fit, fit) };
    AteResult { rmse, n_matched: est.len(), alignment }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregate {
    #[default]
    Mean,
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconOptions {
    pub align: bool,
    pub with_scale: bool,
    pub aggregate: Aggregate,
    pub icp_iterations: usize,
    /// Use every n-th predicted point as an ICP correspondence.
    pub icp_subsample: usize,
}

impl Default for ReconOptions {
    fn default() -> Self {
        ReconOptions { align: false, with_scale: false, aggregate: Aggregate::Mean, icp_iterations: 30, icp_subsample: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconResult {
    pub accuracy: f64,
    pub completion: f64,
    pub chamfer: f64,
    pub alignment: Option<Similarity>,
}

fn aggregate(mut d: Vec<f64>, how: Aggregate) -> f64 {
    match how {
        Aggregate::Mean => d.iter().sum::<f64>() / d.len() as f64,
        Aggregate::Median => crate::geom::median_in_place(&mut d).unwrap_or(f64::NAN),
    }
}

fn nn_distances(from: &[Vector3<f64>], to: &KdTree) -> Vec<f64> {
    from.iter().map(|p| to.nearest_distance(p).expect("non-empty tree")).collect()
}

/// Aligns `pred` onto `gt` by iterating nearest-neighbor correspondences
/// and closed-form fits, keeping only steps that reduce the mean distance.
pub fn icp(pred: &[Vector3<f64>], gt_tree: &KdTree, gt: &[Vector3<f64>], opts: &ReconOptions) -> Similarity {
    let step = opts.icp_subsample.max(1);
    let sample: Vec<Vector3<f64>> = pred.iter().step_by(step).copied().collect();
    let mut total = Similarity::identity();
    let mut current = sample.clone();
    let mut err = nn_distances(&current, gt_tree).iter().sum::<f64>() / current.len() as f64;
    for _ in 0..opts.icp_iterations {
        if err == 0.0 || current.len() < 3 {
            break;
        }
        let targets: Vec<Vector3<f64>> = current.iter().map(|p| gt[gt_tree.nearest(p).unwrap().0]).collect();
        let fit = umeyama(&current, &targets, opts.with_scale);
        let moved: Vec<Vector3<f64>> = current.iter().map(|p| fit.apply(p)).collect();
        let new_err = nn_distances(&moved, gt_tree).iter().sum::<f64>() / moved.len() as f64;
        if !(new_err < err) {
            break;
        }
        let gain = err - new_err;
        total = total.then(&fit);
        current = moved;
        err = new_err;
        if gain <= 1e-12 * err.max(1e-12) {
            break;
        }
    }
    total
}

/// Accuracy (pred → gt), completion (gt → pred) and their average.
pub fn recon_metrics(pred: &[Vector3<f64>], gt: &[Vector3<f64>], opts: &ReconOptions) -> Result<ReconResult, EvalError> {
    if pred.is_empty() || gt.is_empty() {
        return Err(EvalError::EmptyCloud);
    }
    let gt_tree = KdTree::new(gt);
    let (pred, alignment): (std::borrow::Cow<[Vector3<f64>]>, _) = if opts.align {
        let t = icp(pred, &gt_tree, gt, opts);
        (pred.iter().map(|p| t.apply(p)).collect::<Vec<_>>().into(), Some(t))
    } else {
        (pred.into(), None)
    };
    let pred_tree = KdTree::new(&pred);
    let accuracy = aggregate(nn_distances(&pred, &gt_tree), opts.aggregate);
    let completion = aggregate(nn_distances(gt, &pred_tree), opts.aggregate);
    Ok(ReconResult { accuracy, completion, chamfer: 0.5 * (accuracy + completion), alignment })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ate_rmse: Option<f64>,
    pub accuracy: Option<f64>,
    pub completion: Option<f64>,
    pub chamfer: Option<f64>,
    pub n_matched: Option<usize>,
    pub alignment: Option<Similarity>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix4, Rotation3, SymmetricEigen};
    use proptest::prelude::*;

    /// Horn's closed form: rotation from the dominant eigenvector of the
    /// 4×4 quaternion matrix.
    fn horn(est: &[Vector3<f64>], gt: &[Vector3<f64>], with_scale: bool) -> (f64, Matrix3<f64>, Vector3<f64>) {
        let n = est.len() as f64;
        let ce = est.iter().sum::<Vector3<f64>>() / n;
        let cg = gt.iter().sum::<Vector3<f64>>() / n;
        let mut m = Matrix3::zeros();
        for (e, g) in est.iter().zip(gt) {
            m += (e - ce) * (g - cg).transpose();
        }
        let (sxx, sxy, sxz) = (m[(0, 0)], m[(0, 1)], m[(0, 2)]);
        let (syx, syy, syz) = (m[(1, 0)], m[(1, 1)], m[(1, 2)]);
        let (szx, szy, szz) = (m[(2, 0)], m[(2, 1)], m[(2, 2)]);
        let nm = Matrix4::new(
            sxx + syy + szz, syz - szy, szx - sxz, sxy - syx,
            syz - szy, sxx - syy - szz, sxy + syx, szx + sxz,
            szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy,
            sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz,
        );
        let eig = SymmetricEigen::new(nm);
        let (mut best, mut idx) = (f64::NEG_INFINITY, 0);
        for i in 0..4 {
            if eig.eigenvalues[i] > best {
                best = eig.eigenvalues[i];
                idx = i;
            }
        }
        let q = eig.eigenvectors.column(idx);
        let r = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]))
            .to_rotation_matrix()
            .into_inner();
        let s = if with_scale {
            let num: f64 = est.iter().zip(gt).map(|(e, g)| (g - cg).dot(&(r * (e - ce)))).sum();
            let den: f64 = est.iter().map(|e| (e - ce).norm_squared()).sum();
            num / den
        } else {
            1.0
        };
        (s, r, cg - r * ce * s)
    }

    fn brute_nn_mean(from: &[Vector3<f64>], to: &[Vector3<f64>]) -> f64 {
        from.iter()
            .map(|p| to.iter().map(|q| (p - q).norm_squared()).fold(f64::INFINITY, f64::min).sqrt())
            .sum::<f64>()
            / from.len() as f64
    }

    fn arb_cloud(n: usize) -> impl Strategy<Value = Vec<Vector3<f64>>> {
        prop::collection::vec(prop::array::uniform3(-3.0f64..3.0).prop_map(Vector3::from), 3..n)
    }

    proptest! {
        #[test]
        fn umeyama_matches_horn(est in arb_cloud(60), w in prop::array::uniform3(-2.0f64..2.0), t in prop::array::uniform3(-4.0f64..4.0), s in 0.3f64..3.0, noise in 0.0f64..0.1, with_scale in any::<bool>()) {
            let rot = Rotation3::new(Vector3::from(w)).into_inner();
            let gt: Vec<_> = est.iter().enumerate()
                .map(|(i, e)| rot * e * s + Vector3::from(t) + Vector3::new(noise * ((i * 7 % 5) as f64 - 2.0), 0.0, noise * ((i % 3) as f64 - 1.0)))
                .collect();
            prop_assume!(align_umeyama(&est, &gt, with_scale).is_ok());
            let ours = ate_from_points(&est, &gt, with_scale);
            let (hs, hr, ht) = horn(&est, &gt, with_scale);
            let oracle = (est.iter().zip(&gt).map(|(e, g)| (g - (hr * e * hs + ht)).norm_squared()).sum::<f64>() / est.len() as f64).sqrt();
            prop_assert!((ours.rmse - oracle).abs() < 1e-12, "{} vs {}", ours.rmse, oracle);
        }

        #[test]
        fn recon_matches_brute_force(a in arb_cloud(120), b in arb_cloud(120)) {
            let r = recon_metrics(&a, &b, &ReconOptions::default()).unwrap();
            prop_assert!((r.accuracy - brute_nn_mean(&a, &b)).abs() < 1e-12);
            prop_assert!((r.completion - brute_nn_mean(&b, &a)).abs() < 1e-12);
            let swapped = recon_metrics(&b, &a, &ReconOptions::default()).unwrap();
            prop_assert_eq!(r.accuracy, swapped.completion);
        }

        #[test]
        fn ate_rigid_invariance(est in arb_cloud(40), w in prop::array::uniform3(-2.0f64..2.0), t in prop::array::uniform3(-4.0f64..4.0)) {
            let gt: Vec<_> = est.iter().map(|e| e + Vector3::new(0.01 * e.y, -0.02 * e.x, 0.015)).collect();
            let rot = Rotation3::new(Vector3::from(w)).into_inner();
            let moved: Vec<_> = est.iter().map(|e| rot * e + Vector3::from(t)).collect();
            let a = ate_from_points(&est, &gt, false).rmse;
            let b = ate_from_points(&moved, &gt, false).rmse;
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    fn traj(centers: &[[f64; 3]]) -> Trajectory {
        let stamps = (0..centers.len()).map(|i| i as f64 * 0.1).collect();
        let poses = centers.iter().map(|c| Pose::identity().with_center(Vector3::from(*c))).collect();
        Trajectory::new(stamps, poses).unwrap()
    }

    #[test]
    fn association_examples() {
        let t: Vec<f64> = (0..5).map(|i| i as f64 * 0.1).collect();
        assert_eq!(associate(&t, &t, 0.02).unwrap().len(), 5);
        let shifted: Vec<f64> = t.iter().map(|x| x + 0.04).collect();
        assert!(matches!(associate(&t, &shifted, 0.02), Err(EvalError::NoMatches)));
        let jitter: Vec<f64> = t.iter().enumerate().map(|(i, x)| x + if i % 2 == 0 { 0.005 } else { -0.005 }).collect();
        assert_eq!(associate(&t, &jitter, 0.02).unwrap(), (0..5).map(|i| (i, i)).collect::<Vec<_>>());
    }

    #[test]
    fn umeyama_examples() {
        let pts = [Vector3::new(0.0, 0.0, 0.0), Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 2.0, 0.0), Vector3::new(0.0, 0.0, 3.0)];
        let id = align_umeyama(&pts, &pts, true).unwrap();
        assert!((id.scale - 1.0).abs() < 1e-12 && (id.rotation - Matrix3::identity()).abs().max() < 1e-12 && id.translation.norm() < 1e-12);
        let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2).into_inner();
        let gt: Vec<_> = pts.iter().map(|p| rz * p * 2.0).collect();
        let t = align_umeyama(&pts, &gt, true).unwrap();
        assert!((t.scale - 2.0).abs() < 1e-12);
        assert!((t.rotation - rz).abs().max() < 1e-12);
        assert!(matches!(align_umeyama(&pts[..2], &gt[..2], true), Err(EvalError::DegenerateConfiguration(_))));
        let line: Vec<_> = (0..4).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        assert!(align_umeyama(&line, &line, false).is_err());
    }

    #[test]
    fn ate_examples() {
        let gt = traj(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [2.0, 1.0, 0.5]]);
        assert_eq!(ate_rmse(&gt, &gt, 0.01, false).unwrap().rmse, 0.0);
        let offset = traj(&[[5.0, 1.0, 0.0], [6.0, 1.0, 0.0], [7.0, 1.0, 0.0], [7.0, 2.0, 0.5]]);
        assert!(ate_rmse(&offset, &gt, 0.01, false).unwrap().rmse < 1e-12);
        // three-pose toy against the rotation oracle
        let g = [Vector3::new(0.0, 0.0, 0.0), Vector3::new(1.0, 0.0, 0.0), Vector3::new(2.0, 0.0, 0.0)];
        let e = [Vector3::new(0.0, 0.0, 0.0), Vector3::new(1.0, 0.0, 0.3), Vector3::new(2.0, 0.0, 0.0)];
        let ours = ate_from_points(&e, &g, false).rmse;
        let (hs, hr, ht) = horn(&e, &g, false);
        let oracle = (e.iter().zip(&g).map(|(a, b)| (b - (hr * a * hs + ht)).norm_squared()).sum::<f64>() / 3.0).sqrt();
        assert!((ours - oracle).abs() < 1e-12);
        // best rigid fit spreads the 0.3 bump: residuals (0.1, 0.2, 0.1)
        assert!((ours - (0.06f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn recon_examples() {
        let gt = vec![Vector3::new(0.0, 0.0, 0.0)];
        let r = recon_metrics(&gt, &gt, &ReconOptions::default()).unwrap();
        assert_eq!((r.accuracy, r.completion, r.chamfer), (0.0, 0.0, 0.0));
        let pred = vec![Vector3::new(0.0, 0.0, 0.0), Vector3::new(1.0, 0.0, 0.0)];
        let r = recon_metrics(&pred, &gt, &ReconOptions::default()).unwrap();
        assert_eq!((r.accuracy, r.completion, r.chamfer), (0.5, 0.0, 0.25));
        assert!(matches!(recon_metrics(&[], &gt, &ReconOptions::default()), Err(EvalError::EmptyCloud)));
        let med = ReconOptions { aggregate: Aggregate::Median, ..ReconOptions::default() };
        assert_eq!(recon_metrics(&pred, &gt, &med).unwrap().accuracy, 0.5);
    }

    #[test]
    fn icp_recovers_offset() {
        let gt: Vec<_> = (0..10)
            .flat_map(|i| (0..10).map(move |j| Vector3::new(i as f64 * 0.1, j as f64 * 0.1, ((i * j) as f64 * 0.3).sin() * 0.2)))
            .collect();
        let pred: Vec<_> = gt.iter().map(|p| p + Vector3::new(0.02, -0.01, 0.015)).collect();
        let opts = ReconOptions { align: true, ..ReconOptions::default() };
        let r = recon_metrics(&pred, &gt, &opts).unwrap();
        assert!(r.chamfer < 1e-6, "{}", r.chamfer);
        let same = recon_metrics(&gt, &gt, &opts).unwrap();
        assert_eq!(same.chamfer, 0.0);
    }

    #[test]
    fn tum_round_trip_and_errors() {
        let gt = traj(&[[0.0, 0.0, 0.0], [1.0, 0.5, 0.0], [2.0, 0.0, -1.0]]);
        let back = Trajectory::parse_tum(&gt.to_tum(), Path::new("mem")).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in gt.poses.iter().zip(&back.poses) {
            assert!(a.max_abs_diff(b) < 1e-8);
        }
        let err = Trajectory::parse_tum("# c\n0 0 0 0 0 0 0 1\n1 0 0 x 0 0 0 1\n", Path::new("f.txt")).unwrap_err();
        assert!(matches!(err, EvalError::Parse { line: 3, .. }), "{err}");
        let err = Trajectory::parse_tum("1 0 0 0 0 0 0 1\n0 0 0 0 0 0 0 1\n", Path::new("f.txt")).unwrap_err();
        assert!(matches!(err, EvalError::Parse { line: 2, .. }));
    }
}
