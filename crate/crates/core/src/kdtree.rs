//! Exact nearest-neighbor search over 3D points.

use nalgebra::Vector3;

const LEAF: usize = 8;

/// Static k-d tree stored as a permutation of point indices; each range is
/// split at its median along `depth % 3`.
pub struct KdTree<'a> {
    points: &'a [Vector3<f64>],
    order: Vec<usize>,
}

impl<'a> KdTree<'a> {
    pub fn new(points: &'a [Vector3<f64>]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        build(points, &mut order, 0);
        KdTree { points, order }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of and squared distance to the nearest point; `None` on an
    /// empty tree. Ties resolve to the smaller index.
    pub fn nearest(&self, q: &Vector3<f64>) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(q, 0, self.order.len(), 0, &mut best);
        Some(best)
    }

    pub fn nearest_distance(&self, q: &Vector3<f64>) -> Option<f64> {
        self.nearest(q).map(|(_, d2)| d2.sqrt())
    }

    fn search(&self, q: &Vector3<f64>, lo: usize, hi: usize, depth: usize, best: &mut (usize, f64)) {
        if hi - lo <= LEAF {
            for &i in &self.order[lo..hi] {
                let d2 = (self.points[i] - q).norm_squared();
                if d2 < best.1 || (d2 == best.1 && i < best.0) {
                    *best = (i, d2);
                }
            }
            return;
        }
        let mid = (lo + hi) / 2;
        let axis = depth % 3;
        let pivot = self.order[mid];
        let diff = q[axis] - self.points[pivot][axis];
        let (near, far) = if diff < 0.0 { ((lo, mid), (mid + 1, hi)) } else { ((mid + 1, hi), (lo, mid)) };
        let d2 = (self.points[pivot] - q).norm_squared();
        if d2 < best.1 || (d2 == best.1 && pivot < best.0) {
            *best = (pivot, d2);
        }
        self.search(q, near.0, near.1, depth + 1, best);
        if diff * diff <= best.1 {
            self.search(q, far.0, far.1, depth + 1, best);
        }
    }
}

fn build(points: &[Vector3<f64>], order: &mut [usize], depth: usize) {
    if order.len() <= LEAF {
        return;
    }
    let axis = depth % 3;
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b)));
    let (left, right) = order.split_at_mut(mid);
    build(points, left, depth + 1);
    build(points, &mut right[1..], depth + 1);
}

/// Mean nearest-neighbor distance from each point of `from` to `to`.
pub fn mean_nn_distance(from: &[Vector3<f64>], to: &KdTree) -> f64 {
    if from.is_empty() {
        return 0.0;
    }
    from.iter().map(|p| to.nearest_distance(p).unwrap_or(f64::INFINITY)).sum::<f64>() / from.len() as f64
}

/// Symmetric Chamfer distance: the mean of both directed mean
/// nearest-neighbor distances.
pub fn chamfer(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> f64 {
    let (ta, tb) = (KdTree::new(a), KdTree::new(b));
    0.5 * (mean_nn_distance(a, &tb) + mean_nn_distance(b, &ta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(points: &[Vector3<f64>], q: &Vector3<f64>) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for (i, p) in points.iter().enumerate() {
            let d2 = (p - q).norm_squared();
            if d2 < best.1 {
                best = (i, d2);
            }
        }
        best
    }

    fn arb_points(max: usize) -> impl Strategy<Value = Vec<Vector3<f64>>> {
        prop::collection::vec(prop::array::uniform3(-5.0f64..5.0).prop_map(Vector3::from), 1..max)
    }

    proptest! {
        #[test]
        fn matches_brute_force(points in arb_points(300), queries in arb_points(40)) {
            let tree = KdTree::new(&points);
            for q in &queries {
                let (i, d2) = tree.nearest(q).unwrap();
                let (j, e2) = brute(&points, q);
                prop_assert_eq!(d2, e2);
                prop_assert_eq!(i, j);
            }
        }

        #[test]
        fn chamfer_symmetric(a in arb_points(60), b in arb_points(60)) {
            prop_assert!((chamfer(&a, &b) - chamfer(&b, &a)).abs() < 1e-12);
            prop_assert!(chamfer(&a, &a).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicates_and_grid() {
        let mut pts = Vec::new();
        for x in 0..10 {
            for y in 0..10 {
                pts.push(Vector3::new(x as f64, y as f64, 0.0));
                pts.push(Vector3::new(x as f64, y as f64, 0.0));
            }
        }
        let tree = KdTree::new(&pts);
        let (i, d2) = tree.nearest(&Vector3::new(3.2, 4.1, 0.0)).unwrap();
        assert_eq!(pts[i], Vector3::new(3.0, 4.0, 0.0));
        assert_eq!(i, 2 * (3 * 10 + 4));
        assert!((d2 - 0.05).abs() < 1e-12);
        assert!(KdTree::new(&[]).nearest(&Vector3::zeros()).is_none());
    }

    #[test]
    fn single_points() {
        let a = [Vector3::new(0.0, 0.0, 0.0)];
        let b = [Vector3::new(0.1, 0.0, 0.0)];
        assert!((chamfer(&a, &b) - 0.1).abs() < 1e-15);
    }
}
