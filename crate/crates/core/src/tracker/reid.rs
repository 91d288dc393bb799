//! Re-identification of new sub-tracklets against known objects.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::kdtree::chamfer;

/// Axis-aligned box in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vector3<f64>>) -> Option<Aabb> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut b = Aabb { min: [first.x, first.y, first.z], max: [first.x, first.y, first.z] };
        for p in it {
            b.include(p);
        }
        Some(b)
    }

    pub fn include(&mut self, p: &Vector3<f64>) {
        for a in 0..3 {
            self.min[a] = self.min[a].min(p[a]);
            self.max[a] = self.max[a].max(p[a]);
        }
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        let mut b = *self;
        for a in 0..3 {
            b.min[a] = b.min[a].min(other.min[a]);
            b.max[a] = b.max[a].max(other.max[a]);
        }
        b
    }

    /// Grown by `pad` on every side, so flat or single-point clouds still
    /// have volume.
    pub fn padded(&self, pad: f64) -> Aabb {
        Aabb { min: self.min.map(|x| x - pad), max: self.max.map(|x| x + pad) }
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|a| (self.max[a] - self.min[a]).max(0.0)).product()
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn center(&self) -> Vector3<f64> {
        Vector3::new(
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
            0.5 * (self.min[2] + self.max[2]),
        )
    }

    pub fn iou(&self, other: &Aabb) -> f64 {
        let inter: f64 = (0..3)
            .map(|a| (self.max[a].min(other.max[a]) - self.min[a].max(other.min[a])).max(0.0))
            .product();
        let union = self.volume() + other.volume() - inter;
        if union > 0.0 { inter / union } else { 0.0 }
    }
}

/// Greedy one-to-one matching over scored pairs `(new, old, score)`,
/// best score first; ties go to the lower new index, then the lower old
/// index.
fn greedy(mut pairs: Vec<(usize, usize, f64)>, higher_is_better: bool) -> Vec<(usize, usize)> {
    pairs.sort_by(|a, b| {
        let ord = if higher_is_better { b.2.total_cmp(&a.2) } else { a.2.total_cmp(&b.2) };
        ord.then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1))
    });
    let mut used_new = std::collections::HashSet::new();
    let mut used_old = std::collections::HashSet::new();
    let mut out = Vec::new();
    for (n, o, _) in pairs {
        if !used_new.contains(&n) && !used_old.contains(&o) {
            used_new.insert(n);
            used_old.insert(o);
            out.push((n, o));
        }
    }
    out
}

/// Matches new boxes to existing boxes of the same class whose IoU exceeds
/// `thresh`. Returns `(new index, existing index)` pairs.
pub fn reid_bbox(new: &[(&str, Aabb)], existing: &[(&str, Aabb)], thresh: f64) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for (i, (cn, bn)) in new.iter().enumerate() {
        for (j, (ce, be)) in existing.iter().enumerate() {
            if cn != ce {
                continue;
            }
            let iou = bn.iou(be);
            if iou > thresh {
                pairs.push((i, j, iou));
            }
        }
    }
    greedy(pairs, true)
}

/// Closest same-class historical cloud under Chamfer distance, if below
/// `thresh`.
pub fn chamfer_best(
    class: &str,
    cloud: &[Vector3<f64>],
    history: &[(&str, &[Vector3<f64>])],
    thresh: f64,
) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (j, (c, h)) in history.iter().enumerate() {
        if *c != class || h.is_empty() || cloud.is_empty() {
            continue;
        }
        let d = chamfer(cloud, h);
        if d < thresh && best.is_none_or(|(_, b)| d < b) {
            best = Some((j, d));
        }
    }
    best
}

/// Jointly matches several new median clouds against history, smallest
/// distance first.
pub fn reid_chamfer(
    new: &[(&str, &[Vector3<f64>])],
    history: &[(&str, &[Vector3<f64>])],
    thresh: f64,
) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for (i, (cn, n)) in new.iter().enumerate() {
        for (j, (ch, h)) in history.iter().enumerate() {
            if cn != ch || n.is_empty() || h.is_empty() {
                continue;
            }
            let d = chamfer(n, h);
            if d < thresh {
                pairs.push((i, j, d));
            }
        }
    }
    greedy(pairs, false)
}
