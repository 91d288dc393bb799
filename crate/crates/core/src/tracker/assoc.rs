//! Per-frame association of propagated points with instance masks.

use crate::stream::mask::{BitMask, InstanceMask};
use crate::stream::provider::Track;

/// Erosion with a `(2r+1)²` square. Pixels outside the image do not erode
/// their neighbors.
pub fn erode(mask: &BitMask, radius: u32) -> BitMask {
    if radius == 0 {
        return mask.clone();
    }
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let r = radius as usize;
    let bits = mask.bits();
    // horizontal then vertical run test on prefix sums
    let mut horiz = vec![false; w * h];
    for v in 0..h {
        let row = &bits[v * w..(v + 1) * w];
        let mut prefix = vec![0usize; w + 1];
        for u in 0..w {
            prefix[u + 1] = prefix[u] + row[u] as usize;
        }
        for u in 0..w {
            let (a, b) = (u.saturating_sub(r), (u + r + 1).min(w));
            horiz[v * w + u] = prefix[b] - prefix[a] == b - a;
        }
    }
    let mut out = vec![false; w * h];
    for u in 0..w {
        let mut prefix = vec![0usize; h + 1];
        for v in 0..h {
            prefix[v + 1] = prefix[v] + horiz[v * w + u] as usize;
        }
        for v in 0..h {
            let (a, b) = (v.saturating_sub(r), (v + r + 1).min(h));
            out[v * w + u] = prefix[b] - prefix[a] == b - a;
        }
    }
    BitMask::new(mask.width(), mask.height(), out)
}

/// Eroded copy of the mask, or `None` if nothing survives.
pub fn erode_mask(mask: &InstanceMask, radius: u32) -> Option<InstanceMask> {
    let eroded = erode(&mask.mask, radius);
    (!eroded.is_empty()).then(|| InstanceMask { mask: eroded, ..mask.clone() })
}

/// Erodes every mask of a frame and drops the ones that vanish.
pub fn erode_all(masks: &[InstanceMask], radius: u32) -> Vec<InstanceMask> {
    masks.iter().filter_map(|m| erode_mask(m, radius)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSample {
    pub u: u32,
    pub v: u32,
    /// Covering mask, `None` for background.
    pub label: Option<usize>,
}

/// Grid pixels at multiples of `stride`, labeled with the covering mask.
/// Overlaps go to the most confident mask, then the lower index.
pub fn sample_grid(masks: &[InstanceMask], width: u32, height: u32, stride: u32) -> Vec<GridSample> {
    let stride = stride.max(1) as usize;
    let mut out = Vec::new();
    for v in (0..height).step_by(stride) {
        for u in (0..width).step_by(stride) {
            let mut label: Option<usize> = None;
            for (i, m) in masks.iter().enumerate() {
                if m.mask.get(u, v) && label.is_none_or(|l| m.confidence > masks[l].confidence) {
                    label = Some(i);
                }
            }
            out.push(GridSample { u, v, label });
        }
    }
    out
}

/// Per track and frame, the point position if its confidence is strictly
/// above `thresh`.
pub fn filter_tracks(tracks: &[Track], thresh: f64) -> Vec<Vec<Option<(f64, f64)>>> {
    tracks
        .iter()
        .map(|t| t.points.iter().map(|p| (p.confidence > thresh).then_some((p.u, p.v))).collect())
        .collect()
}

/// `counts[t][m]`: points of tracklet `t` falling inside mask `m`.
pub fn support_matrix(points: &[(usize, f64, f64)], masks: &[InstanceMask], n_tracklets: usize) -> Vec<Vec<u32>> {
    let mut counts = vec![vec![0u32; masks.len()]; n_tracklets];
    for &(t, u, v) in points {
        for (m, mask) in masks.iter().enumerate() {
            if mask.mask.contains(u, v) {
                counts[t][m] += 1;
            }
        }
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub tracklet_to_mask: Vec<Option<usize>>,
    pub mask_to_tracklet: Vec<Option<usize>>,
}

/// Two-sided assignment: every mask nominates its best-supported tracklet,
/// then every tracklet takes the best-supported mask that nominated it.
///
/// `tracklet_order` ranks tracklets for ties (lower wins, typically the
/// global id). Pairs with different classes or zero support never match.
pub fn mutual_assign(
    support: &[Vec<u32>],
    tracklet_order: &[u64],
    tracklet_classes: &[&str],
    mask_classes: &[&str],
) -> Assignment {
    let nt = support.len();
    let nm = mask_classes.len();
    let allowed = |t: usize, m: usize| support[t][m] > 0 && tracklet_classes[t] == mask_classes[m];
    let mut candidate: Vec<Option<usize>> = vec![None; nm];
    for (m, cand) in candidate.iter_mut().enumerate() {
        for t in 0..nt {
            if !allowed(t, m) {
                continue;
            }
            let better = match *cand {
                None => true,
                Some(c) => {
                    support[t][m] > support[c][m]
                        || (support[t][m] == support[c][m] && tracklet_order[t] < tracklet_order[c])
                }
            };
            if better {
                *cand = Some(t);
            }
        }
    }
    let mut tracklet_to_mask = vec![None; nt];
    let mut mask_to_tracklet = vec![None; nm];
    for (t, slot) in tracklet_to_mask.iter_mut().enumerate() {
        let mut best: Option<usize> = None;
        for m in 0..nm {
            if candidate[m] == Some(t) && best.is_none_or(|b| support[t][m] > support[t][b]) {
                best = Some(m);
            }
        }
        if let Some(m) = best {
            *slot = Some(m);
            mask_to_tracklet[m] = Some(t);
        }
    }
    Assignment { tracklet_to_mask, mask_to_tracklet }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::provider::TrackPoint;
    use proptest::prelude::*;

    fn square(w: u32, h: u32, u0: u32, v0: u32, side: u32) -> BitMask {
        BitMask::from_fn(w, h, |u, v| u >= u0 && u < u0 + side && v >= v0 && v < v0 + side)
    }

    fn inst(class: &str, mask: BitMask, conf: f64) -> InstanceMask {
        InstanceMask::new(class, mask, conf).unwrap()
    }

    #[test]
    fn erosion_examples() {
        let m = square(7, 7, 2, 2, 3);
        assert_eq!(erode(&m, 0), m);
        let e = erode(&m, 1);
        assert_eq!(e.count(), 1);
        assert!(e.get(3, 3));
        let line = BitMask::from_fn(7, 7, |u, _| u == 3);
        assert!(erode(&line, 1).is_empty());
        assert!(erode_mask(&inst("x", line, 0.5), 1).is_none());
    }

    /// Direct definition: keep a pixel iff every in-image neighbor is set.
    fn erode_naive(m: &BitMask, r: u32) -> BitMask {
        let r = r as i64;
        BitMask::from_fn(m.width(), m.height(), |u, v| {
            for dv in -r..=r {
                for du in -r..=r {
                    let (x, y) = (u as i64 + du, v as i64 + dv);
                    if x >= 0 && y >= 0 && x < m.width() as i64 && y < m.height() as i64 && !m.get(x as u32, y as u32) {
                        return false;
                    }
                }
            }
            true
        })
    }

    proptest! {
        #[test]
        fn erosion_matches_definition(bits in prop::collection::vec(prop::bool::weighted(0.7), 12 * 9), r in 0u32..3) {
            let m = BitMask::new(12, 9, bits);
            prop_assert_eq!(erode(&m, r), erode_naive(&m, r));
        }

        #[test]
        fn support_matches_brute_force(
            pts in prop::collection::vec((0usize..3, 0.0f64..8.0, 0.0f64..8.0), 0..20),
            boxes in prop::collection::vec((0u32..8, 0u32..8, 1u32..5), 1..4),
        ) {
            let masks: Vec<_> = boxes.iter().map(|&(u, v, s)| inst("a", square(8, 8, u, v, s), 0.5)).collect();
            let counts = support_matrix(&pts, &masks, 3);
            for (t, row) in counts.iter().enumerate() {
                for (m, mask) in masks.iter().enumerate() {
                    let mut n = 0;
                    for &(pt, u, v) in &pts {
                        let (x, y) = (u.round() as i64, v.round() as i64);
                        let inside = (0..8).contains(&x) && (0..8).contains(&y) && mask.mask.bits()[(y * 8 + x) as usize];
                        if pt == t && inside {
                            n += 1;
                        }
                    }
                    prop_assert_eq!(row[m], n);
                }
            }
        }

        #[test]
        fn assignment_is_partial_injection(
            support in prop::collection::vec(prop::collection::vec(0u32..6, 4), 0..5),
        ) {
            let nt = support.len();
            let order: Vec<u64> = (0..nt as u64).collect();
            let tc = vec!["a"; nt];
            let a = mutual_assign(&support, &order, &tc, &["a", "a", "a", "a"]);
            let mut seen = std::collections::HashSet::new();
            for (t, m) in a.tracklet_to_mask.iter().enumerate() {
                if let Some(m) = m {
                    prop_assert!(seen.insert(*m));
                    prop_assert_eq!(a.mask_to_tracklet[*m], Some(t));
                    prop_assert!(support[t][*m] > 0);
                }
            }
        }
    }

    #[test]
    fn grid_examples() {
        assert_eq!(sample_grid(&[], 4, 4, 2).len(), 4);
        let left = inst("a", BitMask::from_fn(4, 4, |u, _| u < 2), 0.8);
        let g = sample_grid(&[left], 4, 4, 2);
        for s in g {
            assert_eq!(s.label, if s.u == 0 { Some(0) } else { None });
        }
        let a = inst("a", square(4, 4, 0, 0, 1), 0.4);
        let b = inst("b", square(4, 4, 0, 0, 1), 0.9);
        assert_eq!(sample_grid(&[a, b], 4, 4, 2)[0].label, Some(1));
    }

    #[test]
    fn filter_is_strict() {
        let p = |c| TrackPoint { u: 1.0, v: 2.0, confidence: c };
        let t = Track { points: vec![p(1.0), p(0.1), p(0.05), p(0.11)] };
        let f = filter_tracks(&[t], 0.1);
        assert_eq!(f[0], vec![Some((1.0, 2.0)), None, None, Some((1.0, 2.0))]);
    }

    #[test]
    fn support_examples() {
        let a = inst("a", square(10, 10, 0, 0, 4), 0.5);
        let pts: Vec<_> = (0..5).map(|i| (0usize, i as f64 * 0.5, 1.0)).chain([(0, 9.0, 9.0)]).collect();
        assert_eq!(support_matrix(&pts, &[a], 1), vec![vec![5]]);
    }

    #[test]
    fn assignment_examples() {
        let a = mutual_assign(&[vec![5, 3], vec![0, 4]], &[1, 2], &["c", "c"], &["c", "c"]);
        assert_eq!(a.tracklet_to_mask, vec![Some(0), Some(1)]);
        let a = mutual_assign(&[vec![10]], &[1], &["chair"], &["bag"]);
        assert_eq!(a.tracklet_to_mask, vec![None]);
        let a = mutual_assign(&[vec![0, 0], vec![0, 0]], &[1, 2], &["c", "c"], &["c", "c"]);
        assert_eq!(a.mask_to_tracklet, vec![None, None]);
        // equal support: older tracklet wins the mask
        let a = mutual_assign(&[vec![3], vec![3]], &[7, 2], &["c", "c"], &["c"]);
        assert_eq!(a.mask_to_tracklet, vec![Some(1)]);
        // tracklet nominated by two masks with equal support takes the lower index
        let a = mutual_assign(&[vec![2, 2]], &[1], &["c"], &["c", "c"]);
        assert_eq!(a.tracklet_to_mask, vec![Some(0)]);
    }
}
