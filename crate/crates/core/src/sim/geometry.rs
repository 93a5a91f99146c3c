//! Swept-footprint collision test for sweep actions.
//!
//! All coordinates are in pixel units. A moving object is a set of cell
//! offsets relative to its anchor cell `anchor`; translating it by `t·delta`
//! for `t ∈ [0,1]` overlaps a blocked cell `o` iff the unit squares overlap
//! with positive area, i.e. `|anchor + d + t·delta − o|∞ < 1` for some
//! offset `d`. Each `(o, d)` pair is one open box of half-width 1 around
//! `o − d` that the anchor path must avoid.

use std::collections::HashSet;

/// Analytic test: does the anchor segment enter any Minkowski box?
pub fn swept_path_hits(
    offsets: &[(i32, i32)],
    anchor: (i32, i32),
    delta: (f64, f64),
    blocked: &[(i32, i32)],
) -> bool {
    let (ax, ay) = (anchor.0 as f64, anchor.1 as f64);
    let (lo_x, hi_x) = (ax.min(ax + delta.0) - 1.0, ax.max(ax + delta.0) + 1.0);
    let (lo_y, hi_y) = (ay.min(ay + delta.1) - 1.0, ay.max(ay + delta.1) + 1.0);
    let mut centres = HashSet::new();
    for &(ox, oy) in blocked {
        for &(dx, dy) in offsets {
            let (mx, my) = (ox - dx, oy - dy);
            let (fx, fy) = (mx as f64, my as f64);
            if fx <= lo_x || fx >= hi_x || fy <= lo_y || fy >= hi_y {
                continue;
            }
            if centres.insert((mx, my)) && segment_enters_box(ax, ay, delta, fx, fy) {
                return true;
            }
        }
    }
    false
}

/// Open-box slab test for `p(t) = (ax, ay) + t·delta`, `t ∈ [0,1]`.
fn segment_enters_box(ax: f64, ay: f64, delta: (f64, f64), cx: f64, cy: f64) -> bool {
    let mut t_lo = f64::NEG_INFINITY;
    let mut t_hi = f64::INFINITY;
    for (a, d, c) in [(ax, delta.0, cx), (ay, delta.1, cy)] {
        if d == 0.0 {
            if (a - c).abs() >= 1.0 {
                return false;
            }
        } else {
            let t1 = (c - 1.0 - a) / d;
            let t2 = (c + 1.0 - a) / d;
            t_lo = t_lo.max(t1.min(t2));
            t_hi = t_hi.min(t1.max(t2));
        }
    }
    t_lo < t_hi && t_lo < 1.0 && t_hi > 0.0
}

/// Brute-force reference: samples the path at `samples + 1` points and tests
/// boxes of the given half-width. Used to cross-check [`swept_path_hits`].
pub fn swept_path_hits_sampled(
    offsets: &[(i32, i32)],
    anchor: (i32, i32),
    delta: (f64, f64),
    blocked: &[(i32, i32)],
    samples: usize,
    half_width: f64,
) -> bool {
    (0..=samples).any(|k| {
        let t = k as f64 / samples as f64;
        let (px, py) = (anchor.0 as f64 + t * delta.0, anchor.1 as f64 + t * delta.1);
        offsets.iter().any(|&(dx, dy)| {
            blocked.iter().any(|&(ox, oy)| {
                ((px + dx as f64) - ox as f64).abs() < half_width
                    && ((py + dy as f64) - oy as f64).abs() < half_width
            })
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn square(r: i32) -> Vec<(i32, i32)> {
        (-r..=r).flat_map(|x| (-r..=r).map(move |y| (x, y))).collect()
    }

    #[test]
    fn straight_through_hits() {
        let obstacle: Vec<_> = square(2).into_iter().map(|(x, y)| (x + 40, y + 16)).collect();
        assert!(swept_path_hits(&square(3), (16, 16), (44.0, 0.0), &obstacle));
        assert!(!swept_path_hits(&square(3), (16, 16), (44.0, 40.0), &obstacle));
    }

    #[test]
    fn touching_edges_do_not_count() {
        // Cells at x=0 and x=1 share an edge only.
        assert!(!swept_path_hits(&[(0, 0)], (0, 0), (0.0, 0.0), &[(1, 0)]));
        assert!(swept_path_hits(&[(0, 0)], (0, 0), (0.5, 0.0), &[(1, 0)]));
    }

    proptest! {
        #[test]
        fn analytic_agrees_with_sampling(
            ax in 0i32..64, ay in 0i32..64,
            dx in -40.0f64..40.0, dy in -40.0f64..40.0,
            ox in 0i32..64, oy in 0i32..64,
            r in 0i32..4, q in 0i32..4,
        ) {
            let offsets = square(r);
            let blocked: Vec<_> = square(q).into_iter().map(|(x, y)| (x + ox, y + oy)).collect();
            let hit = swept_path_hits(&offsets, (ax, ay), (dx, dy), &blocked);
            // A sampled hit with a slightly shrunk box must be an analytic hit.
            if swept_path_hits_sampled(&offsets, (ax, ay), (dx, dy), &blocked, 4000, 0.99) {
                prop_assert!(hit);
            }
            // An analytic hit must show up when sampling a slightly grown box.
            if hit {
                prop_assert!(swept_path_hits_sampled(&offsets, (ax, ay), (dx, dy), &blocked, 4000, 1.02));
            }
        }
    }
}
