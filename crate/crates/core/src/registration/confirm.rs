//! Confirmation heuristic: two points walked from the placement center over
//! fat pixels must end up spread like the retrosternal fat band.

use crate::image::FatImage;

use super::{ConfirmationParams, Placement};

/// Which way a walker is biased: the left point moves left/down, the right
/// point right/down.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WalkSide {
    Left,
    Right,
}

impl WalkSide {
    /// Movement hierarchy: horizontal first, then straight down, then the
    /// downward diagonal.
    fn directions(self) -> [(i64, i64); 3] {
        match self {
            WalkSide::Left => [(-1, 0), (0, 1), (-1, 1)],
            WalkSide::Right => [(1, 0), (0, 1), (1, 1)],
        }
    }
}

/// Walks one point for up to `iterations` moves. Each move tries the
/// directions in hierarchy order, taking the smallest step in 1..=max_skip
/// that lands on a fat pixel; when no direction offers one, the point is
/// parked for good. The visitor sees every committed position.
pub fn walk_point(
    img: &FatImage,
    start: (i64, i64),
    side: WalkSide,
    params: &ConfirmationParams,
    mut visitor: impl FnMut((i64, i64)),
) -> (i64, i64) {
    let dirs = side.directions();
    let (w, h) = (img.width as i64, img.height as i64);
    let mut pos = start;
    'moves: for _ in 0..params.iterations {
        for (dx, dy) in dirs {
            for step in 1..=params.max_skip as i64 {
                let next = (pos.0 + dx * step, pos.1 + dy * step);
                if next.0 < 0 || next.0 >= w || next.1 < 0 || next.1 >= h {
                    break; // farther steps in this direction stay out of bounds
                }
                if img.is_fat(next.0 as usize, next.1 as usize) {
                    pos = next;
                    visitor(pos);
                    continue 'moves;
                }
            }
        }
        break; // parked: the image is static, later iterations cannot move
    }
    pos
}

#[inline]
fn dist(a: (i64, i64), b: (f64, f64)) -> f64 {
    let dx = a.0 as f64 - b.0;
    let dy = a.1 as f64 - b.1;
    (dx * dx + dy * dy).sqrt()
}

/// Runs the confirmation method for an atlas placement.
///
/// Every ordered pair of starting pixels inside the area A (centered at the
/// placement center) is considered, the two walks are performed, and the
/// pair passes when the final points are separated by a plausible heart
/// width, moved roughly symmetrically, and both traveled a meaningful
/// distance from the pair's midpoint. Structural failures (area outside the
/// image, nothing to walk on) simply return false.
pub fn confirm_landmark(img: &FatImage, placement: Placement, params: &ConfirmationParams) -> bool {
    if params.validate().is_err() {
        return false;
    }
    let (cx, cy) = placement.center();
    let x0 = cx - params.area_w as i64 / 2;
    let y0 = cy - params.area_h as i64 / 2;
    // pixels of A that fall inside the image
    let mut starts = Vec::with_capacity(params.area_w * params.area_h);
    for y in y0..y0 + params.area_h as i64 {
        if y < 0 || y >= img.height as i64 {
            continue;
        }
        for x in x0..x0 + params.area_w as i64 {
            if x >= 0 && x < img.width as i64 {
                starts.push((x, y));
            }
        }
    }
    if starts.is_empty() {
        return false;
    }

    // a walk depends only on its start, so walk each start once per side
    let left_finals: Vec<(i64, i64)> = starts
        .iter()
        .map(|&p| walk_point(img, p, WalkSide::Left, params, |_| {}))
        .collect();
    let right_finals: Vec<(i64, i64)> = starts
        .iter()
        .map(|&p| walk_point(img, p, WalkSide::Right, params, |_| {}))
        .collect();

    for (i, &a) in starts.iter().enumerate() {
        for (j, &b) in starts.iter().enumerate() {
            if a.0 >= b.0 {
                continue; // the left start must lie left of the right start
            }
            let p_s = ((a.0 + b.0) as f64 / 2.0, (a.1 + b.1) as f64 / 2.0);
            let p_l = left_finals[i];
            let p_r = right_finals[j];
            let width = (p_l.0 - p_r.0).abs() as f64;
            if width <= params.x_min || width >= params.x_max {
                continue;
            }
            let d_l = dist(p_l, p_s);
            let d_r = dist(p_r, p_s);
            if d_l > d_r / 2.0 && d_r > d_l / 2.0 && d_l > params.x_min && d_r > params.x_min {
                return true;
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params_512() -> ConfirmationParams {
        ConfirmationParams::for_image(512, 512)
    }

    fn placement_centered(cx: usize, cy: usize) -> Placement {
        Placement { x: cx - 20, y: cy - 10, width: 40, height: 20 }
    }

    /// A flat fat band of the given half-width, overlapping the area A and
    /// extending `depth` rows below the center.
    fn band_image(cx: i64, cy: i64, half_width: i64, depth: i64) -> FatImage {
        let mut img = FatImage::filled(512, 512, 0, 0.35);
        for y in cy - 2..=cy + depth {
            for x in cx - half_width..=cx + half_width {
                img.set(x as usize, y as usize, 100);
            }
        }
        img
    }

    #[test]
    fn all_background_is_rejected() {
        let img = FatImage::filled(512, 512, 0, 0.35);
        assert!(!confirm_landmark(&img, placement_centered(256, 150), &params_512()));
    }

    #[test]
    fn wide_band_is_confirmed() {
        // spans about 0.4W, inside (x_min, x_max) = (102.4, 281.6)
        let img = band_image(256, 150, 102, 40);
        assert!(confirm_landmark(&img, placement_centered(256, 150), &params_512()));
    }

    #[test]
    fn narrow_band_is_rejected() {
        // half-width 25 -> final separation around 50 < x_min
        let img = band_image(256, 150, 25, 40);
        assert!(!confirm_landmark(&img, placement_centered(256, 150), &params_512()));
    }

    #[test]
    fn area_fully_outside_image_is_rejected() {
        let img = FatImage::filled(100, 100, 50, 0.35);
        let mut params = params_512();
        params.area_w = 4;
        params.area_h = 4;
        // placement center lands beyond the image, leaving A with no pixels
        let far = Placement { x: 98, y: 98, width: 200, height: 200 };
        assert!(!confirm_landmark(&img, far, &params));
    }

    #[test]
    fn walkers_step_only_on_fat() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let gray: Vec<u8> =
            (0..128 * 128).map(|_| if rng.gen_bool(0.5) { rng.gen_range(1..=171) } else { 0 }).collect();
        let img = FatImage::new(128, 128, gray, 0.35);
        let params = ConfirmationParams {
            iterations: 60,
            max_skip: 3,
            x_min: 10.0,
            x_max: 60.0,
            area_w: 8,
            area_h: 4,
        };
        for _ in 0..200 {
            let start = (rng.gen_range(0..128), rng.gen_range(0..128));
            for side in [WalkSide::Left, WalkSide::Right] {
                let mut commits = Vec::new();
                let end = walk_point(&img, start, side, &params, |p| commits.push(p));
                for p in &commits {
                    assert!(img.is_fat(p.0 as usize, p.1 as usize), "committed onto background");
                }
                if let Some(&last) = commits.last() {
                    assert_eq!(last, end);
                } else {
                    assert_eq!(end, start);
                }
            }
        }
    }

    #[test]
    fn walk_respects_skip_limit_over_gaps() {
        // fat at x = 0 and a pixel 5 to the left of the start: unreachable
        // with max_skip 3, reachable with 5
        let mut img = FatImage::filled(32, 8, 0, 0.35);
        img.set(10, 4, 9);
        img.set(5, 4, 9);
        let mut params = ConfirmationParams {
            iterations: 4,
            max_skip: 3,
            x_min: 1.0,
            x_max: 10.0,
            area_w: 2,
            area_h: 2,
        };
        let end = walk_point(&img, (10, 4), WalkSide::Left, &params, |_| {});
        assert_eq!(end, (10, 4));
        params.max_skip = 5;
        let end = walk_point(&img, (10, 4), WalkSide::Left, &params, |_| {});
        assert_eq!(end, (5, 4));
    }

    #[test]
    fn walk_prefers_horizontal_over_vertical() {
        let mut img = FatImage::filled(16, 16, 0, 0.35);
        img.set(4, 8, 9); // left of start
        img.set(5, 9, 9); // below start
        let params = ConfirmationParams {
            iterations: 1,
            max_skip: 1,
            x_min: 1.0,
            x_max: 10.0,
            area_w: 2,
            area_h: 2,
        };
        let end = walk_point(&img, (5, 8), WalkSide::Left, &params, |_| {});
        assert_eq!(end, (4, 8));
    }
}
