//! Gray-level co-occurrence counts and their moments.

use std::collections::BTreeMap;

use super::window::GrayGrid;

/// Co-occurrence counts at a fixed offset. Keys are raw gray pairs (a, b)
/// where b sits at (row + dr, col + dc) relative to a; pairs that extend
/// past the grid are skipped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlcmCounts {
    pub counts: BTreeMap<(u8, u8), u32>,
    pub total: u64,
}

impl GlcmCounts {
    pub fn get(&self, a: u8, b: u8) -> u32 {
        self.counts.get(&(a, b)).copied().unwrap_or(0)
    }

    /// Normalized probabilities P(a, b) = C(a, b) / total.
    pub fn probabilities(&self) -> impl Iterator<Item = ((u8, u8), f64)> + '_ {
        let total = self.total as f64;
        self.counts.iter().map(move |(&k, &c)| (k, c as f64 / total))
    }
}

/// Builds the co-occurrence counts for offset (dr, dc), first component on
/// rows.
pub fn glcm(grid: &GrayGrid, dr: i32, dc: i32) -> GlcmCounts {
    let mut counts = BTreeMap::new();
    let mut total = 0u64;
    for r in 0..grid.height as i32 {
        let r2 = r + dr;
        if r2 < 0 || r2 >= grid.height as i32 {
            continue;
        }
        for c in 0..grid.width as i32 {
            let c2 = c + dc;
            if c2 < 0 || c2 >= grid.width as i32 {
                continue;
            }
            let a = grid.get(r as usize, c as usize);
            let b = grid.get(r2 as usize, c2 as usize);
            *counts.entry((a, b)).or_insert(0) += 1;
            total += 1;
        }
    }
    GlcmCounts { counts, total }
}

/// Moment of degree `g` of the co-occurrence probabilities:
/// `M_g = sum P(k, l) (k - l)^g` with k, l the raw gray values.
///
/// An empty co-occurrence set yields 0 by convention.
pub fn glcm_moment(grid: &GrayGrid, dr: i32, dc: i32, degree: u32) -> f64 {
    moment_of_counts(&glcm(grid, dr, dc), degree)
}

pub fn moment_of_counts(counts: &GlcmCounts, degree: u32) -> f64 {
    if counts.total == 0 {
        return 0.0;
    }
    let mut sum = 0.0;
    for (&(a, b), &c) in &counts.counts {
        let diff = a as i64 - b as i64;
        sum += c as f64 * (diff as f64).powi(degree as i32);
    }
    sum / counts.total as f64
}

/// All four moment degrees at once from a single pair sweep, without
/// materializing the matrix. Matches the co-occurrence route exactly; the
/// tie between the two is asserted in tests.
pub fn moments_direct(grid: &GrayGrid, dr: i32, dc: i32) -> [f64; 4] {
    let mut sums = [0.0f64; 4];
    let mut total = 0u64;
    let h = grid.height as i32;
    let w = grid.width as i32;
    for r in 0..h {
        let r2 = r + dr;
        if r2 < 0 || r2 >= h {
            continue;
        }
        for c in 0..w {
            let c2 = c + dc;
            if c2 < 0 || c2 >= w {
                continue;
            }
            let d = grid.get(r as usize, c as usize) as i64
                - grid.get(r2 as usize, c2 as usize) as i64;
            let d = d as f64;
            let d2 = d * d;
            sums[0] += d;
            sums[1] += d2;
            sums[2] += d2 * d;
            sums[3] += d2 * d2;
            total += 1;
        }
    }
    if total == 0 {
        return [0.0; 4];
    }
    sums.map(|s| s / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent O(n^2) enumeration over all index pairs.
    fn oracle(grid: &GrayGrid, dr: i32, dc: i32) -> GlcmCounts {
        let mut counts = BTreeMap::new();
        let mut total = 0u64;
        for r in 0..grid.height {
            for c in 0..grid.width {
                for r2 in 0..grid.height {
                    for c2 in 0..grid.width {
                        if r2 as i32 == r as i32 + dr && c2 as i32 == c as i32 + dc {
                            *counts.entry((grid.get(r, c), grid.get(r2, c2))).or_insert(0) += 1;
                            total += 1;
                        }
                    }
                }
            }
        }
        GlcmCounts { counts, total }
    }

    #[test]
    fn two_by_two_examples() {
        let g = GrayGrid::new(2, 2, vec![0, 0, 1, 1]);
        let counts = glcm(&g, 0, 1);
        assert_eq!(counts.get(0, 0), 1);
        assert_eq!(counts.get(1, 1), 1);
        assert_eq!(counts.total, 2);

        let g = GrayGrid::new(2, 2, vec![0, 1, 0, 1]);
        let counts = glcm(&g, 0, 1);
        assert_eq!(counts.get(0, 1), 2);
        assert_eq!(counts.total, 2);
    }

    #[test]
    fn constant_window_concentrates_mass() {
        let g = GrayGrid::new(3, 3, vec![7; 9]);
        for (dr, dc) in [(0, 1), (1, 0), (1, 1)] {
            let counts = glcm(&g, dr, dc);
            assert_eq!(counts.counts.len(), 1);
            assert_eq!(counts.get(7, 7) as u64, counts.total);
        }
    }

    #[test]
    fn moment_hand_cases() {
        let g = GrayGrid::new(2, 2, vec![0, 1, 0, 1]);
        assert!((glcm_moment(&g, 0, 1, 2) - 1.0).abs() < 1e-15);
        assert!((glcm_moment(&g, 0, 1, 1) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_window_moments_vanish() {
        let g = GrayGrid::new(4, 4, vec![9; 16]);
        for degree in 1..=4 {
            assert_eq!(glcm_moment(&g, 0, 1, degree), 0.0);
        }
    }

    #[test]
    fn single_pixel_out_of_range_offset_is_zero() {
        let g = GrayGrid::new(1, 1, vec![5]);
        assert_eq!(glcm(&g, 0, 1).total, 0);
        assert_eq!(glcm_moment(&g, 0, 1, 2), 0.0);
    }

    #[test]
    fn matches_enumeration_oracle_on_random_windows() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let w = rng.gen_range(1..=9);
            let h = rng.gen_range(1..=9);
            let values: Vec<u8> = (0..w * h).map(|_| rng.gen_range(0..6) * 40).collect();
            let grid = GrayGrid::new(w, h, values);
            for (dr, dc) in [(0, 1), (1, 0), (1, 1)] {
                assert_eq!(glcm(&grid, dr, dc), oracle(&grid, dr, dc));
            }
        }
    }

    #[test]
    fn probabilities_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let values: Vec<u8> = (0..49).map(|_| rng.gen()).collect();
            let grid = GrayGrid::new(7, 7, values);
            let counts = glcm(&grid, 1, 1);
            let sum: f64 = counts.probabilities().map(|(_, p)| p).sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn even_degree_moments_are_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..50 {
            let values: Vec<u8> = (0..36).map(|_| rng.gen()).collect();
            let grid = GrayGrid::new(6, 6, values);
            for degree in [2, 4] {
                assert!(glcm_moment(&grid, 0, 1, degree) >= 0.0);
            }
        }
    }

    #[test]
    fn direct_sums_match_matrix_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..100 {
            let values: Vec<u8> = (0..81).map(|_| rng.gen()).collect();
            let grid = GrayGrid::new(9, 9, values);
            for (dr, dc) in [(0, 1), (1, 0), (1, 1)] {
                let direct = moments_direct(&grid, dr, dc);
                for degree in 1..=4u32 {
                    let via_counts = glcm_moment(&grid, dr, dc, degree);
                    let d = direct[degree as usize - 1];
                    assert!(
                        (via_counts - d).abs() <= 1e-9 * via_counts.abs().max(1.0),
                        "degree {degree}: {via_counts} vs {d}"
                    );
                }
            }
        }
    }
}
