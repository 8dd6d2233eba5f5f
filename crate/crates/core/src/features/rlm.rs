//! Run-length counts and the two features derived from them.

use std::collections::BTreeMap;

use super::window::GrayGrid;
use super::FeatureError;

/// Scan direction for run counting. 0 degrees is horizontal; 45 degrees runs
/// up-right along anti-diagonals, 90 degrees down columns, 135 degrees
/// down-right along main diagonals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RlmDirection {
    Deg0,
    Deg45,
    Deg90,
    Deg135,
}

impl RlmDirection {
    pub const ALL: [RlmDirection; 4] = [
        RlmDirection::Deg0,
        RlmDirection::Deg45,
        RlmDirection::Deg90,
        RlmDirection::Deg135,
    ];
}

/// R(p, l): how many maximal runs of gray p have length exactly l.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunLengthCounts {
    pub counts: BTreeMap<(u8, u32), u32>,
}

impl RunLengthCounts {
    pub fn get(&self, gray: u8, len: u32) -> u32 {
        self.counts.get(&(gray, len)).copied().unwrap_or(0)
    }

    /// Total number of runs, i.e. the sum of all matrix entries.
    pub fn total_runs(&self) -> u64 {
        self.counts.values().map(|&c| c as u64).sum()
    }
}

fn record_line(values: impl Iterator<Item = u8>, counts: &mut BTreeMap<(u8, u32), u32>) {
    let mut current: Option<(u8, u32)> = None;
    for v in values {
        match current {
            Some((gray, len)) if gray == v => current = Some((gray, len + 1)),
            Some(run) => {
                *counts.entry(run).or_insert(0) += 1;
                current = Some((v, 1));
            }
            None => current = Some((v, 1)),
        }
    }
    if let Some(run) = current {
        *counts.entry(run).or_insert(0) += 1;
    }
}

/// Counts maximal runs of identical grays along every line of the grid in
/// the given direction.
pub fn rlm(grid: &GrayGrid, theta: RlmDirection) -> RunLengthCounts {
    let (w, h) = (grid.width, grid.height);
    let mut counts = BTreeMap::new();
    match theta {
        RlmDirection::Deg0 => {
            for r in 0..h {
                record_line((0..w).map(|c| grid.get(r, c)), &mut counts);
            }
        }
        RlmDirection::Deg90 => {
            for c in 0..w {
                record_line((0..h).map(|r| grid.get(r, c)), &mut counts);
            }
        }
        RlmDirection::Deg45 => {
            // anti-diagonals r + c = k, walked up-right
            for k in 0..w + h - 1 {
                let r_hi = k.min(h - 1);
                let r_lo = k.saturating_sub(w - 1);
                record_line(
                    (r_lo..=r_hi).rev().map(|r| grid.get(r, k - r)),
                    &mut counts,
                );
            }
        }
        RlmDirection::Deg135 => {
            // main diagonals r - c = k, walked down-right
            for k in -(w as i64 - 1)..h as i64 {
                let r_lo = k.max(0) as usize;
                let r_hi = (h as i64 - 1).min(k + w as i64 - 1) as usize;
                record_line(
                    (r_lo..=r_hi).map(|r| grid.get(r, (r as i64 - k) as usize)),
                    &mut counts,
                );
            }
        }
    }
    RunLengthCounts { counts }
}

/// Gray level non-uniformity: sum over grays of (run count)^2, divided by
/// the total run count.
pub fn gray_level_nonuniformity(runs: &RunLengthCounts) -> Result<f64, FeatureError> {
    let total = runs.total_runs();
    if total == 0 {
        return Err(FeatureError::EmptyRunSet);
    }
    let mut per_gray: BTreeMap<u8, u64> = BTreeMap::new();
    for (&(gray, _), &c) in &runs.counts {
        *per_gray.entry(gray).or_insert(0) += c as u64;
    }
    let numerator: f64 = per_gray.values().map(|&n| (n as f64) * (n as f64)).sum();
    Ok(numerator / total as f64)
}

/// Run percentage: total run count divided by the area S.
pub fn run_percentage(runs: &RunLengthCounts, area: usize) -> Result<f64, FeatureError> {
    if area == 0 {
        return Err(FeatureError::ZeroArea);
    }
    Ok(runs.total_runs() as f64 / area as f64)
}
