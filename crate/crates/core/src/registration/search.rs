//! Exhaustive landmark search and whole-scan translation.

use rayon::prelude::*;

use crate::image::{translate, FatImage, ScanVolume};

use super::confirm::confirm_landmark;
use super::similarity::PreparedMeasure;
use super::{
    Atlas, ConfirmationParams, LandmarkResult, Placement, RegistrationError, SimilarityParams,
};

/// Scores every in-bounds placement, ascending by (cost, y, x).
fn ranked_placements(
    f: &FatImage,
    prepared: &PreparedMeasure,
    atlas_w: usize,
    atlas_h: usize,
) -> Vec<(f64, usize, usize)> {
    let nx = f.width - atlas_w + 1;
    let ny = f.height - atlas_h + 1;
    let mut scored: Vec<(f64, usize, usize)> = (0..ny)
        .into_par_iter()
        .flat_map_iter(|y| {
            let row: Vec<(f64, usize, usize)> =
                (0..nx).map(|x| (prepared.cost(f, x, y), y, x)).collect();
            row
        })
        .collect();
    scored.sort_unstable_by(|a, b| {
        a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
    });
    scored
}

/// Finds the placement minimizing the similarity measure.
///
/// With confirmation enabled the minimizer is confirmed first; if it fails,
/// every placement is retried in ascending score order and the first
/// confirmed one wins (ties by smaller y, then smaller x). `None` disables
/// the confirmation pass entirely.
pub fn find_landmark(
    f: &FatImage,
    atlas: &Atlas,
    sim: &SimilarityParams,
    conf: Option<&ConfirmationParams>,
) -> Result<LandmarkResult, RegistrationError> {
    sim.validate()?;
    let (aw, ah) = (atlas.image.width, atlas.image.height);
    if aw >= f.width || ah >= f.height {
        return Err(RegistrationError::AtlasTooLarge(aw, ah, f.width, f.height));
    }
    let prepared = PreparedMeasure::new(*sim, &atlas.image);
    let ranked = ranked_placements(f, &prepared, aw, ah);

    match conf {
        None => {
            let (cost, y, x) = ranked[0];
            Ok(LandmarkResult {
                x,
                y,
                score: prepared.natural(cost),
                confirmed: false,
                slice_index: 0,
            })
        }
        Some(params) => {
            params.validate()?;
            for &(cost, y, x) in &ranked {
                let placement = Placement { x, y, width: aw, height: ah };
                if confirm_landmark(f, placement, params) {
                    return Ok(LandmarkResult {
                        x,
                        y,
                        score: prepared.natural(cost),
                        confirmed: true,
                        slice_index: 0,
                    });
                }
            }
            Err(RegistrationError::NoConfirmedPlacement)
        }
    }
}

/// Default slice for the landmark search, clamped to the scan length.
pub fn select_registration_slice(scan: &ScanVolume) -> usize {
    10.min(scan.slices.len() - 1)
}

/// Slices tried in order when the landmark search fails: the default slice
/// first, then indices 1..=20 of the retrosternal range.
pub fn candidate_slices(scan: &ScanVolume) -> Vec<usize> {
    let last = scan.slices.len() - 1;
    let default = select_registration_slice(scan);
    let mut candidates = vec![default];
    for idx in 1..=20usize.min(last) {
        if idx != default {
            candidates.push(idx);
        }
    }
    candidates
}

/// Default standard position the landmark center is translated to.
pub fn default_anchor(width: usize, height: usize) -> (i64, i64) {
    (width as i64 / 2, (0.30 * height as f64) as i64)
}

/// Locates the landmark on a candidate slice and translates every slice by
/// the same integer offset so the landmark center lands on the anchor.
pub fn register_scan(
    scan: &ScanVolume,
    atlas: &Atlas,
    sim: &SimilarityParams,
    conf: Option<&ConfirmationParams>,
    anchor: Option<(i64, i64)>,
) -> Result<(ScanVolume, LandmarkResult), RegistrationError> {
    register_scan_on(scan, atlas, sim, conf, anchor, &candidate_slices(scan))
}

/// [`register_scan`] with an explicit candidate-slice ladder.
pub fn register_scan_on(
    scan: &ScanVolume,
    atlas: &Atlas,
    sim: &SimilarityParams,
    conf: Option<&ConfirmationParams>,
    anchor: Option<(i64, i64)>,
    candidates: &[usize],
) -> Result<(ScanVolume, LandmarkResult), RegistrationError> {
    let anchor = anchor.unwrap_or_else(|| default_anchor(scan.width(), scan.height()));
    let mut outcome = None;
    for &slice_index in candidates {
        match find_landmark(&scan.slices[slice_index], atlas, sim, conf) {
            Ok(mut result) => {
                result.slice_index = slice_index;
                outcome = Some(result);
                break;
            }
            Err(RegistrationError::NoConfirmedPlacement) => continue,
            Err(other) => return Err(other),
        }
    }
    let result = outcome.ok_or(RegistrationError::NoConfirmedPlacement)?;

    let placement = Placement {
        x: result.x,
        y: result.y,
        width: atlas.image.width,
        height: atlas.image.height,
    };
    let (cx, cy) = placement.center();
    let (dx, dy) = (anchor.0 - cx, anchor.1 - cy);
    let slices: Vec<FatImage> = scan
        .slices
        .par_iter()
        .map(|slice| translate(slice, dx, dy))
        .collect();
    let registered = ScanVolume::new(slices, scan.slice_spacing, scan.patient_id.clone())
        .expect("registered scan keeps geometry");
    Ok((registered, result))
}
