//! Similarity measures between an atlas window and a fixed image.
//!
//! All measures operate on grays normalized to [0, 1] by /255. MD and HMD
//! are minimized naturally; CC, MI and WMI are negated by the search so
//! "smaller cost is better" holds uniformly, while reported scores keep the
//! natural sign.

use crate::image::FatImage;

use super::{Measure, RegistrationError, SimilarityParams};

fn check_bounds(f: &FatImage, m: &FatImage, x: usize, y: usize) -> Result<(), RegistrationError> {
    if x + m.width > f.width || y + m.height > f.height {
        return Err(RegistrationError::PlacementOutOfBounds(x, y));
    }
    Ok(())
}

/// Per-|difference| lookup of (d/255)^g for d in 0..=255.
fn abs_diff_lut(g: f64) -> [f64; 256] {
    let mut lut = [0.0; 256];
    for (d, slot) in lut.iter_mut().enumerate() {
        *slot = (d as f64 / 255.0).powf(g);
    }
    lut
}

/// Mean difference: (1/hw) * sum |F - M|^g over the overlap.
pub fn md(f: &FatImage, m: &FatImage, x: usize, y: usize, g: f64) -> Result<f64, RegistrationError> {
    check_bounds(f, m, x, y)?;
    let lut = abs_diff_lut(g);
    Ok(md_with_lut(f, m, x, y, &lut))
}

fn md_with_lut(f: &FatImage, m: &FatImage, x: usize, y: usize, lut: &[f64; 256]) -> f64 {
    let mut sum = 0.0;
    for i in 0..m.height {
        let frow = &f.gray[(y + i) * f.width + x..(y + i) * f.width + x + m.width];
        let mrow = &m.gray[i * m.width..(i + 1) * m.width];
        for (&fv, &mv) in frow.iter().zip(mrow) {
            sum += lut[(fv as i32 - mv as i32).unsigned_abs() as usize];
        }
    }
    sum / (m.width * m.height) as f64
}

/// Normalized cross-correlation coefficient of the two windows; 1 exactly
/// when they are related by a positive linear re-grading.
pub fn cc(f: &FatImage, m: &FatImage, x: usize, y: usize) -> Result<f64, RegistrationError> {
    check_bounds(f, m, x, y)?;
    let n = (m.width * m.height) as f64;
    let mut sum_f = 0.0;
    let mut sum_m = 0.0;
    for i in 0..m.height {
        for j in 0..m.width {
            sum_f += f.get(x + j, y + i) as f64;
            sum_m += m.get(j, i) as f64;
        }
    }
    let (mu_f, mu_m) = (sum_f / n, sum_m / n);
    let mut cov = 0.0;
    let mut var_f = 0.0;
    let mut var_m = 0.0;
    for i in 0..m.height {
        for j in 0..m.width {
            let df = f.get(x + j, y + i) as f64 - mu_f;
            let dm = m.get(j, i) as f64 - mu_m;
            cov += df * dm;
            var_f += df * df;
            var_m += dm * dm;
        }
    }
    if var_f == 0.0 || var_m == 0.0 {
        return Err(RegistrationError::ZeroVariance);
    }
    Ok(cov / (var_f * var_m).sqrt())
}

/// Joint gray-pair runs of the overlap, sorted, plus the two marginal
/// histograms. Shared by MI and WMI.
fn joint_runs(f: &FatImage, m: &FatImage, x: usize, y: usize) -> (Vec<(u16, u32)>, [u32; 256], [u32; 256], f64) {
    let n = m.width * m.height;
    let mut pairs: Vec<u16> = Vec::with_capacity(n);
    let mut hist_f = [0u32; 256];
    let mut hist_m = [0u32; 256];
    for i in 0..m.height {
        for j in 0..m.width {
            let fv = f.get(x + j, y + i);
            let mv = m.get(j, i);
            hist_f[fv as usize] += 1;
            hist_m[mv as usize] += 1;
            pairs.push(((fv as u16) << 8) | mv as u16);
        }
    }
    pairs.sort_unstable();
    let mut runs = Vec::new();
    let mut i = 0;
    while i < pairs.len() {
        let mut j = i;
        while j + 1 < pairs.len() && pairs[j + 1] == pairs[i] {
            j += 1;
        }
        runs.push((pairs[i], (j - i + 1) as u32));
        i = j + 1;
    }
    (runs, hist_f, hist_m, n as f64)
}

fn mutual_information(
    f: &FatImage,
    m: &FatImage,
    x: usize,
    y: usize,
    g: f64,
    weighted: bool,
) -> Result<f64, RegistrationError> {
    check_bounds(f, m, x, y)?;
    let (runs, hist_f, hist_m, n) = joint_runs(f, m, x, y);
    let ln_g = g.ln();
    let mut total = 0.0;
    for (key, count) in runs {
        let fv = (key >> 8) as usize;
        let mv = (key & 0xff) as usize;
        let p_fm = count as f64 / n;
        let p_f = hist_f[fv] as f64 / n;
        let p_m = hist_m[mv] as f64 / n;
        let mut parcel = p_fm * ((p_fm / (p_f * p_m)).ln() / ln_g);
        if weighted {
            // f and m enter the weight as normalized gray values
            let diff = (fv as f64 - mv as f64).abs() / 255.0;
            parcel /= diff + 1.0;
        }
        total += parcel;
    }
    Ok(total)
}

/// Mutual information of the joint gray histogram of the overlap, with
/// logarithms in base `g`.
pub fn mi(f: &FatImage, m: &FatImage, x: usize, y: usize, g: f64) -> Result<f64, RegistrationError> {
    mutual_information(f, m, x, y, g, false)
}

/// Weighted mutual information: every MI parcel is multiplied by
/// 1/(|f - m| + 1) on normalized grays, so equal-value mass keeps weight 1.
pub fn wmi(f: &FatImage, m: &FatImage, x: usize, y: usize, g: f64) -> Result<f64, RegistrationError> {
    mutual_information(f, m, x, y, g, true)
}

/// HMD lookup tables: the bright branch keyed by f + m (the branch value
/// depends only on that sum) and the dark branch keyed by |f - m|.
fn hmd_luts(g: f64) -> (Vec<f64>, [f64; 256]) {
    let mut bright = vec![0.0f64; 511];
    for (s, slot) in bright.iter_mut().enumerate() {
        let base = (s as f64 - 255.0) / 255.0; // f_norm - (1 - m_norm)
        // negative base with fractional g yields NaN; max() maps it to 0
        *slot = -(base.powf(g)).max(0.0);
    }
    (bright, abs_diff_lut(g))
}

/// Hybrid mean difference per the piecewise definition: atlas pixels above
/// the threshold t reward bright agreement through the inverted template,
/// the rest contribute the plain absolute difference. The sum equals
/// S_n - S_p where S_p is the bright-region reward and S_n the dark-region
/// error. Note the identical-window value is -S_p, not 0, for windows with
/// bright content.
pub fn hmd(
    f: &FatImage,
    m: &FatImage,
    x: usize,
    y: usize,
    g: f64,
    t: f64,
) -> Result<f64, RegistrationError> {
    check_bounds(f, m, x, y)?;
    let (bright_lut, dark_lut) = hmd_luts(g);
    let bright: Vec<bool> = m.gray.iter().map(|&v| v as f64 / 255.0 > t).collect();
    Ok(hmd_with_luts(f, m, x, y, &bright, &bright_lut, &dark_lut))
}

fn hmd_with_luts(
    f: &FatImage,
    m: &FatImage,
    x: usize,
    y: usize,
    bright: &[bool],
    bright_lut: &[f64],
    dark_lut: &[f64; 256],
) -> f64 {
    let mut sum = 0.0;
    for i in 0..m.height {
        let frow = &f.gray[(y + i) * f.width + x..(y + i) * f.width + x + m.width];
        let mrow = &m.gray[i * m.width..(i + 1) * m.width];
        let brow = &bright[i * m.width..(i + 1) * m.width];
        for ((&fv, &mv), &is_bright) in frow.iter().zip(mrow).zip(brow) {
            sum += if is_bright {
                bright_lut[fv as usize + mv as usize]
            } else {
                dark_lut[(fv as i32 - mv as i32).unsigned_abs() as usize]
            };
        }
    }
    sum
}

/// Evaluates the configured measure at a placement, natural sign.
pub fn evaluate(
    params: &SimilarityParams,
    f: &FatImage,
    m: &FatImage,
    x: usize,
    y: usize,
) -> Result<f64, RegistrationError> {
    match params.measure {
        Measure::Md => md(f, m, x, y, params.g),
        Measure::Cc => cc(f, m, x, y),
        Measure::Mi => mi(f, m, x, y, params.g),
        Measure::Wmi => wmi(f, m, x, y, params.g),
        Measure::Hmd => hmd(f, m, x, y, params.g, params.t),
    }
}

/// A measure bound to an atlas image with its lookup tables precomputed,
/// ready for exhaustive placement sweeps. Costs follow the minimization
/// convention; placements where the measure is undefined cost infinity.
pub struct PreparedMeasure<'a> {
    params: SimilarityParams,
    atlas: &'a FatImage,
    md_lut: Option<[f64; 256]>,
    hmd_bright: Option<Vec<bool>>,
    hmd_luts: Option<(Vec<f64>, [f64; 256])>,
}

impl<'a> PreparedMeasure<'a> {
    pub fn new(params: SimilarityParams, atlas: &'a FatImage) -> Self {
        let md_lut = matches!(params.measure, Measure::Md).then(|| abs_diff_lut(params.g));
        let (hmd_bright, hmd_luts) = if matches!(params.measure, Measure::Hmd) {
            (
                Some(atlas.gray.iter().map(|&v| v as f64 / 255.0 > params.t).collect()),
                Some(hmd_luts(params.g)),
            )
        } else {
            (None, None)
        };
        Self { params, atlas, md_lut, hmd_bright, hmd_luts }
    }

    /// Cost at a placement (lower is better; infinity when undefined).
    pub fn cost(&self, f: &FatImage, x: usize, y: usize) -> f64 {
        match self.params.measure {
            Measure::Md => md_with_lut(f, self.atlas, x, y, self.md_lut.as_ref().unwrap()),
            Measure::Hmd => {
                let (bright_lut, dark_lut) = self.hmd_luts.as_ref().unwrap();
                hmd_with_luts(
                    f,
                    self.atlas,
                    x,
                    y,
                    self.hmd_bright.as_ref().unwrap(),
                    bright_lut,
                    dark_lut,
                )
            }
            _ => match evaluate(&self.params, f, self.atlas, x, y) {
                Ok(v) => -v,
                Err(_) => f64::INFINITY,
            },
        }
    }

    /// Converts a cost back to the measure's natural sign.
    pub fn natural(&self, cost: f64) -> f64 {
        if self.params.measure.maximizes() {
            -cost
        } else {
            cost
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn image(w: usize, h: usize, gray: Vec<u8>) -> FatImage {
        FatImage::new(w, h, gray, 0.35)
    }

    fn random_window(rng: &mut ChaCha8Rng, w: usize, h: usize) -> FatImage {
        image(w, h, (0..w * h).map(|_| rng.gen()).collect())
    }

    #[test]
    fn md_zero_iff_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let m = random_window(&mut rng, 8, 6);
        assert_eq!(md(&m, &m, 0, 0, 1.0).unwrap(), 0.0);
        let mut f = m.clone();
        f.set(3, 2, f.get(3, 2).wrapping_add(1));
        assert!(md(&f, &m, 0, 0, 1.0).unwrap() > 0.0);
    }

    #[test]
    fn md_full_contrast_is_one() {
        let f = image(4, 4, vec![255; 16]);
        let m = image(4, 4, vec![0; 16]);
        assert_eq!(md(&f, &m, 0, 0, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn md_hand_case_squared() {
        // two-pixel overlap with normalized diffs {1, 0} and g = 2 -> 0.5
        let f = image(2, 1, vec![255, 7]);
        let m = image(2, 1, vec![0, 7]);
        assert_eq!(md(&f, &m, 0, 0, 2.0).unwrap(), 0.5);
    }

    #[test]
    fn md_out_of_bounds_placement() {
        let f = image(4, 4, vec![0; 16]);
        let m = image(3, 3, vec![0; 9]);
        assert!(matches!(md(&f, &m, 2, 0, 1.0), Err(RegistrationError::PlacementOutOfBounds(2, 0))));
    }

    #[test]
    fn cc_self_is_one_and_affine_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let m = image(6, 6, (0..36).map(|_| rng.gen_range(0..=100)).collect());
        assert!((cc(&m, &m, 0, 0).unwrap() - 1.0).abs() < 1e-12);
        // F = 2M + 3 stays within 8 bits for values <= 100
        let f = image(6, 6, m.gray.iter().map(|&v| 2 * v + 3).collect());
        assert!((cc(&f, &m, 0, 0).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cc_constant_window_is_undefined() {
        let f = image(4, 4, vec![9; 16]);
        let m = image(4, 4, (0..16).map(|v| v as u8).collect());
        assert!(matches!(cc(&f, &m, 0, 0), Err(RegistrationError::ZeroVariance)));
    }

    /// Base-g entropy of a histogram, computed directly.
    fn entropy(gray: &[u8], g: f64) -> f64 {
        let mut hist = [0u32; 256];
        for &v in gray {
            hist[v as usize] += 1;
        }
        let n = gray.len() as f64;
        hist.iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                -p * (p.ln() / g.ln())
            })
            .sum()
    }

    #[test]
    fn mi_of_constant_atlas_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let f = random_window(&mut rng, 5, 5);
        let m = image(5, 5, vec![77; 25]);
        assert!(mi(&f, &m, 0, 0, 256.0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn mi_of_identical_windows_is_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        for _ in 0..20 {
            let m = random_window(&mut rng, 7, 5);
            let got = mi(&m, &m, 0, 0, 256.0).unwrap();
            let expected = entropy(&m.gray, 256.0);
            assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
        }
    }

    #[test]
    fn mi_uniform_full_range_hits_one() {
        let gray: Vec<u8> = (0..=255u16).map(|v| v as u8).collect();
        let m = image(16, 16, gray);
        assert!((mi(&m, &m, 0, 0, 256.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mi_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        for _ in 0..20 {
            let a = random_window(&mut rng, 6, 4);
            let b = random_window(&mut rng, 6, 4);
            let ab = mi(&a, &b, 0, 0, 256.0).unwrap();
            let ba = mi(&b, &a, 0, 0, 256.0).unwrap();
            assert!((ab - ba).abs() < 1e-9);
        }
    }

    #[test]
    fn wmi_equals_mi_on_identical_windows() {
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        for _ in 0..20 {
            let m = random_window(&mut rng, 6, 6);
            let w = wmi(&m, &m, 0, 0, 256.0).unwrap();
            let plain = mi(&m, &m, 0, 0, 256.0).unwrap();
            assert_eq!(w, plain);
        }
    }

    #[test]
    fn wmi_halves_full_contrast_parcels() {
        // joint mass splits between (0, 255) and (255, 0): every parcel gets
        // weight 1/(1 + 1), so WMI = MI / 2
        let f = image(2, 1, vec![0, 255]);
        let m = image(2, 1, vec![255, 0]);
        let w = wmi(&f, &m, 0, 0, 256.0).unwrap();
        let plain = mi(&f, &m, 0, 0, 256.0).unwrap();
        assert!(plain > 0.0);
        assert!((w - plain / 2.0).abs() < 1e-12);
    }

    #[test]
    fn hmd_all_dark_identical_windows_is_zero() {
        // every pixel at or below the threshold, windows identical
        let m = image(4, 4, vec![26; 16]); // 26/255 = 0.102 <= 0.2
        assert_eq!(hmd(&m, &m, 0, 0, 1.0, 0.2).unwrap(), 0.0);
        let z = image(4, 4, vec![0; 16]);
        assert_eq!(hmd(&z, &z, 0, 0, 1.0, 0.2).unwrap(), 0.0);
    }

    #[test]
    fn hmd_bright_agreement_rewards() {
        // single pixel F = 1, M = 1 normalized: -max(1 - (1 - 1), 0) = -1
        let f = image(1, 1, vec![255]);
        let m = image(1, 1, vec![255]);
        assert_eq!(hmd(&f, &m, 0, 0, 1.0, 0.2).unwrap(), -1.0);
    }

    #[test]
    fn hmd_dark_branch_absolute_difference() {
        // F all zero, M has one faint pixel below t: plain |F - M|
        let f = image(2, 1, vec![0, 0]);
        let m = image(2, 1, vec![0, 26]);
        let expected = 26.0 / 255.0;
        assert!((hmd(&f, &m, 0, 0, 1.0, 0.2).unwrap() - expected).abs() < 1e-12);
    }

    /// Two-pass oracle: S_p from bright atlas pixels, S_n from the rest.
    fn hmd_oracle(f: &FatImage, m: &FatImage, g: f64, t: f64) -> f64 {
        let mut s_p = 0.0;
        let mut s_n = 0.0;
        for i in 0..m.height {
            for j in 0..m.width {
                let fv = f.get(j, i) as f64 / 255.0;
                let mv = m.get(j, i) as f64 / 255.0;
                if mv > t {
                    s_p += (fv - (1.0 - mv)).powf(g).max(0.0);
                } else {
                    s_n += (fv - mv).abs().powf(g);
                }
            }
        }
        s_n - s_p
    }

    #[test]
    fn hmd_decomposes_into_sn_minus_sp() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for round in 0..100 {
            let g = if round % 2 == 0 { 1.0 } else { 2.0 };
            let f = random_window(&mut rng, 8, 8);
            let m = random_window(&mut rng, 8, 8);
            let got = hmd(&f, &m, 0, 0, g, 0.2).unwrap();
            let expected = hmd_oracle(&f, &m, g, 0.2);
            assert!((got - expected).abs() < 1e-9, "g={g}: {got} vs {expected}");
        }
    }

    #[test]
    fn prepared_costs_match_plain_functions() {
        let mut rng = ChaCha8Rng::seed_from_u64(38);
        let f = random_window(&mut rng, 20, 20);
        let m = random_window(&mut rng, 6, 5);
        for measure in [Measure::Md, Measure::Cc, Measure::Mi, Measure::Wmi, Measure::Hmd] {
            let params = SimilarityParams::for_measure(measure);
            let prepared = PreparedMeasure::new(params, &m);
            for (x, y) in [(0, 0), (7, 3), (14, 15)] {
                let cost = prepared.cost(&f, x, y);
                let natural = evaluate(&params, &f, &m, x, y).unwrap();
                let expected_cost = if measure.maximizes() { -natural } else { natural };
                assert!(
                    (cost - expected_cost).abs() < 1e-12,
                    "{measure:?} at ({x},{y}): {cost} vs {expected_cost}"
                );
                assert!((prepared.natural(cost) - natural).abs() < 1e-12);
            }
        }
    }
}
