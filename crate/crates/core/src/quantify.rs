//! Fat areas, volumes and agreement metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::ClassMask;
use crate::image::FatImage;

#[derive(Debug, Error)]
pub enum QuantifyError {
    #[error("pixel spacing must be positive, got {0}")]
    InvalidSpacing(f64),
    #[error("masks are {0}x{1} and {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("empty confusion matrix")]
    EmptyConfusion,
    #[error("undefined rate: the truth has no {0} pixels")]
    UndefinedRate(&'static str),
    #[error("undefined kappa: expected agreement is 1")]
    UndefinedKappa,
    #[error("no slices")]
    NoSlices,
    #[error("no class reports to average")]
    EmptyReportList,
}

/// Binary confusion counts for one class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn add(&mut self, other: &ConfusionMatrix) {
        self.tp += other.tp;
        self.tn += other.tn;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

/// Mask area in mm^2.
pub fn fat_area(mask: &ClassMask, pixel_spacing: f64) -> Result<f64, QuantifyError> {
    if pixel_spacing <= 0.0 {
        return Err(QuantifyError::InvalidSpacing(pixel_spacing));
    }
    Ok(mask.count() as f64 * pixel_spacing * pixel_spacing)
}

/// Volume in ml by trapezoidal interpolation of per-slice areas over the
/// acquisition gap; a single slice contributes one slab.
pub fn fat_volume(
    masks: &[ClassMask],
    pixel_spacing: f64,
    slice_spacing: f64,
) -> Result<f64, QuantifyError> {
    let areas = masks
        .iter()
        .map(|m| fat_area(m, pixel_spacing))
        .collect::<Result<Vec<_>, _>>()?;
    volume_from_areas(&areas, slice_spacing)
}

/// The trapezoid rule over already-computed slice areas (mm^2) -> ml.
pub fn volume_from_areas(areas: &[f64], slice_spacing: f64) -> Result<f64, QuantifyError> {
    if areas.is_empty() {
        return Err(QuantifyError::NoSlices);
    }
    if slice_spacing <= 0.0 {
        return Err(QuantifyError::InvalidSpacing(slice_spacing));
    }
    let mm3 = if areas.len() == 1 {
        areas[0] * slice_spacing
    } else {
        areas.windows(2).map(|w| (w[0] + w[1]) / 2.0 * slice_spacing).sum()
    };
    Ok(mm3 / 1000.0)
}

/// Confusion counts over the fat-pixel domain of the companion image;
/// background pixels are never classified and never counted.
pub fn confusion(
    pred: &ClassMask,
    truth: &ClassMask,
    domain: &FatImage,
) -> Result<ConfusionMatrix, QuantifyError> {
    if pred.width != truth.width || pred.height != truth.height {
        return Err(QuantifyError::DimensionMismatch(
            pred.width,
            pred.height,
            truth.width,
            truth.height,
        ));
    }
    if pred.width != domain.width || pred.height != domain.height {
        return Err(QuantifyError::DimensionMismatch(
            pred.width,
            pred.height,
            domain.width,
            domain.height,
        ));
    }
    let mut cm = ConfusionMatrix::default();
    for i in 0..pred.bits.len() {
        if domain.gray[i] == 0 {
            continue;
        }
        match (pred.bits[i], truth.bits[i]) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, true) => cm.fn_ += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

/// Confusion counts over every pixel, for comparison runs that widen the
/// domain beyond fat.
pub fn confusion_all_pixels(
    pred: &ClassMask,
    truth: &ClassMask,
) -> Result<ConfusionMatrix, QuantifyError> {
    if pred.width != truth.width || pred.height != truth.height {
        return Err(QuantifyError::DimensionMismatch(
            pred.width,
            pred.height,
            truth.width,
            truth.height,
        ));
    }
    let mut cm = ConfusionMatrix::default();
    for i in 0..pred.bits.len() {
        match (pred.bits[i], truth.bits[i]) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, true) => cm.fn_ += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64, QuantifyError> {
    let total = cm.total();
    if total == 0 {
        return Err(QuantifyError::EmptyConfusion);
    }
    Ok((cm.tp + cm.tn) as f64 / total as f64)
}

/// (TP rate, TN rate, FP rate, FN rate). The positive rates need positive
/// truth pixels, the negative rates need negative ones.
pub fn rates(cm: &ConfusionMatrix) -> Result<(f64, f64, f64, f64), QuantifyError> {
    let positives = cm.tp + cm.fn_;
    let negatives = cm.tn + cm.fp;
    if positives == 0 {
        return Err(QuantifyError::UndefinedRate("positive"));
    }
    if negatives == 0 {
        return Err(QuantifyError::UndefinedRate("negative"));
    }
    let tp_rate = cm.tp as f64 / positives as f64;
    let tn_rate = cm.tn as f64 / negatives as f64;
    Ok((tp_rate, tn_rate, 1.0 - tn_rate, 1.0 - tp_rate))
}

/// Dice overlap 2TP / (2TP + FP + FN); two empty masks count as perfect
/// agreement.
pub fn dice(pred: &ClassMask, truth: &ClassMask) -> f64 {
    assert_eq!(
        (pred.width, pred.height),
        (truth.width, truth.height),
        "masks must align"
    );
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut fn_ = 0u64;
    for (&p, &t) in pred.bits.iter().zip(&truth.bits) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    if tp + fp + fn_ == 0 {
        return 1.0;
    }
    2.0 * tp as f64 / (2.0 * tp as f64 + fp as f64 + fn_ as f64)
}

/// Cohen's kappa of the 2x2 matrix.
pub fn kappa(cm: &ConfusionMatrix) -> Result<f64, QuantifyError> {
    let total = cm.total();
    if total == 0 {
        return Err(QuantifyError::EmptyConfusion);
    }
    let n = total as f64;
    let po = (cm.tp + cm.tn) as f64 / n;
    let pred_pos = (cm.tp + cm.fp) as f64 / n;
    let truth_pos = (cm.tp + cm.fn_) as f64 / n;
    let pe = pred_pos * truth_pos + (1.0 - pred_pos) * (1.0 - truth_pos);
    if (1.0 - pe).abs() < 1e-15 {
        return Err(QuantifyError::UndefinedKappa);
    }
    Ok((po - pe) / (1.0 - pe))
}

/// Accuracy and rates of one class, as reported per class and averaged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub accuracy: f64,
    pub tp_rate: f64,
    pub tn_rate: f64,
    pub fp_rate: f64,
    pub fn_rate: f64,
    pub kappa: f64,
}

impl ClassReport {
    pub fn from_confusion(cm: &ConfusionMatrix) -> Result<Self, QuantifyError> {
        let (tp_rate, tn_rate, fp_rate, fn_rate) = rates(cm)?;
        Ok(Self {
            accuracy: accuracy(cm)?,
            tp_rate,
            tn_rate,
            fp_rate,
            fn_rate,
            kappa: kappa(cm)?,
        })
    }
}

/// Unweighted arithmetic mean over per-class reports.
pub fn mean_class_report(reports: &[ClassReport]) -> Result<ClassReport, QuantifyError> {
    if reports.is_empty() {
        return Err(QuantifyError::EmptyReportList);
    }
    let n = reports.len() as f64;
    Ok(ClassReport {
        accuracy: reports.iter().map(|r| r.accuracy).sum::<f64>() / n,
        tp_rate: reports.iter().map(|r| r.tp_rate).sum::<f64>() / n,
        tn_rate: reports.iter().map(|r| r.tn_rate).sum::<f64>() / n,
        fp_rate: reports.iter().map(|r| r.fp_rate).sum::<f64>() / n,
        fn_rate: reports.iter().map(|r| r.fn_rate).sum::<f64>() / n,
        kappa: reports.iter().map(|r| r.kappa).sum::<f64>() / n,
    })
}

/// Per-class volume summary for one scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeReport {
    pub epicardial_ml: f64,
    pub mediastinal_ml: f64,
    pub epicardial_slice_areas_mm2: Vec<f64>,
    pub mediastinal_slice_areas_mm2: Vec<f64>,
    pub pixel_spacing_mm: f64,
    pub slice_spacing_mm: f64,
}

impl VolumeReport {
    pub fn from_masks(
        epicardial: &[ClassMask],
        mediastinal: &[ClassMask],
        pixel_spacing: f64,
        slice_spacing: f64,
    ) -> Result<Self, QuantifyError> {
        let epi_areas = epicardial
            .iter()
            .map(|m| fat_area(m, pixel_spacing))
            .collect::<Result<Vec<_>, _>>()?;
        let med_areas = mediastinal
            .iter()
            .map(|m| fat_area(m, pixel_spacing))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            epicardial_ml: volume_from_areas(&epi_areas, slice_spacing)?,
            mediastinal_ml: volume_from_areas(&med_areas, slice_spacing)?,
            epicardial_slice_areas_mm2: epi_areas,
            mediastinal_slice_areas_mm2: med_areas,
            pixel_spacing_mm: pixel_spacing,
            slice_spacing_mm: slice_spacing,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::ClassTag;

    fn mask_with(count: usize, w: usize, h: usize) -> ClassMask {
        let mut m = ClassMask::new(w, h, ClassTag::Epicardial);
        for i in 0..count {
            m.bits[i] = true;
        }
        m
    }

    #[test]
    fn area_examples() {
        let m = mask_with(1000, 40, 25);
        assert!((fat_area(&m, 0.35).unwrap() - 122.5).abs() < 1e-9);
        let empty = ClassMask::new(8, 8, ClassTag::Epicardial);
        assert_eq!(fat_area(&empty, 0.35).unwrap(), 0.0);
        let full = mask_with(512 * 512, 512, 512);
        assert!((fat_area(&full, 0.35).unwrap() - 32112.64).abs() < 1e-6);
    }

    #[test]
    fn two_slice_worked_volume() {
        let masks = vec![mask_with(1000, 40, 25), mask_with(1000, 40, 25)];
        let ml = fat_volume(&masks, 0.35, 3.0).unwrap();
        assert!((ml - 0.3675).abs() < 1e-12);
    }

    #[test]
    fn empty_masks_have_zero_volume() {
        let masks = vec![ClassMask::new(8, 8, ClassTag::Epicardial); 5];
        assert_eq!(fat_volume(&masks, 0.35, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn cylinder_volume_is_analytic() {
        // constant disc area over N slices: volume = A * (N - 1) * gap
        let n = 12;
        let masks = vec![mask_with(797, 40, 25); n];
        let area = 797.0 * 0.35 * 0.35;
        let expected = area * (n as f64 - 1.0) * 2.5 / 1000.0;
        let got = fat_volume(&masks, 0.35, 2.5).unwrap();
        assert!((got - expected).abs() < 1e-9);
    }

    #[test]
    fn single_slice_volume_is_one_slab() {
        let masks = vec![mask_with(100, 20, 20)];
        let expected = 100.0 * 0.35 * 0.35 * 3.0 / 1000.0;
        assert!((fat_volume(&masks, 0.35, 3.0).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn volume_scales_with_spacing_squared() {
        let masks = vec![mask_with(500, 40, 25); 4];
        let v1 = fat_volume(&masks, 0.35, 3.0).unwrap();
        let v2 = fat_volume(&masks, 0.70, 3.0).unwrap();
        assert!((v2 - 4.0 * v1).abs() < 1e-9);
    }

    #[test]
    fn volume_is_additive_under_slice_partition() {
        let areas: Vec<f64> = (0..9).map(|i| 50.0 + 7.0 * i as f64).collect();
        let whole = volume_from_areas(&areas, 2.0).unwrap();
        let first = volume_from_areas(&areas[..5], 2.0).unwrap();
        let second = volume_from_areas(&areas[4..], 2.0).unwrap();
        assert!((whole - (first + second)).abs() < 1e-12);
    }

    fn domain(w: usize, h: usize) -> FatImage {
        FatImage::filled(w, h, 50, 0.35)
    }

    #[test]
    fn confusion_counts_over_fat_domain_only() {
        let mut img = domain(4, 2);
        img.set(0, 0, 0); // background pixel is excluded
        let mut pred = ClassMask::new(4, 2, ClassTag::Epicardial);
        let mut truth = ClassMask::new(4, 2, ClassTag::Epicardial);
        pred.set(1, 0, true);
        truth.set(1, 0, true);
        truth.set(2, 0, true);
        let cm = confusion(&pred, &truth, &img).unwrap();
        assert_eq!((cm.tp, cm.fn_, cm.fp, cm.tn), (1, 1, 0, 5));
        assert_eq!(cm.total(), 7); // 8 pixels minus the background one
    }

    #[test]
    fn confusion_identity_and_inversion() {
        let img = domain(4, 4);
        let mut a = ClassMask::new(4, 4, ClassTag::Epicardial);
        for i in 0..7 {
            a.bits[i] = true;
        }
        let cm = confusion(&a, &a, &img).unwrap();
        assert_eq!((cm.fp, cm.fn_), (0, 0));
        let mut b = a.clone();
        b.bits.iter_mut().for_each(|v| *v = !*v);
        let cm = confusion(&a, &b, &img).unwrap();
        assert_eq!((cm.tp, cm.tn), (0, 0));
    }

    #[test]
    fn accuracy_and_rates_examples() {
        let perfect = ConfusionMatrix { tp: 30, tn: 70, fp: 0, fn_: 0 };
        assert_eq!(accuracy(&perfect).unwrap(), 1.0);
        assert_eq!(rates(&perfect).unwrap(), (1.0, 1.0, 0.0, 0.0));

        // the reported epicardial TP rate: 989 of 1000 positives found
        let cm = ConfusionMatrix { tp: 989, fn_: 11, tn: 983, fp: 17 };
        let (tp_rate, ..) = rates(&cm).unwrap();
        assert!((tp_rate - 0.989).abs() < 1e-12);

        let wrong = ConfusionMatrix { tp: 0, tn: 0, fp: 40, fn_: 60 };
        assert_eq!(accuracy(&wrong).unwrap(), 0.0);

        let no_positives = ConfusionMatrix { tp: 0, tn: 5, fp: 5, fn_: 0 };
        assert!(matches!(rates(&no_positives), Err(QuantifyError::UndefinedRate("positive"))));
    }

    #[test]
    fn dice_examples() {
        let img_w = 6;
        let mut a = ClassMask::new(img_w, 2, ClassTag::Epicardial);
        a.set(0, 0, true);
        a.set(1, 0, true);
        assert_eq!(dice(&a, &a), 1.0);

        let mut disjoint = ClassMask::new(img_w, 2, ClassTag::Epicardial);
        disjoint.set(3, 1, true);
        assert_eq!(dice(&a, &disjoint), 0.0);

        let empty = ClassMask::new(img_w, 2, ClassTag::Epicardial);
        assert_eq!(dice(&empty, &empty), 1.0);
        // symmetry
        assert_eq!(dice(&a, &disjoint), dice(&disjoint, &a));
    }

    #[test]
    fn kappa_examples() {
        let perfect = ConfusionMatrix { tp: 50, tn: 50, fp: 0, fn_: 0 };
        assert!((kappa(&perfect).unwrap() - 1.0).abs() < 1e-12);
        let independent = ConfusionMatrix { tp: 25, tn: 25, fp: 25, fn_: 25 };
        assert!(kappa(&independent).unwrap().abs() < 1e-12);
        let degenerate = ConfusionMatrix { tp: 10, tn: 0, fp: 0, fn_: 0 };
        assert!(matches!(kappa(&degenerate), Err(QuantifyError::UndefinedKappa)));
    }

    #[test]
    fn mean_report_over_reference_accuracies() {
        let mk = |accuracy| ClassReport {
            accuracy,
            tp_rate: 0.9,
            tn_rate: 0.9,
            fp_rate: 0.1,
            fn_rate: 0.1,
            kappa: 0.9,
        };
        let mean = mean_class_report(&[mk(0.985), mk(0.984), mk(0.964)]).unwrap();
        assert!((mean.accuracy - 0.9776666666666667).abs() < 1e-12);
        let single = mean_class_report(&[mk(0.5)]).unwrap();
        assert_eq!(single.accuracy, 0.5);
        assert!(matches!(mean_class_report(&[]), Err(QuantifyError::EmptyReportList)));
    }

    #[test]
    fn confusion_counts_cover_the_domain_exactly() {
        let mut img = domain(10, 10);
        for i in 0..30 {
            img.gray[i * 3 % 100] = 0;
        }
        let fat_count = img.gray.iter().filter(|&&g| g != 0).count() as u64;
        let mut pred = ClassMask::new(10, 10, ClassTag::Epicardial);
        let mut truth = ClassMask::new(10, 10, ClassTag::Epicardial);
        for i in 0..100 {
            pred.bits[i] = i % 3 == 0;
            truth.bits[i] = i % 4 == 0;
        }
        let cm = confusion(&pred, &truth, &img).unwrap();
        assert_eq!(cm.total(), fat_count);
    }
}
