//! Pixel confusion matrices with mean intersection-over-union and overall
//! accuracy.

use crate::data::LabelMap;
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// `counts[j][i]` = pixels of true category `j` predicted as `i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    n_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        ConfusionMatrix {
            n_classes,
            counts: vec![0; n_classes * n_classes],
        }
    }

    /// Builds a matrix from explicit rows (`rows[truth][pred]`).
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Validation("confusion matrix rows must be square".into()));
        }
        Ok(ConfusionMatrix {
            n_classes: n,
            counts: rows.concat(),
        })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.n_classes + pred]
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.n_classes.max(1)).map(<[u64]>::to_vec).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Pixels of true category `i` (`t_i`).
    pub fn truth_total(&self, i: usize) -> u64 {
        (0..self.n_classes).map(|p| self.get(i, p)).sum()
    }

    /// Pixels predicted as category `i`.
    pub fn pred_total(&self, i: usize) -> u64 {
        (0..self.n_classes).map(|t| self.get(t, i)).sum()
    }

    pub fn accumulate(&mut self, predicted: &LabelMap, truth: &LabelMap) -> Result<()> {
        if predicted.height() != truth.height() || predicted.width() != truth.width() {
            return Err(Error::Validation(format!(
                "prediction is {}x{} but truth is {}x{}",
                predicted.height(),
                predicted.width(),
                truth.height(),
                truth.width()
            )));
        }
        let n = self.n_classes;
        for (i, (&p, &t)) in predicted.data().iter().zip(truth.data()).enumerate() {
            for (what, v) in [("predicted", p), ("truth", t)] {
                if v as usize >= n {
                    let (row, col) = (i / truth.width(), i % truth.width());
                    return Err(Error::Validation(format!(
                        "{what} label {v} out of range [0, {n}) at pixel ({row}, {col})"
                    )));
                }
            }
        }
        for (&p, &t) in predicted.data().iter().zip(truth.data()) {
            self.counts[t as usize * n + p as usize] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.n_classes != self.n_classes {
            return Err(Error::Validation(format!(
                "cannot merge {}-class and {}-class matrices",
                self.n_classes, other.n_classes
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// Per-category IOU; `None` where the category appears in neither truth
    /// nor prediction.
    pub fn class_iou(&self) -> Vec<Option<f64>> {
        (0..self.n_classes)
            .map(|i| {
                let hit = self.get(i, i);
                let denom = self.truth_total(i) + self.pred_total(i) - hit;
                (denom > 0).then(|| hit as f64 / denom as f64)
            })
            .collect()
    }

    /// Mean IOU over the categories with a non-zero denominator.
    pub fn miou(&self) -> Result<f64> {
        if self.total() == 0 {
            return Err(Error::UndefinedMetric("mIOU of an empty confusion matrix"));
        }
        let present: Vec<f64> = self.class_iou().into_iter().flatten().collect();
        Ok(present.iter().sum::<f64>() / present.len() as f64)
    }

    /// Trace over total.
    pub fn acc(&self) -> Result<f64> {
        let total = self.total();
        if total == 0 {
            return Err(Error::UndefinedMetric("accuracy of an empty confusion matrix"));
        }
        let trace: u64 = (0..self.n_classes).map(|i| self.get(i, i)).sum();
        Ok(trace as f64 / total as f64)
    }

    /// `class,iou` rows followed by a `miou,acc` summary.
    pub fn to_csv(&self) -> Result<String> {
        let mut out = String::from("class,iou\n");
        for (i, iou) in self.class_iou().into_iter().enumerate() {
            let v = iou.map(|x| format!("{x:.6}")).unwrap_or_default();
            out.push_str(&format!("{i},{v}\n"));
        }
        out.push_str(&format!("miou,acc\n{:.6},{:.6}\n", self.miou()?, self.acc()?));
        Ok(out)
    }
}

/// Per-pixel argmax over channels, one map per batch item. Ties go to the
/// lowest class index.
pub fn argmax_labels<T: Element>(probs: &Tensor<T>) -> Vec<LabelMap> {
    let s = probs.shape();
    let plane = s.plane();
    (0..s.n())
        .map(|n| {
            let item = probs.item(n);
            let data = (0..plane)
                .map(|p| {
                    let mut best = 0;
                    for c in 1..s.c() {
                        if item[c * plane + p] > item[best * plane + p] {
                            best = c;
                        }
                    }
                    best as u8
                })
                .collect();
            LabelMap::new(s.h(), s.w(), data).expect("plane-sized label map")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(w: usize, v: &[u8]) -> LabelMap {
        LabelMap::new(v.len() / w, w, v.to_vec()).unwrap()
    }

    #[test]
    fn hand_counted_example() {
        let mut cm = ConfusionMatrix::new(2);
        cm.accumulate(&map(2, &[0, 1, 1, 1]), &map(2, &[0, 0, 1, 1])).unwrap();
        assert_eq!(cm.rows(), vec![vec![1, 1], vec![0, 2]]);
        assert!((cm.miou().unwrap() - (0.5 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert_eq!(cm.acc().unwrap(), 0.75);
    }

    #[test]
    fn perfect_and_all_wrong() {
        let mut cm = ConfusionMatrix::new(2);
        let t = map(5, &[0; 10]);
        cm.accumulate(&t, &t).unwrap();
        assert_eq!(cm.get(0, 0), 10);
        assert_eq!(cm.miou().unwrap(), 1.0);
        assert_eq!(cm.acc().unwrap(), 1.0);

        let mut cm = ConfusionMatrix::new(2);
        cm.accumulate(&map(2, &[1, 0]), &map(2, &[0, 1])).unwrap();
        assert_eq!(cm.miou().unwrap(), 0.0);
        assert_eq!(cm.acc().unwrap(), 0.0);
    }

    #[test]
    fn empty_inputs() {
        let mut cm = ConfusionMatrix::new(2);
        let empty = LabelMap::new(0, 0, vec![]).unwrap();
        cm.accumulate(&empty, &empty).unwrap();
        assert_eq!(cm, ConfusionMatrix::new(2));
        assert!(matches!(cm.miou(), Err(Error::UndefinedMetric(_))));
        assert!(matches!(cm.acc(), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn out_of_range_label_reports_pixel() {
        let mut cm = ConfusionMatrix::new(2);
        let err = cm.accumulate(&map(2, &[0, 0, 0, 2]), &map(2, &[0, 0, 0, 0])).unwrap_err();
        assert!(err.to_string().contains("(1, 1)"), "{err}");
        assert_eq!(cm.total(), 0);
    }

    #[test]
    fn absent_class_excluded_from_mean() {
        let mut cm = ConfusionMatrix::new(3);
        let t = map(2, &[0, 0, 1, 1]);
        cm.accumulate(&map(2, &[0, 0, 1, 0]), &t).unwrap();
        assert_eq!(cm.class_iou()[2], None);
        let want = (2.0 / 3.0 + 1.0 / 2.0) / 2.0;
        assert!((cm.miou().unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn argmax_prefers_first_on_ties() {
        let probs = Tensor::<f32>::new(crate::Shape::new(1, 2, 1, 3), vec![0.5, 0.2, 0.9, 0.5, 0.8, 0.1]).unwrap();
        assert_eq!(argmax_labels(&probs)[0].data(), &[0, 1, 0]);
    }

    #[test]
    fn csv_layout() {
        let cm = ConfusionMatrix::from_rows(&[vec![1, 1], vec![0, 2]]).unwrap();
        assert_eq!(
            cm.to_csv().unwrap(),
            "class,iou\n0,0.500000\n1,0.666667\nmiou,acc\n0.583333,0.750000\n"
        );
    }
}
