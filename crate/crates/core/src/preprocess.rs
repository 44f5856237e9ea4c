//! Min-max normalisation, Butterworth low-pass filtering and windowing.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dataset::SignalDataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-position extrema over a training set.
///
/// `apply` maps `x -> (x - min) / (max - min)`; positions where `max == min`
/// map to 0. Out-of-range values are not clamped.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub sample_shape: Vec<usize>,
    pub x_min: Vec<f32>,
    pub x_max: Vec<f32>,
}

impl Normalizer {
    /// Fits extrema over the samples. Needs at least two samples.
    pub fn fit<'a>(
        sample_shape: &[usize],
        samples: impl IntoIterator<Item = &'a [f32]>,
    ) -> Result<Self> {
        let len: usize = sample_shape.iter().product();
        let mut x_min = vec![f32::INFINITY; len];
        let mut x_max = vec![f32::NEG_INFINITY; len];
        let mut count = 0usize;
        for s in samples {
            if s.len() != len {
                return Err(Error::shape(
                    "minmax_fit",
                    format!("sample has {} values, expected {len}", s.len()),
                ));
            }
            for ((lo, hi), &v) in x_min.iter_mut().zip(x_max.iter_mut()).zip(s) {
                *lo = lo.min(v);
                *hi = hi.max(v);
            }
            count += 1;
        }
        if count == 0 {
            return Err(Error::Param("cannot fit a normalizer on an empty set".into()));
        }
        if count < 2 {
            return Err(Error::Param(
                "min-max fitting needs at least 2 training samples".into(),
            ));
        }
        Ok(Self {
            sample_shape: sample_shape.to_vec(),
            x_min,
            x_max,
        })
    }

    pub fn fit_dataset(ds: &SignalDataset, indices: &[usize]) -> Result<Self> {
        Self::fit(ds.sample_shape(), indices.iter().map(|&i| ds.sample(i)))
    }

    /// Positions whose training extrema coincide.
    pub fn degenerate_positions(&self) -> Vec<usize> {
        self.x_min
            .iter()
            .zip(&self.x_max)
            .enumerate()
            .filter(|(_, (lo, hi))| lo == hi)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn apply_in_place(&self, sample: &mut [f32]) -> Result<()> {
        if sample.len() != self.x_min.len() {
            return Err(Error::shape(
                "minmax_apply",
                format!(
                    "sample has {} values, normalizer expects {} (shape {:?})",
                    sample.len(),
                    self.x_min.len(),
                    self.sample_shape
                ),
            ));
        }
        for ((v, &lo), &hi) in sample.iter_mut().zip(&self.x_min).zip(&self.x_max) {
            *v = if hi > lo { (*v - lo) / (hi - lo) } else { 0.0 };
        }
        Ok(())
    }

    pub fn apply(&self, sample: &[f32]) -> Result<Vec<f32>> {
        let mut out = sample.to_vec();
        self.apply_in_place(&mut out)?;
        Ok(out)
    }

    /// Inverse map; degenerate positions return their (single) training value.
    pub fn invert(&self, normalized: &[f32]) -> Result<Vec<f32>> {
        if normalized.len() != self.x_min.len() {
            return Err(Error::shape(
                "minmax_invert",
                format!("expected {} values, got {}", self.x_min.len(), normalized.len()),
            ));
        }
        Ok(normalized
            .iter()
            .zip(&self.x_min)
            .zip(&self.x_max)
            .map(|((&v, &lo), &hi)| if hi > lo { v * (hi - lo) + lo } else { lo })
            .collect())
    }

    pub fn apply_dataset(&self, ds: &mut SignalDataset) -> Result<()> {
        if ds.sample_len() != self.x_min.len() {
            return Err(Error::shape(
                "minmax_apply",
                format!(
                    "dataset samples have {} values, normalizer expects {}",
                    ds.sample_len(),
                    self.x_min.len()
                ),
            ));
        }
        ds.map_samples(|s| {
            self.apply_in_place(s)
                .expect("length checked before mapping")
        });
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub order: usize,
    /// Cutoff as a fraction of the Nyquist frequency, in `(0, 1)`.
    pub cutoff: f64,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            order: 5,
            cutoff: 0.1,
        }
    }
}

/// One biquad `b0 + b1 z^-1 + b2 z^-2 / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Section {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

/// Digital Butterworth low-pass as cascaded second-order sections.
#[derive(Debug, Clone, PartialEq)]
pub struct Butterworth {
    pub spec: FilterSpec,
    pub sections: Vec<Section>,
}

impl Butterworth {
    /// Bilinear-transform design with frequency prewarping, so the -3 dB point
    /// lands exactly on the requested cutoff.
    pub fn design(spec: FilterSpec) -> Result<Self> {
        if spec.order == 0 {
            return Err(Error::Param("filter order must be >= 1".into()));
        }
        if !(spec.cutoff > 0.0 && spec.cutoff < 1.0) {
            return Err(Error::Param(format!(
                "cutoff must lie in (0, 1) as a fraction of Nyquist, got {}",
                spec.cutoff
            )));
        }
        let n = spec.order;
        let wc = (PI * spec.cutoff / 2.0).tan();
        let mut sections = Vec::with_capacity(n.div_ceil(2));
        // Conjugate pole pairs of the analog prototype, k = 0..n/2.
        for k in 0..n / 2 {
            let angle = PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
            let a1 = -2.0 * wc * angle.cos();
            let w2 = wc * wc;
            let d0 = 1.0 + a1 + w2;
            sections.push(Section {
                b: [w2 / d0, 2.0 * w2 / d0, w2 / d0],
                a: [(2.0 * w2 - 2.0) / d0, (1.0 - a1 + w2) / d0],
            });
        }
        if n % 2 == 1 {
            let d0 = 1.0 + wc;
            sections.push(Section {
                b: [wc / d0, wc / d0, 0.0],
                a: [(wc - 1.0) / d0, 0.0],
            });
        }
        Ok(Self { spec, sections })
    }

    /// Causal filtering from zero initial state.
    pub fn apply(&self, series: &[f64]) -> Vec<f64> {
        let mut out = series.to_vec();
        for s in &self.sections {
            let (mut z1, mut z2) = (0.0, 0.0);
            for v in out.iter_mut() {
                let x = *v;
                let y = s.b[0] * x + z1;
                z1 = s.b[1] * x - s.a[0] * y + z2;
                z2 = s.b[2] * x - s.a[1] * y;
                *v = y;
            }
        }
        out
    }

    /// `|H(e^{j omega})|` with `omega` in radians per sample.
    pub fn magnitude(&self, omega: f64) -> f64 {
        let (c1, s1) = (omega.cos(), -omega.sin());
        let (c2, s2) = ((2.0 * omega).cos(), -(2.0 * omega).sin());
        self.sections
            .iter()
            .map(|s| {
                let nr = s.b[0] + s.b[1] * c1 + s.b[2] * c2;
                let ni = s.b[1] * s1 + s.b[2] * s2;
                let dr = 1.0 + s.a[0] * c1 + s.a[1] * c2;
                let di = s.a[0] * s1 + s.a[1] * s2;
                ((nr * nr + ni * ni) / (dr * dr + di * di)).sqrt()
            })
            .product()
    }
}

/// Designs the filter and runs it over `series`.
pub fn butterworth_lowpass(series: &[f32], spec: FilterSpec) -> Result<Vec<f32>> {
    let filter = Butterworth::design(spec)?;
    if series.len() <= 3 * spec.order {
        return Err(Error::Param(format!(
            "series of length {} is too short for an order-{} filter (need > {})",
            series.len(),
            spec.order,
            3 * spec.order
        )));
    }
    let x: Vec<f64> = series.iter().map(|&v| v as f64).collect();
    Ok(filter.apply(&x).into_iter().map(|v| v as f32).collect())
}

/// Filters every row of a `[channels, T]` tensor along time.
pub fn butterworth_rows(series: &Tensor<f32>, spec: FilterSpec) -> Result<Tensor<f32>> {
    let [channels, t] = *series.shape() else {
        return Err(Error::shape(
            "butterworth_rows",
            format!("expected [channels, T], got {:?}", series.shape()),
        ));
    };
    let mut out = Vec::with_capacity(channels * t);
    for row in series.data().chunks_exact(t) {
        out.extend(butterworth_lowpass(row, spec)?);
    }
    Tensor::new(vec![channels, t], out)
}

/// Sliding windows of `[channels, T]` along time.
pub fn segment(series: &Tensor<f32>, window: usize, stride: usize) -> Result<Vec<Tensor<f32>>> {
    let [channels, t] = *series.shape() else {
        return Err(Error::shape(
            "segment",
            format!("expected [channels, T], got {:?}", series.shape()),
        ));
    };
    if window == 0 || stride == 0 {
        return Err(Error::Param("window and stride must be >= 1".into()));
    }
    if window > t {
        return Err(Error::Param(format!(
            "window {window} is longer than the series ({t} steps)"
        )));
    }
    let count = (t - window) / stride + 1;
    let data = series.data();
    (0..count)
        .map(|k| {
            let start = k * stride;
            let mut w = Vec::with_capacity(channels * window);
            for ch in 0..channels {
                w.extend_from_slice(&data[ch * t + start..ch * t + start + window]);
            }
            Tensor::new(vec![channels, window], w)
        })
        .collect()
}

/// Cuts a `[504, T]` CSI stream (rows antenna-pair-major: `pair * 56 + subcarrier`)
/// into `[9, 56, window]` samples.
pub fn csi_windows(csi: &Tensor<f32>, window: usize, stride: usize) -> Result<Vec<Tensor<f32>>> {
    const PAIRS: usize = 9;
    const SUBCARRIERS: usize = 56;
    if csi.shape().first() != Some(&(PAIRS * SUBCARRIERS)) {
        return Err(Error::shape(
            "csi_windows",
            format!("expected [504, T], got {:?}", csi.shape()),
        ));
    }
    segment(csi, window, stride)?
        .into_iter()
        .map(|w| w.reshape(&[PAIRS, SUBCARRIERS, window]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_on_zero_and_one() {
        let zero = vec![0.0f32; 4];
        let one = vec![1.0f32; 4];
        let n = Normalizer::fit(&[2, 2], [zero.as_slice(), one.as_slice()]).unwrap();
        assert_eq!(n.x_min, zero);
        assert_eq!(n.x_max, one);
        assert_eq!(n.apply(&zero).unwrap(), zero);
        assert_eq!(n.apply(&one).unwrap(), one);
        assert_eq!(n.apply(&[0.5; 4]).unwrap(), vec![0.5; 4]);
    }

    #[test]
    fn endpoints_map_exactly_and_no_clamping() {
        let a = [2.0f32, -3.0, 7.0];
        let b = [6.0f32, 5.0, 7.0];
        let n = Normalizer::fit(&[3], [a.as_slice(), b.as_slice()]).unwrap();
        assert_eq!(n.apply(&a).unwrap(), vec![0.0, 0.0, 0.0]);
        assert_eq!(n.apply(&b).unwrap(), vec![1.0, 1.0, 0.0]);
        assert_eq!(n.degenerate_positions(), vec![2]);
        // (8 - 2) / (6 - 2) = 1.5
        assert_eq!(n.apply(&[8.0, 1.0, 9.0]).unwrap(), vec![1.5, 0.5, 0.0]);
        let back = n.invert(&n.apply(&[3.0, 0.0, 7.0]).unwrap()).unwrap();
        assert_eq!(back, vec![3.0, 0.0, 7.0]);
    }

    #[test]
    fn fit_errors() {
        let empty: Vec<&[f32]> = vec![];
        assert!(Normalizer::fit(&[1], empty).is_err());
        let one = [1.0f32];
        assert!(Normalizer::fit(&[1], [one.as_slice()]).is_err());
        let n = Normalizer::fit(&[1], [one.as_slice(), one.as_slice()]).unwrap();
        assert!(n.apply(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn constant_series_passes_through() {
        let x = vec![3.5f32; 400];
        let y = butterworth_lowpass(&x, FilterSpec::default()).unwrap();
        for v in &y[200..] {
            assert!((v - 3.5).abs() < 1e-4);
        }
    }

    #[test]
    fn dc_gain_is_one() {
        let f = Butterworth::design(FilterSpec::default()).unwrap();
        assert!((f.magnitude(0.0) - 1.0).abs() < 1e-12);
        assert_eq!(f.sections.len(), 3);
    }

    #[test]
    fn invalid_filter_parameters() {
        for cutoff in [0.0, 1.0, -0.2, 1.5] {
            let r = butterworth_lowpass(&[0.0; 64], FilterSpec { order: 5, cutoff });
            assert!(matches!(r, Err(Error::Param(_))));
        }
        let r = butterworth_lowpass(&[0.0; 15], FilterSpec::default());
        assert!(matches!(r, Err(Error::Param(_))));
    }

    #[test]
    fn segment_counts() {
        let s = Tensor::new(vec![2, 10], (0..20).map(|v| v as f32).collect()).unwrap();
        let one = segment(&s, 10, 1).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0], s);
        let s12 = Tensor::new(vec![1, 12], (0..12).map(|v| v as f32).collect()).unwrap();
        assert_eq!(segment(&s12, 10, 2).unwrap().len(), 2);
        assert!(segment(&s12, 13, 1).is_err());
    }

    #[test]
    fn non_overlapping_segments_rebuild_prefix() {
        let s = Tensor::new(vec![1, 23], (0..23).map(|v| v as f32 * 0.5).collect()).unwrap();
        let joined: Vec<f32> = segment(&s, 5, 5)
            .unwrap()
            .iter()
            .flat_map(|w| w.data().to_vec())
            .collect();
        assert_eq!(joined.as_slice(), &s.data()[..20]);
    }

    #[test]
    fn csi_windows_have_wifi_shape() {
        let csi = Tensor::<f32>::zeros(&[504, 35]);
        let w = csi_windows(&csi, 10, 5).unwrap();
        assert_eq!(w.len(), 6);
        assert_eq!(w[0].shape(), &[9, 56, 10]);
    }
}
