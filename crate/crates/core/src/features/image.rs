use super::FeatureMode;
use crate::dataset::{AudioClip, Label};
use crate::{Error, Result};

/// Grayscale feature image, row-major, every pixel in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureImage {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f32>,
    pub mode: FeatureMode,
    pub label: Option<Label>,
}

impl FeatureImage {
    pub fn new(height: usize, width: usize, pixels: Vec<f32>, mode: FeatureMode) -> Result<Self> {
        if pixels.len() != height * width {
            return Err(Error::Shape(format!(
                "{} pixels for a {height}x{width} image",
                pixels.len()
            )));
        }
        if let Some(p) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::param("pixels", format!("pixel {p} outside [0, 1]")));
        }
        Ok(FeatureImage {
            height,
            width,
            pixels,
            mode,
            label: None,
        })
    }

    pub fn with_label(mut self, label: Option<Label>) -> Self {
        self.label = label;
        self
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * self.width + col]
    }
}

/// Linear min-max scaling to [0, 1]. A constant input maps to 0.5.
pub fn normalize_min_max(values: &mut [f64]) {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = hi - lo;
    if !range.is_finite() || range <= 0.0 {
        values.iter_mut().for_each(|v| *v = 0.5);
    } else {
        values
            .iter_mut()
            .for_each(|v| *v = ((*v - lo) / range).clamp(0.0, 1.0));
    }
}

/// Overlap weights mapping `n_in` cells onto `n_out` cells of equal total
/// extent: output cell `j` averages the input over `[j*n_in/n_out,
/// (j+1)*n_in/n_out)`, weighting partial cells by their covered fraction.
fn area_weights(n_in: usize, n_out: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|j| {
            let (lo, hi) = (j as f64 * scale, (j + 1) as f64 * scale);
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(n_in);
            (first..last)
                .filter_map(|i| {
                    let overlap = (hi.min((i + 1) as f64) - lo.max(i as f64)) / scale;
                    (overlap > 1e-12).then_some((i, overlap))
                })
                .collect()
        })
        .collect()
}

/// Area-average resampling of a row-major `h x w` image.
pub fn resample_area(src: &[f64], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    if h == out_h && w == out_w {
        return src.to_vec();
    }
    let rows = area_weights(h, out_h);
    let cols = area_weights(w, out_w);
    // columns first, then rows
    let mut tmp = vec![0.0; h * out_w];
    for r in 0..h {
        for (c, ws) in cols.iter().enumerate() {
            tmp[r * out_w + c] = ws.iter().map(|&(i, wt)| wt * src[r * w + i]).sum();
        }
    }
    let mut out = vec![0.0; out_h * out_w];
    for (r, ws) in rows.iter().enumerate() {
        for c in 0..out_w {
            out[r * out_w + c] = ws.iter().map(|&(i, wt)| wt * tmp[i * out_w + c]).sum();
        }
    }
    out
}

/// Pastes per-frame feature vectors side by side (time left to right,
/// bucket 0 on the bottom row), normalizes to [0, 1] and resamples to
/// `out_h x out_w`.
pub fn assemble_image(
    columns: &[Vec<f64>],
    out_h: usize,
    out_w: usize,
    mode: FeatureMode,
) -> Result<FeatureImage> {
    let Some(first) = columns.first() else {
        return Err(Error::param("frames", "at least one frame is required"));
    };
    let (h, w) = (first.len(), columns.len());
    if h == 0 || columns.iter().any(|c| c.len() != h) {
        return Err(Error::Shape(
            "frame feature vectors differ in length".into(),
        ));
    }
    if out_h == 0 || out_w == 0 {
        return Err(Error::param("output size", "must be positive"));
    }
    let mut raw = vec![0.0; h * w];
    for (t, col) in columns.iter().enumerate() {
        for (b, v) in col.iter().enumerate() {
            raw[(h - 1 - b) * w + t] = *v;
        }
    }
    normalize_min_max(&mut raw);
    let pixels = resample_area(&raw, h, w, out_h, out_w)
        .into_iter()
        .map(|v| v.clamp(0.0, 1.0) as f32)
        .collect();
    FeatureImage::new(out_h, out_w, pixels, mode)
}

fn amplitude_row(a: f32, height: usize) -> usize {
    let y = ((1.0 - a.clamp(-1.0, 1.0) as f64) / 2.0 * (height - 1) as f64).round();
    y as usize
}

/// Binary raster of the waveform polyline: +1 on the top row, -1 on the
/// bottom row, samples binned evenly across the columns. Each column lights
/// every row the trace passes through inside it, including the segment
/// joining it to the previous column.
pub fn amplitude_plot(clip: &AudioClip, height: usize, width: usize) -> Result<FeatureImage> {
    let samples = clip.samples();
    if height == 0 || width == 0 || width > samples.len() {
        return Err(Error::param(
            "output size",
            format!(
                "amplitude plot must be at least 1x1 and at most {} wide",
                samples.len()
            ),
        ));
    }
    let n = samples.len();
    let mut pixels = vec![0.0f32; height * width];
    let mut prev: Option<usize> = None;
    for col in 0..width {
        let bin = &samples[col * n / width..(col + 1) * n / width];
        let rows = bin.iter().map(|&s| amplitude_row(s, height));
        let (mut top, mut bottom) = rows.fold((usize::MAX, 0), |(t, b), r| (t.min(r), b.max(r)));
        if let Some(p) = prev {
            top = top.min(p);
            bottom = bottom.max(p);
        }
        for row in top..=bottom {
            pixels[row * width + col] = 1.0;
        }
        prev = Some(amplitude_row(bin[bin.len() - 1], height));
    }
    FeatureImage::new(height, width, pixels, FeatureMode::AmplitudePlot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::CLIP_LEN;

    #[test]
    fn assemble_shape_and_range() {
        let cols: Vec<Vec<f64>> = (0..98)
            .map(|t| (0..40).map(|b| ((t * b) as f64).sin() * 10.0).collect())
            .collect();
        let img = assemble_image(&cols, 28, 28, FeatureMode::Spectrogram).unwrap();
        assert_eq!((img.height, img.width, img.pixels.len()), (28, 28, 784));
        assert!(img.pixels.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn constant_features_give_half_gray() {
        let cols = vec![vec![-3.0; 40]; 98];
        let img = assemble_image(&cols, 28, 28, FeatureMode::Spectrogram).unwrap();
        assert!(img.pixels.iter().all(|&p| p == 0.5));
    }

    #[test]
    fn same_size_resample_is_identity() {
        let src: Vec<f64> = (0..12).map(|i| i as f64 / 11.0).collect();
        assert_eq!(resample_area(&src, 3, 4, 3, 4), src);
        // columns = frames, rows = buckets with bucket 0 at the bottom
        let cols = vec![vec![0.0, 1.0], vec![2.0, 3.0]];
        let img = assemble_image(&cols, 2, 2, FeatureMode::Spectrogram).unwrap();
        assert_eq!(img.pixels, vec![1.0 / 3.0, 1.0, 0.0, 2.0 / 3.0]);
    }

    #[test]
    fn area_resample_averages_blocks() {
        let src = vec![1.0, 3.0, 5.0, 7.0];
        assert_eq!(resample_area(&src, 1, 4, 1, 2), vec![2.0, 6.0]);
        // upsampling replicates
        assert_eq!(
            resample_area(&[1.0, 2.0], 1, 2, 1, 4),
            vec![1.0, 1.0, 2.0, 2.0]
        );
        // mean is preserved for non-integer ratios
        let src: Vec<f64> = (0..7).map(|i| (i * i) as f64).collect();
        let out = resample_area(&src, 1, 7, 1, 3);
        let mean_in = src.iter().sum::<f64>() / 7.0;
        let mean_out = out.iter().sum::<f64>() / 3.0;
        assert!((mean_in - mean_out).abs() < 1e-9);
    }

    #[test]
    fn amplitude_plot_examples() {
        let zero = AudioClip::silent("z");
        let img = amplitude_plot(&zero, 100, 100).unwrap();
        for col in 0..100 {
            let lit: Vec<usize> = (0..100).filter(|&r| img.get(r, col) == 1.0).collect();
            assert_eq!(lit, vec![50]);
        }

        let top = AudioClip::new(vec![1.0; CLIP_LEN], "one").unwrap();
        let img = amplitude_plot(&top, 100, 100).unwrap();
        assert!((0..100).all(|c| img.get(0, c) == 1.0));
        assert_eq!(img.pixels.iter().filter(|&&p| p == 1.0).count(), 100);

        let wave = AudioClip::new(
            (0..CLIP_LEN)
                .map(|i| (i as f32 * 0.001).sin() * 0.8)
                .collect(),
            "w",
        )
        .unwrap();
        let img = amplitude_plot(&wave, 100, 100).unwrap();
        for col in 0..100 {
            assert!((0..100).any(|r| img.get(r, col) == 1.0));
        }
    }
}
