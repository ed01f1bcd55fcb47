use super::FeatureError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowFn {
    Rectangular,
    Hann,
}

impl WindowFn {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            WindowFn::Rectangular => vec![1.0; len],
            WindowFn::Hann if len == 1 => vec![1.0],
            WindowFn::Hann => (0..len)
                .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / (len - 1) as f64).cos())
                .collect(),
        }
    }
}

/// Equal-length frames stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct Frames {
    pub frame_len: usize,
    data: Vec<f64>,
}

impl Frames {
    pub fn count(&self) -> usize {
        self.data.len() / self.frame_len
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.frame_len)
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.data[i * self.frame_len..(i + 1) * self.frame_len]
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Cuts `samples` into `floor((N - frame_len) / hop) + 1` frames and applies `window`.
pub fn frame_signal(
    samples: &[f64],
    frame_len: usize,
    hop: usize,
    window: WindowFn,
) -> Result<Frames, FeatureError> {
    if hop == 0 || frame_len < hop {
        return Err(FeatureError::InvalidFrameParams { frame_len, hop });
    }
    if samples.len() < frame_len {
        return Err(FeatureError::TooShortForFrame { samples: samples.len(), frame_len });
    }
    let count = (samples.len() - frame_len) / hop + 1;
    let coeffs = window.coefficients(frame_len);
    let mut data = Vec::with_capacity(count * frame_len);
    for i in 0..count {
        let frame = &samples[i * hop..i * hop + frame_len];
        data.extend(frame.iter().zip(&coeffs).map(|(x, w)| x * w));
    }
    Ok(Frames { frame_len, data })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_counts() {
        let x = vec![0.0; 20_000];
        assert_eq!(frame_signal(&x, 400, 200, WindowFn::Hann).unwrap().count(), 99);
        assert_eq!(frame_signal(&x[..400], 400, 200, WindowFn::Hann).unwrap().count(), 1);
        assert!(matches!(
            frame_signal(&x[..399], 400, 200, WindowFn::Hann),
            Err(FeatureError::TooShortForFrame { .. })
        ));
        assert!(matches!(
            frame_signal(&x, 100, 200, WindowFn::Hann),
            Err(FeatureError::InvalidFrameParams { .. })
        ));
    }

    #[test]
    fn rectangular_frames_copy_samples() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let f = frame_signal(&x, 4, 2, WindowFn::Rectangular).unwrap();
        assert_eq!(f.count(), 4);
        assert_eq!(f.get(1), &[2.0, 3.0, 4.0, 5.0]);
    }
}
