use super::stft::ComplexSpectrogram;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Network input: reference-channel magnitude and cosine inter-channel
/// phase differences between the reference and every other microphone.
#[derive(Clone, Debug, PartialEq)]
pub struct FeaturePack {
    /// `[T, F]`
    pub magnitude: Vec<f64>,
    /// `[T, F, P]`, `P = M - 1`
    pub cos_ipd: Vec<f64>,
    pub frames: usize,
    pub bins: usize,
    pub pairs: usize,
}

impl FeaturePack {
    /// Per-frame vector `[magnitude ‖ cosIPD pair 1 ‖ … ‖ cosIPD pair P]`,
    /// each block `F` wide. Shape `[T, F·(1+P)]`.
    pub fn frame_matrix(&self) -> Tensor {
        let (t_len, f_len, p_len) = (self.frames, self.bins, self.pairs);
        let width = f_len * (1 + p_len);
        let mut out = Vec::with_capacity(t_len * width);
        for t in 0..t_len {
            out.extend_from_slice(&self.magnitude[t * f_len..(t + 1) * f_len]);
            for p in 0..p_len {
                out.extend((0..f_len).map(|f| self.cos_ipd[(t * f_len + f) * p_len + p]));
            }
        }
        Tensor::new(&[t_len, width], out)
    }
}

/// Extracts `|Y_ref|` and `cos(∠Y_ref − ∠Y_other)` for every other channel
/// in increasing index order.
pub fn extract_features(spec: &ComplexSpectrogram, reference_channel: usize) -> Result<FeaturePack> {
    let m = spec.channels();
    if m < 2 {
        return Err(Error::invalid("phase-difference features need at least two channels"));
    }
    if reference_channel >= m {
        return Err(Error::invalid(format!(
            "reference channel {reference_channel} out of range for {m} channels"
        )));
    }
    let others: Vec<usize> = (0..m).filter(|&c| c != reference_channel).collect();
    let (t_len, f_len) = (spec.frames(), spec.bins());
    let mut magnitude = Vec::with_capacity(t_len * f_len);
    let mut cos_ipd = Vec::with_capacity(t_len * f_len * others.len());
    for t in 0..t_len {
        for f in 0..f_len {
            let r = spec.get(t, f, reference_channel);
            magnitude.push(r.norm());
            for &o in &others {
                let cross = r * spec.get(t, f, o).conj();
                let norm = cross.norm();
                // undefined phase at silent units counts as aligned
                cos_ipd.push(if norm > 0.0 { (cross.re / norm).clamp(-1.0, 1.0) } else { 1.0 });
            }
        }
    }
    Ok(FeaturePack {
        magnitude,
        cos_ipd,
        frames: t_len,
        bins: f_len,
        pairs: others.len(),
    })
}
