//! Location embedding: soft DOA readout, per-frame triangulation, and
//! repetition of the coordinates across frequency.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Backward, Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::spatial::{decode_doa, triangulate, DecodeMode, SpatialCodecConfig, MAX_RANGE_M};

/// Coordinates used before any frame has triangulated successfully.
pub const FALLBACK_XY: [f64; 2] = [0.0, MAX_RANGE_M];

/// Per-frame coordinates of one source.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LocationTrack {
    pub xy: Vec<[f64; 2]>,
    /// DOAs `(θ₁, θ₂)` that produced each frame.
    pub doas: Vec<[f64; 2]>,
    /// Rays did not intersect in front of the array; `xy` is a fallback.
    pub degenerate: Vec<bool>,
    /// Range exceeded the maximum and was clamped.
    pub clamped: Vec<bool>,
}

impl LocationTrack {
    pub fn frames(&self) -> usize {
        self.xy.len()
    }

    /// Triangulates every frame, carrying the last valid coordinates over
    /// degenerate frames. Also returns `∂(x, y)/∂(θ₁, θ₂)` per frame in
    /// degrees, zero where the output does not depend on the angles.
    fn build(doas: &[[f64; 2]], baseline: f64) -> (Self, Vec<[f64; 4]>) {
        let mut track = Self::default();
        let mut jacobian = Vec::with_capacity(doas.len());
        let mut last = FALLBACK_XY;
        for &[t1, t2] in doas {
            match triangulate(t1, t2, baseline) {
                Ok(tri) => {
                    last = [tri.x, tri.y];
                    track.xy.push(last);
                    track.degenerate.push(false);
                    track.clamped.push(tri.low_confidence);
                    jacobian.push(if tri.low_confidence {
                        [0.0; 4]
                    } else {
                        triangulation_jacobian(t1, t2, baseline)
                    });
                }
                Err(_) => {
                    track.xy.push(last);
                    track.degenerate.push(true);
                    track.clamped.push(false);
                    jacobian.push([0.0; 4]);
                }
            }
            track.doas.push([t1, t2]);
        }
        (track, jacobian)
    }

    /// `[T, F, 2]` embedding with the frame coordinates repeated `bins` times.
    pub fn embedding(&self, bins: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.xy.len() * bins * 2);
        for xy in &self.xy {
            for _ in 0..bins {
                out.extend_from_slice(xy);
            }
        }
        out
    }
}

/// `[∂x/∂θ₁, ∂x/∂θ₂, ∂y/∂θ₁, ∂y/∂θ₂]` with angles in degrees.
pub fn triangulation_jacobian(theta1: f64, theta2: f64, baseline: f64) -> [f64; 4] {
    let (t1, t2) = (theta1.to_radians(), theta2.to_radians());
    let d = (t2 - t1).sin();
    let k = baseline / (d * d) * std::f64::consts::PI / 180.0;
    [
        k * t2.sin() * t2.cos(),
        -k * t1.cos() * t1.sin(),
        k * t2.sin() * t2.sin(),
        -k * t1.sin() * t1.sin(),
    ]
}

/// Plain location track from spectra `[T, 2, bins]` (expectation readout).
pub fn locate_frames(spectra: &[f64], codec: &SpatialCodecConfig, baseline: f64) -> Result<LocationTrack> {
    let bins = codec.bins;
    if spectra.len() % (2 * bins) != 0 {
        return Err(Error::invalid("location needs spectra shaped [T, 2, bins]"));
    }
    let mut doas = Vec::with_capacity(spectra.len() / (2 * bins));
    for frame in spectra.chunks_exact(2 * bins) {
        doas.push([
            decode_doa(&frame[..bins], codec, DecodeMode::Expectation)?,
            decode_doa(&frame[bins..], codec, DecodeMode::Expectation)?,
        ]);
    }
    Ok(LocationTrack::build(&doas, baseline).0)
}

struct TriangulateOp {
    jacobian: Vec<[f64; 4]>,
}

impl Backward for TriangulateOp {
    fn backward(&self, grad: &Tensor, inputs: &[&Tensor], _: &Tensor, _: &[bool]) -> Vec<Option<Tensor>> {
        let mut d = vec![0.0; inputs[0].len()];
        for ((j, g), out) in self
            .jacobian
            .iter()
            .zip(grad.data().chunks_exact(2))
            .zip(d.chunks_exact_mut(2))
        {
            out[0] = g[0] * j[0] + g[1] * j[2];
            out[1] = g[0] * j[1] + g[1] * j[3];
        }
        vec![Some(Tensor::new(inputs[0].shape(), d))]
    }
}

/// Differentiable location path: spectra `[T, 2, bins]` → `[T, 2]`
/// coordinates. With `stop_gradient` the angles are detached first.
pub fn location_graph(
    g: &mut Graph,
    spectra: Var,
    codec: &SpatialCodecConfig,
    baseline: f64,
    stop_gradient: bool,
) -> Result<(Var, LocationTrack)> {
    let shape = g.shape(spectra).to_vec();
    if shape.len() != 3 || shape[1] != 2 || shape[2] != codec.bins {
        return Err(Error::invalid(format!(
            "location needs spectra [T, 2, {}], got {shape:?}",
            codec.bins
        )));
    }
    let grid = g.constant(Tensor::new(&[codec.bins, 1], codec.grid()));
    let weighted = g.matmul(spectra, grid);
    let weighted = g.reshape(weighted, &shape[..2]);
    let mass = g.sum_axis(spectra, 2);
    let mut theta = g.div(weighted, mass);
    if stop_gradient {
        theta = g.detach(theta);
    }
    let doas: Vec<[f64; 2]> = g.value(theta).data().chunks_exact(2).map(|c| [c[0], c[1]]).collect();
    let (track, jacobian) = LocationTrack::build(&doas, baseline);
    let value = Tensor::new(&[shape[0], 2], track.xy.iter().flatten().copied().collect());
    let xy = g.record(value, &[theta], TriangulateOp { jacobian });
    Ok((xy, track))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::encode_spatial_spectrum;

    fn frames_for(t1: f64, t2: f64, n: usize, codec: &SpatialCodecConfig) -> Vec<f64> {
        let a = encode_spatial_spectrum(t1, codec).unwrap();
        let b = encode_spatial_spectrum(t2, codec).unwrap();
        (0..n).flat_map(|_| a.iter().chain(&b).copied().collect::<Vec<_>>()).collect()
    }

    #[test]
    fn encoded_ground_truth_recovers_position() {
        let codec = SpatialCodecConfig::default();
        let track = locate_frames(&frames_for(45.0, 135.0, 3, &codec), &codec, 0.28).unwrap();
        for xy in &track.xy {
            assert!((xy[0] - 0.14).abs() < 1e-6 && (xy[1] - 0.14).abs() < 1e-6, "{xy:?}");
        }
        assert!(track.degenerate.iter().all(|d| !d));
        let emb = track.embedding(4);
        assert_eq!(emb.len(), 3 * 4 * 2);
        for unit in emb.chunks(2) {
            assert_eq!(unit, &track.xy[0]);
        }
    }

    #[test]
    fn parallel_rays_fall_back() {
        let codec = SpatialCodecConfig::default();
        let mut spectra = frames_for(45.0, 135.0, 1, &codec);
        spectra.extend(frames_for(90.0, 90.0, 2, &codec));
        let track = locate_frames(&spectra, &codec, 0.28).unwrap();
        assert_eq!(track.degenerate, vec![false, true, true]);
        assert_eq!(track.xy[1], track.xy[0]);

        let track = locate_frames(&frames_for(90.0, 90.0, 1, &codec), &codec, 0.28).unwrap();
        assert_eq!(track.xy[0], FALLBACK_XY);
    }

    #[test]
    fn jacobian_matches_finite_difference() {
        for &(t1, t2) in &[(45.0, 135.0), (60.0, 70.0), (20.0, 100.0)] {
            let j = triangulation_jacobian(t1, t2, 0.28);
            let h = 1e-6;
            let at = |a: f64, b: f64| {
                let t = triangulate(a, b, 0.28).unwrap();
                [t.x, t.y]
            };
            let d1 = [(at(t1 + h, t2)[0] - at(t1 - h, t2)[0]) / (2.0 * h), (at(t1 + h, t2)[1] - at(t1 - h, t2)[1]) / (2.0 * h)];
            let d2 = [(at(t1, t2 + h)[0] - at(t1, t2 - h)[0]) / (2.0 * h), (at(t1, t2 + h)[1] - at(t1, t2 - h)[1]) / (2.0 * h)];
            for (a, n) in [(j[0], d1[0]), (j[1], d2[0]), (j[2], d1[1]), (j[3], d2[1])] {
                assert!((a - n).abs() < 1e-6 * a.abs().max(1.0), "{a} vs {n}");
            }
        }
    }

    #[test]
    fn graph_path_matches_plain_readout() {
        let codec = SpatialCodecConfig::default();
        let spectra = frames_for(50.0, 120.0, 2, &codec);
        let mut g = Graph::new();
        let s = g.param(Tensor::new(&[2, 2, codec.bins], spectra.clone()));
        let (xy, track) = location_graph(&mut g, s, &codec, 0.28, false).unwrap();
        let plain = locate_frames(&spectra, &codec, 0.28).unwrap();
        assert_eq!(track.degenerate, plain.degenerate);
        for (a, b) in track.xy.iter().zip(&plain.xy) {
            assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9);
        }
        assert_eq!(g.value(xy).data()[..2], track.xy[0]);
        let sum = g.sum(xy);
        assert!(g.backward(sum).get(s).is_some());

        let mut g = Graph::new();
        let s = g.param(Tensor::new(&[2, 2, codec.bins], spectra));
        let (xy, _) = location_graph(&mut g, s, &codec, 0.28, true).unwrap();
        let sum = g.sum(xy);
        assert!(g.backward(sum).get(s).is_none());
    }
}
