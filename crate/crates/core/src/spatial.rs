//! Azimuth grid coding, DOA readout, array geometry and two-observer
//! triangulation.
//!
//! Coordinate frame: the first outermost microphone sits at the origin, the
//! array runs along +x, and sources live in the half-plane `y > 0`. Angles
//! are in degrees, measured counter-clockwise from +x.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum DOA difference (degrees) for two rays to be considered
/// intersecting.
pub const EPS_PARALLEL_DEG: f64 = 0.5;
/// Ranges beyond this (meters) are clamped and flagged.
pub const MAX_RANGE_M: f64 = 10.0;

/// Planar microphone layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub mic_positions: Vec<[f64; 2]>,
    pub outermost: (usize, usize),
}

impl Default for ArrayGeometry {
    /// Six-microphone linear array with 4, 4, 12, 4, 4 cm spacings.
    fn default() -> Self {
        Self::linear(&[0.04, 0.04, 0.12, 0.04, 0.04])
    }
}

impl ArrayGeometry {
    /// Collinear array along +x starting at the origin.
    pub fn linear(spacings: &[f64]) -> Self {
        let mut x = 0.0;
        let mut mic_positions = vec![[0.0, 0.0]];
        for s in spacings {
            x += s;
            mic_positions.push([x, 0.0]);
        }
        let last = mic_positions.len() - 1;
        Self {
            mic_positions,
            outermost: (0, last),
        }
    }

    pub fn mic_count(&self) -> usize {
        self.mic_positions.len()
    }

    /// Distance between the two outermost microphones.
    pub fn baseline(&self) -> f64 {
        let (a, b) = self.outermost;
        let (p, q) = (self.mic_positions[a], self.mic_positions[b]);
        (q[0] - p[0]).hypot(q[1] - p[1])
    }

    pub fn centroid(&self) -> [f64; 2] {
        let n = self.mic_positions.len() as f64;
        let (sx, sy) = self
            .mic_positions
            .iter()
            .fold((0.0, 0.0), |(sx, sy), p| (sx + p[0], sy + p[1]));
        [sx / n, sy / n]
    }

    pub fn validate(&self) -> Result<()> {
        if self.mic_positions.len() < 2 {
            return Err(Error::invalid("array needs at least two microphones"));
        }
        let (a, b) = self.outermost;
        if a >= self.mic_count() || b >= self.mic_count() || a == b {
            return Err(Error::invalid("outermost microphone indices invalid"));
        }
        if self.mic_positions.iter().any(|p| p[1].abs() > 1e-12) {
            return Err(Error::invalid("microphones must lie on the x-axis"));
        }
        if self.baseline() <= 0.0 {
            return Err(Error::invalid("outermost microphones coincide"));
        }
        Ok(())
    }
}

/// Azimuth grid and Gaussian width of the spatial spectrum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialCodecConfig {
    pub bins: usize,
    pub theta_min: f64,
    pub theta_step: f64,
    pub sigma: f64,
    /// 1: one DOA at the array centroid; 2: one DOA per outermost microphone.
    pub observers: usize,
}

impl Default for SpatialCodecConfig {
    fn default() -> Self {
        Self {
            bins: 210,
            theta_min: -15.0,
            theta_step: 1.0,
            sigma: 8.0,
            observers: 2,
        }
    }
}

impl SpatialCodecConfig {
    pub fn angle(&self, bin: usize) -> f64 {
        self.theta_min + bin as f64 * self.theta_step
    }

    pub fn theta_max(&self) -> f64 {
        self.angle(self.bins - 1)
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..self.bins).map(|k| self.angle(k)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.bins == 0 || self.theta_step <= 0.0 || self.sigma <= 0.0 {
            return Err(Error::invalid("codec needs bins > 0, step > 0 and sigma > 0"));
        }
        if !(1..=2).contains(&self.observers) {
            return Err(Error::invalid("observers must be 1 or 2"));
        }
        Ok(())
    }
}

/// Plain absolute difference; the grid spans less than a full turn.
pub fn angular_distance(a: f64, b: f64) -> f64 {
    (a - b).abs()
}

/// Gaussian likelihood over the grid peaking at `theta`.
pub fn encode_spatial_spectrum(theta: f64, config: &SpatialCodecConfig) -> Result<Vec<f64>> {
    if !(theta >= config.theta_min && theta <= config.theta_max()) {
        return Err(Error::invalid(format!(
            "DOA {theta}° outside the coding grid [{}, {}]",
            config.theta_min,
            config.theta_max()
        )));
    }
    let s2 = config.sigma * config.sigma;
    Ok((0..config.bins)
        .map(|k| {
            let d = angular_distance(config.angle(k), theta);
            (-d * d / s2).exp()
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    /// Grid angle of the maximum, ties resolved to the lowest angle.
    Argmax,
    /// Likelihood-weighted mean angle.
    Expectation,
}

pub fn decode_doa(spectrum: &[f64], config: &SpatialCodecConfig, mode: DecodeMode) -> Result<f64> {
    if spectrum.len() != config.bins {
        return Err(Error::invalid(format!(
            "spectrum has {} bins, grid has {}",
            spectrum.len(),
            config.bins
        )));
    }
    if spectrum.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::invalid("spectrum must be finite and non-negative"));
    }
    match mode {
        DecodeMode::Argmax => {
            let mut best = 0;
            for (k, &p) in spectrum.iter().enumerate() {
                if p > spectrum[best] {
                    best = k;
                }
            }
            Ok(config.angle(best))
        }
        DecodeMode::Expectation => {
            let total: f64 = spectrum.iter().sum();
            if total <= 0.0 {
                return Err(Error::Degenerate("all-zero spectrum has no expectation".into()));
            }
            let weighted: f64 = spectrum
                .iter()
                .enumerate()
                .map(|(k, p)| config.angle(k) * p)
                .sum();
            Ok(weighted / total)
        }
    }
}

/// Intersection of the rays leaving both outermost microphones.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Triangulated {
    pub x: f64,
    pub y: f64,
    /// Set when the range exceeded [`MAX_RANGE_M`] and was clamped.
    pub low_confidence: bool,
}

/// Law-of-sines intersection of rays at `theta1` (from the origin) and
/// `theta2` (from `(baseline, 0)`).
pub fn triangulate(theta1: f64, theta2: f64, baseline: f64) -> Result<Triangulated> {
    if !(baseline > 0.0) {
        return Err(Error::invalid("baseline must be positive"));
    }
    let diff = theta2 - theta1;
    if !(diff > EPS_PARALLEL_DEG) {
        return Err(Error::TriangulationDegenerate {
            diff_deg: diff,
            min_deg: EPS_PARALLEL_DEG,
        });
    }
    let (t1, t2) = (theta1.to_radians(), theta2.to_radians());
    let range = baseline * t2.sin() / (t2 - t1).sin();
    if !(range > 0.0) {
        // rays meet behind the array
        return Err(Error::TriangulationDegenerate {
            diff_deg: diff,
            min_deg: EPS_PARALLEL_DEG,
        });
    }
    let clamped = range > MAX_RANGE_M;
    let r = range.min(MAX_RANGE_M);
    Ok(Triangulated {
        x: r * t1.cos(),
        y: r * t1.sin(),
        low_confidence: clamped,
    })
}

/// Ground-truth geometry of a source.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceLocation {
    /// Position relative to the first outermost microphone.
    pub xy: [f64; 2],
    /// DOAs at the first and last outermost microphones.
    pub doas: [f64; 2],
    pub doa_centroid: f64,
}

impl SourceLocation {
    /// DOA(s) seen by `observers` (1: centroid, 2: outermost pair).
    pub fn observer_doas(&self, observers: usize) -> Vec<f64> {
        if observers == 1 {
            vec![self.doa_centroid]
        } else {
            self.doas.to_vec()
        }
    }
}

fn azimuth_from(p: [f64; 2], q: [f64; 2]) -> f64 {
    (q[1] - p[1]).atan2(q[0] - p[0]).to_degrees()
}

pub fn ground_truth_doas(source_xy: [f64; 2], geometry: &ArrayGeometry) -> Result<SourceLocation> {
    if !(source_xy[1] > 0.0) {
        return Err(Error::invalid(format!(
            "source {source_xy:?} is not in front of the array (y must be > 0)"
        )));
    }
    let (a, b) = geometry.outermost;
    Ok(SourceLocation {
        xy: source_xy,
        doas: [
            azimuth_from(geometry.mic_positions[a], source_xy),
            azimuth_from(geometry.mic_positions[b], source_xy),
        ],
        doa_centroid: azimuth_from(geometry.centroid(), source_xy),
    })
}

/// Azimuth-difference classes used for reporting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AzimuthBucket {
    #[serde(rename = "<15")]
    Below15,
    #[serde(rename = "15-45")]
    From15To45,
    #[serde(rename = "45-90")]
    From45To90,
    #[serde(rename = ">90")]
    Above90,
}

impl AzimuthBucket {
    pub const ALL: [AzimuthBucket; 4] = [
        AzimuthBucket::Below15,
        AzimuthBucket::From15To45,
        AzimuthBucket::From45To90,
        AzimuthBucket::Above90,
    ];

    /// Boundaries `[0,15)`, `[15,45)`, `[45,90)`, `[90,180]`.
    pub fn from_difference(diff_deg: f64) -> Self {
        let d = diff_deg.abs();
        if d < 15.0 {
            Self::Below15
        } else if d < 45.0 {
            Self::From15To45
        } else if d < 90.0 {
            Self::From45To90
        } else {
            Self::Above90
        }
    }

    pub fn of_pair(a: &SourceLocation, b: &SourceLocation) -> Self {
        Self::from_difference(a.doa_centroid - b.doa_centroid)
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Below15 => "<15",
            Self::From15To45 => "15-45",
            Self::From45To90 => "45-90",
            Self::Above90 => ">90",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const C: f64 = 0.28;

    #[test]
    fn default_array() {
        let g = ArrayGeometry::default();
        assert_eq!(g.mic_count(), 6);
        assert!((g.baseline() - 0.28).abs() < 1e-12);
        g.validate().unwrap();
    }

    #[test]
    fn codec_values() {
        let cfg = SpatialCodecConfig::default();
        assert_eq!(cfg.theta_max(), 194.0);
        let p = encode_spatial_spectrum(90.0, &cfg).unwrap();
        assert_eq!(p[105], 1.0);
        assert!((p[113] - (-1.0f64).exp()).abs() < 1e-12);
        assert!((p[89] - (-4.0f64).exp()).abs() < 1e-12);
        assert!(encode_spatial_spectrum(-15.5, &cfg).is_err());
        assert!(encode_spatial_spectrum(194.5, &cfg).is_err());
    }

    #[test]
    fn distances() {
        assert_eq!(angular_distance(10.0, 20.0), 10.0);
        assert_eq!(angular_distance(90.0, 90.0), 0.0);
        assert_eq!(angular_distance(-15.0, 195.0), 210.0);
    }

    #[test]
    fn decoding() {
        let cfg = SpatialCodecConfig::default();
        let p = encode_spatial_spectrum(90.0, &cfg).unwrap();
        assert_eq!(decode_doa(&p, &cfg, DecodeMode::Argmax).unwrap(), 90.0);
        let mut delta = vec![0.0; 210];
        delta[0] = 1.0;
        assert_eq!(decode_doa(&delta, &cfg, DecodeMode::Argmax).unwrap(), -15.0);
        let uniform = vec![0.3; 210];
        assert!((decode_doa(&uniform, &cfg, DecodeMode::Expectation).unwrap() - 89.5).abs() < 1e-12);
        // ties resolve to the lowest angle
        assert_eq!(decode_doa(&uniform, &cfg, DecodeMode::Argmax).unwrap(), -15.0);
        assert!(matches!(
            decode_doa(&vec![0.0; 210], &cfg, DecodeMode::Expectation),
            Err(Error::Degenerate(_))
        ));
        assert!(decode_doa(&[1.0; 3], &cfg, DecodeMode::Argmax).is_err());
    }

    #[test]
    fn triangulation_examples() {
        let a = triangulate(45.0, 135.0, C).unwrap();
        assert!((a.x - 0.14).abs() < 1e-12 && (a.y - 0.14).abs() < 1e-12);
        let b = triangulate(60.0, 120.0, C).unwrap();
        assert!((b.x - 0.14).abs() < 1e-12);
        assert!((b.y - 0.28 * 60f64.to_radians().sin()).abs() < 1e-12);
        assert!((b.y - 0.2425).abs() < 1e-4);
        assert!(matches!(
            triangulate(90.0, 90.0, C),
            Err(Error::TriangulationDegenerate { .. })
        ));
        assert!(triangulate(90.0, 90.4, C).is_err());
        assert!(triangulate(30.0, 60.0, 0.0).is_err());
    }

    #[test]
    fn far_sources_are_clamped() {
        let t = triangulate(89.0, 90.0, C).unwrap();
        assert!(t.low_confidence);
        assert!((t.x.hypot(t.y) - MAX_RANGE_M).abs() < 1e-9);
    }

    #[test]
    fn ground_truth_examples() {
        let g = ArrayGeometry::linear(&[0.28]);
        let a = ground_truth_doas([0.14, 0.14], &g).unwrap();
        assert!((a.doas[0] - 45.0).abs() < 1e-12 && (a.doas[1] - 135.0).abs() < 1e-12);
        let b = ground_truth_doas([0.28, 0.28], &g).unwrap();
        assert!((b.doas[0] - 45.0).abs() < 1e-12 && (b.doas[1] - 90.0).abs() < 1e-12);
        let c = ground_truth_doas([0.14, 100.0], &g).unwrap();
        assert!((c.doas[0] - 90.0).abs() < 0.1 && (c.doas[1] - 90.0).abs() < 0.1);
        assert!((c.doa_centroid - 90.0).abs() < 1e-12);
        assert!(ground_truth_doas([1.0, 0.0], &g).is_err());
    }

    #[test]
    fn buckets() {
        assert_eq!(AzimuthBucket::from_difference(14.99), AzimuthBucket::Below15);
        assert_eq!(AzimuthBucket::from_difference(15.0), AzimuthBucket::From15To45);
        assert_eq!(AzimuthBucket::from_difference(45.0), AzimuthBucket::From45To90);
        assert_eq!(AzimuthBucket::from_difference(-90.0), AzimuthBucket::Above90);
        assert_eq!(AzimuthBucket::from_difference(180.0), AzimuthBucket::Above90);
    }

    proptest! {
        #[test]
        fn encode_peaks_at_nearest_bin_and_decays(theta in -15.0f64..194.0) {
            let cfg = SpatialCodecConfig::default();
            let p = encode_spatial_spectrum(theta, &cfg).unwrap();
            let nearest = ((theta - cfg.theta_min) / cfg.theta_step).round() as usize;
            let argmax = decode_doa(&p, &cfg, DecodeMode::Argmax).unwrap();
            prop_assert!((argmax - theta).abs() <= cfg.theta_step / 2.0 + 1e-9);
            prop_assert_eq!(argmax, cfg.angle(nearest));
            for k in 0..cfg.bins {
                for j in 0..cfg.bins {
                    let (dk, dj) = ((cfg.angle(k) - theta).abs(), (cfg.angle(j) - theta).abs());
                    if dk < dj {
                        prop_assert!(p[k] >= p[j]);
                    }
                }
            }
            prop_assert!(p.iter().all(|&v| v > 0.0 && v <= 1.0));
        }

        #[test]
        fn triangulation_stays_in_front(t1 in 0.5f64..179.0, gap in 0.6f64..179.0) {
            let t2 = (t1 + gap).min(179.99);
            prop_assume!(t2 - t1 > EPS_PARALLEL_DEG);
            let r = triangulate(t1, t2, C).unwrap();
            prop_assert!(r.y >= 0.0);
        }

        #[test]
        fn geometry_round_trip(x in -4.0f64..4.0, y in 0.1f64..8.0) {
            let g = ArrayGeometry::default();
            let loc = ground_truth_doas([x, y], &g).unwrap();
            prop_assume!(loc.doas[1] - loc.doas[0] > EPS_PARALLEL_DEG);
            let t = triangulate(loc.doas[0], loc.doas[1], g.baseline()).unwrap();
            prop_assert!((t.x - x).abs() < 1e-6 && (t.y - y).abs() < 1e-6);
        }
    }
}
