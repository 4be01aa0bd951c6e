//! Room and placement sampling.
//!
//! The array lies parallel to the room's x-wall, its first outermost
//! microphone at `array_origin`, and faces +y. Sources share the array's
//! height so the horizontal geometry is exact.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spatial::{ground_truth_doas, ArrayGeometry, AzimuthBucket, SourceLocation};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    /// `(length, width, height)` in meters.
    pub size: [f64; 3],
    pub rt60: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenePlacement {
    pub array_origin: [f64; 3],
    pub array_axis: [f64; 2],
    pub source_positions: [[f64; 3]; 2],
    /// Distance from each source to the array centroid.
    pub source_distances: [f64; 2],
    pub inter_source_distance: f64,
}

impl ScenePlacement {
    /// Microphone positions in room coordinates.
    pub fn mic_positions(&self, geometry: &ArrayGeometry) -> Vec<[f64; 3]> {
        let [ox, oy, oz] = self.array_origin;
        let [ax, ay] = self.array_axis;
        geometry
            .mic_positions
            .iter()
            .map(|p| [ox + p[0] * ax - p[1] * ay, oy + p[0] * ay + p[1] * ax, oz])
            .collect()
    }

    /// Source position in the array frame (first outermost mic at origin).
    pub fn relative_xy(&self, source: usize) -> [f64; 2] {
        let [ox, oy, _] = self.array_origin;
        let [ax, ay] = self.array_axis;
        let p = self.source_positions[source];
        let (dx, dy) = (p[0] - ox, p[1] - oy);
        [dx * ax + dy * ay, -dx * ay + dy * ax]
    }

    pub fn locations(&self, geometry: &ArrayGeometry) -> Result<[SourceLocation; 2]> {
        Ok([
            ground_truth_doas(self.relative_xy(0), geometry)?,
            ground_truth_doas(self.relative_xy(1), geometry)?,
        ])
    }
}

/// Sampling ranges and placement rules.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConstraints {
    pub room_min: [f64; 3],
    pub room_max: [f64; 3],
    pub rt60_range: [f64; 2],
    /// Source to array-centroid distance.
    pub distance_range: [f64; 2],
    pub min_inter_source: f64,
    pub wall_margin: f64,
    pub array_height: [f64; 2],
    pub max_attempts: usize,
}

impl Default for SceneConstraints {
    fn default() -> Self {
        Self {
            room_min: [4.0, 3.0, 2.5],
            room_max: [12.0, 9.0, 5.0],
            rt60_range: [0.3, 0.8],
            distance_range: [0.5, 8.0],
            min_inter_source: 1.0,
            wall_margin: 0.3,
            array_height: [1.0, 2.0],
            max_attempts: 10_000,
        }
    }
}

impl SceneConstraints {
    pub fn validate(&self) -> Result<()> {
        let ordered = |lo: f64, hi: f64| lo.is_finite() && hi.is_finite() && lo <= hi;
        let ok = (0..3).all(|i| self.room_min[i] > 0.0 && ordered(self.room_min[i], self.room_max[i]))
            && ordered(self.rt60_range[0], self.rt60_range[1])
            && self.distance_range[0] > 0.0
            && ordered(self.distance_range[0], self.distance_range[1])
            && self.min_inter_source >= 0.0
            && self.wall_margin >= 0.0
            && ordered(self.array_height[0], self.array_height[1])
            && self.max_attempts > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("inconsistent scene constraints: {self:?}")))
        }
    }

    /// Checks every placement invariant.
    pub fn admits(&self, room: &RoomSpec, placement: &ScenePlacement, geometry: &ArrayGeometry) -> bool {
        let inside = |p: [f64; 3]| {
            (0..2).all(|i| p[i] >= self.wall_margin - 1e-12 && p[i] <= room.size[i] - self.wall_margin + 1e-12)
        };
        let mics = placement.mic_positions(geometry);
        if !mics.iter().all(|&m| inside(m)) {
            return false;
        }
        let c = centroid(&mics);
        for (s, &d) in placement.source_positions.iter().zip(&placement.source_distances) {
            let dist = horizontal(*s, c);
            if !inside(*s) || (dist - d).abs() > 1e-9 {
                return false;
            }
            if dist < self.distance_range[0] - 1e-12 || dist > self.distance_range[1] + 1e-12 {
                return false;
            }
        }
        let [a, b] = placement.source_positions;
        if horizontal(a, b) < self.min_inter_source - 1e-12 {
            return false;
        }
        (0..2).all(|i| placement.relative_xy(i)[1] > 0.0)
    }
}

fn centroid(points: &[[f64; 3]]) -> [f64; 3] {
    let n = points.len() as f64;
    let mut c = [0.0; 3];
    for p in points {
        for i in 0..3 {
            c[i] += p[i] / n;
        }
    }
    c
}

fn horizontal(a: [f64; 3], b: [f64; 3]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// Draws a room and a placement satisfying all constraints by rejection.
pub fn sample_scene<R: Rng>(
    rng: &mut R,
    constraints: &SceneConstraints,
    geometry: &ArrayGeometry,
) -> Result<(RoomSpec, ScenePlacement)> {
    constraints.validate()?;
    let span = geometry
        .mic_positions
        .iter()
        .map(|p| p[0])
        .fold(0.0f64, f64::max);
    let margin = constraints.wall_margin;
    for _ in 0..constraints.max_attempts {
        let size = [0, 1, 2].map(|i| uniform(rng, constraints.room_min[i], constraints.room_max[i]));
        let room = RoomSpec {
            size,
            rt60: uniform(rng, constraints.rt60_range[0], constraints.rt60_range[1]),
        };
        let height = uniform(rng, constraints.array_height[0], constraints.array_height[1]);
        if height > size[2] || size[0] - 2.0 * margin < span || size[1] - 2.0 * margin <= 0.0 {
            continue;
        }
        let origin = [
            uniform(rng, margin, size[0] - margin - span),
            uniform(rng, margin, size[1] - margin),
            height,
        ];
        let mut placement = ScenePlacement {
            array_origin: origin,
            array_axis: [1.0, 0.0],
            source_positions: [[0.0; 3]; 2],
            source_distances: [0.0; 2],
            inter_source_distance: 0.0,
        };
        let c = centroid(&placement.mic_positions(geometry));
        for i in 0..2 {
            // uniform over the reachable front half-disc
            let angle = uniform(rng, 0.0, std::f64::consts::PI);
            let r = uniform(rng, constraints.distance_range[0], constraints.distance_range[1]);
            placement.source_positions[i] = [c[0] + r * angle.cos(), c[1] + r * angle.sin(), height];
            placement.source_distances[i] = horizontal(placement.source_positions[i], c);
        }
        placement.inter_source_distance = horizontal(placement.source_positions[0], placement.source_positions[1]);
        if constraints.admits(&room, &placement, geometry) {
            return Ok((room, placement));
        }
    }
    Err(Error::Infeasible {
        attempts: constraints.max_attempts,
        reason: "no room/placement satisfied the distance, spacing and wall constraints".into(),
    })
}

/// Reporting bucket of a placement.
pub fn placement_bucket(placement: &ScenePlacement, geometry: &ArrayGeometry) -> Result<AzimuthBucket> {
    let [a, b] = placement.locations(geometry)?;
    Ok(AzimuthBucket::of_pair(&a, &b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn samples_satisfy_invariants() {
        let geom = ArrayGeometry::default();
        let cons = SceneConstraints::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let (room, p) = sample_scene(&mut rng, &cons, &geom).unwrap();
            assert!(cons.admits(&room, &p, &geom));
            for i in 0..3 {
                assert!(room.size[i] >= cons.room_min[i] && room.size[i] <= cons.room_max[i]);
            }
            assert!(p.inter_source_distance >= 1.0);
            let [a, b] = p.locations(&geom).unwrap();
            assert!(a.xy[1] > 0.0 && b.xy[1] > 0.0);
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let geom = ArrayGeometry::default();
        let cons = SceneConstraints::default();
        let a = sample_scene(&mut ChaCha8Rng::seed_from_u64(9), &cons, &geom).unwrap();
        let b = sample_scene(&mut ChaCha8Rng::seed_from_u64(9), &cons, &geom).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn infeasible_constraints_error() {
        let geom = ArrayGeometry::default();
        let cons = SceneConstraints {
            room_max: [4.0, 3.0, 2.5],
            distance_range: [7.0, 8.0],
            max_attempts: 50,
            ..SceneConstraints::default()
        };
        let err = sample_scene(&mut ChaCha8Rng::seed_from_u64(1), &cons, &geom).unwrap_err();
        assert!(matches!(err, Error::Infeasible { attempts: 50, .. }));
    }

    #[test]
    fn relative_frame_matches_mic_layout() {
        let geom = ArrayGeometry::default();
        let p = ScenePlacement {
            array_origin: [1.0, 2.0, 1.5],
            array_axis: [1.0, 0.0],
            source_positions: [[1.14, 2.14, 1.5], [3.0, 4.0, 1.5]],
            source_distances: [0.0; 2],
            inter_source_distance: 0.0,
        };
        let xy = p.relative_xy(0);
        assert!((xy[0] - 0.14).abs() < 1e-12 && (xy[1] - 0.14).abs() < 1e-12);
        let mics = p.mic_positions(&geom);
        assert!((mics[5][0] - 1.28).abs() < 1e-12);
    }
}
