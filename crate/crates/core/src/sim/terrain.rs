use serde::{Deserialize, Serialize};

use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerrainKind {
    Flat,
    Slope,
    Stairs,
}

/// Ground profile along the walking direction. Flat before `origin_x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerrainProfile {
    pub kind: TerrainKind,
    /// Inclination for [`TerrainKind::Slope`], rad. Negative goes downhill.
    #[serde(default)]
    pub slope_angle: f64,
    #[serde(default)]
    pub step_rise: f64,
    #[serde(default)]
    pub step_run: f64,
    #[serde(default)]
    pub origin_x: f64,
}

/// Penetration of a point into the terrain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactGeometry {
    /// Depth along `normal`, m (> 0).
    pub depth: f64,
    /// Outward unit normal (x, z).
    pub normal: [f64; 2],
}

impl Default for TerrainProfile {
    fn default() -> Self {
        Self::flat()
    }
}

impl TerrainProfile {
    pub fn flat() -> Self {
        Self { kind: TerrainKind::Flat, slope_angle: 0.0, step_rise: 0.0, step_run: 0.0, origin_x: 0.0 }
    }

    pub fn slope(angle: f64, origin_x: f64) -> Self {
        Self { kind: TerrainKind::Slope, slope_angle: angle, origin_x, ..Self::flat() }
    }

    pub fn stairs(rise: f64, run: f64, origin_x: f64) -> Self {
        Self { kind: TerrainKind::Stairs, step_rise: rise, step_run: run, origin_x, ..Self::flat() }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let ok = match self.kind {
            TerrainKind::Flat => true,
            TerrainKind::Slope => self.slope_angle.abs() < core::f64::consts::FRAC_PI_2,
            TerrainKind::Stairs => self.step_rise > 0.0 && self.step_run > 0.0,
        };
        if ok && self.origin_x.is_finite() {
            Ok(())
        } else {
            Err(SimError::InvalidConfig("terrain parameters out of range"))
        }
    }

    pub fn height(&self, x: f64) -> f64 {
        terrain_height(self, x)
    }

    /// Penetration of the point `(x, z)`, if it is inside the ground.
    ///
    /// Stairs resolve along the shallower of the vertical and the riser
    /// direction, so a toe that hits a riser is pushed back instead of
    /// being launched onto the tread.
    pub fn penetration(&self, x: f64, z: f64) -> Option<ContactGeometry> {
        let ground = self.height(x);
        if z >= ground {
            return None;
        }
        let vertical = ground - z;
        match self.kind {
            TerrainKind::Flat => Some(ContactGeometry { depth: vertical, normal: [0.0, 1.0] }),
            TerrainKind::Slope => {
                if x > self.origin_x {
                    let (s, c) = libm::sincos(self.slope_angle);
                    Some(ContactGeometry { depth: vertical * c, normal: [-s, c] })
                } else {
                    Some(ContactGeometry { depth: vertical, normal: [0.0, 1.0] })
                }
            }
            TerrainKind::Stairs => {
                let steps = libm::floor((x - self.origin_x).max(0.0) / self.step_run);
                if steps >= 1.0 {
                    let edge = self.origin_x + steps * self.step_run;
                    let tread_below = (steps - 1.0) * self.step_rise;
                    let horizontal = x - edge;
                    if z > tread_below && horizontal < vertical {
                        return Some(ContactGeometry { depth: horizontal, normal: [-1.0, 0.0] });
                    }
                }
                Some(ContactGeometry { depth: vertical, normal: [0.0, 1.0] })
            }
        }
    }
}

/// Ground height at `x`. Total over all finite `x`.
pub fn terrain_height(terrain: &TerrainProfile, x: f64) -> f64 {
    let run = x - terrain.origin_x;
    match terrain.kind {
        TerrainKind::Flat => 0.0,
        TerrainKind::Slope => {
            if run > 0.0 {
                run * libm::tan(terrain.slope_angle)
            } else {
                0.0
            }
        }
        TerrainKind::Stairs => terrain.step_rise * libm::floor(run.max(0.0) / terrain.step_run),
    }
}
