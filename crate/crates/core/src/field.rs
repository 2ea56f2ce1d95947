//! Soccer field model: named key points and marking primitives on `z = 0`.
//!
//! The default model is a 105 m x 68 m pitch with standard marking geometry.
//! The origin is a field corner, `x` runs along the touch line and `y` along
//! the goal line.

use std::collections::HashSet;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("field dimensions must be positive")]
    InvalidDimensions,
    #[error("duplicate key point name `{0}`")]
    DuplicateKeyPoint(String),
    #[error("{0} lies outside the field rectangle")]
    OutsideField(String),
    #[error("invalid primitive: {0}")]
    InvalidPrimitive(String),
    #[error("field file: {0}")]
    Parse(String),
}

/// Named marking point on the field plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyPoint {
    pub name: String,
    /// `(x, y)` in meters; `z` is always zero.
    pub position: [f64; 2],
}

impl KeyPoint {
    pub fn world(&self) -> Vector3<f64> {
        Vector3::new(self.position[0], self.position[1], 0.0)
    }
}

/// A field marking primitive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Marking {
    Line {
        start: [f64; 2],
        end: [f64; 2],
    },
    /// Circular arc, counter-clockwise from `start_angle` to `end_angle`
    /// (degrees, measured from `+x`).
    Arc {
        center: [f64; 2],
        radius: f64,
        start_angle: f64,
        end_angle: f64,
    },
}

impl Marking {
    /// Points along the primitive spaced at most `step` meters apart,
    /// including both endpoints.
    pub fn sample(&self, step: f64) -> Vec<Vector2<f64>> {
        match *self {
            Marking::Line { start, end } => {
                let a = Vector2::from(start);
                let b = Vector2::from(end);
                let n = ((b - a).norm() / step).ceil().max(1.0) as usize;
                (0..=n).map(|i| a + (b - a) * (i as f64 / n as f64)).collect()
            }
            Marking::Arc {
                center,
                radius,
                start_angle,
                end_angle,
            } => {
                let c = Vector2::from(center);
                let sweep = (end_angle - start_angle).to_radians();
                let n = ((sweep.abs() * radius) / step).ceil().max(1.0) as usize;
                (0..=n)
                    .map(|i| {
                        let a = start_angle.to_radians() + sweep * i as f64 / n as f64;
                        c + Vector2::new(a.cos(), a.sin()) * radius
                    })
                    .collect()
            }
        }
    }

    fn describe(&self) -> String {
        match self {
            Marking::Line { start, end } => format!("line {start:?}-{end:?}"),
            Marking::Arc { center, radius, .. } => format!("arc at {center:?} r={radius}"),
        }
    }
}

/// Field dimensions, annotation key points and marking primitives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldModel {
    pub length: f64,
    pub width: f64,
    #[serde(default)]
    pub key_points: Vec<KeyPoint>,
    #[serde(default)]
    pub markings: Vec<Marking>,
}

const PENALTY_AREA_DEPTH: f64 = 16.5;
const PENALTY_AREA_HALF_WIDTH: f64 = 20.16;
const GOAL_AREA_DEPTH: f64 = 5.5;
const GOAL_AREA_HALF_WIDTH: f64 = 9.16;
const PENALTY_MARK_DISTANCE: f64 = 11.0;
const CIRCLE_RADIUS: f64 = 9.15;
const CORNER_ARC_RADIUS: f64 = 1.0;

impl Default for FieldModel {
    fn default() -> Self {
        Self::standard(105.0, 68.0)
    }
}

impl FieldModel {
    /// Standard markings on a pitch of the given size.
    pub fn standard(length: f64, width: f64) -> Self {
        let mid_x = length / 2.0;
        let mid_y = width / 2.0;
        let mut key_points = Vec::new();
        let mut markings = Vec::new();
        let mut kp = |name: &str, x: f64, y: f64| {
            key_points.push(KeyPoint {
                name: name.to_string(),
                position: [x, y],
            })
        };
        let line = |a: [f64; 2], b: [f64; 2]| Marking::Line { start: a, end: b };

        kp("corner_left_bottom", 0.0, 0.0);
        kp("corner_left_top", 0.0, width);
        kp("corner_right_bottom", length, 0.0);
        kp("corner_right_top", length, width);
        kp("halfway_bottom", mid_x, 0.0);
        kp("halfway_top", mid_x, width);
        kp("center_spot", mid_x, mid_y);
        kp("center_circle_bottom", mid_x, mid_y - CIRCLE_RADIUS);
        kp("center_circle_top", mid_x, mid_y + CIRCLE_RADIUS);

        let arc_dy = (CIRCLE_RADIUS.powi(2)
            - (PENALTY_AREA_DEPTH - PENALTY_MARK_DISTANCE).powi(2))
        .sqrt();
        let arc_half_angle = ((PENALTY_AREA_DEPTH - PENALTY_MARK_DISTANCE) / CIRCLE_RADIUS)
            .acos()
            .to_degrees();

        for (side, x0, dir) in [("left", 0.0, 1.0), ("right", length, -1.0)] {
            let pa = x0 + dir * PENALTY_AREA_DEPTH;
            let ga = x0 + dir * GOAL_AREA_DEPTH;
            let pm = x0 + dir * PENALTY_MARK_DISTANCE;
            let (pb, pt) = (mid_y - PENALTY_AREA_HALF_WIDTH, mid_y + PENALTY_AREA_HALF_WIDTH);
            let (gb, gt) = (mid_y - GOAL_AREA_HALF_WIDTH, mid_y + GOAL_AREA_HALF_WIDTH);
            kp(&format!("penalty_area_{side}_goal_bottom"), x0, pb);
            kp(&format!("penalty_area_{side}_goal_top"), x0, pt);
            kp(&format!("penalty_area_{side}_inner_bottom"), pa, pb);
            kp(&format!("penalty_area_{side}_inner_top"), pa, pt);
            kp(&format!("goal_area_{side}_goal_bottom"), x0, gb);
            kp(&format!("goal_area_{side}_goal_top"), x0, gt);
            kp(&format!("goal_area_{side}_inner_bottom"), ga, gb);
            kp(&format!("goal_area_{side}_inner_top"), ga, gt);
            kp(&format!("penalty_mark_{side}"), pm, mid_y);
            kp(&format!("penalty_arc_{side}_bottom"), pa, mid_y - arc_dy);
            kp(&format!("penalty_arc_{side}_top"), pa, mid_y + arc_dy);

            markings.push(line([x0, pb], [pa, pb]));
            markings.push(line([pa, pb], [pa, pt]));
            markings.push(line([pa, pt], [x0, pt]));
            markings.push(line([x0, gb], [ga, gb]));
            markings.push(line([ga, gb], [ga, gt]));
            markings.push(line([ga, gt], [x0, gt]));
            let facing = if dir > 0.0 { 0.0 } else { 180.0 };
            markings.push(Marking::Arc {
                center: [pm, mid_y],
                radius: CIRCLE_RADIUS,
                start_angle: facing - arc_half_angle,
                end_angle: facing + arc_half_angle,
            });
        }

        markings.push(line([0.0, 0.0], [length, 0.0]));
        markings.push(line([length, 0.0], [length, width]));
        markings.push(line([length, width], [0.0, width]));
        markings.push(line([0.0, width], [0.0, 0.0]));
        markings.push(line([mid_x, 0.0], [mid_x, width]));
        markings.push(Marking::Arc {
            center: [mid_x, mid_y],
            radius: CIRCLE_RADIUS,
            start_angle: 0.0,
            end_angle: 360.0,
        });
        for (c, a0) in [
            ([0.0, 0.0], 0.0),
            ([length, 0.0], 90.0),
            ([length, width], 180.0),
            ([0.0, width], 270.0),
        ] {
            markings.push(Marking::Arc {
                center: c,
                radius: CORNER_ARC_RADIUS,
                start_angle: a0,
                end_angle: a0 + 90.0,
            });
        }

        Self {
            length,
            width,
            key_points,
            markings,
        }
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        if !(self.length > 0.0 && self.width > 0.0) {
            return Err(FieldError::InvalidDimensions);
        }
        let mut names = HashSet::new();
        for k in &self.key_points {
            if !names.insert(k.name.as_str()) {
                return Err(FieldError::DuplicateKeyPoint(k.name.clone()));
            }
            if !self.contains(&Vector2::from(k.position), 1e-9) {
                return Err(FieldError::OutsideField(format!("key point `{}`", k.name)));
            }
        }
        for m in &self.markings {
            if let Marking::Arc { radius, .. } = m {
                if radius.is_nan() || *radius <= 0.0 {
                    return Err(FieldError::InvalidPrimitive(m.describe()));
                }
            }
            if m.sample(0.5).iter().any(|p| !self.contains(p, 1e-9)) {
                return Err(FieldError::OutsideField(m.describe()));
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: &Vector2<f64>, tol: f64) -> bool {
        p.x >= -tol && p.y >= -tol && p.x <= self.length + tol && p.y <= self.width + tol
    }

    pub fn key_point(&self, name: &str) -> Option<&KeyPoint> {
        self.key_points.iter().find(|k| k.name == name)
    }

    /// Field rectangle grown by `margin` meters on every side, counter-clockwise.
    pub fn outline(&self, margin: f64) -> Vec<Vector2<f64>> {
        vec![
            Vector2::new(-margin, -margin),
            Vector2::new(self.length + margin, -margin),
            Vector2::new(self.length + margin, self.width + margin),
            Vector2::new(-margin, self.width + margin),
        ]
    }

    /// Parses and validates a field file (TOML).
    pub fn from_toml(text: &str) -> Result<Self, FieldError> {
        let field: FieldModel = toml::from_str(text).map_err(|e| FieldError::Parse(e.to_string()))?;
        field.validate()?;
        Ok(field)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("field model always serializes")
    }
}
