//! Pinhole camera model and SE(3) rigid transforms: projection,
//! back-projection and relative view matrices.
//!
//! Axis conventions, fixed once for the whole crate: image coordinates are
//! x-right / y-down, camera axes are x-right / y-down / z-forward, and view
//! matrices map world → camera. A camera translated by `+c` in world space
//! therefore carries translation `−c` in its view matrix, which makes the
//! relative transform between two views the literal product
//! `V_rel = V_next · V_prev⁻¹`.

use crate::error::{Error, Result};
use nalgebra::{Matrix3, Vector3};

/// Orthonormality / determinant tolerance for accepting a rotation block.
const ROTATION_TOL: f64 = 1e-9;

/// A 3D point in camera (or world) coordinates, in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

/// Result of projecting a 3D point through the pinhole model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projected {
    /// Column coordinate in pixels.
    pub u: f64,
    /// Row coordinate in pixels.
    pub v: f64,
    /// Depth along the optical axis, in meters.
    pub depth: f64,
}

/// Pinhole intrinsics: focal lengths and principal point in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        if !(fx.is_finite() && fx > 0.0) {
            return Err(Error::InvalidParameter {
                name: "fx",
                value: fx,
                range: "(0, inf)",
            });
        }
        if !(fy.is_finite() && fy > 0.0) {
            return Err(Error::InvalidParameter {
                name: "fy",
                value: fy,
                range: "(0, inf)",
            });
        }
        if !(cx.is_finite() && cx >= 0.0 && cx < width as f64) {
            return Err(Error::InvalidParameter {
                name: "cx",
                value: cx,
                range: "[0, width)",
            });
        }
        if !(cy.is_finite() && cy >= 0.0 && cy < height as f64) {
            return Err(Error::InvalidParameter {
                name: "cy",
                value: cy,
                range: "[0, height)",
            });
        }
        if width == 0 || height == 0 {
            return Err(Error::EmptyRaster);
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Intrinsics from a vertical field of view, assuming square pixels:
    /// `fy = (height/2) / tan(fovy/2)`, `fx = fy`, principal point at the
    /// image center `(width/2, height/2)`.
    pub fn from_fovy(fovy_deg: f64, width: usize, height: usize) -> Result<Self> {
        if !(fovy_deg.is_finite() && fovy_deg > 0.0 && fovy_deg < 180.0) {
            return Err(Error::InvalidFieldOfView { fovy_deg });
        }
        let fy = (height as f64 / 2.0) / (fovy_deg.to_radians() / 2.0).tan();
        Self::new(fy, fy, width as f64 / 2.0, height as f64 / 2.0, width, height)
    }

    /// Parse intrinsics from plain `key=value` lines (keys fx, fy, cx, cy).
    /// Lines starting with `#` and blank lines are ignored.
    pub fn from_text(text: &str, width: usize, height: usize) -> Result<Self> {
        let mut fx = None;
        let mut fy = None;
        let mut cx = None;
        let mut cy = None;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::MetaParse {
                detail: format!("expected key=value, got {line:?}"),
            })?;
            let value: f64 = value.trim().parse().map_err(|_| Error::MetaParse {
                detail: format!("non-numeric value in {line:?}"),
            })?;
            match key.trim() {
                "fx" => fx = Some(value),
                "fy" => fy = Some(value),
                "cx" => cx = Some(value),
                "cy" => cy = Some(value),
                other => {
                    return Err(Error::MetaParse {
                        detail: format!("unknown intrinsics key {other:?}"),
                    })
                }
            }
        }
        match (fx, fy, cx, cy) {
            (Some(fx), Some(fy), Some(cx), Some(cy)) => Self::new(fx, fy, cx, cy, width, height),
            _ => Err(Error::MetaParse {
                detail: "intrinsics text must define fx, fy, cx and cy".into(),
            }),
        }
    }

    /// Lift a pixel plus metric depth to a 3D point in camera coordinates:
    /// `X = ((u−cx)·d/fx, (v−cy)·d/fy, d)`.
    pub fn back_project(&self, u: f64, v: f64, depth: f64) -> Result<Point3> {
        if !(depth.is_finite() && depth > 0.0) {
            return Err(Error::NonPositiveDepth { depth });
        }
        Ok(Point3 {
            x: (u - self.cx) * depth / self.fx,
            y: (v - self.cy) * depth / self.fy,
            z: depth,
        })
    }

    /// Project a camera-space point to the image plane. Points at or behind
    /// the camera (`z ≤ 0`) are non-projectable and yield `None` — callers
    /// drop them rather than treating the condition as a failure.
    pub fn project(&self, p: Point3) -> Option<Projected> {
        if !(p.z.is_finite() && p.z > 0.0) {
            return None;
        }
        Some(Projected {
            u: self.fx * p.x / p.z + self.cx,
            v: self.fy * p.y / p.z + self.cy,
            depth: p.z,
        })
    }
}

/// Rigid world→camera transform: rotation plus translation, the upper 3×4
/// of a homogeneous matrix whose last row is (0, 0, 0, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SE3Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl SE3Pose {
    /// Build from a rotation block and translation vector, validating that
    /// the rotation is orthonormal with determinant +1.
    pub fn from_parts(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOL {
            return Err(Error::InvalidRotation { det });
        }
        let gram = rotation.transpose() * rotation;
        let off = (gram - Matrix3::identity()).abs().max();
        if off > ROTATION_TOL {
            return Err(Error::InvalidRotation { det });
        }
        if translation.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite {
                what: "pose translation",
            });
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// View matrix of a camera sitting at world position `center` with no
    /// rotation. World→camera means the stored translation is `−center`.
    pub fn from_camera_center(center: Vector3<f64>) -> Result<Self> {
        Self::from_parts(Matrix3::identity(), -center)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Inverse rigid transform: `(R, t)⁻¹ = (Rᵀ, −Rᵀt)`.
    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Composition `self ∘ other` (apply `other`, then `self`).
    pub fn compose(&self, other: &SE3Pose) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Apply the transform to a point: `p' = R·p + t`.
    pub fn transform_point(&self, p: Point3) -> Point3 {
        let v = self.rotation * Vector3::new(p.x, p.y, p.z) + self.translation;
        Point3 {
            x: v.x,
            y: v.y,
            z: v.z,
        }
    }

    /// Largest absolute difference from the identity transform.
    pub fn deviation_from_identity(&self) -> f64 {
        let r = (self.rotation - Matrix3::identity()).abs().max();
        let t = self.translation.abs().max();
        r.max(t)
    }
}

/// Relative transform taking points from the `prev` camera's frame into the
/// `next` camera's frame: `V_rel = V_next · V_prev⁻¹`.
pub fn relative_transform(prev: &SE3Pose, next: &SE3Pose) -> SE3Pose {
    next.compose(&prev.inverse())
}
