use serde::{Deserialize, Serialize};

use super::skeleton::SkeletonSpec;
use crate::error::{Error, Result};

/// Pinhole camera looking down +z. `z0` is added to every joint depth
/// before projecting, which places a root-relative pose in front of the
/// camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    pub z0: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            focal: 1145.0,
            cx: 512.0,
            cy: 515.0,
            z0: 5000.0,
        }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.focal > 0.0) || !self.focal.is_finite() {
            return Err(Error::Config(format!("focal length must be > 0, got {}", self.focal)));
        }
        Ok(())
    }
}

/// `u = f·X/Z + cx`, `v = f·Y/Z + cy` with `Z = z + z0`.
pub fn project(pose3d: &[[f64; 3]], cam: &CameraModel) -> Result<Vec<[f64; 2]>> {
    cam.validate()?;
    pose3d
        .iter()
        .enumerate()
        .map(|(j, p)| {
            let z = p[2] + cam.z0;
            if !(z > 0.0) {
                let name = SkeletonSpec::canonical()
                    .names()
                    .get(j)
                    .cloned()
                    .unwrap_or_else(|| format!("#{j}"));
                return Err(Error::Depth { joint: j, name, depth: z });
            }
            Ok([cam.focal * p[0] / z + cam.cx, cam.focal * p[1] / z + cam.cy])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam(z0: f64) -> CameraModel {
        CameraModel { focal: 1000.0, cx: 500.0, cy: 500.0, z0 }
    }

    #[test]
    fn optical_axis_hits_principal_point() {
        let uv = project(&[[0.0, 0.0, 2500.0]], &cam(0.0)).unwrap();
        assert_eq!(uv[0], [500.0, 500.0]);
    }

    #[test]
    fn unit_ratio() {
        let uv = project(&[[1000.0, 0.0, 1000.0]], &cam(0.0)).unwrap();
        assert_eq!(uv[0], [1500.0, 500.0]);
    }

    #[test]
    fn whole_pose_scaling_is_invisible() {
        let p = [[120.0, -40.0, 3000.0], [-75.5, 300.0, 3400.0], [10.0, 10.0, 2900.0]];
        let a = project(&p, &cam(0.0)).unwrap();
        for s in [0.5, 2.0, 7.25] {
            let q: Vec<[f64; 3]> = p.iter().map(|v| [v[0] * s, v[1] * s, v[2] * s]).collect();
            let b = project(&q, &cam(0.0)).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x[0] - y[0]).abs() < 1e-9 && (x[1] - y[1]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn behind_camera_names_joint() {
        let p = [[0.0, 0.0, 10.0], [0.0, 0.0, -20.0]];
        let err = project(&p, &cam(0.0)).unwrap_err().to_string();
        assert!(err.contains("joint 1") && err.contains("RHip"), "{err}");
    }
}
