//! Synthetic 2D/3D pose pairs.
//!
//! Poses are built by walking the skeleton tree from the root: every bone
//! has a fixed length and a rest direction, and each joint applies a local
//! rotation (twist · flex · abduct) drawn inside the bone's angle limits on
//! top of its parent's accumulated rotation. A random yaw about the
//! vertical axis orients the whole body. The 3D pose is root-relative in
//! camera axes; the 2D pose is its pinhole projection with the root placed
//! `z0` in front of the camera.
//!
//! Each action has a fixed "style": per-joint angle centers drawn from a
//! stream seeded by the action index alone, so poses of the same action
//! cluster together across seeds.

use std::sync::OnceLock;

use serde::Deserialize;

use super::camera::{project, CameraModel};
use super::dataset::PosePair;
use super::skeleton::{ActionLabel, SkeletonSpec, NUM_JOINTS};
use crate::error::{Error, Result};
use crate::nn::rng::SeededRng;

const BONES_JSON: &str = include_str!("../../data/bones.json");
const STYLE_SEED: u64 = 0x7374_796c_6500;

pub const NUM_SUBJECTS: usize = 7;

#[derive(Debug, Clone, Deserialize)]
pub struct Bone {
    pub joint: String,
    pub length: f64,
    pub direction: [f64; 3],
    pub flex: [f64; 2],
    pub abduct: [f64; 2],
    pub twist: [f64; 2],
}

#[derive(Deserialize)]
struct BoneFile {
    bones: Vec<Bone>,
}

/// Shipped bone table, indexed by child joint (root entry is `None`).
pub fn bone_table() -> &'static [Option<Bone>] {
    static TABLE: OnceLock<Vec<Option<Bone>>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let file: BoneFile = serde_json::from_str(BONES_JSON).expect("shipped bones.json is valid");
        let skel = SkeletonSpec::canonical();
        let mut table: Vec<Option<Bone>> = vec![None; skel.len()];
        for b in file.bones {
            let j = skel.index_of(&b.joint).expect("bone joint in skeleton");
            table[j] = Some(b);
        }
        for (j, b) in table.iter().enumerate() {
            assert_eq!(b.is_some(), skel.parent(j).is_some(), "bone table covers every non-root joint");
        }
        table
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    /// Standard deviation (pixels) of Gaussian noise added to the 2D pose.
    pub noise_std: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self { noise_std: 0.0 }
    }
}

type Mat3 = [[f64; 3]; 3];

fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn mat_vec(a: &Mat3, v: &[f64; 3]) -> [f64; 3] {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

fn rot_x(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
}

pub(crate) fn rot_y(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}

fn rot_z(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Per-joint `[flex, abduct, twist]` centers for one action.
fn action_style(action: ActionLabel) -> Vec<[f64; 3]> {
    let mut rng = SeededRng::new(STYLE_SEED + action.index() as u64);
    bone_table()
        .iter()
        .map(|b| match b {
            None => [0.0; 3],
            Some(b) => [
                rng.uniform(b.flex[0], b.flex[1]),
                rng.uniform(b.abduct[0], b.abduct[1]),
                rng.uniform(b.twist[0], b.twist[1]),
            ],
        })
        .collect()
}

fn sample_angle(center: f64, range: [f64; 2], rng: &mut SeededRng) -> f64 {
    let half = (range[1] - range[0]) / 4.0;
    (center + rng.uniform(-half, half)).clamp(range[0], range[1])
}

/// Forward kinematics: root-relative 3D pose for the given local angles and
/// global yaw.
pub fn pose_from_angles(angles: &[[f64; 3]], yaw: f64) -> [[f64; 3]; NUM_JOINTS] {
    let skel = SkeletonSpec::canonical();
    let bones = bone_table();
    let mut rot = [IDENTITY; NUM_JOINTS];
    let mut pos = [[0.0; 3]; NUM_JOINTS];
    rot[skel.root()] = rot_y(yaw);
    // Canonical order lists every parent before its children.
    for j in 0..NUM_JOINTS {
        let Some(p) = skel.parent(j) else { continue };
        let b = bones[j].as_ref().expect("non-root bone");
        let [flex, abduct, twist] = angles[j];
        let local = mat_mul(&mat_mul(&rot_y(twist), &rot_x(flex)), &rot_z(abduct));
        rot[j] = mat_mul(&rot[p], &local);
        let d = b.direction;
        let seg = mat_vec(&rot[j], &[d[0] * b.length, d[1] * b.length, d[2] * b.length]);
        pos[j] = [pos[p][0] + seg[0], pos[p][1] + seg[1], pos[p][2] + seg[2]];
    }
    pos
}

pub fn synth_generate(
    n: usize,
    seed: u64,
    cam: &CameraModel,
    opts: &SynthOptions,
) -> Result<Vec<PosePair>> {
    if n == 0 {
        return Err(Error::Config("synthetic sample count must be >= 1".into()));
    }
    cam.validate()?;
    let styles: Vec<Vec<[f64; 3]>> = ActionLabel::ALL.iter().map(|&a| action_style(a)).collect();
    let bones = bone_table();
    let mut rng = SeededRng::new(seed);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let action = ActionLabel::ALL[i % ActionLabel::ALL.len()];
        let style = &styles[action.index()];
        let mut angles = vec![[0.0; 3]; NUM_JOINTS];
        for j in 0..NUM_JOINTS {
            if let Some(b) = &bones[j] {
                angles[j] = [
                    sample_angle(style[j][0], b.flex, &mut rng),
                    sample_angle(style[j][1], b.abduct, &mut rng),
                    sample_angle(style[j][2], b.twist, &mut rng),
                ];
            }
        }
        let yaw = rng.uniform(-std::f64::consts::PI, std::f64::consts::PI);
        let pose3d = pose_from_angles(&angles, yaw);
        let uv = project(&pose3d, cam)?;
        let mut pose2d = [[0.0; 2]; NUM_JOINTS];
        for (dst, src) in pose2d.iter_mut().zip(&uv) {
            *dst = *src;
            if opts.noise_std > 0.0 {
                dst[0] += rng.normal(opts.noise_std);
                dst[1] += rng.normal(opts.noise_std);
            }
        }
        out.push(PosePair {
            pose2d,
            pose3d,
            subject: format!("S{}", i % NUM_SUBJECTS + 1),
            action,
            frame: (i / ActionLabel::ALL.len()) as u64,
        });
    }
    Ok(out)
}
