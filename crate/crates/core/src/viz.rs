//! SVG skeleton figures.
//!
//! 3D poses are drawn with an orthographic camera: the pose is turned by
//! `-azimuth` about the vertical axis, then tilted by `elevation` about the
//! horizontal image axis, and the depth coordinate is dropped. Image axes
//! follow the data convention (x right, y down), so with both angles zero
//! the view is the camera's own.
//!
//! Every figure is fitted to its panel with a 5% margin and a uniform
//! scale; all coordinates are printed with two decimals, so output bytes
//! depend only on the inputs and the style.

use std::fmt::Write as _;

use crate::data::{Side, SkeletonSpec, NUM_JOINTS};
use crate::error::{Error, Result};

pub const MARGIN_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct RenderStyle {
    pub panel_width: f64,
    pub panel_height: f64,
    /// Band above each triptych panel reserved for its title.
    pub title_height: f64,
    pub joint_radius: f64,
    pub bone_width: f64,
    pub left_color: String,
    pub right_color: String,
    pub torso_color: String,
    pub joint_color: String,
    pub background: String,
    /// Degrees.
    pub azimuth: f64,
    /// Degrees.
    pub elevation: f64,
}

impl Default for RenderStyle {
    fn default() -> Self {
        Self {
            panel_width: 360.0,
            panel_height: 400.0,
            title_height: 28.0,
            joint_radius: 4.0,
            bone_width: 3.0,
            left_color: "#1f6fd1".into(),
            right_color: "#d1341f".into(),
            torso_color: "#3c3c3c".into(),
            joint_color: "#111111".into(),
            background: "#ffffff".into(),
            azimuth: 70.0,
            elevation: 15.0,
        }
    }
}

impl RenderStyle {
    pub fn validate(&self) -> Result<()> {
        if !(self.panel_width > 0.0 && self.panel_height > 0.0) {
            return Err(Error::Config("render canvas must be positive".into()));
        }
        if !(self.title_height >= 0.0 && self.joint_radius >= 0.0 && self.bone_width >= 0.0) {
            return Err(Error::Config("render sizes must be non-negative".into()));
        }
        if !(self.azimuth.is_finite() && self.elevation.is_finite()) {
            return Err(Error::Config("view angles must be finite".into()));
        }
        Ok(())
    }
}

fn ensure_finite(v: &[f64], what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// Orthographic image-plane coordinates of a 3D pose under the style's view.
pub fn view_coords(pose: &[[f64; 3]; NUM_JOINTS], style: &RenderStyle) -> Result<[[f64; 2]; NUM_JOINTS]> {
    ensure_finite(pose.as_flattened(), "3D pose")?;
    let (sa, ca) = (-style.azimuth.to_radians()).sin_cos();
    let (se, ce) = style.elevation.to_radians().sin_cos();
    let mut out = [[0.0; 2]; NUM_JOINTS];
    for (o, p) in out.iter_mut().zip(pose) {
        // about the vertical axis
        let x = ca * p[0] + sa * p[2];
        let z = -sa * p[0] + ca * p[2];
        // about the horizontal axis
        let y = ce * p[1] - se * z;
        *o = [x, y];
    }
    Ok(out)
}

/// Uniform scale and offset mapping `points` into `(x0, y0, w, h)` minus
/// the margin, centered. Coincident points fall back to scale 1.
#[derive(Debug, Clone, Copy)]
struct Fit {
    scale: f64,
    dx: f64,
    dy: f64,
}

impl Fit {
    fn new(points: &[[f64; 2]], x0: f64, y0: f64, w: f64, h: f64) -> Fit {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in points {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let (iw, ih) = (w * (1.0 - 2.0 * MARGIN_FRACTION), h * (1.0 - 2.0 * MARGIN_FRACTION));
        let (bw, bh) = (hi[0] - lo[0], hi[1] - lo[1]);
        let sx = if bw > 1e-9 { iw / bw } else { f64::INFINITY };
        let sy = if bh > 1e-9 { ih / bh } else { f64::INFINITY };
        let mut scale = sx.min(sy);
        if !scale.is_finite() {
            scale = 1.0;
        }
        let (cx, cy) = ((lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0);
        Fit {
            scale,
            dx: x0 + w / 2.0 - cx * scale,
            dy: y0 + h / 2.0 - cy * scale,
        }
    }

    fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        [p[0] * self.scale + self.dx, p[1] * self.scale + self.dy]
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn header(out: &mut String, w: f64, h: f64, style: &RenderStyle) {
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w:.2}" height="{h:.2}" viewBox="0 0 {w:.2} {h:.2}">"#
    );
    let _ = writeln!(
        out,
        r#"<rect x="0.00" y="0.00" width="{w:.2}" height="{h:.2}" fill="{}"/>"#,
        escape(&style.background)
    );
}

/// Bones then joints, already in canvas coordinates.
fn skeleton(out: &mut String, pts: &[[f64; 2]; NUM_JOINTS], style: &RenderStyle) {
    let skel = SkeletonSpec::canonical();
    for (parent, child) in skel.bones() {
        let color = match skel.side(child) {
            Side::Left => &style.left_color,
            Side::Right => &style.right_color,
            Side::Center => &style.torso_color,
        };
        let (a, b) = (pts[parent], pts[child]);
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{}" stroke-width="{:.2}" stroke-linecap="round"/>"#,
            a[0],
            a[1],
            b[0],
            b[1],
            escape(color),
            style.bone_width
        );
    }
    for p in pts {
        let _ = writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="{:.2}" fill="{}"/>"#,
            p[0],
            p[1],
            style.joint_radius,
            escape(&style.joint_color)
        );
    }
}

fn fitted(points: &[[f64; 2]; NUM_JOINTS], fit: &Fit) -> [[f64; 2]; NUM_JOINTS] {
    let mut out = [[0.0; 2]; NUM_JOINTS];
    for (o, p) in out.iter_mut().zip(points) {
        *o = fit.apply(*p);
    }
    out
}

fn single(points: &[[f64; 2]; NUM_JOINTS], style: &RenderStyle) -> String {
    let (w, h) = (style.panel_width, style.panel_height);
    let fit = Fit::new(points, 0.0, 0.0, w, h);
    let mut out = String::new();
    header(&mut out, w, h, style);
    skeleton(&mut out, &fitted(points, &fit), style);
    out.push_str("</svg>\n");
    out
}

/// One panel: a 2D pose in pixels.
pub fn render_pose2d(pose: &[[f64; 2]; NUM_JOINTS], style: &RenderStyle) -> Result<String> {
    style.validate()?;
    ensure_finite(pose.as_flattened(), "2D pose")?;
    Ok(single(pose, style))
}

/// One panel: a root-relative 3D pose in millimeters.
pub fn render_pose3d(pose: &[[f64; 3]; NUM_JOINTS], style: &RenderStyle) -> Result<String> {
    style.validate()?;
    Ok(single(&view_coords(pose, style)?, style))
}

/// Three side-by-side panels: the 2D input, the ground-truth 3D pose and
/// the predicted 3D pose. Both 3D panels share one fit so their sizes are
/// directly comparable.
pub fn render_triptych(
    pose2d_gt: &[[f64; 2]; NUM_JOINTS],
    pose3d_gt: &[[f64; 3]; NUM_JOINTS],
    pose3d_pred: &[[f64; 3]; NUM_JOINTS],
    style: &RenderStyle,
) -> Result<String> {
    style.validate()?;
    ensure_finite(pose2d_gt.as_flattened(), "2D pose")?;
    let gt = view_coords(pose3d_gt, style)?;
    let pred = view_coords(pose3d_pred, style)?;
    let (pw, ph, th) = (style.panel_width, style.panel_height, style.title_height);
    let fit2 = Fit::new(pose2d_gt, 0.0, th, pw, ph);
    let both: Vec<[f64; 2]> = gt.iter().chain(&pred).copied().collect();
    let fit3 = Fit::new(&both, 0.0, th, pw, ph);
    let panels: [(&str, [[f64; 2]; NUM_JOINTS]); 3] = [
        ("2D input", fitted(pose2d_gt, &fit2)),
        ("3D ground truth", fitted(&gt, &fit3)),
        ("3D prediction", fitted(&pred, &fit3)),
    ];
    let mut out = String::new();
    header(&mut out, 3.0 * pw, ph + th, style);
    for (i, (title, pts)) in panels.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<g class="panel" transform="translate({:.2},0.00)">"#,
            i as f64 * pw
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
            pw / 2.0,
            th * 0.7,
            escape(title)
        );
        skeleton(&mut out, pts, style);
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    Ok(out)
}
