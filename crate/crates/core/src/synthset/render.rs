//! Low-fidelity rasterizer: a jointed body projected orthographically,
//! painted back to front over a fixed panoramic scene.

use std::f64::consts::{PI, TAU};

use super::clothing::{ClothingSpec, Legwear, Sleeves, TorsoStyle};
use super::image::RgbImage;
use super::pose::{CameraSample, PoseSpec};
use super::{Gender, HairStyle, SubjectSpec};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Scene pixels are pulled towards mid-grey by this factor (haze).
const BACKDROP_CONTRAST: f64 = 0.25;
/// Pixels per metre at 8 m, as a fraction of the image height.
const SCALE_AT_8M: f64 = 0.37;
/// Vertical field of view used for the background, radians.
const FOV: f64 = 0.6;
const CAMERA_AIM_HEIGHT: f64 = 1.0;
const TORSO_SLICES: usize = 16;

/// Pixel coverage of a rendered figure.
#[derive(Clone, Debug, PartialEq)]
pub struct Figure {
    pub width: usize,
    pub height: usize,
    /// Every pixel painted by the body.
    pub silhouette: Vec<bool>,
    /// Pixels inside the torso outline, whether or not a limb covers them.
    pub torso: Vec<bool>,
}

impl Figure {
    fn rows(mask: &[bool], width: usize) -> impl Iterator<Item = usize> + '_ {
        mask.chunks(width)
            .map(|row| row.iter().filter(|&&b| b).count())
    }

    /// Rows between the topmost and bottommost body pixel, inclusive.
    pub fn pixel_height(&self) -> usize {
        let rows: Vec<usize> = Self::rows(&self.silhouette, self.width).collect();
        match (
            rows.iter().position(|&c| c > 0),
            rows.iter().rposition(|&c| c > 0),
        ) {
            (Some(a), Some(b)) => b - a + 1,
            _ => 0,
        }
    }

    /// Widest torso row, in pixels.
    pub fn torso_width(&self) -> usize {
        Self::rows(&self.torso, self.width).max().unwrap_or(0)
    }
}

/// Renders one image. `render_seed` drives the illumination tint and
/// sensor noise only; geometry and colours come from the specs.
pub fn render(
    subject: &SubjectSpec,
    clothing: &ClothingSpec,
    pose: &PoseSpec,
    camera: &CameraSample,
    width: usize,
    height: usize,
    render_seed: u64,
) -> Result<(RgbImage, Figure)> {
    if width == 0 || height == 0 {
        return Err(Error::Config("image dimensions must be positive".into()));
    }
    subject.somatotype.validate()?;
    let body = Body::of(subject)?;
    let view = View::new(camera, pose.yaw_offset, height);
    if body.height * view.scale < 1.0 {
        return Err(Error::Config(format!(
            "figure of {:.3} m at {:.1} m covers less than a pixel",
            body.height, camera.distance
        )));
    }
    let mut prims = build_primitives(subject, clothing, pose, &body, &view);
    place(&mut prims, width, height);

    let mut rgb = vec![[0.0f64; 3]; width * height];
    for y in 0..height {
        for x in 0..width {
            rgb[y * width + x] = background(camera, x, y, width, height)
                .map(|v| 128.0 + BACKDROP_CONTRAST * (v - 128.0));
        }
    }
    let mut figure = Figure {
        width,
        height,
        silhouette: vec![false; width * height],
        torso: vec![false; width * height],
    };
    // Painter's algorithm: farthest first, ties in construction order.
    let mut order: Vec<usize> = (0..prims.len()).collect();
    order.sort_by(|&a, &b| prims[a].depth.total_cmp(&prims[b].depth).then(a.cmp(&b)));
    let light = 0.988 + 0.018 * (camera.azimuth - 0.8).cos();
    for &i in &order {
        let p = &prims[i];
        let (x0, y0, x1, y1) = p.shape.bounds(width, height);
        let colour = p.colour.map(|c| c as f64 * p.shade * light);
        for y in y0..y1 {
            for x in x0..x1 {
                if p.shape.contains(x as f64 + 0.5, y as f64 + 0.5) {
                    let k = y * width + x;
                    rgb[k] = colour;
                    figure.silhouette[k] = true;
                    if p.torso {
                        figure.torso[k] = true;
                    }
                }
            }
        }
    }

    let mut rng = SeededRng::new(render_seed);
    let gain = rng.range(0.9775, 1.0225);
    let tint = [
        rng.range(0.991, 1.009),
        rng.range(0.991, 1.009),
        rng.range(0.991, 1.009),
    ];
    let mut img = RgbImage::new(width, height);
    for y in 0..height {
        for x in 0..width {
            let c = rgb[y * width + x];
            let mut px = [0u8; 3];
            for k in 0..3 {
                let noise = rng.range(-4.0, 4.0);
                px[k] = (c[k] * gain * tint[k] + noise).round().clamp(0.0, 255.0) as u8;
            }
            img.put(x, y, px);
        }
    }
    Ok((img, figure))
}

/// Body measurements in metres.
struct Body {
    height: f64,
    head_radius: f64,
    neck_radius: f64,
    /// `(level as a fraction of height, lateral half-width)`, bottom to top.
    torso_profile: [(f64, f64); 4],
    depth_ratio: f64,
    upper_arm: (f64, f64),
    forearm: (f64, f64),
    thigh: (f64, f64),
    shin: (f64, f64),
    /// Per side thickness factor, left then right.
    side_scale: [f64; 2],
    arm_splay: f64,
}

impl Body {
    fn of(s: &SubjectSpec) -> Result<Self> {
        let m = &s.somatotype;
        let female = s.gender == Gender::Female;
        let base = if female { 1.64 } else { 1.76 };
        let height = base * s.height_scale * (1.0 + m.blend(0.05, 0.0, -0.03));
        let w = height * s.width_scale;
        let shoulder = m.blend(0.095, 0.125, 0.132) * if female { 0.9 } else { 1.0 };
        let chest = m.blend(0.085, 0.110, 0.128);
        let waist = m.blend(0.070, 0.074, 0.130) * if female { 0.92 } else { 1.0 };
        let hip = m.blend(0.080, 0.090, 0.124) * if female { 1.1 } else { 1.0 };
        let body = Self {
            height,
            head_radius: height * 0.062 * (1.0 + 0.08 * m.w_endo),
            neck_radius: w * 0.026 * (1.0 + 0.3 * m.w_meso + 0.4 * m.w_endo),
            torso_profile: [
                (0.47, w * hip),
                (0.60, w * waist),
                (0.71, w * chest),
                (0.81, w * shoulder),
            ],
            depth_ratio: m.blend(0.55, 0.65, 0.85),
            upper_arm: (w * m.blend(0.022, 0.031, 0.038), height * 0.17),
            forearm: (w * m.blend(0.018, 0.025, 0.030), height * 0.15),
            thigh: (w * m.blend(0.036, 0.047, 0.062), height * 0.23),
            shin: (w * m.blend(0.026, 0.033, 0.040), height * 0.225),
            side_scale: [1.0 + s.limb_asymmetry, 1.0 - s.limb_asymmetry],
            arm_splay: 0.06 + 0.12 * m.w_endo,
        };
        let dims = [
            body.height,
            body.head_radius,
            body.neck_radius,
            body.depth_ratio,
            body.upper_arm.0,
            body.thigh.0,
            body.side_scale[0],
            body.side_scale[1],
        ];
        if dims.iter().any(|&d| !(d > 0.0)) || body.torso_profile.iter().any(|p| !(p.1 > 0.0)) {
            return Err(Error::Config(format!(
                "subject {} has a non-positive body dimension",
                s.subject_id
            )));
        }
        Ok(body)
    }

    fn torso_half_width(&self, level: f64) -> f64 {
        let p = &self.torso_profile;
        if level <= p[0].0 {
            return p[0].1;
        }
        for w in p.windows(2) {
            if level <= w[1].0 {
                let t = (level - w[0].0) / (w[1].0 - w[0].0);
                return w[0].1 + t * (w[1].1 - w[0].1);
            }
        }
        p[3].1
    }
}

type V3 = [f64; 3];

fn add(a: V3, b: V3) -> V3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn scale(a: V3, s: f64) -> V3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Orthographic camera looking at the subject from `camera`.
struct View {
    /// World directions of the body's lateral (left) and forward axes.
    body_x: V3,
    body_z: V3,
    right: V3,
    up: V3,
    toward: V3,
    scale: f64,
}

impl View {
    fn new(camera: &CameraSample, yaw: f64, image_height: usize) -> Self {
        let (sa, ca) = camera.azimuth.sin_cos();
        let (se, ce) = camera.elevation.sin_cos();
        let (sy, cy) = yaw.sin_cos();
        Self {
            body_x: [cy, 0.0, -sy],
            body_z: [sy, 0.0, cy],
            right: [ca, 0.0, -sa],
            up: [-se * sa, ce, -se * ca],
            toward: [ce * sa, se, ce * ca],
            scale: SCALE_AT_8M * image_height as f64 * 8.0 / camera.distance,
        }
    }

    fn world(&self, p: V3) -> V3 {
        add(
            add(scale(self.body_x, p[0]), [0.0, p[1], 0.0]),
            scale(self.body_z, p[2]),
        )
    }

    /// Screen offset in pixels (y down, before placement) and depth toward
    /// the camera in metres.
    fn project(&self, p: V3) -> (f64, f64, f64) {
        let w = self.world(p);
        (
            dot(w, self.right) * self.scale,
            -dot(w, self.up) * self.scale,
            dot(w, self.toward),
        )
    }

    /// Screen radii of a horizontal body ellipse with lateral half-width
    /// `a` and forward half-depth `b`.
    fn ellipse_radii(&self, a: f64, b: f64) -> (f64, f64) {
        let rx = ((a * dot(self.body_x, self.right)).powi(2)
            + (b * dot(self.body_z, self.right)).powi(2))
        .sqrt();
        let ry = ((a * dot(self.body_x, self.up)).powi(2)
            + (b * dot(self.body_z, self.up)).powi(2))
        .sqrt();
        (rx * self.scale, ry * self.scale)
    }
}

#[derive(Clone, Copy, Debug)]
enum Shape {
    /// Segment with linearly varying radius.
    Capsule {
        a: (f64, f64),
        b: (f64, f64),
        ra: f64,
        rb: f64,
    },
    Ellipse {
        c: (f64, f64),
        rx: f64,
        ry: f64,
    },
}

impl Shape {
    fn translate(&mut self, dx: f64, dy: f64) {
        match self {
            Shape::Capsule { a, b, .. } => {
                a.0 += dx;
                a.1 += dy;
                b.0 += dx;
                b.1 += dy;
            }
            Shape::Ellipse { c, .. } => {
                c.0 += dx;
                c.1 += dy;
            }
        }
    }

    /// `(min x, min y, max x, max y)` in continuous coordinates.
    fn extent(&self) -> (f64, f64, f64, f64) {
        match *self {
            Shape::Capsule { a, b, ra, rb } => (
                (a.0 - ra).min(b.0 - rb),
                (a.1 - ra).min(b.1 - rb),
                (a.0 + ra).max(b.0 + rb),
                (a.1 + ra).max(b.1 + rb),
            ),
            Shape::Ellipse { c, rx, ry } => (c.0 - rx, c.1 - ry, c.0 + rx, c.1 + ry),
        }
    }

    /// Pixel index range `[x0, x1) × [y0, y1)` clipped to the image.
    fn bounds(&self, width: usize, height: usize) -> (usize, usize, usize, usize) {
        let (x0, y0, x1, y1) = self.extent();
        let clip = |v: f64, hi: usize| v.max(0.0).min(hi as f64) as usize;
        (
            clip(x0.floor(), width),
            clip(y0.floor(), height),
            clip(x1.ceil() + 1.0, width),
            clip(y1.ceil() + 1.0, height),
        )
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Capsule { a, b, ra, rb } => {
                let (dx, dy) = (b.0 - a.0, b.1 - a.1);
                let len2 = dx * dx + dy * dy;
                let t = if len2 > 0.0 {
                    (((x - a.0) * dx + (y - a.1) * dy) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let (px, py) = (a.0 + t * dx - x, a.1 + t * dy - y);
                let r = ra + t * (rb - ra);
                px * px + py * py <= r * r
            }
            Shape::Ellipse { c, rx, ry } => {
                if rx <= 0.0 || ry <= 0.0 {
                    return false;
                }
                let (u, v) = ((x - c.0) / rx, (y - c.1) / ry);
                u * u + v * v <= 1.0
            }
        }
    }
}

struct Prim {
    shape: Shape,
    colour: [u8; 3],
    shade: f64,
    depth: f64,
    torso: bool,
}

fn build_primitives(
    subject: &SubjectSpec,
    clothing: &ClothingSpec,
    pose: &PoseSpec,
    body: &Body,
    view: &View,
) -> Vec<Prim> {
    let skin = subject.skin_tone.rgb();
    let h = body.height;
    let angles = pose.joint_angles();
    let mut prims = Vec::new();

    // Leg chains first: their lowest point fixes the ground line.
    let hip_y = 0.50 * h;
    let mut legs = Vec::new();
    for side in 0..2 {
        let lateral = if side == 0 { 1.0 } else { -1.0 };
        let hip = [lateral * body.torso_profile[0].1 * 0.55, hip_y, 0.0];
        let a = angles.hip[side];
        let knee = add(hip, scale([0.0, -a.cos(), a.sin()], body.thigh.1));
        let s = a - angles.knee[side];
        let ankle = add(knee, scale([0.0, -s.cos(), s.sin()], body.shin.1));
        legs.push((hip, knee, ankle));
    }
    let foot_r = 0.024 * h;
    let ground = legs.iter().map(|l| l.2[1]).fold(f64::INFINITY, f64::min) - foot_r;
    let lift = |p: V3| [p[0], p[1] - ground, p[2]];

    let capsule =
        |prims: &mut Vec<Prim>, p: V3, q: V3, rp: f64, rq: f64, colour: [u8; 3], shade: f64| {
            let (ax, ay, ad) = view.project(lift(p));
            let (bx, by, bd) = view.project(lift(q));
            prims.push(Prim {
                shape: Shape::Capsule {
                    a: (ax, ay),
                    b: (bx, by),
                    ra: rp * view.scale,
                    rb: rq * view.scale,
                },
                colour,
                shade,
                depth: 0.5 * (ad + bd),
                torso: false,
            });
        };
    // Limbs on the far side of the body come out slightly darker.
    let side_shade = |p: V3| {
        let (_, _, d) = view.project(lift(p));
        if d < 0.0 {
            0.85
        } else {
            1.0
        }
    };

    let (shin_colour, thigh_colour) = match clothing.legwear {
        Legwear::Trousers => (clothing.legs, clothing.legs),
        Legwear::Shorts => (skin, clothing.legs),
        Legwear::Skirt => (skin, skin),
    };
    for (side, &(hip, knee, ankle)) in legs.iter().enumerate() {
        let k = body.side_scale[side];
        let shade = side_shade(knee);
        let (tr, sr) = (body.thigh.0 * k, body.shin.0 * k);
        capsule(&mut prims, hip, knee, tr, tr * 0.8, thigh_colour, shade);
        capsule(&mut prims, knee, ankle, sr, sr * 0.75, shin_colour, shade);
        let toe = add(ankle, [0.0, -0.01 * h, 0.08 * h]);
        capsule(
            &mut prims,
            ankle,
            toe,
            foot_r,
            foot_r * 0.9,
            clothing.shoes,
            shade,
        );
    }

    let shoulder_y = body.torso_profile[3].0 * h;
    for side in 0..2 {
        let lateral = if side == 0 { 1.0 } else { -1.0 };
        let k = body.side_scale[side];
        let (ur, fr) = (body.upper_arm.0 * k, body.forearm.0 * k);
        let shoulder = [
            lateral * (body.torso_profile[3].1 - 0.6 * ur),
            shoulder_y - ur,
            0.0,
        ];
        let splay = body.arm_splay;
        let s = angles.shoulder[side];
        let dir = |angle: f64| {
            [
                lateral * splay.sin(),
                -angle.cos() * splay.cos(),
                angle.sin(),
            ]
        };
        let elbow = add(shoulder, scale(dir(s), body.upper_arm.1));
        let wrist = add(elbow, scale(dir(s + angles.elbow[side]), body.forearm.1));
        let shade = side_shade(elbow);
        let sleeve = clothing.sleeve_color;
        match clothing.sleeves {
            Sleeves::None => {
                capsule(&mut prims, shoulder, elbow, ur, ur * 0.85, skin, shade);
                capsule(&mut prims, elbow, wrist, fr, fr * 0.8, skin, shade);
            }
            Sleeves::Short => {
                let mid = add(scale(shoulder, 0.45), scale(elbow, 0.55));
                capsule(&mut prims, mid, elbow, ur * 0.9, ur * 0.85, skin, shade);
                capsule(
                    &mut prims,
                    shoulder,
                    mid,
                    ur * 1.1,
                    ur * 1.05,
                    sleeve,
                    shade,
                );
                capsule(&mut prims, elbow, wrist, fr, fr * 0.8, skin, shade);
            }
            Sleeves::Long => {
                capsule(&mut prims, shoulder, elbow, ur * 1.1, ur, sleeve, shade);
                capsule(&mut prims, elbow, wrist, fr * 1.1, fr, sleeve, shade);
            }
        }
        let hand = add(wrist, scale(dir(s + angles.elbow[side]), 0.03 * h));
        capsule(&mut prims, wrist, hand, fr * 0.9, fr * 0.9, skin, shade);
    }

    // Torso: stacked horizontal ellipses, drawn as one group at the depth of
    // the body axis so that limbs sort against it consistently.
    let torso_depth = view.project(lift([0.0, 0.65 * h, 0.0])).2;
    let bottom = body.torso_profile[0].0 - 0.02;
    let top = body.torso_profile[3].0;
    let mut torso_prims = Vec::new();
    for i in 0..TORSO_SLICES {
        let t = i as f64 / (TORSO_SLICES - 1) as f64;
        let level = bottom + t * (top - bottom);
        let half = body.torso_half_width(level);
        let (rx, ry_flat) = view.ellipse_radii(half, half * body.depth_ratio);
        let spacing = (top - bottom) * h / (TORSO_SLICES - 1) as f64;
        let ry = ry_flat + 0.6 * spacing * view.scale * dot(view.up, [0.0, 1.0, 0.0]).abs();
        let (cx, cy, _) = view.project(lift([0.0, level * h, 0.0]));
        let colour = if level < 0.53 {
            clothing.legs
        } else {
            match clothing.style {
                TorsoStyle::Striped if (i / 2) % 2 == 1 => clothing.accent,
                TorsoStyle::Bib if level < 0.68 => clothing.accent,
                TorsoStyle::Cropped if level < 0.64 => skin,
                _ => clothing.torso,
            }
        };
        torso_prims.push(Prim {
            shape: Shape::Ellipse {
                c: (cx, cy),
                rx,
                ry,
            },
            colour,
            shade: 1.0,
            depth: torso_depth,
            torso: true,
        });
    }
    if clothing.legwear == Legwear::Skirt {
        for i in 0..6 {
            let t = i as f64 / 5.0;
            let level = 0.50 - t * 0.18;
            let half = body.torso_profile[0].1 * (1.05 + 0.45 * t);
            let (rx, ry) = view.ellipse_radii(half, half * 0.9);
            let (cx, cy, _) = view.project(lift([0.0, level * h, 0.0]));
            torso_prims.push(Prim {
                shape: Shape::Ellipse {
                    c: (cx, cy),
                    rx,
                    ry: ry + 0.02 * h * view.scale,
                },
                colour: clothing.legs,
                shade: 1.0,
                depth: torso_depth,
                torso: false,
            });
        }
    }
    if clothing.style == TorsoStyle::OpenFront {
        // Shirt visible between the jacket halves when the chest faces the
        // camera.
        let facing = dot(view.body_z, view.toward);
        if facing > 0.2 {
            let a = [0.0, 0.56 * h, body.torso_profile[1].1 * body.depth_ratio];
            let b = [0.0, 0.79 * h, body.torso_profile[2].1 * body.depth_ratio];
            let (ax, ay, _) = view.project(lift(a));
            let (bx, by, _) = view.project(lift(b));
            let r = 0.22 * body.torso_profile[2].1 * facing * view.scale;
            torso_prims.push(Prim {
                shape: Shape::Capsule {
                    a: (ax, ay),
                    b: (bx, by),
                    ra: r * 0.6,
                    rb: r,
                },
                colour: clothing.accent,
                shade: 1.0,
                depth: torso_depth,
                torso: false,
            });
        }
    }
    prims.extend(torso_prims);

    let neck_base = [0.0, shoulder_y - 0.01 * h, 0.0];
    let r = body.head_radius;
    let head_c = [0.0, h - r, 0.01 * h];
    let neck_top = add(head_c, [0.0, -0.8 * r, 0.0]);
    let (nax, nay, _) = view.project(lift(neck_base));
    let (nbx, nby, _) = view.project(lift(neck_top));
    let (hx, hy, hd) = view.project(lift(head_c));
    // Head parts sort among themselves by true depth but always in front of
    // the torso group.
    let head_depth = |d: f64| torso_depth.max(hd) + 1e-3 + (d - hd);
    prims.push(Prim {
        shape: Shape::Capsule {
            a: (nax, nay),
            b: (nbx, nby),
            ra: body.neck_radius * view.scale,
            rb: body.neck_radius * view.scale,
        },
        colour: skin,
        shade: 0.95,
        depth: head_depth(hd) - 0.5 * r,
        torso: false,
    });
    prims.push(Prim {
        shape: Shape::Ellipse {
            c: (hx, hy),
            rx: r * view.scale,
            ry: r * 1.08 * view.scale,
        },
        colour: skin,
        shade: 1.0,
        depth: head_depth(hd),
        torso: false,
    });
    let hair = subject.hair;
    if hair.style == HairStyle::Shaved {
        // Stubble: the hair colour shows faintly over the crown.
        let cap_c = add(head_c, [0.0, 0.3 * r, -0.3 * r]);
        let (cx, cy, cd) = view.project(lift(cap_c));
        let cap_r = 0.9 * r * view.scale;
        prims.push(Prim {
            shape: Shape::Ellipse {
                c: (cx, cy),
                rx: cap_r,
                ry: cap_r,
            },
            colour: std::array::from_fn(|k| ((hair.colour[k] as u16 + skin[k] as u16) / 2) as u8),
            shade: 1.0,
            depth: head_depth(cd),
            torso: false,
        });
    } else {
        // A cap of hair sits up and back on the skull: it frames the face
        // from the front and hides it from behind or above.
        let cap_c = add(head_c, [0.0, 0.22 * r, -0.3 * r]);
        let (cx, cy, cd) = view.project(lift(cap_c));
        let cap_r = 0.98 * r * view.scale;
        prims.push(Prim {
            shape: Shape::Ellipse {
                c: (cx, cy),
                rx: cap_r,
                ry: cap_r,
            },
            colour: hair.colour,
            shade: 1.0,
            depth: head_depth(cd),
            torso: false,
        });
        let tail = match hair.style {
            HairStyle::Long => Some((
                [0.0, h - 1.2 * r, -0.7 * r],
                [0.0, shoulder_y - 0.08 * h, -0.9 * r],
                0.95,
                0.8,
            )),
            HairStyle::Ponytail => Some((
                [0.0, h - 0.9 * r, -1.05 * r],
                [0.0, h - 2.6 * r, -1.2 * r],
                0.35,
                0.25,
            )),
            _ => None,
        };
        if let Some((a, b, ra, rb)) = tail {
            let (ax, ay, ad) = view.project(lift(a));
            let (bx, by, bd) = view.project(lift(b));
            // Behind the back from the front, over it from behind.
            let d = 0.5 * (ad + bd);
            let depth = if d < torso_depth { d } else { head_depth(d) };
            prims.push(Prim {
                shape: Shape::Capsule {
                    a: (ax, ay),
                    b: (bx, by),
                    ra: ra * r * view.scale,
                    rb: rb * r * view.scale,
                },
                colour: hair.colour,
                shade: 0.95,
                depth,
                torso: false,
            });
        }
    }
    prims
}

/// Centres the figure: the pelvis on the vertical midline, the bounding box
/// on the horizontal midline.
fn place(prims: &mut [Prim], width: usize, height: usize) {
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in prims.iter().filter(|p| p.torso) {
        let e = p.shape.extent();
        x0 = x0.min(e.0);
        x1 = x1.max(e.2);
    }
    for p in prims.iter() {
        let e = p.shape.extent();
        y0 = y0.min(e.1);
        y1 = y1.max(e.3);
    }
    let dx = width as f64 / 2.0 - 0.5 * (x0 + x1);
    let dy = height as f64 / 2.0 - 0.5 * (y0 + y1);
    for p in prims.iter_mut() {
        p.shape.translate(dx, dy);
    }
}

fn hash(a: i64, b: i64, salt: u64) -> u64 {
    let mut z = (a as u64)
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((b as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F))
        .wrapping_add(salt);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn unit(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// The shared outdoor scene: buildings, trees and a parked vehicle on the
/// skyline, paving and grass on the ground.
fn background(camera: &CameraSample, x: usize, y: usize, width: usize, height: usize) -> [f64; 3] {
    let h = height as f64;
    let heading = camera.azimuth + PI + ((x as f64 + 0.5) - width as f64 / 2.0) / h * FOV;
    let pitch = -camera.elevation * 0.9 + (0.5 - (y as f64 + 0.5) / h) * FOV;
    let heading = heading.rem_euclid(TAU);
    if pitch >= 0.0 {
        let sector = (heading / TAU * 24.0).floor() as i64;
        let hs = hash(sector, 0, 11);
        let building = unit(hs) < 0.6;
        if building {
            let top = 0.06 + 0.22 * unit(hash(sector, 1, 11));
            if pitch < top {
                let palette = [
                    [168.0, 150.0, 130.0],
                    [120.0, 118.0, 124.0],
                    [190.0, 170.0, 140.0],
                    [150.0, 92.0, 76.0],
                ];
                let base = palette[(hs % 4) as usize];
                let wx = (heading * 140.0).fract();
                let wy = (pitch * 140.0).fract();
                if (0.35..0.75).contains(&wx) && (0.3..0.7).contains(&wy) {
                    return [70.0, 86.0, 104.0];
                }
                return base;
            }
        } else {
            let centre = (sector as f64 + 0.5) / 24.0 * TAU;
            let dx = (heading - centre) * 5.0;
            let canopy = 0.16 * (1.0 - dx * dx).max(0.0).sqrt();
            if pitch < canopy {
                let leaf = unit(hash((heading * 200.0) as i64, (pitch * 200.0) as i64, 5));
                return [52.0 + 30.0 * leaf, 96.0 + 40.0 * leaf, 44.0];
            }
        }
        if (1.0..1.35).contains(&heading) && pitch < 0.035 {
            return [170.0, 36.0, 40.0];
        }
        let t = (pitch / 0.6).min(1.0);
        return [160.0 - 70.0 * t, 196.0 - 56.0 * t, 232.0 - 20.0 * t];
    }
    // Ground: intersect the pixel ray with the floor plane.
    let eye_height = CAMERA_AIM_HEIGHT + camera.distance * camera.elevation.sin();
    let reach = eye_height / (-pitch).tan().max(1e-3);
    let (cs, cc) = camera.azimuth.sin_cos();
    let eye = [
        camera.distance * camera.elevation.cos() * cs,
        camera.distance * camera.elevation.cos() * cc,
    ];
    let gx = eye[0] + reach * heading.sin();
    let gz = eye[1] + reach * heading.cos();
    let plaza = gx * gx + gz * gz < 64.0 || gz.abs() < 2.5;
    if plaza {
        let (tx, tz) = (gx.floor() as i64, gz.floor() as i64);
        if gx - gx.floor() < 0.05 || gz - gz.floor() < 0.05 {
            return [110.0, 108.0, 104.0];
        }
        let v = 140.0 + 24.0 * unit(hash(tx, tz, 3));
        [v, v, v - 4.0]
    } else {
        let g = unit(hash(
            (gx * 2.0).floor() as i64,
            (gz * 2.0).floor() as i64,
            7,
        ));
        [70.0 + 24.0 * g, 118.0 + 30.0 * g, 54.0 + 10.0 * g]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthset::{clothing_catalog, Hair, SkinTone, SomatotypeMix};

    fn subject(m: SomatotypeMix) -> SubjectSpec {
        SubjectSpec {
            subject_id: 0,
            gender: Gender::Male,
            somatotype: m,
            height_scale: 1.0,
            width_scale: 1.0,
            limb_asymmetry: 0.0,
            skin_tone: SkinTone::Beige,
            hair: Hair {
                style: HairStyle::Short,
                colour: [40, 30, 20],
            },
        }
    }

    fn front(distance: f64) -> CameraSample {
        CameraSample {
            azimuth: 0.0,
            elevation: 0.0,
            distance,
        }
    }

    #[test]
    fn same_inputs_same_bytes() {
        let s = subject(SomatotypeMix::MESOMORPH);
        let c = &clothing_catalog()[3];
        let p = PoseSpec::neutral(0);
        let cam = CameraSample {
            azimuth: 1.0,
            elevation: 0.3,
            distance: 7.5,
        };
        let a = render(&s, c, &p, &cam, 64, 128, 42).unwrap();
        let b = render(&s, c, &p, &cam, 64, 128, 42).unwrap();
        assert_eq!(a, b);
        let other = render(&s, c, &p, &cam, 64, 128, 43).unwrap();
        assert_ne!(a.0, other.0);
        assert_eq!(a.1, other.1);
    }

    #[test]
    fn endomorph_torso_is_wider_relative_to_height() {
        let c = &clothing_catalog()[0];
        let p = PoseSpec::neutral(0);
        let ratio = |m| {
            let (_, f) = render(&subject(m), c, &p, &front(8.0), 64, 128, 1).unwrap();
            f.torso_width() as f64 / f.pixel_height() as f64
        };
        let endo = ratio(SomatotypeMix::ENDOMORPH);
        let ecto = ratio(SomatotypeMix::ECTOMORPH);
        assert!(endo > ecto, "endo {endo} vs ecto {ecto}");
    }

    #[test]
    fn apparent_height_scales_with_inverse_distance() {
        let s = subject(SomatotypeMix::MESOMORPH);
        let c = &clothing_catalog()[0];
        let p = PoseSpec::neutral(0);
        let near = render(&s, c, &p, &front(6.0), 64, 128, 1).unwrap().1;
        let far = render(&s, c, &p, &front(10.0), 64, 128, 1).unwrap().1;
        let expected = 0.6 * near.pixel_height() as f64;
        let got = far.pixel_height() as f64;
        assert!((got - expected).abs() <= 2.0, "{got} vs {expected}");
    }

    #[test]
    fn side_view_is_narrower_than_front_view() {
        let s = subject(SomatotypeMix::ECTOMORPH);
        let c = &clothing_catalog()[0];
        let p = PoseSpec::neutral(0);
        let front_w = render(&s, c, &p, &front(8.0), 64, 128, 1)
            .unwrap()
            .1
            .torso_width();
        let side = CameraSample {
            azimuth: PI / 2.0,
            ..front(8.0)
        };
        let side_w = render(&s, c, &p, &side, 64, 128, 1)
            .unwrap()
            .1
            .torso_width();
        assert!(side_w < front_w, "side {side_w} front {front_w}");
    }

    #[test]
    fn degenerate_bodies_are_rejected() {
        let mut s = subject(SomatotypeMix::MESOMORPH);
        s.width_scale = 0.0;
        let c = &clothing_catalog()[0];
        let p = PoseSpec::neutral(0);
        assert!(matches!(
            render(&s, c, &p, &front(8.0), 64, 128, 1),
            Err(Error::Config(_))
        ));
        let s = subject(SomatotypeMix::MESOMORPH);
        assert!(render(&s, c, &p, &front(8.0), 0, 128, 1).is_err());
        assert!(matches!(
            render(&s, c, &p, &front(8.0), 4, 1, 1),
            Err(Error::Config(_))
        ));
    }
}
