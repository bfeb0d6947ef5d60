//! Analytic scene renderer. Ray-casts textured primitives so every pixel has
//! exact ground-truth depth; shading is Lambertian with a fixed light, which
//! keeps colors view-consistent up to occlusion.

use super::SceneIoError;
use crate::camera::{Camera, Extrinsics, Intrinsics};
use crate::hypothesis::DepthMap;
use crate::loss::ValidMask;
use crate::numerics::ImageF;
use nalgebra::{Matrix3, Vector3};

const AMBIENT: f32 = 0.35;
const DIFFUSE: f32 = 0.65;

/// Procedural world-space textures. Both are pure functions of position, so
/// two cameras observing the same surface point agree on its albedo.
#[derive(Debug, Clone, PartialEq)]
pub enum Texture {
    /// 3D checkerboard with the given cell size.
    Checker { scale: f64, color_a: [f32; 3], color_b: [f32; 3] },
    /// Hash-based value noise around a base color. `seed` keeps runs
    /// reproducible; `amplitude` near zero gives the low-texture preset.
    ValueNoise { scale: f64, base: [f32; 3], amplitude: f32, seed: u64 },
}

impl Texture {
    fn albedo(&self, p: Vector3<f64>) -> [f32; 3] {
        match self {
            Texture::Checker { scale, color_a, color_b } => {
                let parity = (p.x / scale).floor() as i64
                    + (p.y / scale).floor() as i64
                    + (p.z / scale).floor() as i64;
                if parity.rem_euclid(2) == 0 {
                    *color_a
                } else {
                    *color_b
                }
            }
            Texture::ValueNoise { scale, base, amplitude, seed } => {
                // Three octaves of trilinearly interpolated lattice noise;
                // the finer octaves keep local gradients from vanishing
                // anywhere, which matters for photometric matching
                let n = value_noise(p / *scale, *seed)
                    + 0.5 * value_noise(p * (2.0 / *scale), seed.wrapping_add(1))
                    + 0.25 * value_noise(p * (4.0 / *scale), seed.wrapping_add(2));
                let n = (n / 1.75) as f32; // back to [0, 1)
                let delta = amplitude * (n - 0.5);
                let mut c = *base;
                for ch in &mut c {
                    *ch = (*ch + delta).clamp(0.0, 1.0);
                }
                c
            }
        }
    }
}

/// splitmix64-style integer mix; the renderer only needs a stateless hash.
fn hash3(ix: i64, iy: i64, iz: i64, seed: u64) -> f64 {
    let mut h = seed
        ^ (ix as u64).wrapping_mul(0x9e3779b97f4a7c15)
        ^ (iy as u64).wrapping_mul(0xbf58476d1ce4e5b9)
        ^ (iz as u64).wrapping_mul(0x94d049bb133111eb);
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58476d1ce4e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d049bb133111eb);
    h ^= h >> 31;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn value_noise(p: Vector3<f64>, seed: u64) -> f64 {
    let (ix, iy, iz) = (p.x.floor(), p.y.floor(), p.z.floor());
    let (fx, fy, fz) = (p.x - ix, p.y - iy, p.z - iz);
    let (ix, iy, iz) = (ix as i64, iy as i64, iz as i64);
    let mut v = 0.0;
    for dz in 0..2i64 {
        for dy in 0..2i64 {
            for dx in 0..2i64 {
                let w = (if dx == 0 { 1.0 - fx } else { fx })
                    * (if dy == 0 { 1.0 - fy } else { fy })
                    * (if dz == 0 { 1.0 - fz } else { fz });
                v += w * hash3(ix + dx, iy + dy, iz + dz, seed);
            }
        }
    }
    v
}

#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    /// Infinite plane through `point` with unit-ish `normal`.
    Plane { point: Vector3<f64>, normal: Vector3<f64>, texture: Texture },
    Sphere { center: Vector3<f64>, radius: f64, texture: Texture },
    /// Axis-aligned box spanning `min`..`max`.
    Box { min: Vector3<f64>, max: Vector3<f64>, texture: Texture },
}

struct Hit {
    t: f64,
    point: Vector3<f64>,
    normal: Vector3<f64>,
}

impl Primitive {
    fn texture(&self) -> &Texture {
        match self {
            Primitive::Plane { texture, .. }
            | Primitive::Sphere { texture, .. }
            | Primitive::Box { texture, .. } => texture,
        }
    }

    fn contains(&self, p: Vector3<f64>) -> bool {
        match self {
            Primitive::Plane { .. } => false,
            Primitive::Sphere { center, radius, .. } => (p - center).norm() < *radius,
            Primitive::Box { min, max, .. } => {
                (0..3).all(|i| min[i] < p[i] && p[i] < max[i])
            }
        }
    }

    /// Nearest intersection with ray o + t·d for t > 0.
    fn intersect(&self, o: Vector3<f64>, d: Vector3<f64>) -> Option<Hit> {
        const T_EPS: f64 = 1e-9;
        match self {
            Primitive::Plane { point, normal, .. } => {
                let n = normal.normalize();
                let denom = n.dot(&d);
                if denom.abs() < 1e-12 {
                    return None;
                }
                let t = n.dot(&(point - o)) / denom;
                (t > T_EPS).then(|| Hit { t, point: o + t * d, normal: n })
            }
            Primitive::Sphere { center, radius, .. } => {
                let oc = o - center;
                let a = d.dot(&d);
                let b = 2.0 * oc.dot(&d);
                let c = oc.dot(&oc) - radius * radius;
                let disc = b * b - 4.0 * a * c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let t = [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)]
                    .into_iter()
                    .find(|&t| t > T_EPS)?;
                let point = o + t * d;
                Some(Hit { t, point, normal: (point - center).normalize() })
            }
            Primitive::Box { min, max, .. } => {
                // Slab test, tracking which slab bounds the entry point.
                let mut t_near = f64::NEG_INFINITY;
                let mut t_far = f64::INFINITY;
                let mut axis = 0usize;
                let mut sign = -1.0f64;
                for i in 0..3 {
                    if d[i].abs() < 1e-15 {
                        if o[i] < min[i] || o[i] > max[i] {
                            return None;
                        }
                        continue;
                    }
                    let mut t0 = (min[i] - o[i]) / d[i];
                    let mut t1 = (max[i] - o[i]) / d[i];
                    let mut s = -1.0;
                    if t0 > t1 {
                        std::mem::swap(&mut t0, &mut t1);
                        s = 1.0;
                    }
                    if t0 > t_near {
                        t_near = t0;
                        axis = i;
                        sign = s;
                    }
                    t_far = t_far.min(t1);
                }
                if t_near > t_far || t_far < T_EPS {
                    return None;
                }
                let t = if t_near > T_EPS { t_near } else { return None };
                let mut normal = Vector3::zeros();
                normal[axis] = sign;
                Some(Hit { t, point: o + t * d, normal })
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub primitives: Vec<Primitive>,
    /// First camera is the reference view.
    pub cameras: Vec<Camera>,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct RenderedView {
    pub image: ImageF,
    pub gt_depth: DepthMap,
    pub camera: Camera,
    /// True where the primary ray hit geometry.
    pub hit: ValidMask,
}

fn look_at(pos: Vector3<f64>, target: Vector3<f64>) -> Extrinsics {
    // Camera frame: x right, y down, z forward; world y also points down.
    let z = (target - pos).normalize();
    let x = Vector3::new(0.0, 1.0, 0.0).cross(&z).normalize();
    let y = z.cross(&x);
    let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
    let translation = -rotation * pos;
    Extrinsics::new(rotation, translation).expect("look_at produces a valid rotation")
}

impl SceneSpec {
    fn desk_rig(height: usize, width: usize) -> Vec<Camera> {
        let intr = Intrinsics::new(
            1100.0,
            1100.0,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
        )
        .unwrap();
        let target = Vector3::new(0.0, 0.0, 600.0);
        // generous baselines and a long focal length: depth resolution per
        // pixel of disparity is d^2/(f b), so small rigs cannot discriminate
        // fine depth steps
        let positions = [
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(200.0, 0.0, 0.0),
            Vector3::new(-200.0, 20.0, 0.0),
            Vector3::new(0.0, -180.0, 10.0),
        ];
        positions
            .iter()
            .map(|&p| Camera::new(intr, look_at(p, target), 470.0, 726.0).unwrap())
            .collect()
    }

    /// The canonical verification scene: a slanted checkered backdrop plane
    /// with a noise-textured sphere in front, viewed by a four-camera rig.
    pub fn canonical(height: usize, width: usize, seed: u64) -> Self {
        let primitives = vec![
            Primitive::Plane {
                point: Vector3::new(0.0, 0.0, 660.0),
                normal: Vector3::new(0.0, 0.0, -1.0),
                texture: Texture::ValueNoise {
                    scale: 22.0,
                    base: [0.55, 0.5, 0.45],
                    amplitude: 0.8,
                    seed,
                },
            },
            Primitive::Sphere {
                center: Vector3::new(-45.0, 28.0, 580.0),
                radius: 40.0,
                texture: Texture::ValueNoise {
                    scale: 11.0,
                    base: [0.45, 0.55, 0.6],
                    amplitude: 0.8,
                    seed: seed.wrapping_add(7),
                },
            },
        ];
        Self { primitives, cameras: Self::desk_rig(height, width), height, width, seed }
    }

    /// A box floating in front of a backdrop plane: sharp depth steps at the
    /// box silhouette, for probing behavior around depth discontinuities.
    pub fn step(height: usize, width: usize, seed: u64) -> Self {
        let primitives = vec![
            Primitive::Plane {
                point: Vector3::new(0.0, 0.0, 660.0),
                normal: Vector3::new(0.0, 0.0, -1.0),
                texture: Texture::ValueNoise {
                    scale: 20.0,
                    base: [0.5, 0.5, 0.5],
                    amplitude: 0.8,
                    seed,
                },
            },
            Primitive::Box {
                min: Vector3::new(-40.0, -30.0, 560.0),
                max: Vector3::new(25.0, 32.0, 630.0),
                texture: Texture::ValueNoise {
                    scale: 9.0,
                    base: [0.6, 0.5, 0.4],
                    amplitude: 0.8,
                    seed: seed.wrapping_add(3),
                },
            },
        ];
        Self { primitives, cameras: Self::desk_rig(height, width), height, width, seed }
    }

    /// Low-texture variant of the canonical scene (near-uniform albedo) for
    /// exercising matching failure modes.
    pub fn low_texture(height: usize, width: usize, seed: u64) -> Self {
        let mut spec = Self::canonical(height, width, seed);
        for prim in &mut spec.primitives {
            let tex = match prim {
                Primitive::Plane { texture, .. }
                | Primitive::Sphere { texture, .. }
                | Primitive::Box { texture, .. } => texture,
            };
            if let Texture::ValueNoise { amplitude, .. } = tex {
                *amplitude = 0.02;
            }
        }
        spec
    }
}

fn shade(texture: &Texture, hit: &Hit, view_dir: Vector3<f64>) -> [f32; 3] {
    let light = Vector3::new(0.4, -0.45, -0.8).normalize();
    // Flip the normal toward the viewer so backdrop planes shade correctly
    // regardless of which way their normal was specified.
    let n = if hit.normal.dot(&view_dir) > 0.0 { -hit.normal } else { hit.normal };
    let lambert = n.dot(&(-light)).max(0.0) as f32;
    let albedo = texture.albedo(hit.point);
    let mut c = albedo;
    for ch in &mut c {
        *ch = (*ch * (AMBIENT + DIFFUSE * lambert)).clamp(0.0, 1.0);
    }
    c
}

fn cast(
    primitives: &[Primitive],
    o: Vector3<f64>,
    d: Vector3<f64>,
) -> Option<(usize, Hit)> {
    let mut best: Option<(usize, Hit)> = None;
    for (i, prim) in primitives.iter().enumerate() {
        if let Some(hit) = prim.intersect(o, d) {
            if best.as_ref().map_or(true, |(_, b)| hit.t < b.t) {
                best = Some((i, hit));
            }
        }
    }
    best
}

pub fn render_scene(spec: &SceneSpec) -> Result<Vec<RenderedView>, SceneIoError> {
    if spec.primitives.is_empty() {
        return Err(SceneIoError::Scene("scene has no primitives".into()));
    }
    if spec.cameras.len() < 2 {
        return Err(SceneIoError::Scene("scene needs a reference and at least one source camera".into()));
    }
    for (ci, cam) in spec.cameras.iter().enumerate() {
        let center = cam.extrinsics.center();
        if spec.primitives.iter().any(|p| p.contains(center)) {
            return Err(SceneIoError::Scene(format!("camera {ci} is inside a primitive")));
        }
    }

    let (h, w) = (spec.height, spec.width);
    let mut views = Vec::with_capacity(spec.cameras.len());
    for cam in &spec.cameras {
        let origin = cam.extrinsics.center();
        let rot_t = cam.extrinsics.rotation.transpose();
        let mut image = ImageF::new(h, w, 3);
        let mut depth = vec![0.0f32; h * w];
        let mut valid = vec![false; h * w];
        for y in 0..h {
            for x in 0..w {
                // Camera-frame ray has unit z, so the world hit parameter t
                // is exactly the camera-z depth.
                let dir = rot_t * cam.intrinsics.ray(x as f64, y as f64);
                if let Some((pi, hit)) = cast(&spec.primitives, origin, dir) {
                    let color = shade(spec.primitives[pi].texture(), &hit, dir);
                    for (c, v) in color.iter().enumerate() {
                        image.set(y, x, c, *v);
                    }
                    depth[y * w + x] = hit.t as f32;
                    valid[y * w + x] = true;
                }
            }
        }
        views.push(RenderedView {
            image,
            gt_depth: DepthMap::from_depth(h, w, depth),
            camera: cam.clone(),
            hit: ValidMask::new(h, w, valid),
        });
    }
    Ok(views)
}

/// Pixels of `reference` whose ground-truth surface point is also seen by
/// `source`: the reprojection lands in bounds and the source ground-truth
/// depth agrees within `rel_tol` (occlusion test).
pub fn visibility_mask(
    reference: &RenderedView,
    source: &RenderedView,
    rel_tol: f64,
) -> ValidMask {
    let (h, w) = (reference.gt_depth.height, reference.gt_depth.width);
    let mut valid = vec![false; h * w];
    for y in 0..h {
        for x in 0..w {
            if !reference.hit.valid[y * w + x] {
                continue;
            }
            let d = reference.gt_depth.at(y, x) as f64;
            let Ok(proj) =
                crate::camera::reproject(&reference.camera, &source.camera, x as f64, y as f64, d)
            else {
                continue;
            };
            let (sx, sy) = (proj.x.round(), proj.y.round());
            if sx < 0.0 || sy < 0.0 || sx as usize >= source.gt_depth.width || sy as usize >= source.gt_depth.height {
                continue;
            }
            let (sxi, syi) = (sx as usize, sy as usize);
            if !source.hit.valid[syi * source.gt_depth.width + sxi] {
                continue;
            }
            let src_d = source.gt_depth.at(syi, sxi) as f64;
            valid[y * w + x] = (proj.depth - src_d).abs() <= rel_tol * proj.depth;
        }
    }
    ValidMask::new(h, w, valid)
}
