//! Synthetic stadium: a camera base overlooking a standard pitch, and rays
//! sampled from views of random PTZ states.

use nalgebra::{Matrix3, Rotation3, Vector2, Vector3};
use ptzcal_core::camera::{level_rotation, CameraBase, ImageSize, PtzCamera, PtzParams};
use ptzcal_core::forest::Descriptor;
use ptzcal_core::ray::{pixel_to_ray_exact, project_ray_exact};
use ptzcal_core::{FieldModel, Ray};
use rand::Rng;

use crate::appearance::canonical_descriptor;
use crate::config::ExperimentConfig;

/// Camera center of the default stadium: behind a corner, 15 m up.
pub const DEFAULT_CENTER: [f64; 3] = [115.0, -30.0, 15.0];
pub const DEFAULT_AZIMUTH: f64 = 180.0;
pub const DEFAULT_IMAGE: (u32, u32) = (1280, 720);

/// Mounting with a slight roll and pitch, so the base is not level.
pub fn default_base() -> CameraBase {
    let mount = Rotation3::from_euler_angles(0.3f64.to_radians(), -0.2f64.to_radians(), 0.0).into_inner();
    base_with_rotation(mount * level_rotation(DEFAULT_AZIMUTH))
}

fn base_with_rotation(s: Matrix3<f64>) -> CameraBase {
    CameraBase::centered(
        Vector3::from(DEFAULT_CENTER),
        s,
        ImageSize::new(DEFAULT_IMAGE.0, DEFAULT_IMAGE.1),
    )
    .expect("default base is valid")
}

/// A world ray as seen from the camera center, with its ground hit when it
/// lands on the field plane inside the pitch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneRay {
    pub ray: Ray,
    /// Field point of on-field rays; off-field rays are treated as points
    /// at infinity.
    pub ground: Option<Vector2<f64>>,
}

impl SceneRay {
    pub fn is_on_field(&self) -> bool {
        self.ground.is_some()
    }

    /// World-frame unit direction.
    pub fn world_direction(&self, base: &CameraBase) -> Vector3<f64> {
        base.rotation().transpose() * self.ray.direction()
    }

    /// The same feature labelled in another base: on-field rays through
    /// their ground point, off-field rays as fixed world directions.
    pub fn relabel(&self, base: &CameraBase, other: &CameraBase) -> Ray {
        let world = match self.ground {
            Some(g) => Vector3::new(g.x, g.y, 0.0) - other.center(),
            None => self.world_direction(base),
        };
        Ray::from_direction(&(other.rotation() * world))
    }
}

/// Classifies the base-frame ray against the field.
pub fn scene_ray(base: &CameraBase, field: &FieldModel, ray: Ray) -> SceneRay {
    let w = base.rotation().transpose() * ray.direction();
    let c = base.center();
    let ground = (w.z < -1e-12)
        .then(|| {
            let t = -c.z / w.z;
            Vector2::new(c.x + t * w.x, c.y + t * w.y)
        })
        .filter(|g| field.contains(g, 0.0));
    SceneRay { ray, ground }
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub base: CameraBase,
    pub field: FieldModel,
    /// Fixed world rays with their canonical descriptors.
    pub ray_bank: Vec<(SceneRay, Descriptor)>,
    pub fraction_off_field: f64,
}

impl SyntheticScene {
    pub fn observed_off_field_fraction(&self) -> f64 {
        let off = self.ray_bank.iter().filter(|(r, _)| !r.is_on_field()).count();
        off as f64 / self.ray_bank.len().max(1) as f64
    }
}

/// Scene with `config.rays_per_view` bank rays drawn from the view at the
/// center of the configured pan/tilt ranges and the smallest focal length.
pub fn generate_scene(config: &ExperimentConfig) -> SyntheticScene {
    let base = default_base();
    let field = FieldModel::default();
    let ptz = PtzParams::new(
        0.5 * (config.pan_range[0] + config.pan_range[1]),
        0.5 * (config.tilt_range[0] + config.tilt_range[1]),
        config.focal_range[0],
    )
    .expect("validated ranges");
    let mut rng = ptzcal_core::rng::stream(config.seed, &[0x5CE4E]);
    let rays = sample_view(&base, &field, &ptz, config.rays_per_view, config.fraction_off_field, &mut rng);
    let ray_bank = rays
        .into_iter()
        .map(|v| {
            let d = canonical_descriptor(&v.ray, config.forest.descriptor_dim);
            (v.scene, d)
        })
        .collect();
    SyntheticScene {
        base,
        field,
        ray_bank,
        fraction_off_field: config.fraction_off_field,
    }
}

/// A sampled ray together with its exact pixel in the generating view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewRay {
    pub scene: SceneRay,
    pub ray: Ray,
    pub pixel: Vector2<f64>,
}

const MAX_ATTEMPTS_PER_RAY: usize = 200;

/// Samples `count` rays visible in the view, about `fraction_off_field` of
/// them off the pitch, by rejection over uniform image pixels. When one
/// class is not visible the rest of the quota goes to the other.
pub fn sample_view<R: Rng + ?Sized>(
    base: &CameraBase,
    field: &FieldModel,
    ptz: &PtzParams,
    count: usize,
    fraction_off_field: f64,
    rng: &mut R,
) -> Vec<ViewRay> {
    let size = base.image_size();
    let pp = *base.principal_point();
    let want_off = (count as f64 * fraction_off_field).round() as usize;
    let want_on = count - want_off.min(count);
    let mut on = Vec::with_capacity(want_on);
    let mut off = Vec::with_capacity(want_off);
    let budget = MAX_ATTEMPTS_PER_RAY * count.max(1);
    let mut attempts = 0;
    while (on.len() < want_on || off.len() < want_off) && attempts < budget {
        attempts += 1;
        let pixel = Vector2::new(
            rng.random_range(0.0..size.width as f64),
            rng.random_range(0.0..size.height as f64),
        );
        let ray = pixel_to_ray_exact(ptz, &pp, &pixel);
        let scene = scene_ray(base, field, ray);
        let v = ViewRay { scene, ray, pixel };
        if scene.is_on_field() {
            if on.len() < want_on {
                on.push(v);
            }
        } else if off.len() < want_off {
            off.push(v);
        }
    }
    let mut out = on;
    out.extend(off);
    while out.len() < count {
        let pixel = Vector2::new(
            rng.random_range(0.0..size.width as f64),
            rng.random_range(0.0..size.height as f64),
        );
        let ray = pixel_to_ray_exact(ptz, &pp, &pixel);
        out.push(ViewRay {
            scene: scene_ray(base, field, ray),
            ray,
            pixel,
        });
    }
    out
}

/// Uniform random PTZ state within the configured ranges.
pub fn random_ptz<R: Rng + ?Sized>(config: &ExperimentConfig, focal_range: [f64; 2], rng: &mut R) -> PtzParams {
    PtzParams::new(
        rng.random_range(config.pan_range[0]..config.pan_range[1]),
        rng.random_range(config.tilt_range[0]..config.tilt_range[1]),
        rng.random_range(focal_range[0]..focal_range[1]),
    )
    .expect("validated ranges")
}

/// Pixel of a base-frame ray in a view, if it lands inside the image.
pub fn visible_pixel(base: &CameraBase, ptz: &PtzParams, ray: &Ray) -> Option<Vector2<f64>> {
    project_ray_exact(ptz, base.principal_point(), ray).filter(|p| base.image_size().contains(p))
}

pub fn camera(base: &CameraBase, ptz: PtzParams) -> PtzCamera {
    PtzCamera::new(base.clone(), ptz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ptzcal_core::rng;

    #[test]
    fn center_of_ranges_looks_at_the_pitch() {
        let base = default_base();
        let cam = camera(&base, PtzParams::new(45.0, -9.5, 1500.0).unwrap());
        let g = cam.pixel_to_ground(base.principal_point()).unwrap();
        assert!(FieldModel::default().contains(&g, 0.0), "{g:?}");
    }

    #[test]
    fn scene_is_seed_deterministic() {
        let cfg = ExperimentConfig::default();
        let a = generate_scene(&cfg);
        let b = generate_scene(&cfg);
        assert_eq!(a.ray_bank, b.ray_bank);
        let c = generate_scene(&ExperimentConfig { seed: 1, ..cfg });
        assert_ne!(a.ray_bank, c.ray_bank);
    }

    #[test]
    fn off_field_split_counted_against_field_polygon() {
        let cfg = ExperimentConfig::default();
        let scene = generate_scene(&cfg);
        assert_eq!(scene.ray_bank.len(), 200);
        // independent count: intersect each world direction with z = 0 and
        // test the pitch rectangle directly
        let c = scene.base.center();
        let off = scene
            .ray_bank
            .iter()
            .filter(|(r, _)| {
                let w = r.world_direction(&scene.base);
                if w.z >= 0.0 {
                    return true;
                }
                let t = -c.z / w.z;
                let (x, y) = (c.x + t * w.x, c.y + t * w.y);
                !((0.0..=105.0).contains(&x) && (0.0..=68.0).contains(&y))
            })
            .count();
        let frac = off as f64 / 200.0;
        assert!((0.85..=0.95).contains(&frac), "{frac}");
        assert_eq!(frac, scene.observed_off_field_fraction());
    }

    #[test]
    fn on_field_rays_back_project_inside_pitch() {
        let cfg = ExperimentConfig::default();
        let base = default_base();
        let field = FieldModel::default();
        let mut g = rng::stream(5, &[]);
        for _ in 0..20 {
            let ptz = random_ptz(&cfg, cfg.focal_range, &mut g);
            let cam = camera(&base, ptz);
            for v in sample_view(&base, &field, &ptz, 200, 0.9, &mut g) {
                if let Some(p) = v.scene.ground {
                    let hit = cam.pixel_to_ground(&v.pixel).unwrap();
                    assert!((hit - p).norm() < 1e-6);
                    assert!((0.0..=105.0).contains(&p.x) && (0.0..=68.0).contains(&p.y));
                }
                let back = project_ray_exact(&ptz, base.principal_point(), &v.ray).unwrap();
                assert!((back - v.pixel).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn relabel_in_same_base_is_identity() {
        let cfg = ExperimentConfig::default();
        let scene = generate_scene(&cfg);
        for (r, _) in &scene.ray_bank {
            let q = r.relabel(&scene.base, &scene.base);
            assert!(q.angle_to(&r.ray) < 1e-9);
        }
    }

    #[test]
    fn relabel_of_ground_point_follows_center_shift() {
        let base = default_base();
        let moved = base.with_center(base.center() + Vector3::new(0.0, 0.0, 5.0)).unwrap();
        let field = FieldModel::default();
        let target = Vector3::new(52.5, 34.0, 0.0);
        let ray = Ray::from_direction(&(base.rotation() * (target - base.center())));
        let sr = scene_ray(&base, &field, ray);
        assert!(sr.is_on_field());
        let expected = Ray::from_direction(&(moved.rotation() * (target - moved.center())));
        assert!(sr.relabel(&base, &moved).angle_to(&expected) < 1e-9);
    }
}
