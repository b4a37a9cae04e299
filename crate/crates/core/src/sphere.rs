//! Spherical coordinates, gnomonic (tangent-plane) projection, the
//! equirectangular pixel mapping, and tangent-patch layouts.
//!
//! Conventions used throughout the crate:
//!
//! - longitude `theta` in `[-pi, pi)`, latitude `phi` in `[-pi/2, pi/2]`;
//! - ERP images are north-up: `u_e = (theta / 2pi + 0.5) w`,
//!   `v_e = (0.5 - phi / pi) h`, so pixel `(i, j)` has its center at
//!   `(j + 0.5, i + 0.5)`;
//! - unit vectors are `x = cos(phi) cos(theta)`, `y = cos(phi) sin(theta)`,
//!   `z = sin(phi)`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Points with `cos(c)` at or below this are treated as behind the tangent plane.
pub const HEMISPHERE_EPS: f64 = 1e-9;

/// A direction on the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereDir {
    /// Longitude in radians.
    pub theta: f64,
    /// Latitude in radians.
    pub phi: f64,
}

impl SphereDir {
    /// Builds a normalized direction from arbitrary angles.
    pub fn new(theta: f64, phi: f64) -> Self {
        Self { theta, phi }.normalize()
    }

    pub fn from_degrees(theta_deg: f64, phi_deg: f64) -> Self {
        Self::new(theta_deg.to_radians(), phi_deg.to_radians())
    }

    /// Wraps latitude through the poles (shifting longitude by pi when it
    /// crosses one), then wraps longitude into `[-pi, pi)`.
    pub fn normalize(self) -> Self {
        let mut theta = self.theta;
        // latitude into [-pi, pi) first, then reflect over the poles
        let mut phi = wrap_angle(self.phi);
        if phi > FRAC_PI_2 {
            phi = PI - phi;
            theta += PI;
        } else if phi < -FRAC_PI_2 {
            phi = -PI - phi;
            theta += PI;
        }
        Self {
            theta: wrap_angle(theta),
            phi: phi.clamp(-FRAC_PI_2, FRAC_PI_2),
        }
    }

    pub fn to_unit_vector(self) -> [f64; 3] {
        let (sp, cp) = self.phi.sin_cos();
        let (st, ct) = self.theta.sin_cos();
        [cp * ct, cp * st, sp]
    }

    pub fn from_vector(v: [f64; 3]) -> Self {
        let theta = v[1].atan2(v[0]);
        let phi = v[2].atan2(v[0].hypot(v[1]));
        Self::new(theta, phi)
    }

    /// Great-circle distance in radians.
    pub fn angular_distance(self, other: SphereDir) -> f64 {
        let a = self.to_unit_vector();
        let b = other.to_unit_vector();
        let cross = [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ];
        let sin = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
        let cos = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
        sin.atan2(cos)
    }
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w >= PI {
        -PI
    } else {
        w
    }
}

/// Coordinates on a tangent plane of the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentCoord {
    pub u: f64,
    pub v: f64,
}

impl TangentCoord {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }
}

/// Forward gnomonic projection of `p` onto the plane tangent at `center`.
pub fn gnomonic_forward(p: SphereDir, center: SphereDir) -> Result<TangentCoord> {
    Gnomonic::new(center).forward(p).map(|(t, _)| t)
}

/// Inverse gnomonic projection. Defined for every finite tangent coordinate.
pub fn gnomonic_inverse(t: TangentCoord, center: SphereDir) -> SphereDir {
    Gnomonic::new(center).inverse(t)
}

/// Gnomonic projection about a fixed center, with the center's trig cached.
#[derive(Debug, Clone, Copy)]
pub struct Gnomonic {
    center: SphereDir,
    sin_phi_c: f64,
    cos_phi_c: f64,
}

impl Gnomonic {
    pub fn new(center: SphereDir) -> Self {
        let (sin_phi_c, cos_phi_c) = center.phi.sin_cos();
        Self {
            center,
            sin_phi_c,
            cos_phi_c,
        }
    }

    pub fn center(&self) -> SphereDir {
        self.center
    }

    /// Returns the tangent coordinate together with `cos(c)`, the cosine of
    /// the angular distance between `p` and the center.
    pub fn forward(&self, p: SphereDir) -> Result<(TangentCoord, f64)> {
        let (sin_phi, cos_phi) = p.phi.sin_cos();
        let (sin_dt, cos_dt) = (p.theta - self.center.theta).sin_cos();
        let cos_c = self.sin_phi_c * sin_phi + self.cos_phi_c * cos_phi * cos_dt;
        if cos_c <= HEMISPHERE_EPS {
            return Err(Error::HemisphereViolation { cos_c });
        }
        let u = cos_phi * sin_dt / cos_c;
        let v = (self.cos_phi_c * sin_phi - self.sin_phi_c * cos_phi * cos_dt) / cos_c;
        Ok((TangentCoord { u, v }, cos_c))
    }

    pub fn inverse(&self, t: TangentCoord) -> SphereDir {
        let gamma = t.u.hypot(t.v);
        if gamma == 0.0 {
            return self.center.normalize();
        }
        let sigma = gamma.atan();
        let (sin_s, cos_s) = sigma.sin_cos();
        let sin_phi = cos_s * self.sin_phi_c + t.v * sin_s * self.cos_phi_c / gamma;
        let phi = sin_phi.clamp(-1.0, 1.0).asin();
        // atan2 keeps the correct quadrant when the tangent plane wraps past a pole
        let dtheta = (t.u * sin_s)
            .atan2(gamma * self.cos_phi_c * cos_s - t.v * self.sin_phi_c * sin_s);
        SphereDir::new(self.center.theta + dtheta, phi)
    }
}

/// Pixel dimensions of an equirectangular image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErpGeometry {
    pub width: usize,
    pub height: usize,
}

impl ErpGeometry {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width < 2 || width != 2 * height {
            return Err(Error::InvalidGeometry(format!(
                "equirectangular grid must be 2:1 with width >= 2, got {width}x{height}"
            )));
        }
        Ok(Self { width, height })
    }

    pub fn from_height(height: usize) -> Result<Self> {
        Self::new(2 * height, height)
    }

    /// Direction through the center of pixel `(row, col)`.
    pub fn pixel_dir(&self, row: usize, col: usize) -> SphereDir {
        let theta = ((col as f64 + 0.5) / self.width as f64 - 0.5) * TAU;
        let phi = (0.5 - (row as f64 + 0.5) / self.height as f64) * PI;
        SphereDir { theta, phi }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

/// Continuous ERP pixel coordinates `(u_e, v_e)` of a normalized direction.
pub fn sphere_to_erp(p: SphereDir, g: ErpGeometry) -> (f64, f64) {
    let u = (p.theta / TAU + 0.5) * g.width as f64;
    let v = (0.5 - p.phi / PI) * g.height as f64;
    (u, v)
}

/// Inverse of [`sphere_to_erp`].
pub fn erp_to_sphere(u: f64, v: f64, g: ErpGeometry) -> Result<SphereDir> {
    let (w, h) = (g.width as f64, g.height as f64);
    if !(0.0..w).contains(&u) || !(0.0..=h).contains(&v) {
        return Err(Error::OutOfBounds {
            u,
            v,
            width: g.width,
            height: g.height,
        });
    }
    Ok(SphereDir {
        theta: (u / w - 0.5) * TAU,
        phi: (0.5 - v / h) * PI,
    })
}

/// Tangent-patch centers with a shared square field of view and resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchLayout {
    centers: Vec<SphereDir>,
    fov: f64,
    patch_size: usize,
}

pub const DEFAULT_PATCH_COUNT: usize = 18;
pub const DEFAULT_FOV_DEG: f64 = 80.0;
pub const DEFAULT_PATCH_SIZE: usize = 128;

const LAYOUT_18: (&[f64], &[usize]) = (&[-67.5, -22.5, 22.5, 67.5], &[3, 6, 6, 3]);
const LAYOUT_26: (&[f64], &[usize]) = (&[-72.2, -36.1, 0.0, 36.1, 72.2], &[3, 6, 8, 6, 3]);

impl PatchLayout {
    pub fn new(centers: Vec<SphereDir>, fov: f64, patch_size: usize) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::InvalidLayout("layout needs at least one center".into()));
        }
        if !(fov > 0.0 && fov < PI) {
            return Err(Error::InvalidLayout(format!("fov {fov} rad outside (0, pi)")));
        }
        if patch_size == 0 {
            return Err(Error::InvalidLayout("patch size must be positive".into()));
        }
        let centers: Vec<SphereDir> = centers.into_iter().map(SphereDir::normalize).collect();
        for (i, a) in centers.iter().enumerate() {
            for (j, b) in centers.iter().enumerate().skip(i + 1) {
                if a.angular_distance(*b) < 1e-12 {
                    return Err(Error::InvalidLayout(format!("centers {i} and {j} coincide")));
                }
            }
        }
        Ok(Self {
            centers,
            fov,
            patch_size,
        })
    }

    /// Rows of patches at the given latitudes, each row evenly spaced in
    /// longitude starting at `theta = -pi`.
    pub fn from_rows(
        latitudes_deg: &[f64],
        counts: &[usize],
        fov: f64,
        patch_size: usize,
    ) -> Result<Self> {
        if latitudes_deg.len() != counts.len() {
            return Err(Error::InvalidLayout(format!(
                "{} latitudes but {} counts",
                latitudes_deg.len(),
                counts.len()
            )));
        }
        let mut centers = Vec::with_capacity(counts.iter().sum());
        for (&lat, &count) in latitudes_deg.iter().zip(counts) {
            if !(-90.0..=90.0).contains(&lat) {
                return Err(Error::InvalidLayout(format!("latitude {lat} deg out of range")));
            }
            let step = TAU / count as f64;
            for k in 0..count {
                centers.push(SphereDir::new(-PI + k as f64 * step, lat.to_radians()));
            }
        }
        Self::new(centers, fov, patch_size)
    }

    /// Built-in layouts for 18 and 26 patches.
    pub fn standard(n: usize, fov: f64, patch_size: usize) -> Result<Self> {
        let (lats, counts) = match n {
            18 => LAYOUT_18,
            26 => LAYOUT_26,
            other => return Err(Error::UnsupportedLayout(other)),
        };
        Self::from_rows(lats, counts, fov, patch_size)
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> &[SphereDir] {
        &self.centers
    }

    pub fn fov(&self) -> f64 {
        self.fov
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    /// Tangent-plane half extent `tan(fov / 2)`.
    pub fn half_extent(&self) -> f64 {
        (self.fov / 2.0).tan()
    }

    /// Whether `p` projects inside the square of patch `index`.
    pub fn contains(&self, index: usize, p: SphereDir) -> bool {
        let t = self.half_extent();
        match gnomonic_forward(p, self.centers[index]) {
            Ok(tc) => tc.u.abs() <= t && tc.v.abs() <= t,
            Err(_) => false,
        }
    }
}

/// Built-in layout with the default patch size.
pub fn make_layout(n: usize, fov: f64) -> Result<PatchLayout> {
    PatchLayout::standard(n, fov, DEFAULT_PATCH_SIZE)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn forward_at_center_is_origin() {
        let c = SphereDir::new(0.7, -0.4);
        let t = gnomonic_forward(c, c).unwrap();
        assert_eq!((t.u, t.v), (0.0, 0.0));
    }

    #[test]
    fn forward_small_offset() {
        let t = gnomonic_forward(SphereDir::new(0.1, 0.0), SphereDir::new(0.0, 0.0)).unwrap();
        assert!(close(t.u, 0.1f64.tan(), 1e-15));
        assert!(close(t.u, 0.100335, 1e-6));
        assert_eq!(t.v, 0.0);
    }

    #[test]
    fn forward_rejects_antipode() {
        let err = gnomonic_forward(SphereDir::new(PI - 1e-6, 0.0), SphereDir::new(0.0, 0.0));
        assert!(matches!(err, Err(Error::HemisphereViolation { .. })));
    }

    #[test]
    fn inverse_examples() {
        let c = SphereDir::new(0.3, -0.2);
        assert_eq!(gnomonic_inverse(TangentCoord::new(0.0, 0.0), c), c);

        let p = gnomonic_inverse(TangentCoord::new(0.1f64.tan(), 0.0), SphereDir::new(0.0, 0.0));
        assert!(close(p.theta, 0.1, 1e-15) && close(p.phi, 0.0, 1e-15));

        let c = SphereDir::new(0.0, FRAC_PI_2 - 0.3);
        let t = TangentCoord::new(1.0, 1.0);
        let back = gnomonic_forward(gnomonic_inverse(t, c), c).unwrap();
        assert!(close(back.u, 1.0, 1e-9) && close(back.v, 1.0, 1e-9));
    }

    #[test]
    fn inverse_across_pole() {
        // v large enough that the inverse lands on the far side of the pole
        let c = SphereDir::from_degrees(40.0, 67.5);
        let t = TangentCoord::new(0.2, 0.8);
        let p = gnomonic_inverse(t, c);
        let back = gnomonic_forward(p, c).unwrap();
        assert!(close(back.u, t.u, 1e-12) && close(back.v, t.v, 1e-12));
        assert!(p.theta.abs() > FRAC_PI_2);
    }

    #[test]
    fn erp_mapping_examples() {
        let g = ErpGeometry::new(1024, 512).unwrap();
        assert_eq!(sphere_to_erp(SphereDir::new(0.0, 0.0), g), (512.0, 256.0));
        assert_eq!(sphere_to_erp(SphereDir { theta: -PI, phi: FRAC_PI_2 }, g), (0.0, 0.0));
        let (u, v) = sphere_to_erp(SphereDir::new(FRAC_PI_2, -PI / 4.0), g);
        assert!(close(u, 768.0, 1e-12) && close(v, 384.0, 1e-12));

        assert_eq!(erp_to_sphere(512.0, 256.0, g).unwrap(), SphereDir::new(0.0, 0.0));
        let p = erp_to_sphere(0.0, 0.0, g).unwrap();
        assert_eq!((p.theta, p.phi), (-PI, FRAC_PI_2));
        assert!(matches!(
            erp_to_sphere(1024.0, 0.0, g),
            Err(Error::OutOfBounds { .. })
        ));
        assert!(erp_to_sphere(0.0, 512.0, g).is_ok());
    }

    #[test]
    fn geometry_must_be_two_to_one() {
        assert!(ErpGeometry::new(1024, 512).is_ok());
        assert!(ErpGeometry::new(2, 1).is_ok());
        assert!(ErpGeometry::new(1000, 512).is_err());
        assert!(ErpGeometry::new(0, 0).is_err());
    }

    #[test]
    fn normalize_wraps_and_reflects() {
        let p = SphereDir::new(PI, 0.0);
        assert_eq!(p.theta, -PI);
        let p = SphereDir::new(0.0, FRAC_PI_2 + 0.1);
        assert!(close(p.phi, FRAC_PI_2 - 0.1, 1e-15));
        assert!(close(p.theta, -PI, 1e-15));
        let p = SphereDir::new(3.0 * TAU + 0.25, -FRAC_PI_2 - 0.2);
        assert!(close(p.phi, -FRAC_PI_2 + 0.2, 1e-12));
        assert!(close(p.theta, 0.25 - PI, 1e-12));
    }

    #[test]
    fn builtin_layouts() {
        let l = make_layout(18, 80f64.to_radians()).unwrap();
        assert_eq!(l.len(), 18);
        let mut rows = std::collections::BTreeMap::<i64, usize>::new();
        for c in l.centers() {
            *rows.entry((c.phi.to_degrees() * 10.0).round() as i64).or_default() += 1;
        }
        assert_eq!(rows.into_iter().collect::<Vec<_>>(), vec![(-675, 3), (-225, 6), (225, 6), (675, 3)]);
        assert_eq!(l.centers()[0].theta, -PI);

        let l = make_layout(26, 80f64.to_radians()).unwrap();
        assert_eq!(l.len(), 26);
        assert!(matches!(make_layout(10, 1.0), Err(Error::UnsupportedLayout(10))));
    }

    #[test]
    fn layout_18_is_symmetric_in_latitude() {
        let l = make_layout(18, 80f64.to_radians()).unwrap();
        for c in l.centers() {
            let mirrored = SphereDir { theta: c.theta, phi: -c.phi };
            assert!(l
                .centers()
                .iter()
                .any(|d| close(d.theta, mirrored.theta, 1e-12) && close(d.phi, mirrored.phi, 1e-12)));
        }
    }

    #[test]
    fn layout_validation() {
        assert!(PatchLayout::new(vec![], 1.0, 8).is_err());
        assert!(PatchLayout::new(vec![SphereDir::new(0.0, 0.0)], PI, 8).is_err());
        let dup = vec![SphereDir::new(0.0, 0.0), SphereDir::new(TAU, 0.0)];
        assert!(PatchLayout::new(dup, 1.0, 8).is_err());
        assert!(PatchLayout::from_rows(&[0.0], &[2, 3], 1.0, 8).is_err());
    }
}
