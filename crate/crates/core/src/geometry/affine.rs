use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::expsum::Point3;

/// `x ↦ M x + offset` on R³.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap3 {
    pub matrix: [[f64; 3]; 3],
    pub offset: [f64; 3],
}

impl AffineMap3 {
    pub fn new(matrix: [[f64; 3]; 3], offset: [f64; 3]) -> Self {
        AffineMap3 { matrix, offset }
    }

    pub fn linear(matrix: [[f64; 3]; 3]) -> Self {
        AffineMap3 {
            matrix,
            offset: [0.0; 3],
        }
    }

    pub fn apply(&self, p: Point3) -> Point3 {
        let x = p.to_array();
        Point3::from_array([0, 1, 2].map(|i| {
            let row = self.matrix[i];
            row[0] * x[0] + row[1] * x[1] + row[2] * x[2] + self.offset[i]
        }))
    }

    pub fn det(&self) -> f64 {
        let m = self.matrix;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn inverse(&self) -> Result<Self> {
        let det = self.det();
        if det.abs() <= 1e-12 {
            return Err(LabError::invalid(format!(
                "affine map is singular (det = {det:e})"
            )));
        }
        let m = self.matrix;
        let cof = |i: usize, j: usize| {
            let (r0, r1) = ((i + 1) % 3, (i + 2) % 3);
            let (c0, c1) = ((j + 1) % 3, (j + 2) % 3);
            m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]
        };
        // inverse is the transposed cofactor matrix over det
        let inv = [0, 1, 2].map(|i| [0, 1, 2].map(|j| cof(j, i) / det));
        let o = self.offset;
        let offset = [0, 1, 2].map(|i| -(inv[i][0] * o[0] + inv[i][1] * o[1] + inv[i][2] * o[2]));
        Ok(AffineMap3 {
            matrix: inv,
            offset,
        })
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &AffineMap3) -> AffineMap3 {
        let a = self.matrix;
        let b = other.matrix;
        let matrix = [0, 1, 2].map(|i| [0, 1, 2].map(|j| (0..3).map(|k| a[i][k] * b[k][j]).sum()));
        let offset = self.apply(Point3::from_array(other.offset)).to_array();
        AffineMap3 { matrix, offset }
    }
}

/// `T(x, y, z) = (y/2, (x − z/6)/√2, (x + z/6)/√2)`, which sends the curve's
/// difference frame onto the light cone.
pub fn cone_map() -> AffineMap3 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    AffineMap3::linear([[0.0, 0.5, 0.0], [s, 0.0, -s / 6.0], [s, 0.0, s / 6.0]])
}

/// Rescaling of the `l`-th block at scale `R_prev^{1/3}` onto the whole curve:
/// `L(γ((l + u)/R_prev^{1/3})) = γ(u)`.
pub fn rescale_map(r_prev: f64, l: usize) -> Result<AffineMap3> {
    if !(r_prev >= 1.0 && r_prev.is_finite()) {
        return Err(LabError::invalid(format!("R_prev = {r_prev} must be >= 1")));
    }
    let s = r_prev.cbrt();
    if l as f64 >= s * (1.0 - 1e-12) {
        return Err(LabError::invalid(format!(
            "l = {l} must be below R_prev^(1/3) = {s}"
        )));
    }
    let l = l as f64;
    Ok(AffineMap3::new(
        [
            [s, 0.0, 0.0],
            [-2.0 * l * s, s * s, 0.0],
            [3.0 * l * l * s, -3.0 * l * s * s, s * s * s],
        ],
        [-l, l * l, -l * l * l],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{curve_defects, frenet_frame, gamma};
    use proptest::prelude::*;

    fn close(a: Point3, b: Point3, tol: f64) -> bool {
        a.to_array()
            .iter()
            .zip(b.to_array())
            .all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn cone_map_examples() {
        let t = cone_map();
        assert_eq!(t.apply(Point3::ORIGIN), Point3::ORIGIN);
        assert!(close(
            t.apply(Point3::new(1.0, 0.0, 6.0)),
            Point3::new(0.0, 0.0, 2f64.sqrt()),
            1e-15
        ));
        assert!((t.det().abs() - 1.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn cone_map_on_frame() {
        let tm = cone_map();
        for t in [0.0, 0.25, 0.5, 1.0] {
            let [d1, d2, d3] = frenet_frame(t).map(Point3::from_array).map(|v| tm.apply(v));
            // Tγ′ is on the light cone, with angle ω(t)
            assert!((d1.x1.hypot(d1.x2) - d1.x3).abs() < 1e-12);
            let w = d1.x2.atan2(d1.x1);
            assert!((w.cos() - 2.0 * 2f64.sqrt() * t / (2.0 + t * t)).abs() < 1e-12);
            assert!((w.sin() - (2.0 - t * t) / (2.0 + t * t)).abs() < 1e-12);
            // Tγ″ is tangent to the cone along that ray
            assert!((d2.x1 * w.cos() + d2.x2 * w.sin() - d2.x3).abs() < 1e-12);
            let s = std::f64::consts::FRAC_1_SQRT_2;
            assert!(close(d3, Point3::new(0.0, -s, s), 1e-12));
        }
    }

    #[test]
    fn rescale_examples() {
        let l0 = rescale_map(4096.0, 0).unwrap();
        assert!(close(
            l0.apply(Point3::new(1.0, 1.0, 1.0)),
            Point3::new(16.0, 256.0, 4096.0),
            1e-9
        ));
        let m = rescale_map(4096.0, 3).unwrap();
        for i in 0..=100 {
            let u = i as f64 / 100.0;
            assert!(close(m.apply(gamma((3.0 + u) / 16.0)), gamma(u), 1e-9));
        }
        assert!(rescale_map(4096.0, 16).is_err());
        assert!(rescale_map(0.5, 0).is_err());
    }

    #[test]
    fn singular_map_has_no_inverse() {
        assert!(
            AffineMap3::linear([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 0.0, 1.0]])
                .inverse()
                .is_err()
        );
    }

    proptest! {
        #[test]
        fn rescale_inverse_roundtrip(l in 0usize..16, p in prop::array::uniform3(-1.0f64..1.0)) {
            let m = rescale_map(4096.0, l).unwrap();
            let id = m.compose(&m.inverse().unwrap());
            let x = Point3::from_array(p);
            prop_assert!(close(id.apply(x), x, 1e-12));
            prop_assert!(close(m.inverse().unwrap().apply(m.apply(x)), x, 1e-12));
        }

        #[test]
        fn rescale_scales_defects(l in 0usize..16, u in 0.0f64..1.0, d in prop::array::uniform2(-1.0f64..1.0)) {
            let m = rescale_map(4096.0, l).unwrap();
            let x1 = (l as f64 + u) / 16.0;
            let x2 = x1 * x1 + d[0] * 1e-4;
            let xi = Point3::new(x1, x2, 3.0 * x1 * x2 - 2.0 * x1.powi(3) + d[1] * 1e-6);
            let (a2, a3) = curve_defects(xi);
            let (b2, b3) = curve_defects(m.apply(xi));
            prop_assert!((b2 - 256.0 * a2).abs() <= 1e-9);
            prop_assert!((b3 - 4096.0 * a3).abs() <= 1e-9);
        }

        #[test]
        fn light_ray_points(t in 0.0f64..1.0, a in -1.0f64..1.0) {
            let g = Point3::from_array(frenet_frame(t)[0].map(|v| v * a));
            let p = cone_map().apply(g);
            prop_assert!((p.x1.hypot(p.x2) - p.x3.abs()).abs() <= 1e-12);
        }
    }
}
