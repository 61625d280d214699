use nalgebra::{DMatrix, Matrix3, SMatrix};

use crate::error::{Error, Result};

/// Linear elastic isotropic material in plane stress.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    youngs_modulus: f64,
    poissons_ratio: f64,
    thickness: f64,
}

impl Material {
    pub fn new(youngs_modulus: f64, poissons_ratio: f64, thickness: f64) -> Result<Self> {
        if !(youngs_modulus.is_finite() && youngs_modulus > 0.0) {
            return Err(Error::InvalidInput(format!("Young's modulus must be positive, got {youngs_modulus}")));
        }
        if !(0.0..0.5).contains(&poissons_ratio) {
            return Err(Error::InvalidInput(format!("Poisson's ratio must lie in [0, 0.5), got {poissons_ratio}")));
        }
        if !(thickness.is_finite() && thickness > 0.0) {
            return Err(Error::InvalidInput(format!("thickness must be positive, got {thickness}")));
        }
        Ok(Self { youngs_modulus, poissons_ratio, thickness })
    }

    /// Unit thickness.
    pub fn plane(youngs_modulus: f64, poissons_ratio: f64) -> Result<Self> {
        Self::new(youngs_modulus, poissons_ratio, 1.0)
    }

    pub fn youngs_modulus(&self) -> f64 {
        self.youngs_modulus
    }

    pub fn poissons_ratio(&self) -> f64 {
        self.poissons_ratio
    }

    pub fn thickness(&self) -> f64 {
        self.thickness
    }

    /// Plane stress constitutive matrix.
    pub fn constitutive(&self) -> Matrix3<f64> {
        let nu = self.poissons_ratio;
        let c = self.youngs_modulus / (1.0 - nu * nu);
        Matrix3::new(c, c * nu, 0.0, c * nu, c, 0.0, 0.0, 0.0, c * (1.0 - nu) / 2.0)
    }
}

/// Dense symmetric positive semi-definite element-level matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementMatrix(DMatrix<f64>);

impl ElementMatrix {
    /// Wraps `m` after checking it is square, finite and symmetric to 1e-12 relative.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidInput(format!("element matrix is {}x{}", m.nrows(), m.ncols())));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("element matrix has non-finite entries".into()));
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let asym = (&m - m.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(Error::InvalidInput(format!("element matrix not symmetric ({asym:e})")));
        }
        Ok(Self(m))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

/// 8x8 stiffness of a rectangular bilinear quadrilateral, 2x2 Gauss quadrature.
///
/// Local nodes are counterclockwise from the lower-left corner and the DOF order is
/// `[u0x, u0y, u1x, u1y, ...]`.
pub fn element_stiffness_q4(material: &Material, elem_w: f64, elem_h: f64) -> Result<ElementMatrix> {
    if !(elem_w > 0.0 && elem_h > 0.0 && elem_w.is_finite() && elem_h.is_finite()) {
        return Err(Error::InvalidInput(format!("element size must be positive, got {elem_w}x{elem_h}")));
    }
    let d = material.constitutive();
    let g = 1.0 / 3f64.sqrt();
    let xi_n = [-1.0, 1.0, 1.0, -1.0];
    let eta_n = [-1.0, -1.0, 1.0, 1.0];
    // Jacobian is diagonal for an axis-aligned rectangle.
    let (jx, jy) = (elem_w / 2.0, elem_h / 2.0);
    let det = jx * jy;

    let mut k = SMatrix::<f64, 8, 8>::zeros();
    for &xi in &[-g, g] {
        for &eta in &[-g, g] {
            let mut b = SMatrix::<f64, 3, 8>::zeros();
            for a in 0..4 {
                let dn_dx = 0.25 * xi_n[a] * (1.0 + eta_n[a] * eta) / jx;
                let dn_dy = 0.25 * eta_n[a] * (1.0 + xi_n[a] * xi) / jy;
                b[(0, 2 * a)] = dn_dx;
                b[(1, 2 * a + 1)] = dn_dy;
                b[(2, 2 * a)] = dn_dy;
                b[(2, 2 * a + 1)] = dn_dx;
            }
            k += b.transpose() * d * b * (det * material.thickness());
        }
    }
    let k = (k + k.transpose()) * 0.5;
    ElementMatrix::new(DMatrix::from_iterator(8, 8, k.iter().copied()))
}

/// Symmetric PSD square root via eigendecomposition.
///
/// Eigenvalues below `1e-12 * max` are treated as zero; anything below `-1e-9 * max`
/// is rejected as not PSD.
pub fn element_sqrt(k: &ElementMatrix) -> Result<ElementMatrix> {
    let n = k.dim();
    if n == 0 {
        return Ok(k.clone());
    }
    let eig = k.as_matrix().clone().symmetric_eigen();
    let lmax = eig.eigenvalues.max();
    if lmax <= 0.0 {
        if eig.eigenvalues.min() < 0.0 {
            return Err(Error::InvalidInput("matrix is negative definite".into()));
        }
        return ElementMatrix::new(DMatrix::zeros(n, n));
    }
    let mut roots = eig.eigenvalues.clone();
    for r in roots.iter_mut() {
        if *r < -1e-9 * lmax {
            return Err(Error::InvalidInput(format!("matrix is not PSD (eigenvalue {:e})", *r)));
        }
        *r = if *r < 1e-12 * lmax { 0.0 } else { r.sqrt() };
    }
    let v = &eig.eigenvectors;
    let s = v * DMatrix::from_diagonal(&roots) * v.transpose();
    ElementMatrix::new((&s + s.transpose()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    // 3x3 Gauss rule in physical coordinates with shape functions written out directly.
    fn oracle_q4(e: f64, nu: f64, t: f64, w: f64, h: f64) -> DMatrix<f64> {
        let pts = [-(0.6f64).sqrt(), 0.0, (0.6f64).sqrt()];
        let wts = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
        let c = e / (1.0 - nu * nu);
        let d = [[c, c * nu, 0.0], [c * nu, c, 0.0], [0.0, 0.0, c * (1.0 - nu) / 2.0]];
        let mut k = DMatrix::zeros(8, 8);
        for (p, wp) in pts.iter().zip(wts) {
            for (q, wq) in pts.iter().zip(wts) {
                let x = (1.0 + p) * w / 2.0;
                let y = (1.0 + q) * h / 2.0;
                let dx = [-(h - y), h - y, y, -y].map(|v| v / (w * h));
                let dy = [-(w - x), -x, x, w - x].map(|v| v / (w * h));
                let mut b = [[0.0; 8]; 3];
                for a in 0..4 {
                    b[0][2 * a] = dx[a];
                    b[1][2 * a + 1] = dy[a];
                    b[2][2 * a] = dy[a];
                    b[2][2 * a + 1] = dx[a];
                }
                let jac = w * h / 4.0 * wp * wq * t;
                for r in 0..8 {
                    for s in 0..8 {
                        let mut acc = 0.0;
                        for i in 0..3 {
                            for j in 0..3 {
                                acc += b[i][r] * d[i][j] * b[j][s];
                            }
                        }
                        k[(r, s)] += acc * jac;
                    }
                }
            }
        }
        k
    }

    #[test]
    fn q4_matches_quadrature_oracle() {
        for &(e, nu, w, h) in &[(1.0, 0.0, 1.0, 1.0), (210e3, 0.3, 20.0, 12.5), (3.0, 0.49, 0.5, 2.0)] {
            let m = Material::plane(e, nu).unwrap();
            let k = element_stiffness_q4(&m, w, h).unwrap();
            let o = oracle_q4(e, nu, 1.0, w, h);
            assert_relative_eq!(k.as_matrix(), &o, max_relative = 1e-12, epsilon = 1e-12 * e);
        }
    }

    #[test]
    fn q4_has_three_rigid_modes() {
        let m = Material::new(2.0, 0.25, 0.7).unwrap();
        let k = element_stiffness_q4(&m, 1.3, 0.8).unwrap();
        let eig = k.as_matrix().clone().symmetric_eigen();
        let lmax = eig.eigenvalues.max();
        let zeros = eig.eigenvalues.iter().filter(|l| l.abs() < 1e-12 * lmax).count();
        assert_eq!(zeros, 3);
        assert!(eig.eigenvalues.min() > -1e-12 * lmax);
    }

    #[test]
    fn q4_linear_in_modulus_and_thickness() {
        let a = element_stiffness_q4(&Material::new(1.0, 0.3, 1.0).unwrap(), 1.0, 2.0).unwrap();
        let b = element_stiffness_q4(&Material::new(2.0, 0.3, 1.0).unwrap(), 1.0, 2.0).unwrap();
        let c = element_stiffness_q4(&Material::new(1.0, 0.3, 3.0).unwrap(), 1.0, 2.0).unwrap();
        assert_relative_eq!(b.as_matrix(), &(a.as_matrix() * 2.0), max_relative = 1e-14);
        assert_relative_eq!(c.as_matrix(), &(a.as_matrix() * 3.0), max_relative = 1e-14);
    }

    #[test]
    fn material_validation() {
        assert!(Material::plane(0.0, 0.3).is_err());
        assert!(Material::plane(1.0, 0.5).is_err());
        assert!(Material::plane(1.0, -0.1).is_err());
        assert!(Material::new(1.0, 0.3, 0.0).is_err());
    }

    #[test]
    fn sqrt_trivial_cases() {
        let i = ElementMatrix::new(DMatrix::identity(3, 3)).unwrap();
        assert_relative_eq!(element_sqrt(&i).unwrap().as_matrix(), i.as_matrix(), epsilon = 1e-14);
        let d = ElementMatrix::new(DMatrix::from_diagonal(&nalgebra::dvector![4.0, 0.0])).unwrap();
        let s = element_sqrt(&d).unwrap();
        assert_relative_eq!(s.as_matrix(), &DMatrix::from_diagonal(&nalgebra::dvector![2.0, 0.0]), epsilon = 1e-14);
    }

    #[test]
    fn sqrt_rejects_indefinite() {
        let m = ElementMatrix::new(DMatrix::from_diagonal(&nalgebra::dvector![1.0, -0.1])).unwrap();
        assert!(element_sqrt(&m).is_err());
    }

    #[test]
    fn sqrt_of_q4_squares_back() {
        let k = element_stiffness_q4(&Material::plane(210e3, 0.3).unwrap(), 20.0, 12.5).unwrap();
        let s = element_sqrt(&k).unwrap();
        let back = s.as_matrix() * s.as_matrix();
        assert!((&back - k.as_matrix()).norm() <= 1e-10 * k.as_matrix().norm());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn sqrt_squares_back(entries in proptest::collection::vec(-1.0f64..1.0, 64), rank in 1usize..=8) {
            let b = DMatrix::from_vec(8, 8, entries);
            let b = b.columns(0, rank).into_owned();
            let m = &b * b.transpose();
            let k = ElementMatrix::new((&m + m.transpose()) * 0.5).unwrap();
            let s = element_sqrt(&k).unwrap();
            let back = s.as_matrix() * s.as_matrix();
            prop_assert!((&back - k.as_matrix()).norm() <= 1e-10 * k.as_matrix().norm());
        }
    }
}
