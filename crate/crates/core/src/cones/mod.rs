//! Cone algebra: product cones, Euclidean projections, distances, generalized
//! Jacobians of the projection, and normal-cone membership tests.
//!
//! All operations act blockwise on a [`ConeSpec`], a finite product of
//! primitive closed convex cones. Positive-semidefinite blocks are stored in
//! scaled symmetric-vector form (off-diagonals times sqrt(2)) so every block
//! lives in a plain Euclidean vector space with the standard inner product.

mod psd;

pub use psd::{smat, svec, svec_len};

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::error::{Error, Result};

/// A primitive closed convex cone.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrimitiveCone {
    /// `{0}^dim`.
    Zero { dim: usize },
    /// Componentwise nonnegative vectors.
    NonnegOrthant { dim: usize },
    /// Componentwise nonpositive vectors.
    NonposOrthant { dim: usize },
    /// `{(t, z) : ||z|| <= t}`, leading scalar plus vector part; `dim >= 2`.
    SecondOrder { dim: usize },
    /// Positive semidefinite `n x n` matrices in scaled-vector form of
    /// length `n(n+1)/2`.
    Psd { n: usize },
}

impl PrimitiveCone {
    pub fn zero(dim: usize) -> Result<Self> {
        Self::validate_dim(dim)?;
        Ok(PrimitiveCone::Zero { dim })
    }

    pub fn nonneg(dim: usize) -> Result<Self> {
        Self::validate_dim(dim)?;
        Ok(PrimitiveCone::NonnegOrthant { dim })
    }

    pub fn nonpos(dim: usize) -> Result<Self> {
        Self::validate_dim(dim)?;
        Ok(PrimitiveCone::NonposOrthant { dim })
    }

    pub fn second_order(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidArgument(format!(
                "second-order cone needs dim >= 2, got {dim}"
            )));
        }
        Ok(PrimitiveCone::SecondOrder { dim })
    }

    pub fn psd(n: usize) -> Result<Self> {
        Self::validate_dim(n)?;
        Ok(PrimitiveCone::Psd { n })
    }

    fn validate_dim(dim: usize) -> Result<()> {
        if dim == 0 {
            return Err(Error::InvalidArgument("cone dimension must be >= 1".into()));
        }
        Ok(())
    }

    /// Length of this block as a vector.
    pub fn vec_len(&self) -> usize {
        match *self {
            PrimitiveCone::Zero { dim }
            | PrimitiveCone::NonnegOrthant { dim }
            | PrimitiveCone::NonposOrthant { dim }
            | PrimitiveCone::SecondOrder { dim } => dim,
            PrimitiveCone::Psd { n } => svec_len(n),
        }
    }
}

/// A product of primitive cones with a fixed block layout.
#[derive(Clone, Debug, PartialEq)]
pub struct ConeSpec {
    blocks: Vec<PrimitiveCone>,
    total_dim: usize,
}

impl ConeSpec {
    pub fn new(blocks: Vec<PrimitiveCone>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidArgument(
                "cone spec needs at least one block".into(),
            ));
        }
        let total_dim = blocks.iter().map(PrimitiveCone::vec_len).sum();
        Ok(ConeSpec { blocks, total_dim })
    }

    pub fn single(block: PrimitiveCone) -> Self {
        let total_dim = block.vec_len();
        ConeSpec {
            blocks: vec![block],
            total_dim,
        }
    }

    pub fn blocks(&self) -> &[PrimitiveCone] {
        &self.blocks
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    fn check_len(&self, len: usize, what: &str) -> Result<()> {
        if len != self.total_dim {
            return Err(Error::dim(self.total_dim, len, what));
        }
        Ok(())
    }

    /// Euclidean projection onto the cone, blockwise.
    pub fn project(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(y.len(), "project input")?;
        let mut out = DVector::zeros(self.total_dim);
        let mut offset = 0;
        for block in &self.blocks {
            let len = block.vec_len();
            let yb = y.rows(offset, len);
            let pb = project_block(block, &yb)?;
            out.rows_mut(offset, len).copy_from(&pb);
            offset += len;
        }
        Ok(out)
    }

    /// Squared Euclidean distance to the cone, `||y - project(y)||^2`.
    pub fn dist_sq(&self, y: &DVector<f64>) -> Result<f64> {
        let p = self.project(y)?;
        Ok((y - p).norm_squared())
    }

    /// One element of the Clarke generalized Jacobian of the projection at
    /// `y`, assembled as a block-diagonal symmetric matrix `P` with
    /// `0 <= P <= I`. Ties at nondifferentiable points are resolved
    /// deterministically: orthant boundaries to 0, second-order boundaries to
    /// the boundary formula (the cone vertex to `I/2`), zero eigenvalues of
    /// semidefinite blocks to 0.
    pub fn proj_generalized_jacobian(&self, y: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_len(y.len(), "proj_generalized_jacobian input")?;
        let mut out = DMatrix::zeros(self.total_dim, self.total_dim);
        let mut offset = 0;
        for block in &self.blocks {
            let len = block.vec_len();
            let yb = y.rows(offset, len);
            let pb = jacobian_block(block, &yb)?;
            out.view_mut((offset, offset), (len, len)).copy_from(&pb);
            offset += len;
        }
        Ok(out)
    }

    /// `||y - project(y + lam)||`; zero (to tolerance) certifies `y` in the
    /// cone with `lam` in the normal cone at `y`.
    pub fn normal_cone_gap(&self, y: &DVector<f64>, lam: &DVector<f64>) -> Result<f64> {
        self.check_len(y.len(), "normal_cone_gap point")?;
        self.check_len(lam.len(), "normal_cone_gap multiplier")?;
        let p = self.project(&(y + lam))?;
        Ok((y - p).norm())
    }
}

fn project_block(block: &PrimitiveCone, y: &DVectorView<f64>) -> Result<DVector<f64>> {
    match *block {
        PrimitiveCone::Zero { dim } => Ok(DVector::zeros(dim)),
        PrimitiveCone::NonnegOrthant { .. } => Ok(y.map(|v| v.max(0.0))),
        PrimitiveCone::NonposOrthant { .. } => Ok(y.map(|v| v.min(0.0))),
        PrimitiveCone::SecondOrder { dim } => Ok(project_soc(dim, y)),
        PrimitiveCone::Psd { n } => psd::project_psd(n, y),
    }
}

fn project_soc(dim: usize, y: &DVectorView<f64>) -> DVector<f64> {
    let t = y[0];
    let z = y.rows(1, dim - 1);
    let zn = z.norm();
    if zn <= t {
        return y.clone_owned();
    }
    if zn <= -t {
        return DVector::zeros(dim);
    }
    // Here zn > |t| >= 0, so zn > 0 and the boundary ray is well defined.
    let a = 0.5 * (t + zn);
    let mut out = DVector::zeros(dim);
    out[0] = a;
    out.rows_mut(1, dim - 1).copy_from(&(z * (a / zn)));
    out
}

fn jacobian_block(block: &PrimitiveCone, y: &DVectorView<f64>) -> Result<DMatrix<f64>> {
    match *block {
        PrimitiveCone::Zero { dim } => Ok(DMatrix::zeros(dim, dim)),
        PrimitiveCone::NonnegOrthant { dim } => Ok(DMatrix::from_fn(dim, dim, |i, j| {
            if i == j && y[i] > 0.0 {
                1.0
            } else {
                0.0
            }
        })),
        PrimitiveCone::NonposOrthant { dim } => Ok(DMatrix::from_fn(dim, dim, |i, j| {
            if i == j && y[i] < 0.0 {
                1.0
            } else {
                0.0
            }
        })),
        PrimitiveCone::SecondOrder { dim } => Ok(jacobian_soc(dim, y)),
        PrimitiveCone::Psd { n } => psd::jacobian_psd(n, y),
    }
}

fn jacobian_soc(dim: usize, y: &DVectorView<f64>) -> DMatrix<f64> {
    let t = y[0];
    let z = y.rows(1, dim - 1);
    let zn = z.norm();
    if zn < t {
        return DMatrix::identity(dim, dim);
    }
    if zn < -t {
        return DMatrix::zeros(dim, dim);
    }
    if zn == 0.0 {
        // Vertex: t = zn = 0. Midpoint of the identity and zero limits.
        return DMatrix::identity(dim, dim) * 0.5;
    }
    // Boundary formula, also used on the ties zn = |t|.
    let s = t / zn;
    let w = z / zn;
    let mut p = DMatrix::zeros(dim, dim);
    p[(0, 0)] = 0.5;
    for i in 0..dim - 1 {
        p[(0, i + 1)] = 0.5 * w[i];
        p[(i + 1, 0)] = 0.5 * w[i];
        for j in 0..dim - 1 {
            let eye = if i == j { 1.0 } else { 0.0 };
            p[(i + 1, j + 1)] = 0.5 * ((1.0 + s) * eye - s * w[i] * w[j]);
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dvec(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    /// A spec exercising every cone kind at once.
    fn mixed_spec() -> ConeSpec {
        ConeSpec::new(vec![
            PrimitiveCone::zero(2).unwrap(),
            PrimitiveCone::nonneg(3).unwrap(),
            PrimitiveCone::nonpos(2).unwrap(),
            PrimitiveCone::second_order(3).unwrap(),
            PrimitiveCone::psd(3).unwrap(),
        ])
        .unwrap()
    }

    fn sample_vec(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> DVector<f64> {
        DVector::from_fn(dim, |_, _| rng.gen_range(-scale..scale))
    }

    #[test]
    fn orthant_interior_is_fixed_point() {
        let cone = ConeSpec::single(PrimitiveCone::nonpos(2).unwrap());
        let y = dvec(&[-1.0, -2.0]);
        assert_eq!(cone.project(&y).unwrap(), y);
        assert_eq!(cone.dist_sq(&y).unwrap(), 0.0);
    }

    #[test]
    fn soc_projection_matches_closed_form_and_grid_oracle() {
        let cone = ConeSpec::single(PrimitiveCone::second_order(2).unwrap());
        let y = dvec(&[0.0, 2.0]);
        let p = cone.project(&y).unwrap();
        assert_relative_eq!(p[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(p[1], 1.0, epsilon = 1e-14);
        assert_relative_eq!(cone.dist_sq(&y).unwrap(), 2.0, epsilon = 1e-14);

        // Independent oracle: grid minimization of ||y - w|| over w in K,
        // followed by one refinement pass around the coarse winner.
        fn scan(
            y: &DVector<f64>,
            best: &mut (f64, f64, f64),
            (t0, t1): (f64, f64),
            (z0, z1): (f64, f64),
            steps: usize,
        ) {
            for i in 0..=steps {
                let t = t0 + (t1 - t0) * i as f64 / steps as f64;
                for j in 0..=steps {
                    let z = z0 + (z1 - z0) * j as f64 / steps as f64;
                    if z.abs() <= t {
                        let d = (t - y[0]).powi(2) + (z - y[1]).powi(2);
                        if d < best.0 {
                            *best = (d, t, z);
                        }
                    }
                }
            }
        }
        let mut best = (f64::INFINITY, 0.0, 0.0);
        scan(&y, &mut best, (0.0, 3.0), (-3.0, 3.0), 600);
        let (_, tc, zc) = best;
        scan(
            &y,
            &mut best,
            (tc - 0.02, tc + 0.02),
            (zc - 0.02, zc + 0.02),
            400,
        );
        assert!((best.1 - p[0]).abs() < 2e-4);
        assert!((best.2 - p[1]).abs() < 2e-4);
    }

    #[test]
    fn psd_projection_clips_negative_eigenvalues() {
        let cone = ConeSpec::single(PrimitiveCone::psd(2).unwrap());
        let y = svec(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]));
        let p = cone.project(&y).unwrap();
        let expected = svec(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        assert_relative_eq!((p - &expected).norm(), 0.0, epsilon = 1e-12);

        // Oracle: dense search over PSD 2x2 matrices via Cholesky-like
        // parametrization [[a,0],[b,c]] [[a,b],[0,c]], coarse then refined.
        let target = smat(&y, 2).unwrap();
        let mut best = (f64::INFINITY, DMatrix::zeros(2, 2));
        let mut scan = |a0: f64, a1: f64, b0: f64, b1: f64, c0: f64, c1: f64, steps: usize| {
            for i in 0..=steps {
                let a = a0 + (a1 - a0) * i as f64 / steps as f64;
                for j in 0..=steps {
                    let b = b0 + (b1 - b0) * j as f64 / steps as f64;
                    for k in 0..=steps {
                        let c = c0 + (c1 - c0) * k as f64 / steps as f64;
                        let m =
                            DMatrix::from_row_slice(2, 2, &[a * a, a * b, a * b, b * b + c * c]);
                        let d = (&m - &target).norm_squared();
                        if d < best.0 {
                            best = (d, m);
                        }
                    }
                }
            }
        };
        scan(-1.5, 1.5, -1.5, 1.5, -1.5, 1.5, 60);
        assert_relative_eq!(
            (best.1 - smat(&expected, 2).unwrap()).norm(),
            0.0,
            epsilon = 0.05
        );
    }

    #[test]
    fn dist_sq_zero_cone() {
        let cone = ConeSpec::single(PrimitiveCone::zero(1).unwrap());
        assert_eq!(cone.dist_sq(&dvec(&[3.0])).unwrap(), 9.0);
    }

    #[test]
    fn jacobian_orthant_tie_resolves_to_zero() {
        let cone = ConeSpec::single(PrimitiveCone::nonneg(3).unwrap());
        let p = cone
            .proj_generalized_jacobian(&dvec(&[2.0, -1.0, 0.0]))
            .unwrap();
        let expected = DMatrix::from_diagonal(&dvec(&[1.0, 0.0, 0.0]));
        assert_eq!(p, expected);
    }

    #[test]
    fn jacobian_zero_cone_is_zero_operator() {
        let cone = ConeSpec::single(PrimitiveCone::zero(2).unwrap());
        let p = cone.proj_generalized_jacobian(&dvec(&[0.3, -7.0])).unwrap();
        assert_eq!(p, DMatrix::zeros(2, 2));
    }

    #[test]
    fn jacobian_soc_interior_is_identity() {
        let cone = ConeSpec::single(PrimitiveCone::second_order(2).unwrap());
        let p = cone.proj_generalized_jacobian(&dvec(&[3.0, 1.0])).unwrap();
        assert_eq!(p, DMatrix::identity(2, 2));
    }

    #[test]
    fn normal_cone_gap_examples() {
        let nonpos = ConeSpec::single(PrimitiveCone::nonpos(1).unwrap());
        assert_relative_eq!(
            nonpos
                .normal_cone_gap(&dvec(&[0.0]), &dvec(&[1.0]))
                .unwrap(),
            0.0
        );
        assert_relative_eq!(
            nonpos
                .normal_cone_gap(&dvec(&[-1.0]), &dvec(&[1.0]))
                .unwrap(),
            1.0
        );
        let zero = ConeSpec::single(PrimitiveCone::zero(1).unwrap());
        assert_relative_eq!(
            zero.normal_cone_gap(&dvec(&[0.0]), &dvec(&[5.0])).unwrap(),
            0.0
        );
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let cone = mixed_spec();
        let short = DVector::zeros(cone.total_dim() - 1);
        assert!(matches!(
            cone.project(&short),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn projection_invariants_on_samples() {
        let cone = mixed_spec();
        let d = cone.total_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..400 {
            let a = sample_vec(&mut rng, d, 2.0);
            let b = sample_vec(&mut rng, d, 2.0);
            let pa = cone.project(&a).unwrap();
            let pb = cone.project(&b).unwrap();
            // Nonexpansiveness.
            assert!((&pa - &pb).norm() <= (&a - &b).norm() + 1e-12);
            // Idempotence, to machine tolerance of the eigensolve at this scale.
            assert!((cone.project(&pa).unwrap() - &pa).norm() <= 1e-11 * (1.0 + a.norm()));
            // Variational inequality against an arbitrary cone point.
            let z = cone.project(&sample_vec(&mut rng, d, 2.0)).unwrap();
            assert!((&a - &pa).dot(&(&z - &pa)) <= 1e-10);
        }
    }

    #[test]
    fn projection_residual_is_orthogonal_on_cones() {
        // Moreau decomposition: for a closed convex cone the projection and
        // the residual are orthogonal, not merely obtuse.
        let cone = mixed_spec();
        let d = cone.total_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        for _ in 0..300 {
            let y = sample_vec(&mut rng, d, 3.0);
            let p = cone.project(&y).unwrap();
            let residual = &y - &p;
            assert!(
                p.dot(&residual).abs() <= 1e-10 * (1.0 + y.norm_squared()),
                "projection not orthogonal to its residual at {y:?}"
            );
        }
    }

    #[test]
    fn half_dist_sq_gradient_matches_finite_differences() {
        let cone = mixed_spec();
        let d = cone.total_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let h = 1e-6;
        for _ in 0..50 {
            let y = sample_vec(&mut rng, d, 2.0);
            let grad = &y - cone.project(&y).unwrap();
            for i in 0..d {
                let mut yp = y.clone();
                let mut ym = y.clone();
                yp[i] += h;
                ym[i] -= h;
                let fd =
                    0.5 * (cone.dist_sq(&yp).unwrap() - cone.dist_sq(&ym).unwrap()) / (2.0 * h);
                assert!(
                    (fd - grad[i]).abs() <= 1e-5 * (1.0 + grad[i].abs()),
                    "component {i}: fd {fd} vs analytic {}",
                    grad[i]
                );
            }
        }
    }

    #[test]
    fn normal_cone_round_trip() {
        let cone = mixed_spec();
        let d = cone.total_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..200 {
            // Membership direction: y = project(w), lam = w - y is always a
            // normal-cone pair, so the gap vanishes and project(y+lam) = y.
            let w = sample_vec(&mut rng, d, 2.0);
            let y = cone.project(&w).unwrap();
            let lam = &w - &y;
            assert!(cone.normal_cone_gap(&y, &lam).unwrap() <= 1e-12);
            assert!((cone.project(&(&y + &lam)).unwrap() - &y).norm() <= 1e-12);

            // Converse: whenever project(y+lam) = y holds, the gap is zero by
            // definition; perturbing y off the projection breaks both.
            let y_off = &y + sample_vec(&mut rng, d, 0.5);
            let gap = cone.normal_cone_gap(&y_off, &lam).unwrap();
            let proj_moved = (cone.project(&(&y_off + &lam)).unwrap() - &y_off).norm();
            assert!((gap - proj_moved).abs() <= 1e-12);
        }
    }

    #[test]
    fn generalized_jacobian_is_contained_in_unit_interval() {
        let cone = mixed_spec();
        let d = cone.total_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        for _ in 0..60 {
            let y = sample_vec(&mut rng, d, 2.0);
            let p = cone.proj_generalized_jacobian(&y).unwrap();
            assert!((&p - p.transpose()).norm() <= 1e-12);
            let eig = p.symmetric_eigenvalues();
            for ev in eig.iter() {
                assert!(*ev >= -1e-10 && *ev <= 1.0 + 1e-10, "eigenvalue {ev}");
            }
        }
    }

    #[test]
    fn generalized_jacobian_matches_directional_differences() {
        let cone = mixed_spec();
        let d = cone.total_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let h = 1e-6;
        let mut checked = 0;
        for _ in 0..80 {
            // Random perturbation keeps samples away from the nondifferentiable
            // sets with probability one.
            let y = sample_vec(&mut rng, d, 2.0) + sample_vec(&mut rng, d, 1e-3);
            let p = cone.proj_generalized_jacobian(&y).unwrap();
            let dir = sample_vec(&mut rng, d, 1.0);
            let fd = (cone.project(&(&y + &dir * h)).unwrap()
                - cone.project(&(&y - &dir * h)).unwrap())
                / (2.0 * h);
            let an = &p * &dir;
            if (&fd - &an).norm() <= 1e-5 * (1.0 + an.norm()) {
                checked += 1;
            }
        }
        // All but the rare sample that lands within h of a kink must agree.
        assert!(checked >= 78, "only {checked}/80 directional checks agreed");
    }

    #[test]
    fn soc_boundary_jacobian_is_the_ray_region_limit() {
        // On the cone surface the projection is not differentiable; the
        // returned element must match the Jacobian limit from the ray region
        // (where the projection is smooth), probed by finite differences at
        // a point nudged outward along the surface normal.
        let cone = ConeSpec::single(PrimitiveCone::second_order(3).unwrap());
        let boundary = dvec(&[5.0, 3.0, 4.0]);
        let p = cone.proj_generalized_jacobian(&boundary).unwrap();
        let normal = dvec(&[-1.0, 0.6, 0.8]) * std::f64::consts::FRAC_1_SQRT_2;
        let outside = &boundary + &normal * 1e-4;
        let h = 1e-7;
        for j in 0..3 {
            let mut yp = outside.clone();
            let mut ym = outside.clone();
            yp[j] += h;
            ym[j] -= h;
            let fd = (cone.project(&yp).unwrap() - cone.project(&ym).unwrap()) / (2.0 * h);
            for i in 0..3 {
                assert!(
                    (fd[i] - p[(i, j)]).abs() <= 1e-3,
                    "entry ({i},{j}): fd {} vs boundary formula {}",
                    fd[i],
                    p[(i, j)]
                );
            }
        }
    }

    #[test]
    fn soc_vertex_jacobian_is_half_identity() {
        let cone = ConeSpec::single(PrimitiveCone::second_order(3).unwrap());
        let p = cone
            .proj_generalized_jacobian(&dvec(&[0.0, 0.0, 0.0]))
            .unwrap();
        assert_eq!(p, DMatrix::identity(3, 3) * 0.5);
    }

    proptest! {
        #[test]
        fn prop_soc_projection_lands_in_cone(
            t in -5.0f64..5.0,
            z1 in -5.0f64..5.0,
            z2 in -5.0f64..5.0,
        ) {
            let cone = ConeSpec::single(PrimitiveCone::second_order(3).unwrap());
            let p = cone.project(&dvec(&[t, z1, z2])).unwrap();
            let zn = (p[1] * p[1] + p[2] * p[2]).sqrt();
            prop_assert!(zn <= p[0] + 1e-12);
            // Idempotence.
            let pp = cone.project(&p).unwrap();
            prop_assert!((pp - &p).norm() <= 1e-12);
        }

        #[test]
        fn prop_orthant_projection_is_nonexpansive(
            a in proptest::collection::vec(-10.0f64..10.0, 4),
            b in proptest::collection::vec(-10.0f64..10.0, 4),
        ) {
            let cone = ConeSpec::single(PrimitiveCone::nonneg(4).unwrap());
            let av = dvec(&a);
            let bv = dvec(&b);
            let pa = cone.project(&av).unwrap();
            let pb = cone.project(&bv).unwrap();
            prop_assert!((pa - pb).norm() <= (av - bv).norm() + 1e-12);
        }
    }
}
