//! Quadratic problem data: quadratic objective with per-block affine or
//! quadratic constraint maps. This is the full expressible range of the
//! problem file format; the evaluators are synthesized from the data.

use nalgebra::{DMatrix, DVector};

use crate::cones::PrimitiveCone;
use crate::error::{Error, Result};

use super::ProblemFunctions;

/// `f(x) = x'Qx/2 + q'x + r0`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticObjective {
    pub q_mat: DMatrix<f64>,
    pub q_vec: DVector<f64>,
    pub r0: f64,
}

/// One scalar constraint row `g_i(x) = x'Qx/2 + q'x + r`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticRow {
    pub q_mat: DMatrix<f64>,
    pub q_vec: DVector<f64>,
    pub r: f64,
}

/// Constraint map of one cone block.
#[derive(Clone, Debug, PartialEq)]
pub enum ConstraintMap {
    /// `g_block(x) = A x - b`.
    Affine { a: DMatrix<f64>, b: DVector<f64> },
    /// One quadratic row per block coordinate.
    Quadratic { rows: Vec<QuadraticRow> },
}

impl ConstraintMap {
    pub fn rows(&self) -> usize {
        match self {
            ConstraintMap::Affine { a, .. } => a.nrows(),
            ConstraintMap::Quadratic { rows } => rows.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintBlock {
    pub map: ConstraintMap,
    pub cone: PrimitiveCone,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticProblem {
    pub n: usize,
    pub objective: QuadraticObjective,
    pub blocks: Vec<ConstraintBlock>,
}

fn require_symmetric(q: &DMatrix<f64>, what: &str) -> Result<()> {
    for i in 0..q.nrows() {
        for j in 0..i {
            if (q[(i, j)] - q[(j, i)]).abs() > 1e-12 {
                return Err(Error::Parse {
                    location: what.to_string(),
                    detail: format!(
                        "matrix is not symmetric: entry ({i},{j}) = {} vs ({j},{i}) = {}",
                        q[(i, j)],
                        q[(j, i)]
                    ),
                });
            }
        }
    }
    Ok(())
}

impl QuadraticProblem {
    /// Validates all dimensions and symmetry requirements.
    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        if self.objective.q_mat.shape() != (n, n) {
            return Err(Error::dim(n * n, self.objective.q_mat.len(), "f.Q"));
        }
        require_symmetric(&self.objective.q_mat, "f.Q")?;
        if self.objective.q_vec.len() != n {
            return Err(Error::dim(n, self.objective.q_vec.len(), "f.q"));
        }
        for (bi, block) in self.blocks.iter().enumerate() {
            let rows = block.cone.vec_len();
            match &block.map {
                ConstraintMap::Affine { a, b } => {
                    if a.shape() != (rows, n) {
                        return Err(Error::dim(
                            rows * n,
                            a.len(),
                            &format!("constraints[{bi}].map.A"),
                        ));
                    }
                    if b.len() != rows {
                        return Err(Error::dim(
                            rows,
                            b.len(),
                            &format!("constraints[{bi}].map.b"),
                        ));
                    }
                }
                ConstraintMap::Quadratic { rows: qrows } => {
                    if qrows.len() != rows {
                        return Err(Error::dim(
                            rows,
                            qrows.len(),
                            &format!("constraints[{bi}].map.rows"),
                        ));
                    }
                    for (ri, row) in qrows.iter().enumerate() {
                        if row.q_mat.shape() != (n, n) {
                            return Err(Error::dim(
                                n * n,
                                row.q_mat.len(),
                                &format!("constraints[{bi}].map.rows[{ri}].Q"),
                            ));
                        }
                        require_symmetric(
                            &row.q_mat,
                            &format!("constraints[{bi}].map.rows[{ri}].Q"),
                        )?;
                        if row.q_vec.len() != n {
                            return Err(Error::dim(
                                n,
                                row.q_vec.len(),
                                &format!("constraints[{bi}].map.rows[{ri}].q"),
                            ));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.blocks.iter().map(|b| b.map.rows()).sum()
    }
}

impl ProblemFunctions for QuadraticProblem {
    fn f_value(&self, x: &DVector<f64>) -> f64 {
        0.5 * (x.transpose() * &self.objective.q_mat * x)[0]
            + self.objective.q_vec.dot(x)
            + self.objective.r0
    }

    fn f_grad(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.objective.q_mat * x + &self.objective.q_vec
    }

    fn f_hess(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.objective.q_mat.clone()
    }

    fn g_value(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.m());
        let mut offset = 0;
        for block in &self.blocks {
            let rows = block.map.rows();
            match &block.map {
                ConstraintMap::Affine { a, b } => {
                    out.rows_mut(offset, rows).copy_from(&(a * x - b));
                }
                ConstraintMap::Quadratic { rows: qrows } => {
                    for (i, row) in qrows.iter().enumerate() {
                        out[offset + i] =
                            0.5 * (x.transpose() * &row.q_mat * x)[0] + row.q_vec.dot(x) + row.r;
                    }
                }
            }
            offset += rows;
        }
        out
    }

    fn g_jac(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.m(), self.n);
        let mut offset = 0;
        for block in &self.blocks {
            let rows = block.map.rows();
            match &block.map {
                ConstraintMap::Affine { a, .. } => {
                    out.view_mut((offset, 0), (rows, self.n)).copy_from(a);
                }
                ConstraintMap::Quadratic { rows: qrows } => {
                    for (i, row) in qrows.iter().enumerate() {
                        let grad = &row.q_mat * x + &row.q_vec;
                        out.view_mut((offset + i, 0), (1, self.n))
                            .copy_from(&grad.transpose());
                    }
                }
            }
            offset += rows;
        }
        out
    }

    fn g_hess_contract(&self, _x: &DVector<f64>, lam: &DVector<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, self.n);
        let mut offset = 0;
        for block in &self.blocks {
            let rows = block.map.rows();
            if let ConstraintMap::Quadratic { rows: qrows } = &block.map {
                for (i, row) in qrows.iter().enumerate() {
                    out += &row.q_mat * lam[offset + i];
                }
            }
            offset += rows;
        }
        out
    }

    fn as_quadratic(&self) -> Option<&QuadraticProblem> {
        Some(self)
    }
}
