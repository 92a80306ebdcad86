//! Problem file format: a JSON document encoding a quadratic objective and
//! per-block affine or quadratic constraint maps, with an optional reference
//! solution.
//!
//! Layout:
//! ```json
//! {
//!   "n": 2,
//!   "f": {"Q": [...row-major n*n...], "q": [...], "r0": 0.0},
//!   "constraints": [
//!     {"map": {"A": [...rows*n...], "b": [...]}, "cone": {"kind": "soc", "dim": 3}},
//!     {"map": {"rows": [{"Q": [...], "q": [...], "r": 0.0}]}, "cone": {"kind": "nonpos", "dim": 1}}
//!   ],
//!   "reference": {"x_bar": [...], "multiplier_set": {"type": "segment", "a": [...], "b": [...]}}
//! }
//! ```
//! Affine maps mean `g(x) = A x - b`; quadratic rows mean
//! `g_i(x) = x'Qx/2 + q'x + r`. Matrices are row-major. Cone kinds are
//! `zero`, `nonneg`, `nonpos`, `soc` (with `dim`), and `psd` (with matrix
//! side `n`).

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cones::{ConeSpec, PrimitiveCone};
use crate::error::{Error, Result};

use super::{
    ConstraintBlock, ConstraintMap, MultiplierSetDesc, ProblemInstance, QuadraticObjective,
    QuadraticProblem, QuadraticRow, ReferenceSolution,
};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    n: usize,
    f: ObjectiveDoc,
    constraints: Vec<ConstraintDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reference: Option<ReferenceDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectiveDoc {
    #[serde(rename = "Q")]
    q: Vec<f64>,
    #[serde(rename = "q")]
    q_lin: Vec<f64>,
    r0: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstraintDoc {
    map: MapDoc,
    cone: ConeDoc,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum MapDoc {
    Affine {
        #[serde(rename = "A")]
        a: Vec<f64>,
        b: Vec<f64>,
    },
    Quadratic {
        rows: Vec<QuadRowDoc>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuadRowDoc {
    #[serde(rename = "Q")]
    q: Vec<f64>,
    #[serde(rename = "q")]
    q_lin: Vec<f64>,
    r: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConeDoc {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReferenceDoc {
    x_bar: Vec<f64>,
    multiplier_set: MultiplierSetDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lambda_bar: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sosc_holds: Option<bool>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum MultiplierSetDoc {
    Singleton {
        lambda: Vec<f64>,
    },
    Segment {
        a: Vec<f64>,
        b: Vec<f64>,
    },
    AffineBox {
        anchor: Vec<f64>,
        /// Row-major `m x columns`.
        basis: Vec<f64>,
        columns: usize,
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
}

fn matrix_from(data: &[f64], rows: usize, cols: usize, location: &str) -> Result<DMatrix<f64>> {
    if data.len() != rows * cols {
        return Err(Error::Parse {
            location: location.to_string(),
            detail: format!(
                "expected {rows}x{cols} = {} entries, got {}",
                rows * cols,
                data.len()
            ),
        });
    }
    Ok(DMatrix::from_row_slice(rows, cols, data))
}

fn cone_from(doc: &ConeDoc, location: &str) -> Result<PrimitiveCone> {
    let need_dim = |field: &Option<usize>| {
        field.ok_or_else(|| Error::Parse {
            location: location.to_string(),
            detail: format!("cone kind '{}' requires field 'dim'", doc.kind),
        })
    };
    match doc.kind.as_str() {
        "zero" => PrimitiveCone::zero(need_dim(&doc.dim)?),
        "nonneg" => PrimitiveCone::nonneg(need_dim(&doc.dim)?),
        "nonpos" => PrimitiveCone::nonpos(need_dim(&doc.dim)?),
        "soc" => PrimitiveCone::second_order(need_dim(&doc.dim)?),
        "psd" => PrimitiveCone::psd(doc.n.ok_or_else(|| Error::Parse {
            location: location.to_string(),
            detail: "cone kind 'psd' requires the matrix side 'n'".into(),
        })?),
        other => Err(Error::Parse {
            location: location.to_string(),
            detail: format!("unknown cone kind '{other}'"),
        }),
    }
    .map_err(|e| match e {
        Error::Parse { .. } => e,
        other => Error::Parse {
            location: location.to_string(),
            detail: other.to_string(),
        },
    })
}

fn cone_to(cone: &PrimitiveCone) -> ConeDoc {
    match *cone {
        PrimitiveCone::Zero { dim } => ConeDoc {
            kind: "zero".into(),
            dim: Some(dim),
            n: None,
        },
        PrimitiveCone::NonnegOrthant { dim } => ConeDoc {
            kind: "nonneg".into(),
            dim: Some(dim),
            n: None,
        },
        PrimitiveCone::NonposOrthant { dim } => ConeDoc {
            kind: "nonpos".into(),
            dim: Some(dim),
            n: None,
        },
        PrimitiveCone::SecondOrder { dim } => ConeDoc {
            kind: "soc".into(),
            dim: Some(dim),
            n: None,
        },
        PrimitiveCone::Psd { n } => ConeDoc {
            kind: "psd".into(),
            dim: None,
            n: Some(n),
        },
    }
}

/// Parses a problem document, synthesizing evaluators from the quadratic
/// data. The reference is absent unless supplied by the document.
pub fn parse_problem(text: &str) -> Result<ProblemInstance> {
    let doc: ProblemDoc = serde_json::from_str(text).map_err(|e| Error::Parse {
        location: format!("line {}, column {}", e.line(), e.column()),
        detail: e.to_string(),
    })?;
    let n = doc.n;
    if n == 0 {
        return Err(Error::Parse {
            location: "n".into(),
            detail: "primal dimension must be >= 1".into(),
        });
    }

    let objective = QuadraticObjective {
        q_mat: matrix_from(&doc.f.q, n, n, "f.Q")?,
        q_vec: DVector::from_column_slice(&doc.f.q_lin),
        r0: doc.f.r0,
    };

    let mut blocks = Vec::with_capacity(doc.constraints.len());
    for (bi, cdoc) in doc.constraints.iter().enumerate() {
        let cone = cone_from(&cdoc.cone, &format!("constraints[{bi}].cone"))?;
        let rows = cone.vec_len();
        let map = match &cdoc.map {
            MapDoc::Affine { a, b } => ConstraintMap::Affine {
                a: matrix_from(a, rows, n, &format!("constraints[{bi}].map.A"))?,
                b: DVector::from_column_slice(b),
            },
            MapDoc::Quadratic { rows: row_docs } => ConstraintMap::Quadratic {
                rows: row_docs
                    .iter()
                    .enumerate()
                    .map(|(ri, rd)| {
                        Ok(QuadraticRow {
                            q_mat: matrix_from(
                                &rd.q,
                                n,
                                n,
                                &format!("constraints[{bi}].map.rows[{ri}].Q"),
                            )?,
                            q_vec: DVector::from_column_slice(&rd.q_lin),
                            r: rd.r,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?,
            },
        };
        blocks.push(ConstraintBlock { map, cone });
    }
    if blocks.is_empty() {
        return Err(Error::Parse {
            location: "constraints".into(),
            detail: "at least one constraint block is required".into(),
        });
    }

    let data = QuadraticProblem {
        n,
        objective,
        blocks,
    };
    data.validate()?;
    let cone = ConeSpec::new(data.blocks.iter().map(|b| b.cone).collect())?;
    let m = cone.total_dim();

    let reference = match doc.reference {
        None => None,
        Some(rdoc) => {
            let multiplier_set = match rdoc.multiplier_set {
                MultiplierSetDoc::Singleton { lambda } => {
                    MultiplierSetDesc::Singleton(DVector::from_column_slice(&lambda))
                }
                MultiplierSetDoc::Segment { a, b } => MultiplierSetDesc::Segment {
                    a: DVector::from_column_slice(&a),
                    b: DVector::from_column_slice(&b),
                },
                MultiplierSetDoc::AffineBox {
                    anchor,
                    basis,
                    columns,
                    lower,
                    upper,
                } => MultiplierSetDesc::AffineBox {
                    anchor: DVector::from_column_slice(&anchor),
                    basis: matrix_from(&basis, m, columns, "reference.multiplier_set.basis")?,
                    lower,
                    upper,
                },
            };
            let mut reference = ReferenceSolution::new(
                DVector::from_column_slice(&rdoc.x_bar),
                multiplier_set,
                rdoc.sosc_holds.unwrap_or(false),
            );
            if let Some(lb) = rdoc.lambda_bar {
                reference = reference.with_lambda_bar(DVector::from_column_slice(&lb));
            }
            Some(reference)
        }
    };

    let name = doc.name.unwrap_or_else(|| "file".to_string());
    ProblemInstance::new(name, n, cone, Arc::new(data), reference)
}

/// Serializes an instance back to the file format. Only instances backed by
/// quadratic data are expressible.
pub fn problem_to_json(problem: &ProblemInstance) -> Result<String> {
    let data = problem.quadratic_data().ok_or_else(|| {
        Error::InvalidArgument(format!(
            "problem '{}' is not expressible in the quadratic file format",
            problem.name()
        ))
    })?;
    let doc = ProblemDoc {
        name: Some(problem.name().to_string()),
        n: data.n,
        f: ObjectiveDoc {
            q: data.objective.q_mat.transpose().as_slice().to_vec(),
            q_lin: data.objective.q_vec.as_slice().to_vec(),
            r0: data.objective.r0,
        },
        constraints: data
            .blocks
            .iter()
            .map(|block| ConstraintDoc {
                map: match &block.map {
                    ConstraintMap::Affine { a, b } => MapDoc::Affine {
                        a: a.transpose().as_slice().to_vec(),
                        b: b.as_slice().to_vec(),
                    },
                    ConstraintMap::Quadratic { rows } => MapDoc::Quadratic {
                        rows: rows
                            .iter()
                            .map(|row| QuadRowDoc {
                                q: row.q_mat.transpose().as_slice().to_vec(),
                                q_lin: row.q_vec.as_slice().to_vec(),
                                r: row.r,
                            })
                            .collect(),
                    },
                },
                cone: cone_to(&block.cone),
            })
            .collect(),
        reference: problem.reference().map(|r| ReferenceDoc {
            x_bar: r.x_bar.as_slice().to_vec(),
            multiplier_set: match &r.multiplier_set {
                MultiplierSetDesc::Singleton(v) => MultiplierSetDoc::Singleton {
                    lambda: v.as_slice().to_vec(),
                },
                MultiplierSetDesc::Segment { a, b } => MultiplierSetDoc::Segment {
                    a: a.as_slice().to_vec(),
                    b: b.as_slice().to_vec(),
                },
                MultiplierSetDesc::AffineBox {
                    anchor,
                    basis,
                    lower,
                    upper,
                } => MultiplierSetDoc::AffineBox {
                    anchor: anchor.as_slice().to_vec(),
                    basis: basis.transpose().as_slice().to_vec(),
                    columns: basis.ncols(),
                    lower: lower.clone(),
                    upper: upper.clone(),
                },
            },
            lambda_bar: Some(r.lambda_bar.as_slice().to_vec()),
            sosc_holds: Some(r.sosc_holds),
        }),
    };
    serde_json::to_string_pretty(&doc).map_err(|e| Error::Parse {
        location: "serialize".into(),
        detail: e.to_string(),
    })
}
