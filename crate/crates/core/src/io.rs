//! JSON input and output, plus the binary operator dump.
//!
//! Output JSON has sorted keys and writes every float as `{:.16e}`
//! (17 significant digits), so identical inputs give byte-identical files.
//! Basis labels and index functions are 1-based in JSON.
//!
//! Binary dump layout, all little-endian:
//!
//! | offset | size | field                          |
//! |--------|------|--------------------------------|
//! | 0      | 4    | magic `SUPK`                   |
//! | 4      | 2    | version (u16, currently 1)     |
//! | 6      | 2    | operator dimension `m` (u16)   |
//! | 8      | 4    | number of Kraus operators (u32)|
//! | 12     | 4    | number of completion operators (u32) |
//!
//! followed by the embedding, the Kraus operators and the completion
//! operators, each `m * m` f64 values in row-major order.

use std::io::{self, Write};
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::{json, Value};

use crate::basis::{build_basis, GramBasis, MuSpec};
use crate::error::{Error, Result};
use crate::kraus::{PlanOutcome, TransformPlan};
use crate::oracle::OperatorSet;
use crate::state::{make_state, PureState};

pub const DUMP_MAGIC: &[u8; 4] = b"SUPK";
pub const DUMP_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisInput {
    pub d: usize,
    pub mu: MuSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateInput {
    pub coeffs: Vec<f64>,
    #[serde(default)]
    pub normalize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemInput {
    pub basis: BasisInput,
    pub psi: StateInput,
    pub phi: StateInput,
}

#[derive(Debug, Clone)]
pub struct Problem {
    pub basis: Arc<GramBasis>,
    pub psi: PureState,
    pub phi: PureState,
}

pub fn parse_problem(text: &str, tol: f64) -> Result<Problem> {
    let input: ProblemInput = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    problem_from_input(&input, tol)
}

pub fn problem_from_input(input: &ProblemInput, tol: f64) -> Result<Problem> {
    let basis = Arc::new(build_basis(input.basis.d, &input.basis.mu, tol)?);
    let psi = make_state(&basis, &input.psi.coeffs, input.psi.normalize, tol)?;
    let phi = make_state(&basis, &input.phi.coeffs, input.phi.normalize, tol)?;
    Ok(Problem { basis, psi, phi })
}

/// Wraps a formatter so floats print in fixed scientific notation.
struct SciFormatter<F> {
    inner: F,
}

macro_rules! delegate {
    ($($name:ident),*) => {
        $(fn $name<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
            self.inner.$name(w)
        })*
    };
}

impl<F: Formatter> Formatter for SciFormatter<F> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        write!(w, "{v:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        write!(w, "{:.16e}", f64::from(v))
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }

    delegate!(begin_array, end_array, end_array_value, begin_object, end_object, end_object_key, begin_object_value, end_object_value);
}

/// Serializes with sorted keys and fixed float formatting.
pub fn to_canonical_json<T: Serialize>(value: &T, pretty: bool) -> Result<String> {
    let value = serde_json::to_value(value).map_err(|e| Error::Parse(e.to_string()))?;
    let mut out = Vec::new();
    let res = if pretty {
        let mut ser = serde_json::Serializer::with_formatter(&mut out, SciFormatter { inner: PrettyFormatter::with_indent(b"  ") });
        value.serialize(&mut ser)
    } else {
        let mut ser = serde_json::Serializer::with_formatter(&mut out, SciFormatter { inner: serde_json::ser::CompactFormatter });
        value.serialize(&mut ser)
    };
    res.map_err(|e| Error::Parse(e.to_string()))?;
    Ok(String::from_utf8(out).expect("serde_json writes UTF-8"))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn one_based(v: &[usize]) -> Vec<usize> {
    v.iter().map(|i| i + 1).collect()
}

pub fn plan_to_json(plan: &TransformPlan, verified: Option<bool>) -> Value {
    let sup = &plan.support;
    let completion = plan.completion.as_ref().map(|ops| {
        ops.iter()
            .map(|f| json!({"index": f.index, "target": f.target + 1, "matrix": rows(&f.matrix)}))
            .collect::<Vec<_>>()
    });
    let appendix = plan.appendix_b.as_ref().map(|q| {
        json!({
            "x": q.x,
            "y": q.y.iter().map(|(j, l, v)| json!([j, l, v])).collect::<Vec<_>>(),
        })
    });
    json!({
        "dim": plan.dim,
        "support": one_based(sup),
        "embedding": rows(&plan.embedding),
        "index_functions": plan.index_functions.fns.iter().map(|f| one_based(f)).collect::<Vec<_>>(),
        "swap_pairs": plan.index_functions.swap_pairs.iter().map(|(a, b)| [a + 1, b + 1]).collect::<Vec<_>>(),
        "case_signature": plan.case_signature,
        "table_row": plan.table_row,
        "pattern": plan.pattern,
        "source_order": one_based(&plan.source_order),
        "target_order": one_based(&plan.target_order),
        "label_maps": plan.label_maps.iter().map(|g| g.iter().map(|&a| sup[a] + 1).collect::<Vec<_>>()).collect::<Vec<_>>(),
        "probs": plan.probs,
        "kraus_ops": plan.kraus_ops.iter().map(rows).collect::<Vec<_>>(),
        "residual_min_eig": plan.residual_min_eig,
        "appendix_b": appendix,
        "completion": completion,
        "report": plan.report,
        "verified": verified,
    })
}

pub fn outcome_to_json(outcome: &PlanOutcome, verified: Option<bool>) -> Value {
    match outcome {
        PlanOutcome::Planned(p) => plan_to_json(p, verified),
        PlanOutcome::Refused { report, reason } => json!({
            "refused": true,
            "reason": reason,
            "message": reason.to_string(),
            "report": report,
        }),
    }
}

fn matrix_from(v: &Value, what: &str) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = serde_json::from_value(v.clone()).map_err(|e| Error::Parse(format!("{what}: {e}")))?;
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::BadShape(format!("{what} is not square")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// Reads the operator artifacts back from a plan JSON document.
pub fn operators_from_plan_json(text: &str) -> Result<OperatorSet> {
    let v: Value = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if v.get("refused").and_then(Value::as_bool) == Some(true) {
        return Err(Error::Parse("plan file holds a refusal, not a plan".into()));
    }
    let field = |k: &str| v.get(k).ok_or_else(|| Error::Parse(format!("missing field {k:?}")));
    let support: Vec<usize> = serde_json::from_value(field("support")?.clone()).map_err(|e| Error::Parse(format!("support: {e}")))?;
    if support.contains(&0) {
        return Err(Error::Parse("support labels are 1-based".into()));
    }
    let probs: Vec<f64> = serde_json::from_value(field("probs")?.clone()).map_err(|e| Error::Parse(format!("probs: {e}")))?;
    let embedding = matrix_from(field("embedding")?, "embedding")?;
    let kraus_ops = field("kraus_ops")?
        .as_array()
        .ok_or_else(|| Error::Parse("kraus_ops must be an array".into()))?
        .iter()
        .map(|m| matrix_from(m, "kraus_ops"))
        .collect::<Result<Vec<_>>>()?;
    let completion = match v.get("completion") {
        None | Some(Value::Null) => None,
        Some(Value::Array(ops)) => Some(
            ops.iter()
                .map(|f| matrix_from(f.get("matrix").unwrap_or(&Value::Null), "completion"))
                .collect::<Result<Vec<_>>>()?,
        ),
        Some(_) => return Err(Error::Parse("completion must be an array".into())),
    };
    Ok(OperatorSet { support: support.iter().map(|i| i - 1).collect(), embedding, probs, kraus_ops, completion })
}

/// Binary dump of an operator set (see the module docs for the layout).
pub fn encode_ops(ops: &OperatorSet) -> Result<Vec<u8>> {
    let m = ops.embedding.nrows();
    let m16 = u16::try_from(m).map_err(|_| Error::BadShape(format!("dimension {m} does not fit the dump header")))?;
    let free = ops.completion.as_deref().unwrap_or(&[]);
    let mut out = Vec::with_capacity(16 + 8 * m * m * (1 + ops.kraus_ops.len() + free.len()));
    out.extend_from_slice(DUMP_MAGIC);
    out.extend_from_slice(&DUMP_VERSION.to_le_bytes());
    out.extend_from_slice(&m16.to_le_bytes());
    out.extend_from_slice(&(ops.kraus_ops.len() as u32).to_le_bytes());
    out.extend_from_slice(&(free.len() as u32).to_le_bytes());
    for mat in std::iter::once(&ops.embedding).chain(&ops.kraus_ops).chain(free) {
        if mat.shape() != (m, m) {
            return Err(Error::BadShape("operators differ in shape".into()));
        }
        for i in 0..m {
            for j in 0..m {
                out.extend_from_slice(&mat[(i, j)].to_le_bytes());
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpsDump {
    pub embedding: DMatrix<f64>,
    pub kraus_ops: Vec<DMatrix<f64>>,
    pub completion: Vec<DMatrix<f64>>,
}

pub fn decode_ops(bytes: &[u8]) -> Result<OpsDump> {
    if bytes.len() < 16 || &bytes[0..4] != DUMP_MAGIC {
        return Err(Error::Parse("not an operator dump (bad magic)".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != DUMP_VERSION {
        return Err(Error::Parse(format!("unsupported dump version {version}")));
    }
    let m = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
    let nk = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let nf = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let expected = 16 + 8 * m * m * (1 + nk + nf);
    if bytes.len() != expected {
        return Err(Error::Parse(format!("dump has {} bytes, header implies {expected}", bytes.len())));
    }
    let mut chunks = bytes[16..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut next = || DMatrix::from_row_iterator(m, m, chunks.by_ref().take(m * m));
    let embedding = next();
    let kraus_ops = (0..nk).map(|_| next()).collect();
    let completion = (0..nf).map(|_| next()).collect();
    Ok(OpsDump { embedding, kraus_ops, completion })
}

impl OperatorSet {
    /// Replaces the matrices with those of a binary dump.
    pub fn with_dump(mut self, dump: OpsDump) -> OperatorSet {
        self.embedding = dump.embedding;
        self.kraus_ops = dump.kraus_ops;
        self.completion = if dump.completion.is_empty() && self.completion.is_none() { None } else { Some(dump.completion) };
        self
    }
}
