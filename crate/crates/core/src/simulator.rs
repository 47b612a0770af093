//! The universal simulator: generated constructions wired into pipelines that
//! compute an attention layer's output from its encoded `⟨T, X⟩` input.
//!
//! Every stage evaluates one [`GeneratedOp`] on the concatenation of its
//! input buffers. Matrix products are followed by a contraction that drops
//! their zero suffix, so the next stage sees exactly the operands it expects.
//! With several heads each stage runs the multi-head form of its op and every
//! buffer holds the heads back to back.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::flatten::{
    contract_blocks, embed_pad, encode_heads, AttentionSpec, LayoutError, Matrix,
};
use crate::seqcore::Sequence;
use crate::stdlib::{
    gen_inverse3, gen_matmul_with_inner, gen_multi_head, gen_relu, gen_scale, gen_softmax,
    gen_softmax_masked, gen_transpose, GeneratedOp, OpKind, StdlibError, Style,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(
        "order (n={n}, d={d}, d_v={d_v}) needs n <= min(d, d_v) so that every matrix \
         product fits in its length-preserved sequence (inner * (r + c) >= r * c)"
    )]
    Order { n: usize, d: usize, d_v: usize },
    #[error("stage `{stage}` is infeasible: {source}")]
    Infeasible { stage: String, source: StdlibError },
    #[error("stage `{stage}`: {source}")]
    Stage { stage: String, source: StdlibError },
    #[error("stage `{stage}`: matrix is singular")]
    Singular { stage: String },
    #[error("spec does not fit the pipeline: {0}")]
    Spec(String),
    #[error(transparent)]
    Layout(#[from] LayoutError),
}

pub type Result<T> = std::result::Result<T, SimError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Attention,
    Encoder,
    MultiHead,
    Inverse,
    Linear,
    Linformer,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Attention,
        Variant::Encoder,
        Variant::MultiHead,
        Variant::Inverse,
        Variant::Linear,
        Variant::Linformer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Attention => "attention",
            Variant::Encoder => "encoder",
            Variant::MultiHead => "multihead",
            Variant::Inverse => "inverse",
            Variant::Linear => "linear",
            Variant::Linformer => "linformer",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown variant `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct SimOptions {
    /// Divide scores by `√d` before the softmax.
    pub scaled: bool,
    pub style: Style,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stage {
    /// Name of the buffer this stage writes.
    pub name: String,
    #[serde(skip)]
    pub op: GeneratedOp,
    /// Buffers concatenated, in order, to form the stage input.
    pub inputs: Vec<String>,
    /// Per-head tokens kept by the contraction after the op, if any.
    pub keep: Option<usize>,
    /// Per-head shape of the buffer written.
    pub shape: (usize, usize),
}

/// An ordered list of stages over named buffers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pipeline {
    variant: Variant,
    heads: usize,
    options: SimOptions,
    /// Buffers read from the encoded input, with per-head shapes.
    inputs: BTreeMap<String, (usize, usize)>,
    stages: Vec<Stage>,
    output: String,
}

struct Builder {
    heads: usize,
    style: Style,
    shapes: BTreeMap<String, (usize, usize)>,
    inputs: BTreeMap<String, (usize, usize)>,
    stages: Vec<Stage>,
}

impl Builder {
    fn new(heads: usize, style: Style) -> Self {
        Self {
            heads,
            style,
            shapes: BTreeMap::new(),
            inputs: BTreeMap::new(),
            stages: Vec::new(),
        }
    }

    fn input(&mut self, name: &str, shape: (usize, usize)) {
        self.shapes.insert(name.into(), shape);
        self.inputs.insert(name.into(), shape);
    }

    fn shape(&self, name: &str) -> (usize, usize) {
        self.shapes[name]
    }

    fn push(
        &mut self,
        name: &str,
        op: GeneratedOp,
        inputs: &[&str],
        keep: Option<usize>,
        shape: (usize, usize),
    ) -> Result<()> {
        let lens: Vec<usize> = inputs
            .iter()
            .map(|i| {
                let (r, c) = self.shape(i);
                r * c
            })
            .collect();
        let op = gen_multi_head(&op, self.heads, &lens).map_err(|source| SimError::Stage {
            stage: name.into(),
            source,
        })?;
        self.shapes.insert(name.into(), shape);
        self.stages.push(Stage {
            name: name.into(),
            op,
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            keep,
            shape,
        });
        Ok(())
    }

    fn matmul(&mut self, name: &str, a: &str, b: &str) -> Result<()> {
        let ((r, k), (k2, c)) = (self.shape(a), self.shape(b));
        if k != k2 {
            return Err(SimError::Spec(format!(
                "`{a}` is {r}x{k} but `{b}` is {k2}x{c}"
            )));
        }
        let op =
            gen_matmul_with_inner(r, k, c, self.style).map_err(|source| SimError::Infeasible {
                stage: name.into(),
                source,
            })?;
        self.push(name, op, &[a, b], Some(r * c), (r, c))
    }

    fn transpose(&mut self, name: &str, a: &str) -> Result<()> {
        let (r, c) = self.shape(a);
        let op = gen_transpose(r, Some(c), self.style).map_err(|source| SimError::Stage {
            stage: name.into(),
            source,
        })?;
        self.push(name, op, &[a], None, (c, r))
    }

    fn softmax(&mut self, name: &str, a: &str, keep_cols: Option<usize>) -> Result<()> {
        let (r, c) = self.shape(a);
        let op = match keep_cols {
            Some(m) if m < c => gen_softmax_masked(r, m, self.style),
            _ => gen_softmax(r, self.style),
        }
        .map_err(|source| SimError::Stage {
            stage: name.into(),
            source,
        })?;
        self.push(name, op, &[a], None, (r, c))
    }

    fn unary(
        &mut self,
        name: &str,
        a: &str,
        op: std::result::Result<GeneratedOp, StdlibError>,
    ) -> Result<()> {
        let op = op.map_err(|source| SimError::Stage {
            stage: name.into(),
            source,
        })?;
        let shape = self.shape(a);
        self.push(name, op, &[a], None, shape)
    }

    fn finish(self, variant: Variant, options: SimOptions, output: &str) -> Pipeline {
        Pipeline {
            variant,
            heads: self.heads,
            options,
            inputs: self.inputs,
            stages: self.stages,
            output: output.into(),
        }
    }
}

fn check_order(n: usize, d: usize, d_v: usize) -> Result<()> {
    if n == 0 || d == 0 || d_v == 0 {
        return Err(SimError::Spec("orders must be positive".into()));
    }
    if n > d.min(d_v) {
        return Err(SimError::Order { n, d, d_v });
    }
    Ok(())
}

struct AttentionPlan {
    n: usize,
    d: usize,
    d_v: usize,
    ffn: Option<(usize, usize)>,
    heads: usize,
    keep_cols: Option<usize>,
    scale_dim: usize,
}

fn attention_pipeline(plan: AttentionPlan, options: SimOptions) -> Result<Pipeline> {
    let AttentionPlan {
        n,
        d,
        d_v,
        ffn,
        heads,
        keep_cols,
        scale_dim,
    } = plan;
    check_order(n, d, d_v)?;
    if heads == 0 {
        return Err(SimError::Spec("at least one head is required".into()));
    }
    let mut b = Builder::new(heads, options.style);
    b.input("X", (n, d));
    b.input("A", (d, d));
    b.input("V", (d, d_v));
    b.matmul("XA", "X", "A")?;
    b.transpose("Xt", "X")?;
    b.matmul("S", "XA", "Xt")?;
    let scores = if options.scaled {
        b.unary("S_scaled", "S", gen_scale(1.0 / (scale_dim as f64).sqrt()))?;
        "S_scaled"
    } else {
        "S"
    };
    b.softmax("P", scores, keep_cols)?;
    b.matmul("XV", "X", "V")?;
    b.matmul("Y", "P", "XV")?;
    let (variant, output) = match ffn {
        None => (
            if heads > 1 {
                Variant::MultiHead
            } else {
                Variant::Attention
            },
            "Y",
        ),
        Some((d1, d2)) => {
            if d1 == 0 || d2 == 0 {
                return Err(SimError::Spec(
                    "feed-forward dimensions must be positive".into(),
                ));
            }
            b.input("W1", (d_v, d1));
            b.input("W2", (d1, d2));
            b.matmul("H", "Y", "W1")?;
            b.unary("R", "H", gen_relu())?;
            b.matmul("Out", "R", "W2")?;
            (Variant::Encoder, "Out")
        }
    };
    Ok(b.finish(variant, options, output))
}

/// `σ(X A Xᵀ) X V` for one head of order `(n, d, d_v)`.
pub fn build_u(n: usize, d: usize, d_v: usize, options: SimOptions) -> Result<Pipeline> {
    attention_pipeline(
        AttentionPlan {
            n,
            d,
            d_v,
            ffn: None,
            heads: 1,
            keep_cols: None,
            scale_dim: d,
        },
        options,
    )
}

/// [`build_u`] followed by `ReLU(· W₁) W₂`.
pub fn build_encoder_u(
    n: usize,
    d: usize,
    d_v: usize,
    d1: usize,
    d2: usize,
    options: SimOptions,
) -> Result<Pipeline> {
    build_multi_head_encoder_u(n, d, d_v, d1, d2, 1, options)
}

/// `heads` independent copies of [`build_u`] over stacked inputs.
pub fn build_multi_head_u(
    n: usize,
    d: usize,
    d_v: usize,
    heads: usize,
    options: SimOptions,
) -> Result<Pipeline> {
    attention_pipeline(
        AttentionPlan {
            n,
            d,
            d_v,
            ffn: None,
            heads,
            keep_cols: None,
            scale_dim: d,
        },
        options,
    )
}

/// Multi-head encoder; the feed-forward weights are shared by every head.
pub fn build_multi_head_encoder_u(
    n: usize,
    d: usize,
    d_v: usize,
    d1: usize,
    d2: usize,
    heads: usize,
    options: SimOptions,
) -> Result<Pipeline> {
    attention_pipeline(
        AttentionPlan {
            n,
            d,
            d_v,
            ffn: Some((d1, d2)),
            heads,
            keep_cols: None,
            scale_dim: d,
        },
        options,
    )
}

/// Alternative wiring for 3×3 `A`, `V`: the last attention receives `XAV` and
/// uses `((AV)ᵀV)⁻¹` and `(AV)⁻¹V`, both computed from the input.
pub fn build_inverse_u(n: usize, options: SimOptions) -> Result<Pipeline> {
    check_order(n, 3, 3)?;
    let mut b = Builder::new(1, options.style);
    b.input("X", (n, 3));
    b.input("A", (3, 3));
    b.input("V", (3, 3));
    b.matmul("AV", "A", "V")?;
    b.matmul("XAV", "X", "AV")?;
    b.transpose("AVt", "AV")?;
    b.matmul("G", "AVt", "V")?;
    b.unary("G_inv", "G", gen_inverse3())?;
    b.unary("AV_inv", "AV", gen_inverse3())?;
    b.matmul("V_final", "AV_inv", "V")?;
    b.matmul("XAV_G", "XAV", "G_inv")?;
    b.transpose("XAVt", "XAV")?;
    b.matmul("S", "XAV_G", "XAVt")?;
    let scores = if options.scaled {
        b.unary("S_scaled", "S", gen_scale(1.0 / 3f64.sqrt()))?;
        "S_scaled"
    } else {
        "S"
    };
    b.softmax("P", scores, None)?;
    b.matmul("XAV_V", "XAV", "V_final")?;
    b.matmul("Y", "P", "XAV_V")?;
    Ok(b.finish(Variant::Inverse, options, "Y"))
}

/// `(X W_Q)(X W_K)ᵀ X V` with no normalization; `W_Q`, `W_K` are `d×d_k`.
pub fn build_linear_attention(
    n: usize,
    d: usize,
    d_v: usize,
    d_k: usize,
    options: SimOptions,
) -> Result<Pipeline> {
    check_order(n, d, d_v)?;
    let mut b = Builder::new(1, options.style);
    b.input("X", (n, d));
    b.input("V", (d, d_v));
    b.input("WQ", (d, d_k));
    b.input("WK", (d, d_k));
    b.matmul("Q", "X", "WQ")?;
    b.matmul("K", "X", "WK")?;
    b.transpose("Kt", "K")?;
    b.matmul("S", "Q", "Kt")?;
    b.matmul("XV", "X", "V")?;
    b.matmul("Y", "S", "XV")?;
    Ok(b.finish(Variant::Linear, options, "Y"))
}

/// `σ((X W_Q)(E X W_K)ᵀ) F X V` with `E`, `F` of shape `k×n`.
pub fn build_linformer(
    n: usize,
    d: usize,
    d_v: usize,
    d_k: usize,
    k: usize,
    options: SimOptions,
) -> Result<Pipeline> {
    check_order(n, d, d_v)?;
    let mut b = Builder::new(1, options.style);
    b.input("X", (n, d));
    b.input("V", (d, d_v));
    b.input("WQ", (d, d_k));
    b.input("WK", (d, d_k));
    b.input("E", (k, n));
    b.input("F", (k, n));
    b.matmul("Q", "X", "WQ")?;
    b.matmul("K", "X", "WK")?;
    b.matmul("EK", "E", "K")?;
    b.transpose("EKt", "EK")?;
    b.matmul("S", "Q", "EKt")?;
    let scores = if options.scaled {
        b.unary("S_scaled", "S", gen_scale(1.0 / (d_k as f64).sqrt()))?;
        "S_scaled"
    } else {
        "S"
    };
    b.softmax("P", scores, None)?;
    b.matmul("XV", "X", "V")?;
    b.matmul("FXV", "F", "XV")?;
    b.matmul("Y", "P", "FXV")?;
    Ok(b.finish(Variant::Linformer, options, "Y"))
}

impl Pipeline {
    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn inputs(&self) -> &BTreeMap<String, (usize, usize)> {
        &self.inputs
    }

    /// Per-head shape of the final output.
    pub fn output_shape(&self) -> (usize, usize) {
        self.stages
            .iter()
            .find(|s| s.name == self.output)
            .map(|s| s.shape)
            .expect("output is written by a stage")
    }

    /// Ordered stage list with contracts and metrics, for inspection.
    pub fn manifest(&self) -> Value {
        let stages: Vec<Value> = self
            .stages
            .iter()
            .map(|s| {
                json!({
                    "name": s.name,
                    "op": s.op.kind(),
                    "inputs": s.inputs,
                    "keep_per_head": s.keep,
                    "shape": [s.shape.0, s.shape.1],
                    "metrics": s.op.metrics(),
                })
            })
            .collect();
        let inputs: BTreeMap<&String, [usize; 2]> =
            self.inputs.iter().map(|(k, v)| (k, [v.0, v.1])).collect();
        json!({
            "variant": self.variant,
            "heads": self.heads,
            "options": self.options,
            "inputs": inputs,
            "stages": stages,
            "output": self.output,
        })
    }

    /// Encodes `⟨spec, X⟩` and runs every stage; one input per head. The
    /// result stacks the heads' outputs vertically.
    pub fn run(&self, spec: &AttentionSpec, xs: &[Matrix]) -> Result<Matrix> {
        let heads = self.run_heads(spec, xs)?;
        let cols = heads[0].cols();
        let data: Vec<f64> = heads
            .iter()
            .flat_map(|m| m.data().iter().copied())
            .collect();
        Ok(Matrix::new(data.len() / cols, cols, data)?)
    }

    /// [`Pipeline::run`] with each head's output kept separate.
    pub fn run_heads(&self, spec: &AttentionSpec, xs: &[Matrix]) -> Result<Vec<Matrix>> {
        if spec.head_count() != self.heads {
            return Err(SimError::Spec(format!(
                "pipeline has {} heads, spec has {}",
                self.heads,
                spec.head_count()
            )));
        }
        let encoded = encode_heads(spec, xs)?;
        let mut buffers: BTreeMap<String, Sequence> = BTreeMap::new();
        for (name, &(rows, cols)) in &self.inputs {
            let mut parts = Vec::with_capacity(self.heads);
            for h in 0..self.heads {
                let segment = match name.as_str() {
                    "X" | "A" | "V" if self.heads > 1 => format!("{name}{}", h + 1),
                    _ => name.clone(),
                };
                let m = encoded
                    .segments
                    .read(&encoded.sequence, &segment)
                    .map_err(|_| SimError::Spec(format!("spec has no `{name}` matrix")))?;
                if m.shape() != (rows, cols) {
                    return Err(SimError::Spec(format!(
                        "`{name}` is {}x{}, pipeline expects {rows}x{cols}",
                        m.rows(),
                        m.cols()
                    )));
                }
                parts.push(m.to_sequence());
            }
            let refs: Vec<&Sequence> = parts.iter().collect();
            buffers.insert(name.clone(), Sequence::concat(&refs).expect("non-empty"));
        }

        for stage in &self.stages {
            let refs: Vec<&Sequence> = stage.inputs.iter().map(|i| &buffers[i]).collect();
            let input = Sequence::concat(&refs).expect("non-empty");
            let out =
                stage
                    .op
                    .apply(&input)
                    .map_err(|source| match (&source, stage.op.kind()) {
                        (StdlibError::Eval(_), OpKind::Inverse3) => SimError::Singular {
                            stage: stage.name.clone(),
                        },
                        _ => SimError::Stage {
                            stage: stage.name.clone(),
                            source,
                        },
                    })?;
            let out = match stage.keep {
                Some(keep) => contract_blocks(&out, out.len() / self.heads, keep)?,
                None => out,
            };
            buffers.insert(stage.name.clone(), out);
        }

        let (rows, cols) = self.output_shape();
        let values = buffers[&self.output].values();
        Ok(values
            .chunks(rows * cols)
            .map(|chunk| Matrix::new(rows, cols, chunk.to_vec()).expect("shape checked"))
            .collect())
    }
}

/// Builds the pipeline matching `spec` for `variant` and runs it on `xs`
/// (one input per head, or a single input replicated across heads).
pub fn simulate(
    variant: Variant,
    spec: &AttentionSpec,
    xs: &[Matrix],
    options: SimOptions,
) -> Result<Matrix> {
    let x0 = xs
        .first()
        .ok_or_else(|| SimError::Spec("no input matrix given".into()))?;
    let xs: Vec<Matrix> = if xs.len() == 1 {
        vec![x0.clone(); spec.head_count()]
    } else {
        xs.to_vec()
    };
    let (n, d, d_v, h) = (x0.rows(), spec.d(), spec.d_v(), spec.head_count());
    let single = |what: &str| {
        if h != 1 {
            return Err(SimError::Spec(format!(
                "the {what} variant takes a single head"
            )));
        }
        Ok(())
    };
    let pipeline =
        match variant {
            Variant::Attention | Variant::MultiHead => build_multi_head_u(n, d, d_v, h, options)?,
            Variant::Encoder => {
                let (w1, w2) = spec.w1.as_ref().zip(spec.w2.as_ref()).ok_or_else(|| {
                    SimError::Spec("the encoder variant needs `W1` and `W2`".into())
                })?;
                build_multi_head_encoder_u(n, d, d_v, w1.cols(), w2.cols(), h, options)?
            }
            Variant::Inverse => {
                single("inverse")?;
                if (d, d_v) != (3, 3) {
                    return Err(SimError::Spec(
                        "the inverse variant needs 3x3 `A` and `V`".into(),
                    ));
                }
                build_inverse_u(n, options)?
            }
            Variant::Linear | Variant::Linformer => {
                single(variant.name())?;
                let mut spec = spec.clone();
                // Without explicit projections, A itself is W_Q W_Kᵀ with W_K = I.
                if spec.wq.is_none() && spec.wk.is_none() {
                    spec.wq = Some(spec.a().clone());
                    spec.wk = Some(Matrix::identity(d));
                }
                let (wq, wk) =
                    spec.wq.as_ref().zip(spec.wk.as_ref()).ok_or_else(|| {
                        SimError::Spec("give both `WQ` and `WK` or neither".into())
                    })?;
                if wq.shape() != wk.shape() {
                    return Err(SimError::Spec(
                        "`WQ` and `WK` must have the same shape".into(),
                    ));
                }
                let d_k = wq.cols();
                let pipeline = if variant == Variant::Linear {
                    build_linear_attention(n, d, d_v, d_k, options)?
                } else {
                    let k = spec
                        .e
                        .as_ref()
                        .ok_or_else(|| {
                            SimError::Spec("the linformer variant needs `E` and `F`".into())
                        })?
                        .rows();
                    build_linformer(n, d, d_v, d_k, k, options)?
                };
                return pipeline.run(&spec, &xs);
            }
        };
    pipeline.run(spec, &xs)
}

/// Result of running a small instance inside a larger host.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Embedding {
    /// Upper-left `m×e_v` block of the host output.
    pub block: Matrix,
    /// Full host output.
    pub host: Matrix,
    pub masked: bool,
}

/// Pads a single-head `spec` of order `(m, e, e_v)` into the host order
/// `(n, d, d_v)`, runs the host simulator and reads back the original block.
///
/// Zero-padded key positions still add `exp(0)` to every softmax row when
/// `n > m`; with `mask_padding` the softmax only sees the first `m` columns.
pub fn embed_simulate(
    spec: &AttentionSpec,
    x: &Matrix,
    host: (usize, usize, usize),
    mask_padding: bool,
    options: SimOptions,
) -> Result<Embedding> {
    if spec.head_count() != 1 {
        return Err(SimError::Spec("embedding takes a single head".into()));
    }
    let (n, d, d_v) = host;
    let (m, e_v) = (x.rows(), spec.d_v());
    let (big, x_big) = embed_pad(spec, x, host)?;
    let pipeline = attention_pipeline(
        AttentionPlan {
            n,
            d,
            d_v,
            ffn: None,
            heads: 1,
            keep_cols: mask_padding.then_some(m),
            scale_dim: spec.d(),
        },
        options,
    )?;
    let out = pipeline.run(&big, &[x_big])?;
    Ok(Embedding {
        block: Matrix::from_fn(m, e_v, |i, j| out.get(i, j)),
        host: out,
        masked: mask_padding,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(a: Matrix, v: Matrix) -> AttentionSpec {
        AttentionSpec::new(a, v).unwrap()
    }

    #[test]
    fn zero_scores_average_rows() {
        let p = build_u(2, 2, 2, SimOptions::default()).unwrap();
        let out = p
            .run(
                &spec(Matrix::zeros(2, 2), Matrix::identity(2)),
                &[Matrix::identity(2)],
            )
            .unwrap();
        for v in out.data() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn order_precondition() {
        assert!(matches!(
            build_u(4, 3, 3, SimOptions::default()),
            Err(SimError::Order { n: 4, d: 3, d_v: 3 })
        ));
        let msg = build_u(4, 3, 3, SimOptions::default())
            .unwrap_err()
            .to_string();
        assert!(msg.contains("n <= min(d, d_v)"));
    }

    #[test]
    fn one_token_returns_xv() {
        let p = build_u(1, 1, 1, SimOptions::default()).unwrap();
        let out = p
            .run(
                &spec(Matrix::from_rows(&[[5.0]]), Matrix::from_rows(&[[3.0]])),
                &[Matrix::from_rows(&[[2.0]])],
            )
            .unwrap();
        assert_eq!(out.data(), &[6.0]);
    }

    #[test]
    fn manifest_lists_stages() {
        let p = build_encoder_u(2, 2, 2, 2, 2, SimOptions::default()).unwrap();
        let names: Vec<&str> = p.stages().iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["XA", "Xt", "S", "P", "XV", "Y", "H", "R", "Out"]);
        let m = p.manifest();
        assert_eq!(m["variant"], "encoder");
        assert_eq!(m["stages"][0]["op"]["op"], "matmul");
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("nope".parse::<Variant>().is_err());
    }

    #[test]
    fn missing_ffn_weights() {
        let s = spec(Matrix::identity(2), Matrix::identity(2));
        let err = simulate(
            Variant::Encoder,
            &s,
            &[Matrix::identity(2)],
            SimOptions::default(),
        );
        assert!(matches!(err, Err(SimError::Spec(_))));
    }
}
