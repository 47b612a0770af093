//! A RASP interpreter and a library of RASP constructions that reproduce
//! softmax attention exactly while only ever using average-hard attention.
//!
//! - [`seqcore`]: token values, sequences, selectors, `select`/`aggregate`.
//! - [`lang`]: parser, evaluator, printer and depth/width metrics.
//! - [`flatten`]: matrices as sequences and the `⟨T, X⟩` encoding.
//! - [`stdlib`]: generators for transpose, softmax, matmul, ReLU, MaxMin,
//!   cofactor/determinant/inverse and the multi-head machinery.
//! - [`simulator`]: pipelines that compute attention layers from the encoding.
//! - [`oracle`]: dense references, comparison reports and a fuzz harness.
//!
//! ```
//! use rasp_attn::flatten::{AttentionSpec, Matrix};
//! use rasp_attn::oracle::{compare_matrices, ref_softmax_attention};
//! use rasp_attn::simulator::{build_u, SimOptions};
//!
//! let a = Matrix::from_rows(&[[0.5, -1.0], [0.25, 2.0]]);
//! let v = Matrix::from_rows(&[[1.0, 0.0], [2.0, -1.0]]);
//! let x = Matrix::from_rows(&[[1.0, 2.0], [-0.5, 0.75]]);
//!
//! let spec = AttentionSpec::new(a.clone(), v.clone())?;
//! let out = build_u(2, 2, 2, SimOptions::default())?.run(&spec, &[x.clone()])?;
//! let expected = ref_softmax_attention(&a, &v, &x, false)?;
//! assert!(compare_matrices(&expected, &out, 1e-9, false)?.pass);
//! # Ok::<(), rasp_attn::Error>(())
//! ```

pub mod flatten;
pub mod lang;
pub mod oracle;
pub mod seqcore;
pub mod simulator;
pub mod stdlib;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Seq(#[from] seqcore::SeqError),
    #[error(transparent)]
    Parse(#[from] lang::ParseError),
    #[error(transparent)]
    Eval(#[from] lang::EvalError),
    #[error(transparent)]
    Layout(#[from] flatten::LayoutError),
    #[error(transparent)]
    Stdlib(#[from] stdlib::StdlibError),
    #[error(transparent)]
    Sim(#[from] simulator::SimError),
    #[error(transparent)]
    Oracle(#[from] oracle::OracleError),
}
