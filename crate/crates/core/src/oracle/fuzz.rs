//! Seeded random instances and the invariant checks run by `verify`/`fuzz`.
//!
//! Integers are drawn uniformly from `[-9, 9]` and reals from `[-3, 3]`;
//! nonsingular matrices are found by rejecting `|det| < 1e-3`. A check's
//! result depends only on its name, the case count and the seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::*;
use crate::flatten::{AttentionSpec, HeadSpec, Matrix};
use crate::seqcore::Sequence;
use crate::simulator::{
    build_encoder_u, build_inverse_u, build_linear_attention, build_linformer, build_multi_head_u,
    build_u, embed_simulate, SimOptions, Variant,
};
use crate::stdlib::{
    gen_cofactor3, gen_determinant3, gen_identify, gen_inverse3, gen_matmul_with_inner, gen_maxmin,
    gen_multi_head, gen_shift, gen_softmax, gen_transpose, GeneratedOp, Style,
};

pub const DEFAULT_SEED: u64 = 20_240_601;

/// Deterministic instance generator.
pub struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn int(&mut self) -> f64 {
        self.rng.gen_range(-9i64..=9) as f64
    }

    pub fn real(&mut self) -> f64 {
        self.rng.gen_range(-3.0..=3.0)
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }

    pub fn int_matrix(&mut self, rows: usize, cols: usize) -> Matrix {
        let data = (0..rows * cols).map(|_| self.int()).collect();
        Matrix::new(rows, cols, data).expect("positive shape")
    }

    pub fn real_matrix(&mut self, rows: usize, cols: usize) -> Matrix {
        let data = (0..rows * cols).map(|_| self.real()).collect();
        Matrix::new(rows, cols, data).expect("positive shape")
    }

    pub fn int_seq(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.int()).collect()
    }

    /// A 3×3 matrix with `|det| >= 1e-3`.
    pub fn nonsingular3(&mut self, integer: bool) -> Matrix {
        loop {
            let m = if integer {
                self.int_matrix(3, 3)
            } else {
                self.real_matrix(3, 3)
            };
            if ref_det3_leibniz(&m).expect("3x3").abs() >= 1e-3 {
                return m;
            }
        }
    }
}

/// Orders for one verification run; fields a variant does not use are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Orders {
    pub n: usize,
    pub d: usize,
    pub d_v: usize,
    pub d1: usize,
    pub d2: usize,
    pub heads: usize,
    pub d_k: usize,
    pub k: usize,
}

impl Default for Orders {
    fn default() -> Self {
        Self {
            n: 2,
            d: 2,
            d_v: 2,
            d1: 2,
            d2: 2,
            heads: 1,
            d_k: 2,
            k: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckSummary {
    pub name: String,
    pub cases: usize,
    pub failures: usize,
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    pub first_failure: Option<String>,
}

impl CheckSummary {
    fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            cases: 0,
            failures: 0,
            max_abs_error: 0.0,
            max_rel_error: 0.0,
            first_failure: None,
        }
    }

    pub fn pass(&self) -> bool {
        self.failures == 0
    }

    fn fail(&mut self, message: String) {
        self.failures += 1;
        self.first_failure.get_or_insert(message);
    }

    fn record(&mut self, case: usize, expected: &[f64], actual: &[f64], tol: f64, exact: bool) {
        self.cases += 1;
        match compare(expected, actual, tol, exact) {
            Ok(r) => {
                self.max_abs_error = self.max_abs_error.max(r.max_abs_error);
                self.max_rel_error = self.max_rel_error.max(r.max_rel_error);
                if let Some(m) = r.first_mismatch {
                    self.fail(format!(
                        "case {case}: position {} expected {} got {}",
                        m.position, m.expected, m.actual
                    ));
                }
            }
            Err(e) => self.fail(format!("case {case}: {e}")),
        }
    }

    fn error(&mut self, case: usize, e: impl std::fmt::Display) {
        self.cases += 1;
        self.fail(format!("case {case}: {e}"));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FuzzSummary {
    pub seed: u64,
    pub cases_per_check: usize,
    pub total_cases: usize,
    pub total_failures: usize,
    pub checks: Vec<CheckSummary>,
}

impl FuzzSummary {
    pub fn pass(&self) -> bool {
        self.total_failures == 0
    }
}

/// Names accepted by [`run_check`].
pub const CHECKS: &[&str] = &[
    "transpose",
    "softmax",
    "matmul",
    "maxmin",
    "cofactor",
    "determinant",
    "inverse",
    "identify",
    "shift",
    "multi_head_op",
    "attention",
    "encoder",
    "multihead",
    "inverse_attention",
    "embed",
    "linear",
    "linformer",
];

fn check_seed(seed: u64, name: &str) -> u64 {
    name.bytes().fold(seed, |acc, b| {
        acc.wrapping_mul(0x100_0000_01b3).wrapping_add(b as u64)
    })
}

fn seq(values: &[f64]) -> Sequence {
    Sequence::from_f64s(values).expect("non-empty integers")
}

fn concat(ms: &[&Matrix]) -> Vec<f64> {
    ms.iter().flat_map(|m| m.data().iter().copied()).collect()
}

fn apply(op: &GeneratedOp, input: &[f64]) -> std::result::Result<Vec<f64>, String> {
    op.apply(&seq(input))
        .map(|s| s.values())
        .map_err(|e| e.to_string())
}

/// Runs one named check over `cases` random instances.
pub fn run_check(name: &str, cases: usize, seed: u64) -> Option<CheckSummary> {
    let mut s = Sampler::new(check_seed(seed, name));
    let mut sum = CheckSummary::new(name);
    let dims = [2usize, 3, 4];
    match name {
        "transpose" => {
            let ops: Vec<_> = dims
                .iter()
                .flat_map(|&r| dims.iter().map(move |&c| (r, c)))
                .map(|(r, c)| {
                    (
                        r,
                        c,
                        gen_transpose(r, Some(c), Style::Exact).expect("valid"),
                    )
                })
                .collect();
            for case in 0..cases {
                let (r, c, op) = &ops[case % ops.len()];
                let a = s.int_matrix(*r, *c);
                match apply(op, a.data()) {
                    Ok(out) => sum.record(case, ref_transpose(&a).data(), &out, 0.0, true),
                    Err(e) => sum.error(case, e),
                }
            }
        }
        "softmax" => {
            let ops: Vec<_> = (1..=3)
                .map(|r| (r, gen_softmax(r, Style::Exact).expect("valid")))
                .collect();
            for case in 0..cases {
                let (r, op) = &ops[case % ops.len()];
                let c = 1 + s.below(4);
                let a = s.real_matrix(*r, c);
                match apply(op, a.data()) {
                    Ok(out) => {
                        sum.record(case, ref_softmax_rows(&a, None).data(), &out, 1e-9, false);
                        for row in out.chunks(a.cols()) {
                            let total: f64 = row.iter().sum();
                            if (total - 1.0).abs() > 1e-12 {
                                sum.fail(format!("case {case}: row sums to {total}"));
                            }
                        }
                    }
                    Err(e) => sum.error(case, e),
                }
            }
        }
        "matmul" => {
            let mut shapes = Vec::new();
            for &r in &dims {
                for &c in &dims {
                    for k in (r * c).div_ceil(r + c)..=4 {
                        shapes.push((
                            r,
                            k,
                            c,
                            gen_matmul_with_inner(r, k, c, Style::Exact).expect("feasible"),
                        ));
                    }
                }
            }
            for case in 0..cases {
                let (r, k, c, op) = &shapes[case % shapes.len()];
                let (a, b) = (s.int_matrix(*r, *k), s.int_matrix(*k, *c));
                match apply(op, &concat(&[&a, &b])) {
                    Ok(out) => {
                        let mut expected = ref_matmul(&a, &b).expect("shapes").data().to_vec();
                        expected.resize(out.len(), 0.0);
                        sum.record(case, &expected, &out, 0.0, true);
                    }
                    Err(e) => sum.error(case, e),
                }
            }
        }
        "maxmin" => {
            let op = gen_maxmin().expect("valid");
            for case in 0..cases {
                let n = 2 * (1 + s.below(8));
                let xs = s.int_seq(n);
                match apply(&op, &xs) {
                    Ok(out) => sum.record(case, &ref_maxmin(&xs), &out, 0.0, true),
                    Err(e) => sum.error(case, e),
                }
            }
        }
        "cofactor" | "determinant" | "inverse" => {
            let op = match name {
                "cofactor" => gen_cofactor3(),
                "determinant" => gen_determinant3(),
                _ => gen_inverse3(),
            }
            .expect("valid");
            for case in 0..cases {
                let a = s.nonsingular3(true);
                let out = match apply(&op, a.data()) {
                    Ok(out) => out,
                    Err(e) => {
                        sum.error(case, e);
                        continue;
                    }
                };
                match name {
                    "cofactor" => sum.record(
                        case,
                        ref_cofactor3(&a).expect("3x3").data(),
                        &out,
                        0.0,
                        true,
                    ),
                    "determinant" => {
                        let det = ref_det3_leibniz(&a).expect("3x3");
                        sum.record(case, &[det; 9], &out, 0.0, true)
                    }
                    _ => {
                        let inv = Matrix::new(3, 3, out).expect("3x3");
                        let eye = ref_matmul(&inv, &a).expect("3x3");
                        sum.record(case, Matrix::identity(3).data(), eye.data(), 1e-9, false);
                    }
                }
            }
        }
        "identify" => {
            for case in 0..cases {
                let n = 1 + s.below(12);
                let start = s.below(n);
                let len = s.below(n - start + 1);
                let xs = s.int_seq(n);
                let expected: Vec<f64> = (0..n)
                    .map(|i| {
                        if (start..start + len).contains(&i) {
                            xs[i]
                        } else {
                            0.0
                        }
                    })
                    .collect();
                match gen_identify(start, len)
                    .map_err(|e| e.to_string())
                    .and_then(|op| apply(&op, &xs))
                {
                    Ok(out) => sum.record(case, &expected, &out, 0.0, true),
                    Err(e) => sum.error(case, e),
                }
            }
        }
        "shift" => {
            for case in 0..cases {
                let n = 1 + s.below(12);
                let t = s.below(3 * n) as i64 - n as i64;
                let xs = s.int_seq(n);
                let expected: Vec<f64> = (0..n)
                    .map(|j| xs[(j as i64 + t).rem_euclid(n as i64) as usize])
                    .collect();
                match gen_shift(t)
                    .map_err(|e| e.to_string())
                    .and_then(|op| apply(&op, &xs))
                {
                    Ok(out) => sum.record(case, &expected, &out, 0.0, true),
                    Err(e) => sum.error(case, e),
                }
            }
        }
        "multi_head_op" => {
            let base = gen_matmul_with_inner(2, 2, 2, Style::Exact).expect("feasible");
            let ops: Vec<_> = [2usize, 3]
                .iter()
                .map(|&h| (h, gen_multi_head(&base, h, &[4, 4]).expect("valid")))
                .collect();
            for case in 0..cases {
                let (h, op) = &ops[case % ops.len()];
                let pairs: Vec<(Matrix, Matrix)> = (0..*h)
                    .map(|_| (s.int_matrix(2, 2), s.int_matrix(2, 2)))
                    .collect();
                let mut input: Vec<f64> = Vec::new();
                for (a, _) in &pairs {
                    input.extend_from_slice(a.data());
                }
                for (_, b) in &pairs {
                    input.extend_from_slice(b.data());
                }
                let mut expected = Vec::new();
                for (a, b) in &pairs {
                    expected.extend_from_slice(ref_matmul(a, b).expect("2x2").data());
                    expected.extend_from_slice(&[0.0; 4]);
                }
                match apply(op, &input) {
                    Ok(out) => sum.record(case, &expected, &out, 0.0, true),
                    Err(e) => sum.error(case, e),
                }
            }
        }
        "attention" | "encoder" | "multihead" | "inverse_attention" | "linear" | "linformer" => {
            let variant = match name {
                "attention" => Variant::Attention,
                "encoder" => Variant::Encoder,
                "multihead" => Variant::MultiHead,
                "inverse_attention" => Variant::Inverse,
                "linear" => Variant::Linear,
                _ => Variant::Linformer,
            };
            let orders: Vec<Orders> = match variant {
                Variant::Attention => attention_orders(),
                Variant::Encoder => vec![Orders {
                    n: 2,
                    d: 3,
                    d_v: 3,
                    d1: 3,
                    d2: 3,
                    ..Orders::default()
                }],
                Variant::MultiHead => [1, 2, 4]
                    .iter()
                    .map(|&heads| Orders {
                        heads,
                        ..Orders::default()
                    })
                    .collect(),
                Variant::Inverse => vec![Orders {
                    n: 3,
                    d: 3,
                    d_v: 3,
                    ..Orders::default()
                }],
                Variant::Linear => vec![
                    Orders::default(),
                    Orders {
                        n: 2,
                        d: 3,
                        d_v: 3,
                        d_k: 2,
                        ..Orders::default()
                    },
                ],
                Variant::Linformer => vec![
                    Orders {
                        n: 2,
                        d: 2,
                        d_v: 2,
                        d_k: 2,
                        k: 1,
                        ..Orders::default()
                    },
                    Orders {
                        n: 2,
                        d: 3,
                        d_v: 3,
                        d_k: 2,
                        k: 2,
                        ..Orders::default()
                    },
                ],
            };
            let per = cases.div_ceil(orders.len()).max(1);
            for (i, o) in orders.iter().enumerate() {
                let n = per.min(cases.saturating_sub(i * per));
                if n == 0 {
                    break;
                }
                let part = verify_variant(
                    variant,
                    *o,
                    n,
                    check_seed(seed, &format!("{name}{i}")),
                    None,
                );
                merge(&mut sum, part);
            }
        }
        "embed" => {
            let hosts = [
                (2, 2, 2),
                (2, 3, 3),
                (2, 4, 4),
                (3, 3, 3),
                (3, 3, 4),
                (3, 4, 4),
            ];
            for case in 0..cases {
                let host = hosts[case % hosts.len()];
                let spec =
                    AttentionSpec::new(s.real_matrix(2, 2), s.real_matrix(2, 2)).expect("valid");
                let x = s.real_matrix(2, 2);
                let expected =
                    ref_softmax_attention(spec.a(), spec.v(), &x, false).expect("shapes");
                match embed_simulate(&spec, &x, host, true, SimOptions::default()) {
                    Ok(e) => sum.record(case, expected.data(), e.block.data(), 1e-9, false),
                    Err(e) => sum.error(case, e),
                }
            }
        }
        _ => return None,
    }
    Some(sum)
}

fn attention_orders() -> Vec<Orders> {
    let mut out = Vec::new();
    for n in 1..=3 {
        for d in n..=4 {
            out.push(Orders {
                n,
                d,
                d_v: d,
                ..Orders::default()
            });
        }
    }
    out
}

fn merge(into: &mut CheckSummary, part: CheckSummary) {
    into.cases += part.cases;
    into.failures += part.failures;
    into.max_abs_error = into.max_abs_error.max(part.max_abs_error);
    into.max_rel_error = into.max_rel_error.max(part.max_rel_error);
    if into.first_failure.is_none() {
        into.first_failure = part.first_failure;
    }
}

/// Runs every named check; unknown names are reported as failures.
pub fn run_fuzz(names: &[&str], cases: usize, seed: u64) -> FuzzSummary {
    let checks: Vec<CheckSummary> = names
        .iter()
        .map(|name| {
            run_check(name, cases, seed).unwrap_or_else(|| {
                let mut s = CheckSummary::new(name);
                s.fail(format!("unknown check `{name}`"));
                s
            })
        })
        .collect();
    FuzzSummary {
        seed,
        cases_per_check: cases,
        total_cases: checks.iter().map(|c| c.cases).sum(),
        total_failures: checks.iter().map(|c| c.failures).sum(),
        checks,
    }
}

/// Default tolerance for a variant: exact on integer instances, `1e-8` for
/// the inverse wiring, `1e-9` otherwise.
pub fn default_tolerance(variant: Variant) -> f64 {
    match variant {
        Variant::Linear => 0.0,
        Variant::Inverse => 1e-8,
        _ => 1e-9,
    }
}

/// Builds the pipeline for `variant` at `orders`.
pub fn build_pipeline(
    variant: Variant,
    orders: Orders,
    opts: SimOptions,
) -> crate::simulator::Result<crate::simulator::Pipeline> {
    let Orders {
        n,
        d,
        d_v,
        d1,
        d2,
        heads,
        d_k,
        k,
    } = orders;
    match variant {
        Variant::Attention => build_u(n, d, d_v, opts),
        Variant::Encoder => build_encoder_u(n, d, d_v, d1, d2, opts),
        Variant::MultiHead => build_multi_head_u(n, d, d_v, heads, opts),
        Variant::Inverse => build_inverse_u(n, opts),
        Variant::Linear => build_linear_attention(n, d, d_v, d_k, opts),
        Variant::Linformer => build_linformer(n, d, d_v, d_k, k, opts),
    }
}

/// Simulates `cases` random instances of `variant` at `orders` and compares
/// each against the dense reference.
pub fn verify_variant(
    variant: Variant,
    orders: Orders,
    cases: usize,
    seed: u64,
    tolerance: Option<f64>,
) -> CheckSummary {
    let tol = tolerance.unwrap_or_else(|| default_tolerance(variant));
    let exact = variant == Variant::Linear && tolerance.is_none();
    let mut sum = CheckSummary::new(&format!("{variant}"));
    let mut s = Sampler::new(seed);
    let opts = SimOptions::default();
    let Orders {
        n,
        d,
        d_v,
        d1,
        d2,
        heads,
        d_k,
        k,
    } = orders;
    let pipeline = build_pipeline(variant, orders, opts);
    let pipeline = match pipeline {
        Ok(p) => p,
        Err(e) => {
            sum.error(0, e);
            return sum;
        }
    };
    for case in 0..cases {
        let (spec, xs, expected) = match variant {
            Variant::Attention | Variant::MultiHead | Variant::Encoder => {
                let h = if variant == Variant::MultiHead {
                    heads
                } else {
                    1
                };
                let hs: Vec<HeadSpec> = (0..h)
                    .map(|_| HeadSpec {
                        a: s.real_matrix(d, d),
                        v: s.real_matrix(d, d_v),
                    })
                    .collect();
                let mut spec = AttentionSpec::multi_head(hs).expect("same shapes");
                if variant == Variant::Encoder {
                    spec = spec
                        .with_ffn(s.real_matrix(d_v, d1), s.real_matrix(d1, d2))
                        .expect("shapes");
                }
                let xs: Vec<Matrix> = (0..h).map(|_| s.real_matrix(n, d)).collect();
                let per_head = ref_multi_head(&spec, &xs, false).expect("shapes");
                (spec, xs, concat(&per_head.iter().collect::<Vec<_>>()))
            }
            Variant::Inverse => {
                let spec =
                    AttentionSpec::new(s.nonsingular3(false), s.nonsingular3(false)).expect("3x3");
                let x = s.real_matrix(n, 3);
                let expected =
                    ref_softmax_attention(spec.a(), spec.v(), &x, false).expect("shapes");
                (spec, vec![x], expected.data().to_vec())
            }
            Variant::Linear => {
                let mut spec =
                    AttentionSpec::new(s.int_matrix(d, d), s.int_matrix(d, d_v)).expect("shapes");
                spec.wq = Some(s.int_matrix(d, d_k));
                spec.wk = Some(s.int_matrix(d, d_k));
                let x = s.int_matrix(n, d);
                let expected = ref_linear_attention(
                    &x,
                    spec.wq.as_ref().unwrap(),
                    spec.wk.as_ref().unwrap(),
                    spec.v(),
                )
                .expect("shapes");
                (spec, vec![x], expected.data().to_vec())
            }
            Variant::Linformer => {
                let mut spec =
                    AttentionSpec::new(s.real_matrix(d, d), s.real_matrix(d, d_v)).expect("shapes");
                spec.wq = Some(s.real_matrix(d, d_k));
                spec.wk = Some(s.real_matrix(d, d_k));
                spec.e = Some(s.real_matrix(k, n));
                spec.f = Some(s.real_matrix(k, n));
                let x = s.real_matrix(n, d);
                let expected = ref_linformer(
                    &x,
                    spec.wq.as_ref().unwrap(),
                    spec.wk.as_ref().unwrap(),
                    spec.e.as_ref().unwrap(),
                    spec.f.as_ref().unwrap(),
                    spec.v(),
                )
                .expect("shapes");
                (spec, vec![x], expected.data().to_vec())
            }
        };
        match pipeline.run(&spec, &xs) {
            Ok(out) => sum.record(case, &expected, out.data(), tol, exact),
            Err(e) => sum.error(case, e),
        }
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampler_is_deterministic_and_in_range() {
        let a = Sampler::new(7).int_matrix(4, 4);
        let b = Sampler::new(7).int_matrix(4, 4);
        assert_eq!(a, b);
        assert!(a
            .data()
            .iter()
            .all(|v| (-9.0..=9.0).contains(v) && v.fract() == 0.0));
        let r = Sampler::new(7).real_matrix(4, 4);
        assert!(r.data().iter().all(|v| (-3.0..=3.0).contains(v)));
    }

    #[test]
    fn nonsingular_rejection() {
        let mut s = Sampler::new(3);
        for _ in 0..20 {
            assert!(ref_det3(&s.nonsingular3(true)).unwrap().abs() >= 1e-3);
        }
    }

    #[test]
    fn every_check_runs() {
        let summary = run_fuzz(CHECKS, 3, 11);
        for c in &summary.checks {
            assert!(c.pass(), "{}: {:?}", c.name, c.first_failure);
            assert!(c.cases > 0, "{}", c.name);
        }
        assert!(!run_fuzz(&["bogus"], 1, 0).pass());
    }

    #[test]
    fn results_depend_only_on_seed() {
        let a = run_check("softmax", 5, 9).unwrap();
        let b = run_check("softmax", 5, 9).unwrap();
        assert_eq!(a, b);
    }
}
