//! Worked examples for each module, checked through the public API.

use ndarray::{ArrayD, IxDyn};
use rasp_attn::flatten::*;
use rasp_attn::lang::{evaluate, metrics, parse, Bindings, ParseErrorKind};
use rasp_attn::oracle::*;
use rasp_attn::seqcore::*;
use rasp_attn::simulator::*;
use rasp_attn::stdlib::*;

fn ints(v: &[i64]) -> Sequence {
    Sequence::from_ints(v)
}

fn eval(src: &str, input: &[f64]) -> Vec<f64> {
    let p = parse(src).unwrap();
    evaluate(&p, &Sequence::from_f64s(input).unwrap(), &Bindings::new())
        .unwrap()
        .values()
}

fn apply(op: &GeneratedOp, input: &[f64]) -> Vec<f64> {
    op.apply(&Sequence::from_f64s(input).unwrap())
        .unwrap()
        .values()
}

fn sample() -> Matrix {
    Matrix::from_rows(&[[7.0, 8.0, 12.0], [10.0, 11.0, 9.0], [2.0, 4.0, 21.0]])
}

fn close(a: &[f64], b: &[f64], tol: f64) {
    let r = compare(a, b, tol, false).unwrap();
    assert!(r.pass, "{a:?} vs {b:?}: {:?}", r.first_mismatch);
}

#[test]
fn selectors() {
    let idx = Sequence::indices(3);
    let eye = select(&idx, &idx, Predicate::Eq).unwrap();
    assert_eq!(eye, Selector::from_fn(3, |q, k| q == k));

    let anti = select(&idx, &ints(&[2, 1, 0]), Predicate::Eq).unwrap();
    assert_eq!(anti, Selector::from_fn(3, |q, k| q + k == 2));

    let s = select_operands((&idx).into(), 1.into(), Predicate::Ge).unwrap();
    for q in 0..3 {
        assert_eq!(s.row(q), &[false, true, true]);
    }
}

#[test]
fn aggregates() {
    let eye = Selector::from_fn(3, |q, k| q == k);
    assert_eq!(
        aggregate(&eye, &ints(&[5, 7, 9])).unwrap().values(),
        vec![5.0, 7.0, 9.0]
    );

    let sel = Selector::from_fn(3, |q, k| q == 0 && k != 1);
    let out = aggregate(&sel, &ints(&[1, 100, 3])).unwrap().values();
    assert_eq!(out, vec![2.0, 0.0, 0.0]);
}

#[test]
fn elementwise_and_length() {
    assert_eq!(
        eval(
            "def f(){ return tokens + indices * 10 + 10; }",
            &[1.0, 2.0, 3.0]
        ),
        vec![11.0, 22.0, 33.0]
    );
    assert_eq!(
        eval("def f(){ return indices % 3; }", &[0.0; 7]),
        vec![0.0, 1.0, 2.0, 0.0, 1.0, 2.0, 0.0]
    );
    assert_eq!(
        eval(
            "def f(){ return 0 if tokens < 0 else tokens; }",
            &[-2.0, 3.0, -1.0]
        ),
        vec![0.0, 3.0, 0.0]
    );
    assert_eq!(length(4).unwrap().values(), vec![4.0; 4]);
    assert_eq!(length(1).unwrap().values(), vec![1.0]);
    assert_eq!(
        eval("def f(){ return length ^ 0.5; }", &[0.0; 9]),
        vec![3.0; 9]
    );
}

#[test]
fn program_structure() {
    let relu = parse(include_str!("../listings/relu.rasp")).unwrap();
    assert_eq!(metrics(&relu).selector_count, 0);
    assert_eq!(metrics(&relu).depth, 0);

    let id = parse("def id(){ return aggregate(select(indices,indices,==), tokens); }").unwrap();
    let m = metrics(&id);
    assert_eq!((m.depth, m.width, m.selector_count), (1, 1, 1));
    assert_eq!(
        eval(
            "def id(){ return aggregate(select(indices,indices,==), tokens); }",
            &[4.0, -1.5]
        ),
        vec![4.0, -1.5]
    );

    let err = parse("def f(){ return select(indices, ==); }").unwrap_err();
    assert_eq!(err.kind, ParseErrorKind::Arity);

    let softmax = parse(include_str!("../listings/softmax.rasp")).unwrap();
    assert_eq!(metrics(&softmax).width, 3);
    let matmul = parse(include_str!("../listings/matmul.rasp")).unwrap();
    assert_eq!(metrics(&matmul).stratum_widths, vec![7, 12]);
}

#[test]
fn layouts() {
    let m = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
    assert_eq!(m.to_sequence().values(), vec![1.0, 2.0, 3.0, 4.0]);
    let layout = FlatLayout::row_major(&[2, 2]).unwrap();
    assert_eq!(layout.strides(), &[2, 1]);

    let layout = FlatLayout::row_major(&[3, 5]).unwrap();
    for i0 in 0..3 {
        for i1 in 0..5 {
            assert_eq!(layout.flat_index(&[i0, i1]), 5 * i0 + i1);
        }
    }
    let cube = ArrayD::from_shape_fn(IxDyn(&[2, 2, 2]), |ix| {
        (4 * ix[0] + 2 * ix[1] + ix[2]) as f64
    });
    let (seq, layout) = flatten(&cube).unwrap();
    assert_eq!(layout.flat_index(&[1, 0, 1]), 5);
    assert_eq!(seq.values()[5], cube[[1, 0, 1]]);
    assert_eq!(unflatten(&seq, &layout).unwrap(), cube);
}

#[test]
fn encodings() {
    let spec = AttentionSpec::new(
        Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]),
        Matrix::from_rows(&[[5.0], [6.0]]),
    )
    .unwrap();
    let enc = encode_pair(&spec, &Matrix::identity(2)).unwrap();
    assert_eq!(
        enc.sequence.values(),
        vec![1.0, 0.0, 0.0, 1.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
    );

    let one = |x: f64| Matrix::from_rows(&[[x]]);
    let spec = AttentionSpec::multi_head(vec![
        HeadSpec {
            a: one(3.0),
            v: one(5.0),
        },
        HeadSpec {
            a: one(4.0),
            v: one(6.0),
        },
    ])
    .unwrap();
    let enc = encode_heads(&spec, &[one(1.0), one(2.0)]).unwrap();
    assert_eq!(enc.sequence.values(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);

    let spec = AttentionSpec::new(Matrix::identity(2), Matrix::identity(2)).unwrap();
    assert!(encode_pair(&spec, &Matrix::identity(3)).is_err());
}

#[test]
fn contraction() {
    assert_eq!(
        contract(&ints(&[9, 8, 7, 0, 0]), 3).unwrap().values(),
        vec![9.0, 8.0, 7.0]
    );
    assert_eq!(contract(&ints(&[1, 2]), 2).unwrap(), ints(&[1, 2]));
    assert!(matches!(
        contract(&ints(&[1, 2, 3, 4]), 3),
        Err(LayoutError::NonZeroSuffix { position: 3, .. })
    ));
}

#[test]
fn embeddings() {
    let spec =
        AttentionSpec::new(Matrix::from_rows(&[[2.5]]), Matrix::from_rows(&[[1.5]])).unwrap();
    let x = Matrix::from_rows(&[[7.0]]);
    let (same, x_same) = embed_pad(&spec, &x, (1, 1, 1)).unwrap();
    assert_eq!((same, x_same), (spec.clone(), x.clone()));

    let (big, xb) = embed_pad(&spec, &x, (2, 2, 2)).unwrap();
    assert_eq!(big.a(), &Matrix::from_rows(&[[2.5, 0.0], [0.0, 1.0]]));
    assert_eq!(xb, Matrix::from_rows(&[[7.0, 0.0], [0.0, 0.0]]));
}

#[test]
fn transpose_examples() {
    let op = gen_transpose(2, None, Style::Exact).unwrap();
    assert_eq!(apply(&op, &[1.0, 2.0, 3.0, 4.0]), vec![1.0, 3.0, 2.0, 4.0]);
    let sym = [1.0, 2.0, 3.0, 2.0, 5.0, 6.0, 3.0, 6.0, 9.0];
    assert_eq!(
        apply(&gen_transpose(3, None, Style::Exact).unwrap(), &sym),
        sym.to_vec()
    );
}

#[test]
fn softmax_examples() {
    let op = gen_softmax(1, Style::Exact).unwrap();
    close(&apply(&op, &[0.0, 0.0, 0.0]), &[1.0 / 3.0; 3], 1e-15);
    close(
        &apply(&op, &[2f64.ln(), 0.0]),
        &[2.0 / 3.0, 1.0 / 3.0],
        1e-12,
    );
}

#[test]
fn matmul_examples() {
    let b: Vec<f64> = (0..12).map(|i| (i * 7 % 11) as f64 - 5.0).collect();
    let op = gen_matmul(3, 4, Style::Exact).unwrap();
    let mut eye_b = Matrix::identity(3).data().to_vec();
    eye_b.extend(&b);
    let out = apply(
        &gen_matmul_with_inner(3, 3, 4, Style::Exact).unwrap(),
        &eye_b,
    );
    assert_eq!(&out[..12], &b[..]);
    assert!(out[12..].iter().all(|&v| v == 0.0));

    assert!(gen_matmul_with_inner(3, 2, 4, Style::Exact).is_ok());
    assert!(gen_matmul_with_inner(3, 1, 4, Style::Exact).is_err());

    let a = Matrix::from_rows(&[[1.0, -2.0], [3.0, 0.0], [-4.0, 5.0]]);
    let bm = Matrix::from_rows(&[[2.0, 1.0, 0.0, -1.0], [3.0, -3.0, 7.0, 1.0]]);
    let mut input = a.data().to_vec();
    input.extend(bm.data());
    let out = apply(&op, &input);
    assert_eq!(&out[..12], ref_matmul(&a, &bm).unwrap().data());
}

#[test]
fn relu_and_maxmin() {
    let relu = gen_relu().unwrap();
    assert_eq!(apply(&relu, &[-1.0, 0.0, 2.0]), vec![0.0, 0.0, 2.0]);
    assert_eq!(apply(&relu, &[0.5, 3.0]), vec![0.5, 3.0]);
    assert_eq!(apply(&relu, &[-0.5, -3.0]), vec![0.0, 0.0]);

    let mm = gen_maxmin().unwrap();
    assert_eq!(apply(&mm, &[1.0, 2.0, 3.0, 4.0]), vec![2.0, 1.0, 4.0, 3.0]);
    assert_eq!(apply(&mm, &[5.0, 5.0, 2.0, 2.0]), vec![5.0, 5.0, 2.0, 2.0]);
    let xs = [3.0, -1.0, 0.0, 8.0, 2.0, 2.5, -7.0, -6.0];
    assert_eq!(apply(&mm, &xs), ref_maxmin(&xs));
}

#[test]
fn three_by_three() {
    let cof = gen_cofactor3().unwrap();
    assert_eq!(
        apply(&cof, Matrix::identity(3).data()),
        Matrix::identity(3).data().to_vec()
    );
    let diag =
        |a: f64, b: f64, c: f64| Matrix::from_rows(&[[a, 0.0, 0.0], [0.0, b, 0.0], [0.0, 0.0, c]]);
    assert_eq!(
        apply(&cof, diag(2.0, 3.0, 4.0).data()),
        diag(12.0, 8.0, 6.0).data().to_vec()
    );
    assert_eq!(
        apply(&cof, sample().data()),
        ref_cofactor3(&sample()).unwrap().data().to_vec()
    );

    let det = gen_determinant3().unwrap();
    assert_eq!(apply(&det, Matrix::identity(3).data()), vec![1.0; 9]);
    let twin = Matrix::from_rows(&[[1.0, 2.0, 3.0], [1.0, 2.0, 3.0], [4.0, 0.0, 1.0]]);
    assert_eq!(apply(&det, twin.data()), vec![0.0; 9]);
    assert_eq!(7.0 * 195.0 - 8.0 * 192.0 + 12.0 * 18.0, 45.0);
    assert_eq!(apply(&det, sample().data()), vec![45.0; 9]);

    let inv = gen_inverse3().unwrap();
    assert_eq!(
        apply(&inv, Matrix::identity(3).data()),
        Matrix::identity(3).data().to_vec()
    );
    close(
        &apply(&inv, diag(2.0, 4.0, 5.0).data()),
        diag(0.5, 0.25, 0.2).data(),
        1e-15,
    );
    let out = Matrix::new(3, 3, apply(&inv, sample().data())).unwrap();
    close(
        ref_matmul(&out, &sample()).unwrap().data(),
        Matrix::identity(3).data(),
        1e-9,
    );
    close(
        out.data(),
        ref_inverse_gauss(&sample()).unwrap().data(),
        1e-9,
    );
}

#[test]
fn identify_and_shift() {
    let xs = [9.0, 8.0, 7.0, 6.0];
    assert_eq!(apply(&gen_identify(0, 4).unwrap(), &xs), xs.to_vec());
    assert_eq!(
        apply(&gen_identify(1, 2).unwrap(), &xs),
        vec![0.0, 8.0, 7.0, 0.0]
    );

    let ys = [1.0, 2.0, 3.0, 4.0];
    assert_eq!(apply(&gen_shift(0).unwrap(), &ys), ys.to_vec());
    assert_eq!(apply(&gen_shift(1).unwrap(), &ys), vec![2.0, 3.0, 4.0, 1.0]);
    assert_eq!(apply(&gen_shift(4).unwrap(), &ys), ys.to_vec());
}

#[test]
fn multi_head_ops() {
    let base = gen_transpose(2, None, Style::Exact).unwrap();
    assert_eq!(
        gen_multi_head(&base, 1, &[4]).unwrap().source(),
        base.source()
    );

    let two = gen_multi_head(&base, 2, &[4]).unwrap();
    assert_eq!(
        apply(&two, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]),
        vec![1.0, 3.0, 2.0, 4.0, 5.0, 7.0, 6.0, 8.0]
    );

    let mm = gen_maxmin().unwrap();
    assert_eq!(gen_multi_head(&mm, 3, &[4]).unwrap().source(), mm.source());
}

#[test]
fn attention_examples() {
    let opts = SimOptions::default();
    let spec = AttentionSpec::new(Matrix::zeros(2, 2), Matrix::identity(2)).unwrap();
    let out = build_u(2, 2, 2, opts)
        .unwrap()
        .run(&spec, &[Matrix::identity(2)])
        .unwrap();
    assert_eq!(out, Matrix::from_rows(&[[0.5, 0.5], [0.5, 0.5]]));

    assert!(matches!(
        build_u(4, 3, 3, opts),
        Err(SimError::Order { .. })
    ));

    // Identity FFN leaves a nonnegative attention output unchanged.
    let a = Matrix::from_rows(&[[0.3, -0.2, 1.0], [0.0, 0.5, 0.1], [2.0, 0.0, -1.0]]);
    let v = Matrix::from_rows(&[[1.0, 2.0, 0.5], [0.0, 1.0, 3.0], [2.0, 0.25, 1.0]]);
    let x = Matrix::from_rows(&[[1.0, 0.5, 2.0], [0.25, 1.0, 0.0]]);
    let base = AttentionSpec::new(a.clone(), v.clone()).unwrap();
    let plain = build_u(2, 3, 3, opts)
        .unwrap()
        .run(&base, std::slice::from_ref(&x))
        .unwrap();
    let enc = build_encoder_u(2, 3, 3, 3, 3, opts).unwrap();
    let with_id = base
        .clone()
        .with_ffn(Matrix::identity(3), Matrix::identity(3))
        .unwrap();
    close(
        enc.run(&with_id, std::slice::from_ref(&x)).unwrap().data(),
        plain.data(),
        1e-12,
    );
    let with_zero = base
        .clone()
        .with_ffn(Matrix::identity(3), Matrix::zeros(3, 3))
        .unwrap();
    assert!(enc
        .run(&with_zero, std::slice::from_ref(&x))
        .unwrap()
        .data()
        .iter()
        .all(|&v| v == 0.0));
}

#[test]
fn multi_head_attention_examples() {
    let opts = SimOptions::default();
    let a1 = Matrix::from_rows(&[[0.5, -1.0], [1.0, 0.25]]);
    let v1 = Matrix::from_rows(&[[1.0, 2.0], [-1.0, 0.5]]);
    let x1 = Matrix::from_rows(&[[1.0, 0.0], [0.5, 2.0]]);
    let x2 = Matrix::from_rows(&[[-1.0, 3.0], [0.0, 1.0]]);

    let single = AttentionSpec::new(a1.clone(), v1.clone()).unwrap();
    let u = build_u(2, 2, 2, opts)
        .unwrap()
        .run(&single, std::slice::from_ref(&x1))
        .unwrap();
    let h1 = build_multi_head_u(2, 2, 2, 1, opts)
        .unwrap()
        .run(&single, std::slice::from_ref(&x1))
        .unwrap();
    assert_eq!(u, h1);

    let spec = AttentionSpec::multi_head(vec![
        HeadSpec {
            a: a1.clone(),
            v: v1.clone(),
        },
        HeadSpec {
            a: a1.clone(),
            v: Matrix::zeros(2, 2),
        },
    ])
    .unwrap();
    let out = build_multi_head_u(2, 2, 2, 2, opts)
        .unwrap()
        .run_heads(&spec, &[x1, x2])
        .unwrap();
    close(out[0].data(), u.data(), 1e-12);
    assert!(out[1].data().iter().all(|&v| v == 0.0));
}

#[test]
fn inverse_wiring_examples() {
    let opts = SimOptions::default();
    let p = build_inverse_u(3, opts).unwrap();
    let x = Matrix::from_rows(&[[0.5, 1.0, -1.0], [2.0, 0.0, 0.25], [1.0, 1.0, 1.0]]);
    let spec = AttentionSpec::new(sample(), Matrix::identity(3)).unwrap();
    let expected = ref_softmax_attention(&sample(), &Matrix::identity(3), &x, false).unwrap();
    close(
        p.run(&spec, std::slice::from_ref(&x)).unwrap().data(),
        expected.data(),
        1e-8,
    );

    let v = Matrix::from_rows(&[[2.0, 1.0, 0.0], [0.0, 1.0, 3.0], [1.0, 0.0, 1.0]]);
    let spec = AttentionSpec::new(sample(), v.clone()).unwrap();
    let expected = ref_softmax_attention(&sample(), &v, &x, false).unwrap();
    close(
        p.run(&spec, std::slice::from_ref(&x)).unwrap().data(),
        expected.data(),
        1e-8,
    );

    let singular = Matrix::from_rows(&[[1.0, 2.0, 3.0], [1.0, 2.0, 3.0], [0.0, 0.0, 1.0]]);
    let spec = AttentionSpec::new(singular, v).unwrap();
    assert!(matches!(p.run(&spec, &[x]), Err(SimError::Singular { .. })));
}

#[test]
fn linear_examples() {
    let p = build_linear_attention(2, 2, 2, 2, SimOptions::default()).unwrap();
    let mut spec = AttentionSpec::new(Matrix::identity(2), Matrix::identity(2)).unwrap();
    spec.wq = Some(Matrix::identity(2));
    spec.wk = Some(Matrix::identity(2));
    assert_eq!(
        p.run(&spec, &[Matrix::identity(2)]).unwrap(),
        Matrix::identity(2)
    );
}
