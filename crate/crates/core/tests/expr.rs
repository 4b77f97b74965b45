use nlgram::expr::{
    eval_field, jacobian, parse_expression, second_directional, BinaryOp, Expr, UnaryOp,
};
use nlgram::Error;
use proptest::prelude::*;

#[test]
fn parses_documented_forms() {
    assert_eq!(parse_expression("0", 2).unwrap(), Expr::Const(0.0));
    let e = parse_expression("-x1 + tanh(x2)", 2).unwrap();
    let want = Expr::Binary(
        BinaryOp::Add,
        Box::new(Expr::Unary(UnaryOp::Neg, Box::new(Expr::State(0)))),
        Box::new(Expr::Unary(UnaryOp::Tanh, Box::new(Expr::State(1)))),
    );
    assert_eq!(e, want);
    assert!(matches!(
        parse_expression("x1*x3", 2),
        Err(Error::UnknownIdentifier { .. })
    ));
}

fn field(src: &[&str], d: usize) -> Vec<Expr> {
    src.iter()
        .map(|s| parse_expression(s, d).unwrap())
        .collect()
}

#[test]
fn field_values() {
    let rot = field(&["x2", "-x1"], 2);
    assert_eq!(
        eval_field(&rot, 0.0, &[1.0, 0.0]).unwrap().as_slice(),
        &[0.0, -1.0]
    );
    assert_eq!(
        eval_field(&field(&["tanh(x1)"], 1), 0.0, &[0.0]).unwrap()[0],
        0.0
    );
    assert_eq!(
        eval_field(&field(&["t*x1"], 1), 2.0, &[3.0]).unwrap()[0],
        6.0
    );
}

#[test]
fn jacobians_and_second_derivatives() {
    let rot = field(&["x2", "-x1"], 2);
    let j = jacobian(&rot, 0.7, &[0.3, -2.0]).unwrap();
    assert_eq!(j.as_slice(), &[0.0, -1.0, 1.0, 0.0]);
    assert_eq!(
        jacobian(&field(&["tanh(x1)"], 1), 0.0, &[0.0]).unwrap()[(0, 0)],
        1.0
    );

    let sq = field(&["x1*x1"], 1);
    let h = 1e-6;
    let fd = (eval_field(&sq, 0.0, &[3.0 + h]).unwrap()[0]
        - eval_field(&sq, 0.0, &[3.0 - h]).unwrap()[0])
        / (2.0 * h);
    let ad = jacobian(&sq, 0.0, &[3.0]).unwrap()[(0, 0)];
    assert!((ad - 6.0).abs() < 1e-14);
    assert!((ad - fd).abs() <= 1e-7);

    let z = second_directional(&rot, 0.0, &[1.0, 2.0], &[0.3, 0.1], &[-1.0, 4.0]).unwrap();
    assert_eq!(z.as_slice(), &[0.0, 0.0]);
    let th = second_directional(&field(&["tanh(x1)"], 1), 0.0, &[0.0], &[1.0], &[1.0]).unwrap();
    assert_eq!(th[0], 0.0);

    let cube = field(&["x1^3"], 1);
    let ad2 = second_directional(&cube, 0.0, &[1.0], &[1.0], &[1.0]).unwrap()[0];
    let h = 1e-4;
    let f = |x: f64| eval_field(&cube, 0.0, &[x]).unwrap()[0];
    let fd2 = (f(1.0 + h) - 2.0 * f(1.0) + f(1.0 - h)) / (h * h);
    assert!((ad2 - 6.0).abs() < 1e-12);
    assert!((ad2 - fd2).abs() < 1e-5);
}

/// Random expressions over `t, x1, x2` that stay finite on `[-1, 1]^2`.
fn arb_expr() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        (-3.0f64..3.0).prop_map(|c| format!("{c:.3}")),
        Just("t".to_string()),
        Just("x1".to_string()),
        Just("x2".to_string()),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a}) + ({b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a}) - ({b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a}) * ({b})")),
            inner.clone().prop_map(|a| format!("sin({a})")),
            inner.clone().prop_map(|a| format!("tanh({a})")),
            inner.clone().prop_map(|a| format!("-({a})")),
            inner.clone().prop_map(|a| format!("({a})^2")),
            inner.prop_map(|a| format!("exp(cos({a}))")),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn display_parses_back_to_the_same_tree(src in arb_expr()) {
        let e = parse_expression(&src, 2).unwrap();
        prop_assert_eq!(parse_expression(&e.to_string(), 2).unwrap(), e);
    }

    #[test]
    fn jacobian_matches_central_differences(
        src in arb_expr(),
        x1 in -1.0f64..1.0,
        x2 in -1.0f64..1.0,
        t in 0.0f64..1.0,
    ) {
        let f = vec![parse_expression(&src, 2).unwrap()];
        let j = jacobian(&f, t, &[x1, x2]).unwrap();
        let h = 1e-6;
        for (i, (dx, dy)) in [(h, 0.0), (0.0, h)].into_iter().enumerate() {
            let p = eval_field(&f, t, &[x1 + dx, x2 + dy]).unwrap()[0];
            let m = eval_field(&f, t, &[x1 - dx, x2 - dy]).unwrap()[0];
            let fd = (p - m) / (2.0 * h);
            let scale = 1.0 + fd.abs().max(j[(0, i)].abs());
            prop_assert!((fd - j[(0, i)]).abs() <= 1e-5 * scale, "{} vs {}", fd, j[(0, i)]);
        }
    }
}
