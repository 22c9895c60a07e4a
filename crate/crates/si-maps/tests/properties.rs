//! Randomized invariants for the program grammar and heading arithmetic.

use proptest::prelude::*;

use si_maps::nav::normalize_heading;
use si_maps::nav::program::{parse_program, pretty_print, ArgValue, PrimitiveCall, Program};

fn arb_string_arg() -> impl Strategy<Value = ArgValue> {
    // Printable names including the characters the quoting layer must escape.
    proptest::string::string_regex("[a-zA-Z0-9_ .\\\\\"-]{0,12}")
        .unwrap()
        .prop_map(ArgValue::Str)
}

fn arb_value_for(ty: si_maps::nav::program::ParamType) -> BoxedStrategy<ArgValue> {
    use si_maps::nav::program::ParamType;
    match ty {
        ParamType::Str => arb_string_arg().boxed(),
        ParamType::Int => (-1000i64..1000).prop_map(ArgValue::Int).boxed(),
        // Reals print with a decimal point; integers must stay legal too.
        ParamType::Real => prop_oneof![
            (-1000i64..1000).prop_map(ArgValue::Int),
            (-100.0f64..100.0).prop_map(|v| ArgValue::Real((v * 16.0).round() / 16.0)),
        ]
        .boxed(),
    }
}

fn arb_call() -> impl Strategy<Value = PrimitiveCall> {
    let names = si_maps::nav::program::primitive_names();
    (0..names.len()).prop_flat_map(move |i| {
        let name = names[i];
        let sig = si_maps::nav::program::signature_of(name).unwrap();
        let args: Vec<BoxedStrategy<ArgValue>> =
            sig.iter().map(|&ty| arb_value_for(ty)).collect();
        args.prop_map(move |args| PrimitiveCall {
            name: name.to_string(),
            args,
            line: 0,
            col: 0,
        })
    })
}

fn strip_locations(p: &Program) -> Vec<(String, Vec<ArgValue>)> {
    p.calls.iter().map(|c| (c.name.clone(), c.args.clone())).collect()
}

proptest! {
    #[test]
    fn programs_round_trip_through_text(calls in proptest::collection::vec(arb_call(), 1..8)) {
        let prog = Program { calls };
        let text = pretty_print(&prog);
        let back = parse_program(&text).unwrap();
        prop_assert_eq!(strip_locations(&back), strip_locations(&prog));
    }

    #[test]
    fn normalized_headings_stay_in_range(h in -1e6f64..1e6) {
        let n = normalize_heading(h);
        prop_assert!((-std::f64::consts::PI..std::f64::consts::PI).contains(&n));
        // Adding a full turn never changes the normalized value by more than
        // accumulated rounding.
        let again = normalize_heading(h + 2.0 * std::f64::consts::PI);
        let diff = (n - again).abs();
        let wrapped = (diff - 2.0 * std::f64::consts::PI).abs().min(diff);
        prop_assert!(wrapped < 1e-6, "h={h} n={n} again={again}");
    }
}
