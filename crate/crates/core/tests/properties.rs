use std::collections::HashSet;

use proptest::prelude::*;
use serde_json::Number;

use flowgen_core::catalog::{validate_flow, ApiCatalog, FunctionDefinition, ParameterInfo};
use flowgen_core::dsl::*;
use flowgen_core::metrics::{aggregate, lcss_length, score_sample, sequence_similarity, EvaluationOutcome};

/// Longest common subsequence by trying every subsequence of `a`.
fn brute_lcss(a: &[u8], b: &[u8]) -> usize {
    let is_subsequence = |sub: &[u8]| {
        let mut it = b.iter();
        sub.iter().all(|x| it.any(|y| y == x))
    };
    (0u32..1 << a.len())
        .map(|mask| {
            let sub: Vec<u8> = (0..a.len()).filter(|i| mask & (1 << i) != 0).map(|i| a[i]).collect();
            if is_subsequence(&sub) {
                sub.len()
            } else {
                0
            }
        })
        .max()
        .unwrap_or(0)
}

const KEYWORDS: [&str; 6] = ["if", "else", "await", "true", "false", "null"];

fn ident() -> impl Strategy<Value = String> {
    "[a-zA-Z_][a-zA-Z0-9_]{0,5}".prop_filter("keyword", |s| !KEYWORDS.contains(&s.as_str()))
}

/// After a dot any identifier is fine, keywords included.
fn path_segment() -> impl Strategy<Value = String> {
    prop_oneof![4 => "[a-zA-Z_][a-zA-Z0-9_]{0,5}", 1 => prop::sample::select(KEYWORDS.to_vec()).prop_map(String::from)]
}

fn text() -> impl Strategy<Value = String> {
    prop_oneof![".{0,6}", "[\\x00-\\x1f\"\\\\/]{0,4}", "[a-z ]{0,8}"]
}

fn number() -> impl Strategy<Value = Number> {
    prop_oneof![
        any::<i64>().prop_map(Number::from),
        any::<u64>().prop_map(Number::from),
        (-1_000_000i32..1_000_000).prop_map(|n| Number::from_f64(f64::from(n) / 1000.0).unwrap()),
        (any::<f64>()).prop_filter_map("finite", Number::from_f64),
    ]
}

fn member() -> impl Strategy<Value = MemberAccess> {
    (ident(), prop::collection::vec(path_segment(), 0..3))
        .prop_map(|(base_variable, path)| MemberAccess { base_variable, path })
}

fn object_from(entries: Vec<(String, ParamValue)>) -> ParamObject {
    let mut object = ParamObject::new();
    for (k, v) in entries {
        let _ = object.insert(k, v);
    }
    object
}

fn param_value() -> impl Strategy<Value = ParamValue> {
    let leaf = prop_oneof![
        text().prop_map(ParamValue::String),
        number().prop_map(ParamValue::Number),
        any::<bool>().prop_map(ParamValue::Bool),
        Just(ParamValue::Null),
        member().prop_map(ParamValue::Reference),
    ];
    leaf.prop_recursive(3, 16, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..4).prop_map(ParamValue::List),
            prop::collection::vec((text(), inner), 0..4).prop_map(|e| ParamValue::Object(object_from(e))),
        ]
    })
}

fn literal() -> impl Strategy<Value = Literal> {
    prop_oneof![
        text().prop_map(Literal::String),
        number().prop_map(Literal::Number),
        any::<bool>().prop_map(Literal::Bool),
    ]
}

fn operand() -> impl Strategy<Value = Operand> {
    prop_oneof![member().prop_map(Operand::Member), literal().prop_map(Operand::Literal)]
}

fn comparison_op() -> impl Strategy<Value = ComparisonOp> {
    prop::sample::select(vec![
        ComparisonOp::Eq,
        ComparisonOp::Ne,
        ComparisonOp::Lt,
        ComparisonOp::Le,
        ComparisonOp::Gt,
        ComparisonOp::Ge,
    ])
}

fn expression() -> impl Strategy<Value = Expression> {
    let leaf = prop_oneof![
        member().prop_map(Expression::Member),
        literal().prop_map(|value| Expression::Literal { value }),
        (operand(), comparison_op(), operand()).prop_map(|(left, op, right)| Expression::Comparison {
            left,
            op,
            right
        }),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|e| Expression::Negation { inner: Box::new(e) }),
            (
                prop::sample::select(vec![LogicalOp::And, LogicalOp::Or]),
                inner.clone(),
                inner
            )
                .prop_map(|(op, l, r)| Expression::Logical {
                    op,
                    left: Box::new(l),
                    right: Box::new(r)
                }),
        ]
    })
}

fn call_statement() -> impl Strategy<Value = Statement> {
    (
        ident(),
        any::<bool>(),
        ident(),
        path_segment(),
        prop::collection::vec((text(), param_value()), 0..4),
    )
        .prop_map(|(target_variable, awaited, ns, f, args)| {
            Statement::Call(ApiCallStatement {
                target_variable,
                awaited,
                call: ApiCall::new(ns, f, object_from(args)).unwrap(),
            })
        })
}

fn statement() -> impl Strategy<Value = Statement> {
    call_statement().prop_recursive(3, 12, 3, |inner| {
        (
            expression(),
            prop::collection::vec(inner.clone(), 1..3),
            prop::option::of(prop::collection::vec(inner, 1..3)),
        )
            .prop_map(|(condition, then_branch, else_branch)| {
                Statement::Conditional(Conditional {
                    condition,
                    then_branch,
                    else_branch,
                })
            })
    })
}

fn flow() -> impl Strategy<Value = Flow> {
    prop::collection::vec(statement(), 1..5).prop_map(|statements| Flow {
        statements,
        source_text: String::new(),
    })
}

/// Line and column must point inside the text or just past its end.
fn position_is_honest(text: &str, e: &ParseError) -> bool {
    let lines: Vec<&str> = text.split('\n').collect();
    e.line >= 1 && e.column >= 1 && e.line <= lines.len() && e.column <= lines[e.line - 1].chars().count() + 1
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn lcss_matches_brute_force(
        a in prop::collection::vec(0u8..5, 0..=8),
        b in prop::collection::vec(0u8..5, 0..=8),
    ) {
        prop_assert_eq!(lcss_length(&a, &b), brute_lcss(&a, &b));
        prop_assert_eq!(lcss_length(&a, &b), lcss_length(&b, &a));
    }

    #[test]
    fn similarity_is_bounded_and_reflexive(
        a in prop::collection::vec(0u8..5, 0..=8),
        b in prop::collection::vec(0u8..5, 0..=8),
    ) {
        let s = sequence_similarity(&a, &b);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert_eq!(sequence_similarity(&a, &a), 1.0);
    }

    #[test]
    fn generated_flows_round_trip(f in flow()) {
        let text = serialize_flow(&f);
        let reparsed = parse_flow(&text);
        prop_assert!(reparsed.is_ok(), "{}\n{:?}", text, reparsed);
        let reparsed = reparsed.unwrap();
        prop_assert_eq!(&reparsed, &f);
        prop_assert_eq!(serialize_flow(&reparsed), text);
    }

    #[test]
    fn parser_is_total_on_bytes(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
        let text = String::from_utf8_lossy(&bytes);
        match parse_flow(&text) {
            Ok(f) => prop_assert!(!f.statements.is_empty()),
            Err(e) => prop_assert!(position_is_honest(&text, &e), "{:?} for {:?}", e, text),
        }
    }

    #[test]
    fn parser_is_total_on_near_misses(f in flow(), cut in any::<prop::sample::Index>(), junk in "[{}();=.\"a-z!&|<> \n]{1,3}") {
        let text = serialize_flow(&f);
        let chars: Vec<char> = text.chars().collect();
        let at = cut.index(chars.len() + 1);
        let mutated: String = chars[..at].iter().collect::<String>() + &junk + &chars[at..].iter().collect::<String>();
        if let Err(e) = parse_flow(&mutated) {
            prop_assert!(position_is_honest(&mutated, &e), "{:?} for {:?}", e, mutated);
        }
    }

    #[test]
    fn aggregate_ignores_order(
        raw in prop::collection::vec((any::<bool>(), any::<bool>(), any::<bool>(), 0.0f64..=1.0), 1..40),
        seed in any::<u64>(),
    ) {
        let outcomes: Vec<EvaluationOutcome> = raw
            .iter()
            .enumerate()
            .map(|(i, &(parsed, f, p, s))| EvaluationOutcome {
                sample_id: i.to_string(),
                parsed,
                has_made_up_function: parsed && f,
                has_made_up_parameter: parsed && p,
                similarity: if parsed && !f { s } else { 0.0 },
            })
            .collect();
        let mut shuffled = outcomes.clone();
        // Deterministic Fisher-Yates driven by the seed.
        let mut state = seed | 1;
        for i in (1..shuffled.len()).rev() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            shuffled.swap(i, (state % (i as u64 + 1)) as usize);
        }
        let a = aggregate(&outcomes).unwrap();
        let b = aggregate(&shuffled).unwrap();
        prop_assert_eq!(a.counts, b.counts);
        prop_assert_eq!(a.unparsed_pct, b.unparsed_pct);
        prop_assert_eq!(a.made_up_api_pct, b.made_up_api_pct);
        prop_assert_eq!(a.made_up_param_pct, b.made_up_param_pct);
        prop_assert!((a.average_similarity - b.average_similarity).abs() < 1e-12);
    }
}

const FUNCTIONS: [&str; 5] = ["ns_a.One", "ns_a.Two", "ns_b.Three", "ns_b.Four", "ns_c.Five"];
const KEYS: [&str; 4] = ["to", "body/text", "item", "x/y/z"];

fn definition(name: &str, keys: &[&str]) -> FunctionDefinition {
    FunctionDefinition {
        function_name: name.into(),
        description: String::new(),
        is_in_training_set: true,
        display_name: String::new(),
        parameters: keys
            .iter()
            .map(|k| ParameterInfo {
                key: (*k).into(),
                type_name: "String".into(),
                summary: String::new(),
                format: None,
                description: String::new(),
            })
            .collect(),
        response_schema: vec![],
        is_trigger: false,
    }
}

/// Flow text calling the given (function, keys) pairs. Keys are written as
/// their last `/` segment half the time, which must still match.
fn flow_text(calls: &[(usize, Vec<(usize, bool)>)]) -> String {
    calls
        .iter()
        .enumerate()
        .map(|(i, (f, keys))| {
            let mut seen = HashSet::new();
            let args: Vec<String> = keys
                .iter()
                .map(|&(k, short)| {
                    if short {
                        KEYS[k].rsplit('/').next().unwrap()
                    } else {
                        KEYS[k]
                    }
                })
                .filter(|k| seen.insert(*k))
                .map(|k| format!("\"{k}\": 1"))
                .collect();
            format!("v{i} = {}({{{}}});", FUNCTIONS[*f], args.join(", "))
        })
        .collect()
}

fn catalog_strategy() -> impl Strategy<Value = Vec<(usize, Vec<usize>)>> {
    prop::collection::vec((0..FUNCTIONS.len(), prop::collection::vec(0..KEYS.len(), 0..4)), 0..6)
}

fn build_catalog(entries: &[(usize, Vec<usize>)]) -> ApiCatalog {
    let mut seen = HashSet::new();
    ApiCatalog::from_definitions(entries.iter().filter(|(f, _)| seen.insert(*f)).map(|(f, keys)| {
        let mut ks: Vec<&str> = keys.iter().map(|&k| KEYS[k]).collect();
        ks.sort();
        ks.dedup();
        definition(FUNCTIONS[*f], &ks)
    }))
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn made_up_function_iff_absent(
        entries in catalog_strategy(),
        calls in prop::collection::vec((0..FUNCTIONS.len(), prop::collection::vec((0..KEYS.len(), any::<bool>()), 0..3)), 1..5),
    ) {
        let catalog = build_catalog(&entries);
        let flow = parse_flow(&flow_text(&calls)).unwrap();
        let result = validate_flow(&flow, &catalog);
        for name in extract_api_sequence(&flow) {
            prop_assert_eq!(result.made_up_functions.contains(&name), !catalog.contains(&name));
        }
        for (name, key) in &result.made_up_parameters {
            let def = catalog.get(name);
            prop_assert!(def.is_some(), "parameter flagged on unknown function {}", name);
            prop_assert!(!def.unwrap().accepts_key(key));
        }
        prop_assert_eq!(result.is_clean(), result.made_up_functions.is_empty() && result.made_up_parameters.is_empty());
    }

    #[test]
    fn bigger_catalog_never_adds_hallucinations(
        small in catalog_strategy(),
        extra in catalog_strategy(),
        calls in prop::collection::vec((0..FUNCTIONS.len(), prop::collection::vec((0..KEYS.len(), any::<bool>()), 0..3)), 1..5),
    ) {
        // The larger catalog holds every definition of the smaller one, with
        // at least the same keys, plus more.
        let mut big = small.clone();
        for (f, keys) in &extra {
            match big.iter_mut().find(|(g, _)| g == f) {
                Some((_, ks)) => ks.extend(keys),
                None => big.push((*f, keys.clone())),
            }
        }
        let mut merged: Vec<(usize, Vec<usize>)> = Vec::new();
        for (f, keys) in &big {
            match merged.iter_mut().find(|(g, _)| g == f) {
                Some((_, ks)) => ks.extend(keys),
                None => merged.push((*f, keys.clone())),
            }
        }
        let mut first_only: Vec<(usize, Vec<usize>)> = Vec::new();
        for (f, keys) in &small {
            if !first_only.iter().any(|(g, _)| g == f) {
                first_only.push((*f, keys.clone()));
            }
        }
        let small_catalog = build_catalog(&first_only);
        let big_catalog = build_catalog(&merged.iter().map(|(f, ks)| {
            let mut ks = ks.clone();
            if let Some((_, orig)) = first_only.iter().find(|(g, _)| g == f) {
                ks.extend(orig);
            }
            (*f, ks)
        }).collect::<Vec<_>>());

        let flow = parse_flow(&flow_text(&calls)).unwrap();
        let small_result = validate_flow(&flow, &small_catalog);
        let big_result = validate_flow(&flow, &big_catalog);
        for name in &big_result.made_up_functions {
            prop_assert!(small_result.made_up_functions.contains(name));
        }
        for pair in &big_result.made_up_parameters {
            prop_assert!(
                small_result.made_up_parameters.contains(pair) || small_result.made_up_functions.contains(&pair.0)
            );
        }

        let truth = parse_flow(&flow_text(&calls[..1])).unwrap();
        let text = flow_text(&calls);
        let s = score_sample("x", &text, &truth, Some(&small_catalog));
        let b = score_sample("x", &text, &truth, Some(&big_catalog));
        prop_assert!(!b.has_made_up_function || s.has_made_up_function);
        prop_assert!(b.similarity >= s.similarity);
    }
}
