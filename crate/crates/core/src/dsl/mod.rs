//! The workflow DSL: a JavaScript-flavoured sequence of API-call
//! assignments and conditionals.
//!
//! ```text
//! program     := statement+
//! statement   := assignment | conditional
//! assignment  := IDENT "=" ["await"] IDENT "." IDENT "(" object ")" ";"
//! conditional := "if" "(" expr ")" "{" statement+ "}" ["else" "{" statement+ "}"]
//! object      := JSON object; values may also be member references (a.b.c)
//! expr        := and ("||" and)*
//! and         := unary ("&&" unary)*
//! unary       := "!" unary | "(" expr ")" | operand [cmp operand]
//! operand     := reference | string | number | true | false
//! ```
//!
//! Parsing stops at the first error; there is no recovery.

mod ast;
mod lexer;
mod parser;
mod render;

use std::fmt;

use serde::Serialize;

pub use ast::*;

/// Position and description of the first syntax violation in a flow.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, thiserror::Error)]
pub struct ParseError {
    /// 1-based.
    pub line: usize,
    /// 1-based, counted in characters.
    pub column: usize,
    pub expected: String,
    pub found: String,
}

impl ParseError {
    pub(crate) fn new(line: usize, column: usize, expected: impl Into<String>, found: impl Into<String>) -> Self {
        Self {
            line,
            column,
            expected: expected.into(),
            found: found.into(),
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "line {}, column {}: expected {}, found {}",
            self.line, self.column, self.expected, self.found
        )
    }
}

/// Parses a complete flow. The whole input must conform to the grammar.
pub fn parse_flow(source: &str) -> Result<Flow, ParseError> {
    let mut parser = parser::Parser::new(source)?;
    let statements = parser.program()?;
    Ok(Flow {
        statements,
        source_text: source.to_string(),
    })
}

/// Qualified names of every call in source order, duplicates kept.
pub fn extract_api_sequence(flow: &Flow) -> Vec<String> {
    flow.api_calls()
        .into_iter()
        .map(|call| call.qualified_name().to_string())
        .collect()
}

/// Canonical text: one statement per line, compact JSON arguments.
pub fn serialize_flow(flow: &Flow) -> String {
    let mut out = String::new();
    render::render_statements(&flow.statements, 0, &mut out);
    out
}

/// Top-level argument keys of each call, in source order.
pub fn extract_parameter_usages(flow: &Flow) -> Vec<(String, Vec<String>)> {
    flow.api_calls()
        .into_iter()
        .map(|call| {
            (
                call.qualified_name().to_string(),
                call.arguments().keys().map(str::to_string).collect(),
            )
        })
        .collect()
}

/// Renders an expression the way it appears inside `if (...)`.
pub fn serialize_expression(expr: &Expression) -> String {
    let mut out = String::new();
    render::render_expression(expr, 0, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_fixtures::{GROUND_TRUTH, PREDICTION};

    fn calls(flow: &Flow) -> usize {
        flow.api_calls().len()
    }

    #[test]
    fn parses_ground_truth_example() {
        let flow = parse_flow(GROUND_TRUTH).unwrap();
        assert_eq!(flow.statements.len(), 2);
        let Statement::Call(first) = &flow.statements[0] else {
            panic!("expected call");
        };
        assert!(first.awaited);
        assert_eq!(first.target_variable, "triggerOutputs");
        assert_eq!(first.call.namespace(), "shared_microsoftforms");
        assert_eq!(first.call.function(), "CreateFormWebhook");
        assert!(first.call.arguments().is_empty());
        let Statement::Call(second) = &flow.statements[1] else {
            panic!("expected call");
        };
        assert!(!second.awaited);
        assert_eq!(
            second.call.arguments().get("poster"),
            Some(&ParamValue::String("User".into()))
        );
    }

    #[test]
    fn empty_input_is_error_at_origin() {
        let err = parse_flow("").unwrap_err();
        assert_eq!((err.line, err.column), (1, 1));
        assert_eq!(err.found, "end of input");
    }

    #[test]
    fn whitespace_only_input_is_error_at_end() {
        let err = parse_flow("  \n ").unwrap_err();
        assert_eq!((err.line, err.column), (2, 2));
    }

    #[test]
    fn malformed_object_golden_position() {
        let err = parse_flow("x = shared_a.F({)").unwrap_err();
        assert_eq!(err, ParseError::new(1, 17, "string key or `}`", "`)`"), "{err}");
    }

    #[test]
    fn sequence_of_ground_truth() {
        let flow = parse_flow(GROUND_TRUTH).unwrap();
        assert_eq!(
            extract_api_sequence(&flow),
            [
                "shared_microsoftforms.CreateFormWebhook",
                "shared_teams.PostMessageToConversation"
            ]
        );
    }

    #[test]
    fn repeated_call_keeps_duplicates() {
        let flow = parse_flow("a = x.F({}); b = x.F({});").unwrap();
        assert_eq!(extract_api_sequence(&flow), ["x.F", "x.F"]);
    }

    #[test]
    fn conditional_flattens_then_before_else() {
        let src = r#"
            t = await t.T({});
            if (t.body.status == "ok") {
                a = a.F({});
            } else {
                b = b.G({});
            }
        "#;
        let flow = parse_flow(src).unwrap();
        // Hand walk: [Call t.T, Conditional { then: [Call a.F], else: [Call b.G] }]
        assert_eq!(flow.statements.len(), 2);
        let Statement::Conditional(c) = &flow.statements[1] else {
            panic!("expected conditional");
        };
        assert_eq!(c.then_branch.len(), 1);
        assert_eq!(c.else_branch.as_ref().map(Vec::len), Some(1));
        assert_eq!(extract_api_sequence(&flow), ["t.T", "a.F", "b.G"]);
    }

    #[test]
    fn serializes_ground_truth_to_two_lines() {
        let flow = parse_flow(GROUND_TRUTH).unwrap();
        let text = serialize_flow(&flow);
        assert_eq!(
            text,
            "triggerOutputs = await shared_microsoftforms.CreateFormWebhook({});\n\
             outputs_shared_teams_PostMessageToConversation = shared_teams.PostMessageToConversation({\"poster\":\"User\"});"
        );
        assert_eq!(parse_flow(&text).unwrap(), flow);
    }

    #[test]
    fn empty_object_renders_as_braces() {
        let flow = parse_flow("x = a.B( { } );").unwrap();
        assert_eq!(serialize_flow(&flow), "x = a.B({});");
    }

    #[test]
    fn parameter_usages_of_prediction() {
        let flow = parse_flow(PREDICTION).unwrap();
        let usages = extract_parameter_usages(&flow);
        assert_eq!(
            usages,
            vec![
                ("shared_microsoftforms.CreateFormWebhook".to_string(), vec![]),
                ("shared_office365users.MyProfile_V2".to_string(), vec![]),
                (
                    "shared_teams.PostMessageToConversation".to_string(),
                    vec!["poster".to_string(), "location".to_string()]
                ),
            ]
        );
    }

    #[test]
    fn nested_keys_are_not_usages() {
        let flow = parse_flow(r#"x = a.B({"a": {"b": 1}});"#).unwrap();
        let call = flow.api_calls()[0];
        // AST: a -> Object { b -> 1 }
        let Some(ParamValue::Object(inner)) = call.arguments().get("a") else {
            panic!("expected nested object");
        };
        assert_eq!(inner.keys().collect::<Vec<_>>(), ["b"]);
        assert_eq!(
            extract_parameter_usages(&flow),
            vec![("a.B".to_string(), vec!["a".to_string()])]
        );
    }

    #[test]
    fn duplicate_key_is_rejected() {
        let err = parse_flow(r#"x = a.B({"k": 1, "k": 2});"#).unwrap_err();
        assert_eq!((err.line, err.column), (1, 18));
        assert_eq!(err.expected, "unique key");
    }

    #[test]
    fn references_and_literals_in_arguments() {
        let src = r#"x = a.B({"to": triggerOutputs.body.email, "n": -1.5e3, "ok": true, "none": null, "l": [1, "two", [false]]});"#;
        let flow = parse_flow(src).unwrap();
        let args = flow.api_calls()[0].arguments();
        assert_eq!(
            args.get("to"),
            Some(&ParamValue::Reference(MemberAccess {
                base_variable: "triggerOutputs".into(),
                path: vec!["body".into(), "email".into()],
            }))
        );
        assert_eq!(args.get("none"), Some(&ParamValue::Null));
        let round = parse_flow(&serialize_flow(&flow)).unwrap();
        assert_eq!(round, flow);
    }

    #[test]
    fn string_escapes_round_trip() {
        let src = r#"x = a.B({"s": "quote \" slash \\ tab \t uni é pair 😀"});"#;
        let flow = parse_flow(src).unwrap();
        let Some(ParamValue::String(s)) = flow.api_calls()[0].arguments().get("s") else {
            panic!()
        };
        assert_eq!(s, "quote \" slash \\ tab \t uni é pair 😀");
        assert_eq!(parse_flow(&serialize_flow(&flow)).unwrap(), flow);
    }

    #[test]
    fn expression_precedence() {
        let flow = parse_flow("if (!a.x == 1 || b && (c.y != \"z\" || d)) { q = n.F({}); }").unwrap();
        let Statement::Conditional(c) = &flow.statements[0] else {
            panic!()
        };
        assert_eq!(
            serialize_expression(&c.condition),
            "!(a.x == 1) || b && (c.y != \"z\" || d)"
        );
        assert_eq!(parse_flow(&serialize_flow(&flow)).unwrap(), flow);
    }

    #[test]
    fn right_nested_logical_keeps_grouping() {
        let flow = parse_flow("if (a || (b || c)) { q = n.F({}); }").unwrap();
        let Statement::Conditional(c) = &flow.statements[0] else {
            panic!()
        };
        assert_eq!(serialize_expression(&c.condition), "a || (b || c)");
    }

    #[test]
    fn conditional_requires_statement_in_branch() {
        let err = parse_flow("if (a) { }").unwrap_err();
        assert_eq!(err.expected, "statement");
        assert_eq!((err.line, err.column), (1, 10));
    }

    #[test]
    fn keywords_are_not_variables() {
        assert!(parse_flow("await = a.B({});").is_err());
        assert!(parse_flow("x = if.B({});").is_err());
        // Function names after the dot may be anything identifier-shaped.
        assert!(parse_flow("x = a.null({});").is_ok());
    }

    #[test]
    fn missing_semicolon() {
        let err = parse_flow("x = a.B({})\ny = a.C({});").unwrap_err();
        assert_eq!((err.line, err.column), (2, 1));
        assert_eq!(err.expected, "`;`");
    }

    #[test]
    fn lexical_error_positions() {
        let err = parse_flow("x = a.B({\"k\": 1.});").unwrap_err();
        assert_eq!((err.line, err.column), (1, 17));
        let err = parse_flow("x = a.B({\"k\": \"open});").unwrap_err();
        assert_eq!(err.found, "end of input");
        let err = parse_flow("x = a.B({}); #").unwrap_err();
        assert_eq!((err.line, err.column), (1, 14));
        let err = parse_flow("x = a.B({\"k\": 1e999});").unwrap_err();
        assert_eq!(err.expected, "finite number");
    }

    #[test]
    fn syntax_error_before_lexical_error_wins() {
        let err = parse_flow("x y # ").unwrap_err();
        assert_eq!((err.line, err.column), (1, 3));
    }

    #[test]
    fn deep_nesting_is_rejected_not_overflowed() {
        let src = format!("x = a.B({{\"k\": {}", "[".repeat(10_000));
        let err = parse_flow(&src).unwrap_err();
        assert_eq!(err.expected, "shallower nesting");
        let cond = format!("if ({}a) {{ x = a.B({{}}); }}", "!".repeat(10_000));
        assert!(parse_flow(&cond).is_err());
    }

    #[test]
    fn sequence_length_matches_call_count() {
        let flow =
            parse_flow("a = x.A({}); if (a) { b = x.B({}); if (b) { c = x.C({}); } } else { d = x.D({}); }").unwrap();
        assert_eq!(extract_api_sequence(&flow).len(), calls(&flow));
        assert_eq!(extract_api_sequence(&flow), ["x.A", "x.B", "x.C", "x.D"]);
    }
}
