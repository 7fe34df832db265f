use std::fmt::Write;

use super::ast::*;

const INDENT: &str = "  ";

pub(crate) fn render_statements(statements: &[Statement], depth: usize, out: &mut String) {
    for statement in statements {
        if !out.is_empty() {
            out.push('\n');
        }
        let pad = INDENT.repeat(depth);
        match statement {
            Statement::Call(s) => {
                out.push_str(&pad);
                out.push_str(&s.target_variable);
                out.push_str(" = ");
                if s.awaited {
                    out.push_str("await ");
                }
                out.push_str(s.call.qualified_name());
                out.push('(');
                render_object(s.call.arguments(), out);
                out.push_str(");");
            }
            Statement::Conditional(c) => {
                let _ = write!(out, "{pad}if (");
                render_expression(&c.condition, 0, out);
                out.push_str(") {");
                render_statements(&c.then_branch, depth + 1, out);
                let _ = write!(out, "\n{pad}}}");
                if let Some(else_branch) = &c.else_branch {
                    out.push_str(" else {");
                    render_statements(else_branch, depth + 1, out);
                    let _ = write!(out, "\n{pad}}}");
                }
            }
        }
    }
}

fn render_string(s: &str, out: &mut String) {
    out.push_str(&serde_json::Value::from(s).to_string());
}

pub(crate) fn render_object(object: &ParamObject, out: &mut String) {
    out.push('{');
    for (i, (key, value)) in object.entries().iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        render_string(key, out);
        out.push(':');
        render_value(value, out);
    }
    out.push('}');
}

fn render_value(value: &ParamValue, out: &mut String) {
    match value {
        ParamValue::String(s) => render_string(s, out),
        ParamValue::Number(n) => {
            let _ = write!(out, "{n}");
        }
        ParamValue::Bool(b) => {
            let _ = write!(out, "{b}");
        }
        ParamValue::Null => out.push_str("null"),
        ParamValue::Object(o) => render_object(o, out),
        ParamValue::List(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                render_value(item, out);
            }
            out.push(']');
        }
        ParamValue::Reference(m) => render_member(m, out),
    }
}

fn render_member(m: &MemberAccess, out: &mut String) {
    out.push_str(&m.base_variable);
    for segment in &m.path {
        out.push('.');
        out.push_str(segment);
    }
}

fn render_literal(literal: &Literal, out: &mut String) {
    match literal {
        Literal::String(s) => render_string(s, out),
        Literal::Number(n) => {
            let _ = write!(out, "{n}");
        }
        Literal::Bool(b) => {
            let _ = write!(out, "{b}");
        }
    }
}

fn render_operand(operand: &Operand, out: &mut String) {
    match operand {
        Operand::Member(m) => render_member(m, out),
        Operand::Literal(l) => render_literal(l, out),
    }
}

// Binding strength: `||` < `&&` < `!` < comparison < operand.
fn precedence(expr: &Expression) -> u8 {
    match expr {
        Expression::Logical { op: LogicalOp::Or, .. } => 1,
        Expression::Logical { op: LogicalOp::And, .. } => 2,
        Expression::Negation { .. } => 3,
        Expression::Comparison { .. } => 4,
        Expression::Member(_) | Expression::Literal { .. } => 5,
    }
}

pub(crate) fn render_expression(expr: &Expression, min_precedence: u8, out: &mut String) {
    let wrap = precedence(expr) < min_precedence;
    if wrap {
        out.push('(');
    }
    match expr {
        Expression::Member(m) => render_member(m, out),
        Expression::Literal { value } => render_literal(value, out),
        Expression::Comparison { left, op, right } => {
            render_operand(left, out);
            let _ = write!(out, " {} ", op.symbol());
            render_operand(right, out);
        }
        Expression::Logical { op, left, right } => {
            let p = precedence(expr);
            render_expression(left, p, out);
            let _ = write!(out, " {} ", op.symbol());
            // Right operand of a left-associative chain keeps its grouping.
            render_expression(right, p + 1, out);
        }
        Expression::Negation { inner } => {
            out.push('!');
            let min = match inner.as_ref() {
                Expression::Negation { .. } => 3,
                _ => 5,
            };
            render_expression(inner, min, out);
        }
    }
    if wrap {
        out.push(')');
    }
}
