use std::mem;

use super::ast::*;
use super::lexer::{Lexer, Token, TokenKind};
use super::ParseError;

/// Nesting bound for objects, lists, conditionals and parenthesised
/// expressions. Keeps recursion on hostile input well inside the stack.
const MAX_DEPTH: usize = 96;

const KEYWORDS: &[&str] = &["if", "else", "await", "true", "false", "null"];

pub(crate) struct Parser<'a> {
    lexer: Lexer<'a>,
    current: Token,
    depth: usize,
}

impl<'a> Parser<'a> {
    pub fn new(src: &'a str) -> Result<Self, ParseError> {
        let mut lexer = Lexer::new(src);
        let current = lexer.next_token()?;
        Ok(Self {
            lexer,
            current,
            depth: 0,
        })
    }

    fn advance(&mut self) -> Result<Token, ParseError> {
        let next = self.lexer.next_token()?;
        Ok(mem::replace(&mut self.current, next))
    }

    fn error(&self, expected: &str) -> ParseError {
        ParseError::new(
            self.current.line,
            self.current.column,
            expected,
            self.current.kind.to_string(),
        )
    }

    fn at(&self, kind: &TokenKind) -> bool {
        &self.current.kind == kind
    }

    fn at_keyword(&self, keyword: &str) -> bool {
        matches!(&self.current.kind, TokenKind::Ident(name) if name == keyword)
    }

    fn expect(&mut self, kind: TokenKind) -> Result<(), ParseError> {
        if self.current.kind == kind {
            self.advance()?;
            Ok(())
        } else {
            Err(self.error(&kind.to_string()))
        }
    }

    fn expect_keyword(&mut self, keyword: &str) -> Result<(), ParseError> {
        if self.at_keyword(keyword) {
            self.advance()?;
            Ok(())
        } else {
            Err(self.error(&format!("`{keyword}`")))
        }
    }

    /// Any identifier, keywords included (used after `.`).
    fn name(&mut self, what: &str) -> Result<String, ParseError> {
        match &self.current.kind {
            TokenKind::Ident(_) => match self.advance()?.kind {
                TokenKind::Ident(name) => Ok(name),
                _ => unreachable!(),
            },
            _ => Err(self.error(what)),
        }
    }

    /// An identifier that is not a reserved word.
    fn variable(&mut self, what: &str) -> Result<String, ParseError> {
        match &self.current.kind {
            TokenKind::Ident(name) if !KEYWORDS.contains(&name.as_str()) => self.name(what),
            _ => Err(self.error(what)),
        }
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(self.error("shallower nesting"));
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    pub fn program(&mut self) -> Result<Vec<Statement>, ParseError> {
        let mut statements = vec![self.statement()?];
        while !self.at(&TokenKind::Eof) {
            statements.push(self.statement()?);
        }
        Ok(statements)
    }

    fn block(&mut self) -> Result<Vec<Statement>, ParseError> {
        self.expect(TokenKind::LBrace)?;
        self.enter()?;
        let mut statements = vec![self.statement()?];
        while !self.at(&TokenKind::RBrace) {
            statements.push(self.statement()?);
        }
        self.leave();
        self.advance()?;
        Ok(statements)
    }

    fn statement(&mut self) -> Result<Statement, ParseError> {
        if self.at_keyword("if") {
            return self.conditional().map(Statement::Conditional);
        }
        let target_variable = self.variable("statement")?;
        self.expect(TokenKind::Assign)?;
        let awaited = if self.at_keyword("await") {
            self.advance()?;
            true
        } else {
            false
        };
        let namespace = self.variable("API namespace")?;
        self.expect(TokenKind::Dot)?;
        let function = self.name("API function name")?;
        self.expect(TokenKind::LParen)?;
        let arguments = self.object()?;
        self.expect(TokenKind::RParen)?;
        self.expect(TokenKind::Semicolon)?;
        let call = ApiCall::new(namespace, function, arguments).expect("lexer only yields identifier tokens");
        Ok(Statement::Call(ApiCallStatement {
            target_variable,
            awaited,
            call,
        }))
    }

    fn conditional(&mut self) -> Result<Conditional, ParseError> {
        self.expect_keyword("if")?;
        self.expect(TokenKind::LParen)?;
        let condition = self.or_expr()?;
        self.expect(TokenKind::RParen)?;
        let then_branch = self.block()?;
        let else_branch = if self.at_keyword("else") {
            self.advance()?;
            Some(self.block()?)
        } else {
            None
        };
        Ok(Conditional {
            condition,
            then_branch,
            else_branch,
        })
    }

    fn object(&mut self) -> Result<ParamObject, ParseError> {
        self.expect(TokenKind::LBrace)?;
        self.enter()?;
        let mut object = ParamObject::new();
        if !self.at(&TokenKind::RBrace) {
            loop {
                let (line, column) = (self.current.line, self.current.column);
                let key = match &self.current.kind {
                    TokenKind::Str(_) => match self.advance()?.kind {
                        TokenKind::Str(s) => s,
                        _ => unreachable!(),
                    },
                    _ => {
                        let expected = if object.is_empty() {
                            "string key or `}`"
                        } else {
                            "string key"
                        };
                        return Err(self.error(expected));
                    }
                };
                self.expect(TokenKind::Colon)?;
                let value = self.value()?;
                if object.insert(key.clone(), value).is_err() {
                    return Err(ParseError::new(
                        line,
                        column,
                        "unique key",
                        format!("duplicate key {}", serde_json::Value::from(key)),
                    ));
                }
                if self.at(&TokenKind::Comma) {
                    self.advance()?;
                } else {
                    break;
                }
            }
        }
        if !self.at(&TokenKind::RBrace) {
            return Err(self.error("`,` or `}`"));
        }
        self.leave();
        self.advance()?;
        Ok(object)
    }

    fn list(&mut self) -> Result<Vec<ParamValue>, ParseError> {
        self.expect(TokenKind::LBracket)?;
        self.enter()?;
        let mut items = Vec::new();
        if !self.at(&TokenKind::RBracket) {
            loop {
                items.push(self.value()?);
                if self.at(&TokenKind::Comma) {
                    self.advance()?;
                } else {
                    break;
                }
            }
        }
        if !self.at(&TokenKind::RBracket) {
            return Err(self.error("`,` or `]`"));
        }
        self.leave();
        self.advance()?;
        Ok(items)
    }

    fn value(&mut self) -> Result<ParamValue, ParseError> {
        match &self.current.kind {
            TokenKind::LBrace => self.object().map(ParamValue::Object),
            TokenKind::LBracket => self.list().map(ParamValue::List),
            TokenKind::Ident(name) => match name.as_str() {
                "true" => self.advance().map(|_| ParamValue::Bool(true)),
                "false" => self.advance().map(|_| ParamValue::Bool(false)),
                "null" => self.advance().map(|_| ParamValue::Null),
                _ => self.member_access().map(ParamValue::Reference),
            },
            TokenKind::Str(_) | TokenKind::Number(_) => match self.advance()?.kind {
                TokenKind::Str(s) => Ok(ParamValue::String(s)),
                TokenKind::Number(n) => Ok(ParamValue::Number(n)),
                _ => unreachable!(),
            },
            _ => Err(self.error("value")),
        }
    }

    fn member_access(&mut self) -> Result<MemberAccess, ParseError> {
        let base_variable = self.variable("variable")?;
        let mut path = Vec::new();
        while self.at(&TokenKind::Dot) {
            self.advance()?;
            path.push(self.name("property name")?);
        }
        Ok(MemberAccess { base_variable, path })
    }

    fn or_expr(&mut self) -> Result<Expression, ParseError> {
        let mut left = self.and_expr()?;
        while self.at(&TokenKind::OrOr) {
            self.advance()?;
            let right = self.and_expr()?;
            left = Expression::Logical {
                op: LogicalOp::Or,
                left: Box::new(left),
                right: Box::new(right),
            };
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> Result<Expression, ParseError> {
        let mut left = self.unary()?;
        while self.at(&TokenKind::AndAnd) {
            self.advance()?;
            let right = self.unary()?;
            left = Expression::Logical {
                op: LogicalOp::And,
                left: Box::new(left),
                right: Box::new(right),
            };
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<Expression, ParseError> {
        self.enter()?;
        let expr = if self.at(&TokenKind::Bang) {
            self.advance()?;
            Expression::Negation {
                inner: Box::new(self.unary()?),
            }
        } else {
            self.primary()?
        };
        self.leave();
        Ok(expr)
    }

    fn primary(&mut self) -> Result<Expression, ParseError> {
        if self.at(&TokenKind::LParen) {
            self.advance()?;
            let inner = self.or_expr()?;
            self.expect(TokenKind::RParen)?;
            // `(a) == b` is accepted when the parenthesised part is a plain operand.
            return match inner {
                Expression::Member(m) => self.comparison_tail(Operand::Member(m)),
                Expression::Literal { value } => self.comparison_tail(Operand::Literal(value)),
                other => Ok(other),
            };
        }
        let left = self.operand()?;
        self.comparison_tail(left)
    }

    fn comparison_tail(&mut self, left: Operand) -> Result<Expression, ParseError> {
        let op = match self.current.kind {
            TokenKind::EqEq => ComparisonOp::Eq,
            TokenKind::NotEq => ComparisonOp::Ne,
            TokenKind::Lt => ComparisonOp::Lt,
            TokenKind::Le => ComparisonOp::Le,
            TokenKind::Gt => ComparisonOp::Gt,
            TokenKind::Ge => ComparisonOp::Ge,
            _ => return Ok(left.into()),
        };
        self.advance()?;
        let right = self.operand()?;
        Ok(Expression::Comparison { left, op, right })
    }

    fn operand(&mut self) -> Result<Operand, ParseError> {
        match &self.current.kind {
            TokenKind::Ident(name) => match name.as_str() {
                "true" => self.advance().map(|_| Operand::Literal(Literal::Bool(true))),
                "false" => self.advance().map(|_| Operand::Literal(Literal::Bool(false))),
                _ => self.member_access().map(Operand::Member),
            },
            TokenKind::Str(_) | TokenKind::Number(_) => match self.advance()?.kind {
                TokenKind::Str(s) => Ok(Operand::Literal(Literal::String(s))),
                TokenKind::Number(n) => Ok(Operand::Literal(Literal::Number(n))),
                _ => unreachable!(),
            },
            _ => Err(self.error("condition operand")),
        }
    }
}
