use std::fmt;

use serde_json::Number;

use super::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum TokenKind {
    Ident(String),
    Str(String),
    Number(Number),
    Assign,
    Semicolon,
    Dot,
    Comma,
    Colon,
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    EqEq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    AndAnd,
    OrOr,
    Bang,
    Eof,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let punct = match self {
            TokenKind::Ident(name) => return write!(f, "identifier `{name}`"),
            TokenKind::Str(s) => return write!(f, "string {}", serde_json::Value::from(s.as_str())),
            TokenKind::Number(n) => return write!(f, "number {n}"),
            TokenKind::Eof => return f.write_str("end of input"),
            TokenKind::Assign => "=",
            TokenKind::Semicolon => ";",
            TokenKind::Dot => ".",
            TokenKind::Comma => ",",
            TokenKind::Colon => ":",
            TokenKind::LParen => "(",
            TokenKind::RParen => ")",
            TokenKind::LBrace => "{",
            TokenKind::RBrace => "}",
            TokenKind::LBracket => "[",
            TokenKind::RBracket => "]",
            TokenKind::EqEq => "==",
            TokenKind::NotEq => "!=",
            TokenKind::Lt => "<",
            TokenKind::Le => "<=",
            TokenKind::Gt => ">",
            TokenKind::Ge => ">=",
            TokenKind::AndAnd => "&&",
            TokenKind::OrOr => "||",
            TokenKind::Bang => "!",
        };
        write!(f, "`{punct}`")
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub kind: TokenKind,
    pub line: usize,
    pub column: usize,
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Pull-based tokenizer; tokens are produced on demand so that the parser
/// reports whichever failure comes first in the input.
pub(crate) struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    line: usize,
    column: usize,
}

impl<'a> Lexer<'a> {
    pub fn new(src: &'a str) -> Self {
        Self {
            src,
            pos: 0,
            line: 1,
            column: 1,
        }
    }

    fn peek_char(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn peek_second(&self) -> Option<char> {
        let mut it = self.src[self.pos..].chars();
        it.next();
        it.next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek_char()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn error_here(&self, expected: &str) -> ParseError {
        let found = match self.peek_char() {
            Some(c) => format!("{c:?}"),
            None => "end of input".to_string(),
        };
        ParseError::new(self.line, self.column, expected, found)
    }

    pub fn next_token(&mut self) -> Result<Token, ParseError> {
        while matches!(self.peek_char(), Some(c) if c.is_whitespace()) {
            self.bump();
        }
        let (line, column) = (self.line, self.column);
        let token = |kind| Token { kind, line, column };
        let Some(c) = self.peek_char() else {
            return Ok(token(TokenKind::Eof));
        };

        if c.is_ascii_alphabetic() || c == '_' {
            let start = self.pos;
            while matches!(self.peek_char(), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
                self.bump();
            }
            return Ok(token(TokenKind::Ident(self.src[start..self.pos].to_string())));
        }
        if c == '"' {
            return self.string().map(|s| token(TokenKind::Str(s)));
        }
        if c == '-' || c.is_ascii_digit() {
            return self.number().map(|n| token(TokenKind::Number(n)));
        }

        let two = |lexer: &mut Self, kind| {
            lexer.bump();
            lexer.bump();
            Ok(token(kind))
        };
        let next = self.peek_second();
        match (c, next) {
            ('=', Some('=')) => return two(self, TokenKind::EqEq),
            ('!', Some('=')) => return two(self, TokenKind::NotEq),
            ('<', Some('=')) => return two(self, TokenKind::Le),
            ('>', Some('=')) => return two(self, TokenKind::Ge),
            ('&', Some('&')) => return two(self, TokenKind::AndAnd),
            ('|', Some('|')) => return two(self, TokenKind::OrOr),
            _ => {}
        }
        let kind = match c {
            '=' => TokenKind::Assign,
            ';' => TokenKind::Semicolon,
            '.' => TokenKind::Dot,
            ',' => TokenKind::Comma,
            ':' => TokenKind::Colon,
            '(' => TokenKind::LParen,
            ')' => TokenKind::RParen,
            '{' => TokenKind::LBrace,
            '}' => TokenKind::RBrace,
            '[' => TokenKind::LBracket,
            ']' => TokenKind::RBracket,
            '<' => TokenKind::Lt,
            '>' => TokenKind::Gt,
            '!' => TokenKind::Bang,
            _ => return Err(self.error_here("token")),
        };
        self.bump();
        Ok(token(kind))
    }

    fn string(&mut self) -> Result<String, ParseError> {
        self.bump(); // opening quote
        let mut out = String::new();
        loop {
            match self.peek_char() {
                None => return Err(self.error_here("closing `\"`")),
                Some('"') => {
                    self.bump();
                    return Ok(out);
                }
                Some('\\') => {
                    self.bump();
                    let escaped = match self.peek_char() {
                        Some('"') => '"',
                        Some('\\') => '\\',
                        Some('/') => '/',
                        Some('b') => '\u{8}',
                        Some('f') => '\u{c}',
                        Some('n') => '\n',
                        Some('r') => '\r',
                        Some('t') => '\t',
                        Some('u') => {
                            self.bump();
                            out.push(self.unicode_escape()?);
                            continue;
                        }
                        _ => return Err(self.error_here("escape sequence")),
                    };
                    self.bump();
                    out.push(escaped);
                }
                Some(c) if (c as u32) < 0x20 => {
                    return Err(self.error_here("string character"));
                }
                Some(c) => {
                    self.bump();
                    out.push(c);
                }
            }
        }
    }

    fn hex4(&mut self) -> Result<u32, ParseError> {
        let mut value = 0u32;
        for _ in 0..4 {
            match self.peek_char().and_then(|c| c.to_digit(16)) {
                Some(d) => {
                    self.bump();
                    value = value * 16 + d;
                }
                None => return Err(self.error_here("hex digit")),
            }
        }
        Ok(value)
    }

    // Called with the `\u` already consumed.
    fn unicode_escape(&mut self) -> Result<char, ParseError> {
        let first = self.hex4()?;
        let code = if (0xD800..0xDC00).contains(&first) {
            if self.peek_char() != Some('\\') || self.peek_second() != Some('u') {
                return Err(self.error_here("low surrogate escape"));
            }
            self.bump();
            self.bump();
            let second = self.hex4()?;
            if !(0xDC00..0xE000).contains(&second) {
                return Err(self.error_here("low surrogate escape"));
            }
            0x10000 + ((first - 0xD800) << 10) + (second - 0xDC00)
        } else {
            first
        };
        char::from_u32(code).ok_or_else(|| self.error_here("valid unicode scalar"))
    }

    fn digits(&mut self) -> usize {
        let mut n = 0;
        while matches!(self.peek_char(), Some(c) if c.is_ascii_digit()) {
            self.bump();
            n += 1;
        }
        n
    }

    fn number(&mut self) -> Result<Number, ParseError> {
        let (line, column) = (self.line, self.column);
        let start = self.pos;
        if self.peek_char() == Some('-') {
            self.bump();
        }
        match self.peek_char() {
            Some('0') => {
                self.bump();
            }
            Some(c) if c.is_ascii_digit() => {
                self.digits();
            }
            _ => return Err(self.error_here("digit")),
        }
        if self.peek_char() == Some('.') {
            self.bump();
            if self.digits() == 0 {
                return Err(self.error_here("digit"));
            }
        }
        if matches!(self.peek_char(), Some('e' | 'E')) {
            self.bump();
            if matches!(self.peek_char(), Some('+' | '-')) {
                self.bump();
            }
            if self.digits() == 0 {
                return Err(self.error_here("digit"));
            }
        }
        let text = &self.src[start..self.pos];
        text.parse::<Number>()
            .map_err(|_| ParseError::new(line, column, "finite number", text))
    }
}
