//! Syntax tree for workflow flows.

use serde::Serialize;
use serde_json::Number;

use super::lexer::is_identifier;

/// A parsed workflow program.
///
/// Equality is structural: two flows are equal when their statements are,
/// regardless of the whitespace or formatting of the text they came from.
#[derive(Debug, Clone, Serialize)]
pub struct Flow {
    pub statements: Vec<Statement>,
    #[serde(skip)]
    pub source_text: String,
}

impl PartialEq for Flow {
    fn eq(&self, other: &Self) -> bool {
        self.statements == other.statements
    }
}

impl Flow {
    /// Every API call in the flow, depth first. Conditional branches are
    /// visited then-branch first, else-branch second.
    pub fn api_calls(&self) -> Vec<&ApiCall> {
        let mut out = Vec::new();
        collect_calls(&self.statements, &mut out);
        out
    }
}

fn collect_calls<'a>(statements: &'a [Statement], out: &mut Vec<&'a ApiCall>) {
    for statement in statements {
        match statement {
            Statement::Call(s) => out.push(&s.call),
            Statement::Conditional(c) => {
                collect_calls(&c.then_branch, out);
                if let Some(else_branch) = &c.else_branch {
                    collect_calls(else_branch, out);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Statement {
    Call(ApiCallStatement),
    Conditional(Conditional),
}

/// `target = [await] namespace.function({...});`
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiCallStatement {
    pub target_variable: String,
    pub awaited: bool,
    pub call: ApiCall,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Conditional {
    pub condition: Expression,
    pub then_branch: Vec<Statement>,
    pub else_branch: Option<Vec<Statement>>,
}

/// Invocation of one catalog function, e.g. `shared_teams.PostMessageToConversation`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiCall {
    namespace: String,
    function: String,
    qualified_name: String,
    arguments: ParamObject,
}

impl ApiCall {
    /// Returns `None` when either side is not a valid identifier.
    pub fn new(namespace: impl Into<String>, function: impl Into<String>, arguments: ParamObject) -> Option<Self> {
        let namespace = namespace.into();
        let function = function.into();
        if !is_identifier(&namespace) || !is_identifier(&function) {
            return None;
        }
        let qualified_name = format!("{namespace}.{function}");
        Some(Self {
            namespace,
            function,
            qualified_name,
            arguments,
        })
    }

    pub fn namespace(&self) -> &str {
        &self.namespace
    }

    pub fn function(&self) -> &str {
        &self.function
    }

    pub fn qualified_name(&self) -> &str {
        &self.qualified_name
    }

    pub fn arguments(&self) -> &ParamObject {
        &self.arguments
    }
}

/// Insertion-ordered object literal with unique string keys.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamObject {
    entries: Vec<(String, ParamValue)>,
}

impl ParamObject {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends an entry. Returns the value back if the key is already present.
    pub fn insert(&mut self, key: impl Into<String>, value: ParamValue) -> Result<(), ParamValue> {
        let key = key.into();
        if self.get(&key).is_some() {
            return Err(value);
        }
        self.entries.push((key, value));
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&ParamValue> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    pub fn entries(&self) -> &[(String, ParamValue)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Serialize for ParamObject {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = serializer.serialize_map(Some(self.entries.len()))?;
        for (k, v) in &self.entries {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ParamValue {
    String(String),
    Number(Number),
    Bool(bool),
    Null,
    Object(ParamObject),
    List(Vec<ParamValue>),
    /// Reference to an earlier step's output, e.g. `triggerOutputs.body.id`.
    Reference(MemberAccess),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemberAccess {
    pub base_variable: String,
    pub path: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Literal {
    String(String),
    Number(Number),
    Bool(bool),
}

/// Comparison operands are restricted to references and literals.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Operand {
    Member(MemberAccess),
    Literal(Literal),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ComparisonOp {
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl ComparisonOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ComparisonOp::Eq => "==",
            ComparisonOp::Ne => "!=",
            ComparisonOp::Lt => "<",
            ComparisonOp::Le => "<=",
            ComparisonOp::Gt => ">",
            ComparisonOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LogicalOp {
    And,
    Or,
}

impl LogicalOp {
    pub fn symbol(self) -> &'static str {
        match self {
            LogicalOp::And => "&&",
            LogicalOp::Or => "||",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Expression {
    Member(MemberAccess),
    Literal {
        value: Literal,
    },
    Comparison {
        left: Operand,
        op: ComparisonOp,
        right: Operand,
    },
    Logical {
        op: LogicalOp,
        left: Box<Expression>,
        right: Box<Expression>,
    },
    Negation {
        inner: Box<Expression>,
    },
}

impl From<Operand> for Expression {
    fn from(operand: Operand) -> Self {
        match operand {
            Operand::Member(m) => Expression::Member(m),
            Operand::Literal(value) => Expression::Literal { value },
        }
    }
}
