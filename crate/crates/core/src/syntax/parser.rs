use crate::term::{ChrConstraint, Constraint, Equation, Op, Term, Var};

use super::{LoadError, Program, Rule};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Lower(String),
    Upper(String),
    Int(i64),
    Atom(String),
    At,
    Backslash,
    Simp,
    Prop,
    Bar,
    OrOr,
    AndAnd,
    EqEq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    Plus,
    Minus,
    Star,
    Assign,
    LParen,
    RParen,
    Comma,
    Dot,
    Eof,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(src: &str) -> Result<Vec<Spanned>, LoadError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let err = |line, col, message: String| LoadError::Parse { line, col, message };
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '%' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            if c.is_ascii_uppercase() {
                Tok::Upper(word)
            } else {
                Tok::Lower(word)
            }
        } else if c.is_ascii_digit() {
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let digits: String = chars[start..i].iter().collect();
            let n = digits
                .parse()
                .map_err(|_| err(tl, tc, format!("integer literal `{digits}` out of range")))?;
            Tok::Int(n)
        } else if c == '\'' {
            i += 1;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            if i >= chars.len() || chars[i] != '\'' {
                return Err(err(tl, tc, "malformed atom: expected letters, digits or `_` then `'`".into()));
            }
            let name: String = chars[start + 1..i].iter().collect();
            i += 1;
            Tok::Atom(name)
        } else {
            let rest: String = chars[i..chars.len().min(i + 3)].iter().collect();
            let table: [(&str, Tok); 21] = [
                ("<=>", Tok::Simp),
                ("==>", Tok::Prop),
                ("||", Tok::OrOr),
                ("&&", Tok::AndAnd),
                ("==", Tok::EqEq),
                ("!=", Tok::NotEq),
                ("<=", Tok::Le),
                (">=", Tok::Ge),
                ("<", Tok::Lt),
                (">", Tok::Gt),
                ("@", Tok::At),
                ("\\", Tok::Backslash),
                ("|", Tok::Bar),
                ("+", Tok::Plus),
                ("-", Tok::Minus),
                ("*", Tok::Star),
                ("=", Tok::Assign),
                ("(", Tok::LParen),
                (")", Tok::RParen),
                (",", Tok::Comma),
                (".", Tok::Dot),
            ];
            let (text, tok) = table
                .into_iter()
                .find(|(text, _)| rest.starts_with(text))
                .ok_or_else(|| err(tl, tc, format!("unexpected character `{c}`")))?;
            i += text.chars().count();
            tok
        };
        col += i - start;
        out.push(Spanned { tok, line: tl, col: tc });
    }
    out.push(Spanned {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

type PResult<T> = Result<T, LoadError>;

impl Parser {
    fn new(src: &str) -> PResult<Self> {
        Ok(Parser {
            toks: lex(src)?,
            pos: 0,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> PResult<T> {
        let s = &self.toks[self.pos];
        Err(LoadError::Parse {
            line: s.line,
            col: s.col,
            message: message.into(),
        })
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: Tok, what: &str) -> PResult<()> {
        if self.eat(&t) {
            Ok(())
        } else {
            self.error(format!("expected {what}, found {:?}", self.peek()))
        }
    }

    fn rule(&mut self) -> PResult<Rule> {
        let name = match self.bump() {
            Tok::Lower(n) | Tok::Upper(n) => n,
            other => {
                self.pos -= 1;
                return self.error(format!("expected rule name, found {other:?}"));
            }
        };
        self.expect(Tok::At, "`@`")?;
        let first = self.heads()?;
        let (propagated, simplified) = match self.bump() {
            Tok::Backslash => {
                let simplified = self.heads()?;
                self.expect(Tok::Simp, "`<=>`")?;
                (first, simplified)
            }
            Tok::Simp => (Vec::new(), first),
            Tok::Prop => (first, Vec::new()),
            _ => {
                self.pos -= 1;
                return self.error("expected `\\`, `<=>` or `==>`");
            }
        };
        // Optional guard: try `expr |`, otherwise rewind and read a body.
        let save = self.pos;
        let guard = match self.expr() {
            Ok(g) if self.eat(&Tok::Bar) => g,
            _ => {
                self.pos = save;
                Term::bool(true)
            }
        };
        let body = self.body()?;
        self.expect(Tok::Dot, "`.` at end of rule")?;
        Ok(Rule {
            name,
            propagated,
            simplified,
            guard,
            body,
        })
    }

    fn heads(&mut self) -> PResult<Vec<ChrConstraint>> {
        let mut hs = vec![self.chr()?];
        while self.eat(&Tok::Comma) {
            hs.push(self.chr()?);
        }
        Ok(hs)
    }

    fn chr(&mut self) -> PResult<ChrConstraint> {
        let pred = match self.peek().clone() {
            Tok::Upper(p) => {
                self.bump();
                p
            }
            other => return self.error(format!("expected constraint, found {other:?}")),
        };
        let mut args = Vec::new();
        if self.eat(&Tok::LParen) {
            args.push(self.expr()?);
            while self.eat(&Tok::Comma) {
                args.push(self.expr()?);
            }
            self.expect(Tok::RParen, "`)`")?;
        }
        Ok(ChrConstraint::new(&pred, args))
    }

    fn constraint(&mut self) -> PResult<Option<Constraint>> {
        if let Tok::Upper(_) = self.peek() {
            return Ok(Some(Constraint::Chr(self.chr()?)));
        }
        if self.peek() == &Tok::Lower("true".into()) {
            let save = self.pos;
            self.bump();
            if matches!(self.peek(), Tok::Comma | Tok::Dot | Tok::Eof) {
                return Ok(None);
            }
            self.pos = save;
        }
        let lhs = self.expr()?;
        self.expect(Tok::Assign, "`=` in equation")?;
        let rhs = self.expr()?;
        Ok(Some(Constraint::Eq(Equation::new(lhs, rhs))))
    }

    fn body(&mut self) -> PResult<Vec<Constraint>> {
        let mut out = Vec::new();
        loop {
            out.extend(self.constraint()?);
            if !self.eat(&Tok::Comma) {
                return Ok(out);
            }
        }
    }

    fn binop(&self) -> Option<Op> {
        Some(match self.peek() {
            Tok::OrOr => Op::Or,
            Tok::AndAnd => Op::And,
            Tok::EqEq => Op::Eq,
            Tok::NotEq => Op::Ne,
            Tok::Lt => Op::Lt,
            Tok::Le => Op::Le,
            Tok::Gt => Op::Gt,
            Tok::Ge => Op::Ge,
            Tok::Plus => Op::Add,
            Tok::Minus => Op::Sub,
            Tok::Star => Op::Mul,
            _ => return None,
        })
    }

    fn expr(&mut self) -> PResult<Term> {
        self.expr_prec(1)
    }

    // Precedence climbing; every operator is left-associative.
    fn expr_prec(&mut self, min: u8) -> PResult<Term> {
        let mut lhs = self.primary()?;
        while let Some(op) = self.binop() {
            let p = op.precedence();
            if p < min {
                break;
            }
            self.bump();
            let rhs = self.expr_prec(p + 1)?;
            lhs = Term::app(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn primary(&mut self) -> PResult<Term> {
        match self.bump() {
            Tok::Int(n) => Ok(Term::int(n)),
            Tok::Minus => match self.bump() {
                Tok::Int(n) => Ok(Term::int(-n)),
                _ => {
                    self.pos -= 1;
                    self.error("expected integer after unary `-`")
                }
            },
            Tok::Atom(a) => Ok(Term::atom(&a)),
            Tok::Lower(w) if w == "true" => Ok(Term::bool(true)),
            Tok::Lower(w) if w == "false" => Ok(Term::bool(false)),
            Tok::Lower(w) => Ok(Term::Var(Var::free(&w))),
            Tok::LParen => {
                let t = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(t)
            }
            other => {
                self.pos -= 1;
                self.error(format!("expected term, found {other:?}"))
            }
        }
    }
}

/// Parses, validates and compiles a program.
pub fn parse_program(src: &str) -> Result<Program, LoadError> {
    let mut p = Parser::new(src)?;
    let mut rules = Vec::new();
    while p.peek() != &Tok::Eof {
        rules.push(p.rule()?);
    }
    Program::new(rules)
}

/// Parses a comma-separated goal list. Duplicates are kept.
pub fn parse_goals(src: &str) -> Result<Vec<Constraint>, LoadError> {
    let mut p = Parser::new(src)?;
    if p.peek() == &Tok::Eof {
        return Ok(Vec::new());
    }
    let goals = p.body()?;
    p.eat(&Tok::Dot);
    if p.peek() != &Tok::Eof {
        return p.error("trailing input after goals");
    }
    Ok(goals.into_iter().map(|c| normalize_goal(&c)).collect())
}

fn normalize_goal(c: &Constraint) -> Constraint {
    match c {
        Constraint::Chr(c) => Constraint::Chr(c.normalize()),
        Constraint::Eq(e) => Constraint::Eq(Equation::new(e.lhs.normalize(), e.rhs.normalize())),
    }
}

/// Parses a single constraint (CHR constraint or equation). Variables are
/// unscoped.
pub fn parse_constraint(src: &str) -> Result<Constraint, LoadError> {
    let mut p = Parser::new(src)?;
    let c = match p.constraint()? {
        Some(c) => c,
        None => return p.error("expected constraint"),
    };
    if p.peek() != &Tok::Eof {
        return p.error("trailing input after constraint");
    }
    Ok(c)
}

pub fn parse_term(src: &str) -> Result<Term, LoadError> {
    let mut p = Parser::new(src)?;
    let t = p.expr()?;
    if p.peek() != &Tok::Eof {
        return p.error("trailing input after term");
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn operator_precedence() {
        let t = parse_term("a + b * 2 > 3 && c || d").unwrap();
        assert_eq!(t.to_string(), "a+b*2>3&&c||d");
        let Term::App(Op::Or, l, _) = &t else { panic!() };
        assert!(matches!(**l, Term::App(Op::And, _, _)));
        assert_eq!(parse_term("a-(b-1)").unwrap().to_string(), "a-(b-1)");
        assert_eq!(parse_term("(a-b)-1").unwrap().to_string(), "a-b-1");
        assert_eq!(parse_term("x-(-3)").unwrap(), Term::app(Op::Sub, Term::var("x"), Term::int(-3)));
    }

    #[test]
    fn lexer_positions() {
        let toks = lex("r @\n  A").unwrap();
        assert_eq!((toks[2].line, toks[2].col), (2, 3));
    }

    #[test]
    fn constraint_forms() {
        assert_eq!(parse_constraint("x1=1").unwrap().to_string(), "x1=1");
        assert_eq!(parse_constraint("Put(2)").unwrap().to_string(), "Put(2)");
        assert!(parse_constraint("true").is_err());
        assert!(parse_constraint("A B").is_err());
    }

    #[test]
    fn guard_backtracking_does_not_eat_body_equation() {
        let p = parse_program("get @ Get(x), Put(y) <=> x = y.").unwrap();
        assert_eq!(p.rules[0].guard, Term::bool(true));
        assert_eq!(p.rules[0].body.len(), 1);
        let p = parse_program("g @ A(x), B(y) <=> x == y | x = y, C.").unwrap();
        assert_eq!(p.rules[0].guard.to_string(), "x==y");
        assert_eq!(p.rules[0].body.len(), 2);
    }
}
