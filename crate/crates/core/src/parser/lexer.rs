use std::fmt;

use super::ParseDiagnostic;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Str(String),
    /// A `--<ref::priority:p,range:r>--` marker; bounds are checked later.
    Annotation {
        constraint_ref: String,
        priority: i64,
        range: i64,
    },
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Dot,
    Semi,
    Colon,
    PathSep,
    Assign,
    Eq,
    Star,
    Ellipsis,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(n) => write!(f, "`{n}`"),
            Tok::Str(s) => write!(f, "string {s:?}"),
            Tok::Annotation { constraint_ref, .. } => write!(f, "annotation `{constraint_ref}`"),
            Tok::LBrace => f.write_str("`{`"),
            Tok::RBrace => f.write_str("`}`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::LBracket => f.write_str("`[`"),
            Tok::RBracket => f.write_str("`]`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Dot => f.write_str("`.`"),
            Tok::Semi => f.write_str("`;`"),
            Tok::Colon => f.write_str("`:`"),
            Tok::PathSep => f.write_str("`::`"),
            Tok::Assign => f.write_str("`:=`"),
            Tok::Eq => f.write_str("`=`"),
            Tok::Star => f.write_str("`*`"),
            Tok::Ellipsis => f.write_str("`...`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub column: usize,
}

struct Lexer<'a> {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    column: usize,
    _src: &'a str,
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, ParseDiagnostic> {
    let mut lx = Lexer {
        chars: src.chars().collect(),
        pos: 0,
        line: 1,
        column: 1,
        _src: src,
    };
    let mut out = Vec::new();
    loop {
        lx.skip_trivia();
        let (line, column) = (lx.line, lx.column);
        let Some(c) = lx.peek(0) else {
            out.push(Token { tok: Tok::Eof, line, column });
            return Ok(out);
        };
        let tok = if lx.starts_with("--<") {
            lx.annotation()?
        } else if c.is_ascii_alphabetic() || c == '_' {
            Tok::Ident(lx.ident())
        } else if c.is_ascii_digit() || (c == '-' && lx.peek(1).is_some_and(|d| d.is_ascii_digit())) {
            Tok::Int(lx.int()?)
        } else if c == '"' {
            Tok::Str(lx.string()?)
        } else if lx.starts_with("...") {
            lx.bump_n(3);
            Tok::Ellipsis
        } else if lx.starts_with("::") {
            lx.bump_n(2);
            Tok::PathSep
        } else if lx.starts_with(":=") {
            lx.bump_n(2);
            Tok::Assign
        } else {
            let t = match c {
                '{' => Tok::LBrace,
                '}' => Tok::RBrace,
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                '[' => Tok::LBracket,
                ']' => Tok::RBracket,
                ',' => Tok::Comma,
                '.' => Tok::Dot,
                ';' => Tok::Semi,
                ':' => Tok::Colon,
                '=' => Tok::Eq,
                '*' => Tok::Star,
                other => {
                    return Err(ParseDiagnostic::new(line, column, format!("unexpected character `{other}`"), vec![]));
                }
            };
            lx.bump();
            t
        };
        out.push(Token { tok, line, column });
    }
}

impl Lexer<'_> {
    fn peek(&self, k: usize) -> Option<char> {
        self.chars.get(self.pos + k).copied()
    }

    fn starts_with(&self, s: &str) -> bool {
        s.chars().enumerate().all(|(i, c)| self.peek(i) == Some(c))
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek(0)?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn bump_n(&mut self, n: usize) {
        for _ in 0..n {
            self.bump();
        }
    }

    fn err(&self, message: impl Into<String>, expected: &[&str]) -> ParseDiagnostic {
        ParseDiagnostic::new(
            self.line,
            self.column,
            message,
            expected.iter().map(|s| s.to_string()).collect(),
        )
    }

    fn skip_trivia(&mut self) {
        loop {
            match self.peek(0) {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some('-') if self.starts_with("--") && !self.starts_with("--<") => {
                    while let Some(c) = self.peek(0) {
                        if c == '\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                _ => return,
            }
        }
    }

    /// Identifiers may contain `-` when a letter follows, so `generic-interface`
    /// lexes as one word while `x--comment` does not.
    fn ident(&mut self) -> String {
        let mut s = String::new();
        while let Some(c) = self.peek(0) {
            let hyphen = c == '-' && self.peek(1).is_some_and(|d| d.is_ascii_alphabetic());
            if c.is_ascii_alphanumeric() || c == '_' || hyphen {
                s.push(c);
                self.bump();
            } else {
                break;
            }
        }
        s
    }

    fn int(&mut self) -> Result<i64, ParseDiagnostic> {
        let mut s = String::new();
        if self.peek(0) == Some('-') {
            s.push('-');
            self.bump();
        }
        while let Some(c) = self.peek(0).filter(char::is_ascii_digit) {
            s.push(c);
            self.bump();
        }
        s.parse().map_err(|_| self.err(format!("integer `{s}` out of range"), &[]))
    }

    fn string(&mut self) -> Result<String, ParseDiagnostic> {
        let (line, column) = (self.line, self.column);
        self.bump();
        let mut s = String::new();
        loop {
            match self.bump() {
                Some('"') => return Ok(s),
                Some('\\') => match self.bump() {
                    Some('n') => s.push('\n'),
                    Some('t') => s.push('\t'),
                    Some(c @ ('"' | '\\')) => s.push(c),
                    _ => return Err(self.err("invalid escape in string literal", &["\\\"", "\\\\", "\\n", "\\t"])),
                },
                Some(c) => s.push(c),
                None => {
                    return Err(ParseDiagnostic::new(line, column, "unterminated string literal", vec!["`\"`".into()]));
                }
            }
        }
    }

    fn expect_lit(&mut self, lit: &str) -> Result<(), ParseDiagnostic> {
        if self.starts_with(lit) {
            self.bump_n(lit.chars().count());
            Ok(())
        } else {
            let found = self.peek(0).map_or("end of input".to_string(), |c| format!("`{c}`"));
            Err(self.err(
                format!("malformed constraint annotation: expected `{lit}`, found {found}"),
                &[lit],
            ))
        }
    }

    fn annotation_int(&mut self, field: &str) -> Result<i64, ParseDiagnostic> {
        let negative = self.peek(0) == Some('-');
        let digit_at = if negative { 1 } else { 0 };
        if !self.peek(digit_at).is_some_and(|c| c.is_ascii_digit()) {
            return Err(self.err(format!("malformed constraint annotation: {field} must be an integer"), &["integer"]));
        }
        self.int()
    }

    /// Exactly `--<` IDENT `::priority:` INT `,range:` INT `>--`, no whitespace.
    fn annotation(&mut self) -> Result<Tok, ParseDiagnostic> {
        self.bump_n(3);
        if !self.peek(0).is_some_and(|c| c.is_ascii_alphabetic() || c == '_') {
            return Err(self.err("malformed constraint annotation: expected constraint name", &["identifier"]));
        }
        let constraint_ref = self.ident();
        self.expect_lit("::priority:")?;
        let (pl, pc) = (self.line, self.column);
        let priority = self.annotation_int("priority")?;
        self.expect_lit(",range:")?;
        let (rl, rc) = (self.line, self.column);
        let range = self.annotation_int("range")?;
        self.expect_lit(">--")?;
        if priority < 1 {
            return Err(ParseDiagnostic::new(pl, pc, "priority must be ≥ 1", vec![]));
        }
        if range < 1 {
            return Err(ParseDiagnostic::new(rl, rc, "range must be ≥ 1", vec![]));
        }
        Ok(Tok::Annotation {
            constraint_ref,
            priority,
            range,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(src: &str) -> Vec<Tok> {
        tokenize(src).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn hyphenated_identifiers_and_comments() {
        assert_eq!(
            toks("role=generic-interface -- trailing\nx--c"),
            vec![
                Tok::Ident("role".into()),
                Tok::Eq,
                Tok::Ident("generic-interface".into()),
                Tok::Ident("x".into()),
                Tok::Eof
            ]
        );
    }

    #[test]
    fn annotation_marker() {
        assert_eq!(
            toks("--<faulttolerance::priority:1,range:1>--")[0],
            Tok::Annotation {
                constraint_ref: "faulttolerance".into(),
                priority: 1,
                range: 1
            }
        );
    }

    #[test]
    fn whitespace_inside_marker_rejected() {
        for bad in [
            "--< ft::priority:1,range:1>--",
            "--<ft ::priority:1,range:1>--",
            "--<ft::priority: 1,range:1>--",
            "--<ft::priority:1, range:1>--",
            "--<ft::priority:1,range:1 >--",
        ] {
            assert!(tokenize(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn positions_are_one_based() {
        let t = tokenize("a\n  b").unwrap();
        assert_eq!((t[1].line, t[1].column), (2, 3));
    }

    #[test]
    fn string_escapes() {
        assert_eq!(toks(r#""a\"b""#)[0], Tok::Str("a\"b".into()));
    }
}
