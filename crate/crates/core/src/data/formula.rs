use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A random-effect term `(slope | group)`; `slope` is `None` for `(1 | group)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomTerm {
    pub slope: Option<String>,
    pub group: String,
}

impl fmt::Display for RandomTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({} | {})", self.slope.as_deref().unwrap_or("1"), self.group)
    }
}

/// A parsed model formula `y ~ 0 + a + b + (c | g)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Formula {
    pub response: String,
    pub fixed: Vec<String>,
    pub random: Vec<RandomTerm>,
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ~ 0", self.response)?;
        for t in &self.fixed {
            write!(f, " + {t}")?;
        }
        for r in &self.random {
            write!(f, " + {r}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Name(String),
    Number(String),
    Tilde,
    Plus,
    Bar,
    Open,
    Close,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
}

fn is_name_start(c: char) -> bool {
    c.is_alphabetic() || c == '_' || c == '.'
}

fn is_name_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '.'
}

impl Lexer<'_> {
    /// Next token and its 1-based character position.
    fn next(&mut self) -> Result<Option<(usize, Token)>> {
        while self.chars.next_if(|(_, c)| c.is_whitespace()).is_some() {}
        let Some((i, c)) = self.chars.next() else {
            return Ok(None);
        };
        let pos = i + 1;
        let tok = match c {
            '~' => Token::Tilde,
            '+' => Token::Plus,
            '|' => Token::Bar,
            '(' => Token::Open,
            ')' => Token::Close,
            c if c.is_ascii_digit() => {
                let mut s = c.to_string();
                while let Some((_, d)) = self.chars.next_if(|(_, d)| d.is_ascii_digit() || *d == '.') {
                    s.push(d);
                }
                Token::Number(s)
            }
            c if is_name_start(c) => {
                let mut s = c.to_string();
                while let Some((_, d)) = self.chars.next_if(|(_, d)| is_name_char(*d)) {
                    s.push(d);
                }
                Token::Name(s)
            }
            other => {
                return Err(Error::Formula {
                    position: pos,
                    message: format!("unexpected character `{other}`"),
                })
            }
        };
        Ok(Some((pos, tok)))
    }
}

fn describe(t: &Option<(usize, Token)>) -> String {
    match t {
        None => "end of formula".into(),
        Some((_, Token::Name(n))) => format!("`{n}`"),
        Some((_, Token::Number(n))) => format!("`{n}`"),
        Some((_, Token::Tilde)) => "`~`".into(),
        Some((_, Token::Plus)) => "`+`".into(),
        Some((_, Token::Bar)) => "`|`".into(),
        Some((_, Token::Open)) => "`(`".into(),
        Some((_, Token::Close)) => "`)`".into(),
    }
}

/// Parses `response ~ 0 (+ term)*` with `term := name | (name | name) | (1 | name)`.
/// The leading `0` is mandatory: the linear predictor has no intercept.
pub fn parse_formula(text: &str) -> Result<Formula> {
    let mut tokens = Vec::new();
    let mut lx = Lexer {
        chars: text.char_indices().peekable(),
    };
    while let Some(t) = lx.next()? {
        tokens.push(t);
    }
    let end = text.chars().count() + 1;
    let mut it = tokens.into_iter().peekable();
    let err = |tok: &Option<(usize, Token)>, what: &str| Error::Formula {
        position: tok.as_ref().map_or(end, |t| t.0),
        message: format!("expected {what}, found {}", describe(tok)),
    };

    let response = match it.next() {
        Some((_, Token::Name(n))) => n,
        other => return Err(err(&other, "a response name")),
    };
    match it.next() {
        Some((_, Token::Tilde)) => {}
        other => return Err(err(&other, "`~`")),
    }
    match it.next() {
        Some((_, Token::Number(n))) if n == "0" => {}
        Some((_, Token::Number(n))) if n == "1" => return Err(Error::InterceptNotPermitted),
        Some((_, Token::Name(_))) | Some((_, Token::Open)) => return Err(Error::InterceptNotPermitted),
        other => return Err(err(&other, "`0`")),
    }
    let mut fixed = Vec::new();
    let mut random = Vec::new();
    loop {
        match it.next() {
            None => break,
            Some((_, Token::Plus)) => {}
            other => return Err(err(&other, "`+` or end of formula")),
        }
        match it.next() {
            Some((_, Token::Name(n))) => fixed.push(n),
            Some((_, Token::Number(n))) if n == "1" => return Err(Error::InterceptNotPermitted),
            Some((_, Token::Open)) => {
                let slope = match it.next() {
                    Some((_, Token::Name(n))) => Some(n),
                    Some((_, Token::Number(n))) if n == "1" => None,
                    other => return Err(err(&other, "a slope name or `1`")),
                };
                match it.next() {
                    Some((_, Token::Bar)) => {}
                    other => return Err(err(&other, "`|`")),
                }
                let group = match it.next() {
                    Some((_, Token::Name(n))) => n,
                    other => return Err(err(&other, "a grouping factor name")),
                };
                match it.next() {
                    Some((_, Token::Close)) => {}
                    other => return Err(err(&other, "`)`")),
                }
                random.push(RandomTerm { slope, group });
            }
            other => return Err(err(&other, "a term")),
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    if let Some(dup) = fixed.iter().find(|t| !seen.insert(t.as_str())) {
        return Err(Error::Formula {
            position: 1,
            message: format!("term `{dup}` appears more than once"),
        });
    }
    if fixed.contains(&response) || random.iter().any(|r| r.group == response || r.slope.as_ref() == Some(&response)) {
        return Err(Error::Formula {
            position: 1,
            message: format!("response `{response}` also appears as a term"),
        });
    }
    Ok(Formula {
        response,
        fixed,
        random,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_terms() {
        let f = parse_formula("y ~ 0 + x1 + x2").unwrap();
        assert_eq!(f.response, "y");
        assert_eq!(f.fixed, vec!["x1", "x2"]);
        assert!(f.random.is_empty());
    }

    #[test]
    fn random_slope() {
        let f = parse_formula("y ~ 0 + x1 + (x2 | x3)").unwrap();
        assert_eq!(f.fixed, vec!["x1"]);
        assert_eq!(
            f.random,
            vec![RandomTerm {
                slope: Some("x2".into()),
                group: "x3".into()
            }]
        );
        let f = parse_formula("y~0+(1|school)").unwrap();
        assert_eq!(f.random[0].slope, None);
        assert_eq!(f.to_string(), "y ~ 0 + (1 | school)");
    }

    #[test]
    fn intercept_rejected() {
        assert!(matches!(parse_formula("y ~ x1"), Err(Error::InterceptNotPermitted)));
        assert!(matches!(parse_formula("y ~ 1 + x1"), Err(Error::InterceptNotPermitted)));
        assert!(matches!(parse_formula("y ~ 0 + 1"), Err(Error::InterceptNotPermitted)));
    }

    #[test]
    fn syntax_errors_carry_position() {
        match parse_formula("y ~ 0 + (x2 x3)") {
            Err(Error::Formula { position, .. }) => assert_eq!(position, 13),
            other => panic!("{other:?}"),
        }
        match parse_formula("y ~ 0 + x1 +") {
            Err(Error::Formula { position, message }) => {
                assert_eq!(position, 13);
                assert!(message.contains("end of formula"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_formula("y ~ 0 + x1 * x2"), Err(Error::Formula { position: 12, .. })));
        assert!(matches!(parse_formula("~ 0"), Err(Error::Formula { position: 1, .. })));
    }

    #[test]
    fn duplicates_rejected() {
        assert!(parse_formula("y ~ 0 + a + a").is_err());
        assert!(parse_formula("y ~ 0 + y").is_err());
    }
}
