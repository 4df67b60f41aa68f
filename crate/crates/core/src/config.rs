//! Line-oriented config files shared by filter rules, encoder specs,
//! synthetic specs and parameter files.
//!
//! One directive per line, whitespace-separated tokens with shell-style
//! quoting. Blank lines and lines starting with `#` are ignored.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Directive {
    pub line: usize,
    pub tokens: Vec<String>,
}

impl Directive {
    pub fn key(&self) -> &str {
        &self.tokens[0]
    }

    pub fn args(&self) -> &[String] {
        &self.tokens[1..]
    }

    pub fn error(&self, message: impl Into<String>) -> Error {
        Error::config(self.line, message)
    }

    /// Exactly one argument parsed as `T`.
    pub fn single<T: std::str::FromStr>(&self) -> Result<T> {
        match self.args() {
            [v] => v
                .parse()
                .map_err(|_| self.error(format!("`{}`: cannot parse `{v}`", self.key()))),
            _ => Err(self.error(format!("`{}` takes exactly one value", self.key()))),
        }
    }

    pub fn parse_arg<T: std::str::FromStr>(&self, i: usize) -> Result<T> {
        let v = self
            .args()
            .get(i)
            .ok_or_else(|| self.error(format!("`{}`: missing argument {}", self.key(), i + 1)))?;
        v.parse()
            .map_err(|_| self.error(format!("`{}`: cannot parse `{v}`", self.key())))
    }
}

pub fn parse(text: &str) -> Result<Vec<Directive>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let tokens = shlex::split(trimmed).ok_or_else(|| Error::config(i + 1, "unbalanced quotes"))?;
        if tokens.is_empty() {
            continue;
        }
        out.push(Directive { line: i + 1, tokens });
    }
    Ok(out)
}

/// Quote a token so [`parse`] reads it back unchanged.
pub fn quote(token: &str) -> String {
    if !token.is_empty()
        && token
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || "_-./:+,=<>!".contains(c))
    {
        token.to_string()
    } else {
        format!("\"{}\"", token.replace('\\', "\\\\").replace('"', "\\\""))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn skips_comments_and_keeps_line_numbers() {
        let d = parse("# header\n\nkey 1\n  \"a b\" != \"\"\n").unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d[0].line, 3);
        assert_eq!(d[1].tokens, ["a b", "!=", ""]);
    }

    #[test]
    fn quote_round_trips() {
        for t in ["plain", "with space", "", "q\"uote", "LARGE INTESTINE, (EXCL. APPENDIX)", "back\\slash"] {
            let line = format!("k {}", quote(t));
            assert_eq!(parse(&line).unwrap()[0].args(), [t.to_string()]);
        }
    }

    #[test]
    fn unbalanced_quote_is_an_error() {
        assert!(matches!(parse("a \"b"), Err(Error::Config { line: Some(1), .. })));
    }
}
