//! A forgiving reader for the `{'instruction': ..., 'output': ...}` records
//! chat models produce when asked for that shape: single or double quotes,
//! typographic quotes, unquoted keys or values, unescaped apostrophes inside
//! values, and trailing commas or chatter after the closing brace.

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseFailure {
    NotAnObject,
    UnterminatedString { key: Option<String> },
    ExpectedColon { at: usize },
    ExpectedSeparator { at: usize },
    EmptyKey { at: usize },
    UnexpectedEnd,
}

impl fmt::Display for ParseFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseFailure::NotAnObject => write!(f, "no object found"),
            ParseFailure::UnterminatedString { key: Some(k) } => {
                write!(f, "unterminated string in field {k}")
            }
            ParseFailure::UnterminatedString { key: None } => write!(f, "unterminated key"),
            ParseFailure::ExpectedColon { at } => write!(f, "expected ':' at column {}", at + 1),
            ParseFailure::ExpectedSeparator { at } => {
                write!(f, "expected ',' or '}}' at column {}", at + 1)
            }
            ParseFailure::EmptyKey { at } => write!(f, "empty key at column {}", at + 1),
            ParseFailure::UnexpectedEnd => write!(f, "record ends before closing '}}'"),
        }
    }
}

fn closing_quotes(open: char) -> Option<&'static [char]> {
    match open {
        '\'' => Some(&['\'', '\u{2019}']),
        '"' => Some(&['"', '\u{201d}']),
        '\u{2018}' => Some(&['\u{2019}', '\'']),
        '\u{201c}' => Some(&['\u{201d}', '"']),
        _ => None,
    }
}

struct Cursor<'a> {
    chars: &'a [char],
    pos: usize,
}

impl Cursor<'_> {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn next_non_ws(&self, from: usize) -> Option<(usize, char)> {
        self.chars[from..]
            .iter()
            .enumerate()
            .find(|(_, c)| !c.is_whitespace())
            .map(|(i, c)| (from + i, *c))
    }

    /// True if a key followed by a colon starts at or after `from`.
    fn key_follows(&self, from: usize) -> bool {
        let Some((mut i, c)) = self.next_non_ws(from) else {
            return false;
        };
        if let Some(close) = closing_quotes(c) {
            i += 1;
            while i < self.chars.len() && !close.contains(&self.chars[i]) {
                if self.chars[i] == ',' || self.chars[i] == '{' || self.chars[i] == '}' {
                    return false;
                }
                i += 1;
            }
            if i >= self.chars.len() {
                return false;
            }
            i += 1;
        } else if is_key_char(c) {
            while i < self.chars.len() && is_key_char(self.chars[i]) {
                i += 1;
            }
        } else {
            return false;
        }
        matches!(self.next_non_ws(i), Some((_, ':' | '\u{ff1a}')))
    }

    /// Reads a quoted string opened at the cursor. A candidate closing quote
    /// only counts if the next non-blank character ends the value (`,` `}`
    /// `:`) or the line; anything else is taken as a literal apostrophe.
    fn quoted(&mut self, key: Option<&str>) -> Result<String, ParseFailure> {
        let open = self.peek().expect("caller checked quote");
        let close = closing_quotes(open).expect("caller checked quote");
        self.pos += 1;
        let mut out = String::new();
        while let Some(c) = self.peek() {
            self.pos += 1;
            if c == '\\' {
                match self.peek() {
                    Some('n') => out.push('\n'),
                    Some('t') => out.push('\t'),
                    Some('r') => out.push('\r'),
                    Some('u') => {
                        let hex: String = self.chars[self.pos + 1..]
                            .iter()
                            .take(4)
                            .collect();
                        match u32::from_str_radix(&hex, 16).ok().and_then(char::from_u32) {
                            Some(ch) if hex.len() == 4 => {
                                out.push(ch);
                                self.pos += 4;
                            }
                            _ => out.push('u'),
                        }
                    }
                    Some(other) => out.push(other),
                    None => return Err(ParseFailure::UnterminatedString { key: key.map(str::to_owned) }),
                }
                self.pos += 1;
                continue;
            }
            if close.contains(&c) {
                match self.next_non_ws(self.pos) {
                    None | Some((_, ',' | '}' | ':' | '\u{ff1a}')) => return Ok(out),
                    _ => {}
                }
            }
            out.push(c);
        }
        Err(ParseFailure::UnterminatedString {
            key: key.map(str::to_owned),
        })
    }

    /// Reads an unquoted value up to the next `, <key>:` or the last `}`.
    fn bare_value(&mut self) -> Result<String, ParseFailure> {
        let last_brace = self.chars.iter().rposition(|&c| c == '}');
        let start = self.pos;
        let mut i = self.pos;
        while i < self.chars.len() {
            match self.chars[i] {
                ',' if self.key_follows(i + 1) => break,
                '}' if Some(i) == last_brace => break,
                _ => i += 1,
            }
        }
        if i >= self.chars.len() {
            return Err(ParseFailure::UnexpectedEnd);
        }
        self.pos = i;
        Ok(self.chars[start..i].iter().collect::<String>().trim().to_owned())
    }
}

fn is_key_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '-'
}

/// Parses one record into `(key, value)` pairs in source order.
pub fn parse_object(text: &str) -> Result<Vec<(String, String)>, ParseFailure> {
    let chars: Vec<char> = text.chars().collect();
    let start = chars.iter().position(|&c| c == '{').ok_or(ParseFailure::NotAnObject)?;
    let mut cur = Cursor {
        chars: &chars,
        pos: start + 1,
    };
    let mut fields = Vec::new();
    loop {
        cur.skip_ws();
        match cur.peek() {
            None => return Err(ParseFailure::UnexpectedEnd),
            Some('}') => return Ok(fields),
            _ => {}
        }

        let key_at = cur.pos;
        let key = match cur.peek() {
            Some(c) if closing_quotes(c).is_some() => cur.quoted(None)?,
            Some(c) if is_key_char(c) => {
                let s = cur.pos;
                while cur.peek().is_some_and(is_key_char) {
                    cur.pos += 1;
                }
                chars[s..cur.pos].iter().collect()
            }
            _ => return Err(ParseFailure::EmptyKey { at: key_at }),
        };
        if key.trim().is_empty() {
            return Err(ParseFailure::EmptyKey { at: key_at });
        }
        cur.skip_ws();
        if !matches!(cur.peek(), Some(':' | '\u{ff1a}')) {
            return Err(ParseFailure::ExpectedColon { at: cur.pos });
        }
        cur.pos += 1;
        cur.skip_ws();

        let value = match cur.peek() {
            None => return Err(ParseFailure::UnexpectedEnd),
            Some(c) if closing_quotes(c).is_some() => cur.quoted(Some(&key))?,
            Some(_) => cur.bare_value()?,
        };
        fields.push((key, value));

        cur.skip_ws();
        match cur.peek() {
            Some(',') => cur.pos += 1,
            Some('}') => return Ok(fields),
            None => return Err(ParseFailure::UnexpectedEnd),
            Some(_) => return Err(ParseFailure::ExpectedSeparator { at: cur.pos }),
        }
    }
}
