use super::ExprError;

#[derive(Debug, Clone, PartialEq)]
pub(super) enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    Le,
    Ge,
    Lt,
    Gt,
    End,
}

impl Tok {
    pub(super) fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number `{v}`"),
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Le => "`<=`".into(),
            Tok::Ge => "`>=`".into(),
            Tok::Lt => "`<`".into(),
            Tok::Gt => "`>`".into(),
            Tok::End => "end of input".into(),
        }
    }
}

/// Token plus its starting byte offset.
pub(super) type Spanned = (Tok, usize);

pub(super) fn tokenize(text: &str) -> Result<Vec<Spanned>, ExprError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let single = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'*' => Some(Tok::Star),
            b'/' => Some(Tok::Slash),
            b'^' => Some(Tok::Caret),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            b',' => Some(Tok::Comma),
            _ => None,
        };
        if let Some(tok) = single {
            out.push((tok, start));
            i += 1;
            continue;
        }
        match c {
            b'<' | b'>' => {
                let eq = bytes.get(i + 1) == Some(&b'=');
                let tok = match (c, eq) {
                    (b'<', true) => Tok::Le,
                    (b'<', false) => Tok::Lt,
                    (_, true) => Tok::Ge,
                    (_, false) => Tok::Gt,
                };
                i += if eq { 2 } else { 1 };
                out.push((tok, start));
            }
            b'0'..=b'9' | b'.' => {
                i = scan_number(bytes, i).ok_or_else(|| ExprError::Syntax {
                    offset: start,
                    expected: "a number".into(),
                    found: "`.`".into(),
                })?;
                let lit = &text[start..i];
                let value: f64 = lit.parse().map_err(|_| ExprError::Syntax {
                    offset: start,
                    expected: "a number".into(),
                    found: format!("`{lit}`"),
                })?;
                if !value.is_finite() {
                    return Err(ExprError::Syntax {
                        offset: start,
                        expected: "a finite number".into(),
                        found: format!("`{lit}`"),
                    });
                }
                out.push((Tok::Num(value), start));
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(text[start..i].to_string()), start));
            }
            _ => {
                let ch = text[start..].chars().next().unwrap_or('?');
                return Err(ExprError::Syntax {
                    offset: start,
                    expected: "an operator, number, identifier or parenthesis".into(),
                    found: format!("`{ch}`"),
                });
            }
        }
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

// Returns the end offset of the literal starting at `i`, or None when there
// are no digits at all.
fn scan_number(bytes: &[u8], mut i: usize) -> Option<usize> {
    let digits = |b: &[u8], mut j: usize| {
        let s = j;
        while j < b.len() && b[j].is_ascii_digit() {
            j += 1;
        }
        (j, j - s)
    };
    let (next, int_digits) = digits(bytes, i);
    i = next;
    let mut frac_digits = 0;
    if i < bytes.len() && bytes[i] == b'.' {
        let (next, n) = digits(bytes, i + 1);
        i = next;
        frac_digits = n;
    }
    if int_digits + frac_digits == 0 {
        return None;
    }
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        let mut j = i + 1;
        if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
            j += 1;
        }
        let (next, n) = digits(bytes, j);
        if n > 0 {
            i = next;
        }
    }
    Some(i)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_and_offsets() {
        let toks = tokenize("x<=2.5e-1 and y").unwrap();
        assert_eq!(
            toks,
            vec![
                (Tok::Ident("x".into()), 0),
                (Tok::Le, 1),
                (Tok::Num(0.25), 3),
                (Tok::Ident("and".into()), 10),
                (Tok::Ident("y".into()), 14),
                (Tok::End, 15),
            ]
        );
    }

    #[test]
    fn exponent_needs_digits() {
        let toks = tokenize("2e").unwrap();
        assert_eq!(toks[0].0, Tok::Num(2.0));
        assert_eq!(toks[1].0, Tok::Ident("e".into()));
    }

    #[test]
    fn lone_dot_rejected() {
        assert!(tokenize("1 + .").is_err());
    }
}
