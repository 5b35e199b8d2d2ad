//! Number rendering and tokenizing shared by the text file formats.

use std::fmt::Write as _;

/// Renders `x` with nine significant digits, lowercase `e` and a signed
/// exponent of at least two digits: `0.25` becomes `2.50000000e-01`.
pub fn sci(x: f64) -> String {
    let mut out = String::with_capacity(16);
    write_sci(&mut out, x);
    out
}

pub fn write_sci(out: &mut String, x: f64) {
    let x = if x == 0.0 { 0.0 } else { x };
    let raw = format!("{x:.8e}");
    let (mantissa, exp) = raw.split_once('e').expect("`e` formatting always has an exponent");
    let exp: i32 = exp.parse().expect("exponent is an integer");
    let sign = if exp < 0 { '-' } else { '+' };
    let _ = write!(out, "{mantissa}e{sign}{:02}", exp.unsigned_abs());
}

/// The value a dump file stores for `x`: `x` rounded to nine significant
/// digits. Negative zero collapses to zero.
pub fn canonical(x: f64) -> f64 {
    let v: f64 = sci(x).parse().expect("sci output parses as f64");
    if v == 0.0 {
        0.0
    } else {
        v
    }
}

/// Whitespace-separated tokens tagged with 1-based line numbers. Text after
/// `#` on a line is ignored.
pub struct Tokens<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    current: Option<(usize, std::str::SplitWhitespace<'a>)>,
    peeked: Option<(usize, &'a str)>,
    last_line: usize,
}

impl<'a> Tokens<'a> {
    pub fn new(text: &'a str) -> Self {
        Tokens { lines: text.lines().enumerate(), current: None, peeked: None, last_line: 0 }
    }

    fn advance(&mut self) -> Option<(usize, &'a str)> {
        loop {
            if let Some((line, words)) = self.current.as_mut() {
                if let Some(w) = words.next() {
                    return Some((*line, w));
                }
            }
            let (idx, text) = self.lines.next()?;
            let text = text.split_once('#').map_or(text, |(head, _)| head);
            self.current = Some((idx + 1, text.split_whitespace()));
        }
    }

    pub fn peek(&mut self) -> Option<(usize, &'a str)> {
        if self.peeked.is_none() {
            self.peeked = self.advance();
        }
        self.peeked
    }

    /// Line of the most recently consumed token (or of end of input).
    pub fn line(&self) -> usize {
        self.last_line
    }
}

impl<'a> Iterator for Tokens<'a> {
    type Item = (usize, &'a str);

    fn next(&mut self) -> Option<Self::Item> {
        let tok = match self.peeked.take() {
            Some(t) => Some(t),
            None => self.advance(),
        };
        if let Some((line, _)) = tok {
            self.last_line = line;
        }
        tok
    }
}

/// Parses a real that must be finite.
pub fn parse_real(tok: &str) -> Option<f64> {
    tok.parse::<f64>().ok().filter(|v| v.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sci_examples() {
        assert_eq!(sci(0.25), "2.50000000e-01");
        assert_eq!(sci(0.0), "0.00000000e+00");
        assert_eq!(sci(-0.0), "0.00000000e+00");
        assert_eq!(sci(-1234.5), "-1.23450000e+03");
        assert_eq!(sci(1e-300), "1.00000000e-300");
        assert_eq!(sci(7.0), "7.00000000e+00");
    }

    #[test]
    fn tokens_track_lines_and_skip_comments() {
        let mut t = Tokens::new("a b # c d\n\n  # only comment\ne f\n");
        assert_eq!(t.next(), Some((1, "a")));
        assert_eq!(t.peek(), Some((1, "b")));
        assert_eq!(t.next(), Some((1, "b")));
        assert_eq!(t.next(), Some((4, "e")));
        assert_eq!(t.line(), 4);
        assert_eq!(t.next(), Some((4, "f")));
        assert_eq!(t.next(), None);
    }

    #[test]
    fn parse_real_rejects_non_finite() {
        assert_eq!(parse_real("1.5e-3"), Some(1.5e-3));
        assert_eq!(parse_real("inf"), None);
        assert_eq!(parse_real("NaN"), None);
        assert_eq!(parse_real("x"), None);
    }

    proptest! {
        #[test]
        fn canonical_is_a_fixpoint(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            let c = canonical(x);
            prop_assert_eq!(canonical(c).to_bits(), c.to_bits());
            prop_assert_eq!(sci(c), sci(x));
        }
    }
}
