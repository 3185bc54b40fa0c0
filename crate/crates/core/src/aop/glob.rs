use std::fmt;

/// Characters allowed in join-point names.
pub fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '-'
}

/// True for `[A-Za-z_][A-Za-z0-9_-]*`, the join-point name grammar.
pub fn is_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_') && chars.all(is_name_char)
}

/// A name pattern where `*` matches any (possibly empty) run of characters.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Glob(String);

impl Glob {
    /// Returns `None` for empty patterns or patterns containing characters
    /// other than name characters and `*`.
    pub fn new(pattern: impl Into<String>) -> Option<Self> {
        let pattern = pattern.into();
        if pattern.is_empty() || !pattern.chars().all(|c| c == '*' || is_name_char(c)) {
            return None;
        }
        Some(Self(pattern))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Linear-time wildcard match with single-point backtracking.
    pub fn matches(&self, text: &str) -> bool {
        let p = self.0.as_bytes();
        let t = text.as_bytes();
        let (mut pi, mut ti) = (0usize, 0usize);
        let mut star: Option<usize> = None;
        let mut resume = 0usize;
        while ti < t.len() {
            if pi < p.len() && p[pi] == b'*' {
                star = Some(pi);
                pi += 1;
                resume = ti;
            } else if pi < p.len() && p[pi] == t[ti] {
                pi += 1;
                ti += 1;
            } else if let Some(s) = star {
                pi = s + 1;
                resume += 1;
                ti = resume;
            } else {
                return false;
            }
        }
        while pi < p.len() && p[pi] == b'*' {
            pi += 1;
        }
        pi == p.len()
    }
}

impl fmt::Display for Glob {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}
