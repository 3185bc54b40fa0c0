//! Concern manifests: which modules exist, whether each is a class or an
//! aspect, and which functionalities (concern tags) it declares.
//!
//! The text format is line oriented:
//!
//! ```text
//! version iot-aspectj
//! # comment
//! class Handshaking: handshake_core, session_mgmt
//! aspect LoggingAspect: logging
//! ```

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ManifestError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}: duplicate module name `{name}`")]
    DuplicateModule { line: usize, name: String },
    #[error("line {line}: duplicate tag `{tag}` in module `{module}`")]
    DuplicateTag {
        line: usize,
        module: String,
        tag: String,
    },
    #[error("line {line}: module `{module}` declares no tags")]
    EmptyTags { line: usize, module: String },
    #[error("invalid identifier `{0}`")]
    InvalidIdentifier(String),
    #[error("manifest declares no modules")]
    Empty,
    #[error("reading {path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, ManifestError>;

/// True for `[A-Za-z_][A-Za-z0-9_.-]*`.
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(is_identifier_char)
}

fn is_identifier_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-')
}

/// A single functionality.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConcernTag(String);

impl ConcernTag {
    pub fn new(name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        if is_identifier(&name) {
            Ok(Self(name))
        } else {
            Err(ManifestError::InvalidIdentifier(name))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ConcernTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModuleKind {
    ClassModule,
    AspectModule,
}

impl ModuleKind {
    pub fn keyword(self) -> &'static str {
        match self {
            ModuleKind::ClassModule => "class",
            ModuleKind::AspectModule => "aspect",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModuleDecl {
    name: String,
    kind: ModuleKind,
    tags: Vec<ConcernTag>,
}

impl ModuleDecl {
    pub fn new(name: impl Into<String>, kind: ModuleKind, tags: Vec<ConcernTag>) -> Result<Self> {
        let name = name.into();
        if !is_identifier(&name) {
            return Err(ManifestError::InvalidIdentifier(name));
        }
        if tags.is_empty() {
            return Err(ManifestError::EmptyTags {
                line: 0,
                module: name,
            });
        }
        let mut seen = HashSet::new();
        for tag in &tags {
            if !seen.insert(tag) {
                return Err(ManifestError::DuplicateTag {
                    line: 0,
                    module: name,
                    tag: tag.to_string(),
                });
            }
        }
        Ok(Self { name, kind, tags })
    }

    /// Convenience constructor from plain strings.
    pub fn from_strs(name: &str, kind: ModuleKind, tags: &[&str]) -> Result<Self> {
        let tags = tags
            .iter()
            .map(|t| ConcernTag::new(*t))
            .collect::<Result<Vec<_>>>()?;
        Self::new(name, kind, tags)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> ModuleKind {
        self.kind
    }

    pub fn tags(&self) -> &[ConcernTag] {
        &self.tags
    }

    /// f(·): the number of functionalities this module declares.
    pub fn functionality_count(&self) -> usize {
        self.tags.len()
    }

    /// Appends a tag, rejecting duplicates.
    pub fn push_tag(&mut self, tag: ConcernTag) -> Result<()> {
        if self.tags.contains(&tag) {
            return Err(ManifestError::DuplicateTag {
                line: 0,
                module: self.name.clone(),
                tag: tag.to_string(),
            });
        }
        self.tags.push(tag);
        Ok(())
    }
}

/// Free-function form of [`ModuleDecl::functionality_count`].
pub fn functionality_count(d: &ModuleDecl) -> usize {
    d.functionality_count()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConcernManifest {
    version_label: String,
    modules: Vec<ModuleDecl>,
}

impl ConcernManifest {
    pub fn new(version_label: impl Into<String>, modules: Vec<ModuleDecl>) -> Result<Self> {
        if modules.is_empty() {
            return Err(ManifestError::Empty);
        }
        let mut names = HashSet::new();
        for m in &modules {
            if !names.insert(m.name()) {
                return Err(ManifestError::DuplicateModule {
                    line: 0,
                    name: m.name().to_string(),
                });
            }
        }
        Ok(Self {
            version_label: version_label.into(),
            modules,
        })
    }

    pub fn version_label(&self) -> &str {
        &self.version_label
    }

    pub fn set_version_label(&mut self, label: impl Into<String>) {
        self.version_label = label.into();
    }

    pub fn modules(&self) -> &[ModuleDecl] {
        &self.modules
    }

    pub fn modules_mut(&mut self) -> &mut [ModuleDecl] {
        &mut self.modules
    }

    pub fn classes(&self) -> impl Iterator<Item = &ModuleDecl> {
        self.modules
            .iter()
            .filter(|m| m.kind == ModuleKind::ClassModule)
    }

    pub fn aspects(&self) -> impl Iterator<Item = &ModuleDecl> {
        self.modules
            .iter()
            .filter(|m| m.kind == ModuleKind::AspectModule)
    }

    /// p (or q): number of class modules.
    pub fn class_count(&self) -> usize {
        self.classes().count()
    }

    /// r: number of aspect modules.
    pub fn aspect_count(&self) -> usize {
        self.aspects().count()
    }

    pub fn module(&self, name: &str) -> Option<&ModuleDecl> {
        self.modules.iter().find(|m| m.name == name)
    }
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, message: impl Into<String>) -> ManifestError {
        ManifestError::Syntax {
            line: self.line,
            column: self.text[..self.pos].chars().count() + 1,
            message: message.into(),
        }
    }

    fn skip_spaces(&mut self) {
        while let Some(c) = self.peek() {
            if c == ' ' || c == '\t' {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn peek(&self) -> Option<char> {
        self.text[self.pos..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn identifier(&mut self, what: &str) -> Result<&'a str> {
        let start = self.pos;
        match self.peek() {
            Some(c) if c.is_ascii_alphabetic() || c == '_' => self.pos += 1,
            _ => return Err(self.err(format!("expected {what}"))),
        }
        while let Some(c) = self.peek() {
            if is_identifier_char(c) {
                self.pos += 1;
            } else {
                break;
            }
        }
        Ok(&self.text[start..self.pos])
    }

    fn at_end(&self) -> bool {
        self.pos >= self.text.len()
    }
}

/// Parses manifest text. The version label defaults to the empty string
/// when no `version` line is present; see [`load_manifest`] for the
/// file-stem default.
pub fn parse_manifest(text: &str) -> Result<ConcernManifest> {
    parse_manifest_with_label(text, "")
}

pub fn parse_manifest_with_label(text: &str, default_label: &str) -> Result<ConcernManifest> {
    let mut label: Option<String> = None;
    let mut modules: Vec<ModuleDecl> = Vec::new();
    let mut names: HashSet<String> = HashSet::new();
    let mut seen_statement = false;

    for (idx, raw) in text.split('\n').enumerate() {
        let line_no = idx + 1;
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let first = !seen_statement;
        seen_statement = true;

        let mut cur = Cursor {
            text: raw,
            pos: 0,
            line: line_no,
        };
        cur.skip_spaces();
        let keyword_start = cur.pos;
        let keyword = cur.identifier("`class`, `aspect` or `version`")?;
        let kind = match keyword {
            "class" => ModuleKind::ClassModule,
            "aspect" => ModuleKind::AspectModule,
            "version" if first => {
                if !cur.eat(' ') && !cur.eat('\t') {
                    return Err(cur.err("expected a space after `version`"));
                }
                let value = raw[cur.pos..].trim();
                if value.is_empty() {
                    return Err(cur.err("empty version label"));
                }
                label = Some(value.to_string());
                continue;
            }
            "version" => {
                cur.pos = keyword_start;
                return Err(cur.err("`version` must be the first statement"));
            }
            other => {
                cur.pos = keyword_start;
                return Err(cur.err(format!("unknown declaration kind `{other}`")));
            }
        };
        if !cur.eat(' ') && !cur.eat('\t') {
            return Err(cur.err("expected whitespace after declaration kind"));
        }
        cur.skip_spaces();
        let name = cur.identifier("module name")?.to_string();
        cur.skip_spaces();
        if !cur.eat(':') {
            return Err(cur.err("expected `:`"));
        }
        let mut tags: Vec<ConcernTag> = Vec::new();
        loop {
            cur.skip_spaces();
            if cur.at_end() {
                if tags.is_empty() {
                    return Err(ManifestError::EmptyTags {
                        line: line_no,
                        module: name,
                    });
                }
                return Err(cur.err("expected tag after `,`"));
            }
            let tag = ConcernTag(cur.identifier("tag")?.to_string());
            if tags.contains(&tag) {
                return Err(ManifestError::DuplicateTag {
                    line: line_no,
                    module: name,
                    tag: tag.0,
                });
            }
            tags.push(tag);
            cur.skip_spaces();
            if cur.at_end() {
                break;
            }
            if !cur.eat(',') {
                return Err(cur.err("expected `,` or end of line"));
            }
        }
        if !names.insert(name.clone()) {
            return Err(ManifestError::DuplicateModule {
                line: line_no,
                name,
            });
        }
        modules.push(ModuleDecl { name, kind, tags });
    }

    if modules.is_empty() {
        return Err(ManifestError::Empty);
    }
    Ok(ConcernManifest {
        version_label: label.unwrap_or_else(|| default_label.to_string()),
        modules,
    })
}

/// Reads a `.cm` file; the version label defaults to the file stem.
pub fn load_manifest(path: &Path) -> Result<ConcernManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| ManifestError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_manifest_with_label(&text, &stem)
}

/// Canonical text form. An empty label produces no `version` line.
pub fn write_manifest(m: &ConcernManifest) -> String {
    let mut out = String::new();
    if !m.version_label.is_empty() {
        out.push_str("version ");
        out.push_str(&m.version_label);
        out.push('\n');
    }
    for d in &m.modules {
        out.push_str(d.kind.keyword());
        out.push(' ');
        out.push_str(&d.name);
        out.push_str(": ");
        let tags: Vec<&str> = d.tags.iter().map(|t| t.as_str()).collect();
        out.push_str(&tags.join(", "));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_with_two_tags() {
        let m = parse_manifest("class Handshaking: handshake_core, session_mgmt").unwrap();
        assert_eq!(m.class_count(), 1);
        assert_eq!(m.aspect_count(), 0);
        assert_eq!(m.modules()[0].functionality_count(), 2);
    }

    #[test]
    fn single_aspect() {
        let m = parse_manifest("aspect LoggingAspect: logging").unwrap();
        assert_eq!(m.aspect_count(), 1);
        assert_eq!(functionality_count(&m.modules()[0]), 1);
    }

    #[test]
    fn duplicate_tag_is_an_error() {
        assert_eq!(
            parse_manifest("class A: x, x"),
            Err(ManifestError::DuplicateTag {
                line: 1,
                module: "A".into(),
                tag: "x".into()
            })
        );
    }

    #[test]
    fn duplicate_module_is_an_error() {
        let err = parse_manifest("class A: x\naspect A: y\n").unwrap_err();
        assert_eq!(
            err,
            ManifestError::DuplicateModule {
                line: 2,
                name: "A".into()
            }
        );
    }

    #[test]
    fn empty_tag_list() {
        assert!(matches!(
            parse_manifest("class A:   "),
            Err(ManifestError::EmptyTags { line: 1, .. })
        ));
    }

    #[test]
    fn syntax_errors_carry_positions() {
        match parse_manifest("# header\nclass A x, y") {
            Err(ManifestError::Syntax { line, column, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(column, 9);
            }
            other => panic!("unexpected {other:?}"),
        }
        match parse_manifest("interface A: x") {
            Err(ManifestError::Syntax { line, column, .. }) => assert_eq!((line, column), (1, 1)),
            other => panic!("unexpected {other:?}"),
        }
        match parse_manifest("class A: x,") {
            Err(ManifestError::Syntax { line, column, .. }) => assert_eq!((line, column), (1, 12)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_manifest("class A: 9x"),
            Err(ManifestError::Syntax { column: 10, .. })
        ));
    }

    #[test]
    fn comments_blanks_and_spacing() {
        let text = "# c\n\n  version  demo \nclass   A :x ,  y\n\t# another\naspect B:z\n";
        let m = parse_manifest(text).unwrap();
        assert_eq!(m.version_label(), "demo");
        assert_eq!(m.modules().len(), 2);
        assert_eq!(write_manifest(&m), "version demo\nclass A: x, y\naspect B: z\n");
    }

    #[test]
    fn version_only_first() {
        assert!(parse_manifest("class A: x\nversion v").is_err());
    }

    #[test]
    fn no_modules() {
        assert_eq!(parse_manifest("# nothing\n"), Err(ManifestError::Empty));
        assert_eq!(parse_manifest("version v\n"), Err(ManifestError::Empty));
    }

    #[test]
    fn canonical_write() {
        let d = ModuleDecl::from_strs("A", ModuleKind::ClassModule, &["x", "y"]).unwrap();
        let m = ConcernManifest::new("", vec![d]).unwrap();
        assert_eq!(write_manifest(&m), "class A: x, y\n");
    }

    #[test]
    fn constructor_invariants() {
        assert!(ModuleDecl::from_strs("A", ModuleKind::ClassModule, &[]).is_err());
        assert!(ModuleDecl::from_strs("A", ModuleKind::ClassModule, &["x", "x"]).is_err());
        assert!(ModuleDecl::from_strs("1A", ModuleKind::ClassModule, &["x"]).is_err());
        assert!(ConcernTag::new("").is_err());
        assert_eq!(ConcernManifest::new("v", vec![]), Err(ManifestError::Empty));
        let a = ModuleDecl::from_strs("A", ModuleKind::ClassModule, &["x"]).unwrap();
        assert!(ConcernManifest::new("v", vec![a.clone(), a]).is_err());
    }

    #[test]
    fn counting_symbols() {
        let m = parse_manifest("class A: x, y, z\nclass B: x\naspect C: c\n").unwrap();
        assert_eq!(m.class_count() + m.aspect_count(), m.modules().len());
        assert_eq!(m.module("A").unwrap().functionality_count(), 3);
    }
}
