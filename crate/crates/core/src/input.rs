//! GetPot-style input files.
//!
//! ```text
//! # comment
//! [Physics]                       # top-level section
//!   enabled_physics = 'Poisson'
//!   [./Poisson]                   # child of the current section
//!     kappa = 1.0
//!   [../]                         # back to the parent
//! []                              # back to the root
//! include('common.in')            # splice another file here
//! ```
//!
//! Values may be single-quoted (and then span lines) or bare tokens. Keys are
//! addressed by slash-separated paths such as `Physics/Poisson/kappa`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;

use crate::error::{Error, Location, Result};

/// Supplies the contents of `include(...)` targets.
pub trait IncludeResolver {
    /// Returns `(canonical name, text)` for `target` included from `from`.
    fn resolve(&self, from: &str, target: &str) -> Result<(String, String)>;
}

/// Resolves includes relative to the including file's directory.
pub struct FsResolver;

impl IncludeResolver for FsResolver {
    fn resolve(&self, from: &str, target: &str) -> Result<(String, String)> {
        let base = Path::new(from).parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        let path = if Path::new(target).is_absolute() { PathBuf::from(target) } else { base.join(target) };
        let text = std::fs::read_to_string(&path).map_err(|e| Error::parse(from, 0, format!("cannot include '{}': {e}", path.display())))?;
        Ok((path.to_string_lossy().into_owned(), text))
    }
}

/// In-memory resolver keyed by include target.
#[derive(Default)]
pub struct MapResolver(pub BTreeMap<String, String>);

impl IncludeResolver for MapResolver {
    fn resolve(&self, from: &str, target: &str) -> Result<(String, String)> {
        match self.0.get(target) {
            Some(text) => Ok((target.to_string(), text.clone())),
            None => Err(Error::parse(from, 0, format!("cannot include '{target}': not found"))),
        }
    }
}

/// Rejects every include.
pub struct NoIncludes;

impl IncludeResolver for NoIncludes {
    fn resolve(&self, from: &str, target: &str) -> Result<(String, String)> {
        Err(Error::parse(from, 0, format!("include('{target}') not allowed here")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub value: String,
    pub location: Location,
    /// Locations of earlier definitions this one replaced.
    pub overrides: Vec<Location>,
}

#[derive(Debug, Default)]
pub struct InputTree {
    entries: BTreeMap<String, Entry>,
    sections: BTreeSet<String>,
    accessed: Mutex<BTreeSet<String>>,
}

impl Clone for InputTree {
    fn clone(&self) -> Self {
        InputTree {
            entries: self.entries.clone(),
            sections: self.sections.clone(),
            accessed: Mutex::new(self.accessed.lock().unwrap().clone()),
        }
    }
}

impl PartialEq for InputTree {
    fn eq(&self, other: &Self) -> bool {
        self.sections == other.sections
            && self.entries.len() == other.entries.len()
            && self.entries.iter().zip(&other.entries).all(|((ka, a), (kb, b))| ka == kb && a.value == b.value)
    }
}

fn join(section: &str, key: &str) -> String {
    if section.is_empty() {
        key.to_string()
    } else {
        format!("{section}/{key}")
    }
}

struct ParseState<'r> {
    stack: Vec<String>,
    files: Vec<String>,
    resolver: &'r dyn IncludeResolver,
}

impl InputTree {
    pub fn parse(text: &str) -> Result<InputTree> {
        Self::parse_named("<input>", text, &NoIncludes)
    }

    pub fn parse_with(text: &str, resolver: &dyn IncludeResolver) -> Result<InputTree> {
        Self::parse_named("<input>", text, resolver)
    }

    pub fn parse_named(name: &str, text: &str, resolver: &dyn IncludeResolver) -> Result<InputTree> {
        let mut tree = InputTree::default();
        let mut state = ParseState { stack: Vec::new(), files: Vec::new(), resolver };
        tree.parse_file(name, text, &mut state)?;
        Ok(tree)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<InputTree> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse_named(&path.to_string_lossy(), &text, &FsResolver)
    }

    fn parse_file(&mut self, name: &str, text: &str, state: &mut ParseState<'_>) -> Result<()> {
        if state.files.iter().any(|f| f == name) {
            return Err(Error::parse(name, 0, format!("include cycle: {} -> {name}", state.files.join(" -> "))));
        }
        state.files.push(name.to_string());
        let chars: Vec<char> = text.chars().collect();
        let mut i = 0;
        let mut line = 1;
        let err = |line: usize, msg: String| Error::parse(name, line, msg);

        let skip_inline_ws = |i: &mut usize| {
            while *i < chars.len() && (chars[*i] == ' ' || chars[*i] == '\t' || chars[*i] == '\r') {
                *i += 1;
            }
        };
        // After a complete statement only whitespace or a comment may follow on the line.
        let finish_line = |i: &mut usize, line: usize| -> Result<()> {
            skip_inline_ws(i);
            if *i < chars.len() && chars[*i] == '#' {
                while *i < chars.len() && chars[*i] != '\n' {
                    *i += 1;
                }
            }
            if *i < chars.len() && chars[*i] != '\n' {
                return Err(err(line, format!("unexpected text '{}'", chars[*i..].iter().take_while(|c| **c != '\n').collect::<String>())));
            }
            Ok(())
        };

        while i < chars.len() {
            skip_inline_ws(&mut i);
            if i >= chars.len() {
                break;
            }
            match chars[i] {
                '\n' => {
                    line += 1;
                    i += 1;
                }
                '#' => {
                    while i < chars.len() && chars[i] != '\n' {
                        i += 1;
                    }
                }
                '[' => {
                    let start = i + 1;
                    let Some(len) = chars[start..].iter().position(|c| *c == ']' || *c == '\n') else {
                        return Err(err(line, "unterminated section header".into()));
                    };
                    if chars[start + len] != ']' {
                        return Err(err(line, "unterminated section header".into()));
                    }
                    let header: String = chars[start..start + len].iter().collect::<String>().trim().to_string();
                    i = start + len + 1;
                    if header.is_empty() {
                        state.stack.clear();
                    } else if header == "../" || header == ".." {
                        if state.stack.pop().is_none() {
                            return Err(err(line, "'[../]' above the root section".into()));
                        }
                    } else if let Some(sub) = header.strip_prefix("./") {
                        let sub = sub.trim_end_matches('/');
                        if sub.is_empty() {
                            return Err(err(line, "empty subsection name".into()));
                        }
                        state.stack.push(sub.to_string());
                    } else {
                        state.stack = header.trim_matches('/').split('/').map(str::to_string).collect();
                    }
                    if !state.stack.is_empty() {
                        for k in 1..=state.stack.len() {
                            self.sections.insert(state.stack[..k].join("/"));
                        }
                    }
                    finish_line(&mut i, line)?;
                }
                _ => {
                    let start = i;
                    while i < chars.len() && (chars[i].is_alphanumeric() || "_.-:".contains(chars[i])) {
                        i += 1;
                    }
                    let key: String = chars[start..i].iter().collect();
                    if key.is_empty() {
                        return Err(err(line, format!("unexpected character '{}'", chars[i])));
                    }
                    skip_inline_ws(&mut i);
                    if key == "include" && i < chars.len() && chars[i] == '(' {
                        i += 1;
                        skip_inline_ws(&mut i);
                        let quote = chars.get(i).copied();
                        if quote != Some('\'') && quote != Some('"') {
                            return Err(err(line, "include expects a quoted path".into()));
                        }
                        let q = quote.unwrap();
                        i += 1;
                        let s = i;
                        while i < chars.len() && chars[i] != q && chars[i] != '\n' {
                            i += 1;
                        }
                        if i >= chars.len() || chars[i] != q {
                            return Err(err(line, "unterminated quote in include".into()));
                        }
                        let target: String = chars[s..i].iter().collect();
                        i += 1;
                        skip_inline_ws(&mut i);
                        if chars.get(i) != Some(&')') {
                            return Err(err(line, "expected ')' after include path".into()));
                        }
                        i += 1;
                        finish_line(&mut i, line)?;
                        let (inc_name, inc_text) = state.resolver.resolve(name, &target).map_err(|e| match e {
                            Error::Parse { message, .. } => err(line, message),
                            other => other,
                        })?;
                        self.parse_file(&inc_name, &inc_text, state)?;
                        continue;
                    }
                    if chars.get(i) != Some(&'=') {
                        return Err(err(line, format!("expected '=' after key '{key}'")));
                    }
                    i += 1;
                    skip_inline_ws(&mut i);
                    let key_line = line;
                    let value = match chars.get(i) {
                        Some(&q) if q == '\'' || q == '"' => {
                            i += 1;
                            let s = i;
                            while i < chars.len() && chars[i] != q {
                                if chars[i] == '\n' {
                                    line += 1;
                                }
                                i += 1;
                            }
                            if i >= chars.len() {
                                return Err(err(key_line, format!("unterminated quote in value of '{key}'")));
                            }
                            let v: String = chars[s..i].iter().collect();
                            i += 1;
                            v
                        }
                        _ => {
                            let s = i;
                            while i < chars.len() && !chars[i].is_whitespace() && chars[i] != '#' {
                                i += 1;
                            }
                            chars[s..i].iter().collect()
                        }
                    };
                    finish_line(&mut i, line)?;
                    let path = join(&state.stack.join("/"), &key);
                    self.insert(path, value, Location { file: name.to_string(), line: key_line });
                }
            }
        }
        state.files.pop();
        Ok(())
    }

    fn insert(&mut self, path: String, value: String, location: Location) {
        if let Some(slash) = path.rfind('/') {
            let section = &path[..slash];
            let parts: Vec<&str> = section.split('/').collect();
            for k in 1..=parts.len() {
                self.sections.insert(parts[..k].join("/"));
            }
        }
        match self.entries.get_mut(&path) {
            Some(entry) => {
                let previous = std::mem::replace(&mut entry.location, location);
                entry.overrides.push(previous);
                entry.value = value;
            }
            None => {
                self.entries.insert(path, Entry { value, location, overrides: Vec::new() });
            }
        }
    }

    /// Set or override a value, e.g. from `--redirect-key PATH=VALUE`.
    pub fn set(&mut self, path: &str, value: &str) {
        self.insert(path.trim_matches('/').to_string(), value.to_string(), Location { file: "<command line>".into(), line: 0 });
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty() && self.sections.is_empty()
    }

    pub fn entry(&self, path: &str) -> Option<&Entry> {
        self.entries.get(path)
    }

    pub fn has(&self, path: &str) -> bool {
        self.entries.contains_key(path)
    }

    pub fn has_section(&self, path: &str) -> bool {
        self.sections.contains(path)
    }

    /// Raw value, marking the key as used.
    pub fn raw(&self, path: &str) -> Option<&str> {
        let entry = self.entries.get(path)?;
        self.accessed.lock().unwrap().insert(path.to_string());
        Some(&entry.value)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn sections(&self) -> impl Iterator<Item = &str> {
        self.sections.iter().map(String::as_str)
    }

    /// Keys never looked up, for the end-of-run audit.
    pub fn unused_keys(&self) -> Vec<String> {
        let accessed = self.accessed.lock().unwrap();
        self.entries.keys().filter(|k| !accessed.contains(*k)).cloned().collect()
    }

    fn bad_value(&self, path: &str, what: &str) -> Error {
        let entry = &self.entries[path];
        Error::config(path, format!("cannot parse '{}' as {what} ({})", entry.value, entry.location))
    }

    pub fn get_str(&self, path: &str, default: &str) -> String {
        self.raw(path).map(|v| v.trim().to_string()).unwrap_or_else(|| default.to_string())
    }

    /// Typed scalar, or `None` when the key is absent.
    pub fn get<T: FromScalar>(&self, path: &str) -> Result<Option<T>> {
        match self.raw(path) {
            None => Ok(None),
            Some(v) => T::from_scalar(v.trim()).map(Some).ok_or_else(|| self.bad_value(path, T::NAME)),
        }
    }

    pub fn get_scalar<T: FromScalar>(&self, path: &str, default: T) -> Result<T> {
        Ok(self.get(path)?.unwrap_or(default))
    }

    /// Whitespace-separated list.
    pub fn get_vector<T: FromScalar>(&self, path: &str, default: Vec<T>) -> Result<Vec<T>> {
        match self.raw(path) {
            None => Ok(default),
            Some(v) => v
                .split_whitespace()
                .map(|tok| T::from_scalar(tok).ok_or_else(|| self.bad_value(path, &format!("list of {}", T::NAME))))
                .collect(),
        }
    }

    pub fn get_opt_vector<T: FromScalar>(&self, path: &str) -> Result<Option<Vec<T>>> {
        if self.has(path) {
            self.get_vector(path, Vec::new()).map(Some)
        } else {
            Ok(None)
        }
    }

    /// One of a fixed set of choices (case-sensitive).
    pub fn get_enum(&self, path: &str, choices: &[&str], default: &str) -> Result<String> {
        match self.raw(path) {
            None => Ok(default.to_string()),
            Some(v) => {
                let v = v.trim();
                if choices.contains(&v) {
                    Ok(v.to_string())
                } else {
                    let loc = &self.entries[path].location;
                    Err(Error::config(path, format!("'{v}' is not one of [{}] ({loc})", choices.join(", "))))
                }
            }
        }
    }

    /// Serialize back to GetPot text.
    pub fn to_getpot(&self) -> String {
        let mut by_section: BTreeMap<&str, Vec<(&str, &Entry)>> = BTreeMap::new();
        for s in &self.sections {
            by_section.entry(s.as_str()).or_default();
        }
        for (path, entry) in &self.entries {
            let (section, key) = match path.rfind('/') {
                Some(i) => (&path[..i], &path[i + 1..]),
                None => ("", path.as_str()),
            };
            by_section.entry(section).or_default().push((key, entry));
        }
        let mut out = String::new();
        if let Some(root) = by_section.remove("") {
            for (key, entry) in root {
                let _ = writeln!(out, "{key} = '{}'", entry.value);
            }
        }
        for (section, items) in by_section {
            let _ = writeln!(out, "[{section}]");
            for (key, entry) in items {
                let _ = writeln!(out, "  {key} = '{}'", entry.value);
            }
            let _ = writeln!(out, "[]");
        }
        out
    }
}

/// Scalars readable from input values.
pub trait FromScalar: Sized {
    const NAME: &'static str;
    fn from_scalar(s: &str) -> Option<Self>;
}

macro_rules! from_str_scalar {
    ($($t:ty => $name:expr),*) => {$(
        impl FromScalar for $t {
            const NAME: &'static str = $name;
            fn from_scalar(s: &str) -> Option<Self> {
                <$t>::from_str(s).ok()
            }
        }
    )*};
}

from_str_scalar!(f64 => "real", usize => "count", i32 => "integer", i64 => "integer", u32 => "count", String => "string");

impl FromScalar for bool {
    const NAME: &'static str = "boolean";
    fn from_scalar(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "true" | "1" | "yes" | "on" => Some(true),
            "false" | "0" | "no" | "off" => Some(false),
            _ => None,
        }
    }
}
