//! Sectioned `key = value` files with per-line diagnostics.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub source: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "{}:{}: {}", self.source, l, self.message),
            None => write!(f, "{}: {}", self.source, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone)]
struct Entry {
    line: usize,
    value: String,
}

/// A parsed file that remembers which keys were read, so unread keys can be
/// reported as unknown.
#[derive(Debug)]
pub struct Ini {
    source: String,
    sections: BTreeMap<String, (usize, BTreeMap<String, Entry>)>,
    used: RefCell<BTreeSet<(String, String)>>,
}

impl Ini {
    pub fn parse(source: &str, text: &str) -> Result<Self, ConfigError> {
        let err = |line, message: String| ConfigError { source: source.into(), line: Some(line), message };
        let mut sections: BTreeMap<String, (usize, BTreeMap<String, Entry>)> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let s = raw.split(['#', ';']).next().unwrap_or("").trim();
            if s.is_empty() {
                continue;
            }
            if let Some(rest) = s.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| err(line, format!("unterminated section header {s:?}")))?;
                let name = name.trim().to_ascii_lowercase();
                if name.is_empty() {
                    return Err(err(line, "empty section name".into()));
                }
                if sections.contains_key(&name) {
                    return Err(err(line, format!("section [{name}] appears twice")));
                }
                sections.insert(name.clone(), (line, BTreeMap::new()));
                current = Some(name);
                continue;
            }
            let (k, v) = s.split_once('=').ok_or_else(|| err(line, format!("expected key = value, found {s:?}")))?;
            let section = current.as_ref().ok_or_else(|| err(line, "key outside of any section".into()))?;
            let key = k.trim().to_ascii_lowercase();
            if key.is_empty() {
                return Err(err(line, "empty key".into()));
            }
            let table = &mut sections.get_mut(section).unwrap().1;
            if table.contains_key(&key) {
                return Err(err(line, format!("[{section}] {key} given twice")));
            }
            table.insert(key, Entry { line, value: v.trim().to_string() });
        }
        Ok(Ini { source: source.into(), sections, used: RefCell::new(BTreeSet::new()) })
    }

    pub fn error(&self, line: Option<usize>, message: impl Into<String>) -> ConfigError {
        ConfigError { source: self.source.clone(), line, message: message.into() }
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.sections.contains_key(section)
    }

    fn entry(&self, section: &str, key: &str) -> Option<&Entry> {
        let e = self.sections.get(section)?.1.get(key)?;
        self.used.borrow_mut().insert((section.into(), key.into()));
        Some(e)
    }

    pub fn line_of(&self, section: &str, key: &str) -> Option<usize> {
        self.sections.get(section).and_then(|s| s.1.get(key)).map(|e| e.line)
    }

    pub fn get_str(&self, section: &str, key: &str) -> Option<String> {
        self.entry(section, key).map(|e| e.value.clone())
    }

    pub fn require_str(&self, section: &str, key: &str) -> Result<String, ConfigError> {
        self.get_str(section, key).ok_or_else(|| self.error(None, format!("[{section}] missing required key '{key}'")))
    }

    pub fn get<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>, ConfigError> {
        match self.entry(section, key) {
            None => Ok(None),
            Some(e) => e.value.parse().map(Some).map_err(|_| {
                self.error(
                    Some(e.line),
                    format!("[{section}] {key}: cannot parse {:?} as {}", e.value, short_type::<T>()),
                )
            }),
        }
    }

    pub fn get_or<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T, ConfigError> {
        Ok(self.get(section, key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, section: &str, key: &str) -> Result<T, ConfigError> {
        self.get(section, key)?.ok_or_else(|| self.error(None, format!("[{section}] missing required key '{key}'")))
    }

    /// Comma-separated list.
    pub fn get_list<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<Vec<T>>, ConfigError> {
        let Some(e) = self.entry(section, key) else {
            return Ok(None);
        };
        if e.value.is_empty() {
            return Ok(Some(Vec::new()));
        }
        e.value
            .split(',')
            .map(|t| {
                t.trim().parse().map_err(|_| {
                    self.error(Some(e.line), format!("[{section}] {key}: cannot parse {:?} as {}", t.trim(), short_type::<T>()))
                })
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    /// Keys of `section` starting with `prefix`, with the prefix removed.
    pub fn keys_with_prefix(&self, section: &str, prefix: &str) -> Vec<String> {
        self.sections
            .get(section)
            .map(|s| s.1.keys().filter_map(|k| k.strip_prefix(prefix).map(String::from)).collect())
            .unwrap_or_default()
    }

    /// Fail on the first section or key, by line, that was never read.
    pub fn reject_unknown(&self) -> Result<(), ConfigError> {
        let used = self.used.borrow();
        let mut unknown = Vec::new();
        for (name, (line, table)) in &self.sections {
            if table.is_empty() && !used.iter().any(|(s, _)| s == name) {
                unknown.push((*line, format!("unknown or unused section [{name}]")));
            }
            for (key, e) in table {
                if !used.contains(&(name.clone(), key.clone())) {
                    unknown.push((e.line, format!("[{name}] unknown key '{key}'")));
                }
            }
        }
        match unknown.into_iter().min() {
            Some((line, message)) => Err(self.error(Some(line), message)),
            None => Ok(()),
        }
    }
}

fn short_type<T>() -> &'static str {
    let name = std::any::type_name::<T>();
    match name {
        "f64" => "a number",
        "usize" | "u64" | "u32" => "a non-negative integer",
        "bool" => "true or false",
        _ => name.rsplit("::").next().unwrap_or(name),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = "# comment\n[grid]\nm = 2\nresolution = 32 ; trailing\nactive = 0, 1\n\n[flow]\ndt = abc\n";

    #[test]
    fn values_and_lists() {
        let ini = Ini::parse("s.ini", TEXT).unwrap();
        assert_eq!(ini.require::<usize>("grid", "m").unwrap(), 2);
        assert_eq!(ini.get::<usize>("grid", "resolution").unwrap(), Some(32));
        assert_eq!(ini.get_list::<usize>("grid", "active").unwrap(), Some(vec![0, 1]));
        assert_eq!(ini.get_or("grid", "missing", 7.5).unwrap(), 7.5);
    }

    #[test]
    fn diagnostics_carry_line_numbers() {
        let ini = Ini::parse("s.ini", TEXT).unwrap();
        let e = ini.get::<f64>("flow", "dt").unwrap_err();
        assert_eq!(e.line, Some(8));
        assert!(e.to_string().starts_with("s.ini:8: [flow] dt"));
        let e = ini.require::<f64>("flow", "t_end").unwrap_err();
        assert!(e.to_string().contains("missing required key 't_end'"));
    }

    #[test]
    fn unknown_keys_are_reported() {
        let ini = Ini::parse("s.ini", TEXT).unwrap();
        ini.get::<usize>("grid", "m").unwrap();
        let e = ini.reject_unknown().unwrap_err();
        assert_eq!(e.line, Some(4));
    }

    #[test]
    fn malformed_lines() {
        assert_eq!(Ini::parse("s", "m = 1\n").unwrap_err().line, Some(1));
        assert_eq!(Ini::parse("s", "[a]\nnovalue\n").unwrap_err().line, Some(2));
        assert_eq!(Ini::parse("s", "[a]\nx=1\nx=2\n").unwrap_err().line, Some(3));
        assert_eq!(Ini::parse("s", "[a\n").unwrap_err().line, Some(1));
        assert_eq!(Ini::parse("s", "[a]\n[a]\n").unwrap_err().line, Some(2));
    }
}
