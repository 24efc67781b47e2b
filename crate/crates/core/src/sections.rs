//! Line-oriented `[section arg]` / `key=value` reader shared by the knowledge-base and
//! experiment-config formats. `#` starts a comment.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub(crate) struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
    /// 1-based column where the value starts.
    pub column: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Section {
    pub kind: String,
    pub arg: String,
    pub line: usize,
    pub entries: Vec<Entry>,
}

impl Section {
    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }

    pub fn all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a Entry> + 'a {
        self.entries.iter().filter(move |e| e.key == key)
    }
}

/// Everything before the first header lands in a section with an empty kind.
pub(crate) fn read_sections(source_name: &str, text: &str) -> Result<Vec<Section>> {
    let syntax = |line: usize, column: usize, message: String| Error::Syntax {
        source_name: source_name.to_string(),
        line,
        column,
        message,
    };
    let mut sections = vec![Section {
        kind: String::new(),
        arg: String::new(),
        line: 0,
        entries: Vec::new(),
    }];
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        let trimmed = content.trim();
        if trimmed.is_empty() {
            continue;
        }
        let indent = content.len() - content.trim_start().len();
        if let Some(rest) = trimmed.strip_prefix('[') {
            let inner = rest.strip_suffix(']').ok_or_else(|| {
                syntax(line_no, indent + trimmed.len(), "unterminated section header".into())
            })?;
            let inner = inner.trim();
            let (kind, arg) = match inner.split_once(char::is_whitespace) {
                Some((k, a)) => (k, a.trim()),
                None => (inner, ""),
            };
            if kind.is_empty() {
                return Err(syntax(line_no, indent + 2, "empty section header".into()));
            }
            sections.push(Section {
                kind: kind.to_ascii_lowercase(),
                arg: arg.to_string(),
                line: line_no,
                entries: Vec::new(),
            });
            continue;
        }
        let eq = content
            .find('=')
            .ok_or_else(|| syntax(line_no, indent + 1, format!("expected key=value, got `{trimmed}`")))?;
        let key = content[..eq].trim();
        if key.is_empty() {
            return Err(syntax(line_no, indent + 1, "missing key before `=`".into()));
        }
        let after = &content[eq + 1..];
        let value = after.trim();
        let column = eq + 2 + (after.len() - after.trim_start().len());
        sections
            .last_mut()
            .expect("preamble section always present")
            .entries
            .push(Entry {
                key: key.to_ascii_lowercase(),
                value: value.to_string(),
                line: line_no,
                column,
            });
    }
    Ok(sections)
}
