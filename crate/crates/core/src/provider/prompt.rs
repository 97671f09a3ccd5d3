//! Prompt templates stored as text assets.
//!
//! A template file is a sequence of messages. A line consisting of `@system`,
//! `@user` or `@assistant` starts a new message with that role. Placeholders
//! are written `{name}`; `{{` and `}}` produce literal braces.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{Message, Role};

/// Every template the simulator renders.
pub const CATALOGUE: [&str; 9] = [
    "reflection-constraint",
    "reflection-expression",
    "crossover",
    "mutation",
    "plan",
    "dialogue",
    "interview",
    "compaction",
    "supervisor-review",
];

const BUILTIN: [(&str, &str); 9] = [
    (
        "reflection-constraint",
        include_str!("../../assets/prompts/reflection-constraint.txt"),
    ),
    (
        "reflection-expression",
        include_str!("../../assets/prompts/reflection-expression.txt"),
    ),
    ("crossover", include_str!("../../assets/prompts/crossover.txt")),
    ("mutation", include_str!("../../assets/prompts/mutation.txt")),
    ("plan", include_str!("../../assets/prompts/plan.txt")),
    ("dialogue", include_str!("../../assets/prompts/dialogue.txt")),
    ("interview", include_str!("../../assets/prompts/interview.txt")),
    ("compaction", include_str!("../../assets/prompts/compaction.txt")),
    (
        "supervisor-review",
        include_str!("../../assets/prompts/supervisor-review.txt"),
    ),
];

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("unknown template {0:?}")]
    UnknownTemplate(String),
    #[error("template {template:?} has no binding for placeholder {{{placeholder}}}")]
    Unbound { template: String, placeholder: String },
    #[error("template {template:?}: {reason}")]
    Malformed { template: String, reason: String },
    #[error("reading prompt asset {path}: {reason}")]
    Io { path: String, reason: String },
}

pub type Bindings = BTreeMap<String, String>;

/// Convenience for building bindings from string pairs.
pub fn bindings<const N: usize>(pairs: [(&str, String); N]) -> Bindings {
    pairs.into_iter().map(|(k, v)| (k.to_owned(), v)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Slot(String),
}

#[derive(Debug, Clone)]
struct Template {
    messages: Vec<(Role, Vec<Piece>)>,
}

fn parse_pieces(template: &str, body: &str) -> Result<Vec<Piece>, PromptError> {
    let mut pieces = Vec::new();
    let mut text = String::new();
    let mut chars = body.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '{' if chars.peek() == Some(&'{') => {
                chars.next();
                text.push('{');
            }
            '}' if chars.peek() == Some(&'}') => {
                chars.next();
                text.push('}');
            }
            '{' => {
                let mut name = String::new();
                loop {
                    match chars.next() {
                        Some('}') => break,
                        Some(ch) if ch.is_ascii_alphanumeric() || ch == '_' => name.push(ch),
                        _ => {
                            return Err(PromptError::Malformed {
                                template: template.to_owned(),
                                reason: format!("bad placeholder after {{{name}"),
                            })
                        }
                    }
                }
                if name.is_empty() {
                    return Err(PromptError::Malformed {
                        template: template.to_owned(),
                        reason: "empty placeholder".to_owned(),
                    });
                }
                if !text.is_empty() {
                    pieces.push(Piece::Text(std::mem::take(&mut text)));
                }
                pieces.push(Piece::Slot(name));
            }
            '}' => {
                return Err(PromptError::Malformed {
                    template: template.to_owned(),
                    reason: "unmatched '}'".to_owned(),
                })
            }
            _ => text.push(c),
        }
    }
    if !text.is_empty() {
        pieces.push(Piece::Text(text));
    }
    Ok(pieces)
}

impl Template {
    fn parse(name: &str, source: &str) -> Result<Self, PromptError> {
        let mut messages: Vec<(Role, String)> = Vec::new();
        for line in source.lines() {
            let role = match line.trim_end() {
                "@system" => Some(Role::System),
                "@user" => Some(Role::User),
                "@assistant" => Some(Role::Assistant),
                _ => None,
            };
            match (role, messages.last_mut()) {
                (Some(role), _) => messages.push((role, String::new())),
                (None, Some((_, body))) => {
                    body.push_str(line);
                    body.push('\n');
                }
                (None, None) if line.trim().is_empty() => {}
                (None, None) => {
                    return Err(PromptError::Malformed {
                        template: name.to_owned(),
                        reason: "text before the first role marker".to_owned(),
                    })
                }
            }
        }
        if messages.is_empty() {
            return Err(PromptError::Malformed {
                template: name.to_owned(),
                reason: "no messages".to_owned(),
            });
        }
        let messages = messages
            .into_iter()
            .map(|(role, body)| Ok((role, parse_pieces(name, body.trim_end())?)))
            .collect::<Result<_, PromptError>>()?;
        Ok(Template { messages })
    }

    fn render(&self, name: &str, bindings: &Bindings) -> Result<Vec<Message>, PromptError> {
        self.messages
            .iter()
            .map(|(role, pieces)| {
                let mut content = String::new();
                for piece in pieces {
                    match piece {
                        Piece::Text(t) => content.push_str(t),
                        Piece::Slot(slot) => match bindings.get(slot) {
                            Some(v) => content.push_str(v),
                            None => {
                                return Err(PromptError::Unbound {
                                    template: name.to_owned(),
                                    placeholder: slot.clone(),
                                })
                            }
                        },
                    }
                }
                Ok(Message {
                    role: *role,
                    content,
                })
            })
            .collect()
    }
}

/// A loaded, hashed set of templates.
#[derive(Debug, Clone)]
pub struct PromptSet {
    templates: BTreeMap<String, Template>,
    hashes: BTreeMap<String, String>,
}

/// Content hashes of a prompt set, as recorded in run manifests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptHashes {
    pub combined: String,
    pub templates: BTreeMap<String, String>,
}

impl PromptSet {
    /// The templates compiled into the binary.
    pub fn builtin() -> Self {
        Self::from_sources(BUILTIN.iter().map(|(k, v)| (k.to_string(), v.to_string())))
            .expect("built-in prompt assets parse")
    }

    /// Loads `<id>.txt` for every catalogue entry from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut sources = Vec::new();
        for id in CATALOGUE {
            let path = dir.join(format!("{id}.txt"));
            let text = fs::read_to_string(&path).map_err(|e| PromptError::Io {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?;
            sources.push((id.to_owned(), text));
        }
        Self::from_sources(sources)
    }

    pub fn from_sources(
        sources: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, PromptError> {
        let mut templates = BTreeMap::new();
        let mut hashes = BTreeMap::new();
        for (id, text) in sources {
            templates.insert(id.clone(), Template::parse(&id, &text)?);
            hashes.insert(id, hex::encode(Sha256::digest(text.as_bytes())));
        }
        Ok(PromptSet { templates, hashes })
    }

    pub fn render(&self, template: &str, bindings: &Bindings) -> Result<Vec<Message>, PromptError> {
        self.templates
            .get(template)
            .ok_or_else(|| PromptError::UnknownTemplate(template.to_owned()))?
            .render(template, bindings)
    }

    pub fn hashes(&self) -> PromptHashes {
        let mut combined = Sha256::new();
        for (id, h) in &self.hashes {
            combined.update(id.as_bytes());
            combined.update(b"\0");
            combined.update(h.as_bytes());
            combined.update(b"\n");
        }
        PromptHashes {
            combined: hex::encode(combined.finalize()),
            templates: self.hashes.clone(),
        }
    }
}

/// Renders one message template directly. Used for ad hoc strings.
pub fn render_str(source: &str, bindings: &Bindings) -> Result<String, PromptError> {
    let pieces = parse_pieces("<inline>", source)?;
    let t = Template {
        messages: vec![(Role::User, pieces)],
    };
    Ok(t.render("<inline>", bindings)?.remove(0).content)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substitutes_placeholders() {
        let out = render_str("Hello {name}", &bindings([("name", "Amy".into())])).unwrap();
        assert_eq!(out, "Hello Amy");
    }

    #[test]
    fn missing_binding_names_the_placeholder() {
        let err = render_str("Hello {name}", &Bindings::new()).unwrap_err();
        assert!(err.to_string().contains("{name}"), "{err}");
        assert!(matches!(err, PromptError::Unbound { placeholder, .. } if placeholder == "name"));
    }

    #[test]
    fn escaped_braces() {
        let out = render_str("{{x}} {y}", &bindings([("y", "1".into())])).unwrap();
        assert_eq!(out, "{x} 1");
        assert!(render_str("a } b", &Bindings::new()).is_err());
    }

    #[test]
    fn unknown_template() {
        let set = PromptSet::builtin();
        assert_eq!(
            set.render("nope", &Bindings::new()).unwrap_err(),
            PromptError::UnknownTemplate("nope".into())
        );
    }

    #[test]
    fn builtin_catalogue_is_complete() {
        let set = PromptSet::builtin();
        let h = set.hashes();
        for id in CATALOGUE {
            assert!(h.templates.contains_key(id), "{id}");
        }
        assert_eq!(h.combined.len(), 64);
    }

    #[test]
    fn role_markers_split_messages() {
        let set = PromptSet::from_sources([(
            "t".to_owned(),
            "@system\nbe {x}\n@user\nsay {y}\n".to_owned(),
        )])
        .unwrap();
        let msgs = set
            .render("t", &bindings([("x", "kind".into()), ("y", "hi".into())]))
            .unwrap();
        assert_eq!(msgs.len(), 2);
        assert_eq!(msgs[0].role, Role::System);
        assert_eq!(msgs[0].content, "be kind");
        assert_eq!(msgs[1].content, "say hi");
    }

    #[test]
    fn supervisor_review_snapshot() {
        let set = PromptSet::builtin();
        let msgs = set
            .render(
                "supervisor-review",
                &bindings([
                    ("regulation_text", "P1: No numeric content.".into()),
                    (
                        "dialogue_excerpt",
                        "Message under review from A: the moon waxes".into(),
                    ),
                    ("format_note", String::new()),
                ]),
            )
            .unwrap();
        let rendered: String = msgs
            .iter()
            .map(|m| format!("[{}]\n{}\n", m.role.as_str(), m.content))
            .collect();
        let expected = include_str!("../../tests/fixtures/supervisor_review.snap");
        assert_eq!(rendered, expected);
    }
}
