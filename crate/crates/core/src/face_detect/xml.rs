//! Minimal element tree over quick-xml, keeping enough context for path-qualified errors.

use quick_xml::events::Event;
use quick_xml::Reader;

use crate::error::{Error, Result};

#[derive(Debug, Default)]
pub(crate) struct Element {
    pub name: String,
    pub path: String,
    pub text: String,
    pub children: Vec<Element>,
}

impl Element {
    pub fn child(&self, name: &str) -> Option<&Element> {
        self.children.iter().find(|c| c.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&Element> {
        self.child(name).ok_or_else(|| Error::CascadeParse {
            path: self.path.clone(),
            message: format!("missing element <{name}>"),
        })
    }

    /// Whitespace-separated numbers in the element text.
    pub fn numbers(&self) -> Result<Vec<f64>> {
        self.text
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>().map_err(|_| Error::CascadeParse {
                    path: self.path.clone(),
                    message: format!("not a number: {t:?}"),
                })
            })
            .collect()
    }

    pub fn number(&self) -> Result<f64> {
        match self.numbers()?.as_slice() {
            [v] => Ok(*v),
            other => Err(Error::CascadeParse {
                path: self.path.clone(),
                message: format!("expected one number, found {}", other.len()),
            }),
        }
    }
}

pub(crate) fn parse(text: &str) -> Result<Element> {
    let mut reader = Reader::from_str(text);
    let mut stack: Vec<Element> = vec![Element { path: String::new(), ..Default::default() }];

    let path_of = |stack: &[Element]| -> String {
        let p: Vec<&str> = stack.iter().skip(1).map(|e| e.name.as_str()).collect();
        if p.is_empty() { "/".to_string() } else { p.join("/") }
    };

    loop {
        let event = reader.read_event().map_err(|e| {
            let message = match (&e, stack.last()) {
                // Syntax errors are unterminated constructs, i.e. the input stopped early.
                (quick_xml::Error::Syntax(_), Some(open)) if stack.len() > 1 => {
                    format!("unexpected end of file: missing closing tag </{}> ({e})", open.name)
                }
                _ => format!("{e} (byte {})", reader.error_position()),
            };
            Error::CascadeParse { path: path_of(&stack), message }
        })?;
        match event {
            Event::Start(start) => {
                let name = String::from_utf8_lossy(start.name().as_ref()).into_owned();
                let parent_path = &stack.last().expect("root stays on stack").path;
                let path = if parent_path.is_empty() { name.clone() } else { format!("{parent_path}/{name}") };
                stack.push(Element { name, path, ..Default::default() });
            }
            Event::Empty(start) => {
                let name = String::from_utf8_lossy(start.name().as_ref()).into_owned();
                let parent = stack.last_mut().expect("root stays on stack");
                let path = if parent.path.is_empty() { name.clone() } else { format!("{}/{name}", parent.path) };
                parent.children.push(Element { name, path, ..Default::default() });
            }
            Event::End(_) => {
                let done = stack.pop().expect("end tags are matched by the reader");
                stack
                    .last_mut()
                    .ok_or_else(|| Error::CascadeParse { path: "/".into(), message: "unbalanced end tag".into() })?
                    .children
                    .push(done);
            }
            Event::Text(t) => {
                let s = t.unescape().map_err(|e| Error::CascadeParse {
                    path: path_of(&stack),
                    message: e.to_string(),
                })?;
                let top = stack.last_mut().expect("root stays on stack");
                top.text.push_str(&s);
            }
            Event::CData(c) => {
                let top = stack.last_mut().expect("root stays on stack");
                top.text.push_str(&String::from_utf8_lossy(&c));
            }
            Event::Eof => break,
            _ => {}
        }
    }

    if stack.len() > 1 {
        let open = stack.last().map(|e| e.name.clone()).unwrap_or_default();
        return Err(Error::CascadeParse {
            path: path_of(&stack),
            message: format!("unexpected end of file: missing closing tag </{open}>"),
        });
    }
    let root = stack.pop().expect("document node");
    if root.children.is_empty() {
        return Err(Error::CascadeParse { path: "/".into(), message: "document has no root element".into() });
    }
    Ok(root)
}
