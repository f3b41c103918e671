//! Minimal element tree over `quick-xml` events, plus the canonical writer shared by every
//! document format in the crate (2-space indentation, attributes in caller order).

use std::fmt::Write as _;

use quick_xml::escape::resolve_predefined_entity;
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use crate::error::{Error, Result};

pub const DECLARATION: &str = r#"<?xml version="1.0" encoding="UTF-8"?>"#;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Element {
    pub name: String,
    pub attrs: Vec<(String, String)>,
    pub children: Vec<Element>,
    pub text: String,
}

impl Element {
    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
    }

    pub fn required(&self, name: &str) -> Result<&str> {
        self.attr(name).ok_or_else(|| {
            Error::validation(
                format!("<{}>", self.name),
                format!("missing attribute `{name}`"),
            )
        })
    }

    pub fn children_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Element> + 'a {
        self.children.iter().filter(move |c| c.name == name)
    }

    pub fn child(&self, name: &str) -> Option<&Element> {
        self.children.iter().find(|c| c.name == name)
    }

    /// Rejects any child whose name is not listed.
    pub fn expect_children(&self, allowed: &[&str]) -> Result<()> {
        match self.children.iter().find(|c| !allowed.contains(&c.name.as_str())) {
            Some(c) => Err(Error::validation(
                format!("<{}>", c.name),
                format!("unexpected element inside <{}>", self.name),
            )),
            None => Ok(()),
        }
    }
}

/// Parses a whole document and returns its root element.
pub fn parse(input: &str, context: &str) -> Result<Element> {
    let mut reader = Reader::from_str(input);
    reader.config_mut().check_end_names = true;

    let mut stack: Vec<Element> = Vec::new();
    let mut root: Option<Element> = None;

    loop {
        let event = reader
            .read_event()
            .map_err(|e| Error::parse(context, format!("{e} at byte {}", reader.error_position())))?;
        match event {
            Event::Start(start) => stack.push(open_element(&start, context)?),
            Event::Empty(start) => {
                let element = open_element(&start, context)?;
                attach(&mut stack, &mut root, element, context)?;
            }
            Event::End(_) => {
                let element = stack
                    .pop()
                    .ok_or_else(|| Error::parse(context, "unbalanced end tag"))?;
                attach(&mut stack, &mut root, element, context)?;
            }
            Event::Text(text) => {
                let content = text.xml10_content().map_err(|e| Error::parse(context, e))?;
                push_text(&mut stack, &content, context)?;
            }
            Event::CData(data) => {
                let content = data.decode().map_err(|e| Error::parse(context, e))?;
                push_text(&mut stack, &content, context)?;
            }
            Event::GeneralRef(reference) => {
                let resolved = match reference.resolve_char_ref().map_err(|e| Error::parse(context, e))? {
                    Some(ch) => ch.to_string(),
                    None => {
                        let name = reference.decode().map_err(|e| Error::parse(context, e))?;
                        resolve_predefined_entity(&name)
                            .ok_or_else(|| Error::parse(context, format!("unknown entity &{name};")))?
                            .to_string()
                    }
                };
                push_text(&mut stack, &resolved, context)?;
            }
            Event::Eof => break,
            Event::Decl(_) | Event::Comment(_) | Event::PI(_) | Event::DocType(_) => {}
        }
    }

    if !stack.is_empty() {
        return Err(Error::parse(context, "unexpected end of document"));
    }
    root.ok_or_else(|| Error::parse(context, "no root element"))
}

fn open_element(start: &BytesStart<'_>, context: &str) -> Result<Element> {
    let name = String::from_utf8(start.name().as_ref().to_vec()).map_err(|e| Error::parse(context, e))?;
    let mut attrs = Vec::new();
    for attr in start.attributes() {
        let attr = attr.map_err(|e| Error::parse(context, e))?;
        let key = String::from_utf8(attr.key.as_ref().to_vec()).map_err(|e| Error::parse(context, e))?;
        let value = attr.unescape_value().map_err(|e| Error::parse(context, e))?;
        attrs.push((key, value.into_owned()));
    }
    Ok(Element {
        name,
        attrs,
        ..Element::default()
    })
}

fn attach(stack: &mut [Element], root: &mut Option<Element>, element: Element, context: &str) -> Result<()> {
    match stack.last_mut() {
        Some(parent) => parent.children.push(element),
        None if root.is_none() => *root = Some(element),
        None => return Err(Error::parse(context, "more than one root element")),
    }
    Ok(())
}

fn push_text(stack: &mut [Element], text: &str, context: &str) -> Result<()> {
    match stack.last_mut() {
        Some(top) => top.text.push_str(text),
        None if text.trim().is_empty() => {}
        None => return Err(Error::parse(context, "text outside the root element")),
    }
    Ok(())
}

/// Characters allowed by XML 1.0 (`Char` production).
pub fn is_xml_char(c: char) -> bool {
    matches!(c, '\u{9}' | '\u{A}' | '\u{D}' | '\u{20}'..='\u{D7FF}' | '\u{E000}'..='\u{FFFD}' | '\u{10000}'..='\u{10FFFF}')
}

fn escape_into(out: &mut String, raw: &str, attribute: bool) {
    for c in raw.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' if attribute => out.push_str("&quot;"),
            '\r' => out.push_str("&#13;"),
            '\n' if attribute => out.push_str("&#10;"),
            '\t' if attribute => out.push_str("&#9;"),
            c => out.push(c),
        }
    }
}

/// Line-oriented writer producing the canonical layout used by all documents.
#[derive(Debug, Default)]
pub struct XmlWriter {
    buf: String,
}

impl XmlWriter {
    pub fn new() -> Self {
        let mut w = XmlWriter::default();
        w.buf.push_str(DECLARATION);
        w.buf.push('\n');
        w
    }

    fn start_tag(&mut self, depth: usize, name: &str, attrs: &[(&str, &str)]) {
        for _ in 0..depth {
            self.buf.push_str("  ");
        }
        self.buf.push('<');
        self.buf.push_str(name);
        for (key, value) in attrs {
            let _ = write!(self.buf, " {key}=\"");
            escape_into(&mut self.buf, value, true);
            self.buf.push('"');
        }
    }

    pub fn empty(&mut self, depth: usize, name: &str, attrs: &[(&str, &str)]) {
        self.start_tag(depth, name, attrs);
        self.buf.push_str("/>\n");
    }

    pub fn open(&mut self, depth: usize, name: &str, attrs: &[(&str, &str)]) {
        self.start_tag(depth, name, attrs);
        self.buf.push_str(">\n");
    }

    pub fn close(&mut self, depth: usize, name: &str) {
        for _ in 0..depth {
            self.buf.push_str("  ");
        }
        let _ = writeln!(self.buf, "</{name}>");
    }

    /// `<name attrs>text</name>` on one line; the text is written verbatim (escaped).
    pub fn text_element(&mut self, depth: usize, name: &str, attrs: &[(&str, &str)], text: &str) {
        self.start_tag(depth, name, attrs);
        self.buf.push('>');
        escape_into(&mut self.buf, text, false);
        let _ = writeln!(self.buf, "</{name}>");
    }

    pub fn finish(self) -> String {
        self.buf
    }
}

/// Writes `contents` to `path` through a sibling temp file and a rename, so readers never
/// observe a partially written document.
pub fn write_atomic(path: &std::path::Path, contents: &[u8]) -> Result<()> {
    use std::io::Write;

    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => std::path::PathBuf::from("."),
    };
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::io(path, std::io::Error::other("path has no file name")))?;
    static COUNTER: std::sync::atomic::AtomicU64 = std::sync::atomic::AtomicU64::new(0);
    let tmp = dir.join(format!(
        ".{}.tmp-{}-{}",
        file_name.to_string_lossy(),
        std::process::id(),
        COUNTER.fetch_add(1, std::sync::atomic::Ordering::Relaxed)
    ));
    let result = (|| {
        let mut file = std::fs::File::create(&tmp)?;
        file.write_all(contents)?;
        file.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}
