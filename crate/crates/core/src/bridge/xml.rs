//! Minimal XML layer: a canonical writer and a parser into an element tree
//! that remembers byte offsets for diagnostics.

use quick_xml::events::Event;
use quick_xml::{Reader, XmlVersion};

use super::BridgeError;

/// Every element name the protocol knows.
pub const VOCABULARY: &[&str] = &[
    // descriptors
    "MAS",
    "AGENTS-LIST",
    "OBJECT-LIST",
    "STATES-LIST",
    "ACTIONS-LIST",
    "AGENT",
    "ATTRIBUTES",
    "ATTRIBUTE",
    "CURRENT-STATE",
    "STATE",
    "ACTIONS",
    "ACTION",
    "PARAM",
    "OBJECTS-LIST",
    "OBJECT",
    // traffic
    "MESSAGE",
    "PAYLOAD",
    "COMMAND",
    "UPDATE",
    "EVENT",
    "STEP",
    "STEP-RESULT",
    "SETUP",
    // net models
    "NET",
    "PLACE",
    "TRANSITION",
    "INPUT",
    "OUTPUT",
    "TOKEN",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Element {
    pub name: String,
    pub attrs: Vec<(String, String)>,
    pub children: Vec<Element>,
    pub text: String,
    /// Byte offset of the start tag.
    pub offset: u64,
}

impl Element {
    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attrs.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }

    pub fn required(&self, name: &str) -> Result<&str, BridgeError> {
        self.attr(name).ok_or_else(|| self.malformed(format!("<{}> lacks {name}", self.name)))
    }

    pub fn parsed<T: std::str::FromStr>(&self, name: &str) -> Result<T, BridgeError>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.required(name)?;
        raw.parse()
            .map_err(|e| self.malformed(format!("<{}> {name}=\"{raw}\": {e}", self.name)))
    }

    pub fn optional<T: std::str::FromStr>(&self, name: &str) -> Result<Option<T>, BridgeError>
    where
        T::Err: std::fmt::Display,
    {
        match self.attr(name) {
            None => Ok(None),
            Some(_) => self.parsed(name).map(Some),
        }
    }

    /// The NAME attribute, which must be present and non-empty.
    pub fn name_attr(&self) -> Result<&str, BridgeError> {
        match self.attr("NAME") {
            Some(n) if !n.is_empty() => Ok(n),
            _ => Err(BridgeError::MissingName {
                element: self.name.clone(),
                offset: self.offset,
            }),
        }
    }

    pub fn malformed(&self, message: String) -> BridgeError {
        BridgeError::MalformedXml {
            offset: self.offset,
            message,
        }
    }

    /// Fails unless this element is `<name>`.
    pub fn expect(&self, name: &str) -> Result<&Element, BridgeError> {
        if self.name == name {
            Ok(self)
        } else {
            Err(self.unexpected())
        }
    }

    pub fn unexpected(&self) -> BridgeError {
        BridgeError::UnknownElement {
            name: self.name.clone(),
            offset: self.offset,
        }
    }

    /// The single child `<name>`.
    pub fn child(&self, name: &str) -> Result<&Element, BridgeError> {
        let mut it = self.children.iter().filter(|c| c.name == name);
        match (it.next(), it.next()) {
            (Some(c), None) => Ok(c),
            (None, _) => Err(self.malformed(format!("<{}> lacks <{name}>", self.name))),
            (Some(_), Some(c)) => Err(c.malformed(format!("second <{name}> in <{}>", self.name))),
        }
    }

    /// Children, all of which must be `<name>`.
    pub fn only(&self, name: &str) -> Result<&[Element], BridgeError> {
        match self.children.iter().find(|c| c.name != name) {
            Some(c) => Err(c.unexpected()),
            None => Ok(&self.children),
        }
    }
}

/// Parses a document into its root element. Legacy spellings from older
/// descriptor files (`<OBJECTNAME="...">`) are accepted.
pub fn parse_document(bytes: &[u8]) -> Result<Element, BridgeError> {
    let text = std::str::from_utf8(bytes).map_err(|e| BridgeError::MalformedXml {
        offset: e.valid_up_to() as u64,
        message: "not UTF-8".to_string(),
    })?;
    let normalized;
    let text = if text.contains("<OBJECTNAME=") {
        normalized = text.replace("<OBJECTNAME=", "<OBJECT NAME=");
        normalized.as_str()
    } else {
        text
    };
    let mut reader = Reader::from_str(text);
    let mut stack: Vec<Element> = Vec::new();
    let mut root: Option<Element> = None;
    loop {
        let before = reader.buffer_position();
        let event = reader.read_event().map_err(|e| BridgeError::MalformedXml {
            offset: reader.error_position(),
            message: e.to_string(),
        })?;
        let malformed = |message: &str| BridgeError::MalformedXml {
            offset: before,
            message: message.to_string(),
        };
        match event {
            Event::Start(s) | Event::Empty(s) if root.is_some() => {
                let _ = s;
                return Err(malformed("content after the root element"));
            }
            Event::Start(ref s) | Event::Empty(ref s) => {
                let name = s.name().into_inner().to_string();
                if !VOCABULARY.contains(&name.as_str()) {
                    return Err(BridgeError::UnknownElement { name, offset: before });
                }
                let mut attrs: Vec<(String, String)> = Vec::new();
                for a in s.attributes() {
                    let a = a.map_err(|e| malformed(&e.to_string()))?;
                    let key = a.key.into_inner().to_string();
                    let value = a.normalized_value(XmlVersion::Implicit1_0).map_err(|e| malformed(&e.to_string()))?.into_owned();
                    attrs.push((key, value));
                }
                let el = Element {
                    name,
                    attrs,
                    children: Vec::new(),
                    text: String::new(),
                    offset: before,
                };
                if matches!(event, Event::Empty(_)) {
                    attach(&mut stack, &mut root, el);
                } else {
                    stack.push(el);
                }
            }
            Event::End(_) => {
                let el = stack.pop().ok_or_else(|| malformed("unmatched end tag"))?;
                attach(&mut stack, &mut root, el);
            }
            Event::Text(t) => {
                let content = t.xml10_content();
                match stack.last_mut() {
                    Some(top) => top.text.push_str(&content),
                    None if content.trim().is_empty() => {}
                    None => return Err(malformed("text outside the root element")),
                }
            }
            Event::GeneralRef(r) => {
                let c = if r.is_char_ref() {
                    r.resolve_char_ref()
                        .map_err(|e| malformed(&e.to_string()))?
                        .ok_or_else(|| malformed("bad character reference"))?
                } else {
                    match r.xml10_content().as_ref() {
                        "lt" => '<',
                        "gt" => '>',
                        "amp" => '&',
                        "quot" => '"',
                        "apos" => '\'',
                        other => return Err(malformed(&format!("unknown entity &{other};"))),
                    }
                };
                match stack.last_mut() {
                    Some(top) => top.text.push(c),
                    None => return Err(malformed("text outside the root element")),
                }
            }
            Event::CData(c) => match stack.last_mut() {
                Some(top) => top.text.push_str(&c.xml10_content()),
                None => return Err(malformed("text outside the root element")),
            },
            Event::Decl(_) | Event::Comment(_) | Event::PI(_) | Event::DocType(_) => {}
            Event::Eof => break,
        }
    }
    if !stack.is_empty() {
        return Err(BridgeError::MalformedXml {
            offset: text.len() as u64,
            message: format!("input ends inside <{}>", stack.last().map_or("", |e| e.name.as_str())),
        });
    }
    root.ok_or(BridgeError::MalformedXml {
        offset: text.len() as u64,
        message: "no root element".to_string(),
    })
}

fn attach(stack: &mut [Element], root: &mut Option<Element>, mut el: Element) {
    if !el.children.is_empty() && el.text.trim().is_empty() {
        el.text.clear();
    }
    match stack.last_mut() {
        Some(parent) => parent.children.push(el),
        None => *root = Some(el),
    }
}

/// Canonical output: attributes in the order given (NAME first by
/// convention), explicit end tags, no whitespace between elements.
#[derive(Debug, Default)]
pub struct XmlWriter {
    out: String,
}

impl XmlWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn open(&mut self, name: &str, attrs: &[(&str, String)]) -> Result<(), BridgeError> {
        self.out.push('<');
        self.out.push_str(name);
        for (k, v) in attrs {
            check_chars(v)?;
            self.out.push(' ');
            self.out.push_str(k);
            self.out.push_str("=\"");
            for c in v.chars() {
                match c {
                    '&' => self.out.push_str("&amp;"),
                    '<' => self.out.push_str("&lt;"),
                    '>' => self.out.push_str("&gt;"),
                    '"' => self.out.push_str("&quot;"),
                    '\n' => self.out.push_str("&#10;"),
                    '\r' => self.out.push_str("&#13;"),
                    '\t' => self.out.push_str("&#9;"),
                    c => self.out.push(c),
                }
            }
            self.out.push('"');
        }
        self.out.push('>');
        Ok(())
    }

    pub fn close(&mut self, name: &str) {
        self.out.push_str("</");
        self.out.push_str(name);
        self.out.push('>');
    }

    pub fn text(&mut self, text: &str) -> Result<(), BridgeError> {
        check_chars(text)?;
        for c in text.chars() {
            match c {
                '&' => self.out.push_str("&amp;"),
                '<' => self.out.push_str("&lt;"),
                '>' => self.out.push_str("&gt;"),
                '\r' => self.out.push_str("&#13;"),
                c => self.out.push(c),
            }
        }
        Ok(())
    }

    /// `<name attrs>text</name>`.
    pub fn leaf(&mut self, name: &str, attrs: &[(&str, String)], text: &str) -> Result<(), BridgeError> {
        self.open(name, attrs)?;
        self.text(text)?;
        self.close(name);
        Ok(())
    }

    pub fn finish(self) -> Vec<u8> {
        self.out.into_bytes()
    }
}

fn check_chars(s: &str) -> Result<(), BridgeError> {
    match s
        .chars()
        .find(|&c| matches!(c, '\u{0}'..='\u{8}' | '\u{b}' | '\u{c}' | '\u{e}'..='\u{1f}' | '\u{fffe}' | '\u{ffff}'))
    {
        Some(c) => Err(BridgeError::Unserializable(format!("character U+{:04X} cannot appear in XML", c as u32))),
        None => Ok(()),
    }
}
