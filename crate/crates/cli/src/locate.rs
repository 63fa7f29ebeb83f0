//! Map JSON paths (`detectors[0].profile.strength`) to 1-based source lines.
//!
//! The input has already been accepted by `serde_json`, so the scanner only
//! needs to track structure, not report syntax errors.

use std::collections::HashMap;

pub struct LineIndex {
    lines: HashMap<String, usize>,
}

impl LineIndex {
    pub fn new(src: &str) -> Self {
        let mut s = Scanner {
            bytes: src.as_bytes(),
            pos: 0,
            line: 1,
            lines: HashMap::new(),
        };
        s.lines.insert(String::new(), 1);
        s.value(String::new());
        LineIndex { lines: s.lines }
    }

    /// Line of `path`, or of its nearest ancestor present in the source
    /// (fields filled in by defaults have no line of their own).
    pub fn line_of(&self, path: &str) -> usize {
        let mut p = path;
        loop {
            if let Some(l) = self.lines.get(p) {
                return *l;
            }
            match p.rfind(['.', '[']) {
                Some(i) => p = &p[..i],
                None => return self.lines[""],
            }
        }
    }
}

struct Scanner<'a> {
    bytes: &'a [u8],
    pos: usize,
    line: usize,
    lines: HashMap<String, usize>,
}

impl Scanner<'_> {
    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn bump(&mut self) {
        if self.peek() == Some(b'\n') {
            self.line += 1;
        }
        self.pos += 1;
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b' ' | b'\t' | b'\n' | b'\r')) {
            self.bump();
        }
    }

    fn string(&mut self) -> String {
        self.bump(); // opening quote
        let start = self.pos;
        while let Some(c) = self.peek() {
            match c {
                b'\\' => {
                    self.bump();
                    self.bump();
                }
                b'"' => break,
                _ => self.bump(),
            }
        }
        let raw = &self.bytes[start..self.pos];
        self.bump();
        serde_json::from_slice::<String>(&[b"\"", raw, b"\""].concat())
            .unwrap_or_else(|_| String::from_utf8_lossy(raw).into_owned())
    }

    fn value(&mut self, path: String) {
        self.skip_ws();
        match self.peek() {
            Some(b'{') => {
                self.bump();
                loop {
                    self.skip_ws();
                    match self.peek() {
                        Some(b'"') => {
                            let line = self.line;
                            let key = self.string();
                            let child = if path.is_empty() { key } else { format!("{path}.{key}") };
                            self.lines.insert(child.clone(), line);
                            self.skip_ws();
                            self.bump(); // ':'
                            self.value(child);
                        }
                        Some(b',') => self.bump(),
                        Some(b'}') => {
                            self.bump();
                            return;
                        }
                        _ => return,
                    }
                }
            }
            Some(b'[') => {
                self.bump();
                let mut i = 0;
                loop {
                    self.skip_ws();
                    match self.peek() {
                        Some(b',') => self.bump(),
                        Some(b']') => {
                            self.bump();
                            return;
                        }
                        None => return,
                        _ => {
                            let child = format!("{path}[{i}]");
                            self.lines.insert(child.clone(), self.line);
                            self.value(child);
                            i += 1;
                        }
                    }
                }
            }
            Some(b'"') => {
                self.string();
            }
            Some(_) => {
                while !matches!(self.peek(), None | Some(b',' | b'}' | b']' | b' ' | b'\t' | b'\n' | b'\r')) {
                    self.bump();
                }
            }
            None => {}
        }
    }
}
