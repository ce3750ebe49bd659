//! Plain-text model files.
//!
//! ```text
//! mgsim-ann 1
//! networks 1
//! network dg1 inputs 7 hidden 10
//! w1 <hidden*inputs values, row-major>
//! b1 <hidden values>
//! w2 <hidden values>
//! b2 <value>
//! in_offset <inputs values>
//! in_scale <inputs values>
//! out <offset> <scale>
//! ```
//!
//! Reals use 17 significant digits, so loading a saved file gives back the
//! same bits.

use std::collections::BTreeMap;
use std::path::Path;

use super::mlp::{Affine, Mlp, Normalization};
use super::AnnError;

const MAGIC: &str = "mgsim-ann 1";

/// One trained network per DG (zero-based index).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelBundle {
    pub networks: BTreeMap<usize, Mlp>,
}

fn push_reals(out: &mut String, key: &str, xs: impl IntoIterator<Item = f64>) {
    out.push_str(key);
    for x in xs {
        out.push(' ');
        out.push_str(&format!("{x:.16e}"));
    }
    out.push('\n');
}

struct Lines<'a> {
    it: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn err(&self, msg: impl Into<String>) -> AnnError {
        AnnError::Format { line: self.line, msg: msg.into() }
    }

    /// Next non-blank line, split into words, with its first word checked.
    fn expect(&mut self, key: &str) -> Result<Vec<&'a str>, AnnError> {
        loop {
            let Some((k, l)) = self.it.next() else {
                self.line += 1;
                return Err(self.err(format!("unexpected end of file, expected `{key}`")));
            };
            self.line = k + 1;
            let words: Vec<&str> = l.split_whitespace().collect();
            if words.is_empty() {
                continue;
            }
            if words[0] != key {
                return Err(self.err(format!("expected `{key}`, found `{}`", words[0])));
            }
            return Ok(words[1..].to_vec());
        }
    }

    fn reals(&mut self, key: &str, n: usize) -> Result<Vec<f64>, AnnError> {
        let words = self.expect(key)?;
        if words.len() != n {
            return Err(self.err(format!("`{key}` needs {n} values, found {}", words.len())));
        }
        words
            .iter()
            .map(|w| w.parse::<f64>().map_err(|e| self.err(format!("`{w}`: {e}"))))
            .collect()
    }
}

fn count(lines: &Lines<'_>, w: Option<&&str>) -> Result<usize, AnnError> {
    w.and_then(|s| s.parse::<usize>().ok()).ok_or_else(|| lines.err("expected a non-negative integer"))
}

impl ModelBundle {
    pub fn single(dg: usize, net: Mlp) -> Self {
        Self { networks: BTreeMap::from([(dg, net)]) }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{MAGIC}\nnetworks {}\n", self.networks.len());
        for (dg, m) in &self.networks {
            s.push_str(&format!("network dg{} inputs {} hidden {}\n", dg + 1, m.inputs(), m.hidden()));
            push_reals(&mut s, "w1", m.w1.iter().copied());
            push_reals(&mut s, "b1", m.b1.iter().copied());
            push_reals(&mut s, "w2", m.w2.iter().copied());
            push_reals(&mut s, "b2", [m.b2]);
            push_reals(&mut s, "in_offset", m.norm.input.iter().map(|a| a.offset));
            push_reals(&mut s, "in_scale", m.norm.input.iter().map(|a| a.scale));
            push_reals(&mut s, "out", [m.norm.output.offset, m.norm.output.scale]);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, AnnError> {
        let mut lines = Lines { it: text.lines().enumerate(), line: 0 };
        match lines.it.next() {
            Some((_, l)) if l.trim() == MAGIC => lines.line = 1,
            _ => return Err(AnnError::Format { line: 1, msg: format!("missing `{MAGIC}` header") }),
        }
        let w = lines.expect("networks")?;
        let n = count(&lines, w.first())?;
        let mut networks = BTreeMap::new();
        for _ in 0..n {
            let w = lines.expect("network")?;
            if w.len() != 5 || w[1] != "inputs" || w[3] != "hidden" {
                return Err(lines.err("expected `network dg<k> inputs <n> hidden <m>`"));
            }
            let dg = w[0]
                .strip_prefix("dg")
                .and_then(|k| k.parse::<usize>().ok())
                .and_then(|k| k.checked_sub(1))
                .ok_or_else(|| lines.err(format!("bad DG name `{}`", w[0])))?;
            let (inputs, hidden) = (count(&lines, w.get(2))?, count(&lines, w.get(4))?);
            if inputs == 0 || hidden == 0 {
                return Err(lines.err("layer sizes must be positive"));
            }
            let w1 = lines.reals("w1", inputs * hidden)?;
            let b1 = lines.reals("b1", hidden)?;
            let w2 = lines.reals("w2", hidden)?;
            let b2 = lines.reals("b2", 1)?[0];
            let off = lines.reals("in_offset", inputs)?;
            let scale = lines.reals("in_scale", inputs)?;
            let out = lines.reals("out", 2)?;
            let at = lines.line;
            if scale.iter().chain([&out[1]]).any(|s| *s == 0.0) {
                return Err(AnnError::Format { line: at, msg: "normalization scale must be nonzero".into() });
            }
            let norm = Normalization {
                input: off.into_iter().zip(scale).map(|(offset, scale)| Affine { offset, scale }).collect(),
                output: Affine { offset: out[0], scale: out[1] },
            };
            let net = Mlp::from_parts(inputs, hidden, w1, b1, w2, b2, norm)
                .map_err(|e| AnnError::Format { line: at, msg: e.to_string() })?;
            if networks.insert(dg, net).is_some() {
                return Err(AnnError::Format { line: at, msg: format!("duplicate network for dg{}", dg + 1) });
            }
        }
        Ok(Self { networks })
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_text())
    }

    pub fn load(path: &Path) -> Result<Self, AnnError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AnnError::Format { line: 0, msg: format!("{}: {e}", path.display()) })?;
        Self::from_text(&text)
    }
}
