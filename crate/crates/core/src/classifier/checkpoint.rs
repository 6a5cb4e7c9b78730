//! Text checkpoint format. Values are stored as the hex of their IEEE-754 bit
//! patterns so a round trip is bit-exact.
//!
//! ```text
//! rst-checkpoint v1
//! dim 8
//! hidden 0
//! classes 2
//! seed 42
//! tensor w2 2 8
//! 3fb999999999999a bfc3333333333333 ...
//! tensor b2 1 2
//! ...
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::ClassifierState;
use crate::error::{Error, Result};

const MAGIC: &str = "rst-checkpoint v1";

impl ClassifierState {
    /// Tensor names with their `(rows, cols)` shapes, in storage order.
    fn tensors(&self) -> Vec<(&'static str, usize, usize)> {
        let mut out = Vec::with_capacity(4);
        if self.hidden > 0 {
            out.push(("w1", self.hidden, self.dim));
            out.push(("b1", 1, self.hidden));
        }
        out.push(("w2", self.classes, self.fan_in()));
        out.push(("b2", 1, self.classes));
        out
    }

    pub fn to_checkpoint(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC}");
        let _ = writeln!(out, "dim {}", self.dim);
        let _ = writeln!(out, "hidden {}", self.hidden);
        let _ = writeln!(out, "classes {}", self.classes);
        let _ = writeln!(out, "seed {}", self.seed);
        let mut offset = 0;
        for (name, rows, cols) in self.tensors() {
            let _ = writeln!(out, "tensor {name} {rows} {cols}");
            let values = &self.params[offset..offset + rows * cols];
            for row in values.chunks(cols) {
                let line: Vec<String> = row.iter().map(|v| format!("{:016x}", v.to_bits())).collect();
                let _ = writeln!(out, "{}", line.join(" "));
            }
            offset += rows * cols;
        }
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let bad = |line: usize, msg: &str| Error::Validation(format!("checkpoint line {line}: {msg}"));

        match lines.next() {
            Some((_, MAGIC)) => {}
            Some((n, other)) => return Err(bad(n, &format!("unsupported header {other:?}"))),
            None => return Err(bad(0, "empty checkpoint")),
        }
        let mut header = |key: &str| -> Result<u64> {
            let (n, line) = lines.next().ok_or_else(|| bad(0, "truncated header"))?;
            let value = line
                .strip_prefix(key)
                .and_then(|rest| rest.strip_prefix(' '))
                .ok_or_else(|| bad(n, &format!("expected `{key}`")))?;
            value.parse().map_err(|_| bad(n, &format!("invalid {key}")))
        };
        let dim = header("dim")? as usize;
        let hidden = header("hidden")? as usize;
        let classes = header("classes")? as usize;
        let seed = header("seed")?;
        let mut state = ClassifierState::zeros(dim, classes, hidden, seed)?;

        let mut offset = 0;
        for (name, rows, cols) in state.tensors() {
            let (n, line) = lines.next().ok_or_else(|| bad(0, "missing tensor"))?;
            let expected = format!("tensor {name} {rows} {cols}");
            if line != expected {
                return Err(bad(n, &format!("expected `{expected}`")));
            }
            for r in 0..rows {
                let (n, line) = lines.next().ok_or_else(|| bad(0, "truncated tensor"))?;
                let values: Vec<&str> = line.split_whitespace().collect();
                if values.len() != cols {
                    return Err(bad(n, &format!("expected {cols} values")));
                }
                for (c, v) in values.iter().enumerate() {
                    let bits = u64::from_str_radix(v, 16).map_err(|_| bad(n, "invalid hex value"))?;
                    state.params[offset + r * cols + c] = f64::from_bits(bits);
                }
            }
            offset += rows * cols;
        }
        if let Some((n, _)) = lines.find(|(_, l)| !l.is_empty()) {
            return Err(bad(n, "trailing content"));
        }
        Ok(state)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint(&text)
    }
}
