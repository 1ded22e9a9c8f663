//! Pattern file: one 16-character row-major bit string per line, in table
//! order.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use fst24_core::sparsity::{enumerate_patterns, Pattern, PatternTable, PATTERN_COUNT};

pub fn render_patterns(table: &PatternTable) -> String {
    let mut out = String::with_capacity(table.len() * 17);
    for p in table.patterns() {
        out.push_str(&p.to_bit_string());
        out.push('\n');
    }
    out
}

pub fn write_patterns(path: &Path) -> Result<()> {
    fs::write(path, render_patterns(&enumerate_patterns()))
        .with_context(|| format!("cannot write pattern file {}", path.display()))
}

/// Parses a pattern file, requiring every line to be a transposable
/// pattern.
pub fn parse_patterns(text: &str) -> Result<PatternTable> {
    let mut patterns = Vec::with_capacity(PATTERN_COUNT);
    for (n, line) in text.lines().enumerate() {
        let Some(p) = Pattern::parse_bit_string(line) else {
            bail!("line {}: expected 16 binary digits, found {line:?}", n + 1);
        };
        if !p.is_transposable() {
            bail!("line {}: {line} is not transposable", n + 1);
        }
        patterns.push(p);
    }
    Ok(PatternTable::new(patterns))
}

pub fn read_patterns(path: &Path) -> Result<PatternTable> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read pattern file {}", path.display()))?;
    parse_patterns(&text).with_context(|| format!("bad pattern file {}", path.display()))
}
