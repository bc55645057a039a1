//! Prototype coordinate table: the canonical library text with header
//! records behind `# ` and one tab-separated row per prototype.

use anyhow::{bail, Result};
use featproto::Library64;

pub fn to_table(lib: &Library64) -> String {
    let mut out = String::new();
    let mut header_done = false;
    for line in lib.to_canonical_text().lines() {
        match line.strip_prefix("proto ") {
            Some(rest) => {
                if !header_done {
                    let mut cols: Vec<String> = [
                        "id", "class", "kind", "slot", "created_epoch", "merges", "residual", "sources",
                    ]
                    .iter()
                    .map(|s| s.to_string())
                    .collect();
                    cols.extend((1..=lib.dim()).map(|d| format!("x{d}")));
                    out.push_str(&cols.join("\t"));
                    out.push('\n');
                    header_done = true;
                }
                out.push_str(&rest.replace(' ', "\t"));
            }
            None => {
                out.push_str("# ");
                out.push_str(line);
            }
        }
        out.push('\n');
    }
    out
}

pub fn from_table(text: &str) -> Result<Library64> {
    let mut canonical = String::new();
    let mut saw_columns = false;
    for (n, line) in text.lines().enumerate() {
        if let Some(rest) = line.strip_prefix("# ") {
            canonical.push_str(rest);
        } else if !saw_columns && line.starts_with("id\t") {
            saw_columns = true;
            continue;
        } else if line.is_empty() {
            continue;
        } else if saw_columns {
            canonical.push_str("proto ");
            canonical.push_str(&line.replace('\t', " "));
        } else {
            bail!("line {}: row before the column header", n + 1);
        }
        canonical.push('\n');
    }
    Ok(Library64::from_canonical_text(&canonical)?)
}
