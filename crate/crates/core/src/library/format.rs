//! Canonical text form of a library snapshot.
//!
//! ```text
//! featproto-library 1
//! scalar f64
//! version 3
//! dim 16
//! classes 4
//! k_proto 40
//! m_wander 5
//! normalization at-encoding
//! config_hash 0123456789abcdef
//! center <class> <x_1> ... <x_D>
//! proto <id> <class> <kind> <slot> <created_epoch> <merges> <residual> <sources> <x_1> ... <x_D>
//! ```
//!
//! Tokens are separated by a single space. `<sources>` is
//! `sample=weight;sample=weight` (or `-` when empty). Reals use 17
//! significant digits so every `f64` round-trips exactly. `center` lines come
//! in class order, `proto` lines in class, kind (typical first) and slot order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{Identity, PrototypeLibrary, Provenance};
use crate::config::NormalizationPolicy;
use crate::error::{Error, Result};
use crate::scalar::{fmt17, parse_real, Scalar};
use crate::types::{PrototypeEntry, PrototypeKind, Source, SourceList};

const MAGIC: &str = "featproto-library 1";

impl<T: Scalar> PrototypeLibrary<T> {
    pub fn to_canonical_text(&self) -> String {
        let mut out = String::new();
        out.push_str(MAGIC);
        out.push('\n');
        let header = [
            ("scalar", T::NAME.to_string()),
            ("version", self.version.to_string()),
            ("dim", self.dim.to_string()),
            ("classes", self.classes().to_string()),
            ("k_proto", self.k_proto().to_string()),
            ("m_wander", self.m_wander().to_string()),
            ("normalization", self.normalization.as_str().to_string()),
            ("config_hash", self.config_hash.clone()),
        ];
        for (k, v) in header {
            out.push_str(&format!("{k} {v}\n"));
        }
        for (c, center) in self.centers.iter().enumerate() {
            out.push_str(&format!("center {c}"));
            for &x in center {
                out.push(' ');
                out.push_str(&fmt17(x));
            }
            out.push('\n');
        }
        for e in self.entries() {
            let prov = self.provenance.get(&e.id).copied().unwrap_or(Provenance {
                created_epoch: 0,
                merges: 0,
            });
            let sources = if e.sources.entries.is_empty() {
                "-".to_string()
            } else {
                e.sources
                    .entries
                    .iter()
                    .map(|s| format!("{}={}", s.sample_id, fmt17(s.weight)))
                    .collect::<Vec<_>>()
                    .join(";")
            };
            out.push_str(&format!(
                "proto {} {} {} {} {} {} {} {}",
                e.id,
                e.class_index,
                e.kind,
                e.slot,
                prov.created_epoch,
                prov.merges,
                fmt17(e.sources.residual),
                sources
            ));
            for &x in &e.vector {
                out.push(' ');
                out.push_str(&fmt17(x));
            }
            out.push('\n');
        }
        out
    }

    /// Parses and validates a canonical library file.
    pub fn from_canonical_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, MAGIC)) => {}
            _ => return Err(Error::parse(1, format!("expected header `{MAGIC}`"))),
        }
        let mut field = |name: &str| -> Result<(usize, String)> {
            let (n, line) = lines.next().ok_or_else(|| Error::parse(0, format!("missing `{name}`")))?;
            match line.split_once(' ') {
                Some((k, v)) if k == name => Ok((n, v.to_string())),
                _ => Err(Error::parse(n, format!("expected `{name} <value>`"))),
            }
        };
        let _scalar = field("scalar")?;
        let version = parse_int(field("version")?)?;
        let dim = parse_int(field("dim")?)? as usize;
        let classes = parse_int(field("classes")?)? as usize;
        let k_proto = parse_int(field("k_proto")?)? as usize;
        let m_wander = parse_int(field("m_wander")?)? as usize;
        let (n, norm) = field("normalization")?;
        let normalization = NormalizationPolicy::parse(&norm)
            .ok_or_else(|| Error::parse(n, format!("unknown normalization `{norm}`")))?;
        let (_, config_hash) = field("config_hash")?;

        let mut centers = Vec::with_capacity(classes);
        let mut typical: Vec<Vec<PrototypeEntry<T>>> = vec![Vec::new(); classes];
        let mut wandering: Vec<Vec<PrototypeEntry<T>>> = vec![Vec::new(); classes];
        let mut provenance = BTreeMap::new();
        for (n, line) in lines {
            if line.is_empty() {
                continue;
            }
            let tokens: Vec<&str> = line.split(' ').collect();
            match tokens[0] {
                "center" => {
                    if tokens.len() != 2 + dim {
                        return Err(Error::parse(n, format!("center needs {dim} coordinates")));
                    }
                    let c: usize = tokens[1].parse().map_err(|_| Error::parse(n, "bad class index"))?;
                    if c != centers.len() || c >= classes {
                        return Err(Error::parse(n, "centers must appear in class order"));
                    }
                    centers.push(parse_vec(&tokens[2..], n)?);
                }
                "proto" => {
                    if tokens.len() != 9 + dim {
                        return Err(Error::parse(n, format!("proto needs 8 fields and {dim} coordinates")));
                    }
                    let id = tokens[1].to_string();
                    let class_index: usize = tokens[2].parse().map_err(|_| Error::parse(n, "bad class index"))?;
                    let kind = PrototypeKind::parse(tokens[3])
                        .ok_or_else(|| Error::parse(n, format!("unknown kind `{}`", tokens[3])))?;
                    let slot: usize = tokens[4].parse().map_err(|_| Error::parse(n, "bad slot"))?;
                    let created_epoch: u64 = tokens[5].parse().map_err(|_| Error::parse(n, "bad epoch"))?;
                    let merges: u64 = tokens[6].parse().map_err(|_| Error::parse(n, "bad merge count"))?;
                    let residual = parse_real(tokens[7]).ok_or_else(|| Error::parse(n, "bad residual"))?;
                    let sources = parse_sources(tokens[8], n)?;
                    let vector = parse_vec(&tokens[9..], n)?;
                    if class_index >= classes {
                        return Err(Error::parse(n, "class index out of range"));
                    }
                    let list = match kind {
                        PrototypeKind::Typical => &mut typical[class_index],
                        PrototypeKind::Wandering => &mut wandering[class_index],
                    };
                    if slot != list.len() {
                        return Err(Error::parse(n, "prototypes must appear in slot order"));
                    }
                    if provenance.insert(id.clone(), Provenance { created_epoch, merges }).is_some() {
                        return Err(Error::parse(n, format!("duplicate id `{id}`")));
                    }
                    list.push(PrototypeEntry {
                        id,
                        class_index,
                        kind,
                        slot,
                        vector,
                        sources: SourceList { entries: sources, residual },
                    });
                }
                other => return Err(Error::parse(n, format!("unknown record `{other}`"))),
            }
        }
        if centers.len() != classes {
            return Err(Error::parse(0, format!("expected {classes} centers, found {}", centers.len())));
        }
        let count_ok = typical.iter().all(|l| l.len() == k_proto) && wandering.iter().all(|l| l.len() == m_wander);
        if !count_ok {
            return Err(Error::parse(0, format!("expected {k_proto} typical and {m_wander} wandering per class")));
        }
        let mut lib = PrototypeLibrary {
            version,
            dim,
            normalization,
            config_hash,
            typical,
            wandering,
            identity: BTreeMap::<String, Identity>::new(),
            provenance,
            centers,
        };
        lib.reindex();
        lib.validate()?;
        Ok(lib)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_canonical_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_canonical_text(&fs::read_to_string(path)?)
    }
}

fn parse_int((line, v): (usize, String)) -> Result<u64> {
    v.parse().map_err(|_| Error::parse(line, format!("expected an integer, found `{v}`")))
}

fn parse_vec<T: Scalar>(tokens: &[&str], line: usize) -> Result<Vec<T>> {
    tokens
        .iter()
        .map(|t| parse_real(t).ok_or_else(|| Error::parse(line, format!("bad real `{t}`"))))
        .collect()
}

fn parse_sources<T: Scalar>(token: &str, line: usize) -> Result<Vec<Source<T>>> {
    if token == "-" {
        return Ok(Vec::new());
    }
    token
        .split(';')
        .map(|pair| {
            let (id, w) = pair
                .rsplit_once('=')
                .ok_or_else(|| Error::parse(line, format!("bad source `{pair}`")))?;
            let weight = parse_real(w).ok_or_else(|| Error::parse(line, format!("bad weight `{w}`")))?;
            Ok(Source {
                sample_id: id.to_string(),
                weight,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::library::ema_update;
    use crate::library::fixtures::{clustered_sets, random_library};

    #[test]
    fn round_trip_is_lossless() {
        let (lib, mut cfg) = random_library(3, 5, 2, 4, 21);
        cfg.top_f_sources = 2;
        let (mut cur, _) = ema_update(&lib, &clustered_sets(3, 9, 4, 1, "a"), &cfg, 1).unwrap();
        for e in 2..4 {
            cur = ema_update(&cur, &clustered_sets(3, 9, 4, e, &format!("e{e}")), &cfg, e).unwrap().0;
        }
        assert!(cur.entries().any(|p| p.sources.residual > 0.0));
        let text = cur.to_canonical_text();
        let back = PrototypeLibrary::<f64>::from_canonical_text(&text).unwrap();
        assert_eq!(back, cur);
        assert_eq!(back.to_canonical_text(), text);
    }

    #[test]
    fn file_round_trip() {
        let (lib, _) = random_library(2, 3, 1, 3, 4);
        let dir = std::env::temp_dir().join(format!("featproto-lib-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("library.txt");
        lib.save(&path).unwrap();
        assert_eq!(PrototypeLibrary::<f64>::load(&path).unwrap(), lib);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn errors_carry_line_numbers() {
        let (lib, _) = random_library(2, 3, 1, 3, 4);
        let text = lib.to_canonical_text();
        assert!(matches!(
            PrototypeLibrary::<f64>::from_canonical_text("nope\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
        lines[11] = lines[11].replace("typical", "sideways");
        let broken = lines.join("\n");
        match PrototypeLibrary::<f64>::from_canonical_text(&broken) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 12),
            other => panic!("unexpected {other:?}"),
        }
        let truncated: String = text.lines().take(text.lines().count() - 1).map(|l| format!("{l}\n")).collect();
        assert!(PrototypeLibrary::<f64>::from_canonical_text(&truncated).is_err());
    }
}
