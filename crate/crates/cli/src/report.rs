//! Report envelope and JSON input formats.
//!
//! Every subcommand emits one envelope: a `schema_version`, the command
//! name, a `pass`/`fail` verdict, and a command-specific body. Byte output
//! is deterministic for fixed input; stage timings are attached only when
//! `--timings` is passed so that default output stays stable.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use laxkit::{Context, MatrixRep, PolyMatrix, ScalarPoly, StructureConstants};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Serialize)]
pub struct Envelope<T: Serialize> {
    pub schema_version: u32,
    pub command: String,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings_ms: Option<BTreeMap<String, u128>>,
    pub report: T,
}

impl<T: Serialize> Envelope<T> {
    pub fn new(command: &str, pass: bool, report: T) -> Envelope<T> {
        Envelope {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            verdict: if pass { Verdict::Pass } else { Verdict::Fail },
            timings_ms: None,
            report,
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports are serializable");
        s.push('\n');
        s
    }
}

/// Matrix entries as row-major nested string arrays.
pub fn matrix_rows(m: &PolyMatrix) -> Vec<Vec<String>> {
    (0..m.rows())
        .map(|r| (0..m.cols()).map(|c| m.at(r, c).to_string()).collect())
        .collect()
}

/// On-disk representation file: named matrices with polynomial entries.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepFile {
    pub schema_version: u32,
    pub dim: usize,
    #[serde(default)]
    pub parameters: Vec<String>,
    /// Generator name to row-major entry grid.
    pub matrices: BTreeMap<String, Vec<Vec<String>>>,
}

impl RepFile {
    pub fn load(path: &Path) -> anyhow::Result<RepFile> {
        let text = fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read `{}`: {e}", path.display()))?;
        let file: RepFile = serde_json::from_str(&text)
            .map_err(|e| anyhow::anyhow!("invalid representation file `{}`: {e}", path.display()))?;
        if file.schema_version != SCHEMA_VERSION {
            anyhow::bail!(
                "representation file `{}` has schema_version {}, expected {}",
                path.display(),
                file.schema_version,
                SCHEMA_VERSION
            );
        }
        for (name, rows) in &file.matrices {
            if rows.len() != file.dim || rows.iter().any(|r| r.len() != file.dim) {
                anyhow::bail!("matrix `{name}` is not {0} x {0}", file.dim);
            }
        }
        Ok(file)
    }

    /// Builds the representation over `base` extended by the file parameters.
    pub fn to_rep(&self, base: &Context) -> anyhow::Result<MatrixRep> {
        let missing: Vec<&str> = self
            .parameters
            .iter()
            .filter(|p| base.id(p).is_none())
            .map(|p| p.as_str())
            .collect();
        let ctx = base.with_parameters(&missing)?;
        let entries: Vec<(String, Vec<Vec<String>>)> =
            self.matrices.iter().map(|(n, rows)| (n.clone(), rows.clone())).collect();
        Ok(MatrixRep::from_entries(&ctx, &entries)?)
    }
}

/// On-disk bracket table: `[left, right] = sum coeff * name`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableFile {
    pub schema_version: u32,
    pub names: Vec<String>,
    #[serde(default)]
    pub parameters: Vec<String>,
    pub brackets: Vec<TableBracket>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableBracket {
    pub left: String,
    pub right: String,
    /// Basis name to polynomial coefficient.
    pub result: BTreeMap<String, String>,
}

impl TableFile {
    pub fn load(path: &Path) -> anyhow::Result<TableFile> {
        let text = fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read `{}`: {e}", path.display()))?;
        let file: TableFile = serde_json::from_str(&text)
            .map_err(|e| anyhow::anyhow!("invalid table file `{}`: {e}", path.display()))?;
        if file.schema_version != SCHEMA_VERSION {
            anyhow::bail!(
                "table file `{}` has schema_version {}, expected {}",
                path.display(),
                file.schema_version,
                SCHEMA_VERSION
            );
        }
        Ok(file)
    }

    pub fn to_constants(&self) -> anyhow::Result<StructureConstants> {
        let mut builder = Context::builder();
        for p in &self.parameters {
            builder = builder.parameter(p)?;
        }
        let ctx = builder.build();
        let index = |name: &str| -> anyhow::Result<usize> {
            self.names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| anyhow::anyhow!("bracket references unknown name `{name}`"))
        };
        let mut entries = Vec::new();
        for b in &self.brackets {
            let i = index(&b.left)?;
            let k = index(&b.right)?;
            for (target, coeff) in &b.result {
                let j = index(target)?;
                entries.push((i, k, j, ScalarPoly::parse(&ctx, coeff)?));
            }
        }
        Ok(StructureConstants::new(&ctx, self.names.clone(), entries)?)
    }
}

/// Renders a bracket table as `[a,b] = combination` lines, skipping zero
/// rows, in basis order.
pub fn table_lines(sc: &StructureConstants) -> Vec<String> {
    let names = sc.names();
    let mut out = Vec::new();
    for i in 0..names.len() {
        for k in (i + 1)..names.len() {
            let mut parts: Vec<String> = Vec::new();
            for (j, name) in names.iter().enumerate() {
                let c = sc.entry(j, i, k);
                if c.is_zero() {
                    continue;
                }
                let c = c.to_string();
                if c == "1" {
                    parts.push(name.clone());
                } else {
                    parts.push(format!("{c}*{name}"));
                }
            }
            if parts.is_empty() {
                continue;
            }
            out.push(format!("[{},{}] = {}", names[i], names[k], parts.join(" + ")));
        }
    }
    out
}
