//! Output artifacts: per-sample line records, mean(std) tables and a static
//! per-token heatmap page. Every emitter is deterministic and embeds the
//! backend fingerprint.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::fp::FpSummary;
use crate::types::{SampleScore, ScorerInfo};

/// Rounds to nine significant digits when serialized.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(transparent)]
pub struct Sig9(pub f64);

impl Serialize for Sig9 {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rounded: f64 = format!("{:.8e}", self.0).parse().unwrap_or(self.0);
        s.serialize_f64(rounded)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordBackend {
    pub name: String,
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub surface: String,
    pub fp: Sig9,
    pub rank: u32,
    pub entropy_nats: Sig9,
}

/// One line of a `.jsonl` score file; field order is fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    pub k: usize,
    pub fp_s: Sig9,
    pub backend: RecordBackend,
    pub tokens: Vec<TokenRecord>,
}

impl From<&SampleScore> for SampleRecord {
    fn from(s: &SampleScore) -> Self {
        Self {
            sample_id: s.sample_id.clone(),
            k: s.k,
            fp_s: Sig9(s.fp_s),
            backend: RecordBackend {
                name: s.backend.backend_name.clone(),
                fingerprint: s.backend.model_fingerprint.clone(),
            },
            tokens: s
                .token_scores
                .iter()
                .enumerate()
                .map(|(i, t)| TokenRecord {
                    surface: s.tokens.get(i).cloned().unwrap_or_default(),
                    fp: Sig9(t.fp),
                    rank: t.rank,
                    entropy_nats: Sig9(t.entropy_nats),
                })
                .collect(),
        }
    }
}

pub fn write_jsonl<W: Write>(samples: &[SampleScore], mut out: W) -> std::io::Result<()> {
    for s in samples {
        let line = serde_json::to_string(&SampleRecord::from(s)).map_err(std::io::Error::other)?;
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn emit_jsonl(samples: &[SampleScore], path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_jsonl(samples, std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn read_jsonl(path: &Path) -> Result<Vec<SampleRecord>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SampleRecord = serde_json::from_str(&line)
            .map_err(|e| Error::CorruptFile(format!("{}:{}: {e}", path.display(), n + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

/// One (generator, discriminator) cell of the mean(std) table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpCell {
    pub generator: String,
    pub discriminator: String,
    pub backend: ScorerInfo,
    pub generated: FpSummary,
    pub gold: FpSummary,
}

/// CSV with one row per generator and an `(Fp_gen, Fp_gold)` column pair per
/// discriminator. Rows and column pairs are sorted by label; a leading
/// comment line names each discriminator's backend fingerprint.
pub fn render_fp_table(grid: &[FpCell]) -> Result<String> {
    if grid.is_empty() {
        return Err(Error::EmptyInput("fp table needs at least one cell"));
    }
    let generators: BTreeSet<&str> = grid.iter().map(|c| c.generator.as_str()).collect();
    let discriminators: BTreeSet<&str> = grid.iter().map(|c| c.discriminator.as_str()).collect();
    let mut out = String::new();
    for d in &discriminators {
        let cell = grid.iter().find(|c| c.discriminator == *d).expect("label from grid");
        writeln!(
            out,
            "# {d}: {} fingerprint {}",
            cell.backend.backend_name, cell.backend.model_fingerprint
        )
        .unwrap();
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Config(format!("csv: {e}"));
    let mut header = vec!["generator".to_owned()];
    for d in &discriminators {
        header.push(format!("{d} Fp_gen"));
        header.push(format!("{d} Fp_gold"));
    }
    w.write_record(&header).map_err(csv_err)?;
    for g in &generators {
        let mut row = vec![g.to_string()];
        for d in &discriminators {
            match grid.iter().find(|c| c.generator == *g && c.discriminator == *d) {
                Some(c) => {
                    row.push(c.generated.to_string());
                    row.push(c.gold.to_string());
                }
                None => row.extend([String::new(), String::new()]),
            }
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv: {e}")))?;
    out.push_str(std::str::from_utf8(&bytes).expect("utf-8"));
    Ok(out)
}

pub fn emit_fp_table(grid: &[FpCell], path: &Path) -> Result<()> {
    let text = render_fp_table(grid)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Heatmap colour bucket: quartiles of the fraction range, left-closed.
pub fn fp_bucket(fp: f64) -> (&'static str, &'static str) {
    if fp < 0.25 {
        ("green", "#8fd18f")
    } else if fp < 0.5 {
        ("yellow", "#f4e36b")
    } else if fp < 0.75 {
        ("orange", "#f6b35e")
    } else {
        ("red", "#ec7a6f")
    }
}

fn escape_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

pub fn render_heatmap(sample: &SampleRecord) -> String {
    let mut html = String::new();
    let title = escape_html(&sample.sample_id);
    writeln!(
        html,
        "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">"
    )
    .unwrap();
    writeln!(html, "<title>Fp heatmap: {title}</title>").unwrap();
    html.push_str("<style>\nbody{font-family:sans-serif;max-width:60em;margin:2em auto;line-height:2}\n");
    for bucket in ["green", "yellow", "orange", "red"] {
        let color = match bucket {
            "green" => fp_bucket(0.0).1,
            "yellow" => fp_bucket(0.25).1,
            "orange" => fp_bucket(0.5).1,
            _ => fp_bucket(1.0).1,
        };
        writeln!(html, ".fp-{bucket}{{background:{color}}}").unwrap();
    }
    html.push_str(".tok{padding:0.1em 0.2em;border-radius:3px}\n.swatch{display:inline-block;width:1em;height:1em;margin:0 0.3em}\n</style>\n</head>\n<body>\n");
    writeln!(html, "<h1>{title}</h1>").unwrap();
    writeln!(
        html,
        "<p class=\"backend\">backend: {} &middot; fingerprint {} &middot; k = {} &middot; Fp<sub>s</sub> = {:.4}</p>",
        escape_html(&sample.backend.name),
        escape_html(&sample.backend.fingerprint),
        sample.k,
        sample.fp_s.0
    )
    .unwrap();
    html.push_str("<ul class=\"legend\">\n");
    for (range, fp) in [
        ("[0, 0.25)", 0.0),
        ("[0.25, 0.5)", 0.25),
        ("[0.5, 0.75)", 0.5),
        ("[0.75, 1]", 1.0),
    ] {
        let (name, _) = fp_bucket(fp);
        writeln!(html, "<li><i class=\"swatch fp-{name}\"></i>Fp in {range}</li>").unwrap();
    }
    html.push_str("</ul>\n<p class=\"text\">\n");
    for t in &sample.tokens {
        let (name, _) = fp_bucket(t.fp.0);
        writeln!(
            html,
            "<span class=\"tok fp-{name}\" title=\"fp={:.4} rank={} entropy={:.4} nats\">{}</span>",
            t.fp.0,
            t.rank,
            t.entropy_nats.0,
            escape_html(&t.surface)
        )
        .unwrap();
    }
    html.push_str("</p>\n</body>\n</html>\n");
    html
}

pub fn emit_heatmap(sample: &SampleRecord, path: &Path) -> Result<()> {
    fs::write(path, render_heatmap(sample)).map_err(|e| Error::io(path, e))
}
