//! Report emitters: CSV (with a parser for round trips), JSON, markdown
//! tables, and a self-contained SVG accuracy-vs-SNR chart.

use std::path::Path;

use crate::data::{Condition, NoiseType, SNR_GRID};

use super::aggregate::{aggregate, EvalResult, SuiteRecord};
use super::EvalError;

const CSV_HEADER: &str = "method,noise_type,snr_db,accuracy,n_items";

/// One row per suite record. Accuracies use the shortest exact decimal form,
/// so `parse_csv(render_csv(r))` reproduces the floats bit-for-bit.
pub fn render_csv(results: &[EvalResult]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for result in results {
        for rec in &result.records {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                result.method,
                rec.condition.type_label(),
                rec.condition.snr_label(),
                rec.accuracy,
                rec.n_items
            ));
        }
    }
    out
}

pub fn write_csv(path: impl AsRef<Path>, results: &[EvalResult]) -> Result<(), EvalError> {
    Ok(std::fs::write(path, render_csv(results))?)
}

/// Rebuilds full `EvalResult`s (aggregates included) from the CSV rows,
/// grouping by method in order of first appearance.
pub fn parse_csv(text: &str) -> Result<Vec<EvalResult>, EvalError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        other => {
            return Err(EvalError::BadInput(format!(
                "expected header '{CSV_HEADER}', got {other:?}"
            )))
        }
    }
    let mut order: Vec<String> = Vec::new();
    let mut grouped: std::collections::BTreeMap<String, Vec<SuiteRecord>> = Default::default();
    for (idx, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(EvalError::BadInput(format!(
                "row {}: expected 5 fields, got {}",
                idx + 2,
                fields.len()
            )));
        }
        let bad = |what: &str| EvalError::BadInput(format!("row {}: bad {what}", idx + 2));
        let condition = match (fields[1], fields[2]) {
            ("clean", "clean") => Condition::Clean,
            ("clean", _) | (_, "clean") => {
                return Err(bad("clean sentinel (must appear in both columns)"))
            }
            (type_label, snr_label) => Condition::Noisy {
                noise_type: type_label
                    .parse::<NoiseType>()
                    .map_err(|_| bad("noise type"))?,
                snr_db: snr_label.parse::<i32>().map_err(|_| bad("snr"))?,
            },
        };
        let accuracy: f64 = fields[3].parse().map_err(|_| bad("accuracy"))?;
        let n_items: usize = fields[4].parse().map_err(|_| bad("n_items"))?;
        let method = fields[0].to_string();
        if !grouped.contains_key(&method) {
            order.push(method.clone());
        }
        grouped
            .entry(method)
            .or_default()
            .push(SuiteRecord { condition, accuracy, n_items });
    }
    order
        .iter()
        .map(|m| aggregate(m, &grouped[m]))
        .collect()
}

pub fn write_json(path: impl AsRef<Path>, results: &[EvalResult]) -> Result<(), EvalError> {
    let mut text = serde_json::to_string_pretty(results)?;
    text.push('\n');
    Ok(std::fs::write(path, text)?)
}

fn fmt_cell(value: Option<f64>, is_max: bool) -> String {
    match value {
        Some(v) if is_max => format!("**{v:.3}**"),
        Some(v) => format!("{v:.3}"),
        None => "—".to_string(),
    }
}

fn column_max(values: &[Option<f64>]) -> Option<f64> {
    values
        .iter()
        .flatten()
        .copied()
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
}

/// Renders a methods × columns table with the per-column maxima in bold.
fn render_table(out: &mut String, header: &[String], rows: &[(String, Vec<Option<f64>>)]) {
    out.push_str(&format!("| Method | {} |\n", header.join(" | ")));
    out.push_str(&format!("| --- |{}\n", " --- |".repeat(header.len())));
    let maxima: Vec<Option<f64>> = (0..header.len())
        .map(|c| column_max(&rows.iter().map(|(_, vals)| vals[c]).collect::<Vec<_>>()))
        .collect();
    for (method, vals) in rows {
        let cells: Vec<String> = vals
            .iter()
            .zip(&maxima)
            .map(|(&v, &m)| fmt_cell(v, matches!((v, m), (Some(x), Some(y)) if x == y)))
            .collect();
        out.push_str(&format!("| {} | {} |\n", method, cells.join(" | ")));
    }
}

/// Three tables: overall accuracy, then accuracy by SNR over the seen and
/// unseen noise types (7 SNR columns plus clean in each).
pub fn render_markdown(results: &[EvalResult]) -> String {
    let mut out = String::from("# Keyword spotting evaluation\n\n## Overall accuracy\n\n");
    let overall_rows: Vec<(String, Vec<Option<f64>>)> = results
        .iter()
        .map(|r| {
            (
                r.method.clone(),
                vec![r.clean, r.overall_seen, r.overall_unseen],
            )
        })
        .collect();
    render_table(
        &mut out,
        &["Clean".into(), "Seen".into(), "Unseen".into()],
        &overall_rows,
    );

    let snr_header: Vec<String> = SNR_GRID
        .iter()
        .map(|snr| format!("{snr} dB"))
        .chain(std::iter::once("Clean".to_string()))
        .collect();
    for (title, pick) in [
        ("seen", true),
        ("unseen", false),
    ] {
        out.push_str(&format!("\n## Accuracy by SNR — {title} noise\n\n"));
        let rows: Vec<(String, Vec<Option<f64>>)> = results
            .iter()
            .map(|r| {
                let by_snr = if pick { &r.seen_by_snr } else { &r.unseen_by_snr };
                let mut vals: Vec<Option<f64>> =
                    SNR_GRID.iter().map(|snr| by_snr.get(snr).copied()).collect();
                vals.push(r.clean);
                (r.method.clone(), vals)
            })
            .collect();
        render_table(&mut out, &snr_header, &rows);
    }
    out
}

pub fn write_markdown(path: impl AsRef<Path>, results: &[EvalResult]) -> Result<(), EvalError> {
    Ok(std::fs::write(path, render_markdown(results))?)
}

const SVG_PALETTE: [&str; 8] = [
    "#1b6ca8", "#d1495b", "#3a7d44", "#8d6a9f", "#e6a817", "#4a4e69", "#00798c", "#9e2a2b",
];

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Accuracy-vs-SNR line chart over the seen noise types (falling back to the
/// unseen aggregates for methods with no seen cells): one polyline per
/// method, a legend, and axis ticks at the 7 SNR grid levels.
pub fn render_svg(results: &[EvalResult]) -> String {
    let (width, height) = (640.0_f64, 420.0_f64);
    let (left, right, top, bottom) = (60.0, 180.0, 30.0, 50.0);
    let (x0, x1) = (SNR_GRID[0] as f64, SNR_GRID[SNR_GRID.len() - 1] as f64);
    let px = |snr: f64| left + (snr - x0) / (x1 - x0) * (width - left - right);
    let py = |acc: f64| height - bottom - acc * (height - top - bottom);

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {width} {height}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    s.push_str(&format!(
        "  <text x=\"{}\" y=\"18\" text-anchor=\"middle\">Accuracy vs SNR</text>\n",
        left + (width - left - right) / 2.0
    ));
    // axes
    s.push_str(&format!(
        "  <line x1=\"{left}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"#333\"/>\n",
        height - bottom,
        width - right
    ));
    s.push_str(&format!(
        "  <line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{}\" stroke=\"#333\"/>\n",
        height - bottom
    ));
    for snr in SNR_GRID {
        let x = px(snr as f64);
        s.push_str(&format!(
            "  <line x1=\"{x:.1}\" y1=\"{0}\" x2=\"{x:.1}\" y2=\"{1}\" stroke=\"#333\"/>\n",
            height - bottom,
            height - bottom + 5.0
        ));
        s.push_str(&format!(
            "  <text x=\"{x:.1}\" y=\"{}\" text-anchor=\"middle\">{snr}</text>\n",
            height - bottom + 20.0
        ));
    }
    s.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">SNR (dB)</text>\n",
        left + (width - left - right) / 2.0,
        height - 12.0
    ));
    for i in 0..=5 {
        let acc = i as f64 / 5.0;
        let y = py(acc);
        s.push_str(&format!(
            "  <line x1=\"{0}\" y1=\"{y:.1}\" x2=\"{1}\" y2=\"{y:.1}\" stroke=\"#333\"/>\n",
            left - 5.0,
            left
        ));
        s.push_str(&format!(
            "  <text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{acc:.1}</text>\n",
            left - 9.0,
            y + 4.0
        ));
    }
    s.push_str(&format!(
        "  <text x=\"16\" y=\"{:.1}\" transform=\"rotate(-90 16 {:.1})\" \
         text-anchor=\"middle\">Accuracy</text>\n",
        (top + height - bottom) / 2.0,
        (top + height - bottom) / 2.0
    ));
    // one polyline per method
    for (i, result) in results.iter().enumerate() {
        let color = SVG_PALETTE[i % SVG_PALETTE.len()];
        let by_snr = if result.seen_by_snr.is_empty() {
            &result.unseen_by_snr
        } else {
            &result.seen_by_snr
        };
        let points: Vec<String> = SNR_GRID
            .iter()
            .filter_map(|snr| by_snr.get(snr).map(|&acc| (snr, acc)))
            .map(|(&snr, acc)| format!("{:.1},{:.1}", px(snr as f64), py(acc)))
            .collect();
        s.push_str(&format!(
            "  <polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            points.join(" ")
        ));
        // legend entry
        let ly = top + 14.0 + i as f64 * 18.0;
        let lx = width - right + 16.0;
        s.push_str(&format!(
            "  <line x1=\"{lx}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" \
             stroke=\"{color}\" stroke-width=\"2\"/>\n",
            lx + 22.0
        ));
        s.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\">{}</text>\n",
            lx + 28.0,
            ly + 4.0,
            xml_escape(&result.method)
        ));
    }
    s.push_str("</svg>\n");
    s
}

pub fn write_svg(path: impl AsRef<Path>, results: &[EvalResult]) -> Result<(), EvalError> {
    Ok(std::fs::write(path, render_svg(results))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ALL_NOISE_TYPES, SEEN_TYPES};

    fn sample_results() -> Vec<EvalResult> {
        let mut out = Vec::new();
        for (m, base) in [("baseline-clean", 0.30), ("d2v-denoising", 0.45)] {
            let mut records = vec![SuiteRecord {
                condition: Condition::Clean,
                accuracy: base + 0.5,
                n_items: 400,
            }];
            for (ti, t) in ALL_NOISE_TYPES.into_iter().enumerate() {
                for (si, snr) in SNR_GRID.into_iter().enumerate() {
                    records.push(SuiteRecord {
                        condition: Condition::Noisy { noise_type: t, snr_db: snr },
                        accuracy: base + 0.01 * ti as f64 + 0.03 * si as f64,
                        n_items: 400,
                    });
                }
            }
            out.push(aggregate(m, &records).unwrap());
        }
        out
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let results = sample_results();
        let text = render_csv(&results);
        let parsed = parse_csv(&text).unwrap();
        assert_eq!(parsed, results);
        // clean sentinel occupies both columns
        assert!(text.contains("baseline-clean,clean,clean,0.8,400"));
    }

    #[test]
    fn csv_rejects_malformed_rows() {
        assert!(parse_csv("nonsense\n").is_err());
        let bad_field = format!("{CSV_HEADER}\nm,BUS,zero,0.5,10\n");
        assert!(parse_csv(&bad_field).is_err());
        let half_clean = format!("{CSV_HEADER}\nm,clean,0,0.5,10\n");
        assert!(parse_csv(&half_clean).is_err());
        let short = format!("{CSV_HEADER}\nm,BUS,0,0.5\n");
        assert!(parse_csv(&short).is_err());
    }

    #[test]
    fn json_mirrors_results() {
        let results = sample_results();
        let text = serde_json::to_string(&results).unwrap();
        let parsed: Vec<EvalResult> = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed, results);
    }

    #[test]
    fn markdown_has_eight_snr_columns_and_max_markers() {
        let results = sample_results();
        let md = render_markdown(&results);
        let by_snr_header = md
            .lines()
            .find(|l| l.contains("-10 dB"))
            .expect("snr table header");
        // method column + 7 SNR columns + clean column
        assert_eq!(by_snr_header.matches('|').count(), 10);
        assert!(by_snr_header.contains("20 dB") && by_snr_header.ends_with("Clean |"));
        // d2v-denoising dominates every column, so its rows carry the markers
        for line in md.lines().filter(|l| l.starts_with("| d2v-denoising")) {
            assert!(line.contains("**"), "expected max markers in: {line}");
        }
        for line in md.lines().filter(|l| l.starts_with("| baseline-clean")) {
            assert!(!line.contains("**"), "unexpected marker in: {line}");
        }
        assert!(md.contains("## Overall accuracy"));
    }

    #[test]
    fn markdown_marks_ties_in_every_tied_row() {
        let recs = |acc: f64| {
            let mut v = vec![SuiteRecord {
                condition: Condition::Clean,
                accuracy: acc,
                n_items: 10,
            }];
            v.push(SuiteRecord {
                condition: Condition::Noisy { noise_type: SEEN_TYPES[0], snr_db: 0 },
                accuracy: acc,
                n_items: 10,
            });
            v
        };
        let results = vec![
            aggregate("a", &recs(0.5)).unwrap(),
            aggregate("b", &recs(0.5)).unwrap(),
        ];
        let md = render_markdown(&results);
        for line in md.lines().filter(|l| l.starts_with("| a") || l.starts_with("| b")) {
            assert!(line.contains("**0.500**"), "missing tie marker in: {line}");
        }
    }

    /// Minimal well-formedness check: tags balance and nest properly, no raw
    /// '<' in text content, attributes quoted by the emitter's construction.
    fn assert_well_formed_xml(text: &str) {
        let mut stack: Vec<String> = Vec::new();
        let mut rest = text;
        while let Some(start) = rest.find('<') {
            let before = &rest[..start];
            assert!(!before.contains('>'), "stray '>' in text: {before:?}");
            let end = rest[start..].find('>').expect("unclosed tag") + start;
            let tag = &rest[start + 1..end];
            rest = &rest[end + 1..];
            if tag.starts_with('?') || tag.starts_with('!') {
                continue;
            }
            if let Some(name) = tag.strip_prefix('/') {
                let open = stack.pop().unwrap_or_else(|| panic!("extra close: {name}"));
                assert_eq!(open, name.trim(), "mismatched close tag");
            } else if !tag.ends_with('/') {
                let name = tag.split_whitespace().next().unwrap().to_string();
                stack.push(name);
            }
        }
        assert!(!rest.contains('>'), "trailing '>'");
        assert!(stack.is_empty(), "unclosed tags: {stack:?}");
    }

    #[test]
    fn svg_one_polyline_per_method_and_well_formed() {
        let results = sample_results();
        let svg = render_svg(&results);
        assert_well_formed_xml(&svg);
        assert_eq!(svg.matches("<polyline").count(), results.len());
        for r in &results {
            assert!(svg.contains(&r.method), "legend missing {}", r.method);
        }
        // ticks at all 7 grid levels
        for snr in SNR_GRID {
            assert!(svg.contains(&format!(">{snr}</text>")), "missing tick {snr}");
        }
        assert!(svg.starts_with("<svg"));
    }

    #[test]
    fn svg_escapes_method_names() {
        let records = vec![SuiteRecord {
            condition: Condition::Noisy { noise_type: SEEN_TYPES[0], snr_db: 0 },
            accuracy: 0.5,
            n_items: 10,
        }];
        let results = vec![aggregate("a<b&c", &records).unwrap()];
        let svg = render_svg(&results);
        assert_well_formed_xml(&svg);
        assert!(svg.contains("a&lt;b&amp;c"));
    }
}
