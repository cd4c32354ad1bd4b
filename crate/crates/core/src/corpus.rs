//! Paper corpus ingest: JSON-lines and XML-directory parsing, record
//! validation, section segmentation and cohort statistics.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use quick_xml::events::{BytesRef, Event};
use quick_xml::Reader;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_YEAR_RANGE: RangeInclusive<i32> = 2012..=2020;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus at {path}: {source}")]
    Unreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed corpus container {path}: {message}")]
    MalformedContainer { path: PathBuf, message: String },
    #[error(transparent)]
    Segment(#[from] SegmentError),
}

/// Unbalanced or otherwise broken section markup.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("malformed section markup at byte {offset}: {message}")]
pub struct SegmentError {
    pub offset: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub heading: String,
    pub text: String,
    pub order: usize,
}

/// One paper of the corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaperRecord {
    pub doi: String,
    pub pub_year: i32,
    pub title: String,
    pub abstract_text: String,
    pub sections: Vec<Section>,
    pub fields: Vec<String>,
}

impl PaperRecord {
    pub fn has_body(&self) -> bool {
        !self.sections.is_empty()
    }

    /// Full text as the concatenation of section texts, blank-line separated.
    pub fn body_text(&self) -> String {
        self.sections
            .iter()
            .map(|s| s.text.as_str())
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

// On-disk line layout. Section order is implied by array position.
#[derive(Serialize, Deserialize)]
struct RecordLine {
    doi: String,
    year: i32,
    #[serde(default)]
    title: String,
    #[serde(default, rename = "abstract")]
    abstract_text: String,
    #[serde(default)]
    sections: Vec<SectionLine>,
    #[serde(default)]
    fields: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct SectionLine {
    #[serde(default)]
    heading: String,
    text: String,
}

impl From<RecordLine> for PaperRecord {
    fn from(line: RecordLine) -> Self {
        PaperRecord {
            doi: line.doi,
            pub_year: line.year,
            title: line.title,
            abstract_text: line.abstract_text,
            sections: line
                .sections
                .into_iter()
                .enumerate()
                .map(|(order, s)| Section {
                    heading: s.heading,
                    text: s.text,
                    order,
                })
                .collect(),
            fields: line.fields,
        }
    }
}

impl From<&PaperRecord> for RecordLine {
    fn from(r: &PaperRecord) -> Self {
        RecordLine {
            doi: r.doi.clone(),
            year: r.pub_year,
            title: r.title.clone(),
            abstract_text: r.abstract_text.clone(),
            sections: r
                .sections
                .iter()
                .map(|s| SectionLine {
                    heading: s.heading.clone(),
                    text: s.text.clone(),
                })
                .collect(),
            fields: r.fields.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusFormat {
    JsonLines,
    XmlDirectory,
}

/// A record that could not be turned into a [`PaperRecord`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordFailure {
    /// 1-based line number (json-lines) or file name (xml-directory).
    pub location: String,
    pub message: String,
}

/// Counts written next to the ingested corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseReport {
    pub parsed: usize,
    pub excluded: usize,
    pub reasons: BTreeMap<String, usize>,
    pub failures: Vec<RecordFailure>,
    /// Records kept for abstract-only experiments but lacking a body.
    #[serde(default)]
    pub abstract_only: Vec<String>,
}

impl ParseReport {
    fn exclude(&mut self, reason: &str) {
        self.excluded += 1;
        *self.reasons.entry(reason.to_string()).or_default() += 1;
    }
}

/// Parses a corpus. Records failing the schema land in the report, never silently dropped.
pub fn parse_corpus(
    path: &Path,
    format: CorpusFormat,
) -> Result<(Vec<PaperRecord>, ParseReport), CorpusError> {
    match format {
        CorpusFormat::JsonLines => parse_jsonl(path),
        CorpusFormat::XmlDirectory => parse_xml_dir(path),
    }
}

fn parse_jsonl(path: &Path) -> Result<(Vec<PaperRecord>, ParseReport), CorpusError> {
    let bytes = fs::read(path).map_err(|source| CorpusError::Unreadable {
        path: path.to_path_buf(),
        source,
    })?;
    let content = String::from_utf8(bytes).map_err(|e| CorpusError::MalformedContainer {
        path: path.to_path_buf(),
        message: format!("invalid UTF-8 at byte {}", e.utf8_error().valid_up_to()),
    })?;

    let parsed: Vec<(usize, Result<PaperRecord, String>)> = content
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(i, line)| (i + 1, parse_record_line(line)))
        .collect();

    let mut report = ParseReport::default();
    let mut records = Vec::with_capacity(parsed.len());
    let mut seen = HashSet::new();
    for (line_no, result) in parsed {
        match result {
            Ok(r) if !seen.insert(r.doi.clone()) => {
                report.exclude("duplicate-doi");
                report.failures.push(RecordFailure {
                    location: format!("line {line_no}"),
                    message: format!("duplicate doi {}", r.doi),
                });
            }
            Ok(r) => {
                report.parsed += 1;
                records.push(r);
            }
            Err(message) => {
                report.exclude("schema");
                report.failures.push(RecordFailure {
                    location: format!("line {line_no}"),
                    message,
                });
            }
        }
    }
    Ok((records, report))
}

fn parse_record_line(line: &str) -> Result<PaperRecord, String> {
    let parsed: RecordLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if parsed.doi.trim().is_empty() {
        return Err("empty doi".into());
    }
    Ok(parsed.into())
}

/// Writes records as JSON lines, LF-terminated.
pub fn write_jsonl<W: Write>(records: &[PaperRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, &RecordLine::from(r))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn parse_xml_dir(dir: &Path) -> Result<(Vec<PaperRecord>, ParseReport), CorpusError> {
    let entries = fs::read_dir(dir).map_err(|source| CorpusError::Unreadable {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "xml"))
        .collect();
    files.sort();

    let parsed: Vec<(String, Result<PaperRecord, String>)> = files
        .par_iter()
        .map(|p| {
            let name = p
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            let result = fs::read_to_string(p)
                .map_err(|e| e.to_string())
                .and_then(|raw| parse_xml_record(&raw));
            (name, result)
        })
        .collect();

    let mut report = ParseReport::default();
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (name, result) in parsed {
        match result {
            Ok(r) if !seen.insert(r.doi.clone()) => {
                report.exclude("duplicate-doi");
                report.failures.push(RecordFailure {
                    location: name,
                    message: format!("duplicate doi {}", r.doi),
                });
            }
            Ok(r) => {
                report.parsed += 1;
                records.push(r);
            }
            Err(message) => {
                report.exclude("schema");
                report.failures.push(RecordFailure {
                    location: name,
                    message,
                });
            }
        }
    }
    Ok((records, report))
}

/// Parses one `<article doi=".." year="..">` file: `title`, `abstract`,
/// `fields/field` and `sec` elements anywhere below the root.
pub fn parse_xml_record(raw: &str) -> Result<PaperRecord, String> {
    let mut reader = Reader::from_str(raw);
    let mut doi = None;
    let mut year = None;
    let mut title = String::new();
    let mut abstract_text = String::new();
    let mut fields = Vec::new();
    let mut stack: Vec<String> = Vec::new();

    loop {
        let event = reader
            .read_event()
            .map_err(|e| format!("xml error at byte {}: {e}", reader.error_position()))?;
        match event {
            Event::Start(e) => {
                let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                if stack.is_empty() {
                    for attr in e.attributes().flatten() {
                        let value = attr
                            .unescape_value()
                            .map_err(|e| e.to_string())?
                            .into_owned();
                        match attr.key.as_ref() {
                            b"doi" => doi = Some(value),
                            b"year" => {
                                year = Some(
                                    value
                                        .trim()
                                        .parse::<i32>()
                                        .map_err(|_| format!("bad year attribute {value:?}"))?,
                                )
                            }
                            _ => {}
                        }
                    }
                }
                stack.push(name);
            }
            Event::End(_) => {
                stack.pop();
            }
            Event::Text(t) => {
                let text = t.decode().map_err(|e| e.to_string())?;
                push_metadata_text(&stack, &text, &mut title, &mut abstract_text, &mut fields);
            }
            Event::CData(t) => {
                let text = String::from_utf8_lossy(&t).into_owned();
                push_metadata_text(&stack, &text, &mut title, &mut abstract_text, &mut fields);
            }
            Event::GeneralRef(r) => {
                let text = resolve_entity(&r).map_err(|m| m.to_string())?;
                push_metadata_text(&stack, &text, &mut title, &mut abstract_text, &mut fields);
            }
            Event::Eof => break,
            _ => {}
        }
    }

    let doi = doi
        .filter(|d| !d.trim().is_empty())
        .ok_or_else(|| "missing doi attribute".to_string())?;
    let pub_year = year.ok_or_else(|| "missing year attribute".to_string())?;
    let sections = segment_sections(raw).map_err(|e| e.to_string())?;
    Ok(PaperRecord {
        doi,
        pub_year,
        title,
        abstract_text,
        sections,
        fields,
    })
}

fn push_metadata_text(
    stack: &[String],
    text: &str,
    title: &mut String,
    abstract_text: &mut String,
    fields: &mut Vec<String>,
) {
    if stack.iter().any(|n| n == "sec") || stack.len() < 2 {
        return;
    }
    match stack[1].as_str() {
        "title" => title.push_str(text),
        "abstract" => abstract_text.push_str(text),
        "fields" if stack.len() == 3 && stack[2] == "field" => {
            let t = text.trim();
            if !t.is_empty() {
                fields.push(t.to_string());
            }
        }
        _ => {}
    }
}

fn resolve_entity(r: &BytesRef<'_>) -> Result<String, &'static str> {
    if let Ok(Some(c)) = r.resolve_char_ref() {
        return Ok(c.to_string());
    }
    let name: &[u8] = r;
    let s = match name {
        b"amp" => "&",
        b"lt" => "<",
        b"gt" => ">",
        b"quot" => "\"",
        b"apos" => "'",
        _ => return Err("unknown entity reference"),
    };
    Ok(s.to_string())
}

/// Splits section-tagged text into one [`Section`] per outermost `<sec>`
/// element, in document order.
///
/// The first `<title>` directly under a section becomes its heading; all
/// other character data below the section (nested subsections included) is
/// concatenated verbatim into its text. Sections without any non-whitespace
/// text are skipped; `order` stays consecutive over the kept ones.
pub fn segment_sections(raw: &str) -> Result<Vec<Section>, SegmentError> {
    let mut reader = Reader::from_str(raw);
    let mut stack: Vec<Vec<u8>> = Vec::new();
    // Depth of the open outermost <sec>, if any.
    let mut sec_depth: Option<usize> = None;
    let mut heading: Option<String> = None;
    let mut in_heading = false;
    let mut heading_buf = String::new();
    let mut text_buf = String::new();
    let mut sections = Vec::new();

    loop {
        let pos = reader.buffer_position();
        let event = reader.read_event().map_err(|e| SegmentError {
            offset: reader.error_position(),
            message: e.to_string(),
        })?;
        match event {
            Event::Start(e) => {
                let name = e.name().as_ref().to_vec();
                if name == b"sec" && sec_depth.is_none() {
                    sec_depth = Some(stack.len());
                    heading = None;
                    heading_buf.clear();
                    text_buf.clear();
                } else if name == b"title"
                    && sec_depth.is_some_and(|d| stack.len() == d + 1)
                    && heading.is_none()
                    && !in_heading
                {
                    in_heading = true;
                }
                stack.push(name);
            }
            Event::End(e) => {
                let name = e.name().as_ref().to_vec();
                match stack.pop() {
                    Some(open) if open == name => {}
                    _ => {
                        return Err(SegmentError {
                            offset: pos,
                            message: format!(
                                "unexpected closing tag </{}>",
                                String::from_utf8_lossy(&name)
                            ),
                        })
                    }
                }
                if in_heading && name == b"title" && sec_depth.is_some_and(|d| stack.len() == d + 1)
                {
                    in_heading = false;
                    heading = Some(std::mem::take(&mut heading_buf));
                } else if name == b"sec" && sec_depth == Some(stack.len()) {
                    sec_depth = None;
                    if !text_buf.trim().is_empty() {
                        sections.push(Section {
                            heading: heading.take().unwrap_or_default(),
                            text: std::mem::take(&mut text_buf),
                            order: sections.len(),
                        });
                    }
                    text_buf.clear();
                }
            }
            Event::Text(t) => {
                if sec_depth.is_some() {
                    let s = t.decode().map_err(|e| SegmentError {
                        offset: pos,
                        message: e.to_string(),
                    })?;
                    push_section_text(in_heading, &s, &mut heading_buf, &mut text_buf);
                }
            }
            Event::CData(t) => {
                if sec_depth.is_some() {
                    let s = String::from_utf8_lossy(&t);
                    push_section_text(in_heading, &s, &mut heading_buf, &mut text_buf);
                }
            }
            Event::GeneralRef(r) => {
                if sec_depth.is_some() {
                    let s = resolve_entity(&r).map_err(|m| SegmentError {
                        offset: pos,
                        message: m.to_string(),
                    })?;
                    push_section_text(in_heading, &s, &mut heading_buf, &mut text_buf);
                }
            }
            Event::Eof => {
                if let Some(open) = stack.last() {
                    return Err(SegmentError {
                        offset: raw.len() as u64,
                        message: format!("unclosed tag <{}>", String::from_utf8_lossy(open)),
                    });
                }
                break;
            }
            _ => {}
        }
    }
    Ok(sections)
}

fn push_section_text(in_heading: bool, s: &str, heading: &mut String, text: &mut String) {
    if in_heading {
        heading.push_str(s);
    } else {
        text.push_str(s);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExclusionReason {
    MissingAbstract,
    MissingBody,
    YearOutOfRange,
}

impl ExclusionReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExclusionReason::MissingAbstract => "missing-abstract",
            ExclusionReason::MissingBody => "missing-body",
            ExclusionReason::YearOutOfRange => "year-out-of-range",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Validation {
    Valid,
    Excluded(ExclusionReason),
}

/// Rules are checked in order: abstract, body, year.
pub fn validate_record(r: &PaperRecord, years: &RangeInclusive<i32>) -> Validation {
    if r.abstract_text.trim().is_empty() {
        Validation::Excluded(ExclusionReason::MissingAbstract)
    } else if r.sections.is_empty() {
        Validation::Excluded(ExclusionReason::MissingBody)
    } else if !years.contains(&r.pub_year) {
        Validation::Excluded(ExclusionReason::YearOutOfRange)
    } else {
        Validation::Valid
    }
}

/// Applies [`validate_record`] to a parsed corpus.
///
/// In strict mode every excluded record is dropped. Otherwise records whose
/// only problem is a missing body are kept for abstract-only experiments and
/// listed in `report.abstract_only`.
pub fn filter_valid(
    records: Vec<PaperRecord>,
    years: &RangeInclusive<i32>,
    strict: bool,
    report: &mut ParseReport,
) -> Vec<PaperRecord> {
    let mut kept = Vec::with_capacity(records.len());
    for r in records {
        match validate_record(&r, years) {
            Validation::Valid => kept.push(r),
            Validation::Excluded(ExclusionReason::MissingBody)
                if !strict && years.contains(&r.pub_year) =>
            {
                log::info!("{}: no body, kept for abstract-only experiments", r.doi);
                report.abstract_only.push(r.doi.clone());
                kept.push(r);
            }
            Validation::Excluded(reason) => {
                log::info!("{}: excluded ({})", r.doi, reason.as_str());
                report.parsed -= 1;
                report.exclude(reason.as_str());
            }
        }
    }
    kept
}

/// Removes sections whose heading matches one of `headings` (case-insensitive)
/// and renumbers the rest.
pub fn strip_sections(record: &mut PaperRecord, headings: &[String]) {
    record.sections.retain(|s| {
        !headings
            .iter()
            .any(|h| h.eq_ignore_ascii_case(s.heading.trim()))
    });
    for (i, s) in record.sections.iter_mut().enumerate() {
        s.order = i;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortStats {
    pub papers_per_year: BTreeMap<i32, usize>,
    pub papers_per_field: BTreeMap<String, usize>,
}

pub fn corpus_stats(records: &[PaperRecord]) -> CohortStats {
    let mut stats = CohortStats::default();
    for r in records {
        *stats.papers_per_year.entry(r.pub_year).or_default() += 1;
        for f in &r.fields {
            *stats.papers_per_field.entry(f.clone()).or_default() += 1;
        }
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(doi: &str, year: i32, abs: &str, n_sections: usize) -> PaperRecord {
        PaperRecord {
            doi: doi.into(),
            pub_year: year,
            title: format!("title {doi}"),
            abstract_text: abs.into(),
            sections: (0..n_sections)
                .map(|i| Section {
                    heading: format!("h{i}"),
                    text: format!("text {i}"),
                    order: i,
                })
                .collect(),
            fields: vec![],
        }
    }

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn empty_file_parses_to_nothing() {
        let f = write_tmp("");
        let (records, report) = parse_corpus(f.path(), CorpusFormat::JsonLines).unwrap();
        assert!(records.is_empty());
        assert_eq!(report, ParseReport::default());
    }

    #[test]
    fn sections_get_consecutive_order() {
        let f = write_tmp(
            r#"{"doi":"10.1/a","year":2015,"title":"t","abstract":"a","sections":[{"heading":"I","text":"x"},{"heading":"M","text":"y"},{"heading":"R","text":"z"}],"fields":[]}"#,
        );
        let (records, _) = parse_corpus(f.path(), CorpusFormat::JsonLines).unwrap();
        assert_eq!(records.len(), 1);
        let orders: Vec<_> = records[0].sections.iter().map(|s| s.order).collect();
        assert_eq!(orders, vec![0, 1, 2]);
    }

    #[test]
    fn missing_doi_is_reported_with_line() {
        let f = write_tmp(concat!(
            r#"{"doi":"10.1/a","year":2015,"abstract":"a","sections":[{"heading":"","text":"x"}]}"#,
            "\n",
            r#"{"doi":"10.1/b","year":2016,"abstract":"b","sections":[{"heading":"","text":"y"}]}"#,
            "\n",
            r#"{"year":2016,"abstract":"c","sections":[]}"#,
            "\n"
        ));
        let (records, report) = parse_corpus(f.path(), CorpusFormat::JsonLines).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(report.parsed, 2);
        assert_eq!(report.excluded, 1);
        assert_eq!(report.failures.len(), 1);
        assert_eq!(report.failures[0].location, "line 3");
        assert!(report.failures[0].message.contains("doi"));
    }

    #[test]
    fn unreadable_path_is_an_error() {
        let err = parse_corpus(Path::new("/nonexistent/corpus.jsonl"), CorpusFormat::JsonLines);
        assert!(matches!(err, Err(CorpusError::Unreadable { .. })));
    }

    #[test]
    fn invalid_utf8_is_a_container_error() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(b"{\"doi\":\"a\"}\n\xff\xfe\n").unwrap();
        let err = parse_corpus(f.path(), CorpusFormat::JsonLines);
        assert!(matches!(err, Err(CorpusError::MalformedContainer { .. })));
    }

    #[test]
    fn single_section() {
        let s = segment_sections("<sec><title>A</title>x</sec>").unwrap();
        assert_eq!(
            s,
            vec![Section {
                heading: "A".into(),
                text: "x".into(),
                order: 0
            }]
        );
    }

    #[test]
    fn two_sections_keep_order_and_headings() {
        let s = segment_sections("<sec><title>Intro</title>a</sec><sec><title>Methods</title>b</sec>")
            .unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].heading.as_str(), s[0].order), ("Intro", 0));
        assert_eq!((s[1].heading.as_str(), s[1].order), ("Methods", 1));
    }

    #[test]
    fn nested_inline_markup_is_flattened() {
        let raw = "<body><sec><title>Results</title>The <italic>TiO<sub>2</sub></italic> film \
                   <sec><title>Sub</title>healed &amp; recovered</sec> in <b>2</b> h.</sec></body>";
        // Hand-stripped fixture.
        let expected = "The TiO2 film Subhealed & recovered in 2 h.";
        let s = segment_sections(raw).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].heading, "Results");
        assert_eq!(s[0].text, expected);
    }

    #[test]
    fn unbalanced_tags_name_offset() {
        let err = segment_sections("<sec><title>A</title>x</para></sec>").unwrap_err();
        assert!(err.offset > 0 && err.offset <= 30, "{err}");
        let err = segment_sections("<sec><title>A</title>x").unwrap_err();
        assert_eq!(err.offset, 22);
    }

    #[test]
    fn validation_rules() {
        let years = DEFAULT_YEAR_RANGE;
        assert_eq!(validate_record(&record("a", 2015, "abs", 2), &years), Validation::Valid);
        assert_eq!(
            validate_record(&record("a", 2015, "", 2), &years),
            Validation::Excluded(ExclusionReason::MissingAbstract)
        );
        assert_eq!(
            validate_record(&record("a", 2015, "abs", 0), &years),
            Validation::Excluded(ExclusionReason::MissingBody)
        );
        assert_eq!(
            validate_record(&record("a", 2011, "abs", 1), &years),
            Validation::Excluded(ExclusionReason::YearOutOfRange)
        );
        // First failing rule wins.
        assert_eq!(
            validate_record(&record("a", 2030, "", 0), &years),
            Validation::Excluded(ExclusionReason::MissingAbstract)
        );
    }

    #[test]
    fn lenient_mode_keeps_abstract_only_records() {
        let recs = vec![record("a", 2015, "x", 1), record("b", 2015, "y", 0), record("c", 2015, "", 1)];
        let mut report = ParseReport {
            parsed: 3,
            ..Default::default()
        };
        let kept = filter_valid(recs.clone(), &DEFAULT_YEAR_RANGE, false, &mut report);
        assert_eq!(kept.len(), 2);
        assert_eq!(report.abstract_only, vec!["b".to_string()]);
        assert_eq!(report.reasons.get("missing-abstract"), Some(&1));

        let mut strict_report = ParseReport {
            parsed: 3,
            ..Default::default()
        };
        let kept = filter_valid(recs, &DEFAULT_YEAR_RANGE, true, &mut strict_report);
        assert_eq!(kept.len(), 1);
        assert_eq!(strict_report.excluded, 2);
        assert_eq!(strict_report.parsed, 1);
    }

    #[test]
    fn stats_hand_count() {
        assert_eq!(corpus_stats(&[]), CohortStats::default());
        let mut recs = vec![record("a", 2014, "x", 1), record("b", 2014, "x", 1), record("c", 2015, "x", 1)];
        recs[0].fields = vec!["chem".into(), "mat".into()];
        recs[2].fields = vec!["chem".into()];
        let stats = corpus_stats(&recs);
        assert_eq!(stats.papers_per_year, BTreeMap::from([(2014, 2), (2015, 1)]));
        assert_eq!(stats.papers_per_field.get("chem"), Some(&2));
        assert_eq!(stats.papers_per_year.values().sum::<usize>(), recs.len());
    }

    #[test]
    fn xml_directory_mode() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("a.xml"),
            r#"<article doi="10.1/a" year="2016"><title>Films</title><abstract>We heal.</abstract>
<fields><field>Materials</field></fields>
<body><sec><title>Intro</title>First.</sec><sec><title>Refs</title>Second.</sec></body></article>"#,
        )
        .unwrap();
        fs::write(dir.path().join("b.xml"), r#"<article year="2016"><abstract>x</abstract></article>"#)
            .unwrap();
        let (records, report) = parse_corpus(dir.path(), CorpusFormat::XmlDirectory).unwrap();
        assert_eq!(records.len(), 1);
        let r = &records[0];
        assert_eq!(r.doi, "10.1/a");
        assert_eq!(r.title, "Films");
        assert_eq!(r.abstract_text, "We heal.");
        assert_eq!(r.fields, vec!["Materials".to_string()]);
        assert_eq!(r.sections.len(), 2);
        assert_eq!(report.failures[0].location, "b.xml");
    }

    #[test]
    fn strip_renumbers() {
        let mut r = record("a", 2015, "x", 3);
        strip_sections(&mut r, &["H1".to_string()]);
        assert_eq!(r.sections.len(), 2);
        assert_eq!(r.sections[1].order, 1);
        assert_eq!(r.sections[1].heading, "h2");
    }
}
