//! Cross-community occurrence records: ingestion into per-pHash event series,
//! occurrence and entity filters, and the temporal/event-count reports.
//!
//! Input lines are either CSV (`phash,community,timestamp`, header optional)
//! or JSON lines (`{"phash": "...", "community": "...", "timestamp": 1500000000}`).
//! Timestamps are Unix seconds; the study window is half-open `[start, end)`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use chrono::{DateTime, Datelike, Duration, NaiveDate, Utc, Weekday};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phash::PHash64;
use crate::report::thousands;

/// Process order used by the influence models.
pub const DEFAULT_COMMUNITIES: [&str; 6] = ["/pol/", "Reddit", "Twitter", "Gab", "The_Donald", "Trolls"];

pub const DEFAULT_MIN_OCCURRENCES: usize = 5;

#[derive(Debug, Error)]
pub enum EventsError {
    #[error("invalid events config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub phash: PHash64,
    pub community: String,
    pub timestamp: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputFormat {
    Csv,
    JsonLines,
}

impl InputFormat {
    /// `.csv` is CSV; anything else is read as JSON lines.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => InputFormat::Csv,
            _ => InputFormat::JsonLines,
        }
    }
}

/// Per-pHash, per-community sorted timestamps within a window.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventStore {
    pub communities: Vec<String>,
    pub window: (i64, i64),
    pub series: BTreeMap<PHash64, Vec<Vec<i64>>>,
}

impl EventStore {
    pub fn empty(communities: Vec<String>, window: (i64, i64)) -> Self {
        EventStore {
            communities,
            window,
            series: BTreeMap::new(),
        }
    }

    pub fn phash_count(&self) -> usize {
        self.series.len()
    }

    pub fn total_events(&self) -> usize {
        self.series.values().flatten().map(Vec::len).sum()
    }

    pub fn community_index(&self, name: &str) -> Option<usize> {
        self.communities.iter().position(|c| c == name)
    }

    pub fn counts_per_community(&self) -> Vec<usize> {
        let mut out = vec![0; self.communities.len()];
        for per in self.series.values() {
            for (k, ts) in per.iter().enumerate() {
                out[k] += ts.len();
            }
        }
        out
    }

    pub fn summary_counts(&self) -> BTreeMap<String, usize> {
        self.communities
            .iter()
            .cloned()
            .zip(self.counts_per_community())
            .collect()
    }

    pub fn horizon_hours(&self) -> f64 {
        (self.window.1 - self.window.0) as f64 / 3600.0
    }

    /// Event times of one pHash as hours since the window start.
    pub fn times_hours(&self, phash: PHash64) -> Option<Vec<Vec<f64>>> {
        let start = self.window.0;
        self.series.get(&phash).map(|per| {
            per.iter()
                .map(|ts| ts.iter().map(|t| (t - start) as f64 / 3600.0).collect())
                .collect()
        })
    }

    fn with_series(&self, series: BTreeMap<PHash64, Vec<Vec<i64>>>) -> EventStore {
        EventStore {
            communities: self.communities.clone(),
            window: self.window,
            series,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub line: usize,
    pub content: String,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub accepted: usize,
    pub duplicates: usize,
    pub out_of_window: usize,
    pub malformed: usize,
    pub phashes: usize,
    pub per_community: BTreeMap<String, usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ingested {
    pub store: EventStore,
    pub rejects: Vec<Reject>,
    pub summary: IngestSummary,
}

fn check_window(window: (i64, i64)) -> Result<(), EventsError> {
    if window.0 >= window.1 {
        return Err(EventsError::Config(format!(
            "window start {} must precede end {}",
            window.0, window.1
        )));
    }
    Ok(())
}

fn check_communities(communities: &[String]) -> Result<(), EventsError> {
    let unique: BTreeSet<&String> = communities.iter().collect();
    if communities.is_empty() || unique.len() != communities.len() {
        return Err(EventsError::Config("communities must be a non-empty list of distinct names".into()));
    }
    Ok(())
}

/// Build a store from typed records. Duplicate `(phash, community, timestamp)`
/// triples collapse to one event; out-of-window records are counted and dropped.
pub fn ingest<I>(records: I, communities: &[String], window: (i64, i64)) -> Result<Ingested, EventsError>
where
    I: IntoIterator<Item = EventRecord>,
{
    ingest_parsed(
        records.into_iter().enumerate().map(|(i, r)| (i + 1, String::new(), Ok(r))),
        communities,
        window,
    )
}

fn ingest_parsed<I>(parsed: I, communities: &[String], window: (i64, i64)) -> Result<Ingested, EventsError>
where
    I: IntoIterator<Item = (usize, String, Result<EventRecord, String>)>,
{
    check_window(window)?;
    check_communities(communities)?;
    let index: BTreeMap<&str, usize> = communities.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let mut sets: BTreeMap<PHash64, Vec<BTreeSet<i64>>> = BTreeMap::new();
    let mut rejects = Vec::new();
    let mut summary = IngestSummary::default();

    for (line, content, rec) in parsed {
        let rec = match rec {
            Ok(r) => r,
            Err(reason) => {
                summary.malformed += 1;
                rejects.push(Reject { line, content, reason });
                continue;
            }
        };
        let Some(&k) = index.get(rec.community.as_str()) else {
            summary.malformed += 1;
            rejects.push(Reject {
                line,
                content,
                reason: format!("unknown community {:?}", rec.community),
            });
            continue;
        };
        if rec.timestamp < window.0 || rec.timestamp >= window.1 {
            summary.out_of_window += 1;
            continue;
        }
        let per = sets
            .entry(rec.phash)
            .or_insert_with(|| vec![BTreeSet::new(); communities.len()]);
        if per[k].insert(rec.timestamp) {
            summary.accepted += 1;
        } else {
            summary.duplicates += 1;
        }
    }

    let series: BTreeMap<PHash64, Vec<Vec<i64>>> = sets
        .into_iter()
        .map(|(h, per)| (h, per.into_iter().map(|s| s.into_iter().collect()).collect()))
        .collect();
    let store = EventStore {
        communities: communities.to_vec(),
        window,
        series,
    };
    summary.phashes = store.phash_count();
    summary.per_community = store.summary_counts();
    Ok(Ingested { store, rejects, summary })
}

fn parse_csv_line(line: &str) -> Result<EventRecord, String> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(line.as_bytes());
    let rec = rdr
        .records()
        .next()
        .ok_or("empty line")?
        .map_err(|e| e.to_string())?;
    if rec.len() != 3 {
        return Err(format!("expected 3 fields, found {}", rec.len()));
    }
    let phash = PHash64::from_hex(&rec[0]).map_err(|e| e.to_string())?;
    let timestamp = rec[2]
        .parse::<i64>()
        .map_err(|_| format!("bad timestamp {:?}", &rec[2]))?;
    Ok(EventRecord {
        phash,
        community: rec[1].to_string(),
        timestamp,
    })
}

fn parse_line(line: &str, format: InputFormat) -> Result<EventRecord, String> {
    match format {
        InputFormat::Csv => parse_csv_line(line),
        InputFormat::JsonLines => serde_json::from_str(line).map_err(|e| e.to_string()),
    }
}

/// Read and ingest a whole input. Lines are parsed in parallel and inserted
/// in input order; malformed lines end up in `rejects`.
pub fn ingest_reader<R: BufRead>(
    reader: R,
    format: InputFormat,
    communities: &[String],
    window: (i64, i64),
) -> Result<Ingested, EventsError> {
    let lines: Vec<String> = reader.lines().collect::<Result<_, _>>()?;
    let parsed: Vec<(usize, String, Result<EventRecord, String>)> = lines
        .into_par_iter()
        .enumerate()
        .filter_map(|(i, line)| {
            let t = line.trim();
            if t.is_empty() || (i == 0 && format == InputFormat::Csv && t.starts_with("phash")) {
                return None;
            }
            let rec = parse_line(t, format);
            Some((i + 1, line, rec))
        })
        .collect();
    ingest_parsed(parsed, communities, window)
}

/// Map a raw platform record onto the six default communities: Reddit posts
/// in `The_Donald` become `The_Donald`, 4chan's `pol` board becomes `/pol/`,
/// Twitter posts whose channel is `troll` become `Trolls`.
pub fn map_platform(platform: &str, channel: &str) -> Option<&'static str> {
    match (platform.to_ascii_lowercase().as_str(), channel) {
        ("reddit", c) if c.eq_ignore_ascii_case("the_donald") => Some("The_Donald"),
        ("reddit", _) => Some("Reddit"),
        ("4chan", c) if c.trim_matches('/').eq_ignore_ascii_case("pol") => Some("/pol/"),
        ("twitter", c) if c.eq_ignore_ascii_case("troll") => Some("Trolls"),
        ("twitter", _) => Some("Twitter"),
        ("gab", _) => Some("Gab"),
        _ => None,
    }
}

/// Import adapter for CSV rows `phash,platform,channel,timestamp`
/// (header optional), relabelled through [`map_platform`].
pub fn import_platform_csv<R: BufRead>(reader: R, window: (i64, i64)) -> Result<Ingested, EventsError> {
    let communities: Vec<String> = DEFAULT_COMMUNITIES.iter().map(|s| s.to_string()).collect();
    let mut parsed = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || (i == 0 && t.starts_with("phash")) {
            continue;
        }
        let fields: Vec<&str> = t.split(',').map(str::trim).collect();
        let rec = if fields.len() != 4 {
            Err(format!("expected 4 fields, found {}", fields.len()))
        } else {
            match (PHash64::from_hex(fields[0]), fields[3].parse::<i64>(), map_platform(fields[1], fields[2])) {
                (Ok(phash), Ok(timestamp), Some(c)) => Ok(EventRecord {
                    phash,
                    community: c.to_string(),
                    timestamp,
                }),
                (Err(e), _, _) => Err(e.to_string()),
                (_, Err(_), _) => Err(format!("bad timestamp {:?}", fields[3])),
                (_, _, None) => Err(format!("unmapped platform {:?}/{:?}", fields[1], fields[2])),
            }
        };
        parsed.push((i + 1, line.clone(), rec));
    }
    ingest_parsed(parsed, &communities, window)
}

/// Keep pHashes with at least `k` events over all communities.
pub fn filter_min_occurrences(store: &EventStore, k: usize) -> Result<EventStore, EventsError> {
    if k == 0 {
        return Err(EventsError::Config("min occurrences must be >= 1".into()));
    }
    let series = store
        .series
        .iter()
        .filter(|(_, per)| per.iter().map(Vec::len).sum::<usize>() >= k)
        .map(|(h, per)| (*h, per.clone()))
        .collect();
    Ok(store.with_series(series))
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub kept: usize,
    pub unannotated: usize,
    pub unmatched: usize,
}

/// Subset of pHashes whose annotated entity set meets `entity_list`.
pub fn select_by_entities(
    store: &EventStore,
    annotations: &BTreeMap<PHash64, BTreeSet<String>>,
    entity_list: &[String],
) -> Result<(EventStore, SelectionReport), EventsError> {
    if entity_list.is_empty() {
        return Err(EventsError::Config("entity list is empty".into()));
    }
    let wanted: BTreeSet<&str> = entity_list.iter().map(String::as_str).collect();
    let mut report = SelectionReport::default();
    let mut series = BTreeMap::new();
    for (h, per) in &store.series {
        match annotations.get(h) {
            None => report.unannotated += 1,
            Some(ents) if ents.iter().any(|e| wanted.contains(e.as_str())) => {
                report.kept += 1;
                series.insert(*h, per.clone());
            }
            Some(_) => report.unmatched += 1,
        }
    }
    Ok((store.with_series(series), report))
}

/// Event counts per community for a set of named stores, shaped like
/// `name, <count per community>..., Total Events, pHashes`.
pub fn event_count_table(rows: &[(&str, &EventStore)]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let communities: Vec<String> = rows
        .first()
        .map(|(_, s)| s.communities.clone())
        .unwrap_or_default();
    let mut header = vec![String::new()];
    header.extend(communities.iter().cloned());
    header.push("Total Events".into());
    header.push("pHashes".into());
    w.write_record(&header).expect("in-memory write");
    for (name, store) in rows {
        let mut rec = vec![name.to_string()];
        rec.extend(store.counts_per_community().iter().map(|c| thousands(*c as u64)));
        rec.push(thousands(store.total_events() as u64));
        rec.push(thousands(store.phash_count() as u64));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 csv")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeeklyShareReport {
    /// ISO week labels, e.g. `2017-W32`, contiguous.
    pub weeks: Vec<String>,
    pub tweets: Vec<u64>,
    pub image_tweets: Vec<u64>,
    /// Share of all tweets posted in each week (sums to 100).
    pub tweet_share: Vec<f64>,
    /// Image tweets of each week as a share of all tweets.
    pub image_tweet_share_of_all: Vec<f64>,
    /// Image tweets of each week as a share of all image tweets (sums to 100);
    /// empty when there are no image tweets.
    pub image_share: Vec<f64>,
    pub no_image_tweets: bool,
}

fn week_monday(ts: i64) -> NaiveDate {
    let d = DateTime::<Utc>::from_timestamp(ts, 0)
        .unwrap_or(DateTime::<Utc>::UNIX_EPOCH)
        .date_naive();
    let w = d.iso_week();
    NaiveDate::from_isoywd_opt(w.year(), w.week(), Weekday::Mon).expect("valid iso week")
}

fn week_label(monday: NaiveDate) -> String {
    let w = monday.iso_week();
    format!("{}-W{:02}", w.year(), w.week())
}

/// Weekly tweet and image-tweet shares over ISO-8601 (UTC) weeks. When a
/// window is given, every week it touches is reported, including empty ones.
pub fn weekly_share_report<I>(tweets: I, window: Option<(i64, i64)>) -> WeeklyShareReport
where
    I: IntoIterator<Item = (i64, bool)>,
{
    let mut per_week: BTreeMap<NaiveDate, (u64, u64)> = BTreeMap::new();
    for (ts, has_image) in tweets {
        let slot = per_week.entry(week_monday(ts)).or_default();
        slot.0 += 1;
        slot.1 += has_image as u64;
    }
    let bounds = match (window, per_week.keys().next(), per_week.keys().next_back()) {
        (Some((s, e)), _, _) => Some((week_monday(s), week_monday(e - 1))),
        (None, Some(a), Some(b)) => Some((*a, *b)),
        _ => None,
    };
    let mut weeks = Vec::new();
    let mut tweets_v = Vec::new();
    let mut images_v = Vec::new();
    if let Some((mut cur, last)) = bounds {
        // tweets outside the window are ignored
        while cur <= last {
            let (t, i) = per_week.get(&cur).copied().unwrap_or((0, 0));
            weeks.push(week_label(cur));
            tweets_v.push(t);
            images_v.push(i);
            cur += Duration::days(7);
        }
    }
    let total: u64 = tweets_v.iter().sum();
    let total_img: u64 = images_v.iter().sum();
    let share = |v: &[u64], denom: u64| -> Vec<f64> {
        if denom == 0 {
            Vec::new()
        } else {
            v.iter().map(|x| 100.0 * *x as f64 / denom as f64).collect()
        }
    };
    WeeklyShareReport {
        tweet_share: if total == 0 { vec![0.0; weeks.len()] } else { share(&tweets_v, total) },
        image_tweet_share_of_all: if total == 0 { vec![0.0; weeks.len()] } else { share(&images_v, total) },
        image_share: share(&images_v, total_img),
        no_image_tweets: total_img == 0,
        weeks,
        tweets: tweets_v,
        image_tweets: images_v,
    }
}

impl WeeklyShareReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("week,tweets,image_tweets,tweet_share_pct,image_tweet_share_of_all_pct,image_share_pct\n");
        for i in 0..self.weeks.len() {
            let b = self
                .image_share
                .get(i)
                .map(|v| format!("{v:.2}"))
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{:.2},{:.2},{}\n",
                self.weeks[i], self.tweets[i], self.image_tweets[i], self.tweet_share[i], self.image_tweet_share_of_all[i], b
            ));
        }
        out
    }
}

/// Read `timestamp,has_image` CSV rows (header optional; `has_image` is
/// `true`/`false`/`1`/`0`).
pub fn read_tweets_csv<R: BufRead>(reader: R) -> Result<Vec<(i64, bool)>, EventsError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || (i == 0 && t.starts_with("timestamp")) {
            continue;
        }
        let (ts, img) = t
            .split_once(',')
            .ok_or_else(|| EventsError::Config(format!("tweets line {}: expected 2 fields", i + 1)))?;
        let ts: i64 = ts
            .trim()
            .parse()
            .map_err(|_| EventsError::Config(format!("tweets line {}: bad timestamp", i + 1)))?;
        let img = matches!(img.trim().to_ascii_lowercase().as_str(), "true" | "1" | "yes");
        out.push((ts, img));
    }
    Ok(out)
}
