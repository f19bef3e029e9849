//! Synthetic end-to-end fixture: photo-like images with planted
//! near-duplicate groups, offline annotations for every image hash, and
//! cross-community events drawn from a known six-process model.

use std::collections::BTreeMap;
use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::codecs::jpeg::JpegEncoder;
use image::imageops::{self, FilterType};
use image::{DynamicImage, ImageFormat, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotate::WebDetection;
use crate::events::{EventRecord, DEFAULT_COMMUNITIES};
use crate::hawkes::{simulate, AttributionCounts, ExpKernel, HawkesError, HawkesModel};
use crate::phash::{phash_bytes, PHash64, PhashError};

/// 2016-07-01T00:00:00Z
pub const FIXTURE_WINDOW_START: i64 = 1_467_331_200;
/// Twelve weeks.
pub const FIXTURE_HORIZON_HOURS: i64 = 2016;
pub const TROLLS: usize = 5;

const GROUP_SIZES: [usize; 10] = [6, 5, 5, 4, 4, 3, 3, 2, 2, 2];
const IMAGE_COUNT: usize = 50;
/// Singletons that also get event series (unannotated, since they end up as noise).
const SINGLETON_SERIES: usize = 3;

const GROUP_TOPS: [&str; 10] = [
    "Donald Trump",
    "Donald Trump",
    "Pepe the Frog",
    "Hillary Clinton",
    "Donald Trump",
    "Meme",
    "Pepe the Frog",
    "Barack Obama",
    "Meme",
    "Image",
];
const VOCAB: [&str; 10] = [
    "Donald Trump",
    "Pepe the Frog",
    "Hillary Clinton",
    "Barack Obama",
    "Meme",
    "Image",
    "Internet meme",
    "President of the United States",
    "Republican Party",
    "Cartoon",
];
const URLS: [&str; 10] = [
    "https://www.reddit.com/r/The_Donald/comments/6abc12/",
    "https://i.imgur.com/a1b2c3.jpg",
    "https://twitter.com/someone/status/880000000000000000",
    "https://boards.4chan.org/pol/thread/130000000",
    "https://gab.com/someone/posts/1234",
    "https://knowyourmeme.com/memes/pepe-the-frog",
    "https://www.breitbart.com/politics/2017/01/01/story/",
    "https://en.wikipedia.org/wiki/Internet_meme",
    "https://i.pinimg.com/originals/aa/bb/cc.jpg",
    "https://static.news.co.uk/images/photo.png",
];

pub const SUBSET_ENTITY: &str = "Donald Trump";

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Phash(#[from] PhashError),
    #[error(transparent)]
    Hawkes(#[from] HawkesError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Six-process model used to draw every fixture series; rows are sources in
/// [`DEFAULT_COMMUNITIES`] order.
pub fn planted_model() -> HawkesModel {
    HawkesModel::new(
        vec![0.05, 0.04, 0.05, 0.02, 0.03, 0.03],
        vec![
            vec![0.20, 0.05, 0.05, 0.05, 0.05, 0.00],
            vec![0.05, 0.20, 0.05, 0.02, 0.05, 0.00],
            vec![0.05, 0.05, 0.25, 0.05, 0.05, 0.02],
            vec![0.05, 0.02, 0.05, 0.15, 0.05, 0.00],
            vec![0.10, 0.15, 0.15, 0.10, 0.20, 0.00],
            vec![0.05, 0.10, 0.20, 0.10, 0.05, 0.10],
        ],
        ExpKernel::default(),
    )
    .expect("planted model is stable")
}

/// Smooth colour blobs over a gradient with a faint texture.
pub fn synthetic_image(seed: u64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = rng.random_range(200..=320u32);
    let h = rng.random_range(150..=240u32);
    let base: [f64; 3] = std::array::from_fn(|_| rng.random_range(30.0..200.0));
    let grad: [f64; 3] = std::array::from_fn(|_| rng.random_range(-60.0..60.0));
    let blobs: Vec<(f64, f64, f64, [f64; 3])> = (0..rng.random_range(4..8))
        .map(|_| {
            (
                rng.random_range(0.0..w as f64),
                rng.random_range(0.0..h as f64),
                rng.random_range(0.08..0.3) * w as f64,
                std::array::from_fn(|_| rng.random_range(-120.0..120.0)),
            )
        })
        .collect();
    let (fx, fy, phase) = (
        rng.random_range(0.05..0.3),
        rng.random_range(0.05..0.3),
        rng.random_range(0.0..std::f64::consts::TAU),
    );
    RgbImage::from_fn(w, h, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        let diag = (xf / w as f64 + yf / h as f64) / 2.0;
        let tex = 6.0 * (fx * xf + fy * yf + phase).sin();
        let px: [u8; 3] = std::array::from_fn(|c| {
            let mut v = base[c] + grad[c] * diag + tex;
            for (cx, cy, r, col) in &blobs {
                let d2 = (xf - cx).powi(2) + (yf - cy).powi(2);
                v += col[c] * (-d2 / (2.0 * r * r)).exp();
            }
            v.round().clamp(0.0, 255.0) as u8
        });
        Rgb(px)
    })
}

fn encode(img: &DynamicImage, format: ImageFormat) -> Result<Vec<u8>, FixtureError> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, format)?;
    Ok(buf.into_inner())
}

fn encode_jpeg(img: &RgbImage, quality: u8) -> Result<Vec<u8>, FixtureError> {
    let mut buf = Vec::new();
    JpegEncoder::new_with_quality(&mut buf, quality).encode_image(img)?;
    Ok(buf)
}

fn scaled(img: &RgbImage, factor: f64) -> RgbImage {
    let w = ((img.width() as f64 * factor).round() as u32).max(1);
    let h = ((img.height() as f64 * factor).round() as u32).max(1);
    imageops::resize(img, w, h, FilterType::Triangle)
}

/// Near-duplicate number `kind` of `img` as `(extension, encoded bytes)`.
/// Kind 0 is the original.
pub fn variant(img: &RgbImage, kind: usize) -> Result<(&'static str, Vec<u8>), FixtureError> {
    Ok(match kind % 6 {
        0 => ("png", encode(&DynamicImage::ImageRgb8(img.clone()), ImageFormat::Png)?),
        1 => ("png", encode(&DynamicImage::ImageRgb8(scaled(img, 0.9)), ImageFormat::Png)?),
        2 => ("jpg", encode_jpeg(img, 75)?),
        3 => {
            let mut out = img.clone();
            for p in out.pixels_mut() {
                p.0 = p.0.map(|v| v.saturating_add(6));
            }
            ("png", encode(&DynamicImage::ImageRgb8(out), ImageFormat::Png)?)
        }
        4 => {
            let (dx, dy) = (img.width() / 100, img.height() / 100);
            let crop = imageops::crop_imm(img, dx, dy, img.width() - 2 * dx, img.height() - 2 * dy).to_image();
            ("png", encode(&DynamicImage::ImageRgb8(crop), ImageFormat::Png)?)
        }
        _ => ("jpg", encode_jpeg(&scaled(img, 0.75), 85)?),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FixtureImage {
    pub name: String,
    #[serde(skip)]
    pub bytes: Vec<u8>,
    pub phash: PHash64,
    /// Planted group, `None` for singletons.
    pub group: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GroundTruth {
    pub communities: Vec<String>,
    pub window: (i64, i64),
    pub model: HawkesModel,
    /// Planted near-duplicate groups by image name.
    pub groups: Vec<Vec<String>>,
    /// Series keys in generation order.
    pub series: Vec<PHash64>,
    /// Attribution counts from the simulator's recorded parents, summed over series.
    pub true_counts: AttributionCounts,
    /// Trolls' external efficiency from recorded parents, as a fraction.
    pub trolls_external_efficiency: f64,
    /// The same quantity implied by the model (sum of the trolls row off the diagonal).
    pub trolls_external_efficiency_model: f64,
}

pub struct Fixture {
    pub images: Vec<FixtureImage>,
    /// Keyed by pHash hex, in the offline provider format.
    pub annotations: BTreeMap<String, WebDetection>,
    pub events: Vec<EventRecord>,
    /// `(timestamp, has_image)` for the trolls' tweets.
    pub tweets: Vec<(i64, bool)>,
    pub truth: GroundTruth,
}

fn detection(rng: &mut ChaCha8Rng, top: Option<&str>) -> WebDetection {
    let Some(top) = top else {
        return WebDetection::default();
    };
    let mut entities = vec![(top.to_string(), rng.random_range(0.8..1.2))];
    for _ in 0..rng.random_range(1..4) {
        let e = VOCAB[rng.random_range(0..VOCAB.len())];
        if entities.iter().all(|(l, _)| l != e) {
            entities.push((e.to_string(), rng.random_range(0.2..0.7)));
        }
    }
    let mut urls: Vec<String> = (0..rng.random_range(1..5))
        .map(|_| URLS[rng.random_range(0..URLS.len())].to_string())
        .collect();
    urls.sort();
    urls.dedup();
    let split = urls.len() / 2;
    WebDetection {
        entities,
        full_match_urls: urls[..split].to_vec(),
        page_urls: urls[split..].to_vec(),
    }
}

/// Build the whole fixture deterministically from `seed`.
pub fn generate(seed: u64) -> Result<Fixture, FixtureError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(IMAGE_COUNT);
    let mut groups = Vec::new();
    let mut base_seed = seed.wrapping_mul(1000);
    let mut push = |img: &RgbImage, kind: usize, group: Option<usize>| -> Result<String, FixtureError> {
        let (ext, bytes) = variant(img, kind)?;
        let name = format!("img_{:03}.{ext}", images.len());
        let phash = phash_bytes(&bytes)?;
        images.push(FixtureImage {
            name: name.clone(),
            bytes,
            phash,
            group,
        });
        Ok(name)
    };
    for (g, &size) in GROUP_SIZES.iter().enumerate() {
        let base = synthetic_image(base_seed);
        base_seed += 1;
        let names = (0..size).map(|k| push(&base, k, Some(g))).collect::<Result<Vec<_>, _>>()?;
        groups.push(names);
    }
    let singletons = IMAGE_COUNT - GROUP_SIZES.iter().sum::<usize>();
    for _ in 0..singletons {
        let base = synthetic_image(base_seed);
        base_seed += 1;
        push(&base, 0, None)?;
    }

    let mut annotations = BTreeMap::new();
    let group_dets: Vec<WebDetection> = GROUP_TOPS.iter().map(|t| detection(&mut rng, Some(t))).collect();
    for (i, img) in images.iter().enumerate() {
        let det = match img.group {
            Some(g) => group_dets[g].clone(),
            // one singleton without any entity
            None if i == IMAGE_COUNT - 1 => detection(&mut rng, None),
            None => {
                let top = VOCAB[rng.random_range(0..VOCAB.len())];
                detection(&mut rng, Some(top))
            }
        };
        annotations.insert(img.phash.to_hex(), det);
    }

    let model = planted_model();
    let communities: Vec<String> = DEFAULT_COMMUNITIES.iter().map(|s| s.to_string()).collect();
    let window = (FIXTURE_WINDOW_START, FIXTURE_WINDOW_START + FIXTURE_HORIZON_HOURS * 3600);
    let mut series_keys: Vec<PHash64> = groups
        .iter()
        .map(|g| images.iter().find(|i| i.name == g[0]).expect("group member").phash)
        .collect();
    series_keys.extend(images.iter().filter(|i| i.group.is_none()).take(SINGLETON_SERIES).map(|i| i.phash));

    let mut events = Vec::new();
    let mut true_counts = AttributionCounts::zeros(communities.len());
    for h in &series_keys {
        let sim = simulate(&model, FIXTURE_HORIZON_HOURS as f64, seed ^ h.0)?;
        true_counts.add(&sim.true_counts())?;
        for (d, ts) in sim.times.iter().enumerate() {
            for t in ts {
                events.push(EventRecord {
                    phash: *h,
                    community: communities[d].clone(),
                    timestamp: window.0 + (t * 3600.0).floor() as i64,
                });
            }
        }
    }
    events.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then(a.phash.cmp(&b.phash)));

    let mut tweets: Vec<(i64, bool)> = events
        .iter()
        .filter(|e| e.community == communities[TROLLS])
        .map(|e| (e.timestamp, true))
        .collect();
    let plain = (tweets.len() * 4).max(100);
    for _ in 0..plain {
        tweets.push((rng.random_range(window.0..window.1), false));
    }
    tweets.sort();

    let k = communities.len();
    let out: f64 = (0..k).filter(|&d| d != TROLLS).map(|d| true_counts.c[TROLLS][d]).sum();
    let truth = GroundTruth {
        trolls_external_efficiency: out / true_counts.n[TROLLS],
        trolls_external_efficiency_model: (0..k).filter(|&d| d != TROLLS).map(|d| model.w[TROLLS][d]).sum(),
        communities,
        window,
        model,
        groups,
        series: series_keys,
        true_counts,
    };
    Ok(Fixture {
        images,
        annotations,
        events,
        tweets,
        truth,
    })
}

/// File names written by [`Fixture::write`].
pub mod files {
    pub const CORPUS_DIR: &str = "corpus";
    pub const ANNOTATIONS: &str = "annotations.json";
    pub const EVENTS: &str = "events.csv";
    pub const TWEETS: &str = "tweets.csv";
    pub const ENTITIES: &str = "entities.txt";
    pub const GROUND_TRUTH: &str = "ground_truth.json";
}

impl Fixture {
    pub fn write(&self, dir: &Path) -> Result<(), FixtureError> {
        let corpus = dir.join(files::CORPUS_DIR);
        fs::create_dir_all(&corpus)?;
        for img in &self.images {
            fs::write(corpus.join(&img.name), &img.bytes)?;
        }
        fs::write(dir.join(files::ANNOTATIONS), serde_json::to_string_pretty(&self.annotations)?)?;
        let mut ev = String::from("phash,community,timestamp\n");
        for e in &self.events {
            ev.push_str(&format!("{},{},{}\n", e.phash, e.community, e.timestamp));
        }
        fs::write(dir.join(files::EVENTS), ev)?;
        let mut tw = String::from("timestamp,has_image\n");
        for (t, img) in &self.tweets {
            tw.push_str(&format!("{t},{img}\n"));
        }
        fs::write(dir.join(files::TWEETS), tw)?;
        fs::write(dir.join(files::ENTITIES), format!("{SUBSET_ENTITY}\n"))?;
        fs::write(dir.join(files::GROUND_TRUTH), serde_json::to_string_pretty(&self.truth)?)?;
        Ok(())
    }
}
