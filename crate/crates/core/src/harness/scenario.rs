//! Synthetic scenarios: networks, planted events and their discussion.

use std::collections::BTreeSet;
use std::path::Path;

use chrono::{DateTime, Duration, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::baseline::DEFAULT_STD_FLOOR_FRACTION;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub network_id: String,
    pub country: String,
    pub continent: String,
    /// Mean throughput in bits per second.
    pub base_bps: f64,
    /// Relative amplitude of the daily cycle.
    #[serde(default = "default_daily")]
    pub daily_amplitude: f64,
    /// Relative weekend uplift.
    #[serde(default = "default_weekend")]
    pub weekend_uplift: f64,
}

fn default_daily() -> f64 {
    0.35
}
fn default_weekend() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedEvent {
    pub key: String,
    pub network_id: String,
    /// Start of the event and of its traffic bump.
    pub time: DateTime<Utc>,
    /// Bump height in units of the baseline noise scale.
    pub magnitude_z: f64,
    pub duration_minutes: u32,
    pub category: String,
    pub headline: String,
    pub entities: Vec<String>,
    pub platforms: Vec<String>,
    /// Days between the first post and the event.
    pub lead_days: f64,
    /// Breaking news: no discussion before the event.
    #[serde(default)]
    pub spontaneous: bool,
    /// Additional posts re-announcing the same event.
    #[serde(default)]
    pub duplicate_posts: u32,
    /// Offset in which posts state the start time.
    #[serde(default)]
    pub utc_offset_minutes: i32,
    pub audience_size: u64,
    pub data_per_user_mb: u64,
    pub likelihood: u8,
    /// Deliberately below the detection rule.
    #[serde(default)]
    pub sub_threshold: bool,
}

impl PlantedEvent {
    pub fn end(&self) -> DateTime<Utc> {
        self.time + Duration::minutes(i64::from(self.duration_minutes))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    /// Start of the traffic series; should be a Monday 00:00 UTC.
    pub start: DateTime<Utc>,
    pub duration_weeks: u32,
    pub step_seconds: u32,
    pub networks: Vec<NetworkSpec>,
    /// Noise standard deviation relative to the seasonal base.
    pub noise_std_fraction: f64,
    pub planted_events: Vec<PlantedEvent>,
    /// Posts announcing nothing that still pass the topical filter.
    #[serde(default = "default_distractors")]
    pub distractor_posts: u32,
    /// Posts below the engagement threshold.
    #[serde(default = "default_distractors")]
    pub low_engagement_posts: u32,
}

fn default_distractors() -> u32 {
    3
}

impl Scenario {
    pub fn end(&self) -> DateTime<Utc> {
        self.start + Duration::weeks(i64::from(self.duration_weeks))
    }

    /// Multiplier turning `magnitude_z` into a bump relative to the base:
    /// the larger of the noise fraction and the detector's std floor.
    pub fn bump_scale(&self) -> f64 {
        self.noise_std_fraction.max(DEFAULT_STD_FLOOR_FRACTION)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let s: Scenario = serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.duration_weeks < 2 {
            return bad("duration_weeks must be at least 2 (the first week only trains the baseline)".into());
        }
        if self.step_seconds == 0 || 7 * 86_400 % self.step_seconds != 0 {
            return bad(format!("step_seconds {} must divide a week", self.step_seconds));
        }
        if !(self.noise_std_fraction >= 0.0 && self.noise_std_fraction < 1.0) {
            return bad(format!("noise_std_fraction {} must be in [0, 1)", self.noise_std_fraction));
        }
        let nets: BTreeSet<&str> = self.networks.iter().map(|n| n.network_id.as_str()).collect();
        if nets.len() != self.networks.len() || nets.is_empty() {
            return bad("network ids must be unique and non-empty".into());
        }
        for n in &self.networks {
            if !(n.base_bps > 0.0) || !(0.0..1.0).contains(&n.daily_amplitude) || n.weekend_uplift <= -1.0 {
                return bad(format!("network {} has an invalid traffic shape", n.network_id));
            }
        }
        let mut keys = BTreeSet::new();
        let mut headlines = BTreeSet::new();
        let first_scored = self.start + Duration::weeks(1);
        for e in &self.planted_events {
            if !keys.insert(e.key.as_str()) || !headlines.insert(e.headline.to_lowercase()) {
                return bad(format!("duplicate planted key or headline `{}`", e.key));
            }
            if !nets.contains(e.network_id.as_str()) {
                return bad(format!("event {} names unknown network {}", e.key, e.network_id));
            }
            if e.time < first_scored || e.end() > self.end() {
                return bad(format!("event {} must lie between week 1 and the end of the series", e.key));
            }
            if !e.sub_threshold && (e.magnitude_z < 2.0 || e.duration_minutes < 20) {
                return bad(format!("event {} is below the detection rule but not marked sub_threshold", e.key));
            }
            if !(e.lead_days >= 0.0) || (e.spontaneous && e.lead_days != 0.0) {
                return bad(format!("event {} has an invalid lead time", e.key));
            }
            if e.likelihood > 10 || e.entities.is_empty() || e.headline.trim().is_empty() {
                return bad(format!("event {} has invalid metadata", e.key));
            }
        }
        Ok(())
    }

    /// The built-in scenario: 30 events on 3 networks over 6 weeks, three
    /// of them spontaneous, four announced twice.
    pub fn default_synthetic() -> Self {
        let start = Utc.with_ymd_and_hms(2025, 3, 3, 0, 0, 0).unwrap();
        let networks = vec![
            NetworkSpec { network_id: "ixp-br".into(), country: "BR".into(), continent: "South America".into(), base_bps: 8.0e11, daily_amplitude: 0.35, weekend_uplift: 0.1 },
            NetworkSpec { network_id: "ixp-de".into(), country: "DE".into(), continent: "Europe".into(), base_bps: 1.2e12, daily_amplitude: 0.35, weekend_uplift: 0.1 },
            NetworkSpec { network_id: "ixp-us".into(), country: "US".into(), continent: "North America".into(), base_bps: 2.0e12, daily_amplitude: 0.35, weekend_uplift: 0.1 },
        ];
        let net_ids = ["ixp-de", "ixp-us", "ixp-br"];
        // Start hour of the k-th event on a network; a weekday repeats after
        // seven events, at a different hour.
        const HOURS: [u32; 10] = [20, 19, 21, 14, 18, 12, 16, 10, 22, 15];
        const MAGNITUDES: [f64; 6] = [5.0, 4.0, 6.0, 4.5, 7.0, 5.5];
        const DURATIONS: [u32; 6] = [60, 45, 90, 30, 120, 75];
        let planted_events = DEFAULT_EVENTS
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let (category, headline, entities, platforms, lead_days, duplicate_posts) = *row;
                let time = start + Duration::days(7 + i as i64) + Duration::hours(i64::from(HOURS[i / 3])) + Duration::minutes(if i % 2 == 1 { 30 } else { 0 });
                let (audience_size, data_per_user_mb) = match category {
                    "TV & Film" => (40_000_000, 2_500),
                    "Sports" => (120_000_000, 1_500),
                    "Music" => (15_000_000, 300),
                    "Gaming" => (8_000_000, 8_000),
                    "Technology" => (5_000_000, 400),
                    _ => (60_000_000, 150),
                };
                PlantedEvent {
                    key: format!("ev{i:02}"),
                    network_id: net_ids[i % 3].into(),
                    time,
                    magnitude_z: MAGNITUDES[i % MAGNITUDES.len()],
                    duration_minutes: DURATIONS[i % DURATIONS.len()],
                    category: category.into(),
                    headline: headline.into(),
                    entities: entities.iter().map(|s| s.to_string()).collect(),
                    platforms: platforms.iter().map(|s| s.to_string()).collect(),
                    lead_days,
                    spontaneous: lead_days == 0.0,
                    duplicate_posts,
                    utc_offset_minutes: if i % 5 == 2 { 60 } else { 0 },
                    audience_size,
                    data_per_user_mb,
                    likelihood: if lead_days == 0.0 { 10 } else { 9 },
                    sub_threshold: false,
                }
            })
            .collect();
        Scenario {
            seed: 7,
            start,
            duration_weeks: 6,
            step_seconds: 60,
            networks,
            noise_std_fraction: 0.04,
            planted_events,
            distractor_posts: 3,
            low_engagement_posts: 3,
        }
    }
}

type EventRow = (&'static str, &'static str, &'static [&'static str], &'static [&'static str], f64, u32);

const DEFAULT_EVENTS: [EventRow; 30] = [
    ("TV & Film", "Season finale of Glass Meridian", &["Glass Meridian", "Northlight Studios"], &["StreamCo", "Northlight+"], 45.0, 1),
    ("Sports", "Harbor City FC versus Red Quarry cup semifinal", &["Harbor City FC", "Red Quarry United"], &["SportsCast"], 2.0, 0),
    ("Music", "Lumen Vale world tour livestream", &["Lumen Vale"], &["TuneWave", "ClipTube"], 20.0, 0),
    ("Gaming", "Starforge Odyssey expansion patch release", &["Starforge Odyssey", "Anvil Games"], &["PlayDepot", "Anvil Launcher"], 10.0, 0),
    ("Technology", "Orchard Labs annual keynote", &["Orchard Labs"], &["ClipTube", "Orchard Live"], 15.0, 0),
    ("News", "Unexpected nationwide power grid failure coverage", &["National Grid Authority"], &["NewsNow"], 0.0, 0),
    ("TV & Film", "Premiere of the Iron Lantern miniseries", &["Iron Lantern", "Cobalt Pictures"], &["StreamCo"], 60.0, 0),
    ("Sports", "Grand Prix of Saltmarsh qualifying session", &["Saltmarsh Circuit", "Velocity Racing"], &["SpeedTV"], 5.0, 0),
    ("Sports", "Continental rugby final Kestrel against Ironbark", &["Kestrel Rugby", "Ironbark Rugby"], &["SportsCast", "RugbyPass"], 7.0, 1),
    ("TV & Film", "Dragonmere documentary release", &["Dragonmere", "Wildframe"], &["DocuFlix"], 32.0, 0),
    ("Gaming", "Pixel Siege esports championship grand final", &["Pixel Siege", "Team Nova"], &["StreamArena"], 35.0, 0),
    ("Music", "Echo Harbor festival opening night broadcast", &["Echo Harbor Festival"], &["TuneWave"], 40.0, 0),
    ("TV & Film", "Wintermoor Chronicles movie digital debut", &["Wintermoor Chronicles"], &["StreamCo", "MovieVault"], 90.0, 0),
    ("Technology", "Quantum Pebble smartphone launch event", &["Quantum Pebble", "Pebble Mobile"], &["ClipTube"], 28.0, 0),
    ("Sports", "Basketball all star weekend slam dunk contest", &["Hoops League"], &["SportsCast", "HoopsPass"], 1.0, 0),
    ("News", "Breaking coverage of major volcanic eruption", &["Mount Calder"], &["NewsNow", "ClipTube"], 0.0, 0),
    ("Music", "Silver Comet album premiere listening party", &["Silver Comet"], &["TuneWave"], 25.0, 1),
    ("TV & Film", "Awards night for independent cinema", &["Indie Screen Awards"], &["StreamCo"], 35.0, 0),
    ("Sports", "Cricket test decider Marlin versus Falcon", &["Marlin Cricket", "Falcon Cricket"], &["CricketLive"], 10.0, 0),
    ("Gaming", "Mythic Realms online seasonal reset", &["Mythic Realms", "Runebound Studio"], &["Runebound Launcher"], 6.0, 0),
    ("Technology", "Open source kernel conference livestream", &["Kernel Summit"], &["ClipTube"], 9.0, 0),
    ("TV & Film", "Return of the Sapphire Coast reality show", &["Sapphire Coast"], &["ReelTV"], 40.0, 0),
    ("Gaming", "Console maker Tidal Play firmware rollout", &["Tidal Play"], &["Tidal Network"], 18.0, 1),
    ("Sports", "Marathon of Alder Bay live coverage", &["Alder Bay Marathon"], &["SpeedTV"], 3.0, 0),
    ("Music", "Violet Static reunion concert stream", &["Violet Static"], &["ClipTube", "TuneWave"], 12.0, 0),
    ("News", "Emergency broadcast for coastal hurricane landfall", &["Hurricane Ysolde"], &["NewsNow"], 0.0, 0),
    ("Sports", "Tennis open women's final Rhea against Okafor", &["Rhea Lindqvist", "Ada Okafor"], &["CourtTV"], 14.0, 0),
    ("TV & Film", "Anime film Skyward Blossom global simulcast", &["Skyward Blossom", "Petal Works"], &["AnimeHub"], 75.0, 0),
    ("Technology", "Satellite internet constellation launch webcast", &["Aether Orbital"], &["ClipTube"], 4.0, 0),
    ("Sports", "Ice hockey derby Frostbite against Glacier", &["Frostbite HC", "Glacier HC"], &["SportsCast"], 21.0, 0),
];
