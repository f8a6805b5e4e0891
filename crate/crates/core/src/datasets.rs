//! The four frequency-of-frequencies datasets used throughout the docs and
//! tests, bundled as CSV.

use std::path::Path;

use crate::data::FrequencyOfFrequencies;
use crate::error::{Error, Result};

const SWINE: &str = include_str!("../data/swine.csv");
const ACCIDENT: &str = include_str!("../data/accident.csv");
const TOMATO: &str = include_str!("../data/tomato.csv");
const BIRD: &str = include_str!("../data/bird.csv");

/// Names accepted by [`by_name`].
pub const NAMES: [&str; 4] = ["swine", "accident", "tomato", "bird"];

fn parse(name: &str, text: &str) -> FrequencyOfFrequencies {
    FrequencyOfFrequencies::parse_csv(text, Path::new(name), None)
        .expect("bundled dataset is valid")
}

/// Swine-flu sequence clusters (11 distinct frequencies, 8833 species).
pub fn swine() -> FrequencyOfFrequencies {
    parse("swine.csv", SWINE)
}

/// Accident counts (1621 species from 2028 records).
pub fn accident() -> FrequencyOfFrequencies {
    parse("accident.csv", ACCIDENT)
}

/// Tomato flower expressed sequence tags.
pub fn tomato() -> FrequencyOfFrequencies {
    parse("tomato.csv", TOMATO)
}

/// Bird survey: 645 birds from 72 species.
pub fn bird() -> FrequencyOfFrequencies {
    parse("bird.csv", BIRD)
}

pub fn by_name(name: &str) -> Result<FrequencyOfFrequencies> {
    match name.to_ascii_lowercase().as_str() {
        "swine" => Ok(swine()),
        "accident" => Ok(accident()),
        "tomato" => Ok(tomato()),
        "bird" => Ok(bird()),
        other => Err(Error::Config(format!(
            "unknown dataset `{other}` (expected one of {})",
            NAMES.join(", ")
        ))),
    }
}

/// Raw CSV text of a bundled dataset.
pub fn csv_text(name: &str) -> Option<&'static str> {
    match name {
        "swine" => Some(SWINE),
        "accident" => Some(ACCIDENT),
        "tomato" => Some(TOMATO),
        "bird" => Some(BIRD),
        _ => None,
    }
}
