//! In-context recognition: prompt assembly per strategy, backend call, and
//! ranked-answer parsing.

mod parse;
mod prompt;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use parse::parse_ranked_response;
pub use prompt::{
    build_baseline_prompt, build_recognition_prompt, BASELINE_QUERY, DEFAULT_QUERY, SCENE_QUERY,
};

use crate::dataset::{ClassCatalog, RgbImage};
use crate::description::DescriptionSet;
use crate::mllm::{Gateway, ImagePayload, MllmError, ResponseCache};

pub const DEFAULT_K: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum RecognizerError {
    #[error("k must be at least 1")]
    InvalidK,
    #[error("the full strategy requires a description set")]
    MissingDescriptions,
    #[error("description set lacks {} class(es): {}", .0.len(), .0.join(", "))]
    IncompleteDescriptions(Vec<String>),
    #[error("unknown strategy \"{0}\" (expected full, baseline or baseline_o)")]
    UnknownStrategy(String),
    #[error(transparent)]
    Gateway(#[from] MllmError),
}

/// Experimental arm. Declaration order is the reporting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Whole road image, class list only.
    BaselineO,
    /// Sign crop, class list only.
    Baseline,
    /// Sign crop plus every class description.
    Full,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::BaselineO, Variant::Baseline, Variant::Full];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::BaselineO => "baseline_o",
            Variant::Baseline => "baseline",
            Variant::Full => "full",
        }
    }

    pub fn default_query(self) -> &'static str {
        match self {
            Variant::BaselineO => SCENE_QUERY,
            Variant::Baseline => BASELINE_QUERY,
            Variant::Full => DEFAULT_QUERY,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = RecognizerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" | "ours" => Ok(Variant::Full),
            "baseline" => Ok(Variant::Baseline),
            "baseline_o" | "baseline-o" => Ok(Variant::BaselineO),
            other => Err(RecognizerError::UnknownStrategy(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecognitionStrategy {
    pub variant: Variant,
    pub k_requested: usize,
}

impl RecognitionStrategy {
    pub fn new(variant: Variant, k_requested: usize) -> Result<Self, RecognizerError> {
        if k_requested == 0 {
            return Err(RecognizerError::InvalidK);
        }
        Ok(Self {
            variant,
            k_requested,
        })
    }
}

/// One line of the results file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecognitionResult {
    pub sample_id: String,
    pub detection_index: usize,
    pub strategy: Variant,
    /// Most likely first; rank is position + 1.
    pub ranked: Vec<String>,
    pub raw_response: String,
    pub parse_ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RecognitionResult {
    /// Result for a sample that could not be sent or answered; scores as
    /// incorrect at every k.
    pub fn failed(sample_id: &str, detection_index: usize, strategy: Variant, error: String) -> Self {
        Self {
            sample_id: sample_id.to_string(),
            detection_index,
            strategy,
            ranked: Vec::new(),
            raw_response: String::new(),
            parse_ok: false,
            error: Some(error),
        }
    }

    pub fn rank_of(&self, class_id: &str) -> Option<usize> {
        self.ranked.iter().position(|c| c == class_id).map(|i| i + 1)
    }
}

/// Prompt is assembled once per strategy; each call pairs it with one image.
pub struct Recognizer<'a> {
    strategy: RecognitionStrategy,
    catalog: &'a ClassCatalog,
    gateway: &'a Gateway,
    cache: Option<&'a ResponseCache>,
    prompt: String,
}

impl<'a> Recognizer<'a> {
    pub fn new(
        strategy: RecognitionStrategy,
        catalog: &'a ClassCatalog,
        descriptions: Option<&DescriptionSet>,
        gateway: &'a Gateway,
    ) -> Result<Self, RecognizerError> {
        Self::with_query(strategy, catalog, descriptions, gateway, strategy.variant.default_query())
    }

    pub fn with_query(
        strategy: RecognitionStrategy,
        catalog: &'a ClassCatalog,
        descriptions: Option<&DescriptionSet>,
        gateway: &'a Gateway,
        query: &str,
    ) -> Result<Self, RecognizerError> {
        let k = strategy.k_requested;
        let prompt = match strategy.variant {
            Variant::Full => {
                let d = descriptions.ok_or(RecognizerError::MissingDescriptions)?;
                build_recognition_prompt(d, catalog, query, k)?
            }
            Variant::Baseline | Variant::BaselineO => build_baseline_prompt(catalog, query, k)?,
        };
        Ok(Self {
            strategy,
            catalog,
            gateway,
            cache: None,
            prompt,
        })
    }

    /// Route calls through `cache` so reruns do not hit the backend.
    pub fn with_cache(mut self, cache: &'a ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn prompt(&self) -> &str {
        &self.prompt
    }

    pub fn strategy(&self) -> RecognitionStrategy {
        self.strategy
    }

    /// Sends `image` (a sign crop, or the road scene for `baseline_o`) with
    /// the strategy prompt. An unparseable answer yields an empty ranking
    /// with `parse_ok = false`, not an error.
    pub fn recognize(
        &self,
        image: &RgbImage,
        sample_id: &str,
        detection_index: usize,
    ) -> Result<RecognitionResult, RecognizerError> {
        let req = self
            .gateway
            .request(self.prompt.clone(), vec![ImagePayload::png(image.encode_png())]);
        let response = match self.cache {
            Some(cache) => self.gateway.complete_cached(&req, cache)?.response,
            None => self.gateway.complete(&req)?,
        };
        let ranked = parse_ranked_response(&response.text, self.catalog, self.strategy.k_requested);
        Ok(RecognitionResult {
            sample_id: sample_id.to_string(),
            detection_index,
            strategy: self.strategy.variant,
            parse_ok: !ranked.is_empty(),
            ranked,
            raw_response: response.text,
            error: None,
        })
    }
}

#[cfg(test)]
mod tests;
