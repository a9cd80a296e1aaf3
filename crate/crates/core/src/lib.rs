//! Traffic sign extraction from segmentation maps and few-shot, in-context
//! recognition with multimodal LLM backends.
//!
//! The stages are independent modules wired together by [`pipeline`]:
//!
//! - [`mask`]: color-coded segmentation map to binary sign mask
//! - [`contour`]: border following, bounding boxes, speckle filtering
//! - [`region`]: black-background masking and per-sign crops
//! - [`mllm`]: backend abstraction, HTTP client, mock, cache, retry, rate limit
//! - [`description`]: per-class descriptions generated from template signs
//! - [`recognizer`]: prompt assembly and ranked-answer parsing
//! - [`evaluator`]: Top-k accuracy and report tables
//! - [`pipeline`]: run configuration and the detect, describe, recognize, evaluate stages

pub mod contour;
pub mod dataset;
pub mod mask;
pub mod region;
pub mod mllm;
mod par;
pub mod description;
pub mod recognizer;
pub mod evaluator;
pub mod synthetic;
pub mod pipeline;
