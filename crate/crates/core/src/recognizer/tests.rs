use std::path::Path;

use proptest::prelude::*;

use super::*;
use crate::dataset::ClassEntry;
use crate::description::ClassDescription;
use crate::mllm::{CacheKey, MllmBackend, MllmRequest, MllmResponse, MockBackend, Usage};

fn catalog(dir: &Path, classes: &[(&str, &str)]) -> ClassCatalog {
    let template = dir.join("template.png");
    RgbImage::filled(3, 3, [255, 255, 255]).save_png(&template).unwrap();
    ClassCatalog::new(
        classes
            .iter()
            .map(|(id, name)| ClassEntry {
                class_id: id.to_string(),
                display_name: name.to_string(),
                template_image_path: template.clone(),
            })
            .collect(),
    )
    .unwrap()
}

fn toy_catalog(dir: &Path) -> ClassCatalog {
    catalog(
        dir,
        &[("stop", "Stop"), ("yield", "Yield"), ("limit_30", "Speed limit 30")],
    )
}

fn descriptions_for(catalog: &ClassCatalog) -> DescriptionSet {
    DescriptionSet::new(
        "toy-model",
        catalog.digest(),
        catalog
            .entries()
            .iter()
            .map(|e| ClassDescription {
                class_id: e.class_id.clone(),
                text: format!("DESC<{}>: shape, color and composition of {}.", e.class_id, e.display_name),
                model_tag: "toy-model".into(),
                generated_at: "2024-01-01T00:00:00Z".into(),
                corrected: false,
            })
            .collect(),
    )
}

fn golden_descriptions(catalog: &ClassCatalog) -> DescriptionSet {
    let texts = [
        "Octagonal sign. Red background with a white border. White capital letters STOP in the center.",
        "Downward-pointing triangle. White interior with a thick red border. No symbols or text.",
        "Circular sign. White background with a red border. Black numeral 30 in the center.",
    ];
    DescriptionSet::new(
        "toy-model",
        catalog.digest(),
        catalog
            .entries()
            .iter()
            .zip(texts)
            .map(|(e, t)| ClassDescription {
                class_id: e.class_id.clone(),
                text: t.to_string(),
                model_tag: "toy-model".into(),
                generated_at: "2024-01-01T00:00:00Z".into(),
                corrected: false,
            })
            .collect(),
    )
}

const GOLDEN_FULL: &str = include_str!("../../tests/golden/prompt_full_k10.txt");
const GOLDEN_BASELINE: &str = include_str!("../../tests/golden/prompt_baseline_k10.txt");

#[test]
fn golden_prompts_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cat = toy_catalog(dir.path());
    let d = golden_descriptions(&cat);
    let full = build_recognition_prompt(&d, &cat, DEFAULT_QUERY, 10).unwrap();
    assert_eq!(full, GOLDEN_FULL);
    assert_eq!(full, build_recognition_prompt(&d, &cat, DEFAULT_QUERY, 10).unwrap());
    let base = build_baseline_prompt(&cat, BASELINE_QUERY, 10).unwrap();
    assert_eq!(base, GOLDEN_BASELINE);
}

#[test]
fn full_prompt_structure_for_43_classes() {
    let dir = tempfile::tempdir().unwrap();
    let names: Vec<(String, String)> = (0..43).map(|i| (format!("g{i:02}"), format!("GTSRB {i}"))).collect();
    let refs: Vec<_> = names.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    let cat = catalog(dir.path(), &refs);
    let d = descriptions_for(&cat);
    let p = build_recognition_prompt(&d, &cat, DEFAULT_QUERY, 10).unwrap();
    assert_eq!(p.matches("### class_id: ").count(), 43);
    let positions: Vec<_> = cat
        .ids()
        .map(|id| p.find(&format!("### class_id: {id} ")).unwrap())
        .collect();
    assert!(positions.windows(2).all(|w| w[0] < w[1]), "catalog order");
    assert!(p.contains("numbered list of the 10 most likely class ids"));
    assert!(p.trim_end().ends_with("Output exactly 10 class ids, one per numbered line."));
}

#[test]
fn k_one_asks_for_a_single_id() {
    let dir = tempfile::tempdir().unwrap();
    let cat = toy_catalog(dir.path());
    let p = build_recognition_prompt(&descriptions_for(&cat), &cat, DEFAULT_QUERY, 1).unwrap();
    assert!(p.contains("Output exactly 1 class id,"));
    assert!(matches!(
        build_recognition_prompt(&descriptions_for(&cat), &cat, DEFAULT_QUERY, 0),
        Err(RecognizerError::InvalidK)
    ));
}

#[test]
fn incomplete_descriptions_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cat = toy_catalog(dir.path());
    let mut d = descriptions_for(&cat).descriptions().to_vec();
    d.remove(1);
    let partial = DescriptionSet::new("m", cat.digest(), d);
    match build_recognition_prompt(&partial, &cat, DEFAULT_QUERY, 3) {
        Err(RecognizerError::IncompleteDescriptions(missing)) => assert_eq!(missing, vec!["yield"]),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn strategy_separation() {
    let dir = tempfile::tempdir().unwrap();
    let cat = toy_catalog(dir.path());
    let d = descriptions_for(&cat);
    let gw = Gateway::new(MockBackend::new());
    for variant in [Variant::Baseline, Variant::BaselineO] {
        let r = Recognizer::new(RecognitionStrategy::new(variant, 10).unwrap(), &cat, Some(&d), &gw).unwrap();
        for desc in d.descriptions() {
            assert!(!r.prompt().contains(desc.text.trim()));
        }
        assert!(!r.prompt().contains("DESC<"));
        for id in cat.ids() {
            assert!(r.prompt().contains(&format!("- {id}: ")));
        }
    }
    let r = Recognizer::new(RecognitionStrategy::new(Variant::Full, 10).unwrap(), &cat, Some(&d), &gw).unwrap();
    for desc in d.descriptions() {
        assert!(r.prompt().contains(desc.text.trim()));
    }
}

#[test]
fn full_strategy_needs_descriptions() {
    let dir = tempfile::tempdir().unwrap();
    let cat = toy_catalog(dir.path());
    let gw = Gateway::new(MockBackend::new());
    let s = RecognitionStrategy::new(Variant::Full, 10).unwrap();
    assert!(matches!(
        Recognizer::new(s, &cat, None, &gw),
        Err(RecognizerError::MissingDescriptions)
    ));
    assert!(RecognitionStrategy::new(Variant::Full, 0).is_err());
}

#[test]
fn fixture_answer_is_ranked() {
    let dir = tempfile::tempdir().unwrap();
    let cat = catalog(
        dir.path(),
        &[("stop", "Stop"), ("yield", "Yield"), ("speed_limit_30", "Speed limit 30")],
    );
    let crop = RgbImage::filled(12, 12, [200, 0, 0]);
    let strategy = RecognitionStrategy::new(Variant::Baseline, 10).unwrap();
    let probe = Gateway::new(MockBackend::new());
    let prompt = Recognizer::new(strategy, &cat, None, &probe).unwrap().prompt().to_string();
    let key = CacheKey::of(&probe.request(prompt, vec![ImagePayload::png(crop.encode_png())]));
    let gw = Gateway::new(MockBackend::new().with_fixture(&key, "1. stop 2. yield 3. speed_limit_30"));
    let r = Recognizer::new(strategy, &cat, None, &gw).unwrap();
    let res = r.recognize(&crop, "s1", 0).unwrap();
    assert_eq!(res.ranked, vec!["stop", "yield", "speed_limit_30"]);
    assert!(res.parse_ok);
    assert_eq!(res.raw_response, "1. stop 2. yield 3. speed_limit_30");
    assert_eq!(res.rank_of("yield"), Some(2));
}

#[test]
fn unparseable_answer_degrades_to_empty_ranking() {
    let dir = tempfile::tempdir().unwrap();
    let cat = toy_catalog(dir.path());
    let gw = Gateway::new(MockBackend::new());
    let r = Recognizer::new(RecognitionStrategy::new(Variant::Baseline, 5).unwrap(), &cat, None, &gw).unwrap();
    let res = r.recognize(&RgbImage::filled(4, 4, [1, 2, 3]), "s", 0).unwrap();
    assert!(res.ranked.is_empty());
    assert!(!res.parse_ok);
    assert!(res.raw_response.starts_with("mock response "));
}

/// Answers by the dominant color of the submitted image.
struct ColorRule;

impl MllmBackend for ColorRule {
    fn call(&self, req: &MllmRequest) -> Result<MllmResponse, MllmError> {
        let img = RgbImage::decode(&req.images[0].bytes).unwrap();
        let (mut r, mut g, mut b) = (0u64, 0u64, 0u64);
        for p in img.pixels() {
            r += p[0] as u64;
            g += p[1] as u64;
            b += p[2] as u64;
        }
        let text = if r >= g && r >= b {
            "1. stop\n2. yield\n3. limit_30"
        } else if g >= b {
            "1. yield\n2. stop\n3. limit_30"
        } else {
            "1. limit_30\n2. stop\n3. yield"
        };
        Ok(MllmResponse {
            text: text.into(),
            model_tag: req.model_tag.clone(),
            usage: Usage::default(),
            latency: Default::default(),
            attempts: 0,
        })
    }
}

#[test]
fn rule_based_backend_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cat = toy_catalog(dir.path());
    let d = descriptions_for(&cat);
    let gw = Gateway::new(ColorRule);
    let cache = ResponseCache::new(dir.path().join("cache"));
    let r = Recognizer::new(RecognitionStrategy::new(Variant::Full, 2).unwrap(), &cat, Some(&d), &gw)
        .unwrap()
        .with_cache(&cache);
    let cases = [([220, 10, 10], "stop"), ([10, 200, 10], "yield"), ([10, 10, 230], "limit_30")];
    for (i, (color, expected)) in cases.iter().enumerate() {
        let res = r.recognize(&RgbImage::filled(8, 8, *color), "s", i).unwrap();
        assert_eq!(res.ranked.len(), 2);
        assert_eq!(res.ranked[0], *expected);
        let again = r.recognize(&RgbImage::filled(8, 8, *color), "s", i).unwrap();
        assert_eq!(again, res);
    }
    assert_eq!(gw.dispatch_count(), 3);
}

#[test]
fn parses_numbered_list() {
    let dir = tempfile::tempdir().unwrap();
    let cat = toy_catalog(dir.path());
    assert_eq!(parse_ranked_response("1. stop\n2. yield", &cat, 10), vec!["stop", "yield"]);
}

#[test]
fn falls_back_to_display_names() {
    let dir = tempfile::tempdir().unwrap();
    let cat = toy_catalog(dir.path());
    assert_eq!(
        parse_ranked_response("The sign is most likely Stop, possibly Yield.", &cat, 10),
        vec!["stop", "yield"]
    );
}

#[test]
fn drops_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let cat = toy_catalog(dir.path());
    assert_eq!(
        parse_ranked_response("1. stop\n2. stop\n3. yield", &cat, 10),
        vec!["stop", "yield"]
    );
}

#[test]
fn parser_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let cat = catalog(
        dir.path(),
        &[("limit_30", "Speed limit 30"), ("limit_3", "Speed limit 3"), ("stop", "Stop")],
    );
    // Preamble mentioning a class is ignored once the numbered list matches.
    let raw = "Compared with stop signs, this is:\n1. **limit_30**\n2) `limit_3`\n3: stop.";
    assert_eq!(parse_ranked_response(raw, &cat, 10), vec!["limit_30", "limit_3", "stop"]);
    // Identifier boundaries: limit_30 must not also yield limit_3.
    assert_eq!(parse_ranked_response("answer: limit_30", &cat, 10), vec!["limit_30"]);
    assert_eq!(parse_ranked_response("SPEED LIMIT 30 or speed limit 3", &cat, 10), vec!["limit_30", "limit_3"]);
    // Truncation at k.
    assert_eq!(parse_ranked_response("1. stop\n2. limit_3\n3. limit_30", &cat, 2), vec!["stop", "limit_3"]);
    assert!(parse_ranked_response("I cannot tell.", &cat, 10).is_empty());
    assert!(parse_ranked_response("", &cat, 10).is_empty());
    assert!(parse_ranked_response("stopping is required", &cat, 10).is_empty());
}

#[test]
fn variant_names_round_trip() {
    for v in Variant::ALL {
        assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        assert_eq!(serde_json::to_string(&v).unwrap(), format!("\"{}\"", v.as_str()));
    }
    assert!("nope".parse::<Variant>().is_err());
    assert!(Variant::BaselineO < Variant::Baseline && Variant::Baseline < Variant::Full);
}

fn noisy_response(catalog_ids: Vec<String>) -> impl Strategy<Value = String> {
    let ids = catalog_ids.clone();
    let token = prop_oneof![
        proptest::sample::select(ids),
        proptest::sample::select(vec!["1.", "2)", "3:", "\n", " ", "**", "Stop", "YIELD", "limit", "_", "30", "x", "é"])
            .prop_map(String::from),
        "[ -~]{0,6}",
    ];
    proptest::collection::vec(token, 0..30).prop_map(|t| t.join(""))
}

proptest! {
    #[test]
    fn parsed_lists_are_in_catalog_and_unique(
        raw in noisy_response(vec!["stop".into(), "yield".into(), "limit_30".into(), "limit_3".into()]),
        k in 1usize..12,
    ) {
        let dir = tempfile::tempdir().unwrap();
        let cat = catalog(dir.path(), &[("stop", "Stop"), ("yield", "Yield"), ("limit_30", "Speed limit 30"), ("limit_3", "Speed limit 3")]);
        let out = parse_ranked_response(&raw, &cat, k);
        prop_assert!(out.len() <= k);
        let mut seen = std::collections::HashSet::new();
        for id in &out {
            prop_assert!(cat.contains(id));
            prop_assert!(seen.insert(id.clone()));
        }
    }
}
