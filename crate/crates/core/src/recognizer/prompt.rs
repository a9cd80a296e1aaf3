use std::fmt::Write as _;

use crate::dataset::ClassCatalog;
use crate::description::DescriptionSet;

use super::RecognizerError;

/// Query for the description-conditioned strategy; `{k}` is the list length.
pub const DEFAULT_QUERY: &str = "Identify this traffic sign using the class descriptions above. Answer with a numbered list of the {k} most likely class ids, most likely first, and nothing else.";

/// Query for the crop-only strategy.
pub const BASELINE_QUERY: &str = "Identify this traffic sign using the class list above. Answer with a numbered list of the {k} most likely class ids, most likely first, and nothing else.";

/// Query for the whole-road-image strategy.
pub const SCENE_QUERY: &str = "Identify the traffic sign shown in this road image using the class list above. Answer with a numbered list of the {k} most likely class ids, most likely first, and nothing else.";

fn closing_instruction(query: &str, k: usize) -> String {
    let noun = if k == 1 { "class id" } else { "class ids" };
    format!(
        "{}\nOutput exactly {k} {noun}, one per numbered line.\n",
        query.replace("{k}", &k.to_string())
    )
}

/// Every class description in catalog order, each headed by its class id,
/// followed by the query and the list-format instruction.
pub fn build_recognition_prompt(
    descriptions: &DescriptionSet,
    catalog: &ClassCatalog,
    query: &str,
    k: usize,
) -> Result<String, RecognizerError> {
    if k == 0 {
        return Err(RecognizerError::InvalidK);
    }
    let missing = descriptions.missing_for(catalog);
    if !missing.is_empty() {
        return Err(RecognizerError::IncompleteDescriptions(missing));
    }
    let mut out = format!(
        "Reference descriptions of {} traffic sign classes follow. Each block starts with its class id.\n\n",
        catalog.len()
    );
    for entry in catalog.entries() {
        let d = descriptions.get(&entry.class_id).expect("completeness checked");
        writeln!(
            out,
            "### class_id: {} ({})\n{}\n",
            entry.class_id,
            entry.display_name,
            d.text.trim()
        )
        .unwrap();
    }
    out.push_str(&closing_instruction(query, k));
    Ok(out)
}

/// Class vocabulary only (ids and display names), no descriptions.
pub fn build_baseline_prompt(catalog: &ClassCatalog, query: &str, k: usize) -> Result<String, RecognizerError> {
    if k == 0 {
        return Err(RecognizerError::InvalidK);
    }
    let mut out = format!(
        "Candidate traffic sign classes ({}), listed as class id: name.\n",
        catalog.len()
    );
    for entry in catalog.entries() {
        writeln!(out, "- {}: {}", entry.class_id, entry.display_name).unwrap();
    }
    out.push('\n');
    out.push_str(&closing_instruction(query, k));
    Ok(out)
}
