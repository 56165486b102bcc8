use serde::{Deserialize, Serialize};

use super::{PromptTemplates, Vllm};
use crate::imageops::Image;
use crate::{Error, Result};

/// One question/answer exchange with the vision-language model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VllmAnswer {
    pub question: String,
    pub raw: String,
    pub descriptions: Vec<String>,
}

/// Splits a brief answer such as `"Scratched; discolored."` into normalised
/// descriptions: split on commas, semicolons and newlines, trim whitespace,
/// quotes and trailing punctuation, lowercase, drop empties, deduplicate
/// keeping first occurrence.
pub fn parse_answer(raw: &str) -> Result<Vec<String>> {
    let mut out: Vec<String> = Vec::new();
    for piece in raw.split([',', ';', '\n']) {
        let cleaned = piece
            .trim()
            .trim_matches(|c: char| {
                c.is_whitespace() || matches!(c, '"' | '\'' | '`' | '.' | '!' | '-' | '*' | '•')
            })
            .to_lowercase();
        let cleaned = cleaned.split_whitespace().collect::<Vec<_>>().join(" ");
        if !cleaned.is_empty() && !out.contains(&cleaned) {
            out.push(cleaned);
        }
    }
    if out.is_empty() {
        return Err(Error::Parse {
            raw: raw.to_string(),
        });
    }
    Ok(out)
}

/// Renders the question, asks the model and parses its answer.
pub fn vllm_query(
    vllm: &dyn Vllm,
    templates: &PromptTemplates,
    object_name: &str,
    normal_image: &Image,
    template_id: &str,
) -> Result<VllmAnswer> {
    let question = templates.render(template_id, object_name)?;
    let raw = vllm.ask(object_name, &question, normal_image)?;
    let descriptions = parse_answer(&raw)?;
    Ok(VllmAnswer {
        question,
        raw,
        descriptions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_semicolons_and_case() {
        assert_eq!(
            parse_answer("Scratched; discolored.").unwrap(),
            ["scratched", "discolored"]
        );
    }

    #[test]
    fn parses_the_example_answer_shape() {
        assert_eq!(parse_answer("Cracked, faded").unwrap(), ["cracked", "faded"]);
    }

    #[test]
    fn drops_empties_and_duplicates() {
        assert_eq!(
            parse_answer("\"rust\",, Rust\n- dented \n\n").unwrap(),
            ["rust", "dented"]
        );
    }

    #[test]
    fn collapses_inner_whitespace() {
        assert_eq!(parse_answer("color   shift").unwrap(), ["color shift"]);
    }

    #[test]
    fn empty_answer_is_a_parse_error_with_raw_text() {
        match parse_answer(" ,;. \n") {
            Err(Error::Parse { raw }) => assert_eq!(raw, " ,;. \n"),
            other => panic!("{other:?}"),
        }
    }
}
