//! Deterministic prompt rendering.
//!
//! All wording lives in `templates/prompts.txt`, a versioned asset compiled
//! into the crate. Templates are split into blank-line separated chunks; a
//! chunk consisting of a single placeholder that renders empty is dropped, so
//! optional blocks leave no stray blank lines. Substitution is single pass:
//! user text containing `{{...}}` is never expanded.

use std::collections::HashMap;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::outline::{BulletId, GroundingGroup};

const TEMPLATE_SOURCE: &str = include_str!("../templates/prompts.txt");

struct TemplateSet {
    version: String,
    templates: HashMap<String, String>,
}

fn templates() -> &'static TemplateSet {
    static SET: OnceLock<TemplateSet> = OnceLock::new();
    SET.get_or_init(|| parse_templates(TEMPLATE_SOURCE))
}

fn parse_templates(src: &str) -> TemplateSet {
    let mut version = String::new();
    let mut templates = HashMap::new();
    let mut current: Option<(String, Vec<&str>)> = None;
    for line in src.lines() {
        if let Some(name) = line
            .strip_prefix("=== ")
            .and_then(|l| l.strip_suffix(" ==="))
        {
            if let Some((n, body)) = current.take() {
                templates.insert(n, body.join("\n").trim_end().to_string());
            }
            current = Some((name.to_string(), Vec::new()));
        } else if let Some((_, body)) = current.as_mut() {
            body.push(line);
        } else if let Some(v) = line.strip_prefix("version:") {
            version = v.trim().to_string();
        }
    }
    if let Some((n, body)) = current {
        templates.insert(n, body.join("\n").trim_end().to_string());
    }
    TemplateSet { version, templates }
}

/// Version of the compiled template asset; stored alongside every history
/// record so a prompt can be re-rendered exactly.
pub fn template_version() -> &'static str {
    &templates().version
}

fn template(name: &str) -> &'static str {
    templates()
        .templates
        .get(name)
        .map(String::as_str)
        .unwrap_or_else(|| panic!("missing prompt template `{name}`"))
}

fn render(name: &str, vars: &[(&str, &str)]) -> String {
    let chunks: Vec<String> = template(name)
        .split("\n\n")
        .filter_map(|chunk| {
            if let Some(key) = chunk.strip_prefix("{{").and_then(|c| c.strip_suffix("}}")) {
                if !key.contains("}}") {
                    let value = lookup(vars, key);
                    return (!value.is_empty()).then(|| value.to_string());
                }
            }
            Some(substitute(chunk, vars))
        })
        .collect();
    chunks.join("\n\n")
}

fn lookup<'a>(vars: &[(&str, &'a str)], key: &str) -> &'a str {
    vars.iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .unwrap_or_else(|| panic!("no value for placeholder `{key}`"))
}

fn substitute(text: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) => {
                out.push_str(lookup(vars, &after[..end]));
                rest = &after[end + 2..];
            }
            None => {
                out.push_str(&rest[start..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("bullet quota must be 1, 2 or 3 (got {0})")]
    Quota(usize),
    #[error("text to modify is empty")]
    EmptyText,
    #[error("custom modification requires instructions")]
    MissingInstructions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionKind {
    Introduction,
    Methods,
    Results,
    Conclusion,
    Custom,
}

impl SectionKind {
    pub const INITIAL: [SectionKind; 4] = [
        SectionKind::Introduction,
        SectionKind::Methods,
        SectionKind::Results,
        SectionKind::Conclusion,
    ];

    pub fn default_header(self) -> &'static str {
        match self {
            SectionKind::Introduction => "Introduction",
            SectionKind::Methods => "Methods",
            SectionKind::Results => "Results",
            SectionKind::Conclusion => "Conclusion",
            SectionKind::Custom => "",
        }
    }
}

/// Editable per-section instructions. The four initial sections start from
/// fixed guideline strings; added sections start empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionGuidelines {
    pub section_kind: SectionKind,
    pub text: String,
}

impl SectionGuidelines {
    pub fn default_for(kind: SectionKind) -> Self {
        let text = match kind {
            SectionKind::Introduction => {
                "-Present hook (e.g., interesting fact, quote, promise of change in knowledge, \
                 illustrating example of the topic). If context allows, visual or sensory elements \
                 are helpful anchors.-Provide high-level description of problem being solved.\
                 -Explain why work is interesting and a solution to the problem matters.\
                 -Do not repeat information from prior blogpost sections."
            }
            SectionKind::Methods => {
                "-Focus on methods and do NOT discuss results.\
                 -Do not repeat information from prior blogpost sections."
            }
            SectionKind::Results => {
                "-State key takeaway.-Discuss up to 3 most interesting aspects of work.\
                 -Do not repeat information from prior blogpost sections."
            }
            SectionKind::Conclusion => {
                "-Restate key takeaway in new way.-Present future work ideas. [optional]\
                 -Loop back to hook. [optional]"
            }
            SectionKind::Custom => "",
        };
        SectionGuidelines {
            section_kind: kind,
            text: text.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthChoice {
    #[default]
    Auto,
    OneSentence,
    OneParagraph,
    FewParagraphs,
}

impl LengthChoice {
    fn explicit(self) -> Option<&'static str> {
        match self {
            LengthChoice::Auto => None,
            LengthChoice::OneSentence => Some("exactly one sentence long"),
            LengthChoice::OneParagraph => Some("one paragraph long"),
            LengthChoice::FewParagraphs => Some("a few paragraphs long"),
        }
    }
}

pub const GENERATION_AUTO_LENGTH: &str =
    "around 125 to 250 words long, in one to three paragraphs";

/// A length choice resolved to the text that goes into a prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthDirective {
    pub kind: LengthChoice,
    pub rendered: String,
}

impl LengthDirective {
    pub fn for_generation(kind: LengthChoice) -> Self {
        LengthDirective {
            kind,
            rendered: kind.explicit().unwrap_or(GENERATION_AUTO_LENGTH).to_string(),
        }
    }

    /// "auto" means something different for each modification kind.
    pub fn for_modification(kind: LengthChoice, modification: ModificationKind) -> Self {
        LengthDirective {
            kind,
            rendered: kind
                .explicit()
                .unwrap_or_else(|| modification.auto_length())
                .to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModificationKind {
    Expand,
    Condense,
    SimplerTerms,
    LessDramatic,
    MoreDramatic,
    Custom,
}

pub const LENGTH_TWICE: &str = "twice the length that it currently is";
pub const LENGTH_HALF: &str = "half the length that it currently is";
pub const LENGTH_SAME: &str =
    "about the same length that it currently is (no more than 25 words longer or shorter)";
pub const LENGTH_AS_INSTRUCTED: &str = "whatever length the instructions call for";

impl ModificationKind {
    pub const PRESETS: [ModificationKind; 5] = [
        ModificationKind::Expand,
        ModificationKind::Condense,
        ModificationKind::SimplerTerms,
        ModificationKind::LessDramatic,
        ModificationKind::MoreDramatic,
    ];

    pub fn auto_length(self) -> &'static str {
        match self {
            ModificationKind::Expand => LENGTH_TWICE,
            ModificationKind::Condense => LENGTH_HALF,
            ModificationKind::SimplerTerms
            | ModificationKind::LessDramatic
            | ModificationKind::MoreDramatic => LENGTH_SAME,
            ModificationKind::Custom => LENGTH_AS_INSTRUCTED,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModificationKind::Expand => "expand",
            ModificationKind::Condense => "condense",
            ModificationKind::SimplerTerms => "simpler_terms",
            ModificationKind::LessDramatic => "less_dramatic",
            ModificationKind::MoreDramatic => "more_dramatic",
            ModificationKind::Custom => "custom",
        }
    }

    fn clause(self) -> &'static str {
        template(&format!("clause.{}", self.as_str()))
    }
}

impl fmt::Display for ModificationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn spell(n: usize) -> &'static str {
    match n {
        1 => "one",
        2 => "two",
        3 => "three",
        _ => unreachable!("quota checked by caller"),
    }
}

pub fn outline_prompt(paragraph: &str, quota: usize) -> String {
    try_outline_prompt(paragraph, quota).expect("bullet quota in 1..=3")
}

pub fn try_outline_prompt(paragraph: &str, quota: usize) -> Result<String, PromptError> {
    if !(1..=3).contains(&quota) {
        return Err(PromptError::Quota(quota));
    }
    Ok(render(
        "outline",
        &[("count", spell(quota)), ("paragraph", paragraph)],
    ))
}

pub fn selection_prompt(bullets: &[(&BulletId, &str)], section_header: &str, k: usize) -> String {
    let listing = bullets
        .iter()
        .map(|(id, text)| format!("[{id}] {text}"))
        .collect::<Vec<_>>()
        .join("\n");
    let k = k.max(1).to_string();
    render(
        "selection",
        &[("bullets", &listing), ("header", section_header), ("k", &k)],
    )
}

fn render_pairs(grounding: &[GroundingGroup]) -> String {
    grounding
        .iter()
        .map(|g| {
            let mut s = format!("Paragraph [{}]:\n{}", g.para_id, g.paragraph);
            if !g.bullets.is_empty() {
                s.push_str("\nSelected bullet points:");
                for b in &g.bullets {
                    s.push_str("\n- ");
                    s.push_str(b);
                }
            }
            s
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn block(name: &str, key: &str, value: &str) -> String {
    if value.trim().is_empty() {
        String::new()
    } else {
        render(name, &[(key, value)])
    }
}

/// Everything a section generation prompt is built from.
#[derive(Debug, Clone, Copy)]
pub struct GenerationContext<'a> {
    pub title: &'a str,
    pub header: &'a str,
    /// Earlier sections of the post; `None` when the context toggle is off.
    pub prior_sections: Option<&'a str>,
    pub grounding: &'a [GroundingGroup],
    pub custom_bullets: &'a str,
    pub instructions: &'a str,
    pub length: LengthChoice,
    pub starting_text: &'a str,
}

/// Which of the generation template variants a context selects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenerationVariant {
    GroundedWithCustom,
    Grounded,
    CustomOnly,
    Bare,
}

impl GenerationContext<'_> {
    pub fn variant(&self) -> GenerationVariant {
        let grounded = !self.grounding.is_empty();
        let custom = [self.custom_bullets, self.instructions, self.starting_text]
            .iter()
            .any(|s| !s.trim().is_empty());
        match (grounded, custom) {
            (true, true) => GenerationVariant::GroundedWithCustom,
            (true, false) => GenerationVariant::Grounded,
            (false, true) => GenerationVariant::CustomOnly,
            (false, false) => GenerationVariant::Bare,
        }
    }
}

pub fn generation_prompt(ctx: &GenerationContext<'_>) -> String {
    let lead = match ctx.variant() {
        GenerationVariant::GroundedWithCustom => "lead.grounded_custom",
        GenerationVariant::Grounded => "lead.grounded",
        GenerationVariant::CustomOnly => "lead.custom",
        GenerationVariant::Bare => "lead.bare",
    };
    let context_block = block("block.context", "prior", ctx.prior_sections.unwrap_or(""));
    let grounding_block = if ctx.grounding.is_empty() {
        String::new()
    } else {
        render("block.grounding", &[("pairs", &render_pairs(ctx.grounding))])
    };
    let custom_bullets_block = block("block.custom_bullets", "custom_bullets", ctx.custom_bullets);
    let instructions_block = block("block.instructions", "instructions", ctx.instructions);
    let starting_block = block("block.starting", "starting", ctx.starting_text);
    let length = LengthDirective::for_generation(ctx.length);
    let length_line = render("length", &[("length", &length.rendered)]);
    render(
        "generation",
        &[
            ("header", ctx.header),
            ("title", ctx.title),
            ("lead", template(lead)),
            ("context_block", &context_block),
            ("grounding_block", &grounding_block),
            ("custom_bullets_block", &custom_bullets_block),
            ("instructions_block", &instructions_block),
            ("length_line", &length_line),
            ("starting_block", &starting_block),
        ],
    )
}

#[derive(Debug, Clone, Copy)]
pub struct ModificationContext<'a> {
    pub title: &'a str,
    pub kind: ModificationKind,
    pub text: &'a str,
    pub length: LengthChoice,
    /// Selected content; empty when the grounding toggle is off.
    pub grounding: &'a [GroundingGroup],
    /// Earlier sections of the post; `None` when the context toggle is off.
    pub prior_sections: Option<&'a str>,
    pub instructions: &'a str,
}

pub fn modification_prompt(ctx: &ModificationContext<'_>) -> Result<String, PromptError> {
    if ctx.text.trim().is_empty() {
        return Err(PromptError::EmptyText);
    }
    let custom = ctx.kind == ModificationKind::Custom;
    if custom && ctx.instructions.trim().is_empty() {
        return Err(PromptError::MissingInstructions);
    }
    let context_block = block("block.context", "prior", ctx.prior_sections.unwrap_or(""));
    let grounding_block = if ctx.grounding.is_empty() {
        String::new()
    } else {
        render(
            "modification.grounding",
            &[("pairs", &render_pairs(ctx.grounding))],
        )
    };
    let instructions_block = block(
        if custom {
            "modification.custom_instructions"
        } else {
            "modification.instructions"
        },
        "instructions",
        ctx.instructions,
    );
    let length = LengthDirective::for_modification(ctx.length, ctx.kind);
    let length_line = render("length", &[("length", &length.rendered)]);
    Ok(render(
        "modification",
        &[
            ("title", ctx.title),
            ("clause", ctx.kind.clause()),
            ("context_block", &context_block),
            ("grounding_block", &grounding_block),
            ("instructions_block", &instructions_block),
            ("length_line", &length_line),
            ("text", ctx.text),
        ],
    ))
}
