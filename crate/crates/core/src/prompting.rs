//! Prompt construction for the three translation modes.
//!
//! Every prompt opens with a system instruction and ends with a user message
//! holding the test source. Few-shot and style prompts carry their
//! demonstrations in a single assistant message between the two; zero-shot
//! prompts send no assistant message at all.
//!
//! Templates are plain strings with `{name}` placeholders. Besides rendering,
//! a template can parse its own output back (source sentence, demonstrations),
//! which is what the offline mock backends rely on.

use std::fs;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{ParallelPair, Sentence};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template field `{field}` uses unbound placeholder {{{name}}}")]
    Unbound { field: &'static str, name: String },
    #[error("template field `{field}` must contain {{{name}}} exactly once")]
    Missing {
        field: &'static str,
        name: &'static str,
    },
    #[error("template field `{0}` is empty")]
    Empty(&'static str),
    #[error("cannot read template file: {0}")]
    Load(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("at least one demonstration is required")]
    EmptyDemos,
    #[error("empty source sentence")]
    EmptySource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "k", rename_all = "snake_case")]
pub enum PromptMode {
    ZeroShot,
    FewShot(usize),
    Style(usize),
}

impl PromptMode {
    pub fn k(&self) -> usize {
        match *self {
            PromptMode::ZeroShot => 0,
            PromptMode::FewShot(k) | PromptMode::Style(k) => k,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PromptMode::ZeroShot => "zero-shot",
            PromptMode::FewShot(_) => "few-shot",
            PromptMode::Style(_) => "style",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub messages: Vec<Message>,
    pub mode: PromptMode,
    /// Ids of the demonstrations embedded, in retrieval rank order.
    pub demo_ids: Vec<usize>,
}

/// Message in the chat-completions wire shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireMessage {
    pub role: String,
    pub content: String,
}

pub fn render_wire(prompt: &Prompt) -> Vec<WireMessage> {
    prompt
        .messages
        .iter()
        .map(|m| WireMessage {
            role: m.role.as_str().to_string(),
            content: m.content.clone(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LanguagePair {
    pub source: String,
    pub target: String,
}

impl LanguagePair {
    pub fn new(source: impl Into<String>, target: impl Into<String>) -> Self {
        LanguagePair {
            source: source.into(),
            target: target.into(),
        }
    }

    pub fn de_en() -> Self {
        Self::new("German", "English")
    }

    pub fn en_de() -> Self {
        Self::new("English", "German")
    }

    fn vars(&self) -> [(&'static str, &str); 2] {
        [("source_lang", &self.source), ("target_lang", &self.target)]
    }
}

/// Where the highest-ranked demonstration is placed inside the block.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemoOrder {
    /// Highest-ranked demonstration rendered last, adjacent to the test source.
    #[default]
    NearestLast,
    NearestFirst,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptTemplate {
    pub system: String,
    pub user: String,
    pub few_shot_block: String,
    pub demo_pair: String,
    pub demo_separator: String,
    pub style_instruction: String,
    pub style_block: String,
    pub style_sample: String,
    pub sample_separator: String,
    pub style_draft: String,
    /// Add the zero-shot draft to style prompts as an extra assistant message.
    pub include_draft: bool,
    pub demo_order: DemoOrder,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate {
            system: "You are a professional translator. Translate the {source_lang} text \
                     given by the user into {target_lang}. Reply with the {target_lang} \
                     translation only."
                .into(),
            user: "{source}".into(),
            few_shot_block: "Example translations from the same domain:\n\n{demos}".into(),
            demo_pair: "{source_lang}: {demo_source}\n{target_lang}: {demo_target}".into(),
            demo_separator: "\n\n".into(),
            style_instruction: "The following {target_lang} sentences come from the same \
                                domain as the text to translate. Match their writing style, \
                                terminology and phrasing in your translation."
                .into(),
            style_block: "{style_instruction}\n\n{samples}".into(),
            style_sample: "{sample}".into(),
            sample_separator: "\n".into(),
            style_draft: "Draft {target_lang} translation: {draft}".into(),
            include_draft: false,
            demo_order: DemoOrder::NearestLast,
        }
    }
}

static PLACEHOLDER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{([a-z_]+)\}").unwrap());

/// Substitutes `{name}` placeholders. Every placeholder in `template` must be
/// bound by `vars`.
fn render(
    field: &'static str,
    template: &str,
    vars: &[(&str, &str)],
) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(template.len());
    let mut last = 0;
    for caps in PLACEHOLDER.captures_iter(template) {
        let m = caps.get(0).unwrap();
        let name = &caps[1];
        let value = vars
            .iter()
            .find(|(k, _)| *k == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| TemplateError::Unbound {
                field,
                name: name.to_string(),
            })?;
        out.push_str(&template[last..m.start()]);
        out.push_str(value);
        last = m.end();
    }
    out.push_str(&template[last..]);
    Ok(out)
}

fn count_placeholder(template: &str, name: &str) -> usize {
    PLACEHOLDER
        .captures_iter(template)
        .filter(|c| &c[1] == name)
        .count()
}

fn require_once(
    field: &'static str,
    template: &str,
    name: &'static str,
) -> Result<(), TemplateError> {
    if count_placeholder(template, name) == 1 {
        Ok(())
    } else {
        Err(TemplateError::Missing { field, name })
    }
}

fn require_present(
    field: &'static str,
    template: &str,
    name: &'static str,
) -> Result<(), TemplateError> {
    if count_placeholder(template, name) >= 1 {
        Ok(())
    } else {
        Err(TemplateError::Missing { field, name })
    }
}

/// Splits a template at its single `{name}` placeholder, rendering both halves.
fn split_at(
    field: &'static str,
    template: &str,
    name: &'static str,
    vars: &[(&str, &str)],
) -> Result<(String, String), TemplateError> {
    let marker = format!("{{{name}}}");
    let (pre, post) = template
        .split_once(&marker)
        .ok_or(TemplateError::Missing { field, name })?;
    Ok((render(field, pre, vars)?, render(field, post, vars)?))
}

/// One demonstration recovered from a rendered block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedDemo {
    /// `None` for style samples, which carry no source side.
    pub source: Option<String>,
    pub target: String,
}

impl PromptTemplate {
    pub fn from_path(path: &Path) -> Result<Self, TemplateError> {
        let text = fs::read_to_string(path).map_err(|e| TemplateError::Load(e.to_string()))?;
        let tpl: PromptTemplate = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => {
                serde_json::from_str(&text).map_err(|e| TemplateError::Load(e.to_string()))?
            }
            _ => toml::from_str(&text).map_err(|e| TemplateError::Load(e.to_string()))?,
        };
        tpl.validate()?;
        Ok(tpl)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("template serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// Checks that every field is non-empty, carries its required
    /// placeholders, and uses no placeholder it cannot bind.
    pub fn validate(&self) -> Result<(), TemplateError> {
        let langs = LanguagePair::new("S", "T");
        let lv = langs.vars();
        let fields: [(&'static str, &str, &[&str]); 9] = [
            ("system", &self.system, &[]),
            ("user", &self.user, &["source"]),
            ("few_shot_block", &self.few_shot_block, &["demos"]),
            (
                "demo_pair",
                &self.demo_pair,
                &["demo_source", "demo_target"],
            ),
            ("style_instruction", &self.style_instruction, &[]),
            (
                "style_block",
                &self.style_block,
                &["style_instruction", "samples"],
            ),
            ("style_sample", &self.style_sample, &["sample"]),
            ("style_draft", &self.style_draft, &["draft"]),
            ("demo_separator", &self.demo_separator, &[]),
        ];
        for (field, template, extra) in fields {
            if template.is_empty() {
                return Err(TemplateError::Empty(field));
            }
            let mut vars: Vec<(&str, &str)> = lv.to_vec();
            vars.extend(extra.iter().map(|n| (*n, "")));
            render(field, template, &vars)?;
        }
        if self.sample_separator.is_empty() {
            return Err(TemplateError::Empty("sample_separator"));
        }
        require_present("system", &self.system, "source_lang")?;
        require_present("system", &self.system, "target_lang")?;
        require_once("user", &self.user, "source")?;
        require_once("few_shot_block", &self.few_shot_block, "demos")?;
        require_once("demo_pair", &self.demo_pair, "demo_source")?;
        require_once("demo_pair", &self.demo_pair, "demo_target")?;
        if self.demo_pair.find("{demo_source}") > self.demo_pair.find("{demo_target}") {
            return Err(TemplateError::Missing {
                field: "demo_pair",
                name: "demo_source",
            });
        }
        require_once("style_block", &self.style_block, "style_instruction")?;
        require_once("style_block", &self.style_block, "samples")?;
        require_once("style_sample", &self.style_sample, "sample")?;
        require_once("style_draft", &self.style_draft, "draft")?;
        Ok(())
    }

    fn system_message(&self, langs: &LanguagePair) -> Result<Message, TemplateError> {
        Ok(Message {
            role: Role::System,
            content: render("system", &self.system, &langs.vars())?,
        })
    }

    fn user_message(&self, src: &Sentence, langs: &LanguagePair) -> Result<Message, TemplateError> {
        let [a, b] = langs.vars();
        Ok(Message {
            role: Role::User,
            content: render("user", &self.user, &[a, b, ("source", &src.text)])?,
        })
    }

    fn in_render_order<T>(&self, mut items: Vec<T>) -> Vec<T> {
        if self.demo_order == DemoOrder::NearestLast {
            items.reverse();
        }
        items
    }

    fn render_demo_block(
        &self,
        demos: &[ParallelPair],
        langs: &LanguagePair,
    ) -> Result<String, TemplateError> {
        let [a, b] = langs.vars();
        let rendered = demos
            .iter()
            .map(|d| {
                render(
                    "demo_pair",
                    &self.demo_pair,
                    &[
                        a,
                        b,
                        ("demo_source", &d.src.text),
                        ("demo_target", &d.tgt.text),
                    ],
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        let joined = self.in_render_order(rendered).join(&self.demo_separator);
        render(
            "few_shot_block",
            &self.few_shot_block,
            &[a, b, ("demos", &joined)],
        )
    }

    fn render_style_block(
        &self,
        samples: &[Sentence],
        langs: &LanguagePair,
    ) -> Result<String, TemplateError> {
        let [a, b] = langs.vars();
        let rendered = samples
            .iter()
            .map(|s| {
                render(
                    "style_sample",
                    &self.style_sample,
                    &[a, b, ("sample", &s.text)],
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        let joined = self.in_render_order(rendered).join(&self.sample_separator);
        let instruction = render("style_instruction", &self.style_instruction, &[a, b])?;
        render(
            "style_block",
            &self.style_block,
            &[
                a,
                b,
                ("style_instruction", &instruction),
                ("samples", &joined),
            ],
        )
    }

    /// Recovers the test source from a rendered user message.
    pub fn extract_source(&self, langs: &LanguagePair, user_content: &str) -> Option<String> {
        let (pre, post) = split_at("user", &self.user, "source", &langs.vars()).ok()?;
        user_content
            .strip_prefix(&pre)?
            .strip_suffix(&post)
            .map(str::to_string)
    }

    /// Parses a rendered few-shot block back into demonstrations, in retrieval
    /// rank order.
    pub fn parse_demo_block(&self, langs: &LanguagePair, content: &str) -> Option<Vec<ParsedDemo>> {
        let lv = langs.vars();
        let (pre, post) = split_at("few_shot_block", &self.few_shot_block, "demos", &lv).ok()?;
        let inner = content.strip_prefix(&pre)?.strip_suffix(&post)?;
        let (p0, rest) = self.demo_pair.split_once("{demo_source}")?;
        let (p1, p2) = rest.split_once("{demo_target}")?;
        let (p0, p1, p2) = (
            render("demo_pair", p0, &lv).ok()?,
            render("demo_pair", p1, &lv).ok()?,
            render("demo_pair", p2, &lv).ok()?,
        );
        let demos = inner
            .split(&self.demo_separator)
            .map(|piece| {
                let body = piece.strip_prefix(&p0)?.strip_suffix(&p2)?;
                let (src, tgt) = body.split_once(&p1)?;
                Some(ParsedDemo {
                    source: Some(src.to_string()),
                    target: tgt.to_string(),
                })
            })
            .collect::<Option<Vec<_>>>()?;
        Some(self.in_render_order(demos))
    }

    /// Parses a rendered style block back into its target samples, in
    /// retrieval rank order.
    pub fn parse_style_block(
        &self,
        langs: &LanguagePair,
        content: &str,
    ) -> Option<Vec<ParsedDemo>> {
        let [a, b] = langs.vars();
        let instruction = render("style_instruction", &self.style_instruction, &[a, b]).ok()?;
        let (pre, post) = split_at(
            "style_block",
            &self.style_block,
            "samples",
            &[a, b, ("style_instruction", &instruction)],
        )
        .ok()?;
        let inner = content.strip_prefix(&pre)?.strip_suffix(&post)?;
        let (sp, ss) = split_at("style_sample", &self.style_sample, "sample", &[a, b]).ok()?;
        let samples = inner
            .split(&self.sample_separator)
            .map(|piece| {
                let text = piece.strip_prefix(&sp)?.strip_suffix(&ss)?;
                Some(ParsedDemo {
                    source: None,
                    target: text.to_string(),
                })
            })
            .collect::<Option<Vec<_>>>()?;
        Some(self.in_render_order(samples))
    }
}

fn check_source(src: &Sentence) -> Result<(), PromptError> {
    if src.text.trim().is_empty() {
        Err(PromptError::EmptySource)
    } else {
        Ok(())
    }
}

pub fn build_zero_shot(
    src: &Sentence,
    langs: &LanguagePair,
    tpl: &PromptTemplate,
) -> Result<Prompt, PromptError> {
    tpl.validate()?;
    check_source(src)?;
    Ok(Prompt {
        messages: vec![tpl.system_message(langs)?, tpl.user_message(src, langs)?],
        mode: PromptMode::ZeroShot,
        demo_ids: Vec::new(),
    })
}

/// `demos` must be in descending retrieval score order.
pub fn build_few_shot(
    src: &Sentence,
    demos: &[ParallelPair],
    langs: &LanguagePair,
    tpl: &PromptTemplate,
) -> Result<Prompt, PromptError> {
    tpl.validate()?;
    check_source(src)?;
    if demos.is_empty() {
        return Err(PromptError::EmptyDemos);
    }
    let block = tpl.render_demo_block(demos, langs)?;
    Ok(Prompt {
        messages: vec![
            tpl.system_message(langs)?,
            Message {
                role: Role::Assistant,
                content: block,
            },
            tpl.user_message(src, langs)?,
        ],
        mode: PromptMode::FewShot(demos.len()),
        demo_ids: demos.iter().map(ParallelPair::id).collect(),
    })
}

/// `samples` are target-language sentences in descending retrieval score
/// order. `draft` is only rendered when the template enables it.
pub fn build_style(
    src: &Sentence,
    samples: &[Sentence],
    langs: &LanguagePair,
    tpl: &PromptTemplate,
    draft: Option<&str>,
) -> Result<Prompt, PromptError> {
    tpl.validate()?;
    check_source(src)?;
    if samples.is_empty() {
        return Err(PromptError::EmptyDemos);
    }
    let mut messages = vec![
        tpl.system_message(langs)?,
        Message {
            role: Role::Assistant,
            content: tpl.render_style_block(samples, langs)?,
        },
    ];
    if let (true, Some(draft)) = (tpl.include_draft, draft) {
        let [a, b] = langs.vars();
        messages.push(Message {
            role: Role::Assistant,
            content: render("style_draft", &tpl.style_draft, &[a, b, ("draft", draft)])?,
        });
    }
    messages.push(tpl.user_message(src, langs)?);
    Ok(Prompt {
        messages,
        mode: PromptMode::Style(samples.len()),
        demo_ids: samples.iter().map(|s| s.id).collect(),
    })
}
