//! Evaluation prompt templates with `{{name}}` placeholders.

use std::fmt::Write as _;

use thiserror::Error;

use crate::dataset::{Example, ExampleFields, ScoreRange, Task};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("unresolved placeholder `{{{{{0}}}}}`")]
    UnresolvedPlaceholder(String),
    #[error("unterminated placeholder starting at byte {0}")]
    Unterminated(usize),
    #[error("template must end with the line `Score:`")]
    MissingScoreLine,
    #[error("template is for task {template} but example is {example}")]
    TaskMismatch { template: Task, example: Task },
}

pub const MIN_SCORE: &str = "min score";
pub const MAX_SCORE: &str = "max score";

const MTQE_TEMPLATE: &str = "\
Please analyze the given source and translated sentences and output a translation quality score on a continuous scale ranging from {{min score}} to {{max score}}.
Translation quality should be evaluated based on both fluency and adequacy.
A score close to {{min score}} indicates a low quality translation, while a score close to {{max score}} indicates a high quality translation.
Do not provide any explanations or text apart from the score.

{{source language}} Sentence: {{src_i}}
{{target language}} Sentence: {{hyp_i}}
Score:";

const GECQE_TEMPLATE: &str = "\
Please analyze the given original and corrected sentences and output a grammatical error correction quality score on a integer scale ranging from {{min score}} to {{max score}}.
A score close to {{min score}} indicates a low quality correction , while a score close to {{max score}} indicates a high quality correction.
Do not provide any explanations or text apart from the score.

Original sentence: {{org_i}}
Corrected sentence: {{cor_i}}
Score:";

const LCP_TEMPLATE: &str = "\
Please analyze the given sentence and word included in the sentence and output a complexity score on a integer scale ranging from {{min score}} to {{max score}}.
The complexity score should be evaluated based on the difficulty of the word included in the sentence.
A score closer to {{min score}} indicates that the word is easy, while a score closer to {{max score}} indicates that the word is difficult.
Do not provide any explanations or text apart from the score.

Sentence: {{sent_i}}
Word: {{word_i}}
Score:";

/// Placeholder names each task can resolve from an example.
fn field_placeholders(task: Task) -> &'static [&'static str] {
    match task {
        Task::Mtqe => &["source language", "target language", "src_i", "hyp_i"],
        Task::Gecqe => &["org_i", "cor_i"],
        Task::Lcp => &["sent_i", "word_i"],
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Placeholder(String),
}

/// A parsed, validated prompt template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    task: Task,
    segments: Vec<Segment>,
}

impl PromptTemplate {
    /// The built-in zero-shot template for `task`.
    pub fn builtin(task: Task) -> Self {
        let body = match task {
            Task::Mtqe => MTQE_TEMPLATE,
            Task::Gecqe => GECQE_TEMPLATE,
            Task::Lcp => LCP_TEMPLATE,
        };
        Self::parse(task, body).expect("built-in templates are valid")
    }

    /// Parses a template body, checking every placeholder is resolvable for
    /// `task` and that the body ends with a `Score:` line. Trailing
    /// whitespace after `Score:` is dropped.
    pub fn parse(task: Task, body: &str) -> Result<Self, PromptError> {
        let body = body.trim_end();
        let last_line = body.rsplit('\n').next().unwrap_or("");
        if last_line.trim_end_matches('\r') != "Score:" {
            return Err(PromptError::MissingScoreLine);
        }

        let allowed = field_placeholders(task);
        let mut segments = Vec::new();
        let mut rest = body;
        let mut offset = 0;
        while let Some(open) = rest.find("{{") {
            if open > 0 {
                segments.push(Segment::Literal(rest[..open].to_string()));
            }
            let after = &rest[open + 2..];
            let close = after
                .find("}}")
                .ok_or(PromptError::Unterminated(offset + open))?;
            let name = after[..close].trim();
            if name != MIN_SCORE && name != MAX_SCORE && !allowed.contains(&name) {
                return Err(PromptError::UnresolvedPlaceholder(name.to_string()));
            }
            segments.push(Segment::Placeholder(name.to_string()));
            let consumed = open + 2 + close + 2;
            offset += consumed;
            rest = &rest[consumed..];
        }
        if !rest.is_empty() {
            segments.push(Segment::Literal(rest.to_string()));
        }
        Ok(Self { task, segments })
    }

    pub fn task(&self) -> Task {
        self.task
    }

    /// Placeholder names in order of appearance.
    pub fn placeholders(&self) -> impl Iterator<Item = &str> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Placeholder(name) => Some(name.as_str()),
            Segment::Literal(_) => None,
        })
    }

    pub fn render(&self, example: &Example, range: ScoreRange) -> Result<String, PromptError> {
        if example.task() != self.task {
            return Err(PromptError::TaskMismatch {
                template: self.task,
                example: example.task(),
            });
        }
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Literal(s) => out.push_str(s),
                Segment::Placeholder(name) => match name.as_str() {
                    MIN_SCORE => write!(out, "{}", range.min()).unwrap(),
                    MAX_SCORE => write!(out, "{}", range.max()).unwrap(),
                    other => out.push_str(
                        resolve_field(&example.fields, other)
                            .ok_or_else(|| PromptError::UnresolvedPlaceholder(other.to_string()))?,
                    ),
                },
            }
        }
        Ok(out)
    }
}

fn resolve_field<'a>(fields: &'a ExampleFields, name: &str) -> Option<&'a str> {
    match (fields, name) {
        (ExampleFields::Mtqe { source_lang, .. }, "source language") => Some(source_lang),
        (ExampleFields::Mtqe { target_lang, .. }, "target language") => Some(target_lang),
        (ExampleFields::Mtqe { source, .. }, "src_i") => Some(source),
        (ExampleFields::Mtqe { hypothesis, .. }, "hyp_i") => Some(hypothesis),
        (ExampleFields::Gecqe { original, .. }, "org_i") => Some(original),
        (ExampleFields::Gecqe { corrected, .. }, "cor_i") => Some(corrected),
        (ExampleFields::Lcp { sentence, .. }, "sent_i") => Some(sentence),
        (ExampleFields::Lcp { word, .. }, "word_i") => Some(word),
        _ => None,
    }
}

/// Renders `example` with `template`; shorthand for [`PromptTemplate::render`].
pub fn render_prompt(
    template: &PromptTemplate,
    example: &Example,
    range: ScoreRange,
) -> Result<String, PromptError> {
    template.render(example, range)
}
