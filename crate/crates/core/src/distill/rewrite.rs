use std::collections::HashSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::bounded_map;
use crate::corpus::{exceeds_length, exceeds_ratio, Origin, SegmentPair};
use crate::error::{Error, Result};

pub const NEW_SOURCE: &str = "{new_source_text}";
pub const NEW_TARGET: &str = "{new_target_text}";

const DEFAULT_TEMPLATE: &str = "\
I would like to convert a Standard Arabic text into Egyptian Arabic.
Please generate the Egyptian Arabic version using a neutral, informative
tone with slightly conversational phrasing, similar to the example below.
The output should feel natural, like it's written for a general Egyptian
audience but still accurate and clear. Do not add any commentary; just
return the Egyptian Arabic version.

English:
The economy grew faster than expected last year.

Standard Arabic:
نما الاقتصاد بوتيرة أسرع من المتوقع في العام الماضي.

Egyptian Arabic:
الاقتصاد كبر أسرع من المتوقع السنة اللي فاتت.

English:
{new_source_text}

Standard Arabic:
{new_target_text}

Egyptian Arabic:
";

/// Rewriting prompt with placeholders for the pair being rewritten.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    text: String,
}

impl PromptTemplate {
    pub fn new(text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        for p in [NEW_SOURCE, NEW_TARGET] {
            if !text.contains(p) {
                return Err(Error::Config(format!("prompt template lacks placeholder {p}")));
            }
        }
        Ok(Self { text })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn render(&self, source: &str, draft_target: &str) -> String {
        self.text
            .replace(NEW_SOURCE, source)
            .replace(NEW_TARGET, draft_target)
    }
}

impl Default for PromptTemplate {
    /// One-shot Standard-to-Egyptian Arabic conversion prompt.
    fn default() -> Self {
        Self {
            text: DEFAULT_TEMPLATE.to_string(),
        }
    }
}

/// A service that rewrites a draft target.
pub trait RewriterClient: Sync {
    fn rewrite(
        &self,
        source: &str,
        draft_target: &str,
        template: &PromptTemplate,
        temperature: f64,
        top_p: f64,
    ) -> Result<String>;
}

/// Deterministic stand-in: applies fixed word substitutions to the draft
/// and fails on listed sources.
#[derive(Debug, Clone, Default)]
pub struct MockRewriter {
    pub substitutions: Vec<(String, String)>,
    pub fail_on: HashSet<String>,
}

impl MockRewriter {
    pub fn identity() -> Self {
        Self::default()
    }
}

impl RewriterClient for MockRewriter {
    fn rewrite(&self, source: &str, draft: &str, _: &PromptTemplate, _: f64, _: f64) -> Result<String> {
        if self.fail_on.contains(source) {
            return Err(Error::Rewrite(format!("mock refuses `{source}`")));
        }
        let out = draft
            .split_whitespace()
            .map(|w| {
                self.substitutions
                    .iter()
                    .find(|(from, _)| from == w)
                    .map_or(w, |(_, to)| to.as_str())
            })
            .collect::<Vec<_>>()
            .join(" ");
        Ok(out)
    }
}

#[derive(Serialize)]
struct Request<'a> {
    prompt: &'a str,
    temperature: f64,
    top_p: f64,
}

#[derive(Deserialize)]
struct Reply {
    text: String,
}

/// JSON-over-HTTP rewriter: POST `{prompt, temperature, top_p}`, expect
/// `{text}`. Each call is retried once.
#[derive(Debug, Clone)]
pub struct HttpRewriter {
    pub url: String,
    agent: ureq::Agent,
}

impl HttpRewriter {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            url: url.into(),
            agent,
        }
    }

    fn call(&self, req: &Request<'_>) -> Result<String> {
        let reply: Reply = self
            .agent
            .post(&self.url)
            .send_json(req)
            .and_then(|r| r.into_body().read_json())
            .map_err(|e| Error::Rewrite(e.to_string()))?;
        let text = reply.text.trim().to_string();
        if text.is_empty() {
            return Err(Error::Rewrite("empty rewrite".into()));
        }
        Ok(text)
    }
}

impl RewriterClient for HttpRewriter {
    fn rewrite(
        &self,
        source: &str,
        draft: &str,
        template: &PromptTemplate,
        temperature: f64,
        top_p: f64,
    ) -> Result<String> {
        let prompt = template.render(source, draft);
        let req = Request {
            prompt: &prompt,
            temperature,
            top_p,
        };
        self.call(&req).or_else(|_| self.call(&req))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewriteParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_in_flight: usize,
    pub max_words: usize,
    pub max_length_ratio: f64,
}

impl Default for RewriteParams {
    fn default() -> Self {
        Self {
            temperature: 0.3,
            top_p: 1.0,
            max_in_flight: 4,
            max_words: 200,
            max_length_ratio: 1.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RewriteStats {
    pub input: usize,
    pub failed: usize,
    pub filtered: usize,
    pub kept: usize,
}

/// Replaces every target with the client's rewrite. Failed calls drop the
/// pair; rewrites are then checked against their source with the length
/// and ratio rules of corpus filtering.
pub fn rewrite_corpus(
    pairs: &[SegmentPair],
    client: &dyn RewriterClient,
    template: &PromptTemplate,
    params: &RewriteParams,
) -> Result<(Vec<SegmentPair>, RewriteStats)> {
    PromptTemplate::new(template.text())?;
    let results = bounded_map(pairs, params.max_in_flight, |p| {
        client.rewrite(&p.source, &p.target, template, params.temperature, params.top_p)
    })?;
    let mut stats = RewriteStats {
        input: pairs.len(),
        ..Default::default()
    };
    let mut out = Vec::with_capacity(pairs.len());
    for (pair, result) in pairs.iter().zip(results) {
        let Ok(text) = result else {
            stats.failed += 1;
            continue;
        };
        let rewritten = SegmentPair {
            source: pair.source.clone(),
            target: text,
            origin: Origin::Rewritten,
            semantic_score: None,
        };
        if exceeds_length(&rewritten, params.max_words) || exceeds_ratio(&rewritten, params.max_length_ratio) {
            stats.filtered += 1;
        } else {
            out.push(rewritten);
        }
    }
    stats.kept = out.len();
    Ok((out, stats))
}
