use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{
    AnswerType, Category, Course, Curriculum, PromptSpec, PromptThumbnail, SocratesError, TargetLevel, Topic,
};
use crate::gateway::{ChatRequest, Gateway};
use crate::util::fenced_json;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    /// Share of reductionist thumbnails requested per topic.
    pub reductionist_fraction: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            reductionist_fraction: 0.5,
        }
    }
}

impl PlannerConfig {
    /// Reductionist quota for `n` thumbnails; both kinds get a slot when n >= 2.
    fn reductionist_quota(&self, n: usize) -> usize {
        let q = (n as f64 * self.reductionist_fraction.clamp(0.0, 1.0)).round() as usize;
        if n >= 2 {
            q.clamp(1, n - 1)
        } else {
            q.min(n)
        }
    }
}

const PLANNER_SYSTEM: &str = "You plan problems for a first-principles science curriculum. \
Each plan is a single sentence describing a problem whose final answer can be checked objectively.";

const GENERATOR_SYSTEM: &str = "You write self-contained science problems with objectively checkable \
final answers: a number, a symbolic expression, a multiple-choice letter, or a program.";

pub fn planner_prompt(course: &Course, topic: &Topic, n: usize, reductionist: usize) -> String {
    format!(
        "Course: {} ({}, {:?})\n\
         Topic: {}\n\
         Produce {n} problem thumbnails: {reductionist} reductionist (derive or explain the result from more \
         fundamental principles) and {} application (use the principle in a concrete experimental, \
         technological or computational setting).\n\
         Vary target_level across high_school, undergraduate and graduate.\n\
         Reply with exactly one fenced JSON block:\n\
         ```json\n{{\"thumbnails\": [{{\"category\": \"reductionist\", \"sketch\": \"...\", \"target_level\": \"undergraduate\"}}]}}\n```",
        course.title,
        course.discipline,
        course.level,
        topic.title,
        n - reductionist,
    )
}

pub fn generator_prompt(thumbnail: &PromptThumbnail, topic_title: &str) -> String {
    format!(
        "Topic: {topic_title}\n\
         Category: {}\n\
         Target level: {}\n\
         Thumbnail: {}\n\
         Write concrete problems realizing this thumbnail. Every problem must state all given quantities \
         and have an answer_type among numeric, symbolic, multiple_choice, code.\n\
         Reply with exactly one fenced JSON block:\n\
         ```json\n{{\"prompts\": [{{\"text\": \"...\", \"answer_type\": \"numeric\"}}]}}\n```",
        thumbnail.category.as_str(),
        thumbnail.target_level.as_str(),
        thumbnail.sketch,
    )
}

#[derive(Deserialize)]
struct RawThumbnail {
    category: Category,
    sketch: String,
    target_level: TargetLevel,
}

#[derive(Deserialize)]
struct RawThumbnails {
    thumbnails: Vec<RawThumbnail>,
}

fn parse_fenced<T: for<'de> Deserialize<'de>>(raw: &str) -> Result<T, SocratesError> {
    let block = fenced_json(raw).ok_or_else(|| SocratesError::Unparseable {
        reason: "no fenced JSON block".into(),
        raw: raw.to_string(),
    })?;
    serde_json::from_str(&block).map_err(|e| SocratesError::Unparseable {
        reason: e.to_string(),
        raw: raw.to_string(),
    })
}

/// Asks `backend_id` for up to `n` thumbnails for `topic`.
///
/// Output is all-or-nothing: a malformed reply commits no thumbnails. When the
/// planner proposes more than `n`, the reductionist/application quota from
/// `config` decides which survive.
pub fn plan_thumbnails(
    gateway: &Gateway,
    backend_id: &str,
    course: &Course,
    topic: &Topic,
    n: usize,
    config: &PlannerConfig,
) -> Result<Vec<PromptThumbnail>, SocratesError> {
    if n == 0 {
        return Err(SocratesError::ZeroCount);
    }
    let quota = config.reductionist_quota(n);
    let request = ChatRequest::author(PLANNER_SYSTEM, planner_prompt(course, topic, n, quota));
    let response = gateway.complete(backend_id, &request)?;
    let parsed: RawThumbnails = parse_fenced(&response.text)?;
    if let Some(bad) = parsed.thumbnails.iter().find(|t| t.sketch.trim().is_empty()) {
        return Err(SocratesError::Unparseable {
            reason: format!("empty sketch in {:?} thumbnail", bad.category),
            raw: response.text,
        });
    }

    let (red, app): (Vec<_>, Vec<_>) = parsed
        .thumbnails
        .into_iter()
        .enumerate()
        .partition(|(_, t)| t.category == Category::Reductionist);
    let take_red = quota.min(red.len()).max(n.saturating_sub(app.len())).min(red.len());
    let take_app = (n - take_red).min(app.len());
    let mut chosen: Vec<(usize, RawThumbnail)> = red
        .into_iter()
        .take(take_red)
        .chain(app.into_iter().take(take_app))
        .collect();
    chosen.sort_by_key(|(i, _)| *i);

    Ok(chosen
        .into_iter()
        .enumerate()
        .map(|(k, (_, t))| PromptThumbnail {
            thumbnail_id: format!("{}/t{k:03}", topic.topic_id),
            topic_id: topic.topic_id.clone(),
            category: t.category,
            sketch: t.sketch.trim().to_string(),
            target_level: t.target_level,
        })
        .collect())
}

/// A generated item excluded from the corpus, kept for yield accounting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedItem {
    pub thumbnail_id: String,
    pub index: usize,
    pub reason: String,
    pub raw: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationOutput {
    pub prompts: Vec<PromptSpec>,
    pub skipped: Vec<SkippedItem>,
}

/// Expands one thumbnail into concrete prompts.
///
/// Items whose `answer_type` is missing or not one of the verifiable kinds are
/// reported in `skipped` rather than emitted.
pub fn generate_prompts(
    gateway: &Gateway,
    backend_id: &str,
    thumbnail: &PromptThumbnail,
    topic_title: &str,
) -> Result<GenerationOutput, SocratesError> {
    let request = ChatRequest::author(GENERATOR_SYSTEM, generator_prompt(thumbnail, topic_title));
    let response = gateway.complete(backend_id, &request)?;
    let block = fenced_json(&response.text).ok_or_else(|| SocratesError::Unparseable {
        reason: "no fenced JSON block".into(),
        raw: response.text.clone(),
    })?;
    let value: serde_json::Value = serde_json::from_str(&block).map_err(|e| SocratesError::Unparseable {
        reason: e.to_string(),
        raw: response.text.clone(),
    })?;
    let items = value
        .get("prompts")
        .and_then(|p| p.as_array())
        .ok_or_else(|| SocratesError::Unparseable {
            reason: "missing `prompts` array".into(),
            raw: response.text.clone(),
        })?;

    let mut out = GenerationOutput::default();
    for (index, item) in items.iter().enumerate() {
        let skip = |reason: &str| SkippedItem {
            thumbnail_id: thumbnail.thumbnail_id.clone(),
            index,
            reason: reason.to_string(),
            raw: item.to_string(),
        };
        let text = item.get("text").and_then(|t| t.as_str()).map(str::trim).unwrap_or("");
        if text.is_empty() {
            out.skipped.push(skip("missing text"));
            continue;
        }
        let Some(raw_type) = item.get("answer_type").and_then(|t| t.as_str()) else {
            out.skipped.push(skip("missing answer_type"));
            continue;
        };
        let Some(answer_type) = AnswerType::parse(raw_type) else {
            out.skipped.push(skip(&format!("unverifiable answer_type `{raw_type}`")));
            continue;
        };
        out.prompts.push(PromptSpec {
            prompt_id: format!("{}/p{:03}", thumbnail.thumbnail_id, out.prompts.len()),
            thumbnail_id: thumbnail.thumbnail_id.clone(),
            topic_id: thumbnail.topic_id.clone(),
            text: text.to_string(),
            category: thumbnail.category,
            answer_type,
            target_level: thumbnail.target_level,
        });
    }
    for s in &out.skipped {
        tracing::info!(thumbnail = %s.thumbnail_id, index = s.index, reason = %s.reason, "generated item skipped");
    }
    Ok(out)
}

/// Walks prompt → thumbnail → topic → course and fails on the first break.
pub fn check_provenance(
    prompts: &[PromptSpec],
    thumbnails: &[PromptThumbnail],
    curriculum: &Curriculum,
) -> Result<(), SocratesError> {
    let mut seen = BTreeSet::new();
    for p in prompts {
        if !seen.insert(&p.prompt_id) {
            return Err(SocratesError::DuplicateId(p.prompt_id.clone()));
        }
        let th = thumbnails
            .iter()
            .find(|t| t.thumbnail_id == p.thumbnail_id)
            .ok_or_else(|| SocratesError::Provenance(format!("{} → missing thumbnail {}", p.prompt_id, p.thumbnail_id)))?;
        if th.topic_id != p.topic_id || th.category != p.category {
            return Err(SocratesError::Provenance(format!(
                "{} disagrees with its thumbnail {}",
                p.prompt_id, th.thumbnail_id
            )));
        }
        curriculum
            .course_of_topic(&th.topic_id)
            .ok_or_else(|| SocratesError::Provenance(format!("{} → unknown topic {}", th.thumbnail_id, th.topic_id)))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{mock_backend, MockScript};
    use crate::socrates::{CourseLevel, Discipline};

    fn course() -> Course {
        Course {
            course_id: "mech".into(),
            title: "Classical Mechanics".into(),
            discipline: Discipline::Physics,
            level: CourseLevel::Undergraduate,
        }
    }

    fn topic() -> Topic {
        Topic {
            topic_id: "mech.osc".into(),
            course_id: "mech".into(),
            title: "Oscillations".into(),
        }
    }

    fn gateway_with(id: &str, script: MockScript) -> Gateway {
        let mut gw = Gateway::new();
        gw.register_backend(mock_backend(script).with_id(id)).unwrap();
        gw
    }

    const FOUR: &str = "```json\n{\"thumbnails\": [\
        {\"category\": \"reductionist\", \"sketch\": \"Derive the small-angle period of a pendulum.\", \"target_level\": \"high_school\"},\
        {\"category\": \"application\", \"sketch\": \"Measure g on a planet with a pendulum.\", \"target_level\": \"undergraduate\"},\
        {\"category\": \"reductionist\", \"sketch\": \"Explain energy conservation in the oscillator.\", \"target_level\": \"undergraduate\"},\
        {\"category\": \"application\", \"sketch\": \"Tune a seismometer's natural frequency.\", \"target_level\": \"graduate\"}]}\n```";

    #[test]
    fn four_scripted_sketches_round_trip() {
        let gw = gateway_with("planner", MockScript::constant(FOUR));
        let th = plan_thumbnails(&gw, "planner", &course(), &topic(), 4, &PlannerConfig::default()).unwrap();
        assert_eq!(th.len(), 4);
        assert_eq!(th[1].sketch, "Measure g on a planet with a pendulum.");
        assert_eq!(th[3].target_level, TargetLevel::Graduate);
        let ids: BTreeSet<_> = th.iter().map(|t| &t.thumbnail_id).collect();
        assert_eq!(ids.len(), 4);
    }

    #[test]
    fn truncation_keeps_both_categories() {
        let gw = gateway_with("planner", MockScript::constant(FOUR));
        let th = plan_thumbnails(&gw, "planner", &course(), &topic(), 2, &PlannerConfig::default()).unwrap();
        assert_eq!(th.len(), 2);
        assert!(th.iter().any(|t| t.category == Category::Reductionist));
        assert!(th.iter().any(|t| t.category == Category::Application));
    }

    #[test]
    fn truncation_fills_from_the_other_category() {
        let only_red = "```json\n{\"thumbnails\": [\
            {\"category\": \"reductionist\", \"sketch\": \"a\", \"target_level\": \"graduate\"},\
            {\"category\": \"reductionist\", \"sketch\": \"b\", \"target_level\": \"graduate\"},\
            {\"category\": \"reductionist\", \"sketch\": \"c\", \"target_level\": \"graduate\"}]}\n```";
        let gw = gateway_with("planner", MockScript::constant(only_red));
        let th = plan_thumbnails(&gw, "planner", &course(), &topic(), 2, &PlannerConfig::default()).unwrap();
        assert_eq!(th.len(), 2);
    }

    #[test]
    fn malformed_list_is_a_parse_error_with_raw_text() {
        let gw = gateway_with("planner", MockScript::constant("1. pendulum\n2. spring"));
        let err = plan_thumbnails(&gw, "planner", &course(), &topic(), 4, &PlannerConfig::default()).unwrap_err();
        match err {
            SocratesError::Unparseable { raw, .. } => assert!(raw.contains("pendulum")),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn unknown_category_rejects_whole_reply() {
        let bad = "```json\n{\"thumbnails\": [{\"category\": \"history\", \"sketch\": \"x\", \"target_level\": \"graduate\"}]}\n```";
        let gw = gateway_with("planner", MockScript::constant(bad));
        assert!(plan_thumbnails(&gw, "planner", &course(), &topic(), 4, &PlannerConfig::default()).is_err());
    }

    #[test]
    fn zero_n_rejected() {
        let gw = gateway_with("planner", MockScript::constant(FOUR));
        assert!(matches!(
            plan_thumbnails(&gw, "planner", &course(), &topic(), 0, &PlannerConfig::default()),
            Err(SocratesError::ZeroCount)
        ));
    }

    fn thumbnail(id: &str, category: Category) -> PromptThumbnail {
        PromptThumbnail {
            thumbnail_id: id.into(),
            topic_id: "mech.osc".into(),
            category,
            sketch: "Use a simple pendulum to measure g.".into(),
            target_level: TargetLevel::Undergraduate,
        }
    }

    #[test]
    fn pendulum_prompt_from_scripted_generator() {
        let reply = "```json\n{\"prompts\": [{\"text\": \"Use a simple pendulum of length 2.0 m with measured period 3.1 s to determine the acceleration due to gravity g on a hypothetical planet.\", \"answer_type\": \"numeric\"}]}\n```";
        let gw = gateway_with("gen", MockScript::constant("").rule("pendulum", reply));
        let th = thumbnail("mech.osc/t000", Category::Reductionist);
        let out = generate_prompts(&gw, "gen", &th, "Oscillations").unwrap();
        assert_eq!(out.prompts.len(), 1);
        assert!(out.prompts[0].text.contains("determine the acceleration due to gravity"));
        assert_eq!(out.prompts[0].category, Category::Reductionist);
        assert_eq!(out.prompts[0].answer_type, AnswerType::Numeric);
    }

    #[test]
    fn unverifiable_answer_types_are_skipped_and_counted() {
        let reply = "```json\n{\"prompts\": [\
            {\"text\": \"Discuss the history of pendulum clocks.\", \"answer_type\": \"essay\"},\
            {\"text\": \"Period of a 1 m pendulum?\"},\
            {\"text\": \"Period of a 2 m pendulum in seconds?\", \"answer_type\": \"numeric\"}]}\n```";
        let gw = gateway_with("gen", MockScript::constant(reply));
        let out = generate_prompts(&gw, "gen", &thumbnail("x/t000", Category::Application), "Osc").unwrap();
        assert_eq!(out.prompts.len(), 1);
        assert_eq!(out.skipped.len(), 2);
        assert!(out.skipped[0].reason.contains("essay"));
    }

    #[test]
    fn prompt_ids_distinct_across_thumbnails() {
        let reply = "```json\n{\"prompts\": [{\"text\": \"a\", \"answer_type\": \"numeric\"}, {\"text\": \"b\", \"answer_type\": \"code\"}]}\n```";
        let gw = gateway_with("gen", MockScript::constant(reply));
        let mut ids = BTreeSet::new();
        for th in [thumbnail("x/t000", Category::Application), thumbnail("x/t001", Category::Reductionist)] {
            for p in generate_prompts(&gw, "gen", &th, "Osc").unwrap().prompts {
                assert!(ids.insert(p.prompt_id));
            }
        }
        assert_eq!(ids.len(), 4);
    }

    #[test]
    fn quota_rounding() {
        let c = PlannerConfig::default();
        assert_eq!(c.reductionist_quota(1), 1);
        assert_eq!(c.reductionist_quota(2), 1);
        assert_eq!(c.reductionist_quota(100), 50);
        let all_red = PlannerConfig { reductionist_fraction: 1.0 };
        assert_eq!(all_red.reductionist_quota(4), 3);
    }
}
