//! Curriculum scaffolding and question generation.
//!
//! Courses hold topics; a planner backend sketches problem thumbnails per
//! topic; a generator backend expands each thumbnail into concrete questions
//! with verifiable answer types; a distinct checker backend screens the
//! questions before anything is solved.

mod curriculum;
mod generation;
mod sanitize;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::gateway::GatewayError;

pub use curriculum::{load_curriculum, Course, Curriculum, Topic};
pub use generation::{
    check_provenance, generate_prompts, plan_thumbnails, GenerationOutput, PlannerConfig, SkippedItem,
};
pub use sanitize::{sanitize_prompts, SanitationReport, SanitizeOutcome, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discipline {
    Mathematics,
    Physics,
    Chemistry,
    Biology,
    Engineering,
    Computation,
}

impl Discipline {
    pub const ALL: [Discipline; 6] = [
        Discipline::Mathematics,
        Discipline::Physics,
        Discipline::Chemistry,
        Discipline::Biology,
        Discipline::Engineering,
        Discipline::Computation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Discipline::Mathematics => "mathematics",
            Discipline::Physics => "physics",
            Discipline::Chemistry => "chemistry",
            Discipline::Biology => "biology",
            Discipline::Engineering => "engineering",
            Discipline::Computation => "computation",
        }
    }
}

impl fmt::Display for Discipline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CourseLevel {
    Undergraduate,
    Graduate,
}

/// Reductionist prompts ask what and why; application prompts ask how.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Reductionist,
    Application,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Reductionist => "reductionist",
            Category::Application => "application",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetLevel {
    HighSchool,
    Undergraduate,
    Graduate,
}

impl TargetLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            TargetLevel::HighSchool => "high_school",
            TargetLevel::Undergraduate => "undergraduate",
            TargetLevel::Graduate => "graduate",
        }
    }
}

/// The verifiable answer kinds. Nothing else leaves question generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerType {
    Numeric,
    Symbolic,
    MultipleChoice,
    Code,
}

impl AnswerType {
    pub fn as_str(self) -> &'static str {
        match self {
            AnswerType::Numeric => "numeric",
            AnswerType::Symbolic => "symbolic",
            AnswerType::MultipleChoice => "multiple_choice",
            AnswerType::Code => "code",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().replace(['-', ' '], "_").as_str() {
            "numeric" | "numerical" => Some(AnswerType::Numeric),
            "symbolic" => Some(AnswerType::Symbolic),
            "multiple_choice" => Some(AnswerType::MultipleChoice),
            "code" => Some(AnswerType::Code),
            _ => None,
        }
    }
}

impl fmt::Display for AnswerType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptThumbnail {
    pub thumbnail_id: String,
    pub topic_id: String,
    pub category: Category,
    pub sketch: String,
    pub target_level: TargetLevel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub prompt_id: String,
    pub thumbnail_id: String,
    pub topic_id: String,
    pub text: String,
    pub category: Category,
    pub answer_type: AnswerType,
    pub target_level: TargetLevel,
}

#[derive(Debug, thiserror::Error)]
pub enum SocratesError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("curriculum parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("topic `{topic_id}` references missing course `{course_id}`")]
    DanglingReference { topic_id: String, course_id: String },
    #[error("invalid curriculum: {0}")]
    Invalid(String),
    #[error("n must be >= 1")]
    ZeroCount,
    #[error(transparent)]
    Backend(#[from] GatewayError),
    #[error("unparseable backend output ({reason}); raw text:\n{raw}")]
    Unparseable { reason: String, raw: String },
    #[error("checker backend `{0}` must differ from the generator backend")]
    SameBackend(String),
    #[error("broken provenance: {0}")]
    Provenance(String),
}
