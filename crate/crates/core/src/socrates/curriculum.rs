use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CourseLevel, Discipline, SocratesError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Course {
    pub course_id: String,
    pub title: String,
    pub discipline: Discipline,
    pub level: CourseLevel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topic {
    pub topic_id: String,
    pub course_id: String,
    pub title: String,
}

/// Validated courses and topics.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Curriculum {
    courses: Vec<Course>,
    topics: Vec<Topic>,
    course_index: BTreeMap<String, usize>,
    topic_index: BTreeMap<String, usize>,
}

#[derive(Deserialize, Serialize)]
struct FileTopic {
    topic_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    course_id: Option<String>,
    title: String,
}

#[derive(Deserialize, Serialize)]
struct FileCourse {
    course_id: String,
    title: String,
    discipline: Discipline,
    level: CourseLevel,
    #[serde(default)]
    topics: Vec<FileTopic>,
}

#[derive(Deserialize, Serialize)]
struct FileCurriculum {
    courses: Vec<FileCourse>,
    /// Flat topic list; every entry must name its course.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    topics: Vec<FileTopic>,
}

pub fn load_curriculum(path: impl AsRef<Path>) -> Result<Curriculum, SocratesError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SocratesError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Curriculum::from_json(&text)
}

impl Curriculum {
    pub fn from_json(text: &str) -> Result<Self, SocratesError> {
        let file: FileCurriculum = serde_json::from_str(text).map_err(|e| SocratesError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let mut courses = Vec::new();
        let mut topics = Vec::new();
        for fc in file.courses {
            for ft in fc.topics {
                let course_id = ft.course_id.unwrap_or_else(|| fc.course_id.clone());
                if course_id != fc.course_id {
                    return Err(SocratesError::DanglingReference {
                        topic_id: ft.topic_id,
                        course_id,
                    });
                }
                topics.push(Topic {
                    topic_id: ft.topic_id,
                    course_id,
                    title: ft.title,
                });
            }
            courses.push(Course {
                course_id: fc.course_id,
                title: fc.title,
                discipline: fc.discipline,
                level: fc.level,
            });
        }
        for ft in file.topics {
            let course_id = ft.course_id.ok_or_else(|| {
                SocratesError::Invalid(format!("flat topic `{}` has no course_id", ft.topic_id))
            })?;
            topics.push(Topic {
                topic_id: ft.topic_id,
                course_id,
                title: ft.title,
            });
        }
        Self::new(courses, topics)
    }

    pub fn new(courses: Vec<Course>, topics: Vec<Topic>) -> Result<Self, SocratesError> {
        let mut course_index = BTreeMap::new();
        for (i, c) in courses.iter().enumerate() {
            if c.course_id.trim().is_empty() || c.title.trim().is_empty() {
                return Err(SocratesError::Invalid(format!(
                    "course `{}` needs a non-empty id and title",
                    c.course_id
                )));
            }
            if course_index.insert(c.course_id.clone(), i).is_some() {
                return Err(SocratesError::DuplicateId(c.course_id.clone()));
            }
        }
        let mut topic_index = BTreeMap::new();
        for (i, t) in topics.iter().enumerate() {
            if !course_index.contains_key(&t.course_id) {
                return Err(SocratesError::DanglingReference {
                    topic_id: t.topic_id.clone(),
                    course_id: t.course_id.clone(),
                });
            }
            if t.topic_id.trim().is_empty() || t.title.trim().is_empty() {
                return Err(SocratesError::Invalid(format!(
                    "topic `{}` needs a non-empty id and title",
                    t.topic_id
                )));
            }
            if course_index.contains_key(&t.topic_id) || topic_index.insert(t.topic_id.clone(), i).is_some() {
                return Err(SocratesError::DuplicateId(t.topic_id.clone()));
            }
        }
        Ok(Self {
            courses,
            topics,
            course_index,
            topic_index,
        })
    }

    pub fn courses(&self) -> &[Course] {
        &self.courses
    }

    pub fn topics(&self) -> &[Topic] {
        &self.topics
    }

    pub fn course(&self, course_id: &str) -> Option<&Course> {
        self.course_index.get(course_id).map(|&i| &self.courses[i])
    }

    pub fn topic(&self, topic_id: &str) -> Option<&Topic> {
        self.topic_index.get(topic_id).map(|&i| &self.topics[i])
    }

    pub fn course_of_topic(&self, topic_id: &str) -> Option<&Course> {
        self.topic(topic_id).and_then(|t| self.course(&t.course_id))
    }

    pub fn topics_of(&self, course_id: &str) -> impl Iterator<Item = &Topic> + '_ {
        let course_id = course_id.to_string();
        self.topics.iter().filter(move |t| t.course_id == course_id)
    }

    pub fn disciplines(&self) -> BTreeSet<Discipline> {
        self.courses.iter().map(|c| c.discipline).collect()
    }

    /// Nested on-disk form, stable byte-for-byte for identical curricula.
    pub fn to_json(&self) -> String {
        let file = FileCurriculum {
            courses: self
                .courses
                .iter()
                .map(|c| FileCourse {
                    course_id: c.course_id.clone(),
                    title: c.title.clone(),
                    discipline: c.discipline,
                    level: c.level,
                    topics: self
                        .topics_of(&c.course_id)
                        .map(|t| FileTopic {
                            topic_id: t.topic_id.clone(),
                            course_id: None,
                            title: t.title.clone(),
                        })
                        .collect(),
                })
                .collect(),
            topics: Vec::new(),
        };
        serde_json::to_string_pretty(&file).expect("curriculum serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_BY_THREE: &str = r#"{"courses":[
      {"course_id":"mech","title":"Classical Mechanics","discipline":"physics","level":"undergraduate",
       "topics":[{"topic_id":"mech.osc","title":"Oscillations"},{"topic_id":"mech.cf","title":"Central forces"},{"topic_id":"mech.rb","title":"Rigid bodies"}]},
      {"course_id":"qft","title":"Quantum Field Theory","discipline":"physics","level":"graduate",
       "topics":[{"topic_id":"qft.inst","title":"Instantons"},{"topic_id":"qft.ren","title":"Renormalization"},{"topic_id":"qft.anom","title":"Anomalies"}]}
    ]}"#;

    #[test]
    fn loads_two_courses_six_topics() {
        let c = Curriculum::from_json(TWO_BY_THREE).unwrap();
        assert_eq!(c.courses().len(), 2);
        assert_eq!(c.topics().len(), 6);
        assert_eq!(c.course_of_topic("qft.inst").unwrap().course_id, "qft");
    }

    #[test]
    fn dangling_topic_rejected() {
        let text = r#"{"courses":[{"course_id":"a","title":"A","discipline":"physics","level":"graduate"}],
                      "topics":[{"topic_id":"t","course_id":"missing","title":"T"}]}"#;
        assert!(matches!(
            Curriculum::from_json(text),
            Err(SocratesError::DanglingReference { .. })
        ));
    }

    #[test]
    fn nested_topic_with_foreign_course_rejected() {
        let text = r#"{"courses":[{"course_id":"a","title":"A","discipline":"physics","level":"graduate",
                      "topics":[{"topic_id":"t","course_id":"b","title":"T"}]}]}"#;
        assert!(matches!(
            Curriculum::from_json(text),
            Err(SocratesError::DanglingReference { .. })
        ));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = r#"{"courses":[
            {"course_id":"a","title":"A","discipline":"physics","level":"graduate","topics":[{"topic_id":"t","title":"T"}]},
            {"course_id":"b","title":"B","discipline":"physics","level":"graduate","topics":[{"topic_id":"t","title":"T2"}]}]}"#;
        assert!(matches!(Curriculum::from_json(text), Err(SocratesError::DuplicateId(id)) if id == "t"));
    }

    #[test]
    fn parse_errors_carry_line() {
        let err = Curriculum::from_json("{\n\"courses\": [\n  {oops}\n]}").unwrap_err();
        match err {
            SocratesError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn json_round_trip() {
        let c = Curriculum::from_json(TWO_BY_THREE).unwrap();
        let again = Curriculum::from_json(&c.to_json()).unwrap();
        assert_eq!(c, again);
    }
}
