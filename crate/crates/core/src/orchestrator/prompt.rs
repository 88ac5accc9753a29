use crate::domain::TaskSpec;
use crate::retrieval::RepairRecord;
use crate::scalar::EmbeddingScalar;

/// Fixed section delimiters. Every section opens with `=== NAME ===` and
/// closes with `=== END NAME ===` so prompts in transcripts can be split
/// back apart.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: &'static str,
    pub task_instruction: &'static str,
    pub example_intro: &'static str,
    pub repair_intro: &'static str,
}

pub const DEFAULT_TEMPLATE_ID: &str = "default";

const TEMPLATES: &[PromptTemplate] = &[
    PromptTemplate {
        id: "default",
        task_instruction: "Write a complete, secure {language} program for the task below. \
Reply with the full program in a single fenced ```{language} code block.",
        example_intro: "A previously verified solution to a similar task:",
        repair_intro: "The previous attempt failed these checks. Fix every issue and reply with the full corrected program.",
    },
    PromptTemplate {
        id: "terse",
        task_instruction: "Solve in {language}. Reply with one ```{language} code block.",
        example_intro: "Verified example:",
        repair_intro: "Fix these issues:",
    },
];

impl PromptTemplate {
    pub fn lookup(id: &str) -> Option<&'static PromptTemplate> {
        TEMPLATES.iter().find(|t| t.id == id)
    }

    pub fn ids() -> impl Iterator<Item = &'static str> {
        TEMPLATES.iter().map(|t| t.id)
    }
}

/// Feedback carried into a repair prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepairContext {
    /// Output of `serialize_diagnostics` for the previous attempt.
    pub feedback: String,
    pub previous_source: String,
}

fn section(out: &mut String, name: &str, body: &str) {
    out.push_str(&format!("=== {name} ===\n"));
    out.push_str(body);
    if !body.ends_with('\n') {
        out.push('\n');
    }
    out.push_str(&format!("=== END {name} ===\n"));
}

fn fenced(language: &str, code: &str) -> String {
    let mut text = format!("```{language}\n{code}");
    if !code.ends_with('\n') {
        text.push('\n');
    }
    text.push_str("```\n");
    text
}

/// Assembles a prompt: the task, then retrieved examples in the given
/// order, then (for repairs) the feedback and previous source.
pub fn build_prompt<T: EmbeddingScalar>(
    task: &TaskSpec,
    retrieved: &[RepairRecord<T>],
    repair: Option<&RepairContext>,
    template: &PromptTemplate,
) -> String {
    let language = &task.language_tag;
    let mut out = String::new();
    section(
        &mut out,
        "TASK",
        &format!(
            "{}\n\n{}\n",
            template.task_instruction.replace("{language}", language),
            task.description.trim_end()
        ),
    );
    for (i, record) in retrieved.iter().enumerate() {
        section(
            &mut out,
            &format!("EXAMPLE {}", i + 1),
            &format!(
                "{}\nTask: {}\n{}",
                template.example_intro,
                record.task_text.trim_end(),
                fenced(language, &record.final_code)
            ),
        );
    }
    if let Some(repair) = repair {
        section(
            &mut out,
            "FIX THESE ISSUES",
            &format!("{}\n{}", template.repair_intro, repair.feedback),
        );
        section(&mut out, "PREVIOUS ATTEMPT", &fenced(language, &repair.previous_source));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::ErrorLabel;
    use crate::retrieval::{Embedder, HashedEmbedder};

    fn task() -> TaskSpec {
        TaskSpec {
            task_id: "t1".into(),
            description: "Read a line and print it reversed.".into(),
            language_tag: "c".into(),
            harness_ref: None,
            model_id: "m".into(),
        }
    }

    fn record(text: &str, code: &str) -> RepairRecord<f64> {
        let e = HashedEmbedder::default().embed(text).unwrap();
        RepairRecord::new(text, code, e, ErrorLabel::ALL_CLEAN, "m")
    }

    fn template() -> &'static PromptTemplate {
        PromptTemplate::lookup(DEFAULT_TEMPLATE_ID).unwrap()
    }

    #[test]
    fn baseline_prompt_is_task_section_only() {
        let prompt = build_prompt::<f64>(&task(), &[], None, template());
        assert!(prompt.starts_with("=== TASK ===\n"));
        assert!(prompt.ends_with("=== END TASK ===\n"));
        assert!(prompt.contains("Read a line and print it reversed."));
        assert_eq!(prompt.matches("=== ").count(), 2);
    }

    #[test]
    fn examples_keep_given_order() {
        let records = [record("a task", "CODE_A"), record("b task", "CODE_B"), record("c task", "CODE_C")];
        let prompt = build_prompt(&task(), &records, None, template());
        let a = prompt.find("CODE_A").unwrap();
        let b = prompt.find("CODE_B").unwrap();
        let c = prompt.find("CODE_C").unwrap();
        assert!(a < b && b < c);
        assert!(prompt.contains("=== EXAMPLE 3 ==="));
    }

    #[test]
    fn repair_section_carries_feedback_and_source() {
        let repair = RepairContext {
            feedback: "[compilation] error main.c:3:3: expected ';' before 'return'".into(),
            previous_source: "int main(void){\n  int x = 1\n  return x;\n}\n".into(),
        };
        let prompt = build_prompt::<f64>(&task(), &[], Some(&repair), template());
        let fix = prompt.find("=== FIX THESE ISSUES ===").unwrap();
        let prev = prompt.find("=== PREVIOUS ATTEMPT ===").unwrap();
        assert!(prompt.find("=== END TASK ===").unwrap() < fix && fix < prev);
        assert!(prompt.contains(&repair.feedback));
        assert!(prompt.contains(&repair.previous_source));
    }

    #[test]
    fn deterministic() {
        let records = [record("a task", "x")];
        assert_eq!(
            build_prompt(&task(), &records, None, template()),
            build_prompt(&task(), &records, None, template())
        );
    }

    #[test]
    fn unknown_template() {
        assert!(PromptTemplate::lookup("nope").is_none());
        assert!(PromptTemplate::ids().any(|id| id == "terse"));
    }
}
