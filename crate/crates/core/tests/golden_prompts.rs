//! Rendered prompts compared byte-for-byte with files under `tests/golden/`.
//! Run with `UPDATE_GOLDEN=1` to rewrite them after an intended change.

use std::collections::BTreeMap;
use std::path::PathBuf;

use mhs_recon::corpus::{AgeCategory, AnnotatorProfile, CommentRecord};
use mhs_recon::prompting::FewShotExample;
use mhs_recon::{Attribute, BaselineVariant, PromptTemplates, RenderedPrompt};

fn comment() -> CommentRecord {
    CommentRecord {
        comment_id: "1001".into(),
        text: "Placeholder comment text with \"quotes\" and a second clause.".into(),
        ratings: BTreeMap::new(),
        hate_score: -0.42,
    }
}

fn profile() -> AnnotatorProfile {
    AnnotatorProfile {
        annotator_id: "10007".into(),
        gender: Some("female".into()),
        age: Some(34),
        age_category: Some(AgeCategory::Young),
        race: Some("asian".into()),
        religion: Some("buddhist".into()),
        ideology: Some("liberal".into()),
    }
}

fn templates() -> PromptTemplates {
    let mut t = PromptTemplates::default();
    t.baseline.few_shot_examples = vec![
        FewShotExample { text: "Example text that is hateful.".into(), hate: true },
        FewShotExample { text: "Example text that is benign.".into(), hate: false },
    ];
    t
}

fn serialize(p: &RenderedPrompt) -> String {
    format!(
        "=== system\n{}\n=== user\n{}\n=== labels\n{}\n",
        p.system_text,
        p.user_text,
        p.expected_label_set.join(" ")
    )
}

fn cases() -> Vec<(String, RenderedPrompt)> {
    let t = templates();
    let c = comment();
    let mut out = Vec::new();
    for a in Attribute::ALL {
        out.push((format!("vanilla_{a}"), t.build_vanilla_prompt(a.spec(), &c).unwrap()));
        out.push((format!("persona_{a}"), t.build_persona_prompt(a.spec(), &c, &profile()).unwrap()));
    }
    for v in BaselineVariant::ALL {
        out.push((format!("baseline_{v}"), t.build_baseline_prompt(v, &c).unwrap()));
    }
    out
}

#[test]
fn prompts_match_golden_files() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    let mut mismatched = Vec::new();
    let all = cases();
    assert_eq!(all.len(), 25);
    for (name, prompt) in all {
        let path = dir.join(format!("{name}.txt"));
        let rendered = serialize(&prompt);
        if update {
            std::fs::write(&path, &rendered).unwrap();
            continue;
        }
        let expected = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing {}; run with UPDATE_GOLDEN=1", path.display()));
        if expected != rendered {
            mismatched.push(name);
        }
    }
    assert!(mismatched.is_empty(), "prompts differ from golden files: {mismatched:?}");
}
