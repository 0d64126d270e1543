//! Every prompt shape is pinned byte-for-byte under `tests/golden/prompts/`.
//! Regenerate with `ARGMINE_BLESS=1 cargo test -p argmine --test prompt_golden`.

mod common;

use argmine::prompt::{PromptMode, TaskKind};
use common::{all_prompts, golden_dir, QUALITY_EVALUATOR, SEGMENTATION_QUERY, TYPE_EVALUATOR};

#[test]
fn prompts_match_goldens() {
    let bless = std::env::var_os("ARGMINE_BLESS").is_some();
    let dir = golden_dir();
    if bless {
        std::fs::create_dir_all(&dir).unwrap();
    }
    let prompts = all_prompts();
    assert_eq!(prompts.len(), 24);
    let mut mismatched = Vec::new();
    for (name, prompt) in &prompts {
        let path = dir.join(name);
        if bless {
            std::fs::write(&path, &prompt.body).unwrap();
            continue;
        }
        let want = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        if want != prompt.body {
            mismatched.push(name.clone());
        }
    }
    assert!(mismatched.is_empty(), "prompts differ from goldens: {mismatched:?}");
}

#[test]
fn goldens_carry_the_verbatim_queries() {
    for (name, prompt) in all_prompts() {
        let body = &prompt.body;
        assert_eq!(prompt.shot_count, body.matches("#EXAMPLE ").count(), "{name}");
        if prompt.mode == PromptMode::FineTuned {
            assert!(!body.contains("#QUERY") && !body.contains("#TASK"), "{name}");
            continue;
        }
        match prompt.task {
            TaskKind::Segmentation => assert!(body.contains(SEGMENTATION_QUERY), "{name}"),
            TaskKind::TypeOnly => assert!(body.contains(TYPE_EVALUATOR) && !body.contains(QUALITY_EVALUATOR)),
            TaskKind::QualityOnly => assert!(body.contains(QUALITY_EVALUATOR) && !body.contains(TYPE_EVALUATOR)),
            TaskKind::TypeAndQuality => assert!(body.contains(TYPE_EVALUATOR) && body.contains(QUALITY_EVALUATOR)),
        }
        if prompt.task.is_classification() {
            assert!(body.ends_with(
                "#ARGUMENT:\n\"On my perspective, I think that the face is a natural landform because I dont think that there is any life on Mars. In these next few paragraphs, I'll be talking about how I think that is is a natural landform\""
            ), "{name}");
        }
    }
}

#[test]
fn goldens_directory_has_no_strays() {
    let names: std::collections::BTreeSet<String> = all_prompts().into_iter().map(|(n, _)| n).collect();
    for entry in std::fs::read_dir(golden_dir()).unwrap() {
        let name = entry.unwrap().file_name().into_string().unwrap();
        assert!(names.contains(&name), "stray golden {name}");
    }
}
