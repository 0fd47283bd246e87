use std::path::PathBuf;

use covop_core::ExperimentPlan;

fn plans_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../plans")
}

#[test]
fn shipped_plans_parse_and_resolve() {
    let mut count = 0;
    for entry in std::fs::read_dir(plans_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let text = std::fs::read_to_string(&path).unwrap();
            let plan = ExperimentPlan::from_json(&text)
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            for point in &plan.sweep {
                plan.resolve(point)
                    .unwrap_or_else(|e| panic!("{} / {}: {e}", path.display(), point.label));
            }
            count += 1;
        }
    }
    assert!(count >= 6);
}
