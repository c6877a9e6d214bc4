use killmatrix::corpus::tutorial;
use killmatrix::groundtruth::{build_coverage, build_kill_matrix};
use killmatrix::mutation::generate_project_mutants;

fn main() {
    for p in tutorial() {
        let cov = build_coverage(&p.program, 1_000_000).unwrap();
        let ms = generate_project_mutants(&p.name, &p.program);
        let km = build_kill_matrix(&p.program, &ms, &cov, 1_000_000).unwrap();
        let v = km.suite_verdicts();
        let det = v.values().filter(|v| v.is_detected()).count();
        let pairs_det = km.iter().filter(|(_, _, e)| e.detected).count();
        println!(
            "{:10} mutants {:4} covered {:4} detected {:4} pairs {:4} pairs_detected {:4}",
            p.name, ms.len(), v.len(), det, km.len(), pairs_det
        );
    }
}
