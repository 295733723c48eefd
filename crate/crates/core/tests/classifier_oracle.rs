mod common;

use ftirpad::classifier::{train_svm, SolverParams};
use ftirpad::features::DescriptorKind;

#[test]
fn smo_objective_matches_projected_gradient_oracle() {
    let (rows, labels) = common::svm_oracle_set(3);
    let model = train_svm(&rows, &labels, 1.0, 0, DescriptorKind::Lbp, &SolverParams::default()).unwrap();
    assert!(model.converged);
    let oracle = common::projected_gradient_svm_objective(&rows, &labels, 1.0, 1_000_000);
    let rel = (model.objective_value - oracle).abs() / oracle;
    assert!(rel <= 1e-4, "smo {} oracle {oracle} relative gap {rel}", model.objective_value);
}
