//! Designated checks per (fault, program) pair, pinned row by row.

use fitprobe::faults::catalog;

const TABLE: &[(&str, &str, &[&str])] = &[
    ("missing-input-norm", "RSD", &["Uns-Inps"]),
    ("over-scaled-outputs", "R", &["Uns-Outs"]),
    ("redundant-norm", "RSD", &["Uns-Inps"]),
    ("flipped-gradient", "RSD", &["Div-Loss"]),
    ("missing-softmax", "SD", &["Inv-Outs"]),
    ("softmax-in-and-out-loss", "SD", &[]),
    ("softmax-wrong-axis", "SD", &["Inv-Outs", "Inv-Out-Dep"]),
    ("ce-wrong-axis", "SD", &["PI-Loss", "Inv-Loss-Dep"]),
    ("mse-wrong-broadcast", "R", &[]),
    ("inverted-ce-mean-sum", "SD", &["PI-Loss"]),
    ("shuffle-features-only", "RSD", &["Corrupted-Labels"]),
    ("invalid-augmentation", "SD", &["Shifted-Augmented-Data"]),
    ("constant-weights", "RSD", &["Un-Sym-W"]),
    ("dummy-weights", "RSD", &["PI-W"]),
    ("mse-for-ce", "SD", &[]),
    ("ce-for-mse", "R", &[]),
    ("low-lr", "RSD", &["W-Up-Slow"]),
    ("high-lr", "RD", &["W-Up-Fast"]),
    ("high-lr", "S", &[]),
    ("adam-epsilon", "D", &["W-Up-Fast"]),
    ("missing-batchnorm", "D", &["Uns-Act-LS"]),
    ("no-batchnorm-update", "D", &["Uns-Mode-Tr"]),
    ("low-lambda", "RS", &["Zero-Loss"]),
    ("high-lambda", "RS", &["Over-Reg-Loss"]),
    ("high-keep-p", "D", &["Zero-Loss"]),
    ("low-keep-p", "D", &["Uns-Mode-Tr"]),
    ("unbalanced-data", "SD", &["Unbalanced-Labels"]),
];

#[test]
fn every_table_row_is_in_the_catalog() {
    let cat = catalog();
    let mut rows = 0;
    for &(fault, programs, checks) in TABLE {
        for p in programs.chars() {
            rows += 1;
            let e = cat
                .iter()
                .find(|e| e.fault.name() == fault && e.program.short() == p)
                .unwrap_or_else(|| panic!("{fault}/{p} missing"));
            let names: Vec<&str> = e.expected.iter().map(|c| c.name()).collect();
            if fault == "missing-batchnorm" {
                // both activation-deviation checks count for this row
                assert_eq!(names, ["Uns-Act-LS", "Uns-Act-HS"]);
            } else {
                assert_eq!(names, checks, "{fault}/{p}");
            }
        }
    }
    assert_eq!(rows, cat.len());
}
