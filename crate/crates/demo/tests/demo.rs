use seqrec_demo::{loss_curve, train_demo};

#[test]
fn curves_have_one_triple_per_step() {
    let c = loss_curve("bpr", &[0.0], -2.0, 2.0, 5).unwrap();
    assert_eq!(c.len(), 15);
    assert_eq!(c[6], 0.0);
    assert!((c[7] - std::f64::consts::LN_2).abs() < 1e-12);
    assert!((c[8] + 0.5).abs() < 1e-12);
    assert!(c[14].abs() < c[2].abs(), "gradient shrinks as the margin grows");
}

#[test]
fn curves_reject_bad_input() {
    assert!(loss_curve("ce-all", &[0.0], -1.0, 1.0, 3).is_err());
    assert!(loss_curve("nope", &[0.0], -1.0, 1.0, 3).is_err());
    assert!(loss_curve("bce", &[0.0], 1.0, 1.0, 3).is_err());
}

#[test]
fn tiny_training_run_reports_every_position() {
    let run = train_demo("ce-all", 1, 3, 1).unwrap();
    assert_eq!(run.epochs.len(), 3);
    assert_eq!(run.positions.last().unwrap().position, run.max_len + 3);
    assert!(run.test_hit10 > 0.0);
    let again = train_demo("ce-all", 1, 3, 1).unwrap();
    assert_eq!(run.test_hit10, again.test_hit10);
    assert!(train_demo("mlm", 1, 1, 1).is_ok());
}
