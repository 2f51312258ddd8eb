use ndarray::array;
use seqrec_core::losses::*;

const LN2: f64 = std::f64::consts::LN_2;
const TOL: f64 = 1e-6;

fn c(pos: f64, neg: &[f64]) -> CandidateScores {
    CandidateScores::new(pos, neg.to_vec())
}

fn close(a: f64, b: f64) {
    assert!((a - b).abs() < TOL, "{a} vs {b}");
}

#[test]
fn bpr_values() {
    close(bpr_loss(&c(0.0, &[0.0])).unwrap(), LN2);
    close(bpr_loss(&c(1.0, &[0.0])).unwrap(), 0.313262);
    close(bpr_loss(&c(0.0, &[0.0, 0.0])).unwrap(), LN2);
    assert!(bpr_loss(&c(5.0, &[0.0])).unwrap() < bpr_loss(&c(1.0, &[0.0])).unwrap());
}

#[test]
fn bpr_max_values() {
    close(bpr_max_loss(&c(0.0, &[0.0, 0.0])).unwrap(), LN2);
    close(bpr_max_loss(&c(1.0, &[0.0, 2.0])).unwrap(), 1.126928);
    close(bpr_max_loss(&c(0.3, &[-1.2])).unwrap(), bpr_loss(&c(0.3, &[-1.2])).unwrap());
}

#[test]
fn top1_values() {
    close(top1_loss(&c(0.0, &[0.0])).unwrap(), 1.0);
    close(top1_loss(&c(10.0, &[0.0])).unwrap(), 0.500045);
    for (p, n) in [(5.0, -3.0), (-4.0, 2.0), (0.0, 1.5)] {
        let v = top1_loss(&c(p, &[n])).unwrap();
        assert!(v > 0.0 && v < 2.0);
    }
}

#[test]
fn top1_max_values() {
    close(top1_max_loss(&c(1.0, &[0.0, 2.0])).unwrap(), 1.600529);
    close(top1_max_loss(&c(0.4, &[1.5, 1.5])).unwrap(), top1_loss(&c(0.4, &[1.5, 1.5])).unwrap());
}

#[test]
fn bce_values() {
    close(bce_loss(&[c(0.0, &[0.0])]).unwrap(), 2.0 * LN2);
    close(bce_loss(&[c(0.0, &[0.0]), c(0.0, &[0.0])]).unwrap(), 2.0 * LN2);
    assert!(bce_loss(&[c(40.0, &[-40.0])]).unwrap() < 1e-12);
}

#[test]
fn softmax_values() {
    let uniform = FullScores::dense(array![[0.0, 0.0, 0.0, 0.0]]);
    close(ce_last_loss(&uniform, 3).unwrap(), 4f64.ln());
    let peaked = FullScores::dense(array![[2.0, 0.0, 0.0, 0.0]]);
    close(ce_last_loss(&peaked, 1).unwrap(), 0.340753);
    let three = FullScores::dense(ndarray::Array2::zeros((3, 4)));
    close(enhanced_ce_loss(&three, &[1, 2, 3]).unwrap(), 4f64.ln());
    let two = FullScores::dense(array![[2.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0]]);
    close(enhanced_ce_loss(&two, &[1, 4]).unwrap(), 0.863524);
    close(mlm_loss(&FullScores::dense(array![[1.0, 1.0, 1.0, 1.0]]), &[2]).unwrap(), 4f64.ln());
    close(mlm_loss(&FullScores::dense(ndarray::Array2::zeros((2, 4))), &[1, 3]).unwrap(), 4f64.ln());
}

#[test]
fn mlm_and_all_timestep_targets_differ() {
    // same rows, but the masked objective predicts the item at the position
    // while the all-timestep objective predicts the next one
    let rows = FullScores::dense(array![[3.0, 0.0, -1.0], [0.5, 2.0, 0.0]]);
    let current = [1, 2];
    let next = [2, 3];
    let a = mlm_loss(&rows, &current).unwrap();
    let b = enhanced_ce_loss(&rows, &next).unwrap();
    assert!((a - b).abs() > 1e-3);
}

#[test]
fn vanishing_bpr_gradient() {
    let mut last = f64::INFINITY;
    for margin in [0.0, 1.0, 2.0, 5.0, 10.0, 20.0] {
        let (_, g) = bpr_loss_with_grad(&c(margin, &[0.0])).unwrap();
        let mag = g.pos.abs();
        assert!((mag - 1.0 / (1.0 + margin.exp())).abs() < 1e-15);
        assert!(mag < last);
        last = mag;
    }
    assert!(last < 1e-8);
}

#[test]
fn spec_strings() {
    let s: LossSpec = "loss=bpr-max negatives=100".parse().unwrap();
    assert_eq!((s.kind, s.negatives()), (LossKind::BprMax, 100));
    assert_eq!(s.to_string().parse::<LossSpec>().unwrap(), s);
    let m: LossSpec = "loss=mlm mask_prob=0.2".parse().unwrap();
    assert_eq!(m.to_string().parse::<LossSpec>().unwrap(), m);
}
