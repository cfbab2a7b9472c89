//! Accuracy, F1 and ROC AUC on a handful of predictions.

use mixnet::metrics::{accuracy, auc, f1, score, F1Kind};

fn main() -> mixnet::Result<()> {
    let y = [1, 1, 0, 0];
    let y_hat = [1, 0, 0, 0];
    println!("accuracy {}", accuracy(&y, &y_hat)?);
    println!("binary F1 {:.4}", f1(&y, &y_hat, F1Kind::Binary)?);
    println!("macro F1 {:.4}", f1(&y, &y_hat, F1Kind::Macro)?);

    let scores = [0.9, 0.4, 0.35, 0.1];
    println!("AUC {:.3}", auc(&y, &scores)?);

    let probs: Vec<Vec<f64>> = scores.iter().map(|&p| vec![1.0 - p, p]).collect();
    println!("{:?}", score(&y, &probs, F1Kind::Binary)?);
    Ok(())
}
