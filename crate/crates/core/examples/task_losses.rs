//! The three task losses on small hand-made inputs, plus semi-hard triplet
//! mining on a toy embedding.

use mixnet::losses::{ce_loss, mse_loss, triplet_loss, weighted_total};
use mixnet::model::mine_semi_hard_triplets;
use mixnet::nn::{softmax_rows, Tensor4};

fn main() -> mixnet::Result<()> {
    // two channels, three time points, residual of all ones
    let x = Tensor4::from_vec(1, 3, 2, vec![1.0; 6])?;
    let x_hat = Tensor4::from_vec(1, 3, 2, vec![0.0; 6])?;
    let (mse, _) = mse_loss(&x, &x_hat)?;
    println!("reconstruction: {mse}");

    let logits = Tensor4::from_vec(2, 1, 2, vec![0.0, 0.0, 3f64.ln(), 0.0])?;
    let probs = softmax_rows(&logits);
    let ce = ce_loss(&[0, 0], &probs)?;
    println!("probabilities {:?}, cross-entropy {ce:.4}", probs.data);

    let z = Tensor4::from_vec(
        6,
        1,
        2,
        vec![0.0, 0.0, 0.5, 0.0, 0.0, 0.4, 2.0, 2.0, 2.5, 2.0, 0.3, 0.3],
    )?;
    let labels = [0, 0, 0, 1, 1, 1];
    let mined = mine_semi_hard_triplets(&z, &labels, 1.0);
    for (t, b) in mined.triplets.iter().zip(&mined.branches) {
        println!(
            "anchor {} positive {} negative {} ({b:?})",
            t.anchor, t.positive, t.negative
        );
    }
    let (trip, _) = triplet_loss(&z, &mined.triplets, 1.0);
    println!("triplet: {trip:.4}");

    let total = weighted_total(&[mse, trip, ce], &[1.0 / 3.0; 3])?;
    println!("uniformly weighted total: {total:.4}");
    Ok(())
}
