//! Building, contracting and storing tensor trains.
//!
//! cargo run --release --example tensor_train_basics

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use afqmc_tt::tensor_train::{ProductState, TensorTrain};

fn main() -> afqmc_tt::Result<()> {
    let d = 10;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let tt = TensorTrain::random(d, &[2, 4, 4, 4, 4, 4, 4, 4, 2], &mut rng)?;
    println!("ranks {:?}, norm {:.6}", tt.ranks(), tt.norm());

    // contraction with a product state against the dense expansion
    let phi = ProductState::random(d, &mut rng);
    let fast = tt.product_overlap(&phi)?;
    let dense: f64 = tt.to_dense()?.iter().zip(phi.to_dense()?).map(|(a, b)| a * b).sum();
    println!("<tt|phi> = {fast:.12} (dense {dense:.12})");

    // a product state is a rank-1 train
    let as_tt = TensorTrain::from_product(&phi);
    println!("<tt|phi> via two trains = {:.12}", tt.overlap(&as_tt)?);

    let path = std::env::temp_dir().join("example.tt");
    tt.save(&path)?;
    let back = TensorTrain::load(&path)?;
    println!("round trip through {}: identical = {}", path.display(), back == tt);
    Ok(())
}
