// The evaluation metrics on small hand-made inputs.

use std::error::Error;

use sketchblend::metrics::{
    density, e_distance, kl_divergence, non_linearity, plagiarism, uniform, wilcoxon_rank_sum, WildcardRule, KL_EPSILON,
};
use sketchblend::sketch::parse_sketch;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let a = parse_sketch("----\n-#--\n####\n")?;
    let b = parse_sketch("----\n--?-\n####\n")?;
    for rule in [WildcardRule::NotSolid, WildcardRule::AsSolid] {
        println!(
            "{rule:?}: density {:.3}/{:.3}, non-linearity {:.3}/{:.3}",
            density(&a, rule),
            density(&b, rule),
            non_linearity(&a, rule)?,
            non_linearity(&b, rule)?
        );
    }
    println!("shared rows and columns: {}", plagiarism(&a, &b)?);

    let gen = [[0.2, 1.0], [0.3, 0.5], [0.25, 2.0]];
    let train = [[0.4, 0.1], [0.5, 0.3], [0.45, 0.2]];
    println!("e-distance {:.4}", e_distance(&gen, &train)?);

    let p = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    println!(
        "KL(one-hot || uniform) = {:.4} (ln 6 = {:.4})",
        kl_divergence(&p, &uniform(6), KL_EPSILON),
        6f64.ln()
    );

    let t = wilcoxon_rank_sum(&[1.0, 2.0], &[3.0, 4.0])?;
    println!("rank sum {} p = {:.4}", t.statistic, t.p_value);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
