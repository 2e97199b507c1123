//! Split a secret into shares on a key sequence, rebuild it from any `p` of
//! them, and show that `p - 1` shares leave the secret undetermined.

use shamir_consensus::shamir::{
    reconstruct, share, underdetermination_certificate, Certificate, SecretPolynomial,
};
use shamir_consensus::{stream, Result};

pub struct ShareSummary {
    pub secret: f64,
    pub recovered: f64,
    pub below_threshold: Certificate,
}

pub fn run_example() -> Result<ShareSummary> {
    let key = [4, 7, 15, 3];
    let p = 3;
    let mut rng = stream(7, &[1]);
    let poly = SecretPolynomial::random(31.731, p - 1, &mut rng);
    let shares = share(&poly, &key)?;
    for s in &shares {
        println!("share at {:>2}: {:.6}", s.point, s.value);
    }

    let recovered = reconstruct(&shares[1..])?;
    println!("secret {:.6}, recovered from 3 shares {:.6}", poly.constant_term(), recovered);

    let below_threshold = underdetermination_certificate(&shares[..p - 1], p - 1);
    match below_threshold {
        Certificate::Free { dimension } => {
            println!("2 shares: secret unconstrained ({dimension} free direction)")
        }
        Certificate::Determined { constant } => println!("2 shares pin the secret to {constant}"),
    }
    Ok(ShareSummary {
        secret: poly.constant_term(),
        recovered,
        below_threshold,
    })
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}
