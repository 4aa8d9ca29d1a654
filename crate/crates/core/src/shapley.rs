//! Exact Shapley values of cooperative games given as coalition tables.
//!
//! A game on `n` players is a slice of `2^n` values indexed by bitmask:
//! bit `i` set means player `i` is in the coalition.

use crate::error::{Error, Result};
use crate::scalar::{CompensatedSum, Scalar};

/// Largest number of players accepted by exact enumeration.
pub const MAX_PLAYERS: usize = 20;

pub fn check_player_count(n: usize) -> Result<()> {
    if n > MAX_PLAYERS {
        return Err(Error::CapExceeded {
            players: n,
            cap: MAX_PLAYERS,
        });
    }
    Ok(())
}

/// `s! (n - s - 1)! / n!` for `s = 0..n`.
pub fn coalition_weights(n: usize) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    // 1 / (n * C(n-1, s)), with the binomial built up exactly in f64
    let mut out = Vec::with_capacity(n);
    let mut binom = 1.0f64;
    for s in 0..n {
        out.push(1.0 / (n as f64 * binom));
        binom = binom * (n - 1 - s) as f64 / (s + 1) as f64;
    }
    out
}

/// Shapley values of the game `v` on `n` players.
pub fn shapley<T: Scalar>(v: &[T], n: usize) -> Result<Vec<T>> {
    check_player_count(n)?;
    let size = 1usize << n;
    if v.len() != size {
        return Err(Error::MissingCoalition {
            expected: size,
            actual: v.len(),
        });
    }
    let weights: Vec<T> = coalition_weights(n).into_iter().map(T::lit).collect();
    Ok((0..n).map(|i| player_value(v, n, i, &weights)).collect())
}

fn player_value<T: Scalar>(v: &[T], n: usize, i: usize, weights: &[T]) -> T {
    let bit = 1usize << i;
    let mut acc = CompensatedSum::new();
    for mask in 0..(1usize << n) {
        if mask & bit == 0 {
            let s = mask.count_ones() as usize;
            acc.add(weights[s] * (v[mask | bit] - v[mask]));
        }
    }
    acc.value()
}

/// Shapley values of a game given as a function of the coalition mask.
pub fn shapley_fn<T: Scalar>(n: usize, game: impl Fn(usize) -> T) -> Result<Vec<T>> {
    check_player_count(n)?;
    let table: Vec<T> = (0..(1usize << n)).map(game).collect();
    shapley(&table, n)
}

/// Feature mask of the players listed in `members`.
pub fn mask_of(members: &[usize]) -> usize {
    members.iter().fold(0, |m, &i| m | (1 << i))
}
