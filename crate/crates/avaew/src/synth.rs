//! Synthetic ML-1M-format data (`ratings.dat`, `movies.dat`, `users.dat`)
//! with planted structure: a movie's latent taste vector is the mean of its
//! genres' vectors plus noise, so side information predicts the item
//! embedding. Popularity is Zipf-like, which leaves a long tail of items
//! below any interaction threshold.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::{Error, Result};

pub const GENRES: [&str; 18] = [
    "Action", "Adventure", "Animation", "Children's", "Comedy", "Crime", "Documentary", "Drama", "Fantasy",
    "Film-Noir", "Horror", "Musical", "Mystery", "Romance", "Sci-Fi", "Thriller", "War", "Western",
];
const AGES: [u32; 7] = [1, 18, 25, 35, 45, 50, 56];
const LATENT: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthSpec {
    pub users: usize,
    pub items: usize,
    pub ratings: usize,
    /// Zipf exponent of item popularity.
    pub skew: f64,
    /// Std of item-specific noise around the genre mean.
    pub item_noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            users: 600,
            items: 400,
            ratings: 60_000,
            skew: 1.0,
            item_noise: 0.3,
            seed: 7,
        }
    }
}

fn gauss(rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..LATENT).map(|_| StandardNormal.sample(rng)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn write_ml1m(dir: &Path, spec: &SynthSpec) -> Result<()> {
    if spec.users == 0 || spec.items == 0 {
        return Err(Error::Config("synthetic data needs at least one user and one item".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let genre_vecs: Vec<Vec<f64>> = GENRES.iter().map(|_| gauss(&mut rng)).collect();
    let noise = Normal::new(0.0, spec.item_noise).map_err(|e| Error::Config(e.to_string()))?;

    let open = |name: &str| -> Result<(BufWriter<File>, std::path::PathBuf)> {
        let p = dir.join(name);
        Ok((BufWriter::new(File::create(&p).map_err(|e| Error::io(&p, e))?), p))
    };

    let (mut w, p) = open("movies.dat")?;
    let mut item_vecs = Vec::with_capacity(spec.items);
    for id in 1..=spec.items {
        let k = rng.random_range(1..=3);
        let mut gs: Vec<usize> = sample(&mut rng, GENRES.len(), k).into_vec();
        gs.sort_unstable();
        let mut v = vec![0.0; LATENT];
        for &g in &gs {
            for (a, b) in v.iter_mut().zip(&genre_vecs[g]) {
                *a += b / k as f64;
            }
        }
        for a in &mut v {
            *a += noise.sample(&mut rng);
        }
        item_vecs.push(v);
        let year = rng.random_range(1950..=2000);
        let names: Vec<&str> = gs.iter().map(|&g| GENRES[g]).collect();
        writeln!(w, "{id}::Movie {id} ({year})::{}", names.join("|")).map_err(|e| Error::io(&p, e))?;
    }
    w.flush().map_err(|e| Error::io(&p, e))?;

    let (mut w, p) = open("users.dat")?;
    let mut user_vecs = Vec::with_capacity(spec.users);
    for id in 1..=spec.users {
        user_vecs.push(gauss(&mut rng));
        let gender = if rng.random_bool(0.5) { "M" } else { "F" };
        let age = AGES[rng.random_range(0..AGES.len())];
        let occ = rng.random_range(0..21);
        writeln!(w, "{id}::{gender}::{age}::{occ}::{:05}", rng.random_range(0..100_000)).map_err(|e| Error::io(&p, e))?;
    }
    w.flush().map_err(|e| Error::io(&p, e))?;

    // popularity rank is a random permutation so ids carry no signal
    let ranks = sample(&mut rng, spec.items, spec.items).into_vec();
    let weights: Vec<f64> = ranks.iter().map(|&r| (r as f64 + 1.0).powf(-spec.skew)).collect();
    let pick = WeightedIndex::new(&weights).map_err(|e| Error::Config(e.to_string()))?;
    let (mut w, p) = open("ratings.dat")?;
    let mut ts: i64 = 956_703_932;
    for _ in 0..spec.ratings {
        let u = rng.random_range(0..spec.users);
        let i = pick.sample(&mut rng);
        let score = dot(&user_vecs[u], &item_vecs[i]) / (LATENT as f64).sqrt() + 0.5 * Distribution::<f64>::sample(&StandardNormal, &mut rng);
        let rating = match score {
            s if s < -0.8 => 1,
            s if s < -0.3 => 2,
            s if s < 0.0 => 3,
            s if s < 0.6 => 4,
            _ => 5,
        };
        ts += rng.random_range(1..120);
        writeln!(w, "{}::{}::{rating}::{ts}", u + 1, i + 1).map_err(|e| Error::io(&p, e))?;
    }
    w.flush().map_err(|e| Error::io(&p, e))
}
