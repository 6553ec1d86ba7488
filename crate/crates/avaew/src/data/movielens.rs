//! MovieLens loaders.
//!
//! ML-1M fields: `user, gender, age, occupation | item | year, genre`.
//! ML-25M fields: `user, rating_year | item | year, genre, tag`, where
//! `tag` holds the ten most frequent user tags of the movie.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use chrono::Datelike;

use avaew_core::features::{binarize_label, Example, FeatureField, FeatureSchema, FieldKind};

use super::{read_lines, title_year, Loaded, Vocab, Warnings};
use crate::{Error, Result};

struct User {
    gender: String,
    age: u32,
    occupation: u32,
}

struct Movie {
    year: Option<u16>,
    genres: Vec<String>,
}

pub fn load_ml1m(dir: &Path) -> Result<Loaded> {
    parse_ml1m(&dir.join("ratings.dat"), &dir.join("movies.dat"), &dir.join("users.dat"))
}

fn split_dat(line: &str) -> Vec<&str> {
    line.split("::").collect()
}

/// Parses the three `::`-separated ML-1M files. Malformed lines and
/// ratings of unknown users or movies are skipped and counted.
pub fn parse_ml1m(ratings: &Path, movies: &Path, users: &Path) -> Result<Loaded> {
    let mut warnings = Warnings::default();

    let mut user_rows: BTreeMap<u32, User> = BTreeMap::new();
    for line in read_lines(users)? {
        if line.is_empty() {
            continue;
        }
        let p = split_dat(&line);
        let parsed = (p.len() == 5)
            .then(|| Some((p[0].parse().ok()?, p[2].parse().ok()?, p[3].parse().ok()?)))
            .flatten();
        match parsed {
            Some((id, age, occupation)) if !p[1].is_empty() => {
                user_rows.insert(
                    id,
                    User {
                        gender: p[1].to_string(),
                        age,
                        occupation,
                    },
                );
            }
            _ => warnings.malformed += 1,
        }
    }

    let mut movie_rows: BTreeMap<u32, Movie> = BTreeMap::new();
    for line in read_lines(movies)? {
        if line.is_empty() {
            continue;
        }
        let parsed = line
            .split_once("::")
            .and_then(|(id, rest)| Some((id, rest.rsplit_once("::")?)));
        let Some((id, (title, genres))) = parsed else {
            warnings.malformed += 1;
            continue;
        };
        let genres: Vec<String> = genres.split('|').filter(|g| !g.is_empty()).map(str::to_string).collect();
        match id.parse::<u32>() {
            Ok(id) if !genres.is_empty() => {
                movie_rows.insert(
                    id,
                    Movie {
                        year: title_year(title),
                        genres,
                    },
                );
            }
            _ => warnings.malformed += 1,
        }
    }

    let user_vocab = Vocab::from_values(user_rows.keys().copied());
    let gender_vocab = Vocab::from_values(user_rows.values().map(|u| u.gender.clone()));
    let age_vocab = Vocab::from_values(user_rows.values().map(|u| u.age));
    let occ_vocab = Vocab::from_values(user_rows.values().map(|u| u.occupation));
    let item_vocab = Vocab::from_values(movie_rows.keys().copied());
    let year_vocab = Vocab::from_values(movie_rows.values().map(|m| m.year));
    let genre_vocab = Vocab::from_values(movie_rows.values().flat_map(|m| m.genres.iter().cloned()));

    let schema = FeatureSchema::new(vec![
        FeatureField::new("user", FieldKind::User, user_vocab.size()),
        FeatureField::new("gender", FieldKind::User, gender_vocab.size()),
        FeatureField::new("age", FieldKind::User, age_vocab.size()),
        FeatureField::new("occupation", FieldKind::User, occ_vocab.size()),
        FeatureField::new("item", FieldKind::ItemId, item_vocab.size()),
        FeatureField::new("year", FieldKind::ItemSide, year_vocab.size()),
        FeatureField::new("genre", FieldKind::ItemSide, genre_vocab.size()).multi(),
    ])?;

    let users: HashMap<u32, [u32; 4]> = user_rows
        .iter()
        .map(|(&id, u)| {
            let ix = [
                user_vocab.get(&id),
                gender_vocab.get(&u.gender),
                age_vocab.get(&u.age),
                occ_vocab.get(&u.occupation),
            ];
            (id, ix.map(|x| x.expect("built from the same rows")))
        })
        .collect();
    let movies: HashMap<u32, (u32, u32, Vec<u32>)> = movie_rows
        .iter()
        .map(|(&id, m)| {
            let mut genres: Vec<u32> = Vec::with_capacity(m.genres.len());
            for g in &m.genres {
                let ix = genre_vocab.get(g).expect("built from the same rows");
                if !genres.contains(&ix) {
                    genres.push(ix);
                }
            }
            let item = item_vocab.get(&id).expect("built from the same rows");
            let year = year_vocab.get(&m.year).expect("built from the same rows");
            (id, (item, year, genres))
        })
        .collect();

    let mut examples = Vec::new();
    for line in read_lines(ratings)? {
        if line.is_empty() {
            continue;
        }
        let p = split_dat(&line);
        let parsed = (p.len() == 4)
            .then(|| {
                Some((
                    p[0].parse::<u32>().ok()?,
                    p[1].parse::<u32>().ok()?,
                    binarize_label(p[2].parse::<i64>().ok()?).ok()?,
                    p[3].parse::<i64>().ok()?,
                ))
            })
            .flatten();
        let Some((user, movie, label, ts)) = parsed else {
            warnings.malformed += 1;
            continue;
        };
        let Some(u) = users.get(&user) else {
            warnings.unknown_user += 1;
            continue;
        };
        let Some((item, year, genres)) = movies.get(&movie) else {
            warnings.unknown_item += 1;
            continue;
        };
        examples.push(Example::new(
            [&u[0..1], &u[1..2], &u[2..3], &u[3..4], &[*item][..], &[*year][..], &genres[..]],
            label,
            ts,
            movie,
        ));
    }

    Ok(Loaded {
        schema,
        examples,
        warnings,
    })
}

/// Binarizes a half-star rating in `0.5..=5.0`: 1 iff above 3.
pub fn binarize_half_star(rating: f64) -> Option<u8> {
    (0.5..=5.0).contains(&rating).then_some(u8::from(rating > 3.0))
}

const TOP_TAGS: usize = 10;
const NO_TAG: &str = "<none>";

fn csv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, 0, format!("{other:?}")),
    }
}

/// Calendar year (UTC) of a Unix timestamp.
pub fn year_of(ts: i64) -> i32 {
    chrono::DateTime::from_timestamp(ts, 0).map_or(1970, |d| d.year())
}

/// ML-25M from `ratings.csv`, `movies.csv` and (optional) `tags.csv`.
pub fn load_ml25m(dir: &Path) -> Result<Loaded> {
    let mut warnings = Warnings::default();
    let movies_path = dir.join("movies.csv");
    let mut movie_rows: BTreeMap<u32, Movie> = BTreeMap::new();
    for rec in csv_reader(&movies_path)?.records() {
        let Ok(rec) = rec else {
            warnings.malformed += 1;
            continue;
        };
        let (Some(id), Some(title), Some(genres)) = (rec.get(0), rec.get(1), rec.get(2)) else {
            warnings.malformed += 1;
            continue;
        };
        let genres: Vec<String> = genres.split('|').filter(|g| !g.is_empty()).map(str::to_string).collect();
        match id.parse::<u32>() {
            Ok(id) if !genres.is_empty() => {
                movie_rows.insert(
                    id,
                    Movie {
                        year: title_year(title),
                        genres,
                    },
                );
            }
            _ => warnings.malformed += 1,
        }
    }

    let mut tag_counts: BTreeMap<u32, BTreeMap<String, usize>> = BTreeMap::new();
    let tags_path = dir.join("tags.csv");
    if tags_path.exists() {
        for rec in csv_reader(&tags_path)?.records() {
            let Some((movie, tag)) = rec.ok().and_then(|r| Some((r.get(1)?.parse::<u32>().ok()?, r.get(2)?.trim().to_lowercase())))
            else {
                warnings.malformed += 1;
                continue;
            };
            if !tag.is_empty() {
                *tag_counts.entry(movie).or_default().entry(tag).or_default() += 1;
            }
        }
    }
    let top_tags: BTreeMap<u32, Vec<String>> = movie_rows
        .keys()
        .map(|&id| {
            let mut tags: Vec<(&String, &usize)> = tag_counts.get(&id).map(|m| m.iter().collect()).unwrap_or_default();
            tags.sort_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)));
            let mut top: Vec<String> = tags.into_iter().take(TOP_TAGS).map(|(t, _)| t.clone()).collect();
            if top.is_empty() {
                top.push(NO_TAG.to_string());
            }
            (id, top)
        })
        .collect();

    struct Rating {
        user: u32,
        movie: u32,
        label: u8,
        ts: i64,
    }
    let ratings_path = dir.join("ratings.csv");
    let mut ratings = Vec::new();
    for rec in csv_reader(&ratings_path)?.records() {
        let parsed = rec.ok().and_then(|r| {
            Some(Rating {
                user: r.get(0)?.parse().ok()?,
                movie: r.get(1)?.parse().ok()?,
                label: binarize_half_star(r.get(2)?.parse().ok()?)?,
                ts: r.get(3)?.parse().ok()?,
            })
        });
        match parsed {
            Some(r) if movie_rows.contains_key(&r.movie) => ratings.push(r),
            Some(_) => warnings.unknown_item += 1,
            None => warnings.malformed += 1,
        }
    }

    let user_vocab = Vocab::from_values(ratings.iter().map(|r| r.user));
    let ryear_vocab = Vocab::from_values(ratings.iter().map(|r| year_of(r.ts)));
    let item_vocab = Vocab::from_values(movie_rows.keys().copied());
    let year_vocab = Vocab::from_values(movie_rows.values().map(|m| m.year));
    let genre_vocab = Vocab::from_values(movie_rows.values().flat_map(|m| m.genres.iter().cloned()));
    let tag_vocab = Vocab::from_values(top_tags.values().flatten().cloned());

    let schema = FeatureSchema::new(vec![
        FeatureField::new("user", FieldKind::User, user_vocab.size()),
        FeatureField::new("rating_year", FieldKind::Context, ryear_vocab.size()),
        FeatureField::new("item", FieldKind::ItemId, item_vocab.size()),
        FeatureField::new("year", FieldKind::ItemSide, year_vocab.size()),
        FeatureField::new("genre", FieldKind::ItemSide, genre_vocab.size()).multi(),
        FeatureField::new("tag", FieldKind::ItemSide, tag_vocab.size()).multi(),
    ])?;

    let movies: HashMap<u32, (u32, u32, Vec<u32>, Vec<u32>)> = movie_rows
        .iter()
        .map(|(&id, m)| {
            let mut genres: Vec<u32> = m.genres.iter().filter_map(|g| genre_vocab.get(g)).collect();
            genres.dedup();
            let tags = top_tags[&id].iter().filter_map(|t| tag_vocab.get(t)).collect();
            let item = item_vocab.get(&id).expect("built from the same rows");
            let year = year_vocab.get(&m.year).expect("built from the same rows");
            (id, (item, year, genres, tags))
        })
        .collect();

    let examples = ratings
        .iter()
        .map(|r| {
            let (item, year, genres, tags) = &movies[&r.movie];
            let user = user_vocab.get(&r.user).expect("built from the same rows");
            let ry = ryear_vocab.get(&year_of(r.ts)).expect("built from the same rows");
            Example::new(
                [&[user][..], &[ry][..], &[*item][..], &[*year][..], &genres[..], &tags[..]],
                r.label,
                r.ts,
                r.movie,
            )
        })
        .collect();

    Ok(Loaded {
        schema,
        examples,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, name: &str, body: &[u8]) {
        fs::write(dir.join(name), body).unwrap();
    }

    fn ml1m_fixture() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "users.dat",
            b"1::F::1::10::48067\n2::M::56::16::70072\nbroken line\n",
        );
        write(
            dir.path(),
            "movies.dat",
            b"1193::One Flew Over the Cuckoo's Nest (1975)::Drama\n\
              2355::Bug's Life, A (1998)::Animation|Children's|Comedy\n\
              1::Toy Story (1995)::Animation|Children's\n\
              3::Caf\xe9 (1995)::Comedy\n",
        );
        write(
            dir.path(),
            "ratings.dat",
            b"1::1193::5::978300760\n1::1::3::978302109\n2::2355::4::978298413\n\
              9::1::4::978300000\n1::4242::4::978300000\n1::1::7::1\nnonsense\n",
        );
        dir
    }

    #[test]
    fn parses_published_record_format() {
        let dir = ml1m_fixture();
        let l = load_ml1m(dir.path()).unwrap();
        assert_eq!(l.examples.len(), 3);
        let first = &l.examples[0];
        assert_eq!(first.item_id, 1193);
        assert_eq!(first.label, 1);
        assert_eq!(first.timestamp, 978300760);
        assert_eq!(first.field(0), &[0]); // user 1 is the smallest id
        assert_eq!(l.examples[1].label, 0);

        let genre = l.schema.position("genre").unwrap();
        assert_eq!(l.examples[1].field(genre).len(), 2); // Animation|Children's
        assert_eq!(l.examples[2].field(genre).len(), 3);
        assert_eq!(
            l.warnings,
            Warnings {
                malformed: 3,
                unknown_user: 1,
                unknown_item: 1
            }
        );
        assert_eq!(l.schema.field(l.schema.item_field()).vocab_size, 4);
        for e in &l.examples {
            e.validate(&l.schema).unwrap();
        }
    }

    #[test]
    fn empty_ratings_yield_no_examples_and_no_warnings() {
        let dir = ml1m_fixture();
        write(dir.path(), "ratings.dat", b"");
        write(dir.path(), "users.dat", b"1::F::1::10::48067\n");
        let l = load_ml1m(dir.path()).unwrap();
        assert!(l.examples.is_empty());
        assert_eq!(l.warnings.total(), 0);
    }

    #[test]
    fn missing_file_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_ml1m(dir.path()).unwrap_err();
        assert!(err.to_string().contains("users.dat"), "{err}");
    }

    #[test]
    fn calendar_years() {
        assert_eq!(year_of(0), 1970);
        assert_eq!(year_of(978300760), 2000);
        assert_eq!(year_of(1_574_327_703), 2019);
        assert_eq!(year_of(-1), 1969);
    }

    #[test]
    fn ml25m_csv() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "movies.csv",
            b"movieId,title,genres\n1,Toy Story (1995),Adventure|Animation\n2,\"Jumanji, the game (1995)\",Adventure\n",
        );
        write(
            dir.path(),
            "ratings.csv",
            b"userId,movieId,rating,timestamp\n1,1,3.5,1147880044\n1,2,3.0,1147868817\n2,9,4.0,1\n2,1,9,1\n",
        );
        write(
            dir.path(),
            "tags.csv",
            b"userId,movieId,tag,timestamp\n1,1,Pixar,1\n2,1,pixar ,2\n3,1,fun,3\n",
        );
        let l = load_ml25m(dir.path()).unwrap();
        assert_eq!(l.examples.len(), 2);
        assert_eq!(l.examples[0].label, 1);
        assert_eq!(l.examples[1].label, 0);
        let tag = l.schema.position("tag").unwrap();
        assert_eq!(l.examples[0].field(tag).len(), 2);
        assert_eq!(l.examples[1].field(tag).len(), 1); // "<none>"
        assert_eq!(l.warnings.unknown_item, 1);
        assert_eq!(l.warnings.malformed, 1);
    }

    #[test]
    fn half_star_labels() {
        assert_eq!(binarize_half_star(0.5), Some(0));
        assert_eq!(binarize_half_star(3.5), Some(1));
        assert_eq!(binarize_half_star(5.5), None);
    }
}
