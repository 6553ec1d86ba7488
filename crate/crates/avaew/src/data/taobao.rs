//! Taobao display-ad click logs.
//!
//! Item side: category, campaign, customer, brand and a log2 price bucket.
//! Other fields: user, placement (`pid`) and seven user-profile columns.
//! Profile cells that are missing or blank become their own `""` value.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use avaew_core::features::{Example, FeatureField, FeatureSchema, FieldKind};

use super::{Loaded, Vocab, Warnings};
use crate::{Error, Result};

const AD_SIDE: [&str; 5] = ["cate", "campaign", "customer", "brand", "price"];
/// `user_profile.csv` columns kept, by header name.
const PROFILE: [&str; 7] = [
    "cms_group_id",
    "final_gender_code",
    "age_level",
    "pvalue_level",
    "shopping_level",
    "occupation",
    "new_user_class_level",
];

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::format(path, 0, format!("{other:?}")),
        })
}

fn column(headers: &csv::StringRecord, path: &Path, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim_start_matches('\u{feff}') == name)
        .ok_or_else(|| Error::format(path, 1, format!("missing column `{name}`")))
}

pub fn price_bucket(price: f64) -> u32 {
    if price.is_finite() && price > 0.0 {
        (price + 1.0).log2().floor() as u32
    } else {
        0
    }
}

pub fn load(dir: &Path) -> Result<Loaded> {
    let mut warnings = Warnings::default();

    let ad_path = dir.join("ad_feature.csv");
    let mut rd = reader(&ad_path)?;
    let h = rd.headers().map_err(|e| Error::format(&ad_path, 1, e.to_string()))?.clone();
    let ad_cols = ["adgroup_id", "cate_id", "campaign_id", "customer", "brand", "price"]
        .map(|c| column(&h, &ad_path, c));
    let ad_cols = ad_cols.into_iter().collect::<Result<Vec<_>>>()?;
    let mut ads: BTreeMap<u32, [String; 5]> = BTreeMap::new();
    for rec in rd.records() {
        let parsed = rec.ok().and_then(|r| {
            let id: u32 = r.get(ad_cols[0])?.parse().ok()?;
            let price: f64 = r.get(ad_cols[5])?.parse().ok()?;
            let side = [
                r.get(ad_cols[1])?.to_string(),
                r.get(ad_cols[2])?.to_string(),
                r.get(ad_cols[3])?.to_string(),
                r.get(ad_cols[4])?.to_string(),
                price_bucket(price).to_string(),
            ];
            Some((id, side))
        });
        match parsed {
            Some((id, side)) => {
                ads.insert(id, side);
            }
            None => warnings.malformed += 1,
        }
    }

    let profile_path = dir.join("user_profile.csv");
    let mut rd = reader(&profile_path)?;
    let h = rd.headers().map_err(|e| Error::format(&profile_path, 1, e.to_string()))?.clone();
    let uid_col = column(&h, &profile_path, "userid")?;
    let prof_cols = PROFILE
        .iter()
        .map(|c| column(&h, &profile_path, c))
        .collect::<Result<Vec<_>>>()?;
    let mut profiles: HashMap<u32, Vec<String>> = HashMap::new();
    for rec in rd.records() {
        let parsed = rec.ok().and_then(|r| {
            let id: u32 = r.get(uid_col)?.parse().ok()?;
            Some((id, prof_cols.iter().map(|&c| r.get(c).unwrap_or("").to_string()).collect()))
        });
        match parsed {
            Some((id, p)) => {
                profiles.insert(id, p);
            }
            None => warnings.malformed += 1,
        }
    }

    struct Click {
        user: u32,
        ts: i64,
        ad: u32,
        pid: String,
        label: u8,
    }
    let sample_path = dir.join("raw_sample.csv");
    let mut rd = reader(&sample_path)?;
    let h = rd.headers().map_err(|e| Error::format(&sample_path, 1, e.to_string()))?.clone();
    let cols = ["user", "time_stamp", "adgroup_id", "pid", "clk"]
        .map(|c| column(&h, &sample_path, c))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut clicks = Vec::new();
    for rec in rd.records() {
        let parsed = rec.ok().and_then(|r| {
            let label: u8 = r.get(cols[4])?.parse().ok()?;
            (label <= 1).then_some(())?;
            Some(Click {
                user: r.get(cols[0])?.parse().ok()?,
                ts: r.get(cols[1])?.parse().ok()?,
                ad: r.get(cols[2])?.parse().ok()?,
                pid: r.get(cols[3])?.to_string(),
                label,
            })
        });
        match parsed {
            Some(c) if ads.contains_key(&c.ad) => clicks.push(c),
            Some(_) => warnings.unknown_item += 1,
            None => warnings.malformed += 1,
        }
    }

    let missing = vec![String::new(); PROFILE.len()];
    let profile_of = |u: u32| profiles.get(&u).unwrap_or(&missing);
    let user_vocab = Vocab::from_values(clicks.iter().map(|c| c.user));
    let pid_vocab = Vocab::from_values(clicks.iter().map(|c| c.pid.clone()));
    let prof_vocabs: Vec<Vocab<String>> = (0..PROFILE.len())
        .map(|j| Vocab::from_values(clicks.iter().map(|c| profile_of(c.user)[j].clone())))
        .collect();
    let item_vocab = Vocab::from_values(ads.keys().copied());
    let side_vocabs: Vec<Vocab<String>> = (0..AD_SIDE.len())
        .map(|j| Vocab::from_values(ads.values().map(|s| s[j].clone())))
        .collect();

    let mut fields = vec![
        FeatureField::new("user", FieldKind::User, user_vocab.size()),
        FeatureField::new("pid", FieldKind::Context, pid_vocab.size()),
    ];
    for (name, v) in PROFILE.iter().zip(&prof_vocabs) {
        fields.push(FeatureField::new(*name, FieldKind::User, v.size()));
    }
    fields.push(FeatureField::new("item", FieldKind::ItemId, item_vocab.size()));
    for (name, v) in AD_SIDE.iter().zip(&side_vocabs) {
        fields.push(FeatureField::new(*name, FieldKind::ItemSide, v.size()));
    }
    let schema = FeatureSchema::new(fields)?;

    let expect = "built from the same rows";
    let examples = clicks
        .iter()
        .map(|c| {
            let mut ix: Vec<u32> = vec![user_vocab.get(&c.user).expect(expect), pid_vocab.get(&c.pid).expect(expect)];
            let prof = profile_of(c.user);
            ix.extend(prof_vocabs.iter().zip(prof).map(|(v, p)| v.get(p).expect(expect)));
            ix.push(item_vocab.get(&c.ad).expect(expect));
            let side = &ads[&c.ad];
            ix.extend(side_vocabs.iter().zip(side).map(|(v, s)| v.get(s).expect(expect)));
            Example::new(ix.iter().map(core::slice::from_ref), c.label, c.ts, c.ad)
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

    #[test]
    fn parses_the_three_tables() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("raw_sample.csv"),
            "user,time_stamp,adgroup_id,pid,nonclk,clk\n\
             581738,1494137644,1,430548_1007,1,0\n\
             449818,1494638778,3,430548_1007,0,1\n\
             7,1494638778,99,430539_1007,1,0\n\
             7,oops,3,430539_1007,1,0\n",
        )
        .unwrap();
        fs::write(
            dir.path().join("ad_feature.csv"),
            "adgroup_id,cate_id,campaign_id,customer,brand,price\n\
             1,6406,83237,1,95471,170.0\n3,6406,1,2,NULL,0.5\n",
        )
        .unwrap();
        fs::write(
            dir.path().join("user_profile.csv"),
            "userid,cms_segid,cms_group_id,final_gender_code,age_level,pvalue_level,shopping_level,occupation,new_user_class_level \n\
             581738,0,1,2,1,,3,0,3\n",
        )
        .unwrap();
        let l = load(dir.path()).unwrap();
        assert_eq!(l.examples.len(), 2);
        assert_eq!(l.schema.len(), 15);
        assert_eq!(l.schema.side_fields().len(), 5);
        assert_eq!(l.examples[1].label, 1);
        assert_eq!(l.examples[1].item_id, 3);
        assert_eq!(l.warnings.unknown_item, 1);
        assert_eq!(l.warnings.malformed, 1);
        for e in &l.examples {
            e.validate(&l.schema).unwrap();
        }
    }

    #[test]
    fn price_buckets() {
        assert_eq!(price_bucket(0.0), 0);
        assert_eq!(price_bucket(1.0), 1);
        assert_eq!(price_bucket(170.0), 7);
    }
}
