//! Rating data: MovieLens `u.data` ingestion, the immutable rating matrix,
//! per-trial holdout sampling and forged-profile injection.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const MIN_RATING: u8 = 1;
pub const MAX_RATING: u8 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UserId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ItemId(pub u32);

macro_rules! id_impls {
    ($t:ident) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }

        impl FromStr for $t {
            type Err = std::num::ParseIntError;

            fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
                s.trim().parse().map($t)
            }
        }
    };
}

id_impls!(UserId);
id_impls!(ItemId);

fn check_rating(rating: i64) -> Option<u8> {
    if (MIN_RATING as i64..=MAX_RATING as i64).contains(&rating) {
        Some(rating as u8)
    } else {
        None
    }
}

/// One user's ratings, sorted by item id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Profile {
    entries: Vec<(ItemId, u8)>,
    sum: u64,
    sum_sq: u64,
}

impl Profile {
    fn from_sorted(entries: Vec<(ItemId, u8)>) -> Self {
        let sum = entries.iter().map(|&(_, r)| r as u64).sum();
        let sum_sq = entries.iter().map(|&(_, r)| (r as u64) * (r as u64)).sum();
        Profile {
            entries,
            sum,
            sum_sq,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(ItemId, u8)] {
        &self.entries
    }

    pub fn items(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.entries.iter().map(|&(item, _)| item)
    }

    pub fn rating(&self, item: ItemId) -> Option<u8> {
        self.entries
            .binary_search_by_key(&item, |&(i, _)| i)
            .ok()
            .map(|idx| self.entries[idx].1)
    }

    pub fn sum(&self) -> u64 {
        self.sum
    }

    /// Sum of squared ratings, i.e. the squared L2 norm of the rating vector.
    pub fn sum_sq(&self) -> u64 {
        self.sum_sq
    }

    pub fn norm(&self) -> f64 {
        (self.sum_sq as f64).sqrt()
    }

    pub fn mean(&self) -> Option<f64> {
        if self.entries.is_empty() {
            None
        } else {
            Some(self.sum as f64 / self.entries.len() as f64)
        }
    }

    /// The same profile with the rating on `item` removed (a no-op if absent).
    pub fn without(&self, item: ItemId) -> Profile {
        match self.entries.binary_search_by_key(&item, |&(i, _)| i) {
            Ok(idx) => {
                let mut entries = self.entries.clone();
                entries.remove(idx);
                Profile::from_sorted(entries)
            }
            Err(_) => self.clone(),
        }
    }
}

/// A held-out rating predicted during one evaluation trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TestPoint {
    pub user: UserId,
    pub item: ItemId,
    pub rating: u8,
}

/// A forged profile to inject: a fresh user id and its ratings.
pub type NewProfile = (UserId, Vec<(ItemId, u8)>);

/// Sparse user × item star ratings. Immutable once built.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RatingMatrix {
    users: Vec<UserId>,
    profiles: Vec<Profile>,
    items: BTreeSet<ItemId>,
    // offsets[u] = number of ratings held by users before index u
    offsets: Vec<usize>,
}

impl RatingMatrix {
    fn from_map(map: BTreeMap<UserId, BTreeMap<ItemId, u8>>) -> Self {
        let mut users = Vec::with_capacity(map.len());
        let mut profiles = Vec::with_capacity(map.len());
        let mut items = BTreeSet::new();
        let mut offsets = Vec::with_capacity(map.len() + 1);
        offsets.push(0);
        for (user, ratings) in map {
            items.extend(ratings.keys().copied());
            let profile = Profile::from_sorted(ratings.into_iter().collect());
            offsets.push(offsets.last().unwrap() + profile.len());
            users.push(user);
            profiles.push(profile);
        }
        RatingMatrix {
            users,
            profiles,
            items,
            offsets,
        }
    }

    fn to_map(&self) -> BTreeMap<UserId, BTreeMap<ItemId, u8>> {
        self.users
            .iter()
            .zip(&self.profiles)
            .map(|(&u, p)| (u, p.entries.iter().copied().collect()))
            .collect()
    }

    /// Builds a matrix from `(user, item, rating)` triples. Duplicate pairs
    /// are rejected; `line` in the error is the 1-based triple position.
    pub fn from_triples<I>(triples: I) -> Result<Self>
    where
        I: IntoIterator<Item = (UserId, ItemId, u8)>,
    {
        let mut map: BTreeMap<UserId, BTreeMap<ItemId, u8>> = BTreeMap::new();
        for (idx, (user, item, rating)) in triples.into_iter().enumerate() {
            if check_rating(rating as i64).is_none() {
                return Err(Error::InvalidRating {
                    user,
                    item,
                    rating: rating as i64,
                });
            }
            match map.entry(user).or_default().entry(item) {
                Entry::Occupied(_) => {
                    return Err(Error::DuplicateRating {
                        line: idx + 1,
                        user,
                        item,
                    })
                }
                Entry::Vacant(slot) => {
                    slot.insert(rating);
                }
            }
        }
        Ok(Self::from_map(map))
    }

    /// Parses MovieLens `u.data`: `user<TAB>item<TAB>rating<TAB>timestamp`
    /// per line. Timestamps are validated and dropped; blank lines are skipped.
    pub fn parse<R: BufRead>(reader: R) -> Result<Self> {
        let mut map: BTreeMap<UserId, BTreeMap<ItemId, u8>> = BTreeMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected 4 tab-separated fields, found {}", fields.len()),
                });
            }
            let field_err = |name: &str, raw: &str| Error::Parse {
                line: line_no,
                message: format!("invalid {name} {raw:?}"),
            };
            let user: UserId = fields[0].parse().map_err(|_| field_err("user id", fields[0]))?;
            let item: ItemId = fields[1].parse().map_err(|_| field_err("item id", fields[1]))?;
            let raw: i64 = fields[2]
                .trim()
                .parse()
                .map_err(|_| field_err("rating", fields[2]))?;
            fields[3]
                .trim()
                .parse::<u64>()
                .map_err(|_| field_err("timestamp", fields[3]))?;
            let rating = check_rating(raw).ok_or(Error::RatingOutOfRange {
                line: line_no,
                rating: raw,
            })?;
            match map.entry(user).or_default().entry(item) {
                Entry::Occupied(_) => {
                    return Err(Error::DuplicateRating {
                        line: line_no,
                        user,
                        item,
                    })
                }
                Entry::Vacant(slot) => {
                    slot.insert(rating);
                }
            }
        }
        if map.is_empty() {
            return Err(Error::EmptyMatrix);
        }
        Ok(Self::from_map(map))
    }

    /// Writes the matrix back out in `u.data` layout. Timestamps are not
    /// retained, so every line carries `0`.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        for (user, item, rating) in self.iter() {
            writeln!(out, "{user}\t{item}\t{rating}\t0")?;
        }
        Ok(())
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    /// Number of stored ratings.
    pub fn len(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// User ids in ascending order; index positions match [`Self::profile_at`].
    pub fn user_ids(&self) -> &[UserId] {
        &self.users
    }

    pub fn item_ids(&self) -> &BTreeSet<ItemId> {
        &self.items
    }

    pub fn index_of(&self, user: UserId) -> Option<usize> {
        self.users.binary_search(&user).ok()
    }

    pub fn user_at(&self, idx: usize) -> UserId {
        self.users[idx]
    }

    pub fn profile_at(&self, idx: usize) -> &Profile {
        &self.profiles[idx]
    }

    pub fn profile(&self, user: UserId) -> Option<&Profile> {
        self.index_of(user).map(|idx| &self.profiles[idx])
    }

    pub(crate) fn require(&self, user: UserId) -> Result<usize> {
        self.index_of(user).ok_or(Error::UnknownUser(user))
    }

    pub fn rating(&self, user: UserId, item: ItemId) -> Option<u8> {
        self.profile(user).and_then(|p| p.rating(item))
    }

    /// Sum of every stored rating.
    pub fn rating_sum(&self) -> u64 {
        self.profiles.iter().map(Profile::sum).sum()
    }

    pub fn global_mean(&self) -> Option<f64> {
        if self.is_empty() {
            None
        } else {
            Some(self.rating_sum() as f64 / self.len() as f64)
        }
    }

    /// One past the largest user id, a convenient start for forged ids.
    pub fn next_user_id(&self) -> UserId {
        UserId(self.users.last().map_or(1, |u| u.0 + 1))
    }

    /// All `(user, item, rating)` triples, ordered by user then item.
    pub fn iter(&self) -> impl Iterator<Item = (UserId, ItemId, u8)> + '_ {
        self.users
            .iter()
            .zip(&self.profiles)
            .flat_map(|(&u, p)| p.entries.iter().map(move |&(i, r)| (u, i, r)))
    }

    /// The `pos`-th rating in [`Self::iter`] order.
    fn triple_at(&self, pos: usize) -> (UserId, ItemId, u8) {
        let u = self.offsets.partition_point(|&off| off <= pos) - 1;
        let (item, rating) = self.profiles[u].entries[pos - self.offsets[u]];
        (self.users[u], item, rating)
    }

    /// Draws `count` stored ratings uniformly at random, with replacement
    /// across draws. Reproducible from `seed`.
    pub fn holdout_points(&self, count: usize, seed: u64) -> Result<Vec<TestPoint>> {
        if self.is_empty() {
            return Err(Error::EmptyMatrix);
        }
        if count == 0 {
            return Err(Error::param("holdout count must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let total = self.len();
        Ok((0..count)
            .map(|_| {
                let (user, item, rating) = self.triple_at(rng.random_range(0..total));
                TestPoint { user, item, rating }
            })
            .collect())
    }

    /// Returns a new matrix extended with `profiles`; `self` is untouched.
    pub fn inject_profiles(&self, profiles: &[NewProfile]) -> Result<RatingMatrix> {
        let mut map = self.to_map();
        for (user, ratings) in profiles {
            if ratings.is_empty() {
                return Err(Error::Empty("injected profile"));
            }
            let slot = match map.entry(*user) {
                Entry::Occupied(_) => return Err(Error::UserIdCollision(*user)),
                Entry::Vacant(slot) => slot.insert(BTreeMap::new()),
            };
            for (idx, &(item, rating)) in ratings.iter().enumerate() {
                if check_rating(rating as i64).is_none() {
                    return Err(Error::InvalidRating {
                        user: *user,
                        item,
                        rating: rating as i64,
                    });
                }
                if slot.insert(item, rating).is_some() {
                    return Err(Error::DuplicateRating {
                        line: idx + 1,
                        user: *user,
                        item,
                    });
                }
            }
        }
        Ok(Self::from_map(map))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<RatingMatrix> {
        RatingMatrix::parse(s.as_bytes())
    }

    #[test]
    fn single_line() {
        let m = parse("1\t50\t5\t874965758\n").unwrap();
        assert_eq!(m.rating(UserId(1), ItemId(50)), Some(5));
        assert_eq!(m.len(), 1);
        assert_eq!(m.num_users(), 1);
        assert_eq!(m.num_items(), 1);
    }

    #[test]
    fn trailing_newline_optional() {
        let m = parse("1\t50\t5\t0\n2\t50\t3\t0").unwrap();
        assert_eq!(m.len(), 2);
    }

    #[test]
    fn rating_out_of_range_reports_line() {
        match parse("1\t50\t9\t0\n") {
            Err(Error::RatingOutOfRange { line: 1, rating: 9 }) => {}
            other => panic!("unexpected {other:?}"),
        }
        match parse("1\t50\t4\t0\n1\t51\t0\t0\n") {
            Err(Error::RatingOutOfRange { line: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_pair_rejected() {
        match parse("1\t50\t4\t0\n2\t50\t4\t0\n1\t50\t3\t9\n") {
            Err(Error::DuplicateRating { line: 3, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_lines() {
        assert!(matches!(parse("1\t50\t4\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            parse("1\t50\t4\t0\nx\t50\t4\t0\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(parse("1\t50\t4\tnever\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn empty_stream() {
        assert!(matches!(parse(""), Err(Error::EmptyMatrix)));
        assert!(matches!(parse("\n\n"), Err(Error::EmptyMatrix)));
    }

    #[test]
    fn serialize_round_trip() {
        let m = parse("3\t7\t2\t11\n1\t50\t5\t874965758\n1\t2\t1\t3\n").unwrap();
        let mut buf = Vec::new();
        m.write(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap().lines().count(), 3);
        assert_eq!(RatingMatrix::parse(&buf[..]).unwrap(), m);
    }

    #[test]
    fn holdout_forced_outcome() {
        let m = parse("4\t9\t2\t0\n").unwrap();
        let pts = m.holdout_points(3, 17).unwrap();
        let expected = TestPoint {
            user: UserId(4),
            item: ItemId(9),
            rating: 2,
        };
        assert_eq!(pts, vec![expected; 3]);
    }

    #[test]
    fn holdout_errors() {
        assert!(matches!(
            RatingMatrix::default().holdout_points(1, 0),
            Err(Error::EmptyMatrix)
        ));
        let m = parse("4\t9\t2\t0\n").unwrap();
        assert!(m.holdout_points(0, 0).is_err());
    }

    #[test]
    fn holdout_points_exist_in_matrix() {
        let m = parse("1\t1\t1\t0\n1\t2\t2\t0\n2\t1\t3\t0\n3\t5\t4\t0\n3\t6\t5\t0\n").unwrap();
        for p in m.holdout_points(500, 3).unwrap() {
            assert_eq!(m.rating(p.user, p.item), Some(p.rating));
        }
    }

    #[test]
    fn inject_into_empty() {
        let fake = (UserId(10), vec![(ItemId(1), 4), (ItemId(2), 5)]);
        let m = RatingMatrix::default().inject_profiles(&[fake]).unwrap();
        assert_eq!(m.num_users(), 1);
        assert_eq!(m.len(), 2);
    }

    #[test]
    fn inject_collision_and_range() {
        let m = parse("1\t1\t1\t0\n").unwrap();
        assert!(matches!(
            m.inject_profiles(&[(UserId(1), vec![(ItemId(2), 3)])]),
            Err(Error::UserIdCollision(UserId(1)))
        ));
        assert!(matches!(
            m.inject_profiles(&[(UserId(2), vec![(ItemId(2), 6)])]),
            Err(Error::InvalidRating { .. })
        ));
        let twice = vec![(UserId(5), vec![(ItemId(2), 3)]), (UserId(5), vec![(ItemId(3), 3)])];
        assert!(matches!(
            m.inject_profiles(&twice),
            Err(Error::UserIdCollision(UserId(5)))
        ));
    }

    #[test]
    fn inject_leaves_input_untouched() {
        let m = parse("1\t1\t1\t0\n2\t1\t5\t0\n").unwrap();
        let before = m.clone();
        let next = m.next_user_id();
        assert_eq!(next, UserId(3));
        let out = m.inject_profiles(&[(next, vec![(ItemId(1), 2)])]).unwrap();
        assert_eq!(m, before);
        assert_eq!(out.num_users(), 3);
    }

    #[test]
    fn profile_stats() {
        let m = parse("1\t1\t3\t0\n1\t2\t4\t0\n").unwrap();
        let p = m.profile(UserId(1)).unwrap();
        assert_eq!(p.mean(), Some(3.5));
        assert_eq!(p.norm(), 5.0);
        let q = p.without(ItemId(2));
        assert_eq!(q.len(), 1);
        assert_eq!(q.sum_sq(), 9);
        assert_eq!(p.without(ItemId(99)), *p);
    }
}
