//! Switching sequences, constraint assignment, profile types and tie maps.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{constraint_segment_count, segment_count, MAX_ORDER};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CombinatoricsError {
    #[error("chain order {0} is not supported (expected 1..={MAX_ORDER})")]
    UnsupportedOrder(usize),
    #[error("profile `{got}` has length {len}, expected {expected}")]
    ProfileLength {
        got: String,
        len: usize,
        expected: usize,
    },
    #[error("invalid profile character {0:?}")]
    ProfileChar(char),
    #[error("profile {0} cannot be reduced to a consistent set of free switching times")]
    Irreducible(String),
}

/// Sign of the first input phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+1")]
    Positive,
    #[serde(rename = "-1")]
    Negative,
}

impl Sign {
    pub fn value(self) -> i32 {
        match self {
            Sign::Positive => 1,
            Sign::Negative => -1,
        }
    }

    pub fn both() -> [Sign; 2] {
        [Sign::Positive, Sign::Negative]
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Positive => "+1",
            Sign::Negative => "-1",
        })
    }
}

impl FromStr for Sign {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "+1" | "1" | "+" => Ok(Sign::Positive),
            "-1" | "-" => Ok(Sign::Negative),
            other => Err(format!("invalid sign `{other}`")),
        }
    }
}

/// Switching sequence `sigma` and constraint assignment of one chain order.
///
/// `constraint_map[j]` names the bound governing segment `j`: magnitude `n + 1`
/// for the input, `k` in `2..=n` for the bound of state `x_k`; positive entries
/// are upper bounds, negative entries lower bounds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchingPattern {
    pub sigma: Vec<i8>,
    pub constraint_map: Vec<i32>,
    pub sigma0: Sign,
}

impl SwitchingPattern {
    pub fn order(&self) -> usize {
        // N = 2^n - 1
        (self.sigma.len() + 1).trailing_zeros() as usize
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    /// Input value of segment `j` (0-based) under the given input bounds.
    pub fn input(&self, j: usize, u_min: f64, u_max: f64) -> f64 {
        match self.sigma[j] {
            1 => u_max,
            -1 => u_min,
            _ => 0.0,
        }
    }

    /// 1-based indices of the segments that can carry a state constraint.
    pub fn constraint_segments(&self) -> impl Iterator<Item = usize> + '_ {
        self.sigma
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == 0)
            .map(|(j, _)| j + 1)
    }
}

/// Recursive construction `sigma = [sigma, 0, -sigma]`, `B = [B, n-i+1, -B]`.
pub fn switching_sequence(
    order: usize,
    sigma0: Sign,
) -> Result<SwitchingPattern, CombinatoricsError> {
    if order == 0 || order > 8 {
        return Err(CombinatoricsError::UnsupportedOrder(order));
    }
    Ok(build_sequence(order, sigma0))
}

fn build_sequence(order: usize, sigma0: Sign) -> SwitchingPattern {
    let s0 = sigma0.value();
    let mut sigma: Vec<i8> = vec![s0 as i8];
    let mut map: Vec<i32> = vec![order as i32 + 1];
    for i in 1..order {
        let neg_sigma: Vec<i8> = sigma.iter().map(|s| -s).collect();
        sigma.push(0);
        sigma.extend(neg_sigma);
        let neg_map: Vec<i32> = map.iter().map(|b| -b).collect();
        map.push((order - i + 1) as i32);
        map.extend(neg_map);
    }
    for b in &mut map {
        *b *= s0;
    }
    SwitchingPattern {
        sigma,
        constraint_map: map,
        sigma0,
    }
}

/// Which potential state constraints are active, in chronological order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProfileType {
    bits: Vec<bool>,
}

impl ProfileType {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    /// The profile without any active state constraint.
    pub fn unconstrained(order: usize) -> Self {
        Self {
            bits: vec![false; constraint_segment_count(order)],
        }
    }

    pub fn parse(order: usize, text: &str) -> Result<Self, CombinatoricsError> {
        let p: ProfileType = text.parse()?;
        let expected = constraint_segment_count(order);
        if p.bits.len() != expected {
            return Err(CombinatoricsError::ProfileLength {
                got: text.to_string(),
                len: p.bits.len(),
                expected,
            });
        }
        Ok(p)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn active_count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_unconstrained(&self) -> bool {
        self.active_count() == 0
    }
}

impl fmt::Display for ProfileType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.bits {
            f.write_str(if *b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for ProfileType {
    type Err = CombinatoricsError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(CombinatoricsError::ProfileChar(other)),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(|bits| Self { bits })
    }
}

impl Serialize for ProfileType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ProfileType {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// All profile types of an order: ascending number of active constraints,
/// lexicographic within equal counts. The unconstrained type comes first.
pub fn enumerate_profile_types(order: usize) -> Vec<ProfileType> {
    let nx = constraint_segment_count(order);
    let mut all: Vec<Vec<bool>> = (0..1u64 << nx)
        .map(|mask| (0..nx).map(|k| mask >> (nx - 1 - k) & 1 == 1).collect())
        .collect();
    all.sort_by(|a, b| {
        let ca = a.iter().filter(|x| **x).count();
        let cb = b.iter().filter(|x| **x).count();
        ca.cmp(&cb).then_with(|| a.cmp(b))
    });
    all.into_iter().map(ProfileType::new).collect()
}

/// Number of polynomial conditions of a profile: terminal conditions, one bound
/// condition per active constraint and `n - k` contact conditions for each
/// active constraint on `x_k`.
pub fn condition_count(order: usize, profile: &ProfileType) -> usize {
    let pattern = build_sequence(order, Sign::Positive);
    let mut count = order;
    for (seg, active) in pattern.constraint_segments().zip(profile.bits()) {
        if *active {
            let k = pattern.constraint_map[seg - 1].unsigned_abs() as usize;
            count += 1 + (order - k);
        }
    }
    count
}

/// Collapsed switching times of a profile type.
///
/// `ties` maps each vanished time index to the free time it equals (0 stands for
/// `t_0 = 0`); `free` lists the remaining unknowns in chronological order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TieMap {
    pub free: Vec<usize>,
    pub ties: Vec<(usize, usize)>,
}

impl TieMap {
    /// Predecessor of `index`, or `None` when it is free.
    pub fn tied_to(&self, index: usize) -> Option<usize> {
        self.ties.iter().find(|(k, _)| *k == index).map(|(_, p)| *p)
    }
}

/// Derives which switching times vanish for a profile type.
///
/// Phases are assembled over the recursive `[A, 0, -A]` blocks. An inactive
/// zero segment vanishes; when its neighbouring bang phases share a sign they
/// merge and the later one vanishes too. If more unknowns remain than there are
/// conditions, the pair of bang phases around the highest-level inactive
/// junction vanishes until the counts agree.
pub fn tie_map(order: usize, profile: &ProfileType) -> Result<TieMap, CombinatoricsError> {
    if order == 0 || order > 8 {
        return Err(CombinatoricsError::UnsupportedOrder(order));
    }
    let expected = constraint_segment_count(order);
    if profile.bits().len() != expected {
        return Err(CombinatoricsError::ProfileLength {
            got: profile.to_string(),
            len: profile.bits().len(),
            expected,
        });
    }
    let pattern = build_sequence(order, Sign::Positive);
    let n_seg = segment_count(order);
    let mut active = vec![false; n_seg + 1];
    for (seg, a) in pattern.constraint_segments().zip(profile.bits()) {
        active[seg] = *a;
    }

    struct Walk<'a> {
        sigma: &'a [i8],
        active: &'a [bool],
        junctions: Vec<(usize, usize)>,
    }

    impl Walk<'_> {
        fn phases(&mut self, lo: usize, hi: usize, level: usize) -> Vec<usize> {
            if level == 1 {
                return vec![lo];
            }
            let mid = (lo + hi) / 2;
            let mut left = self.phases(lo, mid - 1, level - 1);
            let mut right = self.phases(mid + 1, hi, level - 1);
            if self.active[mid] {
                left.push(mid);
                left.append(&mut right);
                return left;
            }
            self.junctions.push((level, mid));
            let last = self.sigma[*left.last().unwrap() - 1];
            let first = self.sigma[right[0] - 1];
            if last != 0 && last == first {
                right.remove(0);
            }
            left.append(&mut right);
            left
        }
    }

    let mut walk = Walk {
        sigma: &pattern.sigma,
        active: &active,
        junctions: Vec::new(),
    };
    let mut kept = walk.phases(1, n_seg, order);
    let mut junctions = walk.junctions;
    junctions.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));

    let need = condition_count(order, profile);
    while kept.len() > need {
        let pair = junctions.iter().find_map(|&(_, mid)| {
            let before = kept.iter().rposition(|&k| k < mid)?;
            let after = kept.iter().position(|&k| k > mid)?;
            let bang = |k: usize| pattern.sigma[kept[k] - 1] != 0;
            (bang(before) && bang(after)).then_some((before, after))
        });
        match pair {
            Some((before, after)) => {
                kept.remove(after);
                kept.remove(before);
            }
            None => return Err(CombinatoricsError::Irreducible(profile.to_string())),
        }
    }
    if kept.len() != need {
        return Err(CombinatoricsError::Irreducible(profile.to_string()));
    }

    let ties = (1..=n_seg)
        .filter(|k| !kept.contains(k))
        .map(|k| {
            let pred = kept.iter().copied().filter(|&f| f < k).max().unwrap_or(0);
            (k, pred)
        })
        .collect();
    Ok(TieMap { free: kept, ties })
}

/// Checks that a tie map partitions `1..=N` and leaves as many unknowns as
/// there are conditions.
pub fn constraint_count_ok(order: usize, profile: &ProfileType, map: &TieMap) -> bool {
    let n_seg = segment_count(order);
    let mut seen = vec![false; n_seg + 1];
    for &k in map.free.iter().chain(map.ties.iter().map(|(k, _)| k)) {
        if k == 0 || k > n_seg || seen[k] {
            return false;
        }
        seen[k] = true;
    }
    let ties_ok = map
        .ties
        .iter()
        .all(|&(k, p)| p < k && (p == 0 || map.free.contains(&p)));
    seen[1..].iter().all(|s| *s) && ties_ok && map.free.len() == condition_count(order, profile)
}
