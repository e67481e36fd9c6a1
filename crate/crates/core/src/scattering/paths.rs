use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// One scattering channel: the sequence of `(scale, angle)` choices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PathIndex {
    Order0,
    Order1 {
        j1: u32,
        l1: usize,
    },
    Order2 {
        j1: u32,
        l1: usize,
        j2: u32,
        l2: usize,
    },
}

impl PathIndex {
    pub fn order(&self) -> u8 {
        match self {
            PathIndex::Order0 => 0,
            PathIndex::Order1 { .. } => 1,
            PathIndex::Order2 { .. } => 2,
        }
    }

    /// `[order, j1, l1, j2, l2]` with `-1` in unused slots.
    pub fn to_row(&self) -> [i64; 5] {
        match *self {
            PathIndex::Order0 => [0, -1, -1, -1, -1],
            PathIndex::Order1 { j1, l1 } => [1, j1 as i64, l1 as i64, -1, -1],
            PathIndex::Order2 { j1, l1, j2, l2 } => [2, j1 as i64, l1 as i64, j2 as i64, l2 as i64],
        }
    }

    pub fn from_row(row: [i64; 5]) -> Result<Self> {
        let u = |v: i64| -> Result<usize> {
            usize::try_from(v).map_err(|_| invalid(format!("bad path row {row:?}")))
        };
        match row[0] {
            0 => Ok(PathIndex::Order0),
            1 => Ok(PathIndex::Order1 {
                j1: u(row[1])? as u32,
                l1: u(row[2])?,
            }),
            2 => {
                let (j1, j2) = (u(row[1])? as u32, u(row[3])? as u32);
                if j1 >= j2 {
                    return Err(invalid(format!("order-2 path needs j1 < j2, got {row:?}")));
                }
                Ok(PathIndex::Order2 {
                    j1,
                    l1: u(row[2])?,
                    j2,
                    l2: u(row[4])?,
                })
            }
            _ => Err(invalid(format!("bad path order in {row:?}"))),
        }
    }
}

/// `1 + J·L + J(J-1)L²/2`.
pub fn path_count(j: u32, l: usize) -> usize {
    let j = j as usize;
    1 + j * l + j * j.saturating_sub(1) / 2 * l * l
}

/// Canonical channel order: order 0, then order 1 by `(j1, l1)`, then order 2
/// by `(j1, l1, j2, l2)` with `j1 < j2`.
pub fn path_table(j: u32, l: usize) -> Vec<PathIndex> {
    let mut paths = Vec::with_capacity(path_count(j, l));
    paths.push(PathIndex::Order0);
    for j1 in 0..j {
        for l1 in 0..l {
            paths.push(PathIndex::Order1 { j1, l1 });
        }
    }
    for j1 in 0..j {
        for l1 in 0..l {
            for j2 in j1 + 1..j {
                for l2 in 0..l {
                    paths.push(PathIndex::Order2 { j1, l1, j2, l2 });
                }
            }
        }
    }
    paths
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_counts() {
        assert_eq!(path_table(2, 8).len(), 81);
        assert_eq!(3 * path_table(2, 8).len(), 243);
        assert_eq!(3 * path_table(3, 8).len(), 651);
        assert_eq!(3 * path_table(4, 8).len(), 1251);
        for (j, l) in [(1, 1), (1, 6), (3, 4), (5, 2)] {
            assert_eq!(path_table(j, l).len(), path_count(j, l));
        }
    }

    #[test]
    fn single_scale_has_no_second_order() {
        assert!(path_table(1, 8).iter().all(|p| p.order() < 2));
    }

    #[test]
    fn ordering_is_sorted_within_orders() {
        let t = path_table(3, 4);
        assert!(t.windows(2).all(|w| w[0] < w[1]));
        for p in &t {
            assert_eq!(PathIndex::from_row(p.to_row()).unwrap(), *p);
        }
        assert!(PathIndex::from_row([2, 1, 0, 1, 0]).is_err());
    }
}
